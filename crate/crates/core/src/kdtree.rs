//! Exact nearest-neighbor index: kd-tree for the Minkowski metric family,
//! transparent exhaustive fallback for the rest.
//!
//! Query results are guaranteed identical to a brute-force scan under the
//! tie rule "smallest reference id wins"; pruning only discards a subtree
//! when its bounding box is strictly farther than the current best.

use crate::error::{Error, Result};
use crate::metrics::Metric;

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    kind: NodeKind,
}

#[derive(Debug)]
enum NodeKind {
    /// Reference ids, kept sorted ascending for the tie rule.
    Leaf(Vec<usize>),
    Split(Box<Node>, Box<Node>),
}

/// Immutable nearest-neighbor index over a set of reference vectors.
#[derive(Debug)]
pub struct NeighborIndex {
    refs: Vec<Vec<f64>>,
    metric: Metric,
    tree: Option<Node>,
    dim: usize,
}

fn bounding_box(refs: &[Vec<f64>], ids: &[usize], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &i in ids {
        for d in 0..dim {
            lo[d] = lo[d].min(refs[i][d]);
            hi[d] = hi[d].max(refs[i][d]);
        }
    }
    (lo, hi)
}

fn build_node(refs: &[Vec<f64>], mut ids: Vec<usize>, dim: usize) -> Node {
    let (lo, hi) = bounding_box(refs, &ids, dim);
    if ids.len() <= LEAF_SIZE {
        ids.sort_unstable();
        return Node {
            lo,
            hi,
            kind: NodeKind::Leaf(ids),
        };
    }
    // Median split on the widest-spread dimension.
    let split_dim = (0..dim)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    if hi[split_dim] - lo[split_dim] == 0.0 {
        // All points identical; no useful split.
        ids.sort_unstable();
        return Node {
            lo,
            hi,
            kind: NodeKind::Leaf(ids),
        };
    }
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |&a, &b| {
        refs[a][split_dim]
            .total_cmp(&refs[b][split_dim])
            .then(a.cmp(&b))
    });
    let right_ids = ids.split_off(mid);
    let left = build_node(refs, ids, dim);
    let right = build_node(refs, right_ids, dim);
    Node {
        lo,
        hi,
        kind: NodeKind::Split(Box::new(left), Box::new(right)),
    }
}

struct Best {
    dist: f64,
    id: usize,
}

impl NeighborIndex {
    /// Builds the index over nonempty, uniform-length reference vectors.
    pub fn build(refs: Vec<Vec<f64>>, metric: Metric) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::InvalidConfig("empty reference set".into()));
        }
        let dim = refs[0].len();
        if dim == 0 || refs.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: refs.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(0),
            });
        }
        let tree = if metric.kdtree_compatible() {
            Some(build_node(&refs, (0..refs.len()).collect(), dim))
        } else {
            None
        };
        Ok(NeighborIndex {
            refs,
            metric,
            tree,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    /// True when queries go through the kd-tree rather than the exhaustive
    /// fallback.
    pub fn accelerated(&self) -> bool {
        self.tree.is_some()
    }

    /// Nearest reference to `q`: `(ref id, distance)`, ties broken by the
    /// smallest id. Metric-undefined queries propagate the error.
    pub fn nearest(&self, q: &[f64]) -> Result<(usize, f64)> {
        self.nearest_counted(q, &mut 0)
    }

    /// Like [`Self::nearest`], also counting visited leaf candidates
    /// (used to verify pruning soundness).
    pub fn nearest_counted(&self, q: &[f64], visited: &mut usize) -> Result<(usize, f64)> {
        if q.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.len(),
            });
        }
        match &self.tree {
            None => self.scan_all(q, visited),
            Some(root) => {
                let mut best = Best {
                    dist: f64::INFINITY,
                    id: usize::MAX,
                };
                self.search(root, q, &mut best, visited);
                Ok((best.id, best.dist))
            }
        }
    }

    fn scan_all(&self, q: &[f64], visited: &mut usize) -> Result<(usize, f64)> {
        let mut best: Option<Best> = None;
        let mut err = None;
        for (i, r) in self.refs.iter().enumerate() {
            *visited += 1;
            match self.metric.distance(r, q) {
                Ok(d) => {
                    let better = match &best {
                        None => true,
                        Some(b) => d < b.dist,
                    };
                    if better {
                        best = Some(Best { dist: d, id: i });
                    }
                }
                Err(e) => err = Some(e),
            }
        }
        match best {
            Some(b) => Ok((b.id, b.dist)),
            // Every reference was undefined against q.
            None => Err(err.unwrap()),
        }
    }

    fn search(&self, node: &Node, q: &[f64], best: &mut Best, visited: &mut usize) {
        match &node.kind {
            NodeKind::Leaf(ids) => {
                for &i in ids {
                    *visited += 1;
                    // Minkowski-family distances are always defined.
                    let d = self.metric.distance(&self.refs[i], q).unwrap();
                    if d < best.dist || (d == best.dist && i < best.id) {
                        best.dist = d;
                        best.id = i;
                    }
                }
            }
            NodeKind::Split(left, right) => {
                // Visit the child whose box is closer first; prune only when
                // the bound is strictly worse than the incumbent so that
                // equal-distance candidates with smaller ids stay reachable.
                let children = [left.as_ref(), right.as_ref()];
                let bounds = [
                    self.metric.box_min_distance(q, &children[0].lo, &children[0].hi),
                    self.metric.box_min_distance(q, &children[1].lo, &children[1].hi),
                ];
                let order = if bounds[0] <= bounds[1] { [0, 1] } else { [1, 0] };
                for &ci in &order {
                    if bounds[ci] > best.dist {
                        continue;
                    }
                    self.search(children[ci], q, best, visited);
                }
            }
        }
    }
}

/// Brute-force nearest neighbor with the same tie rule; the oracle the tree
/// is checked against.
pub fn brute_force_nearest(refs: &[Vec<f64>], q: &[f64], metric: Metric) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut err = None;
    for (i, r) in refs.iter().enumerate() {
        match metric.distance(r, q) {
            Ok(d) => {
                let better = match best {
                    None => true,
                    Some((_, bd)) => d < bd,
                };
                if better {
                    best = Some((i, d));
                }
            }
            Err(e) => err = Some(e),
        }
    }
    best.ok_or_else(|| err.unwrap_or(Error::InvalidConfig("empty reference set".into())))
}
