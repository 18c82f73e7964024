//! Exemplar-selection strategies: random, equally distributed (grid),
//! error-dependent (highest/lowest), and similarity-aware over a
//! nearest-neighbor index.
//!
//! Every strategy draws exclusively from the static-region candidate pool
//! and returns exactly `N` unique sample ids; ties break on the smallest id.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::Position;
use crate::error::{Error, Result};
use crate::kdtree::NeighborIndex;
use crate::metrics::Metric;
use crate::nn::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    EquallyDistributed,
    ErrorHighest,
    ErrorLowest,
    Similarity,
}

impl Strategy {
    pub fn parse(name: &str) -> Result<Strategy> {
        Ok(match name {
            "random" | "rd" => Strategy::Random,
            "equally_distributed" | "ed" => Strategy::EquallyDistributed,
            "error_highest" => Strategy::ErrorHighest,
            "error_lowest" => Strategy::ErrorLowest,
            "similarity" => Strategy::Similarity,
            other => return Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::EquallyDistributed => "equally_distributed",
            Strategy::ErrorHighest => "error_highest",
            Strategy::ErrorLowest => "error_lowest",
            Strategy::Similarity => "similarity",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub n: usize,
    /// Required iff `strategy == Similarity`.
    pub metric: Option<Metric>,
    pub seed: u64,
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        match (self.strategy, &self.metric) {
            (Strategy::Similarity, None) => Err(Error::InvalidConfig(
                "similarity strategy requires a metric".into(),
            )),
            (s, Some(_)) if s != Strategy::Similarity => Err(Error::InvalidConfig(
                "metric only applies to the similarity strategy".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// The selected exemplars plus provenance for the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub ids: Vec<u64>,
    /// Per-selected-sample score (position error or min-distance);
    /// absent for random / equally distributed.
    pub scores: Option<Vec<f64>>,
    pub strategy: String,
    pub metric: Option<String>,
    pub seed: u64,
    /// Pool samples skipped because the metric was undefined on them.
    pub excluded: usize,
}

impl ExemplarSet {
    fn bare(ids: Vec<u64>, strategy: Strategy, seed: u64) -> Self {
        ExemplarSet {
            ids,
            scores: None,
            strategy: strategy.name().into(),
            metric: None,
            seed,
            excluded: 0,
        }
    }
}

/// Per-sample 2D position error of a model, `e = ‖p̂ − p‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub id: u64,
    pub error: f64,
}

fn check_pool(n: usize, pool: usize) -> Result<()> {
    if n > pool {
        return Err(Error::PoolTooSmall {
            requested: n,
            available: pool,
        });
    }
    Ok(())
}

/// N distinct ids sampled uniformly without replacement, seeded.
pub fn select_random(pool_ids: &[u64], n: usize, seed: u64) -> Result<ExemplarSet> {
    check_pool(n, pool_ids.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..pool_ids.len()).collect();
    // Partial Fisher-Yates: the first n slots are the draw.
    for i in 0..n {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    let ids = idx[..n].iter().map(|&i| pool_ids[i]).collect();
    Ok(ExemplarSet::bare(ids, Strategy::Random, seed))
}

/// Grid-based spatial spread: the pool bounding box is divided into
/// ⌈√N⌉×⌈√N⌉ cells; each cell center (row-major) grabs the nearest
/// still-unselected sample until N are taken. Any deficit is filled by
/// seeded random draws from the remainder.
pub fn select_equally_distributed(
    pool_ids: &[u64],
    positions: &[Position],
    n: usize,
    seed: u64,
) -> Result<ExemplarSet> {
    assert_eq!(pool_ids.len(), positions.len());
    check_pool(n, pool_ids.len())?;
    if n == 0 {
        return Ok(ExemplarSet::bare(vec![], Strategy::EquallyDistributed, seed));
    }
    let min_x = positions.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let max_x = positions.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = positions.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = positions.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let g = (n as f64).sqrt().ceil() as usize;
    let cell_w = (max_x - min_x) / g as f64;
    let cell_h = (max_y - min_y) / g as f64;
    let mut taken = vec![false; pool_ids.len()];
    let mut selected = Vec::with_capacity(n);
    'cells: for row in 0..g {
        for col in 0..g {
            if selected.len() == n {
                break 'cells;
            }
            let center = Position::new(
                min_x + (col as f64 + 0.5) * cell_w,
                min_y + (row as f64 + 0.5) * cell_h,
            );
            let mut best: Option<(f64, usize)> = None;
            for (i, p) in positions.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let d = p.dist(&center);
                let better = match best {
                    None => true,
                    Some((bd, bi)) => d < bd || (d == bd && pool_ids[i] < pool_ids[bi]),
                };
                if better {
                    best = Some((d, i));
                }
            }
            if let Some((_, i)) = best {
                taken[i] = true;
                selected.push(i);
            }
        }
    }
    // Deficit fill (only reachable if the grid ran out of cells).
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while selected.len() < n {
        let remaining: Vec<usize> = (0..pool_ids.len()).filter(|&i| !taken[i]).collect();
        let i = remaining[rng.gen_range(0..remaining.len())];
        taken[i] = true;
        selected.push(i);
    }
    let ids = selected.iter().map(|&i| pool_ids[i]).collect();
    Ok(ExemplarSet::bare(ids, Strategy::EquallyDistributed, seed))
}

/// Position errors of `model` over a candidate pool (features + reference
/// positions). The model is the pre-adaptation checkpoint.
pub fn compute_errors(
    model: &Mlp,
    ids: &[u64],
    features: &[Vec<f64>],
    positions: &[Position],
) -> Result<Vec<ErrorRecord>> {
    assert_eq!(ids.len(), features.len());
    assert_eq!(ids.len(), positions.len());
    let mut out = Vec::with_capacity(ids.len());
    for ((&id, x), p) in ids.iter().zip(features).zip(positions) {
        let pred = model.forward(x)?;
        let e = ((pred[0] - p.x).powi(2) + (pred[1] - p.y).powi(2)).sqrt();
        out.push(ErrorRecord { id, error: e });
    }
    Ok(out)
}

/// Top-N by descending (highest) or ascending (lowest) error; ties on the
/// smaller id.
pub fn select_by_error(records: &[ErrorRecord], n: usize, highest: bool) -> Result<ExemplarSet> {
    check_pool(n, records.len())?;
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        let cmp = if highest {
            rb.error.total_cmp(&ra.error)
        } else {
            ra.error.total_cmp(&rb.error)
        };
        cmp.then(ra.id.cmp(&rb.id))
    });
    let picked = &order[..n];
    Ok(ExemplarSet {
        ids: picked.iter().map(|&i| records[i].id).collect(),
        scores: Some(picked.iter().map(|&i| records[i].error).collect()),
        strategy: if highest {
            Strategy::ErrorHighest.name().into()
        } else {
            Strategy::ErrorLowest.name().into()
        },
        metric: None,
        seed: 0,
        excluded: 0,
    })
}

/// Similarity-aware selection: score(u) = min over previous-domain samples z
/// of d(prev_z, pool_u); the N smallest scores (highest similarity) win.
/// Pool samples on which the metric is undefined are excluded and counted.
pub fn select_by_similarity(
    prev_features: &[Vec<f64>],
    pool_ids: &[u64],
    pool_features: &[Vec<f64>],
    metric: Metric,
    n: usize,
) -> Result<ExemplarSet> {
    assert_eq!(pool_ids.len(), pool_features.len());
    check_pool(n, pool_ids.len())?;
    if prev_features.is_empty() {
        return Err(Error::InvalidConfig("empty previous-domain set".into()));
    }
    let index = NeighborIndex::build(prev_features.to_vec(), metric)?;
    let mut scored: Vec<(u64, f64)> = Vec::with_capacity(pool_ids.len());
    let mut excluded = 0usize;
    for (&id, x) in pool_ids.iter().zip(pool_features) {
        match index.nearest(x) {
            Ok((_, d)) => scored.push((id, d)),
            Err(Error::MetricUndefined(_)) => excluded += 1,
            Err(e) => return Err(e),
        }
    }
    check_pool(n, scored.len())?;
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let picked = &scored[..n];
    Ok(ExemplarSet {
        ids: picked.iter().map(|&(id, _)| id).collect(),
        scores: Some(picked.iter().map(|&(_, d)| d).collect()),
        strategy: Strategy::Similarity.name().into(),
        metric: Some(metric.name()),
        seed: 0,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ALL_METRICS;
    use rand::Rng;

    #[test]
    fn random_edge_cases() {
        let ids: Vec<u64> = (0..10).collect();
        let all = select_random(&ids, 10, 1).unwrap();
        let mut sorted = all.ids.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, ids);
        assert!(select_random(&ids, 0, 1).unwrap().ids.is_empty());
        assert_eq!(select_random(&ids, 4, 7).unwrap().ids, select_random(&ids, 4, 7).unwrap().ids);
        assert!(matches!(
            select_random(&ids, 11, 1),
            Err(Error::PoolTooSmall { .. })
        ));
    }

    #[test]
    fn ed_unit_square_corners() {
        let ids = vec![0, 1, 2, 3];
        let pos = vec![
            Position::new(0.0, 0.0),
            Position::new(1.0, 0.0),
            Position::new(0.0, 1.0),
            Position::new(1.0, 1.0),
        ];
        let set = select_equally_distributed(&ids, &pos, 4, 0).unwrap();
        let mut got = set.ids.clone();
        got.sort_unstable();
        assert_eq!(got, ids);
    }

    #[test]
    fn ed_single_cell_takes_center_nearest() {
        let ids = vec![0, 1, 2];
        let pos = vec![
            Position::new(0.0, 0.0),
            Position::new(0.6, 0.5), // nearest to the box center (0.5, 0.5)
            Position::new(1.0, 1.0),
        ];
        let set = select_equally_distributed(&ids, &pos, 1, 0).unwrap();
        assert_eq!(set.ids, vec![1]);
    }

    /// Mean nearest-neighbor spacing of the selected positions.
    fn nn_spacing(pos: &[Position]) -> f64 {
        let mut acc = 0.0;
        for (i, p) in pos.iter().enumerate() {
            let d = pos
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| p.dist(q))
                .fold(f64::INFINITY, f64::min);
            acc += d;
        }
        acc / pos.len() as f64
    }

    #[test]
    fn ed_spreads_better_than_random_on_clustered_pool() {
        let mut wins = 0;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Clustered pool: three blobs.
            let mut ids = Vec::new();
            let mut pos = Vec::new();
            for (cx, cy) in [(2.5, 2.5), (7.5, 3.0), (5.0, 7.5)] {
                for _ in 0..200 {
                    ids.push(ids.len() as u64);
                    pos.push(Position::new(
                        cx + rng.gen_range(-2.5..2.5),
                        cy + rng.gen_range(-2.5..2.5),
                    ));
                }
            }
            let ed = select_equally_distributed(&ids, &pos, 50, seed).unwrap();
            let rd = select_random(&ids, 50, seed).unwrap();
            let by_id = |set: &ExemplarSet| -> Vec<Position> {
                set.ids.iter().map(|&id| pos[id as usize]).collect()
            };
            if nn_spacing(&by_id(&ed)) >= nn_spacing(&by_id(&rd)) {
                wins += 1;
            }
        }
        assert!(wins >= 4, "ED spacing beat RD in only {wins}/5 seeds");
    }

    #[test]
    fn error_records_constant_model() {
        // Zero model predicts (0,0): error equals distance to origin.
        let model = Mlp::from_params(&[2, 2], &vec![0.0; 6]).unwrap();
        let ids = vec![5, 6];
        let feats = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
        let pos = vec![Position::new(3.0, 4.0), Position::new(0.0, 2.0)];
        let recs = compute_errors(&model, &ids, &feats, &pos).unwrap();
        assert!((recs[0].error - 5.0).abs() < 1e-12);
        assert!((recs[1].error - 2.0).abs() < 1e-12);
    }

    #[test]
    fn error_selection_tie_and_order() {
        let equal: Vec<ErrorRecord> = (0..6).map(|id| ErrorRecord { id, error: 1.0 }).collect();
        assert_eq!(select_by_error(&equal, 3, true).unwrap().ids, vec![0, 1, 2]);
        let byid: Vec<ErrorRecord> = (0..6)
            .map(|id| ErrorRecord {
                id,
                error: id as f64,
            })
            .collect();
        assert_eq!(select_by_error(&byid, 3, true).unwrap().ids, vec![5, 4, 3]);
        assert_eq!(select_by_error(&byid, 3, false).unwrap().ids, vec![0, 1, 2]);
    }

    #[test]
    fn error_selection_matches_full_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let recs: Vec<ErrorRecord> = (0..300)
            .map(|id| ErrorRecord {
                id,
                error: rng.gen_range(0.0..5.0),
            })
            .collect();
        for highest in [true, false] {
            let got = select_by_error(&recs, 40, highest).unwrap();
            let mut oracle = recs.clone();
            oracle.sort_by(|a, b| {
                let c = if highest {
                    b.error.total_cmp(&a.error)
                } else {
                    a.error.total_cmp(&b.error)
                };
                c.then(a.id.cmp(&b.id))
            });
            let want: Vec<u64> = oracle[..40].iter().map(|r| r.id).collect();
            assert_eq!(got.ids, want);
        }
    }

    #[test]
    fn highest_and_lowest_complementary_at_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut recs: Vec<ErrorRecord> = Vec::new();
        let mut used = std::collections::HashSet::new();
        for id in 0..100 {
            // distinct errors
            loop {
                let e: f64 = rng.gen_range(0.0..10.0);
                if used.insert(e.to_bits()) {
                    recs.push(ErrorRecord { id, error: e });
                    break;
                }
            }
        }
        let hi = select_by_error(&recs, 50, true).unwrap();
        let lo = select_by_error(&recs, 50, false).unwrap();
        let mut all: Vec<u64> = hi.ids.iter().chain(&lo.ids).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn similarity_worked_example() {
        let prev = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let pool_ids = vec![10, 11, 12];
        let pool = vec![vec![0.1, 0.0], vec![5.0, 5.0], vec![1.0, 1.2]];
        let set =
            select_by_similarity(&prev, &pool_ids, &pool, Metric::Chebyshev, 2).unwrap();
        assert_eq!(set.ids, vec![10, 12]);
        let s = set.scores.unwrap();
        assert!((s[0] - 0.1).abs() < 1e-12 && (s[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn similarity_identical_pool_takes_first_ids() {
        let prev = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let pool_ids = vec![0, 1, 2, 3];
        let pool = vec![
            vec![1.0, 2.0],
            vec![3.0, 4.0],
            vec![1.0, 2.0],
            vec![3.0, 4.0],
        ];
        let set = select_by_similarity(&prev, &pool_ids, &pool, Metric::Euclidean, 2).unwrap();
        assert_eq!(set.ids, vec![0, 1]);
    }

    #[test]
    fn similarity_matches_double_loop_oracle_all_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let prev: Vec<Vec<f64>> = (0..120)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let pool_ids: Vec<u64> = (0..150).collect();
        let pool: Vec<Vec<f64>> = (0..150)
            .map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        for metric in ALL_METRICS {
            let got = select_by_similarity(&prev, &pool_ids, &pool, metric, 30).unwrap();
            // Exhaustive double loop.
            let mut scored: Vec<(u64, f64)> = pool_ids
                .iter()
                .zip(&pool)
                .filter_map(|(&id, u)| {
                    let best = prev
                        .iter()
                        .filter_map(|z| metric.distance(z, u).ok())
                        .fold(f64::INFINITY, f64::min);
                    best.is_finite().then_some((id, best))
                })
                .collect();
            scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let want: Vec<u64> = scored[..30].iter().map(|&(id, _)| id).collect();
            assert_eq!(got.ids, want, "{}", metric.name());
        }
    }

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
}
