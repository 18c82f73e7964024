//! Pairwise distance metrics for similarity-aware sampling.
//!
//! The Minkowski family (euclidean, manhattan, chebyshev, minkowski(p)) is
//! kd-tree compatible; the remaining metrics (cosine, canberra, bray-curtis,
//! correlation) fall back to an exhaustive scan in [`crate::kdtree`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Manhattan,
    Chebyshev,
    Minkowski { p: f64 },
    Cosine,
    Canberra,
    BrayCurtis,
    Correlation,
}

/// All eight metrics with the default Minkowski exponent p = 3.
pub const ALL_METRICS: [Metric; 8] = [
    Metric::Euclidean,
    Metric::Manhattan,
    Metric::Chebyshev,
    Metric::Minkowski { p: 3.0 },
    Metric::Cosine,
    Metric::Canberra,
    Metric::BrayCurtis,
    Metric::Correlation,
];

impl Metric {
    pub fn parse(name: &str) -> Result<Metric> {
        Ok(match name {
            "euclidean" => Metric::Euclidean,
            "manhattan" => Metric::Manhattan,
            "chebyshev" => Metric::Chebyshev,
            "minkowski" => Metric::Minkowski { p: 3.0 },
            "cosine" => Metric::Cosine,
            "canberra" => Metric::Canberra,
            "braycurtis" => Metric::BrayCurtis,
            "correlation" => Metric::Correlation,
            other => {
                if let Some(p) = other.strip_prefix("minkowski:") {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad minkowski p in {other:?}")))?;
                    if p < 1.0 {
                        return Err(Error::InvalidConfig("minkowski p must be >= 1".into()));
                    }
                    Metric::Minkowski { p }
                } else {
                    return Err(Error::InvalidConfig(format!("unknown metric {other:?}")));
                }
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            Metric::Euclidean => "euclidean".into(),
            Metric::Manhattan => "manhattan".into(),
            Metric::Chebyshev => "chebyshev".into(),
            Metric::Minkowski { p } => format!("minkowski:{p}"),
            Metric::Cosine => "cosine".into(),
            Metric::Canberra => "canberra".into(),
            Metric::BrayCurtis => "braycurtis".into(),
            Metric::Correlation => "correlation".into(),
        }
    }

    /// Standard kd-tree pruning is only sound for the Minkowski family.
    pub fn kdtree_compatible(&self) -> bool {
        matches!(
            self,
            Metric::Euclidean | Metric::Manhattan | Metric::Chebyshev | Metric::Minkowski { .. }
        )
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                got: b.len(),
            });
        }
        match self {
            Metric::Euclidean => Ok(a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()),
            Metric::Manhattan => Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()),
            Metric::Chebyshev => Ok(a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)),
            Metric::Minkowski { p } => {
                if *p < 1.0 {
                    return Err(Error::InvalidConfig("minkowski p must be >= 1".into()));
                }
                Ok(a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).abs().powf(*p))
                    .sum::<f64>()
                    .powf(1.0 / p))
            }
            Metric::Cosine => {
                let (dot, na, nb) = dot_norms(a, b);
                if na == 0.0 || nb == 0.0 {
                    return Err(Error::MetricUndefined("cosine distance with a zero vector"));
                }
                Ok(1.0 - dot / (na * nb))
            }
            Metric::Canberra => Ok(a
                .iter()
                .zip(b)
                .map(|(x, y)| {
                    let den = x.abs() + y.abs();
                    // 0/0 terms contribute 0
                    if den == 0.0 {
                        0.0
                    } else {
                        (x - y).abs() / den
                    }
                })
                .sum()),
            Metric::BrayCurtis => {
                let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
                let den: f64 = a.iter().zip(b).map(|(x, y)| (x + y).abs()).sum();
                if den == 0.0 {
                    return Err(Error::MetricUndefined("bray-curtis with zero denominator"));
                }
                Ok(num / den)
            }
            Metric::Correlation => {
                // Cosine distance of mean-centered vectors.
                let ma = a.iter().sum::<f64>() / a.len() as f64;
                let mb = b.iter().sum::<f64>() / b.len() as f64;
                let mut dot = 0.0;
                let mut na = 0.0;
                let mut nb = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let xc = x - ma;
                    let yc = y - mb;
                    dot += xc * yc;
                    na += xc * xc;
                    nb += yc * yc;
                }
                if na == 0.0 || nb == 0.0 {
                    return Err(Error::MetricUndefined(
                        "correlation distance with a constant vector",
                    ));
                }
                Ok(1.0 - dot / (na.sqrt() * nb.sqrt()))
            }
        }
    }

    /// Minimum possible distance from `q` to any point inside the axis-aligned
    /// box `[lo, hi]`. Used for kd-tree pruning; only defined for the
    /// Minkowski family.
    pub(crate) fn box_min_distance(&self, q: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
        debug_assert!(self.kdtree_compatible());
        let gaps = q.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| {
            if x < l {
                l - x
            } else if x > h {
                x - h
            } else {
                0.0
            }
        });
        match self {
            Metric::Euclidean => gaps.map(|g| g * g).sum::<f64>().sqrt(),
            Metric::Manhattan => gaps.sum(),
            Metric::Chebyshev => gaps.fold(0.0, f64::max),
            Metric::Minkowski { p } => gaps.map(|g| g.powf(*p)).sum::<f64>().powf(1.0 / p),
            _ => unreachable!(),
        }
    }
}

fn dot_norms(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot, na.sqrt(), nb.sqrt())
}
