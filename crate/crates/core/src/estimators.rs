//! Baseline cluster-number estimators: the square-root thumb rule and the
//! elbow sweep over independently trained fixed-K runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::rl::train_fixed_k;
use crate::scalar::Real;

/// `round(sqrt(n / 2))`, never below 2.
pub fn thumb_rule(n: usize) -> usize {
    ((n as f64 / 2.0).sqrt().round() as usize).max(2)
}

/// Curvature below this fraction of the WSS range counts as no elbow.
pub const FLATNESS_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Knee {
    pub k: usize,
    /// False when the curve has no pronounced bend.
    pub distinct: bool,
}

/// Picks the `k` with the largest discrete second difference
/// `w[i−1] − 2 w[i] + w[i+1]` (earliest on ties). Two-point curves have no
/// interior and report their first `k` as not distinct.
pub fn detect_knee(ks: &[usize], wss: &[f64]) -> Result<Knee> {
    if ks.len() != wss.len() || ks.len() < 2 {
        return Err(Error::Argument(format!(
            "need matching curves of length >= 2, got {} ks and {} values",
            ks.len(),
            wss.len()
        )));
    }
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("ks must be strictly increasing".into()));
    }
    if wss.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "detect_knee" });
    }
    if ks.len() == 2 {
        return Ok(Knee {
            k: ks[0],
            distinct: false,
        });
    }
    let mut best = (1, f64::NEG_INFINITY);
    for i in 1..wss.len() - 1 {
        let d2 = wss[i - 1] - 2.0 * wss[i] + wss[i + 1];
        if d2 > best.1 {
            best = (i, d2);
        }
    }
    let hi = wss.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = wss.iter().copied().fold(f64::INFINITY, f64::min);
    let range = hi - lo;
    let distinct = range > 0.0 && best.1 >= FLATNESS_THRESHOLD * range;
    Ok(Knee {
        k: ks[best.0],
        distinct,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub ks: Vec<usize>,
    /// Final-embedding WSS of the run trained at each `k`.
    pub wss_values: Vec<f64>,
    pub knee: usize,
    pub distinct: bool,
    /// Seconds spent training at each `k`.
    pub wall_times: Vec<f64>,
    pub nmi: Vec<Option<f64>>,
}

impl ElbowCurve {
    pub fn total_time(&self) -> f64 {
        self.wall_times.iter().sum()
    }
}

/// Trains one fixed-K pipeline per `K ∈ [2, k_max]`, all with the same
/// seed, and locates the knee of the resulting WSS curve.
pub fn elbow_sweep<T: Real>(
    g: &AttributedGraph<T>,
    cfg: &RunConfig,
    k_max: usize,
) -> Result<ElbowCurve> {
    if k_max < 3 {
        return Err(Error::Argument(format!("k_max = {k_max} must be >= 3")));
    }
    if k_max > g.n() {
        return Err(Error::Argument(format!(
            "k_max = {k_max} exceeds the node count {}",
            g.n()
        )));
    }
    let ks: Vec<usize> = (2..=k_max).collect();
    let mut wss_values = Vec::with_capacity(ks.len());
    let mut wall_times = Vec::with_capacity(ks.len());
    let mut nmi = Vec::with_capacity(ks.len());
    for &k in &ks {
        let start = Instant::now();
        let out = train_fixed_k(g, cfg, k)?;
        wall_times.push(start.elapsed().as_secs_f64());
        wss_values.push(out.clustering.wss.as_f64());
        nmi.push(out.record.summary.nmi);
    }
    let knee = detect_knee(&ks, &wss_values)?;
    Ok(ElbowCurve {
        ks,
        wss_values,
        knee: knee.k,
        distinct: knee.distinct,
        wall_times,
        nmi,
    })
}
