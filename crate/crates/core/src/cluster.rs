//! K-Means (Lloyd iterations, k-means++ seeding) and external clustering
//! metrics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{dot, sq_dist, Matrix};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult<T> {
    /// Hard assignment of each point to a center index in `[0, k)`.
    pub assignment: Vec<usize>,
    /// `k × d`; row `j` is the mean of the points assigned to `j`.
    pub centers: Matrix<T>,
    pub k: usize,
    pub wss: T,
    pub iterations: usize,
    /// WSS after every center update. Non-increasing.
    pub wss_history: Vec<T>,
}

/// K-Means settings; `restarts` independent seedings, best WSS wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub max_iters: usize,
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            restarts: 10,
        }
    }
}

fn sq_norms<T: Real>(m: &Matrix<T>) -> Vec<T> {
    m.row_iter().map(|r| dot(r, r)).collect()
}

/// Nearest center per point, lowest index on ties, from the expansion
/// `‖x‖² − 2x·c + ‖c‖²` so the cross terms come from one product.
fn assign<T: Real>(points: &Matrix<T>, norms: &[T], centers: &Matrix<T>) -> Vec<usize> {
    let cross = points.matmul_nt(centers).expect("matching widths");
    let cn = sq_norms(centers);
    let two = T::one() + T::one();
    cross
        .row_iter()
        .zip(norms)
        .map(|(row, &pn)| {
            let mut best = (0, T::infinity());
            for (j, (&xc, &c)) in row.iter().zip(&cn).enumerate() {
                let d = pn - two * xc + c;
                if d < best.1 {
                    best = (j, d);
                }
            }
            best.0
        })
        .collect()
}

/// `Σ_i ‖points_i − centers[assignment_i]‖²` without shape checks.
pub fn wss_of<T: Real>(points: &Matrix<T>, assignment: &[usize], centers: &Matrix<T>) -> T {
    points
        .row_iter()
        .zip(assignment)
        .map(|(p, &a)| sq_dist(p, centers.row(a)))
        .sum()
}

/// `Σ_i ‖points_i − centers[assignment_i]‖²`.
pub fn wss<T: Real>(points: &Matrix<T>, result: &ClusterResult<T>) -> Result<T> {
    if points.rows() != result.assignment.len() || points.cols() != result.centers.cols() {
        return Err(Error::dim(
            "wss",
            format!(
                "{:?} points, {} assignments, centers {:?}",
                points.shape(),
                result.assignment.len(),
                result.centers.shape()
            ),
        ));
    }
    if let Some(&a) = result
        .assignment
        .iter()
        .find(|&&a| a >= result.centers.rows())
    {
        return Err(Error::Argument(format!("assignment {a} has no center")));
    }
    Ok(wss_of(points, &result.assignment, &result.centers))
}

fn kmeans_pp<T: Real, R: Rng>(points: &Matrix<T>, k: usize, rng: &mut R) -> Matrix<T> {
    let n = points.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .row_iter()
        .map(|p| sq_dist(p, points.row(chosen[0])).as_f64())
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            // rounding can leave target past the last positive weight
            if d2[pick] == 0.0 {
                pick = d2.iter().rposition(|&w| w > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // all points coincide with chosen centers; empty-cluster repair sorts it out
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, p) in points.row_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(next)).as_f64());
        }
    }
    points.select_rows(&chosen)
}

/// Recomputes centers as cluster means, re-seeding empty clusters at the
/// point farthest from its own center (taken from a cluster with at least
/// two members).
fn update_centers<T: Real>(points: &Matrix<T>, assignment: &mut [usize], k: usize) -> Matrix<T> {
    loop {
        let d = points.cols();
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (p, &a) in points.row_iter().zip(assignment.iter()) {
            counts[a] += 1;
            for (s, &v) in sums.row_mut(a).iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let c = T::from_count(counts[j]);
                sums.row_mut(j).iter_mut().for_each(|v| *v /= c);
            }
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return sums;
        };
        let mut far = None;
        let mut far_d = T::neg_infinity();
        for (i, p) in points.row_iter().enumerate() {
            let a = assignment[i];
            if counts[a] < 2 {
                continue;
            }
            let dd = sq_dist(p, sums.row(a));
            if dd > far_d {
                far_d = dd;
                far = Some(i);
            }
        }
        // k <= n guarantees some cluster has two members while one is empty
        let far = far.expect("k <= n");
        assignment[far] = empty;
    }
}

fn check_k<T: Real>(points: &Matrix<T>, k: usize) -> Result<()> {
    if k == 0 || k > points.rows() {
        return Err(Error::Argument(format!(
            "k = {k} must lie in [1, {}]",
            points.rows()
        )));
    }
    if !points.is_finite() {
        return Err(Error::NonFinite { op: "kmeans" });
    }
    Ok(())
}

fn lloyd<T: Real, R: Rng>(
    points: &Matrix<T>,
    norms: &[T],
    k: usize,
    max_iters: usize,
    rng: &mut R,
) -> ClusterResult<T> {
    let mut centers = kmeans_pp(points, k, rng);
    let mut assignment = assign(points, norms, &centers);
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iters.max(1) {
        iterations += 1;
        centers = update_centers(points, &mut assignment, k);
        let current = wss_of(points, &assignment, &centers);
        history.push(current);
        let next = assign(points, norms, &centers);
        // a reassignment that does not strictly lower WSS only reshuffles
        // ties; every point already sits at a nearest center
        if next == assignment || wss_of(points, &next, &centers) >= current {
            break;
        }
        assignment = next;
    }
    let wss = wss_of(points, &assignment, &centers);
    ClusterResult {
        assignment,
        centers,
        k,
        wss,
        iterations,
        wss_history: history,
    }
}

/// One seeded k-means++ initialization followed by Lloyd iterations until
/// the assignment stops changing or `max_iters` updates have run.
pub fn kmeans<T: Real>(
    points: &Matrix<T>,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClusterResult<T>> {
    check_k(points, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(lloyd(points, &sq_norms(points), k, max_iters, &mut rng))
}

/// Best of `cfg.restarts` runs by WSS (earliest restart on ties). Restart
/// `r` uses stream `r` of the seeded generator.
pub fn kmeans_best<T: Real>(
    points: &Matrix<T>,
    k: usize,
    seed: u64,
    cfg: KMeansConfig,
) -> Result<ClusterResult<T>> {
    check_k(points, k)?;
    let norms = sq_norms(points);
    let mut best: Option<ClusterResult<T>> = None;
    for r in 0..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let res = lloyd(points, &norms, k, cfg.max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| res.wss < b.wss) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn check_pair(a: &[usize], b: &[usize], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "label vectors differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < min_len {
        return Err(Error::Argument(format!("need at least {min_len} labels")));
    }
    Ok(())
}

struct Contingency {
    cells: BTreeMap<(usize, usize), u64>,
    rows: BTreeMap<usize, u64>,
    cols: BTreeMap<usize, u64>,
    n: u64,
}

fn contingency(a: &[usize], b: &[usize]) -> Contingency {
    let mut cells = BTreeMap::new();
    let mut rows = BTreeMap::new();
    let mut cols = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    Contingency {
        cells,
        rows,
        cols,
        n: a.len() as u64,
    }
}

fn entropy(counts: &BTreeMap<usize, u64>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with the arithmetic mean of the two
/// entropies as normalizer. Two single-cluster labelings score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b, 1)?;
    let t = contingency(a, b);
    let n = t.n as f64;
    let ha = entropy(&t.rows, n);
    let hb = entropy(&t.cols, n);
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &t.cells {
        let c = c as f64;
        let ra = t.rows[&x] as f64;
        let cb = t.cols[&y] as f64;
        mi += c / n * (n * c / (ra * cb)).ln();
    }
    if mi <= 0.0 {
        return Ok(0.0);
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

fn pairs(c: u64) -> u128 {
    (c as u128) * (c.saturating_sub(1) as u128) / 2
}

/// Adjusted Rand index from pair counts, evaluated in exact integer
/// arithmetic with a single final division. Identical trivial partitions
/// (where the index is 0/0) score 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let t = contingency(a, b);
    let index: u128 = t.cells.values().map(|&c| pairs(c)).sum();
    let sa: u128 = t.rows.values().map(|&c| pairs(c)).sum();
    let sb: u128 = t.cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(t.n);
    // ARI = (total·index − sa·sb) / (total·(sa + sb)/2 − sa·sb), scaled by 2
    let num = 2 * (total * index) as i128 - 2 * (sa * sb) as i128;
    let den = (total * (sa + sb)) as i128 - 2 * (sa * sb) as i128;
    if den == 0 {
        return Ok(1.0);
    }
    Ok(num as f64 / den as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(rows: &[Vec<f64>]) -> Matrix<f64> {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn k_equals_n_gives_zero_wss() {
        let p = pts(&[
            vec![0.0, 1.0],
            vec![3.0, 4.0],
            vec![-2.0, 5.0],
            vec![7.0, 7.0],
        ]);
        let r = kmeans(&p, 4, 1, 50).unwrap();
        assert_eq!(r.wss, 0.0);
        let mut a = r.assignment.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_one_is_global_mean() {
        let p = pts(&[vec![0.0], vec![2.0], vec![4.0], vec![10.0]]);
        let r = kmeans(&p, 1, 7, 10).unwrap();
        assert!((r.centers[(0, 0)] - 4.0).abs() < 1e-12);
        // total variance 14 times n = 4
        assert!((r.wss - 56.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_k() {
        let p = pts(&[vec![0.0], vec![1.0]]);
        assert!(matches!(kmeans(&p, 3, 0, 10), Err(Error::Argument(_))));
        assert!(kmeans(&p, 0, 0, 10).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let p = pts(&[vec![1.0], vec![1.0], vec![1.0], vec![5.0]]);
        let r = kmeans(&p, 3, 3, 20).unwrap();
        let mut seen = r.assignment.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn wss_arithmetic() {
        let p = pts(&[vec![0.0], vec![2.0]]);
        let r = kmeans(&p, 1, 0, 5).unwrap();
        assert_eq!(r.centers[(0, 0)], 1.0);
        assert_eq!(wss(&p, &r).unwrap(), 2.0);
    }

    #[test]
    fn nmi_examples() {
        assert_eq!(nmi(&[0, 1, 2, 0], &[0, 1, 2, 0]).unwrap(), 1.0);
        assert!((nmi(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert!(nmi(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn ari_examples() {
        assert_eq!(ari(&[0, 1, 1, 2], &[5, 3, 3, 0]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
        assert_eq!(ari(&[0, 1, 1, 2, 0], &[0, 0, 0, 0, 0]).unwrap(), 0.0);
        assert!(ari(&[0, 1, 2], &[0, 1]).is_err());
    }
}
