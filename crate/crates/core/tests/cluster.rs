use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgc_core::cluster::{ari, kmeans, kmeans_best, nmi, wss, wss_of, KMeansConfig};
use rgc_core::Matrix;

/// Every labeling of `n` points with labels in `0..3`.
fn labelings(n: usize) -> Vec<Vec<usize>> {
    let total = 3usize.pow(n as u32);
    (0..total)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let l = code % 3;
                    code /= 3;
                    l
                })
                .collect()
        })
        .collect()
}

/// Pair-counting ARI as a reduced fraction `(num, den)`; `None` when 0/0.
fn ari_fraction(a: &[usize], b: &[usize]) -> Option<(i64, i64)> {
    let n = a.len();
    let (mut both, mut sa, mut sb) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let ia = a[i] == a[j];
            let ib = b[i] == b[j];
            both += i64::from(ia && ib);
            sa += i64::from(ia);
            sb += i64::from(ib);
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let num = 2 * (pairs * both - sa * sb);
    let den = pairs * (sa + sb) - 2 * sa * sb;
    (den != 0).then_some((num, den))
}

fn nmi_oracle(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut table = [[0.0f64; 3]; 3];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let ra: Vec<f64> = (0..3).map(|x| table[x].iter().sum()).collect();
    let cb: Vec<f64> = (0..3).map(|y| (0..3).map(|x| table[x][y]).sum()).collect();
    let h = |v: &[f64]| -> f64 {
        v.iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| -(c / n) * (c / n).ln())
            .sum()
    };
    let (ha, hb) = (h(&ra), h(&cb));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for x in 0..3 {
        for y in 0..3 {
            let c = table[x][y];
            if c > 0.0 {
                mi += (c / n) * ((c / n) / ((ra[x] / n) * (cb[y] / n))).ln();
            }
        }
    }
    (mi.max(0.0) / ((ha + hb) / 2.0)).clamp(0.0, 1.0)
}

#[test]
fn ari_matches_pair_counting_on_all_small_labelings() {
    for n in 2..=6 {
        let all = labelings(n);
        for a in &all {
            for b in &all {
                let got = ari(a, b).unwrap();
                match ari_fraction(a, b) {
                    Some((num, den)) => assert_eq!(got, num as f64 / den as f64, "{a:?} {b:?}"),
                    None => assert_eq!(got, 1.0, "{a:?} {b:?}"),
                }
            }
        }
    }
}

#[test]
fn nmi_matches_contingency_oracle_on_all_small_labelings() {
    for n in 1..=6 {
        let all = labelings(n);
        for a in &all {
            for b in &all {
                let got = nmi(a, b).unwrap();
                let want = nmi_oracle(a, b);
                assert!((got - want).abs() < 1e-12, "{a:?} {b:?}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn metric_reference_values() {
    assert_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
    assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
    let a = [0, 0, 1, 1, 2, 2];
    let relabeled = [2, 2, 0, 0, 1, 1];
    assert_eq!(nmi(&a, &a).unwrap(), 1.0);
    assert!((nmi(&a, &relabeled).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(ari(&a, &relabeled).unwrap(), 1.0);
    // one side constant and the other not: no agreement beyond chance
    assert_eq!(ari(&a, &[7; 6]).unwrap(), 0.0);
    assert_eq!(nmi(&a, &[7; 6]).unwrap(), 0.0);
}

#[test]
fn metric_length_errors() {
    assert!(nmi(&[0, 1], &[0]).is_err());
    assert!(ari(&[0, 1], &[0, 1, 1]).is_err());
    assert!(ari(&[0], &[0]).is_err());
}

proptest! {
    #[test]
    fn metrics_are_symmetric_and_label_invariant(
        pair in (2usize..40).prop_flat_map(|n| (
            prop::collection::vec(0usize..5, n),
            prop::collection::vec(0usize..5, n),
        )),
        shift in 1usize..50,
    ) {
        let (a, b) = pair;
        prop_assert_eq!(ari(&a, &b).unwrap(), ari(&b, &a).unwrap());
        prop_assert!((nmi(&a, &b).unwrap() - nmi(&b, &a).unwrap()).abs() < 1e-12);
        let renamed: Vec<usize> = a.iter().map(|&l| (4 - l) * 7 + shift).collect();
        prop_assert_eq!(ari(&renamed, &b).unwrap(), ari(&a, &b).unwrap());
        prop_assert!((nmi(&renamed, &b).unwrap() - nmi(&a, &b).unwrap()).abs() < 1e-12);
        let n = nmi(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&n));
        prop_assert!(ari(&a, &b).unwrap() <= 1.0);
    }
}

fn random_points(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0))
}

/// Smallest WSS over all splits of the points into two non-empty groups.
fn best_two_partition(p: &Matrix<f64>) -> f64 {
    let n = p.rows();
    let mut best = f64::INFINITY;
    for mask in 1..(1u32 << n) - 1 {
        let assignment: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
        let mut centers = Matrix::zeros(2, p.cols());
        let mut counts = [0.0; 2];
        for (i, &a) in assignment.iter().enumerate() {
            counts[a] += 1.0;
            for (c, &v) in centers.row_mut(a).iter_mut().zip(p.row(i)) {
                *c += v;
            }
        }
        for a in 0..2 {
            centers.row_mut(a).iter_mut().for_each(|c| *c /= counts[a]);
        }
        best = best.min(wss_of(p, &assignment, &centers));
    }
    best
}

#[test]
fn separated_pairs_match_the_optimal_two_partition() {
    let p: Matrix<f64> = Matrix::from_rows(&[
        vec![0.0, 0.0],
        vec![10.0, 10.0],
        vec![0.0, 1.0],
        vec![11.0, 10.0],
    ])
    .unwrap();
    let r = kmeans(&p, 2, 3, 100).unwrap();
    assert_eq!(r.assignment[0], r.assignment[2]);
    assert_eq!(r.assignment[1], r.assignment[3]);
    assert_ne!(r.assignment[0], r.assignment[1]);
    // hand sum: each pair contributes 2 · 0.5²
    assert!((r.wss - 1.0).abs() < 1e-12);
    assert!((r.wss - best_two_partition(&p)).abs() < 1e-12);
}

#[test]
fn restarts_reach_the_enumerated_optimum_on_grouped_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..20 {
        let mut p = random_points(9, 2, &mut rng);
        let split = rng.random_range(1..9);
        for i in split..9 {
            p.row_mut(i).iter_mut().for_each(|v| *v += 20.0);
        }
        let got = kmeans_best(&p, 2, trial, KMeansConfig::default()).unwrap();
        let want = best_two_partition(&p);
        assert!(
            (got.wss - want).abs() < 1e-9,
            "trial {trial}: {} vs {want}",
            got.wss
        );
    }
    // on unstructured points Lloyd may stop in a local optimum, never below the optimum
    for trial in 0..20 {
        let p = random_points(8, 2, &mut rng);
        let got = kmeans_best(&p, 2, trial, KMeansConfig::default()).unwrap();
        assert!(got.wss >= best_two_partition(&p) - 1e-9);
    }
}

#[test]
fn wss_reference_case() {
    let p = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
    let r = kmeans(&p, 1, 0, 10).unwrap();
    assert_eq!(r.centers.as_slice(), &[1.0]);
    assert_eq!(r.wss, 2.0);
    assert_eq!(wss(&p, &r).unwrap(), 2.0);
}

#[test]
fn wss_rejects_mismatched_inputs() {
    let p = Matrix::<f64>::zeros(3, 2);
    let mut r = kmeans(&p, 1, 0, 10).unwrap();
    assert!(wss(&Matrix::<f64>::zeros(4, 2), &r).is_err());
    r.assignment[0] = 5;
    assert!(wss(&p, &r).is_err());
    assert!(kmeans(&p, 4, 0, 10).is_err());
    assert!(kmeans(&p, 0, 0, 10).is_err());
}

proptest! {
    #[test]
    fn lloyd_terminates_at_a_local_fixed_point(seed in any::<u64>(), n in 2usize..40, k in 1usize..6) {
        prop_assume!(k <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_points(n, 3, &mut rng);
        let r = kmeans(&p, k, seed, 100).unwrap();
        prop_assert!(r.wss_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let direct: f64 = (0..n)
            .map(|i| p.row(i).iter().zip(r.centers.row(r.assignment[i])).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum();
        prop_assert!((r.wss - direct).abs() < 1e-9);
        prop_assert!(r.assignment.iter().all(|&a| a < k));
        if r.iterations < 100 {
            for i in 0..n {
                let own = (0..3).map(|j| (p[(i, j)] - r.centers[(r.assignment[i], j)]).powi(2)).sum::<f64>();
                for c in 0..k {
                    let other = (0..3).map(|j| (p[(i, j)] - r.centers[(c, j)]).powi(2)).sum::<f64>();
                    prop_assert!(own <= other + 1e-9, "point {} closer to {} than to its own center", i, c);
                }
            }
        }
    }

    #[test]
    fn best_of_restarts_is_no_worse_than_each(seed in any::<u64>(), k in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_points(30, 2, &mut rng);
        let cfg = KMeansConfig { max_iters: 100, restarts: 4 };
        let best = kmeans_best(&p, k, seed, cfg).unwrap();
        let again = kmeans_best(&p, k, seed, cfg).unwrap();
        prop_assert_eq!(&best, &again);
        let single = kmeans_best(&p, k, seed, KMeansConfig { restarts: 1, ..cfg }).unwrap();
        prop_assert!(best.wss <= single.wss);
    }
}
