use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgc_core::encoder::{encode, EmbeddingState, EncoderParams};
use rgc_core::graph::FilteredFeatures;
use rgc_core::objectives::{
    cluster_distribution, clustering_loss, contrastive_loss, encoder_loss, target_distribution,
    SoftAssignment,
};
use rgc_core::Matrix;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn unit_rows(m: Matrix<f64>) -> Matrix<f64> {
    let mut m = m;
    for i in 0..m.rows() {
        let n = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        m.row_mut(i).iter_mut().for_each(|v| *v /= n);
    }
    m
}

fn state(v1: Matrix<f64>, v2: Matrix<f64>) -> EmbeddingState<f64> {
    let fused = Matrix::from_fn(v1.rows(), v1.cols(), |i, j| (v1[(i, j)] + v2[(i, j)]) / 2.0);
    EmbeddingState {
        view1: v1,
        view2: v2,
        fused,
    }
}

fn inner(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Every anchor of both views, written out term by term.
fn contrastive_oracle(v1: &Matrix<f64>, v2: &Matrix<f64>) -> f64 {
    let n = v1.rows();
    let mut total = 0.0;
    for (own, other) in [(v1, v2), (v2, v1)] {
        for i in 0..n {
            let pos = inner(own.row(i), other.row(i)).exp();
            let mut denom = pos;
            for k in 0..n {
                if k != i {
                    denom +=
                        inner(own.row(i), own.row(k)).exp() + inner(own.row(i), other.row(k)).exp();
                }
            }
            total += -(pos / denom).ln();
        }
    }
    total / (2 * n) as f64
}

fn g_oracle(z: &Matrix<f64>, c: &Matrix<f64>) -> Matrix<f64> {
    let mut g = Matrix::from_fn(z.rows(), c.rows(), |i, j| {
        let d2: f64 = z
            .row(i)
            .iter()
            .zip(c.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        1.0 / (1.0 + d2)
    });
    for i in 0..g.rows() {
        let s: f64 = g.row(i).iter().sum();
        g.row_mut(i).iter_mut().for_each(|v| *v /= s);
    }
    g
}

fn h_oracle(g: &Matrix<f64>) -> Matrix<f64> {
    let f: Vec<f64> = (0..g.cols())
        .map(|j| (0..g.rows()).map(|i| g[(i, j)]).sum())
        .collect();
    let mut h = Matrix::from_fn(g.rows(), g.cols(), |i, j| g[(i, j)] * g[(i, j)] / f[j]);
    for i in 0..h.rows() {
        let s: f64 = h.row(i).iter().sum();
        h.row_mut(i).iter_mut().for_each(|v| *v /= s);
    }
    h
}

#[test]
fn contrastive_matches_enumeration_for_small_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 2..=4 {
        for _ in 0..10 {
            let v1 = unit_rows(random(n, 3, &mut rng));
            let v2 = unit_rows(random(n, 3, &mut rng));
            let got = contrastive_loss(&state(v1.clone(), v2.clone()), 1.0).unwrap();
            let want = contrastive_oracle(&v1, &v2);
            assert!((got - want).abs() < 1e-10, "n={n}: {got} vs {want}");
        }
    }
}

#[test]
fn contrastive_orthonormal_pair() {
    let e = state(Matrix::identity(2), Matrix::identity(2));
    let got = contrastive_loss(&e, 1.0).unwrap();
    assert!((got - (1.0 + 2.0 / std::f64::consts::E).ln()).abs() < 1e-9);
    assert!((got - 0.55144).abs() < 1e-5);
}

#[test]
fn distributions_match_direct_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let z = random(3, 2, &mut rng);
    let c = random(2, 2, &mut rng);
    let g = cluster_distribution(&z, &c).unwrap();
    assert!(g.max_abs_diff(&g_oracle(&z, &c)) < 1e-12);
    let g4 = g_oracle(&random(4, 2, &mut rng), &random(3, 2, &mut rng));
    assert!(target_distribution(&g4).max_abs_diff(&h_oracle(&g4)) < 1e-12);
}

#[test]
fn kl_matches_elementwise_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = g_oracle(&random(5, 3, &mut rng), &random(3, 3, &mut rng));
    let h = h_oracle(&g);
    let mut want = 0.0;
    for (a, b) in g.as_slice().iter().zip(h.as_slice()) {
        want += a * (a / b).ln();
    }
    let got = clustering_loss(&SoftAssignment { g, h }).unwrap();
    assert!(got >= 0.0);
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn kl_zero_only_on_equal_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let g = g_oracle(&random(4, 2, &mut rng), &random(2, 2, &mut rng));
    let same = SoftAssignment {
        g: g.clone(),
        h: g.clone(),
    };
    assert_eq!(clustering_loss(&same).unwrap(), 0.0);
    let mut h = g.clone();
    h[(0, 0)] += 0.05;
    h[(0, 1)] -= 0.05;
    assert!(clustering_loss(&SoftAssignment { g, h }).unwrap() > 0.0);
}

#[test]
fn encoder_loss_is_sum_of_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let e = state(
        unit_rows(random(6, 3, &mut rng)),
        unit_rows(random(6, 3, &mut rng)),
    );
    let c = random(3, 3, &mut rng);
    let parts = encoder_loss(&e, &c, 10.0, 1.0).unwrap();
    let con = contrastive_loss(&e, 1.0).unwrap();
    let clu = clustering_loss(&SoftAssignment::from_g(
        cluster_distribution(&e.fused, &c).unwrap(),
    ))
    .unwrap();
    assert!((parts.contrastive - con).abs() < 1e-12);
    assert!((parts.clustering - clu).abs() < 1e-12);
    assert!((parts.total - (con + 10.0 * clu)).abs() < 1e-12);
}

#[test]
fn encode_matches_direct_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = random(5, 3, &mut rng);
    let w1 = random(3, 2, &mut rng);
    let w2 = random(3, 2, &mut rng);
    let p = EncoderParams::from_weights(w1.clone(), w2.clone()).unwrap();
    let e = encode(
        &FilteredFeatures {
            matrix: x.clone(),
            hops: 0,
        },
        &p,
    )
    .unwrap();
    let mut v = Vec::new();
    for w in [&w1, &w2] {
        let mut m = Matrix::zeros(5, 2);
        for i in 0..5 {
            for j in 0..2 {
                m[(i, j)] = (0..3).map(|k| x[(i, k)] * w[(k, j)]).sum();
            }
        }
        v.push(unit_rows(m));
    }
    assert!(e.view1.max_abs_diff(&v[0]) < 1e-12);
    assert!(e.view2.max_abs_diff(&v[1]) < 1e-12);
    let fused = Matrix::from_fn(5, 2, |i, j| (v[0][(i, j)] + v[1][(i, j)]) / 2.0);
    assert!(e.fused.max_abs_diff(&fused) < 1e-12);
}

fn permute(m: &Matrix<f64>, perm: &[usize]) -> Matrix<f64> {
    m.select_rows(perm)
}

proptest! {
    #[test]
    fn contrastive_is_row_permutation_invariant(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v1 = unit_rows(random(n, 3, &mut rng));
        let v2 = unit_rows(random(n, 3, &mut rng));
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(seed as usize % n);
        perm.swap(0, n - 1);
        let a = contrastive_loss(&state(v1.clone(), v2.clone()), 1.0).unwrap();
        let b = contrastive_loss(&state(permute(&v1, &perm), permute(&v2, &perm)), 1.0).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn soft_assignments_are_row_stochastic(seed in any::<u64>(), n in 1usize..8, k in 1usize..5, spread in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random(n, 3, &mut rng).scale(spread);
        let c = random(k, 3, &mut rng).scale(spread);
        let s = SoftAssignment::from_g(cluster_distribution(&z, &c).unwrap());
        for (gr, hr) in s.g.row_iter().zip(s.h.row_iter()) {
            prop_assert!((gr.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((hr.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(gr.iter().all(|&v| v > 0.0 && v <= 1.0));
            prop_assert!(hr.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        prop_assert!(clustering_loss(&s).unwrap() >= -1e-12);
    }

    #[test]
    fn encode_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(n, 4, &mut rng);
        let p = EncoderParams::from_weights(random(4, 3, &mut rng), random(4, 3, &mut rng)).unwrap();
        let mut perm: Vec<usize> = (0..n).rev().collect();
        perm.rotate_left(seed as usize % n);
        let e = encode(&FilteredFeatures { matrix: x.clone(), hops: 0 }, &p).unwrap();
        let ep = encode(&FilteredFeatures { matrix: permute(&x, &perm), hops: 0 }, &p).unwrap();
        prop_assert_eq!(permute(&e.view1, &perm), ep.view1);
        prop_assert_eq!(permute(&e.view2, &perm), ep.view2);
        prop_assert_eq!(permute(&e.fused, &perm), ep.fused);
        for i in 0..n {
            let n1 = e.view1.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let nf = e.fused.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n1 - 1.0).abs() < 1e-9);
            prop_assert!(nf <= 1.0 + 1e-9);
        }
    }
}
