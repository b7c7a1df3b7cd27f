use std::time::Instant;

use rgc_core::cluster::{kmeans_best, KMeansConfig};
use rgc_core::config::{DataSource, RunConfig};
use rgc_core::estimators::{detect_knee, elbow_sweep, thumb_rule, Knee};
use rgc_core::graph::{laplacian_smooth, SbmParams};
use rgc_core::rl::rgc_train;

#[test]
fn thumb_rule_reference_sizes() {
    assert_eq!(thumb_rule(2), 2);
    assert_eq!(thumb_rule(131), 8);
    assert_eq!(thumb_rule(2708), 37);
    assert_eq!(thumb_rule(200), 10);
}

#[test]
fn linear_curve_has_no_distinct_elbow() {
    let ks: Vec<usize> = (2..=10).collect();
    let wss: Vec<f64> = ks.iter().map(|&k| 100.0 - 7.5 * k as f64).collect();
    let knee = detect_knee(&ks, &wss).unwrap();
    assert!(!knee.distinct);
    assert!(ks.contains(&knee.k));
}

#[test]
fn bend_is_found_by_second_difference() {
    let ks: Vec<usize> = (2..=8).collect();
    let wss = [90.0, 60.0, 12.0, 10.0, 9.0, 8.5, 8.0];
    // second differences: 18, 46, 1, 0.5, 0 → largest at k = 4
    assert_eq!(
        detect_knee(&ks, &wss).unwrap(),
        Knee {
            k: 4,
            distinct: true
        }
    );
}

#[test]
fn minimal_sweep_and_bad_curves() {
    assert_eq!(detect_knee(&[2, 3], &[5.0, 1.0]).unwrap().k, 2);
    assert!(detect_knee(&[2], &[1.0]).is_err());
    assert!(detect_knee(&[2, 3], &[1.0]).is_err());
    assert!(detect_knee(&[3, 2, 4], &[1.0, 2.0, 3.0]).is_err());
    assert!(detect_knee(&[2, 3, 4], &[1.0, f64::NAN, 3.0]).is_err());
}

fn three_blocks() -> RunConfig {
    RunConfig {
        data: DataSource::Synthetic(SbmParams {
            blocks: 3,
            nodes_per_block: 15,
            p_in: 0.5,
            p_out: 0.01,
            feature_dim: 8,
            mean_separation: 4.0,
            seed: 5,
        }),
        latent_dim: 16,
        quality_hidden: 8,
        max_k: 6,
        buffer_capacity: 10,
        encoder_epochs: 30,
        quality_epochs: 5,
        kmeans_restarts: 3,
        ..RunConfig::default()
    }
}

#[test]
fn wss_weakly_decreases_on_a_fixed_embedding() {
    let cfg = three_blocks();
    let g = cfg.data.load::<f64>().unwrap();
    let x = laplacian_smooth(&g, 2).matrix;
    let wss: Vec<f64> = (1..=8)
        .map(|k| kmeans_best(&x, k, 3, KMeansConfig::default()).unwrap().wss)
        .collect();
    assert!(wss.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{wss:?}");
    assert_eq!(
        kmeans_best(&x, g.n(), 3, KMeansConfig::default())
            .unwrap()
            .wss,
        0.0
    );
}

#[test]
fn three_separated_blocks_bend_at_three() {
    let cfg = three_blocks();
    let g = cfg.data.load::<f64>().unwrap();
    let curve = elbow_sweep(&g, &cfg, 6).unwrap();
    assert_eq!(curve.ks, vec![2, 3, 4, 5, 6]);
    assert_eq!(curve.wss_values.len(), 5);
    assert_eq!(curve.wall_times.len(), 5);
    assert_eq!(curve.knee, 3, "{:?}", curve.wss_values);
    assert!(elbow_sweep(&g, &cfg, 2).is_err());
}

#[test]
fn sweep_costs_more_than_one_controlled_run() {
    let cfg = three_blocks();
    let g = cfg.data.load::<f64>().unwrap();
    let start = Instant::now();
    rgc_train(&g, &cfg).unwrap();
    let single = start.elapsed().as_secs_f64();
    let curve = elbow_sweep(&g, &cfg, 6).unwrap();
    assert!(
        curve.total_time() > single,
        "{} vs {single}",
        curve.total_time()
    );
}
