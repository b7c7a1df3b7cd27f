use proptest::prelude::*;
use rgc_core::config::{DataSource, RunConfig};
use rgc_core::graph::SbmParams;
use rgc_core::record::{aggregate, RunRecord, RECORD_CSV, RECORD_JSON};
use rgc_core::rl::rgc_train;

fn tiny(seed: u64) -> RunConfig {
    RunConfig {
        data: DataSource::Synthetic(SbmParams {
            blocks: 2,
            nodes_per_block: 8,
            p_in: 0.6,
            p_out: 0.02,
            feature_dim: 4,
            mean_separation: 4.0,
            seed: 1,
        }),
        latent_dim: 4,
        quality_hidden: 4,
        max_k: 4,
        buffer_capacity: 3,
        encoder_epochs: 7,
        quality_epochs: 2,
        kmeans_restarts: 2,
        seed,
        ..RunConfig::default()
    }
}

proptest! {
    #[test]
    fn config_text_round_trips(
        hops in 0usize..=5,
        latent in 1usize..200,
        hidden in 0usize..50,
        max_k in 2usize..20,
        eps in 0.0f64..=1.0,
        gamma in 0.0f64..=1.0,
        lr in 1e-6f64..1.0,
        seed in any::<u64>(),
        blocks in 1usize..6,
        sep in 0.0f64..10.0,
    ) {
        let mut c = tiny(seed);
        c.hops = hops;
        c.latent_dim = latent;
        c.encoder_hidden = (hidden > 0).then_some(hidden);
        c.max_k = max_k;
        c.epsilon_initial = eps;
        c.gamma = gamma;
        c.lr_encoder = lr;
        if let DataSource::Synthetic(p) = &mut c.data {
            p.blocks = blocks;
            p.mean_separation = sep;
        }
        let back = RunConfig::parse_str(&c.to_config_string(), None).unwrap();
        prop_assert_eq!(back, c);
    }
}

#[test]
fn config_file_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "max_k = 5\nwarmup = 3\n").unwrap();
    let msg = RunConfig::from_file(&path).unwrap_err().to_string();
    assert!(msg.contains("warmup"), "{msg}");
    std::fs::write(&path, "edges = e.txt\nfeatures = f.txt\nsbm_seed = 2\n").unwrap();
    assert!(RunConfig::from_file(&path).is_err());
    assert!(RunConfig::from_file(&dir.path().join("missing.cfg")).is_err());
}

#[test]
fn records_are_reproducible_and_round_trip_through_files() {
    let g = tiny(0).data.load::<f64>().unwrap();
    let a = rgc_train(&g, &tiny(3)).unwrap();
    let b = rgc_train(&g, &tiny(3)).unwrap();
    let rec = a.record.clone();
    assert_eq!(rec.to_json().unwrap(), b.record.to_json().unwrap());
    assert_eq!(rec.entries.len(), 7);

    let dir = tempfile::tempdir().unwrap();
    rec.write(dir.path()).unwrap();
    assert_eq!(RunRecord::read(dir.path()).unwrap(), rec);
    let csv = std::fs::read_to_string(dir.path().join(RECORD_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(dir.path().join(RECORD_JSON).exists());

    let other = rgc_train(&g, &tiny(4)).unwrap().record;
    let agg = aggregate(&[rec.clone(), other.clone()]).unwrap();
    assert_eq!(agg.seeds, vec![3, 4]);
    let ks = [rec.summary.k_final as f64, other.summary.k_final as f64];
    assert!((agg.k.mean - (ks[0] + ks[1]) / 2.0).abs() < 1e-12);
    assert!((agg.k.std - (ks[0] - ks[1]).abs() / 2f64.sqrt()).abs() < 1e-12);
}
