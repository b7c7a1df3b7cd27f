use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rgc_core::cluster::{ari, nmi};
use rgc_core::config::RunConfig;
use rgc_core::estimators::elbow_sweep;
use rgc_core::graph::{
    feature_file_bytes, generate_sbm, label_file_bytes, load_labels, write_atomic, SbmParams,
};
use rgc_core::record::{aggregate, write_timing, RunRecord};
use rgc_core::rl::{rgc_train, train_fixed_k};
use rgc_core::Graph64;

const SEED_ENV: &str = "RGC_SEED";

#[derive(Parser)]
#[command(
    name = "rgc",
    version,
    about = "Graph clustering that learns its cluster number"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train encoder and controller, write record.json / record.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train at every fixed K in a range and report the metrics per K.
    SweepK {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2)]
        k_min: usize,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// WSS elbow sweep over K in [2, k_max] with per-K timings.
    Elbow {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a stochastic block model dataset.
    Synth {
        #[arg(long)]
        blocks: usize,
        #[arg(long)]
        per_block: usize,
        #[arg(long)]
        p_in: f64,
        #[arg(long)]
        p_out: f64,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        sep: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// NMI and ARI between two label files.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long = "true")]
        truth: PathBuf,
    },
    /// Mean and standard deviation over the records in several run directories.
    Aggregate {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let mut cfg =
        RunConfig::from_file(path).with_context(|| format!("reading config {}", path.display()))?;
    let env = std::env::var(SEED_ENV).ok();
    cfg.apply_seed_override(env.as_deref())?;
    Ok(cfg)
}

fn load_data(cfg: &RunConfig) -> Result<Graph64> {
    cfg.data.load().context("loading graph")
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())?;
    Ok(())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn train(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let g = load_data(&cfg)?;
    let start = Instant::now();
    let outcome = rgc_train(&g, &cfg)?;
    let secs = start.elapsed().as_secs_f64();
    outcome.record.write(out)?;
    write_timing(out, secs)?;
    write_atomic(
        &out.join("assignment.txt"),
        &label_file_bytes(&outcome.clustering.assignment),
    )?;
    if cfg.export_embedding {
        write_atomic(
            &out.join("embedding.txt"),
            &feature_file_bytes(&outcome.embedding.fused),
        )?;
    }
    let s = &outcome.record.summary;
    println!(
        "k={} nmi={} ari={} seed={} time={secs:.2}s",
        s.k_final,
        fmt_metric(s.nmi),
        fmt_metric(s.ari),
        s.seed
    );
    Ok(())
}

fn sweep_k(config: &Path, k_min: usize, k_max: usize, out: Option<&Path>) -> Result<()> {
    if k_min < 1 || k_max < k_min {
        bail!("invalid K range [{k_min}, {k_max}]");
    }
    let cfg = load_config(config)?;
    let g = load_data(&cfg)?;
    let mut rows = Vec::new();
    println!("k\tnmi\tari\twss");
    for k in k_min..=k_max {
        let outcome = train_fixed_k(&g, &cfg, k)?;
        let s = &outcome.record.summary;
        println!(
            "{k}\t{}\t{}\t{:.4}",
            fmt_metric(s.nmi),
            fmt_metric(s.ari),
            s.wss
        );
        rows.push(serde_json::json!({ "k": k, "nmi": s.nmi, "ari": s.ari, "wss": s.wss }));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("sweep.json"), &serde_json::Value::Array(rows))?;
    }
    Ok(())
}

fn elbow(config: &Path, k_max: usize, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let g = load_data(&cfg)?;
    let curve = elbow_sweep(&g, &cfg, k_max)?;
    println!("k\twss\ttime_s");
    for ((k, w), t) in curve
        .ks
        .iter()
        .zip(&curve.wss_values)
        .zip(&curve.wall_times)
    {
        println!("{k}\t{w:.4}\t{t:.2}");
    }
    let note = if curve.distinct {
        ""
    } else {
        " (no distinct elbow)"
    };
    println!(
        "knee={}{note} total_time={:.2}s",
        curve.knee,
        curve.total_time()
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        write_json(&dir.join("elbow.json"), &serde_json::to_value(&curve)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out } => train(&config, &out),
        Command::SweepK {
            config,
            k_min,
            k_max,
            out,
        } => sweep_k(&config, k_min, k_max, out.as_deref()),
        Command::Elbow { config, k_max, out } => elbow(&config, k_max, out.as_deref()),
        Command::Synth {
            blocks,
            per_block,
            p_in,
            p_out,
            dim,
            sep,
            seed,
            out,
        } => {
            let params = SbmParams {
                blocks,
                nodes_per_block: per_block,
                p_in,
                p_out,
                feature_dim: dim,
                mean_separation: sep,
                seed,
            };
            let g: Graph64 = generate_sbm(&params)?;
            g.write_to_dir(&out)?;
            println!(
                "wrote {} nodes, {} edges to {}",
                g.n(),
                g.edges().len(),
                out.display()
            );
            Ok(())
        }
        Command::Eval { pred, truth } => {
            let p = load_labels(&pred)?;
            let t = load_labels(&truth)?;
            println!("nmi={:.6} ari={:.6}", nmi(&t, &p)?, ari(&t, &p)?);
            Ok(())
        }
        Command::Aggregate { runs } => {
            let records = runs
                .iter()
                .map(|d| RunRecord::read(d).with_context(|| format!("reading run {}", d.display())))
                .collect::<Result<Vec<_>>>()?;
            let agg = aggregate(&records)?;
            println!("runs={} {}", agg.runs, agg.table_row());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
