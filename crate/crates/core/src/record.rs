//! Per-run training record, its JSON/CSV files, and seed aggregation.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::graph::write_atomic;

pub const RECORD_JSON: &str = "record.json";
pub const RECORD_CSV: &str = "record.csv";
pub const TIMING_JSON: &str = "timing.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEntry {
    pub epoch: usize,
    pub epsilon: f64,
    /// Cluster number chosen this epoch.
    pub k: usize,
    pub reward: f64,
    pub loss_total: f64,
    pub loss_contrastive: f64,
    pub loss_clustering: f64,
    /// Against ground truth at the chosen `k`, when labels exist.
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    /// Quality vector; entry `a` scores `k = a + 2`.
    pub quality: Vec<f64>,
    /// Last replay loss of the quality training run at the start of this
    /// epoch, if one ran.
    pub quality_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub k_final: usize,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub wss: f64,
    pub seed: u64,
    pub quality_rounds: usize,
    pub config: RunConfig,
}

/// Everything a run produces except wall time, which lives in a sidecar
/// file so that records stay byte-identical across repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub entries: Vec<EpochEntry>,
    pub summary: RunSummary,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

impl RunRecord {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Per-epoch table; quality entries are `;`-joined in one column.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "epoch,epsilon,k,reward,loss_total,loss_contrastive,loss_clustering,nmi,ari,quality_loss,quality\n",
        );
        for e in &self.entries {
            let q: Vec<String> = e.quality.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(
                s,
                "{},{:?},{},{:?},{:?},{:?},{:?},{},{},{},{}",
                e.epoch,
                e.epsilon,
                e.k,
                e.reward,
                e.loss_total,
                e.loss_contrastive,
                e.loss_clustering,
                opt(e.nmi),
                opt(e.ari),
                opt(e.quality_loss),
                q.join(";")
            );
        }
        s
    }

    /// Writes `record.json` and `record.csv` into `dir`, each atomically.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join(RECORD_JSON), self.to_json()?.as_bytes())?;
        write_atomic(&dir.join(RECORD_CSV), self.to_csv().as_bytes())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(RECORD_JSON);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }
}

pub fn write_timing(dir: &Path, seconds: f64) -> Result<()> {
    let body = serde_json::json!({ "wall_time_seconds": seconds });
    let mut s = serde_json::to_string_pretty(&body)?;
    s.push('\n');
    write_atomic(&dir.join(TIMING_JSON), s.as_bytes())
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        // shifted by the first value so identical inputs give an exact mean
        let shift = values[0];
        let mean = shift + values.iter().map(|v| v - shift).sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub k: MeanStd,
    /// Present only when every run has labels.
    pub nmi: Option<MeanStd>,
    pub ari: Option<MeanStd>,
}

impl Aggregate {
    /// `K 03.80±0.42 | NMI 91.20±1.10 | ARI ...`, metrics in percent.
    pub fn table_row(&self) -> String {
        let mut s = format!("K {:05.2}±{:.2}", self.k.mean, self.k.std);
        for (name, m) in [("NMI", self.nmi), ("ARI", self.ari)] {
            if let Some(m) = m {
                let _ = write!(s, " | {name} {:05.2}±{:.2}", 100.0 * m.mean, 100.0 * m.std);
            }
        }
        s
    }
}

fn all_some(values: impl Iterator<Item = Option<f64>>) -> Option<Vec<f64>> {
    values.collect()
}

/// Seed-level summary over records that share a configuration.
pub fn aggregate(records: &[RunRecord]) -> Result<Aggregate> {
    let first = records
        .first()
        .ok_or_else(|| Error::Aggregation("no records to aggregate".into()))?;
    for (i, r) in records.iter().enumerate().skip(1) {
        if !r.summary.config.same_except_seed(&first.summary.config) {
            return Err(Error::Aggregation(format!(
                "record {i} was produced by a different configuration"
            )));
        }
    }
    let ks: Vec<f64> = records.iter().map(|r| r.summary.k_final as f64).collect();
    let nmi = all_some(records.iter().map(|r| r.summary.nmi)).and_then(|v| MeanStd::of(&v));
    let ari = all_some(records.iter().map(|r| r.summary.ari)).and_then(|v| MeanStd::of(&v));
    Ok(Aggregate {
        runs: records.len(),
        seeds: records.iter().map(|r| r.summary.seed).collect(),
        k: MeanStd::of(&ks).expect("non-empty"),
        nmi,
        ari,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, k: usize, nmi: Option<f64>) -> RunRecord {
        let config = RunConfig {
            seed,
            ..RunConfig::default()
        };
        RunRecord {
            entries: vec![EpochEntry {
                epoch: 0,
                epsilon: 0.5,
                k,
                reward: -0.25,
                loss_total: 3.0,
                loss_contrastive: 2.5,
                loss_clustering: 0.05,
                nmi,
                ari: None,
                quality: vec![0.5, 0.5],
                quality_loss: None,
            }],
            summary: RunSummary {
                k_final: k,
                nmi,
                ari: nmi,
                wss: 1.0,
                seed,
                quality_rounds: 0,
                config,
            },
        }
    }

    #[test]
    fn identical_records_have_zero_spread() {
        let rs: Vec<_> = (0..10).map(|_| record(1, 4, Some(0.9))).collect();
        let a = aggregate(&rs).unwrap();
        assert_eq!(
            a.k,
            MeanStd {
                mean: 4.0,
                std: 0.0
            }
        );
        assert_eq!(a.nmi.unwrap().std, 0.0);
    }

    #[test]
    fn two_point_statistics() {
        let a = aggregate(&[record(1, 4, Some(0.4)), record(2, 4, Some(0.6))]).unwrap();
        let m = a.nmi.unwrap();
        assert!((m.mean - 0.5).abs() < 1e-12);
        assert!((m.std - 0.02f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn learned_k_mean() {
        let ks = [4, 4, 4, 3, 4, 4, 4, 4, 4, 3];
        let rs: Vec<_> = ks
            .iter()
            .enumerate()
            .map(|(s, &k)| record(s as u64, k, None))
            .collect();
        let a = aggregate(&rs).unwrap();
        assert!((a.k.mean - 3.8).abs() < 1e-12);
        assert!((a.k.std - (1.6f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!(a.nmi.is_none());
        assert!(a.table_row().starts_with("K 03.80±0.42"));
    }

    #[test]
    fn mismatched_configs_rejected() {
        let mut b = record(2, 4, None);
        b.summary.config.alpha = 1.0;
        assert!(matches!(
            aggregate(&[record(1, 4, None), b]),
            Err(Error::Aggregation(_))
        ));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn json_round_trip_and_csv_shape() {
        let r = record(3, 5, Some(0.75));
        assert_eq!(RunRecord::from_json(&r.to_json().unwrap()).unwrap(), r);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().ends_with("0.5;0.5"));
    }
}
