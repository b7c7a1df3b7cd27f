//! The unified training loop: the encoder learns under clustering guidance
//! while the quality network learns which cluster number to pick.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{ari, kmeans_best, nmi, ClusterResult, KMeansConfig};
use crate::config::RunConfig;
use crate::encoder::{
    encode, encode_on_tape, init_encoder_with_hidden, EmbeddingState, EncoderParams,
};
use crate::error::{Error, Result};
use crate::graph::{laplacian_smooth, AttributedGraph, FilteredFeatures};
use crate::matrix::Matrix;
use crate::ndiff::{Adam, AdamConfig, Tape};
use crate::objectives::{encoder_loss_on_tape, LossParts};
use crate::record::{EpochEntry, RunRecord, RunSummary};
use crate::scalar::Real;

use super::policy::greedy_k;
use super::{
    init_quality, quality_forward, reward, select_action, train_quality, ClusterState, Experience,
    PolicySchedule, QualityNetworkParams, ReplayBuffer,
};

/// SplitMix64 of `seed` mixed with `stream`; independent sub-seeds for the
/// separate random consumers of one run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const ENCODER_STREAM: u64 = 1;
const QUALITY_STREAM: u64 = 2;
const POLICY_STREAM: u64 = 3;
const FINAL_STREAM: u64 = 4;
const KMEANS_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub record: RunRecord,
    pub encoder: EncoderParams<T>,
    /// Embedding after the last encoder step.
    pub embedding: EmbeddingState<T>,
    /// Clustering of `embedding` at the final cluster number.
    pub clustering: ClusterResult<T>,
    /// `None` for fixed-K runs.
    pub quality: Option<QualityNetworkParams<T>>,
}

struct Setup<T> {
    x: FilteredFeatures<T>,
    encoder: EncoderParams<T>,
    kmeans: KMeansConfig,
    optimizer: Adam<T>,
}

fn setup<T: Real>(g: &AttributedGraph<T>, cfg: &RunConfig) -> Result<Setup<T>> {
    cfg.validate_for(g)?;
    let x = laplacian_smooth(g, cfg.hops);
    let encoder = init_encoder_with_hidden(
        g.dim(),
        cfg.latent_dim,
        cfg.encoder_hidden,
        derive_seed(cfg.seed, ENCODER_STREAM),
    )?;
    Ok(Setup {
        x,
        encoder,
        kmeans: KMeansConfig {
            max_iters: cfg.kmeans_max_iters,
            restarts: cfg.kmeans_restarts,
        },
        optimizer: Adam::new(AdamConfig::with_lr(cfg.lr_encoder)),
    })
}

fn metrics(g_labels: Option<&[usize]>, assignment: &[usize]) -> Result<(Option<f64>, Option<f64>)> {
    match g_labels {
        Some(l) if l.len() >= 2 => Ok((Some(nmi(l, assignment)?), Some(ari(l, assignment)?))),
        _ => Ok((None, None)),
    }
}

/// One encoder step on `L_F` with the given centers.
fn encoder_step<T: Real>(
    s: &mut Setup<T>,
    tape: &mut Tape<T>,
    vars: &crate::encoder::EmbeddingVars,
    centers: &Matrix<T>,
    cfg: &RunConfig,
) -> Result<LossParts<T>> {
    let loss = encoder_loss_on_tape(
        tape,
        vars,
        centers,
        T::lit(cfg.alpha),
        T::lit(cfg.temperature),
    )?;
    let parts = loss.values(tape);
    s.encoder.params.zero_grad();
    tape.backward(loss.total, &mut s.encoder.params)?;
    s.optimizer.step(&mut s.encoder.params);
    Ok(parts)
}

fn check_finite<T: Real>(parts: &LossParts<T>) -> Result<()> {
    if parts.total.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            value: parts.total.as_f64(),
        })
    }
}

fn push_and_maybe_train<T: Real>(
    buffer: &mut ReplayBuffer<T>,
    q: &mut QualityNetworkParams<T>,
    e: Experience<T>,
    cfg: &RunConfig,
) -> Result<Option<f64>> {
    buffer.push(e)?;
    if !buffer.is_full() {
        return Ok(None);
    }
    let trace = train_quality(
        buffer,
        q,
        cfg.quality_epochs,
        cfg.lr_quality,
        T::lit(cfg.gamma),
    )?;
    Ok(trace.last().map(|v| v.as_f64()))
}

/// Trains encoder and controller together for `cfg.encoder_epochs` epochs.
///
/// Epoch `t` clusters the current embedding with the previous cluster
/// number to form the state, lets the policy choose `K̂_t`, re-clusters with
/// it, scores the reward on those centers, and takes one encoder step with
/// them. The transition from epoch `t − 1` is stored once the state of
/// epoch `t` exists. The final cluster number is the greedy choice at the
/// state after the last encoder step.
pub fn rgc_train<T: Real>(g: &AttributedGraph<T>, cfg: &RunConfig) -> Result<TrainOutcome<T>> {
    let mut s = setup(g, cfg)?;
    let mut q = init_quality::<T>(
        cfg.latent_dim,
        cfg.quality_hidden,
        cfg.max_k,
        derive_seed(cfg.seed, QUALITY_STREAM),
    )?;
    let schedule = PolicySchedule {
        epsilon_initial: cfg.epsilon_initial,
        epsilon_final: cfg.epsilon_final,
        total_epochs: cfg.encoder_epochs,
        discount: cfg.gamma,
    };
    schedule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, POLICY_STREAM));
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut k_prev = rng.random_range(2..=cfg.max_k);
    let mut pending: Option<(ClusterState<T>, usize, T)> = None;
    let mut entries = Vec::with_capacity(cfg.encoder_epochs);
    let mut quality_rounds = 0;

    for t in 0..cfg.encoder_epochs {
        let mut tape = Tape::new();
        let vars = encode_on_tape(&mut tape, &s.x, &s.encoder)?;
        let z = tape.value(vars.fused).clone();
        let km_seed = derive_seed(cfg.seed, KMEANS_STREAM_BASE + t as u64);
        let state_clusters = kmeans_best(&z, k_prev, km_seed, s.kmeans)?;
        let state = ClusterState {
            z: z.clone(),
            c: state_clusters.centers.clone(),
            epoch: t,
        };

        let mut quality_loss = None;
        if let Some((prev, action, r)) = pending.take() {
            let e = Experience {
                state: prev,
                action,
                next_state: state.clone(),
                reward: r,
            };
            quality_loss = push_and_maybe_train(&mut buffer, &mut q, e, cfg)?;
            quality_rounds += usize::from(quality_loss.is_some());
        }

        let qv = quality_forward(&state, &q)?;
        let k = select_action(&qv, &schedule, t, &mut rng)?;
        let action = if k == k_prev {
            state_clusters
        } else {
            kmeans_best(&z, k, km_seed, s.kmeans)?
        };
        let r = reward(&z, &action.centers)?;
        let parts = encoder_step(&mut s, &mut tape, &vars, &action.centers, cfg)?;
        check_finite(&parts)?;
        let (nmi_t, ari_t) = metrics(g.labels(), &action.assignment)?;

        entries.push(EpochEntry {
            epoch: t,
            epsilon: schedule.epsilon(t),
            k,
            reward: r.as_f64(),
            loss_total: parts.total.as_f64(),
            loss_contrastive: parts.contrastive.as_f64(),
            loss_clustering: parts.clustering.as_f64(),
            nmi: nmi_t,
            ari: ari_t,
            quality: qv.iter().map(|v| v.as_f64()).collect(),
            quality_loss,
        });
        pending = Some((state, k, r));
        k_prev = k;
    }

    let embedding = encode(&s.x, &s.encoder)?;
    let final_seed = derive_seed(cfg.seed, FINAL_STREAM);
    let last = kmeans_best(&embedding.fused, k_prev, final_seed, s.kmeans)?;
    let final_state = ClusterState {
        z: embedding.fused.clone(),
        c: last.centers.clone(),
        epoch: cfg.encoder_epochs,
    };
    if let Some((prev, action, r)) = pending.take() {
        let e = Experience {
            state: prev,
            action,
            next_state: final_state.clone(),
            reward: r,
        };
        if push_and_maybe_train(&mut buffer, &mut q, e, cfg)?.is_some() {
            quality_rounds += 1;
        }
    }
    let k_final = greedy_k(&quality_forward(&final_state, &q)?);
    let clustering = if k_final == k_prev {
        last
    } else {
        kmeans_best(&embedding.fused, k_final, final_seed, s.kmeans)?
    };
    let (nmi_f, ari_f) = metrics(g.labels(), &clustering.assignment)?;

    Ok(TrainOutcome {
        record: RunRecord {
            entries,
            summary: RunSummary {
                k_final,
                nmi: nmi_f,
                ari: ari_f,
                wss: clustering.wss.as_f64(),
                seed: cfg.seed,
                quality_rounds,
                config: cfg.clone(),
            },
        },
        encoder: s.encoder,
        embedding,
        clustering,
        quality: Some(q),
    })
}

/// The same encoder training with the controller switched off and the
/// cluster number held at `k`.
pub fn train_fixed_k<T: Real>(
    g: &AttributedGraph<T>,
    cfg: &RunConfig,
    k: usize,
) -> Result<TrainOutcome<T>> {
    if k < 1 || k > g.n() {
        return Err(Error::Argument(format!("k = {k} outside [1, {}]", g.n())));
    }
    let mut s = setup(g, cfg)?;
    let mut entries = Vec::with_capacity(cfg.encoder_epochs);
    for t in 0..cfg.encoder_epochs {
        let mut tape = Tape::new();
        let vars = encode_on_tape(&mut tape, &s.x, &s.encoder)?;
        let z = tape.value(vars.fused).clone();
        let km_seed = derive_seed(cfg.seed, KMEANS_STREAM_BASE + t as u64);
        let clusters = kmeans_best(&z, k, km_seed, s.kmeans)?;
        let r = reward(&z, &clusters.centers)?;
        let parts = encoder_step(&mut s, &mut tape, &vars, &clusters.centers, cfg)?;
        check_finite(&parts)?;
        let (nmi_t, ari_t) = metrics(g.labels(), &clusters.assignment)?;
        entries.push(EpochEntry {
            epoch: t,
            epsilon: 1.0,
            k,
            reward: r.as_f64(),
            loss_total: parts.total.as_f64(),
            loss_contrastive: parts.contrastive.as_f64(),
            loss_clustering: parts.clustering.as_f64(),
            nmi: nmi_t,
            ari: ari_t,
            quality: Vec::new(),
            quality_loss: None,
        });
    }
    let embedding = encode(&s.x, &s.encoder)?;
    let clustering = kmeans_best(
        &embedding.fused,
        k,
        derive_seed(cfg.seed, FINAL_STREAM),
        s.kmeans,
    )?;
    let (nmi_f, ari_f) = metrics(g.labels(), &clustering.assignment)?;
    Ok(TrainOutcome {
        record: RunRecord {
            entries,
            summary: RunSummary {
                k_final: k,
                nmi: nmi_f,
                ari: ari_f,
                wss: clustering.wss.as_f64(),
                seed: cfg.seed,
                quality_rounds: 0,
                config: cfg.clone(),
            },
        },
        encoder: s.encoder,
        embedding,
        clustering,
        quality: None,
    })
}
