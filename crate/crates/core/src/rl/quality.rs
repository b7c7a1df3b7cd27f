use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ndiff::{fan_in_uniform, ParamId, ParamSet, Tape, Var};
use crate::scalar::Real;

use super::ClusterState;

/// Variance floor of the per-row standardization.
pub const NORM_EPS: f64 = 1e-8;

/// Quality network: node and cluster projections (`d × h`, no bias), each
/// followed by row standardization and relu, mean-pooled over rows,
/// concatenated, and mapped by a `2h × (N_K − 1)` output layer to a softmax
/// over cluster numbers `2..=N_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityNetworkParams<T> {
    pub params: ParamSet<T>,
    lin_z: ParamId,
    lin_c: ParamId,
    lin_out: ParamId,
    latent_dim: usize,
    hidden_dim: usize,
    max_k: usize,
}

impl<T: Real> QualityNetworkParams<T> {
    pub fn from_weights(lin_z: Matrix<T>, lin_c: Matrix<T>, lin_out: Matrix<T>) -> Result<Self> {
        let (d, h) = lin_z.shape();
        if lin_c.shape() != (d, h) || lin_out.rows() != 2 * h || lin_out.cols() == 0 {
            return Err(Error::dim(
                "quality network",
                format!(
                    "lin_z {:?}, lin_c {:?}, lin_out {:?}",
                    lin_z.shape(),
                    lin_c.shape(),
                    lin_out.shape()
                ),
            ));
        }
        let max_k = lin_out.cols() + 1;
        let mut params = ParamSet::new();
        let lin_z = params.insert("lin_z", lin_z);
        let lin_c = params.insert("lin_c", lin_c);
        let lin_out = params.insert("lin_out", lin_out);
        Ok(Self {
            params,
            lin_z,
            lin_c,
            lin_out,
            latent_dim: d,
            hidden_dim: h,
            max_k,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Largest selectable cluster number `N_K`.
    pub fn max_k(&self) -> usize {
        self.max_k
    }

    /// Number of actions, `N_K − 1`.
    pub fn actions(&self) -> usize {
        self.max_k - 1
    }

    pub fn lin_out_weight(&self) -> &Matrix<T> {
        self.params.value(self.lin_out)
    }

    pub fn lin_out_weight_mut(&mut self) -> &mut Matrix<T> {
        self.params.value_mut(self.lin_out)
    }
}

pub fn init_quality<T: Real>(
    latent_dim: usize,
    hidden_dim: usize,
    max_k: usize,
    seed: u64,
) -> Result<QualityNetworkParams<T>> {
    if latent_dim == 0 || hidden_dim == 0 {
        return Err(Error::Argument(
            "quality network dimensions must be >= 1".into(),
        ));
    }
    if max_k < 2 {
        return Err(Error::Argument(format!("max_k = {max_k} must be >= 2")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lin_z = fan_in_uniform(latent_dim, hidden_dim, &mut rng);
    let lin_c = fan_in_uniform(latent_dim, hidden_dim, &mut rng);
    let lin_out = fan_in_uniform(2 * hidden_dim, max_k - 1, &mut rng);
    QualityNetworkParams::from_weights(lin_z, lin_c, lin_out)
}

/// Row blocks of several matrices stacked into one, kept with the block
/// lengths.
#[derive(Debug, Clone)]
pub(crate) struct Stacked<T> {
    pub(crate) rows: Rc<Matrix<T>>,
    pub(crate) lens: Vec<usize>,
}

impl<T: Real> Stacked<T> {
    pub(crate) fn new(blocks: &[&Matrix<T>]) -> Result<Self> {
        Ok(Self {
            rows: Rc::new(Matrix::vstack(blocks)?),
            lens: blocks.iter().map(|b| b.rows()).collect(),
        })
    }
}

fn branch<T: Real>(
    tape: &mut Tape<T>,
    x: &Stacked<T>,
    params: &ParamSet<T>,
    w: ParamId,
) -> Result<Var> {
    let w = tape.param(params, w);
    let h = tape.matmul_shared(Rc::clone(&x.rows), w)?;
    let h = tape.row_standardize(h, T::lit(NORM_EPS))?;
    let h = tape.relu(h)?;
    tape.segment_mean_rows(h, &x.lens)
}

pub(crate) fn check_state<T: Real>(
    state: &ClusterState<T>,
    q: &QualityNetworkParams<T>,
) -> Result<()> {
    if state.z.cols() != q.latent_dim
        || state.c.cols() != q.latent_dim
        || state.z.rows() == 0
        || state.c.rows() == 0
    {
        return Err(Error::dim(
            "quality_forward",
            format!(
                "state dims z {:?}, c {:?}, network expects {}",
                state.z.shape(),
                state.c.shape(),
                q.latent_dim
            ),
        ));
    }
    Ok(())
}

/// Forward pass over pre-stacked node and cluster states.
pub(crate) fn forward_stacked<T: Real>(
    tape: &mut Tape<T>,
    z: &Stacked<T>,
    c: &Stacked<T>,
    q: &QualityNetworkParams<T>,
) -> Result<Var> {
    let z = branch(tape, z, &q.params, q.lin_z)?;
    let c = branch(tape, c, &q.params, q.lin_c)?;
    let o = tape.concat_rows(z, c)?;
    let w = tape.param(&q.params, q.lin_out);
    let logits = tape.matmul(o, w)?;
    tape.softmax_rows(logits)
}

/// Records the quality vectors of several states on `tape` in one pass;
/// row `i` of the result (`B × (N_K − 1)`) belongs to `states[i]`.
pub fn quality_forward_batch_on_tape<T: Real>(
    tape: &mut Tape<T>,
    states: &[&ClusterState<T>],
    q: &QualityNetworkParams<T>,
) -> Result<Var> {
    if states.is_empty() {
        return Err(Error::Argument("no states to score".into()));
    }
    for state in states {
        check_state(state, q)?;
    }
    let zs: Vec<&Matrix<T>> = states.iter().map(|s| &s.z).collect();
    let cs: Vec<&Matrix<T>> = states.iter().map(|s| &s.c).collect();
    forward_stacked(tape, &Stacked::new(&zs)?, &Stacked::new(&cs)?, q)
}

/// Records the quality vector (`1 × (N_K − 1)`) of `state` on `tape`.
pub fn quality_forward_on_tape<T: Real>(
    tape: &mut Tape<T>,
    state: &ClusterState<T>,
    q: &QualityNetworkParams<T>,
) -> Result<Var> {
    quality_forward_batch_on_tape(tape, &[state], q)
}

pub fn quality_forward<T: Real>(
    state: &ClusterState<T>,
    q: &QualityNetworkParams<T>,
) -> Result<Vec<T>> {
    let mut tape = Tape::new();
    let out = quality_forward_on_tape(&mut tape, state, q)?;
    Ok(tape.value(out).as_slice().to_vec())
}
