//! Two-view linear encoder.
//!
//! Each view maps the smoothed features through its own weights and
//! normalizes rows to unit length; the node embedding is the average of
//! the two views.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::FilteredFeatures;
use crate::matrix::Matrix;
use crate::ndiff::{fan_in_uniform, ParamId, ParamSet, Tape, Var};
use crate::scalar::Real;

/// Weights of both views. With `hidden_dim = None` each view is a single
/// bias-free `D × d` linear map; otherwise `D × h → relu → h × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub params: ParamSet<T>,
    view1: Vec<ParamId>,
    view2: Vec<ParamId>,
    input_dim: usize,
    latent_dim: usize,
    hidden_dim: Option<usize>,
}

impl<T: Real> EncoderParams<T> {
    /// Builds single-layer parameters from explicit weights.
    pub fn from_weights(lin1: Matrix<T>, lin2: Matrix<T>) -> Result<Self> {
        if lin1.shape() != lin2.shape() {
            return Err(Error::dim(
                "encoder",
                format!("view weights {:?} vs {:?}", lin1.shape(), lin2.shape()),
            ));
        }
        let (input_dim, latent_dim) = lin1.shape();
        let mut params = ParamSet::new();
        let a = params.insert("lin1", lin1);
        let b = params.insert("lin2", lin2);
        Ok(Self {
            params,
            view1: vec![a],
            view2: vec![b],
            input_dim,
            latent_dim,
            hidden_dim: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        self.hidden_dim
    }

    /// First-layer weights of view 1.
    pub fn lin1_weight(&self) -> &Matrix<T> {
        self.params.value(self.view1[0])
    }

    /// First-layer weights of view 2.
    pub fn lin2_weight(&self) -> &Matrix<T> {
        self.params.value(self.view2[0])
    }
}

pub fn init_encoder<T: Real>(
    input_dim: usize,
    latent_dim: usize,
    seed: u64,
) -> Result<EncoderParams<T>> {
    init_encoder_with_hidden(input_dim, latent_dim, None, seed)
}

/// Draws both views from one seeded stream, view 1 first, so the views are
/// independent but reproducible.
pub fn init_encoder_with_hidden<T: Real>(
    input_dim: usize,
    latent_dim: usize,
    hidden_dim: Option<usize>,
    seed: u64,
) -> Result<EncoderParams<T>> {
    if input_dim == 0 || latent_dim == 0 || hidden_dim == Some(0) {
        return Err(Error::Argument("encoder dimensions must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let mut views = [Vec::new(), Vec::new()];
    for (v, ids) in views.iter_mut().enumerate() {
        let name = format!("lin{}", v + 1);
        match hidden_dim {
            None => ids.push(params.insert(name, fan_in_uniform(input_dim, latent_dim, &mut rng))),
            Some(h) => {
                ids.push(
                    params.insert(format!("{name}.0"), fan_in_uniform(input_dim, h, &mut rng)),
                );
                ids.push(
                    params.insert(format!("{name}.1"), fan_in_uniform(h, latent_dim, &mut rng)),
                );
            }
        }
    }
    let [view1, view2] = views;
    Ok(EncoderParams {
        params,
        view1,
        view2,
        input_dim,
        latent_dim,
        hidden_dim,
    })
}

/// Embedding matrices of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState<T> {
    pub view1: Matrix<T>,
    pub view2: Matrix<T>,
    pub fused: Matrix<T>,
}

/// Tape handles for the embeddings, for building losses on top.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingVars {
    pub view1: Var,
    pub view2: Var,
    pub fused: Var,
}

impl EmbeddingVars {
    pub fn values<T: Real>(&self, tape: &Tape<T>) -> EmbeddingState<T> {
        EmbeddingState {
            view1: tape.value(self.view1).clone(),
            view2: tape.value(self.view2).clone(),
            fused: tape.value(self.fused).clone(),
        }
    }
}

fn view_forward<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    params: &ParamSet<T>,
    layers: &[ParamId],
) -> Result<Var> {
    let mut h = x;
    for (i, &id) in layers.iter().enumerate() {
        let w = tape.param(params, id);
        h = tape.matmul(h, w)?;
        if i + 1 < layers.len() {
            h = tape.relu(h)?;
        }
    }
    tape.row_l2_normalize(h)
}

/// Records the encoder forward pass on `tape` with gradients flowing to `params`.
pub fn encode_on_tape<T: Real>(
    tape: &mut Tape<T>,
    x: &FilteredFeatures<T>,
    params: &EncoderParams<T>,
) -> Result<EmbeddingVars> {
    if x.matrix.cols() != params.input_dim {
        return Err(Error::dim(
            "encode",
            format!(
                "{} feature columns, encoder expects {}",
                x.matrix.cols(),
                params.input_dim
            ),
        ));
    }
    let input = tape.constant(x.matrix.clone());
    let view1 = view_forward(tape, input, &params.params, &params.view1)?;
    let view2 = view_forward(tape, input, &params.params, &params.view2)?;
    let sum = tape.add(view1, view2)?;
    let fused = tape.scale(sum, T::lit(0.5))?;
    Ok(EmbeddingVars {
        view1,
        view2,
        fused,
    })
}

/// Forward pass without gradient bookkeeping beyond a throwaway tape.
pub fn encode<T: Real>(
    x: &FilteredFeatures<T>,
    params: &EncoderParams<T>,
) -> Result<EmbeddingState<T>> {
    let mut tape = Tape::new();
    let vars = encode_on_tape(&mut tape, x, params)?;
    Ok(vars.values(&tape))
}
