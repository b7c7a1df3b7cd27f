//! Encoder training objective: two-view infoNCE plus a DEC-style
//! clustering-guidance term.

use crate::encoder::{EmbeddingState, EmbeddingVars};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ndiff::{Tape, Var};
use crate::scalar::Real;

/// Soft cluster assignment `g` and its sharpened target `h`, both `N × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment<T> {
    pub g: Matrix<T>,
    pub h: Matrix<T>,
}

impl<T: Real> SoftAssignment<T> {
    pub fn from_g(g: Matrix<T>) -> Self {
        let h = target_distribution(&g);
        Self { g, h }
    }
}

/// Values of the three loss terms from one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub total: T,
    pub contrastive: T,
    pub clustering: T,
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub contrastive: Var,
    pub clustering: Var,
}

impl LossVars {
    pub fn values<T: Real>(&self, tape: &Tape<T>) -> LossParts<T> {
        LossParts {
            total: tape.value(self.total).item(),
            contrastive: tape.value(self.contrastive).item(),
            clustering: tape.value(self.clustering).item(),
        }
    }
}

pub fn contrastive_loss<T: Real>(emb: &EmbeddingState<T>, temperature: T) -> Result<T> {
    let mut tape = Tape::new();
    let a = tape.constant(emb.view1.clone());
    let b = tape.constant(emb.view2.clone());
    let l = tape.info_nce(a, b, temperature)?;
    Ok(tape.value(l).item())
}

/// `G_ij ∝ (1 + ‖z_i − c_j‖²)^{-1}`, each row normalized to 1.
pub fn cluster_distribution<T: Real>(fused: &Matrix<T>, centers: &Matrix<T>) -> Result<Matrix<T>> {
    let mut tape = Tape::new();
    let z = tape.constant(fused.clone());
    let c = tape.constant(centers.clone());
    let g = tape.student_t(z, c)?;
    Ok(tape.value(g).clone())
}

/// Sharpened target: `H_ij ∝ G_ij² / f_j` with soft column mass
/// `f_j = Σ_i G_ij`, each row normalized to 1.
pub fn target_distribution<T: Real>(g: &Matrix<T>) -> Matrix<T> {
    let (n, k) = g.shape();
    let mut freq = vec![T::zero(); k];
    for row in g.row_iter() {
        for (f, &v) in freq.iter_mut().zip(row) {
            *f += v;
        }
    }
    let mut h = Matrix::zeros(n, k);
    for i in 0..n {
        let out = h.row_mut(i);
        for j in 0..k {
            let gij = g[(i, j)];
            out[j] = if freq[j] > T::zero() {
                gij * gij / freq[j]
            } else {
                T::zero()
            };
        }
        let s: T = out.iter().copied().sum();
        if s > T::zero() {
            out.iter_mut().for_each(|v| *v /= s);
        }
    }
    h
}

/// `KL(G ‖ H) = Σ G log(G / H)`.
pub fn clustering_loss<T: Real>(s: &SoftAssignment<T>) -> Result<T> {
    let mut tape = Tape::new();
    let g = tape.constant(s.g.clone());
    let l = tape.kl_to_fixed(g, &s.h)?;
    Ok(tape.value(l).item())
}

/// Records `L_con + alpha · KL(G ‖ H)` on the tape. `centers` and the
/// target `H` are constants; gradients reach the encoder through both views
/// and through `G`.
pub fn encoder_loss_on_tape<T: Real>(
    tape: &mut Tape<T>,
    emb: &EmbeddingVars,
    centers: &Matrix<T>,
    alpha: T,
    temperature: T,
) -> Result<LossVars> {
    if alpha < T::zero() {
        return Err(Error::Argument("alpha must be >= 0".into()));
    }
    let contrastive = tape.info_nce(emb.view1, emb.view2, temperature)?;
    let c = tape.constant(centers.clone());
    let g = tape.student_t(emb.fused, c)?;
    let h = target_distribution(tape.value(g));
    let clustering = tape.kl_to_fixed(g, &h)?;
    let weighted = tape.scale(clustering, alpha)?;
    let total = tape.add(contrastive, weighted)?;
    Ok(LossVars {
        total,
        contrastive,
        clustering,
    })
}

pub fn encoder_loss<T: Real>(
    emb: &EmbeddingState<T>,
    centers: &Matrix<T>,
    alpha: T,
    temperature: T,
) -> Result<LossParts<T>> {
    let mut tape = Tape::new();
    let vars = EmbeddingVars {
        view1: tape.constant(emb.view1.clone()),
        view2: tape.constant(emb.view2.clone()),
        fused: tape.constant(emb.fused.clone()),
    };
    let l = encoder_loss_on_tape(&mut tape, &vars, centers, alpha, temperature)?;
    Ok(l.values(&tape))
}
