use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::ndiff::{Adam, AdamConfig, Tape, Var};
use crate::scalar::Real;

use super::quality::{check_state, forward_stacked, quality_forward, Stacked};
use super::{ClusterState, QualityNetworkParams};

/// One transition `(S_t, K̂_t, S_{t+1}, R_t)`; `action` is the cluster number itself.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience<T> {
    pub state: ClusterState<T>,
    pub action: usize,
    pub next_state: ClusterState<T>,
    pub reward: T,
}

/// Fixed-capacity collection window. Trained on as a whole, then cleared.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<Experience<T>>,
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn push(&mut self, e: Experience<T>) -> Result<()> {
        if e.action < 2 || !e.reward.is_finite() {
            return Err(Error::Argument(format!(
                "invalid experience: action {}, reward {}",
                e.action, e.reward
            )));
        }
        self.items.push(e);
        Ok(())
    }

    pub fn experiences(&self) -> &[Experience<T>] {
        &self.items
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

/// The pieces of one squared TD error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdTerm<T> {
    pub reward: T,
    /// Quality of the taken action at `S_t`.
    pub taken: T,
    /// Best quality at `S_{t+1}`.
    pub best_next: T,
}

/// Mean of `(reward + gamma · best_next − taken)²`.
pub fn td_loss<T: Real>(terms: &[TdTerm<T>], gamma: T) -> Result<T> {
    if terms.is_empty() {
        return Err(Error::Argument("empty experience buffer".into()));
    }
    let sum: T = terms
        .iter()
        .map(|t| {
            let e = t.reward + gamma * t.best_next - t.taken;
            e * e
        })
        .sum();
    Ok(sum / T::from_count(terms.len()))
}

fn action_index<T: Real>(e: &Experience<T>, q: &QualityNetworkParams<T>) -> Result<usize> {
    if e.action < 2 || e.action > q.max_k() {
        return Err(Error::Argument(format!(
            "action {} outside [2, {}]",
            e.action,
            q.max_k()
        )));
    }
    Ok(e.action - 2)
}

fn max_of<T: Real>(v: &[T]) -> T {
    v.iter().copied().fold(T::neg_infinity(), T::max)
}

/// The replay buffer laid out for batched forward passes: every distinct
/// state once, stacked, with the row of each experience's next state.
struct ReplayBatch<T> {
    z: Stacked<T>,
    c: Stacked<T>,
    next_row: Vec<usize>,
    picks: Vec<(usize, usize)>,
    rewards: Vec<T>,
}

impl<T: Real> ReplayBatch<T> {
    fn new(experiences: &[Experience<T>], q: &QualityNetworkParams<T>) -> Result<Self> {
        if experiences.is_empty() {
            return Err(Error::Argument("empty experience buffer".into()));
        }
        // consecutive transitions share a state: row i holds S_i, extra rows
        // hold next states that do not reappear as the following S
        let mut states: Vec<&ClusterState<T>> = experiences.iter().map(|e| &e.state).collect();
        let mut next_row = Vec::with_capacity(experiences.len());
        for (i, e) in experiences.iter().enumerate() {
            match experiences.get(i + 1) {
                Some(next) if next.state == e.next_state => next_row.push(i + 1),
                _ => {
                    next_row.push(states.len());
                    states.push(&e.next_state);
                }
            }
        }
        for s in &states {
            check_state(s, q)?;
        }
        let picks = experiences
            .iter()
            .enumerate()
            .map(|(i, e)| Ok((i, action_index(e, q)?)))
            .collect::<Result<Vec<_>>>()?;
        let zs: Vec<&Matrix<T>> = states.iter().map(|s| &s.z).collect();
        let cs: Vec<&Matrix<T>> = states.iter().map(|s| &s.c).collect();
        Ok(Self {
            z: Stacked::new(&zs)?,
            c: Stacked::new(&cs)?,
            next_row,
            picks,
            rewards: experiences.iter().map(|e| e.reward).collect(),
        })
    }

    fn loss_on_tape(
        &self,
        tape: &mut Tape<T>,
        q: &QualityNetworkParams<T>,
        gamma: T,
    ) -> Result<Var> {
        let out = forward_stacked(tape, &self.z, &self.c, q)?;
        let values = tape.value(out);
        let targets: Vec<T> = self
            .rewards
            .iter()
            .zip(&self.next_row)
            .map(|(&r, &row)| r + gamma * max_of(values.row(row)))
            .collect();
        let taken = tape.gather(out, &self.picks)?;
        let target = Matrix::from_vec(1, targets.len(), targets)?;
        tape.mse_to(taken, &target)
    }
}

/// Records the replay loss on `tape`. TD targets are computed from the
/// current network and enter as constants.
pub fn q_loss_on_tape<T: Real>(
    tape: &mut Tape<T>,
    experiences: &[Experience<T>],
    q: &QualityNetworkParams<T>,
    gamma: T,
) -> Result<Var> {
    ReplayBatch::new(experiences, q)?.loss_on_tape(tape, q, gamma)
}

/// Mean squared TD error of the network over `experiences`.
pub fn q_loss<T: Real>(
    experiences: &[Experience<T>],
    q: &QualityNetworkParams<T>,
    gamma: T,
) -> Result<T> {
    let mut terms = Vec::with_capacity(experiences.len());
    for e in experiences {
        let now = quality_forward(&e.state, q)?;
        let next = quality_forward(&e.next_state, q)?;
        terms.push(TdTerm {
            reward: e.reward,
            taken: now[action_index(e, q)?],
            best_next: max_of(&next),
        });
    }
    td_loss(&terms, gamma)
}

/// Runs `epochs` full-buffer Adam steps on the replay loss and clears the
/// buffer. Returns the loss measured before each step.
pub fn train_quality<T: Real>(
    buffer: &mut ReplayBuffer<T>,
    q: &mut QualityNetworkParams<T>,
    epochs: usize,
    lr: f64,
    gamma: T,
) -> Result<Vec<T>> {
    let mut trace = Vec::with_capacity(epochs);
    if epochs > 0 {
        let batch = ReplayBatch::new(buffer.experiences(), q)?;
        let mut opt = Adam::new(AdamConfig::with_lr(lr));
        for _ in 0..epochs {
            let mut tape = Tape::new();
            let loss = batch.loss_on_tape(&mut tape, q, gamma)?;
            trace.push(tape.value(loss).item());
            q.params.zero_grad();
            tape.backward(loss, &mut q.params)?;
            opt.step(&mut q.params);
        }
    }
    buffer.clear();
    Ok(trace)
}
