use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Greedy-probability schedule and discount factor.
///
/// The greedy branch is taken with probability `epsilon(t)`, which rises
/// linearly from `epsilon_initial` at epoch 0 to `epsilon_final` at epoch
/// `total_epochs − 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySchedule {
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    pub total_epochs: usize,
    pub discount: f64,
}

impl PolicySchedule {
    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.epsilon_initial) || !unit.contains(&self.epsilon_final) {
            return Err(Error::Argument("epsilon values must lie in [0, 1]".into()));
        }
        if self.epsilon_final < self.epsilon_initial {
            return Err(Error::Argument(
                "epsilon_final must be >= epsilon_initial".into(),
            ));
        }
        if !unit.contains(&self.discount) {
            return Err(Error::Argument("discount must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, epoch: usize) -> f64 {
        if self.total_epochs <= 1 {
            return self.epsilon_initial;
        }
        let frac = (epoch as f64 / (self.total_epochs - 1) as f64).min(1.0);
        self.epsilon_initial + (self.epsilon_final - self.epsilon_initial) * frac
    }
}

fn argmax<T: Real>(q: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate() {
        // strict: the smallest index wins ties
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// Cluster number for action index `a`.
pub(crate) const fn action_to_k(a: usize) -> usize {
    a + 2
}

pub(crate) fn greedy_k<T: Real>(q: &[T]) -> usize {
    action_to_k(argmax(q))
}

/// With probability `epsilon` returns the cluster number of the best
/// quality entry (smallest on ties), otherwise a uniform draw from
/// `[2, q.len() + 1]`.
pub fn select_action_with<T: Real, R: Rng + ?Sized>(
    q: &[T],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if q.is_empty() {
        return Err(Error::Argument("empty quality vector".into()));
    }
    if rng.random::<f64>() < epsilon {
        Ok(greedy_k(q))
    } else {
        Ok(action_to_k(rng.random_range(0..q.len())))
    }
}

pub fn select_action<T: Real, R: Rng + ?Sized>(
    q: &[T],
    schedule: &PolicySchedule,
    epoch: usize,
    rng: &mut R,
) -> Result<usize> {
    select_action_with(q, schedule.epsilon(epoch), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schedule_is_linear() {
        let s = PolicySchedule {
            epsilon_initial: 0.5,
            epsilon_final: 1.0,
            total_epochs: 101,
            discount: 0.1,
        };
        assert_eq!(s.epsilon(0), 0.5);
        assert!((s.epsilon(50) - 0.75).abs() < 1e-15);
        assert_eq!(s.epsilon(100), 1.0);
        assert_eq!(s.epsilon(500), 1.0);
        assert!(s.validate().is_ok());
        assert!(PolicySchedule { discount: 1.5, ..s }.validate().is_err());
    }

    #[test]
    fn fully_greedy_picks_first_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = [0.1, 0.3, 0.3, 0.2];
        for _ in 0..100 {
            assert_eq!(select_action_with(&q, 1.0, &mut rng).unwrap(), 3);
        }
        assert!(select_action_with::<f64, _>(&[], 1.0, &mut rng).is_err());
    }
}
