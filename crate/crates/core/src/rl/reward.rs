use crate::error::{Error, Result};
use crate::matrix::{dist, Matrix};
use crate::scalar::Real;

/// Cohesion/separation reward with Euclidean distance:
///
/// `R = −(1/N) Σ_i min_j ‖z_i − c_j‖ + (1/K²) Σ_i Σ_j ‖c_i − c_j‖`.
pub fn reward<T: Real>(z: &Matrix<T>, centers: &Matrix<T>) -> Result<T> {
    let k = centers.rows();
    if k == 0 || z.rows() == 0 || z.cols() != centers.cols() {
        return Err(Error::dim(
            "reward",
            format!("points {:?}, centers {:?}", z.shape(), centers.shape()),
        ));
    }
    let cohesion = z
        .row_iter()
        .map(|p| {
            centers
                .row_iter()
                .map(|c| dist(p, c))
                .fold(T::infinity(), T::min)
        })
        .sum::<T>()
        / T::from_count(z.rows());
    let mut separation = T::zero();
    for i in 0..k {
        for j in 0..k {
            if i != j {
                separation += dist(centers.row(i), centers.row(j));
            }
        }
    }
    let kk = T::from_count(k * k);
    Ok(separation / kk - cohesion)
}
