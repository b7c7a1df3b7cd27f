use crate::matrix::Matrix;

/// Node embeddings `z` (`N × d`) together with the centers `c` (`K × d`)
/// of their most recent clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState<T> {
    pub z: Matrix<T>,
    pub c: Matrix<T>,
    pub epoch: usize,
}
