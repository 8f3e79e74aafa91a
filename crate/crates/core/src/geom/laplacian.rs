use crate::mesh::Topology;
use crate::scalar::Real;
use crate::vec3::Vec3;

/// Cotangent operator `(Lu)_i = Σ_j w_ij (u_j − u_i)` with
/// `w_ij = ½(cot α_ij + cot β_ij)`, stored row-wise over the one-rings.
///
/// `L` is symmetric and negative semi-definite on closed meshes, with the
/// constants as its kernel on each component.
#[derive(Clone, Debug)]
pub struct CotanLaplacian<T> {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<T>,
}

impl<T: Real> CotanLaplacian<T> {
    /// Assembles from per-face corner cotangents (`cot[f][k]` is the angle at
    /// corner `k` of face `f`).
    pub(crate) fn assemble(topo: &Topology, cot: &[[T; 3]], n: usize) -> Self {
        let mut edge_w = vec![T::zero(); topo.edges.len()];
        for (fi, edges) in topo.face_edges.iter().enumerate() {
            // face_edges[f][k] joins corners k and k+1; corner k+2 is opposite.
            for k in 0..3 {
                edge_w[edges[k]] += T::cst(0.5) * cot[fi][(k + 2) % 3];
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut cols = Vec::with_capacity(2 * topo.edges.len());
        for v in 0..n {
            cols.extend_from_slice(topo.neighbors(v));
            offsets.push(cols.len());
        }
        let mut weights = vec![T::zero(); cols.len()];
        for (e, &[a, b]) in topo.edges.iter().enumerate() {
            let ia = offsets[a] + cols[offsets[a]..offsets[a + 1]].binary_search(&b).expect("edge in one-ring");
            let ib = offsets[b] + cols[offsets[b]..offsets[b + 1]].binary_search(&a).expect("edge in one-ring");
            weights[ia] = edge_w[e];
            weights[ib] = edge_w[e];
        }
        Self { offsets, cols, weights }
    }

    pub fn n(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Neighbours and weights of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.offsets[i]..self.offsets[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.weights[r].iter().copied())
    }

    /// Diagonal entry `−Σ_j w_ij`.
    pub fn diagonal(&self, i: usize) -> T {
        -self.row(i).fold(T::zero(), |acc, (_, w)| acc + w)
    }

    pub fn apply(&self, u: &[T]) -> Vec<T> {
        assert_eq!(u.len(), self.n());
        (0..self.n())
            .map(|i| self.row(i).fold(T::zero(), |acc, (j, w)| acc + w * (u[j] - u[i])))
            .collect()
    }

    pub fn apply_vec3(&self, u: &[Vec3<T>]) -> Vec<Vec3<T>> {
        assert_eq!(u.len(), self.n());
        (0..self.n())
            .map(|i| self.row(i).fold(Vec3::zero(), |acc, (j, w)| acc + (u[j] - u[i]) * w))
            .collect()
    }

    /// Σ_j L_ij² for every row, including the diagonal.
    pub fn row_norms_squared(&self) -> Vec<T> {
        (0..self.n())
            .map(|i| {
                let d = self.diagonal(i);
                self.row(i).fold(d * d, |acc, (_, w)| acc + w * w)
            })
            .collect()
    }
}
