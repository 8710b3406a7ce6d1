use super::{axpy, dot, norm};
use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Relative rank tolerance used when realizing a data subspace.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// An orthonormal basis of a subspace of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    ambient_dim: usize,
    basis: Vec<Vec<f64>>,
}

impl Subspace {
    pub fn empty(ambient_dim: usize) -> Self {
        Self {
            ambient_dim,
            basis: Vec::new(),
        }
    }

    /// The span of the first `k` coordinate axes.
    pub fn coordinate(ambient_dim: usize, k: usize) -> Self {
        let basis = (0..k.min(ambient_dim))
            .map(|i| {
                let mut e = vec![0.0; ambient_dim];
                e[i] = 1.0;
                e
            })
            .collect();
        Self { ambient_dim, basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.ambient_dim {
            return Err(Error::invalid(format!(
                "vector of length {} in a subspace of R^{}",
                v.len(),
                self.ambient_dim
            )));
        }
        Ok(())
    }

    /// Orthogonal projection onto the subspace.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut out = vec![0.0; self.ambient_dim];
        for b in &self.basis {
            axpy(dot(b, v), b, &mut out);
        }
        Ok(out)
    }

    /// Projection onto the orthogonal complement, `v - project(v)`.
    pub fn project_complement(&self, v: &[f64]) -> Result<Vec<f64>> {
        let p = self.project(v)?;
        Ok(v.iter().zip(&p).map(|(a, b)| a - b).collect())
    }

    /// Coordinates of the projection of `v` in this basis, i.e. `Bᵀv`.
    pub fn coordinates(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        Ok(self.basis.iter().map(|b| dot(b, v)).collect())
    }

    /// The projector `B·Bᵀ` as a dense `d x d` matrix.
    pub fn projector(&self) -> Matrix {
        let d = self.ambient_dim;
        let mut p = Matrix::zeros(d, d);
        for b in &self.basis {
            for i in 0..d {
                for j in 0..d {
                    p.set(i, j, p.get(i, j) + b[i] * b[j]);
                }
            }
        }
        p
    }

    /// Basis vectors as the columns of a `d x k` matrix.
    pub fn basis_matrix(&self) -> Matrix {
        let (d, k) = (self.ambient_dim, self.basis.len());
        let mut m = Matrix::zeros(d, k);
        for (j, b) in self.basis.iter().enumerate() {
            for i in 0..d {
                m.set(i, j, b[i]);
            }
        }
        m
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.ambient_dim
    }
}

/// Orthonormalizes `vectors` by modified Gram-Schmidt with a second
/// re-orthogonalization pass. A vector whose residual norm falls below
/// `rank_tol * max_i ||v_i||` is dropped.
///
/// The ambient dimension is taken from the inputs; an empty input yields an
/// empty subspace of `R^0`. Use [`orthonormalize_in`] to fix the dimension.
pub fn orthonormalize(vectors: &[Vec<f64>], rank_tol: f64) -> Result<Subspace> {
    let d = vectors.first().map_or(0, Vec::len);
    orthonormalize_in(d, vectors, rank_tol)
}

pub fn orthonormalize_in(
    ambient_dim: usize,
    vectors: &[Vec<f64>],
    rank_tol: f64,
) -> Result<Subspace> {
    if !(rank_tol > 0.0) {
        return Err(Error::invalid("rank tolerance must be positive"));
    }
    let mut largest = 0.0f64;
    for v in vectors {
        if v.len() != ambient_dim {
            return Err(Error::invalid("vectors must share the ambient dimension"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite entry in orthonormalize input"));
        }
        largest = largest.max(norm(v));
    }
    let cutoff = rank_tol * largest;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        if basis.len() == ambient_dim {
            break;
        }
        let mut r = v.clone();
        for _pass in 0..2 {
            for b in &basis {
                let c = dot(b, &r);
                axpy(-c, b, &mut r);
            }
        }
        let nr = norm(&r);
        if nr > cutoff && nr > 0.0 {
            r.iter_mut().for_each(|x| *x /= nr);
            basis.push(r);
        }
    }
    Ok(Subspace { ambient_dim, basis })
}
