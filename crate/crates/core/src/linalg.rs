//! Dense symmetric-matrix primitives: upper Cholesky factorization,
//! positive-definite inversion, symmetric permutation and Bartlett-style
//! Wishart draws.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};

use crate::error::{Error, Result};

/// Dense symmetric real matrix. Symmetry is maintained by construction; the
/// operations in this module treat the full storage as authoritative and
/// re-symmetrize where roundoff could break it.
pub type SymMatrix = DMatrix<f64>;

/// A Cholesky factor diagonal entry below this is treated as a failed
/// positive-definiteness check.
pub const MIN_CHOL_DIAG: f64 = 1e-12;

/// Upper-triangular Cholesky factor `U` with `UᵀU = A` and strictly positive
/// diagonal.
#[derive(Debug, Clone)]
pub struct UpperCholesky {
    factor: DMatrix<f64>,
}

impl UpperCholesky {
    /// The upper-triangular factor.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// Log-determinant of the factored matrix: `2 Σ ln U_kk`.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|k| self.factor[(k, k)].ln()).sum::<f64>() * 2.0
    }

    /// Solves `A x = b` using the factorization (`UᵀU x = b`).
    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        solve_lower_in_place(&self.factor, &mut x); // Uᵀ y = b
        solve_upper_in_place(&self.factor, &mut x); // U x = y
        x
    }
}

/// Factors a symmetric positive-definite matrix as `A = UᵀU`.
pub fn cholesky_upper(a: &SymMatrix) -> Result<UpperCholesky> {
    let mut factor = a.clone();
    chol_upper_in_place(&mut factor)?;
    Ok(UpperCholesky { factor })
}

/// In-place upper Cholesky on the full storage of `a`: on success the upper
/// triangle holds `U` and the strict lower triangle is zeroed. Fails with the
/// 1-based index of the first non-positive leading minor.
pub fn chol_upper_in_place(a: &mut DMatrix<f64>) -> Result<()> {
    let p = a.nrows();
    debug_assert_eq!(p, a.ncols());
    let buf = a.as_mut_slice(); // column-major
    for j in 0..p {
        let (head, colj) = buf.split_at_mut(j * p);
        let colj = &mut colj[..p];
        for i in 0..j {
            let coli = &head[i * p..i * p + i];
            let s: f64 = coli.iter().zip(colj.iter()).map(|(a, b)| a * b).sum();
            colj[i] = (colj[i] - s) / head[i * p + i];
        }
        let s: f64 = colj[..j].iter().map(|v| v * v).sum();
        let pivot = colj[j] - s;
        if !(pivot > MIN_CHOL_DIAG * MIN_CHOL_DIAG) {
            return Err(Error::NotPositiveDefinite(j + 1));
        }
        colj[j] = pivot.sqrt();
        for l in j + 1..p {
            colj[l] = 0.0;
        }
    }
    Ok(())
}

/// Solves `Uᵀ x = b` in place (forward substitution, `U` upper triangular).
pub fn solve_lower_in_place(u: &DMatrix<f64>, x: &mut [f64]) {
    let p = u.nrows();
    for i in 0..p {
        let mut s = x[i];
        for l in 0..i {
            s -= u[(l, i)] * x[l];
        }
        x[i] = s / u[(i, i)];
    }
}

/// Solves `U x = b` in place (back substitution, `U` upper triangular).
pub fn solve_upper_in_place(u: &DMatrix<f64>, x: &mut [f64]) {
    let p = u.nrows();
    for i in (0..p).rev() {
        let mut s = x[i];
        for l in i + 1..p {
            s -= u[(i, l)] * x[l];
        }
        x[i] = s / u[(i, i)];
    }
}

/// Inverse of a positive-definite matrix via its Cholesky factorization.
/// The result is explicitly symmetrized.
pub fn pd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let chol = cholesky_upper(a)?;
    let p = a.nrows();
    let mut inv = DMatrix::zeros(p, p);
    let mut col = vec![0.0; p];
    for j in 0..p {
        col.iter_mut().for_each(|v| *v = 0.0);
        col[j] = 1.0;
        solve_lower_in_place(&chol.factor, &mut col);
        solve_upper_in_place(&chol.factor, &mut col);
        for i in 0..p {
            inv[(i, j)] = col[i];
        }
    }
    symmetrize(&mut inv);
    Ok(inv)
}

/// Averages `a` with its transpose in place.
pub fn symmetrize(a: &mut DMatrix<f64>) {
    let p = a.nrows();
    for i in 0..p {
        for j in i + 1..p {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

/// Applies a symmetric permutation: `B[σ(i), σ(j)] = A[i, j]`.
///
/// `perm[i]` is the destination index of source index `i`. Applying `perm`
/// and then its inverse returns the original matrix bit-exactly since entries
/// are only moved, never recomputed.
pub fn permute_symmetric(a: &SymMatrix, perm: &[usize]) -> SymMatrix {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols());
    permute_symmetric_into(a, perm, &mut out);
    out
}

/// Allocation-free variant of [`permute_symmetric`] writing into `dst`.
pub fn permute_symmetric_into(a: &SymMatrix, perm: &[usize], dst: &mut DMatrix<f64>) {
    let p = a.nrows();
    debug_assert_eq!(perm.len(), p);
    debug_assert_eq!(dst.nrows(), p);
    for j in 0..p {
        let pj = perm[j];
        for i in 0..p {
            dst[(perm[i], pj)] = a[(i, j)];
        }
    }
}

/// Inverts a permutation given as `perm[i] = destination of i`.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &pi) in perm.iter().enumerate() {
        inv[pi] = i;
    }
    inv
}

/// Draws from the complete-graph G-Wishart `W(δ, D)` with density
/// `∝ |K|^{δ/2−1} exp(−tr(K D)/2)` via the Bartlett decomposition.
///
/// This convention maps to the standard Wishart with shape `ν = δ + p − 1`
/// and scale `D⁻¹`, so the draw mean is `(δ + p − 1) D⁻¹`.
pub fn wishart_complete_draw<R: Rng + ?Sized>(
    delta: f64,
    d: &SymMatrix,
    rng: &mut R,
) -> Result<SymMatrix> {
    if !(delta > 2.0) {
        return Err(Error::BadDegreesOfFreedom(delta));
    }
    let p = d.nrows();
    let u = cholesky_upper(d)?;
    let nu = delta + p as f64 - 1.0;

    // Lower-triangular Bartlett factor: χ² diagonal, standard-normal below.
    let mut bart = DMatrix::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(nu - i as f64).expect("positive dof");
        let draw: f64 = rng.sample(chi);
        bart[(i, i)] = draw.sqrt();
        for j in 0..i {
            bart[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }

    // K = (U⁻¹ A)(U⁻¹ A)ᵀ where D = UᵀU; solve U X = A column by column.
    let mut x = DMatrix::zeros(p, p);
    let mut col = vec![0.0; p];
    for j in 0..p {
        for i in 0..p {
            col[i] = bart[(i, j)];
        }
        solve_upper_in_place(u.factor(), &mut col);
        for i in 0..p {
            x[(i, j)] = col[i];
        }
    }
    let mut k = &x * x.transpose();
    symmetrize(&mut k);
    Ok(k)
}
