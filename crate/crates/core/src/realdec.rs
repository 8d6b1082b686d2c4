//! Real decomposition of complex matrices and the symmetric/PSD utilities the
//! rest of the crate builds on.
//!
//! A complex matrix `M` maps to the real composite `[[Re M, -Im M], [Im M, Re M]]`.
//! Covariances of proper complex vectors map to half of that composite, which is
//! the covariance of the stacked `[Re x; Im x]` vector.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix (channels, impairment matrices).
pub type ComplexMat = DMatrix<Complex64>;
/// Dense real matrix. Real composites and covariances all live here.
pub type RealMat = DMatrix<f64>;

/// Condition-number ceiling for log-det arguments and inverses.
pub const MAX_CONDITION: f64 = 1e12;

const HERMITIAN_TOL: f64 = 1e-10;

/// `[[Re M, -Im M], [Im M, Re M]]`.
pub fn realify(m: &ComplexMat) -> RealMat {
    let (r, c) = m.shape();
    let mut out = RealMat::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Real covariance of `[Re x; Im x]` for a proper vector with complex covariance `c`.
pub fn realify_covariance(c: &ComplexMat) -> Result<RealMat> {
    if !c.is_square() {
        return Err(Error::dims("realify_covariance", "square", format!("{:?}", c.shape())));
    }
    let dev = hermitian_deviation(c);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian { max_deviation: dev });
    }
    let mut out = realify(c) * 0.5;
    symmetrize_in_place(&mut out);
    Ok(out)
}

/// Inverse of [`realify`] for a matrix with the `[[A, -B], [B, A]]` pattern:
/// returns `A + jB` read from the left block column.
pub fn complexify(m: &RealMat) -> Result<ComplexMat> {
    let (r2, c2) = m.shape();
    if r2 % 2 != 0 || c2 % 2 != 0 {
        return Err(Error::dims("complexify", "even dimensions", format!("{r2}x{c2}")));
    }
    let (r, c) = (r2 / 2, c2 / 2);
    Ok(ComplexMat::from_fn(r, c, |i, j| {
        Complex64::new(m[(i, j)], m[(i + r, j)])
    }))
}

pub fn hermitian_deviation(c: &ComplexMat) -> f64 {
    let n = c.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((c[(i, j)] - c[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn symmetry_deviation(m: &RealMat) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    dev
}

pub fn symmetrize_in_place(m: &mut RealMat) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Frobenius inner product `Tr(Aᵀ B)`.
pub fn frob_inner(a: &RealMat, b: &RealMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted descending.
/// Ties keep the solver's original order.
pub fn sym_eigen_desc(m: &RealMat) -> (Vec<f64>, RealMat) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = RealMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &RealMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean projection onto `{x >= 0, sum(x) <= cap}`.
pub fn project_capped_simplex(values: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= cap {
        return clipped;
    }
    // Sum constraint active: water-level shift onto the simplex of mass `cap`.
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut prefix = 0.0;
    let mut shift = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (prefix - cap) / (j + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    values.iter().map(|&v| (v - shift).max(0.0)).collect()
}

/// Frobenius-nearest symmetric PSD matrix with trace at most `trace_cap`.
pub fn project_psd_trace(m: &RealMat, trace_cap: f64) -> RealMat {
    let mut sym = m.clone();
    symmetrize_in_place(&mut sym);
    let (values, vectors) = sym_eigen_desc(&sym);
    let projected = project_capped_simplex(&values, trace_cap.max(0.0));
    let mut out = reconstruct(&vectors, &projected);
    symmetrize_in_place(&mut out);
    out
}

pub(crate) fn reconstruct(vectors: &RealMat, values: &[f64]) -> RealMat {
    let mut scaled = vectors.clone();
    for (j, &v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * vectors.transpose()
}

/// Cholesky factor of a symmetric positive definite matrix, with a cheap
/// condition estimate taken from the factor's diagonal.
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    log2det: f64,
}

impl SpdFactor {
    pub fn new(m: &RealMat) -> Result<Self> {
        let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)?;
        let l = chol.l_dirty();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut log2det = 0.0;
        for i in 0..m.nrows() {
            let d = l[(i, i)];
            lo = lo.min(d);
            hi = hi.max(d);
            log2det += 2.0 * d.log2();
        }
        let condition = (hi / lo).powi(2);
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::IllConditioned { condition });
        }
        Ok(SpdFactor { chol, log2det })
    }

    pub fn log2det(&self) -> f64 {
        self.log2det
    }

    pub fn inverse(&self) -> RealMat {
        let mut inv = self.chol.inverse();
        symmetrize_in_place(&mut inv);
        inv
    }

    /// `M⁻¹ B`.
    pub fn solve(&self, b: &RealMat) -> RealMat {
        self.chol.solve(b)
    }
}

/// `log₂ det(M)` for symmetric positive definite `M`.
pub fn log2det_spd(m: &RealMat) -> Result<f64> {
    Ok(SpdFactor::new(m)?.log2det())
}
