//! Small dense linear-algebra and random-draw helpers shared by the model and
//! the sampler. Everything is Cholesky based; explicit inverses are only formed
//! for q×q matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

pub type Chol = Cholesky<f64, Dyn>;

/// Relative diagonal jitter used for the single retry after a failed factorization.
pub const JITTER: f64 = 1e-8;

/// Cholesky factorization with one jittered retry (`JITTER * mean(diag)` added
/// to the diagonal) before giving up.
pub fn cholesky_jitter(m: DMatrix<f64>, what: &str) -> Result<Chol> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!("{what}: non-finite entries")));
    }
    let n = m.nrows();
    let mean_diag = if n == 0 {
        0.0
    } else {
        m.diagonal().iter().sum::<f64>() / n as f64
    };
    match m.clone().cholesky() {
        Some(c) => Ok(c),
        None => {
            let mut jittered = m;
            let eps = JITTER * mean_diag.abs().max(f64::MIN_POSITIVE);
            for i in 0..n {
                jittered[(i, i)] += eps;
            }
            jittered
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))
        }
    }
}

pub fn log_det(chol: &Chol) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Inverse of a symmetric positive definite matrix from its factor, symmetrized.
pub fn spd_inverse(chol: &Chol) -> DMatrix<f64> {
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    inv
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Draw from `N(P⁻¹ b, P⁻¹)` given the factor of the precision `P` and the
/// canonical mean `b`.
pub fn sample_canonical<R: Rng + ?Sized>(prec: &Chol, b: &DVector<f64>, rng: &mut R) -> DVector<f64> {
    let mean = prec.solve(b);
    let z = standard_normal_vec(b.len(), rng);
    // L Lᵀ = P, so Lᵀ x = z gives x ~ N(0, P⁻¹)
    let noise = prec
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .expect("triangular factor has a positive diagonal");
    mean + noise
}

/// Draw from `N(mean, Σ)` given the lower factor `L` of `Σ`.
pub fn sample_with_cov_factor<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov_factor: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let z = standard_normal_vec(mean.len(), rng);
    mean + cov_factor * z
}

/// Inverse-gamma draw with shape `a` and rate `b` (mean `b / (a - 1)`).
pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0 && rate > 0.0, "IG({shape}, {rate})");
    let g = Gamma::new(shape, 1.0 / rate).expect("positive gamma parameters");
    1.0 / g.sample(rng)
}

/// Lower Cholesky factor of a dense SPD matrix, with jitter retry.
pub fn lower_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    Ok(cholesky_jitter(m.clone(), what)?.unpack())
}
