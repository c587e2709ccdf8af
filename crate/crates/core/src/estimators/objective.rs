//! The reduced-rank envelope objective `F_T(D | p, d, u)` over semiorthogonal
//! `q × u` bases, and its Euclidean gradient.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix_kit::{sym_power, symmetric_eigen_desc, Exponent, SymmetricMatrix};
use crate::moments::AutocovarianceSet;

/// Eigenvalue gap below which the analytic gradient of the eigenvalue-sum
/// term is not trusted.
const GAP_TOLERANCE: f64 = 1e-10;
const FD_STEP: f64 = 1e-6;

/// Precomputed moment matrices shared by every objective evaluation.
#[derive(Debug, Clone)]
pub struct EnvelopeObjectiveContext {
    pub q: usize,
    pub d: usize,
    gamma0: DMatrix<f64>,
    gamma0_inv: DMatrix<f64>,
    resid: DMatrix<f64>,
    fitted: DMatrix<f64>,
}

impl EnvelopeObjectiveContext {
    pub fn new(acov: &AutocovarianceSet, d: usize) -> Result<Self> {
        let gamma0_inv = acov.gamma0.inverse()?;
        Ok(Self {
            q: acov.q,
            d,
            gamma0: acov.gamma0.as_matrix().clone(),
            gamma0_inv: gamma0_inv.into_inner(),
            resid: acov.gamma_y_given_x.as_matrix().clone(),
            fitted: acov.gamma_y_fitted.as_matrix().clone(),
        })
    }

    /// Same moments, different rank truncation.
    pub fn with_rank(&self, d: usize) -> Self {
        Self { d, ..self.clone() }
    }

    pub fn gamma0(&self) -> &DMatrix<f64> {
        &self.gamma0
    }

    pub fn gamma_y_given_x(&self) -> &DMatrix<f64> {
        &self.resid
    }

    pub fn gamma_y_fitted(&self) -> &DMatrix<f64> {
        &self.fitted
    }

    /// `log|D'Γ̂_{y|x}D| + log|D'Γ̂₀⁻¹D| + Σ_{i>d} log ω̂ᵢ(D)`.
    pub fn value(&self, d_mat: &DMatrix<f64>) -> Result<f64> {
        Ok(self.parts(d_mat)?.value)
    }

    /// The same objective written as
    /// `log|D'Γ̂₀D| + log|D'Γ̂₀⁻¹D| + log|I_u - Γ̂^{(d)}_{z∘x}|`, where the
    /// truncation keeps the `d` largest eigenvalues of the fitted covariance of
    /// the standardized reduced response.
    pub fn value_standardized_form(&self, d_mat: &DMatrix<f64>) -> Result<f64> {
        let u = d_mat.ncols();
        let g = SymmetricMatrix::new(d_mat.transpose() * &self.gamma0 * d_mat);
        let b = SymmetricMatrix::new(d_mat.transpose() * &self.gamma0_inv * d_mat);
        let g_inv_sqrt = sym_power(&g, Exponent::NegHalf).map_err(|_| Error::DegenerateCandidate)?;
        let fitted_z = g_inv_sqrt.as_matrix() * d_mat.transpose() * &self.fitted * d_mat * g_inv_sqrt.as_matrix();
        let (rho2, _) = symmetric_eigen_desc(&((&fitted_z + fitted_z.transpose()) * 0.5));
        let mut third = 0.0;
        for &r in rho2.iter().take(self.d.min(u)) {
            let one_minus = 1.0 - r;
            if one_minus <= 0.0 {
                return Err(Error::DegenerateCandidate);
            }
            third += one_minus.ln();
        }
        Ok(g.log_det().map_err(|_| Error::DegenerateCandidate)?
            + b.log_det().map_err(|_| Error::DegenerateCandidate)?
            + third)
    }

    /// Objective value and Euclidean gradient (q × u).
    pub fn value_and_gradient(&self, d_mat: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let parts = self.parts(d_mat)?;
        let u = d_mat.ncols();
        let d = self.d.min(u);
        // ω̂ sorted descending; the sum runs over indices d..u
        let degenerate = d > 0 && d < u && (parts.omega[d - 1] - parts.omega[d]).abs() < GAP_TOLERANCE;
        if degenerate {
            let grad = self.finite_difference_gradient(d_mat)?;
            return Ok((parts.value, grad));
        }
        let mut grad = (&self.resid * d_mat * &parts.a_inv) * 2.0 + (&self.gamma0_inv * d_mat * &parts.b_inv) * 2.0;
        for i in d..u {
            let w = parts.omega[i];
            let v = parts.gen_vectors.column(i);
            let dv = d_mat * v;
            let lhs = (&self.gamma0 - &self.resid * w) * dv;
            grad += (lhs * v.transpose()) * (2.0 / w);
        }
        Ok((parts.value, grad))
    }

    /// Central differences on each entry of `D`, for validation and for the
    /// degenerate-eigenvalue fallback.
    pub fn finite_difference_gradient(&self, d_mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut grad = DMatrix::zeros(d_mat.nrows(), d_mat.ncols());
        let mut probe = d_mat.clone();
        for j in 0..d_mat.ncols() {
            for i in 0..d_mat.nrows() {
                let orig = probe[(i, j)];
                probe[(i, j)] = orig + FD_STEP;
                let up = self.parts(&probe)?.value;
                probe[(i, j)] = orig - FD_STEP;
                let down = self.parts(&probe)?.value;
                probe[(i, j)] = orig;
                grad[(i, j)] = (up - down) / (2.0 * FD_STEP);
            }
        }
        Ok(grad)
    }

    fn parts(&self, d_mat: &DMatrix<f64>) -> Result<Parts> {
        let a = SymmetricMatrix::new(d_mat.transpose() * &self.resid * d_mat);
        let b = SymmetricMatrix::new(d_mat.transpose() * &self.gamma0_inv * d_mat);
        let g = d_mat.transpose() * &self.gamma0 * d_mat;
        let a_inv_sqrt = sym_power(&a, Exponent::NegHalf).map_err(|_| Error::DegenerateCandidate)?;
        let a_inv = a_inv_sqrt.as_matrix() * a_inv_sqrt.as_matrix();
        let b_inv = b.inverse().map_err(|_| Error::DegenerateCandidate)?.into_inner();
        let pencil = a_inv_sqrt.as_matrix() * g * a_inv_sqrt.as_matrix();
        let (omega, w) = symmetric_eigen_desc(&((&pencil + pencil.transpose()) * 0.5));
        let u = d_mat.ncols();
        let d = self.d.min(u);
        let mut tail = 0.0;
        for &o in omega.iter().skip(d) {
            if o <= 0.0 {
                return Err(Error::DegenerateCandidate);
            }
            tail += o.ln();
        }
        let value = a.log_det().map_err(|_| Error::DegenerateCandidate)?
            + b.log_det().map_err(|_| Error::DegenerateCandidate)?
            + tail;
        if !value.is_finite() {
            return Err(Error::DegenerateCandidate);
        }
        let gen_vectors = a_inv_sqrt.as_matrix() * w;
        Ok(Parts {
            value,
            omega: omega.iter().copied().collect(),
            gen_vectors,
            a_inv,
            b_inv,
        })
    }
}

struct Parts {
    value: f64,
    omega: Vec<f64>,
    /// Generalized eigenvectors of (D'Γ̂₀D, D'Γ̂_{y|x}D), normalized so
    /// `v'(D'Γ̂_{y|x}D)v = 1`.
    gen_vectors: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    b_inv: DMatrix<f64>,
}

/// Standalone form of [`EnvelopeObjectiveContext::value`].
pub fn envelope_objective(d_mat: &DMatrix<f64>, ctx: &EnvelopeObjectiveContext) -> Result<f64> {
    ctx.value(d_mat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_kit::orthonormalize;
    use crate::moments::TimeSeriesData;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn acov(q: usize, p: usize, seed: u64) -> AutocovarianceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = gauss(q, q, &mut rng) * (0.4 / q as f64);
        let mix = gauss(q, q, &mut rng) + DMatrix::identity(q, q) * 2.0;
        let t = 400;
        let mut y = DMatrix::zeros(t, q);
        for r in 1..t {
            let next = &beta * y.row(r - 1).transpose() + &mix * gauss(q, 1, &mut rng);
            y.set_row(r, &next.transpose());
        }
        AutocovarianceSet::from_data(&TimeSeriesData::new(y).unwrap(), p).unwrap()
    }

    fn random_basis(q: usize, u: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        orthonormalize(&gauss(q, u, rng))
    }

    #[test]
    fn full_dimension_drops_eigen_term() {
        let a = acov(4, 1, 1);
        let ctx = EnvelopeObjectiveContext::new(&a, 4).unwrap();
        let want = a.gamma_y_given_x.log_det().unwrap() - a.gamma0.log_det().unwrap();
        assert!((ctx.value(&DMatrix::identity(4, 4)).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn both_forms_agree_and_rotation_invariant() {
        let a = acov(6, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for d in 1..=4 {
            let ctx = EnvelopeObjectiveContext::new(&a, d).unwrap();
            for _ in 0..5 {
                let dm = random_basis(6, 4, &mut rng);
                let v = ctx.value(&dm).unwrap();
                assert!((v - ctx.value_standardized_form(&dm).unwrap()).abs() < 1e-8);
                let o = random_basis(4, 4, &mut rng);
                assert!((v - ctx.value(&(&dm * o)).unwrap()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn unrestricted_rank_is_two_log_dets() {
        let a = acov(5, 1, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let ctx = EnvelopeObjectiveContext::new(&a, 3).unwrap();
        let dm = random_basis(5, 3, &mut rng);
        let t1 = SymmetricMatrix::new(dm.transpose() * a.gamma_y_given_x.as_matrix() * &dm)
            .log_det()
            .unwrap();
        let inv = a.gamma0.inverse().unwrap();
        let t2 = SymmetricMatrix::new(dm.transpose() * inv.as_matrix() * &dm)
            .log_det()
            .unwrap();
        assert!((ctx.value(&dm).unwrap() - t1 - t2).abs() < 1e-10);
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let a = acov(6, 1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for (d, u) in [(1, 3), (2, 3), (2, 4), (3, 3), (1, 1)] {
            let ctx = EnvelopeObjectiveContext::new(&a, d).unwrap();
            let dm = random_basis(6, u, &mut rng);
            let (_, g) = ctx.value_and_gradient(&dm).unwrap();
            let fd = ctx.finite_difference_gradient(&dm).unwrap();
            let rel = (&g - &fd).norm() / fd.norm().max(1e-12);
            assert!(rel < 1e-5, "d={d} u={u} rel={rel}");
        }
    }

    #[test]
    fn rejects_degenerate_candidate() {
        let mut a = acov(3, 1, 5);
        // make the first coordinate perfectly predictable
        let mut m = a.gamma_y_given_x.as_matrix().clone();
        m[(0, 0)] = 0.0;
        m[(0, 1)] = 0.0;
        m[(1, 0)] = 0.0;
        m[(0, 2)] = 0.0;
        m[(2, 0)] = 0.0;
        a.gamma_y_given_x = SymmetricMatrix::new(m);
        let ctx = EnvelopeObjectiveContext::new(&a, 1).unwrap();
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert_eq!(ctx.value(&e1), Err(Error::DegenerateCandidate));
    }
}
