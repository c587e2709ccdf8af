//! OLSVAR, RRVAR, EVAR and REVAR fits.
//!
//! All four share one building block: with a fixed semiorthogonal `Φ`, the
//! reduced response `Φ'y_t` is regressed on `x_t` at rank `d` through its
//! canonical correlations, and the complement `Φ₀'y_t` keeps its marginal
//! covariance. OLSVAR and RRVAR are the `Φ = I_q` case; EVAR and REVAR first
//! estimate `span(Φ)` by minimizing the envelope objective.

mod grassmann;
mod objective;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use grassmann::{
    optimize_envelope, optimize_envelope_1d, optimize_envelope_fg, Algorithm, EnvelopeSolution, OptimizerOptions,
    OptimizerReport,
};
pub use objective::{envelope_objective, EnvelopeObjectiveContext};

use crate::error::{Error, Result};
use crate::matrix_kit::{orthogonal_complement, svd_desc, sym_power, Exponent, SymmetricMatrix};
use crate::moments::{canonical_matrix, decompose, AutocovarianceSet, LagDesign};

const SEMIORTHOGONAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "OLSVAR")]
    Olsvar,
    #[serde(rename = "RRVAR")]
    Rrvar,
    #[serde(rename = "EVAR")]
    Evar,
    #[serde(rename = "REVAR")]
    Revar,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Olsvar, ModelKind::Rrvar, ModelKind::Evar, ModelKind::Revar];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Olsvar => "OLSVAR",
            ModelKind::Rrvar => "RRVAR",
            ModelKind::Evar => "EVAR",
            ModelKind::Revar => "REVAR",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "olsvar" | "ols" | "var" => Ok(ModelKind::Olsvar),
            "rrvar" | "rr" => Ok(ModelKind::Rrvar),
            "evar" => Ok(ModelKind::Evar),
            "revar" => Ok(ModelKind::Revar),
            other => Err(Error::InvalidArgument(format!("unknown model `{other}`"))),
        }
    }
}

/// Model dimensions: rank `d`, envelope dimension `u`, lag order `p`,
/// number of series `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub d: usize,
    pub u: usize,
    pub p: usize,
    pub q: usize,
}

impl Dims {
    pub fn new(d: usize, u: usize, p: usize, q: usize) -> Self {
        Self { d, u, p, q }
    }

    /// Checks `1 <= d <= u <= q` and `p >= 1`.
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.q == 0 || self.d == 0 || self.d > self.u || self.u > self.q {
            return Err(Error::BadDims(format!(
                "need 1 <= d <= u <= q and p >= 1, got (d,u,p,q)=({},{},{},{})",
                self.d, self.u, self.p, self.q
            )));
        }
        Ok(())
    }

    /// The dimensions a given model actually uses: OLSVAR ignores `d` and
    /// `u`, RRVAR ignores `u`, EVAR ignores `d`.
    pub fn effective(&self, model: ModelKind) -> Dims {
        match model {
            ModelKind::Olsvar => Dims::new(self.q, self.q, self.p, self.q),
            ModelKind::Rrvar => Dims::new(self.d, self.q, self.p, self.q),
            ModelKind::Evar => Dims::new(self.u, self.u, self.p, self.q),
            ModelKind::Revar => *self,
        }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.d, self.u, self.p, self.q)
    }
}

/// Total number of free parameters.
pub fn nop_count(model: ModelKind, dims: Dims) -> Result<usize> {
    dims.validate()?;
    let Dims { d, u, p, q } = dims;
    let sigma = q * (q + 1) / 2;
    Ok(match model {
        ModelKind::Olsvar => q * q * p + sigma,
        ModelKind::Rrvar => d * (q * (p + 1) - d) + sigma,
        ModelKind::Evar => u * q * p + sigma,
        ModelKind::Revar => d * (q * p + u - d) + sigma,
    })
}

/// Rank factorization `β = AB` (RRVAR) or `ξ = νB` (REVAR), taken from the
/// SVD: `A = U_d S_d`, `B = V_d'`.
#[derive(Debug, Clone)]
pub struct RankFactors {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Envelope basis and the covariance pieces on each side of it.
#[derive(Debug, Clone)]
pub struct EnvelopeFactors {
    pub phi: DMatrix<f64>,
    pub phi0: DMatrix<f64>,
    pub omega: SymmetricMatrix,
    pub omega0: SymmetricMatrix,
}

#[derive(Debug, Clone)]
pub struct VarEstimate {
    pub model: ModelKind,
    pub dims: Dims,
    /// Intercept `ȳ - β̂x̄`, so that `ŷ_t = α̂ + β̂x_t` on raw data.
    pub alpha: DVector<f64>,
    /// q × qp.
    pub beta: DMatrix<f64>,
    pub sigma: SymmetricMatrix,
    /// `(A, B)` for RRVAR, `(ν, B)` for REVAR.
    pub rank_factors: Option<RankFactors>,
    pub envelope: Option<EnvelopeFactors>,
    pub loglik: f64,
    pub nop: usize,
    pub n: usize,
    pub optimizer: Option<OptimizerReport>,
}

impl VarEstimate {
    /// `false` only when an envelope optimizer hit its iteration cap.
    pub fn converged(&self) -> bool {
        self.optimizer.as_ref().is_none_or(|r| r.converged)
    }

    pub fn phi(&self) -> Option<&DMatrix<f64>> {
        self.envelope.as_ref().map(|e| &e.phi)
    }

    /// `ν̂` for REVAR, `Â` for RRVAR.
    pub fn nu(&self) -> Option<&DMatrix<f64>> {
        self.rank_factors.as_ref().map(|f| &f.a)
    }

    pub fn b(&self) -> Option<&DMatrix<f64>> {
        self.rank_factors.as_ref().map(|f| &f.b)
    }
}

/// Reduced-rank regression of `Φ'y` on `x` with `Φ` held fixed.
struct ReducedFit {
    /// u × qp.
    xi: DMatrix<f64>,
    omega: SymmetricMatrix,
    factors: RankFactors,
}

fn reduced_rank_core(acov: &AutocovarianceSet, phi: &DMatrix<f64>, d: usize) -> Result<ReducedFit> {
    let gamma_yy = SymmetricMatrix::new(phi.transpose() * acov.gamma0.as_matrix() * phi);
    let gamma_xy = &acov.gamma_star * phi;
    let gp_inv_sqrt = sym_power(&acov.gamma_p, Exponent::NegHalf).map_err(|_| Error::SingularGram)?;
    let c = canonical_matrix(&gamma_yy, &gamma_xy, &gp_inv_sqrt)?;
    let c_d = decompose(c, Some(d)).truncated.expect("truncation requested");
    let yy_half = sym_power(&gamma_yy, Exponent::Half)?;
    let xi = yy_half.as_matrix() * &c_d * gp_inv_sqrt.as_matrix();
    let u = phi.ncols();
    let inner = DMatrix::identity(u, u) - &c_d * c_d.transpose();
    let omega = SymmetricMatrix::new(yy_half.as_matrix() * inner * yy_half.as_matrix());
    let (left, s, right_t) = svd_desc(&xi);
    let k = d.min(s.len());
    let a = left.columns(0, k) * DMatrix::from_diagonal(&s.rows(0, k).into_owned());
    let b = right_t.rows(0, k).into_owned();
    Ok(ReducedFit {
        xi,
        omega,
        factors: RankFactors { a, b },
    })
}

fn check_semiorthogonal(phi: &DMatrix<f64>) -> Result<()> {
    let u = phi.ncols();
    let deviation = (phi.transpose() * phi - DMatrix::identity(u, u)).amax();
    if deviation > SEMIORTHOGONAL_TOLERANCE {
        return Err(Error::NotSemiorthogonal { deviation });
    }
    Ok(())
}

fn intercept(acov: &AutocovarianceSet, beta: &DMatrix<f64>) -> DVector<f64> {
    &acov.mean_y - beta * &acov.mean_x
}

/// Maximized conditional log-likelihood for a fit whose `Σ̂` is the MLE given
/// `β̂`, where the trace term equals `q`.
fn profile_loglik(n: usize, q: usize, sigma: &SymmetricMatrix) -> Result<f64> {
    let nf = n as f64;
    let qf = q as f64;
    Ok(-0.5 * nf * (sigma.log_det()? + qf) - 0.5 * nf * qf * (2.0 * std::f64::consts::PI).ln())
}

/// Estimator with a known envelope basis `Φ` (q × u).
pub fn fit_known_phi(acov: &AutocovarianceSet, phi: &DMatrix<f64>, d: usize) -> Result<VarEstimate> {
    check_semiorthogonal(phi)?;
    let q = acov.q;
    let u = phi.ncols();
    if phi.nrows() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            got: phi.nrows(),
        });
    }
    let dims = Dims::new(d, u, acov.p, q);
    dims.validate()?;
    assemble(acov, phi, d, ModelKind::Revar, dims, None)
}

fn assemble(
    acov: &AutocovarianceSet,
    phi: &DMatrix<f64>,
    d: usize,
    model: ModelKind,
    dims: Dims,
    optimizer: Option<OptimizerReport>,
) -> Result<VarEstimate> {
    let q = acov.q;
    let u = phi.ncols();
    let fit = reduced_rank_core(acov, phi, d)?;
    let beta = phi * &fit.xi;
    let phi0 = orthogonal_complement(phi);
    let omega0 = SymmetricMatrix::new(phi0.transpose() * acov.gamma0.as_matrix() * &phi0);
    let sigma = SymmetricMatrix::new(
        phi * fit.omega.as_matrix() * phi.transpose() + &phi0 * omega0.as_matrix() * phi0.transpose(),
    );
    let loglik = profile_loglik(acov.n, q, &sigma)?;
    let (rank_factors, envelope) = match model {
        ModelKind::Olsvar => (None, None),
        ModelKind::Rrvar => (Some(fit.factors), None),
        ModelKind::Evar | ModelKind::Revar => {
            let env = EnvelopeFactors {
                phi: phi.clone(),
                phi0,
                omega: fit.omega,
                omega0,
            };
            let factors = (model == ModelKind::Revar).then_some(fit.factors);
            (factors, Some(env))
        }
    };
    debug_assert_eq!(beta.ncols(), q * acov.p);
    debug_assert!(u <= q);
    Ok(VarEstimate {
        model,
        dims,
        alpha: intercept(acov, &beta),
        beta,
        sigma,
        rank_factors,
        envelope,
        loglik,
        nop: nop_count(model, dims)?,
        n: acov.n,
        optimizer,
    })
}

/// Unrestricted least squares.
pub fn fit_olsvar(acov: &AutocovarianceSet) -> Result<VarEstimate> {
    let q = acov.q;
    let dims = Dims::new(q, q, acov.p, q);
    assemble(acov, &DMatrix::identity(q, q), q, ModelKind::Olsvar, dims, None)
}

/// Closed-form reduced-rank fit through the top-d canonical correlations.
pub fn fit_rrvar(acov: &AutocovarianceSet, d: usize) -> Result<VarEstimate> {
    let q = acov.q;
    if d == 0 || d > q {
        return Err(Error::BadRank { d, max: q });
    }
    let dims = Dims::new(d, q, acov.p, q);
    assemble(acov, &DMatrix::identity(q, q), d, ModelKind::Rrvar, dims, None)
}

/// Reduced-rank envelope fit: estimate `span(Φ)` over the Grassmannian, then
/// apply the known-`Φ` estimator.
pub fn fit_revar(
    acov: &AutocovarianceSet,
    d: usize,
    u: usize,
    algorithm: Algorithm,
    opts: &OptimizerOptions,
) -> Result<VarEstimate> {
    let dims = Dims::new(d, u, acov.p, acov.q);
    dims.validate()?;
    fit_envelope_model(acov, dims, ModelKind::Revar, algorithm, opts)
}

/// Envelope fit without a rank restriction (`d = u`).
pub fn fit_evar(
    acov: &AutocovarianceSet,
    u: usize,
    algorithm: Algorithm,
    opts: &OptimizerOptions,
) -> Result<VarEstimate> {
    let dims = Dims::new(u, u, acov.p, acov.q);
    dims.validate()?;
    fit_envelope_model(acov, dims, ModelKind::Evar, algorithm, opts)
}

fn fit_envelope_model(
    acov: &AutocovarianceSet,
    dims: Dims,
    model: ModelKind,
    algorithm: Algorithm,
    opts: &OptimizerOptions,
) -> Result<VarEstimate> {
    let ctx = EnvelopeObjectiveContext::new(acov, dims.d)?;
    let sol = optimize_envelope(&ctx, dims.u, algorithm, opts)?;
    assemble(acov, &sol.basis, dims.d, model, dims, Some(sol.report))
}

/// Fits `model` using the parts of `dims` it needs.
pub fn fit_model(
    acov: &AutocovarianceSet,
    model: ModelKind,
    dims: Dims,
    algorithm: Algorithm,
    opts: &OptimizerOptions,
) -> Result<VarEstimate> {
    match model {
        ModelKind::Olsvar => fit_olsvar(acov),
        ModelKind::Rrvar => fit_rrvar(acov, dims.d),
        ModelKind::Evar => fit_evar(acov, dims.u, algorithm, opts),
        ModelKind::Revar => fit_revar(acov, dims.d, dims.u, algorithm, opts),
    }
}

/// Conditional Gaussian log-likelihood of `estimate` on the rows of
/// `design`, including the `-(nq/2)log(2π)` constant.
pub fn conditional_loglik(estimate: &VarEstimate, design: &LagDesign) -> Result<f64> {
    let q = design.q;
    if estimate.beta.nrows() != q || estimate.beta.ncols() != design.lagged.ncols() {
        return Err(Error::DimensionMismatch {
            expected: q * design.lagged.ncols(),
            got: estimate.beta.len(),
        });
    }
    let sigma_inv = estimate.sigma.inverse()?;
    let log_det = estimate.sigma.log_det()?;
    let y = design.raw_targets();
    let x = design.raw_lagged();
    let mut resid = y - x * estimate.beta.transpose();
    for mut row in resid.row_iter_mut() {
        row -= estimate.alpha.transpose();
    }
    let n = design.n() as f64;
    let quad = (&resid * sigma_inv.as_matrix()).component_mul(&resid).sum();
    Ok(-0.5 * n * log_det - 0.5 * quad - 0.5 * n * q as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// `ln|Σ̂|` for an intercept-only model: the `(d, u) = (0, 0)` cell.
pub fn mean_only_loglik(acov: &AutocovarianceSet) -> Result<f64> {
    profile_loglik(acov.n, acov.q, &acov.gamma0)
}
