//! Simulation designs and the Monte-Carlo harness.
//!
//! True parameters follow the REVAR structure with `[Ω]ᵢⱼ = (-0.9)^|i-j|` and
//! `[Ω₀]ᵢⱼ = 5(-0.5)^|i-j|`. Each replication gets its own ChaCha stream
//! derived from the master seed, so results do not depend on how
//! replications are scheduled across threads.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{avar_all, se_ratios, ParameterVectors};
use crate::error::{Error, Result};
use crate::estimators::{fit_evar, fit_olsvar, fit_revar, fit_rrvar, Algorithm, Dims, ModelKind, OptimizerOptions};
use crate::matrix_kit::{orthogonal_complement, orthonormalize, sym_power, Exponent, SymmetricMatrix};
use crate::moments::{AutocovarianceSet, LagDesign, TimeSeriesData};
use crate::selection::{select_dims, select_lag, select_rank, Criterion, DimsMode};

pub const MAX_STABILIZE_ATTEMPTS: usize = 1000;
/// Accepted draws have companion spectral radius below this.
pub const STATIONARITY_BOUND: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorFamily {
    #[serde(rename = "normal")]
    Normal,
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "t6")]
    T6,
    #[serde(rename = "chi2_6")]
    Chi2,
    #[serde(rename = "mds")]
    Mds,
    #[serde(rename = "sv-mds")]
    SvMds,
}

impl ErrorFamily {
    pub fn name(self) -> &'static str {
        match self {
            ErrorFamily::Normal => "normal",
            ErrorFamily::Uniform => "uniform",
            ErrorFamily::T6 => "t6",
            ErrorFamily::Chi2 => "chi2_6",
            ErrorFamily::Mds => "mds",
            ErrorFamily::SvMds => "sv-mds",
        }
    }
}

impl fmt::Display for ErrorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(ErrorFamily::Normal),
            "uniform" => Ok(ErrorFamily::Uniform),
            "t6" | "t" => Ok(ErrorFamily::T6),
            "chi2_6" | "chi2" | "chisq" => Ok(ErrorFamily::Chi2),
            "mds" => Ok(ErrorFamily::Mds),
            "sv-mds" | "sv_mds" | "svmds" => Ok(ErrorFamily::SvMds),
            other => Err(Error::BadFamily(other.to_string())),
        }
    }
}

fn default_sample_sizes() -> Vec<usize> {
    vec![160, 270, 450, 740, 1200, 2000]
}
fn default_replications() -> usize {
    100
}
fn default_algorithm() -> Algorithm {
    Algorithm::Auto
}
fn default_p_max() -> usize {
    4
}
fn default_alpha() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}
fn default_family() -> ErrorFamily {
    ErrorFamily::Normal
}

/// One simulation design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationScenario {
    pub d: usize,
    pub u: usize,
    pub p: usize,
    pub q: usize,
    #[serde(default = "default_family")]
    pub errors: ErrorFamily,
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// Whether to compute standard-error ratios (the costly part at large q).
    #[serde(default = "default_true")]
    pub se_ratios: bool,
    /// Largest lag considered by the selection study.
    #[serde(default = "default_p_max")]
    pub p_max: usize,
    /// Level of the sequential rank test in the selection study.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// How the selection study picks `u`.
    #[serde(default)]
    pub u_selection: USelection,
    /// Draw fresh true parameters for every replication instead of once per
    /// scenario.
    #[serde(default)]
    pub redraw_parameters: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum USelection {
    /// `û` from the BIC minimizer over the joint `(d, u)` grid.
    #[default]
    Joint,
    /// `û` from BIC over `u = d..=q` with `d` fixed at the truth.
    GivenRank,
}

impl SimulationScenario {
    pub fn new(dims: Dims, errors: ErrorFamily) -> Self {
        Self {
            d: dims.d,
            u: dims.u,
            p: dims.p,
            q: dims.q,
            errors,
            sample_sizes: default_sample_sizes(),
            replications: default_replications(),
            seed: 0,
            algorithm: default_algorithm(),
            se_ratios: true,
            p_max: default_p_max(),
            alpha: default_alpha(),
            u_selection: USelection::Joint,
            redraw_parameters: false,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.d, self.u, self.p, self.q)
    }

    pub fn validate(&self) -> Result<()> {
        self.dims().validate()?;
        let min_t = self.q * self.p.max(self.p_max) + 2;
        if let Some(&t) = self.sample_sizes.iter().find(|&&t| t < min_t) {
            return Err(Error::TooShort {
                rows: t,
                required: min_t,
            });
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrueParameters {
    pub dims: Dims,
    pub beta: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub phi0: DMatrix<f64>,
    pub nu: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub omega0: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub spectral_radius: f64,
}

/// `[M]ᵢⱼ = scale · rho^|i-j|`.
pub fn toeplitz_power(n: usize, rho: f64, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| scale * rho.powi(i.abs_diff(j) as i32))
}

/// `[β; I 0]`, the VAR(1) form of a VAR(p).
pub fn companion(beta: &DMatrix<f64>) -> DMatrix<f64> {
    let q = beta.nrows();
    let qp = beta.ncols();
    let mut c = DMatrix::zeros(qp, qp);
    c.rows_mut(0, q).copy_from(beta);
    for i in q..qp {
        c[(i, i - q)] = 1.0;
    }
    c
}

pub fn spectral_radius(beta: &DMatrix<f64>) -> f64 {
    companion(beta)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn generate_true_parameters(dims: Dims, seed: u64) -> Result<TrueParameters> {
    dims.validate()?;
    let Dims { d, u, p, q } = dims;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = orthonormalize(&DMatrix::from_fn(q, u, |_, _| rng.random::<f64>()));
    let phi0 = orthogonal_complement(&phi);
    let omega = toeplitz_power(u, -0.9, 1.0);
    let omega0 = toeplitz_power(q - u, -0.5, 5.0);
    let sigma = &phi * &omega * phi.transpose() + &phi0 * &omega0 * phi0.transpose();
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    for _ in 0..MAX_STABILIZE_ATTEMPTS {
        let mut nu = DMatrix::from_fn(u, d, |_, _| StandardNormal.sample(&mut rng));
        let b = DMatrix::from_fn(d, q * p, |_, _| rng.random::<f64>());
        let raw = &phi * &nu * &b;
        let norm = raw.norm();
        if norm == 0.0 {
            continue;
        }
        nu /= norm;
        let beta = &phi * &nu * &b;
        let radius = spectral_radius(&beta);
        if radius < STATIONARITY_BOUND {
            return Ok(TrueParameters {
                dims,
                beta,
                phi,
                phi0,
                nu,
                b,
                omega,
                omega0,
                sigma,
                spectral_radius: radius,
            });
        }
    }
    Err(Error::CannotStabilize {
        attempts: MAX_STABILIZE_ATTEMPTS,
    })
}

/// `t × q` i.i.d. draws standardized to mean zero and unit variance, before
/// any mixing.
pub fn standardized_draws(family: ErrorFamily, t: usize, q: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    Ok(match family {
        ErrorFamily::Normal => DMatrix::from_fn(t, q, |_, _| StandardNormal.sample(rng)),
        ErrorFamily::Uniform => DMatrix::from_fn(t, q, |_, _| (rng.random::<f64>() - 0.5) * 12f64.sqrt()),
        ErrorFamily::T6 => {
            let dist = StudentT::new(6.0).expect("valid degrees of freedom");
            DMatrix::from_fn(t, q, |_, _| dist.sample(rng) / 1.5f64.sqrt())
        }
        ErrorFamily::Chi2 => {
            let dist = ChiSquared::new(6.0).expect("valid degrees of freedom");
            DMatrix::from_fn(t, q, |_, _| (dist.sample(rng) - 6.0) / 12f64.sqrt())
        }
        ErrorFamily::Mds | ErrorFamily::SvMds => {
            return Err(Error::BadFamily(format!("{family} has no i.i.d. standardized form")));
        }
    })
}

/// `t × q` error matrix with covariance `sigma` (time-varying for SV-MDS).
pub fn generate_errors(family: ErrorFamily, t: usize, sigma: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_errors(family, t, sigma, &mut rng)
}

fn draw_errors(family: ErrorFamily, t: usize, sigma: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let q = sigma.nrows();
    let root = sym_power(&SymmetricMatrix::new(sigma.clone()), Exponent::Half)?.into_inner();
    let gauss =
        |rng: &mut ChaCha8Rng| -> DVector<f64> { &root * DVector::from_fn(q, |_, _| StandardNormal.sample(rng)) };
    match family {
        ErrorFamily::Mds => {
            // ζ₁ ~ N(0, Σ), ζ_{t+1} | ζ_t ~ N(ζ_t, Σ), ε_t = ζ_{t+1} - ζ_t
            let mut out = DMatrix::zeros(t, q);
            let mut zeta = gauss(rng);
            for r in 0..t {
                let next = &zeta + gauss(rng);
                out.set_row(r, &(&next - &zeta).transpose());
                zeta = next;
            }
            Ok(out)
        }
        ErrorFamily::SvMds => {
            let vu_root = sym_power(&SymmetricMatrix::new(toeplitz_power(q, 0.9, 1.0)), Exponent::Half)?.into_inner();
            let mut vol = DVector::zeros(q);
            let mut out = DMatrix::zeros(t, q);
            for r in 0..t {
                let shock = &vu_root * DVector::from_fn(q, |_, _| StandardNormal.sample(rng));
                vol = vol * 0.25 + shock * 0.05;
                let e = gauss(rng);
                out.set_row(r, &e.component_mul(&vol.map(f64::exp)).transpose());
            }
            Ok(out)
        }
        _ => {
            let z = standardized_draws(family, t, q, rng)?;
            Ok(z * root.transpose())
        }
    }
}

/// A simulated sample plus the presample rows it was started from.
#[derive(Debug, Clone)]
pub struct SimulatedSeries {
    pub data: TimeSeriesData,
    /// `p × q`, oldest first.
    pub presample: DMatrix<f64>,
}

impl SimulatedSeries {
    /// Lag design that conditions on the presample, so all `T` rows are used.
    pub fn design(&self, p: usize) -> Result<LagDesign> {
        if p == self.presample.nrows() {
            LagDesign::with_presample(&self.data, &self.presample, p)
        } else {
            LagDesign::new(&self.data, p)
        }
    }
}

/// Iterates `y_t = βx_t + ε_t` from `presample` (`p × q`, oldest first).
pub fn simulate_var(beta: &DMatrix<f64>, presample: &DMatrix<f64>, errors: &DMatrix<f64>) -> Result<TimeSeriesData> {
    let q = beta.nrows();
    let p = beta.ncols() / q;
    if presample.shape() != (p, q) {
        return Err(Error::DimensionMismatch {
            expected: p * q,
            got: presample.len(),
        });
    }
    let t = errors.nrows();
    let mut full = DMatrix::zeros(t + p, q);
    full.rows_mut(0, p).copy_from(presample);
    for r in 0..t {
        let time = r + p;
        let mut y = errors.row(r).transpose();
        for k in 1..=p {
            let block = beta.columns((k - 1) * q, q);
            y += block * full.row(time - k).transpose();
        }
        full.set_row(time, &y.transpose());
    }
    TimeSeriesData::new(full.rows(p, t).into_owned())
}

/// Draws a standard-normal presample and errors, then simulates `t` rows.
pub fn simulate_from(
    params: &TrueParameters,
    family: ErrorFamily,
    t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SimulatedSeries> {
    let Dims { p, q, .. } = params.dims;
    let presample = DMatrix::from_fn(p, q, |_, _| StandardNormal.sample(rng));
    let errors = draw_errors(family, t, &params.sigma, rng)?;
    Ok(SimulatedSeries {
        data: simulate_var(&params.beta, &presample, &errors)?,
        presample,
    })
}

/// Independent stream for replication `rep` at sample-size index `t_index`.
pub fn replication_rng(master: u64, t_index: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((t_index as u64) << 32) | rep as u64);
    rng
}

/// Seed used for the scenario's true parameters.
fn parameter_seed(master: u64) -> u64 {
    master ^ 0x9e37_79b9_7f4a_7c15
}

/// True parameters for one replication: the scenario-wide draw, or a fresh
/// one taken from the replication's own stream.
fn replication_parameters(
    scenario: &SimulationScenario,
    shared: &TrueParameters,
    rng: &mut ChaCha8Rng,
) -> Result<TrueParameters> {
    if scenario.redraw_parameters {
        generate_true_parameters(shared.dims, rng.random())
    } else {
        Ok(shared.clone())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationOutcome {
    /// `‖β - β̂‖_F` per model in [`ModelKind::ALL`] order; `None` on failure.
    pub errors: [Option<f64>; 4],
    /// `SE_M / SE_REVAR` summaries per model.
    pub ratios: [Option<(f64, f64, f64)>; 4],
    pub converged: bool,
}

/// Row of the plot-ready summary: one per `(T, model)`.
#[derive(Debug, Clone, Serialize)]
pub struct McRow {
    #[serde(rename = "T")]
    pub t: usize,
    pub model: ModelKind,
    pub mean_error: f64,
    pub se_mean: f64,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub r_avg: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub scenario: SimulationScenario,
    pub spectral_radius: f64,
    pub rows: Vec<McRow>,
    /// Replications where an envelope optimizer hit its iteration cap.
    pub nonconverged: usize,
}

impl McReport {
    pub fn row(&self, t: usize, model: ModelKind) -> Option<&McRow> {
        self.rows.iter().find(|r| r.t == t && r.model == model)
    }
}

fn replicate(
    scenario: &SimulationScenario,
    params: &TrueParameters,
    t: usize,
    mut rng: ChaCha8Rng,
) -> Result<ReplicationOutcome> {
    let params = &replication_parameters(scenario, params, &mut rng)?;
    let dims = params.dims;
    let series = simulate_from(params, scenario.errors, t, &mut rng)?;
    let design = series.design(dims.p)?;
    let acov = AutocovarianceSet::from_design(&design)?;
    let opts = OptimizerOptions {
        seed: rng.random(),
        ..Default::default()
    };
    let fits = [
        fit_olsvar(&acov),
        fit_rrvar(&acov, dims.d),
        fit_evar(&acov, dims.u, scenario.algorithm, &opts),
        fit_revar(&acov, dims.d, dims.u, scenario.algorithm, &opts),
    ];
    let errors = std::array::from_fn(|i| fits[i].as_ref().ok().map(|f| (&params.beta - &f.beta).norm()));
    let converged = fits.iter().all(|f| f.as_ref().map(|f| f.converged()).unwrap_or(true));
    let mut ratios = [None; 4];
    if scenario.se_ratios {
        if let Ok(revar) = &fits[3] {
            // every model's covariance at the same (REVAR) parameter point
            let pv = ParameterVectors::from_estimate(revar, &acov.gamma_p)?;
            let all = avar_all(&pv)?;
            for (i, a) in all.iter().enumerate() {
                if let Ok(r) = se_ratios(&a.beta_block, &all[3].beta_block) {
                    ratios[i] = Some((r.r_min, r.r_max, r.r_avg));
                }
            }
        }
    }
    Ok(ReplicationOutcome {
        errors,
        ratios,
        converged,
    })
}

/// Fits all four models at the true dimensions for every sample size and
/// replication and summarizes estimation errors and SE ratios.
pub fn run_monte_carlo(scenario: &SimulationScenario) -> Result<McReport> {
    scenario.validate()?;
    let params = generate_true_parameters(scenario.dims(), parameter_seed(scenario.seed))?;
    let mut rows = Vec::new();
    let mut nonconverged = 0;
    for (ti, &t) in scenario.sample_sizes.iter().enumerate() {
        let outcomes: Vec<Option<ReplicationOutcome>> = (0..scenario.replications)
            .into_par_iter()
            .map(|rep| replicate(scenario, &params, t, replication_rng(scenario.seed, ti, rep)).ok())
            .collect();
        nonconverged += outcomes.iter().flatten().filter(|o| !o.converged).count();
        for (mi, &model) in ModelKind::ALL.iter().enumerate() {
            let errs: Vec<f64> = outcomes.iter().flatten().filter_map(|o| o.errors[mi]).collect();
            let ratios: Vec<(f64, f64, f64)> = outcomes.iter().flatten().filter_map(|o| o.ratios[mi]).collect();
            let (mean, sem) = mean_and_sem(&errs);
            let has_ratios = !ratios.is_empty();
            rows.push(McRow {
                t,
                model,
                mean_error: mean,
                se_mean: sem,
                r_min: has_ratios.then(|| ratios.iter().map(|r| r.0).fold(f64::INFINITY, f64::min)),
                r_max: has_ratios.then(|| ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max)),
                r_avg: has_ratios.then(|| ratios.iter().map(|r| r.2).sum::<f64>() / ratios.len() as f64),
                failures: scenario.replications - errs.len(),
            });
        }
    }
    Ok(McReport {
        scenario: scenario.clone(),
        spectral_radius: params.spectral_radius,
        rows,
        nonconverged,
    })
}

/// Sample mean and its standard error.
pub fn mean_and_sem(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Selection frequencies at one sample size.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionRow {
    #[serde(rename = "T")]
    pub t: usize,
    /// Percentage of replications where BIC picks the true lag order.
    pub p_correct: f64,
    /// Percentage where the sequential rank test picks the true rank.
    pub d_correct: f64,
    /// Percentage where BIC picks the true envelope dimension.
    pub u_correct: f64,
    pub u_over: f64,
    pub u_under: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionStudy {
    pub scenario: SimulationScenario,
    pub rows: Vec<SelectionRow>,
}

/// How often the lag, rank and envelope-dimension procedures recover the
/// truth. Rank and dimension are selected at the true lag order; the rank
/// comes from the chi-squared test and `u` from BIC.
pub fn run_selection_study(scenario: &SimulationScenario) -> Result<SelectionStudy> {
    scenario.validate()?;
    let dims = scenario.dims();
    let params = generate_true_parameters(dims, parameter_seed(scenario.seed))?;
    let mut rows = Vec::new();
    for (ti, &t) in scenario.sample_sizes.iter().enumerate() {
        let picks: Vec<Option<(usize, usize, usize)>> = (0..scenario.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replication_rng(scenario.seed, ti, rep);
                let params = replication_parameters(scenario, &params, &mut rng).ok()?;
                let series = simulate_from(&params, scenario.errors, t, &mut rng).ok()?;
                let opts = OptimizerOptions {
                    seed: rng.random(),
                    ..Default::default()
                };
                let p_hat = select_lag(&series.data, scenario.p_max, Criterion::Bic)
                    .ok()?
                    .chosen
                    .p?;
                let acov = AutocovarianceSet::from_design(&series.design(dims.p).ok()?).ok()?;
                let d_hat = select_rank(&acov, scenario.alpha).ok()?.chosen.d?;
                let mode = match scenario.u_selection {
                    USelection::Joint => DimsMode::GridIc,
                    USelection::GivenRank => DimsMode::GivenRank { d: dims.d },
                };
                let u_hat = select_dims(&acov, mode, Criterion::Bic, scenario.alpha, scenario.algorithm, &opts)
                    .ok()?
                    .chosen
                    .u?;
                Some((p_hat, d_hat, u_hat))
            })
            .collect();
        let ok: Vec<(usize, usize, usize)> = picks.iter().flatten().copied().collect();
        let pct = |f: &dyn Fn(&(usize, usize, usize)) -> bool| {
            if ok.is_empty() {
                f64::NAN
            } else {
                100.0 * ok.iter().filter(|x| f(x)).count() as f64 / ok.len() as f64
            }
        };
        rows.push(SelectionRow {
            t,
            p_correct: pct(&|x| x.0 == dims.p),
            d_correct: pct(&|x| x.1 == dims.d),
            u_correct: pct(&|x| x.2 == dims.u),
            u_over: pct(&|x| x.2 > dims.u),
            u_under: pct(&|x| x.2 < dims.u),
            failures: scenario.replications - ok.len(),
        });
    }
    Ok(SelectionStudy {
        scenario: scenario.clone(),
        rows,
    })
}
