//! Multi-step forecasts, pseudo-real-time RMSFE evaluation and the
//! stationary bootstrap.
//!
//! Time is 1-based in the formulas below: row `t - 1` of the data holds `y_t`.
//! The evaluation window is `[T₀, T]`; for horizon `h` the origins are
//! `t = T₀ + H - h, …, T - h`, so every horizon averages over the same
//! targets `y_{T₀+H}, …, y_T` and over `T - T₀ - H + 1` terms.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{avar_all, se_ratios, ParameterVectors};
use crate::error::{Error, Result};
use crate::estimators::{fit_model, nop_count, Algorithm, Dims, ModelKind, OptimizerOptions, VarEstimate};
use crate::moments::{AutocovarianceSet, TimeSeriesData};

/// `ŷ_{t+h|t}` from the last `p` observations (`history`, oldest first).
/// Earlier forecasts stand in for observations not yet available.
pub fn forecast_h(estimate: &VarEstimate, history: &DMatrix<f64>, h: usize) -> Result<DVector<f64>> {
    Ok(forecast_path(estimate, history, h)?.pop().expect("h >= 1"))
}

/// `ŷ_{t+1|t}, …, ŷ_{t+h|t}`.
pub fn forecast_path(estimate: &VarEstimate, history: &DMatrix<f64>, h: usize) -> Result<Vec<DVector<f64>>> {
    if h == 0 {
        return Err(Error::BadHorizon);
    }
    let q = estimate.beta.nrows();
    let p = estimate.beta.ncols() / q;
    if history.ncols() != q || history.nrows() < p {
        return Err(Error::DimensionMismatch {
            expected: p * q,
            got: history.len(),
        });
    }
    // x = (y'_t, y'_{t-1}, …, y'_{t-p+1})'
    let rows = history.nrows();
    let mut x = DVector::zeros(q * p);
    for k in 0..p {
        x.rows_mut(k * q, q).copy_from(&history.row(rows - 1 - k).transpose());
    }
    let mut path = Vec::with_capacity(h);
    for _ in 0..h {
        let y = &estimate.alpha + &estimate.beta * &x;
        if p > 1 {
            let shifted = x.rows(0, q * (p - 1)).into_owned();
            x.rows_mut(q, q * (p - 1)).copy_from(&shifted);
        }
        x.rows_mut(0, q).copy_from(&y);
        path.push(y);
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RefitPolicy {
    /// Refit on data through `t` at every origin.
    #[default]
    Refit,
    /// Fit once on data through `T₀` and reuse that estimate.
    Reuse,
}

impl std::str::FromStr for RefitPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "refit" => Ok(RefitPolicy::Refit),
            "reuse" => Ok(RefitPolicy::Reuse),
            other => Err(Error::InvalidArgument(format!("unknown refit policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    /// `T₀ = ⌊fraction · T⌋`.
    pub eval_start: f64,
    /// Maximum horizon `H`.
    pub horizons: usize,
    pub refit: RefitPolicy,
    pub algorithm: Algorithm,
    pub optimizer: OptimizerOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            eval_start: 0.75,
            horizons: 4,
            refit: RefitPolicy::Refit,
            algorithm: Algorithm::Auto,
            optimizer: OptimizerOptions::default(),
        }
    }
}

impl EvalConfig {
    pub fn t0(&self, t: usize) -> usize {
        (self.eval_start * t as f64).floor() as usize
    }
}

/// Forecasts made at one origin.
#[derive(Debug, Clone, Serialize)]
pub struct OriginForecast {
    /// Number of observations available at the origin.
    pub origin: usize,
    /// `ŷ_{t+1|t}, …, ŷ_{t+H|t}`, truncated at the end of the sample.
    pub forecasts: Vec<Vec<f64>>,
    /// Set when this origin's fit failed and the previous estimate was used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastRun {
    pub model: ModelKind,
    pub dims: Dims,
    pub t0: usize,
    pub t: usize,
    pub horizons: usize,
    pub refit: RefitPolicy,
    /// Terms in each RMSFE average, `T - T₀ - H + 1`.
    pub n_terms: usize,
    /// Aggregate RMSFE per horizon: root of the mean squared error over
    /// variables and origins.
    pub rmsfe: Vec<f64>,
    /// `rmsfe_by_variable[h-1][j]`.
    pub rmsfe_by_variable: Vec<Vec<f64>>,
    pub origins: Vec<OriginForecast>,
}

/// Expanding-window pseudo-real-time evaluation of one model.
pub fn evaluate_rmsfe(data: &TimeSeriesData, model: ModelKind, dims: Dims, config: &EvalConfig) -> Result<ForecastRun> {
    let big_t = data.len();
    let q = data.dim();
    let horizons = config.horizons;
    if horizons == 0 {
        return Err(Error::BadHorizon);
    }
    let dims = dims.effective(model);
    dims.validate()?;
    if dims.q != q {
        return Err(Error::DimensionMismatch {
            expected: dims.q,
            got: q,
        });
    }
    let t0 = config.t0(big_t);
    if t0 < dims.p + 1 || t0 + horizons > big_t {
        return Err(Error::InvalidArgument(format!(
            "evaluation window [{t0}, {big_t}] cannot hold horizon {horizons}"
        )));
    }
    let fit_through = |t: usize| -> Result<VarEstimate> {
        let acov = AutocovarianceSet::from_data(&data.head(t), dims.p)?;
        fit_model(&acov, model, dims, config.algorithm, &config.optimizer)
    };
    // origins t = T₀, …, T-1 cover every (h, t) pair in the sums
    let origin_times: Vec<usize> = (t0..big_t).collect();
    let fits: Vec<Result<VarEstimate>> = match config.refit {
        RefitPolicy::Refit => origin_times.par_iter().map(|&t| fit_through(t)).collect(),
        RefitPolicy::Reuse => {
            let once = fit_through(t0)?;
            origin_times.iter().map(|_| Ok(once.clone())).collect()
        }
    };
    let scored = score_origins(data, dims.p, t0, horizons, &origin_times, &fits)?;
    Ok(ForecastRun {
        model,
        dims,
        t0,
        t: big_t,
        horizons,
        refit: config.refit,
        n_terms: scored.n_terms,
        rmsfe: scored.rmsfe,
        rmsfe_by_variable: scored.rmsfe_by_variable,
        origins: scored.origins,
    })
}

struct Scored {
    n_terms: usize,
    rmsfe: Vec<f64>,
    rmsfe_by_variable: Vec<Vec<f64>>,
    origins: Vec<OriginForecast>,
}

/// Forecasts from each origin's estimate and accumulates squared errors.
/// A failed fit falls back to the most recent successful one.
fn score_origins(
    data: &TimeSeriesData,
    p: usize,
    t0: usize,
    horizons: usize,
    origin_times: &[usize],
    fits: &[Result<VarEstimate>],
) -> Result<Scored> {
    let big_t = data.len();
    let q = data.dim();
    let values = data.values();
    let mut last_good: Option<&VarEstimate> = None;
    let mut origins = Vec::with_capacity(origin_times.len());
    let mut sq = vec![DVector::<f64>::zeros(q); horizons];
    for (&t, fit) in origin_times.iter().zip(fits) {
        let (est, fit_error) = match fit {
            Ok(e) => {
                last_good = Some(e);
                (e, None)
            }
            Err(err) => match last_good {
                Some(e) => (e, Some(err.to_string())),
                None => return Err(err.clone()),
            },
        };
        let steps = horizons.min(big_t - t);
        let history = values.rows(t - p, p).into_owned();
        let path = forecast_path(est, &history, steps)?;
        for (i, yhat) in path.iter().enumerate() {
            let h = i + 1;
            if t + h >= t0 + horizons && t + h <= big_t {
                let err = yhat - values.row(t + h - 1).transpose();
                sq[i] += err.component_mul(&err);
            }
        }
        origins.push(OriginForecast {
            origin: t,
            forecasts: path.iter().map(|v| v.iter().copied().collect()).collect(),
            fit_error,
        });
    }
    let n_terms = big_t - t0 - horizons + 1;
    Ok(Scored {
        n_terms,
        rmsfe: sq.iter().map(|s| (s.sum() / (n_terms * q) as f64).sqrt()).collect(),
        rmsfe_by_variable: sq
            .iter()
            .map(|s| s.iter().map(|x| (x / n_terms as f64).sqrt()).collect())
            .collect(),
        origins,
    })
}

/// `⌈T^{1/3}⌉`.
pub fn default_block_length(t: usize) -> f64 {
    (t as f64).cbrt().ceil()
}

/// Draws one block length: geometric on `{1, 2, …}` with mean `expected`.
pub fn draw_block_length(expected: f64, rng: &mut ChaCha8Rng) -> usize {
    if expected <= 1.0 {
        return 1;
    }
    let g = Geometric::new(1.0 / expected).expect("probability in (0, 1]");
    1 + g.sample(rng) as usize
}

/// Row indices of one stationary-bootstrap resample of length `t`. Blocks
/// start uniformly at random and wrap around the end of the series. A block
/// length of at least `t` yields a single circular shift.
pub fn stationary_bootstrap_indices(t: usize, expected_block_length: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx = Vec::with_capacity(t);
    if expected_block_length >= t as f64 {
        let start = rng.random_range(0..t);
        idx.extend((0..t).map(|i| (start + i) % t));
        return idx;
    }
    while idx.len() < t {
        let start = rng.random_range(0..t);
        let len = draw_block_length(expected_block_length, rng).min(t - idx.len());
        idx.extend((0..len).map(|i| (start + i) % t));
    }
    idx
}

/// Stream for bootstrap sample `b`.
pub fn bootstrap_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// `samples` resampled series, each with the original length.
pub fn stationary_bootstrap(
    data: &TimeSeriesData,
    expected_block_length: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<TimeSeriesData>> {
    if expected_block_length < 1.0 || samples == 0 {
        return Err(Error::InvalidArgument(
            "block length must be at least 1 and sample count positive".into(),
        ));
    }
    (0..samples)
        .map(|b| {
            let idx = stationary_bootstrap_indices(data.len(), expected_block_length, &mut bootstrap_rng(seed, b));
            TimeSeriesData::new(data.values().select_rows(&idx))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Resamples; 0 evaluates the original series only.
    pub samples: usize,
    /// Defaults to `⌈T^{1/3}⌉`.
    pub block_length: Option<f64>,
    pub seed: u64,
}

/// One row of the model-comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct ForecastTableRow {
    pub model: ModelKind,
    pub dims: Dims,
    pub nop: usize,
    /// Average SE ratio against REVAR on the full sample.
    pub r_avg: Option<f64>,
    /// `RMSFE_h` averaged over resamples, `h = 1..=H`.
    pub rmsfe: Vec<f64>,
    /// Resamples whose evaluation failed outright.
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastTable {
    pub t: usize,
    pub t0: usize,
    pub horizons: usize,
    pub samples: usize,
    pub block_length: Option<f64>,
    pub refit: RefitPolicy,
    pub rows: Vec<ForecastTableRow>,
}

/// Evaluates every model on each bootstrap resample and averages `RMSFE_h`.
/// `dims` holds the selected `(d, u, p)`; each model uses the parts it needs.
pub fn bootstrap_forecast_table(
    data: &TimeSeriesData,
    models: &[ModelKind],
    dims: Dims,
    boot: &BootstrapConfig,
    config: &EvalConfig,
) -> Result<ForecastTable> {
    dims.validate()?;
    let block_length =
        (boot.samples > 0).then(|| boot.block_length.unwrap_or_else(|| default_block_length(data.len())));
    let series = match block_length {
        Some(l) => stationary_bootstrap(data, l, boot.samples, boot.seed)?,
        None => vec![data.clone()],
    };
    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..series.len()).map(move |s| (m, s)))
        .collect();
    let runs: Vec<Option<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(m, s)| {
            evaluate_rmsfe(&series[s], models[m], dims, config)
                .ok()
                .map(|r| r.rmsfe)
        })
        .collect();
    let r_avg = full_sample_ratios(data, dims, config).ok();
    let mut rows = Vec::with_capacity(models.len());
    for (m, &model) in models.iter().enumerate() {
        let ok: Vec<&Vec<f64>> = runs[m * series.len()..(m + 1) * series.len()]
            .iter()
            .flatten()
            .collect();
        let rmsfe = (0..config.horizons)
            .map(|h| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|r| r[h]).sum::<f64>() / ok.len() as f64
                }
            })
            .collect();
        let eff = dims.effective(model);
        rows.push(ForecastTableRow {
            model,
            dims: eff,
            nop: nop_count(model, eff)?,
            r_avg: r_avg
                .as_ref()
                .map(|r| r[ModelKind::ALL.iter().position(|&k| k == model).expect("listed")]),
            rmsfe,
            failures: series.len() - ok.len(),
        });
    }
    Ok(ForecastTable {
        t: data.len(),
        t0: config.t0(data.len()),
        horizons: config.horizons,
        samples: boot.samples,
        block_length,
        refit: config.refit,
        rows,
    })
}

/// `r_avg` for every model at the full-sample REVAR fit.
fn full_sample_ratios(data: &TimeSeriesData, dims: Dims, config: &EvalConfig) -> Result<[f64; 4]> {
    let acov = AutocovarianceSet::from_data(data, dims.p)?;
    let revar = fit_model(&acov, ModelKind::Revar, dims, config.algorithm, &config.optimizer)?;
    let pv = ParameterVectors::from_estimate(&revar, &acov.gamma_p)?;
    let all = avar_all(&pv)?;
    let mut out = [f64::NAN; 4];
    for (i, a) in all.iter().enumerate() {
        out[i] = se_ratios(&a.beta_block, &all[3].beta_block)?.r_avg;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_olsvar;
    use crate::sim::{generate_errors, simulate_var, ErrorFamily};
    use proptest::prelude::*;

    fn random_series(t: usize, q: usize, seed: u64) -> TimeSeriesData {
        let beta = DMatrix::from_fn(q, 2 * q, |i, j| {
            if i == j {
                0.4
            } else if j == i + q {
                -0.2
            } else {
                0.05
            }
        });
        let errs = generate_errors(ErrorFamily::Normal, t, &DMatrix::identity(q, q), seed).unwrap();
        simulate_var(&beta, &DMatrix::zeros(2, q), &errs).unwrap()
    }

    fn scalar_estimate(alpha: f64, beta: f64) -> VarEstimate {
        let data = random_series(50, 1, 1);
        let acov = AutocovarianceSet::from_data(
            &TimeSeriesData::new(data.values().columns(0, 1).into_owned()).unwrap(),
            1,
        )
        .unwrap();
        let mut est = fit_olsvar(&acov).unwrap();
        est.alpha = DVector::from_element(1, alpha);
        est.beta = DMatrix::from_element(1, 1, beta);
        est
    }

    #[test]
    fn scalar_forecasts() {
        let est = scalar_estimate(0.3, 0.5);
        let hist = DMatrix::from_element(1, 1, 2.0);
        assert!((forecast_h(&est, &hist, 1).unwrap()[0] - 1.3).abs() < 1e-15);
        assert!((forecast_h(&est, &hist, 2).unwrap()[0] - (0.3 + 0.5 * 1.3)).abs() < 1e-15);
        let zero = scalar_estimate(0.7, 0.0);
        for h in 1..5 {
            assert_eq!(forecast_h(&zero, &hist, h).unwrap()[0], 0.7);
        }
        assert_eq!(forecast_h(&est, &hist, 0), Err(Error::BadHorizon));
    }

    #[test]
    fn two_step_matches_companion_square() {
        let data = random_series(300, 3, 2);
        let est = fit_olsvar(&AutocovarianceSet::from_data(&data, 2).unwrap()).unwrap();
        let hist = data.values().rows(298, 2).into_owned();
        // augmented state z = (x', 1)' with F = [β α; I 0 0; 0 1]
        let (q, qp) = (3, 6);
        let mut f = DMatrix::zeros(qp + 1, qp + 1);
        f.view_mut((0, 0), (q, qp)).copy_from(&est.beta);
        f.view_mut((0, qp), (q, 1)).copy_from(&est.alpha);
        for i in q..qp {
            f[(i, i - q)] = 1.0;
        }
        f[(qp, qp)] = 1.0;
        let mut z = DVector::zeros(qp + 1);
        z.rows_mut(0, q).copy_from(&hist.row(1).transpose());
        z.rows_mut(q, q).copy_from(&hist.row(0).transpose());
        z[qp] = 1.0;
        let want = (&f * &f * z).rows(0, q).into_owned();
        assert!((forecast_h(&est, &hist, 2).unwrap() - want).amax() < 1e-10);
    }

    #[test]
    fn perfect_foresight_gives_zero_rmsfe() {
        let beta = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let data = simulate_var(
            &beta,
            &DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            &DMatrix::zeros(40, 2),
        )
        .unwrap();
        let mut exact = fit_olsvar(&AutocovarianceSet::from_data(&random_series(50, 2, 3), 1).unwrap()).unwrap();
        exact.alpha = DVector::zeros(2);
        exact.beta = beta;
        let origin_times: Vec<usize> = (20..40).collect();
        let fits: Vec<Result<VarEstimate>> = origin_times.iter().map(|_| Ok(exact.clone())).collect();
        let scored = score_origins(&data, 1, 20, 3, &origin_times, &fits).unwrap();
        assert_eq!(scored.n_terms, 18);
        assert!(scored.rmsfe.iter().all(|&r| r < 1e-15), "{:?}", scored.rmsfe);
    }

    #[test]
    fn hand_computed_two_origin_rmsfe() {
        // T = 6, T₀ = 4, H = 1: origins 4 and 5, targets y₅ and y₆
        let y = [0.0, 1.0, 0.0, 2.0, 1.0, 3.0];
        let data = TimeSeriesData::new(DMatrix::from_column_slice(6, 1, &y)).unwrap();
        let cfg = EvalConfig {
            eval_start: 4.0 / 6.0,
            horizons: 1,
            ..Default::default()
        };
        let run = evaluate_rmsfe(&data, ModelKind::Olsvar, Dims::new(1, 1, 1, 1), &cfg).unwrap();
        assert_eq!((run.t0, run.n_terms), (4, 2));
        // scalar OLS with intercept on (x, y) pairs, by hand
        let ols = |pairs: &[(f64, f64)]| {
            let n = pairs.len() as f64;
            let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
            let b = sxy / sxx;
            (my - b * mx, b)
        };
        let (a4, b4) = ols(&[(0.0, 1.0), (1.0, 0.0), (0.0, 2.0)]);
        let (a5, b5) = ols(&[(0.0, 1.0), (1.0, 0.0), (0.0, 2.0), (2.0, 1.0)]);
        let e5 = a4 + b4 * 2.0 - 1.0;
        let e6 = a5 + b5 * 1.0 - 3.0;
        let want = ((e5 * e5 + e6 * e6) / 2.0).sqrt();
        assert!((run.rmsfe[0] - want).abs() < 1e-12, "{} vs {want}", run.rmsfe[0]);
    }

    #[test]
    fn every_horizon_averages_the_same_count_and_accumulation_is_exact() {
        let data = random_series(120, 2, 4);
        let cfg = EvalConfig {
            eval_start: 0.75,
            horizons: 4,
            refit: RefitPolicy::Reuse,
            ..Default::default()
        };
        let run = evaluate_rmsfe(&data, ModelKind::Olsvar, Dims::new(2, 2, 1, 2), &cfg).unwrap();
        assert_eq!(run.n_terms, 120 - 90 - 4 + 1);
        // batch recomputation straight from stored forecasts
        for h in 1..=4 {
            let mut total = 0.0;
            let mut count = 0;
            for o in &run.origins {
                let t = o.origin;
                if t + h >= run.t0 + 4 && t + h <= run.t {
                    for j in 0..2 {
                        total += (o.forecasts[h - 1][j] - data.values()[(t + h - 1, j)]).powi(2);
                    }
                    count += 1;
                }
            }
            assert_eq!(count, run.n_terms);
            assert!(((total / (2 * count) as f64).sqrt() - run.rmsfe[h - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn forecasts_ignore_the_future() {
        let data = random_series(100, 2, 5);
        let cfg = EvalConfig::default();
        let base = evaluate_rmsfe(&data, ModelKind::Rrvar, Dims::new(1, 2, 2, 2), &cfg).unwrap();
        let origin = &base.origins[5];
        let mut shuffled = data.values().clone();
        let t = origin.origin;
        let tail: Vec<usize> = (t..100).rev().collect();
        let future = shuffled.select_rows(&tail);
        shuffled.rows_mut(t, 100 - t).copy_from(&future);
        let other = evaluate_rmsfe(
            &TimeSeriesData::new(shuffled).unwrap(),
            ModelKind::Rrvar,
            Dims::new(1, 2, 2, 2),
            &cfg,
        )
        .unwrap();
        assert_eq!(origin.forecasts, other.origins[5].forecasts);
    }

    #[test]
    fn bootstrap_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let idx = stationary_bootstrap_indices(20, 20.0, &mut rng);
        for w in idx.windows(2) {
            assert_eq!(w[1], (w[0] + 1) % 20);
        }
        // mean block length 1: every row starts a fresh block
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            assert_eq!(draw_block_length(1.0, &mut rng), 1);
        }
        let n = 100_000;
        let mean = (0..n).map(|_| draw_block_length(10.0, &mut rng)).sum::<usize>() as f64 / n as f64;
        assert!((mean - 10.0).abs() < 0.2, "{mean}");
    }

    #[test]
    fn bootstrap_is_deterministic_and_mean_preserving() {
        let data = random_series(200, 2, 8);
        let a = stationary_bootstrap(&data, 6.0, 400, 9).unwrap();
        let b = stationary_bootstrap(&data, 6.0, 400, 9).unwrap();
        assert_eq!(a[17].values(), b[17].values());
        let orig = data.values().row_mean();
        let mut avg = DMatrix::zeros(1, 2);
        for s in &a {
            avg += s.values().row_mean();
        }
        avg /= a.len() as f64;
        assert!((avg - orig).amax() < 0.05);
    }

    #[test]
    fn table_without_resampling_equals_direct_evaluation() {
        let data = random_series(120, 3, 10);
        let dims = Dims::new(1, 2, 1, 3);
        let cfg = EvalConfig {
            refit: RefitPolicy::Reuse,
            ..Default::default()
        };
        let boot = BootstrapConfig {
            samples: 0,
            block_length: None,
            seed: 0,
        };
        let table = bootstrap_forecast_table(&data, &ModelKind::ALL, dims, &boot, &cfg).unwrap();
        assert_eq!(table.rows.len(), 4);
        for row in &table.rows {
            let direct = evaluate_rmsfe(&data, row.model, dims, &cfg).unwrap();
            assert_eq!(row.rmsfe, direct.rmsfe);
            assert_eq!(row.rmsfe.len(), 4);
        }
        let revar = table.rows.iter().find(|r| r.model == ModelKind::Revar).unwrap();
        assert!((revar.r_avg.unwrap() - 1.0).abs() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn resample_rows_come_from_the_original(t in 2usize..60, l in 1.0f64..80.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let idx = stationary_bootstrap_indices(t, l, &mut rng);
            prop_assert_eq!(idx.len(), t);
            prop_assert!(idx.iter().all(|&i| i < t));
        }
    }
}
