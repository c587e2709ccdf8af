//! Minimization of the envelope objective over the Grassmannian `G(q, u)`.
//!
//! Points are represented by orthonormal `q × u` bases. Each iteration takes
//! a step along the geodesic in the direction of the negative Riemannian
//! gradient `-(I - DD')∇F(D)`, with a Barzilai-Borwein trial step and Armijo
//! backtracking, so the objective never increases.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::EnvelopeObjectiveContext;
use crate::error::{Error, Result};
use crate::matrix_kit::{orthogonal_complement, orthonormalize, svd_desc, symmetric_eigen_desc};

/// Which envelope optimizer to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Full Grassmann optimization from several starts.
    Fg,
    /// Sequential one-direction-at-a-time optimization.
    #[serde(rename = "1d")]
    OneD,
    /// FG for `q <= 10`, otherwise 1D followed by an FG polish.
    Auto,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fg" => Ok(Algorithm::Fg),
            "1d" | "oned" => Ok(Algorithm::OneD),
            "auto" => Ok(Algorithm::Auto),
            other => Err(Error::InvalidArgument(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Stop when the Riemannian gradient norm falls below this.
    pub gtol: f64,
    /// Stop when an iteration changes the objective by less than this
    /// (relative).
    pub ftol: f64,
    pub max_iter: usize,
    /// Number of FG starting points.
    pub restarts: usize,
    /// Seed for the random start.
    pub seed: u64,
    /// Whether `Auto` polishes the 1D result with FG when `q > 10`.
    pub polish: bool,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            gtol: 1e-6,
            ftol: 1e-8,
            max_iter: 500,
            restarts: 5,
            seed: 0x5eed,
            polish: true,
        }
    }
}

/// Outcome of an envelope optimization.
#[derive(Debug, Clone, Serialize)]
pub struct OptimizerReport {
    pub algorithm: Algorithm,
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    /// `false` when the iteration budget ran out before either stopping rule
    /// fired; the best iterate is still returned.
    pub converged: bool,
    /// Objective after each accepted step of the winning start.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EnvelopeSolution {
    pub basis: DMatrix<f64>,
    pub report: OptimizerReport,
}

#[derive(Debug, Clone)]
pub(crate) struct LocalResult {
    pub point: DMatrix<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// Objective after every accepted iteration, starting with the initial value.
    pub trace: Vec<f64>,
}

/// Riemannian steepest descent on `G(n, k)` for a generic objective given as
/// value-and-Euclidean-gradient.
pub(crate) fn minimize<F>(start: &DMatrix<f64>, opts: &OptimizerOptions, mut eval: F) -> Result<LocalResult>
where
    F: FnMut(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>,
{
    let mut x = orthonormalize(start);
    let (mut fx, egrad) = eval(&x)?;
    let mut g = tangent(&x, &egrad);
    let mut trace = vec![fx];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut gn = g.norm();

    while iterations < opts.max_iter {
        if gn < opts.gtol {
            converged = true;
            break;
        }
        let dir = -&g;
        let mut t = step;
        let mut accepted = None;
        while t > 1e-20 {
            let cand = geodesic(&x, &dir, t);
            match eval(&cand) {
                Ok((fc, gc)) if fc <= fx - 1e-4 * t * gn * gn => {
                    accepted = Some((cand, fc, gc, t));
                    break;
                }
                _ => t *= 0.5,
            }
        }
        iterations += 1;
        let Some((xn, fnew, egn, t_used)) = accepted else {
            // no descent possible at machine precision: stationary for our purposes
            converged = gn < opts.gtol.sqrt();
            break;
        };
        let gnew = tangent(&xn, &egn);
        // Barzilai-Borwein length for the next trial, transporting the old
        // gradient by projection onto the new tangent space
        let s = tangent(&xn, &(&dir * t_used));
        let y = &gnew - tangent(&xn, &g);
        let sy = s.dot(&y).abs();
        step = if sy > 0.0 {
            (s.dot(&s) / sy).clamp(1e-8, 1e8)
        } else {
            (t_used * 2.0).min(1e8)
        };

        let rel = (fx - fnew).abs() / fx.abs().max(1.0);
        x = xn;
        fx = fnew;
        g = gnew;
        gn = g.norm();
        trace.push(fx);
        if rel < opts.ftol {
            converged = true;
            break;
        }
    }
    if !converged && gn < opts.gtol {
        converged = true;
    }
    Ok(LocalResult {
        point: x,
        value: fx,
        iterations,
        grad_norm: gn,
        converged,
        trace,
    })
}

fn tangent(x: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    g - x * (x.transpose() * g)
}

/// Point at distance `t` along the geodesic from `x` with tangent `h`.
fn geodesic(x: &DMatrix<f64>, h: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let (u, s, vt) = svd_desc(h);
    let v = vt.transpose();
    let k = s.len();
    let mut cos = DMatrix::zeros(k, k);
    let mut sin = DMatrix::zeros(k, k);
    for i in 0..k {
        cos[(i, i)] = (s[i] * t).cos();
        sin[(i, i)] = (s[i] * t).sin();
    }
    let out = x * &v * cos * &vt + u * sin * &vt;
    let drift = (out.transpose() * &out - DMatrix::identity(out.ncols(), out.ncols())).amax();
    if drift > 1e-12 {
        polar(&out)
    } else {
        out
    }
}

/// Closest orthonormal matrix.
fn polar(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, _, vt) = svd_desc(m);
    u * vt
}

fn top_eigenvectors(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (_, vecs) = symmetric_eigen_desc(&((m + m.transpose()) * 0.5));
    vecs.columns(0, k).into_owned()
}

fn random_basis(q: usize, u: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::from_fn(q, u, |_, _| rng.random::<f64>() - 0.5);
    orthonormalize(&m)
}

fn check_dims(ctx: &EnvelopeObjectiveContext, u: usize) -> Result<()> {
    if u == 0 || u > ctx.q || ctx.d > u {
        return Err(Error::BadDims(format!(
            "need d <= u <= q, got d={}, u={}, q={}",
            ctx.d, u, ctx.q
        )));
    }
    Ok(())
}

/// Full Grassmann optimization from the top-u eigenvectors of Γ̂₀, Γ̂_{y|x}
/// and Γ̂_{y∘x}, the 1D solution, and random draws; the lowest final
/// objective wins, ties going to the earlier start.
pub fn optimize_envelope_fg(
    ctx: &EnvelopeObjectiveContext,
    u: usize,
    opts: &OptimizerOptions,
) -> Result<EnvelopeSolution> {
    check_dims(ctx, u)?;
    if u == ctx.q {
        return Ok(full_space(ctx, Algorithm::Fg));
    }
    let mut starts = vec![
        top_eigenvectors(ctx.gamma0(), u),
        top_eigenvectors(ctx.gamma_y_given_x(), u),
        top_eigenvectors(ctx.gamma_y_fitted(), u),
    ];
    if opts.restarts > 3 {
        starts.push(optimize_envelope_1d(ctx, u, opts)?.basis);
    }
    let mut extra = 0u64;
    while starts.len() < opts.restarts.max(1) {
        starts.push(random_basis(ctx.q, u, opts.seed.wrapping_add(extra)));
        extra += 1;
    }
    starts.truncate(opts.restarts.max(1));
    run_from_starts(ctx, &starts, opts, Algorithm::Fg)
}

fn run_from_starts(
    ctx: &EnvelopeObjectiveContext,
    starts: &[DMatrix<f64>],
    opts: &OptimizerOptions,
    algorithm: Algorithm,
) -> Result<EnvelopeSolution> {
    let mut best: Option<LocalResult> = None;
    let mut total_iter = 0;
    let mut last_err = None;
    for s in starts {
        match minimize(s, opts, |x| ctx.value_and_gradient(x)) {
            Ok(res) => {
                total_iter += res.iterations;
                if best.as_ref().is_none_or(|b| res.value < b.value) {
                    best = Some(res);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let best = best.ok_or_else(|| last_err.unwrap_or(Error::DegenerateCandidate))?;
    Ok(EnvelopeSolution {
        report: OptimizerReport {
            algorithm,
            objective: best.value,
            iterations: total_iter,
            grad_norm: best.grad_norm,
            converged: best.converged,
            trace: best.trace,
        },
        basis: best.point,
    })
}

fn full_space(ctx: &EnvelopeObjectiveContext, algorithm: Algorithm) -> EnvelopeSolution {
    let basis = DMatrix::identity(ctx.q, ctx.q);
    let objective = ctx.value(&basis).unwrap_or(f64::NAN);
    EnvelopeSolution {
        basis,
        report: OptimizerReport {
            algorithm,
            objective,
            iterations: 0,
            grad_norm: 0.0,
            converged: true,
            trace: vec![objective],
        },
    }
}

/// Builds the envelope one direction at a time. Step `k` keeps the `k`
/// directions found so far and minimizes the objective, truncated at rank
/// `min(d, k + 1)`, over unit vectors in their orthogonal complement.
pub fn optimize_envelope_1d(
    ctx: &EnvelopeObjectiveContext,
    u: usize,
    opts: &OptimizerOptions,
) -> Result<EnvelopeSolution> {
    check_dims(ctx, u)?;
    if u == ctx.q {
        return Ok(full_space(ctx, Algorithm::OneD));
    }
    let q = ctx.q;
    let mut basis = DMatrix::<f64>::zeros(q, 0);
    let mut total_iter = 0;
    let mut all_converged = true;
    let mut last_grad = 0.0;
    let mut last_trace = Vec::new();
    for k in 0..u {
        let step_ctx = ctx.with_rank(ctx.d.min(k + 1));
        let comp = if k == 0 {
            DMatrix::identity(q, q)
        } else {
            orthogonal_complement(&basis)
        };
        let m = comp.ncols();
        let extend = |w: &DMatrix<f64>| -> DMatrix<f64> {
            let mut full = DMatrix::zeros(q, k + 1);
            full.columns_mut(0, k).copy_from(&basis);
            full.set_column(k, &(&comp * w).column(0));
            full
        };

        // seed from eigenvectors of the deflated moment matrices
        let mut candidates: Vec<(f64, DMatrix<f64>)> = Vec::new();
        for source in [ctx.gamma_y_given_x(), ctx.gamma0(), ctx.gamma_y_fitted()] {
            let reduced = comp.transpose() * source * &comp;
            let (_, vecs) = symmetric_eigen_desc(&((&reduced + reduced.transpose()) * 0.5));
            for j in 0..m {
                let w = vecs.columns(j, 1).into_owned();
                if let Ok(v) = step_ctx.value(&extend(&w)) {
                    candidates.push((v, w));
                }
            }
        }
        if candidates.is_empty() {
            return Err(Error::DegenerateCandidate);
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut best: Option<LocalResult> = None;
        for (_, w0) in candidates.iter().take(3) {
            let res = minimize(w0, opts, |w| {
                let full = extend(w);
                let (v, g) = step_ctx.value_and_gradient(&full)?;
                let gw = comp.transpose() * g.column(k);
                Ok((v, DMatrix::from_column_slice(m, 1, gw.as_slice())))
            })?;
            total_iter += res.iterations;
            if best.as_ref().is_none_or(|b| res.value < b.value) {
                best = Some(res);
            }
        }
        let best = best.expect("at least one candidate");
        all_converged &= best.converged;
        last_grad = best.grad_norm;
        last_trace = best.trace.clone();
        basis = extend(&best.point);
    }
    let objective = ctx.value(&basis)?;
    Ok(EnvelopeSolution {
        basis,
        report: OptimizerReport {
            algorithm: Algorithm::OneD,
            objective,
            iterations: total_iter,
            grad_norm: last_grad,
            converged: all_converged,
            trace: last_trace,
        },
    })
}

/// Dispatches on `algorithm`.
pub fn optimize_envelope(
    ctx: &EnvelopeObjectiveContext,
    u: usize,
    algorithm: Algorithm,
    opts: &OptimizerOptions,
) -> Result<EnvelopeSolution> {
    match algorithm {
        Algorithm::Fg => optimize_envelope_fg(ctx, u, opts),
        Algorithm::OneD => optimize_envelope_1d(ctx, u, opts),
        Algorithm::Auto => {
            if ctx.q <= 10 {
                let mut sol = optimize_envelope_fg(ctx, u, opts)?;
                sol.report.algorithm = Algorithm::Auto;
                return Ok(sol);
            }
            let mut sol = optimize_envelope_1d(ctx, u, opts)?;
            if opts.polish && u < ctx.q {
                let polished = run_from_starts(ctx, std::slice::from_ref(&sol.basis), opts, Algorithm::Auto)?;
                // keep the 1D answer unless the polish gains something real
                if polished.report.objective < sol.report.objective - 1e-6 {
                    sol = polished;
                } else {
                    sol.report.iterations += polished.report.iterations;
                }
            }
            sol.report.algorithm = Algorithm::Auto;
            Ok(sol)
        }
    }
}


#[cfg(test)]
mod oracle_tests {
    use super::*;
    use crate::moments::{AutocovarianceSet, TimeSeriesData};
    use rand_distr::{Distribution, StandardNormal};

    fn bivariate(seed: u64) -> AutocovarianceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta: DMatrix<f64> = DMatrix::from_fn(2, 2, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            0.3 * z
        });
        let mix: DMatrix<f64> =
            DMatrix::from_fn(2, 2, |_, _| StandardNormal.sample(&mut rng)) + DMatrix::identity(2, 2);
        let t = 300;
        let mut y = DMatrix::<f64>::zeros(t, 2);
        for r in 1..t {
            let e: DMatrix<f64> = DMatrix::from_fn(2, 1, |_, _| StandardNormal.sample(&mut rng));
            let next = &beta * y.row(r - 1).transpose() + &mix * e;
            y.set_row(r, &next.transpose());
        }
        AutocovarianceSet::from_data(&TimeSeriesData::new(y).unwrap(), 1).unwrap()
    }

    /// Angle in [0, 180) degrees of a line through the origin.
    fn line_angle(v: &DMatrix<f64>) -> f64 {
        v[(1, 0)].atan2(v[(0, 0)]).to_degrees().rem_euclid(180.0)
    }

    fn angular_gap(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(180.0);
        d.min(180.0 - d)
    }

    fn grid_minimizer(ctx: &EnvelopeObjectiveContext) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..3600 {
            let deg = k as f64 * 0.05;
            let r = deg.to_radians();
            let v = DMatrix::from_column_slice(2, 1, &[r.cos(), r.sin()]);
            if let Ok(f) = ctx.value(&v) {
                if f < best.0 {
                    best = (f, deg);
                }
            }
        }
        best.1
    }

    #[test]
    fn matches_grid_search_on_the_circle() {
        let opts = OptimizerOptions::default();
        for seed in 0..10 {
            let ctx = EnvelopeObjectiveContext::new(&bivariate(seed), 1).unwrap();
            let grid = grid_minimizer(&ctx);
            let fg = optimize_envelope_fg(&ctx, 1, &opts).unwrap();
            let od = optimize_envelope_1d(&ctx, 1, &opts).unwrap();
            assert!(angular_gap(line_angle(&fg.basis), grid) < 0.1, "seed {seed}");
            assert!(angular_gap(line_angle(&od.basis), grid) < 0.5, "seed {seed}");
            assert!(fg.report.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn full_dimension_returns_identity() {
        let ctx = EnvelopeObjectiveContext::new(&bivariate(1), 1).unwrap();
        let sol = optimize_envelope_fg(&ctx, 2, &OptimizerOptions::default()).unwrap();
        assert_eq!(sol.basis, DMatrix::identity(2, 2));
        let sol = optimize_envelope_1d(&ctx, 2, &OptimizerOptions::default()).unwrap();
        assert_eq!(sol.basis, DMatrix::identity(2, 2));
        assert!(optimize_envelope_fg(&ctx, 3, &OptimizerOptions::default()).is_err());
    }
}
