//! Lag order, rank and envelope dimension selection.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimators::{
    fit_olsvar, fit_revar, mean_only_loglik, nop_count, Algorithm, Dims, ModelKind, OptimizerOptions,
};
use crate::matrix_kit::{singular_values_desc, sym_power, Exponent, SymmetricMatrix};
use crate::moments::{AutocovarianceSet, LagDesign, TimeSeriesData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl Criterion {
    /// Penalty per parameter on the `-2 log L` scale.
    pub fn penalty(self, n: usize) -> f64 {
        match self {
            Criterion::Aic => 2.0,
            Criterion::Bic => (n as f64).ln(),
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        })
    }
}

/// How the envelope dimension (and possibly the rank) is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum DimsMode {
    /// Information criterion over every `(d, u)` with `1 <= d <= u <= q`, plus
    /// the intercept-only cell `(0, 0)`.
    GridIc,
    /// Information criterion over `u = d..=q` for a given rank.
    GivenRank { d: usize },
    /// Rank by the sequential chi-squared test, then `u` by sequential
    /// likelihood-ratio tests against `u = q`.
    Sequential,
}

/// One row of a selection grid. Fields that do not apply stay `None`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Candidate {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nop: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loglik: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    /// Set when the fit for this cell failed; such cells are never chosen.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Chosen {
    pub p: Option<usize>,
    pub d: Option<usize>,
    pub u: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub procedure: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<Criterion>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Effective sample size.
    pub n: usize,
    pub candidates: Vec<Candidate>,
    pub chosen: Chosen,
}

/// Picks the minimum criterion among non-failed candidates; earlier
/// candidates win ties, so grids must be listed smallest-first.
fn argmin(cands: &[Candidate]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cands.iter().enumerate() {
        let Some(v) = c.criterion else { continue };
        if c.failure.is_some() || !v.is_finite() {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Lag order by AIC or BIC over `p = 0..=p_max`, all candidates sharing the
/// sample that starts at row `p_max`.
pub fn select_lag(data: &TimeSeriesData, p_max: usize, criterion: Criterion) -> Result<SelectionReport> {
    if p_max == 0 {
        return Err(Error::InvalidArgument("p_max must be at least 1".into()));
    }
    let (t, q) = (data.len(), data.dim());
    let required = q * p_max + 2 + p_max;
    if t < required {
        return Err(Error::TooShort { rows: t, required });
    }
    let n = t - p_max;
    let scale = criterion.penalty(n) / n as f64;
    let mut candidates = Vec::with_capacity(p_max + 1);
    for p in 0..=p_max {
        let sigma = if p == 0 {
            let y = data.values().rows(p_max, n);
            let mean = y.row_mean();
            let mut c = y.into_owned();
            for mut row in c.row_iter_mut() {
                row -= &mean;
            }
            SymmetricMatrix::new(c.transpose() * &c / n as f64)
        } else {
            let design = LagDesign::embed(data.values(), p, p_max);
            AutocovarianceSet::from_design(&design)?.gamma_y_given_x
        };
        let nop = q * q * p + q * (q + 1) / 2;
        let mut cand = Candidate {
            p: Some(p),
            nop: Some(nop),
            ..Default::default()
        };
        match sigma.log_det() {
            Ok(ld) => cand.criterion = Some(ld + scale * nop as f64),
            Err(e) => cand.failure = Some(e.to_string()),
        }
        candidates.push(cand);
    }
    let chosen = argmin(&candidates).and_then(|i| candidates[i].p);
    Ok(SelectionReport {
        procedure: "lag".into(),
        criterion: Some(criterion),
        alpha: None,
        n,
        candidates,
        chosen: Chosen {
            p: chosen,
            ..Default::default()
        },
    })
}

/// Chi-squared test of `rank(β) = d0` against a larger rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankTest {
    pub d0: usize,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

fn chi2_upper(statistic: f64, df: usize) -> f64 {
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    dist.sf(statistic.max(0.0))
}

/// Singular values of `√((n-qp-1)/n) Γ̂₍ₚ₎^{1/2} β̂'_OLS Γ̂_{y|x}^{-1/2}`.
fn standardized_singular_values(acov: &AutocovarianceSet) -> Result<Vec<f64>> {
    let (n, q, p) = (acov.n, acov.q, acov.p);
    let ols = fit_olsvar(acov)?;
    let gp_half = sym_power(&acov.gamma_p, Exponent::Half)?;
    let resid = sym_power(&acov.gamma_y_given_x, Exponent::NegHalf).map_err(|_| Error::SingularGram)?;
    let factor = ((n as f64 - (q * p) as f64 - 1.0) / n as f64).max(0.0).sqrt();
    let std: DMatrix<f64> = gp_half.as_matrix() * ols.beta.transpose() * resid.as_matrix() * factor;
    Ok(singular_values_desc(&std).iter().copied().collect())
}

pub fn rank_test(acov: &AutocovarianceSet, d0: usize) -> Result<RankTest> {
    let q = acov.q;
    if d0 >= q {
        return Err(Error::BadRank {
            d: d0,
            max: q.saturating_sub(1),
        });
    }
    let lambdas = standardized_singular_values(acov)?;
    Ok(rank_test_from(&lambdas, acov, d0))
}

fn rank_test_from(lambdas: &[f64], acov: &AutocovarianceSet, d0: usize) -> RankTest {
    let (q, qp) = (acov.q, acov.q * acov.p);
    let statistic = acov.n as f64 * lambdas.iter().skip(d0).map(|l| l * l).sum::<f64>();
    let df = (qp - d0) * (q - d0);
    RankTest {
        d0,
        statistic,
        df,
        p_value: chi2_upper(statistic, df),
    }
}

/// Tests `d0 = 0, 1, …` in turn and stops at the first non-rejection; `q`
/// if every test rejects.
pub fn select_rank(acov: &AutocovarianceSet, alpha: f64) -> Result<SelectionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let lambdas = standardized_singular_values(acov)?;
    let mut candidates = Vec::new();
    let mut chosen = acov.q;
    for d0 in 0..acov.q {
        let t = rank_test_from(&lambdas, acov, d0);
        candidates.push(Candidate {
            d: Some(d0),
            statistic: Some(t.statistic),
            df: Some(t.df),
            p_value: Some(t.p_value),
            ..Default::default()
        });
        if t.p_value > alpha {
            chosen = d0;
            break;
        }
    }
    Ok(SelectionReport {
        procedure: "rank".into(),
        criterion: None,
        alpha: Some(alpha),
        n: acov.n,
        candidates,
        chosen: Chosen {
            p: Some(acov.p),
            d: Some(chosen),
            u: None,
        },
    })
}

fn ic_cell(
    acov: &AutocovarianceSet,
    d: usize,
    u: usize,
    criterion: Criterion,
    algorithm: Algorithm,
    opts: &OptimizerOptions,
) -> Candidate {
    let mut cand = Candidate {
        d: Some(d),
        u: Some(u),
        ..Default::default()
    };
    let fitted = if d == 0 {
        mean_only_loglik(acov).map(|l| (l, acov.q * (acov.q + 1) / 2))
    } else {
        fit_revar(acov, d, u, algorithm, opts).and_then(|f| {
            let nop = nop_count(ModelKind::Revar, Dims::new(d, u, acov.p, acov.q))?;
            Ok((f.loglik, nop))
        })
    };
    match fitted {
        Ok((l, nop)) if l.is_finite() => {
            cand.loglik = Some(l);
            cand.nop = Some(nop);
            cand.criterion = Some(criterion.penalty(acov.n) * nop as f64 - 2.0 * l);
        }
        Ok(_) => cand.failure = Some("non-finite log-likelihood".into()),
        Err(e) => cand.failure = Some(e.to_string()),
    }
    cand
}

/// Envelope dimension (and, for the grid and sequential modes, the rank).
pub fn select_dims(
    acov: &AutocovarianceSet,
    mode: DimsMode,
    criterion: Criterion,
    alpha: f64,
    algorithm: Algorithm,
    opts: &OptimizerOptions,
) -> Result<SelectionReport> {
    let q = acov.q;
    match mode {
        DimsMode::GridIc | DimsMode::GivenRank { .. } => {
            let cells: Vec<(usize, usize)> = match mode {
                DimsMode::GivenRank { d } => {
                    if d == 0 || d > q {
                        return Err(Error::BadRank { d, max: q });
                    }
                    (d..=q).map(|u| (d, u)).collect()
                }
                _ => std::iter::once((0, 0))
                    .chain((1..=q).flat_map(|d| (d..=q).map(move |u| (d, u))))
                    .collect(),
            };
            let candidates: Vec<Candidate> = cells
                .par_iter()
                .map(|&(d, u)| ic_cell(acov, d, u, criterion, algorithm, opts))
                .collect();
            let best = argmin(&candidates);
            Ok(SelectionReport {
                procedure: match mode {
                    DimsMode::GridIc => "dims-grid".into(),
                    _ => "dims-given-rank".into(),
                },
                criterion: Some(criterion),
                alpha: None,
                n: acov.n,
                chosen: Chosen {
                    p: Some(acov.p),
                    d: best.and_then(|i| candidates[i].d),
                    u: best.and_then(|i| candidates[i].u),
                },
                candidates,
            })
        }
        DimsMode::Sequential => {
            let rank = select_rank(acov, alpha)?;
            let d = rank.chosen.d.expect("rank chosen");
            let mut candidates = rank.candidates;
            if d == 0 {
                return Ok(SelectionReport {
                    procedure: "dims-sequential".into(),
                    criterion: None,
                    alpha: Some(alpha),
                    n: acov.n,
                    candidates,
                    chosen: Chosen {
                        p: Some(acov.p),
                        d: Some(0),
                        u: Some(0),
                    },
                });
            }
            let full = fit_revar(acov, d, q, algorithm, opts)?.loglik;
            let fits: Vec<Result<f64>> = (d..q)
                .into_par_iter()
                .map(|u0| fit_revar(acov, d, u0, algorithm, opts).map(|f| f.loglik))
                .collect();
            let mut chosen_u = q;
            for (u0, fit) in (d..q).zip(fits) {
                let mut cand = Candidate {
                    d: Some(d),
                    u: Some(u0),
                    ..Default::default()
                };
                match fit {
                    Ok(l) => {
                        let statistic = (2.0 * (full - l)).max(0.0);
                        let df = (q - u0) * d;
                        let p_value = chi2_upper(statistic, df);
                        cand.loglik = Some(l);
                        cand.statistic = Some(statistic);
                        cand.df = Some(df);
                        cand.p_value = Some(p_value);
                        candidates.push(cand);
                        if p_value > alpha {
                            chosen_u = u0;
                            break;
                        }
                    }
                    Err(e) => {
                        cand.failure = Some(e.to_string());
                        candidates.push(cand);
                    }
                }
            }
            Ok(SelectionReport {
                procedure: "dims-sequential".into(),
                criterion: None,
                alpha: Some(alpha),
                n: acov.n,
                candidates,
                chosen: Chosen {
                    p: Some(acov.p),
                    d: Some(d),
                    u: Some(chosen_u),
                },
            })
        }
    }
}

/// Lag order first, then rank and envelope dimension on the chosen lag.
pub fn select_staged(
    data: &TimeSeriesData,
    p_max: usize,
    mode: DimsMode,
    criterion: Criterion,
    alpha: f64,
    algorithm: Algorithm,
    opts: &OptimizerOptions,
) -> Result<(SelectionReport, Option<SelectionReport>)> {
    let lag = select_lag(data, p_max, criterion)?;
    let p = lag.chosen.p.unwrap_or(0);
    if p == 0 {
        return Ok((lag, None));
    }
    let acov = AutocovarianceSet::from_data(data, p)?;
    let dims = select_dims(&acov, mode, criterion, alpha, algorithm, opts)?;
    Ok((lag, Some(dims)))
}
