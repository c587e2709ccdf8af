use clap::ValueEnum;
use nalgebra::DMatrix;
use revar::asymptotics::{avar, ParameterVectors};
use revar::estimators::RankFactors;
use revar::sim::{McRow, SelectionRow};
use revar::{
    bootstrap_forecast_table, fit_model, run_monte_carlo, run_selection_study, select_dims, select_lag, select_staged,
    AutocovarianceSet, BootstrapConfig, Criterion, Dims, DimsMode, EvalConfig, McReport, ModelKind, OptimizerReport,
    SelectionReport, SelectionStudy, SimulationScenario,
};
use serde::Serialize;

use crate::io::{fmt_f64, fmt_opt, lag_labels, read_series, series_names, CliError, CliResult, OutDir};
use crate::{FitArgs, ForecastArgs, RunSummary, SelectArgs, SelectMode, SimulateArgs, Study};

/// Scenario files shipped with the binary, addressable by `--builtin`.
const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    (
        "typical-3417-normal",
        include_str!("../scenarios/typical_3417_normal.toml"),
    ),
    (
        "typical-3417-sv-mds",
        include_str!("../scenarios/typical_3417_sv_mds.toml"),
    ),
    ("selection-3517", include_str!("../scenarios/selection_3517.toml")),
];

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k}")).collect()
}

#[derive(Serialize)]
struct FitRecord {
    model: ModelKind,
    dims: Dims,
    n: usize,
    nop: usize,
    loglik: f64,
    aic: f64,
    bic: f64,
    converged: bool,
    optimizer: Option<OptimizerReport>,
    alpha: Vec<f64>,
    beta: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    phi: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank_a: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank_b: Option<Vec<Vec<f64>>>,
    /// Asymptotic standard errors of `β̂`, laid out like `β̂`.
    se_beta: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    se_error: Option<String>,
}

fn requested_dims(model: ModelKind, a: &FitArgs, q: usize) -> CliResult<Dims> {
    let need =
        |v: Option<usize>, flag: &str| v.ok_or_else(|| CliError::new("usage", format!("{model} needs --{flag}")));
    let (d, u) = match model {
        ModelKind::Olsvar => (q, q),
        ModelKind::Rrvar => (need(a.d, "d")?, q),
        ModelKind::Evar => {
            let u = need(a.u, "u")?;
            (u, u)
        }
        ModelKind::Revar => (need(a.d, "d")?, need(a.u, "u")?),
    };
    let dims = Dims::new(d, u, a.p, q);
    dims.validate().map_err(|e| CliError::new("usage", e.to_string()))?;
    Ok(dims)
}

pub fn fit(a: &FitArgs, out: &mut OutDir) -> CliResult<RunSummary> {
    let data = read_series(&a.input)?;
    let q = data.dim();
    let names = series_names(&data);
    let models = a.model.models();
    let dims: Vec<Dims> = models
        .iter()
        .map(|&m| requested_dims(m, a, q))
        .collect::<CliResult<_>>()?;
    let acov = AutocovarianceSet::from_data(&data, a.p)?;
    let opts = a.optimizer.options();
    let mut summary = RunSummary {
        seeds: vec![a.optimizer.seed],
        ..Default::default()
    };
    let mut records = Vec::new();
    let mut table = Vec::new();
    for (&model, &dims) in models.iter().zip(&dims) {
        let est = fit_model(&acov, model, dims, a.optimizer.algorithm, &opts)?;
        let tag = model.name().to_ascii_lowercase();
        if !est.converged() {
            summary
                .warnings
                .push(format!("{model}: optimizer hit its iteration cap"));
        }
        let se = ParameterVectors::from_estimate(&est, &acov.gamma_p)
            .and_then(|pv| avar(model, &pv))
            .map(|av| DMatrix::from_column_slice(q, q * a.p, av.standard_errors(est.n).as_slice()));
        let n = est.n;
        let aic = -2.0 * est.loglik + Criterion::Aic.penalty(n) * est.nop as f64;
        let bic = -2.0 * est.loglik + Criterion::Bic.penalty(n) * est.nop as f64;

        let lags = lag_labels(&names, a.p);
        out.matrix(&format!("{tag}_beta.csv"), &est.beta, Some(&lags))?;
        out.matrix(&format!("{tag}_sigma.csv"), est.sigma.as_matrix(), Some(&names))?;
        out.matrix(
            &format!("{tag}_alpha.csv"),
            &DMatrix::from_row_slice(1, q, est.alpha.as_slice()),
            Some(&names),
        )?;
        if let Ok(se) = &se {
            out.matrix(&format!("{tag}_se_beta.csv"), se, Some(&lags))?;
        }
        if let Some(phi) = est.phi() {
            out.matrix(&format!("{tag}_phi.csv"), phi, Some(&numbered("phi", phi.ncols())))?;
        }
        if let Some(RankFactors { a: fa, b: fb }) = &est.rank_factors {
            out.matrix(&format!("{tag}_rank_a.csv"), fa, Some(&numbered("a", fa.ncols())))?;
            out.matrix(&format!("{tag}_rank_b.csv"), fb, Some(&lags))?;
        }
        table.push(vec![
            model.name().to_string(),
            dims.d.to_string(),
            dims.u.to_string(),
            dims.p.to_string(),
            est.nop.to_string(),
            n.to_string(),
            fmt_f64(est.loglik),
            fmt_f64(aic),
            fmt_f64(bic),
            est.converged().to_string(),
        ]);
        println!(
            "{model}: loglik {} NOP {} BIC {}",
            fmt_f64(est.loglik),
            est.nop,
            fmt_f64(bic)
        );
        records.push(FitRecord {
            model,
            dims,
            n,
            nop: est.nop,
            loglik: est.loglik,
            aic,
            bic,
            converged: est.converged(),
            optimizer: est.optimizer.clone(),
            alpha: est.alpha.iter().copied().collect(),
            beta: rows_of(&est.beta),
            sigma: rows_of(est.sigma.as_matrix()),
            phi: est.phi().map(rows_of),
            rank_a: est.rank_factors.as_ref().map(|f| rows_of(&f.a)),
            rank_b: est.rank_factors.as_ref().map(|f| rows_of(&f.b)),
            se_beta: se.as_ref().ok().map(rows_of),
            se_error: se.err().map(|e| e.to_string()),
        });
    }
    out.table(
        "summary.csv",
        &["model", "d", "u", "p", "NOP", "n", "loglik", "aic", "bic", "converged"],
        &table,
    )?;
    out.json("fit.json", &records)?;
    Ok(summary)
}

fn candidate_rows(report: &SelectionReport) -> Vec<Vec<String>> {
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    report
        .candidates
        .iter()
        .map(|c| {
            vec![
                report.procedure.clone(),
                opt(c.p),
                opt(c.d),
                opt(c.u),
                opt(c.nop),
                fmt_opt(c.loglik),
                fmt_opt(c.criterion),
                fmt_opt(c.statistic),
                opt(c.df),
                fmt_opt(c.p_value),
                c.failure.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

const GRID_HEADER: [&str; 11] = [
    "procedure",
    "p",
    "d",
    "u",
    "NOP",
    "loglik",
    "criterion",
    "statistic",
    "df",
    "p_value",
    "failure",
];

#[derive(Serialize)]
struct SelectionOutput<'a> {
    mode: SelectMode,
    p: usize,
    d: Option<usize>,
    u: Option<usize>,
    lag: &'a SelectionReport,
    dims: Option<&'a SelectionReport>,
}

fn dims_mode(mode: SelectMode, d: Option<usize>) -> CliResult<DimsMode> {
    Ok(match mode {
        SelectMode::Grid => DimsMode::GridIc,
        SelectMode::Sequential => DimsMode::Sequential,
        SelectMode::GivenRank => DimsMode::GivenRank {
            d: d.ok_or_else(|| CliError::new("usage", "--mode given-rank needs --d"))?,
        },
    })
}

pub fn select(a: &SelectArgs, out: &mut OutDir) -> CliResult<RunSummary> {
    let data = read_series(&a.input)?;
    let mode = dims_mode(a.mode, a.d)?;
    let opts = a.optimizer.options();
    let (lag, dims) = select_staged(&data, a.pmax, mode, a.criterion, a.alpha, a.optimizer.algorithm, &opts)?;
    let p = lag.chosen.p.unwrap_or(0);
    let (d, u) = dims.as_ref().map_or((None, None), |r| (r.chosen.d, r.chosen.u));
    let mut rows = candidate_rows(&lag);
    if let Some(r) = &dims {
        rows.extend(candidate_rows(r));
    }
    out.table("selection_grid.csv", &GRID_HEADER, &rows)?;
    out.json(
        "selection.json",
        &SelectionOutput {
            mode: a.mode,
            p,
            d,
            u,
            lag: &lag,
            dims: dims.as_ref(),
        },
    )?;
    let show = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
    let mode_name = a
        .mode
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();
    println!("p={p} d={} u={} (mode {mode_name})", show(d), show(u));
    let mut summary = RunSummary {
        seeds: vec![a.optimizer.seed],
        ..Default::default()
    };
    if let Some(r) = &dims {
        for c in r.candidates.iter().filter(|c| c.failure.is_some()) {
            summary.warnings.push(format!(
                "candidate d={:?} u={:?} failed: {}",
                c.d,
                c.u,
                c.failure.as_deref().unwrap_or_default()
            ));
        }
    }
    Ok(summary)
}

struct NamedScenario {
    name: String,
    scenario: SimulationScenario,
}

fn parse_scenario(mut table: toml::Table, index: usize) -> CliResult<NamedScenario> {
    let name = match table.remove("name") {
        Some(toml::Value::String(s)) => Some(s),
        Some(_) => return Err(CliError::new("input", "scenario `name` must be a string")),
        None => None,
    };
    let scenario: SimulationScenario = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::new("input", format!("scenario {}: {}", index + 1, e.message())))?;
    let name = name.unwrap_or_else(|| {
        format!(
            "d{}-u{}-p{}-q{}-{}",
            scenario.d, scenario.u, scenario.p, scenario.q, scenario.errors
        )
    });
    Ok(NamedScenario { name, scenario })
}

fn load_scenarios(a: &SimulateArgs) -> CliResult<Vec<NamedScenario>> {
    let text = match (&a.config, &a.builtin) {
        (Some(path), _) => {
            std::fs::read_to_string(path).map_err(|e| CliError::new("input", format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => BUILTIN_SCENARIOS
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| {
                let known: Vec<&str> = BUILTIN_SCENARIOS.iter().map(|(n, _)| *n).collect();
                CliError::new(
                    "usage",
                    format!("unknown builtin `{name}`; known: {}", known.join(", ")),
                )
            })?,
        (None, None) => return Err(CliError::new("usage", "give --config or --builtin")),
    };
    let mut root: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::new("input", format!("scenario file: {}", e.message())))?;
    let tables = match root.remove("scenario") {
        Some(toml::Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                toml::Value::Table(t) => Ok(t),
                _ => Err(CliError::new("input", "`scenario` entries must be tables")),
            })
            .collect::<CliResult<Vec<_>>>()?,
        Some(_) => return Err(CliError::new("input", "`scenario` must be an array of tables")),
        None => vec![root],
    };
    if tables.is_empty() {
        return Err(CliError::new("input", "scenario file has no scenarios"));
    }
    let mut scenarios = tables
        .into_iter()
        .enumerate()
        .map(|(i, t)| parse_scenario(t, i))
        .collect::<CliResult<Vec<_>>>()?;
    for s in &mut scenarios {
        if let Some(seed) = a.seed {
            s.scenario.seed = seed;
        }
        if let Some(r) = a.replications {
            s.scenario.replications = r;
        }
        s.scenario
            .validate()
            .map_err(|e| CliError::new("input", format!("{}: {e}", s.name)))?;
    }
    Ok(scenarios)
}

#[derive(Serialize)]
struct ScenarioResult {
    name: String,
    scenario: SimulationScenario,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<McReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    selection: Option<SelectionStudy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn mc_row(name: &str, r: &McRow) -> Vec<String> {
    vec![
        name.to_string(),
        r.t.to_string(),
        r.model.name().to_string(),
        fmt_f64(r.mean_error),
        fmt_f64(r.se_mean),
        fmt_opt(r.r_min),
        fmt_opt(r.r_max),
        fmt_opt(r.r_avg),
        r.failures.to_string(),
        "ok".into(),
    ]
}

fn selection_row(name: &str, r: &SelectionRow) -> Vec<String> {
    vec![
        name.to_string(),
        r.t.to_string(),
        fmt_f64(r.p_correct),
        fmt_f64(r.d_correct),
        fmt_f64(r.u_correct),
        fmt_f64(r.u_over),
        fmt_f64(r.u_under),
        r.failures.to_string(),
        "ok".into(),
    ]
}

fn failure_row(name: &str, width: usize, replications: usize, err: &revar::Error) -> Vec<String> {
    let mut row = vec![name.to_string()];
    row.resize(width - 2, String::new());
    row.push(replications.to_string());
    row.push(err.to_string());
    row
}

const MC_HEADER: [&str; 10] = [
    "scenario",
    "T",
    "model",
    "mean_error",
    "se_mean",
    "r_min",
    "r_max",
    "r_avg",
    "failures",
    "status",
];
const SELECTION_HEADER: [&str; 9] = [
    "scenario",
    "T",
    "p_correct",
    "d_correct",
    "u_correct",
    "u_over",
    "u_under",
    "failures",
    "status",
];

/// Only a failed parameter draw becomes a failure row; anything else is a
/// configuration problem and aborts the run.
fn tolerate(err: revar::Error) -> CliResult<revar::Error> {
    match err {
        revar::Error::CannotStabilize { .. } => Ok(err),
        other => Err(other.into()),
    }
}

pub fn simulate(a: &SimulateArgs, out: &mut OutDir) -> CliResult<RunSummary> {
    let scenarios = load_scenarios(a)?;
    let mut summary = RunSummary::default();
    let mut mc_rows = Vec::new();
    let mut sel_rows = Vec::new();
    let mut results = Vec::new();
    for NamedScenario { name, scenario } in scenarios {
        summary.seeds.push(scenario.seed);
        let mut result = ScenarioResult {
            name: name.clone(),
            scenario: scenario.clone(),
            monte_carlo: None,
            selection: None,
            error: None,
        };
        if matches!(a.study, Study::Mc | Study::Both) {
            match run_monte_carlo(&scenario) {
                Ok(report) => {
                    mc_rows.extend(report.rows.iter().map(|r| mc_row(&name, r)));
                    if report.nonconverged > 0 {
                        summary.warnings.push(format!(
                            "{name}: {} optimizer runs hit the iteration cap",
                            report.nonconverged
                        ));
                    }
                    let failed: usize = report.rows.iter().map(|r| r.failures).sum();
                    if failed > 0 {
                        summary.warnings.push(format!("{name}: {failed} model fits failed"));
                    }
                    result.monte_carlo = Some(report);
                }
                Err(e) => {
                    let e = tolerate(e)?;
                    summary.warnings.push(format!("{name}: {e}"));
                    mc_rows.push(failure_row(&name, MC_HEADER.len(), scenario.replications, &e));
                    result.error = Some(e.to_string());
                }
            }
        }
        if matches!(a.study, Study::Selection | Study::Both) {
            match run_selection_study(&scenario) {
                Ok(study) => {
                    sel_rows.extend(study.rows.iter().map(|r| selection_row(&name, r)));
                    result.selection = Some(study);
                }
                Err(e) => {
                    let e = tolerate(e)?;
                    summary.warnings.push(format!("{name}: {e}"));
                    sel_rows.push(failure_row(&name, SELECTION_HEADER.len(), scenario.replications, &e));
                    result.error = Some(e.to_string());
                }
            }
        }
        println!("{name}: done");
        results.push(result);
    }
    if matches!(a.study, Study::Mc | Study::Both) {
        out.table("monte_carlo.csv", &MC_HEADER, &mc_rows)?;
    }
    if matches!(a.study, Study::Selection | Study::Both) {
        out.table("selection_study.csv", &SELECTION_HEADER, &sel_rows)?;
    }
    out.json("simulate.json", &results)?;
    Ok(summary)
}

#[derive(Serialize)]
struct ChosenDims {
    source: &'static str,
    dims: Dims,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lag_selection: Option<SelectionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dims_selection: Option<SelectionReport>,
}

/// Dimensions for the forecast comparison. Anything not given on the
/// command line is selected on the rows before the first forecast origin.
fn forecast_dims(a: &ForecastArgs, data: &revar::TimeSeriesData, t0: usize) -> CliResult<ChosenDims> {
    let q = data.dim();
    if let (Some(p), Some(d), Some(u)) = (a.p, a.d, a.u) {
        return Ok(ChosenDims {
            source: "given",
            dims: Dims::new(d, u, p, q),
            notes: Vec::new(),
            lag_selection: None,
            dims_selection: None,
        });
    }
    let head = data.head(t0);
    let opts = a.optimizer.options();
    let mut notes = Vec::new();
    let (p, lag_selection) = match a.p {
        Some(p) => (p, None),
        None => {
            let report = select_lag(&head, a.pmax, a.criterion)?;
            (report.chosen.p.unwrap_or(0), Some(report))
        }
    };
    let p = if p == 0 {
        notes.push("selected lag order 0 raised to 1".to_string());
        1
    } else {
        p
    };
    let (mut d, mut u, dims_selection) = match (a.d, a.u) {
        (Some(d), Some(u)) => (d, u, None),
        _ => {
            let acov = AutocovarianceSet::from_data(&head, p)?;
            let mode = a.d.map_or(DimsMode::GridIc, |d| DimsMode::GivenRank { d });
            let report = select_dims(&acov, mode, a.criterion, 0.05, a.optimizer.algorithm, &opts)?;
            let d = a.d.or(report.chosen.d).unwrap_or(0);
            let u = a.u.or(report.chosen.u).unwrap_or(0);
            (d, u, Some(report))
        }
    };
    if d == 0 {
        notes.push("selected rank 0 raised to 1".to_string());
        d = 1;
        u = u.max(1);
    }
    Ok(ChosenDims {
        source: "selected",
        dims: Dims::new(d, u, p, q),
        notes,
        lag_selection,
        dims_selection,
    })
}

#[derive(Serialize)]
struct ForecastOutput<'a> {
    dims: &'a ChosenDims,
    table: &'a revar::ForecastTable,
}

pub fn forecast(a: &ForecastArgs, out: &mut OutDir) -> CliResult<RunSummary> {
    if !(a.eval_start > 0.0 && a.eval_start < 1.0) {
        return Err(CliError::new("usage", "--eval-start must lie strictly between 0 and 1"));
    }
    let data = read_series(&a.input)?;
    let config = EvalConfig {
        eval_start: a.eval_start,
        horizons: a.horizons,
        refit: a.refit,
        algorithm: a.optimizer.algorithm,
        optimizer: a.optimizer.options(),
    };
    let chosen = forecast_dims(a, &data, config.t0(data.len()))?;
    chosen
        .dims
        .validate()
        .map_err(|e| CliError::new("usage", e.to_string()))?;
    let boot = BootstrapConfig {
        samples: a.bootstrap,
        block_length: a.block_length,
        seed: a.bootstrap_seed,
    };
    let table = bootstrap_forecast_table(&data, &a.model.models(), chosen.dims, &boot, &config)?;

    let mut header: Vec<String> = ["model", "d", "u", "p", "NOP", "r_avg"].map(String::from).to_vec();
    header.extend((1..=table.horizons).map(|h| format!("RMSFE_{h}")));
    header.push("failures".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut summary = RunSummary {
        seeds: vec![a.optimizer.seed, a.bootstrap_seed],
        warnings: Vec::new(),
    };
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            if r.failures > 0 {
                summary
                    .warnings
                    .push(format!("{}: {} resamples failed to evaluate", r.model, r.failures));
            }
            let mut row = vec![
                r.model.name().to_string(),
                r.dims.d.to_string(),
                r.dims.u.to_string(),
                r.dims.p.to_string(),
                r.nop.to_string(),
                fmt_opt(r.r_avg),
            ];
            row.extend(r.rmsfe.iter().map(|&x| fmt_f64(x)));
            row.push(r.failures.to_string());
            row
        })
        .collect();
    out.table("forecast.csv", &header, &rows)?;
    out.json(
        "forecast.json",
        &ForecastOutput {
            dims: &chosen,
            table: &table,
        },
    )?;
    println!(
        "dims {} ({}), T0 {}, {} resamples",
        chosen.dims, chosen.source, table.t0, table.samples
    );
    for r in &table.rows {
        println!(
            "{:>7} RMSFE_1 {}",
            r.model.name(),
            fmt_f64(r.rmsfe.first().copied().unwrap_or(f64::NAN))
        );
    }
    Ok(summary)
}
