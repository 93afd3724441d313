use std::path::Path;

use chrono::Weekday;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use dyngamma::baselines::{
    fit_all_static, fit_gamma_mixture, route_copula_mc, route_indep_gamma, route_indep_normal, CopulaConfig, Family, MixtureConfig,
};
use dyngamma::corridor::{calibrate_lambdas, default_init_mv};
use dyngamma::dataio::{self, Schedule, SlotReport};
use dyngamma::env_filter::default_init;
use dyngamma::evalkit::{
    evaluate, grid_search, CalibrationReport, CorridorForecaster, Forecaster, GridMode, RouteUnivariateForecaster, StaticForecaster,
    DEFAULT_ALPHA_GRID, DEFAULT_GAMMA_GRID,
};
use dyngamma::inference::{log_marginal_likelihood, run_gibbs, run_particle_filter, GammaStepConfig, GibbsConfig, LambdaPrior, PfConfig};
use dyngamma::route::{free_flow_travel_time, moment_match};
use dyngamma::{seeded_rng, CorridorModel, GammaState, HyperParams, ObservationSeries};

use crate::output::{f6, write_err, CliError, CliResult, Run};
use crate::{Cli, Command, Common, Mode};

/// Corridor description shared between `ingest`, `simulate` and the model commands.
#[derive(Debug, Serialize, Deserialize)]
pub struct CorridorFile {
    pub sensor_ids: Vec<String>,
    /// Segment lengths in miles; empty for simulated corridors.
    #[serde(default)]
    pub distances: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<SlotReport>,
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let c = &cli.common;
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Ingest {
            sensors,
            speeds,
            distances,
            weekday,
            all_days,
            hours,
            year,
        } => ingest(c, sensors, speeds, distances.as_deref(), weekday, *all_days, hours, *year),
        Command::Simulate {
            lambdas,
            segments,
            periods,
            init_shape,
            init_rate,
        } => simulate(c, lambdas.as_deref(), *segments, *periods, *init_shape, *init_rate),
        Command::Filter {
            observations,
            corridor,
            mode,
        } => filter(c, observations, corridor.as_deref(), *mode),
        Command::Grid {
            observations,
            alphas,
            gammas,
            mode,
        } => grid(c, observations, alphas.as_deref(), gammas.as_deref(), *mode),
        Command::Gibbs {
            observations,
            chains,
            iters,
            warmup,
            thin,
            sample_gamma,
            concentration,
        } => gibbs(c, observations, *chains, *iters, *warmup, *thin, *sample_gamma, *concentration),
        Command::Pf {
            observations,
            corridor,
            particles,
            ess_threshold,
            learn_lambdas,
        } => pf(c, observations, corridor.as_deref(), *particles, *ess_threshold, *learn_lambdas),
        Command::Compare {
            observations,
            corridor,
            copula_draws,
        } => compare(c, observations, corridor.as_deref(), *copula_draws),
        Command::StaticFit { observations } => static_fit(c, observations),
        Command::Mixture {
            observations,
            max_k,
            restarts,
        } => mixture(c, observations, *max_k, *restarts),
    }
}

fn hyper(c: &Common) -> CliResult<HyperParams> {
    Ok(HyperParams::new(c.alpha, c.gamma)?)
}

fn read_series(run: &mut Run, path: &Path) -> CliResult<ObservationSeries> {
    let series = dataio::read_observations(run.input(path)?)?;
    if let Some((t, _)) = series.records.iter().enumerate().find(|(_, r)| r.y.iter().any(|v| !v.is_finite())) {
        return Err(CliError::Lib(dyngamma::Error::Data(format!(
            "observation row {} has a missing value; models need complete rows",
            t + 1
        ))));
    }
    Ok(series)
}

/// Rates from `corridor.json` when given, calibrated from the data otherwise.
fn load_model(run: &mut Run, path: Option<&Path>, series: &ObservationSeries) -> CliResult<CorridorModel> {
    let Some(path) = path else {
        return Ok(calibrate_lambdas(series)?);
    };
    let file: CorridorFile =
        serde_json::from_reader(run.input(path)?).map_err(|e| CliError::Io(format!("cannot parse {}: {e}", path.display())))?;
    if file.sensor_ids != series.segment_ids {
        return Err(CliError::Lib(dyngamma::Error::Data(format!(
            "corridor segments {:?} do not match observation columns {:?}",
            file.sensor_ids, series.segment_ids
        ))));
    }
    Ok(CorridorModel::new(file.lambdas, file.distances, file.sensor_ids)?)
}

fn report_json(rep: &CalibrationReport) -> CliResult<Value> {
    let mut v = serde_json::to_value(rep).map_err(|e| CliError::Io(e.to_string()))?;
    if let Some(o) = v.as_object_mut() {
        o.remove("pit");
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn ingest(
    c: &Common,
    sensors: &Path,
    speeds: &Path,
    distances: Option<&Path>,
    weekday: &str,
    all_days: bool,
    hours: &[u32],
    year: Option<i32>,
) -> CliResult<()> {
    let mut run = Run::new("ingest", c.seed, &c.out_dir)?;
    let weekday = if all_days {
        None
    } else {
        Some(weekday.parse::<Weekday>().map_err(|_| CliError::Config(format!("unknown weekday '{weekday}'")))?)
    };
    if let Some(h) = hours.iter().find(|h| **h > 23) {
        return Err(CliError::Config(format!("hour {h} is outside 0..=23")));
    }
    let schedule = Schedule {
        weekday,
        hours: hours.to_vec(),
        year,
    };
    let sensors = dataio::read_sensors(run.input(sensors)?)?;
    let speeds = dataio::read_speeds(run.input(speeds)?)?;
    let overrides = match distances {
        Some(p) => Some(dataio::read_distances(run.input(p)?)?),
        None => None,
    };
    let built = dataio::build_corridor(&sensors, &speeds, &schedule, overrides.as_ref())?;
    let model = built.model()?;
    dataio::write_observations(&built.series, run.raw("observations.csv")?)?;
    run.json(
        "corridor.json",
        &CorridorFile {
            sensor_ids: built.sensor_ids.clone(),
            distances: built.distances.clone(),
            lambdas: model.lambdas().to_vec(),
            report: Some(built.report),
        },
    )?;
    run.finish()
}

fn simulate(c: &Common, lambdas: Option<&[f64]>, segments: usize, periods: usize, shape: f64, rate: f64) -> CliResult<()> {
    let mut run = Run::new("simulate", c.seed, &c.out_dir)?;
    let hyper = hyper(c)?;
    let model = match lambdas {
        Some(l) => CorridorModel::from_lambdas(l.to_vec())?,
        None => CorridorModel::homogeneous(segments)?,
    };
    let init = GammaState::new(shape, rate)?;
    let sim = dataio::simulate_corridor(&hyper, &model, periods, &init, &mut seeded_rng(c.seed))?;
    dataio::write_observations(&sim.series, run.raw("observations.csv")?)?;
    let mut w = run.csv("eta.csv")?;
    w.write_record(["t", "eta"]).map_err(write_err)?;
    for (t, eta) in sim.eta_path.iter().enumerate() {
        w.write_record([(t + 1).to_string(), f6(*eta)]).map_err(write_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    run.json(
        "corridor.json",
        &CorridorFile {
            sensor_ids: sim.series.segment_ids.clone(),
            distances: Vec::new(),
            lambdas: model.lambdas().to_vec(),
            report: None,
        },
    )?;
    run.finish()
}

/// The forecaster for `mode`, started from the default initial state.
fn forecaster(mode: Mode, hyper: &HyperParams, model: &CorridorModel, series: &ObservationSeries) -> CliResult<Box<dyn Forecaster>> {
    Ok(match mode {
        Mode::Multivariate => Box::new(CorridorForecaster::new(hyper.clone(), model.clone(), default_init_mv(series, hyper, model)?)),
        Mode::Univariate => Box::new(RouteUnivariateForecaster {
            hyper: hyper.clone(),
            state: default_init(&series.route_series(), hyper)?,
        }),
    })
}

fn filter(c: &Common, observations: &Path, corridor: Option<&Path>, mode: Mode) -> CliResult<()> {
    let mut run = Run::new("filter", c.seed, &c.out_dir)?;
    let series = read_series(&mut run, observations)?;
    let hyper = hyper(c)?;
    let model = load_model(&mut run, corridor, &series)?;
    if !(c.tau_multiple > 0.0 && c.tau_multiple.is_finite()) {
        return Err(CliError::Config(format!("--tau-multiple must be positive, got {}", c.tau_multiple)));
    }
    let free_flow = free_flow_travel_time(&series)?;
    let tau = c.tau_multiple * free_flow;

    let mut f = forecaster(mode, &hyper, &model, &series)?;
    let mut w = run.csv("timeseries.csv")?;
    w.write_record(["t", "timestamp", "observed", "q05", "q25", "q50", "q75", "q95", "pit", "on_time_prob", "pti", "bi"])
        .map_err(write_err)?;
    for rec in &series.records {
        let row = {
            let law = f.forecast(&rec.u)?;
            let q: Vec<f64> = [0.05, 0.25, 0.5, 0.75, 0.95].iter().map(|p| law.quantile(*p)).collect::<Result<_, _>>()?;
            let total = rec.route_total();
            let mut row = vec![rec.t.to_string(), rec.timestamp.clone().unwrap_or_default(), f6(total)];
            row.extend(q.iter().map(|v| f6(*v)));
            row.push(f6(law.cdf(total)?));
            row.push(f6(law.cdf(tau)?));
            row.push(f6(q[4] / free_flow));
            row.push(f6(((q[4] - q[2]) / q[2]).max(0.0)));
            row
        };
        f.observe(rec)?;
        w.write_record(&row).map_err(write_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;

    let rep = evaluate(forecaster(mode, &hyper, &model, &series)?.as_mut(), &series, c.burn_in)?;
    let alpha_star = match mode {
        Mode::Multivariate => moment_match(&hyper, &model).0,
        Mode::Univariate => hyper.alpha,
    };
    let mut out = report_json(&rep)?;
    if let Some(o) = out.as_object_mut() {
        o.insert("mode".into(), format!("{mode:?}").to_lowercase().into());
        o.insert("alpha".into(), hyper.alpha.into());
        o.insert("gamma".into(), hyper.gamma.into());
        o.insert("alpha_star".into(), alpha_star.into());
        o.insert("burn_in".into(), c.burn_in.into());
        o.insert("free_flow".into(), free_flow.into());
        o.insert("tau".into(), tau.into());
        o.insert("lambdas".into(), model.lambdas().to_vec().into());
    }
    run.json("report.json", &out)?;
    run.finish()
}

fn grid(c: &Common, observations: &Path, alphas: Option<&[f64]>, gammas: Option<&[f64]>, mode: Mode) -> CliResult<()> {
    let mut run = Run::new("grid", c.seed, &c.out_dir)?;
    let series = read_series(&mut run, observations)?;
    let mode = match mode {
        Mode::Multivariate => GridMode::MultivariateRoute,
        Mode::Univariate => GridMode::UnivariateRoute,
    };
    let res = grid_search(&series, alphas.unwrap_or(&DEFAULT_ALPHA_GRID), gammas.unwrap_or(&DEFAULT_GAMMA_GRID), mode, c.burn_in)?;
    let mut w = run.csv("grid.csv")?;
    w.write_record([
        "alpha",
        "gamma",
        "alpha_star",
        "ks_stat",
        "ks_p",
        "coverage90",
        "mean_iw90",
        "log_pred_lik",
        "lag1_autocorr",
        "ljung_box_q",
        "ljung_box_p",
        "n_eval",
    ])
    .map_err(write_err)?;
    for cell in &res.cells {
        let r = &cell.report;
        let mut row: Vec<String> = [
            cell.alpha,
            cell.gamma,
            cell.alpha_star,
            r.ks_stat,
            r.ks_p,
            r.coverage90,
            r.mean_iw90,
            r.log_pred_lik,
            r.lag1_autocorr,
            r.ljung_box_q,
            r.ljung_box_p,
        ]
        .iter()
        .map(|v| f6(*v))
        .collect();
        row.push(r.n_eval.to_string());
        w.write_record(&row).map_err(write_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let selected = match res.selected_cell() {
        Some(cell) => serde_json::json!({
            "alpha": cell.alpha,
            "gamma": cell.gamma,
            "alpha_star": cell.alpha_star,
            "report": report_json(&cell.report)?,
        }),
        None => Value::Null,
    };
    run.json("selected.json", &serde_json::json!({ "mode": res.mode, "selected": selected, "failures": res.failures }))?;
    run.finish()
}

#[allow(clippy::too_many_arguments)]
fn gibbs(
    c: &Common,
    observations: &Path,
    chains: usize,
    iters: usize,
    warmup: usize,
    thin: usize,
    sample_gamma: bool,
    concentration: f64,
) -> CliResult<()> {
    let mut run = Run::new("gibbs", c.seed, &c.out_dir)?;
    let series = read_series(&mut run, observations)?;
    let hyper = hyper(c)?;
    let config = GibbsConfig {
        chains,
        iters,
        burn_in: warmup,
        thin,
        seed: c.seed,
        gamma_step: sample_gamma.then(|| GammaStepConfig {
            concentration,
            ..GammaStepConfig::default()
        }),
        ..GibbsConfig::default()
    };
    let out = run_gibbs(&series, &hyper, &LambdaPrior::diffuse(series.num_segments())?, &config)?;
    let mut w = run.csv("draws.csv")?;
    let mut header = vec!["chain".to_string(), "iter".to_string()];
    header.extend(out.segment_ids.iter().map(|id| format!("lambda_{id}")));
    header.extend(["gamma".to_string(), "log_joint".to_string()]);
    w.write_record(&header).map_err(write_err)?;
    for (k, chain) in out.chains.iter().enumerate() {
        for d in chain {
            let mut row = vec![k.to_string(), d.iter.to_string()];
            row.extend(d.lambdas.iter().map(|v| f6(*v)));
            row.push(f6(d.gamma));
            row.push(f6(d.log_joint));
            w.write_record(&row).map_err(write_err)?;
        }
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let mut summary = serde_json::to_value(&out).map_err(|e| CliError::Io(e.to_string()))?;
    if let Some(o) = summary.as_object_mut() {
        o.remove("chains");
        o.insert("retained_draws".into(), out.total_draws().into());
    }
    run.json("summary.json", &summary)?;
    run.finish()
}

fn pf(c: &Common, observations: &Path, corridor: Option<&Path>, particles: usize, ess_threshold: f64, learn: bool) -> CliResult<()> {
    let mut run = Run::new("pf", c.seed, &c.out_dir)?;
    let series = read_series(&mut run, observations)?;
    let hyper = hyper(c)?;
    let model = load_model(&mut run, corridor, &series)?;
    let init = default_init_mv(&series, &hyper, &model)?;
    let config = PfConfig {
        ess_threshold,
        learn_lambdas: learn,
    };
    let out = run_particle_filter(&series, &hyper, &model, &init, particles, &config, &mut seeded_rng(c.seed))?;
    let mut w = run.csv("pf.csv")?;
    w.write_record(["t", "predictive_mean", "predictive_mean_mc", "log_evidence_increment", "ess", "resampled"])
        .map_err(write_err)?;
    for s in &out.steps {
        w.write_record([
            s.t.to_string(),
            f6(s.predictive_mean),
            f6(s.predictive_mean_mc),
            f6(s.log_evidence_increment),
            f6(s.ess),
            u8::from(s.resampled).to_string(),
        ])
        .map_err(write_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let exact = if learn { None } else { Some(log_marginal_likelihood(&series, &hyper, &model, &init)?) };
    run.json(
        "pf_summary.json",
        &serde_json::json!({
            "particles": particles,
            "log_evidence": out.log_evidence,
            "exact_log_evidence": exact,
            "eta_mean": out.final_set.eta_mean(),
            "lambda_mean": out.final_set.lambda_mean(),
            "segment_ids": series.segment_ids,
        }),
    )?;
    run.finish()
}

fn compare(c: &Common, observations: &Path, corridor: Option<&Path>, copula_draws: usize) -> CliResult<()> {
    let mut run = Run::new("compare", c.seed, &c.out_dir)?;
    let series = read_series(&mut run, observations)?;
    let hyper = hyper(c)?;
    let model = load_model(&mut run, corridor, &series)?;
    let rows = series.matrix();
    let init = default_init_mv(&series, &hyper, &model)?;
    let b = c.burn_in;

    let ours = evaluate(&mut CorridorForecaster::new(hyper.clone(), model, init), &series, b)?;
    let indep_gamma = evaluate(&mut StaticForecaster(route_indep_gamma(&rows)?), &series, b)?;
    let indep_normal = evaluate(&mut StaticForecaster(route_indep_normal(&rows)?), &series, b)?;
    let config = CopulaConfig {
        n_draws: copula_draws,
        ..CopulaConfig::default()
    };
    let copula = route_copula_mc(&rows, &config, &mut seeded_rng(c.seed))?;
    let copula = evaluate(&mut StaticForecaster(copula.law), &series, b)?;
    let gamma_fit = dyngamma::baselines::fit_static(&series.route_totals(), Family::Gamma)?;
    let static_gamma = evaluate(&mut StaticForecaster(gamma_fit), &series, b)?;

    let mut w = run.csv("comparison.csv")?;
    w.write_record(["method", "dynamic", "dependence", "ks_p", "coverage90", "iw"]).map_err(write_err)?;
    for (name, dynamic, dep, r) in [
        ("dynamic-gamma", "yes", "shared environment", &ours),
        ("independent-gamma", "no", "none", &indep_gamma),
        ("independent-normal", "no", "none", &indep_normal),
        ("gaussian-copula", "no", "copula", &copula),
        ("static-gamma", "no", "route total", &static_gamma),
    ] {
        w.write_record([name, dynamic, dep, &f6(r.ks_p), &f6(r.coverage90), &f6(r.mean_iw90)]).map_err(write_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    run.finish()
}

fn static_fit(c: &Common, observations: &Path) -> CliResult<()> {
    let mut run = Run::new("static-fit", c.seed, &c.out_dir)?;
    let series = read_series(&mut run, observations)?;
    let fits = fit_all_static(&series.route_totals())?;
    let mut w = run.csv("static_fit.csv")?;
    w.write_record(["family", "param1_name", "param1", "param2_name", "param2", "n", "loglik", "aic", "bic", "ks_stat", "ks_p"])
        .map_err(write_err)?;
    for f in &fits {
        let names = f.family.param_names();
        w.write_record([
            f.family.name().to_string(),
            names[0].to_string(),
            f6(f.params[0]),
            names[1].to_string(),
            f6(f.params[1]),
            f.n.to_string(),
            f6(f.loglik),
            f6(f.aic),
            f6(f.bic),
            f6(f.ks_stat),
            f6(f.ks_p),
        ])
        .map_err(write_err)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    run.finish()
}

fn mixture(c: &Common, observations: &Path, max_k: usize, restarts: usize) -> CliResult<()> {
    let mut run = Run::new("mixture", c.seed, &c.out_dir)?;
    let series = read_series(&mut run, observations)?;
    if max_k == 0 {
        return Err(CliError::Config("--max-k must be positive".into()));
    }
    let data = series.route_totals();
    let config = MixtureConfig {
        restarts,
        ..MixtureConfig::default()
    };
    let fits = (1..=max_k).map(|k| fit_gamma_mixture(&data, k, &config, &mut seeded_rng(c.seed))).collect::<Result<Vec<_>, _>>()?;
    let mut w = run.csv("mixture.csv")?;
    w.write_record(["k", "component", "weight", "shape", "rate", "mean"]).map_err(write_err)?;
    for f in &fits {
        for (i, mean) in f.means().iter().enumerate() {
            w.write_record([f.k.to_string(), (i + 1).to_string(), f6(f.weights[i]), f6(f.shapes[i]), f6(f.rates[i]), f6(*mean)])
                .map_err(write_err)?;
        }
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    let best = fits.iter().min_by(|a, b| a.bic.total_cmp(&b.bic)).map(|f| f.k);
    let summary: Vec<Value> = fits
        .iter()
        .map(|f| serde_json::json!({ "k": f.k, "loglik": f.loglik, "bic": f.bic, "converged": f.converged, "iterations": f.iterations }))
        .collect();
    run.json("mixture.json", &serde_json::json!({ "fits": summary, "bic_selected_k": best }))?;
    run.finish()
}
