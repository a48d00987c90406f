//! The commands. Each reads its parameters from [`Settings`] and returns
//! its artifacts in memory; `main` decides where they go.

use std::str::FromStr;

use fee_market_core::curve::BidCurve;
use fee_market_core::eo::{
    eo_bid, equilibrium_threshold, miner_surplus, social_welfare, sweep_point, welfare_report, SweepParameter,
    SweepPoint, ThresholdTime,
};
use fee_market_core::numerics::RandomSource;
use fee_market_core::patient::{
    bid_rate, chunk_sizes, check_inputs, estimate_chunk, patient_payoff_scan, residual_lags, uniform_grid,
    wtilde_ode_residual, BidRate, DiscountAccumulator, DiscountCurve, OdeResidualReport,
};
use fee_market_core::sim::{accumulate, ArrivalLaw, CycleAccumulator, SimConfig, SimStats};
use fee_market_core::uc::uc_bid as uc_bid_at;
use fee_market_core::{Error as CoreError, MarketParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::format::{g17, json_report, CsvBuf};
use crate::manifest::{Artifact, Run};
use crate::settings::Settings;

/// Note printed with welfare results.
pub const DENSITY_NOTE: &str = "note: the stationary density below the threshold is lambda / (1 + lambda t*), \
     the level that makes it integrate to one";

fn positive(s: &Settings, key: &str, default: f64) -> CliResult<f64> {
    let v: f64 = s.get_or(key, default)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::validation(key, format!("must be a positive number, got {v}")))
    }
}

fn at_least(s: &Settings, key: &str, default: usize, min: usize) -> CliResult<usize> {
    let v: usize = s.get_or(key, default)?;
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::validation(key, format!("must be at least {min}, got {v}")))
    }
}

/// Market parameters; `rho` is read only for the patient model so that it
/// does not clutter other manifests.
fn market(s: &Settings, with_rho: bool) -> CliResult<MarketParams> {
    let d = MarketParams::default();
    let mut p = MarketParams::new(s.get_or("lambda", d.lambda)?, s.get_or("capacity", d.capacity)?)
        .with_cost(s.get_or("cost", d.cost)?)
        .with_reward(s.get_or("reward", d.reward)?)
        .with_eta(s.get_or("eta", d.eta)?);
    if with_rho {
        p = p.with_rho(s.get_or("rho", d.rho)?);
    }
    p.validate().map_err(CliError::from_solver)?;
    Ok(p)
}

fn pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::validation("threads", e.to_string()))
}

fn threshold_cell(t: ThresholdTime) -> String {
    match t {
        ThresholdTime::Finite(v) => g17(v),
        other => other.to_string(),
    }
}

fn run(command: &'static str, s: &Settings, seeds: Vec<u64>, artifacts: Vec<Artifact>, notes: Vec<String>) -> Run {
    Run {
        command,
        params: s.resolved(),
        seeds,
        artifacts,
        notes,
    }
}

/// Bid curves in long format, one series per `(lambda, capacity)` pair.
pub fn uc_bid(s: &Settings) -> CliResult<Run> {
    let lambdas = s.list_or("lambda", "1.2")?;
    let capacities = s.list_or("capacity", "1")?;
    let t_max = positive(s, "t-max", 5.0)?;
    let points = at_least(s, "points", 100, 2)?;
    let mut csv = CsvBuf::new(["lambda", "capacity", "t", "bid"])?;
    for &lambda in &lambdas {
        for &capacity in &capacities {
            let p = MarketParams::new(lambda, capacity);
            p.validate().map_err(CliError::from_solver)?;
            let curve = BidCurve::sample(|t| uc_bid_at(t, &p), t_max, points).map_err(CliError::from_solver)?;
            for (t, bid) in curve.iter() {
                csv.row([g17(lambda), g17(capacity), g17(t), g17(bid)])?;
            }
        }
    }
    Ok(run("uc-bid", s, Vec::new(), vec![Artifact::new("uc_bid.csv", csv.finish()?)], Vec::new()))
}

#[derive(Serialize)]
struct CommittedReport {
    t_e: ThresholdTime,
    miner_surplus_at_te: f64,
}

/// Equilibrium and efficient thresholds with welfare. With committed miners
/// only the equilibrium threshold and its surplus are defined.
pub fn eo_solve(s: &Settings) -> CliResult<Run> {
    let p = market(s, false)?;
    let (bytes, notes) = if p.eta == 0.0 {
        let report = welfare_report(&p).map_err(CliError::from_solver)?;
        (json_report(&report).map_err(CliError::Solver)?, vec![DENSITY_NOTE.to_string()])
    } else {
        let t_e = equilibrium_threshold(&p).map_err(CliError::from_solver)?;
        let surplus = match t_e {
            ThresholdTime::Finite(v) => miner_surplus(v, &p).map_err(CliError::from_solver)?,
            _ => 0.0,
        };
        let report = CommittedReport {
            t_e,
            miner_surplus_at_te: surplus,
        };
        (json_report(&report).map_err(CliError::Solver)?, Vec::new())
    };
    Ok(run("eo-solve", s, Vec::new(), vec![Artifact::new("eo_solve.json", bytes)], notes))
}

/// Bid curves of the threshold market, one series per threshold.
pub fn eo_bid_curves(s: &Settings) -> CliResult<Run> {
    let p = market(s, false)?;
    let thresholds = s.list_or("tstar", "0,0.25,0.5,0.75")?;
    let t_max = positive(s, "t-max", 3.0)?;
    let points = at_least(s, "points", 100, 2)?;
    let mut csv = CsvBuf::new(["tstar", "t", "bid"])?;
    for &v in &thresholds {
        let ts = ThresholdTime::finite(v).map_err(|e| CliError::validation("tstar", e.to_string()))?;
        if p.eta == 0.0 && v >= p.capacity {
            return Err(CliError::validation("tstar", "must lie below the capacity when eta = 0"));
        }
        for t in linspace(0.0, t_max, points) {
            let bid = eo_bid(t, ts, &p).map_err(CliError::from_solver)?;
            csv.row([g17(v), g17(t), g17(bid)])?;
        }
    }
    Ok(run("eo-bid", s, Vec::new(), vec![Artifact::new("eo_bid.csv", csv.finish()?)], Vec::new()))
}

/// `M*`, social welfare and both sides of the threshold conditions over
/// thresholds in `[0, K]`: the equilibrium threshold is where
/// `miner_surplus` meets `miner_target`, the efficient one where
/// `welfare_side` meets `cost_side`.
pub fn eo_curves(s: &Settings) -> CliResult<Run> {
    let p = market(s, false)?;
    if p.eta != 0.0 {
        return Err(CliError::validation("eta", "threshold curves assume eta = 0"));
    }
    let points = at_least(s, "points", 101, 2)?;
    let (lam, k) = (p.lambda, p.capacity);
    let mut csv = CsvBuf::new(["tstar", "miner_surplus", "miner_target", "social_welfare", "welfare_side", "cost_side"])?;
    for t in linspace(0.0, k, points) {
        let m = miner_surplus(t, &p).map_err(CliError::from_solver)?;
        let sw = social_welfare(t, &p).map_err(CliError::from_solver)?;
        csv.row([
            g17(t),
            g17(m),
            g17(p.cost / lam - p.reward),
            g17(sw),
            g17(t * (-lam * (k - t)).exp()),
            g17(p.cost / lam),
        ])?;
    }
    Ok(run("eo-curves", s, Vec::new(), vec![Artifact::new("eo_curves.csv", csv.finish()?)], vec![DENSITY_NOTE.to_string()]))
}

/// Evenly spaced grid from `from` to `to`.
pub fn linspace(from: f64, to: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![from];
    }
    let step = (to - from) / (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { to } else { from + i as f64 * step })
        .collect()
}

/// Thresholds and welfare along one parameter. Rows that fail are kept and
/// marked invalid.
pub fn sweep(s: &Settings) -> CliResult<Run> {
    let vary: String = s.require("vary")?;
    let parameter = SweepParameter::from_str(&vary).map_err(|e| CliError::validation("vary", e.to_string()))?;
    let p = market(s, false)?;
    let from: f64 = s.require("from")?;
    let to: f64 = s.require("to")?;
    let points = at_least(s, "points", 50, 1)?;
    let threads = at_least(s, "threads", 1, 1)?;
    if !from.is_finite() {
        return Err(CliError::validation("from", "must be finite"));
    }
    if !to.is_finite() || (points > 1 && !(to > from)) {
        return Err(CliError::validation("to", "must be finite and greater than --from"));
    }
    let grid = linspace(from, to, points);
    let outcomes: Vec<Result<SweepPoint, CoreError>> =
        pool(threads)?.install(|| grid.par_iter().map(|&v| sweep_point(&p, parameter, v)).collect());

    let mut csv = CsvBuf::new(["param", "value", "status", "t_e", "t_o", "y_o", "sw", "detail"])?;
    let opt = |v: Option<f64>| v.map(g17).unwrap_or_default();
    for (&value, outcome) in grid.iter().zip(&outcomes) {
        let name = parameter.name().to_string();
        match outcome {
            Ok(pt) => csv.row([
                name,
                g17(value),
                "ok".into(),
                threshold_cell(pt.t_e),
                pt.t_o.map(threshold_cell).unwrap_or_default(),
                opt(pt.y_o),
                opt(pt.sw),
                String::new(),
            ])?,
            Err(e) => csv.row([
                name,
                g17(value),
                "invalid".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.to_string(),
            ])?,
        }
    }
    let notes = if p.eta == 0.0 { vec![DENSITY_NOTE.to_string()] } else { Vec::new() };
    Ok(run("sweep", s, Vec::new(), vec![Artifact::new("sweep.csv", csv.finish()?)], notes))
}

fn parse_threshold(v: &str) -> CliResult<ThresholdTime> {
    match v.trim() {
        "never_suspend" => Ok(ThresholdTime::NeverSuspend),
        "never_operate" => Ok(ThresholdTime::NeverOperate),
        x => {
            let t: f64 = x
                .parse()
                .map_err(|_| CliError::validation("tstar", format!("cannot parse `{x}`")))?;
            ThresholdTime::finite(t).map_err(|e| CliError::validation("tstar", e.to_string()))
        }
    }
}

#[derive(Serialize)]
struct SimReport<'a> {
    model: &'a str,
    runs: usize,
    #[serde(flatten)]
    stats: &'a SimStats,
}

/// Discrete-event simulation of the uc or eo market, optionally as an
/// ensemble of independent streams merged in stream order.
pub fn simulate(s: &Settings) -> CliResult<Run> {
    let model: String = s.get_or("model", "eo".to_string())?;
    let base = market(s, false)?;
    let (p, tstar) = match model.as_str() {
        "uc" => (base.with_eta(0.0), ThresholdTime::NeverSuspend),
        "eo" => {
            let t = match s.raw("tstar") {
                Some(v) => parse_threshold(&v)?,
                None => equilibrium_threshold(&base).map_err(CliError::from_solver)?,
            };
            if t == ThresholdTime::NeverOperate && base.eta == 0.0 {
                return Err(CliError::validation("tstar", "never_operate needs --eta > 0"));
            }
            (base, t)
        }
        other => return Err(CliError::validation("model", format!("expected uc or eo, got `{other}`"))),
    };
    let blocks = at_least(s, "blocks", 100_000, 1)?;
    let dt = positive(s, "dt", 1e-3)?;
    if dt > p.capacity / 100.0 {
        return Err(CliError::validation("dt", "must not exceed capacity / 100"));
    }
    let burn_in: usize = s.get_or("burn-in", 100)?;
    let seed: u64 = s.require("seed")?;
    let stream: u64 = s.get_or("stream", 0)?;
    let runs = at_least(s, "runs", 1, 1)?;
    let threads = at_least(s, "threads", 1, 1)?;
    let bin_width = match s.get::<f64>("bin-width")? {
        Some(w) if !(w > 0.0 && w.is_finite()) => return Err(CliError::validation("bin-width", "must be positive")),
        w => w,
    };
    let mut cfg = SimConfig::new(blocks, dt, seed).with_stream(stream);
    cfg.burn_in = burn_in;
    cfg.hist_bin_width = bin_width;
    cfg.validate(&p).map_err(CliError::from_simulation)?;

    let parts: Vec<Result<CycleAccumulator, CoreError>> = pool(threads)?.install(|| {
        (0..runs as u64)
            .into_par_iter()
            .map(|r| accumulate(&p, tstar, &cfg.with_stream(stream.wrapping_add(r))))
            .collect()
    });
    let mut acc = CycleAccumulator::default();
    for part in parts {
        acc.merge(&part.map_err(CliError::from_simulation)?);
    }
    let stats = acc.finish(&p, tstar, &cfg).map_err(CliError::from_simulation)?;
    let report = SimReport {
        model: &model,
        runs,
        stats: &stats,
    };
    let json = json_report(&report).map_err(CliError::Simulation)?;

    let law = ArrivalLaw::new(tstar, &p).map_err(CliError::from_simulation)?;
    let hist = &stats.stationary_hist;
    let mut csv = CsvBuf::new(["bin_lo", "bin_hi", "mass", "density", "analytic_mass"])?;
    let last = hist.mass.len().saturating_sub(1);
    for i in 0..hist.mass.len() {
        let (lo, hi) = hist.edges(i);
        let upper = if i == last { 1.0 } else { law.stationary_cdf(hi) };
        csv.row([g17(lo), g17(hi), g17(hist.mass[i]), g17(hist.density(i)), g17(upper - law.stationary_cdf(lo))])?;
    }
    Ok(run(
        "simulate",
        s,
        vec![seed],
        vec![Artifact::new("stats.json", json), Artifact::new("histogram.csv", csv.finish()?)],
        Vec::new(),
    ))
}

#[derive(Serialize)]
struct PatientReport<'a> {
    n_paths: usize,
    residuals: &'a OdeResidualReport,
    bid_rate: &'a BidRate,
    ladder_holds: bool,
    nonincreasing: bool,
}

fn is_multiple(x: f64, step: f64) -> bool {
    let r = x / step;
    (r - r.round()).abs() <= 1e-6
}

/// Estimates the patient-user discount curve in parallel chunks, merged in
/// chunk order so the result does not depend on the thread count.
pub fn estimate_curve(p: &MarketParams, grid: &[f64], paths: usize, seed: u64, threads: usize) -> CliResult<DiscountCurve> {
    check_inputs(p, grid, paths).map_err(CliError::from_simulation)?;
    let rs = RandomSource::new(seed, 0);
    let sizes = chunk_sizes(paths);
    let parts: Vec<Result<DiscountAccumulator, CoreError>> = pool(threads)?.install(|| {
        sizes
            .par_iter()
            .enumerate()
            .map(|(i, &n)| estimate_chunk(p, grid, i, n, &rs))
            .collect()
    });
    let mut acc = DiscountAccumulator::new(grid.len(), residual_lags(grid, p.capacity));
    for part in parts {
        acc.merge(&part.map_err(CliError::from_simulation)?);
    }
    acc.finish(p, grid.to_vec()).map_err(CliError::from_simulation)
}

/// Discount curve, its delay-ODE residuals and optionally a deviation scan.
pub fn patient(s: &Settings) -> CliResult<Run> {
    let p = market(s, true)?;
    let k = p.capacity;
    let paths = at_least(s, "paths", 100_000, 1)?;
    let seed: u64 = s.require("seed")?;
    let threads = at_least(s, "threads", 1, 1)?;
    let step = positive(s, "grid-step", k / 50.0)?;
    if step > k / 20.0 {
        return Err(CliError::validation(
            "grid-step",
            format!("GRID_TOO_COARSE: spacing {step} is coarser than capacity / 20 = {}", k / 20.0),
        ));
    }
    let lo: f64 = s.get_or("grid-min", -12.0 * k)?;
    let hi: f64 = s.get_or("grid-max", 4.0 * k)?;
    if !(lo < 0.0) || !is_multiple(lo, step) {
        return Err(CliError::validation("grid-min", "must be negative and a multiple of --grid-step"));
    }
    if !(hi > 0.0 && hi.is_finite()) || !is_multiple(hi - lo, step) {
        return Err(CliError::validation("grid-max", "must be positive and a whole number of steps above --grid-min"));
    }
    let kink_guard = positive(s, "kink-guard", 2.0 * step)?;
    if kink_guard <= step {
        return Err(CliError::validation("kink-guard", "must exceed --grid-step"));
    }
    let scan_t = s.get::<f64>("scan-t")?;
    let scan_points = at_least(s, "scan-points", 2001, 3)?;
    if let Some(t) = scan_t {
        if !(t >= 0.0 && t.is_finite()) || -t < lo {
            return Err(CliError::validation("scan-t", "must be nonnegative with -t inside the grid"));
        }
    }

    let intervals = ((hi - lo) / step).round() as usize;
    let grid = uniform_grid(lo, hi, intervals);
    let curve = estimate_curve(&p, &grid, paths, seed, threads)?;
    let residuals = wtilde_ode_residual(&curve, kink_guard).map_err(|e| match e {
        CoreError::GridTooCoarse { .. } => CliError::validation("grid-step", format!("GRID_TOO_COARSE: {e}")),
        CoreError::BadConfig(m) => CliError::validation("kink-guard", m),
        other => CliError::Solver(other.to_string()),
    })?;
    let rate = bid_rate(&curve).map_err(CliError::from_solver)?;

    let mut curve_csv = CsvBuf::new(["s", "w_tilde", "std_error"])?;
    for i in 0..curve.len() {
        curve_csv.row([g17(curve.grid[i]), g17(curve.estimates[i]), g17(curve.std_errors[i])])?;
    }
    let report = PatientReport {
        n_paths: curve.n_paths,
        residuals: &residuals,
        bid_rate: &rate,
        ladder_holds: curve.ladder_holds(3, 3.0),
        nonincreasing: curve.nonincreasing(3.0),
    };
    let mut artifacts = vec![
        Artifact::new("curve.csv", curve_csv.finish()?),
        Artifact::new("residuals.json", json_report(&report).map_err(CliError::Simulation)?),
    ];
    if let Some(t) = scan_t {
        let scan = patient_payoff_scan(t, &curve, scan_points).map_err(CliError::from_solver)?;
        let mut csv = CsvBuf::new(["s", "payoff", "std_error", "is_argmax"])?;
        for i in 0..scan.scan.s.len() {
            let flag = if i == scan.scan.argmax { "1" } else { "0" };
            csv.row([g17(scan.scan.s[i]), g17(scan.scan.payoff[i]), g17(scan.std_errors[i]), flag.into()])?;
        }
        artifacts.push(Artifact::new("scan.csv", csv.finish()?));
    }
    Ok(run("patient", s, vec![seed], artifacts, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::settings::Table;

    fn settings(kv: &[(&str, &str)]) -> Settings {
        let flags: Table = kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        Settings::new(flags, Table::new(), Table::new(), None).unwrap()
    }

    #[test]
    fn linspace_hits_endpoints() {
        let g = linspace(0.35, 5.0, 100);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.35);
        assert_eq!(g[99], 5.0);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
    }

    #[test]
    fn thresholds_parse() {
        assert_eq!(parse_threshold("never_suspend").unwrap(), ThresholdTime::NeverSuspend);
        assert_eq!(parse_threshold(" 0.5 ").unwrap(), ThresholdTime::Finite(0.5));
        assert!(parse_threshold("-1").is_err());
        assert!(parse_threshold("soon").is_err());
    }

    #[test]
    fn uc_bid_long_format() {
        let r = uc_bid(&settings(&[("lambda", "1.2,2"), ("points", "3"), ("t-max", "1")])).unwrap();
        let text = String::from_utf8(r.artifacts[0].bytes.clone()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "lambda,capacity,t,bid");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "1.2,1,0,0");
        assert_eq!(r.params["points"], "3");
        assert_eq!(r.params["capacity"], "1");
    }

    #[test]
    fn resolved_params_include_defaults() {
        let r = eo_solve(&settings(&[])).unwrap();
        for k in ["lambda", "capacity", "cost", "reward", "eta"] {
            assert!(r.params.contains_key(k), "{k}");
        }
        assert!(!r.params.contains_key("rho"));
        assert_eq!(r.notes.len(), 1);
    }

    #[test]
    fn eo_curves_cross_at_the_thresholds() {
        let r = eo_curves(&settings(&[("points", "1001")])).unwrap();
        let text = String::from_utf8(r.artifacts[0].bytes.clone()).unwrap();
        let mut rows = csv::Reader::from_reader(text.as_bytes());
        let vals: Vec<Vec<f64>> = rows
            .records()
            .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
            .collect();
        // sign changes of M* - target and of welfare_side - cost_side bracket t_E and t_O
        let cross = |a: usize, b: usize| {
            vals.windows(2)
                .find(|w| (w[0][a] - w[0][b]) * (w[1][a] - w[1][b]) <= 0.0)
                .map(|w| w[0][0])
                .unwrap()
        };
        assert!((cross(1, 2) - 0.6756704).abs() < 1.5e-3);
        assert!((cross(4, 5) - 0.4714223).abs() < 1.5e-3);
    }

    #[test]
    fn eo_bid_rejects_threshold_at_capacity() {
        assert!(eo_bid_curves(&settings(&[("tstar", "0.5,1")])).is_err());
        let r = eo_bid_curves(&settings(&[("tstar", "0.5"), ("points", "5")])).unwrap();
        assert_eq!(r.artifacts[0].bytes.iter().filter(|&&b| b == b'\n').count(), 6);
    }

    #[test]
    fn committed_miners_report_only_t_e() {
        let r = eo_solve(&settings(&[("eta", "0.2")])).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&r.artifacts[0].bytes).unwrap();
        let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["miner_surplus_at_te", "t_e"]);
    }
}
