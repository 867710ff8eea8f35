//! Command-line surface and subcommand drivers.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use levygreen::estimators::{
    batch_rng, default_horizon, default_path_config, exit_time_mc_multi, exit_time_wos, green_mc, green_wos_stable,
    poisson_kernel_iw, poisson_kernel_mc, Estimate, McConfig, WosConfig,
};
use levygreen::geometry::{dist, Domain, Point};
use levygreen::harness::{
    bhp_check, calka_bound_check, compare_green, compare_moments, compare_poisson, contraction_theta, halving_ladder,
    occupation_identity, poisson_far_ratio, spread_points, BhpOptions, CompareOptions, PairGrid, RatioReport, Verdict,
};
use levygreen::path_sim::{PathConfig, PathEngine};
use levygreen::perturbation::{density_series, domination_check, potential_compare, GridSpec, PotentialOptions, SeriesOptions};
use levygreen::stable_core::{ball_green, ball_mean_exit, BallGreen};
use serde_json::{json, Value};

use crate::config::{parse_json, read_json, CliError, CliResult, Experiment, Points, RunConfig};
use crate::output::{config_hash, fmt_f64, unix_now, OutputDir, RunManifest};
use crate::suite::{criteria, run_criterion, Scale};

#[derive(Debug, Parser)]
#[command(name = "levygreen", version, about = "Simulate perturbed stable processes and compare their Green functions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "levygreen-out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs are reproducible for a fixed count.
    #[arg(long, global = true, env = "LEVYGREEN_WORKERS")]
    pub workers: Option<usize>,
    /// Domain JSON file (overrides the config).
    #[arg(long, global = true)]
    pub domain: Option<PathBuf>,
    /// Model JSON file (overrides the config).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Point as comma-separated coordinates; repeatable.
    #[arg(long, global = true)]
    pub x: Vec<String>,
    #[arg(long, global = true)]
    pub y: Vec<String>,
    #[arg(long, global = true)]
    pub z: Vec<String>,
    /// Sample count.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub t: Option<f64>,
    /// Estimator: `wos`, `path` or `quadrature`.
    #[arg(long, global = true)]
    pub method: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Perturbation-series density on a grid.
    Density,
    /// Sample paths of the perturbed process.
    Simulate,
    /// Mean exit times.
    Exit,
    /// Green function estimates.
    Green,
    /// Poisson kernel estimates.
    Poisson,
    /// A harness experiment selected by `experiment` in the config.
    Compare {
        #[arg(long, value_parser = parse_experiment)]
        experiment: Option<Experiment>,
    },
    /// The acceptance suite.
    Suite {
        #[arg(long)]
        quick: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Density => "density",
            Command::Simulate => "simulate",
            Command::Exit => "exit",
            Command::Green => "green",
            Command::Poisson => "poisson",
            Command::Compare { .. } => "compare",
            Command::Suite { .. } => "suite",
        }
    }
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    serde_json::from_value(Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_point(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad coordinate `{c}` in point `{s}`"))))
        .collect()
}

fn parse_points(raw: &[String]) -> CliResult<Option<Points>> {
    match raw {
        [] => Ok(None),
        [one] => Ok(Some(Points::One(parse_point(one)?))),
        many => Ok(Some(Points::Many(many.iter().map(|s| parse_point(s)).collect::<CliResult<_>>()?))),
    }
}

/// Config file plus command-line overrides.
pub fn effective_config(cli: &Cli) -> CliResult<RunConfig> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => read_json::<RunConfig>(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &c.domain {
        cfg.domain = Some(read_json(p)?);
    }
    if let Some(p) = &c.model {
        cfg.model = Some(read_json(p)?);
    }
    if let Some(s) = c.seed {
        cfg.seed = Some(s);
    }
    if let Some(p) = parse_points(&c.x)? {
        cfg.x = Some(p);
    }
    if let Some(p) = parse_points(&c.y)? {
        cfg.y = Some(p);
    }
    if let Some(p) = parse_points(&c.z)? {
        cfg.z = Some(p);
    }
    if c.n.is_some() {
        cfg.n = c.n;
    }
    if c.t.is_some() {
        cfg.t = c.t;
    }
    if c.method.is_some() {
        cfg.method = c.method.clone();
    }
    if let Command::Compare { experiment: Some(e) } = &cli.command {
        cfg.experiment = Some(*e);
    }
    // canonical round trip so equivalent inputs hash alike
    let text = serde_json::to_string(&cfg).expect("config serialises");
    parse_json(&text)
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: &Cli) -> CliResult<i32> {
    let cfg = effective_config(cli)?;
    let quick = matches!(cli.command, Command::Suite { quick: true });
    let name = cli.command.name();
    let hash = config_hash(&json!({ "command": name, "quick": quick, "config": cfg }));
    let workers = cli.common.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;
    let started = unix_now();
    let mut out = OutputDir::create(&cli.common.out, &hash)?;
    let verdict = pool.install(|| match &cli.command {
        Command::Density => density(&cfg, &mut out),
        Command::Simulate => simulate(&cfg, &mut out),
        Command::Exit => exit(&cfg, &mut out),
        Command::Green => green(&cfg, &mut out),
        Command::Poisson => poisson(&cfg, &mut out),
        Command::Compare { .. } => compare(&cfg, &mut out),
        Command::Suite { quick } => suite(&cfg, *quick, &mut out),
    })?;
    let manifest = RunManifest {
        command: name.to_string(),
        config_hash: hash,
        seed: cfg.seed(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        workers,
        started,
        finished: unix_now(),
        outputs: out.files().to_vec(),
        status: serde_json::to_value(verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        exit_code: verdict.exit_code(),
    };
    out.write_manifest(&manifest)?;
    Ok(verdict.exit_code())
}

fn flagged(ests: &[Estimate]) -> Verdict {
    if ests.iter().any(|e| e.is_flagged() || !e.value.is_finite()) {
        Verdict::Inconclusive
    } else {
        Verdict::Bounded
    }
}

fn passed(ok: bool) -> Verdict {
    if ok {
        Verdict::Bounded
    } else {
        Verdict::Violated
    }
}

fn coords(p: Point, d: usize) -> Vec<String> {
    p[..d].iter().map(|&v| fmt_f64(v)).collect()
}

fn path_config(cfg: &RunConfig, scale: f64, alpha: f64) -> PathConfig {
    let base = PathConfig::for_scale(scale, alpha);
    PathConfig::new(cfg.eps.unwrap_or(base.eps), cfg.dt.unwrap_or(base.dt))
}

fn density(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<Verdict> {
    let model = cfg.model()?;
    let t = cfg.t.unwrap_or(1.0);
    let spec = match (cfg.grid_h, cfg.grid_n) {
        (Some(h), Some(n)) => GridSpec::new(model.dim(), h, n)?,
        _ => GridSpec::default_for(&model, t),
    };
    let opts = SeriesOptions { n_max: None, tol: cfg.tol.unwrap_or(1e-8) };
    let s = density_series(t, &model, &spec, &opts)?;
    let mut buf = Vec::new();
    s.density.write_csv_slice(&mut buf)?;
    out.write_csv_text("density.csv", &String::from_utf8(buf).expect("ascii csv"))?;
    out.write_json(
        "density.json",
        &json!({
            "t": t,
            "grid": spec,
            "n_max": s.n_max,
            "tail_bound": s.tail_bound,
            "alias_estimate": s.alias_estimate,
            "mass": s.density.mass(),
            "peak": s.density.peak(),
        }),
    )?;
    Ok(Verdict::Bounded)
}

fn simulate(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<Verdict> {
    let model = cfg.model()?;
    let x = cfg.points("x")?[0];
    let horizon = cfg.horizon.or(cfg.t).unwrap_or(1.0);
    let domain = if cfg.domain.is_some() { Some(cfg.domain()?) } else { None };
    let scale = domain.as_ref().map_or(1.0, Domain::diam);
    let engine = PathEngine::new(&model, path_config(cfg, scale, model.alpha()))?;
    let paths = cfg.n.unwrap_or(1);
    let mut rows = Vec::new();
    for i in 0..paths {
        let mut rng = batch_rng(cfg.seed(), i);
        let sk = engine.skeleton(x, domain.as_ref(), horizon, &[], &mut rng)?;
        let mut buf = Vec::new();
        sk.write_csv(&mut buf)?;
        out.write_csv_text(&format!("path_{i:04}.csv"), &String::from_utf8(buf).expect("ascii csv"))?;
        let mut row = vec![i.to_string(), u8::from(sk.exited).to_string(), fmt_f64(sk.exit_time().unwrap_or(f64::NAN))];
        row.extend(coords(sk.end(), model.dim()));
        rows.push(row);
    }
    let mut header = vec!["path".to_string(), "exited".into(), "exit_time".into()];
    header.extend((1..=model.dim()).map(|k| format!("end_x{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.write_csv("simulate.csv", &header, &rows)?;
    Ok(Verdict::Bounded)
}

fn exit(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<Verdict> {
    let domain = cfg.domain()?;
    let model = cfg.model()?;
    let xs = cfg.points("x")?;
    let mc = McConfig::new(cfg.n.unwrap_or(10_000), cfg.seed());
    let method = cfg.method.clone().unwrap_or_else(|| if model.is_stable() { "wos" } else { "path" }.into());
    let ests = match method.as_str() {
        "wos" if model.is_stable() => exit_time_wos(&domain, model.alpha(), &xs, &mc, &WosConfig::default())?,
        "wos" => return Err(CliError::Usage("method `wos` needs a stable model".into())),
        "path" => {
            let path = path_config(cfg, domain.diam(), model.alpha());
            let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(&domain, model.alpha()));
            exit_time_mc_multi(&domain, &model, &xs, &mc, path, horizon)?
        }
        other => return Err(CliError::Usage(format!("unknown exit method `{other}`"))),
    };
    let closed = |x: Point| match (model.is_stable(), domain.as_ball()) {
        (true, Some((c, r))) => ball_mean_exit(levygreen::geometry::sub(x, c), r, model.alpha(), domain.dim()).ok(),
        _ => None,
    };
    let d = domain.dim();
    let rows: Vec<Vec<String>> = xs
        .iter()
        .zip(&ests)
        .map(|(&x, e)| {
            let mut r = coords(x, d);
            r.extend([fmt_f64(e.value), fmt_f64(e.se), closed(x).map_or(String::new(), fmt_f64)]);
            r
        })
        .collect();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.extend(["value".into(), "se".into(), "closed_form".into()]);
    out.write_csv("exit.csv", &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    out.write_json("exit.json", &ests)?;
    Ok(flagged(&ests))
}

fn green(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<Verdict> {
    let domain = cfg.domain()?;
    let model = cfg.model()?;
    let x = cfg.points("x")?[0];
    let ys = cfg.points("y")?;
    let mc = McConfig::new(cfg.n.unwrap_or(100_000), cfg.seed());
    let method = cfg.method.clone().unwrap_or_else(|| if model.is_stable() { "wos" } else { "path" }.into());
    let ests = match method.as_str() {
        "wos" if model.is_stable() => green_wos_stable(&domain, model.alpha(), x, &ys, &mc, &WosConfig::default())?,
        "wos" => return Err(CliError::Usage("method `wos` needs a stable model".into())),
        "path" => {
            let path = path_config(cfg, domain.diam(), model.alpha());
            let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(&domain, model.alpha()));
            let h = cfg.bandwidth.unwrap_or(domain.diam() / 40.0);
            green_mc(&domain, &model, x, &ys, h, &mc, path, horizon)?
        }
        other => return Err(CliError::Usage(format!("unknown green method `{other}`"))),
    };
    let d = domain.dim();
    let closed = |y: Point| match (model.is_stable(), domain.as_ball()) {
        (true, Some((c, r))) if domain.contains(y) => {
            ball_green(levygreen::geometry::sub(x, c), levygreen::geometry::sub(y, c), r, model.alpha(), d).ok()
        }
        _ => None,
    };
    let rows: Vec<Vec<String>> = ys
        .iter()
        .zip(&ests)
        .map(|(&y, e)| {
            let mut r = coords(x, d);
            r.extend(coords(y, d));
            r.extend([fmt_f64(e.value), fmt_f64(e.se), closed(y).map_or(String::new(), fmt_f64)]);
            r
        })
        .collect();
    let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
    header.extend((1..=d).map(|k| format!("y{k}")));
    header.extend(["value".into(), "se".into(), "closed_form".into()]);
    out.write_csv("green.csv", &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    let doc = if ests.len() == 1 { serde_json::to_value(&ests[0]) } else { serde_json::to_value(&ests) }
        .expect("estimates serialise");
    out.write_json("green.json", &doc)?;
    println!("{}", serde_json::to_string_pretty(&doc).expect("estimates serialise"));
    Ok(flagged(&ests))
}

fn poisson(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<Verdict> {
    let domain = cfg.domain()?;
    let model = cfg.model()?;
    let x = cfg.points("x")?[0];
    let zs = cfg.points("z")?;
    let ball = domain.as_ball().is_some();
    let method =
        cfg.method.clone().unwrap_or_else(|| if model.is_stable() && ball { "quadrature" } else { "path" }.into());
    let ests = match method.as_str() {
        "quadrature" => {
            if !(model.is_stable() && ball) {
                return Err(CliError::Usage("method `quadrature` needs a stable model on a ball".into()));
            }
            let green = BallGreen::new(&domain, model.alpha())?;
            let tol = cfg.tol.unwrap_or(1e-7);
            zs.iter()
                .map(|&z| {
                    let q = poisson_kernel_iw(&domain, &model, x, z, &green, tol)?;
                    Ok(Estimate::new(q.value, q.error, 0, 0, "ikeda-watanabe"))
                })
                .collect::<levygreen::Result<Vec<_>>>()?
        }
        "path" => {
            let mc = McConfig::new(cfg.n.unwrap_or(10_000), cfg.seed());
            let path = path_config(cfg, domain.diam(), model.alpha());
            let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(&domain, model.alpha()));
            poisson_kernel_mc(&domain, &model, x, &zs, &mc, path, horizon)?
        }
        other => return Err(CliError::Usage(format!("unknown poisson method `{other}`"))),
    };
    let d = domain.dim();
    let rows: Vec<Vec<String>> = zs
        .iter()
        .zip(&ests)
        .map(|(&z, e)| {
            let mut r = coords(z, d);
            r.extend([fmt_f64(e.value), fmt_f64(e.se)]);
            r
        })
        .collect();
    let mut header: Vec<String> = (1..=d).map(|k| format!("z{k}")).collect();
    header.extend(["value".into(), "se".into()]);
    out.write_csv("poisson.csv", &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    out.write_json("poisson.json", &ests)?;
    Ok(flagged(&ests))
}

fn write_ratio_report(out: &mut OutputDir, report: &RatioReport) -> CliResult<Verdict> {
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let join = |v: &[f64]| v.iter().map(|c| fmt_f64(*c)).collect::<Vec<_>>().join(" ");
            vec![
                join(&r.x),
                r.y.as_deref().map(join).unwrap_or_default(),
                fmt_f64(r.numerator),
                fmt_f64(r.denominator),
                fmt_f64(r.ratio),
                fmt_f64(r.se),
                fmt_f64(r.ci.0),
                fmt_f64(r.ci.1),
                r.flags.join("; ").replace(',', ";"),
            ]
        })
        .collect();
    out.write_csv("ratios.csv", &["x", "y", "numerator", "denominator", "ratio", "se", "ci_lo", "ci_hi", "flags"], &rows)?;
    out.write_json("report.json", report)?;
    Ok(report.verdict)
}

fn compare_options(cfg: &RunConfig, n_default: usize) -> CompareOptions {
    let mut opts = CompareOptions::new(cfg.n.unwrap_or(n_default), cfg.seed());
    opts.bandwidth = cfg.bandwidth;
    opts.doubling = cfg.doubling.unwrap_or(true);
    opts.horizon = cfg.horizon;
    if cfg.eps.is_some() || cfg.dt.is_some() {
        if let (Ok(domain), Ok(model)) = (cfg.domain(), cfg.model()) {
            opts.path = Some(path_config(cfg, domain.diam(), model.alpha()));
        }
    }
    opts
}

fn compare(cfg: &RunConfig, out: &mut OutputDir) -> CliResult<Verdict> {
    let experiment = cfg
        .experiment
        .ok_or_else(|| CliError::Usage("compare needs `experiment` (config or --experiment)".into()))?;
    match experiment {
        Experiment::Green => {
            let (domain, model) = (cfg.domain()?, cfg.model()?);
            let opts = compare_options(cfg, 10_000);
            let h = opts.bandwidth_for(&domain);
            let pairs = cfg.pairs.unwrap_or(20);
            let grid = match (&cfg.x, &cfg.y) {
                (Some(x), Some(y)) => PairGrid {
                    sources: x.to_points().into_iter().map(|p| (p, y.to_points())).collect(),
                },
                _ => PairGrid::spread(&domain, 4, pairs.div_ceil(4), 4.0 * h, 0.1 * domain.diam()),
            };
            write_ratio_report(out, &compare_green(&domain, &model, &grid, &opts)?)
        }
        Experiment::Moments => {
            let (domain, model) = (cfg.domain()?, cfg.model()?);
            let xs = match &cfg.x {
                Some(p) => p.to_points(),
                None => spread_points(&domain, cfg.pairs.unwrap_or(10), 0.1 * domain.diam(), 0),
            };
            write_ratio_report(out, &compare_moments(&domain, &model, &xs, &compare_options(cfg, 10_000))?)
        }
        Experiment::Poisson => {
            let (domain, model) = (cfg.domain()?, cfg.model()?);
            let r = compare_poisson(&domain, &model, &cfg.points("x")?, &cfg.points("z")?, &compare_options(cfg, 10_000))?;
            write_ratio_report(out, &r)
        }
        Experiment::PoissonFar => {
            let (domain, model) = (cfg.domain()?, cfg.model()?);
            let x = cfg.points("x")?[0];
            let r = poisson_far_ratio(&domain, &model, x, &cfg.points("z")?, &compare_options(cfg, 10_000))?;
            write_ratio_report(out, &r)
        }
        Experiment::Bhp => {
            let (domain, model) = (cfg.domain()?, cfg.model()?);
            let b = cfg.bhp.clone().ok_or_else(|| CliError::Usage("bhp experiment needs a `bhp` section".into()))?;
            let z = levygreen::geometry::point(&b.z);
            let opts = BhpOptions { rho: b.rho, beta: b.beta, points: b.points, n: cfg.n.unwrap_or(10_000), seed: cfg.seed() };
            let r = bhp_check(&domain, &model, z, |_| 1.0, |p| dist(p, z), &opts)?;
            write_ratio_report(out, &r)
        }
        Experiment::Calka => {
            let c = cfg.calka.clone().ok_or_else(|| CliError::Usage("calka experiment needs a `calka` section".into()))?;
            let (lo, hi) = match &cfg.domain {
                Some(_) => {
                    let d = cfg.domain()?;
                    let (lo, hi) = d.bounding_box();
                    (lo[0], hi[0])
                }
                None => (-1.0, 1.0),
            };
            let ladder = c.ladder.clone().unwrap_or_else(|| halving_ladder(0.1, 6));
            let r = calka_bound_check(lo, hi, c.a, c.b, c.rho, &ladder, cfg.tol.unwrap_or(1e-5))?;
            out.write_json("report.json", &r)?;
            Ok(passed(r.passed))
        }
        Experiment::Contraction => {
            let (domain, model) = (cfg.domain()?, cfg.model()?);
            let r = contraction_theta(&domain, &model, cfg.pairs.unwrap_or(6), cfg.tol.unwrap_or(1e-6))?;
            out.write_json("report.json", &r)?;
            Ok(passed(r.passed))
        }
        Experiment::Potential => {
            let model = cfg.model()?;
            let radii = cfg.radii.clone().unwrap_or_else(|| vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0]);
            let coarse = potential_compare(&model, &radii, &PotentialOptions { t_max: 50.0, panels_per_log_unit: 2 })?;
            let fine = potential_compare(&model, &radii, &PotentialOptions { t_max: 50.0, panels_per_log_unit: 4 })?;
            let change = (fine.band - coarse.band).abs() / coarse.band;
            out.write_json("report.json", &json!({ "coarse": coarse, "fine": fine, "relative_change": change }))?;
            Ok(if fine.band.is_finite() && change < 0.2 { Verdict::Bounded } else { Verdict::Inconclusive })
        }
        Experiment::Domination => {
            let model = cfg.model()?;
            let times = cfg.times.clone().unwrap_or_else(|| vec![0.25, 0.5, 1.0]);
            let r = domination_check(
                &times,
                cfg.grid_h.unwrap_or(0.01),
                cfg.grid_n.unwrap_or(2048),
                &model,
                &SeriesOptions { n_max: None, tol: cfg.tol.unwrap_or(1e-8) },
            )?;
            out.write_json("report.json", &r)?;
            Ok(passed(r.passed))
        }
        Experiment::Occupation => {
            let (domain, model) = (cfg.domain()?, cfg.model()?);
            let x = cfg.points("x")?[0];
            let mc = McConfig::new(cfg.n.unwrap_or(10_000), cfg.seed());
            let path = if cfg.eps.is_some() || cfg.dt.is_some() {
                path_config(cfg, domain.diam(), model.alpha())
            } else {
                default_path_config(&domain, model.alpha())
            };
            let r = occupation_identity(&domain, &model, x, cfg.cells.unwrap_or(50), &mc, path)?;
            out.write_json("report.json", &r)?;
            if r.integral.is_flagged() || r.exit_time.is_flagged() {
                Ok(Verdict::Inconclusive)
            } else {
                Ok(passed(r.passed))
            }
        }
    }
}

fn suite(cfg: &RunConfig, quick: bool, out: &mut OutputDir) -> CliResult<Verdict> {
    let scale = if quick { Scale::Quick } else { Scale::Full };
    let mut status = Verdict::Bounded;
    let mut rows = Vec::new();
    for id in criteria(scale) {
        let o = run_criterion(id, scale, cfg.seed());
        println!("{}", o.line());
        out.write_json(&format!("criterion_{id:02}.json"), &o)?;
        status = status.and(o.verdict);
        let verdict = serde_json::to_value(o.verdict).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        rows.push(vec![id.to_string(), o.name.clone(), verdict, o.detail.replace(',', ";")]);
    }
    out.write_csv("summary.csv", &["id", "name", "verdict", "detail"], &rows)?;
    Ok(status)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_parse_from_flags() {
        assert_eq!(parse_point("0.3, 0").unwrap(), vec![0.3, 0.0]);
        assert!(parse_point("0.3,a").is_err());
        let many = parse_points(&["0,0".into(), "1,2".into()]).unwrap().unwrap();
        assert_eq!(many.to_points().len(), 2);
    }

    #[test]
    fn experiment_names() {
        assert_eq!(parse_experiment("poisson_far").unwrap(), Experiment::PoissonFar);
        assert!(parse_experiment("nope").is_err());
    }
}
