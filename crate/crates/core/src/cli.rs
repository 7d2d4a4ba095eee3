//! `mfhold` command-line driver.
//!
//! Exit codes: 0 on success, 2 for configuration and I/O errors, 3 for
//! numerical failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use crate::config::{apply_assignment, load_object, RunConfig};
use crate::csv_out::{Cell, Table};
use crate::equilibrium::{compute_fields, consistency_residuals};
use crate::error::{Error, Result};
use crate::measures::empirical_from_samples;
use crate::mfsim::{
    cauchy_convergence_diagnostic, onestep_illustration, simulate_equilibrium_mckv, simulate_provisions,
    summarize_ensemble, ParticleEnsemble,
};
use crate::noise::NoiseKey;
use crate::nplayer::{nash_gap_estimate, simulate_nplayer, DeviationStrategy, NashGapConfig};
use crate::threshold::{c_upper_bound, solve_c_empirical, solve_c_gaussian_ou};

pub const OUT_DIR_ENV: &str = "MFHOLD_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "mfhold", version, about = "Mean-field mutual holding equilibrium toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the threshold c for a weighted drift sample or a Gaussian OU start.
    SolveThreshold(Opts),
    /// Equilibrium drift, volatility and holding on the atoms of a measure.
    EquilibriumFields(Opts),
    /// Particle simulation of the equilibrium mean-field dynamics.
    SimulateMfg(Opts),
    /// Independent provisions paths on the same noise.
    SimulateProvisions(Opts),
    /// One-step Gaussian illustration: densities and moments.
    OnestepFigures(Opts),
    /// Finite-N cross-holding system under the induced strategy.
    SimulateNplayer(Opts),
    /// Monte-Carlo epsilon-Nash gap for a deviation family.
    NashGap(Opts),
    /// Terminal-law W2 distances between runs of growing size.
    ConvergenceDiag(Opts),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SolveThreshold(_) => "solve-threshold",
            Command::EquilibriumFields(_) => "equilibrium-fields",
            Command::SimulateMfg(_) => "simulate-mfg",
            Command::SimulateProvisions(_) => "simulate-provisions",
            Command::OnestepFigures(_) => "onestep-figures",
            Command::SimulateNplayer(_) => "simulate-nplayer",
            Command::NashGap(_) => "nash-gap",
            Command::ConvergenceDiag(_) => "convergence-diag",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Command::SolveThreshold(o)
            | Command::EquilibriumFields(o)
            | Command::SimulateMfg(o)
            | Command::SimulateProvisions(o)
            | Command::OnestepFigures(o)
            | Command::SimulateNplayer(o)
            | Command::NashGap(o)
            | Command::ConvergenceDiag(o) => o,
        }
    }
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// JSON config file or a previous run manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: $MFHOLD_OUT_DIR, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prefix for output file names.
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mbar: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigbar: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    b0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sig0: Option<f64>,
    #[arg(long)]
    drift_bound: Option<f64>,
    #[arg(long)]
    sigma_floor: Option<f64>,

    /// Number of particles, players or samples.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, alias = "T")]
    horizon: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,

    /// Comma-separated drift values.
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    /// Comma-separated weights.
    #[arg(long)]
    weights: Option<String>,
    /// Comma-separated measure atoms.
    #[arg(long, allow_hyphen_values = true)]
    atoms: Option<String>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mu_mean: Option<f64>,
    #[arg(long)]
    mu_var: Option<f64>,

    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    bandwidth: Option<f64>,

    /// Comma-separated deviation names (null, never_hold, always_hold, anti_bang_bang).
    #[arg(long)]
    deviations: Option<String>,
    #[arg(long)]
    replications: Option<usize>,
    /// Comma-separated particle counts.
    #[arg(long)]
    n_list: Option<String>,
    #[arg(long)]
    all_players: bool,

    /// Suppress the console summary.
    #[arg(long, short)]
    quiet: bool,

    /// Raw override `key=value` (value parsed as JSON when possible).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|_| Error::Config(format!("bad value `{p}` for `{key}`"))))
        .collect()
}

fn merged_config(opts: &Opts) -> Result<RunConfig> {
    let mut obj = match &opts.config {
        Some(path) => load_object(path)?,
        None => Map::new(),
    };
    let mut put = |key: &str, v: Value| {
        obj.insert(key.to_string(), v);
    };
    let num = |v: f64| json!(v);
    if let Some(v) = &opts.run_id {
        put("run_id", json!(v));
    }
    if let Some(v) = opts.threads {
        put("threads", json!(v));
    }
    if let Some(v) = opts.seed {
        put("seed", json!(v));
    }
    for (key, v) in [
        ("theta", opts.theta),
        ("mbar", opts.mbar),
        ("sigbar", opts.sigbar),
        ("b0", opts.b0),
        ("sig0", opts.sig0),
        ("drift_bound", opts.drift_bound),
        ("sigma_floor", opts.sigma_floor),
        ("horizon", opts.horizon),
        ("tol", opts.tol),
        ("t", opts.t),
        ("mu_mean", opts.mu_mean),
        ("mu_var", opts.mu_var),
        ("delta", opts.delta),
        ("bandwidth", opts.bandwidth),
    ] {
        if let Some(v) = v {
            put(key, num(v));
        }
    }
    for (key, v) in [
        ("n", opts.n),
        ("steps", opts.steps),
        ("grid_points", opts.grid_points),
        ("replications", opts.replications),
    ] {
        if let Some(v) = v {
            put(key, json!(v));
        }
    }
    for (key, v) in [("b", &opts.b), ("weights", &opts.weights), ("atoms", &opts.atoms)] {
        if let Some(s) = v {
            put(key, json!(parse_list::<f64>(key, s)?));
        }
    }
    if let Some(s) = &opts.n_list {
        put("n_list", json!(parse_list::<usize>("n_list", s)?));
    }
    if let Some(s) = &opts.deviations {
        let devs = s
            .split(',')
            .map(|p| DeviationStrategy::parse(p.trim()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Config(e.to_string()))?;
        put("deviations", serde_json::to_value(devs).expect("deviations serialize"));
    }
    if opts.all_players {
        put("all_players", json!(true));
    }
    for a in &opts.set {
        apply_assignment(&mut obj, a)?;
    }
    RunConfig::from_object(obj)
}

fn out_dir(opts: &Opts, cfg: &RunConfig) -> PathBuf {
    if let Some(p) = &opts.out {
        return p.clone();
    }
    if let Some(p) = &cfg.out_dir {
        return PathBuf::from(p);
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from("out"),
    }
}

struct Outcome {
    tables: Vec<(&'static str, Table)>,
    messages: Vec<String>,
}

/// Runs the CLI on `argv` (including the program name) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                3
            } else {
                2
            }
        }
    }
}

fn execute(command: &Command) -> Result<()> {
    let started = Instant::now();
    let opts = command.opts();
    let cfg = merged_config(opts)?;
    let outcome = match command {
        Command::SolveThreshold(_) => solve_threshold(&cfg)?,
        Command::EquilibriumFields(_) => equilibrium_fields(&cfg)?,
        Command::SimulateMfg(_) => ensemble_outputs(&cfg, simulate_equilibrium_mckv(&cfg.sim_config()?)?, None)?,
        Command::SimulateProvisions(_) => ensemble_outputs(&cfg, simulate_provisions(&cfg.sim_config()?)?, None)?,
        Command::SimulateNplayer(_) => {
            let run = simulate_nplayer(&cfg.sim_config()?)?;
            let mut holding = Table::new(["t", "c", "held_fraction"]);
            for (k, h) in run.holding.iter().enumerate() {
                holding.push(vec![run.ensemble.times[k].into(), h.c.into(), h.held_fraction().into()]);
            }
            ensemble_outputs(&cfg, run.ensemble, Some(holding))?
        }
        Command::OnestepFigures(_) => onestep(&cfg)?,
        Command::NashGap(_) => nash_gap(&cfg)?,
        Command::ConvergenceDiag(_) => convergence(&cfg)?,
    };
    let dir = out_dir(opts, &cfg);
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    let prefix = cfg.run_id.as_ref().map(|r| format!("{r}_")).unwrap_or_default();
    let mut written = Vec::new();
    for (name, table) in &outcome.tables {
        let file = format!("{prefix}{name}.csv");
        write_checked(&dir.join(&file), |p| table.write(p))?;
        written.push(file);
    }
    let manifest = json!({
        "subcommand": command.name(),
        "config": Value::Object(cfg.to_object()),
        "seed": cfg.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "outputs": written,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    let manifest_path = dir.join(format!("{prefix}run_manifest.json"));
    write_checked(&manifest_path, |p| {
        std::fs::write(p, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")?;
        Ok(())
    })?;
    if !opts.quiet {
        for m in &outcome.messages {
            println!("{m}");
        }
    }
    Ok(())
}

fn write_checked(path: &Path, f: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    f(path).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn solve_threshold(cfg: &RunConfig) -> Result<Outcome> {
    let tol = cfg.tol();
    let (result, bound) = match &cfg.b {
        Some(b) => {
            let m = empirical_from_samples(b, cfg.weights.as_deref())?;
            (solve_c_empirical(m.atoms(), m.weights(), tol)?, c_upper_bound(m.atoms(), m.weights()))
        }
        None => {
            let theta = cfg.theta.ok_or_else(|| Error::Config("missing required key `b` (or `theta`)".into()))?;
            let mbar = cfg.mbar.ok_or_else(|| Error::Config("missing required key `mbar`".into()))?;
            let mu_mean = cfg.mu_mean.unwrap_or(mbar);
            let mu_var = match (cfg.mu_var, cfg.sigbar) {
                (Some(v), _) => v,
                (None, Some(s)) => s * s / (2.0 * theta),
                (None, None) => return Err(Error::Config("missing required key `mu_var` (or `sigbar`)".into())),
            };
            let r = solve_c_gaussian_ou(theta, mbar, mu_mean, mu_var, tol)?;
            let s = theta * mu_var.sqrt();
            let bound = 2.0 * crate::measures::gaussian_positive_part_mean(theta * (mbar - mu_mean), s);
            (r, bound)
        }
    };
    let mut table = Table::new(["c", "residual", "iterations", "method", "upper_bound"]);
    table.push(vec![
        result.c.into(),
        result.residual.into(),
        result.iterations.into(),
        result.method.as_str().into(),
        bound.into(),
    ]);
    Ok(Outcome {
        tables: vec![("threshold", table)],
        messages: vec![
            format!("c={:.12}", result.c),
            format!("residual={:e}", result.residual),
            format!("method={} iterations={}", result.method.as_str(), result.iterations),
        ],
    })
}

fn equilibrium_fields(cfg: &RunConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let atoms = cfg.atoms.as_ref().ok_or_else(|| Error::Config("missing required key `atoms`".into()))?;
    let m = empirical_from_samples(atoms, cfg.weights.as_deref())?;
    let f = compute_fields(&model, cfg.t.unwrap_or(0.0), &m, cfg.tol())?;
    let (r1, r2) = consistency_residuals(&f, m.weights());
    let mut table = Table::new(["atom", "weight", "b", "B", "Sigma", "holding"]);
    for j in 0..f.len() {
        table.push(vec![
            f.atoms[j].into(),
            f.weights[j].into(),
            f.b_vals[j].into(),
            f.drift[j].into(),
            f.vol[j].into(),
            f.holding[j].into(),
        ]);
    }
    Ok(Outcome {
        tables: vec![("fields", table)],
        messages: vec![format!("c={:.12}", f.c), format!("r1={r1:e} r2={r2:e}")],
    })
}

fn ensemble_outputs(cfg: &RunConfig, e: ParticleEnsemble, extra: Option<Table>) -> Result<Outcome> {
    let s = summarize_ensemble(&e, None, cfg.bandwidth)?;
    let mut summary = Table::new(["t", "mean", "variance", "q05", "q25", "q50", "q75", "q95", "c"]);
    for r in &s.rows {
        summary.push(vec![
            r.t.into(),
            r.mean.into(),
            r.variance.into(),
            r.q05.into(),
            r.q25.into(),
            r.q50.into(),
            r.q75.into(),
            r.q95.into(),
            r.c.map_or(Cell::Text(String::new()), Cell::Float),
        ]);
    }
    let mut density = Table::new(["x", "density"]);
    for (x, d) in s.terminal_grid.iter().zip(&s.terminal_density) {
        density.push(vec![(*x).into(), (*d).into()]);
    }
    let mut terminal = Table::new(["particle", "x0", "x_T"]);
    for p in 0..e.n_particles {
        terminal.push(vec![p.into(), e.state(p, 0).into(), e.state(p, e.n_steps()).into()]);
    }
    let last = s.rows.last().expect("at least one time");
    let mut tables = vec![("summary", summary), ("density", density), ("terminal", terminal)];
    if let Some(h) = extra {
        tables.push(("holding", h));
    }
    Ok(Outcome {
        tables,
        messages: vec![format!(
            "T={} mean={:.6} variance={:.6} bandwidth={:.6}",
            last.t, last.mean, last.variance, s.bandwidth
        )],
    })
}

fn onestep(cfg: &RunConfig) -> Result<Outcome> {
    let r = onestep_illustration(&cfg.onestep_params()?)?;
    let s = &r.summary;
    let mut summary = Table::new([
        "c",
        "mean_provisions",
        "var_provisions",
        "mean_equity",
        "var_equity",
        "mean_diff",
        "se_diff",
        "held_fraction",
        "bandwidth_provisions",
        "bandwidth_equity",
    ]);
    summary.push(vec![
        s.c.into(),
        s.mean_provisions.into(),
        s.var_provisions.into(),
        s.mean_equity.into(),
        s.var_equity.into(),
        s.mean_diff.into(),
        s.se_diff.into(),
        s.held_fraction.into(),
        r.densities.bandwidth_provisions.into(),
        r.densities.bandwidth_equity.into(),
    ]);
    let mut densities = Table::new(["x", "provisions", "equity"]);
    for k in 0..r.densities.grid.len() {
        densities.push(vec![
            r.densities.grid[k].into(),
            r.densities.provisions[k].into(),
            r.densities.equity[k].into(),
        ]);
    }
    let mut profile = Table::new(["x", "b", "B", "Sigma"]);
    let d = &r.drift_profile;
    for k in 0..d.x.len() {
        profile.push(vec![d.x[k].into(), d.b[k].into(), d.big_b[k].into(), d.sigma[k].into()]);
    }
    Ok(Outcome {
        tables: vec![("summary", summary), ("densities", densities), ("drift_profile", profile)],
        messages: vec![
            format!("c={:.12}", s.c),
            format!("provisions: mean={:.6} variance={:.6}", s.mean_provisions, s.var_provisions),
            format!("equity:     mean={:.6} variance={:.6}", s.mean_equity, s.var_equity),
            format!("mean difference={:.6} (se {:.6})", s.mean_diff, s.se_diff),
        ],
    })
}

fn default_deviations() -> Vec<DeviationStrategy> {
    vec![DeviationStrategy::NeverHold, DeviationStrategy::AlwaysHold, DeviationStrategy::AntiBangBang]
}

fn nash_gap(cfg: &RunConfig) -> Result<Outcome> {
    let ns = match (&cfg.n_list, cfg.n) {
        (Some(list), _) if !list.is_empty() => list.clone(),
        (_, Some(n)) => vec![n],
        _ => return Err(Error::Config("missing required key `n` (or `n_list`)".into())),
    };
    let mut base_cfg = cfg.clone();
    base_cfg.n = Some(ns[0]);
    let base = base_cfg.sim_config()?;
    let key = NoiseKey::new(base.seed);
    let mut rows = Table::new([
        "N",
        "deviation_name",
        "J_base",
        "J_dev",
        "gain",
        "se_gain",
        "eps_hat",
        "n_replications",
        "seed",
        "excluded",
        "mean_weight",
        "se_weight",
        "max_weight",
        "ess",
    ]);
    let mut eps = Table::new(["N", "eps_hat", "se_eps"]);
    let mut messages = Vec::new();
    for &n in &ns {
        let mut sim = base.clone();
        sim.n_particles = n;
        sim.seed = key.derive(n as u64).seed();
        let gap = NashGapConfig {
            sim,
            deviations: cfg.deviations.clone().unwrap_or_else(default_deviations),
            replications: cfg.replications.unwrap_or(1000),
            all_players: cfg.all_players.unwrap_or(false),
            utility: cfg.utility.unwrap_or_default(),
        };
        let report = nash_gap_estimate(&gap)?;
        for r in &report.rows {
            rows.push(vec![
                r.n.into(),
                r.deviation_name.clone().into(),
                r.j_base.into(),
                r.j_dev.into(),
                r.gain.into(),
                r.se_gain.into(),
                r.eps_hat.into(),
                r.n_replications.into(),
                r.seed.into(),
                r.excluded.into(),
                r.mean_weight.into(),
                r.se_weight.into(),
                r.max_weight.into(),
                r.ess.into(),
            ]);
        }
        eps.push(vec![n.into(), report.eps_hat.into(), report.se_eps.into()]);
        messages.push(format!("N={n} eps_hat={:.6} (se {:.6})", report.eps_hat, report.se_eps));
    }
    Ok(Outcome { tables: vec![("nash_gap", rows), ("eps", eps)], messages })
}

fn convergence(cfg: &RunConfig) -> Result<Outcome> {
    let model = cfg.model()?;
    let initial = cfg.initial(&model)?;
    let n_list = cfg.n_list.as_ref().ok_or_else(|| Error::Config("missing required key `n_list`".into()))?;
    let horizon = cfg.horizon.ok_or_else(|| Error::Config("missing required key `horizon`".into()))?;
    let steps = cfg.steps.ok_or_else(|| Error::Config("missing required key `steps`".into()))?;
    let rows = cauchy_convergence_diagnostic(
        &model,
        &initial,
        horizon,
        steps,
        cfg.require_seed()?,
        n_list,
        cfg.tol(),
        cfg.threads,
    )?;
    let mut table = Table::new(["n_prev", "n", "w2"]);
    let mut messages = Vec::new();
    for r in &rows {
        table.push(vec![r.n_prev.into(), r.n.into(), r.w2.into()]);
        messages.push(format!("{} -> {}: W2={:.6}", r.n_prev, r.n, r.w2));
    }
    Ok(Outcome { tables: vec![("convergence", table)], messages })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hyphenated_lists_parse() {
        let cli = Cli::try_parse_from(["mfhold", "solve-threshold", "--b", "-1,1", "--weights", "0.5,0.5"]).unwrap();
        let cfg = merged_config(cli.command.opts()).unwrap();
        assert_eq!(cfg.b, Some(vec![-1.0, 1.0]));
    }

    #[test]
    fn unknown_flag_is_config_error() {
        assert_eq!(run(["mfhold", "solve-threshold", "--bogus", "1"]), 2);
        assert_eq!(run(["mfhold", "no-such-command"]), 2);
    }

    #[test]
    fn negative_parameters_parse() {
        let cli = Cli::try_parse_from(["mfhold", "onestep-figures", "--mbar", "-0.5", "--theta", "1"]).unwrap();
        assert_eq!(merged_config(cli.command.opts()).unwrap().mbar, Some(-0.5));
    }
}
