//! Command-line front end: `plan`, `sweep`, `curves`, `bench`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ConfigError, PlanConfig};
use crate::pipeline::{PlanError, Problem, QueryOptions, Solution};
use crate::trajectory::CRUISE_DEFINITION;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_PLANNING: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "phaseplan", version, about = "Time-optimal path parameterization with a tunable velocity cap")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan one trajectory and write trajectory.csv and metrics.json.
    Plan(CommonArgs),
    /// Plan over an ε grid and write sweep.csv.
    Sweep(CommonArgs),
    /// Write the velocity limit curves to curves.csv.
    Curves(CommonArgs),
    /// Time precompute, CNI and BIO over repeated runs; writes bench.csv.
    Bench(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Problem file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of grid intervals.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Velocity cap ε.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Seed for run-order shuffling in `bench`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Formats a float with 9 significant digits; unbounded values print as
/// `inf`.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let s = format!("{x:.8e}");
        let (mantissa, exponent) = s.split_once('e').unwrap_or((&s, "0"));
        format!("{}e{exponent}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

struct Failed {
    code: u8,
    message: String,
}

impl From<ConfigError> for Failed {
    fn from(e: ConfigError) -> Self {
        Failed {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }
}

fn io_failed(path: &Path, e: std::io::Error) -> Failed {
    Failed {
        code: EXIT_CONFIG,
        message: format!("cannot write {}: {e}", path.display()),
    }
}

fn load(args: &CommonArgs) -> Result<(PlanConfig, PathBuf), Failed> {
    let mut cfg = PlanConfig::load(&args.config)?;
    if let Some(n) = args.grid {
        cfg.grid = n;
    }
    if let Some(e) = args.epsilon {
        cfg.epsilon = Some(e);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    std::fs::create_dir_all(&out).map_err(|e| io_failed(&out, e))?;
    Ok((cfg, out))
}

fn write(path: &Path, text: &str) -> Result<(), Failed> {
    std::fs::write(path, text).map_err(|e| io_failed(path, e))
}

/// Exit code and failure document for a planning error.
fn report_failure(out: &Path, err: &PlanError, epsilon: Option<f64>) -> Failed {
    let code = if err.is_planning_failure() {
        EXIT_PLANNING
    } else {
        EXIT_CONFIG
    };
    let s = match err {
        PlanError::Planning(f) => Some(f.s),
        PlanError::Smoothing(f) => Some(f.s),
        _ => None,
    };
    let doc = json!({
        "status": "failure",
        "reason": err.code(),
        "s": s,
        "epsilon": epsilon,
        "detail": err.to_string(),
    });
    let _ = std::fs::write(
        out.join("failure.json"),
        serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n",
    );
    Failed {
        code,
        message: format!("failure: {} ({err})", err.code()),
    }
}

fn build_problem(cfg: &PlanConfig, out: &Path) -> Result<Problem, Failed> {
    cfg.problem().map_err(|e| report_failure(out, &e, cfg.epsilon))
}

fn options(cfg: &PlanConfig) -> QueryOptions {
    QueryOptions {
        half_width: cfg.window,
    }
}

pub fn trajectory_csv(sol: &Solution) -> String {
    let m = sol.traces.v.first().map_or(0, |v| v.len());
    let mut out = String::from("t,s,s_dot,s_ddot");
    for i in 1..=m {
        let _ = write!(out, ",v_{i}");
    }
    for i in 1..=m {
        let _ = write!(out, ",a_{i}");
    }
    out.push('\n');
    let tr = &sol.trajectory;
    for k in 0..tr.len() {
        let mut cells = vec![
            fmt_num(tr.t[k]),
            fmt_num(tr.s[k]),
            fmt_num(tr.s_dot[k]),
            fmt_num(tr.s_ddot[k]),
        ];
        cells.extend(sol.traces.v[k].iter().map(|x| fmt_num(*x)));
        cells.extend(sol.traces.a[k].iter().map(|x| fmt_num(*x)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn cmd_plan(args: &CommonArgs) -> Result<(), Failed> {
    let (cfg, out) = load(args)?;
    let epsilon = cfg.epsilon.ok_or_else(|| Failed {
        code: EXIT_CONFIG,
        message: "field `epsilon`: required by `plan` (or pass --epsilon)".into(),
    })?;
    let problem = build_problem(&cfg, &out)?;
    let sol = problem
        .plan(epsilon, cfg.s_dot_start, cfg.s_dot_end, options(&cfg))
        .map_err(|e| report_failure(&out, &e, Some(epsilon)))?;
    write(&out.join("trajectory.csv"), &trajectory_csv(&sol))?;
    let doc = json!({
        "status": "ok",
        "traveling_time_s": sol.metrics.traveling_time,
        "cruise_proportion": sol.metrics.cruise_proportion,
        "comp_time_ms": ms(sol.timings.query()),
        "epsilon": epsilon,
        "precompute_ms": ms(sol.timings.precompute),
        "cni_ms": ms(sol.timings.cni),
        "bio_ms": ms(sol.timings.bio),
        "intersections": sol.raw.intersections.len(),
        "cruise_definition": CRUISE_DEFINITION,
    });
    write(
        &out.join("metrics.json"),
        &(serde_json::to_string_pretty(&doc).unwrap_or_default() + "\n"),
    )?;
    println!(
        "traveling_time_s={} cruise_proportion={} comp_time_ms={}",
        fmt_num(sol.metrics.traveling_time),
        fmt_num(sol.metrics.cruise_proportion),
        fmt_num(ms(sol.timings.query()))
    );
    Ok(())
}

/// Clips a requested ε grid to `[max(ṡ_0, ṡ_e), Max(MVC)]`.
fn clip_grid(grid: Vec<f64>, low: f64, high: f64) -> Vec<f64> {
    let clipped: Vec<f64> = grid.iter().map(|e| e.clamp(low, high)).collect();
    if clipped != grid {
        warn!("sweep grid clipped to the valid interval [{low}, {high}]");
    }
    clipped
}

fn thread_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("TOPP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
    {
        builder = builder.num_threads(n);
    }
    builder.build().expect("thread pool")
}

fn monotone(values: &[f64], slack: f64, increasing: bool) -> bool {
    values.windows(2).all(|w| {
        if increasing {
            w[1] >= w[0] - slack
        } else {
            w[1] <= w[0] + slack
        }
    })
}

fn cmd_sweep(args: &CommonArgs) -> Result<(), Failed> {
    let (cfg, out) = load(args)?;
    let grid = cfg.sweep_grid().ok_or_else(|| Failed {
        code: EXIT_CONFIG,
        message: "field `sweep`: required by `sweep`".into(),
    })?;
    let problem = build_problem(&cfg, &out)?;
    let low = cfg.s_dot_start.max(cfg.s_dot_end);
    let grid = clip_grid(grid, low, problem.limits().max_mvc());
    let opts = options(&cfg);
    let rows: Vec<(f64, Result<Solution, PlanError>)> = thread_pool().install(|| {
        grid.par_iter()
            .map(|&e| (e, problem.plan(e, cfg.s_dot_start, cfg.s_dot_end, opts)))
            .collect()
    });
    let mut text = String::from("epsilon,traveling_time_s,comp_time_ms,cruise_proportion,status\n");
    let (mut times, mut cruise, mut comp) = (Vec::new(), Vec::new(), Vec::new());
    for (e, r) in &rows {
        match r {
            Ok(sol) => {
                let _ = writeln!(
                    text,
                    "{},{},{},{},ok",
                    fmt_num(*e),
                    fmt_num(sol.metrics.traveling_time),
                    fmt_num(ms(sol.timings.query())),
                    fmt_num(sol.metrics.cruise_proportion)
                );
                times.push(sol.metrics.traveling_time);
                cruise.push(sol.metrics.cruise_proportion);
                comp.push(ms(sol.timings.query()));
            }
            Err(err) => {
                let _ = writeln!(text, "{},,,,{}", fmt_num(*e), err.code());
            }
        }
    }
    let verdict = |ok: bool| if ok { "pass" } else { "fail" };
    let cell = 1.0 / cfg.grid as f64;
    let _ = writeln!(
        text,
        "# theorem-2 traveling_time non-increasing (slack 1e-6): {}",
        verdict(monotone(&times, 1e-6, false))
    );
    let _ = writeln!(
        text,
        "# theorem-4 cruise_proportion non-increasing (slack one cell): {}",
        verdict(monotone(&cruise, cell, false))
    );
    let comp_ok = comp.windows(2).all(|w| w[1] >= 0.8 * w[0]);
    let _ = writeln!(
        text,
        "# theorem-3 comp_time_ms non-decreasing within 20% (single run per row): {}",
        verdict(comp_ok)
    );
    write(&out.join("sweep.csv"), &text)?;
    info!("wrote {} sweep rows", rows.len());
    Ok(())
}

fn cmd_curves(args: &CommonArgs) -> Result<(), Failed> {
    let (cfg, out) = load(args)?;
    let problem = build_problem(&cfg, &out)?;
    let lim = problem.limits();
    let epsilon = cfg.epsilon.unwrap_or(lim.max_mvc());
    let curves = lim
        .reconstruct(epsilon)
        .map_err(|e| report_failure(&out, &PlanError::Limits(e), Some(epsilon)))?;
    let mut text = String::from("s,mvc_v,mvc_a,mvc,cvb,mvc_star\n");
    for k in 0..problem.table().nodes() {
        let row = [
            problem.table().node_s(k),
            lim.mvc_v()[k],
            lim.mvc_a()[k],
            lim.mvc()[k],
            lim.cvb()[k],
            curves.mvc_star[k],
        ];
        let cells: Vec<String> = row.iter().map(|x| fmt_num(*x)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write(&out.join("curves.csv"), &text)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * p).round() as usize;
    sorted[idx]
}

fn cmd_bench(args: &CommonArgs) -> Result<(), Failed> {
    let (cfg, out) = load(args)?;
    let problem = build_problem(&cfg, &out)?;
    let reps = cfg.bench_reps.max(20);
    let grid = match (cfg.sweep_grid(), cfg.epsilon) {
        (Some(g), _) => g,
        (None, Some(e)) => vec![e],
        (None, None) => {
            return Err(Failed {
                code: EXIT_CONFIG,
                message: "field `sweep` or `epsilon`: required by `bench`".into(),
            })
        }
    };
    let low = cfg.s_dot_start.max(cfg.s_dot_end);
    let high = problem.limits().max_mvc();
    let grid = clip_grid(grid, low, high);

    let mut pre = Vec::with_capacity(reps);
    for _ in 0..reps {
        let p = build_problem(&cfg, &out)?;
        pre.push(ms(p.precompute_time()));
    }
    pre.sort_by(f64::total_cmp);

    let mut order: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|i| (0..reps).map(move |r| (i, r)))
        .collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut cni = vec![Vec::with_capacity(reps); grid.len()];
    let mut bio = vec![Vec::with_capacity(reps); grid.len()];
    let mut status = vec!["ok"; grid.len()];
    for (i, _) in order {
        match problem.profiles(grid[i], cfg.s_dot_start, cfg.s_dot_end, options(&cfg)) {
            Ok((_, _, _, t)) => {
                cni[i].push(ms(t.cni));
                bio[i].push(ms(t.bio));
            }
            Err(e) => status[i] = e.code(),
        }
    }
    let mut text = String::from(
        "epsilon,epsilon_normalized,reps,precompute_median_ms,precompute_p95_ms,\
         cni_median_ms,cni_p95_ms,bio_median_ms,bio_p95_ms,status\n",
    );
    let span = grid.last().copied().unwrap_or(0.0) - grid.first().copied().unwrap_or(0.0);
    for i in 0..grid.len() {
        cni[i].sort_by(f64::total_cmp);
        bio[i].sort_by(f64::total_cmp);
        let norm = if span > 0.0 { (grid[i] - grid[0]) / span } else { 0.0 };
        let row = [
            fmt_num(grid[i]),
            fmt_num(norm),
            reps.to_string(),
            fmt_num(percentile(&pre, 0.5)),
            fmt_num(percentile(&pre, 0.95)),
            fmt_num(percentile(&cni[i], 0.5)),
            fmt_num(percentile(&cni[i], 0.95)),
            fmt_num(percentile(&bio[i], 0.5)),
            fmt_num(percentile(&bio[i], 0.95)),
            status[i].to_string(),
        ];
        text.push_str(&row.join(","));
        text.push('\n');
    }
    write(&out.join("bench.csv"), &text)?;
    print!("{text}");
    Ok(())
}

pub fn run(cli: Cli) -> ExitCode {
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Curves(a) => cmd_curves(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
