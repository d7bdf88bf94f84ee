use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hogwild_core::data::load;
use hogwild_core::harness::{self, parse_override, RunConfig};
use hogwild_core::schedules::{
    classic_schedule, constant_schedule, hogwild_schedule, power_schedule, stepped_schedule, theorem_sgd_schedule,
    AlphaRule, StepSchedule,
};
use hogwild_core::theory::{crossings, log_grid, schedule_race, BoundCurve, HogwildBound, SparsityStats, Theorem2Bound};
use hogwild_core::Error;

#[derive(Parser)]
#[command(name = "hogwild-lab", version, about = "Asynchronous SGD convergence lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config over its seeds and write aggregated CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the `out` key).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// `key=value`, repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Print the effective config and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Sparsity statistics of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long = "D")]
        d: usize,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Bound curve on a grid.
    Bounds {
        #[arg(long, value_enum)]
        family: BoundFamily,
        /// `lo:hi:points` (log-spaced) or a comma list.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        mu: f64,
        #[arg(long = "L")]
        l: f64,
        #[arg(long = "N")]
        noise: f64,
        /// `‖w₀ − w∗‖²` (theorem2).
        #[arg(long, default_value_t = 0.0)]
        dist0: f64,
        #[arg(long, default_value_t = 4.0)]
        alpha: f64,
        #[arg(long = "D", default_value_t = 1)]
        d: usize,
        /// Offset `E` (hogwild); defaults to `4LαD/μ`.
        #[arg(long = "E")]
        e: Option<f64>,
    },
    /// `C(t)` of several schedules on a grid.
    Race {
        /// Comma list of `power:q[:K]`, `classic:eta0:t0`, `constant:eta`,
        /// `stepped:E`, `theorem_sgd:alpha` or `hogwild:alpha:D:tau`.
        #[arg(long)]
        schedules: String,
        #[arg(long)]
        grid: String,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long = "L", default_value_t = 1.0)]
        l: f64,
        /// Also print the grid points where `C − n` changes sign.
        #[arg(long)]
        crossings: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundFamily {
    Theorem2,
    Hogwild,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    AllDiverged(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } => Failure::AllDiverged(e.to_string()),
            Error::Config(_) | Error::InvalidArgument(_) | Error::Schedule(_) | Error::NotStronglyConvex(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Other(other.to_string()),
        }
    }
}

fn config_failure(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let bad = || config_failure(format!("bad grid `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let points: usize = parts[2].parse().map_err(|_| bad())?;
        if !(lo > 0.0 && hi >= lo && points >= 1) {
            return Err(bad());
        }
        return Ok(log_grid(lo, hi, points));
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

fn parse_schedule(spec: &str, mu: f64, l: f64) -> Result<StepSchedule, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |k: usize| -> Result<f64, Failure> {
        parts
            .get(k)
            .ok_or_else(|| config_failure(format!("schedule `{spec}` needs more parameters")))?
            .parse()
            .map_err(|_| config_failure(format!("bad number in schedule `{spec}`")))
    };
    let s = match parts[0] {
        "power" => {
            let q = num(1)?;
            let k = if parts.len() > 2 { num(2)? } else { (2.0 * l).powf(1.0 / q) };
            power_schedule(q, k, l)?
        }
        "classic" => classic_schedule(num(1)?, num(2)?, l)?,
        "constant" => constant_schedule(num(1)?, 1.0 / (2.0 * l))?,
        "stepped" => stepped_schedule(mu, num(1)?)?,
        "theorem_sgd" => theorem_sgd_schedule(mu, l, num(1)?, false)?,
        "hogwild" => {
            let alpha = num(1)?;
            hogwild_schedule(mu, l, num(2)? as usize, num(3)? as u64, alpha, AlphaRule::Constant(alpha), false)?
        }
        other => return Err(config_failure(format!("unknown schedule family `{other}`"))),
    };
    Ok(s)
}

fn cmd_run(
    config: &Path,
    out: Option<PathBuf>,
    seeds: Option<Vec<u64>>,
    overrides: &[String],
    dump_config: bool,
) -> Result<(), Failure> {
    let mut ov = overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seeds) = seeds {
        let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        ov.push(("seeds".into(), format!("[{}]", list.join(","))));
    }
    if let Some(out) = &out {
        ov.push(("out".into(), format!("\"{}\"", out.display())));
    }
    let text = std::fs::read_to_string(config).map_err(|e| config_failure(format!("{}: {e}", config.display())))?;
    let cfg = RunConfig::from_toml_str(&text, &ov)?;
    if dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    let problem = harness::prepare_problem(&cfg)?;
    let dir = PathBuf::from(&cfg.out);
    for (label, point) in cfg.expand_sweep() {
        let output = harness::run_prepared(&point, &problem)?;
        harness::write_run(&dir, &label, &point, &output)?;
        let diverged = output.seeds.iter().filter(|s| s.trace.is_none()).count();
        eprintln!(
            "{label}: {} rows, {} seeds ({diverged} diverged) -> {}",
            output.rows.len(),
            output.seeds.len(),
            dir.join(format!("{label}.csv")).display()
        );
    }
    Ok(())
}

fn cmd_stats(dataset: &Path, d: usize, dim: Option<usize>) -> Result<(), Failure> {
    let data = load(dataset, dim)?;
    let s = SparsityStats::of_dataset(&data, d)?;
    println!("n = {}", data.n());
    println!("dim = {}", data.dim());
    println!("D = {}", s.d);
    println!("delta_bar = {}", s.delta_bar);
    println!("delta_bar_D = {}", s.delta_bar_d);
    println!("collision = {}", s.collision);
    println!("mean_support = {}", s.mean_support);
    println!("writes_per_iter = {}", s.writes_per_iter);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bounds(
    family: BoundFamily,
    grid: &str,
    mu: f64,
    l: f64,
    noise: f64,
    dist0: f64,
    alpha: f64,
    d: usize,
    e: Option<f64>,
) -> Result<(), Failure> {
    if !(mu > 0.0 && l >= mu && noise >= 0.0 && d >= 1) {
        return Err(config_failure("need 0 < mu <= L, N >= 0 and D >= 1"));
    }
    let curve = match family {
        BoundFamily::Theorem2 => BoundCurve::Sgd(Theorem2Bound {
            mu,
            l,
            noise,
            w0_dist_sq: dist0,
        }),
        BoundFamily::Hogwild => BoundCurve::Hogwild(HogwildBound {
            alpha,
            mu,
            noise,
            d: d as f64,
            e: e.unwrap_or(4.0 * l * alpha * d as f64 / mu),
        }),
    };
    let mut s = String::from("t,bound\n");
    for t in parse_grid(grid)? {
        writeln!(s, "{t},{}", curve.eval(t)).expect("write to string");
    }
    print!("{s}");
    Ok(())
}

fn cmd_race(schedules: &str, grid: &str, mu: f64, l: f64, show_crossings: bool) -> Result<(), Failure> {
    let names: Vec<&str> = schedules.split(',').map(str::trim).collect();
    let list = names
        .iter()
        .map(|n| parse_schedule(n, mu, l))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = parse_grid(grid)?;
    let rows = schedule_race(&list, mu, &grid)?;
    let mut s = String::from("t");
    for n in &names {
        write!(s, ",C[{n}]").expect("write to string");
    }
    for n in &names {
        write!(s, ",n[{n}]").expect("write to string");
    }
    s.push_str(",winner\n");
    for r in &rows {
        write!(s, "{}", r.t).expect("write to string");
        for v in r.c.iter().chain(&r.n) {
            write!(s, ",{v}").expect("write to string");
        }
        writeln!(s, ",{}", names[r.winner]).expect("write to string");
    }
    print!("{s}");
    if show_crossings {
        for (n, sched) in names.iter().zip(&list) {
            let c = crossings(sched, mu, &grid)?;
            eprintln!("{n}: C - n changes sign at {c:?}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            overrides,
            dump_config,
        } => cmd_run(&config, out, seeds, &overrides, dump_config),
        Command::Stats { dataset, d, dim } => cmd_stats(&dataset, d, dim),
        Command::Bounds {
            family,
            grid,
            mu,
            l,
            noise,
            dist0,
            alpha,
            d,
            e,
        } => cmd_bounds(family, &grid, mu, l, noise, dist0, alpha, d, e),
        Command::Race {
            schedules,
            grid,
            mu,
            l,
            crossings,
        } => cmd_race(&schedules, &grid, mu, l, crossings),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::AllDiverged(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
