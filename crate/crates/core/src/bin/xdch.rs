use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xdch::config::{preset, ExperimentConfig, ReferenceChoice};
use xdch::diagnostics::{read_series, read_snapshot, verify_series, write_series, write_snapshot, SeriesRow, Thresholds};
use xdch::model::{constant_steady_state, discrete_energy};
use xdch::scheme::{run, Reference, RunOptions};
use xdch::stationary::solve_stationary;
use xdch::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_ABORT: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

/// Finite-volume cross-diffusion Cahn–Hilliard simulator.
#[derive(Parser)]
#[command(name = "xdch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and write series.csv plus snapshot_t<time>.csv files.
    Run(Common),
    /// Solve the Euler–Lagrange system for a critical point at the initial masses.
    Stationary {
        #[command(flatten)]
        common: Common,
        /// Snapshot CSV used as initial guess (default: the initial state).
        #[arg(long)]
        guess: Option<PathBuf>,
    },
    /// Re-check the invariants of a stored run in --out.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print convexity margins, global stability and the decay rate.
    Report(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
}

impl Common {
    fn load(&self) -> xdch::Result<ExperimentConfig> {
        let mut c = match (&self.preset, &self.config) {
            (Some(name), _) => preset(name)?,
            (None, Some(path)) => ExperimentConfig::load(path)?,
            (None, None) => return Err(Error::Config("either --preset or --config is required".into())),
        };
        if let Some(seed) = self.seed {
            c.set_seed(seed);
        }
        if let Some(t) = self.t_end {
            c.t_end = t;
            c.snapshots.retain(|&s| s <= t);
        }
        if let Some(s) = &self.snapshots {
            c.snapshots = s.clone();
        }
        if let Some(out) = &self.out {
            c.output_dir = Some(out.clone());
        }
        Ok(c)
    }
}

fn out_dir(c: &ExperimentConfig) -> xdch::Result<PathBuf> {
    let dir = c.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t}.csv")
}

fn cmd_run(common: &Common) -> xdch::Result<()> {
    let c = common.load()?;
    let dir = out_dir(&c)?;
    std::fs::write(dir.join("config.toml"), c.to_toml()?)?;
    let (mesh, initial, params) = c.setup()?;
    let reference = match c.reference {
        ReferenceChoice::Constant => Reference::Constant(constant_steady_state(&mesh, &params)?),
        ReferenceChoice::Final => Reference::Final,
    };
    let options = RunOptions {
        t_end: c.t_end,
        snapshot_times: c.snapshots.clone(),
        reference,
        thresholds: Thresholds::for_newton_tol(c.solver.newton_tol),
    };
    let traj = run(&initial, &mesh, &params, &c.solver, &options, &mut |_, _| {})?;
    let rows: Vec<SeriesRow> = traj.diagnostics.iter().map(SeriesRow::from).collect();
    write_series(&dir.join("series.csv"), &rows)?;
    for s in &traj.snapshots {
        write_snapshot(&dir.join(snapshot_name(s.time)), &mesh, s)?;
    }
    let last = traj.diagnostics.last().expect("initial record");
    println!("preset = {}", c.name);
    if let Some(seed) = c.seed() {
        println!("seed = {seed}");
    }
    println!("steps = {}", traj.n_steps());
    println!("rejections = {}", traj.rejections);
    println!("time = {}", last.time);
    println!("E_total = {:.16e}", last.energy.e_total);
    println!("min_u = {:.16e}", last.min_u);
    let flagged = traj.diagnostics.iter().filter(|d| !d.is_clean()).count();
    println!("flagged_steps = {flagged}");
    println!("output = {}", dir.display());
    Ok(())
}

fn cmd_stationary(common: &Common, guess: Option<&Path>) -> xdch::Result<()> {
    let c = common.load()?;
    let dir = out_dir(&c)?;
    let (mesh, initial, params) = c.setup()?;
    let seed_state = match guess {
        Some(path) => read_snapshot(path, 0.0)?,
        None => initial,
    };
    let sol = solve_stationary(&mesh, &params, params.masses[0], seed_state.species(0))?;
    write_snapshot(&dir.join("stationary.csv"), &mesh, &sol.species)?;
    let energy = discrete_energy(&mesh, &params, &sol.species)?;
    println!("kind = critical point");
    println!("lambda_0 = {:.16e}", sol.multiplier);
    println!("residual_norm = {:.16e}", sol.residual_norm);
    println!("delta = {:.16e}", sol.delta);
    println!("E_total = {:.16e}", energy.e_total);
    println!("iterations = {}", sol.iterations);
    Ok(())
}

/// Exit status 3 if a stored run violates an invariant.
fn cmd_verify(out: &Path) -> xdch::Result<bool> {
    let thresholds = Thresholds::default();
    let rows = read_series(&out.join("series.csv"))?;
    let mut ok = true;
    for (step, v) in verify_series(&rows, &thresholds) {
        println!("step {step}: {} violated by {:e}", v.invariant, v.magnitude);
        ok = false;
    }
    let mut snaps: Vec<PathBuf> = std::fs::read_dir(out)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("snapshot_t") && n.ends_with(".csv"))
        })
        .collect();
    snaps.sort();
    for p in &snaps {
        let s = read_snapshot(p, 0.0)?;
        let defect = s.volume_filling_defect();
        if defect > thresholds.volume_filling {
            println!("{}: volume filling violated by {defect:e}", p.display());
            ok = false;
        }
        if s.min_value().partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            println!("{}: positivity violated, min {:e}", p.display(), s.min_value());
            ok = false;
        }
    }
    println!("rows = {}", rows.len());
    println!("snapshots = {}", snaps.len());
    println!("status = {}", if ok { "ok" } else { "violated" });
    Ok(ok)
}

fn cmd_report(common: &Common) -> xdch::Result<()> {
    let c = common.load()?;
    println!("preset = {}", c.name);
    println!("{}", c.stability()?);
    Ok(())
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Abort { .. } | Error::Newton(_) => EXIT_ABORT,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Stationary { common, guess } => cmd_stationary(common, guess.as_deref()),
        Command::Report(c) => cmd_report(c),
        Command::Verify { out } => match cmd_verify(out) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(EXIT_VIOLATION),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
