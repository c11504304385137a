use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use eibamp::config::{render, ConfigDoc, RunConfig};
use eibamp::experiments::{
    calibrate, format_row, phase, run_sweep, se_comparison, simulate_trial, Algorithm, CsvSink, ResultRow, SweepSpec,
    TrialOutcome, CSV_HEADER,
};
use eibamp::rng::StreamId;
use eibamp::Error;

#[derive(Parser)]
#[command(name = "eibamp", version, about = "Activity and embedded-bit detection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured point(s) without sweeping.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write per-trial tau^2 trajectories (algorithm,trial_id,iter,tau_sq).
        #[arg(long)]
        trajectories: Option<PathBuf>,
    },
    /// Run the configured sweep(s).
    Sweep(Common),
    /// State-evolution prediction next to empirical AMP residual energy.
    Se {
        #[command(flatten)]
        common: Common,
        /// Algorithm to track; defaults to the first configured one.
        #[arg(long)]
        algorithm: Option<Algorithm>,
    },
    /// Equal-error threshold calibration only.
    Calibrate(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (key = value lines, optional [sections]).
    #[arg(long, short)]
    config: PathBuf,
    /// `key=value` or `section.key=value`; repeatable.
    #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output CSV; stdout when absent. A sidecar `<out>.cfg` records the resolved config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append to an existing CSV instead of replacing it.
    #[arg(long)]
    append: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, short)]
    quiet: bool,
}

enum Failure {
    Lib(Error),
    AllDiverged,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::AllDiverged) => {
            eprintln!("error: every trial diverged");
            ExitCode::from(4)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Dimension(_) => 2,
                Error::Io { .. } | Error::Csv { .. } => 3,
                _ => 1,
            })
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let common = match &cli.command {
        Command::Simulate { common, .. } | Command::Se { common, .. } => common,
        Command::Sweep(c) | Command::Calibrate(c) => c,
    };
    let setups = load_setups(common)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        if n == 0 {
            return Err(Error::Config("--workers must be positive".into()).into());
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate { common, trajectories } => {
            let setups: Vec<RunConfig> = setups.into_iter().map(|s| RunConfig { sweep: None, ..s }).collect();
            let rows = run_rows(common, &setups)?;
            if let Some(path) = trajectories {
                write_trajectories(path, &setups)?;
            }
            check_diverged(&rows)
        }
        Command::Sweep(common) => check_diverged(&run_rows(common, &setups)?),
        Command::Se { common, algorithm } => cmd_se(common, &setups, *algorithm),
        Command::Calibrate(common) => cmd_calibrate(common, &setups),
    })
}

fn load_setups(common: &Common) -> CliResult<Vec<RunConfig>> {
    let mut doc = ConfigDoc::load(&common.config).map_err(|e| match e {
        Error::Io { path, source } => {
            Error::Config(format!("cannot read config {}: {source}", path.display()))
        }
        other => other,
    })?;
    for o in &common.overrides {
        doc.apply_override(o)?;
    }
    Ok(doc.resolve()?)
}

fn write_sidecar(out: &Path, setups: &[RunConfig]) -> CliResult<()> {
    let mut name = out.as_os_str().to_owned();
    name.push(".cfg");
    let path = PathBuf::from(name);
    fs::write(&path, render(setups)).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Writes rows either to a file (flushed per row) or to stdout.
enum RowSink {
    File(CsvSink),
    Stdout,
}

impl RowSink {
    fn open(common: &Common) -> CliResult<Self> {
        Ok(match &common.out {
            Some(path) => RowSink::File(CsvSink::open(path, !common.append)?),
            None => {
                println!("{CSV_HEADER}");
                RowSink::Stdout
            }
        })
    }

    fn write(&mut self, row: &ResultRow) -> eibamp::Result<()> {
        match self {
            RowSink::File(sink) => sink.write(row),
            RowSink::Stdout => {
                let line = format_row(row).map_err(|e| Error::csv(Path::new("<stdout>"), e))?;
                print!("{line}");
                std::io::stdout().flush().map_err(|e| Error::io(Path::new("<stdout>"), e))
            }
        }
    }
}

fn run_rows(common: &Common, setups: &[RunConfig]) -> CliResult<Vec<ResultRow>> {
    if let Some(out) = &common.out {
        write_sidecar(out, setups)?;
    }
    let mut sink = RowSink::open(common)?;
    let mut all = Vec::new();
    for setup in setups {
        let spec = SweepSpec::from_run_config(setup);
        let rows = run_sweep(&spec, |row| {
            if !common.quiet {
                eprintln!("{}", summary(row));
            }
            sink.write(row)
        })?;
        all.extend(rows);
    }
    Ok(all)
}

fn summary(row: &ResultRow) -> String {
    let mut s = String::new();
    if !row.label.is_empty() {
        s.push_str(&format!("[{}] ", row.label));
    }
    s.push_str(row.algorithm.id());
    if row.sweep_param != "none" {
        s.push_str(&format!(" {}={}", row.sweep_param, row.sweep_value));
    }
    s.push_str(&format!(
        ": P_miss {:.4e} ± {:.1e}, P_fa {:.4e} ± {:.1e}",
        row.p_miss, row.p_miss_ci, row.p_fa, row.p_fa_ci
    ));
    if let (Some(e), Some(ci)) = (row.eib_err, row.eib_err_ci) {
        s.push_str(&format!(", EIB err {e:.4e} ± {ci:.1e}"));
    }
    if row.diverged > 0 {
        s.push_str(&format!(" ({} of {} diverged)", row.diverged, row.trials));
    }
    s
}

fn check_diverged(rows: &[ResultRow]) -> CliResult<()> {
    if !rows.is_empty() && rows.iter().all(|r| r.diverged == r.trials) {
        return Err(Failure::AllDiverged);
    }
    Ok(())
}

fn write_trajectories(path: &Path, setups: &[RunConfig]) -> CliResult<()> {
    let mut text = String::from("algorithm,trial_id,iter,tau_sq\n");
    for setup in setups {
        for alg in setup.resolved_algorithms() {
            let runs: Vec<Option<Vec<f64>>> = (0..setup.trials)
                .into_par_iter()
                .map(|t| {
                    let stream = StreamId::new(setup.scenario.rng_seed, phase::EVALUATION, 0, t as u64);
                    Ok(match simulate_trial(&setup.scenario, alg, stream)? {
                        TrialOutcome::Completed(trial) => Some(trial.run.tau_trajectory),
                        TrialOutcome::Diverged { .. } => None,
                    })
                })
                .collect::<eibamp::Result<_>>()?;
            for (t, traj) in runs.iter().enumerate() {
                for (i, tau) in traj.iter().flatten().enumerate() {
                    text.push_str(&format!("{alg},{t},{i},{tau}\n"));
                }
            }
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn emit(common: &Common, setups: &[RunConfig], text: &str) -> CliResult<()> {
    match &common.out {
        Some(path) => {
            write_sidecar(path, setups)?;
            let result = if common.append && path.exists() {
                let body = text.split_once('\n').map_or("", |(_, rest)| rest);
                fs::OpenOptions::new().append(true).open(path).and_then(|mut f| f.write_all(body.as_bytes()))
            } else {
                fs::write(path, text)
            };
            result.map_err(|e| Error::io(path, e))?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_se(common: &Common, setups: &[RunConfig], algorithm: Option<Algorithm>) -> CliResult<()> {
    let multi = setups.len() > 1;
    let mut text = String::from(if multi { "label,iter,tau_sq_se,tau_sq_empirical\n" } else { "iter,tau_sq_se,tau_sq_empirical\n" });
    for setup in setups {
        let alg = algorithm.unwrap_or_else(|| setup.resolved_algorithms()[0]);
        let rows = se_comparison(&setup.scenario, alg, setup.se_samples, setup.se_trials)?;
        for r in &rows {
            if multi {
                text.push_str(&format!("{},", setup.label));
            }
            let emp = r.tau_sq_empirical.map(|v| v.to_string()).unwrap_or_default();
            text.push_str(&format!("{},{},{emp}\n", r.iter, r.tau_sq_se));
            if !common.quiet {
                let ratio = r.tau_sq_empirical.map(|e| format!(" (empirical/SE {:.3})", e / r.tau_sq_se));
                eprintln!("{alg} t={} tau^2 {:.4e}{}", r.iter, r.tau_sq_se, ratio.unwrap_or_default());
            }
        }
    }
    emit(common, setups, &text)
}

fn cmd_calibrate(common: &Common, setups: &[RunConfig]) -> CliResult<()> {
    let mut text = String::from("label,algorithm,sweep_value,threshold_scale,p_miss,p_fa,diverged\n");
    for setup in setups {
        if setup.calib_trials == 0 {
            return Err(Error::Config("calibrate needs calib_trials > 0".into()).into());
        }
        let spec = SweepSpec::from_run_config(setup);
        for &alg in &spec.algorithms {
            for (point, value, cfg) in spec.points() {
                let c = calibrate(&cfg, alg, point, setup.calib_trials)?;
                if !common.quiet {
                    eprintln!(
                        "{alg} value={value}: scale {:.4}, P_miss {:.4e}, P_fa {:.4e}",
                        c.threshold_scale, c.p_miss, c.p_fa
                    );
                }
                text.push_str(&format!(
                    "{},{alg},{value},{},{},{},{}\n",
                    setup.label, c.threshold_scale, c.p_miss, c.p_fa, c.diverged
                ));
            }
        }
    }
    emit(common, setups, &text)
}
