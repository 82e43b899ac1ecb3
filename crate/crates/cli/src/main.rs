//! `sorteq`: solve, simulate, measure, calibrate and decompose from the
//! command line.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sorteq::calibrate::bootstrap_calibrate;
use sorteq::counterfactual::{bootstrap_decompose, decompose};
use sorteq::empirical::{measure_moments, MeasureOptions, MeasuredMoments};
use sorteq::moments::{akm_report, targeted_moments, wage_report, welfare_report};
use sorteq::panel::Panel;
use sorteq::sim::{simulate_panel, SimConfig, DEFAULT_MIN_FIRM_SIZE};
use sorteq::{Economy, ModelParams};

const EXIT_CODES: &str = "Exit codes:
  0   success
  2   domain error (invalid parameters, infeasible moments, failed solve)
  64  usage error (unknown or missing flag)
  65  data error (malformed or empty input CSV/JSON)
  66  input file missing or unreadable
  73  output file cannot be created";

#[derive(Parser)]
#[command(name = "sorteq", version, about = "Sorting equilibrium pipeline", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the equilibrium and print every analytic report as JSON.
    Solve(Flags),
    /// Simulate a panel into a directory (workers.csv, firms.csv, run.json).
    Simulate(Flags),
    /// Measure the five calibration moments of a panel.
    Measure(Flags),
    /// Calibrate a panel with bootstrap percentile intervals.
    Calibrate(Flags),
    /// Attribute outcome changes between two parameter vectors.
    Counterfact(Flags),
}

/// Every flag is optional at parse time so values can come from `--json`.
#[derive(Args, Debug, Default)]
struct Flags {
    #[arg(long, allow_hyphen_values = true)]
    sigma_x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma_theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c_a: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c_l: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    ln_a: Option<f64>,
    #[arg(long)]
    workers: Option<u64>,
    #[arg(long)]
    firms: Option<u64>,
    #[arg(long)]
    min_firm_size: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to SORTEQ_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output path (a directory for `simulate`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV table next to the JSON output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Worker CSV of the panel to read.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Firm CSV matching `--panel`.
    #[arg(long)]
    firms_file: Option<PathBuf>,
    /// Year label attached to the panel.
    #[arg(long, allow_hyphen_values = true)]
    year: Option<i64>,
    /// Second panel for `calibrate`; adds per-replicate attribution tables.
    #[arg(long)]
    end_panel: Option<PathBuf>,
    #[arg(long)]
    end_firms_file: Option<PathBuf>,
    /// Parameter JSON (or a calibrate output) for the start of `counterfact`.
    #[arg(long)]
    start: Option<PathBuf>,
    #[arg(long)]
    end: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long)]
    json: Option<PathBuf>,
}

/// The fully resolved configuration, recorded in every output.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    sigma_x: Option<f64>,
    sigma_theta: Option<f64>,
    c_a: Option<f64>,
    c_l: Option<f64>,
    #[serde(alias = "ln_A")]
    ln_a: Option<f64>,
    workers: Option<u64>,
    firms: Option<u64>,
    min_firm_size: Option<u64>,
    replicates: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
    panel: Option<PathBuf>,
    firms_file: Option<PathBuf>,
    year: Option<i64>,
    end_panel: Option<PathBuf>,
    end_firms_file: Option<PathBuf>,
    start: Option<PathBuf>,
    end: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Model(#[from] sorteq::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        use sorteq::Error as E;
        match self {
            CliError::Usage(_) => 64,
            CliError::Data(_) => 65,
            CliError::Input(_) => 66,
            CliError::Output(_) => 73,
            CliError::Model(E::Schema { .. } | E::EmptyPanel(_) | E::Json(_)) => 65,
            CliError::Model(E::Io(_)) => 66,
            CliError::Model(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

macro_rules! merge {
    ($cfg:ident, $flags:ident, $over:ident; $($field:ident),*) => {
        $(
            if let Some(v) = $flags.$field.clone() {
                if $cfg.$field.is_some() {
                    $over.push(stringify!($field));
                }
                $cfg.$field = Some(v);
            }
        )*
    };
}

fn resolve(flags: &Flags) -> Result<(RunConfig, Vec<&'static str>)> {
    let mut cfg = match &flags.json {
        Some(path) => {
            let file = open(path)?;
            serde_json::from_reader(BufReader::new(file))
                .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    let mut overrides = Vec::new();
    merge!(cfg, flags, overrides;
        sigma_x, sigma_theta, c_a, c_l, ln_a, workers, firms, min_firm_size, replicates, seed,
        threads, out, csv, panel, firms_file, year, end_panel, end_firms_file, start, end);
    Ok((cfg, overrides))
}

fn required<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", path.display())))
}

fn write_failed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output(format!("cannot write {}: {e}", path.display()))
}

fn params_from(cfg: &RunConfig) -> Result<ModelParams> {
    Ok(ModelParams::new(
        required(&cfg.sigma_x, "sigma-x")?,
        required(&cfg.sigma_theta, "sigma-theta")?,
        required(&cfg.c_a, "c-a")?,
        required(&cfg.c_l, "c-l")?,
        cfg.ln_a.unwrap_or(0.0),
    )?)
}

fn read_panel(workers: &Path, firms: Option<&Path>, year: i64) -> Result<Panel> {
    let w = BufReader::new(open(workers)?);
    let f = firms.map(open).transpose()?.map(BufReader::new);
    Panel::read_csv(year, w, f).map_err(|e| match e {
        sorteq::Error::Io(io) => CliError::Data(format!("{}: {io}", workers.display())),
        sorteq::Error::Layout(m) => CliError::Data(format!("{}: {m}", workers.display())),
        other => other.into(),
    })
}

/// Reads a parameter vector from a bare parameter JSON or from a
/// `calibrate` output.
fn read_params(path: &Path) -> Result<ModelParams> {
    let v: Value = serde_json::from_reader(BufReader::new(open(path)?))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let inner = v.pointer("/result/params").cloned().unwrap_or(v);
    let p: ModelParams =
        serde_json::from_value(inner).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    p.validate()?;
    Ok(p)
}

fn document(command: &str, cfg: &RunConfig, overrides: &[&str], result: Value) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "overrides": overrides,
        "result": result,
    })
}

fn emit(out: Option<&Path>, doc: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(doc).expect("serialisable") + "\n";
    match out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| write_failed(path, e))
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Output(format!("stdout: {e}"))),
    }
}

fn write_table<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> sorteq::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|e| write_failed(path, e))?;
    w.flush().map_err(|e| write_failed(path, e))
}

fn cmd_solve(cfg: &RunConfig, overrides: &[&str]) -> Result<()> {
    let econ = Economy::solve(params_from(cfg)?)?;
    let result = json!({
        "params": econ.params,
        "equilibrium": econ.eq,
        "welfare": welfare_report(&econ),
        "wage": wage_report(&econ),
        "moments": targeted_moments(&econ),
        "akm": akm_report(&econ),
    });
    emit(cfg.out.as_deref(), &document("solve", cfg, overrides, result))
}

fn cmd_simulate(cfg: &RunConfig, overrides: &[&str]) -> Result<()> {
    let params = params_from(cfg)?;
    let dir = required(&cfg.out, "out")?;
    let sim = SimConfig {
        n_workers: required(&cfg.workers, "workers")?,
        n_firms: required(&cfg.firms, "firms")?,
        min_firm_size: cfg.min_firm_size.unwrap_or(DEFAULT_MIN_FIRM_SIZE),
        seed: cfg.seed.unwrap_or(0),
        year_label: cfg.year.unwrap_or(0),
    };
    let econ = Economy::solve(params)?;
    let mut panel = simulate_panel(&econ, &sim)?;
    panel.params_used = Some(params);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))?;
    let workers = dir.join("workers.csv");
    let firms = dir.join("firms.csv");
    write_table(&workers, |w| panel.write_workers_csv(w))?;
    write_table(&firms, |w| panel.write_firms_csv(w))?;
    let result = json!({
        "params": params,
        "sigma": econ.eq.sigma,
        "seed": sim.seed,
        "n_workers": panel.workers.len(),
        "n_firms": panel.firms.len(),
        "workers_file": "workers.csv",
        "firms_file": "firms.csv",
    });
    emit(Some(&dir.join("run.json")), &document("simulate", cfg, overrides, result))
}

fn measure_options(cfg: &RunConfig) -> MeasureOptions {
    MeasureOptions {
        min_firm_size: cfg.min_firm_size.unwrap_or(DEFAULT_MIN_FIRM_SIZE),
        ..Default::default()
    }
}

fn cmd_measure(cfg: &RunConfig, overrides: &[&str]) -> Result<()> {
    let panel = read_panel(&required(&cfg.panel, "panel")?, cfg.firms_file.as_deref(), cfg.year.unwrap_or(0))?;
    let m = measure_moments(&panel, &measure_options(cfg))?;
    if let Some(path) = &cfg.csv {
        write_table(path, |w| MeasuredMoments::write_csv(&[m], w))?;
    }
    emit(cfg.out.as_deref(), &document("measure", cfg, overrides, json!(m)))
}

fn cmd_calibrate(cfg: &RunConfig, overrides: &[&str]) -> Result<()> {
    let year = cfg.year.unwrap_or(0);
    let panel = read_panel(&required(&cfg.panel, "panel")?, cfg.firms_file.as_deref(), year)?;
    let n = cfg.replicates.unwrap_or(200);
    let seed = cfg.seed.unwrap_or(0);
    let opts = measure_options(cfg);
    let start = bootstrap_calibrate(&panel, n, seed, &opts)?;
    if let Some(path) = &cfg.csv {
        write_table(path, |w| start.write_replicates_csv(w))?;
    }
    let mut result = json!({ "params": start.params, "calibration": start });
    if let Some(end_path) = &cfg.end_panel {
        let end_panel = read_panel(end_path, cfg.end_firms_file.as_deref(), year)?;
        let end = bootstrap_calibrate(&end_panel, n, seed, &opts)?;
        let table = bootstrap_decompose(&start.params, &end.params, &start.per_replicate, &end.per_replicate)?;
        if let Some(out) = &cfg.out {
            let path = out.with_extension("counterfactual.csv");
            write_table(&path, |w| table.write_csv(w))?;
        }
        result["end_calibration"] = json!(end);
        result["counterfactual"] = json!(table);
    }
    emit(cfg.out.as_deref(), &document("calibrate", cfg, overrides, result))
}

fn cmd_counterfact(cfg: &RunConfig, overrides: &[&str]) -> Result<()> {
    let start = read_params(&required(&cfg.start, "start")?)?;
    let end = read_params(&required(&cfg.end, "end")?)?;
    let table = decompose(&start, &end)?;
    if let Some(path) = &cfg.csv {
        write_table(path, |w| table.write_csv(w))?;
    }
    emit(cfg.out.as_deref(), &document("counterfact", cfg, overrides, json!(table)))
}

fn configure_threads(cfg: &RunConfig) -> Result<()> {
    let threads = match cfg.threads {
        Some(t) => Some(t),
        None => match std::env::var("SORTEQ_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("SORTEQ_THREADS={v} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Timing goes to `<out>.log` (or `<dir>/run.log`) so outputs stay
/// byte-identical across runs.
fn write_sidecar(name: &str, cfg: &RunConfig, started: f64, status: &str) {
    let Some(out) = &cfg.out else { return };
    let path = if name == "simulate" {
        out.join("run.log")
    } else {
        let mut p = out.clone().into_os_string();
        p.push(".log");
        PathBuf::from(p)
    };
    let finished = unix_seconds();
    let mut fields = BTreeMap::new();
    fields.insert("command", json!(name));
    fields.insert("started_unix", json!(started));
    fields.insert("finished_unix", json!(finished));
    fields.insert("elapsed_seconds", json!(finished - started));
    fields.insert("threads", json!(rayon::current_num_threads()));
    fields.insert("status", json!(status));
    if let Ok(mut f) = File::create(&path) {
        let _ = writeln!(f, "{}", json!(fields));
    }
}

fn run(cli: Cli) -> Result<()> {
    let (name, flags) = match &cli.command {
        Command::Solve(f) => ("solve", f),
        Command::Simulate(f) => ("simulate", f),
        Command::Measure(f) => ("measure", f),
        Command::Calibrate(f) => ("calibrate", f),
        Command::Counterfact(f) => ("counterfact", f),
    };
    let (cfg, overrides) = resolve(flags)?;
    configure_threads(&cfg)?;
    let started = unix_seconds();
    let outcome = match cli.command {
        Command::Solve(_) => cmd_solve(&cfg, &overrides),
        Command::Simulate(_) => cmd_simulate(&cfg, &overrides),
        Command::Measure(_) => cmd_measure(&cfg, &overrides),
        Command::Calibrate(_) => cmd_calibrate(&cfg, &overrides),
        Command::Counterfact(_) => cmd_counterfact(&cfg, &overrides),
    };
    write_sidecar(name, &cfg, started, if outcome.is_ok() { "ok" } else { "error" });
    outcome
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sorteq: {e}");
            ExitCode::from(e.code())
        }
    }
}
