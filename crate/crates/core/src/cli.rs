//! Command-line front end: configuration loading, subcommands and run manifests.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 runtime
//! divergence or failure.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::forecast::{self, ForecastConfig};
use crate::frc::{self, AnalyticSource, ForecastSource, FrcOutcome};
use crate::network::OperatorNetwork;
use crate::oscillator::{self, Forcing, StateVec, SystemParams, Trajectory};
use crate::pipeline::Pipeline;
use crate::plot::{line_plot, Series, PALETTE};
use crate::stability::{self, EigenRecord, GridSpec, RootLocus};
use crate::sweep::{self, SweepKind, SweepSpec};
use crate::trainer::{self, CurriculumTrajectory, EpochRecord};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "OSCNET_OUT";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;
const DATASET_INDEX: &str = "dataset.toml";

#[derive(Debug, Parser)]
#[command(name = "oscnet", version, about = "Learned oscillator dynamics: train, forecast and analyze")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration, merged over the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base parameter set: ls1, ls1a, ls1b or ls1-base.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Global seed for every random stream (default 0)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: $OSCNET_OUT/<preset>, or runs/<preset>).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Log progress to stderr
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the training curriculum.
    Generate,
    /// Train a network on the generated curriculum.
    Train,
    /// Forecast one time history and compare it with the exact response.
    Forecast {
        /// Model file (default: <out>/model.txt)
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Frequency response curve of a model against the exact curve.
    Frc {
        /// Model file (default: <out>/model.txt)
        #[arg(long)]
        model: Option<PathBuf>,
        /// Use the closed-form oracle in place of a network.
        #[arg(long)]
        oracle: bool,
    },
    /// Equilibrium eigenvalues, divergence and sampling limits.
    Stability {
        /// Model file (default: <out>/model.txt)
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Sensitivity sweep (bandwidth, band_center, drive_amplitude, trajectory_count, frequency_ratio).
    Sweep {
        /// Sweep kind; may also be set as `kind` in the [sweep] table
        kind: Option<String>,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } | Error::SingularJacobian { .. } | Error::NonFinite(_) => 3,
        _ => 2,
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

const SECTIONS: [&str; 6] = ["system", "network", "curriculum", "training", "frc", "time_response"];

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub pipeline: Pipeline,
    /// Raw `[sweep]` table, resolved against a kind by [`RunConfig::sweep_spec`].
    pub sweep: Option<toml::Table>,
    /// SHA-256 over the config text and command-line overrides.
    pub hash: String,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    /// Resolve `text` over its preset. Command-line `preset`/`seed` win over the file.
    pub fn from_toml(text: &str, preset: Option<&str>, seed: Option<u64>) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(config_err)?;
        let file_preset = match table.remove("preset") {
            Some(toml::Value::String(s)) => Some(s),
            Some(_) => return Err(Error::Config("`preset` must be a string".into())),
            None => None,
        };
        let file_seed = match table.remove("seed") {
            Some(toml::Value::Integer(i)) if i >= 0 => Some(i as u64),
            Some(_) => return Err(Error::Config("`seed` must be a non-negative integer".into())),
            None => None,
        };
        let output_dir = match table.remove("output_dir") {
            Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
            Some(_) => return Err(Error::Config("`output_dir` must be a string".into())),
            None => None,
        };
        let sweep = match table.remove("sweep") {
            Some(toml::Value::Table(t)) => Some(t),
            Some(_) => return Err(Error::Config("`sweep` must be a table".into())),
            None => None,
        };
        if let Some(k) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        let preset = preset.map(str::to_owned).or(file_preset).unwrap_or_else(|| "ls1".into());
        let seed = seed.or(file_seed).unwrap_or(0);
        if seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed must be at most {}", i64::MAX)));
        }
        let mut base = toml::Value::try_from(Pipeline::preset(&preset)?).map_err(config_err)?;
        merge(&mut base, toml::Value::Table(table));
        let mut pipeline: Pipeline = base.try_into().map_err(config_err)?;
        pipeline.reseed(seed);
        pipeline.validate()?;

        let mut h = Sha256::new();
        h.update(text.as_bytes());
        h.update(format!("\n--preset={preset}\n--seed={seed}\n").as_bytes());
        let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(RunConfig { preset, seed, output_dir, pipeline, sweep, hash })
    }

    pub fn load(path: Option<&Path>, preset: Option<&str>, seed: Option<u64>) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, preset, seed)
    }

    /// The effective configuration as TOML.
    pub fn resolved_toml(&self) -> Result<String> {
        let mut t = toml::Table::new();
        t.insert("preset".into(), self.preset.clone().into());
        t.insert("seed".into(), (self.seed as i64).into());
        let p = toml::Value::try_from(&self.pipeline).map_err(config_err)?;
        if let toml::Value::Table(mut p) = p {
            // derived from `seed` on load
            p.remove("init_seed");
            t.extend(p);
        }
        if let Some(s) = &self.sweep {
            t.insert("sweep".into(), toml::Value::Table(s.clone()));
        }
        toml::to_string(&t).map_err(config_err)
    }

    /// Sweep spec: `kind` (or the table's `kind`) with the table merged over its defaults.
    pub fn sweep_spec(&self, kind: Option<&str>) -> Result<SweepSpec> {
        let table = self.sweep.clone().unwrap_or_default();
        let kind = match (kind, table.get("kind")) {
            (Some(k), _) => SweepKind::parse(k)?,
            (None, Some(toml::Value::String(k))) => SweepKind::parse(k)?,
            _ => return Err(Error::Config("sweep kind not given".into())),
        };
        let mut defaults = SweepSpec::default_for(kind);
        defaults.seed = self.seed;
        let mut base = toml::Value::try_from(defaults).map_err(config_err)?;
        let mut table = table;
        table.remove("kind");
        merge(&mut base, toml::Value::Table(table));
        let spec: SweepSpec = base.try_into().map_err(config_err)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Wall time of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTime {
    pub name: String,
    pub seconds: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub phases: Vec<PhaseTime>,
    /// Files written by the command, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    /// Percentages of the total; an all-zero run splits evenly.
    pub fn with_phases(command: &str, config: &RunConfig, phases: &[(&str, f64)], artifacts: Vec<String>) -> Self {
        let total: f64 = phases.iter().map(|p| p.1).sum();
        let n = phases.len().max(1) as f64;
        let phases = phases
            .iter()
            .map(|&(name, seconds)| PhaseTime {
                name: name.into(),
                seconds,
                percent: if total > 0.0 { 100.0 * seconds / total } else { 100.0 / n },
            })
            .collect();
        RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            command: command.into(),
            config_hash: config.hash.clone(),
            seed: config.seed,
            phases,
            artifacts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_FORMAT_VERSION {
            return Err(Error::Version { found: self.format_version, expected: MANIFEST_FORMAT_VERSION });
        }
        if !self.phases.is_empty() {
            let sum: f64 = self.phases.iter().map(|p| p.percent).sum();
            if (sum - 100.0).abs() > 0.1 {
                return Err(Error::Config(format!("phase percentages sum to {sum}")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: RunManifest = toml::from_str(text).map_err(config_err)?;
        m.validate()?;
        Ok(m)
    }
}

/// Output directory plus the list of files written into it.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Outputs { dir, written: Vec::new() })
    }

    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(p)
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, contents).map_err(|e| Error::io(&p, e))?;
        self.record(rel);
        Ok(())
    }

    fn record(&mut self, rel: &str) {
        self.written.push(rel.to_owned());
    }

    fn manifest(self, command: &str, config: &RunConfig, phases: &[(&str, f64)]) -> Result<()> {
        let rel = format!("{command}.manifest.toml");
        let m = RunManifest::with_phases(command, config, phases, self.written);
        let p = self.dir.join(&rel);
        fs::write(&p, m.to_toml()?).map_err(|e| Error::io(&p, e))
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    config: RunConfig,
    out: Outputs,
}

impl Ctx<'_> {
    fn log(&self, msg: impl AsRef<str>) {
        if self.cli.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn model_path(&self, flag: &Option<PathBuf>) -> PathBuf {
        flag.clone().unwrap_or_else(|| self.out.dir.join("model.txt"))
    }

    fn load_model(&self, flag: &Option<PathBuf>) -> Result<OperatorNetwork> {
        let net = OperatorNetwork::load(self.model_path(flag))?;
        let want = self.config.pipeline.network.variant;
        if net.variant != want {
            return Err(Error::Shape(format!(
                "model is {} but the configuration expects {}",
                net.variant.tag(),
                want.tag()
            )));
        }
        Ok(net)
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    if cli.workers == Some(0) {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    let config = RunConfig::load(cli.config.as_deref(), cli.preset.as_deref(), cli.seed)?;
    let dir = match (&cli.out, &config.output_dir) {
        (Some(d), _) | (None, Some(d)) => d.clone(),
        (None, None) => {
            let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| "runs".into());
            root.join(&config.preset)
        }
    };
    let mut ctx = Ctx { cli, config, out: Outputs::new(dir)? };
    let resolved = ctx.config.resolved_toml()?;
    match &cli.command {
        Command::Generate => cmd_generate(ctx, resolved),
        Command::Train => cmd_train(ctx),
        Command::Forecast { model } => cmd_forecast(ctx, model),
        Command::Frc { model, oracle } => cmd_frc(ctx, model, *oracle),
        Command::Stability { model } => cmd_stability(ctx, model),
        Command::Sweep { kind } => {
            ctx.out.dir = ctx.out.dir.join("sweep");
            cmd_sweep(ctx, kind.as_deref())
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetIndex {
    system: SystemParams,
    trajectory: Vec<DatasetEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetEntry {
    file: String,
    ic: StateVec,
    ic_magnitude: f64,
    forcing: Forcing,
}

fn cmd_generate(mut ctx: Ctx, resolved: String) -> Result<i32> {
    let t0 = Instant::now();
    let p = &ctx.config.pipeline;
    let data = p.dataset()?;
    let mut index = DatasetIndex { system: p.system, trajectory: Vec::new() };
    for (i, d) in data.iter().enumerate() {
        let rel = format!("dataset/traj_{i:02}.csv");
        d.trajectory.save_csv(ctx.out.path(&rel)?)?;
        ctx.out.record(&rel);
        index.trajectory.push(DatasetEntry {
            file: format!("traj_{i:02}.csv"),
            ic: d.ic,
            ic_magnitude: d.ic_magnitude,
            forcing: d.forcing.clone(),
        });
    }
    ctx.out.write(&format!("dataset/{DATASET_INDEX}"), &toml::to_string(&index).map_err(config_err)?)?;
    ctx.out.write("config.resolved.toml", &resolved)?;
    ctx.log(format!("wrote {} trajectories to {}", data.len(), ctx.out.dir.join("dataset").display()));
    let secs = t0.elapsed().as_secs_f64();
    ctx.out.manifest("generate", &ctx.config, &[("dataset", secs)])?;
    Ok(0)
}

fn load_dataset(dir: &Path, params: &SystemParams) -> Result<Vec<CurriculumTrajectory>> {
    let path = dir.join(DATASET_INDEX);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: DatasetIndex = toml::from_str(&text).map_err(|e| Error::parse("dataset index", e.to_string()))?;
    if index.system != *params {
        return Err(Error::Config("dataset was generated for a different system; rerun `generate`".into()));
    }
    index
        .trajectory
        .into_iter()
        .map(|e| {
            let p = dir.join(&e.file);
            let f = fs::File::open(&p).map_err(|err| Error::io(&p, err))?;
            Ok(CurriculumTrajectory {
                forcing: e.forcing,
                ic: e.ic,
                ic_magnitude: e.ic_magnitude,
                trajectory: Trajectory::read_csv(BufReader::new(f))?,
            })
        })
        .collect()
}

fn cmd_train(mut ctx: Ctx) -> Result<i32> {
    let t0 = Instant::now();
    let p = ctx.config.pipeline.clone();
    let data = load_dataset(&ctx.out.dir.join("dataset"), &p.system)?;
    let samples = p.samples(&data)?;
    let net0 = p.initial_network()?;
    let t_data = t0.elapsed().as_secs_f64();
    ctx.log(format!("{} training samples", samples.len()));

    let t1 = Instant::now();
    let csv_path = ctx.out.path("epochs.csv")?;
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut csv = std::io::BufWriter::new(file);
    writeln!(csv, "{}", EpochRecord::CSV_HEADER).map_err(|e| Error::io(&csv_path, e))?;
    let mut io_err = None;
    let verbose = ctx.cli.verbose;
    let result = trainer::train_with_observer(&net0, &samples, &p.training, |r| {
        if verbose {
            eprintln!("epoch {:4}  loss {:.4e}  lr {:.2e}  eig {:+.5} {:+.5}i", r.epoch, r.loss, r.lr, r.eig_re, r.eig_im);
        }
        if let Err(e) = writeln!(csv, "{}", r.csv_row()).and_then(|_| csv.flush()) {
            io_err.get_or_insert(e);
        }
    });
    drop(csv);
    ctx.out.record("epochs.csv");
    if let Some(e) = io_err {
        return Err(Error::io(&csv_path, e));
    }
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let secs = t1.elapsed().as_secs_f64();
            ctx.out.manifest("train", &ctx.config, &[("dataset", t_data), ("training", secs)])?;
            return Err(e);
        }
    };
    outcome.net.save(ctx.out.path("model.txt")?)?;
    ctx.out.record("model.txt");
    let records: Vec<EigenRecord> = std::iter::once(&outcome.initial)
        .chain(&outcome.records)
        .map(|r| EigenRecord { epoch: r.epoch, re: r.eig_re, im: r.eig_im })
        .collect();
    let locus = RootLocus::new(records, Some(p.system))?;
    ctx.out.write("root_locus.csv", &locus.to_csv())?;
    ctx.out.write("root_locus.svg", &locus.to_svg())?;
    let last = outcome.records.last().unwrap_or(&outcome.initial);
    println!(
        "final loss {:.6e}; equilibrium eigenvalues {:.6} +/- {:.6}i",
        outcome.final_loss(),
        last.eig_re,
        last.eig_im.abs()
    );
    let secs = t1.elapsed().as_secs_f64();
    ctx.out.manifest("train", &ctx.config, &[("dataset", t_data), ("training", secs)])?;
    Ok(0)
}

fn trajectory_svg(title: &str, pred: &Trajectory, truth: &Trajectory) -> String {
    let pts = |t: &Trajectory| t.times().into_iter().zip(t.q.iter().copied()).collect::<Vec<_>>();
    line_plot(
        title,
        "t",
        "q",
        &[Series::line("exact", pts(truth), PALETTE[0]), Series::line("network", pts(pred), PALETTE[1]).dashed()],
    )
}

fn cmd_forecast(mut ctx: Ctx, model: &Option<PathBuf>) -> Result<i32> {
    let net = ctx.load_model(model)?;
    let t0 = Instant::now();
    let p = &ctx.config.pipeline;
    let tr = &p.time_response;
    let forcing = p.frc.excitation.forcing(p.frc.drive_amplitude, tr.omega);
    let dt = p.frc.dt;
    let n = (tr.horizon / dt).round() as usize;
    let ic = p.time_response_ic();
    let result = forecast::forecast(&net, ic, &ForecastConfig::new(dt, n, forcing.clone()))?;
    let truth = oscillator::analytic_trajectory(&p.system, &forcing, ic, dt, n)?;
    let secs = t0.elapsed().as_secs_f64();
    if let Some((k, msg)) = &result.failure {
        return Err(Error::NonFinite(format!("forecast failed at step {k}: {msg}")));
    }
    let report = frc::time_metrics(&result.trajectory, &truth, p.frc.tail_fraction)?;
    let mut buf = Vec::new();
    result.trajectory.write_csv(&mut buf).map_err(|e| Error::io("forecast.csv", e))?;
    ctx.out.write("forecast/forecast.csv", &String::from_utf8_lossy(&buf))?;
    buf.clear();
    truth.write_csv(&mut buf).map_err(|e| Error::io("exact.csv", e))?;
    ctx.out.write("forecast/exact.csv", &String::from_utf8_lossy(&buf))?;
    buf.clear();
    result.write_sidecar(&mut buf).map_err(|e| Error::io("newton.csv", e))?;
    ctx.out.write("forecast/newton.csv", &String::from_utf8_lossy(&buf))?;
    ctx.out.write("forecast/report.txt", &report.to_kv())?;
    ctx.out.write("forecast/forecast.svg", &trajectory_svg(&format!("omega = {}", tr.omega), &result.trajectory, &truth))?;
    print!("{}", report.to_kv());
    ctx.out.manifest("forecast", &ctx.config, &[("forecasting", secs)])?;
    Ok(0)
}

fn frc_report(outcome: &FrcOutcome, report: &frc::FrcErrorReport) -> String {
    let mut s = report.to_kv();
    s.push_str(&format!("transient_warnings = {}\nfailed_points = {}\n", outcome.warnings.len(), outcome.failures.len()));
    for (i, msg) in &outcome.failures {
        s.push_str(&format!("# point {i}: {msg}\n"));
    }
    s
}

fn cmd_frc(mut ctx: Ctx, model: &Option<PathBuf>, oracle: bool) -> Result<i32> {
    let p = ctx.config.pipeline.clone();
    let workers = ctx.cli.workers;
    let net = if oracle { None } else { Some(ctx.load_model(model)?) };
    let t0 = Instant::now();
    let predicted = match &net {
        Some(n) => frc::compute_frc(&ForecastSource::new(n), &p.frc, workers)?,
        None => frc::compute_frc(&AnalyticSource(p.system), &p.frc, workers)?,
    };
    let exact = frc::exact_frc(&p.system, &p.frc)?;
    let secs = t0.elapsed().as_secs_f64();
    let report = frc::frc_metrics(&predicted.curve, &exact.curve)?;
    let label = if oracle { "oracle" } else { "network" };
    ctx.out.write("frc/frc.csv", &predicted.curve.to_csv())?;
    ctx.out.write("frc/frc_exact.csv", &exact.curve.to_csv())?;
    ctx.out.write("frc/report.txt", &frc_report(&predicted, &report))?;
    ctx.out.write(
        "frc/frc.svg",
        &frc::frc_svg("frequency response", "amplitude", &[("exact", &exact.curve), (label, &predicted.curve)]),
    )?;
    if let (Some(a), Some(b)) = (&predicted.absolute, &exact.absolute) {
        ctx.out.write("frc/frc_absolute.csv", &a.to_csv())?;
        ctx.out.write("frc/frc_absolute_exact.csv", &b.to_csv())?;
        ctx.out.write("frc/frc_absolute.svg", &frc::frc_svg("absolute transmissibility", "|X/Y|", &[("exact", b), (label, a)]))?;
    }
    if !predicted.failures.is_empty() {
        eprintln!("warning: {} FRC points failed (see frc/report.txt)", predicted.failures.len());
    }
    println!("accuracy = {:.4}%  (peak error {:.4}%)", report.accuracy_pct(), report.peak_error_pct);
    ctx.out.manifest("frc", &ctx.config, &[("frc", secs)])?;
    Ok(0)
}

fn cmd_stability(mut ctx: Ctx, model: &Option<PathBuf>) -> Result<i32> {
    let net = ctx.load_model(model)?;
    let t0 = Instant::now();
    let p = &ctx.config.pipeline;
    let eq = stability::equilibrium_eigenvalues(&net);
    let exact = stability::true_eigenvalues(&p.system);
    let div = stability::divergence_check(&net, &GridSpec::square(1.0, 41), stability::DEFAULT_DIVERGENCE_TOL);
    let train_ny = stability::nyquist_limits(p.system.omega_n, p.curriculum.band_hi, p.curriculum.dt)?;
    let frc_ny = stability::nyquist_limits(p.system.omega_n, p.frc.band.1, p.frc.dt)?;
    let [(r0, i0), (r1, i1)] = eq.eigenvalues.as_pairs();
    let [(e0, j0), (e1, j1)] = exact.as_pairs();
    let j = eq.jacobian.0;
    let mut s = String::new();
    s.push_str(&format!("verdict = \"{}\"\n", eq.stability));
    s.push_str(&format!("eigenvalues = [[{r0:.9}, {i0:.9}], [{r1:.9}, {i1:.9}]]\n"));
    s.push_str(&format!("exact_eigenvalues = [[{e0:.9}, {j0:.9}], [{e1:.9}, {j1:.9}]]\n"));
    s.push_str(&format!("jacobian = [[{:.9}, {:.9}], [{:.9}, {:.9}]]\n", j[0][0], j[0][1], j[1][0], j[1][1]));
    s.push_str(&format!("nonautonomous = {}\n", eq.nonautonomous));
    s.push_str(&format!(
        "divergence_passed = {}\ndivergence_max_trace = {:.6e}\ndivergence_mean_trace = {:.6e}\n",
        div.passed, div.max_trace, div.mean_trace
    ));
    for (name, ny) in [("training", train_ny), ("frc", frc_ny)] {
        s.push_str(&format!(
            "\n[{name}_sampling]\nnyquist_rate = {:.6}\ndt_max = {:.6}\nsampling_ratio = {:.6}\nomega_critical = {:.6}\noversampling = {:.6}\n",
            ny.nyquist_rate, ny.dt_max, ny.sampling_ratio, ny.omega_critical, ny.oversampling
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    ctx.out.write("stability/report.toml", &s)?;
    println!("verdict: {}", eq.stability);
    println!("eigenvalues: {r0:.6} {i0:+.6}i, {r1:.6} {i1:+.6}i (exact {e0:.6} {j0:+.6}i)");
    println!("divergence check: {} (max trace {:.3e})", if div.passed { "pass" } else { "fail" }, div.max_trace);
    println!("critical frequency: {:.4} (forecast step {})", frc_ny.omega_critical, p.frc.dt);
    ctx.out.manifest("stability", &ctx.config, &[("analysis", secs)])?;
    Ok(0)
}

fn cmd_sweep(mut ctx: Ctx, kind: Option<&str>) -> Result<i32> {
    let spec = ctx.config.sweep_spec(kind)?;
    let t0 = Instant::now();
    ctx.log(format!("{} sweep: {} points", spec.kind.tag(), spec.points().len()));
    let result = sweep::run_sweep(&spec, &ctx.config.pipeline, ctx.cli.workers)?;
    let secs = t0.elapsed().as_secs_f64();
    let tag = spec.kind.tag();
    ctx.out.write(&format!("{tag}.csv"), &result.to_csv())?;
    ctx.out.write(&format!("{tag}.svg"), &result.summary_svg())?;
    if spec.kind == SweepKind::FrequencyRatio {
        ctx.out.write(&format!("{tag}_errors.csv"), &result.error_curves_csv())?;
        ctx.out.write(&format!("{tag}_errors.svg"), &result.error_curves_svg())?;
    }
    let failures = result.failures();
    if !failures.is_empty() {
        let text: String = failures.iter().map(|(i, m)| format!("{i}: {m}\n")).collect();
        ctx.out.write(&format!("{tag}_failures.txt"), &text)?;
        eprintln!("warning: {} of {} sweep points failed", failures.len(), result.rows.len());
    }
    print!("{}", result.to_csv());
    let all_failed = failures.len() == result.rows.len();
    ctx.out.manifest(&format!("sweep_{tag}"), &ctx.config, &[("sweep", secs)])?;
    Ok(if all_failed { 3 } else { 0 })
}

/// Parse an epoch-record CSV written by `train`.
pub fn read_epoch_records(text: &str) -> Result<Vec<EpochRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == EpochRecord::CSV_HEADER => {}
        _ => return Err(Error::parse("epochs header", format!("expected `{}`", EpochRecord::CSV_HEADER))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let c: Vec<&str> = l.split(',').collect();
            let f = |k: usize| -> Result<f64> {
                c.get(k)
                    .ok_or_else(|| Error::parse(format!("epochs row {}", i + 2), "missing column"))?
                    .trim()
                    .parse()
                    .map_err(|e: std::num::ParseFloatError| Error::parse(format!("epochs row {}", i + 2), e.to_string()))
            };
            Ok(EpochRecord { epoch: f(0)? as usize, loss: f(1)?, lr: f(2)?, eig_re: f(3)?, eig_im: f(4)? })
        })
        .collect()
}

/// Read lines of a text file, for tests and tools comparing outputs.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f).lines().collect::<std::io::Result<_>>().map_err(|e| Error::io(path, e))
}
