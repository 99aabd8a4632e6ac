//! Command-line front end: flat `key=value` configuration, CSV / JSON / plot
//! writers and the run manifest.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 statistical
//! degeneracy (every grid point censored, or no spread in `r`).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::alphabet_model::{uniform, Distribution};
use crate::error::Error;
use crate::exact_analysis::{
    achievability_exponent, lemma_a_rate, prob_all_distinct, prob_all_distinct_uniform, prob_c_n,
    prob_event_a, prob_event_b_given_xy, LambdaQuadratic,
};
use crate::experiments::{
    canonical_pair, conditional_false_alarm_experiment, ensure_r_spread, fit_exponent, run_grid,
    ClassifierId, GridPoint, PointEstimate, SweepConfig, DEFAULT_CONFIDENCE,
};
use crate::sampling::{sample_histogram, SeedSpec, Stream};

pub const THREADS_ENV: &str = "SPARSE_CLASSIFIER_THREADS";

pub const CSV_HEADER: &str = "m,N,n,r,trials,errors_h0,errors_h1,p_hat,ci_low,ci_high,censored";

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "sparse-classifier", version, about = "Large-alphabet classification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonOptions,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonOptions {
    /// key=value configuration file
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed, overrides `seed=` in the configuration
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads
    #[arg(long, global = true, value_name = "N", env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Two-sided confidence level of reported intervals
    #[arg(long, global = true, value_name = "LEVEL")]
    pub confidence: Option<f64>,
    /// Report log-probabilities in base 10 instead of natural log
    #[arg(long, global = true)]
    pub log10: bool,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Monte Carlo error estimate at every grid point
    Simulate {
        #[arg(value_name = "KEY=VALUE")]
        args: Vec<String>,
    },
    /// Grid estimates plus an exponent fit of -ln p_hat against r
    Sweep {
        #[arg(value_name = "KEY=VALUE")]
        args: Vec<String>,
    },
    /// Exact log-probabilities: which=distinct|A|B|Cn
    Exact {
        #[arg(value_name = "KEY=VALUE")]
        args: Vec<String>,
    },
    /// Main terms of the log-MGF bound and the achievability exponent
    Bounds {
        #[arg(value_name = "KEY=VALUE")]
        args: Vec<String>,
    },
    /// Count-spike experiment against the l2 classifier
    Counterexample {
        #[arg(value_name = "KEY=VALUE")]
        args: Vec<String>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Sweep { .. } => "sweep",
            Command::Exact { .. } => "exact",
            Command::Bounds { .. } => "bounds",
            Command::Counterexample { .. } => "counterexample",
        }
    }

    fn args(&self) -> &[String] {
        match self {
            Command::Simulate { args }
            | Command::Sweep { args }
            | Command::Exact { args }
            | Command::Bounds { args }
            | Command::Counterexample { args } => args,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub const IO: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const DEGENERATE: i32 = 3;

    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: Self::CONFIG,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: Self::IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_degenerate() {
            CliError::DEGENERATE
        } else {
            CliError::CONFIG
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Where a configuration value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line { file: String, line: usize },
    Argument(usize),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line { file, line } => write!(f, "{file}:{line}"),
            Origin::Argument(i) => write!(f, "argument {i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: Origin,
}

/// Ordered `key=value` entries; later entries override earlier ones except
/// for the repeatable `grid` key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    entries: Vec<Entry>,
}

const REPEATABLE: &[&str] = &["grid"];

impl Config {
    /// Blank lines and `#` comments are skipped. A key may appear once per
    /// source unless it is repeatable.
    pub fn parse(text: &str, file: &str) -> CliResult<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::Line {
                file: file.to_string(),
                line: i + 1,
            };
            cfg.push_pair(line, origin)?;
        }
        Ok(cfg)
    }

    pub fn from_args(args: &[String]) -> CliResult<Self> {
        let mut cfg = Config::default();
        for (i, a) in args.iter().enumerate() {
            cfg.push_pair(a.trim(), Origin::Argument(i + 1))?;
        }
        Ok(cfg)
    }

    fn push_pair(&mut self, text: &str, origin: Origin) -> CliResult<()> {
        let (key, value) = text
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("{origin}: expected key=value, got '{text}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(CliError::config(format!("{origin}: empty key")));
        }
        if !REPEATABLE.contains(&key) {
            if let Some(prev) = self.entries.iter().find(|e| e.key == key) {
                return Err(CliError::config(format!(
                    "{origin}: field '{key}' already set at {}",
                    prev.origin
                )));
            }
        }
        self.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            origin,
        });
        Ok(())
    }

    /// `other` overrides scalar keys; repeatable keys from `other` replace
    /// those of `self` wholesale.
    pub fn overridden_by(mut self, other: Config) -> Config {
        let keys: Vec<String> = other.entries.iter().map(|e| e.key.clone()).collect();
        self.entries.retain(|e| !keys.contains(&e.key));
        self.entries.extend(other.entries);
        self
    }

    pub fn set(&mut self, key: &str, value: String, origin: Origin) {
        self.entries.retain(|e| e.key != key);
        self.entries.push(Entry {
            key: key.to_string(),
            value,
            origin,
        });
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn check_keys(&self, allowed: &[&str]) -> CliResult<()> {
        for e in &self.entries {
            if !allowed.contains(&e.key.as_str()) {
                return Err(CliError::config(format!(
                    "{}: unknown field '{}' (expected one of: {})",
                    e.origin,
                    e.key,
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| {
                CliError::config(format!("{}: field '{key}': cannot parse '{}': {err}", e.origin, e.value))
            }),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| CliError::config(format!("missing required field '{key}'")))
    }

    pub fn grid(&self) -> CliResult<Vec<GridPoint>> {
        self.entries
            .iter()
            .filter(|e| e.key == "grid")
            .map(|e| parse_grid_point(&e.value).map_err(|m| CliError::config(format!("{}: field 'grid': {m}", e.origin))))
            .collect()
    }

    /// Effective configuration, last value per scalar key, in first-seen order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for e in &self.entries {
            if REPEATABLE.contains(&e.key.as_str()) {
                out.push((e.key.clone(), e.value.clone()));
            } else if let Some(slot) = out.iter_mut().find(|(k, _)| *k == e.key) {
                slot.1 = e.value.clone();
            } else {
                out.push((e.key.clone(), e.value.clone()));
            }
        }
        out
    }
}

/// `m,N,n`
pub fn parse_grid_point(s: &str) -> std::result::Result<GridPoint, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected 'm,N,n', got '{s}'"));
    }
    let m = parts[0].parse::<usize>().map_err(|e| format!("m '{}': {e}", parts[0]))?;
    let nt = parts[1].parse::<u64>().map_err(|e| format!("N '{}': {e}", parts[1]))?;
    let ns = parts[2].parse::<u64>().map_err(|e| format!("n '{}': {e}", parts[2]))?;
    Ok(GridPoint::new(m, nt, ns))
}

/// `%.12g`: 12 significant digits, trailing zeros removed, exponent form
/// outside `[1e-5, 1e12)`.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let digits = (11 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", digits, x)).to_string()
    } else {
        format!("{}e{}{:02}", trim_zeros(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn csv_row(row: &PointEstimate) -> String {
    let e = &row.estimate;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        row.point.m,
        row.point.n_train,
        row.point.n_test,
        fmt_sig(row.r),
        e.trials,
        e.errors_h0,
        e.errors_h1,
        fmt_sig(e.p_hat),
        fmt_sig(e.ci_low),
        fmt_sig(e.ci_high),
        e.censored as u8
    )
}

/// CSV text with a leading `# manifest=` comment line.
pub fn write_csv(rows: &[PointEstimate], manifest_ref: &str) -> String {
    let mut s = format!("# manifest={manifest_ref}\n{CSV_HEADER}\n");
    for row in rows {
        s.push_str(&csv_row(row));
        s.push('\n');
    }
    s
}

/// Two columns `r  -log p_hat` over the uncensored rows.
pub fn write_plot_data(rows: &[PointEstimate], log10: bool, manifest_ref: &str) -> String {
    let base = if log10 { "log10" } else { "ln" };
    let mut s = format!("# manifest={manifest_ref}\n# r -{base}(p_hat)\n");
    for row in rows.iter().filter(|r| !r.estimate.censored) {
        let l = -row.estimate.p_hat.ln() / if log10 { std::f64::consts::LN_10 } else { 1.0 };
        s.push_str(&format!("{} {}\n", fmt_sig(row.r), fmt_sig(l)));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config_echo: BTreeMap<String, serde_json::Value>,
    pub master_seed: Option<u64>,
    pub threads: Option<usize>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<String>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn echo_map(cfg: &Config) -> BTreeMap<String, serde_json::Value> {
    let mut map = BTreeMap::new();
    for (k, v) in cfg.echo() {
        if REPEATABLE.contains(&k.as_str()) {
            let slot = map
                .entry(k)
                .or_insert_with(|| serde_json::Value::Array(Vec::new()));
            if let serde_json::Value::Array(a) = slot {
                a.push(serde_json::Value::String(v));
            }
        } else {
            map.insert(k, serde_json::Value::String(v));
        }
    }
    map
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

/// Parses `argv` and runs; returns the process exit code.
pub fn run_from<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CliError::CONFIG } else { 0 };
            let _ = if code == 0 {
                write!(stdout, "{e}")
            } else {
                write!(stderr, "{e}")
            };
            return code;
        }
    };
    match run(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.code
        }
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let opts = &cli.common;
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError {
                code: CliError::CONFIG,
                message: format!("{}: {e}", path.display()),
            })?;
            Config::parse(&text, &path.display().to_string())?
        }
        None => Config::default(),
    };
    cfg = cfg.overridden_by(Config::from_args(cli.command.args())?);
    if let Some(seed) = opts.seed {
        cfg.set("seed", seed.to_string(), Origin::Argument(0));
    }
    if let Some(level) = opts.confidence {
        cfg.set("confidence", level.to_string(), Origin::Argument(0));
    }
    if let Some(t) = opts.threads {
        cfg.set("threads", t.to_string(), Origin::Argument(0));
    }
    let started = unix_now();
    let name = cli.command.name();
    let result = match cli.command {
        Command::Simulate { .. } => cmd_simulate(&cfg, opts),
        Command::Sweep { .. } => cmd_sweep(&cfg, opts),
        Command::Exact { .. } => cmd_exact(&cfg, opts).map(text_outcome).map_err(Failure::from),
        Command::Bounds { .. } => cmd_bounds(&cfg, opts).map(text_outcome).map_err(Failure::from),
        Command::Counterexample { .. } => cmd_counterexample(&cfg, opts).map(text_outcome).map_err(Failure::from),
    };
    // A degenerate sweep still leaves its CSV and manifest behind.
    let (outcome, deferred) = match result {
        Ok(o) => (o, None),
        Err(Failure { partial: Some(o), error }) => (o, Some(error)),
        Err(Failure { partial: None, error }) => return Err(error),
    };
    stdout
        .write_all(outcome.stdout.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    let out_dir = match (&opts.out, outcome.files.is_empty()) {
        (Some(d), _) => Some(d.clone()),
        (None, false) => Some(PathBuf::from(".")),
        (None, true) => None,
    };
    if let Some(dir) = out_dir {
        ensure_dir(&dir)?;
        let mut files = outcome.files;
        if files.is_empty() {
            files.push((format!("{name}.txt"), format!("# manifest={MANIFEST_FILE}\n{}", outcome.stdout)));
        }
        let mut outputs = Vec::new();
        for (file, contents) in &files {
            let path = dir.join(file);
            write_file(&path, contents)?;
            outputs.push(path.display().to_string());
        }
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: name.to_string(),
            config_echo: echo_map(&cfg),
            master_seed: cfg.get("seed").ok().flatten(),
            threads: cfg.get("threads").ok().flatten(),
            started_unix: started,
            finished_unix: unix_now(),
            outputs,
        };
        write_file(&dir.join(MANIFEST_FILE), &to_json(&manifest))?;
    }
    match deferred {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Text printed to stdout plus files (name, contents) for the output directory.
#[derive(Debug, Default)]
struct Outcome {
    stdout: String,
    files: Vec<(String, String)>,
}

struct Failure {
    partial: Option<Outcome>,
    error: CliError,
}

impl From<CliError> for Failure {
    fn from(error: CliError) -> Self {
        Failure { partial: None, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        CliError::from(e).into()
    }
}

fn text_outcome(report: String) -> Outcome {
    Outcome {
        stdout: report,
        files: Vec::new(),
    }
}

const GRID_KEYS: &[&str] = &[
    "grid",
    "epsilon",
    "c_bar",
    "classifier",
    "trials",
    "confidence",
    "seed",
    "threads",
    "regime",
    "allow_outside_class",
];

/// Builds a [`SweepConfig`] from the grid-style keys.
pub fn sweep_config(cfg: &Config) -> CliResult<SweepConfig> {
    cfg.check_keys(GRID_KEYS)?;
    let grid = cfg.grid()?;
    if grid.is_empty() {
        return Err(CliError::config("no grid= lines; need at least one 'grid=m,N,n'"));
    }
    let epsilon: f64 = cfg.require("epsilon")?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(CliError::config(format!(
            "field 'epsilon': the bi-uniform pair needs epsilon in (0, 1), got {epsilon}"
        )));
    }
    for p in &grid {
        if p.m % 2 != 0 {
            return Err(CliError::config(format!(
                "field 'grid': m={} is odd; the bi-uniform pair needs an even alphabet size",
                p.m
            )));
        }
    }
    let classifier: ClassifierId = cfg.get::<String>("classifier")?.map_or(Ok(ClassifierId::T), |s| {
        s.parse().map_err(|e: Error| CliError::config(format!("field 'classifier': {e}")))
    })?;
    let (mut check_sparse, mut check_consistency) = (false, false);
    if let Some(regime) = cfg.get::<String>("regime")? {
        for flag in regime.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match flag {
                "sparse" => check_sparse = true,
                "consistency" => check_consistency = true,
                "none" => {}
                other => {
                    return Err(CliError::config(format!(
                        "field 'regime': unknown flag '{other}' (expected sparse, consistency or none)"
                    )))
                }
            }
        }
    }
    let sc = SweepConfig {
        grid,
        epsilon,
        c_bar: cfg.get("c_bar")?.unwrap_or(1.0 + epsilon),
        classifier,
        trials_per_point: cfg.require("trials")?,
        confidence: cfg.get("confidence")?.unwrap_or(DEFAULT_CONFIDENCE),
        master_seed: cfg.get("seed")?.unwrap_or(0),
        threads: cfg.get("threads")?,
        check_sparse,
        check_consistency,
        allow_outside_class: cfg.get("allow_outside_class")?.unwrap_or(false),
    };
    sc.validate()?;
    Ok(sc)
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    classifier: ClassifierId,
    epsilon: f64,
    c_bar: f64,
    confidence: f64,
    master_seed: u64,
    points: &'a [PointEstimate],
}

fn cmd_simulate(cfg: &Config, _opts: &CommonOptions) -> std::result::Result<Outcome, Failure> {
    let sc = sweep_config(cfg)?;
    let rows = run_grid(&sc)?;
    let csv = write_csv(&rows, MANIFEST_FILE);
    let summary = SimulateSummary {
        classifier: sc.classifier,
        epsilon: sc.epsilon,
        c_bar: sc.c_bar,
        confidence: sc.confidence,
        master_seed: sc.master_seed,
        points: &rows,
    };
    Ok(Outcome {
        stdout: csv.clone(),
        files: vec![
            ("simulate.csv".into(), csv),
            ("simulate.json".into(), to_json(&summary)),
        ],
    })
}

fn cmd_sweep(cfg: &Config, opts: &CommonOptions) -> std::result::Result<Outcome, Failure> {
    let sc = sweep_config(cfg)?;
    ensure_r_spread(&sc.grid)?;
    let rows = run_grid(&sc)?;
    let csv = write_csv(&rows, MANIFEST_FILE);
    let mut files = vec![
        ("sweep.csv".to_string(), csv.clone()),
        ("sweep_plot.dat".to_string(), write_plot_data(&rows, opts.log10, MANIFEST_FILE)),
    ];
    match fit_exponent(&rows) {
        Ok(fit) => {
            let report = format!(
                "slope={}\nintercept={}\nr_squared={}\ncensored_points={}\n",
                fmt_sig(fit.slope),
                fmt_sig(fit.intercept),
                fmt_sig(fit.r_squared),
                fit.censored_points.len()
            );
            files.push(("sweep_fit.json".to_string(), to_json(&fit)));
            Ok(Outcome {
                stdout: format!("{csv}{report}"),
                files,
            })
        }
        Err(e) => Err(Failure {
            partial: Some(Outcome { stdout: csv, files }),
            error: e.into(),
        }),
    }
}

fn log_scale(opts: &CommonOptions) -> (f64, &'static str) {
    if opts.log10 {
        (1.0 / std::f64::consts::LN_10, "10")
    } else {
        (1.0, "e")
    }
}

struct Report(String);

impl Report {
    fn new(opts: &CommonOptions) -> Self {
        Report(format!("log_base={}\n", log_scale(opts).1))
    }

    fn kv(&mut self, key: &str, value: impl fmt::Display) {
        self.0.push_str(&format!("{key}={value}\n"));
    }

    fn num(&mut self, key: &str, value: f64) {
        self.kv(key, fmt_sig(value));
    }
}

/// `which=distinct|A|B|Cn` with `m, N, n, epsilon` as needed.
pub fn cmd_exact(cfg: &Config, opts: &CommonOptions) -> CliResult<String> {
    cfg.check_keys(&["which", "m", "N", "n", "epsilon", "seed", "z", "confidence", "threads"])?;
    let which: String = cfg.require("which")?;
    let (scale, _) = log_scale(opts);
    let mut rep = Report::new(opts);
    let m: u64 = cfg.require("m")?;
    rep.kv("which", &which);
    rep.kv("m", m);
    match which.as_str() {
        "distinct" => {
            let nt: u64 = cfg.require("N")?;
            rep.kv("N", nt);
            match cfg.get::<f64>("epsilon")? {
                None => {
                    let cf = prob_all_distinct_uniform(m, nt)?.value();
                    let dp = prob_all_distinct(&uniform(m as usize)?, nt).value();
                    rep.kv("distribution", "uniform");
                    rep.num("log_p", cf * scale);
                    rep.num("log_p_dp", dp * scale);
                }
                Some(eps) => {
                    let (_, q) = canonical_pair(m as usize, eps)?;
                    rep.kv("distribution", "bi_uniform");
                    rep.num("epsilon", eps);
                    rep.num("log_p", prob_all_distinct(&q, nt).value() * scale);
                }
            }
        }
        "A" => {
            let nt: u64 = cfg.require("N")?;
            let eps: f64 = cfg.require("epsilon")?;
            let (u, q) = canonical_pair(m as usize, eps)?;
            rep.kv("N", nt);
            rep.num("epsilon", eps);
            rep.num("log_p_x", prob_all_distinct(&u, nt).value() * scale);
            rep.num("log_p_y", prob_all_distinct(&q, nt).value() * scale);
            rep.num("log_p", prob_event_a(&u, &q, nt)?.value() * scale);
            rep.num("main_term", lemma_a_rate(eps, nt, m)? * scale);
        }
        "B" => {
            let nt: u64 = cfg.require("N")?;
            let ns: u64 = cfg.require("n")?;
            let eps: f64 = cfg.require("epsilon")?;
            let seed: u64 = cfg.get("seed")?.unwrap_or(0);
            let (u, q) = canonical_pair(m as usize, eps)?;
            let z_dist: &Distribution = match cfg.get::<String>("z")?.as_deref() {
                None | Some("pi") => &u,
                Some("mu") => &q,
                Some(other) => {
                    return Err(CliError::config(format!("field 'z': expected pi or mu, got '{other}'")))
                }
            };
            let ax = sample_histogram(&u, nt, SeedSpec::new(seed, 0, Stream::X));
            let ay = sample_histogram(&q, nt, SeedSpec::new(seed, 0, Stream::Y));
            rep.kv("N", nt);
            rep.kv("n", ns);
            rep.num("epsilon", eps);
            rep.kv("seed", seed);
            rep.kv("support_x", ax.support_len());
            rep.kv("support_y", ay.support_len());
            rep.num("log_p", prob_event_b_given_xy(&ax, &ay, z_dist, ns)?.value() * scale);
        }
        "Cn" => {
            let nt: u64 = cfg.require("N")?;
            let ns: u64 = cfg.require("n")?;
            let r = prob_c_n(m, nt, ns)?;
            rep.kv("N", nt);
            rep.kv("n", ns);
            rep.kv("k", r.k);
            rep.num("log_p", r.log_prob.value() * scale);
            rep.num("asymptote", r.asymptote * scale);
        }
        other => {
            return Err(CliError::config(format!(
                "field 'which': expected distinct, A, B or Cn, got '{other}'"
            )))
        }
    }
    Ok(rep.0)
}

/// `epsilon, c_bar` always; the log-MGF main terms when `m, N, n` are given.
pub fn cmd_bounds(cfg: &Config, opts: &CommonOptions) -> CliResult<String> {
    cfg.check_keys(&["epsilon", "c_bar", "m", "N", "n", "gamma", "pair", "nu", "seed", "confidence", "threads"])?;
    let eps: f64 = cfg.require("epsilon")?;
    let c_bar: f64 = cfg.require("c_bar")?;
    let mut rep = Report::new(opts);
    rep.num("epsilon", eps);
    rep.num("c_bar", c_bar);
    rep.num("J_lower", achievability_exponent(eps, c_bar)?);
    let (m, nt, ns) = (cfg.get::<usize>("m")?, cfg.get::<u64>("N")?, cfg.get::<u64>("n")?);
    let (m, nt, ns) = match (m, nt, ns) {
        (None, None, None) => return Ok(rep.0),
        (Some(m), Some(nt), Some(ns)) => (m, nt, ns),
        _ => return Err(CliError::config("fields 'm', 'N', 'n' must be given together")),
    };
    let (pi, mu) = match cfg.get::<String>("pair")?.as_deref() {
        None | Some("canonical") => canonical_pair(m, eps)?,
        Some("equal") => (uniform(m)?, uniform(m)?),
        Some(other) => {
            return Err(CliError::config(format!(
                "field 'pair': expected canonical or equal, got '{other}'"
            )))
        }
    };
    let nu = match cfg.get::<String>("nu")?.as_deref() {
        None | Some("pi") => pi.clone(),
        Some("mu") => mu.clone(),
        Some(other) => return Err(CliError::config(format!("field 'nu': expected pi or mu, got '{other}'"))),
    };
    let lq = LambdaQuadratic::new(&pi, &mu, &nu, nt, ns)?;
    let gamma = match cfg.get::<String>("gamma")?.as_deref() {
        None | Some("optimize") => lq.optimal_gamma().ok_or_else(|| {
            CliError::config("field 'gamma': quadratic coefficient vanishes, no finite optimum")
        })?,
        Some(g) => g
            .parse::<f64>()
            .ok()
            .filter(|g| g.is_finite())
            .ok_or_else(|| CliError::config(format!("field 'gamma': expected a number or 'optimize', got '{g}'")))?,
    };
    let b = lq.at(gamma);
    rep.kv("m", m);
    rep.kv("N", nt);
    rep.kv("n", ns);
    rep.num("gamma", b.gamma);
    rep.num("theta", b.theta);
    rep.num("scale", b.scale);
    rep.num("linear_coefficient", b.linear_coefficient);
    rep.num("quadratic_coefficient", b.quadratic_coefficient);
    rep.num("linear_term", b.linear_term);
    rep.num("quadratic_term", b.quadratic_term);
    rep.num("main_term", b.main_term);
    if let Some(v) = lq.vertex_value() {
        rep.num("vertex_value", v);
    }
    rep.kv("note", b.note);
    Ok(rep.0)
}

pub fn cmd_counterexample(cfg: &Config, opts: &CommonOptions) -> CliResult<String> {
    cfg.check_keys(&["m", "N", "n", "epsilon", "trials", "seed", "confidence", "threads"])?;
    let m: usize = cfg.require("m")?;
    let nt: u64 = cfg.require("N")?;
    let ns: u64 = cfg.require("n")?;
    let eps: f64 = cfg.require("epsilon")?;
    let trials: u64 = cfg.require("trials")?;
    let seed: u64 = cfg.get("seed")?.unwrap_or(0);
    let confidence: f64 = cfg.get("confidence")?.unwrap_or(DEFAULT_CONFIDENCE);
    let r = conditional_false_alarm_experiment(m, nt, ns, eps, trials, seed, confidence, cfg.get("threads")?)?;
    let (scale, _) = log_scale(opts);
    let mut rep = Report::new(opts);
    rep.kv("m", r.m);
    rep.kv("N", r.n_train);
    rep.kv("n", r.n_test);
    rep.num("epsilon", r.epsilon);
    rep.kv("k", r.k);
    rep.kv("trials", r.trials);
    rep.kv("seed", seed);
    rep.kv("misses", r.misses);
    rep.num("p_cond", r.p_cond);
    rep.num("ci_low", r.ci_low);
    rep.num("ci_high", r.ci_high);
    rep.num("confidence", r.confidence);
    rep.num("log_prob_cn", r.log_prob_cn * scale);
    rep.num("asymptote", r.asymptote * scale);
    rep.num("bound", r.bound * scale);
    Ok(rep.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(0.1), "0.1");
        assert_eq!(fmt_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig(-0.707_800_123_456_789), "-0.707800123457");
        assert_eq!(fmt_sig(123_456.0), "123456");
        assert_eq!(fmt_sig(2.5e-7), "2.5e-07");
        assert_eq!(fmt_sig(1e15), "1e+15");
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(f64::NEG_INFINITY), "-inf");
        for x in [0.123_456_789_012_345, 9.87e-3, 4.0, 1.0 / 7.0] {
            let back: f64 = fmt_sig(x).parse().unwrap();
            assert!((back / x - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn parse_reports_line_and_field() {
        let err = Config::parse("epsilon=0.5\n\nbogus line\n", "cfg").unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("cfg:3"), "{}", err.message);

        let cfg = Config::parse("# header\nepsilon = 0.5\ntrials=ten\n", "cfg").unwrap();
        let err = cfg.require::<u64>("trials").unwrap_err();
        assert!(err.message.contains("cfg:3") && err.message.contains("trials"), "{}", err.message);

        let err = Config::parse("seed=1\nseed=2\n", "cfg").unwrap_err();
        assert!(err.message.contains("cfg:2") && err.message.contains("cfg:1"));
    }

    #[test]
    fn grid_lines_repeat_and_args_override() {
        let file = Config::parse("grid=100,10,10\ngrid=200,20,20\nseed=3\n", "f").unwrap();
        assert_eq!(file.grid().unwrap().len(), 2);
        let args = Config::from_args(&["seed=9".into()]).unwrap();
        let merged = file.overridden_by(args);
        assert_eq!(merged.require::<u64>("seed").unwrap(), 9);
        assert_eq!(merged.grid().unwrap().len(), 2);
    }

    #[test]
    fn odd_alphabet_names_parity() {
        let cfg = Config::parse("grid=101,10,10\nepsilon=0.5\ntrials=10\n", "f").unwrap();
        let err = sweep_config(&cfg).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("even"), "{}", err.message);
    }

    #[test]
    fn unknown_field_rejected() {
        let cfg = Config::parse("grid=100,10,10\nepsilon=0.5\ntrials=10\ntrails=5\n", "f").unwrap();
        let err = sweep_config(&cfg).unwrap_err();
        assert!(err.message.contains("f:4") && err.message.contains("trails"));
    }

    #[test]
    fn csv_row_layout() {
        let row = PointEstimate {
            point: GridPoint::new(100, 10, 12),
            r: 1.0,
            estimate: crate::experiments::ErrorEstimate::from_tallies(10, 1, 2, 0.95).unwrap(),
        };
        let line = csv_row(&row);
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), CSV_HEADER.split(',').count());
        assert_eq!(&cols[..8], &["100", "10", "12", "1", "10", "1", "2", "0.15"]);
        assert_eq!(cols[10], "0");
    }
}
