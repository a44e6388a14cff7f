use std::path::{Path, PathBuf};
use std::process::ExitCode;

use brauer_core::acceptance::{self, Runs};
use brauer_core::combinatorics::{format_rat, to_f64};
use brauer_core::oracle::{self, OracleError, Statistic};
use brauer_core::shapes::{gamma, validate_strong, weak_of_strong, ShapeError, StrongShape, WeakShape};
use brauer_core::simulate::{self, ExecMode, LocalLawConfig, RunConfig, SimError, StatsReport, Tracker};
use brauer_core::stats::tv_distance;
use brauer_core::theory::{self, TheoryError, TwoSlingTable};
use brauer_core::BigRat;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "brauer", version, about = "Loops, strings and shapes of random Brauer diagrams")]
struct Cli {
    /// Worker threads for replica-parallel runs.
    #[arg(long, global = true, env = "BRAUER_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Exact rationals as "p/q" strings, with decimals.
    Json,
    /// Decimal rows for plotting.
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a closed-form quantity.
    Theory(TheoryArgs),
    /// Run Monte Carlo replicas of the streaming simulator.
    Simulate(SimulateArgs),
    /// Sample the string's level occupancy and layer crossings.
    LocalLaws(LocalLawArgs),
    /// Exact law of a statistic from the small-n oracles.
    Exact(ExactArgs),
    /// Check a strong-shape word.
    ValidateShape(ShapeArgs),
    /// Run the acceptance bundle.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Target {
    Mu,
    Sigma2,
    P0,
    Pgf,
    Vdist,
    Edist,
    Ab,
    Density,
    Cltvar,
    Shape,
    Weakshape,
    Fates,
    Table2sling,
    Absorption,
}

#[derive(Args, Serialize, Deserialize)]
struct TheoryArgs {
    #[arg(value_enum)]
    target: Target,
    #[arg(long)]
    n: usize,
    /// Strong shape, e.g. ABAB.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<String>,
    /// Weak shape, e.g. 2,1.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weak: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Run configuration as JSON; replaces the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    n: Option<usize>,
    #[arg(long, required_unless_present = "config")]
    t: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replicas: u32,
    #[arg(long, default_value_t = 0)]
    first_replica: u32,
    /// Comma-separated: loops, transverse, across, bends, resets, shape:W, weak:a,b.
    #[arg(long, value_delimiter = ',', default_value = "loops")]
    trackers: Vec<String>,
    #[arg(long, default_value_t = simulate::DEFAULT_SHAPE_CAP)]
    shape_cap: usize,
    #[arg(long, default_value_t = simulate::DEFAULT_STRETCH_CAP)]
    stretch_cap: usize,
    /// Run replicas one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct LocalLawArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    n: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    probes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    spacing: Option<u64>,
    #[arg(long, default_value_t = 1)]
    replicas: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Enumeration,
    Markov,
}

#[derive(Args, Serialize, Deserialize)]
struct ExactArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    t: usize,
    /// loops, resets, transverse, across, bends, shape:W, v:LEVEL or e:LAYER.
    #[arg(long, default_value = "loops")]
    stat: String,
    #[arg(long, value_enum, default_value_t = Method::Enumeration)]
    method: Method,
    /// Markov method: values above the cap are pooled as overflow.
    #[arg(long, default_value_t = i64::MAX)]
    cap: i64,
}

#[derive(Args, Serialize, Deserialize)]
struct ShapeArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    word: String,
}

#[derive(Args, Serialize, Deserialize)]
struct ReportArgs {
    #[arg(long, default_value_t = acceptance::SUITE_SEED)]
    seed: u64,
    /// Comma-separated criterion ids; all twelve by default.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    only: Vec<u8>,
}

enum Fail {
    Invalid(String),
    Capacity(String),
    Acceptance(Output),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Invalid(_) => 2,
            Fail::Capacity(_) => 3,
            Fail::Acceptance(_) => 4,
        }
    }
}

impl From<TheoryError> for Fail {
    fn from(e: TheoryError) -> Self {
        Fail::Invalid(e.to_string())
    }
}

impl From<SimError> for Fail {
    fn from(e: SimError) -> Self {
        Fail::Invalid(e.to_string())
    }
}

impl From<OracleError> for Fail {
    fn from(e: OracleError) -> Self {
        if e.is_capacity() {
            Fail::Capacity(e.to_string())
        } else {
            Fail::Invalid(e.to_string())
        }
    }
}

impl From<ShapeError> for Fail {
    fn from(e: ShapeError) -> Self {
        if e.is_capacity() {
            Fail::Capacity(e.to_string())
        } else {
            Fail::Invalid(e.to_string())
        }
    }
}

/// A named value: exact when the quantity is rational.
struct Row {
    name: String,
    exact: Option<String>,
    decimal: f64,
}

impl Row {
    fn rat(name: impl Into<String>, x: &BigRat) -> Self {
        Self { name: name.into(), exact: Some(format_rat(x)), decimal: to_f64(x) }
    }

    fn float(name: impl Into<String>, x: f64) -> Self {
        Self { name: name.into(), exact: None, decimal: x }
    }
}

struct Output {
    command: &'static str,
    config: Value,
    rows: Vec<Row>,
    /// Extra top-level JSON fields.
    extra: Vec<(&'static str, Value)>,
}

impl Output {
    fn new(command: &'static str, config: Value, rows: Vec<Row>) -> Self {
        Self { command, config, rows, extra: Vec::new() }
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let values: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| match &r.exact {
                        Some(x) => json!({ "name": r.name, "exact": x, "decimal": r.decimal }),
                        None => json!({ "name": r.name, "decimal": r.decimal }),
                    })
                    .collect();
                let mut obj = serde_json::Map::new();
                obj.insert("command".into(), json!(self.command));
                obj.insert("config".into(), self.config.clone());
                obj.insert("values".into(), Value::Array(values));
                for (k, v) in &self.extra {
                    obj.insert((*k).into(), v.clone());
                }
                serde_json::to_string_pretty(&Value::Object(obj)).expect("serializable") + "\n"
            }
            Format::Csv => {
                let mut s = format!("# {} {}\nname,exact,decimal\n", self.command, self.config);
                for r in &self.rows {
                    s += &format!("{},{},{}\n", csv_field(&r.name), r.exact.as_deref().unwrap_or(""), r.decimal);
                }
                s
            }
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// Accepts either a bare config object or a previous output embedding one.
fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, Fail> {
    let text = std::fs::read_to_string(path).map_err(|e| Fail::Invalid(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Fail::Invalid(format!("{}: {e}", path.display())))?;
    let v = v.get("config").cloned().unwrap_or(v);
    serde_json::from_value(v).map_err(|e| Fail::Invalid(format!("{}: {e}", path.display())))
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn pmf_rows(prefix: &str, pmf: &theory::Pmf) -> Vec<Row> {
    let mut rows: Vec<Row> = pmf.support().iter().map(|(k, p)| Row::rat(format!("{prefix}[{k}]"), p)).collect();
    rows.push(Row::rat("mean", &pmf.mean()));
    rows.push(Row::rat("variance", &pmf.variance()));
    rows
}

fn parse_shape(s: Option<&str>) -> Result<StrongShape, Fail> {
    let s = s.ok_or_else(|| Fail::Invalid("--shape is required".into()))?;
    s.parse().map_err(|e| Fail::Invalid(format!("shape {s}: {e}")))
}

fn cmd_theory(a: &TheoryArgs) -> Result<Output, Fail> {
    let n = a.n;
    let rows = match a.target {
        Target::Mu => vec![Row::rat("mu", &theory::loop_rate(n)?)],
        Target::Sigma2 => vec![Row::rat("sigma2", &theory::loop_rate_variance(n)?)],
        Target::P0 => vec![Row::rat("p0", &theory::reset_probability(n)?)],
        Target::Pgf => {
            let g = theory::loop_increment_pgf(n)?;
            let mut rows: Vec<Row> =
                g.coefficients().iter().enumerate().map(|(k, c)| Row::rat(format!("x^{k}"), c)).collect();
            rows.push(Row::rat("mean", &g.mean()));
            rows.push(Row::rat("variance", &g.variance()));
            rows
        }
        Target::Vdist => pmf_rows("V", &theory::level_occupancy_dist(n)?),
        Target::Edist => pmf_rows("E", &theory::layer_crossing_dist(n)?),
        Target::Ab => {
            let (x, y) = theory::across_bend_rates(n)?;
            vec![Row::rat("a", &x), Row::rat("b", &y)]
        }
        Target::Density => {
            let (d, per_level) = theory::transverse_density(n)?;
            vec![Row::rat("density", &d), Row::rat("per_level", &per_level)]
        }
        Target::Cltvar => vec![Row::rat("variance", &theory::transverse_clt_variance(n)?)],
        Target::Shape => {
            let w = parse_shape(a.shape.as_deref())?;
            let r = theory::shape_rate(n, &w)?;
            let mut rows = vec![Row::rat("mu", &r.mu)];
            rows.extend(r.autocov.iter().enumerate().map(|(h, k)| Row::rat(format!("K({h})"), k)));
            rows.push(Row::rat("sigma2", &r.sigma2));
            rows
        }
        Target::Weakshape => {
            let s = a.weak.as_deref().ok_or_else(|| Fail::Invalid("--weak is required".into()))?;
            let w: WeakShape = s.parse().map_err(|e| Fail::Invalid(format!("weak shape {s}: {e}")))?;
            let r = theory::weak_shape_rate(n, &w)?;
            vec![
                Row::rat("gamma", &BigRat::from_integer(r.gamma)),
                Row::rat("mu", &r.mu),
                Row::rat("sigma2", &r.sigma2),
            ]
        }
        Target::Fates => {
            let f = theory::sling_fate_probs(n)?;
            vec![
                Row::rat("to_string", &f.to_string),
                Row::rat("to_loop", &f.to_loop),
                Row::rat("survive", &f.survive),
                Row::rat("geo_param", &f.geo_param),
                Row::rat("eventual_string", &f.eventual_string),
                Row::rat("pair_eventual_string", &f.pair_eventual_string),
            ]
        }
        Target::Table2sling => {
            let t = theory::two_sling_table(n)?;
            let mut rows: Vec<Row> = TwoSlingTable::LABELS
                .iter()
                .zip(&t.rows)
                .zip(TwoSlingTable::MULTIPLICITY)
                .map(|((l, r), m)| Row::rat(format!("{l} (x{m})"), r))
                .collect();
            rows.push(Row::rat("weighted_sum", &t.weighted_sum()));
            rows
        }
        Target::Absorption => pmf_rows("X", &theory::string_absorption_dist(n)?),
    };
    Ok(Output::new("theory", to_value(a), rows))
}

fn tracker_target(n: usize, t: &Tracker) -> Option<BigRat> {
    match t {
        Tracker::Loops => theory::loop_rate(n).ok(),
        Tracker::Transverse => theory::transverse_density(n).ok().map(|d| d.1),
        Tracker::Across => theory::across_bend_rates(n).ok().map(|r| r.0),
        Tracker::Bends => theory::across_bend_rates(n).ok().map(|r| r.1),
        Tracker::Resets => theory::reset_probability(n).ok(),
        Tracker::Shape(w) => theory::shape_rate(n, w).ok().map(|r| r.mu),
        Tracker::Weak(a) => theory::weak_shape_rate(n, a).ok().map(|r| r.mu),
    }
}

fn simulate_rows(config: &RunConfig, report: &StatsReport) -> Vec<Row> {
    let mut rows = Vec::new();
    for t in &config.trackers {
        let Some(s) = report.tracker(t) else { continue };
        rows.push(Row::float(format!("{t}.estimate"), s.estimate()));
        rows.push(Row::float(format!("{t}.std_error"), s.std_error()));
        if let Some(x) = tracker_target(config.n, t) {
            rows.push(Row::rat(format!("{t}.theory"), &x));
        }
        let m = s.final_moments();
        rows.push(Row::float(format!("{t}.final_mean"), m.mean));
        rows.push(Row::float(format!("{t}.final_variance"), m.variance));
    }
    rows.push(Row::float("loops", report.loops as f64));
    rows.push(Row::float("loop_span_violations", report.loop_span_violations as f64));
    rows
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Output, Fail> {
    let config = match &a.config {
        Some(p) => load_config(p)?,
        None => {
            let trackers = a.trackers.iter().map(|s| s.parse()).collect::<Result<Vec<Tracker>, _>>()?;
            RunConfig {
                shape_cap: a.shape_cap,
                stretch_cap: a.stretch_cap,
                first_replica: a.first_replica,
                ..RunConfig::new(a.n.expect("required"), a.t.expect("required"), a.seed, trackers)
                    .with_replicas(a.replicas)
            }
        }
    };
    let mode = if a.sequential { ExecMode::Sequential } else { ExecMode::Parallel };
    let report = simulate::run_with(&config, mode)?;
    let mut out = Output::new("simulate", to_value(&config), simulate_rows(&config, &report));
    out.extra.push(("report", to_value(&report)));
    Ok(out)
}

fn cmd_local_laws(a: &LocalLawArgs) -> Result<Output, Fail> {
    let config = match &a.config {
        Some(p) => load_config(p)?,
        None => {
            let n = a.n.expect("required");
            if n == 0 {
                return Err(Fail::Invalid("n must be at least 1".into()));
            }
            let mut c = LocalLawConfig::new(n, a.probes, a.seed);
            c.burn_in = a.burn_in.unwrap_or(c.burn_in);
            c.spacing = a.spacing.unwrap_or(c.spacing);
            c.replicas = a.replicas;
            c
        }
    };
    let report = simulate::sample_local_laws(&config)?;
    let mut rows = Vec::new();
    for (name, hist, law) in [
        ("V", &report.v_hist, theory::level_occupancy_dist(config.n)?),
        ("E", &report.e_hist, theory::layer_crossing_dist(config.n)?),
    ] {
        let total: u64 = hist.values().sum();
        for (k, c) in hist {
            rows.push(Row::float(format!("{name}[{k}].empirical"), *c as f64 / total as f64));
        }
        for (k, p) in law.support() {
            rows.push(Row::rat(format!("{name}[{k}].theory"), p));
        }
        rows.push(Row::float(format!("{name}.tv"), tv_distance(hist, law.support())));
    }
    let mut out = Output::new("local-laws", to_value(&config), rows);
    out.extra.push(("report", to_value(&report)));
    Ok(out)
}

fn cmd_exact(a: &ExactArgs) -> Result<Output, Fail> {
    let stat: Statistic = a.stat.parse()?;
    let rows = match a.method {
        Method::Enumeration => pmf_rows("P", &oracle::exact_by_enumeration(a.n, a.t, &stat)?),
        Method::Markov => {
            let law = oracle::exact_by_markov(a.n, a.t, &stat, a.cap)?;
            let mut rows = pmf_rows("P", &law.pmf);
            rows.push(Row::rat("overflow", &law.overflow));
            rows
        }
    };
    Ok(Output::new("exact", to_value(a), rows))
}

fn cmd_validate_shape(a: &ShapeArgs) -> Result<Output, Fail> {
    if a.n == 0 {
        return Err(Fail::Invalid("n must be at least 1".into()));
    }
    let w: StrongShape = a.word.parse().map_err(|e| Fail::Invalid(format!("word {}: {e}", a.word)))?;
    let accepted = validate_strong(&w, a.n);
    let mut out = Output::new("validate-shape", to_value(a), Vec::new());
    out.extra.push(("accepted", json!(accepted)));
    out.rows.push(Row::float("accepted", if accepted { 1.0 } else { 0.0 }));
    if accepted {
        let weak = weak_of_strong(&w)?;
        let g = gamma(&weak);
        out.extra.push(("weak", json!(weak.to_string())));
        out.extra.push(("gamma", json!(g.to_string())));
        out.rows.push(Row::rat("gamma", &BigRat::from_integer(g)));
        out.rows.push(Row::float("size", weak.size() as f64));
        out.rows.push(Row::float("stretch", weak.stretch() as f64));
    }
    Ok(out)
}

fn cmd_report(a: &ReportArgs) -> Result<Output, Fail> {
    let ids: Vec<u8> = if a.only.is_empty() { (1..=12).collect() } else { a.only.clone() };
    if let Some(bad) = ids.iter().find(|&&i| !(1..=12).contains(&i)) {
        return Err(Fail::Invalid(format!("no criterion {bad}")));
    }
    let runs = Runs::new(a.seed, acceptance::MC_LAYERS);
    let mut results = Vec::new();
    for id in ids {
        let r = acceptance::run_criterion(id, a.seed, &runs);
        eprintln!("{}", r.line());
        results.push(r);
    }
    let rows = results.iter().map(|r| Row::float(format!("{} {}", r.id, r.name), r.passed() as u8 as f64)).collect();
    let failed = results.iter().any(|r| !r.passed());
    let mut out = Output::new("report", to_value(a), rows);
    out.extra.push(("criteria", to_value(&results)));
    if failed {
        Err(Fail::Acceptance(out))
    } else {
        Ok(out)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = simulate::set_threads(t) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Theory(a) => cmd_theory(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::LocalLaws(a) => cmd_local_laws(a),
        Command::Exact(a) => cmd_exact(a),
        Command::ValidateShape(a) => cmd_validate_shape(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(out) => {
            print!("{}", out.render(cli.format));
            ExitCode::SUCCESS
        }
        Err(f) => {
            let code = f.code();
            match f {
                Fail::Acceptance(out) => print!("{}", out.render(cli.format)),
                Fail::Invalid(m) => eprintln!("error: {m}"),
                Fail::Capacity(m) => eprintln!("capacity: {m}"),
            }
            ExitCode::from(code)
        }
    }
}
