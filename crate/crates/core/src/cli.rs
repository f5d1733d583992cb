//! Command-line front end.
//!
//! Every subcommand resolves its configuration from built-in defaults, an
//! optional `--config` file and explicit flags, in that order of precedence,
//! and writes one JSON record per line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bp::{bethe_free_energy, bp_solve, marginal_from_messages, Init};
use crate::cavity::{
    brute_force_independence_number, brute_force_max_cut, brute_force_max_satisfied, free_energy_report,
    independence_ratio_estimate, interpolation_monotonicity_check, max_ksat_estimate, max_qcut_estimate,
    population_dynamics, bethe_functional, FreeEnergyConfig, InterpolationConfig, Method, PhiConfig, PopDynConfig,
    ZeroTempEstimate, DEFAULT_REJECTION_CAP,
};
use crate::decomp::{decompose_measure, epsilon_symmetry, extremality, Theta};
use crate::error::Error;
use crate::exact::Oracle;
use crate::graph::{sample_pairing_graph, sample_simple_graph, sample_tree, FactorGraph};
use crate::kernel::{Kernel, KernelDoc, KernelEnsemble};
use crate::model::{check_pos, find_pos_witness, Model, ModelSpec, PosConfig};
use crate::numeric::{mean_stderr, rng_from_seed, substream};

/// Exit code for invalid flags, configuration or model.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for size guards, retry limits and rejection caps.
pub const EXIT_GUARD: i32 = 3;
/// Exit code for other failures (I/O, degenerate numerics).
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug)]
enum CliError {
    Validation(String),
    Lib(Error),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Lib(e) if e.is_guard() => EXIT_GUARD,
            CliError::Lib(
                Error::InvalidModel(_) | Error::OutOfRange(_) | Error::Divisibility { .. } | Error::Parse(_) | Error::IndexMismatch,
            ) => EXIT_VALIDATION,
            _ => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(s) => write!(f, "{s}"),
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Validation(msg.into()))
}

#[derive(Parser, Debug)]
#[command(name = "bethe-lab", version, about = "Cavity-method toolkit for spin systems on random regular factor graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    /// Print the resolved configuration and exit.
    Config,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Root seed; required by stochastic subcommands.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: BETHE_LAB_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Configuration file in the format printed by `--emit config`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    emit: Option<Emit>,
    /// Write records (or the graph, for `graph`) here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Model flags; merged into the `[model]` section of the configuration.
#[derive(Args, Debug, Clone, Default)]
struct ModelArgs {
    /// kspin, potts, ksat, hardcore, hardcore_soft or custom (config file only).
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    prior: Option<Vec<f64>>,
}

impl ModelArgs {
    fn to_table(&self) -> toml::Table {
        let mut t = toml::Table::new();
        if let Some(m) = &self.model {
            t.insert("model".into(), m.clone().into());
            // the families with a fixed shape need not be spelled out
            match m.as_str() {
                "kspin" | "ksat" => {
                    t.insert("q".into(), 2.into());
                }
                "potts" => {
                    t.insert("k".into(), 2.into());
                }
                "hardcore" | "hardcore_soft" => {
                    t.insert("q".into(), 2.into());
                    t.insert("k".into(), 2.into());
                }
                _ => {}
            }
        }
        for (key, v) in [("q", self.q), ("k", self.k), ("d", self.d)] {
            if let Some(v) = v {
                t.insert(key.into(), (v as i64).into());
            }
        }
        let mut params = toml::Table::new();
        if let Some(b) = self.beta {
            params.insert("beta".into(), b.into());
        }
        if let Some(l) = self.lambda {
            params.insert("lambda".into(), l.into());
        }
        if !params.is_empty() {
            t.insert("params".into(), params.into());
        }
        if let Some(p) = &self.prior {
            t.insert("prior".into(), toml::Value::Array(p.iter().map(|&x| x.into()).collect()));
        }
        t
    }
}

macro_rules! options {
    (
        $opts:ident, $cfg:ident {
            $( $(#[doc = $doc:expr])* $field:ident : $ty:ty = $default:expr ),* $(,)?
        }
        $( paths { $( $(#[doc = $pdoc:expr])* $pfield:ident ),* $(,)? } )?
    ) => {
        #[derive(Args, Debug, Clone, Default, Serialize)]
        struct $opts {
            $(
                $(#[doc = $doc])*
                #[arg(long, value_delimiter = ',', num_args = 0..=1, default_missing_value = "true")]
                #[serde(skip_serializing_if = "Option::is_none")]
                $field: Option<$ty>,
            )*
            $($(
                $(#[doc = $pdoc])*
                #[arg(long)]
                #[serde(skip_serializing_if = "Option::is_none")]
                $pfield: Option<PathBuf>,
            )*)?
        }

        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $cfg {
            pub command: String,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub seed: Option<u64>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub threads: Option<usize>,
            $( pub $field: $ty, )*
            $($(
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $pfield: Option<PathBuf>,
            )*)?
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub model: Option<ModelSpec>,
        }

        impl $cfg {
            fn defaults() -> toml::Table {
                let mut t = toml::Table::new();
                $( t.insert(stringify!($field).into(), toml::Value::try_from($default).expect("default serializes")); )*
                t
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    /// Uniform pairing, multi-edges allowed.
    Pairing,
    /// Pairing conditioned on simplicity.
    Simple,
    /// Random acyclic graph.
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Uniform,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Uniform,
    Random,
}

options!(GraphOpts, GraphConfig {
    /// Number of variables (pairing and simple graphs).
    n: usize = 12,
    kind: GraphKind = GraphKind::Pairing,
    /// Number of constraints (trees).
    constraints: usize = 5,
    max_tries: usize = 10_000,
});

options!(ExactOpts, ExactConfig {
    /// Size of the sampled graph when no graph file is given.
    n: usize = 8,
    marginals: bool = false,
} paths {
    /// Graph file written by `graph`.
    graph
});

options!(BpOpts, BpConfig {
    n: usize = 8,
    tol: f64 = 1e-10,
    damping: f64 = 0.0,
    max_iter: usize = 1000,
    init: InitKind = InitKind::Uniform,
    marginals: bool = false,
} paths {
    graph
});

options!(CheckPosOpts, CheckPosConfig {
    trials: usize = 1000,
    ell_max: usize = 6,
    rows: usize = 3,
    cols: usize = 3,
    psi_samples: usize = 8,
    /// Also search point-mass kernels for a negative value.
    witness: bool = false,
});

options!(DecomposeOpts, DecomposeConfig {
    n: usize = 8,
    /// Number of pinned variables (the maximum with `theta-range`).
    theta: usize = 1,
    theta_range: bool = false,
    ell: usize = 2,
    /// Tuple samples when the symmetry average cannot be taken exactly.
    samples: usize = 1000,
    extremality: bool = false,
} paths {
    graph
});

options!(PopdynOpts, PopdynConfig {
    size: usize = 1000,
    sweeps: usize = 100,
    damping: f64 = 0.0,
    samples: usize = 100_000,
} paths {
    /// Write the population as a one-row kernel (JSON).
    population_out
});

options!(FreeEnergyOpts, FreeEnergyCliConfig {
    method: Method = Method::Exact,
    n: Vec<usize> = vec![8usize],
    graphs: usize = 10,
    size: usize = 1000,
    sweeps: usize = 100,
    damping: f64 = 0.0,
    samples: usize = 100_000,
    tol: f64 = 1e-10,
    max_iter: usize = 1000,
});

options!(ZeroTempOpts, ZeroTempConfig {
    d: usize = 3,
    /// Spins (maxcut).
    q: usize = 2,
    /// Clause length (maxsat).
    k: usize = 3,
    /// Inverse temperatures, or fugacities for `alpha`.
    grid: Vec<f64> = vec![2.0, 3.0, 4.0, 5.0],
    size: usize = 2000,
    sweeps: usize = 200,
    damping: f64 = 0.0,
    samples: usize = 200_000,
    stabilization_tol: f64 = 0.01,
    /// Simple graphs for the exhaustive comparison (0 to skip).
    brute_graphs: usize = 0,
    brute_n: usize = 16,
} paths {
    /// Write the Φ curve as CSV.
    csv
});

options!(InterpolateOpts, InterpolateConfig {
    n: usize = 12,
    eps: f64 = 0.1,
    t_grid: Vec<f64> = vec![0.0, 0.25, 0.5, 0.75, 1.0],
    graphs: usize = 200,
    kernel_kind: KernelKind = KernelKind::Uniform,
    kernel_rows: usize = 1,
    kernel_cols: usize = 4,
} paths {
    /// Kernel file (JSON, as written by `popdyn --population-out`).
    kernel
});

#[derive(Args, Debug)]
struct WithModel<O: Args> {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    opts: O,
}

#[derive(Args, Debug)]
struct NoModel<O: Args> {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    opts: O,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a factor graph and write it as structured text.
    Graph(WithModel<GraphOpts>),
    /// Exact log-partition function (and marginals) by enumeration.
    Exact(WithModel<ExactOpts>),
    /// Belief propagation and the Bethe free energy.
    Bp(WithModel<BpOpts>),
    /// Fuzz the positivity condition over random kernel pairs.
    CheckPos(WithModel<CheckPosOpts>),
    /// Pinning decomposition of the Boltzmann distribution.
    Decompose(WithModel<DecomposeOpts>),
    /// Population dynamics and the Bethe functional.
    Popdyn(WithModel<PopdynOpts>),
    /// ln Z / n by exact enumeration, BP or population dynamics.
    FreeEnergy(WithModel<FreeEnergyOpts>),
    /// Max q-cut per variable from the antiferromagnetic Potts model.
    Maxcut(NoModel<ZeroTempOpts>),
    /// Max k-SAT per variable.
    Maxsat(NoModel<ZeroTempOpts>),
    /// Independence ratio from the hard-core model.
    Alpha(NoModel<ZeroTempOpts>),
    /// Monotonicity of the interpolating family.
    Interpolate(WithModel<InterpolateOpts>),
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Defaults, then the config file, then flags.
fn resolve<C: DeserializeOwned>(
    command: &str,
    defaults: toml::Table,
    common: &Common,
    model: Option<&ModelArgs>,
    opts: &impl Serialize,
) -> CliResult<C> {
    let mut table = defaults;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)?;
        let file: toml::Table = toml::from_str(&text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        if let Some(c) = file.get("command").and_then(|c| c.as_str()) {
            if c != command {
                return invalid(format!("config is for '{c}', not '{command}'"));
            }
        }
        merge(&mut table, file);
    }
    let mut flags = toml::Table::try_from(opts).map_err(|e| CliError::Validation(e.to_string()))?;
    if let Some(s) = common.seed {
        flags.insert("seed".into(), toml::Value::Integer(s as i64));
    }
    if let Some(t) = common.threads {
        flags.insert("threads".into(), (t as i64).into());
    }
    if let Some(m) = model {
        let mt = m.to_table();
        if !mt.is_empty() {
            flags.insert("model".into(), mt.into());
        }
    }
    flags.insert("command".into(), command.into());
    merge(&mut table, flags);
    toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Validation(format!("configuration: {e}")))
}

fn need_seed(seed: Option<u64>, what: &str) -> CliResult<u64> {
    seed.ok_or_else(|| CliError::Validation(format!("{what} is stochastic and needs --seed")))
}

fn need_model(spec: &Option<ModelSpec>) -> CliResult<Model> {
    match spec {
        Some(s) => Ok(Model::from_spec(s)?),
        None => invalid("a model is required (--model and its parameters, or [model] in the config)"),
    }
}

struct Output<'a> {
    sink: Box<dyn Write + Send + 'a>,
    warnings: Vec<String>,
}

impl<'a> Output<'a> {
    fn new(sink: Box<dyn Write + Send + 'a>) -> Self {
        Output { sink, warnings: Vec::new() }
    }

    fn warn(&mut self, msg: String) {
        self.warnings.push(msg);
    }

    fn record(&mut self, kind: &str, body: &impl Serialize) -> CliResult<()> {
        let mut v = serde_json::to_value(body).map_err(|e| CliError::Validation(e.to_string()))?;
        match &mut v {
            serde_json::Value::Object(map) => {
                map.insert("record".into(), kind.into());
            }
            other => {
                let inner = std::mem::take(other);
                let mut map = serde_json::Map::new();
                map.insert("record".into(), kind.into());
                map.insert("value".into(), inner);
                *other = serde_json::Value::Object(map);
            }
        }
        writeln!(self.sink, "{}", serde_json::to_string(&v).expect("record serializes"))?;
        Ok(())
    }

    fn text(&mut self, s: &str) -> CliResult<()> {
        self.sink.write_all(s.as_bytes())?;
        Ok(())
    }
}

fn thread_count(requested: Option<usize>) -> CliResult<usize> {
    if let Some(t) = requested {
        return Ok(t);
    }
    match std::env::var("BETHE_LAB_THREADS") {
        Ok(s) => s.trim().parse().map_err(|_| CliError::Validation(format!("BETHE_LAB_THREADS='{s}' is not a number"))),
        Err(_) => Ok(0),
    }
}

/// Runs the command line `argv` (including the program name), writing records
/// to `stdout` and diagnostics to `stderr`. Returns the process exit code.
pub fn run_with<I, T>(argv: I, stdout: &mut (dyn Write + Send), stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    let mut warnings = Vec::new();
    let res = dispatch(cli.command, stdout, &mut warnings);
    for w in &warnings {
        let _ = writeln!(stderr, "warning: {w}");
    }
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.code()
        }
    }
}

/// [`run_with`] on the process's standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let code = run_with(argv, &mut std::io::stdout(), &mut std::io::stderr());
    let _ = std::io::stdout().flush();
    code
}

fn dispatch(command: Command, stdout: &mut (dyn Write + Send), warnings: &mut Vec<String>) -> CliResult<()> {
    macro_rules! go {
        ($name:expr, $cfg:ty, $a:ident, $model:expr, $body:expr) => {{
            let cfg: $cfg = resolve($name, <$cfg>::defaults(), &$a.common, $model, &$a.opts)?;
            let mut out = match (&$a.common.out, $name) {
                (_, "graph") | (None, _) => Output::new(Box::new(&mut *stdout)),
                (Some(p), _) => Output::new(Box::new(std::io::BufWriter::new(std::fs::File::create(p)?))),
            };
            if $a.common.emit == Some(Emit::Config) {
                let text = toml::to_string(&cfg).map_err(|e| CliError::Validation(e.to_string()))?;
                return out.text(&text);
            }
            let threads = thread_count(cfg.threads)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let graph_out = $a.common.out.clone();
            let res = pool.install(|| $body(&cfg, &mut out, graph_out));
            warnings.append(&mut out.warnings);
            res
        }};
    }
    match command {
        Command::Graph(a) => go!("graph", GraphConfig, a, Some(&a.model), cmd_graph),
        Command::Exact(a) => go!("exact", ExactConfig, a, Some(&a.model), cmd_exact),
        Command::Bp(a) => go!("bp", BpConfig, a, Some(&a.model), cmd_bp),
        Command::CheckPos(a) => go!("check-pos", CheckPosConfig, a, Some(&a.model), cmd_check_pos),
        Command::Decompose(a) => go!("decompose", DecomposeConfig, a, Some(&a.model), cmd_decompose),
        Command::Popdyn(a) => go!("popdyn", PopdynConfig, a, Some(&a.model), cmd_popdyn),
        Command::FreeEnergy(a) => {
            go!("free-energy", FreeEnergyCliConfig, a, Some(&a.model), cmd_free_energy)
        }
        Command::Maxcut(a) => go!("maxcut", ZeroTempConfig, a, None, cmd_maxcut),
        Command::Maxsat(a) => go!("maxsat", ZeroTempConfig, a, None, cmd_maxsat),
        Command::Alpha(a) => go!("alpha", ZeroTempConfig, a, None, cmd_alpha),
        Command::Interpolate(a) => {
            go!("interpolate", InterpolateConfig, a, Some(&a.model), cmd_interpolate)
        }
    }
}

fn load_or_sample(path: &Option<PathBuf>, spec: &Option<ModelSpec>, n: usize, seed: Option<u64>, what: &str) -> CliResult<FactorGraph> {
    match path {
        Some(p) => Ok(FactorGraph::from_text(&std::fs::read_to_string(p)?)?),
        None => {
            let model = need_model(spec)?;
            let seed = need_seed(seed, what)?;
            Ok(sample_pairing_graph(&model, n, &mut rng_from_seed(seed))?)
        }
    }
}

#[derive(Serialize)]
struct GraphRecord<'a> {
    path: &'a str,
    n: usize,
    m: usize,
    simple: bool,
    acyclic: bool,
}

fn cmd_graph(cfg: &GraphConfig, out: &mut Output, path: Option<PathBuf>) -> CliResult<()> {
    let model = need_model(&cfg.model)?;
    let seed = need_seed(cfg.seed, "graph")?;
    let mut rng = rng_from_seed(seed);
    let g = match cfg.kind {
        GraphKind::Pairing => sample_pairing_graph(&model, cfg.n, &mut rng)?,
        GraphKind::Simple => sample_simple_graph(&model, cfg.n, &mut rng, cfg.max_tries)?,
        GraphKind::Tree => sample_tree(&model, cfg.constraints, &mut rng)?,
    };
    match path {
        None => out.text(&g.to_text()),
        Some(p) => {
            std::fs::write(&p, g.to_text())?;
            let path = p.to_string_lossy();
            out.record("graph", &GraphRecord { path: &path, n: g.n(), m: g.m(), simple: g.is_simple(), acyclic: g.is_acyclic() })
        }
    }
}

#[derive(Serialize)]
struct ExactRecord {
    n: usize,
    m: usize,
    ln_z: f64,
    ln_z_per_n: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    marginals: Option<Vec<Vec<f64>>>,
}

fn cmd_exact(cfg: &ExactConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let g = load_or_sample(&cfg.graph, &cfg.model, cfg.n, cfg.seed, "sampling a graph")?;
    let oracle = Oracle::default();
    let ln_z = oracle.log_z(&g, None)?;
    let marginals = if cfg.marginals {
        Some((0..g.n()).map(|v| oracle.marginal(&g, v, None)).collect::<crate::Result<Vec<_>>>()?)
    } else {
        None
    };
    out.record("exact", &ExactRecord { n: g.n(), m: g.m(), ln_z, ln_z_per_n: ln_z / g.n() as f64, marginals })
}

#[derive(Serialize)]
struct BpRecord {
    n: usize,
    iterations: usize,
    residual: f64,
    converged: bool,
    damping: f64,
    bethe_ln_z: f64,
    bethe_per_n: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    marginals: Option<Vec<Vec<f64>>>,
}

fn cmd_bp(cfg: &BpConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let g = load_or_sample(&cfg.graph, &cfg.model, cfg.n, cfg.seed, "sampling a graph")?;
    let init = match cfg.init {
        InitKind::Uniform => Init::Uniform,
        InitKind::Random => Init::Random(need_seed(cfg.seed, "random initialization")?),
    };
    let (msgs, rep) = bp_solve(&g, init, cfg.damping, cfg.tol, cfg.max_iter)?;
    let bethe = bethe_free_energy(&g, &msgs)?;
    let marginals = if cfg.marginals {
        Some((0..g.n()).map(|v| marginal_from_messages(&g, v, &msgs)).collect::<crate::Result<Vec<_>>>()?)
    } else {
        None
    };
    out.record(
        "bp",
        &BpRecord {
            n: g.n(),
            iterations: rep.iterations,
            residual: rep.residual,
            converged: rep.converged,
            damping: rep.damping,
            bethe_ln_z: bethe,
            bethe_per_n: bethe / g.n().max(1) as f64,
            marginals,
        },
    )
}

#[derive(Serialize)]
struct WitnessRecord {
    found: bool,
    value: Option<f64>,
    ell: Option<usize>,
    mu: Option<KernelDoc>,
    mu2: Option<KernelDoc>,
}

fn cmd_check_pos(cfg: &CheckPosConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let model = need_model(&cfg.model)?;
    let seed = need_seed(cfg.seed, "check-pos")?;
    let pos = PosConfig { ell_max: cfg.ell_max, trials: cfg.trials, rows: cfg.rows, cols: cfg.cols, psi_samples: cfg.psi_samples };
    let rep = check_pos(&model, &pos, &mut substream(seed, 0))?;
    out.record("pos", &rep)?;
    if cfg.witness {
        let w = find_pos_witness(&model, cfg.ell_max, cfg.psi_samples, &mut substream(seed, 1))?;
        let rec = match w {
            Some(w) => WitnessRecord { found: true, value: Some(w.value), ell: Some(w.ell), mu: Some(w.mu.to_doc()), mu2: Some(w.mu2.to_doc()) },
            None => WitnessRecord { found: false, value: None, ell: None, mu: None, mu2: None },
        };
        out.record("pos_witness", &rec)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PartRecord {
    assignment: Vec<usize>,
    weight: f64,
    symmetry: f64,
}

#[derive(Serialize)]
struct DecompositionRecord {
    n: usize,
    pinned: Vec<usize>,
    parts: Vec<PartRecord>,
    residual_weight: f64,
    ell: usize,
    symmetry_unpinned: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    extremality: Option<crate::kernel::CutBounds>,
}

fn cmd_decompose(cfg: &DecomposeConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let seed = need_seed(cfg.seed, "decompose")?;
    let g = load_or_sample(&cfg.graph, &cfg.model, cfg.n, Some(seed), "decompose")?;
    let mu = Oracle::default().boltzmann(&g, None)?;
    let theta = if cfg.theta_range { Theta::Range(cfg.theta) } else { Theta::Fixed(cfg.theta) };
    let dec = decompose_measure(&mu, theta, &mut substream(seed, 1))?;
    let mut srng = substream(seed, 2);
    let mut parts = Vec::with_capacity(dec.parts.len());
    for (i, p) in dec.parts.iter().enumerate() {
        let cond = dec.conditional(&mu, i).ok_or(Error::ZeroWeight)?;
        let s = epsilon_symmetry(&cond, cfg.ell, cfg.samples, &mut srng)?;
        parts.push(PartRecord { assignment: p.assignment.clone(), weight: p.weight, symmetry: s.estimate });
    }
    let unpinned = epsilon_symmetry(&mu, cfg.ell, cfg.samples, &mut srng)?.estimate;
    let ext = if cfg.extremality { Some(extremality(&mu)?) } else { None };
    out.record(
        "decomposition",
        &DecompositionRecord {
            n: g.n(),
            pinned: dec.pinned.clone(),
            parts,
            residual_weight: dec.residual_weight,
            ell: cfg.ell,
            symmetry_unpinned: unpinned,
            extremality: ext,
        },
    )
}

#[derive(Serialize)]
struct PopdynRecord {
    size: usize,
    generation: usize,
    max_deviation_from_uniform: f64,
    estimate: f64,
    stderr: f64,
    draws: usize,
    rejected: usize,
}

fn cmd_popdyn(cfg: &PopdynConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let model = need_model(&cfg.model)?;
    let seed = need_seed(cfg.seed, "popdyn")?;
    let mut rng = rng_from_seed(seed);
    let pd = PopDynConfig { size: cfg.size, sweeps: cfg.sweeps, damping: cfg.damping };
    let pop = population_dynamics(&model, &pd, &mut rng)?;
    let kernel = pop.to_kernel();
    let b = bethe_functional(&KernelEnsemble::single(kernel.clone()), &model, cfg.samples, DEFAULT_REJECTION_CAP, &mut rng)?;
    if let Some(p) = &cfg.population_out {
        std::fs::write(p, serde_json::to_string(&kernel.to_doc()).expect("kernel serializes"))?;
    }
    out.record(
        "popdyn",
        &PopdynRecord {
            size: pop.len(),
            generation: pop.generation(),
            max_deviation_from_uniform: pop.max_deviation_from_uniform(),
            estimate: b.estimate,
            stderr: b.stderr,
            draws: b.draws,
            rejected: b.rejected,
        },
    )
}

fn cmd_free_energy(cfg: &FreeEnergyCliConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let model = need_model(&cfg.model)?;
    let seed = need_seed(cfg.seed, "free-energy")?;
    let fe = FreeEnergyConfig {
        method: cfg.method,
        n_list: cfg.n.clone(),
        graphs_per_n: cfg.graphs,
        popdyn: PopDynConfig { size: cfg.size, sweeps: cfg.sweeps, damping: cfg.damping },
        samples: cfg.samples,
        bp_tol: cfg.tol,
        bp_max_iter: cfg.max_iter,
        bp_damping: cfg.damping,
    };
    for r in free_energy_report(&model, &fe, seed)? {
        out.record("free_energy", &r)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ZeroTempRecord<'a> {
    quantity: &'a str,
    estimate: f64,
    param: f64,
    differences: &'a [(f64, f64)],
    stabilized: bool,
}

#[derive(Serialize)]
struct BruteForceRecord<'a> {
    quantity: &'a str,
    graphs: usize,
    n: usize,
    mean: f64,
    stderr: f64,
    relative_gap: f64,
}

fn zero_temp_output(
    quantity: &str,
    cfg: &ZeroTempConfig,
    est: &ZeroTempEstimate,
    out: &mut Output,
    brute: impl Fn(u64) -> crate::Result<f64> + Sync,
) -> CliResult<()> {
    if !est.stabilized {
        out.warn(format!("{quantity} differences did not stabilize within {}", cfg.stabilization_tol));
    }
    out.record(
        "zero_temperature",
        &ZeroTempRecord { quantity, estimate: est.estimate, param: est.param, differences: &est.differences, stabilized: est.stabilized },
    )?;
    if let Some(p) = &cfg.csv {
        std::fs::write(p, est.curve.to_csv())?;
    }
    if cfg.brute_graphs > 0 {
        use rayon::prelude::*;
        let vals = (0..cfg.brute_graphs as u64).into_par_iter().map(&brute).collect::<crate::Result<Vec<f64>>>()?;
        let (mean, stderr) = mean_stderr(&vals);
        out.record(
            "brute_force",
            &BruteForceRecord {
                quantity,
                graphs: vals.len(),
                n: cfg.brute_n,
                mean,
                stderr,
                relative_gap: (est.estimate - mean).abs() / mean.abs(),
            },
        )?;
    }
    Ok(())
}

fn phi_config(cfg: &ZeroTempConfig) -> PhiConfig {
    PhiConfig {
        popdyn: PopDynConfig { size: cfg.size, sweeps: cfg.sweeps, damping: cfg.damping },
        samples: cfg.samples,
        stabilization_tol: cfg.stabilization_tol,
    }
}

/// Seed of the `i`-th brute-force comparison graph.
fn brute_graph_seed(seed: u64, i: u64) -> crate::numeric::SimRng {
    substream(seed ^ 0x9e37_79b9_7f4a_7c15, i)
}

fn cmd_maxcut(cfg: &ZeroTempConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let seed = need_seed(cfg.seed, "maxcut")?;
    let est = max_qcut_estimate(cfg.d, cfg.q, &cfg.grid, &phi_config(cfg), seed)?;
    let model = Model::potts(cfg.q, cfg.d, 1.0)?;
    zero_temp_output("max_cut", cfg, &est, out, |i| {
        let g = sample_simple_graph(&model, cfg.brute_n, &mut brute_graph_seed(seed, i), 100_000)?;
        Ok(brute_force_max_cut(&g)? as f64 / cfg.brute_n as f64)
    })
}

fn cmd_maxsat(cfg: &ZeroTempConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let seed = need_seed(cfg.seed, "maxsat")?;
    let est = max_ksat_estimate(cfg.d, cfg.k, &cfg.grid, &phi_config(cfg), seed)?;
    let model = Model::ksat(cfg.k, cfg.d, 1.0)?;
    zero_temp_output("max_sat", cfg, &est, out, |i| {
        let g = sample_simple_graph(&model, cfg.brute_n, &mut brute_graph_seed(seed, i), 100_000)?;
        Ok(brute_force_max_satisfied(&g)? as f64 / cfg.brute_n as f64)
    })
}

fn cmd_alpha(cfg: &ZeroTempConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let seed = need_seed(cfg.seed, "alpha")?;
    let est = independence_ratio_estimate(cfg.d, &cfg.grid, &phi_config(cfg), seed)?;
    let model = Model::hardcore(cfg.d, 1.0)?;
    zero_temp_output("independence_ratio", cfg, &est, out, |i| {
        let g = sample_simple_graph(&model, cfg.brute_n, &mut brute_graph_seed(seed, i), 100_000)?;
        Ok(brute_force_independence_number(&g)? as f64 / cfg.brute_n as f64)
    })
}

#[derive(Serialize)]
struct InterpolationSummary {
    n: usize,
    graphs: usize,
    slope: f64,
    flagged: bool,
}

fn cmd_interpolate(cfg: &InterpolateConfig, out: &mut Output, _: Option<PathBuf>) -> CliResult<()> {
    let model = need_model(&cfg.model)?;
    let seed = need_seed(cfg.seed, "interpolate")?;
    let kappa = match &cfg.kernel {
        Some(p) => {
            let doc: KernelDoc = serde_json::from_str(&std::fs::read_to_string(p)?)
                .map_err(|e| CliError::Validation(format!("kernel file: {e}")))?;
            Kernel::from_doc(&doc)?
        }
        None => match cfg.kernel_kind {
            KernelKind::Uniform => Kernel::uniform(model.q(), cfg.kernel_cols),
            KernelKind::Random => Kernel::random(model.q(), cfg.kernel_rows, cfg.kernel_cols, &mut substream(seed, 1)),
        },
    };
    let icfg = InterpolationConfig { n: cfg.n, eps: cfg.eps, ..Default::default() };
    let rep = interpolation_monotonicity_check(&model, &kappa, &cfg.t_grid, cfg.graphs, &icfg, seed)?;
    for p in &rep.points {
        out.record("interpolation_point", p)?;
    }
    for s in &rep.steps {
        out.record("interpolation_step", s)?;
    }
    out.record("interpolation", &InterpolationSummary { n: cfg.n, graphs: cfg.graphs, slope: rep.slope, flagged: rep.flagged })
}

/// Parses a model description in the configuration format.
pub fn model_from_toml(text: &str) -> crate::Result<Model> {
    Model::from_spec(&ModelSpec::from_toml(text)?)
}
