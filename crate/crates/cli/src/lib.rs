//! Front end for convergence studies, identity checks, plan dumps and single
//! grid solves. Every command writes to caller-supplied streams and returns
//! a process exit code, so the binary is a thin argument parser on top.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use sparsecombine::combine::{
    ho_plan, run_study, standard_plan, ConvergenceRecord, Method, StudySettings,
    DEFAULT_NODE_BUDGET,
};
use sparsecombine::pde::{solve_poisson, SolverReport};
use sparsecombine::rational::{self, Rational};
use sparsecombine::verify::{self, IdentityReport};
use sparsecombine::{builtin_sine_problem, Error, Exec, LevelIndex, Point};

pub mod exit {
    pub const OK: i32 = 0;
    pub const VERIFY_FAILED: i32 = 1;
    pub const BUDGET_EXCEEDED: i32 = 2;
    pub const BAD_CONFIG: i32 = 3;
}

pub const CSV_HEADER: [&str; 8] = [
    "method",
    "d",
    "n",
    "dof_unique",
    "dof_total",
    "value",
    "surplus",
    "runtime_s",
];

/// Evaluation point: `auto` is `(0.25, 0.5, 0.25, ...)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum EvalPoint {
    #[default]
    Auto,
    At(Vec<f64>),
}

impl EvalPoint {
    pub fn resolve(&self, dim: usize) -> Result<Point, String> {
        match self {
            EvalPoint::Auto => Ok(Point::reference(dim)),
            EvalPoint::At(c) if c.len() != dim => Err(format!(
                "point has {} coordinates but the study is {dim}-dimensional",
                c.len()
            )),
            EvalPoint::At(c) => Point::new(c.clone()).map_err(|e| e.to_string()),
        }
    }
}

impl FromStr for EvalPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(EvalPoint::Auto);
        }
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad coordinate {t:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(EvalPoint::At)
    }
}

impl fmt::Display for EvalPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalPoint::Auto => f.write_str("auto"),
            EvalPoint::At(c) => {
                let parts: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    /// All hardware threads.
    #[default]
    Auto,
    Threads(usize),
}

impl FromStr for Parallelism {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Parallelism::Auto);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("thread count must be at least 1".into()),
            Ok(n) => Ok(Parallelism::Threads(n)),
            Err(_) => Err(format!("expected a thread count or \"auto\", got {s:?}")),
        }
    }
}

impl fmt::Display for Parallelism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parallelism::Auto => f.write_str("auto"),
            Parallelism::Threads(n) => write!(f, "{n}"),
        }
    }
}

/// Runs `f` under the requested parallelism. One thread means the
/// sequential code path; more than one builds a dedicated pool.
pub fn with_parallelism<R: Send>(p: Parallelism, f: impl FnOnce(Exec) -> R + Send) -> Result<R, String> {
    match p {
        Parallelism::Threads(1) => Ok(f(Exec::Sequential)),
        #[cfg(feature = "parallel")]
        Parallelism::Threads(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| e.to_string())?;
            Ok(pool.install(|| f(Exec::Parallel)))
        }
        #[cfg(not(feature = "parallel"))]
        Parallelism::Threads(_) => Ok(f(Exec::Sequential)),
        Parallelism::Auto => Ok(f(Exec::default())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Accepts plain integers and float notation such as `5e7`.
pub fn parse_budget(s: &str) -> Result<u128, String> {
    if let Ok(v) = s.parse::<u128>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("bad node budget {s:?}"))?;
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v < 1e38 {
        Ok(v as u128)
    } else {
        Err(format!("bad node budget {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub method: Method,
    pub dim: usize,
    pub n_min: u32,
    pub n_max: u32,
    pub eval_point: EvalPoint,
    pub level_shift: u32,
    pub node_budget: u128,
    pub parallelism: Parallelism,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Random extra points (drawn from `seed`) for a max-over-points surplus;
    /// zero keeps the single-point surplus.
    pub surplus_points: usize,
}

impl StudyConfig {
    pub fn new(method: Method, dim: usize, n_min: u32, n_max: u32) -> Self {
        StudyConfig {
            method,
            dim,
            n_min,
            n_max,
            eval_point: EvalPoint::Auto,
            level_shift: 1,
            node_budget: DEFAULT_NODE_BUDGET,
            parallelism: Parallelism::Auto,
            format: Format::Csv,
            out: None,
            seed: verify::DEFAULT_SEED,
            surplus_points: 0,
        }
    }

    /// Checks the configuration and builds the core study settings.
    pub fn settings(&self, exec: Exec) -> Result<StudySettings, String> {
        if self.dim == 0 {
            return Err("dimension must be at least 1".into());
        }
        if self.n_min > self.n_max {
            return Err(format!("n-min {} exceeds n-max {}", self.n_min, self.n_max));
        }
        if self.level_shift > 1 {
            return Err(format!("level shift must be 0 or 1, got {}", self.level_shift));
        }
        if self.node_budget == 0 {
            return Err("node budget must be positive".into());
        }
        if self.method == Method::Splitting2d && self.dim != 2 {
            return Err(format!("SPLIT2D needs dim 2, got {}", self.dim));
        }
        if !self.method.is_sparse() && self.n_min == 0 {
            return Err(format!("{} needs n-min >= 1", self.method));
        }
        let mut s = StudySettings::new(self.method, self.dim, self.n_min, self.n_max);
        s.point = self.eval_point.resolve(self.dim)?;
        s.probe_points = probe_points(self.dim, self.surplus_points, self.seed);
        s.level_shift = self.level_shift;
        s.node_budget = self.node_budget;
        s.exec = exec;
        Ok(s)
    }
}

fn probe_points(dim: usize, count: usize, seed: u64) -> Vec<Point> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Point::new((0..dim).map(|_| rng.gen_range(0.0..=1.0)).collect()).unwrap())
        .collect()
}

/// Records of a study and why it stopped early, if it did.
#[derive(Debug)]
pub struct StudyRun {
    pub records: Vec<ConvergenceRecord>,
    pub error: Option<Error>,
    pub point: Vec<f64>,
}

pub fn run_configured_study(cfg: &StudyConfig) -> Result<StudyRun, String> {
    with_parallelism(cfg.parallelism, |exec| {
        let settings = cfg.settings(exec)?;
        let p = builtin_sine_problem(cfg.dim);
        let outcome = run_study(&p, &settings);
        Ok(StudyRun {
            records: outcome.records,
            error: outcome.error,
            point: settings.point.coords().to_vec(),
        })
    })?
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(records: &[ConvergenceRecord], w: W) -> io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.write_record([
            r.method.to_string(),
            r.d.to_string(),
            r.n.to_string(),
            r.dof_unique.to_string(),
            r.dof_total.to_string(),
            format_float(r.value),
            r.surplus.map(format_float).unwrap_or_default(),
            format_float(r.runtime_s),
        ])?;
    }
    out.flush()
}

#[derive(Serialize)]
struct StudyMetadata<'a> {
    problem: String,
    method: Method,
    d: usize,
    n_min: u32,
    n_max: u32,
    point: &'a [f64],
    level_shift: u32,
    node_budget: String,
    parallelism: String,
    seed: u64,
    surplus_points: usize,
    stopped: Option<String>,
}

#[derive(Serialize)]
struct StudyDocument<'a> {
    metadata: StudyMetadata<'a>,
    records: &'a [ConvergenceRecord],
}

fn write_json<W: Write>(cfg: &StudyConfig, run: &StudyRun, mut w: W) -> io::Result<()> {
    let doc = StudyDocument {
        metadata: StudyMetadata {
            problem: format!("sine{}", cfg.dim),
            method: cfg.method,
            d: cfg.dim,
            n_min: cfg.n_min,
            n_max: cfg.n_max,
            point: &run.point,
            level_shift: cfg.level_shift,
            node_budget: cfg.node_budget.to_string(),
            parallelism: cfg.parallelism.to_string(),
            seed: cfg.seed,
            surplus_points: cfg.surplus_points,
            stopped: run.error.as_ref().map(|e| e.to_string()),
        },
        records: &run.records,
    };
    serde_json::to_writer_pretty(&mut w, &doc).map_err(io::Error::other)?;
    writeln!(w)
}

fn open_output<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> io::Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

/// Runs a study and writes its records. Records completed before a budget
/// stop are still written, and the exit code is then
/// [`exit::BUDGET_EXCEEDED`].
pub fn cmd_study(cfg: &StudyConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let run = match run_configured_study(cfg) {
        Ok(run) => run,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return exit::BAD_CONFIG;
        }
    };
    let _ = writeln!(
        stderr,
        "study {} d={} n={}..{} point={:?} level_shift={} budget={}",
        cfg.method, cfg.dim, cfg.n_min, cfg.n_max, run.point, cfg.level_shift, cfg.node_budget
    );
    let written = open_output(&cfg.out, stdout).and_then(|mut w| {
        match cfg.format {
            Format::Csv => write_csv(&run.records, &mut w)?,
            Format::Json => write_json(cfg, &run, &mut w)?,
        }
        w.flush()
    });
    if let Err(e) = written {
        let _ = writeln!(stderr, "error: cannot write output: {e}");
        return exit::BAD_CONFIG;
    }
    match &run.error {
        None => exit::OK,
        Some(e) => {
            let _ = writeln!(stderr, "error: {e}");
            match e.root() {
                Error::BudgetExceeded { .. } => exit::BUDGET_EXCEEDED,
                Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => exit::BAD_CONFIG,
                _ => exit::VERIFY_FAILED,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub d_max: usize,
    pub trials: usize,
    pub seed: u64,
    /// Test hook: multiplies `alpha_1` by this factor in every dimension.
    pub perturb_alpha1: Option<Rational>,
}

impl VerifyConfig {
    pub fn new(d_max: usize) -> Self {
        VerifyConfig {
            d_max,
            trials: 100,
            seed: verify::DEFAULT_SEED,
            perturb_alpha1: None,
        }
    }
}

pub fn run_verify(cfg: &VerifyConfig) -> Vec<IdentityReport> {
    let perturb = cfg.perturb_alpha1.clone();
    verify::run_identity_checks(cfg.d_max, cfg.trials, cfg.seed, move |d| {
        let mut w = sparsecombine::combine::extrapolation_weights(d);
        if let Some(f) = &perturb {
            w[1] = &w[1] * f;
        }
        w
    })
}

/// Prints one table row per identity and dimension; exit 1 if any fails.
pub fn cmd_verify(cfg: &VerifyConfig, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    if cfg.d_max == 0 || cfg.d_max > 32 {
        let _ = writeln!(stderr, "error: d-max must be in 1..=32, got {}", cfg.d_max);
        return exit::BAD_CONFIG;
    }
    let reports = run_verify(cfg);
    let _ = writeln!(stdout, "# seed {} trials {}", cfg.seed, cfg.trials);
    let _ = writeln!(stdout, "{:<20} {:>3} {:>24} {:>12} pass", "identity", "d", "defect", "float");
    for r in &reports {
        let float = r.float_defect.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            stdout,
            "{:<20} {:>3} {:>24} {:>12} {}",
            r.identity.to_string(),
            r.d,
            rational::to_fraction_string(&r.max_abs_defect),
            float,
            r.pass
        );
    }
    let failed = reports.iter().filter(|r| !r.pass).count();
    if failed == 0 {
        exit::OK
    } else {
        let _ = writeln!(stderr, "{failed} identity check(s) failed");
        exit::VERIFY_FAILED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlanKind {
    Standard,
    Ho,
}

/// Prints the plan dump as JSON, with the exact coefficient sum and, for
/// higher-order plans, the accumulated coefficient per `|l|_1`.
pub fn cmd_plan(d: usize, n: u32, kind: PlanKind, level_shift: u32, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    if d == 0 || d > 16 {
        let _ = writeln!(stderr, "error: dimension must be in 1..=16, got {d}");
        return exit::BAD_CONFIG;
    }
    let plan = match kind {
        PlanKind::Standard => standard_plan(d, n),
        PlanKind::Ho => ho_plan(d, n),
    }
    .shifted(level_shift);
    let mut dump = plan.to_dump();
    if kind == PlanKind::Ho {
        dump.level_masses = Some(
            plan.level_masses()
                .iter()
                .map(|(k, v)| (*k, rational::to_fraction_string(v)))
                .collect(),
        );
    }
    match serde_json::to_writer_pretty(&mut *stdout, &dump) {
        Ok(()) => {
            let _ = writeln!(stdout);
            exit::OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit::BAD_CONFIG
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolveSummary {
    pub level: LevelIndex,
    pub nodes: u128,
    pub residual_inf: f64,
    pub solve_seconds: f64,
    pub point: Vec<f64>,
    pub value: f64,
    pub exact: f64,
    pub error: f64,
}

/// Solves the sine problem on one grid and reports the value at a point.
/// With `out` set, the grid is also written in the binary cache format.
pub fn cmd_solve(
    levels: &[u32],
    point: &EvalPoint,
    budget: u128,
    out: Option<&PathBuf>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32 {
    if levels.is_empty() {
        let _ = writeln!(stderr, "error: at least one level is required");
        return exit::BAD_CONFIG;
    }
    let level = LevelIndex::new(levels.to_vec());
    if level.node_count() > budget {
        let _ = writeln!(
            stderr,
            "error: {level} has {} nodes, above the budget of {budget}",
            level.node_count()
        );
        return exit::BUDGET_EXCEEDED;
    }
    let x = match point.resolve(level.dim()) {
        Ok(x) => x,
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            return exit::BAD_CONFIG;
        }
    };
    let p = builtin_sine_problem(level.dim());
    let (grid, report): (_, SolverReport) = match solve_poisson(&p, &level) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit::BAD_CONFIG;
        }
    };
    let value = grid.eval(&x).expect("point validated");
    let exact = p.exact(x.coords()).expect("sine problem has an exact solution");
    if let Some(path) = out {
        let written = File::create(path).and_then(|f| {
            let mut w = BufWriter::new(f);
            grid.write_to(&mut w)?;
            w.flush()
        });
        if let Err(e) = written {
            let _ = writeln!(stderr, "error: cannot write {}: {e}", path.display());
            return exit::BAD_CONFIG;
        }
    }
    let summary = SolveSummary {
        nodes: level.node_count(),
        level,
        residual_inf: report.residual_inf,
        solve_seconds: report.solve_seconds,
        point: x.coords().to_vec(),
        value,
        exact,
        error: (value - exact).abs(),
    };
    let _ = serde_json::to_writer_pretty(&mut *stdout, &summary);
    let _ = writeln!(stdout);
    exit::OK
}

/// Parses `p/q`, an integer, or a plain decimal such as `1.0001` into an
/// exact rational.
pub fn parse_exact(s: &str) -> Result<Rational, String> {
    let s = s.trim();
    if s.contains('/') {
        return rational::parse_fraction(s).map_err(|e| e.to_string());
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1i64, rest),
        None => (1, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    let digits = format!("{int}{frac}");
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("not a decimal number: {s:?}"));
    }
    let num: num_bigint::BigInt = digits.parse().map_err(|_| format!("not a decimal number: {s:?}"))?;
    let den = num_bigint::BigInt::from(10u32).pow(frac.len() as u32);
    Ok(Rational::new(num * sign, den))
}
