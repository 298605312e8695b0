//! `smoothcop` command-line front end.
//!
//! Exit codes: 0 success, 2 parse errors, 3 numeric-domain errors, 4 I/O errors.
//! Failures are reported on stderr as a JSON object `{"error": kind, "message": ...}`.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use smoothcop::benchmark::{sweep, ExperimentConfig, SweepAxis, SweepRow};
use smoothcop::estimators::{Estimator, EstimatorKind, SmoothSpec};
use smoothcop::margins::MarginFamily;
use smoothcop::models::{CopulaFamily, CopulaModel};
use smoothcop::ranks::ObservationMatrix;
use smoothcop::sequential::{equivalence_check, ProcessGrid};

#[derive(Parser)]
#[command(name = "smoothcop", version, about = "Smooth nonparametric copula estimation")]
struct Cli {
    /// Worker threads for benchmark and seqcheck (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true, env = "SMOOTHCOP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate estimators on a CSV sample.
    Estimate(EstimateArgs),
    /// Draw a sample from a copula model.
    Sample(SampleArgs),
    /// Compare estimators by integrated squared bias, variance and MSE.
    Benchmark(BenchmarkArgs),
    /// Distance between the smoothed and classical sequential processes across sample sizes.
    Seqcheck(SeqcheckArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// CSV file with a header row and one numeric column per dimension.
    #[arg(long)]
    input: PathBuf,
    /// Estimator: ecdf, ebc, binomial:pilot=<indep|ebc>, beta-binomial:rho=<r>:pilot=<..>,
    /// beta:rho=<r>:pilot=<..> or fixed-pilot=<model>. Repeatable.
    #[arg(long = "estimator", required = true)]
    estimators: Vec<String>,
    /// Evaluation point as comma-separated coordinates. Repeatable.
    #[arg(long = "at")]
    at: Vec<String>,
    /// Evaluate on the product grid {0, 1/(G-1), ..., 1}^d.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    /// Model, e.g. clayton:tau=0.5:d=2.
    #[arg(long)]
    model: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// CSV output (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// JSON mirror of the table, with relative efficiencies.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SeqcheckArgs {
    #[arg(long)]
    model: String,
    /// Smooth estimator (ebc is accepted as binomial:pilot=indep).
    #[arg(long)]
    estimator: String,
    /// Increasing sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    /// Number of equally spaced s and t values in [0, 1].
    #[arg(long, default_value_t = 11)]
    st_points: usize,
    /// Per-coordinate u levels; the u grid is their d-fold product.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
    u_levels: Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Parse(String),
    Domain(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn to_json(&self) -> String {
        let (kind, message) = match self {
            CliError::Parse(m) => ("parse", m),
            CliError::Domain(m) => ("domain", m),
            CliError::Io(m) => ("io", m),
        };
        serde_json::json!({ "error": kind, "message": message }).to_string()
    }
}

impl From<smoothcop::Error> for CliError {
    fn from(e: smoothcop::Error) -> Self {
        match e {
            smoothcop::Error::Parse(_) => CliError::Parse(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

type CliResult<T> = std::result::Result<T, CliError>;

fn warn(value: serde_json::Value) {
    eprintln!("{value}");
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_rows(path: Option<&Path>, header: &str, rows: &[String]) -> CliResult<()> {
    let shown = path.unwrap_or(Path::new("<stdout>"));
    let mut out = open_output(path)?;
    let mut body = String::with_capacity(rows.len() * 64);
    body.push_str(header);
    body.push('\n');
    for row in rows {
        body.push_str(row);
        body.push('\n');
    }
    out.write_all(body.as_bytes()).and_then(|_| out.flush()).map_err(|e| io_error(shown, e))
}

fn parse_estimator(s: &str) -> CliResult<EstimatorKind> {
    Ok(s.parse::<EstimatorKind>()?)
}

/// Clamps a too-large rho to the sample size, with a warning.
fn clamp_for(kind: EstimatorKind, n: usize) -> EstimatorKind {
    let (clamped, changed) = kind.clamped(n);
    if changed {
        warn(serde_json::json!({
            "warning": "rho clamped to the sample size",
            "requested": kind.to_string(),
            "used": clamped.to_string(),
            "n": n,
        }));
    }
    clamped
}

fn read_sample(path: &Path) -> CliResult<ObservationMatrix> {
    let file = File::open(path).map_err(|e| io_error(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let d = reader.headers().map_err(|e| csv_error(path, e))?.len();
    let mut values = Vec::new();
    let mut n = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        for field in record.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Parse(format!("{}: row {}: '{field}' is not a number", path.display(), line + 1))
            })?;
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(CliError::Parse(format!("{}: no data rows", path.display())));
    }
    Ok(ObservationMatrix::from_row_major(n, d, values)?)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        io_error(path, e)
    } else {
        CliError::Parse(format!("{}: {e}", path.display()))
    }
}

fn parse_point(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|_| CliError::Parse(format!("invalid coordinate '{c}' in '{s}'"))))
        .collect()
}

fn product_grid(levels: &[f64], d: usize) -> Vec<Vec<f64>> {
    let mut points = vec![vec![]];
    for _ in 0..d {
        points = points
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                levels.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    points
}

fn estimate(args: &EstimateArgs) -> CliResult<()> {
    let sample = read_sample(&args.input)?;
    let (n, d) = (sample.n(), sample.d());
    let mut points: Vec<Vec<f64>> = args.at.iter().map(|s| parse_point(s)).collect::<CliResult<_>>()?;
    if let Some(g) = args.grid {
        if g < 2 {
            return Err(CliError::Parse("--grid needs at least 2 points per axis".into()));
        }
        let levels: Vec<f64> = (0..g).map(|k| k as f64 / (g - 1) as f64).collect();
        points.extend(product_grid(&levels, d));
    }
    if points.is_empty() {
        return Err(CliError::Parse("give evaluation points with --at or --grid".into()));
    }
    let mut rows = Vec::new();
    let mut warned = false;
    for spec in &args.estimators {
        let kind = clamp_for(parse_estimator(spec)?, n);
        let est = Estimator::from_sample(&sample, kind)?;
        if est.ties_present() && !warned {
            let columns: Vec<usize> =
                est.ranks().ties_present().iter().enumerate().filter(|(_, &t)| t).map(|(j, _)| j + 1).collect();
            warn(serde_json::json!({
                "warning": "ties in the sample; smooth estimators may not have uniform margins",
                "columns": columns,
            }));
            warned = true;
        }
        let label = kind.to_string();
        for u in &points {
            let value = est.evaluate(u)?;
            let coords: Vec<String> = u.iter().map(|&x| num(x)).collect();
            rows.push(format!("{},{label},{}", coords.join(","), num(value)));
        }
    }
    let header: Vec<String> = (1..=d).map(|j| format!("u{j}")).collect();
    write_rows(args.output.as_deref(), &format!("{},estimator,value", header.join(",")), &rows)
}

fn sample(args: &SampleArgs) -> CliResult<()> {
    let model: CopulaModel = args.model.parse()?;
    let x = model.sample(args.n, args.seed)?;
    let rows: Vec<String> = x.rows().map(|r| r.iter().map(|&v| num(v)).collect::<Vec<_>>().join(",")).collect();
    let header: Vec<String> = (1..=model.d()).map(|j| format!("x{j}")).collect();
    write_rows(args.output.as_deref(), &header.join(","), &rows)
}

/// Benchmark configuration file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchmarkFile {
    model: String,
    n: usize,
    reps: usize,
    nodes: usize,
    seed: u64,
    estimators: Vec<String>,
    #[serde(default)]
    sweep: Option<SweepFile>,
    /// Index of the estimator that relative efficiencies refer to (default 0).
    #[serde(default)]
    reference: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    axis: String,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct BenchmarkJson<'a> {
    axis: SweepAxis,
    model: &'a str,
    reps: usize,
    nodes: usize,
    seed: u64,
    reference: usize,
    rows: &'a [SweepRow],
}

fn with_rho(kind: EstimatorKind, rho: f64) -> EstimatorKind {
    match kind {
        EstimatorKind::Smooth(spec) => {
            let margin = match spec.margin {
                MarginFamily::ScaledBetaBinomial { .. } => MarginFamily::ScaledBetaBinomial { rho },
                MarginFamily::Beta { .. } => MarginFamily::Beta { rho },
                MarginFamily::ScaledBinomial => MarginFamily::ScaledBinomial,
            };
            EstimatorKind::Smooth(SmoothSpec { margin, ..spec })
        }
        other => other,
    }
}

fn expand(file: &BenchmarkFile) -> CliResult<(SweepAxis, Vec<ExperimentConfig>)> {
    let model: CopulaModel = file.model.parse()?;
    let estimators: Vec<EstimatorKind> =
        file.estimators.iter().map(|s| parse_estimator(s)).collect::<CliResult<_>>()?;
    let base = ExperimentConfig { model, n: file.n, reps: file.reps, nodes: file.nodes, estimators, seed: file.seed };
    let Some(sweep) = &file.sweep else {
        return Ok((SweepAxis::N, vec![base]));
    };
    let axis: SweepAxis = sweep.axis.parse()?;
    if sweep.values.is_empty() {
        return Err(CliError::Parse("sweep values are empty".into()));
    }
    let configs = sweep
        .values
        .iter()
        .map(|&v| -> CliResult<ExperimentConfig> {
            let mut c = base.clone();
            match axis {
                SweepAxis::N => {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(CliError::Parse(format!("sample size {v} is not a positive integer")));
                    }
                    c.n = v as usize;
                }
                SweepAxis::Tau => {
                    let family = model.family();
                    if family == CopulaFamily::Independence {
                        return Err(CliError::Domain("a tau sweep needs a parametric family".into()));
                    }
                    c.model = CopulaModel::from_tau(family, v, model.d())?;
                }
                SweepAxis::Rho => c.estimators = c.estimators.iter().map(|&k| with_rho(k, v)).collect(),
            }
            Ok(c)
        })
        .collect::<CliResult<_>>()?;
    Ok((axis, configs))
}

fn benchmark(args: &BenchmarkArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| io_error(&args.config, e))?;
    let file: BenchmarkFile =
        serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", args.config.display())))?;
    let (axis, mut configs) = expand(&file)?;
    for c in &mut configs {
        c.estimators = c.estimators.iter().map(|&k| clamp_for(k, c.n)).collect();
    }
    let mut rows = sweep(&configs, axis, file.reference)?;
    // Report the requested axis values rather than ones recomputed from fitted parameters.
    if let Some(sw) = &file.sweep {
        let per_config = file.estimators.len();
        for (row, value) in rows.iter_mut().zip(sw.values.iter().flat_map(|&v| std::iter::repeat_n(v, per_config))) {
            row.axis = value;
        }
    }
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            let axis_value = if axis == SweepAxis::N { format!("{}", r.axis as usize) } else { num(r.axis) };
            format!(
                "{axis_value},{},{},{},{},{},{},{}",
                r.estimator,
                num(r.isb),
                num(r.ivar),
                num(r.imse),
                num(r.se_isb),
                num(r.se_ivar),
                num(r.se_imse)
            )
        })
        .collect();
    write_rows(args.output.as_deref(), "axis,estimator,isb,ivar,imse,se_isb,se_ivar,se_imse", &lines)?;
    if let Some(path) = &args.json {
        let doc = BenchmarkJson {
            axis,
            model: &file.model,
            reps: file.reps,
            nodes: file.nodes,
            seed: file.seed,
            reference: file.reference,
            rows: &rows,
        };
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))?;
    }
    Ok(())
}

fn seqcheck(args: &SeqcheckArgs) -> CliResult<()> {
    let model: CopulaModel = args.model.parse()?;
    let spec = match parse_estimator(&args.estimator)? {
        EstimatorKind::Smooth(spec) => spec,
        EstimatorKind::EmpiricalBeta => {
            SmoothSpec::new(MarginFamily::ScaledBinomial, smoothcop::estimators::SurvivalCopula::Independence)
        }
        EstimatorKind::Empirical => {
            return Err(CliError::Domain("seqcheck compares a smooth estimator with ecdf; ecdf is not smooth".into()))
        }
    };
    if args.st_points < 2 {
        return Err(CliError::Parse("--st-points needs at least 2".into()));
    }
    let st: Vec<f64> = (0..args.st_points).map(|k| k as f64 / (args.st_points - 1) as f64).collect();
    let grid = ProcessGrid::new(&st, &st, product_grid(&args.u_levels, model.d()))?;
    let rows = equivalence_check(&model, spec, &args.n, args.reps, &grid, args.seed)?;
    let lines: Vec<String> =
        rows.iter().map(|r| format!("{},{},{},{}", r.n, num(r.median_sup), num(r.q25), num(r.q75))).collect();
    write_rows(args.output.as_deref(), "n,median_sup,q25,q75", &lines)
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Parse("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Domain(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Sample(a) => sample(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Seqcheck(a) => seqcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            let err = CliError::Parse(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.code());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code())
        }
    }
}
