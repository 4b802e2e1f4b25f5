use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use citest::harness::{
    self, level_violations, parse_list, parse_model, write_records, ExperimentConfig, Record,
};
use citest::hypothesis::{asymptotic_test, df_estimation_test, exact_test, Reference, TestKind, TestOutcome};
use citest::{ConditionalTable, Dataset, Error, LabelSpace, ResamplePlan, Result, Scheme, SeedStream};

#[derive(Parser)]
#[command(name = "citest", version, about = "Conditional independence tests for discrete data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rejection rates over models x lambdas x fracs x schemes x tests.
    LevelPower(ExperimentArgs),
    /// Mean of 2n*CMI under the null against its CP estimate and the asymptotic df.
    DfMean(ExperimentArgs),
    /// Quantiles of 2n*CMI under the null against the reference laws.
    Qq(ExperimentArgs),
    /// Ratio of CP over CR rejection rates.
    SchemeRatio(ExperimentArgs),
    /// n*min p_ci and n*min p for each model.
    Table1(ExperimentArgs),
    /// Run one test on a CSV dataset with columns x,y,z.
    Test(TestArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV path (stdout when absent).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated model names: YtoXZ, XZtoY, XYtoZ, XOR.
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    fracs: Option<String>,
    /// Resamples per test.
    #[arg(long = "b", alias = "B")]
    b: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Comma-separated subset of cp, cr.
    #[arg(long)]
    schemes: Option<String>,
    /// Comma-separated subset of exact, df_estimation, asymptotic.
    #[arg(long)]
    tests: Option<String>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    null_samples: Option<usize>,
    /// Exit with status 3 when an exact test exceeds its level under the null.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct TestArgs {
    /// CSV with header x,y,z.
    #[arg(long)]
    data: PathBuf,
    /// exact, df_estimation or asymptotic.
    #[arg(long, default_value = "exact")]
    test: String,
    /// cp or cr.
    #[arg(long, default_value = "cp")]
    scheme: String,
    /// CSV with header z,x,q giving q(x|z); required for cr.
    #[arg(long)]
    conditional: Option<PathBuf>,
    #[arg(long = "b", alias = "B", default_value_t = 50)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = harness::DEFAULT_MASTER_SEED)]
    seed: u64,
    /// Declared alphabet sizes I,J,K; inferred from the data when absent.
    #[arg(long)]
    space: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Strict(Vec<String>),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn config_error(e: Error) -> Failure {
    match e {
        Error::Config(m) => Failure::Config(m),
        other => Failure::Config(other.to_string()),
    }
}

fn build_config(a: &ExperimentArgs) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            ExperimentConfig::from_toml_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    let floats = |s: &str| parse_list(s, |p| p.parse::<f64>().map_err(|e| Error::Config(format!("{p:?}: {e}"))));
    if let Some(m) = &a.models {
        cfg.models = parse_list(m, parse_model).map_err(config_error)?;
    }
    if let Some(l) = &a.lambdas {
        cfg.lambdas = floats(l)?;
    }
    if let Some(f) = &a.fracs {
        cfg.fracs = floats(f)?;
    }
    if let Some(b) = a.b {
        cfg.b = b;
    }
    if let Some(alpha) = a.alpha {
        cfg.alpha = alpha;
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if let Some(s) = &a.schemes {
        cfg.schemes = parse_list(s, |p| p.parse::<Scheme>()).map_err(config_error)?;
    }
    if let Some(t) = &a.tests {
        cfg.tests = parse_list(t, |p| p.parse::<TestKind>()).map_err(config_error)?;
    }
    if let Some(s) = a.master_seed {
        cfg.master_seed = s;
    }
    if let Some(n) = a.null_samples {
        cfg.null_samples = n;
    }
    cfg.strict |= a.strict;
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit<R: Record>(a: &ExperimentArgs, cfg: &ExperimentConfig, command: &str, rows: &[R]) -> Result<()> {
    write_records(open_output(&a.output)?, &cfg.header_line(command), rows)
}

#[derive(Deserialize)]
struct ConditionalRecord {
    z: usize,
    x: usize,
    q: f64,
}

fn read_conditional(path: &Path, space: LabelSpace) -> Result<ConditionalTable> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut columns: Vec<Option<Vec<f64>>> = vec![None; space.size_z()];
    for rec in reader.deserialize() {
        let r: ConditionalRecord = rec?;
        if r.z >= space.size_z() || r.x >= space.size_x() {
            return Err(Error::OutOfRange(format!("conditional entry (z = {}, x = {})", r.z, r.x)));
        }
        columns[r.z].get_or_insert_with(|| vec![0.0; space.size_x()])[r.x] = r.q;
    }
    ConditionalTable::with_missing(space.size_x(), columns)
}

fn parse_space(s: &str) -> Result<LabelSpace> {
    let v = parse_list(s, |p| p.parse::<usize>().map_err(|e| Error::Config(format!("{p:?}: {e}"))))?;
    match v.as_slice() {
        [i, j, k] => LabelSpace::new(*i, *j, *k),
        _ => Err(Error::Config("space must be I,J,K".into())),
    }
}

struct OutcomeRecord(TestKind, Scheme, TestOutcome);

impl Record for OutcomeRecord {
    fn header() -> &'static [&'static str] {
        &["test", "scheme", "statistic", "p_value", "reference", "parameter", "reject", "degenerate"]
    }

    fn fields(&self) -> Vec<String> {
        let OutcomeRecord(test, scheme, o) = self;
        let (reference, parameter) = match o.reference {
            Reference::Resampled { b } => ("resampled", b.to_string()),
            Reference::ChiSquare { df } => ("chisq", harness::fmt_g(df)),
        };
        let scheme = if test.needs_resampling() { scheme.to_string() } else { "NA".into() };
        vec![
            test.to_string(),
            scheme,
            harness::fmt_g(o.statistic),
            harness::fmt_g(o.p_value),
            reference.into(),
            parameter,
            o.reject.to_string(),
            o.degenerate.to_string(),
        ]
    }
}

fn run_test(a: &TestArgs) -> std::result::Result<(), Failure> {
    let test: TestKind = a.test.parse().map_err(config_error)?;
    let scheme: Scheme = a.scheme.parse().map_err(config_error)?;
    let space = a.space.as_deref().map(parse_space).transpose().map_err(config_error)?;
    let data = Dataset::read_csv(File::open(&a.data).map_err(Error::from)?, space)?;
    let conditional = match (&a.conditional, scheme) {
        (Some(p), _) => Some(read_conditional(p, data.space())?),
        (None, Scheme::Cr) if test.needs_resampling() => {
            return Err(Failure::Config("cr requires --conditional".into()))
        }
        (None, _) => None,
    };
    let stream = SeedStream::new(a.seed);
    let outcome = match test {
        TestKind::Asymptotic => asymptotic_test(&data, a.alpha)?,
        _ => {
            let plan = ResamplePlan::new(scheme, a.b, conditional).map_err(config_error)?;
            if test == TestKind::Exact {
                exact_test(&data, &plan, a.alpha, &stream)?
            } else {
                df_estimation_test(&data, &plan, a.alpha, &stream)?
            }
        }
    };
    let header = format!(
        "# citest {} command=test seed={} n={} space={}x{}x{}",
        harness::VERSION,
        a.seed,
        data.len(),
        data.space().size_x(),
        data.space().size_y(),
        data.space().size_z()
    );
    write_records(open_output(&a.output)?, &header, &[OutcomeRecord(test, scheme, outcome)])?;
    Ok(())
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::LevelPower(a) => {
            let cfg = build_config(&a)?;
            let rows = harness::run_level_power(&cfg)?;
            emit(&a, &cfg, "level-power", &rows)?;
            let violations = level_violations(&cfg, &rows);
            if cfg.strict && !violations.is_empty() {
                return Err(Failure::Strict(violations));
            }
        }
        Command::DfMean(a) => {
            let cfg = build_config(&a)?;
            emit(&a, &cfg, "df-mean", &harness::run_df_mean(&cfg)?)?;
        }
        Command::Qq(a) => {
            let cfg = build_config(&a)?;
            emit(&a, &cfg, "qq", &harness::run_qq(&cfg)?)?;
        }
        Command::SchemeRatio(a) => {
            let cfg = build_config(&a)?;
            emit(&a, &cfg, "scheme-ratio", &harness::run_scheme_ratio(&cfg)?)?;
        }
        Command::Table1(a) => {
            let cfg = build_config(&a)?;
            emit(&a, &cfg, "table1", &harness::run_table1(&cfg)?)?;
        }
        Command::Test(a) => run_test(&a)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Strict(v)) => {
            for line in v {
                eprintln!("level violation: {line}");
            }
            ExitCode::from(3)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
