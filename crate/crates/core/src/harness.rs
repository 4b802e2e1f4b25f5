//! Seeded Monte Carlo experiments over the benchmark models, emitted as CSV.
//!
//! Every random draw comes from a counter-split stream
//! `master > experiment > model > lambda > frac > repetition > {data, CP, CR}`,
//! and each resample further splits by replicate and stratum. Rows are
//! assembled in configuration order, never in completion order.

use std::io::Write;

use rayon::prelude::*;
use serde::Deserialize;

use crate::asymptotics::special::ChiSquareRef;
use crate::benchmark::{build_pmf, table1_row, true_conditional, Model, ModelKind, ModelSpec, PmfSampler};
use crate::error::{Error, Result};
use crate::hypothesis::{
    asymptotic_outcome, df_estimation_outcome, exact_outcome, resampled_statistics, TestKind, DF_FLOOR,
};
use crate::info::{ci_projection, mix, statistic, MixtureParam};
use crate::model::{count, JointPmf};
use crate::resample::{ResamplePlan, Scheme};
use crate::seed::SeedStream;
use crate::stats::{binomial_se, mean, median, quantile_sorted, sorted, standard_error};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const DEFAULT_FRACS: [f64; 7] = [0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0];
pub const TABLE1_FRACS: [f64; 5] = [0.5, 1.0, 3.0, 5.0, 20.0];
pub const DEFAULT_MASTER_SEED: u64 = 20_240_917;

const LEVEL_POWER: u64 = 0;
const DF_MEAN: u64 = 1;
const QQ: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<ModelSpec>,
    pub lambdas: Vec<f64>,
    pub fracs: Vec<f64>,
    pub b: usize,
    pub alpha: f64,
    pub repetitions: usize,
    pub schemes: Vec<Scheme>,
    pub tests: Vec<TestKind>,
    pub master_seed: u64,
    /// Fail the run when an exact test exceeds its level under the null.
    pub strict: bool,
    /// Null samples behind the df-mean and QQ reference columns.
    pub null_samples: usize,
    pub quantile_levels: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut levels: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
        levels.extend([0.99, 1.0]);
        Self {
            models: ModelKind::ALL.iter().map(|&k| ModelSpec::default_for(k)).collect(),
            lambdas: vec![1.0],
            fracs: DEFAULT_FRACS.to_vec(),
            b: 50,
            alpha: 0.05,
            repetitions: 500,
            schemes: vec![Scheme::Cp, Scheme::Cr],
            tests: vec![TestKind::Exact, TestKind::DfEstimation, TestKind::Asymptotic],
            master_seed: DEFAULT_MASTER_SEED,
            strict: false,
            null_samples: 10_000,
            quantile_levels: levels,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ModelEntry {
    Name(String),
    Table(ModelTable),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelTable {
    kind: String,
    s: Option<usize>,
    gamma: Option<f64>,
    sigma: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    models: Option<Vec<ModelEntry>>,
    lambdas: Option<Vec<f64>>,
    fracs: Option<Vec<f64>>,
    #[serde(alias = "B")]
    b: Option<usize>,
    alpha: Option<f64>,
    repetitions: Option<usize>,
    schemes: Option<Vec<String>>,
    tests: Option<Vec<String>>,
    master_seed: Option<u64>,
    strict: Option<bool>,
    null_samples: Option<usize>,
    quantile_levels: Option<Vec<f64>>,
}

/// Parses a model name with default parameters, e.g. `XOR` or `YtoXZ`.
pub fn parse_model(name: &str) -> Result<ModelSpec> {
    Ok(ModelSpec::default_for(name.trim().parse()?))
}

fn model_from_table(t: &ModelTable) -> Result<ModelSpec> {
    let kind: ModelKind = t.kind.parse()?;
    let unused = |names: &[(&str, Option<f64>)]| -> Result<()> {
        match names.iter().find(|(_, v)| v.is_some()) {
            Some((n, _)) => Err(Error::Config(format!("parameter {n} does not apply to {kind}"))),
            None => Ok(()),
        }
    };
    let model = match kind.default_model() {
        Model::YToXz { gamma, sigma } => {
            unused(&[("alpha", t.alpha), ("beta", t.beta)])?;
            Model::YToXz {
                gamma: t.gamma.unwrap_or(gamma),
                sigma: t.sigma.unwrap_or(sigma),
            }
        }
        Model::XzToY { sigma } => {
            unused(&[("gamma", t.gamma), ("alpha", t.alpha), ("beta", t.beta)])?;
            Model::XzToY {
                sigma: t.sigma.unwrap_or(sigma),
            }
        }
        Model::XyToZ { alpha } => {
            unused(&[("gamma", t.gamma), ("sigma", t.sigma), ("beta", t.beta)])?;
            Model::XyToZ {
                alpha: t.alpha.unwrap_or(alpha),
            }
        }
        Model::Xor { beta } => {
            unused(&[("gamma", t.gamma), ("sigma", t.sigma), ("alpha", t.alpha)])?;
            Model::Xor {
                beta: t.beta.unwrap_or(beta),
            }
        }
    };
    ModelSpec::new(model, t.s.unwrap_or(crate::benchmark::DEFAULT_S)).map_err(|e| Error::Config(e.to_string()))
}

/// Parses a comma-separated list with `parse`.
pub fn parse_list<T>(s: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| parse(p.trim())).collect()
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    /// Reads a TOML document; absent keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut cfg = Self::default();
        if let Some(models) = file.models {
            cfg.models = models
                .iter()
                .map(|m| match m {
                    ModelEntry::Name(n) => parse_model(n),
                    ModelEntry::Table(t) => model_from_table(t),
                })
                .collect::<Result<_>>()
                .map_err(config_err)?;
        }
        if let Some(v) = file.lambdas {
            cfg.lambdas = v;
        }
        if let Some(v) = file.fracs {
            cfg.fracs = v;
        }
        if let Some(v) = file.b {
            cfg.b = v;
        }
        if let Some(v) = file.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = file.repetitions {
            cfg.repetitions = v;
        }
        if let Some(v) = file.schemes {
            cfg.schemes = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = file.tests {
            cfg.tests = v.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = file.master_seed {
            cfg.master_seed = v;
        }
        if let Some(v) = file.strict {
            cfg.strict = v;
        }
        if let Some(v) = file.null_samples {
            cfg.null_samples = v;
        }
        if let Some(v) = file.quantile_levels {
            cfg.quantile_levels = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.models.is_empty() || self.lambdas.is_empty() || self.fracs.is_empty() {
            return bad("models, lambdas and fracs must be non-empty".into());
        }
        if self.schemes.is_empty() || self.tests.is_empty() {
            return bad("schemes and tests must be non-empty".into());
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return bad(format!("lambda {l} outside [0, 1]"));
        }
        for spec in &self.models {
            for &f in &self.fracs {
                if !(f > 0.0 && f.is_finite()) || sample_size(spec, f) < 1 {
                    return bad(format!("frac {f} gives no observations for {}", spec.name()));
                }
            }
        }
        if self.b == 0 {
            return bad("B must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.repetitions == 0 || self.null_samples == 0 {
            return bad("repetitions and null_samples must be positive".into());
        }
        if let Some(q) = self.quantile_levels.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return bad(format!("quantile level {q} outside [0, 1]"));
        }
        Ok(())
    }

    /// One-line description written above every CSV.
    pub fn header_line(&self, command: &str) -> String {
        let fracs: Vec<String> = self.fracs.iter().map(|f| fmt_g(*f)).collect();
        let lambdas: Vec<String> = self.lambdas.iter().map(|l| fmt_g(*l)).collect();
        format!(
            "# citest {VERSION} command={command} master_seed={} seed_scheme=counter-split(master>experiment>model>lambda>frac>repetition>resample>stratum) B={} alpha={} repetitions={} null_samples={} fracs={} lambdas={}",
            self.master_seed,
            self.b,
            fmt_g(self.alpha),
            self.repetitions,
            self.null_samples,
            fracs.join(";"),
            lambdas.join(";")
        )
    }
}

/// `n = round(frac * 2^(s+2))`.
pub fn sample_size(spec: &ModelSpec, frac: f64) -> usize {
    (frac * spec.cells() as f64).round() as usize
}

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_g(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant), exp.abs())
    } else {
        trim(&format!("{:.*}", (5 - exp) as usize, v))
    }
}

/// A record with a fixed column order.
pub trait Record {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Writes the comment line, the column header and `rows`.
pub fn write_records<W: Write, R: Record>(mut w: W, header_line: &str, rows: &[R]) -> Result<()> {
    writeln!(w, "{header_line}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(R::header())?;
    for r in rows {
        csv.write_record(r.fields())?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub model: String,
    pub scheme: Scheme,
    pub test: TestKind,
    pub frac: f64,
    pub n: usize,
    pub lambda: f64,
    pub rejection_rate: f64,
    pub standard_error: f64,
    pub repetitions: usize,
    /// Key of the row's seed stream.
    pub seed: u64,
}

impl Record for ExperimentRow {
    fn header() -> &'static [&'static str] {
        &[
            "model",
            "scheme",
            "test",
            "frac",
            "n",
            "lambda",
            "rejection_rate",
            "standard_error",
            "repetitions",
            "seed",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            self.scheme.to_string(),
            self.test.to_string(),
            fmt_g(self.frac),
            self.n.to_string(),
            fmt_g(self.lambda),
            fmt_g(self.rejection_rate),
            fmt_g(self.standard_error),
            self.repetitions.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// One (model, lambda, frac) cell of an experiment grid.
struct Group {
    sampler: PmfSampler,
    cp: ResamplePlan,
    cr: Option<ResamplePlan>,
    n: usize,
    stream: SeedStream,
    df: usize,
}

impl Group {
    fn new(cfg: &ExperimentConfig, pmf: &JointPmf, n: usize, stream: SeedStream, with_cr: bool) -> Result<Self> {
        let cr = if with_cr {
            Some(ResamplePlan::cr(cfg.b, true_conditional(pmf)?)?)
        } else {
            None
        };
        Ok(Self {
            sampler: PmfSampler::new(pmf),
            cp: ResamplePlan::cp(cfg.b)?,
            cr,
            n,
            stream,
            df: pmf.space().asymptotic_df(),
        })
    }

    fn plan(&self, scheme: Scheme) -> &ResamplePlan {
        match scheme {
            Scheme::Cp => &self.cp,
            Scheme::Cr => self.cr.as_ref().expect("CR plan requested"),
        }
    }

    fn data_stream(rep: &SeedStream) -> SeedStream {
        rep.child(0)
    }

    fn scheme_stream(rep: &SeedStream, scheme: Scheme) -> SeedStream {
        rep.child(match scheme {
            Scheme::Cp => 1,
            Scheme::Cr => 2,
        })
    }

    /// Rejection counts indexed `[scheme][test]`. Both resampling tests of a
    /// scheme share the same resamples.
    fn rejections(&self, cfg: &ExperimentConfig, schemes: &[Scheme], tests: &[TestKind]) -> Result<Vec<Vec<usize>>> {
        let per_rep: Vec<Vec<bool>> = (0..cfg.repetitions as u64)
            .into_par_iter()
            .map(|r| {
                let rep = self.stream.child(r);
                let data = self.sampler.draw(self.n, &mut Self::data_stream(&rep).rng());
                let mut flags = Vec::with_capacity(schemes.len() * tests.len());
                let mut t0 = None;
                for &scheme in schemes {
                    let resampled = if tests.iter().any(|t| t.needs_resampling()) {
                        let (t, s) =
                            resampled_statistics(&data, self.plan(scheme), &Self::scheme_stream(&rep, scheme))?;
                        t0 = Some(t);
                        Some(s)
                    } else {
                        None
                    };
                    let t = *t0.get_or_insert_with(|| statistic(&count(&data)));
                    for test in tests {
                        let outcome = match test {
                            TestKind::Exact => exact_outcome(t, resampled.clone().expect("resampled"), cfg.alpha)?,
                            TestKind::DfEstimation => {
                                df_estimation_outcome(t, resampled.clone().expect("resampled"), cfg.alpha)?
                            }
                            TestKind::Asymptotic => asymptotic_outcome(t, self.df, cfg.alpha)?,
                        };
                        flags.push(outcome.reject);
                    }
                }
                Ok(flags)
            })
            .collect::<Result<_>>()?;
        let mut counts = vec![vec![0usize; tests.len()]; schemes.len()];
        for flags in per_rep {
            for (k, f) in flags.into_iter().enumerate() {
                counts[k / tests.len()][k % tests.len()] += f as usize;
            }
        }
        Ok(counts)
    }
}

fn level_power_stream(cfg: &ExperimentConfig, mi: usize, li: usize, fi: usize) -> SeedStream {
    SeedStream::new(cfg.master_seed)
        .child(LEVEL_POWER)
        .child(mi as u64)
        .child(li as u64)
        .child(fi as u64)
}

fn null_stream(cfg: &ExperimentConfig, experiment: u64, mi: usize, fi: usize) -> SeedStream {
    SeedStream::new(cfg.master_seed)
        .child(experiment)
        .child(mi as u64)
        .child(0)
        .child(fi as u64)
}

fn mixture(spec: &ModelSpec, lambda: f64) -> Result<JointPmf> {
    Ok(mix(&build_pmf(spec), MixtureParam::new(lambda)?))
}

fn dedup<T: PartialEq + Copy>(v: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for &x in v {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Rejection rates over the grid models x lambdas x fracs x schemes x tests.
/// Lambda 1 rows are attained levels. Asymptotic rows ignore the scheme.
pub fn run_level_power(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>> {
    cfg.validate()?;
    let schemes = dedup(&cfg.schemes);
    let mut rows = Vec::new();
    for (mi, spec) in cfg.models.iter().enumerate() {
        for (li, &lambda) in cfg.lambdas.iter().enumerate() {
            let pmf = mixture(spec, lambda)?;
            for (fi, &frac) in cfg.fracs.iter().enumerate() {
                let n = sample_size(spec, frac);
                let stream = level_power_stream(cfg, mi, li, fi);
                let group = Group::new(cfg, &pmf, n, stream, schemes.contains(&Scheme::Cr))?;
                let counts = group.rejections(cfg, &schemes, &cfg.tests)?;
                for &scheme in &cfg.schemes {
                    let si = schemes.iter().position(|&s| s == scheme).expect("deduplicated");
                    for (ti, &test) in cfg.tests.iter().enumerate() {
                        let rate = counts[si][ti] as f64 / cfg.repetitions as f64;
                        rows.push(ExperimentRow {
                            model: spec.name().to_string(),
                            scheme,
                            test,
                            frac,
                            n,
                            lambda,
                            rejection_rate: rate,
                            standard_error: binomial_se(rate, cfg.repetitions),
                            repetitions: cfg.repetitions,
                            seed: stream.key(),
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Null rows of the exact test whose rate exceeds `alpha + 3 sqrt(alpha (1 - alpha) / reps)`.
pub fn level_violations(cfg: &ExperimentConfig, rows: &[ExperimentRow]) -> Vec<String> {
    rows.iter()
        .filter(|r| r.lambda == 1.0 && r.test == TestKind::Exact)
        .filter(|r| r.rejection_rate > cfg.alpha + 3.0 * binomial_se(cfg.alpha, r.repetitions))
        .map(|r| {
            format!(
                "{} {} frac={} rejection_rate={} exceeds alpha={}",
                r.model,
                r.scheme,
                fmt_g(r.frac),
                fmt_g(r.rejection_rate),
                fmt_g(cfg.alpha)
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DfMeanRow {
    pub model: String,
    pub frac: f64,
    pub n: usize,
    /// Mean of `2n CMI_hat` over `null_samples` samples from `p_ci`.
    pub mean_stat: f64,
    /// Mean over repetitions of the per-sample mean of `B` CP statistics.
    pub mean_resampled: f64,
    /// Standard error of `mean_resampled`.
    pub se: f64,
    pub df_asymptotic: usize,
}

impl Record for DfMeanRow {
    fn header() -> &'static [&'static str] {
        &["model", "frac", "n", "mean_2nCMI", "mean_2nCMI_star", "se", "df_asymptotic"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            fmt_g(self.frac),
            self.n.to_string(),
            fmt_g(self.mean_stat),
            fmt_g(self.mean_resampled),
            fmt_g(self.se),
            self.df_asymptotic.to_string(),
        ]
    }
}

/// Statistics of `count` null samples, sample `i` drawn from `stream.child(i)`.
fn null_statistics(group: &Group, count_: usize, stream: &SeedStream) -> Vec<f64> {
    (0..count_ as u64)
        .into_par_iter()
        .map(|i| statistic(&count(&group.sampler.draw(group.n, &mut stream.child(i).rng()))))
        .collect()
}

/// CP statistics of `repetitions` fresh null samples.
fn resampled_null(cfg: &ExperimentConfig, group: &Group, stream: &SeedStream) -> Result<Vec<Vec<f64>>> {
    (0..cfg.repetitions as u64)
        .into_par_iter()
        .map(|r| {
            let rep = stream.child(r);
            let data = group.sampler.draw(group.n, &mut Group::data_stream(&rep).rng());
            Ok(resampled_statistics(&data, &group.cp, &Group::scheme_stream(&rep, Scheme::Cp))?.1)
        })
        .collect()
}

/// Mean of `2n CMI_hat` under `p_ci` against its CP estimate and the asymptotic df.
pub fn run_df_mean(cfg: &ExperimentConfig) -> Result<Vec<DfMeanRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (mi, spec) in cfg.models.iter().enumerate() {
        let pci = ci_projection(&build_pmf(spec));
        for (fi, &frac) in cfg.fracs.iter().enumerate() {
            let n = sample_size(spec, frac);
            let stream = null_stream(cfg, DF_MEAN, mi, fi);
            let group = Group::new(cfg, &pci, n, stream, false)?;
            let null = null_statistics(&group, cfg.null_samples, &stream.child(0));
            let means: Vec<f64> = resampled_null(cfg, &group, &stream.child(1))?
                .iter()
                .map(|s| mean(s))
                .collect();
            rows.push(DfMeanRow {
                model: spec.name().to_string(),
                frac,
                n,
                mean_stat: mean(&null),
                mean_resampled: mean(&means),
                se: standard_error(&means),
                df_asymptotic: group.df,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QqRow {
    pub model: String,
    pub frac: f64,
    pub n: usize,
    pub level: f64,
    pub q_empirical: f64,
    pub q_resampled_median: f64,
    pub q_chisq_estdf_median: f64,
    pub q_chisq_asymptotic: f64,
}

impl Record for QqRow {
    fn header() -> &'static [&'static str] {
        &[
            "model",
            "frac",
            "n",
            "quantile_level",
            "q_empirical",
            "q_resampled_median",
            "q_chisq_estdf_median",
            "q_chisq_asymptotic",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            fmt_g(self.frac),
            self.n.to_string(),
            fmt_g(self.level),
            fmt_g(self.q_empirical),
            fmt_g(self.q_resampled_median),
            fmt_g(self.q_chisq_estdf_median),
            fmt_g(self.q_chisq_asymptotic),
        ]
    }
}

/// Quantiles of `2n CMI_hat` under `p_ci` against CP-resampled, estimated-df
/// and asymptotic references.
///
/// Data quantiles are type-7 and never extrapolate past the sample maximum.
/// Chi-square quantiles are taken at `min(level, 1 - 1/(2 m))`, `m` the
/// null sample count, so level 1 stays finite.
pub fn run_qq(cfg: &ExperimentConfig) -> Result<Vec<QqRow>> {
    cfg.validate()?;
    let cap = 1.0 - 0.5 / cfg.null_samples as f64;
    let mut rows = Vec::new();
    for (mi, spec) in cfg.models.iter().enumerate() {
        let pci = ci_projection(&build_pmf(spec));
        for (fi, &frac) in cfg.fracs.iter().enumerate() {
            let n = sample_size(spec, frac);
            let stream = null_stream(cfg, QQ, mi, fi);
            let group = Group::new(cfg, &pci, n, stream, false)?;
            let null = sorted(&null_statistics(&group, cfg.null_samples, &stream.child(0)));
            let resampled: Vec<Vec<f64>> = resampled_null(cfg, &group, &stream.child(1))?
                .into_iter()
                .map(|s| sorted(&s))
                .collect();
            let dfs: Vec<ChiSquareRef> = resampled
                .iter()
                .map(|s| ChiSquareRef::new(mean(s).max(DF_FLOOR)))
                .collect::<Result<_>>()?;
            let asym = ChiSquareRef::new(group.df as f64)?;
            for &level in &cfg.quantile_levels {
                let capped = level.min(cap);
                let per_sample: Vec<f64> = resampled.iter().map(|s| quantile_sorted(s, level)).collect();
                let estdf: Vec<f64> = dfs.iter().map(|c| c.quantile(capped)).collect::<Result<_>>()?;
                rows.push(QqRow {
                    model: spec.name().to_string(),
                    frac,
                    n,
                    level,
                    q_empirical: quantile_sorted(&null, level),
                    q_resampled_median: median(&per_sample),
                    q_chisq_estdf_median: median(&estdf),
                    q_chisq_asymptotic: asym.quantile(capped)?,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioRow {
    pub model: String,
    pub test: TestKind,
    pub frac: f64,
    pub n: usize,
    pub lambda: f64,
    pub rate_numerator: f64,
    pub rate_denominator: f64,
    /// `None` when the denominator rate is zero.
    pub ratio: Option<f64>,
    pub repetitions: usize,
}

impl Record for RatioRow {
    fn header() -> &'static [&'static str] {
        &[
            "model",
            "test",
            "frac",
            "n",
            "lambda",
            "rate_cp",
            "rate_cr",
            "power_cp_over_cr",
            "repetitions",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            self.test.to_string(),
            fmt_g(self.frac),
            self.n.to_string(),
            fmt_g(self.lambda),
            fmt_g(self.rate_numerator),
            fmt_g(self.rate_denominator),
            self.ratio.map(fmt_g).unwrap_or_else(|| "NA".into()),
            self.repetitions.to_string(),
        ]
    }
}

/// Rejection-rate ratio of CP over CR for the resampling tests.
pub fn run_scheme_ratio(cfg: &ExperimentConfig) -> Result<Vec<RatioRow>> {
    run_scheme_ratio_with(cfg, Scheme::Cp, Scheme::Cr)
}

/// Rejection-rate ratio `numerator / denominator`, on the same streams as
/// [`run_level_power`].
pub fn run_scheme_ratio_with(cfg: &ExperimentConfig, numerator: Scheme, denominator: Scheme) -> Result<Vec<RatioRow>> {
    cfg.validate()?;
    let tests: Vec<TestKind> = dedup(&cfg.tests).into_iter().filter(|t| t.needs_resampling()).collect();
    if tests.is_empty() {
        return Err(Error::Config("scheme ratio needs a resampling test".into()));
    }
    let schemes = dedup(&[numerator, denominator]);
    let mut rows = Vec::new();
    for (mi, spec) in cfg.models.iter().enumerate() {
        for (li, &lambda) in cfg.lambdas.iter().enumerate() {
            let pmf = mixture(spec, lambda)?;
            for (fi, &frac) in cfg.fracs.iter().enumerate() {
                let n = sample_size(spec, frac);
                let stream = level_power_stream(cfg, mi, li, fi);
                let group = Group::new(cfg, &pmf, n, stream, schemes.contains(&Scheme::Cr))?;
                let counts = group.rejections(cfg, &schemes, &tests)?;
                let at = |s: Scheme| schemes.iter().position(|&x| x == s).expect("present");
                for (ti, &test) in tests.iter().enumerate() {
                    let a = counts[at(numerator)][ti];
                    let b = counts[at(denominator)][ti];
                    rows.push(RatioRow {
                        model: spec.name().to_string(),
                        test,
                        frac,
                        n,
                        lambda,
                        rate_numerator: a as f64 / cfg.repetitions as f64,
                        rate_denominator: b as f64 / cfg.repetitions as f64,
                        ratio: (b > 0).then(|| a as f64 / b as f64),
                        repetitions: cfg.repetitions,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table1Row {
    pub model: String,
    pub frac: f64,
    pub n: u64,
    pub n_min_p_ci: f64,
    pub n_min_p: f64,
}

impl Record for Table1Row {
    fn header() -> &'static [&'static str] {
        &["model", "frac", "n", "n_min_p_ci", "n_min_p"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model.clone(),
            fmt_g(self.frac),
            self.n.to_string(),
            fmt_g(self.n_min_p_ci),
            fmt_g(self.n_min_p),
        ]
    }
}

/// `n min p_ci` and `n min p` at frac 0.5, 1, 3, 5 and 20.
pub fn run_table1(cfg: &ExperimentConfig) -> Result<Vec<Table1Row>> {
    let mut rows = Vec::new();
    for spec in &cfg.models {
        for &frac in &TABLE1_FRACS {
            let n = sample_size(spec, frac) as u64;
            let (ci, p) = table1_row(spec, n);
            rows.push(Table1Row {
                model: spec.name().to_string(),
                frac,
                n,
                n_min_p_ci: ci,
                n_min_p: p,
            });
        }
    }
    Ok(rows)
}
