//! The exact resampling test, the chi-square test with estimated degrees
//! of freedom, and the asymptotic chi-square test.

use std::fmt;
use std::str::FromStr;

use crate::asymptotics::special::ChiSquareRef;
use crate::error::{Error, Result};
use crate::info::CountStatistic;
use crate::model::{count, Dataset};
use crate::resample::{ResamplePlan, Resampler};
use crate::seed::SeedStream;

/// Estimated degrees of freedom never fall below this value.
pub const DF_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestKind {
    Exact,
    DfEstimation,
    Asymptotic,
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::Exact => "exact",
            TestKind::DfEstimation => "df_estimation",
            TestKind::Asymptotic => "asymptotic",
        }
    }

    pub fn needs_resampling(&self) -> bool {
        !matches!(self, TestKind::Asymptotic)
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "exact" => Ok(TestKind::Exact),
            "df_estimation" | "df" => Ok(TestKind::DfEstimation),
            "asymptotic" => Ok(TestKind::Asymptotic),
            other => Err(Error::Config(format!("unknown test {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference {
    Resampled { b: usize },
    ChiSquare { df: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    /// `2n * CMI_hat` of the original sample.
    pub statistic: f64,
    pub p_value: f64,
    pub reference: Reference,
    /// `p_value <= alpha`.
    pub reject: bool,
    pub resampled_stats: Option<Vec<f64>>,
    /// Set when the estimated df fell to [`DF_FLOOR`].
    pub degenerate: bool,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// The statistic of `data` and of `B` resamples, resample `b` drawn from
/// `stream.child(b)`.
pub fn resampled_statistics(data: &Dataset, plan: &ResamplePlan, stream: &SeedStream) -> Result<(f64, Vec<f64>)> {
    let space = data.space();
    let mut stat = CountStatistic::new(space, data.len() as u64);
    let t = stat.statistic(count(data).counts());
    let mut rs = Resampler::new(data, plan)?;
    let mut buf = vec![0u64; space.total_cells()];
    let stats = (0..plan.replicates() as u64)
        .map(|b| {
            rs.resample_counts(&stream.child(b), &mut buf);
            stat.statistic(&buf)
        })
        .collect();
    Ok((t, stats))
}

/// `T <= T_b*` up to rounding; equal tables give bit-identical statistics,
/// the tolerance absorbs tables whose CMI agrees only mathematically.
fn tied_or_below(t: f64, tb: f64) -> bool {
    t <= tb + 1e-10 * t.abs().max(1e-2)
}

/// `(1 + #{b : T <= T_b*}) / (B + 1)`.
pub fn exact_p_value(t: f64, resampled: &[f64]) -> f64 {
    let hits = resampled.iter().filter(|&&tb| tied_or_below(t, tb)).count();
    (1 + hits) as f64 / (resampled.len() + 1) as f64
}

/// Exact outcome from precomputed statistics.
pub fn exact_outcome(t: f64, resampled: Vec<f64>, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let p = exact_p_value(t, &resampled);
    Ok(TestOutcome {
        statistic: t,
        p_value: p,
        reference: Reference::Resampled { b: resampled.len() },
        reject: p <= alpha,
        resampled_stats: Some(resampled),
        degenerate: false,
    })
}

/// df-estimation outcome from precomputed statistics.
pub fn df_estimation_outcome(t: f64, resampled: Vec<f64>, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    if resampled.is_empty() {
        return Err(Error::InvalidPlan("B must be at least 1".into()));
    }
    let mean = resampled.iter().sum::<f64>() / resampled.len() as f64;
    let degenerate = !(mean > DF_FLOOR);
    let df = if degenerate { DF_FLOOR } else { mean };
    let p = ChiSquareRef::new(df)?.sf(t)?;
    Ok(TestOutcome {
        statistic: t,
        p_value: p,
        reference: Reference::ChiSquare { df },
        reject: p <= alpha,
        resampled_stats: Some(resampled),
        degenerate,
    })
}

/// Asymptotic outcome for a statistic over a space with `df` degrees of freedom.
pub fn asymptotic_outcome(t: f64, df: usize, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let df = df as f64;
    let p = ChiSquareRef::new(df)?.sf(t)?;
    Ok(TestOutcome {
        statistic: t,
        p_value: p,
        reference: Reference::ChiSquare { df },
        reject: p <= alpha,
        resampled_stats: None,
        degenerate: false,
    })
}

pub fn exact_test(data: &Dataset, plan: &ResamplePlan, alpha: f64, stream: &SeedStream) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let (t, stats) = resampled_statistics(data, plan, stream)?;
    exact_outcome(t, stats, alpha)
}

pub fn df_estimation_test(data: &Dataset, plan: &ResamplePlan, alpha: f64, stream: &SeedStream) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let (t, stats) = resampled_statistics(data, plan, stream)?;
    df_estimation_outcome(t, stats, alpha)
}

/// Chi-square test with `(I-1)(J-1)K` degrees of freedom from the declared space.
pub fn asymptotic_test(data: &Dataset, alpha: f64) -> Result<TestOutcome> {
    let space = data.space();
    let t = CountStatistic::new(space, data.len() as u64).statistic(count(data).counts());
    asymptotic_outcome(t, space.asymptotic_df(), alpha)
}
