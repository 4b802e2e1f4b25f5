//! Conditional independence testing for discrete data.
//!
//! The statistic is the plug-in conditional mutual information scaled as
//! `T = 2 n CMI_hat`. Its null law is approximated by conditional
//! permutation (CP), conditional randomisation (CR), or the chi-square
//! limit with `(I-1)(J-1)K` degrees of freedom.

pub mod asymptotics;
pub mod benchmark;
pub mod error;
pub mod harness;
pub mod hypothesis;
pub mod info;
pub mod model;
pub mod resample;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
pub use info::{ci_projection, cmi, cmi_hat, kl_divergence, mix, statistic, CmiValue, MixtureParam};
pub use model::{count, empirical_pmf, CellCounts, Dataset, JointPmf, LabelSpace, Margins};
pub use resample::{
    cp_resample, cr_resample, enumerate_tables, table_log_prob, ConditionalTable, ResamplePlan, Resampler, Scheme,
    TableLaw,
};
pub use seed::SeedStream;
pub use benchmark::{build_pmf, sample, table1_row, true_conditional, Model, ModelKind, ModelSpec};
pub use hypothesis::{asymptotic_test, df_estimation_test, exact_test, Reference, TestKind, TestOutcome};
