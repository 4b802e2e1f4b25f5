//! The four binary benchmark models over (X, Y, Z_1..Z_s), built exactly
//! as joint pmfs, plus iid sampling from any pmf.
//!
//! Z is flattened little-endian: `z = z_1 + 2 z_2 + ... + 2^(s-1) z_s`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::asymptotics::special::std_normal_cdf;
use crate::error::{Error, Result};
use crate::info::{ci_projection, min_cell_prob};
use crate::model::{Dataset, JointPmf, LabelSpace};
use crate::resample::ConditionalTable;

/// Largest supported number of conditioning variables.
pub const MAX_S: usize = 20;

/// Sample sizes of the minimal-probability table (frac 0.5, 1, 3, 5, 20 at s = 4).
pub const TABLE1_SIZES: [u64; 5] = [32, 64, 192, 320, 1280];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    YToXz,
    XzToY,
    XyToZ,
    Xor,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::YToXz, ModelKind::XzToY, ModelKind::XyToZ, ModelKind::Xor];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::YToXz => "YtoXZ",
            ModelKind::XzToY => "XZtoY",
            ModelKind::XyToZ => "XYtoZ",
            ModelKind::Xor => "XOR",
        }
    }

    pub fn default_model(&self) -> Model {
        match self {
            ModelKind::YToXz => Model::YToXz { gamma: 0.4, sigma: 0.5 },
            ModelKind::XzToY => Model::XzToY { sigma: 0.07 },
            ModelKind::XyToZ => Model::XyToZ { alpha: 3.0 },
            ModelKind::Xor => Model::Xor { beta: 0.8 },
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        match key.as_str() {
            "ytoxz" => Ok(ModelKind::YToXz),
            "xztoy" => Ok(ModelKind::XzToY),
            "xytoz" => Ok(ModelKind::XyToZ),
            "xor" => Ok(ModelKind::Xor),
            _ => Err(Error::InvalidModel(format!("unknown model {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    /// X and every Z_i depend on Y only.
    YToXz { gamma: f64, sigma: f64 },
    /// Y depends on the mean of (X, Z_1..Z_s).
    XzToY { sigma: f64 },
    /// Every Z_i depends on the mean of (X, Y).
    XyToZ { alpha: f64 },
    /// Y flips the parity of X + Z_1 + Z_2 with probability 1 - beta.
    Xor { beta: f64 },
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::YToXz { .. } => ModelKind::YToXz,
            Model::XzToY { .. } => ModelKind::XzToY,
            Model::XyToZ { .. } => ModelKind::XyToZ,
            Model::Xor { .. } => ModelKind::Xor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    model: Model,
    s: usize,
}

/// Default number of conditioning variables.
pub const DEFAULT_S: usize = 4;

impl ModelSpec {
    pub fn new(model: Model, s: usize) -> Result<Self> {
        if s == 0 || s > MAX_S {
            return Err(Error::InvalidModel(format!("s must lie in 1..={MAX_S}, got {s}")));
        }
        let ok = match model {
            Model::YToXz { gamma, sigma } => (0.0..=1.0).contains(&gamma) && sigma > 0.0,
            Model::XzToY { sigma } => sigma > 0.0,
            Model::XyToZ { alpha } => alpha >= 0.0 && alpha.is_finite(),
            Model::Xor { beta } => beta > 0.5 && beta < 1.0 && s >= 2,
        };
        if !ok {
            return Err(Error::InvalidModel(format!("invalid parameters {model:?} with s = {s}")));
        }
        Ok(Self { model, s })
    }

    pub fn default_for(kind: ModelKind) -> Self {
        Self::new(kind.default_model(), DEFAULT_S).expect("defaults are valid")
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn kind(&self) -> ModelKind {
        self.model.kind()
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn space(&self) -> LabelSpace {
        LabelSpace::new(2, 2, 1 << self.s).expect("binary space")
    }

    pub fn cells(&self) -> usize {
        4 << self.s
    }
}

fn bern(p1: f64, v: usize) -> f64 {
    if v == 1 {
        p1
    } else {
        1.0 - p1
    }
}

/// `P(V = v)` for `V ~ Bern(Phi(t))`, each branch evaluated without cancellation.
fn probit(t: f64, v: usize) -> f64 {
    if v == 1 {
        std_normal_cdf(t)
    } else {
        std_normal_cdf(-t)
    }
}

/// Exact pmf by enumeration of all `2^(s+2)` configurations.
pub fn build_pmf(spec: &ModelSpec) -> JointPmf {
    let space = spec.space();
    let s = spec.s;
    let base = 0.5f64.powi(s as i32 + 1);
    let mut probs = vec![0.0; space.total_cells()];
    for (i, slot) in probs.iter_mut().enumerate() {
        let (x, y, z) = space.coords(i);
        let bit = |k: usize| (z >> k) & 1;
        let zsum: usize = (0..s).map(bit).sum();
        *slot = match spec.model {
            Model::YToXz { gamma, sigma } => {
                let sign = 2.0 * y as f64 - 1.0;
                let mut p = 0.5 * probit(sign / (2.0 * sigma), x);
                for k in 0..s {
                    p *= probit(sign * gamma.powi(k as i32 + 1) / (2.0 * sigma), bit(k));
                }
                p
            }
            Model::XzToY { sigma } => {
                let t = ((x + zsum) as f64 / (s + 1) as f64 - 0.5) / sigma;
                // P(Y = 1) = 1 - Phi(t)
                base * probit(-t, y)
            }
            Model::XyToZ { alpha } => {
                let w = (x + y) as f64 / 2.0;
                // P(Z_i = 1) = 1 - Phi(alpha (1/2 - w))
                (0..s).fold(0.25, |p, k| p * probit(alpha * (w - 0.5), bit(k)))
            }
            Model::Xor { beta } => {
                let odd = (x + bit(0) + bit(1)) % 2 == 1;
                base * bern(if odd { beta } else { 1.0 - beta }, y)
            }
        };
    }
    JointPmf::new(space, probs).expect("model pmf is normalised")
}

/// Inverse-CDF sampler over the flattened cells of a pmf.
#[derive(Debug, Clone)]
pub struct PmfSampler {
    space: LabelSpace,
    cum: Vec<f64>,
    total: f64,
    last: usize,
}

impl PmfSampler {
    pub fn new(p: &JointPmf) -> Self {
        let mut acc = 0.0;
        let cum: Vec<f64> = p
            .probs()
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Self {
            space: p.space(),
            cum,
            total: acc,
            last: p.probs().iter().rposition(|&v| v > 0.0).unwrap_or(0),
        }
    }

    /// `n` iid draws.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Dataset {
        let rows: Vec<_> = (0..n)
            .map(|_| {
                let u = rng.gen::<f64>() * self.total;
                // never land on a zero-mass cell past the last positive one
                self.space.coords(self.cum.partition_point(|&c| c <= u).min(self.last))
            })
            .collect();
        Dataset::new(self.space, &rows).expect("coordinates come from the space")
    }
}

/// `n` iid draws from `p` by inverse CDF over the flattened cells.
pub fn sample<R: Rng + ?Sized>(p: &JointPmf, n: usize, rng: &mut R) -> Dataset {
    PmfSampler::new(p).draw(n, rng)
}

/// `q(x|z) = p(x,z) / p(z)`.
pub fn true_conditional(p: &JointPmf) -> Result<ConditionalTable> {
    let space = p.space();
    let m = p.margins();
    let columns = (0..space.size_z())
        .map(|z| {
            if m.p_z(z) <= 0.0 {
                return Err(Error::InvalidConditional(format!("stratum z = {z} has zero probability")));
            }
            let col: Vec<f64> = (0..space.size_x()).map(|x| m.p_xz(x, z)).collect();
            let total: f64 = col.iter().sum();
            Ok(col.into_iter().map(|v| v / total).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    ConditionalTable::new(space.size_x(), columns)
}

/// `(n min p_ci, n min p)`.
pub fn table1_row(spec: &ModelSpec, n: u64) -> (f64, f64) {
    let p = build_pmf(spec);
    let n = n as f64;
    (n * min_cell_prob(&ci_projection(&p)), n * min_cell_prob(&p))
}
