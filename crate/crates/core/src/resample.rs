//! Conditional permutation (CP) and conditional randomisation (CR)
//! resampling, and the exact law of a CP-resampled contingency table.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{CellCounts, Dataset, LabelSpace};
use crate::seed::SeedStream;
use crate::asymptotics::special::LogFactorial;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Permute x within each stratum of z.
    Cp,
    /// Redraw each x from a known conditional law q(x|z).
    Cr,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Cp => "CP",
            Scheme::Cr => "CR",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cp" => Ok(Scheme::Cp),
            "cr" => Ok(Scheme::Cr),
            other => Err(Error::Config(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Conditional law q(x|z), one column per stratum. Columns may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalTable {
    size_x: usize,
    cumulative: Vec<Option<Vec<f64>>>,
    columns: Vec<Option<Vec<f64>>>,
}

impl ConditionalTable {
    pub fn new(size_x: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_missing(size_x, columns.into_iter().map(Some).collect())
    }

    pub fn with_missing(size_x: usize, columns: Vec<Option<Vec<f64>>>) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(columns.len());
        for (z, col) in columns.iter().enumerate() {
            let Some(col) = col else {
                cumulative.push(None);
                continue;
            };
            if col.len() != size_x {
                return Err(Error::InvalidConditional(format!(
                    "column {z} has {} entries, expected {size_x}",
                    col.len()
                )));
            }
            if col.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidConditional(format!("column {z} has a negative entry")));
            }
            let total: f64 = col.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConditional(format!("column {z} sums to {total}")));
            }
            let mut acc = 0.0;
            cumulative.push(Some(
                col.iter()
                    .map(|v| {
                        acc += v;
                        acc
                    })
                    .collect(),
            ));
        }
        Ok(Self {
            size_x,
            cumulative,
            columns,
        })
    }

    pub fn size_x(&self) -> usize {
        self.size_x
    }

    pub fn num_strata(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, z: usize) -> Option<&[f64]> {
        self.columns.get(z).and_then(|c| c.as_deref())
    }

    fn draw<R: Rng>(&self, cum: &[f64], rng: &mut R) -> usize {
        let u: f64 = rng.gen::<f64>() * cum[cum.len() - 1];
        match cum.iter().position(|&c| u < c) {
            Some(x) => x,
            // u landed on the top edge through rounding
            None => cum.iter().rposition(|&c| c > 0.0).unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResamplePlan {
    scheme: Scheme,
    replicates: usize,
    conditional: Option<ConditionalTable>,
}

impl ResamplePlan {
    pub fn new(scheme: Scheme, replicates: usize, conditional: Option<ConditionalTable>) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::InvalidPlan("B must be at least 1".into()));
        }
        if scheme == Scheme::Cr && conditional.is_none() {
            return Err(Error::InvalidPlan("CR requires a conditional table".into()));
        }
        Ok(Self {
            scheme,
            replicates,
            conditional,
        })
    }

    pub fn cp(replicates: usize) -> Result<Self> {
        Self::new(Scheme::Cp, replicates, None)
    }

    pub fn cr(replicates: usize, conditional: ConditionalTable) -> Result<Self> {
        Self::new(Scheme::Cr, replicates, Some(conditional))
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn conditional(&self) -> Option<&ConditionalTable> {
        self.conditional.as_ref()
    }
}

#[derive(Debug, Clone)]
struct Stratum {
    z: usize,
    /// Row indices ordered by (y, index).
    positions: Vec<usize>,
    /// y at each entry of `positions`.
    ys: Vec<usize>,
    /// The stratum's x multiset in ascending order.
    xs_sorted: Vec<usize>,
}

/// Per-stratum layout of a dataset, prepared once and reused for every
/// resample.
///
/// CP shuffles the sorted x multiset and lays it over the rows ordered by
/// y, so the resampled table depends only on the margins `n(x,z)`,
/// `n(y,z)` and the seed. Each stratum draws from its own child stream
/// `stream.child(z)`.
#[derive(Debug, Clone)]
pub struct Resampler<'a> {
    data: &'a Dataset,
    scheme: Scheme,
    conditional: Option<&'a ConditionalTable>,
    strata: Vec<Stratum>,
    scratch: Vec<usize>,
}

impl<'a> Resampler<'a> {
    pub fn new(data: &'a Dataset, plan: &'a ResamplePlan) -> Result<Self> {
        Self::build(data, plan.scheme, plan.conditional.as_ref())
    }

    fn build(data: &'a Dataset, scheme: Scheme, conditional: Option<&'a ConditionalTable>) -> Result<Self> {
        let space = data.space();
        let mut by_z: Vec<Vec<usize>> = vec![Vec::new(); space.size_z()];
        for (i, &z) in data.zs().iter().enumerate() {
            by_z[z].push(i);
        }
        let mut strata = Vec::new();
        for (z, mut positions) in by_z.into_iter().enumerate() {
            if positions.is_empty() {
                continue;
            }
            if scheme == Scheme::Cr {
                let table = conditional.ok_or_else(|| Error::InvalidPlan("CR requires a conditional table".into()))?;
                if table.size_x() != space.size_x() {
                    return Err(Error::InvalidConditional(format!(
                        "table has {} x-values, space has {}",
                        table.size_x(),
                        space.size_x()
                    )));
                }
                if table.column(z).is_none() {
                    return Err(Error::UnknownStratum(z));
                }
            }
            positions.sort_by_key(|&i| (data.ys()[i], i));
            let ys = positions.iter().map(|&i| data.ys()[i]).collect();
            let mut xs_sorted: Vec<usize> = positions.iter().map(|&i| data.xs()[i]).collect();
            xs_sorted.sort_unstable();
            strata.push(Stratum {
                z,
                positions,
                ys,
                xs_sorted,
            });
        }
        let longest = strata.iter().map(|s| s.positions.len()).max().unwrap_or(0);
        Ok(Self {
            data,
            scheme,
            conditional,
            strata,
            scratch: Vec::with_capacity(longest),
        })
    }

    pub fn space(&self) -> LabelSpace {
        self.data.space()
    }

    /// Draws the resampled x-values of one stratum into `scratch`.
    fn fill_stratum(&mut self, k: usize, stream: &SeedStream) {
        let st = &self.strata[k];
        self.scratch.clear();
        match self.scheme {
            Scheme::Cp => {
                self.scratch.extend_from_slice(&st.xs_sorted);
                if self.scratch.len() > 1 {
                    let mut rng = stream.child(st.z as u64).rng();
                    self.scratch.shuffle(&mut rng);
                }
            }
            Scheme::Cr => {
                let table = self.conditional.expect("checked at construction");
                let cum = table.cumulative[st.z].as_deref().expect("checked at construction");
                let mut rng = stream.child(st.z as u64).rng();
                for _ in 0..st.positions.len() {
                    self.scratch.push(table.draw(cum, &mut rng));
                }
            }
        }
    }

    /// Writes the counts of one resample into `out` (length I*J*K).
    pub fn resample_counts(&mut self, stream: &SeedStream, out: &mut [u64]) {
        let space = self.data.space();
        out.iter_mut().for_each(|c| *c = 0);
        for k in 0..self.strata.len() {
            self.fill_stratum(k, stream);
            let st = &self.strata[k];
            for (&x, &y) in self.scratch.iter().zip(&st.ys) {
                out[space.index(x, y, st.z)] += 1;
            }
        }
    }

    pub fn resample_dataset(&mut self, stream: &SeedStream) -> Dataset {
        let mut xs = self.data.xs().to_vec();
        for k in 0..self.strata.len() {
            self.fill_stratum(k, stream);
            let st = &self.strata[k];
            for (&x, &pos) in self.scratch.iter().zip(&st.positions) {
                xs[pos] = x;
            }
        }
        self.data.with_xs(xs)
    }
}

/// One CP resample of `data`.
pub fn cp_resample(data: &Dataset, stream: &SeedStream) -> Dataset {
    Resampler::build(data, Scheme::Cp, None)
        .expect("CP needs no conditional")
        .resample_dataset(stream)
}

/// One CR resample of `data` using the conditional law `q(x|z)`.
pub fn cr_resample(data: &Dataset, conditional: &ConditionalTable, stream: &SeedStream) -> Result<Dataset> {
    Ok(Resampler::build(data, Scheme::Cr, Some(conditional))?.resample_dataset(stream))
}

/// Margins that determine the law of a CP-resampled table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableLaw {
    space: LabelSpace,
    xz: Vec<u64>,
    yz: Vec<u64>,
    z: Vec<u64>,
}

/// Default cap on the number of tables [`enumerate_tables`] will produce.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

impl TableLaw {
    /// `xz` is indexed `x + I*z`, `yz` is indexed `y + J*z`.
    pub fn new(space: LabelSpace, xz: Vec<u64>, yz: Vec<u64>) -> Result<Self> {
        let (ni, nj, nk) = (space.size_x(), space.size_y(), space.size_z());
        if xz.len() != ni * nk {
            return Err(Error::DimensionMismatch(xz.len(), ni * nk));
        }
        if yz.len() != nj * nk {
            return Err(Error::DimensionMismatch(yz.len(), nj * nk));
        }
        let mut z = Vec::with_capacity(nk);
        for k in 0..nk {
            let a: u64 = xz[ni * k..ni * (k + 1)].iter().sum();
            let b: u64 = yz[nj * k..nj * (k + 1)].iter().sum();
            if a != b {
                return Err(Error::InconsistentMargins(format!(
                    "stratum {k}: x margins sum to {a}, y margins to {b}"
                )));
            }
            z.push(a);
        }
        Ok(Self { space, xz, yz, z })
    }

    pub fn from_counts(counts: &CellCounts) -> Self {
        Self::new(counts.space(), counts.n_xz(), counts.n_yz()).expect("margins of a table agree")
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn n(&self) -> u64 {
        self.z.iter().sum()
    }

    fn satisfied_by(&self, k: &CellCounts) -> bool {
        k.space() == self.space && k.n_xz() == self.xz && k.n_yz() == self.yz
    }
}

/// `ln P*(n p_hat* = k)`; `f64::NEG_INFINITY` when `k` violates the margins.
pub fn table_log_prob(law: &TableLaw, k: &CellCounts) -> f64 {
    if !law.satisfied_by(k) {
        return f64::NEG_INFINITY;
    }
    let lf = LogFactorial::new(law.n());
    let mut total = law.xz.iter().chain(&law.yz).map(|&v| lf.get(v)).sum::<f64>();
    total -= law.z.iter().map(|&v| lf.get(v)).sum::<f64>();
    total -= k.counts().iter().map(|&v| lf.get(v)).sum::<f64>();
    total
}

/// All I x J tables with row sums `rows` and column sums `cols`, row-major.
fn stratum_tables(rows: &[u64], cols: &[u64], cap: usize) -> Option<Vec<Vec<u64>>> {
    fn fill_row(
        rows: &[u64],
        row: usize,
        col: usize,
        remaining_row: u64,
        colrem: &mut Vec<u64>,
        current: &mut Vec<u64>,
        out: &mut Vec<Vec<u64>>,
        cap: usize,
    ) -> bool {
        let nj = colrem.len();
        let ni = rows.len();
        if row == ni - 1 {
            // last row is forced by the column remainders
            let start = current.len();
            current.extend_from_slice(colrem);
            out.push(current.clone());
            current.truncate(start);
            return out.len() <= cap;
        }
        if col == nj - 1 {
            if remaining_row > colrem[col] {
                return true;
            }
            colrem[col] -= remaining_row;
            current.push(remaining_row);
            let next = rows[row + 1];
            let ok = fill_row(rows, row + 1, 0, next, colrem, current, out, cap);
            current.pop();
            colrem[col] += remaining_row;
            return ok;
        }
        let hi = remaining_row.min(colrem[col]);
        for v in 0..=hi {
            colrem[col] -= v;
            current.push(v);
            let ok = fill_row(rows, row, col + 1, remaining_row - v, colrem, current, out, cap);
            current.pop();
            colrem[col] += v;
            if !ok {
                return false;
            }
        }
        true
    }
    let mut out = Vec::new();
    let mut colrem = cols.to_vec();
    let mut current = Vec::with_capacity(rows.len() * cols.len());
    if fill_row(rows, 0, 0, rows[0], &mut colrem, &mut current, &mut out, cap) {
        Some(out)
    } else {
        None
    }
}

/// Every count array compatible with the law's margins, each exactly once.
pub fn enumerate_tables(law: &TableLaw, cap: usize) -> Result<Vec<CellCounts>> {
    let space = law.space;
    let (ni, nj, nk) = (space.size_x(), space.size_y(), space.size_z());
    let mut per_stratum = Vec::with_capacity(nk);
    let mut total = 1.0f64;
    for z in 0..nk {
        let rows = &law.xz[ni * z..ni * (z + 1)];
        let cols = &law.yz[nj * z..nj * (z + 1)];
        let tables = stratum_tables(rows, cols, cap).ok_or(Error::EnumerationTooLarge {
            count: f64::INFINITY,
            cap,
        })?;
        total *= tables.len() as f64;
        if total > cap as f64 {
            return Err(Error::EnumerationTooLarge { count: total, cap });
        }
        per_stratum.push(tables);
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut idx = vec![0usize; nk];
    loop {
        let mut counts = vec![0u64; space.total_cells()];
        for z in 0..nk {
            let t = &per_stratum[z][idx[z]];
            for x in 0..ni {
                for y in 0..nj {
                    // stratum tables are row-major over (x, y)
                    counts[space.index(x, y, z)] = t[x * nj + y];
                }
            }
        }
        out.push(CellCounts::new(space, counts)?);
        let mut z = 0;
        loop {
            if z == nk {
                return Ok(out);
            }
            idx[z] += 1;
            if idx[z] < per_stratum[z].len() {
                break;
            }
            idx[z] = 0;
            z += 1;
        }
    }
}
