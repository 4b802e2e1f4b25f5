//! Label spaces, joint pmfs, samples and contingency counts.
//!
//! Every table over the grid X x Y x Z is stored densely with the flat
//! index `x + I*y + I*J*z`.

use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Alphabet sizes `I = |X|`, `J = |Y|`, `K = |Z|`.
///
/// A tuple `Z = (Z_1, .., Z_s)` enters as a single flattened index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelSpace {
    size_x: usize,
    size_y: usize,
    size_z: usize,
}

impl LabelSpace {
    pub fn new(size_x: usize, size_y: usize, size_z: usize) -> Result<Self> {
        if size_x < 2 || size_y < 2 || size_z < 1 {
            return Err(Error::InvalidLabelSpace {
                size_x,
                size_y,
                size_z,
            });
        }
        Ok(Self {
            size_x,
            size_y,
            size_z,
        })
    }

    pub fn size_x(&self) -> usize {
        self.size_x
    }

    pub fn size_y(&self) -> usize {
        self.size_y
    }

    pub fn size_z(&self) -> usize {
        self.size_z
    }

    pub fn total_cells(&self) -> usize {
        self.size_x * self.size_y * self.size_z
    }

    /// `(I-1)(J-1)K`, the degrees of freedom of the limiting chi-square law.
    pub fn asymptotic_df(&self) -> usize {
        (self.size_x - 1) * (self.size_y - 1) * self.size_z
    }

    pub fn flat_index(&self, x: usize, y: usize, z: usize) -> Result<usize> {
        if x >= self.size_x || y >= self.size_y || z >= self.size_z {
            return Err(Error::OutOfRange(format!(
                "({x}, {y}, {z}) not in {}x{}x{}",
                self.size_x, self.size_y, self.size_z
            )));
        }
        Ok(self.index(x, y, z))
    }

    pub fn unflat(&self, i: usize) -> Result<(usize, usize, usize)> {
        if i >= self.total_cells() {
            return Err(Error::OutOfRange(format!(
                "flat index {i} >= {}",
                self.total_cells()
            )));
        }
        Ok(self.coords(i))
    }

    #[inline]
    pub(crate) fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.size_x * (y + self.size_y * z)
    }

    #[inline]
    pub(crate) fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.size_x;
        let rest = i / self.size_x;
        (x, rest % self.size_y, rest / self.size_y)
    }
}

fn sum_tolerance(cells: usize) -> f64 {
    1e-12 * (cells as f64 / 1024.0).max(1.0)
}

/// Dense probability mass function over `X x Y x Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    space: LabelSpace,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(space: LabelSpace, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != space.total_cells() {
            return Err(Error::DimensionMismatch(probs.len(), space.total_cells()));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidPmf(format!("cell {i} is {}", probs[i])));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > sum_tolerance(probs.len()) {
            return Err(Error::InvalidPmf(format!("entries sum to {total}")));
        }
        Ok(Self { space, probs })
    }

    /// Normalises non-negative weights into a pmf.
    pub fn from_weights(space: LabelSpace, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidPmf(format!("weights sum to {total}")));
        }
        Self::new(space, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(space: LabelSpace) -> Self {
        let c = space.total_cells();
        Self {
            space,
            probs: vec![1.0 / c as f64; c],
        }
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: usize, y: usize, z: usize) -> Result<f64> {
        Ok(self.probs[self.space.flat_index(x, y, z)?])
    }

    pub fn margins(&self) -> Margins {
        Margins::from_cells(self.space, &self.probs)
    }
}

/// The margins p(z), p(x,z) and p(y,z) of a pmf.
#[derive(Debug, Clone, PartialEq)]
pub struct Margins {
    space: LabelSpace,
    z: Vec<f64>,
    xz: Vec<f64>,
    yz: Vec<f64>,
}

impl Margins {
    fn from_cells(space: LabelSpace, cells: &[f64]) -> Self {
        let (ni, nj, nk) = (space.size_x, space.size_y, space.size_z);
        let mut z = vec![0.0; nk];
        let mut xz = vec![0.0; ni * nk];
        let mut yz = vec![0.0; nj * nk];
        for (i, &p) in cells.iter().enumerate() {
            let (x, y, k) = space.coords(i);
            z[k] += p;
            xz[x + ni * k] += p;
            yz[y + nj * k] += p;
        }
        Self { space, z, xz, yz }
    }

    pub fn p_z(&self, z: usize) -> f64 {
        self.z[z]
    }

    pub fn p_xz(&self, x: usize, z: usize) -> f64 {
        self.xz[x + self.space.size_x * z]
    }

    pub fn p_yz(&self, y: usize, z: usize) -> f64 {
        self.yz[y + self.space.size_y * z]
    }

    /// p(x|z); zero on strata with p(z) = 0.
    pub fn x_given_z(&self, x: usize, z: usize) -> f64 {
        let pz = self.z[z];
        if pz > 0.0 {
            self.p_xz(x, z) / pz
        } else {
            0.0
        }
    }

    /// p(y|z); zero on strata with p(z) = 0.
    pub fn y_given_z(&self, y: usize, z: usize) -> f64 {
        let pz = self.z[z];
        if pz > 0.0 {
            self.p_yz(y, z) / pz
        } else {
            0.0
        }
    }
}

/// An ordered sample of `(x, y, z)` triples in a declared label space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    space: LabelSpace,
    xs: Vec<usize>,
    ys: Vec<usize>,
    zs: Vec<usize>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    x: usize,
    y: usize,
    z: usize,
}

impl Dataset {
    pub fn new(space: LabelSpace, rows: &[(usize, usize, usize)]) -> Result<Self> {
        let xs = rows.iter().map(|r| r.0).collect();
        let ys = rows.iter().map(|r| r.1).collect();
        let zs = rows.iter().map(|r| r.2).collect();
        Self::from_columns(space, xs, ys, zs)
    }

    pub fn from_columns(
        space: LabelSpace,
        xs: Vec<usize>,
        ys: Vec<usize>,
        zs: Vec<usize>,
    ) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptySample);
        }
        if xs.len() != ys.len() || xs.len() != zs.len() {
            return Err(Error::DimensionMismatch(xs.len(), ys.len().max(zs.len())));
        }
        for i in 0..xs.len() {
            space.flat_index(xs[i], ys[i], zs[i])?;
        }
        Ok(Self { space, xs, ys, zs })
    }

    /// Same `(y, z)` columns with a new x column. Caller guarantees range.
    pub(crate) fn with_xs(&self, xs: Vec<usize>) -> Self {
        debug_assert_eq!(xs.len(), self.xs.len());
        Self {
            space: self.space,
            xs,
            ys: self.ys.clone(),
            zs: self.zs.clone(),
        }
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn row(&self, i: usize) -> (usize, usize, usize) {
        (self.xs[i], self.ys[i], self.zs[i])
    }

    pub fn xs(&self) -> &[usize] {
        &self.xs
    }

    pub fn ys(&self) -> &[usize] {
        &self.ys
    }

    pub fn zs(&self) -> &[usize] {
        &self.zs
    }

    /// Reads a CSV with header `x,y,z`. Without a declared space the
    /// alphabet sizes are taken as `max + 1` (at least 2 for x and y).
    pub fn read_csv<R: Read>(reader: R, space: Option<LabelSpace>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 3 || &headers[0] != "x" || &headers[1] != "y" || &headers[2] != "z"
        {
            return Err(Error::Io(format!(
                "expected header x,y,z, found {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize() {
            let r: CsvRow = rec?;
            rows.push((r.x, r.y, r.z));
        }
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        let space = match space {
            Some(s) => s,
            None => {
                let mx = rows.iter().map(|r| r.0).max().unwrap_or(0);
                let my = rows.iter().map(|r| r.1).max().unwrap_or(0);
                let mz = rows.iter().map(|r| r.2).max().unwrap_or(0);
                LabelSpace::new((mx + 1).max(2), (my + 1).max(2), mz + 1)?
            }
        };
        Self::new(space, &rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "z"])?;
        for i in 0..self.len() {
            let (x, y, z) = self.row(i);
            w.write_record([x.to_string(), y.to_string(), z.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Contingency counts `n(x,y,z)` with total `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellCounts {
    space: LabelSpace,
    counts: Vec<u64>,
    n: u64,
}

impl CellCounts {
    pub fn new(space: LabelSpace, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != space.total_cells() {
            return Err(Error::DimensionMismatch(counts.len(), space.total_cells()));
        }
        let n = counts.iter().sum();
        Ok(Self { space, counts, n })
    }

    pub(crate) fn from_raw(space: LabelSpace, counts: Vec<u64>, n: u64) -> Self {
        debug_assert_eq!(counts.iter().sum::<u64>(), n);
        Self { space, counts, n }
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> Result<u64> {
        Ok(self.counts[self.space.flat_index(x, y, z)?])
    }

    /// `n(x,z)`, indexed `x + I*z`.
    pub fn n_xz(&self) -> Vec<u64> {
        let s = self.space;
        let mut out = vec![0; s.size_x * s.size_z];
        for (i, &c) in self.counts.iter().enumerate() {
            let (x, _, z) = s.coords(i);
            out[x + s.size_x * z] += c;
        }
        out
    }

    /// `n(y,z)`, indexed `y + J*z`.
    pub fn n_yz(&self) -> Vec<u64> {
        let s = self.space;
        let mut out = vec![0; s.size_y * s.size_z];
        for (i, &c) in self.counts.iter().enumerate() {
            let (_, y, z) = s.coords(i);
            out[y + s.size_y * z] += c;
        }
        out
    }

    pub fn n_z(&self) -> Vec<u64> {
        let s = self.space;
        let mut out = vec![0; s.size_z];
        for (i, &c) in self.counts.iter().enumerate() {
            out[s.coords(i).2] += c;
        }
        out
    }
}

pub fn count(data: &Dataset) -> CellCounts {
    let space = data.space;
    let mut counts = vec![0u64; space.total_cells()];
    for i in 0..data.len() {
        counts[space.index(data.xs[i], data.ys[i], data.zs[i])] += 1;
    }
    CellCounts::from_raw(space, counts, data.len() as u64)
}

pub fn empirical_pmf(counts: &CellCounts) -> Result<JointPmf> {
    if counts.n == 0 {
        return Err(Error::EmptySample);
    }
    let n = counts.n as f64;
    Ok(JointPmf {
        space: counts.space,
        probs: counts.counts.iter().map(|&c| c as f64 / n).collect(),
    })
}
