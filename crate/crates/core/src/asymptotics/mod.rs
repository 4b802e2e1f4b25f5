//! Asymptotic machinery: CMI gradient and Hessian, the resampling
//! covariance matrices, the matrix `M = H Σ` and the PSD ordering check.
//!
//! All matrices are indexed by the flat cell index of the label space.

pub mod linalg;
pub mod special;

pub use linalg::{symmetric_eigenvalues, Matrix};
pub use special::{chisq_sf, std_normal_cdf, ChiSquareRef};

use crate::error::{Error, Result};
use crate::info::cmi;
use crate::model::{JointPmf, LabelSpace, Margins};
use crate::resample::Scheme;

/// An asymptotic covariance matrix of `sqrt(n) (p_hat* - center)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    space: LabelSpace,
    matrix: Matrix,
}

impl CovMatrix {
    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

/// Hessian of CMI viewed as a function of the cell probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct HessMatrix {
    space: LabelSpace,
    matrix: Matrix,
}

impl HessMatrix {
    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }
}

fn require_positive(p: &JointPmf) -> Result<()> {
    match p.probs().iter().position(|&v| v <= 0.0) {
        Some(cell) => Err(Error::NonPositivePmf {
            cell,
            value: p.probs()[cell],
        }),
        None => Ok(()),
    }
}

/// `D(x,y,z) = ln[p(x,y,z) p(z) / (p(x,z) p(y,z))]`.
pub fn cmi_gradient(p: &JointPmf) -> Result<Vec<f64>> {
    require_positive(p)?;
    let space = p.space();
    let m = p.margins();
    Ok(p.probs()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let (x, y, z) = space.coords(i);
            (v * m.p_z(z) / (m.p_xz(x, z) * m.p_yz(y, z))).ln()
        })
        .collect())
}

pub fn cmi_hessian(p: &JointPmf) -> Result<HessMatrix> {
    require_positive(p)?;
    let space = p.space();
    let m = p.margins();
    let n = space.total_cells();
    let matrix = Matrix::from_fn(n, n, |r, c| {
        let (x, y, z) = space.coords(r);
        let (x2, y2, z2) = space.coords(c);
        if z != z2 {
            return 0.0;
        }
        let mut h = 1.0 / m.p_z(z);
        if x == x2 {
            h -= 1.0 / m.p_xz(x, z);
        }
        if y == y2 {
            h -= 1.0 / m.p_yz(y, z);
        }
        if x == x2 && y == y2 {
            h += 1.0 / p.probs()[r];
        }
        h
    });
    Ok(HessMatrix { space, matrix })
}

struct Conditionals<'a> {
    m: &'a Margins,
}

impl Conditionals<'_> {
    fn x(&self, x: usize, z: usize) -> f64 {
        self.m.x_given_z(x, z)
    }
    fn y(&self, y: usize, z: usize) -> f64 {
        self.m.y_given_z(y, z)
    }
}

/// Covariance of the conditional permutation limit. Block diagonal in z.
pub fn sigma_cp(p: &JointPmf) -> Result<CovMatrix> {
    require_positive(p)?;
    let space = p.space();
    let margins = p.margins();
    let q = Conditionals { m: &margins };
    let n = space.total_cells();
    let matrix = Matrix::from_fn(n, n, |r, c| {
        let (x, y, z) = space.coords(r);
        let (x2, y2, z2) = space.coords(c);
        if z != z2 {
            return 0.0;
        }
        let (px, py, px2, py2) = (q.x(x, z), q.y(y, z), q.x(x2, z), q.y(y2, z));
        let mut s = px * py * px2 * py2;
        if x == x2 {
            s -= px * py * py2;
        }
        if y == y2 {
            s -= px * px2 * py;
        }
        if x == x2 && y == y2 {
            s += px * py;
        }
        margins.p_z(z) * s
    });
    Ok(CovMatrix { space, matrix })
}

/// Covariance of the conditional randomisation limit; nonzero only
/// when `y = y'` and `z = z'`.
pub fn sigma_cr(p: &JointPmf) -> Result<CovMatrix> {
    require_positive(p)?;
    let space = p.space();
    let margins = p.margins();
    let q = Conditionals { m: &margins };
    let n = space.total_cells();
    let matrix = Matrix::from_fn(n, n, |r, c| {
        let (x, y, z) = space.coords(r);
        let (x2, y2, z2) = space.coords(c);
        if y != y2 || z != z2 {
            return 0.0;
        }
        let base = q.x(x, z) * q.y(y, z) * margins.p_z(z);
        let mut s = -base * q.x(x2, z);
        if x == x2 {
            s += base;
        }
        s
    });
    Ok(CovMatrix { space, matrix })
}

fn require_ci(p: &JointPmf) -> Result<()> {
    require_positive(p)?;
    let c = cmi(p).raw();
    if c.abs() >= 1e-10 {
        return Err(Error::NotConditionallyIndependent(c));
    }
    Ok(())
}

/// `M = H(p) Σ(p)` for the chosen scheme; `p` must be a strictly
/// positive CI pmf.
pub fn m_matrix(p: &JointPmf, scheme: Scheme) -> Result<Matrix> {
    require_ci(p)?;
    let h = cmi_hessian(p)?;
    let sigma = match scheme {
        Scheme::Cp => sigma_cp(p)?,
        Scheme::Cr => sigma_cr(p)?,
    };
    h.matrix.matmul(&sigma.matrix)
}

/// Closed form of `M`, built directly from the conditionals of `p`.
pub fn m_closed_form(p: &JointPmf) -> Result<Matrix> {
    require_ci(p)?;
    let space = p.space();
    let margins = p.margins();
    let q = Conditionals { m: &margins };
    let n = space.total_cells();
    Ok(Matrix::from_fn(n, n, |r, c| {
        let (x, y, z) = space.coords(r);
        let (x2, y2, z2) = space.coords(c);
        if z != z2 {
            return 0.0;
        }
        let mut v = q.x(x2, z) * q.y(y2, z);
        if x == x2 {
            v -= q.y(y2, z);
        }
        if y == y2 {
            v -= q.x(x2, z);
        }
        if x == x2 && y == y2 {
            v += 1.0;
        }
        v
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    /// `b - a` is PSD within `-1e-10`.
    pub holds: bool,
    pub min_eigenvalue: f64,
}

/// Checks `a <= b` in the Loewner order (`b - a` positive semi-definite).
pub fn psd_order_check(a: &Matrix, b: &Matrix) -> Result<PsdReport> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(a.rows(), b.rows()));
    }
    let ev = symmetric_eigenvalues(&b.sub(a)?)?;
    let min_eigenvalue = ev.first().copied().unwrap_or(0.0);
    Ok(PsdReport {
        holds: min_eigenvalue >= -1e-10,
        min_eigenvalue,
    })
}
