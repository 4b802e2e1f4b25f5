//! Conditional mutual information, KL divergence, the CI projection and
//! the shrinkage family `p_lambda`. All logarithms are natural.

use crate::error::{Error, Result};
use crate::model::{CellCounts, JointPmf, LabelSpace};

/// A CMI value in nats. `value` is clamped at zero; `raw` keeps the
/// unclamped sum for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmiValue {
    value: f64,
    raw: f64,
}

impl CmiValue {
    fn from_raw(raw: f64) -> Self {
        Self {
            value: raw.max(0.0),
            raw,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn raw(&self) -> f64 {
        self.raw
    }
}

pub fn cmi(p: &JointPmf) -> CmiValue {
    let space = p.space();
    let m = p.margins();
    let mut sum = 0.0;
    for (i, &pc) in p.probs().iter().enumerate() {
        if pc > 0.0 {
            let (x, y, z) = space.coords(i);
            sum += pc * (pc * m.p_z(z) / (m.p_xz(x, z) * m.p_yz(y, z))).ln();
        }
    }
    CmiValue::from_raw(sum)
}

/// Computes `n * CMI(p_hat)` from raw counts, omitting empty cells.
///
/// Each summand is `k * (ln k + ((ln n(z) - ln n(x,z)) - ln n(y,z)))` with
/// logarithms read from a table built with `f64::ln`, so equal count
/// vectors always give bit-identical results whichever caller built them.
#[derive(Debug, Clone)]
pub(crate) struct CountStatistic {
    space: LabelSpace,
    ln: Vec<f64>,
    nxz: Vec<u64>,
    nyz: Vec<u64>,
    nz: Vec<u64>,
}

impl CountStatistic {
    pub(crate) fn new(space: LabelSpace, n: u64) -> Self {
        let ln = (0..=n).map(|k| if k == 0 { 0.0 } else { (k as f64).ln() }).collect();
        Self {
            space,
            ln,
            nxz: vec![0; space.size_x() * space.size_z()],
            nyz: vec![0; space.size_y() * space.size_z()],
            nz: vec![0; space.size_z()],
        }
    }

    pub(crate) fn scaled_cmi(&mut self, counts: &[u64]) -> f64 {
        let s = self.space;
        let (ni, nj) = (s.size_x(), s.size_y());
        self.nxz.iter_mut().for_each(|v| *v = 0);
        self.nyz.iter_mut().for_each(|v| *v = 0);
        self.nz.iter_mut().for_each(|v| *v = 0);
        let mut i = 0;
        for z in 0..s.size_z() {
            for y in 0..nj {
                for x in 0..ni {
                    let k = counts[i];
                    self.nxz[x + ni * z] += k;
                    self.nyz[y + nj * z] += k;
                    self.nz[z] += k;
                    i += 1;
                }
            }
        }
        let ln = &self.ln;
        let mut sum = 0.0;
        let mut i = 0;
        for z in 0..s.size_z() {
            let lz = ln[self.nz[z] as usize];
            for y in 0..nj {
                let lyz = ln[self.nyz[y + nj * z] as usize];
                for x in 0..ni {
                    let k = counts[i];
                    if k > 0 {
                        let lxz = ln[self.nxz[x + ni * z] as usize];
                        sum += k as f64 * (ln[k as usize] + ((lz - lxz) - lyz));
                    }
                    i += 1;
                }
            }
        }
        sum
    }

    /// The test statistic `2n * CMI_hat`, clamped at zero.
    pub(crate) fn statistic(&mut self, counts: &[u64]) -> f64 {
        (2.0 * self.scaled_cmi(counts)).max(0.0)
    }
}

/// Plug-in CMI from counts; cells with `n(x,y,z) = 0` are omitted.
pub fn cmi_hat(counts: &CellCounts) -> CmiValue {
    if counts.n() == 0 {
        return CmiValue::from_raw(0.0);
    }
    let mut k = CountStatistic::new(counts.space(), counts.n());
    CmiValue::from_raw(k.scaled_cmi(counts.counts()) / counts.n() as f64)
}

/// `2n * CMI_hat`, the statistic used by every test.
pub fn statistic(counts: &CellCounts) -> f64 {
    CountStatistic::new(counts.space(), counts.n()).statistic(counts.counts())
}

pub fn kl_divergence(p: &JointPmf, q: &JointPmf) -> Result<f64> {
    if p.space() != q.space() {
        return Err(Error::SpaceMismatch);
    }
    let mut sum = 0.0;
    for (cell, (&a, &b)) in p.probs().iter().zip(q.probs()).enumerate() {
        if a > 0.0 {
            if b <= 0.0 {
                return Err(Error::AbsoluteContinuity { cell });
            }
            sum += a * (a / b).ln();
        }
    }
    Ok(sum.max(0.0))
}

/// `p_ci(x,y,z) = p(x|z) p(y|z) p(z)`, the KL projection of `p` onto the
/// conditionally independent pmfs. Strata with `p(z) = 0` stay zero.
pub fn ci_projection(p: &JointPmf) -> JointPmf {
    let space = p.space();
    let m = p.margins();
    let probs: Vec<f64> = (0..space.total_cells())
        .map(|i| {
            let (x, y, z) = space.coords(i);
            let pz = m.p_z(z);
            if pz > 0.0 {
                m.p_xz(x, z) * m.p_yz(y, z) / pz
            } else {
                0.0
            }
        })
        .collect();
    JointPmf::new(space, probs).expect("projection of a valid pmf is a valid pmf")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureParam(f64);

impl MixtureParam {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidLambda(lambda));
        }
        Ok(Self(lambda))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// `p_lambda = lambda * p_ci + (1 - lambda) * p`.
pub fn mix(p: &JointPmf, lambda: MixtureParam) -> JointPmf {
    let l = lambda.value();
    let pci = ci_projection(p);
    let probs = p
        .probs()
        .iter()
        .zip(pci.probs())
        .map(|(&a, &b)| l * b + (1.0 - l) * a)
        .collect();
    JointPmf::new(p.space(), probs).expect("convex combination of pmfs is a pmf")
}

pub fn min_cell_prob(p: &JointPmf) -> f64 {
    p.probs().iter().copied().fold(f64::INFINITY, f64::min)
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::model::{count, empirical_pmf, Dataset};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(i: usize, j: usize, k: usize) -> LabelSpace {
        LabelSpace::new(i, j, k).unwrap()
    }

    // High-precision value of 0.4 ln 1.6 * 2 + 0.1 ln 0.4 * 2 (mpmath, 30 digits).
    const CMI_0411: f64 = 0.192_744_757_021_757_43;

    #[test]
    fn cmi_of_two_by_two_table() {
        let p = JointPmf::new(s(2, 2, 1), vec![0.4, 0.1, 0.1, 0.4]).unwrap();
        assert!((cmi(&p).value() - CMI_0411).abs() < 1e-14);
    }

    #[test]
    fn cmi_zero_for_product_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let p = random_ci_pmf(&mut rng, s(3, 2, 4));
            assert!(cmi(&p).raw().abs() < 1e-12);
        }
    }

    #[test]
    fn cmi_hat_examples() {
        let space = s(2, 2, 1);
        let one = CellCounts::new(space, vec![0, 0, 7, 0]).unwrap();
        assert_eq!(cmi_hat(&one).value(), 0.0);
        let c = CellCounts::new(space, vec![4, 1, 1, 4]).unwrap();
        assert!((cmi_hat(&c).value() - CMI_0411).abs() < 1e-14);
        assert!((statistic(&c) - 20.0 * CMI_0411).abs() < 1e-12);
    }

    #[test]
    fn cmi_hat_matches_plugin_when_all_cells_filled() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let space = s(3, 3, 2);
        for _ in 0..50 {
            let counts = (0..18).map(|_| rng.gen_range(1..30)).collect();
            let c = CellCounts::new(space, counts).unwrap();
            let a = cmi_hat(&c).raw();
            let b = cmi(&empirical_pmf(&c).unwrap()).raw();
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn cmi_hat_omits_empty_cells() {
        let c = CellCounts::new(s(2, 2, 2), vec![3, 0, 1, 2, 0, 0, 0, 5]).unwrap();
        let v = cmi_hat(&c).value();
        assert!(v.is_finite());
        let direct = cmi(&empirical_pmf(&c).unwrap()).value();
        assert!((v - direct).abs() < 1e-14);
    }

    #[test]
    fn kl_examples() {
        let space = s(2, 2, 1);
        let u = JointPmf::uniform(space);
        assert_eq!(kl_divergence(&u, &u).unwrap(), 0.0);
        let q = JointPmf::new(space, vec![0.7, 0.1, 0.1, 0.1]).unwrap();
        // 0.25 * (ln(0.25/0.7) + 3 ln 2.5), via mpmath
        assert!((kl_divergence(&u, &q).unwrap() - 0.429_813_194_610_326_74).abs() < 1e-14);
        let z = JointPmf::new(space, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            kl_divergence(&u, &z),
            Err(Error::AbsoluteContinuity { cell: 1 })
        );
        assert_eq!(
            Error::AbsoluteContinuity { cell: 1 }.to_string(),
            "absolute continuity violated at cell 1"
        );
        assert_eq!(kl_divergence(&u, &JointPmf::uniform(s(2, 2, 2))), Err(Error::SpaceMismatch));
    }

    #[test]
    fn kl_to_projection_equals_cmi() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_pmf(&mut rng, s(3, 2, 3));
            let kl = kl_divergence(&p, &ci_projection(&p)).unwrap();
            assert!((kl - cmi(&p).value()).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_fixed_point_and_margins() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let space = s(3, 3, 4);
        for _ in 0..50 {
            let q = random_ci_pmf(&mut rng, space);
            let qq = ci_projection(&q);
            for (a, b) in q.probs().iter().zip(qq.probs()) {
                assert!((a - b).abs() < 1e-14);
            }
            let p = random_pmf(&mut rng, space);
            let pci = ci_projection(&p);
            assert!(cmi(&pci).raw().abs() < 1e-12);
            let (m, mc) = (p.margins(), pci.margins());
            for z in 0..4 {
                for x in 0..3 {
                    assert!((m.p_xz(x, z) - mc.p_xz(x, z)).abs() < 1e-14);
                    assert!((m.p_yz(x, z) - mc.p_yz(x, z)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn projection_zero_stratum() {
        let space = s(2, 2, 2);
        let p = JointPmf::new(space, vec![0.4, 0.1, 0.1, 0.4, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let pci = ci_projection(&p);
        assert!(pci.probs()[4..].iter().all(|&v| v == 0.0));
        assert!((pci.probs()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn projection_is_kl_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let space = s(3, 2, 3);
        for _ in 0..20 {
            let p = random_pmf(&mut rng, space);
            let best = kl_divergence(&p, &ci_projection(&p)).unwrap();
            for _ in 0..50 {
                let q = random_ci_pmf(&mut rng, space);
                assert!(best <= kl_divergence(&p, &q).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn zero_characterisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let space = s(2, 3, 2);
        for t in 0..200 {
            let p = if t % 2 == 0 {
                random_ci_pmf(&mut rng, space)
            } else {
                random_pmf(&mut rng, space)
            };
            let dev = p
                .probs()
                .iter()
                .zip(ci_projection(&p).probs())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert_eq!(cmi(&p).raw() < 1e-12, dev < 1e-8);
        }
    }

    #[test]
    fn non_negativity_on_random_pmfs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let p = random_pmf(&mut rng, s(2, 2, 3));
            assert!(cmi(&p).raw() >= -1e-12);
        }
    }

    #[test]
    fn mixture_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_pmf(&mut rng, s(2, 3, 3));
        assert_eq!(mix(&p, MixtureParam::new(0.0).unwrap()), p);
        let one = mix(&p, MixtureParam::new(1.0).unwrap());
        assert!(cmi(&one).raw().abs() < 1e-12);
        assert!(MixtureParam::new(1.5).is_err());
        assert!(MixtureParam::new(-0.1).is_err());
        let pci = ci_projection(&p);
        for l in [0.25, 0.5, 0.75] {
            let pl = mix(&p, MixtureParam::new(l).unwrap());
            let c = cmi(&pl).value();
            assert!(c > 0.0 && c < cmi(&p).value());
            for (a, b) in ci_projection(&pl).probs().iter().zip(pci.probs()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn min_cell_prob_uniform() {
        assert_eq!(min_cell_prob(&JointPmf::uniform(s(2, 2, 16))), 1.0 / 64.0);
    }

    #[test]
    fn estimator_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let space = s(2, 2, 2);
        let p = random_pmf(&mut rng, space);
        let cum: Vec<f64> = p
            .probs()
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect();
        let rows: Vec<_> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.gen();
                let i = cum.iter().position(|&c| u < c).unwrap_or(7);
                space.coords(i)
            })
            .collect();
        let c = count(&Dataset::new(space, &rows).unwrap());
        assert!((cmi_hat(&c).value() - cmi(&p).value()).abs() < 0.01);
    }
}
