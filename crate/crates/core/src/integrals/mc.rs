//! Monte Carlo evaluation of resolved integrands.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::form::{Base, Integrand, Test};
use crate::error::{contract, Result};
use crate::rng::sampler;

/// A finite union of closed intervals `B₊ ⊆ [0, 1]`; the symmetric set
/// `B = B₊ ∪ (-B₊)` is what the integration variables range over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    positive: Vec<(f64, f64)>,
}

impl IntervalSet {
    /// Validates that the intervals are ordered, disjoint, inside `[0, 1]`
    /// and of positive total length.
    pub fn new(mut positive: Vec<(f64, f64)>) -> Result<Self> {
        positive.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(lo, hi) in &positive {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return contract(format!("interval [{lo}, {hi}] not inside [0, 1]"));
            }
        }
        for w in positive.windows(2) {
            if w[1].0 < w[0].1 {
                return contract("overlapping intervals");
            }
        }
        let set = Self { positive };
        if set.positive_length() <= 0.0 {
            return contract("interval set has zero length");
        }
        Ok(set)
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.positive
    }

    pub fn positive_length(&self) -> f64 {
        self.positive.iter().map(|(lo, hi)| hi - lo).sum()
    }

    /// `|B|`, counting both signs.
    pub fn volume(&self) -> f64 {
        2.0 * self.positive_length()
    }

    pub fn contains(&self, x: f64) -> bool {
        let a = x.abs();
        self.positive.iter().any(|&(lo, hi)| lo <= a && a <= hi)
    }

    // Inverse CDF of the uniform law on B, u ∈ [0, 1).
    fn quantile(&self, u: f64) -> f64 {
        let half = self.positive_length();
        let (sign, mut t) = if u < 0.5 { (-1.0, 2.0 * u * half) } else { (1.0, (2.0 * u - 1.0) * half) };
        for &(lo, hi) in &self.positive {
            let len = hi - lo;
            if t <= len {
                return sign * (lo + t);
            }
            t -= len;
        }
        sign * self.positive.last().map_or(0.0, |&(_, hi)| hi)
    }
}

/// Range of the variables `x_1..x_D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// `[-1, 1]`.
    Full,
    /// A symmetric union of intervals.
    Sparse(IntervalSet),
}

impl Region {
    pub fn volume(&self) -> f64 {
        match self {
            Region::Full => 2.0,
            Region::Sparse(s) => s.volume(),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            Region::Full => (-1.0..=1.0).contains(&x),
            Region::Sparse(s) => s.contains(x),
        }
    }

    pub fn sample(&self, u: f64) -> f64 {
        match self {
            Region::Full => 2.0 * u - 1.0,
            Region::Sparse(s) => s.quantile(u),
        }
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

impl MCEstimate {
    pub fn exact(value: f64, seed: u64) -> Self {
        Self {
            value,
            std_error: 0.0,
            samples: 0,
            seed,
        }
    }

    pub fn scaled(self, w: f64) -> Self {
        Self {
            value: w * self.value,
            std_error: w.abs() * self.std_error,
            ..self
        }
    }

    /// Sum of independent estimates; errors add in quadrature.
    pub fn sum<'a>(parts: impl IntoIterator<Item = &'a MCEstimate>, seed: u64) -> Self {
        let mut out = Self::exact(0.0, seed);
        let mut var = 0.0;
        for p in parts {
            out.value += p.value;
            var += p.std_error * p.std_error;
            out.samples += p.samples;
        }
        out.std_error = var.sqrt();
        out
    }

    /// `(value - reference) / std_error`, or `None` for exact estimates.
    pub fn z_score(&self, reference: f64) -> Option<f64> {
        (self.std_error > 0.0).then(|| (self.value - reference) / self.std_error)
    }
}

struct Compiled {
    base: Base,
    coeffs: Vec<f64>,
    unit: bool,
}

fn compile(integrand: &Integrand) -> Vec<Compiled> {
    integrand
        .indicators
        .iter()
        .map(|ind| {
            let scale = match ind.test {
                Test::Unit => integrand.b,
                Test::InRegion => 1.0,
            };
            Compiled {
                base: ind.form.base,
                coeffs: ind.form.coeffs.iter().map(|&c| scale * c as f64).collect(),
                unit: ind.test == Test::Unit,
            }
        })
        .collect()
}

/// Uniform-sampling estimate of the integral.
///
/// An integrand with a nonzero hyperplane constraint is exactly zero. The
/// delta constraint must have been resolved first.
pub fn mc_evaluate(integrand: &Integrand, samples: u64, seed: u64) -> Result<MCEstimate> {
    if samples == 0 {
        return contract("mc_evaluate needs at least one sample");
    }
    if integrand.delta.is_some() {
        return contract("resolve the delta constraint before sampling");
    }
    if integrand.is_null() {
        return Ok(MCEstimate::exact(0.0, seed));
    }
    let compiled = compile(integrand);
    let region = &integrand.region;
    let volume = region.volume().powi(integrand.dim as i32);
    let mut rng = sampler(seed);
    let mut xs = vec![0.0; integrand.dim];
    let mut hits = 0u64;
    for _ in 0..samples {
        let x0: f64 = rng.random();
        let y0: f64 = if integrand.has_y0 { rng.random() } else { 0.0 };
        for x in xs.iter_mut() {
            *x = region.sample(rng.random());
        }
        let inside = compiled.iter().all(|c| {
            let lin: f64 = c.coeffs.iter().zip(&xs).map(|(a, x)| a * x).sum();
            if c.unit {
                let v = lin
                    + match c.base {
                        Base::None => 0.0,
                        Base::X0 => x0,
                        Base::Y0 => y0,
                    };
                (0.0..=1.0).contains(&v)
            } else {
                region.contains(lin)
            }
        });
        hits += u64::from(inside);
    }
    let n = samples as f64;
    let p = hits as f64 / n;
    let std_error = if samples > 1 {
        volume * (p * (1.0 - p) / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MCEstimate {
        value: volume * p,
        std_error,
        samples,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrals::form::{build_moment_integrand, AffineForm, Indicator};
    use crate::partitions::PairPartition;

    #[test]
    fn interval_set_validation() {
        assert!(IntervalSet::new(vec![(0.0, 0.5), (0.4, 0.6)]).is_err());
        assert!(IntervalSet::new(vec![(0.0, 1.5)]).is_err());
        assert!(IntervalSet::new(vec![(0.3, 0.3)]).is_err());
        let s = IntervalSet::new(vec![(0.5, 0.75), (0.0, 0.25)]).unwrap();
        assert_eq!(s.volume(), 1.0);
        assert!(s.contains(-0.6));
        assert!(!s.contains(0.3));
    }

    #[test]
    fn quantile_stays_in_set() {
        let s = IntervalSet::new(vec![(0.1, 0.2), (0.6, 0.9)]).unwrap();
        for i in 0..1000 {
            let x = s.quantile(i as f64 / 1000.0);
            assert!(s.contains(x), "{x}");
        }
        assert!(s.quantile(0.0) < 0.0 && s.quantile(0.99) > 0.0);
    }

    #[test]
    fn second_moment_integral() {
        // ∫∫ 1{0 ≤ x0 + b x ≤ 1} = 2 - b
        let pi = PairPartition::from_blocks(&[&[1, 2]]).unwrap();
        for b in [0.0, 0.5, 1.0] {
            let g = build_moment_integrand(&pi, b).unwrap();
            let e = mc_evaluate(&g, 200_000, 11).unwrap();
            assert!((e.value - (2.0 - b)).abs() < 4.0 * e.std_error.max(1e-12), "{b}: {e:?}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let pi = PairPartition::from_blocks(&[&[1, 3], &[2, 4]]).unwrap();
        let g = build_moment_integrand(&pi, 0.8).unwrap();
        assert_eq!(mc_evaluate(&g, 5000, 3).unwrap(), mc_evaluate(&g, 5000, 3).unwrap());
        assert_ne!(mc_evaluate(&g, 5000, 3).unwrap().value, mc_evaluate(&g, 5000, 4).unwrap().value);
    }

    #[test]
    fn null_and_bad_inputs() {
        let pi = PairPartition::from_blocks(&[&[1, 2]]).unwrap();
        let mut g = build_moment_integrand(&pi, 0.5).unwrap();
        assert!(mc_evaluate(&g, 0, 1).is_err());
        g.hyperplanes.push(AffineForm {
            base: Base::None,
            coeffs: vec![1],
        });
        let e = mc_evaluate(&g, 10, 1).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
        g.hyperplanes.clear();
        g.delta = Some(AffineForm {
            base: Base::None,
            coeffs: vec![1],
        });
        assert!(mc_evaluate(&g, 10, 1).is_err());
    }

    #[test]
    fn sparse_region_volume() {
        // ∫_{B} ∫ 1{...} with b = 0 is |B|.
        let s = IntervalSet::new(vec![(0.0, 0.25)]).unwrap();
        let g = Integrand {
            dim: 1,
            has_y0: false,
            b: 0.0,
            indicators: vec![Indicator {
                form: AffineForm {
                    base: Base::X0,
                    coeffs: vec![1],
                },
                test: Test::Unit,
            }],
            delta: None,
            hyperplanes: vec![],
            region: Region::Sparse(s),
        };
        let e = mc_evaluate(&g, 1000, 2).unwrap();
        assert_eq!(e.value, 0.5);
    }

    #[test]
    fn sum_in_quadrature() {
        let a = MCEstimate {
            value: 1.0,
            std_error: 3.0,
            samples: 10,
            seed: 0,
        };
        let b = MCEstimate {
            value: 2.0,
            std_error: 4.0,
            samples: 5,
            seed: 0,
        };
        let s = MCEstimate::sum([&a, &b], 9);
        assert_eq!((s.value, s.std_error, s.samples, s.seed), (3.0, 5.0, 15, 9));
        assert_eq!(a.scaled(-2.0).std_error, 6.0);
    }
}
