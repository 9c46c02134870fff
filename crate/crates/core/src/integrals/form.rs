//! Symbolic integrands: products of interval indicators whose arguments are
//! integer linear forms in the integration variables.
//!
//! Variables: `x0` and (optionally) `y0` range over `[0, 1]`; `x_1..x_D`
//! range over the sampling region (`[-1, 1]` unless restricted). An
//! integrand optionally carries one Dirac delta on a linear form, which
//! [`resolve_delta`] eliminates, and a list of hyperplane forms that must
//! vanish identically for the integral to be nonzero.

use serde::{Deserialize, Serialize};

use super::mc::Region;
use crate::error::{contract, Result};
use crate::partitions::{sign_assignment, FourBlockPartition, PairPartition, Partition, SignKind};

/// Which `[0, 1]` base variable a form is anchored at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Base {
    None,
    X0,
    Y0,
}

/// `base + Σ_l coeffs[l] · x_{l+1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineForm {
    pub base: Base,
    pub coeffs: Vec<i64>,
}

impl AffineForm {
    pub fn zero(base: Base, dim: usize) -> Self {
        Self {
            base,
            coeffs: vec![0; dim],
        }
    }

    /// True when the linear part is identically zero.
    pub fn is_flat(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    /// Indices of the variables with a nonzero coefficient.
    pub fn support(&self) -> Vec<usize> {
        (0..self.coeffs.len()).filter(|&l| self.coeffs[l] != 0).collect()
    }

    pub fn linear(&self, xs: &[f64]) -> f64 {
        self.coeffs.iter().zip(xs).map(|(&c, &x)| c as f64 * x).sum()
    }

    /// Value with the linear part multiplied by `scale`.
    pub fn eval(&self, x0: f64, y0: f64, xs: &[f64], scale: f64) -> f64 {
        let base = match self.base {
            Base::None => 0.0,
            Base::X0 => x0,
            Base::Y0 => y0,
        };
        base + scale * self.linear(xs)
    }

    // Replaces x_var by Σ_m replacement[m] x_m and drops the x_var column.
    fn substitute(&self, var: usize, replacement: &[i64]) -> Self {
        let c = self.coeffs[var];
        let coeffs = (0..self.coeffs.len())
            .filter(|&m| m != var)
            .map(|m| self.coeffs[m] + c * replacement[m])
            .collect();
        Self {
            base: self.base,
            coeffs,
        }
    }
}

/// What an indicator tests its form against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Test {
    /// `base + b · linear ∈ [0, 1]`.
    Unit,
    /// `linear ∈ region` (no `b` scaling); produced by delta elimination.
    InRegion,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Indicator {
    pub form: AffineForm,
    pub test: Test,
}

/// A product of indicators over `[0,1] (× [0,1]) × region^dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Integrand {
    pub dim: usize,
    pub has_y0: bool,
    /// Global bandwidth ratio multiplying every `Unit` linear part.
    pub b: f64,
    pub indicators: Vec<Indicator>,
    pub delta: Option<AffineForm>,
    pub hyperplanes: Vec<AffineForm>,
    pub region: Region,
}

impl Integrand {
    /// True when some hyperplane form is not identically zero, so the
    /// integral vanishes.
    pub fn is_null(&self) -> bool {
        self.hyperplanes.iter().any(|h| !h.is_flat())
    }

    pub fn with_region(mut self, region: Region) -> Self {
        self.region = region;
        self
    }
}

fn check_b(b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&b) {
        return contract(format!("b = {b} outside [0, 1]"));
    }
    Ok(())
}

fn unit_indicator(base: Base, coeffs: Vec<i64>) -> Indicator {
    Indicator {
        form: AffineForm { base, coeffs },
        test: Test::Unit,
    }
}

// Partial sums Σ_{i=start}^{j} sign · rows[i] for j in start..end, each anchored at `base`.
fn cumulative(base: Base, rows: &[Vec<i64>], start: usize, end: usize, sign: i64) -> Vec<Indicator> {
    let dim = rows.first().map_or(0, |r| r.len());
    let mut acc = vec![0i64; dim];
    (start..end)
        .map(|i| {
            for (a, r) in acc.iter_mut().zip(&rows[i]) {
                *a += sign * r;
            }
            unit_indicator(base, acc.clone())
        })
        .collect()
}

fn sum_rows(rows: &[Vec<i64>], dim: usize) -> Vec<i64> {
    let mut acc = vec![0i64; dim];
    for r in rows {
        for (a, c) in acc.iter_mut().zip(r) {
            *a += c;
        }
    }
    acc
}

// Row i is the x-coefficient vector of y_{i+1} under y_i = sign_i · x_{block(i)}.
fn projected_rows(partition: &Partition, signs: impl Fn(usize) -> i64) -> Vec<Vec<i64>> {
    (1..=partition.m())
        .map(|e| {
            let mut row = vec![0i64; partition.len()];
            row[partition.block_of(e)] = signs(e);
            row
        })
        .collect()
}

/// Integrand of one pair partition's term in the limiting `2k`-th moment.
pub fn build_moment_integrand(pi: &PairPartition, b: f64) -> Result<Integrand> {
    check_b(b)?;
    let partition = pi.partition();
    let eps = sign_assignment(partition, SignKind::Epsilon)?;
    let rows = projected_rows(partition, |e| eps.sign(e) as i64);
    Ok(Integrand {
        dim: partition.len(),
        has_y0: false,
        b,
        indicators: cumulative(Base::X0, &rows, 0, rows.len(), 1),
        delta: None,
        hyperplanes: Vec::new(),
        region: Region::Full,
    })
}

/// Which of the two covariance integrals: `Minus` keeps `y0 + b Σ`, `Plus`
/// uses `y0 - b Σ` on the second group of indicators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignVariant {
    Minus,
    Plus,
}

/// A partition indexing a covariance term.
#[derive(Clone, Copy, Debug)]
pub enum CovariancePartition<'a> {
    /// A crossing pair partition (delta-constrained integral).
    TypeI(&'a PairPartition),
    /// A 4-block partition.
    TypeII(&'a FourBlockPartition),
}

impl CovariancePartition<'_> {
    pub fn partition(&self) -> &Partition {
        match self {
            CovariancePartition::TypeI(p) => p.partition(),
            CovariancePartition::TypeII(p) => p.partition(),
        }
    }
}

fn check_type_i(pi: &PairPartition, p: usize, q: usize) -> Result<()> {
    if pi.partition().m() != p + q || pi.crossings(p) == 0 {
        return contract(format!("{pi} is not a crossing pairing of ({p}, {q})"));
    }
    Ok(())
}

fn check_type_ii(pi: &FourBlockPartition, p: usize, q: usize) -> Result<()> {
    if pi.split() != (p, q) {
        return contract(format!("{pi} is a 4-block partition of {:?}, not ({p}, {q})", pi.split()));
    }
    Ok(())
}

/// Integrand of one Toeplitz covariance term (`ε` signs for Type I with a
/// delta on the first-group sum, `τ` signs for Type II).
pub fn build_covariance_integrand(
    pi: CovariancePartition<'_>,
    p: usize,
    q: usize,
    variant: SignVariant,
    b: f64,
) -> Result<Integrand> {
    check_b(b)?;
    let (partition, kind) = match pi {
        CovariancePartition::TypeI(x) => {
            check_type_i(x, p, q)?;
            (x.partition(), SignKind::Epsilon)
        }
        CovariancePartition::TypeII(x) => {
            check_type_ii(x, p, q)?;
            (x.partition(), SignKind::Tau)
        }
    };
    let signs = sign_assignment(partition, kind)?;
    let rows = projected_rows(partition, |e| signs.sign(e) as i64);
    let second = match variant {
        SignVariant::Minus => 1,
        SignVariant::Plus => -1,
    };
    let mut indicators = cumulative(Base::X0, &rows, 0, p, 1);
    indicators.extend(cumulative(Base::Y0, &rows, p, p + q, second));
    let delta = match pi {
        CovariancePartition::TypeI(_) => Some(AffineForm {
            base: Base::None,
            coeffs: sum_rows(&rows[..p], partition.len()),
        }),
        CovariancePartition::TypeII(_) => None,
    };
    Ok(Integrand {
        dim: partition.len(),
        has_y0: true,
        b,
        indicators,
        delta,
        hyperplanes: Vec::new(),
        region: Region::Full,
    })
}

/// Integrand of one Hankel covariance term over letters `[2p] ∪ [2q]`.
///
/// Matched letters share one variable without orientation signs; the
/// alternating weights `(-1)^i` enter the indicators, the delta (Type I)
/// and the hyperplane constraints.
pub fn build_hankel_integrand(pi: CovariancePartition<'_>, p: usize, q: usize, b: f64) -> Result<Integrand> {
    check_b(b)?;
    let (lp, lq) = (2 * p, 2 * q);
    match pi {
        CovariancePartition::TypeI(x) => check_type_i(x, lp, lq)?,
        CovariancePartition::TypeII(x) => check_type_ii(x, lp, lq)?,
    }
    let partition = pi.partition();
    let alt = |e: usize| if e % 2 == 0 { 1 } else { -1 };
    let rows = projected_rows(partition, alt);
    let mut indicators = cumulative(Base::X0, &rows, 0, lp, -1);
    indicators.extend(cumulative(Base::Y0, &rows, lp, lp + lq, -1));
    let first = AffineForm {
        base: Base::None,
        coeffs: sum_rows(&rows[..lp], partition.len()),
    };
    let second = AffineForm {
        base: Base::None,
        coeffs: sum_rows(&rows[lp..], partition.len()),
    };
    let (delta, hyperplanes) = match pi {
        CovariancePartition::TypeI(_) => (Some(first), vec![second]),
        CovariancePartition::TypeII(_) => (None, vec![first, second]),
    };
    Ok(Integrand {
        dim: partition.len(),
        has_y0: true,
        b,
        indicators,
        delta,
        hyperplanes,
        region: Region::Full,
    })
}

/// `(-1)^{⌊(l-1)/s⌋}` for the 1-based letter `l`.
pub fn wishart_sign(l: usize, s: usize) -> i64 {
    if ((l - 1) / s) % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Integrand of one pair partition's term in the limiting `p`-th moment of
/// `T*^s T^s / b_n^s` (letters `[2ps]`, alternating groups of `s`).
pub fn build_wishart_integrand(pi: &PairPartition, s: usize, b: f64) -> Result<Integrand> {
    check_b(b)?;
    let partition = pi.partition();
    if s == 0 || partition.m() % (2 * s) != 0 {
        return contract(format!("{pi} does not have 2ps letters for s = {s}"));
    }
    let rows = projected_rows(partition, |e| wishart_sign(e, s));
    Ok(Integrand {
        dim: partition.len(),
        has_y0: false,
        b,
        indicators: cumulative(Base::X0, &rows, 0, rows.len(), 1),
        delta: None,
        hyperplanes: vec![AffineForm {
            base: Base::None,
            coeffs: sum_rows(&rows, partition.len()),
        }],
        region: Region::Full,
    })
}

/// Eliminates the delta constraint.
///
/// The lowest-index variable with coefficient `±1` is solved for and
/// substituted into every indicator and hyperplane form; the solved
/// expression must itself lie in the sampling region, which becomes a new
/// `InRegion` indicator. Unit coefficients make the Jacobian 1.
pub fn resolve_delta(integrand: &Integrand) -> Result<Integrand> {
    let Some(delta) = &integrand.delta else {
        return contract("integrand has no delta constraint");
    };
    if delta.is_flat() {
        return contract("delta constraint on the zero form");
    }
    let Some(var) = delta.coeffs.iter().position(|c| c.abs() == 1) else {
        return contract("delta form has no unit coefficient to eliminate");
    };
    let c = delta.coeffs[var];
    let replacement: Vec<i64> = delta
        .coeffs
        .iter()
        .enumerate()
        .map(|(m, &cm)| if m == var { 0 } else { -c * cm })
        .collect();
    let mut indicators: Vec<Indicator> = integrand
        .indicators
        .iter()
        .map(|ind| Indicator {
            form: ind.form.substitute(var, &replacement),
            test: ind.test,
        })
        .collect();
    let solved: Vec<i64> = replacement
        .iter()
        .enumerate()
        .filter(|&(m, _)| m != var)
        .map(|(_, &r)| r)
        .collect();
    indicators.push(Indicator {
        form: AffineForm {
            base: Base::None,
            coeffs: solved,
        },
        test: Test::InRegion,
    });
    Ok(Integrand {
        dim: integrand.dim - 1,
        has_y0: integrand.has_y0,
        b: integrand.b,
        indicators,
        delta: None,
        hyperplanes: integrand
            .hyperplanes
            .iter()
            .map(|h| h.substitute(var, &replacement))
            .collect(),
        region: integrand.region.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partitions::enumerate_p24;

    fn pair(blocks: &[&[usize]]) -> PairPartition {
        PairPartition::from_blocks(blocks).unwrap()
    }

    fn coeffs(ind: &[Indicator]) -> Vec<(Base, Vec<i64>)> {
        ind.iter().map(|i| (i.form.base, i.form.coeffs.clone())).collect()
    }

    #[test]
    fn moment_k1() {
        let g = build_moment_integrand(&pair(&[&[1, 2]]), 0.7).unwrap();
        assert_eq!(g.dim, 1);
        assert!(!g.has_y0);
        assert_eq!(coeffs(&g.indicators), [(Base::X0, vec![1]), (Base::X0, vec![0])]);
    }

    #[test]
    fn moment_k2_crossing() {
        let g = build_moment_integrand(&pair(&[&[1, 3], &[2, 4]]), 1.0).unwrap();
        assert_eq!(
            coeffs(&g.indicators),
            [
                (Base::X0, vec![1, 0]),
                (Base::X0, vec![1, 1]),
                (Base::X0, vec![0, 1]),
                (Base::X0, vec![0, 0]),
            ]
        );
        assert!(g.delta.is_none());
    }

    #[test]
    fn moment_rejects_bad_b() {
        assert!(build_moment_integrand(&pair(&[&[1, 2]]), 1.5).is_err());
    }

    #[test]
    fn covariance_type_i_delta() {
        let pi = pair(&[&[1, 3], &[2, 4]]);
        let g = build_covariance_integrand(CovariancePartition::TypeI(&pi), 2, 2, SignVariant::Minus, 0.5).unwrap();
        assert_eq!(g.delta.as_ref().unwrap().coeffs, [1, 1]);
        assert_eq!(g.dim, 2);
        assert_eq!(
            coeffs(&g.indicators),
            [
                (Base::X0, vec![1, 0]),
                (Base::X0, vec![1, 1]),
                (Base::Y0, vec![-1, 0]),
                (Base::Y0, vec![-1, -1]),
            ]
        );
        let plus = build_covariance_integrand(CovariancePartition::TypeI(&pi), 2, 2, SignVariant::Plus, 0.5).unwrap();
        for (m, p) in g.indicators.iter().zip(&plus.indicators) {
            match m.form.base {
                Base::X0 => assert_eq!(m.form.coeffs, p.form.coeffs),
                _ => assert_eq!(m.form.coeffs, p.form.coeffs.iter().map(|c| -c).collect::<Vec<_>>()),
            }
        }
    }

    #[test]
    fn covariance_type_ii_tau() {
        let four = &enumerate_p24(2, 2).unwrap()[0];
        let g = build_covariance_integrand(CovariancePartition::TypeII(four), 2, 2, SignVariant::Minus, 1.0).unwrap();
        assert!(g.delta.is_none());
        assert_eq!(g.dim, 1);
        assert_eq!(g.indicators[0].form.coeffs, [1]);
        assert_eq!(g.indicators[1].form.coeffs, [0]);
    }

    #[test]
    fn covariance_rejects_wrong_class() {
        let non_crossing = pair(&[&[1, 2], &[3, 4]]);
        assert!(
            build_covariance_integrand(CovariancePartition::TypeI(&non_crossing), 2, 2, SignVariant::Minus, 0.5)
                .is_err()
        );
        let four = &enumerate_p24(2, 2).unwrap()[0];
        assert!(build_covariance_integrand(CovariancePartition::TypeII(four), 4, 0, SignVariant::Plus, 0.5).is_err());
    }

    #[test]
    fn delta_resolution() {
        let pi = pair(&[&[1, 3], &[2, 4]]);
        let g = build_covariance_integrand(CovariancePartition::TypeI(&pi), 2, 2, SignVariant::Minus, 0.5).unwrap();
        let r = resolve_delta(&g).unwrap();
        // x1 := -x2; only x0, y0, x2 remain.
        assert_eq!(r.dim, 1);
        assert!(r.delta.is_none());
        assert_eq!(coeffs(&r.indicators[..4]), [
            (Base::X0, vec![-1]),
            (Base::X0, vec![0]),
            (Base::Y0, vec![1]),
            (Base::Y0, vec![0]),
        ]);
        let last = r.indicators.last().unwrap();
        assert_eq!(last.test, Test::InRegion);
        assert_eq!(last.form.coeffs, [-1]);
        assert!(resolve_delta(&r).is_err());
    }

    #[test]
    fn delta_resolution_difference() {
        let g = Integrand {
            dim: 3,
            has_y0: false,
            b: 1.0,
            indicators: vec![unit_indicator(Base::X0, vec![1, 1, 1])],
            delta: Some(AffineForm {
                base: Base::None,
                coeffs: vec![1, 0, -1],
            }),
            hyperplanes: vec![],
            region: Region::Full,
        };
        let r = resolve_delta(&g).unwrap();
        // x1 := x3
        assert_eq!(r.indicators[0].form.coeffs, [1, 2]);
        assert_eq!(r.indicators[1].form.coeffs, [0, 1]);
    }

    #[test]
    fn hankel_hyperplanes() {
        // {{1,3},{2,4}} over 2 + 2 letters: delta -x1 + x2, second-group form -x1 + x2.
        let pi = pair(&[&[1, 3], &[2, 4]]);
        let g = build_hankel_integrand(CovariancePartition::TypeI(&pi), 1, 1, 1.0).unwrap();
        assert_eq!(g.delta.as_ref().unwrap().coeffs, [-1, 1]);
        assert_eq!(g.hyperplanes[0].coeffs, [-1, 1]);
        let r = resolve_delta(&g).unwrap();
        assert!(!r.is_null());
        let pi = pair(&[&[1, 5], &[2, 6], &[3, 4]]);
        let g = build_hankel_integrand(CovariancePartition::TypeI(&pi), 2, 1, 1.0).unwrap();
        let r = resolve_delta(&g).unwrap();
        assert!(!r.is_null());
        // delta -2x1 + x2 + x3 gives x2 := 2x1 - x3, leaving -2x1 + 2x3 on the right.
        let pi = pair(&[&[1, 3], &[2, 5], &[4, 6]]);
        let g = build_hankel_integrand(CovariancePartition::TypeI(&pi), 2, 1, 1.0).unwrap();
        let r = resolve_delta(&g).unwrap();
        assert!(r.is_null());
    }

    #[test]
    fn wishart_signs() {
        let s: Vec<i64> = (1..=8).map(|l| wishart_sign(l, 2)).collect();
        assert_eq!(s, [1, 1, -1, -1, 1, 1, -1, -1]);
        let pi = pair(&[&[1, 2]]);
        let g = build_wishart_integrand(&pi, 1, 0.0).unwrap();
        assert!(!g.is_null());
        let pi = pair(&[&[1, 2], &[3, 4]]);
        let g = build_wishart_integrand(&pi, 2, 0.0).unwrap();
        assert!(g.is_null());
        assert!(build_wishart_integrand(&pair(&[&[1, 2]]), 2, 0.0).is_err());
    }
}
