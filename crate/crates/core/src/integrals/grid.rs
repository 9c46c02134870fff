//! Deterministic grid sums over the integer lattice of band offsets.
//!
//! The variables `x_l` are replaced by `t_l / b_n` with integer
//! `t_l ∈ [-b_n, b_n]`, and the `x0`/`y0` directions are summed exactly
//! (the admissible set of each is an interval). This is the normalised
//! index sum of a trace expansion read as a Riemann sum.

use super::form::{Base, Integrand, Test};
use super::mc::Region;
use crate::error::{contract, Result};

/// Upper bound on visited lattice points.
pub const MAX_GRID_POINTS: f64 = 1e9;

/// How the offset lattice and the base direction are weighted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridRule {
    /// `t ∈ [-b_n, b_n]` with half weight on the endpoints (and on the
    /// boundary of every range constraint); base directions integrated as
    /// continuum interval lengths with the integrand's `b`.
    Trapezoid,
    /// The literal index sum: `t ∈ {±1, …, ±b_n}` and `i ∈ [n]`, with base
    /// directions counted as `#{i} / n`. The integrand's `b` is ignored; the
    /// effective ratio is `b_n / n`.
    Lattice { n: usize },
}

struct Row {
    base: Base,
    coeffs: Vec<i64>,
    region: bool,
}

// Weight of the base direction given the offsets {s} (in lattice units).
fn base_weight(offsets: &[i64], rule: GridRule, b: f64, b_n: usize) -> f64 {
    let lo = offsets.iter().copied().min().unwrap_or(0).min(0);
    let hi = offsets.iter().copied().max().unwrap_or(0).max(0);
    match rule {
        GridRule::Trapezoid => {
            let scale = b / b_n as f64;
            let top = 1.0 - scale * hi as f64;
            let bottom = -scale * lo as f64;
            (top - bottom).max(0.0)
        }
        GridRule::Lattice { n } => {
            let n = n as i64;
            let count = (n - hi) - (1 - lo) + 1;
            count.max(0) as f64 / n as f64
        }
    }
}

/// Grid approximation of a resolved integrand on the full band.
pub fn riemann_sum(integrand: &Integrand, b_n: usize, rule: GridRule) -> Result<f64> {
    if b_n == 0 {
        return contract("b_n must be positive");
    }
    if integrand.delta.is_some() {
        return contract("resolve the delta constraint before summing");
    }
    if integrand.region != Region::Full {
        return contract("grid sums support the full band only");
    }
    if let GridRule::Lattice { n } = rule {
        if n == 0 {
            return contract("n must be positive");
        }
    }
    if integrand.is_null() {
        return Ok(0.0);
    }
    let dim = integrand.dim;
    let points = (2.0 * b_n as f64 + 1.0).powi(dim as i32);
    if points > MAX_GRID_POINTS {
        return contract(format!("grid of {points:e} points exceeds {MAX_GRID_POINTS:e}"));
    }
    let rows: Vec<Row> = integrand
        .indicators
        .iter()
        .map(|ind| Row {
            base: ind.form.base,
            coeffs: ind.form.coeffs.clone(),
            region: ind.test == Test::InRegion,
        })
        .collect();
    let bn = b_n as i64;
    let lattice = matches!(rule, GridRule::Lattice { .. });
    let mut t = vec![-bn; dim];
    let mut total = 0.0;
    let mut x_off = Vec::new();
    let mut y_off = Vec::new();
    'points: loop {
        let mut w = 1.0;
        for &tl in &t {
            if lattice && tl == 0 {
                w = 0.0;
            } else if !lattice && tl.abs() == bn {
                w *= 0.5;
            }
        }
        if w > 0.0 {
            x_off.clear();
            y_off.clear();
            for row in &rows {
                let s: i64 = row.coeffs.iter().zip(&t).map(|(c, x)| c * x).sum();
                if row.region {
                    if s.abs() > bn || (lattice && s == 0) {
                        w = 0.0;
                        break;
                    }
                    if !lattice && s.abs() == bn {
                        w *= 0.5;
                    }
                    continue;
                }
                match row.base {
                    Base::X0 => x_off.push(s),
                    Base::Y0 => y_off.push(s),
                    Base::None => {
                        let v = integrand.b * s as f64 / b_n as f64;
                        if !(0.0..=1.0).contains(&v) {
                            w = 0.0;
                            break;
                        }
                    }
                }
            }
            if w > 0.0 {
                w *= base_weight(&x_off, rule, integrand.b, b_n);
                if integrand.has_y0 {
                    w *= base_weight(&y_off, rule, integrand.b, b_n);
                }
                total += w;
            }
        }
        for l in 0..dim {
            if t[l] < bn {
                t[l] += 1;
                continue 'points;
            }
            t[l] = -bn;
        }
        break;
    }
    Ok(total / (b_n as f64).powi(dim as i32))
}
