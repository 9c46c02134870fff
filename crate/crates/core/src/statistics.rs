//! Trace statistics, their replicate distributions and normality summaries.
//!
//! Traces are computed by sweeping the basis: for each `e_i`, the vectors
//! `u_k = M^k e_i` are built for `k ≤ ⌈p/2⌉` and `tr M^p` accumulates
//! `⟨u_{⌊p/2⌋}, u_{⌈p/2⌉}⟩`, which needs `M` symmetric (or Hermitian). The
//! first step `M e_i` is read off the coefficients, so powers up to four cost
//! a single matrix-vector product per basis vector.

use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample, ApplyPath, EnsembleKind, EnsembleSpec, EntryDistribution, StructuredOperator};
use crate::error::{contract, guard, Error, Result};
use crate::integrals::form::wishart_sign;
use crate::rng::{derive_seed, zigzag, CounterDraws};

/// Fewest replicates accepted by [`run_statistic`] and [`summarize`].
pub const MIN_REPLICATES: usize = 100;

const TAG_REPLICATE: u64 = 0x7265;
const TAG_COROLLARY: u64 = 0x636f_726f;

/// Which homogeneous equation a balanced index vector satisfies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceKind {
    /// `Σ j_l = 0`.
    Toeplitz,
    /// `Σ (-1)^l j_l = 0`.
    Hankel,
    /// `Σ (-1)^{⌊(l-1)/s⌋} j_l = 0`.
    Wishart { s: usize },
}

impl BalanceKind {
    /// Sign of the 1-based letter `l`.
    pub fn sign(self, l: usize) -> i64 {
        match self {
            Self::Toeplitz => 1,
            Self::Hankel => {
                if l % 2 == 0 {
                    1
                } else {
                    -1
                }
            }
            Self::Wishart { s } => wishart_sign(l, s),
        }
    }
}

/// An index vector satisfying its balance equation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BalancedVector {
    components: Vec<i64>,
    kind: BalanceKind,
}

impl BalancedVector {
    pub fn new(components: Vec<i64>, kind: BalanceKind) -> Result<Self> {
        if let BalanceKind::Wishart { s: 0 } = kind {
            return contract("wishart balance needs s ≥ 1");
        }
        let sum: i64 = components.iter().enumerate().map(|(l, &j)| kind.sign(l + 1) * j).sum();
        if sum != 0 {
            return contract(format!("{components:?} is not balanced for {kind:?}"));
        }
        Ok(Self { components, kind })
    }

    pub fn components(&self) -> &[i64] {
        &self.components
    }

    pub fn kind(&self) -> BalanceKind {
        self.kind
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// Column i of the base Toeplitz factor f: entry r is a_{r-i}.
fn toeplitz_column(op: &StructuredOperator, f: usize, i: usize) -> Vec<f64> {
    (0..op.n()).map(|r| op.coefficient_re(f, r as i64 - i as i64)).collect()
}

// M e_i and M e_{i2} for a real single-operator kind.
fn first_step_pair(op: &StructuredOperator, i: usize, i2: usize) -> (Vec<f64>, Vec<f64>) {
    let n = op.n() as i64;
    match op.spec().kind {
        EnsembleKind::Hankel | EnsembleKind::SparseHankel => {
            let col = |i: usize| (0..n).map(|r| op.coefficient_re(0, n - 1 - r - i as i64)).collect();
            (col(i), col(i2))
        }
        EnsembleKind::Wishart { s } => {
            let (mut v, mut w) = (toeplitz_column(op, 0, i), toeplitz_column(op, 0, i2));
            for _ in 1..s {
                (v, w) = op.toeplitz_real_pair(0, false, &v, &w, ApplyPath::Auto);
            }
            for _ in 0..s {
                (v, w) = op.toeplitz_real_pair(0, true, &v, &w, ApplyPath::Auto);
            }
            (v, w)
        }
        _ => (toeplitz_column(op, 0, i), toeplitz_column(op, 0, i2)),
    }
}

fn apply_pair(op: &StructuredOperator, v: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match op.spec().kind {
        EnsembleKind::Hankel | EnsembleKind::SparseHankel => {
            let (mut a, mut b) = op.toeplitz_real_pair(0, false, v, w, ApplyPath::Auto);
            a.reverse();
            b.reverse();
            (a, b)
        }
        EnsembleKind::Wishart { s } => {
            let (mut a, mut b) = (v.to_vec(), w.to_vec());
            for _ in 0..s {
                (a, b) = op.toeplitz_real_pair(0, false, &a, &b, ApplyPath::Auto);
            }
            for _ in 0..s {
                (a, b) = op.toeplitz_real_pair(0, true, &a, &b, ApplyPath::Auto);
            }
            (a, b)
        }
        _ => op.toeplitz_real_pair(0, false, v, w, ApplyPath::Auto),
    }
}

fn real_sweep(op: &StructuredOperator, max_p: usize) -> Vec<f64> {
    let n = op.n();
    let depth = max_p.div_ceil(2);
    let mut traces = vec![0.0; max_p + 1];
    traces[0] = n as f64;
    let mut i = 0;
    while i < n {
        let i2 = (i + 1).min(n - 1);
        let (first_v, first_w) = first_step_pair(op, i, i2);
        let mut us = vec![first_v];
        let mut ws = vec![first_w];
        for k in 1..depth {
            let (a, b) = apply_pair(op, &us[k - 1], &ws[k - 1]);
            us.push(a);
            ws.push(b);
        }
        let mut add = |basis: usize, u: &[Vec<f64>]| {
            for (p, t) in traces.iter_mut().enumerate().skip(1) {
                let (a, b) = (p / 2, p - p / 2);
                *t += if a == 0 { u[b - 1][basis] } else { dot(&u[a - 1], &u[b - 1]) };
            }
        };
        add(i, &us);
        if i2 != i {
            add(i2, &ws);
        }
        i += 2;
    }
    traces
}

fn complex_sweep(op: &StructuredOperator, max_p: usize) -> Vec<f64> {
    let n = op.n();
    let depth = max_p.div_ceil(2);
    let mut traces = vec![0.0; max_p + 1];
    traces[0] = n as f64;
    for i in 0..n {
        let col: Vec<Complex64> = (0..n).map(|r| op.coefficient(0, r as i64 - i as i64)).collect();
        let mut us = vec![col];
        for k in 1..depth {
            let next = op.toeplitz_complex(0, false, &us[k - 1], ApplyPath::Auto);
            us.push(next);
        }
        for (p, t) in traces.iter_mut().enumerate().skip(1) {
            let (a, b) = (p / 2, p - p / 2);
            *t += if a == 0 {
                us[b - 1][i].re
            } else {
                us[a - 1].iter().zip(&us[b - 1]).map(|(x, y)| (x.conj() * y).re).sum::<f64>()
            };
        }
    }
    traces
}

/// `[tr M^0, tr M^1, …, tr M^max_p]` for the kind's operator `M`
/// (unscaled; for Wishart `M = Tᵀˢ Tˢ`).
pub fn trace_powers(op: &StructuredOperator, max_p: usize) -> Result<Vec<f64>> {
    if max_p == 0 {
        return contract("p must be positive");
    }
    match op.spec().kind {
        EnsembleKind::MultiToeplitz { .. } => contract("multi-matrix traces are taken over words; use word_trace"),
        EnsembleKind::ToeplitzHermitian => Ok(complex_sweep(op, max_p)),
        _ => Ok(real_sweep(op, max_p)),
    }
}

/// `tr M^p`.
pub fn trace_power(op: &StructuredOperator, p: usize) -> Result<f64> {
    Ok(trace_powers(op, p)?[p])
}

fn check_word(op: &StructuredOperator, word: &[usize]) -> Result<()> {
    let EnsembleKind::MultiToeplitz { r } = op.spec().kind else {
        return contract("word traces need a multi_toeplitz operator");
    };
    if word.is_empty() {
        return contract("empty word");
    }
    if let Some(&bad) = word.iter().find(|&&w| w == 0 || w > r) {
        return contract(format!("word letter {bad} outside 1..={r}"));
    }
    Ok(())
}

/// `tr(T_{w_1} T_{w_2} ⋯ T_{w_m})` with 1-based factor letters.
pub fn word_trace(op: &StructuredOperator, word: &[usize]) -> Result<f64> {
    check_word(op, word)?;
    let n = op.n();
    let m = word.len();
    let split = m / 2;
    // ⟨T_{w_split}⋯T_{w_1} e_i, T_{w_{split+1}}⋯T_{w_m} e_i⟩, factors symmetric.
    let chain = |i: usize, i2: usize, letters: &mut dyn Iterator<Item = usize>| -> (Vec<f64>, Vec<f64>) {
        let f = letters.next().expect("non-empty chain") - 1;
        let (mut v, mut w) = (toeplitz_column(op, f, i), toeplitz_column(op, f, i2));
        for g in letters {
            (v, w) = op.toeplitz_real_pair(g - 1, false, &v, &w, ApplyPath::Auto);
        }
        (v, w)
    };
    let mut total = 0.0;
    let mut i = 0;
    while i < n {
        let i2 = (i + 1).min(n - 1);
        let (rv, rw) = chain(i, i2, &mut word[split..].iter().rev().copied());
        let (lv, lw) = if split == 0 {
            (Vec::new(), Vec::new())
        } else {
            chain(i, i2, &mut word[..split].iter().copied())
        };
        let term = |l: &[f64], r: &[f64], basis: usize| if split == 0 { r[basis] } else { dot(l, r) };
        total += term(&lv, &rv, i);
        if i2 != i {
            total += term(&lw, &rw, i2);
        }
        i += 2;
    }
    Ok(total)
}

/// Largest `n` accepted by the combinatorial oracle.
pub const ORACLE_MAX_N: usize = 12;
/// Largest `b_n` accepted by the combinatorial oracle.
pub const ORACLE_MAX_BAND: usize = 4;
/// Largest number of letters accepted by the combinatorial oracle.
pub const ORACLE_MAX_LETTERS: usize = 10;

fn oracle_guards(op: &StructuredOperator, letters: usize) -> Result<()> {
    guard("n", op.n(), ORACLE_MAX_N)?;
    guard("b_n", op.b_n(), ORACLE_MAX_BAND)?;
    guard("letters", letters, ORACLE_MAX_LETTERS)
}

// Σ over i and J of a_J · 1{all path positions in [0, n)} · 1{closure},
// where letter l reads factor factors[l] at offset j_l and moves the
// position by signs[l] · j_l.
fn path_sum(op: &StructuredOperator, factors: &[usize], signs: &[i64]) -> Complex64 {
    let n = op.n() as i64;
    let supports: Vec<&[i64]> = factors.iter().map(|&f| op.support(f)).collect();
    fn go(
        op: &StructuredOperator,
        factors: &[usize],
        signs: &[i64],
        supports: &[&[i64]],
        n: i64,
        start: i64,
        pos: i64,
        l: usize,
        acc: Complex64,
    ) -> Complex64 {
        if l == factors.len() {
            return if pos == start { acc } else { Complex64::new(0.0, 0.0) };
        }
        let mut total = Complex64::new(0.0, 0.0);
        for &j in supports[l] {
            let next = pos + signs[l] * j;
            if (0..n).contains(&next) {
                let a = op.coefficient(factors[l], j);
                total += go(op, factors, signs, supports, n, start, next, l + 1, acc * a);
            }
        }
        total
    }
    (0..n)
        .map(|i| go(op, factors, signs, &supports, n, i, i, 0, Complex64::new(1.0, 0.0)))
        .sum()
}

// Hankel: positions i_l = i - S_l (l even) or n + 1 - i + S_l (l odd),
// S_l = Σ_{m ≤ l} (-1)^m j_m, closing with S_p = 0 (p even) or
// S_p = 2i - 1 - n (p odd), all 1-based.
fn hankel_sum(op: &StructuredOperator, p: usize) -> f64 {
    let n = op.n() as i64;
    let support = op.support(0);
    fn go(op: &StructuredOperator, support: &[i64], n: i64, p: usize, i: i64, l: usize, s: i64, acc: f64) -> f64 {
        if l == p {
            let target = if p % 2 == 0 { 0 } else { 2 * i - 1 - n };
            return if s == target { acc } else { 0.0 };
        }
        let mut total = 0.0;
        for &j in support {
            let m = l + 1;
            let s_next = s + if m % 2 == 0 { j } else { -j };
            let pos = if m % 2 == 0 { i - s_next } else { n + 1 - i + s_next };
            if (1..=n).contains(&pos) {
                total += go(op, support, n, p, i, m, s_next, acc * op.coefficient_re(0, j));
            }
        }
        total
    }
    (1..=n).map(|i| go(op, support, n, p, i, 0, 0, 1.0)).sum()
}

/// `tr M^p` as the explicit sum over index vectors `J` of `a_J I_J` times
/// the balance delta. Independent of the matrix-vector machinery.
pub fn combinatorial_trace_oracle(op: &StructuredOperator, p: usize) -> Result<f64> {
    if p == 0 {
        return contract("p must be positive");
    }
    match op.spec().kind {
        EnsembleKind::MultiToeplitz { .. } => contract("multi-matrix traces are taken over words; use word_trace_oracle"),
        EnsembleKind::Hankel | EnsembleKind::SparseHankel => {
            oracle_guards(op, p)?;
            Ok(hankel_sum(op, p))
        }
        EnsembleKind::Wishart { s } => {
            let letters = 2 * p * s;
            oracle_guards(op, letters)?;
            // Letters act right to left: s copies of T (+), then s of Tᵀ (-).
            let signs: Vec<i64> = (1..=letters).map(|l| wishart_sign(l, s)).collect();
            Ok(path_sum(op, &vec![0; letters], &signs).re)
        }
        _ => {
            oracle_guards(op, p)?;
            Ok(path_sum(op, &vec![0; p], &vec![1; p]).re)
        }
    }
}

/// Explicit-sum counterpart of [`word_trace`].
pub fn word_trace_oracle(op: &StructuredOperator, word: &[usize]) -> Result<f64> {
    check_word(op, word)?;
    oracle_guards(op, word.len())?;
    let factors: Vec<usize> = word.iter().rev().map(|w| w - 1).collect();
    Ok(path_sum(op, &factors, &vec![1; word.len()]).re)
}

/// A scalar statistic of one sampled operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum StatisticKind {
    /// `(√b_n / n) tr(A^p)`, `A = T / √b_n`, for Toeplitz-type kinds.
    OmegaP { p: usize },
    /// `Σ_d coeffs[d] · ω_d`.
    OmegaQ { coeffs: Vec<f64> },
    /// `(√b_n / n) tr(A^{2p})` for Hankel kinds.
    ZetaP { p: usize },
    /// `(√b_n / n) tr((M / b_n^s)^p)` for Wishart kinds.
    WishartP { p: usize },
    /// `(√b_n / n) b_n^{-m/2} tr(T_{w_1} ⋯ T_{w_m})` for multi-matrix kinds.
    Word { word: Vec<usize> },
    /// `(1/n) tr(A^p)` (Wishart: `(1/n) tr((M / b_n^s)^p)`), any single-operator kind.
    NormalizedTrace { p: usize },
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OmegaP { p } => write!(f, "omega_{p}"),
            Self::OmegaQ { coeffs } => write!(f, "omega_Q{coeffs:?}"),
            Self::ZetaP { p } => write!(f, "zeta_{p}"),
            Self::WishartP { p } => write!(f, "wishart_{p}"),
            Self::Word { word } => write!(f, "word{word:?}"),
            Self::NormalizedTrace { p } => write!(f, "trace_{p}"),
        }
    }
}

impl StatisticKind {
    fn validate(&self, spec: &EnsembleSpec) -> Result<()> {
        use EnsembleKind as K;
        let kind = spec.kind;
        let toeplitz_like = matches!(kind, K::ToeplitzReal | K::ToeplitzHermitian | K::SparseToeplitz);
        match self {
            Self::OmegaP { p } => {
                if *p < 2 {
                    return contract(format!("omega_p needs p ≥ 2, got {p}"));
                }
                if !toeplitz_like {
                    return contract(format!("omega_p is defined for Toeplitz kinds, not {kind}"));
                }
            }
            Self::OmegaQ { coeffs } => {
                if !toeplitz_like {
                    return contract(format!("omega_Q is defined for Toeplitz kinds, not {kind}"));
                }
                if coeffs.iter().take(2).any(|&c| c != 0.0) || coeffs.iter().all(|&c| c == 0.0) {
                    return contract("omega_Q needs a nonzero polynomial without constant or linear term");
                }
            }
            Self::ZetaP { p } => {
                if *p < 1 || !kind.is_hankel() {
                    return contract(format!("zeta_p needs p ≥ 1 and a Hankel kind (p = {p}, {kind})"));
                }
            }
            Self::WishartP { p } => {
                if *p < 1 || !matches!(kind, K::Wishart { .. }) {
                    return contract(format!("wishart_p needs p ≥ 1 and a Wishart kind (p = {p}, {kind})"));
                }
            }
            Self::Word { word } => {
                let K::MultiToeplitz { r } = kind else {
                    return contract(format!("word statistics need a multi_toeplitz kind, not {kind}"));
                };
                if word.is_empty() || word.iter().any(|&w| w == 0 || w > r) {
                    return contract(format!("word {word:?} has letters outside 1..={r}"));
                }
            }
            Self::NormalizedTrace { p } => {
                if *p < 1 || matches!(kind, K::MultiToeplitz { .. }) {
                    return contract(format!("normalized trace needs p ≥ 1 and a single operator ({kind})"));
                }
            }
        }
        Ok(())
    }

    // Highest power of M whose trace the statistic reads.
    fn max_power(&self) -> usize {
        match self {
            Self::OmegaP { p } | Self::WishartP { p } | Self::NormalizedTrace { p } => *p,
            Self::OmegaQ { coeffs } => coeffs.len().saturating_sub(1),
            Self::ZetaP { p } => 2 * p,
            Self::Word { .. } => 0,
        }
    }

    fn evaluate(&self, spec: &EnsembleSpec, traces: &[f64], op: &StructuredOperator) -> Result<f64> {
        let b = spec.b_n as f64;
        let n = spec.n as f64;
        let lead = b.sqrt() / n;
        // tr(A^p) for A = T / √b_n, or (M / b_n^s) for Wishart.
        let scaled = |p: usize| match spec.kind {
            EnsembleKind::Wishart { s } => traces[p] / b.powi((p * s) as i32),
            _ => traces[p] / b.powf(p as f64 / 2.0),
        };
        Ok(match self {
            Self::OmegaP { p } | Self::WishartP { p } => lead * scaled(*p),
            Self::ZetaP { p } => lead * scaled(2 * p),
            Self::OmegaQ { coeffs } => coeffs
                .iter()
                .enumerate()
                .filter(|(_, &c)| c != 0.0)
                .map(|(d, &c)| c * lead * scaled(d))
                .sum(),
            Self::Word { word } => lead * word_trace(op, word)? / b.powf(word.len() as f64 / 2.0),
            Self::NormalizedTrace { p } => scaled(*p) / n,
        })
    }
}

/// Replicates of a centred statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStatistic {
    pub kind: StatisticKind,
    pub spec: EnsembleSpec,
    pub master_seed: u64,
    /// Centred by the replicate mean, in replicate order.
    pub replicates: Vec<f64>,
    /// Replicate mean before centring.
    pub raw_mean: f64,
}

fn centred(kind: StatisticKind, spec: &EnsembleSpec, master_seed: u64, raw: Vec<f64>) -> TraceStatistic {
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    TraceStatistic {
        kind,
        spec: spec.clone(),
        master_seed,
        replicates: raw.into_iter().map(|x| x - mean).collect(),
        raw_mean: mean,
    }
}

/// Seed of replicate `r` under `master_seed`.
pub fn replicate_seed(master_seed: u64, r: usize) -> u64 {
    derive_seed(master_seed, TAG_REPLICATE, r as u64)
}

/// Several statistics evaluated on the same sampled operators.
pub fn run_statistics(
    spec: &EnsembleSpec,
    kinds: &[StatisticKind],
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<TraceStatistic>> {
    spec.validate()?;
    if kinds.is_empty() {
        return contract("no statistics requested");
    }
    if replicates < MIN_REPLICATES {
        return contract(format!("need at least {MIN_REPLICATES} replicates, got {replicates}"));
    }
    for k in kinds {
        k.validate(spec)?;
    }
    let max_p = kinds.iter().map(StatisticKind::max_power).max().unwrap_or(0);
    let rows: Vec<Vec<f64>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let op = sample(spec, replicate_seed(master_seed, r))?;
            let traces = if max_p > 0 { trace_powers(&op, max_p)? } else { Vec::new() };
            kinds.iter().map(|k| k.evaluate(spec, &traces, &op)).collect()
        })
        .collect::<Result<_>>()?;
    Ok(kinds
        .iter()
        .enumerate()
        .map(|(c, k)| centred(k.clone(), spec, master_seed, rows.iter().map(|row| row[c]).collect()))
        .collect())
}

/// Replicates of one statistic, each from a fresh operator.
pub fn run_statistic(
    spec: &EnsembleSpec,
    kind: &StatisticKind,
    replicates: usize,
    master_seed: u64,
) -> Result<TraceStatistic> {
    Ok(run_statistics(spec, std::slice::from_ref(kind), replicates, master_seed)?.remove(0))
}

/// Letters in the balanced sum for `p` and the balance kind.
fn corollary_letters(p: usize, balance: BalanceKind) -> usize {
    match balance {
        BalanceKind::Toeplitz => p,
        BalanceKind::Hankel => 2 * p,
        BalanceKind::Wishart { s } => 2 * p * s,
    }
}

/// Coefficients `a_{-n}..a_{n}` for one corollary replicate.
///
/// Toeplitz balance: `a_{-j} = a_j`, `a_0 = 0`; otherwise every `a_j` is
/// independent, `a_0` included.
pub fn corollary_coefficients(n: usize, entry: &EntryDistribution, balance: BalanceKind, seed: u64) -> Vec<f64> {
    let mut draws = CounterDraws::new(seed);
    let m = n as i64;
    (-m..=m)
        .map(|j| match balance {
            BalanceKind::Toeplitz if j == 0 => 0.0,
            BalanceKind::Toeplitz => {
                let w = draws.words(0, zigzag(j.abs()));
                entry.draw(w[0], w[1])
            }
            _ => {
                let w = draws.words(0, zigzag(j));
                entry.draw(w[0], w[1])
            }
        })
        .collect()
}

/// `Σ_J a_J δ(balance)` over `J ∈ [-n, n]^m` (zeros in `coeffs` drop out),
/// through the discrete Fourier transform of the coefficient sequence.
pub fn balanced_sum(coeffs: &[f64], letters: usize, balance: BalanceKind) -> Result<f64> {
    if coeffs.len() % 2 == 0 || letters == 0 {
        return contract("coefficients must cover -n..=n and letters must be positive");
    }
    let n = coeffs.len() / 2;
    let plus = (1..=letters).filter(|&l| balance.sign(l) > 0).count();
    let minus = letters - plus;
    let len = (letters * n + 1).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for (idx, &a) in coeffs.iter().enumerate() {
        let j = idx as i64 - n as i64;
        buf[j.rem_euclid(len as i64) as usize] = Complex64::new(a, 0.0);
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let total: Complex64 = buf
        .iter()
        .map(|c| c.powu(plus as u32) * c.conj().powu(minus as u32))
        .sum();
    Ok(total.re / len as f64)
}

/// Largest `n` for [`balanced_sum_enumerated`].
pub const ENUMERATION_MAX_N: usize = 60;
/// Largest letter count for [`balanced_sum_enumerated`].
pub const ENUMERATION_MAX_LETTERS: usize = 4;

/// The same sum as [`balanced_sum`] by walking every balanced vector.
pub fn balanced_sum_enumerated(coeffs: &[f64], letters: usize, balance: BalanceKind) -> Result<f64> {
    if coeffs.len() % 2 == 0 || letters == 0 {
        return contract("coefficients must cover -n..=n and letters must be positive");
    }
    let n = coeffs.len() / 2;
    guard("n", n, ENUMERATION_MAX_N)?;
    guard("letters", letters, ENUMERATION_MAX_LETTERS)?;
    let m = n as i64;
    let a = |j: i64| coeffs[(j + m) as usize];
    let mut total = 0.0;
    let mut j = vec![-m; letters - 1];
    loop {
        let partial: i64 = j.iter().enumerate().map(|(l, &x)| balance.sign(l + 1) * x).sum();
        // The last component is fixed by the balance equation.
        let last = -partial * balance.sign(letters);
        if last.abs() <= m {
            let mut full = j.clone();
            full.push(last);
            let v = BalancedVector::new(full, balance)?;
            total += v.components().iter().map(|&x| a(x)).product::<f64>();
        }
        let mut l = 0;
        loop {
            if l == j.len() {
                return Ok(total);
            }
            if j[l] < m {
                j[l] += 1;
                break;
            }
            j[l] = -m;
            l += 1;
        }
    }
}

/// Replicates of `n^{-(m-1)/2} Σ_{balanced J} (a_J - E a_J)` with `m`
/// letters (`p` for Toeplitz, `2p` for Hankel, `2ps` for Wishart balance),
/// centred by the replicate mean.
pub fn corollary_sum_statistic(
    p: usize,
    n: usize,
    entry: &EntryDistribution,
    balance: BalanceKind,
    replicates: usize,
    master_seed: u64,
) -> Result<CorollaryStatistic> {
    entry.validate()?;
    let min_p = if balance == BalanceKind::Toeplitz { 2 } else { 1 };
    if p < min_p || n == 0 {
        return contract(format!("corollary sum needs p ≥ {min_p} and n ≥ 1"));
    }
    if let BalanceKind::Wishart { s: 0 } = balance {
        return contract("wishart balance needs s ≥ 1");
    }
    if replicates < MIN_REPLICATES {
        return contract(format!("need at least {MIN_REPLICATES} replicates, got {replicates}"));
    }
    let letters = corollary_letters(p, balance);
    let scale = (n as f64).powf(-(letters as f64 - 1.0) / 2.0);
    let raw: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(master_seed, TAG_COROLLARY, r as u64);
            let coeffs = corollary_coefficients(n, entry, balance, seed);
            Ok(scale * balanced_sum(&coeffs, letters, balance)?)
        })
        .collect::<Result<_>>()?;
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(CorollaryStatistic {
        p,
        n,
        entry: entry.clone(),
        balance,
        master_seed,
        replicates: raw.into_iter().map(|x| x - mean).collect(),
        raw_mean: mean,
    })
}

/// Replicates of the balanced-sum statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorollaryStatistic {
    pub p: usize,
    pub n: usize,
    pub entry: EntryDistribution,
    pub balance: BalanceKind,
    pub master_seed: u64,
    pub replicates: Vec<f64>,
    pub raw_mean: f64,
}

/// Moment summary of a replicate sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatSummary {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub jarque_bera: f64,
    pub count: usize,
}

impl StatSummary {
    /// Large-sample standard error of the skewness, `√(6/N)`.
    pub fn skewness_se(&self) -> f64 {
        (6.0 / self.count as f64).sqrt()
    }

    /// Large-sample standard error of the excess kurtosis, `√(24/N)`.
    pub fn kurtosis_se(&self) -> f64 {
        (24.0 / self.count as f64).sqrt()
    }

    /// Standard error of the unbiased variance, `√((m4 - s⁴(N-3)/(N-1)) / N)`.
    pub fn variance_se(&self) -> f64 {
        let n = self.count as f64;
        let m2 = self.variance * (n - 1.0) / n;
        let m4 = (self.excess_kurtosis + 3.0) * m2 * m2;
        ((m4 - self.variance * self.variance * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Mean, unbiased variance, skewness `m3 / m2^{3/2}`, excess kurtosis
/// `m4 / m2² - 3` (central sample moments) and Jarque–Bera.
pub fn summarize(values: &[f64]) -> Result<StatSummary> {
    let count = values.len();
    if count < MIN_REPLICATES {
        return contract(format!("need at least {MIN_REPLICATES} values, got {count}"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return contract("non-finite value in sample");
    }
    let n = count as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 == 0.0 {
        return Err(Error::Degenerate("sample variance is zero".into()));
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    Ok(StatSummary {
        mean,
        variance: m2 * n / (n - 1.0),
        skewness,
        excess_kurtosis,
        jarque_bera: n / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0),
        count,
    })
}

/// Sample covariance of two equally long samples (divisor `N - 1`).
pub fn covariance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return contract("covariance needs two samples of equal length ≥ 2");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    Ok(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0))
}

/// CSV text: one `# <json>` line per metadata value, the header row
/// `replicate_index,value`, then one row per replicate.
pub fn replicates_csv(values: &[f64], metadata: &[serde_json::Value]) -> String {
    let mut out = String::new();
    for m in metadata {
        out.push_str("# ");
        out.push_str(&m.to_string());
        out.push('\n');
    }
    out.push_str("replicate_index,value\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{i},{v:?}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{A0Policy, DenseMatrix};

    fn spec(kind: EnsembleKind, n: usize, b_n: usize) -> EnsembleSpec {
        let mut s = EnsembleSpec::new(kind, n, b_n, EntryDistribution::Gaussian);
        if kind.is_sparse() {
            s.sparse_region = Some(vec![(1, 1), (b_n, b_n)]);
        }
        s
    }

    fn dense_traces(m: &DenseMatrix, max_p: usize) -> Vec<f64> {
        let n = m.n();
        let a = m.to_complex();
        let mut power = a.clone();
        let mut out = vec![n as f64];
        for _ in 1..=max_p {
            out.push((0..n).map(|i| power[i * n + i].re).sum());
            let mut next = vec![Complex64::new(0.0, 0.0); n * n];
            for r in 0..n {
                for k in 0..n {
                    let x = power[r * n + k];
                    for c in 0..n {
                        next[r * n + c] += x * a[k * n + c];
                    }
                }
            }
            power = next;
        }
        out
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn two_by_two_trace() {
        let s = EnsembleSpec::new(EnsembleKind::ToeplitzReal, 2, 1, EntryDistribution::Gaussian);
        let a = 0.8;
        let sym = vec![Complex64::new(a, 0.0), Complex64::new(0.0, 0.0), Complex64::new(a, 0.0)];
        let op = StructuredOperator::from_symbols(&s, vec![sym]).unwrap();
        let t = trace_powers(&op, 3).unwrap();
        assert!((t[2] - 2.0 * a * a).abs() < 1e-15);
        assert_eq!(t[1], 0.0);
        assert!((combinatorial_trace_oracle(&op, 2).unwrap() - 2.0 * a * a).abs() < 1e-15);
    }

    #[test]
    fn sweeps_match_dense_powers() {
        for kind in [
            EnsembleKind::ToeplitzReal,
            EnsembleKind::ToeplitzHermitian,
            EnsembleKind::Hankel,
            EnsembleKind::SparseToeplitz,
            EnsembleKind::SparseHankel,
            EnsembleKind::Wishart { s: 1 },
            EnsembleKind::Wishart { s: 2 },
        ] {
            for (n, b) in [(7, 3), (33, 20), (64, 9)] {
                let op = sample(&spec(kind, n, b).with_a0(A0Policy::Sampled), 4).unwrap();
                let dense = dense_traces(&op.materialize().unwrap(), 6);
                let swept = trace_powers(&op, 6).unwrap();
                for p in 1..=6 {
                    assert!(rel_close(swept[p], dense[p], 1e-9), "{kind} n={n} p={p}: {} vs {}", swept[p], dense[p]);
                }
            }
        }
    }

    #[test]
    fn second_power_is_frobenius() {
        let op = sample(&spec(EnsembleKind::Hankel, 40, 11), 9).unwrap();
        let DenseMatrix::Real { data, .. } = op.materialize().unwrap() else {
            panic!()
        };
        let frob: f64 = data.iter().map(|x| x * x).sum();
        assert!(rel_close(trace_power(&op, 2).unwrap(), frob, 1e-12));
    }

    #[test]
    fn oracle_matches_sweep() {
        for kind in [
            EnsembleKind::ToeplitzReal,
            EnsembleKind::ToeplitzHermitian,
            EnsembleKind::Hankel,
            EnsembleKind::SparseToeplitz,
            EnsembleKind::SparseHankel,
        ] {
            for seed in 0..5 {
                let op = sample(&spec(kind, 9, 3).with_a0(A0Policy::Sampled), seed).unwrap();
                let t = trace_powers(&op, 5).unwrap();
                for p in 1..=5 {
                    let o = combinatorial_trace_oracle(&op, p).unwrap();
                    assert!(rel_close(o, t[p], 1e-9), "{kind} p={p}: {o} vs {}", t[p]);
                }
            }
        }
        let op = sample(&spec(EnsembleKind::Wishart { s: 2 }, 8, 2), 3).unwrap();
        let t = trace_powers(&op, 2).unwrap();
        for p in 1..=2 {
            assert!(rel_close(combinatorial_trace_oracle(&op, p).unwrap(), t[p], 1e-9));
        }
    }

    #[test]
    fn odd_hankel_oracle() {
        let op = sample(&spec(EnsembleKind::Hankel, 3, 1), 1).unwrap();
        for p in [1, 3, 5] {
            let o = combinatorial_trace_oracle(&op, p).unwrap();
            assert!(rel_close(o, trace_power(&op, p).unwrap(), 1e-12), "p={p}");
        }
    }

    #[test]
    fn oracle_guards_apply() {
        let op = sample(&spec(EnsembleKind::ToeplitzReal, 20, 3), 1).unwrap();
        assert!(matches!(combinatorial_trace_oracle(&op, 2), Err(Error::Guard { .. })));
        let op = sample(&spec(EnsembleKind::Wishart { s: 3 }, 8, 2), 1).unwrap();
        assert!(combinatorial_trace_oracle(&op, 2).is_err());
    }

    #[test]
    fn word_traces() {
        let s = EnsembleSpec::new(EnsembleKind::MultiToeplitz { r: 3 }, 10, 3, EntryDistribution::Gaussian);
        let op = sample(&s, 6).unwrap();
        let dense: Vec<Vec<Complex64>> = (0..3).map(|f| op.materialize_factor(f).unwrap().to_complex()).collect();
        let n = 10;
        for word in [vec![1], vec![1, 2], vec![1, 2, 1, 2], vec![3, 1, 2], vec![2, 2, 3, 1, 1]] {
            let mut prod: Vec<Complex64> = (0..n * n)
                .map(|k| Complex64::new(if k / n == k % n { 1.0 } else { 0.0 }, 0.0))
                .collect();
            for &w in &word {
                let mut next = vec![Complex64::new(0.0, 0.0); n * n];
                for r in 0..n {
                    for k in 0..n {
                        for c in 0..n {
                            next[r * n + c] += prod[r * n + k] * dense[w - 1][k * n + c];
                        }
                    }
                }
                prod = next;
            }
            let want: f64 = (0..n).map(|i| prod[i * n + i].re).sum();
            assert!(rel_close(word_trace(&op, &word).unwrap(), want, 1e-10), "{word:?}");
            assert!(rel_close(word_trace_oracle(&op, &word).unwrap(), want, 1e-10), "{word:?}");
        }
        assert!(word_trace(&op, &[4]).is_err());
        assert!(word_trace(&op, &[]).is_err());
    }

    #[test]
    fn scale_equivariance() {
        let s = spec(EnsembleKind::ToeplitzReal, 30, 6);
        let op = sample(&s, 2).unwrap();
        let c = 1.5;
        let scaled: Vec<Complex64> = (-6..=6).map(|j| op.coefficient(0, j) * c).collect();
        let op2 = StructuredOperator::from_symbols(&s, vec![scaled]).unwrap();
        for p in 1..=5 {
            let a = trace_power(&op, p).unwrap();
            let b = trace_power(&op2, p).unwrap();
            assert!(rel_close(b, c.powi(p as i32) * a, 1e-12));
        }
    }

    #[test]
    fn statistic_validation() {
        let s = spec(EnsembleKind::ToeplitzReal, 20, 5);
        assert!(run_statistic(&s, &StatisticKind::OmegaP { p: 1 }, 100, 1).is_err());
        assert!(run_statistic(&s, &StatisticKind::OmegaP { p: 2 }, 99, 1).is_err());
        assert!(run_statistic(&s, &StatisticKind::ZetaP { p: 1 }, 100, 1).is_err());
        let m = EnsembleSpec::new(EnsembleKind::MultiToeplitz { r: 2 }, 20, 5, EntryDistribution::Gaussian);
        assert!(run_statistic(&m, &StatisticKind::Word { word: vec![1, 3] }, 100, 1).is_err());
        assert!(run_statistic(&s, &StatisticKind::OmegaQ { coeffs: vec![0.0, 1.0, 1.0] }, 100, 1).is_err());
    }

    #[test]
    fn statistics_are_centred_and_reproducible() {
        let s = spec(EnsembleKind::ToeplitzReal, 24, 6);
        let kinds = [
            StatisticKind::OmegaP { p: 2 },
            StatisticKind::OmegaP { p: 4 },
            StatisticKind::OmegaQ { coeffs: vec![0.0, 0.0, 1.0, 0.0, 2.0] },
        ];
        let a = run_statistics(&s, &kinds, 120, 5).unwrap();
        let b = run_statistics(&s, &kinds, 120, 5).unwrap();
        assert_eq!(a, b);
        for t in &a {
            let mean = t.replicates.iter().sum::<f64>() / 120.0;
            assert!(mean.abs() < 1e-12);
            assert!(summarize(&t.replicates).unwrap().variance > 0.0);
        }
        for r in 0..120 {
            let q = a[0].replicates[r] + 2.0 * a[1].replicates[r];
            assert!((a[2].replicates[r] - q).abs() < 1e-9);
        }
        let single = run_statistic(&s, &kinds[1], 120, 5).unwrap();
        assert_eq!(single, a[1]);
    }

    #[test]
    fn balanced_sums_agree() {
        for (balance, letters) in [
            (BalanceKind::Toeplitz, 2),
            (BalanceKind::Toeplitz, 3),
            (BalanceKind::Toeplitz, 4),
            (BalanceKind::Hankel, 2),
            (BalanceKind::Hankel, 4),
            (BalanceKind::Wishart { s: 2 }, 4),
        ] {
            let c = corollary_coefficients(20, &EntryDistribution::Gaussian, balance, 3);
            let f = balanced_sum(&c, letters, balance).unwrap();
            let e = balanced_sum_enumerated(&c, letters, balance).unwrap();
            assert!(rel_close(f, e, 1e-9), "{balance:?} {letters}: {f} vs {e}");
        }
    }

    #[test]
    fn corollary_p2_structure() {
        // p = 2: Σ_{0<|j|≤n} a_j a_{-j} = 2 Σ_{j=1}^n a_j².
        let c = corollary_coefficients(20, &EntryDistribution::Gaussian, BalanceKind::Toeplitz, 8);
        let direct: f64 = 2.0 * (1..=20).map(|j| c[20 + j] * c[20 + j]).sum::<f64>();
        assert!(rel_close(balanced_sum(&c, 2, BalanceKind::Toeplitz).unwrap(), direct, 1e-12));
        // Rademacher: every replicate equals 2n, so the centred statistic vanishes.
        let t = corollary_sum_statistic(2, 20, &EntryDistribution::Rademacher, BalanceKind::Toeplitz, 100, 1).unwrap();
        assert!(t.replicates.iter().all(|x| x.abs() < 1e-9));
        let g = corollary_sum_statistic(2, 20, &EntryDistribution::Gaussian, BalanceKind::Toeplitz, 200, 1).unwrap();
        assert!(summarize(&g.replicates).unwrap().variance > 0.0);
    }

    #[test]
    fn balanced_vector_checks() {
        assert!(BalancedVector::new(vec![1, 2, -3], BalanceKind::Toeplitz).is_ok());
        assert!(BalancedVector::new(vec![1, 2, -2], BalanceKind::Toeplitz).is_err());
        assert!(BalancedVector::new(vec![3, 3, 1, 1], BalanceKind::Hankel).is_ok());
        assert!(BalancedVector::new(vec![1, 2, 2, 2], BalanceKind::Wishart { s: 2 }).is_err());
        assert!(BalancedVector::new(vec![1, 2, 1, 2], BalanceKind::Wishart { s: 2 }).is_ok());
    }

    #[test]
    fn summary_calibration() {
        let mut draws = CounterDraws::new(12);
        let xs: Vec<f64> = (0..100_000)
            .map(|c| {
                let w = draws.words(0, c);
                EntryDistribution::Gaussian.draw(w[0], w[1])
            })
            .collect();
        let s = summarize(&xs).unwrap();
        assert!(s.skewness.abs() < 0.03 && s.excess_kurtosis.abs() < 0.06, "{s:?}");
        let jb = s.count as f64 / 6.0 * (s.skewness.powi(2) + s.excess_kurtosis.powi(2) / 4.0);
        assert!((s.jarque_bera - jb).abs() < 1e-9);
        let flipped: Vec<f64> = xs.iter().map(|x| -2.0 * x + 5.0).collect();
        let t = summarize(&flipped).unwrap();
        assert!((t.skewness + s.skewness).abs() < 1e-9);
        assert!((t.excess_kurtosis - s.excess_kurtosis).abs() < 1e-9);
        assert!(matches!(summarize(&[1.0; 200]), Err(Error::Degenerate(_))));
        assert!(summarize(&[1.0; 10]).is_err());
    }

    #[test]
    fn csv_layout() {
        let text = replicates_csv(&[0.5, -1.25], &[serde_json::json!({"seed": 3})]);
        assert_eq!(text, "# {\"seed\":3}\nreplicate_index,value\n0,0.5\n1,-1.25\n");
    }
}
