//! Seeded random band Toeplitz operators and their relatives, kept
//! matrix-free.
//!
//! A Toeplitz factor is stored as its symbol `a_{-b_n}, …, a_{b_n}` with
//! `T_{rk} = a_{r-k}`, so `T e_k = Σ_j a_j e_{k+j}`. Every kind is built on
//! such factors:
//!
//! | kind                 | operator                | symbol                              |
//! |----------------------|-------------------------|-------------------------------------|
//! | `ToeplitzReal`       | `T`                     | `a_{-j} = a_j`                      |
//! | `ToeplitzHermitian`  | `T`                     | `a_{-j} = conj(a_j)`                |
//! | `Hankel`             | `P T` (`P` reverses)    | all `a_j` independent               |
//! | `SparseToeplitz`     | `T`, masked             | `a_{-j} = a_j`, zero off the mask   |
//! | `SparseHankel`       | `P T`, masked           | independent, zero off the mask      |
//! | `Wishart { s }`      | `Tᵀˢ Tˢ` (unscaled)     | all `a_j` independent               |
//! | `MultiToeplitz { r }`| `r` factors `T_1..T_r`  | each `a_{-j} = a_j`                 |
//!
//! Coefficient `a_j` of factor `f` is drawn from ChaCha8 at stream `f` and
//! counter `zigzag(j)`, so it does not depend on the band width or on the
//! order of sampling.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{contract, guard, Error, Result};
use crate::integrals::{IntervalSet, Region};
use crate::rng::{normal_pair, unit, zigzag, CounterDraws};

/// Largest size [`StructuredOperator::materialize`] accepts.
pub const MAX_MATERIALIZE: usize = 2048;

/// `apply` switches to FFT convolution when `b_n > n / FFT_BAND_DIVISOR`.
pub const FFT_BAND_DIVISOR: usize = 8;

/// Law of the independent coefficients: mean 0, variance 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDistribution {
    Gaussian,
    Rademacher,
    /// Uniform on `[-√3, √3]`.
    UniformSym,
    /// A finite table of atoms and probabilities.
    Custom { values: Vec<f64>, probs: Vec<f64> },
}

impl EntryDistribution {
    /// Validated custom table.
    pub fn custom(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let d = Self::Custom { values, probs };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let Self::Custom { values, probs } = self else {
            return Ok(());
        };
        if values.is_empty() || values.len() != probs.len() {
            return contract("custom table needs matching non-empty values and probs");
        }
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return contract("custom table needs finite values and positive probabilities");
        }
        let total: f64 = probs.iter().sum();
        let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
        let var: f64 = values.iter().zip(probs).map(|(v, p)| v * v * p).sum();
        if (total - 1.0).abs() > 1e-9 || mean.abs() > 1e-9 || (var - 1.0).abs() > 1e-9 {
            return contract(format!(
                "custom table must have total mass 1, mean 0, variance 1 (got {total}, {mean}, {var})"
            ));
        }
        Ok(())
    }

    /// Fourth moment `E a⁴`.
    pub fn kappa(&self) -> f64 {
        match self {
            Self::Gaussian => 3.0,
            Self::Rademacher => 1.0,
            Self::UniformSym => 9.0 / 5.0,
            Self::Custom { values, probs } => values.iter().zip(probs).map(|(v, p)| v.powi(4) * p).sum(),
        }
    }

    /// `E|a|⁴` for `a = (X + iY)/√2` with `X, Y` independent copies.
    pub fn kappa_hermitian(&self) -> f64 {
        (self.kappa() + 1.0) / 2.0
    }

    /// One draw from two random words.
    pub fn draw(&self, w0: u64, w1: u64) -> f64 {
        match self {
            Self::Gaussian => normal_pair(w0, w1).0,
            Self::Rademacher => {
                if w0 >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::UniformSym => 3f64.sqrt() * (2.0 * unit(w0) - 1.0),
            Self::Custom { values, probs } => {
                let u = unit(w0);
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated non-empty")
            }
        }
    }
}

impl FromStr for EntryDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "rademacher" => Ok(Self::Rademacher),
            "uniform_sym" => Ok(Self::UniformSym),
            other => Err(Error::Parse(format!("unknown entry distribution {other:?}"))),
        }
    }
}

impl fmt::Display for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => f.write_str("gaussian"),
            Self::Rademacher => f.write_str("rademacher"),
            Self::UniformSym => f.write_str("uniform_sym"),
            Self::Custom { .. } => f.write_str("custom"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    ToeplitzReal,
    ToeplitzHermitian,
    Hankel,
    SparseToeplitz,
    SparseHankel,
    Wishart { s: usize },
    MultiToeplitz { r: usize },
}

impl EnsembleKind {
    pub fn is_sparse(self) -> bool {
        matches!(self, Self::SparseToeplitz | Self::SparseHankel)
    }

    pub fn is_hankel(self) -> bool {
        matches!(self, Self::Hankel | Self::SparseHankel)
    }

    /// Kinds whose symbol satisfies `a_{-j} = a_j`.
    fn is_symmetric_symbol(self) -> bool {
        matches!(self, Self::ToeplitzReal | Self::SparseToeplitz | Self::MultiToeplitz { .. })
    }

    pub fn factor_count(self) -> usize {
        match self {
            Self::MultiToeplitz { r } => r,
            _ => 1,
        }
    }
}

impl FromStr for EnsembleKind {
    type Err = Error;

    /// `toeplitz_real`, `toeplitz_hermitian`, `hankel`, `sparse_toeplitz`,
    /// `sparse_hankel`, `wishart:<s>` or `multi_toeplitz:<r>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let count = |a: Option<&str>| -> Result<usize> {
            a.ok_or_else(|| Error::Parse(format!("{name} needs a count, e.g. {name}:2")))?
                .parse()
                .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        };
        let kind = match name {
            "toeplitz_real" => Self::ToeplitzReal,
            "toeplitz_hermitian" => Self::ToeplitzHermitian,
            "hankel" => Self::Hankel,
            "sparse_toeplitz" => Self::SparseToeplitz,
            "sparse_hankel" => Self::SparseHankel,
            "wishart" => return Ok(Self::Wishart { s: count(arg)? }),
            "multi_toeplitz" => return Ok(Self::MultiToeplitz { r: count(arg)? }),
            _ => return Err(Error::Parse(format!("unknown ensemble kind {s:?}"))),
        };
        if arg.is_some() {
            return Err(Error::Parse(format!("{name} takes no count")));
        }
        Ok(kind)
    }
}

impl fmt::Display for EnsembleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ToeplitzReal => f.write_str("toeplitz_real"),
            Self::ToeplitzHermitian => f.write_str("toeplitz_hermitian"),
            Self::Hankel => f.write_str("hankel"),
            Self::SparseToeplitz => f.write_str("sparse_toeplitz"),
            Self::SparseHankel => f.write_str("sparse_hankel"),
            Self::Wishart { s } => write!(f, "wishart:{s}"),
            Self::MultiToeplitz { r } => write!(f, "multi_toeplitz:{r}"),
        }
    }
}

/// Whether the diagonal coefficient `a_0` is zero or drawn like the others.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum A0Policy {
    #[default]
    Zero,
    Sampled,
}

impl FromStr for A0Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "sampled" => Ok(Self::Sampled),
            _ => Err(Error::Parse(format!("unknown a0 policy {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    pub b_n: usize,
    pub entry: EntryDistribution,
    #[serde(default)]
    pub a0_policy: A0Policy,
    /// Law of `a_0` under [`A0Policy::Sampled`]; defaults to `entry`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0_entry: Option<EntryDistribution>,
    /// Inclusive integer intervals of admissible `|j|`, inside `[0, b_n]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparse_region: Option<Vec<(usize, usize)>>,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, n: usize, b_n: usize, entry: EntryDistribution) -> Self {
        Self {
            kind,
            n,
            b_n,
            entry,
            a0_policy: A0Policy::Zero,
            a0_entry: None,
            sparse_region: None,
        }
    }

    pub fn with_a0(mut self, policy: A0Policy) -> Self {
        self.a0_policy = policy;
        self
    }

    /// Samples `a_0` from `law` instead of the entry distribution.
    pub fn with_a0_entry(mut self, law: EntryDistribution) -> Self {
        self.a0_policy = A0Policy::Sampled;
        self.a0_entry = Some(law);
        self
    }

    /// Distribution of `a_0` when it is sampled.
    pub fn a0_law(&self) -> &EntryDistribution {
        self.a0_entry.as_ref().unwrap_or(&self.entry)
    }

    pub fn with_sparse_region(mut self, intervals: Vec<(usize, usize)>) -> Self {
        self.sparse_region = Some(intervals);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return contract(format!("n = {} must be at least 2", self.n));
        }
        if self.b_n == 0 || self.b_n > self.n - 1 {
            return contract(format!("b_n = {} must lie in [1, n - 1 = {}]", self.b_n, self.n - 1));
        }
        self.entry.validate()?;
        if let Some(law) = &self.a0_entry {
            law.validate()?;
        }
        match self.kind {
            EnsembleKind::Wishart { s: 0 } => return contract("wishart power s must be positive"),
            EnsembleKind::MultiToeplitz { r: 0 } => return contract("multi_toeplitz needs r ≥ 1"),
            _ => {}
        }
        match (&self.sparse_region, self.kind.is_sparse()) {
            (None, true) => contract(format!("{} requires a sparse region", self.kind)),
            (Some(_), false) => contract(format!("{} does not take a sparse region", self.kind)),
            (None, false) => Ok(()),
            (Some(intervals), true) => {
                let mut sorted = intervals.clone();
                sorted.sort();
                for &(lo, hi) in &sorted {
                    if lo > hi || hi > self.b_n {
                        return contract(format!("interval [{lo}, {hi}] not inside [0, b_n = {}]", self.b_n));
                    }
                }
                if sorted.windows(2).any(|w| w[1].0 <= w[0].1) {
                    return contract("sparse intervals overlap");
                }
                if !sorted.iter().any(|&(_, hi)| hi > 0) {
                    return contract("sparse region contains no nonzero offset");
                }
                Ok(())
            }
        }
    }

    /// Whether the offset `j` lies in the band (and the mask, if any).
    pub fn admits(&self, j: i64) -> bool {
        let a = j.unsigned_abs() as usize;
        if a > self.b_n {
            return false;
        }
        match &self.sparse_region {
            Some(iv) => iv.iter().any(|&(lo, hi)| lo <= a && a <= hi),
            None => true,
        }
    }

    /// `b_n / n`.
    pub fn band_ratio(&self) -> f64 {
        self.b_n as f64 / self.n as f64
    }

    /// The continuum counterpart `B₊ = B_n / b_n` of the mask.
    pub fn continuum_region(&self) -> Result<Region> {
        match &self.sparse_region {
            None => Ok(Region::Full),
            Some(iv) => {
                let b = self.b_n as f64;
                let set = IntervalSet::new(iv.iter().map(|&(lo, hi)| (lo as f64 / b, hi as f64 / b)).collect())?;
                Ok(Region::Sparse(set))
            }
        }
    }

    /// Fourth moment of the operator's coefficients.
    pub fn kappa(&self) -> f64 {
        match self.kind {
            EnsembleKind::ToeplitzHermitian => self.entry.kappa_hermitian(),
            _ => self.entry.kappa(),
        }
    }
}

/// Which implementation `apply` uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ApplyPath {
    #[default]
    Auto,
    Direct,
    Fft,
}

// Circulant embedding of one banded symbol.
#[derive(Clone)]
struct FftKernel {
    len: usize,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

// Smallest 2^a or 3·2^a at least `m`.
fn fft_len(m: usize) -> usize {
    let p2 = m.next_power_of_two();
    let p3 = 3 * m.div_ceil(3).next_power_of_two();
    p2.min(p3)
}

impl FftKernel {
    fn new(symbol: &[Complex64], n: usize) -> Self {
        let b = symbol.len() / 2;
        let len = fft_len(n + 2 * b);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let mut spectrum = vec![Complex64::new(0.0, 0.0); len];
        spectrum[..symbol.len()].copy_from_slice(symbol);
        forward.process(&mut spectrum);
        let scale = 1.0 / len as f64;
        for s in &mut spectrum {
            *s *= scale;
        }
        Self {
            len,
            spectrum,
            forward,
            inverse,
        }
    }

    // out_r = Σ_j a_j z_{r-j}, read off the full linear convolution at r + b.
    fn apply(&self, z: &[Complex64], b: usize) -> Vec<Complex64> {
        let n = z.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.len];
        buf[..n].copy_from_slice(z);
        self.forward.process(&mut buf);
        for (x, s) in buf.iter_mut().zip(&self.spectrum) {
            *x *= s;
        }
        self.inverse.process(&mut buf);
        buf[b..b + n].to_vec()
    }
}

#[derive(Clone)]
struct Factor {
    /// `a_{j}` at index `j + b_n`.
    symbol: Vec<Complex64>,
    real: Option<Vec<f64>>,
    nonzero: Vec<i64>,
    kernel: OnceLock<FftKernel>,
    adjoint_kernel: OnceLock<FftKernel>,
}

impl Factor {
    fn new(symbol: Vec<Complex64>) -> Self {
        let b = (symbol.len() / 2) as i64;
        let real = symbol
            .iter()
            .all(|c| c.im == 0.0)
            .then(|| symbol.iter().map(|c| c.re).collect());
        let nonzero = (-b..=b).filter(|&j| symbol[(j + b) as usize] != Complex64::new(0.0, 0.0)).collect();
        Self {
            symbol,
            real,
            nonzero,
            kernel: OnceLock::new(),
            adjoint_kernel: OnceLock::new(),
        }
    }

    fn b(&self) -> usize {
        self.symbol.len() / 2
    }

    // Symbol of the transpose: a'_j = a_{-j}.
    fn reversed(&self) -> Vec<Complex64> {
        self.symbol.iter().rev().copied().collect()
    }

    fn kernel(&self, adjoint: bool, n: usize) -> &FftKernel {
        if adjoint {
            self.adjoint_kernel.get_or_init(|| FftKernel::new(&self.reversed(), n))
        } else {
            self.kernel.get_or_init(|| FftKernel::new(&self.symbol, n))
        }
    }
}

impl fmt::Debug for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Factor").field("symbol", &self.symbol).finish()
    }
}

// out_r += Σ_{j in offsets} coef(j) v_{r-j}, dropping out-of-range terms.
fn direct_conv<T, C>(offsets: &[i64], coef: impl Fn(i64) -> C, v: &[T], out: &mut [T])
where
    T: Copy + std::ops::AddAssign + std::ops::Mul<C, Output = T>,
    C: Copy,
{
    let n = v.len() as i64;
    for &j in offsets {
        let a = coef(j);
        let r0 = j.max(0);
        let r1 = (n + j).min(n);
        if r0 >= r1 {
            continue;
        }
        let src = &v[(r0 - j) as usize..(r1 - j) as usize];
        for (o, &x) in out[r0 as usize..r1 as usize].iter_mut().zip(src) {
            *o += x * a;
        }
    }
}

/// Dense row-major matrix, used as a test oracle.
#[derive(Clone, Debug, PartialEq)]
pub enum DenseMatrix {
    Real { n: usize, data: Vec<f64> },
    Complex { n: usize, data: Vec<Complex64> },
}

impl DenseMatrix {
    pub fn n(&self) -> usize {
        match self {
            Self::Real { n, .. } | Self::Complex { n, .. } => *n,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        match self {
            Self::Real { n, data } => Complex64::new(data[r * n + c], 0.0),
            Self::Complex { n, data } => data[r * n + c],
        }
    }

    /// Entries as complex numbers, row-major.
    pub fn to_complex(&self) -> Vec<Complex64> {
        let n = self.n();
        (0..n * n).map(|k| self.get(k / n, k % n)).collect()
    }
}

/// A sampled operator; immutable and shareable across threads.
#[derive(Clone, Debug)]
pub struct StructuredOperator {
    spec: EnsembleSpec,
    factors: Vec<Factor>,
}

/// Draws an operator for `spec`; identical `(spec, seed)` give identical
/// coefficients.
pub fn sample(spec: &EnsembleSpec, seed: u64) -> Result<StructuredOperator> {
    spec.validate()?;
    let b = spec.b_n as i64;
    let mut draws = CounterDraws::new(seed);
    let factors = (0..spec.kind.factor_count())
        .map(|f| {
            let stream = f as u64;
            let mut symbol = vec![Complex64::new(0.0, 0.0); 2 * spec.b_n + 1];
            for j in -b..=b {
                if !spec.admits(j) || (j == 0 && spec.a0_policy == A0Policy::Zero) {
                    continue;
                }
                let value = match spec.kind {
                    _ if j == 0 => {
                        let w = draws.words(stream, 0);
                        Complex64::new(spec.a0_law().draw(w[0], w[1]), 0.0)
                    }
                    EnsembleKind::ToeplitzHermitian => {
                        let w = draws.words(stream, zigzag(j.abs()));
                        let re = spec.entry.draw(w[0], w[1]);
                        let im = spec.entry.draw(w[2], w[3]);
                        let z = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
                        if j > 0 {
                            z
                        } else {
                            z.conj()
                        }
                    }
                    kind => {
                        let key = if kind.is_symmetric_symbol() { j.abs() } else { j };
                        let w = draws.words(stream, zigzag(key));
                        Complex64::new(spec.entry.draw(w[0], w[1]), 0.0)
                    }
                };
                symbol[(j + b) as usize] = value;
            }
            Factor::new(symbol)
        })
        .collect();
    Ok(StructuredOperator {
        spec: spec.clone(),
        factors,
    })
}

impl StructuredOperator {
    /// Builds an operator from explicit symbols (`a_{-b_n}..a_{b_n}` per factor).
    pub fn from_symbols(spec: &EnsembleSpec, symbols: Vec<Vec<Complex64>>) -> Result<Self> {
        spec.validate()?;
        if symbols.len() != spec.kind.factor_count() {
            return contract(format!("{} needs {} symbols", spec.kind, spec.kind.factor_count()));
        }
        let b = spec.b_n as i64;
        for s in &symbols {
            if s.len() != 2 * spec.b_n + 1 {
                return contract("symbol length must be 2 b_n + 1");
            }
            for j in -b..=b {
                let a = s[(j + b) as usize];
                let partner = s[(b - j) as usize];
                let zero = Complex64::new(0.0, 0.0);
                if a != zero && !spec.admits(j) {
                    return contract(format!("coefficient at offset {j} outside the band"));
                }
                match spec.kind {
                    EnsembleKind::ToeplitzHermitian if a != partner.conj() => {
                        return contract("hermitian symbol needs a_{-j} = conj(a_j)")
                    }
                    k if k.is_symmetric_symbol() && a != partner => {
                        return contract("symmetric symbol needs a_{-j} = a_j")
                    }
                    k if k != EnsembleKind::ToeplitzHermitian && a.im != 0.0 => {
                        return contract("real kinds need real coefficients")
                    }
                    _ => {}
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            factors: symbols.into_iter().map(Factor::new).collect(),
        })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn b_n(&self) -> usize {
        self.spec.b_n
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    pub fn is_complex(&self) -> bool {
        self.spec.kind == EnsembleKind::ToeplitzHermitian
    }

    /// `a_j` of factor `f`; zero outside the band.
    pub fn coefficient(&self, f: usize, j: i64) -> Complex64 {
        let b = self.spec.b_n as i64;
        if j.abs() > b {
            return Complex64::new(0.0, 0.0);
        }
        self.factors[f].symbol[(j + b) as usize]
    }

    /// Real coefficient; zero for the imaginary part of Hermitian symbols.
    pub fn coefficient_re(&self, f: usize, j: i64) -> f64 {
        self.coefficient(f, j).re
    }

    /// Offsets with a nonzero coefficient in factor `f`.
    pub fn support(&self, f: usize) -> &[i64] {
        &self.factors[f].nonzero
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.spec.n {
            return contract(format!("vector length {len} != n = {}", self.spec.n));
        }
        Ok(())
    }

    fn resolve(&self, path: ApplyPath) -> ApplyPath {
        match path {
            ApplyPath::Auto if self.spec.b_n * FFT_BAND_DIVISOR > self.spec.n => ApplyPath::Fft,
            ApplyPath::Auto => ApplyPath::Direct,
            p => p,
        }
    }

    /// Applies factor `f` (or its transpose) to a real vector.
    pub(crate) fn toeplitz_real(&self, f: usize, adjoint: bool, v: &[f64], path: ApplyPath) -> Vec<f64> {
        let factor = &self.factors[f];
        match (self.resolve(path), &factor.real) {
            (ApplyPath::Direct, Some(sym)) => {
                let b = factor.b() as i64;
                let mut out = vec![0.0; v.len()];
                let sign = if adjoint { -1 } else { 1 };
                direct_conv(&factor.nonzero, |j| sym[(sign * j + b) as usize], v, &mut out);
                out
            }
            _ => {
                let z: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                self.toeplitz_complex(f, adjoint, &z, path).into_iter().map(|c| c.re).collect()
            }
        }
    }

    /// Applies factor `f` (or its transpose) to two real vectors at once.
    pub(crate) fn toeplitz_real_pair(
        &self,
        f: usize,
        adjoint: bool,
        v: &[f64],
        w: &[f64],
        path: ApplyPath,
    ) -> (Vec<f64>, Vec<f64>) {
        let factor = &self.factors[f];
        if self.resolve(path) == ApplyPath::Fft && factor.real.is_some() {
            // A real kernel maps v + i w to T v + i T w.
            let z: Vec<Complex64> = v.iter().zip(w).map(|(&a, &b)| Complex64::new(a, b)).collect();
            let out = factor.kernel(adjoint, self.spec.n).apply(&z, factor.b());
            (out.iter().map(|c| c.re).collect(), out.iter().map(|c| c.im).collect())
        } else {
            (self.toeplitz_real(f, adjoint, v, path), self.toeplitz_real(f, adjoint, w, path))
        }
    }

    /// Applies factor `f` (or its conjugate-free transpose) to a complex vector.
    pub(crate) fn toeplitz_complex(&self, f: usize, adjoint: bool, v: &[Complex64], path: ApplyPath) -> Vec<Complex64> {
        let factor = &self.factors[f];
        let b = factor.b() as i64;
        match self.resolve(path) {
            ApplyPath::Fft => factor.kernel(adjoint, self.spec.n).apply(v, factor.b()),
            _ => {
                let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
                let sign = if adjoint { -1 } else { 1 };
                direct_conv(&factor.nonzero, |j| factor.symbol[(sign * j + b) as usize], v, &mut out);
                out
            }
        }
    }

    /// `M v` for the kind's operator `M`, on the automatically chosen path.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_with(v, ApplyPath::Auto)
    }

    pub fn apply_with(&self, v: &[f64], path: ApplyPath) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        match self.spec.kind {
            EnsembleKind::ToeplitzHermitian => contract("hermitian operators act on complex vectors; use apply_complex"),
            EnsembleKind::MultiToeplitz { .. } => contract("multi-matrix operators apply per factor; use apply_factor"),
            EnsembleKind::ToeplitzReal | EnsembleKind::SparseToeplitz => Ok(self.toeplitz_real(0, false, v, path)),
            EnsembleKind::Hankel | EnsembleKind::SparseHankel => {
                let mut out = self.toeplitz_real(0, false, v, path);
                out.reverse();
                Ok(out)
            }
            EnsembleKind::Wishart { s } => {
                let mut out = v.to_vec();
                for _ in 0..s {
                    out = self.toeplitz_real(0, false, &out, path);
                }
                for _ in 0..s {
                    out = self.toeplitz_real(0, true, &out, path);
                }
                Ok(out)
            }
        }
    }

    /// `M v` for complex `v`; defined for every single-operator kind.
    pub fn apply_complex(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply_complex_with(v, ApplyPath::Auto)
    }

    pub fn apply_complex_with(&self, v: &[Complex64], path: ApplyPath) -> Result<Vec<Complex64>> {
        self.check_len(v.len())?;
        match self.spec.kind {
            EnsembleKind::MultiToeplitz { .. } => contract("multi-matrix operators apply per factor; use apply_factor"),
            EnsembleKind::Hankel | EnsembleKind::SparseHankel => {
                let mut out = self.toeplitz_complex(0, false, v, path);
                out.reverse();
                Ok(out)
            }
            EnsembleKind::Wishart { s } => {
                let mut out = v.to_vec();
                for _ in 0..s {
                    out = self.toeplitz_complex(0, false, &out, path);
                }
                for _ in 0..s {
                    out = self.toeplitz_complex(0, true, &out, path);
                }
                Ok(out)
            }
            _ => Ok(self.toeplitz_complex(0, false, v, path)),
        }
    }

    /// `T_f v` for one Toeplitz factor (any real kind; `f = 0` is the base
    /// Toeplitz matrix of Hankel and Wishart operators).
    pub fn apply_factor(&self, f: usize, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        if f >= self.factors.len() || self.is_complex() {
            return contract(format!("no real factor {f} in {}", self.spec.kind));
        }
        Ok(self.toeplitz_real(f, false, v, ApplyPath::Auto))
    }

    /// `T_fᵀ v`; equals [`Self::apply_factor`] for symmetric symbols.
    pub fn adjoint_apply(&self, f: usize, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        if f >= self.factors.len() || self.is_complex() {
            return contract(format!("no real factor {f} in {}", self.spec.kind));
        }
        Ok(self.toeplitz_real(f, true, v, ApplyPath::Auto))
    }

    fn check_materialize(&self) -> Result<()> {
        guard("n", self.spec.n, MAX_MATERIALIZE)
    }

    /// Dense `M` (the kind's operator, for Wishart the unscaled `Tᵀˢ Tˢ`).
    pub fn materialize(&self) -> Result<DenseMatrix> {
        self.check_materialize()?;
        let n = self.spec.n;
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for c in 0..n {
            e[c] = Complex64::new(1.0, 0.0);
            let col = match self.spec.kind {
                EnsembleKind::MultiToeplitz { .. } => {
                    return contract("multi-matrix operators materialize per factor");
                }
                _ => self.apply_complex_with(&e, ApplyPath::Direct)?,
            };
            e[c] = Complex64::new(0.0, 0.0);
            for (r, x) in col.into_iter().enumerate() {
                data[r * n + c] = x;
            }
        }
        if self.is_complex() {
            Ok(DenseMatrix::Complex { n, data })
        } else {
            Ok(DenseMatrix::Real {
                n,
                data: data.into_iter().map(|c| c.re).collect(),
            })
        }
    }

    /// Dense `T_f` built entry by entry from the symbol.
    pub fn materialize_factor(&self, f: usize) -> Result<DenseMatrix> {
        self.check_materialize()?;
        if f >= self.factors.len() {
            return contract(format!("no factor {f}"));
        }
        let n = self.spec.n;
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(self.coefficient(f, r as i64 - c as i64));
            }
        }
        if self.is_complex() {
            Ok(DenseMatrix::Complex { n, data })
        } else {
            Ok(DenseMatrix::Real {
                n,
                data: data.into_iter().map(|c| c.re).collect(),
            })
        }
    }
}

const EXPORT_MAGIC: &str = "# tfluct-coefficients v1";

/// Text export: a magic line, a `# spec <json>` line, then one
/// `factor offset re im` line per stored coefficient. Floats use the
/// shortest representation that parses back to the same value.
pub fn export_coefficients(op: &StructuredOperator) -> String {
    let mut out = String::new();
    out.push_str(EXPORT_MAGIC);
    out.push('\n');
    out.push_str("# spec ");
    out.push_str(&serde_json::to_string(&op.spec).expect("spec serializes"));
    out.push('\n');
    let b = op.spec.b_n as i64;
    for (f, factor) in op.factors.iter().enumerate() {
        for j in -b..=b {
            let a = factor.symbol[(j + b) as usize];
            out.push_str(&format!("{f} {j} {:?} {:?}\n", a.re, a.im));
        }
    }
    out
}

/// Inverse of [`export_coefficients`].
pub fn import_coefficients(text: &str) -> Result<StructuredOperator> {
    let parse = |msg: String| Error::Parse(msg);
    let mut lines = text.lines();
    if lines.next() != Some(EXPORT_MAGIC) {
        return Err(parse("missing coefficient header".into()));
    }
    let spec_line = lines.next().ok_or_else(|| parse("missing spec line".into()))?;
    let json = spec_line
        .strip_prefix("# spec ")
        .ok_or_else(|| parse("malformed spec line".into()))?;
    let spec: EnsembleSpec = serde_json::from_str(json).map_err(|e| parse(e.to_string()))?;
    spec.validate()?;
    let b = spec.b_n as i64;
    let width = 2 * spec.b_n + 1;
    let mut symbols = vec![vec![Complex64::new(0.0, 0.0); width]; spec.kind.factor_count()];
    let mut seen = vec![vec![false; width]; symbols.len()];
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = || parse(format!("line {}: {line:?}", lineno + 3));
        if fields.len() != 4 {
            return Err(bad());
        }
        let f: usize = fields[0].parse().map_err(|_| bad())?;
        let j: i64 = fields[1].parse().map_err(|_| bad())?;
        let re: f64 = fields[2].parse().map_err(|_| bad())?;
        let im: f64 = fields[3].parse().map_err(|_| bad())?;
        if f >= symbols.len() || j.abs() > b {
            return Err(bad());
        }
        let idx = (j + b) as usize;
        if seen[f][idx] {
            return Err(parse(format!("duplicate coefficient ({f}, {j})")));
        }
        seen[f][idx] = true;
        symbols[f][idx] = Complex64::new(re, im);
    }
    if seen.iter().flatten().any(|&s| !s) {
        return Err(parse("missing coefficients".into()));
    }
    StructuredOperator::from_symbols(&spec, symbols)
}
