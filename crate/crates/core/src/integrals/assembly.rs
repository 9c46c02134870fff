//! Limiting moments and covariances assembled from partition terms.
//!
//! Every term gets its own seed `derive_seed(seed, tag, index)` where
//! `index` is the term's position in enumeration order, terms are evaluated
//! in parallel and the results are summed in that same order.
//!
//! # Delta-degenerate Type I terms
//!
//! A crossing pairing whose delta form has support one forces an index to
//! vanish, and one whose delta form has support two with a tie between two
//! variables that address the same random entry forces two pairs onto one
//! entry. In the underlying moment expansion such index configurations are
//! exactly the ones counted by the fourth-cumulant term, so they are not
//! added again: [`limit_covariance`] sums the remaining Type I terms plus
//! `κ - 1` times the Type II terms. The excluded terms are still produced by
//! [`covariance_terms`] with `degenerate = true`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::form::{
    build_covariance_integrand, build_hankel_integrand, build_moment_integrand, build_wishart_integrand, resolve_delta,
    AffineForm, CovariancePartition, Integrand, SignVariant,
};
use super::mc::{mc_evaluate, MCEstimate, Region};
use crate::error::{contract, guard, Result};
use crate::partitions::{
    enumerate_crossing_pair_partitions, enumerate_p24, enumerate_pair_partitions, restrict_by_color, PairPartition,
    Partition,
};
use crate::rng::derive_seed;

/// Default Monte Carlo samples per partition term.
pub const DEFAULT_SAMPLES: u64 = 1_000_000;

/// Largest ground set enumerated by the assemblies.
pub const MAX_LETTERS: usize = 14;

const TAG_MOMENT: u64 = 0x6d6f;
const TAG_COVARIANCE: u64 = 0x636f;
const TAG_WISHART: u64 = 0x7769;
const TAG_POLYNOMIAL: u64 = 0x706f;

/// Matrix family whose covariance is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Real,
    Hermitian,
    Hankel,
}

impl Flavor {
    /// Smallest admissible power index.
    pub fn min_degree(self) -> usize {
        match self {
            Flavor::Hankel => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermKind {
    TypeI,
    TypeII,
}

/// One weighted partition integral of a covariance assembly.
#[derive(Clone, Debug)]
pub struct CovarianceTerm {
    /// Position in enumeration order, used for seed derivation.
    pub index: usize,
    pub label: String,
    pub kind: TermKind,
    /// `None` for Hankel terms, which have a single integral.
    pub variant: Option<SignVariant>,
    pub weight: f64,
    pub degenerate: bool,
    /// Delta already resolved.
    pub integrand: Integrand,
}

fn check_samples(samples: u64) -> Result<()> {
    if samples == 0 {
        return contract("samples must be positive");
    }
    Ok(())
}

fn evaluate_all(integrands: &[&Integrand], samples: u64, seed: u64, tag: u64, indices: &[usize]) -> Result<Vec<MCEstimate>> {
    integrands
        .par_iter()
        .zip(indices.par_iter())
        .map(|(g, &i)| mc_evaluate(g, samples, derive_seed(seed, tag, i as u64)))
        .collect()
}

/// Limiting `2k`-th moment `M_{2k}(b)` on the full band or a sparse region.
pub fn limit_moment(k: usize, b: f64, region: &Region, samples: u64, seed: u64) -> Result<MCEstimate> {
    if k == 0 {
        return contract("k must be positive");
    }
    guard("2k", 2 * k, MAX_LETTERS)?;
    let pairs = enumerate_pair_partitions(2 * k)?;
    moment_over(&pairs, b, region, samples, seed)
}

fn moment_over(pairs: &[PairPartition], b: f64, region: &Region, samples: u64, seed: u64) -> Result<MCEstimate> {
    check_samples(samples)?;
    let integrands = pairs
        .iter()
        .map(|pi| Ok(build_moment_integrand(pi, b)?.with_region(region.clone())))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Integrand> = integrands.iter().collect();
    let indices: Vec<usize> = (0..refs.len()).collect();
    let parts = evaluate_all(&refs, samples, seed, TAG_MOMENT, &indices)?;
    Ok(MCEstimate::sum(&parts, seed))
}

/// Colouring of the letters of a word: letters with equal symbols share a block.
pub fn word_coloring(word: &[usize]) -> Result<Partition> {
    if word.is_empty() {
        return contract("empty word");
    }
    Partition::from_labels(word)
}

/// Limiting joint moment `tr(T_{w_1} ⋯ T_{w_m}) / (n b_n^{m/2})` of
/// independent Toeplitz factors: the moment sum restricted to pairings that
/// only match equal symbols.
pub fn limit_word_moment(word: &[usize], b: f64, samples: u64, seed: u64) -> Result<MCEstimate> {
    let coloring = word_coloring(word)?;
    if word.len() % 2 == 1 {
        return Ok(MCEstimate::exact(0.0, seed));
    }
    guard("word length", word.len(), MAX_LETTERS)?;
    let pairs = restrict_by_color(&enumerate_pair_partitions(word.len())?, &coloring)?;
    moment_over(&pairs, b, &Region::Full, samples, seed)
}

// Whether the delta form ties the integral to a fourth-cumulant configuration.
fn delta_degenerate(delta: &AffineForm, same_entry: impl Fn(usize, i64, usize, i64) -> bool) -> bool {
    let support = delta.support();
    match support.as_slice() {
        [_] => true,
        &[a, c] => same_entry(a, delta.coeffs[a], c, delta.coeffs[c]),
        _ => false,
    }
}

fn toeplitz_terms(
    p: usize,
    q: usize,
    b: f64,
    kappa: f64,
    variants: &[SignVariant],
    coloring: Option<&Partition>,
) -> Result<Vec<CovarianceTerm>> {
    let mut type_i = enumerate_crossing_pair_partitions(p, q)?;
    let mut type_ii = enumerate_p24(p, q)?;
    if let Some(c) = coloring {
        type_i = restrict_by_color(&type_i, c)?;
        type_ii = restrict_by_color(&type_ii, c)?;
    }
    let mut terms = Vec::new();
    for pi in &type_i {
        // Toeplitz entries depend on |x|, so any two-variable tie hits one entry.
        let block_color = |blk: usize| coloring.map(|c| c.block_of(pi.partition().blocks()[blk][0]));
        for &variant in variants {
            let raw = build_covariance_integrand(CovariancePartition::TypeI(pi), p, q, variant, b)?;
            let delta = raw.delta.as_ref().expect("type I integrand carries a delta");
            let degenerate = delta_degenerate(delta, |a, _, c, _| block_color(a) == block_color(c));
            terms.push(CovarianceTerm {
                index: terms.len(),
                label: pi.to_string(),
                kind: TermKind::TypeI,
                variant: Some(variant),
                weight: 1.0,
                degenerate,
                integrand: resolve_delta(&raw)?,
            });
        }
    }
    for pi in &type_ii {
        for variant in [SignVariant::Minus, SignVariant::Plus] {
            terms.push(CovarianceTerm {
                index: terms.len(),
                label: pi.to_string(),
                kind: TermKind::TypeII,
                variant: Some(variant),
                weight: kappa - 1.0,
                degenerate: false,
                integrand: build_covariance_integrand(CovariancePartition::TypeII(pi), p, q, variant, b)?,
            });
        }
    }
    Ok(terms)
}

fn hankel_terms(p: usize, q: usize, b: f64, kappa: f64) -> Result<Vec<CovarianceTerm>> {
    let mut terms = Vec::new();
    for pi in &enumerate_crossing_pair_partitions(2 * p, 2 * q)? {
        let raw = build_hankel_integrand(CovariancePartition::TypeI(pi), p, q, b)?;
        let delta = raw.delta.as_ref().expect("type I integrand carries a delta");
        // Hankel entries depend on the signed index: a tie is x_a = x_c.
        let degenerate = delta_degenerate(delta, |_, ca, _, cc| ca == -cc);
        terms.push(CovarianceTerm {
            index: terms.len(),
            label: pi.to_string(),
            kind: TermKind::TypeI,
            variant: None,
            weight: 1.0,
            degenerate,
            integrand: resolve_delta(&raw)?,
        });
    }
    for pi in &enumerate_p24(2 * p, 2 * q)? {
        terms.push(CovarianceTerm {
            index: terms.len(),
            label: pi.to_string(),
            kind: TermKind::TypeII,
            variant: None,
            weight: kappa - 1.0,
            degenerate: false,
            integrand: build_hankel_integrand(CovariancePartition::TypeII(pi), p, q, b)?,
        });
    }
    Ok(terms)
}

fn check_b_kappa(b: f64, kappa: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&b) {
        return contract(format!("b = {b} outside [0, 1]"));
    }
    if !kappa.is_finite() || kappa < 1.0 {
        return contract(format!("fourth moment κ = {kappa} must be finite and ≥ 1"));
    }
    Ok(())
}

/// All partition terms of `σ_{p,q}`.
///
/// For the Hankel flavour `p` and `q` index `tr A^{2p}` and `tr A^{2q}`.
/// Real and Hermitian assemblies with odd `p + q` have no terms.
pub fn covariance_terms(p: usize, q: usize, b: f64, kappa: f64, flavor: Flavor) -> Result<Vec<CovarianceTerm>> {
    check_b_kappa(b, kappa)?;
    let min = flavor.min_degree();
    if p < min || q < min {
        return contract(format!("p = {p}, q = {q} below {min} for {flavor:?}"));
    }
    match flavor {
        Flavor::Hankel => {
            guard("2p + 2q", 2 * (p + q), MAX_LETTERS)?;
            hankel_terms(p, q, b, kappa)
        }
        _ if (p + q) % 2 == 1 => Ok(Vec::new()),
        Flavor::Real => {
            guard("p + q", p + q, MAX_LETTERS)?;
            toeplitz_terms(p, q, b, kappa, &[SignVariant::Minus, SignVariant::Plus], None)
        }
        Flavor::Hermitian => {
            guard("p + q", p + q, MAX_LETTERS)?;
            toeplitz_terms(p, q, b, kappa, &[SignVariant::Minus], None)
        }
    }
}

/// Covariance terms of two words over independent real Toeplitz factors.
pub fn word_covariance_terms(word_p: &[usize], word_q: &[usize], b: f64, kappa: f64) -> Result<Vec<CovarianceTerm>> {
    check_b_kappa(b, kappa)?;
    let (p, q) = (word_p.len(), word_q.len());
    if p < 2 || q < 2 {
        return contract("words must have length ≥ 2");
    }
    if (p + q) % 2 == 1 {
        return Ok(Vec::new());
    }
    guard("p + q", p + q, MAX_LETTERS)?;
    let joined: Vec<usize> = word_p.iter().chain(word_q).copied().collect();
    let coloring = word_coloring(&joined)?;
    toeplitz_terms(p, q, b, kappa, &[SignVariant::Minus, SignVariant::Plus], Some(&coloring))
}

/// Evaluates every listed term (degenerate or not), unweighted.
pub fn evaluate_terms(terms: &[CovarianceTerm], samples: u64, seed: u64) -> Result<Vec<MCEstimate>> {
    check_samples(samples)?;
    let refs: Vec<&Integrand> = terms.iter().map(|t| &t.integrand).collect();
    let indices: Vec<usize> = terms.iter().map(|t| t.index).collect();
    evaluate_all(&refs, samples, seed, TAG_COVARIANCE, &indices)
}

fn assemble(terms: &[CovarianceTerm], samples: u64, seed: u64) -> Result<MCEstimate> {
    check_samples(samples)?;
    let live: Vec<CovarianceTerm> = terms.iter().filter(|t| !t.degenerate).cloned().collect();
    let parts = evaluate_terms(&live, samples, seed)?;
    let weighted: Vec<MCEstimate> = parts.iter().zip(&live).map(|(e, t)| e.scaled(t.weight)).collect();
    Ok(MCEstimate::sum(&weighted, seed))
}

/// Limiting covariance `σ_{p,q}` of the centred trace statistics.
pub fn limit_covariance(
    p: usize,
    q: usize,
    b: f64,
    kappa: f64,
    flavor: Flavor,
    samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_samples(samples)?;
    assemble(&covariance_terms(p, q, b, kappa, flavor)?, samples, seed)
}

/// Limiting covariance of the centred word statistics of two words.
pub fn limit_word_covariance(
    word_p: &[usize],
    word_q: &[usize],
    b: f64,
    kappa: f64,
    samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_samples(samples)?;
    assemble(&word_covariance_terms(word_p, word_q, b, kappa)?, samples, seed)
}

/// `σ_Q² = Σ_{i,j} q_i q_j σ_{i,j}` with `coeffs[d]` the coefficient of degree `d`.
///
/// Coefficients below the flavour's minimum degree must be zero.
pub fn limit_variance_polynomial(
    coeffs: &[f64],
    b: f64,
    kappa: f64,
    flavor: Flavor,
    samples: u64,
    seed: u64,
) -> Result<MCEstimate> {
    check_samples(samples)?;
    let min = flavor.min_degree();
    if coeffs.iter().take(min).any(|&c| c != 0.0) {
        return contract(format!("coefficients below degree {min} must vanish"));
    }
    let active: Vec<usize> = (min..coeffs.len()).filter(|&d| coeffs[d] != 0.0).collect();
    if active.is_empty() {
        return contract("all polynomial coefficients are zero");
    }
    let mut pairs = Vec::new();
    for (ai, &i) in active.iter().enumerate() {
        for &j in &active[ai..] {
            pairs.push((i, j));
        }
    }
    let parts = pairs
        .iter()
        .map(|&(i, j)| {
            let s = derive_seed(seed, TAG_POLYNOMIAL, (i * 64 + j) as u64);
            let sigma = limit_covariance(i, j, b, kappa, flavor, samples, s)?;
            let mult = if i == j { 1.0 } else { 2.0 };
            Ok(sigma.scaled(mult * coeffs[i] * coeffs[j]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MCEstimate::sum(&parts, seed))
}

/// Pairings of `[2ps]` whose alternating-block sign sum vanishes identically.
pub fn wishart_surviving_partitions(p: usize, s: usize) -> Result<Vec<PairPartition>> {
    if p == 0 || s == 0 {
        return contract("p and s must be positive");
    }
    guard("2ps", 2 * p * s, MAX_LETTERS)?;
    let mut out = Vec::new();
    for pi in enumerate_pair_partitions(2 * p * s)? {
        if !build_wishart_integrand(&pi, s, 0.0)?.is_null() {
            out.push(pi);
        }
    }
    Ok(out)
}

/// Limiting `p`-th moment of `T*^s T^s / b_n^s`.
pub fn wishart_limit_moment(p: usize, s: usize, b: f64, samples: u64, seed: u64) -> Result<MCEstimate> {
    check_samples(samples)?;
    let surviving = wishart_surviving_partitions(p, s)?;
    let integrands = surviving
        .iter()
        .map(|pi| build_wishart_integrand(pi, s, b))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Integrand> = integrands.iter().collect();
    let indices: Vec<usize> = (0..refs.len()).collect();
    let parts = evaluate_all(&refs, samples, seed, TAG_WISHART, &indices)?;
    Ok(MCEstimate::sum(&parts, seed))
}
