//! One runner per command. Each writes `<command>.json` (resolved config,
//! hash and records), `<command>.config.toml` and any CSV tables into the
//! output directory.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use tfluct_core::ensembles::{sample, EnsembleKind};
use tfluct_core::integrals::{
    limit_covariance, limit_moment, limit_variance_polynomial, limit_word_covariance, limit_word_moment,
    wishart_limit_moment, wishart_surviving_partitions, Flavor, MCEstimate, Region,
};
use tfluct_core::partitions::{
    double_factorial, enumerate_crossing_pair_partitions, enumerate_p24, enumerate_pair_partitions,
};
use tfluct_core::rng::derive_seed;
use tfluct_core::statistics::{
    combinatorial_trace_oracle, corollary_sum_statistic, covariance, replicates_csv, run_statistics, summarize,
    trace_powers, word_trace, word_trace_oracle, BalanceKind, StatisticKind, TraceStatistic,
};
use tfluct_core::Error as CoreError;

use crate::config::{Command, ExperimentConfig};

/// Largest relative difference `oracle-check` accepts.
pub const ORACLE_TOLERANCE: f64 = 1e-9;

const TAG_ORACLE: u64 = 0x6f72;

/// One reported quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub quantity: String,
    pub value: f64,
    pub std_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic_reference: Option<f64>,
    /// `(value - reference) / sqrt(std_error² + reference_error²)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

/// What a command produced.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub records: Vec<ResultRecord>,
    pub files: Vec<PathBuf>,
    /// False when a compare z-score exceeds the threshold or the oracle disagrees.
    pub passed: bool,
}

impl Outcome {
    pub fn record(&self, quantity: &str) -> Option<&ResultRecord> {
        self.records.iter().find(|r| r.quantity == quantity)
    }
}

struct Run {
    config: ExperimentConfig,
    hash: String,
    records: Vec<ResultRecord>,
    tables: Vec<(String, String)>,
    passed: bool,
}

impl Run {
    fn new(config: ExperimentConfig) -> Result<Self> {
        let hash = config.hash()?;
        Ok(Self {
            config,
            hash,
            records: Vec::new(),
            tables: Vec::new(),
            passed: true,
        })
    }

    fn push(&mut self, quantity: impl Into<String>, value: f64, std_error: f64) {
        self.records.push(ResultRecord {
            config_hash: self.hash.clone(),
            quantity: quantity.into(),
            value,
            std_error,
            analytic_reference: None,
            z_score: None,
            wall_time: None,
        });
    }

    fn push_compared(&mut self, quantity: impl Into<String>, value: f64, std_error: f64, reference: &MCEstimate) {
        let combined = std_error.hypot(reference.std_error);
        let z = if combined > 0.0 {
            Some((value - reference.value) / combined)
        } else if value == reference.value {
            None
        } else {
            Some(f64::INFINITY)
        };
        self.push(quantity, value, std_error);
        let last = self.records.last_mut().expect("just pushed");
        last.analytic_reference = Some(reference.value);
        last.z_score = z;
    }

    fn metadata(&self, extra: serde_json::Value) -> Vec<serde_json::Value> {
        vec![
            json!({ "config": self.config, "config_hash": self.hash, "master_seed": self.config.master_seed }),
            extra,
        ]
    }

    fn table(&mut self, name: impl Into<String>, text: String) {
        self.tables.push((name.into(), text));
    }

    fn finish(mut self, started: Instant) -> Result<Outcome> {
        if self.config.timing == Some(true) {
            let secs = started.elapsed().as_secs_f64();
            for r in &mut self.records {
                r.wall_time = Some(secs);
            }
        }
        let command = self.config.command()?;
        let dir = self.config.output_dir();
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut files = Vec::new();
        let mut write = |name: String, text: &str| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            files.push(path);
            Ok(())
        };
        let summary = json!({
            "config": self.config,
            "config_hash": self.hash,
            "master_seed": self.config.master_seed,
            "passed": self.passed,
            "records": self.records,
        });
        write(format!("{command}.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
        write(format!("{command}.config.toml"), &self.config.to_toml()?)?;
        for (name, text) in &self.tables {
            write(format!("{command}_{name}.csv"), text)?;
        }
        Ok(Outcome {
            config: self.config,
            records: self.records,
            files,
            passed: self.passed,
        })
    }
}

/// Resolves the config and runs its command.
pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    let config = config.resolve()?;
    let started = Instant::now();
    let mut run = Run::new(config)?;
    match run.config.command()? {
        Command::Partitions => partitions(&mut run)?,
        Command::Moment => moment(&mut run)?,
        Command::Covariance => covariance_cmd(&mut run)?,
        Command::Simulate => simulate(&mut run)?,
        Command::Corollary => corollary(&mut run)?,
        Command::OracleCheck => oracle_check(&mut run)?,
        Command::Compare => compare(&mut run)?,
    }
    run.finish(started)
}

fn flavor_of(kind: EnsembleKind) -> Result<Flavor> {
    Ok(match kind {
        EnsembleKind::ToeplitzReal | EnsembleKind::SparseToeplitz => Flavor::Real,
        EnsembleKind::ToeplitzHermitian => Flavor::Hermitian,
        EnsembleKind::Hankel | EnsembleKind::SparseHankel => Flavor::Hankel,
        other => bail!("no covariance formula for {other}"),
    })
}

/// File-name fragment for a statistic.
pub fn slug(kind: &StatisticKind) -> String {
    let raw = kind.to_string();
    let mut out = String::new();
    for c in raw.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

fn partitions(run: &mut Run) -> Result<()> {
    let c = &run.config;
    let mut rows = String::from("family,index,blocks\n");
    let mut counts = Vec::new();
    match (c.p, c.q, c.k) {
        (Some(p), Some(q), _) => {
            let all = enumerate_pair_partitions(p + q)?;
            let crossing = enumerate_crossing_pair_partitions(p, q)?;
            let four = enumerate_p24(p, q)?;
            for (i, pi) in crossing.iter().enumerate() {
                rows.push_str(&format!("crossing,{i},\"{}\"\n", pi.partition()));
            }
            for (i, f) in four.iter().enumerate() {
                rows.push_str(&format!("four_block,{i},\"{}\"\n", f.partition()));
            }
            counts.push((format!("pair_partitions({})", p + q), all.len(), Some(double_factorial(p as i64 + q as i64 - 1))));
            counts.push((format!("crossing_pair_partitions({p},{q})"), crossing.len(), None));
            counts.push((format!("four_block_partitions({p},{q})"), four.len(), None));
        }
        (_, _, Some(k)) => {
            let all = enumerate_pair_partitions(2 * k)?;
            for (i, pi) in all.iter().enumerate() {
                rows.push_str(&format!("pair,{i},\"{}\"\n", pi.partition()));
            }
            counts.push((format!("pair_partitions({})", 2 * k), all.len(), Some(double_factorial(2 * k as i64 - 1))));
        }
        _ => bail!("partitions needs `k`, or `p` and `q`"),
    }
    for (name, count, reference) in counts {
        match reference {
            Some(r) => {
                let exact = MCEstimate::exact(r as f64, 0);
                run.push_compared(name, count as f64, 0.0, &exact);
            }
            None => run.push(name, count as f64, 0.0),
        }
    }
    let meta = run.metadata(json!({ "table": "partitions" }));
    let mut text = replicates_header(&meta);
    text.push_str(&rows);
    run.table("table", text);
    Ok(())
}

fn replicates_header(meta: &[serde_json::Value]) -> String {
    meta.iter().map(|m| format!("# {m}\n")).collect()
}

// 2^k (2k-1)!!, the band-free moment of the full region.
fn band_free_moment(k: usize) -> f64 {
    2f64.powi(k as i32) * double_factorial(2 * k as i64 - 1) as f64
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|x| x as f64).product()
}

fn moment(run: &mut Run) -> Result<()> {
    let c = run.config.clone();
    let b = c.require(c.b, "b")?;
    let samples = c.require(c.samples, "samples")?;
    let seed = c.require(c.master_seed, "master_seed")?;
    match c.ensemble_kind()? {
        EnsembleKind::Wishart { s } => {
            let p = c.require(c.p, "p")?;
            let count = wishart_surviving_partitions(p, s)?.len();
            run.push_compared(
                format!("wishart_surviving_partitions({p},{s})"),
                count as f64,
                0.0,
                &MCEstimate::exact(factorial(p * s), seed),
            );
            let m = wishart_limit_moment(p, s, b, samples, seed)?;
            let name = format!("wishart_moment({p},{s})");
            if b == 0.0 {
                let exact = 2f64.powi((p * s) as i32) * factorial(p * s);
                run.push_compared(name, m.value, m.std_error, &MCEstimate::exact(exact, seed));
            } else {
                run.push(name, m.value, m.std_error);
            }
        }
        EnsembleKind::MultiToeplitz { .. } => {
            let word = c.word.clone().ok_or_else(|| anyhow::anyhow!("`word` is required"))?;
            let m = limit_word_moment(&word, b, samples, seed)?;
            run.push(format!("word_moment({})", join(&word)), m.value, m.std_error);
        }
        _ => {
            let k = c.require(c.k, "k")?;
            let region = c.continuum_region()?;
            let m = limit_moment(k, b, &region, samples, seed)?;
            let name = format!("moment({})", 2 * k);
            match (&region, k, b) {
                (Region::Full, _, 0.0) => {
                    run.push_compared(name, m.value, m.std_error, &MCEstimate::exact(band_free_moment(k), seed))
                }
                (Region::Full, 1, _) => run.push_compared(name, m.value, m.std_error, &MCEstimate::exact(2.0 - b, seed)),
                _ => run.push(name, m.value, m.std_error),
            }
        }
    }
    Ok(())
}

fn join(word: &[usize]) -> String {
    word.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn covariance_cmd(run: &mut Run) -> Result<()> {
    let c = run.config.clone();
    let b = c.require(c.b, "b")?;
    let kappa = c.require(c.kappa, "kappa")?;
    let samples = c.require(c.samples, "samples")?;
    let seed = c.require(c.master_seed, "master_seed")?;
    let kind = c.ensemble_kind()?;
    if let EnsembleKind::MultiToeplitz { .. } = kind {
        let word = c.word.clone().ok_or_else(|| anyhow::anyhow!("`word` is required"))?;
        let word_q = c.word_q.clone().unwrap_or_else(|| word.clone());
        let sigma = limit_word_covariance(&word, &word_q, b, kappa, samples, seed)?;
        run.push(format!("word_covariance({};{})", join(&word), join(&word_q)), sigma.value, sigma.std_error);
        return Ok(());
    }
    let flavor = flavor_of(kind)?;
    if let Some(coeffs) = &c.coeffs {
        let sigma = limit_variance_polynomial(coeffs, b, kappa, flavor, samples, seed)?;
        run.push("polynomial_variance", sigma.value, sigma.std_error);
        return Ok(());
    }
    let p = c.require(c.p, "p")?;
    let q = c.q.unwrap_or(p);
    let sigma = limit_covariance(p, q, b, kappa, flavor, samples, seed)?;
    run.push(format!("covariance({p},{q})"), sigma.value, sigma.std_error);
    Ok(())
}

fn write_replicates(run: &mut Run, stat: &TraceStatistic) {
    let meta = run.metadata(json!({
        "statistic": stat.kind,
        "spec": stat.spec,
        "master_seed": stat.master_seed,
        "raw_mean": stat.raw_mean,
        "centering": "replicate sample mean",
    }));
    run.table(slug(&stat.kind), replicates_csv(&stat.replicates, &meta));
}

fn push_summary(run: &mut Run, name: &str, values: &[f64]) -> Result<Option<tfluct_core::statistics::StatSummary>> {
    match summarize(values) {
        Ok(s) => {
            run.push(format!("{name}.variance"), s.variance, s.variance_se());
            run.push(format!("{name}.skewness"), s.skewness, s.skewness_se());
            run.push(format!("{name}.excess_kurtosis"), s.excess_kurtosis, s.kurtosis_se());
            run.push(format!("{name}.jarque_bera"), s.jarque_bera, 0.0);
            Ok(Some(s))
        }
        Err(CoreError::Degenerate(_)) => {
            run.push(format!("{name}.variance"), 0.0, 0.0);
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn simulate(run: &mut Run) -> Result<()> {
    let c = run.config.clone();
    let spec = c.spec()?;
    let kinds = c.statistic_kinds()?;
    let stats = run_statistics(&spec, &kinds, c.require(c.replicates, "replicates")?, c.require(c.master_seed, "master_seed")?)?;
    for st in &stats {
        let name = st.kind.to_string();
        let r = st.replicates.len() as f64;
        let sd = covariance(&st.replicates, &st.replicates)?.sqrt();
        run.push(format!("{name}.mean"), st.raw_mean, sd / r.sqrt());
        push_summary(run, &name, &st.replicates)?;
        write_replicates(run, st);
    }
    if let [a, b] = stats.as_slice() {
        let (cov, se) = covariance_with_se(&a.replicates, &b.replicates)?;
        run.push(format!("cov({},{})", a.kind, b.kind), cov, se);
    }
    Ok(())
}

/// Sample covariance and its standard error.
pub fn covariance_with_se(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let cov = covariance(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let spread: f64 = x.iter().zip(y).map(|(a, b)| ((a - mx) * (b - my) - cov).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((cov, (spread / n).sqrt()))
}

fn corollary(run: &mut Run) -> Result<()> {
    let c = run.config.clone();
    let p = c.require(c.p, "p")?;
    let n = c.require(c.n, "n")?;
    let entry = c.entry_law()?;
    let balance = c.balance_kind()?;
    let seed = c.require(c.master_seed, "master_seed")?;
    let st = corollary_sum_statistic(p, n, &entry, balance, c.require(c.replicates, "replicates")?, seed)?;
    let name = "corollary_sum";
    let summary = push_summary(run, name, &st.replicates)?;
    let flavor = match balance {
        BalanceKind::Toeplitz => Some(Flavor::Real),
        BalanceKind::Hankel => Some(Flavor::Hankel),
        BalanceKind::Wishart { .. } => None,
    };
    if let Some(flavor) = flavor {
        let kappa = c.kappa.unwrap_or(entry.kappa());
        let sigma = limit_covariance(p, p, 0.0, kappa, flavor, c.require(c.samples, "samples")?, seed)?;
        let (value, se) = summary.map_or((0.0, 0.0), |s| (s.variance, s.variance_se()));
        run.push_compared(format!("{name}.limit_variance"), value, se, &sigma);
    }
    let meta = run.metadata(json!({
        "statistic": "corollary_sum",
        "p": p,
        "n": n,
        "entry": entry,
        "balance": balance,
        "raw_mean": st.raw_mean,
        "centering": "replicate sample mean",
    }));
    run.table(name, replicates_csv(&st.replicates, &meta));
    Ok(())
}

fn oracle_check(run: &mut Run) -> Result<()> {
    let c = run.config.clone();
    let spec = c.spec()?;
    let seeds = c.require(c.seeds, "seeds")?;
    let master = c.require(c.master_seed, "master_seed")?;
    let multi = matches!(spec.kind, EnsembleKind::MultiToeplitz { .. });
    let word = c.word.clone();
    let max_p = if multi { 0 } else { c.require(c.p, "p")? };
    if multi && word.is_none() {
        bail!("oracle-check on multi_toeplitz needs `word`");
    }
    let mut rows = String::from("seed_index,p,trace,oracle,relative_difference\n");
    let mut worst: f64 = 0.0;
    for i in 0..seeds {
        let op = sample(&spec, derive_seed(master, TAG_ORACLE, i as u64))?;
        let pairs: Vec<(usize, f64, f64)> = if let Some(w) = word.as_ref().filter(|_| multi) {
            vec![(w.len(), word_trace(&op, w)?, word_trace_oracle(&op, w)?)]
        } else {
            let traces = trace_powers(&op, max_p)?;
            (1..=max_p)
                .map(|p| Ok((p, traces[p], combinatorial_trace_oracle(&op, p)?)))
                .collect::<Result<_>>()?
        };
        for (p, t, o) in pairs {
            let rel = (t - o).abs() / t.abs().max(o.abs()).max(1.0);
            worst = worst.max(rel);
            rows.push_str(&format!("{i},{p},{t:?},{o:?},{rel:?}\n"));
        }
    }
    run.push("max_relative_difference", worst, 0.0);
    run.passed = worst <= ORACLE_TOLERANCE;
    let meta = run.metadata(json!({ "table": "oracle_check", "tolerance": ORACLE_TOLERANCE }));
    let mut text = replicates_header(&meta);
    text.push_str(&rows);
    run.table("table", text);
    Ok(())
}

fn compare(run: &mut Run) -> Result<()> {
    let c = run.config.clone();
    let spec = c.spec()?;
    let b = c.require(c.b, "b")?;
    let kappa = c.require(c.kappa, "kappa")?;
    let samples = c.require(c.samples, "samples")?;
    let seed = c.require(c.master_seed, "master_seed")?;
    let replicates = c.require(c.replicates, "replicates")?;
    let mut kinds = c.statistic_kinds()?;
    let moment_target = match &kinds[0] {
        StatisticKind::WishartP { p } | StatisticKind::NormalizedTrace { p } => Some(*p),
        _ => None,
    };
    if let (Some(p), StatisticKind::WishartP { .. }) = (moment_target, &kinds[0]) {
        kinds.push(StatisticKind::NormalizedTrace { p });
    }
    let stats = run_statistics(&spec, &kinds, replicates, seed)?;
    for st in &stats {
        write_replicates(run, st);
    }
    let r = replicates as f64;
    if let Some(p) = moment_target {
        let trace = stats.last().expect("non-empty");
        let reference = match spec.kind {
            EnsembleKind::Wishart { s } => wishart_limit_moment(p, s, b, samples, seed)?,
            EnsembleKind::ToeplitzReal | EnsembleKind::SparseToeplitz if p % 2 == 1 => MCEstimate::exact(0.0, seed),
            EnsembleKind::ToeplitzReal | EnsembleKind::SparseToeplitz => {
                limit_moment(p / 2, b, &spec.continuum_region()?, samples, seed)?
            }
            other => bail!("no limiting moment formula for {other}"),
        };
        let sd = covariance(&trace.replicates, &trace.replicates)?.sqrt();
        run.push_compared(format!("mean({})", trace.kind), trace.raw_mean, sd / r.sqrt(), &reference);
        push_summary(run, &stats[0].kind.to_string(), &stats[0].replicates)?;
    } else {
        let reference = |a: &StatisticKind, bk: &StatisticKind| -> Result<MCEstimate> {
            Ok(match (a, bk) {
                (StatisticKind::OmegaP { p }, StatisticKind::OmegaP { p: q })
                | (StatisticKind::ZetaP { p }, StatisticKind::ZetaP { p: q }) => {
                    limit_covariance(*p, *q, b, kappa, flavor_of(spec.kind)?, samples, seed)?
                }
                (StatisticKind::OmegaQ { coeffs }, _) => {
                    limit_variance_polynomial(coeffs, b, kappa, flavor_of(spec.kind)?, samples, seed)?
                }
                (StatisticKind::Word { word }, StatisticKind::Word { word: w2 }) => {
                    limit_word_covariance(word, w2, b, kappa, samples, seed)?
                }
                _ => bail!("no covariance formula for {a} and {bk}"),
            })
        };
        for st in &stats {
            let name = st.kind.to_string();
            let sigma = reference(&st.kind, &st.kind)?;
            let summary = summarize(&st.replicates);
            let (value, se) = match &summary {
                Ok(s) => (s.variance, s.variance_se()),
                Err(CoreError::Degenerate(_)) => (0.0, 0.0),
                Err(e) => bail!("{e}"),
            };
            run.push_compared(format!("var({name})"), value, se, &sigma);
            if let Ok(s) = summary {
                run.push(format!("{name}.skewness"), s.skewness, s.skewness_se());
                run.push(format!("{name}.excess_kurtosis"), s.excess_kurtosis, s.kurtosis_se());
                run.push(format!("{name}.jarque_bera"), s.jarque_bera, 0.0);
            }
        }
        if let [x, y] = stats.as_slice() {
            let sigma = reference(&x.kind, &y.kind)?;
            let (cov, se) = covariance_with_se(&x.replicates, &y.replicates)?;
            run.push_compared(format!("cov({},{})", x.kind, y.kind), cov, se, &sigma);
        }
    }
    let threshold = c.require(c.threshold, "threshold")?;
    run.passed = run.records.iter().all(|rec| rec.z_score.is_none_or(|z| z.abs() <= threshold));
    Ok(())
}
