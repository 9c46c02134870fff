//! Flat experiment configuration: one TOML table of typed keys, every key
//! also settable as a command-line flag.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tfluct_core::ensembles::{A0Policy, EnsembleKind, EnsembleSpec, EntryDistribution};
use tfluct_core::integrals::{IntervalSet, Region, DEFAULT_SAMPLES};
use tfluct_core::statistics::{BalanceKind, StatisticKind};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "TFLUCT_OUT";
/// Output directory used when neither the config nor the environment names one.
pub const DEFAULT_OUT: &str = "tfluct-out";
pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_THRESHOLD: f64 = 4.0;
pub const DEFAULT_ORACLE_SEEDS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Partitions,
    Moment,
    Covariance,
    Simulate,
    Corollary,
    OracleCheck,
    Compare,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Partitions => "partitions",
            Self::Moment => "moment",
            Self::Covariance => "covariance",
            Self::Simulate => "simulate",
            Self::Corollary => "corollary",
            Self::OracleCheck => "oracle-check",
            Self::Compare => "compare",
        };
        f.write_str(name)
    }
}

/// Every parameter of every command. Unset keys take their defaults in
/// [`ExperimentConfig::resolve`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// Ensemble kind: toeplitz_real, toeplitz_hermitian, hankel, sparse_toeplitz,
    /// sparse_hankel, wishart:<s>, multi_toeplitz:<r>.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    /// Matrix size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Band width.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_n: Option<usize>,
    /// Entry law: gaussian, rademacher, uniform_sym.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entry: Option<String>,
    /// zero or sampled.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0_policy: Option<String>,
    /// Law of the diagonal coefficient when sampled (defaults to `entry`).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a0_entry: Option<String>,
    /// Admissible diagonals of sparse kinds, e.g. "0:40,60:79".
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparse_region: Option<String>,
    /// omega, omega_q, zeta, wishart, word or trace.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub statistic: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    /// Moment index: the moment is M_{2k}.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Power of the Wishart balance in `corollary`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    /// Polynomial coefficients by degree, e.g. "0,0,1,0,2".
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    /// Factor letters, 1-based, e.g. "1,2,1,2".
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word: Option<Vec<usize>>,
    /// Second word for a word covariance.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub word_q: Option<Vec<usize>>,
    /// Limiting band ratio (defaults to b_n / n).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// Fourth moment of the entries (defaults to the ensemble's).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Continuum region of `moment`, e.g. "0:0.5".
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    /// toeplitz, hankel or wishart.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub balance: Option<String>,
    /// Monte Carlo samples per partition integral.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    /// Number of sampled operators in `oracle-check`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    /// Largest accepted |z| in `compare`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// Output directory.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Record wall-clock time (makes outputs differ between runs).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<bool>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $(if $src.$f.is_some() { $dst.$f = $src.$f.clone(); })*
    };
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing config")
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Keys set in `other` replace keys here.
    pub fn overlay(&mut self, other: &Self) {
        overlay!(
            self, other, command, kind, n, b_n, entry, a0_policy, a0_entry, sparse_region, statistic, p, q, k, s,
            coeffs, word, word_q, b, kappa, region, balance, samples, replicates, master_seed, seeds, threshold,
            output, timing
        );
    }

    /// Fills the defaults that do not depend on the command and checks that
    /// every present key parses.
    pub fn resolve(&self) -> Result<Self> {
        let mut c = self.clone();
        if c.command.is_none() {
            bail!("no command given (in the config file or on the command line)");
        }
        c.samples.get_or_insert(DEFAULT_SAMPLES);
        c.master_seed.get_or_insert(0);
        c.timing.get_or_insert(false);
        if c.output.is_none() {
            c.output = Some(std::env::var(OUT_ENV).unwrap_or_else(|_| DEFAULT_OUT.to_string()));
        }
        let needs_spec = matches!(c.command, Some(Command::Simulate | Command::OracleCheck | Command::Compare));
        if needs_spec {
            c.kind.get_or_insert_with(|| "toeplitz_real".into());
            c.entry.get_or_insert_with(|| "gaussian".into());
            c.a0_policy.get_or_insert_with(|| "zero".into());
            let spec = c.spec()?;
            c.b.get_or_insert(spec.band_ratio());
            c.kappa.get_or_insert(spec.kappa());
        }
        match c.command {
            Some(Command::Simulate | Command::Compare) => {
                c.replicates.get_or_insert(DEFAULT_REPLICATES);
                if c.statistic.is_none() {
                    c.statistic = Some(default_statistic(&c).into());
                }
            }
            Some(Command::Corollary) => {
                c.entry.get_or_insert_with(|| "gaussian".into());
                c.balance.get_or_insert_with(|| "toeplitz".into());
                c.replicates.get_or_insert(DEFAULT_REPLICATES);
            }
            Some(Command::OracleCheck) => {
                c.seeds.get_or_insert(DEFAULT_ORACLE_SEEDS);
            }
            Some(Command::Covariance) => {
                c.kind.get_or_insert_with(|| "toeplitz_real".into());
                c.entry.get_or_insert_with(|| "gaussian".into());
                if c.kappa.is_none() {
                    c.kappa = Some(c.default_kappa()?);
                }
            }
            Some(Command::Moment) => {
                c.kind.get_or_insert_with(|| "toeplitz_real".into());
            }
            _ => {}
        }
        if c.command == Some(Command::Compare) {
            c.threshold.get_or_insert(DEFAULT_THRESHOLD);
        }
        if c.entry.is_some() {
            c.entry_law()?;
        }
        if c.kind.is_some() {
            c.ensemble_kind()?;
        }
        if let Some(r) = &c.region {
            parse_region(r)?;
        }
        if c.statistic.is_some() && needs_spec {
            c.statistic_kinds()?;
        }
        Ok(c)
    }

    fn default_kappa(&self) -> Result<f64> {
        let entry = self.entry_law()?;
        Ok(match self.ensemble_kind()? {
            EnsembleKind::ToeplitzHermitian => entry.kappa_hermitian(),
            _ => entry.kappa(),
        })
    }

    /// SHA-256 of the resolved config's TOML text, without the output path.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output = None;
        let digest = Sha256::digest(c.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn command(&self) -> Result<Command> {
        self.command.ok_or_else(|| anyhow!("no command"))
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(self.output.clone().unwrap_or_else(|| DEFAULT_OUT.into()))
    }

    pub fn require<T: Copy>(&self, value: Option<T>, key: &str) -> Result<T> {
        value.ok_or_else(|| anyhow!("`{key}` is required for {}", self.command.map_or("this command".into(), |c| c.to_string())))
    }

    pub fn ensemble_kind(&self) -> Result<EnsembleKind> {
        let k = self.kind.as_deref().unwrap_or("toeplitz_real");
        Ok(EnsembleKind::from_str(k)?)
    }

    pub fn entry_law(&self) -> Result<EntryDistribution> {
        Ok(EntryDistribution::from_str(self.entry.as_deref().unwrap_or("gaussian"))?)
    }

    pub fn spec(&self) -> Result<EnsembleSpec> {
        let mut spec = EnsembleSpec::new(
            self.ensemble_kind()?,
            self.require(self.n, "n")?,
            self.require(self.b_n, "b_n")?,
            self.entry_law()?,
        );
        spec.a0_policy = A0Policy::from_str(self.a0_policy.as_deref().unwrap_or("zero"))?;
        if let Some(law) = &self.a0_entry {
            spec = spec.with_a0_entry(EntryDistribution::from_str(law)?);
        }
        if let Some(region) = &self.sparse_region {
            spec = spec.with_sparse_region(parse_sparse_region(region)?);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn continuum_region(&self) -> Result<Region> {
        match &self.region {
            None => Ok(Region::Full),
            Some(r) => Ok(Region::Sparse(IntervalSet::new(parse_region(r)?)?)),
        }
    }

    pub fn balance_kind(&self) -> Result<BalanceKind> {
        match self.balance.as_deref().unwrap_or("toeplitz") {
            "toeplitz" => Ok(BalanceKind::Toeplitz),
            "hankel" => Ok(BalanceKind::Hankel),
            "wishart" => Ok(BalanceKind::Wishart { s: self.require(self.s, "s")? }),
            other => bail!("unknown balance {other:?}"),
        }
    }

    /// The statistic, and a partner when a covariance (`q` or `word_q`) is asked for.
    pub fn statistic_kinds(&self) -> Result<Vec<StatisticKind>> {
        let name = self.statistic.as_deref().unwrap_or("omega");
        let p = || self.require(self.p, "p");
        let mut out = match name {
            "omega" => vec![StatisticKind::OmegaP { p: p()? }],
            "zeta" => vec![StatisticKind::ZetaP { p: p()? }],
            "wishart" => vec![StatisticKind::WishartP { p: p()? }],
            "trace" => vec![StatisticKind::NormalizedTrace { p: p()? }],
            "omega_q" => vec![StatisticKind::OmegaQ {
                coeffs: self.coeffs.clone().ok_or_else(|| anyhow!("`coeffs` is required for omega_q"))?,
            }],
            "word" => vec![StatisticKind::Word {
                word: self.word.clone().ok_or_else(|| anyhow!("`word` is required for word statistics"))?,
            }],
            other => bail!("unknown statistic {other:?}"),
        };
        match (&out[0], self.q, &self.word_q) {
            (StatisticKind::OmegaP { p }, Some(q), _) if q != *p => out.push(StatisticKind::OmegaP { p: q }),
            (StatisticKind::ZetaP { p }, Some(q), _) if q != *p => out.push(StatisticKind::ZetaP { p: q }),
            (StatisticKind::Word { word }, _, Some(w)) if w != word => out.push(StatisticKind::Word { word: w.clone() }),
            _ => {}
        }
        Ok(out)
    }
}

fn default_statistic(c: &ExperimentConfig) -> &'static str {
    match c.ensemble_kind() {
        Ok(EnsembleKind::Hankel | EnsembleKind::SparseHankel) => "zeta",
        Ok(EnsembleKind::Wishart { .. }) => "wishart",
        Ok(EnsembleKind::MultiToeplitz { .. }) => "word",
        _ => "omega",
    }
}

fn split_pairs(text: &str) -> Result<Vec<(&str, &str)>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .split_once(':')
                .ok_or_else(|| anyhow!("interval {part:?} is not of the form lo:hi"))
        })
        .collect()
}

/// "lo:hi,lo:hi" with integer bounds.
pub fn parse_sparse_region(text: &str) -> Result<Vec<(usize, usize)>> {
    split_pairs(text)?
        .into_iter()
        .map(|(lo, hi)| Ok((lo.trim().parse()?, hi.trim().parse()?)))
        .collect()
}

/// "lo:hi,lo:hi" with real bounds in [0, 1].
pub fn parse_region(text: &str) -> Result<Vec<(f64, f64)>> {
    split_pairs(text)?
        .into_iter()
        .map(|(lo, hi)| Ok((lo.trim().parse()?, hi.trim().parse()?)))
        .collect()
}
