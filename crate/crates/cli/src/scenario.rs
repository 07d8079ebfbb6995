//! Scenario resolution: command-line flags merged over an optional TOML
//! scenario file, plus key-file parsing.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use qsum_core::adversary::{AttackStrategy, BasisPolicy};
use qsum_core::harness::PartyId;
use qsum_core::protocol::{validate_keys, PrivateKeyString, ProtocolConfig};
use qsum_core::rng::RandomStream;

/// Where a run's keys come from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeysSpec {
    /// Uniform digits drawn from the trial's random stream.
    Random,
    /// Key file: one line per party, N space-separated digits in [0, d).
    File(PathBuf),
    /// Digit rows given inline (scenario files only).
    Explicit(Vec<Vec<u32>>),
}

impl KeysSpec {
    pub fn parse_flag(value: &str) -> KeysSpec {
        if value == "random" {
            KeysSpec::Random
        } else {
            KeysSpec::File(PathBuf::from(value))
        }
    }

    /// Materializes the key strings for one run. `Random` draws from `rng`.
    pub fn load(
        &self,
        cfg: &ProtocolConfig,
        rng: &mut RandomStream,
    ) -> Result<Vec<PrivateKeyString>> {
        let keys = match self {
            KeysSpec::Random => (1..=cfg.n)
                .map(|i| PrivateKeyString::random(PartyId(i), cfg.d, cfg.length, rng))
                .collect(),
            KeysSpec::File(path) => parse_key_file(path)?,
            KeysSpec::Explicit(rows) => rows
                .iter()
                .enumerate()
                .map(|(i, row)| PrivateKeyString::new(PartyId(i as u32 + 1), row.clone()))
                .collect(),
        };
        validate_keys(cfg, &keys).with_context(|| "keys do not fit the scenario")?;
        Ok(keys)
    }
}

fn parse_key_file(path: &Path) -> Result<Vec<PrivateKeyString>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read key file {}", path.display()))?;
    let mut keys = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let digits: Vec<u32> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<u32>().with_context(|| {
                    format!("{}:{}: bad digit {tok:?}", path.display(), lineno + 1)
                })
            })
            .collect::<Result<_>>()?;
        keys.push(PrivateKeyString::new(
            PartyId(keys.len() as u32 + 1),
            digits,
        ));
    }
    if keys.is_empty() {
        bail!("key file {} is empty", path.display());
    }
    Ok(keys)
}

/// Parses the strategy grammar:
/// `none | intercept-resend | measure-resend | entangle-probe |
///  semi-honest-p1 | collude:<ids>`.
pub fn parse_strategy(value: &str) -> Result<Option<AttackStrategy>> {
    let strategy = match value {
        "none" => return Ok(None),
        "intercept-resend" => AttackStrategy::InterceptResend(BasisPolicy::Random),
        "measure-resend" => AttackStrategy::MeasureResend,
        "entangle-probe" => AttackStrategy::EntangleProbe,
        "semi-honest-p1" => AttackStrategy::SemiHonestP1,
        other => {
            if let Some(ids) = other.strip_prefix("collude:") {
                let mut set = BTreeSet::new();
                for tok in ids.split(',') {
                    let id: u32 = tok
                        .trim()
                        .parse()
                        .with_context(|| format!("bad colluder id {tok:?}"))?;
                    set.insert(PartyId(id));
                }
                if set.is_empty() {
                    bail!("collude: needs at least one party id");
                }
                AttackStrategy::Collusion(set)
            } else {
                bail!(
                    "unknown strategy {other:?} (expected none, intercept-resend, \
                     measure-resend, entangle-probe, semi-honest-p1, or collude:<ids>)"
                );
            }
        }
    };
    Ok(Some(strategy))
}

/// Raw TOML scenario file. Every field is optional; explicit flags override.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub command: Option<String>,
    pub d: Option<u32>,
    pub n: Option<u32>,
    pub len: Option<u32>,
    pub decoys: Option<u32>,
    pub threshold: Option<f64>,
    pub seed: Option<u64>,
    pub keys: Option<KeysField>,
    pub strategy: Option<String>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
    pub transcript: Option<PathBuf>,
    pub dmax: Option<u32>,
    pub nmax: Option<u32>,
}

/// `keys = "random"`, `keys = "path/to/file"`, or `keys = [[…], …]`.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum KeysField {
    Word(String),
    Explicit(Vec<Vec<u32>>),
}

impl KeysField {
    pub fn to_spec(&self) -> KeysSpec {
        match self {
            KeysField::Word(w) => KeysSpec::parse_flag(w),
            KeysField::Explicit(rows) => KeysSpec::Explicit(rows.clone()),
        }
    }
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<ScenarioFile> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read scenario file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("malformed scenario file {}", path.display()))
    }

    pub fn check_command(&self, invoked: &str) -> Result<()> {
        if let Some(cmd) = &self.command {
            if cmd != invoked {
                bail!("scenario file names command {cmd:?} but {invoked:?} was invoked");
            }
        }
        Ok(())
    }
}

/// Picks the flag value when given, else the scenario file value.
pub fn pick<T: Clone>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// Like [`pick`] but the field must come from somewhere.
pub fn require<T: Clone>(flag: Option<T>, file: Option<T>, field: &str) -> Result<T> {
    pick(flag, file).with_context(|| format!("--{field} is required (flag or scenario file)"))
}
