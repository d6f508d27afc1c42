//! TOML carpet configuration and command-line code specifications.
//!
//! ```toml
//! m = 3
//! n = 4
//! digits = [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [2, 0], [2, 1]]
//!
//! [measure]
//! kind = "explicit"          # max_entropy | mcmullen | column_uniform | explicit
//! weights = [[0, 0, 0.2], ...]
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::carpet::{Carpet, Digit};
use crate::error::{Error, Result};
use crate::experiment::{sample_code, stream_rng};
use crate::measure::BernoulliMeasure;
use crate::symbolic::Code;

/// A configuration problem; the message names the offending field.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    m: u32,
    n: u32,
    digits: Vec<(u32, u32)>,
    #[serde(default)]
    measure: RawMeasure,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    kind: Option<String>,
    weights: Option<Vec<(u32, u32, f64)>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    MaxEntropy,
    McMullen,
    ColumnUniform,
    Explicit,
}

impl FromStr for MeasureKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> std::result::Result<Self, ConfigError> {
        match s {
            "max_entropy" => Ok(Self::MaxEntropy),
            "mcmullen" => Ok(Self::McMullen),
            "column_uniform" => Ok(Self::ColumnUniform),
            "explicit" => Ok(Self::Explicit),
            other => Err(ConfigError(format!(
                "measure.kind: unknown kind '{other}' (expected max_entropy, mcmullen, column_uniform or explicit)"
            ))),
        }
    }
}

/// A validated carpet with its measure.
#[derive(Debug, Clone)]
pub struct CarpetConfig {
    pub carpet: Carpet,
    pub kind: MeasureKind,
    pub measure: BernoulliMeasure,
}

impl CarpetConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ConfigError(e.to_string().trim_end().to_owned()))?;
        if raw.m < 2 || raw.n <= raw.m {
            return Err(ConfigError(format!(
                "m, n: need 2 <= m < n, got m={}, n={}",
                raw.m, raw.n
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (idx, &(i, j)) in raw.digits.iter().enumerate() {
            if i >= raw.m || j >= raw.n {
                return Err(ConfigError(format!(
                    "digits[{idx}]: ({i},{j}) outside the {}x{} grid",
                    raw.m, raw.n
                )));
            }
            if !seen.insert((i, j)) {
                return Err(ConfigError(format!(
                    "digits[{idx}]: duplicate digit ({i},{j})"
                )));
            }
        }
        let carpet = Carpet::new(raw.m, raw.n, raw.digits.iter().map(|&d| Digit::from(d)))
            .map_err(|e| ConfigError(format!("digits: {e}")))?;

        let kind: MeasureKind = raw
            .measure
            .kind
            .as_deref()
            .unwrap_or("max_entropy")
            .parse()?;
        let measure = match (kind, raw.measure.weights) {
            (MeasureKind::Explicit, None) => {
                return Err(ConfigError(
                    "measure.weights: required when measure.kind = \"explicit\"".into(),
                ))
            }
            (MeasureKind::Explicit, Some(weights)) => {
                for (idx, &(i, j, w)) in weights.iter().enumerate() {
                    if !carpet.contains(Digit::new(i, j)) {
                        return Err(ConfigError(format!(
                            "measure.weights[{idx}]: ({i},{j}) is not a digit"
                        )));
                    }
                    if !(w.is_finite() && w > 0.0) {
                        return Err(ConfigError(format!(
                            "measure.weights[{idx}]: weight {w} must be positive"
                        )));
                    }
                }
                BernoulliMeasure::bernoulli(
                    &carpet,
                    weights.iter().map(|&(i, j, w)| (Digit::new(i, j), w)),
                )
                .map_err(|e| ConfigError(format!("measure.weights: {e}")))?
            }
            (_, Some(_)) => {
                return Err(ConfigError(
                    "measure.weights: only allowed when measure.kind = \"explicit\"".into(),
                ))
            }
            (MeasureKind::MaxEntropy, None) => BernoulliMeasure::max_entropy(&carpet),
            (MeasureKind::McMullen, None) => BernoulliMeasure::mcmullen(&carpet),
            (MeasureKind::ColumnUniform, None) => BernoulliMeasure::column_uniform(&carpet),
        };
        Ok(Self {
            carpet,
            kind,
            measure,
        })
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }
}

/// How a command obtains a code: `random:<seed>`, `const:<i,j>`, or an
/// explicit `i,j;i,j;...` list.
#[derive(Debug, Clone, PartialEq)]
pub enum CodeSpec {
    Random(u64),
    Const(Digit),
    Explicit(Code),
}

impl FromStr for CodeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(seed) = s.strip_prefix("random:") {
            let seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad seed in code spec '{s}'")))?;
            return Ok(Self::Random(seed));
        }
        if let Some(letter) = s.strip_prefix("const:") {
            let code: Code = letter.parse()?;
            return match code.letters() {
                [d] => Ok(Self::Const(*d)),
                _ => Err(Error::InvalidArgument(format!(
                    "const code needs one letter, got '{letter}'"
                ))),
            };
        }
        Ok(Self::Explicit(s.parse()?))
    }
}

impl CodeSpec {
    /// A code of at least `length` letters. Explicit codes are validated
    /// against the carpet and must already be long enough.
    pub fn realize(&self, mu: &BernoulliMeasure, length: usize) -> Result<Code> {
        let carpet = mu.carpet();
        match self {
            CodeSpec::Random(seed) => {
                let mut rng = stream_rng(*seed, 0);
                sample_code(mu, length.max(1), &mut rng)
            }
            CodeSpec::Const(d) => Code::constant(carpet, *d, length.max(1)),
            CodeSpec::Explicit(code) => {
                let code = Code::new(carpet, code.letters().to_vec())?;
                code.require(length)?;
                Ok(code)
            }
        }
    }
}
