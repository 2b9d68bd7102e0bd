//! Command-line and JSON configuration.
//!
//! Every flag can also be given in a JSON config file using the flag name as
//! key (`{"element-bits": 64, "k": "3..10"}`); flags on the command line take
//! precedence over the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use num_rational::Ratio;
use serde::Deserialize;
use slidefft_core::mesh_sim::{CostPreset, MeshConfig};
use slidefft_core::slide_fft::AlignStrategy;

use crate::CliError;

/// Inclusive integer set: `7`, `1..500`, `1-500` or `8,16,32` (items may mix).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntSet(pub Vec<u64>);

impl FromStr for IntSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut values = Vec::new();
        for item in s.split(',').map(str::trim) {
            let parse = |t: &str| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| format!("{t:?} is not a non-negative integer"))
            };
            let bounds = item
                .split_once("..=")
                .or_else(|| item.split_once(".."))
                .or_else(|| item.split_once('-'));
            match bounds {
                Some((lo, hi)) => {
                    let (lo, hi) = (parse(lo)?, parse(hi)?);
                    if lo > hi {
                        return Err(format!("empty range {item:?}"));
                    }
                    values.extend(lo..=hi);
                }
                None => values.push(parse(item)?),
            }
        }
        Ok(IntSet(values))
    }
}

impl<'de> Deserialize<'de> for IntSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            One(u64),
            Many(Vec<u64>),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::One(v) => Ok(IntSet(vec![v])),
            Raw::Many(v) => Ok(IntSet(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Non-negative rational: `2`, `2/3` or `1.3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RationalArg(pub Ratio<u64>);

impl FromStr for RationalArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("{s:?} is not a non-negative rational");
        if let Some((num, den)) = s.split_once('/') {
            let num: u64 = num.trim().parse().map_err(|_| bad())?;
            let den: u64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0 {
                return Err(format!("{s:?} has a zero denominator"));
            }
            return Ok(RationalArg(Ratio::new(num, den)));
        }
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        if (whole.is_empty() && frac.is_empty()) || frac.len() > 18 {
            return Err(bad());
        }
        let digits = |t: &str| t.is_empty() || t.bytes().all(|b| b.is_ascii_digit());
        if !digits(whole) || !digits(frac) {
            return Err(bad());
        }
        let whole: u64 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| bad())?
        };
        let scale = 10u64.pow(frac.len() as u32);
        let frac: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse().map_err(|_| bad())?
        };
        let num = whole
            .checked_mul(scale)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(bad)?;
        Ok(RationalArg(Ratio::new(num, scale)))
    }
}

impl<'de> Deserialize<'de> for RationalArg {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Float(f64),
            Text(String),
        }
        let text = match Raw::deserialize(deserializer)? {
            Raw::Int(v) => v.to_string(),
            Raw::Float(v) => v.to_string(),
            Raw::Text(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for RationalArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    Overlay,
    Midpoint,
}

impl From<StrategyArg> for AlignStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Overlay => AlignStrategy::Overlay,
            StrategyArg::Midpoint => AlignStrategy::Midpoint,
        }
    }
}

fn parse_preset(s: &str) -> Result<CostPreset, String> {
    s.parse()
}

fn de_preset<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<CostPreset>, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map(Some).map_err(serde::de::Error::custom)
}

/// Every knob of every subcommand. Unset fields fall back to per-command
/// defaults.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for every random input (ChaCha8, uniform in the unit square).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cost preset: cs2-calibrated or pure-packet.
    #[arg(long, value_parser = parse_preset)]
    #[serde(deserialize_with = "de_preset")]
    pub preset: Option<CostPreset>,
    /// Emit CSV instead of a human-readable table.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(deserialize_with = "de_flag")]
    pub csv: Option<bool>,
    /// Transform size(s), powers of two.
    #[arg(long)]
    pub n: Option<IntSet>,
    /// Log2 of the transform size (predict).
    #[arg(long)]
    pub m: Option<u32>,
    /// Wave exponent(s): PEs = 2^k.
    #[arg(long)]
    pub k: Option<IntSet>,
    /// PE counts for the slide benchmark.
    #[arg(long)]
    pub pes: Option<IntSet>,
    /// Elements per PE for the slide benchmark.
    #[arg(long)]
    pub elements: Option<IntSet>,
    /// Datum width: 32 or 64 for slides; 64 (complex f32) or 128 (complex f64) for transforms.
    #[arg(long)]
    pub element_bits: Option<u32>,
    /// Cycles per datum transfer in the efficiency model.
    #[arg(long)]
    pub a: Option<RationalArg>,
    /// Cycles per FLOP.
    #[arg(long)]
    pub b: Option<RationalArg>,
    /// Charge each datum transfer twice in the efficiency model.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(deserialize_with = "de_flag")]
    pub doubled_transfer: Option<bool>,
    /// Random inputs per size (verify).
    #[arg(long)]
    pub trials: Option<u64>,
    /// Margin threshold for α/(5m) (predict).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Alignment strategy for non-local levels.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// Override: ramp latency in cycles.
    #[arg(long)]
    pub ramp: Option<u64>,
    /// Override: extra cycles per streamed element.
    #[arg(long)]
    pub overhead: Option<RationalArg>,
    /// Override: local memory per PE in bytes.
    #[arg(long)]
    pub local_memory: Option<usize>,
    /// JSON file supplying defaults for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn de_flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
    bool::deserialize(d).map(Some)
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),* $(,)?) => {
        RunConfig { $($field: $top.$field.or($base.$field),)* config: None }
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }

    pub fn from_json_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fields set in `self` win over `base`.
    pub fn over(self, base: RunConfig) -> RunConfig {
        overlay!(
            base,
            self,
            seed,
            out,
            preset,
            csv,
            n,
            m,
            k,
            pes,
            elements,
            element_bits,
            a,
            b,
            doubled_transfer,
            trials,
            threshold,
            strategy,
            ramp,
            overhead,
            local_memory,
        )
    }

    /// Merge with the `--config` file, if any.
    pub fn resolve(self) -> Result<RunConfig, CliError> {
        match &self.config {
            Some(path) => {
                let file = Self::from_json_file(path)?;
                Ok(self.over(file))
            }
            None => Ok(self),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn csv(&self) -> bool {
        self.csv.unwrap_or(false)
    }

    pub fn preset(&self) -> CostPreset {
        self.preset.unwrap_or_default()
    }

    pub fn strategy(&self) -> AlignStrategy {
        self.strategy.map(Into::into).unwrap_or_default()
    }

    /// Mesh parameters from the preset plus any field overrides.
    pub fn mesh_config(&self, rows: usize, cols: usize) -> MeshConfig {
        let mut config = MeshConfig::with_preset(rows, cols, self.preset());
        if let Some(ramp) = self.ramp {
            config.ramp_cycles = ramp;
        }
        if let Some(overhead) = self.overhead {
            config.per_element_overhead_cycles = overhead.0;
        }
        if let Some(bytes) = self.local_memory {
            config.local_memory_bytes = bytes;
        }
        if let Some(b) = self.b {
            config.cycles_per_flop = b.0;
        }
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn int_sets() {
        assert_eq!("7".parse(), Ok(IntSet(vec![7])));
        assert_eq!("1..3".parse(), Ok(IntSet(vec![1, 2, 3])));
        assert_eq!("1..=3".parse(), Ok(IntSet(vec![1, 2, 3])));
        assert_eq!("1-3".parse(), Ok(IntSet(vec![1, 2, 3])));
        assert_eq!("8,16, 32".parse(), Ok(IntSet(vec![8, 16, 32])));
        assert_eq!("0,3..4".parse(), Ok(IntSet(vec![0, 3, 4])));
        assert!("4..2".parse::<IntSet>().is_err());
        assert!("x".parse::<IntSet>().is_err());
        assert!("-3".parse::<IntSet>().is_err());
    }

    #[test]
    fn rationals() {
        let r = |s: &str| s.parse::<RationalArg>().map(|r| r.0);
        assert_eq!(r("2"), Ok(Ratio::from_integer(2)));
        assert_eq!(r("2/3"), Ok(Ratio::new(2, 3)));
        assert_eq!(r("0.3"), Ok(Ratio::new(3, 10)));
        assert_eq!(r("1.25"), Ok(Ratio::new(5, 4)));
        assert_eq!(r(".5"), Ok(Ratio::new(1, 2)));
        assert!(r("1/0").is_err());
        assert!(r("-1").is_err());
        assert!(r("1e3").is_err());
        assert!(r(".").is_err());
    }

    #[test]
    fn json_mirrors_flags_and_flags_win() {
        let file = RunConfig::from_json(
            r#"{"seed": 9, "k": "3..4", "pes": [8, 16], "element-bits": 64, "a": "2/3",
                "overhead": 0.3, "preset": "pure-packet", "csv": true, "strategy": "midpoint"}"#,
        )
        .unwrap();
        assert_eq!(file.k, Some(IntSet(vec![3, 4])));
        assert_eq!(file.pes, Some(IntSet(vec![8, 16])));
        assert_eq!(file.overhead, Some(RationalArg(Ratio::new(3, 10))));
        assert_eq!(file.preset, Some(CostPreset::PurePacket));
        assert_eq!(file.strategy, Some(StrategyArg::Midpoint));

        let cli = RunConfig {
            seed: Some(1),
            ..Default::default()
        };
        let merged = cli.over(file);
        assert_eq!(merged.seed(), 1);
        assert_eq!(merged.element_bits, Some(64));
        assert!(merged.csv());

        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"preset": "fast"}"#).is_err());
    }

    #[test]
    fn mesh_overrides() {
        let cfg = RunConfig {
            preset: Some(CostPreset::PurePacket),
            ramp: Some(3),
            local_memory: Some(1024),
            ..Default::default()
        };
        let mesh = cfg.mesh_config(1, 4);
        assert_eq!(mesh.ramp_cycles, 3);
        assert_eq!(mesh.local_memory_bytes, 1024);
        assert_eq!(mesh.per_element_overhead_cycles, Ratio::from_integer(0));
    }
}
