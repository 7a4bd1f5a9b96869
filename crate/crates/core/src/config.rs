//! Flat key-value run configuration (TOML syntax).
//!
//! Required keys: `M`, `m`, `channel`. Everything else has a default:
//!
//! | key | default |
//! |---|---|
//! | `representation` | `"one_hot"` (or `"binary"`) |
//! | `kl` | matches `channel` (`awgn`, `rbf`, `laplace_ub`, `cauchy`); also `laplace_exact`, `none` |
//! | `sigma0_2` | 1.0 |
//! | `sigma_n2` | 0.1 (awgn, rbf) |
//! | `sigma_n` | √0.05 (laplace scale) |
//! | `gamma_n` | 0.17 (cauchy scale) |
//! | `gamma_0` | 5.0 (cauchy prior scale) |
//! | `epochs` | 3000 |
//! | `noise_samples` | 256 channel draws per message per epoch |
//! | `seed` | 0 |
//! | `lr`, `beta1`, `beta2`, `epsilon` | 0.01, 0.99, 0.999, 1e-8 |
//! | `encoder_hidden`, `decoder_hidden` | `[64, 32, 16]`, `[16, 32, 64]` |
//! | `probe_snr_db` | 6 (awgn, laplace), 16 (rbf), 10 (cauchy) |
//! | `probe_every` | 100 |
//! | `probe_max_blocks` | 20000 |

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::channels::{ChannelFamily, ChannelSpec};
use crate::error::{Error, Result};
use crate::nn::AdamConfig;
use crate::objectives::{KlFamily, ObjectiveSpec, Representation};
use crate::systems::{SystemConfig, DEFAULT_NOISE_SAMPLES};

pub const DEFAULT_SIGMA_N2: f64 = 0.1;
pub const DEFAULT_LAPLACE_SIGMA_N: f64 = 0.223_606_797_749_979;
pub const DEFAULT_GAMMA_N: f64 = 0.17;
pub const DEFAULT_GAMMA_0: f64 = 5.0;

const KNOWN_KEYS: &[&str] = &[
    "M",
    "m",
    "channel",
    "representation",
    "kl",
    "sigma0_2",
    "sigma_n2",
    "sigma_n",
    "gamma_n",
    "gamma_0",
    "epochs",
    "noise_samples",
    "seed",
    "lr",
    "beta1",
    "beta2",
    "epsilon",
    "encoder_hidden",
    "decoder_hidden",
    "probe_snr_db",
    "probe_every",
    "probe_max_blocks",
];

/// How BLER is tracked during a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub snr_db: f64,
    /// Probe every this many epochs (0 disables).
    pub every: usize,
    pub max_blocks: u64,
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub probe: ProbeConfig,
}

pub fn default_probe_snr_db(family: ChannelFamily) -> f64 {
    match family {
        ChannelFamily::Awgn | ChannelFamily::Laplace => 6.0,
        ChannelFamily::Rbf => 16.0,
        ChannelFamily::Cauchy => 10.0,
    }
}

fn default_kl(family: ChannelFamily) -> KlFamily {
    match family {
        ChannelFamily::Awgn => KlFamily::Awgn,
        ChannelFamily::Rbf => KlFamily::Rbf,
        ChannelFamily::Laplace => KlFamily::LaplaceUb,
        ChannelFamily::Cauchy => KlFamily::Cauchy,
    }
}

struct Keys<'a>(&'a Table);

impl Keys<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    fn required(&self, key: &str) -> Result<&Value> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Float(f)) => Ok(*f),
            Some(Value::Integer(i)) => Ok(*i as f64),
            Some(v) => Err(type_error(key, "a number", v)),
        }
    }

    fn uint(&self, key: &str) -> Result<Option<u64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(type_error(key, "a non-negative integer", v)),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&str>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(type_error(key, "a string", v)),
        }
    }

    fn widths(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i > 0 => Ok(*i as usize),
                    _ => Err(type_error(key, "an array of positive integers", v)),
                })
                .collect(),
            Some(v) => Err(type_error(key, "an array of positive integers", v)),
        }
    }
}

fn type_error(key: &str, want: &str, got: &Value) -> Error {
    Error::Config(format!("key `{key}` must be {want}, got `{got}`"))
}

/// Parses a configuration file body.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    if let Some(k) = table.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown key `{k}`")));
    }
    let keys = Keys(&table);

    let num_symbols = match keys.required("M")? {
        Value::Integer(i) if *i >= 2 => *i as usize,
        v => return Err(type_error("M", "an integer ≥ 2", v)),
    };
    let channel_dim = match keys.required("m")? {
        Value::Integer(i) if *i >= 2 && i % 2 == 0 => *i as usize,
        v => return Err(type_error("m", "a positive even integer", v)),
    };
    let family: ChannelFamily = match keys.required("channel")? {
        Value::String(s) => s.parse().map_err(|_| Error::Config(format!("unknown channel `{s}`")))?,
        v => return Err(type_error("channel", "a string", v)),
    };

    let representation = match keys.string("representation")? {
        None => Representation::OneHot,
        Some(s) => s
            .parse()
            .map_err(|_| Error::Config(format!("unknown representation `{s}`")))?,
    };
    let kl = match keys.string("kl")? {
        None => default_kl(family),
        Some(s) => s.parse().map_err(|_| Error::Config(format!("unknown kl `{s}`")))?,
    };
    let param = match family {
        ChannelFamily::Awgn | ChannelFamily::Rbf => keys.float("sigma_n2", DEFAULT_SIGMA_N2)?,
        ChannelFamily::Laplace => keys.float("sigma_n", DEFAULT_LAPLACE_SIGMA_N)?,
        ChannelFamily::Cauchy => keys.float("gamma_n", DEFAULT_GAMMA_N)?,
    };
    let channel = ChannelSpec::from_family(family, param).map_err(|e| Error::Config(e.to_string()))?;
    let objective = ObjectiveSpec::new(
        representation,
        kl,
        keys.float("sigma0_2", 1.0)?,
        keys.float("gamma_0", DEFAULT_GAMMA_0)?,
        channel,
    )
    .map_err(|e| Error::Config(e.to_string()))?;

    let defaults = AdamConfig::default();
    let system = SystemConfig {
        num_symbols,
        channel_dim,
        encoder_hidden: keys.widths("encoder_hidden", &[64, 32, 16])?,
        decoder_hidden: keys.widths("decoder_hidden", &[16, 32, 64])?,
        channel,
        objective,
        epochs: keys.uint("epochs")?.unwrap_or(3000) as usize,
        noise_samples: keys.uint("noise_samples")?.unwrap_or(DEFAULT_NOISE_SAMPLES as u64) as usize,
        seed: keys.uint("seed")?.unwrap_or(0),
        adam: AdamConfig {
            lr: keys.float("lr", defaults.lr)?,
            beta1: keys.float("beta1", defaults.beta1)?,
            beta2: keys.float("beta2", defaults.beta2)?,
            epsilon: keys.float("epsilon", defaults.epsilon)?,
        },
    };
    system.validate().map_err(|e| Error::Config(e.to_string()))?;

    let probe = ProbeConfig {
        snr_db: keys.float("probe_snr_db", default_probe_snr_db(family))?,
        every: keys.uint("probe_every")?.unwrap_or(100) as usize,
        max_blocks: keys.uint("probe_max_blocks")?.unwrap_or(20_000),
    };
    if probe.max_blocks == 0 {
        return Err(Error::Config("key `probe_max_blocks` must be positive".into()));
    }
    Ok(RunConfig { system, probe })
}

pub fn load_config(path: impl AsRef<std::path::Path>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
    parse_config(&text)
}

/// A complete, commented configuration with every default spelled out.
pub fn default_config_text(family: ChannelFamily) -> String {
    let noise = match family {
        ChannelFamily::Awgn | ChannelFamily::Rbf => format!("sigma_n2 = {DEFAULT_SIGMA_N2}"),
        ChannelFamily::Laplace => format!("sigma_n = {DEFAULT_LAPLACE_SIGMA_N}"),
        ChannelFamily::Cauchy => format!("gamma_n = {DEFAULT_GAMMA_N}\ngamma_0 = {DEFAULT_GAMMA_0}"),
    };
    let (m_sym, m_dim) = match family {
        ChannelFamily::Awgn => (4, 2),
        _ => (16, 4),
    };
    format!(
        "# messages and real channel dimension (m/2 complex uses)\n\
         M = {m_sym}\n\
         m = {m_dim}\n\
         channel = \"{family}\"\n\
         representation = \"one_hot\"\n\
         kl = \"{kl}\"\n\
         sigma0_2 = 1.0\n\
         {noise}\n\
         epochs = 3000\n\
         noise_samples = {DEFAULT_NOISE_SAMPLES}\n\
         seed = 0\n\
         lr = 0.01\n\
         beta1 = 0.99\n\
         beta2 = 0.999\n\
         epsilon = 1e-8\n\
         encoder_hidden = [64, 32, 16]\n\
         decoder_hidden = [16, 32, 64]\n\
         probe_snr_db = {probe:?}\n\
         probe_every = 100\n\
         probe_max_blocks = 20000\n",
        kl = default_kl(family),
        probe = default_probe_snr_db(family),
    )
}
