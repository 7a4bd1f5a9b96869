//! Stochastic channel models and pilot-based equalization.
//!
//! Complex baseband blocks of `m/2` channel uses are stored as `m` reals,
//! real parts first then imaginary parts: `[Re z_1 .. Re z_k, Im z_1 .. Im z_k]`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel estimates with magnitude below this are treated as erasures.
pub const DEGENERATE_GAIN: f64 = 1e-12;

/// Pilot used while training fading models: the complex symbol `1 + i`.
pub const TRAINING_PILOT: Complex64 = Complex64::new(1.0, 1.0);

/// Channel family and its noise parameter.
///
/// A zero parameter denotes a noiseless channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ChannelSpec {
    /// Additive white Gaussian noise, variance `sigma_n2` per real component.
    Awgn { sigma_n2: f64 },
    /// Rayleigh block fading `h z + n` with `h ~ CN(0, 1)` per block.
    Rbf { sigma_n2: f64 },
    /// Additive i.i.d. Laplace noise with scale `sigma_n` (variance `2 sigma_n²`).
    Laplace { sigma_n: f64 },
    /// Additive i.i.d. Cauchy noise with dispersion `gamma_n`.
    Cauchy { gamma_n: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelFamily {
    Awgn,
    Rbf,
    Laplace,
    Cauchy,
}

impl std::str::FromStr for ChannelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "awgn" => Ok(Self::Awgn),
            "rbf" => Ok(Self::Rbf),
            "laplace" => Ok(Self::Laplace),
            "cauchy" => Ok(Self::Cauchy),
            other => Err(Error::InvalidParameter(format!(
                "unknown channel `{other}` (expected awgn, rbf, laplace or cauchy)"
            ))),
        }
    }
}

impl std::fmt::Display for ChannelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Awgn => "awgn",
            Self::Rbf => "rbf",
            Self::Laplace => "laplace",
            Self::Cauchy => "cauchy",
        })
    }
}

impl ChannelSpec {
    pub fn family(&self) -> ChannelFamily {
        match self {
            Self::Awgn { .. } => ChannelFamily::Awgn,
            Self::Rbf { .. } => ChannelFamily::Rbf,
            Self::Laplace { .. } => ChannelFamily::Laplace,
            Self::Cauchy { .. } => ChannelFamily::Cauchy,
        }
    }

    /// The family's single noise parameter.
    pub fn parameter(&self) -> f64 {
        match *self {
            Self::Awgn { sigma_n2 } | Self::Rbf { sigma_n2 } => sigma_n2,
            Self::Laplace { sigma_n } => sigma_n,
            Self::Cauchy { gamma_n } => gamma_n,
        }
    }

    pub fn from_family(family: ChannelFamily, parameter: f64) -> Result<Self> {
        let spec = match family {
            ChannelFamily::Awgn => Self::Awgn { sigma_n2: parameter },
            ChannelFamily::Rbf => Self::Rbf { sigma_n2: parameter },
            ChannelFamily::Laplace => Self::Laplace { sigma_n: parameter },
            ChannelFamily::Cauchy => Self::Cauchy { gamma_n: parameter },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.parameter();
        if p.is_finite() && p >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{} channel parameter must be finite and non-negative, got {p}",
                self.family()
            )))
        }
    }

    /// Per-component noise variance, where it exists (not for Cauchy).
    pub fn noise_variance(&self) -> Option<f64> {
        match *self {
            Self::Awgn { sigma_n2 } | Self::Rbf { sigma_n2 } => Some(sigma_n2),
            Self::Laplace { sigma_n } => Some(2.0 * sigma_n * sigma_n),
            Self::Cauchy { .. } => None,
        }
    }

    /// Sends `z` through the channel and returns the decoder input.
    ///
    /// Fading blocks are equalized with `pilot_tx`; the returned
    /// [`Transmission`] remembers the effective complex gain so gradients
    /// can be chained back to `z`.
    pub fn transmit<R: Rng + ?Sized>(&self, z: &[f64], pilot_tx: Complex64, rng: &mut R) -> Result<Transmission> {
        let received = match *self {
            Self::Awgn { sigma_n2 } => sample_awgn(z, sigma_n2, rng)?,
            Self::Laplace { sigma_n } => sample_laplace(z, sigma_n, rng)?,
            Self::Cauchy { gamma_n } => sample_cauchy(z, gamma_n, rng)?,
            Self::Rbf { sigma_n2 } => {
                let block = sample_rbf(z, sigma_n2, pilot_tx, rng)?;
                let h_hat = estimate_gain(&block, pilot_tx)?;
                let equalized = rotate_blocks(&block.received, h_hat.inv());
                return Ok(Transmission {
                    received: equalized,
                    gain: Some(block.h_true / h_hat),
                });
            }
        };
        Ok(Transmission { received, gain: None })
    }
}

/// Output of [`ChannelSpec::transmit`].
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    /// What the decoder sees.
    pub received: Vec<f64>,
    /// Complex factor multiplying `z` in `received` (fading only): `h / ĥ`.
    pub gain: Option<Complex64>,
}

impl Transmission {
    /// Maps dL/d(received) to dL/dz.
    pub fn backprop(&self, grad_received: &[f64]) -> Vec<f64> {
        match self.gain {
            None => grad_received.to_vec(),
            Some(c) => rotate_blocks(grad_received, c.conj()),
        }
    }
}

/// A faded block together with its pilot observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FadedBlock {
    pub received: Vec<f64>,
    pub h_true: Complex64,
    pub pilot_rx: Complex64,
}

fn check_param(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and non-negative, got {v}")))
    }
}

fn check_even(m: usize) -> Result<()> {
    if m % 2 == 0 && m > 0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "complex block needs a positive even number of real components, got {m}"
        )))
    }
}

/// Multiplies every complex entry of a stacked block by `c`.
pub fn rotate_blocks(z: &[f64], c: Complex64) -> Vec<f64> {
    let k = z.len() / 2;
    let mut out = vec![0.0; z.len()];
    for j in 0..k {
        let v = Complex64::new(z[j], z[j + k]) * c;
        out[j] = v.re;
        out[j + k] = v.im;
    }
    out
}

/// `z + n`, `n ~ N(0, sigma_n2 I)`.
pub fn sample_awgn<R: Rng + ?Sized>(z: &[f64], sigma_n2: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_param("sigma_n2", sigma_n2)?;
    let std = sigma_n2.sqrt();
    Ok(z.iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(rng);
            v + std * n
        })
        .collect())
}

/// `h z + n` with `h ~ CN(0, 1)`; the pilot goes through the same `h` with
/// its own noise of the same per-component variance.
pub fn sample_rbf<R: Rng + ?Sized>(z: &[f64], sigma_n2: f64, pilot_tx: Complex64, rng: &mut R) -> Result<FadedBlock> {
    let half = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid normal");
    let h = Complex64::new(half.sample(rng), half.sample(rng));
    sample_rbf_with_gain(z, sigma_n2, pilot_tx, h, rng)
}

/// [`sample_rbf`] with a caller-chosen fade `h`.
pub fn sample_rbf_with_gain<R: Rng + ?Sized>(
    z: &[f64],
    sigma_n2: f64,
    pilot_tx: Complex64,
    h: Complex64,
    rng: &mut R,
) -> Result<FadedBlock> {
    check_even(z.len())?;
    check_param("sigma_n2", sigma_n2)?;
    let faded = rotate_blocks(z, h);
    let received = sample_awgn(&faded, sigma_n2, rng)?;
    let std = sigma_n2.sqrt();
    let n_re: f64 = StandardNormal.sample(rng);
    let n_im: f64 = StandardNormal.sample(rng);
    let pilot_rx = h * pilot_tx + Complex64::new(std * n_re, std * n_im);
    Ok(FadedBlock {
        received,
        h_true: h,
        pilot_rx,
    })
}

/// Least-squares gain estimate `ĥ = pilot_rx / pilot_tx`.
pub fn estimate_gain(block: &FadedBlock, pilot_tx: Complex64) -> Result<Complex64> {
    if pilot_tx.norm() == 0.0 {
        return Err(Error::InvalidParameter("pilot symbol must be nonzero".into()));
    }
    let h_hat = block.pilot_rx / pilot_tx;
    if !(h_hat.norm() >= DEGENERATE_GAIN) {
        return Err(Error::DegenerateEstimate(h_hat.norm()));
    }
    Ok(h_hat)
}

/// Divides the received block by the pilot-based estimate of `h`.
pub fn equalize(block: &FadedBlock, pilot_tx: Complex64) -> Result<Vec<f64>> {
    let h_hat = estimate_gain(block, pilot_tx)?;
    Ok(rotate_blocks(&block.received, h_hat.inv()))
}

/// Pilot `√p (1 + i)`: per-component power `p`.
pub fn pilot_with_power(p: f64) -> Complex64 {
    TRAINING_PILOT * p.sqrt()
}

/// `z + n`, `n` i.i.d. Laplace(0, sigma_n) drawn by inverse CDF.
pub fn sample_laplace<R: Rng + ?Sized>(z: &[f64], sigma_n: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_param("sigma_n", sigma_n)?;
    Ok(z.iter()
        .map(|&v| {
            let u: f64 = Open01.sample(rng);
            let u = u - 0.5;
            v - sigma_n * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        })
        .collect())
}

/// `z + n`, `n` i.i.d. Cauchy(0, gamma_n) drawn as `gamma_n tan(π(u − ½))`.
pub fn sample_cauchy<R: Rng + ?Sized>(z: &[f64], gamma_n: f64, rng: &mut R) -> Result<Vec<f64>> {
    check_param("gamma_n", gamma_n)?;
    Ok(z.iter()
        .map(|&v| {
            let u: f64 = Open01.sample(rng);
            if gamma_n == 0.0 {
                v
            } else {
                v + gamma_n * (std::f64::consts::PI * (u - 0.5)).tan()
            }
        })
        .collect())
}
