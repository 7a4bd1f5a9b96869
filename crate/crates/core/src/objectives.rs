//! Training objectives.
//!
//! Every loss is stated for minimization: the negated evidence lower bound,
//! i.e. a reconstruction negative log-likelihood plus the KL divergence
//! between the channel-induced distribution of the received point and the
//! prior. The KL terms only depend on the transmitted point `z`, so they
//! act on the encoder alone and behave as a soft power constraint.

use serde::{Deserialize, Serialize};

use crate::channels::ChannelSpec;
use crate::error::{dim, Error, Result};

/// Probabilities are clamped to at least this before taking logs.
pub const PROB_FLOOR: f64 = 1e-300;

/// How messages are presented to the encoder and scored at the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Length-`M` indicator in, softmax over `M` out, categorical cross-entropy.
    OneHot,
    /// `⌈log₂ M⌉` bits in, sigmoid per bit out, binary cross-entropy.
    Binary,
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_hot" | "onehot" => Ok(Self::OneHot),
            "binary" => Ok(Self::Binary),
            other => Err(Error::InvalidParameter(format!(
                "unknown representation `{other}` (expected one_hot or binary)"
            ))),
        }
    }
}

/// Which KL penalty is added to the reconstruction loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlFamily {
    /// `N(z, σn² I)` against `N(0, σ0² I)`.
    Awgn,
    /// Rayleigh-faded Gaussian against `N(0, σ0² I)`.
    Rbf,
    /// Smooth quadratic upper bound on the Laplace KL (the default for Laplace).
    LaplaceUb,
    /// Exact per-component Laplace KL.
    LaplaceExact,
    /// Cauchy with dispersion `γn` against Cauchy with dispersion `γ0`.
    Cauchy,
    /// No penalty: plain autoencoder cross-entropy.
    None,
}

impl std::str::FromStr for KlFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "awgn" => Ok(Self::Awgn),
            "rbf" => Ok(Self::Rbf),
            "laplace_ub" | "laplace" => Ok(Self::LaplaceUb),
            "laplace_exact" => Ok(Self::LaplaceExact),
            "cauchy" => Ok(Self::Cauchy),
            "none" => Ok(Self::None),
            other => Err(Error::InvalidParameter(format!("unknown kl family `{other}`"))),
        }
    }
}

impl std::fmt::Display for KlFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Awgn => "awgn",
            Self::Rbf => "rbf",
            Self::LaplaceUb => "laplace_ub",
            Self::LaplaceExact => "laplace_exact",
            Self::Cauchy => "cauchy",
            Self::None => "none",
        })
    }
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::OneHot => "one_hot",
            Self::Binary => "binary",
        })
    }
}

/// Reconstruction representation plus KL family and prior parameters.
///
/// The channel parameters the KL needs are read from `channel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub representation: Representation,
    pub kl: KlFamily,
    /// Prior variance σ0² for Gaussian priors; the Laplace prior scale is `√sigma0_2`.
    pub sigma0_2: f64,
    /// Cauchy prior dispersion γ0.
    pub gamma_0: f64,
    pub channel: ChannelSpec,
}

/// Parameters resolved for one KL family.
#[derive(Debug, Clone, Copy)]
enum KlParams {
    Gaussian { sigma_n2: f64, sigma0_2: f64, fading: bool },
    Laplace { sigma_n: f64, sigma_0: f64, exact: bool },
    Cauchy { gamma_n: f64, gamma_0: f64 },
    None,
}

impl ObjectiveSpec {
    pub fn new(
        representation: Representation,
        kl: KlFamily,
        sigma0_2: f64,
        gamma_0: f64,
        channel: ChannelSpec,
    ) -> Result<Self> {
        let spec = Self {
            representation,
            kl,
            sigma0_2,
            gamma_0,
            channel,
        };
        spec.params()?;
        Ok(spec)
    }

    fn params(&self) -> Result<KlParams> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive for {:?} KL, got {v}", self.kl)))
            }
        };
        Ok(match self.kl {
            KlFamily::None => KlParams::None,
            KlFamily::Awgn | KlFamily::Rbf => {
                let sigma_n2 = self.channel.noise_variance().ok_or_else(|| {
                    Error::InvalidParameter("Gaussian KL needs a channel with finite noise variance".into())
                })?;
                KlParams::Gaussian {
                    sigma_n2: positive("sigma_n2", sigma_n2)?,
                    sigma0_2: positive("sigma0_2", self.sigma0_2)?,
                    fading: self.kl == KlFamily::Rbf,
                }
            }
            KlFamily::LaplaceUb | KlFamily::LaplaceExact => match self.channel {
                ChannelSpec::Laplace { sigma_n } => KlParams::Laplace {
                    sigma_n: positive("laplace scale", sigma_n)?,
                    sigma_0: positive("sigma0_2", self.sigma0_2)?.sqrt(),
                    exact: self.kl == KlFamily::LaplaceExact,
                },
                _ => return Err(Error::InvalidParameter("Laplace KL needs a Laplace channel".into())),
            },
            KlFamily::Cauchy => match self.channel {
                ChannelSpec::Cauchy { gamma_n } => KlParams::Cauchy {
                    gamma_n: positive("gamma_n", gamma_n)?,
                    gamma_0: positive("gamma_0", self.gamma_0)?,
                },
                _ => return Err(Error::InvalidParameter("Cauchy KL needs a Cauchy channel".into())),
            },
        })
    }

    /// The KL divergence for transmitted point `z` (0 for [`KlFamily::None`]).
    pub fn kl_value(&self, z: &[f64]) -> Result<f64> {
        match self.params()? {
            KlParams::None => Ok(0.0),
            KlParams::Gaussian {
                sigma_n2,
                sigma0_2,
                fading: false,
            } => kl_awgn(z, sigma_n2, sigma0_2),
            KlParams::Gaussian { sigma_n2, sigma0_2, .. } => kl_rbf(z, sigma_n2, sigma0_2),
            KlParams::Laplace {
                sigma_n,
                sigma_0,
                exact: false,
            } => kl_laplace_ub(z, sigma_n, sigma_0),
            KlParams::Laplace { sigma_n, sigma_0, .. } => kl_laplace_exact(z, sigma_n, sigma_0),
            KlParams::Cauchy { gamma_n, gamma_0 } => kl_cauchy(z, gamma_n, gamma_0),
        }
    }
}

/// Reconstruction, KL and their sum, all as minimization quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(recon: f64, kl: f64) -> Self {
        Self {
            recon,
            kl,
            total: recon + kl,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.recon.is_finite() && self.kl.is_finite() && self.total.is_finite()
    }
}

impl std::ops::Add for LossBreakdown {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            recon: self.recon + o.recon,
            kl: self.kl + o.kl,
            total: self.total + o.total,
        }
    }
}

/// What the decoder should have reproduced.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    OneHot(usize),
    Bits(&'a [u8]),
}

/// `−log p_x` for a softmax output.
pub fn recon_one_hot(probs: &[f64], index: usize) -> Result<f64> {
    let p = *probs.get(index).ok_or(Error::Dimension {
        context: "one-hot target index",
        expected: probs.len(),
        actual: index,
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Binary cross-entropy `−Σ [x log x̂ + (1 − x) log(1 − x̂)]`.
pub fn recon_binary(probs: &[f64], bits: &[u8]) -> Result<f64> {
    dim("binary target", probs.len(), bits.len())?;
    Ok(probs
        .iter()
        .zip(bits)
        .map(|(&p, &b)| {
            if b != 0 {
                -p.max(PROB_FLOOR).ln()
            } else {
                -(1.0 - p).max(PROB_FLOOR).ln()
            }
        })
        .sum())
}

fn check_positive(pairs: &[(&str, f64)]) -> Result<()> {
    for &(name, v) in pairs {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

fn energy(z: &[f64]) -> f64 {
    z.iter().map(|v| v * v).sum()
}

/// `KL(N(z, σn² I) ‖ N(0, σ0² I))`.
pub fn kl_awgn(z: &[f64], sigma_n2: f64, sigma0_2: f64) -> Result<f64> {
    check_positive(&[("sigma_n2", sigma_n2), ("sigma0_2", sigma0_2)])?;
    let m = z.len() as f64;
    let r = sigma_n2 / sigma0_2;
    Ok(energy(z) / (2.0 * sigma0_2) - 0.5 * m * (1.0 - r + r.ln()))
}

/// KL between the Rayleigh-faded received distribution
/// `N(0, ½(zzᵀ − Jzzᵀ J) + σn² I)` and `N(0, σ0² I)`.
pub fn kl_rbf(z: &[f64], sigma_n2: f64, sigma0_2: f64) -> Result<f64> {
    if z.len() % 2 != 0 {
        return Err(Error::InvalidParameter(format!("fading KL needs even m, got {}", z.len())));
    }
    let base = kl_awgn(z, sigma_n2, sigma0_2)?;
    Ok(base - (energy(z) / (2.0 * sigma_n2)).ln_1p())
}

/// Quadratic upper bound on the Laplace KL.
pub fn kl_laplace_ub(z: &[f64], sigma_n: f64, sigma_0: f64) -> Result<f64> {
    check_positive(&[("sigma_n", sigma_n), ("sigma_0", sigma_0)])?;
    let m = z.len() as f64;
    let ratio = sigma_0 * sigma_0 / (sigma_n * sigma_n);
    Ok(energy(z) / (2.0 * sigma_n * sigma_0) + m / 7.0 * (ratio - 1.0).powi(2) / ratio)
}

/// `Σᵢ KL(Laplace(zᵢ, σn) ‖ Laplace(0, σ0))`.
pub fn kl_laplace_exact(z: &[f64], sigma_n: f64, sigma_0: f64) -> Result<f64> {
    check_positive(&[("sigma_n", sigma_n), ("sigma_0", sigma_0)])?;
    let c = (sigma_0 / sigma_n).ln() - 1.0;
    Ok(z.iter()
        .map(|&v| {
            let a = v.abs();
            a / sigma_0 + sigma_n / sigma_0 * (-a / sigma_n).exp() + c
        })
        .sum())
}

/// `Σᵢ KL(Cauchy(zᵢ, γn) ‖ Cauchy(0, γ0))`.
pub fn kl_cauchy(z: &[f64], gamma_n: f64, gamma_0: f64) -> Result<f64> {
    check_positive(&[("gamma_n", gamma_n), ("gamma_0", gamma_0)])?;
    let s = (gamma_n + gamma_0).powi(2);
    let d = 4.0 * gamma_n * gamma_0;
    Ok(z.iter().map(|&v| ((s + v * v) / d).ln()).sum())
}

/// Analytic `∂KL/∂z` for the objective's KL family (all zeros for [`KlFamily::None`]).
pub fn kl_gradient(spec: &ObjectiveSpec, z: &[f64]) -> Result<Vec<f64>> {
    Ok(match spec.params()? {
        KlParams::None => vec![0.0; z.len()],
        KlParams::Gaussian {
            sigma_n2,
            sigma0_2,
            fading,
        } => {
            // d/dz log(1 + |z|²/(2σn²)) = (z/σn²) / (1 + |z|²/(2σn²))
            let capacity = if fading {
                1.0 / (sigma_n2 * (1.0 + energy(z) / (2.0 * sigma_n2)))
            } else {
                0.0
            };
            z.iter().map(|&v| v / sigma0_2 - v * capacity).collect()
        }
        KlParams::Laplace {
            sigma_n,
            sigma_0,
            exact: false,
        } => z.iter().map(|&v| v / (sigma_n * sigma_0)).collect(),
        KlParams::Laplace { sigma_n, sigma_0, .. } => z
            .iter()
            .map(|&v| v.signum() * (1.0 - (-v.abs() / sigma_n).exp()) / sigma_0)
            .collect(),
        KlParams::Cauchy { gamma_n, gamma_0 } => {
            let s = (gamma_n + gamma_0).powi(2);
            z.iter().map(|&v| 2.0 * v / (s + v * v)).collect()
        }
    })
}

/// Reconstruction loss for the decoder output and the target.
pub fn recon_loss(spec: &ObjectiveSpec, decoder_output: &[f64], target: Target<'_>) -> Result<f64> {
    match (spec.representation, target) {
        (Representation::OneHot, Target::OneHot(i)) => recon_one_hot(decoder_output, i),
        (Representation::Binary, Target::Bits(b)) => recon_binary(decoder_output, b),
        _ => Err(Error::InvalidParameter("target does not match the objective's representation".into())),
    }
}

/// Gradient of the reconstruction loss with respect to the decoder's final
/// pre-activation: `ŷ − y` for both softmax/CE and sigmoid/BCE.
pub fn recon_logit_gradient(spec: &ObjectiveSpec, decoder_output: &[f64], target: Target<'_>) -> Result<Vec<f64>> {
    match (spec.representation, target) {
        (Representation::OneHot, Target::OneHot(i)) => {
            if i >= decoder_output.len() {
                return Err(Error::Dimension {
                    context: "one-hot target index",
                    expected: decoder_output.len(),
                    actual: i,
                });
            }
            let mut g = decoder_output.to_vec();
            g[i] -= 1.0;
            Ok(g)
        }
        (Representation::Binary, Target::Bits(b)) => {
            dim("binary target", decoder_output.len(), b.len())?;
            Ok(decoder_output.iter().zip(b).map(|(&p, &x)| p - f64::from(x)).collect())
        }
        _ => Err(Error::InvalidParameter("target does not match the objective's representation".into())),
    }
}

/// Reconstruction loss plus KL divergence for one transmitted message.
///
/// `kl` is the full divergence, constants included. The constants do not
/// depend on any network parameter, so gradients are those of the
/// constant-free objectives.
pub fn total_loss(spec: &ObjectiveSpec, decoder_output: &[f64], target: Target<'_>, z: &[f64]) -> Result<LossBreakdown> {
    let recon = recon_loss(spec, decoder_output, target)?;
    let kl = spec.kl_value(z)?;
    Ok(LossBreakdown::new(recon, kl))
}
