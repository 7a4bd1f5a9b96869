//! Monte Carlo BLER/BER, packing density, Gray statistics and MI bounds.
//!
//! SNR is `P / σn²` with `P` the measured average power per real component
//! of the constellation. Laplace noise with scale `b` has variance `2b²`;
//! Cauchy noise uses the geometric SNR `P / (2 C_g γ²)`.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::ml_detect;
use crate::channels::{pilot_with_power, ChannelFamily, ChannelSpec};
use crate::error::{Error, Result};
use crate::objectives::{KlFamily, ObjectiveSpec};
use crate::systems::{binary_label, Constellation, TrainedSystem};

/// `C_g = e^{γ_E}` ≈ 1.781, the geometric-power constant.
pub const CG: f64 = 1.781_072_417_990_197_8;

/// What is being evaluated: a learned encoder/decoder pair or a fixed
/// constellation with minimum-distance detection.
#[derive(Debug, Clone, Copy)]
pub enum Scheme<'a> {
    Learned(&'a TrainedSystem),
    Baseline(&'a Constellation),
}

impl Scheme<'_> {
    pub fn constellation(&self) -> &Constellation {
        match self {
            Scheme::Learned(t) => &t.constellation,
            Scheme::Baseline(c) => c,
        }
    }

    pub fn detect(&self, received: &[f64]) -> Result<usize> {
        match self {
            Scheme::Learned(t) => t.decode(received),
            Scheme::Baseline(c) => Ok(ml_detect(c, received)),
        }
    }
}

/// Channel for a target SNR (dB) given per-component signal power `power`.
/// `snr_db = +∞` yields the noiseless channel.
pub fn channel_for_snr(family: ChannelFamily, power: f64, snr_db: f64) -> Result<ChannelSpec> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::InvalidParameter(format!("signal power must be positive, got {power}")));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidParameter("SNR is NaN".into()));
    }
    let snr = 10f64.powf(snr_db / 10.0);
    let param = match family {
        ChannelFamily::Awgn | ChannelFamily::Rbf => power / snr,
        ChannelFamily::Laplace => (power / (2.0 * snr)).sqrt(),
        ChannelFamily::Cauchy => (power / (2.0 * CG * snr)).sqrt(),
    };
    ChannelSpec::from_family(family, param)
}

/// Monte Carlo stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once this many block errors are seen (0: never stop early).
    pub target_errors: u64,
    pub max_blocks: u64,
    /// Blocks per independently seeded work unit.
    pub chunk_blocks: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            target_errors: 500,
            max_blocks: 2_000_000,
            chunk_blocks: 2_000,
        }
    }
}

/// One point of a BLER curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlerPoint {
    pub snr_db: f64,
    pub blocks: u64,
    pub errors: u64,
    pub bler: f64,
    pub ber: f64,
    /// `√(p(1−p)/n)`.
    pub stderr: f64,
}

#[derive(Clone, Copy)]
struct Outcome {
    block_error: bool,
    bit_errors: u32,
}

fn hamming(a: &[u8], b: &[u8]) -> u32 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u32
}

fn simulate_chunk(scheme: &Scheme<'_>, channel: &ChannelSpec, blocks: u64, seed: u64) -> Result<Vec<Outcome>> {
    let c = scheme.constellation();
    let pilot = pilot_with_power(c.avg_power_per_component());
    let d = c.label_bits();
    let mut rng = crate::rng_from_seed(seed);
    let mut out = Vec::with_capacity(blocks as usize);
    for _ in 0..blocks {
        let i = rng.random_range(0..c.len());
        let outcome = match channel.transmit(c.point(i), pilot, &mut rng) {
            Ok(tx) => {
                let decided = scheme.detect(&tx.received)?;
                let bits = if decided < c.len() {
                    hamming(c.label(i), c.label(decided))
                } else {
                    hamming(c.label(i), &binary_label(decided, d))
                };
                Outcome {
                    block_error: decided != i,
                    bit_errors: bits,
                }
            }
            // an unusable pilot estimate is an erasure: every bit counted wrong
            Err(Error::DegenerateEstimate(_)) => Outcome {
                block_error: true,
                bit_errors: d as u32,
            },
            Err(e) => return Err(e),
        };
        out.push(outcome);
    }
    Ok(out)
}

/// Simulates blocks over a fixed channel until the stopping rule fires.
///
/// Work is split into chunks seeded by `derive_seed(seed, [chunk])` and
/// consumed in order, so the result does not depend on the thread count.
pub fn simulate(scheme: &Scheme<'_>, channel: &ChannelSpec, stop: StopRule, seed: u64) -> Result<(u64, u64, u64)> {
    if stop.max_blocks == 0 {
        return Err(Error::InvalidParameter("max_blocks must be positive".into()));
    }
    if stop.chunk_blocks == 0 {
        return Err(Error::InvalidParameter("chunk_blocks must be positive".into()));
    }
    channel.validate()?;
    let per_round = rayon::current_num_threads().max(1) as u64;
    let (mut blocks, mut errors, mut bit_errors) = (0u64, 0u64, 0u64);
    let mut next_chunk = 0u64;
    loop {
        let chunks: Vec<(u64, u64)> = (next_chunk..next_chunk + per_round)
            .map(|k| (k, stop.chunk_blocks.min(stop.max_blocks.saturating_sub(k * stop.chunk_blocks))))
            .filter(|&(_, n)| n > 0)
            .collect();
        if chunks.is_empty() {
            break;
        }
        next_chunk += per_round;
        let results = chunks
            .par_iter()
            .map(|&(k, n)| simulate_chunk(scheme, channel, n, crate::derive_seed(seed, &[k])))
            .collect::<Result<Vec<_>>>()?;
        for o in results.iter().flatten() {
            blocks += 1;
            errors += u64::from(o.block_error);
            bit_errors += u64::from(o.bit_errors);
            if (stop.target_errors > 0 && errors >= stop.target_errors) || blocks >= stop.max_blocks {
                return Ok((blocks, errors, bit_errors));
            }
        }
    }
    Ok((blocks, errors, bit_errors))
}

fn point(scheme: &Scheme<'_>, snr_db: f64, (blocks, errors, bit_errors): (u64, u64, u64)) -> BlerPoint {
    let p = errors as f64 / blocks as f64;
    let bits = scheme.constellation().label_bits().max(1) as f64;
    BlerPoint {
        snr_db,
        blocks,
        errors,
        bler: p,
        ber: bit_errors as f64 / (blocks as f64 * bits),
        stderr: (p * (1.0 - p) / blocks as f64).sqrt(),
    }
}

/// BLER/BER at one SNR, the channel scaled to the scheme's measured power.
/// Fading channels are equalized with a pilot of that same power.
pub fn bler(scheme: &Scheme<'_>, family: ChannelFamily, snr_db: f64, stop: StopRule, seed: u64) -> Result<BlerPoint> {
    let power = scheme.constellation().avg_power_per_component();
    let channel = channel_for_snr(family, power, snr_db)?;
    Ok(point(scheme, snr_db, simulate(scheme, &channel, stop, seed)?))
}

/// BLER/BER over an explicitly parameterized channel (`snr_db` is only recorded).
pub fn bler_with_channel(
    scheme: &Scheme<'_>,
    channel: &ChannelSpec,
    snr_db: f64,
    stop: StopRule,
    seed: u64,
) -> Result<BlerPoint> {
    Ok(point(scheme, snr_db, simulate(scheme, channel, stop, seed)?))
}

/// BLER curve; SNR point `k` uses seed `derive_seed(seed, [k])`.
pub fn bler_curve(
    scheme: &Scheme<'_>,
    family: ChannelFamily,
    snr_grid_db: &[f64],
    stop: StopRule,
    seed: u64,
) -> Result<Vec<BlerPoint>> {
    snr_grid_db
        .iter()
        .enumerate()
        .map(|(k, &s)| bler(scheme, family, s, stop, crate::derive_seed(seed, &[k as u64])))
        .collect()
}

/// Gaussian tail `Q(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Exact QPSK BLER over AWGN at `snr_db` (= `2·SNR_bit`): `1 − (1 − Q(√SNR))²`.
pub fn qpsk_bler_analytic(snr_db: f64) -> f64 {
    let snr = 10f64.powf(snr_db / 10.0);
    let q = q_function(snr.sqrt());
    1.0 - (1.0 - q) * (1.0 - q)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Normalized second moment `E_n = (1/M) Σ‖zᵢ‖² / d_min²`.
pub fn packing_density(c: &Constellation) -> Result<f64> {
    if c.len() < 2 {
        return Err(Error::InvalidParameter("packing density needs at least two points".into()));
    }
    let mut dmin2 = f64::INFINITY;
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            dmin2 = dmin2.min(sq_dist(c.point(i), c.point(j)));
        }
    }
    if dmin2 == 0.0 {
        return Err(Error::InvalidParameter("constellation has coincident points (d_min = 0)".into()));
    }
    let energy: f64 = c.points().iter().flatten().map(|v| v * v).sum();
    Ok(energy / (c.len() as f64 * dmin2))
}

/// Fraction of ordered (point, nearest neighbour) pairs whose labels differ
/// in exactly one bit. All equidistant nearest neighbours count; coincident
/// points are neighbours at distance zero and always count as failures.
pub fn gray_fraction(c: &Constellation) -> Result<f64> {
    if c.len() < 2 {
        return Err(Error::InvalidParameter("gray fraction needs at least two points".into()));
    }
    let (mut pairs, mut good) = (0usize, 0usize);
    for i in 0..c.len() {
        let d: Vec<f64> = (0..c.len())
            .map(|j| if j == i { f64::INFINITY } else { sq_dist(c.point(i), c.point(j)) })
            .collect();
        let nearest = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let tol = nearest * 1e-9;
        for (j, &dj) in d.iter().enumerate() {
            if j != i && dj <= nearest + tol {
                pairs += 1;
                if dj > 0.0 && hamming(c.label(i), c.label(j)) == 1 {
                    good += 1;
                }
            }
        }
    }
    Ok(good as f64 / pairs as f64)
}

/// Lower and upper mutual-information bounds (nats).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiBounds {
    pub lower: f64,
    pub upper: f64,
}

/// `lower = E[log p_θ(x|ẑ)] + log M` by Monte Carlo with `samples_per_symbol`
/// channel draws per message; `upper` is the mean closed-form KL to the
/// system's Gaussian prior under `channel`.
///
/// Under fading the decoder also sees the pilot, which carries the gain, so
/// the KL of the data block alone need not bound what the decoder extracts.
/// There the pilot is stacked onto the block as one more complex use through
/// the same fade (see [`with_pilot_use`]) before taking the KL.
pub fn mi_bounds(system: &TrainedSystem, channel: &ChannelSpec, samples_per_symbol: usize, seed: u64) -> Result<MiBounds> {
    let kl = match channel.family() {
        ChannelFamily::Awgn => KlFamily::Awgn,
        ChannelFamily::Rbf => KlFamily::Rbf,
        f => {
            return Err(Error::InvalidParameter(format!(
                "MI bounds need a Gaussian channel, got {f}"
            )))
        }
    };
    if samples_per_symbol == 0 {
        return Err(Error::InvalidParameter("samples_per_symbol must be positive".into()));
    }
    let spec = ObjectiveSpec::new(
        system.config.representation(),
        kl,
        system.config.objective.sigma0_2,
        system.config.objective.gamma_0,
        *channel,
    )?;
    let c = &system.constellation;
    let pilot = pilot_with_power(c.avg_power_per_component().max(f64::MIN_POSITIVE));
    let m = c.len();
    let per_symbol = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng_from_seed(crate::derive_seed(seed, &[i as u64]));
            let mut ll = 0.0;
            for _ in 0..samples_per_symbol {
                let tx = channel.transmit(c.point(i), pilot, &mut rng)?;
                ll += system.log_likelihood(&tx.received, i)?;
            }
            let kl = match channel.family() {
                ChannelFamily::Rbf => spec.kl_value(&with_pilot_use(c.point(i), pilot))?,
                _ => spec.kl_value(c.point(i))?,
            };
            Ok((ll / samples_per_symbol as f64, kl))
        })
        .collect::<Result<Vec<_>>>()?;
    let inv = 1.0 / m as f64;
    Ok(MiBounds {
        lower: per_symbol.iter().map(|p| p.0).sum::<f64>() * inv + (m as f64).ln(),
        upper: per_symbol.iter().map(|p| p.1).sum::<f64>() * inv,
    })
}

/// Appends `pilot` as an extra complex use of the stacked `[re…, im…]` block.
pub fn with_pilot_use(z: &[f64], pilot: Complex64) -> Vec<f64> {
    let k = z.len() / 2;
    let mut out = Vec::with_capacity(z.len() + 2);
    out.extend_from_slice(&z[..k]);
    out.push(pilot.re);
    out.extend_from_slice(&z[k..]);
    out.push(pilot.im);
    out
}

/// Everything `eval` reports about one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub channel: ChannelFamily,
    pub records: Vec<BlerPoint>,
    pub e_n: Option<f64>,
    pub hamming_nn_fraction: Option<f64>,
    pub mi_lower: Option<f64>,
    pub mi_upper: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
}

/// Writes a BLER curve as CSV with `# key=value` provenance lines.
pub fn write_bler_csv<W: Write>(records: &[BlerPoint], provenance: &[(&str, String)], out: W) -> Result<()> {
    let mut out = out;
    for (k, v) in provenance {
        writeln!(out, "# {k}={v}")?;
    }
    writeln!(out, "snr_db,blocks,errors,bler,ber,stderr")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.snr_db, r.blocks, r.errors, r.bler, r.ber, r.stderr
        )?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::qam_constellation;

    fn stop(max: u64) -> StopRule {
        StopRule {
            target_errors: 500,
            max_blocks: max,
            chunk_blocks: 100,
        }
    }

    #[test]
    fn pilot_use_is_stacked_per_half() {
        let z = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(with_pilot_use(&z, Complex64::new(5.0, 6.0)), vec![1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
    }

    #[test]
    fn qpsk_density_is_half() {
        assert_eq!(packing_density(&qam_constellation(2, 1).unwrap()).unwrap(), 0.5);
    }

    #[test]
    fn antipodal_density() {
        let c = Constellation::with_natural_labels(vec![vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(packing_density(&c).unwrap(), 0.25);
    }

    #[test]
    fn duplicate_points_rejected() {
        let c = Constellation::with_natural_labels(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(packing_density(&c).is_err());
        assert_eq!(gray_fraction(&c).unwrap(), 0.0);
    }

    #[test]
    fn gray_16qam() {
        assert_eq!(gray_fraction(&qam_constellation(4, 1).unwrap()).unwrap(), 1.0);
    }

    #[test]
    fn noiseless_has_no_errors() {
        let c = qam_constellation(2, 1).unwrap();
        for fam in [ChannelFamily::Awgn, ChannelFamily::Rbf, ChannelFamily::Laplace, ChannelFamily::Cauchy] {
            let p = bler(&Scheme::Baseline(&c), fam, f64::INFINITY, stop(1000), 1).unwrap();
            assert_eq!((p.blocks, p.errors, p.bler), (1000, 0, 0.0), "{fam}");
        }
    }

    #[test]
    fn zero_max_blocks_is_an_error() {
        let c = qam_constellation(2, 1).unwrap();
        assert!(bler(&Scheme::Baseline(&c), ChannelFamily::Awgn, 0.0, stop(0), 1).is_err());
    }

    #[test]
    fn stops_exactly_at_target() {
        let c = qam_constellation(2, 1).unwrap();
        let p = bler(&Scheme::Baseline(&c), ChannelFamily::Awgn, 0.0, stop(1_000_000), 3).unwrap();
        assert_eq!(p.errors, 500);
        assert!(p.blocks < 1_000_000);
    }

    #[test]
    fn independent_of_thread_count() {
        let c = qam_constellation(2, 1).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| bler(&Scheme::Baseline(&c), ChannelFamily::Awgn, 2.0, stop(50_000), 11).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn snr_mapping() {
        let ch = channel_for_snr(ChannelFamily::Awgn, 0.5, 10.0).unwrap();
        assert!((ch.parameter() - 0.05).abs() < 1e-15);
        let ch = channel_for_snr(ChannelFamily::Laplace, 1.0, 0.0).unwrap();
        assert!((ch.parameter() - 0.5f64.sqrt()).abs() < 1e-15);
        let ch = channel_for_snr(ChannelFamily::Cauchy, 2.0 * CG, 0.0).unwrap();
        assert!((ch.parameter() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cg_is_exp_euler_gamma() {
        assert!((CG - 0.577_215_664_901_532_9f64.exp()).abs() < 1e-15);
    }

    #[test]
    fn qpsk_analytic_at_6db() {
        let p = qpsk_bler_analytic(6.0);
        assert!((p - 0.0455).abs() < 5e-4, "{p}");
    }

    #[test]
    fn bler_csv_layout() {
        let rec = BlerPoint {
            snr_db: 4.0,
            blocks: 10,
            errors: 1,
            bler: 0.1,
            ber: 0.05,
            stderr: 0.09486832980505137,
        };
        let mut buf = Vec::new();
        write_bler_csv(&[rec], &[("seed", "1".into())], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# seed=1\nsnr_db,blocks,errors,bler,ber,stderr\n4,10,1,0.1,0.05,0.09486832980505137\n"
        );
    }
}
