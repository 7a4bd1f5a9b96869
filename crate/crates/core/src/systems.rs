//! End-to-end system assembly and training.
//!
//! The encoder maps a message to `z`, the channel corrupts it (fading blocks
//! are equalized with a pilot), the decoder scores the message. Each epoch
//! sends every message once with fresh channel randomness, averages the
//! gradients over all `M` messages and takes one Adam step per network.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channels::{ChannelSpec, TRAINING_PILOT};
use crate::error::{dim, Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, Gradients, Mlp};
use crate::objectives::{self, LossBreakdown, ObjectiveSpec, Representation, Target};

pub const CHECKPOINT_FORMAT: &str = "varcomm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const DEFAULT_NOISE_SAMPLES: usize = 256;

/// Number of label bits `⌈log₂ M⌉`.
pub fn bits_for(num_symbols: usize) -> usize {
    if num_symbols <= 1 {
        0
    } else {
        (usize::BITS - (num_symbols - 1).leading_zeros()) as usize
    }
}

/// Natural binary label of `index`, most significant bit first.
pub fn binary_label(index: usize, bits: usize) -> Vec<u8> {
    (0..bits).rev().map(|b| ((index >> b) & 1) as u8).collect()
}

/// Transmit points with their bit labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    points: Vec<Vec<f64>>,
    labels: Vec<Vec<u8>>,
}

impl Constellation {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<Vec<u8>>) -> Result<Self> {
        dim("constellation labels", points.len(), labels.len())?;
        if points.is_empty() {
            return Err(Error::InvalidParameter("constellation has no points".into()));
        }
        let m = points[0].len();
        let d = labels[0].len();
        for (i, (p, l)) in points.iter().zip(&labels).enumerate() {
            dim("constellation point dimension", m, p.len())?;
            dim("constellation label length", d, l.len())?;
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("constellation point {i}")));
            }
            if l.iter().any(|&b| b > 1) {
                return Err(Error::InvalidParameter(format!("label {i} is not binary")));
            }
        }
        let mut sorted = labels.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("constellation labels are not distinct".into()));
        }
        Ok(Self { points, labels })
    }

    /// Points labelled with the natural binary code of their index.
    pub fn with_natural_labels(points: Vec<Vec<f64>>) -> Result<Self> {
        let d = bits_for(points.len());
        let labels = (0..points.len()).map(|i| binary_label(i, d)).collect();
        Self::new(points, labels)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Real dimension `m`.
    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn label_bits(&self) -> usize {
        self.labels[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[Vec<u8>] {
        &self.labels
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn label(&self, i: usize) -> &[u8] {
        &self.labels[i]
    }

    /// `(1/(M m)) Σᵢ ‖zᵢ‖²`.
    pub fn avg_power_per_component(&self) -> f64 {
        let total: f64 = self.points.iter().flatten().map(|v| v * v).sum();
        total / (self.len() * self.dim()) as f64
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| p.iter().map(|v| v * alpha).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Everything needed to build and train one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Number of messages `M`.
    pub num_symbols: usize,
    /// Real channel dimension `m` (twice the complex channel uses).
    pub channel_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    /// Channel simulated during training.
    pub channel: ChannelSpec,
    /// Loss; its channel mirror supplies the noise parameters the KL assumes.
    pub objective: ObjectiveSpec,
    pub epochs: usize,
    /// Independent channel draws per message per epoch, averaged into one step.
    pub noise_samples: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl SystemConfig {
    /// Reference one-hot AWGN setup: hidden layers 64/32/16 and 16/32/64,
    /// σ0² = 1, σn² = 0.1, Adam(0.01, 0.99, 0.999), 3000 epochs.
    pub fn awgn_default(num_symbols: usize, channel_dim: usize, seed: u64) -> Self {
        let channel = ChannelSpec::Awgn { sigma_n2: 0.1 };
        Self {
            num_symbols,
            channel_dim,
            encoder_hidden: vec![64, 32, 16],
            decoder_hidden: vec![16, 32, 64],
            channel,
            objective: ObjectiveSpec {
                representation: Representation::OneHot,
                kl: objectives::KlFamily::Awgn,
                sigma0_2: 1.0,
                gamma_0: 5.0,
                channel,
            },
            epochs: 3000,
            noise_samples: DEFAULT_NOISE_SAMPLES,
            seed,
            adam: AdamConfig::default(),
        }
    }

    pub fn representation(&self) -> Representation {
        self.objective.representation
    }

    pub fn label_bits(&self) -> usize {
        bits_for(self.num_symbols)
    }

    /// Encoder input width: `M` (one-hot) or `⌈log₂ M⌉` (binary).
    pub fn input_width(&self) -> usize {
        match self.representation() {
            Representation::OneHot => self.num_symbols,
            Representation::Binary => self.label_bits(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_symbols < 2 {
            return Err(Error::InvalidParameter(format!("M must be at least 2, got {}", self.num_symbols)));
        }
        if self.channel_dim == 0 || self.channel_dim % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "m must be a positive even number, got {}",
                self.channel_dim
            )));
        }
        if self.noise_samples == 0 {
            return Err(Error::InvalidParameter("noise_samples must be positive".into()));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::InvalidParameter("hidden layer widths must be positive".into()));
        }
        self.channel.validate()?;
        ObjectiveSpec::new(
            self.objective.representation,
            self.objective.kl,
            self.objective.sigma0_2,
            self.objective.gamma_0,
            self.objective.channel,
        )?;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.adam;
        if !(lr >= 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("bad Adam settings {:?}", self.adam)));
        }
        Ok(())
    }

    /// Short content hash used to tag output files.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Encoder input for message `index`.
    pub fn input_for(&self, index: usize) -> Vec<f64> {
        match self.representation() {
            Representation::OneHot => {
                let mut x = vec![0.0; self.num_symbols];
                x[index] = 1.0;
                x
            }
            Representation::Binary => binary_label(index, self.label_bits())
                .into_iter()
                .map(f64::from)
                .collect(),
        }
    }

    fn encoder_layout(&self) -> (Vec<usize>, Vec<Activation>) {
        let mut sizes = vec![self.input_width()];
        sizes.extend(&self.encoder_hidden);
        sizes.push(self.channel_dim);
        let mut acts = vec![Activation::Relu; self.encoder_hidden.len()];
        acts.push(Activation::Linear);
        (sizes, acts)
    }

    fn decoder_layout(&self) -> (Vec<usize>, Vec<Activation>) {
        let mut sizes = vec![self.channel_dim];
        sizes.extend(&self.decoder_hidden);
        let head = match self.representation() {
            Representation::OneHot => {
                sizes.push(self.num_symbols);
                Activation::Softmax
            }
            Representation::Binary => {
                sizes.push(self.label_bits());
                Activation::Sigmoid
            }
        };
        let mut acts = vec![Activation::Relu; self.decoder_hidden.len()];
        acts.push(head);
        (sizes, acts)
    }
}

/// Applies the encoder to every message.
pub fn encode_all(encoder: &Mlp, config: &SystemConfig) -> Result<Constellation> {
    dim("encoder input", config.input_width(), encoder.input_dim())?;
    dim("encoder output", config.channel_dim, encoder.output_dim())?;
    let points = (0..config.num_symbols)
        .map(|i| encoder.predict(&config.input_for(i)))
        .collect::<Result<Vec<_>>>()?;
    let d = config.label_bits();
    let labels = (0..config.num_symbols).map(|i| binary_label(i, d)).collect();
    Constellation::new(points, labels)
}

/// Turns a decoder output into a message index.
pub fn decide(representation: Representation, output: &[f64]) -> usize {
    match representation {
        Representation::OneHot => {
            let mut best = 0;
            for (i, &p) in output.iter().enumerate() {
                if p > output[best] {
                    best = i;
                }
            }
            best
        }
        Representation::Binary => output.iter().fold(0, |acc, &p| (acc << 1) | usize::from(p > 0.5)),
    }
}

/// A system being trained: both networks and their optimizers.
#[derive(Debug, Clone)]
pub struct System {
    pub config: SystemConfig,
    pub encoder: Mlp,
    pub decoder: Mlp,
    encoder_opt: Adam,
    decoder_opt: Adam,
}

/// Builds the untrained system; initialization is a pure function of the seed.
pub fn build_system(config: &SystemConfig) -> Result<System> {
    config.validate()?;
    let (es, ea) = config.encoder_layout();
    let (ds, da) = config.decoder_layout();
    let encoder = Mlp::init(&es, &ea, crate::derive_seed(config.seed, &[1]))?;
    let decoder = Mlp::init(&ds, &da, crate::derive_seed(config.seed, &[2]))?;
    Ok(System {
        encoder_opt: Adam::new(&encoder, config.adam),
        decoder_opt: Adam::new(&decoder, config.adam),
        config: config.clone(),
        encoder,
        decoder,
    })
}

impl System {
    pub fn constellation(&self) -> Result<Constellation> {
        encode_all(&self.encoder, &self.config)
    }

    /// Mean loss and mean parameter gradients over one pass of all messages,
    /// each sent `noise_samples` times with independent channel draws.
    pub fn loss_and_gradients<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(LossBreakdown, Gradients, Gradients)> {
        let cfg = &self.config;
        let spec = &cfg.objective;
        let reps = cfg.noise_samples;
        let (num, d) = (cfg.num_symbols, cfg.label_bits());

        let mut encoded = Vec::with_capacity(num);
        for i in 0..num {
            encoded.push(self.encoder.forward(&cfg.input_for(i))?);
        }
        let mut received = Array2::zeros((num * reps, cfg.channel_dim));
        let mut transmissions = Vec::with_capacity(num * reps);
        for (i, (z, _)) in encoded.iter().enumerate() {
            for r in 0..reps {
                let tx = cfg.channel.transmit(z, TRAINING_PILOT, rng)?;
                received.row_mut(i * reps + r).assign(&ArrayView1::from(&tx.received));
                transmissions.push(tx);
            }
        }
        let (out, dec_cache) = self.decoder.forward_batch(received)?;

        let mut recon = 0.0;
        let mut grad_logits = Array2::zeros(out.raw_dim());
        for i in 0..num {
            let bits = binary_label(i, d);
            let target = match cfg.representation() {
                Representation::OneHot => Target::OneHot(i),
                Representation::Binary => Target::Bits(&bits),
            };
            for r in 0..reps {
                let row = i * reps + r;
                let o = out.row(row);
                let o = o.as_slice().expect("contiguous row");
                let l = objectives::recon_loss(spec, o, target)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "reconstruction loss for message {i}: z = {:?}, decoder output = {o:?}",
                        encoded[i].0
                    )));
                }
                recon += l;
                let g = objectives::recon_logit_gradient(spec, o, target)?;
                grad_logits.row_mut(row).assign(&ArrayView1::from(&g));
            }
        }
        let (mut dec_grads, grad_rx) = self.decoder.backward_batch_from_logits(&dec_cache, grad_logits)?;

        let mut enc_grads = Gradients::zeros_like(&self.encoder);
        let mut kl = 0.0;
        let inv_reps = 1.0 / reps as f64;
        for (i, (z, cache)) in encoded.iter().enumerate() {
            let k = spec.kl_value(z)?;
            if !k.is_finite() {
                return Err(Error::NonFinite(format!("KL term for message {i}: z = {z:?}")));
            }
            kl += k;
            let mut g_z = objectives::kl_gradient(spec, z)?;
            for r in 0..reps {
                let row = i * reps + r;
                let g_row = grad_rx.row(row);
                let back = transmissions[row].backprop(g_row.as_slice().expect("contiguous row"));
                for (g, b) in g_z.iter_mut().zip(back) {
                    *g += b * inv_reps;
                }
            }
            let (eg, _) = self.encoder.backward(cache, &g_z)?;
            enc_grads.accumulate(&eg);
        }

        enc_grads.scale(1.0 / num as f64);
        dec_grads.scale(1.0 / (num * reps) as f64);
        let loss = LossBreakdown::new(recon / (num * reps) as f64, kl / num as f64);
        Ok((loss, enc_grads, dec_grads))
    }

    /// One full-batch epoch: fresh channel draws, one Adam step per network.
    pub fn train_epoch<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<LossBreakdown> {
        let (loss, enc_grads, dec_grads) = self.loss_and_gradients(rng)?;
        self.decoder_opt.step(&mut self.decoder, &dec_grads)?;
        self.encoder_opt.step(&mut self.encoder, &enc_grads)?;
        Ok(loss)
    }

    pub fn into_trained(self, loss_history: Vec<LossBreakdown>) -> Result<TrainedSystem> {
        let constellation = self.constellation()?;
        Ok(TrainedSystem {
            encoder: self.encoder,
            decoder: self.decoder,
            config: self.config,
            loss_history,
            constellation,
        })
    }

    /// Snapshot of the current networks as a [`TrainedSystem`].
    pub fn snapshot(&self, loss_history: &[LossBreakdown]) -> Result<TrainedSystem> {
        self.clone().into_trained(loss_history.to_vec())
    }
}

/// Trains for `config.epochs` epochs.
pub fn train(config: &SystemConfig) -> Result<TrainedSystem> {
    train_with_observer(config, 0, |_, _, _| Ok(()))
}

/// Like [`train`], calling `observe(epoch, system, history)` after every
/// `every`-th epoch (and once before training, with epoch 0). `every = 0`
/// disables the callback.
pub fn train_with_observer<F>(config: &SystemConfig, every: usize, mut observe: F) -> Result<TrainedSystem>
where
    F: FnMut(usize, &System, &[LossBreakdown]) -> Result<()>,
{
    let mut system = build_system(config)?;
    let mut rng = crate::rng_from_seed(crate::derive_seed(config.seed, &[3]));
    let mut history = Vec::with_capacity(config.epochs);
    if every > 0 {
        observe(0, &system, &history)?;
    }
    for epoch in 1..=config.epochs {
        let loss = system.train_epoch(&mut rng).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}: {msg}")),
            other => other,
        })?;
        history.push(loss);
        if every > 0 && epoch % every == 0 {
            observe(epoch, &system, &history)?;
        }
    }
    system.into_trained(history)
}

/// A trained (or snapshotted) system.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSystem {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub config: SystemConfig,
    pub loss_history: Vec<LossBreakdown>,
    pub constellation: Constellation,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config_hash: String,
    config: SystemConfig,
    encoder: Mlp,
    decoder: Mlp,
    loss_history: Vec<LossBreakdown>,
}

impl TrainedSystem {
    /// Decoder output for a received block.
    pub fn decoder_output(&self, received: &[f64]) -> Result<Vec<f64>> {
        self.decoder.predict(received)
    }

    /// Decided message index for a received block.
    pub fn decode(&self, received: &[f64]) -> Result<usize> {
        Ok(decide(self.config.representation(), &self.decoder_output(received)?))
    }

    /// `log p_θ(x = index | received)` under the decoder's output model.
    pub fn log_likelihood(&self, received: &[f64], index: usize) -> Result<f64> {
        let out = self.decoder_output(received)?;
        let bits = binary_label(index, self.config.label_bits());
        let target = match self.config.representation() {
            Representation::OneHot => Target::OneHot(index),
            Representation::Binary => Target::Bits(&bits),
        };
        Ok(-objectives::recon_loss(&self.config.objective, &out, target)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config_hash: self.config.hash(),
            config: self.config.clone(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            loss_history: self.loss_history.clone(),
        };
        Ok(serde_json::to_string_pretty(&ck)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidParameter(format!("not a checkpoint (format `{}`)", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidParameter(format!("unsupported checkpoint version {}", ck.version)));
        }
        ck.config.validate()?;
        let constellation = encode_all(&ck.encoder, &ck.config)?;
        let (_, da) = ck.config.decoder_layout();
        dim("decoder input", ck.config.channel_dim, ck.decoder.input_dim())?;
        if ck.decoder.output_activation() != da[da.len() - 1] {
            return Err(Error::InvalidParameter("decoder head does not match representation".into()));
        }
        Ok(Self {
            encoder: ck.encoder,
            decoder: ck.decoder,
            config: ck.config,
            loss_history: ck.loss_history,
            constellation,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
