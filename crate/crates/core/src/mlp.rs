//! Three-layer sigmoid perceptron trained by online backpropagation with
//! momentum.
//!
//! The network minimizes the per-sample squared error against a one-hot
//! target. The optimized objective is `E = 1/2 * sum (t - o)^2`; reported
//! losses are the plain sums of squared errors.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"TSG1";

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub validation_accuracy: Option<f64>,
}

impl Default for TrainMeta {
    fn default() -> Self {
        Self {
            learning_rate: 0.0,
            momentum: 0.0,
            epochs: 0,
            seed: 0,
            validation_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.8,
            momentum: 0.7,
            epochs: 100,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Format(format!(
                "learning rate {} must be > 0 and momentum {} in [0, 1)",
                self.learning_rate, self.momentum
            )));
        }
        Ok(())
    }
}

/// Weights are row-major with one row per destination neuron:
/// `weights_ih` is `n_hidden x n_in`, `weights_ho` is `n_out x n_hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub weights_ih: Vec<f64>,
    pub bias_h: Vec<f64>,
    pub weights_ho: Vec<f64>,
    pub bias_o: Vec<f64>,
    pub train_meta: TrainMeta,
}

/// Gradient of the objective with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights_ih: Vec<f64>,
    pub bias_h: Vec<f64>,
    pub weights_ho: Vec<f64>,
    pub bias_o: Vec<f64>,
}

impl Gradients {
    fn zeros(m: &MlpModel) -> Self {
        Self {
            weights_ih: vec![0.0; m.weights_ih.len()],
            bias_h: vec![0.0; m.n_hidden],
            weights_ho: vec![0.0; m.weights_ho.len()],
            bias_o: vec![0.0; m.n_out],
        }
    }

    fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights_ih
            .iter()
            .chain(&self.bias_h)
            .chain(&self.weights_ho)
            .chain(&self.bias_o)
            .copied()
    }
}

impl MlpModel {
    /// Uniform `[-0.5, 0.5]` weights from a seeded ChaCha8 stream, zero biases.
    pub fn init(n_in: usize, n_hidden: usize, n_out: usize, seed: u64) -> Result<Self> {
        if n_in == 0 || n_hidden == 0 || n_out == 0 {
            return Err(Error::BadShape(n_in, n_hidden, n_out));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.5..=0.5)).collect() };
        let weights_ih = draw(n_hidden * n_in);
        let weights_ho = draw(n_out * n_hidden);
        Ok(Self {
            n_in,
            n_hidden,
            n_out,
            weights_ih,
            bias_h: vec![0.0; n_hidden],
            weights_ho,
            bias_o: vec![0.0; n_out],
            train_meta: TrainMeta {
                seed,
                ..TrainMeta::default()
            },
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.weights_ih.len() + self.bias_h.len() + self.weights_ho.len() + self.bias_o.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_in {
            return Err(Error::ShapeMismatch {
                expected: self.n_in,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        self.weights_ih
            .chunks_exact(self.n_in)
            .zip(&self.bias_h)
            .map(|(row, b)| sigmoid(dot(row, x) + b))
            .collect()
    }

    fn output_activations(&self, hidden: &[f64]) -> Vec<f64> {
        self.weights_ho
            .chunks_exact(self.n_hidden)
            .zip(&self.bias_o)
            .map(|(row, b)| sigmoid(dot(row, hidden) + b))
            .collect()
    }

    /// Class scores in `(0, 1)`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.output_activations(&self.hidden_activations(x)))
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.n_out {
            return Err(Error::LabelOutOfRange {
                label,
                n_out: self.n_out,
            });
        }
        Ok(())
    }

    /// Sum of squared errors against the one-hot target for `label`.
    pub fn sample_loss(&self, x: &[f64], label: usize) -> Result<f64> {
        self.check_label(label)?;
        let out = self.forward(x)?;
        Ok(squared_error(&out, label))
    }

    /// Backpropagated gradient of `1/2 * sum (t - o)^2` for one sample.
    pub fn backprop(&self, x: &[f64], label: usize) -> Result<Gradients> {
        self.check_input(x)?;
        self.check_label(label)?;
        let mut g = Gradients::zeros(self);
        self.backprop_into(x, one_hot(label), &mut g);
        Ok(g)
    }

    /// Returns the sample's sum of squared errors. `target(k)` is the
    /// desired value of output `k`.
    fn backprop_into(&self, x: &[f64], target: impl Fn(usize) -> f64, g: &mut Gradients) -> f64 {
        let hidden = self.hidden_activations(x);
        let out = self.output_activations(&hidden);

        let delta_o: Vec<f64> = out
            .iter()
            .enumerate()
            .map(|(k, &o)| (o - target(k)) * o * (1.0 - o))
            .collect();

        let mut back = vec![0.0; self.n_hidden];
        for (k, &d) in delta_o.iter().enumerate() {
            let row = &self.weights_ho[k * self.n_hidden..(k + 1) * self.n_hidden];
            let grow = &mut g.weights_ho[k * self.n_hidden..(k + 1) * self.n_hidden];
            for j in 0..self.n_hidden {
                back[j] += d * row[j];
                grow[j] = d * hidden[j];
            }
            g.bias_o[k] = d;
        }
        for j in 0..self.n_hidden {
            let d = back[j] * hidden[j] * (1.0 - hidden[j]);
            let grow = &mut g.weights_ih[j * self.n_in..(j + 1) * self.n_in];
            for (gw, &xi) in grow.iter_mut().zip(x) {
                *gw = d * xi;
            }
            g.bias_h[j] = d;
        }
        out.iter()
            .enumerate()
            .map(|(k, &o)| (target(k) - o).powi(2))
            .sum()
    }

    /// Online training with momentum: `dw(t) = -lr * dE/dw + momentum * dw(t-1)`.
    /// Returns the summed squared error of each epoch.
    pub fn train(&mut self, data: &[(Vec<f64>, usize)], cfg: &TrainConfig) -> Result<Vec<f64>> {
        for (x, label) in data {
            self.check_input(x)?;
            self.check_label(*label)?;
        }
        self.fit(data.len(), |i| (&data[i].0, one_hot(data[i].1)), cfg)
    }

    /// Like [`MlpModel::train`] with explicit real-valued target vectors.
    pub fn train_targets(
        &mut self,
        data: &[(Vec<f64>, Vec<f64>)],
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>> {
        for (x, t) in data {
            self.check_input(x)?;
            if t.len() != self.n_out {
                return Err(Error::ShapeMismatch {
                    expected: self.n_out,
                    actual: t.len(),
                });
            }
        }
        self.fit(
            data.len(),
            |i| (&data[i].0, move |k: usize| data[i].1[k]),
            cfg,
        )
    }

    fn fit<'a, T: Fn(usize) -> f64>(
        &mut self,
        n: usize,
        sample: impl Fn(usize) -> (&'a Vec<f64>, T),
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut grad = Gradients::zeros(self);
        let mut velocity = Gradients::zeros(self);
        let mut history = Vec::with_capacity(cfg.epochs);

        for _ in 0..cfg.epochs {
            if cfg.shuffle {
                order.shuffle(&mut rng);
            }
            let mut epoch_loss = 0.0;
            for &i in &order {
                let (x, target) = sample(i);
                epoch_loss += self.backprop_into(x, target, &mut grad);
                step(
                    &mut self.weights_ih,
                    &mut velocity.weights_ih,
                    &grad.weights_ih,
                    cfg,
                );
                step(&mut self.bias_h, &mut velocity.bias_h, &grad.bias_h, cfg);
                step(
                    &mut self.weights_ho,
                    &mut velocity.weights_ho,
                    &grad.weights_ho,
                    cfg,
                );
                step(&mut self.bias_o, &mut velocity.bias_o, &grad.bias_o, cfg);
            }
            history.push(epoch_loss);
        }

        if cfg.epochs > 0 {
            self.train_meta = TrainMeta {
                learning_rate: cfg.learning_rate,
                momentum: cfg.momentum,
                epochs: self.train_meta.epochs + cfg.epochs,
                seed: cfg.seed,
                validation_accuracy: None,
            };
        }
        Ok(history)
    }

    /// Index of the largest output (first on ties).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Serializes into the `TSG1` layout: magic, `n_in n_hidden n_out` as
    /// u32 LE, the parameter blocks as f64 LE in the order weights_ih,
    /// bias_h, weights_ho, bias_o, then a u32-length-prefixed JSON blob
    /// with the training metadata.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.parameter_count());
        out.extend_from_slice(MAGIC);
        for dim in [self.n_in, self.n_hidden, self.n_out] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in self
            .weights_ih
            .iter()
            .chain(&self.bias_h)
            .chain(&self.weights_ho)
            .chain(&self.bias_o)
        {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let meta = serde_json::to_vec(&self.train_meta).expect("metadata serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        Self::read_from(&mut r)
    }

    /// Reads one model from the front of `r`, leaving trailing bytes unread.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic[..3] != b"TSG" {
            return Err(Error::BadMagic);
        }
        if magic[3] != MAGIC[3] {
            return Err(Error::VersionMismatch(magic[3]));
        }
        let n_in = read_u32(r)? as usize;
        let n_hidden = read_u32(r)? as usize;
        let n_out = read_u32(r)? as usize;
        if n_in == 0 || n_hidden == 0 || n_out == 0 {
            return Err(Error::BadShape(n_in, n_hidden, n_out));
        }
        let weights_ih = read_f64s(r, n_hidden * n_in)?;
        let bias_h = read_f64s(r, n_hidden)?;
        let weights_ho = read_f64s(r, n_out * n_hidden)?;
        let bias_o = read_f64s(r, n_out)?;
        let meta_len = read_u32(r)? as usize;
        let mut meta = vec![0u8; meta_len];
        read_exact(r, &mut meta)?;
        let train_meta = serde_json::from_slice(&meta)?;
        let model = Self {
            n_in,
            n_hidden,
            n_out,
            weights_ih,
            bias_h,
            weights_ho,
            bias_o,
            train_meta,
        };
        if !model.is_finite() {
            return Err(Error::Format("non-finite weight in model file".into()));
        }
        Ok(model)
    }

    pub fn is_finite(&self) -> bool {
        self.weights_ih
            .iter()
            .chain(&self.bias_h)
            .chain(&self.weights_ho)
            .chain(&self.bias_o)
            .all(|v| v.is_finite())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| e.in_file(path))
    }

    /// Parameter `i` in the flattened order weights_ih, bias_h, weights_ho, bias_o.
    fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for block in [
            &mut self.weights_ih,
            &mut self.bias_h,
            &mut self.weights_ho,
            &mut self.bias_o,
        ] {
            if i < block.len() {
                return &mut block[i];
            }
            i -= block.len();
        }
        panic!("parameter index out of range")
    }
}

fn step(weights: &mut [f64], velocity: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
    for ((w, v), g) in weights.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = -cfg.learning_rate * g + cfg.momentum * *v;
        *w += *v;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn one_hot(label: usize) -> impl Fn(usize) -> f64 {
    move |k| if k == label { 1.0 } else { 0.0 }
}

fn squared_error(out: &[f64], label: usize) -> f64 {
    out.iter()
        .enumerate()
        .map(|(k, &o)| {
            let t = if k == label { 1.0 } else { 0.0 };
            (t - o) * (t - o)
        })
        .sum()
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Largest relative disagreement between the backpropagated gradient and
/// central differences `(E(w+h) - E(w-h)) / 2h` over every weight and bias,
/// with `E = 1/2 * sum (t - o)^2`. Each term is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// Subtracting the two losses directly loses most significant digits once
/// saturated units make a gradient tiny, so the numerator is evaluated by
/// carrying the exact forward-pass differences through the network instead.
pub fn gradient_check(m: &MlpModel, x: &[f64], label: usize, h: f64) -> Result<f64> {
    let analytic: Vec<f64> = m.backprop(x, label)?.flat().collect();
    let mut probe = m.clone();
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(i);
        let dw = (orig + h) - (orig - h);
        *probe.param_mut(i) = orig - h;
        let numeric = probe.loss_difference(x, label, i, dw) / (2.0 * h);
        *probe.param_mut(i) = orig;
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// `sigmoid(lo + d) - sigmoid(lo)` without cancellation.
fn sigmoid_step(lo: f64, d: f64) -> f64 {
    sigmoid(lo + d) * sigmoid(-lo) * -(-d).exp_m1()
}

impl MlpModel {
    /// `E(self with parameter i raised by dw) - E(self)`, halved squared
    /// error, evaluated through per-layer differences.
    fn loss_difference(&self, x: &[f64], label: usize, i: usize, dw: f64) -> f64 {
        let (n_ih, n_bh, n_ho) = (self.weights_ih.len(), self.n_hidden, self.weights_ho.len());
        let z: Vec<f64> = self
            .weights_ih
            .chunks_exact(self.n_in)
            .zip(&self.bias_h)
            .map(|(row, b)| dot(row, x) + b)
            .collect();
        let hidden: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let a: Vec<f64> = self
            .weights_ho
            .chunks_exact(self.n_hidden)
            .zip(&self.bias_o)
            .map(|(row, b)| dot(row, &hidden) + b)
            .collect();

        let mut da = vec![0.0; self.n_out];
        if i < n_ih + n_bh {
            let (j, dz) = if i < n_ih {
                (i / self.n_in, dw * x[i % self.n_in])
            } else {
                (i - n_ih, dw)
            };
            let dh = sigmoid_step(z[j], dz);
            for (k, d) in da.iter_mut().enumerate() {
                *d = self.weights_ho[k * self.n_hidden + j] * dh;
            }
        } else if i < n_ih + n_bh + n_ho {
            let r = i - n_ih - n_bh;
            da[r / self.n_hidden] = dw * hidden[r % self.n_hidden];
        } else {
            da[i - n_ih - n_bh - n_ho] = dw;
        }

        let mut diff = 0.0;
        for k in 0..self.n_out {
            let t = if k == label { 1.0 } else { 0.0 };
            let lo = sigmoid(a[k]);
            let step = sigmoid_step(a[k], da[k]);
            // (t - o+)^2 - (t - o-)^2 = -(o+ - o-)(2t - o+ - o-)
            diff -= step * (2.0 * t - 2.0 * lo - step);
        }
        0.5 * diff
    }
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::TruncatedFile,
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n.checked_mul(8).ok_or(Error::TruncatedFile)?];
    read_exact(r, &mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| rand::Rng::gen_range(&mut rng, 0.0..1.0))
            .collect()
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = MlpModel::init(24, 30, 49, 7).unwrap();
        let b = MlpModel::init(24, 30, 49, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.weights_ih.len(), 30 * 24);
        assert_eq!(a.weights_ho.len(), 49 * 30);
        assert!(a.bias_h.iter().chain(&a.bias_o).all(|&v| v == 0.0));
        assert!(a.weights_ih.iter().all(|w| (-0.5..=0.5).contains(w)));
        assert_ne!(a, MlpModel::init(24, 30, 49, 8).unwrap());
        assert!(matches!(
            MlpModel::init(0, 3, 3, 1),
            Err(Error::BadShape(0, 3, 3))
        ));
    }

    #[test]
    fn init_weights_are_centred() {
        // 1000 x 1000 weights = 10^6 draws
        let m = MlpModel::init(1000, 1000, 1, 3).unwrap();
        let mean = m.weights_ih.iter().sum::<f64>() / m.weights_ih.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let mut m = MlpModel::init(5, 4, 3, 0).unwrap();
        m.weights_ih.fill(0.0);
        m.weights_ho.fill(0.0);
        assert_eq!(
            m.forward(&[0.3, -1.0, 2.0, 0.0, 9.0]).unwrap(),
            vec![0.5; 3]
        );
    }

    #[test]
    fn tiny_network_composes_sigmoids() {
        let m = MlpModel {
            n_in: 1,
            n_hidden: 1,
            n_out: 1,
            weights_ih: vec![1.0],
            bias_h: vec![0.0],
            weights_ho: vec![1.0],
            bias_o: vec![0.0],
            train_meta: TrainMeta::default(),
        };
        let out = m.forward(&[0.0]).unwrap()[0];
        // sigma(0.5) = 1 / (1 + e^-0.5)
        assert!((out - 0.622_459_331_201_854_6).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        let m = MlpModel::init(3, 2, 2, 0).unwrap();
        assert!(matches!(
            m.forward(&[1.0]),
            Err(Error::ShapeMismatch {
                expected: 3,
                actual: 1
            })
        ));
    }

    #[test]
    fn outputs_stay_in_open_unit_interval() {
        let m = MlpModel::init(24, 30, 49, 11).unwrap();
        let out = m.forward(&random_input(24, 5)).unwrap();
        assert!(out.iter().all(|&o| o > 0.0 && o < 1.0));
    }

    fn xor() -> Vec<(Vec<f64>, usize)> {
        vec![
            (vec![0.0, 0.0], 0),
            (vec![0.0, 1.0], 1),
            (vec![1.0, 0.0], 1),
            (vec![1.0, 1.0], 0),
        ]
    }

    #[test]
    fn zero_epochs_leave_the_model_alone() {
        let mut m = MlpModel::init(2, 4, 2, 1).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(m.train(&xor(), &cfg).unwrap().is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn history_has_one_entry_per_epoch_and_is_deterministic() {
        let cfg = TrainConfig {
            epochs: 17,
            seed: 4,
            ..TrainConfig::default()
        };
        let mut a = MlpModel::init(2, 4, 2, 1).unwrap();
        let mut b = a.clone();
        let ha = a.train(&xor(), &cfg).unwrap();
        let hb = b.train(&xor(), &cfg).unwrap();
        assert_eq!(ha.len(), 17);
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn training_rejects_bad_labels() {
        let mut m = MlpModel::init(2, 4, 2, 1).unwrap();
        let data = vec![(vec![0.0, 1.0], 2)];
        assert!(matches!(
            m.train(&data, &TrainConfig::default()),
            Err(Error::LabelOutOfRange { label: 2, n_out: 2 })
        ));
    }

    #[test]
    fn separable_toy_loss_decreases() {
        let data: Vec<(Vec<f64>, usize)> = (0..20)
            .map(|i| {
                let x = i as f64 / 19.0;
                (vec![x, 1.0 - x], usize::from(x > 0.5))
            })
            .collect();
        let mut m = MlpModel::init(2, 3, 2, 9).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            seed: 2,
            ..TrainConfig::default()
        };
        let h = m.train(&data, &cfg).unwrap();
        assert!(h[0] >= h[9], "{h:?}");
    }

    #[test]
    fn gradient_check_on_random_model() {
        let m = MlpModel::init(24, 30, 49, 21).unwrap();
        let x = random_input(24, 22);
        let err = gradient_check(&m, &x, 13, 1e-5).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn gradient_check_at_the_symmetric_point() {
        let mut m = MlpModel::init(6, 5, 4, 0).unwrap();
        m.weights_ih.fill(0.0);
        m.weights_ho.fill(0.0);
        let x = vec![0.0; 6];
        let g = m.backprop(&x, 2).unwrap();
        // o = 1/2 everywhere, so the output deltas are +-1/8 and the
        // output-layer weight gradients are delta * 1/2
        for k in 0..4 {
            let expected = if k == 2 { -0.125 } else { 0.125 };
            assert_eq!(g.bias_o[k], expected);
            assert!(g.weights_ho[k * 5..(k + 1) * 5]
                .iter()
                .all(|&w| w == expected * 0.5));
        }
        let err = gradient_check(&m, &x, 2, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn loss_difference_matches_direct_subtraction() {
        let m = MlpModel::init(5, 4, 3, 8).unwrap();
        let x = random_input(5, 9);
        let h = 1e-2;
        for i in 0..m.parameter_count() {
            let mut lo = m.clone();
            *lo.param_mut(i) -= h;
            let mut hi = m.clone();
            *hi.param_mut(i) += h;
            let direct = 0.5 * (hi.sample_loss(&x, 2).unwrap() - lo.sample_loss(&x, 2).unwrap());
            let dw = *hi.param_mut(i) - *lo.param_mut(i);
            let carried = lo.loss_difference(&x, 2, i, dw);
            // the direct difference carries about 1e-16 of absolute rounding
            assert!((direct - carried).abs() <= 1e-14, "{i}: {direct} {carried}");
        }
    }

    #[test]
    fn xor_with_a_single_output() {
        let data: Vec<(Vec<f64>, Vec<f64>)> = xor()
            .into_iter()
            .map(|(x, l)| (x, vec![l as f64]))
            .collect();
        let mut m = MlpModel::init(2, 4, 1, 0).unwrap();
        let cfg = TrainConfig {
            epochs: 10_000,
            ..TrainConfig::default()
        };
        let history = m.train_targets(&data, &cfg).unwrap();
        assert!(*history.last().unwrap() < 0.05);
        assert!(matches!(
            m.train_targets(&[(vec![0.0, 1.0], vec![1.0, 0.0])], &cfg),
            Err(Error::ShapeMismatch {
                expected: 1,
                actual: 2
            })
        ));
    }

    #[test]
    fn halving_the_step_keeps_the_check_tight() {
        let m = MlpModel::init(8, 6, 5, 31).unwrap();
        let x = random_input(8, 32);
        let coarse = gradient_check(&m, &x, 1, 1e-3).unwrap();
        let fine = gradient_check(&m, &x, 1, 5e-4).unwrap();
        assert!(fine <= coarse || fine < 1e-4, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn save_load_round_trip() {
        let mut m = MlpModel::init(7, 5, 3, 99).unwrap();
        m.bias_h[2] = -0.125;
        m.train_meta.validation_accuracy = Some(0.75);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsg");
        m.save(&path).unwrap();
        assert_eq!(MlpModel::load(&path).unwrap(), m);
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let m = MlpModel::init(3, 2, 2, 1).unwrap();
        let bytes = m.to_bytes();
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(MlpModel::from_bytes(&wrong), Err(Error::BadMagic)));
        let mut version = bytes.clone();
        version[3] = b'2';
        assert!(matches!(
            MlpModel::from_bytes(&version),
            Err(Error::VersionMismatch(b'2'))
        ));
        // cut inside weights_ih
        assert!(matches!(
            MlpModel::from_bytes(&bytes[..16 + 20]),
            Err(Error::TruncatedFile)
        ));
        assert!(matches!(
            MlpModel::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedFile)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn per_sample_loss_is_bounded_by_outputs(seed in any::<u64>(), label in 0usize..6) {
            let m = MlpModel::init(4, 3, 6, seed).unwrap();
            let x = random_input(4, seed ^ 1);
            let loss = m.sample_loss(&x, label).unwrap();
            prop_assert!((0.0..=6.0).contains(&loss));
        }

        #[test]
        fn model_bytes_round_trip(seed in any::<u64>(), n_in in 1usize..6, n_h in 1usize..6, n_out in 1usize..6) {
            let m = MlpModel::init(n_in, n_h, n_out, seed).unwrap();
            let back = MlpModel::from_bytes(&m.to_bytes()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
