//! End-to-end training, prediction and cross-validated evaluation.

mod bundle;
mod dataset;
mod evaluate;
pub mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bundle::{ModelBundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use dataset::{load_dataset, Dataset, Sample};
pub use evaluate::{evaluate, EvalReport, FoldReport, StageCounts};

use crate::corners::{glyph_corners, CornerConfig, CornerString};
use crate::editdist::{classify_confused, Candidate, TemplateStore};
use crate::ensemble::{
    combine, fusion_weights, gate, relative_difference, Decision, RelDiffStrategy, VotingConfig,
};
use crate::features::{chain_features, shadow_features, CHAIN_LEN, SHADOW_LEN};
use crate::mlp::{argmax, MlpModel, TrainConfig};
use crate::preprocess::{normalize, GrayImage, DEFAULT_SIDE};
use crate::{Error, Result};

/// Gate thresholds tried on the validation split.
pub const THETA_GRID: [f64; 5] = [0.02, 0.05, 0.10, 0.15, 0.20];

/// Smallest per-class sample count `train_bundle` accepts.
pub const MIN_CLASS_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ThetaChoice {
    /// Pick the best-scoring value on the validation split.
    Grid(Vec<f64>),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub side: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub hidden_shadow: usize,
    pub hidden_chain: usize,
    pub train_fraction: f64,
    pub theta: ThetaChoice,
    pub rejection_floor: f64,
    pub k_of_d: f64,
    pub strategy: RelDiffStrategy,
    pub corner: CornerConfig,
    pub folds: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            side: DEFAULT_SIDE,
            epochs: 60,
            learning_rate: 0.8,
            momentum: 0.7,
            hidden_shadow: 30,
            hidden_chain: 70,
            train_fraction: 0.65,
            theta: ThetaChoice::Grid(THETA_GRID.to_vec()),
            rejection_floor: 0.05,
            k_of_d: 0.0,
            strategy: RelDiffStrategy::TopTwo,
            corner: CornerConfig::default(),
            folds: 3,
        }
    }
}

/// Per-sample features used by both stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub shadow: Vec<f64>,
    pub chain: Vec<f64>,
    pub corners: CornerString,
}

pub fn prepare(img: &GrayImage, side: usize, corner: &CornerConfig) -> Result<Prepared> {
    let glyph = normalize(img, side)?;
    let shadow = shadow_features(&glyph).values;
    let chain = chain_features(&glyph).values;
    let corners = glyph_corners(&glyph, corner)?.string;
    debug_assert_eq!((shadow.len(), chain.len()), (SHADOW_LEN, CHAIN_LEN));
    Ok(Prepared {
        shadow,
        chain,
        corners,
    })
}

/// Prepares every sample in parallel; failures are reported per sample.
pub fn prepare_all(ds: &Dataset, side: usize, corner: &CornerConfig) -> Vec<Result<Prepared>> {
    ds.samples
        .par_iter()
        .map(|s| {
            prepare(&s.image, side, corner).map_err(|e| match &s.source {
                Some(p) => e.in_file(p),
                None => e,
            })
        })
        .collect()
}

/// Stratified seeded split of sample positions into (train, validation).
/// Each class contributes `round(fraction * n)` training samples, clamped
/// so both sides keep at least one.
pub fn stratified_split(
    labels: &[usize],
    n_classes: usize,
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let k =
            ((fraction * n as f64).round() as usize).clamp(1.min(n), n.saturating_sub(1).max(1));
        train.extend_from_slice(&idx[..k]);
        valid.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    (train, valid)
}

/// Stratified fold index for every sample: each class is shuffled and dealt
/// round-robin.
pub fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    assignment
}

fn accuracy(model: &MlpModel, data: &[(Vec<f64>, usize)]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits = data
        .iter()
        .filter(|(x, y)| model.predict(x).is_ok_and(|p| p == *y))
        .count();
    hits as f64 / data.len() as f64
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Diagnostics gathered while training a bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_size: usize,
    pub validation_size: usize,
    /// Validation accuracy of the (shadow, chain) networks.
    pub validation_accuracies: [f64; 2],
    /// Two-stage validation accuracy for each candidate threshold.
    pub theta_scores: Vec<(f64, f64)>,
    pub skipped: usize,
}

/// Trains a bundle from already-prepared samples. `labels[i]` is the class
/// of `samples[i]`.
pub fn train_prepared(
    label_names: &[String],
    samples: &[&Prepared],
    labels: &[usize],
    cfg: &PipelineConfig,
) -> Result<(ModelBundle, TrainSummary)> {
    let n_classes = label_names.len();
    if samples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut counts = vec![0; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some((c, &count)) = counts.iter().enumerate().find(|(_, &n)| n < MIN_CLASS_SIZE) {
        return Err(Error::ClassTooSmall {
            label: label_names[c].clone(),
            count,
            min: MIN_CLASS_SIZE,
        });
    }

    let (train_idx, valid_idx) = stratified_split(
        labels,
        n_classes,
        cfg.train_fraction,
        derive_seed(cfg.seed, 1),
    );
    let pick = |idx: &[usize], f: fn(&Prepared) -> &Vec<f64>| -> Vec<(Vec<f64>, usize)> {
        idx.iter()
            .map(|&i| (f(samples[i]).clone(), labels[i]))
            .collect()
    };
    let shadow_train = pick(&train_idx, |p| &p.shadow);
    let chain_train = pick(&train_idx, |p| &p.chain);
    let shadow_valid = pick(&valid_idx, |p| &p.shadow);
    let chain_valid = pick(&valid_idx, |p| &p.chain);

    let train_one = |n_in: usize,
                     n_hidden: usize,
                     stream: u64,
                     data: &[(Vec<f64>, usize)]|
     -> Result<MlpModel> {
        let mut m = MlpModel::init(n_in, n_hidden, n_classes, derive_seed(cfg.seed, stream))?;
        let tc = TrainConfig {
            learning_rate: cfg.learning_rate,
            momentum: cfg.momentum,
            epochs: cfg.epochs,
            seed: derive_seed(cfg.seed, stream + 1),
            shuffle: true,
        };
        m.train(data, &tc)?;
        Ok(m)
    };
    let (shadow, chain) = rayon::join(
        || train_one(SHADOW_LEN, cfg.hidden_shadow, 10, &shadow_train),
        || train_one(CHAIN_LEN, cfg.hidden_chain, 20, &chain_train),
    );
    let (mut shadow, mut chain) = (shadow?, chain?);

    let p_shadow = accuracy(&shadow, &shadow_valid);
    let p_chain = accuracy(&chain, &chain_valid);
    shadow.train_meta.validation_accuracy = Some(p_shadow);
    chain.train_meta.validation_accuracy = Some(p_chain);
    // a network that never hits still gets a vanishing vote rather than an error
    let weights = fusion_weights(&[p_shadow.max(1e-6), p_chain.max(1e-6)])?;

    let mut templates = TemplateStore::new();
    for &i in &train_idx {
        templates.push(label_names[labels[i]].clone(), samples[i].corners);
    }

    let mut bundle = ModelBundle {
        labels: label_names.to_vec(),
        side: cfg.side,
        shadow,
        chain,
        voting: VotingConfig {
            weights,
            k_of_d: cfg.k_of_d,
            theta: 0.0,
            rejection_floor: cfg.rejection_floor,
            strategy: cfg.strategy,
        },
        corner: cfg.corner.clone(),
        templates,
    };

    let mut theta_scores = Vec::new();
    bundle.voting.theta = match &cfg.theta {
        ThetaChoice::Fixed(t) => *t,
        ThetaChoice::Grid(grid) => {
            // stage-two answers do not depend on theta; compute them once
            let outcomes: Vec<(Vec<f64>, usize, usize)> = valid_idx
                .iter()
                .map(|&i| {
                    let combined = bundle.combined_scores(samples[i])?;
                    let resolved =
                        bundle.resolve(samples[i], &crate::ensemble::top_k(&combined, 3))?;
                    Ok((combined, resolved, labels[i]))
                })
                .collect::<Result<_>>()?;
            for &t in grid {
                let voting = VotingConfig {
                    theta: t,
                    ..bundle.voting.clone()
                };
                let hits = outcomes
                    .iter()
                    .filter(|(combined, resolved, truth)| {
                        let label = match gate(combined, &voting) {
                            Decision::Certain(l) => l,
                            _ => *resolved,
                        };
                        label == *truth
                    })
                    .count();
                theta_scores.push((t, hits as f64 / outcomes.len().max(1) as f64));
            }
            pick_theta(&theta_scores).unwrap_or(VotingConfig::default().theta)
        }
    };

    let summary = TrainSummary {
        train_size: train_idx.len(),
        validation_size: valid_idx.len(),
        validation_accuracies: [p_shadow, p_chain],
        theta_scores,
        skipped: 0,
    };
    Ok((bundle, summary))
}

/// Best accuracy; ties go to the value closest to the default 0.10, then
/// the smaller value.
fn pick_theta(scores: &[(f64, f64)]) -> Option<f64> {
    let default = VotingConfig::default().theta;
    let gap = |t: f64| ((t - default).abs() * 1e9).round();
    scores
        .iter()
        .copied()
        .max_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then_with(|| gap(b.0).total_cmp(&gap(a.0)))
                .then_with(|| b.0.total_cmp(&a.0))
        })
        .map(|(t, _)| t)
}

/// Splits the data 65/35 per class, trains both networks on the larger
/// part, measures their validation accuracies for the fusion weights,
/// selects the gate threshold and stores the training corner strings as
/// stage-two templates. Samples that fail preprocessing are skipped.
pub fn train_bundle(ds: &Dataset, cfg: &PipelineConfig) -> Result<(ModelBundle, TrainSummary)> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let prepared = prepare_all(ds, cfg.side, &cfg.corner);
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for (p, s) in prepared.iter().zip(&ds.samples) {
        match p {
            Ok(p) => {
                samples.push(p);
                labels.push(s.label);
            }
            Err(_) => skipped += 1,
        }
    }
    let (bundle, mut summary) = train_prepared(&ds.labels, &samples, &labels, cfg)?;
    summary.skipped = skipped;
    Ok((bundle, summary))
}

/// Which stage produced the final label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Mlp,
    EditDistance,
}

/// Every intermediate of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub shadow_features: Vec<f64>,
    pub chain_features: Vec<f64>,
    pub shadow_scores: Vec<f64>,
    pub chain_scores: Vec<f64>,
    pub combined: Vec<f64>,
    pub relative_difference: Option<f64>,
    pub decision: Decision,
    pub corner_string: CornerString,
    /// Stage-two distance table, present only when stage two ran.
    pub distances: Option<Vec<(String, usize)>>,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub label: String,
    pub trace: Trace,
}

impl ModelBundle {
    fn scores(&self, p: &Prepared) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            self.shadow.forward(&p.shadow)?,
            self.chain.forward(&p.chain)?,
        ))
    }

    pub fn combined_scores(&self, p: &Prepared) -> Result<Vec<f64>> {
        let (s, c) = self.scores(p)?;
        combine(&[s, c], &self.voting.weights)
    }

    fn candidates(&self, top: &[(usize, f64)]) -> Vec<Candidate> {
        top.iter()
            .map(|&(index, score)| Candidate {
                index,
                label: self.labels[index].clone(),
                score,
            })
            .collect()
    }

    fn resolve(&self, p: &Prepared, top: &[(usize, f64)]) -> Result<usize> {
        Ok(classify_confused(&p.corners, &self.candidates(top), &self.templates)?.index)
    }

    /// Two-stage prediction on prepared features.
    pub fn predict_prepared(&self, p: &Prepared) -> Result<Prediction> {
        let (shadow_scores, chain_scores) = self.scores(p)?;
        let combined = combine(
            &[shadow_scores.clone(), chain_scores.clone()],
            &self.voting.weights,
        )?;
        let decision = gate(&combined, &self.voting);
        let top = crate::ensemble::top_k(&combined, 3);
        let rd = relative_difference(&top, self.voting.strategy).ok();
        let (index, distances, stage) = match &decision {
            Decision::Certain(l) => (*l, None, Stage::Mlp),
            Decision::Confused(c) | Decision::Rejected(c) => {
                let r = classify_confused(&p.corners, &self.candidates(c), &self.templates)?;
                (r.index, Some(r.distances), Stage::EditDistance)
            }
        };
        Ok(Prediction {
            index,
            label: self.labels[index].clone(),
            trace: Trace {
                shadow_features: p.shadow.clone(),
                chain_features: p.chain.clone(),
                shadow_scores,
                chain_scores,
                combined,
                relative_difference: rd,
                decision,
                corner_string: p.corners,
                distances,
                stage,
            },
        })
    }

    /// Stage-one-only answer: argmax of the fused scores.
    pub fn predict_stage1(&self, p: &Prepared) -> Result<usize> {
        Ok(argmax(&self.combined_scores(p)?))
    }

    pub fn prepare(&self, img: &GrayImage) -> Result<Prepared> {
        prepare(img, self.side, &self.corner)
    }

    pub fn predict(&self, img: &GrayImage) -> Result<Prediction> {
        self.predict_prepared(&self.prepare(img)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified_and_seeded() {
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let (t, v) = stratified_split(&labels, 3, 0.65, 7);
        assert_eq!(t.len() + v.len(), 60);
        for c in 0..3 {
            assert_eq!(t.iter().filter(|&&i| labels[i] == c).count(), 13);
        }
        assert_eq!(stratified_split(&labels, 3, 0.65, 7), (t.clone(), v));
        assert_ne!(stratified_split(&labels, 3, 0.65, 8).0, t);
        // tiny classes keep one sample on each side
        let (t, v) = stratified_split(&[0, 0, 0], 1, 0.99, 1);
        assert_eq!((t.len(), v.len()), (2, 1));
    }

    #[test]
    fn folds_partition_each_class_evenly() {
        let labels: Vec<usize> = (0..31).map(|i| i % 2).collect();
        let f = stratified_folds(&labels, 2, 3, 3);
        for c in 0..2 {
            let sizes: Vec<usize> = (0..3)
                .map(|k| (0..31).filter(|&i| labels[i] == c && f[i] == k).count())
                .collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn theta_ties_prefer_the_default() {
        assert_eq!(
            pick_theta(&[(0.02, 0.9), (0.05, 1.0), (0.10, 1.0), (0.15, 1.0)]),
            Some(0.10)
        );
        assert_eq!(
            pick_theta(&[(0.02, 0.9), (0.05, 1.0), (0.15, 1.0)]),
            Some(0.05)
        );
        assert_eq!(pick_theta(&[(0.02, 0.95), (0.20, 0.9)]), Some(0.02));
    }

    #[test]
    fn constant_predictor_accuracy_is_class_prevalence() {
        let mut m = MlpModel::init(2, 2, 3, 0).unwrap();
        m.weights_ho.fill(0.0);
        m.bias_o = vec![-1.0, 2.0, -1.0];
        let data: Vec<(Vec<f64>, usize)> = (0..10)
            .map(|i| (vec![0.1 * i as f64, 0.3], [0, 1, 1, 2, 1][i % 5]))
            .collect();
        assert!((accuracy(&m, &data) - 0.6).abs() < 1e-12);
    }
}
