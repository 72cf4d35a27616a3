use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    prepare_all, stratified_folds, train_prepared, Dataset, PipelineConfig, Prepared, Stage,
};
use crate::ensemble::Decision;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub certain: usize,
    pub confused: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub stage1_only_accuracy: f64,
    /// (shadow, chain)
    pub validation_accuracies: [f64; 2],
    pub fusion_weights: Vec<f64>,
    pub theta: f64,
    pub rejection_floor: f64,
    pub counts: StageCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: usize,
    pub seed: u64,
    pub labels: Vec<String>,
    pub evaluated: usize,
    /// Samples that failed preprocessing and were left out.
    pub skipped: usize,
    pub overall_accuracy: f64,
    /// Accuracy of the fused argmax alone, stage two disabled.
    pub stage1_only_accuracy: f64,
    /// Accuracy on the samples the gate passed as certain.
    pub stage1_certain_accuracy: Option<f64>,
    /// Accuracy on confused and rejected samples after stage two.
    pub stage2_accuracy: Option<f64>,
    pub counts: StageCounts,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub per_fold: Vec<FoldReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Outcome {
    truth: usize,
    predicted: usize,
    stage1: usize,
    stage: Stage,
    rejected: bool,
}

fn ratio(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Stratified k-fold cross validation: for each fold a bundle is trained on
/// the remaining folds and used to predict the held-out one.
pub fn evaluate(ds: &Dataset, cfg: &PipelineConfig) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.folds < 2 {
        return Err(Error::Format(format!(
            "need at least 2 folds, got {}",
            cfg.folds
        )));
    }
    let prepared = prepare_all(ds, cfg.side, &cfg.corner);
    let usable: Vec<(usize, &Prepared)> = prepared
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.as_ref().ok().map(|p| (ds.samples[i].label, p)))
        .collect();
    let skipped = ds.len() - usable.len();
    let labels: Vec<usize> = usable.iter().map(|u| u.0).collect();
    let assignment = stratified_folds(&labels, ds.labels.len(), cfg.folds, cfg.seed);

    let folds: Vec<(FoldReport, Vec<Outcome>)> = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| {
            let (train, test): (Vec<usize>, Vec<usize>) =
                (0..usable.len()).partition(|&i| assignment[i] != fold);
            let samples: Vec<&Prepared> = train.iter().map(|&i| usable[i].1).collect();
            let train_labels: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
            let fold_cfg = PipelineConfig {
                seed: cfg.seed.wrapping_add(fold as u64 + 1),
                ..cfg.clone()
            };
            let (bundle, summary) = train_prepared(&ds.labels, &samples, &train_labels, &fold_cfg)?;

            let mut outcomes = Vec::with_capacity(test.len());
            let mut counts = StageCounts::default();
            for &i in &test {
                let p = bundle.predict_prepared(usable[i].1)?;
                match p.trace.decision {
                    Decision::Certain(_) => counts.certain += 1,
                    Decision::Confused(_) => counts.confused += 1,
                    Decision::Rejected(_) => counts.rejected += 1,
                }
                outcomes.push(Outcome {
                    truth: labels[i],
                    predicted: p.index,
                    stage1: crate::mlp::argmax(&p.trace.combined),
                    stage: p.trace.stage,
                    rejected: matches!(p.trace.decision, Decision::Rejected(_)),
                });
            }
            let hits = outcomes.iter().filter(|o| o.predicted == o.truth).count();
            let stage1_hits = outcomes.iter().filter(|o| o.stage1 == o.truth).count();
            let report = FoldReport {
                fold,
                test_size: test.len(),
                accuracy: ratio(hits, test.len()).unwrap_or(0.0),
                stage1_only_accuracy: ratio(stage1_hits, test.len()).unwrap_or(0.0),
                validation_accuracies: summary.validation_accuracies,
                fusion_weights: bundle.voting.weights.clone(),
                theta: bundle.voting.theta,
                rejection_floor: bundle.voting.rejection_floor,
                counts,
            };
            Ok((report, outcomes))
        })
        .collect::<Result<_>>()?;

    let n = ds.labels.len();
    let mut confusion = vec![vec![0usize; n]; n];
    let mut counts = StageCounts::default();
    let (mut hits, mut stage1_hits, mut total) = (0, 0, 0);
    let (mut certain_hits, mut certain_total, mut s2_hits, mut s2_total) = (0, 0, 0, 0);
    for (_, outcomes) in &folds {
        for o in outcomes {
            confusion[o.truth][o.predicted] += 1;
            total += 1;
            hits += usize::from(o.predicted == o.truth);
            stage1_hits += usize::from(o.stage1 == o.truth);
            match o.stage {
                Stage::Mlp => {
                    counts.certain += 1;
                    certain_total += 1;
                    certain_hits += usize::from(o.predicted == o.truth);
                }
                Stage::EditDistance => {
                    if o.rejected {
                        counts.rejected += 1;
                    } else {
                        counts.confused += 1;
                    }
                    s2_total += 1;
                    s2_hits += usize::from(o.predicted == o.truth);
                }
            }
        }
    }

    Ok(EvalReport {
        folds: cfg.folds,
        seed: cfg.seed,
        labels: ds.labels.clone(),
        evaluated: total,
        skipped,
        overall_accuracy: ratio(hits, total).unwrap_or(0.0),
        stage1_only_accuracy: ratio(stage1_hits, total).unwrap_or(0.0),
        stage1_certain_accuracy: ratio(certain_hits, certain_total),
        stage2_accuracy: ratio(s2_hits, s2_total),
        counts,
        confusion,
        per_fold: folds.into_iter().map(|(r, _)| r).collect(),
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}%", 100.0 * v))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}-fold cross validation, seed {}",
            self.folds, self.seed
        )?;
        writeln!(f, "{:<28}{:>10}", "samples evaluated", self.evaluated)?;
        writeln!(f, "{:<28}{:>10}", "samples skipped", self.skipped)?;
        writeln!(
            f,
            "{:<28}{:>10}",
            "overall accuracy",
            pct(Some(self.overall_accuracy))
        )?;
        writeln!(
            f,
            "{:<28}{:>10}",
            "stage-1 only accuracy",
            pct(Some(self.stage1_only_accuracy))
        )?;
        writeln!(
            f,
            "{:<28}{:>10}",
            "stage-1 certain accuracy",
            pct(self.stage1_certain_accuracy)
        )?;
        writeln!(
            f,
            "{:<28}{:>10}",
            "stage-2 accuracy",
            pct(self.stage2_accuracy)
        )?;
        writeln!(
            f,
            "{:<28}{:>10}",
            "certain/confused/rejected",
            format!(
                "{}/{}/{}",
                self.counts.certain, self.counts.confused, self.counts.rejected
            )
        )?;
        writeln!(f)?;
        writeln!(
            f,
            "{:>4} {:>6} {:>9} {:>9} {:>17} {:>6} {:>6}",
            "fold", "test", "accuracy", "stage-1", "weights(sh,ch)", "theta", "floor"
        )?;
        for r in &self.per_fold {
            let w = r
                .fusion_weights
                .iter()
                .map(|w| format!("{w:.4}"))
                .collect::<Vec<_>>()
                .join(",");
            writeln!(
                f,
                "{:>4} {:>6} {:>9} {:>9} {:>17} {:>6.2} {:>6.2}",
                r.fold,
                r.test_size,
                pct(Some(r.accuracy)),
                pct(Some(r.stage1_only_accuracy)),
                w,
                r.theta,
                r.rejection_floor
            )?;
        }
        writeln!(f)?;
        let width = self
            .labels
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(1)
            .max(4);
        write!(f, "{:>width$}", "")?;
        for l in &self.labels {
            write!(f, " {l:>width$}")?;
        }
        writeln!(f)?;
        for (l, row) in self.labels.iter().zip(&self.confusion) {
            write!(f, "{l:>width$}")?;
            for c in row {
                write!(f, " {c:>width$}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
