//! Accuracy-weighted score fusion and the relative-difference gate.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Confidence margin computed from the top-ranked fused scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RelDiffStrategy {
    /// `(s1 - s2) / s1`
    #[default]
    TopTwo,
    /// `(s1 - (s2 + s3) / 2) / s1`
    TopThreeMean,
}

impl RelDiffStrategy {
    pub fn code(self) -> u8 {
        match self {
            RelDiffStrategy::TopTwo => 0,
            RelDiffStrategy::TopThreeMean => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(RelDiffStrategy::TopTwo),
            1 => Some(RelDiffStrategy::TopThreeMean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VotingConfig {
    pub weights: Vec<f64>,
    /// Extra margin demanded on top of `theta` before a decision is certain.
    pub k_of_d: f64,
    pub theta: f64,
    /// Samples whose top fused score falls below this are rejected.
    pub rejection_floor: f64,
    pub strategy: RelDiffStrategy,
}

impl VotingConfig {
    pub fn from_accuracies(accuracies: &[f64]) -> Result<Self> {
        Ok(Self {
            weights: fusion_weights(accuracies)?,
            ..Self::default()
        })
    }
}

impl Default for VotingConfig {
    fn default() -> Self {
        Self {
            weights: vec![0.5, 0.5],
            k_of_d: 0.0,
            theta: 0.10,
            rejection_floor: 0.05,
            strategy: RelDiffStrategy::TopTwo,
        }
    }
}

/// A ranked candidate: class index and fused score.
pub type Ranked = (usize, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    Certain(usize),
    /// Low margin; the top candidates go to stage two.
    Confused(Vec<Ranked>),
    /// Top score under the rejection floor; also resolved in stage two.
    Rejected(Vec<Ranked>),
}

impl Decision {
    pub fn candidates(&self) -> Option<&[Ranked]> {
        match self {
            Decision::Certain(_) => None,
            Decision::Confused(c) | Decision::Rejected(c) => Some(c),
        }
    }
}

/// `w_k = p_k / sum p`.
pub fn fusion_weights(p: &[f64]) -> Result<Vec<f64>> {
    if p.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: 1,
            actual: 0,
        });
    }
    if let Some(&bad) = p.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::NonPositiveAccuracy(bad));
    }
    let total: f64 = p.iter().sum();
    Ok(p.iter().map(|v| v / total).collect())
}

/// `combined[c] = sum_k w_k * scores_k[c]`.
pub fn combine(scores: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if scores.len() != weights.len() {
        return Err(Error::ShapeMismatch {
            expected: weights.len(),
            actual: scores.len(),
        });
    }
    let n = scores.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (s, &w) in scores.iter().zip(weights) {
        if s.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                actual: s.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(s) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// The `k` best classes, descending, ties broken by ascending index.
pub fn top_k(s: &[f64], k: usize) -> Vec<Ranked> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| (i, s[i])).collect()
}

pub fn top3(s: &[f64]) -> Result<Vec<Ranked>> {
    if s.len() < 3 {
        return Err(Error::TooFewClasses(s.len()));
    }
    Ok(top_k(s, 3))
}

/// Relative margin of the leading score over the runners-up. Accepts one
/// to three ranked entries; absent runners-up count as zero.
pub fn relative_difference(top: &[Ranked], strategy: RelDiffStrategy) -> Result<f64> {
    let score = |i: usize| top.get(i).map_or(0.0, |r| r.1);
    let s1 = score(0);
    if !(s1 > 0.0) {
        return Err(Error::DegenerateScores);
    }
    let rival = match strategy {
        RelDiffStrategy::TopTwo => score(1),
        RelDiffStrategy::TopThreeMean => (score(1) + score(2)) / 2.0,
    };
    Ok(((s1 - rival) / s1).clamp(0.0, 1.0))
}

/// Rejected if `s1 < rejection_floor`, Certain if the relative difference
/// exceeds `theta + k_of_d`, Confused otherwise.
pub fn gate(combined: &[f64], cfg: &VotingConfig) -> Decision {
    let top = top_k(combined, 3);
    let s1 = top.first().map_or(0.0, |r| r.1);
    if s1 < cfg.rejection_floor {
        return Decision::Rejected(top);
    }
    match relative_difference(&top, cfg.strategy) {
        Ok(rd) if rd > cfg.theta + cfg.k_of_d => Decision::Certain(top[0].0),
        _ => Decision::Confused(top),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn published_accuracies_give_expected_weights() {
        let w = fusion_weights(&[0.7333, 0.6810]).unwrap();
        assert!((w[0] - 0.51849).abs() < 1e-4);
        assert!((w[1] - 0.48151).abs() < 1e-4);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_and_single_accuracies() {
        assert_eq!(fusion_weights(&[0.4, 0.4]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(fusion_weights(&[1.0]).unwrap(), vec![1.0]);
        assert!(matches!(
            fusion_weights(&[0.5, 0.0]),
            Err(Error::NonPositiveAccuracy(_))
        ));
    }

    #[test]
    fn combine_examples() {
        let a = vec![0.3, 0.6, 0.1];
        assert_eq!(combine(&[a.clone(), a.clone()], &[0.25, 0.75]).unwrap(), a);
        assert_eq!(
            combine(&[a.clone(), vec![0.9, 0.0, 0.0]], &[1.0, 0.0]).unwrap(),
            a
        );
        let c = combine(&[vec![0.9, 0.1], vec![0.2, 0.8]], &[0.51849, 0.48151]).unwrap();
        // 0.9*0.51849 + 0.2*0.48151, 0.1*0.51849 + 0.8*0.48151
        assert!((c[0] - 0.562_943).abs() < 1e-6);
        assert!((c[1] - 0.437_057).abs() < 1e-6);
        assert!(matches!(
            combine(&[vec![0.1], vec![0.1, 0.2]], &[0.5, 0.5]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn top3_tie_breaking() {
        let t = top3(&[0.1, 0.9, 0.5, 0.5]).unwrap();
        assert_eq!(t.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 2, 3]);
        let t = top3(&[0.2; 6]).unwrap();
        assert_eq!(t.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(matches!(top3(&[0.1, 0.2]), Err(Error::TooFewClasses(2))));
    }

    #[test]
    fn relative_difference_examples() {
        let rd =
            relative_difference(&[(0, 0.9), (1, 0.1), (2, 0.05)], RelDiffStrategy::TopTwo).unwrap();
        assert!((rd - 0.8 / 0.9).abs() < 1e-12);
        assert_eq!(
            relative_difference(&[(0, 0.4), (1, 0.4), (2, 0.1)], RelDiffStrategy::TopTwo).unwrap(),
            0.0
        );
        assert_eq!(
            relative_difference(&[(0, 0.4), (1, 0.0), (2, 0.0)], RelDiffStrategy::TopTwo).unwrap(),
            1.0
        );
        assert!(matches!(
            relative_difference(&[(0, 0.0), (1, 0.0), (2, 0.0)], RelDiffStrategy::TopTwo),
            Err(Error::DegenerateScores)
        ));
        let rd = relative_difference(
            &[(0, 0.8), (1, 0.4), (2, 0.2)],
            RelDiffStrategy::TopThreeMean,
        )
        .unwrap();
        assert!((rd - 0.625).abs() < 1e-12);
    }

    #[test]
    fn gate_examples() {
        let cfg = VotingConfig::default();
        assert_eq!(gate(&[0.05, 0.9, 0.1], &cfg), Decision::Certain(1));
        match gate(&[0.4, 0.1, 0.4, 0.2], &cfg) {
            Decision::Confused(c) => {
                assert_eq!(c.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 2, 3])
            }
            d => panic!("{d:?}"),
        }
        let zero = VotingConfig {
            theta: 0.0,
            ..VotingConfig::default()
        };
        assert_eq!(gate(&[0.30, 0.31, 0.2], &zero), Decision::Certain(1));
        assert!(matches!(
            gate(&[0.01, 0.02, 0.03], &cfg),
            Decision::Rejected(_)
        ));
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, 3..12)
    }

    proptest! {
        #[test]
        fn top3_matches_full_sort(s in scores()) {
            let mut all: Vec<(usize, f64)> = s.iter().copied().enumerate().collect();
            // bubble sort oracle: descending score, ascending index
            for i in 0..all.len() {
                for j in 0..all.len() - 1 - i {
                    let (a, b) = (all[j], all[j + 1]);
                    if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                        all.swap(j, j + 1);
                    }
                }
            }
            prop_assert_eq!(top3(&s).unwrap(), all[..3].to_vec());
        }

        #[test]
        fn combination_is_convex(a in scores(), seed in 0.01f64..0.99) {
            let b: Vec<f64> = a.iter().map(|v| (v * 7.3 + seed).fract()).collect();
            let w = fusion_weights(&[seed, 1.0 - seed]).unwrap();
            let c = combine(&[a.clone(), b.clone()], &w).unwrap();
            for i in 0..a.len() {
                prop_assert!(c[i] >= a[i].min(b[i]) - 1e-12 && c[i] <= a[i].max(b[i]) + 1e-12);
            }
        }

        #[test]
        fn scaling_accuracies_keeps_the_ranking(a in scores(), p1 in 0.05f64..1.0, p2 in 0.05f64..1.0, k in 0.1f64..20.0) {
            let b: Vec<f64> = a.iter().rev().copied().collect();
            let c1 = combine(&[a.clone(), b.clone()], &fusion_weights(&[p1, p2]).unwrap()).unwrap();
            let c2 = combine(&[a.clone(), b.clone()], &fusion_weights(&[p1 * k, p2 * k]).unwrap()).unwrap();
            let r1: Vec<usize> = top_k(&c1, c1.len()).into_iter().map(|r| r.0).collect();
            let r2: Vec<usize> = top_k(&c2, c2.len()).into_iter().map(|r| r.0).collect();
            // weights agree to rounding; rankings may only differ on near-ties
            for (i, j) in r1.iter().zip(&r2) {
                if i != j {
                    prop_assert!((c1[*i] - c1[*j]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn raising_theta_never_makes_a_sample_certain(s in scores(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let at = |theta| gate(&s, &VotingConfig { theta, rejection_floor: 0.0, ..VotingConfig::default() });
            if matches!(at(lo), Decision::Confused(_)) {
                prop_assert!(matches!(at(hi), Decision::Confused(_)));
            }
        }

        #[test]
        fn relative_difference_in_unit_interval(mut s in proptest::collection::vec(0.0f64..1.0, 3)) {
            s.sort_by(|a, b| b.total_cmp(a));
            prop_assume!(s[0] > 0.0);
            let top: Vec<Ranked> = s.iter().copied().enumerate().collect();
            for strategy in [RelDiffStrategy::TopTwo, RelDiffStrategy::TopThreeMean] {
                let rd = relative_difference(&top, strategy).unwrap();
                prop_assert!((0.0..=1.0).contains(&rd));
            }
        }
    }
}
