//! Unit-cost edit distance and stage-two nearest-template classification.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corners::{glyph_corners, CornerConfig, CornerString};
use crate::preprocess::BinaryGlyph;
use crate::{Error, Result};

/// Minimum number of insertions, deletions and substitutions turning `a`
/// into `b`. Two-row dynamic program.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemplateStore {
    entries: Vec<(String, CornerString)>,
    index: BTreeMap<String, Vec<usize>>,
}

impl TemplateStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, label: impl Into<String>, s: CornerString) {
        let label = label.into();
        self.index
            .entry(label.clone())
            .or_default()
            .push(self.entries.len());
        self.entries.push((label, s));
    }

    pub fn entries(&self) -> &[(String, CornerString)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    pub fn templates_for<'a>(&'a self, label: &str) -> impl Iterator<Item = &'a CornerString> + 'a {
        self.index
            .get(label)
            .into_iter()
            .flatten()
            .map(move |&i| &self.entries[i].1)
    }

    /// Count, then per entry a u32-length-prefixed UTF-8 label and 25 count
    /// bytes. Fails if a count exceeds 255.
    pub fn write_to(&self, out: &mut Vec<u8>) -> Result<()> {
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (label, s) in &self.entries {
            out.extend_from_slice(&(label.len() as u32).to_le_bytes());
            out.extend_from_slice(label.as_bytes());
            for &c in s.counts() {
                out.push(u8::try_from(c).map_err(|_| Error::CountOverflow(c))?);
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl std::io::Read) -> Result<Self> {
        let n = crate::mlp::read_u32(r)? as usize;
        let mut store = Self::new();
        for _ in 0..n {
            let len = crate::mlp::read_u32(r)? as usize;
            let mut label = vec![0u8; len];
            r.read_exact(&mut label).map_err(|_| Error::TruncatedFile)?;
            let label =
                String::from_utf8(label).map_err(|_| Error::Format("label is not UTF-8".into()))?;
            let mut counts = [0u8; 25];
            r.read_exact(&mut counts)
                .map_err(|_| Error::TruncatedFile)?;
            store.push(label, CornerString(counts.map(u32::from)));
        }
        Ok(store)
    }
}

/// Corner string of every training glyph, kept in input order without
/// deduplication.
pub fn build_templates(
    training: &[(String, BinaryGlyph)],
    cfg: &CornerConfig,
) -> Result<TemplateStore> {
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let strings: Vec<CornerString> = training
        .par_iter()
        .map(|(_, g)| glyph_corners(g, cfg).map(|c| c.string))
        .collect::<Result<_>>()?;
    let mut store = TemplateStore::new();
    for ((label, _), s) in training.iter().zip(strings) {
        store.push(label.clone(), s);
    }
    Ok(store)
}

/// A stage-one candidate handed to stage two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub index: usize,
    pub label: String,
    /// Smallest template distance per candidate, in candidate order.
    pub distances: Vec<(String, usize)>,
}

/// 1-nearest-neighbour over the candidates' templates. Distance ties are
/// broken by the higher stage-one score, then the lower class index.
pub fn classify_confused(
    q: &CornerString,
    candidates: &[Candidate],
    store: &TemplateStore,
) -> Result<Resolution> {
    let mut distances = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, &Candidate)> = None;
    for cand in candidates {
        let d = store
            .templates_for(&cand.label)
            .map(|t| edit_distance(q.counts(), t.counts()))
            .min()
            .ok_or_else(|| Error::NoTemplates(cand.label.clone()))?;
        distances.push((cand.label.clone(), d));
        let better = match best {
            None => true,
            Some((bd, b)) => {
                d < bd
                    || (d == bd
                        && (cand.score > b.score
                            || (cand.score == b.score && cand.index < b.index)))
            }
        };
        if better {
            best = Some((d, cand));
        }
    }
    let (_, winner) = best.ok_or(Error::EmptyTrainingSet)?;
    Ok(Resolution {
        index: winner.index,
        label: winner.label.clone(),
        distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::BinaryRaster;

    fn cs(prefix: &[u32]) -> CornerString {
        let mut c = [0u32; 25];
        c[..prefix.len()].copy_from_slice(prefix);
        CornerString(c)
    }

    fn cand(index: usize, label: &str, score: f64) -> Candidate {
        Candidate {
            index,
            label: label.into(),
            score,
        }
    }

    #[test]
    fn basic_distances() {
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3]), 1);
        assert_eq!(edit_distance::<u32>(&[4, 4, 4, 4], &[]), 4);
        assert_eq!(edit_distance::<u32>(&[], &[1, 2]), 2);
        assert_eq!(edit_distance(b"kitten", b"sitting"), 3);
    }

    #[test]
    fn exact_template_wins() {
        let mut store = TemplateStore::new();
        store.push("a", cs(&[1, 2, 3]));
        store.push("b", cs(&[3, 2, 1]));
        let q = cs(&[3, 2, 1]);
        let r = classify_confused(&q, &[cand(0, "a", 0.9), cand(1, "b", 0.1)], &store).unwrap();
        assert_eq!(r.label, "b");
        assert_eq!(r.distances, vec![("a".into(), 2), ("b".into(), 0)]);
    }

    #[test]
    fn single_candidate_always_wins() {
        let mut store = TemplateStore::new();
        store.push("z", cs(&[9, 9, 9, 9, 9]));
        let r = classify_confused(&cs(&[]), &[cand(4, "z", 0.2)], &store).unwrap();
        assert_eq!((r.index, r.label.as_str()), (4, "z"));
    }

    #[test]
    fn nearest_of_three_by_enumeration() {
        let q = cs(&[1, 1, 2, 0, 3, 0, 1]);
        let templates = [
            ("p", cs(&[1, 1, 2, 0, 3, 5, 5])),
            ("q", cs(&[4, 4, 4, 4, 4, 0, 1])),
            ("r", cs(&[9, 9, 9, 9, 9, 9, 9])),
        ];
        let mut store = TemplateStore::new();
        for (l, t) in &templates {
            store.push(*l, *t);
        }
        let expected: Vec<usize> = templates
            .iter()
            .map(|(_, t)| edit_distance(q.counts(), t.counts()))
            .collect();
        assert_eq!(expected, vec![2, 5, 7]);
        let cands = [cand(0, "p", 0.1), cand(1, "q", 0.5), cand(2, "r", 0.4)];
        assert_eq!(classify_confused(&q, &cands, &store).unwrap().label, "p");
    }

    #[test]
    fn distance_ties_prefer_stage_one_score_then_index() {
        let mut store = TemplateStore::new();
        store.push("a", cs(&[1]));
        store.push("b", cs(&[2]));
        let q = cs(&[3]);
        let r = classify_confused(&q, &[cand(0, "a", 0.3), cand(1, "b", 0.6)], &store).unwrap();
        assert_eq!(r.label, "b");
        let r = classify_confused(&q, &[cand(1, "b", 0.5), cand(0, "a", 0.5)], &store).unwrap();
        assert_eq!(r.label, "a");
    }

    #[test]
    fn missing_candidate_templates() {
        let store = TemplateStore::new();
        assert!(matches!(
            classify_confused(&cs(&[]), &[cand(0, "x", 1.0)], &store),
            Err(Error::NoTemplates(l)) if l == "x"
        ));
    }

    fn square_glyph(side: usize, lo: usize, hi: usize) -> BinaryGlyph {
        let r = BinaryRaster::from_fn(side, side, |x, y| {
            (lo..hi).contains(&x) && (lo..hi).contains(&y)
        });
        BinaryGlyph::new(side, r.pixels().to_vec()).unwrap()
    }

    #[test]
    fn templates_match_per_sample_corner_strings() {
        let cfg = CornerConfig::default();
        let training = vec![
            ("a".to_string(), square_glyph(50, 10, 40)),
            ("b".to_string(), square_glyph(50, 5, 20)),
            ("a".to_string(), square_glyph(50, 10, 40)),
        ];
        let store = build_templates(&training, &cfg).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.entries()[0], store.entries()[2]);
        for ((label, g), (sl, s)) in training.iter().zip(store.entries()) {
            assert_eq!(label, sl);
            assert_eq!(*s, glyph_corners(g, &cfg).unwrap().string);
        }
        assert_eq!(store.labels().collect::<Vec<_>>(), vec!["a", "b"]);
        assert!(matches!(
            build_templates(&[], &cfg),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn store_bytes_round_trip_and_overflow() {
        let mut store = TemplateStore::new();
        store.push("क", cs(&[1, 255, 0, 7]));
        store.push("b", cs(&[3]));
        let mut bytes = Vec::new();
        store.write_to(&mut bytes).unwrap();
        assert_eq!(TemplateStore::read_from(&mut &bytes[..]).unwrap(), store);

        let mut big = TemplateStore::new();
        big.push("x", cs(&[256]));
        assert!(matches!(
            big.write_to(&mut Vec::new()),
            Err(Error::CountOverflow(256))
        ));
    }
}
