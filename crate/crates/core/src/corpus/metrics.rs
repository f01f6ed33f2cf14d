use std::collections::{BTreeMap, HashSet};

use super::{convert_scheme, extract_entities, Dataset, EntitySpan, TagScheme};
use crate::{Error, Result};

/// Precision, recall and F1 as fractions in `[0, 1]`, with raw counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Prf {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { correct as f64 / predicted as f64 };
        let recall = if gold == 0 { 0.0 } else { correct as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            correct,
            predicted,
            gold,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityScores {
    pub overall: Prf,
    pub per_type: BTreeMap<String, Prf>,
    /// Ill-formed continuations repaired while reading gold and predictions.
    pub gold_repairs: usize,
    pub pred_repairs: usize,
}

/// Exact span-and-type matching, conlleval style.
pub fn entity_f1(gold: &Dataset, pred: &[Vec<String>], pred_scheme: TagScheme) -> Result<EntityScores> {
    let gold_scheme = gold
        .scheme
        .ok_or_else(|| Error::usage("gold dataset has no tag scheme"))?;
    if gold.size() != pred.len() {
        return Err(Error::usage(format!(
            "{} gold sentences but {} predictions",
            gold.size(),
            pred.len()
        )));
    }
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let mut scores = EntityScores::default();
    for (i, (s, p)) in gold.sentences.iter().zip(pred).enumerate() {
        let g = s
            .tags
            .as_ref()
            .ok_or_else(|| Error::usage(format!("gold sentence {i} is unlabeled")))?;
        if g.len() != p.len() {
            return Err(Error::usage(format!(
                "sentence {i}: {} gold tags but {} predicted",
                g.len(),
                p.len()
            )));
        }
        let ge = extract_entities(g, gold_scheme)?;
        let pe = extract_entities(p, pred_scheme)?;
        scores.gold_repairs += ge.repairs;
        scores.pred_repairs += pe.repairs;
        let gold_set: HashSet<&EntitySpan> = ge.spans.iter().collect();
        for span in &pe.spans {
            let c = counts.entry(span.kind.clone()).or_default();
            c.1 += 1;
            if gold_set.contains(span) {
                c.0 += 1;
            }
        }
        for span in &ge.spans {
            counts.entry(span.kind.clone()).or_default().2 += 1;
        }
    }
    let (mut tc, mut tp, mut tg) = (0, 0, 0);
    for (kind, (c, p, g)) in counts {
        tc += c;
        tp += p;
        tg += g;
        scores.per_type.insert(kind, Prf::from_counts(c, p, g));
    }
    scores.overall = Prf::from_counts(tc, tp, tg);
    Ok(scores)
}

/// Fraction of correctly tagged tokens per sentence-length bucket. Bucket
/// `b` (a multiple of `width`) holds lengths in `(b - width, b]`; buckets
/// with no sentences are reported as `None`.
pub fn correct_tag_ratio_by_length(
    gold: &Dataset,
    pred: &[Vec<String>],
    pred_scheme: TagScheme,
    width: usize,
) -> Result<Vec<(usize, Option<f64>)>> {
    if width == 0 {
        return Err(Error::usage("bucket width must be positive"));
    }
    let gold_scheme = gold
        .scheme
        .ok_or_else(|| Error::usage("gold dataset has no tag scheme"))?;
    if gold.size() != pred.len() {
        return Err(Error::usage("gold and predictions differ in sentence count"));
    }
    let mut buckets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (i, (s, p)) in gold.sentences.iter().zip(pred).enumerate() {
        let g = s
            .tags
            .as_ref()
            .ok_or_else(|| Error::usage(format!("gold sentence {i} is unlabeled")))?;
        if g.len() != p.len() {
            return Err(Error::usage(format!("sentence {i}: length mismatch")));
        }
        let g2 = convert_scheme(g, gold_scheme, TagScheme::Iob2)?;
        let p2 = convert_scheme(p, pred_scheme, TagScheme::Iob2)?;
        let correct = g2.iter().zip(&p2).filter(|(a, b)| a == b).count();
        let key = s.len().div_ceil(width) * width;
        let e = buckets.entry(key).or_default();
        e.0 += correct;
        e.1 += s.len();
    }
    let (Some(&lo), Some(&hi)) = (buckets.keys().next(), buckets.keys().next_back()) else {
        return Ok(Vec::new());
    };
    Ok((lo..=hi)
        .step_by(width)
        .map(|b| (b, buckets.get(&b).map(|&(c, n)| c as f64 / n as f64)))
        .collect())
}
