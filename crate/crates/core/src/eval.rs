//! Classification metrics and a token-overlap text score.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("truth has {truth} labels but predictions have {pred}")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {label:?} at position {index} is not in the vocabulary")]
    UnknownLabel { label: String, index: usize },
    #[error("confusion matrix has no classes")]
    EmptyMatrix,
}

/// Rows are truth, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        if classes.is_empty() {
            return Err(EvalError::EmptyMatrix);
        }
        assert!(
            counts.len() == classes.len() && counts.iter().all(|r| r.len() == classes.len()),
            "confusion counts must be K x K"
        );
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, truth: &str, pred: &str) -> Option<u64> {
        let i = self.classes.iter().position(|c| c == truth)?;
        let j = self.classes.iter().position(|c| c == pred)?;
        Some(self.counts[i][j])
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum::<u64>() as f64 / total as f64
    }
}

/// Counts pairs over a fixed vocabulary, in the vocabulary's order.
pub fn confusion_with_classes<S: AsRef<str>>(
    classes: &[String],
    truth: &[S],
    pred: &[S],
) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let index: HashMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let lookup = |s: &S, i: usize| {
        index.get(s.as_ref()).copied().ok_or_else(|| EvalError::UnknownLabel {
            label: s.as_ref().to_string(),
            index: i,
        })
    };
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (i, (t, p)) in truth.iter().zip(pred).enumerate() {
        counts[lookup(t, i)?][lookup(p, i)?] += 1;
    }
    ConfusionMatrix::from_counts(classes.to_vec(), counts)
}

/// Vocabulary is the sorted set of labels seen in either sequence.
pub fn confusion<S: AsRef<str>>(truth: &[S], pred: &[S]) -> Result<ConfusionMatrix, EvalError> {
    let mut classes: Vec<String> = truth.iter().chain(pred).map(|s| s.as_ref().to_string()).collect();
    classes.sort();
    classes.dedup();
    confusion_with_classes(&classes, truth, pred)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class scores; any ratio with a zero denominator is 0.
pub fn per_class(m: &ConfusionMatrix) -> Vec<ClassScore> {
    let k = m.classes.len();
    (0..k)
        .map(|i| {
            let tp = m.counts[i][i];
            let support: u64 = m.counts[i].iter().sum();
            let predicted: u64 = (0..k).map(|r| m.counts[r][i]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScore {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect()
}

/// Unweighted mean over classes with at least one true instance.
///
/// Allocation-free so exhaustive sweeps over many matrices stay cheap.
pub fn macro_prf(m: &ConfusionMatrix) -> Result<Prf, EvalError> {
    let k = m.classes.len();
    if k == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let (mut sp, mut sr, mut sf, mut n) = (0.0, 0.0, 0.0, 0usize);
    for i in 0..k {
        let row = &m.counts[i];
        let support: u64 = row.iter().sum();
        if support == 0 {
            continue;
        }
        let tp = row[i];
        let predicted: u64 = m.counts.iter().map(|r| r[i]).sum();
        let p = ratio(tp, predicted);
        let r = tp as f64 / support as f64;
        sp += p;
        sr += r;
        sf += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        n += 1;
    }
    if n == 0 {
        return Ok(Prf {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });
    }
    let n = n as f64;
    Ok(Prf {
        precision: sp / n,
        recall: sr / n,
        f1: sf / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: BTreeMap<String, ClassScore>,
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    pub accuracy: f64,
    pub total: u64,
}

pub fn metric_report(m: &ConfusionMatrix) -> Result<MetricReport, EvalError> {
    Ok(MetricReport {
        per_class: m.classes.iter().cloned().zip(per_class(m)).collect(),
        macro_avg: macro_prf(m)?,
        accuracy: m.accuracy(),
        total: m.total(),
    })
}

/// Text similarity in [0, 1]; higher is closer.
pub trait TextScorer {
    fn name(&self) -> &str;
    fn score(&self, candidate: &str, reference: &str) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TokenF1;

impl TextScorer for TokenF1 {
    fn name(&self) -> &str {
        "token_f1"
    }

    fn score(&self, candidate: &str, reference: &str) -> f64 {
        token_f1(candidate, reference)
    }
}

fn token_counts(text: &str) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for tok in text.split_whitespace() {
        *m.entry(tok.to_lowercase()).or_default() += 1;
    }
    m
}

/// Multiset overlap F1 of lowercase whitespace tokens.
pub fn token_f1(candidate: &str, reference: &str) -> f64 {
    let c = token_counts(candidate);
    let r = token_counts(reference);
    let nc: usize = c.values().sum();
    let nr: usize = r.values().sum();
    match (nc, nr) {
        (0, 0) => return 1.0,
        (0, _) | (_, 0) => return 0.0,
        _ => {}
    }
    let overlap: usize = c.iter().map(|(t, n)| (*n).min(r.get(t).copied().unwrap_or(0))).sum();
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / nc as f64;
    let rec = overlap as f64 / nr as f64;
    2.0 * p * rec / (p + rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting() {
        let m = confusion(&["A", "A", "B"], &["A", "B", "B"]).unwrap();
        assert_eq!(m.get("A", "A"), Some(1));
        assert_eq!(m.get("A", "B"), Some(1));
        assert_eq!(m.get("B", "B"), Some(1));
        assert_eq!(m.get("B", "A"), Some(0));
        let f1 = macro_prf(&m).unwrap().f1;
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(
            confusion(&["A"], &["A", "B"]),
            Err(EvalError::LengthMismatch { truth: 1, pred: 2 })
        );
    }

    #[test]
    fn perfect_and_unknown() {
        let m = confusion(&["A", "B"], &["A", "B"]).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0], vec![0, 1]]);
        let p = macro_prf(&m).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let vocab = vec!["A".to_string()];
        assert!(matches!(
            confusion_with_classes(&vocab, &["A"], &["C"]),
            Err(EvalError::UnknownLabel { index: 0, .. })
        ));
    }

    #[test]
    fn zero_prediction_class_has_zero_precision() {
        let m = confusion(&["A", "B"], &["A", "A"]).unwrap();
        let s = per_class(&m);
        assert_eq!(s[1].precision, 0.0);
        assert_eq!(s[1].f1, 0.0);
    }

    #[test]
    fn token_scores() {
        assert_eq!(token_f1("a b", "a b"), 1.0);
        assert!((token_f1("walking in park", "walking in the park") - 6.0 / 7.0).abs() < 1e-12);
        assert_eq!(token_f1("", "x"), 0.0);
        assert_eq!(token_f1("", ""), 1.0);
        assert_eq!(TokenF1.score("Park", "park"), 1.0);
    }

    #[test]
    fn report_json_shape() {
        let m = confusion(&["A", "B"], &["A", "B"]).unwrap();
        let v = serde_json::to_value(metric_report(&m).unwrap()).unwrap();
        assert!(v["per_class"]["A"]["f1"].is_number());
        assert_eq!(v["macro"]["f1"], 1.0);
    }
}
