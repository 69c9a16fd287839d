//! Confusion-matrix metrics and subject-level soft voting.

use std::collections::BTreeMap;

use crate::data::Label;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    /// Indexed by `Label::index()`.
    pub per_class: [ClassScores; 2],
    /// Mean of the two class F1 scores.
    pub uf1: f64,
    /// `confusion[truth][predicted]`, indexed by `Label::index()`.
    pub confusion: [[usize; 2]; 2],
    /// Classes missing from both labels and predictions (scored F1 = 0).
    pub absent: Vec<Label>,
}

impl Metrics {
    pub fn class(&self, label: Label) -> &ClassScores {
        &self.per_class[label.index()]
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(predictions: &[Label], labels: &[Label]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InsufficientData(
            "metrics need at least one sample".into(),
        ));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (p, l) in predictions.iter().zip(labels) {
        confusion[l.index()][p.index()] += 1;
    }
    let mut per_class = [ClassScores::default(); 2];
    let mut absent = Vec::new();
    for l in Label::ALL {
        let i = l.index();
        let tp = confusion[i][i];
        let predicted = confusion[0][i] + confusion[1][i];
        let actual = confusion[i][0] + confusion[i][1];
        if predicted == 0 && actual == 0 {
            absent.push(l);
        }
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class[i] = ClassScores {
            precision,
            recall,
            f1,
            support: actual,
        };
    }
    Ok(Metrics {
        n: labels.len(),
        accuracy: ratio(confusion[0][0] + confusion[1][1], labels.len()),
        uf1: (per_class[0].f1 + per_class[1].f1) / 2.0,
        per_class,
        confusion,
        absent,
    })
}

/// uF1 of a predictor that always outputs the majority class, whose share
/// of the samples is `p`: the majority F1 is `2p / (1 + p)`, the minority
/// F1 is 0.
pub fn majority_baseline_uf1(p: f64) -> f64 {
    (2.0 * p / (1.0 + p)) / 2.0
}

pub fn majority_fraction(labels: &[Label]) -> f64 {
    let pd = labels.iter().filter(|l| **l == Label::Pd).count();
    let n = labels.len().max(1);
    pd.max(labels.len() - pd) as f64 / n as f64
}

/// Arithmetic mean of a subject's trial probabilities.
pub fn soft_vote(probabilities: &[f64]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::Data(
            "cannot aggregate a subject with no scored trials".into(),
        ));
    }
    Ok(probabilities.iter().sum::<f64>() / probabilities.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectScore {
    pub subject_id: String,
    pub label: Label,
    pub score: f64,
    pub prediction: Label,
    pub trials: usize,
}

/// Groups `(subject, label, probability)` triples by subject (in subject-id
/// order), averages and thresholds: PD iff the mean is strictly above
/// `threshold`.
pub fn aggregate_subjects(
    trials: &[(&str, Label, f64)],
    threshold: f64,
) -> Result<Vec<SubjectScore>> {
    let mut groups: BTreeMap<&str, (Label, Vec<f64>)> = BTreeMap::new();
    for &(s, l, p) in trials {
        let entry = groups.entry(s).or_insert((l, Vec::new()));
        if entry.0 != l {
            return Err(Error::Data(format!(
                "subject {s} has trials with both labels"
            )));
        }
        entry.1.push(p);
    }
    groups
        .into_iter()
        .map(|(s, (label, probs))| {
            let score = soft_vote(&probs)?;
            Ok(SubjectScore {
                subject_id: s.to_string(),
                label,
                score,
                prediction: if score > threshold {
                    Label::Pd
                } else {
                    Label::Hc
                },
                trials: probs.len(),
            })
        })
        .collect()
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for n = 1).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
