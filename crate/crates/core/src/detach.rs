//! Sequential feature detachment: repeatedly refit the ridge classifier and
//! switch off the features with the smallest absolute weight, then pick the
//! step with the best size/accuracy trade-off.
//!
//! The selection score of a step with retained fraction `r` is
//! `(1 − c) · acc_val / acc_val_full + c · (1 − r)`.

use std::io::Write;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::ridge::{active_columns, ClassBalance, RidgeModel, DEFAULT_ALPHA};
use crate::rocket::{fit_normalizer, FeatureMatrix, Normalizer};

pub const DEFAULT_DROP_FRACTION: f64 = 0.05;
pub const DEFAULT_TRADEOFF: f64 = 0.1;

/// Result of one pruning step.
#[derive(Debug, Clone, PartialEq)]
pub struct Detached {
    pub mask: Vec<bool>,
    /// Columns switched off by this step, ascending.
    pub dropped: Vec<usize>,
    /// Set when the requested drop would have emptied the mask.
    pub floored: bool,
}

/// Number of features removed from `active` at `drop_fraction`.
pub fn drop_count(active: usize, drop_fraction: f64) -> usize {
    // the small slack keeps e.g. 0.05 · 20 from rounding up to 2
    ((drop_fraction * active as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Switches off the `⌈drop_fraction · active⌉` active columns with the
/// smallest `|w|`; equal magnitudes go lowest column first. At least one
/// feature always stays on.
pub fn detach_mask(mask: &[bool], weights: &[f64], drop_fraction: f64) -> Result<Detached> {
    if !(0.0..=1.0).contains(&drop_fraction) {
        return Err(Error::Config(format!(
            "drop fraction {drop_fraction} outside [0, 1]"
        )));
    }
    let cols = active_columns(mask);
    if cols.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} weights for {} active columns",
            weights.len(),
            cols.len()
        )));
    }
    let mut order: Vec<usize> = (0..cols.len()).collect();
    order.sort_by(|&a, &b| {
        weights[a]
            .abs()
            .total_cmp(&weights[b].abs())
            .then(cols[a].cmp(&cols[b]))
    });
    let wanted = drop_count(cols.len(), drop_fraction);
    let floored = wanted >= cols.len() && wanted > 0;
    let n = wanted.min(cols.len().saturating_sub(1));
    let mut dropped: Vec<usize> = order[..n].iter().map(|&i| cols[i]).collect();
    dropped.sort_unstable();
    let mut mask = mask.to_vec();
    for &c in &dropped {
        mask[c] = false;
    }
    Ok(Detached {
        mask,
        dropped,
        floored,
    })
}

pub fn detach_step(model: &RidgeModel, drop_fraction: f64) -> Result<Detached> {
    detach_mask(&model.mask, &model.weights, drop_fraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Refit {
    #[default]
    Train,
    TrainVal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SfdConfig {
    pub drop_per_step: f64,
    pub tradeoff_c: f64,
    /// Stop once this many features remain.
    pub min_features: usize,
    pub alpha: f64,
    pub balance: ClassBalance,
    pub refit: Refit,
}

impl Default for SfdConfig {
    fn default() -> Self {
        SfdConfig {
            drop_per_step: DEFAULT_DROP_FRACTION,
            tradeoff_c: DEFAULT_TRADEOFF,
            min_features: 1,
            alpha: DEFAULT_ALPHA,
            balance: ClassBalance::Weighted,
            refit: Refit::Train,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub retained: usize,
    pub retained_fraction: f64,
    pub mask: Vec<bool>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetachmentTrace {
    pub steps: Vec<TraceStep>,
    pub drop_per_step: f64,
    pub tradeoff_c: f64,
    pub selected: usize,
}

impl DetachmentTrace {
    pub fn selected_step(&self) -> &TraceStep {
        &self.steps[self.selected]
    }

    pub fn full_val_accuracy(&self) -> f64 {
        self.steps[0].val_accuracy
    }

    /// One tab-separated line per step; the selected step carries `*`.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(
            sink,
            "# drop_per_step={} tradeoff_c={}",
            self.drop_per_step, self.tradeoff_c
        )?;
        writeln!(
            sink,
            "step\tretained\tretained_fraction\ttrain_acc\tval_acc\tscore\tselected"
        )?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(
                sink,
                "{i}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                s.retained,
                s.retained_fraction,
                s.train_accuracy,
                s.val_accuracy,
                s.score,
                if i == self.selected { "*" } else { "" }
            )?;
        }
        Ok(())
    }
}

/// `(1 − c) · acc / acc_full + c · (1 − retained_fraction)`. A full model
/// with zero validation accuracy is compared on raw accuracy.
pub fn selection_score(acc: f64, acc_full: f64, retained_fraction: f64, c: f64) -> f64 {
    let rel = if acc_full > 0.0 { acc / acc_full } else { acc };
    (1.0 - c) * rel + c * (1.0 - retained_fraction)
}

fn accuracy(model: &RidgeModel, features: &FeatureMatrix, rows: &[usize]) -> Result<f64> {
    let scores = model.decision_scores_rows(features, rows)?;
    let correct = scores
        .iter()
        .zip(rows)
        .filter(|(d, &r)| Label::from_score(**d) == features.meta[r].label())
        .count();
    Ok(correct as f64 / rows.len() as f64)
}

fn require_both_classes(features: &FeatureMatrix, rows: &[usize], name: &str) -> Result<()> {
    let mut seen = [false; 2];
    for &r in rows {
        seen[features.meta[r].label().index()] = true;
    }
    if seen != [true, true] {
        return Err(Error::Split(format!(
            "{name} rows do not contain both classes"
        )));
    }
    Ok(())
}

/// Runs detachment from the full feature set down to `min_features` and
/// returns the trace together with the refit selected model.
pub fn run_sfd(
    features: &FeatureMatrix,
    train_rows: &[usize],
    val_rows: &[usize],
    config: &SfdConfig,
    bank_seed: u64,
) -> Result<(DetachmentTrace, RidgeModel)> {
    if !(config.drop_per_step > 0.0 && config.drop_per_step <= 1.0) {
        return Err(Error::Config(format!(
            "drop per step {} must be in (0, 1]",
            config.drop_per_step
        )));
    }
    if !(0.0..=1.0).contains(&config.tradeoff_c) {
        return Err(Error::Config(format!(
            "trade-off c = {} outside [0, 1]",
            config.tradeoff_c
        )));
    }
    require_both_classes(features, train_rows, "training")?;
    require_both_classes(features, val_rows, "validation")?;
    let total = features.cols;
    let floor = config.min_features.max(1);
    let normalizer = fit_normalizer(features, train_rows)?;

    let mut steps: Vec<TraceStep> = Vec::new();
    let mut mask = vec![true; total];
    loop {
        let model = fit(features, train_rows, &normalizer, &mask, config, bank_seed)?;
        let retained = model.num_active();
        steps.push(TraceStep {
            retained,
            retained_fraction: retained as f64 / total as f64,
            mask: mask.clone(),
            train_accuracy: accuracy(&model, features, train_rows)?,
            val_accuracy: accuracy(&model, features, val_rows)?,
            score: 0.0,
        });
        if retained <= floor {
            break;
        }
        let next = detach_step(&model, config.drop_per_step)?;
        let kept = next.mask.iter().filter(|m| **m).count();
        mask = if kept < floor {
            // keep the `floor` largest weights instead of overshooting
            let dropped = retained - floor;
            detach_mask(
                &model.mask,
                &model.weights,
                dropped as f64 / retained as f64,
            )?
            .mask
        } else {
            next.mask
        };
    }

    let full = steps[0].val_accuracy;
    let mut selected = 0;
    for s in steps.iter_mut() {
        s.score = selection_score(s.val_accuracy, full, s.retained_fraction, config.tradeoff_c);
    }
    for i in 1..steps.len() {
        // later steps have fewer features, so `>=` resolves ties toward them
        if steps[i].score >= steps[selected].score {
            selected = i;
        }
    }
    let trace = DetachmentTrace {
        steps,
        drop_per_step: config.drop_per_step,
        tradeoff_c: config.tradeoff_c,
        selected,
    };
    let chosen = trace.selected_step().mask.clone();
    let model = match config.refit {
        Refit::Train => fit(
            features,
            train_rows,
            &normalizer,
            &chosen,
            config,
            bank_seed,
        )?,
        Refit::TrainVal => {
            let rows: Vec<usize> = train_rows.iter().chain(val_rows).copied().collect();
            let norm = fit_normalizer(features, &rows)?;
            fit(features, &rows, &norm, &chosen, config, bank_seed)?
        }
    };
    Ok((trace, model))
}

fn fit(
    features: &FeatureMatrix,
    rows: &[usize],
    normalizer: &Normalizer,
    mask: &[bool],
    config: &SfdConfig,
    bank_seed: u64,
) -> Result<RidgeModel> {
    RidgeModel::fit_with_normalizer(
        features,
        rows,
        normalizer.clone(),
        Some(mask.to_vec()),
        config.alpha,
        config.balance,
        bank_seed,
    )
}

/// Active-column submatrix and the ascending ids of the kept columns.
pub fn export_active_features(
    model: &RidgeModel,
    features: &FeatureMatrix,
) -> Result<(FeatureMatrix, Vec<usize>)> {
    if features.cols != model.mask.len() {
        return Err(Error::Shape(format!(
            "model expects {} columns, matrix has {}",
            model.mask.len(),
            features.cols
        )));
    }
    let cols = model.active_columns();
    Ok((features.select_columns(&cols), cols))
}

/// Feature and kernel counts before and after pruning. A kernel survives if
/// either of its two pooled features is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reduction {
    pub features_total: usize,
    pub features_active: usize,
    pub kernels_total: usize,
    pub kernels_active: usize,
}

impl Reduction {
    pub fn of(mask: &[bool]) -> Reduction {
        Reduction {
            features_total: mask.len(),
            features_active: mask.iter().filter(|m| **m).count(),
            kernels_total: mask.len().div_ceil(2),
            kernels_active: mask.chunks(2).filter(|p| p.iter().any(|m| *m)).count(),
        }
    }

    pub fn feature_reduction(&self) -> f64 {
        1.0 - self.features_active as f64 / self.features_total.max(1) as f64
    }

    pub fn kernel_reduction(&self) -> f64 {
        1.0 - self.kernels_active as f64 / self.kernels_total.max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Condition, Task};
    use crate::rocket::RowMeta;

    #[test]
    fn drops_smallest_magnitudes() {
        let mask = vec![true; 4];
        let d = detach_mask(&mask, &[0.5, -0.1, 0.4, 0.2], 0.5).unwrap();
        assert_eq!(d.dropped, vec![1, 3]);
        assert_eq!(d.mask, vec![true, false, true, false]);
        assert!(!d.floored);
    }

    #[test]
    fn zero_fraction_keeps_mask() {
        let mask = vec![true, false, true];
        let d = detach_mask(&mask, &[1.0, 2.0], 0.0).unwrap();
        assert_eq!(d.mask, mask);
        assert!(d.dropped.is_empty());
    }

    #[test]
    fn ties_drop_lowest_column() {
        let d = detach_mask(&[true; 4], &[0.3; 4], 0.25).unwrap();
        assert_eq!(d.dropped, vec![0]);
    }

    #[test]
    fn weights_map_to_active_columns() {
        let mask = vec![false, true, true, false, true];
        let d = detach_mask(&mask, &[0.9, 0.1, 0.5], 0.3).unwrap();
        assert_eq!(d.dropped, vec![2]);
    }

    #[test]
    fn never_empties_mask() {
        let d = detach_mask(&[true, true], &[1.0, 2.0], 1.0).unwrap();
        assert!(d.floored);
        assert_eq!(d.mask, vec![false, true]);
        let one = detach_mask(&[true], &[1.0], 0.05).unwrap();
        assert!(one.floored);
        assert_eq!(one.mask, vec![true]);
    }

    #[test]
    fn drop_count_rounds_up() {
        assert_eq!(drop_count(20000, 0.05), 1000);
        assert_eq!(drop_count(20, 0.05), 1);
        assert_eq!(drop_count(21, 0.05), 2);
        assert_eq!(drop_count(3, 0.05), 1);
        assert_eq!(drop_count(10, 0.0), 0);
    }

    #[test]
    fn score_formula() {
        assert!((selection_score(0.8, 0.8, 0.1, 0.1) - (0.9 + 0.09)).abs() < 1e-15);
        assert_eq!(selection_score(0.7, 0.9, 0.5, 0.0), 0.7 / 0.9);
    }

    #[test]
    fn reduction_counts_kernels() {
        let r = Reduction::of(&[true, false, false, false, false, true]);
        assert_eq!(
            (r.features_active, r.kernels_total, r.kernels_active),
            (2, 3, 2)
        );
        assert!((r.kernel_reduction() - 1.0 / 3.0).abs() < 1e-15);
    }

    fn meta(n: usize) -> Vec<RowMeta> {
        (0..n)
            .map(|i| RowMeta {
                subject_id: format!("s{i}"),
                condition: if i % 2 == 0 {
                    Condition::Hc
                } else {
                    Condition::PdOff
                },
                task: Task::Antisaccade,
                session_id: "x".into(),
                trial_index: 0,
            })
            .collect()
    }

    #[test]
    fn export_full_and_empty() {
        let f = FeatureMatrix::new(3, (0..12).map(f64::from).collect(), meta(4)).unwrap();
        let rows: Vec<usize> = (0..4).collect();
        let m = RidgeModel::fit(&f, &rows, None, 1.0, ClassBalance::None, 0).unwrap();
        let (x, ids) = export_active_features(&m, &f).unwrap();
        assert_eq!(x, f);
        assert_eq!(ids, vec![0, 1, 2]);
        let empty = FeatureMatrix::new(3, Vec::new(), Vec::new()).unwrap();
        let (x, ids) = export_active_features(&m, &empty).unwrap();
        assert_eq!((x.rows, ids.len()), (0, 3));
    }

    #[test]
    fn export_keeps_sorted_ids() {
        let f = FeatureMatrix::new(20000, vec![0.0; 20000], meta(1)).unwrap();
        let mut m = RidgeModel {
            weights: vec![1.0; 450],
            intercept: 0.0,
            alpha: 1.0,
            mask: vec![false; 20000],
            normalizer: Normalizer {
                mean: vec![0.0; 20000],
                std: vec![1.0; 20000],
            },
            bank_seed: 0,
        };
        for i in 0..450 {
            m.mask[(i * 7919) % 20000] = true;
        }
        let (x, ids) = export_active_features(&m, &f).unwrap();
        assert_eq!((x.cols, ids.len()), (450, 450));
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_single_class_validation() {
        let f = FeatureMatrix::new(2, (0..16).map(f64::from).collect(), meta(8)).unwrap();
        let err = run_sfd(&f, &[0, 1, 2, 3, 4, 5], &[6], &SfdConfig::default(), 0);
        assert!(matches!(err, Err(Error::Split(_))));
    }
}
