//! Closed-form ridge classifier over normalized features.
//!
//! Labels are encoded HC → −1, PD → +1. Inputs and targets are centered with
//! the (sample-weighted) means, the weights solve
//! `(Zᵀ Z + α I) w = Zᵀ t` with `Z = W^½ (X − x̄)`, `t = W^½ (y − ȳ)`, and the
//! intercept restores the offset: `b = ȳ − x̄ᵀ w`. When there are more
//! features than rows the equivalent dual system `(Z Zᵀ + α I) c = t`,
//! `w = Zᵀ c` is solved instead. Both use a Cholesky factorization.
//!
//! Probabilities for soft voting come from logistic squashing of the
//! decision value, so `p = 0.5` sits exactly on the decision boundary.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::rocket::{fit_normalizer, FeatureMatrix, Normalizer};

pub const DEFAULT_ALPHA: f64 = 1e4;
pub const MODEL_SCHEMA_VERSION: u32 = 1;
const MODEL_MAGIC: &str = "#ridge-model";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverForm {
    /// Dual when features outnumber rows, primal otherwise.
    Auto,
    Primal,
    Dual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

/// Centered, weighted least-squares system whose Gram matrix is factored
/// once per α. Reusable across a grid of ridge parameters.
pub struct RidgeProblem {
    z: DMatrix<f64>,
    t: DVector<f64>,
    x_mean: DVector<f64>,
    y_mean: f64,
    gram: DMatrix<f64>,
    dual: bool,
}

impl RidgeProblem {
    pub fn new(
        x: &DMatrix<f64>,
        y: &[f64],
        sample_weights: Option<&[f64]>,
        form: SolverForm,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::Shape(format!("{n} rows but {} targets", y.len())));
        }
        if n < 2 {
            return Err(Error::InsufficientData(format!(
                "ridge needs 2 rows, got {n}"
            )));
        }
        if !(y.iter().any(|v| *v > 0.0) && y.iter().any(|v| *v < 0.0)) {
            return Err(Error::Degenerate("targets contain a single class".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in ridge inputs".into()));
        }
        let sw: Vec<f64> = match sample_weights {
            Some(w) if w.len() != n => {
                return Err(Error::Shape(format!(
                    "{n} rows but {} sample weights",
                    w.len()
                )))
            }
            Some(w) => {
                if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().all(|v| *v == 0.0) {
                    return Err(Error::Data(
                        "sample weights must be finite, >= 0, not all 0".into(),
                    ));
                }
                w.to_vec()
            }
            None => vec![1.0; n],
        };
        let total: f64 = sw.iter().sum();
        let mut x_mean = DVector::zeros(p);
        for (i, &w) in sw.iter().enumerate() {
            x_mean.axpy(w / total, &x.row(i).transpose(), 1.0);
        }
        let y_mean = sw.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / total;

        let mut z = x.clone();
        for (i, &w) in sw.iter().enumerate() {
            let s = w.sqrt();
            let mut row = z.row_mut(i);
            for (v, m) in row.iter_mut().zip(x_mean.iter()) {
                *v = (*v - m) * s;
            }
        }
        let t = DVector::from_iterator(n, sw.iter().zip(y).map(|(w, v)| w.sqrt() * (v - y_mean)));

        let dual = match form {
            SolverForm::Auto => p > n,
            SolverForm::Primal => false,
            SolverForm::Dual => true,
        };
        let gram = if dual {
            &z * z.transpose()
        } else {
            z.transpose() * &z
        };
        Ok(RidgeProblem {
            z,
            t,
            x_mean,
            y_mean,
            gram,
            dual,
        })
    }

    pub fn is_dual(&self) -> bool {
        self.dual
    }

    pub fn solve(&self, alpha: f64) -> Result<RidgeSolution> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!(
                "ridge parameter {alpha} must be > 0"
            )));
        }
        let mut a = self.gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += alpha;
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::Degenerate("ridge system is not positive definite".into()))?;
        let w = if self.dual {
            let c = chol.solve(&self.t);
            self.z.transpose() * c
        } else {
            let rhs = self.z.transpose() * &self.t;
            chol.solve(&rhs)
        };
        let intercept = self.y_mean - self.x_mean.dot(&w);
        Ok(RidgeSolution {
            weights: w.iter().copied().collect(),
            intercept,
        })
    }
}

/// Solves one ridge problem; see the module docs for the exact system.
pub fn fit_ridge(
    x: &DMatrix<f64>,
    y: &[f64],
    alpha: f64,
    sample_weights: Option<&[f64]>,
    form: SolverForm,
) -> Result<RidgeSolution> {
    RidgeProblem::new(x, y, sample_weights, form)?.solve(alpha)
}

/// Per-row weights `N_max / N_c`: proportional to `1/N_c` and equal to the
/// multiplicity obtained by duplicating every class up to the largest one.
pub fn balanced_sample_weights(labels: &[Label]) -> Vec<f64> {
    let counts = class_counts(labels);
    let max = counts.iter().copied().max().unwrap_or(0) as f64;
    labels
        .iter()
        .map(|l| max / counts[l.index()] as f64)
        .collect()
}

/// Probability of drawing each row when every class is equally likely:
/// `(1/N_c) / (number of classes present)`.
pub fn balanced_selection_probabilities(labels: &[Label]) -> Vec<f64> {
    let counts = class_counts(labels);
    let present = counts.iter().filter(|c| **c > 0).count() as f64;
    labels
        .iter()
        .map(|l| 1.0 / (counts[l.index()] as f64 * present))
        .collect()
}

/// Draws `draws` row indices with replacement using the balanced selection
/// probabilities, and returns how often each row was drawn.
pub fn resample_balanced(labels: &[Label], draws: usize, seed: u64) -> Result<Vec<usize>> {
    let probs = balanced_selection_probabilities(labels);
    let dist =
        WeightedIndex::new(&probs).map_err(|e| Error::Data(format!("cannot resample: {e}")))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; labels.len()];
    for _ in 0..draws {
        counts[dist.sample(&mut rng)] += 1;
    }
    Ok(counts)
}

pub fn class_counts(labels: &[Label]) -> [usize; 2] {
    let mut c = [0usize; 2];
    for l in labels {
        c[l.index()] += 1;
    }
    c
}

/// How training rows are re-weighted to counter class imbalance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassBalance {
    None,
    /// Deterministic weights `N_max / N_c`.
    #[default]
    Weighted,
    /// Seeded resampling with replacement; draw counts become row weights.
    Resample {
        seed: u64,
    },
}

/// Normalized design matrix of `rows × cols` taken from `features`.
pub fn normalized_design(
    features: &FeatureMatrix,
    rows: &[usize],
    cols: &[usize],
    normalizer: &Normalizer,
) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        let c = cols[j];
        normalizer.apply_value(c, features.row(rows[i])[c])
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    /// One weight per active column, in ascending column order.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub mask: Vec<bool>,
    pub normalizer: Normalizer,
    /// Seed of the kernel bank the features came from.
    pub bank_seed: u64,
}

impl RidgeModel {
    /// Fits on `rows` of raw `features`, learning the normalizer from the
    /// same rows. `mask` defaults to all columns.
    pub fn fit(
        features: &FeatureMatrix,
        rows: &[usize],
        mask: Option<Vec<bool>>,
        alpha: f64,
        balance: ClassBalance,
        bank_seed: u64,
    ) -> Result<RidgeModel> {
        let normalizer = fit_normalizer(features, rows)?;
        Self::fit_with_normalizer(features, rows, normalizer, mask, alpha, balance, bank_seed)
    }

    pub fn fit_with_normalizer(
        features: &FeatureMatrix,
        rows: &[usize],
        normalizer: Normalizer,
        mask: Option<Vec<bool>>,
        alpha: f64,
        balance: ClassBalance,
        bank_seed: u64,
    ) -> Result<RidgeModel> {
        let mask = mask.unwrap_or_else(|| vec![true; features.cols]);
        if mask.len() != features.cols {
            return Err(Error::Shape(format!(
                "mask of {} entries for {} columns",
                mask.len(),
                features.cols
            )));
        }
        let cols = active_columns(&mask);
        if cols.is_empty() {
            return Err(Error::Degenerate("mask has no active features".into()));
        }
        let labels: Vec<Label> = rows.iter().map(|&r| features.meta[r].label()).collect();
        let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
        let weights = match balance {
            ClassBalance::None => None,
            ClassBalance::Weighted => Some(balanced_sample_weights(&labels)),
            ClassBalance::Resample { seed } => Some(
                resample_balanced(&labels, labels.len(), seed)?
                    .into_iter()
                    .map(|c| c as f64)
                    .collect(),
            ),
        };
        let x = normalized_design(features, rows, &cols, &normalizer);
        let sol = fit_ridge(&x, &y, alpha, weights.as_deref(), SolverForm::Auto)?;
        Ok(RidgeModel {
            weights: sol.weights,
            intercept: sol.intercept,
            alpha,
            mask,
            normalizer,
            bank_seed,
        })
    }

    pub fn active_columns(&self) -> Vec<usize> {
        active_columns(&self.mask)
    }

    pub fn num_active(&self) -> usize {
        self.weights.len()
    }

    /// `x_active · w + b` for every row of raw (unnormalized) features.
    pub fn decision_scores(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..features.rows).collect();
        self.decision_scores_rows(features, &all)
    }

    /// Scores only the listed rows, in the given order.
    pub fn decision_scores_rows(
        &self,
        features: &FeatureMatrix,
        rows: &[usize],
    ) -> Result<Vec<f64>> {
        if features.cols != self.mask.len() {
            return Err(Error::Shape(format!(
                "model expects {} feature columns, got {}",
                self.mask.len(),
                features.cols
            )));
        }
        let cols = self.active_columns();
        Ok(rows
            .par_iter()
            .map(|&r| {
                let row = features.row(r);
                cols.iter()
                    .zip(&self.weights)
                    .map(|(&c, w)| w * self.normalizer.apply_value(c, row[c]))
                    .sum::<f64>()
                    + self.intercept
            })
            .collect())
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<Label>> {
        Ok(self
            .decision_scores(features)?
            .into_iter()
            .map(Label::from_score)
            .collect())
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "{MODEL_MAGIC}")?;
        writeln!(sink, "schema_version={MODEL_SCHEMA_VERSION}")?;
        writeln!(sink, "alpha={:.16e}", self.alpha)?;
        writeln!(sink, "bank_seed={}", self.bank_seed)?;
        writeln!(sink, "label_encoding=HC:-1,PD:+1")?;
        writeln!(sink, "features={}", self.mask.len())?;
        writeln!(sink, "active={}", self.num_active())?;
        writeln!(sink, "mask_rle={}", encode_mask(&self.mask))?;
        writeln!(sink, "intercept={:.16e}", self.intercept)?;
        writeln!(sink, "normalizer_mean={}", join_f64(&self.normalizer.mean))?;
        writeln!(sink, "normalizer_std={}", join_f64(&self.normalizer.std))?;
        writeln!(sink, "weights={}", join_f64(&self.weights))?;
        Ok(())
    }

    pub fn read<R: BufRead>(source: R) -> Result<RidgeModel> {
        let mut fields = std::collections::BTreeMap::new();
        let mut lines = source.lines();
        let first = lines.next().transpose()?.unwrap_or_default();
        if first.trim_end() != MODEL_MAGIC {
            return Err(Error::format(1, format!("expected `{MODEL_MAGIC}`")));
        }
        for (i, line) in lines.enumerate() {
            let line = line?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(i + 2, "expected key=value"))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<&str> {
            fields
                .get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Integrity(format!("model file is missing `{k}`")))
        };
        let version: u32 = get("schema_version")?
            .parse()
            .map_err(|_| Error::Schema("schema_version is not an integer".into()))?;
        if version != MODEL_SCHEMA_VERSION {
            return Err(Error::Incompatible {
                found: version,
                supported: MODEL_SCHEMA_VERSION,
            });
        }
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Schema(format!("`{k}` is not a number")))
        };
        let features: usize = get("features")?
            .parse()
            .map_err(|_| Error::Schema("`features` is not an integer".into()))?;
        let mask = decode_mask(get("mask_rle")?)?;
        let weights = split_f64(get("weights")?)?;
        let mean = split_f64(get("normalizer_mean")?)?;
        let std = split_f64(get("normalizer_std")?)?;
        let active = mask.iter().filter(|m| **m).count();
        if mask.len() != features || mean.len() != features || std.len() != features {
            return Err(Error::Integrity("model column counts disagree".into()));
        }
        if weights.len() != active {
            return Err(Error::Integrity(format!(
                "{} weights for {active} active features",
                weights.len()
            )));
        }
        Ok(RidgeModel {
            weights,
            intercept: num("intercept")?,
            alpha: num("alpha")?,
            mask,
            normalizer: Normalizer { mean, std },
            bank_seed: get("bank_seed")?
                .parse()
                .map_err(|_| Error::Schema("`bank_seed` is not an integer".into()))?,
        })
    }
}

/// Logistic map of a decision value onto `[0, 1]`.
pub fn probability(d: f64) -> f64 {
    1.0 / (1.0 + (-d).exp())
}

pub fn active_columns(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, m)| m.then_some(i))
        .collect()
}

/// Run-length encoding `1x120,0x5,...` (value × count).
pub fn encode_mask(mask: &[bool]) -> String {
    let mut out = Vec::new();
    let mut iter = mask.iter().peekable();
    while let Some(&v) = iter.next() {
        let mut n = 1;
        while iter.peek() == Some(&&v) {
            iter.next();
            n += 1;
        }
        out.push(format!("{}x{n}", u8::from(v)));
    }
    out.join(",")
}

pub fn decode_mask(text: &str) -> Result<Vec<bool>> {
    let mut mask = Vec::new();
    if text.is_empty() {
        return Ok(mask);
    }
    for run in text.split(',') {
        let (v, n) = run
            .split_once('x')
            .ok_or_else(|| Error::Schema(format!("bad mask run `{run}`")))?;
        let n: usize = n
            .parse()
            .map_err(|_| Error::Schema(format!("bad mask run `{run}`")))?;
        let v = match v {
            "0" => false,
            "1" => true,
            _ => return Err(Error::Schema(format!("bad mask run `{run}`"))),
        };
        mask.extend(std::iter::repeat_n(v, n));
    }
    Ok(mask)
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn split_f64(text: &str) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Schema(format!("`{s}` is not a number")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Condition, Task};
    use crate::rocket::RowMeta;
    use proptest::prelude::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn hand_solved_one_feature() {
        let x = mat(2, 1, &[1.0, -1.0]);
        for form in [SolverForm::Primal, SolverForm::Dual] {
            let s = fit_ridge(&x, &[1.0, -1.0], 1.0, None, form).unwrap();
            assert!((s.weights[0] - 2.0 / 3.0).abs() < 1e-12);
            assert!(s.intercept.abs() < 1e-12);
        }
    }

    #[test]
    fn heavy_regularization_shrinks_to_intercept() {
        let x = mat(4, 2, &[1.0, 2.0, -1.0, 0.5, 0.3, -2.0, 2.0, 1.0]);
        let y = [1.0, -1.0, -1.0, 1.0];
        let s = fit_ridge(&x, &y, 1e12, None, SolverForm::Auto).unwrap();
        assert!(s.weights.iter().all(|w| w.abs() < 1e-10));
        assert!(s.intercept.abs() < 1e-9);
    }

    #[test]
    fn half_weight_duplicates_equal_single_rows() {
        let x = mat(3, 2, &[1.0, 0.0, 0.5, -1.0, -2.0, 1.0]);
        let y = [1.0, 1.0, -1.0];
        let single = fit_ridge(&x, &y, 0.7, None, SolverForm::Primal).unwrap();
        let dup = mat(4, 2, &[1.0, 0.0, 0.5, -1.0, -2.0, 1.0, -2.0, 1.0]);
        let s = fit_ridge(
            &dup,
            &[1.0, 1.0, -1.0, -1.0],
            0.7,
            Some(&[1.0, 1.0, 0.5, 0.5]),
            SolverForm::Primal,
        )
        .unwrap();
        for (a, b) in single.weights.iter().zip(&s.weights) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((single.intercept - s.intercept).abs() < 1e-9);
    }

    #[test]
    fn single_class_rejected() {
        let x = mat(2, 1, &[1.0, 2.0]);
        assert!(matches!(
            fit_ridge(&x, &[1.0, 1.0], 1.0, None, SolverForm::Auto),
            Err(Error::Degenerate(_))
        ));
        let bad = mat(2, 1, &[1.0, f64::NAN]);
        assert!(matches!(
            fit_ridge(&bad, &[1.0, -1.0], 1.0, None, SolverForm::Auto),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn logistic_probability() {
        assert_eq!(probability(0.0), 0.5);
        assert!((probability(3f64.ln()) - 0.75).abs() < 1e-15);
        assert_eq!(probability(f64::INFINITY), 1.0);
        assert!(probability(-800.0) < 1e-300);
        assert!(probability(1.0) > probability(0.5));
    }

    #[test]
    fn balanced_weights_arithmetic() {
        let labels = [Label::Hc, Label::Pd, Label::Pd, Label::Pd];
        assert_eq!(balanced_sample_weights(&labels), vec![3.0, 1.0, 1.0, 1.0]);
        let p = balanced_selection_probabilities(&labels);
        assert_eq!(p[0], 0.5);
        assert!((p[1..].iter().sum::<f64>() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mask_rle_round_trip() {
        let m = vec![true, true, false, true, false, false, false];
        assert_eq!(encode_mask(&m), "1x2,0x1,1x1,0x3");
        assert_eq!(decode_mask(&encode_mask(&m)).unwrap(), m);
        assert!(decode_mask("2x3").is_err());
    }

    fn toy_features(n: usize, p: usize, seed: u64) -> FeatureMatrix {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let meta: Vec<RowMeta> = (0..n)
            .map(|i| RowMeta {
                subject_id: format!("s{i}"),
                condition: if i % 3 == 0 {
                    Condition::Hc
                } else {
                    Condition::PdOn
                },
                task: Task::Prosaccade,
                session_id: "x".into(),
                trial_index: i,
            })
            .collect();
        let data = (0..n * p)
            .map(|k| {
                let shift = if meta[k / p].label() == Label::Pd {
                    1.5
                } else {
                    -1.5
                };
                rng.random::<f64>() * 2.0 - 1.0 + if k % p == 0 { shift } else { 0.0 }
            })
            .collect();
        FeatureMatrix::new(p, data, meta).unwrap()
    }

    #[test]
    fn separable_training_data_fits_perfectly() {
        let f = toy_features(30, 5, 2);
        let rows: Vec<usize> = (0..30).collect();
        let m = RidgeModel::fit(&f, &rows, None, 1.0, ClassBalance::Weighted, 0).unwrap();
        assert_eq!(m.predict(&f).unwrap(), f.labels());
    }

    #[test]
    fn zero_weight_model_scores_intercept() {
        let f = toy_features(6, 3, 1);
        let rows: Vec<usize> = (0..6).collect();
        let mut m = RidgeModel::fit(&f, &rows, None, 1.0, ClassBalance::None, 0).unwrap();
        m.weights.iter_mut().for_each(|w| *w = 0.0);
        assert!(m
            .decision_scores(&f)
            .unwrap()
            .iter()
            .all(|d| *d == m.intercept));
    }

    #[test]
    fn masking_zero_weight_column_keeps_scores() {
        let f = toy_features(12, 4, 3);
        let rows: Vec<usize> = (0..12).collect();
        let mut m = RidgeModel::fit(&f, &rows, None, 1.0, ClassBalance::None, 0).unwrap();
        m.weights[2] = 0.0;
        let before = m.decision_scores(&f).unwrap();
        let mut masked = m.clone();
        masked.mask[2] = false;
        masked.weights.remove(2);
        assert_eq!(masked.decision_scores(&f).unwrap(), before);
    }

    #[test]
    fn shape_mismatch_reported() {
        let f = toy_features(6, 3, 1);
        let rows: Vec<usize> = (0..6).collect();
        let m = RidgeModel::fit(&f, &rows, None, 1.0, ClassBalance::None, 0).unwrap();
        let g = toy_features(6, 4, 1);
        assert!(matches!(m.decision_scores(&g), Err(Error::Shape(_))));
    }

    #[test]
    fn model_file_round_trips() {
        let f = toy_features(10, 4, 5);
        let rows: Vec<usize> = (0..10).collect();
        let mut mask = vec![true; 4];
        mask[1] = false;
        let m = RidgeModel::fit(&f, &rows, Some(mask), 3.0, ClassBalance::Weighted, 42).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let back = RidgeModel::read(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(back, m);
        let text = String::from_utf8(buf)
            .unwrap()
            .replace("schema_version=1", "schema_version=7");
        assert!(matches!(
            RidgeModel::read(std::io::Cursor::new(text)),
            Err(Error::Incompatible { found: 7, .. })
        ));
    }

    #[test]
    fn norm_shrinks_with_alpha() {
        let f = toy_features(25, 6, 9);
        let rows: Vec<usize> = (0..25).collect();
        let norms: Vec<f64> = [1e-2, 1.0, 1e2, 1e4]
            .iter()
            .map(|&a| {
                let m = RidgeModel::fit(&f, &rows, None, a, ClassBalance::None, 0).unwrap();
                m.weights.iter().map(|w| w * w).sum()
            })
            .collect();
        assert!(norms.windows(2).all(|w| w[1] <= w[0]), "{norms:?}");
    }

    #[test]
    fn class_weights_equal_duplication() {
        // 4 HC rows, 8 PD rows: weights 2 on HC rows equal duplicating them
        let f = toy_features(12, 3, 4);
        let mut hc: Vec<usize> = Vec::new();
        let mut pd: Vec<usize> = Vec::new();
        for (i, m) in f.meta.iter().enumerate() {
            if m.label() == Label::Hc {
                hc.push(i)
            } else {
                pd.push(i)
            }
        }
        assert_eq!((hc.len(), pd.len()), (4, 8));
        let rows: Vec<usize> = (0..12).collect();
        let norm = fit_normalizer(&f, &rows).unwrap();
        let weighted = RidgeModel::fit_with_normalizer(
            &f,
            &rows,
            norm.clone(),
            None,
            2.0,
            ClassBalance::Weighted,
            0,
        )
        .unwrap();
        let dup_rows: Vec<usize> = rows.iter().copied().chain(hc.iter().copied()).collect();
        let dup =
            RidgeModel::fit_with_normalizer(&f, &dup_rows, norm, None, 2.0, ClassBalance::None, 0)
                .unwrap();
        for (a, b) in weighted.weights.iter().zip(&dup.weights) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn resampling_is_seeded() {
        let labels = [Label::Hc, Label::Pd, Label::Pd, Label::Pd, Label::Pd];
        let a = resample_balanced(&labels, 1000, 3).unwrap();
        assert_eq!(a, resample_balanced(&labels, 1000, 3).unwrap());
        assert_eq!(a.iter().sum::<usize>(), 1000);
        assert!((400..600).contains(&a[0]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn column_permutation_permutes_weights(seed in 0u64..1000, shift in 1usize..5) {
            let f = toy_features(14, 5, seed);
            let rows: Vec<usize> = (0..14).collect();
            let perm: Vec<usize> = (0..5).map(|j| (j + shift) % 5).collect();
            let g = f.select_columns(&perm);
            let m = RidgeModel::fit(&f, &rows, None, 0.5, ClassBalance::Weighted, 0).unwrap();
            let mp = RidgeModel::fit(&g, &rows, None, 0.5, ClassBalance::Weighted, 0).unwrap();
            for (j, &src) in perm.iter().enumerate() {
                prop_assert!((mp.weights[j] - m.weights[src]).abs() < 1e-9);
            }
            let d = m.decision_scores(&f).unwrap();
            let dp = mp.decision_scores(&g).unwrap();
            for (a, b) in d.iter().zip(&dp) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
