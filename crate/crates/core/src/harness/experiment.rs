use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::derive_seed;
use super::metrics::{
    aggregate_subjects, compute_metrics, majority_baseline_uf1, majority_fraction, mean_std,
    Metrics, SubjectScore, DEFAULT_THRESHOLD,
};
use super::split::{make_split, Part, SplitPlan, SplitRatios};
use crate::data::{Condition, Label, RawSession, Task, TrialDataset, NUM_CHANNELS, TRIAL_LEN};
use crate::detach::{run_sfd, DetachmentTrace, SfdConfig};
use crate::error::{Error, Result};
use crate::preprocess::{preprocess_pipeline, FilterSpec};
use crate::ridge::{
    balanced_sample_weights, normalized_design, probability, ClassBalance, RidgeModel,
    RidgeProblem, SolverForm, DEFAULT_ALPHA,
};
use crate::rocket::{
    fit_normalizer, generate_kernels, transform, FeatureMatrix, KernelBank, RowMeta,
    DEFAULT_NUM_KERNELS,
};

pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_kernels: usize,
    pub alpha: f64,
    /// For `Resample`, the seed is replaced by the run's sampling stream.
    pub balance: ClassBalance,
    pub threshold: f64,
    pub sfd: Option<SfdConfig>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            num_kernels: DEFAULT_NUM_KERNELS,
            alpha: DEFAULT_ALPHA,
            balance: ClassBalance::Weighted,
            threshold: DEFAULT_THRESHOLD,
            sfd: None,
        }
    }
}

impl ModelConfig {
    fn balance_for(&self, seed: u64) -> ClassBalance {
        match self.balance {
            ClassBalance::Resample { .. } => ClassBalance::Resample {
                seed: derive_seed(seed, "sampling"),
            },
            other => other,
        }
    }
}

pub struct TrainedModel {
    pub model: RidgeModel,
    pub trace: Option<DetachmentTrace>,
}

/// Fits the classifier on `train_rows`; with SFD configured, `val_rows`
/// drive the detachment and model selection.
pub fn train_model(
    features: &FeatureMatrix,
    train_rows: &[usize],
    val_rows: &[usize],
    config: &ModelConfig,
    bank_seed: u64,
    run_seed: u64,
) -> Result<TrainedModel> {
    let balance = config.balance_for(run_seed);
    match &config.sfd {
        None => Ok(TrainedModel {
            model: RidgeModel::fit(features, train_rows, None, config.alpha, balance, bank_seed)
                .map_err(|e| e.in_stage("train", "ridge fit"))?,
            trace: None,
        }),
        Some(sfd) => {
            let sfd = SfdConfig {
                alpha: config.alpha,
                balance,
                ..sfd.clone()
            };
            let (trace, model) = run_sfd(features, train_rows, val_rows, &sfd, bank_seed)
                .map_err(|e| e.in_stage("detach", "feature detachment"))?;
            Ok(TrainedModel {
                model,
                trace: Some(trace),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub row: usize,
    pub meta: RowMeta,
    pub decision: f64,
    pub probability: f64,
    pub predicted: Label,
}

pub fn predict_rows(
    model: &RidgeModel,
    features: &FeatureMatrix,
    rows: &[usize],
) -> Result<Vec<Prediction>> {
    let scores = model.decision_scores_rows(features, rows)?;
    Ok(rows
        .iter()
        .zip(scores)
        .map(|(&r, d)| Prediction {
            row: r,
            meta: features.meta[r].clone(),
            decision: d,
            probability: probability(d),
            predicted: Label::from_score(d),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub trial: Metrics,
    pub subject: Metrics,
    pub subjects: Vec<SubjectScore>,
}

/// Trial metrics from the decision signs, subject metrics from soft voting.
pub fn evaluate(predictions: &[Prediction], threshold: f64) -> Result<Evaluation> {
    let preds: Vec<Label> = predictions.iter().map(|p| p.predicted).collect();
    let labels: Vec<Label> = predictions.iter().map(|p| p.meta.label()).collect();
    let trial = compute_metrics(&preds, &labels)?;
    let triples: Vec<(&str, Label, f64)> = predictions
        .iter()
        .map(|p| (p.meta.subject_id.as_str(), p.meta.label(), p.probability))
        .collect();
    let subjects = aggregate_subjects(&triples, threshold)?;
    let subject = compute_metrics(
        &subjects.iter().map(|s| s.prediction).collect::<Vec<_>>(),
        &subjects.iter().map(|s| s.label).collect::<Vec<_>>(),
    )?;
    Ok(Evaluation {
        trial,
        subject,
        subjects,
    })
}

pub struct SeedRun {
    pub seed: u64,
    pub bank_seed: u64,
    pub model: RidgeModel,
    pub trace: Option<DetachmentTrace>,
    pub predictions: Vec<Prediction>,
    pub eval: Evaluation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub mean: f64,
    pub std: f64,
}

pub struct ExperimentReport {
    pub config: ModelConfig,
    pub split_seed: u64,
    pub runs: Vec<SeedRun>,
}

impl ExperimentReport {
    fn collect(&self, f: impl Fn(&SeedRun) -> f64) -> (f64, f64) {
        mean_std(&self.runs.iter().map(f).collect::<Vec<_>>())
    }

    /// Mean ± std across seeds of the headline metrics.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut rows: Vec<(&'static str, Box<dyn Fn(&SeedRun) -> f64>)> = vec![
            ("trial_accuracy", Box::new(|r| r.eval.trial.accuracy)),
            ("trial_uf1", Box::new(|r| r.eval.trial.uf1)),
            ("subject_accuracy", Box::new(|r| r.eval.subject.accuracy)),
            ("subject_uf1", Box::new(|r| r.eval.subject.uf1)),
        ];
        if self.config.sfd.is_some() {
            rows.push((
                "retained_fraction",
                Box::new(|r| {
                    let m = &r.model.mask;
                    m.iter().filter(|x| **x).count() as f64 / m.len() as f64
                }),
            ));
        }
        rows.into_iter()
            .map(|(metric, f)| {
                let (mean, std) = self.collect(f);
                SummaryRow { metric, mean, std }
            })
            .collect()
    }

    pub fn metric(&self, name: &str) -> Option<SummaryRow> {
        self.summary().into_iter().find(|r| r.metric == name)
    }
}

fn check_rows(dataset: &TrialDataset, rows: &[usize], part: Part) -> Result<()> {
    let mut seen = [false; 2];
    for &r in rows {
        seen[dataset.trials()[r].label().index()] = true;
    }
    if seen != [true, true] {
        return Err(Error::Split(format!(
            "{part} split does not contain both classes"
        )));
    }
    Ok(())
}

pub fn bank_for(config: &ModelConfig, seed: u64) -> Result<KernelBank> {
    generate_kernels(
        config.num_kernels,
        TRIAL_LEN,
        NUM_CHANNELS,
        derive_seed(seed, "kernels"),
    )
}

/// For every seed: draw a kernel bank, transform, fit on train (with SFD on
/// train/val when configured) and score the test subjects. Seeds run one
/// after another; each stage inside a run is parallel.
pub fn run_experiment(
    dataset: &TrialDataset,
    plan: &SplitPlan,
    config: &ModelConfig,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    plan.check_covers(dataset)?;
    let train = plan.dataset_rows(dataset, Part::Train);
    let val = plan.dataset_rows(dataset, Part::Val);
    let test = plan.dataset_rows(dataset, Part::Test);
    check_rows(dataset, &train, Part::Train)?;
    if test.is_empty() {
        return Err(Error::Split("test split is empty".into()));
    }
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let bank = bank_for(config, seed)?;
        let features = transform(dataset, &bank).map_err(|e| e.in_stage("transform", ""))?;
        let trained = train_model(&features, &train, &val, config, bank.seed, seed)?;
        let predictions = predict_rows(&trained.model, &features, &test)?;
        let eval = evaluate(&predictions, config.threshold)?;
        runs.push(SeedRun {
            seed,
            bank_seed: bank.seed,
            model: trained.model,
            trace: trained.trace,
            predictions,
            eval,
        });
    }
    Ok(ExperimentReport {
        config: config.clone(),
        split_seed: plan.seed,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub kernel_counts: Vec<usize>,
    pub alphas: Vec<f64>,
    /// `cells[k][a]`: mean over folds of the validation trial uF1.
    pub cells: Vec<Vec<f64>>,
    pub per_fold: Vec<Vec<Vec<f64>>>,
}

impl GridTable {
    pub fn best(&self) -> (usize, f64, f64) {
        let mut best = (self.kernel_counts[0], self.alphas[0], f64::NEG_INFINITY);
        for (k, row) in self.cells.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                if *v > best.2 {
                    best = (self.kernel_counts[k], self.alphas[a], *v);
                }
            }
        }
        best
    }
}

/// Cross-validated uF1 over kernel counts × ridge parameters. Every fold
/// factors its Gram matrix once and solves it for each α.
pub fn grid_search(
    dataset: &TrialDataset,
    folds: &[SplitPlan],
    kernel_counts: &[usize],
    alphas: &[f64],
    seed: u64,
    balance: ClassBalance,
) -> Result<GridTable> {
    if folds.is_empty() || kernel_counts.is_empty() || alphas.is_empty() {
        return Err(Error::Config(
            "grid search needs folds, kernel counts and alphas".into(),
        ));
    }
    let mut cells = Vec::new();
    let mut per_fold = Vec::new();
    for &k in kernel_counts {
        let config = ModelConfig {
            num_kernels: k,
            ..ModelConfig::default()
        };
        let bank = bank_for(&config, seed)?;
        let features = transform(dataset, &bank)?;
        let mut fold_scores = Vec::new();
        for plan in folds {
            plan.check_covers(dataset)?;
            let train = plan.dataset_rows(dataset, Part::Train);
            let val = plan.dataset_rows(dataset, Part::Val);
            check_rows(dataset, &train, Part::Train)?;
            let normalizer = fit_normalizer(&features, &train)?;
            let cols: Vec<usize> = (0..features.cols).collect();
            let x = normalized_design(&features, &train, &cols, &normalizer);
            let labels: Vec<Label> = train.iter().map(|&r| features.meta[r].label()).collect();
            let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
            let w = match balance {
                ClassBalance::None => None,
                _ => Some(balanced_sample_weights(&labels)),
            };
            let problem = RidgeProblem::new(&x, &y, w.as_deref(), SolverForm::Auto)?;
            drop(x);
            let mut scores = Vec::new();
            for &alpha in alphas {
                let sol = problem.solve(alpha)?;
                let model = RidgeModel {
                    weights: sol.weights,
                    intercept: sol.intercept,
                    alpha,
                    mask: vec![true; features.cols],
                    normalizer: normalizer.clone(),
                    bank_seed: bank.seed,
                };
                let preds = predict_rows(&model, &features, &val)?;
                let labels: Vec<Label> = preds.iter().map(|p| p.meta.label()).collect();
                let predicted: Vec<Label> = preds.iter().map(|p| p.predicted).collect();
                scores.push(compute_metrics(&predicted, &labels)?.uf1);
            }
            fold_scores.push(scores);
        }
        cells.push(
            (0..alphas.len())
                .map(|a| fold_scores.iter().map(|f| f[a]).sum::<f64>() / fold_scores.len() as f64)
                .collect(),
        );
        per_fold.push(fold_scores);
    }
    Ok(GridTable {
        kernel_counts: kernel_counts.to_vec(),
        alphas: alphas.to_vec(),
        cells,
        per_fold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffRow {
    /// 0 = unfiltered.
    pub cutoff_hz: f64,
    pub trial_uf1: (f64, f64),
    pub subject_uf1: (f64, f64),
    pub trial_accuracy: (f64, f64),
    pub subject_accuracy: (f64, f64),
    pub baseline_trial_uf1: f64,
    pub baseline_subject_uf1: f64,
}

/// Re-runs preprocessing at every cutoff (0 skips the filter) and evaluates
/// the classifier on one fixed subject split.
#[allow(clippy::too_many_arguments)]
pub fn cutoff_sweep(
    sessions: &[RawSession],
    cutoffs: &[f64],
    base_filter: FilterSpec,
    ratios: SplitRatios,
    split_seed: u64,
    config: &ModelConfig,
    seeds: &[u64],
) -> Result<Vec<CutoffRow>> {
    for &c in cutoffs {
        if c != 0.0 {
            FilterSpec {
                cutoff_hz: c,
                ..base_filter
            }
            .validate()?;
        }
    }
    let mut out = Vec::new();
    for &c in cutoffs {
        let filter = (c != 0.0).then_some(FilterSpec {
            cutoff_hz: c,
            ..base_filter
        });
        let (dataset, _) = preprocess_pipeline(sessions, filter)?;
        let plan = make_split(&dataset, ratios, split_seed)?;
        let report = run_experiment(&dataset, &plan, config, seeds)?;
        let first = &report.runs[0];
        let trial_labels: Vec<Label> = first.predictions.iter().map(|p| p.meta.label()).collect();
        let subject_labels: Vec<Label> = first.eval.subjects.iter().map(|s| s.label).collect();
        out.push(CutoffRow {
            cutoff_hz: c,
            trial_uf1: report.collect(|r| r.eval.trial.uf1),
            subject_uf1: report.collect(|r| r.eval.subject.uf1),
            trial_accuracy: report.collect(|r| r.eval.trial.accuracy),
            subject_accuracy: report.collect(|r| r.eval.subject.accuracy),
            baseline_trial_uf1: majority_baseline_uf1(majority_fraction(&trial_labels)),
            baseline_subject_uf1: majority_baseline_uf1(majority_fraction(&subject_labels)),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupAccuracy {
    pub group: &'static str,
    pub level: &'static str,
    /// Test trials in the group (the same for every seed).
    pub size: usize,
    pub per_seed: Vec<f64>,
    /// `None` when the group has no trials.
    pub mean_std: Option<(f64, f64)>,
}

/// Test accuracy by task (pro/anti) and by medication state among PD
/// trials, aggregated over seeds.
pub fn attribute_report(runs: &[SeedRun]) -> Vec<GroupAccuracy> {
    type Pred = fn(&RowMeta) -> bool;
    let groups: [(&'static str, &'static str, Pred); 4] = [
        ("task", "pro", |m| m.task == Task::Prosaccade),
        ("task", "anti", |m| m.task == Task::Antisaccade),
        ("medication", "ON", |m| m.condition == Condition::PdOn),
        ("medication", "OFF", |m| m.condition == Condition::PdOff),
    ];
    groups
        .iter()
        .map(|&(group, level, select)| {
            let mut size = 0;
            let per_seed: Vec<f64> = runs
                .iter()
                .filter_map(|r| {
                    let hits: Vec<bool> = r
                        .predictions
                        .iter()
                        .filter(|p| select(&p.meta))
                        .map(|p| p.predicted == p.meta.label())
                        .collect();
                    size = hits.len();
                    (!hits.is_empty())
                        .then(|| hits.iter().filter(|h| **h).count() as f64 / hits.len() as f64)
                })
                .collect();
            GroupAccuracy {
                group,
                level,
                size,
                mean_std: (!per_seed.is_empty()).then(|| mean_std(&per_seed)),
                per_seed,
            }
        })
        .collect()
}

pub struct LeakageAudit {
    pub identical: bool,
    pub model_bytes: Vec<u8>,
    pub perturbed_bytes: Vec<u8>,
}

/// Trains twice, the second time with every test trial replaced by noise,
/// and compares the serialized models byte for byte.
pub fn leakage_audit(
    dataset: &TrialDataset,
    plan: &SplitPlan,
    config: &ModelConfig,
    seed: u64,
) -> Result<LeakageAudit> {
    let test: std::collections::BTreeSet<usize> =
        plan.dataset_rows(dataset, Part::Test).into_iter().collect();
    if test.is_empty() {
        return Err(Error::Split("test split is empty".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "perturb"));
    let perturbed = dataset.map_values(|i, v| {
        if test.contains(&i) {
            v.iter_mut()
                .for_each(|x| *x = *x * -3.0 + rng.random_range(-50.0..50.0));
        }
    });
    let model_bytes = |d: &TrialDataset| -> Result<Vec<u8>> {
        let bank = bank_for(config, seed)?;
        let features = transform(d, &bank)?;
        let train = plan.dataset_rows(d, Part::Train);
        let val = plan.dataset_rows(d, Part::Val);
        let trained = train_model(&features, &train, &val, config, bank.seed, seed)?;
        let mut buf = Vec::new();
        trained.model.write(&mut buf)?;
        if let Some(t) = trained.trace {
            t.write(&mut buf)?;
        }
        Ok(buf)
    };
    let a = model_bytes(dataset)?;
    let b = model_bytes(&perturbed)?;
    Ok(LeakageAudit {
        identical: a == b,
        model_bytes: a,
        perturbed_bytes: b,
    })
}
