//! Experiment orchestration: splits, folds, metrics, seeded experiment runs,
//! hyper-parameter grids, cutoff sweeps and report tables.

mod experiment;
mod metrics;
mod report;
mod split;

pub use experiment::{
    attribute_report, bank_for, cutoff_sweep, evaluate, grid_search, leakage_audit, predict_rows,
    run_experiment, train_model, CutoffRow, Evaluation, ExperimentReport, GridTable, GroupAccuracy,
    LeakageAudit, ModelConfig, Prediction, SeedRun, SummaryRow, TrainedModel, DEFAULT_SEEDS,
};
pub use metrics::{
    aggregate_subjects, compute_metrics, majority_baseline_uf1, majority_fraction, mean_std,
    soft_vote, ClassScores, Metrics, SubjectScore, DEFAULT_THRESHOLD,
};
pub use report::{
    attribute_table, cutoff_table, experiment_long_records, grid_table, predictions_from_table,
    predictions_table, seed_table, subject_table, summary_table, write_long_csv, LongRecord, Table,
};
pub use split::{
    make_folds, make_folds_from, make_split, make_split_from, subject_summaries, Part, SplitPlan,
    SplitRatios, SubjectSummary,
};

/// Derives an independent seed for a named random stream from a base seed
/// (FNV-1a over the name, mixed with SplitMix64).
pub fn derive_seed(base: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
