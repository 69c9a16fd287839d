use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ArgMatches;
use fixrocket::data::{load_dataset, save_dataset, TrialDataset, NUM_CHANNELS, TRIAL_LEN};
use fixrocket::detach::{export_active_features, Reduction, SfdConfig};
use fixrocket::harness::{
    attribute_report, attribute_table, cutoff_sweep, cutoff_table, derive_seed, evaluate,
    experiment_long_records, grid_search, grid_table, make_folds, make_split, predict_rows,
    predictions_from_table, predictions_table, run_experiment, seed_table, subject_table,
    summary_table, train_model, write_long_csv, ExperimentReport, LongRecord, ModelConfig, Part,
    SeedRun, SplitPlan, SplitRatios, Table,
};
use fixrocket::preprocess::{preprocess_pipeline, FilterSpec, Passes};
use fixrocket::ridge::{ClassBalance, RidgeModel};
use fixrocket::rocket::{generate_kernels, transform};
use fixrocket::synth::{generate_cohort, read_cohort_dir, write_cohort, CohortSpec};
use fixrocket::Error;

use crate::{
    Balance, Cli, Cmd, DetachArgs, EvaluateArgs, Failure, FilterArgs, GenerateArgs, GridArgs,
    ModelArgs, PreprocessArgs, RefitArg, ReportArgs, SfdArgs, SplitArgs, SweepArgs, TrainArgs,
    TransformArgs,
};

const MANIFEST_MAGIC: &str = "#fixrocket-manifest v1";
const EVAL_DIR: &str = "eval";
const EVAL_CONFIG: &str = "config.txt";
const DATASET_FILE: &str = "dataset.txt";
const MODEL_FILE: &str = "model.txt";
const DETACHED_MODEL_FILE: &str = "detached_model.txt";
const SPLIT_FILE: &str = "split.txt";

type Outcome = Result<(), Failure>;

pub fn run(cli: &Cli, matches: &ArgMatches) -> Outcome {
    let run_dir = if cli.out.is_absolute() {
        cli.out.clone()
    } else {
        cli.root.join(&cli.out)
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let ctx = Ctx {
        run_dir,
        seed: cli.seed,
    };
    match &cli.command {
        Cmd::Generate(a) => generate(&ctx, a)?,
        Cmd::Preprocess(a) => preprocess(&ctx, a)?,
        Cmd::Transform(a) => transform_cmd(&ctx, a)?,
        Cmd::Train(a) => train(&ctx, a)?,
        Cmd::Detach(a) => detach(&ctx, a)?,
        Cmd::Evaluate(a) => evaluate_cmd(&ctx, a)?,
        Cmd::GridSearch(a) => grid(&ctx, a)?,
        Cmd::SweepCutoff(a) => sweep(&ctx, a)?,
        Cmd::Report(a) => return report(&ctx, a),
    }
    write_manifest(&ctx, name, sub)
}

struct Ctx {
    run_dir: PathBuf,
    seed: u64,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.run_dir.join(name)
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> fixrocket::Result<()>) -> Outcome {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Outcome {
    write_file(path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| {
        Failure::Data(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )))
    })
}

/// Echoes every resolved option of the command, plus the derived stream
/// seeds, into `<run>/manifests/<command>.txt`.
fn write_manifest(ctx: &Ctx, name: &str, sub: &ArgMatches) -> Outcome {
    let mut s = String::new();
    let _ = writeln!(s, "{MANIFEST_MAGIC}");
    let _ = writeln!(s, "command={name}");
    let _ = writeln!(s, "version={}", env!("CARGO_PKG_VERSION"));
    for stream in ["cohort", "split", "kernels", "sampling", "folds"] {
        let _ = writeln!(s, "stream.{stream}={}", derive_seed(ctx.seed, stream));
    }
    let mut ids: Vec<&str> = sub
        .ids()
        .map(|i| i.as_str())
        .filter(|i| !i.starts_with(char::is_uppercase))
        .collect();
    ids.sort_unstable();
    for id in ids {
        if let Ok(Some(vals)) = sub.try_get_raw(id) {
            let v: Vec<String> = vals.map(|v| v.to_string_lossy().into_owned()).collect();
            let _ = writeln!(s, "{id}={}", v.join(","));
        }
    }
    write_text(&ctx.path(&format!("manifests/{name}.txt")), &s)
}

fn read_dataset(path: &Path) -> Result<TrialDataset, Failure> {
    Ok(load_dataset(open(path)?)?)
}

fn filter_spec(args: &FilterArgs, cutoff_hz: f64) -> Result<FilterSpec, Failure> {
    let passes: Passes = args
        .passes
        .parse()
        .map_err(|e: Error| Failure::Usage(e.to_string()))?;
    Ok(FilterSpec {
        order: args.order,
        cutoff_hz,
        sample_rate: args.sample_rate,
        passes,
    })
}

fn model_config(m: &ModelArgs, sfd: Option<&SfdArgs>) -> ModelConfig {
    ModelConfig {
        num_kernels: m.kernels,
        alpha: m.alpha,
        balance: m.balance.to_core(),
        threshold: m.threshold,
        sfd: sfd.map(|s| SfdConfig {
            drop_per_step: s.drop,
            tradeoff_c: s.tradeoff,
            min_features: s.min_features,
            alpha: m.alpha,
            balance: m.balance.to_core(),
            refit: s.refit.to_core(),
        }),
    }
}

/// An explicit `--split` file, else a plan drawn from the split stream.
fn resolve_split(ctx: &Ctx, ds: &TrialDataset, args: &SplitArgs) -> Result<SplitPlan, Failure> {
    let plan = match &args.split {
        Some(p) => SplitPlan::read(open(p)?)?,
        None => make_split(ds, args.ratios, derive_seed(ctx.seed, "split"))?,
    };
    plan.check_covers(ds)?;
    Ok(plan)
}

fn generate(ctx: &Ctx, a: &GenerateArgs) -> Outcome {
    let spec = CohortSpec {
        hc_subjects: a.hc_subjects.unwrap_or(a.subjects),
        pd_subjects: a.pd_subjects.unwrap_or(a.subjects),
        sessions_per_subject: a.sessions,
        trials_per_session: a.trials,
        white_noise: a.white_noise,
        drift: a.drift,
        tremor_hz: a.tremor_hz,
        tremor_amplitude: a.tremor_amplitude,
        signature_low_hz: a.signature_low_hz,
        signature_high_hz: a.signature_high_hz,
        band_noise: a.band_noise,
        signature_multiplier: a.signature_multiplier,
        idiosyncrasy: a.idiosyncrasy,
        amplitude_spread: a.amplitude_spread,
        seed: derive_seed(ctx.seed, "cohort"),
        ..CohortSpec::default()
    };
    let sessions = generate_cohort(&spec)?;
    let dir = ctx.path("cohort");
    fs::create_dir_all(&dir)?;
    let files = write_cohort(&dir, &spec, &sessions)?;
    println!("wrote {} sessions to {}", files.len(), dir.display());
    Ok(())
}

fn preprocess(ctx: &Ctx, a: &PreprocessArgs) -> Outcome {
    let sessions = read_cohort_dir(&a.cohort)?;
    let filter = if a.no_filter {
        None
    } else {
        Some(filter_spec(&a.filter, a.cutoff)?)
    };
    let (ds, report) = preprocess_pipeline(&sessions, filter)?;
    write_file(&ctx.path(DATASET_FILE), |w| save_dataset(&ds, w))?;
    write_text(&ctx.path("preprocess.txt"), &report.to_string())?;
    println!(
        "{} trials from {} of {} sessions ({} excluded)",
        ds.len(),
        report.sessions_kept,
        report.sessions_in,
        report.sanitize.excluded.len()
    );
    Ok(())
}

fn transform_cmd(ctx: &Ctx, a: &TransformArgs) -> Outcome {
    let ds = read_dataset(&a.dataset)?;
    let bank = generate_kernels(
        a.kernels,
        TRIAL_LEN,
        NUM_CHANNELS,
        derive_seed(ctx.seed, "kernels"),
    )?;
    write_file(&ctx.path("bank.txt"), |w| bank.write(w))?;
    let features = transform(&ds, &bank)?;
    if a.features {
        let ids: Vec<usize> = (0..features.cols).collect();
        write_file(&ctx.path("features.tsv"), |w| features.write_tsv(&ids, w))?;
    }
    let kv = format!(
        "rows={}\nfeatures={}\nkernels={}\nbank_seed={}\n",
        features.rows,
        features.cols,
        bank.len(),
        bank.seed
    );
    write_text(&ctx.path("transform.kv"), &kv)?;
    println!("{} rows x {} features", features.rows, features.cols);
    Ok(())
}

fn accuracy(
    model: &RidgeModel,
    f: &fixrocket::rocket::FeatureMatrix,
    rows: &[usize],
) -> fixrocket::Result<f64> {
    let p = predict_rows(model, f, rows)?;
    let hits = p.iter().filter(|p| p.predicted == p.meta.label()).count();
    Ok(hits as f64 / p.len().max(1) as f64)
}

/// Shared by `train` and `detach`: fit on the plan's training subjects.
fn fit_to_run(
    ctx: &Ctx,
    dataset: &Path,
    split: &SplitArgs,
    cfg: &ModelConfig,
) -> Result<(SplitPlan, fixrocket::harness::TrainedModel, String), Failure> {
    let ds = read_dataset(dataset)?;
    let plan = resolve_split(ctx, &ds, split)?;
    let bank = fixrocket::harness::bank_for(cfg, ctx.seed)?;
    let features = transform(&ds, &bank)?;
    let train = plan.dataset_rows(&ds, Part::Train);
    let val = plan.dataset_rows(&ds, Part::Val);
    let trained = train_model(&features, &train, &val, cfg, bank.seed, ctx.seed)?;
    write_file(&ctx.path(SPLIT_FILE), |w| plan.write(w))?;
    write_file(&ctx.path("bank.txt"), |w| bank.write(w))?;
    let mut kv = String::new();
    let _ = writeln!(kv, "train_trials={}", train.len());
    let _ = writeln!(kv, "val_trials={}", val.len());
    let _ = writeln!(
        kv,
        "train_accuracy={}",
        accuracy(&trained.model, &features, &train)?
    );
    if !val.is_empty() {
        let _ = writeln!(
            kv,
            "val_accuracy={}",
            accuracy(&trained.model, &features, &val)?
        );
    }
    let _ = writeln!(kv, "active_features={}", trained.model.num_active());
    if trained.trace.is_some() {
        let ids = export_active_features(&trained.model, &features)?.1;
        let mut s = String::from("feature\tkernel\tpooling\n");
        for c in ids {
            let _ = writeln!(
                s,
                "{c}\t{}\t{}",
                c / 2,
                if c % 2 == 0 { "ppv" } else { "max" }
            );
        }
        write_text(&ctx.path("active_features.tsv"), &s)?;
    }
    Ok((plan, trained, kv))
}

fn train(ctx: &Ctx, a: &TrainArgs) -> Outcome {
    let cfg = model_config(&a.model, None);
    let (_, trained, kv) = fit_to_run(ctx, &a.dataset, &a.split, &cfg)?;
    write_file(&ctx.path(MODEL_FILE), |w| trained.model.write(w))?;
    write_text(&ctx.path("train.kv"), &kv)?;
    print!("{kv}");
    Ok(())
}

fn detach(ctx: &Ctx, a: &DetachArgs) -> Outcome {
    let cfg = model_config(&a.model, Some(&a.sfd));
    let (_, trained, mut kv) = fit_to_run(ctx, &a.dataset, &a.split, &cfg)?;
    let trace = trained.trace.expect("detachment always yields a trace");
    let red = Reduction::of(&trained.model.mask);
    let _ = writeln!(kv, "selected_step={}", trace.selected);
    let _ = writeln!(
        kv,
        "retained_fraction={}",
        trace.selected_step().retained_fraction
    );
    let _ = writeln!(kv, "full_val_accuracy={}", trace.full_val_accuracy());
    let _ = writeln!(
        kv,
        "selected_val_accuracy={}",
        trace.selected_step().val_accuracy
    );
    let _ = writeln!(kv, "feature_reduction={}", red.feature_reduction());
    let _ = writeln!(kv, "kernel_reduction={}", red.kernel_reduction());
    write_file(&ctx.path(DETACHED_MODEL_FILE), |w| trained.model.write(w))?;
    write_file(&ctx.path("sfd_trace.tsv"), |w| trace.write(w))?;
    write_text(&ctx.path("detach.kv"), &kv)?;
    print!("{kv}");
    Ok(())
}

fn balance_name(b: ClassBalance) -> &'static str {
    match b {
        ClassBalance::None => "none",
        ClassBalance::Weighted => "weighted",
        ClassBalance::Resample { .. } => "resample",
    }
}

fn refit_name(r: fixrocket::detach::Refit) -> &'static str {
    match r {
        fixrocket::detach::Refit::Train => "train",
        fixrocket::detach::Refit::TrainVal => "train-val",
    }
}

fn eval_config_kv(report: &ExperimentReport, source: &str) -> String {
    let c = &report.config;
    let mut s = String::new();
    let _ = writeln!(s, "source={source}");
    let _ = writeln!(s, "kernels={}", c.num_kernels);
    let _ = writeln!(s, "alpha={}", c.alpha);
    let _ = writeln!(s, "balance={}", balance_name(c.balance));
    let _ = writeln!(s, "threshold={}", c.threshold);
    let _ = writeln!(s, "sfd={}", c.sfd.is_some());
    if let Some(f) = &c.sfd {
        let _ = writeln!(s, "drop={}", f.drop_per_step);
        let _ = writeln!(s, "tradeoff={}", f.tradeoff_c);
        let _ = writeln!(s, "min_features={}", f.min_features);
        let _ = writeln!(s, "refit={}", refit_name(f.refit));
    }
    let _ = writeln!(s, "split_seed={}", report.split_seed);
    let seeds: Vec<String> = report.runs.iter().map(|r| r.seed.to_string()).collect();
    let _ = writeln!(s, "seeds={}", seeds.join(","));
    s
}

fn metrics_kv(report: &ExperimentReport) -> String {
    let mut s = String::new();
    if let Some(r) = report.runs.first() {
        let _ = writeln!(s, "test_trials={}", r.eval.trial.n);
        let _ = writeln!(s, "test_subjects={}", r.eval.subject.n);
    }
    for row in report.summary() {
        let _ = writeln!(s, "{}.mean={}", row.metric, row.mean);
        let _ = writeln!(s, "{}.std={}", row.metric, row.std);
    }
    for r in &report.runs {
        for (k, v) in [
            ("trial_accuracy", r.eval.trial.accuracy),
            ("trial_uf1", r.eval.trial.uf1),
            ("subject_accuracy", r.eval.subject.accuracy),
            ("subject_uf1", r.eval.subject.uf1),
        ] {
            let _ = writeln!(s, "seed.{}.{k}={v}", r.seed);
        }
    }
    s
}

/// The derived tables of an evaluation, keyed by file name.
fn eval_tables(report: &ExperimentReport) -> fixrocket::Result<Vec<(String, String)>> {
    let mut out = vec![
        ("summary.tsv".to_string(), summary_table(report).to_tsv()),
        ("per_seed.tsv".to_string(), seed_table(report).to_tsv()),
        (
            "attributes.tsv".to_string(),
            attribute_table(&attribute_report(&report.runs)).to_tsv(),
        ),
        ("metrics.kv".to_string(), metrics_kv(report)),
    ];
    let mut long = Vec::new();
    write_long_csv(&experiment_long_records("evaluate", report), &mut long)?;
    out.push((
        "long.csv".to_string(),
        String::from_utf8_lossy(&long).into_owned(),
    ));
    for r in &report.runs {
        out.push((
            format!("seed-{}/subjects.tsv", r.seed),
            subject_table(r).to_tsv(),
        ));
    }
    Ok(out)
}

fn evaluate_cmd(ctx: &Ctx, a: &EvaluateArgs) -> Outcome {
    let ds = read_dataset(&a.dataset)?;
    let (report, source) = match &a.seeds {
        Some(seeds) => {
            if seeds.is_empty() {
                return Err(Failure::Usage("--seeds needs at least one seed".into()));
            }
            let cfg = model_config(&a.model_args, a.sfd.then_some(&a.sfd_args));
            let plan = resolve_split(ctx, &ds, &a.split)?;
            write_file(&ctx.path(SPLIT_FILE), |w| plan.write(w))?;
            (
                run_experiment(&ds, &plan, &cfg, seeds)?,
                "experiment".to_string(),
            )
        }
        None => {
            let path = match &a.model {
                Some(p) => p.clone(),
                None if ctx.path(DETACHED_MODEL_FILE).exists() => ctx.path(DETACHED_MODEL_FILE),
                None => ctx.path(MODEL_FILE),
            };
            let model = RidgeModel::read(open(&path)?)?;
            let split = if a.split.split.is_none() && ctx.path(SPLIT_FILE).exists() {
                SplitArgs {
                    split: Some(ctx.path(SPLIT_FILE)),
                    ..a.split.clone()
                }
            } else {
                a.split.clone()
            };
            let plan = resolve_split(ctx, &ds, &split)?;
            let bank = generate_kernels(
                model.mask.len() / 2,
                TRIAL_LEN,
                NUM_CHANNELS,
                model.bank_seed,
            )?;
            let features = transform(&ds, &bank)?;
            let test = plan.dataset_rows(&ds, Part::Test);
            if test.is_empty() {
                return Err(Error::Split("test split is empty".into()).into());
            }
            let predictions = predict_rows(&model, &features, &test)?;
            let eval = evaluate(&predictions, a.model_args.threshold)?;
            let detached = model.mask.iter().any(|m| !m);
            let mut cfg = model_config(&a.model_args, detached.then_some(&a.sfd_args));
            cfg.num_kernels = bank.len();
            cfg.alpha = model.alpha;
            let run = SeedRun {
                seed: ctx.seed,
                bank_seed: bank.seed,
                model,
                trace: None,
                predictions,
                eval,
            };
            let report = ExperimentReport {
                config: cfg,
                split_seed: plan.seed,
                runs: vec![run],
            };
            (report, path.display().to_string())
        }
    };
    let dir = ctx.path(EVAL_DIR);
    write_text(&dir.join(EVAL_CONFIG), &eval_config_kv(&report, &source))?;
    for r in &report.runs {
        let sd = dir.join(format!("seed-{}", r.seed));
        write_file(&sd.join(MODEL_FILE), |w| r.model.write(w))?;
        write_file(&sd.join("predictions.tsv"), |w| {
            predictions_table(r).write(w)
        })?;
        if let Some(t) = &r.trace {
            write_file(&sd.join("sfd_trace.tsv"), |w| t.write(w))?;
        }
    }
    for (name, text) in eval_tables(&report)? {
        write_text(&dir.join(name), &text)?;
    }
    print!("{}", summary_table(&report).to_tsv());
    Ok(())
}

fn kv_map(text: &str) -> Result<std::collections::BTreeMap<String, String>, Failure> {
    crate::config::parse_kv(text)
        .map(|v| {
            v.into_iter()
                .map(|(k, v)| (k.replace('-', "_"), v))
                .collect()
        })
        .map_err(|e| Failure::Data(Error::Schema(format!("{EVAL_CONFIG}: {e}"))))
}

/// Rebuilds an [`ExperimentReport`] from an evaluation directory.
fn load_eval(dir: &Path) -> Result<ExperimentReport, Failure> {
    let text = fs::read_to_string(dir.join(EVAL_CONFIG)).map_err(|e| {
        Failure::Data(Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.join(EVAL_CONFIG).display()),
        )))
    })?;
    let kv = kv_map(&text)?;
    let get = |k: &str| -> Result<&str, Failure> {
        kv.get(k)
            .map(String::as_str)
            .ok_or_else(|| Failure::Data(Error::Schema(format!("{EVAL_CONFIG} lacks `{k}`"))))
    };
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, Failure> {
        v.parse()
            .map_err(|_| Failure::Data(Error::Schema(format!("{EVAL_CONFIG}: bad {k} `{v}`"))))
    }
    let balance = match get("balance")? {
        "none" => Balance::None,
        "weighted" => Balance::Weighted,
        "resample" => Balance::Resample,
        v => {
            return Err(Failure::Data(Error::Schema(format!(
                "unknown balance `{v}`"
            ))))
        }
    };
    let model = ModelArgs {
        kernels: num("kernels", get("kernels")?)?,
        alpha: num("alpha", get("alpha")?)?,
        balance,
        threshold: num("threshold", get("threshold")?)?,
    };
    let sfd = if get("sfd")? == "true" {
        Some(SfdArgs {
            drop: num("drop", get("drop")?)?,
            tradeoff: num("tradeoff", get("tradeoff")?)?,
            min_features: num("min_features", get("min_features")?)?,
            refit: if get("refit")? == "train-val" {
                RefitArg::TrainVal
            } else {
                RefitArg::Train
            },
        })
    } else {
        None
    };
    let config = model_config(&model, sfd.as_ref());
    let mut runs = Vec::new();
    for s in get("seeds")?.split(',') {
        let seed: u64 = num("seeds", s)?;
        let sd = dir.join(format!("seed-{seed}"));
        let model = RidgeModel::read(open(&sd.join(MODEL_FILE))?)?;
        let table = Table::from_tsv(&fs::read_to_string(sd.join("predictions.tsv"))?)?;
        let predictions = predictions_from_table(&table)?;
        let eval = evaluate(&predictions, config.threshold)?;
        runs.push(SeedRun {
            seed,
            bank_seed: model.bank_seed,
            model,
            trace: None,
            predictions,
            eval,
        });
    }
    Ok(ExperimentReport {
        config,
        split_seed: num("split_seed", get("split_seed")?)?,
        runs,
    })
}

fn report(ctx: &Ctx, a: &ReportArgs) -> Outcome {
    let run = a.run.clone().unwrap_or_else(|| ctx.run_dir.clone());
    let eval_dir = run.join(EVAL_DIR);
    let rebuilt = load_eval(&eval_dir)?;
    let tables = eval_tables(&rebuilt)?;
    if a.check {
        let mut differ = Vec::new();
        for (name, text) in &tables {
            if fs::read_to_string(eval_dir.join(name)).ok().as_deref() != Some(text.as_str()) {
                differ.push(name.clone());
            }
        }
        if !differ.is_empty() {
            return Err(
                Error::Integrity(format!("rebuilt tables differ: {}", differ.join(", "))).into(),
            );
        }
        println!("{} tables reproduced", tables.len());
    } else {
        let out = run.join("report");
        for (name, text) in &tables {
            write_text(&out.join(name), text)?;
        }
    }
    print!("{}", summary_table(&rebuilt).to_tsv());
    Ok(())
}

fn grid(ctx: &Ctx, a: &GridArgs) -> Outcome {
    let ds = read_dataset(&a.dataset)?;
    let folds = make_folds(&ds, a.folds, derive_seed(ctx.seed, "folds"))?;
    let table = grid_search(
        &ds,
        &folds,
        &a.kernels_grid,
        &a.alphas,
        ctx.seed,
        a.balance.to_core(),
    )?;
    let t = grid_table(&table).param("seed", ctx.seed);
    write_file(&ctx.path("grid_search.tsv"), |w| t.write(w))?;
    let (k, alpha, v) = table.best();
    let kv = format!("best_kernels={k}\nbest_alpha={alpha}\nbest_uf1={v}\n");
    write_text(&ctx.path("grid_search.kv"), &kv)?;
    print!("{}{kv}", t.to_tsv());
    Ok(())
}

fn default_cutoffs() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((1..=20).map(|i| i as f64 * 2.5))
        .collect()
}

fn sweep(ctx: &Ctx, a: &SweepArgs) -> Outcome {
    let sessions = read_cohort_dir(&a.cohort)?;
    let cutoffs = a.cutoffs.clone().unwrap_or_else(default_cutoffs);
    let base = filter_spec(&a.filter, FilterSpec::default().cutoff_hz)?;
    let cfg = model_config(&a.model, None);
    let ratios: SplitRatios = a.ratios;
    let rows = cutoff_sweep(
        &sessions,
        &cutoffs,
        base,
        ratios,
        derive_seed(ctx.seed, "split"),
        &cfg,
        &a.seeds,
    )?;
    let t = cutoff_table(&rows);
    write_file(&ctx.path("cutoff_sweep.tsv"), |w| t.write(w))?;
    let mut long = Vec::new();
    for r in &rows {
        for (metric, value) in [
            ("trial_uf1", r.trial_uf1.0),
            ("subject_uf1", r.subject_uf1.0),
            ("baseline_trial_uf1", r.baseline_trial_uf1),
            ("baseline_subject_uf1", r.baseline_subject_uf1),
        ] {
            long.push(LongRecord {
                experiment: "cutoff_sweep".into(),
                parameter: "cutoff_hz".into(),
                level: r.cutoff_hz.to_string(),
                metric: metric.into(),
                value,
            });
        }
    }
    write_file(&ctx.path("cutoff_sweep_long.csv"), |w| {
        write_long_csv(&long, w)
    })?;
    print!("{}", t.to_tsv());
    Ok(())
}
