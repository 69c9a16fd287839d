//! Subject-exclusive, class-stratified train/val/test splits and folds.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::data::{Label, TrialDataset};
use crate::error::{Error, Result};

const PLAN_MAGIC: &str = "#split-plan v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl Part {
    pub const ALL: [Part; 3] = [Part::Train, Part::Val, Part::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Part::Train => "train",
            Part::Val => "val",
            Part::Test => "test",
        }
    }
}

impl fmt::Display for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Part {
    type Err = Error;

    fn from_str(s: &str) -> Result<Part> {
        match s {
            "train" => Ok(Part::Train),
            "val" => Ok(Part::Val),
            "test" => Ok(Part::Test),
            other => Err(Error::Schema(format!("unknown split part `{other}`"))),
        }
    }
}

/// Target trial fractions per part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    /// 880 / 264 / 440 trials.
    fn default() -> Self {
        SplitRatios {
            train: 880.0 / 1584.0,
            val: 264.0 / 1584.0,
            test: 440.0 / 1584.0,
        }
    }
}

impl SplitRatios {
    pub fn get(&self, part: Part) -> f64 {
        match part {
            Part::Train => self.train,
            Part::Val => self.val,
            Part::Test => self.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || self.train <= 0.0 {
            return Err(Error::Config(format!(
                "split ratios must be >= 0 with train > 0: {all:?}"
            )));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "split ratios must sum to 1: {all:?}"
            )));
        }
        Ok(())
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    /// `a,b,c`, rescaled to sum to one (so `880,264,440` works).
    fn from_str(s: &str) -> Result<SplitRatios> {
        let v: Vec<f64> = s
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad split ratios `{s}`")))?;
        if v.len() != 3 {
            return Err(Error::Config(format!(
                "expected three split ratios, got `{s}`"
            )));
        }
        let sum: f64 = v.iter().sum();
        let r = SplitRatios {
            train: v[0] / sum,
            val: v[1] / sum,
            test: v[2] / sum,
        };
        r.validate()?;
        Ok(r)
    }
}

/// Per-subject facts needed to plan a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectSummary {
    pub subject_id: String,
    pub label: Label,
    pub trials: usize,
}

pub fn subject_summaries(dataset: &TrialDataset) -> Vec<SubjectSummary> {
    dataset
        .subject_index()
        .iter()
        .map(|(s, ix)| SubjectSummary {
            subject_id: s.clone(),
            label: dataset.trials()[ix[0]].label(),
            trials: ix.len(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub assignment: BTreeMap<String, Part>,
    pub ratios: SplitRatios,
    pub seed: u64,
}

impl SplitPlan {
    pub fn part_of(&self, subject: &str) -> Option<Part> {
        self.assignment.get(subject).copied()
    }

    pub fn subjects(&self, part: Part) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, p)| **p == part)
            .map(|(s, _)| s.as_str())
            .collect()
    }

    /// Indices of the dataset trials whose subject is in `part`, ascending.
    pub fn rows(&self, subject_ids: &[&str], part: Part) -> Vec<usize> {
        subject_ids
            .iter()
            .enumerate()
            .filter(|(_, s)| self.part_of(s) == Some(part))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn dataset_rows(&self, dataset: &TrialDataset, part: Part) -> Vec<usize> {
        let ids: Vec<&str> = dataset
            .trials()
            .iter()
            .map(|t| t.subject_id.as_str())
            .collect();
        self.rows(&ids, part)
    }

    /// Checks that the plan covers exactly the dataset's subjects.
    pub fn check_covers(&self, dataset: &TrialDataset) -> Result<()> {
        for s in dataset.subject_index().keys() {
            if !self.assignment.contains_key(s) {
                return Err(Error::Split(format!(
                    "subject {s} is not assigned to a split"
                )));
            }
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "{PLAN_MAGIC}")?;
        writeln!(sink, "seed={}", self.seed)?;
        writeln!(
            sink,
            "ratios={:.17},{:.17},{:.17}",
            self.ratios.train, self.ratios.val, self.ratios.test
        )?;
        writeln!(sink, "subject\tpart")?;
        for (s, p) in &self.assignment {
            writeln!(sink, "{s}\t{p}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(source: R) -> Result<SplitPlan> {
        let mut lines = source.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(Error::Integrity(format!("split plan ends before {what}"))),
            }
        };
        let (_, magic) = next("header")?;
        if magic.trim_end() != PLAN_MAGIC {
            return Err(Error::format(1, format!("expected `{PLAN_MAGIC}`")));
        }
        let (n, seed) = next("seed")?;
        let seed = seed
            .strip_prefix("seed=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(n, "expected seed=<u64>"))?;
        let (n, ratios) = next("ratios")?;
        let ratios = ratios
            .strip_prefix("ratios=")
            .ok_or_else(|| Error::format(n, "expected ratios=a,b,c"))?
            .parse()?;
        next("column header")?;
        let mut assignment = BTreeMap::new();
        for (i, line) in lines {
            let line = line?;
            let (s, p) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(i + 1, "expected subject<TAB>part"))?;
            assignment.insert(s.to_string(), p.parse()?);
        }
        Ok(SplitPlan {
            assignment,
            ratios,
            seed,
        })
    }
}

fn shuffled_by_class(subjects: &[SubjectSummary], seed: u64) -> [Vec<&SubjectSummary>; 2] {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut by_class: [Vec<&SubjectSummary>; 2] = [Vec::new(), Vec::new()];
    let mut sorted: Vec<&SubjectSummary> = subjects.iter().collect();
    sorted.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    for s in sorted {
        by_class[s.label.index()].push(s);
    }
    for class in by_class.iter_mut() {
        class.shuffle(&mut rng);
    }
    by_class
}

/// Seeded greedy assignment. Within each class the subjects are shuffled,
/// the first three seed one split each, and every further subject goes to
/// the part whose trial count falls furthest short of its target share.
pub fn make_split_from(
    subjects: &[SubjectSummary],
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitPlan> {
    ratios.validate()?;
    let by_class = shuffled_by_class(subjects, seed);
    for (label, class) in Label::ALL.iter().zip(&by_class) {
        if class.len() < 3 {
            return Err(Error::Split(format!(
                "need at least 3 {label} subjects for a three-way split, got {}",
                class.len()
            )));
        }
    }
    let mut assignment = BTreeMap::new();
    for class in &by_class {
        let total: usize = class.iter().map(|s| s.trials).sum();
        let mut counts = [0usize; 3];
        for (i, s) in class.iter().enumerate() {
            let part = if i < 3 {
                Part::ALL[i]
            } else {
                let mut best = Part::Train;
                let mut best_gap = f64::NEG_INFINITY;
                for p in Part::ALL {
                    let gap = ratios.get(p) * total as f64 - counts[p.index()] as f64;
                    // ties go to the earlier part
                    if gap > best_gap {
                        best_gap = gap;
                        best = p;
                    }
                }
                best
            };
            counts[part.index()] += s.trials;
            if assignment.insert(s.subject_id.clone(), part).is_some() {
                return Err(Error::Split(format!("duplicate subject {}", s.subject_id)));
            }
        }
    }
    Ok(SplitPlan {
        assignment,
        ratios,
        seed,
    })
}

pub fn make_split(dataset: &TrialDataset, ratios: SplitRatios, seed: u64) -> Result<SplitPlan> {
    make_split_from(&subject_summaries(dataset), ratios, seed)
}

/// `k` subject-exclusive folds, stratified by class. Subjects of each class
/// are dealt round-robin; the dealing position carries over from one class
/// to the next so fold sizes differ by at most one. Plan `i` has fold `i`
/// as validation and the rest as training.
pub fn make_folds_from(subjects: &[SubjectSummary], k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if k < 2 {
        return Err(Error::Split(format!("need at least 2 folds, got {k}")));
    }
    let by_class = shuffled_by_class(subjects, seed);
    for (label, class) in Label::ALL.iter().zip(&by_class) {
        if class.len() < k {
            return Err(Error::Split(format!(
                "{k} folds need at least {k} {label} subjects, got {}",
                class.len()
            )));
        }
    }
    let mut fold_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut pos = 0;
    for class in &by_class {
        for s in class {
            fold_of.insert(s.subject_id.clone(), pos % k);
            pos += 1;
        }
    }
    let ratios = SplitRatios {
        train: (k - 1) as f64 / k as f64,
        val: 1.0 / k as f64,
        test: 0.0,
    };
    Ok((0..k)
        .map(|i| SplitPlan {
            assignment: fold_of
                .iter()
                .map(|(s, &f)| (s.clone(), if f == i { Part::Val } else { Part::Train }))
                .collect(),
            ratios,
            seed,
        })
        .collect())
}

pub fn make_folds(dataset: &TrialDataset, k: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    make_folds_from(&subject_summaries(dataset), k, seed)
}
