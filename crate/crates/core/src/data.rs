//! Domain types, the raw-session CSV reader/writer and the trial-dataset file.
//!
//! Raw sessions hold per-eye gaze angles in degrees exactly as recorded; the
//! conversion to on-screen position happens in [`crate::preprocess`]. The
//! binary HC/PD label is always derived from the three-way [`Condition`] and
//! never stored on its own.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::preprocess::Passes;

/// Samples per trial window (~1.47 s at 300 Hz).
pub const TRIAL_LEN: usize = 440;
/// Channels per trial: x position, y position, x velocity, y velocity.
pub const NUM_CHANNELS: usize = 4;
pub const DEFAULT_SAMPLE_RATE: f64 = 300.0;
pub const DEFAULT_SCREEN_DISTANCE_CM: f64 = 60.0;

pub const RAW_MAGIC: &str = "#fixation-raw v1";
pub const RAW_HEADER: [&str; 6] = ["t", "lx_deg", "ly_deg", "rx_deg", "ry_deg", "event"];
pub const DATASET_MAGIC: &str = "#fixation-dataset";
pub const DATASET_SCHEMA_VERSION: u32 = 1;
const DATASET_END_HEADER: &str = "#end-header";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    Hc,
    PdOn,
    PdOff,
}

impl Condition {
    pub fn label(self) -> Label {
        match self {
            Condition::Hc => Label::Hc,
            Condition::PdOn | Condition::PdOff => Label::Pd,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Hc => "HC",
            Condition::PdOn => "PD_ON",
            Condition::PdOff => "PD_OFF",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "HC" => Ok(Condition::Hc),
            "PD_ON" => Ok(Condition::PdOn),
            "PD_OFF" => Ok(Condition::PdOff),
            other => Err(Error::Schema(format!("unknown condition `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Prosaccade,
    Antisaccade,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Prosaccade => "pro",
            Task::Antisaccade => "anti",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pro" | "prosaccade" => Ok(Task::Prosaccade),
            "anti" | "antisaccade" => Ok(Task::Antisaccade),
            other => Err(Error::Schema(format!("unknown task `{other}`"))),
        }
    }
}

/// Binary class label. HC encodes as −1, PD as +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Hc,
    Pd,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Hc => -1.0,
            Label::Pd => 1.0,
        }
    }

    pub fn from_score(d: f64) -> Label {
        if d > 0.0 {
            Label::Pd
        } else {
            Label::Hc
        }
    }

    pub fn other(self) -> Label {
        match self {
            Label::Hc => Label::Pd,
            Label::Pd => Label::Hc,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Label::Hc => 0,
            Label::Pd => 1,
        }
    }

    pub const ALL: [Label; 2] = [Label::Hc, Label::Pd];
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Hc => "HC",
            Label::Pd => "PD",
        })
    }
}

/// Gaze angle pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gaze {
    pub x: f64,
    pub y: f64,
}

/// One recording of one subject performing one task.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSession {
    pub subject_id: String,
    pub session_id: String,
    pub condition: Condition,
    pub task: Task,
    pub sample_rate: f64,
    pub screen_distance_cm: f64,
    pub left: Vec<Gaze>,
    pub right: Vec<Gaze>,
    pub target_onsets: Vec<usize>,
}

impl RawSession {
    /// Validates and builds a session. `session_id` defaults to
    /// `<subject>_<condition>_<task>` when `None`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        subject_id: impl Into<String>,
        session_id: Option<String>,
        condition: Condition,
        task: Task,
        sample_rate: f64,
        screen_distance_cm: f64,
        left: Vec<Gaze>,
        right: Vec<Gaze>,
        target_onsets: Vec<usize>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        check_identifier(&subject_id, "subject_id")?;
        let session_id = session_id
            .unwrap_or_else(|| format!("{subject_id}_{}_{}", condition.as_str(), task.as_str()));
        check_identifier(&session_id, "session_id")?;
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Domain(format!(
                "sample rate {sample_rate} must be > 0"
            )));
        }
        if !(screen_distance_cm > 0.0 && screen_distance_cm.is_finite()) {
            return Err(Error::Domain(format!(
                "screen distance {screen_distance_cm} must be > 0"
            )));
        }
        if left.len() != right.len() {
            return Err(Error::Shape(format!(
                "left eye has {} samples, right eye {}",
                left.len(),
                right.len()
            )));
        }
        if left.len() < TRIAL_LEN {
            return Err(Error::InsufficientData(format!(
                "session has {} samples, need at least {TRIAL_LEN}",
                left.len()
            )));
        }
        if let Some(w) = target_onsets.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Sequencing {
                line: 0,
                msg: format!(
                    "target onsets not strictly increasing ({} then {})",
                    w[0], w[1]
                ),
            });
        }
        if let Some(&last) = target_onsets.last() {
            if last >= left.len() {
                return Err(Error::Domain(format!(
                    "target onset {last} outside recording of {} samples",
                    left.len()
                )));
            }
        }
        Ok(RawSession {
            subject_id,
            session_id,
            condition,
            task,
            sample_rate,
            screen_distance_cm,
            left,
            right,
            target_onsets,
        })
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn label(&self) -> Label {
        self.condition.label()
    }

    pub fn summary(&self) -> String {
        format!(
            "session {} subject={} condition={} task={} samples={} duration={:.1}s onsets={}",
            self.session_id,
            self.subject_id,
            self.condition,
            self.task,
            self.len(),
            self.duration_secs(),
            self.target_onsets.len()
        )
    }
}

fn check_identifier(id: &str, what: &str) -> Result<()> {
    if id.is_empty() || id.contains([',', '\n', '\r', '=']) {
        return Err(Error::Schema(format!(
            "{what} `{id}` must be non-empty and free of ',', '=', newlines"
        )));
    }
    Ok(())
}

/// Parses the raw session CSV (`#fixation-raw v1`).
pub fn load_raw_session<R: BufRead>(source: R) -> Result<RawSession> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, magic) = lines.next().ok_or_else(|| Error::format(1, "empty file"))?;
    let magic = magic?;
    if magic.trim_end() != RAW_MAGIC {
        return Err(Error::format(
            1,
            format!("expected `{RAW_MAGIC}`, found `{magic}`"),
        ));
    }

    let (_, meta_line) = lines
        .next()
        .ok_or_else(|| Error::format(2, "missing metadata line"))?;
    let meta = parse_kv_list(&meta_line?, 2)?;
    let get = |k: &str| -> Result<&str> {
        meta.get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Schema(format!("metadata is missing `{k}`")))
    };
    let subject = get("subject")?.to_string();
    let condition: Condition = get("condition")?.parse()?;
    let task: Task = get("task")?.parse()?;
    let fs: f64 = parse_num(get("fs")?, 2)?;
    let distance = match meta.get("distance_cm") {
        Some(v) => parse_num(v, 2)?,
        None => DEFAULT_SCREEN_DISTANCE_CM,
    };
    let session = meta.get("session").cloned();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(3, "missing column header"))?;
    let header = header?;
    let names: Vec<&str> = header.trim_end().split(',').map(str::trim).collect();
    let mut col = [0usize; 6];
    for (slot, want) in col.iter_mut().zip(RAW_HEADER) {
        *slot = names
            .iter()
            .position(|n| *n == want)
            .ok_or_else(|| Error::Schema(format!("missing required column `{want}`")))?;
    }

    let step = 1.0 / fs;
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut onsets = Vec::new();
    let mut prev_t: Option<f64> = None;
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::format(
                lineno,
                format!("expected {} fields, found {}", names.len(), fields.len()),
            ));
        }
        let num = |i: usize| parse_num(fields[col[i]], lineno);
        let t = num(0)?;
        if let Some(p) = prev_t {
            let dt = t - p;
            if dt <= 0.0 {
                return Err(Error::Sequencing {
                    line: lineno,
                    msg: format!("timestamp {t} does not increase (previous {p})"),
                });
            }
            if (dt - step).abs() > 1e-6 + 1e-9 * t.abs() {
                return Err(Error::Sequencing {
                    line: lineno,
                    msg: format!("timestamp step {dt} differs from 1/fs = {step}"),
                });
            }
        }
        prev_t = Some(t);
        left.push(Gaze {
            x: num(1)?,
            y: num(2)?,
        });
        right.push(Gaze {
            x: num(3)?,
            y: num(4)?,
        });
        match fields[col[5]].trim() {
            "0" => {}
            "1" => onsets.push(left.len() - 1),
            other => {
                return Err(Error::format(
                    lineno,
                    format!("event must be 0 or 1, found `{other}`"),
                ))
            }
        }
    }

    RawSession::new(
        subject, session, condition, task, fs, distance, left, right, onsets,
    )
}

/// Writes a session in the raw CSV format. Values use the shortest
/// round-trip decimal representation, so reading back is lossless.
pub fn write_raw_session<W: Write>(session: &RawSession, mut sink: W) -> Result<()> {
    writeln!(sink, "{RAW_MAGIC}")?;
    writeln!(
        sink,
        "subject={},condition={},task={},fs={},distance_cm={},session={}",
        session.subject_id,
        session.condition,
        session.task,
        session.sample_rate,
        session.screen_distance_cm,
        session.session_id
    )?;
    writeln!(sink, "{}", RAW_HEADER.join(","))?;
    let mut next_onset = session.target_onsets.iter().peekable();
    for (i, (l, r)) in session.left.iter().zip(&session.right).enumerate() {
        let event = if next_onset.peek() == Some(&&i) {
            next_onset.next();
            1
        } else {
            0
        };
        let t = i as f64 / session.sample_rate;
        writeln!(sink, "{t},{},{},{},{},{event}", l.x, l.y, r.x, r.y)?;
    }
    Ok(())
}

fn parse_kv_list(line: &str, lineno: usize) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in line.trim_end().split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| Error::format(lineno, format!("expected key=value, found `{part}`")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn parse_num(s: &str, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::format(line, format!("`{s}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::format(line, format!("`{s}` is not finite")));
    }
    Ok(v)
}

/// One fixation window: 4 channels × 440 samples, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    values: Vec<f64>,
    pub subject_id: String,
    pub condition: Condition,
    pub task: Task,
    pub session_id: String,
    pub trial_index: usize,
}

impl Trial {
    /// `values` is channel-major: `[x_pos; 440] ++ [y_pos; 440] ++ [x_vel; 440] ++ [y_vel; 440]`.
    pub fn new(
        values: Vec<f64>,
        subject_id: impl Into<String>,
        condition: Condition,
        task: Task,
        session_id: impl Into<String>,
        trial_index: usize,
    ) -> Result<Self> {
        if values.len() != NUM_CHANNELS * TRIAL_LEN {
            return Err(Error::Shape(format!(
                "trial needs {}×{} values, got {}",
                NUM_CHANNELS,
                TRIAL_LEN,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("trial contains non-finite values".into()));
        }
        let subject_id = subject_id.into();
        let session_id = session_id.into();
        check_identifier(&subject_id, "subject_id")?;
        check_identifier(&session_id, "session_id")?;
        Ok(Trial {
            values,
            subject_id,
            condition,
            task,
            session_id,
            trial_index,
        })
    }

    pub fn label(&self) -> Label {
        self.condition.label()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * TRIAL_LEN..(c + 1) * TRIAL_LEN]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Preprocessing parameters recorded in the dataset header.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessParams {
    pub sample_rate: f64,
    /// 0 means unfiltered.
    pub cutoff_hz: f64,
    pub filter_order: usize,
    pub passes: Passes,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        PreprocessParams {
            sample_rate: DEFAULT_SAMPLE_RATE,
            cutoff_hz: 20.0,
            filter_order: 8,
            passes: Passes::ForwardBackward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    trials: Vec<Trial>,
    subject_index: BTreeMap<String, Vec<usize>>,
    pub params: PreprocessParams,
}

impl TrialDataset {
    pub fn new(trials: Vec<Trial>, params: PreprocessParams) -> Result<Self> {
        let mut subject_index: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut subject_label: BTreeMap<&str, Label> = BTreeMap::new();
        for (i, t) in trials.iter().enumerate() {
            subject_index
                .entry(t.subject_id.clone())
                .or_default()
                .push(i);
            let l = *subject_label.entry(&t.subject_id).or_insert(t.label());
            if l != t.label() {
                return Err(Error::Data(format!(
                    "subject {} has trials labelled both HC and PD",
                    t.subject_id
                )));
            }
        }
        Ok(TrialDataset {
            trials,
            subject_index,
            params,
        })
    }

    pub fn empty(params: PreprocessParams) -> Self {
        TrialDataset {
            trials: Vec::new(),
            subject_index: BTreeMap::new(),
            params,
        }
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn subject_index(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.subject_index
    }

    pub fn subject_label(&self, subject: &str) -> Option<Label> {
        self.subject_index
            .get(subject)
            .and_then(|ix| ix.first())
            .map(|&i| self.trials[i].label())
    }

    pub fn labels(&self) -> Vec<Label> {
        self.trials.iter().map(Trial::label).collect()
    }

    /// Returns a copy with each trial's values replaced through `f`.
    pub fn map_values(&self, mut f: impl FnMut(usize, &mut [f64])) -> TrialDataset {
        let mut out = self.clone();
        for (i, t) in out.trials.iter_mut().enumerate() {
            f(i, t.values_mut());
        }
        out
    }
}

/// Writes the dataset file. Values use the shortest round-trip decimal
/// representation, so `load_dataset(save_dataset(d)) == d` bit for bit.
pub fn save_dataset<W: Write>(dataset: &TrialDataset, mut sink: W) -> Result<()> {
    let p = &dataset.params;
    writeln!(sink, "{DATASET_MAGIC}")?;
    writeln!(sink, "schema_version={DATASET_SCHEMA_VERSION}")?;
    writeln!(sink, "trials={}", dataset.len())?;
    writeln!(sink, "channels={NUM_CHANNELS}")?;
    writeln!(sink, "length={TRIAL_LEN}")?;
    writeln!(sink, "sample_rate={}", p.sample_rate)?;
    writeln!(sink, "cutoff_hz={}", p.cutoff_hz)?;
    writeln!(sink, "filter_order={}", p.filter_order)?;
    writeln!(sink, "passes={}", p.passes)?;
    writeln!(
        sink,
        "record=subject,condition,task,session,trial_index,values"
    )?;
    writeln!(sink, "{DATASET_END_HEADER}")?;
    let mut line = String::new();
    for t in &dataset.trials {
        use std::fmt::Write as _;
        line.clear();
        let _ = write!(
            line,
            "{},{},{},{},{}",
            t.subject_id, t.condition, t.task, t.session_id, t.trial_index
        );
        for v in &t.values {
            let _ = write!(line, ",{v}");
        }
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

pub fn load_dataset<R: BufRead>(source: R) -> Result<TrialDataset> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) => {
            if l?.trim_end() != DATASET_MAGIC {
                return Err(Error::format(1, format!("expected `{DATASET_MAGIC}`")));
            }
        }
        None => return Err(Error::Integrity("empty dataset file".into())),
    }

    let mut header = BTreeMap::new();
    let mut saw_end = false;
    for (lineno, line) in lines.by_ref() {
        let line = line?;
        let line = line.trim_end();
        if line == DATASET_END_HEADER {
            saw_end = true;
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(lineno, format!("expected key=value, found `{line}`")))?;
        if k == "schema_version" {
            let found: u32 = v
                .parse()
                .map_err(|_| Error::format(lineno, "schema_version is not an integer"))?;
            if found != DATASET_SCHEMA_VERSION {
                return Err(Error::Incompatible {
                    found,
                    supported: DATASET_SCHEMA_VERSION,
                });
            }
        }
        header.insert(k.to_string(), v.to_string());
    }
    if !saw_end {
        return Err(Error::Integrity("dataset header is truncated".into()));
    }
    let field = |k: &str| -> Result<&str> {
        header
            .get(k)
            .map(String::as_str)
            .ok_or_else(|| Error::Schema(format!("dataset header is missing `{k}`")))
    };
    field("schema_version")?;
    let count: usize = field("trials")?
        .parse()
        .map_err(|_| Error::Schema("`trials` is not an integer".into()))?;
    if field("channels")? != NUM_CHANNELS.to_string() || field("length")? != TRIAL_LEN.to_string() {
        return Err(Error::Shape(format!(
            "dataset declares channels={} length={}, expected {NUM_CHANNELS}×{TRIAL_LEN}",
            field("channels")?,
            field("length")?
        )));
    }
    let params = PreprocessParams {
        sample_rate: parse_num(field("sample_rate")?, 0)?,
        cutoff_hz: parse_num(field("cutoff_hz")?, 0)?,
        filter_order: field("filter_order")?
            .parse()
            .map_err(|_| Error::Schema("`filter_order` is not an integer".into()))?,
        passes: field("passes")?.parse()?,
    };

    let expected_fields = 5 + NUM_CHANNELS * TRIAL_LEN;
    let mut trials = Vec::with_capacity(count);
    for (lineno, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_fields {
            return Err(Error::Integrity(format!(
                "line {lineno}: record has {} fields, expected {expected_fields}",
                fields.len()
            )));
        }
        let values = fields[5..]
            .iter()
            .map(|s| parse_num(s, lineno))
            .collect::<Result<Vec<f64>>>()?;
        let trial_index = fields[4]
            .parse()
            .map_err(|_| Error::format(lineno, "trial_index is not an integer"))?;
        trials.push(Trial::new(
            values,
            fields[0],
            fields[1].parse()?,
            fields[2].parse()?,
            fields[3],
            trial_index,
        )?);
    }
    if trials.len() != count {
        return Err(Error::Integrity(format!(
            "header declares {count} trials, file holds {}",
            trials.len()
        )));
    }
    TrialDataset::new(trials, params)
}
