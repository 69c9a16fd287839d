//! Raw session → filtered, centered trials.
//!
//! Stage order: angle-to-position conversion and eye averaging with
//! calibration, outlier replacement, differentiation, cohort sanitization,
//! high-pass filtering of the whole session, then segmentation into centered
//! 440-sample windows.

mod filter;

use std::fmt;

use rayon::prelude::*;

pub use filter::{butterworth_highpass, Biquad, FilterSpec, Highpass, Passes};

use crate::data::{PreprocessParams, RawSession, Trial, TrialDataset, NUM_CHANNELS, TRIAL_LEN};
use crate::error::{Error, Result};

/// Samples used for the calibration offset.
pub const CALIBRATION_SAMPLES: usize = 300;
pub const OUTLIER_SIGMAS: f64 = 3.0;
pub const MAD_THRESHOLD: f64 = 3.0;

/// Converts a gaze angle in degrees into on-screen displacement in cm.
pub fn angular_to_positional(angle_deg: f64, distance_cm: f64) -> Result<f64> {
    if !angle_deg.is_finite() || angle_deg.abs() >= 90.0 {
        return Err(Error::Domain(format!(
            "gaze angle {angle_deg}° outside (-90°, 90°)"
        )));
    }
    Ok(distance_cm * angle_deg.to_radians().tan())
}

/// Averages both eyes in screen coordinates and subtracts the mean of the
/// first 300 samples from each axis. Returns `[x, y]`.
pub fn combine_and_calibrate(session: &RawSession) -> Result<[Vec<f64>; 2]> {
    if session.len() < CALIBRATION_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, calibration needs {CALIBRATION_SAMPLES}",
            session.len()
        )));
    }
    let d = session.screen_distance_cm;
    let mut x = Vec::with_capacity(session.len());
    let mut y = Vec::with_capacity(session.len());
    for (l, r) in session.left.iter().zip(&session.right) {
        x.push((angular_to_positional(l.x, d)? + angular_to_positional(r.x, d)?) / 2.0);
        y.push((angular_to_positional(l.y, d)? + angular_to_positional(r.y, d)?) / 2.0);
    }
    for ch in [&mut x, &mut y] {
        let offset = ch[..CALIBRATION_SAMPLES].iter().sum::<f64>() / CALIBRATION_SAMPLES as f64;
        ch.iter_mut().for_each(|v| *v -= offset);
    }
    Ok([x, y])
}

/// Replaces samples further than 3 standard deviations from the session
/// mean by linear interpolation between the nearest retained neighbours.
/// Leading and trailing runs take the nearest retained value. Returns the
/// cleaned channel and the number of replaced samples.
pub fn replace_outliers(channel: &[f64]) -> Result<(Vec<f64>, usize)> {
    let n = channel.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("channel of {n} samples")));
    }
    let mean = channel.iter().sum::<f64>() / n as f64;
    let var = channel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let limit = OUTLIER_SIGMAS * var.sqrt();
    let keep: Vec<bool> = channel.iter().map(|v| (v - mean).abs() <= limit).collect();
    let replaced = keep.iter().filter(|k| !**k).count();
    if replaced == n {
        return Err(Error::Degenerate("every sample flagged as outlier".into()));
    }
    if replaced == 0 {
        return Ok((channel.to_vec(), 0));
    }

    let mut out = channel.to_vec();
    let mut prev: Option<usize> = None;
    let mut i = 0;
    while i < n {
        if keep[i] {
            prev = Some(i);
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !keep[i] {
            i += 1;
        }
        let next = (i < n).then_some(i);
        for (j, slot) in out.iter_mut().enumerate().take(i).skip(start) {
            *slot = match (prev, next) {
                (Some(p), Some(q)) => {
                    let frac = (j - p) as f64 / (q - p) as f64;
                    channel[p] + frac * (channel[q] - channel[p])
                }
                (Some(p), None) => channel[p],
                (None, Some(q)) => channel[q],
                (None, None) => unreachable!("at least one sample is retained"),
            };
        }
    }
    Ok((out, replaced))
}

/// Backward first difference scaled by the sample rate, with `v[0] = v[1]`.
pub fn differentiate(position: &[f64], sample_rate: f64) -> Result<Vec<f64>> {
    if position.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "differentiation needs 2 samples, got {}",
            position.len()
        )));
    }
    let mut v = Vec::with_capacity(position.len());
    v.push(0.0);
    v.extend(position.windows(2).map(|w| (w[1] - w[0]) * sample_rate));
    v[0] = v[1];
    Ok(v)
}

/// A whole session as four aligned channels `[x_pos, y_pos, x_vel, y_vel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSignals {
    pub session: RawSession,
    pub channels: [Vec<f64>; NUM_CHANNELS],
    pub outliers_replaced: usize,
}

impl SessionSignals {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[max|x|, max|y|, mean|vx|, mean|vy|]`.
    pub fn statistics(&self) -> [f64; 4] {
        let max_abs = |c: &[f64]| c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mean_abs = |c: &[f64]| c.iter().map(|v| v.abs()).sum::<f64>() / c.len() as f64;
        [
            max_abs(&self.channels[0]),
            max_abs(&self.channels[1]),
            mean_abs(&self.channels[2]),
            mean_abs(&self.channels[3]),
        ]
    }
}

/// Runs calibration, outlier replacement and differentiation on one session.
pub fn session_signals(session: &RawSession) -> Result<SessionSignals> {
    let [x, y] = combine_and_calibrate(session)?;
    let (x, nx) = replace_outliers(&x)?;
    let (y, ny) = replace_outliers(&y)?;
    let vx = differentiate(&x, session.sample_rate)?;
    let vy = differentiate(&y, session.sample_rate)?;
    Ok(SessionSignals {
        session: session.clone(),
        channels: [x, y, vx, vy],
        outliers_replaced: nx + ny,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Statistic {
    MaxAbsX,
    MaxAbsY,
    MeanAbsVx,
    MeanAbsVy,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::MaxAbsX,
        Statistic::MaxAbsY,
        Statistic::MeanAbsVx,
        Statistic::MeanAbsVy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::MaxAbsX => "max_abs_x",
            Statistic::MaxAbsY => "max_abs_y",
            Statistic::MeanAbsVx => "mean_abs_vx",
            Statistic::MeanAbsVy => "mean_abs_vy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub session_id: String,
    /// Every statistic that exceeded its threshold, with value and threshold.
    pub triggers: Vec<(Statistic, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SanitizeReport {
    pub session_ids: Vec<String>,
    pub statistics: Vec<[f64; 4]>,
    pub medians: [f64; 4],
    pub mads: [f64; 4],
    pub excluded: Vec<Exclusion>,
}

impl SanitizeReport {
    pub fn threshold(&self, stat: Statistic) -> f64 {
        let k = stat as usize;
        self.medians[k] + MAD_THRESHOLD * self.mads[k]
    }

    pub fn is_excluded(&self, session_id: &str) -> bool {
        self.excluded.iter().any(|e| e.session_id == session_id)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Cohort-level exclusion: a session goes when any of its four statistics
/// exceeds `median + 3·MAD` of that statistic across the cohort.
pub fn sanitize_sessions(
    session_ids: &[String],
    statistics: &[[f64; 4]],
) -> Result<SanitizeReport> {
    if session_ids.len() != statistics.len() {
        return Err(Error::Shape(format!(
            "{} session ids for {} statistic rows",
            session_ids.len(),
            statistics.len()
        )));
    }
    if statistics.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "sanitization needs at least 3 sessions, got {}",
            statistics.len()
        )));
    }
    let mut medians = [0.0; 4];
    let mut mads = [0.0; 4];
    for k in 0..4 {
        let col: Vec<f64> = statistics.iter().map(|s| s[k]).collect();
        let m = median(&col);
        let dev: Vec<f64> = col.iter().map(|v| (v - m).abs()).collect();
        medians[k] = m;
        mads[k] = median(&dev);
    }
    let mut excluded = Vec::new();
    for (id, stats) in session_ids.iter().zip(statistics) {
        let triggers: Vec<_> = Statistic::ALL
            .iter()
            .filter_map(|&s| {
                let k = s as usize;
                let thr = medians[k] + MAD_THRESHOLD * mads[k];
                (stats[k] > thr).then_some((s, stats[k], thr))
            })
            .collect();
        if !triggers.is_empty() {
            excluded.push(Exclusion {
                session_id: id.clone(),
                triggers,
            });
        }
    }
    Ok(SanitizeReport {
        session_ids: session_ids.to_vec(),
        statistics: statistics.to_vec(),
        medians,
        mads,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegmentReport {
    pub emitted: usize,
    pub skipped_gap: usize,
    pub skipped_bounds: usize,
}

/// Cuts the 440-sample window preceding each onset. A window is kept when it
/// starts at least one second after the previous onset and lies inside the
/// recording; each kept window is centered per channel.
pub fn segment_trials(signals: &SessionSignals, onsets: &[usize]) -> (Vec<Trial>, SegmentReport) {
    let s = &signals.session;
    let gap = s.sample_rate.round() as usize;
    let mut report = SegmentReport::default();
    let mut trials = Vec::new();
    let mut prev: Option<usize> = None;
    for (k, &onset) in onsets.iter().enumerate() {
        let previous = prev.replace(onset);
        if onset < TRIAL_LEN || onset > signals.len() {
            report.skipped_bounds += 1;
            continue;
        }
        let start = onset - TRIAL_LEN;
        if let Some(p) = previous {
            if start < p || start - p < gap {
                report.skipped_gap += 1;
                continue;
            }
        }
        let mut values = Vec::with_capacity(NUM_CHANNELS * TRIAL_LEN);
        for ch in &signals.channels {
            let window = &ch[start..onset];
            let mean = window.iter().sum::<f64>() / TRIAL_LEN as f64;
            values.extend(window.iter().map(|v| v - mean));
        }
        match Trial::new(
            values,
            s.subject_id.clone(),
            s.condition,
            s.task,
            s.session_id.clone(),
            k,
        ) {
            Ok(t) => {
                trials.push(t);
                report.emitted += 1;
            }
            Err(_) => report.skipped_bounds += 1,
        }
    }
    (trials, report)
}

/// Counts and exclusions from a full preprocessing run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub sessions_in: usize,
    pub sessions_kept: usize,
    pub outliers_replaced: usize,
    pub sanitize: SanitizeReport,
    pub segments: SegmentReport,
    pub filter: Option<FilterSpec>,
}

impl fmt::Display for PipelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sessions_in\t{}", self.sessions_in)?;
        writeln!(f, "sessions_excluded\t{}", self.sanitize.excluded.len())?;
        writeln!(f, "sessions_kept\t{}", self.sessions_kept)?;
        writeln!(f, "outlier_samples_replaced\t{}", self.outliers_replaced)?;
        writeln!(f, "trials_emitted\t{}", self.segments.emitted)?;
        writeln!(f, "trials_skipped_gap\t{}", self.segments.skipped_gap)?;
        writeln!(f, "trials_skipped_bounds\t{}", self.segments.skipped_bounds)?;
        match &self.filter {
            Some(spec) => writeln!(
                f,
                "filter\tbutterworth_highpass order={} cutoff_hz={} passes={}",
                spec.order, spec.cutoff_hz, spec.passes
            )?,
            None => writeln!(f, "filter\tnone")?,
        }
        for (k, s) in Statistic::ALL.iter().enumerate() {
            writeln!(
                f,
                "cohort_{}\tmedian={} mad={} threshold={}",
                s.name(),
                self.sanitize.medians[k],
                self.sanitize.mads[k],
                self.sanitize.threshold(*s)
            )?;
        }
        for e in &self.sanitize.excluded {
            let why: Vec<String> = e
                .triggers
                .iter()
                .map(|(s, v, t)| format!("{}={v}>{t}", s.name()))
                .collect();
            writeln!(f, "excluded\t{}\t{}", e.session_id, why.join(";"))?;
        }
        Ok(())
    }
}

/// Full preprocessing: per-session signals, cohort sanitization, high-pass
/// filtering of each kept session (skipped when `filter` is `None`), then
/// segmentation. Sessions are processed in parallel; output order follows
/// input order.
pub fn preprocess_pipeline(
    sessions: &[RawSession],
    filter: Option<FilterSpec>,
) -> Result<(TrialDataset, PipelineReport)> {
    let highpass = filter.map(Highpass::design).transpose()?;
    if let Some(spec) = filter {
        if let Some(s) = sessions.iter().find(|s| s.sample_rate != spec.sample_rate) {
            return Err(Error::Config(format!(
                "session {} sampled at {} Hz, filter designed for {} Hz",
                s.session_id, s.sample_rate, spec.sample_rate
            )));
        }
    }

    let signals: Vec<SessionSignals> = sessions
        .par_iter()
        .map(|s| session_signals(s).map_err(|e| e.in_stage("signals", s.session_id.clone())))
        .collect::<Result<_>>()?;

    let ids: Vec<String> = signals
        .iter()
        .map(|s| s.session.session_id.clone())
        .collect();
    let stats: Vec<[f64; 4]> = signals.iter().map(SessionSignals::statistics).collect();
    let sanitize = sanitize_sessions(&ids, &stats).map_err(|e| e.in_stage("sanitize", "cohort"))?;

    let kept: Vec<&SessionSignals> = signals
        .iter()
        .filter(|s| !sanitize.is_excluded(&s.session.session_id))
        .collect();

    let per_session: Vec<(Vec<Trial>, SegmentReport)> = kept
        .par_iter()
        .map(|sig| {
            let filtered;
            let source = match &highpass {
                Some(hp) => {
                    let mut channels: [Vec<f64>; NUM_CHANNELS] = Default::default();
                    for (out, ch) in channels.iter_mut().zip(&sig.channels) {
                        *out = hp
                            .apply(ch)
                            .map_err(|e| e.in_stage("highpass", sig.session.session_id.clone()))?;
                    }
                    filtered = SessionSignals {
                        session: sig.session.clone(),
                        channels,
                        outliers_replaced: sig.outliers_replaced,
                    };
                    &filtered
                }
                None => *sig,
            };
            Ok(segment_trials(source, &sig.session.target_onsets))
        })
        .collect::<Result<_>>()?;

    let mut segments = SegmentReport::default();
    let mut trials = Vec::new();
    for (t, r) in per_session {
        segments.emitted += r.emitted;
        segments.skipped_gap += r.skipped_gap;
        segments.skipped_bounds += r.skipped_bounds;
        trials.extend(t);
    }
    let params = match filter {
        Some(spec) => PreprocessParams {
            sample_rate: spec.sample_rate,
            cutoff_hz: spec.cutoff_hz,
            filter_order: spec.order,
            passes: spec.passes,
        },
        None => PreprocessParams {
            sample_rate: sessions.first().map_or(300.0, |s| s.sample_rate),
            cutoff_hz: 0.0,
            filter_order: 0,
            passes: Passes::Single,
        },
    };
    let dataset = TrialDataset::new(trials, params)?;
    let report = PipelineReport {
        sessions_in: sessions.len(),
        sessions_kept: kept.len(),
        outliers_replaced: signals.iter().map(|s| s.outliers_replaced).sum(),
        sanitize,
        segments,
        filter,
    };
    Ok((dataset, report))
}
