//! Seeded synthetic fixation cohorts.
//!
//! Every session is a sum of a slow drift (1/f² power), corrective microsaccade
//! steps, white noise, and band-limited noise in the signature band. PD
//! subjects additionally carry a low-frequency tremor sinusoid and scale the
//! signature-band power by `signature_multiplier`. Per-subject gains on the
//! band noise (`idiosyncrasy`) make subjects differ from each other.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::data::{
    load_raw_session, write_raw_session, Condition, Gaze, Label, RawSession, Task,
    DEFAULT_SAMPLE_RATE, DEFAULT_SCREEN_DISTANCE_CM,
};
use crate::error::{Error, Result};
use crate::harness::derive_seed;
use crate::preprocess::{butterworth_highpass, combine_and_calibrate, FilterSpec};

const MANIFEST_MAGIC: &str = "#cohort-manifest v1";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Cohort parameters. Amplitudes are gaze angles in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub hc_subjects: usize,
    pub pd_subjects: usize,
    pub sessions_per_subject: usize,
    pub trials_per_session: usize,
    pub sample_rate: f64,
    pub screen_distance_cm: f64,
    pub white_noise: f64,
    /// Independent per-eye noise on top of the shared gaze.
    pub eye_noise: f64,
    pub drift: f64,
    pub microsaccade_rate_hz: f64,
    pub microsaccade_amplitude: f64,
    pub tremor_hz: f64,
    pub tremor_amplitude: f64,
    pub signature_low_hz: f64,
    pub signature_high_hz: f64,
    /// Standard deviation of the HC band noise.
    pub band_noise: f64,
    /// PD band-noise power relative to HC.
    pub signature_multiplier: f64,
    /// Standard deviation of the per-subject log gain on the band noise.
    pub idiosyncrasy: f64,
    /// Standard deviation of the per-subject log gain on white and band
    /// noise together (overall recording quality).
    pub amplitude_spread: f64,
    /// Cutoff the band layout must respect: tremor below, signature above.
    pub guard_cutoff_hz: f64,
    pub seed: u64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            hc_subjects: 30,
            pd_subjects: 30,
            sessions_per_subject: 2,
            trials_per_session: 12,
            sample_rate: DEFAULT_SAMPLE_RATE,
            screen_distance_cm: DEFAULT_SCREEN_DISTANCE_CM,
            white_noise: 0.015,
            eye_noise: 0.003,
            drift: 0.1,
            microsaccade_rate_hz: 0.5,
            microsaccade_amplitude: 0.15,
            tremor_hz: 5.0,
            tremor_amplitude: 0.02,
            signature_low_hz: 25.0,
            signature_high_hz: 60.0,
            band_noise: 0.02,
            signature_multiplier: 3.0,
            idiosyncrasy: 0.1,
            amplitude_spread: 0.2,
            guard_cutoff_hz: 20.0,
            seed: 0,
        }
    }
}

/// Largest deviation of a subject's tremor frequency from `tremor_hz`.
const TREMOR_JITTER_HZ: f64 = 0.5;
/// Seconds before the first target onset, and minimum onset spacing.
const LEAD_IN_SECS: f64 = 3.0;
const ONSET_SPACING_SECS: f64 = 2.5;
const ONSET_JITTER_SECS: f64 = 0.5;
const TAIL_SECS: f64 = 1.0;
const DRIFT_FLOOR_HZ: f64 = 0.05;
const SACCADE_RAMP: usize = 6;

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hc_subjects == 0 || self.pd_subjects == 0 {
            return bad("cohort needs subjects of both classes".into());
        }
        if self.sessions_per_subject == 0 || self.trials_per_session == 0 {
            return bad("sessions and trials per session must be >= 1".into());
        }
        if !(self.sample_rate > 0.0 && self.screen_distance_cm > 0.0) {
            return bad("sample rate and screen distance must be > 0".into());
        }
        let amps = [
            self.white_noise,
            self.eye_noise,
            self.drift,
            self.microsaccade_rate_hz,
            self.microsaccade_amplitude,
            self.tremor_amplitude,
            self.band_noise,
            self.idiosyncrasy,
            self.amplitude_spread,
        ];
        if amps.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad(format!("noise levels must be finite and >= 0: {amps:?}"));
        }
        if !(self.signature_multiplier.is_finite() && self.signature_multiplier > 0.0) {
            return bad("signature multiplier must be > 0".into());
        }
        let nyquist = self.sample_rate / 2.0;
        if !(self.tremor_hz - TREMOR_JITTER_HZ > 0.0
            && self.tremor_hz + TREMOR_JITTER_HZ < self.guard_cutoff_hz)
        {
            return bad(format!(
                "tremor band {}±{TREMOR_JITTER_HZ} Hz must lie below the {} Hz cutoff",
                self.tremor_hz, self.guard_cutoff_hz
            ));
        }
        if !(self.signature_low_hz > self.guard_cutoff_hz
            && self.signature_low_hz < self.signature_high_hz
            && self.signature_high_hz < nyquist)
        {
            return bad(format!(
                "signature band {}-{} Hz must lie between the {} Hz cutoff and {nyquist} Hz",
                self.signature_low_hz, self.signature_high_hz, self.guard_cutoff_hz
            ));
        }
        Ok(())
    }

    /// `key=value` lines, one per parameter.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("hc_subjects", self.hc_subjects.to_string());
        kv("pd_subjects", self.pd_subjects.to_string());
        kv(
            "sessions_per_subject",
            self.sessions_per_subject.to_string(),
        );
        kv("trials_per_session", self.trials_per_session.to_string());
        kv("sample_rate", self.sample_rate.to_string());
        kv("screen_distance_cm", self.screen_distance_cm.to_string());
        kv("white_noise", self.white_noise.to_string());
        kv("eye_noise", self.eye_noise.to_string());
        kv("drift", self.drift.to_string());
        kv(
            "microsaccade_rate_hz",
            self.microsaccade_rate_hz.to_string(),
        );
        kv(
            "microsaccade_amplitude",
            self.microsaccade_amplitude.to_string(),
        );
        kv("tremor_hz", self.tremor_hz.to_string());
        kv("tremor_amplitude", self.tremor_amplitude.to_string());
        kv("signature_low_hz", self.signature_low_hz.to_string());
        kv("signature_high_hz", self.signature_high_hz.to_string());
        kv("band_noise", self.band_noise.to_string());
        kv(
            "signature_multiplier",
            self.signature_multiplier.to_string(),
        );
        kv("idiosyncrasy", self.idiosyncrasy.to_string());
        kv("amplitude_spread", self.amplitude_spread.to_string());
        kv("guard_cutoff_hz", self.guard_cutoff_hz.to_string());
        kv("seed", self.seed.to_string());
        s
    }

    /// Session `k` of a subject: tasks alternate pro/anti; PD medication
    /// runs ON, OFF, OFF, ON, ... so that with four sessions every
    /// task/medication pair occurs once.
    pub fn session_layout(label: Label, k: usize) -> (Condition, Task) {
        let task = if k.is_multiple_of(2) {
            Task::Prosaccade
        } else {
            Task::Antisaccade
        };
        let condition = match label {
            Label::Hc => Condition::Hc,
            Label::Pd if matches!(k % 4, 0 | 3) => Condition::PdOn,
            Label::Pd => Condition::PdOff,
        };
        (condition, task)
    }

    pub fn subject_ids(&self) -> Vec<(String, Label)> {
        let hc = (1..=self.hc_subjects).map(|i| (format!("HC{i:03}"), Label::Hc));
        let pd = (1..=self.pd_subjects).map(|i| (format!("PD{i:03}"), Label::Pd));
        hc.chain(pd).collect()
    }
}

/// White Gaussian noise shaped in the frequency domain by `gain(f)` and
/// scaled so the expected per-sample standard deviation is `std`.
fn shaped_noise(
    n: usize,
    fs: f64,
    std: f64,
    rng: &mut ChaCha20Rng,
    gain: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    if std == 0.0 {
        return vec![0.0; n];
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let mut power = 0.0;
    for (k, v) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs / n as f64;
        let g = gain(f);
        power += g * g;
        *v *= g;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    // unit white input gives per-sample variance Σg²/n after the round trip
    let scale = if power > 0.0 {
        std / (power / n as f64).sqrt() / n as f64
    } else {
        0.0
    };
    buf.iter().map(|c| c.re * scale).collect()
}

struct SubjectTraits {
    band_gain: f64,
    gain: f64,
    tremor_hz: f64,
    offset: (f64, f64),
}

fn onsets(spec: &CohortSpec, rng: &mut ChaCha20Rng) -> (Vec<usize>, usize) {
    let fs = spec.sample_rate;
    let mut t = LEAD_IN_SECS;
    let mut out = Vec::with_capacity(spec.trials_per_session);
    for i in 0..spec.trials_per_session {
        if i > 0 {
            t += ONSET_SPACING_SECS + rng.random::<f64>() * ONSET_JITTER_SECS;
        }
        out.push((t * fs).round() as usize);
    }
    let len = ((t + TAIL_SECS) * fs).round() as usize;
    (out, len)
}

fn axis(
    spec: &CohortSpec,
    label: Label,
    traits: &SubjectTraits,
    n: usize,
    offset: f64,
    rng: &mut ChaCha20Rng,
) -> Vec<f64> {
    let fs = spec.sample_rate;
    let drift = shaped_noise(n, fs, spec.drift, rng, |f| {
        if f == 0.0 {
            0.0
        } else {
            1.0 / f.max(DRIFT_FLOOR_HZ)
        }
    });
    let band_power = match label {
        Label::Hc => 1.0,
        Label::Pd => spec.signature_multiplier,
    };
    let (lo, hi) = (spec.signature_low_hz, spec.signature_high_hz);
    let band = shaped_noise(
        n,
        fs,
        spec.band_noise * traits.gain * traits.band_gain * band_power.sqrt(),
        rng,
        |f| {
            if (lo..=hi).contains(&f) {
                1.0
            } else {
                0.0
            }
        },
    );
    let white = Normal::new(0.0, spec.white_noise * traits.gain).expect("validated noise level");
    let mut x: Vec<f64> = drift
        .iter()
        .zip(&band)
        .map(|(d, b)| offset + d + b + white.sample(rng))
        .collect();

    // corrective microsaccades: each step keeps 30% of the offset plus a kick
    let p_step = spec.microsaccade_rate_hz / fs;
    let kick = Normal::new(0.0, spec.microsaccade_amplitude).expect("validated amplitude");
    let mut level = 0.0;
    let mut i = 0;
    while i < n {
        if rng.random::<f64>() < p_step {
            let target = level * 0.3 + kick.sample(rng);
            for j in 0..n - i {
                let w = if j >= SACCADE_RAMP {
                    1.0
                } else {
                    0.5 - 0.5 * (std::f64::consts::PI * (j + 1) as f64 / SACCADE_RAMP as f64).cos()
                };
                x[i + j] += (target - level) * w;
            }
            level = target;
            i += SACCADE_RAMP;
        } else {
            i += 1;
        }
    }

    if label == Label::Pd && spec.tremor_amplitude > 0.0 {
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let w = std::f64::consts::TAU * traits.tremor_hz / fs;
        for (k, v) in x.iter_mut().enumerate() {
            *v += spec.tremor_amplitude * (w * k as f64 + phase).sin();
        }
    }
    x
}

fn generate_subject(spec: &CohortSpec, id: &str, label: Label) -> Result<Vec<RawSession>> {
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(spec.seed, &format!("subject/{id}")));
    let z: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let traits = SubjectTraits {
        band_gain: (spec.idiosyncrasy * z).exp(),
        gain: (spec.amplitude_spread * z2).exp(),
        tremor_hz: spec.tremor_hz + (rng.random::<f64>() * 2.0 - 1.0) * TREMOR_JITTER_HZ,
        offset: (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
    };
    let eye = Normal::new(0.0, spec.eye_noise).expect("validated noise level");
    (0..spec.sessions_per_subject)
        .map(|k| {
            let (condition, task) = CohortSpec::session_layout(label, k);
            let (target_onsets, n) = onsets(spec, &mut rng);
            let gx = axis(spec, label, &traits, n, traits.offset.0, &mut rng);
            let gy = axis(spec, label, &traits, n, traits.offset.1, &mut rng);
            let mut left = Vec::with_capacity(n);
            let mut right = Vec::with_capacity(n);
            for (x, y) in gx.iter().zip(&gy) {
                left.push(Gaze {
                    x: x + eye.sample(&mut rng),
                    y: y + eye.sample(&mut rng),
                });
                right.push(Gaze {
                    x: x + eye.sample(&mut rng),
                    y: y + eye.sample(&mut rng),
                });
            }
            RawSession::new(
                id,
                Some(format!("{id}_{}_{}_{k}", condition.as_str(), task.as_str())),
                condition,
                task,
                spec.sample_rate,
                spec.screen_distance_cm,
                left,
                right,
                target_onsets,
            )
        })
        .collect()
}

/// All sessions of the cohort, HC subjects first. Subjects are generated in
/// parallel from their own derived seeds.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<RawSession>> {
    spec.validate()?;
    let per_subject: Vec<Vec<RawSession>> = spec
        .subject_ids()
        .par_iter()
        .map(|(id, label)| generate_subject(spec, id, *label))
        .collect::<Result<_>>()?;
    Ok(per_subject.into_iter().flatten().collect())
}

/// Writes one CSV per session plus a manifest with every spec parameter.
/// Returns the written session paths.
pub fn write_cohort(
    dir: &Path,
    spec: &CohortSpec,
    sessions: &[RawSession],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(sessions.len());
    for s in sessions {
        let path = dir.join(format!("{}.csv", s.session_id));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        write_raw_session(s, &mut w)?;
        w.flush()?;
        paths.push(path);
    }
    let mut m = String::new();
    let _ = writeln!(m, "{MANIFEST_MAGIC}");
    m.push_str(&spec.to_kv());
    let _ = writeln!(m, "sessions={}", sessions.len());
    for s in sessions {
        let _ = writeln!(m, "file={}.csv", s.session_id);
    }
    fs::write(dir.join(MANIFEST_FILE), m)?;
    Ok(paths)
}

/// Loads the sessions of a cohort directory: the files listed in its
/// manifest if there is one, otherwise every `*.csv` in name order.
pub fn read_cohort_dir(dir: &Path) -> Result<Vec<RawSession>> {
    let manifest = dir.join(MANIFEST_FILE);
    let files: Vec<PathBuf> = if manifest.exists() {
        let text = fs::read_to_string(&manifest)?;
        if text.lines().next() != Some(MANIFEST_MAGIC) {
            return Err(Error::format(1, format!("expected `{MANIFEST_MAGIC}`")));
        }
        text.lines()
            .filter_map(|l| l.strip_prefix("file="))
            .map(|f| dir.join(f))
            .collect()
    } else {
        let mut v: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        v.sort();
        v
    };
    if files.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no session files in {}",
            dir.display()
        )));
    }
    files
        .par_iter()
        .map(|p| {
            let f = fs::File::open(p)?;
            load_raw_session(BufReader::new(f))
                .map_err(|e| e.in_stage("load", p.display().to_string()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPower {
    pub low_hz: f64,
    pub high_hz: f64,
    pub hc: f64,
    pub pd: f64,
}

impl BandPower {
    pub fn ratio(&self) -> f64 {
        self.pd / self.hc
    }
}

/// One-sided Hann-windowed periodogram, `(frequencies, density)`.
pub fn periodogram(x: &[f64], fs: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let w: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
        .collect();
    let norm = fs * w.iter().map(|v| v * v).sum::<f64>();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex64> = x
        .iter()
        .zip(&w)
        .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let freqs = (0..=half).map(|k| k as f64 * fs / n as f64).collect();
    let psd = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() / norm;
            if k == 0 || (n.is_multiple_of(2) && k == half) {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    (freqs, psd)
}

/// Mean band power per class of the calibrated, eye-averaged gaze (both
/// axes), optionally after high-pass filtering.
pub fn spectral_audit(
    sessions: &[RawSession],
    bands: &[(f64, f64)],
    filter: Option<FilterSpec>,
) -> Result<Vec<BandPower>> {
    if sessions.is_empty() {
        return Err(Error::InsufficientData(
            "spectral audit needs sessions".into(),
        ));
    }
    let per_session: Vec<(Label, Vec<f64>)> = sessions
        .par_iter()
        .map(|s| {
            let [x, y] = combine_and_calibrate(s)?;
            let channels = match filter {
                Some(spec) => butterworth_highpass(&[x, y], spec)?,
                None => vec![x, y],
            };
            let mut power = vec![0.0; bands.len()];
            for c in &channels {
                let (f, p) = periodogram(c, s.sample_rate);
                let df = s.sample_rate / c.len() as f64;
                for (b, &(lo, hi)) in bands.iter().enumerate() {
                    power[b] += f
                        .iter()
                        .zip(&p)
                        .filter(|(f, _)| (lo..=hi).contains(*f))
                        .map(|(_, p)| p * df)
                        .sum::<f64>()
                        / channels.len() as f64;
                }
            }
            Ok((s.label(), power))
        })
        .collect::<Result<_>>()?;
    Ok(bands
        .iter()
        .enumerate()
        .map(|(b, &(lo, hi))| {
            let mean = |l: Label| {
                let v: Vec<f64> = per_session
                    .iter()
                    .filter(|(x, _)| *x == l)
                    .map(|(_, p)| p[b])
                    .collect();
                v.iter().sum::<f64>() / v.len().max(1) as f64
            };
            BandPower {
                low_hz: lo,
                high_hz: hi,
                hc: mean(Label::Hc),
                pd: mean(Label::Pd),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CohortSpec {
        CohortSpec {
            hc_subjects: 3,
            pd_subjects: 3,
            ..CohortSpec::default()
        }
    }

    #[test]
    fn counts() {
        let spec = CohortSpec {
            hc_subjects: 10,
            pd_subjects: 10,
            ..CohortSpec::default()
        };
        let s = generate_cohort(&spec).unwrap();
        assert_eq!(s.len(), 40);
        assert_eq!(s.iter().map(|s| s.target_onsets.len()).sum::<usize>(), 480);
    }

    #[test]
    fn onset_spacing() {
        let s = generate_cohort(&small()).unwrap();
        for sess in &s {
            assert_eq!(sess.target_onsets.len(), 12);
            assert!(sess.target_onsets[0] >= 440);
            for w in sess.target_onsets.windows(2) {
                assert!(w[1] - w[0] >= 750);
            }
        }
    }

    #[test]
    fn seeded() {
        let a = generate_cohort(&small()).unwrap();
        assert_eq!(a, generate_cohort(&small()).unwrap());
        let b = generate_cohort(&CohortSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn layout() {
        use Condition::*;
        let l: Vec<_> = (0..4)
            .map(|k| CohortSpec::session_layout(Label::Pd, k))
            .collect();
        assert_eq!(
            l,
            vec![
                (PdOn, Task::Prosaccade),
                (PdOff, Task::Antisaccade),
                (PdOff, Task::Prosaccade),
                (PdOn, Task::Antisaccade)
            ]
        );
    }

    #[test]
    fn band_layout_enforced() {
        let bad = CohortSpec {
            signature_low_hz: 15.0,
            ..CohortSpec::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = CohortSpec {
            tremor_hz: 19.8,
            ..CohortSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = CohortSpec {
            signature_high_hz: 151.0,
            ..CohortSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn shaped_noise_has_requested_std() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let x = shaped_noise(60000, 300.0, 0.5, &mut rng, |f| {
            if (25.0..=60.0).contains(&f) {
                1.0
            } else {
                0.0
            }
        });
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!((var.sqrt() - 0.5).abs() < 0.01, "{}", var.sqrt());
    }

    #[test]
    fn periodogram_of_sine() {
        let fs = 300.0;
        let x: Vec<f64> = (0..3000)
            .map(|i| 2.0 * (std::f64::consts::TAU * 30.0 * i as f64 / fs).sin())
            .collect();
        let (f, p) = periodogram(&x, fs);
        let df = f[1];
        let total: f64 = p.iter().map(|v| v * df).sum();
        // power of a sine with amplitude 2
        assert!((total - 2.0).abs() < 0.01, "{total}");
    }
}
