//! Butterworth high-pass design and zero-phase filtering.
//!
//! The filter is designed from the analog Butterworth low-pass prototype,
//! mapped to a high-pass with cutoff pre-warped for the bilinear transform,
//! and realized as a cascade of second-order sections (biquads). Each section
//! is normalized to unit gain at Nyquist.
//!
//! Filtering extends the signal at both ends by odd reflection of `3·order`
//! samples and starts every section from its steady-state response to the
//! first extended sample, so edge transients stay inside the padding.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};

/// Whether the cascade runs once or forward then backward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Passes {
    Single,
    ForwardBackward,
}

impl fmt::Display for Passes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Passes::Single => "single",
            Passes::ForwardBackward => "forward_backward",
        })
    }
}

impl FromStr for Passes {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Passes::Single),
            "forward_backward" | "filtfilt" => Ok(Passes::ForwardBackward),
            other => Err(Error::Config(format!("unknown filter passes `{other}`"))),
        }
    }
}

/// High-pass filter parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff_hz: f64,
    pub sample_rate: f64,
    pub passes: Passes,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            order: 8,
            cutoff_hz: 20.0,
            sample_rate: 300.0,
            passes: Passes::ForwardBackward,
        }
    }
}

impl FilterSpec {
    pub fn with_cutoff(cutoff_hz: f64) -> Self {
        FilterSpec {
            cutoff_hz,
            ..FilterSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate / 2.0;
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Design(format!(
                "sample rate {} must be > 0",
                self.sample_rate
            )));
        }
        if !(self.cutoff_hz > 0.0 && self.cutoff_hz < nyquist) {
            return Err(Error::Design(format!(
                "cutoff {} Hz must lie in (0, {nyquist}) Hz",
                self.cutoff_hz
            )));
        }
        if self.order < 2 || !self.order.is_multiple_of(2) {
            return Err(Error::Design(format!(
                "order {} must be even and >= 2",
                self.order
            )));
        }
        Ok(())
    }

    /// Samples of odd-reflected padding added at each end.
    pub fn pad_len(&self) -> usize {
        3 * self.order
    }
}

/// One second-order section, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    /// Transposed direct-form II state that is stationary for a unit step.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        [g - self.b[0], self.b[2] - self.a[2] * g]
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = self.a[0] + z_inv * (self.a[1] + z_inv * self.a[2]);
        num / den
    }

    fn run(&self, data: &mut [f64], mut state: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        for v in data.iter_mut() {
            let x = *v;
            let y = b0 * x + state[0];
            state[0] = b1 * x - a1 * y + state[1];
            state[1] = b2 * x - a2 * y;
            *v = y;
        }
    }
}

/// A designed Butterworth high-pass cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct Highpass {
    pub spec: FilterSpec,
    pub sections: Vec<Biquad>,
}

impl Highpass {
    pub fn design(spec: FilterSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.order;
        let fs2 = 2.0 * spec.sample_rate;
        let warped = fs2 * (PI * spec.cutoff_hz / spec.sample_rate).tan();
        let sections = (0..n / 2)
            .map(|k| {
                // upper-half-plane prototype pole of the k-th conjugate pair
                let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
                let proto = Complex64::from_polar(1.0, theta);
                let s = warped / proto;
                let z = (fs2 + s) / (fs2 - s);
                let a = [1.0, -2.0 * z.re, z.norm_sqr()];
                let gain = (a[0] - a[1] + a[2]) / 4.0;
                Biquad {
                    b: [gain, -2.0 * gain, gain],
                    a,
                }
            })
            .collect();
        Ok(Highpass { spec, sections })
    }

    /// Magnitude of the single-pass cascade at `freq_hz`.
    pub fn single_pass_magnitude(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.spec.sample_rate;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .map(|s| s.response(z_inv))
            .product::<Complex64>()
            .norm()
    }

    /// Amplitude ratio of the configured filter (squared for forward-backward).
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let m = self.single_pass_magnitude(freq_hz);
        match self.spec.passes {
            Passes::Single => m,
            Passes::ForwardBackward => m * m,
        }
    }

    pub fn gain_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).log10()
    }

    fn cascade(&self, data: &mut [f64]) {
        let mut level = match data.first() {
            Some(&v) => v,
            None => return,
        };
        for s in &self.sections {
            let zi = s.step_state();
            s.run(data, [zi[0] * level, zi[1] * level]);
            level *= s.dc_gain();
        }
    }

    /// Filters one channel. Output length equals input length.
    pub fn apply(&self, input: &[f64]) -> Result<Vec<f64>> {
        let pad = self.spec.pad_len();
        if input.len() <= pad {
            return Err(Error::InsufficientData(format!(
                "channel of {} samples is too short for order-{} filtering (need > {pad})",
                input.len(),
                self.spec.order
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite sample in filter input".into()));
        }
        let mut ext = odd_extend(input, pad);
        self.cascade(&mut ext);
        if self.spec.passes == Passes::ForwardBackward {
            ext.reverse();
            self.cascade(&mut ext);
            ext.reverse();
        }
        Ok(ext[pad..pad + input.len()].to_vec())
    }
}

fn odd_extend(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let (first, last) = (x[0], x[n - 1]);
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
    out.extend_from_slice(x);
    out.extend((1..=pad).map(|i| 2.0 * last - x[n - 1 - i]));
    out
}

/// Filters every channel with a Butterworth high-pass built from `spec`.
pub fn butterworth_highpass(channels: &[Vec<f64>], spec: FilterSpec) -> Result<Vec<Vec<f64>>> {
    let hp = Highpass::design(spec)?;
    channels.iter().map(|c| hp.apply(c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe_signal(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                (0.3 * t).sin() + 0.5 * (1.7 * t).cos() + 0.01 * t
            })
            .collect()
    }

    #[test]
    fn denominators_match_reference_design() {
        // scipy.signal.butter(8, 20, 'highpass', fs=300, output='sos')[:, 4:]
        let reference = [
            [-1.3060712557032015, 0.4296729788066719],
            [-1.365345775741877, 0.4945570188320395],
            [-1.4903217577883678, 0.6313602627220489],
            [-1.6927690438759326, 0.8529664065585898],
        ];
        let hp = Highpass::design(FilterSpec::default()).unwrap();
        let mut got: Vec<[f64; 2]> = hp.sections.iter().map(|s| [s.a[1], s.a[2]]).collect();
        got.sort_by(|x, y| x[1].total_cmp(&y[1]));
        for (g, r) in got.iter().zip(reference) {
            assert!(
                (g[0] - r[0]).abs() < 1e-12 && (g[1] - r[1]).abs() < 1e-12,
                "{g:?} vs {r:?}"
            );
        }
    }

    #[test]
    fn zero_phase_output_matches_reference() {
        // scipy.signal.sosfiltfilt(sos, x, padlen=24)
        let expect = [
            (0, 0.0223957147501066),
            (1, -0.4139934550475378),
            (50, -0.4893434993334012),
            (100, 0.4648735560786868),
            (150, -0.4277377996702649),
            (198, -0.6658961395159245),
            (199, -0.0251345512769824),
        ];
        let y = Highpass::design(FilterSpec::default())
            .unwrap()
            .apply(&probe_signal(200))
            .unwrap();
        for (i, v) in expect {
            assert!((y[i] - v).abs() < 1e-10, "y[{i}] = {} expected {v}", y[i]);
        }
    }

    #[test]
    fn single_pass_matches_reference() {
        // scipy sosfilt over odd_ext(x, 24) with zi = sosfilt_zi(sos) * ext[0]
        let expect = [
            (0, -0.1020927648802149),
            (1, 0.21937039117865012),
            (50, -0.2823874325655681),
            (100, 0.1792722620838831),
            (199, 0.4540750734184422),
        ];
        let spec = FilterSpec {
            passes: Passes::Single,
            ..FilterSpec::default()
        };
        let y = Highpass::design(spec)
            .unwrap()
            .apply(&probe_signal(200))
            .unwrap();
        for (i, v) in expect {
            assert!((y[i] - v).abs() < 1e-10, "y[{i}] = {} expected {v}", y[i]);
        }
    }

    #[test]
    fn analytic_response_values() {
        let hp = Highpass::design(FilterSpec::default()).unwrap();
        // -3 dB per pass at the cutoff, squared by the second pass
        assert!((hp.magnitude(20.0) - 0.5).abs() < 1e-12);
        assert!(hp.gain_db(5.0) < -190.0);
        assert!(hp.gain_db(40.0).abs() < 1e-3);
        assert!((hp.magnitude(150.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dc_input_is_removed() {
        let hp = Highpass::design(FilterSpec::default()).unwrap();
        let y = hp.apply(&vec![3.5; 1000]).unwrap();
        assert!(y.iter().all(|v| v.abs() < 3.5e-6), "{:?}", &y[..4]);
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            FilterSpec::with_cutoff(150.0),
            FilterSpec::with_cutoff(0.0),
            FilterSpec {
                order: 7,
                ..FilterSpec::default()
            },
        ] {
            assert!(matches!(Highpass::design(spec), Err(Error::Design(_))));
        }
        let hp = Highpass::design(FilterSpec::default()).unwrap();
        assert!(hp.apply(&[1.0; 24]).is_err());
        let mut x = vec![0.0; 100];
        x[3] = f64::NAN;
        assert!(matches!(hp.apply(&x), Err(Error::Data(_))));
    }

    #[test]
    fn linearity() {
        let hp = Highpass::design(FilterSpec::default()).unwrap();
        let x = probe_signal(300);
        let y: Vec<f64> = (0..300).map(|i| ((i * i) as f64 * 0.37).cos()).collect();
        let (a, b) = (2.5, -0.75);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let fx = hp.apply(&x).unwrap();
        let fy = hp.apply(&y).unwrap();
        let fm = hp.apply(&mix).unwrap();
        let scale = fm.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..300 {
            assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-9 * scale);
        }
    }
}
