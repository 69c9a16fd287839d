//! Random convolutional kernel transform.
//!
//! A [`KernelBank`] holds frozen random dilated kernels; each kernel turns a
//! multichannel series into a feature map, pooled into two features: the
//! proportion of strictly positive values (PPV) and the maximum. Column
//! `2k` is PPV of kernel `k`, column `2k + 1` its max.
//!
//! Kernel parameters are drawn as follows (per kernel, in this order):
//! length uniform over {7, 9, 11}; channel count `floor(2^u)` with
//! `u ~ U[0, log2(C)]`, channels without replacement; i.i.d. standard
//! normal weights, mean-centered per channel; bias `~ U[-1, 1)`;
//! dilation `floor(2^a)` with `a ~ U[0, log2((L-1)/(len-1))]`; zero padding
//! of `(len-1)·dilation/2` per side with probability ½.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{Condition, Label, Task, Trial, TrialDataset, NUM_CHANNELS, TRIAL_LEN};
use crate::error::{Error, Result};

pub const KERNEL_LENGTHS: [usize; 3] = [7, 9, 11];
pub const DEFAULT_NUM_KERNELS: usize = 10_000;
pub const NORMALIZER_EPSILON: f64 = 1e-8;
const BANK_MAGIC: &str = "#kernel-bank v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub length: usize,
    /// Ascending channel indices the kernel reads.
    pub channels: Vec<usize>,
    /// `channels.len() × length`, one mean-centered row per channel.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub dilation: usize,
    pub padding: bool,
}

impl Kernel {
    pub fn channel_weights(&self, i: usize) -> &[f64] {
        &self.weights[i * self.length..(i + 1) * self.length]
    }

    /// Zero padding added on each side.
    pub fn pad(&self) -> usize {
        if self.padding {
            (self.length - 1) * self.dilation / 2
        } else {
            0
        }
    }

    pub fn span(&self) -> usize {
        (self.length - 1) * self.dilation
    }

    /// Feature-map length for an input of `input_len` samples (may be ≤ 0).
    pub fn output_len(&self, input_len: usize) -> isize {
        input_len as isize + 2 * self.pad() as isize - self.span() as isize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    pub kernels: Vec<Kernel>,
    pub seed: u64,
    pub input_length: usize,
    pub num_channels: usize,
}

impl KernelBank {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        2 * self.kernels.len()
    }

    /// Text dump of the bank, weights at 17 significant digits.
    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "{BANK_MAGIC}")?;
        writeln!(sink, "seed={}", self.seed)?;
        writeln!(sink, "kernels={}", self.kernels.len())?;
        writeln!(sink, "input_length={}", self.input_length)?;
        writeln!(sink, "num_channels={}", self.num_channels)?;
        let mut line = String::new();
        for k in &self.kernels {
            line.clear();
            let chans: Vec<String> = k.channels.iter().map(usize::to_string).collect();
            let _ = write!(
                line,
                "length={} channels={} dilation={} padding={} bias={:.16e} weights=",
                k.length,
                chans.join(","),
                k.dilation,
                u8::from(k.padding),
                k.bias
            );
            for (i, w) in k.weights.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                let _ = write!(line, "{w:.16e}");
            }
            writeln!(sink, "{line}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(source: R) -> Result<KernelBank> {
        let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, l)) => Ok((n, l?)),
                None => Err(Error::Integrity(format!("kernel bank ends before {what}"))),
            }
        };
        let (_, magic) = next("header")?;
        if magic.trim_end() != BANK_MAGIC {
            return Err(Error::format(1, format!("expected `{BANK_MAGIC}`")));
        }
        let mut header = |key: &str| -> Result<u64> {
            let (n, l) = next(key)?;
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| Error::format(n, format!("expected `{key}=<integer>`")))
        };
        let seed = header("seed")?;
        let count = header("kernels")? as usize;
        let input_length = header("input_length")? as usize;
        let num_channels = header("num_channels")? as usize;
        let mut kernels = Vec::with_capacity(count);
        for (n, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            kernels.push(parse_kernel(&line, n)?);
        }
        if kernels.len() != count {
            return Err(Error::Integrity(format!(
                "bank declares {count} kernels, file holds {}",
                kernels.len()
            )));
        }
        Ok(KernelBank {
            kernels,
            seed,
            input_length,
            num_channels,
        })
    }
}

fn parse_kernel(line: &str, n: usize) -> Result<Kernel> {
    let mut length = None;
    let mut channels = None;
    let mut dilation = None;
    let mut padding = None;
    let mut bias = None;
    let mut weights = None;
    let bad = |what: &str| Error::format(n, format!("bad kernel field `{what}`"));
    for field in line.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or_else(|| bad(field))?;
        match k {
            "length" => length = Some(v.parse::<usize>().map_err(|_| bad(k))?),
            "channels" => {
                channels = Some(
                    v.split(',')
                        .map(|c| c.parse::<usize>().map_err(|_| bad(k)))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "dilation" => dilation = Some(v.parse::<usize>().map_err(|_| bad(k))?),
            "padding" => padding = Some(v == "1"),
            "bias" => bias = Some(v.parse::<f64>().map_err(|_| bad(k))?),
            "weights" => {
                weights = Some(
                    v.split(',')
                        .map(|c| c.parse::<f64>().map_err(|_| bad(k)))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            _ => return Err(bad(k)),
        }
    }
    let missing = |what: &str| Error::Schema(format!("line {n}: kernel is missing `{what}`"));
    let kernel = Kernel {
        length: length.ok_or_else(|| missing("length"))?,
        channels: channels.ok_or_else(|| missing("channels"))?,
        weights: weights.ok_or_else(|| missing("weights"))?,
        bias: bias.ok_or_else(|| missing("bias"))?,
        dilation: dilation.ok_or_else(|| missing("dilation"))?,
        padding: padding.ok_or_else(|| missing("padding"))?,
    };
    if kernel.weights.len() != kernel.length * kernel.channels.len() || kernel.dilation == 0 {
        return Err(Error::format(
            n,
            "kernel weights do not match length × channels",
        ));
    }
    Ok(kernel)
}

/// Draws `num` kernels from a ChaCha20 stream seeded with `seed`.
pub fn generate_kernels(
    num: usize,
    input_length: usize,
    num_channels: usize,
    seed: u64,
) -> Result<KernelBank> {
    if num_channels < 1 {
        return Err(Error::Domain(
            "kernel bank needs at least one channel".into(),
        ));
    }
    if num < 1 {
        return Err(Error::Domain(
            "kernel bank needs at least one kernel".into(),
        ));
    }
    if input_length < KERNEL_LENGTHS[KERNEL_LENGTHS.len() - 1] {
        return Err(Error::Domain(format!(
            "input length {input_length} shorter than the longest kernel"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let channel_exp_max = (num_channels as f64).log2();
    let kernels = (0..num)
        .map(|_| {
            let length = KERNEL_LENGTHS[rng.random_range(0..KERNEL_LENGTHS.len())];

            let u = rng.random::<f64>() * channel_exp_max;
            let count = (2f64.powf(u).floor() as usize).clamp(1, num_channels);
            let mut channels = index::sample(&mut rng, num_channels, count).into_vec();
            channels.sort_unstable();

            let mut weights: Vec<f64> = (0..count * length)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            for row in weights.chunks_mut(length) {
                let mean = row.iter().sum::<f64>() / length as f64;
                row.iter_mut().for_each(|w| *w -= mean);
            }

            let bias = rng.random_range(-1.0..1.0);

            let a = rng.random::<f64>() * ((input_length - 1) as f64 / (length - 1) as f64).log2();
            let dilation = (2f64.powf(a).floor() as usize).max(1);

            let padding = rng.random_bool(0.5);
            Kernel {
                length,
                channels,
                weights,
                bias,
                dilation,
                padding,
            }
        })
        .collect();
    Ok(KernelBank {
        kernels,
        seed,
        input_length,
        num_channels,
    })
}

/// Computes the feature map of `kernel` over channel-major `values`
/// (`num_channels × input_len`) into `map`, which is resized as needed.
pub fn feature_map_into(
    values: &[f64],
    input_len: usize,
    kernel: &Kernel,
    map: &mut Vec<f64>,
) -> Result<()> {
    let out_len = kernel.output_len(input_len);
    if out_len <= 0 {
        return Err(Error::Degenerate(format!(
            "kernel span {} exceeds input length {input_len}",
            kernel.span()
        )));
    }
    let out_len = out_len as usize;
    let pad = kernel.pad() as isize;
    map.clear();
    map.resize(out_len, kernel.bias);
    for (ci, &ch) in kernel.channels.iter().enumerate() {
        let x = values
            .get(ch * input_len..(ch + 1) * input_len)
            .ok_or_else(|| Error::Shape(format!("kernel reads channel {ch} beyond input")))?;
        for (j, &w) in kernel.channel_weights(ci).iter().enumerate() {
            let off = (j * kernel.dilation) as isize - pad;
            let lo = (-off).max(0) as usize;
            let hi = (input_len as isize - off).min(out_len as isize);
            if hi <= lo as isize {
                continue;
            }
            let hi = hi as usize;
            let src = &x[(lo as isize + off) as usize..(hi as isize + off) as usize];
            for (f, v) in map[lo..hi].iter_mut().zip(src) {
                *f += w * v;
            }
        }
    }
    Ok(())
}

/// Pools a feature map into `(ppv, max)`; PPV counts strictly positive values.
pub fn pool(map: &[f64]) -> (f64, f64) {
    let mut positive = 0usize;
    let mut max = f64::NEG_INFINITY;
    for &v in map {
        positive += usize::from(v > 0.0);
        if v > max {
            max = v;
        }
    }
    (positive as f64 / map.len() as f64, max)
}

/// `(ppv, max)` of one kernel applied to channel-major `values`.
pub fn apply_kernel(values: &[f64], input_len: usize, kernel: &Kernel) -> Result<(f64, f64)> {
    let mut map = Vec::new();
    feature_map_into(values, input_len, kernel, &mut map)?;
    Ok(pool(&map))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMeta {
    pub subject_id: String,
    pub condition: Condition,
    pub task: Task,
    pub session_id: String,
    pub trial_index: usize,
}

impl RowMeta {
    pub fn label(&self) -> Label {
        self.condition.label()
    }

    pub fn of(t: &Trial) -> Self {
        RowMeta {
            subject_id: t.subject_id.clone(),
            condition: t.condition,
            task: t.task,
            session_id: t.session_id.clone(),
            trial_index: t.trial_index,
        }
    }
}

/// Dense row-major feature matrix with per-row trial metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub meta: Vec<RowMeta>,
}

impl FeatureMatrix {
    pub fn new(cols: usize, data: Vec<f64>, meta: Vec<RowMeta>) -> Result<Self> {
        if data.len() != cols * meta.len() {
            return Err(Error::Shape(format!(
                "{} values for {} rows × {cols} columns",
                data.len(),
                meta.len()
            )));
        }
        Ok(FeatureMatrix {
            rows: meta.len(),
            cols,
            data,
            meta,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn labels(&self) -> Vec<Label> {
        self.meta.iter().map(RowMeta::label).collect()
    }

    /// Copies the given rows (in order) into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            rows: rows.len(),
            cols: self.cols,
            data,
            meta: rows.iter().map(|&r| self.meta[r].clone()).collect(),
        }
    }

    /// Copies the given columns (in order) into a new matrix.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        FeatureMatrix {
            rows: self.rows,
            cols: cols.len(),
            data,
            meta: self.meta.clone(),
        }
    }

    /// Tab-separated dump: metadata columns, then one column per feature id.
    pub fn write_tsv<W: Write>(&self, column_ids: &[usize], mut sink: W) -> Result<()> {
        if column_ids.len() != self.cols {
            return Err(Error::Shape(format!(
                "{} column ids for {} columns",
                column_ids.len(),
                self.cols
            )));
        }
        let mut line = String::from("subject\tcondition\tlabel\ttask\tsession\ttrial_index");
        for c in column_ids {
            let kind = if c % 2 == 0 { "ppv" } else { "max" };
            let _ = write!(line, "\t{kind}_{}", c / 2);
        }
        writeln!(sink, "{line}")?;
        for r in 0..self.rows {
            let m = &self.meta[r];
            line.clear();
            let _ = write!(
                line,
                "{}\t{}\t{}\t{}\t{}\t{}",
                m.subject_id,
                m.condition,
                m.label(),
                m.task,
                m.session_id,
                m.trial_index
            );
            for v in self.row(r) {
                let _ = write!(line, "\t{v}");
            }
            writeln!(sink, "{line}")?;
        }
        Ok(())
    }
}

/// Features of one trial, `(ppv, max)` per kernel.
pub fn transform_trial(trial: &Trial, bank: &KernelBank) -> Result<Vec<f64>> {
    let mut row = vec![0.0; bank.num_features()];
    let mut map = Vec::with_capacity(trial.values().len());
    fill_row(trial.values(), bank, &mut row, &mut map)?;
    Ok(row)
}

fn fill_row(values: &[f64], bank: &KernelBank, row: &mut [f64], map: &mut Vec<f64>) -> Result<()> {
    for (k, kernel) in bank.kernels.iter().enumerate() {
        feature_map_into(values, bank.input_length, kernel, map)?;
        let (ppv, max) = pool(map);
        row[2 * k] = ppv;
        row[2 * k + 1] = max;
    }
    Ok(())
}

/// Transforms every trial; row `i` belongs to trial `i`. Rows are computed
/// in parallel and independently, so the result does not depend on the
/// number of worker threads.
pub fn transform(dataset: &TrialDataset, bank: &KernelBank) -> Result<FeatureMatrix> {
    if bank.input_length != TRIAL_LEN || bank.num_channels != NUM_CHANNELS {
        return Err(Error::Shape(format!(
            "bank built for {}×{} inputs, trials are {NUM_CHANNELS}×{TRIAL_LEN}",
            bank.num_channels, bank.input_length
        )));
    }
    let cols = bank.num_features();
    let mut data = vec![0.0; dataset.len() * cols];
    if cols > 0 {
        data.par_chunks_mut(cols)
            .zip(dataset.trials().par_iter())
            .try_for_each_init(Vec::new, |map, (row, trial)| {
                fill_row(trial.values(), bank, row, map)
            })?;
    }
    let meta = dataset.trials().iter().map(RowMeta::of).collect();
    FeatureMatrix::new(cols, data, meta)
}

/// Per-column standardization learned from training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Standardizes one value of column `c`.
    #[inline]
    pub fn apply_value(&self, c: usize, v: f64) -> f64 {
        (v - self.mean[c]) / (self.std[c] + NORMALIZER_EPSILON)
    }

    pub fn apply(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        if features.cols != self.mean.len() {
            return Err(Error::Shape(format!(
                "normalizer has {} columns, matrix {}",
                self.mean.len(),
                features.cols
            )));
        }
        let mut out = features.clone();
        for row in out.data.chunks_mut(out.cols.max(1)) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.apply_value(c, *v);
            }
        }
        Ok(out)
    }
}

/// Column means and population standard deviations over `rows`.
pub fn fit_normalizer(features: &FeatureMatrix, rows: &[usize]) -> Result<Normalizer> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "normalizer needs at least 2 training rows, got {}",
            rows.len()
        )));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; features.cols];
    for &r in rows {
        for (m, v) in mean.iter_mut().zip(features.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; features.cols];
    for &r in rows {
        for ((s, v), m) in var.iter_mut().zip(features.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok(Normalizer { mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(weights: Vec<f64>, bias: f64, dilation: usize, padding: bool) -> Kernel {
        Kernel {
            length: weights.len(),
            channels: vec![0],
            weights,
            bias,
            dilation,
            padding,
        }
    }

    #[test]
    fn hand_computed_feature_map() {
        let k = kernel(vec![1.0, -1.0], 0.0, 1, false);
        let mut map = Vec::new();
        feature_map_into(&[1.0, 0.0, -1.0, 2.0], 4, &k, &mut map).unwrap();
        assert_eq!(map, vec![1.0, 1.0, -3.0]);
        let (ppv, max) = pool(&map);
        assert!((ppv - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn zero_input_gives_zero_features() {
        let k = kernel(vec![0.3, -0.1, -0.2], 0.0, 2, true);
        let (ppv, max) = apply_kernel(&[0.0; 20], 20, &k).unwrap();
        assert_eq!((ppv, max), (0.0, 0.0));
    }

    #[test]
    fn dominant_bias_gives_full_ppv() {
        let k = kernel(vec![0.01, -0.02, 0.01], 10.0, 1, true);
        let x: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        assert_eq!(apply_kernel(&x, 30, &k).unwrap().0, 1.0);
    }

    #[test]
    fn padded_map_keeps_input_length() {
        let k = kernel(vec![1.0, 0.0, -1.0], 0.0, 2, true);
        assert_eq!(k.pad(), 2);
        let mut map = Vec::new();
        feature_map_into(&[1.0, 2.0, 3.0, 4.0, 5.0], 5, &k, &mut map).unwrap();
        // f[i] = x[i-2] - x[i+2] with zeros outside
        assert_eq!(map, vec![-3.0, -4.0, -4.0, 2.0, 3.0]);
    }

    #[test]
    fn oversized_kernel_is_degenerate() {
        let k = kernel(vec![1.0, -1.0], 0.0, 10, false);
        assert!(matches!(
            apply_kernel(&[0.0; 5], 5, &k),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn generated_kernels_respect_their_distributions() {
        let bank = generate_kernels(2000, TRIAL_LEN, NUM_CHANNELS, 11).unwrap();
        for k in &bank.kernels {
            assert!(KERNEL_LENGTHS.contains(&k.length));
            assert!(!k.channels.is_empty() && k.channels.len() <= NUM_CHANNELS);
            assert!(k.channels.windows(2).all(|w| w[0] < w[1]));
            for c in 0..k.channels.len() {
                assert!(k.channel_weights(c).iter().sum::<f64>().abs() < 1e-9);
            }
            assert!((-1.0..1.0).contains(&k.bias));
            assert!(k.dilation >= 1);
            assert!(k.span() < TRIAL_LEN);
            // floor(2^log2(439/(len-1)))
            assert!(k.dilation <= (TRIAL_LEN - 1) / (k.length - 1));
            if k.length == 9 {
                assert!(k.dilation <= 54);
            }
        }
        let padded = bank.kernels.iter().filter(|k| k.padding).count();
        assert!((800..1200).contains(&padded), "{padded}");
        for len in KERNEL_LENGTHS {
            let n = bank.kernels.iter().filter(|k| k.length == len).count();
            assert!((550..780).contains(&n), "length {len}: {n}");
        }
    }

    #[test]
    fn same_seed_same_bank_text() {
        let dump = |seed| {
            let mut buf = Vec::new();
            generate_kernels(50, TRIAL_LEN, NUM_CHANNELS, seed)
                .unwrap()
                .write(&mut buf)
                .unwrap();
            buf
        };
        assert_eq!(dump(7), dump(7));
        assert_ne!(dump(7), dump(8));
    }

    #[test]
    fn bank_text_round_trips() {
        let bank = generate_kernels(20, TRIAL_LEN, NUM_CHANNELS, 3).unwrap();
        let mut buf = Vec::new();
        bank.write(&mut buf).unwrap();
        let back = KernelBank::read(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back, bank);
    }

    #[test]
    fn zero_channels_rejected() {
        assert!(matches!(
            generate_kernels(5, 440, 0, 1),
            Err(Error::Domain(_))
        ));
    }

    fn toy_matrix() -> FeatureMatrix {
        let meta = (0..4)
            .map(|i| RowMeta {
                subject_id: format!("s{i}"),
                condition: Condition::Hc,
                task: Task::Prosaccade,
                session_id: "x".into(),
                trial_index: i,
            })
            .collect();
        let data = vec![1.0, 5.0, 2.0, 3.0, 5.0, 2.0, 4.0, 5.0, 2.0, 10.0, 5.0, 2.0];
        FeatureMatrix::new(3, data, meta).unwrap()
    }

    #[test]
    fn normalizer_standardizes_training_rows() {
        let m = toy_matrix();
        let norm = fit_normalizer(&m, &[0, 1, 2]).unwrap();
        let z = norm.apply(&m.select_rows(&[0, 1, 2])).unwrap();
        let col = |c: usize| -> Vec<f64> { (0..3).map(|r| z.row(r)[c]).collect() };
        let x0 = col(0);
        let mean = x0.iter().sum::<f64>() / 3.0;
        let std = (x0.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0).sqrt();
        assert!(mean.abs() < 1e-9 && (std - 1.0).abs() < 1e-6);
        // constant columns collapse to zero
        assert!(col(1).iter().chain(&col(2)).all(|v| *v == 0.0));
        // held-out row uses training statistics
        let held = norm.apply(&m.select_rows(&[3])).unwrap();
        assert!(held.row(0)[0] > 2.0);
    }

    #[test]
    fn normalizer_needs_two_rows() {
        assert!(matches!(
            fit_normalizer(&toy_matrix(), &[0]),
            Err(Error::InsufficientData(_))
        ));
    }
}
