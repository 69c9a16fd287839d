//! Tab-separated report tables and the long-format record file.

use std::fmt::Write as _;
use std::io::Write;

use super::experiment::{
    CutoffRow, ExperimentReport, GridTable, GroupAccuracy, Prediction, SeedRun,
};
use crate::data::Label;
use crate::error::{Error, Result};
use crate::rocket::RowMeta;

/// A delimited table with its parameters echoed as `# key=value` lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Table::default()
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Table {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# table={}", self.name);
        for (k, v) in &self.params {
            let _ = writeln!(s, "# {k}={v}");
        }
        let _ = writeln!(s, "{}", self.columns.join("\t"));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join("\t"));
        }
        s
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(self.to_tsv().as_bytes())?;
        Ok(())
    }

    /// Parses the layout written by [`Table::to_tsv`].
    pub fn from_tsv(text: &str) -> Result<Table> {
        let mut lines = text.lines().enumerate();
        let name = match lines.next() {
            Some((_, l)) if l.starts_with("# table=") => l["# table=".len()..].to_string(),
            _ => return Err(Error::format(1, "expected `# table=<name>`")),
        };
        let mut t = Table {
            name,
            ..Table::default()
        };
        for (i, line) in lines {
            if let Some(kv) = line.strip_prefix("# ") {
                if !t.columns.is_empty() {
                    return Err(Error::format(i + 1, "parameter line after the header"));
                }
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::format(i + 1, "expected `# key=value`"))?;
                t.params.push((k.to_string(), v.to_string()));
            } else if t.columns.is_empty() {
                t.columns = line.split('\t').map(str::to_string).collect();
            } else {
                let row: Vec<String> = line.split('\t').map(str::to_string).collect();
                if row.len() != t.columns.len() {
                    return Err(Error::format(
                        i + 1,
                        format!("{} fields, header has {}", row.len(), t.columns.len()),
                    ));
                }
                t.rows.push(row);
            }
        }
        if t.columns.is_empty() {
            return Err(Error::Integrity(format!("table {} has no header", t.name)));
        }
        Ok(t)
    }

    pub fn param_value(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("table {} has no column `{name}`", self.name)))
    }
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn summary_table(report: &ExperimentReport) -> Table {
    let mut t = Table::new("summary", &["metric", "mean", "std", "seeds"])
        .param("kernels", report.config.num_kernels)
        .param("alpha", report.config.alpha)
        .param("threshold", report.config.threshold)
        .param("split_seed", report.split_seed)
        .param(
            "seeds",
            report
                .runs
                .iter()
                .map(|r| r.seed.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
    for r in report.summary() {
        t.push(vec![
            r.metric.to_string(),
            f6(r.mean),
            f6(r.std),
            report.runs.len().to_string(),
        ]);
    }
    t
}

pub fn seed_table(report: &ExperimentReport) -> Table {
    let mut t = Table::new(
        "per_seed",
        &[
            "seed",
            "bank_seed",
            "trial_accuracy",
            "trial_uf1",
            "subject_accuracy",
            "subject_uf1",
            "active_features",
        ],
    );
    for r in &report.runs {
        t.push(vec![
            r.seed.to_string(),
            r.bank_seed.to_string(),
            f6(r.eval.trial.accuracy),
            f6(r.eval.trial.uf1),
            f6(r.eval.subject.accuracy),
            f6(r.eval.subject.uf1),
            r.model.num_active().to_string(),
        ]);
    }
    t
}

/// One row per scored test trial; probabilities keep full precision so the
/// metrics can be recomputed from this table alone.
pub fn predictions_table(run: &SeedRun) -> Table {
    let mut t = Table::new(
        "predictions",
        &[
            "row",
            "subject",
            "condition",
            "label",
            "task",
            "session",
            "trial_index",
            "decision",
            "probability",
            "predicted",
        ],
    )
    .param("seed", run.seed);
    for p in &run.predictions {
        let m = &p.meta;
        t.push(vec![
            p.row.to_string(),
            m.subject_id.clone(),
            m.condition.to_string(),
            m.label().to_string(),
            m.task.to_string(),
            m.session_id.clone(),
            m.trial_index.to_string(),
            format!("{:e}", p.decision),
            format!("{:e}", p.probability),
            p.predicted.to_string(),
        ]);
    }
    t
}

/// Inverse of [`predictions_table`].
pub fn predictions_from_table(table: &Table) -> Result<Vec<Prediction>> {
    let ix = [
        "row",
        "subject",
        "condition",
        "task",
        "session",
        "trial_index",
        "decision",
        "probability",
        "predicted",
    ]
    .map(|c| table.column(c));
    let ix: Vec<usize> = ix.into_iter().collect::<Result<_>>()?;
    let bad = |i: usize, what: &str, v: &str| Error::format(i + 1, format!("bad {what} `{v}`"));
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let get = |k: usize| r[ix[k]].as_str();
            let num =
                |k: usize, what: &str| get(k).parse::<f64>().map_err(|_| bad(i, what, get(k)));
            let int =
                |k: usize, what: &str| get(k).parse::<usize>().map_err(|_| bad(i, what, get(k)));
            let predicted = match get(8) {
                "HC" => Label::Hc,
                "PD" => Label::Pd,
                v => return Err(bad(i, "label", v)),
            };
            Ok(Prediction {
                row: int(0, "row")?,
                meta: RowMeta {
                    subject_id: get(1).to_string(),
                    condition: get(2).parse()?,
                    task: get(3).parse()?,
                    session_id: get(4).to_string(),
                    trial_index: int(5, "trial index")?,
                },
                decision: num(6, "decision")?,
                probability: num(7, "probability")?,
                predicted,
            })
        })
        .collect()
}

pub fn subject_table(run: &SeedRun) -> Table {
    let mut t = Table::new(
        "subjects",
        &["subject", "label", "trials", "score", "prediction"],
    )
    .param("seed", run.seed);
    for s in &run.eval.subjects {
        t.push(vec![
            s.subject_id.clone(),
            s.label.to_string(),
            s.trials.to_string(),
            f6(s.score),
            s.prediction.to_string(),
        ]);
    }
    t
}

pub fn grid_table(grid: &GridTable) -> Table {
    let mut cols = vec!["kernels".to_string()];
    cols.extend(grid.alphas.iter().map(|a| format!("alpha={a:e}")));
    let mut t = Table {
        name: "grid_search".into(),
        columns: cols,
        ..Table::default()
    }
    .param("folds", grid.per_fold.first().map_or(0, Vec::len))
    .param("metric", "mean validation uF1");
    for (k, row) in grid.kernel_counts.iter().zip(&grid.cells) {
        let mut r = vec![k.to_string()];
        r.extend(row.iter().map(|v| f6(*v)));
        t.push(r);
    }
    t
}

pub fn cutoff_table(rows: &[CutoffRow]) -> Table {
    let mut t = Table::new(
        "cutoff_sweep",
        &[
            "cutoff_hz",
            "trial_uf1_mean",
            "trial_uf1_std",
            "subject_uf1_mean",
            "subject_uf1_std",
            "trial_accuracy_mean",
            "subject_accuracy_mean",
            "baseline_trial_uf1",
            "baseline_subject_uf1",
        ],
    );
    for r in rows {
        t.push(vec![
            r.cutoff_hz.to_string(),
            f6(r.trial_uf1.0),
            f6(r.trial_uf1.1),
            f6(r.subject_uf1.0),
            f6(r.subject_uf1.1),
            f6(r.trial_accuracy.0),
            f6(r.subject_accuracy.0),
            f6(r.baseline_trial_uf1),
            f6(r.baseline_subject_uf1),
        ]);
    }
    t
}

pub fn attribute_table(groups: &[GroupAccuracy]) -> Table {
    let mut t = Table::new("attributes", &["group", "level", "trials", "mean", "std"]);
    for g in groups {
        let (m, s) = match g.mean_std {
            Some((m, s)) => (f6(m), f6(s)),
            None => ("absent".into(), "absent".into()),
        };
        t.push(vec![
            g.group.into(),
            g.level.into(),
            g.size.to_string(),
            m,
            s,
        ]);
    }
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongRecord {
    pub experiment: String,
    pub parameter: String,
    pub level: String,
    pub metric: String,
    pub value: f64,
}

pub fn experiment_long_records(name: &str, report: &ExperimentReport) -> Vec<LongRecord> {
    let mut out = Vec::new();
    for r in &report.runs {
        for (metric, value) in [
            ("trial_accuracy", r.eval.trial.accuracy),
            ("trial_uf1", r.eval.trial.uf1),
            ("subject_accuracy", r.eval.subject.accuracy),
            ("subject_uf1", r.eval.subject.uf1),
        ] {
            out.push(LongRecord {
                experiment: name.into(),
                parameter: "seed".into(),
                level: r.seed.to_string(),
                metric: metric.into(),
                value,
            });
        }
    }
    out
}

pub fn write_long_csv<W: Write>(records: &[LongRecord], mut sink: W) -> Result<()> {
    writeln!(sink, "experiment,parameter,level,metric,value")?;
    for r in records {
        writeln!(
            sink,
            "{},{},{},{},{}",
            r.experiment, r.parameter, r.level, r.metric, r.value
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_layout() {
        let mut t = Table::new("demo", &["a", "b"]).param("k", 3);
        t.push(vec!["1".into(), "x".into()]);
        assert_eq!(t.to_tsv(), "# table=demo\n# k=3\na\tb\n1\tx\n");
    }

    #[test]
    fn tsv_parse() {
        let mut t = Table::new("demo", &["a", "b"]).param("k", "x=1");
        t.push(vec!["1".into(), "".into()]);
        let back = Table::from_tsv(&t.to_tsv()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.param_value("k"), Some("x=1"));
        assert!(Table::from_tsv("a\tb\n").is_err());
        assert!(Table::from_tsv("# table=x\na\tb\n1\n").is_err());
    }

    #[test]
    fn long_csv() {
        let mut buf = Vec::new();
        let r = LongRecord {
            experiment: "e".into(),
            parameter: "cutoff".into(),
            level: "20".into(),
            metric: "uf1".into(),
            value: 0.5,
        };
        write_long_csv(&[r], &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "experiment,parameter,level,metric,value\ne,cutoff,20,uf1,0.5\n"
        );
    }
}
