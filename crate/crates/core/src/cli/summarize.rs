use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::CSV_HEADER;
use crate::error::{Error, Result};
use crate::federation::Strategy;

/// Strategy columns of the comparison table, in display order.
pub const TABLE_STRATEGIES: [Strategy; 4] =
    [Strategy::FedAdp, Strategy::FlexiFed, Strategy::ClusteredFl, Strategy::Standalone];

/// Final-round global accuracy of one metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub path: PathBuf,
    pub strategy: String,
    pub dataset: String,
    pub final_accuracy: f64,
}

/// Mean and sample standard deviation of final accuracies for one
/// (dataset, strategy) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

impl Cell {
    pub fn from_values(values: &[f64]) -> Cell {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Cell { runs: n, mean, std }
    }

    pub fn display(&self) -> String {
        format!("{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// `dataset -> strategy -> cell`.
    pub cells: BTreeMap<String, BTreeMap<String, Cell>>,
}

pub fn read_run(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (mut strategy, mut dataset) = (None, None);
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let mut parts = line.trim_start_matches('#').trim().splitn(2, ' ');
        match (parts.next(), parts.next()) {
            (Some("strategy"), Some(v)) => strategy = Some(v.trim().to_string()),
            (Some("dataset"), Some(v)) => dataset = Some(v.trim().to_string()),
            _ => {}
        }
    }
    let bad = |reason: String| Error::Input(format!("{}: {reason}", path.display()));
    let strategy = strategy.ok_or_else(|| bad("missing `# strategy` metadata line".into()))?;
    let dataset = dataset.ok_or_else(|| bad("missing `# dataset` metadata line".into()))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(bad(format!("header {:?} does not match {:?}", header.iter().collect::<Vec<_>>(), CSV_HEADER)));
    }
    let mut last: Option<(usize, f64)> = None;
    for row in reader.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if &row[1] != "global" {
            continue;
        }
        let round: usize = row[0].parse().map_err(|_| bad(format!("bad round `{}`", &row[0])))?;
        let acc: f64 = row[4].parse().map_err(|_| bad(format!("bad accuracy `{}`", &row[4])))?;
        if last.is_none_or(|(r, _)| round >= r) {
            last = Some((round, acc));
        }
    }
    let (_, final_accuracy) = last.ok_or_else(|| bad("no global rows".into()))?;
    Ok(RunRecord {
        path: path.to_path_buf(),
        strategy,
        dataset,
        final_accuracy,
    })
}

pub fn summarize(paths: &[PathBuf]) -> Result<Summary> {
    let mut values: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for p in paths {
        let r = read_run(p)?;
        values.entry(r.dataset).or_default().entry(r.strategy).or_default().push(r.final_accuracy);
    }
    let cells = values
        .into_iter()
        .map(|(d, m)| (d, m.into_iter().map(|(s, v)| (s, Cell::from_values(&v))).collect()))
        .collect();
    Ok(Summary { cells })
}

impl Summary {
    /// Strategies shown as columns: the four table strategies, followed by
    /// any others that appear in the inputs.
    fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = TABLE_STRATEGIES.iter().map(|s| s.to_string()).collect();
        for row in self.cells.values() {
            for s in row.keys() {
                if !cols.contains(s) {
                    cols.push(s.clone());
                }
            }
        }
        cols
    }

    /// Aligned text table, one row per dataset.
    pub fn render_table(&self) -> String {
        let cols = self.columns();
        let mut rows = vec![std::iter::once("dataset".to_string()).chain(cols.iter().cloned()).collect::<Vec<_>>()];
        for (dataset, row) in &self.cells {
            let mut line = vec![dataset.clone()];
            line.extend(cols.iter().map(|c| row.get(c).map_or("-".into(), Cell::display)));
            rows.push(line);
        }
        let widths: Vec<usize> =
            (0..=cols.len()).map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap()).collect();
        let mut out = String::new();
        for r in rows {
            let cells: Vec<String> =
                r.iter().zip(&widths).map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["dataset", "strategy", "runs", "mean", "std"]).map_err(io)?;
        for (d, row) in &self.cells {
            for (s, c) in row {
                w.write_record([d.clone(), s.clone(), c.runs.to_string(), c.mean.to_string(), c.std.to_string()])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}
