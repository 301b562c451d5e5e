//! Collects finished runs into one comparison table.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::run::{TrainReport, REPORT_FILE};

pub const HEADER: [&str; 6] = ["problem", "activation", "loss", "rmae", "rrmse", "wall_s"];

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub problem: String,
    pub activation: String,
    pub loss: Option<f64>,
    pub rmae: Option<f64>,
    pub rrmse: Option<f64>,
    pub wall_s: f64,
    pub source: PathBuf,
    /// Another row has the same (problem, activation).
    pub duplicate: bool,
}

#[derive(Debug, Default)]
pub struct Table {
    pub rows: Vec<Row>,
    pub warnings: Vec<String>,
}

/// Accepts run directories or `report.json` paths directly.
pub fn aggregate<P: AsRef<Path>>(paths: &[P]) -> Table {
    let mut table = Table::default();
    for p in paths {
        let p = p.as_ref();
        let file = if p.is_dir() {
            p.join(REPORT_FILE)
        } else {
            p.to_path_buf()
        };
        match TrainReport::load(&file) {
            Ok(r) => table.rows.push(Row {
                problem: r.config.problem.to_string(),
                activation: r.config.activation.to_string(),
                loss: r.breakdown.map(|b| b.total),
                rmae: r.eval.map(|e| e.rmae),
                rrmse: r.eval.map(|e| e.rrmse),
                wall_s: r.wall_s,
                source: file,
                duplicate: false,
            }),
            Err(e) => table
                .warnings
                .push(format!("skipped {}: {e}", file.display())),
        }
    }
    // runs without metrics sort last within their problem
    table.rows.sort_by(|a, b| {
        a.problem.cmp(&b.problem).then_with(|| {
            let key = |r: &Row| r.rrmse.unwrap_or(f64::INFINITY);
            key(a).total_cmp(&key(b))
        })
    });
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    for r in &table.rows {
        *seen
            .entry((r.problem.clone(), r.activation.clone()))
            .or_default() += 1;
    }
    for r in &mut table.rows {
        if seen[&(r.problem.clone(), r.activation.clone())] > 1 {
            r.duplicate = true;
            table.warnings.push(format!(
                "duplicate {}/{} from {}",
                r.problem,
                r.activation,
                r.source.display()
            ));
        }
    }
    table
}

impl Table {
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.problem.clone(),
                r.activation.clone(),
                opt(r.loss),
                opt(r.rmae),
                opt(r.rrmse),
                r.wall_s.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
