//! Navier–Stokes reference data: `t,x,y,u,v,p` CSV records.
//!
//! The public cylinder-wake benchmark ships as a MATLAB archive with arrays
//! `X_star` (N×2), `t` (T×1), `U_star` (N×2×T) and `p_star` (N×T). Flatten it
//! to one row per (snapshot, point) with columns `t,x,y,u,v,p` to use it here.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PdeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

/// Axis-aligned bounding box of a space-time domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds3 {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub t: [f64; 2],
}

impl Bounds3 {
    pub fn contains(&self, x: f64, y: f64, t: f64) -> bool {
        let inside = |v: f64, r: [f64; 2]| v >= r[0] && v <= r[1];
        inside(x, self.x) && inside(y, self.y) && inside(t, self.t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceField {
    records: Vec<Record>,
}

const COLUMNS: [&str; 6] = ["t", "x", "y", "u", "v", "p"];

/// Reads a reference CSV with header `t,x,y,u,v,p` (any column order).
pub fn load_reference_csv(path: impl AsRef<Path>) -> Result<ReferenceField, PdeError> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| PdeError::Io(e.to_string()))?;
    parse_reference_csv(file)
}

pub fn parse_reference_csv<R: Read>(reader: R) -> Result<ReferenceField, PdeError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| PdeError::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() {
        return Err(PdeError::EmptyReference);
    }
    let mut index = [0usize; 6];
    for (slot, name) in index.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(PdeError::MissingColumn(name))?;
    }
    let mut records = Vec::new();
    let mut keys = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| PdeError::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let mut vals = [0.0; 6];
        for (k, (&col, name)) in index.iter().zip(COLUMNS).enumerate() {
            let field = row.get(col).ok_or_else(|| PdeError::Parse {
                row: row_no,
                message: format!("missing field `{name}`"),
            })?;
            let v: f64 = field.parse().map_err(|_| PdeError::Parse {
                row: row_no,
                message: format!("`{name}` is not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(PdeError::NonFinite {
                    row: row_no,
                    column: name,
                });
            }
            vals[k] = v;
        }
        let rec = Record {
            t: vals[0],
            x: vals[1],
            y: vals[2],
            u: vals[3],
            v: vals[4],
            p: vals[5],
        };
        if !keys.insert([rec.t.to_bits(), rec.x.to_bits(), rec.y.to_bits()]) {
            return Err(PdeError::DuplicateKey { row: row_no });
        }
        records.push(rec);
    }
    ReferenceField::new(records)
}

impl ReferenceField {
    pub fn new(records: Vec<Record>) -> Result<Self, PdeError> {
        if records.is_empty() {
            return Err(PdeError::EmptyReference);
        }
        Ok(ReferenceField { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn bounds(&self) -> Bounds3 {
        let mut b = Bounds3 {
            x: [f64::INFINITY, f64::NEG_INFINITY],
            y: [f64::INFINITY, f64::NEG_INFINITY],
            t: [f64::INFINITY, f64::NEG_INFINITY],
        };
        for r in &self.records {
            for (range, v) in [(&mut b.x, r.x), (&mut b.y, r.y), (&mut b.t, r.t)] {
                range[0] = range[0].min(v);
                range[1] = range[1].max(v);
            }
        }
        b
    }

    pub fn final_time(&self) -> f64 {
        self.bounds().t[1]
    }

    /// Records strictly before the final snapshot (training pool) and the
    /// final-snapshot records (held-out test set).
    pub fn split_final_time(&self) -> (Vec<Record>, Vec<Record>) {
        let t_end = self.final_time();
        self.records.iter().partition(|r| r.t < t_end)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PdeError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| PdeError::Io(e.to_string());
        w.write_record(COLUMNS).map_err(io)?;
        for r in &self.records {
            w.write_record(
                [r.t, r.x, r.y, r.u, r.v, r.p]
                    .iter()
                    .map(|v| format!("{v:?}")),
            )
            .map_err(io)?;
        }
        w.flush().map_err(|e| PdeError::Io(e.to_string()))
    }
}

/// Decaying Taylor–Green vortex sampled on a regular grid over
/// `[0, π]² × [0, t_end]`:
///
/// `u = −cos x sin y e^{−2νt}`, `v = sin x cos y e^{−2νt}`,
/// `p = −¼(cos 2x + cos 2y) e^{−4νt}`.
///
/// It solves the momentum equations with `λ₁ = 1`, `λ₂ = ν` exactly and is
/// divergence free.
pub fn taylor_green(nx: usize, ny: usize, nt: usize, t_end: f64, nu: f64) -> ReferenceField {
    let pi = std::f64::consts::PI;
    let lin = |n: usize, hi: f64| -> Vec<f64> {
        if n == 1 {
            return vec![0.0];
        }
        (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
    };
    let mut records = Vec::with_capacity(nx * ny * nt);
    for &t in &lin(nt, t_end) {
        let decay = (-2.0 * nu * t).exp();
        for &x in &lin(nx, pi) {
            for &y in &lin(ny, pi) {
                records.push(Record {
                    t,
                    x,
                    y,
                    u: -x.cos() * y.sin() * decay,
                    v: x.sin() * y.cos() * decay,
                    p: -0.25 * ((2.0 * x).cos() + (2.0 * y).cos()) * decay * decay,
                });
            }
        }
    }
    ReferenceField { records }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_well_formed_file() {
        let csv = "t,x,y,u,v,p\n0,1,2,0.1,0.2,0.3\n0,1.5,2,0.1,0.2,0.3\n1,1,2,0.4,0.5,0.6\n";
        let f = parse_reference_csv(csv.as_bytes()).unwrap();
        assert_eq!(f.len(), 3);
        let b = f.bounds();
        assert_eq!(b.x, [1.0, 1.5]);
        assert_eq!(b.t, [0.0, 1.0]);
        let (train, test) = f.split_final_time();
        assert_eq!((train.len(), test.len()), (2, 1));
        assert_eq!(test[0].p, 0.6);
    }

    #[test]
    fn column_order_is_free() {
        let csv = "p,v,u,y,x,t\n3,2,1,0.5,0.25,0.125\n";
        let f = parse_reference_csv(csv.as_bytes()).unwrap();
        let r = f.records()[0];
        assert_eq!(
            (r.t, r.x, r.y, r.u, r.v, r.p),
            (0.125, 0.25, 0.5, 1.0, 2.0, 3.0)
        );
    }

    #[test]
    fn nan_is_reported_with_row() {
        let csv = "t,x,y,u,v,p\n0,1,2,0.1,0.2,0.3\n0,2,2,0.1,0.2,NaN\n";
        match parse_reference_csv(csv.as_bytes()) {
            Err(PdeError::NonFinite { row, column }) => {
                assert_eq!((row, column), (2, "p"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            parse_reference_csv("t,x,y,u,v\n0,0,0,0,0\n".as_bytes()),
            Err(PdeError::MissingColumn("p"))
        ));
        assert!(matches!(
            parse_reference_csv("".as_bytes()),
            Err(PdeError::EmptyReference)
        ));
        assert!(matches!(
            parse_reference_csv("t,x,y,u,v,p\n".as_bytes()),
            Err(PdeError::EmptyReference)
        ));
        assert!(matches!(
            parse_reference_csv("t,x,y,u,v,p\n0,0,0,0,0,0\n0,0,0,1,1,1\n".as_bytes()),
            Err(PdeError::DuplicateKey { row: 2 })
        ));
        assert!(matches!(
            parse_reference_csv("t,x,y,u,v,p\n0,0,0,0,zero,0\n".as_bytes()),
            Err(PdeError::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let f = taylor_green(3, 3, 2, 1.0, 0.01);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = parse_reference_csv(buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }
}
