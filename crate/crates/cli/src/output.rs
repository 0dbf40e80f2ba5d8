use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nehari::{Field, Mesh};
use serde::Serialize;

use crate::Failure;

/// Node coordinates and value per row; `f64` display is the shortest round-trip form.
pub fn write_field(path: &Path, field: &Field) -> Result<(), Failure> {
    let mesh = field.mesh();
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::io(&path.display().to_string(), e))?;
    let header: &[&str] = if mesh.dim() == 1 {
        &["x", "value"]
    } else {
        &["x", "y", "value"]
    };
    let fail = |e: csv::Error| Failure::io(&path.display().to_string(), e);
    w.write_record(header).map_err(fail)?;
    for (i, v) in field.values().iter().enumerate() {
        let mut row: Vec<String> = mesh.node(i)[..mesh.dim()].iter().map(f64::to_string).collect();
        row.push(v.to_string());
        w.write_record(&row).map_err(fail)?;
    }
    w.flush().map_err(|e| Failure::io(&path.display().to_string(), e))
}

/// Reads the last column of a CSV written by [`write_field`].
pub fn read_field(path: &Path, mesh: &Arc<Mesh>) -> Result<Field, Failure> {
    let fail = |e: &dyn std::fmt::Display| Failure::io(&path.display().to_string(), e);
    let mut r = csv::Reader::from_path(path).map_err(|e| fail(&e))?;
    let mut values = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| fail(&e))?;
        let cell = record.iter().next_back().unwrap_or("");
        let v: f64 = cell
            .trim()
            .parse()
            .map_err(|e| fail(&format!("row {}: `{cell}`: {e}", line + 1)))?;
        values.push(v);
    }
    if values.len() != mesh.len() {
        return Err(Failure::config(format!(
            "{}: {} values for a mesh of {} nodes",
            path.display(),
            values.len(),
            mesh.len()
        )));
    }
    Field::new(mesh.clone(), values).map_err(|e| fail(&e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::io("json", e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Failure::io(&path.display().to_string(), e))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), Failure> {
    let file = File::create(path).map_err(|e| Failure::io(&path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Failure::io("json", e))?;
        writeln!(w, "{line}").map_err(|e| Failure::io(&path.display().to_string(), e))?;
    }
    w.flush().map_err(|e| Failure::io(&path.display().to_string(), e))
}

pub fn write_samples(path: &Path, samples: &[(f64, f64)]) -> Result<(), Failure> {
    let fail = |e: csv::Error| Failure::io(&path.display().to_string(), e);
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(["t", "phi"]).map_err(fail)?;
    for (t, v) in samples {
        w.write_record([t.to_string(), v.to_string()]).map_err(fail)?;
    }
    w.flush().map_err(|e| Failure::io(&path.display().to_string(), e))
}

/// `x` in scientific notation with 6 significant digits, `-` for missing values.
pub fn sci(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.6e}"))
}
