use std::path::Path;

use super::pipeline::ResultRow;
use crate::error::{Error, Result};

const COLUMNS: [&str; 20] = [
    "config_digest",
    "dataset",
    "architecture",
    "head",
    "body",
    "method",
    "k",
    "s",
    "seed",
    "accuracy",
    "collapsed",
    "kept_weights",
    "prunable_weights",
    "flops_sparsity",
    "layer_flops_sparsity",
    "inference_seconds",
    "train_seconds",
    "threads",
    "precision",
    "layers",
];

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// One header row, fixed column order, floats at 6 decimals. The per-layer
/// sparsities share one `;`-separated column.
pub fn emit_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(COLUMNS)?;
    for r in rows {
        let layers: Vec<String> = r.layer_flops_sparsity.iter().map(|&v| f6(v)).collect();
        w.write_record([
            r.config_digest.clone(),
            r.dataset.clone(),
            r.architecture.clone(),
            r.head.clone(),
            r.body.clone(),
            r.method.clone(),
            f6(r.k),
            f6(r.s),
            r.seed.to_string(),
            f6(r.accuracy),
            r.collapsed.to_string(),
            r.kept_weights.to_string(),
            r.prunable_weights.to_string(),
            f6(r.flops_sparsity),
            layers.join(";"),
            r.inference_seconds.map(f6).unwrap_or_default(),
            f6(r.train_seconds),
            r.threads.to_string(),
            r.precision.clone(),
            r.layer_flops_sparsity.len().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| {
        Error::format(
            path,
            format!("column {} holds {raw:?}", COLUMNS.get(i).copied().unwrap_or("?")),
        )
    })
}

/// Reads rows written by [`emit_csv`].
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rd = csv::Reader::from_reader(file);
    let header = rd.headers()?.clone();
    if header.iter().ne(COLUMNS.iter().copied()) {
        return Err(Error::format(path, "unexpected CSV header"));
    }
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let layers_raw = rec.get(14).unwrap_or("");
        let layer_flops_sparsity = if layers_raw.is_empty() {
            Vec::new()
        } else {
            layers_raw
                .split(';')
                .map(|v| v.parse().map_err(|_| Error::format(path, format!("bad layer value {v:?}"))))
                .collect::<Result<_>>()?
        };
        let inf = rec.get(15).unwrap_or("");
        out.push(ResultRow {
            config_digest: rec[0].to_string(),
            dataset: rec[1].to_string(),
            architecture: rec[2].to_string(),
            head: rec[3].to_string(),
            body: rec[4].to_string(),
            method: rec[5].to_string(),
            k: field(&rec, 6, path)?,
            s: field(&rec, 7, path)?,
            seed: field(&rec, 8, path)?,
            accuracy: field(&rec, 9, path)?,
            collapsed: field(&rec, 10, path)?,
            kept_weights: field(&rec, 11, path)?,
            prunable_weights: field(&rec, 12, path)?,
            flops_sparsity: field(&rec, 13, path)?,
            layer_flops_sparsity,
            inference_seconds: if inf.is_empty() { None } else { Some(field(&rec, 15, path)?) },
            train_seconds: field(&rec, 16, path)?,
            threads: field(&rec, 17, path)?,
            precision: rec[18].to_string(),
        });
    }
    Ok(out)
}

/// The rows as a JSON array mirroring [`ResultRow`].
pub fn emit_json(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), rows)?;
    Ok(())
}

pub fn read_json(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Long format: one line per (run, layer) with that layer's FLOPS sparsity.
pub fn emit_layer_flops(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["config_digest", "method", "k", "head", "seed", "layer_index", "flops_sparsity"])?;
    for r in rows {
        for (i, v) in r.layer_flops_sparsity.iter().enumerate() {
            w.write_record([
                r.config_digest.clone(),
                r.method.clone(),
                f6(r.k),
                r.head.clone(),
                r.seed.to_string(),
                i.to_string(),
                f6(*v),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
