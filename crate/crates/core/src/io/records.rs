//! CSV and JSON reports.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a report back reproduces the in-memory values exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::data::MapId;
use crate::error::{Error, Result};
use crate::eval::{BratsCurves, EvalRecord, Metric, PrCurve};
use crate::stats::{ComparisonMatrix, ModePoint};

pub const RECORD_HEADER: [&str; 6] = ["model_id", "patient_id", "map_id", "metric", "class", "value"];

pub fn write_records<W: Write>(w: W, records: &[EvalRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(RECORD_HEADER)?;
    for r in records {
        let class = r.metric.class().map(|c| c.to_string()).unwrap_or_default();
        let map = r.map_id.map(|m| m.as_str()).unwrap_or("");
        csv.write_record([
            r.model_id.as_str(),
            r.patient_id.as_str(),
            map,
            r.metric.name(),
            class.as_str(),
            r.value.to_string().as_str(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<EvalRecord>> {
    let mut csv = csv::Reader::from_reader(r);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if header != RECORD_HEADER {
        return Err(Error::Record(format!(
            "expected header {}, found {}",
            RECORD_HEADER.join(","),
            header.join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in csv.records().enumerate() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("").trim();
        let bad = |what: &str| Error::Record(format!("row {}: {what}", line + 2));
        let map_id = match field(2) {
            "" => None,
            s => Some(s.parse::<MapId>().map_err(|_| bad("unknown map id"))?),
        };
        let class = match field(4) {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|_| bad("bad class"))?),
        };
        let metric = Metric::from_parts(field(3), class).map_err(|e| bad(&e.to_string()))?;
        let value: f64 = field(5).parse().map_err(|_| bad("bad value"))?;
        if !value.is_finite() {
            return Err(bad("value is not finite"));
        }
        out.push(EvalRecord {
            model_id: field(0).to_string(),
            patient_id: field(1).to_string(),
            map_id,
            metric,
            value,
        });
    }
    Ok(out)
}

pub fn write_records_file(path: &Path, records: &[EvalRecord]) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), records)
}

pub fn read_records_file(path: &Path) -> Result<Vec<EvalRecord>> {
    read_records(File::open(path)?)
}

pub fn write_comparison_csv<W: Write>(w: W, m: &ComparisonMatrix) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record([
        "metric", "grouping", "map_a", "map_b", "k", "ties", "n", "alpha", "beta", "lo", "hi",
        "mode", "significant",
    ])?;
    let grouping = m.grouping.to_string();
    for c in &m.cells {
        csv.write_record([
            m.metric.clone(),
            grouping.clone(),
            c.map_a.to_string(),
            c.map_b.to_string(),
            c.k.to_string(),
            c.ties.to_string(),
            c.n.to_string(),
            c.alpha.to_string(),
            c.beta.to_string(),
            c.lo.to_string(),
            c.hi.to_string(),
            c.mode.to_string(),
            c.significant.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_comparison_json<W: Write>(mut w: W, m: &ComparisonMatrix) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, m)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_comparison_json(path: &Path) -> Result<ComparisonMatrix> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

pub fn write_modes_csv<W: Write>(w: W, points: &[ModePoint]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["map_a", "map_b", "mode_subset", "mode_full"])?;
    for p in points {
        csv.write_record([
            p.map_a.to_string(),
            p.map_b.to_string(),
            p.mode_subset.to_string(),
            p.mode_full.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_pr_curve_csv<W: Write>(w: W, curve: &PrCurve) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["threshold", "recall", "precision"])?;
    for p in &curve.points {
        csv.write_record([p.threshold.to_string(), p.recall.to_string(), p.precision.to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_brats_curves_csv<W: Write>(w: W, curves: &BratsCurves) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["threshold", "dice", "tpr", "tnr"])?;
    for p in curves.points() {
        csv.write_record([
            p.threshold.to_string(),
            p.dice.to_string(),
            p.tpr.to_string(),
            p.tnr.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
