//! File formats: datasets, configs, reports, plot data, training logs.
//!
//! Datasets ship in two equivalent forms selected by file extension:
//!
//! * `.odmd.jsonl` — one self-describing JSON record per line, floats
//!   printed with 17 significant digits (round-trip exact for f64);
//! * `.odmd.bin` — little-endian binary with length-prefixed records.
//!
//! Both round-trip bit-exactly. Config files and reports are plain JSON with
//! a `schema_version` header; unknown fields are rejected by name.

use std::fmt::Write as FmtWrite;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchmarkSet, EvalReport, SetReport};
use crate::error::{OdmdError, Result};
use crate::generate::{DepthExample, ExampleMeta, GenerationConfig};
use crate::geometry::{BoundingBox, CameraIntrinsics, CameraPosition, Observation, ObservationSet};
use crate::train::{TrainConfig, TrainLogRow};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
const BIN_MAGIC: &[u8; 8] = b"ODMDBIN1";

/// 17 significant digits: the shortest count that reproduces every f64
/// exactly.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Extension dispatch

pub fn write_dataset(path: &Path, set: &BenchmarkSet) -> Result<()> {
    match dataset_format(path)? {
        DatasetFormat::Jsonl => write_jsonl(path, set),
        DatasetFormat::Binary => write_binary(path, set),
    }
}

pub fn read_dataset(path: &Path) -> Result<BenchmarkSet> {
    match dataset_format(path)? {
        DatasetFormat::Jsonl => read_jsonl(path),
        DatasetFormat::Binary => read_binary(path),
    }
}

enum DatasetFormat {
    Jsonl,
    Binary,
}

fn dataset_format(path: &Path) -> Result<DatasetFormat> {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
    if name.ends_with(".jsonl") {
        Ok(DatasetFormat::Jsonl)
    } else if name.ends_with(".bin") {
        Ok(DatasetFormat::Binary)
    } else {
        Err(OdmdError::input(format!(
            "cannot infer dataset format from {name:?}; use .odmd.jsonl or .odmd.bin"
        )))
    }
}

fn set_name_from_path(path: &Path) -> String {
    let mut name = path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    for suffix in [".jsonl", ".bin", ".odmd"] {
        if let Some(stripped) = name.strip_suffix(suffix) {
            name = stripped.to_string();
        }
    }
    name
}

// ---------------------------------------------------------------------------
// JSONL

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordDe {
    schema_version: u32,
    n: usize,
    intrinsics: CameraIntrinsics,
    observations: Vec<ObsDe>,
    #[serde(rename = "label_Z")]
    label_z: f64,
    meta: Option<MetaDe>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObsDe {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    #[serde(rename = "CX")]
    cx: f64,
    #[serde(rename = "CY")]
    cy: f64,
    #[serde(rename = "CZ")]
    cz: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaDe {
    object_w: f64,
    object_h: f64,
    #[serde(rename = "X1")]
    x1: f64,
    #[serde(rename = "Y1")]
    y1: f64,
    #[serde(rename = "Z1")]
    z1: f64,
    reversed: bool,
    stream: u64,
}

fn write_record_line(out: &mut String, ex: &DepthExample, k: &CameraIntrinsics) {
    out.clear();
    let _ = write!(
        out,
        "{{\"schema_version\":{DATASET_SCHEMA_VERSION},\"n\":{},\"intrinsics\":{{\"fx\":{},\"fy\":{},\"cx\":{},\"cy\":{},\"width\":{},\"height\":{}}},\"observations\":[",
        ex.obs.len(),
        fmt17(k.fx),
        fmt17(k.fy),
        fmt17(k.cx),
        fmt17(k.cy),
        fmt17(k.width),
        fmt17(k.height),
    );
    for (i, o) in ex.obs.observations().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"x\":{},\"y\":{},\"w\":{},\"h\":{},\"CX\":{},\"CY\":{},\"CZ\":{}}}",
            fmt17(o.bbox.x),
            fmt17(o.bbox.y),
            fmt17(o.bbox.w),
            fmt17(o.bbox.h),
            fmt17(o.position.x),
            fmt17(o.position.y),
            fmt17(o.position.z),
        );
    }
    let _ = write!(out, "],\"label_Z\":{}", fmt17(ex.label_z));
    match &ex.meta {
        Some(m) => {
            let _ = write!(
                out,
                ",\"meta\":{{\"object_w\":{},\"object_h\":{},\"X1\":{},\"Y1\":{},\"Z1\":{},\"reversed\":{},\"stream\":{}}}}}",
                fmt17(m.object_width),
                fmt17(m.object_height),
                fmt17(m.initial_center[0]),
                fmt17(m.initial_center[1]),
                fmt17(m.initial_center[2]),
                m.reversed,
                m.stream,
            );
        }
        None => out.push_str(",\"meta\":null}"),
    }
    out.push('\n');
}

pub fn write_jsonl(path: &Path, set: &BenchmarkSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut line = String::with_capacity(2048);
    for ex in &set.examples {
        write_record_line(&mut line, ex, &set.intrinsics);
        w.write_all(line.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<BenchmarkSet> {
    let reader = BufReader::new(File::open(path)?);
    let mut examples = Vec::new();
    let mut intrinsics: Option<CameraIntrinsics> = None;
    let mut n_expected: Option<usize> = None;

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordDe = serde_json::from_str(&line)
            .map_err(|e| OdmdError::parse(line_no, e.to_string()))?;
        if rec.schema_version != DATASET_SCHEMA_VERSION {
            return Err(OdmdError::Version {
                expected: format!("schema_version {DATASET_SCHEMA_VERSION}"),
                found: format!("schema_version {}", rec.schema_version),
            });
        }
        let example = record_to_example(rec, line_no, &mut intrinsics, &mut n_expected)?;
        examples.push(example);
    }
    finish_set(path, examples, intrinsics)
}

fn record_to_example(
    rec: RecordDe,
    line_no: usize,
    intrinsics: &mut Option<CameraIntrinsics>,
    n_expected: &mut Option<usize>,
) -> Result<DepthExample> {
    if rec.observations.len() != rec.n {
        return Err(OdmdError::parse(
            line_no,
            format!("n={} but {} observations", rec.n, rec.observations.len()),
        ));
    }
    match n_expected {
        Some(n) if *n != rec.n => {
            return Err(OdmdError::parse(
                line_no,
                format!("n changed from {n} to {}", rec.n),
            ));
        }
        None => *n_expected = Some(rec.n),
        _ => {}
    }
    match intrinsics {
        Some(k) if *k != rec.intrinsics => {
            return Err(OdmdError::parse(line_no, "intrinsics differ across records"));
        }
        None => {
            rec.intrinsics
                .validate()
                .map_err(|e| OdmdError::parse(line_no, e.to_string()))?;
            *intrinsics = Some(rec.intrinsics);
        }
        _ => {}
    }
    if !(rec.label_z > 0.0) {
        return Err(OdmdError::parse(
            line_no,
            format!("label_Z must be positive, got {}", rec.label_z),
        ));
    }
    let observations = rec
        .observations
        .iter()
        .map(|o| {
            Ok(Observation {
                bbox: BoundingBox::new(o.x, o.y, o.w, o.h)
                    .map_err(|e| OdmdError::parse(line_no, e.to_string()))?,
                position: CameraPosition::new(o.cx, o.cy, o.cz),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DepthExample {
        obs: ObservationSet::new(observations)
            .map_err(|e| OdmdError::parse(line_no, e.to_string()))?,
        label_z: rec.label_z,
        meta: rec.meta.map(|m| ExampleMeta {
            object_width: m.object_w,
            object_height: m.object_h,
            initial_center: [m.x1, m.y1, m.z1],
            reversed: m.reversed,
            stream: m.stream,
        }),
    })
}

fn finish_set(
    path: &Path,
    examples: Vec<DepthExample>,
    intrinsics: Option<CameraIntrinsics>,
) -> Result<BenchmarkSet> {
    let intrinsics = intrinsics
        .ok_or_else(|| OdmdError::parse(0, format!("{} holds no records", path.display())))?;
    Ok(BenchmarkSet {
        name: set_name_from_path(path),
        split: None,
        intrinsics,
        examples,
        provenance: None,
    })
}

// ---------------------------------------------------------------------------
// Binary

pub fn write_binary(path: &Path, set: &BenchmarkSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BIN_MAGIC)?;
    w.write_all(&DATASET_SCHEMA_VERSION.to_le_bytes())?;
    w.write_all(&(set.examples.len() as u64).to_le_bytes())?;
    let k = &set.intrinsics;
    for ex in &set.examples {
        let n = ex.obs.len();
        let meta_len = if ex.meta.is_some() { 5 * 8 + 1 + 8 } else { 0 };
        let record_len = 4 + 6 * 8 + n * 7 * 8 + 8 + 1 + meta_len;
        w.write_all(&(record_len as u32).to_le_bytes())?;
        w.write_all(&(n as u32).to_le_bytes())?;
        for v in [k.fx, k.fy, k.cx, k.cy, k.width, k.height] {
            w.write_all(&v.to_le_bytes())?;
        }
        for o in ex.obs.observations() {
            for v in [
                o.bbox.x,
                o.bbox.y,
                o.bbox.w,
                o.bbox.h,
                o.position.x,
                o.position.y,
                o.position.z,
            ] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.write_all(&ex.label_z.to_le_bytes())?;
        match &ex.meta {
            Some(m) => {
                w.write_all(&[1u8])?;
                for v in [
                    m.object_width,
                    m.object_height,
                    m.initial_center[0],
                    m.initial_center[1],
                    m.initial_center[2],
                ] {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(&[m.reversed as u8])?;
                w.write_all(&m.stream.to_le_bytes())?;
            }
            None => w.write_all(&[0u8])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<BenchmarkSet> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BIN_MAGIC {
        return Err(OdmdError::Version {
            expected: String::from_utf8_lossy(BIN_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let version = read_u32(&mut r)?;
    if version != DATASET_SCHEMA_VERSION {
        return Err(OdmdError::Version {
            expected: DATASET_SCHEMA_VERSION.to_string(),
            found: version.to_string(),
        });
    }
    let count = read_u64(&mut r)? as usize;
    let mut examples = Vec::with_capacity(count);
    let mut intrinsics: Option<CameraIntrinsics> = None;
    for idx in 0..count {
        let record_no = idx + 1;
        let record_len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; record_len];
        r.read_exact(&mut buf)
            .map_err(|e| OdmdError::parse(record_no, format!("truncated record: {e}")))?;
        let mut cur = &buf[..];
        let n = read_u32(&mut cur)? as usize;
        let k = CameraIntrinsics {
            fx: read_f64(&mut cur)?,
            fy: read_f64(&mut cur)?,
            cx: read_f64(&mut cur)?,
            cy: read_f64(&mut cur)?,
            width: read_f64(&mut cur)?,
            height: read_f64(&mut cur)?,
        };
        match &intrinsics {
            Some(prev) if *prev != k => {
                return Err(OdmdError::parse(record_no, "intrinsics differ across records"));
            }
            None => intrinsics = Some(k),
            _ => {}
        }
        let mut observations = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, y, w, h) = (
                read_f64(&mut cur)?,
                read_f64(&mut cur)?,
                read_f64(&mut cur)?,
                read_f64(&mut cur)?,
            );
            let position = CameraPosition::new(
                read_f64(&mut cur)?,
                read_f64(&mut cur)?,
                read_f64(&mut cur)?,
            );
            observations.push(Observation {
                bbox: BoundingBox::new(x, y, w, h)
                    .map_err(|e| OdmdError::parse(record_no, e.to_string()))?,
                position,
            });
        }
        let label_z = read_f64(&mut cur)?;
        let mut flag = [0u8; 1];
        cur.read_exact(&mut flag)?;
        let meta = if flag[0] == 1 {
            let object_width = read_f64(&mut cur)?;
            let object_height = read_f64(&mut cur)?;
            let initial_center = [read_f64(&mut cur)?, read_f64(&mut cur)?, read_f64(&mut cur)?];
            let mut reversed = [0u8; 1];
            cur.read_exact(&mut reversed)?;
            let stream = read_u64(&mut cur)?;
            Some(ExampleMeta {
                object_width,
                object_height,
                initial_center,
                reversed: reversed[0] != 0,
                stream,
            })
        } else {
            None
        };
        examples.push(DepthExample {
            obs: ObservationSet::new(observations)
                .map_err(|e| OdmdError::parse(record_no, e.to_string()))?,
            label_z,
            meta,
        });
    }
    finish_set(path, examples, intrinsics)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

// ---------------------------------------------------------------------------
// Config files

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerationConfigFile {
    schema_version: u32,
    generation: GenerationConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfigFile {
    schema_version: u32,
    train: TrainConfig,
}

pub fn write_generation_config(path: &Path, cfg: &GenerationConfig) -> Result<()> {
    let file = GenerationConfigFile {
        schema_version: DATASET_SCHEMA_VERSION,
        generation: cfg.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file).expect("serializable") + "\n")?;
    Ok(())
}

pub fn read_generation_config(path: &Path) -> Result<GenerationConfig> {
    let text = std::fs::read_to_string(path)?;
    let file: GenerationConfigFile = serde_json::from_str(&text)
        .map_err(|e| OdmdError::parse(e.line(), e.to_string()))?;
    if file.schema_version != DATASET_SCHEMA_VERSION {
        return Err(OdmdError::Version {
            expected: format!("schema_version {DATASET_SCHEMA_VERSION}"),
            found: format!("schema_version {}", file.schema_version),
        });
    }
    file.generation.validate()?;
    Ok(file.generation)
}

pub fn write_train_config(path: &Path, cfg: &TrainConfig) -> Result<()> {
    let file = TrainConfigFile {
        schema_version: DATASET_SCHEMA_VERSION,
        train: cfg.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file).expect("serializable") + "\n")?;
    Ok(())
}

pub fn read_train_config(path: &Path) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path)?;
    let file: TrainConfigFile =
        serde_json::from_str(&text).map_err(|e| OdmdError::parse(e.line(), e.to_string()))?;
    if file.schema_version != DATASET_SCHEMA_VERSION {
        return Err(OdmdError::Version {
            expected: format!("schema_version {DATASET_SCHEMA_VERSION}"),
            found: format!("schema_version {}", file.schema_version),
        });
    }
    file.train.validate()?;
    Ok(file.train)
}

// ---------------------------------------------------------------------------
// Reports, plot data, train logs

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(report).expect("serializable") + "\n")?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| OdmdError::parse(e.line(), e.to_string()))
}

/// Per-example columns for error-vs-depth plots.
pub fn write_plotdata(path: &Path, report: &SetReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "label_Z,prediction,abs_error,pct_error")?;
    for r in &report.records {
        writeln!(w, "{},{},{},{}", r.label, r.prediction, r.abs_error, r.pct_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Line-delimited training log, one JSON record per validation check.
pub fn write_train_log(path: &Path, log: &[TrainLogRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in log {
        writeln!(w, "{}", serde_json::to_string(row).expect("serializable"))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_train_log(path: &Path) -> Result<Vec<TrainLogRow>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).map_err(|e| OdmdError::parse(idx + 1, e.to_string()))?,
        );
    }
    Ok(rows)
}
