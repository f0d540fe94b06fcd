//! On-disk artifact formats: snapshot sets, bias maps, traces, profiles,
//! schedules, and evaluation outputs.
//!
//! Every format is line-oriented text: one compact JSON header line where a
//! file carries identity metadata, then fixed-column CSV rows. Floats print
//! in shortest round-trip form, so parsing a file and rewriting it
//! reproduces the bytes exactly. Bitmaps are lowercase hex with bit 0 on
//! the most significant end of the first digit. Readers name the offending
//! path and, for row-level problems, the 1-based line number.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::aging::AgingSchedule;
use crate::classify::Label;
use crate::error::{Error, Result};
use crate::eval::EvaluationReport;
use crate::sram::{CellBiasMap, CellCategory, SnapshotSet};
use crate::stats::roc::RocCurve;
use crate::swbias::{SoftwareBiasProfile, WriteEvent, WriteTrace};

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::io(path.display().to_string(), e)
}

fn parse_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::parse(path.display().to_string(), reason)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Encode `n_bits` bits as lowercase hex, bit 0 at the MSB of the first
/// digit; the final digit is zero-padded on the low side.
fn hex_encode_bits(n_bits: usize, bit_at: impl Fn(usize) -> bool) -> String {
    let n_digits = n_bits.div_ceil(4);
    let mut s = String::with_capacity(n_digits);
    for d in 0..n_digits {
        let mut v = 0u32;
        for j in 0..4 {
            let idx = 4 * d + j;
            if idx < n_bits && bit_at(idx) {
                v |= 8 >> j;
            }
        }
        s.push(char::from_digit(v, 16).expect("nibble"));
    }
    s
}

/// Decode the `hex_encode_bits` form into LSB-first packed words. Padding
/// bits must be zero.
fn hex_decode_bits(s: &str, n_bits: usize) -> std::result::Result<Vec<u64>, String> {
    let n_digits = n_bits.div_ceil(4);
    if s.chars().count() != n_digits {
        return Err(format!(
            "expected {n_digits} hex digits, got {}",
            s.chars().count()
        ));
    }
    let mut words = vec![0u64; n_bits.div_ceil(64)];
    for (d, c) in s.chars().enumerate() {
        let v = c
            .to_digit(16)
            .ok_or_else(|| format!("invalid hex digit {c:?}"))?;
        for j in 0..4 {
            if v & (8 >> j) != 0 {
                let idx = 4 * d + j;
                if idx >= n_bits {
                    return Err("bits set beyond the declared width".to_string());
                }
                words[idx / 64] |= 1 << (idx % 64);
            }
        }
    }
    Ok(words)
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    device_id: String,
    n_cells: usize,
    k_samples: usize,
    label: String,
}

/// JSON header line, then one hex bitmap line per power-on sample.
pub fn write_snapshot_set(path: impl AsRef<Path>, s: &SnapshotSet) -> Result<()> {
    let path = path.as_ref();
    let header = SnapshotHeader {
        device_id: s.device_id.clone(),
        n_cells: s.n_cells,
        k_samples: s.k_samples,
        label: s.label.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for sample in 0..s.k_samples {
        out.push_str(&hex_encode_bits(s.n_cells, |cell| s.bit(sample, cell)));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_snapshot_set(path: impl AsRef<Path>) -> Result<SnapshotSet> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file, expected JSON header"))?;
    let h: SnapshotHeader = serde_json::from_str(header_line)
        .map_err(|e| parse_err(path, format!("line 1: {e}")))?;
    let mut s = SnapshotSet::new_empty(h.device_id, h.label, h.n_cells, h.k_samples)?;
    for sample in 0..h.k_samples {
        let line = lines.next().ok_or_else(|| {
            parse_err(
                path,
                format!("expected {} sample lines, found {sample}", h.k_samples),
            )
        })?;
        let words = hex_decode_bits(line, h.n_cells)
            .map_err(|r| parse_err(path, format!("line {}: {r}", sample + 2)))?;
        for cell in 0..h.n_cells {
            if (words[cell / 64] >> (cell % 64)) & 1 == 1 {
                s.set(sample, cell, true);
            }
        }
    }
    if lines.next().is_some() {
        return Err(parse_err(
            path,
            format!("trailing data after {} sample lines", h.k_samples),
        ));
    }
    Ok(s)
}

/// CSV `cell_index,ones_count,category`, indices 0-based.
pub fn write_bias_map(path: impl AsRef<Path>, m: &CellBiasMap) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("cell_index,ones_count,category\n");
    for cell in 0..m.n_cells {
        let _ = writeln!(
            out,
            "{cell},{},{}",
            m.ones_count[cell],
            m.category(cell).as_str()
        );
    }
    write_text(path, &out)
}

/// The category column is redundant with the count; a mismatch means the
/// file was edited or produced under a different K and is rejected.
pub fn read_bias_map(path: impl AsRef<Path>, k_samples: usize) -> Result<CellBiasMap> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "cell_index,ones_count,category")) => {}
        _ => {
            return Err(parse_err(
                path,
                "line 1: expected header cell_index,ones_count,category",
            ))
        }
    }
    let mut counts = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                format!("line {lineno}: expected 3 fields, got {}", fields.len()),
            ));
        }
        let cell: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, format!("line {lineno}: bad cell_index")))?;
        if cell != counts.len() {
            return Err(parse_err(
                path,
                format!("line {lineno}: cell_index {cell}, expected {}", counts.len()),
            ));
        }
        let count: u32 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, format!("line {lineno}: bad ones_count")))?;
        if count as usize > k_samples {
            return Err(parse_err(
                path,
                format!("line {lineno}: ones_count {count} exceeds k_samples {k_samples}"),
            ));
        }
        let recorded = CellCategory::parse(fields[2]).ok_or_else(|| {
            parse_err(path, format!("line {lineno}: unknown category {:?}", fields[2]))
        })?;
        let derived = if count as usize == k_samples {
            CellCategory::Strong1
        } else if count == 0 {
            CellCategory::Strong0
        } else {
            CellCategory::Weak
        };
        if recorded != derived {
            return Err(parse_err(
                path,
                format!(
                    "line {lineno}: category {} inconsistent with count {count} of {k_samples}",
                    recorded.as_str()
                ),
            ));
        }
        counts.push(count);
    }
    let n = counts.len();
    CellBiasMap::new(n, k_samples, counts)
}

#[derive(Serialize, Deserialize)]
struct TraceHeader {
    memory_bits: usize,
    total_duration: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    initial_image_hex: Option<String>,
}

/// JSON header line, then CSV `timestamp,first_bit,width_bits,value_hex`
/// rows in nondecreasing timestamp order.
pub fn write_trace(path: impl AsRef<Path>, t: &WriteTrace) -> Result<()> {
    let path = path.as_ref();
    t.validate()?;
    let header = TraceHeader {
        memory_bits: t.memory_bits,
        total_duration: t.total_duration,
        initial_image_hex: t.initial_image.as_ref().map(|image| {
            hex_encode_bits(t.memory_bits, |i| (image[i / 64] >> (i % 64)) & 1 == 1)
        }),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for ev in &t.events {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            ev.timestamp,
            ev.first_bit,
            ev.width_bits,
            hex_encode_bits(ev.width_bits, |j| ev.bit(j)),
        );
    }
    write_text(path, &out)
}

/// Syntax problems surface as parse errors with a line number; a
/// syntactically clean file that still violates trace rules (timestamps
/// out of order, ranges out of bounds) surfaces as a malformed-trace error
/// with the offending event index.
pub fn read_trace(path: impl AsRef<Path>) -> Result<WriteTrace> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file, expected JSON header"))?;
    let h: TraceHeader = serde_json::from_str(header_line)
        .map_err(|e| parse_err(path, format!("line 1: {e}")))?;
    let initial_image = match &h.initial_image_hex {
        Some(hex) => Some(
            hex_decode_bits(hex, h.memory_bits)
                .map_err(|r| parse_err(path, format!("line 1: initial_image_hex: {r}")))?,
        ),
        None => None,
    };
    let mut events = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                format!("line {lineno}: expected 4 fields, got {}", fields.len()),
            ));
        }
        let timestamp: f64 = fields[0]
            .parse()
            .map_err(|_| parse_err(path, format!("line {lineno}: bad timestamp")))?;
        let first_bit: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(path, format!("line {lineno}: bad first_bit")))?;
        let width_bits: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(path, format!("line {lineno}: bad width_bits")))?;
        let value = hex_decode_bits(fields[3], width_bits)
            .map_err(|r| parse_err(path, format!("line {lineno}: value_hex: {r}")))?;
        events.push(WriteEvent {
            timestamp,
            first_bit,
            width_bits,
            value,
        });
    }
    let t = WriteTrace {
        memory_bits: h.memory_bits,
        total_duration: h.total_duration,
        initial_image,
        events,
    };
    t.validate()?;
    Ok(t)
}

/// CSV `bit_index,bias,strength,written`; unwritten bits leave the two
/// value columns empty.
pub fn write_profile(path: impl AsRef<Path>, p: &SoftwareBiasProfile) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("bit_index,bias,strength,written\n");
    for i in 0..p.memory_bits {
        if p.written[i] {
            let _ = writeln!(out, "{i},{},{},1", p.bias[i], p.strength(i));
        } else {
            let _ = writeln!(out, "{i},,,0");
        }
    }
    write_text(path, &out)
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<SoftwareBiasProfile> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "bit_index,bias,strength,written")) => {}
        _ => {
            return Err(parse_err(
                path,
                "line 1: expected header bit_index,bias,strength,written",
            ))
        }
    }
    let mut bias = Vec::new();
    let mut written = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                path,
                format!("line {lineno}: expected 4 fields, got {}", fields.len()),
            ));
        }
        let bit: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, format!("line {lineno}: bad bit_index")))?;
        if bit != bias.len() {
            return Err(parse_err(
                path,
                format!("line {lineno}: bit_index {bit}, expected {}", bias.len()),
            ));
        }
        match fields[3] {
            "1" => {
                let b: f64 = fields[1]
                    .parse()
                    .map_err(|_| parse_err(path, format!("line {lineno}: bad bias")))?;
                if !(0.0..=1.0).contains(&b) {
                    return Err(parse_err(
                        path,
                        format!("line {lineno}: bias {b} outside [0, 1]"),
                    ));
                }
                let s: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(path, format!("line {lineno}: bad strength")))?;
                if (s - 2.0 * (b - 0.5).abs()).abs() > 1e-9 {
                    return Err(parse_err(
                        path,
                        format!("line {lineno}: strength {s} inconsistent with bias {b}"),
                    ));
                }
                bias.push(b);
                written.push(true);
            }
            "0" => {
                if !fields[1].is_empty() || !fields[2].is_empty() {
                    return Err(parse_err(
                        path,
                        format!("line {lineno}: unwritten bit carries bias or strength"),
                    ));
                }
                bias.push(0.0);
                written.push(false);
            }
            other => {
                return Err(parse_err(
                    path,
                    format!("line {lineno}: written flag {other:?}, expected 0 or 1"),
                ))
            }
        }
    }
    Ok(SoftwareBiasProfile {
        memory_bits: bias.len(),
        bias,
        written,
    })
}

/// CSV `row,col,bias` over a row-major grid.
pub fn write_heatmap(path: impl AsRef<Path>, values: &[f64], grid_width: usize) -> Result<()> {
    let path = path.as_ref();
    if grid_width == 0 {
        return Err(Error::invalid("grid_width", "must be at least 1"));
    }
    let mut out = String::from("row,col,bias\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{},{},{v}", i / grid_width, i % grid_width);
    }
    write_text(path, &out)
}

/// Heatmap of a software profile; unwritten bits leave the bias empty.
pub fn write_profile_heatmap(
    path: impl AsRef<Path>,
    p: &SoftwareBiasProfile,
    grid_width: usize,
) -> Result<()> {
    let path = path.as_ref();
    if grid_width == 0 {
        return Err(Error::invalid("grid_width", "must be at least 1"));
    }
    let mut out = String::from("row,col,bias\n");
    for i in 0..p.memory_bits {
        let (r, c) = (i / grid_width, i % grid_width);
        if p.written[i] {
            let _ = writeln!(out, "{r},{c},{}", p.bias[i]);
        } else {
            let _ = writeln!(out, "{r},{c},");
        }
    }
    write_text(path, &out)
}

/// CSV `checkpoint_index,effective_years`.
pub fn write_schedule(path: impl AsRef<Path>, schedule: &AgingSchedule) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("checkpoint_index,effective_years\n");
    for (i, years) in schedule.checkpoints.iter().enumerate() {
        let _ = writeln!(out, "{i},{years}");
    }
    write_text(path, &out)
}

pub fn read_schedule(path: impl AsRef<Path>) -> Result<AgingSchedule> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "checkpoint_index,effective_years")) => {}
        _ => {
            return Err(parse_err(
                path,
                "line 1: expected header checkpoint_index,effective_years",
            ))
        }
    }
    let mut checkpoints = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_err(
                path,
                format!("line {lineno}: expected 2 fields, got {}", fields.len()),
            ));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| parse_err(path, format!("line {lineno}: bad checkpoint_index")))?;
        if idx != checkpoints.len() {
            return Err(parse_err(
                path,
                format!(
                    "line {lineno}: checkpoint_index {idx}, expected {}",
                    checkpoints.len()
                ),
            ));
        }
        let years: f64 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, format!("line {lineno}: bad effective_years")))?;
        checkpoints.push(years);
    }
    AgingSchedule::new(checkpoints)
}

/// CSV `fpr,tpr`, one point per row, ready for plotting.
pub fn write_roc_csv(path: impl AsRef<Path>, curve: &RocCurve) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("fpr,tpr\n");
    for &(fpr, tpr) in &curve.points {
        let _ = writeln!(out, "{fpr},{tpr}");
    }
    write_text(path, &out)
}

/// CSV `checkpoint_years,auroc,accuracy,tpr,best_T`, one evaluation
/// checkpoint per row.
pub fn write_evaluation_summary(
    path: impl AsRef<Path>,
    reports: &[EvaluationReport],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("checkpoint_years,auroc,accuracy,tpr,best_T\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.checkpoint_years, r.auroc, r.accuracy_at_best_t, r.tpr_at_best_t, r.best_t
        );
    }
    write_text(path, &out)
}

/// One device's decision in a batch run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub device_id: String,
    pub score: i64,
    pub label: Label,
}

/// CSV `device_id,score,label`.
pub fn write_batch_results(path: impl AsRef<Path>, rows: &[BatchRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("device_id,score,label\n");
    for row in rows {
        let _ = writeln!(out, "{},{},{}", row.device_id, row.score, row.label.as_str());
    }
    write_text(path, &out)
}

pub fn read_batch_results(path: impl AsRef<Path>) -> Result<Vec<BatchRow>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "device_id,score,label")) => {}
        _ => {
            return Err(parse_err(
                path,
                "line 1: expected header device_id,score,label",
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                format!("line {lineno}: expected 3 fields, got {}", fields.len()),
            ));
        }
        let score: i64 = fields[1]
            .parse()
            .map_err(|_| parse_err(path, format!("line {lineno}: bad score")))?;
        let label = Label::parse(fields[2]).ok_or_else(|| {
            parse_err(path, format!("line {lineno}: unknown label {:?}", fields[2]))
        })?;
        rows.push(BatchRow {
            device_id: fields[0].to_string(),
            score,
            label,
        });
    }
    Ok(rows)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| parse_err(path, e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sram::{sample_power_on, synth_device, GenerativeParams};
    use crate::swbias::{compute_bias_profile, pack_bits};

    fn dir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn hex_layout_puts_bit_zero_on_the_msb() {
        let d = dir();
        let path = d.path().join("snap.txt");
        let mut s =
            SnapshotSet::new_empty("dev-000".into(), "nominal".into(), 5, 1).unwrap();
        s.set(0, 0, true);
        s.set(0, 4, true);
        write_snapshot_set(&path, &s).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let body = text.lines().nth(1).unwrap();
        assert_eq!(body, "88");
        assert_eq!(read_snapshot_set(&path).unwrap(), s);
    }

    #[test]
    fn snapshot_round_trip_is_byte_identical() {
        let d = dir();
        let params = GenerativeParams::symmetric(200, 50, 3.0, 4.0, [0.68, 0.20, 0.12]);
        let device = synth_device(&params, 11).unwrap();
        let snap = sample_power_on(&device, 11, 77).unwrap();
        let a = d.path().join("a.txt");
        let b = d.path().join("b.txt");
        write_snapshot_set(&a, &snap).unwrap();
        let back = read_snapshot_set(&a).unwrap();
        assert_eq!(back, snap);
        write_snapshot_set(&b, &back).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn snapshot_reader_rejects_damage() {
        let d = dir();
        let path = d.path().join("snap.txt");
        let mut s =
            SnapshotSet::new_empty("dev-000".into(), "nominal".into(), 8, 3).unwrap();
        s.set(1, 3, true);
        write_snapshot_set(&path, &s).unwrap();
        let text = fs::read_to_string(&path).unwrap();

        let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        fs::write(&path, truncated).unwrap();
        let err = read_snapshot_set(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(err.to_string().contains("found 2"));

        fs::write(&path, text.replace("10", "1x")).unwrap();
        let err = read_snapshot_set(&path).unwrap_err();
        assert!(err.to_string().contains("invalid hex digit"), "{err}");

        // 5 cells fit in 2 digits; 'c' in the second sets bit 5, past the end.
        fs::write(
            &path,
            "{\"device_id\":\"x\",\"n_cells\":5,\"k_samples\":1,\"label\":\"\"}\n8c\n",
        )
        .unwrap();
        let err = read_snapshot_set(&path).unwrap_err();
        assert!(err.to_string().contains("beyond the declared width"), "{err}");
    }

    #[test]
    fn bias_map_round_trip_and_category_check() {
        let d = dir();
        let path = d.path().join("map.csv");
        let m = CellBiasMap::new(4, 3, vec![3, 0, 1, 2]).unwrap();
        write_bias_map(&path, &m).unwrap();
        assert_eq!(read_bias_map(&path, 3).unwrap(), m);

        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, text.replace("0,3,Strong1", "0,3,Weak")).unwrap();
        let err = read_bias_map(&path, 3).unwrap_err();
        assert!(err.to_string().contains("inconsistent"), "{err}");

        // The original file under K=5 turns count 3 into Weak, not Strong1.
        fs::write(&path, &text).unwrap();
        let err = read_bias_map(&path, 5).unwrap_err();
        assert!(err.to_string().contains("inconsistent"), "{err}");
    }

    #[test]
    fn trace_round_trip_with_image_and_wide_event() {
        let d = dir();
        let path = d.path().join("trace.txt");
        let mut wide_value = vec![false; 70];
        wide_value[0] = true;
        wide_value[69] = true;
        let t = WriteTrace {
            memory_bits: 96,
            total_duration: 3.5,
            initial_image: Some(pack_bits(&{
                let mut v = vec![false; 96];
                v[95] = true;
                v
            })),
            events: vec![
                WriteEvent::single(0.0, 5, true),
                WriteEvent {
                    timestamp: 1.25,
                    first_bit: 10,
                    width_bits: 70,
                    value: pack_bits(&wide_value),
                },
            ],
        };
        write_trace(&path, &t).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back, t);
        let again = d.path().join("again.txt");
        write_trace(&again, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    #[test]
    fn trace_reader_separates_syntax_from_contract() {
        let d = dir();
        let path = d.path().join("trace.txt");
        fs::write(
            &path,
            "{\"memory_bits\":8,\"total_duration\":2.0}\n0.5,0,1,8\nnope\n",
        )
        .unwrap();
        let err = read_trace(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err}");
        assert!(err.to_string().contains("line 3"), "{err}");

        // Clean syntax, decreasing timestamps: a trace-contract failure.
        fs::write(
            &path,
            "{\"memory_bits\":8,\"total_duration\":2.0}\n1,0,1,8\n0.5,1,1,8\n",
        )
        .unwrap();
        let err = read_trace(&path).unwrap_err();
        assert!(
            matches!(err, Error::MalformedTrace { event: Some(1), .. }),
            "{err}"
        );
    }

    #[test]
    fn profile_round_trip_keeps_unwritten_blank() {
        let d = dir();
        let path = d.path().join("profile.csv");
        let t = WriteTrace {
            memory_bits: 3,
            total_duration: 4.0,
            initial_image: None,
            events: vec![
                WriteEvent::single(0.0, 0, true),
                WriteEvent::single(0.0, 2, true),
                WriteEvent::single(1.0, 0, false),
            ],
        };
        let p = compute_bias_profile(&t).unwrap();
        write_profile(&path, &p).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("1,,,0"), "{text}");
        assert_eq!(read_profile(&path).unwrap(), p);

        fs::write(&path, text.replace("0,0.25,0.5,1", "0,0.25,0.9,1")).unwrap();
        let err = read_profile(&path).unwrap_err();
        assert!(err.to_string().contains("inconsistent"), "{err}");
    }

    #[test]
    fn heatmap_rows_are_row_major() {
        let d = dir();
        let path = d.path().join("heat.csv");
        write_heatmap(&path, &[0.0, 0.25, 0.5, 0.75, 1.0, 0.125], 3).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "row,col,bias\n0,0,0\n0,1,0.25\n0,2,0.5\n1,0,0.75\n1,1,1\n1,2,0.125\n"
        );
    }

    #[test]
    fn schedule_round_trip_and_index_check() {
        let d = dir();
        let path = d.path().join("schedule.csv");
        let s = AgingSchedule::new(vec![0.5, 1.0, 2.5]).unwrap();
        write_schedule(&path, &s).unwrap();
        assert_eq!(read_schedule(&path).unwrap(), s);

        fs::write(&path, "checkpoint_index,effective_years\n1,0.5\n").unwrap();
        let err = read_schedule(&path).unwrap_err();
        assert!(err.to_string().contains("checkpoint_index 1"), "{err}");
    }

    #[test]
    fn roc_csv_matches_points_exactly() {
        let d = dir();
        let path = d.path().join("roc.csv");
        let curve = RocCurve {
            points: vec![(0.0, 0.0), (0.5, 1.0), (1.0, 1.0)],
            auroc: 0.75,
        };
        write_roc_csv(&path, &curve).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "fpr,tpr\n0,0\n0.5,1\n1,1\n"
        );
    }

    #[test]
    fn batch_rows_round_trip() {
        let d = dir();
        let path = d.path().join("batch.csv");
        let rows = vec![
            BatchRow {
                device_id: "dev-000".into(),
                score: -12,
                label: Label::New,
            },
            BatchRow {
                device_id: "dev-001".into(),
                score: 845,
                label: Label::Recycled,
            },
        ];
        write_batch_results(&path, &rows).unwrap();
        assert_eq!(read_batch_results(&path).unwrap(), rows);
    }

    #[test]
    fn json_round_trip_carries_family_summaries() {
        let d = dir();
        let path = d.path().join("summary.json");
        let params = GenerativeParams::symmetric(128, 32, 3.0, 4.0, [0.68, 0.20, 0.12]);
        let device = synth_device(&params, 3).unwrap();
        let snap = sample_power_on(&device, 11, 5).unwrap();
        let m = crate::sram::estimate_bias_map(&snap);
        let summary = crate::sram::summarize(&m, 16, 99, 7).unwrap();
        write_json(&path, &summary).unwrap();
        let back: crate::sram::FamilySummary = read_json(&path).unwrap();
        assert_eq!(back, summary);
    }
}
