use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::audit::AuditReport;
use crate::error::IoError;
use crate::flow::{field_names, FlowState, Formulation, RunRecord, SampleRecord};
use crate::grid::GridSpec;
use crate::monitor::MonitorReport;

pub const STREAM_FILE: &str = "stream.jsonl";
pub const RECORD_FILE: &str = "record.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const CSV_DIR: &str = "csv";

fn malformed(what: impl Into<String>, message: impl ToString) -> IoError {
    IoError::Malformed {
        what: what.into(),
        message: message.to_string(),
    }
}

/// Metadata written next to each binary snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub index: usize,
    pub t: f64,
    pub formulation: Formulation,
    pub fields: [String; 2],
    /// Points per real axis; each field holds their product, row-major.
    pub shape: Vec<usize>,
    pub dtype: String,
    pub endianness: String,
    pub grid: GridSpec,
}

fn snapshot_paths(dir: &Path, index: usize) -> (PathBuf, PathBuf) {
    let base = dir.join(SNAPSHOT_DIR);
    (base.join(format!("snap_{index:05}.bin")), base.join(format!("snap_{index:05}.json")))
}

/// Write both fields as little-endian `f64`, first field first.
pub fn write_snapshot(dir: &Path, index: usize, state: &FlowState, grid: &GridSpec) -> Result<(), IoError> {
    let (bin, json) = snapshot_paths(dir, index);
    let parent = bin.parent().expect("snapshot dir");
    fs::create_dir_all(parent).map_err(|e| IoError::io(parent, e))?;
    let mut bytes = Vec::with_capacity(16 * state.u[0].len());
    for v in state.u.iter().flatten() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(|e| IoError::io(&bin, e))?;
    let meta = SnapshotMeta {
        index,
        t: state.t,
        formulation: state.formulation,
        fields: field_names(state.formulation).map(String::from),
        shape: grid.points.clone(),
        dtype: "f64".into(),
        endianness: "little".into(),
        grid: grid.clone(),
    };
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&json, text).map_err(|e| IoError::io(&json, e))
}

pub fn read_snapshot(dir: &Path, index: usize) -> Result<(SnapshotMeta, FlowState), IoError> {
    let (bin, json) = snapshot_paths(dir, index);
    let text = fs::read_to_string(&json).map_err(|e| IoError::io(&json, e))?;
    let meta: SnapshotMeta = serde_json::from_str(&text).map_err(|e| malformed(json.display().to_string(), e))?;
    let bytes = fs::read(&bin).map_err(|e| IoError::io(&bin, e))?;
    let len: usize = meta.shape.iter().product();
    if bytes.len() != 16 * len {
        return Err(malformed(
            bin.display().to_string(),
            format!("expected {} bytes, found {}", 16 * len, bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let state = FlowState {
        t: meta.t,
        formulation: meta.formulation,
        u: [values[..len].to_vec(), values[len..].to_vec()],
    };
    Ok((meta, state))
}

/// Every snapshot of a run, in index order.
pub fn read_snapshots(dir: &Path) -> Result<Vec<FlowState>, IoError> {
    let base = dir.join(SNAPSHOT_DIR);
    let entries = fs::read_dir(&base).map_err(|_| IoError::MissingRun(dir.display().to_string()))?;
    let mut indices = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| IoError::io(&base, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(i) = name.strip_prefix("snap_").and_then(|s| s.strip_suffix(".json")) {
            indices.push(i.parse::<usize>().map_err(|e| malformed(name.clone(), e))?);
        }
    }
    indices.sort_unstable();
    if indices.is_empty() {
        return Err(IoError::MissingRun(dir.display().to_string()));
    }
    indices.into_iter().map(|i| read_snapshot(dir, i).map(|(_, s)| s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationLine {
    pub termination: crate::flow::Termination,
    pub exit_code: i32,
    pub t_final: f64,
    pub steps: usize,
    pub halvings: usize,
    pub ceiling: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl TerminationLine {
    pub fn from_record(r: &RunRecord) -> Self {
        TerminationLine {
            termination: r.termination,
            exit_code: r.termination.exit_code(),
            t_final: r.t_final,
            steps: r.steps,
            halvings: r.halvings,
            ceiling: r.ceiling,
            message: r.message.clone(),
        }
    }
}

/// One row of the event stream.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StreamLine<'a> {
    Sample(&'a SampleRecord),
    Monitor(&'a MonitorReport),
    Audit(&'a AuditReport),
    Termination(&'a TerminationLine),
    Note { message: &'a str },
}

/// Line-delimited JSON, flushed per line so an aborted run stays parseable.
pub struct JsonlWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        let file = File::create(path).map_err(|e| IoError::io(path, e))?;
        Ok(JsonlWriter {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, line: &StreamLine) -> Result<(), IoError> {
        let text = serde_json::to_string(line).expect("stream line serializes");
        writeln!(self.out, "{text}")
            .and_then(|_| self.out.flush())
            .map_err(|e| IoError::io(&self.path, e))
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<Value>, IoError> {
    let file = File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| IoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| malformed(format!("{} line {}", path.display(), i + 1), e))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| IoError::io(path, e))
}

/// A CSV series: a fixed header and the JSON pointer each column reads.
struct Series {
    file: &'static str,
    kind: &'static str,
    columns: &'static [(&'static str, &'static str)],
}

const SERIES: [Series; 3] = [
    Series {
        file: "samples.csv",
        kind: "sample",
        columns: &[
            ("t", "/t"),
            ("sup_rm", "/sup_rm"),
            ("sup_ric", "/sup_ric"),
            ("sup_alpha", "/sup_alpha"),
            ("sup_scalar", "/sup_scalar"),
            ("area", "/area"),
            ("min_metric_eigenvalue", "/min_metric_eigenvalue"),
            ("steps", "/steps"),
        ],
    },
    Series {
        file: "monitor.csv",
        kind: "monitor",
        columns: &[
            ("t", "/t"),
            ("tau", "/tau"),
            ("U", "/U"),
            ("U_dual", "/u_dual"),
            ("A1", "/A/0"),
            ("A2", "/A/1"),
            ("A3", "/A/2"),
            ("A4", "/A/3"),
            ("B1", "/B/0"),
            ("B2", "/B/1"),
            ("B3", "/B/2"),
            ("B4", "/B/3"),
            ("B5", "/B/4"),
            ("dU_dt_measured", "/dU_dt_measured"),
            ("gronwall_margin", "/gronwall_margin"),
            ("integral_margin", "/integral_margin"),
            ("lp_ball_integral", "/lp_ball_integral"),
            ("lp_rhs", "/lp_rhs"),
        ],
    },
    Series {
        file: "audit.csv",
        kind: "audit",
        columns: &[],
    },
];

fn cell(v: Option<&Value>) -> String {
    match v {
        Some(Value::Number(n)) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.to_string(),
            (_, Some(i)) => i.to_string(),
            // shortest representation that parses back to the same float
            _ => format!("{:?}", n.as_f64().expect("number")),
        },
        Some(Value::Bool(b)) => b.to_string(),
        Some(Value::String(s)) => s.clone(),
        _ => String::new(),
    }
}

fn audit_rows(rows: &[&Value]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows {
        let t = cell(r.get("t"));
        for res in r.get("residuals").and_then(Value::as_array).into_iter().flatten() {
            for stat in ["linf", "l2"] {
                out.push(format!("{t},residual,{},{stat},{}", cell(res.get("name")), cell(res.get(stat))));
            }
        }
        for b in r.get("bounds").and_then(Value::as_array).into_iter().flatten() {
            for stat in ["constant", "max_lhs", "max_majorant"] {
                out.push(format!("{t},bound,{},{stat},{}", cell(b.get("name")), cell(b.get(stat))));
            }
        }
    }
    out
}

/// Write `csv/samples.csv`, `csv/monitor.csv` and `csv/audit.csv` from the
/// event stream of a run. Series without rows get a header only.
pub fn plot_data(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let stream = dir.join(STREAM_FILE);
    if !stream.exists() {
        return Err(IoError::MissingRun(dir.display().to_string()));
    }
    let lines = read_jsonl(&stream)?;
    let out_dir = dir.join(CSV_DIR);
    fs::create_dir_all(&out_dir).map_err(|e| IoError::io(&out_dir, e))?;
    let mut written = Vec::new();
    for s in &SERIES {
        let rows: Vec<&Value> = lines.iter().filter(|v| v.get("kind").and_then(Value::as_str) == Some(s.kind)).collect();
        let (header, body) = if s.columns.is_empty() {
            ("t,kind,name,stat,value".to_string(), audit_rows(&rows))
        } else {
            let header = s.columns.iter().map(|c| c.0).collect::<Vec<_>>().join(",");
            let body = rows
                .iter()
                .map(|r| s.columns.iter().map(|c| cell(r.pointer(c.1))).collect::<Vec<_>>().join(","))
                .collect();
            (header, body)
        };
        let mut text = header + "\n";
        for row in body {
            text.push_str(&row);
            text.push('\n');
        }
        let path = out_dir.join(s.file);
        fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Termination;

    fn state() -> FlowState {
        FlowState {
            t: 0.125,
            formulation: Formulation::FormLevelN1,
            u: [vec![1.0, 0.1 + 0.2, -3.5e-17, f64::MAX], vec![0.0, -0.0, 1e300, 7.0]],
        }
    }

    fn spec() -> GridSpec {
        GridSpec {
            n_complex: 1,
            points: vec![2, 2],
            periods: vec![1.0, 1.0],
        }
    }

    #[test]
    fn snapshots_round_trip_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(dir.path(), 3, &state(), &spec()).unwrap();
        write_snapshot(dir.path(), 1, &state(), &spec()).unwrap();
        let back = read_snapshots(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back[0].u.iter().flatten().zip(state().u.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let (meta, _) = read_snapshot(dir.path(), 3).unwrap();
        assert_eq!(meta.fields, ["g".to_string(), "alpha".to_string()]);
        let bytes = fs::read(dir.path().join("snapshots/snap_00003.bin")).unwrap();
        assert_eq!(bytes.len(), 64);
        assert_eq!(&bytes[..8], &1.0f64.to_le_bytes());
    }

    #[test]
    fn missing_run_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_snapshots(dir.path()), Err(IoError::MissingRun(_))));
        assert!(matches!(plot_data(dir.path()), Err(IoError::MissingRun(_))));
    }

    #[test]
    fn csv_keeps_full_precision_and_headers() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = JsonlWriter::create(&dir.path().join(STREAM_FILE)).unwrap();
        let s = SampleRecord {
            t: 0.1 + 0.2,
            sup_rm: 1.0 / 3.0,
            sup_ric: 0.0,
            sup_alpha: 2.0,
            sup_scalar: 1e-300,
            area: 4.0,
            min_metric_eigenvalue: 1.0,
            steps: 7,
        };
        w.write(&StreamLine::Sample(&s)).unwrap();
        let rec = TerminationLine {
            termination: Termination::ReachedT,
            exit_code: 0,
            t_final: 1.0,
            steps: 7,
            halvings: 0,
            ceiling: 1e6,
            message: None,
        };
        w.write(&StreamLine::Termination(&rec)).unwrap();
        drop(w);
        plot_data(dir.path()).unwrap();
        let samples = fs::read_to_string(dir.path().join("csv/samples.csv")).unwrap();
        let mut lines = samples.lines();
        assert_eq!(lines.next().unwrap(), "t,sup_rm,sup_ric,sup_alpha,sup_scalar,area,min_metric_eigenvalue,steps");
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(row[1].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(row[4].parse::<f64>().unwrap(), 1e-300);
        assert_eq!(row[7], "7");
        let monitor = fs::read_to_string(dir.path().join("csv/monitor.csv")).unwrap();
        assert_eq!(monitor.lines().count(), 1);
        assert!(monitor.starts_with("t,tau,U,"));
        let audit = fs::read_to_string(dir.path().join("csv/audit.csv")).unwrap();
        assert_eq!(audit, "t,kind,name,stat,value\n");
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(32))]
        #[test]
        fn any_field_values_survive_storage(values in proptest::collection::vec(proptest::num::f64::ANY, 8), t in -1e3f64..1e3) {
            let dir = tempfile::tempdir().unwrap();
            let st = FlowState { t, formulation: Formulation::Potential, u: [values[..4].to_vec(), values[4..].to_vec()] };
            write_snapshot(dir.path(), 0, &st, &spec()).unwrap();
            let (meta, back) = read_snapshot(dir.path(), 0).unwrap();
            proptest::prop_assert_eq!(meta.t.to_bits(), t.to_bits());
            for (a, b) in back.u.iter().flatten().zip(st.u.iter().flatten()) {
                proptest::prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
