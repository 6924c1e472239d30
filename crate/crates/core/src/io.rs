//! File formats.
//!
//! - Datasets: CSV with a header. An optional first column named `label`
//!   holds integer classes; the remaining columns are real features.
//! - Visible data for latent models: CSV of `-1`/`+1` integers, header
//!   optional. `-1` maps to value 0 and `+1` to value 1.
//! - Moments: a header of names and one row of values.
//! - Traces: `#`-prefixed metadata lines (`# key: <json>`), then a header
//!   `step,state,w0,...,w{K-1}` and one row per step starting at step 0.
//!   Weight columns are filled on snapshot rows only. Numbers use the
//!   shortest decimal form that round-trips.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::cond::LabeledDataset;
use crate::engine::HerdingTrace;
use crate::error::{HerdingError, Result};

fn parse_err(line: usize, msg: impl Into<String>) -> HerdingError {
    HerdingError::Parse { line, msg: msg.into() }
}

/// Non-comment, non-blank records with their 1-based line numbers.
fn records(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> HerdingError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HerdingError::Io(io),
        other => parse_err(line, format!("{other:?}")),
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| parse_err(line, format!("not a finite number: {s:?}")))
}

fn check_width(line: usize, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(parse_err(line, format!("row has {got} fields, expected {want}")));
    }
    Ok(())
}

/// Contents of a dataset file.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Labeled(LabeledDataset),
    Unlabeled { names: Vec<String>, inputs: Vec<Vec<f64>> },
}

/// Reads a dataset CSV. Classes are numbered `0..=max label`, with at
/// least two classes.
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let recs = records(path.as_ref())?;
    let Some(((_, header), rows)) = recs.split_first() else {
        return Err(parse_err(1, "missing header"));
    };
    let labeled = header.first().is_some_and(|h| h.eq_ignore_ascii_case("label"));
    let mut inputs = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        check_width(*line, row.len(), header.len())?;
        let feats = if labeled {
            let l = row[0].parse::<usize>().map_err(|_| parse_err(*line, format!("bad label {:?}", row[0])))?;
            labels.push(l);
            &row[1..]
        } else {
            &row[..]
        };
        inputs.push(feats.iter().map(|s| parse_f64(s, *line)).collect::<Result<Vec<_>>>()?);
    }
    if labeled {
        let k = labels.iter().max().map_or(2, |m| (m + 1).max(2));
        Ok(Dataset::Labeled(LabeledDataset::new(inputs, labels, k)?))
    } else {
        Ok(Dataset::Unlabeled { names: header.clone(), inputs })
    }
}

/// Reads `+-1` visible data as variable values (`-1 -> 0`, `+1 -> 1`).
pub fn read_visible_matrix(path: impl AsRef<Path>) -> Result<Vec<Vec<usize>>> {
    let recs = records(path.as_ref())?;
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut width = None;
    for (i, (line, row)) in recs.iter().enumerate() {
        let parsed: std::result::Result<Vec<i64>, _> = row.iter().map(|s| s.parse::<i64>()).collect();
        let vals = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => {
                width = Some(row.len());
                continue;
            }
            Err(_) => return Err(parse_err(*line, "expected -1 or +1 integers")),
        };
        let w = *width.get_or_insert(vals.len());
        check_width(*line, vals.len(), w)?;
        out.push(
            vals.iter()
                .map(|&v| match v {
                    -1 => Ok(0),
                    1 => Ok(1),
                    _ => Err(parse_err(*line, format!("value {v} is not -1 or +1"))),
                })
                .collect::<Result<_>>()?,
        );
    }
    if out.is_empty() {
        return Err(parse_err(1, "no data rows"));
    }
    Ok(out)
}

/// Reads a moments file: a header of names and one row of values.
pub fn read_moments(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<f64>)> {
    let recs = records(path.as_ref())?;
    match recs.as_slice() {
        [(_, names), (line, vals)] => {
            check_width(*line, vals.len(), names.len())?;
            Ok((names.clone(), vals.iter().map(|s| parse_f64(s, *line)).collect::<Result<_>>()?))
        }
        [] | [_] => Err(parse_err(recs.first().map_or(1, |r| r.0), "expected a header and one row of values")),
        [_, _, (line, _), ..] => Err(parse_err(*line, "moments file has more than one row of values")),
    }
}

pub fn write_moments(path: impl AsRef<Path>, names: &[String], values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", names.join(","))?;
    writeln!(w, "{}", values.iter().map(fmt_f64).collect::<Vec<_>>().join(","))?;
    w.flush()?;
    Ok(())
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(x: &f64) -> String {
    format!("{x:?}")
}

/// How a sample is written in the `state` column.
pub enum StateColumn<'a> {
    /// One label per step, e.g. a state index or a bit.
    Labels(&'a [String]),
    /// Space-separated variable values of each stored sample.
    Assignments,
}

/// Writes a trace CSV. `meta` entries become `# key: <json>` lines, in
/// order, followed by the running feature sum.
pub fn write_trace(
    path: impl AsRef<Path>,
    trace: &HerdingTrace,
    states: StateColumn<'_>,
    meta: &[(&str, Value)],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_trace_to(&mut w, trace, states, meta)?;
    w.flush()?;
    Ok(())
}

pub fn write_trace_to(
    w: &mut impl Write,
    trace: &HerdingTrace,
    states: StateColumn<'_>,
    meta: &[(&str, Value)],
) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {}", serde_json::to_string(v)?)?;
    }
    writeln!(w, "# running_feature_sum: {}", serde_json::to_string(&trace.running_feature_sum)?)?;
    let k = trace.initial_weights.len();
    let mut header = vec!["step".to_string(), "state".to_string()];
    header.extend((0..k).map(|i| format!("w{i}")));
    writeln!(w, "{}", header.join(","))?;
    if trace.steps == 0 {
        return Ok(());
    }
    let mut snaps = trace.weight_snapshots.iter().peekable();
    for t in 0..=trace.steps {
        let state = match (&states, t) {
            (_, 0) => String::new(),
            (StateColumn::Labels(l), _) => l.get(t - 1).cloned().unwrap_or_default(),
            (StateColumn::Assignments, _) => trace
                .samples
                .get(t - 1)
                .map(|s| s.values().iter().map(usize::to_string).collect::<Vec<_>>().join(" "))
                .unwrap_or_default(),
        };
        write!(w, "{t},{state}")?;
        if snaps.peek().is_some_and(|s| s.0 == t) {
            let (_, ws) = snaps.next().expect("peeked");
            for x in ws {
                write!(w, ",{}", fmt_f64(x))?;
            }
        } else {
            for _ in 0..k {
                w.write_all(b",")?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceFile {
    pub meta: BTreeMap<String, Value>,
    pub running_feature_sum: Vec<f64>,
    /// `state` column of steps `1..=T`.
    pub states: Vec<String>,
    pub weight_snapshots: Vec<(usize, Vec<f64>)>,
}

impl TraceFile {
    pub fn steps(&self) -> usize {
        self.states.len()
    }

    /// The `state` column as integers, when every entry is one.
    pub fn state_indices(&self) -> Option<Vec<usize>> {
        self.states.iter().map(|s| s.parse().ok()).collect()
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<TraceFile> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = TraceFile::default();
    let mut width = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest.trim().split_once(':').ok_or_else(|| parse_err(n, "metadata line without ':'"))?;
            let v: Value = serde_json::from_str(v.trim()).map_err(|e| parse_err(n, e.to_string()))?;
            out.meta.insert(k.trim().to_string(), v);
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let Some(w) = width else {
            if fields.first() != Some(&"step") {
                return Err(parse_err(n, "expected the trace header"));
            }
            width = Some(fields.len());
            continue;
        };
        check_width(n, fields.len(), w)?;
        let t: usize = fields[0].parse().map_err(|_| parse_err(n, "bad step"))?;
        if t != out.states.len() + usize::from(t > 0) || (t == 0 && !out.states.is_empty()) {
            return Err(parse_err(n, format!("step {t} out of sequence")));
        }
        if t > 0 {
            out.states.push(fields[1].to_string());
        }
        if fields[2..].iter().all(|s| !s.is_empty()) && w > 2 {
            let ws = fields[2..].iter().map(|s| parse_f64(s, n)).collect::<Result<Vec<_>>>()?;
            out.weight_snapshots.push((t, ws));
        }
    }
    if width.is_none() {
        return Err(parse_err(1, "missing trace header"));
    }
    if let Some(v) = out.meta.remove("running_feature_sum") {
        out.running_feature_sum = serde_json::from_value(v)?;
    }
    Ok(out)
}

/// Writes any serializable report as pretty JSON.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
