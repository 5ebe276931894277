//! Text formats: trajectories, model files and result tables.
//!
//! Trajectories are CSV with `#` comment lines. An optional header row names the
//! columns; when its first column is `t` (or `time`) the file carries timestamps,
//! otherwise every column is a coordinate and times are synthesized as `i · dt`.
//!
//! ```text
//! # name: stroke
//! # dim: 2
//! t,x1,x2
//! 0,0.1,0.2
//! 0.01,0.11,0.2
//! ```

mod letter_b;

pub use letter_b::{generate_letter_b, generate_letter_b_timed, LetterB, DURATION as LETTER_B_DURATION, MIN_POINTS as LETTER_B_MIN_POINTS};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demo::{DemoOptions, Demonstration};
use crate::engine::{FieldSample, RolloutStats, TickRecord};
use crate::error::{Error, Result};
use crate::ggp::GraphModel;

/// Default synthesized sample period for files without a time column [s].
pub const DEFAULT_SYNTH_DT: f64 = 0.01;

/// Reader settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadOptions {
    /// Sample period used when the file has no time column [s].
    pub synth_dt: f64,
    pub demo: DemoOptions,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            synth_dt: DEFAULT_SYNTH_DT,
            demo: DemoOptions::default(),
        }
    }
}

/// Parsed trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub name: Option<String>,
    pub demo: Demonstration,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn decode(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| {
        let line = 1 + bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count();
        parse_err(line, "invalid UTF-8")
    })
}

fn parse_number(field: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(line, format!("column {column}: `{}` is not a number", field.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("column {column}: non-finite value")));
    }
    Ok(v)
}

fn is_numeric_row(line: &str) -> bool {
    line.split(',').all(|f| f.trim().parse::<f64>().is_ok())
}

/// Parses trajectory text. Never panics; every failure names a line.
pub fn parse_trajectory(text: &str, opts: &ReadOptions) -> Result<TrajectoryFile> {
    if !(opts.synth_dt.is_finite() && opts.synth_dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "synthesized dt must be positive, got {}",
            opts.synth_dt
        )));
    }
    let mut name = None;
    let mut declared_dim: Option<usize> = None;
    let mut has_time: Option<bool> = None;
    let mut width: Option<usize> = None;
    let mut points = Vec::new();
    let mut times = Vec::new();
    let mut lines_of = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                match key.trim() {
                    "name" => name = Some(value.trim().to_string()),
                    "dim" => {
                        let d: usize = value
                            .trim()
                            .parse()
                            .map_err(|_| parse_err(line_no, "`dim` must be a positive integer"))?;
                        if d == 0 {
                            return Err(parse_err(line_no, "`dim` must be a positive integer"));
                        }
                        declared_dim = Some(d);
                    }
                    _ => {}
                }
            }
            continue;
        }
        if width.is_none() {
            if is_numeric_row(line) {
                let w = line.split(',').count();
                let t = match declared_dim {
                    Some(d) if w == d + 1 => true,
                    Some(d) if w == d => false,
                    Some(d) => {
                        return Err(parse_err(line_no, format!("{w} columns do not match `dim: {d}`")))
                    }
                    None => false,
                };
                has_time = Some(t);
                width = Some(w);
            } else {
                let cols: Vec<&str> = line.split(',').map(str::trim).collect();
                let t = matches!(cols[0], "t" | "time");
                let dim = cols.len() - usize::from(t);
                if dim == 0 {
                    return Err(parse_err(line_no, "header names no coordinate columns"));
                }
                if let Some(d) = declared_dim {
                    if d != dim {
                        return Err(parse_err(line_no, format!("header has {dim} coordinates, `dim: {d}`")));
                    }
                }
                has_time = Some(t);
                width = Some(cols.len());
                continue;
            }
        }
        let w = width.unwrap_or(0);
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != w {
            return Err(parse_err(line_no, format!("expected {w} columns, found {}", fields.len())));
        }
        let mut values = Vec::with_capacity(w);
        for (c, f) in fields.iter().enumerate() {
            values.push(parse_number(f, line_no, c + 1)?);
        }
        let (t, pos) = if has_time == Some(true) {
            (values[0], &values[1..])
        } else {
            (times.len() as f64 * opts.synth_dt, &values[..])
        };
        if let Some(&prev) = times.last() {
            if t <= prev {
                return Err(parse_err(line_no, format!("time {t} does not increase (previous {prev})")));
            }
        }
        times.push(t);
        points.extend_from_slice(pos);
        lines_of.push(line_no);
    }
    let dim = width.map(|w| w - usize::from(has_time == Some(true))).unwrap_or(0);
    let last_line = text.lines().count().max(1);
    if times.len() < 2 {
        return Err(parse_err(last_line, format!("need at least 2 samples, found {}", times.len())));
    }
    let demo = Demonstration::with_options(dim, points, times, opts.demo).map_err(|e| match e {
        Error::GapTooLarge { next, gap, max_gap, .. } => parse_err(
            lines_of[next],
            format!("jump of {gap} m from the previous sample exceeds {max_gap} m"),
        ),
        other => other,
    })?;
    Ok(TrajectoryFile { name, demo })
}

pub fn parse_trajectory_bytes(bytes: &[u8], opts: &ReadOptions) -> Result<TrajectoryFile> {
    parse_trajectory(decode(bytes)?, opts)
}

pub fn read_trajectory(path: impl AsRef<Path>, opts: &ReadOptions) -> Result<TrajectoryFile> {
    parse_trajectory_bytes(&std::fs::read(path)?, opts)
}

/// Canonical text: name/dim/units comments, `t,x1..xD` header, shortest round-trip numbers.
pub fn format_trajectory(demo: &Demonstration, name: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(n) = name {
        let _ = writeln!(s, "# name: {}", n.replace(['\n', '\r'], " "));
    }
    let _ = writeln!(s, "# dim: {}", demo.dim());
    s.push_str("# units: m, s\n");
    s.push('t');
    for k in 1..=demo.dim() {
        let _ = write!(s, ",x{k}");
    }
    s.push('\n');
    for i in 0..demo.len() {
        let _ = write!(s, "{}", demo.times()[i]);
        for v in demo.point(i) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn write_trajectory(path: impl AsRef<Path>, demo: &Demonstration, name: Option<&str>) -> Result<()> {
    std::fs::write(path, format_trajectory(demo, name))?;
    Ok(())
}

/// Imports a matrix export with one coordinate per line and one sample per column;
/// samples are spaced `dt` apart.
pub fn parse_dimension_rows(text: &str, dt: f64, options: DemoOptions) -> Result<Demonstration> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(c, f)| parse_number(f, idx + 1, c + 1))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    idx + 1,
                    format!("expected {} samples, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let dim = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    let points = (0..n).flat_map(|i| rows.iter().map(move |r| r[i])).collect();
    let times = (0..n).map(|i| i as f64 * dt).collect();
    Demonstration::with_options(dim, points, times, options)
}

pub fn import_dimension_rows(path: impl AsRef<Path>, dt: f64, options: DemoOptions) -> Result<Demonstration> {
    let bytes = std::fs::read(path)?;
    parse_dimension_rows(decode(&bytes)?, dt, options)
}

/// Pretty JSON holding the kernel parameters and the node chain.
pub fn model_to_json(model: &GraphModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(model)?)
}

/// Parses and re-validates a model file.
pub fn model_from_json(text: &str) -> Result<GraphModel> {
    let raw: GraphModel = serde_json::from_str(text)?;
    GraphModel::from_nodes(raw.dim(), *raw.params(), raw.nodes().to_vec())
}

pub fn save_model(path: impl AsRef<Path>, model: &GraphModel) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GraphModel> {
    let bytes = std::fs::read(path)?;
    model_from_json(decode(&bytes)?)
}

/// Field table `x,y,dx,dy,sigma,nearest_index`; the index is empty for the GP baseline.
pub fn format_field(samples: &[FieldSample]) -> String {
    let mut s = String::from("# columns: x,y,dx,dy,sigma,nearest_index\nx,y,dx,dy,sigma,nearest_index\n");
    for f in samples {
        let idx = f.nearest_index.map(|i| i.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            f.pos[0], f.pos[1], f.displacement[0], f.displacement[1], f.sigma, idx
        );
    }
    s
}

/// Per-step table `step,mean_x1..,std_x1..`.
pub fn format_stats(stats: &RolloutStats) -> String {
    let d = stats.dim;
    let mut header = String::from("step");
    for k in 1..=d {
        let _ = write!(header, ",mean_x{k}");
    }
    for k in 1..=d {
        let _ = write!(header, ",std_x{k}");
    }
    let mut s = format!("# columns: {header}\n{header}\n");
    for step in 0..stats.n_rows() {
        let _ = write!(s, "{step}");
        for v in stats.mean_at(step).iter().chain(stats.std_at(step)) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Per-rollout table `rollout,terminal_distance`.
pub fn format_terminal(stats: &RolloutStats) -> String {
    let mut s = String::from("# columns: rollout,terminal_distance\nrollout,terminal_distance\n");
    for (i, d) in stats.terminal.iter().enumerate() {
        let _ = writeln!(s, "{i},{d}");
    }
    s
}

/// Tick table, one line per arm per tick.
pub fn format_trace(records: &[TickRecord]) -> String {
    let d = records
        .first()
        .and_then(|r| r.arms.first())
        .map_or(0, |a| a.x.len());
    let mut header = String::from("time,arm");
    for block in ["x", "v", "attractor", "k_hat", "f_ext"] {
        for k in 1..=d {
            let _ = write!(header, ",{block}{k}");
        }
    }
    header.push_str(",sigma,k_scale,t_b,nearest_index");
    let mut s = format!("# columns: {header}\n{header}\n");
    for r in records {
        for (a, arm) in r.arms.iter().enumerate() {
            let _ = write!(s, "{},{a}", r.time);
            for v in arm
                .x
                .iter()
                .chain(&arm.v)
                .chain(&arm.attractor)
                .chain(&arm.k_hat_diag)
                .chain(&arm.f_ext)
            {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{},{},{},{}", arm.sigma, arm.k_scale, arm.t_b, arm.nearest_index);
        }
    }
    s
}
