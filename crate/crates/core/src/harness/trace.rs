use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::HarnessError;

pub const TRACE_HEADER: &str =
    "t,x1,x2,xd,e,e_filt,u,u_applied,f_hat,g_hat,V,drop_sensor,drop_actuator";

/// One simulation step, logged before the plant is advanced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub xd: f64,
    /// `x_d − x₁` on the true state.
    pub e: f64,
    /// First component of the filtered error seen by the controller.
    pub e_filt: f64,
    pub u: f64,
    pub u_applied: f64,
    pub f_hat: f64,
    pub g_hat: f64,
    /// `EᵀPE` on the filtered error.
    pub v: f64,
    pub drop_sensor: bool,
    pub drop_actuator: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationTrace {
    pub rows: Vec<TraceRow>,
    /// Set when the run stopped early.
    pub abort_reason: Option<String>,
}

impl SimulationTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn aborted(&self) -> bool {
        self.abort_reason.is_some()
    }
}

fn format_row(r: &TraceRow, line: &mut String) {
    line.clear();
    for v in [
        r.t,
        r.x1,
        r.x2,
        r.xd,
        r.e,
        r.e_filt,
        r.u,
        r.u_applied,
        r.f_hat,
        r.g_hat,
        r.v,
    ] {
        let _ = write!(line, "{v:.9e},");
    }
    let _ = write!(
        line,
        "{},{}",
        u8::from(r.drop_sensor),
        u8::from(r.drop_actuator)
    );
}

/// Writes the CSV form of `trace` to any writer.
pub fn write_trace_to<W: Write>(trace: &SimulationTrace, mut w: W) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    let mut line = String::with_capacity(200);
    for r in &trace.rows {
        format_row(r, &mut line);
        writeln!(w, "{line}")?;
    }
    w.flush()
}

pub fn write_trace(trace: &SimulationTrace, path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_trace_to(trace, BufWriter::new(file)).map_err(|e| HarnessError::io(path, e))
}

fn parse_flag(s: &str) -> Result<bool, HarnessError> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(HarnessError::Trace(format!("bad flag `{other}`"))),
    }
}

/// Reads a trace written by [`write_trace`]. The abort reason is not part of
/// the CSV and comes back as `None`.
pub fn read_trace(path: &Path) -> Result<SimulationTrace, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| HarnessError::io(path, e))?
        .ok_or_else(|| HarnessError::Trace("missing header".into()))?;
    if header != TRACE_HEADER {
        return Err(HarnessError::Trace(format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(HarnessError::Trace(format!(
                "row {} has {} fields",
                i + 1,
                fields.len()
            )));
        }
        let mut nums = [0.0; 11];
        for (slot, f) in nums.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| HarnessError::Trace(format!("row {}: bad number `{f}`", i + 1)))?;
        }
        rows.push(TraceRow {
            t: nums[0],
            x1: nums[1],
            x2: nums[2],
            xd: nums[3],
            e: nums[4],
            e_filt: nums[5],
            u: nums[6],
            u_applied: nums[7],
            f_hat: nums[8],
            g_hat: nums[9],
            v: nums[10],
            drop_sensor: parse_flag(fields[11])?,
            drop_actuator: parse_flag(fields[12])?,
        });
    }
    Ok(SimulationTrace {
        rows,
        abort_reason: None,
    })
}
