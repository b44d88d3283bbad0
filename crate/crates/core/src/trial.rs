//! Single-trial execution and the line-delimited trace format.
//!
//! A trace file is a block of `# key value` header lines, the column header
//! `step,cell,observation,phase,T,suspect,S`, one record per probed cell, and
//! a closing `# end ...` line. Floats are written in shortest round-trip form
//! so a trace reparses to bit-identical values.

use std::fmt::Write as _;

use crate::environment::{Environment, GroundTruth};
use crate::error::{Error, Result};
use crate::model::ParamGrid;
use crate::policy::{Action, Phase, SearchPolicy, StepState};

pub const TRACE_MAGIC: &str = "# scpa-trace v1";
pub const TRACE_COLUMNS: &str = "step,cell,observation,phase,T,suspect,S";

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub cells: Vec<usize>,
    pub observations: Vec<f64>,
    pub state: StepState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub trial: u64,
    pub truth: GroundTruth,
    /// Stop time, or the cap when truncated.
    pub tau: u64,
    /// Declared cells; empty when truncated.
    pub delta: Vec<usize>,
    pub truncated: bool,
    /// Last step (0 = before the first sample) whose estimates were not all
    /// correct; `None` for policies that expose no estimates.
    pub last_incorrect: Option<u64>,
    /// Per-step records; empty unless recording was requested.
    pub steps: Vec<StepRecord>,
}

/// Whether every cell's current estimate is correct: the anomalous cells at
/// the anomalous parameter and every other cell inside the null set.
pub fn estimates_correct(
    grid: &ParamGrid,
    truth: &GroundTruth,
    estimates: &[Option<usize>],
) -> bool {
    let alt = grid.index_of(truth.theta_alt);
    estimates.iter().enumerate().all(|(j, e)| match e {
        None => false,
        Some(i) if truth.is_anomalous(j) => Some(*i) == alt,
        Some(i) => grid.is_null(*i),
    })
}

/// Runs `policy` against `env` until it stops or `cap` steps have elapsed.
pub fn run_trial<P: SearchPolicy + ?Sized>(
    policy: &mut P,
    env: &mut Environment,
    grid: &ParamGrid,
    trial: u64,
    cap: u64,
    record: bool,
) -> Result<TrialTrace> {
    if cap == 0 {
        return Err(Error::Precondition("trial cap must be at least 1".into()));
    }
    let mut steps = Vec::new();
    let mut last_incorrect = Some(0u64);
    loop {
        match policy.next_action()? {
            Action::Stop(delta) => {
                return Ok(TrialTrace {
                    trial,
                    truth: env.truth().clone(),
                    tau: policy.clock(),
                    delta,
                    truncated: false,
                    last_incorrect,
                    steps,
                });
            }
            Action::Probe(cells) => {
                if policy.clock() >= cap {
                    return Ok(TrialTrace {
                        trial,
                        truth: env.truth().clone(),
                        tau: policy.clock(),
                        delta: Vec::new(),
                        truncated: true,
                        last_incorrect,
                        steps,
                    });
                }
                let t = policy.clock() + 1;
                let ys = cells
                    .iter()
                    .map(|&c| env.observe(c, t))
                    .collect::<Result<Vec<_>>>()?;
                policy.update(&cells, &ys)?;
                let state = policy.snapshot();
                if state.estimates.is_empty() {
                    last_incorrect = None;
                } else if !estimates_correct(grid, env.truth(), &state.estimates) {
                    last_incorrect = Some(t);
                }
                if record {
                    steps.push(StepRecord {
                        step: t,
                        cells,
                        observations: ys,
                        state,
                    });
                }
            }
        }
    }
}

/// Serialises a trace. `header` pairs are written as `# key value` lines
/// after the magic line.
pub fn write_trace(trace: &TrialTrace, header: &[(&str, String)]) -> String {
    let mut out = String::new();
    out.push_str(TRACE_MAGIC);
    out.push('\n');
    for (k, v) in header {
        let _ = writeln!(out, "# {k} {v}");
    }
    out.push_str(TRACE_COLUMNS);
    out.push('\n');
    for rec in &trace.steps {
        for (&cell, &y) in rec.cells.iter().zip(&rec.observations) {
            let suspect = rec.state.suspect.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                rec.step,
                cell,
                y,
                rec.state.phase.label(),
                rec.state.anchor,
                suspect,
                rec.state.stat
            );
        }
    }
    let delta: Vec<String> = trace.delta.iter().map(|d| d.to_string()).collect();
    let _ = writeln!(
        out,
        "# end tau={} delta={} truncated={}",
        trace.tau,
        delta.join(";"),
        trace.truncated
    );
    out
}

/// One parsed record line.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLine {
    pub step: u64,
    pub cell: usize,
    pub observation: f64,
    pub phase: Phase,
    pub anchor: u64,
    pub suspect: Option<usize>,
    pub stat: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedTrace {
    pub header: Vec<(String, String)>,
    pub lines: Vec<TraceLine>,
}

impl ParsedTrace {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn field<T: std::str::FromStr>(raw: &str, name: &str, line_no: usize) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Parse(format!("line {line_no}: bad {name} `{raw}`")))
}

pub fn parse_trace(text: &str) -> Result<ParsedTrace> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_MAGIC) {
        return Err(Error::Parse("missing trace magic line".into()));
    }
    let mut parsed = ParsedTrace::default();
    let mut seen_columns = false;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if let Some(rest) = line.strip_prefix("# ") {
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            parsed.header.push((k.to_string(), v.to_string()));
            continue;
        }
        if line == TRACE_COLUMNS {
            seen_columns = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if !seen_columns {
            return Err(Error::Parse(format!(
                "line {line_no}: record before column header"
            )));
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(Error::Parse(format!("line {line_no}: expected 7 columns")));
        }
        parsed.lines.push(TraceLine {
            step: field(cols[0], "step", line_no)?,
            cell: field(cols[1], "cell", line_no)?,
            observation: field(cols[2], "observation", line_no)?,
            phase: Phase::parse(cols[3])
                .ok_or_else(|| Error::Parse(format!("line {line_no}: bad phase `{}`", cols[3])))?,
            anchor: field(cols[4], "T", line_no)?,
            suspect: if cols[5].is_empty() {
                None
            } else {
                Some(field(cols[5], "suspect", line_no)?)
            },
            stat: field(cols[6], "S", line_no)?,
        });
    }
    Ok(parsed)
}

/// Feeds the recorded observations into a fresh policy and checks that every
/// probe and post-update state matches the record bit for bit. Returns the
/// first mismatch as an error.
pub fn replay_observations<P: SearchPolicy + ?Sized>(
    policy: &mut P,
    lines: &[TraceLine],
) -> Result<()> {
    let mut i = 0;
    while i < lines.len() {
        let step = lines[i].step;
        let group: Vec<&TraceLine> = lines[i..].iter().take_while(|l| l.step == step).collect();
        i += group.len();
        let cells: Vec<usize> = group.iter().map(|l| l.cell).collect();
        match policy.next_action()? {
            Action::Probe(p) if p == cells => {}
            other => {
                return Err(Error::State(format!(
                    "step {step}: policy chose {other:?}, trace probed {cells:?}"
                )))
            }
        }
        let ys: Vec<f64> = group.iter().map(|l| l.observation).collect();
        policy.update(&cells, &ys)?;
        let s = policy.snapshot();
        let rec = group[0];
        if s.phase != rec.phase
            || s.anchor != rec.anchor
            || s.suspect != rec.suspect
            || s.stat.to_bits() != rec.stat.to_bits()
        {
            return Err(Error::State(format!(
                "step {step}: replayed state {:?}/{}/{:?}/{} differs from trace",
                s.phase, s.anchor, s.suspect, s.stat
            )));
        }
    }
    Ok(())
}
