//! Round-robin CUSUM baseline.
//!
//! One cell is tested at a time with the LLR of the closest anomalous/normal
//! parameter pair. A negative statistic moves on to the next cell with a
//! fresh statistic; crossing `-ln c` declares the current cell.

use crate::error::{Error, Result};
use crate::model::{Family, ParamGrid};
use crate::policy::{Action, Phase, SearchPolicy, StepState};

/// The pair `(theta1, theta0)` in anomalous x null minimising
/// `D(theta1 || theta0)`; ties go to the smallest `theta1`, then the smallest
/// `theta0`.
pub fn cusum_pair(grid: &ParamGrid, family: Family) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    for theta1 in grid.alt_values() {
        for theta0 in grid.null_values() {
            let d = family.kl(theta1, theta0)?;
            match best {
                Some((bd, _, _)) if d >= bd => {}
                _ => best = Some((d, theta1, theta0)),
            }
        }
    }
    best.map(|(_, a, b)| (a, b))
        .ok_or_else(|| Error::config("grid", "empty parameter set"))
}

/// Outcome of feeding one observation to the CUSUM statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CusumStep {
    /// Statistic went negative: reset and move to this cell.
    MoveTo(usize),
    Stay,
    Stop(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CusumState {
    pub cell: usize,
    pub stat: f64,
    pub clock: u64,
}

/// Applies one observation of the current cell.
pub fn cusum_step(
    state: &mut CusumState,
    family: Family,
    pair: (f64, f64),
    cells: usize,
    y: f64,
    c: f64,
) -> Result<CusumStep> {
    state.stat += family.llr(pair.0, pair.1, y)?.value();
    state.clock += 1;
    if state.stat < 0.0 {
        state.stat = 0.0;
        state.cell = (state.cell + 1) % cells;
        Ok(CusumStep::MoveTo(state.cell))
    } else if state.stat >= -c.ln() {
        Ok(CusumStep::Stop(state.cell))
    } else {
        Ok(CusumStep::Stay)
    }
}

#[derive(Debug, Clone)]
pub struct CusumPolicy {
    family: Family,
    pair: (f64, f64),
    c: f64,
    cells: usize,
    state: CusumState,
    stop: Option<usize>,
    stopped: bool,
    pending: bool,
}

impl CusumPolicy {
    pub fn new(family: Family, grid: &ParamGrid, c: f64, cells: usize) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::config("c", format!("{c} is not in (0, 1)")));
        }
        if cells == 0 {
            return Err(Error::config("cells", "at least one cell is required"));
        }
        grid.check_family(family)?;
        Ok(CusumPolicy {
            family,
            pair: cusum_pair(grid, family)?,
            c,
            cells,
            state: CusumState {
                cell: 0,
                stat: 0.0,
                clock: 0,
            },
            stop: None,
            stopped: false,
            pending: false,
        })
    }

    pub fn pair(&self) -> (f64, f64) {
        self.pair
    }

    pub fn state(&self) -> &CusumState {
        &self.state
    }
}

impl SearchPolicy for CusumPolicy {
    fn cells(&self) -> usize {
        self.cells
    }

    fn clock(&self) -> u64 {
        self.state.clock
    }

    fn next_action(&mut self) -> Result<Action> {
        if self.stopped {
            return Err(Error::State("next_action called after Stop".into()));
        }
        if let Some(cell) = self.stop {
            self.stopped = true;
            return Ok(Action::Stop(vec![cell]));
        }
        self.pending = true;
        Ok(Action::Probe(vec![self.state.cell]))
    }

    fn update(&mut self, cells: &[usize], ys: &[f64]) -> Result<()> {
        if self.stop.is_some() {
            return Err(Error::State("update after the stop rule fired".into()));
        }
        if !self.pending || cells != [self.state.cell] || ys.len() != 1 {
            return Err(Error::State(format!(
                "expected one observation of cell {}, got cells {cells:?}",
                self.state.cell
            )));
        }
        self.pending = false;
        if let CusumStep::Stop(cell) = cusum_step(
            &mut self.state,
            self.family,
            self.pair,
            self.cells,
            ys[0],
            self.c,
        )? {
            self.stop = Some(cell);
        }
        Ok(())
    }

    fn snapshot(&self) -> StepState {
        StepState {
            phase: if self.stop.is_some() {
                Phase::Test
            } else {
                Phase::Exploit
            },
            anchor: 0,
            suspect: Some(self.state.cell),
            stat: self.state.stat,
            estimates: Vec::new(),
        }
    }
}
