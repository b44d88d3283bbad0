//! The SCPA search policy as a deterministic state machine.
//!
//! Exploration probes cells round-robin and keeps a per-cell estimate from
//! the cell's last `window` samples. When exactly one cell (exactly `L`
//! in multi-anomaly mode) has an estimate outside the null set, the policy
//! anchors `T` at the current clock and exploits that suspect. Each exploit
//! sample refreshes the suspect's MLE over its samples since `T`; an estimate
//! back inside the null set returns to exploration, otherwise the test
//! statistic is evaluated against `-ln c`.
//!
//! The statistic of a cell whose samples since the anchor are `y_1..y_n` is
//!
//! ```text
//! S = sum_{t=2..n} [ log f(y_t | est_{t-1}) - log f(y_t | nu) ]
//! ```
//!
//! where `est_{t-1}` is the unconstrained MLE over `y_1..y_{t-1}` (adaptive
//! form) or the current MLE over `y_1..y_n` (generalized form), and `nu` is
//! either the null-constrained MLE over `y_1..y_n` or the known null value.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mle, Family, GridLikelihood, ParamGrid, Restrict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullMode {
    /// Null parameters are estimated from the data.
    Unknown,
    /// Every normal cell shares this known null parameter.
    Known { theta0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    /// Sum of adaptive LLRs.
    Sallr,
    /// Sum of generalized LLRs.
    Gllr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Cost per observation, in (0, 1).
    pub c: f64,
    pub null_mode: NullMode,
    pub statistic: Statistic,
    /// Exploration window length `N`.
    pub window: usize,
    /// Cells probed per step `K`.
    pub probes: usize,
    /// Number of anomalies to declare `L`.
    pub anomalies: usize,
}

impl PolicyConfig {
    pub fn new(c: f64, null_mode: NullMode, statistic: Statistic) -> Self {
        PolicyConfig {
            c,
            null_mode,
            statistic,
            window: 1,
            probes: 1,
            anomalies: 1,
        }
    }

    /// Stopping threshold `-ln c`.
    pub fn threshold(&self) -> f64 {
        -self.c.ln()
    }

    pub fn validate(&self, grid: &ParamGrid, cells: usize) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::config("c", format!("{} is not in (0, 1)", self.c)));
        }
        if cells == 0 {
            return Err(Error::config("cells", "at least one cell is required"));
        }
        if self.window == 0 {
            return Err(Error::config("window", "must be at least 1"));
        }
        if self.probes == 0 || self.probes > cells {
            return Err(Error::config(
                "probes",
                format!("{} is not in 1..={cells}", self.probes),
            ));
        }
        if self.anomalies == 0 || (cells > 1 && self.anomalies >= cells) {
            return Err(Error::config(
                "anomalies",
                format!("{} is not in 1..{cells}", self.anomalies),
            ));
        }
        if self.anomalies > 1 && self.probes > 1 {
            return Err(Error::config(
                "probes",
                "multi-anomaly search probes one cell per step",
            ));
        }
        if let NullMode::Known { theta0 } = self.null_mode {
            match grid.index_of(theta0) {
                Some(i) if grid.is_null(i) => {}
                _ => {
                    return Err(Error::config(
                        "known_null",
                        format!("{theta0} is not in the null parameter set"),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// What the policy asks the environment to do next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Probe(Vec<usize>),
    /// Declared anomalous cells, in declaration order.
    Stop(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Explore,
    Exploit,
    /// Stop rule satisfied; the next action is `Stop`.
    Test,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Exploit => "exploit",
            Phase::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "explore" => Some(Phase::Explore),
            "exploit" => Some(Phase::Exploit),
            "test" => Some(Phase::Test),
            _ => None,
        }
    }
}

/// Observable policy state after an update, recorded per step in traces.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub phase: Phase,
    /// Last exploration exit time (0 before the first exit).
    pub anchor: u64,
    pub suspect: Option<usize>,
    pub stat: f64,
    /// Current per-cell grid estimate, `None` until the cell has a full window.
    pub estimates: Vec<Option<usize>>,
}

/// Common interface of the SCPA policy and the baselines.
pub trait SearchPolicy {
    fn cells(&self) -> usize;
    fn clock(&self) -> u64;
    fn next_action(&mut self) -> Result<Action>;
    fn update(&mut self, cells: &[usize], ys: &[f64]) -> Result<()>;
    fn snapshot(&self) -> StepState;
}

/// Samples of one cell since it was first probed in the current exploit
/// epoch, with incrementally maintained likelihood sums.
#[derive(Debug, Clone)]
pub struct Track {
    history: Vec<f64>,
    estimates: Vec<usize>,
    full: GridLikelihood,
    tail: GridLikelihood,
    adaptive: f64,
    stat: f64,
}

impl Track {
    fn new(grid: &ParamGrid) -> Self {
        Track {
            history: Vec::new(),
            estimates: Vec::new(),
            full: GridLikelihood::new(grid),
            tail: GridLikelihood::new(grid),
            adaptive: 0.0,
            stat: 0.0,
        }
    }

    fn push(&mut self, family: Family, grid: &ParamGrid, y: f64) {
        if let Some(&prev) = self.estimates.last() {
            self.adaptive += family.logpdf_unchecked(grid.value(prev), y);
            self.tail.push(family, grid, y);
        }
        self.full.push(family, grid, y);
        self.history.push(y);
        self.estimates.push(self.full.argmax(grid, Restrict::All));
    }

    fn null_index(&self, grid: &ParamGrid, mode: NullMode) -> usize {
        match mode {
            NullMode::Unknown => self.full.argmax(grid, Restrict::NullOnly),
            NullMode::Known { theta0 } => grid.index_of(theta0).expect("validated known null"),
        }
    }

    fn refresh_stat(&mut self, grid: &ParamGrid, mode: NullMode, statistic: Statistic) {
        if self.history.len() < 2 {
            self.stat = 0.0;
            return;
        }
        let nu = self.null_index(grid, mode);
        let numerator = match statistic {
            Statistic::Sallr => self.adaptive,
            Statistic::Gllr => self.tail.loglik(self.estimate()),
        };
        self.stat = numerator - self.tail.loglik(nu);
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Unconstrained MLE index after each sample.
    pub fn estimates(&self) -> &[usize] {
        &self.estimates
    }

    pub fn estimate(&self) -> usize {
        *self
            .estimates
            .last()
            .expect("track has at least one sample")
    }

    pub fn stat(&self) -> f64 {
        self.stat
    }
}

#[derive(Debug, Clone)]
struct Epoch {
    /// Undeclared suspects; the first is the primary suspect.
    suspects: Vec<usize>,
    next_suspect: usize,
    last_suspect: usize,
    tracks: Vec<Option<Track>>,
}

impl Epoch {
    fn stat_of(&self, cell: usize) -> f64 {
        self.tracks[cell].as_ref().map_or(0.0, Track::stat)
    }
}

/// SCPA policy state.
#[derive(Debug, Clone)]
pub struct ScpaPolicy {
    family: Family,
    grid: ParamGrid,
    config: PolicyConfig,
    cells: usize,
    clock: u64,
    rr_ptr: usize,
    windows: Vec<VecDeque<f64>>,
    estimates: Vec<Option<usize>>,
    epoch: Option<Epoch>,
    last_anchor: u64,
    declared: Vec<usize>,
    stop_ready: bool,
    stopped: bool,
    pending: Option<Vec<usize>>,
}

impl ScpaPolicy {
    pub fn new(
        family: Family,
        grid: ParamGrid,
        config: PolicyConfig,
        cells: usize,
    ) -> Result<Self> {
        grid.check_family(family)?;
        config.validate(&grid, cells)?;
        Ok(ScpaPolicy {
            family,
            grid,
            config,
            cells,
            clock: 0,
            rr_ptr: 0,
            windows: vec![VecDeque::new(); cells],
            estimates: vec![None; cells],
            epoch: None,
            last_anchor: 0,
            declared: Vec::new(),
            stop_ready: false,
            stopped: false,
            pending: None,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }

    pub fn phase(&self) -> Phase {
        if self.stop_ready {
            Phase::Test
        } else if self.epoch.is_some() {
            Phase::Exploit
        } else {
            Phase::Explore
        }
    }

    pub fn round_robin_pointer(&self) -> usize {
        self.rr_ptr
    }

    /// Primary suspect of the current exploit epoch.
    pub fn suspect(&self) -> Option<usize> {
        self.epoch.as_ref().map(|e| e.last_suspect)
    }

    pub fn anchor(&self) -> u64 {
        self.last_anchor
    }

    pub fn declared(&self) -> &[usize] {
        &self.declared
    }

    pub fn estimates(&self) -> &[Option<usize>] {
        &self.estimates
    }

    /// The cell's last `window` samples from any phase.
    pub fn exploration_window(&self, cell: usize) -> &VecDeque<f64> {
        &self.windows[cell]
    }

    /// Exploit track of `cell` in the current epoch.
    pub fn track(&self, cell: usize) -> Option<&Track> {
        self.epoch.as_ref().and_then(|e| e.tracks[cell].as_ref())
    }

    pub fn is_stopped(&self) -> bool {
        self.stopped
    }

    fn is_active(&self, cell: usize) -> bool {
        !self.declared.contains(&cell)
    }

    fn explore_probe(&self) -> Vec<usize> {
        let active = self.cells - self.declared.len();
        let want = self.config.probes.min(active);
        let mut out = Vec::with_capacity(want);
        let mut j = self.rr_ptr;
        while out.len() < want {
            if self.is_active(j) {
                out.push(j);
            }
            j = (j + 1) % self.cells;
        }
        out
    }

    fn exploit_probe(&self, epoch: &Epoch) -> Vec<usize> {
        if self.config.anomalies > 1 {
            return vec![epoch.suspects[epoch.next_suspect % epoch.suspects.len()]];
        }
        let suspect = epoch.suspects[0];
        let mut others: Vec<usize> = (0..self.cells).filter(|&j| j != suspect).collect();
        others.sort_by(|&a, &b| {
            epoch
                .stat_of(b)
                .total_cmp(&epoch.stat_of(a))
                .then(a.cmp(&b))
        });
        let mut probe = vec![suspect];
        probe.extend(others.into_iter().take(self.config.probes - 1));
        probe
    }

    fn push_window(&mut self, cell: usize, y: f64) {
        let w = &mut self.windows[cell];
        w.push_back(y);
        if w.len() > self.config.window {
            w.pop_front();
        }
    }

    /// MLE over the cell's last `window` samples, once that many exist.
    fn window_estimate(&self, cell: usize) -> Option<usize> {
        let w = &self.windows[cell];
        if w.len() < self.config.window {
            return None;
        }
        let window: Vec<f64> = w.iter().copied().collect();
        Some(mle(self.family, &self.grid, &window, Restrict::All).expect("non-empty window"))
    }

    /// Back to exploration: cells exploited in `epoch` fall back to their
    /// window estimates.
    fn end_epoch(&mut self, epoch: &Epoch, resume_after: usize) {
        for j in 0..self.cells {
            if epoch.tracks[j].is_some() {
                self.estimates[j] = self.window_estimate(j);
            }
        }
        self.rr_ptr = (resume_after + 1) % self.cells;
    }

    fn update_explore(&mut self, cells: &[usize], ys: &[f64]) {
        for (&cell, &y) in cells.iter().zip(ys) {
            self.push_window(cell, y);
            self.estimates[cell] = self.window_estimate(cell);
        }
        self.rr_ptr = (cells[cells.len() - 1] + 1) % self.cells;

        let active: Vec<usize> = (0..self.cells).filter(|&j| self.is_active(j)).collect();
        if active
            .iter()
            .any(|&j| self.windows[j].len() < self.config.window)
        {
            return;
        }
        let flagged: Vec<usize> = active
            .into_iter()
            .filter(|&j| self.estimates[j].is_some_and(|i| !self.grid.is_null(i)))
            .collect();
        let needed = self.config.anomalies - self.declared.len();
        if flagged.len() == needed {
            self.last_anchor = self.clock;
            self.epoch = Some(Epoch {
                last_suspect: flagged[0],
                suspects: flagged,
                next_suspect: 0,
                tracks: vec![None; self.cells],
            });
        }
    }

    fn update_exploit(&mut self, cells: &[usize], ys: &[f64]) {
        let mut epoch = self.epoch.take().expect("exploit epoch");
        for (&cell, &y) in cells.iter().zip(ys) {
            self.push_window(cell, y);
            let track = epoch.tracks[cell].get_or_insert_with(|| Track::new(&self.grid));
            track.push(self.family, &self.grid, y);
            self.estimates[cell] = Some(track.estimate());
        }
        let is_null = |e: &Epoch, j: usize| {
            e.tracks[j]
                .as_ref()
                .is_some_and(|t| self.grid.is_null(t.estimate()))
        };

        if self.config.anomalies > 1 {
            epoch.last_suspect = cells[0];
            epoch.next_suspect = (epoch.next_suspect + 1) % epoch.suspects.len();
            if epoch.suspects.iter().any(|&j| is_null(&epoch, j)) {
                self.end_epoch(&epoch, cells[0]);
                return;
            }
            for &j in &epoch.suspects {
                if let Some(t) = epoch.tracks[j].as_mut() {
                    t.refresh_stat(&self.grid, self.config.null_mode, self.config.statistic);
                }
            }
            let best = epoch
                .suspects
                .iter()
                .copied()
                .max_by(|&a, &b| {
                    epoch
                        .stat_of(a)
                        .total_cmp(&epoch.stat_of(b))
                        .then(b.cmp(&a))
                })
                .expect("at least one suspect");
            if epoch.stat_of(best) >= self.config.threshold() {
                self.declared.push(best);
                epoch.suspects.retain(|&j| j != best);
                if epoch.suspects.is_empty() {
                    self.stop_ready = true;
                } else {
                    epoch.next_suspect %= epoch.suspects.len();
                }
            }
            self.epoch = Some(epoch);
            return;
        }

        let suspect = epoch.suspects[0];
        let companion_flagged = (0..self.cells).filter(|&j| j != suspect).any(|j| {
            epoch.tracks[j]
                .as_ref()
                .is_some_and(|t| !self.grid.is_null(t.estimate()))
        });
        if is_null(&epoch, suspect) || companion_flagged {
            self.end_epoch(&epoch, suspect);
            return;
        }
        for track in epoch.tracks.iter_mut().flatten() {
            track.refresh_stat(&self.grid, self.config.null_mode, self.config.statistic);
        }
        let margin = if self.config.probes > 1 {
            let runner_up = (0..self.cells)
                .filter(|&j| j != suspect)
                .map(|j| epoch.stat_of(j))
                .fold(f64::NEG_INFINITY, f64::max);
            epoch.stat_of(suspect) - runner_up
        } else {
            epoch.stat_of(suspect)
        };
        if margin >= self.config.threshold() {
            self.declared.push(suspect);
            self.stop_ready = true;
        }
        self.epoch = Some(epoch);
    }
}

impl SearchPolicy for ScpaPolicy {
    fn cells(&self) -> usize {
        self.cells
    }

    fn clock(&self) -> u64 {
        self.clock
    }

    fn next_action(&mut self) -> Result<Action> {
        if self.stopped {
            return Err(Error::State("next_action called after Stop".into()));
        }
        if self.stop_ready {
            self.stopped = true;
            self.pending = None;
            return Ok(Action::Stop(self.declared.clone()));
        }
        let probe = match &self.epoch {
            None => self.explore_probe(),
            Some(epoch) => self.exploit_probe(epoch),
        };
        self.pending = Some(probe.clone());
        Ok(Action::Probe(probe))
    }

    fn update(&mut self, cells: &[usize], ys: &[f64]) -> Result<()> {
        if self.stopped || self.stop_ready {
            return Err(Error::State("update after the stop rule fired".into()));
        }
        match &self.pending {
            Some(p) if p.as_slice() == cells => {}
            Some(p) => {
                return Err(Error::State(format!(
                    "observed cells {cells:?} do not match the emitted probe {p:?}"
                )))
            }
            None => return Err(Error::State("update without a pending probe".into())),
        }
        if ys.len() != cells.len() {
            return Err(Error::State(format!(
                "{} observations for {} probed cells",
                ys.len(),
                cells.len()
            )));
        }
        if let Some(&y) = ys.iter().find(|&&y| !self.family.in_support(y)) {
            return Err(Error::Domain(format!(
                "observation {y} outside the support"
            )));
        }
        self.pending = None;
        self.clock += 1;
        if self.epoch.is_none() {
            self.update_explore(cells, ys);
        } else {
            self.update_exploit(cells, ys);
        }
        Ok(())
    }

    fn snapshot(&self) -> StepState {
        let (suspect, stat) = match &self.epoch {
            Some(e) => (Some(e.last_suspect), e.stat_of(e.last_suspect)),
            None => (None, 0.0),
        };
        StepState {
            phase: self.phase(),
            anchor: self.last_anchor,
            suspect,
            stat,
            estimates: self.estimates.clone(),
        }
    }
}

/// Null reference value for a history: the known null, or the
/// null-constrained MLE over the whole history.
pub fn null_reference(
    family: Family,
    grid: &ParamGrid,
    history: &[f64],
    mode: NullMode,
) -> Result<f64> {
    match mode {
        NullMode::Known { theta0 } => Ok(theta0),
        NullMode::Unknown => Ok(grid.value(mle(family, grid, history, Restrict::NullOnly)?)),
    }
}

/// Adaptive statistic from scratch. `estimates[i]` is the parameter estimated
/// from `history[..=i]`; the term for sample `i >= 1` uses `estimates[i - 1]`.
pub fn statistic_sallr(
    family: Family,
    history: &[f64],
    estimates: &[f64],
    null_param: f64,
) -> Result<f64> {
    if estimates.len() < history.len().saturating_sub(1) {
        return Err(Error::Precondition(
            "fewer estimates than history terms".into(),
        ));
    }
    let mut s = 0.0;
    for i in 1..history.len() {
        s += family
            .llr(estimates[i - 1], null_param, history[i])?
            .value();
    }
    Ok(s)
}

/// Generalized statistic from scratch: the MLE over the whole history in
/// every numerator term, summed from the second sample.
pub fn statistic_gllr(
    family: Family,
    grid: &ParamGrid,
    history: &[f64],
    null_param: f64,
) -> Result<f64> {
    if history.len() < 2 {
        return Ok(0.0);
    }
    let theta = grid.value(mle(family, grid, history, Restrict::All)?);
    let mut s = 0.0;
    for &y in &history[1..] {
        s += family.llr(theta, null_param, y)?.value();
    }
    Ok(s)
}
