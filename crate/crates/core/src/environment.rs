//! Ground-truth simulator: which cell turns anomalous, when, and with which
//! parameters, plus seeded per-cell observation streams.
//!
//! Cells are indexed from 0. Time starts at 1; the anomalous cell is governed
//! by `theta_alt` at every `t >= tau_c`, so `tau_c = 0` and `tau_c = 1` both
//! mean "anomalous from the first sample".

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Family, ParamGrid};

const TRUTH_STREAM: u64 = u64::MAX;

/// Deterministic RNG keyed by (master seed, trial, stream). Cell `j` uses
/// stream `j`; truth sampling uses a reserved stream.
pub fn keyed_rng(master_seed: u64, trial: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    key[24..].copy_from_slice(b"scpa-env");
    ChaCha8Rng::from_seed(key)
}

pub fn truth_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    keyed_rng(master_seed, trial, TRUTH_STREAM)
}

/// Prior probabilities over which cell is anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pi: Vec<f64>,
}

impl Prior {
    /// Entries must lie strictly inside (0, 1) and sum to 1 within 1e-12.
    /// A single cell with probability 1 is accepted.
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::config("prior", "prior has no entries"));
        }
        if pi.len() == 1 {
            if pi[0] != 1.0 {
                return Err(Error::config("prior", "a single-cell prior must be [1.0]"));
            }
            return Ok(Prior { pi });
        }
        if let Some(p) = pi.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return Err(Error::config(
                "prior",
                format!("entry {p} is not in (0, 1)"),
            ));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "prior",
                format!("entries sum to {total}, not 1"),
            ));
        }
        Ok(Prior { pi })
    }

    pub fn uniform(cells: usize) -> Self {
        Prior {
            pi: vec![1.0 / cells as f64; cells],
        }
    }

    /// All mass on one cell. Bypasses validation; meant for tests and
    /// conditional (per-hypothesis) experiments.
    pub fn point_mass(cell: usize, cells: usize) -> Self {
        let mut pi = vec![0.0; cells];
        pi[cell] = 1.0;
        Prior { pi }
    }

    pub fn probs(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    fn draw<R: Rng + ?Sized>(&self, excluded: &[usize], rng: &mut R) -> usize {
        let total: f64 = (0..self.pi.len())
            .filter(|j| !excluded.contains(j))
            .map(|j| self.pi[j])
            .sum();
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for (j, &p) in self.pi.iter().enumerate() {
            if excluded.contains(&j) || p <= 0.0 {
                continue;
            }
            acc += p;
            last = Some(j);
            if u < acc {
                return j;
            }
        }
        last.expect("prior has positive mass outside the excluded cells")
    }
}

/// How per-trial parameters are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TruthMode {
    /// Config-given null parameter per cell and a single anomalous parameter.
    Fixed {
        theta_null: Vec<f64>,
        theta_alt: f64,
    },
    /// Null parameters i.i.d. uniform over the null set, anomalous parameter
    /// uniform over the anomalous set.
    UniformDraw,
}

/// Realised hypothesis for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Anomalous cells; the first entry is the single-anomaly hypothesis.
    pub anomalous: Vec<usize>,
    pub theta_null: Vec<f64>,
    pub theta_alt: f64,
    pub tau_c: u64,
}

impl GroundTruth {
    pub fn m_star(&self) -> usize {
        self.anomalous[0]
    }

    pub fn cells(&self) -> usize {
        self.theta_null.len()
    }

    pub fn is_anomalous(&self, cell: usize) -> bool {
        self.anomalous.contains(&cell)
    }

    /// Parameter governing `cell` at time `t`.
    pub fn governing_param(&self, cell: usize, t: u64) -> f64 {
        if self.is_anomalous(cell) && t >= self.tau_c {
            self.theta_alt
        } else {
            self.theta_null[cell]
        }
    }

    pub fn validate(&self, grid: &ParamGrid) -> Result<()> {
        for (j, &v) in self.theta_null.iter().enumerate() {
            match grid.index_of(v) {
                Some(i) if grid.is_null(i) => {}
                _ => {
                    return Err(Error::config(
                        format!("theta_null[{j}]"),
                        format!("{v} is not in the null parameter set"),
                    ))
                }
            }
        }
        match grid.index_of(self.theta_alt) {
            Some(i) if !grid.is_null(i) => {}
            _ => {
                return Err(Error::config(
                    "theta_alt",
                    format!("{} is not in the anomalous parameter set", self.theta_alt),
                ))
            }
        }
        let m = self.cells();
        if self.anomalous.is_empty() || self.anomalous.iter().any(|&c| c >= m) {
            return Err(Error::config(
                "anomalous",
                "anomalous cell index out of range",
            ));
        }
        Ok(())
    }
}

/// Draws the hypothesis (and, in uniform mode, the parameters) for a trial.
pub fn sample_truth<R: Rng + ?Sized>(
    prior: &Prior,
    grid: &ParamGrid,
    mode: &TruthMode,
    tau_c: u64,
    anomalies: usize,
    rng: &mut R,
) -> Result<GroundTruth> {
    let cells = prior.len();
    if anomalies == 0 || anomalies > cells {
        return Err(Error::config(
            "anomalies",
            "must be between 1 and the cell count",
        ));
    }
    let positive = prior.probs().iter().filter(|&&p| p > 0.0).count();
    if positive < anomalies {
        return Err(Error::config(
            "prior",
            "fewer cells with positive mass than anomalies",
        ));
    }
    let mut anomalous = Vec::with_capacity(anomalies);
    for _ in 0..anomalies {
        let j = prior.draw(&anomalous, rng);
        anomalous.push(j);
    }
    let (theta_null, theta_alt) = match mode {
        TruthMode::Fixed {
            theta_null,
            theta_alt,
        } => {
            if theta_null.len() != cells {
                return Err(Error::config(
                    "theta_null",
                    format!("expected {cells} entries, got {}", theta_null.len()),
                ));
            }
            (theta_null.clone(), *theta_alt)
        }
        TruthMode::UniformDraw => {
            let nulls = grid.null_values();
            let alts = grid.alt_values();
            let theta_null = (0..cells)
                .map(|_| nulls[rng.random_range(0..nulls.len())])
                .collect();
            let theta_alt = alts[rng.random_range(0..alts.len())];
            (theta_null, theta_alt)
        }
    };
    let truth = GroundTruth {
        anomalous,
        theta_null,
        theta_alt,
        tau_c,
    };
    truth.validate(grid)?;
    Ok(truth)
}

/// Observation source for one trial: a ground truth plus one independent
/// stream per cell, so the k-th draw of a cell does not depend on which other
/// cells were probed.
#[derive(Debug, Clone)]
pub struct Environment {
    family: Family,
    truth: GroundTruth,
    streams: Vec<ChaCha8Rng>,
}

impl Environment {
    pub fn new(family: Family, truth: GroundTruth, master_seed: u64, trial: u64) -> Self {
        let streams = (0..truth.cells())
            .map(|j| keyed_rng(master_seed, trial, j as u64))
            .collect();
        Environment {
            family,
            truth,
            streams,
        }
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Draws the observation of `cell` at time `t` (t >= 1).
    pub fn observe(&mut self, cell: usize, t: u64) -> Result<f64> {
        if cell >= self.streams.len() {
            return Err(Error::Precondition(format!(
                "cell {cell} out of range for {} cells",
                self.streams.len()
            )));
        }
        if t == 0 {
            return Err(Error::Precondition("time starts at 1".into()));
        }
        let theta = self.truth.governing_param(cell, t);
        Ok(self.family.sample(theta, &mut self.streams[cell]))
    }
}
