//! Monte Carlo estimation of error probabilities, post-change delay and
//! Bayes risk, plus ground-truth diagnostics of individual trials.
//!
//! Trials run in parallel with independent keyed streams and are reduced in
//! trial-index order, so serial and parallel runs give identical reports.
//! Per-hypothesis rates are weighted by the prior; truncated trials count as
//! errors and contribute their full elapsed time as delay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::CusumPolicy;
use crate::environment::{sample_truth, truth_rng, Environment, Prior, TruthMode};
use crate::error::{Error, Result};
use crate::model::{Family, ParamGrid};
use crate::policy::{NullMode, PolicyConfig, ScpaPolicy, SearchPolicy, Statistic};
use crate::stats::{mean_ci_half_width, wilson, Z95};
use crate::trial::{estimates_correct, run_trial, TrialTrace};

/// Policy selection, without the cost `c` (which a sweep varies).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicySpec {
    Scpa {
        null_mode: NullMode,
        statistic: Statistic,
        window: usize,
        probes: usize,
    },
    Cusum,
}

/// A fully resolved experiment setup.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub family: Family,
    pub grid: ParamGrid,
    pub cells: usize,
    pub prior: Prior,
    pub truth_mode: TruthMode,
    pub tau_c: u64,
    pub anomalies: usize,
    pub policy: PolicySpec,
    pub cap: u64,
}

impl Scenario {
    pub fn policy_config(&self, c: f64) -> Option<PolicyConfig> {
        match &self.policy {
            PolicySpec::Scpa {
                null_mode,
                statistic,
                window,
                probes,
            } => Some(PolicyConfig {
                c,
                null_mode: *null_mode,
                statistic: *statistic,
                window: *window,
                probes: *probes,
                anomalies: self.anomalies,
            }),
            PolicySpec::Cusum => None,
        }
    }

    pub fn build_policy(&self, c: f64) -> Result<Box<dyn SearchPolicy + Send>> {
        match self.policy_config(c) {
            Some(cfg) => Ok(Box::new(ScpaPolicy::new(
                self.family,
                self.grid.clone(),
                cfg,
                self.cells,
            )?)),
            None => Ok(Box::new(CusumPolicy::new(
                self.family,
                &self.grid,
                c,
                self.cells,
            )?)),
        }
    }

    pub fn environment(&self, seed: u64, trial: u64) -> Result<Environment> {
        let mut rng = truth_rng(seed, trial);
        let truth = sample_truth(
            &self.prior,
            &self.grid,
            &self.truth_mode,
            self.tau_c,
            self.anomalies,
            &mut rng,
        )?;
        Ok(Environment::new(self.family, truth, seed, trial))
    }

    /// Runs trial `trial` of the experiment keyed by `seed`.
    pub fn run_trial(&self, c: f64, seed: u64, trial: u64, record: bool) -> Result<TrialTrace> {
        let mut policy = self.build_policy(c)?;
        let mut env = self.environment(seed, trial)?;
        run_trial(
            policy.as_mut(),
            &mut env,
            &self.grid,
            trial,
            self.cap,
            record,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Correct,
    FalseAlarm,
    MissedDetection,
    Truncated,
}

impl Outcome {
    pub fn is_error(self) -> bool {
        self != Outcome::Correct
    }
}

/// False alarm iff the stop precedes the change point; otherwise the
/// declaration is compared with the anomalous set.
pub fn classify(trace: &TrialTrace) -> Outcome {
    if trace.truncated {
        return Outcome::Truncated;
    }
    if trace.tau < trace.truth.tau_c {
        return Outcome::FalseAlarm;
    }
    let mut declared = trace.delta.clone();
    let mut truth = trace.truth.anomalous.clone();
    declared.sort_unstable();
    truth.sort_unstable();
    if declared == truth {
        Outcome::Correct
    } else {
        Outcome::MissedDetection
    }
}

/// `(tau - tau_c)^+`.
pub fn post_change_delay(trace: &TrialTrace) -> u64 {
    trace.tau.saturating_sub(trace.truth.tau_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// First time at or after the change from which every estimate stays
    /// correct through the stop.
    pub tau_est: u64,
    pub n_est: u64,
    /// Time from stabilisation to the stop.
    pub n_u: u64,
}

/// Stabilisation diagnostics of a completed trace; `None` when the trial was
/// truncated, the policy exposes no estimates, or the estimates were not all
/// correct at the stop.
pub fn diagnostics(trace: &TrialTrace, grid: &ParamGrid) -> Option<Diagnostics> {
    if trace.truncated {
        return None;
    }
    let last_incorrect = if trace.steps.is_empty() {
        trace.last_incorrect?
    } else {
        let mut last = 0;
        for rec in &trace.steps {
            if rec.state.estimates.is_empty() {
                return None;
            }
            if !estimates_correct(grid, &trace.truth, &rec.state.estimates) {
                last = rec.step;
            }
        }
        last
    };
    if last_incorrect >= trace.tau {
        return None;
    }
    let tau_est = trace.truth.tau_c.max(last_incorrect + 1);
    if tau_est > trace.tau {
        return None;
    }
    Some(Diagnostics {
        tau_est,
        n_est: tau_est - trace.truth.tau_c,
        n_u: trace.tau - tau_est,
    })
}

/// Compact per-trial result used for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial: u64,
    pub m_star: usize,
    pub tau: u64,
    pub delay: u64,
    pub outcome: Outcome,
    pub diagnostics: Option<Diagnostics>,
}

pub fn summarize(trace: &TrialTrace, grid: &ParamGrid) -> TrialSummary {
    TrialSummary {
        trial: trace.trial,
        m_star: trace.truth.m_star(),
        tau: trace.tau,
        delay: post_change_delay(trace),
        outcome: classify(trace),
        diagnostics: diagnostics(trace, grid),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HypothesisStats {
    pub trials: usize,
    pub false_alarms: usize,
    pub missed: usize,
    pub truncated: usize,
    pub delay_sum: f64,
    pub tau_sum: f64,
}

impl HypothesisStats {
    pub fn alpha(&self) -> f64 {
        (self.false_alarms + self.missed + self.truncated) as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub c: f64,
    pub n_trials: usize,
    pub n_truncated: usize,
    pub per_hypothesis: Vec<HypothesisStats>,
    /// Normalised prior weights over the sampled hypotheses.
    pub weights: Vec<f64>,
    pub p_fa: f64,
    pub p_md: f64,
    pub p_e: f64,
    /// Wilson 95% interval for `p_e`.
    pub p_e_ci: (f64, f64),
    pub p_fa_ci: (f64, f64),
    /// `E[(tau - tau_c)^+]`.
    pub mean_delay: f64,
    pub delay_ci: f64,
    /// Unconditional mean stop time `E[tau]`.
    pub mean_tau: f64,
    pub bayes_risk: f64,
    pub risk_ci: f64,
    pub mean_n_est: Option<f64>,
    pub n_est_ci: f64,
    pub mean_n_u: Option<f64>,
    pub diagnostics_missing: usize,
}

impl RiskReport {
    pub fn neg_ln_c(&self) -> f64 {
        -self.c.ln()
    }

    /// Half-width of the `p_e` interval.
    pub fn p_e_half_width(&self) -> f64 {
        0.5 * (self.p_e_ci.1 - self.p_e_ci.0)
    }
}

/// Aggregates trial summaries (in the given order) into a report.
pub fn aggregate(c: f64, prior: &Prior, summaries: &[TrialSummary]) -> Result<RiskReport> {
    let n = summaries.len();
    if n == 0 {
        return Err(Error::Report("no trials".into()));
    }
    let n_truncated = summaries
        .iter()
        .filter(|s| s.outcome == Outcome::Truncated)
        .count();
    if n_truncated == n {
        return Err(Error::Report(format!("all {n} trials were truncated")));
    }
    let cells = prior.len();
    let mut per = vec![HypothesisStats::default(); cells];
    for s in summaries {
        let h = &mut per[s.m_star];
        h.trials += 1;
        h.delay_sum += s.delay as f64;
        h.tau_sum += s.tau as f64;
        match s.outcome {
            Outcome::FalseAlarm => h.false_alarms += 1,
            Outcome::MissedDetection => h.missed += 1,
            Outcome::Truncated => h.truncated += 1,
            Outcome::Correct => {}
        }
    }
    let mass: f64 = (0..cells)
        .filter(|&m| per[m].trials > 0)
        .map(|m| prior.probs()[m])
        .sum();
    let weights: Vec<f64> = (0..cells)
        .map(|m| {
            if per[m].trials > 0 {
                prior.probs()[m] / mass
            } else {
                0.0
            }
        })
        .collect();
    let weighted = |f: &dyn Fn(&HypothesisStats) -> f64| -> f64 {
        (0..cells)
            .filter(|&m| per[m].trials > 0)
            .map(|m| weights[m] * f(&per[m]))
            .sum()
    };
    let p_fa = weighted(&|h| h.false_alarms as f64 / h.trials as f64);
    let p_md = weighted(&|h| h.missed as f64 / h.trials as f64);
    let p_e = weighted(&|h| h.alpha());
    let mean_delay = weighted(&|h| h.delay_sum / h.trials as f64);
    let mean_tau = weighted(&|h| h.tau_sum / h.trials as f64);
    let bayes_risk = p_e + c * mean_delay;

    let delays: Vec<f64> = summaries.iter().map(|s| s.delay as f64).collect();
    let losses: Vec<f64> = summaries
        .iter()
        .map(|s| f64::from(u8::from(s.outcome.is_error())) + c * s.delay as f64)
        .collect();
    let n_est: Vec<f64> = summaries
        .iter()
        .filter_map(|s| s.diagnostics.map(|d| d.n_est as f64))
        .collect();
    let n_u: Vec<f64> = summaries
        .iter()
        .filter_map(|s| s.diagnostics.map(|d| d.n_u as f64))
        .collect();
    let mean_opt = |xs: &[f64]| {
        if xs.is_empty() {
            None
        } else {
            Some(crate::stats::mean(xs))
        }
    };

    Ok(RiskReport {
        c,
        n_trials: n,
        n_truncated,
        per_hypothesis: per,
        weights,
        p_fa,
        p_md,
        p_e,
        p_e_ci: wilson(p_e, n, Z95),
        p_fa_ci: wilson(p_fa, n, Z95),
        mean_delay,
        delay_ci: mean_ci_half_width(&delays),
        mean_tau,
        bayes_risk,
        risk_ci: mean_ci_half_width(&losses),
        mean_n_est: mean_opt(&n_est),
        n_est_ci: mean_ci_half_width(&n_est),
        mean_n_u: mean_opt(&n_u),
        diagnostics_missing: n - n_est.len(),
    })
}

/// Runs `n_trials` trials of `scenario` at cost `c` and summarises them.
pub fn run_trials(
    scenario: &Scenario,
    c: f64,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<TrialSummary>> {
    if n_trials == 0 {
        return Err(Error::Precondition("at least one trial is required".into()));
    }
    (0..n_trials as u64)
        .into_par_iter()
        .map(|i| {
            scenario
                .run_trial(c, seed, i, false)
                .map(|t| summarize(&t, &scenario.grid))
        })
        .collect()
}

pub fn estimate_risk(
    scenario: &Scenario,
    c: f64,
    n_trials: usize,
    seed: u64,
) -> Result<RiskReport> {
    let summaries = run_trials(scenario, c, n_trials, seed)?;
    aggregate(c, &scenario.prior, &summaries)
}

/// One report per cost. All costs share the same seed, hence the same truths
/// and observation streams.
pub fn sweep(
    scenario: &Scenario,
    c_values: &[f64],
    n_trials: usize,
    seed: u64,
) -> Result<Vec<RiskReport>> {
    if let Some(&c) = c_values.iter().find(|&&c| !(c > 0.0 && c < 1.0)) {
        return Err(Error::config("c_values", format!("{c} is not in (0, 1)")));
    }
    if let Some(msg) = assumption_one_warning(scenario.tau_c, c_values) {
        log::warn!("{msg}");
    }
    c_values
        .iter()
        .map(|&c| estimate_risk(scenario, c, n_trials, seed))
        .collect()
}

/// Warns when the change point is late relative to the smallest cost,
/// i.e. `tau_c > (-ln c_min)^0.9`.
pub fn assumption_one_warning(tau_c: u64, c_values: &[f64]) -> Option<String> {
    let c_min = c_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !c_min.is_finite() {
        return None;
    }
    let bound = (-c_min.ln()).powf(0.9);
    (tau_c as f64 > bound).then(|| {
        format!(
            "tau_c = {tau_c} exceeds (-ln c)^0.9 = {bound:.3} at c = {c_min}; \
             the asymptotic guarantees assume a change point of order o(-ln c)"
        )
    })
}

pub const CSV_HEADER: &str =
    "c,neg_ln_c,mean_delay,delay_ci,p_fa,p_md,p_e,bayes_risk,n_trials,n_truncated";

/// One CSV row in the order of [`CSV_HEADER`].
pub fn csv_row(r: &RiskReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.c,
        r.neg_ln_c(),
        r.mean_delay,
        r.delay_ci,
        r.p_fa,
        r.p_md,
        r.p_e,
        r.bayes_risk,
        r.n_trials,
        r.n_truncated
    )
}

pub fn sweep_csv(reports: &[RiskReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

/// Human-readable report summary.
pub fn summary_text(r: &RiskReport) -> String {
    let mut s = format!(
        "c = {} (-ln c = {:.4}), {} trials ({} truncated)\n",
        r.c,
        r.neg_ln_c(),
        r.n_trials,
        r.n_truncated
    );
    s += &format!(
        "  P_e = {:.6} [{:.6}, {:.6}]  (FA {:.6}, MD {:.6})\n",
        r.p_e, r.p_e_ci.0, r.p_e_ci.1, r.p_fa, r.p_md
    );
    s += &format!(
        "  E[(tau - tau_c)^+] = {:.4} +/- {:.4}   E[tau] = {:.4}\n",
        r.mean_delay, r.delay_ci, r.mean_tau
    );
    s += &format!("  Bayes risk = {:.6} +/- {:.6}\n", r.bayes_risk, r.risk_ci);
    if let Some(n_est) = r.mean_n_est {
        s += &format!(
            "  mean n_EST = {:.3} +/- {:.3}, mean n_U = {:.3} ({} trials without stabilisation)\n",
            n_est,
            r.n_est_ci,
            r.mean_n_u.unwrap_or(f64::NAN),
            r.diagnostics_missing
        );
    }
    if r.n_truncated > 0 {
        s += "  note: truncated trials are counted as errors\n";
    }
    s
}
