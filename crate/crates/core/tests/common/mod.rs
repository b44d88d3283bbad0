//! Independent oracles shared by the integration test targets.
#![allow(dead_code)]

use scpa::environment::{Prior, TruthMode};
use scpa::model::{mle, Family, ParamGrid, Restrict};
use scpa::policy::{NullMode, Phase, Statistic};
use scpa::risk::{PolicySpec, Scenario};
use scpa::trial::TrialTrace;

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n };
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + h * i as f64);
    }
    s * h / 3.0
}

pub fn density(family: Family, theta: f64, y: f64) -> f64 {
    match family {
        Family::Exponential => theta * (-theta * y).exp(),
        Family::Gaussian => {
            (-(y - theta).powi(2) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        }
    }
}

pub fn support(family: Family, theta: f64, phi: f64) -> (f64, f64) {
    match family {
        Family::Exponential => (0.0, 60.0 / theta.min(phi)),
        Family::Gaussian => (theta.min(phi) - 14.0, theta.max(phi) + 14.0),
    }
}

pub fn kl_quadrature(family: Family, theta: f64, phi: f64) -> f64 {
    let (a, b) = support(family, theta, phi);
    simpson(
        |y| {
            let p = density(family, theta, y);
            if p == 0.0 {
                0.0
            } else {
                p * (p.ln() - density(family, phi, y).ln())
            }
        },
        a,
        b,
        200_000,
    )
}

pub fn loglik_brute(family: Family, theta: f64, ys: &[f64]) -> f64 {
    ys.iter().map(|&y| density(family, theta, y).ln()).sum()
}

pub fn logpdf(theta: f64, y: f64) -> f64 {
    theta.ln() - theta * y
}

/// Brute-force grid MLE with smallest-value tie-breaking.
pub fn brute_mle(values: &[f64], ys: &[f64]) -> f64 {
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &v in values {
        let ll: f64 = ys.iter().map(|&y| logpdf(v, y)).sum();
        if ll > best.0 {
            best = (ll, v);
        }
    }
    best.1
}

pub fn scenario(null_mode: NullMode, statistic: Statistic, tau_c: u64) -> Scenario {
    let nulls = [0.5, 1.0, 1.5];
    let alts = [2.0, 3.0, 5.0];
    Scenario {
        family: Family::Exponential,
        grid: ParamGrid::from_sets(&nulls, &alts).unwrap(),
        cells: 4,
        prior: Prior::uniform(4),
        truth_mode: match null_mode {
            NullMode::Known { theta0 } => TruthMode::Fixed {
                theta_null: vec![theta0; 4],
                theta_alt: 3.0,
            },
            NullMode::Unknown => TruthMode::UniformDraw,
        },
        tau_c,
        anomalies: 1,
        policy: PolicySpec::Scpa {
            null_mode,
            statistic,
            window: 1,
            probes: 1,
        },
        cap: 100_000,
    }
}

/// Recomputes the statistic of every exploit step of a recorded trace from
/// the raw observations and compares it with the recorded value.
pub fn check_statistics(
    trace: &TrialTrace,
    grid: &ParamGrid,
    mode: NullMode,
    statistic: Statistic,
) -> usize {
    let all = grid.values().to_vec();
    let nulls = grid.null_values();
    let mut checked = 0;
    for (k, rec) in trace.steps.iter().enumerate() {
        if rec.state.phase == Phase::Explore {
            continue;
        }
        let suspect = rec.state.suspect.unwrap();
        let anchor = rec.state.anchor;
        let history: Vec<f64> = trace.steps[..=k]
            .iter()
            .filter(|r| r.step > anchor && r.cells[0] == suspect)
            .map(|r| r.observations[0])
            .collect();
        let nu = match mode {
            NullMode::Known { theta0 } => theta0,
            NullMode::Unknown => brute_mle(&nulls, &history),
        };
        let expected: f64 = match statistic {
            Statistic::Sallr => (1..history.len())
                .map(|i| {
                    let est = brute_mle(&all, &history[..i]);
                    logpdf(est, history[i]) - logpdf(nu, history[i])
                })
                .sum(),
            Statistic::Gllr => {
                let est = brute_mle(&all, &history);
                history[1.min(history.len())..]
                    .iter()
                    .map(|&y| logpdf(est, y) - logpdf(nu, y))
                    .sum()
            }
        };
        let got = rec.state.stat;
        assert!(
            (got - expected).abs() <= 1e-9 * (1.0 + expected.abs()),
            "trial {} step {}: recorded {got}, recomputed {expected}",
            trace.trial,
            rec.step
        );
        checked += 1;
    }
    checked
}

/// Exhaustive check of the grid MLE against brute force over every window of
/// length 1..=3 drawn from a fixed observation lattice on a 5-point grid.
pub fn mle_brute_force_short_windows() -> usize {
    let cases = [
        (
            Family::Exponential,
            ParamGrid::from_sets(&[0.5, 1.0, 1.5], &[2.0, 4.0]).unwrap(),
            vec![0.01, 0.2, 0.35, 0.5, 0.69, 0.9, 1.2, 1.6, 2.5, 4.0, 8.0],
        ),
        (
            Family::Gaussian,
            ParamGrid::from_sets(&[-1.0, 0.0, 1.0], &[-2.5, 2.5]).unwrap(),
            vec![-4.0, -1.75, -1.0, -0.5, 0.0, 0.25, 0.5, 1.0, 1.75, 3.0],
        ),
    ];
    let mut checked = 0;
    for (family, grid, lattice) in &cases {
        let mut windows: Vec<Vec<f64>> = lattice.iter().map(|&a| vec![a]).collect();
        for &a in lattice {
            for &b in lattice {
                windows.push(vec![a, b]);
                for &c in lattice {
                    windows.push(vec![a, b, c]);
                }
            }
        }
        for w in &windows {
            for restrict in [Restrict::All, Restrict::NullOnly] {
                let candidates: Vec<usize> = (0..grid.len())
                    .filter(|&i| restrict == Restrict::All || grid.is_null(i))
                    .collect();
                let lls: Vec<f64> = candidates
                    .iter()
                    .map(|&i| loglik_brute(*family, grid.value(i), w))
                    .collect();
                let best = lls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let got = mle(*family, grid, w, restrict).unwrap();
                let pos = candidates.iter().position(|&i| i == got).unwrap();
                assert!(
                    (lls[pos] - best).abs() <= 1e-12 * best.abs().max(1.0),
                    "{family:?} {w:?} {restrict:?}: picked {} ll {} best {}",
                    grid.value(got),
                    lls[pos],
                    best
                );
                // among (numerically) tied maximisers the smallest value wins
                let first_tied = candidates
                    .iter()
                    .zip(&lls)
                    .find(|(_, &l)| (l - best).abs() <= 1e-12 * best.abs().max(1.0))
                    .map(|(&i, _)| i)
                    .unwrap();
                assert_eq!(got, first_tied, "{family:?} {w:?}");
                checked += 1;
            }
        }
    }
    checked
}

/// Recomputes every exploit statistic of 100 seeded traces per mode and
/// statistic; returns the number of steps checked.
pub fn statistics_oracle_sweep() -> usize {
    let configs = [
        (NullMode::Unknown, Statistic::Sallr),
        (NullMode::Unknown, Statistic::Gllr),
        (NullMode::Known { theta0: 1.0 }, Statistic::Sallr),
        (NullMode::Known { theta0: 1.0 }, Statistic::Gllr),
    ];
    let mut total = 0;
    for (mode, stat) in configs {
        let sc = scenario(mode, stat, 5);
        for trial in 0..100 {
            let trace = sc.run_trial(1e-3, 2024, trial, true).unwrap();
            total += check_statistics(&trace, &sc.grid, mode, stat);
        }
    }
    total
}
