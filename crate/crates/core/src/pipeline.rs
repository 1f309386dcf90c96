//! End-to-end solves for the relay+RIS system and the two baselines.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, SystemConfig};
use crate::rates::{
    effective_direct_rows, meets_rate, phasors, sinrs, BeamformerSolution, Diagnostics,
    PhaseConfig, SolveReport,
};
use crate::relay::{duality_precoder, FixedPointOptions, SinrTargets};
use crate::search::{
    block_coordinate_search, coordinate_descent, evaluate_phases, InnerSolver, Score,
    SearchSettings,
};
use crate::{CMatrix, Result};

/// The systems compared in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Relay and RIS, relay precoder from uplink-downlink duality.
    RelayRisDuality,
    /// Relay and RIS, zero-forcing relay precoder.
    RelayRisZf,
    /// Relay without RIS.
    RelayOnly,
    /// RIS without relay; full-duplex single-hop transmission.
    RisOnly,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::RelayRisDuality,
        Scenario::RelayRisZf,
        Scenario::RelayOnly,
        Scenario::RisOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::RelayRisDuality => "relay_ris_duality",
            Scenario::RelayRisZf => "relay_ris_zf",
            Scenario::RelayOnly => "relay_only",
            Scenario::RisOnly => "ris_only",
        }
    }

    pub fn run(self, channels: &ChannelSet, config: &SystemConfig, settings: &SearchSettings) -> Result<SolveReport> {
        match self {
            Scenario::RelayRisDuality => {
                solve_relay_ris(channels, config, &settings.with_inner(InnerSolver::Duality))
            }
            Scenario::RelayRisZf => {
                solve_relay_ris(channels, config, &settings.with_inner(InnerSolver::ZeroForcing))
            }
            Scenario::RelayOnly => Ok(solve_relay_only(channels, config, InnerSolver::Duality)),
            Scenario::RisOnly => solve_ris_only(channels, config, settings),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`"))
    }
}

/// Relay+RIS system: coordinate search over both phase vectors from all-zero
/// indices, with the inner solver chosen by `settings`.
pub fn solve_relay_ris(
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &SearchSettings,
) -> Result<SolveReport> {
    let init = PhaseConfig::zeros(channels.ris_elements(), config.phase_bits);
    let outcome = coordinate_descent(channels, config, settings, &init)?;
    Ok(outcome.report)
}

/// Relay-only baseline: every reflected path is removed before solving.
pub fn solve_relay_only(channels: &ChannelSet, config: &SystemConfig, inner: InnerSolver) -> SolveReport {
    let bare = channels.without_ris();
    evaluate_phases(&bare, &PhaseConfig::zeros(0, config.phase_bits), config, inner)
}

/// RIS-only baseline.
///
/// Without the relay there is no half-duplex split: each user needs
/// `log2(1 + SINR) ≥ R_th` on the single BS → user hop, the BS precoder comes
/// from uplink-downlink duality on the composite BS → user rows, and the
/// reported power is the full-time `‖W‖²`. The phase-1 RIS indices are
/// searched with the same coordinate search.
pub fn solve_ris_only(
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &SearchSettings,
) -> Result<SolveReport> {
    let l = channels.ris_elements();
    settings.validate(l, config.phase_bits)?;
    let bits = config.phase_bits;
    let eval = |theta1: &[u16]| ris_only_report(channels, config, theta1, bits, settings.fixed_point);
    let trace = block_coordinate_search(vec![0; l], 1 << bits, settings, |v| Score::of(&eval(v)));
    let mut report = eval(&trace.best);
    report.diagnostics.search_rounds = trace.rounds();
    report.diagnostics.evaluations = trace.evaluations;
    Ok(report)
}

fn ris_only_report(
    channels: &ChannelSet,
    config: &SystemConfig,
    theta1: &[u16],
    bits: u32,
    fixed_point: FixedPointOptions,
) -> SolveReport {
    let sigma2 = config.noise_power;
    let k = channels.users();
    let phases = PhaseConfig {
        bits,
        theta1: theta1.to_vec(),
        theta2: Vec::new(),
    };
    let rows = effective_direct_rows(channels, &phasors(theta1, bits));
    let targets = SinrTargets::new(vec![2f64.powf(config.rate_threshold) - 1.0; k]);
    let sol = match duality_precoder(&rows, &targets, sigma2, fixed_point) {
        Ok(sol) => sol,
        Err(e) => {
            let mut report = SolveReport::failed(e.to_string());
            report.phases = Some(phases);
            return report;
        }
    };
    let gamma = sinrs(&rows, &sol.u, sigma2);
    let rates: Vec<f64> = gamma.iter().map(|g| g.ln_1p() / std::f64::consts::LN_2).collect();
    let feasible = rates.iter().all(|&r| meets_rate(r, config.rate_threshold));
    let solution = BeamformerSolution {
        w: sol.u,
        u: CMatrix::zeros(0, k),
        bs_powers: sol.state.powers,
        relay_powers: Vec::new(),
    };
    SolveReport {
        feasible,
        total_power: solution.w.norm_squared(),
        relay_rate: None,
        gamma1: gamma,
        gamma2: vec![0.0; k],
        user_rates: rates.clone(),
        delivered_rates: rates,
        solution: Some(solution),
        phases: Some(phases),
        diagnostics: Diagnostics {
            fixed_point_iterations: Some(sol.iterations),
            fixed_point_residual: Some(sol.residual),
            evaluations: 1,
            ..Diagnostics::default()
        },
        failure: None,
    }
}
