//! Discrete RIS phase optimization by blockwise exhaustive coordinate search.
//!
//! The 2L phase indices (phase-1 elements first, then phase-2 elements) are
//! visited in consecutive blocks of `block_size`. Every assignment of a block
//! is tried with the other indices held fixed and the best one is kept.
//! Passes over all blocks repeat until a pass improves the objective by less
//! than `improvement_tol` or `rounds_max` passes have run.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, SystemConfig};
use crate::rates::{
    check_feasibility, effective_first_hop, effective_second_hop, phasors, relay_rate, sinrs,
    BeamformerSolution, PhaseConfig, SolveReport,
};
use crate::relay::{duality_precoder, zf_beamformer, FixedPointOptions, SinrTargets};
use crate::waterfill::{svd_waterfill, WaterfillResult};
use crate::{CMatrix, Error, Result};

/// Upper bound on the assignments enumerated per block.
pub const MAX_BLOCK_CANDIDATES: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    Duality,
    ZeroForcing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    /// Number of phase indices enumerated jointly.
    pub block_size: usize,
    pub rounds_max: usize,
    /// Minimum per-round objective decrease (W) to keep going.
    pub improvement_tol: f64,
    pub inner_solver: InnerSolver,
    pub fixed_point: FixedPointOptions,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            block_size: 1,
            rounds_max: 3,
            improvement_tol: 1e-4,
            inner_solver: InnerSolver::Duality,
            fixed_point: FixedPointOptions::default(),
        }
    }
}

impl SearchSettings {
    pub fn with_inner(self, inner_solver: InnerSolver) -> Self {
        Self { inner_solver, ..self }
    }

    /// Checks the settings against a search over `variables` indices with
    /// `2^bits` levels each.
    pub fn validate(&self, variables: usize, bits: u32) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.block_size == 0 {
            return fail("block_size must be at least 1".into());
        }
        if variables > 0 && self.block_size > variables {
            return fail(format!(
                "block_size {} exceeds the {variables} searchable phases",
                self.block_size
            ));
        }
        if self.rounds_max == 0 {
            return fail("rounds_max must be at least 1".into());
        }
        if !(self.improvement_tol >= 0.0) {
            return fail("improvement_tol must be nonnegative".into());
        }
        let bits_per_block = self.block_size as u64 * u64::from(bits);
        if bits_per_block > MAX_BLOCK_CANDIDATES.trailing_zeros() as u64 {
            return fail(format!(
                "block of {} phases with {bits} bits needs 2^{bits_per_block} candidates (cap 2^16)",
                self.block_size
            ));
        }
        if !(self.fixed_point.tol > 0.0) || self.fixed_point.max_iters == 0 {
            return fail("fixed-point tolerance and iteration cap must be positive".into());
        }
        Ok(())
    }
}

/// Ranking key of a candidate: feasible beats infeasible, then lower power;
/// among infeasible candidates a larger relay rate wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub feasible: bool,
    pub objective: f64,
    pub tiebreak: f64,
}

impl Score {
    pub fn of(report: &SolveReport) -> Self {
        Self {
            feasible: report.feasible,
            objective: report.objective(),
            tiebreak: report.relay_rate.unwrap_or(f64::NEG_INFINITY),
        }
    }

    pub fn better_than(&self, other: &Score) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.objective < other.objective,
            (false, false) => self.tiebreak > other.tiebreak,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub best: Vec<u16>,
    pub score: Score,
    /// Objective before the first round and after each completed round.
    pub round_objectives: Vec<f64>,
    pub evaluations: usize,
}

impl SearchTrace {
    pub fn rounds(&self) -> usize {
        self.round_objectives.len() - 1
    }
}

/// Generic block coordinate search over `init.len()` indices with `levels`
/// values each.
pub fn block_coordinate_search<F>(
    init: Vec<u16>,
    levels: usize,
    settings: &SearchSettings,
    mut eval: F,
) -> SearchTrace
where
    F: FnMut(&[u16]) -> Score,
{
    let mut current = init;
    let mut best = eval(&current);
    let mut evaluations = 1;
    let mut round_objectives = vec![best.objective];
    let n = current.len();
    if n == 0 {
        return SearchTrace {
            best: current,
            score: best,
            round_objectives,
            evaluations,
        };
    }
    let block = settings.block_size.clamp(1, n);

    for _ in 0..settings.rounds_max {
        let round_start = best;
        for start in (0..n).step_by(block) {
            let end = (start + block).min(n);
            let width = end - start;
            let total = levels.pow(width as u32);
            let original: Vec<u16> = current[start..end].to_vec();
            let mut winner = original.clone();
            let mut candidate = current.clone();
            for code in 0..total {
                let mut rest = code;
                for slot in candidate[start..end].iter_mut() {
                    *slot = (rest % levels) as u16;
                    rest /= levels;
                }
                if candidate[start..end] == original[..] {
                    continue;
                }
                let score = eval(&candidate);
                evaluations += 1;
                if score.better_than(&best) {
                    best = score;
                    winner.copy_from_slice(&candidate[start..end]);
                }
            }
            current[start..end].copy_from_slice(&winner);
        }
        round_objectives.push(best.objective);
        let gained = round_start.objective - best.objective;
        let progressed = if round_start.feasible || best.feasible {
            gained >= settings.improvement_tol
        } else {
            best.tiebreak > round_start.tiebreak
        };
        if !progressed {
            break;
        }
    }
    SearchTrace {
        best: current,
        score: best,
        round_objectives,
        evaluations,
    }
}

/// Phase-1 quantities that depend only on the phase-1 RIS indices.
#[derive(Debug, Clone)]
struct FirstHop {
    w: CMatrix,
    alloc: WaterfillResult,
    relay_rate: f64,
    gamma1: Vec<f64>,
    targets: SinrTargets,
}

/// Solves the inner beamforming problem for given phases, caching the
/// phase-1 solution across calls that share the same phase-1 indices.
pub struct PhaseEvaluator<'a> {
    channels: &'a ChannelSet,
    config: &'a SystemConfig,
    inner: InnerSolver,
    fixed_point: FixedPointOptions,
    cache: Option<(Vec<u16>, std::result::Result<FirstHop, String>)>,
}

impl<'a> PhaseEvaluator<'a> {
    pub fn new(
        channels: &'a ChannelSet,
        config: &'a SystemConfig,
        inner: InnerSolver,
        fixed_point: FixedPointOptions,
    ) -> Self {
        Self {
            channels,
            config,
            inner,
            fixed_point,
            cache: None,
        }
    }

    fn first_hop(&mut self, theta1: &[u16], bits: u32) -> std::result::Result<FirstHop, String> {
        if let Some((key, value)) = &self.cache {
            if key == theta1 {
                return value.clone();
            }
        }
        let value = self.solve_first_hop(theta1, bits);
        self.cache = Some((theta1.to_vec(), value.clone()));
        value
    }

    fn solve_first_hop(&self, theta1: &[u16], bits: u32) -> std::result::Result<FirstHop, String> {
        let cfg = self.config;
        let k = self.channels.users();
        let p1 = phasors(theta1, bits);
        let h_tir = effective_first_hop(self.channels, &p1);
        let (w, alloc) =
            svd_waterfill(&h_tir, k, cfg.rate_threshold, cfg.noise_power).map_err(|e| e.to_string())?;
        let direct = crate::rates::effective_direct_rows(self.channels, &p1);
        let gamma1 = sinrs(&direct, &w, cfg.noise_power);
        Ok(FirstHop {
            relay_rate: relay_rate(&h_tir, &w, cfg.noise_power),
            targets: SinrTargets::residual(&gamma1, cfg.rate_threshold),
            w,
            alloc,
            gamma1,
        })
    }

    pub fn evaluate(&mut self, phases: &PhaseConfig) -> SolveReport {
        let sigma2 = self.config.noise_power;
        let first = match self.first_hop(&phases.theta1, phases.bits) {
            Ok(first) => first,
            Err(reason) => {
                let mut report = SolveReport::failed(reason);
                report.phases = Some(phases.clone());
                return report;
            }
        };
        let rows = effective_second_hop(self.channels, &phases.phasors2());
        let mut fixed_point_iterations = None;
        let mut fixed_point_residual = None;
        let relay = match self.inner {
            InnerSolver::Duality => {
                duality_precoder(&rows, &first.targets, sigma2, self.fixed_point).map(|sol| {
                    fixed_point_iterations = Some(sol.iterations);
                    fixed_point_residual = Some(sol.residual);
                    (sol.u, sol.state.powers)
                })
            }
            InnerSolver::ZeroForcing => zf_beamformer(&rows, &first.targets, sigma2).map(|u| {
                let powers = first.targets.as_slice().iter().map(|eta| sigma2 * eta).collect();
                (u, powers)
            }),
        };
        let (u, relay_powers) = match relay {
            Ok(v) => v,
            Err(e) => {
                let mut report = SolveReport::failed(e.to_string());
                report.relay_rate = Some(first.relay_rate);
                report.phases = Some(phases.clone());
                return report;
            }
        };
        let gamma2 = sinrs(&rows, &u, sigma2);
        let solution = BeamformerSolution {
            w: first.w,
            u,
            bs_powers: first.alloc.powers.clone(),
            relay_powers,
        };
        let mut report = check_feasibility(first.relay_rate, first.gamma1, gamma2, solution, self.config);
        report.phases = Some(phases.clone());
        report.diagnostics.waterfill_active = Some(first.alloc.active_set.len());
        report.diagnostics.fixed_point_iterations = fixed_point_iterations;
        report.diagnostics.fixed_point_residual = fixed_point_residual;
        report.diagnostics.evaluations = 1;
        report
    }
}

/// Runs the BS and relay precoders for fixed phases.
pub fn evaluate_phases(
    channels: &ChannelSet,
    phases: &PhaseConfig,
    config: &SystemConfig,
    inner: InnerSolver,
) -> SolveReport {
    PhaseEvaluator::new(channels, config, inner, FixedPointOptions::default()).evaluate(phases)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub phases: PhaseConfig,
    pub report: SolveReport,
    /// Objective at `init` followed by the objective after each round.
    pub trace: Vec<f64>,
}

/// Coordinate search over both phase vectors starting from `init`.
pub fn coordinate_descent(
    channels: &ChannelSet,
    config: &SystemConfig,
    settings: &SearchSettings,
    init: &PhaseConfig,
) -> Result<SearchOutcome> {
    init.validate()?;
    let l = init.elements();
    if l != channels.ris_elements() {
        return Err(Error::InvalidConfig(format!(
            "{l} phase indices for {} RIS elements",
            channels.ris_elements()
        )));
    }
    settings.validate(2 * l, init.bits)?;

    let bits = init.bits;
    let mut evaluator = PhaseEvaluator::new(channels, config, settings.inner_solver, settings.fixed_point);
    let split = |v: &[u16]| PhaseConfig {
        bits,
        theta1: v[..l].to_vec(),
        theta2: v[l..].to_vec(),
    };
    let start: Vec<u16> = init.theta1.iter().chain(&init.theta2).copied().collect();
    let trace = block_coordinate_search(start, init.levels(), settings, |v| {
        Score::of(&evaluator.evaluate(&split(v)))
    });

    let phases = split(&trace.best);
    let mut report = evaluator.evaluate(&phases);
    report.diagnostics.search_rounds = trace.rounds();
    report.diagnostics.evaluations = trace.evaluations;
    Ok(SearchOutcome {
        phases,
        report,
        trace: trace.round_objectives,
    })
}
