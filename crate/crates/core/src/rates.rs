//! Effective channels, rates and SINRs of the two-phase relay+RIS downlink,
//! and the feasibility check of the power-minimization problem.

use std::f64::consts::PI;

use nalgebra::RowDVector;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSet, SystemConfig};
use crate::{CMatrix, Error, Result, C64};

/// Relative slack allowed on every rate constraint.
pub const RATE_TOLERANCE: f64 = 1e-6;

/// Discrete RIS phase indices for both transmission phases.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub bits: u32,
    pub theta1: Vec<u16>,
    pub theta2: Vec<u16>,
}

impl PhaseConfig {
    pub fn zeros(elements: usize, bits: u32) -> Self {
        Self {
            bits,
            theta1: vec![0; elements],
            theta2: vec![0; elements],
        }
    }

    pub fn elements(&self) -> usize {
        self.theta1.len()
    }

    pub fn levels(&self) -> usize {
        1usize << self.bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta1.len() != self.theta2.len() {
            return Err(Error::InvalidConfig(format!(
                "phase vectors differ in length: {} vs {}",
                self.theta1.len(),
                self.theta2.len()
            )));
        }
        let levels = self.levels();
        if let Some(bad) = self
            .theta1
            .iter()
            .chain(&self.theta2)
            .find(|&&i| usize::from(i) >= levels)
        {
            return Err(Error::InvalidConfig(format!(
                "phase index {bad} out of range for {} bits",
                self.bits
            )));
        }
        Ok(())
    }

    pub fn phasors1(&self) -> Vec<C64> {
        phasors(&self.theta1, self.bits)
    }

    pub fn phasors2(&self) -> Vec<C64> {
        phasors(&self.theta2, self.bits)
    }
}

/// `e^{j·2π·index/2^b}` for each index.
pub fn phasors(indices: &[u16], bits: u32) -> Vec<C64> {
    let step = 2.0 * PI / (1u64 << bits) as f64;
    indices
        .iter()
        .map(|&i| C64::from_polar(1.0, step * f64::from(i)))
        .collect()
}

/// Beamformers and the per-stream powers they realise.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSolution {
    /// BS precoder, M × K.
    pub w: CMatrix,
    /// Relay precoder, N × K (empty in the RIS-only system).
    pub u: CMatrix,
    /// BS stream powers.
    pub bs_powers: Vec<f64>,
    /// Relay per-user powers.
    pub relay_powers: Vec<f64>,
}

impl BeamformerSolution {
    /// Time-averaged half-duplex transmit power `½(‖W‖² + ‖U‖²)`.
    pub fn half_duplex_power(&self) -> f64 {
        0.5 * (self.w.norm_squared() + self.u.norm_squared())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Streams that received power in water-filling.
    pub waterfill_active: Option<usize>,
    pub fixed_point_iterations: Option<usize>,
    pub fixed_point_residual: Option<f64>,
    /// Full coordinate-search rounds executed.
    pub search_rounds: usize,
    /// Candidate phase configurations evaluated.
    pub evaluations: usize,
}

/// Outcome of solving (or attempting to solve) one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub feasible: bool,
    /// Reported transmit power in watts; `+inf` when no solution was produced.
    pub total_power: f64,
    /// Relay decoding rate; `None` when there is no relay.
    pub relay_rate: Option<f64>,
    /// Phase-1 SINRs at the users.
    pub gamma1: Vec<f64>,
    /// Phase-2 SINRs at the users.
    pub gamma2: Vec<f64>,
    /// Per-user achievable encoding rate.
    pub user_rates: Vec<f64>,
    /// Per-user end-to-end rate after accounting for half-duplex operation.
    pub delivered_rates: Vec<f64>,
    pub solution: Option<BeamformerSolution>,
    pub phases: Option<PhaseConfig>,
    pub diagnostics: Diagnostics,
    /// Why no solution was produced, if so.
    pub failure: Option<String>,
}

impl SolveReport {
    /// Report for an instance whose inner solvers failed.
    pub fn failed(reason: impl Into<String>) -> Self {
        Self {
            feasible: false,
            total_power: f64::INFINITY,
            relay_rate: None,
            gamma1: Vec::new(),
            gamma2: Vec::new(),
            user_rates: Vec::new(),
            delivered_rates: Vec::new(),
            solution: None,
            phases: None,
            diagnostics: Diagnostics::default(),
            failure: Some(reason.into()),
        }
    }

    /// Search objective: the power when feasible, `+inf` otherwise.
    pub fn objective(&self) -> f64 {
        if self.feasible {
            self.total_power
        } else {
            f64::INFINITY
        }
    }

    pub fn min_delivered_rate(&self) -> Option<f64> {
        self.delivered_rates.iter().copied().reduce(f64::min)
    }
}

/// Composite BS → relay channel `H_TR + H_IR·diag(phasors)·H_TI` (N × M).
pub fn effective_first_hop(channels: &ChannelSet, theta1: &[C64]) -> CMatrix {
    let mut reflected = channels.h_ti.clone();
    for (mut row, p) in reflected.row_iter_mut().zip(theta1) {
        row *= *p;
    }
    &channels.h_tr + &channels.h_ir * reflected
}

/// Composite BS → user rows `h_{I,k}^H·diag(phasors)·H_TI + h_{T,k}^H` (K × M).
pub fn effective_direct_rows(channels: &ChannelSet, theta1: &[C64]) -> CMatrix {
    &channels.h_t + scale_columns(&channels.h_i, theta1) * &channels.h_ti
}

/// Composite relay → user rows `h_{I,k}^H·diag(phasors)·H_IR^H + h_{R,k}^H` (K × N).
pub fn effective_second_hop(channels: &ChannelSet, theta2: &[C64]) -> CMatrix {
    &channels.h_r + scale_columns(&channels.h_i, theta2) * channels.h_ir.adjoint()
}

/// Row `k` of [`effective_second_hop`].
pub fn effective_second_hop_user(channels: &ChannelSet, theta2: &[C64], k: usize) -> RowDVector<C64> {
    let mut reflected = channels.h_i.row(k).clone_owned();
    for (z, p) in reflected.iter_mut().zip(theta2) {
        *z *= *p;
    }
    channels.h_r.row(k) + reflected * channels.h_ir.adjoint()
}

fn scale_columns(m: &CMatrix, factors: &[C64]) -> CMatrix {
    let mut out = m.clone();
    for (mut col, p) in out.column_iter_mut().zip(factors) {
        col *= *p;
    }
    out
}

/// `log2 det(I + H W W^H H^H / σ²)`, evaluated on the K × K Gram side.
pub fn relay_rate(h_tir: &CMatrix, w: &CMatrix, sigma2: f64) -> f64 {
    let hw = h_tir * w;
    let k = hw.ncols();
    if k == 0 {
        return 0.0;
    }
    let gram = CMatrix::identity(k, k) + hw.adjoint() * &hw / C64::from(sigma2);
    match gram.clone().cholesky() {
        Some(chol) => {
            let l = chol.l_dirty();
            2.0 * (0..k).map(|i| l[(i, i)].re.log2()).sum::<f64>()
        }
        None => {
            // Numerically indefinite; fall back to the Hermitian spectrum.
            gram.symmetric_eigenvalues()
                .iter()
                .map(|&ev| ev.max(1.0).log2())
                .sum()
        }
    }
}

/// SINR of user `k` when row `k` of `rows` is its channel and column `k` of
/// `beams` carries its stream.
pub fn sinrs(rows: &CMatrix, beams: &CMatrix, sigma2: f64) -> Vec<f64> {
    let k = rows.nrows();
    if beams.ncols() == 0 || beams.nrows() == 0 {
        return vec![0.0; k];
    }
    let gains = rows * beams;
    (0..k)
        .map(|user| {
            let desired = gains[(user, user)].norm_sqr();
            let interference: f64 = (0..gains.ncols())
                .filter(|&j| j != user)
                .map(|j| gains[(user, j)].norm_sqr())
                .sum();
            desired / (interference + sigma2)
        })
        .collect()
}

/// Phase-1 and phase-2 SINRs at every user.
pub fn user_sinrs(
    channels: &ChannelSet,
    phases: &PhaseConfig,
    w: &CMatrix,
    u: &CMatrix,
    sigma2: f64,
) -> (Vec<f64>, Vec<f64>) {
    let direct = effective_direct_rows(channels, &phases.phasors1());
    let second = effective_second_hop(channels, &phases.phasors2());
    (sinrs(&direct, w, sigma2), sinrs(&second, u, sigma2))
}

/// Rate after maximum-ratio combining of both phases.
pub fn combined_rate(gamma1: f64, gamma2: f64) -> f64 {
    (1.0 + gamma1 + gamma2).log2()
}

/// `value ≥ target` up to [`RATE_TOLERANCE`] relative slack.
pub fn meets_rate(value: f64, target: f64) -> bool {
    value >= target - RATE_TOLERANCE * target.abs()
}

/// Evaluates the relay-rate and per-user QoS constraints for a candidate
/// solution of the half-duplex system.
pub fn check_feasibility(
    relay_rate: f64,
    gamma1: Vec<f64>,
    gamma2: Vec<f64>,
    solution: BeamformerSolution,
    config: &SystemConfig,
) -> SolveReport {
    let users = gamma1.len();
    let user_rates: Vec<f64> = gamma1
        .iter()
        .zip(&gamma2)
        .map(|(&g1, &g2)| combined_rate(g1, g2))
        .collect();
    let per_user_target = 2.0 * config.rate_threshold;
    let feasible = meets_rate(relay_rate, per_user_target * users as f64)
        && user_rates.iter().all(|&r| meets_rate(r, per_user_target));
    SolveReport {
        feasible,
        total_power: solution.half_duplex_power(),
        relay_rate: Some(relay_rate),
        delivered_rates: user_rates.iter().map(|r| r / 2.0).collect(),
        user_rates,
        gamma1,
        gamma2,
        solution: Some(solution),
        phases: None,
        diagnostics: Diagnostics::default(),
        failure: None,
    }
}
