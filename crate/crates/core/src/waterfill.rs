//! BS precoding: right singular vectors of the composite BS → relay channel
//! loaded by the minimum-power water-filling allocation that meets the relay
//! sum-rate requirement.

use serde::{Deserialize, Serialize};

use crate::{CMatrix, Error, Result, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfillResult {
    /// Per-stream powers, in the order of `eigenvalues`.
    pub powers: Vec<f64>,
    /// Common water level.
    pub water_level: f64,
    /// Channel eigenvalues (squared singular values) the allocation used.
    pub eigenvalues: Vec<f64>,
    /// Streams with strictly positive power.
    pub active_set: Vec<usize>,
}

impl WaterfillResult {
    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }

    /// `Σ log2(1 + P_k λ_k / σ²)`.
    pub fn sum_rate(&self, sigma2: f64) -> f64 {
        self.powers
            .iter()
            .zip(&self.eigenvalues)
            .map(|(p, l)| (p * l / sigma2).ln_1p())
            .sum::<f64>()
            / std::f64::consts::LN_2
    }
}

/// Minimum total power over parallel channels with gains `eigenvalues`
/// subject to `Σ log2(1 + P_k λ_k / σ²) ≥ target_bits`.
///
/// Modes are activated strongest first; the active set is the largest prefix
/// whose common water level stays above every active floor `σ²/λ_k`.
pub fn waterfill(eigenvalues: &[f64], target_bits: f64, sigma2: f64) -> Result<WaterfillResult> {
    if eigenvalues.is_empty() {
        return Err(Error::RankDeficient {
            needed: 1,
            available: 0,
        });
    }
    if let Some(pos) = eigenvalues.iter().position(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::RankDeficient {
            needed: eigenvalues.len(),
            available: pos,
        });
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Domain(format!("noise power must be positive, got {sigma2}")));
    }

    let mut order: Vec<usize> = (0..eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));

    let mut powers = vec![0.0; eigenvalues.len()];
    if target_bits <= 0.0 {
        return Ok(WaterfillResult {
            powers,
            water_level: sigma2 / eigenvalues[order[0]],
            eigenvalues: eigenvalues.to_vec(),
            active_set: Vec::new(),
        });
    }

    let target_nats = target_bits * std::f64::consts::LN_2;
    let mut water_level = f64::NAN;
    let mut active = 0;
    for m in (1..=order.len()).rev() {
        // ln μ = (R ln2 − Σ ln(λ_i/σ²)) / m
        let log_gain: f64 = order[..m].iter().map(|&i| (eigenvalues[i] / sigma2).ln()).sum();
        let level = ((target_nats - log_gain) / m as f64).exp();
        let weakest_floor = sigma2 / eigenvalues[order[m - 1]];
        if level > weakest_floor || m == 1 {
            water_level = level;
            active = m;
            break;
        }
    }

    let mut active_set: Vec<usize> = order[..active].to_vec();
    active_set.sort_unstable();
    for &i in &active_set {
        powers[i] = (water_level - sigma2 / eigenvalues[i]).max(0.0);
    }
    Ok(WaterfillResult {
        powers,
        water_level,
        eigenvalues: eigenvalues.to_vec(),
        active_set,
    })
}

/// BS precoder `W = V·diag(P)^{1/2}` for `streams` users that meets the relay
/// decoding requirement `2·streams·rate_threshold` with minimum power.
///
/// Columns of `V` are the right singular vectors of `h_tir` belonging to its
/// `streams` largest singular values; stream `k` carries user `k`.
pub fn svd_waterfill(
    h_tir: &CMatrix,
    streams: usize,
    rate_threshold: f64,
    sigma2: f64,
) -> Result<(CMatrix, WaterfillResult)> {
    let (n, m) = h_tir.shape();
    let modes = n.min(m);
    if streams > modes {
        return Err(Error::RankDeficient {
            needed: streams,
            available: modes,
        });
    }
    let svd = h_tir.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let s = &svd.singular_values;

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let s_max = s[order[0]];
    let cutoff = s_max * n.max(m) as f64 * f64::EPSILON;
    let usable = order.iter().filter(|&&i| s[i] > cutoff && s_max > 0.0).count();
    if usable < streams {
        return Err(Error::RankDeficient {
            needed: streams,
            available: usable,
        });
    }

    let picked = &order[..streams];
    let eigenvalues: Vec<f64> = picked.iter().map(|&i| s[i] * s[i]).collect();
    let alloc = waterfill(&eigenvalues, 2.0 * streams as f64 * rate_threshold, sigma2)?;

    let mut w = CMatrix::zeros(m, streams);
    for (col, (&mode, &p)) in picked.iter().zip(&alloc.powers).enumerate() {
        let v = v_t.row(mode).adjoint();
        w.set_column(col, &(v * C64::from(p.sqrt())));
    }
    Ok((w, alloc))
}
