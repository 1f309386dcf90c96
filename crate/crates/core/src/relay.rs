//! Relay precoding for residual per-user SINR targets.
//!
//! Two routes are provided: the minimum-power solution obtained through
//! uplink-downlink duality (dual powers from a monotone fixed-point iteration, then
//! MMSE-style directions and downlink powers from a K × K linear system), and
//! zero-forcing with per-user powers `σ²·η_k`.
//!
//! Channels are passed as a K × N matrix whose row `k` multiplies the
//! transmit beamformers to give user `k`'s received signal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::rates::{effective_direct_rows, sinrs};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Residual phase-2 SINR targets, clamped at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinrTargets(Vec<f64>);

impl SinrTargets {
    /// Negative entries are clamped to zero.
    pub fn new(targets: impl IntoIterator<Item = f64>) -> Self {
        Self(targets.into_iter().map(|t| t.max(0.0)).collect())
    }

    /// `max(0, 2^{2R} − 1 − γ_{k,1})` for each user.
    pub fn residual(gamma1: &[f64], rate_threshold: f64) -> Self {
        let full = 2f64.powf(2.0 * rate_threshold) - 1.0;
        Self::new(gamma1.iter().map(|g| full - g))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Users with a strictly positive target.
    pub fn active(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&k| self.0[k] > 0.0).collect()
    }
}

/// Residual targets given the phase-1 BS precoder.
pub fn residual_targets(
    channels: &ChannelSet,
    theta1: &[C64],
    w: &CMatrix,
    rate_threshold: f64,
    sigma2: f64,
) -> SinrTargets {
    let direct = effective_direct_rows(channels, theta1);
    SinrTargets::residual(&sinrs(&direct, w, sigma2), rate_threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointOptions {
    /// Relative sup-norm change below which the iteration stops.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    /// Uplink dual powers.
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `I + Σ_k (β_k/σ²)·g_k^H g_k` over the given users.
fn regularized_covariance(rows: &CMatrix, beta: &[f64], sigma2: f64, users: &[usize]) -> CMatrix {
    let n = rows.ncols();
    let mut a = CMatrix::identity(n, n);
    for &k in users {
        let g = rows.row(k);
        let weight = beta[k] / sigma2;
        if weight != 0.0 {
            let col = g.adjoint();
            a.gerc(C64::from(weight), &col, &col, C64::from(1.0));
        }
    }
    a
}

/// Solves `A x = g_k^H` for each user in `users`, returning the solutions as
/// columns (zero elsewhere).
fn inverse_directions(a: CMatrix, rows: &CMatrix, users: &[usize]) -> Result<CMatrix> {
    let n = rows.ncols();
    let chol = a.cholesky().ok_or_else(|| {
        Error::InfeasibleTargets("regularized covariance is not positive definite".into())
    })?;
    let mut out = CMatrix::zeros(n, rows.nrows());
    for &k in users {
        let rhs: CVector = rows.row(k).adjoint();
        out.set_column(k, &chol.solve(&rhs));
    }
    Ok(out)
}

/// One application of the dual-power update
/// `β_k ← σ² / ((1 + 1/η_k)·g_k (I + Σ_i β_i/σ² g_i^H g_i)^{-1} g_k^H)`.
///
/// Users with zero target keep `β_k = 0` and are left out of the sum.
pub fn fixed_point_step(rows: &CMatrix, targets: &SinrTargets, beta: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    let quads = full_quadratic_forms(rows, targets, beta, sigma2)?;
    let mut next = vec![0.0; rows.nrows()];
    for (k, quad) in quads {
        let eta = targets.0[k];
        next[k] = sigma2 / ((1.0 + 1.0 / eta) * quad);
    }
    Ok(next)
}

/// The same fixed point written as uplink SINR balancing,
/// `β_k ← σ²·η_k / (g_k A_{-k}^{-1} g_k^H)`, where `A_{-k}` leaves user `k`
/// out of the regularized covariance. By Sherman–Morrison both maps share
/// their fixed points; this one contracts much faster when the targets are
/// large.
pub fn balancing_step(rows: &CMatrix, targets: &SinrTargets, beta: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    let quads = full_quadratic_forms(rows, targets, beta, sigma2)?;
    let mut next = vec![0.0; rows.nrows()];
    for (k, full) in quads {
        // g A_{-k}^{-1} g^H = t / (1 − (β_k/σ²)·t) with t = g A^{-1} g^H.
        let leave_one_out = full / (1.0 - beta[k] / sigma2 * full);
        next[k] = sigma2 * targets.0[k] / leave_one_out;
    }
    Ok(next)
}

/// `g_k A^{-1} g_k^H` for every active user.
fn full_quadratic_forms(
    rows: &CMatrix,
    targets: &SinrTargets,
    beta: &[f64],
    sigma2: f64,
) -> Result<Vec<(usize, f64)>> {
    let active = targets.active();
    let a = regularized_covariance(rows, beta, sigma2, &active);
    let dirs = inverse_directions(a, rows, &active)?;
    Ok(active
        .into_iter()
        .map(|k| (k, rows.row(k).dot(&dirs.column(k).transpose()).re))
        .collect())
}

fn relative_change(next: &[f64], prev: &[f64]) -> f64 {
    let scale = next.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    let change = next
        .iter()
        .zip(prev)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    change / scale
}

/// Dual powers solving the uplink fixed point, iterated from `β = 0`.
///
/// Iterates [`balancing_step`] until successive iterates agree to `opts.tol`
/// (relative sup-norm) and then requires the residual of
/// [`fixed_point_step`] at the result to be below `opts.tol` as well.
pub fn duality_fixed_point(
    rows: &CMatrix,
    targets: &SinrTargets,
    sigma2: f64,
    opts: FixedPointOptions,
) -> Result<FixedPoint> {
    check_shapes(rows, targets)?;
    let users = rows.nrows();
    let active = targets.active();
    if active.is_empty() {
        return Ok(FixedPoint {
            beta: vec![0.0; users],
            iterations: 0,
            residual: 0.0,
        });
    }
    for &k in &active {
        if rows.row(k).norm_squared() == 0.0 {
            return Err(Error::InfeasibleTargets(format!(
                "user {k} has a positive SINR target but a zero channel"
            )));
        }
    }

    let mut beta = vec![0.0; users];
    let mut residual = f64::INFINITY;
    for iteration in 1..=opts.max_iters {
        let next = balancing_step(rows, targets, &beta, sigma2)?;
        let change = relative_change(&next, &beta);
        beta = next;
        if !change.is_finite() || beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::NoConvergence {
                iterations: iteration,
                residual: change,
            });
        }
        if change < opts.tol {
            residual = relative_change(&fixed_point_step(rows, targets, &beta, sigma2)?, &beta);
            if residual < opts.tol {
                return Ok(FixedPoint {
                    beta,
                    iterations: iteration,
                    residual,
                });
            }
        } else {
            residual = change;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iters,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualityState {
    pub beta: Vec<f64>,
    /// Unit-norm transmit directions as columns (zero for inactive users).
    pub directions: CMatrix,
    /// Coupling matrix; rows and columns of inactive users are zero.
    pub coupling: DMatrix<f64>,
    /// Downlink powers.
    pub powers: Vec<f64>,
}

/// Downlink beamformers `u_k = √q_k·ū_k` from converged dual powers.
pub fn duality_beamformer(
    rows: &CMatrix,
    targets: &SinrTargets,
    beta: &[f64],
    sigma2: f64,
) -> Result<(CMatrix, DualityState)> {
    check_shapes(rows, targets)?;
    let (users, n) = (rows.nrows(), rows.ncols());
    let active = targets.active();
    let mut directions = CMatrix::zeros(n, users);
    let mut coupling = DMatrix::zeros(users, users);
    let mut powers = vec![0.0; users];
    if active.is_empty() {
        return Ok((
            CMatrix::zeros(n, users),
            DualityState {
                beta: beta.to_vec(),
                directions,
                coupling,
                powers,
            },
        ));
    }

    let a = regularized_covariance(rows, beta, sigma2, &active);
    let raw = inverse_directions(a, rows, &active)?;
    for &k in &active {
        let col = raw.column(k);
        let norm = col.norm();
        if !(norm > 0.0) {
            return Err(Error::InfeasibleTargets(format!("user {k} has no transmit direction")));
        }
        directions.set_column(k, &(col / C64::from(norm)));
    }

    let gains = rows * &directions;
    let size = active.len();
    let mut d = DMatrix::zeros(size, size);
    for (i, &ui) in active.iter().enumerate() {
        for (j, &uj) in active.iter().enumerate() {
            let g = gains[(ui, uj)].norm_sqr();
            d[(i, j)] = if i == j { g / targets.0[ui] } else { -g };
            coupling[(ui, uj)] = d[(i, j)];
        }
    }
    let rhs = nalgebra::DVector::from_element(size, sigma2);
    let q = d
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InfeasibleTargets("coupling matrix is singular".into()))?;
    if let Some(bad) = q.iter().find(|&&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::InfeasibleTargets(format!("negative downlink power {bad:e}")));
    }

    let mut u = CMatrix::zeros(n, users);
    for (i, &k) in active.iter().enumerate() {
        powers[k] = q[i];
        u.set_column(k, &(directions.column(k) * C64::from(q[i].sqrt())));
    }
    Ok((
        u,
        DualityState {
            beta: beta.to_vec(),
            directions,
            coupling,
            powers,
        },
    ))
}

/// Duality precoder together with its fixed-point diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DualitySolution {
    pub u: CMatrix,
    pub state: DualityState,
    pub iterations: usize,
    pub residual: f64,
}

/// Fixed point followed by [`duality_beamformer`].
pub fn duality_precoder(
    rows: &CMatrix,
    targets: &SinrTargets,
    sigma2: f64,
    opts: FixedPointOptions,
) -> Result<DualitySolution> {
    let fp = duality_fixed_point(rows, targets, sigma2, opts)?;
    let (u, state) = duality_beamformer(rows, targets, &fp.beta, sigma2)?;
    Ok(DualitySolution {
        u,
        state,
        iterations: fp.iterations,
        residual: fp.residual,
    })
}

/// Zero-forcing precoder `G^H (G G^H)^{-1} diag(σ²η)^{1/2}`.
pub fn zf_beamformer(rows: &CMatrix, targets: &SinrTargets, sigma2: f64) -> Result<CMatrix> {
    check_shapes(rows, targets)?;
    let (users, n) = rows.shape();
    if users > n {
        return Err(Error::SingularChannel { users });
    }
    let gram = rows * rows.adjoint();
    let chol = gram.cholesky().ok_or(Error::SingularChannel { users })?;
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..users).map(|i| l[(i, i)].re).collect();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(lo > hi * 1e-12) {
        return Err(Error::SingularChannel { users });
    }
    let amplitudes = CMatrix::from_diagonal(&CVector::from_iterator(
        users,
        targets.0.iter().map(|&eta| C64::from((sigma2 * eta).sqrt())),
    ));
    Ok(rows.adjoint() * chol.solve(&amplitudes))
}

fn check_shapes(rows: &CMatrix, targets: &SinrTargets) -> Result<()> {
    if rows.nrows() != targets.len() {
        return Err(Error::Domain(format!(
            "{} channel rows but {} SINR targets",
            rows.nrows(),
            targets.len()
        )));
    }
    Ok(())
}
