//! Node geometry and random channel realizations.
//!
//! The BS sits at the origin and the user disc is centred on the positive
//! x-axis. The relay lies on the BS–centre line and the RIS is displaced from
//! it by a small perpendicular offset. Links among BS, relay and RIS carry a
//! line-of-sight component (Rician); every link that ends at a user is
//! Rayleigh.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Error, Result, C64};

/// Distances below this are clamped before evaluating path loss.
pub const MIN_LINK_DISTANCE: f64 = 1.0;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1000.0).log10()
}

/// Scalar system parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// BS antenna count (M).
    pub bs_antennas: usize,
    /// Relay antenna count (N).
    pub relay_antennas: usize,
    /// RIS element count (L).
    pub ris_elements: usize,
    /// Number of single-antenna users (K).
    pub users: usize,
    /// Control bits per RIS element (b).
    pub phase_bits: u32,
    /// Receiver noise power in watts.
    pub noise_power: f64,
    /// Per-user end-to-end rate target in bits/s/Hz.
    pub rate_threshold: f64,
    /// Distance from the BS to the centre of the user disc (m).
    pub user_center_distance: f64,
    /// Radius of the user disc (m).
    pub user_radius: f64,
    /// Distance from the BS to the relay along the BS–centre line (m).
    pub relay_distance: f64,
    /// Perpendicular offset of the RIS from the relay (m).
    pub ris_offset: f64,
    /// Rician factor of the LoS links (linear). `inf` gives pure LoS.
    pub rician_factor: f64,
    /// Transmit antenna gain (dBi).
    pub tx_gain_dbi: f64,
    /// Receive antenna gain (dBi).
    pub rx_gain_dbi: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bs_antennas: 10,
            relay_antennas: 9,
            ris_elements: 50,
            users: 4,
            phase_bits: 2,
            noise_power: dbm_to_watts(-94.0),
            rate_threshold: 2.0,
            user_center_distance: 300.0,
            user_radius: 40.0,
            relay_distance: 150.0,
            ris_offset: 1.0,
            rician_factor: 10.0,
            tx_gain_dbi: 5.0,
            rx_gain_dbi: 0.0,
            seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.users == 0 {
            return fail("users must be at least 1".into());
        }
        if self.bs_antennas < self.users {
            return fail(format!(
                "bs_antennas ({}) must be at least users ({})",
                self.bs_antennas, self.users
            ));
        }
        if self.relay_antennas < self.users {
            return fail(format!(
                "relay_antennas ({}) must be at least users ({})",
                self.relay_antennas, self.users
            ));
        }
        if self.ris_elements == 0 {
            return fail("ris_elements must be at least 1".into());
        }
        if !(1..=16).contains(&self.phase_bits) {
            return fail(format!("phase_bits must be in 1..=16, got {}", self.phase_bits));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return fail(format!("noise_power must be positive, got {}", self.noise_power));
        }
        if !(self.rate_threshold > 0.0 && self.rate_threshold.is_finite()) {
            return fail(format!(
                "rate_threshold must be positive, got {}",
                self.rate_threshold
            ));
        }
        if !(self.relay_distance > 0.0 && self.relay_distance < self.user_center_distance) {
            return fail(format!(
                "relay_distance must lie in (0, {}), got {}",
                self.user_center_distance, self.relay_distance
            ));
        }
        if !(self.user_radius >= 0.0 && self.user_radius.is_finite()) {
            return fail(format!("user_radius must be nonnegative, got {}", self.user_radius));
        }
        if !(self.ris_offset > 0.0 && self.ris_offset.is_finite()) {
            return fail(format!("ris_offset must be positive, got {}", self.ris_offset));
        }
        if !(self.rician_factor >= 0.0) {
            return fail(format!(
                "rician_factor must be nonnegative, got {}",
                self.rician_factor
            ));
        }
        if !(self.tx_gain_dbi.is_finite() && self.rx_gain_dbi.is_finite()) {
            return fail("antenna gains must be finite".into());
        }
        Ok(())
    }

    /// Number of discrete phase levels per element, `2^b`.
    pub fn phase_levels(&self) -> usize {
        1usize << self.phase_bits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Angle from array broadside toward `other` for an array laid out along
    /// the y-axis (broadside is the x-axis).
    pub fn broadside_angle_to(&self, other: &Point) -> f64 {
        let d = self.distance(other);
        if d == 0.0 {
            0.0
        } else {
            ((other.y - self.y) / d).clamp(-1.0, 1.0).asin()
        }
    }
}

/// Positions of every node in the plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs: Point,
    pub relay: Point,
    pub ris: Point,
    pub user_center: Point,
    pub users: Vec<Point>,
}

impl Geometry {
    pub fn bs_relay(&self) -> f64 {
        self.bs.distance(&self.relay)
    }

    pub fn bs_ris(&self) -> f64 {
        self.bs.distance(&self.ris)
    }

    pub fn ris_relay(&self) -> f64 {
        self.ris.distance(&self.relay)
    }

    pub fn bs_user(&self, k: usize) -> f64 {
        self.bs.distance(&self.users[k])
    }

    pub fn relay_user(&self, k: usize) -> f64 {
        self.relay.distance(&self.users[k])
    }

    pub fn ris_user(&self, k: usize) -> f64 {
        self.ris.distance(&self.users[k])
    }
}

/// Places BS, relay and RIS deterministically and draws users uniformly in
/// the disc.
pub fn build_geometry<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Geometry {
    let user_center = Point::new(config.user_center_distance, 0.0);
    let relay = Point::new(config.relay_distance, 0.0);
    let ris = Point::new(config.relay_distance, config.ris_offset);
    let users = (0..config.users)
        .map(|_| {
            let radius = config.user_radius * rng.random::<f64>().sqrt();
            let angle = 2.0 * PI * rng.random::<f64>();
            Point::new(
                user_center.x + radius * angle.cos(),
                user_center.y + radius * angle.sin(),
            )
        })
        .collect();
    Geometry {
        bs: Point::new(0.0, 0.0),
        relay,
        ris,
        user_center,
        users,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    LineOfSight,
    NonLineOfSight,
}

/// Large-scale power attenuation `C / d^alpha`.
pub fn path_loss(distance: f64, propagation: Propagation, tx_gain_dbi: f64, rx_gain_dbi: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!(
            "path loss needs a positive distance, got {distance}"
        )));
    }
    let (offset_db, exponent) = match propagation {
        Propagation::LineOfSight => (35.95, 2.2),
        Propagation::NonLineOfSight => (33.95, 3.67),
    };
    let c = 10f64.powf((tx_gain_dbi + rx_gain_dbi - offset_db) / 10.0);
    Ok(c / distance.powf(exponent))
}

/// Half-wavelength ULA response.
pub fn steering_vector_ula(n_elems: usize, angle: f64) -> CVector {
    let step = PI * angle.sin();
    CVector::from_fn(n_elems, |i, _| C64::from_polar(1.0, step * i as f64))
}

/// Half-wavelength UPA response; element `(r, c)` is stored at `r * cols + c`
/// with `c` running along the horizontal axis.
pub fn steering_vector_upa(rows: usize, cols: usize, azimuth: f64, elevation: f64) -> CVector {
    let horizontal = PI * azimuth.sin() * elevation.cos();
    let vertical = PI * elevation.sin();
    CVector::from_fn(rows * cols, |idx, _| {
        let (r, c) = (idx / cols, idx % cols);
        C64::from_polar(1.0, horizontal * c as f64 + vertical * r as f64)
    })
}

/// The most square `rows × cols = n` split with `rows ≤ cols`.
pub fn squarest_factorization(n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && !n.is_multiple_of(rows) {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, n / rows)
}

/// One realization of every channel in the system.
///
/// User channels are stored as the row vectors that multiply the transmit
/// beamformers: row `k` of `h_t` is `h_{T,k}^H`, and likewise for `h_r` and
/// `h_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS → relay, N × M.
    pub h_tr: CMatrix,
    /// BS → RIS, L × M.
    pub h_ti: CMatrix,
    /// RIS → relay, N × L. The relay → RIS channel is its conjugate transpose.
    pub h_ir: CMatrix,
    /// BS → users, K × M.
    pub h_t: CMatrix,
    /// Relay → users, K × N.
    pub h_r: CMatrix,
    /// RIS → users, K × L.
    pub h_i: CMatrix,
}

impl ChannelSet {
    pub fn bs_antennas(&self) -> usize {
        self.h_tr.ncols()
    }

    pub fn relay_antennas(&self) -> usize {
        self.h_tr.nrows()
    }

    pub fn ris_elements(&self) -> usize {
        self.h_ti.nrows()
    }

    pub fn users(&self) -> usize {
        self.h_t.nrows()
    }

    /// Relay → RIS channel (L × N), by reciprocity.
    pub fn h_ri(&self) -> CMatrix {
        self.h_ir.adjoint()
    }

    /// The same realization with the RIS removed (L = 0).
    pub fn without_ris(&self) -> ChannelSet {
        let (n, m, k) = (self.relay_antennas(), self.bs_antennas(), self.users());
        ChannelSet {
            h_tr: self.h_tr.clone(),
            h_ti: CMatrix::zeros(0, m),
            h_ir: CMatrix::zeros(n, 0),
            h_t: self.h_t.clone(),
            h_r: self.h_r.clone(),
            h_i: CMatrix::zeros(k, 0),
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.h_tr, &self.h_ti, &self.h_ir, &self.h_t, &self.h_r, &self.h_i]
            .iter()
            .all(|m| m.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    /// Draws geometry and channels for `config` from a fresh stream seeded
    /// with `config.seed`.
    pub fn realize(config: &SystemConfig) -> Result<(Geometry, ChannelSet)> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(config.seed);
        let geometry = build_geometry(config, &mut rng);
        let channels = sample_channels(&geometry, config, &mut rng)?;
        Ok((geometry, channels))
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows × cols` matrix of i.i.d. CN(0, 1) entries, drawn row by row.
fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let mut out = CMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            out[(r, c)] = complex_gaussian(rng);
        }
    }
    out
}

/// LoS / scattered amplitude weights for a Rician factor.
fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    }
}

fn rician_link<R: Rng + ?Sized>(
    beta: f64,
    kappa: f64,
    rx_response: &CVector,
    tx_response: &CVector,
    rng: &mut R,
) -> CMatrix {
    let nlos = gaussian_matrix(rx_response.len(), tx_response.len(), rng);
    let los = rx_response * tx_response.adjoint();
    let (w_los, w_nlos) = rician_weights(kappa);
    (los * C64::from(w_los) + nlos * C64::from(w_nlos)) * C64::from(beta.sqrt())
}

/// Draws a full [`ChannelSet`] for the given geometry.
///
/// Random draws happen in a fixed order (BS→relay, BS→RIS, RIS→relay, then
/// user links BS, relay, RIS) and do not depend on the Rician factor, so two
/// configurations differing only in `rician_factor` share their scattered
/// components.
pub fn sample_channels<R: Rng + ?Sized>(
    geometry: &Geometry,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<ChannelSet> {
    let (m, n, l) = (config.bs_antennas, config.relay_antennas, config.ris_elements);
    let k = geometry.users.len();
    let (gt, gr) = (config.tx_gain_dbi, config.rx_gain_dbi);
    let kappa = config.rician_factor;
    let (upa_rows, upa_cols) = squarest_factorization(l);
    let los = |d: f64| path_loss(d.max(MIN_LINK_DISTANCE), Propagation::LineOfSight, gt, gr);
    let nlos = |d: f64| path_loss(d.max(MIN_LINK_DISTANCE), Propagation::NonLineOfSight, gt, gr);
    let ula = |size: usize, from: &Point, to: &Point| steering_vector_ula(size, from.broadside_angle_to(to));
    let upa = |from: &Point, to: &Point| {
        steering_vector_upa(upa_rows, upa_cols, from.broadside_angle_to(to), 0.0)
    };

    let g = geometry;
    let h_tr = rician_link(
        los(g.bs_relay())?,
        kappa,
        &ula(n, &g.relay, &g.bs),
        &ula(m, &g.bs, &g.relay),
        rng,
    );
    let h_ti = rician_link(
        los(g.bs_ris())?,
        kappa,
        &upa(&g.ris, &g.bs),
        &ula(m, &g.bs, &g.ris),
        rng,
    );
    let h_ir = rician_link(
        los(g.ris_relay())?,
        kappa,
        &ula(n, &g.relay, &g.ris),
        &upa(&g.ris, &g.relay),
        rng,
    );

    let mut user_rows = |cols: usize, dist: &dyn Fn(usize) -> f64| -> Result<CMatrix> {
        let mut out = gaussian_matrix(k, cols, rng);
        for user in 0..k {
            let amp = nlos(dist(user))?.sqrt();
            out.row_mut(user).scale_mut(amp);
        }
        Ok(out)
    };
    let h_t = user_rows(m, &|u| g.bs_user(u))?;
    let h_r = user_rows(n, &|u| g.relay_user(u))?;
    let h_i = user_rows(l, &|u| g.ris_user(u))?;

    Ok(ChannelSet {
        h_tr,
        h_ti,
        h_ir,
        h_t,
        h_r,
        h_i,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn path_loss_reference_values() {
        // 10^((5 + 0 - 35.95) / 10)
        let unit = path_loss(1.0, Propagation::LineOfSight, 5.0, 0.0).unwrap();
        assert_relative_eq!(unit, 8.035261221856169e-4, max_relative = 1e-12);
        let far = path_loss(150.0, Propagation::LineOfSight, 5.0, 0.0).unwrap();
        assert_relative_eq!(far, 1.3109895505096195e-8, max_relative = 1e-12);
        let nlos = path_loss(150.0, Propagation::NonLineOfSight, 5.0, 0.0).unwrap();
        assert_relative_eq!(nlos, 1.3144530524136158e-11, max_relative = 1e-12);
    }

    #[test]
    fn path_loss_doubling_distance() {
        let a = path_loss(37.0, Propagation::LineOfSight, 5.0, 0.0).unwrap();
        let b = path_loss(74.0, Propagation::LineOfSight, 5.0, 0.0).unwrap();
        assert_relative_eq!(a / b, 2f64.powf(2.2), max_relative = 1e-14);
    }

    #[test]
    fn path_loss_rejects_nonpositive_distance() {
        assert!(matches!(
            path_loss(0.0, Propagation::NonLineOfSight, 5.0, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(path_loss(-3.0, Propagation::LineOfSight, 5.0, 0.0).is_err());
    }

    #[test]
    fn ula_broadside_and_endfire() {
        let v = steering_vector_ula(7, 0.0);
        assert!(v.iter().all(|z| (*z - C64::new(1.0, 0.0)).norm() < 1e-15));

        let v = steering_vector_ula(2, PI / 2.0);
        assert_relative_eq!(v[0].arg(), 0.0);
        assert_relative_eq!(v[1].arg().abs(), PI, max_relative = 1e-12);

        let v = steering_vector_ula(11, 0.37);
        assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn upa_shape_and_modulus() {
        assert_eq!(squarest_factorization(50), (5, 10));
        assert_eq!(squarest_factorization(49), (7, 7));
        assert_eq!(squarest_factorization(13), (1, 13));
        let v = steering_vector_upa(5, 10, 0.4, 0.2);
        assert_eq!(v.len(), 50);
        assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn geometry_placement() {
        let config = SystemConfig::default();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let g = build_geometry(&config, &mut rng);
        assert_eq!(g.relay, Point::new(150.0, 0.0));
        assert_eq!(g.user_center, Point::new(300.0, 0.0));
        assert_relative_eq!(g.ris_relay(), 1.0);
        assert_eq!(g.users.len(), config.users);
        for u in &g.users {
            assert!(u.distance(&g.user_center) <= 40.0 + 1e-12);
        }
    }

    #[test]
    fn zero_radius_puts_users_at_center() {
        let config = SystemConfig {
            user_radius: 0.0,
            ..SystemConfig::default()
        };
        let g = build_geometry(&config, &mut ChaCha12Rng::seed_from_u64(1));
        assert!(g.users.iter().all(|u| *u == g.user_center));
    }

    #[test]
    fn pure_los_limit_matches_outer_product() {
        let config = SystemConfig {
            rician_factor: f64::INFINITY,
            ..SystemConfig::default()
        };
        let (g, ch) = ChannelSet::realize(&config).unwrap();
        let beta = path_loss(g.bs_relay(), Propagation::LineOfSight, 5.0, 0.0).unwrap();
        let expected = steering_vector_ula(9, g.relay.broadside_angle_to(&g.bs))
            * steering_vector_ula(10, g.bs.broadside_angle_to(&g.relay)).adjoint()
            * C64::from(beta.sqrt());
        assert_eq!(ch.h_tr, expected);
    }

    #[test]
    fn realization_is_deterministic_and_shaped() {
        let config = SystemConfig {
            seed: 42,
            ..SystemConfig::default()
        };
        let (g1, c1) = ChannelSet::realize(&config).unwrap();
        let (g2, c2) = ChannelSet::realize(&config).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(c1, c2);
        assert!(c1.is_finite());
        assert_eq!(c1.h_tr.shape(), (9, 10));
        assert_eq!(c1.h_ti.shape(), (50, 10));
        assert_eq!(c1.h_ir.shape(), (9, 50));
        assert_eq!(c1.h_t.shape(), (4, 10));
        assert_eq!(c1.h_r.shape(), (4, 9));
        assert_eq!(c1.h_i.shape(), (4, 50));
        assert_eq!(c1.h_ri(), c1.h_ir.adjoint());
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::default().validate().is_ok());
        let bad = [
            SystemConfig { users: 11, ..Default::default() },
            SystemConfig { relay_antennas: 3, ..Default::default() },
            SystemConfig { ris_elements: 0, ..Default::default() },
            SystemConfig { phase_bits: 0, ..Default::default() },
            SystemConfig { noise_power: 0.0, ..Default::default() },
            SystemConfig { rate_threshold: -1.0, ..Default::default() },
            SystemConfig { relay_distance: 300.0, ..Default::default() },
            SystemConfig { user_radius: -1.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))), "{cfg:?}");
        }
    }

    #[test]
    fn dbm_conversions() {
        assert_relative_eq!(watts_to_dbm(1.0), 30.0);
        assert_relative_eq!(dbm_to_watts(-94.0), 3.981071705534969e-13, max_relative = 1e-12);
    }
}
