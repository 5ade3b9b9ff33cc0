//! Spherical-wave OFDM channel model for a uniform linear array.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{cis, CMat, CVec, C64};

/// Polar position relative to the array center; the angle is measured from
/// the array axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLocation {
    pub distance: f64,
    pub angle: f64,
}

impl UserLocation {
    pub fn new(distance: f64, angle: f64) -> Self {
        Self { distance, angle }
    }

    pub fn from_degrees(distance: f64, angle_deg: f64) -> Self {
        Self::new(distance, angle_deg.to_radians())
    }

    pub fn cartesian(&self) -> (f64, f64) {
        (
            self.distance * self.angle.cos(),
            self.distance * self.angle.sin(),
        )
    }

    fn euclid(&self, other: &UserLocation) -> f64 {
        let (x0, y0) = self.cartesian();
        let (x1, y1) = other.cartesian();
        (x0 - x1).hypot(y0 - y1)
    }
}

/// OFDM subcarrier frequencies `f_c + B (2m - 1 - M) / (2M)`, `m = 1..M`.
pub fn subcarrier_frequencies(cfg: &SystemConfig) -> Vec<f64> {
    let m_total = cfg.n_subcarriers as f64;
    (1..=cfg.n_subcarriers)
        .map(|m| {
            cfg.center_freq + cfg.bandwidth * (2.0 * m as f64 - 1.0 - m_total) / (2.0 * m_total)
        })
        .collect()
}

/// Signed element index `n - 1 - (N - 1)/2` for a 0-based antenna `n`.
#[inline]
pub fn element_offset(n: usize, n_antennas: usize) -> f64 {
    n as f64 - (n_antennas as f64 - 1.0) / 2.0
}

/// Exact distances from every antenna to `loc`.
pub fn propagation_distances(loc: &UserLocation, cfg: &SystemConfig) -> Vec<f64> {
    let (r, cos_t) = (loc.distance, loc.angle.cos());
    let d = cfg.antenna_spacing;
    (0..cfg.n_antennas)
        .map(|n| {
            let delta = element_offset(n, cfg.n_antennas) * d;
            (r * r + delta * delta - 2.0 * r * delta * cos_t).sqrt()
        })
        .collect()
}

/// Near-field array response `exp(-j 2 pi f r_n / c)`.
pub fn array_response(f: f64, loc: &UserLocation, cfg: &SystemConfig) -> CVec {
    let k = -2.0 * PI * f / cfg.speed_of_light;
    CVec::from_iterator(
        cfg.n_antennas,
        propagation_distances(loc, cfg)
            .into_iter()
            .map(|r| cis(k * r)),
    )
}

/// Spreading plus absorption loss `(4 pi f r / c)^2 exp(k_abs r)` as a
/// linear power factor.
pub fn pathloss(f: f64, r: f64, cfg: &SystemConfig) -> f64 {
    let spread = 4.0 * PI * f * r / cfg.speed_of_light;
    spread * spread * (cfg.absorption_coeff * r).exp()
}

/// Per-subcarrier channel vectors of all users plus the path metadata used
/// to build them.
#[derive(Debug, Clone)]
pub struct NearFieldChannel {
    pub frequencies: Vec<f64>,
    pub users: Vec<UserLocation>,
    pub scatterers: Vec<Vec<UserLocation>>,
    /// BS -> scatterer -> user distance per `(k, l)`.
    pub scatter_distances: Vec<Vec<f64>>,
    /// LoS gains `beta[m][k]`.
    pub los_gains: Vec<Vec<C64>>,
    /// NLoS gains `beta[m][k][l]`.
    pub nlos_gains: Vec<Vec<Vec<C64>>>,
    /// `matrices[m]` is `N x K` with column `k` equal to `h_{m,k}`.
    matrices: Vec<CMat>,
}

impl NearFieldChannel {
    pub fn n_subcarriers(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_antennas(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    /// `N x K` channel matrix of subcarrier `m` (0-based).
    pub fn matrix(&self, m: usize) -> &CMat {
        &self.matrices[m]
    }

    pub fn vector(&self, m: usize, k: usize) -> CVec {
        self.matrices[m].column(k).into_owned()
    }

    /// Channel restricted to a subset of users, in the given order.
    pub fn select_users(&self, users: &[usize]) -> NearFieldChannel {
        NearFieldChannel {
            frequencies: self.frequencies.clone(),
            users: users.iter().map(|&k| self.users[k]).collect(),
            scatterers: users.iter().map(|&k| self.scatterers[k].clone()).collect(),
            scatter_distances: users
                .iter()
                .map(|&k| self.scatter_distances[k].clone())
                .collect(),
            los_gains: self
                .los_gains
                .iter()
                .map(|g| users.iter().map(|&k| g[k]).collect())
                .collect(),
            nlos_gains: self
                .nlos_gains
                .iter()
                .map(|g| users.iter().map(|&k| g[k].clone()).collect())
                .collect(),
            matrices: self
                .matrices
                .iter()
                .map(|h| h.select_columns(users))
                .collect(),
        }
    }
}

/// Build `h_{m,k} = beta a*(f_m, r_k, theta_k) + sum_l beta_l a*(f_m, scatterer_l)`.
///
/// LoS gains are real and positive; each scattered path gets one uniform
/// random phase drawn from `seed`, shared across subcarriers.
pub fn generate_channel(
    users: &[UserLocation],
    scatterers: &[Vec<UserLocation>],
    cfg: &SystemConfig,
    seed: u64,
) -> Result<NearFieldChannel> {
    if scatterers.len() != users.len() {
        return Err(Error::Shape(format!(
            "{} scatterer lists for {} users",
            scatterers.len(),
            users.len()
        )));
    }
    let expected = cfg.n_scatterers();
    if let Some((k, list)) = scatterers
        .iter()
        .enumerate()
        .find(|(_, s)| s.len() != expected)
    {
        return Err(Error::Shape(format!(
            "user {k} has {} scatterers, configuration expects {expected}",
            list.len()
        )));
    }
    build_channel(users, scatterers, cfg, seed)
}

/// LoS-only channel, independent of the configured path count.
pub fn generate_los_channel(users: &[UserLocation], cfg: &SystemConfig) -> NearFieldChannel {
    let empty = vec![Vec::new(); users.len()];
    build_channel(users, &empty, cfg, 0).expect("shapes are consistent by construction")
}

fn build_channel(
    users: &[UserLocation],
    scatterers: &[Vec<UserLocation>],
    cfg: &SystemConfig,
    seed: u64,
) -> Result<NearFieldChannel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frequencies = subcarrier_frequencies(cfg);
    let gain = cfg.tx_gain * cfg.rx_gain;

    let scatter_distances: Vec<Vec<f64>> = users
        .iter()
        .zip(scatterers)
        .map(|(u, list)| list.iter().map(|s| s.distance + s.euclid(u)).collect())
        .collect();
    let nlos_phases: Vec<Vec<f64>> = scatterers
        .iter()
        .map(|list| {
            list.iter()
                .map(|_| rng.random::<f64>() * 2.0 * PI)
                .collect()
        })
        .collect();

    let mut los_gains = Vec::with_capacity(frequencies.len());
    let mut nlos_gains = Vec::with_capacity(frequencies.len());
    let mut matrices = Vec::with_capacity(frequencies.len());
    for &f in &frequencies {
        let mut h = CMat::zeros(cfg.n_antennas, users.len());
        let mut los_m = Vec::with_capacity(users.len());
        let mut nlos_m = Vec::with_capacity(users.len());
        for (k, user) in users.iter().enumerate() {
            let beta = C64::new((gain / pathloss(f, user.distance, cfg)).sqrt(), 0.0);
            let mut col = array_response(f, user, cfg).map(|z| z.conj() * beta);
            let mut gains_k = Vec::with_capacity(scatterers[k].len());
            for (l, s) in scatterers[k].iter().enumerate() {
                let mag =
                    (cfg.scatter_loss * gain / pathloss(f, scatter_distances[k][l], cfg)).sqrt();
                let g = C64::from_polar(mag, nlos_phases[k][l]);
                col += array_response(f, s, cfg).map(|z| z.conj() * g);
                gains_k.push(g);
            }
            h.set_column(k, &col);
            los_m.push(beta);
            nlos_m.push(gains_k);
        }
        los_gains.push(los_m);
        nlos_gains.push(nlos_m);
        matrices.push(h);
    }
    Ok(NearFieldChannel {
        frequencies,
        users: users.to_vec(),
        scatterers: scatterers.to_vec(),
        scatter_distances,
        los_gains,
        nlos_gains,
        matrices,
    })
}

/// Uniform draw over the half-annulus `r_min <= r <= r_max`, `0 < theta < pi`
/// (uniform in area).
pub fn sample_location<R: Rng + ?Sized>(rng: &mut R, r_min: f64, r_max: f64) -> UserLocation {
    let u: f64 = rng.random();
    let r = (r_min * r_min + u * (r_max * r_max - r_min * r_min)).sqrt();
    // open interval: resample the (measure-zero) endpoints
    let theta = loop {
        let t = rng.random::<f64>() * PI;
        if t > 0.0 {
            break t;
        }
    };
    UserLocation::new(r, theta)
}

/// Users and scatterers drawn uniformly in the annulus, followed by channel
/// generation; fully determined by `seed`.
pub fn random_channel(cfg: &SystemConfig, r_min: f64, r_max: f64, seed: u64) -> NearFieldChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users: Vec<UserLocation> = (0..cfg.n_users)
        .map(|_| sample_location(&mut rng, r_min, r_max))
        .collect();
    let scatterers: Vec<Vec<UserLocation>> = (0..cfg.n_users)
        .map(|_| {
            (0..cfg.n_scatterers())
                .map(|_| sample_location(&mut rng, r_min, r_max))
                .collect()
        })
        .collect();
    let phase_seed = rng.random::<u64>();
    generate_channel(&users, &scatterers, cfg, phase_seed).expect("counts match configuration")
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn distances_obey_triangle_inequality(r in 0.5f64..50.0, theta in 0.0f64..PI) {
            let cfg = SystemConfig::desk();
            let loc = UserLocation::new(r, theta);
            for (n, dist) in propagation_distances(&loc, &cfg).into_iter().enumerate() {
                let off = element_offset(n, cfg.n_antennas).abs() * cfg.antenna_spacing;
                prop_assert!((dist - r).abs() <= off * (1.0 + 1e-12) + 1e-12);
            }
        }

        #[test]
        fn response_is_unit_modulus(r in 0.5f64..50.0, theta in 0.0f64..PI, f in 1e9f64..3e11) {
            let cfg = SystemConfig::desk();
            let a = array_response(f, &UserLocation::new(r, theta), &cfg);
            for z in a.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-14);
            }
        }
    }
}
