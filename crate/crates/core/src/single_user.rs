//! Closed-form beamformers for one user served by one RF chain.
//!
//! Each TTD drives a sub-array of `N_sub` antennas. Treating the sub-array
//! as narrowband, its phase shifters absorb the intra-sub-array curvature
//! at `f_c` and the TTD compensates the propagation delay of the sub-array
//! center. With bounded TTDs the achievable delay profiles depend on the
//! wiring, which is where the monotonicity test below comes in.

use std::f64::consts::PI;

use crate::beamformer::BeamformerSet;
use crate::channel::{
    propagation_distances, subcarrier_frequencies, NearFieldChannel, UserLocation,
};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{cis, CMat, C64};
use crate::topology::{ChainRule, DelayVector, TopologyKind, TtdTopology};

/// Distances from the user to every sub-array center and element.
#[derive(Debug, Clone, PartialEq)]
pub struct SubarrayGeometry {
    /// `r_q^sub` per TTD.
    pub centers: Vec<f64>,
    /// Center offsets `chi_q` in units of `d`.
    pub offsets: Vec<f64>,
    /// `element_distances[q][i]`: distance of element `i` of sub-array `q`.
    pub element_distances: Vec<Vec<f64>>,
    pub r_max: f64,
    pub r_min: f64,
}

pub fn subarray_geometry(loc: &UserLocation, cfg: &SystemConfig) -> Result<SubarrayGeometry> {
    check_location(loc)?;
    let q_len = cfg.n_ttd_per_chain;
    if q_len == 0 || cfg.n_antennas % q_len != 0 {
        return Err(Error::config("n_ttd_per_chain", "must divide n_antennas"));
    }
    let n_sub = cfg.n_sub();
    let d = cfg.antenna_spacing;
    let (r, cos_t) = (loc.distance, loc.angle.cos());
    let offsets: Vec<f64> = (0..q_len)
        .map(|q| (q as f64 - (q_len as f64 - 1.0) / 2.0) * n_sub as f64)
        .collect();
    let centers: Vec<f64> = offsets
        .iter()
        .map(|chi| {
            let x = chi * d;
            (r * r + x * x - 2.0 * r * x * cos_t).sqrt()
        })
        .collect();
    let element_distances = propagation_distances(loc, cfg)
        .chunks(n_sub)
        .map(<[f64]>::to_vec)
        .collect();
    let r_max = centers.iter().cloned().fold(f64::MIN, f64::max);
    let r_min = centers.iter().cloned().fold(f64::MAX, f64::min);
    Ok(SubarrayGeometry {
        centers,
        offsets,
        element_distances,
        r_max,
        r_min,
    })
}

fn check_location(loc: &UserLocation) -> Result<()> {
    if !(loc.distance > 0.0 && loc.distance.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "user distance must be positive, got {}",
            loc.distance
        )));
    }
    Ok(())
}

/// Delays and phases that align every sub-array at every subcarrier when
/// TTDs have unlimited range.
#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteDelayProfile {
    /// `t_q^inf = (r_max^sub - r_q^sub) / c`, seconds.
    pub delays: Vec<f64>,
    /// `steps[i] = delays[i + 1] - delays[i]` (`Delta t_q` for `q = i + 2`).
    pub steps: Vec<f64>,
    /// Common offset `r_max^sub / c` removed so that the smallest delay is 0.
    pub offset: f64,
    /// Phase-shifter phases in cycles, `psi[q][i] = f_c (r~_{q,i} - r_q^sub) / c`.
    pub ps_phases: Vec<Vec<f64>>,
}

impl InfiniteDelayProfile {
    /// Unit-modulus phase-shifter coefficients `exp(j 2 pi psi)`, flattened
    /// over the array.
    pub fn ps_coefficients(&self) -> Vec<C64> {
        self.ps_phases
            .iter()
            .flatten()
            .map(|&psi| cis(2.0 * PI * psi))
            .collect()
    }

    pub fn max_delay(&self) -> f64 {
        self.delays.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn infinite_range_design(geo: &SubarrayGeometry, cfg: &SystemConfig) -> InfiniteDelayProfile {
    let c = cfg.speed_of_light;
    let delays: Vec<f64> = geo.centers.iter().map(|r| (geo.r_max - r) / c).collect();
    let steps = delays.windows(2).map(|w| w[1] - w[0]).collect();
    let ps_phases = geo
        .element_distances
        .iter()
        .zip(&geo.centers)
        .map(|(elems, rc)| {
            elems
                .iter()
                .map(|r| cfg.center_freq * (r - rc) / c)
                .collect()
        })
        .collect();
    InfiniteDelayProfile {
        delays,
        steps,
        offset: geo.r_max / c,
        ps_phases,
    }
}

/// Shape of the unbounded delay profile over the TTD index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Increasing,
    Decreasing,
    /// Rises up to the 1-based TTD index `peak`, then falls.
    Unimodal {
        peak: usize,
    },
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::Increasing => "increasing",
            Region::Decreasing => "decreasing",
            Region::Unimodal { .. } => "unimodal",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityRegion {
    /// `J(r, theta) = 2 r cos(theta) / sin(theta)^2`, meters.
    pub j: f64,
    /// `(Q - 2) N_sub d`, meters.
    pub threshold: f64,
    pub region: Region,
}

impl MonotonicityRegion {
    /// `J` in units of `N_sub d`.
    pub fn j_normalized(&self, cfg: &SystemConfig) -> f64 {
        self.j / (cfg.n_sub() as f64 * cfg.antenna_spacing)
    }
}

/// Fresnel-approximation classification of the unbounded delay profile.
///
/// Expanding `r_q^sub` to second order in the sub-array offset makes
/// `Delta t_q > 0` equivalent to `q < Q/2 + 1 + J / (2 N_sub d)`, which
/// gives the thresholds `+-(Q - 2) N_sub d`.
pub fn classify_monotonicity(loc: &UserLocation, cfg: &SystemConfig) -> Result<MonotonicityRegion> {
    check_location(loc)?;
    let sin_t = loc.angle.sin();
    if !(loc.angle > 0.0 && loc.angle < PI) || sin_t <= 0.0 {
        return Err(Error::AngleOutOfDomain { theta: loc.angle });
    }
    let j = 2.0 * loc.distance * loc.angle.cos() / (sin_t * sin_t);
    Ok(classify_j(j, cfg))
}

fn classify_j(j: f64, cfg: &SystemConfig) -> MonotonicityRegion {
    let q_len = cfg.n_ttd_per_chain;
    let unit = cfg.n_sub() as f64 * cfg.antenna_spacing;
    let threshold = (q_len as f64 - 2.0) * unit;
    let region = if j >= threshold {
        Region::Increasing
    } else if j <= -threshold {
        Region::Decreasing
    } else {
        let peak = q_len as f64 / 2.0 + 1.0 + (j / (2.0 * unit)).floor();
        Region::Unimodal {
            peak: (peak as i64).clamp(2, q_len as i64) as usize,
        }
    };
    MonotonicityRegion {
        j,
        threshold,
        region,
    }
}

/// Classification that also accepts the endfire directions, using the
/// limit of `J`: `theta -> 0` is increasing, `theta -> pi` decreasing.
pub fn classify_with_endfire_limit(
    loc: &UserLocation,
    cfg: &SystemConfig,
) -> Result<MonotonicityRegion> {
    match classify_monotonicity(loc, cfg) {
        Err(Error::AngleOutOfDomain { theta }) => {
            let j = if theta.cos() > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            Ok(classify_j(j, cfg))
        }
        other => other,
    }
}

/// Raw delays of one chain for a bounded TTD range.
///
/// Parallel TTDs clip the unbounded profile. Serial chains reproduce the
/// profile steps whose sign matches the chain direction and leave the rest
/// at zero; the hybrid chain does this per half.
pub fn finite_range_design(
    profile: &InfiniteDelayProfile,
    rule: ChainRule,
    t_max: f64,
) -> Vec<f64> {
    let q_len = profile.delays.len();
    let half = q_len / 2;
    // step into TTD q (0-based) from q-1 and out of q towards q+1
    let forward = |q: usize| {
        if q == 0 {
            0.0
        } else {
            let step = profile.steps[q - 1];
            if step >= 0.0 {
                step.min(t_max)
            } else {
                0.0
            }
        }
    };
    let backward = |q: usize| {
        if q + 1 == q_len {
            0.0
        } else {
            let step = profile.steps[q];
            if step <= 0.0 {
                (-step).min(t_max)
            } else {
                0.0
            }
        }
    };
    (0..q_len)
        .map(|q| match rule {
            ChainRule::Parallel => profile.delays[q].min(t_max),
            ChainRule::Forward => forward(q),
            ChainRule::Backward => backward(q),
            ChainRule::Hybrid if q < half => forward(q),
            ChainRule::Hybrid => backward(q),
        })
        .collect()
}

/// Complete closed-form design for one user on a single RF chain.
#[derive(Debug, Clone)]
pub struct SingleUserDesign {
    pub profile: InfiniteDelayProfile,
    pub beamformer: BeamformerSet,
}

/// Phase shifters from the unbounded design, delays from
/// [`finite_range_design`] and full transmit power on every subcarrier.
/// `t_max = f64::INFINITY` gives the unbounded design.
pub fn design_single_user(
    loc: &UserLocation,
    kind: TopologyKind,
    t_max: f64,
    cfg: &SystemConfig,
) -> Result<SingleUserDesign> {
    let topo = TtdTopology::new(kind, 1, cfg.n_ttd_per_chain)?;
    let geo = subarray_geometry(loc, cfg)?;
    let profile = infinite_range_design(&geo, cfg);
    let raw = finite_range_design(&profile, topo.chain_rule(0), t_max);
    let delays = DelayVector::new(vec![raw], t_max)?;
    let digital =
        vec![CMat::from_element(1, 1, C64::from(cfg.transmit_power.sqrt())); cfg.n_subcarriers];
    let beamformer = BeamformerSet::new(topo, vec![profile.ps_coefficients()], delays, digital)?;
    Ok(SingleUserDesign {
        profile,
        beamformer,
    })
}

/// Array gain `G_m = |sum_n alpha_n a_n exp(-j 2 pi f_m t~_q(n))|` towards
/// `loc` on every subcarrier, for chain `chain` of `bf`.
pub fn array_gains(
    loc: &UserLocation,
    bf: &BeamformerSet,
    chain: usize,
    cfg: &SystemConfig,
) -> Vec<f64> {
    let dist = propagation_distances(loc, cfg);
    let cum = bf.cumulative();
    let n_sub = bf.n_sub();
    subcarrier_frequencies(cfg)
        .iter()
        .map(|&f| {
            let k = -2.0 * PI * f / cfg.speed_of_light;
            dist.iter()
                .zip(&bf.ps[chain])
                .enumerate()
                .map(|(i, (r, a))| cis(k * r - 2.0 * PI * f * cum[chain][i / n_sub]) * a)
                .sum::<C64>()
                .norm()
        })
        .collect()
}

/// Per-subcarrier and aggregate rates of a single-user link.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleUserRate {
    pub per_subcarrier: Vec<f64>,
    /// `sum_m R_m / (M + L_cp)`.
    pub aggregate: f64,
}

/// `R_m = log2(1 + |beta_m|^2 P_t G_m^2 / (sigma^2 N))` from LoS gains.
pub fn rate_from_gains(gains: &[f64], los_gains: &[f64], cfg: &SystemConfig) -> SingleUserRate {
    let snr = cfg.transmit_power / (cfg.noise_power() * cfg.n_antennas as f64);
    let per_subcarrier: Vec<f64> = gains
        .iter()
        .zip(los_gains)
        .map(|(g, b)| (1.0 + b * snr * g * g).log2())
        .collect();
    let aggregate = per_subcarrier.iter().sum::<f64>() / (cfg.n_subcarriers + cfg.cp_length) as f64;
    SingleUserRate {
        per_subcarrier,
        aggregate,
    }
}

/// Rate of user 0 from the received signal `|h_m^H A T_m d_m|^2 / sigma^2`.
pub fn single_user_rate(
    channel: &NearFieldChannel,
    bf: &BeamformerSet,
    cfg: &SystemConfig,
) -> Result<SingleUserRate> {
    if bf.n_rf() != 1 || channel.n_users() != 1 || bf.digital.iter().any(|d| d.shape() != (1, 1)) {
        return Err(Error::Shape(
            "single-user rate needs one RF chain and one user".into(),
        ));
    }
    if bf.digital.len() != channel.n_subcarriers() || bf.n_antennas() != channel.n_antennas() {
        return Err(Error::Shape(
            "beamformer does not match the channel dimensions".into(),
        ));
    }
    let noise = cfg.noise_power();
    let per_subcarrier: Vec<f64> = channel
        .frequencies
        .iter()
        .enumerate()
        .map(|(m, &f)| {
            let x = bf.precoder(m, f);
            let s = (channel.matrix(m).adjoint() * x)[(0, 0)].norm_sqr();
            (1.0 + s / noise).log2()
        })
        .collect();
    let aggregate =
        per_subcarrier.iter().sum::<f64>() / (channel.n_subcarriers() + cfg.cp_length) as f64;
    Ok(SingleUserRate {
        per_subcarrier,
        aggregate,
    })
}
