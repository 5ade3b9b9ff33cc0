//! Reference computations used to check `ttdbf` from the outside: a
//! stage-by-stage splitter simulation, exact-geometry delay profiles, a
//! vectorized Sylvester solve, the weighted-MSE penalty objective written
//! out term by term, closed-form MRT rates and a paired bootstrap.
//!
//! None of these call into the routines they are used to check.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type CMat = DMatrix<Complex64>;

/// Result line of one acceptance criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }

    /// All parts must pass; details are joined with `; `.
    pub fn all(parts: Vec<Verdict>) -> Self {
        let pass = parts.iter().all(|p| p.pass);
        let detail = parts
            .iter()
            .map(|p| format!("{} [{}]", p.detail, if p.pass { "ok" } else { "FAIL" }))
            .collect::<Vec<_>>()
            .join("; ");
        Self { pass, detail }
    }
}

/// Output powers of a serial splitter chain fed with `p_in`: every stage
/// first loses a factor `eta`, then taps `coefficients[q]` of what is left.
pub fn simulate_cascade(coefficients: &[f64], eta: f64, p_in: f64) -> Vec<f64> {
    let mut line = p_in;
    let mut out = Vec::with_capacity(coefficients.len());
    for &nu in coefficients {
        line /= eta;
        out.push(line * nu);
        line -= line * nu;
    }
    out
}

/// Distances from a user at `(r, theta)` to the centres of `q` equal
/// sub-arrays of an `n`-element ULA with spacing `d`, by direct geometry.
pub fn subarray_centre_distances(r: f64, theta: f64, n: usize, q: usize, d: f64) -> Vec<f64> {
    let n_sub = (n / q) as f64;
    let (ux, uy) = (r * theta.cos(), r * theta.sin());
    (0..q)
        .map(|i| {
            // sub-array centres sit at (i - (Q-1)/2) N_sub d along the axis
            let x = (i as f64 - (q as f64 - 1.0) / 2.0) * n_sub * d;
            ((ux - x).powi(2) + uy * uy).sqrt()
        })
        .collect()
}

/// Shape of the aligning delay profile `t_q = (max r - r_q) / c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileShape {
    Increasing,
    Decreasing,
    /// Rises up to the 1-based index `peak`, then falls.
    Unimodal {
        peak: usize,
    },
    Irregular,
}

/// Classifies from the signs of `t_q - t_{q-1} = (r_{q-1} - r_q) / c`.
pub fn profile_shape(distances: &[f64]) -> ProfileShape {
    let steps: Vec<f64> = distances.windows(2).map(|w| w[0] - w[1]).collect();
    if steps.iter().all(|s| *s > 0.0) {
        return ProfileShape::Increasing;
    }
    if steps.iter().all(|s| *s < 0.0) {
        return ProfileShape::Decreasing;
    }
    let rises = steps.iter().take_while(|s| **s > 0.0).count();
    if rises > 0 && steps[rises..].iter().all(|s| *s < 0.0) {
        // steps[i] enters index i + 2 (1-based)
        ProfileShape::Unimodal { peak: rises + 1 }
    } else {
        ProfileShape::Irregular
    }
}

/// Solves `a x + x b = c` through `(I kron a + b^T kron I) vec(x) = vec(c)`
/// with a dense LU factorization.
pub fn sylvester_by_vectorization(a: &CMat, b: &CMat, c: &CMat) -> Option<CMat> {
    let (m, n) = c.shape();
    let mut k = CMat::zeros(m * n, m * n);
    for j in 0..n {
        for i in 0..m {
            let row = j * m + i;
            for l in 0..m {
                k[(row, j * m + l)] += a[(i, l)];
            }
            for l in 0..n {
                k[(row, l * m + i)] += b[(l, j)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(m * n, c.iter().copied());
    let sol = k.lu().solve(&rhs)?;
    Some(CMat::from_iterator(m, n, sol.iter().copied()))
}

/// Weighted sum of MSEs with full-power noise plus the factorization
/// penalty, as a function of the auxiliary precoder `p` (`N x K`).
///
/// `e_k = |1 - v_k^* h_k^H p_k|^2 + sum_{i != k} |v_k|^2 |h_k^H p_i|^2
///        + |v_k|^2 sigma^2 ||P||^2 / P_t`
#[allow(clippy::too_many_arguments)]
pub fn penalized_mse(
    p: &CMat,
    h: &CMat,
    w: &[f64],
    v: &[Complex64],
    at: &CMat,
    d_pinv: &CMat,
    rho: f64,
    sigma2: f64,
    p_t: f64,
) -> f64 {
    let k_users = h.ncols();
    let p_norm: f64 = p.iter().map(|z| z.norm_sqr()).sum();
    let mut total = 0.0;
    for k in 0..k_users {
        let hk = h.column(k);
        let mut e = 0.0;
        for i in 0..k_users {
            let g: Complex64 = hk
                .iter()
                .zip(p.column(i).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            if i == k {
                e += (Complex64::new(1.0, 0.0) - v[k].conj() * g).norm_sqr();
            } else {
                e += v[k].norm_sqr() * g.norm_sqr();
            }
        }
        e += v[k].norm_sqr() * sigma2 * p_norm / p_t;
        total += w[k] * e;
    }
    let diff = p * d_pinv - at;
    total + diff.iter().map(|z| z.norm_sqr()).sum::<f64>() / rho
}

/// `sum_m log2(1 + P_t ||h_m||^2 / sigma^2) / (M + L_cp)` for one user.
pub fn mrt_spectral_efficiency(
    channel_norms_sq: &[f64],
    p_t: f64,
    sigma2: f64,
    cp_length: usize,
) -> f64 {
    let sum: f64 = channel_norms_sq
        .iter()
        .map(|g| (1.0 + p_t * g / sigma2).log2())
        .sum();
    sum / (channel_norms_sq.len() + cp_length) as f64
}

/// Fraction of paired bootstrap resamples on which `holds(mean_a, mean_b)`.
pub fn paired_bootstrap<F: Fn(f64, f64) -> bool>(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    seed: u64,
    holds: F,
) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0;
    for _ in 0..resamples {
        let (mut sa, mut sb) = (0.0, 0.0);
        for _ in 0..n {
            let i = rng.random_range(0..n);
            sa += a[i];
            sb += b[i];
        }
        if holds(sa / n as f64, sb / n as f64) {
            hits += 1;
        }
    }
    hits as f64 / resamples as f64
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lossless_equal_taps() {
        let q = 5;
        let nu: Vec<f64> = (0..q).map(|i| 1.0 / (q - i) as f64).collect();
        for p in simulate_cascade(&nu, 1.0, 2.0) {
            assert!((p - 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn broadside_profile_is_symmetric_unimodal() {
        let d = 1.5e-3;
        let dist = subarray_centre_distances(10.0, std::f64::consts::FRAC_PI_2, 64, 8, d);
        assert!((dist[0] - dist[7]).abs() < 1e-12);
        // even Q: the two middle sub-arrays tie at broadside
        assert_eq!(profile_shape(&dist[..4]), ProfileShape::Increasing);
        assert_eq!(profile_shape(&dist[4..]), ProfileShape::Decreasing);
    }

    #[test]
    fn shapes() {
        assert_eq!(profile_shape(&[5.0, 4.0, 3.0]), ProfileShape::Increasing);
        assert_eq!(profile_shape(&[3.0, 4.0, 5.0]), ProfileShape::Decreasing);
        assert_eq!(
            profile_shape(&[5.0, 4.0, 4.5, 6.0]),
            ProfileShape::Unimodal { peak: 2 }
        );
        assert_eq!(profile_shape(&[5.0, 6.0, 4.0]), ProfileShape::Irregular);
    }

    #[test]
    fn vectorized_sylvester_small() {
        let c = |re: f64, im: f64| Complex64::new(re, im);
        let a = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, 1.0), c(0.0, -1.0), c(3.0, 0.0)]);
        let b = CMat::from_row_slice(1, 1, &[c(1.0, 0.5)]);
        let x = CMat::from_row_slice(2, 1, &[c(1.0, 2.0), c(-1.0, 0.0)]);
        let rhs = &a * &x + &x * &b;
        let got = sylvester_by_vectorization(&a, &b, &rhs).unwrap();
        assert!((got - x).norm() < 1e-12);
    }

    #[test]
    fn mrt_closed_form() {
        // snr 3 -> log2(4) = 2 per subcarrier, averaged over M + L_cp = 4
        assert!((mrt_spectral_efficiency(&[3.0, 3.0], 1.0, 1.0, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_obvious_ordering() {
        let a: Vec<f64> = (0..50).map(|i| 10.0 + (i % 3) as f64).collect();
        let b: Vec<f64> = (0..50).map(|i| 5.0 + (i % 4) as f64).collect();
        assert_eq!(paired_bootstrap(&a, &b, 200, 1, |x, y| x > y), 1.0);
    }
}
