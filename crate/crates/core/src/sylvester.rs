//! Dense solvers for the Sylvester equation `A X + X B = C` with a small
//! left operand `A` (`K x K`) and a large right operand `B` (`N x N`).

use nalgebra::linalg::{Hessenberg, Schur};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};

/// `||A X + X B - C||_F / ||C||_F` (absolute when `C = 0`).
pub fn relative_residual(a: &CMat, b: &CMat, x: &CMat, c: &CMat) -> f64 {
    let r = (a * x + x * b - c).norm();
    let scale = c.norm();
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

fn check_shapes(a: &CMat, b_dim: usize, c: &CMat) -> Result<()> {
    if !a.is_square() || c.nrows() != a.nrows() || c.ncols() != b_dim {
        return Err(Error::Shape(format!(
            "Sylvester shapes: A {}x{}, B {b_dim}x{b_dim}, C {}x{}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

/// Vectorized form `(I (x) A + B^T (x) I) vec(X) = vec(C)` solved densely.
/// Cost grows as `(KN)^3`; meant for small cross-checks.
pub fn solve_kronecker(a: &CMat, b: &CMat, c: &CMat) -> Result<CMat> {
    check_shapes(a, b.nrows(), c)?;
    let (k, n) = (a.nrows(), b.nrows());
    let big = CMat::identity(n, n).kronecker(a) + b.transpose().kronecker(&CMat::identity(k, k));
    let rhs = CVec::from_column_slice(c.as_slice());
    let sol = big
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Kronecker system".into()))?;
    Ok(CMat::from_column_slice(k, n, sol.as_slice()))
}

/// Hessenberg-Schur method: complex Schur form of `A`, Hessenberg form of
/// `B`, then one shifted Hessenberg solve per row of `X`.
pub fn solve_hessenberg_schur(a: &CMat, b: &CMat, c: &CMat) -> Result<CMat> {
    check_shapes(a, b.nrows(), c)?;
    let (u, t) = Schur::new(a.clone()).unpack();
    let (v, h) = Hessenberg::new(b.clone()).unpack();
    let cc = u.adjoint() * c * &v;
    let (k, n) = (a.nrows(), b.nrows());
    let mut y = CMat::zeros(k, n);
    for i in (0..k).rev() {
        let mut rhs: CVec = cc.row(i).transpose();
        for j in i + 1..k {
            let tij = t[(i, j)];
            for col in 0..n {
                rhs[col] -= tij * y[(j, col)];
            }
        }
        let row = solve_row_hessenberg(&h, t[(i, i)], rhs)?;
        y.row_mut(i).copy_from(&row.transpose());
    }
    Ok(u * y * v.adjoint())
}

/// Solves `y (H + s I) = rhs` for the row vector `y`, with `H` upper
/// Hessenberg. The transposed system is lower Hessenberg; reversing rows
/// and columns turns it upper Hessenberg again.
fn solve_row_hessenberg(h: &CMat, s: C64, rhs: CVec) -> Result<CVec> {
    let n = h.nrows();
    let mut m = CMat::from_fn(n, n, |i, j| {
        let (r, c) = (n - 1 - j, n - 1 - i);
        if r > c + 1 {
            C64::new(0.0, 0.0)
        } else if r == c {
            h[(r, c)] + s
        } else {
            h[(r, c)]
        }
    });
    let mut b = CVec::from_fn(n, |i, _| rhs[n - 1 - i]);
    solve_upper_hessenberg(&mut m, &mut b)?;
    Ok(CVec::from_fn(n, |i, _| b[n - 1 - i]))
}

/// In-place Gaussian elimination with adjacent-row pivoting, `O(n^2)`.
fn solve_upper_hessenberg(m: &mut CMat, b: &mut CVec) -> Result<()> {
    let n = m.nrows();
    for k in 0..n.saturating_sub(1) {
        if m[(k + 1, k)].norm() > m[(k, k)].norm() {
            m.swap_rows(k, k + 1);
            b.swap_rows(k, k + 1);
        }
        let piv = m[(k, k)];
        if piv.norm() == 0.0 {
            return Err(Error::Numerical(
                "singular shifted Hessenberg system".into(),
            ));
        }
        let l = m[(k + 1, k)] / piv;
        if l.norm() != 0.0 {
            for j in k..n {
                let mk = m[(k, j)];
                m[(k + 1, j)] -= l * mk;
            }
            let bk = b[k];
            b[k + 1] -= l * bk;
        }
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= m[(i, j)] * b[j];
        }
        let d = m[(i, i)];
        if d.norm() == 0.0 {
            return Err(Error::Numerical(
                "singular shifted Hessenberg system".into(),
            ));
        }
        b[i] = acc / d;
    }
    Ok(())
}

/// Hermitian operator `shift I + F F^H` with a thin factor `F` (`N x r`).
#[derive(Debug, Clone)]
pub struct ShiftedLowRank {
    pub shift: f64,
    pub factor: CMat,
}

impl ShiftedLowRank {
    pub fn dense(&self) -> CMat {
        let n = self.factor.nrows();
        CMat::identity(n, n) * C64::from(self.shift) + &self.factor * self.factor.adjoint()
    }

    /// `X B` without forming `B`.
    fn right_apply(&self, x: &CMat) -> CMat {
        x * C64::from(self.shift) + (x * &self.factor) * self.factor.adjoint()
    }
}

/// Solver for Hermitian `A` and `B = shift I + F F^H`.
///
/// Diagonalizing `A = U diag(lambda) U^H` decouples the rows of `U^H X`;
/// each row needs `(lambda_i + shift) I + F F^H` inverted, which the
/// Woodbury identity reduces to an `r x r` solve. One refinement step on
/// the residual is applied. Returns `None`-like errors when a shifted
/// operator is numerically singular so callers can fall back.
pub fn solve_hermitian_low_rank(a: &CMat, b: &ShiftedLowRank, c: &CMat) -> Result<CMat> {
    check_shapes(a, b.factor.nrows(), c)?;
    let eig = a.clone().symmetric_eigen();
    let u = &eig.eigenvectors;
    let gram = b.factor.adjoint() * &b.factor;
    let r = gram.nrows();
    // per-eigenvalue Woodbury cores (alpha I + F^H F)^{-1}
    let cores = eig
        .eigenvalues
        .iter()
        .map(|&lambda| {
            let alpha = lambda + b.shift;
            if !(alpha.is_finite() && alpha.abs() > f64::EPSILON * (b.shift.abs() + gram.norm())) {
                return Err(Error::Numerical("shifted operator is singular".into()));
            }
            let core = &gram + CMat::identity(r, r) * C64::from(alpha);
            let inv = core
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular Woodbury core".into()))?;
            Ok((alpha, inv))
        })
        .collect::<Result<Vec<_>>>()?;

    let solve_once = |rhs: &CMat| -> CMat {
        let rot = u.adjoint() * rhs;
        let mut y = CMat::zeros(rot.nrows(), rot.ncols());
        for (i, (alpha, inv)) in cores.iter().enumerate() {
            // row * (alpha I + F F^H)^{-1} = (row - row F core^{-1} F^H) / alpha
            let row = rot.row(i);
            let rf = row * &b.factor;
            let corr = (rf * inv) * b.factor.adjoint();
            y.row_mut(i).copy_from(&((row - corr) / C64::from(*alpha)));
        }
        u * y
    };

    let mut x = solve_once(c);
    let resid = c - (a * &x + b.right_apply(&x));
    x += solve_once(&resid);
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
        CMat::from_fn(r, c, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn hermitian_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMat {
        let g = random(rng, n, rank);
        &g * g.adjoint()
    }

    #[test]
    fn hessenberg_schur_matches_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5 {
            let a = random(&mut rng, 2, 2);
            let b = random(&mut rng, 8, 8) + CMat::identity(8, 8) * C64::from(3.0);
            let c = random(&mut rng, 2, 8);
            let x1 = solve_hessenberg_schur(&a, &b, &c).unwrap();
            let x2 = solve_kronecker(&a, &b, &c).unwrap();
            assert!((&x1 - &x2).norm() <= 1e-10 * x2.norm());
            assert!(relative_residual(&a, &b, &x1, &c) < 1e-12);
        }
    }

    #[test]
    fn low_rank_matches_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let a = hermitian_psd(&mut rng, 3, 3) * C64::from(1e-3);
            let b = ShiftedLowRank {
                shift: 1e-6,
                factor: random(&mut rng, 12, 3),
            };
            let c = random(&mut rng, 3, 12);
            let x1 = solve_hermitian_low_rank(&a, &b, &c).unwrap();
            let x2 = solve_kronecker(&a, &b.dense(), &c).unwrap();
            assert!((&x1 - &x2).norm() <= 1e-8 * x2.norm());
            assert!(relative_residual(&a, &b.dense(), &x1, &c) < 1e-10);
        }
    }

    #[test]
    fn scalar_left_operand_is_a_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = CMat::from_element(1, 1, C64::from(0.7));
        let b = hermitian_psd(&mut rng, 6, 6) + CMat::identity(6, 6) * C64::from(0.1);
        let c = random(&mut rng, 1, 6);
        let x = solve_hessenberg_schur(&a, &b, &c).unwrap();
        // x (0.7 I + B) = c  <=>  (0.7 I + B^T) x^T = c^T
        let m = CMat::identity(6, 6) * C64::from(0.7) + b.transpose();
        let direct = m.lu().solve(&c.transpose()).unwrap().transpose();
        assert!((x - direct).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        let a = CMat::zeros(2, 2);
        let b = CMat::identity(3, 3);
        assert!(solve_hessenberg_schur(&a, &b, &CMat::zeros(3, 3)).is_err());
        assert!(solve_kronecker(&a, &b, &CMat::zeros(2, 2)).is_err());
    }
}
