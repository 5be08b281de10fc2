//! Continuous Lyapunov solvers for `K X + X Kᵀ + D = 0`.
//!
//! Small systems go through the Kronecker vectorization
//! `(I⊗K + K⊗I) vec(X) = -vec(D)`; larger ones through a Bartels-Stewart
//! elimination on the real Schur form of `K`.

use nalgebra::DMatrix;

use super::GaussianError;

/// Above this dimension of `K`, switch from the Kronecker route to
/// Bartels-Stewart. The vectorized system grows as `dim²`, so sweeps over
/// long chains need the Schur route.
const KRONECKER_MAX_DIM: usize = 16;

pub fn solve_lyapunov(k: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>, GaussianError> {
    let n = k.nrows();
    assert_eq!(k.ncols(), n);
    assert_eq!(d.shape(), (n, n));
    if n <= KRONECKER_MAX_DIM {
        solve_kronecker(k, d)
    } else {
        solve_bartels_stewart(k, d)
    }
}

/// Direct solve of `(I⊗K + K⊗I) vec(X) = -vec(D)` (column stacking).
pub fn solve_kronecker(k: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>, GaussianError> {
    let n = k.nrows();
    let mut big = DMatrix::<f64>::zeros(n * n, n * n);
    // vec(K X) = (I ⊗ K) vec(X); vec(X Kᵀ) = (K ⊗ I) vec(X)
    for col in 0..n {
        for row in 0..n {
            let block = (col * n, row * n);
            for i in 0..n {
                big[(block.1 + i, block.0 + i)] += k[(row, col)];
            }
        }
    }
    for block in 0..n {
        for row in 0..n {
            for col in 0..n {
                big[(block * n + row, block * n + col)] += k[(row, col)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(n * n, d.iter().map(|&v| -v));
    let lu = big.lu();
    let x = lu.solve(&rhs).ok_or(GaussianError::SolverSingular)?;
    Ok(DMatrix::from_iterator(n, n, x.iter().copied()))
}

/// Bartels-Stewart: reduce `K = U T Uᵀ` (real Schur, `T` quasi upper
/// triangular), solve `T Y + Y Tᵀ = -Ũ D Ũᵀ` by block back-substitution,
/// transform back.
pub fn solve_bartels_stewart(
    k: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<DMatrix<f64>, GaussianError> {
    let schur = k.clone().try_schur(1e-14, 0).ok_or(GaussianError::SolverSingular)?;
    let (u, t) = schur.unpack();
    let c = -(&u.transpose() * d * &u);
    let y = solve_quasi_triangular(&t, &c)?;
    Ok(&u * y * u.transpose())
}

/// Solve `T Y + Y Tᵀ = C` for quasi-upper-triangular `T`.
fn solve_quasi_triangular(
    t: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, GaussianError> {
    let n = t.nrows();
    // Diagonal block boundaries: 2x2 blocks where the subdiagonal is nonzero.
    let tol = 1e-13 * t.amax().max(1.0);
    let mut starts: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < n {
        starts.push(i);
        if i + 1 < n && t[(i + 1, i)].abs() > tol {
            i += 2;
        } else {
            i += 1;
        }
    }
    let nb = starts.len();
    let block = |b: usize| -> (usize, usize) {
        let s = starts[b];
        let e = if b + 1 < nb { starts[b + 1] } else { n };
        (s, e - s)
    };

    let mut y = c.clone();
    // Column blocks from last to first: T Y_j + Y_j T_jjᵀ = C_j - Σ_{q>j} Y_q T_{j,q}ᵀ.
    for jb in (0..nb).rev() {
        let (js, jw) = block(jb);
        for qb in jb + 1..nb {
            let (qs, qw) = block(qb);
            // Y[:, j] -= Y[:, q] * T[j, q]ᵀ
            let yq = y.view((0, qs), (n, qw)).clone_owned();
            let tjq = t.view((js, qs), (jw, qw)).clone_owned();
            let update = yq * tjq.transpose();
            let mut yj = y.view_mut((0, js), (n, jw));
            yj -= update;
        }
        // Row blocks from last to first within this column block.
        for ib in (0..nb).rev() {
            let (is, iw) = block(ib);
            for qb in ib + 1..nb {
                let (qs, qw) = block(qb);
                let tiq = t.view((is, qs), (iw, qw)).clone_owned();
                let yqj = y.view((qs, js), (qw, jw)).clone_owned();
                let update = tiq * yqj;
                let mut yij = y.view_mut((is, js), (iw, jw));
                yij -= update;
            }
            // Solve T_ii X + X T_jjᵀ = Y_ij for the small block X (≤ 2x2 each side).
            let tii = t.view((is, is), (iw, iw)).clone_owned();
            let tjj = t.view((js, js), (jw, jw)).clone_owned();
            let rhs = y.view((is, js), (iw, jw)).clone_owned();
            let x = solve_small_sylvester(&tii, &tjj, &rhs)?;
            y.view_mut((is, js), (iw, jw)).copy_from(&x);
        }
    }
    Ok(y)
}

/// Solve `A X + X Bᵀ = C` with `A` (m×m) and `B` (p×p), m,p ≤ 2, via the
/// Kronecker form `(I⊗A + B⊗I) vec(X) = vec(C)`.
fn solve_small_sylvester(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>, GaussianError> {
    let (m, p) = (a.nrows(), b.nrows());
    let mut sys = DMatrix::<f64>::zeros(m * p, m * p);
    for j in 0..p {
        for i in 0..m {
            let row = j * m + i;
            for k in 0..m {
                sys[(row, j * m + k)] += a[(i, k)];
            }
            for k in 0..p {
                sys[(row, k * m + i)] += b[(j, k)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_iterator(m * p, c.iter().copied());
    let x = sys.lu().solve(&rhs).ok_or(GaussianError::SolverSingular)?;
    Ok(DMatrix::from_iterator(m, p, x.iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(k: &DMatrix<f64>, d: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
        (k * x + x * k.transpose() + d).amax()
    }

    fn random_hurwitz(n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        // Cheap deterministic pseudo-random fill.
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut k = DMatrix::from_fn(n, n, |_, _| next());
        for i in 0..n {
            k[(i, i)] -= 2.0 + n as f64 * 0.5; // diagonally dominant -> Hurwitz
        }
        let g = DMatrix::from_fn(n, n, |_, _| next());
        let d = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
        (k, d)
    }

    #[test]
    fn kronecker_and_bartels_stewart_agree() {
        for n in [3usize, 5, 8, 13] {
            for seed in 0..4u64 {
                let (k, d) = random_hurwitz(n, seed * 97 + n as u64);
                let xk = solve_kronecker(&k, &d).unwrap();
                let xbs = solve_bartels_stewart(&k, &d).unwrap();
                assert!(residual(&k, &d, &xk) < 1e-10 * d.amax());
                assert!(residual(&k, &d, &xbs) < 1e-10 * d.amax());
                assert!((&xk - &xbs).amax() < 1e-9 * xk.amax().max(1.0));
            }
        }
    }

    #[test]
    fn large_system_uses_schur_route() {
        let (k, d) = random_hurwitz(40, 7);
        let x = solve_lyapunov(&k, &d).unwrap();
        assert!(residual(&k, &d, &x) < 1e-9 * d.amax());
    }
}
