//! Hermitian eigen-decomposition by cyclic complex Jacobi sweeps.

use super::matrix::{ComplexMatrix, C64, ZERO};
use crate::error::{shape_err, Error, Result};

const OFF_DIAG_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues (ascending) and the unitary whose columns are the matching
/// eigenvectors.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Diagonalise a Hermitian matrix. The strictly lower triangle is assumed to be
/// the conjugate of the upper one; small asymmetries are averaged away first.
pub fn eigh(m: &ComplexMatrix) -> Result<HermitianEigen> {
    if !m.is_square() {
        return shape_err(format!("eigh of non-square {}x{}", m.rows(), m.cols()));
    }
    let n = m.rows();
    let mut a = ComplexMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)].conj()));
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius_norm().max(1.0);

    let mut converged = off_diagonal_norm(&a) <= OFF_DIAG_TOL * scale;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
        sweeps += 1;
        converged = off_diagonal_norm(&a) <= OFF_DIAG_TOL * scale;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn eigvalsh(m: &ComplexMatrix) -> Result<Vec<f64>> {
    eigh(m).map(|e| e.values)
}

// One complex Jacobi rotation zeroing a[p][q]. The rotation is a phase fix that
// makes a[p][q] real, followed by a real symmetric Jacobi rotation.
fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let g = apq.norm();
    if g < 1e-300 {
        return;
    }
    let phase = apq / g; // e^{iφ}
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    let theta = (aqq - app) / (2.0 * g);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // J = diag(1, e^{-iφ}) · [[c, s], [-s, c]]
    let j_pp = C64::new(c, 0.0);
    let j_pq = C64::new(s, 0.0);
    let j_qp = -s * phase.conj();
    let j_qq = c * phase.conj();

    let n = a.rows();
    // A ← A J (columns p, q)
    for r in 0..n {
        let arp = a[(r, p)];
        let arq = a[(r, q)];
        a[(r, p)] = arp * j_pp + arq * j_qp;
        a[(r, q)] = arp * j_pq + arq * j_qq;
    }
    // A ← J† A (rows p, q)
    for col in 0..n {
        let apc = a[(p, col)];
        let aqc = a[(q, col)];
        a[(p, col)] = j_pp.conj() * apc + j_qp.conj() * aqc;
        a[(q, col)] = j_pq.conj() * apc + j_qq.conj() * aqc;
    }
    a[(p, q)] = ZERO;
    a[(q, p)] = ZERO;
    a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
    // V ← V J
    for r in 0..n {
        let vrp = v[(r, p)];
        let vrq = v[(r, q)];
        v[(r, p)] = vrp * j_pp + vrq * j_qp;
        v[(r, q)] = vrp * j_pq + vrq * j_qq;
    }
}

/// `exp(i·s·H)` for Hermitian `H`.
pub fn expm_i_hermitian(h: &ComplexMatrix, s: f64) -> Result<ComplexMatrix> {
    let e = eigh(h)?;
    let n = h.rows();
    let phases: Vec<C64> = e
        .values
        .iter()
        .map(|&l| C64::from_polar(1.0, s * l))
        .collect();
    let mut scaled = e.vectors.clone();
    for r in 0..n {
        for c in 0..n {
            scaled[(r, c)] *= phases[c];
        }
    }
    Ok(&scaled * &e.vectors.dagger())
}

/// Reconstruct `V diag(λ) V†`; used to check decompositions.
pub fn recompose(e: &HermitianEigen) -> ComplexMatrix {
    let n = e.values.len();
    let d: Vec<C64> = e.values.iter().map(|&l| C64::new(l, 0.0)).collect();
    let mut scaled = e.vectors.clone();
    for r in 0..n {
        for c in 0..n {
            scaled[(r, c)] *= d[c];
        }
    }
    &scaled * &e.vectors.dagger()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::matrix::gates;

    #[test]
    fn pauli_spectra() {
        for p in [gates::pauli_x(), gates::pauli_y(), gates::pauli_z()] {
            let vals = eigvalsh(&p).unwrap();
            assert!((vals[0] + 1.0).abs() < 1e-13);
            assert!((vals[1] - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        // [[a, b], [b*, d]] has eigenvalues (a+d)/2 ± sqrt(((a-d)/2)^2 + |b|^2)
        let (a, d) = (0.3, -1.2);
        let b = C64::new(0.4, -0.7);
        let m = ComplexMatrix::from_vec(2, 2, vec![C64::new(a, 0.0), b, b.conj(), C64::new(d, 0.0)])
            .unwrap();
        let mid = (a + d) / 2.0;
        let rad = (((a - d) / 2.0).powi(2) + b.norm_sqr()).sqrt();
        let vals = eigvalsh(&m).unwrap();
        assert!((vals[0] - (mid - rad)).abs() < 1e-13);
        assert!((vals[1] - (mid + rad)).abs() < 1e-13);
    }

    #[test]
    fn recomposes_random_hermitian() {
        let mut rng = crate::rng::SeededRng::new(11);
        for n in [1, 3, 8, 16] {
            let raw = ComplexMatrix::from_fn(n, n, |_, _| C64::new(rng.normal(), rng.normal()));
            let h = &raw + &raw.dagger();
            let e = eigh(&h).unwrap();
            assert!(e.vectors.is_unitary(1e-11));
            assert!(recompose(&e).max_abs_diff(&h) < 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn exponential_is_unitary_and_matches_pauli_identity() {
        // exp(i s X) = cos s I + i sin s X
        let s = 0.83;
        let u = expm_i_hermitian(&gates::pauli_x(), s).unwrap();
        let expect = ComplexMatrix::from_vec(
            2,
            2,
            vec![
                C64::new(s.cos(), 0.0),
                C64::new(0.0, s.sin()),
                C64::new(0.0, s.sin()),
                C64::new(s.cos(), 0.0),
            ],
        )
        .unwrap();
        assert!(u.max_abs_diff(&expect) < 1e-13);
    }

    #[test]
    fn rejects_non_square() {
        assert!(eigh(&ComplexMatrix::zeros(2, 3)).is_err());
    }
}
