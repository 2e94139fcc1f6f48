use super::eig::eigvalsh;
use super::layout::SubspaceLayout;
use super::matrix::{ComplexMatrix, C64, ONE, ZERO};
use crate::error::{shape_err, Error, Result};

const NORM_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-9;

/// Normalised pure state on `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let n = amplitudes.len();
        if n == 0 || !n.is_power_of_two() {
            return shape_err(format!("state length {n} is not a power of two"));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParams(format!("state norm² {norm} ≠ 1")));
        }
        Ok(Self {
            num_qubits: n.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::OutOfRange(format!("basis index {index} ≥ {dim}")));
        }
        let mut amplitudes = vec![ZERO; dim];
        amplitudes[index] = ONE;
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn evolve(&self, u: &ComplexMatrix) -> Result<Self> {
        Ok(Self {
            num_qubits: self.num_qubits,
            amplitudes: u.matvec(&self.amplitudes)?,
        })
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            num_qubits: self.num_qubits,
            matrix: ComplexMatrix::outer(&self.amplitudes, &self.amplitudes),
        }
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix on `num_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    num_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates hermiticity, trace and positivity.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let rho = Self::new_unchecked(matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Only checks the shape; used for intermediate results of linear maps
    /// applied to non-physical inputs (matrix units in a Choi construction).
    pub fn new_unchecked(matrix: ComplexMatrix) -> Result<Self> {
        let n = matrix.rows();
        if !matrix.is_square() || n == 0 || !n.is_power_of_two() {
            return shape_err(format!(
                "density matrix must be square with power-of-two size, got {}x{}",
                matrix.rows(),
                matrix.cols()
            ));
        }
        Ok(Self {
            num_qubits: n.trailing_zeros() as usize,
            matrix,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.matrix.is_hermitian(NORM_TOL) {
            return Err(Error::InvalidParams("density matrix is not Hermitian".into()));
        }
        let tr = self.matrix.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::InvalidParams(format!("density matrix trace {tr} ≠ 1")));
        }
        let min = self.min_eigenvalue()?;
        if min < -PSD_TOL {
            return Err(Error::InvalidParams(format!(
                "density matrix has eigenvalue {min} < 0"
            )));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(eigvalsh(&self.matrix)?[0])
    }

    pub fn basis_projector(num_qubits: usize, index: usize) -> Result<Self> {
        Ok(StateVector::basis(num_qubits, index)?.to_density())
    }

    pub fn maximally_mixed(num_qubits: usize) -> Self {
        let dim = 1usize << num_qubits;
        Self {
            num_qubits,
            matrix: ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, u: &ComplexMatrix) -> Result<Self> {
        let left = u.matmul(&self.matrix)?;
        Ok(Self {
            num_qubits: self.num_qubits,
            matrix: left.matmul(&u.dagger())?,
        })
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self {
            num_qubits: self.num_qubits + other.num_qubits,
            matrix: super::matrix::kron(&self.matrix, &other.matrix),
        }
    }
}

/// Trace out everything except qubits `[start, start+len)` of an `num_qubits`
/// register (qubit 0 most significant).
pub fn partial_trace_range(
    m: &ComplexMatrix,
    num_qubits: usize,
    start: usize,
    len: usize,
) -> Result<ComplexMatrix> {
    if m.rows() != 1 << num_qubits || !m.is_square() {
        return shape_err(format!(
            "{}x{} matrix for a {num_qubits}-qubit register",
            m.rows(),
            m.cols()
        ));
    }
    if start + len > num_qubits || len == 0 {
        return shape_err(format!(
            "qubit range [{start}, {}) outside {num_qubits} qubits",
            start + len
        ));
    }
    let low_bits = num_qubits - start - len;
    let high_count = 1usize << start;
    let low_count = 1usize << low_bits;
    let keep_dim = 1usize << len;
    let mut out = ComplexMatrix::zeros(keep_dim, keep_dim);
    for a in 0..keep_dim {
        for b in 0..keep_dim {
            let mut acc = ZERO;
            for hi in 0..high_count {
                for lo in 0..low_count {
                    let r = (hi << (num_qubits - start)) | (a << low_bits) | lo;
                    let c = (hi << (num_qubits - start)) | (b << low_bits) | lo;
                    acc += m[(r, c)];
                }
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Reduced density matrix on system dimension `keep`.
pub fn partial_trace(
    rho: &DensityMatrix,
    layout: &SubspaceLayout,
    keep: usize,
) -> Result<DensityMatrix> {
    layout.check_dim(keep)?;
    if rho.num_qubits() != layout.total_qubits() {
        return shape_err(format!(
            "{}-qubit state for a {}-qubit layout",
            rho.num_qubits(),
            layout.total_qubits()
        ));
    }
    let (start, len) = layout.qubit_range(keep);
    DensityMatrix::new_unchecked(partial_trace_range(
        rho.matrix(),
        layout.total_qubits(),
        start,
        len,
    )?)
}

/// `½ Tr|ρ₁ − ρ₂|`, from the eigenvalues of the Hermitian difference.
pub fn trace_distance(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    if r1.dim() != r2.dim() {
        return shape_err(format!("trace distance between {} and {} dims", r1.dim(), r2.dim()));
    }
    let diff = r1.matrix() - r2.matrix();
    let eig = eigvalsh(&diff)?;
    let d = 0.5 * eig.iter().map(|l| l.abs()).sum::<f64>();
    Ok(d.clamp(0.0, 1.0))
}

/// `Tr(|j⟩⟨j| ρ)`, clamped to [0, 1].
pub fn project_prob(rho: &DensityMatrix, j: usize) -> Result<f64> {
    if j >= rho.dim() {
        return Err(Error::OutOfRange(format!("basis index {j} ≥ {}", rho.dim())));
    }
    Ok(clamp_prob(rho.matrix()[(j, j)].re))
}

pub(crate) fn clamp_prob(p: f64) -> f64 {
    if p < 0.0 && p > -1e-12 {
        0.0
    } else if p > 1.0 && p < 1.0 + 1e-12 {
        1.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

/// Haar-random unitary via Gram–Schmidt on a complex Gaussian matrix.
pub fn random_unitary(dim: usize, rng: &mut crate::rng::SeededRng) -> ComplexMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v: Vec<C64> = (0..dim).map(|_| C64::new(rng.normal(), rng.normal())).collect();
        for u in &cols {
            let proj: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= proj * ui;
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    ComplexMatrix::from_fn(dim, dim, |i, j| cols[j][i])
}

/// Random density matrix `G G† / Tr(G G†)` with complex Gaussian `G`.
pub fn random_density(num_qubits: usize, rng: &mut crate::rng::SeededRng) -> DensityMatrix {
    let dim = 1usize << num_qubits;
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| C64::new(rng.normal(), rng.normal()));
    let m = &g * &g.dagger();
    let tr = m.trace().re;
    DensityMatrix {
        num_qubits,
        matrix: m.scale(C64::new(1.0 / tr, 0.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn bell() -> DensityMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::new(vec![C64::new(s, 0.0), ZERO, ZERO, C64::new(s, 0.0)])
            .unwrap()
            .to_density()
    }

    #[test]
    fn trace_out_product_state() {
        let layout = SubspaceLayout::new(vec![1], 1).unwrap();
        let rho = DensityMatrix::basis_projector(2, 0).unwrap();
        let red = partial_trace(&rho, &layout, 0).unwrap();
        assert_eq!(red, DensityMatrix::basis_projector(1, 0).unwrap());
    }

    #[test]
    fn trace_out_bell_is_mixed() {
        let layout = SubspaceLayout::new(vec![1], 1).unwrap();
        let red = partial_trace(&bell(), &layout, 0).unwrap();
        assert!(red.matrix().max_abs_diff(DensityMatrix::maximally_mixed(1).matrix()) < 1e-15);
    }

    // Index-loop oracle written against the tensor definition: ρ_A[a,b] =
    // Σ_e ρ[(a,e),(b,e)] for a bipartition A|E with A the leading qubits.
    #[test]
    fn middle_subsystem_trace() {
        let mut rng = SeededRng::new(5);
        let a = random_density(1, &mut rng);
        let b = random_density(2, &mut rng);
        let c = random_density(1, &mut rng);
        let rho = a.tensor(&b).tensor(&c);
        let layout = SubspaceLayout::new(vec![1, 2], 1).unwrap();
        let red = partial_trace(&rho, &layout, 1).unwrap();
        assert!(red.matrix().max_abs_diff(b.matrix()) < 1e-14);
        let red = partial_trace(&rho, &layout, 0).unwrap();
        assert!(red.matrix().max_abs_diff(a.matrix()) < 1e-14);
    }

    #[test]
    fn partial_trace_shape_error() {
        let layout = SubspaceLayout::new(vec![1], 2).unwrap();
        let rho = DensityMatrix::basis_projector(2, 0).unwrap();
        assert!(matches!(partial_trace(&rho, &layout, 0), Err(Error::Shape(_))));
        assert!(partial_trace(&rho, &layout, 3).is_err());
    }

    #[test]
    fn trace_distance_cases() {
        let zero = DensityMatrix::basis_projector(1, 0).unwrap();
        let one = DensityMatrix::basis_projector(1, 1).unwrap();
        let mixed = DensityMatrix::maximally_mixed(1);
        assert!(trace_distance(&zero, &zero).unwrap().abs() < 1e-15);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-14);
        // |0><0| - I/2 = diag(1/2, -1/2): eigenvalues ±1/2, so D = 1/2
        assert!((trace_distance(&zero, &mixed).unwrap() - 0.5).abs() < 1e-14);
        assert!(trace_distance(&zero, &DensityMatrix::maximally_mixed(2)).is_err());
    }

    #[test]
    fn projection_probabilities() {
        let zero = DensityMatrix::basis_projector(1, 0).unwrap();
        assert_eq!(project_prob(&zero, 0).unwrap(), 1.0);
        assert_eq!(project_prob(&DensityMatrix::maximally_mixed(1), 1).unwrap(), 0.5);
        assert!(matches!(project_prob(&zero, 2), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn validation_rejects_bad_states() {
        let m = ComplexMatrix::from_real_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(DensityMatrix::new(m).is_err());
        let m = ComplexMatrix::from_real_rows(&[vec![1.5, 0.0], vec![0.0, -0.5]]);
        assert!(DensityMatrix::new(m).is_err());
        assert!(DensityMatrix::new(bell().into_matrix()).is_ok());
        assert!(StateVector::new(vec![ONE, ONE]).is_err());
        assert!(StateVector::new(vec![ONE, ZERO, ZERO]).is_err());
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = SeededRng::new(9);
        for dim in [2, 4, 8] {
            assert!(random_unitary(dim, &mut rng).is_unitary(1e-12));
        }
    }
}
