//! The parameterised unitary `V(α, t) = W(θ) · D(γ, t) · W(θ)†`.
//!
//! `W` is an `L`-layer circuit. Each layer applies `Rz(θᶻ)·Ry(θʸ)·Rx(θˣ)` to every
//! qubit, then a ring of CNOTs with control `j` and target `(j + l) mod n` for
//! `j = 0..n` (layer `l` counted from 1). A CNOT whose control equals its target
//! (only possible when `l` is a multiple of `n`) is skipped.
//!
//! `D` is diagonal with entries `exp(i·t·φ(b))`, where the phase function is a
//! truncated Walsh series
//!
//! ```text
//! φ(b) = Σ_{S : |S| ≤ h} γ_S · (−1)^{popcount(S ∧ b)}
//! ```
//!
//! Subsets `S` are bitmasks in the same bit convention as basis indices (qubit `q`
//! is bit `n − 1 − q`) and `γ` is stored in ascending bitmask order, the empty
//! subset (global phase) first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{gates, ComplexMatrix, C64};
use crate::rng::SeededRng;

/// Trainable parameters `α = {θ, γ}` with their layer/locality structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzParams {
    pub num_qubits: usize,
    pub layers: usize,
    pub locality: usize,
    /// `θ[(l·n + q)·3 + a]` with `a` = 0, 1, 2 for the X, Y, Z angle.
    pub theta: Vec<f64>,
    /// One coefficient per [`walsh_subsets`] entry.
    pub gamma: Vec<f64>,
}

/// Subsets of `n` qubits with at most `h` members, ascending by bitmask.
pub fn walsh_subsets(num_qubits: usize, locality: usize) -> Vec<usize> {
    (0..1usize << num_qubits)
        .filter(|m| m.count_ones() as usize <= locality)
        .collect()
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

impl AnsatzParams {
    pub fn theta_len(num_qubits: usize, layers: usize) -> usize {
        3 * num_qubits * layers
    }

    pub fn gamma_len(num_qubits: usize, locality: usize) -> usize {
        (0..=locality).map(|w| binomial(num_qubits, w)).sum()
    }

    pub fn zeros(num_qubits: usize, layers: usize, locality: usize) -> Self {
        Self {
            num_qubits,
            layers,
            locality,
            theta: vec![0.0; Self::theta_len(num_qubits, layers)],
            gamma: vec![0.0; Self::gamma_len(num_qubits, locality)],
        }
    }

    /// Every angle uniform in `[−scale, scale)`.
    pub fn random(
        num_qubits: usize,
        layers: usize,
        locality: usize,
        scale: f64,
        rng: &mut SeededRng,
    ) -> Self {
        let mut p = Self::zeros(num_qubits, layers, locality);
        for x in p.theta.iter_mut().chain(p.gamma.iter_mut()) {
            *x = rng.uniform_range(-scale, scale);
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_qubits == 0 {
            return Err(Error::InvalidParams("ansatz needs at least one qubit".into()));
        }
        if self.theta.len() != Self::theta_len(self.num_qubits, self.layers) {
            return Err(Error::InvalidParams(format!(
                "theta has {} entries, expected {}",
                self.theta.len(),
                Self::theta_len(self.num_qubits, self.layers)
            )));
        }
        if self.gamma.len() != Self::gamma_len(self.num_qubits, self.locality) {
            return Err(Error::InvalidParams(format!(
                "gamma has {} entries, expected {}",
                self.gamma.len(),
                Self::gamma_len(self.num_qubits, self.locality)
            )));
        }
        if self.theta.iter().chain(&self.gamma).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("non-finite ansatz parameter".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.theta.len() + self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat `[θ…, γ…]` vector for the optimisers.
    pub fn to_flat(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.gamma).copied().collect()
    }

    /// Same structure, values from a flat `[θ…, γ…]` vector.
    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), self.len(), "flat parameter length");
        let (theta, gamma) = flat.split_at(self.theta.len());
        Self {
            num_qubits: self.num_qubits,
            layers: self.layers,
            locality: self.locality,
            theta: theta.to_vec(),
            gamma: gamma.to_vec(),
        }
    }

    pub fn rotation(&self, layer: usize, qubit: usize) -> (f64, f64, f64) {
        let base = (layer * self.num_qubits + qubit) * 3;
        (self.theta[base], self.theta[base + 1], self.theta[base + 2])
    }
}

/// `W(θ)`.
pub fn build_w(params: &AnsatzParams) -> ComplexMatrix {
    let n = params.num_qubits;
    let mut w = ComplexMatrix::identity(1 << n);
    for layer in 0..params.layers {
        for q in 0..n {
            let (tx, ty, tz) = params.rotation(layer, q);
            w.apply_1q_left(&gates::rx(tx), q, n);
            w.apply_1q_left(&gates::ry(ty), q, n);
            w.apply_1q_left(&gates::rz(tz), q, n);
        }
        let distance = layer + 1;
        for control in 0..n {
            let target = (control + distance) % n;
            if target != control {
                w.apply_cnot_left(control, target, n);
            }
        }
    }
    w
}

/// In-place fast Walsh–Hadamard transform (unnormalised).
pub fn fwht(values: &mut [f64]) {
    let n = values.len();
    assert!(n.is_power_of_two(), "fwht length must be a power of two");
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (values[i], values[i + h]);
                values[i] = a + b;
                values[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// `φ(b)` for every basis state `b`, the spectrum of the learned generator.
///
/// With `V = exp(−iHt)` this is `H = −Σ_b φ(b) |w_b⟩⟨w_b|`, `w_b = W|b⟩`.
pub fn hamiltonian_eigenvalues(params: &AnsatzParams) -> Vec<f64> {
    let mut coeffs = vec![0.0; 1 << params.num_qubits];
    for (mask, &g) in walsh_subsets(params.num_qubits, params.locality)
        .into_iter()
        .zip(&params.gamma)
    {
        coeffs[mask] = g;
    }
    fwht(&mut coeffs);
    coeffs
}

/// Diagonal of `D(γ, t)`.
pub fn diagonal_phases(params: &AnsatzParams, t: f64) -> Vec<C64> {
    hamiltonian_eigenvalues(params)
        .into_iter()
        .map(|phi| C64::from_polar(1.0, t * phi))
        .collect()
}

/// `D(γ, t)` as a dense diagonal matrix.
pub fn build_d(params: &AnsatzParams, t: f64) -> ComplexMatrix {
    ComplexMatrix::diagonal(&diagonal_phases(params, t))
}

/// `W · diag(phases) · W†`.
pub fn conjugate_diagonal(w: &ComplexMatrix, phases: &[C64]) -> ComplexMatrix {
    let n = w.rows();
    let mut scaled = w.clone();
    for r in 0..n {
        for (c, &p) in phases.iter().enumerate() {
            scaled[(r, c)] *= p;
        }
    }
    &scaled * &w.dagger()
}

/// `V(α, t) = W D(γ, t) W†`.
pub fn build_v(params: &AnsatzParams, t: f64) -> ComplexMatrix {
    conjugate_diagonal(&build_w(params), &diagonal_phases(params, t))
}

/// `W` and the spectrum `φ` computed once; evaluates `V(α, t)` and its action on
/// basis states for many times `t` without rebuilding the circuit.
#[derive(Debug, Clone)]
pub struct Propagator {
    w: ComplexMatrix,
    phases: Vec<f64>,
}

impl Propagator {
    pub fn new(params: &AnsatzParams) -> Self {
        Self {
            w: build_w(params),
            phases: hamiltonian_eigenvalues(params),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.rows()
    }

    pub fn w(&self) -> &ComplexMatrix {
        &self.w
    }

    pub fn unitary(&self, t: f64) -> ComplexMatrix {
        let d: Vec<C64> = self.phases.iter().map(|&p| C64::from_polar(1.0, t * p)).collect();
        conjugate_diagonal(&self.w, &d)
    }

    /// `V(α, t)|b⟩`, computed as `W · D · (W†|b⟩)` in O(N²).
    pub fn evolve_basis(&self, b: usize, t: f64) -> Vec<C64> {
        let n = self.dim();
        // W†|b⟩ is the conjugated row b of W
        let rotated: Vec<C64> = (0..n)
            .map(|c| self.w[(b, c)].conj() * C64::from_polar(1.0, t * self.phases[c]))
            .collect();
        self.w.matvec(&rotated).expect("square propagator")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{matrix_power, ComplexMatrix, ONE, ZERO};
    use std::f64::consts::PI;

    #[test]
    fn parameter_counts() {
        for n in 1..=5 {
            for l in 1..=3 {
                for h in 1..=3 {
                    let p = AnsatzParams::zeros(n, l, h);
                    assert_eq!(p.theta.len(), 3 * n * l);
                    let expected: usize = (0..=h.min(n)).map(|w| binomial(n, w)).sum();
                    assert_eq!(p.gamma.len(), expected);
                    assert_eq!(walsh_subsets(n, h).len(), expected);
                    assert!(p.validate().is_ok());
                }
            }
        }
    }

    #[test]
    fn validation_catches_bad_lengths() {
        let mut p = AnsatzParams::zeros(2, 1, 1);
        p.gamma.push(0.0);
        assert!(p.validate().is_err());
        let mut p = AnsatzParams::zeros(2, 1, 1);
        p.theta[0] = f64::NAN;
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_angles_give_cnot_ring() {
        let p = AnsatzParams::zeros(2, 1, 1);
        let w = build_w(&p);
        // CNOT(0→1) first, then CNOT(1→0)
        let expect = &gates::cnot(1, 0) * &gates::cnot(0, 1);
        assert!(w.max_abs_diff(&expect) < 1e-15);
        assert!(w.is_unitary(1e-14));
    }

    #[test]
    fn single_qubit_rx_pi_flips() {
        let mut p = AnsatzParams::zeros(1, 1, 1);
        p.theta[0] = PI;
        let w = build_w(&p);
        // Rx(π) = −iX
        assert!((w[(1, 0)].norm_sqr() - 1.0).abs() < 1e-15);
        assert!((w[(1, 0)] - C64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn second_layer_uses_distance_two() {
        // With all angles zero, W on 4 qubits is ring(2)·ring(1). Check against
        // explicit CNOT products built from 2-qubit embeddings.
        let p = AnsatzParams::zeros(4, 2, 1);
        let w = build_w(&p);
        let mut expect = ComplexMatrix::identity(16);
        for (c, t) in [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3), (2, 0), (3, 1)] {
            let mut g = ComplexMatrix::identity(16);
            g.apply_cnot_left(c, t, 4);
            expect = &g * &expect;
        }
        assert!(w.max_abs_diff(&expect) < 1e-15);
        // |1000> -> layer 1: CNOT(0,1) -> 1100, CNOT(1,2) -> 1110, CNOT(2,3) -> 1111,
        // CNOT(3,0) -> 0111; layer 2: CNOT(0,2) untouched, CNOT(1,3) -> 0110, CNOT(2,0) -> 1110,
        // CNOT(3,1) untouched (q3=0) -> 1110
        assert!((w[(0b1110, 0b1000)] - ONE).norm() < 1e-15);
    }

    #[test]
    fn diagonal_two_term_walsh() {
        let mut p = AnsatzParams::zeros(1, 1, 1);
        p.gamma = vec![0.3, 0.8];
        let d = build_d(&p, 1.0);
        assert!((d[(0, 0)] - C64::from_polar(1.0, 1.1)).norm() < 1e-15);
        assert!((d[(1, 1)] - C64::from_polar(1.0, -0.5)).norm() < 1e-15);
        assert_eq!(d[(0, 1)], ZERO);
        assert_eq!(hamiltonian_eigenvalues(&p), vec![1.1, -0.5]);
    }

    #[test]
    fn zero_gamma_is_identity() {
        let p = AnsatzParams::zeros(3, 2, 2);
        assert_eq!(build_d(&p, 2.5), ComplexMatrix::identity(8));
        assert!(hamiltonian_eigenvalues(&p).iter().all(|&x| x == 0.0));
    }

    // Brute-force Walsh expansion: φ(b) = Σ_S γ_S (−1)^{|S∧b|}
    fn walsh_oracle(p: &AnsatzParams) -> Vec<f64> {
        let subsets = walsh_subsets(p.num_qubits, p.locality);
        (0..1usize << p.num_qubits)
            .map(|b| {
                subsets
                    .iter()
                    .zip(&p.gamma)
                    .map(|(&s, &g)| if (s & b).count_ones() % 2 == 0 { g } else { -g })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn fwht_matches_walsh_sum() {
        let mut rng = SeededRng::new(1);
        for n in 1..=5 {
            for h in 0..=n {
                let p = AnsatzParams::random(n, 1, h, 2.0, &mut rng);
                let fast = hamiltonian_eigenvalues(&p);
                let slow = walsh_oracle(&p);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn diagonal_is_additive_in_time() {
        let mut rng = SeededRng::new(2);
        let p = AnsatzParams::random(3, 1, 2, 1.0, &mut rng);
        let (t, s) = (0.7, -1.9);
        let prod = &build_d(&p, t) * &build_d(&p, s);
        assert!(prod.max_abs_diff(&build_d(&p, t + s)) < 1e-13);
    }

    #[test]
    fn v_at_zero_is_identity_and_powers_agree() {
        let mut rng = SeededRng::new(3);
        let p = AnsatzParams::random(3, 2, 2, 1.5, &mut rng);
        assert!(build_v(&p, 0.0).max_abs_diff(&ComplexMatrix::identity(8)) < 1e-13);
        let v1 = build_v(&p, 1.0);
        for k in [2u32, 5, 10] {
            let vk = build_v(&p, k as f64);
            assert!(vk.max_abs_diff(&matrix_power(&v1, k).unwrap()) < 1e-9);
        }
    }

    #[test]
    fn spectrum_independent_of_theta() {
        let mut rng = SeededRng::new(4);
        let mut p = AnsatzParams::random(2, 2, 2, 1.0, &mut rng);
        let before = hamiltonian_eigenvalues(&p);
        for x in p.theta.iter_mut() {
            *x = rng.uniform_range(-3.0, 3.0);
        }
        assert_eq!(before, hamiltonian_eigenvalues(&p));
    }

    #[test]
    fn propagator_matches_dense() {
        let mut rng = SeededRng::new(5);
        let p = AnsatzParams::random(3, 2, 2, 1.0, &mut rng);
        let prop = Propagator::new(&p);
        let v = build_v(&p, 2.3);
        assert!(prop.unitary(2.3).max_abs_diff(&v) < 1e-13);
        for b in 0..8 {
            let col = prop.evolve_basis(b, 2.3);
            for (r, c) in col.iter().enumerate() {
                assert!((c - v[(r, b)]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn rotation_order_is_rz_ry_rx() {
        let mut p = AnsatzParams::zeros(1, 1, 1);
        p.theta = vec![0.4, -1.1, 0.9];
        let w = build_w(&p);
        let expect = &(&gates::to_matrix(&gates::rz(0.9)) * &gates::to_matrix(&gates::ry(-1.1)))
            * &gates::to_matrix(&gates::rx(0.4));
        assert!(w.max_abs_diff(&expect) < 1e-15);
    }
}
