//! Heisenberg spin Hamiltonian and its exact propagator.
//!
//! `H = sum_{i<j} J_ij S_i . S_j + sum_i h_i S^x_i` with `hbar = 1`; couplings
//! and fields are angular frequencies in rad/ms and times are in ms.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinsim::{site_mask, ComplexMatrix, StateVector, UnitaryMatrix, C64, DEFAULT_MAX_QUBITS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinHamiltonian {
    #[serde(rename = "n")]
    n_spins: usize,
    #[serde(rename = "J")]
    couplings: Vec<Vec<f64>>,
    #[serde(rename = "h")]
    fields: Vec<f64>,
}

impl SpinHamiltonian {
    pub fn new(couplings: Vec<Vec<f64>>, fields: Vec<f64>) -> Result<Self> {
        let h = Self {
            n_spins: fields.len(),
            couplings,
            fields,
        };
        h.validate()?;
        Ok(h)
    }

    /// Fields only, no couplings.
    pub fn fields_only(fields: Vec<f64>) -> Self {
        let n = fields.len();
        Self {
            n_spins: n,
            couplings: vec![vec![0.0; n]; n],
            fields,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_spins;
        if n == 0 {
            return Err(Error::invalid("Hamiltonian needs at least one spin"));
        }
        if n > DEFAULT_MAX_QUBITS {
            return Err(Error::ResourceLimit(format!(
                "{n} spins exceeds the matrix limit of {DEFAULT_MAX_QUBITS}"
            )));
        }
        if self.fields.len() != n {
            return Err(Error::invalid(format!(
                "h has length {}, expected {n}",
                self.fields.len()
            )));
        }
        if self.couplings.len() != n || self.couplings.iter().any(|row| row.len() != n) {
            return Err(Error::invalid(format!("J must be a {n}x{n} matrix")));
        }
        for i in 0..n {
            if self.couplings[i][i] != 0.0 {
                return Err(Error::invalid(format!("J[{i}][{i}] must be zero")));
            }
            for j in 0..i {
                if self.couplings[i][j] != self.couplings[j][i] {
                    return Err(Error::invalid(format!("J is not symmetric at ({i}, {j})")));
                }
            }
        }
        if self
            .couplings
            .iter()
            .flatten()
            .chain(&self.fields)
            .any(|x| !x.is_finite())
        {
            return Err(Error::invalid("non-finite Hamiltonian parameter"));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let h: Self = serde_json::from_str(s)?;
        h.validate()?;
        Ok(h)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i][j]
    }

    pub fn couplings(&self) -> &[Vec<f64>] {
        &self.couplings
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    /// Unique pairs `(i, j)`, `i < j`, with a nonzero coupling, in row-major order.
    pub fn coupled_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_spins;
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.couplings[i][j] != 0.0)
            .collect()
    }

    /// Flattened parameter vector: nonzero couplings (in `coupled_pairs` order)
    /// followed by every field.
    pub fn parameters(&self) -> Vec<f64> {
        self.coupled_pairs()
            .into_iter()
            .map(|(i, j)| self.couplings[i][j])
            .chain(self.fields.iter().copied())
            .collect()
    }

    /// Inverse of [`parameters`](Self::parameters) for a fixed coupling graph.
    pub fn with_parameters(&self, params: &[f64]) -> Result<Self> {
        let pairs = self.coupled_pairs();
        if params.len() != pairs.len() + self.n_spins {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                pairs.len() + self.n_spins,
                params.len()
            )));
        }
        let mut out = self.clone();
        for (k, &(i, j)) in pairs.iter().enumerate() {
            out.couplings[i][j] = params[k];
            out.couplings[j][i] = params[k];
        }
        out.fields.copy_from_slice(&params[pairs.len()..]);
        Ok(out)
    }
}

fn real_matrix(h: &SpinHamiltonian) -> DMatrix<f64> {
    let n = h.n_spins;
    let dim = 1usize << n;
    let mut m = DMatrix::<f64>::zeros(dim, dim);
    for (i, j) in h.coupled_pairs() {
        let jij = h.couplings[i][j];
        let (mi, mj) = (site_mask(n, i), site_mask(n, j));
        for idx in 0..dim {
            let aligned = ((idx & mi) == 0) == ((idx & mj) == 0);
            if aligned {
                // S^z S^z only.
                m[(idx, idx)] += 0.25 * jij;
            } else {
                m[(idx, idx)] -= 0.25 * jij;
                // S^x S^x + S^y S^y = (S^+ S^- + S^- S^+) / 2 swaps antiparallel spins.
                m[(idx ^ mi ^ mj, idx)] += 0.5 * jij;
            }
        }
    }
    for (i, &hi) in h.fields.iter().enumerate() {
        if hi == 0.0 {
            continue;
        }
        let mi = site_mask(n, i);
        for idx in 0..dim {
            m[(idx ^ mi, idx)] += 0.5 * hi;
        }
    }
    m
}

/// Dense Hermitian matrix of `h`.
pub fn hamiltonian_matrix(h: &SpinHamiltonian) -> ComplexMatrix {
    real_matrix(h).map(|x| C64::new(x, 0.0))
}

/// Cached eigendecomposition, reusable across many evolution times.
#[derive(Clone, Debug)]
pub struct ExactPropagator {
    n_spins: usize,
    energies: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl ExactPropagator {
    pub fn new(h: &SpinHamiltonian) -> Self {
        // H is real symmetric in the S^z basis, so a real eigensolver suffices.
        let eig = SymmetricEigen::new(real_matrix(h));
        Self {
            n_spins: h.n_spins,
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// `exp(-i H t)`
    pub fn unitary(&self, t: f64) -> UnitaryMatrix {
        let v = self.vectors.map(|x| C64::new(x, 0.0));
        let mut scaled = v.clone();
        for (k, &e) in self.energies.iter().enumerate() {
            let phase = C64::from_polar(1.0, -e * t);
            scaled.column_mut(k).iter_mut().for_each(|x| *x *= phase);
        }
        let u = scaled * v.transpose();
        UnitaryMatrix::from_matrix(self.n_spins, u).expect("dimension is consistent")
    }
}

pub fn exact_unitary(h: &SpinHamiltonian, t: f64) -> Result<UnitaryMatrix> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("evolution time must be >= 0, got {t}")));
    }
    Ok(ExactPropagator::new(h).unitary(t))
}

pub fn exact_evolve(h: &SpinHamiltonian, t: f64, state: &StateVector) -> Result<StateVector> {
    if state.n_qubits() != h.n_spins() {
        return Err(Error::invalid("state and Hamiltonian sizes differ"));
    }
    Ok(exact_unitary(h, t)?.apply_to(state))
}

/// `<psi|H|psi>`
pub fn energy(h: &SpinHamiltonian, state: &StateVector) -> f64 {
    let m = hamiltonian_matrix(h);
    let v = nalgebra::DVector::from_column_slice(state.amplitudes());
    (v.adjoint() * (m * &v))[(0, 0)].re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinsim::{basis_state, expect_sz_tot};
    use approx::assert_abs_diff_eq;

    fn pair(j: f64) -> SpinHamiltonian {
        SpinHamiltonian::new(vec![vec![0.0, j], vec![j, 0.0]], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn single_spin_is_half_sigma_x() {
        let m = hamiltonian_matrix(&SpinHamiltonian::fields_only(vec![3.0]));
        assert_abs_diff_eq!(m[(0, 1)].re, 1.5);
        assert_abs_diff_eq!(m[(1, 0)].re, 1.5);
        assert_abs_diff_eq!(m[(0, 0)].norm() + m[(1, 1)].norm(), 0.0);
    }

    #[test]
    fn singlet_triplet_spectrum() {
        let j = 0.8;
        let mut e = ExactPropagator::new(&pair(j)).energies().to_vec();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_abs_diff_eq!(e[0], -0.75 * j, epsilon = 1e-12);
        for &x in &e[1..] {
            assert_abs_diff_eq!(x, 0.25 * j, epsilon = 1e-12);
        }
    }

    #[test]
    fn hermitian() {
        let h = SpinHamiltonian::new(
            vec![
                vec![0.0, 0.3, -0.7],
                vec![0.3, 0.0, 0.2],
                vec![-0.7, 0.2, 0.0],
            ],
            vec![1.0, -2.0, 0.5],
        )
        .unwrap();
        let m = hamiltonian_matrix(&h);
        assert_eq!(m, m.adjoint());
    }

    #[test]
    fn larmor_rotation_of_down_spin() {
        let h0 = 2.3;
        let h = SpinHamiltonian::fields_only(vec![h0]);
        for &t in &[0.0, 0.4, 1.7] {
            let s = exact_evolve(&h, t, &basis_state(1, &[0]).unwrap()).unwrap();
            assert_abs_diff_eq!(expect_sz_tot(&s), -0.5 * (h0 * t).cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn up_down_return_probability_oscillates_at_j() {
        // |ud> = (|T0> + |S>)/sqrt(2); the singlet-triplet splitting is J.
        let j = 1.1;
        let psi0 = basis_state(2, &[1, 0]).unwrap();
        for &t in &[0.3, 1.0, 2.5] {
            let s = exact_evolve(&pair(j), t, &psi0).unwrap();
            assert_abs_diff_eq!(s.probability(0b10), (0.5 * j * t).cos().powi(2), epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_time_and_group_property() {
        let h = pair(0.6);
        let u0 = exact_unitary(&h, 0.0).unwrap();
        assert!(u0.distance(&UnitaryMatrix::identity(2)) < 1e-12);
        let p = ExactPropagator::new(&h);
        let split = p.unitary(0.7).compose(&p.unitary(1.1));
        assert!(split.distance(&p.unitary(1.8)) < 1e-9);
        assert!(exact_unitary(&h, -1.0).is_err());
    }

    #[test]
    fn json_schema_round_trip() {
        let h = SpinHamiltonian::from_json_str(r#"{"n": 2, "J": [[0, 1.5], [1.5, 0]], "h": [0.1, -0.2]}"#)
            .unwrap();
        assert_eq!(h.coupled_pairs(), vec![(0, 1)]);
        assert_eq!(h.parameters(), vec![1.5, 0.1, -0.2]);
        let back = h.with_parameters(&h.parameters()).unwrap();
        assert_eq!(back, h);
        assert!(SpinHamiltonian::from_json_str(r#"{"n": 2, "J": [[0, 1], [2, 0]], "h": [0, 0]}"#).is_err());
        assert!(SpinHamiltonian::from_json_str(r#"{"n": 2, "J": [[0, 1], [1, 0]], "h": [0]}"#).is_err());
    }
}
