//! Dense statevector and unitary engine for small spin-1/2 registers.
//!
//! Basis convention: bit 1 is spin up (+1/2 eigenvalue of `S^z`), bit 0 is
//! spin down, and site 0 is the most significant bit of the basis index.
//! Spin operators are `S^a = sigma^a / 2`.
//!
//! Gate conventions:
//! - `R^a(phi) = exp(-i S^a phi) = cos(phi/2) - i sin(phi/2) sigma^a`
//! - `XX(phi)  = exp(-i S^x_i S^x_j phi) = cos(phi/4) - i sin(phi/4) sigma^x_i sigma^x_j`

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trotter::TimedCircuit;

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;

/// Largest register for which full matrices are built.
pub const DEFAULT_MAX_QUBITS: usize = 12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub(crate) fn site_mask(n_qubits: usize, site: usize) -> usize {
    1usize << (n_qubits - 1 - site)
}

/// Magnetization `m = sum_i <S^z_i>` of a computational basis index.
#[inline]
pub fn basis_magnetization(n_qubits: usize, index: usize) -> f64 {
    let up = index.count_ones() as f64;
    up - 0.5 * n_qubits as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != 1usize << n_qubits {
            return Err(Error::invalid(format!(
                "expected {} amplitudes for {} qubits, got {}",
                1usize << n_qubits,
                n_qubits,
                amplitudes.len()
            )));
        }
        Ok(Self {
            n_qubits,
            amplitudes,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.amplitudes[index].norm_sqr()
    }

    /// `|<self|other>|^2`
    pub fn overlap_sqr(&self, other: &StateVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<C64>()
            .norm_sqr()
    }
}

/// Prepare the computational basis state `|bits>`.
pub fn basis_state(n_qubits: usize, bits: &[u8]) -> Result<StateVector> {
    if bits.len() != n_qubits {
        return Err(Error::invalid(format!(
            "bit string has length {}, register has {} qubits",
            bits.len(),
            n_qubits
        )));
    }
    let mut index = 0usize;
    for (site, &b) in bits.iter().enumerate() {
        match b {
            0 => {}
            1 => index |= site_mask(n_qubits, site),
            other => return Err(Error::invalid(format!("bit value {other} is not 0 or 1"))),
        }
    }
    Ok(basis_state_index(n_qubits, index))
}

pub(crate) fn basis_state_index(n_qubits: usize, index: usize) -> StateVector {
    let mut amplitudes = vec![ZERO; 1usize << n_qubits];
    amplitudes[index] = ONE;
    StateVector {
        n_qubits,
        amplitudes,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    Xx,
}

impl GateKind {
    pub fn is_two_qubit(self) -> bool {
        matches!(self, GateKind::Xx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    pub sites: [usize; 2],
    pub angle: f64,
}

impl GateSpec {
    pub fn rx(site: usize, angle: f64) -> Self {
        Self::single(GateKind::Rx, site, angle)
    }

    pub fn ry(site: usize, angle: f64) -> Self {
        Self::single(GateKind::Ry, site, angle)
    }

    pub fn rz(site: usize, angle: f64) -> Self {
        Self::single(GateKind::Rz, site, angle)
    }

    pub fn xx(i: usize, j: usize, angle: f64) -> Self {
        Self {
            kind: GateKind::Xx,
            sites: [i, j],
            angle,
        }
    }

    fn single(kind: GateKind, site: usize, angle: f64) -> Self {
        Self {
            kind,
            sites: [site, site],
            angle,
        }
    }

    pub fn with_angle(self, angle: f64) -> Self {
        Self { angle, ..self }
    }

    /// The sites the gate acts on (one or two entries).
    pub fn targets(&self) -> &[usize] {
        if self.kind.is_two_qubit() {
            &self.sites
        } else {
            &self.sites[..1]
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        for &s in self.targets() {
            if s >= n_qubits {
                return Err(Error::invalid(format!(
                    "site {s} out of range for {n_qubits} qubits"
                )));
            }
        }
        if self.kind.is_two_qubit() && self.sites[0] == self.sites[1] {
            return Err(Error::invalid("XX gate needs two distinct sites"));
        }
        if !self.angle.is_finite() {
            return Err(Error::invalid("gate angle is not finite"));
        }
        Ok(())
    }
}

/// 2x2 kernel of a single-qubit rotation in the (down, up) basis, row-major.
fn rotation_kernel(kind: GateKind, angle: f64) -> [C64; 4] {
    let (s, c) = (0.5 * angle).sin_cos();
    match kind {
        GateKind::Rx => [
            C64::new(c, 0.0),
            C64::new(0.0, -s),
            C64::new(0.0, -s),
            C64::new(c, 0.0),
        ],
        GateKind::Ry => [
            C64::new(c, 0.0),
            C64::new(s, 0.0),
            C64::new(-s, 0.0),
            C64::new(c, 0.0),
        ],
        GateKind::Rz => [C64::new(c, s), ZERO, ZERO, C64::new(c, -s)],
        GateKind::Xx => unreachable!("XX has no single-qubit kernel"),
    }
}

/// Apply `gate` in place to a contiguous amplitude buffer of an `n_qubits` register.
pub(crate) fn apply_kernel(amps: &mut [C64], n_qubits: usize, gate: &GateSpec) {
    match gate.kind {
        GateKind::Xx => {
            let mi = site_mask(n_qubits, gate.sites[0]);
            let flip = mi | site_mask(n_qubits, gate.sites[1]);
            let (s, c) = (0.25 * gate.angle).sin_cos();
            let mis = C64::new(0.0, -s);
            for i in 0..amps.len() {
                if i & mi == 0 {
                    let k = i ^ flip;
                    let (a, b) = (amps[i], amps[k]);
                    amps[i] = a * c + b * mis;
                    amps[k] = b * c + a * mis;
                }
            }
        }
        kind => {
            let m = site_mask(n_qubits, gate.sites[0]);
            let [k00, k01, k10, k11] = rotation_kernel(kind, gate.angle);
            for i in 0..amps.len() {
                if i & m == 0 {
                    let j = i | m;
                    let (a0, a1) = (amps[i], amps[j]);
                    amps[i] = k00 * a0 + k01 * a1;
                    amps[j] = k10 * a0 + k11 * a1;
                }
            }
        }
    }
}

pub fn apply_gate(state: &StateVector, gate: &GateSpec) -> Result<StateVector> {
    gate.validate(state.n_qubits)?;
    let mut out = state.clone();
    apply_kernel(&mut out.amplitudes, out.n_qubits, gate);
    Ok(out)
}

/// `sum_i <S^z_i>`
pub fn expect_sz_tot(state: &StateVector) -> f64 {
    state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(idx, a)| a.norm_sqr() * basis_magnetization(state.n_qubits, idx))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

impl UnitaryMatrix {
    pub fn identity(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self {
            n_qubits,
            matrix: ComplexMatrix::identity(dim, dim),
        }
    }

    /// Wraps a matrix without checking unitarity.
    pub fn from_matrix(n_qubits: usize, matrix: ComplexMatrix) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, expected {dim}x{dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { n_qubits, matrix })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            n_qubits: self.n_qubits,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn compose(&self, rhs: &UnitaryMatrix) -> Self {
        Self {
            n_qubits: self.n_qubits,
            matrix: &self.matrix * &rhs.matrix,
        }
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// Largest elementwise deviation of `U^dagger U` from the identity.
    pub fn unitarity_defect(&self) -> f64 {
        let prod = self.matrix.adjoint() * &self.matrix;
        let dim = self.dim();
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in 0..dim {
                let target = if r == c { ONE } else { ZERO };
                worst = worst.max((prod[(r, c)] - target).norm());
            }
        }
        worst
    }

    /// Left-multiply by `gate` in place (`U <- G U`).
    pub fn apply_gate_left(&mut self, gate: &GateSpec) {
        let dim = self.dim();
        let n = self.n_qubits;
        for column in self.matrix.as_mut_slice().chunks_mut(dim) {
            apply_kernel(column, n, gate);
        }
    }

    pub fn apply_to(&self, state: &StateVector) -> StateVector {
        let v = nalgebra::DVector::from_column_slice(&state.amplitudes);
        let out = &self.matrix * v;
        StateVector {
            n_qubits: state.n_qubits,
            amplitudes: out.as_slice().to_vec(),
        }
    }

    /// Spectral norm of `self - other`.
    pub fn distance(&self, other: &UnitaryMatrix) -> f64 {
        spectral_norm(&(&self.matrix - &other.matrix))
    }

    /// `|Tr(self^dagger other) / dim|^2`
    pub fn process_fidelity(&self, other: &UnitaryMatrix) -> f64 {
        let dim = self.dim() as f64;
        let tr: C64 = self
            .matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        (tr / dim).norm_sqr().min(1.0)
    }
}

pub fn spectral_norm(m: &ComplexMatrix) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s))
}

fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

/// Full `2^n x 2^n` embedding of `gate`, built as a Kronecker product chain.
pub fn gate_matrix(gate: &GateSpec, n_qubits: usize) -> Result<UnitaryMatrix> {
    gate_matrix_with_limit(gate, n_qubits, DEFAULT_MAX_QUBITS)
}

pub fn gate_matrix_with_limit(
    gate: &GateSpec,
    n_qubits: usize,
    max_qubits: usize,
) -> Result<UnitaryMatrix> {
    if n_qubits > max_qubits {
        return Err(Error::ResourceLimit(format!(
            "{n_qubits} qubits exceeds the matrix limit of {max_qubits}"
        )));
    }
    gate.validate(n_qubits)?;
    let eye2 = ComplexMatrix::identity(2, 2);
    let chain = |factor: &dyn Fn(usize) -> Option<ComplexMatrix>| {
        (0..n_qubits).fold(ComplexMatrix::identity(1, 1), |acc, site| {
            kron(&acc, &factor(site).unwrap_or_else(|| eye2.clone()))
        })
    };
    let matrix = match gate.kind {
        GateKind::Xx => {
            let (s, c) = (0.25 * gate.angle).sin_cos();
            let [i, j] = gate.sites;
            let xx = chain(&|site| (site == i || site == j).then(pauli_x));
            let dim = 1usize << n_qubits;
            ComplexMatrix::identity(dim, dim) * C64::new(c, 0.0) + xx * C64::new(0.0, -s)
        }
        kind => {
            let k = ComplexMatrix::from_row_slice(2, 2, &rotation_kernel(kind, gate.angle));
            chain(&|site| (site == gate.sites[0]).then(|| k.clone()))
        }
    };
    UnitaryMatrix::from_matrix(n_qubits, matrix)
}

/// Ordered product of the circuit's gates; gate 0 acts first.
///
/// `realized_angles`, when given, must hold one angle per gate and replaces
/// the nominal angles.
pub fn circuit_unitary(
    circuit: &TimedCircuit,
    realized_angles: Option<&[f64]>,
) -> Result<UnitaryMatrix> {
    let n = circuit.n_qubits();
    if n > DEFAULT_MAX_QUBITS {
        return Err(Error::ResourceLimit(format!(
            "{n} qubits exceeds the matrix limit of {DEFAULT_MAX_QUBITS}"
        )));
    }
    let gates = circuit.gates();
    if let Some(angles) = realized_angles {
        if angles.len() != gates.len() {
            return Err(Error::invalid(format!(
                "{} realized angles supplied for {} gates",
                angles.len(),
                gates.len()
            )));
        }
    }
    let mut u = UnitaryMatrix::identity(n);
    for (m, g) in gates.iter().enumerate() {
        let spec = match realized_angles {
            Some(a) => g.spec.with_angle(a[m]),
            None => g.spec,
        };
        u.apply_gate_left(&spec);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn basis_state_bit_order() {
        let s = basis_state(4, &[1, 0, 1, 0]).unwrap();
        assert_eq!(s.probability(0b1010), 1.0);
        assert_abs_diff_eq!(expect_sz_tot(&s), 0.0);
        let s = basis_state(1, &[0]).unwrap();
        assert_eq!(s.amplitudes()[0], ONE);
        assert!(basis_state(2, &[1]).is_err());
    }

    #[test]
    fn sz_tot_eigenvalues() {
        assert_abs_diff_eq!(expect_sz_tot(&basis_state(4, &[1; 4]).unwrap()), 2.0);
        assert_abs_diff_eq!(expect_sz_tot(&basis_state(2, &[0, 0]).unwrap()), -1.0);
        assert_abs_diff_eq!(expect_sz_tot(&basis_state(2, &[1, 1]).unwrap()), 1.0);
    }

    #[test]
    fn xx_on_down_down() {
        let phi = 1.3;
        let s = apply_gate(&basis_state(2, &[0, 0]).unwrap(), &GateSpec::xx(0, 1, phi)).unwrap();
        let a = s.amplitudes();
        assert_abs_diff_eq!(a[0].re, (phi / 4.0).cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(a[3].im, -(phi / 4.0).sin(), epsilon = 1e-14);
        assert_abs_diff_eq!(a[1].norm() + a[2].norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rotation_about_z_only_phases_down() {
        let s = apply_gate(&basis_state(1, &[0]).unwrap(), &GateSpec::rz(0, 0.7)).unwrap();
        assert_abs_diff_eq!(s.probability(0), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rx_two_pi_is_minus_identity() {
        let u = gate_matrix(&GateSpec::rx(0, 2.0 * PI), 1).unwrap();
        let minus = -ComplexMatrix::identity(2, 2);
        assert!((u.matrix() - minus).norm() < 1e-14);
    }

    #[test]
    fn zero_angle_is_identity() {
        for g in [
            GateSpec::rx(1, 0.0),
            GateSpec::ry(0, 0.0),
            GateSpec::rz(2, 0.0),
            GateSpec::xx(0, 2, 0.0),
        ] {
            let u = gate_matrix(&g, 3).unwrap();
            assert!((u.matrix() - ComplexMatrix::identity(8, 8)).norm() < 1e-15);
        }
    }

    #[test]
    fn invalid_gates_rejected() {
        assert!(GateSpec::xx(1, 1, 0.3).validate(3).is_err());
        assert!(GateSpec::rx(3, 0.3).validate(3).is_err());
        assert!(matches!(
            gate_matrix(&GateSpec::rx(0, 1.0), 13),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn spin_algebra_of_kernels() {
        // R^z(pi/2)^dagger S^x R^z(pi/2) must equal -S^y for the basis changes
        // used by the Trotter step to be consistent with [S^x, S^y] = i S^z.
        let rz = gate_matrix(&GateSpec::rz(0, PI / 2.0), 1).unwrap();
        let sx = ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]) * C64::new(0.5, 0.0);
        let sy = ComplexMatrix::from_row_slice(2, 2, &[ZERO, C64::i(), -C64::i(), ZERO]) * C64::new(0.5, 0.0);
        let conj = rz.matrix().adjoint() * sx * rz.matrix();
        assert!((conj + sy).norm() < 1e-14);
    }
}
