//! First-order Trotter circuits built from XX and single-qubit rotations, with
//! a wall-clock start time attached to every gate.

use std::f64::consts::FRAC_PI_2;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{ExactPropagator, SpinHamiltonian};
use crate::spinsim::{circuit_unitary, GateKind, GateSpec};

pub const DEFAULT_GATE_DURATION_MS: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulePolicy {
    /// Every gate occupies its own slot.
    #[default]
    Serial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateTiming {
    /// Duration of one gate, ms.
    pub gate_duration: f64,
    /// Start time of the first gate, ms.
    #[serde(default)]
    pub start_offset: f64,
    #[serde(default)]
    pub policy: SchedulePolicy,
    /// Gate kinds that pick up motional angle errors.
    pub noisy_kinds: Vec<GateKind>,
}

impl Default for GateTiming {
    fn default() -> Self {
        Self {
            gate_duration: DEFAULT_GATE_DURATION_MS,
            start_offset: 0.0,
            policy: SchedulePolicy::Serial,
            noisy_kinds: vec![GateKind::Xx],
        }
    }
}

impl GateTiming {
    pub fn with_single_qubit_noise(mut self) -> Self {
        for k in [GateKind::Rx, GateKind::Ry, GateKind::Rz] {
            if !self.noisy_kinds.contains(&k) {
                self.noisy_kinds.push(k);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gate_duration > 0.0) || !self.gate_duration.is_finite() {
            return Err(Error::invalid("gate duration must be positive"));
        }
        if !(self.start_offset >= 0.0) {
            return Err(Error::invalid("start offset must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedGate {
    /// Gate with its nominal (requested) angle.
    pub spec: GateSpec,
    /// ms
    pub start_time: f64,
    pub noisy: bool,
}

impl TimedGate {
    pub fn nominal_angle(&self) -> f64 {
        self.spec.angle
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimedCircuit {
    n_qubits: usize,
    gate_duration: f64,
    gates: Vec<TimedGate>,
}

impl TimedCircuit {
    pub fn empty(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            gate_duration: DEFAULT_GATE_DURATION_MS,
            gates: Vec::new(),
        }
    }

    /// Builds a circuit from explicit gates, checking time ordering.
    pub fn from_gates(n_qubits: usize, gate_duration: f64, gates: Vec<TimedGate>) -> Result<Self> {
        for g in &gates {
            g.spec.validate(n_qubits)?;
        }
        if gates.windows(2).any(|w| w[1].start_time < w[0].start_time) {
            return Err(Error::invalid("gate start times must be non-decreasing"));
        }
        Ok(Self {
            n_qubits,
            gate_duration,
            gates,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[TimedGate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn gate_duration(&self) -> f64 {
        self.gate_duration
    }

    /// End time of the last gate, ms; zero for an empty circuit.
    pub fn total_duration(&self) -> f64 {
        self.gates
            .last()
            .map_or(0.0, |g| g.start_time + self.gate_duration)
    }

    pub fn start_times(&self) -> Vec<f64> {
        self.gates.iter().map(|g| g.start_time).collect()
    }

    pub fn nominal_angles(&self) -> Vec<f64> {
        self.gates.iter().map(|g| g.spec.angle).collect()
    }

    /// Same schedule with new nominal angles.
    pub fn with_nominal_angles(&self, angles: &[f64]) -> Result<Self> {
        if angles.len() != self.gates.len() {
            return Err(Error::invalid("one angle per gate required"));
        }
        let mut out = self.clone();
        for (g, &a) in out.gates.iter_mut().zip(angles) {
            g.spec.angle = a;
        }
        Ok(out)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (index, g) in self.gates.iter().enumerate() {
            let rec = GateRecord {
                index,
                kind: g.spec.kind,
                sites: g.spec.targets().to_vec(),
                angle: g.spec.angle,
                start_ms: g.start_time,
                duration_ms: self.gate_duration,
                noisy: g.noisy,
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(n_qubits: usize, r: R) -> Result<Self> {
        let mut gates = Vec::new();
        let mut duration = DEFAULT_GATE_DURATION_MS;
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: GateRecord = serde_json::from_str(&line)?;
            duration = rec.duration_ms;
            let spec = match (rec.kind, rec.sites.as_slice()) {
                (GateKind::Xx, &[i, j]) => GateSpec::xx(i, j, rec.angle),
                (GateKind::Rx, &[s]) => GateSpec::rx(s, rec.angle),
                (GateKind::Ry, &[s]) => GateSpec::ry(s, rec.angle),
                (GateKind::Rz, &[s]) => GateSpec::rz(s, rec.angle),
                (kind, sites) => {
                    return Err(Error::invalid(format!(
                        "gate {} of kind {kind:?} has {} sites",
                        rec.index,
                        sites.len()
                    )))
                }
            };
            gates.push(TimedGate {
                spec,
                start_time: rec.start_ms,
                noisy: rec.noisy,
            });
        }
        Self::from_gates(n_qubits, duration, gates)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GateRecord {
    index: usize,
    kind: GateKind,
    sites: Vec<usize>,
    angle: f64,
    start_ms: f64,
    duration_ms: f64,
    noisy: bool,
}

/// `r` repetitions of the Trotter step, gates listed in application order.
///
/// One step applies, in order: XX layer, `R^z(pi/2)`, XX layer, `R^z(-pi/2)`,
/// `R^y(pi/2)`, XX layer, `R^z(-h_i dt)`, `R^y(-pi/2)`. The conjugated XX
/// layers realise the YY and ZZ terms and the conjugated `R^z` realises the
/// transverse field, so one step equals
/// `exp(-i dt H_x) exp(-i dt H_zz) exp(-i dt H_yy) exp(-i dt H_xx)` with
/// XX angle `J_ij dt`.
pub fn build_trotter_circuit(
    h: &SpinHamiltonian,
    t: f64,
    steps: usize,
    timing: &GateTiming,
) -> Result<TimedCircuit> {
    if steps == 0 {
        return Err(Error::invalid("number of Trotter steps must be >= 1"));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("evolution time must be >= 0, got {t}")));
    }
    timing.validate()?;
    let n = h.n_spins();
    let dt = t / steps as f64;
    let pairs = h.coupled_pairs();

    let mut specs = Vec::with_capacity(steps * (3 * pairs.len() + 5 * n));
    let xx_layer = |specs: &mut Vec<GateSpec>| {
        specs.extend(pairs.iter().map(|&(i, j)| GateSpec::xx(i, j, h.coupling(i, j) * dt)));
    };
    for _ in 0..steps {
        xx_layer(&mut specs);
        specs.extend((0..n).map(|i| GateSpec::rz(i, FRAC_PI_2)));
        xx_layer(&mut specs);
        specs.extend((0..n).map(|i| GateSpec::rz(i, -FRAC_PI_2)));
        specs.extend((0..n).map(|i| GateSpec::ry(i, FRAC_PI_2)));
        xx_layer(&mut specs);
        specs.extend((0..n).map(|i| GateSpec::rz(i, -h.fields()[i] * dt)));
        specs.extend((0..n).map(|i| GateSpec::ry(i, -FRAC_PI_2)));
    }

    let gates = specs
        .into_iter()
        .enumerate()
        .map(|(m, spec)| TimedGate {
            start_time: timing.start_offset + m as f64 * timing.gate_duration,
            noisy: timing.noisy_kinds.contains(&spec.kind),
            spec,
        })
        .collect();
    Ok(TimedCircuit {
        n_qubits: n,
        gate_duration: timing.gate_duration,
        gates,
    })
}

/// Spectral-norm distance between the noiseless Trotter circuit and `exp(-iHt)`.
pub fn trotter_error(h: &SpinHamiltonian, t: f64, steps: usize) -> Result<f64> {
    let circuit = build_trotter_circuit(h, t, steps, &GateTiming::default())?;
    let u1 = circuit_unitary(&circuit, None)?;
    Ok(u1.distance(&ExactPropagator::new(h).unitary(t)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateCounts {
    pub total: usize,
    pub two_qubit: usize,
    pub single_qubit: usize,
}

pub fn gate_counts(circuit: &TimedCircuit) -> GateCounts {
    let two_qubit = circuit
        .gates
        .iter()
        .filter(|g| g.spec.kind.is_two_qubit())
        .count();
    GateCounts {
        total: circuit.gates.len(),
        two_qubit,
        single_qubit: circuit.gates.len() - two_qubit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn all_to_all(n: usize) -> SpinHamiltonian {
        let couplings = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 0.1 * (i + j) as f64 }).collect())
            .collect();
        SpinHamiltonian::new(couplings, (0..n).map(|i| i as f64 - 1.0).collect()).unwrap()
    }

    #[test]
    fn gate_count_two_spins() {
        let c = build_trotter_circuit(&all_to_all(2), 1.0, 1, &GateTiming::default()).unwrap();
        assert_eq!(
            gate_counts(&c),
            GateCounts {
                total: 13,
                two_qubit: 3,
                single_qubit: 10
            }
        );
    }

    #[test]
    fn gate_count_four_spins_scales_with_steps() {
        let h = all_to_all(4);
        let c1 = build_trotter_circuit(&h, 1.0, 1, &GateTiming::default()).unwrap();
        assert_eq!(
            gate_counts(&c1),
            GateCounts {
                total: 38,
                two_qubit: 18,
                single_qubit: 20
            }
        );
        let c7 = build_trotter_circuit(&h, 1.0, 7, &GateTiming::default()).unwrap();
        assert_eq!(gate_counts(&c7).total, 7 * 38);
        assert_eq!(gate_counts(&TimedCircuit::empty(3)), GateCounts::default());
    }

    #[test]
    fn layer_order_two_spins() {
        let h = SpinHamiltonian::new(vec![vec![0.0, 2.0], vec![2.0, 0.0]], vec![1.0, 3.0]).unwrap();
        let c = build_trotter_circuit(&h, 0.5, 1, &GateTiming::default()).unwrap();
        let p = FRAC_PI_2;
        let template = [
            GateSpec::xx(0, 1, 1.0),
            GateSpec::rz(0, p),
            GateSpec::rz(1, p),
            GateSpec::xx(0, 1, 1.0),
            GateSpec::rz(0, -p),
            GateSpec::rz(1, -p),
            GateSpec::ry(0, p),
            GateSpec::ry(1, p),
            GateSpec::xx(0, 1, 1.0),
            GateSpec::rz(0, -0.5),
            GateSpec::rz(1, -1.5),
            GateSpec::ry(0, -p),
            GateSpec::ry(1, -p),
        ];
        let got: Vec<GateSpec> = c.gates().iter().map(|g| g.spec).collect();
        assert_eq!(got, template);
    }

    #[test]
    fn serial_schedule_and_noisy_flags() {
        let timing = GateTiming {
            gate_duration: 0.02,
            start_offset: 1.0,
            ..GateTiming::default()
        };
        let c = build_trotter_circuit(&all_to_all(3), 1.0, 2, &timing).unwrap();
        for (m, g) in c.gates().iter().enumerate() {
            assert_abs_diff_eq!(g.start_time, 1.0 + 0.02 * m as f64, epsilon = 1e-12);
            assert_eq!(g.noisy, g.spec.kind == GateKind::Xx);
        }
        assert_abs_diff_eq!(c.total_duration(), 1.0 + 0.02 * c.len() as f64, epsilon = 1e-12);
        let c = build_trotter_circuit(&all_to_all(3), 1.0, 1, &timing.with_single_qubit_noise()).unwrap();
        assert!(c.gates().iter().all(|g| g.noisy));
    }

    #[test]
    fn zero_steps_rejected() {
        assert!(build_trotter_circuit(&all_to_all(2), 1.0, 0, &GateTiming::default()).is_err());
    }

    #[test]
    fn commuting_fields_have_no_trotter_error() {
        let h = SpinHamiltonian::fields_only(vec![1.3, -0.4, 2.2]);
        for r in [1, 3, 8] {
            assert!(trotter_error(&h, 1.7, r).unwrap() < 1e-9);
        }
        assert!(trotter_error(&all_to_all(3), 0.0, 4).unwrap() < 1e-12);
    }

    #[test]
    fn jsonl_round_trip() {
        let c = build_trotter_circuit(&all_to_all(3), 0.8, 2, &GateTiming::default()).unwrap();
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), c.len());
        let back = TimedCircuit::read_jsonl(3, buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }
}
