//! Feedforward correction of gate angles under the motional noise law.
//!
//! For the XX gate, whose generator has eigenvalues `+-1/4`, the fidelity
//! between imparted angle `phi` and target `phi_p` is `cos^2((phi - phi_p) / 4)`. Averaging it over the angle law gives
//! `1/2 + 1/2 (C cos(phi_p/2) + S sin(phi_p/2))` with `C + iS = E[exp(i phi/2)]`,
//! and both `C` and `S` have closed forms in `1F2`. A single-qubit rotation
//! (generator eigenvalues `+-1/2`) behaves as an XX gate at twice the angle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motional_noise::hyp1f2;
use crate::trotter::{TimedCircuit, TimedGate};

pub const DEFAULT_PHI_CAP: f64 = 4.0 * PI;
/// Pitch of the coarse scan over input angles, rad.
pub const SCAN_STEP: f64 = 1e-3;
const REFINE_TOL: f64 = 1e-6;
const TIE_TOL: f64 = 1e-13;

/// Target fidelity of a gate that imparted `phi` instead of `phi_p`.
pub fn gate_fidelity(phi: f64, phi_p: f64) -> f64 {
    (0.25 * (phi - phi_p)).cos().powi(2)
}

/// `(E[cos(phi/2)], E[sin(phi/2)])` for requested `phi_in` at latent `lambda`.
pub fn half_angle_phasor(phi_in: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    if lambda == 0.0 || phi_in == 0.0 {
        let (s, c) = (0.5 * phi_in).sin_cos();
        return Ok((c, s));
    }
    let z = -phi_in * phi_in / 16.0;
    let a = 1.0 + 0.5 / lambda;
    let b = 0.5 + 0.5 / lambda;
    let f_cos = hyp1f2(a, 1.5, a + 1.0, z)?;
    let f_sin = hyp1f2(b, 1.5, b + 1.0, z)?;
    let c = (0.5 * phi_in).cos() + phi_in * phi_in * lambda / (4.0 + 8.0 * lambda) * f_cos;
    let s = phi_in / (2.0 + 2.0 * lambda) * f_sin;
    Ok((c, s))
}

#[inline]
fn fidelity_from_phasor((c, s): (f64, f64), phi_p: f64) -> f64 {
    let (sp, cp) = (0.5 * phi_p).sin_cos();
    0.5 + 0.5 * (c * cp + s * sp)
}

/// Fidelity averaged over the imparted angle when `phi_in` is requested.
pub fn avg_gate_fidelity(phi_in: f64, phi_p: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(gate_fidelity(phi_in, phi_p));
    }
    Ok(fidelity_from_phasor(half_angle_phasor(phi_in, lambda)?, phi_p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlQuery {
    /// Desired output angle, rad.
    pub phi_p: f64,
    pub lambda: f64,
    /// Largest input angle the laser can deliver, rad.
    pub phi_cap: f64,
}

impl ControlQuery {
    pub fn new(phi_p: f64, lambda: f64) -> Self {
        Self {
            phi_p,
            lambda,
            phi_cap: DEFAULT_PHI_CAP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_cap > 0.0) || !self.phi_cap.is_finite() {
            return Err(Error::invalid("phi_cap must be positive"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite and >= 0"));
        }
        if !self.phi_p.is_finite() {
            return Err(Error::invalid("phi_p must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalInput {
    pub phi_in: f64,
    pub fidelity: f64,
}

fn scan_grid(phi_cap: f64) -> Vec<f64> {
    let n = (phi_cap / SCAN_STEP).ceil().max(1.0) as usize;
    (0..=n).map(|k| phi_cap * k as f64 / n as f64).collect()
}

fn better(a: OptimalInput, b: OptimalInput) -> OptimalInput {
    if b.fidelity > a.fidelity + TIE_TOL
        || ((b.fidelity - a.fidelity).abs() <= TIE_TOL && b.phi_in < a.phi_in)
    {
        b
    } else {
        a
    }
}

fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > REFINE_TOL {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Scan + golden-section refinement given precomputed phasors on `grid`.
fn optimize_on_grid(
    grid: &[f64],
    phasors: &[(f64, f64)],
    phi_p: f64,
    lambda: f64,
) -> Result<OptimalInput> {
    let mut k_best = 0;
    let mut f_best = f64::NEG_INFINITY;
    for (k, &ph) in phasors.iter().enumerate() {
        let f = fidelity_from_phasor(ph, phi_p);
        if f > f_best + TIE_TOL {
            k_best = k;
            f_best = f;
        }
    }
    let mut best = OptimalInput {
        phi_in: grid[k_best],
        fidelity: f_best,
    };
    if grid.len() < 2 {
        return Ok(best);
    }
    let lo = grid[k_best.saturating_sub(1)];
    let hi = grid[(k_best + 1).min(grid.len() - 1)];
    let eval = |x: f64| avg_gate_fidelity(x, phi_p, lambda).unwrap_or(f64::NEG_INFINITY);
    let x = golden_max(&eval, lo, hi);
    for cand in [x, lo, hi] {
        best = better(
            best,
            OptimalInput {
                phi_in: cand,
                fidelity: eval(cand),
            },
        );
    }
    Ok(best)
}

/// Input angle in `[0, phi_cap]` maximizing the averaged fidelity.
///
/// The landscape is multimodal (optima can sit on either boundary), so the
/// whole interval is scanned at [`SCAN_STEP`] before local refinement. Ties go
/// to the smaller angle. Negative targets are solved by mirror symmetry and
/// return a non-positive input angle.
pub fn optimal_input_angle(q: &ControlQuery) -> Result<OptimalInput> {
    q.validate()?;
    if q.phi_p < 0.0 {
        let m = optimal_input_angle(&ControlQuery {
            phi_p: -q.phi_p,
            ..*q
        })?;
        return Ok(OptimalInput {
            phi_in: -m.phi_in,
            ..m
        });
    }
    let grid = scan_grid(q.phi_cap);
    let phasors = grid
        .iter()
        .map(|&x| half_angle_phasor(x, q.lambda))
        .collect::<Result<Vec<_>>>()?;
    optimize_on_grid(&grid, &phasors, q.phi_p, q.lambda)
}

/// Pitch of the memo table in both `phi_p` (rad) and `lambda`.
pub const TABLE_PITCH: f64 = 1e-2;

/// Optimal input angles on a regular `(phi_p, lambda)` grid, queried by
/// bilinear interpolation. Read-only once built.
#[derive(Clone, Debug)]
pub struct FeedforwardTable {
    phi_cap: f64,
    n_phi: usize,
    n_lambda: usize,
    /// Row-major `[lambda][phi_p]`.
    optimal: Vec<f64>,
}

impl FeedforwardTable {
    /// Covers `phi_p` in `[0, phi_p_max]` and `lambda` in `[0, lambda_max]`.
    pub fn build(phi_p_max: f64, lambda_max: f64, phi_cap: f64) -> Result<Self> {
        use rayon::prelude::*;

        if !(phi_p_max >= 0.0 && lambda_max >= 0.0) {
            return Err(Error::invalid("table bounds must be >= 0"));
        }
        ControlQuery {
            phi_p: 0.0,
            lambda: 0.0,
            phi_cap,
        }
        .validate()?;
        let n_phi = (phi_p_max / TABLE_PITCH).ceil() as usize + 1;
        let n_lambda = (lambda_max / TABLE_PITCH).ceil() as usize + 1;
        let grid = scan_grid(phi_cap);
        let rows: Vec<Vec<f64>> = (0..n_lambda)
            .into_par_iter()
            .map(|li| -> Result<Vec<f64>> {
                let lambda = li as f64 * TABLE_PITCH;
                let phasors = grid
                    .iter()
                    .map(|&x| half_angle_phasor(x, lambda))
                    .collect::<Result<Vec<_>>>()?;
                (0..n_phi)
                    .map(|pi| {
                        let phi_p = pi as f64 * TABLE_PITCH;
                        optimize_on_grid(&grid, &phasors, phi_p, lambda).map(|o| o.phi_in)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            phi_cap,
            n_phi,
            n_lambda,
            optimal: rows.into_iter().flatten().collect(),
        })
    }

    pub fn phi_p_max(&self) -> f64 {
        (self.n_phi - 1) as f64 * TABLE_PITCH
    }

    pub fn lambda_max(&self) -> f64 {
        (self.n_lambda - 1) as f64 * TABLE_PITCH
    }

    pub fn phi_cap(&self) -> f64 {
        self.phi_cap
    }

    fn node(&self, pi: usize, li: usize) -> f64 {
        self.optimal[li * self.n_phi + pi]
    }

    /// Interpolated optimum, checked against the surrounding nodes and the
    /// uncorrected angle; the best of these under the exact landscape wins.
    /// Queries outside the table fall back to a direct solve.
    pub fn lookup(&self, phi_p: f64, lambda: f64) -> Result<OptimalInput> {
        if phi_p < 0.0 {
            let m = self.lookup(-phi_p, lambda)?;
            return Ok(OptimalInput {
                phi_in: -m.phi_in,
                ..m
            });
        }
        if lambda == 0.0 {
            return Ok(OptimalInput {
                phi_in: phi_p.min(self.phi_cap),
                fidelity: gate_fidelity(phi_p.min(self.phi_cap), phi_p),
            });
        }
        if phi_p > self.phi_p_max() || lambda > self.lambda_max() || !(lambda >= 0.0) {
            return optimal_input_angle(&ControlQuery {
                phi_p,
                lambda,
                phi_cap: self.phi_cap,
            });
        }
        let xp = phi_p / TABLE_PITCH;
        let xl = lambda / TABLE_PITCH;
        let p0 = (xp.floor() as usize).min(self.n_phi.saturating_sub(2));
        let l0 = (xl.floor() as usize).min(self.n_lambda.saturating_sub(2));
        let p1 = (p0 + 1).min(self.n_phi - 1);
        let l1 = (l0 + 1).min(self.n_lambda - 1);
        let (fp, fl) = ((xp - p0 as f64).clamp(0.0, 1.0), (xl - l0 as f64).clamp(0.0, 1.0));
        let corners = [
            self.node(p0, l0),
            self.node(p1, l0),
            self.node(p0, l1),
            self.node(p1, l1),
        ];
        let interp = (1.0 - fl) * ((1.0 - fp) * corners[0] + fp * corners[1])
            + fl * ((1.0 - fp) * corners[2] + fp * corners[3]);
        let mut best = OptimalInput {
            phi_in: interp,
            fidelity: avg_gate_fidelity(interp, phi_p, lambda)?,
        };
        for cand in corners.into_iter().chain([phi_p.min(self.phi_cap)]) {
            best = better(
                best,
                OptimalInput {
                    phi_in: cand,
                    fidelity: avg_gate_fidelity(cand, phi_p, lambda)?,
                },
            );
        }
        Ok(best)
    }

    /// Table large enough for every noisy gate of `circuit` at heating rate `c2`.
    pub fn for_circuit(circuit: &TimedCircuit, c2: f64, phi_cap: f64) -> Result<Self> {
        let (phi_max, lambda_max) = circuit_extent(circuit, c2);
        Self::build(phi_max, lambda_max, phi_cap)
    }
}

/// Multiplier mapping a gate's angle onto the XX-equivalent angle.
fn angle_scale(g: &TimedGate) -> f64 {
    if g.spec.kind.is_two_qubit() {
        1.0
    } else {
        2.0
    }
}

/// Largest XX-equivalent `|phi_p|` and `lambda` over the noisy gates of a circuit.
pub fn circuit_extent(circuit: &TimedCircuit, c2: f64) -> (f64, f64) {
    circuit
        .gates()
        .iter()
        .filter(|g| g.noisy)
        .fold((0.0f64, 0.0f64), |(p, l), g| {
            (p.max(angle_scale(g) * g.spec.angle.abs()), l.max(c2 * g.start_time))
        })
}

/// Replace every noisy gate's nominal angle by its optimal input angle.
pub fn correct_circuit(circuit: &TimedCircuit, c2: f64) -> Result<TimedCircuit> {
    if c2 == 0.0 {
        return Ok(circuit.clone());
    }
    let table = FeedforwardTable::for_circuit(circuit, c2, DEFAULT_PHI_CAP)?;
    correct_circuit_with(circuit, c2, &table)
}

/// [`correct_circuit`] against a prebuilt table.
pub fn correct_circuit_with(
    circuit: &TimedCircuit,
    c2: f64,
    table: &FeedforwardTable,
) -> Result<TimedCircuit> {
    if !(c2 >= 0.0) {
        return Err(Error::invalid("c2 must be >= 0"));
    }
    if c2 == 0.0 {
        return Ok(circuit.clone());
    }
    let angles = circuit
        .gates()
        .iter()
        .map(|g| {
            if g.noisy {
                let k = angle_scale(g);
                table
                    .lookup(k * g.spec.angle, c2 * g.start_time)
                    .map(|o| o.phi_in / k)
            } else {
                Ok(g.spec.angle)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    circuit.with_nominal_angles(&angles)
}
