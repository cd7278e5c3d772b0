//! Equivalent-circuit model of a tunable RIS unit element.
//!
//! Each element is an inductor `L1` in parallel with a series branch
//! `L2 + R0 + C`, where `C` is the tunable capacitor. The element reflects
//! with `(Z - zeta0) / (Z + zeta0)`.
//!
//! Public entry points that take a bare capacitance expect farads. Everything
//! that works on a [`CapacitorVector`] uses picofarads, and so do the
//! `*_pf` variants of the scalar functions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KAPPA: f64 = 2.0 * PI;

/// Farads per picofarad.
pub const PICO: f64 = 1e-12;

const POLE_EPS: f64 = 1e-30;

const CALIBRATION_GRID: usize = 512;

/// Golden-section bracket width relative to the capacitance span.
const CALIBRATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitParams {
    /// Shunt inductance (H).
    pub l1: f64,
    /// Series-branch inductance (H).
    pub l2: f64,
    /// Series-branch loss resistance (ohm).
    pub r0: f64,
    /// Characteristic impedance of the medium (ohm).
    pub zeta0: f64,
    /// Smallest admissible capacitance (F).
    pub c_min: f64,
    /// Largest admissible capacitance (F).
    pub c_max: f64,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            l1: 1.7143e-9,
            l2: 0.48e-9,
            r0: 1.0,
            zeta0: 50.0,
            c_min: 0.01e-12,
            c_max: 3e-12,
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.l1, self.l2, self.r0, self.zeta0, self.c_min, self.c_max];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("circuit", "all circuit values must be finite"));
        }
        if self.l1 <= 0.0 {
            return Err(Error::invalid("circuit.l1", "must be > 0"));
        }
        if self.l2 < 0.0 {
            return Err(Error::invalid("circuit.l2", "must be >= 0"));
        }
        if self.r0 < 0.0 {
            return Err(Error::invalid("circuit.r0", "must be >= 0"));
        }
        if self.zeta0 <= 0.0 {
            return Err(Error::invalid("circuit.zeta0", "must be > 0"));
        }
        if self.c_min <= 0.0 {
            return Err(Error::invalid("circuit.c_min", "must be > 0"));
        }
        if self.c_min >= self.c_max {
            return Err(Error::invalid("circuit.c_min", "must be smaller than circuit.c_max"));
        }
        Ok(())
    }

    pub fn c_min_pf(&self) -> f64 {
        self.c_min / PICO
    }

    pub fn c_max_pf(&self) -> f64 {
        self.c_max / PICO
    }

    pub fn c_mid_pf(&self) -> f64 {
        0.5 * (self.c_min_pf() + self.c_max_pf())
    }

    pub fn c_span_pf(&self) -> f64 {
        self.c_max_pf() - self.c_min_pf()
    }

    pub fn clamp_pf(&self, c_pf: f64) -> f64 {
        c_pf.clamp(self.c_min_pf(), self.c_max_pf())
    }
}

/// Tunable capacitances of every RIS element, RIS-major, in picofarads.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitorVector(Vec<f64>);

impl CapacitorVector {
    pub fn from_picofarads(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn from_farads(values: &[f64]) -> Self {
        Self(values.iter().map(|c| c / PICO).collect())
    }

    pub fn filled(len: usize, c_pf: f64) -> Self {
        Self(vec![c_pf; len])
    }

    pub fn midpoint(len: usize, params: &CircuitParams) -> Self {
        Self::filled(len, params.c_mid_pf())
    }

    pub fn as_picofarads(&self) -> &[f64] {
        &self.0
    }

    pub fn as_picofarads_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn to_farads(&self) -> Vec<f64> {
        self.0.iter().map(|c| c * PICO).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn within_box(&self, params: &CircuitParams) -> bool {
        let (lo, hi) = (params.c_min_pf(), params.c_max_pf());
        self.0.iter().all(|&c| c >= lo && c <= hi)
    }

    pub fn clamp_to_box(&mut self, params: &CircuitParams) {
        for c in &mut self.0 {
            *c = params.clamp_pf(*c);
        }
    }

    pub fn validate(&self, params: &CircuitParams) -> Result<()> {
        if let Some((n, c)) = self
            .0
            .iter()
            .enumerate()
            .find(|(_, &c)| !(c >= params.c_min_pf() && c <= params.c_max_pf()))
        {
            return Err(Error::invalid(
                "capacitors",
                format!("entry {n} = {c} pF lies outside the admissible box"),
            ));
        }
        Ok(())
    }
}

/// Numerator and denominator of the element impedance, `Z = N / D`.
fn numerator_denominator(f: f64, c: f64, p: &CircuitParams) -> (Complex64, Complex64) {
    let jw = Complex64::new(0.0, KAPPA * f);
    let cap = (jw * c).inv();
    let n = jw * p.l1 * (jw * p.l2 + p.r0 + cap);
    let d = jw * (p.l1 + p.l2) + p.r0 + cap;
    (n, d)
}

fn check_inputs(f: f64, c: f64) -> Result<()> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Degenerate(format!("frequency must be positive, got {f}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Degenerate(format!("capacitance must be positive, got {c}")));
    }
    Ok(())
}

/// Element impedance at frequency `f` (Hz) and capacitance `c` (F).
pub fn impedance(f: f64, c: f64, params: &CircuitParams) -> Result<Complex64> {
    check_inputs(f, c)?;
    let (n, d) = numerator_denominator(f, c, params);
    if d.norm() < POLE_EPS {
        return Err(Error::Degenerate(format!(
            "impedance pole at f = {f} Hz, c = {c} F"
        )));
    }
    Ok(n / d)
}

/// Reflection coefficient at frequency `f` (Hz) and capacitance `c` (F).
pub fn reflection(f: f64, c: f64, params: &CircuitParams) -> Result<Complex64> {
    let z = impedance(f, c, params)?;
    let den = z + params.zeta0;
    if den.norm() < POLE_EPS {
        return Err(Error::Degenerate(format!(
            "impedance equals -zeta0 at f = {f} Hz, c = {c} F"
        )));
    }
    Ok((z - params.zeta0) / den)
}

/// d(reflection)/dc in 1/F.
pub fn reflection_derivative(f: f64, c: f64, params: &CircuitParams) -> Result<Complex64> {
    check_inputs(f, c)?;
    let (n, d) = numerator_denominator(f, c, params);
    let dn = Complex64::new(-params.l1 / (c * c), 0.0);
    let dd = Complex64::new(0.0, 1.0 / (KAPPA * f * c * c));
    let den = n + params.zeta0 * d;
    if den.norm() < POLE_EPS {
        return Err(Error::Degenerate(format!(
            "reflection pole at f = {f} Hz, c = {c} F"
        )));
    }
    Ok(2.0 * params.zeta0 * (dn * d - n * dd) / (den * den))
}

pub fn reflection_pf(f: f64, c_pf: f64, params: &CircuitParams) -> Result<Complex64> {
    reflection(f, c_pf * PICO, params)
}

/// d(reflection)/dc in 1/pF.
pub fn reflection_derivative_pf(f: f64, c_pf: f64, params: &CircuitParams) -> Result<Complex64> {
    Ok(reflection_derivative(f, c_pf * PICO, params)? * PICO)
}

/// Diagonal of the stacked reflection matrix at one subcarrier.
pub fn build_phi(f_k: f64, caps: &CapacitorVector, params: &CircuitParams) -> Result<Vec<Complex64>> {
    caps.as_picofarads()
        .iter()
        .map(|&c| reflection_pf(f_k, c, params))
        .collect()
}

/// Diagonal of d(Phi)/dc at one subcarrier, per picofarad.
pub fn build_phi_derivative(
    f_k: f64,
    caps: &CapacitorVector,
    params: &CircuitParams,
) -> Result<Vec<Complex64>> {
    caps.as_picofarads()
        .iter()
        .map(|&c| reflection_derivative_pf(f_k, c, params))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Best capacitance in the admissible box (F).
    pub c: f64,
    /// Distance `|reflection(f, c) - target|` at the returned capacitance.
    pub residual: f64,
}

/// Finds the capacitance whose response at `f` is closest to `target` in the
/// complex plane: grid scan over the box, then golden-section refinement.
pub fn calibrate_capacitor(target: Complex64, f: f64, params: &CircuitParams) -> Result<Calibration> {
    let (lo, hi) = (params.c_min_pf(), params.c_max_pf());
    let dist = |c_pf: f64| -> Result<f64> { Ok((reflection_pf(f, c_pf, params)? - target).norm_sqr()) };

    let step = (hi - lo) / (CALIBRATION_GRID - 1) as f64;
    let grid_point = |i: usize| if i + 1 == CALIBRATION_GRID { hi } else { lo + step * i as f64 };
    let mut best = (0usize, f64::INFINITY);
    for i in 0..CALIBRATION_GRID {
        let d = dist(grid_point(i))?;
        if d < best.1 {
            best = (i, d);
        }
    }

    let mut a = grid_point(best.0.saturating_sub(1));
    let mut b = grid_point((best.0 + 1).min(CALIBRATION_GRID - 1));
    let tol = CALIBRATION_TOL * (hi - lo);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut d1 = dist(x1)?;
    let mut d2 = dist(x2)?;
    while b - a > tol {
        if d1 <= d2 {
            b = x2;
            x2 = x1;
            d2 = d1;
            x1 = b - inv_phi * (b - a);
            d1 = dist(x1)?;
        } else {
            a = x1;
            x1 = x2;
            d1 = d2;
            x2 = a + inv_phi * (b - a);
            d2 = dist(x2)?;
        }
    }

    let mid = 0.5 * (a + b);
    let mut candidates = [(grid_point(best.0), best.1), (x1, d1), (x2, d2), (mid, dist(mid)?)];
    candidates.sort_by(|l, r| l.1.total_cmp(&r.1));
    let (c_pf, d) = candidates[0];
    Ok(Calibration {
        c: c_pf * PICO,
        residual: d.sqrt(),
    })
}
