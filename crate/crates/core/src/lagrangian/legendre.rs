use std::fmt;

use serde::{Deserialize, Serialize};

use super::{power_symbol, push_term, LagrangianSpec};
use crate::error::{Error, Result};
use crate::poly::Poly;

/// Hamiltonian density `H(z, z_s, p; v)` obtained by Legendre transform.
///
/// On a flat slice (`v = 0`) it reads
///
/// ```text
/// H = m*(p - b)^2 + k*z_s^2 + V(z)
/// ```
///
/// with `m = 1/(4c)`, `k = -g`. On a surface of slope `v` the field derivative
/// along the surface is `z_s = zx + zt*v`; eliminating `zt` through `p = dF/dzt`
/// gives the rational-in-`v` coefficients of [`SlopeCoefficients`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianDensity {
    /// Coefficient of `p^2` on a flat slice.
    pub inverse_mass: f64,
    /// Momentum offset `b` coming from a term linear in `zt`.
    pub momentum_shift: f64,
    /// Coefficient of `z_s^2` on a flat slice.
    pub stiffness: f64,
    pub potential: Poly,
}

/// Expansion of `H` at a fixed slope:
/// `p2*p^2 + p_zs*p*z_s + p1*p + zs2*z_s^2 + zs1*z_s + c0 + V(z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeCoefficients {
    pub p2: f64,
    pub p_zs: f64,
    pub p1: f64,
    pub zs2: f64,
    pub zs1: f64,
    pub c0: f64,
}

/// Legendre transform of `F` with respect to `zt`.
pub fn legendre_transform(spec: &LagrangianSpec) -> Result<HamiltonianDensity> {
    if !(spec.kinetic_coeff > 0.0) {
        return Err(Error::DegenerateKinetic(spec.kinetic_coeff));
    }
    Ok(HamiltonianDensity {
        inverse_mass: 1.0 / (4.0 * spec.kinetic_coeff),
        momentum_shift: spec.kinetic_linear,
        stiffness: -spec.gradient_coeff,
        potential: spec.potential.clone(),
    })
}

impl HamiltonianDensity {
    /// Density with no kinetic or gradient part: `H = V(z)`.
    pub fn potential_only(potential: Poly) -> Self {
        HamiltonianDensity {
            inverse_mass: 0.0,
            momentum_shift: 0.0,
            stiffness: 0.0,
            potential,
        }
    }

    pub fn has_kinetic(&self) -> bool {
        self.inverse_mass != 0.0
    }

    /// Coefficients of the density on a surface of slope `v`.
    pub fn at_slope(&self, v: f64) -> Result<SlopeCoefficients> {
        let m = self.inverse_mass;
        let b = self.momentum_shift;
        let k = self.stiffness;
        // 1/(4A) with A = c + g v^2, written so that m = 0 stays finite.
        let d = 1.0 - 4.0 * m * k * v * v;
        if !(d > 1e-12) {
            return Err(Error::DegenerateKinetic(d));
        }
        Ok(SlopeCoefficients {
            p2: m / d,
            p_zs: -4.0 * m * k * v / d,
            p1: -2.0 * m * b / d,
            zs2: 4.0 * m * k * k * v * v / d + k,
            zs1: 4.0 * m * b * k * v / d,
            c0: m * b * b / d,
        })
    }

    /// `H(z, z_s, p; v)`.
    pub fn eval(&self, z: f64, zs: f64, p: f64, v: f64) -> Result<f64> {
        let c = self.at_slope(v)?;
        Ok(c.eval_local(zs, p) + self.potential.eval(z))
    }

    /// Inverse transform at slope `v`, returning the Lagrangian in `(zt, zx)`
    /// and the largest coefficient of a monomial the normal form forbids
    /// (which must vanish up to roundoff).
    pub fn inverse_transform(&self, v: f64) -> Result<(LagrangianSpec, f64)> {
        let c = self.at_slope(v)?;
        if !(c.p2 > 0.0) {
            return Err(Error::DegenerateKinetic(c.p2));
        }
        // H = (p - B)^2/(4A) - C with B = B0 + B1 z_s, C = C0 + C1 z_s + C2 z_s^2 - V.
        let a = 1.0 / (4.0 * c.p2);
        let b0 = -2.0 * a * c.p1;
        let b1 = -2.0 * a * c.p_zs;
        let c0 = b0 * b0 / (4.0 * a) - c.c0;
        let c1 = 2.0 * b0 * b1 / (4.0 * a) - c.zs1;
        let c2 = b1 * b1 / (4.0 * a) - c.zs2;
        // F = A zt^2 + B zt + C, then z_s = zx + zt v.
        let kinetic = a + b1 * v + c2 * v * v;
        let linear = b0 + c1 * v;
        let mixing = (b1 + 2.0 * c2 * v).abs().max(c1.abs()).max(c0.abs());
        let spec = LagrangianSpec {
            kinetic_coeff: kinetic,
            kinetic_linear: linear,
            gradient_coeff: c2,
            potential: self.potential.clone(),
        };
        Ok((spec, mixing))
    }

    /// Flat-slice normal form, e.g. `0.5*p^2 + 0.5*zx^2 + 0.5*z^2`.
    pub fn normal_form(&self) -> String {
        self.at_slope(0.0)
            .map(|c| c.format(&self.potential))
            .unwrap_or_else(|_| "<degenerate>".to_string())
    }
}

impl SlopeCoefficients {
    /// Everything except the potential.
    pub fn eval_local(&self, zs: f64, p: f64) -> f64 {
        self.p2 * p * p + self.p_zs * p * zs + self.p1 * p + self.zs2 * zs * zs + self.zs1 * zs + self.c0
    }

    pub fn format(&self, potential: &Poly) -> String {
        let mut s = String::new();
        push_term(&mut s, self.p2, "p^2");
        push_term(&mut s, self.p_zs, "p*zx");
        push_term(&mut s, self.p1, "p");
        push_term(&mut s, self.zs2, "zx^2");
        push_term(&mut s, self.zs1, "zx");
        for k in 1..potential.0.len() {
            push_term(&mut s, potential.coeff(k), &power_symbol("z", k));
        }
        push_term(&mut s, self.c0 + potential.coeff(0), "");
        if s.is_empty() {
            s.push('0');
        }
        s
    }
}

impl fmt::Display for HamiltonianDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.normal_form())
    }
}
