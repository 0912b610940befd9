//! Polynomial Lagrangian densities `F(z, zt, zx)` and their Legendre transforms.
//!
//! The admissible normal form is
//!
//! ```text
//! F = c*zt^2 + b*zt + g*zx^2 - V(z),   c > 0
//! ```
//!
//! which keeps the momentum relation `p = dF/dzt` linear in `zt` for every
//! surface slope below the characteristic speed.

mod legendre;
mod parse;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Poly;

pub use legendre::{legendre_transform, HamiltonianDensity, SlopeCoefficients};

/// Default cap on the potential degree.
pub const DEFAULT_MAX_DEGREE: usize = 6;

/// Parsed Lagrangian density in normal form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianSpec {
    /// Coefficient of `zt^2`.
    pub kinetic_coeff: f64,
    /// Coefficient of `zt`.
    pub kinetic_linear: f64,
    /// Coefficient of `zx^2`.
    pub gradient_coeff: f64,
    /// `V(z)`; enters `F` with a minus sign.
    pub potential: Poly,
}

impl LagrangianSpec {
    pub fn new(kinetic_coeff: f64, kinetic_linear: f64, gradient_coeff: f64, potential: Poly) -> Result<Self> {
        let spec = LagrangianSpec {
            kinetic_coeff,
            kinetic_linear,
            gradient_coeff,
            potential,
        };
        spec.validate(usize::MAX)?;
        Ok(spec)
    }

    /// `F = 0.5*zt^2 - 0.5*zx^2 - 0.5*m^2*z^2 - lambda*z^4`.
    pub fn scalar(mass: f64, quartic: f64) -> Self {
        LagrangianSpec {
            kinetic_coeff: 0.5,
            kinetic_linear: 0.0,
            gradient_coeff: -0.5,
            potential: Poly::new(vec![0.0, 0.0, 0.5 * mass * mass, 0.0, quartic]),
        }
    }

    fn validate(&self, max_degree: usize) -> Result<()> {
        let finite = [self.kinetic_coeff, self.kinetic_linear, self.gradient_coeff]
            .iter()
            .all(|c| c.is_finite())
            && self.potential.is_finite();
        if !finite {
            return Err(Error::NonFinite(self.to_string()));
        }
        if self.kinetic_coeff <= 0.0 {
            return Err(Error::NonQuadraticKinetic(format!(
                "coefficient of zt^2 is {}",
                self.kinetic_coeff
            )));
        }
        if let Some(d) = self.potential.degree() {
            if d > max_degree {
                return Err(Error::DegreeTooHigh {
                    degree: d,
                    max: max_degree,
                });
            }
        }
        Ok(())
    }

    /// `F(z, zt, zx)`.
    pub fn eval(&self, z: f64, zt: f64, zx: f64) -> f64 {
        self.kinetic_coeff * zt * zt + self.kinetic_linear * zt + self.gradient_coeff * zx * zx
            - self.potential.eval(z)
    }

    /// Largest absolute difference between the coefficients of two specs.
    pub fn coefficient_distance(&self, other: &LagrangianSpec) -> f64 {
        let n = self.potential.0.len().max(other.potential.0.len());
        let mut d = (self.kinetic_coeff - other.kinetic_coeff)
            .abs()
            .max((self.kinetic_linear - other.kinetic_linear).abs())
            .max((self.gradient_coeff - other.gradient_coeff).abs());
        for k in 0..n {
            d = d.max((self.potential.coeff(k) - other.potential.coeff(k)).abs());
        }
        d
    }
}

pub(crate) fn push_term(out: &mut String, coeff: f64, symbol: &str) {
    if coeff == 0.0 {
        return;
    }
    let mag = coeff.abs();
    if out.is_empty() {
        if coeff < 0.0 {
            out.push('-');
        }
    } else if coeff < 0.0 {
        out.push_str(" - ");
    } else {
        out.push_str(" + ");
    }
    if symbol.is_empty() {
        out.push_str(&format!("{mag}"));
    } else {
        out.push_str(&format!("{mag}*{symbol}"));
    }
}

pub(crate) fn power_symbol(name: &str, k: usize) -> String {
    if k == 1 {
        name.to_string()
    } else {
        format!("{name}^{k}")
    }
}

impl fmt::Display for LagrangianSpec {
    /// Normal form: `zt^2`, `zt`, `zx^2`, potential terms by ascending degree, constant.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        push_term(&mut s, self.kinetic_coeff, "zt^2");
        push_term(&mut s, self.kinetic_linear, "zt");
        push_term(&mut s, self.gradient_coeff, "zx^2");
        for k in 1..self.potential.0.len() {
            push_term(&mut s, -self.potential.coeff(k), &power_symbol("z", k));
        }
        push_term(&mut s, -self.potential.coeff(0), "");
        if s.is_empty() {
            s.push('0');
        }
        f.write_str(&s)
    }
}

/// Parses a Lagrangian density with the default degree cap.
pub fn parse_lagrangian(text: &str, params: &HashMap<String, f64>) -> Result<LagrangianSpec> {
    parse_lagrangian_with(text, params, DEFAULT_MAX_DEGREE)
}

/// Parses a Lagrangian density, rejecting potentials above `max_degree`.
pub fn parse_lagrangian_with(
    text: &str,
    params: &HashMap<String, f64>,
    max_degree: usize,
) -> Result<LagrangianSpec> {
    let expanded = parse::expand(text, params)?;
    let mut spec = LagrangianSpec {
        kinetic_coeff: 0.0,
        kinetic_linear: 0.0,
        gradient_coeff: 0.0,
        potential: Poly::zero(),
    };
    for (&[pz, pt, px], &c) in &expanded {
        let describe = || format!("{c}*z^{pz}*zt^{pt}*zx^{px}");
        if !c.is_finite() {
            return Err(Error::NonFinite(describe()));
        }
        if pt > 2 {
            return Err(Error::NonQuadraticKinetic(format!("zt^{pt} appears")));
        }
        match (pz, pt, px) {
            (0, 2, 0) => spec.kinetic_coeff = c,
            (0, 1, 0) => spec.kinetic_linear = c,
            (0, 0, 2) => spec.gradient_coeff = c,
            (k, 0, 0) => {
                if k as usize > max_degree {
                    return Err(Error::DegreeTooHigh {
                        degree: k as usize,
                        max: max_degree,
                    });
                }
                spec.potential.set_coeff(k as usize, -c);
            }
            _ => return Err(Error::UnsupportedMixing(describe())),
        }
    }
    spec.validate(max_degree)?;
    Ok(spec)
}
