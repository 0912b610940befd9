//! Flat-slice time evolution `i h dPsi/dt = H Psi`.
//!
//! Three integrators share the compiled operator: a dense eigendecomposition
//! (the ground truth for small lattices), Strang splitting for separable
//! Hamiltonians, and matrix-free Crank–Nicolson for anything Hermitian. A
//! Lanczos exponential covers dimensions too large for the dense route.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{raw_inner, WaveFunctional};
use crate::operator::LatticeHamiltonian;
use crate::par;

/// Largest dimension handled by dense diagonalization.
pub const DENSE_LIMIT: usize = 4096;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Strang,
    CrankNicolson,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "strang" => Ok(Method::Strang),
            "crank_nicolson" => Ok(Method::CrankNicolson),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveParams {
    pub dt: f64,
    pub steps: usize,
    pub method: Method,
    /// Relative residual target of the Crank–Nicolson solve.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_tolerance() -> f64 {
    1e-10
}

fn default_max_iterations() -> usize {
    1000
}

impl EvolveParams {
    pub fn new(dt: f64, steps: usize, method: Method) -> Self {
        EvolveParams {
            dt,
            steps,
            method,
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
        }
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Eigendecomposition `H = U diag(E) U^dagger` for exact propagation.
pub struct SpectralPropagator {
    h: f64,
    energies: Vec<f64>,
    vectors: DMatrix<Complex64>,
}

impl SpectralPropagator {
    pub fn new(op: &LatticeHamiltonian) -> Result<Self> {
        let dim = op.dim();
        if dim > DENSE_LIMIT {
            return Err(Error::DimensionTooLarge {
                dim,
                max: DENSE_LIMIT,
            });
        }
        let dense = op.to_dense();
        let imag = dense.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let scale = dense.iter().map(|z| z.norm()).fold(0.0, f64::max);
        // FFT roundoff leaves ~1e-16 imaginary parts on real operators.
        let (energies, vectors) = if imag <= 1e-13 * scale {
            let real = dense.map(|z| z.re);
            let real = (&real + real.transpose()) * 0.5;
            let eig = real.symmetric_eigen();
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors.map(|x| Complex64::new(x, 0.0)))
        } else {
            let herm = (&dense + dense.adjoint()) * Complex64::new(0.5, 0.0);
            let eig = herm.symmetric_eigen();
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        };
        Ok(SpectralPropagator {
            h: op.cfg().h,
            energies,
            vectors,
        })
    }

    /// Ascending eigenvalues.
    pub fn energies(&self) -> Vec<f64> {
        let mut e = self.energies.clone();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn ground_state_energy(&self) -> f64 {
        self.energies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `exp(-i t H / h) psi`.
    pub fn propagate(&self, psi: &WaveFunctional, t: f64) -> WaveFunctional {
        if t == 0.0 {
            return psi.clone();
        }
        let v = DVector::from_column_slice(&psi.amps);
        let mut c = self.vectors.adjoint() * v;
        for (ci, e) in c.iter_mut().zip(&self.energies) {
            *ci *= Complex64::from_polar(1.0, -t * e / self.h);
        }
        let out = &self.vectors * c;
        WaveFunctional {
            cfg: psi.cfg,
            amps: out.iter().copied().collect(),
        }
    }
}

/// Exact evolution to time `t` by dense diagonalization.
pub fn evolve_exact(op: &LatticeHamiltonian, psi: &WaveFunctional, t: f64) -> Result<WaveFunctional> {
    check_cfg(op, psi)?;
    if t == 0.0 {
        return Ok(psi.clone());
    }
    Ok(SpectralPropagator::new(op)?.propagate(psi, t))
}

fn check_cfg(op: &LatticeHamiltonian, psi: &WaveFunctional) -> Result<()> {
    if op.cfg() != &psi.cfg {
        Err(Error::ConfigMismatch)
    } else {
        Ok(())
    }
}

/// Phase factors and kinetic symbols for one split-step of length `dt`.
pub struct StrangStepper<'a> {
    op: &'a LatticeHamiltonian,
    half_diag: Vec<Complex64>,
    kinetic: Vec<(usize, Vec<Complex64>)>,
}

impl<'a> StrangStepper<'a> {
    pub fn new(op: &'a LatticeHamiltonian, dt: f64) -> Result<Self> {
        if !op.is_separable() {
            return Err(Error::NonSeparableHamiltonian);
        }
        let h = op.cfg().h;
        let half_diag = op
            .diagonal()
            .iter()
            .map(|d| Complex64::from_polar(1.0, -0.5 * dt * d / h))
            .collect();
        let kinetic = (0..op.cfg().sites)
            .filter_map(|j| {
                let sym = op.kinetic_symbol(j);
                if sym.iter().all(|&x| x == 0.0) {
                    None
                } else {
                    Some((j, sym.iter().map(|k| Complex64::from_polar(1.0, -dt * k / h)).collect()))
                }
            })
            .collect();
        Ok(StrangStepper {
            op,
            half_diag,
            kinetic,
        })
    }

    pub fn step(&self, amps: &mut Vec<Complex64>) {
        amps.iter_mut().zip(&self.half_diag).for_each(|(a, p)| *a *= p);
        for (site, mult) in &self.kinetic {
            *amps = self.op.axis_multiply(amps, *site, mult);
        }
        amps.iter_mut().zip(&self.half_diag).for_each(|(a, p)| *a *= p);
    }
}

/// Strang splitting: half diagonal phase, kinetic step per site in Fourier
/// space, half diagonal phase.
pub fn evolve_strang(op: &LatticeHamiltonian, psi: &WaveFunctional, params: &EvolveParams) -> Result<WaveFunctional> {
    check_cfg(op, psi)?;
    params.validate()?;
    let stepper = StrangStepper::new(op, params.dt)?;
    let mut amps = psi.amps.clone();
    for _ in 0..params.steps {
        stepper.step(&mut amps);
    }
    Ok(WaveFunctional { cfg: psi.cfg, amps })
}

/// One Cayley step `(1 + i tau H) x = (1 - i tau H) b`, `tau = dt / (2h)`.
///
/// Solved by conjugate gradients on the normal equations
/// `(1 + tau^2 H^2) x = (1 - i tau H) (1 - i tau H) b`; the normal residual
/// bounds the true residual because every singular value of `1 + i tau H` is
/// at least one.
pub fn crank_nicolson_step(
    op: &LatticeHamiltonian,
    amps: &[Complex64],
    dt: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<Vec<Complex64>> {
    let tau = 0.5 * dt / op.cfg().h;
    let apply_minus = |x: &[Complex64]| -> Vec<Complex64> {
        let hx = op.apply(x);
        x.iter().zip(&hx).map(|(a, b)| a - I * tau * b).collect()
    };
    let normal = |x: &[Complex64]| -> Vec<Complex64> {
        let hx = op.apply(x);
        let hhx = op.apply(&hx);
        x.iter().zip(&hhx).map(|(a, b)| a + tau * tau * b).collect()
    };
    let b = apply_minus(amps);
    let rhs = apply_minus(&b);
    let target = tolerance * raw_inner(&b, &b).re.sqrt();
    let mut x = b.clone();
    let mx = normal(&x);
    let mut r: Vec<Complex64> = rhs.iter().zip(&mx).map(|(a, b)| a - b).collect();
    let mut p = r.clone();
    let mut rr = raw_inner(&r, &r).re;
    for _ in 0..max_iterations {
        if rr.sqrt() <= target {
            return Ok(x);
        }
        let mp = normal(&p);
        let alpha = rr / raw_inner(&p, &mp).re;
        let n = x.len();
        let (xs, rs) = (&mut x, &mut r);
        par::for_each_chunk(xs, par::REDUCE_BLOCK, |c, chunk| {
            let lo = c * par::REDUCE_BLOCK;
            chunk.iter_mut().enumerate().for_each(|(i, xi)| *xi += alpha * p[lo + i]);
        });
        par::for_each_chunk(rs, par::REDUCE_BLOCK, |c, chunk| {
            let lo = c * par::REDUCE_BLOCK;
            chunk.iter_mut().enumerate().for_each(|(i, ri)| *ri -= alpha * mp[lo + i]);
        });
        let rr_new = raw_inner(&r, &r).re;
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= target {
        return Ok(x);
    }
    Err(Error::SolverDivergence {
        iterations: max_iterations,
        residual: rr.sqrt() / target * tolerance,
    })
}

pub fn evolve_crank_nicolson(
    op: &LatticeHamiltonian,
    psi: &WaveFunctional,
    params: &EvolveParams,
) -> Result<WaveFunctional> {
    check_cfg(op, psi)?;
    params.validate()?;
    let mut amps = psi.amps.clone();
    for _ in 0..params.steps {
        amps = crank_nicolson_step(op, &amps, params.dt, params.tolerance, params.max_iterations)?;
    }
    Ok(WaveFunctional { cfg: psi.cfg, amps })
}

/// Lanczos approximation of `exp(-i t H / h) psi`, substepping until the
/// a-posteriori error estimate falls below `tolerance` (relative).
pub fn evolve_krylov(op: &LatticeHamiltonian, psi: &WaveFunctional, t: f64, tolerance: f64) -> Result<WaveFunctional> {
    check_cfg(op, psi)?;
    let mut amps = psi.amps.clone();
    let mut remaining = t;
    let mut step = t;
    let mut guard = 0;
    while remaining.abs() > 0.0 {
        if step.abs() > remaining.abs() {
            step = remaining;
        }
        match krylov_step(op, &amps, step, tolerance) {
            Some(next) => {
                amps = next;
                remaining -= step;
                if (remaining / t).abs() < 1e-15 {
                    break;
                }
            }
            None => {
                step *= 0.5;
                guard += 1;
                if guard > 60 {
                    return Err(Error::SolverDivergence {
                        iterations: guard,
                        residual: f64::NAN,
                    });
                }
            }
        }
    }
    Ok(WaveFunctional { cfg: psi.cfg, amps })
}

const KRYLOV_DIM: usize = 40;

fn krylov_step(op: &LatticeHamiltonian, amps: &[Complex64], t: f64, tolerance: f64) -> Option<Vec<Complex64>> {
    let h = op.cfg().h;
    let beta0 = raw_inner(amps, amps).re.sqrt();
    if beta0 == 0.0 {
        return Some(amps.to_vec());
    }
    let mut basis: Vec<Vec<Complex64>> = vec![amps.iter().map(|a| a / beta0).collect()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut residual_beta = 0.0;
    for k in 0..KRYLOV_DIM {
        let mut w = op.apply(&basis[k]);
        let a = raw_inner(&basis[k], &w).re;
        alpha.push(a);
        // Full reorthogonalization, twice.
        for _ in 0..2 {
            for v in &basis {
                let c = raw_inner(v, &w);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
            }
        }
        let b = raw_inner(&w, &w).re.sqrt();
        residual_beta = b;
        if b < 1e-14 * beta0.max(1.0) || k + 1 == KRYLOV_DIM {
            break;
        }
        beta.push(b);
        basis.push(w.into_iter().map(|x| x / b).collect());
    }
    let m = alpha.len();
    let tri = DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = tri.symmetric_eigen();
    let coeffs: Vec<Complex64> = (0..m)
        .map(|i| {
            (0..m)
                .map(|k| {
                    let u = eig.eigenvectors[(i, k)] * eig.eigenvectors[(0, k)];
                    u * Complex64::from_polar(1.0, -t * eig.eigenvalues[k] / h)
                })
                .sum()
        })
        .collect();
    let err = residual_beta * coeffs[m - 1].norm();
    if err > tolerance {
        return None;
    }
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    for (v, c) in basis.iter().zip(&coeffs) {
        let s = c * beta0;
        out.iter_mut().zip(v).for_each(|(o, x)| *o += s * x);
    }
    Some(out)
}

/// Dispatches on `params.method`.
pub fn evolve(op: &LatticeHamiltonian, psi: &WaveFunctional, params: &EvolveParams) -> Result<WaveFunctional> {
    params.validate()?;
    match params.method {
        Method::Exact => evolve_exact(op, psi, params.total_time()),
        Method::Strang => evolve_strang(op, psi, params),
        Method::CrankNicolson => evolve_crank_nicolson(op, psi, params),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observables {
    pub energy: f64,
    pub mean: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub norm: f64,
}

/// `<H>`, `<z_j>`, `<z_j^2>` and the norm, with the lattice measure.
pub fn observables(op: &LatticeHamiltonian, psi: &WaveFunctional) -> Result<Observables> {
    check_cfg(op, psi)?;
    let cfg = psi.cfg;
    let norm = psi.norm();
    let w = cfg.measure() / (norm * norm);
    let grid = cfg.grid();
    let mut mean = Vec::with_capacity(cfg.sites);
    let mut second = Vec::with_capacity(cfg.sites);
    for j in 0..cfg.sites {
        let m = par::sum_indexed(psi.amps.len(), |i| psi.amps[i].norm_sqr() * grid[cfg.site_index(i, j)]);
        let s = par::sum_indexed(psi.amps.len(), |i| {
            let z = grid[cfg.site_index(i, j)];
            psi.amps[i].norm_sqr() * z * z
        });
        mean.push(m * w);
        second.push(s * w);
    }
    Ok(Observables {
        energy: op.expectation(psi)?,
        mean,
        second_moment: second,
        norm,
    })
}

/// One trajectory sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub observables: Observables,
}

impl TrajectoryRow {
    /// Column order: `t,norm,energy,z_0..z_{N-1}`.
    pub fn csv_header(sites: usize) -> String {
        let mut s = String::from("t,norm,energy");
        for j in 0..sites {
            s.push_str(&format!(",z_{j}"));
        }
        s
    }

    pub fn csv_line(&self) -> String {
        let o = &self.observables;
        let mut s = format!("{:e},{:e},{:e}", self.t, o.norm, o.energy);
        for m in &o.mean {
            s.push_str(&format!(",{m:e}"));
        }
        s
    }
}

/// Evolves step by step, sampling observables before the first and after every step.
pub fn evolve_logged(
    op: &LatticeHamiltonian,
    psi: &WaveFunctional,
    params: &EvolveParams,
) -> Result<(WaveFunctional, Vec<TrajectoryRow>)> {
    check_cfg(op, psi)?;
    params.validate()?;
    let mut rows = vec![TrajectoryRow {
        t: 0.0,
        observables: observables(op, psi)?,
    }];
    let mut state = psi.clone();
    let spectral = match params.method {
        Method::Exact if params.steps > 0 => Some(SpectralPropagator::new(op)?),
        _ => None,
    };
    let strang = match params.method {
        Method::Strang => Some(StrangStepper::new(op, params.dt)?),
        _ => None,
    };
    for step in 1..=params.steps {
        state = match params.method {
            Method::Exact => spectral.as_ref().unwrap().propagate(&psi.clone(), params.dt * step as f64),
            Method::Strang => {
                let mut amps = state.amps;
                strang.as_ref().unwrap().step(&mut amps);
                WaveFunctional { cfg: psi.cfg, amps }
            }
            Method::CrankNicolson => WaveFunctional {
                cfg: psi.cfg,
                amps: crank_nicolson_step(op, &state.amps, params.dt, params.tolerance, params.max_iterations)?,
            },
        };
        rows.push(TrajectoryRow {
            t: params.dt * step as f64,
            observables: observables(op, &state)?,
        });
    }
    Ok((state, rows))
}
