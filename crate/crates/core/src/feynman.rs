//! Path sums over discretized field histories.
//!
//! A history is a sequence of grid configurations `z^0, ..., z^{T+1}` on flat
//! slices `dt` apart. The initial slice is summed over with weight `Psi_0`,
//! the final slice is pinned. Each step contributes a per-site kinetic kernel
//! and the phase of the non-kinetic part of the forward-Euler action, so the
//! exhaustive sum factorizes into repeated application of one
//! [`TransferOperator`].

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convergence::fit_order;
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::evolve::{evolve_exact, evolve_krylov, DENSE_LIMIT};
use crate::lagrangian::{legendre_transform, LagrangianSpec};
use crate::lattice::{init_wavefunctional, GaussianStateSpec, LatticeConfig, WaveFunctional};
use crate::operator::{compile_hamiltonian, derivative_symbols, CompileOptions, DerivativeScheme};
use crate::par;

/// Largest number of histories summed per endpoint.
pub const MAX_HISTORIES: u128 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Exact one-step propagator of the kinetic term on the grid.
    #[default]
    FresnelExact,
    /// `exp(i S_kin / h)` of the discrete action with the free normalization.
    LagrangianRiemann,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathIntegralSpec {
    /// Intermediate slices between the two boundaries.
    pub steps: usize,
    pub dt: f64,
    #[serde(default)]
    pub kernel: Kernel,
    #[serde(default)]
    pub scheme: DerivativeScheme,
}

impl PathIntegralSpec {
    pub fn total_time(&self) -> f64 {
        (self.steps + 1) as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        Ok(())
    }

    /// `(c a / (pi i h dt))^{1/2} dz`, the Riemann kernel weight per site per step.
    pub fn riemann_measure(&self, cfg: &LatticeConfig, lagrangian: &LagrangianSpec) -> Complex64 {
        let arg = Complex64::new(0.0, -lagrangian.kinetic_coeff * cfg.spacing / (PI * cfg.h * self.dt));
        arg.sqrt() * cfg.dz()
    }
}

/// One time step: `psi -> K . diag(exp(-i dt W / h)) psi` with `K` the
/// tensor power of a single-site kernel.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    cfg: LatticeConfig,
    site_kernel: DMatrix<Complex64>,
    phase: Vec<Complex64>,
}

/// `W(z) = a sum_j (V(z_j) - g D_j^2)`: minus the non-kinetic Lagrangian.
fn static_energy(lagrangian: &LagrangianSpec, cfg: &LatticeConfig, z: &[f64]) -> f64 {
    let n = z.len();
    let a = cfg.spacing;
    let mut w = 0.0;
    for j in 0..n {
        let d = if n == 1 { 0.0 } else { (z[(j + 1) % n] - z[j]) / a };
        w += lagrangian.potential.eval(z[j]) - lagrangian.gradient_coeff * d * d;
    }
    a * w
}

/// Single-site kinetic kernel `K[to, from]`.
pub fn site_kernel(cfg: &LatticeConfig, lagrangian: &LagrangianSpec, spec: &PathIntegralSpec) -> Result<DMatrix<Complex64>> {
    spec.validate()?;
    let q = cfg.q;
    let a = cfg.spacing;
    let h = cfg.h;
    let dt = spec.dt;
    let (c, b) = (lagrangian.kinetic_coeff, lagrangian.kinetic_linear);
    Ok(match spec.kernel {
        Kernel::FresnelExact => {
            let ham = legendre_transform(lagrangian)?;
            let (m, bb) = (ham.inverse_mass, ham.momentum_shift);
            let hp = h / a;
            let (s1, s2) = derivative_symbols(cfg, spec.scheme);
            // a m (p - b)^2 in the Fourier basis of one site.
            let phase: Vec<Complex64> = (0..q)
                .map(|k| {
                    let e = a * (m * hp * hp * s2[k] - 2.0 * m * bb * hp * s1[k] + m * bb * bb);
                    Complex64::from_polar(1.0, -dt * e / h)
                })
                .collect();
            DMatrix::from_fn(q, q, |r, col| {
                let shift = (r + q - col) % q;
                phase
                    .iter()
                    .enumerate()
                    .map(|(k, p)| p * Complex64::from_polar(1.0, 2.0 * PI * (k * shift) as f64 / q as f64))
                    .sum::<Complex64>()
                    / q as f64
            })
        }
        Kernel::LagrangianRiemann => {
            let norm = spec.riemann_measure(cfg, lagrangian);
            let grid = cfg.grid();
            DMatrix::from_fn(q, q, |r, col| {
                let v = (grid[r] - grid[col]) / dt;
                norm * Complex64::from_polar(1.0, a * dt * (c * v * v + b * v) / h)
            })
        }
    })
}

impl TransferOperator {
    pub fn new(lagrangian: &LagrangianSpec, cfg: &LatticeConfig, spec: &PathIntegralSpec) -> Result<Self> {
        cfg.validate()?;
        let site_kernel = site_kernel(cfg, lagrangian, spec)?;
        let mut phase = vec![Complex64::new(0.0, 0.0); cfg.dim()];
        let (dt, h) = (spec.dt, cfg.h);
        par::fill_indexed(&mut phase, |idx| {
            Complex64::from_polar(1.0, -dt * static_energy(lagrangian, cfg, &cfg.field(idx)) / h)
        });
        Ok(TransferOperator {
            cfg: *cfg,
            site_kernel,
            phase,
        })
    }

    pub fn site_kernel(&self) -> &DMatrix<Complex64> {
        &self.site_kernel
    }

    /// Kernel entry `T(to, from)` between two flat grid indices.
    pub fn entry(&self, to: usize, from: usize) -> Complex64 {
        let (kt, kf) = (self.cfg.unflatten(to), self.cfg.unflatten(from));
        kt.iter()
            .zip(&kf)
            .map(|(&a, &b)| self.site_kernel[(a, b)])
            .product::<Complex64>()
            * self.phase[from]
    }

    pub fn apply(&self, amps: &[Complex64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = amps.iter().zip(&self.phase).map(|(a, p)| a * p).collect();
        for site in 0..self.cfg.sites {
            out = apply_axis_matrix(&self.cfg, &out, site, &self.site_kernel);
        }
        out
    }

    pub fn apply_state(&self, psi: &WaveFunctional) -> Result<WaveFunctional> {
        if psi.cfg != self.cfg {
            return Err(Error::ConfigMismatch);
        }
        Ok(WaveFunctional {
            cfg: self.cfg,
            amps: self.apply(&psi.amps),
        })
    }

    pub fn apply_n(&self, psi: &WaveFunctional, n: usize) -> Result<WaveFunctional> {
        let mut out = psi.clone();
        for _ in 0..n {
            out = self.apply_state(&out)?;
        }
        Ok(out)
    }
}

/// Multiplies every line along `site` by the dense matrix `m`.
fn apply_axis_matrix(cfg: &LatticeConfig, input: &[Complex64], site: usize, m: &DMatrix<Complex64>) -> Vec<Complex64> {
    let q = cfg.q;
    let stride = cfg.stride(site);
    let mut out = vec![Complex64::new(0.0, 0.0); input.len()];
    par::fill_indexed(&mut out, |g| {
        let r = (g / stride) % q;
        let base = g - r * stride;
        (0..q).map(|c| m[(r, c)] * input[base + c * stride]).sum()
    });
    out
}

/// `S = sum_t sum_j dt a F(z_j^t, (z_j^{t+1} - z_j^t)/dt, (z_{j+1}^t - z_j^t)/a)`.
///
/// `history[t][j]` is the field at slice `t`, site `j`; space is periodic.
pub fn discrete_action(history: &[Vec<f64>], dt: f64, spacing: f64, lagrangian: &LagrangianSpec) -> Result<f64> {
    let n = history.first().map_or(0, |s| s.len());
    if history.len() < 2 || n == 0 || history.iter().any(|s| s.len() != n) {
        return Err(Error::ShapeMismatch("history needs at least two slices of equal width".into()));
    }
    let mut s = 0.0;
    for t in 0..history.len() - 1 {
        let (now, next) = (&history[t], &history[t + 1]);
        for j in 0..n {
            let zt = (next[j] - now[j]) / dt;
            let zx = (now[(j + 1) % n] - now[j]) / spacing;
            s += dt * spacing * lagrangian.eval(now[j], zt, zx);
        }
    }
    Ok(s)
}

fn history_count(cfg: &LatticeConfig, spec: &PathIntegralSpec) -> u128 {
    (cfg.q as u128)
        .checked_pow((cfg.sites * (spec.steps + 1)) as u32)
        .unwrap_or(u128::MAX)
}

/// Exhaustive sum over histories ending at grid configuration `z_final`.
pub fn brute_force_feynman(
    psi0: &WaveFunctional,
    z_final: &[usize],
    spec: &PathIntegralSpec,
    lagrangian: &LagrangianSpec,
) -> Result<Complex64> {
    let cfg = psi0.cfg;
    let count = history_count(&cfg, spec);
    if count > MAX_HISTORIES {
        return Err(Error::EnumerationTooLarge {
            count,
            max: MAX_HISTORIES,
        });
    }
    if z_final.len() != cfg.sites || z_final.iter().any(|&k| k >= cfg.q) {
        return Err(Error::ShapeMismatch("final configuration does not fit the grid".into()));
    }
    let kin = site_kernel(&cfg, lagrangian, spec)?;
    let grid = cfg.grid();
    let n = cfg.sites;
    let inner = cfg.dim().pow(spec.steps as u32);
    let (dt, h) = (spec.dt, cfg.h);
    let partial = par::map_range(cfg.dim(), |start| {
        let mut slices = vec![vec![0usize; n]; spec.steps + 2];
        slices[0] = cfg.unflatten(start);
        slices[spec.steps + 1] = z_final.to_vec();
        let mut acc = Complex64::new(0.0, 0.0);
        for path in 0..inner {
            let mut rest = path;
            for slice in slices.iter_mut().skip(1).take(spec.steps) {
                *slice = cfg.unflatten(rest % cfg.dim());
                rest /= cfg.dim();
            }
            let mut weight = Complex64::new(1.0, 0.0);
            let mut energy = 0.0;
            for t in 0..=spec.steps {
                for j in 0..n {
                    weight *= kin[(slices[t + 1][j], slices[t][j])];
                }
                let z: Vec<f64> = slices[t].iter().map(|&k| grid[k]).collect();
                energy += static_energy(lagrangian, &cfg, &z);
            }
            acc += weight * Complex64::from_polar(1.0, -dt * energy / h);
        }
        acc * psi0.amps[start]
    });
    Ok(partial.into_iter().fold(Complex64::new(0.0, 0.0), |a, b| a + b))
}

/// Brute-force amplitudes at every final configuration.
pub fn brute_force_state(psi0: &WaveFunctional, spec: &PathIntegralSpec, lagrangian: &LagrangianSpec) -> Result<WaveFunctional> {
    let cfg = psi0.cfg;
    let amps = (0..cfg.dim())
        .map(|idx| brute_force_feynman(psi0, &cfg.unflatten(idx), spec, lagrangian))
        .collect::<Result<Vec<_>>>()?;
    Ok(WaveFunctional { cfg, amps })
}

/// `index,re,im` rows over final configurations.
pub fn write_amplitudes_csv<W: std::io::Write>(psi: &WaveFunctional, w: W) -> Result<()> {
    crate::lattice::write_csv(psi, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeynmanLevel {
    pub dt: f64,
    pub q: usize,
    pub transfer_steps: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeynmanReport {
    pub kernel: Kernel,
    pub total_time: f64,
    pub levels: Vec<FeynmanLevel>,
    pub fitted_order: f64,
    pub spec_hash: String,
}

/// Lattice data shared by every refinement level; `q` varies per level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderBase {
    pub sites: usize,
    pub spacing: f64,
    pub extent: f64,
    pub h: f64,
}

/// Distance between transfer-operator evolution and exact evolution over a
/// joint `(dt, Q)` ladder at fixed total time.
pub fn feynman_vs_schrodinger(
    initial: &GaussianStateSpec,
    lagrangian: &LagrangianSpec,
    base: LadderBase,
    total_time: f64,
    levels: &[(f64, usize)],
    kernel: Kernel,
    scheme: DerivativeScheme,
) -> Result<FeynmanReport> {
    let ham = legendre_transform(lagrangian)?;
    let mut out = Vec::with_capacity(levels.len());
    for &(dt, q) in levels {
        let cfg = LatticeConfig::new(base.sites, base.spacing, q, base.extent, base.h)?;
        let psi0 = init_wavefunctional(initial, &cfg)?;
        let ratio = total_time / dt;
        let n = ratio.round();
        if (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidConfig(format!("total time {total_time} is not a multiple of dt {dt}")));
        }
        let n = n as usize;
        let spec = PathIntegralSpec {
            steps: n.saturating_sub(1),
            dt,
            kernel,
            scheme,
        };
        let transfer = TransferOperator::new(lagrangian, &cfg, &spec)?;
        let path = transfer.apply_n(&psi0, n)?;
        let op = compile_hamiltonian(&ham, &cfg, None, CompileOptions { scheme, ..Default::default() })?;
        let exact = if cfg.dim() <= DENSE_LIMIT.min(1024) {
            evolve_exact(&op, &psi0, total_time)?
        } else {
            evolve_krylov(&op, &psi0, total_time, 1e-12)?
        };
        out.push(FeynmanLevel {
            dt,
            q,
            transfer_steps: n,
            distance: path.distance(&exact)?,
        });
    }
    let dts: Vec<f64> = out.iter().map(|l| l.dt).collect();
    let ds: Vec<f64> = out.iter().map(|l| l.distance).collect();
    let identity = serde_json::json!({
        "initial": initial,
        "lagrangian": lagrangian.to_string(),
        "base": base,
        "total_time": total_time,
        "levels": levels,
        "kernel": kernel,
        "scheme": scheme,
    });
    Ok(FeynmanReport {
        kernel,
        total_time,
        fitted_order: fit_order(&dts, &ds),
        levels: out,
        spec_hash: sha256_hex(identity.to_string().as_bytes()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Poly;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(cfg: LatticeConfig, rng: &mut ChaCha8Rng) -> WaveFunctional {
        let amps = (0..cfg.dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        WaveFunctional::from_amplitudes(cfg, amps).unwrap()
    }

    /// Slow reference: nested loops written independently of `discrete_action`.
    fn slow_action(history: &[Vec<f64>], dt: f64, a: f64, l: &LagrangianSpec) -> f64 {
        let mut total = 0.0;
        let n = history[0].len();
        for j in 0..n {
            for t in 0..history.len() - 1 {
                let here = history[t][j];
                let right = if j + 1 == n { history[t][0] } else { history[t][j + 1] };
                let vel = (history[t + 1][j] - here) / dt;
                let grad = (right - here) / a;
                let f = l.kinetic_coeff * vel * vel + l.kinetic_linear * vel + l.gradient_coeff * grad * grad
                    - l.potential.eval(here);
                total += f * dt * a;
            }
        }
        total
    }

    #[test]
    fn action_examples() {
        let l = LagrangianSpec::scalar(1.0, 0.1);
        assert_eq!(discrete_action(&vec![vec![0.0; 3]; 4], 0.1, 1.0, &l).unwrap(), 0.0);
        let kin = LagrangianSpec::new(0.5, 0.0, 0.0, Poly::zero()).unwrap();
        assert_eq!(discrete_action(&[vec![0.0], vec![1.0]], 1.0, 1.0, &kin).unwrap(), 0.5);
        assert!(discrete_action(&[vec![0.0, 1.0], vec![1.0]], 1.0, 1.0, &kin).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let hist: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let fast = discrete_action(&hist, 0.07, 0.6, &l).unwrap();
            assert!((fast - slow_action(&hist, 0.07, 0.6, &l)).abs() < 1e-12 * fast.abs().max(1.0));
        }
    }

    #[test]
    fn brute_force_equals_transfer_single_site() {
        let cfg = LatticeConfig::new(1, 1.0, 8, 6.0, 1.0).unwrap();
        let l = LagrangianSpec::scalar(1.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let psi = random_state(cfg, &mut rng);
        for kernel in [Kernel::FresnelExact, Kernel::LagrangianRiemann] {
            let spec = PathIntegralSpec {
                steps: 2,
                dt: 0.1,
                kernel,
                scheme: DerivativeScheme::Spectral,
            };
            let t = TransferOperator::new(&l, &cfg, &spec).unwrap().apply_n(&psi, 3).unwrap();
            let b = brute_force_state(&psi, &spec, &l).unwrap();
            for (x, y) in b.amps.iter().zip(&t.amps) {
                assert!((x - y).norm() < 1e-12, "{kernel:?}");
            }
        }
    }

    #[test]
    fn riemann_weight_is_literal_action_phase() {
        let cfg = LatticeConfig::new(2, 0.8, 4, 4.0, 1.0).unwrap();
        let l = LagrangianSpec::new(0.5, 0.2, -0.5, Poly::new(vec![0.0, 0.1, 0.5])).unwrap();
        let spec = PathIntegralSpec {
            steps: 0,
            dt: 0.2,
            kernel: Kernel::LagrangianRiemann,
            scheme: DerivativeScheme::Spectral,
        };
        let start = 5;
        let psi = WaveFunctional::basis(cfg, start);
        let end = [3usize, 0];
        let got = brute_force_feynman(&psi, &end, &spec, &l).unwrap();
        let hist = vec![cfg.field(start), end.iter().map(|&k| cfg.grid_value(k)).collect()];
        let s = discrete_action(&hist, spec.dt, cfg.spacing, &l).unwrap();
        let want = spec.riemann_measure(&cfg, &l).powi(2) * Complex64::from_polar(1.0, s / cfg.h);
        assert!((got - want).norm() < 1e-12 * want.norm());
    }

    #[test]
    fn enumeration_guard() {
        let cfg = LatticeConfig::new(2, 1.0, 64, 6.0, 1.0).unwrap();
        let psi = WaveFunctional::basis(cfg, 0);
        let spec = PathIntegralSpec {
            steps: 3,
            dt: 0.1,
            kernel: Kernel::FresnelExact,
            scheme: DerivativeScheme::Spectral,
        };
        assert!(matches!(
            brute_force_feynman(&psi, &[0, 0], &spec, &LagrangianSpec::scalar(1.0, 0.0)),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn amplitude_is_linear() {
        let cfg = LatticeConfig::new(1, 1.0, 8, 6.0, 1.0).unwrap();
        let l = LagrangianSpec::scalar(1.0, 0.1);
        let spec = PathIntegralSpec {
            steps: 1,
            dt: 0.1,
            kernel: Kernel::LagrangianRiemann,
            scheme: DerivativeScheme::Spectral,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (x, y) = (random_state(cfg, &mut rng), random_state(cfg, &mut rng));
        let (alpha, beta) = (Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
        let mut combo = x.clone();
        combo.scale(alpha);
        combo.axpy(beta, &y).unwrap();
        for end in 0..cfg.q {
            let lhs = brute_force_feynman(&combo, &[end], &spec, &l).unwrap();
            let rhs = alpha * brute_force_feynman(&x, &[end], &spec, &l).unwrap()
                + beta * brute_force_feynman(&y, &[end], &spec, &l).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn fresnel_free_step_is_exact_propagator() {
        let cfg = LatticeConfig::new(1, 1.0, 64, 12.0, 1.0).unwrap();
        let l = LagrangianSpec::new(0.5, 0.0, 0.0, Poly::zero()).unwrap();
        let spec = PathIntegralSpec {
            steps: 0,
            dt: 0.3,
            kernel: Kernel::FresnelExact,
            scheme: DerivativeScheme::Spectral,
        };
        let psi = init_wavefunctional(&GaussianStateSpec::product(vec![0.5], 1.0), &cfg).unwrap();
        let t = TransferOperator::new(&l, &cfg, &spec).unwrap().apply_state(&psi).unwrap();
        let op = compile_hamiltonian(&legendre_transform(&l).unwrap(), &cfg, None, CompileOptions::default()).unwrap();
        let e = evolve_exact(&op, &psi, 0.3).unwrap();
        assert!(t.distance(&e).unwrap() < 1e-8);
    }

    #[test]
    fn zero_time_ladder() {
        let rep = feynman_vs_schrodinger(
            &GaussianStateSpec::product(vec![0.3], 1.0),
            &LagrangianSpec::scalar(1.0, 0.1),
            LadderBase {
                sites: 1,
                spacing: 1.0,
                extent: 10.0,
                h: 1.0,
            },
            0.0,
            &[(0.1, 32)],
            Kernel::FresnelExact,
            DerivativeScheme::Spectral,
        )
        .unwrap();
        assert_eq!(rep.levels[0].distance, 0.0);
    }
}
