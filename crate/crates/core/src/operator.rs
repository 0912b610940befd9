//! Lattice realization of a Hamiltonian density.
//!
//! The dictionary from the continuum is
//!
//! * `delta / delta z(x)  ->  (1/a) d/dz_j`, so `p_j = -i (h/a) d/dz_j`;
//! * `z_s  ->  D_j = (z_{j+1} - z_j) / a` with periodic wrap;
//! * `integral dx  ->  a * sum_j`.
//!
//! Derivatives in a site variable act along one axis of the state array and
//! are applied through the discrete Fourier transform of that axis. The
//! spectral scheme uses the exact symbols `k` and `k^2`; the finite-difference
//! scheme uses the symbols of the 3-point stencils, which are circulant on the
//! periodic field grid and so share the same transform path.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lagrangian::HamiltonianDensity;
use crate::lattice::{raw_inner, LatticeConfig, WaveFunctional};
use crate::par;
use crate::poly::Poly;

/// Lines per parallel work item in axis transforms.
const LINES_PER_TASK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeScheme {
    #[default]
    Spectral,
    FiniteDifference,
}

/// How a product of `p_j` with a factor depending on `z_j` is ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingRule {
    /// `(AB + BA) / 2`.
    #[default]
    Symmetrize,
    /// Refuse non-commuting products.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompileOptions {
    pub scheme: DerivativeScheme,
    pub ordering: OrderingRule,
}

/// One tagged piece of the lattice operator. Coefficients include the factor `a`.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorTerm {
    /// `quadratic * p_j^2 + linear * p_j`.
    Kinetic { site: usize, quadratic: f64, linear: f64 },
    /// Multiplication by `V(z_j)`.
    Potential { site: usize, poly: Poly },
    /// Multiplication by `quadratic * D_j^2 + linear * D_j`.
    GradientCoupling { site: usize, quadratic: f64, linear: f64 },
    /// `coeff * (p_j D_j + D_j p_j) / 2`.
    Cross { site: usize, coeff: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct SiteTerms {
    site: usize,
    p2: f64,
    p1: f64,
    cross: f64,
    d2: f64,
    d1: f64,
    potential: Poly,
}

/// Compiled operator applier for `sum_j a H_j`.
#[derive(Clone)]
pub struct LatticeHamiltonian {
    cfg: LatticeConfig,
    scheme: DerivativeScheme,
    sites: Vec<SiteTerms>,
    diagonal: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LatticeHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatticeHamiltonian")
            .field("cfg", &self.cfg)
            .field("scheme", &self.scheme)
            .field("terms", &self.terms())
            .finish()
    }
}

/// Average of the two link slopes adjacent to each site.
pub fn site_slopes(link_slopes: &[f64]) -> Vec<f64> {
    let n = link_slopes.len();
    (0..n)
        .map(|j| 0.5 * (link_slopes[(j + n - 1) % n] + link_slopes[j]))
        .collect()
}

/// Compiles `H` on the lattice. `link_slopes[j]` is the slope of link `j -> j+1`;
/// `None` means a flat slice.
pub fn compile_hamiltonian(
    h: &HamiltonianDensity,
    cfg: &LatticeConfig,
    link_slopes: Option<&[f64]>,
    opts: CompileOptions,
) -> Result<LatticeHamiltonian> {
    cfg.validate()?;
    let n = cfg.sites;
    let links = match link_slopes {
        Some(s) if s.len() != n => {
            return Err(Error::ShapeMismatch(format!("{} link slopes for {n} sites", s.len())))
        }
        Some(s) => s.to_vec(),
        None => vec![0.0; n],
    };
    for (link, &v) in links.iter().enumerate() {
        if !(v.abs() < 1.0) {
            return Err(Error::NotSpacelike { link, slope: v });
        }
    }
    let a = cfg.spacing;
    let mut sites = Vec::with_capacity(n);
    for (j, v) in site_slopes(&links).into_iter().enumerate() {
        let c = h.at_slope(v)?;
        // On a single site the forward difference wraps onto itself and vanishes.
        let (cross, d2, d1) = if n == 1 { (0.0, 0.0, 0.0) } else { (c.p_zs, c.zs2, c.zs1) };
        if cross != 0.0 && opts.ordering == OrderingRule::Reject {
            return Err(Error::UnsupportedOrdering(format!(
                "p_{j} multiplies (z_{{j+1}} - z_{j})/a at slope {v}"
            )));
        }
        let mut potential = h.potential.clone();
        potential.set_coeff(0, potential.coeff(0) + c.c0);
        sites.push(SiteTerms {
            site: j,
            p2: a * c.p2,
            p1: a * c.p1,
            cross: a * cross,
            d2: a * d2,
            d1: a * d1,
            potential: potential.scaled(a),
        });
    }
    Ok(LatticeHamiltonian::from_sites(*cfg, opts.scheme, sites))
}

impl LatticeHamiltonian {
    fn from_sites(cfg: LatticeConfig, scheme: DerivativeScheme, sites: Vec<SiteTerms>) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(cfg.q);
        let inverse = planner.plan_fft_inverse(cfg.q);
        let mut diagonal = vec![0.0; cfg.dim()];
        let grid = cfg.grid();
        par::fill_indexed(&mut diagonal, |idx| {
            sites
                .iter()
                .map(|s| {
                    let z = grid[cfg.site_index(idx, s.site)];
                    let d = link_difference(&cfg, &grid, idx, s.site);
                    s.potential.eval(z) + s.d2 * d * d + s.d1 * d
                })
                .sum()
        });
        LatticeHamiltonian {
            cfg,
            scheme,
            sites,
            diagonal,
            forward,
            inverse,
        }
    }

    pub fn cfg(&self) -> &LatticeConfig {
        &self.cfg
    }

    pub fn scheme(&self) -> DerivativeScheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    /// The tagged terms, site by site.
    pub fn terms(&self) -> Vec<OperatorTerm> {
        let mut out = Vec::new();
        for s in &self.sites {
            if s.p2 != 0.0 || s.p1 != 0.0 {
                out.push(OperatorTerm::Kinetic {
                    site: s.site,
                    quadratic: s.p2,
                    linear: s.p1,
                });
            }
            if s.potential.degree().is_some() {
                out.push(OperatorTerm::Potential {
                    site: s.site,
                    poly: s.potential.clone(),
                });
            }
            if s.d2 != 0.0 || s.d1 != 0.0 {
                out.push(OperatorTerm::GradientCoupling {
                    site: s.site,
                    quadratic: s.d2,
                    linear: s.d1,
                });
            }
            if s.cross != 0.0 {
                out.push(OperatorTerm::Cross {
                    site: s.site,
                    coeff: s.cross,
                });
            }
        }
        out
    }

    /// True when no cross terms are present: kinetic plus diagonal.
    pub fn is_separable(&self) -> bool {
        self.sites.iter().all(|s| s.cross == 0.0)
    }

    pub fn has_kinetic(&self) -> bool {
        self.sites.iter().any(|s| s.p2 != 0.0 || s.p1 != 0.0)
    }

    /// Multiplication part: potential plus gradient coupling.
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Only the terms belonging to `site`.
    pub fn restrict_to_site(&self, site: usize) -> LatticeHamiltonian {
        let sites = self.sites.iter().filter(|s| s.site == site).cloned().collect();
        LatticeHamiltonian::from_sites(self.cfg, self.scheme, sites)
    }

    /// Fourier symbols `(s1, s2)` of `d/dz` (as `i s1`) and `-d^2/dz^2` (as `s2`).
    pub fn derivative_symbols(&self) -> (Vec<f64>, Vec<f64>) {
        derivative_symbols(&self.cfg, self.scheme)
    }

    /// Eigenvalues of the kinetic term of `site` in its Fourier basis.
    pub fn kinetic_symbol(&self, site: usize) -> Vec<f64> {
        let (s1, s2) = self.derivative_symbols();
        let hp = self.cfg.h / self.cfg.spacing;
        let (p2, p1) = self
            .sites
            .iter()
            .filter(|s| s.site == site)
            .fold((0.0, 0.0), |acc, s| (acc.0 + s.p2, acc.1 + s.p1));
        (0..self.cfg.q)
            .map(|m| p2 * hp * hp * s2[m] + p1 * hp * s1[m])
            .collect()
    }

    /// Multiplies each line along `site` by `mult` in the Fourier basis.
    pub fn axis_multiply(&self, input: &[Complex64], site: usize, mult: &[Complex64]) -> Vec<Complex64> {
        let q = self.cfg.q;
        let stride = self.cfg.stride(site);
        let n = input.len();
        let scale = 1.0 / q as f64;
        let mut lines = vec![Complex64::new(0.0, 0.0); n];
        par::for_each_chunk(&mut lines, q * LINES_PER_TASK, |chunk_idx, chunk| {
            let first = chunk_idx * LINES_PER_TASK;
            for (l, line) in chunk.chunks_mut(q).enumerate() {
                let base = line_base(first + l, stride, q);
                for (k, x) in line.iter_mut().enumerate() {
                    *x = input[base + k * stride];
                }
            }
            self.forward.process(chunk);
            for line in chunk.chunks_mut(q) {
                for (x, m) in line.iter_mut().zip(mult) {
                    *x *= m * scale;
                }
            }
            self.inverse.process(chunk);
        });
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        par::fill_indexed(&mut out, |g| {
            let k = (g / stride) % q;
            let line = (g / (stride * q)) * stride + g % stride;
            lines[line * q + k]
        });
        out
    }

    /// `p_j psi`.
    pub fn momentum(&self, psi: &[Complex64], site: usize) -> Vec<Complex64> {
        let (s1, _) = self.derivative_symbols();
        let hp = self.cfg.h / self.cfg.spacing;
        let mult: Vec<Complex64> = s1.iter().map(|s| Complex64::new(hp * s, 0.0)).collect();
        self.axis_multiply(psi, site, &mult)
    }

    /// `H psi`.
    pub fn apply(&self, psi: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        self.apply_into(psi, &mut out);
        out
    }

    pub fn apply_into(&self, psi: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(psi.len(), self.dim());
        par::fill_indexed(out, |i| psi[i] * self.diagonal[i]);
        for s in &self.sites {
            if s.p2 != 0.0 || s.p1 != 0.0 {
                let mult: Vec<Complex64> = self
                    .kinetic_symbol_for(s)
                    .into_iter()
                    .map(|x| Complex64::new(x, 0.0))
                    .collect();
                let t = self.axis_multiply(psi, s.site, &mult);
                out.iter_mut().zip(&t).for_each(|(o, x)| *o += x);
            }
            if s.cross != 0.0 {
                let d = self.link_differences(s.site);
                let dpsi: Vec<Complex64> = psi.iter().zip(&d).map(|(x, d)| x * d).collect();
                let a = self.momentum(&dpsi, s.site);
                let b = self.momentum(psi, s.site);
                let half = 0.5 * s.cross;
                out.iter_mut()
                    .zip(a.iter().zip(&b).zip(&d))
                    .for_each(|(o, ((a, b), d))| *o += half * (a + b * d));
            }
        }
    }

    fn kinetic_symbol_for(&self, s: &SiteTerms) -> Vec<f64> {
        let (s1, s2) = self.derivative_symbols();
        let hp = self.cfg.h / self.cfg.spacing;
        (0..self.cfg.q)
            .map(|m| s.p2 * hp * hp * s2[m] + s.p1 * hp * s1[m])
            .collect()
    }

    /// `D_site` evaluated at every grid configuration.
    pub fn link_differences(&self, site: usize) -> Vec<f64> {
        let grid = self.cfg.grid();
        let mut d = vec![0.0; self.dim()];
        par::fill_indexed(&mut d, |idx| link_difference(&self.cfg, &grid, idx, site));
        d
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

    /// `<psi|H|psi> / <psi|psi>`.
    pub fn expectation(&self, psi: &WaveFunctional) -> Result<f64> {
        let hpsi = self.apply_state(psi)?;
        let num = raw_inner(&psi.amps, &hpsi.amps);
        let den = raw_inner(&psi.amps, &psi.amps);
        Ok(num.re / den.re)
    }

    /// Dense matrix assembled column by column from the applier.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = self.dim();
        let cols = par::map_range(dim, |c| {
            let mut e = vec![Complex64::new(0.0, 0.0); dim];
            e[c] = Complex64::new(1.0, 0.0);
            self.apply(&e)
        });
        DMatrix::from_fn(dim, dim, |r, c| cols[c][r])
    }
}

impl LatticeHamiltonian {
    /// Site whose axis carries every derivative term, if there is exactly one.
    pub fn single_axis(&self) -> Option<usize> {
        let mut axes = self
            .sites
            .iter()
            .filter(|s| s.p2 != 0.0 || s.p1 != 0.0 || s.cross != 0.0)
            .map(|s| s.site);
        let first = axes.next()?;
        axes.all(|s| s == first).then_some(first)
    }

    /// `exp(-i t H / h) psi` for an operator whose derivatives all act along
    /// one axis (a single-site density, say). Such an operator is block
    /// diagonal in lines along that axis, so each `Q x Q` block is
    /// exponentiated exactly.
    pub fn propagate_single_axis(&self, psi: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
        assert_eq!(psi.len(), self.dim());
        let Some(site) = self.single_axis() else {
            if self.has_kinetic() {
                return Err(Error::NonSeparableHamiltonian);
            }
            let h = self.cfg.h;
            return Ok(psi
                .iter()
                .zip(&self.diagonal)
                .map(|(x, d)| x * Complex64::from_polar(1.0, -t * d / h))
                .collect());
        };
        let q = self.cfg.q;
        let stride = self.cfg.stride(site);
        let hp = self.cfg.h / self.cfg.spacing;
        let (s1, _) = self.derivative_symbols();
        let own: Vec<&SiteTerms> = self.sites.iter().filter(|s| s.site == site).collect();
        let kinetic = circulant(&self.kinetic_symbol(site));
        let momentum = circulant(&s1.iter().map(|x| hp * x).collect::<Vec<_>>());
        let cross: f64 = own.iter().map(|s| s.cross).sum();
        let d = if cross != 0.0 { self.link_differences(site) } else { Vec::new() };
        let lines = self.dim() / q;
        let h = self.cfg.h;
        let blocks = par::map_range(lines, |l| {
            let base = line_base(l, stride, q);
            let mut m = kinetic.clone();
            for k in 0..q {
                m[(k, k)] += self.diagonal[base + k * stride];
            }
            if cross != 0.0 {
                for r in 0..q {
                    for c in 0..q {
                        let dd = d[base + r * stride] + d[base + c * stride];
                        m[(r, c)] += 0.5 * cross * momentum[(r, c)] * dd;
                    }
                }
            }
            let eig = m.symmetric_eigen();
            let x = nalgebra::DVector::from_iterator(q, (0..q).map(|k| psi[base + k * stride]));
            let mut c = eig.eigenvectors.adjoint() * x;
            for (ci, e) in c.iter_mut().zip(eig.eigenvalues.iter()) {
                *ci *= Complex64::from_polar(1.0, -t * e / h);
            }
            eig.eigenvectors * c
        });
        let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
        par::fill_indexed(&mut out, |g| {
            let k = (g / stride) % q;
            let line = (g / (stride * q)) * stride + g % stride;
            blocks[line][k]
        });
        Ok(out)
    }
}

/// Dense `F^-1 diag(symbol) F` on one axis.
fn circulant(symbol: &[f64]) -> DMatrix<Complex64> {
    let q = symbol.len();
    DMatrix::from_fn(q, q, |r, c| {
        let shift = (r + q - c) % q;
        symbol
            .iter()
            .enumerate()
            .map(|(m, s)| s * Complex64::from_polar(1.0, 2.0 * PI * (m * shift) as f64 / q as f64))
            .sum::<Complex64>()
            / q as f64
    })
}

fn line_base(line: usize, stride: usize, q: usize) -> usize {
    let outer = line / stride;
    let inner = line % stride;
    outer * stride * q + inner
}

fn link_difference(cfg: &LatticeConfig, grid: &[f64], idx: usize, site: usize) -> f64 {
    let next = (site + 1) % cfg.sites;
    (grid[cfg.site_index(idx, next)] - grid[cfg.site_index(idx, site)]) / cfg.spacing
}

pub(crate) fn derivative_symbols(cfg: &LatticeConfig, scheme: DerivativeScheme) -> (Vec<f64>, Vec<f64>) {
    let q = cfg.q;
    let dz = cfg.dz();
    let mut s1 = vec![0.0; q];
    let mut s2 = vec![0.0; q];
    for m in 0..q {
        let signed = if m < q / 2 { m as f64 } else { m as f64 - q as f64 };
        let k = 2.0 * PI * signed / cfg.extent;
        match scheme {
            DerivativeScheme::Spectral => {
                s1[m] = if m == q / 2 { 0.0 } else { k };
                s2[m] = k * k;
            }
            DerivativeScheme::FiniteDifference => {
                s1[m] = (k * dz).sin() / dz;
                s2[m] = (2.0 - 2.0 * (k * dz).cos()) / (dz * dz);
            }
        }
    }
    (s1, s2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{legendre_transform, LagrangianSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_axis_propagator_matches_dense_exponential() {
        let cfg = LatticeConfig::new(2, 1.0, 8, 6.0, 1.0).unwrap();
        let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.1)).unwrap();
        let full = compile_hamiltonian(&h, &cfg, Some(&[0.4, -0.3]), CompileOptions::default()).unwrap();
        let local = full.restrict_to_site(1);
        assert_eq!(local.single_axis(), Some(1));
        assert_eq!(full.single_axis(), None);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let psi = random_vec(cfg.dim(), &mut rng);
        let got = local.propagate_single_axis(&psi, 0.37).unwrap();
        // Oracle: dense Hermitian eigendecomposition of the full matrix.
        let dense = local.to_dense();
        let eig = ((&dense + dense.adjoint()) * Complex64::new(0.5, 0.0)).symmetric_eigen();
        let x = nalgebra::DVector::from_column_slice(&psi);
        let mut c = eig.eigenvectors.adjoint() * x;
        for (ci, e) in c.iter_mut().zip(eig.eigenvalues.iter()) {
            *ci *= Complex64::from_polar(1.0, -0.37 * e);
        }
        let want = eig.eigenvectors * c;
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).norm() < 1e-11);
        }
        assert!(matches!(full.propagate_single_axis(&psi, 0.1), Err(Error::NonSeparableHamiltonian)));
    }

    fn random_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..dim)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    /// Independent dense construction: explicit DFT sums for `-d^2`, stencil
    /// for the finite-difference scheme, diagonal pieces written out directly.
    fn dense_oracle(cfg: &LatticeConfig, mass: f64, scheme: DerivativeScheme) -> DMatrix<f64> {
        let q = cfg.q;
        let dz = cfg.dz();
        let mut lap = DMatrix::<f64>::zeros(q, q);
        for r in 0..q {
            for c in 0..q {
                lap[(r, c)] = match scheme {
                    DerivativeScheme::Spectral => {
                        let mut acc = 0.0;
                        for m in 0..q {
                            let sm = if m < q / 2 { m as f64 } else { m as f64 - q as f64 };
                            let k = 2.0 * PI * sm / cfg.extent;
                            acc += k * k * (k * dz * (r as f64 - c as f64)).cos();
                        }
                        acc / q as f64
                    }
                    DerivativeScheme::FiniteDifference => {
                        let d = (r + q - c) % q;
                        if d == 0 {
                            2.0 / (dz * dz)
                        } else if d == 1 || d == q - 1 {
                            -1.0 / (dz * dz)
                        } else {
                            0.0
                        }
                    }
                };
            }
        }
        let a = cfg.spacing;
        let kin = 0.5 * cfg.h * cfg.h / a;
        let dim = cfg.dim();
        let n = cfg.sites;
        DMatrix::from_fn(dim, dim, |r, c| {
            let kr = cfg.unflatten(r);
            let kc = cfg.unflatten(c);
            let mut v = 0.0;
            for j in 0..n {
                let others_equal = (0..n).filter(|&i| i != j).all(|i| kr[i] == kc[i]);
                if others_equal {
                    v += kin * lap[(kr[j], kc[j])];
                }
            }
            if r == c {
                let z: Vec<f64> = kr.iter().map(|&k| cfg.grid_value(k)).collect();
                for j in 0..n {
                    let d = (z[(j + 1) % n] - z[j]) / a;
                    v += a * (0.5 * mass * mass * z[j] * z[j] + if n > 1 { 0.5 * d * d } else { 0.0 });
                }
            }
            v
        })
    }

    #[test]
    fn free_operator_matches_dense_oracle() {
        let cfg = LatticeConfig::new(2, 1.0, 4, 4.0, 1.0).unwrap();
        let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.0)).unwrap();
        for scheme in [DerivativeScheme::Spectral, DerivativeScheme::FiniteDifference] {
            let op = compile_hamiltonian(&h, &cfg, None, CompileOptions { scheme, ..Default::default() }).unwrap();
            let dense = op.to_dense();
            let oracle = dense_oracle(&cfg, 1.0, scheme);
            for r in 0..16 {
                for c in 0..16 {
                    assert!((dense[(r, c)] - Complex64::new(oracle[(r, c)], 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn potential_only_is_diagonal() {
        let cfg = LatticeConfig::new(2, 0.7, 8, 6.0, 1.0).unwrap();
        let pot = Poly::new(vec![0.1, 0.0, 0.5, 0.0, 0.2]);
        let h = HamiltonianDensity::potential_only(pot.clone());
        let op = compile_hamiltonian(&h, &cfg, None, CompileOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random_vec(cfg.dim(), &mut rng);
        let out = op.apply(&psi);
        for (idx, (o, p)) in out.iter().zip(&psi).enumerate() {
            let v: f64 = cfg.field(idx).iter().map(|&z| cfg.spacing * pot.eval(z)).sum();
            assert!((o - p * v).norm() < 1e-12);
        }
        assert!(op.terms().iter().all(|t| matches!(t, OperatorTerm::Potential { .. })));
    }

    #[test]
    fn sloped_operator_is_hermitian() {
        let cfg = LatticeConfig::new(2, 1.0, 8, 6.0, 1.0).unwrap();
        let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.0)).unwrap();
        let op = compile_hamiltonian(&h, &cfg, Some(&[0.5, 0.5]), CompileOptions::default()).unwrap();
        assert!(!op.is_separable());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let phi = random_vec(cfg.dim(), &mut rng);
            let psi = random_vec(cfg.dim(), &mut rng);
            let lhs = raw_inner(&phi, &op.apply(&psi));
            let rhs = raw_inner(&psi, &op.apply(&phi)).conj();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn linear_in_state() {
        let cfg = LatticeConfig::new(3, 1.0, 8, 6.0, 1.0).unwrap();
        let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.1)).unwrap();
        let op = compile_hamiltonian(&h, &cfg, Some(&[0.3, -0.2, -0.1]), CompileOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_vec(cfg.dim(), &mut rng);
        let y = random_vec(cfg.dim(), &mut rng);
        let (alpha, beta) = (Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4));
        let combo: Vec<Complex64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = op.apply(&combo);
        let (hx, hy) = (op.apply(&x), op.apply(&y));
        let scale = lhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..lhs.len() {
            assert!((lhs[i] - (alpha * hx[i] + beta * hy[i])).norm() < 1e-12 * scale);
        }
    }

    #[test]
    fn continuity_at_small_slope() {
        let cfg = LatticeConfig::new(2, 1.0, 16, 8.0, 1.0).unwrap();
        let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.0)).unwrap();
        let flat = compile_hamiltonian(&h, &cfg, None, CompileOptions::default()).unwrap();
        let sloped = compile_hamiltonian(&h, &cfg, Some(&[1e-8, 1e-8]), CompileOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let x = random_vec(cfg.dim(), &mut rng);
            let nx = raw_inner(&x, &x).re.sqrt();
            let d: Vec<Complex64> = flat.apply(&x).iter().zip(sloped.apply(&x)).map(|(a, b)| a - b).collect();
            worst = worst.max(raw_inner(&d, &d).re.sqrt() / nx);
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn ordering_rule_reject() {
        let cfg = LatticeConfig::new(2, 1.0, 8, 6.0, 1.0).unwrap();
        let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.0)).unwrap();
        let opts = CompileOptions {
            ordering: OrderingRule::Reject,
            ..Default::default()
        };
        assert!(compile_hamiltonian(&h, &cfg, None, opts).is_ok());
        // Opposite link slopes average to zero at both sites.
        assert!(compile_hamiltonian(&h, &cfg, Some(&[0.2, -0.2]), opts).is_ok());
        assert!(matches!(
            compile_hamiltonian(&h, &cfg, Some(&[0.2, 0.2]), opts),
            Err(Error::UnsupportedOrdering(_))
        ));
    }

    #[test]
    fn light_like_link_rejected() {
        let cfg = LatticeConfig::new(2, 1.0, 8, 6.0, 1.0).unwrap();
        let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.0)).unwrap();
        assert!(matches!(
            compile_hamiltonian(&h, &cfg, Some(&[1.0, -1.0]), CompileOptions::default()),
            Err(Error::NotSpacelike { link: 0, .. })
        ));
    }

    #[test]
    fn site_sum_equals_full_operator() {
        let cfg = LatticeConfig::new(3, 1.0, 8, 6.0, 1.0).unwrap();
        let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.1)).unwrap();
        let op = compile_hamiltonian(&h, &cfg, None, CompileOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_vec(cfg.dim(), &mut rng);
        let full = op.apply(&x);
        let mut sum = vec![Complex64::new(0.0, 0.0); x.len()];
        for j in 0..3 {
            let part = op.restrict_to_site(j).apply(&x);
            sum.iter_mut().zip(part).for_each(|(s, p)| *s += p);
        }
        for (a, b) in full.iter().zip(&sum) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
