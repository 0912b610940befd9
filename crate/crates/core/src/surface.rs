//! Many-fingered time: evolution between spacelike surfaces.
//!
//! A surface is a time `t_j` per site. An elementary deformation advances one
//! site by `dt` and acts on the state with `exp(-i dt a H_j / h)`, where the
//! local density `H_j` is compiled with the slopes of the two links touching
//! site `j`. Those slopes are taken on the midpoint surface (`t_j + dt/2`), so
//! a step followed by its negation is the identity.

use serde::{Deserialize, Serialize};

use crate::convergence::{fit_order, successive_ratios};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::evolve::crank_nicolson_step;
use crate::lagrangian::HamiltonianDensity;
use crate::lattice::{LatticeConfig, WaveFunctional};
use crate::operator::{compile_hamiltonian, CompileOptions, LatticeHamiltonian};

/// Successive discrepancy ratios below this are flagged.
pub const MIN_HALVING_RATIO: f64 = 1.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacelikeSurface {
    pub times: Vec<f64>,
    pub spacing: f64,
}

impl SpacelikeSurface {
    pub fn new(times: Vec<f64>, spacing: f64) -> Result<Self> {
        let s = SpacelikeSurface { times, spacing };
        s.validate()?;
        Ok(s)
    }

    pub fn flat(sites: usize, t: f64, spacing: f64) -> Self {
        SpacelikeSurface {
            times: vec![t; sites],
            spacing,
        }
    }

    pub fn sites(&self) -> usize {
        self.times.len()
    }

    /// `(t_{j+1} - t_j) / a`, periodic.
    pub fn link_slopes(&self) -> Vec<f64> {
        let n = self.times.len();
        (0..n)
            .map(|j| (self.times[(j + 1) % n] - self.times[j]) / self.spacing)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() || !(self.spacing > 0.0) {
            return Err(Error::InvalidSchedule("surface needs sites and a positive spacing".into()));
        }
        for (link, v) in self.link_slopes().into_iter().enumerate() {
            if !(v.abs() < 1.0) {
                return Err(Error::NotSpacelike { link, slope: v });
            }
        }
        Ok(())
    }

    pub fn advanced(&self, site: usize, dt: f64) -> Self {
        let mut s = self.clone();
        s.times[site] += dt;
        s
    }

    pub fn is_flat(&self) -> bool {
        self.times.iter().all(|&t| t == self.times[0])
    }

    /// Largest per-site time difference.
    pub fn distance(&self, other: &SpacelikeSurface) -> f64 {
        self.times
            .iter()
            .zip(&other.times)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Exponentiation of a single-site density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Line-by-line eigendecomposition; exact at any lattice size.
    #[default]
    Exact,
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformOptions {
    pub integrator: Integrator,
    pub compile: CompileOptions,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DeformOptions {
    fn default() -> Self {
        DeformOptions {
            integrator: Integrator::Exact,
            compile: CompileOptions::default(),
            tolerance: 1e-12,
            max_iterations: 1000,
        }
    }
}

/// `a H_j` compiled with the slopes of `surface`; only site `j` terms survive.
pub fn local_density_operator(
    h: &HamiltonianDensity,
    cfg: &LatticeConfig,
    surface: &SpacelikeSurface,
    site: usize,
    opts: CompileOptions,
) -> Result<LatticeHamiltonian> {
    check_surface(cfg, surface)?;
    if site >= cfg.sites {
        return Err(Error::ShapeMismatch(format!("site {site} on {} sites", cfg.sites)));
    }
    let full = compile_hamiltonian(h, cfg, Some(&surface.link_slopes()), opts)?;
    Ok(full.restrict_to_site(site))
}

fn check_surface(cfg: &LatticeConfig, surface: &SpacelikeSurface) -> Result<()> {
    if surface.sites() != cfg.sites || surface.spacing != cfg.spacing {
        return Err(Error::ShapeMismatch("surface does not match the lattice".into()));
    }
    surface.validate()
}

/// Advances site `site` by `dt`.
pub fn deform_step(
    h: &HamiltonianDensity,
    psi: &WaveFunctional,
    surface: &SpacelikeSurface,
    site: usize,
    dt: f64,
    opts: &DeformOptions,
) -> Result<(WaveFunctional, SpacelikeSurface)> {
    check_surface(&psi.cfg, surface)?;
    let next = surface.advanced(site, dt);
    next.validate()?;
    if dt == 0.0 {
        return Ok((psi.clone(), next));
    }
    let mid = surface.advanced(site, 0.5 * dt);
    let op = local_density_operator(h, &psi.cfg, &mid, site, opts.compile)?;
    let amps = match opts.integrator {
        Integrator::Exact => op.propagate_single_axis(&psi.amps, dt)?,
        Integrator::CrankNicolson => crank_nicolson_step(&op, &psi.amps, dt, opts.tolerance, opts.max_iterations)?,
    };
    Ok((WaveFunctional { cfg: psi.cfg, amps }, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deformation {
    pub site: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    LeftToRight,
    RightToLeft,
}

/// Ordered list of elementary deformations from a start surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationSchedule {
    pub start: SpacelikeSurface,
    pub steps: Vec<Deformation>,
}

impl DeformationSchedule {
    /// Checks every intermediate surface.
    pub fn new(start: SpacelikeSurface, steps: Vec<Deformation>) -> Result<Self> {
        start.validate()?;
        let mut s = start.clone();
        for d in &steps {
            if d.site >= s.sites() || !d.dt.is_finite() {
                return Err(Error::InvalidSchedule(format!("bad deformation {d:?}")));
            }
            s = s.advanced(d.site, d.dt);
            s.validate()?;
        }
        Ok(DeformationSchedule { start, steps })
    }

    /// `sweeps` passes, each advancing every site by `dt` in the given order.
    pub fn sweeps(start: SpacelikeSurface, dt: f64, sweeps: usize, order: SweepOrder) -> Result<Self> {
        let n = start.sites();
        let sites: Vec<usize> = match order {
            SweepOrder::LeftToRight => (0..n).collect(),
            SweepOrder::RightToLeft => (0..n).rev().collect(),
        };
        let steps = (0..sweeps)
            .flat_map(|_| sites.iter().map(|&site| Deformation { site, dt }))
            .collect();
        DeformationSchedule::new(start, steps)
    }

    /// Flat `t0` to flat `t0 + duration` in sweeps of `dt`; `duration / dt` must be whole.
    pub fn flat_to_flat(
        sites: usize,
        spacing: f64,
        t0: f64,
        duration: f64,
        dt: f64,
        order: SweepOrder,
    ) -> Result<Self> {
        let count = duration / dt;
        let sweeps = count.round();
        if !(dt > 0.0) || (count - sweeps).abs() > 1e-9 * count.max(1.0) {
            return Err(Error::InvalidSchedule(format!("{duration} is not a whole number of steps {dt}")));
        }
        Self::sweeps(SpacelikeSurface::flat(sites, t0, spacing), dt, sweeps as usize, order)
    }

    pub fn end(&self) -> SpacelikeSurface {
        self.steps
            .iter()
            .fold(self.start.clone(), |s, d| s.advanced(d.site, d.dt))
    }

    /// Runs backwards from `end()` to `start` with negated steps.
    pub fn reversed(&self) -> Self {
        DeformationSchedule {
            start: self.end(),
            steps: self
                .steps
                .iter()
                .rev()
                .map(|d| Deformation { site: d.site, dt: -d.dt })
                .collect(),
        }
    }
}

/// Folds [`deform_step`] over the schedule.
pub fn run_schedule(
    h: &HamiltonianDensity,
    psi0: &WaveFunctional,
    schedule: &DeformationSchedule,
    opts: &DeformOptions,
) -> Result<WaveFunctional> {
    let mut psi = psi0.clone();
    let mut surface = schedule.start.clone();
    for d in &schedule.steps {
        let (p, s) = deform_step(h, &psi, &surface, d.site, d.dt, opts)?;
        psi = p;
        surface = s;
    }
    Ok(psi)
}

/// Path-independence study of two same-endpoint schedule families.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub dt_values: Vec<f64>,
    pub discrepancies: Vec<f64>,
    pub ratios: Vec<f64>,
    pub fitted_order: f64,
    /// Set when some halving ratio falls below [`MIN_HALVING_RATIO`].
    pub flagged: bool,
    pub spec_hash: String,
}

/// Runs `schedule_a(dt)` and `schedule_b(dt)` from `psi0` for each `dt` and
/// records `||Psi_A - Psi_B||`.
pub fn integrability_test<A, B>(
    h: &HamiltonianDensity,
    psi0: &WaveFunctional,
    schedule_a: A,
    schedule_b: B,
    dt_values: &[f64],
    opts: &DeformOptions,
) -> Result<IntegrabilityReport>
where
    A: Fn(f64) -> Result<DeformationSchedule>,
    B: Fn(f64) -> Result<DeformationSchedule>,
{
    let mut discrepancies = Vec::with_capacity(dt_values.len());
    let mut fingerprint = Vec::new();
    for &dt in dt_values {
        let (a, b) = (schedule_a(dt)?, schedule_b(dt)?);
        if a.start.distance(&b.start) > 1e-12 || a.end().distance(&b.end()) > 1e-12 {
            return Err(Error::ScheduleMismatch);
        }
        let pa = run_schedule(h, psi0, &a, opts)?;
        let pb = run_schedule(h, psi0, &b, opts)?;
        discrepancies.push(pa.distance(&pb)?);
        fingerprint.push((a, b));
    }
    let ratios = successive_ratios(&discrepancies);
    let flagged = ratios.iter().any(|r| !(*r >= MIN_HALVING_RATIO));
    let identity = serde_json::json!({
        "lattice": psi0.cfg,
        "hamiltonian": h.normal_form(),
        "integrator": opts.integrator,
        "dt_values": dt_values,
        "schedules": fingerprint,
    });
    Ok(IntegrabilityReport {
        dt_values: dt_values.to_vec(),
        fitted_order: fit_order(dt_values, &discrepancies),
        discrepancies,
        ratios,
        flagged,
        spec_hash: sha256_hex(identity.to_string().as_bytes()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{legendre_transform, LagrangianSpec};
    use crate::lattice::{init_wavefunctional, GaussianStateSpec};
    use crate::poly::Poly;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn free() -> HamiltonianDensity {
        legendre_transform(&LagrangianSpec::scalar(1.0, 0.0)).unwrap()
    }

    fn state(cfg: LatticeConfig) -> WaveFunctional {
        let center = (0..cfg.sites).map(|j| 0.3 * j as f64 - 0.2).collect();
        init_wavefunctional(&GaussianStateSpec::product(center, 1.0), &cfg).unwrap()
    }

    #[test]
    fn flat_densities_sum_to_flat_operator() {
        let cfg = LatticeConfig::new(3, 1.0, 4, 5.0, 1.0).unwrap();
        let h = free();
        let flat = SpacelikeSurface::flat(3, 0.0, 1.0);
        let full = compile_hamiltonian(&h, &cfg, None, CompileOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Complex64> = (0..cfg.dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let want = full.apply(&x);
        let mut got = vec![Complex64::new(0.0, 0.0); x.len()];
        for j in 0..3 {
            let op = local_density_operator(&h, &cfg, &flat, j, CompileOptions::default()).unwrap();
            got.iter_mut().zip(op.apply(&x)).for_each(|(g, y)| *g += y);
        }
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).norm() < 1e-12);
        }
    }

    #[test]
    fn light_like_surface_rejected() {
        let s = SpacelikeSurface {
            times: vec![0.0, 1.0, 0.0],
            spacing: 1.0,
        };
        assert!(matches!(s.validate(), Err(Error::NotSpacelike { link: 0, .. })));
        let cfg = LatticeConfig::new(3, 1.0, 4, 5.0, 1.0).unwrap();
        assert!(local_density_operator(&free(), &cfg, &s, 0, CompileOptions::default()).is_err());
    }

    #[test]
    fn sloped_density_is_hermitian() {
        let cfg = LatticeConfig::new(2, 1.0, 8, 6.0, 1.0).unwrap();
        let s = SpacelikeSurface::new(vec![0.0, 0.5], 1.0).unwrap();
        let op = local_density_operator(&free(), &cfg, &s, 0, CompileOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rv = || -> Vec<Complex64> {
            (0..cfg.dim())
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect()
        };
        for _ in 0..10 {
            let (x, y) = (rv(), rv());
            let lhs: Complex64 = x.iter().zip(op.apply(&y)).map(|(a, b)| a.conj() * b).sum();
            let rhs: Complex64 = op.apply(&x).iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn potential_only_steps_commute() {
        let cfg = LatticeConfig::new(3, 1.0, 8, 6.0, 1.0).unwrap();
        let h = HamiltonianDensity::potential_only(Poly::new(vec![0.0, 0.3, 0.5, 0.0, 0.1]));
        let psi = state(cfg);
        let s0 = SpacelikeSurface::flat(3, 0.0, 1.0);
        let opts = DeformOptions::default();
        let (p1, s1) = deform_step(&h, &psi, &s0, 0, 0.2, &opts).unwrap();
        let (p12, _) = deform_step(&h, &p1, &s1, 2, 0.3, &opts).unwrap();
        let (p2, s2) = deform_step(&h, &psi, &s0, 2, 0.3, &opts).unwrap();
        let (p21, _) = deform_step(&h, &p2, &s2, 0, 0.2, &opts).unwrap();
        assert!(p12.distance(&p21).unwrap() < 1e-14);
    }

    #[test]
    fn zero_step_is_identity() {
        let cfg = LatticeConfig::new(2, 1.0, 8, 6.0, 1.0).unwrap();
        let psi = state(cfg);
        let s = SpacelikeSurface::new(vec![0.0, 0.3], 1.0).unwrap();
        let (p, s2) = deform_step(&free(), &psi, &s, 1, 0.0, &DeformOptions::default()).unwrap();
        assert_eq!(p, psi);
        assert_eq!(s2, s);
    }

    #[test]
    fn schedule_then_reverse_is_identity() {
        let cfg = LatticeConfig::new(3, 1.0, 8, 6.0, 1.0).unwrap();
        let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.1)).unwrap();
        let psi = state(cfg);
        let steps = vec![
            Deformation { site: 0, dt: 0.1 },
            Deformation { site: 2, dt: 0.25 },
            Deformation { site: 1, dt: -0.05 },
            Deformation { site: 0, dt: 0.2 },
        ];
        let sched = DeformationSchedule::new(SpacelikeSurface::flat(3, 0.0, 1.0), steps).unwrap();
        for integrator in [Integrator::Exact, Integrator::CrankNicolson] {
            let opts = DeformOptions {
                integrator,
                ..DeformOptions::default()
            };
            let forward = run_schedule(&h, &psi, &sched, &opts).unwrap();
            let back = run_schedule(&h, &forward, &sched.reversed(), &opts).unwrap();
            assert!(back.distance(&psi).unwrap() < 1e-10, "{integrator:?}");
            assert!((forward.norm() - psi.norm()).abs() < 1e-10);
        }
        let empty = DeformationSchedule::new(SpacelikeSurface::flat(3, 0.0, 1.0), vec![]).unwrap();
        assert_eq!(run_schedule(&h, &psi, &empty, &DeformOptions::default()).unwrap(), psi);
    }

    #[test]
    fn schedule_rejects_steep_intermediate() {
        let steps = vec![Deformation { site: 0, dt: 1.5 }];
        assert!(matches!(
            DeformationSchedule::new(SpacelikeSurface::flat(3, 0.0, 1.0), steps),
            Err(Error::NotSpacelike { .. })
        ));
        assert!(DeformationSchedule::flat_to_flat(3, 1.0, 0.0, 0.2, 0.03, SweepOrder::LeftToRight).is_err());
    }

    #[test]
    fn identical_and_mismatched_schedules() {
        let cfg = LatticeConfig::new(2, 1.0, 8, 6.0, 1.0).unwrap();
        let psi = state(cfg);
        let h = free();
        let opts = DeformOptions::default();
        let lr = |dt| DeformationSchedule::flat_to_flat(2, 1.0, 0.0, 0.2, dt, SweepOrder::LeftToRight);
        let rep = integrability_test(&h, &psi, lr, lr, &[0.1, 0.05], &opts).unwrap();
        assert_eq!(rep.discrepancies, vec![0.0, 0.0]);
        let short = |dt| DeformationSchedule::flat_to_flat(2, 1.0, 0.0, 0.1, dt, SweepOrder::RightToLeft);
        assert!(matches!(
            integrability_test(&h, &psi, lr, short, &[0.05], &opts),
            Err(Error::ScheduleMismatch)
        ));
    }
}
