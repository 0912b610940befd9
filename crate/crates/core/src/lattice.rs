//! Discretized field space: sites, per-site field grids and wavefunctionals.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Largest admissible state dimension `Q^N`.
pub const MAX_STATE_DIM: usize = 1 << 24;

/// Lattice discretization of the field configuration space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// Number of spatial sites (periodic).
    pub sites: usize,
    /// Lattice spacing `a`.
    pub spacing: f64,
    /// Field-grid points per site.
    pub q: usize,
    /// Field extent; the grid covers `[-extent/2, extent/2)`.
    pub extent: f64,
    /// Planck constant.
    pub h: f64,
}

impl LatticeConfig {
    pub fn new(sites: usize, spacing: f64, q: usize, extent: f64, h: f64) -> Result<Self> {
        let cfg = LatticeConfig {
            sites,
            spacing,
            q,
            extent,
            h,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.sites) {
            return Err(Error::InvalidConfig(format!("sites = {} outside 1..=6", self.sites)));
        }
        if !self.q.is_power_of_two() || !(4..=128).contains(&self.q) {
            return Err(Error::InvalidConfig(format!(
                "q = {} must be a power of two in 4..=128",
                self.q
            )));
        }
        for (name, x) in [("spacing", self.spacing), ("extent", self.extent), ("h", self.h)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {x} must be positive")));
            }
        }
        let dim = (self.q as u128).pow(self.sites as u32);
        if dim > MAX_STATE_DIM as u128 {
            return Err(Error::InvalidConfig(format!("q^sites = {dim} exceeds {MAX_STATE_DIM}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.q.pow(self.sites as u32)
    }

    /// Field-grid spacing `extent / q`.
    pub fn dz(&self) -> f64 {
        self.extent / self.q as f64
    }

    /// Field value of grid point `k`.
    pub fn grid_value(&self, k: usize) -> f64 {
        -0.5 * self.extent + k as f64 * self.dz()
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..self.q).map(|k| self.grid_value(k)).collect()
    }

    /// Stride of site `j` in the row-major state layout.
    pub fn stride(&self, site: usize) -> usize {
        self.q.pow((self.sites - 1 - site) as u32)
    }

    /// Grid index of site `j` within flat index `idx`.
    pub fn site_index(&self, idx: usize, site: usize) -> usize {
        (idx / self.stride(site)) % self.q
    }

    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.sites];
        for j in (0..self.sites).rev() {
            out[j] = idx % self.q;
            idx /= self.q;
        }
        out
    }

    pub fn flatten(&self, ks: &[usize]) -> usize {
        ks.iter().fold(0, |acc, &k| acc * self.q + k)
    }

    /// Field values of every site for flat index `idx`.
    pub fn field(&self, idx: usize) -> Vec<f64> {
        self.unflatten(idx).into_iter().map(|k| self.grid_value(k)).collect()
    }

    /// Measure weight `dz^N`.
    pub fn measure(&self) -> f64 {
        self.dz().powi(self.sites as i32)
    }
}

/// Complex amplitudes over the `Q^N` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunctional {
    pub cfg: LatticeConfig,
    pub amps: Vec<Complex64>,
}

impl WaveFunctional {
    pub fn zeros(cfg: LatticeConfig) -> Self {
        WaveFunctional {
            cfg,
            amps: vec![Complex64::new(0.0, 0.0); cfg.dim()],
        }
    }

    pub fn from_amplitudes(cfg: LatticeConfig, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != cfg.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} amplitudes for dimension {}",
                amps.len(),
                cfg.dim()
            )));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("wavefunctional amplitudes".into()));
        }
        Ok(WaveFunctional { cfg, amps })
    }

    /// Grid delta at the multi-index `ks` (unit amplitude, not normalized).
    pub fn basis(cfg: LatticeConfig, idx: usize) -> Self {
        let mut psi = WaveFunctional::zeros(cfg);
        psi.amps[idx] = Complex64::new(1.0, 0.0);
        psi
    }

    pub fn norm(&self) -> f64 {
        let w = self.cfg.measure();
        (w * par::sum_indexed(self.amps.len(), |i| self.amps[i].norm_sqr())).sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let s = 1.0 / n;
            self.amps.iter_mut().for_each(|a| *a *= s);
        }
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn scale(&mut self, s: Complex64) {
        self.amps.iter_mut().for_each(|a| *a *= s);
    }

    /// `self + s * other`.
    pub fn axpy(&mut self, s: Complex64, other: &WaveFunctional) -> Result<()> {
        check_same(self, other)?;
        self.amps.iter_mut().zip(&other.amps).for_each(|(a, b)| *a += s * b);
        Ok(())
    }

    /// L2 distance with the lattice measure.
    pub fn distance(&self, other: &WaveFunctional) -> Result<f64> {
        check_same(self, other)?;
        let w = self.cfg.measure();
        Ok((w * par::sum_indexed(self.amps.len(), |i| (self.amps[i] - other.amps[i]).norm_sqr())).sqrt())
    }
}

fn check_same(a: &WaveFunctional, b: &WaveFunctional) -> Result<()> {
    if a.cfg != b.cfg || a.amps.len() != b.amps.len() {
        return Err(Error::ConfigMismatch);
    }
    Ok(())
}

/// Sesquilinear inner product `dz^N sum conj(a) b`.
pub fn inner(a: &WaveFunctional, b: &WaveFunctional) -> Result<Complex64> {
    check_same(a, b)?;
    Ok(raw_inner(&a.amps, &b.amps) * a.cfg.measure())
}

pub(crate) fn raw_inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    par::sum_indexed(a.len(), |i| a[i].conj() * b[i])
}

/// Covariance of a Gaussian amplitude `exp(-(z-mu)^T C^{-1} (z-mu) / 2)`.
///
/// The probability density `|psi|^2` then has covariance `C / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// Independent sites with amplitude width `sigma`.
    Product(Vec<f64>),
    /// Full symmetric matrix, row-major.
    Full(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianStateSpec {
    pub center: Vec<f64>,
    pub covariance: Covariance,
    #[serde(default)]
    pub phase: f64,
}

/// Non-fatal resolution issues found while sampling a Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub enum GridWarning {
    /// Narrowest width below two grid spacings.
    Coarse { sigma: f64, dz: f64 },
    /// Widest width above a sixth of the field extent.
    Wide { sigma: f64, extent: f64 },
}

impl GaussianStateSpec {
    pub fn product(center: Vec<f64>, sigma: f64) -> Self {
        let n = center.len();
        GaussianStateSpec {
            center,
            covariance: Covariance::Product(vec![sigma; n]),
            phase: 0.0,
        }
    }

    pub fn covariance_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.center.len();
        match &self.covariance {
            Covariance::Product(s) => {
                if s.len() != n {
                    return Err(Error::ShapeMismatch("width count differs from site count".into()));
                }
                if s.iter().any(|x| !(*x > 0.0)) {
                    return Err(Error::NonPositiveCovariance);
                }
                Ok(DMatrix::from_fn(n, n, |i, j| if i == j { s[i] * s[i] } else { 0.0 }))
            }
            Covariance::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::ShapeMismatch("covariance must be sites x sites".into()));
                }
                let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                if (0..n).any(|i| (0..n).any(|j| (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * m.amax().max(1.0))) {
                    return Err(Error::NonPositiveCovariance);
                }
                Ok(m)
            }
        }
    }
}

/// Samples and normalizes a Gaussian on the grid.
pub fn init_wavefunctional(spec: &GaussianStateSpec, cfg: &LatticeConfig) -> Result<WaveFunctional> {
    init_wavefunctional_checked(spec, cfg).map(|(psi, _)| psi)
}

/// As [`init_wavefunctional`], also returning resolution warnings.
pub fn init_wavefunctional_checked(
    spec: &GaussianStateSpec,
    cfg: &LatticeConfig,
) -> Result<(WaveFunctional, Vec<GridWarning>)> {
    cfg.validate()?;
    if spec.center.len() != cfg.sites {
        return Err(Error::ShapeMismatch(format!(
            "center has {} entries for {} sites",
            spec.center.len(),
            cfg.sites
        )));
    }
    let cov = spec.covariance_matrix()?;
    let eig = cov.clone().symmetric_eigen();
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if !(lo > 0.0) || cov.clone().cholesky().is_none() {
        return Err(Error::NonPositiveCovariance);
    }
    let (s_lo, s_hi) = (lo.sqrt(), hi.sqrt());
    let dz = cfg.dz();
    if s_lo < dz {
        return Err(Error::GridUnresolved { sigma: s_lo, dz });
    }
    let mut warnings = Vec::new();
    if s_lo < 2.0 * dz {
        warnings.push(GridWarning::Coarse { sigma: s_lo, dz });
    }
    if s_hi > cfg.extent / 6.0 {
        warnings.push(GridWarning::Wide {
            sigma: s_hi,
            extent: cfg.extent,
        });
    }
    let precision = cov.try_inverse().ok_or(Error::NonPositiveCovariance)?;
    let n = cfg.sites;
    let phase = Complex64::from_polar(1.0, spec.phase);
    let mut amps = vec![Complex64::new(0.0, 0.0); cfg.dim()];
    par::fill_indexed(&mut amps, |idx| {
        let z = cfg.field(idx);
        let d: Vec<f64> = (0..n).map(|j| z[j] - spec.center[j]).collect();
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                quad += d[i] * precision[(i, j)] * d[j];
            }
        }
        phase * (-0.5 * quad).exp()
    });
    Ok((WaveFunctional { cfg: *cfg, amps }.normalized(), warnings))
}

/// Normal-mode frequencies `sqrt(m^2 + (4/a^2) sin^2(pi k / N))`.
pub fn mode_frequencies(cfg: &LatticeConfig, mass: f64) -> Vec<f64> {
    let n = cfg.sites as f64;
    (0..cfg.sites)
        .map(|k| {
            let s = (PI * k as f64 / n).sin();
            (mass * mass + 4.0 / (cfg.spacing * cfg.spacing) * s * s).sqrt()
        })
        .collect()
}

/// Ground state of `0.5*zt^2 - 0.5*zx^2 - 0.5*m^2*z^2` on the lattice.
///
/// The amplitude covariance is `(h/a) U diag(1/w) U^T` over the circulant
/// normal modes.
pub fn free_ground_state_covariance(cfg: &LatticeConfig, mass: f64) -> Result<GaussianStateSpec> {
    if !(mass > 0.0) {
        return Err(Error::MasslessZeroMode);
    }
    let omegas = mode_frequencies(cfg, mass);
    let n = cfg.sites;
    let scale = cfg.h / cfg.spacing / n as f64;
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = i as f64 - j as f64;
                    scale
                        * omegas
                            .iter()
                            .enumerate()
                            .map(|(k, w)| (2.0 * PI * k as f64 * d / n as f64).cos() / w)
                            .sum::<f64>()
                })
                .collect()
        })
        .collect();
    Ok(GaussianStateSpec {
        center: vec![0.0; n],
        covariance: Covariance::Full(rows),
        phase: 0.0,
    })
}

/// Writes the little-endian snapshot: header `(N, a, Q, Lq, h)` then `(re, im)` pairs.
pub fn write_binary<W: Write>(psi: &WaveFunctional, mut w: W) -> Result<()> {
    let c = &psi.cfg;
    w.write_all(&(c.sites as u64).to_le_bytes())?;
    w.write_all(&c.spacing.to_le_bytes())?;
    w.write_all(&(c.q as u64).to_le_bytes())?;
    w.write_all(&c.extent.to_le_bytes())?;
    w.write_all(&c.h.to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * psi.amps.len());
    for a in &psi.amps {
        buf.extend_from_slice(&a.re.to_le_bytes());
        buf.extend_from_slice(&a.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<WaveFunctional> {
    let mut head = [0u8; 40];
    r.read_exact(&mut head).map_err(|e| Error::Format(e.to_string()))?;
    let word = |k: usize| -> [u8; 8] { head[8 * k..8 * k + 8].try_into().unwrap() };
    let sites = u64::from_le_bytes(word(0)) as usize;
    let spacing = f64::from_le_bytes(word(1));
    let q = u64::from_le_bytes(word(2)) as usize;
    let extent = f64::from_le_bytes(word(3));
    let h = f64::from_le_bytes(word(4));
    let cfg = LatticeConfig::new(sites, spacing, q, extent, h).map_err(|e| Error::Format(e.to_string()))?;
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| Error::Format(e.to_string()))?;
    if body.len() != 16 * cfg.dim() {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            16 * cfg.dim(),
            body.len()
        )));
    }
    let amps = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    WaveFunctional::from_amplitudes(cfg, amps)
}

/// CSV rows `index,re,im`.
pub fn write_csv<W: Write>(psi: &WaveFunctional, mut w: W) -> Result<()> {
    writeln!(w, "index,re,im")?;
    for (i, a) in psi.amps.iter().enumerate() {
        writeln!(w, "{i},{:e},{:e}", a.re, a.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(cfg: LatticeConfig, rng: &mut ChaCha8Rng) -> WaveFunctional {
        let amps = (0..cfg.dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        WaveFunctional::from_amplitudes(cfg, amps).unwrap()
    }

    #[test]
    fn config_guards() {
        assert!(LatticeConfig::new(0, 1.0, 8, 8.0, 1.0).is_err());
        assert!(LatticeConfig::new(2, 1.0, 12, 8.0, 1.0).is_err());
        assert!(LatticeConfig::new(2, -1.0, 8, 8.0, 1.0).is_err());
        assert!(LatticeConfig::new(2, 1.0, 8, 8.0, 0.0).is_err());
        assert!(LatticeConfig::new(6, 1.0, 32, 8.0, 1.0).is_err());
        assert!(LatticeConfig::new(6, 1.0, 16, 8.0, 1.0).is_ok());
    }

    #[test]
    fn single_site_gaussian_is_normalized() {
        let cfg = LatticeConfig::new(1, 1.0, 64, 10.0, 1.0).unwrap();
        let psi = init_wavefunctional(&GaussianStateSpec::product(vec![0.0], 1.0), &cfg).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_width_rejected() {
        let cfg = LatticeConfig::new(1, 1.0, 64, 10.0, 1.0).unwrap();
        assert_eq!(
            init_wavefunctional(&GaussianStateSpec::product(vec![0.0], 0.0), &cfg),
            Err(Error::NonPositiveCovariance)
        );
        let narrow = GaussianStateSpec::product(vec![0.0], 0.1);
        assert!(matches!(init_wavefunctional(&narrow, &cfg), Err(Error::GridUnresolved { .. })));
        let (_, warn) = init_wavefunctional_checked(&GaussianStateSpec::product(vec![0.0], 3.0), &cfg).unwrap();
        assert!(matches!(warn[0], GridWarning::Wide { .. }));
    }

    #[test]
    fn indefinite_covariance_rejected() {
        let cfg = LatticeConfig::new(2, 1.0, 16, 10.0, 1.0).unwrap();
        let spec = GaussianStateSpec {
            center: vec![0.0, 0.0],
            covariance: Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            phase: 0.0,
        };
        assert_eq!(init_wavefunctional(&spec, &cfg), Err(Error::NonPositiveCovariance));
    }

    #[test]
    fn ground_state_widths() {
        let cfg = LatticeConfig::new(1, 1.0, 64, 10.0, 1.0).unwrap();
        let g = free_ground_state_covariance(&cfg, 1.0).unwrap();
        assert_eq!(g.covariance, Covariance::Full(vec![vec![1.0]]));
        let cfg2 = LatticeConfig::new(2, 1.0, 32, 12.0, 1.0).unwrap();
        let w = mode_frequencies(&cfg2, 1.0);
        assert!((w[0] - 1.0).abs() < 1e-15);
        assert!((w[1] - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(free_ground_state_covariance(&cfg2, 0.0), Err(Error::MasslessZeroMode));
    }

    #[test]
    fn constant_functional_has_unit_norm() {
        for (n, q, l) in [(1, 16, 7.0), (2, 8, 3.0), (3, 4, 2.5)] {
            let cfg = LatticeConfig::new(n, 1.0, q, l, 1.0).unwrap();
            let c = 1.0 / l.powi(n as i32).sqrt();
            let psi = WaveFunctional::from_amplitudes(cfg, vec![Complex64::new(c, 0.0); cfg.dim()]).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inner_product_properties() {
        let cfg = LatticeConfig::new(2, 1.0, 8, 6.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a = random_state(cfg, &mut rng);
            let b = random_state(cfg, &mut rng);
            let aa = inner(&a, &a).unwrap();
            assert!(aa.re >= 0.0 && aa.im == 0.0);
            let ab = inner(&a, &b).unwrap();
            let ba = inner(&b, &a).unwrap();
            assert!((ab - ba.conj()).norm() < 1e-14);
        }
        let e1 = WaveFunctional::basis(cfg, 3);
        let e2 = WaveFunctional::basis(cfg, 17);
        assert_eq!(inner(&e1, &e2).unwrap(), Complex64::new(0.0, 0.0));
        let other = WaveFunctional::zeros(LatticeConfig::new(2, 1.0, 8, 7.0, 1.0).unwrap());
        assert_eq!(inner(&e1, &other), Err(Error::ConfigMismatch));
    }

    #[test]
    fn gaussian_moments() {
        let cfg = LatticeConfig::new(2, 1.0, 64, 14.0, 1.0).unwrap();
        let spec = GaussianStateSpec {
            center: vec![0.5, -0.3],
            covariance: Covariance::Full(vec![vec![1.0, 0.3], vec![0.3, 0.8]]),
            phase: 0.7,
        };
        let psi = init_wavefunctional(&spec, &cfg).unwrap();
        let w = cfg.measure();
        let mut mean = [0.0; 2];
        let mut second = [[0.0; 2]; 2];
        for (idx, a) in psi.amps.iter().enumerate() {
            let z = cfg.field(idx);
            let p = a.norm_sqr() * w;
            for i in 0..2 {
                mean[i] += p * z[i];
                for j in 0..2 {
                    second[i][j] += p * z[i] * z[j];
                }
            }
        }
        let cov = [[1.0, 0.3], [0.3, 0.8]];
        for i in 0..2 {
            assert!((mean[i] - spec.center[i]).abs() < 1e-4 * spec.center[i].abs());
            for j in 0..2 {
                let want = 0.5 * cov[i][j] + spec.center[i] * spec.center[j];
                assert!((second[i][j] - want).abs() < 1e-4, "{i}{j}");
            }
        }
    }

    #[test]
    fn binary_round_trip() {
        let cfg = LatticeConfig::new(2, 0.5, 8, 6.0, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_state(cfg, &mut rng);
        let mut buf = Vec::new();
        write_binary(&psi, &mut buf).unwrap();
        assert_eq!(buf.len(), 40 + 16 * 64);
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        let back = read_binary(&buf[..]).unwrap();
        assert_eq!(back, psi);
        assert!(matches!(read_binary(&buf[..100]), Err(Error::Format(_))));
        let mut csv = Vec::new();
        write_csv(&psi, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 65);
    }

    proptest! {
        #[test]
        fn index_round_trip(sites in 1usize..=4, qexp in 2u32..=4, seed in 0usize..100_000) {
            let q = 1usize << qexp;
            let cfg = LatticeConfig::new(sites, 1.0, q, 4.0, 1.0).unwrap();
            let idx = seed % cfg.dim();
            let ks = cfg.unflatten(idx);
            prop_assert_eq!(cfg.flatten(&ks), idx);
            for (j, k) in ks.iter().enumerate() {
                prop_assert_eq!(cfg.site_index(idx, j), *k);
            }
        }
    }
}
