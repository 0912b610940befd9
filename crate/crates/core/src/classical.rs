//! Classical extremals between two spacelike surfaces and the principal
//! function `S(C)`.
//!
//! Space is the periodic lattice of the quantum modules; time is discretized
//! per column. Column `j` runs from `t0_j` to `t1_j` in `M` equal steps
//! `dt_j`, so row `r` is itself a spacelike surface with node times
//! `t0_j + r dt_j`. Along a row the link difference `s` mixes space and time
//! derivatives, `s = z_x + v z_t` with `v` the row's link slope, and the
//! action is assembled from
//!
//! ```text
//! L_j = c zt^2 + b zt + (g/2) (zx_-^2 + zx_+^2) - V(z),   zx_± = s_± - v_± zt
//! ```
//!
//! per column, with the row-endpoint values of `zx_±` averaged (trapezoid)
//! and `V` averaged over the two rows of each step. Each link's gradient
//! energy is thus split evenly between its two columns, which keeps the
//! column energy `p zt - L_j` the exact conjugate of the column's end time.

use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::lagrangian::LagrangianSpec;
use crate::par;

/// Condition estimates above this are refused.
pub const SINGULAR_CONDITION: f64 = 1e12;
const MAX_NEWTON: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub spacing: f64,
    pub t0: Vec<f64>,
    pub t1: Vec<f64>,
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
}

impl BoundaryData {
    /// Flat surfaces `t = 0` and `t = duration`.
    pub fn flat(spacing: f64, duration: f64, z0: Vec<f64>, z1: Vec<f64>) -> Self {
        let n = z0.len();
        BoundaryData {
            spacing,
            t0: vec![0.0; n],
            t1: vec![duration; n],
            z0,
            z1,
        }
    }

    pub fn sites(&self) -> usize {
        self.z0.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.z0.len();
        if n == 0 || self.z1.len() != n || self.t0.len() != n || self.t1.len() != n {
            return Err(Error::InvalidBoundary("surfaces and fields need one value per site".into()));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::InvalidBoundary("spacing must be positive".into()));
        }
        let all = [&self.t0, &self.t1, &self.z0, &self.z1];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidBoundary("non-finite boundary value".into()));
        }
        for j in 0..n {
            if !(self.t0[j] < self.t1[j]) {
                return Err(Error::InvalidBoundary(format!("surfaces touch at site {j}")));
            }
        }
        for t in [&self.t0, &self.t1] {
            for j in 0..n {
                let v = (t[(j + 1) % n] - t[j]) / self.spacing;
                if !(v.abs() < 1.0) {
                    return Err(Error::NotSpacelike { link: j, slope: v });
                }
            }
        }
        Ok(())
    }

    /// Time rows implied by the step `dt_c` (at least three).
    pub fn rows_for(&self, dt_c: f64) -> Result<usize> {
        if !(dt_c > 0.0 && dt_c.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt_c = {dt_c} must be positive")));
        }
        let longest = self
            .t0
            .iter()
            .zip(&self.t1)
            .map(|(a, b)| b - a)
            .fold(0.0, f64::max);
        Ok(((longest / dt_c) * (1.0 - 1e-12)).ceil().max(3.0) as usize)
    }

    /// Relabels sites `j -> perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let apply = |v: &Vec<f64>| {
            let mut out = vec![0.0; v.len()];
            for (j, &p) in perm.iter().enumerate() {
                out[p] = v[j];
            }
            out
        };
        BoundaryData {
            spacing: self.spacing,
            t0: apply(&self.t0),
            t1: apply(&self.t1),
            z0: apply(&self.z0),
            z1: apply(&self.z1),
        }
    }

    pub fn time_shifted(&self, dt: f64) -> Self {
        let mut b = self.clone();
        b.t0.iter_mut().chain(b.t1.iter_mut()).for_each(|t| *t += dt);
        b
    }
}

/// Discrete extremal on the sheared space-time lattice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremalSolution {
    pub boundary: BoundaryData,
    /// Time steps per column.
    pub rows: usize,
    /// `field[r][j]`, rows `0..=rows`.
    pub field: Vec<Vec<f64>>,
    /// Column step sizes.
    pub dt: Vec<f64>,
    /// Largest discrete Euler–Lagrange residual in momentum-balance form.
    pub residual: f64,
    pub action: f64,
    pub condition: f64,
    pub newton_iterations: usize,
}

impl ExtremalSolution {
    pub fn time(&self, r: usize, j: usize) -> f64 {
        self.boundary.t0[j] + r as f64 * self.dt[j]
    }

    /// `t,x,z` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,z")?;
        for (r, row) in self.field.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                writeln!(w, "{:e},{:e},{:e}", self.time(r, j), j as f64 * self.boundary.spacing, z)?;
            }
        }
        Ok(())
    }
}

/// Sheared lattice geometry and the action as a sum of sparse terms.
struct Problem<'a> {
    bd: &'a BoundaryData,
    lag: &'a LagrangianSpec,
    n: usize,
    rows: usize,
    dt: Vec<f64>,
}

/// `weight * (sum coeff z)^2`.
struct Square {
    weight: f64,
    coeffs: Vec<(usize, f64)>,
}

/// `weight * sum coeff z`.
struct Linear {
    weight: f64,
    coeffs: Vec<(usize, f64)>,
}

struct Terms {
    squares: Vec<Square>,
    linears: Vec<Linear>,
    /// Multiplier of `V(z)` at each node.
    potential: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(bd: &'a BoundaryData, lag: &'a LagrangianSpec, rows: usize) -> Result<Self> {
        bd.validate()?;
        if rows < 3 {
            return Err(Error::InvalidConfig("need at least two interior rows".into()));
        }
        let dt = bd.t0.iter().zip(&bd.t1).map(|(a, b)| (b - a) / rows as f64).collect();
        Ok(Problem {
            bd,
            lag,
            n: bd.sites(),
            rows,
            dt,
        })
    }

    fn node(&self, r: usize, j: usize) -> usize {
        r * self.n + j
    }

    fn time(&self, r: usize, j: usize) -> f64 {
        self.bd.t0[j] + r as f64 * self.dt[j]
    }

    /// Slope of link `j -> j+1` on row `r`.
    fn slope(&self, r: usize, j: usize) -> f64 {
        (self.time(r, (j + 1) % self.n) - self.time(r, j)) / self.bd.spacing
    }

    fn terms(&self) -> Terms {
        let (n, a) = (self.n, self.bd.spacing);
        let (c, b, g) = (self.lag.kinetic_coeff, self.lag.kinetic_linear, self.lag.gradient_coeff);
        let mut t = Terms {
            squares: Vec::new(),
            linears: Vec::new(),
            potential: vec![0.0; (self.rows + 1) * n],
        };
        for j in 0..n {
            let dtj = self.dt[j];
            let w = a * dtj;
            for r in 0..self.rows {
                let (lo, hi) = (self.node(r, j), self.node(r + 1, j));
                let zt = vec![(hi, 1.0 / dtj), (lo, -1.0 / dtj)];
                t.squares.push(Square {
                    weight: w * c,
                    coeffs: zt.clone(),
                });
                if b != 0.0 {
                    t.linears.push(Linear {
                        weight: w * b,
                        coeffs: zt.clone(),
                    });
                }
                t.potential[lo] -= 0.5 * w;
                t.potential[hi] -= 0.5 * w;
                if n == 1 || g == 0.0 {
                    continue;
                }
                for rho in [r, r + 1] {
                    let (left, right) = ((j + n - 1) % n, (j + 1) % n);
                    // zx_+ = (z_{j+1} - z_j)/a - v_+ zt, zx_- = (z_j - z_{j-1})/a - v_- zt.
                    let (vp, vm) = (self.slope(rho, j), self.slope(rho, left));
                    for (far, sign, v) in [(right, 1.0, vp), (left, -1.0, vm)] {
                        let mut coeffs = vec![
                            (self.node(rho, far), sign / a),
                            (self.node(rho, j), -sign / a),
                        ];
                        coeffs.extend(zt.iter().map(|&(k, x)| (k, -v * x)));
                        t.squares.push(Square {
                            weight: 0.25 * w * g,
                            coeffs,
                        });
                    }
                }
            }
        }
        t
    }

    fn unknowns(&self) -> usize {
        (self.rows - 1) * self.n
    }

    /// Node index to unknown index.
    fn unknown(&self, node: usize) -> Option<usize> {
        let r = node / self.n;
        (r >= 1 && r < self.rows).then(|| node - self.n)
    }

    fn action(&self, terms: &Terms, z: &[f64]) -> f64 {
        let form = |coeffs: &[(usize, f64)]| coeffs.iter().map(|&(k, x)| x * z[k]).sum::<f64>();
        let mut s = 0.0;
        for sq in &terms.squares {
            let l = form(&sq.coeffs);
            s += sq.weight * l * l;
        }
        for li in &terms.linears {
            s += li.weight * form(&li.coeffs);
        }
        for (k, w) in terms.potential.iter().enumerate() {
            s += w * self.lag.potential.eval(z[k]);
        }
        s
    }

    /// Gradient over unknowns and, optionally, the banded Hessian.
    fn derivatives(&self, terms: &Terms, z: &[f64], hessian: bool) -> (Vec<f64>, Option<BandMatrix>) {
        let m = self.unknowns();
        let bw = 2 * self.n;
        let mut grad = vec![0.0; m];
        let mut hess = hessian.then(|| BandMatrix::zeros(m, bw, bw));
        let form = |coeffs: &[(usize, f64)]| coeffs.iter().map(|&(k, x)| x * z[k]).sum::<f64>();
        for sq in &terms.squares {
            let l = form(&sq.coeffs);
            for &(k, x) in &sq.coeffs {
                if let Some(u) = self.unknown(k) {
                    grad[u] += 2.0 * sq.weight * l * x;
                    if let Some(h) = hess.as_mut() {
                        for &(k2, x2) in &sq.coeffs {
                            if let Some(u2) = self.unknown(k2) {
                                h.add(u, u2, 2.0 * sq.weight * x * x2);
                            }
                        }
                    }
                }
            }
        }
        for li in &terms.linears {
            for &(k, x) in &li.coeffs {
                if let Some(u) = self.unknown(k) {
                    grad[u] += li.weight * x;
                }
            }
        }
        let dv = self.lag.potential.derivative();
        let ddv = dv.derivative();
        for (k, w) in terms.potential.iter().enumerate() {
            if let Some(u) = self.unknown(k) {
                grad[u] += w * dv.eval(z[k]);
                if let Some(h) = hess.as_mut() {
                    h.add(u, u, w * ddv.eval(z[k]));
                }
            }
        }
        (grad, hess)
    }

    /// Gradient in momentum-balance form, `(1/a) dS/dz`: the jump in column
    /// momentum across a row minus the force impulse.
    fn scaled<'b>(&'b self, grad: &'b [f64]) -> impl Iterator<Item = f64> + 'b {
        let a = self.bd.spacing;
        grad.iter().map(move |g| g / a)
    }

    fn residual(&self, grad: &[f64]) -> f64 {
        self.scaled(grad).map(f64::abs).fold(0.0, f64::max)
    }

    fn initial_guess(&self) -> Vec<f64> {
        let mut z = vec![0.0; (self.rows + 1) * self.n];
        for r in 0..=self.rows {
            let f = r as f64 / self.rows as f64;
            for j in 0..self.n {
                z[self.node(r, j)] = (1.0 - f) * self.bd.z0[j] + f * self.bd.z1[j];
            }
        }
        z
    }

    fn solve(&self) -> Result<ExtremalSolution> {
        let terms = self.terms();
        let quadratic = self.lag.potential.degree().is_none_or(|d| d <= 2);
        let tol = if quadratic { 1e-10 } else { 1e-8 };
        let merit = |g: &[f64]| self.scaled(g).map(|x| x * x).sum::<f64>();
        let mut z = self.initial_guess();
        let mut condition = f64::NAN;
        let mut iterations = 0;
        let (mut grad, _) = self.derivatives(&terms, &z, false);
        let mut res = self.residual(&grad);
        while iterations < MAX_NEWTON {
            let (g, h) = self.derivatives(&terms, &z, true);
            grad = g;
            let hess = h.unwrap();
            let norm = hess.norm1();
            let lu = hess.factor().map_err(|_| Error::SingularBvp { condition: f64::INFINITY })?;
            if iterations == 0 {
                condition = norm * lu.inverse_norm1_estimate();
                if !(condition <= SINGULAR_CONDITION) {
                    return Err(Error::SingularBvp { condition });
                }
            }
            if res <= tol && iterations > 0 {
                break;
            }
            let step = lu.solve(&grad);
            iterations += 1;
            let mut alpha = 1.0;
            loop {
                let mut trial = z.clone();
                for (u, s) in step.iter().enumerate() {
                    trial[u + self.n] -= alpha * s;
                }
                let (tg, _) = self.derivatives(&terms, &trial, false);
                let tres = self.residual(&tg);
                if merit(&tg) < merit(&grad) || tres <= tol {
                    z = trial;
                    res = tres;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-6 {
                    if res <= tol {
                        break;
                    }
                    return Err(Error::NewtonDivergence { residual: res });
                }
            }
            if alpha < 1e-6 || (quadratic && res <= tol) {
                break;
            }
        }
        if !(res <= tol) {
            return Err(Error::NewtonDivergence { residual: res });
        }
        let field = (0..=self.rows)
            .map(|r| (0..self.n).map(|j| z[self.node(r, j)]).collect())
            .collect();
        Ok(ExtremalSolution {
            boundary: self.bd.clone(),
            rows: self.rows,
            field,
            dt: self.dt.clone(),
            residual: res,
            action: self.action(&terms, &z),
            condition,
            newton_iterations: iterations,
        })
    }
}

/// Stationary point of the discrete action with time step about `dt_c`.
pub fn solve_extremal(bd: &BoundaryData, lagrangian: &LagrangianSpec, dt_c: f64) -> Result<ExtremalSolution> {
    solve_extremal_rows(bd, lagrangian, bd.rows_for(dt_c)?)
}

/// As [`solve_extremal`] with an explicit number of time steps per column.
pub fn solve_extremal_rows(bd: &BoundaryData, lagrangian: &LagrangianSpec, rows: usize) -> Result<ExtremalSolution> {
    Problem::new(bd, lagrangian, rows)?.solve()
}

/// Momentum and energy densities on one boundary surface.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceMomenta {
    pub p: Vec<f64>,
    /// `p zt - L`.
    pub hj0: Vec<f64>,
    /// Spatial flux component.
    pub hj1: Vec<f64>,
    /// Field slope along the surface, `(s_- + s_+)/2`.
    pub zs: Vec<f64>,
    /// Surface slope at each site, `(v_- + v_+)/2`.
    pub slope: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryMomenta {
    pub start: SurfaceMomenta,
    pub end: SurfaceMomenta,
}

/// Column quantities at a boundary point.
struct ColumnPoint {
    z: f64,
    zt: f64,
    /// Row differences `(s_-, s_+)`.
    s: (f64, f64),
    /// Link slopes `(v_-, v_+)`.
    v: (f64, f64),
}

impl ColumnPoint {
    fn zx(&self) -> (f64, f64) {
        (self.s.0 - self.v.0 * self.zt, self.s.1 - self.v.1 * self.zt)
    }

    fn density(&self, lag: &LagrangianSpec, links: bool) -> f64 {
        let (zm, zp) = if links { self.zx() } else { (0.0, 0.0) };
        lag.kinetic_coeff * self.zt * self.zt + lag.kinetic_linear * self.zt
            + 0.5 * lag.gradient_coeff * (zm * zm + zp * zp)
            - lag.potential.eval(self.z)
    }

    fn momentum(&self, lag: &LagrangianSpec, links: bool) -> f64 {
        let base = 2.0 * lag.kinetic_coeff * self.zt + lag.kinetic_linear;
        if !links {
            return base;
        }
        let (zm, zp) = self.zx();
        base - lag.gradient_coeff * (self.v.0 * zm + self.v.1 * zp)
    }
}

fn column_point(sol: &ExtremalSolution, j: usize, end: bool) -> ColumnPoint {
    let n = sol.boundary.sites();
    let a = sol.boundary.spacing;
    let m = sol.rows;
    let col = |r: usize| sol.field[r][j];
    let dt = sol.dt[j];
    // One-sided second-order differences.
    let (r, zt) = if end {
        (m, (3.0 * col(m) - 4.0 * col(m - 1) + col(m - 2)) / (2.0 * dt))
    } else {
        (0, (-3.0 * col(0) + 4.0 * col(1) - col(2)) / (2.0 * dt))
    };
    let t = if end { &sol.boundary.t1 } else { &sol.boundary.t0 };
    let (left, right) = ((j + n - 1) % n, (j + 1) % n);
    let row = &sol.field[r];
    let (s, v) = if n == 1 {
        ((0.0, 0.0), (0.0, 0.0))
    } else {
        (
            ((row[j] - row[left]) / a, (row[right] - row[j]) / a),
            ((t[j] - t[left]) / a, (t[right] - t[j]) / a),
        )
    };
    ColumnPoint { z: row[j], zt, s, v }
}

fn surface_momenta(sol: &ExtremalSolution, lag: &LagrangianSpec, end: bool) -> SurfaceMomenta {
    let n = sol.boundary.sites();
    let links = n > 1;
    let mut out = SurfaceMomenta {
        p: Vec::with_capacity(n),
        hj0: Vec::with_capacity(n),
        hj1: Vec::with_capacity(n),
        zs: Vec::with_capacity(n),
        slope: Vec::with_capacity(n),
    };
    for j in 0..n {
        let pt = column_point(sol, j, end);
        let f = pt.density(lag, links);
        let p = pt.momentum(lag, links);
        let (zm, zp) = if links { pt.zx() } else { (0.0, 0.0) };
        let v = 0.5 * (pt.v.0 + pt.v.1);
        let f_zt = 2.0 * lag.kinetic_coeff * pt.zt + lag.kinetic_linear;
        // H^1 = F_zt z_x - sum_± v_± F_{zx_±} zx_± + v F.
        let hj1 = f_zt * 0.5 * (zm + zp) - lag.gradient_coeff * (pt.v.0 * zm * zm + pt.v.1 * zp * zp) + v * f;
        out.p.push(p);
        out.hj0.push(p * pt.zt - f);
        out.hj1.push(hj1);
        out.zs.push(0.5 * (pt.s.0 + pt.s.1));
        out.slope.push(v);
    }
    out
}

/// Boundary momenta from one-sided `O(dt^2)` differences of the extremal.
///
/// Sign convention: `hj0 = p zt - L`, so a static field at a potential
/// minimum has `p = 0` and `hj0 = V`.
pub fn boundary_momenta(sol: &ExtremalSolution, lagrangian: &LagrangianSpec) -> BoundaryMomenta {
    BoundaryMomenta {
        start: surface_momenta(sol, lagrangian, false),
        end: surface_momenta(sol, lagrangian, true),
    }
}

/// Column energy `H(z, s_±, p; v_±)` as a function of the momentum.
fn column_hamiltonian(lag: &LagrangianSpec, z: f64, s: (f64, f64), v: (f64, f64), p: f64, links: bool) -> f64 {
    let (c, b, g) = (lag.kinetic_coeff, lag.kinetic_linear, lag.gradient_coeff);
    let (stiff, shift) = if links {
        (g * (v.0 * v.0 + v.1 * v.1), g * (v.0 * s.0 + v.1 * s.1))
    } else {
        (0.0, 0.0)
    };
    let zt = (p - b + shift) / (2.0 * c + stiff);
    let pt = ColumnPoint { z, zt, s, v };
    p * zt - pt.density(lag, links)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HjReport {
    pub rows: usize,
    pub fd_epsilon: f64,
    /// `(1/a) dS/dz_j` on the end surface by central differences.
    pub ds_dz: Vec<f64>,
    /// `(1/a) dS/dt_j` on the end surface by central differences.
    pub ds_dt: Vec<f64>,
    pub momenta: SurfaceMomenta,
    pub momentum_rel_error: Vec<f64>,
    pub energy_rel_error: Vec<f64>,
    /// `|dS/dt + H(z, z_s, dS/dz)|` per site.
    pub hamilton_jacobi_residual: Vec<f64>,
    /// `|p z_s - H^1 - H^0 x0_s|` per site.
    pub tangential_residual: Vec<f64>,
    pub action: f64,
}

impl HjReport {
    pub fn max_momentum_error(&self) -> f64 {
        self.momentum_rel_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_energy_error(&self) -> f64 {
        self.energy_rel_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_hj_residual(&self) -> f64 {
        self.hamilton_jacobi_residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_tangential_residual(&self) -> f64 {
        self.tangential_residual.iter().copied().fold(0.0, f64::max)
    }
}

/// `|x - y| / max(|y|, floor)`.
fn rel_error(x: f64, y: f64, floor: f64) -> f64 {
    (x - y).abs() / y.abs().max(floor)
}

/// Finite-difference checks of the variational relations on the end surface.
pub fn hj_residuals(bd: &BoundaryData, lagrangian: &LagrangianSpec, dt_c: f64, fd_epsilon: f64) -> Result<HjReport> {
    if !(fd_epsilon > 0.0) {
        return Err(Error::InvalidConfig("fd_epsilon must be positive".into()));
    }
    let rows = bd.rows_for(dt_c)?;
    let base = solve_extremal_rows(bd, lagrangian, rows)?;
    let n = bd.sites();
    let a = bd.spacing;
    // Perturbations: (site, field or time, sign).
    let tasks: Vec<(usize, bool, f64)> = (0..n)
        .flat_map(|j| [(j, true, 1.0), (j, true, -1.0), (j, false, 1.0), (j, false, -1.0)])
        .collect();
    let actions = par::map_range(tasks.len(), |i| {
        let (j, field, sign) = tasks[i];
        let mut b = bd.clone();
        if field {
            b.z1[j] += sign * fd_epsilon;
        } else {
            b.t1[j] += sign * fd_epsilon;
        }
        solve_extremal_rows(&b, lagrangian, rows).map(|s| s.action)
    });
    let actions = actions.into_iter().collect::<Result<Vec<_>>>()?;
    let central = |k: usize| (actions[k] - actions[k + 1]) / (2.0 * fd_epsilon * a);
    let ds_dz: Vec<f64> = (0..n).map(|j| central(4 * j)).collect();
    let ds_dt: Vec<f64> = (0..n).map(|j| central(4 * j + 2)).collect();
    let mom = boundary_momenta(&base, lagrangian).end;
    let pfloor = 1e-3 * mom.p.iter().map(|x| x.abs()).fold(1e-9, f64::max);
    let hfloor = 1e-3 * mom.hj0.iter().map(|x| x.abs()).fold(1e-9, f64::max);
    let links = n > 1;
    let mut hj = Vec::with_capacity(n);
    for j in 0..n {
        let pt = column_point(&base, j, true);
        let h = column_hamiltonian(lagrangian, pt.z, pt.s, pt.v, ds_dz[j], links);
        hj.push((ds_dt[j] + h).abs());
    }
    let tangential = (0..n)
        .map(|j| (mom.p[j] * mom.zs[j] - mom.hj1[j] - mom.hj0[j] * mom.slope[j]).abs())
        .collect();
    Ok(HjReport {
        rows,
        fd_epsilon,
        momentum_rel_error: (0..n).map(|j| rel_error(ds_dz[j], mom.p[j], pfloor)).collect(),
        energy_rel_error: (0..n).map(|j| rel_error(ds_dt[j], -mom.hj0[j], hfloor)).collect(),
        ds_dz,
        ds_dt,
        momenta: mom,
        hamilton_jacobi_residual: hj,
        tangential_residual: tangential,
        action: base.action,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryCheck {
    pub action: f64,
    pub transformed: f64,
    pub difference: f64,
}

impl SymmetryCheck {
    fn new(action: f64, transformed: f64) -> Self {
        SymmetryCheck {
            action,
            transformed,
            difference: (action - transformed).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReparameterizationReport {
    pub cyclic: SymmetryCheck,
    /// Spatial reflection `j -> N-1-j`.
    pub parity: SymmetryCheck,
    pub time_shift: SymmetryCheck,
    pub dt_values: Vec<f64>,
    pub actions: Vec<f64>,
    /// Ratio of successive changes under halving of `dt_c`.
    pub refinement_ratio: f64,
}

/// `S(C)` under relabelings and refinements of the same geometric boundary.
pub fn reparameterization_check(bd: &BoundaryData, lagrangian: &LagrangianSpec, dt_c: f64) -> Result<ReparameterizationReport> {
    let n = bd.sites();
    let rows = bd.rows_for(dt_c)?;
    let s = |b: &BoundaryData, rows: usize| solve_extremal_rows(b, lagrangian, rows).map(|x| x.action);
    let base = s(bd, rows)?;
    let cyc: Vec<usize> = (0..n).map(|j| (j + 1) % n).collect();
    let cyclic = SymmetryCheck::new(base, s(&bd.permuted(&cyc), rows)?);
    let rev: Vec<usize> = (0..n).map(|j| n - 1 - j).collect();
    let parity = SymmetryCheck::new(base, s(&bd.permuted(&rev), rows)?);
    let time_shift = SymmetryCheck::new(base, s(&bd.time_shifted(0.37), rows)?);
    let ladder = [rows, 2 * rows, 4 * rows];
    let actions = par::map_range(ladder.len(), |i| s(bd, ladder[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let longest = bd.t0.iter().zip(&bd.t1).map(|(a, b)| b - a).fold(0.0, f64::max);
    Ok(ReparameterizationReport {
        cyclic,
        parity,
        time_shift,
        dt_values: ladder.iter().map(|&m| longest / m as f64).collect(),
        refinement_ratio: (actions[0] - actions[1]) / (actions[1] - actions[2]),
        actions,
    })
}
