//! Batch front end: TOML run configs in, CSV/JSON/binary artifacts out.
//!
//! A config holds the Lagrangian, optional lattice and initial-state blocks,
//! and exactly one command block (`legendre`, `evolve`, `surface`,
//! `feynman` or `classical`). Every run writes `manifest.json` with the tool
//! version, the config hash and the SHA-256 of each artifact.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::classical::{boundary_momenta, hj_residuals, reparameterization_check, solve_extremal, BoundaryData};
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::evolve::{evolve_logged, EvolveParams, Method, TrajectoryRow};
use crate::feynman::{
    brute_force_state, feynman_vs_schrodinger, Kernel, LadderBase, PathIntegralSpec, TransferOperator,
};
use crate::lagrangian::{legendre_transform, parse_lagrangian_with, LagrangianSpec, DEFAULT_MAX_DEGREE};
use crate::lattice::{self, init_wavefunctional, GaussianStateSpec, LatticeConfig, WaveFunctional};
use crate::operator::{compile_hamiltonian, CompileOptions, DerivativeScheme, OrderingRule};
use crate::surface::{
    integrability_test, DeformOptions, Deformation, DeformationSchedule, Integrator, SpacelikeSurface, SweepOrder,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const FAILURE: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const NUMERICAL: u8 = 3;
    pub const RESOURCE: u8 = 4;
}

pub fn exit_code(err: &Error) -> u8 {
    use Error::*;
    match err {
        SingularBvp { .. } | NewtonDivergence { .. } | SolverDivergence { .. } => exit::NUMERICAL,
        DimensionTooLarge { .. } | EnumerationTooLarge { .. } => exit::RESOURCE,
        Io(_) => exit::FAILURE,
        _ => exit::CONFIG,
    }
}

#[derive(Debug, Parser)]
#[command(name = "fieldlab", version, about = "Functional Schrödinger lattice laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Legendre,
    Evolve,
    Surface,
    Feynman,
    Classical,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the Hamiltonian density in normal form.
    Legendre(Args),
    /// Flat-slice evolution: trajectory CSV and state snapshots.
    Evolve(Args),
    /// Integrability of two deformation schedules.
    Surface(Args),
    /// Transfer operator against exact evolution.
    Feynman(Args),
    /// Classical extremal and Hamilton–Jacobi residuals.
    Classical(Args),
    /// Dispatch on whichever command block the config contains.
    Run(Args),
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// TOML run config.
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub lagrangian: LagrangianBlock,
    pub lattice: Option<LatticeBlock>,
    pub initial: Option<GaussianStateSpec>,
    pub legendre: Option<LegendreBlock>,
    pub evolve: Option<EvolveBlock>,
    pub surface: Option<SurfaceBlock>,
    pub feynman: Option<FeynmanBlock>,
    pub classical: Option<ClassicalBlock>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianBlock {
    pub text: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
}

fn default_max_degree() -> usize {
    DEFAULT_MAX_DEGREE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub sites: usize,
    pub spacing: f64,
    pub q: usize,
    pub extent: f64,
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default)]
    pub scheme: DerivativeScheme,
    #[serde(default)]
    pub ordering: OrderingRule,
}

fn one() -> f64 {
    1.0
}

impl LatticeBlock {
    fn config(&self) -> Result<LatticeConfig> {
        LatticeConfig::new(self.sites, self.spacing, self.q, self.extent, self.h)
    }

    fn compile(&self) -> CompileOptions {
        CompileOptions {
            scheme: self.scheme,
            ordering: self.ordering,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegendreBlock {
    /// Slopes at which to print the tilted-surface density.
    #[serde(default)]
    pub slopes: Vec<f64>,
    /// Random `(z, z_s, p, v)` samples of the identity `H = p zt - F`.
    #[serde(default)]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveBlock {
    pub dt: f64,
    pub steps: usize,
    pub method: Method,
    #[serde(default = "evolve_tolerance")]
    pub tolerance: f64,
    #[serde(default = "evolve_max_iterations")]
    pub max_iterations: usize,
    /// Snapshot written by an earlier run; replaces `[initial]`.
    pub initial_file: Option<PathBuf>,
}

fn evolve_tolerance() -> f64 {
    1e-10
}

fn evolve_max_iterations() -> usize {
    1000
}

/// A schedule generator evaluated at each `dt` of the ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    /// Full sweeps in this order.
    pub order: Option<SweepOrder>,
    /// `(site, multiple)` pairs repeated `duration / dt` times; each
    /// advances `site` by `multiple * dt`.
    pub pattern: Option<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceBlock {
    #[serde(default)]
    pub t0: f64,
    pub duration: f64,
    pub dt_values: Vec<f64>,
    pub a: ScheduleBlock,
    pub b: ScheduleBlock,
    #[serde(default)]
    pub integrator: Integrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeynmanBlock {
    pub total_time: f64,
    /// `(dt, Q)` refinement levels.
    pub levels: Vec<(f64, usize)>,
    #[serde(default)]
    pub kernel: Kernel,
    /// Slices of an exhaustive path sum checked against the transfer operator.
    pub identity_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalBlock {
    #[serde(default = "one")]
    pub spacing: f64,
    pub t0: Vec<f64>,
    pub t1: Vec<f64>,
    pub z0: Vec<f64>,
    pub z1: Vec<f64>,
    pub dt_c: f64,
    #[serde(default = "fd_epsilon")]
    pub fd_epsilon: f64,
    #[serde(default = "yes")]
    pub hamilton_jacobi: bool,
    #[serde(default)]
    pub reparameterization: bool,
}

fn fd_epsilon() -> f64 {
    1e-4
}

fn yes() -> bool {
    true
}

impl ClassicalBlock {
    fn boundary(&self) -> BoundaryData {
        BoundaryData {
            spacing: self.spacing,
            t0: self.t0.clone(),
            t1: self.t1.clone(),
            z0: self.z0.clone(),
            z1: self.z1.clone(),
        }
    }
}

/// Parses TOML, reporting the field path of any schema error.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(format!("at `{path}`: {}", e.into_inner().message()))
    })
}

/// A config checked against everything that can be known without computing.
struct Prepared {
    config: RunConfig,
    kind: Kind,
    lagrangian: LagrangianSpec,
    lattice: Option<LatticeConfig>,
    initial_state: Option<WaveFunctional>,
    hash: String,
}

fn block_kinds(c: &RunConfig) -> Vec<Kind> {
    let mut out = Vec::new();
    if c.legendre.is_some() {
        out.push(Kind::Legendre);
    }
    if c.evolve.is_some() {
        out.push(Kind::Evolve);
    }
    if c.surface.is_some() {
        out.push(Kind::Surface);
    }
    if c.feynman.is_some() {
        out.push(Kind::Feynman);
    }
    if c.classical.is_some() {
        out.push(Kind::Classical);
    }
    out
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("missing `{what}` block")))
}

fn prepare(config: RunConfig, wanted: Option<Kind>, base_dir: &Path) -> Result<Prepared> {
    let kinds = block_kinds(&config);
    let kind = match kinds.as_slice() {
        [k] => *k,
        [] => return Err(Error::Config("no command block".into())),
        _ => return Err(Error::Config(format!("exactly one command block allowed, found {kinds:?}"))),
    };
    if let Some(w) = wanted {
        if w != kind {
            return Err(Error::Config(format!("command {w:?} needs its own block, found {kind:?}")));
        }
    }
    let params: HashMap<String, f64> = config.lagrangian.params.clone().into_iter().collect();
    let lagrangian = parse_lagrangian_with(&config.lagrangian.text, &params, config.lagrangian.max_degree)?;
    let lattice = config.lattice.as_ref().map(|l| l.config()).transpose()?;
    let mut initial_state = None;
    let mut extra_hash = String::new();
    match kind {
        Kind::Legendre => {
            let b = config.legendre.as_ref().unwrap();
            if b.slopes.iter().any(|v| !(v.abs() < 1.0)) {
                return Err(Error::Config("slopes must satisfy |v| < 1".into()));
            }
        }
        Kind::Evolve => {
            let b = config.evolve.as_ref().unwrap();
            let cfg = require(lattice, "lattice")?;
            EvolveParams {
                dt: b.dt,
                steps: b.steps,
                method: b.method,
                tolerance: b.tolerance,
                max_iterations: b.max_iterations,
            }
            .validate()?;
            let psi = match &b.initial_file {
                Some(path) => {
                    let path = base_dir.join(path);
                    let bytes = fs::read(&path)
                        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                    extra_hash = sha256_hex(&bytes);
                    let psi = lattice::read_binary(bytes.as_slice())?;
                    if psi.cfg != cfg {
                        return Err(Error::ConfigMismatch);
                    }
                    psi
                }
                None => init_wavefunctional(require(config.initial.as_ref(), "initial")?, &cfg)?,
            };
            initial_state = Some(psi);
        }
        Kind::Surface => {
            let b = config.surface.as_ref().unwrap();
            let cfg = require(lattice, "lattice")?;
            if b.dt_values.is_empty() || b.dt_values.iter().any(|d| !(*d > 0.0)) {
                return Err(Error::Config("dt_values must be positive".into()));
            }
            for dt in &b.dt_values {
                build_schedule(&b.a, cfg.sites, cfg.spacing, b.t0, b.duration, *dt)?;
                build_schedule(&b.b, cfg.sites, cfg.spacing, b.t0, b.duration, *dt)?;
            }
            initial_state = Some(init_wavefunctional(require(config.initial.as_ref(), "initial")?, &cfg)?);
        }
        Kind::Feynman => {
            let b = config.feynman.as_ref().unwrap();
            let cfg = require(lattice, "lattice")?;
            require(config.initial.as_ref(), "initial")?;
            if !(b.total_time >= 0.0) || b.levels.is_empty() {
                return Err(Error::Config("need total_time >= 0 and at least one level".into()));
            }
            for &(dt, q) in &b.levels {
                LatticeConfig::new(cfg.sites, cfg.spacing, q, cfg.extent, cfg.h)?;
                if !(dt > 0.0) {
                    return Err(Error::Config(format!("level dt {dt} must be positive")));
                }
            }
        }
        Kind::Classical => {
            let b = config.classical.as_ref().unwrap();
            b.boundary().validate()?;
            b.boundary().rows_for(b.dt_c)?;
            if !(b.fd_epsilon > 0.0) {
                return Err(Error::Config("fd_epsilon must be positive".into()));
            }
            legendre_transform(&lagrangian)?;
        }
    }
    let mut canonical = config.clone();
    canonical.output_dir = PathBuf::new();
    let hash = sha256_hex(format!("{}{extra_hash}", serde_json::to_string(&canonical).unwrap()).as_bytes());
    Ok(Prepared {
        config,
        kind,
        lagrangian,
        lattice,
        initial_state,
        hash,
    })
}

fn build_schedule(
    s: &ScheduleBlock,
    sites: usize,
    spacing: f64,
    t0: f64,
    duration: f64,
    dt: f64,
) -> Result<DeformationSchedule> {
    match (&s.order, &s.pattern) {
        (Some(order), None) => DeformationSchedule::flat_to_flat(sites, spacing, t0, duration, dt, *order),
        (None, Some(pattern)) => {
            let ratio = duration / dt;
            let reps = ratio.round();
            if (ratio - reps).abs() > 1e-9 * ratio.max(1.0) {
                return Err(Error::InvalidSchedule(format!("duration {duration} is not a multiple of dt {dt}")));
            }
            let mut steps = Vec::with_capacity(pattern.len() * reps as usize);
            for _ in 0..reps as usize {
                steps.extend(pattern.iter().map(|&(site, k)| Deformation { site, dt: k * dt }));
            }
            DeformationSchedule::new(SpacelikeSurface::flat(sites, t0, spacing), steps)
        }
        _ => Err(Error::Config("a schedule needs exactly one of `order` or `pattern`".into())),
    }
}

/// Files written by one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Artifact name to SHA-256.
    pub files: BTreeMap<String, String>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

struct Writer {
    dir: PathBuf,
    stamp: serde_json::Value,
    files: BTreeMap<String, String>,
}

impl Writer {
    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Pretty JSON with `version` and `config_hash` prepended.
    fn json(&mut self, name: &str, body: serde_json::Value) -> Result<()> {
        let mut doc = self.stamp.clone();
        doc["result"] = body;
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Io(e.to_string()))? + "\n";
        self.bytes(name, text.as_bytes())
    }
}

/// Runs `command` on the config at `path`, returning the manifest.
pub fn run_command(command: &Command) -> Result<Manifest> {
    let (wanted, args) = match command {
        Command::Legendre(a) => (Some(Kind::Legendre), a),
        Command::Evolve(a) => (Some(Kind::Evolve), a),
        Command::Surface(a) => (Some(Kind::Surface), a),
        Command::Feynman(a) => (Some(Kind::Feynman), a),
        Command::Classical(a) => (Some(Kind::Classical), a),
        Command::Run(a) => (None, a),
    };
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let base = args.config.parent().unwrap_or(Path::new("."));
    let mut config = parse_config(&text)?;
    let out = match &args.output_dir {
        Some(d) => d.clone(),
        None => base.join(&config.output_dir),
    };
    config.output_dir = out.clone();
    let prepared = prepare(config, wanted, base)?;
    fs::create_dir_all(&out)?;
    execute(prepared, out)
}

fn execute(p: Prepared, dir: PathBuf) -> Result<Manifest> {
    let command = format!("{:?}", p.kind).to_lowercase();
    let mut w = Writer {
        dir,
        stamp: json!({ "version": VERSION, "command": command, "config_hash": p.hash }),
        files: BTreeMap::new(),
    };
    match p.kind {
        Kind::Legendre => run_legendre(&p, &mut w)?,
        Kind::Evolve => run_evolve(&p, &mut w)?,
        Kind::Surface => run_surface(&p, &mut w)?,
        Kind::Feynman => run_feynman(&p, &mut w)?,
        Kind::Classical => run_classical(&p, &mut w)?,
    }
    let manifest = Manifest {
        version: VERSION.to_string(),
        command,
        config_hash: p.hash.clone(),
        seed: p.config.seed,
        files: w.files.clone(),
        output_dir: w.dir.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))? + "\n";
    fs::write(w.dir.join("manifest.json"), text)?;
    Ok(manifest)
}

/// `|H(z, z_s, p; v) - (p zt - F)|` with `zt` solving `p = dF/dzt` at fixed `z_s`.
pub fn legendre_identity_error(spec: &LagrangianSpec, z: f64, zs: f64, p: f64, v: f64) -> Result<f64> {
    let (c, b, g) = (spec.kinetic_coeff, spec.kinetic_linear, spec.gradient_coeff);
    let a = c + g * v * v;
    if !(a > 0.0) {
        return Err(Error::DegenerateKinetic(a));
    }
    let zt = (p - b + 2.0 * g * v * zs) / (2.0 * a);
    let f = spec.eval(z, zt, zs - v * zt);
    let h = legendre_transform(spec)?.eval(z, zs, p, v)?;
    Ok((h - (p * zt - f)).abs())
}

fn run_legendre(p: &Prepared, w: &mut Writer) -> Result<()> {
    let block = p.config.legendre.as_ref().unwrap();
    let ham = legendre_transform(&p.lagrangian)?;
    let normal = ham.normal_form();
    w.bytes("hamiltonian.txt", format!("{normal}\n").as_bytes())?;
    let slopes = block
        .slopes
        .iter()
        .map(|&v| ham.at_slope(v).map(|c| json!({ "v": v, "density": c.format(&ham.potential) })))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.config.seed);
    let mut max_error: f64 = 0.0;
    let mut taken = 0;
    while taken < block.samples {
        let (z, zs, mom) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let v = rng.gen_range(-0.9..0.9);
        match legendre_identity_error(&p.lagrangian, z, zs, mom, v) {
            Ok(e) => {
                max_error = max_error.max(e);
                taken += 1;
            }
            Err(Error::DegenerateKinetic(_)) => {}
            Err(e) => return Err(e),
        }
    }
    w.json(
        "legendre.json",
        json!({
            "lagrangian": p.lagrangian.to_string(),
            "normal_form": normal,
            "slopes": slopes,
            "identity": { "samples": block.samples, "max_error": max_error },
        }),
    )
}

fn encode(psi: &WaveFunctional) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    lattice::write_binary(psi, &mut buf)?;
    Ok(buf)
}

fn run_evolve(p: &Prepared, w: &mut Writer) -> Result<()> {
    let block = p.config.evolve.as_ref().unwrap();
    let lat = p.config.lattice.unwrap();
    let psi0 = p.initial_state.as_ref().unwrap();
    let ham = legendre_transform(&p.lagrangian)?;
    let op = compile_hamiltonian(&ham, &psi0.cfg, None, lat.compile())?;
    let params = EvolveParams {
        dt: block.dt,
        steps: block.steps,
        method: block.method,
        tolerance: block.tolerance,
        max_iterations: block.max_iterations,
    };
    let (psi, rows) = evolve_logged(&op, psi0, &params)?;
    let mut csv = TrajectoryRow::csv_header(psi0.cfg.sites) + "\n";
    for r in &rows {
        csv += &r.csv_line();
        csv.push('\n');
    }
    w.bytes("trajectory.csv", csv.as_bytes())?;
    w.bytes("initial_state.bin", &encode(psi0)?)?;
    w.bytes("final_state.bin", &encode(&psi)?)?;
    let first = &rows[0].observables;
    let last = &rows[rows.len() - 1].observables;
    w.json(
        "evolve.json",
        json!({
            "method": block.method,
            "dt": block.dt,
            "steps": block.steps,
            "total_time": params.total_time(),
            "norm_drift": (last.norm - first.norm).abs(),
            "energy_drift": (last.energy - first.energy).abs(),
            "initial": first,
            "final": last,
        }),
    )
}

fn run_surface(p: &Prepared, w: &mut Writer) -> Result<()> {
    let b = p.config.surface.as_ref().unwrap();
    let lat = p.config.lattice.unwrap();
    let psi0 = p.initial_state.as_ref().unwrap();
    let (n, a) = (psi0.cfg.sites, psi0.cfg.spacing);
    let ham = legendre_transform(&p.lagrangian)?;
    let opts = DeformOptions {
        integrator: b.integrator,
        compile: lat.compile(),
        ..Default::default()
    };
    let rep = integrability_test(
        &ham,
        psi0,
        |dt| build_schedule(&b.a, n, a, b.t0, b.duration, dt),
        |dt| build_schedule(&b.b, n, a, b.t0, b.duration, dt),
        &b.dt_values,
        &opts,
    )?;
    w.json("integrability.json", serde_json::to_value(&rep).unwrap())
}

fn run_feynman(p: &Prepared, w: &mut Writer) -> Result<()> {
    let b = p.config.feynman.as_ref().unwrap();
    let lat = p.config.lattice.unwrap();
    let cfg = p.lattice.unwrap();
    let init = p.config.initial.as_ref().unwrap();
    let base = LadderBase {
        sites: cfg.sites,
        spacing: cfg.spacing,
        extent: cfg.extent,
        h: cfg.h,
    };
    let rep = feynman_vs_schrodinger(init, &p.lagrangian, base, b.total_time, &b.levels, b.kernel, lat.scheme)?;
    let psi0 = init_wavefunctional(init, &cfg)?;
    let identity = match b.identity_steps {
        Some(steps) => {
            let spec = PathIntegralSpec {
                steps,
                dt: b.levels[0].0,
                kernel: b.kernel,
                scheme: lat.scheme,
            };
            let brute = brute_force_state(&psi0, &spec, &p.lagrangian)?;
            let transfer = TransferOperator::new(&p.lagrangian, &cfg, &spec)?.apply_n(&psi0, steps + 1)?;
            let d = brute.distance(&transfer)?;
            json!({ "steps": steps, "dt": spec.dt, "q": cfg.q, "distance": d, "equal": d <= 1e-12 })
        }
        None => serde_json::Value::Null,
    };
    let &(dt, _) = b.levels.last().unwrap();
    let n = (b.total_time / dt).round() as usize;
    let spec = PathIntegralSpec {
        steps: n.saturating_sub(1),
        dt,
        kernel: b.kernel,
        scheme: lat.scheme,
    };
    let fin = TransferOperator::new(&p.lagrangian, &cfg, &spec)?.apply_n(&psi0, n)?;
    let mut csv = Vec::new();
    lattice::write_csv(&fin, &mut csv)?;
    w.bytes("amplitudes.csv", &csv)?;
    w.json("feynman.json", json!({ "ladder": rep, "identity": identity }))
}

fn run_classical(p: &Prepared, w: &mut Writer) -> Result<()> {
    let b = p.config.classical.as_ref().unwrap();
    let bd = b.boundary();
    let sol = solve_extremal(&bd, &p.lagrangian, b.dt_c)?;
    let mut csv = Vec::new();
    sol.write_csv(&mut csv)?;
    w.bytes("extremal.csv", &csv)?;
    let hj = if b.hamilton_jacobi {
        Some(hj_residuals(&bd, &p.lagrangian, b.dt_c, b.fd_epsilon)?)
    } else {
        None
    };
    let reparam = if b.reparameterization {
        Some(reparameterization_check(&bd, &p.lagrangian, b.dt_c)?)
    } else {
        None
    };
    w.json(
        "classical.json",
        json!({
            "action": sol.action,
            "rows": sol.rows,
            "residual": sol.residual,
            "condition": sol.condition,
            "newton_iterations": sol.newton_iterations,
            "momenta": boundary_momenta(&sol, &p.lagrangian),
            "hamilton_jacobi": hj,
            "reparameterization": reparam,
        }),
    )
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS };
        }
    };
    match run_command(&cli.command) {
        Ok(m) => {
            if m.files.contains_key("hamiltonian.txt") {
                if let Ok(text) = fs::read_to_string(m.output_dir.join("hamiltonian.txt")) {
                    print!("{text}");
                }
            }
            for (name, hash) in &m.files {
                eprintln!("{hash}  {name}");
            }
            exit::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE: &str = r#"
[lagrangian]
text = "0.5*zt^2 - 0.5*zx^2 - 0.5*m^2*z^2"
params = { m = 1.0 }

[legendre]
samples = 20
"#;

    #[test]
    fn parses_minimal_config() {
        let c = parse_config(FREE).unwrap();
        assert_eq!(c.legendre.unwrap().samples, 20);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn schema_errors_carry_field_path() {
        let bad = FREE.replace("samples = 20", "samples = \"many\"");
        let msg = parse_config(&bad).unwrap_err().to_string();
        assert!(msg.contains("legendre.samples"), "{msg}");
        let unknown = FREE.replace("samples = 20", "sample = 20");
        assert!(parse_config(&unknown).is_err());
    }

    #[test]
    fn rejects_two_command_blocks() {
        let two = format!("{FREE}\n[classical]\nt0=[0.0]\nt1=[1.0]\nz0=[0.0]\nz1=[0.0]\ndt_c=0.1\n");
        let c = parse_config(&two).unwrap();
        assert!(matches!(prepare(c, None, Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_subcommand_is_config_error() {
        let c = parse_config(FREE).unwrap();
        assert!(matches!(prepare(c, Some(Kind::Evolve), Path::new(".")), Err(Error::Config(_))));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::SingularBvp { condition: 1e13 }), exit::NUMERICAL);
        assert_eq!(exit_code(&Error::EnumerationTooLarge { count: 1, max: 0 }), exit::RESOURCE);
        assert_eq!(exit_code(&Error::Syntax { pos: 3, msg: String::new() }), exit::CONFIG);
    }

    #[test]
    fn identity_error_is_roundoff() {
        let spec = LagrangianSpec::new(0.7, 0.2, -0.4, crate::poly::Poly::new(vec![0.1, 0.0, 0.3])).unwrap();
        assert!(legendre_identity_error(&spec, 0.3, -0.5, 1.1, 0.6).unwrap() < 1e-12);
    }
}
