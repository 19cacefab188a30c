//! The four run commands. Each returns a report on success or a
//! [`Failure`] carrying its exit code.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use pseudosolid::config::RunConfig;
use pseudosolid::mesh::vtk::VtkData;
use pseudosolid::mesh::{mesh_disk, Mesh};
use pseudosolid::objective::{Objective, TargetShape};
use pseudosolid::optimize::{initial_design, run_algorithm1, StageSnapshot};
use pseudosolid::rbf::{DesignVector, RbfGrid};
use pseudosolid::sensitivity::{grad_check, knots_off_mesh, Evaluator};
use pseudosolid::state::{annulus_warm_start, write_newton_log, StateProblem, StateVector};
use pseudosolid::verify::{annulus_run, observed_order, AnnulusSetup};
use pseudosolid::{analytic, Error};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::svg::{contour_segments, Plot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

/// Largest RBF grid `grad-check` accepts.
pub const GRAD_CHECK_MAX_N: usize = 8;
/// Smallest mesh size `grad-check` accepts.
pub const GRAD_CHECK_MIN_H: f64 = 0.2;
pub const GRAD_CHECK_TOL: f64 = 1e-3;
pub const ANALYTIC_TOL: f64 = 0.01;

#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Solver(String),
    /// The run finished but missed its acceptance threshold; the report is
    /// still printed.
    Threshold(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Solver(_) => EXIT_SOLVER,
            Self::Threshold(_) => EXIT_THRESHOLD,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Self::Validation(m) | Self::Solver(m) | Self::Threshold(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::InvalidParameter(_) => Self::Validation(e.to_string()),
            _ => Self::Solver(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Validation(e.to_string())
    }
}

pub type Outcome = std::result::Result<String, Failure>;

/// Flags shared by every command.
#[derive(Debug, Clone, Default)]
pub struct Global {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub deterministic: bool,
}

impl Global {
    /// Loads the configuration and applies command-line overrides.
    pub fn load(&self) -> std::result::Result<RunConfig, Failure> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| Failure::Validation("--config is required for this command".into()))?;
        let mut cfg = RunConfig::load(path)?;
        self.apply(&mut cfg);
        Ok(cfg)
    }

    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(o) = &self.out {
            cfg.output = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
    }

    fn out_dir(&self, cfg: Option<&RunConfig>) -> std::result::Result<PathBuf, Failure> {
        let dir = match (&self.out, cfg) {
            (Some(o), _) => o.clone(),
            (None, Some(c)) => c.output.clone(),
            (None, None) => PathBuf::from("out"),
        };
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }
}

fn objective(cfg: &RunConfig) -> Objective {
    let mut o = Objective::new(cfg.target.clone(), cfg.eta);
    o.samples = cfg.samples;
    o
}

fn reference_disk(cfg: &RunConfig) -> std::result::Result<Mesh, Failure> {
    let c = analytic::bernoulli_radius(cfg.initial_radius, cfg.gamma)?;
    Ok(mesh_disk(c, cfg.h, cfg.max_nodes)?)
}

fn write_boundary_csv(path: &Path, deformed: &[[f64; 2]], boundary: &[usize]) -> std::io::Result<()> {
    let mut s = String::from("theta,r,x,y\n");
    for &i in boundary {
        let [x, y] = deformed[i];
        let t = y.atan2(x).rem_euclid(std::f64::consts::TAU);
        let _ = writeln!(s, "{t:.16e},{:.16e},{x:.16e},{y:.16e}", x.hypot(y));
    }
    fs::write(path, s)
}

fn state_vtk(deformed: &Mesh, q: &StateVector, h: Vec<f64>, title: &str) -> VtkData {
    let d = q.displacement();
    VtkData::from_mesh(deformed, title)
        .with_point_scalar("u", q.u.clone())
        .with_point_scalar("H", h)
        .with_point_scalar("vx", d.iter().map(|v| v[0]).collect())
        .with_point_scalar("vy", d.iter().map(|v| v[1]).collect())
}

fn target_curve(target: &TargetShape) -> Vec<[f64; 2]> {
    let s = target.samples(512);
    s.theta.iter().zip(&s.values).map(|(t, r)| [r * t.cos(), r * t.sin()]).collect()
}

/// Renders the indicator and potential plots of a deformed state.
pub fn render_plots(dir: &Path, deformed: &Mesh, u: &[f64], h: &[f64], target: &TargetShape) -> std::io::Result<()> {
    let target = target_curve(target);
    let boundary: Vec<[f64; 2]> = deformed.boundary.iter().map(|&i| deformed.nodes[i]).collect();
    let mut extent = deformed.nodes.clone();
    extent.extend_from_slice(&target);

    let mut p = Plot::covering(&extent, 640.0);
    p.shade_triangles(deformed, h, 0.0, 1.0);
    for (level, color) in [(0.05, "#1f77b4"), (0.5, "#2ca02c"), (0.95, "#d62728")] {
        p.segments(&contour_segments(deformed, h, level), color, 1.5);
    }
    p.closed_curve(&boundary, "black", 1.5, false);
    p.closed_curve(&target, "#ff7f0e", 1.5, true);
    p.label("H at 0.05 / 0.5 / 0.95, target dashed");
    fs::write(dir.join("heaviside.svg"), p.to_svg())?;

    let mut p = Plot::covering(&extent, 640.0);
    let umax = u.iter().cloned().fold(1.0, f64::max);
    p.shade_triangles(deformed, u, 0.0, umax);
    for k in 1..10 {
        p.segments(&contour_segments(deformed, u, 0.1 * k as f64), "#1f77b4", 1.0);
    }
    p.closed_curve(&boundary, "black", 1.5, false);
    p.closed_curve(&target, "#ff7f0e", 1.5, true);
    p.label("u, levels 0.1 ... 0.9");
    fs::write(dir.join("potential.svg"), p.to_svg())
}

/// Annulus solve at `h` and `h/2` against the closed-form radius.
pub fn verify_analytic(g: &Global) -> Outcome {
    let mut setup = AnnulusSetup::default();
    let mut h = 0.05;
    let cfg = match &g.config {
        Some(_) => Some(g.load()?),
        None => None,
    };
    if let Some(c) = &cfg {
        setup.inner_radius = c.initial_radius;
        setup.gamma = c.gamma;
        setup.epsilon = c.epsilon;
        setup.grid_size = c.grid_size;
        setup.domain = c.domain;
        setup.max_nodes = c.max_nodes;
        setup.newton = c.newton();
        h = c.h;
    }
    let dir = g.out_dir(cfg.as_ref())?;
    let c = analytic::bernoulli_radius(setup.inner_radius, setup.gamma)?;
    let mut report = format!(
        "R = {}, gamma = {}, epsilon = {:e}\nC(R, gamma) = {c:.12}\n",
        setup.inner_radius, setup.gamma, setup.epsilon
    );
    let mut csv = String::from("h,delta,nodes,triangles,newton_iterations,mean_radius,rel_error,max_rel_error\n");
    let mut runs = Vec::new();
    for hh in [h, 0.5 * h] {
        let run = annulus_run(&setup, hh, 0.5 * hh)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:.12},{:.6e},{:.6e}",
            run.h,
            run.delta,
            run.nodes,
            run.triangles,
            run.log.len() - 1,
            run.mean_radius,
            run.rel_error(),
            run.max_rel_error
        );
        let _ = writeln!(
            report,
            "h = {:<8} nodes = {:<7} Newton = {:<3} mean radius = {:.7}  rel. error = {:+.4e}  max = {:.4e}",
            run.h,
            run.nodes,
            run.log.len() - 1,
            run.mean_radius,
            run.rel_error(),
            run.max_rel_error
        );
        runs.push(run);
    }
    let order = observed_order(runs[0].rel_error(), runs[1].rel_error());
    let _ = writeln!(report, "observed order = {order:.3}");
    fs::write(dir.join("analytic.csv"), csv)?;
    let err = runs[0].rel_error().abs();
    if err > ANALYTIC_TOL {
        let _ = writeln!(report, "FAIL: radius error {err:.4e} exceeds {ANALYTIC_TOL}");
        return Err(Failure::Threshold(report));
    }
    Ok(report)
}

/// One state solve for a given or fitted design.
pub fn solve_state(g: &Global, alpha_file: Option<&Path>) -> Outcome {
    let cfg = g.load()?;
    let dir = g.out_dir(Some(&cfg))?;
    let grid = RbfGrid::new(cfg.grid_size, cfg.domain)?;
    let alpha = match alpha_file {
        Some(p) => DesignVector::read(p, cfg.alpha_min, cfg.alpha_max)?,
        None => initial_design(&grid, &cfg)?,
    };
    if alpha.n() != cfg.grid_size {
        return Err(Failure::Validation(format!(
            "design is {}x{} but grid_size is {}",
            alpha.n(),
            alpha.n(),
            cfg.grid_size
        )));
    }
    let mut report = String::new();
    let mut notes = String::new();
    if alpha.alpha.iter().all(|&a| a == 0.0) {
        notes.push_str("DEGENERATE: psi is identically zero, H = 1/2 everywhere\n");
    }
    let mesh = reference_disk(&cfg)?;
    let pb = StateProblem::new(&mesh, &grid, &alpha.alpha, cfg.state_params(cfg.solve_delta()))?;
    let q0 = annulus_warm_start(&mesh, cfg.initial_radius, cfg.gamma)?;
    let mut log = Vec::new();
    let res = pb.newton_solve(q0, cfg.newton(), &mut log);
    write_newton_log(&log, BufWriter::new(fs::File::create(dir.join("newton.csv"))?))?;
    let q = match res {
        Ok(q) => q,
        Err(e) => {
            notes.push_str(&format!("{e}\n"));
            fs::write(dir.join("solve.log"), &notes)?;
            return Err(Failure::Solver(format!("{notes}state solve failed")));
        }
    };
    let x = pb.deformed_nodes(&q)?;
    let deformed = mesh.deform(&q.displacement());
    let h = pb.nodal_heaviside(&q)?;
    state_vtk(&deformed, &q, h, "state").write(&dir.join("state.vtk"))?;
    write_boundary_csv(&dir.join("boundary.csv"), &x, &mesh.boundary)?;
    let value = objective(&cfg).evaluate(&pb, &q)?;
    let radii: Vec<f64> = mesh.boundary.iter().map(|&i| x[i][0].hypot(x[i][1])).collect();
    let (rmin, rmax) = radii.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let _ = writeln!(
        report,
        "{notes}nodes = {}, triangles = {}, Newton iterations = {}\nboundary radius in [{rmin:.6}, {rmax:.6}]\ntracking = {:.6e}, penalty = {:.6e}",
        mesh.num_nodes(),
        mesh.num_triangles(),
        log.len() - 1,
        value.tracking,
        value.penalty
    );
    fs::write(dir.join("solve.log"), &report)?;
    Ok(report)
}

fn snapshot_fields(cfg: &RunConfig, grid: &RbfGrid, s: &StageSnapshot) -> pseudosolid::Result<(Mesh, Vec<f64>)> {
    let pb = StateProblem::new(&s.reference, grid, &s.alpha.alpha, cfg.state_params(s.delta))?;
    let h = pb.nodal_heaviside(&s.state)?;
    Ok((s.reference.deform(&s.state.displacement()), h))
}

/// Full staged optimization run.
pub fn optimize(g: &Global) -> Outcome {
    let cfg = g.load()?;
    let dir = g.out_dir(Some(&cfg))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let grid = RbfGrid::new(cfg.grid_size, cfg.domain)?;
    let mut io_error: Option<std::io::Error> = None;
    let outcome = run_algorithm1(&cfg, |s| {
        eprintln!(
            "stage {}: delta = {:.4}, tracking = {:.4e}, penalty = {:.4e}",
            s.stage, s.delta, s.value.tracking, s.value.penalty
        );
        let r = snapshot_fields(&cfg, &grid, s)
            .map_err(|e| std::io::Error::other(e.to_string()))
            .and_then(|(deformed, h)| {
                state_vtk(&deformed, &s.state, h, &format!("stage {}", s.stage))
                    .write(&dir.join(format!("stage_{:02}.vtk", s.stage)))
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
                fs::write(dir.join(format!("alpha_{:02}.txt", s.stage)), s.alpha.to_text())
            });
        if let Err(e) = r {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(e.into());
    }
    outcome.trace.write_csv(BufWriter::new(fs::File::create(dir.join("trace.csv"))?))?;
    outcome.alpha.write(&dir.join("alpha.txt"))?;
    let fin = &outcome.final_stage;
    let (deformed, h) = snapshot_fields(&cfg, &grid, fin)?;
    state_vtk(&deformed, &fin.state, h.clone(), "final").write(&dir.join("final.vtk"))?;
    write_boundary_csv(&dir.join("boundary.csv"), &deformed.nodes, &deformed.boundary)?;
    render_plots(&dir, &deformed, &fin.state.u, &h, &cfg.target)?;

    let components = deformed.node_components(&h.iter().map(|&v| v > 0.95).collect::<Vec<_>>());
    let first = outcome.trace.first_accepted().map(|r| r.tracking + r.penalty).unwrap_or(f64::NAN);
    let mut report = String::new();
    let _ = writeln!(report, "initial objective = {first:.6e}");
    let _ = writeln!(
        report,
        "final tracking = {:.6e}, penalty = {:.6e}, total = {:.6e}",
        fin.value.tracking,
        fin.value.penalty,
        fin.value.total()
    );
    let _ = writeln!(
        report,
        "accepted steps = {}, rejections = {}, evaluations = {}",
        outcome.trace.accepted().count(),
        outcome.trace.rejections(),
        outcome.trace.evaluations()
    );
    let _ = writeln!(report, "components of {{H > 0.95}} = {components}");
    for (stage, before, after) in &outcome.remesh_deltas {
        let _ = writeln!(report, "re-mesh before stage {stage}: {before:.6e} -> {after:.6e}");
    }
    fs::write(dir.join("summary.txt"), &report)?;
    Ok(report)
}

/// Adjoint gradient against central differences on sampled components.
pub fn grad_check_cmd(g: &Global) -> Outcome {
    let cfg = g.load()?;
    let mut bad = Vec::new();
    if cfg.grid_size > GRAD_CHECK_MAX_N {
        bad.push(format!("grad-check needs grid_size <= {GRAD_CHECK_MAX_N} (got {})", cfg.grid_size));
    }
    if cfg.h < GRAD_CHECK_MIN_H {
        bad.push(format!("grad-check needs h >= {GRAD_CHECK_MIN_H} (got {})", cfg.h));
    }
    if !bad.is_empty() {
        return Err(Failure::Validation(bad.join("\n")));
    }
    let dir = g.out_dir(Some(&cfg))?;
    let grid = RbfGrid::new(cfg.grid_size, cfg.domain)?;
    let alpha = initial_design(&grid, &cfg)?;
    let mesh = reference_disk(&cfg)?;
    let obj = objective(&cfg);
    let ev = Evaluator {
        mesh: &mesh,
        grid: &grid,
        params: cfg.state_params(cfg.solve_delta()),
        objective: &obj,
        newton: cfg.newton(),
    };
    let q0 = annulus_warm_start(&mesh, cfg.initial_radius, cfg.gamma)?;
    let base = ev.evaluate(&alpha.alpha, q0, &mut Vec::new())?;
    let deformed = mesh.deform(&base.state.displacement());
    let off = knots_off_mesh(&grid, &deformed.nodes);
    let on: Vec<usize> = (0..grid.len()).filter(|k| !off.contains(k)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut comps: Vec<usize> = on.choose_multiple(&mut rng, cfg.grad_check_samples).copied().collect();
    comps.sort_unstable();
    if let Some(&k) = off.first() {
        comps.push(k);
    }
    let rows = grad_check(&ev, &alpha.alpha, &base.state, &comps)?;
    let mut report = format!(
        "{:>9} {:>16} {:>16} {:>11} {:>7} {:>7}\n",
        "component", "adjoint", "finite diff", "rel. error", "solves", "newton"
    );
    let mut csv = String::from("component,adjoint,finite_difference,relative_error,newton_solves,newton_iterations\n");
    for r in &rows {
        let _ = writeln!(
            report,
            "{:>9} {:>16.8e} {:>16.8e} {:>11.3e} {:>7} {:>7}",
            r.component, r.adjoint, r.finite_difference, r.relative_error, r.newton_solves, r.newton_iterations
        );
        let _ = writeln!(
            csv,
            "{},{:.16e},{:.16e},{:.6e},{},{}",
            r.component, r.adjoint, r.finite_difference, r.relative_error, r.newton_solves, r.newton_iterations
        );
    }
    fs::write(dir.join("grad_check.csv"), csv)?;
    let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    let _ = writeln!(report, "max relative error = {worst:.3e}");
    if worst > GRAD_CHECK_TOL {
        return Err(Failure::Threshold(report));
    }
    Ok(report)
}
