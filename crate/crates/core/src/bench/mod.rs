//! Benchmark configuration, problem builders and the offline/online/compare/report drivers.

mod config;
mod setup;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    AxisSpec, BenchmarkConfig, BenchmarkKind, FixedSpec, FluxSpec, GraetzSpec, LambdaSpec, OnlineSpec, PlacementSpec,
    ReferenceSpec, Scale, ScaleSpec, Segments, Test1Spec, ThermalSpec, WingSide,
};
pub use setup::{GlobalProblem, Placement, Setup};

use crate::error::{Error, Result};
use crate::fem::{l2_error, write_vtk, StructuredMesh};
use crate::reference::{analytic_test1, monolithic_fem, solve_and_glue, DdMethod, DdResult};
use crate::schwarz::{FemSolver, LocalSolver, SurrogateSolver};
use crate::subdomain::{build_surrogate, partition_active, SurrogateModel};

/// Surrogates of all reference subdomains of a setup.
pub fn build_offline(setup: &Setup, workers: usize) -> Result<Vec<Arc<SurrogateModel>>> {
    setup
        .references
        .iter()
        .map(|p| {
            let active = partition_active(p.partition.n_interface_dofs(), setup.config.lambda.max_active_for(&p.id))?;
            info!("offline `{}`: {} interface parameters in {} sets", p.id, p.partition.n_interface_dofs(), active.n_sets());
            Ok(Arc::new(build_surrogate(p, &active, &setup.config.pgd, workers)?))
        })
        .collect()
}

pub fn surrogate_solvers(setup: &Setup, models: &[Arc<SurrogateModel>]) -> Result<Vec<Arc<dyn LocalSolver>>> {
    setup
        .references
        .iter()
        .zip(models)
        .map(|(p, m)| {
            if m.id != p.id || m.mu_axes != p.mu_axes || m.lambda_axis != *p.lambda_axis() {
                return Err(Error::Container(format!(
                    "surrogate `{}` was built for a different configuration or scale",
                    m.id
                )));
            }
            Ok(Arc::new(SurrogateSolver::new(m.clone(), &p.partition)?) as Arc<dyn LocalSolver>)
        })
        .collect()
}

trait LambdaAxisRef {
    fn lambda_axis(&self) -> &crate::param_grid::ParamAxis;
}

impl LambdaAxisRef for crate::subdomain::SubdomainProblem {
    fn lambda_axis(&self) -> &crate::param_grid::ParamAxis {
        &self.lambda_axis
    }
}

pub fn fem_solvers(setup: &Setup) -> Vec<Arc<dyn LocalSolver>> {
    setup
        .references
        .iter()
        .map(|p| Arc::new(FemSolver::new(p.clone())) as Arc<dyn LocalSolver>)
        .collect()
}

/// A glued solution at one parameter point.
#[derive(Debug, Clone)]
pub struct Run {
    pub mu: Vec<f64>,
    pub mesh: StructuredMesh,
    pub dd: DdResult,
    pub seconds: f64,
}

/// Solve the interface system with the given local solvers and glue onto the global mesh.
pub fn run_schwarz(setup: &Setup, solvers: &[Arc<dyn LocalSolver>], mu: &[f64], method: DdMethod) -> Result<Run> {
    let global = setup.global_problem(mu)?;
    let instances = setup.instances(solvers, mu)?;
    let start = Instant::now();
    let dd = solve_and_glue(instances, &setup.fixed(), global.problem.mesh.nodes(), method)?;
    Ok(Run {
        mu: mu.to_vec(),
        mesh: global.problem.mesh,
        dd,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Monolithic FEM field and its mesh.
pub fn run_monolithic(setup: &Setup, mu: &[f64]) -> Result<(StructuredMesh, Vec<f64>)> {
    let g = setup.global_problem(mu)?;
    let u = monolithic_fem(&g.problem, &g.point)?;
    Ok((g.problem.mesh, u))
}

/// `max |u − v| / max |v|`.
pub fn scaled_max_error(u: &[f64], v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let d = u.iter().zip(v).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    if m > 0.0 {
        d / m
    } else {
        d
    }
}

/// Relative L² error against the closed-form solution of the diffusion benchmark.
pub fn test1_relative_l2(mesh: &StructuredMesh, u: &[f64], mu: f64) -> Result<f64> {
    let (e, n) = l2_error(mesh, u, |x, y| analytic_test1(mu, x, y), 4)?;
    Ok(e / n)
}

/// Error measure used by the benchmark and the reference it is measured against.
pub fn benchmark_error(setup: &Setup, mesh: &StructuredMesh, u: &[f64], mu: &[f64], reference: &[f64]) -> Result<f64> {
    match setup.kind() {
        BenchmarkKind::Test1 => test1_relative_l2(mesh, u, mu[0]),
        _ => Ok(scaled_max_error(u, reference)),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub id: String,
    pub interface_parameters: usize,
    pub subproblems: usize,
    pub raw_modes: usize,
    pub compressed_modes: usize,
    pub max_compressed_modes: usize,
    pub tolerance_met: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OfflineSummary {
    pub benchmark: BenchmarkKind,
    pub scale: Scale,
    pub models: Vec<ModelSummary>,
}

pub fn offline_summary(setup: &Setup, models: &[Arc<SurrogateModel>]) -> OfflineSummary {
    OfflineSummary {
        benchmark: setup.kind(),
        scale: setup.scale,
        models: models
            .iter()
            .map(|m| ModelSummary {
                id: m.id.clone(),
                interface_parameters: m.interface_dofs.len(),
                subproblems: m.stats.len(),
                raw_modes: m.raw_modes(),
                compressed_modes: m.compressed_modes(),
                max_compressed_modes: m.stats.iter().map(|s| s.compressed_modes).max().unwrap_or(0),
                tolerance_met: m.stats.iter().all(|s| s.tolerance_met),
            })
            .collect(),
    }
}

fn surrogate_dir(out: &Path) -> PathBuf {
    out.join("surrogates")
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

/// Build and store all surrogates of a configuration.
pub fn cmd_offline(config: &Path, scale: Scale, out: &Path, workers: usize) -> Result<OfflineSummary> {
    let text = fs::read_to_string(config)?;
    let setup = Setup::new(BenchmarkConfig::from_toml(&text)?, scale)?;
    let start = Instant::now();
    let models = build_offline(&setup, workers)?;
    let seconds = start.elapsed().as_secs_f64();
    let dir = surrogate_dir(out);
    fs::create_dir_all(&dir)?;
    fs::write(out.join("config.toml"), &text)?;
    for m in &models {
        m.save(&dir)?;
    }
    let mut amp = csv::Writer::from_path(out.join("amplitudes.csv")).map_err(csv_err)?;
    amp.write_record(["subproblem", "mode", "relative_amplitude"]).map_err(csv_err)?;
    for m in &models {
        for s in &m.stats {
            for (k, a) in s.relative_amplitudes.iter().enumerate() {
                amp.write_record([s.name.clone(), (k + 1).to_string(), format!("{a:e}")]).map_err(csv_err)?;
            }
        }
    }
    amp.flush()?;
    let summary = offline_summary(&setup, &models);
    write_json(&out.join("offline_summary.json"), &summary)?;
    write_json(
        &out.join("offline_timing.json"),
        &serde_json::json!({ "seconds": seconds, "workers": workers, "subproblems": models.iter().flat_map(|m| m.stats.iter().map(|s| (s.name.clone(), s.seconds))).collect::<Vec<_>>() }),
    )?;
    Ok(summary)
}

pub fn load_models(setup: &Setup, out: &Path) -> Result<Vec<Arc<SurrogateModel>>> {
    let dir = surrogate_dir(out);
    setup
        .references
        .iter()
        .map(|p| Ok(Arc::new(SurrogateModel::load(&dir, &p.id)?)))
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineSummary {
    pub benchmark: BenchmarkKind,
    pub mu: Vec<f64>,
    pub unknowns: usize,
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub overlap_mismatch: f64,
    pub clamp_events: usize,
    /// Relative L² error against the closed form (diffusion benchmark) or scaled
    /// max error against monolithic FEM (other benchmarks).
    pub error: f64,
}

fn point_tag(mu: &[f64]) -> String {
    mu.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join("_")
}

fn write_residuals(path: &Path, history: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["iteration", "relative_residual"]).map_err(csv_err)?;
    for (k, r) in history.iter().enumerate() {
        w.write_record([k.to_string(), format!("{r:e}")]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Online solve at each point, writing a run directory per point.
pub fn cmd_online(config: &Path, scale: Scale, out: &Path, points: &[Vec<f64>]) -> Result<Vec<OnlineSummary>> {
    let setup = Setup::new(BenchmarkConfig::load(config)?, scale)?;
    let models = load_models(&setup, out)?;
    let solvers = surrogate_solvers(&setup, &models)?;
    let points = if points.is_empty() { default_points(&setup.config) } else { points.to_vec() };
    let mut out_list = Vec::new();
    for mu in &points {
        let run = run_schwarz(&setup, &solvers, mu, DdMethod::Gmres(setup.config.gmres))?;
        let (_, mono) = run_monolithic(&setup, mu)?;
        let error = benchmark_error(&setup, &run.mesh, &run.dd.field, mu, &mono)?;
        let sol = &run.dd.solution;
        let summary = OnlineSummary {
            benchmark: setup.kind(),
            mu: mu.clone(),
            unknowns: sol.lambda.len(),
            iterations: sol.iterations,
            converged: sol.converged,
            final_residual: sol.history.last().copied().unwrap_or(0.0),
            overlap_mismatch: run.dd.overlap_mismatch,
            clamp_events: sol.clamp_events,
            error,
        };
        let dir = out.join("online").join(point_tag(mu));
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("summary.json"), &summary)?;
        write_json(&dir.join("timing.json"), &serde_json::json!({ "seconds": run.seconds }))?;
        write_residuals(&dir.join("residuals.csv"), &sol.history)?;
        let scale_max = mono.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
        let err_map: Vec<f64> = match setup.kind() {
            BenchmarkKind::Test1 => {
                let scale_ex = run
                    .mesh
                    .nodes()
                    .iter()
                    .map(|p| analytic_test1(mu[0], p[0], p[1]).abs())
                    .fold(0.0_f64, f64::max);
                run.dd
                    .field
                    .iter()
                    .zip(run.mesh.nodes())
                    .map(|(u, p)| (u - analytic_test1(mu[0], p[0], p[1])).abs() / scale_ex)
                    .collect()
            }
            _ => run.dd.field.iter().zip(&mono).map(|(u, m)| (u - m).abs() / scale_max).collect(),
        };
        let mut f = std::io::BufWriter::new(fs::File::create(dir.join("field.vtk"))?);
        write_vtk(
            &mut f,
            &run.mesh,
            &[("u_pgd", &run.dd.field), ("u_fem", &mono), ("scaled_error", &err_map)],
        )?;
        info!(
            "online {:?}: {} iterations, error {:.3e}, overlap mismatch {:.3e}",
            mu, summary.iterations, summary.error, summary.overlap_mismatch
        );
        if sol.clamp_events > 0 && !sol.converged {
            log::warn!("interface values left their parameter range during the solve");
        }
        out_list.push(summary);
    }
    Ok(out_list)
}

/// Points from the configuration, or all named cases.
pub fn default_points(cfg: &BenchmarkConfig) -> Vec<Vec<f64>> {
    if !cfg.online.mu.is_empty() {
        return cfg.online.mu.clone();
    }
    cfg.thermal.as_ref().map(|t| t.cases.values().cloned().collect()).unwrap_or_default()
}

/// Uniformly random points in the parameter box.
pub fn random_points(cfg: &BenchmarkConfig, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..cfg.point_len())
                .map(|k| {
                    let (lo, hi) = cfg.point_bounds(k);
                    rng.random_range(lo..=hi)
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareRow {
    pub mu: Vec<f64>,
    pub pgd_error: f64,
    pub ddfem_error: f64,
    pub monolithic_error: f64,
    pub pgd_vs_ddfem: f64,
    pub pgd_iterations: usize,
    pub ddfem_iterations: usize,
    pub pgd_seconds: f64,
    pub ddfem_seconds: f64,
}

/// DD-PGD against DD-FEM and monolithic FEM at each point.
pub fn compare_points(setup: &Setup, models: &[Arc<SurrogateModel>], points: &[Vec<f64>]) -> Result<Vec<CompareRow>> {
    let pgd = surrogate_solvers(setup, models)?;
    let fem = fem_solvers(setup);
    let method = DdMethod::Gmres(setup.config.gmres);
    points
        .iter()
        .map(|mu| {
            let a = run_schwarz(setup, &pgd, mu, method)?;
            let b = run_schwarz(setup, &fem, mu, method)?;
            let (mesh, mono) = run_monolithic(setup, mu)?;
            let reference: &[f64] = match setup.kind() {
                BenchmarkKind::Thermal => &b.dd.field,
                _ => &mono,
            };
            Ok(CompareRow {
                mu: mu.clone(),
                pgd_error: benchmark_error(setup, &mesh, &a.dd.field, mu, reference)?,
                ddfem_error: benchmark_error(setup, &mesh, &b.dd.field, mu, reference)?,
                monolithic_error: benchmark_error(setup, &mesh, &mono, mu, reference)?,
                pgd_vs_ddfem: scaled_max_error(&a.dd.field, &b.dd.field),
                pgd_iterations: a.dd.solution.iterations,
                ddfem_iterations: b.dd.solution.iterations,
                pgd_seconds: a.seconds,
                ddfem_seconds: b.seconds,
            })
        })
        .collect()
}

pub fn cmd_compare(config: &Path, scale: Scale, out: &Path, points: &[Vec<f64>], seed: Option<u64>) -> Result<Vec<CompareRow>> {
    let setup = Setup::new(BenchmarkConfig::load(config)?, scale)?;
    let models = load_models(&setup, out)?;
    let points = if !points.is_empty() {
        points.to_vec()
    } else if let Some(s) = seed {
        random_points(&setup.config, s, setup.config.online.compare_random.max(1))
    } else if setup.config.online.compare_random > 0 {
        random_points(&setup.config, setup.config.online.seed, setup.config.online.compare_random)
    } else {
        default_points(&setup.config)
    };
    let rows = compare_points(&setup, &models, &points)?;
    let mut w = csv::Writer::from_path(out.join("compare.csv")).map_err(csv_err)?;
    w.write_record([
        "mu",
        "pgd_error",
        "ddfem_error",
        "monolithic_error",
        "pgd_vs_ddfem",
        "pgd_iterations",
        "ddfem_iterations",
        "pgd_seconds",
        "ddfem_seconds",
        "speedup",
    ])
    .map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            point_tag(&r.mu).replace('_', " "),
            format!("{:e}", r.pgd_error),
            format!("{:e}", r.ddfem_error),
            format!("{:e}", r.monolithic_error),
            format!("{:e}", r.pgd_vs_ddfem),
            r.pgd_iterations.to_string(),
            r.ddfem_iterations.to_string(),
            format!("{:.6}", r.pgd_seconds),
            format!("{:.6}", r.ddfem_seconds),
            format!("{:.2}", r.ddfem_seconds / r.pgd_seconds.max(1e-12)),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Merge the online runs found under each directory into `report.csv` and `residuals.csv` in `out`.
pub fn cmd_report(runs: &[PathBuf], out: &Path) -> Result<usize> {
    fs::create_dir_all(out)?;
    let mut found = Vec::new();
    for r in runs {
        let online = r.join("online");
        if !online.is_dir() {
            continue;
        }
        let mut dirs: Vec<PathBuf> = fs::read_dir(&online)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
        dirs.sort();
        found.extend(dirs);
    }
    let mut rep = csv::Writer::from_path(out.join("report.csv")).map_err(csv_err)?;
    rep.write_record(["run", "benchmark", "mu", "unknowns", "iterations", "converged", "error", "overlap_mismatch", "clamp_events"])
        .map_err(csv_err)?;
    let mut res = csv::Writer::from_path(out.join("residuals.csv")).map_err(csv_err)?;
    res.write_record(["run", "iteration", "relative_residual"]).map_err(csv_err)?;
    for d in &found {
        let s: OnlineSummary = serde_json::from_str(&fs::read_to_string(d.join("summary.json"))?)?;
        let run = d.display().to_string();
        rep.write_record([
            run.clone(),
            format!("{:?}", s.benchmark).to_lowercase(),
            point_tag(&s.mu).replace('_', " "),
            s.unknowns.to_string(),
            s.iterations.to_string(),
            s.converged.to_string(),
            format!("{:e}", s.error),
            format!("{:e}", s.overlap_mismatch),
            s.clamp_events.to_string(),
        ])
        .map_err(csv_err)?;
        let mut rd = csv::Reader::from_path(d.join("residuals.csv")).map_err(csv_err)?;
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            res.write_record([run.as_str(), &rec[0], &rec[1]]).map_err(csv_err)?;
        }
    }
    rep.flush()?;
    res.flush()?;
    Ok(found.len())
}
