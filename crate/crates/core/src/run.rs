//! Experiment orchestration: dispatch a validated config to the solvers and
//! persist the results.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::approx::{eval_sequence_energy, SawtoothSequence, StructuredDeformationSample};
use crate::bulk::{solve_mk, BulkCellSpec};
use crate::config::{ExperimentConfig, ProblemKind};
use crate::density::{validate_assumptions, CheckMode, PeriodicBulkDensity, PeriodicSurfaceDensity};
use crate::error::{Error, Result};
use crate::matrix::{fmt_vec, Mat};
use crate::oracle::{coarse_search_bulk, enumerate_two_phase};
use crate::store::{
    ApproxRow, BulkRow, ManifestEntry, OracleBulkRow, OracleSurfaceRow, ResultStore, SurfaceRow,
    ValidateRow,
};
use crate::surface::{estimate_hhom_shifted, CutGraph, SurfaceCellSpec, labeling_snapshot};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub config_hash: String,
    pub kind: ProblemKind,
    pub rows: usize,
    pub tables: Vec<PathBuf>,
    /// Every solve converged and every invariant check held.
    pub all_ok: bool,
    pub failures: Vec<String>,
}

/// Largest field written as a JSON snapshot.
const SNAPSHOT_CELLS: usize = 1 << 16;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    store: ResultStore,
    hash: String,
    w: PeriodicBulkDensity,
    psi: PeriodicSurfaceDensity,
    failures: Vec<String>,
    tables: Vec<PathBuf>,
    rows: usize,
}

fn required<'a, T>(list: &'a [T], name: &str) -> Result<&'a [T]> {
    if list.is_empty() {
        return Err(Error::Config {
            pointer: format!("/sweep/{name}"),
            message: "required for this kind".into(),
        });
    }
    Ok(list)
}

fn taus(cfg: &ExperimentConfig) -> Vec<Vec<f64>> {
    if cfg.sweep.tau.is_empty() {
        vec![vec![0.0; cfg.n_dim]]
    } else {
        cfg.sweep.tau.clone()
    }
}

#[derive(Serialize)]
struct BulkRecord<'a> {
    row: usize,
    value: f64,
    bulk_part: f64,
    surface_part: f64,
    converged: bool,
    restart_values: &'a [f64],
    best_restart: usize,
    log: &'a [crate::bulk::IterationRecord],
    field: crate::sbv::FieldSnapshot,
}

/// Runs `config` and writes tables, snapshots and the manifest under `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    config.validate()?;
    let kind = config.kind.ok_or_else(|| Error::Config {
        pointer: "/kind".into(),
        message: "problem kind is required".into(),
    })?;
    let mut ctx = Ctx {
        cfg: config,
        store: ResultStore::open(out)?,
        hash: config.hash(),
        w: config.bulk_density()?,
        psi: config.surface_density()?,
        failures: Vec::new(),
        tables: Vec::new(),
        rows: 0,
    };
    let report = validate_assumptions(
        &ctx.w,
        &ctx.psi,
        config.dims()?,
        config.validation_samples,
        config.seed,
    );
    match kind {
        ProblemKind::Validate => {
            let rows: Vec<ValidateRow> = report
                .checks
                .iter()
                .map(|c| ValidateRow {
                    id: c.id.clone(),
                    mode: match c.mode {
                        CheckMode::Exact => "exact",
                        CheckMode::Sampled => "sampled",
                        CheckMode::Reported => "reported",
                    }
                    .into(),
                    samples: c.samples,
                    violations: c.violations,
                    worst_margin: c.worst_margin,
                    passed: c.passed,
                })
                .collect();
            for c in report.checks.iter().filter(|c| !c.passed) {
                ctx.failures.push(format!("assumption {} failed", c.id));
            }
            ctx.rows += rows.len();
            ctx.tables.push(ctx.store.write_rows(&ctx.hash, &rows)?);
            ctx.store.write_json(&ctx.hash, "validation", &report)?;
        }
        _ if !report.all_passed() => {
            let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.id.as_str()).collect();
            return Err(Error::InvalidArgument(format!(
                "densities fail assumption checks: {}",
                failed.join(", ")
            )));
        }
        ProblemKind::Bulk => run_bulk(&mut ctx)?,
        ProblemKind::Surface => run_surface(&mut ctx)?,
        ProblemKind::Approx => run_approx(&mut ctx)?,
        ProblemKind::Oracle => run_oracle(&mut ctx)?,
    }
    let outcome = RunOutcome {
        config_hash: ctx.hash.clone(),
        kind,
        rows: ctx.rows,
        tables: ctx.tables.clone(),
        all_ok: ctx.failures.is_empty(),
        failures: ctx.failures.clone(),
    };
    ctx.store.record_run(ManifestEntry {
        config_hash: ctx.hash.clone(),
        kind: kind.name().into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        tables: ctx
            .tables
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
        rows: ctx.rows,
        all_ok: outcome.all_ok,
        failures: outcome.failures.clone(),
    })?;
    Ok(outcome)
}

fn bulk_points(cfg: &ExperimentConfig) -> Result<Vec<(Mat, Mat, Vec<f64>, usize)>> {
    let a_list = required(&cfg.sweep.a, "A")?;
    let b_list = required(&cfg.sweep.b, "B")?;
    let mut pts = Vec::new();
    for a in a_list {
        for b in b_list {
            for tau in taus(cfg) {
                for &k in &cfg.k_list {
                    pts.push((a.clone(), b.clone(), tau.clone(), k));
                }
            }
        }
    }
    Ok(pts)
}

fn run_bulk(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let mut params = cfg.solver.clone();
    params.seed = cfg.seed;
    let results: Vec<_> = bulk_points(cfg)?
        .into_par_iter()
        .map(|(a, b, tau, k)| {
            let spec = BulkCellSpec::new(a, b, k, cfg.m)
                .with_params(params.clone())
                .with_tau(tau);
            solve_mk(&spec, &ctx.w, &ctx.psi).map(|r| (spec, r))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, (spec, r)) in results.iter().enumerate() {
        if !r.converged {
            ctx.failures.push(format!("bulk row {i} (k = {}) did not converge", spec.k));
        }
        rows.push(BulkRow {
            a: spec.a.to_string(),
            b: spec.b.to_string(),
            k: spec.k,
            m: spec.m,
            tau: fmt_vec(&spec.tau),
            value: r.value,
            bulk_part: r.bulk_part,
            surface_part: r.surface_part,
            converged: r.converged,
            seed: spec.params.seed,
        });
        if r.field.grid().n_cells() <= SNAPSHOT_CELLS {
            let rec = BulkRecord {
                row: i,
                value: r.value,
                bulk_part: r.bulk_part,
                surface_part: r.surface_part,
                converged: r.converged,
                restart_values: &r.restart_values,
                best_restart: r.best_restart,
                log: &r.log,
                field: r.field.snapshot(),
            };
            ctx.store.write_json(&ctx.hash, &format!("bulk-{i}"), &rec)?;
        }
    }
    ctx.rows += rows.len();
    ctx.tables.push(ctx.store.write_rows(&ctx.hash, &rows)?);
    Ok(())
}

fn surface_points(cfg: &ExperimentConfig) -> Result<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>> {
    let mut pts = Vec::new();
    for l in required(&cfg.sweep.lambda, "lambda")? {
        for nu in required(&cfg.sweep.nu, "nu")? {
            for tau in taus(cfg) {
                pts.push((l.clone(), nu.clone(), tau));
            }
        }
    }
    Ok(pts)
}

fn run_surface(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let mut k_list = cfg.k_list.clone();
    k_list.sort_unstable();
    k_list.dedup();
    let mut rows = Vec::new();
    for (i, (l, nu, tau)) in surface_points(cfg)?.into_iter().enumerate() {
        let (_, results) = match estimate_hhom_shifted(&l, &nu, &tau, &k_list, &ctx.psi, cfg.m) {
            Ok(r) => r,
            Err(Error::Internal(msg)) => {
                ctx.failures.push(format!("surface point {i}: {msg}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        for r in results {
            let spec = SurfaceCellSpec::new(l.clone(), nu.clone(), r.frame.k, cfg.m).with_tau(tau.clone());
            if r.labeling.len() <= SNAPSHOT_CELLS {
                let g = CutGraph::build(&spec, &ctx.psi)?;
                let snap = labeling_snapshot(&g, &r.labeling)?;
                ctx.store.write_json(&ctx.hash, &format!("surface-{}", rows.len()), &snap)?;
            }
            rows.push(SurfaceRow {
                lambda: fmt_vec(&l),
                nu: fmt_vec(&nu),
                k: r.frame.k,
                m: cfg.m,
                tau: fmt_vec(&tau),
                value: r.value,
                cut_faces: r.cut_faces,
                flat_cut: r.flat_cut,
            });
        }
    }
    ctx.rows += rows.len();
    ctx.tables.push(ctx.store.write_rows(&ctx.hash, &rows)?);
    Ok(())
}

fn run_approx(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let one = |list: &[Mat], name: &str| -> Result<Mat> {
        match list {
            [m] => Ok(m.clone()),
            _ => Err(Error::Config {
                pointer: format!("/sweep/{name}"),
                message: "approx runs take exactly one matrix".into(),
            }),
        }
    };
    let a = one(&cfg.sweep.a, "A")?;
    let g = one(&cfg.sweep.g, "G")?;
    let n_list = required(&cfg.sweep.n, "n")?;
    let sample = StructuredDeformationSample::new(a, vec![0.0; cfg.d], g)?;
    let seq = SawtoothSequence::new(sample);
    let curve = eval_sequence_energy(&seq, cfg.epsilon, &ctx.w, &ctx.psi, n_list, cfg.quadrature)?;
    for p in &curve {
        let cells = (p.n * cfg.quadrature).pow(cfg.n_dim as u32);
        if cells <= SNAPSHOT_CELLS {
            let f = seq.sample_field(p.n, cfg.quadrature)?;
            ctx.store.write_json(&ctx.hash, &format!("approx-n{}", p.n), &f.snapshot())?;
        }
    }
    let rows: Vec<ApproxRow> = curve
        .iter()
        .map(|p| ApproxRow {
            n: p.n,
            eps: p.eps,
            bulk: p.bulk,
            surface: p.surface,
            total: p.total,
            l1_distance: p.l1_distance,
        })
        .collect();
    ctx.rows += rows.len();
    ctx.tables.push(ctx.store.write_rows(&ctx.hash, &rows)?);
    Ok(())
}

fn run_oracle(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let mut any = false;
    if !cfg.sweep.a.is_empty() || !cfg.sweep.b.is_empty() {
        any = true;
        let mut rows = Vec::new();
        for (a, b, tau, k) in bulk_points(cfg)? {
            let spec = BulkCellSpec::new(a, b, k, cfg.m).with_tau(tau);
            let r = coarse_search_bulk(&spec, &ctx.w, &ctx.psi, &cfg.oracle)?;
            rows.push(OracleBulkRow(BulkRow {
                a: spec.a.to_string(),
                b: spec.b.to_string(),
                k,
                m: cfg.m,
                tau: fmt_vec(&spec.tau),
                value: r.value,
                bulk_part: r.bulk_part,
                surface_part: r.surface_part,
                converged: true,
                seed: cfg.seed,
            }));
        }
        ctx.rows += rows.len();
        ctx.tables.push(ctx.store.write_rows(&ctx.hash, &rows)?);
    }
    if !cfg.sweep.lambda.is_empty() || !cfg.sweep.nu.is_empty() {
        any = true;
        let mut rows = Vec::new();
        for (l, nu, tau) in surface_points(cfg)? {
            for &k in &cfg.k_list {
                let spec = SurfaceCellSpec::new(l.clone(), nu.clone(), k, cfg.m).with_tau(tau.clone());
                let r = enumerate_two_phase(&spec, &ctx.psi, &cfg.oracle)?;
                let g = CutGraph::build(&spec, &ctx.psi)?;
                rows.push(OracleSurfaceRow(SurfaceRow {
                    lambda: fmt_vec(&l),
                    nu: fmt_vec(&nu),
                    k,
                    m: cfg.m,
                    tau: fmt_vec(&tau),
                    value: r.value,
                    cut_faces: g.arcs.iter().filter(|a| r.labeling[a.minus] != r.labeling[a.plus]).count(),
                    flat_cut: r.labeling == g.flat_labeling(),
                }));
            }
        }
        ctx.rows += rows.len();
        ctx.tables.push(ctx.store.write_rows(&ctx.hash, &rows)?);
    }
    if !any {
        return Err(Error::Config {
            pointer: "/sweep".into(),
            message: "oracle runs need A/B or lambda/nu lists".into(),
        });
    }
    Ok(())
}
