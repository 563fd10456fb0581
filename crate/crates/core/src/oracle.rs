//! Brute-force reference computations.
//!
//! Each oracle evaluates energies along its own summation path and refuses,
//! rather than truncates, when its budget is too small.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assemble::Assembler;
use crate::bulk::BulkCellSpec;
use crate::density::{PeriodicBulkDensity, PeriodicSurfaceDensity};
use crate::error::{invalid, Error, Result};
use crate::matrix::{norm, Mat};
use crate::sbv::DiscreteSBVField;
use crate::surface::{SurfaceCellSpec, SurfaceFrame};

pub const MAX_ENUMERATION: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleBudget {
    /// Largest number of labelings or lattice points visited.
    pub max_enumeration: u64,
    /// Lattice points per continuous DOF.
    pub grid_points: usize,
    /// Sub-points per subcell axis for refined quadrature.
    pub refinement: usize,
    pub time_limit_secs: f64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_enumeration: MAX_ENUMERATION,
            grid_points: 33,
            refinement: 8,
            time_limit_secs: 60.0,
        }
    }
}

impl OracleBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_enumeration == 0 || self.max_enumeration > MAX_ENUMERATION {
            return invalid("max_enumeration must lie in [1, 2^20]");
        }
        if self.grid_points < 3 || self.refinement == 0 || !(self.time_limit_secs > 0.0) {
            return invalid("grid_points >= 3, refinement >= 1 and a positive time limit are required");
        }
        Ok(())
    }
}

struct Clock {
    start: Instant,
    limit: f64,
}

impl Clock {
    fn new(limit: f64) -> Self {
        Clock {
            start: Instant::now(),
            limit,
        }
    }

    fn check(&self) -> Result<()> {
        if self.start.elapsed().as_secs_f64() > self.limit {
            return Err(Error::BudgetExceeded("oracle time limit reached".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub value: f64,
    /// `true` marks subcells in phase `lambda`.
    pub labeling: Vec<bool>,
    pub free_cells: usize,
    pub visited: u64,
}

/// Exact minimum of the two-phase surface cell problem by visiting every
/// labeling of the unpinned subcells.
pub fn enumerate_two_phase(
    spec: &SurfaceCellSpec,
    psi: &PeriodicSurfaceDensity,
    budget: &OracleBudget,
) -> Result<EnumerationResult> {
    budget.validate()?;
    let fr = SurfaceFrame::new(&spec.nu, spec.k, spec.m)?;
    let (ni, nj) = (fr.cells_normal, fr.cells_lateral);
    let cells = ni * nj;
    let orient: f64 = spec.nu.iter().zip(&fr.axis_normal).map(|(a, b)| a * b).sum();
    let hn = fr.side / ni as f64;
    let hl = fr.side / nj as f64;
    let yn = |i: f64| i * hn - fr.side / 2.0;
    let phys = |a: f64, b: f64| -> Vec<f64> {
        (0..fr.n_dim)
            .map(|c| {
                let lat = if fr.n_dim == 2 { b * fr.axis_lateral[c] } else { 0.0 };
                a * fr.axis_normal[c] + lat + spec.tau[c]
            })
            .collect()
    };

    // (cell a, cell b, cost a=0 b=lambda, cost a=lambda b=0)
    let neg: Vec<f64> = spec.lambda.iter().map(|v| -v).collect();
    let mut pairs = Vec::new();
    let area_n = if fr.n_dim == 2 { hl } else { 1.0 };
    for j in 0..nj {
        for i in 0..ni {
            let c = i + ni * j;
            if i + 1 < ni {
                let x = phys(yn(i as f64 + 1.0), (j as f64 + 0.5) * hl);
                let nu = &fr.axis_normal;
                pairs.push((
                    c,
                    c + 1,
                    area_n * psi.eval(&x, &spec.lambda, nu)?,
                    area_n * psi.eval(&x, &neg, nu)?,
                ));
            }
            if fr.n_dim == 2 && j + 1 < nj {
                let x = phys(yn(i as f64 + 0.5), (j as f64 + 1.0) * hl);
                let nu = &fr.axis_lateral;
                pairs.push((
                    c,
                    c + ni,
                    hn * psi.eval(&x, &spec.lambda, nu)?,
                    hn * psi.eval(&x, &neg, nu)?,
                ));
            }
        }
    }
    let mut fixed: Vec<Option<bool>> = vec![None; cells];
    for j in 0..nj {
        for i in 0..ni {
            let edge = i == 0 || i == ni - 1 || (fr.n_dim == 2 && (j == 0 || j == nj - 1));
            if edge {
                fixed[i + ni * j] = Some(yn(i as f64 + 0.5) * orient > 0.0);
            }
        }
    }
    let free: Vec<usize> = (0..cells).filter(|c| fixed[*c].is_none()).collect();
    if free.len() > 20 || (1u64 << free.len()) > budget.max_enumeration {
        return Err(Error::BudgetExceeded(format!(
            "{} free subcells exceed the enumeration budget of {}",
            free.len(),
            budget.max_enumeration
        )));
    }
    let clock = Clock::new(budget.time_limit_secs);
    let mut labels: Vec<bool> = fixed.iter().map(|p| p.unwrap_or(false)).collect();
    let mut best = (f64::INFINITY, labels.clone());
    let total = 1u64 << free.len();
    for mask in 0..total {
        if mask % 4096 == 0 {
            clock.check()?;
        }
        for (bit, &c) in free.iter().enumerate() {
            labels[c] = (mask >> bit) & 1 == 1;
        }
        let mut cost = 0.0;
        for &(a, b, up, down) in &pairs {
            cost += match (labels[a], labels[b]) {
                (false, true) => up,
                (true, false) => down,
                _ => 0.0,
            };
        }
        if cost < best.0 {
            best = (cost, labels.clone());
        }
    }
    Ok(EnumerationResult {
        value: best.0 / fr.side.powi(fr.n_dim as i32 - 1),
        labeling: best.1,
        free_cells: free.len(),
        visited: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseSearchResult {
    /// Best `m_k` upper bound found.
    pub value: f64,
    pub bulk_part: f64,
    pub surface_part: f64,
    /// Active interior faces of the best competitor (face `i` sits at `x = (i + 1) h`).
    pub jump_faces: Vec<usize>,
    /// Per-subcell gradients (`d` entries each).
    pub gradients: Vec<f64>,
    pub jumps: Vec<f64>,
    pub visited: u64,
}

struct Pattern {
    faces: Vec<usize>,
}

/// Nested lattice search over one-dimensional periodic competitors.
///
/// A competitor is given by its subcell gradients `A`-relative `g_c` and its
/// jumps on a chosen set of interior points; periodicity and the mean
/// constraint fix one gradient and one jump per component. Every jump
/// pattern is searched on a `grid_points`-lattice, then once more on a
/// finer lattice around the incumbent.
pub fn coarse_search_bulk(
    spec: &BulkCellSpec,
    w: &PeriodicBulkDensity,
    psi: &PeriodicSurfaceDensity,
    budget: &OracleBudget,
) -> Result<CoarseSearchResult> {
    budget.validate()?;
    let grid = spec.grid()?;
    if grid.n_dim != 1 {
        return invalid("coarse search handles N = 1 only");
    }
    let (n, d) = (grid.per_axis(), grid.d);
    let h = 1.0 / grid.m as f64;
    let target = spec.disarrangement();
    let b: Vec<f64> = target.as_slice().to_vec();
    let zero_target = b.iter().all(|v| *v == 0.0);
    let mut patterns = Vec::new();
    for mask in 0u64..(1u64 << (n - 1)) {
        let faces: Vec<usize> = (0..n - 1).filter(|i| (mask >> i) & 1 == 1).collect();
        if faces.is_empty() && !zero_target {
            continue;
        }
        patterns.push(Pattern { faces });
    }
    let dofs_of = |p: &Pattern| d * (n - 1) + d * p.faces.len().saturating_sub(1);
    let max_dofs = patterns.iter().map(dofs_of).max().unwrap_or(0);
    if max_dofs > 8 {
        return Err(Error::BudgetExceeded(format!("{max_dofs} DOFs exceed the limit of 8")));
    }
    let g = budget.grid_points as u64;
    let visits: u64 = patterns
        .iter()
        .map(|p| 2 * g.saturating_pow(dofs_of(p) as u32))
        .fold(0u64, |a, v| a.saturating_add(v));
    if visits > budget.max_enumeration {
        return Err(Error::BudgetExceeded(format!(
            "{visits} lattice points exceed the enumeration budget of {}",
            budget.max_enumeration
        )));
    }
    let clock = Clock::new(budget.time_limit_secs);
    let a = spec.a.as_slice().to_vec();
    let tau = spec.tau[0];
    let scale = 2.0 * (1.0 + norm(&b));

    // parameters -> (energy, gradients, jumps)
    let evaluate = |p: &Pattern, theta: &[f64]| -> ([f64; 2], Vec<f64>, Vec<f64>) {
        let mut grads = vec![0.0; n * d];
        for r in 0..d {
            let mut sum = 0.0;
            for c in 0..n - 1 {
                let v = b[r] + theta[r * (n - 1) + c];
                grads[c * d + r] = v;
                sum += v;
            }
            grads[(n - 1) * d + r] = n as f64 * b[r] - sum;
        }
        let nj = p.faces.len();
        let mut jumps = vec![0.0; nj * d];
        if nj > 0 {
            let off = d * (n - 1);
            for r in 0..d {
                let total = -(grid.k as f64) * b[r];
                let mut sum = 0.0;
                for s in 0..nj - 1 {
                    let v = total / nj as f64 + theta[off + r * (nj - 1) + s];
                    jumps[s * d + r] = v;
                    sum += v;
                }
                jumps[(nj - 1) * d + r] = total - sum;
            }
        }
        let (mut eb, mut es) = (0.0, 0.0);
        let mut xi = vec![0.0; d];
        for c in 0..n {
            for r in 0..d {
                xi[r] = a[r] + grads[c * d + r];
            }
            eb += h * w.value(&[(c as f64 + 0.5) * h + tau], &xi);
        }
        for (s, &f) in p.faces.iter().enumerate() {
            es += psi.value(&[(f as f64 + 1.0) * h + tau], &jumps[s * d..(s + 1) * d], &[1.0]);
        }
        let k = grid.k as f64;
        ([eb / k, es / k], grads, jumps)
    };

    let lattice = |dofs: usize, center: &[f64], half: f64, f: &mut dyn FnMut(&[f64])| {
        let mut idx = vec![0usize; dofs];
        let mut theta = vec![0.0; dofs];
        loop {
            for (t, (i, c)) in theta.iter_mut().zip(idx.iter().zip(center)) {
                *t = c - half + 2.0 * half * *i as f64 / (budget.grid_points - 1) as f64;
            }
            f(&theta);
            let mut pos = 0;
            loop {
                if pos == dofs {
                    return;
                }
                idx[pos] += 1;
                if idx[pos] < budget.grid_points {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    };

    let mut best: Option<([f64; 2], Vec<usize>, Vec<f64>, Vec<f64>)> = None;
    let mut visited = 0u64;
    for p in &patterns {
        clock.check()?;
        let dofs = dofs_of(p);
        let mut inc = (f64::INFINITY, vec![0.0; dofs]);
        let mut visit = |theta: &[f64]| {
            let ([eb, es], _, _) = evaluate(p, theta);
            let e = eb + es;
            visited += 1;
            if e < inc.0 {
                inc = (e, theta.to_vec());
            }
        };
        lattice(dofs, &vec![0.0; dofs], scale, &mut visit);
        let step = 2.0 * scale / (budget.grid_points - 1) as f64;
        let center = inc.1.clone();
        let mut visit = |theta: &[f64]| {
            let ([eb, es], _, _) = evaluate(p, theta);
            let e = eb + es;
            visited += 1;
            if e < inc.0 {
                inc = (e, theta.to_vec());
            }
        };
        lattice(dofs, &center, step, &mut visit);
        let (parts, grads, jumps) = evaluate(p, &inc.1);
        if best.as_ref().is_none_or(|b| parts[0] + parts[1] < b.0[0] + b.0[1]) {
            best = Some((parts, p.faces.clone(), grads, jumps));
        }
    }
    let ([bulk_part, surface_part], jump_faces, gradients, jumps) =
        best.ok_or_else(|| Error::Internal("no admissible jump pattern".into()))?;
    Ok(CoarseSearchResult {
        value: bulk_part + surface_part,
        bulk_part,
        surface_part,
        jump_faces,
        gradients,
        jumps,
        visited,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub step: f64,
    /// Worst component error relative to the largest difference quotient.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub grad_norm: f64,
}

/// Compares the analytic descent gradient with central differences of
/// `energy()` at fixed jump activity.
pub fn fd_gradient_check(
    field: &DiscreteSBVField,
    w: &PeriodicBulkDensity,
    psi: &PeriodicSurfaceDensity,
    a: &Mat,
    tau: &[f64],
    step: f64,
) -> Result<FdReport> {
    if !(1e-7..=1e-3).contains(&step) {
        return invalid("step must lie in [1e-7, 1e-3]");
    }
    let grid = *field.grid();
    let asm = Assembler::new(grid, w, psi, a, tau, field.is_periodic(), field.is_flipped());
    let mut analytic = vec![0.0; grid.n_dofs()];
    asm.gradient(field.dofs(), field.active(), &mut analytic);
    let mut probe = field.clone();
    let mut fd = vec![0.0; grid.n_dofs()];
    for i in 0..grid.n_dofs() {
        let x0 = field.dofs()[i];
        probe.dofs_mut()[i] = x0 + step;
        let ep = probe.energy(w, psi, a, tau).total();
        probe.dofs_mut()[i] = x0 - step;
        let em = probe.energy(w, psi, a, tau).total();
        probe.dofs_mut()[i] = x0;
        fd[i] = (ep - em) / (2.0 * step);
    }
    let max_abs_error = analytic
        .iter()
        .zip(&fd)
        .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(FdReport {
        step,
        max_rel_error: if scale > 0.0 { max_abs_error / scale } else { max_abs_error },
        max_abs_error,
        grad_norm: norm(&analytic),
    })
}

/// Bulk energy of `field` with `r^N` quadrature points per subcell.
pub fn refined_bulk_energy(
    field: &DiscreteSBVField,
    w: &PeriodicBulkDensity,
    a: &Mat,
    tau: &[f64],
    r: usize,
) -> f64 {
    let g = field.grid();
    let nd = g.n_dim;
    let h = g.h();
    let offs: Vec<f64> = (0..r).map(|p| ((p as f64 + 0.5) / r as f64 - 0.5) * h).collect();
    let lat: &[f64] = if nd == 2 { &offs } else { &[0.0] };
    let mut total = 0.0;
    for c in 0..g.n_cells() {
        let xi: Vec<f64> = a.as_slice().iter().zip(field.grad(c)).map(|(p, q)| p + q).collect();
        let x0 = g.center(c);
        for &o0 in &offs {
            for &o1 in lat {
                let o = [o0, o1];
                let x: Vec<f64> = (0..nd).map(|i| x0[i] + o[i] + tau[i]).collect();
                total += w.value(&x, &xi);
            }
        }
    }
    total * g.cell_volume() / (offs.len() * lat.len()) as f64
}
