//! The surface cell problem.
//!
//! `g_k(lambda, nu)` is the least interface cost of a two-phase field with
//! values `{0, lambda}` on the cube `kQ_nu` whose boundary layer matches the
//! elementary jump `s_{lambda,nu}`; `h_hom = inf_k g_k`. The discrete problem
//! is an s-t minimum cut and is solved exactly.
//!
//! The cube is discretized in its own frame: axis 0 is the canonical
//! representative of `+-nu` and axis 1 its rotation by a quarter turn. For
//! `nu` proportional to a primitive integer vector `(q, r)` the cube side is
//! `T = k sqrt(q^2 + r^2)`, so lateral translation by `T` is a lattice
//! vector. Laterally the cube is `[0, T)`, normally `[-T/2, T/2]`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{PeriodicSurfaceDensity, UNIT_TOL};
use crate::error::{invalid, Error, Result};
use crate::estimate::{DensityEstimate, KRecord};
use crate::matrix::{norm, Mat};
use crate::maxflow::FlowNetwork;
use crate::sbv::{CellSnapshot, FaceSnapshot, FieldSnapshot, Grid};

/// Largest integer component searched when recognizing a rational direction.
pub const MAX_DIRECTION_DENOMINATOR: i64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCellSpec {
    pub lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub k: usize,
    pub m: usize,
    pub tau: Vec<f64>,
}

impl SurfaceCellSpec {
    pub fn new(lambda: Vec<f64>, nu: Vec<f64>, k: usize, m: usize) -> Self {
        let n = nu.len();
        SurfaceCellSpec {
            lambda,
            nu,
            k,
            m,
            tau: vec![0.0; n],
        }
    }

    pub fn with_tau(mut self, tau: Vec<f64>) -> Self {
        self.tau = tau;
        self
    }

    pub fn frame(&self) -> Result<SurfaceFrame> {
        SurfaceFrame::new(&self.nu, self.k, self.m)
    }
}

/// Geometry of the discretized cube `kQ_nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceFrame {
    pub n_dim: usize,
    /// Canonical normal (first nonzero component positive).
    pub axis_normal: Vec<f64>,
    pub axis_lateral: Vec<f64>,
    /// Primitive integer direction of `axis_normal`.
    pub direction: Vec<i64>,
    pub side: f64,
    /// Cells along the normal axis (always even) and along the lateral axis.
    pub cells_normal: usize,
    pub cells_lateral: usize,
    pub h_normal: f64,
    pub h_lateral: f64,
    pub k: usize,
    pub m: usize,
}

fn primitive_direction(nu: &[f64]) -> Option<Vec<i64>> {
    if nu.len() == 1 {
        return Some(vec![1]);
    }
    let b = MAX_DIRECTION_DENOMINATOR;
    let mut best: Option<(f64, Vec<i64>)> = None;
    for q in 0..=b {
        for r in -b..=b {
            if (q == 0 && r <= 0) || gcd(q, r) != 1 {
                continue;
            }
            let l = ((q * q + r * r) as f64).sqrt();
            let err = (nu[0] - q as f64 / l).abs() + (nu[1] - r as f64 / l).abs();
            if err < 1e-9 && best.as_ref().is_none_or(|(e, _)| err < *e) {
                best = Some((err, vec![q, r]));
            }
        }
    }
    best.map(|(_, v)| v)
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl SurfaceFrame {
    pub fn new(nu: &[f64], k: usize, m: usize) -> Result<Self> {
        let n_dim = nu.len();
        if !(1..=2).contains(&n_dim) {
            return invalid("nu must have 1 or 2 components");
        }
        if !nu.iter().all(|v| v.is_finite()) || (norm(nu) - 1.0).abs() > UNIT_TOL {
            return invalid("nu must be a unit vector");
        }
        if k == 0 || m == 0 {
            return invalid("k and m must be positive");
        }
        let sign = if nu.iter().find(|v| **v != 0.0).copied().unwrap_or(1.0) > 0.0 {
            1.0
        } else {
            -1.0
        };
        let canon: Vec<f64> = nu.iter().map(|v| sign * v).collect();
        let Some(direction) = primitive_direction(&canon) else {
            return invalid(format!(
                "nu must be proportional to an integer vector with entries up to {MAX_DIRECTION_DENOMINATOR}"
            ));
        };
        let l = (direction.iter().map(|v| v * v).sum::<i64>() as f64).sqrt();
        let axis_normal: Vec<f64> = direction.iter().map(|v| *v as f64 / l).collect();
        let axis_lateral = if n_dim == 2 {
            vec![-axis_normal[1], axis_normal[0]]
        } else {
            vec![]
        };
        let side = k as f64 * l;
        let n = k * m;
        let cells_normal = n + n % 2;
        let cells_lateral = if n_dim == 2 { n } else { 1 };
        Ok(SurfaceFrame {
            n_dim,
            h_normal: side / cells_normal as f64,
            h_lateral: if n_dim == 2 { side / n as f64 } else { 1.0 },
            axis_normal,
            axis_lateral,
            direction,
            side,
            cells_normal,
            cells_lateral,
            k,
            m,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cells_normal * self.cells_lateral
    }

    /// Cell index of normal position `i`, lateral position `j`.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.cells_normal * j
    }

    pub fn coords(&self, c: usize) -> (usize, usize) {
        (c % self.cells_normal, c / self.cells_normal)
    }

    /// Frame coordinates `(y_normal, y_lateral)` to physical coordinates.
    pub fn to_physical(&self, y0: f64, y1: f64) -> Vec<f64> {
        if self.n_dim == 1 {
            vec![y0 * self.axis_normal[0]]
        } else {
            (0..2)
                .map(|a| y0 * self.axis_normal[a] + y1 * self.axis_lateral[a])
                .collect()
        }
    }

    /// Signed normal coordinate of a cell center.
    pub fn normal_coordinate(&self, c: usize) -> f64 {
        let (i, _) = self.coords(c);
        (i as f64 + 0.5 - self.cells_normal as f64 / 2.0) * self.h_normal
    }

    pub fn center(&self, c: usize) -> Vec<f64> {
        let (_, j) = self.coords(c);
        self.to_physical(self.normal_coordinate(c), (j as f64 + 0.5) * self.h_lateral)
    }

    pub fn is_boundary(&self, c: usize) -> bool {
        let (i, j) = self.coords(c);
        i == 0
            || i + 1 == self.cells_normal
            || (self.n_dim == 2 && (j == 0 || j + 1 == self.cells_lateral))
    }

    /// Whether the `k`-cube replicated into the `h k`-cube is a valid competitor there.
    pub fn nests_into(&self, multiple: usize) -> bool {
        multiple >= 1 && (self.k * self.m).is_multiple_of(2)
    }
}

/// One interior face of the cut graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutArc {
    pub minus: usize,
    pub plus: usize,
    pub normal: Vec<f64>,
    pub midpoint: Vec<f64>,
    /// Cost when `minus` is in phase 0 and `plus` in phase `lambda`.
    pub forward: f64,
    /// Cost when `minus` is in phase `lambda` and `plus` in phase 0.
    pub backward: f64,
}

/// Two-phase labeling graph: subcells, interior faces, and boundary pins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutGraph {
    pub frame: SurfaceFrame,
    pub lambda: Vec<f64>,
    pub arcs: Vec<CutArc>,
    /// `Some(true)` pins to phase `lambda`, `Some(false)` to phase 0.
    pub pins: Vec<Option<bool>>,
}

impl CutGraph {
    pub fn build(spec: &SurfaceCellSpec, psi: &PeriodicSurfaceDensity) -> Result<Self> {
        let frame = spec.frame()?;
        if spec.tau.len() != frame.n_dim {
            return invalid("tau must have N components");
        }
        if !spec.lambda.iter().all(|v| v.is_finite()) || spec.lambda.is_empty() {
            return invalid("lambda must be a finite nonempty vector");
        }
        let neg: Vec<f64> = spec.lambda.iter().map(|v| -v).collect();
        let orient: f64 = spec.nu.iter().zip(&frame.axis_normal).map(|(a, b)| a * b).sum();
        let mut arcs = Vec::new();
        let mut face = |minus: usize, plus: usize, y0: f64, y1: f64, normal: Vec<f64>, area: f64| {
            let mut x = frame.to_physical(y0, y1);
            x.iter_mut().zip(&spec.tau).for_each(|(a, t)| *a += t);
            let forward = area * psi.eval(&x, &spec.lambda, &normal)?;
            let backward = area * psi.eval(&x, &neg, &normal)?;
            arcs.push(CutArc {
                minus,
                plus,
                normal,
                midpoint: x,
                forward,
                backward,
            });
            Ok::<(), Error>(())
        };
        let half = frame.cells_normal as f64 / 2.0;
        for j in 0..frame.cells_lateral {
            let yl = (j as f64 + 0.5) * frame.h_lateral;
            for i in 0..frame.cells_normal - 1 {
                let yn = (i as f64 + 1.0 - half) * frame.h_normal;
                face(
                    frame.index(i, j),
                    frame.index(i + 1, j),
                    yn,
                    yl,
                    frame.axis_normal.clone(),
                    frame.h_lateral,
                )?;
            }
        }
        if frame.n_dim == 2 {
            for j in 0..frame.cells_lateral - 1 {
                let yl = (j as f64 + 1.0) * frame.h_lateral;
                for i in 0..frame.cells_normal {
                    let yn = (i as f64 + 0.5 - half) * frame.h_normal;
                    face(
                        frame.index(i, j),
                        frame.index(i, j + 1),
                        yn,
                        yl,
                        frame.axis_lateral.clone(),
                        frame.h_normal,
                    )?;
                }
            }
        }
        let pins = (0..frame.n_cells())
            .map(|c| {
                frame
                    .is_boundary(c)
                    .then(|| frame.normal_coordinate(c) * orient > 0.0)
            })
            .collect();
        Ok(CutGraph {
            frame,
            lambda: spec.lambda.clone(),
            arcs,
            pins,
        })
    }

    /// Interface cost of a labeling (`true` = phase `lambda`).
    pub fn labeling_cost(&self, labels: &[bool]) -> f64 {
        self.arcs
            .iter()
            .map(|a| match (labels[a.minus], labels[a.plus]) {
                (false, true) => a.forward,
                (true, false) => a.backward,
                _ => 0.0,
            })
            .sum()
    }

    pub fn respects_pins(&self, labels: &[bool]) -> bool {
        self.pins
            .iter()
            .zip(labels)
            .all(|(p, l)| p.is_none_or(|p| p == *l))
    }

    /// Labeling with phase `lambda` exactly on the cells with `x . nu > 0`.
    pub fn flat_labeling(&self) -> Vec<bool> {
        let orient = self.pins.iter().zip(0..).find_map(|(p, c)| {
            p.map(|p| p == (self.frame.normal_coordinate(c) > 0.0))
        });
        let same = orient.unwrap_or(true);
        (0..self.frame.n_cells())
            .map(|c| (self.frame.normal_coordinate(c) > 0.0) == same)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCellResult {
    /// `g_k(lambda, nu)`: minimum cut divided by `T^(N-1)`.
    pub value: f64,
    /// `true` marks subcells in phase `lambda`.
    pub labeling: Vec<bool>,
    pub cut_faces: usize,
    pub flat_cut: bool,
    pub flow: f64,
    pub frame: SurfaceFrame,
}

/// Exact minimizer of the discrete two-phase surface cell problem.
pub fn solve_gk(spec: &SurfaceCellSpec, psi: &PeriodicSurfaceDensity) -> Result<SurfaceCellResult> {
    let graph = CutGraph::build(spec, psi)?;
    solve_graph(&graph)
}

pub fn solve_graph(graph: &CutGraph) -> Result<SurfaceCellResult> {
    let frame = &graph.frame;
    let n = frame.n_cells();
    let (s, t) = (n, n + 1);
    let mut net = FlowNetwork::new(n + 2);
    for a in &graph.arcs {
        net.add_pair(a.minus, a.plus, a.forward, a.backward);
    }
    for (c, pin) in graph.pins.iter().enumerate() {
        match pin {
            Some(false) => net.add_pair(s, c, f64::INFINITY, 0.0),
            Some(true) => net.add_pair(c, t, f64::INFINITY, 0.0),
            None => 0,
        };
    }
    let flow = net
        .max_flow(s, t)
        .map_err(|_| Error::Internal("a subcell is pinned to both phases".into()))?;
    let side = net.source_side(s);
    if side[t] {
        return Err(Error::Internal("sink reachable after maximum flow".into()));
    }
    let labeling: Vec<bool> = side[..n].iter().map(|v| !v).collect();
    if !graph.respects_pins(&labeling) {
        return Err(Error::Internal("minimum cut violates boundary pins".into()));
    }
    let cut = graph.labeling_cost(&labeling);
    if (cut - flow).abs() > 1e-9 * (1.0 + flow.abs()) {
        return Err(Error::Internal(format!("cut {cut} and flow {flow} disagree")));
    }
    let cut_faces = graph
        .arcs
        .iter()
        .filter(|a| labeling[a.minus] != labeling[a.plus])
        .count();
    let scale = frame.side.powi(frame.n_dim as i32 - 1);
    Ok(SurfaceCellResult {
        value: cut / scale,
        flat_cut: labeling == graph.flat_labeling(),
        labeling,
        cut_faces,
        flow,
        frame: frame.clone(),
    })
}

/// `h_hom(lambda, nu)` as the minimum of `g_k` over `k_list`.
///
/// Fails with an internal error when a nested pair `k | k'` violates
/// `g_k' <= g_k + 1e-12`.
pub fn estimate_hhom(
    lambda: &[f64],
    nu: &[f64],
    k_list: &[usize],
    psi: &PeriodicSurfaceDensity,
    m: usize,
) -> Result<(DensityEstimate, Vec<SurfaceCellResult>)> {
    estimate_hhom_shifted(lambda, nu, &vec![0.0; nu.len()], k_list, psi, m)
}

/// [`estimate_hhom`] with the density evaluated at `x + tau`.
pub fn estimate_hhom_shifted(
    lambda: &[f64],
    nu: &[f64],
    tau: &[f64],
    k_list: &[usize],
    psi: &PeriodicSurfaceDensity,
    m: usize,
) -> Result<(DensityEstimate, Vec<SurfaceCellResult>)> {
    if k_list.is_empty() {
        return invalid("k_list must be nonempty");
    }
    if k_list.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("k_list must be strictly increasing");
    }
    let results: Vec<SurfaceCellResult> = k_list
        .par_iter()
        .map(|&k| {
            let spec = SurfaceCellSpec::new(lambda.to_vec(), nu.to_vec(), k, m).with_tau(tau.to_vec());
            solve_gk(&spec, psi)
        })
        .collect::<Result<_>>()?;
    for (i, a) in results.iter().enumerate() {
        for b in &results[i + 1..] {
            let (ka, kb) = (a.frame.k, b.frame.k);
            if kb % ka == 0 && a.frame.nests_into(kb / ka) && b.value > a.value + 1e-12 {
                return Err(Error::Internal(format!(
                    "doubling violated: g_{kb} = {} > g_{ka} = {}",
                    b.value, a.value
                )));
            }
        }
    }
    let records = results
        .iter()
        .map(|r| KRecord {
            k: r.frame.k,
            value: r.value,
            converged: true,
        })
        .collect();
    Ok((DensityEstimate::from_records(records), results))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub value: f64,
    pub flipped_value: f64,
    pub deviation: f64,
    pub passed: bool,
}

/// Compares `g_k(lambda, nu)` with `g_k(-lambda, -nu)`.
pub fn check_surface_symmetry(
    lambda: &[f64],
    nu: &[f64],
    k: usize,
    m: usize,
    psi: &PeriodicSurfaceDensity,
) -> Result<SymmetryReport> {
    let a = solve_gk(&SurfaceCellSpec::new(lambda.to_vec(), nu.to_vec(), k, m), psi)?;
    let nl: Vec<f64> = lambda.iter().map(|v| -v).collect();
    let nn: Vec<f64> = nu.iter().map(|v| -v).collect();
    let b = solve_gk(&SurfaceCellSpec::new(nl, nn, k, m), psi)?;
    let deviation = (a.value - b.value).abs();
    Ok(SymmetryReport {
        value: a.value,
        flipped_value: b.value,
        deviation,
        passed: deviation <= 1e-12,
    })
}

/// Labeling in the field snapshot layout: piecewise-constant cells and one
/// jump entry per cut face (indexed in arc order).
pub fn labeling_snapshot(graph: &CutGraph, labeling: &[bool]) -> Result<FieldSnapshot> {
    let f = &graph.frame;
    let d = graph.lambda.len();
    let phase = |l: bool| if l { graph.lambda.clone() } else { vec![0.0; d] };
    let cells = (0..f.n_cells())
        .map(|c| CellSnapshot {
            center: f.center(c),
            value: phase(labeling[c]),
            grad: Mat::zeros(d, f.n_dim),
        })
        .collect();
    let jumps = graph
        .arcs
        .iter()
        .enumerate()
        .filter(|(_, a)| labeling[a.minus] != labeling[a.plus])
        .map(|(i, a)| FaceSnapshot {
            face: i,
            value: phase(labeling[a.plus])
                .iter()
                .zip(phase(labeling[a.minus]))
                .map(|(p, q)| p - q)
                .collect(),
        })
        .collect();
    Ok(FieldSnapshot {
        grid: Grid::new(f.n_dim, d, f.k, f.m)?,
        periodic: false,
        flipped: false,
        cells,
        jumps,
    })
}
