//! Discrete SBV competitors: discontinuous piecewise-affine fields on a
//! subdivided cube `kQ` with explicit per-face jump activity.
//!
//! Each subcell carries a value at its center and a constant gradient. The
//! trace on a face is read off at the face midpoint, and the jump across a
//! face is `trace(plus side) - trace(minus side)` with normal `+e_axis` (or
//! the reverse pair when the field's orientation is flipped).
//!
//! A periodic field lives on the torus `R^N / kZ^N`: the faces on the planes
//! `x_i = 0 = k` ("wrap faces") are ordinary faces of the torus. Competitors of
//! the bulk cell problem keep every wrap face inactive, which is the discrete
//! form of "equal traces on opposite faces".

use serde::{Deserialize, Serialize};

use crate::density::{PeriodicBulkDensity, PeriodicSurfaceDensity};
use crate::error::{invalid, Error, Result};
use crate::matrix::Mat;

/// Continuity tolerance on inactive faces.
pub const TRACE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    #[serde(rename = "N")]
    pub n_dim: usize,
    pub d: usize,
    /// Cube multiplier: the domain is `[0, k)^N`.
    pub k: usize,
    /// Subcells per unit length.
    pub m: usize,
}

impl Grid {
    pub fn new(n_dim: usize, d: usize, k: usize, m: usize) -> Result<Self> {
        if !(1..=2).contains(&n_dim) || !(1..=2).contains(&d) {
            return invalid(format!("unsupported dimensions N={n_dim}, d={d}"));
        }
        if k == 0 || m == 0 {
            return invalid("grid needs k >= 1 and m >= 1");
        }
        Ok(Grid { n_dim, d, k, m })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn per_axis(&self) -> usize {
        self.k * self.m
    }

    pub fn n_cells(&self) -> usize {
        self.per_axis().pow(self.n_dim as u32)
    }

    pub fn n_faces(&self) -> usize {
        self.n_dim * self.n_cells()
    }

    /// DOFs per cell: `d` values plus `d * N` gradient entries.
    pub fn cell_stride(&self) -> usize {
        self.d * (1 + self.n_dim)
    }

    pub fn n_dofs(&self) -> usize {
        self.n_cells() * self.cell_stride()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.n_dim as i32)
    }

    pub fn face_area(&self) -> f64 {
        self.h().powi(self.n_dim as i32 - 1)
    }

    pub fn coords(&self, c: usize) -> [usize; 2] {
        let n = self.per_axis();
        if self.n_dim == 1 {
            [c, 0]
        } else {
            [c % n, c / n]
        }
    }

    pub fn index(&self, ij: [usize; 2]) -> usize {
        ij[0] + self.per_axis() * ij[1]
    }

    /// Neighbour across the `+e_axis` face, wrapping around the torus.
    pub fn plus_neighbor(&self, c: usize, axis: usize) -> usize {
        let mut ij = self.coords(c);
        ij[axis] = (ij[axis] + 1) % self.per_axis();
        self.index(ij)
    }

    pub fn center(&self, c: usize) -> Vec<f64> {
        let ij = self.coords(c);
        let h = self.h();
        (0..self.n_dim).map(|a| (ij[a] as f64 + 0.5) * h).collect()
    }

    /// Face `f = axis * n_cells + c` sits on the `+e_axis` side of cell `c`.
    pub fn face(&self, f: usize) -> FaceRef {
        let nc = self.n_cells();
        let axis = f / nc;
        let minus = f % nc;
        let plus = self.plus_neighbor(minus, axis);
        let wrap = self.coords(minus)[axis] == self.per_axis() - 1;
        FaceRef {
            axis,
            minus,
            plus,
            wrap,
        }
    }

    pub fn face_midpoint(&self, f: usize) -> Vec<f64> {
        let fr = self.face(f);
        let mut x = self.center(fr.minus);
        x[fr.axis] = (self.coords(fr.minus)[fr.axis] + 1) as f64 * self.h();
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceRef {
    pub axis: usize,
    pub minus: usize,
    pub plus: usize,
    /// Lies on the plane `x_axis = k` (identified with `x_axis = 0`).
    pub wrap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub face: usize,
    pub midpoint: Vec<f64>,
    pub normal: Vec<f64>,
    pub jump: Vec<f64>,
    pub area: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergySplit {
    pub bulk: f64,
    pub surface: f64,
}

impl EnergySplit {
    pub fn total(&self) -> f64 {
        self.bulk + self.surface
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSBVField {
    grid: Grid,
    periodic: bool,
    flipped: bool,
    dofs: Vec<f64>,
    active: Vec<bool>,
}

impl DiscreteSBVField {
    pub fn zeros(grid: Grid, periodic: bool) -> Self {
        DiscreteSBVField {
            grid,
            periodic,
            flipped: false,
            dofs: vec![0.0; grid.n_dofs()],
            active: vec![false; grid.n_faces()],
        }
    }

    pub fn from_parts(grid: Grid, periodic: bool, dofs: Vec<f64>, active: Vec<bool>) -> Result<Self> {
        if dofs.len() != grid.n_dofs() || active.len() != grid.n_faces() {
            return invalid("field data does not match grid");
        }
        Ok(DiscreteSBVField {
            grid,
            periodic,
            flipped: false,
            dofs,
            active,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn dofs(&self) -> &[f64] {
        &self.dofs
    }

    pub fn dofs_mut(&mut self) -> &mut [f64] {
        &mut self.dofs
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn set_active(&mut self, f: usize, on: bool) {
        self.active[f] = on;
    }

    pub fn is_flipped(&self) -> bool {
        self.flipped
    }

    /// Reverse the stored orientation of every face.
    pub fn flip_orientation(&mut self) {
        self.flipped = !self.flipped;
    }

    pub fn value(&self, c: usize) -> &[f64] {
        let s = self.grid.cell_stride();
        &self.dofs[c * s..c * s + self.grid.d]
    }

    pub fn value_mut(&mut self, c: usize) -> &mut [f64] {
        let s = self.grid.cell_stride();
        let d = self.grid.d;
        &mut self.dofs[c * s..c * s + d]
    }

    /// Row-major `d x N` gradient of cell `c`.
    pub fn grad(&self, c: usize) -> &[f64] {
        let s = self.grid.cell_stride();
        &self.dofs[c * s + self.grid.d..(c + 1) * s]
    }

    pub fn grad_mut(&mut self, c: usize) -> &mut [f64] {
        let s = self.grid.cell_stride();
        let d = self.grid.d;
        &mut self.dofs[c * s + d..(c + 1) * s]
    }

    /// Whether face `f` is a face of the domain (wrap faces only exist on the torus).
    pub fn face_exists(&self, f: usize) -> bool {
        self.periodic || !self.grid.face(f).wrap
    }

    /// Raw trace difference `trace(plus) - trace(minus)` across `f`.
    pub fn mismatch(&self, f: usize) -> Vec<f64> {
        mismatch_raw(&self.grid, &self.dofs, f)
    }

    /// Jump and normal under the stored orientation.
    pub fn oriented_jump(&self, f: usize) -> (Vec<f64>, Vec<f64>) {
        let fr = self.grid.face(f);
        let mut jump = self.mismatch(f);
        let mut normal = vec![0.0; self.grid.n_dim];
        normal[fr.axis] = 1.0;
        if self.flipped {
            jump.iter_mut().for_each(|v| *v = -*v);
            normal[fr.axis] = -1.0;
        }
        (jump, normal)
    }

    /// Largest trace mismatch over existing inactive faces.
    pub fn max_inactive_mismatch(&self) -> f64 {
        (0..self.grid.n_faces())
            .filter(|&f| self.face_exists(f) && !self.active[f])
            .map(|f| linf(&self.mismatch(f)))
            .fold(0.0, f64::max)
    }

    /// Largest trace mismatch between opposite boundary faces of `kQ`.
    pub fn max_wrap_mismatch(&self) -> f64 {
        (0..self.grid.n_faces())
            .filter(|&f| self.grid.face(f).wrap)
            .map(|f| linf(&self.mismatch(f)))
            .fold(0.0, f64::max)
    }

    /// Membership in the discrete `SBV_#` class: periodic, no active wrap
    /// faces, traces matching across inactive faces.
    pub fn is_sbv_periodic(&self) -> bool {
        self.periodic
            && (0..self.grid.n_faces()).all(|f| !(self.grid.face(f).wrap && self.active[f]))
            && self.max_inactive_mismatch() <= TRACE_TOL
    }

    pub fn mean_gradient(&self) -> Mat {
        let g = &self.grid;
        let mut acc = vec![0.0; g.d * g.n_dim];
        for c in 0..g.n_cells() {
            for (a, v) in acc.iter_mut().zip(self.grad(c)) {
                *a += v;
            }
        }
        let n = g.n_cells() as f64;
        Mat::from_slice(g.d, g.n_dim, &acc.iter().map(|a| a / n).collect::<Vec<_>>())
    }

    pub fn jump_records(&self) -> Vec<JumpRecord> {
        let g = &self.grid;
        (0..g.n_faces())
            .filter(|&f| self.face_exists(f) && self.active[f])
            .filter_map(|f| {
                let (jump, normal) = self.oriented_jump(f);
                if jump.iter().all(|v| *v == 0.0) {
                    return None;
                }
                Some(JumpRecord {
                    face: f,
                    midpoint: g.face_midpoint(f),
                    normal,
                    jump,
                    area: g.face_area(),
                })
            })
            .collect()
    }

    /// Total variation `|Du|` of the field: `sum |grad| vol + sum |jump| area`.
    pub fn total_variation(&self) -> f64 {
        let g = &self.grid;
        let bulk: f64 = (0..g.n_cells()).map(|c| crate::matrix::norm(self.grad(c))).sum::<f64>()
            * g.cell_volume();
        let surf: f64 = self
            .jump_records()
            .iter()
            .map(|r| crate::matrix::norm(&r.jump) * r.area)
            .sum();
        bulk + surf
    }

    /// Bulk and surface energy with densities evaluated at `x + tau`.
    pub fn energy(
        &self,
        w: &PeriodicBulkDensity,
        psi: &PeriodicSurfaceDensity,
        a: &Mat,
        tau: &[f64],
    ) -> EnergySplit {
        self.energy_scaled(w, psi, a, tau, 1.0)
    }

    /// Energy with densities evaluated at `x / eps + tau`, as in `E_eps`.
    pub fn energy_scaled(
        &self,
        w: &PeriodicBulkDensity,
        psi: &PeriodicSurfaceDensity,
        a: &Mat,
        tau: &[f64],
        eps: f64,
    ) -> EnergySplit {
        let g = &self.grid;
        let all = [0usize, 0];
        let hi = [g.per_axis(), if g.n_dim == 2 { g.per_axis() } else { 1 }];
        self.energy_in_box(w, psi, a, tau, eps, all, hi)
    }

    /// Energy restricted to the cells with coordinates in `[lo, hi)` and the
    /// faces whose minus-side cell lies there.
    #[allow(clippy::too_many_arguments)]
    pub fn energy_in_box(
        &self,
        w: &PeriodicBulkDensity,
        psi: &PeriodicSurfaceDensity,
        a: &Mat,
        tau: &[f64],
        eps: f64,
        lo: [usize; 2],
        hi: [usize; 2],
    ) -> EnergySplit {
        let g = &self.grid;
        let inside = |c: usize| {
            let ij = g.coords(c);
            (0..g.n_dim).all(|ax| ij[ax] >= lo[ax] && ij[ax] < hi[ax])
        };
        let at = |x: Vec<f64>| -> Vec<f64> {
            x.iter().zip(tau).map(|(xi, t)| xi / eps + t).collect()
        };
        let mut xi = vec![0.0; g.d * g.n_dim];
        let mut bulk = 0.0;
        for c in (0..g.n_cells()).filter(|&c| inside(c)) {
            for ((o, ai), gi) in xi.iter_mut().zip(a.as_slice()).zip(self.grad(c)) {
                *o = ai + gi;
            }
            bulk += w.value(&at(g.center(c)), &xi);
        }
        let mut surface = 0.0;
        for f in 0..g.n_faces() {
            if !(self.face_exists(f) && self.active[f] && inside(g.face(f).minus)) {
                continue;
            }
            let (jump, normal) = self.oriented_jump(f);
            surface += psi.value(&at(g.face_midpoint(f)), &jump, &normal);
        }
        // Lengths scale with eps; jumps are already in physical units.
        EnergySplit {
            bulk: bulk * g.cell_volume(),
            surface: surface * g.face_area(),
        }
    }

    pub fn snapshot(&self) -> FieldSnapshot {
        let g = &self.grid;
        FieldSnapshot {
            grid: *g,
            periodic: self.periodic,
            flipped: self.flipped,
            cells: (0..g.n_cells())
                .map(|c| CellSnapshot {
                    center: g.center(c),
                    value: self.value(c).to_vec(),
                    grad: Mat::from_slice(g.d, g.n_dim, self.grad(c)),
                })
                .collect(),
            jumps: (0..g.n_faces())
                .filter(|&f| self.face_exists(f) && self.active[f])
                .map(|f| FaceSnapshot {
                    face: f,
                    value: self.oriented_jump(f).0,
                })
                .collect(),
        }
    }

    pub fn from_snapshot(s: &FieldSnapshot) -> Result<Self> {
        let g = Grid::new(s.grid.n_dim, s.grid.d, s.grid.k, s.grid.m)?;
        if s.cells.len() != g.n_cells() {
            return invalid("snapshot cell count does not match grid");
        }
        let mut f = DiscreteSBVField::zeros(g, s.periodic);
        for (c, cell) in s.cells.iter().enumerate() {
            if cell.value.len() != g.d || cell.grad.rows() != g.d || cell.grad.cols() != g.n_dim {
                return invalid(format!("snapshot cell {c} has wrong shape"));
            }
            f.value_mut(c).copy_from_slice(&cell.value);
            f.grad_mut(c).copy_from_slice(cell.grad.as_slice());
        }
        for j in &s.jumps {
            if j.face >= g.n_faces() {
                return Err(Error::InvalidArgument(format!("face {} out of range", j.face)));
            }
            f.active[j.face] = true;
        }
        f.flipped = s.flipped;
        Ok(f)
    }
}

pub(crate) fn mismatch_raw(g: &Grid, dofs: &[f64], f: usize) -> Vec<f64> {
    let fr = g.face(f);
    let s = g.cell_stride();
    let (d, n) = (g.d, g.n_dim);
    let half = 0.5 * g.h();
    (0..d)
        .map(|r| {
            let plus = dofs[fr.plus * s + r] - half * dofs[fr.plus * s + d + r * n + fr.axis];
            let minus = dofs[fr.minus * s + r] + half * dofs[fr.minus * s + d + r * n + fr.axis];
            plus - minus
        })
        .collect()
}

fn linf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSnapshot {
    pub center: Vec<f64>,
    pub value: Vec<f64>,
    pub grad: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSnapshot {
    pub face: usize,
    pub value: Vec<f64>,
}

/// JSON layout `{grid:{N,d,k,m}, cells:[{center,value,grad}], jumps:[{face,value}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub grid: Grid,
    #[serde(default)]
    pub periodic: bool,
    #[serde(default)]
    pub flipped: bool,
    pub cells: Vec<CellSnapshot>,
    pub jumps: Vec<FaceSnapshot>,
}
