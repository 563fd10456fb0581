//! Energy and gradient assembly on flat DOF vectors for a fixed jump pattern.

use crate::density::{PeriodicBulkDensity, PeriodicSurfaceDensity};
use crate::matrix::Mat;
use crate::sbv::{mismatch_raw, EnergySplit, Grid};

pub(crate) struct Assembler<'a> {
    pub grid: Grid,
    w: &'a PeriodicBulkDensity,
    psi: &'a PeriodicSurfaceDensity,
    a: Vec<f64>,
    cell_x: Vec<Vec<f64>>,
    face_x: Vec<Vec<f64>>,
    periodic: bool,
    /// `+1` or `-1`: stored face orientation.
    sign: f64,
}

impl<'a> Assembler<'a> {
    pub fn new(
        grid: Grid,
        w: &'a PeriodicBulkDensity,
        psi: &'a PeriodicSurfaceDensity,
        a: &Mat,
        tau: &[f64],
        periodic: bool,
        flipped: bool,
    ) -> Self {
        let shift = |x: Vec<f64>| -> Vec<f64> { x.iter().zip(tau).map(|(p, t)| p + t).collect() };
        Assembler {
            grid,
            w,
            psi,
            a: a.as_slice().to_vec(),
            cell_x: (0..grid.n_cells()).map(|c| shift(grid.center(c))).collect(),
            face_x: (0..grid.n_faces()).map(|f| shift(grid.face_midpoint(f))).collect(),
            periodic,
            sign: if flipped { -1.0 } else { 1.0 },
        }
    }

    fn counted(&self, f: usize, active: &[bool]) -> bool {
        active[f] && (self.periodic || !self.grid.face(f).wrap)
    }

    fn normal(&self, f: usize) -> [f64; 2] {
        let mut nu = [0.0; 2];
        nu[self.grid.face(f).axis] = self.sign;
        nu
    }

    /// Cost per unit jump on face `f`, including the face area.
    pub fn face_weight(&self, f: usize) -> f64 {
        let nu = self.normal(f);
        self.psi.weight(&self.face_x[f], &nu[..self.grid.n_dim]) * self.grid.face_area()
    }

    pub fn energy(&self, dofs: &[f64], active: &[bool]) -> EnergySplit {
        let g = &self.grid;
        let (s, d) = (g.cell_stride(), g.d);
        let mut xi = vec![0.0; self.a.len()];
        let mut bulk = 0.0;
        for c in 0..g.n_cells() {
            for (j, o) in xi.iter_mut().enumerate() {
                *o = self.a[j] + dofs[c * s + d + j];
            }
            bulk += self.w.value(&self.cell_x[c], &xi);
        }
        let mut surface = 0.0;
        for f in 0..g.n_faces() {
            if !self.counted(f, active) {
                continue;
            }
            let jump: Vec<f64> = mismatch_raw(g, dofs, f).iter().map(|v| self.sign * v).collect();
            let nu = self.normal(f);
            surface += self.psi.value(&self.face_x[f], &jump, &nu[..g.n_dim]);
        }
        EnergySplit {
            bulk: bulk * g.cell_volume(),
            surface: surface * g.face_area(),
        }
    }

    pub fn gradient(&self, dofs: &[f64], active: &[bool], out: &mut [f64]) {
        let g = &self.grid;
        let (s, d, n) = (g.cell_stride(), g.d, g.n_dim);
        out.iter_mut().for_each(|v| *v = 0.0);
        let vol = g.cell_volume();
        let mut xi = vec![0.0; self.a.len()];
        let mut gw = vec![0.0; self.a.len()];
        for c in 0..g.n_cells() {
            for (j, o) in xi.iter_mut().enumerate() {
                *o = self.a[j] + dofs[c * s + d + j];
            }
            self.w.grad_into(&self.cell_x[c], &xi, &mut gw);
            for (j, v) in gw.iter().enumerate() {
                out[c * s + d + j] += vol * v;
            }
        }
        let area = g.face_area();
        let half = 0.5 * g.h();
        let mut gl = vec![0.0; d];
        for f in 0..g.n_faces() {
            if !self.counted(f, active) {
                continue;
            }
            let fr = g.face(f);
            let jump: Vec<f64> = mismatch_raw(g, dofs, f).iter().map(|v| self.sign * v).collect();
            let nu = self.normal(f);
            self.psi.grad_lambda_into(&self.face_x[f], &jump, &nu[..n], &mut gl);
            for r in 0..d {
                let gr = area * self.sign * gl[r];
                out[fr.plus * s + r] += gr;
                out[fr.plus * s + d + r * n + fr.axis] -= half * gr;
                out[fr.minus * s + r] -= gr;
                out[fr.minus * s + d + r * n + fr.axis] -= half * gr;
            }
        }
    }
}
