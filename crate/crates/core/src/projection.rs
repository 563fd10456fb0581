//! Linear constraints of the bulk cell problem and orthogonal projection
//! onto them.
//!
//! For a fixed jump-activity pattern the competitor class is the affine set
//! `{x : C x = t}` where the rows of `C` are
//!
//! * trace continuity `trace_plus - trace_minus = 0` on every inactive face
//!   (wrap faces included, which encodes periodic traces), one row per value
//!   component;
//! * the mean-gradient rows `sum_c G_c[r, i] / sqrt(n) = sqrt(n) (B - A)[r, i]`.
//!
//! Projections solve `C C^T y = r` with Jacobi-preconditioned conjugate
//! gradients; `C` is applied matrix-free.

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::sbv::Grid;

/// Feasibility tolerance on constraint residuals, relative to `max(1, |x|_inf)`.
pub const FEAS_TOL: f64 = 1e-12;

pub struct Constraints {
    grid: Grid,
    /// Faces carrying continuity rows.
    faces: Vec<usize>,
    /// Sparse entries of each face row, per value component.
    rows: Vec<[(usize, f64); 4]>,
    target: Vec<f64>,
    diag: Vec<f64>,
    sqrt_n: f64,
}

impl Constraints {
    pub fn new(grid: Grid, active: &[bool], mean_target: &Mat) -> Self {
        let faces: Vec<usize> = (0..grid.n_faces()).filter(|&f| !active[f]).collect();
        let s = grid.cell_stride();
        let (d, n) = (grid.d, grid.n_dim);
        let half = 0.5 * grid.h();
        let mut rows = Vec::with_capacity(faces.len() * d);
        for &f in &faces {
            let fr = grid.face(f);
            for r in 0..d {
                rows.push([
                    (fr.plus * s + r, 1.0),
                    (fr.plus * s + d + r * n + fr.axis, -half),
                    (fr.minus * s + r, -1.0),
                    (fr.minus * s + d + r * n + fr.axis, -half),
                ]);
            }
        }
        let n_cells = grid.n_cells() as f64;
        let sqrt_n = n_cells.sqrt();
        let mut diag: Vec<f64> = rows
            .iter()
            .map(|row| {
                // merge duplicate indices (single-cell axis)
                let mut acc: Vec<(usize, f64)> = Vec::with_capacity(4);
                for &(i, c) in row {
                    match acc.iter_mut().find(|(j, _)| *j == i) {
                        Some(e) => e.1 += c,
                        None => acc.push((i, c)),
                    }
                }
                acc.iter().map(|(_, c)| c * c).sum::<f64>()
            })
            .collect();
        let mut target = vec![0.0; rows.len()];
        for v in mean_target.as_slice() {
            target.push(sqrt_n * v);
            diag.push(1.0);
        }
        Constraints {
            grid,
            faces,
            rows,
            target,
            diag,
            sqrt_n,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn faces(&self) -> &[usize] {
        &self.faces
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .rows
            .iter()
            .map(|row| row.iter().map(|&(i, c)| c * x[i]).sum())
            .collect();
        let g = &self.grid;
        let (s, d, dn) = (g.cell_stride(), g.d, g.d * g.n_dim);
        let mut sums = vec![0.0; dn];
        for c in 0..g.n_cells() {
            for (j, acc) in sums.iter_mut().enumerate() {
                *acc += x[c * s + d + j];
            }
        }
        out.extend(sums.iter().map(|v| v / self.sqrt_n));
        out
    }

    pub fn apply_t(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (row, &yr) in self.rows.iter().zip(y) {
            for &(i, c) in row {
                out[i] += c * yr;
            }
        }
        let g = &self.grid;
        let (s, d, dn) = (g.cell_stride(), g.d, g.d * g.n_dim);
        let ym = &y[self.rows.len()..];
        for c in 0..g.n_cells() {
            for j in 0..dn {
                out[c * s + d + j] += ym[j] / self.sqrt_n;
            }
        }
    }

    /// Residual `C x - t`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.apply(x);
        for (ri, ti) in r.iter_mut().zip(&self.target) {
            *ri -= ti;
        }
        r
    }

    /// Solution of `(C C^T + delta I) y = b` by preconditioned CG.
    ///
    /// Rows of `C` are dependent whenever the inactive faces close a cycle of
    /// the torus; the tiny shift `delta` keeps CG from breaking down on the
    /// resulting null space, which `C^T` annihilates anyway.
    pub fn solve_normal(&self, b: &[f64]) -> Vec<f64> {
        let m = b.len();
        let delta = 1e-12 * self.diag.iter().fold(0.0f64, |a, v| a.max(*v));
        let ndof = self.grid.n_dofs();
        let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut y = vec![0.0; m];
        if bnorm == 0.0 {
            return y;
        }
        let mut tmp = vec![0.0; ndof];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&self.diag).map(|(a, d)| a / (d + delta)).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let max_iter = 4 * m + 200;
        for _ in 0..max_iter {
            self.apply_t(&p, &mut tmp);
            let mut ap = self.apply(&tmp);
            ap.iter_mut().zip(&p).for_each(|(a, pi)| *a += delta * pi);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..m {
                y[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn <= 1e-15 * bnorm {
                break;
            }
            for i in 0..m {
                z[i] = r[i] / (self.diag[i] + delta);
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..m {
                p[i] = z[i] + beta * p[i];
            }
        }
        y
    }

    /// Orthogonal projection of `x` onto the affine constraint set.
    pub fn project_point(&self, x: &mut [f64]) -> Result<()> {
        let mut tmp = vec![0.0; x.len()];
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut worst = f64::INFINITY;
        for _ in 0..6 {
            let r = self.residual(x);
            worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if worst <= 1e-2 * FEAS_TOL * scale {
                return Ok(());
            }
            let y = self.solve_normal(&r);
            self.apply_t(&y, &mut tmp);
            for (xi, ti) in x.iter_mut().zip(&tmp) {
                *xi -= ti;
            }
        }
        let r = self.residual(x);
        let last = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if last <= FEAS_TOL * scale {
            Ok(())
        } else {
            Err(Error::Internal(format!(
                "constraint projection failed: residual {last:.3e} (previous {worst:.3e})"
            )))
        }
    }

    /// Projection of a direction onto the null space of `C`.
    pub fn project_direction(&self, g: &mut [f64]) {
        let mut tmp = vec![0.0; g.len()];
        for _ in 0..2 {
            let cg = self.apply(g);
            let y = self.solve_normal(&cg);
            self.apply_t(&y, &mut tmp);
            for (gi, ti) in g.iter_mut().zip(&tmp) {
                *gi -= ti;
            }
        }
    }

    /// Lagrange multipliers of the face rows for the gradient `grad`,
    /// indexed like [`Constraints::faces`] (`d` entries per face).
    pub fn face_multipliers(&self, grad: &[f64]) -> Vec<f64> {
        let cg = self.apply(grad);
        let y = self.solve_normal(&cg);
        y[..self.rows.len()].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_enforces_continuity_and_mean() {
        let g = Grid::new(2, 2, 1, 4).unwrap();
        let mut active = vec![false; g.n_faces()];
        // one sheet normal to e1 in the middle of the cell
        for c in 0..g.n_cells() {
            if g.coords(c)[0] == 1 {
                active[c] = true;
            }
        }
        let target = Mat::from_rows(&[vec![0.5, 0.0], vec![-0.25, 0.0]]).unwrap();
        let cons = Constraints::new(g, &active, &target);
        let mut x: Vec<f64> = (0..g.n_dofs()).map(|i| ((i * 7919) % 13) as f64 / 13.0).collect();
        cons.project_point(&mut x).unwrap();
        let r = cons.residual(&x);
        assert!(r.iter().all(|v| v.abs() < 1e-12), "{r:?}");
    }

    #[test]
    fn infeasible_mean_without_jumps_is_reported() {
        let g = Grid::new(1, 1, 1, 4).unwrap();
        let active = vec![false; g.n_faces()];
        let cons = Constraints::new(g, &active, &Mat::scalar(1.0));
        let mut x = vec![0.0; g.n_dofs()];
        assert!(matches!(cons.project_point(&mut x), Err(Error::Internal(_))));
    }

    #[test]
    fn projected_direction_is_in_null_space() {
        let g = Grid::new(1, 2, 2, 3).unwrap();
        let mut active = vec![false; g.n_faces()];
        active[2] = true;
        active[4] = true;
        let cons = Constraints::new(g, &active, &Mat::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        let mut v: Vec<f64> = (0..g.n_dofs()).map(|i| (i as f64).sin()).collect();
        cons.project_direction(&mut v);
        let cv = cons.apply(&v);
        assert!(cv.iter().all(|x| x.abs() < 1e-12));
    }
}
