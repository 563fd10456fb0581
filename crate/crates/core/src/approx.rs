//! Explicit approximating sequences for affine macroscopic maps and constant
//! microscopic tensors.
//!
//! For `g(x) = A x + g0` and constant `G` the column sawtooth
//! `u_n = g + sum_i (G - A) e_i s_n(x_i)`, `s_n(t) = t - floor(n t) / n`,
//! has `grad u_n = G`, jumps `-(G - A) e_i / n` on the planes `x_i = j / n`,
//! and converges to `g` in `L^1(Q)`.
//!
//! Fields are stored relative to `g`: the stored values are `u_n - g`, which
//! is `Q`-periodic, and energies are evaluated with reference gradient `A`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{PeriodicBulkDensity, PeriodicSurfaceDensity};
use crate::error::{invalid, Result};
use crate::matrix::{norm, Mat};
use crate::sbv::{DiscreteSBVField, EnergySplit, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredDeformationSample {
    /// Gradient of the affine map `g`.
    pub a: Mat,
    pub g0: Vec<f64>,
    /// Microscopic deformation tensor.
    pub g: Mat,
}

impl StructuredDeformationSample {
    pub fn new(a: Mat, g0: Vec<f64>, g: Mat) -> Result<Self> {
        if (a.rows(), a.cols()) != (g.rows(), g.cols()) || g0.len() != a.rows() {
            return invalid("A, g0 and G have inconsistent shapes");
        }
        Grid::new(a.cols(), a.rows(), 1, 1)?;
        if !a.is_finite() || !g.is_finite() || !g0.iter().all(|v| v.is_finite()) {
            return invalid("sample entries must be finite");
        }
        Ok(StructuredDeformationSample { a, g0, g })
    }

    /// `M = grad g - G`.
    pub fn disarrangement(&self) -> Mat {
        self.a.sub(&self.g)
    }

    pub fn n_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn d(&self) -> usize {
        self.a.rows()
    }

    pub fn g_at(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d())
            .map(|r| self.g0[r] + (0..self.n_dim()).map(|i| self.a.get(r, i) * x[i]).sum::<f64>())
            .collect()
    }
}

/// One jump plane `x_axis = position` of `u_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sheet {
    pub axis: usize,
    pub position: f64,
    pub jump: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawtoothSequence {
    pub sample: StructuredDeformationSample,
}

fn sawtooth(n: usize, t: f64) -> f64 {
    t - (n as f64 * t).floor() / n as f64
}

impl SawtoothSequence {
    pub fn new(sample: StructuredDeformationSample) -> Self {
        SawtoothSequence { sample }
    }

    fn column(&self, i: usize) -> Vec<f64> {
        self.sample.g.sub(&self.sample.a).column(i)
    }

    fn active_axes(&self) -> Vec<usize> {
        (0..self.sample.n_dim())
            .filter(|&i| self.column(i).iter().any(|v| *v != 0.0))
            .collect()
    }

    /// `u_n(x)` in closed form.
    pub fn value(&self, n: usize, x: &[f64]) -> Vec<f64> {
        let mut u = self.sample.g_at(x);
        for i in 0..self.sample.n_dim() {
            let s = sawtooth(n, x[i]);
            u.iter_mut().zip(self.column(i)).for_each(|(v, b)| *v += b * s);
        }
        u
    }

    /// Jump planes in `[0, 1)^N`.
    pub fn sheets(&self, n: usize) -> Vec<Sheet> {
        let mut out = Vec::new();
        for i in self.active_axes() {
            let jump: Vec<f64> = self.column(i).iter().map(|b| -b / n as f64).collect();
            for j in 0..n {
                out.push(Sheet {
                    axis: i,
                    position: j as f64 / n as f64,
                    jump: jump.clone(),
                });
            }
        }
        out
    }

    /// `|D u_n|(Q) = |G| + sum_sheets |jump|`.
    pub fn total_variation(&self, n: usize) -> f64 {
        self.sample.g.norm() + self.sheets(n).iter().map(|s| norm(&s.jump)).sum::<f64>()
    }

    /// `||u_n - g||_{L^1(Q)}`.
    ///
    /// Every sawtooth block is a translate of the first, so the norm equals
    /// `(1/n) int_{[0,1)^N} |sum_i b_i t_i| dt`; that integral is exact for
    /// `N = 1` and uses a 256-point midpoint rule per axis for `N = 2`.
    pub fn l1_distance(&self, n: usize) -> f64 {
        let nd = self.sample.n_dim();
        let cols: Vec<Vec<f64>> = (0..nd).map(|i| self.column(i)).collect();
        let block = if nd == 1 {
            0.5 * norm(&cols[0])
        } else {
            const Q: usize = 256;
            let mut acc = 0.0;
            for p in 0..Q {
                let t0 = (p as f64 + 0.5) / Q as f64;
                for q in 0..Q {
                    let t1 = (q as f64 + 0.5) / Q as f64;
                    let v: Vec<f64> = cols[0].iter().zip(&cols[1]).map(|(b0, b1)| b0 * t0 + b1 * t1).collect();
                    acc += norm(&v);
                }
            }
            acc / (Q * Q) as f64
        };
        block / n as f64
    }

    /// `u_n - g` sampled on `Q` with `r` subcells per sawtooth period.
    pub fn sample_field(&self, n: usize, r: usize) -> Result<DiscreteSBVField> {
        if n == 0 || r == 0 {
            return invalid("n and r must be positive");
        }
        let (nd, d) = (self.sample.n_dim(), self.sample.d());
        let grid = Grid::new(nd, d, 1, n * r)?;
        let mut f = DiscreteSBVField::zeros(grid, true);
        let rel = self.sample.g.sub(&self.sample.a);
        let zero = Mat::zeros(d, nd);
        let probe = StructuredDeformationSample {
            a: zero,
            g0: vec![0.0; d],
            g: rel.clone(),
        };
        let relative = SawtoothSequence::new(probe);
        for c in 0..grid.n_cells() {
            let x = grid.center(c);
            f.value_mut(c).copy_from_slice(&relative.value(n, &x));
            f.grad_mut(c).copy_from_slice(rel.as_slice());
        }
        for i in self.active_axes() {
            for c in 0..grid.n_cells() {
                if (grid.coords(c)[i] + 1) % r == 0 {
                    f.set_active(i * grid.n_cells() + c, true);
                }
            }
        }
        Ok(f)
    }
}

pub fn build_sawtooth_sequence(sample: &StructuredDeformationSample, n: usize, r: usize) -> Result<DiscreteSBVField> {
    SawtoothSequence::new(sample.clone()).sample_field(n, r)
}

/// Rule `n -> eps_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum EpsilonRule {
    /// `1 / n`.
    Reciprocal,
    /// `1 / (k n)`.
    Commensurate { k: usize },
    /// `n^-exponent`.
    Power { exponent: f64 },
}

impl EpsilonRule {
    pub fn eps(&self, n: usize) -> f64 {
        match *self {
            EpsilonRule::Reciprocal => 1.0 / n as f64,
            EpsilonRule::Commensurate { k } => 1.0 / (k * n) as f64,
            EpsilonRule::Power { exponent } => (n as f64).powf(-exponent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EpsilonRule::Commensurate { k: 0 } => invalid("commensurate rule needs k >= 1"),
            EpsilonRule::Power { exponent } if !(exponent > 0.0 && exponent.is_finite()) => {
                invalid("power rule needs a positive exponent")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub n: usize,
    pub eps: f64,
    pub bulk: f64,
    pub surface: f64,
    pub total: f64,
    pub l1_distance: f64,
}

/// `E_eps_n(u_n)` along the sawtooth sequence.
///
/// The bulk term uses a midpoint rule with `m_q` points per `eps`-period and
/// axis; each sheet contributes its lateral midpoint sum with the same
/// spacing.
pub fn eval_sequence_energy(
    seq: &SawtoothSequence,
    rule: EpsilonRule,
    w: &PeriodicBulkDensity,
    psi: &PeriodicSurfaceDensity,
    n_list: &[usize],
    m_q: usize,
) -> Result<Vec<EnergyPoint>> {
    rule.validate()?;
    if m_q == 0 || n_list.contains(&0) {
        return invalid("n and m_q must be positive");
    }
    let eps: Vec<f64> = n_list.iter().map(|&n| rule.eps(n)).collect();
    if eps.windows(2).any(|e| e[1] > e[0]) {
        return invalid("eps_n must be nonincreasing along n_list");
    }
    let nd = seq.sample.n_dim();
    let g = seq.sample.g.as_slice().to_vec();
    Ok(n_list
        .par_iter()
        .zip(&eps)
        .map(|(&n, &e)| {
            let pts = m_q * (1.0 / e).ceil() as usize;
            let h = 1.0 / pts as f64;
            let at = |x: &[f64]| -> Vec<f64> { x.iter().map(|v| v / e).collect() };
            let mut bulk = 0.0;
            let lateral = if nd == 2 { pts } else { 1 };
            for p in 0..pts {
                for q in 0..lateral {
                    let mut x = vec![(p as f64 + 0.5) * h];
                    if nd == 2 {
                        x.push((q as f64 + 0.5) * h);
                    }
                    bulk += w.value(&at(&x), &g);
                }
            }
            bulk *= h.powi(nd as i32);
            let mut surface = 0.0;
            for s in seq.sheets(n) {
                let mut normal = vec![0.0; nd];
                normal[s.axis] = 1.0;
                let mut acc = 0.0;
                for q in 0..lateral {
                    let mut x = vec![s.position; nd];
                    if nd == 2 {
                        x[1 - s.axis] = (q as f64 + 0.5) * h;
                    }
                    acc += psi.value(&at(&x), &s.jump, &normal);
                }
                surface += acc / lateral as f64;
            }
            EnergyPoint {
                n,
                eps: e,
                bulk,
                surface,
                total: bulk + surface,
                l1_distance: seq.l1_distance(n),
            }
        })
        .collect())
}

/// `u_n - g` for `u_n(x) = A x + eps u*(x / eps)`, where `u*` is a
/// `kQ`-periodic cell competitor with mean gradient `B - A`.
///
/// Requires `1 / (k eps)` to be an integer; then `E_eps(u_n)` equals the cell
/// energy of `u*` divided by `k^N`.
pub fn build_cell_recovery_sequence(
    a: &Mat,
    b: &Mat,
    ustar: &DiscreteSBVField,
    eps: f64,
) -> Result<DiscreteSBVField> {
    let g = *ustar.grid();
    if !ustar.is_periodic() {
        return invalid("cell field must be periodic");
    }
    if ustar.mean_gradient().max_abs_diff(&b.sub(a)) > 1e-9 {
        return invalid("cell field does not carry mean gradient B - A");
    }
    let tiles_f = 1.0 / (g.k as f64 * eps);
    let tiles = tiles_f.round();
    if !(eps > 0.0) || tiles < 1.0 || (tiles - tiles_f).abs() > 1e-9 * tiles {
        return invalid(format!(
            "eps = {eps} is not commensurate with k = {}; use eps = 1/(k n)",
            g.k
        ));
    }
    let tiles = tiles as usize;
    let per = g.per_axis();
    let fine = Grid::new(g.n_dim, g.d, 1, tiles * per)?;
    let mut out = DiscreteSBVField::zeros(fine, true);
    let src = |c: usize| {
        let ij = fine.coords(c);
        g.index([ij[0] % per, ij[1] % per])
    };
    for c in 0..fine.n_cells() {
        let s = src(c);
        let v: Vec<f64> = ustar.value(s).iter().map(|v| eps * v).collect();
        out.value_mut(c).copy_from_slice(&v);
        out.grad_mut(c).copy_from_slice(ustar.grad(s));
        for axis in 0..g.n_dim {
            out.set_active(axis * fine.n_cells() + c, ustar.active()[axis * g.n_cells() + s]);
        }
    }
    Ok(out)
}

/// `int_Q |v|` for a stored field, by an `r`-point midpoint rule per subcell axis.
pub fn field_l1_norm(field: &DiscreteSBVField, r: usize) -> f64 {
    let g = field.grid();
    let (h, nd, d) = (g.h(), g.n_dim, g.d);
    let offsets: Vec<f64> = (0..r).map(|p| ((p as f64 + 0.5) / r as f64 - 0.5) * h).collect();
    let lateral: &[f64] = if nd == 2 { &offsets } else { &[0.0] };
    let mut acc = 0.0;
    for c in 0..g.n_cells() {
        let (v, gr) = (field.value(c), field.grad(c));
        for &o0 in &offsets {
            for &o1 in lateral {
                let o = [o0, o1];
                let u: Vec<f64> = (0..d)
                    .map(|row| v[row] + (0..nd).map(|i| gr[row * nd + i] * o[i]).sum::<f64>())
                    .collect();
                acc += norm(&u);
            }
        }
    }
    acc * g.cell_volume() / (offsets.len() * lateral.len()) as f64
}

/// Energy `E_eps` of a field stored relative to `g(x) = A x`.
pub fn relative_energy(
    field: &DiscreteSBVField,
    w: &PeriodicBulkDensity,
    psi: &PeriodicSurfaceDensity,
    a: &Mat,
    eps: f64,
) -> EnergySplit {
    let tau = vec![0.0; a.cols()];
    field.energy_scaled(w, psi, a, &tau, eps)
}

/// Polynomial test function `x_1^p (x_2)^q`, with `x_2 := 1 - x_1` when `N = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestMonomial {
    pub p: u32,
    pub q: u32,
}

/// The ten monomials of total degree at most three.
pub fn test_battery() -> Vec<TestMonomial> {
    let mut out = Vec::new();
    for deg in 0..=3 {
        for p in (0..=deg).rev() {
            out.push(TestMonomial { p, q: deg - p });
        }
    }
    out
}

fn beta(p: u32, q: u32) -> f64 {
    // int_0^1 t^p (1-t)^q dt = p! q! / (p+q+1)!
    let f = |n: u32| (1..=n).map(|v| v as f64).product::<f64>();
    f(p) * f(q) / f(p + q + 1)
}

impl TestMonomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let y = if x.len() == 1 { 1.0 - x[0] } else { x[1] };
        x[0].powi(self.p as i32) * y.powi(self.q as i32)
    }

    pub fn integral(&self, n_dim: usize) -> f64 {
        if n_dim == 1 {
            beta(self.p, self.q)
        } else {
            1.0 / ((self.p + 1) * (self.q + 1)) as f64
        }
    }

    /// Integral over the sheet `x_axis = t` of the unit cube.
    fn sheet_integral(&self, n_dim: usize, axis: usize, t: f64) -> f64 {
        if n_dim == 1 {
            return self.eval(&[t]);
        }
        if axis == 0 {
            t.powi(self.p as i32) / (self.q + 1) as f64
        } else {
            t.powi(self.q as i32) / (self.p + 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakStarReport {
    pub n: usize,
    /// Frobenius error per battery entry.
    pub errors: Vec<f64>,
    pub max_error: f64,
}

/// Tests `sum_sheets [u_n] (x) nu int phi` against `int_Q (grad g - G) phi`.
pub fn weak_star_check(seq: &SawtoothSequence, n: usize) -> WeakStarReport {
    let nd = seq.sample.n_dim();
    let d = seq.sample.d();
    let target = seq.sample.disarrangement();
    let errors: Vec<f64> = test_battery()
        .iter()
        .map(|phi| {
            let mut acc = Mat::zeros(d, nd);
            for s in seq.sheets(n) {
                let wgt = phi.sheet_integral(nd, s.axis, s.position);
                for (r, j) in s.jump.iter().enumerate() {
                    acc.set(r, s.axis, acc.get(r, s.axis) + j * wgt);
                }
            }
            acc.sub(&target.scale(phi.integral(nd))).norm()
        })
        .collect();
    let max_error = errors.iter().fold(0.0f64, |a, e| a.max(*e));
    WeakStarReport { n, errors, max_error }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::CoefficientField;

    fn scalar_sample(a: f64, g: f64) -> StructuredDeformationSample {
        StructuredDeformationSample::new(Mat::scalar(a), vec![0.0], Mat::scalar(g)).unwrap()
    }

    #[test]
    fn no_disarrangement_no_jumps() {
        let seq = SawtoothSequence::new(scalar_sample(0.7, 0.7));
        assert!(seq.sheets(5).is_empty());
        assert_eq!(seq.value(5, &[0.3]), seq.sample.g_at(&[0.3]));
        assert_eq!(seq.l1_distance(5), 0.0);
    }

    #[test]
    fn unit_sawtooth() {
        let seq = SawtoothSequence::new(scalar_sample(0.0, 1.0));
        let sheets = seq.sheets(4);
        assert_eq!(sheets.len(), 4);
        assert!(sheets.iter().all(|s| s.jump == vec![-0.25]));
        assert_eq!(seq.l1_distance(4), 0.125);
        assert_eq!(seq.total_variation(4), 2.0);
        let f = seq.sample_field(4, 4).unwrap();
        assert_eq!(f.jump_records().len(), 4);
        assert!((f.mean_gradient().get(0, 0) - 1.0).abs() < 1e-14);
        assert!((field_l1_norm(&f, 8) - 0.125).abs() < 1e-12);
    }

    #[test]
    fn sampled_energy_matches_sheet_sums() {
        let w = PeriodicBulkDensity::new(CoefficientField::layered(&[1.0, 2.0]), 2.0).unwrap();
        let psi = PeriodicSurfaceDensity::new(CoefficientField::layered(&[1.0, 3.0]), 0.0).unwrap();
        let seq = SawtoothSequence::new(scalar_sample(0.0, 1.0));
        let curve = eval_sequence_energy(&seq, EpsilonRule::Reciprocal, &w, &psi, &[2, 4], 4).unwrap();
        for p in &curve {
            let f = seq.sample_field(p.n, 4).unwrap();
            let e = relative_energy(&f, &w, &psi, &Mat::scalar(0.0), p.eps);
            assert!((e.bulk - p.bulk).abs() < 1e-12 && (e.surface - p.surface).abs() < 1e-12);
            assert!((p.bulk - 1.5).abs() < 1e-12 && (p.surface - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn battery_is_ten_distinct_monomials() {
        let b = test_battery();
        assert_eq!(b.len(), 10);
        assert!((TestMonomial { p: 1, q: 1 }.integral(1) - 1.0 / 6.0).abs() < 1e-15);
        let seq = SawtoothSequence::new(scalar_sample(0.0, 1.0));
        let e8 = weak_star_check(&seq, 8).max_error;
        let e64 = weak_star_check(&seq, 64).max_error;
        assert!(e64 < e8 / 4.0);
    }

    #[test]
    fn incommensurate_eps_is_rejected() {
        let g = Grid::new(1, 1, 2, 2).unwrap();
        let f = DiscreteSBVField::zeros(g, true);
        let a = Mat::scalar(0.0);
        assert!(build_cell_recovery_sequence(&a, &a, &f, 0.3).is_err());
        let r = build_cell_recovery_sequence(&a, &a, &f, 0.25).unwrap();
        assert_eq!(r.grid().per_axis(), 8);
    }
}
