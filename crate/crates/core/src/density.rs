//! Periodic bulk and surface energy densities and their assumption validators.
//!
//! Bulk densities have the form `W(x, xi) = a(x) |xi|^p` and surface densities
//! `psi(x, lambda, nu) = c(x) |lambda| (1 + eta |nu . e1|)`, where `a` and `c`
//! are built-in Q-periodic coefficient fields. Evaluation always reduces `x`
//! to its fractional part first, so periodicity holds bit-for-bit whenever
//! `x + z` is itself exactly representable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matrix::{norm, Mat};

/// Tolerance on `|nu| = 1`.
pub const UNIT_TOL: f64 = 1e-12;

/// Fractional part in `[0, 1)`.
pub fn frac(t: f64) -> f64 {
    let r = t - t.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Q-periodic positive coefficient field on the unit cube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CoefficientField {
    Constant { value: f64 },
    /// Equal-width layers along `axis`; `values[i]` on `[i/L, (i+1)/L)`.
    Layered { values: Vec<f64>, axis: usize },
    /// Two-colour checkerboard with cells of side 1/2.
    Checkerboard { values: [f64; 2] },
    /// `mean + amplitude * mean_i cos(2 pi x_i)`.
    Trigonometric { mean: f64, amplitude: f64 },
}

impl CoefficientField {
    pub fn layered(values: &[f64]) -> Self {
        CoefficientField::Layered {
            values: values.to_vec(),
            axis: 0,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = match self {
            CoefficientField::Constant { value } => value.is_finite() && *value > 0.0,
            CoefficientField::Layered { values, axis } => {
                !values.is_empty()
                    && *axis < 2
                    && values.iter().all(|v| v.is_finite() && *v > 0.0)
            }
            CoefficientField::Checkerboard { values } => {
                values.iter().all(|v| v.is_finite() && *v > 0.0)
            }
            CoefficientField::Trigonometric { mean, amplitude } => {
                mean.is_finite() && amplitude.is_finite() && amplitude.abs() < *mean
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("{what} coefficient field must be finite and positive"))
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            CoefficientField::Constant { value } => *value,
            CoefficientField::Layered { values, axis } => {
                let t = x.get(*axis).copied().map(frac).unwrap_or(0.0);
                let i = ((t * values.len() as f64) as usize).min(values.len() - 1);
                values[i]
            }
            CoefficientField::Checkerboard { values } => {
                let parity: usize = x.iter().map(|&t| (2.0 * frac(t)) as usize).sum();
                values[parity % 2]
            }
            CoefficientField::Trigonometric { mean, amplitude } => {
                let s: f64 = x
                    .iter()
                    .map(|&t| (2.0 * std::f64::consts::PI * frac(t)).cos())
                    .sum();
                mean + amplitude * s / x.len().max(1) as f64
            }
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            CoefficientField::Constant { value } => *value,
            CoefficientField::Layered { values, .. } => {
                values.iter().copied().fold(f64::INFINITY, f64::min)
            }
            CoefficientField::Checkerboard { values } => values[0].min(values[1]),
            CoefficientField::Trigonometric { mean, amplitude } => mean - amplitude.abs(),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            CoefficientField::Constant { value } => *value,
            CoefficientField::Layered { values, .. } => {
                values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
            CoefficientField::Checkerboard { values } => values[0].max(values[1]),
            CoefficientField::Trigonometric { mean, amplitude } => mean + amplitude.abs(),
        }
    }

    /// Whether the field is continuous in `x`.
    pub fn is_continuous(&self) -> bool {
        match self {
            CoefficientField::Constant { .. } | CoefficientField::Trigonometric { .. } => true,
            CoefficientField::Layered { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
            CoefficientField::Checkerboard { values } => values[0] == values[1],
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        match self {
            CoefficientField::Constant { .. } => true,
            CoefficientField::Trigonometric { amplitude, .. } => *amplitude == 0.0,
            _ => self.min() == self.max(),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            CoefficientField::Constant { .. } => "constant",
            CoefficientField::Layered { .. } => "layered",
            CoefficientField::Checkerboard { .. } => "checkerboard",
            CoefficientField::Trigonometric { .. } => "trigonometric",
        }
    }
}

/// `W(x, xi) = a(x) |xi|^p` with growth metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBulkDensity {
    pub coefficient: CoefficientField,
    pub p: f64,
    /// `C_W`: p-Lipschitz and upper growth constant.
    pub c_upper: f64,
    /// `C'_W`: coercivity slope.
    pub c_coercive: f64,
    /// `c'_W`: coercivity offset.
    pub c_offset: f64,
}

impl PeriodicBulkDensity {
    /// Density with constants derived from the coefficient bounds.
    pub fn new(coefficient: CoefficientField, p: f64) -> Result<Self> {
        let c_upper = coefficient.max() * (p / 2.0).max(1.0);
        let c_coercive = coefficient.min();
        Self::with_constants(coefficient, p, c_upper, c_coercive, 1.0)
    }

    pub fn with_constants(
        coefficient: CoefficientField,
        p: f64,
        c_upper: f64,
        c_coercive: f64,
        c_offset: f64,
    ) -> Result<Self> {
        coefficient.validate("bulk")?;
        if !(p > 1.0 && p <= 4.0) {
            return invalid(format!("exponent p = {p} outside (1, 4]"));
        }
        if !(c_upper > 0.0 && c_coercive > 0.0 && c_offset > 0.0)
            || !(c_upper.is_finite() && c_coercive.is_finite() && c_offset.is_finite())
        {
            return invalid("bulk growth constants must be positive and finite");
        }
        Ok(PeriodicBulkDensity {
            coefficient,
            p,
            c_upper,
            c_coercive,
            c_offset,
        })
    }

    /// `|xi|^2`.
    pub fn quadratic() -> Self {
        Self::new(CoefficientField::Constant { value: 1.0 }, 2.0).unwrap()
    }

    pub fn eval(&self, x: &[f64], xi: &Mat) -> Result<f64> {
        if x.iter().any(|t| !t.is_finite()) || !xi.is_finite() {
            return invalid("non-finite input to bulk density");
        }
        Ok(self.value(x, xi.as_slice()))
    }

    /// Unchecked evaluation on a flat `xi`.
    #[inline]
    pub fn value(&self, x: &[f64], xi: &[f64]) -> f64 {
        let n2: f64 = xi.iter().map(|t| t * t).sum();
        self.coefficient.eval(x) * self.pow_norm(n2)
    }

    #[inline]
    fn pow_norm(&self, n2: f64) -> f64 {
        if self.p == 2.0 {
            n2
        } else {
            n2.powf(0.5 * self.p)
        }
    }

    /// Gradient of `xi -> W(x, xi)` written into `out`.
    pub fn grad_into(&self, x: &[f64], xi: &[f64], out: &mut [f64]) {
        let a = self.coefficient.eval(x);
        let n2: f64 = xi.iter().map(|t| t * t).sum();
        let s = if self.p == 2.0 {
            2.0 * a
        } else if n2 == 0.0 {
            0.0
        } else {
            a * self.p * n2.powf(0.5 * self.p - 1.0)
        };
        for (o, v) in out.iter_mut().zip(xi) {
            *o = s * v;
        }
    }

    /// `mean_x W(x, xi)` by midpoint quadrature on `res^N` points.
    pub fn cell_mean(&self, xi: &Mat, n_dim: usize, res: usize) -> f64 {
        let cells = res.pow(n_dim as u32);
        let mut acc = 0.0;
        let mut x = vec![0.0; n_dim];
        for c in 0..cells {
            let mut rem = c;
            for xa in x.iter_mut() {
                *xa = ((rem % res) as f64 + 0.5) / res as f64;
                rem /= res;
            }
            acc += self.value(&x, xi.as_slice());
        }
        acc / cells as f64
    }
}

/// `psi(x, lambda, nu) = c(x) |lambda| (1 + eta |nu_1|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSurfaceDensity {
    pub coefficient: CoefficientField,
    /// Normal anisotropy weight `eta >= 0`.
    pub anisotropy: f64,
    pub c_lower: f64,
    pub c_upper: f64,
}

impl PeriodicSurfaceDensity {
    pub fn new(coefficient: CoefficientField, anisotropy: f64) -> Result<Self> {
        coefficient.validate("surface")?;
        if !(anisotropy >= 0.0 && anisotropy.is_finite()) {
            return invalid("anisotropy weight must be finite and nonnegative");
        }
        Ok(PeriodicSurfaceDensity {
            c_lower: coefficient.min(),
            c_upper: coefficient.max() * (1.0 + anisotropy),
            coefficient,
            anisotropy,
        })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(CoefficientField::Constant { value: c }, 0.0)
    }

    pub fn eval(&self, x: &[f64], lambda: &[f64], nu: &[f64]) -> Result<f64> {
        if (norm(nu) - 1.0).abs() > UNIT_TOL {
            return invalid(format!("normal {nu:?} is not a unit vector"));
        }
        if lambda.iter().chain(x).any(|t| !t.is_finite()) {
            return invalid("non-finite input to surface density");
        }
        Ok(self.value(x, lambda, nu))
    }

    /// Per-unit-jump weight, so that `psi = weight * |lambda|`.
    #[inline]
    pub fn weight(&self, x: &[f64], nu: &[f64]) -> f64 {
        self.coefficient.eval(x) * (1.0 + self.anisotropy * nu[0].abs())
    }

    #[inline]
    pub fn value(&self, x: &[f64], lambda: &[f64], nu: &[f64]) -> f64 {
        self.weight(x, nu) * norm(lambda)
    }

    /// Gradient in `lambda`; zero at `lambda = 0` (minimal-norm subgradient
    /// selection is not attempted).
    pub fn grad_lambda_into(&self, x: &[f64], lambda: &[f64], nu: &[f64], out: &mut [f64]) {
        let n = norm(lambda);
        let s = if n == 0.0 { 0.0 } else { self.weight(x, nu) / n };
        for (o, l) in out.iter_mut().zip(lambda) {
            *o = s * l;
        }
    }
}

/// Spatial and value dimensions `(N, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub d: usize,
}

impl Dims {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if !(1..=2).contains(&n) || !(1..=2).contains(&d) {
            return invalid(format!("unsupported dimensions N={n}, d={d}"));
        }
        Ok(Dims { n, d })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    /// Holds by construction for the family; sampling confirms it.
    Exact,
    /// Verified only on samples.
    Sampled,
    /// Diagnostic only; the observed quantity is recorded.
    Reported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub id: String,
    pub description: String,
    pub mode: CheckMode,
    pub samples: usize,
    pub violations: usize,
    /// Largest observed `lhs - rhs`; nonpositive iff passed.
    pub worst_margin: f64,
    pub passed: bool,
    pub observed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub budget: usize,
    pub seed: u64,
    pub checks: Vec<CheckEntry>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, id: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.id == id)
    }
}

struct Tally {
    worst: f64,
    violations: usize,
    observed: f64,
}

impl Tally {
    fn new() -> Self {
        Tally {
            worst: f64::NEG_INFINITY,
            violations: 0,
            observed: 0.0,
        }
    }

    fn push(&mut self, margin: f64) {
        if margin > 0.0 {
            self.violations += 1;
        }
        self.worst = self.worst.max(margin);
    }

    fn finish(self, id: &str, description: &str, mode: CheckMode, samples: usize) -> CheckEntry {
        let observed = if mode == CheckMode::Reported {
            Some(self.observed)
        } else {
            None
        };
        let worst = if mode == CheckMode::Reported { 0.0 } else { self.worst };
        CheckEntry {
            id: id.to_string(),
            description: description.to_string(),
            mode,
            samples,
            violations: self.violations,
            worst_margin: worst,
            passed: self.violations == 0,
            observed,
        }
    }
}

fn sample_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // Dyadic points keep x + z exactly representable.
    (0..n).map(|_| rng.gen_range(0..1024) as f64 / 1024.0).collect()
}

fn sample_vec(rng: &mut ChaCha8Rng, len: usize, r: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-r..r)).collect()
}

fn sample_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![if rng.gen_bool(0.5) { 1.0 } else { -1.0 }];
    }
    let th = rng.gen_range(0.0..std::f64::consts::TAU);
    vec![th.cos(), th.sin()]
}

/// Sampled check of the standing assumptions on `(W, psi)`.
///
/// Pure in `(densities, dims, budget, seed)`.
pub fn validate_assumptions(
    bulk: &PeriodicBulkDensity,
    surf: &PeriodicSurfaceDensity,
    dims: Dims,
    budget: usize,
    seed: u64,
) -> ValidationReport {
    let budget = budget.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (dims.n, dims.d);
    let p = bulk.p;
    const XI_R: f64 = 10.0;
    const LAM_R: f64 = 5.0;
    const REL: f64 = 1e-12;

    let mut h1 = Tally::new();
    let mut h2 = Tally::new();
    let mut h2c = Tally::new();
    let mut h8 = Tally::new();
    let mut grow = Tally::new();
    let mut h3 = Tally::new();
    let mut h3c = Tally::new();
    let mut h4 = Tally::new();
    let mut h5 = Tally::new();
    let mut h6 = Tally::new();
    let mut lip = Tally::new();

    for _ in 0..budget {
        let x = sample_point(&mut rng, n);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-3i32..=3) as f64).collect();
        let xz: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        let xi1 = sample_vec(&mut rng, d * n, XI_R);
        let xi2 = sample_vec(&mut rng, d * n, XI_R);
        let l1 = sample_vec(&mut rng, d, LAM_R);
        let l2 = sample_vec(&mut rng, d, LAM_R);
        let nu = sample_unit(&mut rng, n);
        let t = rng.gen_range(0.01..10.0);

        let w1 = bulk.value(&x, &xi1);
        let w2 = bulk.value(&x, &xi2);
        let n1 = norm(&xi1);
        let n2 = norm(&xi2);
        let ps1 = surf.value(&x, &l1, &nu);
        let ps2 = surf.value(&x, &l2, &nu);

        // (1) periodicity
        h1.push((bulk.value(&xz, &xi1) - w1).abs());
        h1.push((surf.value(&xz, &l1, &nu) - ps1).abs());

        // (2) p-Lipschitz in xi
        let dxi: Vec<f64> = xi1.iter().zip(&xi2).map(|(a, b)| a - b).collect();
        let rhs = bulk.c_upper * norm(&dxi) * (1.0 + n1.powf(p - 1.0) + n2.powf(p - 1.0));
        h2.push((w1 - w2).abs() - rhs - REL * rhs);

        // (3) modulus of continuity in x, at separation 2^-10
        let mut xs = x.clone();
        xs[0] += 1.0 / 1024.0;
        let ratio = (bulk.value(&xs, &xi1) - w1).abs() / (1.0 + n1.powf(p));
        h2c.observed = h2c.observed.max(ratio);

        // (4) coercivity
        h8.push(bulk.c_coercive * n1.powf(p) - bulk.c_offset - w1);

        // upper p-growth
        let cap = bulk.c_upper * (1.0 + n1.powf(p));
        grow.push(w1 - cap - REL * cap);

        // (5) linear growth of psi
        let nl1 = norm(&l1);
        h3.push((surf.c_lower * nl1 - ps1).max(ps1 - surf.c_upper * nl1) - REL * ps1);

        // (6) modulus of continuity of psi in x
        let r = (surf.value(&xs, &l1, &nu) - ps1).abs() / nl1.max(f64::MIN_POSITIVE);
        h3c.observed = h3c.observed.max(r);

        // (7) positive 1-homogeneity
        let tl: Vec<f64> = l1.iter().map(|v| t * v).collect();
        let tp = t * ps1;
        h4.push((surf.value(&x, &tl, &nu) - tp).abs() - REL * (1.0 + tp));

        // (8) subadditivity
        let ls: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
        h5.push(surf.value(&x, &ls, &nu) - ps1 - ps2 - REL * (ps1 + ps2));

        // (9) symmetry
        let nl: Vec<f64> = l1.iter().map(|v| -v).collect();
        let nn: Vec<f64> = nu.iter().map(|v| -v).collect();
        h6.push((surf.value(&x, &nl, &nn) - ps1).abs());

        // Lipschitz in lambda
        let dl: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a - b).collect();
        let lr = surf.c_upper * norm(&dl);
        lip.push((ps1 - ps2).abs() - lr - REL * lr);
    }

    use CheckMode::*;
    let checks = vec![
        h1.finish("H1", "Q-periodicity of W and psi in x", Exact, budget),
        h2.finish("H2", "p-Lipschitz continuity of W in xi", Sampled, budget),
        h2c.finish("H2c", "x-modulus of W (observed at |dx| = 2^-10)", Reported, budget),
        h8.finish("H8", "coercivity W >= C'_W |xi|^p - c'_W", Sampled, budget),
        grow.finish("pgrowth", "upper growth W <= C_W (1 + |xi|^p)", Sampled, budget),
        h3.finish("H3", "linear growth c_psi |l| <= psi <= C_psi |l|", Exact, budget),
        h3c.finish("H3c", "x-modulus of psi (observed at |dx| = 2^-10)", Reported, budget),
        h4.finish("H4", "positive 1-homogeneity of psi in lambda", Exact, budget),
        h5.finish("H5", "subadditivity of psi in lambda", Exact, budget),
        h6.finish("H6", "symmetry psi(x,l,n) = psi(x,-l,-n)", Exact, budget),
        lip.finish("Lpsi", "Lipschitz bound |psi(l1)-psi(l2)| <= C_psi |l1-l2|", Sampled, budget),
    ];
    ValidationReport {
        budget,
        seed,
        checks,
    }
}
