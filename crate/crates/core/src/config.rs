//! JSON experiment configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::approx::EpsilonRule;
use crate::bulk::SolverParams;
use crate::density::{CoefficientField, Dims, PeriodicBulkDensity, PeriodicSurfaceDensity};
use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::oracle::OracleBudget;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Bulk,
    Surface,
    Approx,
    Validate,
    Oracle,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Bulk => "bulk",
            ProblemKind::Surface => "surface",
            ProblemKind::Approx => "approx",
            ProblemKind::Validate => "validate",
            ProblemKind::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Constant,
    Layered,
    Checkerboard,
    Trigonometric,
}

/// Coefficient description shared by the bulk and surface blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBlock {
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Bulk growth exponent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Bulk constants `[C_W, C'_W, c'_W]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<[f64; 3]>,
    /// Surface normal anisotropy weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anisotropy: Option<f64>,
}

fn cfg_err<T>(pointer: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::Config {
        pointer: pointer.into(),
        message: message.into(),
    })
}

impl DensityBlock {
    fn coefficient(&self, at: &str) -> Result<CoefficientField> {
        let need = |v: Option<f64>, key: &str| match v {
            Some(x) => Ok(x),
            None => cfg_err(&format!("{at}/{key}"), format!("required for family {:?}", self.family)),
        };
        Ok(match self.family {
            Family::Constant => CoefficientField::Constant {
                value: need(self.c, "c")?,
            },
            Family::Layered => CoefficientField::Layered {
                values: match &self.values {
                    Some(v) => v.clone(),
                    None => return cfg_err(&format!("{at}/values"), "required for family layered"),
                },
                axis: self.axis.unwrap_or(0),
            },
            Family::Checkerboard => match self.values.as_deref() {
                Some([a, b]) => CoefficientField::Checkerboard { values: [*a, *b] },
                _ => return cfg_err(&format!("{at}/values"), "checkerboard needs exactly two values"),
            },
            Family::Trigonometric => CoefficientField::Trigonometric {
                mean: need(self.mean, "mean")?,
                amplitude: need(self.amplitude, "amplitude")?,
            },
        })
    }

    pub fn to_bulk(&self, at: &str) -> Result<PeriodicBulkDensity> {
        if self.anisotropy.is_some() {
            return cfg_err(&format!("{at}/anisotropy"), "not a bulk parameter");
        }
        let coeff = self.coefficient(at)?;
        let p = self.p.unwrap_or(2.0);
        let made = match self.constants {
            Some([cu, cc, co]) => PeriodicBulkDensity::with_constants(coeff, p, cu, cc, co),
            None => PeriodicBulkDensity::new(coeff, p),
        };
        made.or_else(|e| cfg_err(at, e.to_string()))
    }

    pub fn to_surface(&self, at: &str) -> Result<PeriodicSurfaceDensity> {
        if self.p.is_some() || self.constants.is_some() {
            return cfg_err(at, "p and constants are bulk parameters");
        }
        let coeff = self.coefficient(at)?;
        PeriodicSurfaceDensity::new(coeff, self.anisotropy.unwrap_or(0.0)).or_else(|e| cfg_err(at, e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub bulk: DensityBlock,
    pub surface: DensityBlock,
}

/// Sweep lists; the run visits their Cartesian product.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    #[serde(rename = "A", skip_serializing_if = "Vec::is_empty")]
    pub a: Vec<Mat>,
    #[serde(rename = "B", skip_serializing_if = "Vec::is_empty")]
    pub b: Vec<Mat>,
    #[serde(rename = "G", skip_serializing_if = "Vec::is_empty")]
    pub g: Vec<Mat>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub nu: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub tau: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
}

fn default_k_list() -> Vec<usize> {
    vec![1]
}
fn default_m() -> usize {
    16
}
fn default_samples() -> usize {
    10_000
}
fn default_quadrature() -> usize {
    4
}
fn default_eps() -> EpsilonRule {
    EpsilonRule::Reciprocal
}
fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ProblemKind>,
    pub density: DensityConfig,
    #[serde(rename = "N", default = "one")]
    pub n_dim: usize,
    #[serde(default = "one")]
    pub d: usize,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub oracle: OracleBudget,
    #[serde(default = "default_eps")]
    pub epsilon: EpsilonRule,
    /// Quadrature points per period for sequence energies.
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
    /// Samples per check in the assumption validator.
    #[serde(default = "default_samples")]
    pub validation_samples: usize,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document; errors carry a JSON pointer.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config {
                pointer: to_pointer(&path),
                message: e.inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dims(&self) -> Result<Dims> {
        Dims::new(self.n_dim, self.d).or_else(|e| cfg_err("/N", e.to_string()))
    }

    pub fn bulk_density(&self) -> Result<PeriodicBulkDensity> {
        self.density.bulk.to_bulk("/density/bulk")
    }

    pub fn surface_density(&self) -> Result<PeriodicSurfaceDensity> {
        self.density.surface.to_surface("/density/surface")
    }

    pub fn validate(&self) -> Result<()> {
        self.dims()?;
        self.bulk_density()?;
        self.surface_density()?;
        let (n, d) = (self.n_dim, self.d);
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return cfg_err("/k_list", "k_list must be nonempty with positive entries");
        }
        if self.m == 0 {
            return cfg_err("/m", "m must be positive");
        }
        if self.quadrature == 0 {
            return cfg_err("/quadrature", "must be positive");
        }
        for (name, list) in [("A", &self.sweep.a), ("B", &self.sweep.b), ("G", &self.sweep.g)] {
            for (i, mat) in list.iter().enumerate() {
                if (mat.rows(), mat.cols()) != (d, n) {
                    return cfg_err(&format!("/sweep/{name}/{i}"), format!("expected a {d}x{n} matrix"));
                }
            }
        }
        for (i, l) in self.sweep.lambda.iter().enumerate() {
            if l.len() != d {
                return cfg_err(&format!("/sweep/lambda/{i}"), format!("expected {d} components"));
            }
        }
        for (name, list) in [("nu", &self.sweep.nu), ("tau", &self.sweep.tau)] {
            for (i, v) in list.iter().enumerate() {
                if v.len() != n {
                    return cfg_err(&format!("/sweep/{name}/{i}"), format!("expected {n} components"));
                }
            }
        }
        if self.sweep.n.contains(&0) {
            return cfg_err("/sweep/n", "entries must be positive");
        }
        self.epsilon.validate().or_else(|e| cfg_err("/epsilon", e.to_string()))?;
        self.oracle.validate().or_else(|e| cfg_err("/oracle", e.to_string()))?;
        Ok(())
    }

    /// Digest of the canonical serialization, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

fn to_pointer(path: &str) -> String {
    if path == "." {
        return String::new();
    }
    let mut out = String::new();
    for seg in path.split('.') {
        let mut rest = seg;
        if let Some(i) = rest.find('[') {
            out.push('/');
            out.push_str(&rest[..i]);
            rest = &rest[i..];
            while let Some(j) = rest.find(']') {
                out.push('/');
                out.push_str(&rest[1..j]);
                rest = &rest[j + 1..];
            }
        } else {
            out.push('/');
            out.push_str(rest);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "kind": "bulk",
        "density": {"bulk": {"family": "layered", "values": [1, 2], "p": 2},
                    "surface": {"family": "constant", "c": 1.5}},
        "sweep": {"A": [[[0]]], "B": [[[1]]]}
    }"#;

    #[test]
    fn parses_documented_block() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.kind, Some(ProblemKind::Bulk));
        assert_eq!(c.surface_density().unwrap().c_lower, 1.5);
        assert_eq!(c.bulk_density().unwrap().coefficient, CoefficientField::layered(&[1.0, 2.0]));
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_located() {
        let bad = MINIMAL.replace("\"p\": 2", "\"p\": 2, \"q\": 1");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/density/bulk/q"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("[[[1]]]", "[[[1]], [[1, 2]]]");
        match ExperimentConfig::from_json(&bad) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/sweep/B/1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_ignores_output_dir() {
        let mut c = ExperimentConfig::from_json(MINIMAL).unwrap();
        let h = c.hash();
        c.output_dir = Some("elsewhere".into());
        assert_eq!(c.hash(), h);
        c.seed = 3;
        assert_ne!(c.hash(), h);
        assert_eq!(h.len(), 16);
    }
}
