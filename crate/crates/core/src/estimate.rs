use serde::{Deserialize, Serialize};

/// One point of a per-k curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRecord {
    pub k: usize,
    pub value: f64,
    pub converged: bool,
}

/// Result of an outer infimum over cube multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// Minimum over the per-k values.
    pub value: f64,
    pub argmin_k: usize,
    pub per_k: Vec<KRecord>,
    /// Running minimum of the per-k curve.
    pub envelope: Vec<f64>,
    /// Indices `i` where `per_k[i].value` exceeds the envelope at `i - 1`.
    pub envelope_excursions: Vec<usize>,
    pub all_converged: bool,
}

impl DensityEstimate {
    pub fn from_records(per_k: Vec<KRecord>) -> Self {
        let mut envelope = Vec::with_capacity(per_k.len());
        let mut excursions = Vec::new();
        let mut best = f64::INFINITY;
        let mut argmin_k = per_k.first().map(|r| r.k).unwrap_or(0);
        for (i, r) in per_k.iter().enumerate() {
            if i > 0 && r.value > best {
                excursions.push(i);
            }
            if r.value < best {
                best = r.value;
                argmin_k = r.k;
            }
            envelope.push(best);
        }
        DensityEstimate {
            value: best,
            argmin_k,
            all_converged: per_k.iter().all(|r| r.converged),
            per_k,
            envelope,
            envelope_excursions: excursions,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.per_k.iter().map(|r| r.value).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_and_argmin() {
        let recs = [(1, 3.0), (2, 2.0), (4, 2.5), (8, 1.0)]
            .iter()
            .map(|&(k, v)| KRecord { k, value: v, converged: true })
            .collect();
        let e = DensityEstimate::from_records(recs);
        assert_eq!(e.value, 1.0);
        assert_eq!(e.argmin_k, 8);
        assert_eq!(e.envelope, vec![3.0, 2.0, 2.0, 1.0]);
        assert_eq!(e.envelope_excursions, vec![2]);
    }
}
