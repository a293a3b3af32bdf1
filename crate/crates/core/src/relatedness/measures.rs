use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Floor applied to the reference distribution of a divergence.
pub const KLD_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("not a probability vector: {0}")]
    NotADistribution(String),
}

/// A dense probability vector over the vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermDistribution(Vec<f64>);

impl TermDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, MeasureError> {
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(MeasureError::NotADistribution(format!("entry {bad}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MeasureError::NotADistribution(format!("sums to {sum}")));
        }
        Ok(TermDistribution(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for TermDistribution {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn same_len(p: &[f64], q: &[f64]) -> Result<(), MeasureError> {
    if p.len() == q.len() {
        Ok(())
    } else {
        Err(MeasureError::DimensionMismatch(p.len(), q.len()))
    }
}

/// BC(p, q) = sum_i sqrt(p_i q_i), clamped to [0, 1]. Exactly symmetric.
pub fn bhattacharyya_coefficient(p: &[f64], q: &[f64]) -> Result<f64, MeasureError> {
    same_len(p, q)?;
    let bc: f64 = p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum();
    Ok(bc.clamp(0.0, 1.0))
}

/// Bhattacharyya distance -ln BC; infinite for disjoint supports.
pub fn bhattacharyya_distance(p: &[f64], q: &[f64]) -> Result<f64, MeasureError> {
    Ok(-bhattacharyya_coefficient(p, q)?.ln())
}

/// KL(p || q) in nats. If any `q_i` lies below [`KLD_EPSILON`], `q` is
/// floored there and renormalized.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, MeasureError> {
    same_len(p, q)?;
    let q_sum: f64 = if q.iter().any(|&x| x < KLD_EPSILON) { q.iter().map(|&x| x.max(KLD_EPSILON)).sum() } else { 1.0 };
    let kld: f64 = p
        .iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / (b.max(KLD_EPSILON) / q_sum)).ln())
        .sum();
    Ok(kld.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bc_worked_values() {
        let p = [0.5, 0.5];
        assert_eq!(bhattacharyya_coefficient(&p, &p).unwrap(), 1.0);
        let bc = bhattacharyya_coefficient(&p, &[0.9, 0.1]).unwrap();
        assert!((bc - (0.45f64.sqrt() + 0.05f64.sqrt())).abs() < 1e-12);
        assert!((bc - 0.89443).abs() < 1e-5);
        assert_eq!(bhattacharyya_coefficient(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(bhattacharyya_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn kld_worked_values() {
        let a = [0.5, 0.5];
        let b = [0.9, 0.1];
        assert_eq!(kl_divergence(&a, &a).unwrap(), 0.0);
        let ab = kl_divergence(&a, &b).unwrap();
        let ba = kl_divergence(&b, &a).unwrap();
        assert!((ab - 0.51083).abs() < 1e-5, "{ab}");
        assert!((ba - 0.36806).abs() < 1e-5, "{ba}");
        assert!((ab - (0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln())).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        assert_eq!(bhattacharyya_coefficient(&[1.0], &[0.5, 0.5]), Err(MeasureError::DimensionMismatch(1, 2)));
        assert_eq!(kl_divergence(&[1.0], &[0.5, 0.5]), Err(MeasureError::DimensionMismatch(1, 2)));
    }

    #[test]
    fn zero_reference_is_clamped() {
        let d = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!(d.is_finite() && d > 10.0);
    }

    #[test]
    fn term_distribution_validation() {
        assert!(TermDistribution::new(vec![0.25, 0.75]).is_ok());
        assert!(TermDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(TermDistribution::new(vec![-0.5, 1.5]).is_err());
    }

    fn simplex(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1e-6f64..1.0, dim).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn bc_bounds_and_symmetry(p in simplex(12), q in simplex(12)) {
            let pq = bhattacharyya_coefficient(&p, &q).unwrap();
            prop_assert_eq!(pq, bhattacharyya_coefficient(&q, &p).unwrap());
            prop_assert!((0.0..=1.0).contains(&pq));
            let d = bhattacharyya_distance(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
        }

        #[test]
        fn gibbs_inequality(p in simplex(12), q in simplex(12)) {
            prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
            prop_assert!(kl_divergence(&p, &p).unwrap() < 1e-9);
        }
    }
}
