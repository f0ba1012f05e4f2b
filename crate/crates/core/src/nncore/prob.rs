use serde::{Deserialize, Serialize};

use super::NnError;

/// Probability vector over the task classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbDist(Vec<f64>);

const SUM_TOLERANCE: f64 = 1e-6;

impl ProbDist {
    pub fn new(p: Vec<f64>) -> Result<Self, NnError> {
        if p.is_empty() {
            return Err(NnError::NotProbDist("empty".into()));
        }
        if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(NnError::NotProbDist(format!("{p:?}")));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > SUM_TOLERANCE {
            return Err(NnError::NotProbDist(format!("sums to {s}")));
        }
        Ok(Self(p))
    }

    pub fn one_hot(k: usize, class: usize) -> Self {
        let mut p = vec![0.0; k];
        p[class] = 1.0;
        Self(p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `softmax(logits / t)`, stabilized by subtracting the max.
pub fn softmax_with_temperature(logits: &[f64], t: f64) -> Result<ProbDist, NnError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(NnError::Domain(format!("temperature must be > 0, got {t}")));
    }
    if logits.is_empty() || logits.iter().any(|z| !z.is_finite()) {
        return Err(NnError::Domain(format!("logits must be finite: {logits:?}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| ((z - max) / t).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(ProbDist(exps.into_iter().map(|e| e / total).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_logits_give_uniform() {
        for t in [1e-3, 0.1, 1.0, 50.0] {
            let p = softmax_with_temperature(&[0.7, 0.7, 0.7], t).unwrap();
            for &x in p.as_slice() {
                assert!((x - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn two_logits_unit_temperature() {
        // e^2 / (e^2 + 1), evaluated independently.
        let p = softmax_with_temperature(&[2.0, 0.0], 1.0).unwrap();
        assert!((p.as_slice()[0] - 0.8808).abs() < 1e-4);
        assert!((p.as_slice()[1] - 0.1192).abs() < 1e-4);
    }

    #[test]
    fn sharp_temperature_saturates() {
        // 1 / (1 + e^-20) = 1 - 2.06e-9
        let p = softmax_with_temperature(&[2.0, 0.0], 0.1).unwrap();
        assert!(p.as_slice()[0] >= 1.0 - 1e-8);
    }

    #[test]
    fn hot_distance_from_uniform_follows_logit_gap() {
        // Two classes: p0 - 1/2 = sigmoid(gap / T) - 1/2 = tanh(gap / 2T) / 2.
        for gap in [0.5, 3.0, 3.9, 5.3, 12.0] {
            let p = softmax_with_temperature(&[gap, 0.0], 1e3).unwrap();
            let expected = (gap / 2e3).tanh() / 2.0;
            assert!((p.as_slice()[0] - 0.5 - expected).abs() < 1e-15);
            assert_eq!(expected < 1e-3, gap < 4.0);
        }
    }

    #[test]
    fn non_positive_temperature_is_domain_error() {
        assert!(matches!(softmax_with_temperature(&[1.0, 2.0], 0.0), Err(NnError::Domain(_))));
        assert!(matches!(softmax_with_temperature(&[1.0, 2.0], -1.0), Err(NnError::Domain(_))));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(ProbDist::new(vec![0.4, 0.4, 0.2]).unwrap().argmax(), 0);
        assert_eq!(ProbDist::new(vec![0.2, 0.4, 0.4]).unwrap().argmax(), 1);
    }

    #[test]
    fn rejects_non_distributions() {
        assert!(ProbDist::new(vec![0.5, 0.6]).is_err());
        assert!(ProbDist::new(vec![1.2, -0.2]).is_err());
    }

    proptest! {
        #[test]
        fn always_a_valid_distribution(
            z in prop::collection::vec(-1e3f64..1e3, 2..6),
            log_t in -6.0f64..6.0,
        ) {
            let p = softmax_with_temperature(&z, 10f64.powf(log_t)).unwrap();
            prop_assert!(ProbDist::new(p.as_slice().to_vec()).is_ok());
        }

        #[test]
        fn shift_invariant(
            z in prop::collection::vec(-50f64..50.0, 2..6),
            c in -100f64..100.0,
            t in 0.05f64..20.0,
        ) {
            let a = softmax_with_temperature(&z, t).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
            let b = softmax_with_temperature(&shifted, t).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
