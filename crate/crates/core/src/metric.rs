//! Ground metrics on label vectors.
//!
//! The label space is `R^d` with a choice of norm. L1 is the default
//! throughout the crate: the induced operator norm of an affine layer is
//! then a max column sum, which keeps the GNN Lipschitz audit exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("label dimension must be at least 1")]
    ZeroDimension,
    #[error("label dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Which norm of `R^d` to use as the label ground metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    L1,
    L2,
    LInf,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::L1 => "L1",
            MetricKind::L2 => "L2",
            MetricKind::LInf => "LInf",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(MetricKind::L1),
            "l2" => Ok(MetricKind::L2),
            "linf" | "loo" | "linfty" => Ok(MetricKind::LInf),
            other => Err(format!("unknown metric kind '{other}' (expected L1, L2 or LInf)")),
        }
    }
}

/// A norm metric on label vectors of a fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMetric {
    kind: MetricKind,
    dim: usize,
}

impl LabelMetric {
    pub fn new(kind: MetricKind, dim: usize) -> Result<Self, MetricError> {
        if dim == 0 {
            return Err(MetricError::ZeroDimension);
        }
        Ok(Self { kind, dim })
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Distance between two label vectors under the configured norm.
    pub fn distance(&self, z1: &[f64], z2: &[f64]) -> Result<f64, MetricError> {
        if z1.len() != self.dim {
            return Err(MetricError::DimensionMismatch { expected: self.dim, got: z1.len() });
        }
        if z2.len() != self.dim {
            return Err(MetricError::DimensionMismatch { expected: self.dim, got: z2.len() });
        }
        let diffs = z1.iter().zip(z2).map(|(a, b)| (a - b).abs());
        Ok(match self.kind {
            MetricKind::L1 => diffs.sum(),
            MetricKind::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            MetricKind::LInf => diffs.fold(0.0, f64::max),
        })
    }

    /// Norm of a single vector (distance to the origin).
    pub fn norm(&self, z: &[f64]) -> Result<f64, MetricError> {
        let zeros = vec![0.0; self.dim];
        self.distance(z, &zeros)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn l1_one_dimensional() {
        let m = LabelMetric::new(MetricKind::L1, 1).unwrap();
        assert_eq!(m.distance(&[0.0], &[3.0]).unwrap(), 3.0);
    }

    #[test]
    fn l2_pythagorean() {
        let m = LabelMetric::new(MetricKind::L2, 2).unwrap();
        assert_eq!(m.distance(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn identity_case_is_zero() {
        for kind in [MetricKind::L1, MetricKind::L2, MetricKind::LInf] {
            let m = LabelMetric::new(kind, 3).unwrap();
            let z = [0.5, -1.25, 7.0];
            assert_eq!(m.distance(&z, &z).unwrap(), 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = LabelMetric::new(MetricKind::L1, 2).unwrap();
        assert_eq!(
            m.distance(&[0.0], &[1.0, 2.0]).unwrap_err(),
            MetricError::DimensionMismatch { expected: 2, got: 1 }
        );
    }

    #[test]
    fn zero_dimension_rejected() {
        assert_eq!(LabelMetric::new(MetricKind::L1, 0).unwrap_err(), MetricError::ZeroDimension);
    }

    proptest! {
        // Metric axioms on random triples, all three kinds.
        #[test]
        fn metric_axioms(
            a in proptest::collection::vec(-1e3..1e3f64, 3),
            b in proptest::collection::vec(-1e3..1e3f64, 3),
            c in proptest::collection::vec(-1e3..1e3f64, 3),
            kind in prop_oneof![Just(MetricKind::L1), Just(MetricKind::L2), Just(MetricKind::LInf)],
        ) {
            let m = LabelMetric::new(kind, 3).unwrap();
            let dab = m.distance(&a, &b).unwrap();
            let dba = m.distance(&b, &a).unwrap();
            let dac = m.distance(&a, &c).unwrap();
            let dcb = m.distance(&c, &b).unwrap();
            prop_assert!(dab >= 0.0);
            prop_assert_eq!(dab, dba);
            // Triangle inequality up to float rounding in the sums.
            prop_assert!(dab <= dac + dcb + 1e-9 * (1.0 + dac + dcb));
        }
    }
}
