use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for accuracies assembled from measured rates.
const RANGE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Advantage {
    pub a: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub advantage: bool,
    /// Flat-network accuracy `a`.
    pub lhs: f64,
    /// Cascade accuracy `(a + delta1) * (a + delta2)`.
    pub rhs: f64,
}

/// Whether a two-stage cascade beats a flat network of accuracy `a`, given
/// stage accuracies `a + delta1` and `a + delta2`.
pub fn modular_advantage(a: f64, delta1: f64, delta2: f64) -> Result<Advantage> {
    let in_unit = |v: f64| v.is_finite() && (-RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&v);
    if !in_unit(a) || !in_unit(a + delta1) || !in_unit(a + delta2) {
        return Err(Error::Range(format!(
            "accuracies a={a}, a+delta1={}, a+delta2={} must lie in [0, 1]",
            a + delta1,
            a + delta2
        )));
    }
    let rhs = (a + delta1) * (a + delta2);
    Ok(Advantage {
        a,
        delta1,
        delta2,
        advantage: a < rhs,
        lhs: a,
        rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_improvement_is_never_an_advantage() {
        for a in [0.1, 0.5, 0.88, 0.999, 1.0] {
            let r = modular_advantage(a, 0.0, 0.0).unwrap();
            assert!(!r.advantage, "a = {a}");
            assert_eq!(r.rhs, a * a);
        }
    }

    #[test]
    fn equal_deltas_match_the_square() {
        for (a, d) in [(0.5, 0.2), (0.88, 0.05), (0.3, 0.0), (0.7, -0.1)] {
            let r = modular_advantage(a, d, d).unwrap();
            let square = (a + d) * (a + d);
            assert_eq!(r.rhs, square);
            assert_eq!(r.advantage, a < square);
        }
    }

    #[test]
    fn range_errors() {
        assert!(modular_advantage(1.2, 0.0, 0.0).is_err());
        assert!(modular_advantage(0.9, 0.2, 0.0).is_err());
        assert!(modular_advantage(0.1, 0.0, -0.2).is_err());
        assert!(modular_advantage(f64::NAN, 0.0, 0.0).is_err());
    }
}
