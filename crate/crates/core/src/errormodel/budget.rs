use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network capacity parameters. `sup_k`, the most features the network can
/// separate without extra error, is supplied rather than derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    /// Parameter count.
    pub r: f64,
    pub a_filters: f64,
    /// Filter size.
    pub d: f64,
    /// Filter channels.
    pub h: f64,
    /// Layer count.
    pub q: f64,
    #[serde(rename = "supK")]
    pub sup_k: f64,
}

impl CapacityParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.r, self.a_filters, self.d, self.h, self.q, self.sup_k];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidModel(format!("capacity parameters must be positive: {all:?}")))
        }
    }
}

/// Feature counts of a network: single-class features from transfer learning
/// (`L`) and fine tuning (`T`), shared features (`U`), and `n` designated classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureBudget {
    #[serde(rename = "L")]
    pub transfer: u64,
    #[serde(rename = "T")]
    pub fine_tuned: u64,
    #[serde(rename = "U")]
    pub shared: u64,
    pub n: u64,
}

impl FeatureBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidModel("budget needs n >= 1".into()));
        }
        Ok(())
    }

    /// `N = L + T + U`.
    pub fn total(&self) -> u64 {
        self.transfer + self.fine_tuned + self.shared
    }

    pub fn with_classes(self, n: u64) -> Self {
        FeatureBudget { n, ..self }
    }
}

/// Approximate number of features available to each designated class:
/// `(L + T) / n + U`.
pub fn feature_count(budget: &FeatureBudget) -> Result<f64> {
    budget.validate()?;
    Ok((budget.transfer + budget.fine_tuned) as f64 / budget.n as f64 + budget.shared as f64)
}

/// Whether the budget's total feature count exceeds the supplied capacity bound.
pub fn over_capacity(budget: &FeatureBudget, capacity: &CapacityParams) -> bool {
    budget.total() as f64 > capacity.sup_k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(n: u64) -> FeatureBudget {
        FeatureBudget {
            transfer: 80,
            fine_tuned: 20,
            shared: 5,
            n,
        }
    }

    #[test]
    fn fixtures() {
        assert_eq!(feature_count(&budget(10)).unwrap(), 15.0);
        assert_eq!(feature_count(&budget(2)).unwrap(), 55.0);
        assert_eq!(feature_count(&budget(1)).unwrap(), budget(1).total() as f64);
        assert!(feature_count(&budget(0)).is_err());
    }

    #[test]
    fn strictly_decreasing_in_n() {
        let mut prev = f64::INFINITY;
        for n in 1..50 {
            let s = feature_count(&budget(n)).unwrap();
            assert!(s < prev);
            prev = s;
        }
    }

    #[test]
    fn capacity_flag() {
        let cap = CapacityParams {
            r: 1.0e8,
            a_filters: 512.0,
            d: 3.0,
            h: 256.0,
            q: 16.0,
            sup_k: 100.0,
        };
        cap.validate().unwrap();
        assert!(over_capacity(&budget(2), &cap));
        let roomy = CapacityParams { sup_k: 105.0, ..cap };
        assert!(!over_capacity(&budget(2), &roomy));
        assert!(CapacityParams { q: 0.0, ..cap }.validate().is_err());
    }
}
