use nalgebra::DVector;

use crate::data::CoefficientVector;
use crate::error::{GrilError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightScheme {
    /// `(|b_j| + 1/n)^-gamma`
    PowerLaw,
    /// `max(1/|b_j|, 1)`; a zero initial coefficient gets an infinite weight.
    CappedInverse,
    Unit,
}

impl std::str::FromStr for WeightScheme {
    type Err = GrilError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "powerlaw" | "power" | "power-law" => Ok(Self::PowerLaw),
            "capped" | "cappedinverse" | "capped-inverse" => Ok(Self::CappedInverse),
            "unit" => Ok(Self::Unit),
            other => Err(GrilError::Parse(format!("unknown weight scheme {other:?}"))),
        }
    }
}

/// Per-coefficient l1 weights. `f64::INFINITY` marks a coefficient forced to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: DVector<f64>,
    gamma: f64,
    scheme: WeightScheme,
}

impl WeightVector {
    pub fn unit(p: usize) -> Self {
        Self {
            w: DVector::from_element(p, 1.0),
            gamma: 0.0,
            scheme: WeightScheme::Unit,
        }
    }

    /// Wraps explicit weights; each must be positive (finite or `+inf`).
    pub fn from_values(w: DVector<f64>, gamma: f64, scheme: WeightScheme) -> Result<Self> {
        if let Some(bad) = w.iter().find(|v| !(**v > 0.0) || v.is_nan()) {
            return Err(GrilError::InvalidParameter(format!("weight {bad} is not positive")));
        }
        Ok(Self { w, gamma, scheme })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn is_excluded(&self, j: usize) -> bool {
        self.w[j].is_infinite()
    }

    pub fn all_excluded(&self) -> bool {
        self.w.iter().all(|v| v.is_infinite())
    }

    pub fn sum_squares(&self) -> f64 {
        self.w.iter().map(|v| v * v).sum()
    }
}

/// Adaptive weights from an initial estimate.
pub fn make_weights(
    initial: &CoefficientVector,
    gamma: f64,
    scheme: WeightScheme,
    n_obs: usize,
) -> Result<WeightVector> {
    let b = initial.beta();
    let w = match scheme {
        WeightScheme::Unit => DVector::from_element(b.len(), 1.0),
        WeightScheme::PowerLaw => {
            if !(gamma >= 0.0) || !gamma.is_finite() {
                return Err(GrilError::InvalidParameter(format!(
                    "gamma must be nonnegative, got {gamma}"
                )));
            }
            let eps = 1.0 / n_obs as f64;
            b.map(|v| (v.abs() + eps).powf(-gamma))
        }
        WeightScheme::CappedInverse => b.map(|v| {
            if v == 0.0 {
                f64::INFINITY
            } else {
                (1.0 / v.abs()).max(1.0)
            }
        }),
    };
    let gamma = if scheme == WeightScheme::PowerLaw { gamma } else { 0.0 };
    WeightVector::from_values(w, gamma, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_direct_formula() {
        let init = CoefficientVector::new(DVector::from_vec(vec![2.0, 0.5]));
        let w = make_weights(&init, 1.0, WeightScheme::PowerLaw, 100).unwrap();
        assert!((w.values()[0] - 1.0 / 2.01).abs() < 1e-15);
        assert!((w.values()[1] - 1.0 / 0.51).abs() < 1e-15);
    }

    #[test]
    fn power_law_unit_coefficients() {
        let init = CoefficientVector::new(DVector::from_vec(vec![1.0, -1.0, 1.0]));
        let w = make_weights(&init, 3.0, WeightScheme::PowerLaw, 1000).unwrap();
        for v in w.values().iter() {
            assert!((v - 1.001f64.powi(-3)).abs() < 1e-15);
            assert!((v - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn capped_inverse_zero_is_excluded() {
        let init = CoefficientVector::new(DVector::from_vec(vec![0.0, 0.25, 4.0, -2.0]));
        let w = make_weights(&init, 0.0, WeightScheme::CappedInverse, 10).unwrap();
        assert!(w.is_excluded(0));
        assert_eq!(w.values()[1], 4.0);
        assert_eq!(w.values()[2], 1.0);
        assert_eq!(w.values()[3], 1.0);
    }

    #[test]
    fn unit_scheme_and_validation() {
        let init = CoefficientVector::new(DVector::from_vec(vec![0.0, 3.0]));
        let w = make_weights(&init, 5.0, WeightScheme::Unit, 10).unwrap();
        assert!(w.values().iter().all(|v| *v == 1.0));
        assert!(make_weights(&init, -1.0, WeightScheme::PowerLaw, 10).is_err());
        assert!(WeightVector::from_values(DVector::from_vec(vec![1.0, 0.0]), 0.0, WeightScheme::Unit).is_err());
    }
}
