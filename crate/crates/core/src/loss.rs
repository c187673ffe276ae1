use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-quadratic loss on the residual `X - <theta, A>`, described by
/// its curvature on each side of zero.
///
/// The weight fed into the weighted least-squares update is the curvature
/// `f''` at the residual, so the configuration stores `f''` values directly
/// rather than the quadratic coefficients (which differ by a factor of two).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexLoss {
    /// Curvature for residual >= 0 (the estimate undershoots the reward).
    pub curvature_under: f64,
    /// Curvature for residual < 0 (the estimate overshoots the reward).
    pub curvature_over: f64,
}

impl Default for ConvexLoss {
    fn default() -> Self {
        Self {
            curvature_under: 1.0,
            curvature_over: 0.75,
        }
    }
}

impl ConvexLoss {
    pub fn new(curvature_under: f64, curvature_over: f64) -> Result<Self> {
        let loss = Self {
            curvature_under,
            curvature_over,
        };
        loss.validate()?;
        Ok(loss)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("under", self.curvature_under), ("over", self.curvature_over)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Config(format!(
                    "loss curvature ({name}) must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Smoothness bound `mu`.
    pub fn mu(&self) -> f64 {
        self.curvature_under.max(self.curvature_over)
    }

    /// Strong-convexity bound `eps`.
    pub fn eps(&self) -> f64 {
        self.curvature_under.min(self.curvature_over)
    }

    /// Sample weight for a residual. Zero counts as undershooting.
    pub fn weight(&self, residual: f64) -> f64 {
        if residual >= 0.0 {
            self.curvature_under
        } else {
            self.curvature_over
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_by_residual_sign() {
        let loss = ConvexLoss::new(1.0, 0.75).unwrap();
        assert_eq!(loss.weight(0.5), 1.0);
        assert_eq!(loss.weight(-0.5), 0.75);
        assert_eq!(loss.weight(0.0), 1.0);
        assert_eq!(loss.mu(), 1.0);
        assert_eq!(loss.eps(), 0.75);
    }

    #[test]
    fn symmetric_loss_ignores_sign() {
        let loss = ConvexLoss::new(0.5, 0.5).unwrap();
        assert_eq!(loss.weight(3.0), loss.weight(-3.0));
    }

    #[test]
    fn rejects_non_positive() {
        assert!(ConvexLoss::new(0.0, 1.0).is_err());
        assert!(ConvexLoss::new(1.0, f64::NAN).is_err());
    }
}
