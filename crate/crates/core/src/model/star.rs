//! Rounding and transformation operators linking a latent continuous
//! process to count-valued observations.

use crate::error::{Error, Result};

/// Floor for positive arguments, zero at or below zero.
pub fn star_round(t: f64) -> u64 {
    if t > 0.0 {
        t.floor() as u64
    } else {
        0
    }
}

/// Square-root member of the Box-Cox family: `2 (sqrt(t) - 1)`.
pub fn star_transform(t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid(format!("transform requires a finite t >= 0, got {t}")));
    }
    Ok(2.0 * (t.sqrt() - 1.0))
}

/// Inverse of [`star_transform`], defined for `u >= -2`.
pub fn star_transform_inv(u: f64) -> Result<f64> {
    if !(u >= -2.0) || !u.is_finite() {
        return Err(Error::invalid(format!("inverse transform requires a finite u >= -2, got {u}")));
    }
    let r = u / 2.0 + 1.0;
    Ok(r * r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_rule() {
        assert_eq!(star_round(1.7), 1);
        assert_eq!(star_round(-0.3), 0);
        assert_eq!(star_round(0.0), 0);
        assert_eq!(star_round(3.0), 3);
    }

    #[test]
    fn transform_values() {
        assert_eq!(star_transform(1.0).unwrap(), 0.0);
        assert_eq!(star_transform(4.0).unwrap(), 2.0);
        assert_eq!(star_transform(0.0).unwrap(), -2.0);
        assert!(star_transform(-1e-9).is_err());
        assert!(star_transform_inv(-2.5).is_err());
    }

    #[test]
    fn round_trip_on_grid() {
        for k in 0..1000 {
            let t = 1e6 * k as f64 / 999.0;
            let back = star_transform_inv(star_transform(t).unwrap()).unwrap();
            assert!((back - t).abs() <= 1e-9 * t.max(1.0), "t={t} back={back}");
        }
    }
}
