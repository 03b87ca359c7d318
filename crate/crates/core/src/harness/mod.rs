//! Regime schedules, bound terms, experiments and sweeps.

pub mod bounds;
pub mod experiment;
pub mod frozen_norm;
pub mod regime;
pub mod sweep;

/// `⌈x⌉` that ignores relative floating-point noise of order `1e-9`.
pub fn ceil_tol(x: f64) -> f64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceil_tol_absorbs_noise() {
        assert_eq!(ceil_tol(10.000000000002), 10.0);
        assert_eq!(ceil_tol(10.5), 11.0);
        assert_eq!(ceil_tol(1.0 / (8.0 * (1.0 / 80.0))), 10.0);
        assert_eq!(ceil_tol(0.2), 1.0);
    }
}
