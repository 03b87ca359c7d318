use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Gauss–Legendre degree used on every panel.
pub const PANEL_DEGREE: usize = 16;

/// Composite Gauss–Legendre rule on `[lo, hi]` with at least `min_nodes`
/// nodes. `breaks` inside the interval become panel boundaries, so
/// integrands with kinks or jumps there are integrated panel-wise smooth.
///
/// Returns `(node, weight)` pairs with weights summing to `hi − lo`.
pub fn composite_gauss_legendre(lo: f64, hi: f64, min_nodes: usize, breaks: &[f64]) -> Vec<(f64, f64)> {
    assert!(hi > lo, "empty interval");
    let mut cuts = vec![lo];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
    inner.sort_by(f64::total_cmp);
    cuts.extend(inner);
    cuts.push(hi);

    let panels_total = min_nodes.div_ceil(PANEL_DEGREE).max(cuts.len() - 1);
    let rule = GaussLegendre::new(NonZeroUsize::new(PANEL_DEGREE).expect("nonzero degree"));
    let pairs = rule.as_node_weight_pairs();

    let mut out = Vec::with_capacity(panels_total * PANEL_DEGREE + PANEL_DEGREE);
    let width = hi - lo;
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let panels = ((panels_total as f64) * (b - a) / width).ceil().max(1.0) as usize;
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let pa = a + p as f64 * h;
            let pb = if p + 1 == panels { b } else { pa + h };
            let (mid, half) = (0.5 * (pa + pb), 0.5 * (pb - pa));
            for &(x, w) in pairs {
                out.push((mid + half * x, half * w));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(rule: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
        rule.iter().map(|&(x, w)| w * f(x)).sum()
    }

    #[test]
    fn node_count_and_weights() {
        let rule = composite_gauss_legendre(-1.0, 1.0, 512, &[0.0]);
        assert!(rule.len() >= 512);
        let total: f64 = rule.iter().map(|p| p.1).sum();
        assert!((total - 2.0).abs() < 1e-13);
        assert!(rule.iter().all(|p| p.0 > -1.0 && p.0 < 1.0));
    }

    #[test]
    fn integrates_smooth_and_piecewise_functions() {
        let rule = composite_gauss_legendre(-1.0, 1.0, 512, &[0.0]);
        assert!((integrate(&rule, f64::exp) - (1f64.exp() - (-1f64).exp())).abs() < 1e-13);
        assert!((integrate(&rule, f64::abs) - 1.0).abs() < 1e-14);
        let step = |x: f64| if x > 0.0 { 0.7 } else { 0.3 };
        assert!((integrate(&rule, step) - 1.0).abs() < 1e-14);
        let rule = composite_gauss_legendre(0.0, 1.0, 100, &[]);
        assert!((integrate(&rule, |x| x.powi(9)) - 0.1).abs() < 1e-15);
    }
}
