/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Pairwise ranking loss `-ln sigmoid(y_pos - y_neg)`.
pub fn bpr_loss(y_pos: f64, y_neg: f64) -> f64 {
    softplus(-(y_pos - y_neg))
}

/// Derivative of [`bpr_loss`] with respect to the margin `y_pos - y_neg`.
pub fn bpr_slope(margin: f64) -> f64 {
    -sigmoid(-margin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((bpr_loss(0.3, 0.3) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bpr_loss(40.0, 0.0) < 1e-15);
        assert!(bpr_loss(40.0, 0.0) > 0.0);
        // margin -1: ln(1 + e)
        assert!((bpr_loss(0.0, 1.0) - 1.0f64.exp().ln_1p()).abs() < 1e-15);
        assert!((bpr_loss(0.0, 1.0) - 1.3133).abs() < 5e-5);
        assert!(bpr_loss(-800.0, 0.0).is_finite());
    }

    #[test]
    fn strictly_decreasing_in_margin() {
        let mut prev = f64::INFINITY;
        for k in -50..=30 {
            let l = bpr_loss(k as f64 * 0.5, 0.0);
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        for &m in &[-3.0, -0.2, 0.0, 0.7, 5.0] {
            let h = 1e-6;
            let fd = (bpr_loss(m + h, 0.0) - bpr_loss(m - h, 0.0)) / (2.0 * h);
            assert!((fd - bpr_slope(m)).abs() < 1e-8);
        }
    }
}
