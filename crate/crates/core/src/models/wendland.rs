/// Wendland function `psi_{2,1}(r) = (1 - r)_+^4 (4r + 1)` with
/// `r = |point - center| / radius`.
pub fn wendland_2_1(radius: f64, center: [f64; 2], point: [f64; 2]) -> f64 {
    assert!(radius > 0.0, "Wendland radius must be positive");
    let r = ((point[0] - center[0]).powi(2) + (point[1] - center[1]).powi(2)).sqrt() / radius;
    if r >= 1.0 {
        0.0
    } else {
        (1.0 - r).powi(4) * (4.0 * r + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(wendland_2_1(0.4, [0.1, 0.2], [0.1, 0.2]), 1.0);
        assert_eq!(wendland_2_1(0.4, [0.0, 0.0], [0.4, 0.0]), 0.0);
        assert_eq!(wendland_2_1(0.4, [0.0, 0.0], [0.3, 0.3]), 0.0);
        // r = 1/2: (1/2)^4 * 3
        assert!((wendland_2_1(2.0, [0.0, 0.0], [0.0, 1.0]) - 3.0 / 16.0).abs() < 1e-15);
    }
}
