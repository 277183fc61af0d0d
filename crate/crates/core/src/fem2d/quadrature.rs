//! Gauss–Legendre rules on the reference interval [-1, 1].

/// One-dimensional Gauss–Legendre rule.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Rule with `n` points, exact for polynomials of degree `2n - 1`.
    ///
    /// Supported for `1 <= n <= 5`.
    pub fn new(n: usize) -> Self {
        let (points, weights): (Vec<f64>, Vec<f64>) = match n {
            1 => (vec![0.0], vec![2.0]),
            2 => {
                let p = 1.0 / 3f64.sqrt();
                (vec![-p, p], vec![1.0, 1.0])
            }
            3 => {
                let p = (3.0f64 / 5.0).sqrt();
                (vec![-p, 0.0, p], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
            }
            4 => {
                let a = (3.0 / 7.0 - 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
                let b = (3.0 / 7.0 + 2.0 / 7.0 * (6.0f64 / 5.0).sqrt()).sqrt();
                let wa = (18.0 + 30f64.sqrt()) / 36.0;
                let wb = (18.0 - 30f64.sqrt()) / 36.0;
                (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
            }
            5 => {
                let a = 1.0 / 3.0 * (5.0 - 2.0 * (10.0f64 / 7.0).sqrt()).sqrt();
                let b = 1.0 / 3.0 * (5.0 + 2.0 * (10.0f64 / 7.0).sqrt()).sqrt();
                let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
                let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
                (vec![-b, -a, 0.0, a, b], vec![wb, wa, 128.0 / 225.0, wa, wb])
            }
            _ => panic!("Gauss-Legendre rule with {n} points is not tabulated"),
        };
        Self { points, weights }
    }

    /// Smallest rule exact for polynomials of degree `order`.
    pub fn with_order(order: usize) -> Self {
        Self::new(order / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_monomials_exactly() {
        for n in 1..=5 {
            let rule = GaussLegendre::new(n);
            for k in 0..2 * n {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(k as i32))
                    .sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((approx - exact).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn order_selection() {
        assert_eq!(GaussLegendre::with_order(3).len(), 2);
        assert_eq!(GaussLegendre::with_order(5).len(), 3);
    }
}
