//! Fixed-order quadrature rules.

use std::f64::consts::PI;

/// Nodes and weights of an interpolatory quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Gauss-Legendre rule with `n` nodes on `[a, b]`.
///
/// Roots of P_n are found by Newton iteration from the Chebyshev-like
/// initial guess; weights are 2 / ((1 - x²) P_n'(x)²).
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Rule {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = (b - a) / 2.0;
    let mid = (b + a) / 2.0;
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = mid - half * x;
        nodes[n - 1 - i] = mid + half * x;
        weights[i] = half * w;
        weights[n - 1 - i] = half * w;
    }
    Rule { nodes, weights }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Chebyshev-Gauss rule (first kind) mapped to `[0, 1]`, i.e. for integrals
/// ∫₀¹ g(u) · u^{-1/2} (1-u)^{-1/2} du. The weight function is absorbed in
/// the rule; all weights equal π/n.
pub fn chebyshev_gauss_unit(n: usize) -> Rule {
    assert!(n >= 1, "need at least one node");
    let w = PI / n as f64;
    let nodes = (1..=n)
        .map(|i| {
            let theta = (2 * i - 1) as f64 * PI / (2 * n) as f64;
            // (1 + cos θ)/2 written as cos²(θ/2) to keep precision near u = 0
            (theta / 2.0).cos().powi(2)
        })
        .collect();
    Rule {
        nodes,
        weights: vec![w; n],
    }
}
