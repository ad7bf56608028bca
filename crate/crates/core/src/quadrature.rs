//! Quadrature rules on the unit parameter interval `[0, 1]`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::registry::{Named, Registry};

/// Nodes and weights on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

pub trait QuadratureRule: Named + Send + Sync {
    /// Rule with `n` nodes on `[0, 1]`.
    fn panel(&self, n: usize) -> Arc<Panel>;

    /// Whether the first and last nodes sit on the interval endpoints.
    fn includes_endpoints(&self) -> bool;
}

/// Composite trapezoid rule with `n >= 2` equispaced nodes including both ends.
pub struct Trapezoid;

impl Named for Trapezoid {
    fn name(&self) -> &'static str {
        "trapezoid"
    }
}

impl QuadratureRule for Trapezoid {
    fn panel(&self, n: usize) -> Arc<Panel> {
        let n = n.max(2);
        let h = 1.0 / (n - 1) as f64;
        let nodes = (0..n).map(|i| if i + 1 == n { 1.0 } else { i as f64 * h }).collect();
        let weights = (0..n)
            .map(|i| if i == 0 || i + 1 == n { 0.5 * h } else { h })
            .collect();
        Arc::new(Panel { nodes, weights })
    }

    fn includes_endpoints(&self) -> bool {
        true
    }
}

/// Gauss–Legendre rule; nodes by Newton iteration on `P_n`, cached per order.
pub struct GaussLegendre;

impl Named for GaussLegendre {
    fn name(&self) -> &'static str {
        "gauss-legendre"
    }
}

impl QuadratureRule for GaussLegendre {
    fn panel(&self, n: usize) -> Arc<Panel> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Panel>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(p) = cache.lock().unwrap().get(&n) {
            return p.clone();
        }
        let panel = Arc::new(gauss_legendre_unit(n.max(1)));
        cache.lock().unwrap().insert(n, panel.clone());
        panel
    }

    fn includes_endpoints(&self) -> bool {
        false
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn gauss_legendre_unit(n: usize) -> Panel {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess for the i-th largest root.
        let theta = PI * (i as f64 + 0.75) / (nf + 0.5);
        let mut x = (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf)) * theta.cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1e-300) {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    Panel { nodes, weights }
}

pub fn quadrature_rules() -> &'static Registry<dyn QuadratureRule> {
    static REG: OnceLock<Registry<dyn QuadratureRule>> = OnceLock::new();
    REG.get_or_init(|| {
        let mut reg: Registry<dyn QuadratureRule> = Registry::new("quadrature rule");
        reg.register(Box::new(GaussLegendre)).register(Box::new(Trapezoid));
        reg
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(panel: &Panel, f: impl Fn(f64) -> f64) -> f64 {
        panel.nodes.iter().zip(&panel.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [1, 2, 3, 8, 17, 64] {
            let panel = GaussLegendre.panel(n);
            assert!((panel.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let deg = 2 * n - 1;
            let got = integrate(&panel, |x| x.powi(deg as i32));
            assert!((got - 1.0 / (deg as f64 + 1.0)).abs() < 1e-13, "n={n}");
            assert!(panel.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn large_orders_stay_accurate() {
        let panel = GaussLegendre.panel(4096);
        assert!((panel.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let got = integrate(&panel, |x| (3.0 * x).exp());
        assert!((got - ((3.0f64).exp() - 1.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_converges_quadratically() {
        let exact = ((2.0f64).exp() - 1.0) / 2.0;
        let e1 = (integrate(&Trapezoid.panel(33), |x| (2.0 * x).exp()) - exact).abs();
        let e2 = (integrate(&Trapezoid.panel(65), |x| (2.0 * x).exp()) - exact).abs();
        assert!((e1 / e2 - 4.0).abs() < 0.05);
    }

    #[test]
    fn registry_lookup() {
        assert!(quadrature_rules().get("gauss-legendre").is_ok());
        assert!(quadrature_rules().get("simpson").is_err());
    }
}
