//! Gauss–Legendre panel quadrature with adaptive bisection.

use rayon::prelude::*;

use crate::error::Result;

/// Nodes and weights of the `n`-point rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (mid + half * x, half * w))
            .collect()
    }

    /// One panel; node values are computed in parallel and summed in node order.
    pub fn panel<F>(&self, f: &F, a: f64, b: f64) -> Result<f64>
    where
        F: Fn(f64) -> Result<f64> + Sync,
    {
        let pts = self.mapped(a, b);
        let values: Vec<f64> = pts.par_iter().map(|&(x, _)| f(x)).collect::<Result<_>>()?;
        Ok(values.iter().zip(&pts).map(|(v, (_, w))| v * w).sum())
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of the panel-halving differences of accepted panels.
    pub error_estimate: f64,
    pub panels: usize,
}

/// Adaptive integration of a function that is smooth on each `[breaks[i], breaks[i+1]]`.
///
/// A panel is accepted when it agrees with the sum over its two halves to within its
/// share of `tol`, or when `max_depth` bisections have been made.
pub fn integrate_piecewise<F>(
    rule: &GaussLegendre,
    f: &F,
    breaks: &[f64],
    tol: f64,
    max_depth: usize,
) -> Result<Quadrature>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let mut out = Quadrature {
        value: 0.0,
        error_estimate: 0.0,
        panels: 0,
    };
    let total: f64 = breaks.windows(2).map(|w| w[1] - w[0]).sum();
    if !(total > 0.0) {
        return Ok(out);
    }
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let whole = rule.panel(f, a, b)?;
        let share = tol * (b - a) / total;
        adapt(rule, f, a, b, whole, share, max_depth, &mut out)?;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn adapt<F>(
    rule: &GaussLegendre,
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    out: &mut Quadrature,
) -> Result<()>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let mid = 0.5 * (a + b);
    let left = rule.panel(f, a, mid)?;
    let right = rule.panel(f, mid, b)?;
    let diff = (left + right - whole).abs();
    if diff <= tol || depth == 0 || !(mid > a && mid < b) {
        if depth == 0 && diff > tol {
            log::warn!("quadrature panel [{a}, {b}] not resolved: difference {diff:e}");
        }
        out.value += left + right;
        out.error_estimate += diff;
        out.panels += 2;
        return Ok(());
    }
    adapt(rule, f, a, mid, left, 0.5 * tol, depth - 1, out)?;
    adapt(rule, f, mid, b, right, 0.5 * tol, depth - 1, out)
}

/// Sorted, deduplicated breakpoints of `[a, b]` from interior points.
pub fn breakpoints(a: f64, b: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts: Vec<f64> = interior.into_iter().filter(|&x| x > a && x < b).collect();
    pts.push(a);
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    let scale = 1e-14 * (1.0 + a.abs().max(b.abs()));
    pts.dedup_by(|x, y| (*x - *y).abs() <= scale);
    if let Some(last) = pts.last_mut() {
        *last = b;
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(16);
        let sum: f64 = rule.weights().iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        for k in 0..32 {
            let got: f64 = rule
                .nodes()
                .iter()
                .zip(rule.weights())
                .map(|(x, w)| w * x.powi(k))
                .sum();
            let expect = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((got - expect).abs() < 1e-13, "degree {k}: {got}");
        }
    }

    #[test]
    fn step_function_with_breakpoint() {
        let rule = GaussLegendre::new(16);
        let f = |x: f64| Ok(if x < 0.3 { 1.0 } else { 2.0 });
        let q = integrate_piecewise(&rule, &f, &breakpoints(0.0, 1.0, [0.3]), 1e-12, 10).unwrap();
        assert!((q.value - 1.7).abs() < 1e-14);
    }

    #[test]
    fn adaptive_peak() {
        let rule = GaussLegendre::new(16);
        let f = |x: f64| Ok(1.0 / (1e-4 + x * x));
        let q = integrate_piecewise(&rule, &f, &[-1.0, 1.0], 1e-10, 30).unwrap();
        let expect = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((q.value - expect).abs() < 1e-8 * expect);
    }

    #[test]
    fn breakpoint_cleanup() {
        assert_eq!(breakpoints(0.0, 1.0, [0.5, 0.5, 2.0, -1.0]), vec![0.0, 0.5, 1.0]);
    }
}
