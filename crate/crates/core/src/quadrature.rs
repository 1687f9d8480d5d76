//! Gauss–Legendre rules and the fixed-order composite rules built on them.

use std::f64::consts::PI;

/// A value together with an estimate of its absolute error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            self.error
        } else {
            self.error / self.value.abs()
        }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the `n`-point rule by Newton iteration on P_n.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely onto [a, b].
    pub fn on_interval(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| (mid + half * x, half * w))
            .collect()
    }

    /// Integrates `f` over [a, b].
    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on_interval(a, b).into_iter().map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product rule on the square [-h, h]², stored as (x, y, weight).
#[derive(Clone, Debug)]
pub struct SquareRule {
    pub half_width: f64,
    pub order: usize,
    pub points: Vec<(f64, f64, f64)>,
}

impl SquareRule {
    pub fn new(order: usize, half_width: f64) -> Self {
        let gl = GaussLegendre::new(order).on_interval(-half_width, half_width);
        let mut points = Vec::with_capacity(order * order);
        for &(x, wx) in &gl {
            for &(y, wy) in &gl {
                points.push((x, y, wx * wy));
            }
        }
        SquareRule { half_width, order, points }
    }
}

/// Directions on the unit sphere: Gauss–Legendre in cos θ times a uniform
/// azimuthal grid. Weights sum to 4π. The set is closed under inversion
/// when the azimuthal count is even.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub directions: Vec<([f64; 3], f64)>,
}

impl SphereRule {
    pub fn new(polar: usize, azimuthal: usize) -> Self {
        let gl = GaussLegendre::new(polar);
        let dphi = 2.0 * PI / azimuthal as f64;
        let mut directions = Vec::with_capacity(polar * azimuthal);
        for (&c, &w) in gl.nodes.iter().zip(&gl.weights) {
            let s = (1.0 - c * c).sqrt();
            for j in 0..azimuthal {
                let phi = (j as f64 + 0.5) * dphi;
                directions.push(([s * phi.cos(), s * phi.sin(), c], w * dphi));
            }
        }
        SphereRule { directions }
    }
}
