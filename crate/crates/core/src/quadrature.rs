//! Gauss–Legendre rules and product quadrature on the unit sphere.
//!
//! The sphere rule takes a polar axis so that integrands of the form
//! `p(n) exp(i k n·u)` with `p` a low-order polynomial can be integrated with
//! the oscillation confined to the polar coordinate: choosing the axis along
//! `u` leaves only a trigonometric polynomial in the azimuth, which the
//! trapezoid rule integrates exactly.

use nalgebra::Vector3;
use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
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

/// A quadrature point on the unit sphere.
#[derive(Debug, Clone, Copy)]
pub struct SpherePoint {
    pub n: Vector3<f64>,
    pub weight: f64,
}

/// Product rule: Gauss–Legendre in cos(polar angle) about `axis`, trapezoid in azimuth.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub points: Vec<SpherePoint>,
    pub polar_nodes: usize,
    pub azimuth_nodes: usize,
}

impl SphereRule {
    pub fn new(axis: Vector3<f64>, polar_nodes: usize, azimuth_nodes: usize) -> Self {
        let e3 = axis.try_normalize(0.0).unwrap_or_else(Vector3::z);
        // Any orthonormal completion works; pick the least-aligned Cartesian axis.
        let seed = if e3.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let e1 = (seed - e3 * e3.dot(&seed)).normalize();
        let e2 = e3.cross(&e1);
        let (mu, w) = gauss_legendre(polar_nodes);
        let dphi = 2.0 * PI / azimuth_nodes as f64;
        let mut points = Vec::with_capacity(polar_nodes * azimuth_nodes);
        for (&c, &wc) in mu.iter().zip(&w) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for j in 0..azimuth_nodes {
                let phi = (j as f64 + 0.5) * dphi;
                let n = e1 * (s * phi.cos()) + e2 * (s * phi.sin()) + e3 * c;
                points.push(SpherePoint {
                    n,
                    weight: wc * dphi,
                });
            }
        }
        SphereRule {
            points,
            polar_nodes,
            azimuth_nodes,
        }
    }

    pub fn integrate<T, F>(&self, mut f: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
        F: FnMut(&Vector3<f64>) -> T,
    {
        self.points
            .iter()
            .fold(T::default(), |acc, p| acc + f(&p.n) * p.weight)
    }
}
