//! Gauss-Legendre rules, compensated summation, and convergence control.
//!
//! All integration in the crate is built from three pieces: a Gauss-Legendre
//! rule on `[-1, 1]`, a uniform periodic rule in the azimuth, and a
//! two-level node-doubling check whose difference is reported as the error
//! estimate. Sums use Neumaier compensation so that serial and
//! order-partitioned evaluations agree to ~1e-15 relative.

use crate::error::{Error, Result};
use crate::kinematics::MomentumVector;
use crate::Complex;
use alloc::vec::Vec;
use num_traits::Float as _;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes an `n`-point rule by Newton iteration on the Legendre
    /// polynomial, seeded with the Chebyshev-like asymptotic roots.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature rule needs at least one node");
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let nf = n as f64;
        // Roots come in +/- pairs; solve the upper half and mirror.
        let half = n.div_ceil(2);
        let has_center = n % 2 == 1;
        for i in 0..half {
            let center = has_center && i == half - 1;
            let mut x = if center {
                0.0
            } else {
                (core::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos()
            };
            let mut dp = legendre_with_derivative(n, x).1;
            if !center {
                for _ in 0..100 {
                    let (p, d) = legendre_with_derivative(n, x);
                    dp = d;
                    let dx = p / d;
                    x -= dx;
                    if dx.abs() <= 1e-16 * (1.0 + x.abs()) {
                        dp = legendre_with_derivative(n, x).1;
                        break;
                    }
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes.push(x);
            weights.push(w);
        }
        // Mirror to the lower half.
        let mirror_from = if has_center { half - 1 } else { half };
        for i in (0..mirror_from).rev() {
            let x = -nodes[i];
            let w = weights[i];
            nodes.push(x);
            weights.push(w);
        }
        nodes.reverse();
        weights.reverse();
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

    /// Iterates `(node, weight)` pairs mapped from `[-1, 1]` to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(self.weights.iter())
            .map(move |(&x, &w)| (mid + half * x, half * w))
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
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Neumaier-compensated scalar accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated accumulator for complex values.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedComplexSum {
    re: CompensatedSum,
    im: CompensatedSum,
}

impl CompensatedComplexSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    #[inline]
    pub fn total(&self) -> Complex {
        Complex::new(self.re.total(), self.im.total())
    }
}

/// Outcome of a two-level (node-doubling) evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Doubled {
    /// Fine-level value.
    pub value: Complex,
    /// |fine - coarse|, the two-level Richardson difference.
    pub est_error: f64,
}

/// Accepts the fine value when the doubling difference is within
/// `rel_tol` of it, or when both levels are below `abs_floor` in magnitude.
pub fn require_converged(
    coarse: Complex,
    fine: Complex,
    rel_tol: f64,
    abs_floor: f64,
) -> Result<Doubled> {
    let est_error = (fine - coarse).norm();
    let scale = fine.norm().max(coarse.norm());
    if est_error <= rel_tol * scale || scale <= abs_floor {
        Ok(Doubled { value: fine, est_error })
    } else {
        Err(Error::QuadratureNotConverged { estimate: fine.norm(), error: est_error, rel_tol })
    }
}

/// Angular rule over the unit sphere: Gauss-Legendre in `cos(theta)` times
/// a uniform azimuthal grid (`2 n_cos` points), with the polar axis and the
/// in-plane frame supplied by the caller for reproducible node placement.
#[derive(Debug, Clone)]
pub struct SphereRule {
    pub cos_rule: GaussLegendre,
    pub n_phi: usize,
}

impl SphereRule {
    pub fn new(n_cos: usize) -> Self {
        Self { cos_rule: GaussLegendre::new(n_cos), n_phi: 2 * n_cos }
    }

    /// Integrates `f(n)` over the unit sphere (solid-angle measure).
    pub fn integrate<F: FnMut(MomentumVector) -> Complex>(
        &self,
        axis: MomentumVector,
        e1: MomentumVector,
        e2: MomentumVector,
        mut f: F,
    ) -> Complex {
        let mut acc = CompensatedComplexSum::new();
        let dphi = 2.0 * core::f64::consts::PI / self.n_phi as f64;
        for (&c, &wc) in self.cos_rule.nodes().iter().zip(self.cos_rule.weights()) {
            let s = (1.0 - c * c).max(0.0).sqrt();
            for k in 0..self.n_phi {
                let phi = dphi * (k as f64 + 0.5);
                let n = axis * c + e1 * (s * phi.cos()) + e2 * (s * phi.sin());
                acc.add(f(n) * (wc * dphi));
            }
        }
        acc.total()
    }
}

/// Product rule for `∫ d³p f(p)` around `center`: radial Gauss-Legendre on
/// `[0, r_max]` times a [`SphereRule`], using the canonical frame.
pub fn integrate_ball<F: FnMut(MomentumVector) -> Complex>(
    center: MomentumVector,
    r_max: f64,
    radial: &GaussLegendre,
    sphere: &SphereRule,
    mut f: F,
) -> Complex {
    let axis = MomentumVector::new(0.0, 0.0, 1.0);
    let e1 = MomentumVector::new(1.0, 0.0, 0.0);
    let e2 = MomentumVector::new(0.0, 1.0, 0.0);
    let mut acc = CompensatedComplexSum::new();
    for (r, wr) in radial.mapped(0.0, r_max) {
        let shell = sphere.integrate(axis, e1, e2, |n| f(center + n * r));
        acc.add(shell * (wr * r * r));
    }
    acc.total()
}

/// Tensor rule for a square patch of the plane `center + x e1 + y e2`,
/// `x, y ∈ [-halfwidth, halfwidth]`.
pub fn integrate_plane<F: FnMut(MomentumVector) -> Complex>(
    center: MomentumVector,
    e1: MomentumVector,
    e2: MomentumVector,
    halfwidth: f64,
    rule: &GaussLegendre,
    mut f: F,
) -> Complex {
    let mut acc = CompensatedComplexSum::new();
    for (x, wx) in rule.mapped(-halfwidth, halfwidth) {
        for (y, wy) in rule.mapped(-halfwidth, halfwidth) {
            acc.add(f(center + e1 * x + e2 * y) * (wx * wy));
        }
    }
    acc.total()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> Complex {
        Complex::new(x, 0.0)
    }

    #[test]
    fn gauss_legendre_polynomial_exactness() {
        // n-point rule is exact for degree 2n-1.
        let rule = GaussLegendre::new(6);
        let mut acc = 0.0;
        for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
            acc += w * (x.powi(10) + 3.0 * x.powi(7) - x.powi(2));
        }
        let exact = 2.0 / 11.0 - 2.0 / 3.0;
        assert!((acc - exact).abs() < 1e-14);
        let total: f64 = rule.weights().iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_mapped_interval() {
        let rule = GaussLegendre::new(40);
        let mut acc = CompensatedSum::new();
        for (x, w) in rule.mapped(0.0, 3.0) {
            acc.add(w * (-x).exp());
        }
        assert!((acc.total() - (1.0 - (-3.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn odd_rule_has_center_node() {
        let rule = GaussLegendre::new(5);
        assert_eq!(rule.len(), 5);
        assert!(rule.nodes()[2].abs() < 1e-16);
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let mut acc = CompensatedSum::new();
        acc.add(1e16);
        for _ in 0..10 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.total(), 10.0);
    }

    #[test]
    fn sphere_rule_solid_angle() {
        let sphere = SphereRule::new(8);
        let axis = MomentumVector::new(0.0, 0.0, 1.0);
        let e1 = MomentumVector::new(1.0, 0.0, 0.0);
        let e2 = MomentumVector::new(0.0, 1.0, 0.0);
        let total = sphere.integrate(axis, e1, e2, |_| c(1.0));
        assert!((total.re - 4.0 * core::f64::consts::PI).abs() < 1e-12);
        // <n_z^2> over the sphere = 4 pi / 3
        let nz2 = sphere.integrate(axis, e1, e2, |n| c(n.pz * n.pz));
        assert!((nz2.re - 4.0 * core::f64::consts::PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ball_gaussian_normalization() {
        // ∫ d³p exp(-p²) = pi^{3/2}
        let radial = GaussLegendre::new(32);
        let sphere = SphereRule::new(8);
        let v = integrate_ball(MomentumVector::ZERO, 9.0, &radial, &sphere, |p| {
            c((-p.norm_sq()).exp())
        });
        assert!((v.re - core::f64::consts::PI.powf(1.5)).abs() < 1e-10);
    }

    #[test]
    fn plane_gaussian_normalization() {
        // ∫ d²p exp(-p²) over a plane = pi
        let rule = GaussLegendre::new(48);
        let e1 = MomentumVector::new(1.0, 0.0, 0.0);
        let e2 = MomentumVector::new(0.0, 1.0, 0.0);
        let v = integrate_plane(MomentumVector::ZERO, e1, e2, 7.0, &rule, |p| {
            c((-p.norm_sq()).exp())
        });
        assert!((v.re - core::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn convergence_check_paths() {
        let fine = c(1.0);
        let ok = require_converged(c(1.0 + 1e-9), fine, 1e-6, 0.0).unwrap();
        assert!(ok.est_error <= 1.1e-9);
        assert!(require_converged(c(1.1), fine, 1e-6, 0.0).is_err());
        // both-tiny shortcut
        assert!(require_converged(c(1e-300), c(3e-300), 1e-6, 1e-250).is_ok());
    }
}
