//! Classical and quantum collision-rate densities.
//!
//! The loss rate `m_out_cl` and the gain rates are all averages over the gas
//! distribution of on-shell scattering quantities. The energy-conserving
//! delta function is always eliminated analytically: its argument is linear
//! in the component of the gas momentum along the exchange `Q`, with slope
//! `-(m*/m) |Q|`, so each gain rate reduces to a 2D integral over the plane
//! perpendicular to `Q` with Jacobian `m / (m* |Q|)`. Smoothed deltas never
//! appear outside test oracles.
//!
//! The complex rate `m_in_quantum` uses the factorized form: a product of
//! jump-function values `L(p, P - Q; Q) L*(p, P' - Q; Q)` integrated over
//! the `Q`-perpendicular plane. On the diagonal `P = P'` it reduces to
//! `m_in_cl` — the two code paths are checked against each other to 1e-6.

use crate::error::{Error, Result};
use crate::gas::{self, GasSpec};
use crate::kinematics::{orthonormal_frame, rel, MassPair, MomentumVector};
use crate::quad::{
    integrate_ball, integrate_plane, require_converged, CompensatedComplexSum, GaussLegendre,
    SphereRule,
};
use crate::scattering::{self, ScatteringModel};
use crate::Complex;
use num_traits::Float as _;

/// Deep-tail floor: two quadrature levels both below this magnitude count
/// as a converged zero (the integrand has no support on the patch).
const ABS_FLOOR: f64 = 1e-250;

/// Node counts and truncation widths for the quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureBudget {
    /// Radial nodes for gas-momentum ball integrals.
    pub n_radial: usize,
    /// Polar nodes for the angular part of ball integrals (azimuth uses twice as many).
    pub n_angular: usize,
    /// Nodes per axis for the Q-perpendicular plane integrals.
    pub n_plane: usize,
    /// Half-width of the plane integration square in gas width units.
    pub plane_extent: f64,
    /// Sample count for Monte Carlo estimators.
    pub mc_samples: usize,
    /// Target relative tolerance of the node-doubling check.
    pub rel_tol: f64,
}

impl Default for QuadratureBudget {
    fn default() -> Self {
        Self {
            n_radial: 24,
            n_angular: 16,
            n_plane: 32,
            plane_extent: 6.0,
            mc_samples: 100_000,
            rel_tol: 1e-6,
        }
    }
}

impl QuadratureBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n_radial < 4 || self.n_angular < 4 || self.n_plane < 4 {
            return Err(Error::InvalidParameter("quadrature node counts must be >= 4"));
        }
        if !(self.plane_extent >= 4.0) {
            return Err(Error::InvalidParameter("plane_extent must be >= 4"));
        }
        if self.mc_samples < 4 {
            return Err(Error::InvalidParameter("mc_samples must be >= 4"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) {
            return Err(Error::InvalidParameter("rel_tol must be positive"));
        }
        Ok(())
    }
}

/// A complex rate density together with its two-level error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexRate {
    pub value: Complex,
    pub est_error: f64,
}

/// Masses, gas, scattering model, and quadrature budget bundled for rate
/// evaluation. Immutable and shareable across workers.
#[derive(Debug, Clone)]
pub struct CollisionSystem {
    masses: MassPair,
    gas: GasSpec,
    model: ScatteringModel,
    quad: QuadratureBudget,
    eps_q: f64,
    radial: GaussLegendre,
    radial_fine: GaussLegendre,
    sphere: SphereRule,
    sphere_fine: SphereRule,
    plane: GaussLegendre,
    plane_fine: GaussLegendre,
}

impl CollisionSystem {
    pub fn new(
        masses: MassPair,
        gas: GasSpec,
        model: ScatteringModel,
        quad: QuadratureBudget,
    ) -> Result<Self> {
        quad.validate()?;
        if let ScatteringModel::BornGaussian { masses: model_masses, .. } = &model {
            if *model_masses != masses {
                return Err(Error::InvalidParameter(
                    "BornGaussian model masses disagree with the system masses",
                ));
            }
        }
        let eps_q = 1e-6 * gas.distribution.width_scale();
        Ok(Self {
            radial: GaussLegendre::new(quad.n_radial),
            radial_fine: GaussLegendre::new(2 * quad.n_radial),
            sphere: SphereRule::new(quad.n_angular),
            sphere_fine: SphereRule::new(2 * quad.n_angular),
            plane: GaussLegendre::new(quad.n_plane),
            plane_fine: GaussLegendre::new(2 * quad.n_plane),
            masses,
            gas,
            model,
            quad,
            eps_q,
        })
    }

    pub fn masses(&self) -> &MassPair {
        &self.masses
    }

    pub fn gas(&self) -> &GasSpec {
        &self.gas
    }

    pub fn model(&self) -> &ScatteringModel {
        &self.model
    }

    pub fn budget(&self) -> &QuadratureBudget {
        &self.quad
    }

    /// Cutoff below which the momentum exchange counts as singular.
    pub fn eps_q(&self) -> f64 {
        self.eps_q
    }

    /// Same system with the gas distribution actively boosted by `velocity`.
    pub fn boosted(&self, velocity: MomentumVector) -> Result<Self> {
        let dist = gas::boost(&self.gas.distribution, velocity)?;
        Self::new(
            self.masses,
            GasSpec::new(dist, self.gas.n_gas)?,
            self.model.clone(),
            self.quad.clone(),
        )
    }

    /// Classical loss rate
    /// `(n/m*) ∫ dp0 mu(p0) |rel(p0, P)| sigma_tot(rel(p0, P))`.
    pub fn m_out_cl(&self, tracer_p: MomentumVector) -> Result<f64> {
        let v = self.gas_modulus_average(tracer_p, |t| {
            Ok(t * scattering::sigma_tot(&self.model, t)?)
        })?;
        Ok(self.gas.n_gas / self.masses.reduced() * v.re)
    }

    /// Gas-induced energy shift
    /// `-2 pi (n/m*) ∫ dp0 mu(p0) Re f(rel(p0, P), rel(p0, P))`.
    pub fn energy_shift(&self, tracer_p: MomentumVector) -> Result<f64> {
        let v = self.gas_modulus_average(tracer_p, |t| {
            Ok(scattering::forward_amplitude(&self.model, t)?.re)
        })?;
        Ok(-2.0 * core::f64::consts::PI * self.gas.n_gas / self.masses.reduced() * v.re)
    }

    /// `∫ dp0 mu(p0) g(|rel(p0, P)|)` with node-doubling control.
    ///
    /// Every distribution here is isotropic about its mean momentum, so the
    /// angular integral reduces exactly to a 1D integral over the modulus
    /// `t = |rel|`: with `c = |(m*/m) mean - (m*/M) P|` and `u = |p0 - mean|`,
    ///   `∫ dOmega g(|rel|) = (2 pi / (a u c)) ∫_{|c - a u|}^{c + a u} t g(t) dt`.
    /// The spherical product rule converges only algebraically through the
    /// sqrt-kink of `|rel|` on the shell `a u = c`; this reduction restores
    /// spectral convergence (it is cross-checked against the product rule in
    /// the test suite).
    fn gas_modulus_average<F>(&self, tracer_p: MomentumVector, g: F) -> Result<Complex>
    where
        F: Fn(f64) -> Result<f64>,
    {
        let dist = &self.gas.distribution;
        let center = dist.mean_momentum();
        let r_max = dist.radial_extent();
        let a = self.masses.reduced() / self.masses.gas_mass();
        let c = (center * a - tracer_p * (self.masses.reduced() / self.masses.tracer_mass())).norm();
        // The radial integrand loses smoothness where the modulus interval
        // touches zero (u = c/a); integrate each side on its own panel.
        let kink = c / a;
        let panels: [(f64, f64); 2] = if kink > 0.0 && kink < r_max {
            [(0.0, kink), (kink, r_max)]
        } else {
            [(0.0, r_max), (0.0, 0.0)]
        };
        let eval = |radial: &GaussLegendre, inner: &GaussLegendre| -> Result<Complex> {
            let mut err = None;
            let mut acc = crate::quad::CompensatedSum::new();
            for &(p_lo, p_hi) in &panels {
                if p_hi <= p_lo {
                    continue;
                }
                for (u, wu) in radial.mapped(p_lo, p_hi) {
                    let mu_r = gas::mu(dist, center + MomentumVector::new(u, 0.0, 0.0));
                    if mu_r == 0.0 {
                        continue;
                    }
                    let (lo, hi) = ((c - a * u).abs(), c + a * u);
                    let mut shell = crate::quad::CompensatedSum::new();
                    for (t, wt) in inner.mapped(lo, hi) {
                        match g(t) {
                            Ok(v) => shell.add(wt * t * v),
                            Err(e) => {
                                err.get_or_insert(e);
                            }
                        }
                    }
                    let angular = if a * u * c > 0.0 {
                        2.0 * core::f64::consts::PI / (a * u * c) * shell.total()
                    } else {
                        // c = 0 (or u = 0): the shell is a single modulus a*u.
                        4.0 * core::f64::consts::PI * g(a * u)?
                    };
                    acc.add(wu * u * u * mu_r * angular);
                }
            }
            err.map_or(Ok(Complex::new(acc.total(), 0.0)), Err)
        };
        let coarse = eval(&self.radial, &self.sphere.cos_rule)?;
        let fine = eval(&self.radial_fine, &self.sphere_fine.cos_rule)?;
        Ok(require_converged(coarse, fine, self.quad.rel_tol, ABS_FLOOR)?.value)
    }

    /// `∫ dp0 mu(p0) g(rel(p0, P))` by the plain spherical product rule;
    /// retained as the secondary route for cross-checking
    /// [`Self::m_out_cl`] and [`Self::energy_shift`] in tests.
    pub fn gas_average_product_rule<F>(&self, tracer_p: MomentumVector, g: F) -> Result<Complex>
    where
        F: Fn(MomentumVector) -> Result<Complex>,
    {
        let dist = &self.gas.distribution;
        let center = dist.mean_momentum();
        let r_max = dist.radial_extent();
        let mut err = None;
        let v = integrate_ball(center, r_max, &self.radial_fine, &self.sphere_fine, |p0| {
            let w = gas::mu(dist, p0);
            if w == 0.0 {
                return Complex::new(0.0, 0.0);
            }
            match g(rel(p0, tracer_p, &self.masses)) {
                Ok(z) => z * w,
                Err(e) => {
                    err.get_or_insert(e);
                    Complex::new(0.0, 0.0)
                }
            }
        });
        err.map_or(Ok(v), Err)
    }

    /// Classical gain-rate density `M_in_cl(P_f; Q)`: the rate density for
    /// the tracer to end up at `P_f` after a momentum gain `Q`. The energy
    /// delta is resolved along `Q`, leaving a plane integral over the gas
    /// momenta perpendicular to `Q`.
    pub fn m_in_cl(&self, p_final: MomentumVector, exchange: MomentumVector) -> Result<f64> {
        let ctx = self.plane_context(exchange)?;
        let masses = &self.masses;
        let ratio = masses.mass_ratio();
        let a = masses.reduced() / masses.gas_mass();
        let b = masses.reduced() / masses.tracer_mass();
        // On-shell gas momentum component along Q.
        let p0_par = ratio * p_final.dot(ctx.q_hat) + (1.0 - ratio) * 0.5 * ctx.q_norm;
        let dist = &self.gas.distribution;
        let mean = dist.mean_momentum();
        let center = ctx.q_hat * p0_par + ctx.in_plane(mean);
        let halfwidth = self.quad.plane_extent * dist.width_scale();
        let arg_a = ctx.q * a; // rel(p0 - Q, P_f) = r - (m*/m) Q
        let arg_b = ctx.q * b; // rel(p0, P_f - Q) = r + (m*/M) Q
        let eval = |rule: &GaussLegendre| -> Result<Complex> {
            let mut err = None;
            let v = integrate_plane(center, ctx.e1, ctx.e2, halfwidth, rule, |p0| {
                let w = gas::mu(dist, p0);
                if w == 0.0 {
                    return Complex::new(0.0, 0.0);
                }
                let r = rel(p0, p_final, masses);
                match scattering::sigma_diff(&self.model, r - arg_a, r + arg_b) {
                    Ok(s) => Complex::new(w * s, 0.0),
                    Err(e) => {
                        err.get_or_insert(e);
                        Complex::new(0.0, 0.0)
                    }
                }
            });
            err.map_or(Ok(v), Err)
        };
        let coarse = eval(&self.plane)?;
        let fine = eval(&self.plane_fine)?;
        let v = require_converged(coarse, fine, self.quad.rel_tol, ABS_FLOOR)?.value;
        let jac = masses.gas_mass() / (masses.reduced() * ctx.q_norm);
        Ok(self.gas.n_gas / self.masses.reduced() * jac * v.re)
    }

    /// Jump function `L(p, P; Q)` of the factorized complex rate:
    /// `sqrt(n m / (Q m*^2)) mu^{1/2}(p + (1 + m/M) Q/2 + (m/M) P_par)
    ///  f(rel(p, P_perp) - Q/2, rel(p, P_perp) + Q/2)`,
    /// defined for `p` in the plane perpendicular to `Q`.
    pub fn l_fn(
        &self,
        p: MomentumVector,
        tracer_p: MomentumVector,
        exchange: MomentumVector,
    ) -> Result<Complex> {
        let ctx = self.plane_context(exchange)?;
        let dot = p.dot(ctx.q_hat);
        if dot.abs() > 1e-10 * p.norm().max(1e-300) {
            return Err(Error::OffPlane { dot: dot / p.norm().max(1e-300) });
        }
        self.l_fn_in_plane(&ctx, p, tracer_p)
    }

    fn l_fn_in_plane(
        &self,
        ctx: &PlaneContext,
        p: MomentumVector,
        tracer_p: MomentumVector,
    ) -> Result<Complex> {
        let masses = &self.masses;
        let ratio = masses.mass_ratio();
        let p_par = ctx.q_hat * tracer_p.dot(ctx.q_hat);
        let p_perp = tracer_p - p_par;
        let mu_arg = p + ctx.q * (0.5 * (1.0 + ratio)) + p_par * ratio;
        let w = gas::mu_sqrt(&self.gas.distribution, mu_arg);
        if w == 0.0 {
            return Ok(Complex::new(0.0, 0.0));
        }
        let r = rel(p, p_perp, masses);
        let half_q = ctx.q * 0.5;
        let (p_f, p_i) = (r - half_q, r + half_q);
        debug_assert!({
            let (nf, ni) = (p_f.norm(), p_i.norm());
            (nf - ni).abs() <= 1e-9 * nf.max(ni).max(1e-300)
        });
        let amp = scattering::amplitude(&self.model, p_f, p_i)?;
        let pref =
            (self.gas.n_gas * masses.gas_mass() / (ctx.q_norm * masses.reduced().powi(2))).sqrt();
        Ok(amp * (pref * w))
    }

    /// Complex gain rate `M_in(P, P'; Q)` in the factorized form:
    /// `∫_{Q⊥} dp L(p, P - Q; Q) L*(p, P' - Q; Q)`.
    pub fn m_in_quantum(
        &self,
        tracer_p: MomentumVector,
        tracer_p_prime: MomentumVector,
        exchange: MomentumVector,
    ) -> Result<ComplexRate> {
        let ctx = self.plane_context(exchange)?;
        let diagonal = tracer_p == tracer_p_prime;
        let shifted = tracer_p - ctx.q;
        let shifted_prime = tracer_p_prime - ctx.q;
        let center = ctx.in_plane(self.gas.distribution.mean_momentum());
        let halfwidth = self.quad.plane_extent
            * (self.masses.gas_mass() / self.masses.reduced())
            * self.gas.distribution.width_scale();
        let eval = |rule: &GaussLegendre| -> Result<Complex> {
            let mut err = None;
            let mut acc = CompensatedComplexSum::new();
            for (x, wx) in rule.mapped(-halfwidth, halfwidth) {
                for (y, wy) in rule.mapped(-halfwidth, halfwidth) {
                    let p = center + ctx.e1 * x + ctx.e2 * y;
                    let term = (|| -> Result<Complex> {
                        let left = self.l_fn_in_plane(&ctx, p, shifted)?;
                        if diagonal {
                            return Ok(Complex::new(left.norm_sqr(), 0.0));
                        }
                        let right = self.l_fn_in_plane(&ctx, p, shifted_prime)?;
                        Ok(left * right.conj())
                    })();
                    match term {
                        Ok(z) => acc.add(z * (wx * wy)),
                        Err(e) => {
                            err.get_or_insert(e);
                        }
                    }
                }
            }
            err.map_or(Ok(acc.total()), Err)
        };
        let coarse = eval(&self.plane)?;
        let fine = eval(&self.plane_fine)?;
        let out = require_converged(coarse, fine, self.quad.rel_tol, ABS_FLOOR)?;
        Ok(ComplexRate { value: out.value, est_error: out.est_error })
    }

    fn plane_context(&self, exchange: MomentumVector) -> Result<PlaneContext> {
        let q_norm = exchange.norm();
        if q_norm <= self.eps_q {
            return Err(Error::SingularQ { q: q_norm, eps_q: self.eps_q });
        }
        let q_hat = exchange * (1.0 / q_norm);
        let (e1, e2) = orthonormal_frame(q_hat)?;
        Ok(PlaneContext { q: exchange, q_hat, q_norm, e1, e2 })
    }
}

struct PlaneContext {
    q: MomentumVector,
    q_hat: MomentumVector,
    q_norm: f64,
    e1: MomentumVector,
    e2: MomentumVector,
}

impl PlaneContext {
    fn in_plane(&self, v: MomentumVector) -> MomentumVector {
        v - self.q_hat * v.dot(self.q_hat)
    }
}
