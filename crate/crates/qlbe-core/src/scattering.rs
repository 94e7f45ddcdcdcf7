//! Elastic two-body scattering amplitudes and cross sections.
//!
//! Three amplitude families cover the crate's needs: a constant s-wave
//! amplitude (trivially checkable), the hard sphere (unitary, nontrivial
//! angular structure, computed by a partial-wave sum with exact phase
//! shifts), and the Gaussian-potential Born amplitude (depends only on the
//! momentum transfer; the exact model of the weak-coupling limit).
//!
//! Amplitudes are on-shell objects: `|p_f| = |p_i|` within a relative
//! tolerance of 1e-6 for the models that are only defined on shell, with
//! `|p_i|` setting the collision energy.

use crate::error::{Error, Result};
use crate::kinematics::{MassPair, MomentumVector};
use crate::quad::{require_converged, SphereRule};
use crate::Complex;
use num_traits::Float as _;

/// Relative tolerance for the on-shell precondition.
pub const ON_SHELL_RTOL: f64 = 1e-6;

/// Partial-wave tail must stay below this fraction of the running sum.
pub const TAIL_RTOL: f64 = 1e-10;

/// Hard ceiling on partial waves (stack buffers are sized by this).
pub const L_CAP: usize = 512;

/// Elastic scattering amplitude `f(p_f, p_i)` selector.
#[derive(Debug, Clone, PartialEq)]
pub enum ScatteringModel {
    /// Isotropic, energy-independent amplitude `f0` (length units).
    ConstantSWave { f0: Complex },
    /// Impenetrable sphere of the given radius; partial waves up to `l_max`.
    HardSphere { radius: f64, l_max: usize },
    /// Born amplitude of the Gaussian potential
    /// `V(x) = strength * exp(-x^2 / (2 width^2))`.
    BornGaussian { strength: f64, width: f64, masses: MassPair },
}

impl ScatteringModel {
    pub fn constant_s_wave(f0: Complex) -> Self {
        ScatteringModel::ConstantSWave { f0 }
    }

    /// The unique unitary constant amplitude at momentum `p`:
    /// `f0 = i sigma_c p / (4 pi)` with `sigma_c = 4 pi |f0|^2` solved
    /// self-consistently, i.e. `f0 = i / p`.
    pub fn unitary_s_wave(p: f64) -> Self {
        ScatteringModel::ConstantSWave { f0: Complex::new(0.0, 1.0 / p) }
    }

    /// Constant s-wave model with a prescribed total cross section.
    pub fn constant_s_wave_with_sigma(sigma_tot: f64) -> Result<Self> {
        if !(sigma_tot > 0.0 && sigma_tot.is_finite()) {
            return Err(Error::InvalidParameter("sigma_tot must be positive"));
        }
        let f0 = (sigma_tot / (4.0 * core::f64::consts::PI)).sqrt();
        Ok(ScatteringModel::ConstantSWave { f0: Complex::new(0.0, f0) })
    }

    pub fn hard_sphere(radius: f64, l_max: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter("hard-sphere radius must be positive"));
        }
        if l_max + 8 > L_CAP {
            return Err(Error::InvalidParameter("hard-sphere l_max exceeds the partial-wave cap"));
        }
        Ok(ScatteringModel::HardSphere { radius, l_max })
    }

    pub fn born_gaussian(strength: f64, width: f64, masses: MassPair) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidParameter("Born width must be positive"));
        }
        if !strength.is_finite() {
            return Err(Error::InvalidParameter("Born strength must be finite"));
        }
        Ok(ScatteringModel::BornGaussian { strength, width, masses })
    }

    /// Prefactor of the Born amplitude: `f_B(q) = -born_prefactor() * exp(-q^2 s^2 / 2)`.
    pub fn born_prefactor(&self) -> Option<f64> {
        match self {
            ScatteringModel::BornGaussian { strength, width, masses } => {
                Some(masses.reduced() * strength * width.powi(3) * (2.0 * core::f64::consts::PI).sqrt())
            }
            _ => None,
        }
    }
}

/// Evaluates `f(p_f, p_i)`.
///
/// `ConstantSWave` and `HardSphere` are on-shell only; `BornGaussian`
/// accepts any pair since it depends only on `p_f - p_i`.
pub fn amplitude(
    model: &ScatteringModel,
    p_f: MomentumVector,
    p_i: MomentumVector,
) -> Result<Complex> {
    match model {
        ScatteringModel::ConstantSWave { f0 } => {
            check_on_shell(p_f, p_i)?;
            Ok(*f0)
        }
        ScatteringModel::HardSphere { radius, l_max } => {
            check_on_shell(p_f, p_i)?;
            let p = p_i.norm();
            let pf_n = p_f.norm();
            let cos_theta = if p > 0.0 && pf_n > 0.0 {
                (p_f.dot(p_i) / (p * pf_n)).clamp(-1.0, 1.0)
            } else {
                1.0
            };
            hard_sphere_amplitude(p, *radius, *l_max, cos_theta)
        }
        ScatteringModel::BornGaussian { width, .. } => {
            let q2 = (p_f - p_i).norm_sq();
            let c = model.born_prefactor().unwrap();
            Ok(Complex::new(-c * (-0.5 * q2 * width * width).exp(), 0.0))
        }
    }
}

/// Forward amplitude `f(p, p)` as a function of the on-shell momentum
/// magnitude (equivalently the relative energy `p^2 / 2 m*`).
pub fn forward_amplitude(model: &ScatteringModel, p: f64) -> Result<Complex> {
    match model {
        ScatteringModel::ConstantSWave { f0 } => Ok(*f0),
        ScatteringModel::HardSphere { radius, l_max } => {
            hard_sphere_amplitude(p, *radius, *l_max, 1.0)
        }
        ScatteringModel::BornGaussian { .. } => {
            Ok(Complex::new(-model.born_prefactor().unwrap(), 0.0))
        }
    }
}

/// Differential cross section `sigma(p_f, p_i) = |f(p_f, p_i)|^2`.
pub fn sigma_diff(
    model: &ScatteringModel,
    p_f: MomentumVector,
    p_i: MomentumVector,
) -> Result<f64> {
    Ok(amplitude(model, p_f, p_i)?.norm_sqr())
}

/// Total cross section, closed form per model.
pub fn sigma_tot(model: &ScatteringModel, p_i: f64) -> Result<f64> {
    match model {
        ScatteringModel::ConstantSWave { f0 } => Ok(4.0 * core::f64::consts::PI * f0.norm_sqr()),
        ScatteringModel::HardSphere { radius, l_max } => {
            hard_sphere_sigma_tot(p_i, *radius, *l_max)
        }
        ScatteringModel::BornGaussian { width, .. } => {
            let c = model.born_prefactor().unwrap();
            let y = 4.0 * p_i * p_i * width * width;
            let factor = if y < 1e-8 {
                1.0 - 0.5 * y + y * y / 6.0
            } else {
                (1.0 - (-y).exp()) / y
            };
            Ok(4.0 * core::f64::consts::PI * c * c * factor)
        }
    }
}

/// Total cross section by sphere quadrature of `|f|^2` with node doubling;
/// the independent route used to cross-check the closed forms.
pub fn sigma_tot_numeric(model: &ScatteringModel, p_i: MomentumVector, n_cos: usize) -> Result<f64> {
    let p = p_i.norm();
    if !(p > 0.0) {
        return Err(Error::InvalidParameter("sigma_tot requires |p_i| > 0"));
    }
    let eval = |n_cos: usize| -> Result<Complex> {
        let sphere = SphereRule::new(n_cos);
        let axis = p_i * (1.0 / p);
        let (e1, e2) = crate::kinematics::orthonormal_frame(axis)?;
        let mut err = None;
        let v = sphere.integrate(axis, e1, e2, |n| match sigma_diff(model, n * p, p_i) {
            Ok(s) => Complex::new(s, 0.0),
            Err(e) => {
                err = Some(e);
                Complex::new(0.0, 0.0)
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    };
    let coarse = eval(n_cos)?;
    let fine = eval(2 * n_cos)?;
    Ok(require_converged(coarse, fine, 1e-8, 0.0)?.value.re)
}

/// Signed optical-theorem residual `|p| sigma_tot(p) - 4 pi Im f(p, p)`.
pub fn optical_theorem_residual(model: &ScatteringModel, p_i: MomentumVector) -> Result<f64> {
    let p = p_i.norm();
    let st = sigma_tot(model, p)?;
    let fwd = forward_amplitude(model, p)?;
    Ok(p * st - 4.0 * core::f64::consts::PI * fwd.im)
}

/// Upper bound on `sigma_tot` over momenta in `(0, p_max]`, used as the
/// rejection envelope in the Monte Carlo sampler.
pub fn sigma_tot_upper_bound(model: &ScatteringModel, p_max: f64) -> Result<f64> {
    match model {
        ScatteringModel::ConstantSWave { f0 } => Ok(4.0 * core::f64::consts::PI * f0.norm_sqr()),
        // sigma_tot(p -> 0) = 4 pi C^2 and the closed form is monotone decreasing.
        ScatteringModel::BornGaussian { .. } => {
            let c = model.born_prefactor().unwrap();
            Ok(4.0 * core::f64::consts::PI * c * c)
        }
        ScatteringModel::HardSphere { radius, l_max } => {
            // 4 pi a^2 is the p -> 0 limit; scan for safety with a margin.
            let mut best: f64 = 4.0 * core::f64::consts::PI * radius * radius;
            let lo = (1e-4 / radius).min(p_max * 0.5);
            let n = 192;
            for k in 0..=n {
                let p = lo * (p_max * 1.05 / lo).powf(k as f64 / n as f64);
                best = best.max(hard_sphere_sigma_tot(p, *radius, *l_max)?);
            }
            Ok(best * 1.02)
        }
    }
}

fn check_on_shell(p_f: MomentumVector, p_i: MomentumVector) -> Result<()> {
    let a = p_f.norm();
    let b = p_i.norm();
    if (a - b).abs() > ON_SHELL_RTOL * b.max(a) {
        return Err(Error::OffShell { p_f: a, p_i: b });
    }
    Ok(())
}

/// Spherical Bessel functions `j_l`, `y_l` for `l = 0..=l_top` at `x > 0`.
///
/// `y_l` by upward recurrence (stable); `j_l` by downward recurrence with
/// Wronskian normalization `j_l y_{l-1} - j_{l-1} y_l = 1 / x^2`, stable at
/// large order. The upward sweep stops early once `|y_l|` overflows the
/// useful range; higher partial waves carry phase shifts below 1e-200 and
/// are treated as exactly zero. Returns the number of orders actually
/// computed (`<= l_top + 1`).
fn spherical_bessel(x: f64, l_top: usize, j: &mut [f64], y: &mut [f64]) -> usize {
    debug_assert!(x > 0.0);
    let (sin_x, cos_x) = x.sin_cos();
    y[0] = -cos_x / x;
    let mut n_ok = 1;
    if l_top >= 1 {
        y[1] = -cos_x / (x * x) - sin_x / x;
        n_ok = 2;
        for l in 1..l_top {
            let next = (2.0 * l as f64 + 1.0) / x * y[l] - y[l - 1];
            if !next.is_finite() || next.abs() > 1e250 {
                break;
            }
            y[l + 1] = next;
            n_ok = l + 2;
        }
    }
    let l_cut = n_ok - 1;
    // Downward recurrence for j from well above l_cut.
    let start = l_cut + 24 + (2.0 * x).sqrt() as usize;
    let mut upper = 0.0_f64; // unnormalized j_{l+1}
    let mut cur = 1e-280_f64; // unnormalized j_l, starting at l = start
    for l in (0..=start).rev() {
        if l <= l_cut {
            j[l] = cur;
        }
        if l == 0 {
            break;
        }
        let lower = (2.0 * l as f64 + 1.0) / x * cur - upper;
        upper = cur;
        cur = lower;
        if cur.abs() > 1e250 {
            upper *= 1e-250;
            cur *= 1e-250;
            for v in j.iter_mut().take(l_cut + 1) {
                *v *= 1e-250;
            }
        }
    }
    // Wronskian normalization: j_1 y_0 - j_0 y_1 = 1 / x^2 never vanishes.
    let scale = if l_cut >= 1 {
        1.0 / (x * x * (j[1] * y[0] - j[0] * y[1]))
    } else {
        (sin_x / x) / j[0]
    };
    for v in j.iter_mut().take(l_cut + 1) {
        *v *= scale;
    }
    n_ok
}

/// Hard-sphere partial-wave amplitude
/// `f = (1/p) sum_l (2l+1) e^{i delta_l} sin(delta_l) P_l(cos theta)`
/// with `tan delta_l = j_l(pa) / y_l(pa)`.
fn hard_sphere_amplitude(p: f64, radius: f64, l_max: usize, cos_theta: f64) -> Result<Complex> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter("hard-sphere amplitude requires |p| > 0"));
    }
    let x = p * radius;
    let mut j = [0.0; L_CAP];
    let mut y = [0.0; L_CAP];
    let l_extra = l_max + 5;
    let n_ok = spherical_bessel(x, l_extra, &mut j, &mut y);
    let l_cut = (n_ok - 1).min(l_extra);

    let mut re = 0.0;
    let mut im = 0.0;
    let mut abs_sum = 0.0;
    let mut p0 = 1.0; // P_0
    let mut p1 = cos_theta; // P_1
    let mut tail = 0.0;
    for l in 0..=l_cut {
        let pl = if l == 0 {
            1.0
        } else if l == 1 {
            cos_theta
        } else {
            let lf = l as f64;
            let p2 = ((2.0 * lf - 1.0) * cos_theta * p1 - (lf - 1.0) * p0) / lf;
            p0 = p1;
            p1 = p2;
            p2
        };
        let denom = j[l] * j[l] + y[l] * y[l];
        // e^{i delta} sin(delta) = j (y + i j) / (j^2 + y^2)
        let c_re = j[l] * y[l] / denom;
        let c_im = j[l] * j[l] / denom;
        let w = 2.0 * l as f64 + 1.0;
        let coeff = w * (c_re * c_re + c_im * c_im).sqrt();
        if l <= l_max {
            re += w * c_re * pl;
            im += w * c_im * pl;
            abs_sum += coeff;
        } else {
            tail += coeff;
        }
    }
    // Waves beyond the stable y-recurrence range have |delta_l| < 1e-200.
    if l_cut < l_max && x > l_cut as f64 {
        return Err(Error::CutoffTooSmall { l_max, tail: f64::INFINITY });
    }
    if tail > TAIL_RTOL * abs_sum {
        return Err(Error::CutoffTooSmall { l_max, tail: tail / abs_sum });
    }
    Ok(Complex::new(re / p, im / p))
}

/// Hard-sphere total cross section `(4 pi / p^2) sum_l (2l+1) sin^2 delta_l`.
fn hard_sphere_sigma_tot(p: f64, radius: f64, l_max: usize) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::InvalidParameter("hard-sphere sigma_tot requires |p| > 0"));
    }
    let x = p * radius;
    let mut j = [0.0; L_CAP];
    let mut y = [0.0; L_CAP];
    let l_extra = l_max + 5;
    let n_ok = spherical_bessel(x, l_extra, &mut j, &mut y);
    let l_cut = (n_ok - 1).min(l_extra);

    let mut acc = 0.0;
    let mut tail = 0.0;
    for l in 0..=l_cut {
        let s2 = j[l] * j[l] / (j[l] * j[l] + y[l] * y[l]);
        let term = (2.0 * l as f64 + 1.0) * s2;
        if l <= l_max {
            acc += term;
        } else {
            tail += term;
        }
    }
    if l_cut < l_max && x > l_cut as f64 {
        return Err(Error::CutoffTooSmall { l_max, tail: f64::INFINITY });
    }
    if tail > TAIL_RTOL * acc {
        return Err(Error::CutoffTooSmall { l_max, tail: tail / acc });
    }
    Ok(4.0 * core::f64::consts::PI / (p * p) * acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::MassPair;

    const PI: f64 = core::f64::consts::PI;

    fn v(x: f64, y: f64, z: f64) -> MomentumVector {
        MomentumVector::new(x, y, z)
    }

    #[test]
    fn constant_swave_everywhere() {
        let m = ScatteringModel::constant_s_wave(Complex::new(0.0, 0.3));
        let f = amplitude(&m, v(0.0, 1.0, 0.0), v(1.0, 0.0, 0.0)).unwrap();
        assert_eq!(f, Complex::new(0.0, 0.3));
        let st = sigma_tot(&m, 2.7).unwrap();
        assert!((st - 4.0 * PI * 0.09).abs() < 1e-14);
        // 4 pi * 0.09 = 1.1309733552923256
        assert!((st - 1.1309733552923256).abs() < 1e-15);
    }

    #[test]
    fn constant_swave_off_shell_rejected() {
        let m = ScatteringModel::constant_s_wave(Complex::new(0.1, 0.0));
        let r = amplitude(&m, v(2.0, 0.0, 0.0), v(1.0, 0.0, 0.0));
        assert!(matches!(r, Err(Error::OffShell { .. })));
    }

    #[test]
    fn born_matches_radial_fourier_oracle() {
        // f_B(q) = -(m*/2pi) * 4 pi \int r^2 V(r) sinc(qr) dr, frozen from a
        // 1D Gauss-Legendre evaluation of the Fourier integral.
        let masses = MassPair::new(1.0, 4.0).unwrap();
        let (v0, s) = (0.7, 1.3);
        let model = ScatteringModel::born_gaussian(v0, s, masses).unwrap();
        let rule = crate::quad::GaussLegendre::new(400);
        // Absolute tolerance keyed to the prefactor: deep in the Gaussian
        // tail the Fourier integral is cancellation-limited.
        let tol = 1e-12 * model.born_prefactor().unwrap();
        for &q in &[0.13, 0.71, 1.9, 3.3, 5.2] {
            let mut acc = 0.0;
            for (r, w) in rule.mapped(0.0, 12.0 * s) {
                acc += w * 4.0 * PI * r * r * v0 * (-r * r / (2.0 * s * s)).exp() * (q * r).sin()
                    / (q * r);
            }
            let oracle = -(masses.reduced() / (2.0 * PI)) * acc;
            let f = amplitude(&model, v(q, 0.0, 0.0), v(0.0, 0.0, 0.0)).unwrap();
            assert!((f.re - oracle).abs() < tol, "q = {q}: {} vs {}", f.re, oracle);
            assert_eq!(f.im, 0.0);
        }
    }

    #[test]
    fn born_transfer_invariance() {
        let masses = MassPair::new(0.5, 2.0).unwrap();
        let model = ScatteringModel::born_gaussian(-0.3, 0.8, masses).unwrap();
        let (pf, pi) = (v(0.3, -0.2, 0.9), v(-0.5, 0.4, 0.1));
        let k = v(2.0, -1.0, 0.5);
        let a = amplitude(&model, pf, pi).unwrap();
        let b = amplitude(&model, pf + k, pi + k).unwrap();
        assert!((a - b).norm() < 1e-15 * a.norm());
    }

    #[test]
    fn born_sigma_closed_vs_numeric() {
        let masses = MassPair::new(1.0, 2.3).unwrap();
        let model = ScatteringModel::born_gaussian(0.45, 0.9, masses).unwrap();
        let p = v(0.0, 0.0, 0.9);
        let closed = sigma_tot(&model, 0.9).unwrap();
        let numeric = sigma_tot_numeric(&model, p, 24).unwrap();
        assert!((closed - numeric).abs() < 1e-8 * closed);
    }

    #[test]
    fn hard_sphere_low_energy_scattering_length() {
        let a = 1.7;
        let model = ScatteringModel::hard_sphere(a, 8).unwrap();
        let p = 1e-3 / a;
        let f = forward_amplitude(&model, p).unwrap();
        assert!((f.re + a).abs() < 5e-3 * a, "f = {f}");
        let st = sigma_tot(&model, p).unwrap();
        assert!((st - 4.0 * PI * a * a).abs() < 5e-3 * 4.0 * PI * a * a);
    }

    #[test]
    fn hard_sphere_high_energy_limits() {
        // Oracle values from the partial-wave sum itself (frozen): the
        // approach to the geometric-optics 2 pi a^2 is O(x^{-2/3}) slow.
        let a = 1.0;
        let model = ScatteringModel::hard_sphere(a, 320).unwrap();
        let s50 = sigma_tot(&model, 50.0).unwrap();
        assert!((s50 / (2.0 * PI) - 1.071483).abs() < 1e-4);
        let s250 = sigma_tot(&model, 250.0).unwrap();
        assert!((s250 - 2.0 * PI).abs() < 0.05 * 2.0 * PI);
    }

    #[test]
    fn hard_sphere_rotation_invariance() {
        let model = ScatteringModel::hard_sphere(1.0, 48).unwrap();
        let p = 3.0;
        let ct = -0.37;
        let st = (1.0 - ct * ct).sqrt();
        let f1 = amplitude(&model, v(p * st, 0.0, p * ct), v(0.0, 0.0, p)).unwrap();
        // same |p_i| and opening angle under a rotated axis pair
        let f2 = amplitude(&model, v(p * ct, p * st, 0.0), v(p, 0.0, 0.0)).unwrap();
        assert!((f1 - f2).norm() < 1e-12 * f1.norm());
    }

    #[test]
    fn hard_sphere_cutoff_too_small() {
        let model = ScatteringModel::hard_sphere(1.0, 4).unwrap();
        let r = sigma_tot(&model, 30.0);
        assert!(matches!(r, Err(Error::CutoffTooSmall { .. })));
    }

    #[test]
    fn hard_sphere_sigma_closed_vs_numeric() {
        let model = ScatteringModel::hard_sphere(0.8, 64).unwrap();
        let closed = sigma_tot(&model, 4.0).unwrap();
        let numeric = sigma_tot_numeric(&model, v(0.0, 0.0, 4.0), 48).unwrap();
        assert!((closed - numeric).abs() < 1e-8 * closed);
    }

    #[test]
    fn optical_theorem_unitary_models() {
        let hs = ScatteringModel::hard_sphere(1.0, 96).unwrap();
        for &x in &[0.1, 0.5, 2.0, 7.0, 20.0, 50.0] {
            let p = v(0.0, 0.0, x);
            let resid = optical_theorem_residual(&hs, p).unwrap();
            let scale = x * sigma_tot(&hs, x).unwrap();
            assert!(resid.abs() < 1e-10 * scale, "x = {x}: {resid:e}");
        }
        // Unitary constant amplitude: fixed point f0 = i/p.
        let p = 1.3;
        let un = ScatteringModel::unitary_s_wave(p);
        let resid = optical_theorem_residual(&un, v(p, 0.0, 0.0)).unwrap();
        assert!(resid.abs() < 1e-12);
    }

    #[test]
    fn born_violates_unitarity_as_documented() {
        let masses = MassPair::new(1.0, 1.0).unwrap();
        let model = ScatteringModel::born_gaussian(0.2, 1.0, masses).unwrap();
        let p = v(0.0, 1.1, 0.0);
        let resid = optical_theorem_residual(&model, p).unwrap();
        let st = sigma_tot(&model, 1.1).unwrap();
        // Im f_B = 0, so the residual is exactly p * sigma_B.
        assert!((resid - 1.1 * st).abs() < 1e-14 * resid.abs());
    }

    #[test]
    fn sigma_diff_pt_symmetric() {
        let models = [
            ScatteringModel::constant_s_wave(Complex::new(0.2, 0.1)),
            ScatteringModel::hard_sphere(1.0, 48).unwrap(),
            ScatteringModel::born_gaussian(0.3, 0.7, MassPair::new(1.0, 3.0).unwrap()).unwrap(),
        ];
        let p = 2.1;
        let ct = 0.42;
        let st = (1.0 - ct * ct).sqrt();
        let pi = v(0.0, 0.0, p);
        let pf = v(p * st, 0.0, p * ct);
        for m in &models {
            let a = sigma_diff(m, pf, pi).unwrap();
            let b = sigma_diff(m, pi, pf).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()), "{m:?}");
        }
    }

    #[test]
    fn envelope_bound_holds() {
        let model = ScatteringModel::hard_sphere(1.0, 128).unwrap();
        let bound = sigma_tot_upper_bound(&model, 40.0).unwrap();
        for &p in &[1e-3, 0.3, 1.0, 3.0, 11.0, 40.0] {
            assert!(sigma_tot(&model, p).unwrap() <= bound);
        }
    }
}
