//! Gas momentum distributions: Maxwell-Boltzmann (optionally drifting) and
//! a tabulated isotropic variant, with exact normalization and sampling.

use crate::error::{Error, Result};
use crate::kinematics::MomentumVector;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::StandardNormal;
use num_traits::Float as _;

/// Normalized single-particle momentum distribution `mu(p)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GasDistribution {
    /// `mu(p) = pi^{-3/2} p_beta^{-3} exp(-|p - m V|^2 / p_beta^2)` with
    /// `p_beta = sqrt(2 m / beta)` and drift velocity `V`.
    MaxwellBoltzmann { mass: f64, beta: f64, p_beta: f64, drift: MomentumVector },
    /// Isotropic density linear in `|p|` between grid points, zero outside
    /// the grid; normalized so the 3D integral is exactly 1.
    TabulatedIsotropic { radii: Vec<f64>, density: Vec<f64> },
}

impl GasDistribution {
    pub fn maxwell_boltzmann(mass: f64, beta: f64, drift: MomentumVector) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidParameter("gas mass must be positive"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter("inverse temperature must be positive"));
        }
        if !drift.is_finite() {
            return Err(Error::InvalidParameter("drift velocity must be finite"));
        }
        let p_beta = (2.0 * mass / beta).sqrt();
        Ok(GasDistribution::MaxwellBoltzmann { mass, beta, p_beta, drift })
    }

    /// Builds a tabulated isotropic distribution from `(|p|, weight)` pairs.
    /// Weights are rescaled so that `4 pi ∫ r^2 mu_r(r) dr = 1` exactly for
    /// the piecewise-linear interpolant.
    pub fn tabulated_isotropic(pairs: &[(f64, f64)]) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::InvalidParameter("tabulated distribution needs >= 2 grid points"));
        }
        let mut radii = Vec::with_capacity(pairs.len());
        let mut density = Vec::with_capacity(pairs.len());
        for &(r, w) in pairs {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter("tabulated radius must be finite and >= 0"));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter("tabulated weight must be finite and >= 0"));
            }
            if let Some(&last) = radii.last() {
                if r <= last {
                    return Err(Error::InvalidParameter("tabulated radii must be strictly increasing"));
                }
            }
            radii.push(r);
            density.push(w);
        }
        let norm = radial_mass(&radii, &density, radii.len() - 1);
        if !(norm > 0.0) {
            return Err(Error::InvalidParameter("tabulated distribution has zero mass"));
        }
        for w in density.iter_mut() {
            *w /= norm;
        }
        Ok(GasDistribution::TabulatedIsotropic { radii, density })
    }

    /// Mean momentum of the distribution (`m V` for drifting MB).
    pub fn mean_momentum(&self) -> MomentumVector {
        match self {
            GasDistribution::MaxwellBoltzmann { mass, drift, .. } => *drift * *mass,
            GasDistribution::TabulatedIsotropic { .. } => MomentumVector::ZERO,
        }
    }

    /// Width scale of the distribution: `p_beta` for MB, a quarter of the
    /// grid extent for tabulated data (so default plane budgets cover the
    /// full support).
    pub fn width_scale(&self) -> f64 {
        match self {
            GasDistribution::MaxwellBoltzmann { p_beta, .. } => *p_beta,
            GasDistribution::TabulatedIsotropic { radii, .. } => radii[radii.len() - 1] / 4.0,
        }
    }

    /// Radius around [`Self::mean_momentum`] containing all numerically
    /// relevant mass (tail below ~1e-28 for MB).
    pub fn radial_extent(&self) -> f64 {
        match self {
            GasDistribution::MaxwellBoltzmann { p_beta, .. } => 8.0 * p_beta,
            GasDistribution::TabulatedIsotropic { radii, .. } => radii[radii.len() - 1],
        }
    }

    pub fn is_isotropic(&self) -> bool {
        match self {
            GasDistribution::MaxwellBoltzmann { drift, .. } => drift.norm() == 0.0,
            GasDistribution::TabulatedIsotropic { .. } => true,
        }
    }

    /// Most probable momentum `p_beta`; MB only.
    pub fn p_beta(&self) -> Result<f64> {
        match self {
            GasDistribution::MaxwellBoltzmann { p_beta, .. } => Ok(*p_beta),
            GasDistribution::TabulatedIsotropic { .. } => {
                Err(Error::UnsupportedVariant("p_beta is defined for Maxwell-Boltzmann only"))
            }
        }
    }
}

/// Evaluates `mu(p)`.
pub fn mu(dist: &GasDistribution, p: MomentumVector) -> f64 {
    match dist {
        GasDistribution::MaxwellBoltzmann { mass, p_beta, drift, .. } => {
            let d = p - *drift * *mass;
            let pb2 = p_beta * p_beta;
            core::f64::consts::PI.powf(-1.5) / (pb2 * p_beta) * (-d.norm_sq() / pb2).exp()
        }
        GasDistribution::TabulatedIsotropic { radii, density } => {
            interp_linear(radii, density, p.norm())
        }
    }
}

/// `sqrt(mu(p))`, evaluated directly so Gaussian tails reach twice as deep
/// before underflow.
pub fn mu_sqrt(dist: &GasDistribution, p: MomentumVector) -> f64 {
    match dist {
        GasDistribution::MaxwellBoltzmann { mass, p_beta, drift, .. } => {
            let d = p - *drift * *mass;
            let pb2 = p_beta * p_beta;
            (core::f64::consts::PI.powf(-1.5) / (pb2 * p_beta)).sqrt()
                * (-0.5 * d.norm_sq() / pb2).exp()
        }
        GasDistribution::TabulatedIsotropic { .. } => mu(dist, p).sqrt(),
    }
}

/// Draws one momentum distributed as `mu`.
pub fn sample<R: Rng + ?Sized>(dist: &GasDistribution, rng: &mut R) -> MomentumVector {
    match dist {
        GasDistribution::MaxwellBoltzmann { mass, p_beta, drift, .. } => {
            let std = p_beta / core::f64::consts::SQRT_2;
            let gx: f64 = rng.sample(StandardNormal);
            let gy: f64 = rng.sample(StandardNormal);
            let gz: f64 = rng.sample(StandardNormal);
            *drift * *mass + MomentumVector::new(gx * std, gy * std, gz * std)
        }
        GasDistribution::TabulatedIsotropic { radii, density } => {
            let u: f64 = rng.gen();
            let r = invert_radial_cdf(radii, density, u);
            let z: f64 = 2.0 * rng.gen::<f64>() - 1.0;
            let phi = 2.0 * core::f64::consts::PI * rng.gen::<f64>();
            let s = (1.0 - z * z).max(0.0).sqrt();
            MomentumVector::new(r * s * phi.cos(), r * s * phi.sin(), r * z)
        }
    }
}

/// Shifts the distribution to a frame moving with velocity `-V` (i.e. the
/// gas drifts by an extra `V`): `mu_V(p) = mu(p - m V)`.
pub fn boost(dist: &GasDistribution, velocity: MomentumVector) -> Result<GasDistribution> {
    match dist {
        GasDistribution::MaxwellBoltzmann { mass, beta, drift, .. } => {
            GasDistribution::maxwell_boltzmann(*mass, *beta, *drift + velocity)
        }
        GasDistribution::TabulatedIsotropic { .. } => {
            Err(Error::UnsupportedVariant("boost of a tabulated distribution"))
        }
    }
}

/// Distribution plus number density.
#[derive(Debug, Clone, PartialEq)]
pub struct GasSpec {
    pub distribution: GasDistribution,
    pub n_gas: f64,
}

impl GasSpec {
    pub fn new(distribution: GasDistribution, n_gas: f64) -> Result<Self> {
        if !(n_gas >= 0.0 && n_gas.is_finite()) {
            return Err(Error::InvalidParameter("number density must be finite and >= 0"));
        }
        Ok(Self { distribution, n_gas })
    }
}

/// `4 pi ∫_{r_0}^{r_k} r^2 mu_r(r) dr` for the piecewise-linear density,
/// exact per segment.
fn radial_mass(radii: &[f64], density: &[f64], up_to: usize) -> f64 {
    let mut acc = 0.0;
    for k in 1..=up_to {
        acc += segment_mass(radii[k - 1], radii[k], density[k - 1], density[k]);
    }
    acc
}

fn segment_mass(r0: f64, r1: f64, w0: f64, w1: f64) -> f64 {
    // mu_r(r) = a + b r on [r0, r1]
    let b = (w1 - w0) / (r1 - r0);
    let a = w0 - b * r0;
    let i3 = (r1.powi(3) - r0.powi(3)) / 3.0;
    let i4 = (r1.powi(4) - r0.powi(4)) / 4.0;
    4.0 * core::f64::consts::PI * (a * i3 + b * i4)
}

fn interp_linear(radii: &[f64], density: &[f64], r: f64) -> f64 {
    let n = radii.len();
    if r < radii[0] || r > radii[n - 1] {
        return 0.0;
    }
    let k = match radii.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
        Ok(i) => return density[i],
        Err(i) => i,
    };
    let t = (r - radii[k - 1]) / (radii[k] - radii[k - 1]);
    density[k - 1] * (1.0 - t) + density[k] * t
}

/// Inverts the radial CDF by segment search plus Newton refinement on the
/// exact per-segment quartic.
fn invert_radial_cdf(radii: &[f64], density: &[f64], u: f64) -> f64 {
    let n = radii.len();
    let mut below = 0.0;
    for k in 1..n {
        let seg = segment_mass(radii[k - 1], radii[k], density[k - 1], density[k]);
        if below + seg >= u || k == n - 1 {
            let target = (u - below).clamp(0.0, seg);
            let (r0, r1) = (radii[k - 1], radii[k]);
            let w0 = density[k - 1];
            let mut r = r0 + (r1 - r0) * if seg > 0.0 { target / seg } else { 0.5 };
            for _ in 0..24 {
                let f = segment_mass(r0, r, w0, interp_linear(radii, density, r)) - target;
                let pdf = 4.0 * core::f64::consts::PI * r * r * interp_linear(radii, density, r);
                if pdf <= 0.0 {
                    break;
                }
                let step = f / pdf;
                r = (r - step).clamp(r0, r1);
                if step.abs() < 1e-14 * (1.0 + r) {
                    break;
                }
            }
            return r;
        }
        below += seg;
    }
    radii[n - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = core::f64::consts::PI;

    fn mb(mass: f64, beta: f64) -> GasDistribution {
        GasDistribution::maxwell_boltzmann(mass, beta, MomentumVector::ZERO).unwrap()
    }

    #[test]
    fn mb_peak_value() {
        // p = m V at the peak -> pi^{-3/2} p_beta^{-3}
        let drift = MomentumVector::new(0.4, -0.2, 0.1);
        let d = GasDistribution::maxwell_boltzmann(1.5, 2.0, drift).unwrap();
        let pb = (2.0 * 1.5 / 2.0_f64).sqrt();
        let peak = mu(&d, drift * 1.5);
        assert!((peak - PI.powf(-1.5) / pb.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn mb_unit_value() {
        // m = 1, beta = 2 (p_beta = 1), |p| = 1 -> pi^{-3/2} e^{-1}
        let d = mb(1.0, 2.0);
        let val = mu(&d, MomentumVector::new(0.0, 0.0, 1.0));
        let expect = PI.powf(-1.5) * (-1.0_f64).exp();
        assert!((val - expect).abs() < 1e-16);
        // = 0.06606641012899384
        assert!((val - 0.06606641012899384).abs() < 1e-15);
    }

    #[test]
    fn mb_normalization_quadrature() {
        let d = mb(0.7, 3.1);
        let radial = crate::quad::GaussLegendre::new(48);
        let sphere = crate::quad::SphereRule::new(8);
        let total = crate::quad::integrate_ball(
            MomentumVector::ZERO,
            d.radial_extent(),
            &radial,
            &sphere,
            |p| crate::Complex::new(mu(&d, p), 0.0),
        );
        assert!((total.re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mb_isotropy_without_drift() {
        let d = mb(1.0, 1.0);
        let p = 1.3;
        // Axis permutations preserve |p|^2 bitwise: exact equality.
        let a = mu(&d, MomentumVector::new(p, 0.0, 0.0));
        assert_eq!(a, mu(&d, MomentumVector::new(0.0, p, 0.0)));
        assert_eq!(a, mu(&d, MomentumVector::new(0.0, 0.0, p)));
        // A generic rotation only reproduces |p|^2 to round-off.
        let b = mu(&d, MomentumVector::new(0.0, p / 2.0_f64.sqrt(), p / 2.0_f64.sqrt()));
        assert!((a - b).abs() <= 4.0 * f64::EPSILON * a);
        assert!(d.is_isotropic());
    }

    #[test]
    fn sampling_moments() {
        let d = mb(1.0, 2.0); // p_beta = 1
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut sum = MomentumVector::ZERO;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let p = sample(&d, &mut rng);
            sum += p;
            sum_sq += p.norm_sq();
        }
        let mean = sum * (1.0 / n as f64);
        // each component: 4 sigma / sqrt(n) with sigma = p_beta / sqrt(2)
        let band = 4.0 * (1.0 / 2.0_f64.sqrt()) / (n as f64).sqrt();
        assert!(mean.px.abs() < band && mean.py.abs() < band && mean.pz.abs() < band);
        // <p^2> = (3/2) p_beta^2
        let msq = sum_sq / n as f64;
        assert!((msq - 1.5).abs() < 0.01 * 1.5);
    }

    #[test]
    fn boosted_sampling_mean() {
        let drift = MomentumVector::new(1.0, 0.0, 0.0);
        let d = GasDistribution::maxwell_boltzmann(1.0, 2.0, drift).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut sum = MomentumVector::ZERO;
        for _ in 0..n {
            sum += sample(&d, &mut rng);
        }
        let mean = sum * (1.0 / n as f64);
        let band = 4.0 * (1.0 / 2.0_f64.sqrt()) / (n as f64).sqrt();
        assert!((mean.px - 1.0).abs() < band);
        assert!(mean.py.abs() < band && mean.pz.abs() < band);
    }

    #[test]
    fn boost_group_properties() {
        let d = mb(1.3, 0.9);
        let vel = MomentumVector::new(0.3, -0.1, 0.2);
        let there = boost(&d, vel).unwrap();
        let back = boost(&there, -vel).unwrap();
        assert_eq!(back, d);
        assert_eq!(boost(&d, MomentumVector::ZERO).unwrap(), d);
        // mu(boost(d, V), p) = mu(d, p - m V) exactly
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = MomentumVector::new(rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0);
            assert_eq!(mu(&there, p), mu(&d, p - vel * 1.3));
        }
    }

    #[test]
    fn tabulated_normalization_and_interp() {
        // triangle density peaking mid-grid
        let pairs = [(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)];
        let d = GasDistribution::tabulated_isotropic(&pairs).unwrap();
        // trapezoid check of 4 pi \int r^2 mu_r dr on a fine resample
        let n = 20_000;
        let h = 2.0 / n as f64;
        let mut acc = crate::quad::CompensatedSum::new();
        for k in 0..=n {
            let r = k as f64 * h;
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc.add(w * h * 4.0 * PI * r * r * mu(&d, MomentumVector::new(r, 0.0, 0.0)));
        }
        assert!((acc.total() - 1.0).abs() < 1e-8);
        assert_eq!(mu(&d, MomentumVector::new(0.0, 0.0, 3.0)), 0.0);
        let m1 = mu(&d, MomentumVector::new(1.0, 0.0, 0.0));
        let mhalf = mu(&d, MomentumVector::new(0.5, 0.0, 0.0));
        assert!((mhalf / m1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tabulated_sampling_matches_density() {
        let pairs = [(0.0, 1.0), (1.0, 1.0), (3.0, 0.0)];
        let d = GasDistribution::tabulated_isotropic(&pairs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 400_000;
        let mut below_1 = 0usize;
        for _ in 0..n {
            if sample(&d, &mut rng).norm() <= 1.0 {
                below_1 += 1;
            }
        }
        let expect = radial_mass(
            match &d {
                GasDistribution::TabulatedIsotropic { radii, .. } => radii,
                _ => unreachable!(),
            },
            match &d {
                GasDistribution::TabulatedIsotropic { density, .. } => density,
                _ => unreachable!(),
            },
            1,
        );
        let frac = below_1 as f64 / n as f64;
        assert!((frac - expect).abs() < 4.0 * (expect * (1.0 - expect) / n as f64).sqrt());
    }

    #[test]
    fn boost_tabulated_unsupported() {
        let d = GasDistribution::tabulated_isotropic(&[(0.0, 1.0), (1.0, 0.0)]).unwrap();
        assert!(matches!(
            boost(&d, MomentumVector::new(1.0, 0.0, 0.0)),
            Err(Error::UnsupportedVariant(_))
        ));
    }
}
