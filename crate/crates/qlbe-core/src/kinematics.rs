//! Units convention, momentum vectors, and relative-momentum kinematics.
//!
//! Internal units fix `hbar = k_B = 1`. The relative momentum of a gas
//! particle with momentum `p` and a tracer with momentum `P` is
//! `rel(p, P) = (m*/m) p - (m*/M) P` with `m* = m M / (M + m)`; every rate
//! kernel in the crate is built from this map.

use crate::error::{Error, Result};
use alloc::string::String;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use num_traits::Float as _;

/// Default tolerance below which a decomposition axis counts as zero.
pub const EPS_AXIS: f64 = 1e-12;

/// A 3-vector of momentum components in internal units (`hbar = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MomentumVector {
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl MomentumVector {
    pub const ZERO: Self = Self { px: 0.0, py: 0.0, pz: 0.0 };

    /// Builds a vector, rejecting non-finite components.
    pub fn new(px: f64, py: f64, pz: f64) -> Self {
        debug_assert!(
            px.is_finite() && py.is_finite() && pz.is_finite(),
            "momentum components must be finite"
        );
        Self { px, py, pz }
    }

    /// Checked constructor for values crossing an API boundary.
    pub fn try_new(px: f64, py: f64, pz: f64) -> Result<Self> {
        if px.is_finite() && py.is_finite() && pz.is_finite() {
            Ok(Self { px, py, pz })
        } else {
            Err(Error::InvalidParameter("momentum component not finite"))
        }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.px * other.px + self.py * other.py + self.pz * other.pz
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn cross(self, other: Self) -> Self {
        Self {
            px: self.py * other.pz - self.pz * other.py,
            py: self.pz * other.px - self.px * other.pz,
            pz: self.px * other.py - self.py * other.px,
        }
    }

    /// Unit vector along `self`; errors when the norm is below `EPS_AXIS`.
    pub fn unit(self) -> Result<Self> {
        let n = self.norm();
        if n < EPS_AXIS {
            return Err(Error::ZeroAxis);
        }
        Ok(self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.pz.is_finite()
    }
}

impl Add for MomentumVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { px: self.px + o.px, py: self.py + o.py, pz: self.pz + o.pz }
    }
}

impl AddAssign for MomentumVector {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for MomentumVector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { px: self.px - o.px, py: self.py - o.py, pz: self.pz - o.pz }
    }
}

impl SubAssign for MomentumVector {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl Mul<f64> for MomentumVector {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self { px: self.px * s, py: self.py * s, pz: self.pz * s }
    }
}

impl Mul<MomentumVector> for f64 {
    type Output = MomentumVector;
    fn mul(self, v: MomentumVector) -> MomentumVector {
        v * self
    }
}

impl Neg for MomentumVector {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

/// Gas mass, tracer mass, and the cached reduced mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassPair {
    gas_mass: f64,
    tracer_mass: f64,
    reduced: f64,
}

impl MassPair {
    /// `m` is the gas-particle mass, `tracer` the tracer mass; both > 0.
    pub fn new(gas_mass: f64, tracer_mass: f64) -> Result<Self> {
        if !(gas_mass > 0.0 && gas_mass.is_finite()) {
            return Err(Error::InvalidParameter("gas mass must be positive and finite"));
        }
        if !(tracer_mass > 0.0 && tracer_mass.is_finite()) {
            return Err(Error::InvalidParameter("tracer mass must be positive and finite"));
        }
        let reduced = gas_mass * tracer_mass / (gas_mass + tracer_mass);
        Ok(Self { gas_mass, tracer_mass, reduced })
    }

    pub fn gas_mass(&self) -> f64 {
        self.gas_mass
    }

    pub fn tracer_mass(&self) -> f64 {
        self.tracer_mass
    }

    /// Reduced mass `m M / (M + m)`.
    pub fn reduced(&self) -> f64 {
        self.reduced
    }

    /// Gas-to-tracer mass ratio `m / M`.
    pub fn mass_ratio(&self) -> f64 {
        self.gas_mass / self.tracer_mass
    }
}

/// The fixed internal units, with free-form scale hints for postprocessing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnitsConvention {
    pub mass_unit_hint: String,
    pub momentum_unit_hint: String,
}

impl UnitsConvention {
    pub const HBAR: f64 = 1.0;
    pub const KB: f64 = 1.0;
}

/// Relative momentum `(m*/m) p - (m*/M) P` of the gas/tracer pair.
#[inline]
pub fn rel(p: MomentumVector, tracer_p: MomentumVector, masses: &MassPair) -> MomentumVector {
    let ms = masses.reduced();
    p * (ms / masses.gas_mass()) - tracer_p * (ms / masses.tracer_mass())
}

/// Splits `v` into components parallel and perpendicular to `axis`.
pub fn decompose_parallel(
    v: MomentumVector,
    axis: MomentumVector,
) -> Result<(MomentumVector, MomentumVector)> {
    let n2 = axis.norm_sq();
    if n2.sqrt() < EPS_AXIS {
        return Err(Error::ZeroAxis);
    }
    let par = axis * (v.dot(axis) / n2);
    Ok((par, v - par))
}

/// Deterministic right-handed orthonormal pair spanning the plane
/// perpendicular to `axis`: `{e1, e2, axis/|axis|}` is right-handed.
///
/// Construction: Gram-Schmidt against the canonical basis vector least
/// aligned with `axis`, so node placement in plane quadratures is
/// reproducible run to run.
pub fn orthonormal_frame(axis: MomentumVector) -> Result<(MomentumVector, MomentumVector)> {
    let n = axis.norm();
    if n < EPS_AXIS {
        return Err(Error::ZeroAxis);
    }
    let u = axis * (1.0 / n);
    let (ax, ay, az) = (u.px.abs(), u.py.abs(), u.pz.abs());
    let seed = if ax <= ay && ax <= az {
        MomentumVector::new(1.0, 0.0, 0.0)
    } else if ay <= az {
        MomentumVector::new(0.0, 1.0, 0.0)
    } else {
        MomentumVector::new(0.0, 0.0, 1.0)
    };
    let e1_raw = seed - u * seed.dot(u);
    let e1 = e1_raw * (1.0 / e1_raw.norm());
    let e2 = u.cross(e1);
    Ok((e2.cross(u), e2)) // re-orthogonalize e1 = e2 x u for the last ulps
}
