//! Momentum-space collision kernels and solvers for a tracer particle in an
//! ideal gas.
//!
//! The crate evaluates the gain/loss rate densities of the linear Boltzmann
//! collision kernel — the real classical rates and the complex rate coupling
//! momentum coherences — together with the machinery built on top of them:
//!
//! * [`kinematics`]: momentum vectors, mass pairs, relative-momentum algebra;
//! * [`scattering`]: elastic two-body amplitudes and cross sections
//!   (constant s-wave, hard sphere, Gaussian Born);
//! * [`gas`]: gas momentum distributions and sampling;
//! * [`quad`]: Gauss-Legendre rules, compensated sums, convergence control;
//! * [`rates`]: the classical out/in rates, the factorized complex rate and
//!   its jump-function, and the gas-induced energy shift;
//! * [`classical_mc`]: Monte Carlo evolution of the diagonal (classical)
//!   dynamics with deterministic per-trajectory RNG streams;
//! * [`qlbe_grid`]: deterministic evolution of fixed-offset coherence
//!   sectors on a momentum grid, plus the infinite-mass localization rate;
//! * [`limits`]: closed-form limiting results (structure factor, Born jump
//!   rate, thermally averaged forward amplitude, refraction index,
//!   diffusive coefficients).
//!
//! Internal units fix `hbar = k_B = 1`; all quantities are dimensionless.
//! The crate is `no_std` (with `alloc`); everything is pure and re-entrant,
//! so callers may evaluate from any number of worker threads.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod classical_mc;
pub mod error;
pub mod gas;
pub mod kinematics;
pub mod limits;
pub mod qlbe_grid;
pub mod quad;
pub mod rates;
pub mod scattering;

pub use error::{Error, Result};
pub use kinematics::{MassPair, MomentumVector, UnitsConvention};
pub use rates::{CollisionSystem, ComplexRate, QuadratureBudget};

/// Complex scalar used throughout (amplitudes, coherences, complex rates).
pub type Complex = num_complex::Complex64;
