//! Monte Carlo simulation of the classical linear Boltzmann dynamics: the
//! diagonal sector of the master equation, evolved as an ensemble of tracer
//! momenta undergoing elastic collisions with the gas.
//!
//! Per step and trajectory, a collision fires with probability
//! `1 - exp(-R(P) dt)` where `R = m_out_cl(P)`; the cap `dt R <= 0.1` is
//! enforced, never hoped. On collision the gas momentum is drawn from the
//! flux-weighted density `mu(p0) |rel(p0, P)| sigma_tot(rel)` by rejection
//! against the envelope `mu x [(m*/m)|p0| + (m*/M)|P|] sigma_max`; envelope
//! violations abort. The outgoing direction follows the normalized
//! differential cross section; the tracer update `P + rel - |rel| n`
//! conserves the relative speed exactly.
//!
//! Determinism: trajectory `i` owns ChaCha stream `i` seeded by the master
//! seed, with its word position stored in the trajectory state. Results are
//! bit-identical for any partitioning of trajectories across workers, and
//! moment reductions run in index order with compensated summation.

use crate::error::{Error, Result};
use crate::gas;
use crate::kinematics::{rel, MomentumVector};
use crate::quad::CompensatedSum;
use crate::rates::CollisionSystem;
use crate::scattering::{self, ScatteringModel};
use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use num_traits::Float as _;

/// Cap on `dt * max_rate` used by the adaptive stepper.
pub const DT_RATE_TARGET: f64 = 0.05;

/// Hard limit above which a step errors out.
pub const DT_RATE_LIMIT: f64 = 0.1;

/// One tracer trajectory: momentum, collision tally, RNG stream position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    pub momentum: MomentumVector,
    pub collisions: u64,
    word_pos: u128,
}

/// Ensemble of classical tracer momenta with full seed lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub time: f64,
    pub master_seed: u64,
    states: Vec<TrajectoryState>,
}

impl TrajectoryEnsemble {
    /// All trajectories start at the listed momenta, stream `i` per index.
    pub fn from_initial(momenta: Vec<MomentumVector>, master_seed: u64) -> Self {
        let states = momenta
            .into_iter()
            .map(|momentum| TrajectoryState { momentum, collisions: 0, word_pos: 0 })
            .collect();
        Self { time: 0.0, master_seed, states }
    }

    /// `n` trajectories all starting at `momentum`.
    pub fn uniform(momentum: MomentumVector, n: usize, master_seed: u64) -> Self {
        Self::from_initial(vec![momentum; n], master_seed)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[TrajectoryState] {
        &self.states
    }

    /// Mutable trajectory slice for external (parallel) drivers. Splitting
    /// this slice across workers does not change results: each state owns
    /// its RNG stream.
    pub fn states_mut(&mut self) -> &mut [TrajectoryState] {
        &mut self.states
    }

    pub fn momenta(&self) -> impl Iterator<Item = MomentumVector> + '_ {
        self.states.iter().map(|s| s.momentum)
    }

    /// Index-order moments with compensated sums.
    pub fn moments(&self) -> EnsembleMoments {
        let mut sx = CompensatedSum::new();
        let mut sy = CompensatedSum::new();
        let mut sz = CompensatedSum::new();
        let mut s2 = CompensatedSum::new();
        let mut sc = CompensatedSum::new();
        for s in &self.states {
            sx.add(s.momentum.px);
            sy.add(s.momentum.py);
            sz.add(s.momentum.pz);
            s2.add(s.momentum.norm_sq());
            sc.add(s.collisions as f64);
        }
        let n = self.states.len().max(1) as f64;
        EnsembleMoments {
            mean_momentum: MomentumVector::new(sx.total() / n, sy.total() / n, sz.total() / n),
            mean_momentum_sq: s2.total() / n,
            mean_collisions: sc.total() / n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMoments {
    pub mean_momentum: MomentumVector,
    pub mean_momentum_sq: f64,
    pub mean_collisions: f64,
}

/// One resolved collision, exposed for kinematic bookkeeping tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionEvent {
    pub gas_momentum: MomentumVector,
    pub direction: MomentumVector,
    pub before: MomentumVector,
    pub after: MomentumVector,
}

impl CollisionEvent {
    /// Post-collision gas momentum (momentum conservation).
    pub fn gas_momentum_after(&self) -> MomentumVector {
        self.gas_momentum - (self.after - self.before)
    }
}

/// Moments record emitted per output interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRecord {
    pub time: f64,
    pub mean_momentum: MomentumVector,
    /// Mean kinetic energy `<P^2> / 2M`.
    pub kinetic_energy: f64,
    pub mean_momentum_sq: f64,
    pub mean_collisions: f64,
}

/// Normalized speed histogram (fraction of trajectories per `|P|` bin).
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedHistogram {
    pub time: f64,
    /// `bins + 1` edges, uniform from 0 to the configured maximum.
    pub edges: Vec<f64>,
    pub weights: Vec<f64>,
    /// Fraction of trajectories above the last edge.
    pub overflow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalizeOptions {
    pub t_end: f64,
    pub n_output: usize,
    pub hist_bins: usize,
    /// Histogram upper edge; defaults to 4x the tracer thermal momentum.
    pub hist_max: Option<f64>,
}

impl ThermalizeOptions {
    pub fn new(t_end: f64) -> Self {
        Self { t_end, n_output: 40, hist_bins: 32, hist_max: None }
    }
}

/// Time series emitted by [`McEngine::thermalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalizationSeries {
    pub moments: Vec<MomentRecord>,
    pub histograms: Vec<SpeedHistogram>,
}

/// Interpolated `m_out_cl(|P - M V|)` with an exact fallback beyond the
/// tabulated reach. The gas-frame substitution makes the rate a function of
/// the single scalar `|P - M V|` for any drifting distribution.
#[derive(Debug, Clone)]
pub struct RateTable {
    drift_momentum: MomentumVector, // M V
    u_max: f64,
    values: Vec<f64>,
}

impl RateTable {
    pub fn build(sys: &CollisionSystem, u_max: f64, nodes: usize) -> Result<Self> {
        let masses = sys.masses();
        let dist = &sys.gas().distribution;
        let velocity = dist.mean_momentum() * (1.0 / masses.gas_mass());
        let drift_momentum = velocity * masses.tracer_mass();
        let rest = sys.boosted(-velocity)?;
        let n = nodes.max(16);
        let mut values = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let u = u_max * k as f64 / n as f64;
            values.push(rest.m_out_cl(MomentumVector::new(0.0, 0.0, u))?);
        }
        Ok(Self { drift_momentum, u_max, values })
    }

    /// Rate at tracer momentum `p`, cubic interpolation inside the table.
    pub fn rate(&self, sys: &CollisionSystem, p: MomentumVector) -> Result<f64> {
        let u = (p - self.drift_momentum).norm();
        if u > self.u_max {
            // Slow exact path: rare excursions beyond the tabulated reach.
            return sys.m_out_cl(p);
        }
        let n = self.values.len() - 1;
        let x = u / self.u_max * n as f64;
        let i = (x as usize).min(n - 1);
        let t = x - i as f64;
        // Catmull-Rom with clamped ends.
        let im1 = if i == 0 { 0 } else { i - 1 };
        let ip2 = (i + 2).min(n);
        let (y0, y1, y2, y3) =
            (self.values[im1], self.values[i], self.values[i + 1], self.values[ip2]);
        let a = -0.5 * y0 + 1.5 * y1 - 1.5 * y2 + 0.5 * y3;
        let b = y0 - 2.5 * y1 + 2.0 * y2 - 0.5 * y3;
        let c = -0.5 * y0 + 0.5 * y2;
        Ok(((a * t + b) * t + c) * t + y1)
    }
}

/// Cumulative table for hard-sphere direction sampling at one (quantized)
/// relative momentum: inverse-CDF on `cos(theta)`.
#[derive(Debug, Clone)]
struct DirectionTable {
    cos_nodes: Vec<f64>,
    cdf: Vec<f64>,
}

const DIRECTION_NODES: usize = 512;

impl DirectionTable {
    fn build(model: &ScatteringModel, p_rel: f64) -> Result<Self> {
        let mut cos_nodes = Vec::with_capacity(DIRECTION_NODES + 1);
        let mut pdf = Vec::with_capacity(DIRECTION_NODES + 1);
        let p_i = MomentumVector::new(0.0, 0.0, p_rel);
        for k in 0..=DIRECTION_NODES {
            let ct = -1.0 + 2.0 * k as f64 / DIRECTION_NODES as f64;
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            let p_f = MomentumVector::new(p_rel * st, 0.0, p_rel * ct);
            cos_nodes.push(ct);
            pdf.push(scattering::sigma_diff(model, p_f, p_i)?);
        }
        let mut cdf = Vec::with_capacity(DIRECTION_NODES + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for k in 1..=DIRECTION_NODES {
            let h = cos_nodes[k] - cos_nodes[k - 1];
            acc += 0.5 * h * (pdf[k] + pdf[k - 1]);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::InvalidParameter("differential cross section vanished"));
        }
        for v in cdf.iter_mut() {
            *v /= acc;
        }
        Ok(Self { cos_nodes, cdf })
    }

    fn sample_cos(&self, u: f64) -> f64 {
        let k = match self.cdf.binary_search_by(|x| x.partial_cmp(&u).unwrap()) {
            Ok(i) => return self.cos_nodes[i],
            Err(i) => i.clamp(1, self.cdf.len() - 1),
        };
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.cos_nodes[k - 1] + t * (self.cos_nodes[k] - self.cos_nodes[k - 1])
    }
}

/// Stepping engine: collision system plus the precomputed rate table,
/// envelope bound, and per-model direction samplers.
#[derive(Debug, Clone)]
pub struct McEngine {
    sys: CollisionSystem,
    rate_table: RateTable,
    sigma_max: f64,
    /// Hard-sphere direction tables keyed by the quantized relative momentum.
    direction_cache: BTreeMap<u64, DirectionTable>,
}

/// Log-quantization density of |p_rel| for the hard-sphere direction
/// tables: tables are built at momenta within 0.05% of the requested one.
const DIR_QUANT_BITS: f64 = 2048.0;

impl McEngine {
    /// `p_reach`: largest tracer momentum (relative to the gas-frame drift)
    /// the run is expected to visit; sizes the rate table and the envelope.
    pub fn new(sys: &CollisionSystem, p_reach: f64) -> Result<Self> {
        let masses = sys.masses();
        let dist = &sys.gas().distribution;
        let u_max = p_reach.max(4.0 * dist.width_scale());
        let gas_reach = dist.mean_momentum().norm() + dist.radial_extent();
        let tracer_reach = u_max + dist.mean_momentum().norm() * masses.tracer_mass() / masses.gas_mass();
        let p_rel_max = (masses.reduced() / masses.gas_mass()) * gas_reach
            + (masses.reduced() / masses.tracer_mass()) * tracer_reach
            + dist.width_scale();
        let sigma_max = scattering::sigma_tot_upper_bound(sys.model(), p_rel_max)?;
        let rate_table = RateTable::build(sys, u_max, 512)?;
        Ok(Self { sys: sys.clone(), rate_table, sigma_max, direction_cache: BTreeMap::new() })
    }

    pub fn system(&self) -> &CollisionSystem {
        &self.sys
    }

    /// Collision rate `m_out_cl(P)` from the table.
    pub fn rate(&self, momentum: MomentumVector) -> Result<f64> {
        self.rate_table.rate(&self.sys, momentum)
    }

    pub fn max_rate(&self, ens: &TrajectoryEnsemble) -> Result<f64> {
        let mut max = 0.0_f64;
        for s in ens.states() {
            max = max.max(self.rate(s.momentum)?);
        }
        Ok(max)
    }

    /// Advances one trajectory by `dt`, returning the collision event if one
    /// fired. Bit-deterministic given `(master_seed, stream)`.
    pub fn advance_state(
        &mut self,
        master_seed: u64,
        stream: u64,
        state: &mut TrajectoryState,
        dt: f64,
    ) -> Result<Option<CollisionEvent>> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("dt must be positive"));
        }
        let rate = self.rate(state.momentum)?;
        let dt_rate = dt * rate;
        if dt_rate > DT_RATE_LIMIT {
            return Err(Error::StepTooLarge { dt_rate });
        }
        if self.sys.gas().n_gas == 0.0 || rate == 0.0 {
            return Ok(None);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream);
        rng.set_word_pos(state.word_pos);
        let fired = rng.gen::<f64>() < 1.0 - (-dt_rate).exp();
        let event = if fired {
            let ev = self.collide(state.momentum, &mut rng)?;
            state.momentum = ev.after;
            state.collisions += 1;
            Some(ev)
        } else {
            None
        };
        state.word_pos = rng.get_word_pos();
        Ok(event)
    }

    /// Flux-weighted collision: sample the gas momentum, then the outgoing
    /// direction, and apply the elastic momentum transfer.
    fn collide(&mut self, momentum: MomentumVector, rng: &mut ChaCha8Rng) -> Result<CollisionEvent> {
        let masses = *self.sys.masses();
        let dist = self.sys.gas().distribution.clone();
        let a = masses.reduced() / masses.gas_mass();
        let bound_p = (masses.reduced() / masses.tracer_mass()) * momentum.norm();
        let mut gas_momentum = MomentumVector::ZERO;
        let mut r_in = MomentumVector::ZERO;
        let mut accepted = false;
        for _ in 0..1_000_000 {
            let p0 = gas::sample(&dist, rng);
            let r = rel(p0, momentum, &masses);
            let flux = r.norm() * scattering::sigma_tot(self.sys.model(), r.norm())?;
            let envelope = (a * p0.norm() + bound_p) * self.sigma_max;
            let ratio = if envelope > 0.0 { flux / envelope } else { 0.0 };
            if ratio > 1.0 + 1e-9 {
                return Err(Error::EnvelopeExceeded { ratio });
            }
            if rng.gen::<f64>() < ratio {
                gas_momentum = p0;
                r_in = r;
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::EnvelopeExceeded { ratio: 0.0 });
        }
        let direction = self.sample_direction(r_in, rng)?;
        let after = momentum + r_in - direction * r_in.norm();
        Ok(CollisionEvent { gas_momentum, direction, before: momentum, after })
    }

    /// Outgoing relative direction from the normalized differential cross
    /// section at the incoming relative momentum.
    fn sample_direction(
        &mut self,
        r_in: MomentumVector,
        rng: &mut ChaCha8Rng,
    ) -> Result<MomentumVector> {
        let p = r_in.norm();
        match self.sys.model() {
            ScatteringModel::ConstantSWave { .. } => Ok(uniform_direction(rng)),
            ScatteringModel::BornGaussian { width, .. } => {
                // pdf(cos) ~ exp(-(y/2)(1 - cos)), y = 4 p^2 s^2: exact inverse CDF.
                let y = 4.0 * p * p * width * width;
                let u: f64 = rng.gen();
                let ct = if y < 1e-12 {
                    1.0 - 2.0 * u
                } else {
                    let t = -(1.0 - u * (1.0 - (-y).exp())).ln();
                    1.0 - 2.0 * t / y
                };
                let phi = 2.0 * core::f64::consts::PI * rng.gen::<f64>();
                direction_about(r_in, ct.clamp(-1.0, 1.0), phi)
            }
            ScatteringModel::HardSphere { .. } => {
                let key = quantize_momentum(p);
                if !self.direction_cache.contains_key(&key) {
                    let table = DirectionTable::build(self.sys.model(), dequantize_momentum(key))?;
                    self.direction_cache.insert(key, table);
                }
                let ct = self.direction_cache[&key].sample_cos(rng.gen());
                let phi = 2.0 * core::f64::consts::PI * rng.gen::<f64>();
                direction_about(r_in, ct.clamp(-1.0, 1.0), phi)
            }
        }
    }

    /// One ensemble step; trajectories advance independently in index order.
    pub fn step(&mut self, ens: &mut TrajectoryEnsemble, dt: f64) -> Result<()> {
        let seed = ens.master_seed;
        for (idx, state) in ens.states.iter_mut().enumerate() {
            self.advance_state(seed, idx as u64, state, dt)?;
        }
        ens.time += dt;
        Ok(())
    }

    /// Repeated stepping with `dt = 0.05 / max_rate`, emitting moments and a
    /// speed histogram at `n_output` evenly spaced times.
    pub fn thermalize(
        &mut self,
        mut ens: TrajectoryEnsemble,
        opts: &ThermalizeOptions,
    ) -> Result<(ThermalizationSeries, TrajectoryEnsemble)> {
        if !(opts.t_end > 0.0) {
            return Err(Error::InvalidParameter("t_end must be positive"));
        }
        let hist_max = opts.hist_max.unwrap_or_else(|| default_hist_max(&self.sys));
        let n_out = opts.n_output.max(1);
        let mut moments = Vec::with_capacity(n_out + 1);
        let mut histograms = Vec::with_capacity(n_out + 1);
        record(&ens, &self.sys, hist_max, opts.hist_bins, &mut moments, &mut histograms);
        let t0 = ens.time;
        for k in 1..=n_out {
            let target = t0 + opts.t_end * k as f64 / n_out as f64;
            while ens.time < target - 1e-12 * opts.t_end {
                let max_rate = self.max_rate(&ens)?;
                let dt_cap =
                    if max_rate > 0.0 { DT_RATE_TARGET / max_rate } else { target - ens.time };
                let dt = dt_cap.min(target - ens.time);
                self.step(&mut ens, dt)?;
            }
            record(&ens, &self.sys, hist_max, opts.hist_bins, &mut moments, &mut histograms);
        }
        Ok((ThermalizationSeries { moments, histograms }, ens))
    }
}

fn default_hist_max(sys: &CollisionSystem) -> f64 {
    let dist = &sys.gas().distribution;
    let masses = sys.masses();
    // 4x the tracer thermal momentum sqrt(2 M / beta) for an MB gas,
    // falling back to the mass-scaled gas width.
    let scale = dist.width_scale() * (masses.tracer_mass() / masses.gas_mass()).sqrt();
    4.0 * scale
}

fn record(
    ens: &TrajectoryEnsemble,
    sys: &CollisionSystem,
    hist_max: f64,
    bins: usize,
    moments: &mut Vec<MomentRecord>,
    histograms: &mut Vec<SpeedHistogram>,
) {
    let m = ens.moments();
    moments.push(MomentRecord {
        time: ens.time,
        mean_momentum: m.mean_momentum,
        kinetic_energy: m.mean_momentum_sq / (2.0 * sys.masses().tracer_mass()),
        mean_momentum_sq: m.mean_momentum_sq,
        mean_collisions: m.mean_collisions,
    });
    histograms.push(speed_histogram(ens, hist_max, bins));
}

/// Isotropized speed histogram of the ensemble.
pub fn speed_histogram(ens: &TrajectoryEnsemble, hist_max: f64, bins: usize) -> SpeedHistogram {
    let bins = bins.max(1);
    let mut counts = vec![0u64; bins];
    let mut overflow = 0u64;
    for s in ens.states() {
        let v = s.momentum.norm();
        if v >= hist_max {
            overflow += 1;
        } else {
            counts[(v / hist_max * bins as f64) as usize] += 1;
        }
    }
    let n = ens.len().max(1) as f64;
    let edges = (0..=bins).map(|k| hist_max * k as f64 / bins as f64).collect();
    SpeedHistogram {
        time: ens.time,
        edges,
        weights: counts.into_iter().map(|c| c as f64 / n).collect(),
        overflow: overflow as f64 / n,
    }
}

/// Drift / diffusion coefficients extracted from a thermalization series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftDiffusionFit {
    /// Exponential decay rate of the mean momentum.
    pub eta_hat: f64,
    /// From the stationary variance: `eta_hat * Var_component`.
    pub dpp_stationary: f64,
    /// From the initial growth of the total variance (slope / 6).
    pub dpp_short_time: f64,
    /// e-folds of mean-momentum decay covered by the fit window.
    pub efolds: f64,
}

/// Fits `<P>(t) = P0 exp(-eta t)` and extracts `D_pp` from the stationary
/// variance and the short-time variance growth.
///
/// Requires a series with a nonzero initial mean momentum whose decay covers
/// at least two e-folds above the late-time noise floor.
pub fn fit_drift_diffusion(series: &[MomentRecord]) -> Result<DriftDiffusionFit> {
    if series.len() < 6 {
        return Err(Error::FitIllConditioned { efolds: 0.0 });
    }
    let p0 = series[0].mean_momentum;
    let p0_norm = p0.norm();
    if !(p0_norm > 0.0) {
        return Err(Error::InvalidParameter("drift fit needs a nonzero initial mean momentum"));
    }
    let dir = p0 * (1.0 / p0_norm);
    // Late-time noise floor from the stationary tail (last quarter).
    let tail_start = series.len() - series.len() / 4;
    let mut noise = 0.0_f64;
    for r in &series[tail_start..] {
        noise = noise.max(r.mean_momentum.dot(dir).abs());
    }
    let floor = (4.0 * noise).max(p0_norm * 1e-6);
    // Least squares on ln s(t) over the usable window.
    let mut n = 0.0;
    let (mut st, mut ss, mut stt, mut sts) = (0.0, 0.0, 0.0, 0.0);
    let mut last_kept = 0.0_f64;
    for r in series {
        let s = r.mean_momentum.dot(dir);
        if s <= floor {
            break;
        }
        let (t, ls) = (r.time - series[0].time, s.ln());
        n += 1.0;
        st += t;
        ss += ls;
        stt += t * t;
        sts += t * ls;
        last_kept = s;
    }
    if n < 3.0 {
        return Err(Error::FitIllConditioned { efolds: 0.0 });
    }
    let efolds = (p0_norm / last_kept).ln();
    if efolds < 2.0 {
        return Err(Error::FitIllConditioned { efolds });
    }
    let denom = n * stt - st * st;
    if denom <= 0.0 {
        return Err(Error::FitIllConditioned { efolds });
    }
    let slope = (n * sts - st * ss) / denom;
    let eta_hat = -slope;
    if !(eta_hat > 0.0) {
        return Err(Error::FitIllConditioned { efolds });
    }
    // Stationary variance per component from the tail.
    let mut var_acc = CompensatedSum::new();
    let mut n_tail = 0.0;
    for r in &series[tail_start..] {
        let var_total = r.mean_momentum_sq - r.mean_momentum.norm_sq();
        var_acc.add(var_total / 3.0);
        n_tail += 1.0;
    }
    let var_component = var_acc.total() / n_tail;
    let dpp_stationary = eta_hat * var_component;
    // Short-time variance growth: least squares over t <= 0.5 / eta.
    let (mut n2, mut st2, mut sv2, mut stt2, mut stv2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in series {
        let t = r.time - series[0].time;
        if t > 0.5 / eta_hat {
            break;
        }
        let var_total = r.mean_momentum_sq - r.mean_momentum.norm_sq();
        n2 += 1.0;
        st2 += t;
        sv2 += var_total;
        stt2 += t * t;
        stv2 += t * var_total;
    }
    let dpp_short_time = if n2 >= 3.0 && n2 * stt2 - st2 * st2 > 0.0 {
        ((n2 * stv2 - st2 * sv2) / (n2 * stt2 - st2 * st2)) / 6.0
    } else {
        f64::NAN
    };
    Ok(DriftDiffusionFit { eta_hat, dpp_stationary, dpp_short_time, efolds })
}

fn uniform_direction(rng: &mut ChaCha8Rng) -> MomentumVector {
    let z: f64 = 2.0 * rng.gen::<f64>() - 1.0;
    let phi = 2.0 * core::f64::consts::PI * rng.gen::<f64>();
    let s = (1.0 - z * z).max(0.0).sqrt();
    MomentumVector::new(s * phi.cos(), s * phi.sin(), z)
}

/// Unit vector at polar angle `acos(ct)` from `axis`, azimuth `phi` in the
/// deterministic frame of [`crate::kinematics::orthonormal_frame`].
fn direction_about(axis: MomentumVector, ct: f64, phi: f64) -> Result<MomentumVector> {
    let u = axis.unit()?;
    let (e1, e2) = crate::kinematics::orthonormal_frame(u)?;
    let s = (1.0 - ct * ct).max(0.0).sqrt();
    Ok(u * ct + e1 * (s * phi.cos()) + e2 * (s * phi.sin()))
}

fn quantize_momentum(p: f64) -> u64 {
    (p.max(1e-300).ln() * DIR_QUANT_BITS).round() as i64 as u64
}

fn dequantize_momentum(key: u64) -> f64 {
    ((key as i64) as f64 / DIR_QUANT_BITS).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::{GasDistribution, GasSpec};
    use crate::kinematics::MassPair;
    use crate::rates::QuadratureBudget;
    use crate::Complex;

    fn test_system(model: ScatteringModel, mass_ratio: f64, n_gas: f64) -> CollisionSystem {
        let masses = MassPair::new(1.0, 1.0 / mass_ratio).unwrap();
        let dist = GasDistribution::maxwell_boltzmann(1.0, 2.0, MomentumVector::ZERO).unwrap();
        let gas = GasSpec::new(dist, n_gas).unwrap();
        CollisionSystem::new(masses, gas, model, QuadratureBudget::default()).unwrap()
    }

    #[test]
    fn zero_density_leaves_ensemble_unchanged() {
        let sys = test_system(ScatteringModel::constant_s_wave(Complex::new(0.0, 0.3)), 0.5, 0.0);
        let mut engine = McEngine::new(&sys, 10.0).unwrap();
        let mut ens = TrajectoryEnsemble::uniform(MomentumVector::new(1.0, 0.0, 0.0), 64, 7);
        let before = ens.clone();
        engine.step(&mut ens, 0.5).unwrap();
        assert_eq!(ens.states(), before.states());
        assert_eq!(ens.time, 0.5);
    }

    #[test]
    fn rate_table_matches_direct_evaluation() {
        let sys = test_system(ScatteringModel::constant_s_wave(Complex::new(0.0, 0.3)), 0.2, 0.8);
        let engine = McEngine::new(&sys, 12.0).unwrap();
        for &u in &[0.0, 0.3, 1.7, 5.2, 11.0] {
            let p = MomentumVector::new(0.0, u, 0.0);
            let exact = sys.m_out_cl(p).unwrap();
            let table = engine.rate(p).unwrap();
            assert!((table - exact).abs() < 1e-8 * exact, "u = {u}");
        }
    }

    #[test]
    fn collision_conserves_relative_speed() {
        for model in [
            ScatteringModel::constant_s_wave(Complex::new(0.0, 0.3)),
            ScatteringModel::hard_sphere(1.0, 64).unwrap(),
            ScatteringModel::born_gaussian(0.4, 0.8, MassPair::new(1.0, 2.5).unwrap()).unwrap(),
        ] {
            let sys = test_system(model, 0.4, 1.0);
            let mut engine = McEngine::new(&sys, 10.0).unwrap();
            let masses = *sys.masses();
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            for _ in 0..200 {
                let p = MomentumVector::new(rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>(), 0.7);
                let ev = engine.collide(p, &mut rng).unwrap();
                let r_before = rel(ev.gas_momentum, ev.before, &masses).norm();
                let r_after = rel(ev.gas_momentum_after(), ev.after, &masses).norm();
                assert!(
                    (r_before - r_after).abs() <= 1e-10 * r_before,
                    "relative speed drifted: {r_before} -> {r_after}"
                );
                // total momentum conservation by construction
                let total_before = ev.gas_momentum + ev.before;
                let total_after = ev.gas_momentum_after() + ev.after;
                assert!((total_before - total_after).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn determinism_bitwise_and_partition_invariance() {
        let sys = test_system(ScatteringModel::constant_s_wave(Complex::new(0.0, 0.25)), 0.3, 1.0);
        let mut a = McEngine::new(&sys, 10.0).unwrap();
        let mut b = McEngine::new(&sys, 10.0).unwrap();
        let ens0 = TrajectoryEnsemble::uniform(MomentumVector::new(2.0, 0.0, 0.0), 128, 99);

        let mut e1 = ens0.clone();
        for _ in 0..20 {
            a.step(&mut e1, 0.02).unwrap();
        }
        // Same stepping, but trajectories advanced in two chunks in swapped
        // order, as a parallel driver would.
        let mut e2 = ens0.clone();
        for _ in 0..20 {
            let seed = e2.master_seed;
            let (lo, hi) = e2.states_mut().split_at_mut(37);
            for (i, s) in hi.iter_mut().enumerate() {
                b.advance_state(seed, (37 + i) as u64, s, 0.02).unwrap();
            }
            for (i, s) in lo.iter_mut().enumerate() {
                b.advance_state(seed, i as u64, s, 0.02).unwrap();
            }
            e2.time += 0.02;
        }
        assert_eq!(e1, e2);
    }

    #[test]
    fn step_too_large_rejected() {
        let sys = test_system(ScatteringModel::constant_s_wave(Complex::new(0.0, 3.0)), 0.5, 5.0);
        let mut engine = McEngine::new(&sys, 10.0).unwrap();
        let mut ens = TrajectoryEnsemble::uniform(MomentumVector::ZERO, 4, 1);
        let rate = engine.rate(MomentumVector::ZERO).unwrap();
        let dt = 0.2 / rate;
        assert!(matches!(engine.step(&mut ens, dt), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn isotropic_start_keeps_zero_mean() {
        let sys = test_system(ScatteringModel::constant_s_wave(Complex::new(0.0, 0.3)), 0.1, 1.0);
        let mut engine = McEngine::new(&sys, 10.0).unwrap();
        let ens = TrajectoryEnsemble::uniform(MomentumVector::ZERO, 2000, 5);
        let (series, _) = engine
            .thermalize(
                ens,
                &ThermalizeOptions { t_end: 3.0, n_output: 6, hist_bins: 16, hist_max: None },
            )
            .unwrap();
        // 4 standard errors of the per-component mean, sigma <= tracer thermal width
        let p_th = (2.0 * 10.0 / 2.0_f64).sqrt();
        let band = 4.0 * p_th / (2000.0_f64).sqrt();
        for r in &series.moments {
            assert!(r.mean_momentum.norm() < band * 1.8, "t = {}: {:?}", r.time, r.mean_momentum);
        }
    }

    #[test]
    fn ou_fit_recovers_known_coefficients() {
        // Synthetic Ornstein-Uhlenbeck ensemble with known eta, Dpp.
        let (eta, dpp) = (0.8, 1.6);
        let n = 4000;
        let dt = 0.05;
        let steps = 240;
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut momenta = vec![MomentumVector::new(6.0, 0.0, 0.0); n];
        let mut series = Vec::new();
        let push = |mom: &Vec<MomentumVector>, t: f64, series: &mut Vec<MomentRecord>| {
            let mut m = MomentumVector::ZERO;
            let mut m2 = 0.0;
            for p in mom {
                m += *p;
                m2 += p.norm_sq();
            }
            let nn = mom.len() as f64;
            series.push(MomentRecord {
                time: t,
                mean_momentum: m * (1.0 / nn),
                kinetic_energy: m2 / nn / 2.0,
                mean_momentum_sq: m2 / nn,
                mean_collisions: 0.0,
            });
        };
        push(&momenta, 0.0, &mut series);
        let decay = (-eta * dt).exp();
        let kick = (dpp / eta * (1.0 - decay * decay)).sqrt();
        for k in 1..=steps {
            for p in momenta.iter_mut() {
                let gx: f64 = rng.sample(rand_distr::StandardNormal);
                let gy: f64 = rng.sample(rand_distr::StandardNormal);
                let gz: f64 = rng.sample(rand_distr::StandardNormal);
                *p = *p * decay + MomentumVector::new(gx, gy, gz) * kick;
            }
            push(&momenta, k as f64 * dt, &mut series);
        }
        let fit = fit_drift_diffusion(&series).unwrap();
        assert!((fit.eta_hat - eta).abs() < 0.02 * eta, "eta_hat = {}", fit.eta_hat);
        assert!((fit.dpp_stationary - dpp).abs() < 0.02 * dpp, "dpp = {}", fit.dpp_stationary);
        assert!(fit.efolds >= 2.0);
    }

    #[test]
    fn fit_rejects_short_decay() {
        // Series that only covers half an e-fold.
        let mut series = Vec::new();
        for k in 0..20 {
            let t = k as f64 * 0.1;
            let s = 4.0 * (-0.25_f64 * t).exp();
            series.push(MomentRecord {
                time: t,
                mean_momentum: MomentumVector::new(s, 0.0, 0.0),
                kinetic_energy: 0.0,
                mean_momentum_sq: s * s + 3.0,
                mean_collisions: 0.0,
            });
        }
        assert!(matches!(fit_drift_diffusion(&series), Err(Error::FitIllConditioned { .. })));
    }
}
