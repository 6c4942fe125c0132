//! Statistical layer over trajectories: steady-state snapshot ensembles, the
//! long-free-flight tail curve and its power-law exponent, per-reservoir heat
//! flux, total-variation distances between empirical marginals, and the
//! slow-set deposit rate computed both by quadrature and by Monte Carlo.
//!
//! Every accumulator here merges associatively so ensembles can be built in
//! replica shards; the shards themselves are reduced in replica order to keep
//! results independent of scheduling.

use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::ReservoirParams;
use crate::engine::{initial_state, Engine, EventRecord, SystemState, DEFAULT_EVENT_CAP};
use crate::error::{Error, Result};
use crate::geometry::{chord_length, disk_entry_distance, trace_to_major, GeometryConfig, Half};
use crate::oracles::maxwell_cdf;
use crate::rng::replica_stream;
use crate::stats::{weighted_line_fit, wilson_interval};
use crate::vec2::Vec2;
use std::collections::BTreeMap;

/// Hash of the physical configuration (geometry, temperatures, particle
/// counts). Ensembles are only comparable when these agree; seeds and sample
/// counts are deliberately excluded.
pub fn config_fingerprint(
    geom: &GeometryConfig,
    params: &ReservoirParams,
    k_left: usize,
    k_right: usize,
) -> u64 {
    let text = format!(
        "R={:.17e};d={:.17e};bl={:.17e};br={:.17e};kl={k_left};kr={k_right}",
        geom.disk_radius(),
        geom.gap(),
        params.beta_left,
        params.beta_right
    );
    // FNV-1a
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Time-spaced snapshots of one long trajectory, standing in for the
/// invariant measure after the burn-in.
#[derive(Debug, Clone)]
pub struct SteadyEnsemble {
    pub samples: Vec<SystemState>,
    pub burn_in: f64,
    pub spacing: f64,
    pub fingerprint: u64,
}

/// Walk a trajectory taking snapshots at the exact clock times
/// `burn_in + j * spacing`, `j = 1..n` (ballistically interpolated between
/// events). `on_event` sees every event; `on_snapshot` each interpolated
/// state.
#[allow(clippy::too_many_arguments)]
fn walk_snapshots<R, E, S>(
    engine: &mut Engine,
    rng: &mut R,
    n_snapshots: u64,
    burn_in: f64,
    spacing: f64,
    max_events: u64,
    mut on_event: E,
    mut on_snapshot: S,
) -> Result<()>
where
    R: Rng + ?Sized,
    E: FnMut(&Engine, &EventRecord),
    S: FnMut(&Engine),
{
    if spacing <= 0.0 || burn_in < 0.0 {
        return Err(Error::InvalidParam(
            "need spacing > 0 and burn_in >= 0".into(),
        ));
    }
    let start = engine.clock();
    let mut events: u64 = 0;
    for j in 1..=n_snapshots {
        let t_j = start + burn_in + j as f64 * spacing;
        while engine.next_event_time() < t_j {
            let rec = engine.step(rng)?;
            events += 1;
            if events > max_events {
                return Err(Error::Runaway(max_events));
            }
            on_event(engine, &rec);
        }
        engine.advance_ballistic(t_j)?;
        on_snapshot(engine);
    }
    Ok(())
}

/// Build a steady ensemble from one long trajectory started from fresh
/// boundary emissions.
#[allow(clippy::too_many_arguments)]
pub fn build_steady_ensemble<R: Rng + ?Sized>(
    geom: GeometryConfig,
    params: ReservoirParams,
    k_left: usize,
    k_right: usize,
    rng: &mut R,
    n_samples: u64,
    burn_in: f64,
    spacing: f64,
) -> Result<SteadyEnsemble> {
    if n_samples == 0 {
        return Err(Error::InvalidParam("need at least one sample".into()));
    }
    let state = initial_state(geom, params, k_left, k_right, rng)?;
    let mut engine = Engine::new(state)?;
    let mut samples = Vec::with_capacity(n_samples as usize);
    walk_snapshots(
        &mut engine,
        rng,
        n_samples,
        burn_in,
        spacing,
        DEFAULT_EVENT_CAP,
        |_, _| {},
        |e| samples.push(e.state().clone()),
    )?;
    Ok(SteadyEnsemble {
        samples,
        burn_in,
        spacing,
        fingerprint: config_fingerprint(&geom, &params, k_left, k_right),
    })
}

/// Deterministic time until each particle's next disk or boundary contact
/// (wall bounces do not count as collisions), computed exactly from the
/// geometry.
pub fn time_to_first_collision(state: &SystemState) -> Result<Vec<f64>> {
    state
        .particles
        .iter()
        .map(|p| {
            let s = p.speed();
            if !(s > 0.0) {
                return Err(Error::ExcludedState("stopped particle".into()));
            }
            let m = trace_to_major(&state.geom, p.position, p.velocity * (1.0 / s), p.half)?;
            Ok(m.total_distance / s)
        })
        .collect()
}

/// Largest per-particle free time: the state belongs to `B_T` exactly when
/// this is at least `T`.
pub fn max_free_time(state: &SystemState) -> Result<f64> {
    Ok(time_to_first_collision(state)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Estimated `P(state in B_T)` over a grid of thresholds, with Wilson-score
/// confidence intervals.
#[derive(Debug, Clone)]
pub struct TailCurve {
    pub t_grid: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub n: u64,
}

impl TailCurve {
    pub fn ci_half_width(&self, j: usize) -> f64 {
        0.5 * (self.ci_hi[j] - self.ci_lo[j])
    }

    /// Raw tail count behind `p_hat[j]`.
    pub fn count(&self, j: usize) -> u64 {
        (self.p_hat[j] * self.n as f64).round() as u64
    }
}

/// Streaming tail accumulator: snapshot counts per threshold plus, as a
/// dispersion diagnostic, the number of flight segments at least that long
/// (tail snapshots arrive in bursts within one long flight, so the segment
/// count is the honest sample-size proxy for the far tail).
#[derive(Debug, Clone)]
pub struct TailAccumulator {
    pub t_grid: Vec<f64>,
    pub counts: Vec<u64>,
    pub flight_starts: Vec<u64>,
    pub n: u64,
}

impl TailAccumulator {
    pub fn new(t_grid: Vec<f64>) -> Self {
        let m = t_grid.len();
        TailAccumulator {
            t_grid,
            counts: vec![0; m],
            flight_starts: vec![0; m],
            n: 0,
        }
    }

    pub fn observe_max_free_time(&mut self, m: f64) {
        self.n += 1;
        for (j, &t) in self.t_grid.iter().enumerate() {
            if m >= t {
                self.counts[j] += 1;
            } else {
                break; // grid is increasing
            }
        }
    }

    pub fn observe_flight(&mut self, duration: f64) {
        for (j, &t) in self.t_grid.iter().enumerate() {
            if duration >= t {
                self.flight_starts[j] += 1;
            } else {
                break;
            }
        }
    }

    pub fn merge(&mut self, other: &TailAccumulator) {
        assert_eq!(self.t_grid, other.t_grid, "incompatible tail grids");
        self.n += other.n;
        for j in 0..self.counts.len() {
            self.counts[j] += other.counts[j];
            self.flight_starts[j] += other.flight_starts[j];
        }
    }

    pub fn curve(&self) -> TailCurve {
        let mut p_hat = Vec::with_capacity(self.counts.len());
        let mut ci_lo = Vec::with_capacity(self.counts.len());
        let mut ci_hi = Vec::with_capacity(self.counts.len());
        for &c in &self.counts {
            let (center, half) = wilson_interval(c, self.n);
            p_hat.push(c as f64 / self.n as f64);
            ci_lo.push((center - half).max(0.0));
            ci_hi.push((center + half).min(1.0));
        }
        TailCurve {
            t_grid: self.t_grid.clone(),
            p_hat,
            ci_lo,
            ci_hi,
            n: self.n,
        }
    }
}

/// Tail curve of a stored ensemble.
pub fn b_t_tail(ensemble: &SteadyEnsemble, t_grid: &[f64]) -> Result<TailCurve> {
    if ensemble.samples.is_empty() {
        return Err(Error::InsufficientData("empty ensemble".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid.first().is_none_or(|&t| t <= 0.0) {
        return Err(Error::InvalidParam(
            "t_grid must be positive and increasing".into(),
        ));
    }
    let mut acc = TailAccumulator::new(t_grid.to_vec());
    for s in &ensemble.samples {
        acc.observe_max_free_time(max_free_time(s)?);
    }
    Ok(acc.curve())
}

/// Parameters of a streamed (replica-sharded) tail scan.
#[derive(Debug, Clone)]
pub struct TailScanParams {
    pub t_grid: Vec<f64>,
    pub n_snapshots: u64,
    pub burn_in: f64,
    pub spacing: f64,
    pub replicas: u64,
    pub seed: u64,
    pub max_events_per_replica: u64,
}

/// Long-run tail estimation without storing snapshots: each replica walks
/// its own trajectory (stream derived from the seed and the replica index),
/// accumulating snapshot tail counts and flight-segment counts; shards merge
/// in replica order.
pub fn tail_scan(
    geom: GeometryConfig,
    params: ReservoirParams,
    k_left: usize,
    k_right: usize,
    scan: &TailScanParams,
) -> Result<TailAccumulator> {
    if scan.replicas == 0 {
        return Err(Error::InvalidParam("need at least one replica".into()));
    }
    let per_replica = scan.n_snapshots.div_ceil(scan.replicas);
    let shards: Vec<Result<TailAccumulator>> = (0..scan.replicas)
        .into_par_iter()
        .map(|j| {
            let mut rng = replica_stream(scan.seed, j);
            let state = initial_state(geom, params, k_left, k_right, &mut rng)?;
            let mut engine = Engine::new(state)?;
            let mut acc = TailAccumulator::new(scan.t_grid.clone());
            // split the borrow: the closures may not capture `acc` twice
            let grid_min = scan.t_grid.first().copied().unwrap_or(0.0);
            let mut flights: Vec<f64> = Vec::new();
            walk_snapshots(
                &mut engine,
                &mut rng,
                per_replica,
                scan.burn_in,
                scan.spacing,
                scan.max_events_per_replica,
                |e, rec| {
                    if rec.surface.is_major() {
                        let f = e.next_major_time(rec.particle) - rec.time;
                        if f >= grid_min {
                            flights.push(f);
                        }
                    }
                },
                |e| {
                    let t = e.clock();
                    let m = (0..e.state().particles.len())
                        .map(|i| e.next_major_time(i) - t)
                        .fold(0.0, f64::max);
                    acc.observe_max_free_time(m);
                },
            )?;
            for f in flights {
                acc.observe_flight(f);
            }
            Ok(acc)
        })
        .collect();
    let mut merged: Option<TailAccumulator> = None;
    for shard in shards {
        let shard = shard?;
        match merged.as_mut() {
            None => merged = Some(shard),
            Some(m) => m.merge(&shard),
        }
    }
    Ok(merged.expect("at least one replica"))
}

#[derive(Debug, Clone, Copy)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Least-squares slope of `log p_hat` against `log T` inside the window,
/// weighting points by inverse confidence-interval width.
pub fn fit_power_law(curve: &TailCurve, window: (f64, f64)) -> Result<PowerLawFit> {
    let (lo, hi) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (j, &t) in curve.t_grid.iter().enumerate() {
        if t < lo || t > hi || curve.p_hat[j] <= 0.0 {
            continue;
        }
        xs.push(t.ln());
        ys.push(curve.p_hat[j].ln());
        let width = curve.ci_hi[j] - curve.ci_lo[j];
        ws.push(if width > 0.0 { 1.0 / width } else { 1.0 });
    }
    if xs.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs >= 5 positive points in the window, got {}",
            xs.len()
        )));
    }
    let fit = weighted_line_fit(&xs, &ys, &ws)?;
    Ok(PowerLawFit {
        exponent: fit.slope,
        stderr: fit.slope_stderr,
        window,
        n_points: xs.len(),
    })
}

/// Largest one-decade window `[T_hi / 10, T_hi]` such that the snapshot count
/// at `T_hi` stays at or above `min_count` and (when segment counts are
/// available) at least `min_flights` independent flight segments reached
/// `T_hi`.
pub fn auto_fit_window(
    acc: &TailAccumulator,
    min_count: u64,
    min_flights: u64,
) -> Option<(f64, f64)> {
    let hi = acc
        .t_grid
        .iter()
        .enumerate()
        .rev()
        .find(|(j, _)| acc.counts[*j] >= min_count && acc.flight_starts[*j] >= min_flights)
        .map(|(_, &t)| t)?;
    Some((hi / 10.0, hi))
}

/// Per-reservoir energy bookkeeping: absorbed and emitted kinetic energy and
/// the paired event counts.
#[derive(Debug, Clone, Default)]
pub struct FluxAccumulator {
    pub absorbed: [f64; 2],
    pub emitted: [f64; 2],
    pub events: [u64; 2],
    pub elapsed: f64,
}

#[inline]
fn half_index(half: Half) -> usize {
    match half {
        Half::Left => 0,
        Half::Right => 1,
    }
}

impl FluxAccumulator {
    pub fn observe(&mut self, rec: &EventRecord) {
        if rec.surface.is_outer() {
            let i = half_index(rec.half);
            self.absorbed[i] += 0.5 * rec.s_pre * rec.s_pre;
            self.emitted[i] += 0.5 * rec.s_post * rec.s_post;
            self.events[i] += 1;
        }
    }

    pub fn merge(&mut self, other: &FluxAccumulator) {
        for i in 0..2 {
            self.absorbed[i] += other.absorbed[i];
            self.emitted[i] += other.emitted[i];
            self.events[i] += other.events[i];
        }
        self.elapsed += other.elapsed;
    }

    /// Net energy gain rate of the reservoir; positive means the reservoir
    /// gains energy from the gas.
    pub fn net_rate(&self, half: Half) -> f64 {
        let i = half_index(half);
        (self.absorbed[i] - self.emitted[i]) / self.elapsed
    }
}

/// Flux summary from a recorded event log spanning `elapsed` time.
pub fn heat_flux(records: &[EventRecord], elapsed: f64) -> Result<FluxAccumulator> {
    if !(elapsed > 0.0) {
        return Err(Error::InvalidParam("log must span positive time".into()));
    }
    let mut acc = FluxAccumulator {
        elapsed,
        ..Default::default()
    };
    for r in records {
        acc.observe(r);
    }
    Ok(acc)
}

/// Which empirical marginal a total-variation distance is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginal {
    /// The (s, sin phi, xi) collision coordinates of one particle.
    ParticleCoords(usize),
    /// The disk velocity.
    Omega,
    /// The largest per-particle free time.
    MaxFreeTime,
}

impl Marginal {
    pub fn name(&self) -> String {
        match self {
            Marginal::ParticleCoords(i) => format!("particle{i}"),
            Marginal::Omega => "omega".into(),
            Marginal::MaxFreeTime => "max_free_time".into(),
        }
    }

    fn dims(&self) -> usize {
        match self {
            Marginal::ParticleCoords(_) => 3,
            _ => 1,
        }
    }

    fn extract(&self, state: &SystemState) -> Result<[f64; 3]> {
        match self {
            Marginal::ParticleCoords(i) => {
                let p = state
                    .particles
                    .get(*i)
                    .ok_or_else(|| Error::InvalidParam(format!("no particle {i}")))?;
                let c = crate::geometry::to_collision_coords(
                    &state.geom,
                    p.position,
                    p.velocity,
                    p.half,
                )?;
                Ok([c.speed, c.sin_phi, c.xi])
            }
            Marginal::Omega => Ok([state.disk.omega, 0.0, 0.0]),
            Marginal::MaxFreeTime => Ok([max_free_time(state)?, 0.0, 0.0]),
        }
    }
}

/// Histogram resolution per marginal axis (bins are anchored at zero).
#[derive(Debug, Clone)]
pub struct Binning {
    pub widths: Vec<f64>,
}

impl Binning {
    pub fn uniform(width: f64, dims: usize) -> Self {
        Binning {
            widths: vec![width; dims],
        }
    }
}

/// Total-variation distance between the binned empirical marginals of two
/// ensembles: `1/2 sum_bins |p_a - p_b|`. A lower bound on the true TV
/// distance of the underlying laws.
pub fn tv_distance(
    a: &SteadyEnsemble,
    b: &SteadyEnsemble,
    marginal: Marginal,
    binning: &Binning,
) -> Result<f64> {
    if a.fingerprint != b.fingerprint {
        return Err(Error::InvalidParam(
            "ensembles come from different configurations".into(),
        ));
    }
    if a.samples.is_empty() || b.samples.is_empty() {
        return Err(Error::InsufficientData("empty ensemble".into()));
    }
    let dims = marginal.dims();
    if binning.widths.len() != dims || binning.widths.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidParam(format!(
            "binning must have {dims} positive widths"
        )));
    }
    let mut bins: BTreeMap<[i64; 3], (u64, u64)> = BTreeMap::new();
    let key = |vals: [f64; 3]| -> [i64; 3] {
        let mut k = [0i64; 3];
        for (j, kj) in k.iter_mut().enumerate().take(dims) {
            *kj = (vals[j] / binning.widths[j]).floor() as i64;
        }
        k
    };
    for s in &a.samples {
        bins.entry(key(marginal.extract(s)?)).or_insert((0, 0)).0 += 1;
    }
    for s in &b.samples {
        bins.entry(key(marginal.extract(s)?)).or_insert((0, 0)).1 += 1;
    }
    let na = a.samples.len() as f64;
    let nb = b.samples.len() as f64;
    let mut tv = 0.0;
    for (pa, pb) in bins.values() {
        tv += (*pa as f64 / na - *pb as f64 / nb).abs();
    }
    Ok(0.5 * tv)
}

/// A steady ensemble reweighted to put density `1 + c` on the slow set
/// `B_{T0}`, mass-renormalized on the complement.
#[derive(Debug, Clone)]
pub struct WeightedEnsemble {
    pub samples: Vec<SystemState>,
    pub weights: Vec<f64>,
    pub fingerprint: u64,
}

pub fn perturbed_initial(ensemble: &SteadyEnsemble, c: f64, t0: f64) -> Result<WeightedEnsemble> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidParam(format!(
            "c must lie in [0, 1], got {c}"
        )));
    }
    if !(t0 > 0.0) {
        return Err(Error::InvalidParam("T0 must be positive".into()));
    }
    let n = ensemble.samples.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty ensemble".into()));
    }
    let mut in_b = Vec::with_capacity(n);
    let mut n_b = 0usize;
    for s in &ensemble.samples {
        let b = max_free_time(s)? >= t0;
        n_b += b as usize;
        in_b.push(b);
    }
    if c > 0.0 && n_b == 0 {
        return Err(Error::InsufficientData(format!(
            "no samples in B_T0 for T0 = {t0}"
        )));
    }
    if n_b == n {
        return Err(Error::InvalidParam(
            "perturbation is degenerate: every sample in B_T0".into(),
        ));
    }
    let p = n_b as f64 / n as f64;
    let w_minus = (1.0 - (1.0 + c) * p) / (1.0 - p);
    if w_minus < 0.0 {
        return Err(Error::InvalidParam(
            "B_T0 carries too much mass for this c".into(),
        ));
    }
    let weights = in_b
        .iter()
        .map(|&b| if b { 1.0 + c } else { w_minus })
        .collect();
    Ok(WeightedEnsemble {
        samples: ensemble.samples.clone(),
        weights,
        fingerprint: ensemble.fingerprint,
    })
}

/// Decay curve of the perturbed ensemble: at each checkpoint `t`,
/// `r(t) = lambda_t(B_{T*}) - nu_t(B_{T*})` where `lambda_t` carries the
/// perturbation weights and `nu_t` is the unweighted (stationary) average
/// over the same evolved samples, so trajectory noise cancels in the
/// difference.
#[derive(Debug, Clone)]
pub struct MixingDecay {
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub lambda_b: Vec<f64>,
    pub mu_b: Vec<f64>,
}

pub fn mixing_decay(
    ensemble: &WeightedEnsemble,
    t_star: f64,
    t_grid: &[f64],
    seed: u64,
) -> Result<MixingDecay> {
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] <= 0.0 {
        return Err(Error::InvalidParam(
            "checkpoint grid must be positive and increasing".into(),
        ));
    }
    let n = ensemble.samples.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty ensemble".into()));
    }
    const CHUNK: usize = 2048;
    let m = t_grid.len();
    let idx: Vec<usize> = (0..n).collect();
    type ChunkSums = (Vec<f64>, Vec<f64>, Vec<f64>);
    // fixed chunking keeps the floating-point reduction order deterministic
    let partials: Vec<Result<ChunkSums>> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sum_w = vec![0.0f64; m];
            let mut sum_excess = vec![0.0f64; m];
            let mut sum_plain = vec![0.0f64; m];
            for &i in chunk {
                let mut state = ensemble.samples[i].clone();
                state.clock = 0.0;
                let w = ensemble.weights[i];
                let mut rng = replica_stream(seed, i as u64);
                let mut engine = Engine::new(state)?;
                for (j, &t) in t_grid.iter().enumerate() {
                    while engine.next_event_time() < t {
                        engine.step(&mut rng)?;
                    }
                    engine.advance_ballistic(t)?;
                    let free = (0..engine.state().particles.len())
                        .map(|q| engine.next_major_time(q) - t)
                        .fold(0.0, f64::max);
                    if free >= t_star {
                        sum_w[j] += w;
                        sum_excess[j] += w - 1.0;
                        sum_plain[j] += 1.0;
                    }
                }
            }
            Ok((sum_w, sum_excess, sum_plain))
        })
        .collect();
    let mut lambda_b = vec![0.0f64; m];
    let mut r = vec![0.0f64; m];
    let mut mu_b = vec![0.0f64; m];
    for part in partials {
        let (sw, se, sp) = part?;
        for j in 0..m {
            lambda_b[j] += sw[j];
            r[j] += se[j];
            mu_b[j] += sp[j];
        }
    }
    let nf = n as f64;
    for j in 0..m {
        lambda_b[j] /= nf;
        r[j] /= nf;
        mu_b[j] /= nf;
    }
    Ok(MixingDecay {
        times: t_grid.to_vec(),
        r,
        lambda_b,
        mu_b,
    })
}

/// Probability that a fresh emission flies longer than `t + delta` before
/// its first disk or boundary contact, evaluated two independent ways.
#[derive(Debug, Clone, Copy)]
pub struct DepositRate {
    pub analytic: f64,
    pub monte_carlo: f64,
    pub mc_stderr: f64,
    /// Displayed leading asymptotic of the lower-bound branch,
    /// `(4/3) (beta^{3/2}/sqrt(pi)) d^3 / (t + delta)^3`.
    pub leading_term: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DepositMcParams {
    pub samples: u64,
    pub seed: u64,
}

/// Leading small-speed asymptotic of the deposit probability.
pub fn deposit_leading_term(beta: f64, geom: &GeometryConfig, t: f64, delta: f64) -> f64 {
    let tau = t + delta;
    let d = geom.gap();
    4.0 / 3.0 * beta.powf(1.5) / std::f64::consts::PI.sqrt() * d * d * d / (tau * tau * tau)
}

/// Flight length of an emission at `sin(phi)`: to the disk when the chord
/// meets it, otherwise the full (wall-unfolded) chord.
fn emission_flight_length(geom: &GeometryConfig, sin_phi: f64) -> Result<f64> {
    match disk_entry_distance(geom, sin_phi)? {
        Some(entry) => Ok(entry),
        None => chord_length(geom, sin_phi),
    }
}

pub fn deposit_rate(
    beta: f64,
    geom: &GeometryConfig,
    t: f64,
    delta: f64,
    mc: &DepositMcParams,
) -> Result<DepositRate> {
    if !(t > 0.0) || delta < 0.0 {
        return Err(Error::InvalidParam("need t > 0 and delta >= 0".into()));
    }
    let tau = t + delta;
    let alpha = geom.alpha();

    // Quadrature over the uniform sin(phi) marginal, split at the critical
    // angle where the flight length jumps from the disk branch to the chord.
    let integrand = |u: f64| -> f64 {
        let len = emission_flight_length(geom, u).expect("|u| < 1 inside the integration range");
        maxwell_cdf(beta, len / tau)
    };
    let (inner, e1) = crate::quad::integrate(integrand, 0.0, alpha, 1e-9, 1e-30)?;
    let (outer, e2) = crate::quad::integrate(integrand, alpha, 1.0 - 1e-15, 1e-9, 1e-30)?;
    let analytic = inner + outer; // symmetric halves times the 1/2 density
    let _ = (e1, e2);

    // Monte Carlo branch through the actual tracer. Slow emissions are
    // importance-sampled from q(s) = 3 s^2 / s_cut^3 on (0, s_cut), the exact
    // small-s shape of the speed law; weights are then flat up to the
    // Gaussian factor.
    let s_cut = 2.0 * geom.outer_radius() / tau;
    let use_is = s_cut < 6.0 / beta.sqrt();
    let base = 4.0 * beta.powf(1.5) / (3.0 * std::f64::consts::PI.sqrt()) * s_cut * s_cut * s_cut;
    const CHUNK: u64 = 1 << 18;
    let chunks = mc.samples.div_ceil(CHUNK);
    let partials: Vec<(f64, f64, u64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = replica_stream(mc.seed, c);
            let this = CHUNK.min(mc.samples - c * CHUNK);
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            for _ in 0..this {
                let psi = rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
                let ro = geom.outer_radius();
                let point = Vec2::new(ro * psi.cos(), ro * psi.sin());
                let sin_phi: f64 = rng.gen_range(-1.0..1.0);
                let (s, w) = if use_is {
                    let u: f64 = rng.gen();
                    let s = s_cut * u.cbrt();
                    (s, base * (-beta * s * s).exp())
                } else {
                    let (s, _) = crate::dynamics::sample_emission(beta, &mut rng)?;
                    (s, 1.0)
                };
                let n = -point.normalized();
                let tv = n.perp();
                let dir = n * (1.0 - sin_phi * sin_phi).sqrt() + tv * sin_phi;
                let m = trace_to_major(geom, point, dir, Half::Right)?;
                if m.total_distance / s > tau {
                    sum += w;
                    sum2 += w * w;
                }
            }
            Ok::<(f64, f64, u64), Error>((sum, sum2, this))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut sum, mut sum2, mut count) = (0.0, 0.0, 0u64);
    for (a, b, c) in partials {
        sum += a;
        sum2 += b;
        count += c;
    }
    let nf = count as f64;
    let mean = sum / nf;
    let var = (sum2 / nf - mean * mean).max(0.0);
    Ok(DepositRate {
        analytic,
        monte_carlo: mean,
        mc_stderr: (var / nf).sqrt(),
        leading_term: deposit_leading_term(beta, geom, t, delta),
    })
}

// ---------------------------------------------------------------------------
// CSV output (comment lines start with '#'; all floats carry 17 significant
// digits so reruns are byte-comparable)

fn push_comments(out: &mut String, comments: &[String]) {
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
}

pub fn tail_curve_csv(curve: &TailCurve, comments: &[String]) -> String {
    let mut out = String::new();
    push_comments(&mut out, comments);
    out.push_str("T,p_hat,ci_lo,ci_hi,n\n");
    for j in 0..curve.t_grid.len() {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            curve.t_grid[j], curve.p_hat[j], curve.ci_lo[j], curve.ci_hi[j], curve.n
        ));
    }
    out
}

pub fn flux_csv(acc: &FluxAccumulator, comments: &[String]) -> String {
    let mut out = String::new();
    push_comments(&mut out, comments);
    out.push_str("reservoir,absorbed,emitted,net_rate,events\n");
    for (name, half) in [("left", Half::Left), ("right", Half::Right)] {
        let i = half_index(half);
        out.push_str(&format!(
            "{name},{:.16e},{:.16e},{:.16e},{}\n",
            acc.absorbed[i],
            acc.emitted[i],
            acc.net_rate(half),
            acc.events[i]
        ));
    }
    out
}

pub fn tv_series_csv(rows: &[(f64, f64, String)], comments: &[String]) -> String {
    let mut out = String::new();
    push_comments(&mut out, comments);
    out.push_str("t,tv,marginal\n");
    for (t, tv, marginal) in rows {
        out.push_str(&format!("{t:.16e},{tv:.16e},{marginal}\n"));
    }
    out
}

/// Importance density used by the deposit-rate Monte Carlo, exposed for the
/// weight consistency test.
#[cfg(test)]
fn is_weight_consistency(beta: f64, s_cut: f64, s: f64) -> (f64, f64) {
    let q = 3.0 * s * s / (s_cut * s_cut * s_cut);
    (crate::oracles::maxwell_speed_pdf(beta, s) / q, {
        let base = 4.0 * beta.powf(1.5) / (3.0 * std::f64::consts::PI.sqrt()) * s_cut.powi(3);
        base * (-beta * s * s).exp()
    })
}
