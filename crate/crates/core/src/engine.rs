//! Event-driven simulator: advances the system collision to collision,
//! keeping one pending surface hit per particle (recomputed only for the
//! particle that just collided) and applying the interaction laws at events.
//!
//! Also hosts the stopping-time machinery: the deterministic time `t0` of the
//! last initial disk approach, the regeneration time `tau` (all particles
//! re-randomized and the disk velocity overwritten by a fresh boundary
//! emission), the compact-set predicate `in_c`, and hitting times of that set.

use rand::Rng;

use crate::dynamics::{
    absorb_and_emit, disk_interact, wall_reflect, DiskState, LastContact, ParticleState,
    ReservoirParams,
};
use crate::error::{Error, Result};
use crate::geometry::{
    to_collision_coords, trace_ray, trace_to_major, GeometryConfig, Half, Surface, SurfaceHit,
};
use crate::vec2::Vec2;

/// Default event-count safety cap per trajectory run.
pub const DEFAULT_EVENT_CAP: u64 = 1_000_000_000;

/// Full instantaneous state: k particle records, the disk, and the clock,
/// together with the immutable run parameters.
#[derive(Debug, Clone)]
pub struct SystemState {
    pub particles: Vec<ParticleState>,
    pub disk: DiskState,
    pub clock: f64,
    pub geom: GeometryConfig,
    pub params: ReservoirParams,
}

impl SystemState {
    /// Total kinetic energy, disk included.
    pub fn energy(&self) -> f64 {
        self.particles
            .iter()
            .map(|p| p.kinetic_energy())
            .sum::<f64>()
            + self.disk.kinetic_energy()
    }

    pub fn count_in_half(&self, half: Half) -> usize {
        self.particles.iter().filter(|p| p.half == half).count()
    }
}

/// Fresh initial state: every particle emitted from a uniform point of its
/// half's boundary arc, disk at rest with the marked point at zero.
pub fn initial_state<R: Rng + ?Sized>(
    geom: GeometryConfig,
    params: ReservoirParams,
    k_left: usize,
    k_right: usize,
    rng: &mut R,
) -> Result<SystemState> {
    if k_left + k_right == 0 {
        return Err(Error::InvalidParam("need at least one particle".into()));
    }
    let ro = geom.outer_radius();
    let mut particles = Vec::with_capacity(k_left + k_right);
    for i in 0..k_left + k_right {
        let half = if i < k_left { Half::Left } else { Half::Right };
        let psi = match half {
            Half::Right => rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2),
            Half::Left => {
                rng.gen_range(std::f64::consts::FRAC_PI_2..3.0 * std::f64::consts::FRAC_PI_2)
            }
        };
        let point = Vec2::new(ro * psi.cos(), ro * psi.sin());
        particles.push(crate::dynamics::emit_at(point, half, &params, rng)?);
    }
    Ok(SystemState {
        particles,
        disk: DiskState {
            theta: 0.0,
            omega: 0.0,
        },
        clock: 0.0,
        geom,
        params,
    })
}

/// One collision event, with kinematic snapshots before and after.
///
/// `sin_phi_pre`/`sin_phi_post` are the tangential direction components at
/// the event surface (velocity direction dotted with the CCW tangent of the
/// surface's inward normal).
#[derive(Debug, Clone, Copy)]
pub struct EventRecord {
    pub time: f64,
    pub particle: usize,
    pub surface: Surface,
    pub half: Half,
    pub s_pre: f64,
    pub s_post: f64,
    pub sin_phi_pre: f64,
    pub sin_phi_post: f64,
    pub omega_pre: f64,
    pub omega_post: f64,
}

fn surface_name(s: Surface) -> &'static str {
    match s {
        Surface::OuterBoundaryLeft => "outer_left",
        Surface::OuterBoundaryRight => "outer_right",
        Surface::Disk => "disk",
        Surface::WallUpper => "wall_upper",
        Surface::WallLower => "wall_lower",
    }
}

/// One JSON line per event; numeric fields carry 17 significant digits.
pub fn event_to_jsonl(rec: &EventRecord) -> String {
    format!(
        "{{\"t\":{:.16e},\"i\":{},\"surface\":\"{}\",\"s_pre\":{:.16e},\"s_post\":{:.16e},\"sin_phi_pre\":{:.16e},\"sin_phi_post\":{:.16e},\"omega_pre\":{:.16e},\"omega_post\":{:.16e},\"half\":\"{}\"}}",
        rec.time,
        rec.particle,
        surface_name(rec.surface),
        rec.s_pre,
        rec.s_post,
        rec.sin_phi_pre,
        rec.sin_phi_post,
        rec.omega_pre,
        rec.omega_post,
        match rec.half {
            Half::Left => "left",
            Half::Right => "right",
        }
    )
}

#[derive(Debug, Clone, Copy)]
struct PendingHit {
    hit: SurfaceHit,
    /// Absolute clock time of the hit.
    t_abs: f64,
    /// Absolute clock time of the next disk/boundary contact (wall bounces
    /// traced through).
    t_major_abs: f64,
}

/// The particle with the minimal time to its next surface and that hit.
/// Ties are broken toward the lower particle index. The disk angle is not
/// advanced here.
pub fn next_event(state: &SystemState) -> Result<(usize, SurfaceHit, f64)> {
    let mut best: Option<(usize, SurfaceHit, f64)> = None;
    for (i, p) in state.particles.iter().enumerate() {
        let s = p.speed();
        if !(s > 0.0) {
            return Err(Error::ExcludedState(format!("particle {i} is stopped")));
        }
        let hit = trace_ray(&state.geom, p.position, p.velocity * (1.0 / s), p.half)?;
        let dt = hit.distance / s;
        if best.as_ref().is_none_or(|(_, _, bdt)| dt < *bdt) {
            best = Some((i, hit, dt));
        }
    }
    best.ok_or_else(|| Error::InvalidParam("no particles in state".into()))
}

/// Deterministic time of the last initial disk approach: the maximum over
/// particles currently heading for a disk collision of their disk-hit times,
/// or 0 when no particle is heading for the disk.
pub fn compute_t0(state: &SystemState) -> Result<f64> {
    let mut t0 = 0.0f64;
    for p in &state.particles {
        let s = p.speed();
        if !(s > 0.0) {
            return Err(Error::ExcludedState("stopped particle".into()));
        }
        let m = trace_to_major(&state.geom, p.position, p.velocity * (1.0 / s), p.half)?;
        if m.surface == Surface::Disk {
            t0 = t0.max(state.clock + m.total_distance / s);
        }
    }
    Ok(t0)
}

/// Why an `evolve_until` call returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopOutcome {
    /// The observer requested the stop at the last delivered event.
    Predicate,
    /// The time horizon was reached; the state sits exactly at the horizon.
    Horizon,
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveLimits {
    pub horizon: Option<f64>,
    pub max_events: u64,
}

impl Default for EvolveLimits {
    fn default() -> Self {
        EvolveLimits {
            horizon: None,
            max_events: DEFAULT_EVENT_CAP,
        }
    }
}

impl EvolveLimits {
    pub fn horizon(t: f64) -> Self {
        EvolveLimits {
            horizon: Some(t),
            max_events: DEFAULT_EVENT_CAP,
        }
    }
}

/// Event-driven driver owning a state plus the per-particle pending hits.
#[derive(Debug, Clone)]
pub struct Engine {
    state: SystemState,
    pending: Vec<PendingHit>,
}

impl Engine {
    pub fn new(state: SystemState) -> Result<Self> {
        let mut pending = Vec::with_capacity(state.particles.len());
        for p in &state.particles {
            pending.push(Self::compute_pending(&state.geom, p, state.clock)?);
        }
        Ok(Engine { state, pending })
    }

    fn compute_pending(geom: &GeometryConfig, p: &ParticleState, clock: f64) -> Result<PendingHit> {
        let s = p.speed();
        if !(s > 0.0) {
            return Err(Error::ExcludedState("stopped particle".into()));
        }
        let u = p.velocity * (1.0 / s);
        let hit = trace_ray(geom, p.position, u, p.half)?;
        let t_abs = clock + hit.distance / s;
        let t_major_abs = if hit.surface.is_major() {
            t_abs
        } else {
            let u2 = Vec2::new(-u.x, u.y);
            let m = trace_to_major(geom, hit.point, u2, p.half)?;
            t_abs + m.total_distance / s
        };
        Ok(PendingHit {
            hit,
            t_abs,
            t_major_abs,
        })
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn into_state(self) -> SystemState {
        self.state
    }

    pub fn clock(&self) -> f64 {
        self.state.clock
    }

    /// Absolute clock time of the next event.
    pub fn next_event_time(&self) -> f64 {
        self.pending
            .iter()
            .map(|h| h.t_abs)
            .fold(f64::INFINITY, f64::min)
    }

    /// Absolute clock time of particle `i`'s next disk/boundary contact.
    pub fn next_major_time(&self, i: usize) -> f64 {
        self.pending[i].t_major_abs
    }

    /// Move every particle (and the disk angle) ballistically to time `t`,
    /// which must not pass the next event.
    pub fn advance_ballistic(&mut self, t: f64) -> Result<()> {
        let dt = t - self.state.clock;
        if dt < 0.0 {
            return Err(Error::InvalidParam("cannot advance backwards".into()));
        }
        if t > self.next_event_time() + 1e-12 {
            return Err(Error::InvalidParam(
                "ballistic advance would skip an event".into(),
            ));
        }
        for p in &mut self.state.particles {
            p.position += p.velocity * dt;
        }
        self.state.disk.advance(dt, self.state.geom.disk_radius());
        self.state.clock = t;
        Ok(())
    }

    /// Advance to the next collision, apply the interaction law, and return
    /// the event record. Replaying the same seed and configuration yields a
    /// bit-identical event sequence.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EventRecord> {
        let mut idx = 0usize;
        for j in 1..self.pending.len() {
            if self.pending[j].t_abs < self.pending[idx].t_abs {
                idx = j;
            }
        }
        let PendingHit { hit, t_abs, .. } = self.pending[idx];
        let dt = t_abs - self.state.clock;

        for p in &mut self.state.particles {
            p.position += p.velocity * dt;
        }
        self.state.disk.advance(dt, self.state.geom.disk_radius());
        self.state.clock = t_abs;

        let tang = hit.inward_normal.perp();
        let omega_pre = self.state.disk.omega;
        let (s_pre, sin_phi_pre, half) = {
            let p = &mut self.state.particles[idx];
            p.position = hit.point;
            let s = p.speed();
            (s, p.velocity.dot(tang) / s, p.half)
        };

        match hit.surface {
            Surface::WallUpper | Surface::WallLower => {
                let p = &mut self.state.particles[idx];
                p.velocity = wall_reflect(p.velocity)?;
                p.last_contact = LastContact::Wall;
            }
            Surface::Disk => {
                let p = &mut self.state.particles[idx];
                let normal = hit.inward_normal; // outward normal of the disk
                let v_perp = p.velocity.dot(normal);
                let v_t = p.velocity.dot(tang);
                let (v_t2, v_perp2, omega2) = disk_interact(v_t, v_perp, self.state.disk.omega)?;
                p.velocity = normal * v_perp2 + tang * v_t2;
                p.last_contact = LastContact::Disk;
                self.state.disk.omega = omega2;
            }
            _ => {
                let p = &self.state.particles[idx];
                let fresh = absorb_and_emit(p, &self.state.params, &self.state.geom, rng)?;
                self.state.particles[idx] = fresh;
            }
        }

        let p = &self.state.particles[idx];
        let s_post = p.speed();
        let record = EventRecord {
            time: t_abs,
            particle: idx,
            surface: hit.surface,
            half,
            s_pre,
            s_post,
            sin_phi_pre,
            sin_phi_post: p.velocity.dot(tang) / s_post,
            omega_pre,
            omega_post: self.state.disk.omega,
        };

        self.pending[idx] =
            Self::compute_pending(&self.state.geom, &self.state.particles[idx], t_abs)?;
        Ok(record)
    }

    /// Run until the observer returns true or the horizon passes. The
    /// observer sees the post-event state together with the event record.
    /// On a horizon stop the state is advanced ballistically to exactly the
    /// horizon time.
    pub fn evolve_until<R, F>(
        &mut self,
        rng: &mut R,
        limits: &EvolveLimits,
        mut observer: F,
    ) -> Result<StopOutcome>
    where
        R: Rng + ?Sized,
        F: FnMut(&SystemState, &EventRecord) -> bool,
    {
        let mut events: u64 = 0;
        loop {
            if let Some(h) = limits.horizon {
                if self.next_event_time() > h {
                    self.advance_ballistic(h)?;
                    return Ok(StopOutcome::Horizon);
                }
            }
            if events >= limits.max_events {
                return Err(Error::Runaway(limits.max_events));
            }
            let rec = self.step(rng)?;
            events += 1;
            if observer(&self.state, &rec) {
                return Ok(StopOutcome::Predicate);
            }
        }
    }
}

/// Tracks the two regeneration conditions along a trajectory:
/// every particle has collided with the outer boundary at least once, and a
/// boundary-emitted particle has hit the disk after `t0` and returned to the
/// boundary. `tau` fires at the later of the two.
#[derive(Debug, Clone)]
pub struct StoppingMonitor {
    t0: f64,
    boundary_flags: Vec<bool>,
    pending_return: Vec<bool>,
    fresh_cycle_done: bool,
    tau: Option<f64>,
}

impl StoppingMonitor {
    pub fn new(state: &SystemState) -> Result<Self> {
        Ok(StoppingMonitor {
            t0: compute_t0(state)?,
            boundary_flags: vec![false; state.particles.len()],
            pending_return: vec![false; state.particles.len()],
            fresh_cycle_done: false,
            tau: None,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    /// Feed one event; returns `Some(tau)` the first time both conditions
    /// hold (at the absolute clock time of the completing event).
    pub fn observe(&mut self, rec: &EventRecord) -> Option<f64> {
        if self.tau.is_some() {
            return self.tau;
        }
        match rec.surface {
            Surface::Disk => {
                if self.boundary_flags[rec.particle] && rec.time > self.t0 {
                    self.pending_return[rec.particle] = true;
                }
            }
            Surface::OuterBoundaryLeft | Surface::OuterBoundaryRight => {
                if self.pending_return[rec.particle] {
                    self.fresh_cycle_done = true;
                }
                self.boundary_flags[rec.particle] = true;
            }
            _ => {}
        }
        if self.fresh_cycle_done && self.boundary_flags.iter().all(|&b| b) {
            self.tau = Some(rec.time);
        }
        self.tau
    }
}

/// Run until the regeneration time; returns the state at `tau` (on the
/// collision manifold) and the duration of `tau` measured from the state's
/// starting clock.
pub fn run_to_tau<R: Rng + ?Sized>(
    state: SystemState,
    rng: &mut R,
    max_events: u64,
) -> Result<(SystemState, f64)> {
    let start = state.clock;
    let mut monitor = StoppingMonitor::new(&state)?;
    let mut engine = Engine::new(state)?;
    let limits = EvolveLimits {
        horizon: None,
        max_events,
    };
    engine.evolve_until(rng, &limits, |_, rec| monitor.observe(rec).is_some())?;
    let tau = monitor.tau().expect("stop fired without tau") - start;
    Ok((engine.into_state(), tau))
}

/// Regeneration time with a waiting period: the system runs freely for
/// `delta`, then the stopping conditions are evaluated afresh from the
/// time-`delta` state (with `t0` recomputed there). Returns the total
/// duration `delta + tau(state at delta)`.
pub fn run_to_tau_after_delay<R: Rng + ?Sized>(
    state: SystemState,
    rng: &mut R,
    delta: f64,
    max_events: u64,
) -> Result<(SystemState, f64)> {
    if delta < 0.0 {
        return Err(Error::InvalidParam("delta must be nonnegative".into()));
    }
    let start = state.clock;
    let mut engine = Engine::new(state)?;
    engine.evolve_until(rng, &EvolveLimits::horizon(start + delta), |_, _| false)?;
    let (state, tau) = run_to_tau(engine.into_state(), rng, max_events)?;
    Ok((state, delta + tau))
}

/// Parameters of the compact set: speed window and the tangential-exclusion
/// margin epsilon.
#[derive(Debug, Clone, Copy)]
pub struct CSetParams {
    pub s_min: f64,
    pub s_max: f64,
    pub epsilon: f64,
}

impl CSetParams {
    pub fn new(s_min: f64, s_max: f64, epsilon: f64) -> Result<Self> {
        if !(s_min > 0.0 && s_min < s_max) {
            return Err(Error::InvalidParam(format!(
                "need 0 < s_min < s_max, got ({s_min}, {s_max})"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParam(format!(
                "epsilon must lie in (0,1), got {epsilon}"
            )));
        }
        Ok(CSetParams {
            s_min,
            s_max,
            epsilon,
        })
    }

    /// Default window covering the bulk of both reservoirs' speed laws, so
    /// the probability of an emission landing in the window stays away from
    /// 0 and 1.
    pub fn default_for(params: &ReservoirParams) -> Self {
        CSetParams {
            s_min: 0.2 / params.beta_max().sqrt(),
            s_max: 3.0 / params.beta_min().sqrt(),
            epsilon: 0.1,
        }
    }

    /// Bound on the disk speed inside the set.
    pub fn omega_bound(&self, geom: &GeometryConfig) -> f64 {
        let a2 = geom.alpha() * geom.alpha();
        self.s_max * ((1.0 - self.epsilon) / (1.0 + a2)).sqrt()
    }

    /// Angle bound of the pre-disk clause.
    pub fn pre_disk_angle_bound(&self, geom: &GeometryConfig) -> f64 {
        let alpha = geom.alpha();
        alpha / (1.0 + alpha * alpha).sqrt() * (1.0 - self.epsilon).sqrt()
    }

    /// Angle bound of the post-disk clause.
    pub fn post_disk_angle_bound(&self, geom: &GeometryConfig) -> f64 {
        let alpha = geom.alpha();
        let a2 = alpha * alpha;
        let e = self.epsilon;
        alpha * (1.0 - e).sqrt()
            / ((1.0 + a2)
                * (self.s_max * self.s_max * (1.0 - e) + self.s_min * self.s_min * (a2 + e)).sqrt())
    }

    /// Speed window of the post-disk clause.
    pub fn post_disk_speed_window(&self, geom: &GeometryConfig) -> (f64, f64) {
        let a2 = geom.alpha() * geom.alpha();
        let e = self.epsilon;
        (
            self.s_min * ((a2 + e) / (a2 + 1.0)).sqrt(),
            self.s_max * ((a2 - e + 2.0) / (a2 + 1.0)).sqrt(),
        )
    }

    /// Waiting time small enough that a particle in the set reaching the
    /// boundary within it cannot have had a disk collision first.
    pub fn default_delta(&self, geom: &GeometryConfig) -> f64 {
        let (_, hi) = self.post_disk_speed_window(geom);
        0.9 * geom.gap() / hi
    }
}

/// Membership in the compact set: the disk speed bound plus, for every
/// particle, one of the three clauses (no disk on this chord; heading for
/// the disk inside the pre-disk angle bound; after a disk collision inside
/// the post-disk angle bound and speed window). A particle exactly on the
/// boundary (xi = 0) counts toward the pre-disk branches.
pub fn in_c(state: &SystemState, cset: &CSetParams) -> Result<bool> {
    let geom = &state.geom;
    if state.disk.omega.abs() > cset.omega_bound(geom) {
        return Ok(false);
    }
    let alpha = geom.alpha();
    let pre_bound = cset.pre_disk_angle_bound(geom);
    let post_bound = cset.post_disk_angle_bound(geom);
    let (post_lo, post_hi) = cset.post_disk_speed_window(geom);
    for p in &state.particles {
        let c = to_collision_coords(geom, p.position, p.velocity, p.half)?;
        let u = c.sin_phi.abs();
        let ok = if c.xi >= 0.0 {
            let speed_ok = c.speed >= cset.s_min && c.speed <= cset.s_max;
            speed_ok && (u > alpha || u < pre_bound)
        } else {
            u < post_bound && c.speed >= post_lo && c.speed <= post_hi
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// First event time (duration from the starting clock) at or after `delta`
/// at which the state lies in the set. With `delta = 0` the initial state is
/// checked first and 0 is returned if it already belongs to the set.
pub fn hitting_time_c<R: Rng + ?Sized>(
    state: SystemState,
    rng: &mut R,
    cset: &CSetParams,
    delta: f64,
    max_events: u64,
) -> Result<f64> {
    if delta < 0.0 {
        return Err(Error::InvalidParam("delta must be nonnegative".into()));
    }
    if delta == 0.0 && in_c(&state, cset)? {
        return Ok(0.0);
    }
    let start = state.clock;
    let mut engine = Engine::new(state)?;
    let mut hit_time: Option<f64> = None;
    let mut failure: Option<Error> = None;
    let outcome = engine.evolve_until(
        rng,
        &EvolveLimits {
            horizon: None,
            max_events,
        },
        |st, rec| {
            if rec.time - start < delta {
                return false;
            }
            match in_c(st, cset) {
                Ok(true) => {
                    hit_time = Some(rec.time - start);
                    true
                }
                Ok(false) => false,
                Err(e) => {
                    failure = Some(e);
                    true
                }
            }
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    debug_assert_eq!(outcome, StopOutcome::Predicate);
    hit_time.ok_or_else(|| Error::InvariantViolation("stopped without entering the set".into()))
}

/// Absolutely continuous surrogate of the uniform law on the set, supported
/// on its full-measure no-disk-heading part: each particle gets a uniform
/// boundary anchor, a speed uniform in the window, an angle uniform outside
/// the critical angle, and a uniform position along the resulting chord; the
/// disk speed is uniform inside its bound.
pub fn sample_c_surrogate<R: Rng + ?Sized>(
    geom: GeometryConfig,
    params: ReservoirParams,
    cset: &CSetParams,
    k_left: usize,
    k_right: usize,
    rng: &mut R,
) -> Result<SystemState> {
    let ro = geom.outer_radius();
    let alpha = geom.alpha();
    let mut particles = Vec::with_capacity(k_left + k_right);
    for i in 0..k_left + k_right {
        let half = if i < k_left { Half::Left } else { Half::Right };
        let psi = match half {
            Half::Right => rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2),
            Half::Left => {
                rng.gen_range(std::f64::consts::FRAC_PI_2..3.0 * std::f64::consts::FRAC_PI_2)
            }
        };
        let anchor = Vec2::new(ro * psi.cos(), ro * psi.sin());
        let speed = rng.gen_range(cset.s_min..cset.s_max);
        let mag = rng.gen_range(alpha..1.0);
        let sin_phi = if rng.gen_bool(0.5) { mag } else { -mag };
        let n = -anchor.normalized();
        let t = n.perp();
        let dir = n * (1.0 - sin_phi * sin_phi).sqrt() + t * sin_phi;
        let m = trace_to_major(&geom, anchor, dir, half)?;
        debug_assert!(m.surface.is_outer());
        let xi = rng.gen_range(0.0..m.total_distance * 0.999);
        let mut pos = anchor;
        let mut u = dir;
        let mut remaining = xi;
        loop {
            let hit = trace_ray(&geom, pos, u, half)?;
            if hit.distance >= remaining {
                pos += u * remaining;
                break;
            }
            remaining -= hit.distance;
            pos = hit.point;
            u = Vec2::new(-u.x, u.y);
        }
        particles.push(ParticleState {
            position: pos,
            velocity: u * speed,
            half,
            last_contact: LastContact::Outer,
        });
    }
    let bound = cset.omega_bound(&geom);
    let disk = DiskState {
        theta: rng.gen_range(0.0..std::f64::consts::TAU),
        omega: rng.gen_range(-bound..bound),
    };
    Ok(SystemState {
        particles,
        disk,
        clock: 0.0,
        geom,
        params,
    })
}
