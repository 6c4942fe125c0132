//! The three interaction laws: specular wall reflection, the particle-disk
//! velocity exchange, and reservoir absorption/re-emission with the Gibbs
//! boundary law `(2 beta^{3/2}/sqrt(pi)) s^2 exp(-beta s^2) cos(phi) ds dphi`.
//!
//! The disk's angular velocity is stored in linear tangential-speed units,
//! since the exchange rule swaps it directly with the particle's tangential
//! velocity component; the marked angle advances as `theta_dot = omega / R`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{GeometryConfig, Half};
use crate::vec2::Vec2;

/// Speeds below this are treated as the (probability-zero) stopped state and
/// resampled; stopped particles are excluded from the phase space.
const MIN_SPEED: f64 = 1e-300;

/// Last surface the particle interacted with, used for event bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LastContact {
    None,
    Outer,
    Disk,
    Wall,
}

#[derive(Debug, Clone, Copy)]
pub struct ParticleState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub half: Half,
    pub last_contact: LastContact,
}

impl ParticleState {
    #[inline]
    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    #[inline]
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.velocity.norm_sq()
    }
}

/// Rotating disk: marked-point angle and angular velocity in
/// tangential-speed units.
#[derive(Debug, Clone, Copy)]
pub struct DiskState {
    pub theta: f64,
    pub omega: f64,
}

impl DiskState {
    /// Advance the marked point for a flight of duration `dt`.
    #[inline]
    pub fn advance(&mut self, dt: f64, disk_radius: f64) {
        self.theta = (self.theta + self.omega * dt / disk_radius).rem_euclid(std::f64::consts::TAU);
    }

    #[inline]
    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.omega * self.omega
    }
}

/// Inverse temperatures of the two reservoirs.
#[derive(Debug, Clone, Copy)]
pub struct ReservoirParams {
    pub beta_left: f64,
    pub beta_right: f64,
}

impl ReservoirParams {
    pub fn new(beta_left: f64, beta_right: f64) -> Result<Self> {
        if !(beta_left.is_finite() && beta_left > 0.0 && beta_right.is_finite() && beta_right > 0.0)
        {
            return Err(Error::InvalidParam(format!(
                "inverse temperatures must be positive, got ({beta_left}, {beta_right})"
            )));
        }
        Ok(ReservoirParams {
            beta_left,
            beta_right,
        })
    }

    #[inline]
    pub fn beta_for(&self, half: Half) -> f64 {
        match half {
            Half::Left => self.beta_left,
            Half::Right => self.beta_right,
        }
    }

    #[inline]
    pub fn beta_min(&self) -> f64 {
        self.beta_left.min(self.beta_right)
    }

    #[inline]
    pub fn beta_max(&self) -> f64 {
        self.beta_left.max(self.beta_right)
    }
}

/// Specular reflection off a vertical wall: the horizontal component flips.
pub fn wall_reflect(v: Vec2) -> Result<Vec2> {
    if v.x == 0.0 {
        return Err(Error::ExcludedState(
            "wall contact with zero horizontal velocity is outside the phase space".into(),
        ));
    }
    Ok(Vec2::new(-v.x, v.y))
}

/// Particle-disk exchange in the disk frame at the contact point:
/// `v_perp' = -v_perp`, `v_t' = omega`, `omega' = v_t`.
///
/// `v_perp` is the velocity component along the disk's outward normal and
/// must be negative (incoming).
pub fn disk_interact(v_t: f64, v_perp: f64, omega: f64) -> Result<(f64, f64, f64)> {
    if v_perp >= 0.0 {
        return Err(Error::InvalidParam(format!(
            "disk interaction requires an incoming normal component, got v_perp = {v_perp}"
        )));
    }
    Ok((omega, -v_perp, v_t))
}

/// Draw `(s, sin(phi))` from the Gibbs emission law at inverse temperature
/// `beta`: `sin(phi)` uniform on (-1, 1) and the speed from the flux density
/// `(4 beta^{3/2}/sqrt(pi)) s^2 exp(-beta s^2)`, realized as the norm of
/// three independent centered Gaussians of variance `1/(2 beta)`.
pub fn sample_emission<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    let sigma = (0.5 / beta).sqrt();
    let s = loop {
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        let g3: f64 = rng.sample(StandardNormal);
        let s = sigma * (g1 * g1 + g2 * g2 + g3 * g3).sqrt();
        if s > MIN_SPEED {
            break s;
        }
    };
    let sin_phi = rng.gen_range(-1.0..1.0);
    Ok((s, sin_phi))
}

/// Build the outgoing particle for an emission at `point` on the outer
/// boundary of `half`.
pub fn emit_at<R: Rng + ?Sized>(
    point: Vec2,
    half: Half,
    params: &ReservoirParams,
    rng: &mut R,
) -> Result<ParticleState> {
    let (s, sin_phi) = sample_emission(params.beta_for(half), rng)?;
    let n = -point.normalized();
    let t = n.perp();
    let cos_phi = (1.0 - sin_phi * sin_phi).sqrt();
    let dir = n * cos_phi + t * sin_phi;
    Ok(ParticleState {
        position: point,
        velocity: dir * s,
        half,
        last_contact: LastContact::Outer,
    })
}

/// Absorption at the outer boundary followed by an immediate re-emission at
/// the same point, with a fresh Gibbs draw from the reservoir of the
/// particle's half.
pub fn absorb_and_emit<R: Rng + ?Sized>(
    p: &ParticleState,
    params: &ReservoirParams,
    geom: &GeometryConfig,
    rng: &mut R,
) -> Result<ParticleState> {
    let ro = geom.outer_radius();
    if (p.position.norm() - ro).abs() > 1e-9 * ro {
        return Err(Error::InvalidParam(
            "absorption requires a state on the outer boundary".into(),
        ));
    }
    if p.position.dot(p.velocity) <= 0.0 {
        return Err(Error::InvalidParam(
            "absorbed particle must be moving outward".into(),
        ));
    }
    emit_at(p.position, p.half, params, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;
    use crate::rng::replica_stream;
    use proptest::prelude::*;

    #[test]
    fn wall_reflect_examples() {
        let v = wall_reflect(Vec2::new(-0.8, 0.6)).unwrap();
        assert_eq!(v, Vec2::new(0.8, 0.6));
        assert_eq!(
            wall_reflect(Vec2::new(1.0, 0.0)).unwrap(),
            Vec2::new(-1.0, 0.0)
        );
        // speed preserved bit-exactly: only a sign flip
        let w = Vec2::new(-0.31, 0.77);
        assert_eq!(
            wall_reflect(w).unwrap().norm().to_bits(),
            w.norm().to_bits()
        );
        assert!(wall_reflect(Vec2::new(0.0, 1.0)).is_err());
    }

    #[test]
    fn disk_interact_examples() {
        assert_eq!(disk_interact(3.0, -4.0, 1.0).unwrap(), (1.0, 4.0, 3.0));
        assert_eq!(disk_interact(0.0, -1.0, 0.0).unwrap(), (0.0, 1.0, 0.0));
        // 3^2 + 4^2 + 1^2 = 1^2 + 4^2 + 3^2 = 26
        let (vt, vp, om) = disk_interact(3.0, -4.0, 1.0).unwrap();
        assert_eq!(vt * vt + vp * vp + om * om, 26.0);
        assert!(disk_interact(1.0, 0.0, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn exchange_preserves_energy(vt in -5.0f64..5.0, vp in -5.0f64..-1e-6, om in -5.0f64..5.0) {
            let (vt2, vp2, om2) = disk_interact(vt, vp, om).unwrap();
            let before = vt * vt + vp * vp + om * om;
            let after = vt2 * vt2 + vp2 * vp2 + om2 * om2;
            prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
            // the exchange is an involution combined with the normal flip
            let (vt3, vp3, om3) = disk_interact(vt2, -vp2, om2).unwrap();
            prop_assert_eq!((vt3, vp3, om3), (vt, -vp, om));
        }
    }

    #[test]
    fn emission_moments_small_sample() {
        let mut rng = replica_stream(7, 0);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut hits = 0u64;
        for _ in 0..n {
            let (s, sin_phi) = sample_emission(1.0, &mut rng).unwrap();
            sum += s;
            sum2 += s * s;
            if sin_phi.abs() <= 0.5 {
                hits += 1;
            }
        }
        let mean = sum / n as f64;
        let mean2 = sum2 / n as f64;
        // E[s] = 2/sqrt(pi), E[s^2] = 3/2; generous 5-sigma-ish windows
        assert!((mean - 1.1283791670955126).abs() < 0.005, "mean = {mean}");
        assert!((mean2 - 1.5).abs() < 0.01, "mean2 = {mean2}");
        // P(|sin phi| <= 0.5) = 0.5 for the uniform angle draw
        let frac = hits as f64 / n as f64;
        assert!((frac - 0.5).abs() < 0.005, "frac = {frac}");
    }

    #[test]
    fn emission_rejects_bad_beta() {
        let mut rng = replica_stream(7, 0);
        assert!(sample_emission(0.0, &mut rng).is_err());
        assert!(sample_emission(-2.0, &mut rng).is_err());
    }

    #[test]
    fn renewal_density_quadrature_identity() {
        // omega immediately after a disk collision by a fresh particle is
        // s * U with U uniform on (-1, 1); integrating the speed density once
        // gives sqrt(beta/pi) exp(-beta w^2).
        for &beta in &[1.0f64, 2.5] {
            let cut = 10.0 / beta.sqrt();
            for &w in &[0.0, 0.3, 0.9, 1.7] {
                let f = |s: f64| {
                    4.0 * beta.powf(1.5) / std::f64::consts::PI.sqrt()
                        * s
                        * s
                        * (-beta * s * s).exp()
                        / (2.0 * s)
                };
                let (val, _) = quad::integrate(f, w, cut, 1e-10, 1e-14).unwrap();
                let expected = (beta / std::f64::consts::PI).sqrt() * (-beta * w * w).exp();
                assert!(
                    (val - expected).abs() < 1e-9,
                    "w = {w}: {val} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn absorption_uses_the_reservoir_of_the_half() {
        // beta_right much colder: right-half emissions must come out far
        // slower than left-half ones.
        let geom = GeometryConfig::new(1.0, 1.0).unwrap();
        let params = ReservoirParams::new(1.0, 10_000.0).unwrap();
        let mut rng = replica_stream(13, 0);
        let mut mean = [0.0f64; 2];
        for (idx, (half, x)) in [(Half::Left, -2.0), (Half::Right, 2.0)]
            .into_iter()
            .enumerate()
        {
            let p = ParticleState {
                position: Vec2::new(x, 0.0),
                velocity: Vec2::new(x, 0.0),
                half,
                last_contact: LastContact::Disk,
            };
            for _ in 0..2000 {
                mean[idx] += absorb_and_emit(&p, &params, &geom, &mut rng)
                    .unwrap()
                    .speed();
            }
            mean[idx] /= 2000.0;
        }
        // E[s] scales as 1/sqrt(beta): ratio should be near 100
        assert!(
            mean[0] / mean[1] > 50.0,
            "left {} vs right {}",
            mean[0],
            mean[1]
        );
    }

    #[test]
    fn absorb_and_emit_contract() {
        let geom = GeometryConfig::new(1.0, 1.0).unwrap();
        let params = ReservoirParams::new(1.0, 4.0).unwrap();
        let mut rng = replica_stream(11, 0);
        let p = ParticleState {
            position: Vec2::new(2.0, 0.0),
            velocity: Vec2::new(1.0, 0.3),
            half: Half::Right,
            last_contact: LastContact::Wall,
        };
        for _ in 0..200 {
            let q = absorb_and_emit(&p, &params, &geom, &mut rng).unwrap();
            // position unchanged, outgoing direction strictly inward
            assert_eq!(q.position, p.position);
            let n = -q.position.normalized();
            assert!(q.velocity.normalized().dot(n) > 0.0);
            assert_eq!(q.half, Half::Right);
            assert_eq!(q.last_contact, LastContact::Outer);
        }
        // off-boundary absorption is a contract violation
        let bad = ParticleState {
            position: Vec2::new(1.5, 0.0),
            ..p
        };
        assert!(absorb_and_emit(&bad, &params, &geom, &mut rng).is_err());
    }
}
