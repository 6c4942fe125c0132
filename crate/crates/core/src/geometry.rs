//! Static geometry of the domain: a circular boundary of radius `R + d`
//! enclosing a concentric disk of radius `R`, with two vertical wall segments
//! on `x = 0` (between the disk and the outer circle) splitting the annulus
//! into a left and a right half.
//!
//! Everything here is a pure closed-form solver: ray tracing against the
//! three surface families, wall-unfolded tracing to the next disk/boundary
//! collision, and conversion between Cartesian states and the collision
//! coordinates `(r, s, sin(phi), xi)` anchored at a boundary collision.

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Relative positional tolerance for "on a surface" classification.
const ON_SURFACE_REL_TOL: f64 = 1e-9;
/// Discriminant guard for near-tangential disk intersections, relative to R^2.
/// Tangential collisions are excluded from the phase space; treating a
/// grazing chord as a miss avoids catastrophic cancellation in the root.
const TANGENTIAL_GUARD_REL: f64 = 1e-12;
/// Minimal forward advance accepted by the tracer, relative to R + d.
const MIN_ADVANCE_REL: f64 = 1e-12;

/// Which half of the split annulus a particle lives in. Particles never
/// change halves; the tag is carried explicitly so wall-contact states are
/// unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Half {
    Left,
    Right,
}

impl Half {
    /// Unit normal of the wall plane pointing into this half.
    #[inline]
    pub fn wall_inward_normal(self) -> Vec2 {
        match self {
            Half::Left => Vec2::new(-1.0, 0.0),
            Half::Right => Vec2::new(1.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Surface {
    OuterBoundaryLeft,
    OuterBoundaryRight,
    Disk,
    WallUpper,
    WallLower,
}

impl Surface {
    #[inline]
    pub fn is_outer(self) -> bool {
        matches!(
            self,
            Surface::OuterBoundaryLeft | Surface::OuterBoundaryRight
        )
    }

    #[inline]
    pub fn is_wall(self) -> bool {
        matches!(self, Surface::WallUpper | Surface::WallLower)
    }

    /// Disk and outer-boundary contacts; wall bounces are not "collisions"
    /// in the flight-time sense.
    #[inline]
    pub fn is_major(self) -> bool {
        !self.is_wall()
    }
}

/// Immutable run geometry. Only `R` and `d` are stored; `alpha` and `l_half`
/// are always recomputed from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConfig {
    disk_radius: f64,
    gap: f64,
}

impl GeometryConfig {
    pub fn new(disk_radius: f64, gap: f64) -> Result<Self> {
        if !(disk_radius.is_finite() && disk_radius > 0.0) {
            return Err(Error::InvalidParam(format!(
                "R must be positive, got {disk_radius}"
            )));
        }
        if !(gap.is_finite() && gap > 0.0) {
            return Err(Error::InvalidParam(format!(
                "d must be positive, got {gap}"
            )));
        }
        Ok(GeometryConfig { disk_radius, gap })
    }

    /// Disk radius R.
    #[inline]
    pub fn disk_radius(&self) -> f64 {
        self.disk_radius
    }

    /// Annulus gap d.
    #[inline]
    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Outer boundary radius R + d.
    #[inline]
    pub fn outer_radius(&self) -> f64 {
        self.disk_radius + self.gap
    }

    /// alpha = R / (R + d), the sine of the critical emission angle.
    #[inline]
    pub fn alpha(&self) -> f64 {
        self.disk_radius / self.outer_radius()
    }

    /// l = sqrt((R+d)^2 - R^2), half of the maximal flight distance.
    #[inline]
    pub fn l_half(&self) -> f64 {
        let ro = self.outer_radius();
        (ro * ro - self.disk_radius * self.disk_radius).sqrt()
    }

    #[inline]
    fn on_surface_tol(&self) -> f64 {
        ON_SURFACE_REL_TOL * self.outer_radius()
    }

    #[inline]
    fn min_advance(&self) -> f64 {
        MIN_ADVANCE_REL * self.outer_radius()
    }
}

/// First intersection of a ray with one of the bounding surfaces.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceHit {
    pub surface: Surface,
    pub point: Vec2,
    pub distance: f64,
    pub inward_normal: Vec2,
}

/// Full chord of the outer circle at emission angle `sin_phi`, ignoring the
/// disk and the walls: 2 (R+d) cos(phi).
pub fn chord_length(geom: &GeometryConfig, sin_phi: f64) -> Result<f64> {
    if !(sin_phi.abs() < 1.0) {
        return Err(Error::Domain(format!(
            "|sin(phi)| must be < 1, got {sin_phi}"
        )));
    }
    Ok(2.0 * geom.outer_radius() * (1.0 - sin_phi * sin_phi).sqrt())
}

/// Distance from the outer boundary to the disk along the chord at emission
/// angle `sin_phi`, or `None` when the chord misses the disk (|sin phi| > alpha
/// or the approach is within the tangential guard).
pub fn disk_entry_distance(geom: &GeometryConfig, sin_phi: f64) -> Result<Option<f64>> {
    if !(sin_phi.abs() < 1.0) {
        return Err(Error::Domain(format!(
            "|sin(phi)| must be < 1, got {sin_phi}"
        )));
    }
    let ro = geom.outer_radius();
    let r = geom.disk_radius();
    let disc = r * r - ro * ro * sin_phi * sin_phi;
    if disc <= TANGENTIAL_GUARD_REL * r * r {
        return Ok(None);
    }
    let cos_phi = (1.0 - sin_phi * sin_phi).sqrt();
    Ok(Some(ro * cos_phi - disc.sqrt()))
}

/// sin(phi') = sin(phi) / alpha, the sine of the incidence angle at the disk.
pub fn disk_angle_map(geom: &GeometryConfig, sin_phi: f64) -> Result<f64> {
    let alpha = geom.alpha();
    if sin_phi.abs() > alpha {
        return Err(Error::Domain(format!(
            "|sin(phi)| = {} exceeds alpha = {alpha}",
            sin_phi.abs()
        )));
    }
    Ok(sin_phi / alpha)
}

/// Larger root of t^2 + 2 b t + c = 0, computed in the cancellation-free form.
#[inline]
fn quadratic_larger_root(b: f64, c: f64) -> Option<f64> {
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sd = disc.sqrt();
    Some(if b <= 0.0 { -b + sd } else { c / (-b - sd) })
}

/// Nearest strictly positive intersection of the ray `origin + t dir` with
/// the outer circle, the disk, or the wall plane, with the tie priority
/// Disk > Wall > Outer. `dir` must be unit length; `half` tags the outer arc
/// and orients the wall normal.
pub fn trace_ray(geom: &GeometryConfig, origin: Vec2, dir: Vec2, half: Half) -> Result<SurfaceHit> {
    debug_assert!(
        (dir.norm_sq() - 1.0).abs() < 1e-9,
        "direction must be unit length"
    );
    let ro = geom.outer_radius();
    let r = geom.disk_radius();
    let eps = geom.min_advance();
    let b = origin.dot(dir);
    let o2 = origin.norm_sq();

    let mut best: Option<(f64, Surface)> = None;

    // Disk: smaller positive root, approaching rays only, tangential guard.
    if b < 0.0 {
        let c = o2 - r * r;
        let disc = b * b - c;
        if disc > TANGENTIAL_GUARD_REL * r * r && c > 0.0 {
            let t = c / (-b + disc.sqrt());
            if t > eps {
                best = Some((t, Surface::Disk));
            }
        }
    }

    // Wall plane x = 0, restricted to |y| between R and R + d.
    if dir.x != 0.0 {
        let t = -origin.x / dir.x;
        if t > eps {
            let y = origin.y + t * dir.y;
            let tol = geom.on_surface_tol();
            if y.abs() >= r - tol && y.abs() <= ro + tol {
                let surface = if y > 0.0 {
                    Surface::WallUpper
                } else {
                    Surface::WallLower
                };
                if best.is_none_or(|(tb, _)| t < tb) {
                    best = Some((t, surface));
                }
            }
        }
    }

    // Outer circle: the exit root is always the larger one.
    if let Some(t) = quadratic_larger_root(b, o2 - ro * ro) {
        if t > eps && best.is_none_or(|(tb, _)| t < tb) {
            let surface = match half {
                Half::Left => Surface::OuterBoundaryLeft,
                Half::Right => Surface::OuterBoundaryRight,
            };
            best = Some((t, surface));
        }
    }

    let (t, surface) = best.ok_or_else(|| {
        Error::InvariantViolation(format!(
            "no surface ahead of ray at ({}, {}) dir ({}, {})",
            origin.x, origin.y, dir.x, dir.y
        ))
    })?;

    let raw = origin + dir * t;
    let (point, inward_normal) = match surface {
        Surface::Disk => {
            let p = raw * (r / raw.norm());
            (p, p.normalized())
        }
        Surface::WallUpper | Surface::WallLower => {
            (Vec2::new(0.0, raw.y), half.wall_inward_normal())
        }
        _ => {
            let p = raw * (ro / raw.norm());
            (p, -p.normalized())
        }
    };

    Ok(SurfaceHit {
        surface,
        point,
        distance: t,
        inward_normal,
    })
}

/// Result of tracing through wall reflections to the next disk or outer
/// boundary contact.
#[derive(Debug, Clone, Copy)]
pub struct MajorHit {
    pub surface: Surface,
    pub point: Vec2,
    pub inward_normal: Vec2,
    /// Total path length, wall segments included.
    pub total_distance: f64,
    /// Unit direction of travel on arrival at the major surface.
    pub arrival_dir: Vec2,
    pub wall_bounces: u32,
}

/// Trace from `origin` along `dir`, reflecting specularly off the wall, until
/// the disk or the outer boundary is reached. In this geometry at most one
/// wall bounce can occur between major contacts; the loop cap is a safety
/// net, not an expected path.
pub fn trace_to_major(
    geom: &GeometryConfig,
    origin: Vec2,
    dir: Vec2,
    half: Half,
) -> Result<MajorHit> {
    let mut pos = origin;
    let mut u = dir;
    let mut total = 0.0;
    let mut bounces = 0u32;
    loop {
        let hit = trace_ray(geom, pos, u, half)?;
        total += hit.distance;
        if hit.surface.is_major() {
            return Ok(MajorHit {
                surface: hit.surface,
                point: hit.point,
                inward_normal: hit.inward_normal,
                total_distance: total,
                arrival_dir: u,
                wall_bounces: bounces,
            });
        }
        bounces += 1;
        if bounces > 4 {
            return Err(Error::InvariantViolation(
                "more than 4 wall bounces between major collisions".into(),
            ));
        }
        pos = hit.point;
        u = Vec2::new(-u.x, u.y);
    }
}

/// Collision coordinates of an in-flight state, anchored at the reference
/// boundary collision: the past one if the last non-wall collision was with
/// the outer boundary, the future one after a disk collision.
///
/// Sign convention: `xi >= 0` when the reference collision is in the past
/// (distance already flown), `xi < 0` when it is in the future (minus the
/// distance still to fly).
#[derive(Debug, Clone, Copy)]
pub struct CollisionCoords {
    /// Arc-length position on the outer boundary, (R+d) * atan2(y, x).
    pub arc_pos: f64,
    pub half: Half,
    pub speed: f64,
    /// Sine of the angle between the inward ray at the reference collision
    /// and the inward normal there.
    pub sin_phi: f64,
    pub xi: f64,
}

impl CollisionCoords {
    /// Point on the outer boundary corresponding to `arc_pos`.
    pub fn boundary_point(&self, geom: &GeometryConfig) -> Vec2 {
        let ro = geom.outer_radius();
        let psi = self.arc_pos / ro;
        Vec2::new(ro * psi.cos(), ro * psi.sin())
    }

    /// Unit ray pointing into the domain at the reference collision.
    pub fn inward_ray(&self, geom: &GeometryConfig) -> Vec2 {
        let p = self.boundary_point(geom);
        let n = -p.normalized();
        let t = n.perp();
        let cos_phi = (1.0 - self.sin_phi * self.sin_phi).max(0.0).sqrt();
        n * cos_phi + t * self.sin_phi
    }
}

fn coords_at_boundary(
    geom: &GeometryConfig,
    point: Vec2,
    inward_ray: Vec2,
    half: Half,
    speed: f64,
    xi: f64,
) -> CollisionCoords {
    let ro = geom.outer_radius();
    let n = -point.normalized();
    let t = n.perp();
    let sin_phi = inward_ray.dot(t);
    CollisionCoords {
        arc_pos: ro * point.y.atan2(point.x),
        half,
        speed,
        sin_phi,
        xi,
    }
}

/// Convert a Cartesian in-flight state into collision coordinates.
pub fn to_collision_coords(
    geom: &GeometryConfig,
    x: Vec2,
    v: Vec2,
    half: Half,
) -> Result<CollisionCoords> {
    let speed = v.norm();
    if !(speed > 0.0) {
        return Err(Error::ExcludedState(
            "stopped particle has no collision coordinates".into(),
        ));
    }
    let u = v * (1.0 / speed);
    let tol = geom.on_surface_tol();
    let radial = x.norm();

    // Exactly-on-boundary states: the collision instant itself.
    if radial >= geom.outer_radius() - tol {
        let w = if x.dot(u) <= 0.0 { u } else { -u };
        return Ok(coords_at_boundary(geom, x, w, half, speed, 0.0));
    }
    // On the disk moving outward: the disk collision just happened, so the
    // reference is the future boundary collision.
    if radial <= geom.disk_radius() + tol && x.dot(u) > 0.0 {
        let fwd = trace_to_major(geom, x, u, half)?;
        if fwd.surface == Surface::Disk {
            return Err(Error::InvariantViolation(
                "second disk collision before reaching the outer boundary".into(),
            ));
        }
        return Ok(coords_at_boundary(
            geom,
            fwd.point,
            -fwd.arrival_dir,
            half,
            speed,
            -fwd.total_distance,
        ));
    }

    // Generic in-flight state: trace backward; the first major surface met is
    // the last non-wall collision of the actual history.
    let back = trace_to_major(geom, x, -u, half)?;
    match back.surface {
        Surface::Disk => {
            let fwd = trace_to_major(geom, x, u, half)?;
            if fwd.surface == Surface::Disk {
                return Err(Error::InvariantViolation(
                    "second disk collision before reaching the outer boundary".into(),
                ));
            }
            Ok(coords_at_boundary(
                geom,
                fwd.point,
                -fwd.arrival_dir,
                half,
                speed,
                -fwd.total_distance,
            ))
        }
        _ => Ok(coords_at_boundary(
            geom,
            back.point,
            -back.arrival_dir,
            half,
            speed,
            back.total_distance,
        )),
    }
}

/// Rebuild the Cartesian state from collision coordinates (the round-trip
/// oracle for `to_collision_coords`, also used to place test states).
pub fn reconstruct_state(geom: &GeometryConfig, coords: &CollisionCoords) -> Result<(Vec2, Vec2)> {
    let mut pos = coords.boundary_point(geom);
    let mut u = coords.inward_ray(geom);
    let mut remaining = coords.xi.abs();
    let eps = geom.min_advance();

    while remaining > eps {
        let hit = trace_ray(geom, pos, u, coords.half)?;
        if hit.distance >= remaining {
            pos += u * remaining;
            break;
        }
        if !hit.surface.is_wall() {
            return Err(Error::InvalidParam(format!(
                "xi = {} exceeds the free path from the reference collision",
                coords.xi
            )));
        }
        remaining -= hit.distance;
        pos = hit.point;
        u = Vec2::new(-u.x, u.y);
    }

    let v = if coords.xi >= 0.0 {
        u * coords.speed
    } else {
        -(u * coords.speed)
    };
    Ok((pos, v))
}
