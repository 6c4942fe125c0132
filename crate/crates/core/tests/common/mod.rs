//! Brute-force oracles shared by the integration tests. Everything here is
//! deliberately independent of the closed-form solvers it checks.

use diskbilliard::geometry::GeometryConfig;
use diskbilliard::vec2::Vec2;

/// Which surface family a marching walk terminated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarchSurface {
    Outer,
    Disk,
    Wall,
}

/// Small-step ray marcher: walk `origin + t dir` in increments of `step`
/// until the point leaves the annulus, enters the disk, or crosses the wall
/// plane inside the wall segments. Returns the surface kind and the distance
/// at first detection (resolution = one step).
///
/// Within one step the checks run in the same priority order as the exact
/// tracer (disk, wall, outer) so grazing corner cases classify identically.
pub fn march_first_hit(
    geom: &GeometryConfig,
    origin: Vec2,
    dir: Vec2,
    step: f64,
) -> Option<(MarchSurface, f64)> {
    let ro = geom.outer_radius();
    let r = geom.disk_radius();
    let ro2 = ro * ro;
    let r2 = r * r;
    let b = origin.dot(dir);
    let o2 = origin.norm_sq();
    let x0 = origin.x;
    let wall_tol = 1e-9 * ro;

    let max_steps = (5.0 * ro / step) as u64;
    let mut prev_x = x0;
    for k in 1..max_steps {
        let t = k as f64 * step;
        let rad2 = t * t + 2.0 * b * t + o2;
        if rad2 <= r2 {
            return Some((MarchSurface::Disk, t));
        }
        let x = x0 + t * dir.x;
        if x == 0.0 || (x > 0.0) != (prev_x > 0.0) {
            let y = (origin.y + t * dir.y).abs();
            if y >= r - wall_tol && y <= ro + wall_tol {
                return Some((MarchSurface::Wall, t));
            }
        }
        prev_x = x;
        if rad2 >= ro2 {
            return Some((MarchSurface::Outer, t));
        }
    }
    None
}
