use diskbilliard::dynamics::ReservoirParams;
use diskbilliard::engine::{initial_state, Engine};
use diskbilliard::geometry::GeometryConfig;
use diskbilliard::rng::replica_stream;

fn main() {
    let geom = GeometryConfig::new(1.0, 1.0).unwrap();
    let params = ReservoirParams::new(1.0, 2.0).unwrap();
    let mut rng = replica_stream(1, 0);
    let state = initial_state(geom, params, 1, 1, &mut rng).unwrap();
    let mut engine = Engine::new(state).unwrap();
    let n: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10_000_000);
    let t0 = std::time::Instant::now();
    let mut outer = 0u64;
    for _ in 0..n {
        let rec = engine.step(&mut rng).unwrap();
        if rec.surface.is_outer() {
            outer += 1;
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "{n} events in {dt:.2} s = {:.1} M events/s; clock = {:.1}; outer frac = {:.3}; events/time = {:.3}",
        n as f64 / dt / 1e6,
        engine.clock(),
        outer as f64 / n as f64,
        n as f64 / engine.clock()
    );
}
