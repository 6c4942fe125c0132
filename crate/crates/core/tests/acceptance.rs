//! Acceptance suite: one test per quantitative claim, each printing a
//! PASS/FAIL line (visible with `--nocapture`). Tolerances are fixed here,
//! not tuned at runtime.

mod common;

use common::{march_first_hit, MarchSurface};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use diskbilliard::dynamics::{sample_emission, DiskState, ReservoirParams};
use diskbilliard::engine::{
    in_c, initial_state, run_to_tau, run_to_tau_after_delay, sample_c_surrogate, CSetParams,
    Engine, EvolveLimits, SystemState,
};
use diskbilliard::geometry::{
    chord_length, trace_ray, trace_to_major, GeometryConfig, Half, Surface,
};
use diskbilliard::observables::{
    auto_fit_window, b_t_tail, build_steady_ensemble, deposit_rate, fit_power_law, mixing_decay,
    perturbed_initial, tail_scan, DepositMcParams, TailScanParams,
};
use diskbilliard::oracles::{d_bound, dprime_bound, hit_bound, k_bound, maxwell_cdf};
use diskbilliard::rng::replica_stream;
use diskbilliard::stats::{ks_statistic, mean_stderr, weighted_line_fit};
use diskbilliard::vec2::Vec2;

fn geom() -> GeometryConfig {
    GeometryConfig::new(1.0, 1.0).unwrap()
}

fn report(id: &str, name: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {id} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{id} {name}: {detail}");
}

/// Random emission direction at a boundary point for angle `sin_phi`.
fn emission_dir(point: Vec2, sin_phi: f64) -> Vec2 {
    let n = -point.normalized();
    n * (1.0 - sin_phi * sin_phi).sqrt() + n.perp() * sin_phi
}

fn boundary_point<R: Rng>(geom: &GeometryConfig, rng: &mut R) -> Vec2 {
    let psi = rng.gen_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
    Vec2::new(
        geom.outer_radius() * psi.cos(),
        geom.outer_radius() * psi.sin(),
    )
}

// 1. Sampler laws: emitted angles uniform in sin(phi), speeds on the flux
//    Maxwell law, mean speed at 2/sqrt(pi).
#[test]
fn c01_sampler_laws() {
    let beta = 1.0;
    let n = 1_000_000usize;
    let mut rng = replica_stream(101, 0);
    let mut speeds = Vec::with_capacity(n);
    let mut angles = Vec::with_capacity(n);
    for _ in 0..n {
        let (s, u) = sample_emission(beta, &mut rng).unwrap();
        speeds.push(s);
        angles.push(u);
    }
    let (mean, se) = mean_stderr(&speeds);
    let expect = 2.0 / std::f64::consts::PI.sqrt();
    let ks_s = ks_statistic(&mut speeds, |s| maxwell_cdf(beta, s));
    let ks_u = ks_statistic(&mut angles, |u| ((u + 1.0) / 2.0).clamp(0.0, 1.0));
    let mean_ok = (mean - expect).abs() <= 3.0 * se;
    report(
        "c01",
        "sampler-laws",
        ks_s < 0.01 && ks_u < 0.01 && mean_ok,
        &format!(
            "KS_s = {ks_s:.5}, KS_angle = {ks_u:.5}, E[s] = {mean:.6} vs {expect:.6} +- {:.1e}",
            3.0 * se
        ),
    );
}

// 2. Probability that a fresh emission hits the disk equals alpha = 1/2.
#[test]
fn c02_disk_hit_probability() {
    let g = geom();
    let n = 1_000_000u64;
    let mut rng = replica_stream(102, 0);
    let mut hits = 0u64;
    for _ in 0..n {
        let point = boundary_point(&g, &mut rng);
        let (_, u) = sample_emission(1.0, &mut rng).unwrap();
        let m = trace_to_major(&g, point, emission_dir(point, u), Half::Right).unwrap();
        hits += (m.surface == Surface::Disk) as u64;
    }
    let frac = hits as f64 / n as f64;
    let alpha = g.alpha();
    let se = (alpha * (1.0 - alpha) / n as f64).sqrt();
    report(
        "c02",
        "disk-hit-probability",
        (frac - alpha).abs() <= 3.0 * se,
        &format!(
            "fraction = {frac:.6} vs alpha = {alpha} +- {:.1e}",
            3.0 * se
        ),
    );
}

// 3. Exact tracer against the small-step marching oracle, plus the
//    wall-unfolding identity.
#[test]
fn c03_geometry_oracle() {
    let g = geom();
    let ro = g.outer_radius();
    let step = 1e-6 * ro;
    let tol = 1e-5 * ro;
    let n_rays = 10_000;

    let mut rng = replica_stream(103, 0);
    let mut rays = Vec::with_capacity(n_rays);
    while rays.len() < n_rays {
        let x = rng.gen_range(0.001..ro);
        let y = rng.gen_range(-ro..ro);
        let p = Vec2::new(x, y);
        let r = p.norm();
        if r <= g.disk_radius() + 1e-3 || r >= ro - 1e-3 {
            continue;
        }
        let ang = rng.gen_range(0.0..std::f64::consts::TAU);
        rays.push((p, Vec2::new(ang.cos(), ang.sin())));
    }

    let failures: usize = rays
        .par_iter()
        .map(|&(p, d)| {
            let exact = trace_ray(&g, p, d, Half::Right).unwrap();
            let (kind, dist) = march_first_hit(&g, p, d, step).expect("march found no surface");
            let kind_ok = match exact.surface {
                Surface::Disk => kind == MarchSurface::Disk,
                Surface::WallUpper | Surface::WallLower => kind == MarchSurface::Wall,
                _ => kind == MarchSurface::Outer,
            };
            usize::from(!(kind_ok && (dist - exact.distance).abs() <= tol))
        })
        .sum();

    // unfolding identity on wall-reflected chords
    let mut bounced = 0;
    let mut unfold_bad = 0;
    let mut draws = 0;
    while bounced < 1_000 && draws < 100_000 {
        draws += 1;
        let point = boundary_point(&g, &mut rng);
        let mag = rng.gen_range(g.alpha()..1.0);
        let u = if rng.gen_bool(0.5) { mag } else { -mag };
        let m = trace_to_major(&g, point, emission_dir(point, u), Half::Right).unwrap();
        if m.wall_bounces > 0 {
            bounced += 1;
            if (m.total_distance - chord_length(&g, u).unwrap()).abs() > 1e-9 {
                unfold_bad += 1;
            }
        }
    }
    report(
        "c03",
        "geometry-oracle",
        failures == 0 && unfold_bad == 0 && bounced == 1_000,
        &format!("{n_rays} rays vs marcher: {failures} mismatches; unfolding violations {unfold_bad}/{bounced}"),
    );
}

// 4. Exchange invariant at every disk event over >= 10^7 events and the
//    global energy ledger, plus the geometric single-disk-contact claim and
//    no tunneling out of the half-annulus.
#[test]
fn c04_exchange_and_ledger() {
    let g = geom();
    let params = ReservoirParams::new(1.0, 2.0).unwrap();
    let mut rng = replica_stream(104, 0);
    let state = initial_state(g, params, 1, 1, &mut rng).unwrap();
    let e0 = state.energy();
    let k = state.particles.len();
    let mut engine = Engine::new(state).unwrap();

    let n_events = 12_000_000u64;
    let mut worst_exchange = 0.0f64;
    let mut ledger = 0.0;
    let mut disk_since_boundary = vec![0u32; k];
    let mut single_ok = true;
    let mut inside_ok = true;
    let mut last_time = 0.0;
    let mut monotone = true;
    for _ in 0..n_events {
        let rec = engine.step(&mut rng).unwrap();
        monotone &= rec.time >= last_time;
        last_time = rec.time;
        match rec.surface {
            Surface::Disk => {
                let before = rec.s_pre * rec.s_pre + rec.omega_pre * rec.omega_pre;
                let after = rec.s_post * rec.s_post + rec.omega_post * rec.omega_post;
                worst_exchange = worst_exchange.max((before - after).abs() / before.max(1e-300));
                disk_since_boundary[rec.particle] += 1;
                single_ok &= disk_since_boundary[rec.particle] <= 1;
            }
            s if s.is_outer() => {
                ledger += 0.5 * (rec.s_post * rec.s_post - rec.s_pre * rec.s_pre);
                disk_since_boundary[rec.particle] = 0;
            }
            _ => {}
        }
        let p = &engine.state().particles[rec.particle];
        let r = p.position.norm();
        inside_ok &= r >= g.disk_radius() - 1e-9 && r <= g.outer_radius() + 1e-9;
    }
    let e1 = engine.state().energy();
    let drift = ((e1 - e0) - ledger).abs() / e1.max(1.0);
    report(
        "c04",
        "exchange-and-ledger",
        worst_exchange <= 1e-12 && drift <= 1e-9 && single_ok && inside_ok && monotone,
        &format!(
            "{n_events} events: worst exchange residual {worst_exchange:.2e}, ledger drift {drift:.2e}, single-disk {single_ok}, inside {inside_ok}"
        ),
    );
}

// 5. Disk velocity renewal: omega immediately after disk collisions by
//    boundary-emitted particles follows sqrt(beta/pi) exp(-beta omega^2).
#[test]
fn c05_disk_renewal_law() {
    let g = geom();
    let beta = 1.0;
    let params = ReservoirParams::new(beta, beta).unwrap();
    let mut rng = replica_stream(105, 0);
    let state = initial_state(g, params, 1, 1, &mut rng).unwrap();
    let k = state.particles.len();
    let mut engine = Engine::new(state).unwrap();
    let mut emitted = vec![false; k];
    let mut omegas = Vec::with_capacity(100_000);
    while omegas.len() < 100_000 {
        let rec = engine.step(&mut rng).unwrap();
        match rec.surface {
            Surface::Disk if emitted[rec.particle] => omegas.push(rec.omega_post),
            s if s.is_outer() => emitted[rec.particle] = true,
            _ => {}
        }
    }
    let ks = ks_statistic(&mut omegas, |w| 0.5 * (1.0 + libm::erf(beta.sqrt() * w)));
    report(
        "c05",
        "disk-renewal-law",
        ks < 0.02,
        &format!("KS = {ks:.5} over 1e5 collisions"),
    );
}

// 6. Deposit-rate cube law: quadrature vs importance-sampled Monte Carlo at
//    T in {10, 30, 100} within 5%, and slope -3 of the analytic tail.
#[test]
fn c06_deposit_rate_cube_law() {
    let g = geom();
    let beta = 1.0;
    let mut detail = String::new();
    let mut agree = true;
    for (i, &t) in [10.0, 30.0, 100.0].iter().enumerate() {
        let r = deposit_rate(
            beta,
            &g,
            t,
            0.0,
            &DepositMcParams {
                samples: 20_000_000,
                seed: 1060 + i as u64,
            },
        )
        .unwrap();
        let rel = (r.monte_carlo - r.analytic).abs() / r.analytic;
        agree &= rel <= 0.05;
        detail.push_str(&format!(
            "T={t}: analytic {:.4e} vs MC {:.4e} ({:+.2}%); ",
            r.analytic,
            r.monte_carlo,
            100.0 * rel
        ));
    }

    let grid: Vec<f64> = (0..25)
        .map(|i| 10.0 * 10f64.powf(i as f64 / 12.0))
        .collect();
    let tiny = DepositMcParams {
        samples: 1024,
        seed: 1,
    };
    let xs: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = grid
        .iter()
        .map(|&t| deposit_rate(beta, &g, t, 0.0, &tiny).unwrap().analytic.ln())
        .collect();
    let w = vec![1.0; xs.len()];
    let slope = weighted_line_fit(&xs, &ys, &w).unwrap().slope;
    let slope_ok = (slope + 3.0).abs() <= 0.2;
    report(
        "c06",
        "deposit-rate-cube-law",
        agree && slope_ok,
        &format!("{detail}slope over [10,1000] = {slope:.4}"),
    );
}

// 7. The central reproduction: the steady-state probability of a pending
//    free flight longer than T decays like T^-2.
#[test]
fn c07_steady_tail_exponent() {
    let g = geom();
    let params = ReservoirParams::new(1.0, 2.0).unwrap();
    let grid: Vec<f64> = (0..31)
        .map(|i| 10.0 * 10f64.powf(i as f64 / 15.0))
        .collect();
    let scan = TailScanParams {
        t_grid: grid,
        n_snapshots: 60_000_000,
        burn_in: 100.0,
        spacing: 2.0,
        replicas: 4,
        seed: 107,
        max_events_per_replica: 2_000_000_000,
    };
    let acc = tail_scan(g, params, 1, 1, &scan).unwrap();
    let curve = acc.curve();
    assert!(
        curve.n >= 1_000_000,
        "ensemble must hold at least 1e6 snapshots"
    );
    let window = auto_fit_window(&acc, 50, 30).expect("tail too thin for a fit window");
    let fit = fit_power_law(&curve, window).unwrap();
    report(
        "c07",
        "steady-tail-exponent",
        (fit.exponent + 2.0).abs() <= 0.3,
        &format!(
            "exponent = {:.4} +- {:.4} over [{:.1}, {:.1}] ({} snapshots, {} points)",
            fit.exponent, fit.stderr, window.0, window.1, curve.n, fit.n_points
        ),
    );
}

// 8. Analytic bounds dominate their Monte Carlo counterparts, and the
//    regeneration-time estimate is stable in n.
#[test]
fn c08_bounds_dominate_simulation() {
    let g = geom();

    // K: mean boundary-to-boundary flight time of a fresh emission with the
    // disk set to a renewal-law velocity.
    let beta = 1.0;
    let eq = ReservoirParams::new(beta, beta).unwrap();
    let k_report = k_bound(beta, &g).unwrap();
    let mut rng = replica_stream(108, 0);
    let n_flights = 1_000_000usize;
    let mut flights = Vec::with_capacity(n_flights);
    let sigma = (0.5 / beta).sqrt();
    for _ in 0..n_flights {
        let point = boundary_point(&g, &mut rng);
        let (s, u) = sample_emission(beta, &mut rng).unwrap();
        let omega = sigma * rng.sample::<f64, _>(StandardNormal);
        let state = SystemState {
            particles: vec![diskbilliard::dynamics::ParticleState {
                position: point,
                velocity: emission_dir(point, u) * s,
                half: Half::Right,
                last_contact: diskbilliard::dynamics::LastContact::Outer,
            }],
            disk: DiskState { theta: 0.0, omega },
            clock: 0.0,
            geom: g,
            params: eq,
        };
        let mut engine = Engine::new(state).unwrap();
        loop {
            let rec = engine.step(&mut rng).unwrap();
            if rec.surface.is_outer() {
                flights.push(rec.time);
                break;
            }
        }
    }
    let (mean_flight, se_flight) = mean_stderr(&flights);
    let k_ok = k_report.value >= mean_flight + 3.0 * se_flight;

    // K/alpha: completed emission -> disk -> boundary cycles with re-emission
    // on every boundary contact, and the geometric round count.
    let h_report = hit_bound(&k_report, &g);
    let n_cycles = 200_000usize;
    let mut cycle_times = Vec::with_capacity(n_cycles);
    let mut rounds = Vec::with_capacity(n_cycles);
    for _ in 0..n_cycles {
        let point = boundary_point(&g, &mut rng);
        let (s, u) = sample_emission(beta, &mut rng).unwrap();
        let state = SystemState {
            particles: vec![diskbilliard::dynamics::ParticleState {
                position: point,
                velocity: emission_dir(point, u) * s,
                half: Half::Right,
                last_contact: diskbilliard::dynamics::LastContact::Outer,
            }],
            disk: DiskState {
                theta: 0.0,
                omega: 0.3,
            },
            clock: 0.0,
            geom: g,
            params: eq,
        };
        let mut engine = Engine::new(state).unwrap();
        let mut n_rounds = 1u32;
        let mut seen_disk = false;
        loop {
            let rec = engine.step(&mut rng).unwrap();
            match rec.surface {
                Surface::Disk => seen_disk = true,
                s if s.is_outer() => {
                    if seen_disk {
                        cycle_times.push(rec.time);
                        rounds.push(n_rounds as f64);
                        break;
                    }
                    n_rounds += 1;
                }
                _ => {}
            }
        }
    }
    let (mean_cycle, se_cycle) = mean_stderr(&cycle_times);
    let (mean_rounds, se_rounds) = mean_stderr(&rounds);
    let hit_ok = h_report.value >= mean_cycle + 3.0 * se_cycle;
    let rounds_ok = (mean_rounds - 1.0 / g.alpha()).abs() <= 3.0 * se_rounds;

    // D: regeneration time after one regeneration, from fresh initial draws.
    let ness = ReservoirParams::new(1.0, 2.0).unwrap();
    let d_report = d_bound(1.0, 2.0, &g).unwrap();
    let n_tau = 10_000usize;
    let mut taus = Vec::with_capacity(n_tau);
    for _ in 0..n_tau {
        let state = initial_state(g, ness, 1, 1, &mut rng).unwrap();
        let (at_tau, _) = run_to_tau(state, &mut rng, 10_000_000).unwrap();
        let (_, tau2) = run_to_tau(at_tau, &mut rng, 10_000_000).unwrap();
        taus.push(tau2);
    }
    let (mean_tau, se_tau) = mean_stderr(&taus);
    let d_ok = d_report.value >= mean_tau + 3.0 * se_tau;

    // stability: the standard error shrinks like n^{-1/2}
    let (mean_1k, se_1k) = mean_stderr(&taus[..1_000]);
    let ratio = se_1k / se_tau;
    let stable_ok = (2.2..=4.5).contains(&ratio)
        && (mean_1k - mean_tau).abs() <= 3.0 * se_1k
        && mean_tau.is_finite();

    // D': waiting-time regeneration from inside the set.
    let cset = CSetParams::default_for(&ness);
    let dp_report = dprime_bound(&cset, &g, &d_report);
    let delta = cset.default_delta(&g);
    let mut sup_mean = 0.0f64;
    for _ in 0..1_000 {
        let start = sample_c_surrogate(g, ness, &cset, 1, 1, &mut rng).unwrap();
        let mut acc = 0.0;
        for _ in 0..16 {
            let (_, tau) =
                run_to_tau_after_delay(start.clone(), &mut rng, delta, 10_000_000).unwrap();
            acc += tau;
        }
        sup_mean = sup_mean.max(acc / 16.0);
    }
    let dp_ok = dp_report.value >= sup_mean;

    report(
        "c08",
        "bounds-dominate-simulation",
        k_ok && hit_ok && rounds_ok && d_ok && stable_ok && dp_ok,
        &format!(
            "K {:.3} >= {:.4}+3se; K/a {:.3} >= {:.4}+3se; rounds {:.4} ~ 2; D {:.3} >= {:.4}+3se; se ratio {:.2}; D' {:.3} >= sup mean {:.3} (delta {:.3})",
            k_report.value, mean_flight, h_report.value, mean_cycle, mean_rounds,
            d_report.value, mean_tau, ratio, dp_report.value, sup_mean, delta
        ),
    );
}

// 9. Forward invariance of the compact set between boundary collisions.
#[test]
fn c09_forward_invariance_of_c() {
    let g = geom();
    let params = ReservoirParams::new(1.0, 2.0).unwrap();
    let cset = CSetParams::default_for(&params);
    let mut rng = replica_stream(109, 0);
    let mut violations = 0u64;
    let mut events_checked = 0u64;
    for _ in 0..1_000 {
        let state = sample_c_surrogate(g, params, &cset, 1, 1, &mut rng).unwrap();
        assert!(
            in_c(&state, &cset).unwrap(),
            "surrogate start must lie in the set"
        );
        let mut engine = Engine::new(state).unwrap();
        let mut bad = false;
        engine
            .evolve_until(&mut rng, &EvolveLimits::default(), |st, rec| {
                if rec.surface.is_outer() {
                    return true;
                }
                events_checked += 1;
                if !in_c(st, &cset).unwrap() {
                    bad = true;
                    return true;
                }
                false
            })
            .unwrap();
        violations += bad as u64;
    }
    report(
        "c09",
        "forward-invariance-of-c",
        violations == 0,
        &format!("{violations} violations over 1000 starts ({events_checked} intermediate events checked)"),
    );
}

// 10. Non-exponential relaxation: the perturbed ensemble's excess mass on the
//     slow set decays along a convex power-law curve, not an exponential.
#[test]
fn c10_nonexponential_mixing_shape() {
    let g = geom();
    let params = ReservoirParams::new(1.0, 2.0).unwrap();
    let mut rng = replica_stream(110, 0);
    let ens = build_steady_ensemble(g, params, 1, 1, &mut rng, 1_600_000, 100.0, 16.0).unwrap();

    // threshold with tail probability ~1e-2
    let probe: Vec<f64> = (0..40).map(|i| 5.0 * 10f64.powf(i as f64 / 13.0)).collect();
    let curve = b_t_tail(&ens, &probe).unwrap();
    let t_star = curve
        .t_grid
        .iter()
        .zip(&curve.p_hat)
        .find(|(_, &p)| p <= 1e-2)
        .map(|(&t, _)| t)
        .expect("tail never drops to 1e-2");

    let weighted = perturbed_initial(&ens, 0.5, t_star).unwrap();
    drop(ens);
    let t_grid: Vec<f64> = (0..10)
        .map(|i| t_star * 1.2 * 10f64.powf(i as f64 / 9.0))
        .collect();
    let decay = mixing_decay(&weighted, t_star, &t_grid, 1100).unwrap();

    let positive = decay.r.iter().all(|&r| r > 0.0);
    assert!(
        positive,
        "excess mass must stay positive across the window: {:?}",
        decay.r
    );

    let ys: Vec<f64> = decay.r.iter().map(|r| r.ln()).collect();
    let xs_log: Vec<f64> = decay.times.iter().map(|t| t.ln()).collect();
    let w = vec![1.0; ys.len()];
    let power = weighted_line_fit(&xs_log, &ys, &w).unwrap();
    let expfit = weighted_line_fit(&decay.times, &ys, &w).unwrap();

    // convexity of log r in t: the early slope is steeper than the late one
    let half = ys.len() / 2;
    let first = weighted_line_fit(&decay.times[..half], &ys[..half], &w[..half]).unwrap();
    let second = weighted_line_fit(&decay.times[half..], &ys[half..], &w[half..]).unwrap();

    let slope_ok = (-3.5..=-1.0).contains(&power.slope);
    let power_wins = power.rss < expfit.rss;
    let convex = first.slope < second.slope;
    report(
        "c10",
        "nonexponential-mixing-shape",
        slope_ok && power_wins && convex,
        &format!(
            "T* = {t_star:.2}; log-log slope {:.3}; rss power {:.3} < exp {:.3}: {power_wins}; convex ({:.4} < {:.4})",
            power.slope, power.rss, expfit.rss, first.slope, second.slope
        ),
    );
}
