//! Subcommand implementations. Every output file starts with a '#' comment
//! carrying the config fingerprint; reruns with the same configuration are
//! byte-identical.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};

use diskbilliard::dynamics::sample_emission;
use diskbilliard::engine::{
    event_to_jsonl, in_c, initial_state, sample_c_surrogate, Engine, EvolveLimits,
};
use diskbilliard::geometry::{trace_to_major, Half, Surface};
use diskbilliard::observables::{
    auto_fit_window, b_t_tail, build_steady_ensemble, fit_power_law, mixing_decay,
    perturbed_initial, tail_curve_csv, tail_scan, tv_distance, tv_series_csv, Binning,
    FluxAccumulator, Marginal, TailScanParams,
};
use diskbilliard::oracles::{
    d_bound, dprime_bound, emission_moments, gamma_emission_window, hit_bound, k_bound, maxwell_cdf,
};
use diskbilliard::rng::replica_stream;
use diskbilliard::stats::{ks_statistic, mean_stderr, weighted_line_fit};
use diskbilliard::vec2::Vec2;

use crate::config::RunConfig;

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    PathBuf::from(&cfg.out_dir).join(name)
}

fn write_output(cfg: &RunConfig, name: &str, content: &str) -> Result<PathBuf> {
    let path = out_path(cfg, name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).ok();
    }
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Mean time between boundary collisions, measured on a short calibration
/// trajectory with its own reserved stream; used for the auto snapshot
/// spacing (five of these).
fn calibrate_spacing(cfg: &RunConfig) -> Result<f64> {
    let geom = cfg.geometry().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let params = cfg
        .reservoirs()
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut rng = replica_stream(cfg.seed, u64::MAX);
    let state = initial_state(geom, params, cfg.k_left, cfg.k_right, &mut rng)?;
    let mut engine = Engine::new(state)?;
    let mut outer = 0u64;
    for _ in 0..20_000 {
        let rec = engine.step(&mut rng)?;
        if rec.surface.is_outer() {
            outer += 1;
        }
    }
    let k = (cfg.k_left + cfg.k_right) as f64;
    Ok(5.0 * engine.clock() * k / outer.max(1) as f64)
}

fn effective_spacing(cfg: &RunConfig, fallback_auto: bool) -> Result<f64> {
    if cfg.spacing > 0.0 {
        Ok(cfg.spacing)
    } else if fallback_auto {
        calibrate_spacing(cfg)
    } else {
        Ok(2.0)
    }
}

pub fn run_simulate(cfg: &RunConfig) -> Result<i32> {
    let geom = cfg.geometry().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let params = cfg
        .reservoirs()
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut rng = replica_stream(cfg.seed, 0);
    let state = initial_state(geom, params, cfg.k_left, cfg.k_right, &mut rng)?;
    let mut engine = Engine::new(state)?;

    let path = out_path(cfg, "events.jsonl");
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).ok();
    }
    let mut w = BufWriter::new(fs::File::create(&path)?);
    writeln!(w, "# fingerprint={}", cfg.fingerprint())?;
    let mut events = 0u64;
    let mut write_err = None;
    engine.evolve_until(&mut rng, &EvolveLimits::horizon(cfg.horizon), |_, rec| {
        events += 1;
        if let Err(e) = writeln!(w, "{}", event_to_jsonl(rec)) {
            write_err = Some(e);
            return true;
        }
        false
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    w.flush()?;
    println!(
        "simulate: {events} events to t = {:.3} -> {}",
        engine.clock(),
        path.display()
    );
    Ok(0)
}

pub fn run_steady(cfg: &RunConfig) -> Result<i32> {
    let geom = cfg.geometry().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let params = cfg
        .reservoirs()
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let spacing = effective_spacing(cfg, true)?;
    let mut rng = replica_stream(cfg.seed, 0);
    let ens = build_steady_ensemble(
        geom,
        params,
        cfg.k_left,
        cfg.k_right,
        &mut rng,
        cfg.n_samples,
        cfg.burn_in,
        spacing,
    )?;
    let mut out = String::new();
    out.push_str(&format!("# fingerprint={}\n", cfg.fingerprint()));
    out.push_str(&format!("# spacing={spacing:.16e}\n"));
    for s in &ens.samples {
        out.push_str(&format!(
            "{{\"t\":{:.16e},\"theta\":{:.16e},\"omega\":{:.16e},\"particles\":[",
            s.clock, s.disk.theta, s.disk.omega
        ));
        for (i, p) in s.particles.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!(
                "{{\"x\":{:.16e},\"y\":{:.16e},\"vx\":{:.16e},\"vy\":{:.16e},\"half\":\"{}\"}}",
                p.position.x,
                p.position.y,
                p.velocity.x,
                p.velocity.y,
                match p.half {
                    Half::Left => "left",
                    Half::Right => "right",
                }
            ));
        }
        out.push_str("]}\n");
    }
    let path = write_output(cfg, "snapshots.jsonl", &out)?;
    println!(
        "steady: {} snapshots (spacing {spacing:.3}) -> {}",
        ens.samples.len(),
        path.display()
    );

    // convergence diagnostic: TV distance of earlier ensemble blocks to the
    // final block, per marginal
    let n_blocks = 6;
    if ens.samples.len() >= n_blocks * 10 {
        let block = ens.samples.len() / n_blocks;
        let make = |lo: usize, hi: usize| diskbilliard::observables::SteadyEnsemble {
            samples: ens.samples[lo..hi].to_vec(),
            burn_in: ens.burn_in,
            spacing: ens.spacing,
            fingerprint: ens.fingerprint,
        };
        let reference = make((n_blocks - 1) * block, n_blocks * block);
        let beta_max = cfg.beta_left.max(cfg.beta_right);
        let mut rows = Vec::new();
        for b in 0..n_blocks - 1 {
            let part = make(b * block, (b + 1) * block);
            let t_mid = part.samples[part.samples.len() / 2].clock;
            for (marginal, binning) in [
                (Marginal::Omega, Binning::uniform(0.2 / beta_max.sqrt(), 1)),
                (Marginal::MaxFreeTime, Binning::uniform(1.0, 1)),
                (
                    Marginal::ParticleCoords(0),
                    Binning {
                        widths: vec![0.2 / beta_max.sqrt(), 0.1, 0.25 * (cfg.r_disk + cfg.gap)],
                    },
                ),
            ] {
                let tv = tv_distance(&part, &reference, marginal, &binning)?;
                rows.push((t_mid, tv, marginal.name()));
            }
        }
        let comments = vec![format!("fingerprint={}", cfg.fingerprint())];
        let tv_path = write_output(cfg, "tv.csv", &tv_series_csv(&rows, &comments))?;
        println!("steady: TV convergence series -> {}", tv_path.display());
    }
    Ok(0)
}

pub fn run_tails(cfg: &RunConfig) -> Result<i32> {
    let geom = cfg.geometry().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let params = cfg
        .reservoirs()
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let spacing = effective_spacing(cfg, false)?;
    let scan = TailScanParams {
        t_grid: cfg.t_grid(),
        n_snapshots: cfg.n_samples,
        burn_in: cfg.burn_in,
        spacing,
        replicas: cfg.replicas,
        seed: cfg.seed,
        max_events_per_replica: diskbilliard::engine::DEFAULT_EVENT_CAP,
    };
    let acc = tail_scan(geom, params, cfg.k_left, cfg.k_right, &scan)?;
    let curve = acc.curve();
    let mut comments = vec![
        format!("fingerprint={}", cfg.fingerprint()),
        format!(
            "n_snapshots={} replicas={} spacing={spacing:.16e}",
            curve.n, cfg.replicas
        ),
    ];
    match auto_fit_window(&acc, 50, 30).map(|w| fit_power_law(&curve, w)) {
        Some(Ok(fit)) => {
            comments.push(format!(
                "fit exponent={:.16e} stderr={:.16e} window=[{:.16e},{:.16e}] points={}",
                fit.exponent, fit.stderr, fit.window.0, fit.window.1, fit.n_points
            ));
            println!(
                "tails: exponent {:.4} +- {:.4} over [{:.1}, {:.1}]",
                fit.exponent, fit.stderr, fit.window.0, fit.window.1
            );
        }
        _ => {
            comments.push("fit unavailable (insufficient tail statistics)".into());
            println!("tails: fit unavailable (insufficient tail statistics)");
        }
    }
    let path = write_output(cfg, "tail.csv", &tail_curve_csv(&curve, &comments))?;
    println!("tails: curve -> {}", path.display());
    Ok(0)
}

pub fn run_flux(cfg: &RunConfig) -> Result<i32> {
    let geom = cfg.geometry().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let params = cfg
        .reservoirs()
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut rng = replica_stream(cfg.seed, 0);
    let state = initial_state(geom, params, cfg.k_left, cfg.k_right, &mut rng)?;
    let mut engine = Engine::new(state)?;
    let mut acc = FluxAccumulator::default();
    engine.evolve_until(&mut rng, &EvolveLimits::horizon(cfg.horizon), |_, rec| {
        acc.observe(rec);
        false
    })?;
    acc.elapsed = engine.clock();
    let comments = vec![
        format!("fingerprint={}", cfg.fingerprint()),
        format!("elapsed={:.16e}", acc.elapsed),
    ];
    let path = write_output(
        cfg,
        "flux.csv",
        &diskbilliard::observables::flux_csv(&acc, &comments),
    )?;
    println!(
        "flux: left {:+.4e}, right {:+.4e} -> {}",
        acc.net_rate(Half::Left),
        acc.net_rate(Half::Right),
        path.display()
    );
    Ok(0)
}

pub fn run_bounds(cfg: &RunConfig) -> Result<i32> {
    let geom = cfg.geometry().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let cset = cfg.cset().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut reports = Vec::new();
    for beta in [cfg.beta_left, cfg.beta_right] {
        let k = k_bound(beta, &geom)?;
        reports.push(hit_bound(&k, &geom));
        reports.push(k);
        if (cfg.beta_left - cfg.beta_right).abs() < f64::EPSILON {
            break;
        }
    }
    let d = d_bound(cfg.beta_left, cfg.beta_right, &geom)?;
    let dp = dprime_bound(&cset, &geom, &d);
    reports.push(d);
    reports.push(dp);

    let mut out = String::new();
    out.push_str(&format!(
        "{{\"fingerprint\":\"{}\",\"reports\":[",
        cfg.fingerprint()
    ));
    for (i, r) in reports.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&r.to_json());
    }
    out.push_str("],\"gamma_emission\":{");
    out.push_str(&format!(
        "\"left\":{:.16e},\"right\":{:.16e}}}}}\n",
        gamma_emission_window(&cset, &geom, cfg.beta_left),
        gamma_emission_window(&cset, &geom, cfg.beta_right)
    ));
    let path = write_output(cfg, "bounds.json", &out)?;
    for r in &reports {
        println!("bounds: {} = {:.6}", r.name, r.value);
    }
    println!("bounds -> {}", path.display());
    Ok(0)
}

pub fn run_mixing(cfg: &RunConfig) -> Result<i32> {
    let geom = cfg.geometry().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let params = cfg
        .reservoirs()
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let spacing = if cfg.spacing > 0.0 { cfg.spacing } else { 16.0 };
    let mut rng = replica_stream(cfg.seed, 0);
    let ens = build_steady_ensemble(
        geom,
        params,
        cfg.k_left,
        cfg.k_right,
        &mut rng,
        cfg.n_samples,
        cfg.burn_in,
        spacing,
    )?;
    // threshold where the tail probability is about 1e-2, unless pinned
    let t_star = if cfg.t0 > 0.0 {
        cfg.t0
    } else {
        let probe: Vec<f64> = (0..40).map(|i| 5.0 * 10f64.powf(i as f64 / 13.0)).collect();
        let curve = b_t_tail(&ens, &probe)?;
        curve
            .t_grid
            .iter()
            .zip(&curve.p_hat)
            .find(|(_, &p)| p <= 1e-2)
            .map(|(&t, _)| t)
            .unwrap_or(20.0)
    };
    let we = perturbed_initial(&ens, cfg.c, t_star)?;
    let t_grid: Vec<f64> = (0..10)
        .map(|i| t_star * 1.2 * 10f64.powf(i as f64 / 9.0))
        .collect();
    let decay = mixing_decay(&we, t_star, &t_grid, cfg.seed ^ 0x6d69_7869_6e67)?;

    let xs_log: Vec<f64> = decay.times.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = decay.r.iter().map(|r| r.max(1e-300).ln()).collect();
    let w = vec![1.0; ys.len()];
    let power = weighted_line_fit(&xs_log, &ys, &w)?;
    let expfit = weighted_line_fit(&decay.times, &ys, &w)?;

    let mut out = String::new();
    out.push_str(&format!("# fingerprint={}\n", cfg.fingerprint()));
    out.push_str(&format!(
        "# c={:.16e} T_star={t_star:.16e} n={}\n",
        cfg.c,
        ens.samples.len()
    ));
    out.push_str(&format!(
        "# power_slope={:.16e} power_rss={:.16e} exp_rss={:.16e}\n",
        power.slope, power.rss, expfit.rss
    ));
    out.push_str("t,r,lambda_b,mu_b\n");
    for j in 0..decay.times.len() {
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            decay.times[j], decay.r[j], decay.lambda_b[j], decay.mu_b[j]
        ));
    }
    let path = write_output(cfg, "mixing.csv", &out)?;
    println!(
        "mixing: T* = {t_star:.2}, power slope {:.3} (rss {:.3e}) vs exp rss {:.3e} -> {}",
        power.slope,
        power.rss,
        expfit.rss,
        path.display()
    );
    Ok(0)
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Fast self-test battery over the sampler laws, geometry identities,
/// dynamical invariants and determinism; exit 1 when anything fails.
pub fn run_validate(cfg: &RunConfig) -> Result<i32> {
    let geom = cfg.geometry().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let params = cfg
        .reservoirs()
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let cset = cfg.cset().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut checks: Vec<Check> = Vec::new();

    // sampler laws
    {
        let mut rng = replica_stream(cfg.seed, 1);
        let n = 200_000usize;
        let mut speeds = Vec::with_capacity(n);
        let mut angles = Vec::with_capacity(n);
        for _ in 0..n {
            let (s, u) = sample_emission(cfg.beta_left, &mut rng)?;
            speeds.push(s);
            angles.push(u);
        }
        let (mean, se) = mean_stderr(&speeds);
        let expect = emission_moments(cfg.beta_left)?.0;
        let ks_s = ks_statistic(&mut speeds, |s| maxwell_cdf(cfg.beta_left, s));
        let ks_u = ks_statistic(&mut angles, |u| ((u + 1.0) / 2.0).clamp(0.0, 1.0));
        checks.push(Check {
            name: "sampler_speed_ks",
            pass: ks_s < 0.02,
            detail: format!("KS = {ks_s:.5}"),
        });
        checks.push(Check {
            name: "sampler_angle_ks",
            pass: ks_u < 0.02,
            detail: format!("KS = {ks_u:.5}"),
        });
        checks.push(Check {
            name: "sampler_mean_speed",
            pass: (mean - expect).abs() < 4.0 * se,
            detail: format!("mean = {mean:.5} vs {expect:.5} (se {se:.2e})"),
        });
    }

    // disk-hit probability of fresh emissions
    {
        let mut rng = replica_stream(cfg.seed, 2);
        let n = 200_000u64;
        let mut hits = 0u64;
        let ro = geom.outer_radius();
        for _ in 0..n {
            let psi: f64 = rand::Rng::gen_range(&mut rng, -1.5..1.5);
            let point = Vec2::new(ro * psi.cos(), ro * psi.sin());
            let (_, u) = sample_emission(cfg.beta_right, &mut rng)?;
            let nv = -point.normalized();
            let dir = nv * (1.0 - u * u).sqrt() + nv.perp() * u;
            let m = trace_to_major(&geom, point, dir, Half::Right)?;
            hits += (m.surface == Surface::Disk) as u64;
        }
        let frac = hits as f64 / n as f64;
        let alpha = geom.alpha();
        let se = (alpha * (1.0 - alpha) / n as f64).sqrt();
        checks.push(Check {
            name: "disk_hit_probability",
            pass: (frac - alpha).abs() < 4.0 * se,
            detail: format!("{frac:.5} vs alpha = {alpha:.5}"),
        });
    }

    // invariants over a short run
    {
        let mut rng = replica_stream(cfg.seed, 3);
        let state = initial_state(geom, params, cfg.k_left, cfg.k_right, &mut rng)?;
        let e0 = state.energy();
        let k_left0 = state.count_in_half(Half::Left);
        let mut engine = Engine::new(state)?;
        let mut exchange_ok = true;
        let mut ledger = 0.0;
        let mut last_t = 0.0;
        let mut monotone = true;
        let mut since_boundary: Vec<u32> = vec![0; cfg.k_left + cfg.k_right];
        let mut single_disk_ok = true;
        for _ in 0..200_000 {
            let rec = engine.step(&mut rng)?;
            monotone &= rec.time >= last_t;
            last_t = rec.time;
            match rec.surface {
                Surface::Disk => {
                    let before = rec.s_pre * rec.s_pre + rec.omega_pre * rec.omega_pre;
                    let after = rec.s_post * rec.s_post + rec.omega_post * rec.omega_post;
                    exchange_ok &= (before - after).abs() <= 1e-12 * before.max(1.0);
                    since_boundary[rec.particle] += 1;
                    single_disk_ok &= since_boundary[rec.particle] <= 1;
                }
                s if s.is_outer() => {
                    ledger += 0.5 * (rec.s_post * rec.s_post - rec.s_pre * rec.s_pre);
                    since_boundary[rec.particle] = 0;
                }
                _ => {}
            }
        }
        let e1 = engine.state().energy();
        let balance = ((e1 - e0) - ledger).abs();
        checks.push(Check {
            name: "exchange_invariant",
            pass: exchange_ok,
            detail: "s'^2 + w'^2 = s^2 + w^2 at every disk event".into(),
        });
        checks.push(Check {
            name: "energy_ledger",
            pass: balance <= 1e-9 * e1.max(1.0),
            detail: format!("|drift| = {balance:.3e}"),
        });
        checks.push(Check {
            name: "clock_monotone",
            pass: monotone,
            detail: String::new(),
        });
        checks.push(Check {
            name: "single_disk_hit_per_cycle",
            pass: single_disk_ok,
            detail: "at most one disk contact between boundary contacts".into(),
        });
        checks.push(Check {
            name: "half_counts_constant",
            pass: engine.state().count_in_half(Half::Left) == k_left0,
            detail: String::new(),
        });
    }

    // determinism
    {
        let mut logs = Vec::new();
        for _ in 0..2 {
            let mut rng = replica_stream(cfg.seed, 4);
            let state = initial_state(geom, params, cfg.k_left, cfg.k_right, &mut rng)?;
            let mut engine = Engine::new(state)?;
            let mut log = String::new();
            for _ in 0..20_000 {
                log.push_str(&event_to_jsonl(&engine.step(&mut rng)?));
            }
            logs.push(log);
        }
        checks.push(Check {
            name: "replay_determinism",
            pass: logs[0] == logs[1],
            detail: "bit-identical event logs".into(),
        });
    }

    // forward invariance of the compact set from surrogate starts
    {
        let mut rng = replica_stream(cfg.seed, 5);
        let mut violations = 0u64;
        for _ in 0..100 {
            let state = sample_c_surrogate(geom, params, &cset, cfg.k_left, cfg.k_right, &mut rng)?;
            let mut engine = Engine::new(state)?;
            let mut bad = false;
            engine.evolve_until(&mut rng, &EvolveLimits::default(), |st, rec| {
                if rec.surface.is_outer() {
                    return true;
                }
                if !in_c(st, &cset).unwrap_or(false) {
                    bad = true;
                    return true;
                }
                false
            })?;
            violations += bad as u64;
        }
        checks.push(Check {
            name: "c_forward_invariance",
            pass: violations == 0,
            detail: format!("{violations} violations over 100 starts"),
        });
    }

    let mut failed = 0;
    println!("check                         status  detail");
    for c in &checks {
        println!(
            "{:<29} {}  {}",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
        failed += (!c.pass) as u32;
    }
    if failed > 0 {
        bail!("{failed} validation checks failed");
    }
    Ok(0)
}
