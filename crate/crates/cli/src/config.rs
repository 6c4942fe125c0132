//! Flat key=value run configuration with command-line overrides.
//!
//! A config file looks like:
//!
//! ```text
//! R=1
//! d=1
//! beta_left=1
//! beta_right=2
//! k_left=1
//! k_right=1
//! seed=42
//! ```
//!
//! The seven keys above are required; everything else has defaults. Unknown
//! keys are rejected. A flag always wins over the file value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use diskbilliard::dynamics::ReservoirParams;
use diskbilliard::engine::CSetParams;
use diskbilliard::geometry::GeometryConfig;
use sha2::{Digest, Sha256};

/// Exit code used for configuration problems.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub r_disk: f64,
    pub gap: f64,
    pub beta_left: f64,
    pub beta_right: f64,
    pub k_left: usize,
    pub k_right: usize,
    pub seed: u64,
    // compact-set window; zero sentinels mean "derive from temperatures"
    pub s_min: f64,
    pub s_max: f64,
    pub epsilon: f64,
    // experiment sizing
    pub n_samples: u64,
    pub burn_in: f64,
    /// 0 means auto: five empirical mean inter-boundary-collision times.
    pub spacing: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_points: usize,
    pub horizon: f64,
    pub replicas: u64,
    /// Perturbation strength for the mixing experiment.
    pub c: f64,
    /// 0 means auto: the threshold where the tail probability is ~1e-2.
    pub t0: f64,
    pub out_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            r_disk: f64::NAN,
            gap: f64::NAN,
            beta_left: f64::NAN,
            beta_right: f64::NAN,
            k_left: usize::MAX,
            k_right: usize::MAX,
            seed: u64::MAX,
            s_min: 0.0,
            s_max: 0.0,
            epsilon: 0.0,
            n_samples: 200_000,
            burn_in: 100.0,
            spacing: 0.0,
            t_min: 10.0,
            t_max: 1000.0,
            t_points: 31,
            horizon: 1000.0,
            replicas: 4,
            c: 0.5,
            t0: 0.0,
            out_dir: ".".into(),
        }
    }
}

/// Optional per-key overrides gathered from the command line.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long = "R")]
    pub r_disk: Option<f64>,
    #[arg(long = "d")]
    pub gap: Option<f64>,
    #[arg(long)]
    pub beta_left: Option<f64>,
    #[arg(long)]
    pub beta_right: Option<f64>,
    #[arg(long)]
    pub k_left: Option<usize>,
    #[arg(long)]
    pub k_right: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub s_min: Option<f64>,
    #[arg(long)]
    pub s_max: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub n_samples: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub spacing: Option<f64>,
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub t_points: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<String>,
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError(format!("key {key}: cannot parse '{value}'")))
}

impl RunConfig {
    /// Parse the file (when given), apply flag overrides, then validate.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    ConfigError(format!("line {}: expected key=value", lineno + 1))
                })?;
                let key = key.trim();
                cfg.set(key, value)?;
                seen.push(key.to_string());
            }
        }
        cfg.apply_overrides(overrides);
        cfg.validate()?;
        let _ = seen;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "R" => self.r_disk = parse_num(key, value)?,
            "d" => self.gap = parse_num(key, value)?,
            "beta_left" => self.beta_left = parse_num(key, value)?,
            "beta_right" => self.beta_right = parse_num(key, value)?,
            "k_left" => self.k_left = parse_num(key, value)?,
            "k_right" => self.k_right = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "s_min" => self.s_min = parse_num(key, value)?,
            "s_max" => self.s_max = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "n_samples" => self.n_samples = parse_num(key, value)?,
            "burn_in" => self.burn_in = parse_num(key, value)?,
            "spacing" => self.spacing = parse_num(key, value)?,
            "t_min" => self.t_min = parse_num(key, value)?,
            "t_max" => self.t_max = parse_num(key, value)?,
            "t_points" => self.t_points = parse_num(key, value)?,
            "horizon" => self.horizon = parse_num(key, value)?,
            "replicas" => self.replicas = parse_num(key, value)?,
            "c" => self.c = parse_num(key, value)?,
            "t0" => self.t0 = parse_num(key, value)?,
            "out_dir" => self.out_dir = value.trim().to_string(),
            _ => return Err(ConfigError(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    fn apply_overrides(&mut self, o: &Overrides) {
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = o.$field.clone() {
                    self.$field = v;
                }
            };
        }
        take!(r_disk);
        take!(gap);
        take!(beta_left);
        take!(beta_right);
        take!(k_left);
        take!(k_right);
        take!(seed);
        take!(s_min);
        take!(s_max);
        take!(epsilon);
        take!(n_samples);
        take!(burn_in);
        take!(spacing);
        take!(t_min);
        take!(t_max);
        take!(t_points);
        take!(horizon);
        take!(replicas);
        take!(c);
        take!(t0);
        take!(out_dir);
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for (key, missing) in [
            ("R", self.r_disk.is_nan()),
            ("d", self.gap.is_nan()),
            ("beta_left", self.beta_left.is_nan()),
            ("beta_right", self.beta_right.is_nan()),
            ("k_left", self.k_left == usize::MAX),
            ("k_right", self.k_right == usize::MAX),
            ("seed", self.seed == u64::MAX),
        ] {
            if missing {
                return Err(ConfigError(format!("missing required key '{key}'")));
            }
        }
        if !(self.r_disk > 0.0) {
            return Err(ConfigError("key R: must be > 0".into()));
        }
        if !(self.gap > 0.0) {
            return Err(ConfigError("key d: must be > 0".into()));
        }
        if !(self.beta_left > 0.0 && self.beta_right > 0.0) {
            return Err(ConfigError("keys beta_left/beta_right: must be > 0".into()));
        }
        if self.k_left + self.k_right == 0 {
            return Err(ConfigError(
                "keys k_left/k_right: need at least one particle".into(),
            ));
        }
        if self.n_samples == 0 || self.replicas == 0 || self.t_points < 2 {
            return Err(ConfigError(
                "keys n_samples/replicas/t_points: must be positive".into(),
            ));
        }
        if !(self.t_min > 0.0 && self.t_max > self.t_min) {
            return Err(ConfigError(
                "keys t_min/t_max: need 0 < t_min < t_max".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return Err(ConfigError("key c: must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<GeometryConfig, ConfigError> {
        GeometryConfig::new(self.r_disk, self.gap).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn reservoirs(&self) -> Result<ReservoirParams, ConfigError> {
        ReservoirParams::new(self.beta_left, self.beta_right)
            .map_err(|e| ConfigError(e.to_string()))
    }

    /// The compact-set window: configured values when set, otherwise the
    /// temperature-derived defaults.
    pub fn cset(&self) -> Result<CSetParams, ConfigError> {
        let reservoirs = self.reservoirs()?;
        let defaults = CSetParams::default_for(&reservoirs);
        let s_min = if self.s_min > 0.0 {
            self.s_min
        } else {
            defaults.s_min
        };
        let s_max = if self.s_max > 0.0 {
            self.s_max
        } else {
            defaults.s_max
        };
        let epsilon = if self.epsilon > 0.0 {
            self.epsilon
        } else {
            defaults.epsilon
        };
        CSetParams::new(s_min, s_max, epsilon).map_err(|e| ConfigError(e.to_string()))
    }

    /// Geometric threshold grid for the tail experiments.
    pub fn t_grid(&self) -> Vec<f64> {
        let n = self.t_points;
        (0..n)
            .map(|i| self.t_min * (self.t_max / self.t_min).powf(i as f64 / (n - 1) as f64))
            .collect()
    }

    fn canonical(&self) -> String {
        let mut map: BTreeMap<&str, String> = BTreeMap::new();
        map.insert("R", format!("{:.17e}", self.r_disk));
        map.insert("d", format!("{:.17e}", self.gap));
        map.insert("beta_left", format!("{:.17e}", self.beta_left));
        map.insert("beta_right", format!("{:.17e}", self.beta_right));
        map.insert("k_left", self.k_left.to_string());
        map.insert("k_right", self.k_right.to_string());
        map.insert("seed", self.seed.to_string());
        map.insert("s_min", format!("{:.17e}", self.s_min));
        map.insert("s_max", format!("{:.17e}", self.s_max));
        map.insert("epsilon", format!("{:.17e}", self.epsilon));
        map.insert("n_samples", self.n_samples.to_string());
        map.insert("burn_in", format!("{:.17e}", self.burn_in));
        map.insert("spacing", format!("{:.17e}", self.spacing));
        map.insert("t_min", format!("{:.17e}", self.t_min));
        map.insert("t_max", format!("{:.17e}", self.t_max));
        map.insert("t_points", self.t_points.to_string());
        map.insert("horizon", format!("{:.17e}", self.horizon));
        map.insert("replicas", self.replicas.to_string());
        map.insert("c", format!("{:.17e}", self.c));
        map.insert("t0", format!("{:.17e}", self.t0));
        let mut out = String::new();
        for (k, v) in map {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Hash of the canonicalized configuration, embedded in every output.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const MINIMAL: &str = "R=1\nd=1\nbeta_left=1\nbeta_right=1\nk_left=1\nk_right=1\nseed=42\n";

    #[test]
    fn minimal_config_is_valid() {
        let f = write_temp(MINIMAL);
        let cfg = RunConfig::load(Some(f.path()), &Overrides::default()).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.k_left, 1);
        cfg.geometry().unwrap();
        cfg.cset().unwrap();
    }

    #[test]
    fn negative_gap_rejected() {
        let f = write_temp("R=1\nd=-1\nbeta_left=1\nbeta_right=1\nk_left=1\nk_right=1\nseed=1\n");
        assert!(RunConfig::load(Some(f.path()), &Overrides::default()).is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let f = write_temp(&format!("{MINIMAL}bogus=3\n"));
        let err = RunConfig::load(Some(f.path()), &Overrides::default()).unwrap_err();
        assert!(err.0.contains("bogus"));
    }

    #[test]
    fn missing_key_named() {
        let f = write_temp("R=1\nd=1\nbeta_left=1\nbeta_right=1\nk_left=1\nk_right=1\n");
        let err = RunConfig::load(Some(f.path()), &Overrides::default()).unwrap_err();
        assert!(err.0.contains("seed"));
    }

    #[test]
    fn flag_beats_file() {
        let f = write_temp(MINIMAL);
        let o = Overrides {
            seed: Some(7),
            ..Default::default()
        };
        let cfg = RunConfig::load(Some(f.path()), &o).unwrap();
        assert_eq!(cfg.seed, 7);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let f = write_temp(MINIMAL);
        let a = RunConfig::load(Some(f.path()), &Overrides::default()).unwrap();
        let o = Overrides {
            seed: Some(7),
            ..Default::default()
        };
        let b = RunConfig::load(Some(f.path()), &o).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }
}
