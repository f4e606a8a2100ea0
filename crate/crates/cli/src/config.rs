//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # example states
//! prep = 1, 0, 1, 1
//! post = 1, 0, 1, -1
//! normalize = true
//! g_a = 2
//! g_b = 2
//! ```
//!
//! Complex numbers are written `re+imi`. `post_effect` (16 values, row
//! major) replaces `post` for a mixed postselection.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cheshire_core::complex_text::{format_complex, parse_complex};
use cheshire_core::meter::{Grid, GridMeter, MeterShape};
use cheshire_core::qsystem::{PhotonEffect, PhotonKet};
use cheshire_core::sampler::NoiseModel;
use cheshire_core::sweep::PhotonSystem;
use cheshire_core::Complex64;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Postselection {
    Ket([Complex64; 4]),
    Effect([Complex64; 16]),
}

/// Configuration exactly as written; [`ExperimentConfig::resolve`] validates it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub prep: [Complex64; 4],
    pub post: Postselection,
    /// Rescale `prep` and `post` to unit norm instead of rejecting them.
    pub normalize: bool,
    pub g_a: f64,
    pub g_b: f64,
    pub noise_a: f64,
    pub noise_b: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    /// Two-column `x re [im]` meter wavefunction; its lattice replaces the grid keys.
    pub psi0_file: Option<PathBuf>,
}

const KEYS: [&str; 15] = [
    "prep",
    "post",
    "post_effect",
    "normalize",
    "g_a",
    "g_b",
    "noise_a",
    "noise_b",
    "n_trials",
    "seed",
    "grid_min",
    "grid_max",
    "grid_points",
    "psi0_file",
    "g",
];

fn bad(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config(format!("invalid {field}: {}", reason.into()))
}

fn parse_complex_list<const N: usize>(field: &str, value: &str) -> Result<[Complex64; N], CliError> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != N {
        return Err(bad(field, format!("expected {N} comma-separated values, found {}", parts.len())));
    }
    let mut out = [Complex64::new(0.0, 0.0); N];
    for (slot, part) in out.iter_mut().zip(parts) {
        *slot = parse_complex(part).ok_or_else(|| bad(field, format!("'{}' is not a complex number", part.trim())))?;
    }
    Ok(out)
}

fn parse_number<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| bad(field, format!("'{value}' is not a valid number")))
}

/// Shortest text that parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    // no "-0" in output
    format!("{}", v + 0.0)
}

fn join_complex(values: &[Complex64]) -> String {
    values.iter().map(|&c| format_complex(c)).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut seen: Vec<&str> = Vec::new();
        let mut prep = None;
        let mut post = None;
        let mut cfg = Self {
            prep: [Complex64::new(0.0, 0.0); 4],
            post: Postselection::Ket([Complex64::new(0.0, 0.0); 4]),
            normalize: false,
            g_a: 2.0,
            g_b: 2.0,
            noise_a: 0.0,
            noise_b: 0.0,
            n_trials: 1_000_000,
            seed: 0,
            grid_min: -20.0,
            grid_max: 20.0,
            grid_points: 4001,
            psi0_file: None,
        };
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", k + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&key) = KEYS.iter().find(|&&known| known == key) else {
                return Err(CliError::Config(format!("line {}: unknown key '{key}'", k + 1)));
            };
            if seen.contains(&key) {
                return Err(CliError::Config(format!("line {}: duplicate key '{key}'", k + 1)));
            }
            seen.push(key);
            match key {
                "prep" => prep = Some(parse_complex_list::<4>(key, value)?),
                "post" => {
                    if post.is_some() {
                        return Err(bad("post", "give either post or post_effect"));
                    }
                    post = Some(Postselection::Ket(parse_complex_list::<4>(key, value)?));
                }
                "post_effect" => {
                    if post.is_some() {
                        return Err(bad("post_effect", "give either post or post_effect"));
                    }
                    post = Some(Postselection::Effect(parse_complex_list::<16>(key, value)?));
                }
                "normalize" => {
                    cfg.normalize = match value {
                        "true" => true,
                        "false" => false,
                        other => return Err(bad(key, format!("'{other}' is not true or false"))),
                    }
                }
                "g" => {
                    let g = parse_number(key, value)?;
                    cfg.g_a = g;
                    cfg.g_b = g;
                }
                "g_a" => cfg.g_a = parse_number(key, value)?,
                "g_b" => cfg.g_b = parse_number(key, value)?,
                "noise_a" => cfg.noise_a = parse_number(key, value)?,
                "noise_b" => cfg.noise_b = parse_number(key, value)?,
                "n_trials" => cfg.n_trials = parse_number(key, value)?,
                "seed" => cfg.seed = parse_number(key, value)?,
                "grid_min" => cfg.grid_min = parse_number(key, value)?,
                "grid_max" => cfg.grid_max = parse_number(key, value)?,
                "grid_points" => cfg.grid_points = parse_number(key, value)?,
                "psi0_file" => cfg.psi0_file = Some(PathBuf::from(value)),
                _ => unreachable!(),
            }
        }
        if seen.contains(&"g") && (seen.contains(&"g_a") || seen.contains(&"g_b")) {
            return Err(bad("g", "give either g or g_a/g_b"));
        }
        cfg.prep = prep.ok_or_else(|| bad("prep", "missing"))?;
        cfg.post = post.ok_or_else(|| bad("post", "missing"))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Text that [`parse`](Self::parse) turns back into `self`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        writeln!(s, "prep = {}", join_complex(&self.prep)).unwrap();
        match &self.post {
            Postselection::Ket(a) => writeln!(s, "post = {}", join_complex(a)).unwrap(),
            Postselection::Effect(e) => writeln!(s, "post_effect = {}", join_complex(e)).unwrap(),
        }
        writeln!(s, "normalize = {}", self.normalize).unwrap();
        for (key, v) in [
            ("g_a", self.g_a),
            ("g_b", self.g_b),
            ("noise_a", self.noise_a),
            ("noise_b", self.noise_b),
        ] {
            writeln!(s, "{key} = {}", format_real(v)).unwrap();
        }
        writeln!(s, "n_trials = {}", self.n_trials).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "grid_min = {}", format_real(self.grid_min)).unwrap();
        writeln!(s, "grid_max = {}", format_real(self.grid_max)).unwrap();
        writeln!(s, "grid_points = {}", self.grid_points).unwrap();
        if let Some(p) = &self.psi0_file {
            writeln!(s, "psi0_file = {}", p.display()).unwrap();
        }
        s
    }

    /// Validated physical objects.
    pub fn resolve(&self) -> Result<Experiment, CliError> {
        let ket = |field: &'static str, a: [Complex64; 4]| {
            let k = if self.normalize {
                PhotonKet::normalized(a)
            } else {
                PhotonKet::new(a)
            };
            k.map_err(|e| bad(field, e.to_string()))
        };
        let prep = ket("prep", self.prep)?;
        let system = match &self.post {
            Postselection::Ket(a) => PhotonSystem::Pure { prep, post: ket("post", *a)? },
            Postselection::Effect(e) => {
                let effect = PhotonEffect::from_rows(e).map_err(|err| bad("post_effect", err.to_string()))?;
                PhotonSystem::Mixed { effect, rho: prep.density() }
            }
        };
        for (field, g) in [("g_a", self.g_a), ("g_b", self.g_b)] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(bad(field, format!("{g} must be finite and >= 0")));
            }
        }
        let noise = NoiseModel::new(self.noise_a, self.noise_b).map_err(|e| CliError::Config(e.to_string()))?;
        let (grid, meter) = match &self.psi0_file {
            Some(path) => {
                let m = GridMeter::load(path).map_err(|e| bad("psi0_file", format!("{}: {e}", path.display())))?;
                (*m.grid(), MeterShape::Grid(m))
            }
            None => (
                Grid::new(self.grid_min, self.grid_max, self.grid_points).map_err(|e| CliError::Config(e.to_string()))?,
                MeterShape::Gaussian,
            ),
        };
        Ok(Experiment {
            system,
            meter,
            grid,
            g_a: self.g_a,
            g_b: self.g_b,
            noise,
            n_trials: self.n_trials,
            seed: self.seed,
        })
    }
}

/// A validated configuration.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub system: PhotonSystem,
    /// Gaussian, or the wavefunction from `psi0_file`.
    pub meter: MeterShape,
    /// Lattice for quadrature and sampling.
    pub grid: Grid,
    pub g_a: f64,
    pub g_b: f64,
    pub noise: NoiseModel,
    pub n_trials: usize,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "\
# example states
prep = 1, 0, 1, 1
post = 1, 0, 1, -1   # trailing comment
normalize = true
g = 2
seed = 42
";

    #[test]
    fn parses_example() {
        let cfg = ExperimentConfig::parse(EXAMPLE).unwrap();
        assert_eq!(cfg.g_a, 2.0);
        assert_eq!(cfg.g_b, 2.0);
        assert_eq!(cfg.seed, 42);
        assert!(cfg.normalize);
        assert_eq!(cfg.prep[3], Complex64::new(1.0, 0.0));
        let exp = cfg.resolve().unwrap();
        assert!(matches!(exp.system, PhotonSystem::Pure { .. }));
    }

    #[test]
    fn dump_round_trips() {
        let mut cfg = ExperimentConfig::parse(EXAMPLE).unwrap();
        cfg.prep[1] = Complex64::new(0.1, -1.0 / 3.0);
        cfg.g_b = 0.1 + 0.2;
        cfg.psi0_file = Some(PathBuf::from("meter.dat"));
        assert_eq!(ExperimentConfig::parse(&cfg.dump()).unwrap(), cfg);

        let effect: Vec<String> = (0..16).map(|k| if k % 5 == 0 { "0.5".into() } else { "0".into() }).collect();
        let text = format!("prep = 1,0,0,0\npost_effect = {}\n", effect.join(","));
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.dump()).unwrap(), cfg);
        assert!(matches!(cfg.resolve().unwrap().system, PhotonSystem::Mixed { .. }));
    }

    #[test]
    fn errors_name_the_field() {
        let err = |text: &str| match ExperimentConfig::parse(text).and_then(|c| c.resolve().map(|_| c)) {
            Err(CliError::Config(m)) => m,
            other => panic!("{other:?}"),
        };
        assert!(err("prep = 1,0,1,1\npost = 1,0,1,-1\n").contains("prep"));
        assert!(err("prep = 1,0,0,0\npost = 1,0,0,x\n").contains("post"));
        assert!(err("prep = 1,0,0,0\npost = 1,0,0,0\ng_a = -1\n").contains("g_a"));
        assert!(err("prep = 1,0,0,0\npost = 1,0,0,0\nnoise_b = -1\n").contains("noise_b"));
        assert!(err("prep = 1,0,0,0\npost = 1,0,0,0\nfoo = 1\n").contains("foo"));
        assert!(err("prep = 1,0,0,0\npost = 1,0,0,0\nseed = 1\nseed = 2\n").contains("duplicate"));
        assert!(err("prep = 1,0,0,0\n").contains("post"));
    }
}
