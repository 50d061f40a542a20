use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use expander_lab::exponents::DEFAULT_SEED;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

/// Flags shared by every command; unset flags fall back to the config file,
/// then to defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Spatial dimension
    #[arg(long)]
    pub d: Option<u32>,
    /// Nonlinearity power
    #[arg(long)]
    pub p: Option<f64>,
    /// Lower Lebesgue exponent, 1 <= q < q_c
    #[arg(long)]
    pub q: Option<f64>,
    /// Upper Lebesgue exponent, r > q_c
    #[arg(long)]
    pub r: Option<f64>,
    /// Shooting value U(0)
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub alpha_min: Option<f64>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[arg(long)]
    pub alpha_steps: Option<usize>,
    #[arg(long)]
    pub rho_max: Option<f64>,
    #[arg(long)]
    pub drho: Option<f64>,
    #[arg(long)]
    pub dtau: Option<f64>,
    /// Seed amplitude (demo) or relative perturbation of the profile (evolve)
    #[arg(long, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau1: Option<f64>,
    /// Bisection tolerance for alpha*
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; artifacts go to stdout when absent
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Plain-text key=value file; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug)]
pub enum ConfigError {
    /// Malformed input: exit 64.
    Usage(String),
    /// Well-formed but outside the valid range: exit 65.
    Domain(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Usage(m) | ConfigError::Domain(m) => f.write_str(m),
        }
    }
}

fn set<T: FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> Result<(), ConfigError> {
    if slot.is_none() {
        let v = value
            .parse()
            .map_err(|_| ConfigError::Usage(format!("config key {key}: cannot parse {value:?}")))?;
        *slot = Some(v);
    }
    Ok(())
}

impl Flags {
    /// Fills unset flags from `key = value` lines; `#` starts a comment.
    pub fn merge_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Usage(format!("config line {}: expected key=value", n + 1)));
            };
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            match key.as_str() {
                "d" => set(&mut self.d, &key, value)?,
                "p" => set(&mut self.p, &key, value)?,
                "q" => set(&mut self.q, &key, value)?,
                "r" => set(&mut self.r, &key, value)?,
                "alpha" => set(&mut self.alpha, &key, value)?,
                "alpha-min" => set(&mut self.alpha_min, &key, value)?,
                "alpha-max" => set(&mut self.alpha_max, &key, value)?,
                "alpha-steps" => set(&mut self.alpha_steps, &key, value)?,
                "rho-max" => set(&mut self.rho_max, &key, value)?,
                "drho" => set(&mut self.drho, &key, value)?,
                "dtau" => set(&mut self.dtau, &key, value)?,
                "eps" => set(&mut self.eps, &key, value)?,
                "tau0" => set(&mut self.tau0, &key, value)?,
                "tau1" => set(&mut self.tau1, &key, value)?,
                "tol" => set(&mut self.tol, &key, value)?,
                "seed" => set(&mut self.seed, &key, value)?,
                "out" => set(&mut self.out, &key, value)?,
                "format" => set(&mut self.format, &key, value)?,
                _ => return Err(ConfigError::Usage(format!("config line {}: unknown key {key:?}", n + 1))),
            }
        }
        Ok(())
    }
}

/// Fully resolved configuration, echoed into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub d: u32,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub alpha: Option<f64>,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub alpha_steps: usize,
    pub rho_max: f64,
    pub drho: f64,
    pub dtau: f64,
    pub eps: Option<f64>,
    pub tau0: f64,
    pub tau1: f64,
    pub tol: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::Domain(format!("{name} = {v} must be positive")))
    }
}

impl RunConfig {
    pub fn resolve(command: &str, mut flags: Flags) -> Result<Self, ConfigError> {
        if let Some(path) = flags.config.clone() {
            flags.merge_file(&path)?;
        }
        let d = flags.d.ok_or_else(|| ConfigError::Usage("missing --d".into()))?;
        let p = flags.p.ok_or_else(|| ConfigError::Usage("missing --p".into()))?;
        if matches!(command, "profile" | "evolve") && flags.alpha.is_none() {
            return Err(ConfigError::Usage(format!("{command} needs --alpha")));
        }
        // q_c is recomputed by the library; the default r = 2 q_c is always admissible
        let q_c = f64::from(d) * (p - 1.0) / 2.0;
        let cfg = RunConfig {
            command: command.to_string(),
            d,
            p,
            q: flags.q.unwrap_or(1.0),
            r: flags.r.unwrap_or(2.0 * q_c),
            alpha: flags.alpha,
            alpha_min: flags.alpha_min.unwrap_or(0.1),
            alpha_max: flags.alpha_max.unwrap_or(50.0),
            alpha_steps: flags.alpha_steps.unwrap_or(50),
            rho_max: flags.rho_max.unwrap_or(16.0),
            drho: flags.drho.unwrap_or(0.01),
            dtau: flags.dtau.unwrap_or(0.01),
            eps: flags.eps,
            tau0: flags.tau0.unwrap_or(-12.0),
            tau1: flags.tau1.unwrap_or(-2.0),
            tol: flags.tol.unwrap_or(1e-6),
            seed: flags.seed.unwrap_or(DEFAULT_SEED),
            out: flags.out,
            format: flags.format.unwrap_or(Format::Json),
        };
        positive("rho-max", cfg.rho_max)?;
        positive("drho", cfg.drho)?;
        positive("dtau", cfg.dtau)?;
        positive("tol", cfg.tol)?;
        positive("alpha-min", cfg.alpha_min)?;
        if !(cfg.alpha_max > cfg.alpha_min) {
            return Err(ConfigError::Domain(format!(
                "alpha-max = {} must exceed alpha-min = {}",
                cfg.alpha_max, cfg.alpha_min
            )));
        }
        if cfg.alpha_steps < 2 {
            return Err(ConfigError::Domain("alpha-steps must be at least 2".into()));
        }
        if !(cfg.tau1 > cfg.tau0) {
            return Err(ConfigError::Domain(format!("tau1 = {} must exceed tau0 = {}", cfg.tau1, cfg.tau0)));
        }
        Ok(cfg)
    }

    /// `alpha` alone when given, else `alpha_steps` evenly spaced values
    /// over `[alpha_min, alpha_max]`.
    pub fn alphas(&self) -> Vec<f64> {
        if let Some(a) = self.alpha {
            return vec![a];
        }
        let n = self.alpha_steps;
        (0..n)
            .map(|i| self.alpha_min + (self.alpha_max - self.alpha_min) * i as f64 / (n - 1) as f64)
            .collect()
    }

    /// Config as `# key=value` lines for the head of a CSV artifact.
    pub fn csv_preamble(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut s = String::new();
        if let serde_json::Value::Object(map) = value {
            for (k, v) in map {
                let v = match v {
                    serde_json::Value::String(s) => s,
                    serde_json::Value::Null => String::new(),
                    other => other.to_string(),
                };
                s.push_str(&format!("# {k}={v}\n"));
            }
        }
        s
    }
}
