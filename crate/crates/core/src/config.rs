//! Run configuration, stored as TOML.
//!
//! ```toml
//! gamma = -1.0
//! epsilon = 1e-3
//! eta = 0.0
//! grid_size = 10
//! h = 0.1
//! i_max = 4
//!
//! [domain]
//! x_min = -3.0
//! x_max = 3.0
//! y_min = -3.0
//! y_max = 3.0
//!
//! [target]
//! kind = "rounded_square"
//! side = 4.0
//! corner_radius = 1.0
//! ```
//!
//! Any top-level scalar may be overridden from the environment with
//! `PSEUDOSOLID_<NAME>` (upper case), e.g. `PSEUDOSOLID_H=0.05`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::TargetShape;
use crate::rbf::Rect;
use crate::state::{ElasticityParams, NewtonOptions, StateParams};

pub const ENV_PREFIX: &str = "PSEUDOSOLID_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Flux on the free boundary, negative.
    pub gamma: f64,
    #[serde(default = "defaults::epsilon")]
    pub epsilon: f64,
    /// Gray-region penalty weight; zero disables it.
    #[serde(default)]
    pub eta: f64,
    /// Knots per side of the RBF grid.
    pub grid_size: usize,
    #[serde(default = "defaults::alpha_min")]
    pub alpha_min: f64,
    #[serde(default = "defaults::alpha_max")]
    pub alpha_max: f64,
    /// Characteristic mesh size.
    pub h: f64,
    #[serde(default = "defaults::i_max")]
    pub i_max: usize,
    #[serde(default = "defaults::toler")]
    pub toler: f64,
    /// Radius of the circular inclusion the initial design represents.
    #[serde(default = "defaults::initial_radius")]
    pub initial_radius: f64,
    /// Gray half width for single state solves; `h/2` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default = "defaults::mu")]
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "defaults::newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "defaults::newton_max_iter")]
    pub newton_max_iter: usize,
    /// Sample angles for the tracking cost; automatic when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default = "defaults::max_nodes")]
    pub max_nodes: usize,
    #[serde(default = "defaults::grad_check_samples")]
    pub grad_check_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::yes")]
    pub deterministic: bool,
    #[serde(default = "defaults::output")]
    pub output: PathBuf,
    pub domain: Rect,
    pub target: TargetShape,
}

mod defaults {
    use std::path::PathBuf;

    pub fn epsilon() -> f64 {
        1e-3
    }
    pub fn alpha_min() -> f64 {
        -1e20
    }
    pub fn alpha_max() -> f64 {
        1e20
    }
    pub fn i_max() -> usize {
        8
    }
    pub fn toler() -> f64 {
        1e-6
    }
    pub fn initial_radius() -> f64 {
        1.0
    }
    pub fn mu() -> f64 {
        0.5
    }
    pub fn newton_tol() -> f64 {
        1e-10
    }
    pub fn newton_max_iter() -> usize {
        25
    }
    pub fn max_nodes() -> usize {
        crate::mesh::DEFAULT_MAX_NODES
    }
    pub fn grad_check_samples() -> usize {
        5
    }
    pub fn yes() -> bool {
        true
    }
    pub fn output() -> PathBuf {
        PathBuf::from("out")
    }
}

impl RunConfig {
    /// A configuration with every optional field at its default.
    pub fn new(gamma: f64, grid_size: usize, h: f64, domain: Rect, target: TargetShape) -> Self {
        Self {
            gamma,
            epsilon: defaults::epsilon(),
            eta: 0.0,
            grid_size,
            alpha_min: defaults::alpha_min(),
            alpha_max: defaults::alpha_max(),
            h,
            i_max: defaults::i_max(),
            toler: defaults::toler(),
            initial_radius: defaults::initial_radius(),
            delta: None,
            mu: defaults::mu(),
            lambda: 0.0,
            newton_tol: defaults::newton_tol(),
            newton_max_iter: defaults::newton_max_iter(),
            samples: None,
            max_nodes: defaults::max_nodes(),
            grad_check_samples: defaults::grad_check_samples(),
            seed: 0,
            deterministic: true,
            output: defaults::output(),
            domain,
            target,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads, applies environment overrides, then validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut value: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        apply_env_overrides(&mut value, std::env::vars())?;
        let cfg: Self = value.try_into().map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every violated constraint, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                bad.push(msg);
            }
        };
        check(self.gamma < 0.0, format!("gamma must be negative (got {})", self.gamma));
        check(self.epsilon > 0.0, format!("epsilon must be positive (got {})", self.epsilon));
        check(self.eta >= 0.0, format!("eta must be nonnegative (got {})", self.eta));
        check(self.grid_size >= 4, format!("grid_size must be at least 4 (got {})", self.grid_size));
        check(self.h > 0.0, format!("h must be positive (got {})", self.h));
        check(
            self.alpha_min < self.alpha_max,
            format!("alpha_min {} must be below alpha_max {}", self.alpha_min, self.alpha_max),
        );
        check(self.i_max >= 1, "i_max must be at least 1".into());
        check(self.toler >= 0.0, format!("toler must be nonnegative (got {})", self.toler));
        check(
            self.initial_radius > 0.0,
            format!("initial_radius must be positive (got {})", self.initial_radius),
        );
        if let Some(d) = self.delta {
            check(d >= 0.0, format!("delta must be nonnegative (got {d})"));
        }
        check(
            self.mu > 0.0 && self.lambda >= 0.0,
            format!("Lame parameters mu {} lambda {} invalid", self.mu, self.lambda),
        );
        check(self.newton_tol > 0.0, format!("newton_tol must be positive (got {})", self.newton_tol));
        check(self.newton_max_iter >= 1, "newton_max_iter must be at least 1".into());
        if let Some(m) = self.samples {
            check(m >= 8, format!("samples must be at least 8 (got {m})"));
        }
        check(self.max_nodes >= 16, format!("max_nodes too small ({})", self.max_nodes));
        let d = self.domain;
        check(
            d.x_max > d.x_min && d.y_max > d.y_min,
            format!("domain is empty: {d:?}"),
        );
        // the design rectangle must cover the initial reference disk
        if self.gamma < 0.0 && self.initial_radius > 0.0 && d.x_max > d.x_min && d.y_max > d.y_min {
            if let Ok(c) = crate::analytic::bernoulli_radius(self.initial_radius, self.gamma) {
                check(
                    d.x_min <= -c && d.x_max >= c && d.y_min <= -c && d.y_max >= c,
                    format!("domain {d:?} does not contain the initial disk of radius {c:.6}"),
                );
            }
        }
        if let Err(e) = self.target.validate() {
            bad.push(e.to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    /// State parameters for gray half width `delta`.
    pub fn state_params(&self, delta: f64) -> StateParams {
        StateParams {
            gamma: self.gamma,
            epsilon: self.epsilon,
            delta,
            elasticity: ElasticityParams {
                mu: self.mu,
                lambda: self.lambda,
            },
        }
    }

    /// Gray half width for single state solves.
    pub fn solve_delta(&self) -> f64 {
        self.delta.unwrap_or(0.5 * self.h)
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            ..NewtonOptions::default()
        }
    }
}

/// Replaces top-level scalar keys from `PSEUDOSOLID_<KEY>` variables. The
/// value is parsed as a TOML value, falling back to a string.
pub fn apply_env_overrides(table: &mut toml::Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    for (k, v) in vars {
        let Some(name) = k.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let key = name.to_ascii_lowercase();
        if matches!(key.as_str(), "domain" | "target") {
            return Err(Error::Config(vec![format!("{k}: only scalar fields can be overridden")]));
        }
        let parsed: toml::Value = format!("x = {v}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("x"))
            .unwrap_or(toml::Value::String(v));
        table.insert(key, parsed);
    }
    Ok(())
}
