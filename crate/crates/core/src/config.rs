//! The single configuration document behind every pipeline run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coarse::CoarseConfig;
use crate::error::{Error, Result};
use crate::eval::{IcpParams, Method};
use crate::graph::{NodeLayout, SomSchedule};
use crate::nonrigid::Weighting;
use crate::synthetic::FixtureSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationParams {
    /// Nodes per local rigid fit.
    pub n_reg: usize,
    /// Local transforms blended at each point.
    pub n_blend: usize,
    pub weighting: Weighting,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            n_reg: 3,
            n_blend: 3,
            weighting: Weighting::Inverse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferParams {
    /// Radius of the region fitted around each waypoint, mm.
    pub sphere_radius: f64,
}

impl Default for TransferParams {
    fn default() -> Self {
        Self { sphere_radius: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalParams {
    /// One fixture per seed.
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Evaluate (fixture, method) cells concurrently.
    pub parallel: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            methods: vec![Method::Icp, Method::Graph],
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub coarse: CoarseConfig,
    pub layout: NodeLayout,
    pub som: SomSchedule,
    pub registration: RegistrationParams,
    pub transfer: TransferParams,
    pub icp: IcpParams,
    pub fixture: FixtureSpec,
    pub eval: EvalParams,
}

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::Config { field, message } => Error::Config {
            field: format!("{prefix}.{field}"),
            message,
        },
        other => other,
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.coarse.validate()?;
        self.layout.validate()?;
        self.som.validate()?;
        self.icp.validate()?;
        let r = &self.registration;
        if r.n_reg < 3 {
            return Err(Error::config(
                "registration.n_reg",
                format!("must be at least 3, got {}", r.n_reg),
            ));
        }
        if r.n_reg > self.layout.total() {
            return Err(Error::config("registration.n_reg", "exceeds the node count"));
        }
        if r.n_blend == 0 || r.n_blend > self.layout.total() {
            return Err(Error::config(
                "registration.n_blend",
                format!("must lie in 1..={}, got {}", self.layout.total(), r.n_blend),
            ));
        }
        let radius = self.transfer.sphere_radius;
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::config(
                "transfer.sphere_radius",
                format!("must be positive, got {radius}"),
            ));
        }
        let f = &self.fixture;
        for (field, v) in [
            ("fixture.amplitude", f.amplitude),
            ("fixture.max_shift", f.max_shift),
            ("fixture.max_rotation_deg", f.max_rotation_deg),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(field, format!("must be non-negative, got {v}")));
            }
        }
        if !(f.length_scale.is_finite() && f.length_scale > 0.0) {
            return Err(Error::config(
                "fixture.length_scale",
                format!("must be positive, got {}", f.length_scale),
            ));
        }
        if f.max_rotation_deg >= 90.0 {
            return Err(Error::config("fixture.max_rotation_deg", "must be below 90"));
        }
        if f.amplitude > 0.0 && f.bump_count == 0 {
            return Err(Error::config(
                "fixture.bump_count",
                "a bump field needs at least one bump",
            ));
        }
        f.anatomy.validate().map_err(|e| prefixed("fixture.anatomy", e))?;
        if self.eval.seeds.is_empty() {
            return Err(Error::config("eval.seeds", "at least one seed is required"));
        }
        if self.eval.methods.is_empty() {
            return Err(Error::config("eval.methods", "at least one method is required"));
        }
        Ok(())
    }

    /// Parse and validate a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let location = e
                .span()
                .map(|s| {
                    let line = text[..s.start].matches('\n').count() + 1;
                    format!("line {line}")
                })
                .unwrap_or_else(|| "document".into());
            Error::Parse {
                path: "<config>".into(),
                location,
                message,
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { location, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                location,
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
