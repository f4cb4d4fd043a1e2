//! Run configuration: a flat, fully deterministic description of one simulation.
//!
//! A [`SimConfig`] is parsed from flat JSON, validated with field-precise
//! errors, and hashed (FNV-1a over its canonical JSON form) so every output
//! file can name the exact configuration that produced it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::InitialDataFamily;
use crate::evolver::{BoundaryKind, EvolverParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    /// JSON syntax or missing/unknown fields; serde's message names the field.
    #[error(transparent)]
    Parse(#[from] serde_json::Error),
    #[error("config field `{field}` invalid: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

/// Complete description of one run: initial data, domain, base resolution,
/// refinement policy, stopping rules, and diagnostics knobs.
///
/// Units: `radius`, `delta`, `outer_radius` are lengths in the same unit as
/// the radial coordinate; times (`t_max`, `min_time`, `snapshot_times`) are in
/// the same unit (wave speed is 1). Everything else is dimensionless.
/// There is no random state anywhere; identical configs give identical runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Bump amplitude of the initial displacement.
    pub amplitude: f64,
    /// Bump center radius.
    pub radius: f64,
    /// Bump width.
    pub delta: f64,

    /// Outer edge of the computational domain.
    #[serde(default = "default_outer_radius")]
    pub outer_radius: f64,
    /// Interval count of the coarsest mesh (even, at least 8).
    #[serde(default = "default_base_points")]
    pub base_points: usize,
    /// Time step as a fraction of the mesh spacing.
    #[serde(default = "default_courant")]
    pub courant: f64,
    /// Outer boundary treatment.
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryKind,

    /// Refinement fires when |u_r(0)| · h_finest exceeds this.
    #[serde(default = "default_refine_c")]
    pub refine_c: f64,
    /// Hard cap on refinement depth.
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,

    /// Give up (inconclusive) past this time.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    /// Dispersal is never declared before this time.
    #[serde(default = "default_min_time")]
    pub min_time: f64,
    /// Collapse halts once lambda falls below this multiple of the finest
    /// attainable spacing.
    #[serde(default = "default_lambda_stop_factor")]
    pub lambda_stop_factor: f64,
    /// Dispersal is declared once lambda has rebounded by this factor from
    /// its interior minimum.
    #[serde(default = "default_growth_factor")]
    pub growth_factor: f64,
    /// The rebound must hold continuously for this long before dispersal is
    /// declared; filters the sign-change spikes of the central slope.
    #[serde(default = "default_rebound_hold")]
    pub rebound_hold: f64,
    /// Central slope magnitudes below this floor yield no scale estimate.
    #[serde(default = "default_slope_floor")]
    pub slope_floor: f64,

    /// Diagnostics are sampled every 2^cadence_log2 coarse steps.
    #[serde(default = "default_cadence_log2")]
    pub cadence_log2: u32,
    /// Rate fits use samples with lambda below this fraction of lambda at
    /// first refinement.
    #[serde(default = "default_fit_window_factor")]
    pub fit_window_factor: f64,
    /// Absolute fit-window cap; overrides `fit_window_factor` when set.
    #[serde(default)]
    pub fit_lambda_max: Option<f64>,
    /// Profile-shape comparisons extend to this similarity radius.
    #[serde(default = "default_eta_max")]
    pub eta_max: f64,
    /// Full field snapshots are written at these times.
    #[serde(default)]
    pub snapshot_times: Vec<f64>,

    /// Default output directory; a command-line destination overrides it.
    /// Not part of the canonical form or the hash: where results land does
    /// not change what was computed.
    #[serde(default)]
    pub out_dir: Option<String>,
}

fn default_outer_radius() -> f64 {
    16.0
}
fn default_base_points() -> usize {
    1024
}
fn default_courant() -> f64 {
    0.5
}
fn default_boundary() -> BoundaryKind {
    BoundaryKind::Sommerfeld2d
}
fn default_refine_c() -> f64 {
    0.2
}
fn default_max_depth() -> usize {
    20
}
fn default_t_max() -> f64 {
    20.0
}
fn default_min_time() -> f64 {
    0.5
}
fn default_lambda_stop_factor() -> f64 {
    10.0
}
fn default_growth_factor() -> f64 {
    4.0
}
fn default_rebound_hold() -> f64 {
    0.5
}
fn default_slope_floor() -> f64 {
    1e-8
}
fn default_cadence_log2() -> u32 {
    4
}
fn default_fit_window_factor() -> f64 {
    0.1
}
fn default_eta_max() -> f64 {
    10.0
}

impl SimConfig {
    /// Parses and validates a flat JSON config.
    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.amplitude.is_finite() {
            return Err(invalid("amplitude", "must be finite"));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(invalid("radius", "must be positive and finite"));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(invalid("delta", "must be positive and finite"));
        }
        if !(self.outer_radius.is_finite() && self.outer_radius > 0.0) {
            return Err(invalid("outer_radius", "must be positive and finite"));
        }
        if self.base_points < 8 || self.base_points % 2 != 0 {
            return Err(invalid(
                "base_points",
                format!("must be an even interval count of at least 8, got {}", self.base_points),
            ));
        }
        if !(self.courant > 0.0 && self.courant <= 1.0) {
            return Err(invalid("courant", "must lie in (0, 1]"));
        }
        if !(self.refine_c.is_finite() && self.refine_c > 0.0) {
            return Err(invalid("refine_c", "must be positive"));
        }
        if self.max_depth > 40 {
            return Err(invalid("max_depth", "depths beyond 40 underflow the mesh"));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(invalid("t_max", "must be positive and finite"));
        }
        if !(self.min_time.is_finite() && self.min_time >= 0.0) {
            return Err(invalid("min_time", "must be nonnegative"));
        }
        if !(self.lambda_stop_factor.is_finite() && self.lambda_stop_factor > 0.0) {
            return Err(invalid("lambda_stop_factor", "must be positive"));
        }
        if !(self.growth_factor.is_finite() && self.growth_factor > 1.0) {
            return Err(invalid("growth_factor", "must exceed 1"));
        }
        if !(self.rebound_hold.is_finite() && self.rebound_hold >= 0.0) {
            return Err(invalid("rebound_hold", "must be nonnegative"));
        }
        if !(self.slope_floor.is_finite() && self.slope_floor > 0.0) {
            return Err(invalid("slope_floor", "must be positive"));
        }
        if self.cadence_log2 > 20 {
            return Err(invalid("cadence_log2", "must be at most 20"));
        }
        if !(self.fit_window_factor > 0.0 && self.fit_window_factor <= 1.0) {
            return Err(invalid("fit_window_factor", "must lie in (0, 1]"));
        }
        if let Some(lm) = self.fit_lambda_max {
            if !(lm.is_finite() && lm > 0.0) {
                return Err(invalid("fit_lambda_max", "must be positive when set"));
            }
        }
        if !(self.eta_max.is_finite() && self.eta_max > 1.0) {
            return Err(invalid("eta_max", "must exceed 1"));
        }
        if self.snapshot_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(invalid("snapshot_times", "entries must be nonnegative and finite"));
        }
        Ok(())
    }

    pub fn initial_family(&self) -> InitialDataFamily {
        InitialDataFamily { amplitude: self.amplitude, radius: self.radius, delta: self.delta }
    }

    pub fn evolver_params(&self) -> EvolverParams {
        EvolverParams {
            outer_radius: self.outer_radius,
            base_intervals: self.base_points,
            courant: self.courant,
            boundary: self.boundary,
            refine_threshold: self.refine_c,
            max_depth: self.max_depth,
        }
    }

    /// Canonical JSON form: declaration-order fields, shortest round-trip
    /// floats. The config hash is taken over exactly this string.
    pub fn to_canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        serde_json::to_string(&c).expect("config serialization cannot fail")
    }

    pub fn hash(&self) -> u64 {
        fnv1a64(self.to_canonical_json().as_bytes())
    }

    /// Hash as fixed-width hex, as embedded in output headers.
    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

/// FNV-1a, 64-bit. Stable across platforms and Rust versions, unlike the
/// std hasher.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"amplitude": 0.5, "radius": 2.0, "delta": 0.4}"#
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = SimConfig::from_json_str(minimal()).unwrap();
        assert_eq!(cfg.amplitude, 0.5);
        assert_eq!(cfg.outer_radius, 16.0);
        assert_eq!(cfg.base_points, 1024);
        assert_eq!(cfg.courant, 0.5);
        assert_eq!(cfg.boundary, BoundaryKind::Sommerfeld2d);
        assert_eq!(cfg.refine_c, 0.2);
        assert_eq!(cfg.max_depth, 20);
        assert_eq!(cfg.lambda_stop_factor, 10.0);
        assert_eq!(cfg.growth_factor, 4.0);
        assert_eq!(cfg.rebound_hold, 0.5);
        assert_eq!(cfg.slope_floor, 1e-8);
        assert_eq!(cfg.fit_window_factor, 0.1);
        assert!(cfg.fit_lambda_max.is_none());
        assert!(cfg.snapshot_times.is_empty());
        assert!(cfg.out_dir.is_none());
    }

    #[test]
    fn missing_delta_is_named_in_the_error() {
        let err = SimConfig::from_json_str(r#"{"amplitude": 0.5, "radius": 2.0}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("delta"), "error should name the missing field: {msg}");
    }

    #[test]
    fn unknown_field_is_named_in_the_error() {
        let err = SimConfig::from_json_str(
            r#"{"amplitude": 0.5, "radius": 2.0, "delta": 0.4, "ampltude": 1.0}"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ampltude"), "{msg}");
    }

    #[test]
    fn validation_names_the_offending_field() {
        let mut cfg = SimConfig::from_json_str(minimal()).unwrap();
        cfg.base_points = 17;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("base_points"), "{msg}");

        let mut cfg = SimConfig::from_json_str(minimal()).unwrap();
        cfg.courant = 0.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("courant"));

        let mut cfg = SimConfig::from_json_str(minimal()).unwrap();
        cfg.delta = -1.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("delta"));

        let mut cfg = SimConfig::from_json_str(minimal()).unwrap();
        cfg.growth_factor = 1.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("growth_factor"));
    }

    #[test]
    fn boundary_parses_snake_case_names() {
        let cfg = SimConfig::from_json_str(
            r#"{"amplitude": 0.5, "radius": 2.0, "delta": 0.4, "boundary": "sommerfeld_first_order"}"#,
        )
        .unwrap();
        assert_eq!(cfg.boundary, BoundaryKind::SommerfeldFirstOrder);
        let cfg = SimConfig::from_json_str(
            r#"{"amplitude": 0.5, "radius": 2.0, "delta": 0.4, "boundary": "none"}"#,
        )
        .unwrap();
        assert_eq!(cfg.boundary, BoundaryKind::None);
    }

    #[test]
    fn canonical_json_round_trips() {
        let cfg = SimConfig::from_json_str(
            r#"{"amplitude": 1.06782, "radius": 2.0, "delta": 0.4,
                "snapshot_times": [0.5, 2.5593558], "fit_lambda_max": 0.01}"#,
        )
        .unwrap();
        let json = cfg.to_canonical_json();
        let back = SimConfig::from_json_str(&json).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(json, back.to_canonical_json());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = SimConfig::from_json_str(minimal()).unwrap();
        let b = SimConfig::from_json_str(minimal()).unwrap();
        assert_eq!(a.hash_hex(), b.hash_hex());
        assert_eq!(a.hash_hex().len(), 16);

        let mut c = a.clone();
        c.amplitude = 0.5000001;
        assert_ne!(a.hash(), c.hash());

        let mut d = a.clone();
        d.out_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), d.hash());
    }

    #[test]
    fn fnv_matches_reference_vectors() {
        // standard FNV-1a test vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}
