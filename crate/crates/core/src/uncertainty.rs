//! Post-verification uncertainty: code-level hallucination signals,
//! repair-trajectory dynamics and verified-call coverage, combined into one
//! score used to filter verifier-passed programs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Action, Trajectory};
use crate::qas::{jaccard, normalize_source, InferredType, TypedScript};
use crate::schema::ApiSchema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerDistanceMode {
    /// Convergence on raw layer indices.
    #[default]
    Literal,
    /// Convergence on distance-to-pass: 0, 4, 3, 2, 1 map to 0, 1, 2, 3, 4.
    Remapped,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("{name} must sum to 1, got {sum}")]
    BadSum { name: &'static str, sum: f64 },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
}

fn default_alpha() -> [f64; 3] {
    [0.4, 0.3, 0.3]
}
fn default_w() -> [f64; 3] {
    [0.4, 0.3, 0.3]
}
fn default_lambda_small() -> f64 {
    0.15
}
fn default_lambda_r() -> f64 {
    0.6
}
fn default_theta() -> f64 {
    0.35
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyConfig {
    #[serde(default = "default_alpha")]
    pub alpha: [f64; 3],
    #[serde(default = "default_lambda_small")]
    pub lambda_i: f64,
    #[serde(default = "default_lambda_small")]
    pub lambda_e: f64,
    #[serde(default = "default_lambda_r")]
    pub lambda_r: f64,
    /// Weights of convergence, stagnation and ineffectiveness.
    #[serde(default = "default_w")]
    pub w: [f64; 3],
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default)]
    pub layer_distance_mode: LayerDistanceMode,
    /// A first-try pass (one candidate, layer 0) scores zero convergence
    /// uncertainty instead of one.
    #[serde(default = "yes")]
    pub zero_conv_on_first_pass: bool,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig {
            alpha: default_alpha(),
            lambda_i: default_lambda_small(),
            lambda_e: default_lambda_small(),
            lambda_r: default_lambda_r(),
            w: default_w(),
            theta: default_theta(),
            layer_distance_mode: LayerDistanceMode::Literal,
            zero_conv_on_first_pass: true,
        }
    }
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange { name, value: v })
            }
        };
        for (name, ws) in [("alpha", self.alpha), ("w", self.w)] {
            for v in ws {
                unit(name, v)?;
            }
            let sum: f64 = ws.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ConfigError::BadSum { name, sum });
            }
        }
        for (name, v) in [("lambda_i", self.lambda_i), ("lambda_e", self.lambda_e), ("lambda_r", self.lambda_r)] {
            if !(v >= 0.0) {
                return Err(ConfigError::Negative { name, value: v });
            }
        }
        unit("theta", self.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodeTerms {
    pub h_m: f64,
    pub h_i: usize,
    pub h_e: usize,
    pub c_code: f64,
    pub u_code: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryTerms {
    pub tau_conv: f64,
    pub tau_stag: f64,
    pub tau_eff: f64,
    pub u_traj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageTerms {
    pub covered: usize,
    pub total: usize,
    pub c_cov: f64,
    pub u_cov: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub h_m: f64,
    pub h_i: usize,
    pub h_e: usize,
    pub c_code: f64,
    pub u_code: f64,
    pub tau_conv: f64,
    pub tau_stag: f64,
    pub tau_eff: f64,
    pub u_traj: f64,
    pub c_cov: f64,
    pub u_cov: f64,
    pub u: f64,
    pub filtered: bool,
}

/// Whether a call's method is a known API member: by (type, name) when the
/// receiver resolves, by name alone when it does not.
fn method_known(schema: &ApiSchema, receiver: &InferredType, method: &str) -> bool {
    match receiver.candidates() {
        None => schema.method_names().contains(method),
        Some(ts) => ts.iter().all(|t| !t.many && schema.lookup_method(&t.base, method).is_some()),
    }
}

pub fn code_uncertainty(ts: &TypedScript, schema: &ApiSchema, cfg: &UncertaintyConfig) -> CodeTerms {
    let calls = ts.call_sites.len();
    let unknown = ts.call_sites.iter().filter(|c| !method_known(schema, &c.receiver_type, &c.method)).count();
    let h_m = if calls == 0 { 0.0 } else { unknown as f64 / calls as f64 };
    let h_i = ts.imports.iter().filter(|i| !schema.is_valid_import(i)).count();
    let known = schema.known_sets().enum_constants;
    let h_e = ts.enum_refs.iter().filter(|e| !known.contains(&e.key)).count();
    let c_code = (1.0 - cfg.lambda_i * h_i as f64 - cfg.lambda_e * h_e as f64 - cfg.lambda_r * h_m).clamp(0.0, 1.0);
    CodeTerms { h_m, h_i, h_e, c_code, u_code: 1.0 - c_code }
}

fn distance(layer: u8, mode: LayerDistanceMode) -> f64 {
    match mode {
        LayerDistanceMode::Literal => layer as f64,
        LayerDistanceMode::Remapped => match layer {
            0 => 0.0,
            l => (5 - l.min(4)) as f64,
        },
    }
}

/// Trajectory terms from raw sequences: verdict layers, candidate sources
/// and the indices `t >= 1` that were repair steps.
pub fn trajectory_terms(
    layers: &[u8],
    sources: &[String],
    repairs: &BTreeSet<usize>,
    cfg: &UncertaintyConfig,
) -> TrajectoryTerms {
    assert!(!layers.is_empty(), "a trajectory has at least one candidate");
    let t_len = layers.len() - 1;
    let d0 = distance(layers[0], cfg.layer_distance_mode);
    let dt = distance(layers[t_len], cfg.layer_distance_mode);
    let tau_conv = if t_len == 0 && layers[0] == 0 && cfg.zero_conv_on_first_pass {
        0.0
    } else {
        (1.0 - (d0 - dt) / d0.max(1.0)).max(0.0)
    };
    let tau_stag = if t_len == 0 {
        0.0
    } else {
        let sets: Vec<BTreeSet<String>> = sources.iter().map(|s| normalize_source(s)).collect();
        sets.windows(2).map(|w| jaccard(&w[0], &w[1])).sum::<f64>() / t_len as f64
    };
    let tau_eff = if repairs.is_empty() {
        0.0
    } else {
        repairs.iter().filter(|&&t| t >= 1 && t < layers.len() && layers[t] >= layers[t - 1]).count() as f64
            / repairs.len() as f64
    };
    let u_traj = cfg.w[0] * tau_conv + cfg.w[1] * tau_stag + cfg.w[2] * tau_eff;
    TrajectoryTerms { tau_conv, tau_stag, tau_eff, u_traj }
}

pub fn trajectory_uncertainty(traj: &Trajectory, cfg: &UncertaintyConfig) -> TrajectoryTerms {
    let repairs: BTreeSet<usize> = traj
        .actions
        .iter()
        .enumerate()
        .filter(|(_, a)| !matches!(a, Action::Accept { .. }))
        .map(|(i, _)| i + 1)
        .collect();
    trajectory_terms(&traj.verdicts, &traj.candidates, &repairs, cfg)
}

/// Covered call sites: the receiver resolves to declared object types that
/// all declare the method.
pub fn coverage_uncertainty(ts: &TypedScript, schema: &ApiSchema) -> CoverageTerms {
    let total = ts.call_sites.len();
    let covered = ts
        .call_sites
        .iter()
        .filter(|c| match c.receiver_type.candidates() {
            None => false,
            Some(ts) => ts.iter().all(|t| {
                !t.many && schema.is_object_type(&t.base) && schema.lookup_method(&t.base, &c.method).is_some()
            }),
        })
        .count();
    let c_cov = if total == 0 { 1.0 } else { covered as f64 / total as f64 };
    CoverageTerms { covered, total, c_cov, u_cov: 1.0 - c_cov }
}

pub fn combine(u_code: f64, u_traj: f64, u_cov: f64, cfg: &UncertaintyConfig) -> (f64, bool) {
    let u = cfg.alpha[0] * u_code + cfg.alpha[1] * u_traj + cfg.alpha[2] * u_cov;
    (u, u > cfg.theta)
}

pub fn score(ts: &TypedScript, traj: &Trajectory, schema: &ApiSchema, cfg: &UncertaintyConfig) -> UncertaintyScore {
    let c = code_uncertainty(ts, schema, cfg);
    let t = trajectory_uncertainty(traj, cfg);
    let v = coverage_uncertainty(ts, schema);
    let (u, filtered) = combine(c.u_code, t.u_traj, v.u_cov, cfg);
    UncertaintyScore {
        h_m: c.h_m,
        h_i: c.h_i,
        h_e: c.h_e,
        c_code: c.c_code,
        u_code: c.u_code,
        tau_conv: t.tau_conv,
        tau_stag: t.tau_stag,
        tau_eff: t.tau_eff,
        u_traj: t.u_traj,
        c_cov: v.c_cov,
        u_cov: v.u_cov,
        u,
        filtered,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{toy_schema, CANONICAL_PROGRAM};
    use crate::qas::{infer_types, parse};

    fn ts(src: &str) -> TypedScript {
        infer_types(&parse(src).unwrap(), &toy_schema())
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn clean_code() {
        let c = code_uncertainty(&ts(CANONICAL_PROGRAM), &toy_schema(), &UncertaintyConfig::default());
        assert_eq!((c.h_m, c.h_i, c.h_e, c.u_code), (0.0, 0, 0, 0.0));
    }

    #[test]
    fn one_unknown_call_one_bad_import() {
        let src = "import odb.XTools\nb = design.getBlock()\nn = b.findNet(\"clk\")\nx = b.getInsts()\nb.getArea()\n";
        let c = code_uncertainty(&ts(src), &toy_schema(), &UncertaintyConfig::default());
        assert!(close(c.h_m, 0.25));
        assert_eq!(c.h_i, 1);
        assert!(close(c.c_code, 0.7));
        assert!(close(c.u_code, 0.3));
    }

    #[test]
    fn clip_at_zero() {
        let src = "import a\nimport b\nimport c\nimport d\nimport e\nimport f\nimport g\n";
        let c = code_uncertainty(&ts(src), &toy_schema(), &UncertaintyConfig::default());
        assert_eq!(c.h_i, 7);
        assert_eq!((c.c_code, c.u_code), (0.0, 1.0));
    }

    #[test]
    fn trajectory_examples() {
        let cfg = UncertaintyConfig::default();
        let srcs = |n: usize| vec!["x = 1".to_string(); n];
        let t = trajectory_terms(&[3, 0], &["a = 1".into(), "b = 2".into()], &[1].into(), &cfg);
        assert_eq!(t.tau_conv, 0.0);
        assert_eq!(t.tau_stag, 0.0);
        let t = trajectory_terms(&[3, 3, 0], &srcs(3), &[1, 2].into(), &cfg);
        assert_eq!(t.tau_stag, 1.0);
        assert_eq!(t.tau_eff, 0.5);
        let t = trajectory_terms(&[0], &srcs(1), &BTreeSet::new(), &cfg);
        assert_eq!((t.tau_conv, t.tau_stag, t.tau_eff, t.u_traj), (0.0, 0.0, 0.0, 0.0));
        let literal = UncertaintyConfig { zero_conv_on_first_pass: false, ..cfg };
        assert_eq!(trajectory_terms(&[0], &srcs(1), &BTreeSet::new(), &literal).tau_conv, 1.0);
    }

    #[test]
    fn remapped_convergence() {
        let cfg = UncertaintyConfig { layer_distance_mode: LayerDistanceMode::Remapped, ..Default::default() };
        // 1 -> 4: literal says worse, remapped says three of four steps closer
        let t = trajectory_terms(&[1, 4], &["a".into(), "b".into()], &[1].into(), &cfg);
        assert!(close(t.tau_conv, 0.25));
        let lit = trajectory_terms(&[1, 4], &["a".into(), "b".into()], &[1].into(), &UncertaintyConfig::default());
        assert_eq!(lit.tau_conv, 4.0);
        assert!(lit.tau_conv > 1.0 || lit.tau_conv <= 1.0);
    }

    #[test]
    fn coverage() {
        let c = coverage_uncertainty(&ts(CANONICAL_PROGRAM), &toy_schema());
        assert_eq!(c.u_cov, 0.0);
        let src = "b = design.getBlock()\nb.getNets()\nb.getInsts()\nb.getNets()\nq.getName()\n";
        let c = coverage_uncertainty(&ts(src), &toy_schema());
        assert!(close(c.c_cov, 0.8));
        assert!(close(c.u_cov, 0.2));
        let c = coverage_uncertainty(&ts(""), &toy_schema());
        assert_eq!((c.c_cov, c.u_cov), (1.0, 0.0));
    }

    #[test]
    fn combination() {
        let cfg = UncertaintyConfig::default();
        let (u, f) = combine(0.3, 0.2, 0.1, &cfg);
        assert!(close(u, 0.21));
        assert!(!f);
        assert_eq!(combine(0.0, 0.0, 0.0, &cfg), (0.0, false));
        let (u, f) = combine(1.0, 1.0, 1.0, &cfg);
        assert!(close(u, 1.0));
        assert!(f);
    }

    #[test]
    fn config_validation() {
        assert!(UncertaintyConfig::default().validate().is_ok());
        let bad = UncertaintyConfig { alpha: [0.5, 0.5, 0.5], ..Default::default() };
        assert!(matches!(bad.validate(), Err(ConfigError::BadSum { .. })));
        let bad = UncertaintyConfig { lambda_r: -1.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(ConfigError::Negative { .. })));
        let parsed: UncertaintyConfig = serde_json::from_str("{\"theta\": 0.1}").unwrap();
        assert_eq!(parsed.alpha, [0.4, 0.3, 0.3]);
        assert_eq!(parsed.theta, 0.1);
    }
}
