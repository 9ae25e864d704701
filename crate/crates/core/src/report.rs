//! Serializable reports produced by scenario runs and axiom surveys.
//!
//! Reports are plain data: every numeric field is computed before the report
//! is assembled, and serialization is deterministic (`BTreeMap` keys, stable
//! field order) so that two runs with the same seed and configuration produce
//! byte-identical JSON.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::reduction::{ConditionResult, Tolerances};

/// Bumped whenever the report layout changes incompatibly.
pub const SCHEMA_VERSION: u32 = 1;

/// Summary statistics for a named residual collected across sample points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

impl Aggregate {
    /// Collapses a slice of values; an empty slice yields a zero aggregate.
    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Aggregate { max: 0.0, mean: 0.0, count: 0 };
        }
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = values.iter().sum::<f64>() / count as f64;
        Aggregate { max, mean, count }
    }
}

/// One named pass/fail criterion with the measured value and its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: String,
    pub pass: bool,
    /// Measured value the check compared against `threshold`.
    pub value: f64,
    pub threshold: f64,
}

/// Per-structure diagnostics at a single sample point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructurePointReport {
    pub name: String,
    /// Keyed by condition id (`preserves_k`, `reducible`, ...).
    pub conditions: BTreeMap<String, ConditionResult>,
    /// Bracket-invariance residual of the structure operator under the action.
    pub invariance: f64,
    /// Residual of `J^2 + Id` for the restricted operator, when restriction applies.
    pub reduced_square: Option<f64>,
    /// Pairing-orthogonality residual of the restricted operator.
    pub reduced_orthogonality: Option<f64>,
    /// Dimension of the pushed-forward Dirac fiber.
    pub dirac_dim: usize,
    /// Isotropy defect of the pushed-forward Dirac fiber.
    pub dirac_isotropy: f64,
    /// Dimension of the overlap with the conjugate fiber (0 for structures).
    pub conjugate_overlap: usize,
    /// Principal angle between the Dirac pushforward and the restricted
    /// operator's eigenspace; present when both routes are available.
    pub two_path_angle: Option<f64>,
    /// Sup-norm gap between the two reduced operators.
    pub operator_gap: Option<f64>,
}

/// All measurements taken at one sample point on the level set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointReport {
    pub point: Vec<f64>,
    pub level_residual: f64,
    pub k_dim: usize,
    pub kperp_dim: usize,
    pub kg_dim: usize,
    pub tangent_dim: Option<usize>,
    pub cotangent_dim: Option<usize>,
    pub k_isotropy: f64,
    pub homomorphism: f64,
    pub equivariance: f64,
    pub morphism: f64,
    pub moment_pairing: f64,
    /// Bracket-invariance residual of the auxiliary metric, when it is
    /// expected to be preserved by the action.
    pub aux_invariance: Option<f64>,
    pub structures: Vec<StructurePointReport>,
    /// Keyed by oracle id; sup-norm error against the closed-form target.
    pub oracle_errors: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

/// Full record of one scenario run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: String,
    pub samples: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub points: Vec<PointReport>,
    /// Residual summaries across all points, keyed by residual name.
    pub aggregates: BTreeMap<String, Aggregate>,
    pub checks: Vec<CheckReport>,
    pub pass: bool,
    /// Wall-clock time; excluded from serialization to keep reports
    /// reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_ms: Option<u128>,
}

impl RunReport {
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn failed_checks(&self) -> Vec<&CheckReport> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Record of a bracket-axiom survey over random sections.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AxiomsReport {
    pub schema_version: u32,
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    /// Keyed by axiom name (`jacobi`, `leibniz`, `invariance`, `anchor`,
    /// `symmetric_part`) plus `splitting_curvature`.
    pub residuals: BTreeMap<String, Aggregate>,
    /// Jacobi residual under a deliberately non-closed twist; must be large.
    pub control_jacobi: f64,
    pub checks: Vec<CheckReport>,
    pub pass: bool,
}

impl AxiomsReport {
    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_of_values() {
        let a = Aggregate::from_values(&[1.0, 3.0, 2.0]);
        assert_eq!(a.max, 3.0);
        assert!((a.mean - 2.0).abs() < 1e-15);
        assert_eq!(a.count, 3);

        let empty = Aggregate::from_values(&[]);
        assert_eq!(empty.count, 0);
        assert_eq!(empty.max, 0.0);
    }

    #[test]
    fn report_json_round_trip() {
        let report = RunReport {
            schema_version: SCHEMA_VERSION,
            scenario: "s1".into(),
            samples: 1,
            seed: 7,
            tolerances: Tolerances::default(),
            points: vec![PointReport {
                point: vec![1.0, 0.0, 0.0, 0.0],
                level_residual: 0.0,
                k_dim: 2,
                kperp_dim: 6,
                kg_dim: 4,
                tangent_dim: Some(2),
                cotangent_dim: Some(2),
                k_isotropy: 0.0,
                homomorphism: 0.0,
                equivariance: 0.0,
                morphism: 0.0,
                moment_pairing: 0.0,
                aux_invariance: Some(0.0),
                structures: vec![],
                oracle_errors: BTreeMap::new(),
                warnings: vec![],
            }],
            aggregates: BTreeMap::new(),
            checks: vec![CheckReport {
                id: "k_isotropy".into(),
                pass: true,
                value: 0.0,
                threshold: 1e-8,
            }],
            pass: true,
            wall_time_ms: Some(12),
        };
        let json = report.to_json_pretty();
        let back: RunReport = serde_json::from_str(&json).expect("deserializes");
        assert_eq!(back.scenario, "s1");
        assert_eq!(back.points.len(), 1);
        assert!(back.pass);
        // Wall time is not serialized, so it does not survive the round trip.
        assert_eq!(back.wall_time_ms, None);
        assert_eq!(json, back.to_json_pretty());
    }
}
