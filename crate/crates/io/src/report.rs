//! Metrics reports. Metric keys follow the table columns: `RRA@5`, `RTA@15`,
//! `delta@0.5m`. Aggregates must be recomputable from the per-pair records.

use std::path::Path;

use cvforge_core::eval::{accuracy_at, PoseErrorRecord};
use cvforge_core::ImageId;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{IoError, Result};
use crate::fsutil::{read_json, write_json};

pub const TOOL_NAME: &str = "cvforge";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    Pose,
    Pointmap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosePairRecord {
    pub pair: [u32; 2],
    pub rra_deg: f64,
    /// `null` when either translation is negligible.
    pub rta_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointmapPairRecord {
    pub pair: String,
    pub joint_valid: usize,
    /// Pixels within each threshold, same order as the thresholds.
    pub within: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tool: String,
    pub tool_version: String,
    pub kind: ReportKind,
    pub config: Value,
    pub thresholds: Vec<f64>,
    pub metrics: Map<String, Value>,
    pub counts: Map<String, Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pose_records: Vec<PosePairRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pointmap_records: Vec<PointmapPairRecord>,
}

pub fn angle_key(metric: &str, t: f64) -> String {
    format!("{metric}@{t}")
}

pub fn delta_key(t: f64) -> String {
    format!("delta@{t}m")
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

fn pose_metrics(records: &[PosePairRecord], thresholds: &[f64]) -> cvforge_core::Result<Map<String, Value>> {
    let rra: Vec<Option<f64>> = records.iter().map(|r| Some(r.rra_deg)).collect();
    let rta: Vec<Option<f64>> = records.iter().map(|r| r.rta_deg).collect();
    let (a, b) = (accuracy_at(&rra, thresholds)?, accuracy_at(&rta, thresholds)?);
    let mut m = Map::new();
    for (t, v) in thresholds.iter().zip(&a.values) {
        m.insert(angle_key("RRA", *t), num(*v));
    }
    for (t, v) in thresholds.iter().zip(&b.values) {
        m.insert(angle_key("RTA", *t), num(*v));
    }
    Ok(m)
}

fn pointmap_metrics(records: &[PointmapPairRecord], thresholds: &[f64]) -> Map<String, Value> {
    let total: usize = records.iter().map(|r| r.joint_valid).sum();
    let mut m = Map::new();
    for (k, t) in thresholds.iter().enumerate() {
        let hit: usize = records.iter().map(|r| r.within[k]).sum();
        m.insert(delta_key(*t), num(hit as f64 / total as f64));
    }
    m
}

impl MetricsReport {
    pub fn pose(records: &[PoseErrorRecord], thresholds: &[f64], config: Value) -> cvforge_core::Result<Self> {
        let recs: Vec<PosePairRecord> = records
            .iter()
            .map(|r| PosePairRecord {
                pair: [r.pair.0 .0, r.pair.1 .0],
                rra_deg: r.rra_deg,
                rta_deg: r.rta_deg,
            })
            .collect();
        let mut counts = Map::new();
        counts.insert("pairs".into(), recs.len().into());
        counts.insert("undefined_rta".into(), recs.iter().filter(|r| r.rta_deg.is_none()).count().into());
        Ok(Self {
            tool: TOOL_NAME.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            kind: ReportKind::Pose,
            config,
            thresholds: thresholds.to_vec(),
            metrics: pose_metrics(&recs, thresholds)?,
            counts,
            pose_records: recs,
            pointmap_records: Vec::new(),
        })
    }

    /// `errors[k]` are the aligned pixel errors of pair `names[k]`.
    pub fn pointmap(names: &[String], errors: &[Vec<f64>], thresholds: &[f64], config: Value) -> cvforge_core::Result<Self> {
        let recs: Vec<PointmapPairRecord> = names
            .iter()
            .zip(errors)
            .map(|(n, e)| PointmapPairRecord {
                pair: n.clone(),
                joint_valid: e.len(),
                within: thresholds.iter().map(|t| e.iter().filter(|&&x| x <= *t).count()).collect(),
            })
            .collect();
        let total: usize = recs.iter().map(|r| r.joint_valid).sum();
        if total == 0 {
            return Err(cvforge_core::Error::Domain("no jointly valid pixels".into()));
        }
        let mut counts = Map::new();
        counts.insert("pairs".into(), recs.len().into());
        counts.insert("joint_valid_pixels".into(), total.into());
        Ok(Self {
            tool: TOOL_NAME.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            kind: ReportKind::Pointmap,
            config,
            thresholds: thresholds.to_vec(),
            metrics: pointmap_metrics(&recs, thresholds),
            counts,
            pose_records: Vec::new(),
            pointmap_records: recs,
        })
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).and_then(Value::as_f64)
    }

    pub fn pose_pairs(&self) -> Vec<(ImageId, ImageId)> {
        self.pose_records.iter().map(|r| (ImageId(r.pair[0]), ImageId(r.pair[1]))).collect()
    }

    /// Recomputes the aggregates from the records and compares exactly.
    pub fn check_consistency(&self, path: &Path) -> Result<()> {
        let expected = match self.kind {
            ReportKind::Pose => pose_metrics(&self.pose_records, &self.thresholds)
                .map_err(|e| IoError::schema(path, "pose_records", e.to_string()))?,
            ReportKind::Pointmap => {
                if self.pointmap_records.iter().any(|r| r.within.len() != self.thresholds.len()) {
                    return Err(IoError::schema(path, "pointmap_records", "one count per threshold required"));
                }
                pointmap_metrics(&self.pointmap_records, &self.thresholds)
            }
        };
        if expected != self.metrics {
            return Err(IoError::schema(path, "metrics", "aggregates disagree with the per-pair records"));
        }
        Ok(())
    }
}

pub fn write_report(path: &Path, r: &MetricsReport) -> Result<()> {
    write_json(path, r)
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let r: MetricsReport = read_json(path)?;
    if r.tool != TOOL_NAME {
        return Err(IoError::schema(path, "tool", format!("unexpected tool {:?}", r.tool)));
    }
    r.check_consistency(path)?;
    Ok(r)
}
