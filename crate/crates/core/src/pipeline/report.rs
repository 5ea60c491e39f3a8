use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineConfig, RunOutput};
use crate::error::{Error, Result};
use crate::mesh::{write_obj, write_scene_obj, MetricsReport};
use crate::train::write_train_logs;

/// Wall time per stage, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimes {
    pub load_ms: f64,
    pub association_ms: f64,
    pub localization_ms: f64,
    pub training_ms: f64,
    pub meshing_ms: f64,
    pub evaluation_ms: f64,
}

impl StageTimes {
    pub fn sum(&self) -> f64 {
        self.load_ms + self.association_ms + self.localization_ms + self.training_ms + self.meshing_ms + self.evaluation_ms
    }

    pub fn rows(&self) -> [(&'static str, f64); 6] {
        [
            ("load", self.load_ms),
            ("association", self.association_ms),
            ("localization", self.localization_ms),
            ("training", self.training_ms),
            ("meshing", self.meshing_ms),
            ("evaluation", self.evaluation_ms),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub object_id: u32,
    pub class_id: u32,
    pub gt_object_id: Option<u32>,
    pub gt_diameter_m: Option<f64>,
    pub translation: [f64; 3],
    pub yaw: f64,
    pub half_extents: [f64; 3],
    pub point_count: usize,
    pub keyframes: usize,
    pub updates: usize,
    pub iterations: u64,
    pub mean_ms_per_iteration: f64,
    pub mesh_vertices: usize,
    pub mesh_faces: usize,
    pub metrics: Option<MetricsReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub frames: usize,
    pub landmarks: usize,
    pub objects: Vec<ObjectReport>,
    pub stages: StageTimes,
    pub total_ms: f64,
    pub config: PipelineConfig,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Per-object metrics table followed by the stage timing table.
pub fn render_markdown(report: &RunReport) -> String {
    let thresholds: Vec<f64> = report
        .objects
        .iter()
        .find_map(|o| o.metrics.as_ref())
        .map(|m| m.completion_ratio.iter().map(|c| c.threshold_cm).collect())
        .unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(s, "# Reconstruction report\n");
    let meshed = report.objects.iter().filter(|o| o.mesh_faces > 0).count();
    let _ = writeln!(s, "{} frames, {} landmarks, {} reconstructed objects.\n", report.frames, report.landmarks, meshed);
    let _ = write!(s, "| object | class | gt | keyframes | iterations | ms/iter | Acc [cm] | Comp [cm] |");
    for t in &thresholds {
        let _ = write!(s, " Ratio<{t:.2}cm [%] |");
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "|{}", "---|".repeat(8 + thresholds.len()));
    for o in &report.objects {
        let m = o.metrics.as_ref();
        let _ = write!(
            s,
            "| {} | {} | {} | {} | {} | {:.2} | {} | {} |",
            o.object_id,
            o.class_id,
            o.gt_object_id.map_or("-".to_string(), |g| g.to_string()),
            o.keyframes,
            o.iterations,
            o.mean_ms_per_iteration,
            fmt_opt(m.map(|m| m.accuracy_cm)),
            fmt_opt(m.map(|m| m.completion_cm)),
        );
        for i in 0..thresholds.len() {
            let _ = write!(s, " {} |", fmt_opt(m.and_then(|m| m.completion_ratio.get(i)).map(|c| c.percent)));
        }
        let _ = writeln!(s);
    }
    let _ = writeln!(s, "\n## Stage timings\n");
    let _ = writeln!(s, "| stage | ms |");
    let _ = writeln!(s, "|---|---|");
    for (name, ms) in report.stages.rows() {
        let _ = writeln!(s, "| {name} | {ms:.1} |");
    }
    let _ = writeln!(s, "| total | {:.1} |", report.total_ms);
    s
}

/// Writes `report.json`, `report.md`, per-object and scene meshes, and the
/// training logs under `dir`.
pub fn emit_report(output: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    std::fs::write(&json, output.report.to_json()?).map_err(|e| Error::io(&json, e))?;
    let md = dir.join("report.md");
    std::fs::write(&md, render_markdown(&output.report)).map_err(|e| Error::io(&md, e))?;
    let meshes = dir.join("meshes");
    std::fs::create_dir_all(&meshes).map_err(|e| Error::io(&meshes, e))?;
    for m in &output.meshes {
        write_obj(&meshes.join(format!("{}.obj", m.object_id)), m)?;
    }
    write_scene_obj(&dir.join("scene.obj"), &output.meshes)?;
    write_train_logs(&dir.join("train_log"), &output.logs)
}
