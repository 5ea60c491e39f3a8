//! End-to-end orchestration: tracking and localization on the calling
//! thread, keyframe-gated training on the worker pool, then meshing and
//! evaluation.

mod ablation;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{generate_synthetic_scene, load_sequence, perturb_pose, Frame, GtObject, SceneBundle, SceneConfig};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Vec3};
use crate::mesh::{
    align_similarity, eval_metrics, extract_mesh, read_obj, sample_surface, to_world, write_obj, IsoConfig, MeshFrame,
    MetricsReport, TriangleBvh, TriangleMesh,
};
use crate::nerf::{HashGridModel, ModelConfig};
use crate::objslam::{write_landmarks_json, LandmarkSummary, ObjSlamConfig, ObjectMap};
use crate::render::DepthIndex;
use crate::train::{should_update_keyframes, write_train_logs, LossReport, ObjectStats, TrainConfig, TrainerPool, TrainingSnapshot};

pub use ablation::{run_ablation, AblationRow, AblationTable, ConvergenceCurve, SweepSpec};
pub use report::{emit_report, render_markdown, ObjectReport, RunReport, StageTimes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Path { path: PathBuf },
    Synthetic { scene: SceneConfig },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            scene: SceneConfig::default(),
        }
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<SceneBundle> {
        match self {
            DatasetSource::Path { path } => load_sequence(path),
            DatasetSource::Synthetic { scene } => generate_synthetic_scene(scene),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshSettings {
    /// Marching-cubes lattice points per axis.
    pub resolution: usize,
    pub iso: IsoConfig,
    pub samples_per_mesh: usize,
    /// Completion-ratio thresholds, meters.
    pub thresholds_m: Vec<f64>,
    /// Completion-ratio thresholds as fractions of the object diameter.
    pub relative_thresholds: Vec<f64>,
    /// Similarity-align each reconstruction to its ground truth before scoring.
    pub align: bool,
    pub eval_seed: u64,
}

impl Default for MeshSettings {
    fn default() -> Self {
        Self {
            resolution: 64,
            iso: IsoConfig::OccupancyHalf,
            samples_per_mesh: 10_000,
            thresholds_m: vec![0.004, 0.01],
            relative_thresholds: vec![0.1],
            align: false,
            eval_seed: 7,
        }
    }
}

/// Perturbation applied to camera poses after loading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseNoise {
    pub translation_m: f64,
    pub rotation_deg: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dataset: DatasetSource,
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub objslam: ObjSlamConfig,
    pub mesh: MeshSettings,
    pub output_dir: Option<PathBuf>,
    /// Online meshes wait for the object's queue to drain, so they do not
    /// depend on thread timing.
    pub deterministic: bool,
    pub pose_noise: PoseNoise,
    /// Extract meshes every K frames while tracking.
    pub online_mesh_every: Option<usize>,
    /// Write `landmarks.json` after each keyframe.
    pub dump_landmarks: bool,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        self.objslam.validate()?;
        if self.mesh.resolution < 8 {
            return Err(Error::Config("mesh resolution must be >= 8".into()));
        }
        if self.mesh.samples_per_mesh < 1 {
            return Err(Error::Config("samples_per_mesh must be >= 1".into()));
        }
        if self.online_mesh_every == Some(0) {
            return Err(Error::Config("online_mesh_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    /// World-frame reconstructions, one per trained object.
    pub meshes: Vec<TriangleMesh>,
    pub logs: BTreeMap<u32, Vec<(LossReport, f64)>>,
    pub landmarks: Vec<LandmarkSummary>,
    /// Number of meshes extracted while tracking.
    pub online_meshes: usize,
}

pub(crate) fn load_bundle(config: &PipelineConfig) -> Result<SceneBundle> {
    let mut bundle = config.dataset.load()?;
    let n = config.pose_noise;
    if n.translation_m > 0.0 || n.rotation_deg > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
        for f in &mut bundle.frames {
            f.pose = perturb_pose(&f.pose, n.translation_m, n.rotation_deg, &mut rng);
        }
    }
    Ok(bundle)
}

/// Frame-by-frame association and localization.
pub(crate) struct Tracker {
    pub map: ObjectMap,
    pub frames: Vec<Arc<Frame>>,
    pub depth: Vec<Arc<DepthIndex>>,
    pub intrinsics: CameraIntrinsics,
    update_angle_deg: f64,
    pub association_ms: f64,
    pub localization_ms: f64,
}

impl Tracker {
    pub fn new(bundle: SceneBundle, objslam: ObjSlamConfig, update_angle_deg: f64) -> Self {
        let depth = bundle.frames.iter().map(|f| Arc::new(DepthIndex::new(f))).collect();
        Self {
            map: ObjectMap::new(objslam),
            frames: bundle.frames.into_iter().map(Arc::new).collect(),
            depth,
            intrinsics: bundle.intrinsics,
            update_angle_deg,
            association_ms: 0.0,
            localization_ms: 0.0,
        }
    }

    /// Processes frame `index`; returns the landmarks whose training data
    /// changed (new keyframe or merge) and the merges performed.
    pub fn step(&mut self, index: usize) -> Result<(Vec<u32>, Vec<crate::objslam::Merge>)> {
        let frame = self.frames[index].clone();
        let t = Instant::now();
        let update = self.map.process_frame(&frame, &self.intrinsics);
        self.association_ms += t.elapsed().as_secs_f64() * 1e3;

        let t = Instant::now();
        let center = frame.pose.center();
        let mut accepted = Vec::new();
        for &(_, id) in &update.assignments {
            let Some(lm) = self.map.landmark(id) else { continue };
            if lm.points.is_empty() || !should_update_keyframes(lm, &center, self.update_angle_deg) {
                continue;
            }
            self.map.accept_keyframe(id, &frame, &self.frames[..=index], &self.intrinsics)?;
            accepted.push(id);
        }
        let merges = self.map.merge_duplicates();
        accepted.retain(|id| merges.iter().all(|m| m.absorbed != *id));
        // A merge hands the survivor new keyframes, which counts as new training data.
        for m in &merges {
            let kept = self.map.landmark(m.kept).is_some_and(|l| !l.keyframes.is_empty());
            if kept && !accepted.contains(&m.kept) && merges.iter().all(|o| o.absorbed != m.kept) {
                accepted.push(m.kept);
            }
        }
        self.localization_ms += t.elapsed().as_secs_f64() * 1e3;
        Ok((accepted, merges))
    }

    pub fn snapshot(&self, id: u32) -> Result<TrainingSnapshot> {
        let lm = self.map.landmark(id).ok_or(Error::UnknownObject(id))?;
        TrainingSnapshot::from_landmark(lm, &self.frames, &self.depth, &self.intrinsics)
    }
}

fn gt_diameter(gt: &GtObject) -> f64 {
    let b = gt.mesh.bounds();
    (b.max - b.min).norm()
}

/// Greedy one-to-one matching of reconstructions to ground-truth objects by
/// center distance, within the larger of the two box radii.
fn match_ground_truth(centers: &[(u32, Vec3, f64)], gts: &[GtObject]) -> BTreeMap<u32, usize> {
    let mut pairs = Vec::new();
    for (id, c, r) in centers {
        for (gi, g) in gts.iter().enumerate() {
            let d = (g.pose.translation - c).norm();
            if d <= r.max(g.half_extents.norm()) {
                pairs.push((d, *id, gi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = BTreeMap::new();
    let mut used = Vec::new();
    for (_, id, gi) in pairs {
        if !out.contains_key(&id) && !used.contains(&gi) {
            out.insert(id, gi);
            used.push(gi);
        }
    }
    out
}

/// Scores one world-frame reconstruction against its ground truth.
pub fn evaluate_object(pred: &TriangleMesh, gt: &GtObject, settings: &MeshSettings) -> Result<MetricsReport> {
    let gt_world = to_world(&gt.mesh, &gt.pose)?;
    let diameter = gt_diameter(gt);
    let mut thresholds = settings.thresholds_m.clone();
    thresholds.extend(settings.relative_thresholds.iter().map(|r| r * diameter));
    let seed = settings.eval_seed ^ gt.id as u64;
    let pred = if settings.align {
        let bvh = TriangleBvh::new(&gt_world);
        let src = sample_surface(pred, 2000, &mut ChaCha8Rng::seed_from_u64(seed));
        let dst: Vec<Vec3> = src.iter().filter_map(|p| bvh.closest_point(p).map(|(q, _)| q)).collect();
        if dst.len() == src.len() && src.len() >= 3 {
            let s = align_similarity(&src, &dst)?;
            pred.map_vertices(|v| s.apply(v))
        } else {
            pred.clone()
        }
    } else {
        pred.clone()
    };
    eval_metrics(&pred, &gt_world, &thresholds, settings.samples_per_mesh, seed)
}

/// Score of one predicted mesh in a standalone evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshEvaluation {
    pub object_id: u32,
    pub gt_object_id: Option<u32>,
    pub gt_diameter_m: Option<f64>,
    pub metrics: Option<MetricsReport>,
}

/// Matches world-frame meshes to ground truth by bounding-box center and
/// scores each match.
pub fn evaluate_meshes(meshes: &[TriangleMesh], gts: &[GtObject], settings: &MeshSettings) -> Result<Vec<MeshEvaluation>> {
    let centers: Vec<(u32, Vec3, f64)> = meshes
        .iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let b = m.bounds();
            (m.object_id, (b.min + b.max) / 2.0, (b.max - b.min).norm() / 2.0)
        })
        .collect();
    let matches = match_ground_truth(&centers, gts);
    meshes
        .iter()
        .map(|m| {
            let gt = matches.get(&m.object_id).map(|&gi| &gts[gi]);
            Ok(MeshEvaluation {
                object_id: m.object_id,
                gt_object_id: gt.map(|g| g.id),
                gt_diameter_m: gt.map(gt_diameter),
                metrics: gt.map(|g| evaluate_object(m, g, settings)).transpose()?,
            })
        })
        .collect()
}

/// Reads `<id>.obj` world-frame meshes from `dir`, or from `dir/meshes` when
/// that exists.
pub fn read_mesh_dir(dir: &Path) -> Result<Vec<TriangleMesh>> {
    let sub = dir.join("meshes");
    let dir = if sub.is_dir() { sub } else { dir.to_path_buf() };
    let mut found = Vec::new();
    for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().is_some_and(|e| e == "obj") {
            if let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u32>().ok()) {
                found.push((id, path));
            }
        }
    }
    found.sort();
    found.into_iter().map(|(id, p)| read_obj(&p, MeshFrame::World, id)).collect()
}

fn extract_world(model: &HashGridModel, tracker: &Tracker, id: u32, settings: &MeshSettings) -> Result<Option<TriangleMesh>> {
    let lm = tracker.map.landmark(id).ok_or(Error::UnknownObject(id))?;
    let mesh = extract_mesh(model, settings.resolution, &lm.half_extents, settings.iso, id);
    if mesh.is_empty() {
        return Ok(None);
    }
    to_world(&mesh, &lm.pose).map(Some)
}

/// Runs the whole system on the configured dataset.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunOutput> {
    config.validate()?;
    let start = Instant::now();
    let mut stages = StageTimes::default();

    let t = Instant::now();
    let bundle = load_bundle(config)?;
    let gt_objects = bundle.gt_objects.clone();
    let frame_count = bundle.frames.len();
    let mut tracker = Tracker::new(bundle, config.objslam, config.train.update_angle_deg);
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    stages.load_ms = t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let pool = TrainerPool::new(config.train, config.model.clone())?;
    stages.training_ms += t.elapsed().as_secs_f64() * 1e3;

    let mut online_meshes = 0;
    let tracked = (|| -> Result<()> {
        for index in 0..frame_count {
            let (accepted, merges) = tracker.step(index)?;
            let t = Instant::now();
            for m in &merges {
                match pool.remove(m.absorbed) {
                    Ok(()) | Err(Error::UnknownObject(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            for id in &accepted {
                pool.submit(tracker.snapshot(*id)?)?;
            }
            stages.training_ms += t.elapsed().as_secs_f64() * 1e3;

            if config.dump_landmarks && !accepted.is_empty() {
                if let Some(dir) = &config.output_dir {
                    let t = Instant::now();
                    write_landmarks_json(&dir.join("landmarks.json"), tracker.map.landmarks())?;
                    stages.localization_ms += t.elapsed().as_secs_f64() * 1e3;
                }
            }
            if let Some(k) = config.online_mesh_every {
                if (index + 1) % k == 0 {
                    let t = Instant::now();
                    online_meshes += online_extract(&pool, &tracker, config, index)?;
                    stages.meshing_ms += t.elapsed().as_secs_f64() * 1e3;
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = tracked {
        if let Some(dir) = &config.output_dir {
            let _ = write_train_logs(&dir.join("train_log"), &pool.logs());
            let _ = write_landmarks_json(&dir.join("landmarks.json"), tracker.map.landmarks());
        }
        return Err(e);
    }

    let t = Instant::now();
    pool.drain();
    let stats: BTreeMap<u32, ObjectStats> = pool.stats().into_iter().map(|s| (s.object_id, s)).collect();
    let logs = pool.logs();
    let models = pool.into_models();
    stages.training_ms += t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let mut meshes = Vec::new();
    for (id, obj) in &models {
        if obj.iterations == 0 || tracker.map.landmark(*id).is_none() {
            continue;
        }
        if let Some(m) = extract_world(&obj.model, &tracker, *id, &config.mesh)? {
            meshes.push(m);
        }
    }
    stages.meshing_ms += t.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let centers: Vec<(u32, Vec3, f64)> = tracker
        .map
        .landmarks()
        .iter()
        .filter(|l| !l.keyframes.is_empty())
        .map(|l| (l.id, l.pose.translation, l.half_extents.norm()))
        .collect();
    let matches = match_ground_truth(&centers, &gt_objects);
    let mut objects = Vec::new();
    for lm in tracker.map.landmarks() {
        let s = stats.get(&lm.id);
        if s.is_none_or(|s| s.iterations == 0) {
            continue;
        }
        let mesh = meshes.iter().find(|m| m.object_id == lm.id);
        let gt = matches.get(&lm.id).map(|&gi| &gt_objects[gi]);
        let metrics = match (mesh, gt) {
            (Some(m), Some(g)) => Some(evaluate_object(m, g, &config.mesh)?),
            _ => None,
        };
        objects.push(ObjectReport {
            object_id: lm.id,
            class_id: lm.class_id,
            gt_object_id: gt.map(|g| g.id),
            gt_diameter_m: gt.map(gt_diameter),
            translation: lm.pose.translation.into(),
            yaw: lm.pose.yaw,
            half_extents: lm.half_extents.into(),
            point_count: lm.points.len(),
            keyframes: lm.keyframes.len(),
            updates: s.map_or(0, |s| s.updates),
            iterations: s.map_or(0, |s| s.iterations),
            mean_ms_per_iteration: s.map_or(0.0, |s| s.mean_ms_per_iteration),
            mesh_vertices: mesh.map_or(0, |m| m.vertices.len()),
            mesh_faces: mesh.map_or(0, |m| m.faces.len()),
            metrics,
        });
    }
    stages.evaluation_ms = t.elapsed().as_secs_f64() * 1e3;
    stages.association_ms = tracker.association_ms;
    stages.localization_ms += tracker.localization_ms;

    let report = RunReport {
        frames: frame_count,
        landmarks: tracker.map.landmarks().len(),
        objects,
        stages,
        total_ms: start.elapsed().as_secs_f64() * 1e3,
        config: config.clone(),
    };
    let output = RunOutput {
        report,
        meshes,
        logs,
        landmarks: tracker.map.landmarks().iter().map(|l| l.summary()).collect(),
        online_meshes,
    };
    if let Some(dir) = &config.output_dir {
        emit_report(&output, dir)?;
    }
    Ok(output)
}

fn online_extract(pool: &TrainerPool, tracker: &Tracker, config: &PipelineConfig, index: usize) -> Result<usize> {
    let trained: Vec<u32> = pool.stats().into_iter().filter(|s| s.iterations > 0).map(|s| s.object_id).collect();
    let mut count = 0;
    for id in trained {
        let model = if config.deterministic {
            pool.wait_idle_snapshot(id)
        } else {
            pool.stop_and_snapshot(id)
        };
        let Ok(model) = model else { continue };
        if let Some(mesh) = extract_world(&model, tracker, id, &config.mesh)? {
            if let Some(dir) = &config.output_dir {
                let sub = dir.join("online").join(format!("{index:06}"));
                std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
                write_obj(&sub.join(format!("{id}.obj")), &mesh)?;
            }
            count += 1;
        }
    }
    Ok(count)
}
