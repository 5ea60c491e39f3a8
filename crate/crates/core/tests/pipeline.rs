use romap_core::dataset::{SceneConfig, Trajectory};
use romap_core::nerf::DensityActivation;
use romap_core::pipeline::{
    emit_report, render_markdown, run_ablation, run_pipeline, AblationTable, DatasetSource, PipelineConfig, RunReport,
    SweepSpec,
};

fn small_config(objects: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.dataset = DatasetSource::Synthetic {
        scene: SceneConfig {
            seed: 4,
            object_count: objects,
            layout_radius: if objects == 1 { 0.0 } else { 0.22 },
            image_width: 128,
            image_height: 96,
            trajectory: Trajectory::Orbit {
                frames: 72,
                radius: 0.9,
                height: 0.55,
                target: [0.0, -0.06, 0.0],
                start_deg: 0.0,
                sweep_deg: 360.0,
            },
            ..Default::default()
        },
    };
    cfg.train.rays_per_iteration = 256;
    cfg.train.samples_per_ray = 16;
    cfg.train.iterations_per_update = 10;
    cfg.train.max_iterations_per_object = Some(40);
    cfg.train.worker_count = 2;
    cfg.model.table_size_log2 = 12;
    cfg.model.density_activation = DensityActivation::Exp;
    cfg.mesh.resolution = 24;
    cfg.mesh.samples_per_mesh = 1000;
    cfg.deterministic = true;
    cfg
}

#[test]
fn three_objects_three_meshes_and_consistent_timings() {
    let out = run_pipeline(&small_config(3)).unwrap();
    assert_eq!(out.meshes.len(), 3);
    assert_eq!(out.report.objects.len(), 3);
    for o in &out.report.objects {
        assert!(o.gt_object_id.is_some());
        assert!(o.metrics.is_some());
        assert!(o.iterations > 0 && o.mean_ms_per_iteration > 0.0);
    }
    let s = out.report.stages;
    for (_, ms) in s.rows() {
        assert!(ms >= 0.0);
    }
    let total = out.report.total_ms;
    assert!((s.sum() - total).abs() <= 0.1 * total, "stages {} vs total {total}", s.sum());
}

#[test]
fn deterministic_runs_are_bit_identical() {
    let cfg = small_config(2);
    let a = run_pipeline(&cfg).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    assert_eq!(a.meshes, b.meshes);
    let metrics = |r: &RunReport| r.objects.iter().map(|o| (o.object_id, o.metrics.clone(), o.iterations)).collect::<Vec<_>>();
    assert_eq!(metrics(&a.report), metrics(&b.report));

    let dir = tempfile::tempdir().unwrap();
    emit_report(&a, &dir.path().join("a")).unwrap();
    emit_report(&b, &dir.path().join("b")).unwrap();
    for m in &a.meshes {
        let name = format!("meshes/{}.obj", m.object_id);
        assert_eq!(
            std::fs::read(dir.path().join("a").join(&name)).unwrap(),
            std::fs::read(dir.path().join("b").join(&name)).unwrap()
        );
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let mut one = small_config(2);
    one.train.worker_count = 1;
    let mut four = one.clone();
    four.train.worker_count = 4;
    assert_eq!(run_pipeline(&one).unwrap().meshes, run_pipeline(&four).unwrap().meshes);
}

#[test]
fn zero_workers_still_processes_every_frame() {
    let mut cfg = small_config(2);
    cfg.train.worker_count = 0;
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = Some(dir.path().to_path_buf());
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.report.frames, 72);
    assert!(out.report.landmarks >= 2);
    assert!(out.meshes.is_empty());
    assert!(out.report.objects.is_empty());
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("| object |"));
    let parsed = RunReport::from_json(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(parsed, out.report);
}

#[test]
fn report_files_round_trip() {
    let mut cfg = small_config(1);
    let dir = tempfile::tempdir().unwrap();
    cfg.output_dir = Some(dir.path().to_path_buf());
    cfg.dump_landmarks = true;
    cfg.online_mesh_every = Some(24);
    let out = run_pipeline(&cfg).unwrap();
    assert!(out.online_meshes > 0);
    assert!(dir.path().join("online").is_dir());

    let parsed = RunReport::from_json(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(parsed, out.report);

    let md = render_markdown(&out.report);
    let table: Vec<&str> = md
        .lines()
        .skip_while(|l| !l.starts_with("| object"))
        .take_while(|l| l.starts_with('|'))
        .filter(|l| !l.starts_with("|---"))
        .collect();
    assert_eq!(table.len(), out.report.objects.len() + 1);

    for m in &out.meshes {
        assert!(dir.path().join(format!("meshes/{}.obj", m.object_id)).is_file());
        let log = std::fs::read_to_string(dir.path().join(format!("train_log/{}.csv", m.object_id))).unwrap();
        assert!(log.starts_with("iteration,L_rgb,L_depth,L_rr,L_density,L_total,wall_ms"));
        assert_eq!(log.lines().count() as u64, out.report.objects[0].iterations + 1);
    }
    assert!(dir.path().join("scene.obj").is_file());
    assert!(dir.path().join("landmarks.json").is_file());
}

#[test]
fn config_toml_round_trip() {
    let cfg = small_config(2);
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(PipelineConfig::from_toml_str(&text).unwrap(), cfg);
    assert!(PipelineConfig::from_toml_str("[train]\nlambda_depth = -1.0\n").is_err());
    assert!(PipelineConfig::from_toml_str("online_mesh_every = 0\n").is_err());
}

#[test]
fn single_value_sweep_matches_direct_run() {
    let cfg = small_config(1);
    let direct = run_pipeline(&cfg).unwrap().report;
    let spec: SweepSpec = format!("table_size_log2={}", cfg.model.table_size_log2).parse().unwrap();
    let AblationTable::ModelSize(rows) = run_ablation(&cfg, &spec).unwrap() else {
        panic!("expected a model-size table")
    };
    assert_eq!(rows.len(), 1);
    let swept = rows[0].report.as_ref().unwrap();
    let key = |r: &RunReport| r.objects.iter().map(|o| (o.object_id, o.iterations, o.metrics.clone(), o.mesh_faces)).collect::<Vec<_>>();
    assert_eq!(key(swept), key(&direct));
    assert_eq!(swept.config, direct.config);
}

#[test]
fn failing_sweep_row_is_recorded() {
    let mut cfg = small_config(1);
    cfg.dataset = DatasetSource::Path {
        path: "/nonexistent/sequence".into(),
    };
    let spec: SweepSpec = "hidden_layers=1,2".parse().unwrap();
    let AblationTable::ModelSize(rows) = run_ablation(&cfg, &spec).unwrap() else {
        panic!("expected a model-size table")
    };
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.error.is_some() && r.report.is_none()));
}

#[test]
fn density_sweep_emits_two_curves() {
    let cfg = small_config(1);
    let spec: SweepSpec = "lambda_density=0,0.01;iterations=15".parse().unwrap();
    let AblationTable::DensityLoss(curves) = run_ablation(&cfg, &spec).unwrap() else {
        panic!("expected density curves")
    };
    assert_eq!(curves.len(), 2);
    assert_eq!(curves[0].lambda_density, 0.0);
    assert_eq!(curves[1].lambda_density, 0.01);
    for c in &curves {
        assert_eq!(c.mean_background_sigma.len(), 15);
        assert!(c.error.is_none());
    }
}

#[test]
fn missing_dataset_is_an_error() {
    let mut cfg = small_config(1);
    cfg.dataset = DatasetSource::Path {
        path: "/nonexistent/sequence".into(),
    };
    let err = run_pipeline(&cfg).unwrap_err().to_string();
    assert!(err.contains("/nonexistent/sequence"), "{err}");
}
