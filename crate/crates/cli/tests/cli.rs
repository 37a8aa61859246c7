use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rhtp"))
}

fn demo_scene() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes/demo4.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A coarse config so every test runs in well under a second.
fn write_config(dir: &Path, scenes: &str, truths: usize, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{"scenes": {scenes}, "cell_size": 0.05, "mc_samples": 300, "truth_samples": {truths},
            "arm": {{"manip_r_min": 0.3, "manip_r_max": 1.1, "obs_r_min": 0.0, "obs_r_max": 1.45}}{extra}}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn files(pattern: &Path) -> String {
    format!(r#"{{"files": {}}}"#, serde_json::to_string(s(pattern)).unwrap())
}

#[test]
fn plan_writes_a_structurally_valid_plan() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"files": "unused"}"#, 3, "");
    let out = run(&["--config", s(&cfg), "--out", s(dir.path()), "plan", s(&demo_scene())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("kappa=") && stdout.contains("cost=") && stdout.contains("planning_time="));

    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("demo4.plan.json")).unwrap()).unwrap();
    let kappa = plan["kappa"].as_u64().unwrap();
    assert!((1..=4).contains(&kappa));
    let seq: Vec<u64> = plan["sequence"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let regions: u64 = stdout.split("regions=").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert_eq!(seq.first(), Some(&0));
    assert_eq!(seq.last(), Some(&(regions + 1)));
    assert_eq!(seq.len() as u64, kappa + 2);
    let mut served: Vec<u64> = plan["stops"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|st| st["targets"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
        .collect();
    served.sort_unstable();
    assert_eq!(served, vec![0, 1, 2, 3]);
}

#[test]
fn missing_scene_exits_2_and_names_the_path() {
    let out = run(&["plan", "no/such/scene.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/scene.json"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["plan"]).status.code(), Some(2));
}

#[test]
fn empty_scene_list_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &files(&dir.path().join("none/*.json")), 3, "");
    let out = run(&["--config", s(&cfg), "--out", s(dir.path()), "experiment"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"gama": 1.0}"#).unwrap();
    let out = run(&["--config", s(&cfg), "plan", s(&demo_scene())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gama"));

    std::fs::write(&cfg, r#"{"delta": 1.5}"#).unwrap();
    let out = run(&["--config", s(&cfg), "plan", s(&demo_scene())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("delta"));
}

#[test]
fn experiment_is_byte_identical_across_runs_and_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let scenes = r#"{"generate": {"densities": [1.0, 3.0], "radii": [0.15], "scenes_per_setting": 2}}"#;
    let cfg = write_config(dir.path(), scenes, 1, "");
    let mut outputs = Vec::new();
    for (k, jobs) in ["1", "1", "2"].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{k}"));
        let out = run(&["--config", s(&cfg), "--out", s(&out_dir), "--jobs", jobs, "experiment"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(out_dir.join("results.csv")).unwrap());
        for metric in ["energy", "path_length", "stops", "replans"] {
            assert!(out_dir.join(format!("charts/density_{metric}.svg")).exists());
        }
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("scene_id,algorithm,density,radius,gamma,delta,truth_seed,path_length_m,stops,energy,replans,completed\n"));
    // 4 scenes, 2 algorithms, 1 truth each.
    assert_eq!(text.lines().count(), 1 + 8);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &files(&demo_scene()), 3, r#", "seed": 1"#);
    let mut csvs = Vec::new();
    for seed in ["1", "2"] {
        let out_dir = dir.path().join(seed);
        let out = run(&["--config", s(&cfg), "--out", s(&out_dir), "--seed", seed, "experiment"]);
        assert!(out.status.success());
        csvs.push(std::fs::read_to_string(out_dir.join("results.csv")).unwrap());
    }
    let seeds = |t: &str| -> Vec<String> { t.lines().skip(1).map(|l| l.split(',').nth(6).unwrap().to_string()).collect() };
    assert_ne!(seeds(&csvs[0]), seeds(&csvs[1]));
}

fn read_grid(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn inspect_label_map_covers_the_union_of_supports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"files": "unused"}"#, 3, "");
    let out = run(&["--config", s(&cfg), "--out", s(dir.path()), "inspect", s(&demo_scene())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let d = dir.path().join("demo4_inspect");
    let fields: Vec<Vec<Vec<f64>>> = (0..4).map(|i| read_grid(&d.join(format!("field_{i}.csv")))).collect();
    let labels = read_grid(&d.join("labels.csv"));
    let mut union = 0;
    let mut labeled = 0;
    for (y, row) in labels.iter().enumerate() {
        for (x, &l) in row.iter().enumerate() {
            let any = fields.iter().any(|f| f[y][x] > 0.0);
            union += any as usize;
            labeled += (l > 0.0) as usize;
            assert_eq!(any, l > 0.0);
        }
    }
    assert_eq!(union, labeled);
    let header: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("ptrm.json")).unwrap()).unwrap();
    assert_eq!(header["labeled_cells"].as_u64().unwrap() as usize, labeled);
    assert!(std::fs::read(d.join("field_0.pgm")).unwrap().starts_with(b"P5\n"));
}

#[test]
fn inspect_collapsed_scene_gives_binary_fields() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("collapsed.json");
    std::fs::write(
        &scene,
        r#"{"workspace": {"min": [0, 0], "max": [1, 1]}, "start": [0.5, 0], "goal": [0.5, 1],
            "targets": [{"id": 3, "center": [0.5, 0.5], "radius": 0.1,
                         "belief": {"kind": "collapsed", "point": [0.52, 0.49]}}]}"#,
    )
    .unwrap();
    let cfg = write_config(dir.path(), r#"{"files": "unused"}"#, 3, "");
    let out = run(&["--config", s(&cfg), "--out", s(dir.path()), "inspect", s(&scene)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let field = read_grid(&dir.path().join("collapsed_inspect/field_3.csv"));
    assert!(field.iter().flatten().all(|&v| v == 0.0 || v == 1.0));
    assert!(field.iter().flatten().any(|&v| v == 1.0));
}
