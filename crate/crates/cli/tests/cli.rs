use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use motorlink_cli::config::{load, Preset};

const BIN: &str = env!("CARGO_BIN_EXE_motorlink");

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/paper_robot.toml")
}

fn motorlink(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap()
}

fn metric(r: &serde_json::Value, name: &str) -> f64 {
    r["metrics"][name]["value"].as_f64().unwrap_or_else(|| panic!("metric {name} missing"))
}

/// Every file in a directory, sorted by name.
fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn lists_every_experiment() {
    let out = motorlink(&["list-experiments"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in [
        "cantilever-static",
        "cantilever-ac",
        "damping-calibration",
        "static-shape",
        "inchworm",
        "jump",
        "speed-sweep",
        "simulate",
    ] {
        assert!(text.contains(kind), "{kind} missing from\n{text}");
    }
}

#[test]
fn bundled_config_describes_the_five_actuator_robot() {
    let out = motorlink(&["validate", bundled().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = load(&bundled(), &[]).unwrap();
    assert_eq!(cfg.robot.preset, Some(Preset::FiveActuator));
    let setup = cfg.setup().unwrap();
    assert_eq!(setup.robot.actuators.len(), 5);
    for a in &setup.robot.actuators {
        assert_eq!(a.length, 0.100);
        assert_eq!(a.cross_section.width(), 0.020);
    }
    let patches = &setup.robot.friction_patches;
    assert_eq!(patches.len(), 2);
    assert_eq!((patches[0].start, patches[0].end), (0.0, 0.050));
    assert!((patches[1].start - 0.450).abs() < 1e-12 && patches[1].end == 0.5);
}

#[test]
fn invalid_config_names_the_key_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "[experiment]\nkind = \"cantilever-static\"\n[discretization]\nm = 0\n");
    let out = motorlink(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("discretization.m"));
    assert!(!out_dir.exists());

    let out = motorlink(&[
        "run",
        bundled().to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--override",
        "ground.stiffness=3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ground.stiffness"));
    assert!(!out_dir.exists());

    let out = motorlink(&["validate", tmp.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_has_its_own_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let cfg = write_config(
        tmp.path(),
        r#"
[experiment]
kind = "simulate"
anchor = "clamped"
[simulation]
duration = 0.1
[robot]
preset = "single_actuator"
[[drive.channels]]
kind = "sinusoid"
offset = 0.0
amplitude = 1e306
frequency = 5.0
"#,
    );
    let out = motorlink(&["run", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("smaller timestep"));
    assert!(!out_dir.exists());
}

#[test]
fn cantilever_static_reports_the_anchor_deflection() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[experiment]\nkind = \"cantilever-static\"\nvoltages = [-1000.0]\n");
    let out = motorlink(&["run", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&tmp.path().join("o"));
    let tip = metric(&r, "tip_deflection_m");
    assert!((tip + 0.020).abs() < 0.5e-3, "{tip}");
    assert_eq!(r["metrics"]["tip_deflection_m"]["unit"], "m");
    assert_eq!(r["tool"], "motorlink");
    assert_eq!(r["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(r["config"]["experiment"]["kind"], "cantilever-static");
    let shapes = fs::read_to_string(tmp.path().join("o/shapes.csv")).unwrap();
    assert_eq!(shapes.lines().next(), Some("time_s,node_index,x_m,y_m"));
    assert_eq!(shapes.lines().count(), 1 + 5);
}

#[test]
fn overrides_reach_the_config_echo() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[experiment]\nkind = \"cantilever-static\"\n");
    let o = tmp.path().join("o");
    let out = motorlink(&[
        "run",
        cfg.to_str().unwrap(),
        "--out",
        o.to_str().unwrap(),
        "--override",
        "discretization.m=5",
        "--override",
        "experiment.voltages=[-500.0, -1000.0]",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&o);
    assert_eq!(r["config"]["discretization"]["m"], 5);
    assert!(r["metrics"]["tip_deflection_m@-500V"].is_object());
    let shapes = fs::read_to_string(o.join("shapes.csv")).unwrap();
    assert_eq!(shapes.lines().count(), 1 + 2 * 7);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let o = tmp.path().join(name);
        let out = motorlink(&[
            "run",
            bundled().to_str().unwrap(),
            "--out",
            o.to_str().unwrap(),
            "--override",
            "experiment.cycles=2",
            "--override",
            "experiment.cycle_period=0.5",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        snapshot(&o)
    };
    let a = run("a");
    let b = run("b");
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["motion.csv", "report.json", "shapes.csv", "strides.csv"]);
    assert!(a == b, "outputs differ between identical runs");
    let motion = String::from_utf8(a[0].1.clone()).unwrap();
    assert_eq!(
        motion.lines().next(),
        Some("time_s,com_x_m,com_y_m,left_end_x_m,right_end_x_m")
    );
}

#[test]
fn parallel_sweep_matches_serial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, parallel: &str| {
        let cfg = write_config(
            tmp.path(),
            "[experiment]\nkind = \"speed-sweep\"\nfrequencies = [2.0, 5.0, 9.0]\ncycles_per_frequency = 3\n",
        );
        let o = tmp.path().join(name);
        let out = motorlink(&[
            "run",
            cfg.to_str().unwrap(),
            "--out",
            o.to_str().unwrap(),
            "--override",
            &format!("parallel={parallel}"),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        snapshot(&o)
    };
    let serial = run("serial", "false");
    let parallel = run("parallel", "true");
    assert!(serial == parallel, "parallel run changed the output");
    let speed = String::from_utf8(serial.iter().find(|f| f.0 == "speed.csv").unwrap().1.clone()).unwrap();
    let freqs: Vec<&str> = speed.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(freqs, ["2.0", "5.0", "9.0"]);
}

#[test]
fn jump_reports_clearance_and_period_doubling() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[experiment]\nkind = \"jump\"\nfrequency = 14.0\n");
    let o = tmp.path().join("o");
    let out = motorlink(&["run", cfg.to_str().unwrap(), "--out", o.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(o.join("jump.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("time_s,clearance_m"), "{header}");
    let r = report(&o);
    let p = metric(&r, "dominant_period_s");
    assert!((p - 2.0 / 14.0).abs() < 0.05 * 2.0 / 14.0, "dominant period {p} s");
}
