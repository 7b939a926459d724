use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use filament_lab::frames::{DiscreteCurve, Topology};
use filament_lab::io;
use filament_lab::Metric;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_filament-lab"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn invoke(cmd: &str, dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = write(dir, &format!("{cmd}.json"), config);
    bin().arg(cmd).arg("--config").arg(&cfg).arg("--out").arg(dir.join("out")).args(extra).output().unwrap()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

fn gate(r: &Value, name: &str) -> f64 {
    r["gates"].as_array().unwrap().iter().find(|g| g["name"] == name).unwrap_or_else(|| panic!("no gate {name}"))["value"].as_f64().unwrap()
}

fn save_curve(dir: &Path, name: &str, curve: &DiscreteCurve) -> PathBuf {
    let p = dir.join(name);
    io::write_curve_csv(fs::File::create(&p).unwrap(), curve, None).unwrap();
    p
}

fn circle(n: usize, r: f64) -> DiscreteCurve {
    let l = 2.0 * std::f64::consts::PI * r;
    DiscreteCurve::from_fn(|s| [r * (s / r).cos(), r * (s / r).sin(), 0.0], n, l / n as f64, 0.0, Metric::Euclidean, Topology::Closed).unwrap()
}

fn trefoil(n: usize) -> DiscreteCurve {
    DiscreteCurve::closed_from_parametric(|t| [t.sin() + 2.0 * (2.0 * t).sin(), t.cos() - 2.0 * (2.0 * t).cos(), -(3.0 * t).sin()], n).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const TWO_SOLITONS: &str = r#"[{"flavor":"SU2","alpha":[0.2,1],"v":[[1,0],[1,0]]},{"flavor":"SU2","alpha":[-0.3,0.6],"v":[[1,0],[-0.5,0.5]]}]"#;

#[test]
fn unknown_key_is_a_schema_error() {
    let d = TempDir::new().unwrap();
    let o = invoke("soliton", d.path(), r#"{"flavor":"SU2","colour":"red"}"#, &[]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let o = invoke("soliton", d.path(), "not json", &[]);
    assert_eq!(code(&o), 2);
    let o = invoke("soliton", d.path(), r#"{"command":"evolve"}"#, &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_input_exits_4() {
    let d = TempDir::new().unwrap();
    let o = invoke("evolve", d.path(), r#"{"input":{"curve":"nowhere.csv"},"time":{"t":0.1}}"#, &[]);
    assert_eq!(code(&o), 4);
    let o = bin().args(["verify", "--config"]).arg(d.path().join("absent.json")).arg("--out").arg(d.path().join("out")).output().unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn bad_thread_count_exits_2() {
    let d = TempDir::new().unwrap();
    let o = bin().env("FILAMENT_LAB_THREADS", "zero").args(["verify", "--suite", "reality", "--out"]).arg(d.path()).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn failed_gate_exits_3() {
    let d = TempDir::new().unwrap();
    let cfg = format!(r#"{{"flavor":"SU2","grid":{{"n":512,"l":24,"boundary":"periodic"}},"seeds":{TWO_SOLITONS}}}"#);
    let o = invoke("soliton", d.path(), &cfg, &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flatness"));
    assert_eq!(report(d.path())["pass"], false);
}

#[test]
fn vacuum_gives_a_line_and_zero_potential() {
    let d = TempDir::new().unwrap();
    let o = invoke("soliton", d.path(), r#"{"flavor":"SU2","seeds":[]}"#, &[]);
    assert_eq!(code(&o), 0);
    let (u, _) = io::read_potential_csv(fs::File::open(d.path().join("out/potential_00000.csv")).unwrap(), filament_lab::Flavor::Su2, filament_lab::hierarchy::Boundary::Periodic, None).unwrap();
    assert_eq!(u.max_abs(), 0.0);
    let (c, _) = io::read_curve_csv(fs::File::open(d.path().join("out/curve_00000.csv")).unwrap(), Metric::Euclidean, Topology::Open, None).unwrap();
    assert!(c.points.iter().all(|p| p[1].abs() < 1e-12 && p[2].abs() < 1e-12));
}

#[test]
fn one_soliton_has_amplitude_two() {
    let d = TempDir::new().unwrap();
    let o = invoke("soliton", d.path(), r#"{"flavor":"SU2","seeds":[{"flavor":"SU2","alpha":[0,1],"v":[[1,0],[1,0]]}]}"#, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path());
    assert!((r["details"]["max_abs_q"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    let manifest = fs::read_to_string(d.path().join("out/manifest.json")).unwrap();
    let schema: Value = serde_json::from_str(io::SOLITON_MANIFEST_SCHEMA).unwrap();
    assert!(jsonschema::is_valid(&schema, &serde_json::from_str(&manifest).unwrap()));
}

#[test]
fn two_soliton_routes_give_the_same_manifest() {
    let mut manifests = Vec::new();
    let mut potentials = Vec::new();
    for route in ["sequential", "permutability"] {
        let d = TempDir::new().unwrap();
        let cfg = format!(
            r#"{{"flavor":"SU2","route":"{route}","grid":{{"n":512,"l":36,"boundary":"periodic"}},"time":{{"t":0.1,"dt":0.05}},"output":{{"frame":true,"obj":true}},"seeds":{TWO_SOLITONS}}}"#
        );
        let o = invoke("soliton", d.path(), &cfg, &[]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(gate(&report(d.path()), "permutability") < 1e-8);
        let text = fs::read_to_string(d.path().join("out/manifest.json")).unwrap();
        manifests.push(text.replace(&format!(r#""route": "{route}""#), r#""route": """#));
        potentials.push(fs::read_to_string(d.path().join("out/potential_00002.csv")).unwrap());
        assert!(d.path().join("out/frame.csv").exists() && d.path().join("out/curves.obj").exists());
    }
    assert_eq!(manifests[0], manifests[1]);
    let parse = |t: &str| -> Vec<f64> { t.lines().skip(1).flat_map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect::<Vec<_>>()).collect() };
    let (a, b) = (parse(&potentials[0]), parse(&potentials[1]));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-8));
}

#[test]
fn circle_keeps_its_energy_under_vfe() {
    let d = TempDir::new().unwrap();
    save_curve(d.path(), "circle.csv", &circle(128, 1.0));
    let o = invoke("evolve", d.path(), r#"{"input":{"curve":"circle.csv","topology":"closed"},"time":{"t":0.5}}"#, &["--strict"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path());
    assert!(gate(&r, "H1_drift") < 1e-6);
    let (traj, index) = io::read_curve_trajectory(&d.path().join("out/trajectory.json")).unwrap();
    assert_eq!(index.slices.len(), traj.len());
    let schema: Value = serde_json::from_str(io::TRAJECTORY_INDEX_SCHEMA).unwrap();
    let idx: Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/trajectory.json")).unwrap()).unwrap();
    assert!(jsonschema::is_valid(&schema, &idx));
    assert!((traj.t(traj.len() - 1) - 0.5).abs() < 1e-12);
}

#[test]
fn straight_line_does_not_move() {
    let d = TempDir::new().unwrap();
    let line = DiscreteCurve::from_fn(|x| [x, 0.0, 0.0], 64, 0.1, -3.0, Metric::Euclidean, Topology::Open).unwrap();
    save_curve(d.path(), "line.csv", &line);
    let o = invoke("evolve", d.path(), r#"{"input":{"curve":"line.csv"},"time":{"t":0.2}}"#, &[]);
    assert_eq!(code(&o), 0);
    let (traj, _) = io::read_curve_trajectory(&d.path().join("out/trajectory.json")).unwrap();
    assert!(traj.len() > 2);
    assert!(traj.slices.iter().all(|c| c.points == line.points));
}

#[test]
fn planar_airy_stays_planar() {
    let d = TempDir::new().unwrap();
    let wobbly = DiscreteCurve::closed_from_parametric(|t| [(1.0 + 0.2 * (3.0 * t).cos()) * t.cos(), (1.0 + 0.2 * (3.0 * t).cos()) * t.sin(), 0.0], 128).unwrap();
    save_curve(d.path(), "planar.csv", &wobbly);
    let cfg = r#"{"input":{"curve":"planar.csv","topology":"closed"},"flow":{"kind":"airy","normalized":true},"time":{"t":0.02},"output":{"obj":true}}"#;
    let o = invoke("evolve", d.path(), cfg, &["--strict"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(gate(&report(d.path()), "torsion") < 1e-6);
    assert!(d.path().join("out/curves.obj").exists());
}

#[test]
fn helix_round_trip() {
    let d = TempDir::new().unwrap();
    let (a, b) = (0.8, 0.6);
    let c = 1.0 / f64::hypot(a, b);
    let l = 2.0 * std::f64::consts::PI / c;
    let shift = [0.0, 0.0, b * c * l];
    let helix = DiscreteCurve::from_fn(|s| [a * (c * s).cos(), a * (c * s).sin(), b * c * s], 128, l / 128.0, 0.0, Metric::Euclidean, Topology::Quasiperiodic { shift }).unwrap();
    save_curve(d.path(), "helix.csv", &helix);
    let cfg = format!(r#"{{"direction":"round-trip","input":{{"curve":"helix.csv","topology":{{"quasiperiodic":{{"shift":[0,0,{}]}}}}}}}}"#, shift[2]);
    let o = invoke("hasimoto", d.path(), &cfg, &["--strict"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(gate(&report(d.path()), "round_trip") < 1e-4);
}

#[test]
fn knotted_round_trip_reports_holonomy() {
    let d = TempDir::new().unwrap();
    let knot = trefoil(256);
    let expect = filament_lab::frames::holonomy(&knot).unwrap();
    save_curve(d.path(), "knot.csv", &knot);
    let o = invoke("hasimoto", d.path(), r#"{"direction":"round-trip","input":{"curve":"knot.csv","topology":"closed"}}"#, &["--strict"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(d.path());
    assert!((r["details"]["holonomy"].as_f64().unwrap() - expect.angle).abs() < 1e-6);
    assert!(expect.angle.abs() > 0.1);
    assert!(gate(&r, "round_trip") < 1e-4);
    let o = invoke("hasimoto", d.path(), r#"{"input":{"curve":"knot.csv","topology":"closed"}}"#, &[]);
    assert_eq!(code(&o), 0);
    let rows = io::read_frame_csv(fs::File::open(d.path().join("out/frame.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 256);
}

#[test]
fn backward_reconstruction_of_a_trajectory() {
    let d = TempDir::new().unwrap();
    let grid = filament_lab::hierarchy::Grid::periodic(512, 24.0, -12.0).unwrap();
    let u = filament_lab::hierarchy::PotentialField::from_fn(filament_lab::Flavor::Su2, grid, |x| {
        let q = filament_lab::C64::new(2.0 / (2.0 * x).cosh(), 0.0);
        (q, -q.conj())
    })
    .unwrap();
    io::write_potential_csv(fs::File::create(d.path().join("q.csv")).unwrap(), &u, None).unwrap();
    let o = invoke("evolve", d.path(), r#"{"input":{"potential":"q.csv","boundary":"periodic"},"flow":{"kind":"potential","j":2},"time":{"t":0.01,"dt":0.0001,"save_every":10}}"#, &["--strict"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traj = d.path().join("traj");
    fs::rename(d.path().join("out"), &traj).unwrap();
    let o = invoke("hasimoto", d.path(), r#"{"direction":"backward","input":{"trajectory":"traj/trajectory.json"},"basepoint":{"position":[1,2,3]}}"#, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (c, t) = io::read_curve_csv(fs::File::open(d.path().join("out/curve_00000.csv")).unwrap(), Metric::Euclidean, Topology::Open, None).unwrap();
    assert_eq!(t, Some(0.0));
    assert!((0..3).all(|k| (c.points[0][k] - [1.0, 2.0, 3.0][k]).abs() < 1e-12));
    let sd = report(d.path())["details"]["speed_deviation"].as_f64().unwrap();
    assert!(sd < 1e-6, "{sd} {}", report(d.path())["details"]["topology"]);
}

#[test]
fn default_verify_passes_and_injected_fault_fails() {
    let d = TempDir::new().unwrap();
    let o = bin().arg("verify").arg("--out").arg(d.path().join("out")).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(d.path());
    assert_eq!(r["pass"], true);
    assert_eq!(r["details"]["suites"].as_array().unwrap().len(), 6);
    let o = invoke("verify", d.path(), r#"{"inject":"permutability-sign"}"#, &["--suite", "permutability"]);
    assert_eq!(code(&o), 1);
    assert!(gate(&report(d.path()), "permutability:potential") > 1e-2);
    let o = bin().args(["verify", "--suite", "nonsense"]).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn runs_are_deterministic() {
    let run = |threads: &str| {
        let d = TempDir::new().unwrap();
        save_curve(d.path(), "knot.csv", &trefoil(128));
        let cfg = write(d.path(), "e.json", r#"{"input":{"curve":"knot.csv","topology":"closed"},"time":{"t":0.02}}"#);
        let o = bin().env("FILAMENT_LAB_THREADS", threads).arg("evolve").arg("--config").arg(&cfg).arg("--out").arg(d.path().join("out")).output().unwrap();
        assert_eq!(code(&o), 0);
        (fs::read(d.path().join("out/trajectory_00002.csv")).unwrap(), fs::read(d.path().join("out/monitors.csv")).unwrap())
    };
    assert_eq!(run("1"), run("4"));
}
