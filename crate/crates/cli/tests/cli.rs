use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use tempfile::TempDir;

const FREE_PI: &str =
    r#"{"segments": [{"length": 3.141592653589793, "kind": "constant", "matrix": [[0.5, 0.0], [0.0, 0.5]]}]}"#;
const FREE_SEMIAXIS: &str =
    r#"{"segments": [{"length": "inf", "kind": "constant", "matrix": [[0.5, 0.0], [0.0, 0.5]]}]}"#;
const SQUARE: &str = r#"{"theta_plus": {"coeffs": [1.0, 0.0, -1.0]}, "theta_minus": {"coeffs": [0.0, -2.0]}}"#;

struct Run {
    code: i32,
    out: PathBuf,
}

impl Run {
    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }

    fn report(&self) -> Value {
        self.json("report.json")
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, contents).unwrap();
    p.display().to_string()
}

fn canon_env(dir: &Path, out: &str, args: &[&str], env: &[(&str, &str)]) -> Run {
    let out = dir.join(out);
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_canon"));
    cmd.args(args).arg("--out").arg(&out).current_dir(dir);
    for (k, v) in env {
        cmd.env(k, v);
    }
    let status = cmd.output().unwrap().status;
    Run { code: status.code().unwrap(), out }
}

fn canon(dir: &Path, out: &str, args: &[&str]) -> Run {
    canon_env(dir, out, args, &[])
}

fn column(rows: &Value, key: &str) -> Vec<f64> {
    rows.as_array().unwrap().iter().map(|r| r[key].as_f64().unwrap()).collect()
}

#[test]
fn free_spectrum_example() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "free.json", FREE_PI);
    let run = canon(dir.path(), "a", &["direct", "spectrum", "--h", &h, "--alpha", "1.5708", "--window", "-5", "5"]);
    assert_eq!(run.code, 0);
    let got = column(&run.json("spectrum.json"), "lambda");
    let expected = [-4.0, -2.0, 0.0, 2.0, 4.0];
    assert_eq!(got.len(), 5);
    // 1.5708 sits 3.7e-6 above π/2, which moves every zero by 2δ/π
    for (a, b) in got.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-5);
    }
    let run = canon(dir.path(), "b", &["direct", "spectrum", "--h", &h, "--alpha", "pi/2", "--window", "-5", "5"]);
    for (a, b) in column(&run.json("spectrum.json"), "lambda").iter().zip(&expected) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn csv_tables_have_headers() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "free.json", FREE_PI);
    let run =
        canon(dir.path(), "o", &["direct", "monodromy", "--h", &h, "--z", "-1,2", "--z", "0,1", "--format", "csv"]);
    assert_eq!(run.code, 0);
    let text = fs::read_to_string(run.out.join("monodromy.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("z_re,z_im,m11_re"));
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("-1,2,"));
    assert!(run.report()["residuals"]["det_deviation"]["pass"].as_bool().unwrap());
}

#[test]
fn measure_roundtrip_through_files() {
    let dir = TempDir::new().unwrap();
    let atoms = write(dir.path(), "two.json", r#"{"atoms": [{"t": 0.0, "w": 1.0}, {"t": 1.5, "w": 0.4}]}"#);
    let inv = canon(dir.path(), "inv", &["inverse", "measure", "--atoms", &atoms]);
    assert_eq!(inv.code, 0);
    let h = inv.out.join("hamiltonian.json").display().to_string();
    let direct = canon(dir.path(), "dir", &["direct", "measure", "--h", &h, "--window", "-3", "3"]);
    assert_eq!(direct.code, 0);
    let got = direct.json("measure.json");
    let got = got["atoms"].as_array().unwrap();
    assert_eq!(got.len(), 2);
    for (g, (t, w)) in got.iter().zip([(0.0, 1.0), (1.5, 0.4)]) {
        assert!((g["t"].as_f64().unwrap() - t).abs() < 1e-7);
        assert!((g["w"].as_f64().unwrap() - w).abs() < 1e-6 * w);
    }
}

#[test]
fn type_cross_check() {
    let dir = TempDir::new().unwrap();
    let mixed = write(
        dir.path(),
        "mixed.json",
        r#"{"segments": [
            {"length": 1.0, "kind": "constant", "matrix": [[0.7, 0.1], [0.1, 0.3]]},
            {"length": 0.8, "kind": "rank_one", "angle": 0.4},
            {"length": 1.5, "kind": "constant", "matrix": [[0.5, 0.0], [0.0, 0.5]]}
        ]}"#,
    );
    let exact = canon(dir.path(), "x", &["type", "--h", &mixed]).json("type.json")["type"].as_f64().unwrap();
    let numeric =
        canon(dir.path(), "n", &["type", "--h", &mixed, "--numeric"]).json("type.json")["type"].as_f64().unwrap();
    assert!((exact - numeric).abs() < 0.02 * exact, "{exact} vs {numeric}");
    let e = write(dir.path(), "e.json", SQUARE);
    let poly = canon(dir.path(), "p", &["type", "--e", &e, "--numeric", "--y-max", "1e6"]);
    assert!(poly.json("type.json")["type"].as_f64().unwrap().abs() < 1e-4);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "free.json", FREE_SEMIAXIS);
    let args = ["weyl", "m", "--h", &h, "--z", "0,1", "--z", "2,0.5", "--z", "-1,3"];
    let a = canon(dir.path(), "a", &[&args[..], &["--threads", "1"]].concat());
    let b = canon_env(dir.path(), "b", &[&args[..], &["--threads", "3"]].concat(), &[("CANON_LOG", "debug")]);
    assert_eq!(a.code, 0);
    assert_eq!(fs::read(a.out.join("m.json")).unwrap(), fs::read(b.out.join("m.json")).unwrap());
    let strip = |r: Value| {
        let mut r = r;
        r["command"] = Value::Null;
        r
    };
    assert_eq!(strip(a.report()), strip(b.report()));
    for m in a.json("m.json").as_array().unwrap() {
        assert!((m["m_re"].as_f64().unwrap()).abs() < 1e-8 && (m["m_im"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn report_records_input_digests() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "free.json", FREE_PI);
    let run = canon(dir.path(), "o", &["normalize", "--h", &h]);
    assert_eq!(run.code, 0);
    let report = run.report();
    let digest = hex::encode(Sha256::digest(FREE_PI.as_bytes()));
    assert_eq!(report["inputs"][&h], json!(digest));
    assert_eq!(report["command"][0], json!("normalize"));
    assert_eq!(report["status"], json!("ok"));
    assert_eq!(report["outputs"], json!(["hamiltonian.json", "reparametrization.json"]));
}

#[test]
fn normalize_rescales_the_trace() {
    let dir = TempDir::new().unwrap();
    let h = write(
        dir.path(),
        "h.json",
        r#"{"segments": [{"length": 1.0, "kind": "constant", "matrix": [[2.0, 0.0], [0.0, 1.0]]},
                         {"length": 2.0, "kind": "rank_one", "angle": 0.3, "weight": 0.5}]}"#,
    );
    let run = canon(dir.path(), "o", &["normalize", "--h", &h]);
    assert_eq!(run.code, 0);
    let out = run.json("hamiltonian.json");
    assert_eq!(out["trace_normalized"], json!(true));
    let lengths: Vec<f64> = out["segments"].as_array().unwrap().iter().map(|s| s["length"].as_f64().unwrap()).collect();
    assert!((lengths[0] - 3.0).abs() < 1e-12 && (lengths[1] - 1.0).abs() < 1e-12);
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let run = canon(dir.path(), "o", &["direct", "spectrum", "--window", "-1", "1"]);
    assert_eq!(run.code, 2);
    assert_eq!(run.report()["status"], json!("usage error"));
    let run = canon(dir.path(), "p", &["direct", "spectrum", "--h", "free.json"]);
    assert_eq!(run.code, 2);
    assert!(run.report()["error"].as_str().unwrap().contains("--window"));
    let run = canon(dir.path(), "q", &["no-such-command"]);
    assert_eq!(run.code, 2);
}

#[test]
fn invalid_input_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let h = write(
        dir.path(),
        "bad.json",
        r#"{"segments": [{"length": 1.0, "kind": "constant", "matrix": [[1.0, 2.0], [2.0, 1.0]]}]}"#,
    );
    let run = canon(dir.path(), "o", &["normalize", "--h", &h]);
    assert_eq!(run.code, 3);
    assert_eq!(run.report()["status"], json!("validation error"));
    let atoms = write(dir.path(), "a.json", r#"{"atoms": [{"t": 0.0, "w": -1.0}]}"#);
    assert_eq!(canon(dir.path(), "p", &["inverse", "measure", "--atoms", &atoms]).code, 3);
    let vertical = write(
        dir.path(),
        "v.json",
        r#"{"segments": [{"length": "inf", "kind": "rank_one", "angle": 1.5707963267948966}]}"#,
    );
    assert_eq!(canon(dir.path(), "q", &["weyl", "m", "--h", &vertical, "--z", "0,1"]).code, 3);
}

#[test]
fn failed_gates_exit_four() {
    let dir = TempDir::new().unwrap();
    let run = canon(dir.path(), "o", &["selftest", "--tol", "1e-300"]);
    assert_eq!(run.code, 4);
    let report = run.report();
    assert_eq!(report["status"], json!("numerical gate failed"));
    assert_eq!(report["residuals"]["free_det"]["pass"], json!(false));
}

#[test]
fn selftest_passes() {
    let dir = TempDir::new().unwrap();
    let run = canon(dir.path(), "o", &["selftest"]);
    assert_eq!(run.code, 0);
    let residuals = run.report()["residuals"].as_object().unwrap().clone();
    assert!(residuals.len() >= 10);
    assert!(residuals.values().all(|r| r["pass"] == json!(true)));
}

#[test]
fn jacobi_roundtrip_through_files() {
    let dir = TempDir::new().unwrap();
    let jm = write(dir.path(), "jm.json", r#"{"q": [-1.0, 0.5, 0.2], "rho": [1.4142135623730951, 0.8]}"#);
    let from = canon(dir.path(), "f", &["jacobi", "from", "--input", &jm, "--seed-angle", "0.3", "--delta1", "0.7"]);
    assert_eq!(from.code, 0);
    let chain = from.json("chain.json");
    assert_eq!(chain["links"].as_array().unwrap().len(), 3);
    let two = write(
        dir.path(),
        "two.json",
        r#"{"segments": [{"length": 1.0, "kind": "rank_one", "angle": 0.0},
                         {"length": 1.0, "kind": "rank_one", "angle": -0.7853981633974483}]}"#,
    );
    let to = canon(dir.path(), "t", &["jacobi", "to", "--h", &two]);
    assert_eq!(to.code, 0);
    let out = to.json("jacobi.json");
    assert!((out["q"][0].as_f64().unwrap() + 1.0).abs() < 1e-12);
    assert!((out["rho"][0].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-12);
}

#[test]
fn debranges_and_polynomial_inverse() {
    let dir = TempDir::new().unwrap();
    let e = write(dir.path(), "e.json", SQUARE);
    let length = canon(dir.path(), "l", &["debranges", "length", "--e", &e]);
    assert!((length.json("length.json")["length"].as_f64().unwrap() - 2.5).abs() < 1e-8);
    let phi = canon(dir.path(), "p", &["debranges", "phi", "--e", &e]);
    assert_eq!(phi.code, 0);
    let kernel = canon(dir.path(), "k", &["debranges", "kernel", "--e", &e, "--lambda", "0.5,1", "--z", "-1,0.3"]);
    assert_eq!(kernel.code, 0);
    let poly = canon(dir.path(), "i", &["inverse", "poly", "--e", &e]);
    assert_eq!(poly.code, 0);
    let segs = poly.json("hamiltonian.json")["segments"].as_array().unwrap().clone();
    assert_eq!(segs.len(), 2);
    assert!((segs[0]["length"].as_f64().unwrap() - 2.0).abs() < 1e-8);
    assert!((segs[1]["length"].as_f64().unwrap() - 0.5).abs() < 1e-8);
}

#[test]
fn reductions() {
    let dir = TempDir::new().unwrap();
    let string = write(dir.path(), "s.json", r#"{"kind": "pieces", "pieces": [[1.0, 1.0], [0.5, 4.0]]}"#);
    let run = canon(dir.path(), "s", &["reduce", "string", "--input", &string]);
    assert_eq!(run.code, 0);
    assert_eq!(run.json("hamiltonian.json")["trace_normalized"], json!(true));
    let schr = write(dir.path(), "q.json", r#"{"q": [0.0, 0.0], "h": 0.0, "grid_n": 33}"#);
    let run = canon(dir.path(), "q", &["reduce", "schrodinger", "--input", &schr]);
    assert_eq!(run.code, 0);
    assert!(run.out.join("context.json").exists());
}

#[test]
fn weyl_subcommands() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "free.json", FREE_SEMIAXIS);
    let disk = canon(dir.path(), "d", &["weyl", "disk", "--h", &h, "--x", "2", "--z", "0,1"]);
    let r = disk.json("disk.json")[0]["radius"].as_f64().unwrap();
    assert!((2.0 * r - 2.0 / 2f64.sinh()).abs() < 1e-9);
    let density = canon(dir.path(), "e", &["weyl", "density", "--h", &h, "--window", "-2", "2", "--points", "5"]);
    for d in column(&density.json("density.json"), "density") {
        assert!((d - 1.0 / std::f64::consts::PI).abs() < 1e-6);
    }
    let input = write(
        dir.path(),
        "sing.json",
        r#"{"measure": {"kind": "constant", "density": 1.0},
            "schedule": {"n_list": [8, 16, 32], "windows": [2.4, 4.8, 9.6], "x_max": 2.0, "grid_n": 3}}"#,
    );
    let inv = canon(dir.path(), "i", &["weyl", "inverse", "--input", &input]);
    assert_eq!(inv.code, 0);
    assert!(inv.report()["diagnostics"]["herglotz_mismatch"].as_f64().unwrap() < 5e-2);
    let measure = write(dir.path(), "mu.json", r#"{"kind": "constant", "density": 1.0}"#);
    let schedule = write(
        dir.path(),
        "sched.json",
        r#"{"n_list": [8, 16, 32], "windows": [2.4, 4.8, 9.6], "x_max": 2.0, "grid_n": 3}"#,
    );
    let split = canon(dir.path(), "j", &["weyl", "inverse", "--measure", &measure, "--schedule", &schedule]);
    assert_eq!(split.code, 0);
    assert_eq!(
        fs::read(split.out.join("hamiltonian.json")).unwrap(),
        fs::read(inv.out.join("hamiltonian.json")).unwrap()
    );
    assert_eq!(canon(dir.path(), "k", &["weyl", "inverse", "--measure", &measure]).code, 2);
}

#[test]
fn complex_arguments_accept_both_notations() {
    let dir = TempDir::new().unwrap();
    let h = write(dir.path(), "free.json", FREE_SEMIAXIS);
    let run = canon(
        dir.path(),
        "o",
        &["weyl", "m", "--h", &h, "--z", "1+2i", "--z", "-3.5+1e-1i", "--z", "i", "--tol", "1e-9"],
    );
    assert_eq!(run.code, 0);
    let rows = run.json("m.json");
    let z: Vec<(f64, f64)> =
        rows.as_array().unwrap().iter().map(|r| (r["z_re"].as_f64().unwrap(), r["z_im"].as_f64().unwrap())).collect();
    assert_eq!(z, vec![(1.0, 2.0), (-3.5, 0.1), (0.0, 1.0)]);
    let trajectory = run.json("trajectory.json");
    let last = trajectory.as_array().unwrap().iter().rfind(|r| r["z_re"] == json!(1.0)).unwrap().clone();
    assert!(2.0 * last["radius"].as_f64().unwrap() < 1e-9);
    assert_eq!(canon(dir.path(), "p", &["weyl", "m", "--h", &h, "--z", "1-2i"]).code, 3);
    assert_eq!(canon(dir.path(), "q", &["weyl", "m", "--h", &h, "--z", "1+2j"]).code, 2);
}

#[test]
fn regular_inverse_of_free_data() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        dir.path(),
        "spec.json",
        r#"{"zeros": [0.0, -2.0, 2.0], "residues": [-0.6366197723675814, -0.6366197723675814, -0.6366197723675814],
            "theta_minus_prime_zero": -1.5707963267948966}"#,
    );
    let run = canon(dir.path(), "o", &["inverse", "regular", "--spec", &spec, "--n", "3", "--grid-n", "5"]);
    assert_eq!(run.code, 0);
    assert!(run.out.join("regular_inverse.json").exists());
}
