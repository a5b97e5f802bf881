use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tunnelgrid"));
    c.env("RUST_LOG", "error").env_remove("TUNNELGRID_THREADS");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(cmd).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_code(o: &Output) -> String {
    let line = stderr(o).lines().last().unwrap_or_default().to_string();
    let v: Value = serde_json::from_str(&line).unwrap_or_else(|_| panic!("stderr is not a JSON error line: {line}"));
    v["error"].as_str().unwrap().to_string()
}

const LADDER: &str = r#"
case = "ladder"
[potential]
preset = "harmonic"
params = { hbar_omega = [100.0, 131.0] }
[grid]
counts = [31, 31]
"#;

const QUARTIC: &str = r#"
case = "quartic"
[potential]
preset = "quartic-1d"
[grid]
counts = [201]
"#;

#[test]
fn solve_harmonic_ladder() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "run.toml", LADDER);
    let out = tmp.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("J_meV=NA status=not-applicable"), "{}", stdout(&o));

    let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "index,energy_meV,label,parity,occ_left,occ_right");
    let want = [115.5, 215.5, 246.5, 315.5, 346.5, 377.5];
    for (line, w) in lines.zip(want) {
        let e: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((e - w).abs() < 5e-3 * w, "{line}");
    }

    let m = json(&out.join("manifest.json"));
    let s = json(&out.join("spectrum.json"));
    assert_eq!(m["config_hash"], s["config_hash"]);
    assert_eq!(m["converged"], true);
    assert_eq!(m["residuals"].as_array().unwrap().len(), 6);
    let csv_hash = m["outputs"]["spectrum.csv"].as_str().unwrap();
    use sha2::Digest;
    assert_eq!(csv_hash, hex::encode(sha2::Sha256::digest(csv.as_bytes())));
}

#[test]
fn solve_double_well_prints_the_splitting() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "run.toml", QUARTIC);
    let out = tmp.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let line = stdout(&o);
    let j: f64 = line.split_whitespace().next().unwrap().strip_prefix("J_meV=").unwrap().parse().unwrap();
    assert!(j > 0.0 && line.contains("status=resolved"), "{line}");
    let s = json(&out.join("spectrum.json"));
    assert!((s["spectrum"]["splitting_mev"].as_f64().unwrap() - j).abs() < 1e-8 * j);
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "run.toml", QUARTIC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run("solve", &cfg, &a, &["--threads", "3"]).status.code(), Some(0));
    let o = bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(&b).env("TUNNELGRID_THREADS", "1").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    for f in ["spectrum.json", "spectrum.csv", "manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // A different seed is a different run.
    let c = tmp.path().join("c");
    assert_eq!(run("solve", &cfg, &c, &["--seed", "99"]).status.code(), Some(0));
    assert_ne!(json(&a.join("manifest.json"))["config_hash"], json(&c.join("manifest.json"))["config_hash"]);
    assert_eq!(json(&c.join("manifest.json"))["seed"], 99);
}

#[test]
fn malformed_config_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    for (name, text) in [
        ("broken.toml", "case = \"x\"\n[potential\n"),
        ("unknown.toml", "case = \"x\"\ncolour = 3\n[potential]\npreset = \"harmonic\"\n"),
        ("param.toml", "case = \"x\"\n[potential]\npreset = \"oh-like\"\nparams = { v_bb = 1.0 }\n"),
        ("order.toml", "case = \"x\"\n[potential]\npreset = \"harmonic\"\n[grid]\norder = 3\n"),
        ("counts.toml", "case = \"x\"\n[potential]\npreset = \"harmonic\"\n[grid]\ncounts = [9, 9]\n"),
    ] {
        let cfg = write(tmp.path(), name, text);
        let o = run("solve", &cfg, &out, &[]);
        assert_eq!(o.status.code(), Some(1), "{name}");
        assert_eq!(error_code(&o), "config-invalid", "{name}: {}", stderr(&o));
        assert!(!out.exists(), "{name} left output behind");
    }
    let o = run("solve", &tmp.path().join("missing.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_code(&o), "io-read");
}

#[test]
fn refuses_to_overwrite_without_force() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "run.toml", "case = \"d\"\n[density]\nrho_h = 0.43\nepsilon0_mev = 4.5\n");
    let out = tmp.path().join("out");
    assert_eq!(run("density", &cfg, &out, &[]).status.code(), Some(0));
    fs::write(out.join("density.json"), "sentinel").unwrap();
    let o = run("density", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_code(&o), "output-exists");
    assert_eq!(fs::read_to_string(out.join("density.json")).unwrap(), "sentinel");
    assert_eq!(run("density", &cfg, &out, &["--force"]).status.code(), Some(0));
    let d = json(&out.join("density.json"));
    assert!((d["tls_density_per_eV_nm3"].as_f64().unwrap() - 60.8).abs() < 0.02 * 60.8);
    // No temporary files are left behind.
    let names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    assert_eq!(names, vec!["density.json".to_string()]);
}

#[test]
fn fls_ring_levels() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "run.toml", "case = \"ring\"\n[fls]\nj = 1.0\n");
    let out = tmp.path().join("out");
    let o = run("fls", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let levels: Vec<f64> =
        json(&out.join("fls.json"))["levels_meV"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (a, b) in levels.iter().zip([-1.0, 0.0, 0.0, 1.0]) {
        assert!((a - b).abs() < 1e-14, "{levels:?}");
    }
    let bad = write(tmp.path(), "bad.toml", "case = \"ring\"\n[fls]\nj = -1.0\n");
    assert_eq!(run("fls", &bad, &tmp.path().join("o2"), &[]).status.code(), Some(1));
}

#[test]
fn strain_scan_is_monotone() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "run.toml",
        r#"
case = "strain"
[strain]
j_mev = 4.1e-3
delta_p = [0.2, 0.0, 0.0, 0.0, 0.0, 0.0]
direction = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
magnitudes = [5e-5, 0.0, 2e-5, 1e-5, 2e-5]
"#,
    );
    let out = tmp.path().join("out");
    let o = run("strain", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&out.join("strain.json"));
    assert!((r["quench_strain"].as_f64().unwrap() - 2.05e-5).abs() < 1e-9);
    let split: Vec<f64> = r["scan"].as_array().unwrap().iter().map(|p| p["splitting_meV"].as_f64().unwrap()).collect();
    assert_eq!(split.len(), 4);
    assert!(split.windows(2).all(|w| w[1] > w[0]), "{split:?}");
    assert!((split[0] - 4.1e-3).abs() < 1e-15);
}

const SWEEP: &str = r#"
case = "sweep"
[potential]
preset = "oh-like"
[subspace]
active = ["qy", "Q"]
[sweep]
masses = [50.942, 92.906, 180.948, 92.906, 1e7]
"#;

#[test]
fn mass_sweep_dedupes_and_flags() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "run.toml", SWEEP);
    let out = tmp.path().join("out");
    let o = run("sweep-mass", &cfg, &out, &[]);
    // The 1e7 amu point cannot resolve its splitting, so the sweep is partial.
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("duplicate"), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(2).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][3], "0");
    assert_eq!(rows[3][2], "");
    let j: Vec<f64> = rows[..3].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(j[0] > j[1] && j[1] > j[2], "{j:?}");
    let fit = json(&out.join("sweep_fit.json"));
    assert_eq!(fit["sweep"]["fit"]["points"], 3);
    assert_eq!(fit["sweep"]["partial"], true);
}

#[test]
fn reduce_rows_and_errors() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let cfg = write(
        tmp.path(),
        "run.toml",
        r#"
case = "reduce"
[potential]
preset = "oh-like"
[reduce]
subspaces = [{ active = ["qy"] }, { active = ["qy", "Q"], pins = { qx = 0.0 } }]
"#,
    );
    let o = run("reduce", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&out.join("reduce.json"));
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["dims"], 1);
    assert!(rows[0]["j_mev"].as_f64().unwrap() > rows[1]["j_mev"].as_f64().unwrap());
    let csv = fs::read_to_string(out.join("reduce.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "dims,active,pins,J_meV,ZPE_meV,status");

    let undefined = write(tmp.path(), "u.toml", "case = \"r\"\n[potential]\npreset = \"oh-like\"\n[reduce]\nsubspaces = [{ active = [\"qw\"] }]\n");
    let empty = write(tmp.path(), "e.toml", "case = \"r\"\n[potential]\npreset = \"oh-like\"\n[reduce]\nsubspaces = []\n");
    for cfg in [undefined, empty] {
        let o2 = tmp.path().join("o2");
        let o = run("reduce", &cfg, &o2, &[]);
        assert_eq!(o.status.code(), Some(1));
        assert_eq!(error_code(&o), "config-invalid");
        assert!(!o2.exists());
    }
}

/// One-dimensional quartic double well written as a sampled dataset.
fn write_dataset(dir: &Path) {
    let n = 121;
    let (lo, hi) = (-1.4, 1.4);
    let mut data = String::from("# index, energy\n");
    for i in 0..n {
        let x: f64 = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let e = 150.0 * ((x / 0.55).powi(2) - 1.0).powi(2) - 40.0;
        data.push_str(&format!("{i},{e}\n"));
    }
    fs::write(dir.join("dw.csv"), data).unwrap();
    fs::write(
        dir.join("dw.toml"),
        format!("data = \"dw.csv\"\n[metadata]\ndefect = \"test\"\n[[axis]]\nlabel = \"qy\"\nmin = {lo}\nmax = {hi}\ncount = {n}\n"),
    )
    .unwrap();
}

#[test]
fn ingested_dataset_checks_and_solves() {
    let tmp = TempDir::new().unwrap();
    write_dataset(tmp.path());
    let cfg = write(tmp.path(), "run.toml", "case = \"dw\"\n[potential]\nsidecar = \"dw.toml\"\n[solver]\nk = 2\n");
    let out = tmp.path().join("out");
    let o = run("ingest-check", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&out.join("ingest.json"));
    assert_eq!(r["samples"], 121);
    assert_eq!(r["minima"].as_array().unwrap().len(), 2);
    // The wells fall between nodes, so the lowest sample sits just above them.
    let reference = r["reference_energy"].as_f64().unwrap();
    assert!(reference > -40.0 && reference < -39.0, "{reference}");
    assert_eq!(r["inputs"].as_array().unwrap().len(), 2);

    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("status=resolved"));
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["inputs"][0]["path"], "dw.toml");

    fs::write(tmp.path().join("dw.csv"), "0,1.0\n").unwrap();
    let o = run("ingest-check", &cfg, &tmp.path().join("o2"), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(error_code(&o), "potential-invalid");
}

#[test]
fn frame_from_structures_is_reported() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "s1.xyz", "Nb 92.906 0 0 0\nNb 92.906 3.3 0 0\nH 1.008 1.0 0.5 0\n");
    write(tmp.path(), "s2.xyz", "Nb 92.906 0 0.02 0\nNb 92.906 3.3 -0.02 0\nH 1.008 1.0 1.5 0\n");
    let cfg = write(
        tmp.path(),
        "run.toml",
        "case = \"f\"\n[potential]\npreset = \"quartic-1d\"\n[grid]\ncounts = [101]\n[frame]\nsite_1 = \"s1.xyz\"\nsite_2 = \"s2.xyz\"\nmirror_normal = [0.0, 0.0, 1.0]\n",
    );
    let out = tmp.path().join("out");
    let o = run("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = json(&out.join("spectrum.json"));
    let q_y12 = s["frame"]["q_y12"].as_f64().unwrap();
    assert!((q_y12 - 1.008f64.sqrt()).abs() < 1e-9, "{q_y12}");
    assert_eq!(json(&out.join("manifest.json"))["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn unresolved_splitting_exits_2() {
    let tmp = TempDir::new().unwrap();
    // A barrier this high leaves a splitting far below the residual floor.
    let cfg = write(
        tmp.path(),
        "run.toml",
        "case = \"deep\"\n[potential]\npreset = \"quartic-1d\"\nparams = { v_b = 6000.0, a = 0.7 }\n[grid]\ncounts = [201]\n",
    );
    let o = run("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2), "{} {}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("status=splitting-unresolved") || stdout(&o).contains("status=doublet-not-found"));
}
