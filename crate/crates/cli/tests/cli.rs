use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use floqryd_cli::catalog;
use floqryd_cli::runner::{run, verify_manifest, RunOptions};
use floqryd_cli::scenario::parse;

fn floqryd(args: &[&str], threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_floqryd"));
    c.args(args);
    match threads {
        Some(t) => c.env("FLOQRYD_THREADS", t),
        None => c.env_remove("FLOQRYD_THREADS"),
    };
    c.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_ENSEMBLE: &str = r#"{
  "schema_version": 1,
  "name": "small_ensemble",
  "kind": "ensemble",
  "system": { "atoms": 2, "interaction_mhz": 0.8 },
  "schedule": [ { "type": "ffm", "duration_us": 1.0, "alpha": 6.9, "modulation_frequency_mhz": 3.0 } ],
  "samples": 6,
  "seed": 11,
  "output": { "times": { "start": 0.0, "end": 1.0, "count": 21 }, "spam_forward": true, "per_sample_traces": 2 }
}"#;

#[test]
fn empty_file_lists_required_keys() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "empty.json", "");
    let o = floqryd(&["validate", &p], None);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for key in ["schema_version", "name", "kind"] {
        assert!(e.contains(key), "{e}");
    }
}

#[test]
fn kind_specific_keys_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.json", r#"{"schema_version": 1, "name": "x", "kind": "ensemble"}"#);
    let o = floqryd(&["run", &p, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    for key in ["schedule", "output.times", "samples"] {
        assert!(e.contains(key), "{e}");
    }
}

#[test]
fn unknown_config_key_is_named() {
    let text = SMALL_ENSEMBLE.replace("\"samples\": 6,", "\"samples\": 6, \"config\": {\"rabi_mhx\": 1.0},");
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.json", &text);
    let o = floqryd(&["validate", &p], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config.rabi_mhx"), "{}", stderr(&o));
}

#[test]
fn unknown_scenario_field_is_named() {
    let text = SMALL_ENSEMBLE.replace("\"seed\": 11,", "\"seed\": 11, \"sampels\": 3,");
    let e = parse(&text).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("sampels"), "{e}");
    let text = SMALL_ENSEMBLE.replace("\"alpha\": 6.9", "\"alpah\": 6.9");
    let e = parse(&text).unwrap_err();
    assert!(e.to_string().contains("schedule[0]"), "{e}");
}

#[test]
fn config_overrides_merge_sparsely() {
    let text = SMALL_ENSEMBLE.replace("\"samples\": 6,", "\"samples\": 6, \"config\": {\"gamma_l_khz\": 0.0},");
    let s = parse(&text).unwrap();
    let d = s.defaults().unwrap();
    assert_eq!(d.gamma_l_khz, 0.0);
    assert_eq!(d.rabi_mhz, 1.0);
    let text = SMALL_ENSEMBLE.replace("\"samples\": 6,", "\"samples\": 6, \"config\": {\"schema_version\": 2},");
    let e = parse(&text).unwrap().defaults().unwrap_err();
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn newer_schema_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        dir.path(),
        "s.json",
        &SMALL_ENSEMBLE.replace("\"schema_version\": 1", "\"schema_version\": 2"),
    );
    let o = floqryd(&["validate", &p], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema_version"));
}

#[test]
fn bad_values_are_rejected_with_key() {
    for (from, to, key) in [
        ("\"samples\": 6", "\"samples\": 1", "samples"),
        ("\"interaction_mhz\": 0.8", "\"interaction_mhz\": -0.8", "system.interaction_mhz"),
        ("\"count\": 21", "\"count\": 0", "output.times.count"),
        ("\"duration_us\": 1.0", "\"duration_us\": -1.0", "schedule[0].duration_us"),
        ("\"kind\": \"ensemble\"", "\"kind\": \"movie\"", "kind"),
    ] {
        let e = parse(&SMALL_ENSEMBLE.replace(from, to))
            .and_then(|s| floqryd_cli::runner::prepare(&s))
            .unwrap_err();
        assert_eq!(e.exit_code(), 2, "{e}");
        assert!(e.to_string().contains(key), "{key}: {e}");
    }
}

#[test]
fn catalog_is_complete_and_valid() {
    let entries = catalog::list().unwrap();
    assert!(entries.len() >= 20);
    for name in [
        "fig2a", "fig2b", "fig2c", "fig2d", "fig2e", "fig3b", "fig3c", "fig3d", "fig3e", "fig3f", "fig4a", "fig4c",
        "fig4d", "supfig3", "supfig5", "supfig6", "supfig7", "calib_bessel", "calib_ram", "calib_aod",
    ] {
        assert!(entries.iter().any(|e| e.name == name), "{name}");
    }
    for (name, text) in catalog::BUNDLED {
        let s = parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&s.name, name);
        floqryd_cli::runner::prepare(&s).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let o = floqryd(&["list"], None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).lines().count() > entries.len());
}

#[test]
fn fig3f_compares_ffm_and_laser_free_at_20us() {
    let s = catalog::load("fig3f").unwrap().unwrap();
    let d = s.doppler.unwrap();
    assert_eq!(d.duration_us, 20.0);
    let names: Vec<&str> = d.drives.iter().map(|x| x.name()).collect();
    assert_eq!(names, ["ffm", "laser_free"]);
    assert!(d.widths_mhz.resolve("w").unwrap().len() > 2);
}

fn csv_bodies(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "s.json", SMALL_ENSEMBLE);
    let mut bodies = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = floqryd(&["run", &p, "--out", out.to_str().unwrap()], Some(threads));
        assert!(o.status.success(), "{}", stderr(&o));
        bodies.push(csv_bodies(&out.join("small_ensemble")));
    }
    assert_eq!(bodies[0].len(), 3);
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn seed_flag_changes_draws() {
    let s = parse(SMALL_ENSEMBLE).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = run(
        &s,
        SMALL_ENSEMBLE,
        &RunOptions {
            out: dir.path().join("a"),
            threads: 1,
            seed: None,
        },
    )
    .unwrap();
    let b = run(
        &s,
        SMALL_ENSEMBLE,
        &RunOptions {
            out: dir.path().join("b"),
            threads: 1,
            seed: Some(12),
        },
    )
    .unwrap();
    assert_eq!(a.seed, 11);
    assert_eq!(b.seed, 12);
    let sum = |m: &floqryd_cli::runner::RunManifest| {
        m.files.iter().find(|f| f.path == "ensemble.csv").unwrap().sha256.clone()
    };
    assert_ne!(sum(&a), sum(&b));
}

#[test]
fn manifest_matches_written_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = catalog::source("calib_bessel").unwrap();
    let s = parse(text).unwrap();
    let m = run(
        &s,
        text,
        &RunOptions {
            out: dir.path().to_path_buf(),
            threads: 1,
            seed: None,
        },
    )
    .unwrap();
    let root = dir.path().join("calib_bessel");
    assert!(verify_manifest(&root).unwrap().is_empty());
    assert_eq!(m.files.len(), 2);
    for f in &m.files {
        assert_eq!(fs::metadata(root.join(&f.path)).unwrap().len(), f.bytes);
    }
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(v["code_version"], env!("CARGO_PKG_VERSION"));
    assert!(v["finished_unix_s"].as_f64().unwrap() >= v["started_unix_s"].as_f64().unwrap());
    fs::write(root.join("data.csv"), "tampered\n").unwrap();
    assert_eq!(verify_manifest(&root).unwrap(), ["data.csv"]);
}

#[test]
fn trajectory_outputs_have_documented_columns() {
    let text = r#"{
      "schema_version": 1, "name": "rabi", "kind": "trajectory",
      "system": { "atoms": 1 },
      "noise": { "model": "noiseless" },
      "schedule": [ { "type": "static", "duration_us": 4.0 } ],
      "output": { "times": { "start": 0.0, "end": 4.0, "count": 41 } },
      "fit": { "model": "damped_sinusoid", "label": "g" }
    }"#;
    let s = parse(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run(&s, text, &RunOptions { out: dir.path().to_path_buf(), threads: 1, seed: None }).unwrap();
    let csv = fs::read_to_string(dir.path().join("rabi/trajectory.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "time_us,P0,P1,e,g,fidelity");
    assert_eq!(csv.lines().count(), 42);
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rabi/fit.json")).unwrap()).unwrap();
    let names = fit["names"].as_array().unwrap();
    let k = names.iter().position(|n| n == "frequency").unwrap();
    // single-atom resonant Rabi flopping at Ω/2π = 1 MHz
    assert!((fit["parameters"][k].as_f64().unwrap() - 1.0).abs() < 1e-3, "{fit}");
}
