use std::path::{Path, PathBuf};
use std::process::Command;

use kfim_cli::config::ExperimentConfig;
use kfim_cli::records::{read_records, EthRow, PolfedRow};
use kfim_cli::run::run_experiment;
use kfim_cli::summary::{summarize, Dataset};

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, format!("{body}\noutput = \"{name}\"\n")).unwrap();
    path
}

fn run(path: &Path, workers: usize) -> PathBuf {
    let cfg = ExperimentConfig::load(path).unwrap();
    run_experiment(&cfg, workers).unwrap();
    cfg.output
}

fn kfim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kfim"))
}

#[test]
fn schmidt_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let body = "kind = \"schmidt-stats\"\nsizes = [6, 8]\nrealizations = 3\neigenpairs = 8\nseed = 11";
    let a = run(&config(dir.path(), "a", body), 1);
    let b = run(&config(dir.path(), "b", body), 2);
    for f in ["schmidt.csv", "spectra.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert!(x.len() > 100);
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["failed"], 0);
    assert_eq!(manifest["realizations"].as_array().unwrap().len(), 6);
    assert!(manifest["rng_algorithm"].as_str().unwrap().contains("ChaCha8"));
}

#[test]
fn polfed_check_matches_dense() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &config(dir.path(), "pc", "kind = \"polfed-check\"\nsizes = [10]\nrealizations = 1\neigenpairs = 32\nseed = 3"),
        1,
    );
    let rows: Vec<PolfedRow> = read_records(&out.join("polfed.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0];
    assert!(r.pairs > 0);
    assert!(r.max_phase_dev < 1e-10, "{r:?}");
    assert!(r.max_overlap_dev < 1e-8, "{r:?}");
    assert!(r.max_residue < 1e-10, "{r:?}");
}

#[test]
fn gev_fit_reads_schmidt_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &config(
            dir.path(),
            "s",
            "kind = \"schmidt-stats\"\nsizes = [6]\nrealizations = 16\neigenpairs = 8\nstore_spectra = false",
        ),
        1,
    );
    let fit = config(dir.path(), "g", &format!("kind = \"gev-fit\"\ninput = [\"{}\"]", out.display()));
    let (summary, _) = run_experiment(&ExperimentConfig::load(&fit).unwrap(), 1).unwrap();
    let g = &summary.schmidt[0];
    assert_eq!(g.count, 128);
    let gev = g.gev.as_ref().expect("fit with 128 samples");
    assert!(gev.beta > 0.0 && gev.xi.is_finite());
}

#[test]
fn aggregation_is_order_independent() {
    let dir = tempfile::tempdir().unwrap();
    let body = |seed| format!("kind = \"eth\"\nsizes = [6, 8]\nrealizations = 2\neigenpairs = 8\nseed = {seed}");
    let a = run(&config(dir.path(), "e1", &body(1)), 1).join("eth.csv");
    let b = run(&config(dir.path(), "e2", &body(2)), 1).join("eth.csv");
    let ab = summarize(&Dataset::load(&[a.clone(), b.clone()]).unwrap(), 20).unwrap();
    let ba = summarize(&Dataset::load(&[b.clone(), a.clone()]).unwrap(), 20).unwrap();
    assert_eq!(ab, ba);
    // A single file holding both runs' rows summarizes identically.
    let mut rows: Vec<EthRow> = read_records(&a).unwrap();
    rows.extend(read_records::<EthRow>(&b).unwrap());
    let merged = dir.path().join("merged");
    std::fs::create_dir(&merged).unwrap();
    let mut sink = kfim_cli::records::CsvSink::create::<EthRow>(&merged).unwrap();
    sink.append(&rows).unwrap();
    let m = summarize(&Dataset::load(&[merged.join("eth.csv")]).unwrap(), 20).unwrap();
    assert_eq!(ab, m);
    assert_eq!(ab.eth.iter().map(|p| p.realizations).sum::<usize>(), 8);
}

#[test]
fn aggregate_rejects_empty_and_mismatched_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let o = kfim().arg("aggregate").arg(&empty).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no rows"));

    let bad = dir.path().join("otoc.csv");
    std::fs::write(&bad, "model,l,realization,seed,t,otoc\nkfim,6,0,1,0,0\n").unwrap();
    let o = kfim().arg("aggregate").arg(&bad).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("`otoc`"));

    let unknown = dir.path().join("notes.csv");
    std::fs::write(&unknown, "a,b\n1,2\n").unwrap();
    let o = kfim().arg("aggregate").arg(&unknown).output().unwrap();
    assert!(!o.status.success());
}

#[test]
fn run_rejects_invalid_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = config(dir.path(), "bad", "kind = \"schmidt-stats\"\nsizes = [7]");
    let o = kfim().arg("run").arg(&path).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("even"));
}

fn plot(summary: &Path, kind: &str, extra: &[&str]) -> String {
    let o = kfim().arg("plot-data").arg(summary).args(["--kind", kind]).args(extra).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn header(table: &str) -> &str {
    let mut lines = table.lines();
    assert!(lines.next().unwrap().starts_with("# "));
    lines.next().unwrap()
}

#[test]
fn plot_data_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "s",
        "kind = \"schmidt-stats\"\nsizes = [6, 8]\nrealizations = 4\neigenpairs = 8\nbins = 10",
    );
    let o = kfim().arg("run").arg(&cfg).env("KFIM_WORKERS", "1").output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = dir.path().join("s/summary.json");

    let mp = plot(&summary, "mp-density", &["--l", "8"]);
    assert_eq!(header(&mp), "e_tilde,density_model,density_mp");
    assert_eq!(mp.lines().count(), 12);

    let r = plot(&summary, "R-vs-L", &[]);
    assert_eq!(header(&r), "L,R,err");
    let ls: Vec<&str> = r.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ls, ["6", "8"]);

    // Several groups and no selection is an error that names the choices.
    let o = kfim().arg("plot-data").arg(&summary).args(["--kind", "mp-density"]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--model/--l"));

    let ac = config(dir.path(), "a", "kind = \"autocorr\"\nsizes = [6]\nrealizations = 2\nt_max = 5");
    let o = kfim().arg("run").arg(&ac).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = plot(&dir.path().join("a/summary.json"), "autocorr", &[]);
    assert_eq!(header(&t), "t,mean_abs_c,stderr");
    assert_eq!(t.lines().count(), 2 + 6);
    let c0: f64 = t.lines().nth(2).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((c0 - 1.0).abs() < 1e-12);
}
