use std::path::Path;

use snrlab_core::config::Config;
use snrlab_core::experiment;
use snrlab_core::Error;

fn config(dir: &Path, name: &str, body: &str) -> Config {
    Config::parse(&format!("output.root = \"{}\"\n{body}", dir.display()), name, dir).unwrap()
}

#[test]
fn forward_vs_reverse_ordering_agrees_across_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut signs = Vec::new();
    for seed in [16, 42, 99] {
        let body = format!(
            "experiment.name = \"forward-vs-reverse\"\nschedule.T = 50\ndiagnostics.n = 400\ndenoiser.kind = \"biased\"\ndenoiser.gamma = 0.9\ndenoiser.phi = 0.1\nrun.seed = {seed}\n"
        );
        let cfg = config(dir.path(), &format!("fvr{seed}"), &body);
        experiment::run_experiment(&cfg, None).unwrap();
        let csv = std::fs::read_to_string(cfg.output_dir().join("norms.csv")).unwrap();
        let gap: f64 = csv
            .lines()
            .skip(1)
            .map(|l| {
                let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
                v[2] - v[1]
            })
            .sum();
        signs.push(gap.signum());
        let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(cfg.output_dir().join("report.json")).unwrap()).unwrap();
        assert!(report["metrics"]["dominance_fraction"]["value"].is_number());
        assert_eq!(report["seeds"]["run.seed"], seed);
    }
    assert!(signs.iter().all(|s| *s == signs[0]), "{signs:?}");
}

#[test]
fn invalid_key_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("out");
    let text = format!("output.root = \"{}\"\ncorection.mode = \"DC\"\n", root.display());
    match Config::parse(&text, "typo", dir.path()) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "corection.mode"),
        other => panic!("expected a config error, got {other:?}"),
    }
    assert!(!root.exists());
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let body = "experiment.name = \"recon-norms\"\nschedule.T = 30\ndiagnostics.n = 100\n";
    let cfg = config(dir.path(), "rr", body);
    let a = experiment::run_experiment(&cfg, Some(1)).unwrap();
    let first = experiment::read_csv_outputs(&cfg.output_dir(), &a).unwrap();
    let b = experiment::run_experiment(&cfg, Some(3)).unwrap();
    assert_eq!(first, experiment::read_csv_outputs(&cfg.output_dir(), &b).unwrap());
    let manifest = std::fs::read_to_string(cfg.output_dir().join("manifest.json")).unwrap();
    assert!(manifest.contains("recon_norms.csv") && manifest.contains("sha256"));
}
