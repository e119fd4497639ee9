use sector_xeb::emit::csv_string;
use sector_xeb::experiment::SweepRow;
use sector_xeb::{run, ExperimentConfig, ExperimentResult, Overrides};

fn run_with(text: &str, threads: usize) -> ExperimentResult {
    let cfg = ExperimentConfig::from_toml(text).unwrap();
    let resolved = cfg.resolve(&Overrides { threads: Some(threads), ..Default::default() }).unwrap();
    run(&resolved).unwrap()
}

const NOISY: &str = r#"
mode = "noise-sweep"
seed = 5
[lattice]
rows = 3
cols = 4
n = 2
[circuit]
depths = [8, 16]
[noise]
rates = [0.0, 0.01]
n_max = [3, 12]
[sampling]
instances = 3
samples = 2000
"#;

#[test]
fn noisy_tables_do_not_depend_on_thread_count() {
    let one = run_with(NOISY, 1);
    let three = run_with(NOISY, 3);
    assert_eq!(csv_string(&one.rows).unwrap(), csv_string(&three.rows).unwrap());
    assert_eq!(csv_string(&one.instances).unwrap(), csv_string(&three.instances).unwrap());
}

#[test]
fn noise_sweep_rows_cover_every_combination() {
    let r = run_with(NOISY, 1);
    assert_eq!(r.rows.len(), 2 * 2 * 2);
    assert_eq!(r.instances.len(), 2 * 2 * 2 * 3);
    for row in &r.rows {
        assert_eq!(row.samples, 3 * 2000);
        assert!(row.n_s <= row.samples);
        if row.p_noise == 0.0 {
            // Noiseless trajectories keep the full state in the sector.
            assert_eq!(row.n_s, row.samples);
            assert!((row.f_true - 1.0).abs() < 1e-12);
        } else {
            assert!(row.f_true < 1.0 && row.f_true > 0.0);
            assert!(row.f_pred < 1.0);
        }
    }
}

#[test]
fn empty_rate_list_gives_header_only_tables() {
    let text = NOISY.replace("rates = [0.0, 0.01]", "rates = []");
    let r = run_with(&text, 1);
    assert!(r.rows.is_empty());
    assert_eq!(csv_string(&r.rows).unwrap().lines().count(), 1);
    let dir = tempfile::tempdir().unwrap();
    sector_xeb::emit(&r, dir.path()).unwrap();
    let results = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().collect::<Vec<_>>(), vec![<SweepRow as sector_xeb::emit::Record>::HEADER.join(",")]);
}

#[test]
fn pruned_and_full_sampling_agree_statistically() {
    let base = r#"
mode = "noise-sweep"
seed = 9
[lattice]
rows = 3
cols = 3
n = 2
[circuit]
depths = [12]
[noise]
rates = [0.02]
n_max = [9]
[sampling]
instances = 2
samples = 6000
"#;
    let pruned = run_with(base, 1);
    let full = run_with(&format!("{base}dump = true\n"), 1);
    let (a, b) = (&pruned.rows[0], &full.rows[0]);
    // Both use the same trajectories, so the true fidelity is shared.
    assert_eq!(a.f_true, b.f_true);
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.f_mlxeb - b.f_mlxeb).abs() < 4.0 * se, "{} vs {} (se {se})", a.f_mlxeb, b.f_mlxeb);
    assert_eq!(full.samples.len(), 2 * 6000);
    let in_sector = full.samples.iter().filter(|s| s.sector == Some(2)).count();
    assert_eq!(in_sector, b.n_s);
}

#[test]
fn fidelity_check_agrees_with_the_density_matrix() {
    let r = run_with(
        r#"
mode = "fidelity-check"
seed = 3
[lattice]
rows = 2
cols = 3
n = 2
[circuit]
depths = [10]
[noise]
rates = [0.01, 0.05]
[sampling]
instances = 2
samples = 4000
"#,
        1,
    );
    assert_eq!(r.checks.len(), 2 * 2);
    for c in &r.checks {
        assert!(c.z.abs() < 4.0, "instance {} p {}: z = {}", c.instance, c.p_noise, c.z);
        assert!(c.f_exact > 0.0 && c.f_exact < 1.0);
    }
}

#[test]
fn collapse_reports_the_fit_and_exclusions() {
    let r = run_with(
        r#"
mode = "collapse"
seed = 4
[lattice]
rows = 3
cols = 3
n = 1
[circuit]
depths = [0, 2, 4, 6, 8, 12, 16]
[sampling]
instances = 2
samples = 3000
[collapse]
offset = 0.3
[[collapse.systems]]
rows = 3
cols = 3
n = 1
[[collapse.systems]]
rows = 3
cols = 3
n = 2
"#,
        1,
    );
    let fit = r.fit.as_ref().expect("collapse produces a fit");
    assert_eq!(fit.a, 0.3);
    assert!(fit.tau > 0.0 && fit.beta > 0.0);
    assert_eq!(fit.points_used + fit.points_excluded, r.collapse_rows.len());
    // Depth zero maps to exactly one and cannot enter the log-log fit.
    assert!(fit.points_excluded >= 2);
    let json: serde_json::Value = serde_json::from_str(&sector_xeb::emit::summary_json(&r)).unwrap();
    for key in ["tau", "beta", "a", "points_excluded"] {
        assert!(json["fit"].get(key).is_some(), "summary lacks fit.{key}");
    }
}

#[test]
fn pt_hist_reports_both_distances() {
    let r = run_with(
        r#"
mode = "pt-hist"
seed = 8
[lattice]
rows = 4
cols = 4
n = 3
[circuit]
depths = [40]
[sampling]
instances = 4
samples = 1
"#,
        1,
    );
    let pt = &r.pt[0];
    assert_eq!((pt.dim, pt.instances), (560, 4));
    assert!(pt.ks < 0.05 && pt.pooled_ks < 0.05, "{pt:?}");
    let mass: f64 = r.pt_bins.iter().map(|b| b.density * (b.bin_hi - b.bin_lo)).sum();
    assert!((mass - 1.0).abs() < 1e-9, "histogram mass {mass}");
}

#[test]
fn shipped_presets_are_valid() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap();
            cfg.resolve(&Overrides::default()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 6);
}
