mod common;

use std::collections::BTreeMap;

use spaceprofiler::error::Error;
use spaceprofiler::metrics::adjusted_rand_index;
use spaceprofiler::pipeline::{
    execute, run_pipeline, Report, Status, AUDIT_DIR, AUDIT_FILES, REPORT_FILE, STATUS_FILE, VERDICTS_FILE,
};
use spaceprofiler::plots::{emit_plots, plot_files};
use spaceprofiler::profiling::DayType;
use spaceprofiler::spectral::{degree, embed, laplacian, AffinityMatrix, Weights};
use spaceprofiler::synth::synth_generate;

use common::{jacobi_eigenvalues, planted_affinity, short_fixture, write_fixture};

fn status(dir: &std::path::Path) -> Status {
    serde_json::from_str(&std::fs::read_to_string(dir.join(STATUS_FILE)).unwrap()).unwrap()
}

#[test]
fn short_fixture_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = short_fixture(7);
    let (data, run_cfg) = write_fixture(&tmp.path().join("in"), &cfg);
    let out = tmp.path().join("out");
    let run = run_pipeline(&run_cfg, &out).unwrap();

    let ks: Vec<usize> = DayType::ALL.iter().map(|d| run.report.day_types[d].k).collect();
    assert_eq!(ks, vec![5, 4, 5]);
    for day in DayType::ALL {
        let model = &run.models[&day];
        let ari = adjusted_rand_index(&model.assignment_vec(), &data.truth_labels(day));
        assert!(ari >= 0.9, "{day}: ARI {ari}");
    }
    assert_eq!(status(&out).status, "complete");
    for f in plot_files() {
        assert!(out.join(&f).is_file(), "missing {f}");
    }
    for day in DayType::ALL {
        for f in AUDIT_FILES {
            assert!(out.join(AUDIT_DIR).join(day.as_str()).join(f).is_file(), "missing {day}/{f}");
        }
    }
    let verdicts = std::fs::read_to_string(out.join(VERDICTS_FILE)).unwrap();
    assert!(verdicts.starts_with("sensor_id,poi_type,cat_wd,cat_we,cat_sh,verdict\n"));
    assert_eq!(verdicts.lines().count(), 48);

    // the two quietest archetypes merge on weekends and category 2 stays empty
    let weekend = &run.report.day_types[&DayType::Weekend];
    assert!(weekend.clusters.iter().all(|c| c.category != 2));
    let grid = std::fs::read_to_string(out.join("plots/category_grid.svg")).unwrap();
    assert!(grid.contains("Category 2"));
}

#[test]
fn report_bytes_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, run_cfg) = write_fixture(&tmp.path().join("in"), &short_fixture(3));
    run_pipeline(&run_cfg, &tmp.path().join("a")).unwrap();
    run_pipeline(&run_cfg, &tmp.path().join("b")).unwrap();
    let a = std::fs::read(tmp.path().join("a").join(REPORT_FILE)).unwrap();
    let b = std::fs::read(tmp.path().join("b").join(REPORT_FILE)).unwrap();
    assert_eq!(a, b);
    for f in plot_files() {
        assert_eq!(
            std::fs::read(tmp.path().join("a").join(&f)).unwrap(),
            std::fs::read(tmp.path().join("b").join(&f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn reloaded_config_gives_the_same_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, mut run_cfg) = write_fixture(&tmp.path().join("in"), &short_fixture(5));
    run_cfg.weights = Weights { w1: 0.4, w2: 0.6 };
    run_cfg.significance_margin = 0.02;
    let path = tmp.path().join("cfg.toml");
    std::fs::write(&path, run_cfg.to_toml()).unwrap();
    let reloaded = spaceprofiler::config::PipelineConfig::load(&path).unwrap();
    assert_eq!(reloaded, run_cfg);
    let a = execute(&run_cfg).unwrap().report.to_json().unwrap();
    let b = execute(&reloaded).unwrap().report.to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_static_file_is_named_and_flagged() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, mut run_cfg) = write_fixture(&tmp.path().join("in"), &short_fixture(1));
    let missing = tmp.path().join("in").join("nowhere.csv");
    run_cfg.input.static_features = missing.clone();
    let out = tmp.path().join("out");
    let err = run_pipeline(&run_cfg, &out).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains(&missing.display().to_string()));
    let s = status(&out);
    assert_eq!(s.status, "failed");
    assert!(s.error.unwrap().contains("nowhere.csv"));
    assert!(!out.join(REPORT_FILE).exists());
}

#[test]
fn sparse_sensor_is_excluded_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = short_fixture(9);
    let mut sparse = cfg.archetypes[0].clone();
    sparse.name = "sparse".into();
    sparse.dropout_rate = 0.95;
    cfg.archetypes.push(sparse);
    cfg.sensors_per_archetype.push(1);
    let (_, run_cfg) = write_fixture(&tmp.path().join("in"), &cfg);
    let run = execute(&run_cfg).unwrap();
    assert_eq!(run.report.sensors.total, 48);
    assert_eq!(run.report.sensors.excluded, vec!["s48".to_string()]);
    assert_eq!(run.static_table.rows.len(), 47);
    assert!(run.report.verdicts.iter().all(|v| v.sensor_id != "s48"));
    let compared: usize = run.report.static_comparison.types.iter().map(|t| t.n_active + t.n_less_active).sum();
    assert_eq!(compared, 47);
}

#[test]
fn plots_need_a_complete_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    match emit_plots(tmp.path()) {
        Err(Error::MissingArtifacts(list)) => {
            assert!(list.contains(&"report.json".to_string()));
            assert!(list.contains(&"profiles.csv".to_string()));
        }
        other => panic!("unexpected {other:?}"),
    }

    let (_, run_cfg) = write_fixture(&tmp.path().join("in"), &short_fixture(2));
    let out = tmp.path().join("out");
    run_pipeline(&run_cfg, &out).unwrap();
    let mut report = Report::load(&out.join(REPORT_FILE)).unwrap();
    report.day_types.get_mut(&DayType::Weekend).unwrap().clusters.clear();
    std::fs::write(out.join(REPORT_FILE), report.to_json().unwrap()).unwrap();
    match emit_plots(&out) {
        Err(Error::MissingArtifacts(list)) => assert_eq!(list, vec!["clusters for weekend".to_string()]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn synthetic_weekend_has_four_planted_groups() {
    let data = synth_generate(&short_fixture(4)).unwrap();
    let count = |d| data.truth_labels(d).into_iter().max().unwrap() + 1;
    assert_eq!(count(DayType::Weekday), 5);
    assert_eq!(count(DayType::Weekend), 4);
    assert_eq!(count(DayType::SchoolHoliday), 5);
    let per_archetype: BTreeMap<String, usize> = data.truth.iter().fold(BTreeMap::new(), |mut m, t| {
        *m.entry(t.archetype.clone()).or_default() += 1;
        m
    });
    assert_eq!(per_archetype.values().sum::<usize>(), 47);
}

#[test]
fn eigenvalues_agree_with_jacobi_oracle() {
    let mut rng = common::rng(17);
    for trial in 0..10 {
        let n = 5 + trial * 3;
        let (m, _) = planted_affinity(&mut rng, n, 1 + trial % 3);
        let a = AffinityMatrix { ids: (0..n).map(|i| format!("s{i}")).collect(), values: m, weights: Weights::default() };
        let d = degree(&a).unwrap();
        let l = laplacian(&a, &d).unwrap();
        let ours = embed(&l, &d, n).unwrap().eigenvalues;
        let oracle = jacobi_eigenvalues(&l);
        for (x, y) in ours.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-9, "n = {n}: {x} vs {y}");
        }
    }
}
