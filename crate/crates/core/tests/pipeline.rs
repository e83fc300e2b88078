use std::fs;
use std::path::{Path, PathBuf};

use loadscale::experiment::{
    read_metrics, report, run_experiment, stage_fit, stage_forecast, stage_groups, stage_synth,
    CsvSource, DataSource, Experiment, ExperimentConfig, FitConfig, ForecastConfig, GroupConfig,
    SynthSource, DATA_FILE, FAILED_FILE, FITS_FILE, METRICS_FILE,
};
use loadscale::grouping::sample_groups;
use loadscale::synth::{synth_population, DeviationModel, ProfileParams};
use proptest::prelude::*;

fn small(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(seed);
    cfg.data = DataSource::Synth(SynthSource {
        customers: 40,
        days: 12,
        ..SynthSource::default()
    });
    cfg.groups = GroupConfig {
        sizes: vec![1, 2, 5, 10, 20, 40],
        replicates: 4,
    };
    cfg.forecast = ForecastConfig {
        window: 96,
        ..ForecastConfig::default()
    };
    cfg.fit = FitConfig {
        bootstrap: 100,
        ..FitConfig::default()
    };
    cfg
}

fn exp(cfg: ExperimentConfig) -> Experiment {
    Experiment::new(cfg).unwrap()
}

#[test]
fn staged_pipeline_equals_one_shot() {
    let dir = tempfile::tempdir().unwrap();
    let e = exp(small(3));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    stage_groups(&e, &a).unwrap();
    stage_forecast(&e, &a).unwrap();
    let staged = stage_fit(&e, &a).unwrap();
    let once = run_experiment(&e, &b).unwrap();
    assert_eq!(staged, once);
    for f in fs::read_dir(&b).unwrap() {
        let name = f.unwrap().file_name();
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn synthetic_csv_reingests_to_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let synth = exp(small(4));
    stage_synth(&synth, dir.path()).unwrap();
    let direct = synth.run().unwrap();

    let mut cfg = small(4);
    cfg.data = DataSource::Csv(CsvSource {
        path: dir.path().join(DATA_FILE),
        columns: Default::default(),
    });
    let via_csv = exp(cfg).run().unwrap();
    assert_eq!(direct.metrics.len(), via_csv.metrics.len());
    for (x, y) in direct.metrics.iter().zip(&via_csv.metrics) {
        assert_eq!(x.group_id, y.group_id);
        assert!(
            (x.mape - y.mape).abs() <= 1e-6 * x.mape.max(1.0),
            "{} {} {}",
            x.group_id,
            x.mape,
            y.mape
        );
        assert!((x.w - y.w).abs() <= 1e-9 * x.w);
    }
}

#[test]
fn report_rejects_mixed_configs_and_ranks_by_saturation() {
    let dir = tempfile::tempdir().unwrap();
    let e = exp(small(5));
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    run_experiment(&e, &a).unwrap();
    run_experiment(&e, &b).unwrap();
    run_experiment(&exp(small(6)), &c).unwrap();

    let (hash, rows) = report(&[a.clone(), b.join(FITS_FILE)]).unwrap();
    assert_eq!(hash, e.hash);
    assert_eq!(
        rows.len(),
        2 * e.config.forecasters.len() * e.config.metrics.len()
    );
    assert!(rows
        .windows(2)
        .all(|w| w[0].fit.sqrt_alpha1 <= w[1].fit.sqrt_alpha1));

    let err = report(&[a, c]).unwrap_err().to_string();
    assert!(err.contains("config"), "{err}");
    assert!(report(&[] as &[PathBuf]).is_err());
}

#[test]
fn failed_stage_leaves_marker_and_success_clears_it() {
    let dir = tempfile::tempdir().unwrap();
    let out: &Path = dir.path();
    let e = exp(small(7));
    assert!(stage_fit(&e, out).is_err());
    assert!(out.join(FAILED_FILE).exists());
    run_experiment(&e, out).unwrap();
    assert!(!out.join(FAILED_FILE).exists());
    let rows = read_metrics(&out.join(METRICS_FILE), Some(&e.hash)).unwrap();
    assert!(read_metrics(&out.join(METRICS_FILE), Some("other")).is_err());
    assert_eq!(rows.len(), 6 * 4 * 2);
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small(8);
    let text = cfg.to_toml_string().unwrap();
    let back = ExperimentConfig::from_toml_str(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    let mut moved = cfg.clone();
    moved.out = Some("elsewhere".into());
    moved.threads = Some(3);
    assert_eq!(moved.hash(), cfg.hash());
    moved.seed += 1;
    assert_ne!(moved.hash(), cfg.hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn groups_are_distinct_members_with_additive_load(seed in any::<u64>(), n in 5usize..30) {
        let dev = DeviationModel::uncorrelated(0.1).unwrap();
        let data = synth_population(n, 2, &ProfileParams::default(), &dev, seed).unwrap().dataset;
        let sizes = [1, 2, n];
        let groups = sample_groups(&data, &sizes, 3, seed).unwrap();
        prop_assert_eq!(groups.len(), 9);
        let min_mean = data
            .customers()
            .iter()
            .map(|c| c.mean_w)
            .fold(f64::INFINITY, f64::min);
        for g in &groups {
            let mut m = g.members.clone();
            m.sort_unstable();
            m.dedup();
            prop_assert_eq!(m.len(), g.size());
            prop_assert!(m.iter().all(|&i| i < n));
            let total: f64 = g.members.iter().map(|&i| data.customers()[i].mean_w).sum();
            prop_assert!((total - g.mean_w).abs() <= 1e-9 * total);
            prop_assert!(g.mean_w >= g.size() as f64 * min_mean - 1e-12);
        }
    }
}
