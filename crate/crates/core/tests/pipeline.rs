use awsteer_core::scenario::{compute_metrics, run_scenario, Config, Table, PRESETS};

#[test]
fn config_file_run_export_and_metrics_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("avoid.toml");
    std::fs::write(&path, "[scenario]\npreset = \"avoidance\"\nname = \"short\"\n[sim]\nT = 2.0\n").unwrap();
    let cfg = Config::load(&path).unwrap();
    assert_eq!(cfg.scenario.seed, Some(3));
    assert_eq!(cfg.sim.horizon, 2.0);

    let result = run_scenario(&cfg.scenario()).unwrap();
    let files = result.write(dir.path()).unwrap();
    let series = Table::read(&files.series).unwrap();
    let reference = Table::read(&files.reference).unwrap();
    assert_eq!(series.rows.len(), 2001);
    let m = compute_metrics(&series, &reference).unwrap();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs());
    assert!(close(m.rms_y, result.metrics.rms_y) && close(m.max_y, result.metrics.max_y));
    assert!(close(m.rms_psi, result.metrics.rms_psi) && close(m.max_psi, result.metrics.max_psi));
    assert!(m.max_y >= m.rms_y && m.rms_y >= 0.0);

    let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.metrics).unwrap()).unwrap();
    assert!(close(sidecar["rms_y"].as_f64().unwrap(), m.rms_y));
}

#[test]
fn presets_serialise_and_reload_unchanged() {
    for name in PRESETS {
        let cfg = Config::preset(name).unwrap();
        let again = Config::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again, "{name}");
    }
}
