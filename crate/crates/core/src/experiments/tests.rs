use super::output::split_csv_manifest;
use super::*;

fn quick_synthetic() -> SyntheticConfig {
    SyntheticConfig {
        t_end: 2.0,
        dt: 1e-2,
        record_every: 1,
        check_resolution: 20,
        initial_state: vec![0.0, 0.0],
        kernel: KernelConfig {
            optimize: false,
            ..KernelConfig::default()
        },
        ..SyntheticConfig::default()
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let err = ExperimentConfig::from_toml("seed = 1\nsede = 2\n").unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let err = ExperimentConfig::from_toml("[synthetic]\nk_c = 2.0\nkc = 1.0\n").unwrap_err();
    assert!(err.to_string().contains("kc"), "{err}");
}

#[test]
fn partial_sections_take_defaults() {
    let cfg = ExperimentConfig::from_toml("seed = 7\n[synthetic]\nk_c = 3.0\n").unwrap();
    let s = cfg.synthetic.unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(s.k_c, 3.0);
    assert_eq!(s.training_counts, vec![9, 9]);
    assert_eq!(s.tau, 1e-8);
}

#[test]
fn validation_catches_bad_values() {
    for text in [
        "[synthetic]\ndelta = 1.0\n",
        "[synthetic]\ndelta_l = 0.0\n",
        "[synthetic]\ntau = -1.0\n",
        "[synthetic]\ntraining_counts = [9, 0]\n",
        "[synthetic]\ninitial_state = [1.0]\n",
        "[robot]\ndomain_lower = [0.0, 0.0]\ndomain_upper = [1.0, 1.0]\n",
        "[asymptotics]\nschedule = []\n",
        "[asymptotics]\nschedule = [100, 25]\n",
        "[certify]\ndomain_lower = [1.0]\ndomain_upper = [0.0]\n",
        "[lipschitz]\ndelta_l = 2.0\n",
        "[plots]\nwidth = 10\n",
    ] {
        assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
    }
}

#[test]
fn config_round_trips_and_hash_is_stable() {
    let cfg = repro_config(Command::ReproSynthetic, 3).unwrap();
    let text = cfg.to_toml().unwrap();
    let back = ExperimentConfig::from_toml(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    assert_eq!(cfg.hash().unwrap().len(), 64);
    let other = repro_config(Command::ReproSynthetic, 4).unwrap();
    assert_ne!(other.hash().unwrap(), cfg.hash().unwrap());
    assert!(repro_config(Command::Fit, 0).is_err());
}

#[test]
fn truth_constants_match_finite_differences() {
    for truth in [Truth::SinCos, Truth::Zero] {
        for d in 1..=3 {
            let mut max_val = 0.0_f64;
            let mut max_slope = 0.0_f64;
            let h = 1e-6;
            for k in 0..2000 {
                let x: Vec<f64> = (0..d).map(|i| ((k * 7 + i * 13) % 101) as f64 / 101.0 * 6.0 - 3.0).collect();
                max_val = max_val.max(truth.eval(&x).abs());
                let g: Vec<f64> = (0..d)
                    .map(|i| {
                        let mut y = x.clone();
                        y[i] += h;
                        (truth.eval(&y) - truth.eval(&x)) / h
                    })
                    .collect();
                max_slope = max_slope.max(crate::scalar::norm(&g));
            }
            assert!(max_val <= truth.sup_abs(d) + 1e-12);
            assert!(max_slope <= truth.lipschitz(d) + 1e-4);
        }
    }
}

#[test]
fn training_grid_is_the_configured_size() {
    let ds = synthetic_training_data(&SyntheticConfig::default(), 0).unwrap();
    assert_eq!(ds.len(), 81);
    let p = ds.point(0);
    assert_eq!(p, &[0.0, -3.0]);
    assert_eq!(ds.point(80), &[3.0, 3.0]);
}

#[test]
fn default_robot_setup_matches_its_config() {
    let s = default_robot_setup(1).unwrap();
    assert_eq!(s.training_counts.iter().product::<usize>(), 81);
    assert_eq!(s.gains.k_c(), 7.0);
    assert_eq!(s.domain.upper(), &[std::f64::consts::PI; 4]);
    assert_eq!(s.seed, 1);
}

#[test]
fn artifacts_carry_manifests_and_rerun_identically() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        seed: 11,
        synthetic: Some(quick_synthetic()),
        ..ExperimentConfig::default()
    };
    let run_into = |name: &str| {
        let opts = RunOptions::new(dir.path().join(name));
        run(Command::Simulate, &config, &opts).unwrap()
    };
    let a = run_into("a");
    let b = run_into("b");
    assert_eq!(a.files.len(), b.files.len());
    let hash = config.hash().unwrap();
    for (fa, fb) in a.files.iter().zip(&b.files) {
        let ta = std::fs::read(fa).unwrap();
        assert_eq!(ta, std::fs::read(fb).unwrap(), "{}", fa.display());
        let text = String::from_utf8(ta).unwrap();
        let name = fa.file_name().unwrap().to_str().unwrap();
        if name.ends_with(".csv") {
            let (manifest, body) = split_csv_manifest(&text);
            assert!(manifest.contains(&format!("config_hash: {hash}").as_str()), "{name}");
            assert!(manifest.contains(&"seed: 11"));
            assert!(!body.starts_with('#'));
        } else if name.ends_with(".toml") {
            assert!(text.starts_with("# tool: gp-bounds"), "{name}");
            assert!(text.contains("[manifest]"), "{name}");
            assert!(text.contains(&hash));
        } else if name.ends_with(".svg") {
            assert!(text.starts_with("<!--"));
            assert!(text.contains(&hash));
        }
    }
    let names: Vec<_> = a.files.iter().map(|f| f.file_name().unwrap().to_str().unwrap().to_string()).collect();
    for expected in ["certificate.toml", "trace.csv", "bound_grid.csv", "bound_surface.svg", "error_vs_bound.svg"] {
        assert!(names.iter().any(|n| n == expected), "{expected} missing");
    }

    let record_text = std::fs::read_to_string(dir.path().join("a/certificate.toml")).unwrap();
    let table: toml::Table = record_text.parse().unwrap();
    assert_eq!(table["tau"].as_float(), Some(1e-8));
    assert_eq!(table["delta"].as_float(), Some(0.01));
    assert_eq!(table["provenance"]["f_lipschitz"].as_str(), Some("probabilistic"));
    let config_text = std::fs::read_to_string(dir.path().join("a/config.toml")).unwrap();
    let echoed: toml::Table = config_text.parse().unwrap();
    assert_eq!(echoed["synthetic"]["k_c"].as_float(), Some(2.0));
    assert_eq!(echoed["synthetic"]["lambda"].as_float(), Some(1.0));
}

#[test]
fn no_plots_skips_svg() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        synthetic: Some(quick_synthetic()),
        ..ExperimentConfig::default()
    };
    let mut opts = RunOptions::new(dir.path());
    opts.plots = false;
    let summary = run(Command::Simulate, &config, &opts).unwrap();
    assert!(summary.files.iter().all(|f| f.extension().unwrap() != "svg"));
}

#[test]
fn empty_schedule_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("asym");
    let config = ExperimentConfig {
        asymptotics: Some(AsymptoticsConfig {
            schedule: vec![],
            ..AsymptoticsConfig::default()
        }),
        ..ExperimentConfig::default()
    };
    let err = run(Command::Asymptotics, &config, &RunOptions::new(&out)).unwrap_err();
    assert!(err.to_string().contains("config"), "{err}");
    assert!(!out.exists());
}

#[test]
fn small_asymptotics_run_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        asymptotics: Some(AsymptoticsConfig {
            schedule: vec![9, 25, 49],
            eval_points_per_dim: 30,
            ..AsymptoticsConfig::default()
        }),
        ..ExperimentConfig::default()
    };
    let summary = run(Command::Asymptotics, &config, &RunOptions::new(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("asymptotics.csv")).unwrap();
    let (_, body) = split_csv_manifest(&text);
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("N,sup_error,bound,beta_N,gamma_N,max_sigma"));
    assert_eq!(lines.count(), 3);
    assert!(summary.checks.iter().any(|c| c.name == "sup error below bound" && c.passed));
}

#[test]
fn fit_certify_and_lipschitz_commands() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthetic_training_data(&SyntheticConfig::default(), 2).unwrap();
    write_plain_dataset(&ds, &dir.path().join("data.csv")).unwrap();
    let text = r#"
seed = 5
[fit]
data = "data.csv"
noise_variance = 0.01
kernel = { lengthscales = [1.0, 1.0], starts = 2 }
[certify]
data = "data.csv"
domain_lower = [-6.0, -4.0]
domain_upper = [4.0, 4.0]
kernel = { optimize = false, lengthscales = [1.0] }
f_lipschitz = 3.0
[lipschitz]
domain_lower = [-6.0, -4.0]
domain_upper = [4.0, 4.0]
"#;
    let config = ExperimentConfig::from_toml(text).unwrap();
    let mut opts = RunOptions::new(dir.path().join("out"));
    opts.base_dir = Some(dir.path().to_path_buf());

    run(Command::Fit, &config, &opts).unwrap();
    let fit: toml::Table = std::fs::read_to_string(dir.path().join("out/fit.toml")).unwrap().parse().unwrap();
    assert_eq!(fit["n_train"].as_integer(), Some(81));
    assert!(fit["log_marginal_likelihood"].as_float().unwrap() >= fit["initial_log_marginal_likelihood"].as_float().unwrap());

    run(Command::Certify, &config, &opts).unwrap();
    let text = std::fs::read_to_string(dir.path().join("out/certificate.toml")).unwrap();
    let record: toml::Table = text.parse().unwrap();
    assert_eq!(record["f_lipschitz"].as_float(), Some(3.0));
    assert_eq!(record["provenance"]["f_lipschitz"].as_str(), Some("supplied"));

    run(Command::Lipschitz, &config, &opts).unwrap();
    let lip: toml::Table = std::fs::read_to_string(dir.path().join("out/lipschitz.toml")).unwrap().parse().unwrap();
    assert!(lip["value"].as_float().unwrap() > 0.0);

    let missing = ExperimentConfig::default();
    let err = run(Command::Fit, &missing, &opts).unwrap_err();
    assert!(err.to_string().contains("config"), "{err}");
}
