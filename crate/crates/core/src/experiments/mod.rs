//! Experiment runners behind the command-line tool.
//!
//! Each runner validates its configuration, computes, and then writes
//! manifest-stamped CSV, TOML and SVG artifacts into one directory.
//!
//! CSV layouts (artifact version 1):
//!
//! | file | columns |
//! |------|---------|
//! | `training.csv`, `training_joint_<j>.csv` | `x_1..x_d, y` |
//! | `trace.csv` | `t, x_1..x_n, u_1..u_m, err_norm, err_norm_1..err_norm_m, r_1..r_m, bound_radius_1..bound_radius_m` |
//! | `bound_grid.csv` | `x_1, x_2, f, mean, sigma, eta, abs_error` |
//! | `task_space.csv` | `t, p_1, p_2, box_lo_1, box_lo_2, box_hi_1, box_hi_2, inside` |
//! | `asymptotics.csv` | `N, sup_error, bound, beta_N, gamma_N, max_sigma` |

pub mod config;
pub mod output;
pub mod plot;

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bounds::{
    asymptotic_harness, certify, decay_slope, AsymptoticRow, CertificateConstants, CertificateRecord, ConstantProvenance,
    ErrorCertificate, HarnessConfig,
};
use crate::control::{
    end_effector_box, lyapunov_violations, simulate, ultimate_bound_radius, Containment, ControllerGains,
    FeedbackLinearizing, GpModel, LyapunovReport, Reference, RobotOutcome, RobotSetup, SimulationOptions,
    SimulationTrace, SinusoidalReference, SyntheticPlant, TwoLinkArm,
};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::gp::{fit, fit_hyperparameters, read_dataset_csv, write_dataset_csv, Dataset, HyperparameterOptions, Posterior};
use crate::kernels::{kernel_constants, KernelConstants, SeArdKernel};
use crate::lipschitz::{probabilistic_lipschitz, LipschitzEstimate};

pub use config::{
    AsymptoticsConfig, CertifyConfig, ExperimentConfig, FitConfig, KernelConfig, LipschitzConfig, PlotConfig,
    RobotConfig, SyntheticConfig, Truth,
};
pub use output::{ArtifactWriter, Manifest, ARTIFACT_VERSION};

/// Subcommands of the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Fit,
    Certify,
    Lipschitz,
    Simulate,
    Asymptotics,
    /// Synthetic tracking experiment with fixed constants.
    ReproSynthetic,
    /// Two-link arm experiment with fixed constants.
    ReproRobot,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::Certify => "certify",
            Command::Lipschitz => "lipschitz",
            Command::Simulate => "simulate",
            Command::Asymptotics => "asymptotics",
            Command::ReproSynthetic => "repro-5.1",
            Command::ReproRobot => "repro-5.2",
        }
    }
}

/// Where and how artifacts are written.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub plots: bool,
    /// Directory relative data paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            out: out.into(),
            plots: true,
            base_dir: None,
        }
    }
}

/// Named pass/fail result reported by a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub command: String,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }
}

#[derive(Serialize)]
struct SummaryBody<'a> {
    values: &'a BTreeMap<String, f64>,
    check: &'a [Check],
}

/// Configuration used by the fixed-constant commands.
pub fn repro_config(command: Command, seed: u64) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    match command {
        Command::ReproSynthetic => config.synthetic = Some(SyntheticConfig::default()),
        Command::ReproRobot => config.robot = Some(RobotConfig::default()),
        _ => return Err(Error::arg("only the repro commands have a fixed configuration")),
    }
    Ok(config)
}

/// Validates `config` and runs `command`.
pub fn run(command: Command, config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    match command {
        Command::Fit => run_fit(config, opts),
        Command::Certify => run_certify(config, opts),
        Command::Lipschitz => run_lipschitz(config, opts),
        Command::Asymptotics => run_asymptotics(config, opts),
        Command::ReproSynthetic => run_synthetic(config, opts, command.name()),
        Command::ReproRobot => run_robot(config, opts, command.name()),
        Command::Simulate => {
            if config.synthetic.is_none() && config.robot.is_none() {
                return Err(Error::Config("simulate needs a [synthetic] or [robot] section".into()).in_stage("config"));
            }
            let mut summary = RunSummary {
                command: command.name().into(),
                files: Vec::new(),
                checks: Vec::new(),
            };
            if config.synthetic.is_some() {
                let s = run_synthetic(config, &sub_options(opts, config.robot.is_some(), "synthetic"), "simulate")?;
                summary.files.extend(s.files);
                summary.checks.extend(s.checks);
            }
            if config.robot.is_some() {
                let s = run_robot(config, &sub_options(opts, config.synthetic.is_some(), "robot"), "simulate")?;
                summary.files.extend(s.files);
                summary.checks.extend(s.checks);
            }
            Ok(summary)
        }
    }
}

fn sub_options(opts: &RunOptions, nested: bool, name: &str) -> RunOptions {
    let mut o = opts.clone();
    if nested {
        o.out = opts.out.join(name);
    }
    o
}

fn kernel_from(cfg: &KernelConfig, d: usize) -> Result<SeArdKernel<f64>> {
    SeArdKernel::new(cfg.signal_variance, cfg.lengthscales_for(d)?)
}

fn hyper_options(cfg: &KernelConfig, seed: u64, fix_noise: bool) -> HyperparameterOptions {
    HyperparameterOptions {
        starts: cfg.starts,
        seed,
        fix_noise,
        ..HyperparameterOptions::default()
    }
}

fn load_dataset(path: &Path, base: Option<&Path>, noise_variance: f64) -> Result<Dataset<f64>> {
    let path = ExperimentConfig::resolve(base, path);
    let file = File::open(&path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
    read_dataset_csv(file, noise_variance)
}

fn dataset_rows(ds: &Dataset<f64>) -> (Vec<String>, Vec<Vec<f64>>) {
    let d = ds.dimension();
    let mut header: Vec<String> = (1..=d).map(|i| format!("x_{i}")).collect();
    header.push("y".into());
    let rows = (0..ds.len())
        .map(|i| {
            let mut r = ds.point(i).to_vec();
            r.push(ds.targets()[i]);
            r
        })
        .collect();
    (header, rows)
}

fn record_provenance(manifest: &mut Manifest, record: &CertificateRecord, prefix: &str) {
    for (k, v) in &record.provenance {
        let value = serde_plain(v);
        manifest.provenance(&format!("{prefix}{k}"), value);
    }
}

fn serde_plain(p: &ConstantProvenance) -> String {
    toml::Value::try_from(p)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn write_summary(w: &mut ArtifactWriter, values: &BTreeMap<String, f64>, checks: &[Check]) -> Result<()> {
    w.toml("summary.toml", &SummaryBody { values, check: checks })?;
    Ok(())
}

fn trace_table(trace: &SimulationTrace<f64>) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = trace.states.first().map_or(0, Vec::len);
    let m = trace.dof();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.extend((1..=m).map(|i| format!("u_{i}")));
    header.push("err_norm".into());
    header.extend((1..=m).map(|i| format!("err_norm_{i}")));
    header.extend((1..=m).map(|i| format!("r_{i}")));
    header.extend((1..=m).map(|i| format!("bound_radius_{i}")));
    let rows = (0..trace.len())
        .map(|k| {
            let mut row = vec![trace.times[k]];
            row.extend(&trace.states[k]);
            row.extend(&trace.controls[k]);
            row.push(trace.error_norm(k));
            row.extend((0..m).map(|i| trace.joint_error_norm(k, i)));
            row.extend(&trace.filtered_state[k]);
            match &trace.bound_radius {
                Some(r) => row.extend(&r[k]),
                None => row.extend(std::iter::repeat_n(f64::NAN, m)),
            }
            row
        })
        .collect();
    (header, rows)
}

fn error_plot(trace: &SimulationTrace<f64>, plots: &PlotConfig, title: &str) -> String {
    let m = trace.dof();
    let mut series = Vec::new();
    for i in 0..m {
        let e = (0..trace.len()).map(|k| trace.joint_error_norm(k, i)).collect();
        let suffix = if m > 1 { format!(" {}", i + 1) } else { String::new() };
        series.push(plot::Series::new(&format!("|e|{suffix}"), trace.times.clone(), e));
        if let Some(r) = &trace.bound_radius {
            let b = r.iter().map(|v| v[i]).collect();
            series.push(plot::Series::new(&format!("bound{suffix}"), trace.times.clone(), b).dashed());
        }
    }
    plot::LinePlot::new(title, "t", "tracking error", plots.width, plots.height).render(&series)
}

/// The error must settle inside its bound within the first half of the
/// horizon and stay there.
fn containment_checks(
    containment: &[Containment<f64>],
    filtered: &[Containment<f64>],
    horizon: f64,
    checks: &mut Vec<Check>,
    values: &mut BTreeMap<String, f64>,
) {
    let suffix = |i: usize| if containment.len() > 1 { format!("_{}", i + 1) } else { String::new() };
    for (i, c) in filtered.iter().enumerate() {
        let suffix = suffix(i);
        values.insert(format!("filtered_entry_time{suffix}"), c.entry_time.unwrap_or(f64::NAN));
        checks.push(Check::new(
            &format!("filtered error converges into decrease band{suffix}"),
            c.holds_within(0.5 * horizon),
            match c.entry_time {
                Some(t) => format!("|r| <= eta / k_c from t = {t} to the end of the horizon"),
                None => "outside the band at the end of the horizon".into(),
            },
        ));
    }
    for (i, c) in containment.iter().enumerate() {
        let suffix = suffix(i);
        values.insert(format!("entry_time{suffix}"), c.entry_time.unwrap_or(f64::NAN));
        checks.push(Check::new(
            &format!("tracking error converges into bound{suffix}"),
            c.holds_within(0.5 * horizon),
            match c.entry_time {
                Some(t) => format!("inside from t = {t} to the end of the horizon"),
                None => "outside the bound at the end of the horizon".into(),
            },
        ));
    }
}

/// Bound evaluated on a grid, compared against the true function.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCheck {
    /// Rows `x_1, x_2, f, mean, sigma, eta, abs_error`.
    pub rows: Vec<[f64; 7]>,
    pub violations: usize,
    /// Largest `abs_error / eta`.
    pub max_ratio: f64,
}

/// In-memory result of the synthetic experiment.
#[derive(Debug, Clone)]
pub struct SyntheticOutcome {
    pub dataset: Dataset<f64>,
    pub posterior: Posterior<f64, SeArdKernel<f64>>,
    pub kernel_constants: KernelConstants<f64>,
    pub lipschitz: LipschitzEstimate<f64>,
    pub certificate: CertificateConstants<f64>,
    pub domain: Domain<f64>,
    pub gains: ControllerGains<f64>,
    pub hyperparameters_fitted: bool,
    pub trace: SimulationTrace<f64>,
    pub containment: Containment<f64>,
    /// Containment of `r` in the Lyapunov decrease band.
    pub filtered_containment: Containment<f64>,
    pub grid: GridCheck,
    pub lyapunov: LyapunovReport,
}

impl SyntheticOutcome {
    pub fn error_certificate(&self) -> ErrorCertificate<'_, f64, SeArdKernel<f64>> {
        self.certificate.attach(&self.posterior, &self.domain)
    }
}

/// Noisy observations of [`SyntheticPlant::f`] on the training grid.
pub fn synthetic_training_data(cfg: &SyntheticConfig, seed: u64) -> Result<Dataset<f64>> {
    let training = Domain::new(cfg.training_lower.clone(), cfg.training_upper.clone())?;
    let points = training.grid(&cfg.training_counts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sn = cfg.noise_variance.sqrt();
    let targets = points
        .iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut rng);
            SyntheticPlant::f(x) + sn * z
        })
        .collect();
    Dataset::from_points(&points, targets, cfg.noise_variance)
}

/// Learns, certifies and simulates the synthetic system without writing files.
pub fn synthetic_experiment(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticOutcome> {
    let dataset = synthetic_training_data(cfg, seed).map_err(|e| e.in_stage("training data"))?;
    let init = kernel_from(&cfg.kernel, 2).map_err(|e| e.in_stage("kernel"))?;
    let kernel = if cfg.kernel.optimize {
        fit_hyperparameters(&dataset, &init, &hyper_options(&cfg.kernel, seed, true))
            .map_err(|e| e.in_stage("hyperparameters"))?
            .kernel
    } else {
        init
    };
    let posterior = fit(&dataset, &kernel).map_err(|e| e.in_stage("posterior"))?;
    let domain = Domain::new(cfg.domain_lower.clone(), cfg.domain_upper.clone()).map_err(|e| e.in_stage("domain"))?;
    let kc = kernel_constants(posterior.kernel(), &domain).map_err(|e| e.in_stage("kernel constants"))?;
    let lipschitz = probabilistic_lipschitz(&kc, &domain, cfg.delta_l).map_err(|e| e.in_stage("lipschitz"))?;
    let cert = certify(&posterior, &kc, &domain, cfg.tau, cfg.delta, lipschitz.value).map_err(|e| e.in_stage("certify"))?;

    let grid = grid_check(&cert, cfg.check_resolution).map_err(|e| e.in_stage("bound grid"))?;

    let gains = ControllerGains::new(cfg.k_c, cfg.lambda)?;
    let reference = SinusoidalReference::sine(cfg.amplitude);
    let model = GpModel::new(vec![&posterior])?;
    let controller = FeedbackLinearizing {
        model: &model,
        reference: &reference,
        gains,
    };
    let mut options = SimulationOptions::new(cfg.t_end, cfg.dt, cfg.lambda);
    options.record_every = cfg.record_every;
    let mut trace = simulate(&SyntheticPlant, &controller, &reference, &options, &cfg.initial_state)
        .map_err(|e| e.in_stage("simulate"))?;
    trace
        .annotate_bound(|x| Ok(vec![ultimate_bound_radius(&cert, x, &gains)?]))
        .map_err(|e| e.in_stage("bound radius"))?;
    let containment = trace.containment()?[0];
    let filtered_containment = trace.filtered_containment(&gains)?[0];
    let lyapunov = lyapunov_violations(&trace, &SyntheticPlant, &model, &gains, |x| Ok(vec![cert.certified_eta(x)?]))
        .map_err(|e| e.in_stage("lyapunov"))?;
    let certificate = cert.constants().clone();

    Ok(SyntheticOutcome {
        dataset,
        posterior,
        kernel_constants: kc,
        lipschitz,
        certificate,
        domain,
        gains,
        hyperparameters_fitted: cfg.kernel.optimize,
        trace,
        containment,
        filtered_containment,
        grid,
        lyapunov,
    })
}

fn grid_check(cert: &ErrorCertificate<'_, f64, SeArdKernel<f64>>, resolution: usize) -> Result<GridCheck> {
    let points = cert.domain().grid(&[resolution, resolution])?;
    let preds = cert.posterior().predict_many(&points)?;
    let mut check = GridCheck {
        rows: Vec::with_capacity(points.len()),
        violations: 0,
        max_ratio: 0.0,
    };
    for (x, (mean, var)) in points.iter().zip(preds) {
        let sigma = var.max(0.0).sqrt();
        let eta = cert.constants().eta_from_std(sigma);
        let f = SyntheticPlant::f(x);
        let err = (f - mean).abs();
        if !(err <= eta) {
            check.violations += 1;
        }
        check.max_ratio = check.max_ratio.max(err / eta);
        check.rows.push([x[0], x[1], f, mean, sigma, eta, err]);
    }
    Ok(check)
}

/// Runs the synthetic experiment and writes its artifacts.
pub fn run_synthetic(config: &ExperimentConfig, opts: &RunOptions, command: &str) -> Result<RunSummary> {
    let default = SyntheticConfig::default();
    let cfg = config.synthetic.as_ref().unwrap_or(&default);
    let outcome = synthetic_experiment(cfg, config.seed)?;
    let cert = outcome.error_certificate();
    let record = CertificateRecord::new(
        &cert,
        &outcome.kernel_constants,
        ConstantProvenance::Probabilistic,
        Some(cfg.delta_l),
    );

    let stage = |e: Error| e.in_stage("write artifacts");
    let mut manifest = Manifest::new(command, config).map_err(stage)?;
    record_provenance(&mut manifest, &record, "");
    manifest.provenance(
        "hyperparameters",
        if outcome.hyperparameters_fitted { "marginal-likelihood" } else { "supplied" },
    );
    let mut w = ArtifactWriter::create(&opts.out, manifest, opts.plots).map_err(stage)?;
    w.toml("config.toml", config).map_err(stage)?;
    w.toml("certificate.toml", &record).map_err(stage)?;
    let (h, rows) = dataset_rows(&outcome.dataset);
    w.csv("training.csv", &h, &rows).map_err(stage)?;
    let (h, rows) = trace_table(&outcome.trace);
    w.csv("trace.csv", &h, &rows).map_err(stage)?;
    let grid_header: Vec<String> = ["x_1", "x_2", "f", "mean", "sigma", "eta", "abs_error"].map(String::from).into();
    let grid_rows: Vec<Vec<f64>> = outcome.grid.rows.iter().map(|r| r.to_vec()).collect();
    w.csv("bound_grid.csv", &grid_header, &grid_rows).map_err(stage)?;

    if w.plots_enabled() {
        let svg = bound_surface(&outcome, &config.plots).map_err(stage)?;
        w.svg("bound_surface.svg", &svg).map_err(stage)?;
        let svg = error_plot(&outcome.trace, &config.plots, "tracking error and ultimate bound");
        w.svg("error_vs_bound.svg", &svg).map_err(stage)?;
    }

    let mut values = BTreeMap::new();
    let c = &outcome.certificate;
    values.insert("beta".into(), c.beta);
    values.insert("gamma".into(), c.gamma);
    values.insert("f_lipschitz".into(), outcome.lipschitz.value);
    values.insert("delta_total".into(), cfg.delta + cfg.delta_l);
    values.insert("max_error_over_eta".into(), outcome.grid.max_ratio);
    values.insert("lyapunov_samples_checked".into(), outcome.lyapunov.checked as f64);
    let mut checks = vec![Check::new(
        "bound holds on grid",
        outcome.grid.violations == 0,
        format!(
            "{} of {} nodes violate, max |f - mean| / eta = {}",
            outcome.grid.violations,
            outcome.grid.rows.len(),
            outcome.grid.max_ratio
        ),
    )];
    containment_checks(
        std::slice::from_ref(&outcome.containment),
        std::slice::from_ref(&outcome.filtered_containment),
        cfg.t_end, &mut checks, &mut values);
    checks.push(Check::new(
        "lyapunov decrease outside bound",
        outcome.lyapunov.violations == 0,
        format!("{} violations in {} samples", outcome.lyapunov.violations, outcome.lyapunov.checked),
    ));
    write_summary(&mut w, &values, &checks).map_err(stage)?;
    Ok(RunSummary {
        command: command.into(),
        files: w.into_files(),
        checks,
    })
}

fn bound_surface(outcome: &SyntheticOutcome, plots: &PlotConfig) -> Result<String> {
    let n = plots.heatmap_resolution;
    let dom = &outcome.domain;
    let axis = |i: usize| -> Vec<f64> {
        let (lo, hi) = (dom.lower()[i], dom.upper()[i]);
        let h = (hi - lo) / n as f64;
        (0..n).map(|k| lo + (k as f64 + 0.5) * h).collect()
    };
    let (xs, ys) = (axis(0), axis(1));
    let points: Vec<Vec<f64>> = xs.iter().flat_map(|&a| ys.iter().map(move |&b| vec![a, b])).collect();
    let preds = outcome.posterior.predict_many(&points)?;
    let values: Vec<Vec<f64>> = preds
        .chunks(n)
        .map(|row| {
            row.iter()
                .map(|&(_, v)| outcome.certificate.eta_from_std(v.max(0.0).sqrt()) / outcome.gains.radius_scale())
                .collect()
        })
        .collect();
    let path: Vec<(f64, f64)> = outcome.trace.states.iter().map(|x| (x[0], x[1])).collect();
    let markers: Vec<(f64, f64)> = (0..outcome.dataset.len())
        .map(|i| {
            let p = outcome.dataset.point(i);
            (p[0], p[1])
        })
        .collect();
    Ok(plot::Heatmap::new("ultimate bound radius over the state space", "x_1", "x_2", plots.width, plots.height)
        .render(&xs, &ys, &values, &path, &markers))
}

/// Arm setup from a configuration section.
pub fn robot_setup(cfg: &RobotConfig, seed: u64) -> Result<RobotSetup<f64>> {
    let reference = SinusoidalReference::new(
        cfg.amplitude.clone(),
        cfg.frequency.clone(),
        cfg.phase.clone(),
        cfg.offset.clone(),
    )?;
    Ok(RobotSetup {
        arm: TwoLinkArm::unit(cfg.gravity),
        domain: Domain::new(cfg.domain_lower.clone(), cfg.domain_upper.clone())?,
        training_box: Domain::new(cfg.training_lower.clone(), cfg.training_upper.clone())?,
        training_counts: cfg.training_counts.clone(),
        noise_variance: cfg.noise_variance,
        kernel: kernel_from(&cfg.kernel, 4)?,
        optimize_hyperparameters: cfg.kernel.optimize,
        hyper_options: hyper_options(&cfg.kernel, seed, true),
        tau: cfg.tau,
        delta: cfg.delta,
        gains: ControllerGains::new(cfg.k_c, cfg.lambda)?,
        reference,
        initial_state: cfg.initial_state.clone(),
        t_end: cfg.t_end,
        dt: cfg.dt,
        record_every: cfg.record_every,
        seed,
    })
}

/// The arm setup with the default [`RobotConfig`].
pub fn default_robot_setup(seed: u64) -> Result<RobotSetup<f64>> {
    robot_setup(&RobotConfig::default(), seed)
}

/// Runs the arm experiment and writes its artifacts.
pub fn run_robot(config: &ExperimentConfig, opts: &RunOptions, command: &str) -> Result<RunSummary> {
    let default = RobotConfig::default();
    let cfg = config.robot.as_ref().unwrap_or(&default);
    let setup = robot_setup(cfg, config.seed).map_err(|e| e.in_stage("setup"))?;
    let outcome: RobotOutcome<f64> = crate::control::certify_and_simulate_robot(&setup)?;
    let certs = outcome.error_certificates();
    let records: Vec<CertificateRecord> = certs
        .iter()
        .zip(&outcome.kernel_constants)
        .map(|(c, kc)| CertificateRecord::new(c, kc, ConstantProvenance::SampledTruth, None))
        .collect();

    let stage = |e: Error| e.in_stage("write artifacts");
    let mut manifest = Manifest::new(command, config).map_err(stage)?;
    record_provenance(&mut manifest, &records[0], "");
    manifest.provenance(
        "hyperparameters",
        if setup.optimize_hyperparameters { "marginal-likelihood" } else { "supplied" },
    );
    let mut w = ArtifactWriter::create(&opts.out, manifest, opts.plots).map_err(stage)?;
    w.toml("config.toml", config).map_err(stage)?;
    for (j, record) in records.iter().enumerate() {
        w.toml(&format!("certificate_joint_{}.toml", j + 1), record).map_err(stage)?;
        let (h, rows) = dataset_rows(&outcome.datasets[j]);
        w.csv(&format!("training_joint_{}.csv", j + 1), &h, &rows).map_err(stage)?;
    }
    let trace = &outcome.trace;
    let (h, rows) = trace_table(trace);
    w.csv("trace.csv", &h, &rows).map_err(stage)?;
    let (h, rows) = task_space_table(&setup, trace);
    w.csv("task_space.csv", &h, &rows).map_err(stage)?;

    if w.plots_enabled() {
        let svg = error_plot(trace, &config.plots, "joint tracking errors and ultimate bounds");
        w.svg("error_vs_bound.svg", &svg).map_err(stage)?;
        let mut series = Vec::new();
        for i in 0..2 {
            let q = trace.states.iter().map(|x| x[2 * i]).collect();
            let qd = trace.times.iter().map(|&t| setup.reference.at(t).position[i]).collect();
            series.push(plot::Series::new(&format!("q_{}", i + 1), trace.times.clone(), q));
            series.push(plot::Series::new(&format!("q_{} desired", i + 1), trace.times.clone(), qd).dashed());
        }
        let svg = plot::LinePlot::new("joint angles", "t", "angle [rad]", config.plots.width, config.plots.height)
            .render(&series);
        w.svg("joints.svg", &svg).map_err(stage)?;
    }

    let mut values = BTreeMap::new();
    for (j, c) in outcome.certificates.iter().enumerate() {
        values.insert(format!("delta_{}", j + 1), c.delta);
        values.insert(format!("beta_{}", j + 1), c.beta);
        values.insert(format!("gamma_{}", j + 1), c.gamma);
        values.insert(format!("f_lipschitz_{}", j + 1), c.f_lipschitz);
    }
    let ts = &outcome.task_space;
    values.insert("task_space_max_half_diagonal".into(), ts.max_half_diagonal);
    let mut checks = Vec::new();
    let filtered = trace.filtered_containment(&setup.gains)?;
    containment_checks(&outcome.containment, &filtered, cfg.t_end, &mut checks, &mut values);
    checks.push(Check::new(
        "end effector inside task-space box",
        ts.start_index.is_some() && ts.violations == 0,
        format!("{} violations in {} samples", ts.violations, ts.checked),
    ));
    write_summary(&mut w, &values, &checks).map_err(stage)?;
    Ok(RunSummary {
        command: command.into(),
        files: w.into_files(),
        checks,
    })
}

fn task_space_table(setup: &RobotSetup<f64>, trace: &SimulationTrace<f64>) -> (Vec<String>, Vec<Vec<f64>>) {
    let header = ["t", "p_1", "p_2", "box_lo_1", "box_lo_2", "box_hi_1", "box_hi_2", "inside"]
        .map(String::from)
        .to_vec();
    let radii = trace.bound_radius.as_deref().unwrap_or(&[]);
    let rows = (0..trace.len().min(radii.len()))
        .map(|k| {
            let r = setup.reference.at(trace.times[k]);
            let (lo, hi) = end_effector_box(&setup.arm, [r.position[0], r.position[1]], [radii[k][0], radii[k][1]]);
            let x = &trace.states[k];
            let p = setup.arm.forward_kinematics([x[0], x[2]]);
            let inside = (0..2).all(|i| lo[i] <= p[i] && p[i] <= hi[i]);
            vec![trace.times[k], p[0], p[1], lo[0], lo[1], hi[0], hi[1], f64::from(u8::from(inside))]
        })
        .collect();
    (header, rows)
}

/// Harness settings from a configuration section.
pub fn harness_config(cfg: &AsymptoticsConfig, seed: u64) -> HarnessConfig<f64> {
    let d = cfg.lower.len();
    let mut h = HarnessConfig::new(
        cfg.schedule.clone(),
        cfg.delta,
        cfg.noise_variance,
        cfg.f_max.unwrap_or_else(|| cfg.truth.sup_abs(d)),
        cfg.f_lipschitz.unwrap_or_else(|| cfg.truth.lipschitz(d)),
    );
    h.tau0 = cfg.tau0;
    h.seed = seed;
    h.dense_cap = cfg.dense_cap;
    h.eval_points_per_dim = cfg.eval_points_per_dim;
    h.max_eval_points = cfg.max_eval_points;
    h
}

/// Runs the growing-data harness without writing files.
pub fn asymptotics_experiment(cfg: &AsymptoticsConfig, seed: u64) -> Result<Vec<AsymptoticRow<f64>>> {
    let d = cfg.lower.len();
    let domain = Domain::new(cfg.lower.clone(), cfg.upper.clone())?;
    let lengthscales = if cfg.lengthscales.len() == 1 { vec![cfg.lengthscales[0]; d] } else { cfg.lengthscales.clone() };
    let kernel = SeArdKernel::new(cfg.signal_variance, lengthscales)?;
    let truth = cfg.truth;
    asymptotic_harness(&kernel, &domain, |x: &[f64]| truth.eval(x), &harness_config(cfg, seed))
}

/// Runs the harness and writes the table, summary and plot.
pub fn run_asymptotics(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let default = AsymptoticsConfig::default();
    let cfg = config.asymptotics.as_ref().unwrap_or(&default);
    let rows = asymptotics_experiment(cfg, config.seed).map_err(|e| e.in_stage("harness"))?;

    let stage = |e: Error| e.in_stage("write artifacts");
    let mut manifest = Manifest::new("asymptotics", config).map_err(stage)?;
    manifest
        .provenance("beta_N", "analytic")
        .provenance("gamma_N", "analytic")
        .provenance("lipschitz_k", "grid-search")
        .provenance(
            "f_lipschitz",
            if cfg.f_lipschitz.is_some() { "supplied" } else { "analytic" },
        )
        .provenance("mean_lipschitz", if cfg.noise_variance > 0.0 { "analytic" } else { "eigen-solve" });
    let mut w = ArtifactWriter::create(&opts.out, manifest, opts.plots).map_err(stage)?;
    w.toml("config.toml", config).map_err(stage)?;
    let header = ["N", "sup_error", "bound", "beta_N", "gamma_N", "max_sigma"].map(String::from).to_vec();
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r.n as f64, r.sup_error, r.bound, r.beta_n, r.gamma_n, r.max_sigma])
        .collect();
    w.csv("asymptotics.csv", &header, &table).map_err(stage)?;
    if w.plots_enabled() {
        let n: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let svg = plot::LinePlot::new("uniform error bound versus N", "N", "error", config.plots.width, config.plots.height)
            .log_log()
            .render(&[
                plot::Series::new("bound", n.clone(), rows.iter().map(|r| r.bound).collect()),
                plot::Series::new("sup error", n, rows.iter().map(|r| r.sup_error).collect()).dashed(),
            ]);
        w.svg("asymptotics.svg", &svg).map_err(stage)?;
    }

    let mut values = BTreeMap::new();
    if let Some(slope) = decay_slope(&rows) {
        values.insert("decay_slope".into(), slope);
    }
    let increasing = rows.windows(2).skip(1).filter(|w| w[1].bound > w[0].bound).count();
    let exceed = rows.iter().filter(|r| !(r.sup_error <= r.bound)).count();
    let checks = vec![
        Check::new(
            "bound non-increasing after the first entry",
            increasing == 0,
            format!("{increasing} increases"),
        ),
        Check::new("sup error below bound", exceed == 0, format!("{exceed} rows exceed the bound")),
    ];
    write_summary(&mut w, &values, &checks).map_err(stage)?;
    Ok(RunSummary {
        command: "asymptotics".into(),
        files: w.into_files(),
        checks,
    })
}

#[derive(Serialize)]
struct FitBody {
    n_train: usize,
    signal_variance: f64,
    lengthscales: Vec<f64>,
    noise_variance: f64,
    log_marginal_likelihood: f64,
    initial_log_marginal_likelihood: f64,
    improved: bool,
}

/// Fits hyperparameters to a dataset.
pub fn run_fit(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let cfg = config
        .fit
        .as_ref()
        .ok_or_else(|| Error::Config("fit needs a [fit] section".into()).in_stage("config"))?;
    let ds = load_dataset(&cfg.data, opts.base_dir.as_deref(), cfg.noise_variance).map_err(|e| e.in_stage("data"))?;
    let init = kernel_from(&cfg.kernel, ds.dimension()).map_err(|e| e.in_stage("kernel"))?;
    let fitted = fit_hyperparameters(&ds, &init, &hyper_options(&cfg.kernel, config.seed, !cfg.optimize_noise))
        .map_err(|e| e.in_stage("hyperparameters"))?;

    let stage = |e: Error| e.in_stage("write artifacts");
    let mut manifest = Manifest::new("fit", config).map_err(stage)?;
    manifest.provenance("hyperparameters", "marginal-likelihood");
    let mut w = ArtifactWriter::create(&opts.out, manifest, opts.plots).map_err(stage)?;
    let body = FitBody {
        n_train: ds.len(),
        signal_variance: fitted.kernel.signal_variance(),
        lengthscales: fitted.kernel.lengthscales().to_vec(),
        noise_variance: fitted.noise_variance,
        log_marginal_likelihood: fitted.log_marginal_likelihood,
        initial_log_marginal_likelihood: fitted.initial_log_marginal_likelihood,
        improved: fitted.improved,
    };
    w.toml("fit.toml", &body).map_err(stage)?;
    Ok(RunSummary {
        command: "fit".into(),
        files: w.into_files(),
        checks: Vec::new(),
    })
}

/// Certifies a GP trained on a dataset over a box.
pub fn run_certify(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let cfg: &CertifyConfig = config
        .certify
        .as_ref()
        .ok_or_else(|| Error::Config("certify needs a [certify] section".into()).in_stage("config"))?;
    let ds = load_dataset(&cfg.data, opts.base_dir.as_deref(), cfg.noise_variance).map_err(|e| e.in_stage("data"))?;
    let init = kernel_from(&cfg.kernel, ds.dimension()).map_err(|e| e.in_stage("kernel"))?;
    let kernel = if cfg.kernel.optimize {
        fit_hyperparameters(&ds, &init, &hyper_options(&cfg.kernel, config.seed, true))
            .map_err(|e| e.in_stage("hyperparameters"))?
            .kernel
    } else {
        init
    };
    let posterior = fit(&ds, &kernel).map_err(|e| e.in_stage("posterior"))?;
    let domain = Domain::new(cfg.domain_lower.clone(), cfg.domain_upper.clone()).map_err(|e| e.in_stage("domain"))?;
    let kc = kernel_constants(posterior.kernel(), &domain).map_err(|e| e.in_stage("kernel constants"))?;
    let (lf, provenance, lf_delta) = match cfg.f_lipschitz {
        Some(v) => (v, ConstantProvenance::Supplied, None),
        None => {
            let est = probabilistic_lipschitz(&kc, &domain, cfg.delta_l).map_err(|e| e.in_stage("lipschitz"))?;
            (est.value, ConstantProvenance::Probabilistic, Some(cfg.delta_l))
        }
    };
    let cert = certify(&posterior, &kc, &domain, cfg.tau, cfg.delta, lf).map_err(|e| e.in_stage("certify"))?;
    let record = CertificateRecord::new(&cert, &kc, provenance, lf_delta);

    let stage = |e: Error| e.in_stage("write artifacts");
    let mut manifest = Manifest::new("certify", config).map_err(stage)?;
    record_provenance(&mut manifest, &record, "");
    manifest.provenance(
        "hyperparameters",
        if cfg.kernel.optimize { "marginal-likelihood" } else { "supplied" },
    );
    let mut w = ArtifactWriter::create(&opts.out, manifest, opts.plots).map_err(stage)?;
    w.toml("certificate.toml", &record).map_err(stage)?;
    let (h, rows) = dataset_rows(&ds);
    w.csv("training.csv", &h, &rows).map_err(stage)?;
    Ok(RunSummary {
        command: "certify".into(),
        files: w.into_files(),
        checks: Vec::new(),
    })
}

#[derive(Serialize)]
struct LipschitzBody {
    value: f64,
    delta_l: f64,
    per_dimension: Vec<f64>,
    diameter: f64,
    deriv_kernel_diag: Vec<f64>,
    deriv_kernel_lipschitz: Vec<f64>,
}

/// Probabilistic Lipschitz constant of GP sample paths on a box.
pub fn run_lipschitz(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let cfg = config
        .lipschitz
        .as_ref()
        .ok_or_else(|| Error::Config("lipschitz needs a [lipschitz] section".into()).in_stage("config"))?;
    let domain = Domain::new(cfg.domain_lower.clone(), cfg.domain_upper.clone()).map_err(|e| e.in_stage("domain"))?;
    let kernel = kernel_from(&cfg.kernel, domain.dimension()).map_err(|e| e.in_stage("kernel"))?;
    let kc = kernel_constants(&kernel, &domain).map_err(|e| e.in_stage("kernel constants"))?;
    let est = probabilistic_lipschitz(&kc, &domain, cfg.delta_l).map_err(|e| e.in_stage("lipschitz"))?;

    let stage = |e: Error| e.in_stage("write artifacts");
    let mut manifest = Manifest::new("lipschitz", config).map_err(stage)?;
    manifest
        .provenance("value", "probabilistic")
        .provenance("deriv_kernel_lipschitz", "grid-search");
    let mut w = ArtifactWriter::create(&opts.out, manifest, opts.plots).map_err(stage)?;
    let body = LipschitzBody {
        value: est.value,
        delta_l: est.delta_l,
        per_dimension: est.per_dimension.clone(),
        diameter: est.diameter,
        deriv_kernel_diag: kc.deriv_kernel_diag.clone(),
        deriv_kernel_lipschitz: kc.deriv_kernel_lipschitz.clone(),
    };
    w.toml("lipschitz.toml", &body).map_err(stage)?;
    Ok(RunSummary {
        command: "lipschitz".into(),
        files: w.into_files(),
        checks: Vec::new(),
    })
}

/// Writes a dataset CSV without a manifest, for use as `fit`/`certify` input.
pub fn write_plain_dataset(ds: &Dataset<f64>, path: &Path) -> Result<()> {
    write_dataset_csv(ds, File::create(path)?)
}

#[cfg(test)]
mod tests;
