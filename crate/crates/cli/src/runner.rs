//! Executes a validated scenario and writes its artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use floqryd_core::bessel::bessel_j_zeros;
use floqryd_core::calibration::{
    compensate_ram, AomTransferModel, CompensationOptions, RamExperiment, SYNTHETIC_SEED,
};
use floqryd_core::disorder::{
    draw_sample, run_doppler_scan, run_ensemble, run_hold_scan, sample_builder, sample_rng, DopplerScan,
    EnsembleOptions, EnsembleStats, HoldScan, FIDELITY,
};
use floqryd_core::fitting::{
    bessel_carrier, distance_shift, fit_bessel_carrier, fit_damped_sinusoid, fit_distance_calibration,
    fit_exponential_decay, FitResult,
};
use floqryd_core::floquet::ipr_map;
use floqryd_core::hamiltonian::HamiltonianBuilder;
use floqryd_core::lindblad::{
    build_dissipators, evolve, time_average, uniform_times, DensityMatrix, EvolveOptions, TrajectoryResult,
};
use floqryd_core::observables::{apply_spam, max_in_window, populations_from_diagonal, w_fidelity, WReference};
use floqryd_core::schedule::{DriveSchedule, FfmParams, PulseSegment, RamModel};
use floqryd_core::system::units::{mhz, to_mhz};
use floqryd_core::system::{NoiseModel, SpamModel, SystemConfig};

use crate::connectivity::{connectivity_report, ConnectivityOptions};
use crate::error::{CliError, CliResult};
use crate::output::{sha256_hex, FileEntry, OutputDir, Table};
use crate::scenario::{
    CalibrationSpec, FitModel, FitSpec, Kind, MapMetric, MapParameter, Scenario, StirapSpec,
};

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Parent directory; outputs land in `<out>/<name>/`.
    pub out: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    /// Overrides the scenario seed.
    pub seed: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            threads: 0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub scenario: String,
    pub kind: String,
    pub scenario_sha256: String,
    pub code_version: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub seed: u64,
    pub threads: usize,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST: &str = "manifest.json";

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Runs `scenario` (whose source text is `text`) and writes `manifest.json`.
pub fn run(scenario: &Scenario, text: &str, options: &RunOptions) -> CliResult<RunManifest> {
    let started = now();
    prepare(scenario)?;
    let seed = options.seed.unwrap_or(scenario.seed);
    let mut out = OutputDir::create(&options.out.join(&scenario.name))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    pool.install(|| execute(scenario, seed, &mut out))?;
    let manifest = RunManifest {
        scenario: scenario.name.clone(),
        kind: scenario.kind.as_str().to_string(),
        scenario_sha256: sha256_hex(text.as_bytes()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_s: started,
        finished_unix_s: now(),
        seed,
        threads: pool.current_num_threads(),
        files: out.files().to_vec(),
    };
    out.write_json(MANIFEST, &manifest)?;
    Ok(manifest)
}

/// Builds every library value the run needs without integrating anything.
pub fn prepare(s: &Scenario) -> CliResult<()> {
    let cfg = s.system_config()?;
    if !s.schedule.is_empty() {
        s.drive_schedule(&cfg)?;
    }
    s.ram_model()?;
    s.sample_times()?;
    s.output.initial.density(cfg.array.len())?;
    if let Some(st) = &s.stirap {
        st.mode.profile(st.total_time_us).map_err(|e| CliError::at("stirap", e))?;
    }
    if let Some(i) = &s.ipr {
        i.doppler_mhz.resolve("ipr.doppler_mhz")?;
        i.modulation_frequency_mhz.resolve("ipr.modulation_frequency_mhz")?;
    }
    if let Some(c) = &s.connectivity {
        c.static_interaction_mhz.resolve("connectivity.static_interaction_mhz")?;
    }
    if let Some(h) = &s.hold {
        h.drive.to_hold("hold.drive")?;
        h.times.resolve("hold.times")?;
    }
    if let Some(d) = &s.doppler {
        d.widths_mhz.resolve("doppler.widths_mhz")?;
        for (i, drive) in d.drives.iter().enumerate() {
            drive.to_hold(&format!("doppler.drives[{i}]"))?;
        }
    }
    if let Some(CalibrationSpec::Bessel { alpha, .. }) = &s.calibration {
        alpha.resolve("calibration.alpha")?;
    }
    if let Some(CalibrationSpec::Aod { spacing_mhz, .. }) = &s.calibration {
        spacing_mhz.resolve("calibration.spacing_mhz")?;
    }
    Ok(())
}

fn execute(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    match s.kind {
        Kind::Trajectory => trajectory(s, out),
        Kind::Ensemble => ensemble(s, seed, out),
        Kind::Map2d => map2d(s, out),
        Kind::IprMap => ipr(s, out),
        Kind::Stirap => stirap(s, seed, out),
        Kind::Calibration => calibration(s, out),
        Kind::Connectivity => connectivity(s, out),
        Kind::HoldScan => hold_scan(s, seed, out),
        Kind::DopplerScan => doppler_scan(s, seed, out),
    }
}

fn renormalized(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter().map(|x| x / s).collect()
}

/// Population series keyed by label, after the optional readout transform.
fn population_series(
    r: &TrajectoryResult,
    spam: Option<&SpamModel>,
) -> CliResult<BTreeMap<String, Vec<f64>>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for diag in &r.populations {
        let d = match spam {
            Some(m) => apply_spam(&renormalized(diag), m)?,
            None => diag.clone(),
        };
        for (k, v) in populations_from_diagonal(&d, r.n_atoms) {
            out.entry(k).or_default().push(v);
        }
    }
    Ok(out)
}

fn fidelity_series(r: &TrajectoryResult) -> CliResult<Vec<f64>> {
    let w = WReference::symmetric(r.n_atoms);
    Ok(r.snapshots
        .iter()
        .map(|s| w_fidelity(s, &w))
        .collect::<floqryd_core::Result<Vec<_>>>()?)
}

/// One trajectory of the nominal (disorder-free) configuration.
fn nominal(
    cfg: &SystemConfig,
    schedule: &DriveSchedule,
    ram: Option<&RamModel>,
    rho0: &DensityMatrix,
    times: &[f64],
    keep_snapshots: bool,
) -> floqryd_core::Result<TrajectoryResult> {
    let builder = HamiltonianBuilder::new(cfg.array.clone(), cfg.lasers.clone(), schedule.clone())?
        .with_ram(ram.cloned());
    let d = build_dissipators(&cfg.noise, cfg.array.len())?;
    let opts = EvolveOptions {
        keep_snapshots,
        ..Default::default()
    };
    evolve(&builder, &d, rho0, (0.0, schedule.total_duration()), times, &opts)
}

fn window(s: &Scenario, times: &[f64]) -> (f64, f64) {
    match s.output.fidelity_window_us {
        Some([a, b]) => (a, b),
        None => (times[0], times[times.len() - 1]),
    }
}

fn run_fit(spec: &FitSpec, times: &[f64], y: &[f64]) -> CliResult<FitResult> {
    Ok(match spec.model {
        FitModel::DampedSinusoid => fit_damped_sinusoid(times, y, None)?,
        FitModel::ExponentialDecay => fit_exponential_decay(times, y)?,
    })
}

fn trajectory(s: &Scenario, out: &mut OutputDir) -> CliResult<()> {
    let cfg = s.system_config()?;
    let schedule = s.drive_schedule(&cfg)?;
    let ram = s.ram_model()?;
    let times = s.sample_times()?.expect("required key checked");
    let rho0 = s.output.initial.density(cfg.array.len())?;
    let r = nominal(&cfg, &schedule, ram.as_ref(), &rho0, &times, true)?;
    let spam = s.output.spam_forward.then_some(&cfg.spam);
    let pops = population_series(&r, spam)?;
    let fidelity = fidelity_series(&r)?;

    let mut cols = vec![("time_us".to_string(), times.clone())];
    cols.extend(pops.iter().map(|(k, v)| (k.clone(), v.clone())));
    cols.push((FIDELITY.to_string(), fidelity.clone()));
    out.write_csv("trajectory.csv", &Table::from_columns(cols))?;

    let span = (times[0], times[times.len() - 1]);
    let mut averages = BTreeMap::new();
    let mut finals = BTreeMap::new();
    for (k, v) in &pops {
        averages.insert(k.clone(), time_average(&times, v, span)?);
        finals.insert(k.clone(), *v.last().expect("non-empty"));
    }
    let max_fidelity = max_in_window(&times, &fidelity, window(s, &times))?;
    let mut summary = json!({
        "n_atoms": cfg.array.len(),
        "time_average": averages,
        "final": finals,
        "max_fidelity": max_fidelity,
        "spam_forward": s.output.spam_forward,
    });
    if let Some(f) = &s.fit {
        let y = if f.label == FIDELITY {
            &fidelity
        } else {
            pops.get(&f.label)
                .ok_or_else(|| CliError::Validation(format!("fit.label: unknown series `{}`", f.label)))?
        };
        let fit = run_fit(f, &times, y)?;
        out.write_json("fit.json", &fit)?;
        summary["fit"] = fit_summary(&fit);
    }
    out.write_json("summary.json", &summary)
}

fn fit_summary(fit: &FitResult) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    for (k, v) in fit.names.iter().zip(&fit.parameters) {
        m.insert(k.clone(), json!(v));
    }
    serde_json::Value::Object(m)
}

fn ensemble_options(s: &Scenario, cfg: &SystemConfig, seed: u64, times: Vec<f64>) -> CliResult<EnsembleOptions> {
    let mut o = EnsembleOptions::new(s.samples.expect("checked"), seed, times);
    o.static_interaction = s.output.static_interaction;
    o.initial = Some(s.output.initial.density(cfg.array.len())?);
    o.fidelity_window = s.output.fidelity_window_us.map(|[a, b]| (a, b));
    o.spam = s.output.spam_forward.then(|| cfg.spam.clone());
    Ok(o)
}

fn ensemble_table(stats: &EnsembleStats) -> Table {
    let mut cols = vec![("time_us".to_string(), stats.times.clone())];
    for (k, label) in stats.labels.iter().enumerate() {
        cols.push((format!("mean_{label}"), stats.mean[k].clone()));
        cols.push((format!("std_{label}"), stats.std[k].clone()));
    }
    cols.push(("fidelity_of_mean".to_string(), stats.fidelity_of_mean.clone()));
    Table::from_columns(cols)
}

fn ensemble_summary(stats: &EnsembleStats) -> CliResult<serde_json::Value> {
    let (m, sd) = stats.max_fidelity_summary();
    let span = (stats.times[0], stats.times[stats.times.len() - 1]);
    let mut averages = BTreeMap::new();
    let mut finals = BTreeMap::new();
    for (k, label) in stats.labels.iter().enumerate() {
        averages.insert(label.clone(), time_average(&stats.times, &stats.mean[k], span)?);
        finals.insert(label.clone(), *stats.mean[k].last().expect("non-empty"));
    }
    let peak = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(json!({
        "sample_count": stats.sample_count,
        "seed": stats.seed,
        "max_fidelity_mean": m,
        "max_fidelity_std": sd,
        "peak_mean_fidelity": peak(stats.mean_of(FIDELITY)?),
        "peak_fidelity_of_mean": peak(&stats.fidelity_of_mean),
        "time_average_of_mean": averages,
        "final_mean": finals,
    }))
}

fn ensemble(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    let cfg = s.system_config()?;
    let schedule = s.drive_schedule(&cfg)?;
    let ram = s.ram_model()?;
    let times = s.sample_times()?.expect("required key checked");
    let opts = ensemble_options(s, &cfg, seed, times.clone())?;
    let stats = run_ensemble(&cfg, &schedule, ram.as_ref(), &opts)?;
    out.write_csv("ensemble.csv", &ensemble_table(&stats))?;
    let per_sample = Table::from_columns(vec![
        ("sample".to_string(), (0..stats.sample_count).map(|i| i as f64).collect()),
        ("max_fidelity".to_string(), stats.max_fidelity.clone()),
    ]);
    out.write_csv("max_fidelity.csv", &per_sample)?;

    let traces = s.output.per_sample_traces.min(stats.sample_count);
    if traces > 0 {
        let series: Vec<floqryd_core::Result<Vec<f64>>> = (0..traces)
            .into_par_iter()
            .map(|i| sample_fidelity(&cfg, &schedule, ram.as_ref(), &opts, i))
            .collect();
        let mut cols = vec![("time_us".to_string(), times.clone())];
        for (i, f) in series.into_iter().enumerate() {
            let f = f.map_err(|e| CliError::Numerical {
                index: i,
                message: e.to_string(),
            })?;
            cols.push((format!("fidelity_sample_{i}"), f));
        }
        out.write_csv("samples.csv", &Table::from_columns(cols))?;
    }

    let mut summary = ensemble_summary(&stats)?;
    if let Some(f) = &s.fit {
        let y = stats.mean_of(&f.label).map_err(|_| {
            CliError::Validation(format!("fit.label: unknown series `{}`", f.label))
        })?;
        let fit = run_fit(f, &times, y)?;
        out.write_json("fit.json", &fit)?;
        summary["fit"] = fit_summary(&fit);
    }
    out.write_json("summary.json", &summary)
}

/// W fidelity trace of ensemble member `index`, drawn exactly as the
/// ensemble draws it.
fn sample_fidelity(
    cfg: &SystemConfig,
    schedule: &DriveSchedule,
    ram: Option<&RamModel>,
    opts: &EnsembleOptions,
    index: usize,
) -> floqryd_core::Result<Vec<f64>> {
    let mut rng = sample_rng(opts.seed, index as u64);
    let sample = draw_sample(&cfg.thermal, &cfg.array, &cfg.lasers, &mut rng);
    let b = sample_builder(cfg, schedule, ram, &sample, opts.static_interaction)?;
    let n = cfg.array.len();
    let d = build_dissipators(&cfg.noise, n)?;
    let rho0 = opts.initial.clone().unwrap_or_else(|| DensityMatrix::ground(n));
    let r = evolve(&b, &d, &rho0, (0.0, schedule.total_duration()), &opts.sample_times, &EvolveOptions::default())?;
    let w = WReference::symmetric(n);
    r.snapshots.iter().map(|s| w_fidelity(s, &w)).collect()
}

fn map2d(s: &Scenario, out: &mut OutputDir) -> CliResult<()> {
    let m = s.map.as_ref().expect("required key checked");
    let base = s.system_config()?;
    let ram = s.ram_model()?;
    let xs = m.x.grid.resolve("map.x")?;
    let ys = m.y.grid.resolve("map.y")?;
    let n = base.array.len();
    let rho0 = s.output.initial.density(n)?;
    let times = uniform_times(0.0, m.duration_us, m.time_points);
    let needs_fidelity = m.metrics.iter().any(|x| matches!(x, MapMetric::MaxFidelity));
    let spam = s.output.spam_forward.then_some(&base.spam);

    let points: Vec<(f64, f64)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let rows: Vec<CliResult<Vec<f64>>> = points
        .par_iter()
        .map(|&(x, y)| {
            let pick = |p: MapParameter, fixed: Option<f64>| {
                if m.x.parameter == p {
                    Some(x)
                } else if m.y.parameter == p {
                    Some(y)
                } else {
                    fixed
                }
            };
            let alpha = pick(MapParameter::Alpha, m.alpha).expect("checked");
            let w0 = pick(MapParameter::ModulationFrequencyMhz, m.modulation_frequency_mhz).expect("checked");
            let mut cfg = base.clone();
            if let Some(v) = pick(MapParameter::InteractionMhz, m.interaction_mhz) {
                cfg = cfg.with_chain_interaction(n, mhz(v))?;
            }
            let ffm = FfmParams::from_index(alpha, mhz(w0))?;
            let schedule = DriveSchedule::single(PulseSegment::ffm(m.duration_us, ffm, mhz(m.detuning_mhz)))?;
            let r = nominal(&cfg, &schedule, ram.as_ref(), &rho0, &times, needs_fidelity)?;
            let pops = population_series(&r, spam)?;
            let get = |label: &str| {
                pops.get(label)
                    .ok_or_else(|| CliError::Validation(format!("map.metrics: unknown label `{label}`")))
            };
            let mut row = vec![x, y];
            for metric in &m.metrics {
                row.push(match metric {
                    MapMetric::TimeAverage { label } => time_average(&times, get(label)?, (0.0, m.duration_us))?,
                    MapMetric::MaxFidelity => {
                        max_in_window(&times, &fidelity_series(&r)?, window(s, &times))?
                    }
                    MapMetric::MaxPopulation { label } => {
                        get(label)?.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    }
                    MapMetric::Final { label } => *get(label)?.last().expect("non-empty"),
                });
            }
            Ok(row)
        })
        .collect();
    let mut header = vec![m.x.parameter.as_str().to_string(), m.y.parameter.as_str().to_string()];
    header.extend(m.metrics.iter().map(MapMetric::column));
    let mut table = Table::new(header);
    for (i, r) in rows.into_iter().enumerate() {
        table.push(r.map_err(|e| match e {
            CliError::Simulation(err) => CliError::Numerical {
                index: i,
                message: err.to_string(),
            },
            other => other,
        })?);
    }
    out.write_csv("map.csv", &table)?;
    out.write_json("bessel_zeros.json", &bessel_zero_sidecar())
}

/// Guide values of α where J₀ or J₁ vanish.
pub fn bessel_zero_sidecar() -> serde_json::Value {
    json!({
        "j0": bessel_j_zeros(0, 4),
        "j1": bessel_j_zeros(1, 4),
    })
}

fn ipr(s: &Scenario, out: &mut OutputDir) -> CliResult<()> {
    let spec = s.ipr.as_ref().expect("required key checked");
    let cfg = s.system_config()?;
    let dop = spec.doppler_mhz.resolve("ipr.doppler_mhz")?;
    let w0 = spec.modulation_frequency_mhz.resolve("ipr.modulation_frequency_mhz")?;
    let dop_rad: Vec<f64> = dop.iter().map(|v| mhz(*v)).collect();
    let w0_rad: Vec<f64> = w0.iter().map(|v| mhz(*v)).collect();
    let grid = ipr_map(&cfg.array, &cfg.lasers, spec.alpha, &dop_rad, &w0_rad)?;
    let mut header = vec!["modulation_frequency_mhz".to_string()];
    header.extend(dop.iter().map(|d| format!("doppler_mhz={d}")));
    let mut t = Table::new(header);
    for (w, row) in w0.iter().zip(grid) {
        let mut r = vec![*w];
        r.extend(row);
        t.push(r);
    }
    out.write_csv("ipr.csv", &t)
}

fn stirap_schedule(spec: &StirapSpec) -> CliResult<DriveSchedule> {
    let profile = spec.mode.profile(spec.total_time_us).map_err(|e| CliError::at("stirap", e))?;
    Ok(DriveSchedule::single(PulseSegment::stirap(profile, mhz(spec.modulation_frequency_mhz)))?)
}

fn stirap(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    let spec = s.stirap.as_ref().expect("required key checked");
    let cfg = s.system_config()?;
    let schedule = stirap_schedule(spec)?;
    let profile = spec.mode.profile(spec.total_time_us).map_err(|e| CliError::at("stirap", e))?;
    let times = uniform_times(0.0, spec.total_time_us, spec.time_points);
    let alphas = times
        .iter()
        .map(|t| profile.alpha_at(*t))
        .collect::<floqryd_core::Result<Vec<_>>>()?;
    let mut summary = json!({
        "mode": spec.mode,
        "total_time_us": spec.total_time_us,
        "alpha_start": alphas[0],
        "alpha_mid": profile.alpha_at(spec.total_time_us / 2.0)?,
        "alpha_end": alphas[alphas.len() - 1],
    });
    if spec.ideal_reference {
        let ideal_cfg = cfg.clone().with_noise(NoiseModel::noiseless());
        let n = cfg.array.len();
        let r = nominal(&ideal_cfg, &schedule, None, &DensityMatrix::ground(n), &times, false)?;
        let pops = population_series(&r, None)?;
        let mut cols = vec![("time_us".to_string(), times.clone()), ("alpha".to_string(), alphas.clone())];
        cols.extend(pops.iter().map(|(k, v)| (k.clone(), v.clone())));
        out.write_csv("ideal.csv", &Table::from_columns(cols))?;
        summary["ideal_final"] = json!(pops
            .iter()
            .map(|(k, v)| (k.clone(), *v.last().expect("non-empty")))
            .collect::<BTreeMap<_, _>>());
    }
    if let Some(n) = s.samples {
        let mut o = EnsembleOptions::new(n, seed, times.clone());
        o.static_interaction = s.output.static_interaction;
        o.spam = s.output.spam_forward.then(|| cfg.spam.clone());
        let stats = run_ensemble(&cfg, &schedule, None, &o)?;
        let mut t = ensemble_table(&stats);
        t.header.insert(1, "alpha".to_string());
        for (row, a) in t.rows.iter_mut().zip(&alphas) {
            row.insert(1, *a);
        }
        out.write_csv("ensemble.csv", &t)?;
        summary["ensemble"] = ensemble_summary(&stats)?;
        summary["ensemble_final_ee"] = json!({
            "mean": stats.mean_of("ee").ok().and_then(|v| v.last().copied()),
            "std": stats.std_of("ee").ok().and_then(|v| v.last().copied()),
        });
    }
    out.write_json("summary.json", &summary)
}

fn calibration(s: &Scenario, out: &mut OutputDir) -> CliResult<()> {
    match s.calibration.as_ref().expect("required key checked") {
        CalibrationSpec::Bessel { chi, alpha } => {
            let a = alpha.resolve("calibration.alpha")?;
            let p: Vec<f64> = a.iter().map(|x| bessel_carrier(*chi, *x)).collect();
            let fit = fit_bessel_carrier(&a, &p)?;
            let chi_fit = fit.get("chi").expect("fit parameter");
            let fitted: Vec<f64> = a.iter().map(|x| bessel_carrier(chi_fit, *x)).collect();
            out.write_csv(
                "data.csv",
                &Table::from_columns(vec![
                    ("alpha".into(), a),
                    ("carrier_power".into(), p),
                    ("fitted".into(), fitted),
                ]),
            )?;
            out.write_json("fit.json", &fit)
        }
        CalibrationSpec::Aod {
            kappa_um_per_mhz,
            delta_u_mhz,
            spacing_mhz,
        } => {
            let f = spacing_mhz.resolve("calibration.spacing_mhz")?;
            let shift: Vec<f64> = f.iter().map(|x| distance_shift(*kappa_um_per_mhz, *delta_u_mhz, *x)).collect();
            let fit = fit_distance_calibration(&f, &shift)?;
            let (k, d) = (fit.get("kappa").expect("fit parameter"), fit.get("delta_u").expect("fit parameter"));
            let fitted: Vec<f64> = f.iter().map(|x| distance_shift(k, d, *x)).collect();
            out.write_csv(
                "data.csv",
                &Table::from_columns(vec![
                    ("spacing_mhz".into(), f),
                    ("shift_mhz".into(), shift),
                    ("fitted".into(), fitted),
                ]),
            )?;
            out.write_json("fit.json", &fit)
        }
        CalibrationSpec::Ram {
            power_to_rabi,
            center_frequency_mhz,
            alpha,
            modulation_frequency_mhz,
            target_power,
            calibrated,
            ripple,
            n_harmonics,
            max_iterations,
        } => {
            let key = "calibration";
            let ffm = FfmParams::from_index(*alpha, mhz(*modulation_frequency_mhz)).map_err(|e| CliError::at(key, e))?;
            let model = AomTransferModel::synthetic(SYNTHETIC_SEED);
            let mut e = RamExperiment::new(model, *center_frequency_mhz, ffm, *target_power)
                .map_err(|e| CliError::at(key, e))?;
            e.calibrated = *calibrated;
            e.synchronous_ripple = RamModel::new(ripple.iter().map(|p| (p[0], p[1])).collect())
                .map_err(|e| CliError::at("calibration.ripple", e))?;
            let mut opts = CompensationOptions::default();
            if let Some(n) = n_harmonics {
                opts.n_harmonics = *n;
            }
            if let Some(n) = max_iterations {
                opts.max_iterations = *n;
            }
            let r = compensate_ram(&e, &opts)?;
            let (t, before) = e.power_trace(&[])?;
            let (_, after) = e.power_trace(&r.harmonics)?;
            out.write_csv(
                "trace.csv",
                &Table::from_columns(vec![
                    ("time_us".into(), t),
                    ("power_initial".into(), before),
                    ("power_compensated".into(), after),
                ]),
            )?;
            out.write_json("compensation.json", &r)?;
            let residual = r.achieved.to_ram_model(*power_to_rabi)?;
            out.write_json(
                "ram_model.json",
                &json!({
                    "power_to_rabi": power_to_rabi,
                    "harmonics": residual.harmonics,
                }),
            )
        }
    }
}

fn connectivity(s: &Scenario, out: &mut OutputDir) -> CliResult<()> {
    let c = s.connectivity.as_ref().expect("required key checked");
    let cfg = s.system_config()?;
    let statics = c.static_interaction_mhz.resolve("connectivity.static_interaction_mhz")?;
    let opts = ConnectivityOptions {
        window: c.window_us,
        time_points: c.time_points,
    };
    let to_rad = |v: &[f64]| v.iter().map(|x| mhz(*x)).collect::<Vec<_>>();
    let report = connectivity_report(
        &cfg,
        mhz(c.modulation_frequency_mhz),
        &c.alpha,
        &to_rad(&c.ffm_interaction_mhz),
        &to_rad(&statics),
        &opts,
    )
    .map_err(|e| match e {
        floqryd_core::Error::InvalidConfig(m) => CliError::Validation(format!("connectivity: {m}")),
        other => other.into(),
    })?;
    let mut ffm = Table::new([
        "alpha",
        "interaction_mhz",
        "max_fidelity",
        "matched_static_interaction_mhz",
        "extension_factor",
    ]);
    for p in &report.ffm {
        ffm.push(vec![
            p.alpha,
            to_mhz(p.interaction),
            p.max_fidelity,
            p.matched_static_interaction.map_or(f64::NAN, to_mhz),
            p.extension_factor.unwrap_or(f64::NAN),
        ]);
    }
    let mut st = Table::new(["interaction_mhz", "max_fidelity"]);
    for p in &report.static_drive {
        st.push(vec![to_mhz(p.interaction), p.max_fidelity]);
    }
    out.write_csv("connectivity_ffm.csv", &ffm)?;
    out.write_csv("connectivity_static.csv", &st)?;
    out.write_json(
        "summary.json",
        &json!({
            "modulation_frequency_mhz": c.modulation_frequency_mhz,
            "window_us": c.window_us,
            "time_points": c.time_points,
            "ffm": report.ffm.iter().map(|p| json!({
                "alpha": p.alpha,
                "interaction_mhz": to_mhz(p.interaction),
                "max_fidelity": p.max_fidelity,
                "matched_static_interaction_mhz": p.matched_static_interaction.map(to_mhz),
                "extension_factor": p.extension_factor,
            })).collect::<Vec<_>>(),
        }),
    )
}

fn hold_scan(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    let h = s.hold.as_ref().expect("required key checked");
    let cfg = s.system_config()?;
    let scan = HoldScan {
        hold: h.drive.to_hold("hold.drive")?,
        hold_times: h.times.resolve("hold.times")?,
        n_samples: s.samples.expect("checked"),
        seed,
        spam: s.output.spam_forward.then(|| cfg.spam.clone()),
        evolve: EvolveOptions::default(),
    };
    let r = run_hold_scan(&cfg, &scan)?;
    out.write_csv(
        "hold.csv",
        &Table::from_columns(vec![
            ("hold_us".into(), r.hold_times.clone()),
            ("mean_gg".into(), r.mean_ground.clone()),
            ("std_gg".into(), r.std_ground.clone()),
        ]),
    )?;
    let fit = fit_exponential_decay(&r.hold_times, &r.mean_ground)?;
    out.write_json("fit.json", &fit)?;
    out.write_json(
        "summary.json",
        &json!({
            "drive": h.drive.name(),
            "sample_count": scan.n_samples,
            "seed": seed,
            "fit": fit_summary(&fit),
        }),
    )
}

fn doppler_scan(s: &Scenario, seed: u64, out: &mut OutputDir) -> CliResult<()> {
    let d = s.doppler.as_ref().expect("required key checked");
    let cfg = s.system_config()?;
    let widths = d.widths_mhz.resolve("doppler.widths_mhz")?;
    let mut cols = vec![("width_mhz".to_string(), widths.clone())];
    for (i, drive) in d.drives.iter().enumerate() {
        let scan = DopplerScan {
            hold: drive.to_hold(&format!("doppler.drives[{i}]"))?,
            duration: d.duration_us,
            widths: widths.iter().map(|w| mhz(*w)).collect(),
            n_samples: s.samples.expect("checked"),
            seed,
            evolve: EvolveOptions::default(),
        };
        let r = run_doppler_scan(&cfg, &scan)?;
        cols.push((format!("mean_fidelity_{}", drive.name()), r.mean_fidelity));
        cols.push((format!("std_fidelity_{}", drive.name()), r.std_fidelity));
    }
    out.write_csv("doppler.csv", &Table::from_columns(cols))
}

/// Reads a manifest back and checks every listed file against its checksum.
pub fn verify_manifest(dir: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(dir.join(MANIFEST))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Io(e.to_string()))?;
    let mut bad = Vec::new();
    for f in v["files"].as_array().cloned().unwrap_or_default() {
        let path = f["path"].as_str().unwrap_or_default();
        match std::fs::read(dir.join(path)) {
            Ok(bytes) if Some(sha256_hex(&bytes).as_str()) == f["sha256"].as_str() => {}
            _ => bad.push(path.to_string()),
        }
    }
    Ok(bad)
}
