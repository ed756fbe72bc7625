//! Classical Monte Carlo over thermal position and velocity disorder.
//!
//! Each sample gets its own ChaCha20 stream selected by the sample index, so
//! results do not depend on how samples are scheduled across threads. The
//! reduction over samples always runs in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianBuilder;
use crate::lindblad::{build_dissipators, evolve, DensityMatrix, EvolveOptions};
use crate::linalg::ComplexMatrix;
use crate::observables::{apply_spam, populations_from_diagonal, w_fidelity, WReference};
use crate::schedule::{pi_pulse_duration, DriveSchedule, FfmParams, PulseSegment, RamModel};
use crate::system::{distance, AtomArray, LaserParams, SpamModel, SystemConfig, ThermalEnsemble, Vec3};

/// Name of the W-fidelity series in [`EnsembleStats`].
pub const FIDELITY: &str = "fidelity";

/// One disorder draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderSample {
    pub positions: Vec<Vec3>,
    /// µm/µs.
    pub velocities: Vec<Vec3>,
    /// k·v along the beam (rad/µs).
    pub doppler_shifts: Vec<f64>,
}

/// The random stream for sample `index` of a run seeded with `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map(|d| d.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

/// Positions scattered about the nominal sites with the radial (x, y) and
/// axial (z) widths; velocities per component from the motion model.
pub fn draw_sample<R: Rng + ?Sized>(
    ensemble: &ThermalEnsemble,
    array: &AtomArray,
    lasers: &LaserParams,
    rng: &mut R,
) -> DisorderSample {
    let (sr, sz) = ensemble.position_sigmas();
    let (vr, vz) = ensemble.velocity_sigmas();
    let mut positions = Vec::with_capacity(array.len());
    let mut velocities = Vec::with_capacity(array.len());
    for p in array.positions() {
        positions.push([
            p[0] + gaussian(rng, sr),
            p[1] + gaussian(rng, sr),
            p[2] + gaussian(rng, sz),
        ]);
        velocities.push([gaussian(rng, vr), gaussian(rng, vr), gaussian(rng, vz)]);
    }
    let doppler_shifts = velocities
        .iter()
        .map(|v| lasers.effective_wavevector * lasers.along_beam(v))
        .collect();
    DisorderSample {
        positions,
        velocities,
        doppler_shifts,
    }
}

/// Separation of atoms `i` and `j` after `t` µs of straight-line flight.
pub fn time_of_flight_distance(sample: &DisorderSample, i: usize, j: usize, t: f64) -> Result<f64> {
    let n = sample.positions.len();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, count: n });
        }
    }
    if i == j {
        return Err(Error::SameAtom(i));
    }
    let at = |k: usize| -> Vec3 {
        let (p, v) = (sample.positions[k], sample.velocities[k]);
        [p[0] + v[0] * t, p[1] + v[1] * t, p[2] + v[2] * t]
    };
    Ok(distance(&at(i), &at(j)))
}

#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub n_samples: usize,
    pub seed: u64,
    /// Freeze V_ij at the sampled initial separation.
    pub static_interaction: bool,
    pub sample_times: Vec<f64>,
    /// Integration span; defaults to the whole schedule.
    pub t_span: Option<(f64, f64)>,
    /// Defaults to |g…g⟩.
    pub initial: Option<DensityMatrix>,
    pub evolve: EvolveOptions,
    /// Times over which each sample's maximum fidelity is taken; defaults to
    /// all sample times.
    pub fidelity_window: Option<(f64, f64)>,
    /// Forward readout-error transform applied to each sample's populations.
    pub spam: Option<SpamModel>,
}

impl EnsembleOptions {
    pub fn new(n_samples: usize, seed: u64, sample_times: Vec<f64>) -> Self {
        Self {
            n_samples,
            seed,
            static_interaction: false,
            sample_times,
            t_span: None,
            initial: None,
            evolve: EvolveOptions::default(),
            fidelity_window: None,
            spam: None,
        }
    }
}

/// Per-time mean and standard deviation (n − 1 normalization) of each series.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `mean[series][time]`.
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub sample_count: usize,
    pub seed: u64,
    /// Each sample's maximum W fidelity over the fidelity window.
    pub max_fidelity: Vec<f64>,
    /// W fidelity of the ensemble-averaged density matrix.
    pub fidelity_of_mean: Vec<f64>,
}

impl EnsembleStats {
    fn index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn mean_of(&self, label: &str) -> Result<&[f64]> {
        Ok(&self.mean[self.index(label)?])
    }

    pub fn std_of(&self, label: &str) -> Result<&[f64]> {
        Ok(&self.std[self.index(label)?])
    }

    /// Mean and standard deviation of the per-sample maximum fidelity.
    pub fn max_fidelity_summary(&self) -> (f64, f64) {
        mean_std(&self.max_fidelity)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

struct SampleOutcome {
    labels: Vec<String>,
    series: Vec<Vec<f64>>,
    max_fidelity: f64,
    snapshots: Vec<ComplexMatrix>,
}

/// Builds the Hamiltonian for one disorder draw.
pub fn sample_builder(
    config: &SystemConfig,
    schedule: &DriveSchedule,
    ram: Option<&RamModel>,
    sample: &DisorderSample,
    static_interaction: bool,
) -> Result<HamiltonianBuilder> {
    let array = config.array.with_positions(sample.positions.clone())?;
    let mut b = HamiltonianBuilder::new(array, config.lasers.clone(), schedule.clone())?
        .with_ram(ram.cloned())
        .with_doppler(sample.doppler_shifts.clone())?;
    if !static_interaction && config.thermal.free_flight() {
        b = b.with_velocities(&sample.velocities)?;
    }
    Ok(b)
}

fn run_sample(
    config: &SystemConfig,
    schedule: &DriveSchedule,
    ram: Option<&RamModel>,
    options: &EnsembleOptions,
    index: usize,
) -> Result<SampleOutcome> {
    let mut rng = sample_rng(options.seed, index as u64);
    let sample = draw_sample(&config.thermal, &config.array, &config.lasers, &mut rng);
    let builder = sample_builder(config, schedule, ram, &sample, options.static_interaction)?;
    let n = config.array.len();
    let dissipators = build_dissipators(&config.noise, n)?;
    let rho0 = options.initial.clone().unwrap_or_else(|| DensityMatrix::ground(n));
    let span = options.t_span.unwrap_or((0.0, schedule.total_duration()));
    let evolve_options = EvolveOptions {
        keep_snapshots: true,
        ..options.evolve
    };
    let traj = evolve(&builder, &dissipators, &rho0, span, &options.sample_times, &evolve_options)?;
    let reference = WReference::symmetric(n);
    let mut labels: Vec<String> = Vec::new();
    let mut series: Vec<Vec<f64>> = Vec::new();
    let mut fidelity = Vec::with_capacity(traj.times.len());
    for (k, rho) in traj.snapshots.iter().enumerate() {
        let diag = match &options.spam {
            Some(spam) => apply_spam(&renormalized(&traj.populations[k]), spam)?,
            None => traj.populations[k].clone(),
        };
        let pops = populations_from_diagonal(&diag, n);
        if k == 0 {
            labels = pops.keys().cloned().collect();
            series = vec![Vec::with_capacity(traj.times.len()); labels.len()];
        }
        for (s, v) in series.iter_mut().zip(pops.values()) {
            s.push(*v);
        }
        fidelity.push(w_fidelity(rho, &reference)?);
    }
    let window = options.fidelity_window.unwrap_or((
        *traj.times.first().unwrap_or(&0.0),
        *traj.times.last().unwrap_or(&0.0),
    ));
    let max_fidelity = crate::observables::max_in_window(&traj.times, &fidelity, window)?;
    labels.push(FIDELITY.to_string());
    series.push(fidelity);
    Ok(SampleOutcome {
        labels,
        series,
        max_fidelity,
        snapshots: traj.snapshots.into_iter().map(|r| r.matrix().clone()).collect(),
    })
}

// the integrator keeps the trace to ~1e-9; the readout transform wants 1e-9
fn renormalized(p: &[f64]) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    p.iter().map(|x| x / s).collect()
}

/// Runs one master-equation evolution per disorder sample and aggregates
/// the per-time statistics.
pub fn run_ensemble(
    config: &SystemConfig,
    schedule: &DriveSchedule,
    ram: Option<&RamModel>,
    options: &EnsembleOptions,
) -> Result<EnsembleStats> {
    if options.n_samples < 2 {
        return Err(Error::InsufficientSamples(format!(
            "an ensemble needs at least 2 samples, got {}",
            options.n_samples
        )));
    }
    if options.sample_times.is_empty() {
        return Err(Error::InsufficientData("no sample times".into()));
    }
    config.lasers.validate()?;
    config.noise.validate()?;

    let outcomes: Vec<Result<SampleOutcome>> = (0..options.n_samples)
        .into_par_iter()
        .map(|i| run_sample(config, schedule, ram, options, i))
        .collect();
    let mut results = Vec::with_capacity(outcomes.len());
    for (index, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => results.push(v),
            Err(e) => {
                return Err(Error::SampleFailed {
                    index,
                    source: Box::new(e),
                })
            }
        }
    }

    let labels = results[0].labels.clone();
    let n_series = labels.len();
    let n_times = options.sample_times.len();
    let n = results.len() as f64;
    let mut mean = vec![vec![0.0; n_times]; n_series];
    let mut std = vec![vec![0.0; n_times]; n_series];
    for s in 0..n_series {
        for t in 0..n_times {
            let mut acc = 0.0;
            for r in &results {
                acc += r.series[s][t];
            }
            let m = acc / n;
            let mut var = 0.0;
            for r in &results {
                let d = r.series[s][t] - m;
                var += d * d;
            }
            mean[s][t] = m;
            std[s][t] = (var / (n - 1.0)).sqrt();
        }
    }

    let n_atoms = config.array.len();
    let reference = WReference::symmetric(n_atoms);
    let mut fidelity_of_mean = Vec::with_capacity(n_times);
    for t in 0..n_times {
        let dim = results[0].snapshots[t].rows();
        let mut acc = ComplexMatrix::zeros(dim, dim);
        for r in &results {
            acc = &acc + &r.snapshots[t];
        }
        let avg = acc.scale_real(1.0 / n);
        let rho = DensityMatrix::new(avg).map_err(|e| Error::InvariantViolation {
            t: options.sample_times[t],
            what: format!("ensemble-mean state: {e}"),
        })?;
        fidelity_of_mean.push(w_fidelity(&rho, &reference)?);
    }

    Ok(EnsembleStats {
        times: options.sample_times.clone(),
        labels,
        mean,
        std,
        sample_count: results.len(),
        seed: options.seed,
        max_fidelity: results.iter().map(|r| r.max_fidelity).collect(),
        fidelity_of_mean,
    })
}

/// What drives the atoms between the two π pulses of a hold scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoldKind {
    Ffm(FfmParams),
    LaserFree,
    Static,
}

impl HoldKind {
    pub fn segment(&self, duration: f64) -> PulseSegment {
        match self {
            HoldKind::Ffm(ffm) => PulseSegment::ffm(duration, *ffm, 0.0),
            HoldKind::LaserFree => PulseSegment::laser_free(duration),
            HoldKind::Static => PulseSegment::static_drive(duration, 0.0),
        }
    }
}

/// W lifetime measurement: a resonant collective π pulse prepares |W⟩, the
/// atoms are held for a variable time, and a second π pulse maps the
/// surviving |W⟩ back to |g…g⟩.
#[derive(Debug, Clone)]
pub struct HoldScan {
    pub hold: HoldKind,
    pub hold_times: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub spam: Option<SpamModel>,
    pub evolve: EvolveOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldScanResult {
    pub hold_times: Vec<f64>,
    /// Ensemble mean and standard deviation of the final |g…g⟩ population.
    pub mean_ground: Vec<f64>,
    pub std_ground: Vec<f64>,
}

fn hold_schedule(pi: f64, hold: &HoldKind, duration: f64) -> Result<DriveSchedule> {
    DriveSchedule::new(vec![
        PulseSegment::static_drive(pi, 0.0),
        hold.segment(duration),
        PulseSegment::static_drive(pi, 0.0),
    ])
}

fn hold_sample(config: &SystemConfig, scan: &HoldScan, index: usize) -> Result<Vec<f64>> {
    let pi = pi_pulse_duration(&config.lasers, true);
    let t_max = scan.hold_times.iter().cloned().fold(0.0, f64::max);
    let mut rng = sample_rng(scan.seed, index as u64);
    let sample = draw_sample(&config.thermal, &config.array, &config.lasers, &mut rng);
    let n = config.array.len();
    let dissipators = build_dissipators(&config.noise, n)?;
    let long = hold_schedule(pi, &scan.hold, t_max)?;
    let builder = sample_builder(config, &long, None, &sample, false)?;
    let marks: Vec<f64> = scan.hold_times.iter().map(|t| pi + t).collect();
    let opts = EvolveOptions {
        keep_snapshots: true,
        ..scan.evolve
    };
    let held = evolve(&builder, &dissipators, &DensityMatrix::ground(n), (0.0, pi + t_max), &marks, &opts)?;
    let mut out = Vec::with_capacity(marks.len());
    for (t_hold, rho) in scan.hold_times.iter().zip(&held.snapshots) {
        let schedule = hold_schedule(pi, &scan.hold, *t_hold)?;
        let b = builder.clone().with_schedule(schedule);
        let end = 2.0 * pi + t_hold;
        let fin = evolve(&b, &dissipators, rho, (pi + t_hold, end), &[end], &opts)?;
        let diag = match &scan.spam {
            Some(spam) => apply_spam(&renormalized(&fin.populations[0]), spam)?,
            None => fin.populations[0].clone(),
        };
        out.push(diag[0]);
    }
    Ok(out)
}

/// Runs a [`HoldScan`] over the disorder ensemble.
pub fn run_hold_scan(config: &SystemConfig, scan: &HoldScan) -> Result<HoldScanResult> {
    if scan.n_samples < 2 {
        return Err(Error::InsufficientSamples(format!(
            "an ensemble needs at least 2 samples, got {}",
            scan.n_samples
        )));
    }
    if scan.hold_times.is_empty() || scan.hold_times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidConfig("hold times must be non-empty and non-negative".into()));
    }
    let outcomes: Vec<Result<Vec<f64>>> = (0..scan.n_samples)
        .into_par_iter()
        .map(|i| hold_sample(config, scan, i))
        .collect();
    let mut rows = Vec::with_capacity(outcomes.len());
    for (index, o) in outcomes.into_iter().enumerate() {
        rows.push(o.map_err(|e| Error::SampleFailed {
            index,
            source: Box::new(e),
        })?);
    }
    let mut mean_ground = Vec::with_capacity(scan.hold_times.len());
    let mut std_ground = Vec::with_capacity(scan.hold_times.len());
    for k in 0..scan.hold_times.len() {
        let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
        let (m, s) = mean_std(&col);
        mean_ground.push(m);
        std_ground.push(s);
    }
    Ok(HoldScanResult {
        hold_times: scan.hold_times.clone(),
        mean_ground,
        std_ground,
    })
}

/// |W⟩ survival after a fixed hold with independent Gaussian Doppler shifts
/// on each atom; atoms sit at their nominal sites.
#[derive(Debug, Clone)]
pub struct DopplerScan {
    pub hold: HoldKind,
    pub duration: f64,
    /// Per-atom Doppler standard deviations (rad/µs).
    pub widths: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub evolve: EvolveOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DopplerScanResult {
    pub widths: Vec<f64>,
    pub mean_fidelity: Vec<f64>,
    pub std_fidelity: Vec<f64>,
}

fn doppler_sample(config: &SystemConfig, scan: &DopplerScan, width: usize, index: usize) -> Result<f64> {
    let stream = (width * scan.n_samples + index) as u64;
    let mut rng = sample_rng(scan.seed, stream);
    let n = config.array.len();
    let offsets: Vec<f64> = (0..n).map(|_| gaussian(&mut rng, scan.widths[width])).collect();
    let schedule = DriveSchedule::single(scan.hold.segment(scan.duration))?;
    let builder = HamiltonianBuilder::new(config.array.clone(), config.lasers.clone(), schedule)?.with_doppler(offsets)?;
    let dissipators = build_dissipators(&config.noise, n)?;
    let reference = WReference::symmetric(n);
    let rho0 = DensityMatrix::pure(&reference.state())?;
    let opts = EvolveOptions {
        keep_snapshots: true,
        ..scan.evolve
    };
    let r = evolve(&builder, &dissipators, &rho0, (0.0, scan.duration), &[scan.duration], &opts)?;
    w_fidelity(&r.snapshots[0], &reference)
}

/// Runs a [`DopplerScan`]; sample `i` of width `w` uses stream `w·n + i`.
pub fn run_doppler_scan(config: &SystemConfig, scan: &DopplerScan) -> Result<DopplerScanResult> {
    if scan.n_samples < 2 {
        return Err(Error::InsufficientSamples(format!(
            "an ensemble needs at least 2 samples, got {}",
            scan.n_samples
        )));
    }
    if scan.widths.is_empty() || scan.widths.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidConfig("Doppler widths must be non-empty and non-negative".into()));
    }
    if !(scan.duration > 0.0) {
        return Err(Error::InvalidConfig(format!("hold duration must be positive, got {}", scan.duration)));
    }
    let jobs: Vec<(usize, usize)> = (0..scan.widths.len())
        .flat_map(|w| (0..scan.n_samples).map(move |i| (w, i)))
        .collect();
    let outcomes: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(w, i)| doppler_sample(config, scan, w, i))
        .collect();
    let mut values = vec![Vec::with_capacity(scan.n_samples); scan.widths.len()];
    for (&(w, i), o) in jobs.iter().zip(outcomes) {
        values[w].push(o.map_err(|e| Error::SampleFailed {
            index: i,
            source: Box::new(e),
        })?);
    }
    let (mean_fidelity, std_fidelity) = values.iter().map(|v| mean_std(v)).unzip();
    Ok(DopplerScanResult {
        widths: scan.widths.clone(),
        mean_fidelity,
        std_fidelity,
    })
}
