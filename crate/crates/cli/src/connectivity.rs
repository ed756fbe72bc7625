//! Maximum W fidelity under FFM versus static drive, and the static
//! interaction needed to match each FFM point.

use rayon::prelude::*;
use serde::Serialize;

use floqryd_core::hamiltonian::HamiltonianBuilder;
use floqryd_core::lindblad::{build_dissipators, evolve, uniform_times, DensityMatrix, EvolveOptions};
use floqryd_core::observables::{max_in_window, w_fidelity, WReference};
use floqryd_core::schedule::{DriveSchedule, FfmParams, PulseSegment};
use floqryd_core::system::{AtomArray, SystemConfig};
use floqryd_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectivityOptions {
    /// µs.
    pub window: f64,
    pub time_points: usize,
}

impl Default for ConnectivityOptions {
    fn default() -> Self {
        Self {
            window: 5.0,
            time_points: 5001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FfmPoint {
    pub alpha: f64,
    /// rad/µs.
    pub interaction: f64,
    pub max_fidelity: f64,
    /// Smallest static V reaching the same fidelity, if any on the grid.
    pub matched_static_interaction: Option<f64>,
    /// `(V_static / V_ffm)^{1/6}`.
    pub extension_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticPoint {
    pub interaction: f64,
    pub max_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityReport {
    pub modulation_frequency: f64,
    pub ffm: Vec<FfmPoint>,
    pub static_drive: Vec<StaticPoint>,
}

/// Maximum over `[0, window]` of the W fidelity of one nominal pair trajectory.
pub fn max_pair_fidelity(config: &SystemConfig, v: f64, segment: PulseSegment, opts: &ConnectivityOptions) -> Result<f64> {
    let array = AtomArray::chain_with_interaction(2, v, config.array.c6())?;
    let builder = HamiltonianBuilder::new(array, config.lasers.clone(), DriveSchedule::single(segment)?)?;
    let dissipators = build_dissipators(&config.noise, 2)?;
    let times = uniform_times(0.0, opts.window, opts.time_points);
    let r = evolve(
        &builder,
        &dissipators,
        &DensityMatrix::ground(2),
        (0.0, opts.window),
        &times,
        &EvolveOptions::default(),
    )?;
    let w = WReference::symmetric(2);
    let f = r
        .snapshots
        .iter()
        .map(|s| w_fidelity(s, &w))
        .collect::<Result<Vec<_>>>()?;
    max_in_window(&times, &f, (0.0, opts.window))
}

/// First V on the ascending grid whose fidelity reaches `target`, linearly
/// interpolated between the bracketing points.
pub fn first_crossing(points: &[StaticPoint], target: f64) -> Option<f64> {
    let first = points.first()?;
    if first.max_fidelity >= target {
        return Some(first.interaction);
    }
    points.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        (a.max_fidelity < target && b.max_fidelity >= target).then(|| {
            let s = (target - a.max_fidelity) / (b.max_fidelity - a.max_fidelity);
            a.interaction + s * (b.interaction - a.interaction)
        })
    })
}

/// FFM points are the product `alpha_grid × ffm_interactions`; all
/// interactions and `omega0` in rad/µs. `static_interactions` must ascend.
pub fn connectivity_report(
    config: &SystemConfig,
    omega0: f64,
    alpha_grid: &[f64],
    ffm_interactions: &[f64],
    static_interactions: &[f64],
    opts: &ConnectivityOptions,
) -> Result<ConnectivityReport> {
    if alpha_grid.is_empty() || ffm_interactions.is_empty() || static_interactions.is_empty() {
        return Err(Error::InvalidConfig("connectivity grids must be non-empty".into()));
    }
    if static_interactions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig("static interaction grid must be strictly ascending".into()));
    }
    if !(opts.window > 0.0) || opts.time_points < 2 {
        return Err(Error::InvalidConfig("connectivity window needs a positive span and at least 2 points".into()));
    }
    let static_drive = static_interactions
        .par_iter()
        .map(|&v| {
            Ok(StaticPoint {
                interaction: v,
                max_fidelity: max_pair_fidelity(config, v, PulseSegment::static_drive(opts.window, 0.0), opts)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(f64, f64)> = alpha_grid
        .iter()
        .flat_map(|&a| ffm_interactions.iter().map(move |&v| (a, v)))
        .collect();
    let ffm = jobs
        .par_iter()
        .map(|&(alpha, v)| {
            let p = FfmParams::from_index(alpha, omega0)?;
            let f = max_pair_fidelity(config, v, PulseSegment::ffm(opts.window, p, 0.0), opts)?;
            let matched = first_crossing(&static_drive, f);
            Ok(FfmPoint {
                alpha,
                interaction: v,
                max_fidelity: f,
                matched_static_interaction: matched,
                extension_factor: matched.map(|m| (m / v).powf(1.0 / 6.0)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConnectivityReport {
        modulation_frequency: omega0,
        ffm,
        static_drive,
    })
}
