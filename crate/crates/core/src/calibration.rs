//! AOM transfer model, residual-amplitude-modulation (RAM) extraction and
//! gradient-descent harmonic compensation.
//!
//! AOM frequencies are in MHz. Power is in arbitrary units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{FfmParams, RamModel};

use std::f64::consts::PI;

/// Coefficients `c₀ + c₁x + c₂x² + …` in `x = f − f_ref`.
pub fn polynomial(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Quadratic drive pre-correction `V → V / (a(f − f_c)² + c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precorrection {
    pub a: f64,
    pub f_c: f64,
    pub c: f64,
}

impl Precorrection {
    pub fn apply(&self, f: f64, v: f64) -> f64 {
        v / (self.a * (f - self.f_c).powi(2) + self.c)
    }
}

/// `P(f, V) = A(f)·tanh((V − V₀(f))/σ(f)) + C(f)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AomTransferModel {
    pub reference_frequency: f64,
    pub band: (f64, f64),
    pub amplitude: Vec<f64>,
    pub center: Vec<f64>,
    pub width: Vec<f64>,
    pub offset: Vec<f64>,
    #[serde(default)]
    pub precorrection: Option<Precorrection>,
}

/// Seed of the synthetic model shipped in `data/aom_synthetic.json`.
pub const SYNTHETIC_SEED: u64 = 7;

const BAND_CHECK_POINTS: usize = 401;

impl AomTransferModel {
    /// Frequency-independent model.
    pub fn flat(amplitude: f64, center: f64, width: f64, offset: f64, band: (f64, f64)) -> Result<Self> {
        let m = Self {
            reference_frequency: 0.5 * (band.0 + band.1),
            band,
            amplitude: vec![amplitude],
            center: vec![center],
            width: vec![width],
            offset: vec![offset],
            precorrection: None,
        };
        m.validate()?;
        Ok(m)
    }

    /// Second-order model with coefficients drawn from a seeded generator,
    /// standing in for a measured hardware curve. Band 50–110 MHz.
    pub fn synthetic(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let amplitude = vec![0.5, u(-3e-3, 3e-3), u(-1.5e-4, -5e-5)];
        let center = vec![0.35, u(-1e-3, 1e-3), u(-2e-5, 2e-5)];
        let width = vec![0.15, u(-5e-4, 5e-4), u(0.0, 1e-5)];
        let offset = amplitude.clone();
        Self {
            reference_frequency: 80.0,
            band: (50.0, 110.0),
            amplitude,
            center,
            width,
            offset,
            precorrection: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.band;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidConfig(format!("invalid AOM band [{lo}, {hi}]")));
        }
        for (name, c) in [
            ("amplitude", &self.amplitude),
            ("center", &self.center),
            ("width", &self.width),
            ("offset", &self.offset),
        ] {
            if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("AOM {name} polynomial is empty or non-finite")));
            }
        }
        for k in 0..BAND_CHECK_POINTS {
            let f = lo + (hi - lo) * k as f64 / (BAND_CHECK_POINTS - 1) as f64;
            let p = self.parameters_unchecked(f);
            if !(p.2 > 0.0) {
                return Err(Error::InvalidConfig(format!("AOM width σ({f} MHz) = {} ≤ 0", p.2)));
            }
            if p.0 == 0.0 {
                return Err(Error::InvalidConfig(format!("AOM amplitude A({f} MHz) = 0")));
            }
        }
        Ok(())
    }

    fn parameters_unchecked(&self, f: f64) -> (f64, f64, f64, f64) {
        let x = f - self.reference_frequency;
        (
            polynomial(&self.amplitude, x),
            polynomial(&self.center, x),
            polynomial(&self.width, x),
            polynomial(&self.offset, x),
        )
    }

    fn check_band(&self, f: f64) -> Result<()> {
        let (lo, hi) = self.band;
        let slack = 1e-9 * (hi - lo);
        if !(f >= lo - slack && f <= hi + slack) {
            return Err(Error::FrequencyOutOfBand { f, lo, hi });
        }
        Ok(())
    }

    /// `(A, V₀, σ, C)` at frequency `f`.
    pub fn parameters(&self, f: f64) -> Result<(f64, f64, f64, f64)> {
        self.check_band(f)?;
        Ok(self.parameters_unchecked(f))
    }

    /// Optical power for raw drive amplitude `v` at frequency `f`.
    pub fn simulated_power(&self, f: f64, v: f64) -> Result<f64> {
        let (a, v0, s, c) = self.parameters(f)?;
        Ok(a * ((v - v0) / s).tanh() + c)
    }

    /// Raw drive amplitude producing `target` at `f`.
    pub fn drive_for_power(&self, f: f64, target: f64) -> Result<f64> {
        let (a, v0, s, c) = self.parameters(f)?;
        let x = (target - c) / a;
        if !(x.abs() < 1.0) {
            return Err(Error::TargetUnreachable {
                target,
                lo: c - a.abs(),
                hi: c + a.abs(),
            });
        }
        Ok(v0 + s * x.atanh())
    }

    /// Drive actually reaching the AOM for a commanded amplitude.
    pub fn precorrected_drive(&self, f: f64, v: f64) -> f64 {
        match &self.precorrection {
            Some(p) => p.apply(f, v),
            None => v,
        }
    }
}

/// Relative power envelope `1 + Σ (A_n sin nω₀t + B_n cos nω₀t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RamSpectrum {
    /// `(n, A_n, B_n)`.
    pub harmonics: Vec<(usize, f64, f64)>,
    /// ω₀ (rad/µs).
    pub fundamental: f64,
    /// Mean of the trace used for normalization.
    pub mean_power: f64,
    pub peak_to_peak_fraction: f64,
}

/// How a relative power ripple becomes a relative Rabi-amplitude ripple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerToRabi {
    /// Rabi amplitude follows power one to one.
    Direct,
    /// Rabi amplitude follows the field, Ω ∝ √P.
    SquareRoot,
}

const ENVELOPE_GRID: usize = 1024;

/// Peak-to-peak of `1 + Σ(A sin nφ + B cos nφ)` over one period.
pub fn envelope_peak_to_peak(harmonics: &[(usize, f64, f64)]) -> f64 {
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for k in 0..ENVELOPE_GRID {
        let phi = 2.0 * PI * k as f64 / ENVELOPE_GRID as f64;
        let v = 1.0
            + harmonics
                .iter()
                .map(|(n, a, b)| a * (*n as f64 * phi).sin() + b * (*n as f64 * phi).cos())
                .sum::<f64>();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

impl RamSpectrum {
    /// Rabi-amplitude RAM for the Hamiltonian under the chosen conversion.
    pub fn to_ram_model(&self, conversion: PowerToRabi) -> Result<RamModel> {
        let max_n = self.harmonics.iter().map(|h| h.0).max().unwrap_or(0);
        let mut coeffs = vec![(0.0, 0.0); max_n];
        match conversion {
            PowerToRabi::Direct => {
                for (n, a, b) in &self.harmonics {
                    coeffs[n - 1] = (*a, *b);
                }
            }
            PowerToRabi::SquareRoot => {
                // project √envelope back onto the same harmonics
                let m = ENVELOPE_GRID;
                let env: Vec<f64> = (0..m)
                    .map(|k| {
                        let phi = 2.0 * PI * k as f64 / m as f64;
                        1.0 + self
                            .harmonics
                            .iter()
                            .map(|(n, a, b)| a * (*n as f64 * phi).sin() + b * (*n as f64 * phi).cos())
                            .sum::<f64>()
                    })
                    .collect();
                if env.iter().any(|v| *v < 0.0) {
                    return Err(Error::InvalidConfig("RAM envelope goes negative".into()));
                }
                let roots: Vec<f64> = env.iter().map(|v| v.sqrt()).collect();
                let dc = roots.iter().sum::<f64>() / m as f64;
                for (n, coeff) in coeffs.iter_mut().enumerate() {
                    let n = (n + 1) as f64;
                    let (mut a, mut b) = (0.0, 0.0);
                    for (k, r) in roots.iter().enumerate() {
                        let phi = 2.0 * PI * k as f64 / m as f64;
                        a += r * (n * phi).sin();
                        b += r * (n * phi).cos();
                    }
                    *coeff = (2.0 * a / (m as f64 * dc), 2.0 * b / (m as f64 * dc));
                }
            }
        }
        RamModel::new(coeffs)
    }
}

/// Number of harmonics extracted by [`ram_spectrum`].
pub const RAM_HARMONICS: usize = 4;
pub const MIN_PERIODS: usize = 4;
pub const MIN_SAMPLES_PER_PERIOD: usize = 32;

/// Harmonic content of a power trace sampled uniformly over an integer
/// number of modulation periods.
pub fn ram_spectrum(times: &[f64], trace: &[f64], omega0: f64) -> Result<RamSpectrum> {
    if times.len() != trace.len() || times.len() < 2 {
        return Err(Error::InsufficientSamples("trace and time lengths differ or fewer than 2 samples".into()));
    }
    if !(omega0 > 0.0) {
        return Err(Error::InvalidConfig(format!("modulation frequency must be positive, got {omega0}")));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::InsufficientSamples("non-increasing sample times".into()));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::InsufficientSamples("samples are not uniformly spaced".into()));
        }
    }
    let period = 2.0 * PI / omega0;
    let span = times[times.len() - 1] - times[0] + dt;
    let periods = (span / period + 1e-9).floor() as usize;
    if periods < MIN_PERIODS {
        return Err(Error::InsufficientSamples(format!(
            "trace spans {periods} periods, need {MIN_PERIODS}"
        )));
    }
    let per_period = period / dt;
    if per_period + 1e-9 < MIN_SAMPLES_PER_PERIOD as f64 {
        return Err(Error::InsufficientSamples(format!(
            "{per_period:.1} samples per period, need {MIN_SAMPLES_PER_PERIOD}"
        )));
    }
    let k = (periods as f64 * period / dt).round() as usize;
    if ((k as f64) * dt - periods as f64 * period).abs() > 1e-6 * dt {
        return Err(Error::InsufficientSamples(
            "sample grid does not close on an integer number of periods".into(),
        ));
    }
    let k = k.min(trace.len());
    let used = &trace[..k];
    let mean = used.iter().sum::<f64>() / k as f64;
    if mean == 0.0 {
        return Err(Error::InsufficientSamples("trace has zero mean".into()));
    }
    let t0 = times[0];
    let harmonics: Vec<(usize, f64, f64)> = (1..=RAM_HARMONICS)
        .map(|n| {
            let (mut a, mut b) = (0.0, 0.0);
            for (j, p) in used.iter().enumerate() {
                let phi = n as f64 * omega0 * (t0 + j as f64 * dt);
                a += p * phi.sin();
                b += p * phi.cos();
            }
            (n, 2.0 * a / (k as f64 * mean), 2.0 * b / (k as f64 * mean))
        })
        .collect();
    let peak_to_peak_fraction = envelope_peak_to_peak(&harmonics);
    Ok(RamSpectrum {
        harmonics,
        fundamental: omega0,
        mean_power: mean,
        peak_to_peak_fraction,
    })
}

/// An FFM power-stabilization experiment: the AOM is swept as
/// `f(t) = f_c + (δ/2π)·sin ω₀t` while the drive targets a constant power.
#[derive(Debug, Clone, PartialEq)]
pub struct RamExperiment {
    pub model: AomTransferModel,
    /// f_c (MHz).
    pub center_frequency: f64,
    pub ffm: FfmParams,
    pub target_power: f64,
    /// Use the per-frequency inverse transfer for the base drive; otherwise
    /// the drive is the value that reaches the target at f_c.
    pub calibrated: bool,
    /// Ripple synchronous with the sweep that the static transfer model does
    /// not explain (acoustic lag, RF chain); multiplies the optical power.
    pub synchronous_ripple: RamModel,
    pub periods: usize,
    pub samples_per_period: usize,
}

impl RamExperiment {
    pub fn new(model: AomTransferModel, center_frequency: f64, ffm: FfmParams, target_power: f64) -> Result<Self> {
        model.validate()?;
        ffm.validate()?;
        let dev = ffm.modulation_amplitude / (2.0 * PI);
        model.check_band(center_frequency - dev)?;
        model.check_band(center_frequency + dev)?;
        Ok(Self {
            model,
            center_frequency,
            ffm,
            target_power,
            calibrated: true,
            synchronous_ripple: RamModel::default(),
            periods: MIN_PERIODS,
            samples_per_period: 64,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.ffm.period() / self.samples_per_period as f64;
        (0..self.periods * self.samples_per_period)
            .map(|k| k as f64 * dt)
            .collect()
    }

    /// Power trace with extra drive harmonics `(a_n, b_n)` multiplying the
    /// base drive as `1 + Σ (a_n sin nω₀t + b_n cos nω₀t)`.
    pub fn power_trace(&self, drive_harmonics: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
        let times = self.times();
        let dev = self.ffm.modulation_amplitude / (2.0 * PI);
        let fixed = self.model.drive_for_power(self.center_frequency, self.target_power)?;
        let mut power = Vec::with_capacity(times.len());
        for &t in &times {
            let phase = self.ffm.phase(t);
            let f = self.center_frequency + dev * phase.sin();
            let base = if self.calibrated {
                self.model.drive_for_power(f, self.target_power)?
            } else {
                fixed
            };
            let correction = 1.0
                + drive_harmonics
                    .iter()
                    .enumerate()
                    .map(|(k, (a, b))| {
                        let n = (k + 1) as f64;
                        a * (n * phase).sin() + b * (n * phase).cos()
                    })
                    .sum::<f64>();
            let v = self.model.precorrected_drive(f, base * correction);
            power.push(self.model.simulated_power(f, v)? * self.synchronous_ripple.envelope(phase));
        }
        Ok((times, power))
    }

    pub fn spectrum(&self, drive_harmonics: &[(f64, f64)]) -> Result<RamSpectrum> {
        let (t, p) = self.power_trace(drive_harmonics)?;
        ram_spectrum(&t, &p, self.ffm.modulation_frequency)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensationOptions {
    pub n_harmonics: usize,
    pub max_iterations: usize,
    pub initial_step: f64,
    /// Stop when the relative improvement over `window` iterations is below.
    pub tolerance: f64,
    pub window: usize,
    pub gradient_step: f64,
}

impl Default for CompensationOptions {
    fn default() -> Self {
        Self {
            n_harmonics: RAM_HARMONICS,
            max_iterations: 500,
            initial_step: 0.05,
            tolerance: 1e-5,
            window: 5,
            gradient_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompensationResult {
    /// Drive harmonics `(a_n, b_n)` for n = 1…
    pub harmonics: Vec<(f64, f64)>,
    pub initial: RamSpectrum,
    pub achieved: RamSpectrum,
    pub iterations: usize,
    /// Objective after every accepted step, starting value first.
    pub history: Vec<f64>,
}

const FLAT_OBJECTIVE: f64 = 1e-12;

/// Gradient descent on the drive harmonics minimizing the peak-to-peak
/// power ripple, with a backtracking step that halves on any increase.
pub fn compensate_ram(experiment: &RamExperiment, options: &CompensationOptions) -> Result<CompensationResult> {
    let n = options.n_harmonics;
    let objective = |x: &[f64]| -> Result<f64> {
        let h: Vec<(f64, f64)> = x.chunks(2).map(|c| (c[0], c[1])).collect();
        Ok(experiment.spectrum(&h)?.peak_to_peak_fraction)
    };
    let mut x = vec![0.0; 2 * n];
    let initial = experiment.spectrum(&[])?;
    let mut f = initial.peak_to_peak_fraction;
    let mut history = vec![f];
    let mut step = options.initial_step;
    let mut iterations = 0;
    if f > FLAT_OBJECTIVE {
        let mut stalled = 0;
        while iterations < options.max_iterations {
            let mut grad = vec![0.0; 2 * n];
            for k in 0..2 * n {
                let mut xp = x.clone();
                xp[k] += options.gradient_step;
                let mut xm = x.clone();
                xm[k] -= options.gradient_step;
                grad[k] = (objective(&xp)? - objective(&xm)?) / (2.0 * options.gradient_step);
            }
            let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if gnorm == 0.0 {
                if iterations == 0 {
                    return Err(Error::NoImprovement);
                }
                break;
            }
            iterations += 1;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, g)| xi - step * g / gnorm).collect();
                let ft = objective(&trial)?;
                if ft < f {
                    let improvement = (f - ft) / f;
                    x = trial;
                    f = ft;
                    history.push(f);
                    accepted = true;
                    step *= 1.5;
                    stalled = if improvement < options.tolerance { stalled + 1 } else { 0 };
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                if iterations == 1 {
                    return Err(Error::NoImprovement);
                }
                break;
            }
            if stalled >= options.window || f <= FLAT_OBJECTIVE {
                break;
            }
        }
    }
    let harmonics: Vec<(f64, f64)> = x.chunks(2).map(|c| (c[0], c[1])).collect();
    let achieved = experiment.spectrum(&harmonics)?;
    Ok(CompensationResult {
        harmonics,
        initial,
        achieved,
        iterations,
        history,
    })
}
