//! Physical configuration: atoms, lasers, noise channels, readout errors and
//! the thermal ensemble.
//!
//! Angular frequencies are stored in rad/µs, so a quoted "2π × 1 MHz" is
//! `2π` here. Public file formats carry ordinary frequencies in MHz (or kHz
//! where noted) and convert through [`units`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod units {
    use std::f64::consts::PI;

    /// Boltzmann constant (J/K).
    pub const BOLTZMANN: f64 = 1.380_649e-23;
    /// Reduced Planck constant (J·s).
    pub const HBAR: f64 = 1.054_571_817e-34;
    /// Mass of ²³Na (kg).
    pub const SODIUM_23_MASS: f64 = 3.8175e-26;

    /// Ordinary frequency in MHz to angular frequency in rad/µs.
    pub fn mhz(f: f64) -> f64 {
        2.0 * PI * f
    }

    pub fn khz(f: f64) -> f64 {
        mhz(f * 1e-3)
    }

    /// Angular frequency in rad/µs to ordinary frequency in MHz.
    pub fn to_mhz(w: f64) -> f64 {
        w / (2.0 * PI)
    }
}

pub type Vec3 = [f64; 3];

pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum allowed separation between two atoms (µm).
pub const MIN_SEPARATION: f64 = 0.5;

/// Atom positions (µm) and the van der Waals coefficient (rad/µs · µm⁶).
#[derive(Debug, Clone, PartialEq)]
pub struct AtomArray {
    positions: Vec<Vec3>,
    c6: f64,
}

impl AtomArray {
    pub fn new(positions: Vec<Vec3>, c6: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidConfig("atom array needs at least one atom".into()));
        }
        if !(c6 > 0.0) {
            return Err(Error::InvalidConfig(format!("C6 must be positive, got {c6}")));
        }
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let r = distance(&positions[i], &positions[j]);
                if r <= MIN_SEPARATION {
                    return Err(Error::InvalidConfig(format!(
                        "atoms {i} and {j} are {r:.3} µm apart (minimum {MIN_SEPARATION} µm)"
                    )));
                }
            }
        }
        Ok(Self { positions, c6 })
    }

    /// Equally spaced atoms along the array (y) axis.
    pub fn chain(n: usize, spacing: f64, c6: f64) -> Result<Self> {
        let positions = (0..n).map(|k| [0.0, k as f64 * spacing, 0.0]).collect();
        Self::new(positions, c6)
    }

    /// Spacing at which the pair interaction equals `v` (rad/µs).
    pub fn spacing_for_interaction(c6: f64, v: f64) -> f64 {
        (c6 / v).powf(1.0 / 6.0)
    }

    /// A chain whose nearest neighbours interact with strength `v`.
    pub fn chain_with_interaction(n: usize, v: f64, c6: f64) -> Result<Self> {
        Self::chain(n, Self::spacing_for_interaction(c6, v), c6)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn c6(&self) -> f64 {
        self.c6
    }

    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Self> {
        Self::new(positions, self.c6)
    }

    fn check_pair(&self, i: usize, j: usize) -> Result<()> {
        for idx in [i, j] {
            if idx >= self.len() {
                return Err(Error::IndexOutOfRange {
                    index: idx,
                    count: self.len(),
                });
            }
        }
        if i == j {
            return Err(Error::SameAtom(i));
        }
        Ok(())
    }

    pub fn separation(&self, i: usize, j: usize) -> Result<f64> {
        self.check_pair(i, j)?;
        Ok(distance(&self.positions[i], &self.positions[j]))
    }

    /// `C₆ / r_ij⁶` in rad/µs.
    pub fn interaction_strength(&self, i: usize, j: usize) -> Result<f64> {
        let r = self.separation(i, j)?;
        Ok(self.c6 / r.powi(6))
    }
}

/// Radius at which the pair interaction equals the Rabi frequency.
pub fn blockade_radius(array: &AtomArray, lasers: &LaserParams) -> f64 {
    (array.c6() / lasers.rabi).powf(1.0 / 6.0)
}

/// Two-photon drive parameters. The beam propagates along `beam_axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaserParams {
    /// Effective two-photon Rabi frequency Ω (rad/µs).
    pub rabi: f64,
    /// Static detuning Δ₀ (rad/µs).
    pub static_detuning: f64,
    /// Effective wavevector k (rad/µm), signed along `beam_axis`.
    pub effective_wavevector: f64,
    pub beam_axis: Vec3,
}

impl LaserParams {
    /// Counter-propagating two-photon wavevector `2π(1/λ_upper − 1/λ_lower)`.
    pub fn counter_propagating_wavevector(lambda_lower_um: f64, lambda_upper_um: f64) -> f64 {
        2.0 * std::f64::consts::PI * (1.0 / lambda_upper_um - 1.0 / lambda_lower_um)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi > 0.0) {
            return Err(Error::InvalidConfig(format!("Rabi frequency must be positive, got {}", self.rabi)));
        }
        Ok(())
    }

    /// Projection of a vector onto the beam axis.
    pub fn along_beam(&self, v: &Vec3) -> f64 {
        let norm = self.beam_axis.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().zip(&self.beam_axis).map(|(a, b)| a * b).sum::<f64>() / norm
    }
}

/// Lindblad rates, all in 1/µs (angular where the source quotes 2π×Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    /// Off-resonant scattering through the lower (589 nm) photon.
    pub gamma1: f64,
    /// Off-resonant scattering through the upper (409 nm) photon.
    pub gamma2: f64,
    /// Rydberg decay rate.
    pub gamma_r: f64,
    /// Global laser dephasing rate.
    pub gamma_l: f64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            gamma1: 0.0,
            gamma2: 0.0,
            gamma_r: 0.0,
            gamma_l: 0.0,
        }
    }

    /// A single effective pair coherence time: every channel off except the
    /// global dephasing, tuned so the |gg⟩–|W⟩ coherence decays as
    /// `exp(−t/coherence_time)`.
    pub fn effective_coherence(coherence_time_us: f64) -> Self {
        Self {
            gamma1: 0.0,
            gamma2: 0.0,
            gamma_r: 0.0,
            gamma_l: 1.0 / coherence_time_us,
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.gamma1 == 0.0 && self.gamma2 == 0.0 && self.gamma_r == 0.0 && self.gamma_l == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma_r", self.gamma_r),
            ("gamma_l", self.gamma_l),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Readout error probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SpamModel {
    /// ε: a ground-state atom read out as Rydberg.
    pub false_positive: f64,
    /// ε′: a Rydberg atom read out as ground.
    pub false_negative: f64,
    /// η: optical pumping error.
    pub pumping_error: f64,
}

impl SpamModel {
    pub fn ideal() -> Self {
        Self {
            false_positive: 0.0,
            false_negative: 0.0,
            pumping_error: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("false_positive", self.false_positive),
            ("false_negative", self.false_negative),
            ("pumping_error", self.pumping_error),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// How the atoms move during the excitation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionModel {
    /// Tweezers off: thermal velocities, straight-line flight.
    FreeFlight,
    /// Atoms stay trapped in motional states with mean occupations
    /// `(radial, axial)`; no flight during excitation.
    GroundStateCooled { nbar_radial: f64, nbar_axial: f64 },
}

/// Position and velocity spread of the atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalEnsemble {
    /// σ_x = σ_y (µm) at `temperature`.
    pub sigma_radial: f64,
    /// σ_z (µm) at `temperature`.
    pub sigma_axial: f64,
    /// µK.
    pub temperature: f64,
    /// kg.
    pub atom_mass: f64,
    pub motion: MotionModel,
}

impl ThermalEnsemble {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_radial", self.sigma_radial),
            ("sigma_axial", self.sigma_axial),
            ("temperature", self.temperature),
            ("atom_mass", self.atom_mass),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Thermal one-axis velocity spread `√(k_B T / m)` in µm/µs.
    pub fn thermal_velocity_sigma(&self) -> f64 {
        // m/s and µm/µs coincide
        (units::BOLTZMANN * self.temperature * 1e-6 / self.atom_mass).sqrt()
    }

    /// Trap angular frequencies (rad/µs) implied by the thermal widths:
    /// `ω = √(k_B T/m) / σ` per axis.
    pub fn trap_frequencies(&self) -> (f64, f64) {
        let v = self.thermal_velocity_sigma();
        (v / self.sigma_radial, v / self.sigma_axial)
    }

    /// `(radial, axial)` position standard deviations in µm.
    pub fn position_sigmas(&self) -> (f64, f64) {
        match self.motion {
            MotionModel::FreeFlight => (self.sigma_radial, self.sigma_axial),
            MotionModel::GroundStateCooled {
                nbar_radial,
                nbar_axial,
            } => {
                let (w_r, w_z) = self.trap_frequencies();
                (
                    self.oscillator_position_sigma(w_r, nbar_radial),
                    self.oscillator_position_sigma(w_z, nbar_axial),
                )
            }
        }
    }

    /// `(radial, axial)` velocity standard deviations in µm/µs.
    pub fn velocity_sigmas(&self) -> (f64, f64) {
        match self.motion {
            MotionModel::FreeFlight => {
                let v = self.thermal_velocity_sigma();
                (v, v)
            }
            MotionModel::GroundStateCooled {
                nbar_radial,
                nbar_axial,
            } => {
                let (w_r, w_z) = self.trap_frequencies();
                (
                    self.oscillator_position_sigma(w_r, nbar_radial) * w_r,
                    self.oscillator_position_sigma(w_z, nbar_axial) * w_z,
                )
            }
        }
    }

    pub fn free_flight(&self) -> bool {
        matches!(self.motion, MotionModel::FreeFlight)
    }

    /// Harmonic-oscillator width `√(ħ(2n̄+1)/(2mω))` in µm, ω in rad/µs.
    fn oscillator_position_sigma(&self, omega: f64, nbar: f64) -> f64 {
        let omega_si = omega * 1e6;
        let var = units::HBAR * (2.0 * nbar + 1.0) / (2.0 * self.atom_mass * omega_si);
        var.sqrt() * 1e6
    }
}

/// The complete physical model.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub array: AtomArray,
    pub lasers: LaserParams,
    pub noise: NoiseModel,
    pub spam: SpamModel,
    pub thermal: ThermalEnsemble,
    /// Natural (zero-temperature) Rydberg lifetime in µs; only informs the
    /// false-negative budget, never the master equation.
    pub natural_lifetime: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        self.lasers.validate()?;
        self.noise.validate()?;
        self.spam.validate()?;
        self.thermal.validate()
    }

    /// Replace the array by a chain of `n` atoms whose nearest neighbours
    /// interact with `v` (rad/µs).
    pub fn with_chain_interaction(mut self, n: usize, v: f64) -> Result<Self> {
        self.array = AtomArray::chain_with_interaction(n, v, self.array.c6())?;
        Ok(self)
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_spam(mut self, spam: SpamModel) -> Self {
        self.spam = spam;
        self
    }

    pub fn blockade_radius(&self) -> f64 {
        blockade_radius(&self.array, &self.lasers)
    }
}

/// On-disk form of the default parameter set (`defaults.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefaultsFile {
    pub schema_version: u32,
    pub rabi_mhz: f64,
    pub static_detuning_mhz: f64,
    pub c6_ghz_um6: f64,
    pub wavelength_lower_um: f64,
    pub wavelength_upper_um: f64,
    pub gamma1_khz: f64,
    pub gamma2_khz: f64,
    pub rydberg_lifetime_us: f64,
    pub natural_lifetime_us: f64,
    pub gamma_l_khz: f64,
    pub false_positive: f64,
    pub false_negative: f64,
    pub pumping_error: f64,
    pub sigma_radial_um: f64,
    pub sigma_axial_um: f64,
    pub temperature_uk: f64,
    pub atom_mass_kg: f64,
}

pub const DEFAULTS_JSON: &str = include_str!("../defaults.json");

impl DefaultsFile {
    pub fn bundled() -> Self {
        serde_json::from_str(DEFAULTS_JSON).expect("bundled defaults.json is valid")
    }

    /// Two atoms, nominally one blockade radius apart along the array axis.
    pub fn to_config(&self) -> Result<SystemConfig> {
        let lasers = LaserParams {
            rabi: units::mhz(self.rabi_mhz),
            static_detuning: units::mhz(self.static_detuning_mhz),
            effective_wavevector: LaserParams::counter_propagating_wavevector(
                self.wavelength_lower_um,
                self.wavelength_upper_um,
            ),
            beam_axis: [1.0, 0.0, 0.0],
        };
        let c6 = units::mhz(self.c6_ghz_um6 * 1e3);
        let array = AtomArray::chain_with_interaction(2, lasers.rabi, c6)?;
        let config = SystemConfig {
            array,
            lasers,
            noise: NoiseModel {
                gamma1: units::khz(self.gamma1_khz),
                gamma2: units::khz(self.gamma2_khz),
                gamma_r: 1.0 / self.rydberg_lifetime_us,
                gamma_l: units::khz(self.gamma_l_khz),
            },
            spam: SpamModel {
                false_positive: self.false_positive,
                false_negative: self.false_negative,
                pumping_error: self.pumping_error,
            },
            thermal: ThermalEnsemble {
                sigma_radial: self.sigma_radial_um,
                sigma_axial: self.sigma_axial_um,
                temperature: self.temperature_uk,
                atom_mass: self.atom_mass_kg,
                motion: MotionModel::FreeFlight,
            },
            natural_lifetime: self.natural_lifetime_us,
        };
        config.validate()?;
        Ok(config)
    }
}

/// The experiment's parameter set, loaded from the bundled `defaults.json`.
pub fn paper_defaults() -> SystemConfig {
    DefaultsFile::bundled()
        .to_config()
        .expect("bundled defaults are valid")
}
