//! Populations, W-state fidelity, readout-error transform and the intrinsic
//! gate-error bound.

use std::collections::BTreeMap;

use crate::bessel::bessel_j;
use crate::error::{Error, Result};
use crate::hamiltonian::{basis_label, excitation_count};
use crate::lindblad::DensityMatrix;
use crate::linalg::{StateVector, C64, ZERO};
use crate::system::{LaserParams, SpamModel, Vec3};

/// Key of the single-excitation aggregate for two atoms.
pub const SINGLE_EXCITATION: &str = "ge+eg";

/// Key of the `n`-excitation probability.
pub fn excitation_key(n: usize) -> String {
    format!("P{n}")
}

/// Basis populations keyed by label, plus `P0 … PN` and, for two atoms,
/// the `ge+eg` aggregate.
pub fn populations(rho: &DensityMatrix) -> BTreeMap<String, f64> {
    populations_from_diagonal(&rho.populations(), rho.n_atoms())
}

pub fn populations_from_diagonal(diag: &[f64], n_atoms: usize) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    let mut pn = vec![0.0; n_atoms + 1];
    for (s, p) in diag.iter().enumerate() {
        out.insert(basis_label(s, n_atoms), *p);
        pn[excitation_count(s) as usize] += p;
    }
    for (n, p) in pn.iter().enumerate() {
        out.insert(excitation_key(n), *p);
    }
    if n_atoms == 2 {
        out.insert(SINGLE_EXCITATION.to_string(), diag[1] + diag[2]);
    }
    out
}

/// |W⟩ = N^{−1/2} Σᵢ e^{iφᵢ} |g…eᵢ…g⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct WReference {
    pub phases: Vec<f64>,
}

impl WReference {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::InvalidConfig("W reference needs at least one atom".into()));
        }
        Ok(Self { phases })
    }

    /// All phases zero.
    pub fn symmetric(atom_count: usize) -> Self {
        Self {
            phases: vec![0.0; atom_count.max(1)],
        }
    }

    /// φᵢ = k·xᵢ along the beam.
    pub fn from_positions(positions: &[Vec3], lasers: &LaserParams) -> Self {
        Self {
            phases: positions
                .iter()
                .map(|p| lasers.effective_wavevector * lasers.along_beam(p))
                .collect(),
        }
    }

    pub fn atom_count(&self) -> usize {
        self.phases.len()
    }

    pub fn state(&self) -> StateVector {
        let n = self.atom_count();
        let dim = 1 << n;
        let amp = 1.0 / (n as f64).sqrt();
        let mut v = vec![ZERO; dim];
        for (i, phi) in self.phases.iter().enumerate() {
            v[1 << (n - 1 - i)] = C64::from_polar(amp, *phi);
        }
        StateVector::new(v)
    }
}

/// ⟨W|ρ|W⟩.
pub fn w_fidelity(rho: &DensityMatrix, reference: &WReference) -> Result<f64> {
    let n = reference.atom_count();
    if rho.dim() != 1 << n {
        return Err(Error::DimMismatch {
            expected: 1 << n,
            found: rho.dim(),
        });
    }
    let m = rho.matrix();
    let mut acc = ZERO;
    let idx: Vec<usize> = (0..n).map(|i| 1 << (n - 1 - i)).collect();
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            let phase = C64::from_polar(1.0, reference.phases[b] - reference.phases[a]);
            acc += phase * m[(ia, ib)];
        }
    }
    Ok(acc.re / n as f64)
}

/// Per-atom detection channel `M[detected][true]`, index 0 = g, 1 = Rydberg.
pub fn spam_channel(spam: &SpamModel) -> [[f64; 2]; 2] {
    let (e, e2, eta) = (spam.false_positive, spam.false_negative, spam.pumping_error);
    let g_given_g = eta * (1.0 - e) + (1.0 - eta) * (1.0 - e);
    let g_given_r = eta * (1.0 - e) + (1.0 - eta) * (1.0 - e) * e2;
    let r_given_g = eta * e + (1.0 - eta) * e;
    let r_given_r = eta * e + (1.0 - eta) * (1.0 - e2 + e * e2);
    [[g_given_g, g_given_r], [r_given_g, r_given_r]]
}

const NORMALIZATION_TOL: f64 = 1e-9;

/// Detected basis probabilities from true ones (length `2^N`, basis order),
/// treating each atom's readout as an independent channel.
pub fn apply_spam(true_probs: &[f64], spam: &SpamModel) -> Result<Vec<f64>> {
    let dim = true_probs.len();
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::DimMismatch {
            expected: 2,
            found: dim,
        });
    }
    let sum: f64 = true_probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL || true_probs.iter().any(|p| !(*p >= -NORMALIZATION_TOL)) {
        return Err(Error::NotNormalized(sum));
    }
    spam.validate()?;
    let m = spam_channel(spam);
    let n = dim.trailing_zeros() as usize;
    // apply the 2×2 channel one atom (bit) at a time
    let mut p = true_probs.to_vec();
    for atom in 0..n {
        let bit = 1 << (n - 1 - atom);
        let mut q = vec![0.0; dim];
        for s in 0..dim {
            if s & bit == 0 {
                let (pg, pr) = (p[s], p[s | bit]);
                q[s] = m[0][0] * pg + m[0][1] * pr;
                q[s | bit] = m[1][0] * pg + m[1][1] * pr;
            }
        }
        p = q;
    }
    Ok(p)
}

/// Intrinsic two-qubit gate error `(3(7π)^{2/3}/8)·(Vτ)^{−2/3}`.
pub fn gate_error_bound(v: f64, tau_r: f64) -> f64 {
    let pref = 3.0 * (7.0 * std::f64::consts::PI).powf(2.0 / 3.0) / 8.0;
    pref * (v * tau_r).powf(-2.0 / 3.0)
}

/// One collective Rabi period `2π/(√N·|J₀(α)|·Ω)` of the |g…g⟩ ↔ |W⟩
/// oscillation; `alpha = 0` gives the static value.
pub fn collective_period(n_atoms: usize, alpha: f64, rabi: f64) -> f64 {
    let eff = (n_atoms as f64).sqrt() * bessel_j(0, alpha).abs() * rabi;
    2.0 * std::f64::consts::PI / eff
}

/// Maximum of `values` at sample times inside `window` (inclusive).
pub fn max_in_window(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    let tol = 1e-9 * window.1.abs().max(1.0);
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window.0 - tol && **t <= window.1 + tol)
        .map(|(_, v)| *v)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or(Error::WindowOutOfRange {
            start: window.0,
            end: window.1,
        })
}
