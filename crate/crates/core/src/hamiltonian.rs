//! The driven N-atom Hamiltonian and its Bessel-rescaled effective couplings.
//!
//! Basis convention: index bit `N−1−i` is atom `i` (atom 0 is the most
//! significant bit) and a set bit means the atom is in the Rydberg state.
//! For two atoms the order is gg, ge, eg, ee.
//!
//! H/ħ = −Σᵢ (Δ(t) + Δ_D,ᵢ) nᵢ + (Ω(t)/2) Σᵢ (e^{iφᵢ} σ⁺ᵢ + h.c.) + Σ_{i<j} V_ij nᵢ nⱼ

use crate::bessel::bessel_j_upto;
use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, C64, ZERO};
use crate::schedule::{DriveSchedule, RamModel};
use crate::system::{AtomArray, LaserParams, Vec3};

/// Whether atom `i` is excited in basis state `index` of an `n`-atom space.
#[inline]
pub fn is_excited(index: usize, atom: usize, n: usize) -> bool {
    (index >> (n - 1 - atom)) & 1 == 1
}

/// Number of excited atoms in basis state `index`.
#[inline]
pub fn excitation_count(index: usize) -> u32 {
    index.count_ones()
}

/// Label such as `"geg"` for a basis index.
pub fn basis_label(index: usize, n: usize) -> String {
    (0..n)
        .map(|a| if is_excited(index, a, n) { 'e' } else { 'g' })
        .collect()
}

/// Inverse of [`basis_label`].
pub fn label_index(label: &str) -> Result<usize> {
    let mut idx = 0usize;
    if label.is_empty() {
        return Err(Error::UnknownLabel(label.to_string()));
    }
    for ch in label.chars() {
        idx <<= 1;
        match ch {
            'g' => {}
            'e' => idx |= 1,
            _ => return Err(Error::UnknownLabel(label.to_string())),
        }
    }
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pair {
    i: usize,
    j: usize,
    /// r_j − r_i at t = 0 (µm).
    separation: Vec3,
    /// v_j − v_i (µm/µs).
    relative_velocity: Vec3,
}

/// Everything needed to evaluate H(t) for one shot.
#[derive(Debug, Clone)]
pub struct HamiltonianBuilder {
    array: AtomArray,
    lasers: LaserParams,
    schedule: DriveSchedule,
    ram: Option<RamModel>,
    doppler: Vec<f64>,
    phases: Vec<f64>,
    pairs: Vec<Pair>,
    ballistic: bool,
}

impl HamiltonianBuilder {
    pub fn new(array: AtomArray, lasers: LaserParams, schedule: DriveSchedule) -> Result<Self> {
        lasers.validate()?;
        let n = array.len();
        if n > 4 {
            return Err(Error::UnsupportedAtomCount(n));
        }
        let pos = array.positions();
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                pairs.push(Pair {
                    i,
                    j,
                    separation: [
                        pos[j][0] - pos[i][0],
                        pos[j][1] - pos[i][1],
                        pos[j][2] - pos[i][2],
                    ],
                    relative_velocity: [0.0; 3],
                });
            }
        }
        Ok(Self {
            array,
            lasers,
            schedule,
            ram: None,
            doppler: vec![0.0; n],
            phases: vec![0.0; n],
            pairs,
            ballistic: false,
        })
    }

    pub fn with_ram(mut self, ram: Option<RamModel>) -> Self {
        self.ram = ram;
        self
    }

    /// Per-atom detuning offsets Δ_D,ᵢ (rad/µs).
    pub fn with_doppler(mut self, offsets: Vec<f64>) -> Result<Self> {
        if offsets.len() != self.atom_count() {
            return Err(Error::DimMismatch {
                expected: self.atom_count(),
                found: offsets.len(),
            });
        }
        self.doppler = offsets;
        Ok(self)
    }

    /// Per-atom laser phases φᵢ (rad).
    pub fn with_laser_phases(mut self, phases: Vec<f64>) -> Result<Self> {
        if phases.len() != self.atom_count() {
            return Err(Error::DimMismatch {
                expected: self.atom_count(),
                found: phases.len(),
            });
        }
        self.phases = phases;
        Ok(self)
    }

    /// Straight-line atom motion: V_ij is evaluated at the separation
    /// `r_ij + v_ij t` instead of the frozen initial one.
    pub fn with_velocities(mut self, velocities: &[Vec3]) -> Result<Self> {
        if velocities.len() != self.atom_count() {
            return Err(Error::DimMismatch {
                expected: self.atom_count(),
                found: velocities.len(),
            });
        }
        for p in &mut self.pairs {
            for a in 0..3 {
                p.relative_velocity[a] = velocities[p.j][a] - velocities[p.i][a];
            }
        }
        self.ballistic = velocities.iter().any(|v| v.iter().any(|c| *c != 0.0));
        Ok(self)
    }

    pub fn atom_count(&self) -> usize {
        self.array.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.atom_count()
    }

    pub fn array(&self) -> &AtomArray {
        &self.array
    }

    pub fn lasers(&self) -> &LaserParams {
        &self.lasers
    }

    pub fn schedule(&self) -> &DriveSchedule {
        &self.schedule
    }

    pub fn ram(&self) -> Option<&RamModel> {
        self.ram.as_ref()
    }

    pub fn doppler(&self) -> &[f64] {
        &self.doppler
    }

    pub fn laser_phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn is_ballistic(&self) -> bool {
        self.ballistic
    }

    /// Replaces the schedule, keeping every other setting.
    pub fn with_schedule(mut self, schedule: DriveSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    /// V_ij(t) for every pair, in pair order (0,1), (0,2), …, (1,2), …
    pub fn interactions_at(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.pairs.len()];
        self.interactions_into(t, &mut v);
        v
    }

    fn interactions_into(&self, t: f64, out: &mut [f64]) {
        let c6 = self.array.c6();
        for (o, p) in out.iter_mut().zip(&self.pairs) {
            let mut r2 = 0.0;
            for a in 0..3 {
                let d = p.separation[a] + p.relative_velocity[a] * t;
                r2 += d * d;
            }
            *o = c6 / (r2 * r2 * r2);
        }
    }

    /// Global detuning Δ(t) and Rabi frequency Ω(t).
    pub fn drive_at(&self, t: f64) -> Result<(f64, f64)> {
        let (k, _) = self.schedule.locate(t)?;
        self.drive_in_segment(k, t)
    }

    /// Drive at global time `t`, evaluated with segment `segment` even when
    /// `t` sits on its closing boundary.
    pub fn drive_in_segment(&self, segment: usize, t: f64) -> Result<(f64, f64)> {
        let seg = &self.schedule.segments()[segment];
        let local = (t - self.schedule.segment_start(segment)).clamp(0.0, seg.duration);
        let rabi = seg.rabi_at(&self.lasers, local, self.ram.as_ref())?;
        let mut detuning = seg.detuning_at(local)?;
        if seg.lasers_on() {
            detuning += self.lasers.static_detuning;
        }
        Ok((detuning, rabi))
    }

    /// Writes H(t)/ħ into `out` (row-major, `dim × dim`).
    pub fn hamiltonian_into(&self, t: f64, out: &mut [C64]) -> Result<()> {
        let (k, _) = self.schedule.locate(t)?;
        self.hamiltonian_in_segment_into(k, t, out)
    }

    /// As [`Self::hamiltonian_into`] with the owning segment given explicitly.
    pub fn hamiltonian_in_segment_into(&self, segment: usize, t: f64, out: &mut [C64]) -> Result<()> {
        let n = self.atom_count();
        let dim = self.dim();
        if out.len() != dim * dim {
            return Err(Error::DimMismatch {
                expected: dim * dim,
                found: out.len(),
            });
        }
        let (detuning, rabi) = self.drive_in_segment(segment, t)?;
        let mut v = [0.0; 6];
        self.interactions_into(if self.ballistic { t } else { 0.0 }, &mut v);
        out.iter_mut().for_each(|z| *z = ZERO);
        for s in 0..dim {
            let mut d = 0.0;
            for a in 0..n {
                if is_excited(s, a, n) {
                    d -= detuning + self.doppler[a];
                }
            }
            for (k, p) in self.pairs.iter().enumerate() {
                if is_excited(s, p.i, n) && is_excited(s, p.j, n) {
                    d += v[k];
                }
            }
            out[s * dim + s] = C64::new(d, 0.0);
        }
        if rabi != 0.0 {
            let half = 0.5 * rabi;
            for a in 0..n {
                let bit = 1 << (n - 1 - a);
                let coupling = C64::from_polar(half, self.phases[a]);
                for g in 0..dim {
                    if g & bit == 0 {
                        let e = g | bit;
                        out[e * dim + g] = coupling;
                        out[g * dim + e] = coupling.conj();
                    }
                }
            }
        }
        Ok(())
    }

    /// H(t)/ħ as a matrix.
    pub fn hamiltonian_at(&self, t: f64) -> Result<ComplexMatrix> {
        let dim = self.dim();
        let mut data = vec![ZERO; dim * dim];
        self.hamiltonian_into(t, &mut data)?;
        let h = ComplexMatrix::from_vec(dim, dim, data);
        debug_assert!(h.hermitian_defect() < 1e-12);
        Ok(h)
    }
}

/// One Fourier component of an effective coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingComponent {
    pub harmonic: i32,
    /// Oscillation frequency in the interaction picture (rad/µs).
    pub frequency: f64,
    pub weight: C64,
}

/// Fourier decomposition of the |gg⟩↔|W⟩ (`omega_a`) and |W⟩↔|ee⟩
/// (`omega_b`) couplings in units of the bare collective coupling.
///
/// Phase convention: weight `J_m(α) e^{imπ/2}` on harmonic `m`, at frequency
/// `mω₀` for `omega_a` and `mω₀ + V` for `omega_b`. A component is resonant
/// when its frequency vanishes, i.e. `m = −V/ω₀` for `omega_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveCouplings {
    pub omega_a: Vec<CouplingComponent>,
    pub omega_b: Vec<CouplingComponent>,
    pub truncation_order: usize,
}

/// Minimum admissible truncation order for modulation index `alpha`.
pub fn minimum_truncation(alpha: f64) -> usize {
    alpha.abs().ceil() as usize + 5
}

/// Default truncation order for modulation index `alpha`.
pub fn default_truncation(alpha: f64) -> usize {
    alpha.abs().ceil() as usize + 8
}

const RESONANCE_TOL: f64 = 1e-9;

impl EffectiveCouplings {
    fn resonant(components: &[CouplingComponent], scale: f64) -> Option<f64> {
        components
            .iter()
            .find(|c| c.frequency.abs() <= RESONANCE_TOL * scale.max(1.0))
            .map(|c| c.weight.norm())
    }

    /// Magnitude of the zero-frequency |gg⟩↔|W⟩ component, `|J₀(α)|`.
    pub fn dominant_a(&self) -> f64 {
        Self::resonant(&self.omega_a, 1.0).unwrap_or(0.0)
    }

    /// Magnitude of the zero-frequency |W⟩↔|ee⟩ component, if any harmonic
    /// is resonant.
    pub fn dominant_b(&self) -> Option<f64> {
        let scale = self
            .omega_b
            .iter()
            .map(|c| c.frequency.abs())
            .fold(0.0, f64::max);
        Self::resonant(&self.omega_b, scale)
    }

    /// Σ |weight|² over the `omega_a` components.
    pub fn weight_norm(&self) -> f64 {
        self.omega_a.iter().map(|c| c.weight.norm_sqr()).sum()
    }
}

pub fn effective_couplings(
    alpha: f64,
    omega0: f64,
    v: f64,
    truncation_order: usize,
) -> Result<EffectiveCouplings> {
    let required = minimum_truncation(alpha);
    if truncation_order < required {
        return Err(Error::TruncationTooSmall {
            order: truncation_order,
            alpha,
            required,
        });
    }
    if !(omega0 > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "modulation frequency must be positive, got {omega0}"
        )));
    }
    let j = bessel_j_upto(truncation_order, alpha);
    let m_max = truncation_order as i32;
    let mut omega_a = Vec::with_capacity(2 * truncation_order + 1);
    let mut omega_b = Vec::with_capacity(2 * truncation_order + 1);
    for m in -m_max..=m_max {
        let jm = j[m.unsigned_abs() as usize] * if m < 0 && m % 2 != 0 { -1.0 } else { 1.0 };
        let weight = C64::from_polar(1.0, m as f64 * std::f64::consts::FRAC_PI_2) * jm;
        let weight = C64::new(clean(weight.re), clean(weight.im));
        omega_a.push(CouplingComponent {
            harmonic: m,
            frequency: m as f64 * omega0,
            weight,
        });
        omega_b.push(CouplingComponent {
            harmonic: m,
            frequency: m as f64 * omega0 + v,
            weight,
        });
    }
    Ok(EffectiveCouplings {
        omega_a,
        omega_b,
        truncation_order,
    })
}

// e^{imπ/2} leaves ~1e-16 residue on the zero quadrature
fn clean(x: f64) -> f64 {
    if x.abs() < 1e-300 {
        0.0
    } else {
        x
    }
}
