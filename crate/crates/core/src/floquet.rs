//! One-period Floquet propagator, quasi-energy modes and the inverse
//! participation ratio of a reference state.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::HamiltonianBuilder;
use crate::linalg::{unitary_eig, ComplexMatrix, StateVector, C64, UNITARY_TOL, ZERO};
use crate::observables::WReference;
use crate::ode::{integrate, OdeOptions, OdeSystem};
use crate::schedule::{DriveSchedule, FfmParams, PulseSegment, SegmentKind};
use crate::system::{AtomArray, LaserParams};

/// Quasi-phases closer than this are treated as one degenerate level.
pub const DEGENERACY_GAP: f64 = 1e-8;
const ZERO_OVERLAP: f64 = 1e-14;

struct Schrodinger<'a> {
    builder: &'a HamiltonianBuilder,
    segment: usize,
    dim: usize,
    h: Vec<C64>,
    max_step: f64,
}

impl OdeSystem for Schrodinger<'_> {
    fn rhs(&mut self, _piece: usize, t: f64, y: &[C64], dy: &mut [C64]) -> Result<()> {
        let d = self.dim;
        self.builder
            .hamiltonian_in_segment_into(self.segment, t, &mut self.h)?;
        let minus_i = C64::new(0.0, -1.0);
        for r in 0..d {
            for c in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    acc += self.h[r * d + k] * y[k * d + c];
                }
                dy[r * d + c] = minus_i * acc;
            }
        }
        Ok(())
    }

    fn max_step(&self, _piece: usize) -> f64 {
        self.max_step
    }
}

fn propagator_options() -> OdeOptions {
    OdeOptions {
        rtol: 1e-12,
        atol: 1e-13,
        ..OdeOptions::default()
    }
}

/// U(start + T, start) for the FFM segment owning `start`, with T = 2π/ω₀.
/// The whole period must lie inside that one segment.
pub fn one_period_propagator(builder: &HamiltonianBuilder, start: f64) -> Result<ComplexMatrix> {
    let schedule = builder.schedule();
    let (k, local) = schedule.locate(start)?;
    let seg = &schedule.segments()[k];
    let period = match &seg.kind {
        SegmentKind::Ffm { ffm, .. } => ffm.period(),
        _ => return Err(Error::DissipativeScheduleUnsupported),
    };
    let tol = 1e-9 * seg.duration.max(1.0);
    if local + period > seg.duration + tol {
        return Err(Error::DissipativeScheduleUnsupported);
    }
    let dim = builder.dim();
    let mut sys = Schrodinger {
        builder,
        segment: k,
        dim,
        h: vec![ZERO; dim * dim],
        max_step: seg.max_step(),
    };
    let mut u = ComplexMatrix::identity(dim).into_vec();
    integrate(
        &mut sys,
        &mut u,
        &[start, start + period],
        &[],
        &propagator_options(),
        |_, _, _| Ok(()),
    )?;
    let u = ComplexMatrix::from_vec(dim, dim, u);
    let defect = u.unitary_defect();
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary(defect));
    }
    Ok(u)
}

/// Floquet modes |φ_k(0)⟩ with quasi-phases θ_k (U|φ_k⟩ = e^{iθ_k}|φ_k⟩).
#[derive(Debug, Clone, PartialEq)]
pub struct FloquetSpectrum {
    pub period: f64,
    pub quasi_phases: Vec<f64>,
    pub modes: ComplexMatrix,
}

impl FloquetSpectrum {
    pub fn from_propagator(u: &ComplexMatrix, period: f64) -> Result<Self> {
        let eig = unitary_eig(u)?;
        Ok(Self {
            period,
            quasi_phases: eig.phases,
            modes: eig.vectors,
        })
    }

    /// Quasi-energies ε_k = −θ_k/T (rad/µs) in the first Brillouin zone.
    pub fn quasi_energies(&self) -> Vec<f64> {
        self.quasi_phases.iter().map(|p| -p / self.period).collect()
    }

    /// Groups of mode indices whose quasi-phases coincide (on the circle).
    pub fn degenerate_groups(&self) -> Vec<Vec<usize>> {
        let n = self.quasi_phases.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| self.quasi_phases[a].total_cmp(&self.quasi_phases[b]));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &k in &order {
            match groups.last_mut() {
                Some(g) if circular_gap(self.quasi_phases[*g.last().unwrap()], self.quasi_phases[k]) < DEGENERACY_GAP => {
                    g.push(k)
                }
                _ => groups.push(vec![k]),
            }
        }
        // wrap-around: merge the first and last group across ±π
        if groups.len() > 1 {
            let first = self.quasi_phases[groups[0][0]];
            let last = self.quasi_phases[*groups.last().unwrap().last().unwrap()];
            if circular_gap(first, last) < DEGENERACY_GAP {
                let tail = groups.pop().unwrap();
                groups[0].extend(tail);
            }
        }
        groups
    }

    /// p for each degenerate group: the weight of `reference` in the group's
    /// eigenspace.
    pub fn overlaps(&self, reference: &StateVector) -> Result<Vec<f64>> {
        if reference.dim() != self.modes.rows() {
            return Err(Error::DimMismatch {
                expected: self.modes.rows(),
                found: reference.dim(),
            });
        }
        let norm = reference.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(norm * norm));
        }
        Ok(self
            .degenerate_groups()
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&k| self.modes.column(k).inner(reference).norm_sqr())
                    .sum()
            })
            .collect())
    }
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * std::f64::consts::PI);
    d.min(2.0 * std::f64::consts::PI - d)
}

/// Π = 1/Σ p_k² − 1.
pub fn ipr(spectrum: &FloquetSpectrum, reference: &StateVector) -> Result<f64> {
    let p = spectrum.overlaps(reference)?;
    if p.iter().all(|x| *x < ZERO_OVERLAP) {
        return Err(Error::ZeroOverlap);
    }
    let s: f64 = p.iter().map(|x| x * x).sum();
    Ok((1.0 / s - 1.0).max(0.0))
}

/// Floquet spectrum of a two-atom FFM drive with Doppler offsets ±Δ_D.
pub fn pair_spectrum(
    array: &AtomArray,
    lasers: &LaserParams,
    alpha: f64,
    omega0: f64,
    doppler: f64,
) -> Result<FloquetSpectrum> {
    let ffm = FfmParams::from_index(alpha, omega0)?;
    let period = ffm.period();
    let schedule = DriveSchedule::single(PulseSegment::ffm(period, ffm, 0.0))?;
    let n = array.len();
    let mut offsets = vec![0.0; n];
    offsets[0] = doppler;
    if n > 1 {
        offsets[1] = -doppler;
    }
    let builder = HamiltonianBuilder::new(array.clone(), lasers.clone(), schedule)?.with_doppler(offsets)?;
    let u = one_period_propagator(&builder, 0.0)?;
    FloquetSpectrum::from_propagator(&u, period)
}

/// IPR of the symmetric |W⟩ over a grid; rows follow `omega0_grid`, columns
/// `doppler_grid` (both rad/µs).
pub fn ipr_map(
    array: &AtomArray,
    lasers: &LaserParams,
    alpha: f64,
    doppler_grid: &[f64],
    omega0_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if doppler_grid.is_empty() || omega0_grid.is_empty() {
        return Err(Error::InvalidConfig("IPR grid axes must be non-empty".into()));
    }
    let reference = WReference::symmetric(array.len()).state();
    let points: Vec<(usize, usize)> = (0..omega0_grid.len())
        .flat_map(|r| (0..doppler_grid.len()).map(move |c| (r, c)))
        .collect();
    let values: Vec<Result<f64>> = points
        .par_iter()
        .map(|&(r, c)| {
            let s = pair_spectrum(array, lasers, alpha, omega0_grid[r], doppler_grid[c])?;
            ipr(&s, &reference)
        })
        .collect();
    let mut out = vec![vec![0.0; doppler_grid.len()]; omega0_grid.len()];
    for (&(r, c), v) in points.iter().zip(values) {
        out[r][c] = v?;
    }
    Ok(out)
}
