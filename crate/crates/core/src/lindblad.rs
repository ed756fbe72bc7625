//! Lindblad master-equation evolution of dense density matrices.
//!
//! ρ̇ = −i[H, ρ] + Σ (L ρ L† − ½{L†L, ρ}), written as
//! ρ̇ = −i(A − A†) + Σ L ρ L† with A = H_eff ρ and H_eff = H − (i/2) Σ L†L.

use crate::error::{Error, Result};
use crate::hamiltonian::{basis_label, label_index, HamiltonianBuilder};
use crate::linalg::{hermitian_eig, ComplexMatrix, StateVector, C64, ZERO};
use crate::ode::{integrate, OdeOptions, OdeStats, OdeSystem};
use crate::system::NoiseModel;

pub const TRACE_TOL: f64 = 1e-6;
pub const HERMITICITY_TOL: f64 = 1e-8;
pub const POSITIVITY_TOL: f64 = 1e-6;

/// A density matrix over the `2^N`-dimensional product basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    n_atoms: usize,
}

fn atoms_for_dim(dim: usize) -> Option<usize> {
    if dim >= 2 && dim.is_power_of_two() {
        Some(dim.trailing_zeros() as usize)
    } else {
        None
    }
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidInitialState("matrix is not square".into()));
        }
        let n_atoms = atoms_for_dim(matrix.rows()).ok_or_else(|| {
            Error::InvalidInitialState(format!("dimension {} is not 2^N", matrix.rows()))
        })?;
        let rho = Self { matrix, n_atoms };
        rho.check().map_err(|e| match e {
            Error::InvariantViolation { what, .. } => Error::InvalidInitialState(what),
            other => other,
        })?;
        Ok(rho)
    }

    /// Skips validation; for states produced by the integrator.
    fn from_raw(matrix: ComplexMatrix, n_atoms: usize) -> Self {
        Self { matrix, n_atoms }
    }

    pub fn pure(state: &StateVector) -> Result<Self> {
        Self::new(state.clone().normalized().projector())
    }

    /// |g…g⟩⟨g…g|.
    pub fn ground(n_atoms: usize) -> Self {
        let dim = 1 << n_atoms;
        let mut m = ComplexMatrix::zeros(dim, dim);
        m[(0, 0)] = C64::new(1.0, 0.0);
        Self::from_raw(m, n_atoms)
    }

    /// Maximally mixed state.
    pub fn mixed(n_atoms: usize) -> Self {
        let dim = 1 << n_atoms;
        Self::from_raw(
            ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
            n_atoms,
        )
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        // tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    /// Diagonal in basis order.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diag().iter().map(|z| z.re).collect()
    }

    pub fn population(&self, label: &str) -> Result<f64> {
        let idx = label_index(label)?;
        if label.len() != self.n_atoms {
            return Err(Error::UnknownLabel(label.to_string()));
        }
        Ok(self.matrix[(idx, idx)].re)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let mut m = self.matrix.clone();
        // tiny asymmetry from integration is removed before diagonalizing
        let d = m.rows();
        for i in 0..d {
            for j in i..d {
                let avg = 0.5 * (m[(i, j)] + m[(j, i)].conj());
                m[(i, j)] = avg;
                m[(j, i)] = avg.conj();
            }
        }
        hermitian_eig(&m)
            .map(|e| e.values[0])
            .unwrap_or(f64::NEG_INFINITY)
    }

    /// Trace, Hermiticity and positivity checks.
    pub fn check(&self) -> Result<()> {
        self.check_at(f64::NAN)
    }

    fn check_at(&self, t: f64) -> Result<()> {
        if !self.matrix.is_finite() {
            return Err(Error::InvariantViolation {
                t,
                what: "non-finite entries".into(),
            });
        }
        let tr = self.matrix.trace();
        if (tr.re - 1.0).abs() >= TRACE_TOL || tr.im.abs() >= TRACE_TOL {
            return Err(Error::InvariantViolation {
                t,
                what: format!("trace {tr}"),
            });
        }
        let herm = self.matrix.hermitian_defect();
        if herm >= HERMITICITY_TOL {
            return Err(Error::InvariantViolation {
                t,
                what: format!("Hermiticity defect {herm:.3e}"),
            });
        }
        let min = self.min_eigenvalue();
        if min < -POSITIVITY_TOL {
            return Err(Error::InvariantViolation {
                t,
                what: format!("minimum eigenvalue {min:.3e}"),
            });
        }
        Ok(())
    }

    /// Entry-wise average of several density matrices.
    pub fn average(states: &[DensityMatrix]) -> Result<Self> {
        let first = states
            .first()
            .ok_or_else(|| Error::InsufficientSamples("no states to average".into()))?;
        let mut acc = ComplexMatrix::zeros(first.dim(), first.dim());
        for s in states {
            if s.dim() != first.dim() {
                return Err(Error::DimMismatch {
                    expected: first.dim(),
                    found: s.dim(),
                });
            }
            acc = &acc + &s.matrix;
        }
        Ok(Self::from_raw(
            acc.scale_real(1.0 / states.len() as f64),
            first.n_atoms,
        ))
    }
}

/// One collapse operator stored as its non-zero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissipator {
    pub name: String,
    pub entries: Vec<(usize, usize, C64)>,
    /// Only active while the lasers are on (scattering and laser noise).
    pub laser_driven: bool,
}

impl Dissipator {
    fn from_dense(name: String, m: &ComplexMatrix, laser_driven: bool) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                if m[(r, c)] != ZERO {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        Self {
            name,
            entries,
            laser_driven,
        }
    }

    pub fn matrix(&self, dim: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(dim, dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipatorSet {
    dim: usize,
    channels: Vec<Dissipator>,
}

impl DissipatorSet {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            channels: Vec::new(),
        }
    }

    pub fn new(dim: usize, channels: Vec<Dissipator>) -> Result<Self> {
        for ch in &channels {
            if let Some(&(r, c, _)) = ch.entries.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: r.max(c) + 1,
                });
            }
        }
        Ok(Self { dim, channels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[Dissipator] {
        &self.channels
    }

    pub fn collapse_ops(&self) -> Vec<ComplexMatrix> {
        self.channels.iter().map(|c| c.matrix(self.dim)).collect()
    }

    /// True when every operator vanishes.
    pub fn is_zero(&self) -> bool {
        self.channels.iter().all(Dissipator::is_zero)
    }
}

/// Per atom `L_m = √γ₁|g⟩⟨g| + √γ₂|g⟩⟨e|` and `L_r = √Γ_r|g⟩⟨e|`, plus one
/// global `L_l = √(γ_l/2) ⊗ᵢ σ_z`, in that order (`L_m⁰, L_r⁰, L_m¹, …, L_l`).
pub fn build_dissipators(noise: &NoiseModel, n_atoms: usize) -> Result<DissipatorSet> {
    use crate::linalg::pauli;
    if !(1..=3).contains(&n_atoms) {
        return Err(Error::UnsupportedAtomCount(n_atoms));
    }
    noise.validate()?;
    let dim = 1 << n_atoms;
    let mut channels = Vec::with_capacity(2 * n_atoms + 1);
    let lower = pauli::lower();
    let pg = pauli::proj_g();
    for a in 0..n_atoms {
        let lm = &pg.scale_real(noise.gamma1.sqrt()) + &lower.scale_real(noise.gamma2.sqrt());
        channels.push(Dissipator::from_dense(
            format!("scatter_{a}"),
            &pauli::embed(&lm, a, n_atoms),
            true,
        ));
        channels.push(Dissipator::from_dense(
            format!("decay_{a}"),
            &pauli::embed(&lower.scale_real(noise.gamma_r.sqrt()), a, n_atoms),
            false,
        ));
    }
    let mut zz = ComplexMatrix::identity(1);
    for _ in 0..n_atoms {
        zz = crate::linalg::kron(&zz, &pauli::sigma_z());
    }
    channels.push(Dissipator::from_dense(
        "laser_dephasing".into(),
        &zz.scale_real((noise.gamma_l / 2.0).sqrt()),
        true,
    ));
    DissipatorSet::new(dim, channels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub ode: OdeOptions,
    /// Store ρ at every sample time.
    pub keep_snapshots: bool,
    /// Abort when a sampled ρ breaks the trace/Hermiticity/positivity bounds.
    pub check_invariants: bool,
    /// Switch laser-driven channels off during laser-free segments.
    pub gate_laser_channels: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            keep_snapshots: true,
            check_invariants: true,
            gate_laser_channels: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub times: Vec<f64>,
    pub n_atoms: usize,
    /// `populations[k][s]`: basis state `s` at `times[k]`.
    pub populations: Vec<Vec<f64>>,
    pub snapshots: Vec<DensityMatrix>,
    pub stats: OdeStats,
}

impl TrajectoryResult {
    pub fn labels(&self) -> Vec<String> {
        (0..1 << self.n_atoms)
            .map(|s| basis_label(s, self.n_atoms))
            .collect()
    }

    /// Time series of one basis population.
    pub fn population(&self, label: &str) -> Result<Vec<f64>> {
        if label.len() != self.n_atoms {
            return Err(Error::UnknownLabel(label.to_string()));
        }
        let idx = label_index(label)?;
        Ok(self.populations.iter().map(|p| p[idx]).collect())
    }
}

struct Channel {
    entries: Vec<(usize, usize, C64)>,
}

struct LindbladSystem<'a> {
    builder: &'a HamiltonianBuilder,
    dim: usize,
    piece_segment: Vec<usize>,
    piece_max_step: Vec<f64>,
    piece_lasers_on: Vec<bool>,
    /// Σ L†L over channels active with lasers on / off.
    decay_on: Vec<C64>,
    decay_off: Vec<C64>,
    jumps_on: Vec<Channel>,
    jumps_off: Vec<Channel>,
    h: Vec<C64>,
    a: Vec<C64>,
}

impl OdeSystem for LindbladSystem<'_> {
    fn rhs(&mut self, piece: usize, t: f64, y: &[C64], dy: &mut [C64]) -> Result<()> {
        let d = self.dim;
        self.builder
            .hamiltonian_in_segment_into(self.piece_segment[piece], t, &mut self.h)?;
        let (decay, jumps) = if self.piece_lasers_on[piece] {
            (&self.decay_on, &self.jumps_on)
        } else {
            (&self.decay_off, &self.jumps_off)
        };
        // H_eff = H − (i/2) Σ L†L
        let half_i = C64::new(0.0, 0.5);
        for (h, k) in self.h.iter_mut().zip(decay) {
            *h -= half_i * k;
        }
        for r in 0..d {
            for c in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    acc += self.h[r * d + k] * y[k * d + c];
                }
                self.a[r * d + c] = acc;
            }
        }
        let minus_i = C64::new(0.0, -1.0);
        for r in 0..d {
            for c in 0..d {
                dy[r * d + c] = minus_i * (self.a[r * d + c] - self.a[c * d + r].conj());
            }
        }
        for ch in jumps {
            for &(a, c1, l1) in &ch.entries {
                for &(b, c2, l2) in &ch.entries {
                    dy[a * d + b] += l1 * y[c1 * d + c2] * l2.conj();
                }
            }
        }
        Ok(())
    }

    fn max_step(&self, piece: usize) -> f64 {
        self.piece_max_step[piece]
    }
}

fn decay_sum(dim: usize, channels: &[&Dissipator]) -> Vec<C64> {
    let mut k = ComplexMatrix::zeros(dim, dim);
    for ch in channels {
        let l = ch.matrix(dim);
        k = &k + &l.adjoint().matmul(&l);
    }
    k.into_vec()
}

/// Integrates the master equation over `t_span`, recording populations (and
/// optionally ρ) at `sample_times`.
pub fn evolve(
    builder: &HamiltonianBuilder,
    dissipators: &DissipatorSet,
    rho0: &DensityMatrix,
    t_span: (f64, f64),
    sample_times: &[f64],
    options: &EvolveOptions,
) -> Result<TrajectoryResult> {
    let dim = builder.dim();
    if rho0.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            found: rho0.dim(),
        });
    }
    if dissipators.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            found: dissipators.dim(),
        });
    }
    rho0.check().map_err(|e| match e {
        Error::InvariantViolation { what, .. } => Error::InvalidInitialState(what),
        other => other,
    })?;
    let (t0, t1) = t_span;
    let total = builder.schedule().total_duration();
    let slack = 1e-12 * total.max(1.0);
    if !(t0 >= -slack && t1 <= total + slack && t0 <= t1) {
        return Err(Error::TimeOutOfSchedule {
            t: if t0 < 0.0 { t0 } else { t1 },
            total,
        });
    }
    if let Some(bad) = sample_times.iter().find(|&&s| s < t0 || s > t1) {
        return Err(Error::WindowOutOfRange { start: *bad, end: *bad });
    }

    let mut breakpoints = vec![t0];
    for b in builder.schedule().boundaries() {
        if b > t0 && b < t1 {
            breakpoints.push(b);
        }
    }
    breakpoints.push(t1);

    let mut piece_segment = Vec::new();
    let mut piece_max_step = Vec::new();
    let mut piece_lasers_on = Vec::new();
    for w in breakpoints.windows(2) {
        let (k, _) = builder.schedule().locate(0.5 * (w[0] + w[1]))?;
        let seg = &builder.schedule().segments()[k];
        piece_segment.push(k);
        piece_max_step.push(seg.max_step());
        piece_lasers_on.push(seg.lasers_on() || !options.gate_laser_channels);
    }

    let active: Vec<&Dissipator> = dissipators.channels().iter().filter(|c| !c.is_zero()).collect();
    let on: Vec<&Dissipator> = active.clone();
    let off: Vec<&Dissipator> = active.iter().copied().filter(|c| !c.laser_driven).collect();
    let to_channels = |v: &[&Dissipator]| -> Vec<Channel> {
        v.iter()
            .map(|c| Channel {
                entries: c.entries.clone(),
            })
            .collect()
    };
    let mut system = LindbladSystem {
        builder,
        dim,
        piece_segment,
        piece_max_step,
        piece_lasers_on,
        decay_on: decay_sum(dim, &on),
        decay_off: decay_sum(dim, &off),
        jumps_on: to_channels(&on),
        jumps_off: to_channels(&off),
        h: vec![ZERO; dim * dim],
        a: vec![ZERO; dim * dim],
    };

    let n_atoms = rho0.n_atoms();
    let mut y = rho0.matrix().as_slice().to_vec();
    let mut times = Vec::with_capacity(sample_times.len());
    let mut populations = Vec::with_capacity(sample_times.len());
    let mut snapshots = Vec::new();
    let stats = integrate(
        &mut system,
        &mut y,
        &breakpoints,
        sample_times,
        &options.ode,
        |_, t, state| {
            let rho = DensityMatrix::from_raw(ComplexMatrix::from_vec(dim, dim, state.to_vec()), n_atoms);
            if options.check_invariants {
                rho.check_at(t)?;
            }
            times.push(t);
            populations.push(rho.populations());
            if options.keep_snapshots {
                snapshots.push(rho);
            }
            Ok(())
        },
    )?;
    Ok(TrajectoryResult {
        times,
        n_atoms,
        populations,
        snapshots,
        stats,
    })
}

/// Trapezoidal average of `values` sampled at `times` over `window`, with
/// linear interpolation at window edges that fall between samples.
pub fn time_average(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<f64> {
    let (start, end) = window;
    let n = times.len();
    if n == 0 || values.len() != n {
        return Err(Error::InsufficientData("empty or mismatched series".into()));
    }
    let tol = 1e-9 * times[n - 1].abs().max(1.0);
    if !(start <= end) || start < times[0] - tol || end > times[n - 1] + tol {
        return Err(Error::WindowOutOfRange { start, end });
    }
    let interp = |t: f64| -> f64 {
        let k = times.partition_point(|&x| x < t);
        if k == 0 {
            return values[0];
        }
        if k >= n {
            return values[n - 1];
        }
        let (ta, tb) = (times[k - 1], times[k]);
        if tb == ta {
            return values[k];
        }
        values[k - 1] + (values[k] - values[k - 1]) * (t - ta) / (tb - ta)
    };
    if end - start <= 0.0 {
        return Ok(interp(start));
    }
    let mut pts = vec![(start, interp(start))];
    for (t, v) in times.iter().zip(values) {
        if *t > start && *t < end {
            pts.push((*t, *v));
        }
    }
    pts.push((end, interp(end)));
    let area: f64 = pts
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(area / (end - start))
}

/// Time-averaged population of basis state `label` over `window`.
pub fn time_averaged_population(result: &TrajectoryResult, label: &str, window: (f64, f64)) -> Result<f64> {
    let series = result.population(label)?;
    time_average(&result.times, &series, window)
}

/// Evenly spaced sample times `t0, t0 + dt, …` up to and including `t1`.
pub fn uniform_times(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![t0];
    }
    (0..count)
        .map(|k| {
            if k == count - 1 {
                t1
            } else {
                t0 + (t1 - t0) * k as f64 / (count - 1) as f64
            }
        })
        .collect()
}
