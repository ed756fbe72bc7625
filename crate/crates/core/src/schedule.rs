//! Drive schedules: static, frequency-modulated, laser-free and STIRAP
//! segments laid end to end.
//!
//! Times are in µs and frequencies in rad/µs. Each segment is evaluated in
//! its own local time starting at zero; the modulation phase restarts at the
//! start of every FFM segment, as with a triggered waveform generator.

use crate::bessel::{bessel_j, bessel_j_zeros, bisect};
use crate::error::{Error, Result};
use crate::system::LaserParams;

/// Sinusoidal detuning modulation `δ sin(ω₀ (t − t₀))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfmParams {
    /// δ (rad/µs).
    pub modulation_amplitude: f64,
    /// ω₀ (rad/µs).
    pub modulation_frequency: f64,
    /// t₀: local time (µs) at which the sine argument is zero.
    pub phase_origin: f64,
}

impl FfmParams {
    pub fn new(modulation_amplitude: f64, modulation_frequency: f64) -> Result<Self> {
        let p = Self {
            modulation_amplitude,
            modulation_frequency,
            phase_origin: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters for a given modulation index `α = δ/ω₀`.
    pub fn from_index(alpha: f64, modulation_frequency: f64) -> Result<Self> {
        Self::new(alpha * modulation_frequency, modulation_frequency)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.modulation_frequency > 0.0) || !self.modulation_frequency.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "modulation frequency must be positive, got {}",
                self.modulation_frequency
            )));
        }
        if !(self.modulation_amplitude >= 0.0) || !self.modulation_amplitude.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "modulation amplitude must be non-negative, got {}",
                self.modulation_amplitude
            )));
        }
        Ok(())
    }

    pub fn modulation_index(&self) -> f64 {
        self.modulation_amplitude / self.modulation_frequency
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.modulation_frequency
    }

    /// Modulation phase `ω₀ (t − t₀)` at local time `t`.
    pub fn phase(&self, t: f64) -> f64 {
        self.modulation_frequency * (t - self.phase_origin)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StirapMode {
    /// The printed constants, negative indices clamped to zero.
    LiteralPaper,
    /// Same tanh shape with constants solved so that J₀(α(0)) = 0 at the
    /// second zero of J₀, α(T) = 0 and J₀(α(T/2)) = J₁(α(T/2)).
    ConditionSolved,
}

/// Modulation-index ramp `α(t)/α₀ = s·tanh[−(r/T)(t − T/2) + o] + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StirapProfile {
    pub alpha_start_scale: f64,
    pub rate: f64,
    pub offset: f64,
    pub alpha0: f64,
    pub total_time: f64,
    pub mode: StirapMode,
}

impl StirapProfile {
    pub const LITERAL_SCALE: f64 = 1.2;
    pub const LITERAL_RATE: f64 = 3.5;
    pub const LITERAL_OFFSET: f64 = 0.23;
    pub const LITERAL_ALPHA0: f64 = 2.4;

    pub fn literal(total_time: f64) -> Result<Self> {
        check_total_time(total_time)?;
        Ok(Self {
            alpha_start_scale: Self::LITERAL_SCALE,
            rate: Self::LITERAL_RATE,
            offset: Self::LITERAL_OFFSET,
            alpha0: Self::LITERAL_ALPHA0,
            total_time,
            mode: StirapMode::LiteralPaper,
        })
    }

    /// Re-solves the scale, rate and offset (α₀ kept at 2.4) for the three
    /// endpoint/midpoint conditions.
    ///
    /// With `a = α(0)/α₀ − 1`, `b = α(T)/α₀ − 1 = −1` and `m = α(T/2)/α₀ − 1`
    /// the conditions read `s·tanh(o ± r/2) = a, b` and `s·tanh(o) = m`.
    /// For fixed `s` the first two give `o` and `r`; the midpoint is then a
    /// monotone function of `s` ranging over `((a+b)/2, a)`, so only the
    /// J₀ = J₁ crossing between the first J₁ zero and the second J₀ zero is
    /// reachable by this shape.
    pub fn condition_solved(total_time: f64) -> Result<Self> {
        check_total_time(total_time)?;
        let alpha0 = Self::LITERAL_ALPHA0;
        let alpha_start = bessel_j_zeros(0, 2)[1];
        let alpha_mid = stirap_midpoint_index();
        let a = alpha_start / alpha0 - 1.0;
        let b = -1.0;
        let m = alpha_mid / alpha0 - 1.0;
        let mid_for_scale = |s: f64| {
            let u = (a / s).atanh();
            let w = (b / s).atanh();
            s * (0.5 * (u + w)).tanh()
        };
        let s_lo = a.abs().max(b.abs()) * (1.0 + 1e-12);
        let s_hi = 1e6;
        let scale = bisect(|s| mid_for_scale(s) - m, s_lo, s_hi, 1e-15);
        let u = (a / scale).atanh();
        let w = (b / scale).atanh();
        Ok(Self {
            alpha_start_scale: scale,
            rate: u - w,
            offset: 0.5 * (u + w),
            alpha0,
            total_time,
            mode: StirapMode::ConditionSolved,
        })
    }

    /// Modulation index at local time `t`.
    pub fn alpha_at(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.total_time).contains(&t) {
            return Err(Error::TimeOutOfSegment {
                t,
                duration: self.total_time,
            });
        }
        Ok(self.alpha_unchecked(t))
    }

    fn alpha_unchecked(&self, t: f64) -> f64 {
        let x = -(self.rate / self.total_time) * (t - 0.5 * self.total_time) + self.offset;
        let alpha = self.alpha0 * (self.alpha_start_scale * x.tanh() + 1.0);
        alpha.max(0.0)
    }
}

/// The J₀(α) = J₁(α) crossing between the first zero of J₁ and the second
/// zero of J₀.
pub fn stirap_midpoint_index() -> f64 {
    let lo = bessel_j_zeros(1, 1)[0];
    let hi = bessel_j_zeros(0, 2)[1];
    bisect(|x| bessel_j(0, x) - bessel_j(1, x), lo, hi, 1e-15)
}

fn check_total_time(total_time: f64) -> Result<()> {
    if !(total_time > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "STIRAP duration must be positive, got {total_time}"
        )));
    }
    Ok(())
}

/// Residual amplitude modulation `1 + Σ (A_n sin nω₀t + B_n cos nω₀t)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RamModel {
    /// `(A_n, B_n)` for n = 1, 2, …
    pub harmonics: Vec<(f64, f64)>,
}

impl RamModel {
    pub fn new(harmonics: Vec<(f64, f64)>) -> Result<Self> {
        for (n, (a, b)) in harmonics.iter().enumerate() {
            if !(a.abs() < 1.0 && b.abs() < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "RAM harmonic {} has |A|,|B| ≥ 1 ({a}, {b})",
                    n + 1
                )));
            }
        }
        Ok(Self { harmonics })
    }

    /// Multiplicative envelope at modulation phase `ω₀t`.
    pub fn envelope(&self, phase: f64) -> f64 {
        1.0 + self
            .harmonics
            .iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let n = (k + 1) as f64;
                a * (n * phase).sin() + b * (n * phase).cos()
            })
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentKind {
    /// Constant detuning Δ₀.
    Static { detuning: f64 },
    /// Δ₀ + δ sin(ω₀(t − t₀)).
    Ffm { ffm: FfmParams, detuning: f64 },
    /// Lasers off.
    LaserFree,
    /// α(t)·ω₀·sin(ω₀t) with α(t) from the ramp.
    Stirap {
        profile: StirapProfile,
        modulation_frequency: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseSegment {
    pub duration: f64,
    pub kind: SegmentKind,
    /// Multiplier on Ω: 0 for laser-free segments, 1 otherwise.
    pub rabi_scale: f64,
}

impl PulseSegment {
    pub fn static_drive(duration: f64, detuning: f64) -> Self {
        Self {
            duration,
            kind: SegmentKind::Static { detuning },
            rabi_scale: 1.0,
        }
    }

    pub fn ffm(duration: f64, ffm: FfmParams, detuning: f64) -> Self {
        Self {
            duration,
            kind: SegmentKind::Ffm { ffm, detuning },
            rabi_scale: 1.0,
        }
    }

    pub fn laser_free(duration: f64) -> Self {
        Self {
            duration,
            kind: SegmentKind::LaserFree,
            rabi_scale: 0.0,
        }
    }

    pub fn stirap(profile: StirapProfile, modulation_frequency: f64) -> Self {
        Self {
            duration: profile.total_time,
            kind: SegmentKind::Stirap {
                profile,
                modulation_frequency,
            },
            rabi_scale: 1.0,
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        // a little slack so integrator stages landing on the end are accepted
        let slack = 1e-12 * self.duration.max(1.0);
        if t < -slack || t > self.duration + slack || t.is_nan() {
            return Err(Error::TimeOutOfSegment {
                t,
                duration: self.duration,
            });
        }
        Ok(())
    }

    pub fn lasers_on(&self) -> bool {
        self.rabi_scale > 0.0 && !matches!(self.kind, SegmentKind::LaserFree)
    }

    /// Detuning Δ(t) at local time `t`.
    pub fn detuning_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(match &self.kind {
            SegmentKind::Static { detuning } => *detuning,
            SegmentKind::Ffm { ffm, detuning } => {
                detuning + ffm.modulation_amplitude * ffm.phase(t).sin()
            }
            SegmentKind::LaserFree => 0.0,
            SegmentKind::Stirap {
                profile,
                modulation_frequency,
            } => {
                let tc = t.clamp(0.0, profile.total_time);
                profile.alpha_unchecked(tc) * modulation_frequency * (modulation_frequency * t).sin()
            }
        })
    }

    /// Rabi frequency at local time `t`. RAM only acts on FFM segments.
    pub fn rabi_at(&self, lasers: &LaserParams, t: f64, ram: Option<&RamModel>) -> Result<f64> {
        self.check_time(t)?;
        if !self.lasers_on() {
            return Ok(0.0);
        }
        let base = lasers.rabi * self.rabi_scale;
        Ok(match (&self.kind, ram) {
            (SegmentKind::Ffm { ffm, .. }, Some(ram)) => base * ram.envelope(ffm.phase(t)),
            _ => base,
        })
    }

    /// Largest integrator step that resolves the modulation (1/20 period).
    pub fn max_step(&self) -> f64 {
        match &self.kind {
            SegmentKind::Ffm { ffm, .. } => ffm.period() / 20.0,
            SegmentKind::Stirap {
                modulation_frequency,
                ..
            } => 2.0 * std::f64::consts::PI / modulation_frequency / 20.0,
            _ => f64::INFINITY,
        }
    }
}

/// π-pulse length for the single-atom (`collective = false`) or blockaded
/// pair (`collective = true`, Rabi frequency √2·Ω) transition.
pub fn pi_pulse_duration(lasers: &LaserParams, collective: bool) -> f64 {
    let omega = if collective {
        std::f64::consts::SQRT_2 * lasers.rabi
    } else {
        lasers.rabi
    };
    std::f64::consts::PI / omega
}

/// Segments tiling `[0, total]`. A time on a boundary belongs to the later
/// segment; the final end point belongs to the last segment.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSchedule {
    segments: Vec<PulseSegment>,
    starts: Vec<f64>,
    total: f64,
}

impl DriveSchedule {
    pub fn new(segments: Vec<PulseSegment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidConfig("schedule has no segments".into()));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut t = 0.0;
        for (k, s) in segments.iter().enumerate() {
            if !(s.duration >= 0.0) || !s.duration.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "segment {k} has invalid duration {}",
                    s.duration
                )));
            }
            match &s.kind {
                SegmentKind::Ffm { ffm, .. } => ffm.validate()?,
                SegmentKind::Stirap {
                    profile,
                    modulation_frequency,
                } => {
                    if !(*modulation_frequency > 0.0) {
                        return Err(Error::InvalidConfig(
                            "STIRAP modulation frequency must be positive".into(),
                        ));
                    }
                    if (profile.total_time - s.duration).abs() > 1e-12 {
                        return Err(Error::InvalidConfig(
                            "STIRAP segment duration must equal the profile duration".into(),
                        ));
                    }
                }
                _ => {}
            }
            starts.push(t);
            t += s.duration;
        }
        Ok(Self {
            segments,
            starts,
            total: t,
        })
    }

    pub fn single(segment: PulseSegment) -> Result<Self> {
        Self::new(vec![segment])
    }

    pub fn segments(&self) -> &[PulseSegment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.total
    }

    pub fn segment_start(&self, index: usize) -> f64 {
        self.starts[index]
    }

    /// Segment boundaries, including 0 and the total.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = self.starts.clone();
        b.push(self.total);
        b
    }

    /// Index of the segment owning `t` and the local time within it.
    pub fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let slack = 1e-12 * self.total.max(1.0);
        if t < -slack || t > self.total + slack || t.is_nan() {
            return Err(Error::TimeOutOfSchedule { t, total: self.total });
        }
        // last segment with start <= t and positive duration, or the last one
        let mut idx = self.segments.len() - 1;
        for k in 0..self.segments.len() {
            let end = self.starts[k] + self.segments[k].duration;
            if t < end || k == self.segments.len() - 1 {
                idx = k;
                break;
            }
        }
        let local = (t - self.starts[idx]).clamp(0.0, self.segments[idx].duration);
        Ok((idx, local))
    }

    /// The segment owning `t` for integration over `(t, t + h]`: a time on a
    /// boundary is attributed to the later segment, matching [`locate`].
    pub fn segment_at(&self, t: f64) -> Result<(&PulseSegment, f64)> {
        let (k, local) = self.locate(t)?;
        Ok((&self.segments[k], local))
    }

    pub fn detuning_at(&self, t: f64) -> Result<f64> {
        let (s, local) = self.segment_at(t)?;
        s.detuning_at(local)
    }

    pub fn rabi_at(&self, lasers: &LaserParams, t: f64, ram: Option<&RamModel>) -> Result<f64> {
        let (s, local) = self.segment_at(t)?;
        s.rabi_at(lasers, local, ram)
    }

    pub fn lasers_on(&self, t: f64) -> Result<bool> {
        Ok(self.segment_at(t)?.0.lasers_on())
    }
}
