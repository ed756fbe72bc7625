//! Adaptive Dormand–Prince 5(4) integrator for complex state vectors.
//!
//! The span is split into pieces at caller-supplied breakpoints, where the
//! right-hand side may jump. Steps never cross a breakpoint and land exactly
//! on every requested output time. The right-hand side is told which piece it
//! is evaluated in, so a stage evaluated exactly at the end of a piece still
//! uses that piece's dynamics.

use crate::error::{Error, Result};
use crate::linalg::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// First trial step (µs); 0 picks one from the piece length.
    pub initial_step: f64,
    /// Steps below this abort with [`Error::StepSizeUnderflow`].
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-10,
            initial_step: 0.0,
            min_step: 1e-12,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// `dy/dt = f(piece, t, y)`.
pub trait OdeSystem {
    fn rhs(&mut self, piece: usize, t: f64, y: &[C64], dy: &mut [C64]) -> Result<()>;

    /// Upper bound on the step inside `piece`.
    fn max_step(&self, _piece: usize) -> f64 {
        f64::INFINITY
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Work {
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    y_new: Vec<C64>,
}

impl Work {
    fn new(n: usize) -> Self {
        let z = || vec![C64::new(0.0, 0.0); n];
        Self {
            k: [z(), z(), z(), z(), z(), z(), z()],
            tmp: z(),
            y_new: z(),
        }
    }
}

/// Integrates from `breakpoints[0]` to the last breakpoint. `outputs` must be
/// ascending and inside the span; `on_output` is called with the state at
/// each of them (and may abort by returning an error).
pub fn integrate<S: OdeSystem>(
    system: &mut S,
    y: &mut [C64],
    breakpoints: &[f64],
    outputs: &[f64],
    options: &OdeOptions,
    mut on_output: impl FnMut(usize, f64, &[C64]) -> Result<()>,
) -> Result<OdeStats> {
    if breakpoints.len() < 2 {
        return Err(Error::InvalidConfig("integration span needs two breakpoints".into()));
    }
    let t_start = breakpoints[0];
    let t_end = *breakpoints.last().unwrap();
    if breakpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("breakpoints must be ascending".into()));
    }
    if outputs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("output times must be ascending".into()));
    }
    if let (Some(&first), Some(&last)) = (outputs.first(), outputs.last()) {
        if first < t_start || last > t_end {
            return Err(Error::WindowOutOfRange {
                start: first,
                end: last,
            });
        }
    }

    let n = y.len();
    let mut work = Work::new(n);
    let mut stats = OdeStats::default();
    let mut next_out = 0usize;
    let mut h_prev = options.initial_step;

    // outputs at the very start
    while next_out < outputs.len() && outputs[next_out] <= t_start {
        on_output(next_out, outputs[next_out], y)?;
        next_out += 1;
    }

    for piece in 0..breakpoints.len() - 1 {
        let a = breakpoints[piece];
        let b = breakpoints[piece + 1];
        if b <= a {
            continue;
        }
        let h_max = system.max_step(piece).min(b - a);
        let mut t = a;
        // right-hand side may jump at a breakpoint: no FSAL across pieces
        system.rhs(piece, t, y, &mut work.k[0])?;
        stats.evaluations += 1;
        let mut h = if h_prev > 0.0 {
            h_prev.min(h_max)
        } else {
            (0.01 * (b - a)).min(h_max)
        };

        while t < b {
            // next stop: an output time or the piece end
            let stop = if next_out < outputs.len() && outputs[next_out] < b {
                outputs[next_out]
            } else {
                b
            };
            let mut step = h.min(h_max);
            let mut lands = false;
            if t + step >= stop - 1e-14 * stop.abs().max(1.0) {
                step = stop - t;
                lands = true;
            }
            if step < options.min_step && !lands {
                return Err(Error::StepSizeUnderflow { t, h: step });
            }
            if stats.accepted + stats.rejected >= options.max_steps {
                return Err(Error::StepSizeUnderflow { t, h: step });
            }

            let err = dp_step(system, piece, t, step, y, &mut work, options)?;
            stats.evaluations += 6;
            if err <= 1.0 {
                stats.accepted += 1;
                t = if lands { stop } else { t + step };
                y.copy_from_slice(&work.y_new);
                work.k.swap(0, 6);
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // keep the controller's proposal when a landing step was short
                if !lands || step >= h {
                    h = step * factor;
                } else {
                    h = h.max(step * factor);
                }
                if lands {
                    while next_out < outputs.len() && outputs[next_out] <= stop {
                        on_output(next_out, outputs[next_out], y)?;
                        next_out += 1;
                    }
                }
            } else {
                stats.rejected += 1;
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h < options.min_step {
                    return Err(Error::StepSizeUnderflow { t, h });
                }
            }
        }
        h_prev = h;
    }

    while next_out < outputs.len() {
        on_output(next_out, outputs[next_out], y)?;
        next_out += 1;
    }
    Ok(stats)
}

/// One Dormand–Prince step; leaves the proposal in `work.y_new`, its
/// derivative in `work.k[6]`, and returns the scaled error norm.
fn dp_step<S: OdeSystem>(
    system: &mut S,
    piece: usize,
    t: f64,
    h: f64,
    y: &[C64],
    w: &mut Work,
    options: &OdeOptions,
) -> Result<f64> {
    let n = y.len();
    macro_rules! stage {
        ($dst:expr, $c:expr, [$(($coef:expr, $src:expr)),*]) => {{
            for i in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                $( acc += w.k[$src][i] * $coef; )*
                w.tmp[i] = y[i] + acc * h;
            }
            let (head, tail) = w.k.split_at_mut($dst);
            let _ = head;
            system.rhs(piece, t + $c * h, &w.tmp, &mut tail[0])?;
        }};
    }
    stage!(1, C2, [(A21, 0)]);
    stage!(2, C3, [(A31, 0), (A32, 1)]);
    stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
    stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
    stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
    for i in 0..n {
        w.y_new[i] = y[i]
            + (w.k[0][i] * B1 + w.k[2][i] * B3 + w.k[3][i] * B4 + w.k[4][i] * B5 + w.k[5][i] * B6)
                * h;
    }
    {
        let (head, tail) = w.k.split_at_mut(6);
        let _ = head;
        system.rhs(piece, t + h, &w.y_new, &mut tail[0])?;
    }
    let mut err: f64 = 0.0;
    for i in 0..n {
        let e = (w.k[0][i] * E1
            + w.k[2][i] * E3
            + w.k[3][i] * E4
            + w.k[4][i] * E5
            + w.k[5][i] * E6
            + w.k[6][i] * E7)
            * h;
        let scale = options.atol + options.rtol * y[i].norm().max(w.y_new[i].norm());
        err = err.max(e.norm() / scale);
    }
    if !err.is_finite() {
        return Ok(f64::INFINITY);
    }
    Ok(err)
}
