//! Levenberg–Marquardt least squares and the model families used for Rabi
//! oscillations, decays, Bessel carrier calibration, AOD distance
//! calibration and AOM diffraction efficiency.

use serde::Serialize;

use crate::bessel::{bessel_j, bessel_j_zeros};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub parameters: Vec<f64>,
    /// Square roots of the covariance diagonal.
    pub uncertainties: Vec<f64>,
    /// Scaled by the reduced chi-square.
    pub covariance: Vec<Vec<f64>>,
    /// √(Σ wᵢ rᵢ²).
    pub residual_norm: f64,
    pub reduced_chi_square: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Residual norm after every accepted iteration, starting point first.
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl FitResult {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.parameters[i])
    }

    pub fn uncertainty(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.uncertainties[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    /// Stop when the relative cost decrease falls below this.
    pub cost_tolerance: f64,
    /// Stop when every relative parameter step falls below this.
    pub step_tolerance: f64,
    /// Smallest acceptable eigenvalue ratio of the scaled normal matrix.
    pub rank_tolerance: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            initial_lambda: 1e-3,
            cost_tolerance: 1e-16,
            step_tolerance: 1e-14,
            rank_tolerance: 1e-14,
        }
    }
}

fn weighted_residuals(
    model: &dyn Fn(&[f64], f64) -> f64,
    p: &[f64],
    xs: &[f64],
    ys: &[f64],
    sw: &[f64],
    out: &mut [f64],
) {
    for i in 0..xs.len() {
        out[i] = sw[i] * (ys[i] - model(p, xs[i]));
    }
}

fn cost(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Solves `a x = b` for a small dense system by Gaussian elimination with
/// partial pivoting; `None` when singular.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        cols.push(solve(a.to_vec(), e)?);
    }
    Some((0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect())
}

/// Smallest-to-largest eigenvalue ratio of the unit-diagonal scaled version
/// of a symmetric PSD matrix (Jacobi rotations, real arithmetic).
fn scaled_condition(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let d: Vec<f64> = (0..n).map(|i| a[i][i].max(0.0).sqrt()).collect();
    if d.iter().any(|v| *v == 0.0 || !v.is_finite()) {
        return 0.0;
    }
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j])).collect())
        .collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let ev: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    let max = ev.iter().cloned().fold(f64::MIN, f64::max);
    let min = ev.iter().cloned().fold(f64::MAX, f64::min);
    if max <= 0.0 {
        0.0
    } else {
        (min / max).max(0.0)
    }
}

/// Weighted least squares of `model(p, x)` against `ys`. Steps are accepted
/// only when they lower the cost, so the residual norm never increases.
pub fn levenberg_marquardt(
    model: &dyn Fn(&[f64], f64) -> f64,
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
    initial: &[f64],
    names: &[&str],
    options: &LmOptions,
) -> Result<FitResult> {
    let m = xs.len();
    let n = initial.len();
    if ys.len() != m || weights.is_some_and(|w| w.len() != m) {
        return Err(Error::InsufficientData("mismatched data lengths".into()));
    }
    if m < n {
        return Err(Error::InsufficientData(format!("{m} points for {n} parameters")));
    }
    let sw: Vec<f64> = match weights {
        Some(w) => {
            if w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InsufficientData("negative weight".into()));
            }
            w.iter().map(|v| v.sqrt()).collect()
        }
        None => vec![1.0; m],
    };
    let mut p = initial.to_vec();
    let mut r = vec![0.0; m];
    weighted_residuals(model, &p, xs, ys, &sw, &mut r);
    let mut c = cost(&r);
    if !c.is_finite() {
        return Err(Error::NoConvergence("model not finite at the starting point".into()));
    }
    let mut history = vec![c.sqrt()];
    let mut lambda = options.initial_lambda;
    let mut jac = vec![vec![0.0; n]; m];
    let mut iterations = 0;
    let mut converged = false;
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];

    let jacobian = |p: &[f64], jac: &mut Vec<Vec<f64>>, rp: &mut [f64], rm: &mut [f64]| {
        for j in 0..n {
            let h = 1e-6 * p[j].abs().max(1e-6);
            let mut pp = p.to_vec();
            pp[j] = p[j] + h;
            weighted_residuals(model, &pp, xs, ys, &sw, rp);
            pp[j] = p[j] - h;
            weighted_residuals(model, &pp, xs, ys, &sw, rm);
            for i in 0..m {
                // residual is y − f, so ∂f/∂p = −∂r/∂p
                jac[i][j] = -(rp[i] - rm[i]) / (2.0 * h);
            }
        }
    };

    while iterations < options.max_iterations {
        iterations += 1;
        jacobian(&p, &mut jac, &mut rp, &mut rm);
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for i in 0..m {
            for a in 0..n {
                jtr[a] += jac[i][a] * r[i];
                for b in 0..n {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        if c == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[k][k] += lambda * jtj[k][k].max(1e-30);
            }
            let Some(delta) = solve(a, jtr.clone()) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(&delta).map(|(x, d)| x + d).collect();
            weighted_residuals(model, &trial, xs, ys, &sw, &mut rp);
            let ct = cost(&rp);
            let small_step = delta
                .iter()
                .zip(&p)
                .all(|(d, x)| d.abs() <= options.step_tolerance * (x.abs() + options.step_tolerance));
            if ct.is_finite() && ct < c {
                let rel = (c - ct) / c;
                p = trial;
                std::mem::swap(&mut r, &mut rp);
                c = ct;
                history.push(c.sqrt());
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                if rel < options.cost_tolerance || small_step {
                    converged = true;
                }
                break;
            }
            if small_step {
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            // no cost-lowering step exists: at a minimum to working precision
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!(
            "no convergence after {} iterations",
            options.max_iterations
        )));
    }

    jacobian(&p, &mut jac, &mut rp, &mut rm);
    let mut jtj = vec![vec![0.0; n]; n];
    for row in &jac {
        for a in 0..n {
            for b in 0..n {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    let cond = scaled_condition(&jtj);
    if cond < options.rank_tolerance {
        return Err(Error::NoConvergence(format!(
            "rank-deficient Jacobian (scaled condition {cond:.2e}): parameters not identifiable"
        )));
    }
    let dof = (m - n).max(1) as f64;
    let red = c / dof;
    let inv = invert(&jtj)
        .ok_or_else(|| Error::NoConvergence("singular normal matrix".into()))?;
    let covariance: Vec<Vec<f64>> = inv
        .iter()
        .map(|row| row.iter().map(|v| v * red).collect())
        .collect();
    let uncertainties = (0..n).map(|k| covariance[k][k].max(0.0).sqrt()).collect();
    Ok(FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        parameters: p,
        uncertainties,
        covariance,
        residual_norm: c.sqrt(),
        reduced_chi_square: red,
        converged: true,
        iterations,
        history,
    })
}

fn check_series(xs: &[f64], ys: &[f64], min_points: usize) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::InsufficientData("x and y lengths differ".into()));
    }
    if xs.len() < min_points {
        return Err(Error::InsufficientData(format!(
            "need at least {min_points} points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::InsufficientData("non-finite data".into()));
    }
    Ok(())
}

/// Replaces an internal rate parameter by its reciprocal in the reported
/// result, propagating the uncertainty to first order.
fn rate_to_time(mut fit: FitResult, index: usize, name: &str) -> FitResult {
    let g = fit.parameters[index];
    let tau = if g == 0.0 { f64::INFINITY } else { 1.0 / g };
    let jac = -tau * tau;
    let n = fit.parameters.len();
    for k in 0..n {
        if k != index {
            fit.covariance[index][k] *= jac;
            fit.covariance[k][index] *= jac;
        }
    }
    fit.covariance[index][index] *= jac * jac;
    fit.parameters[index] = tau;
    fit.uncertainties[index] = fit.covariance[index][index].max(0.0).sqrt();
    fit.names[index] = name.to_string();
    fit
}

/// Strongest frequency (cycles per time unit) of `ys − mean` on a grid up
/// to the mean-spacing Nyquist frequency, refined parabolically.
fn spectrum_peak(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let span = xs[n - 1] - xs[0];
    let mean = ys.iter().sum::<f64>() / n as f64;
    let nyquist = 0.5 * (n - 1) as f64 / span;
    let df = 0.05 / span;
    let count = (nyquist / df).ceil() as usize;
    let power = |f: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for (x, y) in xs.iter().zip(ys) {
            let ph = 2.0 * std::f64::consts::PI * f * x;
            c += (y - mean) * ph.cos();
            s += (y - mean) * ph.sin();
        }
        c * c + s * s
    };
    let grid: Vec<f64> = (1..=count).map(|k| k as f64 * df).collect();
    let powers: Vec<f64> = grid.iter().map(|f| power(*f)).collect();
    // skip the low-frequency shoulder of a decaying background
    let start = ((0.5 / span) / df).floor() as usize;
    let mut best = start.min(grid.len() - 1);
    for k in best..grid.len() {
        if powers[k] > powers[best] {
            best = k;
        }
    }
    if best > 0 && best + 1 < grid.len() {
        let (a, b, c) = (powers[best - 1], powers[best], powers[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            return grid[best] + 0.5 * (a - c) / denom * df;
        }
    }
    grid[best]
}

/// `a·e^{−t/τ}·cos(2πft + φ) + c`; parameters amplitude, frequency, phase,
/// decay_time, offset.
pub fn damped_sinusoid(p: &[f64], t: f64) -> f64 {
    let (a, f, phi, tau, c) = (p[0], p[1], p[2], p[3], p[4]);
    a * (-t / tau).exp() * (2.0 * std::f64::consts::PI * f * t + phi).cos() + c
}

pub fn fit_damped_sinusoid(times: &[f64], values: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    check_series(times, values, 8)?;
    let n = times.len();
    let span = times[n - 1] - times[0];
    if !(span > 0.0) {
        return Err(Error::InsufficientData("zero time span".into()));
    }
    let f0 = spectrum_peak(times, values);
    if span * f0 < 1.5 {
        return Err(Error::InsufficientData(format!(
            "data span {:.3} covers fewer than 1.5 periods of the dominant frequency",
            span
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let (mut cs, mut sn) = (0.0, 0.0);
    for (t, y) in times.iter().zip(values) {
        let ph = 2.0 * std::f64::consts::PI * f0 * t;
        cs += (y - mean) * ph.cos();
        sn += (y - mean) * ph.sin();
    }
    let amp = 2.0 * (cs * cs + sn * sn).sqrt() / n as f64;
    let phase = (-sn).atan2(cs);
    // internal parameterization with the decay rate, which may be zero
    let model = |p: &[f64], t: f64| {
        p[0] * (-p[3] * t).exp() * (2.0 * std::f64::consts::PI * p[1] * t + p[2]).cos() + p[4]
    };
    let names = ["amplitude", "frequency", "phase", "decay_rate", "offset"];
    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    for rate in [0.0, 0.3 / span, 1.0 / span, 3.0 / span] {
        let init = [amp * (1.0 + rate * span * 0.5), f0, phase, rate, mean];
        match levenberg_marquardt(&model, times, values, weights, &init, &names, &LmOptions::default()) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.residual_norm < b.residual_norm) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let mut fit = best.ok_or_else(|| last_err.unwrap_or(Error::NoConvergence("damped sinusoid".into())))?;
    // canonical form: positive amplitude and frequency, phase in (−π, π]
    if fit.parameters[1] < 0.0 {
        fit.parameters[1] = -fit.parameters[1];
        fit.parameters[2] = -fit.parameters[2];
    }
    if fit.parameters[0] < 0.0 {
        fit.parameters[0] = -fit.parameters[0];
        fit.parameters[2] += std::f64::consts::PI;
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut ph = fit.parameters[2].rem_euclid(two_pi);
    if ph > std::f64::consts::PI {
        ph -= two_pi;
    }
    fit.parameters[2] = ph;
    Ok(rate_to_time(fit, 3, "decay_time"))
}

/// `a·e^{−t/τ} + c`; parameters amplitude, decay_time, offset.
pub fn exponential_decay(p: &[f64], t: f64) -> f64 {
    p[0] * (-t / p[1]).exp() + p[2]
}

fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

pub fn fit_exponential_decay(times: &[f64], values: &[f64]) -> Result<FitResult> {
    check_series(times, values, 5)?;
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    let range = max - min;
    if range <= 1e-12 * max.abs().max(1.0) {
        return Err(Error::NoConvergence(
            "constant data: decay time is unbounded".into(),
        ));
    }
    let model = |p: &[f64], t: f64| p[0] * (-p[1] * t).exp() + p[2];
    // log-linear regression of |y − c| for a ladder of candidate offsets
    // below the minimum (decay) and above the maximum (growth toward c)
    let mut best: Option<([f64; 3], f64)> = None;
    for k in 0..40 {
        let margin = range * 10f64.powf(-3.0 + 4.0 * k as f64 / 39.0);
        for c in [min - margin, max + margin] {
            let ls: Vec<f64> = values.iter().map(|y| (y - c).abs().ln()).collect();
            let (slope, icpt) = linear_regression(times, &ls);
            let sign = if c < min { 1.0 } else { -1.0 };
            let p = [sign * icpt.exp(), -slope, c];
            let r: f64 = times
                .iter()
                .zip(values)
                .map(|(t, y)| (y - model(&p, *t)).powi(2))
                .sum();
            if r.is_finite() && best.is_none_or(|(_, b)| r < b) {
                best = Some((p, r));
            }
        }
    }
    let (init, _) = best.ok_or_else(|| Error::NoConvergence("no usable starting point".into()))?;
    let fit = levenberg_marquardt(
        &model,
        times,
        values,
        None,
        &init,
        &["amplitude", "decay_rate", "offset"],
        &LmOptions::default(),
    )?;
    if fit.parameters[1] <= 0.0 {
        return Err(Error::NoConvergence(format!(
            "fitted decay rate {} is not positive",
            fit.parameters[1]
        )));
    }
    Ok(rate_to_time(fit, 1, "decay_time"))
}

/// Normalized carrier power `|J₀(α/χ)|`.
pub fn bessel_carrier(chi: f64, alpha: f64) -> f64 {
    bessel_j(0, alpha / chi).abs()
}

pub fn fit_bessel_carrier(alphas: &[f64], carrier_powers: &[f64]) -> Result<FitResult> {
    check_series(alphas, carrier_powers, 10)?;
    let z = bessel_j_zeros(0, 1)[0];
    let lo = alphas.iter().cloned().fold(f64::MAX, f64::min);
    let hi = alphas.iter().cloned().fold(f64::MIN, f64::max);
    if !(lo < z && hi > z) {
        return Err(Error::InsufficientData(
            "modulation indices must bracket the first carrier zero".into(),
        ));
    }
    let model = |p: &[f64], a: f64| bessel_carrier(p[0], a);
    levenberg_marquardt(&model, alphas, carrier_powers, None, &[1.0], &["chi"], &LmOptions::default())
}

/// C₆ in MHz·µm⁶ (ordinary frequency) for the distance calibration model.
pub const C6_MHZ_UM6: f64 = 251_288.0;

/// `C₆/(κ f)⁶ + δ_u` in MHz.
pub fn distance_shift(kappa: f64, delta_u: f64, f: f64) -> f64 {
    C6_MHZ_UM6 / (kappa * f).powi(6) + delta_u
}

pub fn fit_distance_calibration(freq_spacings: &[f64], resonance_shifts: &[f64]) -> Result<FitResult> {
    check_series(freq_spacings, resonance_shifts, 4)?;
    if freq_spacings.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::InsufficientData("frequency spacings must be positive".into()));
    }
    let (f0, s0) = (freq_spacings[0], resonance_shifts[0]);
    if !(s0 > 0.0) {
        return Err(Error::InsufficientData("first resonance shift must be positive".into()));
    }
    let kappa0 = (C6_MHZ_UM6 / s0).powf(1.0 / 6.0) / f0;
    let model = |p: &[f64], f: f64| distance_shift(p[0], p[1], f);
    levenberg_marquardt(
        &model,
        freq_spacings,
        resonance_shifts,
        None,
        &[kappa0, 0.0],
        &["kappa", "delta_u"],
        &LmOptions::default(),
    )
}

/// `A·tanh((v − V₀)/σ) + C`; parameters A, V0, sigma, C.
pub fn tanh_efficiency(p: &[f64], v: f64) -> f64 {
    p[0] * ((v - p[1]) / p[2]).tanh() + p[3]
}

/// Drive amplitude giving power `target` under [`tanh_efficiency`].
pub fn tanh_inverse(p: &[f64], target: f64) -> Result<f64> {
    let x = (target - p[3]) / p[0];
    if !(x.abs() < 1.0) {
        return Err(Error::TargetUnreachable {
            target,
            lo: p[3] - p[0].abs(),
            hi: p[3] + p[0].abs(),
        });
    }
    Ok(p[1] + p[2] * x.atanh())
}

pub fn fit_tanh_efficiency(drive_amplitudes: &[f64], powers: &[f64]) -> Result<FitResult> {
    check_series(drive_amplitudes, powers, 8)?;
    let mut pts: Vec<(f64, f64)> = drive_amplitudes.iter().cloned().zip(powers.iter().cloned()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max = powers.iter().cloned().fold(f64::MIN, f64::max);
    let min = powers.iter().cloned().fold(f64::MAX, f64::min);
    let a0 = 0.5 * (max - min);
    let c0 = 0.5 * (max + min);
    if a0 <= 1e-9 * max.abs().max(1e-300) {
        return Err(Error::NoConvergence(
            "rank-deficient: powers are flat, the tanh knee is not resolved".into(),
        ));
    }
    // crossing of the midpoint and the local slope there
    let mut v0 = pts[pts.len() / 2].0;
    let mut slope = 0.0;
    for w in pts.windows(2) {
        if (w[0].1 - c0) * (w[1].1 - c0) <= 0.0 && w[1].0 > w[0].0 {
            let frac = (c0 - w[0].1) / (w[1].1 - w[0].1);
            v0 = w[0].0 + frac * (w[1].0 - w[0].0);
            slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            break;
        }
    }
    let span = pts[pts.len() - 1].0 - pts[0].0;
    let sigma0 = if slope != 0.0 { (a0 / slope).abs() } else { 0.25 * span };
    let a_signed = if slope < 0.0 { -a0 } else { a0 };
    let model = |p: &[f64], v: f64| tanh_efficiency(p, v);
    let fit = levenberg_marquardt(
        &model,
        drive_amplitudes,
        powers,
        None,
        &[a_signed, v0, sigma0, c0],
        &["A", "V0", "sigma", "C"],
        &LmOptions::default(),
    )?;
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn damped_sinusoid_round_trip() {
        let truth = [0.45, 1.466, 0.7, 5.0, 0.5];
        let t: Vec<f64> = (0..200).map(|k| k as f64 * 0.05).collect();
        let y: Vec<f64> = t.iter().map(|x| damped_sinusoid(&truth, *x)).collect();
        let fit = fit_damped_sinusoid(&t, &y, None).unwrap();
        for (name, v) in ["amplitude", "frequency", "phase", "decay_time", "offset"].iter().zip(truth) {
            assert!(rel(fit.get(name).unwrap(), v) < 1e-6, "{name}: {:?}", fit.get(name));
        }
        assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn damped_sinusoid_guards() {
        let t: Vec<f64> = (0..5).map(|k| k as f64).collect();
        assert!(matches!(
            fit_damped_sinusoid(&t, &t, None),
            Err(Error::InsufficientData(_))
        ));
        // under one period of signal
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|x| (2.0 * x).cos()).collect();
        assert!(matches!(
            fit_damped_sinusoid(&t, &y, None),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn exponential_round_trip() {
        let truth = [0.8, 11.0, 0.1];
        let t: Vec<f64> = (0..30).map(|k| k as f64 * 0.7).collect();
        let y: Vec<f64> = t.iter().map(|x| exponential_decay(&truth, *x)).collect();
        let fit = fit_exponential_decay(&t, &y).unwrap();
        assert!(rel(fit.get("amplitude").unwrap(), 0.8) < 1e-8);
        assert!(rel(fit.get("decay_time").unwrap(), 11.0) < 1e-8);
        assert!(rel(fit.get("offset").unwrap(), 0.1) < 1e-8);
        let flat = vec![0.4; 10];
        assert!(matches!(
            fit_exponential_decay(&t[..10], &flat),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn bessel_carrier_recovery() {
        let a: Vec<f64> = (0..40).map(|k| 0.1 + k as f64 * 0.15).collect();
        for chi in [1.0, 1.045] {
            let p: Vec<f64> = a.iter().map(|x| bessel_carrier(chi, *x)).collect();
            let fit = fit_bessel_carrier(&a, &p).unwrap();
            assert!((fit.get("chi").unwrap() - chi).abs() < 1e-6);
        }
        let z = bessel_j_zeros(0, 1)[0];
        let chi = 1.045;
        let p_at = |x: f64| bessel_carrier(chi, x);
        assert!(p_at(chi * z) < 1e-12);
        assert!(fit_bessel_carrier(&a[..5], &a[..5]).is_err());
    }

    #[test]
    fn distance_calibration_recovery() {
        let f: Vec<f64> = (0..8).map(|k| 7.0 + 0.5 * k as f64).collect();
        for (kappa, du) in [(0.780, 0.03), (0.780, 0.0)] {
            let s: Vec<f64> = f.iter().map(|x| distance_shift(kappa, du, *x)).collect();
            let fit = fit_distance_calibration(&f, &s).unwrap();
            assert!(rel(fit.get("kappa").unwrap(), kappa) < 1e-6);
            assert!((fit.get("delta_u").unwrap() - du).abs() < 1e-6);
        }
        // κf is all that enters: doubling f with κ halved changes nothing
        for x in &f {
            assert!((distance_shift(0.39, 0.0, 2.0 * x) - distance_shift(0.78, 0.0, *x)).abs() < 1e-12);
        }
    }

    #[test]
    fn tanh_recovery_and_inverse() {
        let truth = [0.9, 0.45, 0.12, 0.95];
        let v: Vec<f64> = (0..25).map(|k| k as f64 * 0.04).collect();
        let p: Vec<f64> = v.iter().map(|x| tanh_efficiency(&truth, *x)).collect();
        let fit = fit_tanh_efficiency(&v, &p).unwrap();
        for (k, t) in truth.iter().enumerate() {
            assert!(rel(fit.parameters[k], *t) < 1e-6);
        }
        for x in [0.2, 0.45, 0.7] {
            let back = tanh_inverse(&truth, tanh_efficiency(&truth, x)).unwrap();
            assert!((back - x).abs() < 1e-6);
        }
        let sat = vec![1.85; 10];
        let vs: Vec<f64> = (0..10).map(|k| 3.0 + k as f64).collect();
        match fit_tanh_efficiency(&vs, &sat) {
            Err(Error::NoConvergence(msg)) => assert!(msg.contains("rank-deficient")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn saturated_tail_is_rank_deficient() {
        // far in the saturated tail the knee parameters trade off freely
        let truth = [0.9, 0.45, 0.12, 0.95];
        let v: Vec<f64> = (0..10).map(|k| 5.0 + k as f64).collect();
        let p: Vec<f64> = v.iter().map(|x| tanh_efficiency(&truth, *x)).collect();
        assert!(fit_tanh_efficiency(&v, &p).is_err());
    }

    #[test]
    fn covariance_scales_with_noise() {
        let truth = [0.8, 5.0, 0.1];
        let t: Vec<f64> = (0..40).map(|k| k as f64 * 0.5).collect();
        let y: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(k, x)| exponential_decay(&truth, *x) + if k % 2 == 0 { 1e-3 } else { -1e-3 })
            .collect();
        let fit = fit_exponential_decay(&t, &y).unwrap();
        let s = fit.uncertainty("decay_time").unwrap();
        assert!(s > 0.0 && s < 0.1);
        for a in 0..3 {
            for b in 0..3 {
                assert!((fit.covariance[a][b] - fit.covariance[b][a]).abs() < 1e-12 * fit.covariance[a][a].abs().max(1e-30));
            }
        }
    }
}
