//! Bessel functions of the first kind for integer order.
//!
//! Values come from Miller's downward recurrence normalized with
//! `J₀ + 2ΣJ₂ₖ = 1`, which is stable for every order at once and accurate
//! well past the modulation indices used here (α ≤ 15, |m| ≤ 20).

/// Returns `[J₀(x), J₁(x), …, J_max_order(x)]`.
pub fn bessel_j_upto(max_order: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; max_order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let ax = x.abs();
    let top = max_order.max(ax.ceil() as usize);
    let mut start = top + 32 + (60.0 * top as f64).sqrt() as usize;
    start += start % 2;

    let mut j_next = 0.0_f64; // J_{k+1}
    let mut j_cur = 1e-30_f64; // J_k
    let mut norm_sum = 0.0_f64;
    for k in (1..=start).rev() {
        let j_prev = (2.0 * k as f64 / ax) * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        // j_cur now holds J_{k-1}
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            norm_sum *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
        let order = k - 1;
        if order <= max_order {
            out[order] = j_cur;
        }
        if order > 0 && order % 2 == 0 {
            norm_sum += 2.0 * j_cur;
        }
    }
    norm_sum += j_cur;
    for v in out.iter_mut() {
        *v /= norm_sum;
    }
    if x < 0.0 {
        for (m, v) in out.iter_mut().enumerate() {
            if m % 2 == 1 {
                *v = -*v;
            }
        }
    }
    out
}

/// `J_m(x)` for any integer order, using `J_{−m} = (−1)^m J_m`.
pub fn bessel_j(order: i32, x: f64) -> f64 {
    let m = order.unsigned_abs() as usize;
    let v = bessel_j_upto(m, x)[m];
    if order < 0 && m % 2 == 1 {
        -v
    } else {
        v
    }
}

/// The first `count` positive zeros of `J_order`, found by scanning for sign
/// changes and refining each bracket by bisection.
pub fn bessel_j_zeros(order: u32, count: usize) -> Vec<f64> {
    let f = |x: f64| bessel_j(order as i32, x);
    let mut zeros = Vec::with_capacity(count);
    let step = 0.05;
    let mut lo = if order == 0 { step } else { order as f64 + step };
    let mut f_lo = f(lo);
    while zeros.len() < count {
        let hi = lo + step;
        let f_hi = f(hi);
        if f_lo == 0.0 {
            zeros.push(lo);
        } else if f_lo * f_hi < 0.0 {
            zeros.push(bisect(f, lo, hi, 1e-14));
        }
        lo = hi;
        f_lo = f_hi;
    }
    zeros
}

/// Root of `f` in `[lo, hi]`, assuming a sign change across the bracket.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 || hi - lo < tol {
            return mid;
        }
        if f_lo * f_mid < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    0.5 * (lo + hi)
}
