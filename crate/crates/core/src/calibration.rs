//! Coupling calibration from the zeros of associated Laguerre polynomials.
//!
//! The blue-sideband amplitude that takes `|n⟩` to `|n+1⟩` is proportional to
//! `L_n^{(1)}(η²)`. Choosing `η² = x*`, a zero of `L_M^{(1)}`, makes `|M⟩` a
//! dark state of the pumping process.

use thiserror::Error;

/// Largest polynomial degree evaluated by [`laguerre`].
pub const MAX_DEGREE: usize = 200;
/// Largest target phonon number accepted by the calibration.
pub const MAX_TARGET: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("target phonon number must satisfy 1 <= M <= {MAX_TARGET}, got {0}")]
    InvalidTarget(usize),
    #[error("zero #{index} of L_{m}^(1) does not exist (the polynomial has {m} positive zeros)")]
    NoSuchZero { m: usize, index: usize },
    #[error("failed to bracket zero #{index} of L_{m}^(1)")]
    RootNotBracketed { m: usize, index: usize },
}

/// Calibration of the protocol for one target Fock state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    /// Target phonon number `M`.
    pub target: usize,
    /// Smallest positive zero of `L_M^{(1)}`.
    pub x_star: f64,
    /// Scaled coupling `η = g/ω_m = √x*`.
    pub eta: f64,
    /// Resolution requirement `|η_{M+1} − η_M|`.
    pub delta_eta: f64,
    /// Sideband order used to fill `detuning`.
    pub sideband: u32,
    /// Pump detuning `Δ/ω_m = s − η²`.
    pub detuning: f64,
}

/// Associated Laguerre polynomial `L_n^{(k)}(x)` by the three-term recurrence.
pub fn laguerre(n: usize, k: usize, x: f64) -> f64 {
    assert!(n <= MAX_DEGREE, "degree {n} exceeds recurrence budget {MAX_DEGREE}");
    let k = k as f64;
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + k - x;
    for i in 1..n {
        let i = i as f64;
        let next = ((2.0 * i + 1.0 + k - x) * cur - (i + k) * prev) / (i + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `[L_0^{(k)}(x), …, L_{n_max}^{(k)}(x)]` from a single recurrence pass.
pub fn laguerre_sequence(n_max: usize, k: usize, x: f64) -> Vec<f64> {
    let kf = k as f64;
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    if n_max == 0 {
        return out;
    }
    out.push(1.0 + kf - x);
    for i in 1..n_max {
        let fi = i as f64;
        let next = ((2.0 * fi + 1.0 + kf - x) * out[i] - (fi + kf) * out[i - 1]) / (fi + 1.0);
        out.push(next);
    }
    out
}

fn scan_step(m: usize) -> f64 {
    if m > 40 {
        0.01
    } else {
        0.05
    }
}

/// Bisects `f` on `[lo, hi]` down to adjacent floating-point numbers.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Zero number `index` (0-based, ascending) of `L_m^{(1)}`.
pub fn laguerre_zero(m: usize, index: usize) -> Result<f64, CalibrationError> {
    if m == 0 || m > MAX_DEGREE {
        return Err(CalibrationError::InvalidTarget(m));
    }
    if index >= m {
        return Err(CalibrationError::NoSuchZero { m, index });
    }
    let f = |x: f64| laguerre(m, 1, x);
    let step = scan_step(m);
    // every zero of L_m^(1) lies below 2m + 1 + sqrt((2m+1)^2 + 1/4) < 4m + 3
    let x_max = 4.0 * m as f64 + 3.0;
    let mut lo = 0.0;
    let mut f_lo = f(lo);
    let mut seen = 0;
    while lo < x_max {
        let hi = lo + step;
        let f_hi = f(hi);
        if f_hi == 0.0 || (f_hi < 0.0) != (f_lo < 0.0) {
            if seen == index {
                return Ok(if f_hi == 0.0 { hi } else { bisect(f, lo, hi) });
            }
            seen += 1;
        }
        lo = hi;
        f_lo = f_hi;
    }
    Err(CalibrationError::RootNotBracketed { m, index })
}

/// `Δ/ω_m = s − η²`, the detuning that places the single-photon blue sideband
/// of order `s` on resonance.
pub fn sideband_detuning(s: u32, eta: f64) -> f64 {
    s as f64 - eta * eta
}

/// Calibration for target `|M⟩` on sideband `s`, using zero number `index`
/// of `L_M^{(1)}` (0 selects the smallest, which is what the protocol uses).
pub fn calibrate_with_zero(m: usize, s: u32, index: usize) -> Result<CalibrationResult, CalibrationError> {
    if m == 0 || m > MAX_TARGET {
        return Err(CalibrationError::InvalidTarget(m));
    }
    let x_star = laguerre_zero(m, index)?;
    let eta = x_star.sqrt();
    let next = laguerre_zero(m + 1, 0)?.sqrt();
    Ok(CalibrationResult {
        target: m,
        x_star,
        eta,
        delta_eta: (next - eta).abs(),
        sideband: s,
        detuning: sideband_detuning(s, eta),
    })
}

/// Calibration on sideband `s` from the smallest zero of `L_M^{(1)}`.
pub fn calibrate(m: usize, s: u32) -> Result<CalibrationResult, CalibrationError> {
    calibrate_with_zero(m, s, 0)
}

/// Calibration for the first blue sideband from the smallest zero of `L_M^{(1)}`.
pub fn first_zero(m: usize) -> Result<CalibrationResult, CalibrationError> {
    calibrate(m, 1)
}

/// `|η_{M+1} − η_M|` for consecutive smallest zeros.
pub fn eta_spacing(m: usize) -> Result<f64, CalibrationError> {
    Ok(first_zero(m)?.delta_eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Explicit summation `Σ (−1)^i C(n+k, n−i) x^i / i!`, independent of the
    /// recurrence, evaluated exactly in integers for `x = q/4` and rounded once.
    fn laguerre_by_sum(n: usize, k: usize, q: u32) -> f64 {
        let binom = |a: usize, b: usize| -> i128 { (0..b).fold(1i128, |acc, j| acc * (a - j) as i128 / (j + 1) as i128) };
        let falling = |hi: usize, lo: usize| -> i128 { (lo + 1..=hi).map(|v| v as i128).product() };
        // common denominator 4^n n!
        let mut numer: i128 = 0;
        for i in 0..=n {
            let sign = if i % 2 == 0 { 1 } else { -1 };
            let term = binom(n + k, n - i) * (q as i128).pow(i as u32) * 4i128.pow((n - i) as u32) * falling(n, i);
            numer += sign * term;
        }
        let denom = 4f64.powi(n as i32) * falling(n, 0) as f64;
        numer as f64 / denom
    }

    #[test]
    fn closed_forms() {
        assert_eq!(laguerre(1, 1, 2.0), 0.0);
        for k in 0..5 {
            for x in [0.0, 0.3, 7.5] {
                assert_eq!(laguerre(0, k, x), 1.0);
            }
        }
        assert!(laguerre(2, 1, 3.0 - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn recurrence_matches_explicit_sum() {
        for n in 0..=15 {
            for k in 0..=6 {
                for q in 0..=40u32 {
                    let x = q as f64 * 0.25;
                    let a = laguerre(n, k, x);
                    let b = laguerre_by_sum(n, k, q);
                    assert!((a - b).abs() <= 1e-10, "n={n} k={k} x={x}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn sequence_matches_single_evaluations() {
        let seq = laguerre_sequence(30, 3, 2.7);
        for (n, v) in seq.iter().enumerate() {
            assert_eq!(*v, laguerre(n, 3, 2.7));
        }
    }

    #[test]
    fn smallest_zeros_for_small_targets() {
        let c1 = first_zero(1).unwrap();
        assert!((c1.x_star - 2.0).abs() < 1e-14);
        assert!((c1.eta - 2f64.sqrt()).abs() < 1e-12);
        let c2 = first_zero(2).unwrap();
        assert!((c2.x_star - (3.0 - 3f64.sqrt())).abs() < 1e-14);
        assert!((c2.eta - 1.126_03).abs() < 1e-5);
        assert!(c1.eta >= 1.0 && c2.eta >= 1.0);
    }

    #[test]
    fn residual_and_interlacing() {
        let mut prev = f64::INFINITY;
        for m in 1..=40 {
            let c = first_zero(m).unwrap();
            assert!(laguerre(m, 1, c.x_star).abs() <= 1e-12, "M={m}");
            assert!(c.x_star < prev, "M={m}");
            prev = c.x_star;
        }
    }

    #[test]
    fn spacing_decreases() {
        let s1 = eta_spacing(1).unwrap();
        assert!((s1 - (2f64.sqrt() - (3.0 - 3f64.sqrt()).sqrt())).abs() < 1e-12);
        assert!((s1 - 0.288_18).abs() < 1e-5);
        for m in 1..20 {
            assert!(eta_spacing(m).unwrap() > eta_spacing(m + 1).unwrap(), "M={m}");
        }
    }

    #[test]
    fn detuning() {
        assert_eq!(sideband_detuning(0, 1.0), -1.0);
        assert!((sideband_detuning(1, 2f64.sqrt()) + 1.0).abs() < 1e-15);
        assert!((sideband_detuning(1, 1e-9) - 1.0).abs() < 1e-15);
        assert!((first_zero(1).unwrap().detuning + 1.0).abs() < 1e-12);
    }

    #[test]
    fn later_zeros_and_errors() {
        let second = calibrate_with_zero(2, 1, 1).unwrap();
        assert!((second.x_star - (3.0 + 3f64.sqrt())).abs() < 1e-12);
        assert_eq!(first_zero(0), Err(CalibrationError::InvalidTarget(0)));
        assert_eq!(first_zero(101), Err(CalibrationError::InvalidTarget(101)));
        assert!(matches!(laguerre_zero(3, 3), Err(CalibrationError::NoSuchZero { .. })));
        for m in 41..=60 {
            let c = first_zero(m).unwrap();
            assert!(laguerre(m, 1, c.x_star).abs() <= 1e-11);
        }
    }
}
