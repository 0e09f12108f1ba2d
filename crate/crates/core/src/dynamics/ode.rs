//! Adaptive Dormand–Prince 5(4) integrator for complex linear and nonlinear
//! ODE systems `dy/dt = f(t, y)`.

use num_complex::Complex64;

use super::DynamicsError;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

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

// difference between the fifth- and fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Tolerances and limits of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Hard cap on attempted steps across the whole integration.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 50_000_000 }
    }
}

/// Step counters of a finished integration.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Largest component of the error relative to its tolerance (max norm,
/// stricter than the usual root-mean-square).
fn error_norm(err: &[Complex64], y: &[Complex64], y_new: &[Complex64], opts: &OdeOptions) -> f64 {
    err.iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| e.norm() / (opts.atol + opts.rtol * a.norm().max(b.norm())))
        .fold(0.0, f64::max)
}

fn scaled_norm(v: &[Complex64], y: &[Complex64], opts: &OdeOptions) -> f64 {
    let sum: f64 = v
        .iter()
        .zip(y)
        .map(|(a, b)| (a.norm() / (opts.atol + opts.rtol * b.norm())).powi(2))
        .sum();
    (sum / v.len().max(1) as f64).sqrt()
}

/// Integrates from `t0` through every time in `t_out` (sorted, each `>= t0`),
/// calling `observe(k, t_out[k], y)` exactly at each output time. Steps are
/// shortened to land on output times, so no interpolation is involved.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[Complex64],
    t_out: &[f64],
    opts: &OdeOptions,
    mut observe: O,
) -> Result<OdeStats, DynamicsError>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(usize, f64, &[Complex64]) -> Result<(), DynamicsError>,
{
    if t_out.windows(2).any(|w| w[1] < w[0]) || t_out.first().is_some_and(|&t| t < t0) {
        return Err(DynamicsError::InvalidTimes("output times must be sorted and start at or after t0".into()));
    }
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = vec![ZERO; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]);
    let mut stage = vec![ZERO; n];
    let mut y_new = vec![ZERO; n];
    let mut err = vec![ZERO; n];

    f(t, &y, &mut k1);
    stats.evaluations += 1;
    let mut h = initial_step(&mut f, t, &y, &k1, opts, &mut stats);

    for (k, &target) in t_out.iter().enumerate() {
        while t < target {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(DynamicsError::StepLimit { t, steps: opts.max_steps });
            }
            let remaining = target - t;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            if step < 1e-13 * t.abs().max(1.0) && !last {
                return Err(DynamicsError::StepSizeCollapse { t, h: step });
            }

            let combine = |out: &mut [Complex64], terms: &[(f64, &[Complex64])]| {
                for i in 0..n {
                    let mut acc = y[i];
                    for &(c, kv) in terms {
                        acc += kv[i] * (c * step);
                    }
                    out[i] = acc;
                }
            };
            combine(&mut stage, &[(A21, &k1)]);
            f(t + C2 * step, &stage, &mut k2);
            combine(&mut stage, &[(A31, &k1), (A32, &k2)]);
            f(t + C3 * step, &stage, &mut k3);
            combine(&mut stage, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
            f(t + C4 * step, &stage, &mut k4);
            combine(&mut stage, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
            f(t + C5 * step, &stage, &mut k5);
            combine(&mut stage, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            f(t + step, &stage, &mut k6);
            combine(&mut y_new, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            f(t + step, &y_new, &mut k7);
            stats.evaluations += 6;

            for i in 0..n {
                err[i] = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * step;
            }
            let e = error_norm(&err, &y, &y_new, opts);
            if !e.is_finite() {
                stats.rejected += 1;
                h = step * MIN_FACTOR;
                continue;
            }
            let factor = if e == 0.0 { MAX_FACTOR } else { (SAFETY * e.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR) };
            if e <= 1.0 {
                stats.accepted += 1;
                t = if last { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                std::mem::swap(&mut k1, &mut k7);
                // a step clipped to hit an output time says nothing about the natural step size
                if !last || step >= h {
                    h = step * factor;
                }
            } else {
                stats.rejected += 1;
                h = step * factor.min(1.0);
                if h < 1e-13 * t.abs().max(1.0) {
                    return Err(DynamicsError::StepSizeCollapse { t, h });
                }
            }
        }
        observe(k, target, &y)?;
    }
    Ok(stats)
}

fn initial_step<F>(f: &mut F, t: f64, y: &[Complex64], f0: &[Complex64], opts: &OdeOptions, stats: &mut OdeStats) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let d0 = scaled_norm(y, y, opts);
    let d1 = scaled_norm(f0, y, opts);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<Complex64> = y.iter().zip(f0).map(|(a, b)| a + b * h0).collect();
    let mut f1 = vec![ZERO; y.len()];
    f(t + h0, &y1, &mut f1);
    stats.evaluations += 1;
    let diff: Vec<Complex64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_norm(&diff, y, opts) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_and_rotation() {
        let lambda = Complex64::new(-0.5, 3.0);
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.7).collect();
        let mut seen = Vec::new();
        integrate(
            |_, y, dy| dy[0] = lambda * y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &times,
            &OdeOptions::default(),
            |_, t, y| {
                seen.push((t, y[0]));
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(seen.len(), times.len());
        for (t, v) in seen {
            let exact = (lambda * t).exp();
            assert!((v - exact).norm() < 1e-7, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn time_dependent_rhs() {
        // dy/dt = i cos(t) y  =>  y = exp(i sin t)
        let times = [0.0, 1.0, 5.0, 12.0];
        let mut last = ZERO;
        integrate(
            |t, y, dy| dy[0] = Complex64::new(0.0, t.cos()) * y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &times,
            &OdeOptions::default(),
            |_, _, y| {
                last = y[0];
                Ok(())
            },
        )
        .unwrap();
        assert!((last - Complex64::new(0.0, 12f64.sin()).exp()).norm() < 1e-7);
    }

    #[test]
    fn step_limit_is_reported() {
        let opts = OdeOptions { max_steps: 3, ..OdeOptions::default() };
        let r = integrate(
            |_, y, dy| dy[0] = Complex64::new(0.0, 50.0) * y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &[100.0],
            &opts,
            |_, _, _| Ok(()),
        );
        assert!(matches!(r, Err(DynamicsError::StepLimit { .. })));
    }
}
