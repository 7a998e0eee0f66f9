//! Adaptive one-dimensional quadrature.

use crate::error::Result;

const MAX_DEPTH: u32 = 48;

/// Adaptive trapezoid rule on `[a, b]` with one Richardson step per accepted
/// panel; `tol` is the absolute error target for the whole interval.
pub(crate) fn adaptive_trapezoid(mut f: impl FnMut(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    trap_rec(&mut f, a, b, fa, fb, tol, 0)
}

fn trap_rec(f: &mut impl FnMut(f64) -> Result<f64>, a: f64, b: f64, fa: f64, fb: f64, tol: f64, depth: u32) -> Result<f64> {
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let coarse = 0.5 * (b - a) * (fa + fb);
    let fine = 0.25 * (b - a) * (fa + 2.0 * fm + fb);
    if (fine - coarse).abs() <= 3.0 * tol || depth >= MAX_DEPTH {
        return Ok(fine + (fine - coarse) / 3.0);
    }
    Ok(trap_rec(f, a, m, fa, fm, 0.5 * tol, depth + 1)? + trap_rec(f, m, b, fm, fb, 0.5 * tol, depth + 1)?)
}

/// Adaptive Simpson rule on `[a, b]`.
pub(crate) fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 0)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol || depth >= MAX_DEPTH {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
}

/// Composite trapezoid rule on sampled values.
pub(crate) fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_known_functions() {
        let t = adaptive_trapezoid(|x| Ok(x.sin()), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((t - 2.0).abs() < 1e-10);
        let s = adaptive_simpson(&|x: f64| x.abs().cbrt(), -1.0, 2.0, 1e-13);
        let exact = 0.75 + 0.75 * 2f64.powf(4.0 / 3.0);
        assert!((s - exact).abs() < 1e-10);
        assert_eq!(trapezoid(&[0.0, 1.0, 3.0], &[1.0, 1.0, 1.0]), 3.0);
    }
}
