//! Adaptive Simpson quadrature with Richardson correction.

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` (either orientation). `tol` is absolute for
/// integrals of magnitude below one and relative above.
pub fn adaptive_simpson<F, E>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a)?;
    let fb = f(b)?;
    let m = 0.5 * (a + b);
    let fm = f(m)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // A coarse pre-split avoids accepting a lucky first estimate on
    // oscillating or peaked integrands.
    let n = 8;
    let h = (b - a) / n as f64;
    let eps = tol * whole.abs().max(1.0) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let lo = a + h * i as f64;
        let hi = if i + 1 == n { b } else { lo + h };
        let flo = f(lo)?;
        let fhi = f(hi)?;
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid)?;
        let s = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        total += recurse(&mut f, lo, hi, flo, fmid, fhi, s, eps, MAX_DEPTH)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F, E>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return Ok(left + right + delta / 15.0);
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn q(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        adaptive_simpson(|x| Ok::<_, Infallible>(f(x)), a, b, 1e-12).unwrap()
    }

    #[test]
    fn polynomials_are_exact() {
        assert!((q(|x| x * x * x, 0.0, 2.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_and_reversed_limits() {
        assert!((q(f64::exp, 0.0, 1.0) - (1f64.exp() - 1.0)).abs() < 1e-12);
        assert!((q(f64::exp, 1.0, 0.0) + (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand() {
        let v = q(|x| 1.0 / (1e-3 + x * x), -1.0, 1.0);
        let exact = 2.0 * (1.0 / 1e-3f64.sqrt()) * (1.0 / 1e-3f64.sqrt()).atan();
        assert!((v - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn errors_propagate() {
        let r: Result<f64, &str> =
            adaptive_simpson(|x| if x > 0.5 { Err("boom") } else { Ok(x) }, 0.0, 1.0, 1e-10);
        assert_eq!(r, Err("boom"));
    }
}
