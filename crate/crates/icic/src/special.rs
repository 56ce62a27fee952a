//! Special functions and sampling primitives for the ergodic-rate kernels.
//!
//! Everything here feeds the closed-form throughput expressions:
//!
//! * `E₁` — the exponential integral, evaluated by a power series below one
//!   and a modified-Lentz continued fraction above one,
//! * `Γ(−k, x)` — the upper incomplete gamma function at non-positive
//!   integer order, by downward recurrence from `Γ(0,x) = E₁(x)` with a
//!   log-substitution integral fallback where the recurrence loses digits,
//! * `ψ(n)` — the digamma function at integer argument,
//! * `ln Γ` / `B(x,y)` — Lanczos log-gamma and the Beta function, stable up
//!   to arguments of size `2^B` for large bit budgets,
//! * `I₁(a,b,m,n) = ∫₀^∞ xᵐ e^(−ax) / ((x+b)ⁿ (x+1)) dx` — evaluated by
//!   adaptive Gauss–Kronrod quadrature on a truncated interval whose tail
//!   bound is driven below the requested tolerance,
//! * unit-scale Gamma sampling for Monte-Carlo oracles.
//!
//! Scaled variants `e^x E₁(x)` and `e^x Γ(−k,x)` are provided for internal
//! use: rate kernels need the product `e^(1/α) Γ(−k, 1/α)` at values of `α`
//! where the two factors individually overflow and underflow.

use crate::error::{Error, Result};
use crate::quad::{self, QuadratureSpec};
use rand::Rng;
use rand_distr::Distribution;

/// Euler–Mascheroni constant γ.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const SERIES_MAX_TERMS: usize = 120;
const LENTZ_MAX_ITER: usize = 400;
const LENTZ_EPS: f64 = 1e-15;
const LENTZ_TINY: f64 = 1e-300;

// --- exponential integral -------------------------------------------------

/// Power series for `E₁(x)`, accurate for `0 < x ≤ 1`:
/// `E₁(x) = −γ − ln x + Σ_{k≥1} (−1)^(k+1) x^k / (k·k!)`.
pub(crate) fn e1_series(x: f64) -> Result<f64> {
    let mut sum = -EULER_GAMMA - x.ln();
    let mut power_term = 1.0; // x^k / k!
    for k in 1..=SERIES_MAX_TERMS {
        power_term *= x / k as f64;
        let term = power_term / k as f64;
        sum += if k % 2 == 1 { term } else { -term };
        if term < f64::EPSILON * sum.abs().max(1e-30) {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence(format!(
        "E1 power series did not settle for x = {x}"
    )))
}

/// Continued fraction for the scaled exponential integral `e^x E₁(x)`,
/// accurate for `x ≥ 1` (modified Lentz iteration):
/// `e^x E₁(x) = 1/(x+1− 1²/(x+3− 2²/(x+5− …)))`.
pub(crate) fn e1_scaled_cf(x: f64) -> Result<f64> {
    let mut b = x + 1.0;
    let mut c = 1.0 / LENTZ_TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=LENTZ_MAX_ITER {
        let a = -((i * i) as f64);
        b += 2.0;
        d = a.mul_add(d, b);
        if d.abs() < LENTZ_TINY {
            d = LENTZ_TINY;
        }
        c = b + a / c;
        if c.abs() < LENTZ_TINY {
            c = LENTZ_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < LENTZ_EPS {
            return Ok(h);
        }
    }
    Err(Error::NonConvergence(format!(
        "E1 continued fraction did not settle for x = {x}"
    )))
}

/// Scaled exponential integral `e^x E₁(x)`.
pub(crate) fn e1_scaled(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::Domain(format!("E1 requires x > 0, got {x}")));
    }
    if x <= 1.0 {
        Ok(x.exp() * e1_series(x)?)
    } else {
        e1_scaled_cf(x)
    }
}

/// Exponential integral `E₁(x) = ∫ₓ^∞ e^(−t)/t dt` for `x > 0`.
///
/// Absolute error stays below 1e-12 across `[1e-6, 700]`; for arguments deep
/// in the underflow range the result degrades gracefully to zero.
///
/// # Errors
/// [`Error::Domain`] for `x ≤ 0`.
pub fn exponential_integral_e1(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::Domain(format!("E1 requires x > 0, got {x}")));
    }
    if x <= 1.0 {
        e1_series(x)
    } else {
        Ok(e1_scaled_cf(x)? * (-x).exp())
    }
}

// --- incomplete gamma at non-positive integer order -----------------------

/// Scaled value `e^x Γ(−k, x)` via the downward recurrence
/// `e^x Γ(−(j+1), x) = (x^(−(j+1)) − e^x Γ(−j, x)) / (j+1)`
/// seeded at `e^x Γ(0,x) = e^x E₁(x)`.
pub(crate) fn gamma_nonpos_scaled_recurrence(k: u32, x: f64) -> Result<f64> {
    let mut g = e1_scaled(x)?;
    for j in 0..k {
        let jp1 = (j + 1) as f64;
        g = (x.powi(-(j as i32 + 1)) - g) / jp1;
    }
    Ok(g)
}

/// Scaled value `e^x Γ(−k, x)` via the substitution `t = x e^u`, which turns
/// the defining integral into
/// `x^(−k) ∫₀^∞ e^(−ku) · e^(−x(e^u − 1)) du`
/// with a smooth, overflow-free integrand.  Valid for any `x > 0`, `k ≥ 1`;
/// used where the recurrence suffers cancellation.
pub(crate) fn gamma_nonpos_scaled_integral(k: u32, x: f64) -> Result<f64> {
    debug_assert!(k >= 1 && x > 0.0);
    let kf = k as f64;
    // Beyond u_max the integrand is below e^(−46) of its peak value 1.
    let u_max = (46.0 / kf).min((46.0 / x).ln_1p());
    let spec = QuadratureSpec { abs_tol: 1e-280, rel_tol: 1e-12, max_subdivisions: 400 };
    let j = quad::integrate(
        |u| (-kf * u - x * u.exp_m1()).exp(),
        0.0,
        u_max,
        &spec,
    )?;
    Ok(x.powi(-(k as i32)) * j)
}

/// Scaled value `e^x Γ(−k, x)`, choosing between recurrence and integral
/// representations.
///
/// The recurrence subtracts near-equal quantities; for small `x` with large
/// `k` (and as a safety net whenever it returns a non-positive value, which
/// the true function never is) the integral form is used instead.
pub(crate) fn gamma_nonpos_scaled(k: u32, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::Domain(format!(
            "upper incomplete gamma requires x > 0, got {x}"
        )));
    }
    if k == 0 {
        return e1_scaled(x);
    }
    if x < 0.05 && k >= 4 {
        return gamma_nonpos_scaled_integral(k, x);
    }
    // Each recurrence step subtracts two values whose relative difference is
    // about (j+1)/x, so the seed's rounding error is amplified by roughly
    // x^k/k! overall.  Past a factor of 1e6 (≈ e^13.8) the result would
    // carry fewer than ten good digits; use the integral form instead.
    if k as f64 * x.ln() - ln_gamma(k as f64 + 1.0) > 13.8 {
        return gamma_nonpos_scaled_integral(k, x);
    }
    let g = gamma_nonpos_scaled_recurrence(k, x)?;
    if g > 0.0 {
        Ok(g)
    } else {
        gamma_nonpos_scaled_integral(k, x)
    }
}

/// Upper incomplete gamma function `Γ(−k, x) = ∫ₓ^∞ t^(−k−1) e^(−t) dt` at
/// non-positive integer order `−k`, for `x > 0`.
///
/// # Errors
/// [`Error::Domain`] for `x ≤ 0`.
pub fn upper_incomplete_gamma_nonpos(k: u32, x: f64) -> Result<f64> {
    Ok(gamma_nonpos_scaled(k, x)? * (-x).exp())
}

// --- digamma at integer argument ------------------------------------------

/// Digamma function at a positive integer: `ψ(n) = −γ + Σ_{l=1}^{n−1} 1/l`.
///
/// # Errors
/// [`Error::Domain`] for `n < 1`.
pub fn digamma_int(n: u32) -> Result<f64> {
    if n < 1 {
        return Err(Error::Domain(format!("digamma requires n >= 1, got {n}")));
    }
    let mut sum = -EULER_GAMMA;
    for l in 1..n {
        sum += 1.0 / l as f64;
    }
    Ok(sum)
}

// --- log-gamma and the Beta function --------------------------------------

/// Lanczos approximation (g = 7, 9 coefficients) to `ln Γ(x)` for `x > 0`.
///
/// Accurate to close to machine precision over the positive axis; arguments
/// of astronomically large size are handled through the asymptotic behaviour
/// of the same expression.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx).
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut sum = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        sum += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + sum.ln()
}

/// Stable `ln Γ(z+y) − ln Γ(z)` for large `z` and small `y`.
///
/// The naive difference of two log-gamma values loses absolute accuracy once
/// `ln Γ(z)` itself is large; beyond `z = 1e6` a Stirling-based expansion of
/// the difference is used, with every potentially cancelling term expressed
/// through `ln_1p`.
pub(crate) fn ln_gamma_diff(z: f64, y: f64) -> f64 {
    debug_assert!(z > 0.0 && y >= 0.0);
    if z <= 1e6 {
        return ln_gamma(z + y) - ln_gamma(z);
    }
    let r = y / z;
    if r < 1e-17 {
        // (z+y−1/2)·ln1p(y/z) → y in this regime, cancelling the −y below.
        return y * z.ln();
    }
    y * z.ln() + (z + y - 0.5) * r.ln_1p() - y + (1.0 / (12.0 * (z + y)) - 1.0 / (12.0 * z))
}

/// `ln B(x,y)` for positive arguments, bit-for-bit symmetric (arguments are
/// sorted before use).
pub(crate) fn ln_beta(x: f64, y: f64) -> f64 {
    debug_assert!(x > 0.0 && y > 0.0);
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if hi <= 1e6 {
        ln_gamma(hi) + ln_gamma(lo) - ln_gamma(hi + lo)
    } else {
        ln_gamma(lo) - ln_gamma_diff(hi, lo)
    }
}

/// Beta function `B(x,y) = Γ(x)Γ(y)/Γ(x+y)`, evaluated in log space.
///
/// Symmetric in its arguments bit-for-bit and stable up to `x = 2^B` for bit
/// budgets of several hundred.
///
/// # Errors
/// [`Error::Domain`] on non-positive arguments.
pub fn beta_function(x: f64, y: f64) -> Result<f64> {
    if x <= 0.0 || y <= 0.0 {
        return Err(Error::Domain(format!(
            "beta function requires positive arguments, got ({x}, {y})"
        )));
    }
    Ok(ln_beta(x, y).exp())
}

// --- the I₁ integral -------------------------------------------------------

/// Natural log of `Γ(m+1, s)` for integer `m ≥ 0` and `s > 0`, via
/// `Γ(m+1, s) = m! e^(−s) Σ_{j=0}^m s^j/j!` with a log-sum-exp over terms.
fn ln_gamma_upper_int(m: u32, s: f64) -> f64 {
    let ln_s = s.ln();
    let mut terms = Vec::with_capacity(m as usize + 1);
    let mut max = f64::NEG_INFINITY;
    for j in 0..=m {
        let t = j as f64 * ln_s - ln_gamma(j as f64 + 1.0);
        if t > max {
            max = t;
        }
        terms.push(t);
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    ln_gamma(m as f64 + 2.0) - s + max + sum.ln()
}

/// Upper cutoff `X` such that `∫_X^∞ x^m e^(−ax)/((x+b)^n(x+1)) dx` is below
/// `tail_tol`, using the bound `Γ(m+1, aX)/(a^(m+1) (X+b)^n (X+1))`.
fn i1_cutoff(a: f64, b: f64, m: u32, n: u32, tail_tol: f64) -> f64 {
    let ln_tol = tail_tol.max(1e-280).ln();
    let mut x = (2.0 * (m as f64 + 1.0) / a).max(1.0);
    for _ in 0..600 {
        let ln_tail = ln_gamma_upper_int(m, a * x)
            - (m as f64 + 1.0) * a.ln()
            - n as f64 * (x + b).ln()
            - (x + 1.0).ln();
        if ln_tail <= ln_tol || x >= 1e280 {
            return x;
        }
        x *= 2.0;
    }
    x
}

/// The rate-kernel integral
/// `I₁(a, b, m, n) = ∫₀^∞ x^m e^(−ax) / ((x+b)^n (x+1)) dx`.
///
/// Evaluated by adaptive quadrature on `[0, X]` where `X` is chosen so the
/// analytic tail bound is below a tenth of the absolute tolerance.  When
/// `|b − 1| < 1e-9` the two poles are merged and the integrand becomes
/// `x^m e^(−ax)/(x+1)^(n+1)`.
///
/// # Errors
/// [`Error::Domain`] for non-positive `a` or `b`; [`Error::NonConvergence`]
/// if the subdivision budget is exhausted.
pub fn integral_i1(a: f64, b: f64, m: u32, n: u32, spec: &QuadratureSpec) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::Domain(format!(
            "integral_i1 requires a > 0 and b > 0, got a = {a}, b = {b}"
        )));
    }
    let merged = (b - 1.0).abs() < 1e-9;
    let b_eff = if merged { 1.0 } else { b };
    let cutoff = i1_cutoff(a, b_eff, m, n, spec.abs_tol * 0.1);
    let mi = m as i32;
    let ni = n as i32;
    let f = move |x: f64| {
        x.powi(mi) * (-a * x).exp() / ((x + b_eff).powi(ni) * (x + 1.0))
    };
    quad::integrate(f, 0.0, cutoff, spec)
}

/// Difference quotient `(I₁(a,b₁,m,n) − I₁(a,b₂,m,n)) / denom` evaluated as
/// a single quadrature of the differenced integrand.
///
/// Subtracting two separately computed integrals loses all significant
/// digits once `b₁ ≈ b₂`; here the inner difference
/// `(x+b₁)^(−n) − (x+b₂)^(−n)` is written through `exp_m1`/`ln_1p` so the
/// quotient stays fully accurate arbitrarily close to the degeneracy.
pub(crate) fn integral_i1_diff(
    a: f64,
    b1: f64,
    b2: f64,
    m: u32,
    n: u32,
    denom: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    debug_assert!(a > 0.0 && b1 > 0.0 && b2 > 0.0 && n >= 1 && denom != 0.0);
    let b_min = b1.min(b2);
    // |(x+b₁)^(−n) − (x+b₂)^(−n)| ≤ n·|b₁−b₂|·(x+b_min)^(−n−1).
    let factor = n as f64 * (b1 - b2).abs() / denom.abs();
    let cutoff = i1_cutoff(a, b_min, m, n + 1, spec.abs_tol * 0.1 / factor.max(1e-280));
    let mi = m as i32;
    let ni = n as i32;
    let f = move |x: f64| {
        let base = (x + b2).powi(-ni);
        let diff = base * (-(n as f64) * ((b1 - b2) / (x + b2)).ln_1p()).exp_m1();
        x.powi(mi) * (-a * x).exp() * diff / ((x + 1.0) * denom)
    };
    quad::integrate(f, 0.0, cutoff, spec)
}

// --- sampling --------------------------------------------------------------

/// One draw from the unit-scale Gamma distribution with integer shape.
///
/// Mean and variance both equal `shape`; shape 1 is the unit exponential.
/// This realises the squared norm of `shape` independent unit-variance
/// complex Gaussian entries.
///
/// # Panics
/// If `shape` is zero.
pub fn sample_gamma_unit<R: Rng + ?Sized>(shape: u32, rng: &mut R) -> f64 {
    assert!(shape >= 1, "gamma shape must be at least 1");
    rand_distr::Gamma::new(shape as f64, 1.0)
        .expect("valid gamma parameters")
        .sample(rng)
}
