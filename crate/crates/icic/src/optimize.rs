//! Resource allocators: pilot/data power split, training-length search,
//! analog feedback power allocation, digital feedback bit allocation, and
//! adaptive strategy-pair selection.
//!
//! Each allocator implements a closed-form rule derived from a large-power
//! approximation of the throughput; the test suite checks every rule
//! against a brute-force scan of its objective, so the closed forms are
//! verified rather than trusted.

use crate::error::{Error, Result};
use crate::model::{FrameConfig, LinkQuality, Scenario};
use crate::rate::{self, StrategyPair};
use crate::special;

// --- pilot/data power split ------------------------------------------------

/// Optimal division of the downlink energy budget between pilot and data
/// symbols.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSplit {
    pub p_t_star: f64,
    pub p_d_star: f64,
}

/// Split the downlink budget `(T̄ − T̄_fb)·P_dl` between pilots and data to
/// minimise the residual-noise denominator `P_d^(−1) + (T̄_t·P_t)^(−1)`
/// that governs large-power throughput:
///
/// `P_d* = (T̄ − T̄_fb)·P_dl / (√T̄_d·(√T̄_d + 1))`,
/// `P_t* = (T̄ − T̄_fb)·P_dl / (T̄_t·(√T̄_d + 1))`.
///
/// The split depends only on the frame intervals, not on user locations.
///
/// # Errors
/// [`Error::Config`] if the data interval is shorter than one antenna-
/// normalised symbol.
pub fn optimize_training_power(frame: &FrameConfig, p_dl: f64) -> Result<TrainingSplit> {
    let t_bar_d = frame.t_bar_d();
    if t_bar_d < 1.0 {
        return Err(Error::Config(format!(
            "power split needs a data interval of at least N_t symbols, got T̄_d = {t_bar_d}"
        )));
    }
    if !(p_dl >= 0.0) || !p_dl.is_finite() {
        return Err(Error::Config(format!("P_dl must be non-negative, got {p_dl}")));
    }
    let budget = (frame.t_bar() - frame.t_bar_fb()) * p_dl;
    let root = t_bar_d.sqrt();
    Ok(TrainingSplit {
        p_t_star: budget / (frame.t_bar_t() * (root + 1.0)),
        p_d_star: budget / (root * (root + 1.0)),
    })
}

// --- training length -------------------------------------------------------

/// Received-power threshold above which the shortest admissible training
/// interval (`T̄_t = N_B`) is already throughput-optimal.
///
/// The threshold is `exp[g(√(1 − N_B/T̄))]` with
/// `g(x) = x/(x + 1/√T̄) + 2·ln(x + 1/√T̄) − ψ(N_t − 1)`.
///
/// # Errors
/// [`Error::Config`] when `T̄ ≤ N_B` (no admissible interval exists).
pub fn training_length_threshold(frame: &FrameConfig) -> Result<f64> {
    let t_bar = frame.t_bar();
    let n_b = frame.n_b as f64;
    if t_bar <= n_b {
        return Err(Error::Config(format!(
            "frame too short for any training interval: T̄ = {t_bar}, N_B = {n_b}"
        )));
    }
    if frame.n_t < 2 {
        return Err(Error::Config(
            "the training-length rule assumes cancellation, hence at least two antennas".into(),
        ));
    }
    let c = 1.0 / t_bar.sqrt();
    let x = (1.0 - n_b / t_bar).sqrt();
    let g = x / (x + c) + 2.0 * (x + c).ln() - special::digamma_int(frame.n_t - 1)?;
    Ok(g.exp())
}

/// Whether the received downlink power `P_dl·L_{i,i}` clears
/// [`training_length_threshold`], so that minimal training is optimal.
pub fn training_length_sufficient(p_dl_times_l: f64, frame: &FrameConfig) -> Result<bool> {
    Ok(p_dl_times_l > training_length_threshold(frame)?)
}

/// Throughput-optimal normalised training length `T̄_t*` in
/// `[N_B, T̄ − 1/N_t]` for `user`, found by bisecting the derivative of the
/// concave large-power objective
/// `(1 − T̄_t/T̄)·log₂[L_{i,i}·e^(ψ(N_t−1))·T̄·P_dl/(√(T̄−T̄_t)+1)²]`
/// (pilot/data powers already split optimally).  Short-circuits to `N_B`
/// whenever [`training_length_sufficient`] holds.
pub fn optimize_training_length(
    scenario: &Scenario,
    user: usize,
    search_tol: f64,
) -> Result<f64> {
    let frame = &scenario.frame;
    let t_bar = frame.t_bar();
    let n_b = frame.n_b as f64;
    let l_own = scenario.geometry.link_pathloss(user, user)?;
    let p_dl = scenario.power.p_dl;
    let received = p_dl * l_own;
    if !(received > 0.0) {
        // Nothing to optimise without power; any length is equally useless.
        return Ok(n_b);
    }
    if training_length_sufficient(received, frame)? {
        return Ok(n_b);
    }
    // Substituting x = √(1 − T̄_t/T̄) (larger x ⇔ shorter training) turns
    // the objective into f(x) = x²·(a − 2·ln(x + c))·log₂(e) with
    // a = ln(L·P_dl·e^ψ) and c = 1/√T̄.  f′(x) = 2x·g̃(x) where
    // g̃(x) = a − 2·ln(x + c) − x/(x + c) is strictly decreasing, so f is
    // unimodal and bisection on g̃ finds the maximiser.
    let a = received.ln() + special::digamma_int(frame.n_t - 1)?;
    let c = 1.0 / t_bar.sqrt();
    let x_max = (1.0 - n_b / t_bar).sqrt();
    let x_min = (1.0 / (frame.n_t as f64 * t_bar)).sqrt();
    let slope = |x: f64| a - 2.0 * (x + c).ln() - x / (x + c);
    let objective = |x: f64| x * x * (a - 2.0 * (x + c).ln());
    let x_star = if slope(x_max) >= 0.0 {
        x_max
    } else if slope(x_min) <= 0.0 {
        x_min
    } else {
        let (mut lo, mut hi) = (x_min, x_max);
        // Interval width in T̄_t units is at most 2·T̄·x_max·(hi − lo).
        while 2.0 * t_bar * x_max * (hi - lo) > search_tol.max(1e-12) {
            let mid = 0.5 * (lo + hi);
            if slope(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    // Defensive endpoint comparison; with a monotone derivative the interior
    // root already dominates, but the endpoints are free to check.
    let mut best = x_star;
    for cand in [x_min, x_max] {
        if objective(cand) > objective(best) {
            best = cand;
        }
    }
    Ok(t_bar * (1.0 - best * best))
}

// --- analog feedback power allocation --------------------------------------

/// Division of one user's uplink feedback energy between its own-channel
/// and cross-channel reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfbAllocation {
    /// Optimal own-channel feedback SNR `x* = (T_fb/N_B)·P_fb,ii·L_{i,i}`.
    pub x_star: f64,
    /// Power on the own-channel report.
    pub p_fb_own: f64,
    /// Power on the cross-channel report.
    pub p_fb_other: f64,
    // Problem data retained for audit.
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Objective of the feedback power split: post-feedback signal quality over
/// residual interference, as a function of the own-channel feedback SNR `x`.
fn afb_objective(x: f64, a: f64, b: f64, rho: f64) -> f64 {
    (x / (1.0 + x)) / (1.0 + b * (1.0 + a + rho - x) / ((1.0 + a) * (1.0 + rho - x)))
}

/// Split a user's feedback energy between its two channel reports.
///
/// Problem data: `a = T̄_t·P_t·L_{i,ī}` (cross-channel training SNR),
/// `b = P_d·L_{i,ī}` (cross-channel interference scale), and
/// `ρ = T_fb·P_ul·L_{i,i}` (total feedback SNR budget); the cross-channel
/// report then gets `ρ − x*`.  The stationary points solve the quadratic
///
/// `[(1+λ₁) − (λ₁+λ₂)λ₂]·x² − 2(λ₁+λ₂)(1+λ₁+λ₂)·x + λ₁(λ₁+λ₂)(1+λ₁+λ₂) = 0`
///
/// with `λ₁ = 1 + ρ` and `λ₂ = ab/(1 + a + b)`.  Every real root inside
/// `[0, ρ]` is tried against the objective alongside the edge `x = ρ`
/// (which is optimal when the interference path is negligible), so the rule
/// is robust to the leading coefficient changing sign.
///
/// `fb_budget` is the user's total feedback power `N_B·P_ul`, used to
/// convert the SNR split back into the power pair.
pub fn optimize_afb_power(a: f64, b: f64, rho: f64, fb_budget: f64) -> AfbAllocation {
    assert!(
        a > 0.0 && b >= 0.0 && rho > 0.0 && fb_budget >= 0.0,
        "allocation requires a > 0, b ≥ 0, ρ > 0, got a = {a}, b = {b}, ρ = {rho}"
    );
    let lambda1 = 1.0 + rho;
    let lambda2 = a * b / (1.0 + a + b);
    let ls = lambda1 + lambda2;
    let qa = (1.0 + lambda1) - ls * lambda2;
    let qb = -2.0 * ls * (1.0 + ls);
    let qc = lambda1 * ls * (1.0 + ls);

    let mut candidates = [rho, f64::NAN, f64::NAN];
    let mut n_cand = 1;
    if qa.abs() < 1e-300 * qb.abs().max(qc.abs()) {
        // Degenerate to a linear equation.
        if qb != 0.0 {
            candidates[n_cand] = -qc / qb;
            n_cand += 1;
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            // Citardauq pairing avoids cancellation against -qb.
            let q = -0.5 * (qb + qb.signum() * disc.sqrt());
            candidates[n_cand] = q / qa;
            candidates[n_cand + 1] = if q != 0.0 { qc / q } else { 0.0 };
            n_cand += 2;
        }
    }

    let mut x_star = rho;
    let mut best = afb_objective(rho, a, b, rho);
    for &x in &candidates[..n_cand] {
        if x.is_finite() && x > 0.0 && x <= rho {
            let val = afb_objective(x, a, b, rho);
            if val > best {
                best = val;
                x_star = x;
            }
        }
    }

    let p_fb_own = x_star / rho * fb_budget;
    AfbAllocation {
        x_star,
        p_fb_own,
        p_fb_other: fb_budget - p_fb_own,
        a,
        b,
        rho,
        lambda1,
        lambda2,
    }
}

// --- digital feedback bit allocation ---------------------------------------

/// Division of one user's feedback bit budget between its two channel
/// quantisations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfbAllocation {
    /// Bits on the own channel.
    pub b_own: u32,
    /// Bits on the cross channel.
    pub b_other: u32,
    /// Continuous relaxation optimum for the own-channel distortion
    /// `x = 2^(−B_own/(N_t−1))` before rounding.
    pub x_star_continuous: f64,
    // Problem data retained for audit.
    pub a0: f64,
    pub x0: f64,
}

/// Distortion-split objective: own-channel quantisation quality `(1 − x)`
/// over the cross-channel leakage `X₀/x` plus the noise-and-estimation
/// floor `a₀`.  Public so callers can audit an integer split against the
/// same function the solver models.
pub fn dfb_objective(x: f64, x0: f64, a0: f64) -> f64 {
    (1.0 - x) / (x0 / x + a0)
}

/// Split `b_total` feedback bits between a user's own and cross channel.
///
/// With total distortion budget `X₀ = 2^(−B/(N_t−1))` and floor
/// `a₀ = (1 + P_d·L_{i,ī}·σ²_{i,ī})/(P_d·L_{i,ī}·κ²_{i,ī})`, the continuous
/// optimum of the distortion split is
/// `x* = √(X₀/a₀ + X₀²/a₀²) − X₀/a₀`; the integer rule takes
/// `B_own = ⌊−(N_t−1)·log₂x*⌋` clamped to the budget and gives the rest to
/// the cross channel.  The floor rule is deliberate — its suboptimality
/// against exhaustive search is measured in tests, not hidden here.
pub fn optimize_dfb_bits(b_total: u32, n_t: u32, a0: f64) -> DfbAllocation {
    assert!(n_t >= 2, "bit allocation needs at least two antennas");
    assert!(a0 > 0.0 && a0.is_finite(), "noise floor must be positive, got {a0}");
    let dof = n_t as f64 - 1.0;
    let x0 = (-(b_total as f64) / dof).exp2();
    let ratio = x0 / a0;
    let x_star = (ratio + ratio * ratio).sqrt() - ratio;
    let b_own = if x_star > 0.0 {
        ((-dof * x_star.log2()).floor() as i64).clamp(0, b_total as i64) as u32
    } else {
        b_total
    };
    DfbAllocation {
        b_own,
        b_other: b_total - b_own,
        x_star_continuous: x_star,
        a0,
        x0,
    }
}

// --- adaptive strategy selection -------------------------------------------

/// Pick the strategy pair maximising the sum rate.
///
/// `rates[p][u]` is user `u`'s rate under [`StrategyPair::ALL`]`[p]`.  Ties
/// within `1e-9` keep the earliest pair in that order, which prefers fewer
/// nulling constraints and makes sweeps reproducible.
///
/// # Errors
/// [`Error::Domain`] if any rate is non-finite.
pub fn select_strategy_pair(rates: &[[f64; 2]; 4]) -> Result<StrategyPair> {
    let mut best = f64::NEG_INFINITY;
    let mut winner = StrategyPair::ALL[0];
    for (pair, user_rates) in StrategyPair::ALL.iter().zip(rates) {
        let sum = user_rates[0] + user_rates[1];
        if !sum.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite sum rate {sum} for pair {}",
                pair.label()
            )));
        }
        if sum > best + 1e-9 {
            best = sum;
            winner = *pair;
        }
    }
    Ok(winner)
}

/// Evaluate all four strategy pairs through the scenario's closed forms and
/// select the sum-rate maximiser; also returns the per-pair, per-user rates.
pub fn adaptive_pair(
    scenario: &Scenario,
    quality: &LinkQuality,
) -> Result<(StrategyPair, [[f64; 2]; 4])> {
    let mut rates = [[0.0; 2]; 4];
    for (p, pair) in StrategyPair::ALL.iter().enumerate() {
        for user in 0..2 {
            rates[p][user] = rate::throughput(scenario, quality, *pair, user)?.value;
        }
    }
    Ok((select_strategy_pair(&rates)?, rates))
}
