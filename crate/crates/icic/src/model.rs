//! System model: geometry, pathloss, frame and power budgets, and the CSI
//! quality coefficients produced by training and feedback.
//!
//! Conventions used throughout the crate:
//!
//! * two base stations at `(−R, 0)` and `(+R, 0)`; the shared cell edge is
//!   the perpendicular bisector through the origin,
//! * user `i ∈ {0, 1}` is served by BS `i`; link `(i, j)` is the channel
//!   from BS `j` to user `i`, so `(i, i)` is a serving link and `(i, 1−i)`
//!   an interfering one,
//! * positions are stored in units of the cell radius `R`; pathloss uses
//!   `R` itself as the reference distance, so a user at distance `R` from a
//!   BS sees unit gain and the edge SNR in dB is `10·log₁₀(P_d)`,
//! * frame quantities are also used in their per-antenna normalised forms
//!   `T̄ = T/N_t` etc., matching the resource accounting of the power
//!   budget.

use crate::error::{Error, Result};
use crate::special;

/// Position on the plane, in units of the cell radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Two-cell layout: fixed base stations, two users, pathloss parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    /// Base stations, fixed at (−1, 0) and (+1, 0) in units of R.
    pub bs_positions: [Point; 2],
    /// User positions in units of R.
    pub user_positions: [Point; 2],
    /// Cell radius in km (also the pathloss reference distance).
    pub cell_radius_km: f64,
    /// Pathloss exponent.
    pub pathloss_exponent: f64,
    /// Antenna/propagation constant multiplying the pathloss.
    pub antenna_constant: f64,
}

impl Geometry {
    /// Layout with both users on the line connecting the base stations, at
    /// `x₁·R` and `x₂·R` from the origin.
    pub fn on_axis(
        x1_over_r: f64,
        x2_over_r: f64,
        cell_radius_km: f64,
        pathloss_exponent: f64,
        antenna_constant: f64,
    ) -> Result<Self> {
        Geometry::new(
            [Point::new(x1_over_r, 0.0), Point::new(x2_over_r, 0.0)],
            cell_radius_km,
            pathloss_exponent,
            antenna_constant,
        )
    }

    pub fn new(
        user_positions: [Point; 2],
        cell_radius_km: f64,
        pathloss_exponent: f64,
        antenna_constant: f64,
    ) -> Result<Self> {
        if !(cell_radius_km > 0.0) {
            return Err(Error::Config(format!(
                "cell radius must be positive, got {cell_radius_km}"
            )));
        }
        if !(pathloss_exponent > 0.0) {
            return Err(Error::Config(format!(
                "pathloss exponent must be positive, got {pathloss_exponent}"
            )));
        }
        if !(antenna_constant > 0.0) {
            return Err(Error::Config(format!(
                "antenna constant must be positive, got {antenna_constant}"
            )));
        }
        let geo = Geometry {
            bs_positions: [Point::new(-1.0, 0.0), Point::new(1.0, 0.0)],
            user_positions,
            cell_radius_km,
            pathloss_exponent,
            antenna_constant,
        };
        for (i, user) in geo.user_positions.iter().enumerate() {
            let d = [user.distance(&geo.bs_positions[0]), user.distance(&geo.bs_positions[1])];
            if d[0] <= 0.0 || d[1] <= 0.0 {
                return Err(Error::Config(format!(
                    "user {i} is co-located with a base station"
                )));
            }
            // Inside the network area: within one cell radius of the nearer
            // BS (users exactly on the shared edge are allowed).
            if d[0].min(d[1]) > 1.0 + 1e-12 {
                return Err(Error::Config(format!(
                    "user {i} at ({}, {}) lies outside both cells",
                    user.x, user.y
                )));
            }
        }
        Ok(geo)
    }

    /// Distance in km from user `i` to BS `j`.
    pub fn distance_km(&self, user: usize, bs: usize) -> f64 {
        self.user_positions[user].distance(&self.bs_positions[bs]) * self.cell_radius_km
    }

    /// Pathloss of the link from BS `j` to user `i`.
    pub fn link_pathloss(&self, user: usize, bs: usize) -> Result<f64> {
        pathloss(self.distance_km(user, bs), self)
    }
}

/// Pathloss `η·(D₀/d)^α` with reference distance `D₀ = R`.
///
/// # Errors
/// [`Error::Domain`] for `d ≤ 0`.
pub fn pathloss(d_km: f64, geometry: &Geometry) -> Result<f64> {
    if d_km <= 0.0 {
        return Err(Error::Domain(format!("pathloss requires d > 0, got {d_km}")));
    }
    Ok(geometry.antenna_constant
        * (geometry.cell_radius_km / d_km).powf(geometry.pathloss_exponent))
}

/// Frame partition and antenna counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    /// Block length in symbols.
    pub t: u32,
    /// Training symbols.
    pub t_t: u32,
    /// Feedback symbols (0 disables the feedback phase).
    pub t_fb: u32,
    /// Transmit antennas per BS.
    pub n_t: u32,
    /// Number of coordinating base stations.
    pub n_b: u32,
}

impl FrameConfig {
    pub fn new(t: u32, t_t: u32, t_fb: u32, n_t: u32, n_b: u32) -> Result<Self> {
        if n_t < 1 || n_b < 1 {
            return Err(Error::Config(format!(
                "antenna and BS counts must be positive (N_t = {n_t}, N_B = {n_b})"
            )));
        }
        if t_t < n_b * n_t {
            return Err(Error::Config(format!(
                "training interval T_t = {t_t} shorter than the orthogonal minimum N_B·N_t = {}",
                n_b * n_t
            )));
        }
        if t_fb != 0 && t_fb < n_b * n_b * n_t {
            return Err(Error::Config(format!(
                "feedback interval T_fb = {t_fb} shorter than the orthogonal minimum N_B²·N_t = {}",
                n_b * n_b * n_t
            )));
        }
        if t_t + t_fb >= t {
            return Err(Error::Config(format!(
                "training + feedback ({}) must leave room for data in T = {t}",
                t_t + t_fb
            )));
        }
        Ok(FrameConfig { t, t_t, t_fb, n_t, n_b })
    }

    /// `T̄ = T/N_t`.
    pub fn t_bar(&self) -> f64 {
        self.t as f64 / self.n_t as f64
    }

    /// `T̄_t = T_t/N_t`.
    pub fn t_bar_t(&self) -> f64 {
        self.t_t as f64 / self.n_t as f64
    }

    /// `T̄_fb = T_fb/N_t`.
    pub fn t_bar_fb(&self) -> f64 {
        self.t_fb as f64 / self.n_t as f64
    }

    /// `T̄_d = T̄ − T̄_t − T̄_fb`.
    pub fn t_bar_d(&self) -> f64 {
        self.t_bar() - self.t_bar_t() - self.t_bar_fb()
    }
}

/// Per-symbol power levels and budgets (all linear scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    /// Downlink average power budget over the non-feedback phases.
    pub p_dl: f64,
    /// Uplink per-user average power budget.
    pub p_ul: f64,
    /// Pilot symbol power.
    pub p_t: f64,
    /// Data symbol power.
    pub p_d: f64,
    /// Analog feedback powers: `p_fb[i][j]` is the power user `i` spends on
    /// feeding back its channel from BS `j`.  `None` outside analog mode.
    pub p_fb: Option<[[f64; 2]; 2]>,
}

impl PowerConfig {
    /// Validates the downlink budget `T̄_t·P_t + T̄_d·P_d = (T̄−T̄_fb)·P_dl`
    /// and, when present, the per-user feedback budget
    /// `P_fb,i1 + P_fb,i2 = N_B·P_ul`.
    pub fn new(
        frame: &FrameConfig,
        p_dl: f64,
        p_ul: f64,
        p_t: f64,
        p_d: f64,
        p_fb: Option<[[f64; 2]; 2]>,
    ) -> Result<Self> {
        for (name, v) in [("P_dl", p_dl), ("P_ul", p_ul), ("P_t", p_t), ("P_d", p_d)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        let budget = (frame.t_bar() - frame.t_bar_fb()) * p_dl;
        let spent = frame.t_bar_t() * p_t + frame.t_bar_d() * p_d;
        if (spent - budget).abs() > 1e-9 * budget.abs().max(1e-300) {
            return Err(Error::Config(format!(
                "downlink power budget violated: T̄_t·P_t + T̄_d·P_d = {spent} but (T̄−T̄_fb)·P_dl = {budget}"
            )));
        }
        if let Some(fb) = p_fb {
            for (i, pair) in fb.iter().enumerate() {
                if pair[0] < 0.0 || pair[1] < 0.0 {
                    return Err(Error::Config(format!(
                        "feedback powers must be non-negative, got {pair:?} for user {i}"
                    )));
                }
                let fb_budget = frame.n_b as f64 * p_ul;
                let fb_spent = pair[0] + pair[1];
                if (fb_spent - fb_budget).abs() > 1e-9 * fb_budget.max(1e-300) {
                    return Err(Error::Config(format!(
                        "feedback power budget violated for user {i}: {fb_spent} vs N_B·P_ul = {fb_budget}"
                    )));
                }
            }
        }
        Ok(PowerConfig { p_dl, p_ul, p_t, p_d, p_fb })
    }

    /// The unoptimised baseline: pilots and data both at the average budget,
    /// which satisfies the budget identity termwise.
    pub fn equal_power(frame: &FrameConfig, p_dl: f64, p_ul: f64) -> Result<Self> {
        PowerConfig::new(frame, p_dl, p_ul, p_dl, p_dl, None)
    }

    /// Attach an equal-split analog feedback allocation (`P_fb,ij = P_ul`).
    pub fn with_equal_feedback(mut self, frame: &FrameConfig) -> Result<Self> {
        let share = frame.n_b as f64 * self.p_ul / 2.0;
        self.p_fb = Some([[share, share], [share, share]]);
        Ok(self)
    }
}

/// Per-link CSI quality coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCsi {
    /// Pathloss of the link.
    pub l: f64,
    /// Training estimate accuracy `κ²` (fraction of channel power captured).
    pub kappa2: f64,
    /// Training estimation error variance `σ² = 1 − κ²` per component.
    pub sigma2: f64,
    /// Accuracy of the estimate available at the BS after analog feedback.
    pub kappa2_hat: f64,
    /// Error variance after analog feedback.
    pub sigma2_hat: f64,
    /// Mean squared inner product between the channel direction and its
    /// quantized representative (1 when no quantization is involved).
    pub xi: f64,
    /// Quantization bits spent on this link.
    pub bits: u32,
}

/// CSI quality for all four links; `links[i][j]` is BS `j` → user `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkQuality {
    pub links: [[LinkCsi; 2]; 2],
}

impl LinkQuality {
    pub fn link(&self, user: usize, bs: usize) -> &LinkCsi {
        &self.links[user][bs]
    }
}

/// Training-based MMSE estimation quality: `σ² = 1/(1 + T̄_t·P_t·L)`,
/// `κ² = 1 − σ²`.
pub fn training_quality(t_bar_t: f64, p_t: f64, l: f64) -> (f64, f64) {
    debug_assert!(t_bar_t >= 0.0 && p_t >= 0.0 && l >= 0.0);
    let sigma2 = 1.0 / (1.0 + t_bar_t * p_t * l);
    (1.0 - sigma2, sigma2)
}

/// CSI accuracy after downlink training plus analog uplink feedback:
/// `κ̂² = [T̄_t P_t L_train · (T_fb/N_B) P_fb L_up] /
///        [(1 + T̄_t P_t L_train)(1 + (T_fb/N_B) P_fb L_up)]`.
pub fn analog_fb_quality(
    t_bar_t: f64,
    p_t: f64,
    l_train: f64,
    t_fb: u32,
    n_b: u32,
    p_fb: f64,
    l_uplink: f64,
) -> (f64, f64) {
    debug_assert!(t_bar_t >= 0.0 && p_t >= 0.0 && l_train >= 0.0 && p_fb >= 0.0 && l_uplink >= 0.0);
    let train_snr = t_bar_t * p_t * l_train;
    let fb_snr = t_fb as f64 / n_b as f64 * p_fb * l_uplink;
    let kappa2_hat = (train_snr / (1.0 + train_snr)) * (fb_snr / (1.0 + fb_snr));
    (kappa2_hat, 1.0 - kappa2_hat)
}

/// Mean squared cosine between a random channel direction and its random
/// vector quantization under a `B`-bit codebook of isotropic codewords.
///
/// Exact form: `ξ = 1 − 2^B·B(2^B, N_t/(N_t−1))`; bound form:
/// `1 − 2^(−B/(N_t−1))`.  The exact value always dominates the bound.
pub fn rvq_mean_cos2(b: u32, n_t: u32, exact: bool) -> f64 {
    assert!(n_t >= 2, "quantization needs at least two antennas");
    let exponent = n_t as f64 / (n_t as f64 - 1.0);
    if !exact {
        return 1.0 - (-(b as f64) / (n_t as f64 - 1.0)).exp2();
    }
    if b >= 1000 {
        // 2^B·B(2^B, y) < 2^(−B/(N_t−1)) is far below machine epsilon here.
        return 1.0;
    }
    let z = (b as f64).exp2();
    let ln_product = b as f64 * std::f64::consts::LN_2 + special::ln_beta(z, exponent);
    1.0 - ln_product.exp()
}

/// CSI acquisition mode of the coordinated system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsiMode {
    /// Genie-provided exact channels at both base stations.
    Perfect,
    /// Downlink training only; base stations use their local estimates.
    Training,
    /// Training followed by analog (unquantized) uplink feedback.
    AnalogFb,
    /// Training followed by digital (random vector quantized) feedback.
    DigitalFb,
}

impl CsiMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Training => "training",
            CsiMode::AnalogFb => "afb",
            CsiMode::DigitalFb => "dfb",
        }
    }
}

impl std::str::FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(CsiMode::Perfect),
            "training" => Ok(CsiMode::Training),
            "afb" => Ok(CsiMode::AnalogFb),
            "dfb" => Ok(CsiMode::DigitalFb),
            other => Err(Error::Config(format!(
                "unknown CSI mode '{other}' (expected perfect|training|afb|dfb)"
            ))),
        }
    }
}

/// Digital feedback configuration: per-user, per-link bit allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DigitalFeedback {
    /// `bits[i][j]`: bits user `i` spends quantizing its channel from BS `j`.
    pub bits: [[u32; 2]; 2],
    /// Symbols per feedback bit.
    pub mu: u32,
    /// Whether the per-user total is tied to the feedback interval
    /// (`μ·B_i = T_fb`); disabled when bits are derived from uplink capacity.
    pub fixed_budget: bool,
}

/// Complete description of one simulated/analysed operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: Geometry,
    pub frame: FrameConfig,
    pub power: PowerConfig,
    pub csi_mode: CsiMode,
    pub digital: Option<DigitalFeedback>,
}

impl Scenario {
    pub fn new(
        geometry: Geometry,
        frame: FrameConfig,
        power: PowerConfig,
        csi_mode: CsiMode,
        digital: Option<DigitalFeedback>,
    ) -> Result<Self> {
        match csi_mode {
            CsiMode::AnalogFb => {
                if frame.t_fb == 0 {
                    return Err(Error::Config(
                        "analog feedback mode requires a non-zero feedback interval".into(),
                    ));
                }
                if power.p_fb.is_none() {
                    return Err(Error::Config(
                        "analog feedback mode requires feedback powers".into(),
                    ));
                }
            }
            CsiMode::DigitalFb => {
                if frame.t_fb == 0 {
                    return Err(Error::Config(
                        "digital feedback mode requires a non-zero feedback interval".into(),
                    ));
                }
                let Some(dfb) = digital.as_ref() else {
                    return Err(Error::Config(
                        "digital feedback mode requires a bit allocation".into(),
                    ));
                };
                if dfb.fixed_budget {
                    for (i, pair) in dfb.bits.iter().enumerate() {
                        let total = pair[0] + pair[1];
                        if dfb.mu * total != frame.t_fb {
                            return Err(Error::Config(format!(
                                "user {i}: μ·B_i = {}·{total} does not equal T_fb = {}",
                                dfb.mu, frame.t_fb
                            )));
                        }
                    }
                }
            }
            CsiMode::Perfect | CsiMode::Training => {}
        }
        Ok(Scenario { geometry, frame, power, csi_mode, digital })
    }

    /// Fraction of the block left for data: `1 − (T̄_t + T̄_fb)/T̄`.
    pub fn overhead_multiplier(&self) -> f64 {
        1.0 - (self.frame.t_bar_t() + self.frame.t_bar_fb()) / self.frame.t_bar()
    }

    /// Compute the CSI quality table for all four links under this
    /// scenario's mode, powers, and bit allocation.
    pub fn link_quality(&self) -> Result<LinkQuality> {
        let mut links = [[LinkCsi {
            l: 0.0,
            kappa2: 1.0,
            sigma2: 0.0,
            kappa2_hat: 1.0,
            sigma2_hat: 0.0,
            xi: 1.0,
            bits: 0,
        }; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let l = self.geometry.link_pathloss(i, j)?;
                let mut csi = links[i][j];
                csi.l = l;
                match self.csi_mode {
                    CsiMode::Perfect => {}
                    CsiMode::Training | CsiMode::AnalogFb | CsiMode::DigitalFb => {
                        let (k2, s2) =
                            training_quality(self.frame.t_bar_t(), self.power.p_t, l);
                        csi.kappa2 = k2;
                        csi.sigma2 = s2;
                        csi.kappa2_hat = k2;
                        csi.sigma2_hat = s2;
                    }
                }
                if self.csi_mode == CsiMode::AnalogFb {
                    let p_fb = self.power.p_fb.expect("validated at construction")[i][j];
                    let l_uplink = self.geometry.link_pathloss(i, i)?;
                    let (k2h, s2h) = analog_fb_quality(
                        self.frame.t_bar_t(),
                        self.power.p_t,
                        l,
                        self.frame.t_fb,
                        self.frame.n_b,
                        p_fb,
                        l_uplink,
                    );
                    csi.kappa2_hat = k2h;
                    csi.sigma2_hat = s2h;
                }
                if self.csi_mode == CsiMode::DigitalFb {
                    let dfb = self.digital.as_ref().expect("validated at construction");
                    csi.bits = dfb.bits[i][j];
                    csi.xi = rvq_mean_cos2(csi.bits, self.frame.n_t, true);
                }
                links[i][j] = csi;
            }
        }
        Ok(LinkQuality { links })
    }
}
