//! Batch experiment drivers: configuration parsing, the four standard
//! studies (rate sweep, strategy map, optimizer comparison, placement
//! percentiles), and deterministic CSV emission.
//!
//! The configuration is a flat `key = value` text file (see
//! [`ExperimentConfig`] for the key list and defaults); every study takes a
//! parsed configuration and returns a [`CsvTable`] whose byte rendering is
//! identical across runs with the same configuration and seeds.  Rows are
//! emitted in sweep order (SNR ascending, then position, then a fixed
//! per-point row order), so diffs between runs are meaningful.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    CsiMode, DigitalFeedback, FrameConfig, Geometry, PowerConfig, Scenario, training_quality,
};
use crate::optimize;
use crate::rate::{self, Provenance, StrategyPair};
use crate::sim;
use crate::special;

// --- configuration ---------------------------------------------------------

/// How each user's total feedback bit budget is chosen in digital mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitPolicy {
    /// The feedback interval carries the budget: `B_i = T_fb / μ`.
    Fixed,
    /// Perfect feedback at the uplink rate: `B_i = ⌊T_fb·log₂(1 + P_ul·L_{i,i})⌋`.
    /// Closed forms only — the implied codebooks are far too large to sample.
    UplinkCapacity,
}

impl BitPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            BitPolicy::Fixed => "fixed",
            BitPolicy::UplinkCapacity => "uplink-capacity",
        }
    }
}

impl std::str::FromStr for BitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(BitPolicy::Fixed),
            "uplink-capacity" => Ok(BitPolicy::UplinkCapacity),
            other => Err(Error::Config(format!(
                "unknown bit policy '{other}' (expected fixed|uplink-capacity)"
            ))),
        }
    }
}

/// Everything a study needs: geometry, frame, mode, sweep lists, optimizer
/// toggles, and Monte Carlo bookkeeping.
///
/// Config file keys (one `key = value` per line, `#` comments allowed):
///
/// | key | default | meaning |
/// |-----|---------|---------|
/// | `x1_over_r` | `-0.1` | user 1 position on the BS axis, in units of R |
/// | `x2_over_r` | `0.1` | user 2 position |
/// | `x2_sweep` | empty | comma list of user-2 positions for the rate sweep |
/// | `cell_radius_km` | `1` | cell radius |
/// | `pathloss_exp` | `3` | pathloss exponent |
/// | `antenna_constant` | `1` | pathloss prefactor |
/// | `t` | `500` | block length in symbols |
/// | `t_t` | `8` | training interval |
/// | `t_fb` | `16` | feedback interval |
/// | `n_t` | `4` | BS antennas |
/// | `n_b` | `2` | coordinated base stations |
/// | `csi_mode` | `training` | `perfect`, `training`, `afb`, or `dfb` |
/// | `bit_policy` | `fixed` | `fixed` or `uplink-capacity` |
/// | `mu` | `1` | feedback symbols per bit |
/// | `bits_override` | empty | per-user total feedback bits, decoupled from `t_fb` |
/// | `edge_snr_db` | `10` | comma list of cell-edge SNRs in dB |
/// | `map_snr_db` | `4` | edge SNR used by the strategy map |
/// | `train_opt` | `true` | apply the pilot/data power split |
/// | `fb_opt` | `true` | apply feedback power (analog) or bit (digital) allocation |
/// | `mc` | `false` | add Monte Carlo rows to the rate sweep |
/// | `samples` | `1000` | Monte Carlo blocks per point |
/// | `seed` | `12345` | Monte Carlo master seed |
/// | `chunk_size` | `4096` | blocks per deterministic parallel chunk |
/// | `grid_step` | `0.05` | strategy-map grid spacing in units of R |
/// | `placements` | `500` | random placements in the percentile study |
/// | `placement_seed` | `1` | seed for the placement draw |
/// | `out` | empty | output path (empty = stdout) |
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub x1_over_r: f64,
    pub x2_over_r: f64,
    pub x2_sweep: Vec<f64>,
    pub cell_radius_km: f64,
    pub pathloss_exp: f64,
    pub antenna_constant: f64,
    pub t: u32,
    pub t_t: u32,
    pub t_fb: u32,
    pub n_t: u32,
    pub n_b: u32,
    pub csi_mode: CsiMode,
    pub bit_policy: BitPolicy,
    pub mu: u32,
    pub bits_override: Option<u32>,
    pub edge_snr_db: Vec<f64>,
    pub map_snr_db: f64,
    pub train_opt: bool,
    pub fb_opt: bool,
    pub mc: bool,
    pub samples: u64,
    pub seed: u64,
    pub chunk_size: u64,
    pub grid_step: f64,
    pub placements: u32,
    pub placement_seed: u64,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            x1_over_r: -0.1,
            x2_over_r: 0.1,
            x2_sweep: Vec::new(),
            cell_radius_km: 1.0,
            pathloss_exp: 3.0,
            antenna_constant: 1.0,
            t: 500,
            t_t: 8,
            t_fb: 16,
            n_t: 4,
            n_b: 2,
            csi_mode: CsiMode::Training,
            bit_policy: BitPolicy::Fixed,
            mu: 1,
            bits_override: None,
            edge_snr_db: vec![10.0],
            map_snr_db: 4.0,
            train_opt: true,
            fb_opt: true,
            mc: false,
            samples: 1000,
            seed: 12345,
            chunk_size: 4096,
            grid_step: 0.05,
            placements: 500,
            placement_seed: 1,
            out: None,
        }
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| {
        Error::Config(format!("line {line}: key '{key}': cannot parse '{value}'"))
    })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(Error::Config(format!(
            "line {line}: key '{key}': expected true or false, got '{other}'"
        ))),
    }
}

fn parse_f64_list(key: &str, value: &str, line: usize) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_scalar::<f64>(key, s, line))
        .collect()
}

fn join_f64_list(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parse a flat `key = value` configuration.  Unknown keys and malformed
    /// values are reported with their line number; the parsed result is
    /// validated (non-empty SNR list, positive sample count, and the
    /// configured operating point must build a valid [`Scenario`]).
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((key, value)) = trimmed.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {line}: expected 'key = value', got '{trimmed}'"
                )));
            };
            cfg.set(key.trim(), value.trim(), line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "x1_over_r" => self.x1_over_r = parse_scalar(key, value, line)?,
            "x2_over_r" => self.x2_over_r = parse_scalar(key, value, line)?,
            "x2_sweep" => self.x2_sweep = parse_f64_list(key, value, line)?,
            "cell_radius_km" => self.cell_radius_km = parse_scalar(key, value, line)?,
            "pathloss_exp" => self.pathloss_exp = parse_scalar(key, value, line)?,
            "antenna_constant" => self.antenna_constant = parse_scalar(key, value, line)?,
            "t" => self.t = parse_scalar(key, value, line)?,
            "t_t" => self.t_t = parse_scalar(key, value, line)?,
            "t_fb" => self.t_fb = parse_scalar(key, value, line)?,
            "n_t" => self.n_t = parse_scalar(key, value, line)?,
            "n_b" => self.n_b = parse_scalar(key, value, line)?,
            "csi_mode" => {
                self.csi_mode = value.parse().map_err(|e| prefix_line(e, line))?;
            }
            "bit_policy" => {
                self.bit_policy = value.parse().map_err(|e| prefix_line(e, line))?;
            }
            "mu" => self.mu = parse_scalar(key, value, line)?,
            "bits_override" => {
                self.bits_override = if value.is_empty() {
                    None
                } else {
                    Some(parse_scalar(key, value, line)?)
                };
            }
            "edge_snr_db" => self.edge_snr_db = parse_f64_list(key, value, line)?,
            "map_snr_db" => self.map_snr_db = parse_scalar(key, value, line)?,
            "train_opt" => self.train_opt = parse_bool(key, value, line)?,
            "fb_opt" => self.fb_opt = parse_bool(key, value, line)?,
            "mc" => self.mc = parse_bool(key, value, line)?,
            "samples" => self.samples = parse_scalar(key, value, line)?,
            "seed" => self.seed = parse_scalar(key, value, line)?,
            "chunk_size" => self.chunk_size = parse_scalar(key, value, line)?,
            "grid_step" => self.grid_step = parse_scalar(key, value, line)?,
            "placements" => self.placements = parse_scalar(key, value, line)?,
            "placement_seed" => self.placement_seed = parse_scalar(key, value, line)?,
            "out" => {
                self.out = if value.is_empty() { None } else { Some(value.to_string()) };
            }
            other => {
                return Err(Error::Config(format!("line {line}: unknown key '{other}'")));
            }
        }
        Ok(())
    }

    /// Render every key in a fixed order; `parse(serialize(c))` reproduces
    /// `c` exactly (floats round-trip through their shortest decimal form).
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let mut push = |key: &str, value: String| {
            s.push_str(key);
            s.push_str(" = ");
            s.push_str(&value);
            s.push('\n');
        };
        push("x1_over_r", self.x1_over_r.to_string());
        push("x2_over_r", self.x2_over_r.to_string());
        push("x2_sweep", join_f64_list(&self.x2_sweep));
        push("cell_radius_km", self.cell_radius_km.to_string());
        push("pathloss_exp", self.pathloss_exp.to_string());
        push("antenna_constant", self.antenna_constant.to_string());
        push("t", self.t.to_string());
        push("t_t", self.t_t.to_string());
        push("t_fb", self.t_fb.to_string());
        push("n_t", self.n_t.to_string());
        push("n_b", self.n_b.to_string());
        push("csi_mode", self.csi_mode.as_str().to_string());
        push("bit_policy", self.bit_policy.as_str().to_string());
        push("mu", self.mu.to_string());
        push(
            "bits_override",
            self.bits_override.map(|b| b.to_string()).unwrap_or_default(),
        );
        push("edge_snr_db", join_f64_list(&self.edge_snr_db));
        push("map_snr_db", self.map_snr_db.to_string());
        push("train_opt", self.train_opt.to_string());
        push("fb_opt", self.fb_opt.to_string());
        push("mc", self.mc.to_string());
        push("samples", self.samples.to_string());
        push("seed", self.seed.to_string());
        push("chunk_size", self.chunk_size.to_string());
        push("grid_step", self.grid_step.to_string());
        push("placements", self.placements.to_string());
        push("placement_seed", self.placement_seed.to_string());
        push("out", self.out.clone().unwrap_or_default());
        s
    }

    fn validate(&self) -> Result<()> {
        if self.edge_snr_db.is_empty() {
            return Err(Error::Config("edge_snr_db must list at least one SNR".into()));
        }
        for v in self.edge_snr_db.iter().chain(self.x2_sweep.iter()) {
            if !v.is_finite() {
                return Err(Error::Config(format!("non-finite sweep value {v}")));
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be at least 1".into()));
        }
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be at least 1".into()));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 0.9) {
            return Err(Error::Config(format!(
                "grid_step must lie in (0, 0.9], got {}",
                self.grid_step
            )));
        }
        if self.placements == 0 {
            return Err(Error::Config("placements must be at least 1".into()));
        }
        if self.mu == 0 {
            return Err(Error::Config("mu must be at least 1".into()));
        }
        // The configured operating point must itself be a valid scenario,
        // at every swept position.
        self.scenario(self.edge_snr_db[0])?;
        for &x2 in &self.x2_sweep {
            self.scenario_at(
                self.edge_snr_db[0],
                self.x1_over_r,
                x2,
                self.csi_mode,
                self.train_opt,
                self.fb_opt,
            )?;
        }
        Ok(())
    }

    pub fn frame(&self) -> Result<FrameConfig> {
        FrameConfig::new(self.t, self.t_t, self.t_fb, self.n_t, self.n_b)
    }

    /// The scenario at the configured positions, mode, and toggles.
    pub fn scenario(&self, snr_db: f64) -> Result<Scenario> {
        self.scenario_at(
            snr_db,
            self.x1_over_r,
            self.x2_over_r,
            self.csi_mode,
            self.train_opt,
            self.fb_opt,
        )
    }

    /// Build a scenario at an explicit operating point.
    ///
    /// `train_opt` replaces the equal pilot/data powers with the optimal
    /// split of the downlink budget; `fb_opt` replaces the equal feedback
    /// allocation with the per-user power split (analog) or bit split
    /// (digital).  The downlink and uplink budgets are both set by the edge
    /// SNR: `P_dl = P_ul = 10^(snr/10)` with a unit-pathloss edge reference.
    pub fn scenario_at(
        &self,
        snr_db: f64,
        x1: f64,
        x2: f64,
        mode: CsiMode,
        train_opt: bool,
        fb_opt: bool,
    ) -> Result<Scenario> {
        let frame = self.frame()?;
        let geometry = Geometry::on_axis(
            x1,
            x2,
            self.cell_radius_km,
            self.pathloss_exp,
            self.antenna_constant,
        )?;
        let p_dl = db_to_linear(snr_db);
        let p_ul = p_dl;
        let (p_t, p_d) = if train_opt {
            let split = optimize::optimize_training_power(&frame, p_dl)?;
            (split.p_t_star, split.p_d_star)
        } else {
            (p_dl, p_dl)
        };

        let p_fb = match mode {
            CsiMode::AnalogFb => Some(self.feedback_powers(&frame, &geometry, p_t, p_d, p_ul, fb_opt)?),
            _ => None,
        };
        let digital = match mode {
            CsiMode::DigitalFb => Some(self.bit_allocation(&frame, &geometry, p_t, p_d, p_ul, fb_opt)?),
            _ => None,
        };

        let power = PowerConfig::new(&frame, p_dl, p_ul, p_t, p_d, p_fb)?;
        Scenario::new(geometry, frame, power, mode, digital)
    }

    /// Per-user analog feedback powers: an equal split of the `N_B·P_ul`
    /// budget, or the optimal split of the own- versus cross-channel report.
    fn feedback_powers(
        &self,
        frame: &FrameConfig,
        geometry: &Geometry,
        p_t: f64,
        p_d: f64,
        p_ul: f64,
        fb_opt: bool,
    ) -> Result<[[f64; 2]; 2]> {
        let budget = frame.n_b as f64 * p_ul;
        if !fb_opt {
            let share = budget / 2.0;
            return Ok([[share, share], [share, share]]);
        }
        let mut p_fb = [[0.0; 2]; 2];
        for user in 0..2 {
            let l_own = geometry.link_pathloss(user, user)?;
            let l_cross = geometry.link_pathloss(user, 1 - user)?;
            let alloc = optimize::optimize_afb_power(
                frame.t_bar_t() * p_t * l_cross,
                p_d * l_cross,
                frame.t_fb as f64 * p_ul * l_own,
                budget,
            );
            p_fb[user][user] = alloc.p_fb_own;
            p_fb[user][1 - user] = alloc.p_fb_other;
        }
        Ok(p_fb)
    }

    /// Per-user digital feedback bit budgets and their own/cross split.
    ///
    /// The budget follows the bit policy (or `bits_override`); the split is
    /// equal (odd budgets give the extra bit to the own channel) unless
    /// `fb_opt` applies the distortion-balancing rule.
    fn bit_allocation(
        &self,
        frame: &FrameConfig,
        geometry: &Geometry,
        p_t: f64,
        p_d: f64,
        p_ul: f64,
        fb_opt: bool,
    ) -> Result<DigitalFeedback> {
        let mut bits = [[0u32; 2]; 2];
        let fixed_budget = self.bits_override.is_none() && self.bit_policy == BitPolicy::Fixed;
        for user in 0..2 {
            let total = match (self.bits_override, self.bit_policy) {
                (Some(b), _) => b,
                (None, BitPolicy::Fixed) => {
                    if frame.t_fb % self.mu != 0 {
                        return Err(Error::Config(format!(
                            "feedback interval {} is not a whole number of {}-symbol bits",
                            frame.t_fb, self.mu
                        )));
                    }
                    frame.t_fb / self.mu
                }
                (None, BitPolicy::UplinkCapacity) => {
                    let l_own = geometry.link_pathloss(user, user)?;
                    let uplink_rate = (1.0 + p_ul * l_own).log2();
                    (frame.t_fb as f64 * uplink_rate).floor() as u32
                }
            };
            let (own, cross) = if fb_opt {
                let l_cross = geometry.link_pathloss(user, 1 - user)?;
                let (kappa2, sigma2) = training_quality(frame.t_bar_t(), p_t, l_cross);
                let interference = p_d * l_cross;
                let a0 = (1.0 + interference * sigma2) / (interference * kappa2);
                let alloc = optimize::optimize_dfb_bits(total, frame.n_t, a0);
                (alloc.b_own, alloc.b_other)
            } else {
                (total - total / 2, total / 2)
            };
            bits[user][user] = own;
            bits[user][1 - user] = cross;
        }
        Ok(DigitalFeedback { bits, mu: self.mu, fixed_budget })
    }
}

fn prefix_line(e: Error, line: usize) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("line {line}: {msg}")),
        other => other,
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

// --- CSV emission ----------------------------------------------------------

/// One output record.  `rate_bps_hz` is the raw per-user throughput;
/// `effective_rate` is the same value discounted by the training-plus-
/// feedback overhead share of the block.  `stderr` refers to the raw rate
/// and is zero for deterministic rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub scenario_id: String,
    pub user: u32,
    pub x1_over_r: f64,
    pub x2_over_r: f64,
    pub edge_snr_db: f64,
    pub csi_mode: CsiMode,
    pub train_opt: bool,
    pub fb_opt: bool,
    pub strategy_pair: String,
    pub rate_bps_hz: f64,
    pub effective_rate: f64,
    pub stderr: f64,
    pub provenance: Provenance,
    pub n_samples: u64,
    pub seed: u64,
}

/// An ordered set of rows with a fixed header.  Rendering uses `.` decimal
/// points, no thousands separators, and LF line endings; floats print in
/// their shortest round-trip form, so `parse(to_csv())` is lossless.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvTable {
    pub rows: Vec<CsvRow>,
}

impl CsvTable {
    pub const HEADER: &'static str = "scenario_id,user,x1_over_R,x2_over_R,edge_snr_db,\
        csi_mode,train_opt,fb_opt,strategy_pair,rate_bps_hz,effective_rate,stderr,\
        provenance,n_samples,seed";

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(128 * (self.rows.len() + 1));
        s.push_str(Self::HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.scenario_id,
                r.user,
                r.x1_over_r,
                r.x2_over_r,
                r.edge_snr_db,
                r.csi_mode.as_str(),
                r.train_opt,
                r.fb_opt,
                r.strategy_pair,
                r.rate_bps_hz,
                r.effective_rate,
                r.stderr,
                r.provenance.as_str(),
                r.n_samples,
                r.seed,
            ));
        }
        s
    }

    /// Parse a rendered table back into rows.
    ///
    /// # Errors
    /// [`Error::Config`] on a wrong header, field count, or unparseable field.
    pub fn parse(text: &str) -> Result<CsvTable> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h == Self::HEADER => {}
            other => {
                return Err(Error::Config(format!(
                    "bad CSV header: {:?}",
                    other.unwrap_or("<empty>")
                )));
            }
        }
        let mut rows = Vec::new();
        for (idx, line) in lines.enumerate() {
            let n = idx + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 15 {
                return Err(Error::Config(format!(
                    "line {n}: expected 15 fields, got {}",
                    f.len()
                )));
            }
            let provenance = match f[12] {
                "closed_form" => Provenance::ClosedForm,
                "high_snr_approx" => Provenance::HighSnrApprox,
                "monte_carlo" => Provenance::MonteCarlo,
                other => {
                    return Err(Error::Config(format!("line {n}: unknown provenance '{other}'")));
                }
            };
            rows.push(CsvRow {
                scenario_id: f[0].to_string(),
                user: parse_scalar("user", f[1], n)?,
                x1_over_r: parse_scalar("x1_over_R", f[2], n)?,
                x2_over_r: parse_scalar("x2_over_R", f[3], n)?,
                edge_snr_db: parse_scalar("edge_snr_db", f[4], n)?,
                csi_mode: f[5].parse().map_err(|e| prefix_line(e, n))?,
                train_opt: parse_bool("train_opt", f[6], n)?,
                fb_opt: parse_bool("fb_opt", f[7], n)?,
                strategy_pair: f[8].to_string(),
                rate_bps_hz: parse_scalar("rate_bps_hz", f[9], n)?,
                effective_rate: parse_scalar("effective_rate", f[10], n)?,
                stderr: parse_scalar("stderr", f[11], n)?,
                provenance,
                n_samples: parse_scalar("n_samples", f[13], n)?,
                seed: parse_scalar("seed", f[14], n)?,
            });
        }
        Ok(CsvTable { rows })
    }

    /// Verify that every row's effective rate equals the raw rate times the
    /// overhead multiplier — the on-load consistency check for consumers.
    pub fn check_effective(&self, multiplier: f64) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            let expect = r.rate_bps_hz * multiplier;
            if (r.effective_rate - expect).abs() > 1e-9 * expect.abs().max(1.0) {
                return Err(Error::Config(format!(
                    "row {i}: effective rate {} does not equal rate {} × multiplier {multiplier}",
                    r.effective_rate, r.rate_bps_hz
                )));
            }
        }
        Ok(())
    }
}

/// Round to 12 decimals to give grid coordinates exact short decimal forms.
fn snap(v: f64) -> f64 {
    (v * 1e12).round() / 1e12
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

// --- rate sweep ------------------------------------------------------------

/// Closed-form, large-power, and (optionally) Monte Carlo throughputs over
/// the configured SNR list and user-2 positions.
///
/// Per sweep point the table carries, in order: closed-form rows for all
/// four strategy pairs, the large-power rows for the both-cancelling pair
/// (the only pair with a large-power form), and, when `mc` is set, Monte
/// Carlo rows for all four pairs.  All Monte Carlo calls share the master
/// seed, so pairs at one point see identical channel draws.
pub fn run_rate_sweep(config: &ExperimentConfig) -> Result<CsvTable> {
    let frame = config.frame()?;
    let positions = if config.x2_sweep.is_empty() {
        vec![config.x2_over_r]
    } else {
        sorted(&config.x2_sweep)
    };
    if config.mc
        && config.csi_mode == CsiMode::DigitalFb
        && config.bit_policy == BitPolicy::UplinkCapacity
        && config.bits_override.is_none()
    {
        return Err(Error::Config(
            "uplink-capacity bit budgets are closed-form only; sampling their codebooks is \
             infeasible"
                .into(),
        ));
    }

    let mut table = CsvTable::default();
    for &snr in &sorted(&config.edge_snr_db) {
        for &x2 in &positions {
            let scenario = config.scenario_at(
                snr,
                config.x1_over_r,
                x2,
                config.csi_mode,
                config.train_opt,
                config.fb_opt,
            )?;
            let quality = scenario.link_quality()?;
            let id = format!("rate-sweep:snr={snr}:x2={x2}");
            let mut push = |pair: &str, user: u32, est: rate::RateEstimate, n: u64, seed: u64| {
                table.rows.push(CsvRow {
                    scenario_id: id.clone(),
                    user,
                    x1_over_r: config.x1_over_r,
                    x2_over_r: x2,
                    edge_snr_db: snr,
                    csi_mode: config.csi_mode,
                    train_opt: config.train_opt,
                    fb_opt: config.fb_opt,
                    strategy_pair: pair.to_string(),
                    rate_bps_hz: est.value,
                    effective_rate: est.value * scenario.overhead_multiplier(),
                    stderr: est.stderr,
                    provenance: est.provenance,
                    n_samples: n,
                    seed,
                });
            };

            for pair in StrategyPair::ALL {
                for user in 0..2 {
                    let est = rate::throughput(&scenario, &quality, pair, user)?;
                    push(&pair.label(), user as u32, est, 0, 0);
                }
            }
            let both_ic = StrategyPair::ALL[3];
            for user in 0..2 {
                let est =
                    rate::high_snr_throughput(config.csi_mode, &scenario, &quality, user)?;
                push(&both_ic.label(), user as u32, est, 0, 0);
            }
            if config.mc {
                for pair in StrategyPair::ALL {
                    let sr = sim::mc_average(
                        &scenario,
                        pair,
                        config.samples,
                        config.seed,
                        config.chunk_size,
                    )?;
                    for user in 0..2 {
                        let est = rate::RateEstimate {
                            value: sr.rate[user].mean,
                            stderr: sr.rate[user].stderr.unwrap_or(0.0),
                            provenance: Provenance::MonteCarlo,
                        };
                        push(&pair.label(), user as u32, est, sr.n_blocks, sr.seed);
                    }
                }
            }
        }
    }
    let multiplier = 1.0 - (frame.t_bar_t() + frame.t_bar_fb()) / frame.t_bar();
    table.check_effective(multiplier)?;
    Ok(table)
}

// --- strategy map ----------------------------------------------------------

/// The positions covered by the strategy map: user 1 sweeps its own cell,
/// user 2 mirrors it, both keeping a 0.05R margin from BS and edge.
pub fn map_grid(step: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x2 = Vec::new();
    let mut x = 0.05;
    while x <= 0.95 + 1e-9 {
        x2.push(snap(x));
        x += step;
    }
    let x1 = x2.iter().rev().map(|v| -v).collect();
    (x1, x2)
}

/// Sum-rate-maximising strategy pair over a position grid at the map SNR,
/// under the configured CSI mode and optimizer toggles.  Two rows per grid
/// point (one per user) carry the selected pair and its per-user rates.
pub fn run_mode_map(config: &ExperimentConfig) -> Result<CsvTable> {
    let (x1_grid, x2_grid) = map_grid(config.grid_step);
    let snr = config.map_snr_db;
    let mut table = CsvTable::default();
    for &x1 in &x1_grid {
        for &x2 in &x2_grid {
            let scenario =
                config.scenario_at(snr, x1, x2, config.csi_mode, config.train_opt, config.fb_opt)?;
            let quality = scenario.link_quality()?;
            let (pair, rates) = optimize::adaptive_pair(&scenario, &quality)?;
            let index = StrategyPair::ALL.iter().position(|p| *p == pair).unwrap();
            for user in 0..2 {
                table.rows.push(CsvRow {
                    scenario_id: format!("mode-map:x1={x1:.2}:x2={x2:.2}"),
                    user: user as u32,
                    x1_over_r: x1,
                    x2_over_r: x2,
                    edge_snr_db: snr,
                    csi_mode: config.csi_mode,
                    train_opt: config.train_opt,
                    fb_opt: config.fb_opt,
                    strategy_pair: pair.label(),
                    rate_bps_hz: rates[index][user],
                    effective_rate: rates[index][user] * scenario.overhead_multiplier(),
                    stderr: 0.0,
                    provenance: Provenance::ClosedForm,
                    n_samples: 0,
                    seed: 0,
                });
            }
        }
    }
    Ok(table)
}

// --- optimizer comparison --------------------------------------------------

/// The six systems compared by the optimizer study: each feedback mode at
/// three optimization levels.
pub const COMPARISON_SYSTEMS: [(&str, CsiMode, bool, bool); 6] = [
    ("afb-1", CsiMode::AnalogFb, false, false),
    ("afb-2", CsiMode::AnalogFb, true, false),
    ("afb-3", CsiMode::AnalogFb, true, true),
    ("dfb-1", CsiMode::DigitalFb, false, false),
    ("dfb-2", CsiMode::DigitalFb, true, false),
    ("dfb-3", CsiMode::DigitalFb, true, true),
];

/// Closed-form throughput of the six feedback systems — analog and digital,
/// each unoptimized (`*-1`), with the pilot/data power split (`*-2`), and
/// with the split plus feedback allocation (`*-3`) — at the configured
/// positions, with the strategy pair re-selected per system.
pub fn run_optimizer_comparison(config: &ExperimentConfig) -> Result<CsvTable> {
    let mut table = CsvTable::default();
    for &snr in &sorted(&config.edge_snr_db) {
        for (name, mode, train_opt, fb_opt) in COMPARISON_SYSTEMS {
            let scenario = config.scenario_at(
                snr,
                config.x1_over_r,
                config.x2_over_r,
                mode,
                train_opt,
                fb_opt,
            )?;
            let quality = scenario.link_quality()?;
            let (pair, rates) = optimize::adaptive_pair(&scenario, &quality)?;
            let index = StrategyPair::ALL.iter().position(|p| *p == pair).unwrap();
            for user in 0..2 {
                table.rows.push(CsvRow {
                    scenario_id: format!("optimize-compare:system={name}"),
                    user: user as u32,
                    x1_over_r: config.x1_over_r,
                    x2_over_r: config.x2_over_r,
                    edge_snr_db: snr,
                    csi_mode: mode,
                    train_opt,
                    fb_opt,
                    strategy_pair: pair.label(),
                    rate_bps_hz: rates[index][user],
                    effective_rate: rates[index][user] * scenario.overhead_multiplier(),
                    stderr: 0.0,
                    provenance: Provenance::ClosedForm,
                    n_samples: 0,
                    seed: 0,
                });
            }
        }
    }
    Ok(table)
}

// --- placement percentile study --------------------------------------------

/// The systems reported by the percentile study.  The two genie references
/// always run unoptimized at equal powers; the feedback systems follow the
/// configured toggles.  `bf-perfect` is pinned to both-beamforming, the
/// rest re-select the strategy pair per placement.
const PERCENTILE_SYSTEMS: [&str; 4] = ["icic-perfect", "bf-perfect", "afb", "dfb"];

/// Draw `n` user position pairs: user 1 uniform on `[−0.95R, 0]`, user 2 on
/// `[0, 0.95R]` — each anywhere in its own cell up to the shared edge, with
/// a 0.05R margin keeping users off their base station.
pub fn draw_placements(n: u32, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x1 = rng.random_range(-0.95..=0.0);
            let x2 = rng.random_range(0.0..=0.95);
            (x1, x2)
        })
        .collect()
}

/// Nearest-rank percentile of an unsorted sample (`q` in (0, 1]).
fn nearest_rank(values: &mut [f64], q: f64) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let rank = (q * values.len() as f64).ceil().max(1.0) as usize;
    values[rank - 1]
}

/// Mean and 5th-percentile effective throughput per user over random
/// placements, for the two feedback systems and the two genie references.
///
/// Per system, SNR, and user the table carries a `stat=mean` row (with the
/// standard error of that mean across placements) and a `stat=p05` row.
/// Rates in both rows are per-user raw throughputs whose effective column
/// applies the common overhead multiplier; position columns are zero since
/// rows aggregate over placements.
pub fn run_percentile_study(config: &ExperimentConfig) -> Result<CsvTable> {
    let placements = draw_placements(config.placements, config.placement_seed);
    let mut table = CsvTable::default();
    for &snr in &sorted(&config.edge_snr_db) {
        // per system, per user: raw rates across placements
        let mut samples: Vec<[Vec<f64>; 2]> =
            vec![[Vec::new(), Vec::new()]; PERCENTILE_SYSTEMS.len()];
        for &(x1, x2) in &placements {
            for (s, name) in PERCENTILE_SYSTEMS.iter().enumerate() {
                let (mode, train_opt, fb_opt) = match *name {
                    "afb" => (CsiMode::AnalogFb, config.train_opt, config.fb_opt),
                    "dfb" => (CsiMode::DigitalFb, config.train_opt, config.fb_opt),
                    _ => (CsiMode::Perfect, false, false),
                };
                let scenario = config.scenario_at(snr, x1, x2, mode, train_opt, fb_opt)?;
                let quality = scenario.link_quality()?;
                let per_user = if *name == "bf-perfect" {
                    let pair = StrategyPair::ALL[0];
                    [
                        rate::throughput(&scenario, &quality, pair, 0)?.value,
                        rate::throughput(&scenario, &quality, pair, 1)?.value,
                    ]
                } else {
                    let (pair, rates) = optimize::adaptive_pair(&scenario, &quality)?;
                    let index = StrategyPair::ALL.iter().position(|p| *p == pair).unwrap();
                    rates[index]
                };
                for user in 0..2 {
                    samples[s][user].push(per_user[user]);
                }
            }
        }

        let frame = config.frame()?;
        let multiplier = 1.0 - (frame.t_bar_t() + frame.t_bar_fb()) / frame.t_bar();
        for (s, name) in PERCENTILE_SYSTEMS.iter().enumerate() {
            let (mode, train_opt, fb_opt, pair_label) = match *name {
                "afb" => (CsiMode::AnalogFb, config.train_opt, config.fb_opt, "adaptive"),
                "dfb" => (CsiMode::DigitalFb, config.train_opt, config.fb_opt, "adaptive"),
                "bf-perfect" => (CsiMode::Perfect, false, false, "bf-bf"),
                _ => (CsiMode::Perfect, false, false, "adaptive"),
            };
            for stat in ["mean", "p05"] {
                for user in 0..2 {
                    let values = &mut samples[s][user];
                    let n = values.len() as f64;
                    let (value, stderr) = if stat == "mean" {
                        let mean = values.iter().sum::<f64>() / n;
                        let se = if values.len() >= 2 {
                            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                                / (n - 1.0);
                            (var / n).sqrt()
                        } else {
                            0.0
                        };
                        (mean, se)
                    } else {
                        (nearest_rank(values, 0.05), 0.0)
                    };
                    table.rows.push(CsvRow {
                        scenario_id: format!("percentile:system={name}:stat={stat}"),
                        user: user as u32,
                        x1_over_r: 0.0,
                        x2_over_r: 0.0,
                        edge_snr_db: snr,
                        csi_mode: mode,
                        train_opt,
                        fb_opt,
                        strategy_pair: pair_label.to_string(),
                        rate_bps_hz: value,
                        effective_rate: value * multiplier,
                        stderr,
                        provenance: Provenance::ClosedForm,
                        n_samples: config.placements as u64,
                        seed: config.placement_seed,
                    });
                }
            }
        }
    }
    Ok(table)
}

// --- selftest --------------------------------------------------------------

/// One self-check outcome: name, pass flag, and a short detail string.
pub type SelfCheck = (&'static str, bool, String);

/// Fast built-in verification: reference constants, optimizer references,
/// simulator determinism, and the CSV round trip.  Runs in a few seconds.
pub fn run_selftest() -> Vec<SelfCheck> {
    let mut checks: Vec<SelfCheck> = Vec::new();
    let mut push = |name: &'static str, pass: bool, detail: String| {
        checks.push((name, pass, detail));
    };

    let r1 = rate::rate_r1(0.5, 1).unwrap_or(f64::NAN);
    push("reference single-interferer rate", (r1 - 0.5213).abs() < 1e-3, format!("{r1:.6}"));

    let dg = special::digamma_int(1).unwrap_or(f64::NAN);
    push("digamma at one", (dg + 0.577_215_664_9).abs() < 1e-6, format!("{dg:.9}"));

    let e1 = special::exponential_integral_e1(1.0).unwrap_or(f64::NAN);
    push(
        "exponential integral at one",
        (e1 - 0.219_383_934_395_520_3).abs() < 1e-12,
        format!("{e1:.15}"),
    );

    let split = FrameConfig::new(100, 8, 0, 4, 2)
        .and_then(|f| optimize::optimize_training_power(&f, 1.0));
    let (pd, pt) = split.map(|s| (s.p_d_star, s.p_t_star)).unwrap_or((f64::NAN, f64::NAN));
    push(
        "pilot/data split reference",
        (pd - 0.899_415).abs() < 1e-3 && (pt - 2.156_716).abs() < 1e-3,
        format!("p_d = {pd:.6}, p_t = {pt:.6}"),
    );

    let threshold = FrameConfig::new(100, 8, 0, 4, 2)
        .and_then(|f| optimize::training_length_threshold(&f))
        .map(|v| 10.0 * v.log10())
        .unwrap_or(f64::NAN);
    push(
        "minimal-training threshold reference",
        (threshold - 0.869).abs() < 0.01,
        format!("{threshold:.3} dB"),
    );

    let direct = rate::rate_r3(1.0, 2.0, 0.5, 3).unwrap_or(f64::NAN);
    let recombined = rate::rate_r2(1.0, 2.0, 3)
        .and_then(|r2a| rate::rate_r2(1.0, 0.5, 3).map(|r2b| (2.0 * r2a - 0.5 * r2b) / 1.5))
        .unwrap_or(f64::NAN);
    push(
        "two-interferer partial-fraction identity",
        (direct - recombined).abs() < 1e-9,
        format!("direct {direct:.12} vs recombined {recombined:.12}"),
    );

    let sim_check = (|| -> Result<(f64, f64)> {
        let config = ExperimentConfig::default();
        let scenario = config.scenario_at(10.0, -0.1, 0.1, CsiMode::Training, false, false)?;
        let pair = StrategyPair::ALL[3];
        let a = sim::mc_average(&scenario, pair, 2000, 7, 512)?;
        let b = sim::mc_average(&scenario, pair, 2000, 7, 512)?;
        Ok((a.rate[0].mean, b.rate[0].mean))
    })();
    match sim_check {
        Ok((a, b)) => push(
            "simulator determinism",
            a == b && a.is_finite(),
            format!("two runs gave {a:.9} and {b:.9}"),
        ),
        Err(e) => push("simulator determinism", false, e.to_string()),
    }

    let csv_check = (|| -> Result<bool> {
        let config = ExperimentConfig {
            edge_snr_db: vec![10.0],
            mc: false,
            ..ExperimentConfig::default()
        };
        let table = run_rate_sweep(&config)?;
        let reparsed = CsvTable::parse(&table.to_csv())?;
        Ok(reparsed == table)
    })();
    match csv_check {
        Ok(ok) => push("CSV round trip", ok, "render/parse identity".into()),
        Err(e) => push("CSV round trip", false, e.to_string()),
    }

    checks
}
