//! Seeded Monte Carlo simulation of fading blocks: channel draw, pilot
//! observation, MMSE estimation, analog or quantized digital feedback,
//! precoding, and genie-aided SINR.  Serves as the ground-truth oracle for
//! every closed form in [`crate::rate`].
//!
//! # Randomness contract
//!
//! Within one block the draw order is fixed regardless of CSI mode:
//! channel vectors in user-major link order, then training noise in the
//! same order, then mode extras (analog uplink noise, or one fresh
//! quantization codebook per link).  Blocks are grouped into chunks; chunk
//! `c` runs on an independent substream `set_stream(c)` of the master
//! seed, and chunk results merge by summation in index order, so a run is
//! bit-reproducible for a fixed `(seed, chunk_size)` no matter how many
//! workers execute it.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::model::{CsiMode, Scenario};
use crate::rate::{Strategy, StrategyPair};

/// Largest per-channel codebook exponent the exhaustive quantizer search
/// accepts; beyond this the codebook no longer fits a sane memory/time
/// budget and the analytical forms must be used instead.
pub const MAX_CODEBOOK_BITS: u32 = 22;

// --- complex vector helpers ------------------------------------------------

/// Inner product `⟨a, b⟩ = Σ conj(a_k)·b_k`.
fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Beamforming gain `|⟨h, f⟩|²` of direction `f` on channel `h`.
fn gain(h: &[Complex64], f: &[Complex64]) -> f64 {
    inner(h, f).norm_sqr()
}

/// One vector with i.i.d. zero-mean unit-variance circular Gaussian
/// components (real and imaginary parts each N(0, 1/2)).
pub fn sample_cn_vector(n: usize, rng: &mut impl rand::Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
        })
        .collect()
}

// --- domain types ----------------------------------------------------------

/// The four downlink channel vectors of one fading block, indexed
/// `h[user][bs]`.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: [[Vec<Complex64>; 2]; 2],
}

/// Draw the four mutually independent channel vectors in user-major order.
pub fn sample_channels(n_t: u32, rng: &mut impl rand::Rng) -> ChannelRealization {
    let mut draw = || sample_cn_vector(n_t as usize, rng);
    ChannelRealization {
        h: [[draw(), draw()], [draw(), draw()]],
    }
}

/// The channel knowledge available at one base station: its vector toward
/// each user, as estimated/quantized under `mode`.  Precoder construction
/// consumes only this type, which is what keeps the genie SINR honest —
/// estimates can never leak into the SINR expression except through the
/// precoding vectors.
#[derive(Debug, Clone)]
pub struct CsiAtBs {
    pub toward_user: [Vec<Complex64>; 2],
    pub mode: CsiMode,
}

/// A random vector quantization codebook: `2^B` isotropic unit-norm
/// vectors, regenerated fresh for every block and link.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub vectors: Vec<Vec<Complex64>>,
}

impl Codebook {
    /// Draw a fresh codebook of `2^bits` unit vectors.
    pub fn random(bits: u32, n_t: u32, rng: &mut impl rand::Rng) -> Result<Self> {
        if bits > MAX_CODEBOOK_BITS {
            return Err(Error::Config(format!(
                "codebook of 2^{bits} entries exceeds the exhaustive-search cap of 2^{MAX_CODEBOOK_BITS}"
            )));
        }
        let vectors = (0..1usize << bits)
            .map(|_| {
                let mut v = sample_cn_vector(n_t as usize, rng);
                let norm = norm_sqr(&v).sqrt();
                for x in &mut v {
                    *x /= norm;
                }
                v
            })
            .collect();
        Ok(Self { vectors })
    }
}

// --- training and feedback chains ------------------------------------------

/// Pilot phase for one link: the user's de-spread observation
/// `s = √(T̄_t·P_t·L)·h + z` with fresh unit circular noise, and the MMSE
/// channel estimate `h̃ = √(T̄_t·P_t·L)/(1 + T̄_t·P_t·L)·s`.
pub fn simulate_training(
    h: &[Complex64],
    t_bar_t: f64,
    p_t: f64,
    l: f64,
    rng: &mut impl rand::Rng,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let amp = (t_bar_t * p_t * l).sqrt();
    let z = sample_cn_vector(h.len(), rng);
    let s: Vec<Complex64> = h.iter().zip(&z).map(|(hk, zk)| amp * hk + zk).collect();
    let coeff = amp / (1.0 + amp * amp);
    let h_tilde = s.iter().map(|sk| coeff * sk).collect();
    (s, h_tilde)
}

/// Analog feedback of one pilot observation over the unfaded uplink.
///
/// The user normalizes `s` to unit power and sends it with per-symbol
/// energy `(T_fb/N_B)·P_fb` through the uplink pathloss `l_up`; the BS
/// adds fresh unit noise and applies the MMSE combiner for the composite
/// two-hop observation, yielding the channel estimate `ĥ`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_analog_feedback(
    s: &[Complex64],
    t_bar_t: f64,
    p_t: f64,
    l_train: f64,
    t_fb: f64,
    n_b: f64,
    p_fb: f64,
    l_up: f64,
    rng: &mut impl rand::Rng,
) -> Vec<Complex64> {
    let train_snr = t_bar_t * p_t * l_train;
    // Uplink amplitude applied to the unit-normalized observation.
    let a = (t_fb / n_b * p_fb * l_up / (1.0 + train_snr)).sqrt();
    let w = sample_cn_vector(s.len(), rng);
    let g: Vec<Complex64> = s.iter().zip(&w).map(|(sk, wk)| a * sk + wk).collect();
    // MMSE combiner E[h·g*]/E[|g|²] for g = a·√(train_snr)·h + a·z + w.
    let coeff = a * train_snr.sqrt() / (a * a * (1.0 + train_snr) + 1.0);
    g.iter().map(|gk| coeff * gk).collect()
}

/// Quantize the direction of `h̃` against a codebook: returns the codeword
/// maximizing `|⟨h̃/‖h̃‖, c⟩|` (lowest index on ties) and the squared
/// correlation `cos²θ` achieved.
pub fn rvq_quantize(h_tilde: &[Complex64], codebook: &Codebook) -> Result<(Vec<Complex64>, f64)> {
    let norm2 = norm_sqr(h_tilde);
    if norm2 <= 0.0 {
        return Err(Error::Domain(
            "cannot quantize a zero channel estimate".into(),
        ));
    }
    let mut best_idx = 0;
    let mut best_corr = -1.0;
    for (idx, c) in codebook.vectors.iter().enumerate() {
        let corr = gain(h_tilde, c);
        if corr > best_corr {
            best_corr = corr;
            best_idx = idx;
        }
    }
    Ok((codebook.vectors[best_idx].clone(), best_corr / norm2))
}

// --- precoders -------------------------------------------------------------

/// Single-cell beamforming: the normalized channel direction.
pub fn precoder_bf(own: &[Complex64]) -> Result<Vec<Complex64>> {
    let norm = norm_sqr(own).sqrt();
    if norm <= 0.0 {
        return Err(Error::Domain("cannot beamform on a zero vector".into()));
    }
    Ok(own.iter().map(|x| x / norm).collect())
}

/// Interference-cancelling precoder: the normalized projection of the own
/// channel onto the orthogonal complement of the neighbor estimates.
///
/// The neighbor span is orthonormalized by modified Gram–Schmidt with a
/// second re-orthogonalization pass, so the output is orthogonal to every
/// neighbor to near machine precision.
pub fn precoder_icic(own: &[Complex64], neighbors: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
    let n_t = own.len();
    if neighbors.is_empty() || neighbors.len() > n_t - 1 {
        return Err(Error::Config(format!(
            "cancellation toward {} neighbors needs 1 ≤ count ≤ N_t − 1 = {}",
            neighbors.len(),
            n_t - 1
        )));
    }
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(neighbors.len());
    for nb in neighbors {
        let scale2 = norm_sqr(nb);
        let mut v = nb.clone();
        for _ in 0..2 {
            for q in &basis {
                let proj = inner(q, &v);
                for (vk, qk) in v.iter_mut().zip(q) {
                    *vk -= proj * qk;
                }
            }
        }
        let rem2 = norm_sqr(&v);
        if rem2 <= 1e-24 * scale2.max(1e-300) {
            return Err(Error::RankDeficient(
                "neighbor channel estimates are linearly dependent".into(),
            ));
        }
        let norm = rem2.sqrt();
        for x in &mut v {
            *x /= norm;
        }
        basis.push(v);
    }
    let own2 = norm_sqr(own);
    let mut w = own.to_vec();
    for _ in 0..2 {
        for q in &basis {
            let proj = inner(q, &w);
            for (wk, qk) in w.iter_mut().zip(q) {
                *wk -= proj * qk;
            }
        }
    }
    let rem2 = norm_sqr(&w);
    if rem2 <= 1e-24 * own2.max(1e-300) {
        return Err(Error::RankDeficient(
            "own channel lies in the span of the neighbor estimates".into(),
        ));
    }
    let norm = rem2.sqrt();
    for x in &mut w {
        *x /= norm;
    }
    Ok(w)
}

// --- one block -------------------------------------------------------------

/// Instantaneous outcome of one fading block.
#[derive(Debug, Clone, Copy)]
pub struct BlockSample {
    pub sinr: [f64; 2],
    /// `log₂(1 + SINR)` per user, bps/Hz before overhead.
    pub rate: [f64; 2],
    /// Raw beamforming gain `|⟨h_{i,i}, f_i⟩|²` per user.
    pub signal_gain: [f64; 2],
    /// Raw leakage gain `|⟨h_{i,ī}, f_ī⟩|²` per user.
    pub interference_gain: [f64; 2],
}

/// Build the CSI available at each base station for this block: pilot
/// observations for every link, then the mode's estimation/feedback chain.
fn observe_csi(
    scenario: &Scenario,
    channels: &ChannelRealization,
    rng: &mut impl rand::Rng,
) -> Result<[CsiAtBs; 2]> {
    let frame = &scenario.frame;
    let power = &scenario.power;
    let t_bar_t = frame.t_bar_t();
    // Pilot observations and MMSE estimates, user-major; drawn in every
    // mode (including perfect CSI) to keep the substream layout common.
    let mut obs: [[Option<(Vec<Complex64>, Vec<Complex64>)>; 2]; 2] =
        [[None, None], [None, None]];
    for user in 0..2 {
        for bs in 0..2 {
            let l = scenario.geometry.link_pathloss(user, bs)?;
            obs[user][bs] = Some(simulate_training(
                &channels.h[user][bs],
                t_bar_t,
                power.p_t,
                l,
                rng,
            ));
        }
    }
    // The estimate of h[user][bs] the precoders will see.
    let mut est: [[Vec<Complex64>; 2]; 2] = Default::default();
    match scenario.csi_mode {
        CsiMode::Perfect => {
            for user in 0..2 {
                for bs in 0..2 {
                    est[user][bs] = channels.h[user][bs].clone();
                }
            }
        }
        CsiMode::Training => {
            for user in 0..2 {
                for bs in 0..2 {
                    est[user][bs] = obs[user][bs].take().unwrap().1;
                }
            }
        }
        CsiMode::AnalogFb => {
            let p_fb = power.p_fb.ok_or_else(|| {
                Error::Config("analog feedback mode without feedback powers".into())
            })?;
            for user in 0..2 {
                let l_up = scenario.geometry.link_pathloss(user, user)?;
                for bs in 0..2 {
                    let l = scenario.geometry.link_pathloss(user, bs)?;
                    let (s, _) = obs[user][bs].take().unwrap();
                    est[user][bs] = simulate_analog_feedback(
                        &s,
                        t_bar_t,
                        power.p_t,
                        l,
                        frame.t_fb as f64,
                        frame.n_b as f64,
                        p_fb[user][bs],
                        l_up,
                        rng,
                    );
                }
            }
        }
        CsiMode::DigitalFb => {
            let digital = scenario
                .digital
                .as_ref()
                .ok_or_else(|| Error::Config("digital feedback mode without bit split".into()))?;
            for user in 0..2 {
                for bs in 0..2 {
                    let codebook = Codebook::random(digital.bits[user][bs], frame.n_t, rng)?;
                    let h_tilde = &obs[user][bs].as_ref().unwrap().1;
                    let (q, _) = rvq_quantize(h_tilde, &codebook)?;
                    est[user][bs] = q;
                }
            }
        }
    }
    let [[e00, e01], [e10, e11]] = est;
    Ok([
        CsiAtBs {
            toward_user: [e00, e10],
            mode: scenario.csi_mode,
        },
        CsiAtBs {
            toward_user: [e01, e11],
            mode: scenario.csi_mode,
        },
    ])
}

/// The transmit direction of base station `bs` given its local CSI.
fn bs_precoder(csi: &CsiAtBs, bs: usize, strategy: Strategy) -> Result<Vec<Complex64>> {
    let own = &csi.toward_user[bs];
    match strategy {
        Strategy::Bf => precoder_bf(own),
        Strategy::Ic => precoder_icic(own, std::slice::from_ref(&csi.toward_user[1 - bs])),
    }
}

/// Simulate one fading block end to end and score it with the genie-aided
/// SINR `P_d·L_{i,i}·|⟨h_{i,i}, f_i⟩|² / (1 + P_d·L_{i,ī}·|⟨h_{i,ī}, f_ī⟩|²)`
/// evaluated on the true channels.
pub fn run_block(
    scenario: &Scenario,
    pair: StrategyPair,
    rng: &mut impl rand::Rng,
) -> Result<BlockSample> {
    let channels = sample_channels(scenario.frame.n_t, rng);
    let csi = observe_csi(scenario, &channels, rng)?;
    let f = [
        bs_precoder(&csi[0], 0, pair.of(0))?,
        bs_precoder(&csi[1], 1, pair.of(1))?,
    ];
    let p_d = scenario.power.p_d;
    let mut sample = BlockSample {
        sinr: [0.0; 2],
        rate: [0.0; 2],
        signal_gain: [0.0; 2],
        interference_gain: [0.0; 2],
    };
    for user in 0..2 {
        let other = 1 - user;
        let sig_gain = gain(&channels.h[user][user], &f[user]);
        let intf_gain = gain(&channels.h[user][other], &f[other]);
        let l_own = scenario.geometry.link_pathloss(user, user)?;
        let l_cross = scenario.geometry.link_pathloss(user, other)?;
        let sinr = p_d * l_own * sig_gain / (1.0 + p_d * l_cross * intf_gain);
        sample.signal_gain[user] = sig_gain;
        sample.interference_gain[user] = intf_gain;
        sample.sinr[user] = sinr;
        sample.rate[user] = (1.0 + sinr).log2();
    }
    Ok(sample)
}

// --- averaging -------------------------------------------------------------

/// Mean, standard error (absent below two samples) and count for one
/// scalar stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStat {
    pub mean: f64,
    pub stderr: Option<f64>,
}

/// Averaged simulation outcome with reproducibility metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub rate: [MeanStat; 2],
    pub sinr_mean: [f64; 2],
    pub signal_gain: [MeanStat; 2],
    pub interference_gain: [MeanStat; 2],
    pub n_blocks: u64,
    pub seed: u64,
    pub chunk_size: u64,
}

#[derive(Clone, Copy, Default)]
struct Accumulator {
    n: u64,
    sum: [[f64; 2]; 4],
    sumsq: [[f64; 2]; 4],
}

impl Accumulator {
    fn push(&mut self, s: &BlockSample) {
        self.n += 1;
        let streams = [s.rate, s.sinr, s.signal_gain, s.interference_gain];
        for (k, stream) in streams.iter().enumerate() {
            for u in 0..2 {
                self.sum[k][u] += stream[u];
                self.sumsq[k][u] += stream[u] * stream[u];
            }
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        for k in 0..4 {
            for u in 0..2 {
                self.sum[k][u] += other.sum[k][u];
                self.sumsq[k][u] += other.sumsq[k][u];
            }
        }
    }

    fn stat(&self, k: usize, u: usize) -> MeanStat {
        let n = self.n as f64;
        let mean = self.sum[k][u] / n;
        let stderr = (self.n >= 2).then(|| {
            let var = ((self.sumsq[k][u] - self.sum[k][u] * self.sum[k][u] / n) / (n - 1.0))
                .max(0.0);
            (var / n).sqrt()
        });
        MeanStat { mean, stderr }
    }
}

/// Average [`run_block`] over `n_blocks` with deterministic chunked
/// substreams: chunk `c` simulates blocks on stream `c` of the master
/// seed, chunks may run in parallel, and the merge happens in chunk order,
/// so the result is bit-identical for a fixed `(seed, chunk_size)`
/// regardless of scheduling.
pub fn mc_average(
    scenario: &Scenario,
    pair: StrategyPair,
    n_blocks: u64,
    seed: u64,
    chunk_size: u64,
) -> Result<SimResult> {
    if n_blocks == 0 || chunk_size == 0 {
        return Err(Error::Config(
            "simulation needs at least one block and a positive chunk size".into(),
        ));
    }
    let n_chunks = n_blocks.div_ceil(chunk_size);
    let chunks: Vec<Accumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<Accumulator> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let blocks = chunk_size.min(n_blocks - c * chunk_size);
            let mut acc = Accumulator::default();
            for _ in 0..blocks {
                acc.push(&run_block(scenario, pair, &mut rng)?);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Accumulator::default();
    for acc in &chunks {
        total.merge(acc);
    }
    Ok(SimResult {
        rate: [total.stat(0, 0), total.stat(0, 1)],
        sinr_mean: [total.stat(1, 0).mean, total.stat(1, 1).mean],
        signal_gain: [total.stat(2, 0), total.stat(2, 1)],
        interference_gain: [total.stat(3, 0), total.stat(3, 1)],
        n_blocks,
        seed,
        chunk_size,
    })
}
