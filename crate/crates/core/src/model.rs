//! Effective channels, link statistics and achievable rates.

use std::f64::consts::LN_2;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelRealization;
use crate::circuit::{build_phi, CapacitorVector, CircuitParams};
use crate::error::{Error, Result};
use crate::tensor::Grid3;

pub type CVec = DVector<Complex64>;

/// Problem sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    /// Base stations.
    pub bs: usize,
    /// Antennas per base station.
    pub antennas: usize,
    pub users: usize,
    pub ris: usize,
    /// Elements per RIS.
    pub elements: usize,
    pub subcarriers: usize,
}

impl Dims {
    /// Full-size reference deployment.
    pub fn reference() -> Self {
        Self {
            bs: 4,
            antennas: 2,
            users: 4,
            ris: 2,
            elements: 144,
            subcarriers: 16,
        }
    }

    /// Reduced deployment used by the test suite.
    pub fn desk() -> Self {
        Self {
            bs: 2,
            antennas: 2,
            users: 2,
            ris: 1,
            elements: 16,
            subcarriers: 8,
        }
    }

    /// Length of the stacked capacitor vector.
    pub fn n_caps(&self) -> usize {
        self.ris * self.elements
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("system.bs", self.bs),
            ("system.antennas", self.antennas),
            ("system.users", self.users),
            ("system.ris", self.ris),
            ("system.elements", self.elements),
            ("system.subcarriers", self.subcarriers),
        ] {
            if v == 0 {
                return Err(Error::invalid(key, "must be >= 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemConfig {
    pub dims: Dims,
    /// Carrier frequency (Hz).
    pub f_c: f64,
    /// Occupied bandwidth (Hz).
    pub bandwidth: f64,
    /// Per-BS power budget (W).
    pub p_max: f64,
    /// Receiver noise power per user and subcarrier (W).
    pub noise_var: f64,
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        if !(self.f_c > 0.0) {
            return Err(Error::invalid("system.f_c", "must be > 0"));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth < 2.0 * self.f_c) {
            return Err(Error::invalid("system.bandwidth", "must be in (0, 2 f_c)"));
        }
        if !(self.p_max >= 0.0 && self.p_max.is_finite()) {
            return Err(Error::invalid("p_max", "must be finite and >= 0"));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(Error::invalid("system.noise_dbm", "noise power must be > 0"));
        }
        Ok(())
    }

    pub fn subcarrier_grid(&self) -> Vec<f64> {
        subcarrier_grid(self.f_c, self.bandwidth, self.dims.subcarriers)
    }
}

/// Centered uniform grid `f_k = f_c + (k - (K + 1) / 2) BW / K`, `k = 1..=K`.
pub fn subcarrier_grid(f_c: f64, bandwidth: f64, k: usize) -> Vec<f64> {
    let kf = k as f64;
    (1..=k)
        .map(|i| f_c + (i as f64 - (kf + 1.0) / 2.0) * bandwidth / kf)
        .collect()
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Precoding vectors `w[(b, u, k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub w: Grid3<CVec>,
}

impl PrecoderSet {
    pub fn zeros(dims: &Dims) -> Self {
        Self {
            w: Grid3::from_fn((dims.bs, dims.users, dims.subcarriers), |_, _, _| {
                DVector::zeros(dims.antennas)
            }),
        }
    }

    pub fn bs_count(&self) -> usize {
        self.w.dims().0
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.w.iter_mut() {
            *v *= Complex64::new(s, 0.0);
        }
    }
}

/// Total transmit power of BS `b`, summed in fixed `(u, k)` order.
pub fn tx_power(w: &PrecoderSet, b: usize) -> f64 {
    let (_, users, subcarriers) = w.w.dims();
    let mut p = 0.0;
    for u in 0..users {
        for k in 0..subcarriers {
            p += w.w[(b, u, k)].norm_squared();
        }
    }
    p
}

/// Composite channels `f[(b, u, k)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub f: Grid3<CVec>,
}

/// `f = h + sum_r H_r^H conj(phi_r) .* g_r` for one `(b, u, k)`, with the
/// RIS responses given as one stacked diagonal.
pub fn compose(channels: &ChannelRealization, b: usize, u: usize, k: usize, phi: &[Complex64]) -> CVec {
    let d = &channels.dims;
    let mut f = channels.h[(b, u, k)].clone();
    for r in 0..d.ris {
        let g = &channels.g[(r, u, k)];
        let v = CVec::from_iterator(
            d.elements,
            (0..d.elements).map(|m| phi[r * d.elements + m].conj() * g[m]),
        );
        f += channels.big_h[(b, r, k)].ad_mul(&v);
    }
    f
}

/// Effective channels when every BS link sees its own capacitor copy:
/// `f[(b, ., .)]` is built with `caps[b]`.
pub fn effective_channels_per_bs(
    channels: &ChannelRealization,
    caps: &[CapacitorVector],
    f_grid: &[f64],
    params: &CircuitParams,
) -> Result<EffectiveChannel> {
    let d = &channels.dims;
    if caps.len() != d.bs || f_grid.len() != d.subcarriers {
        return Err(Error::Dimension(format!(
            "expected {} capacitor copies and {} subcarrier frequencies",
            d.bs, d.subcarriers
        )));
    }
    if caps.iter().any(|c| c.len() != d.n_caps()) {
        return Err(Error::Dimension("capacitor vector length must be R*M".into()));
    }
    // phi depends on (b, k) only
    let phi = Grid3::try_from_fn((d.bs, d.subcarriers, 1), |b, k, _| build_phi(f_grid[k], &caps[b], params))?;
    Ok(EffectiveChannel {
        f: Grid3::from_fn((d.bs, d.users, d.subcarriers), |b, u, k| {
            compose(channels, b, u, k, &phi[(b, k, 0)])
        }),
    })
}

/// Effective channels for a single (physical) capacitor configuration.
pub fn effective_channels(
    channels: &ChannelRealization,
    caps: &CapacitorVector,
    f_grid: &[f64],
    params: &CircuitParams,
) -> Result<EffectiveChannel> {
    let copies = vec![caps.clone(); channels.dims.bs];
    effective_channels_per_bs(channels, &copies, f_grid, params)
}

/// Everything the per-BS solvers need to know about the current iterate,
/// reduced to scalars per user and subcarrier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStats {
    bs: usize,
    users: usize,
    subcarriers: usize,
    noise_var: f64,
    /// `f[(b, rx, k)]^H w[(b, stream, k)]`, indexed `[((b * U + rx) * U + stream) * K + k]`.
    contrib: Vec<Complex64>,
    /// Sum of `contrib` over base stations, indexed `[(rx * U + stream) * K + k]`.
    signal: Vec<Complex64>,
}

pub fn link_stats(eff: &EffectiveChannel, w: &PrecoderSet, noise_var: f64) -> Result<LinkStats> {
    let (bs, users, subcarriers) = eff.f.dims();
    if w.w.dims() != eff.f.dims() {
        return Err(Error::Dimension("precoders and effective channels disagree".into()));
    }
    let mut contrib = Vec::with_capacity(bs * users * users * subcarriers);
    for b in 0..bs {
        for rx in 0..users {
            for stream in 0..users {
                for k in 0..subcarriers {
                    contrib.push(eff.f[(b, rx, k)].dotc(&w.w[(b, stream, k)]));
                }
            }
        }
    }
    let mut signal = vec![Complex64::new(0.0, 0.0); users * users * subcarriers];
    for b in 0..bs {
        let base = b * users * users * subcarriers;
        for (s, c) in signal.iter_mut().zip(&contrib[base..base + users * users * subcarriers]) {
            *s += c;
        }
    }
    Ok(LinkStats {
        bs,
        users,
        subcarriers,
        noise_var,
        contrib,
        signal,
    })
}

impl LinkStats {
    pub fn bs_count(&self) -> usize {
        self.bs
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Received amplitude of stream `stream` at user `rx`, summed over BSs.
    pub fn signal(&self, rx: usize, stream: usize, k: usize) -> Complex64 {
        self.signal[(rx * self.users + stream) * self.subcarriers + k]
    }

    /// Contribution of BS `b` alone to [`Self::signal`].
    pub fn contribution(&self, b: usize, rx: usize, stream: usize, k: usize) -> Complex64 {
        self.contrib[((b * self.users + rx) * self.users + stream) * self.subcarriers + k]
    }

    /// `sum_{b' != b} f[(b', rx, k)]^H w[(b', stream, k)]`.
    pub fn other_bs_signal(&self, b: usize, rx: usize, stream: usize, k: usize) -> Complex64 {
        self.signal(rx, stream, k) - self.contribution(b, rx, stream, k)
    }

    pub fn beta(&self, u: usize, k: usize) -> Complex64 {
        self.signal(u, u, k)
    }

    /// Noise plus multi-user interference at user `u`.
    pub fn mui(&self, u: usize, k: usize) -> f64 {
        self.noise_var
            + (0..self.users)
                .filter(|&q| q != u)
                .map(|q| self.signal(u, q, k).norm_sqr())
                .sum::<f64>()
    }

    /// Total received power including noise, `mui + |beta|^2`.
    pub fn alpha(&self, u: usize, k: usize) -> f64 {
        self.mui(u, k) + self.f1(u, k)
    }

    pub fn snr(&self, u: usize, k: usize) -> f64 {
        self.f1(u, k) / self.mui(u, k)
    }

    pub fn f1(&self, u: usize, k: usize) -> f64 {
        self.beta(u, k).norm_sqr()
    }

    pub fn f2(&self, u: usize, k: usize) -> f64 {
        self.mui(u, k)
    }
}

/// Per-user rates `sum_k log2(1 + snr)` and their total, in bit/s/Hz
/// summed over subcarriers.
pub fn sum_rate(stats: &LinkStats) -> (Vec<f64>, f64) {
    let per_user: Vec<f64> = (0..stats.users)
        .map(|u| {
            (0..stats.subcarriers)
                .map(|k| (1.0 + stats.snr(u, k)).ln() / LN_2)
                .sum()
        })
        .collect();
    let total = per_user.iter().sum();
    (per_user, total)
}

/// Convenience: rate of the physical system for a capacitor configuration.
pub fn evaluate_sum_rate(
    channels: &ChannelRealization,
    caps: &CapacitorVector,
    w: &PrecoderSet,
    f_grid: &[f64],
    params: &CircuitParams,
    noise_var: f64,
) -> Result<(Vec<f64>, f64)> {
    let eff = effective_channels(channels, caps, f_grid, params)?;
    Ok(sum_rate(&link_stats(&eff, w, noise_var)?))
}
