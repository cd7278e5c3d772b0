//! Node placement, pathloss and wideband Rayleigh channel generation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Dims;
use crate::rng::rng_from;
use crate::tensor::Grid3;

pub type Point3 = [f64; 3];

/// A disc of users at a fixed height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cluster {
    /// (x, y) of the disc center (m).
    pub center: [f64; 2],
    pub radius: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub bs_positions: Vec<Point3>,
    pub ris_positions: Vec<Point3>,
    pub clusters: Vec<Cluster>,
    pub ue_height: f64,
}

impl GeometrySpec {
    /// BS `b` at `(50 b, 0, 5)`, RISs along `y = 60`, users split evenly
    /// between two discs of radius 2 m at height 1.5 m.
    pub fn reference(dims: &Dims) -> Self {
        let bs_positions = (0..dims.bs).map(|b| [50.0 * b as f64, 0.0, 5.0]).collect();
        let ris_positions = (0..dims.ris).map(|r| [65.0 + 20.0 * r as f64, 60.0, 6.0]).collect();
        let first = dims.users.div_ceil(2);
        let mut clusters = vec![Cluster {
            center: [67.5, 57.5],
            radius: 2.0,
            count: first,
        }];
        if dims.users > first {
            clusters.push(Cluster {
                center: [82.5, 57.5],
                radius: 2.0,
                count: dims.users - first,
            });
        }
        Self {
            bs_positions,
            ris_positions,
            clusters,
            ue_height: 1.5,
        }
    }

    pub fn validate(&self, dims: &Dims) -> Result<()> {
        if self.bs_positions.len() != dims.bs {
            return Err(Error::invalid(
                "geometry.bs_positions",
                format!("expected {} positions, got {}", dims.bs, self.bs_positions.len()),
            ));
        }
        if self.ris_positions.len() != dims.ris {
            return Err(Error::invalid(
                "geometry.ris_positions",
                format!("expected {} positions, got {}", dims.ris, self.ris_positions.len()),
            ));
        }
        let total: usize = self.clusters.iter().map(|c| c.count).sum();
        if total != dims.users {
            return Err(Error::invalid(
                "geometry.clusters",
                format!("cluster counts sum to {total}, expected {} users", dims.users),
            ));
        }
        if self.clusters.iter().any(|c| !(c.radius >= 0.0 && c.radius.is_finite())) {
            return Err(Error::invalid("geometry.clusters", "radius must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub bs: Vec<Point3>,
    pub ris: Vec<Point3>,
    pub ue: Vec<Point3>,
}

fn distance(a: &Point3, b: &Point3) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let pairs = self
            .bs
            .iter()
            .flat_map(|b| self.ue.iter().chain(&self.ris).map(move |x| distance(b, x)))
            .chain(self.ris.iter().flat_map(|r| self.ue.iter().map(move |u| distance(r, u))));
        for d in pairs {
            if !(d > 0.0) {
                return Err(Error::invalid("geometry", "nodes must not coincide"));
            }
        }
        Ok(())
    }
}

/// Copies fixed node positions and scatters users uniformly (by area)
/// inside their cluster discs.
pub fn build_geometry(seed: u64, spec: &GeometrySpec, dims: &Dims) -> Result<Geometry> {
    spec.validate(dims)?;
    let mut rng = rng_from(seed);
    let mut ue = Vec::with_capacity(dims.users);
    for cluster in &spec.clusters {
        for _ in 0..cluster.count {
            let rad = cluster.radius * rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * rng.random::<f64>();
            ue.push([
                cluster.center[0] + rad * theta.cos(),
                cluster.center[1] + rad * theta.sin(),
                spec.ue_height,
            ]);
        }
    }
    let geometry = Geometry {
        bs: spec.bs_positions.clone(),
        ris: spec.ris_positions.clone(),
        ue,
    };
    geometry.validate()?;
    Ok(geometry)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkType {
    BsUe,
    BsRis,
    RisUe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathlossModel {
    pub pl0_db: f64,
    pub d0: f64,
    pub exp_bs_ue: f64,
    pub exp_bs_ris: f64,
    pub exp_ris_ue: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            pl0_db: -30.0,
            d0: 1.0,
            exp_bs_ue: 3.8,
            exp_bs_ris: 2.4,
            exp_ris_ue: 2.2,
        }
    }
}

impl PathlossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) {
            return Err(Error::invalid("pathloss.d0", "must be > 0"));
        }
        for (key, v) in [
            ("pathloss.exp_bs_ue", self.exp_bs_ue),
            ("pathloss.exp_bs_ris", self.exp_bs_ris),
            ("pathloss.exp_ris_ue", self.exp_ris_ue),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(key, "must be > 0"));
            }
        }
        if !self.pl0_db.is_finite() {
            return Err(Error::invalid("pathloss.pl0_db", "must be finite"));
        }
        Ok(())
    }

    pub fn exponent(&self, link: LinkType) -> f64 {
        match link {
            LinkType::BsUe => self.exp_bs_ue,
            LinkType::BsRis => self.exp_bs_ris,
            LinkType::RisUe => self.exp_ris_ue,
        }
    }
}

/// Linear power gain `PL0 (d / d0)^-alpha`.
pub fn pathloss(d: f64, link: LinkType, model: &PathlossModel) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Degenerate(format!("pathloss distance must be positive, got {d}")));
    }
    Ok(10f64.powf(model.pl0_db / 10.0) * (d / model.d0).powf(-model.exponent(link)))
}

/// Frequency-domain structure of the small-scale fading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingModel {
    /// Number of equal-power delay taps.
    pub taps: usize,
    /// Draw every subcarrier independently instead of using the tap model.
    pub iid_subcarriers: bool,
}

impl Default for FadingModel {
    fn default() -> Self {
        Self {
            taps: 4,
            iid_subcarriers: false,
        }
    }
}

impl FadingModel {
    pub fn validate(&self, subcarriers: usize) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::invalid("channel.taps", "must be >= 1"));
        }
        if self.taps > subcarriers && !self.iid_subcarriers {
            return Err(Error::invalid(
                "channel.taps",
                format!("must not exceed the number of subcarriers ({subcarriers})"),
            ));
        }
        Ok(())
    }
}

/// All channel coefficients of one realization.
///
/// `h[(b, u, k)]` is `N`, `big_h[(b, r, k)]` is `M x N` and `g[(r, u, k)]` is `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub dims: Dims,
    pub h: Grid3<DVector<Complex64>>,
    pub big_h: Grid3<DMatrix<Complex64>>,
    pub g: Grid3<DVector<Complex64>>,
}

impl ChannelRealization {
    pub fn check_dims(&self) -> Result<()> {
        let d = &self.dims;
        let ok = self.h.dims() == (d.bs, d.users, d.subcarriers)
            && self.big_h.dims() == (d.bs, d.ris, d.subcarriers)
            && self.g.dims() == (d.ris, d.users, d.subcarriers)
            && self.h.iter().all(|v| v.len() == d.antennas)
            && self.big_h.iter().all(|m| m.shape() == (d.elements, d.antennas))
            && self.g.iter().all(|v| v.len() == d.elements);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension("channel tensors do not match the system dimensions".into()))
        }
    }

    pub fn is_finite(&self) -> bool {
        let fin = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        self.h.iter().all(|v| v.iter().all(fin))
            && self.big_h.iter().all(|m| m.iter().all(fin))
            && self.g.iter().all(|v| v.iter().all(fin))
    }

    /// The `RM x N` stack of all BS-RIS matrices of BS `b` at subcarrier `k`.
    pub fn stacked_bs_ris(&self, b: usize, k: usize) -> DMatrix<Complex64> {
        let d = &self.dims;
        let mut out = DMatrix::zeros(d.ris * d.elements, d.antennas);
        for r in 0..d.ris {
            out.rows_mut(r * d.elements, d.elements).copy_from(&self.big_h[(b, r, k)]);
        }
        out
    }

    /// The `RM` stack of all RIS-UE vectors of user `u` at subcarrier `k`.
    pub fn stacked_ris_ue(&self, u: usize, k: usize) -> DVector<Complex64> {
        let d = &self.dims;
        let mut out = DVector::zeros(d.ris * d.elements);
        for r in 0..d.ris {
            out.rows_mut(r * d.elements, d.elements).copy_from(&self.g[(r, u, k)]);
        }
        out
    }
}

pub(crate) fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Frequency responses of one scalar link on all subcarriers.
fn draw_link<R: Rng>(rng: &mut R, gain: f64, fading: &FadingModel, k: usize, out: &mut [Complex64]) {
    if fading.iid_subcarriers {
        for x in out.iter_mut() {
            *x = complex_gaussian(rng, gain);
        }
        return;
    }
    let taps: Vec<Complex64> = (0..fading.taps)
        .map(|_| complex_gaussian(rng, gain / fading.taps as f64))
        .collect();
    for (sc, x) in out.iter_mut().enumerate() {
        *x = taps
            .iter()
            .enumerate()
            .map(|(l, t)| t * Complex64::from_polar(1.0, -2.0 * PI * (l * sc) as f64 / k as f64))
            .sum();
    }
}

/// Draws one wideband Rayleigh realization. Each scalar link gets
/// `fading.taps` i.i.d. taps sharing the pathloss gain, mapped to the
/// subcarriers with a `K`-point DFT.
pub fn draw_channels(
    seed: u64,
    geometry: &Geometry,
    model: &PathlossModel,
    fading: &FadingModel,
    dims: &Dims,
) -> Result<ChannelRealization> {
    fading.validate(dims.subcarriers)?;
    let k = dims.subcarriers;
    let mut rng = rng_from(seed);
    let mut buf = vec![Complex64::new(0.0, 0.0); k];

    let mut h = Grid3::from_fn((dims.bs, dims.users, k), |_, _, _| DVector::zeros(dims.antennas));
    for b in 0..dims.bs {
        for u in 0..dims.users {
            let gain = pathloss(distance(&geometry.bs[b], &geometry.ue[u]), LinkType::BsUe, model)?;
            for n in 0..dims.antennas {
                draw_link(&mut rng, gain, fading, k, &mut buf);
                for (sc, &x) in buf.iter().enumerate() {
                    h[(b, u, sc)][n] = x;
                }
            }
        }
    }

    let mut big_h = Grid3::from_fn((dims.bs, dims.ris, k), |_, _, _| {
        DMatrix::zeros(dims.elements, dims.antennas)
    });
    for b in 0..dims.bs {
        for r in 0..dims.ris {
            let gain = pathloss(distance(&geometry.bs[b], &geometry.ris[r]), LinkType::BsRis, model)?;
            for m in 0..dims.elements {
                for n in 0..dims.antennas {
                    draw_link(&mut rng, gain, fading, k, &mut buf);
                    for (sc, &x) in buf.iter().enumerate() {
                        big_h[(b, r, sc)][(m, n)] = x;
                    }
                }
            }
        }
    }

    let mut g = Grid3::from_fn((dims.ris, dims.users, k), |_, _, _| DVector::zeros(dims.elements));
    for r in 0..dims.ris {
        for u in 0..dims.users {
            let gain = pathloss(distance(&geometry.ris[r], &geometry.ue[u]), LinkType::RisUe, model)?;
            for m in 0..dims.elements {
                draw_link(&mut rng, gain, fading, k, &mut buf);
                for (sc, &x) in buf.iter().enumerate() {
                    g[(r, u, sc)][m] = x;
                }
            }
        }
    }

    Ok(ChannelRealization {
        dims: *dims,
        h,
        big_h,
        g,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsiErrorModel {
    /// Error variance relative to the squared magnitude of each coefficient.
    pub delta: f64,
}

impl Default for CsiErrorModel {
    fn default() -> Self {
        Self { delta: 0.2 }
    }
}

impl CsiErrorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("csi.delta", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Returns a noisy copy where every coefficient `x` becomes `x + e`,
/// `e ~ CN(0, delta |x|^2)`, independently per entry.
pub fn perturb_csi(seed: u64, channels: &ChannelRealization, err: &CsiErrorModel) -> ChannelRealization {
    let mut out = channels.clone();
    if err.delta == 0.0 {
        return out;
    }
    let mut rng = rng_from(seed);
    let mut perturb = |x: &mut Complex64| {
        let e = complex_gaussian(&mut rng, err.delta * x.norm_sqr());
        *x += e;
    };
    out.h.iter_mut().flat_map(|v| v.iter_mut()).for_each(&mut perturb);
    out.big_h.iter_mut().flat_map(|m| m.iter_mut()).for_each(&mut perturb);
    out.g.iter_mut().flat_map(|v| v.iter_mut()).for_each(&mut perturb);
    out
}
