//! Per-BS precoder subproblem: SCA surrogate, pricing and accumulation,
//! the per-(user, subcarrier) concave quadratic, and the power bisection.
//!
//! Gradients with respect to a complex vector `w` are conjugate (Wirtinger)
//! gradients `d/dw*`, i.e. half of `d/dRe(w) + j d/dIm(w)`. Under this
//! convention the stationary point of `-w^H Q w + Re{q^H w} - lambda |w|^2`
//! is `w = (Q + lambda I)^-1 q / 2`.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CVec, EffectiveChannel, LinkStats};

const DEGENERATE_EPS: f64 = 1e-30;
const MAX_BISECTION_STEPS: usize = 200;
const MAX_BRACKET_DOUBLINGS: usize = 2000;

/// How the linear terms of the precoder subproblem are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearTermScaling {
    /// All surrogate-derived terms carry `rho`, and the pricing and
    /// accumulation inner products use the full first-order term
    /// `2 Re{g^H (w - w^t)}` of a conjugate gradient `g`.
    #[default]
    Consistent,
    /// The printed form: `2 (e - c r) f` without `rho`, and
    /// `Re{g^H (w - w^t)}` for pricing and accumulation.
    Printed,
}

/// SCA coefficients per `(u, k)`, stored `u`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateCoeffs {
    users: usize,
    subcarriers: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<Complex64>,
    pub c_coef: Vec<f64>,
    pub e_coef: Vec<Complex64>,
}

impl SurrogateCoeffs {
    fn idx(&self, u: usize, k: usize) -> usize {
        debug_assert!(u < self.users && k < self.subcarriers);
        u * self.subcarriers + k
    }

    pub fn alpha(&self, u: usize, k: usize) -> f64 {
        self.alpha[self.idx(u, k)]
    }

    pub fn beta(&self, u: usize, k: usize) -> Complex64 {
        self.beta[self.idx(u, k)]
    }

    pub fn c(&self, u: usize, k: usize) -> f64 {
        self.c_coef[self.idx(u, k)]
    }

    pub fn e(&self, u: usize, k: usize) -> Complex64 {
        self.e_coef[self.idx(u, k)]
    }
}

/// Minorizer coefficients of `log2(1 + |x|^2 / mui)` around `x = beta`.
pub fn surrogate_coeffs(stats: &LinkStats) -> Result<SurrogateCoeffs> {
    let (users, subcarriers) = (stats.users(), stats.subcarriers());
    let n = users * subcarriers;
    let mut out = SurrogateCoeffs {
        users,
        subcarriers,
        alpha: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        c_coef: Vec::with_capacity(n),
        e_coef: Vec::with_capacity(n),
    };
    for u in 0..users {
        for k in 0..subcarriers {
            let beta = stats.beta(u, k);
            let b2 = beta.norm_sqr();
            let alpha = stats.mui(u, k) + b2;
            let gap = alpha - b2;
            if !(gap >= DEGENERATE_EPS) {
                return Err(Error::Degenerate(format!(
                    "alpha - |beta|^2 = {gap} for user {u}, subcarrier {k}"
                )));
            }
            out.alpha.push(alpha);
            out.beta.push(beta);
            out.c_coef.push(b2 / (alpha * gap) / LN_2);
            out.e_coef.push((beta / alpha) / (1.0 - b2 / alpha) / LN_2);
        }
    }
    Ok(out)
}

/// Conjugate gradient of the other users' rates with respect to
/// `w[(b, u, k)]`.
pub fn pricing_w(stats: &LinkStats, eff: &EffectiveChannel, b: usize, u: usize, k: usize) -> CVec {
    let n = eff.f[(b, u, k)].len();
    let mut pi = DVector::zeros(n);
    for q in (0..stats.users()).filter(|&q| q != u) {
        let snr = stats.snr(q, k);
        let mui = stats.mui(q, k);
        // f_{b,q}^H w_{b,u} + r_{q,u}
        let s = stats.contribution(b, q, u, k) + stats.other_bs_signal(b, q, u, k);
        let coef = -snr * s / ((1.0 + snr) * mui) / LN_2;
        pi.axpy(coef, &eff.f[(b, q, k)], Complex64::new(1.0, 0.0));
    }
    pi
}

/// Conjugate gradient of user `u`'s own rate with respect to `w[(b, u, k)]`.
pub fn own_rate_gradient(stats: &LinkStats, eff: &EffectiveChannel, b: usize, u: usize, k: usize) -> CVec {
    let snr = stats.snr(u, k);
    let mui = stats.mui(u, k);
    let s = stats.contribution(b, u, u, k) + stats.other_bs_signal(b, u, u, k);
    &eff.f[(b, u, k)] * (s / ((1.0 + snr) * mui) / LN_2)
}

/// `d <- (1 - rho) d + rho (pricing + own)`.
pub fn accum_w_update(d_prev: &CVec, pricing: &CVec, own_grad: &CVec, rho: f64) -> CVec {
    d_prev * Complex64::new(1.0 - rho, 0.0) + (pricing + own_grad) * Complex64::new(rho, 0.0)
}

/// Optimizer memory of one BS for its precoders, indexed `u`-major over `(u, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderLocalState {
    pub subcarriers: usize,
    pub d_w: Vec<CVec>,
    pub pi_w: Vec<CVec>,
}

impl PrecoderLocalState {
    pub fn new(users: usize, subcarriers: usize, antennas: usize) -> Self {
        Self {
            subcarriers,
            d_w: vec![DVector::zeros(antennas); users * subcarriers],
            pi_w: vec![DVector::zeros(antennas); users * subcarriers],
        }
    }

    pub fn idx(&self, u: usize, k: usize) -> usize {
        u * self.subcarriers + k
    }
}

/// Everything that defines the local surrogate objective of one `(u, k)` block.
#[derive(Debug, Clone)]
pub struct BlockTerms<'a> {
    pub c: f64,
    pub e: Complex64,
    pub f: &'a CVec,
    /// Desired-signal contribution of the other BSs, `r_{u,k}`.
    pub r: Complex64,
    pub pricing: &'a CVec,
    pub accum: &'a CVec,
    pub w_prev: &'a CVec,
    pub rho: f64,
    pub tau: f64,
    pub scaling: LinearTermScaling,
}

/// Concave quadratic `-w^H Q w + Re{q^H w}` of one `(u, k)` block.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub q_mat: DMatrix<Complex64>,
    pub q_vec: CVec,
    eigvals: DVector<f64>,
    /// `|v_i^H q|^2` for each eigenvector `v_i`.
    proj_sq: Vec<f64>,
    eigvecs: DMatrix<Complex64>,
}

pub fn assemble_subproblem(t: &BlockTerms<'_>) -> Subproblem {
    let n = t.f.len();
    let one = Complex64::new(1.0, 0.0);
    let ff = t.f * t.f.adjoint();
    let q_mat = ff * Complex64::new(t.rho * t.c, 0.0) + DMatrix::identity(n, n) * Complex64::new(t.tau / 2.0, 0.0);

    let lin = (t.e - t.c * t.r) * 2.0;
    let (surrogate_w, pricing_w, accum_w) = match t.scaling {
        LinearTermScaling::Consistent => (t.rho, 2.0 * t.rho, 2.0 * (1.0 - t.rho)),
        LinearTermScaling::Printed => (1.0, t.rho, 1.0 - t.rho),
    };
    let mut q_vec = t.f * (lin * surrogate_w);
    q_vec.axpy(Complex64::new(pricing_w, 0.0), t.pricing, one);
    q_vec.axpy(Complex64::new(accum_w, 0.0), t.accum, one);
    q_vec.axpy(Complex64::new(t.tau, 0.0), t.w_prev, one);
    Subproblem::new(q_mat, q_vec)
}

impl Subproblem {
    pub fn new(q_mat: DMatrix<Complex64>, q_vec: CVec) -> Self {
        let eig = SymmetricEigen::new(q_mat.clone());
        let proj_sq = (0..eig.eigenvalues.len())
            .map(|i| eig.eigenvectors.column(i).dotc(&q_vec).norm_sqr())
            .collect();
        Self {
            q_mat,
            q_vec,
            eigvals: eig.eigenvalues,
            proj_sq,
            eigvecs: eig.eigenvectors,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigvals.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigvals.max()
    }

    /// `|w(lambda)|^2` from the eigen-decomposition.
    pub fn power(&self, lambda: f64) -> f64 {
        self.eigvals
            .iter()
            .zip(&self.proj_sq)
            .map(|(mu, p)| 0.25 * p / (mu + lambda).powi(2))
            .sum()
    }

    /// `w(lambda)` from the eigen-decomposition.
    pub fn solution(&self, lambda: f64) -> CVec {
        let mut w = DVector::zeros(self.q_vec.len());
        for i in 0..self.eigvals.len() {
            let v = self.eigvecs.column(i);
            let coef = v.dotc(&self.q_vec) / (2.0 * (self.eigvals[i] + lambda));
            w.axpy(coef, &v, Complex64::new(1.0, 0.0));
        }
        w
    }

    /// Value of `-w^H Q w + Re{q^H w}`.
    pub fn value(&self, w: &CVec) -> f64 {
        -(w.dotc(&(&self.q_mat * w))).re + self.q_vec.dotc(w).re
    }
}

/// Local surrogate of one `(u, k)` block evaluated from its definition,
/// up to a constant that does not depend on `w`.
pub fn surrogate_objective(t: &BlockTerms<'_>, w: &CVec) -> f64 {
    let x = t.f.dotc(w) + t.r;
    let s = -t.c * x.norm_sqr() + 2.0 * (t.e.conj() * x).re;
    let dw = w - t.w_prev;
    let pi_term = t.pricing.dotc(&dw).re;
    let d_term = t.accum.dotc(&dw).re;
    let prox = -0.5 * t.tau * dw.norm_squared();
    match t.scaling {
        LinearTermScaling::Consistent => t.rho * s + 2.0 * t.rho * pi_term + 2.0 * (1.0 - t.rho) * d_term + prox,
        LinearTermScaling::Printed => {
            // only the quadratic part of the surrogate carries rho
            let quad = -t.c * t.f.dotc(w).norm_sqr();
            let linear = s + t.c * t.f.dotc(w).norm_sqr();
            t.rho * quad + linear + t.rho * pi_term + (1.0 - t.rho) * d_term + prox
        }
    }
}

/// `(1/2) (Q + lambda I)^-1 q` by LU.
pub fn solve_precoder(q_mat: &DMatrix<Complex64>, q_vec: &CVec, lambda: f64) -> Result<CVec> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda", "must be >= 0"));
    }
    let n = q_vec.len();
    let a = q_mat + DMatrix::identity(n, n) * Complex64::new(lambda, 0.0);
    a.lu()
        .solve(q_vec)
        .map(|x| x * Complex64::new(0.5, 0.0))
        .ok_or_else(|| Error::Degenerate("singular precoder system".into()))
}

#[derive(Debug, Clone)]
pub struct PowerSolution {
    pub lambda: f64,
    pub w: Vec<CVec>,
    pub power: f64,
}

fn total_power(subs: &[Subproblem], lambda: f64) -> f64 {
    subs.iter().map(|s| s.power(lambda)).sum()
}

/// Finds the multiplier of the per-BS power budget shared by all blocks:
/// `lambda = 0` if the unconstrained solutions fit, otherwise the bracketed
/// and bisected `lambda` whose power lies within `rel_tol * p_max` below the
/// budget.
pub fn bisect_power(subs: &[Subproblem], p_max: f64, rel_tol: f64) -> Result<PowerSolution> {
    if !(p_max >= 0.0) {
        return Err(Error::invalid("p_max", "must be >= 0"));
    }
    let zeros = || subs.iter().map(|s| DVector::zeros(s.q_vec.len())).collect();
    if subs.iter().any(|s| s.min_eigenvalue() <= 0.0) {
        return Err(Error::Degenerate("precoder quadratic is not positive definite".into()));
    }
    let p0 = total_power(subs, 0.0);
    if p0 <= p_max {
        return Ok(PowerSolution {
            lambda: 0.0,
            w: subs.iter().map(|s| s.solution(0.0)).collect(),
            power: p0,
        });
    }
    if p_max == 0.0 {
        return Ok(PowerSolution {
            lambda: f64::INFINITY,
            w: zeros(),
            power: 0.0,
        });
    }

    let mut lo = 0.0;
    let mut hi = subs.iter().map(|s| s.max_eigenvalue()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut doublings = 0;
    while total_power(subs, hi) > p_max {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS || !hi.is_finite() {
            return Err(Error::IterationLimit {
                what: "power multiplier bracketing",
                iterations: doublings,
            });
        }
    }
    let tol = rel_tol * p_max;
    for _ in 0..MAX_BISECTION_STEPS {
        let p_hi = total_power(subs, hi);
        if p_max - p_hi <= tol {
            return Ok(PowerSolution {
                lambda: hi,
                w: subs.iter().map(|s| s.solution(hi)).collect(),
                power: p_hi,
            });
        }
        let mid = 0.5 * (lo + hi);
        if total_power(subs, mid) > p_max {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::IterationLimit {
        what: "power multiplier bisection",
        iterations: MAX_BISECTION_STEPS,
    })
}
