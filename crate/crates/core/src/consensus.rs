//! Per-BS RIS subproblem and the consensus machinery that keeps the BS
//! copies of the capacitor vector in agreement.
//!
//! Every BS holds its own copy of the capacitors. The local gradient
//! differentiates the rates only through that BS's own composite channels
//! `f[(b, ., .)]`; the copies of the other BSs are held fixed. Summed over
//! BSs at consensus this is the gradient of the physical system, and the
//! tracker estimates exactly that network sum. All capacitor quantities
//! are in picofarads.

use std::collections::VecDeque;
use std::f64::consts::LN_2;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::circuit::{build_phi, build_phi_derivative, CapacitorVector, CircuitParams};
use crate::error::{Error, Result};
use crate::model::{CVec, LinkStats, PrecoderSet};

/// Relative size of the imaginary residue tolerated in the gradient assembly.
const IMAG_RESIDUE_TOL: f64 = 1e-9;

/// Communication graph between BSs with its mixing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusGraph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
    weights: DMatrix<f64>,
}

impl ConsensusGraph {
    pub fn complete(nodes: usize) -> Result<Self> {
        let edges = (0..nodes)
            .flat_map(|i| (i + 1..nodes).map(move |j| (i, j)))
            .collect::<Vec<_>>();
        metropolis_weights(&edges, nodes)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn weight(&self, b: usize, i: usize) -> f64 {
        self.weights[(b, i)]
    }

    /// Nodes with a nonzero weight in row `b`, including `b` itself.
    pub fn neighborhood(&self, b: usize) -> Vec<usize> {
        (0..self.nodes).filter(|&i| i == b || self.weights[(b, i)] > 0.0).collect()
    }

    /// Largest deviation of any row or column sum from one.
    pub fn stochasticity_error(&self) -> f64 {
        let rows = self.weights.row_iter().map(|r| (r.sum() - 1.0).abs());
        let cols = self.weights.column_iter().map(|c| (c.sum() - 1.0).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// Spectral norm of `V - 11^T / n`, which governs the consensus rate.
    pub fn mixing_rate(&self) -> f64 {
        let n = self.nodes;
        let centered = &self.weights - DMatrix::from_element(n, n, 1.0 / n as f64);
        centered.singular_values().max()
    }
}

/// Metropolis-Hastings weights `1 / (1 + max(deg_b, deg_i))` on the edges,
/// with the remainder of each row on the diagonal.
pub fn metropolis_weights(edges: &[(usize, usize)], nodes: usize) -> Result<ConsensusGraph> {
    if nodes == 0 {
        return Err(Error::invalid("graph.edges", "graph needs at least one node"));
    }
    let mut adj = vec![vec![false; nodes]; nodes];
    for &(i, j) in edges {
        if i >= nodes || j >= nodes || i == j {
            return Err(Error::invalid("graph.edges", format!("bad edge ({i}, {j})")));
        }
        adj[i][j] = true;
        adj[j][i] = true;
    }

    let mut seen = vec![false; nodes];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(v) = queue.pop_front() {
        for (w, &linked) in adj[v].iter().enumerate() {
            if linked && !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::invalid("graph.edges", "communication graph is disconnected"));
    }

    let deg: Vec<usize> = adj.iter().map(|row| row.iter().filter(|&&x| x).count()).collect();
    let mut weights = DMatrix::zeros(nodes, nodes);
    for b in 0..nodes {
        for i in 0..nodes {
            if adj[b][i] {
                weights[(b, i)] = 1.0 / (1.0 + deg[b].max(deg[i]) as f64);
            }
        }
        let off: f64 = (0..nodes).filter(|&i| i != b).map(|i| weights[(b, i)]).sum();
        weights[(b, b)] = 1.0 - off;
    }
    let mut edges: Vec<_> = edges.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
    edges.sort_unstable();
    edges.dedup();
    Ok(ConsensusGraph { nodes, edges, weights })
}

/// What a BS sends to its neighbors at the end of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessage {
    pub from: usize,
    pub tracker: Vec<f64>,
    pub caps: CapacitorVector,
}

fn check_inbox(graph: &ConsensusGraph, b: usize, inbox: &[RoundMessage]) -> Result<()> {
    let mut expected: Vec<usize> = graph.neighborhood(b).into_iter().filter(|&i| i != b).collect();
    let mut got: Vec<usize> = inbox.iter().map(|m| m.from).collect();
    expected.sort_unstable();
    got.sort_unstable();
    if expected != got {
        return Err(Error::Dimension(format!(
            "BS {b} expected messages from {expected:?}, got {got:?}"
        )));
    }
    Ok(())
}

/// `q_b <- sum_i V[b, i] q_i + grad_new - grad_prev`.
pub fn tracker_update(
    graph: &ConsensusGraph,
    b: usize,
    own_tracker: &[f64],
    inbox: &[RoundMessage],
    grad_new: &[f64],
    grad_prev: &[f64],
) -> Result<Vec<f64>> {
    check_inbox(graph, b, inbox)?;
    let n = own_tracker.len();
    if grad_new.len() != n || grad_prev.len() != n || inbox.iter().any(|m| m.tracker.len() != n) {
        return Err(Error::Dimension("tracker vectors must share one length".into()));
    }
    let mut sorted: Vec<&RoundMessage> = inbox.iter().collect();
    sorted.sort_by_key(|m| m.from);
    let mut out: Vec<f64> = own_tracker.iter().map(|q| graph.weight(b, b) * q).collect();
    for m in sorted {
        let v = graph.weight(b, m.from);
        for (o, q) in out.iter_mut().zip(&m.tracker) {
            *o += v * q;
        }
    }
    for ((o, gn), gp) in out.iter_mut().zip(grad_new).zip(grad_prev) {
        *o += gn - gp;
    }
    Ok(out)
}

/// Row `b` of `V` applied to the smoothed capacitor copies.
pub fn consensus_average(
    graph: &ConsensusGraph,
    b: usize,
    own: &CapacitorVector,
    inbox: &[RoundMessage],
) -> Result<CapacitorVector> {
    check_inbox(graph, b, inbox)?;
    if inbox.iter().any(|m| m.caps.len() != own.len()) {
        return Err(Error::Dimension("capacitor copies must share one length".into()));
    }
    let mut sorted: Vec<&RoundMessage> = inbox.iter().collect();
    sorted.sort_by_key(|m| m.from);
    let mut out: Vec<f64> = own.as_picofarads().iter().map(|c| graph.weight(b, b) * c).collect();
    for m in sorted {
        let v = graph.weight(b, m.from);
        for (o, c) in out.iter_mut().zip(m.caps.as_picofarads()) {
            *o += v * c;
        }
    }
    Ok(CapacitorVector::from_picofarads(out))
}

/// Applies [`consensus_average`] for every BS at once.
pub fn consensus_average_all(graph: &ConsensusGraph, copies: &[CapacitorVector]) -> Result<Vec<CapacitorVector>> {
    (0..graph.nodes())
        .map(|b| {
            let inbox: Vec<RoundMessage> = graph
                .neighborhood(b)
                .into_iter()
                .filter(|&i| i != b)
                .map(|i| RoundMessage {
                    from: i,
                    tracker: Vec::new(),
                    caps: copies[i].clone(),
                })
                .collect();
            consensus_average(graph, b, &copies[b], &inbox)
        })
        .collect()
}

/// Largest `|c_b - c_b'|_inf` over all pairs of copies.
pub fn disagreement(copies: &[CapacitorVector]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in copies.iter().enumerate() {
        for b in &copies[i + 1..] {
            for (x, y) in a.as_picofarads().iter().zip(b.as_picofarads()) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    worst
}

/// Optimizer memory of one BS for its capacitor copy.
#[derive(Debug, Clone, PartialEq)]
pub struct RisLocalState {
    pub caps: CapacitorVector,
    pub tracker: Vec<f64>,
    pub accum: Vec<f64>,
    pub pricing: Vec<f64>,
    pub gamma: Vec<f64>,
    pub grad_prev: Vec<f64>,
}

impl RisLocalState {
    pub fn new(caps: CapacitorVector) -> Self {
        let n = caps.len();
        Self {
            caps,
            tracker: vec![0.0; n],
            accum: vec![0.0; n],
            pricing: vec![0.0; n],
            gamma: vec![0.0; n],
            grad_prev: vec![0.0; n],
        }
    }
}

/// Pricing, accumulation and decoupling vectors of the capacitor block.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitorTerms {
    pub pricing: Vec<f64>,
    pub accum: Vec<f64>,
    pub gamma: Vec<f64>,
}

/// `pi = B q - grad`, `d <- (1 - rho) d + rho (pi + grad)` and `gamma = grad`.
/// Without cooperation the pricing is zero, so `d` accumulates the local
/// gradient alone.
pub fn price_and_accumulate_c(
    tracker: &[f64],
    grad_local: &[f64],
    accum_prev: &[f64],
    rho: f64,
    bs: usize,
    cooperation: bool,
) -> CapacitorTerms {
    let pricing: Vec<f64> = if cooperation {
        tracker.iter().zip(grad_local).map(|(q, g)| bs as f64 * q - g).collect()
    } else {
        vec![0.0; grad_local.len()]
    };
    let accum = accum_prev
        .iter()
        .zip(pricing.iter().zip(grad_local))
        .map(|(d, (p, g))| (1.0 - rho) * d + rho * (p + g))
        .collect();
    CapacitorTerms {
        pricing,
        accum,
        gamma: grad_local.to_vec(),
    }
}

fn caps_direction(terms: &CapacitorTerms, rho: f64) -> Vec<f64> {
    terms
        .gamma
        .iter()
        .zip(&terms.pricing)
        .zip(&terms.accum)
        .map(|((g, p), d)| rho * (g + p) + (1.0 - rho) * d)
        .collect()
}

/// Value of `<a, c - c^t> - tau/2 |c - c^t|^2` with
/// `a = rho (gamma + pi) + (1 - rho) d`.
pub fn caps_objective(current: &CapacitorVector, terms: &CapacitorTerms, rho: f64, tau: f64, c: &[f64]) -> f64 {
    let a = caps_direction(terms, rho);
    a.iter()
        .zip(c.iter().zip(current.as_picofarads()))
        .map(|(a, (x, x0))| a * (x - x0) - 0.5 * tau * (x - x0).powi(2))
        .sum()
}

/// Box-constrained maximizer of [`caps_objective`]: `clamp(c^t + a / tau)`.
pub fn solve_caps(
    current: &CapacitorVector,
    terms: &CapacitorTerms,
    rho: f64,
    tau: f64,
    params: &CircuitParams,
) -> CapacitorVector {
    let a = caps_direction(terms, rho);
    CapacitorVector::from_picofarads(
        current
            .as_picofarads()
            .iter()
            .zip(&a)
            .map(|(c, a)| params.clamp_pf(c + a / tau))
            .collect(),
    )
}

/// Per-subcarrier quantities entering the capacitor gradient of BS `b`.
#[derive(Debug, Clone)]
struct SubcarrierBlock {
    phi: Vec<Complex64>,
    /// d(phi)/dc per pF.
    dphi: Vec<Complex64>,
    /// Stacked RIS-UE channels, one per user.
    g: Vec<CVec>,
    /// `H_b w[(b, q, k)]`, one per stream.
    y: Vec<CVec>,
    /// `h[(b, u, k)]^H w[(b, q, k)]`, indexed `[u][q]`.
    direct: Vec<Vec<Complex64>>,
    /// Other BSs' contribution `r_{u,q}`, indexed `[u][q]`.
    others: Vec<Vec<Complex64>>,
}

/// Everything BS `b` needs to differentiate the rates with respect to its
/// capacitor copy: its own channels, its precoders, its copy, and the
/// scalar feedback of the other BSs' contributions.
#[derive(Debug, Clone)]
pub struct GradientWorkspace {
    users: usize,
    n_caps: usize,
    noise_var: f64,
    blocks: Vec<SubcarrierBlock>,
}

impl GradientWorkspace {
    pub fn build(
        channels: &ChannelRealization,
        b: usize,
        caps: &CapacitorVector,
        w: &PrecoderSet,
        stats: &LinkStats,
        f_grid: &[f64],
        params: &CircuitParams,
    ) -> Result<Self> {
        let d = channels.dims;
        if caps.len() != d.n_caps() || f_grid.len() != d.subcarriers {
            return Err(Error::Dimension("gradient workspace inputs disagree with the system size".into()));
        }
        let blocks = (0..d.subcarriers)
            .map(|k| {
                let hk = channels.stacked_bs_ris(b, k);
                Ok(SubcarrierBlock {
                    phi: build_phi(f_grid[k], caps, params)?,
                    dphi: build_phi_derivative(f_grid[k], caps, params)?,
                    g: (0..d.users).map(|u| channels.stacked_ris_ue(u, k)).collect(),
                    y: (0..d.users).map(|q| &hk * &w.w[(b, q, k)]).collect(),
                    direct: (0..d.users)
                        .map(|u| (0..d.users).map(|q| channels.h[(b, u, k)].dotc(&w.w[(b, q, k)])).collect())
                        .collect(),
                    others: (0..d.users)
                        .map(|u| (0..d.users).map(|q| stats.other_bs_signal(b, u, q, k)).collect())
                        .collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            users: d.users,
            n_caps: d.n_caps(),
            noise_var: stats.noise_var(),
            blocks,
        })
    }

    /// `g^H Phi y` for user `u` and stream `q`.
    fn ris_term(blk: &SubcarrierBlock, u: usize, q: usize) -> Complex64 {
        blk.g[u]
            .iter()
            .zip(&blk.phi)
            .zip(blk.y[q].iter())
            .map(|((g, p), y)| g.conj() * p * y)
            .sum()
    }

    /// Received amplitude `s_{u,q}` rebuilt from the workspace.
    fn amplitude(blk: &SubcarrierBlock, u: usize, q: usize) -> Complex64 {
        Self::ris_term(blk, u, q) + blk.direct[u][q] + blk.others[u][q]
    }

    /// Gradient of `|s_{u,q}|^2` assembled from the diagonals of
    /// `G Phi A_q` and `B_{u,q}`, with
    /// `A_q = H w_q w_q^H H^H`, `G = g_u g_u^H` and
    /// `B_{u,q} = H w_q (w_q^H h_u + r_{u,q}^*) g_u^H`. The two conjugate
    /// halves are summed separately; the result must be real.
    fn add_power_gradient(blk: &SubcarrierBlock, u: usize, q: usize, scale: f64, acc: &mut [Complex64]) {
        let ris = Self::ris_term(blk, u, q);
        let tail = (blk.direct[u][q] + blk.others[u][q]).conj();
        let (g, y) = (&blk.g[u], &blk.y[q]);
        for n in 0..acc.len() {
            let diag_gpa = g[n] * ris * y[n].conj();
            let diag_b = y[n] * g[n].conj() * tail;
            let first = blk.dphi[n].conj() * (diag_gpa + diag_b.conj());
            let second = blk.dphi[n] * (diag_gpa.conj() + diag_b);
            acc[n] += (first + second) * scale;
        }
    }

    fn finish(&self, raw: Vec<Complex64>) -> Result<Vec<f64>> {
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let imag = raw.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        if imag > IMAG_RESIDUE_TOL * norm.max(f64::MIN_POSITIVE) {
            return Err(Error::Consistency(format!(
                "capacitor gradient has imaginary residue {imag:e} (norm {norm:e})"
            )));
        }
        Ok(raw.into_iter().map(|z| z.re).collect())
    }

    /// Gradient of user `u`'s rate with respect to this BS's capacitors (per pF).
    pub fn grad_caps_user(&self, u: usize) -> Result<Vec<f64>> {
        let mut raw = vec![Complex64::new(0.0, 0.0); self.n_caps];
        let mut g1 = vec![Complex64::new(0.0, 0.0); self.n_caps];
        let mut g2 = vec![Complex64::new(0.0, 0.0); self.n_caps];
        for blk in &self.blocks {
            g1.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            g2.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            Self::add_power_gradient(blk, u, u, 1.0, &mut g1);
            let f1 = Self::amplitude(blk, u, u).norm_sqr();
            let mut f2 = self.noise_var;
            for q in (0..self.users).filter(|&q| q != u) {
                Self::add_power_gradient(blk, u, q, 1.0, &mut g2);
                f2 += Self::amplitude(blk, u, q).norm_sqr();
            }
            let scale = 1.0 / ((1.0 + f1 / f2) * f2 * f2) / LN_2;
            for n in 0..self.n_caps {
                raw[n] += (g1[n] * f2 - g2[n] * f1) * scale;
            }
        }
        self.finish(raw)
    }

    /// Gradient of the sum rate with respect to this BS's capacitors (per pF).
    pub fn grad_caps_total(&self) -> Result<Vec<f64>> {
        let mut total = vec![0.0; self.n_caps];
        for u in 0..self.users {
            for (t, g) in total.iter_mut().zip(self.grad_caps_user(u)?) {
                *t += g;
            }
        }
        Ok(total)
    }
}
