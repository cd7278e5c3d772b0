//! The distributed algorithm: per-BS agents run synchronous rounds of
//! precoder and capacitor best responses, smoothing, gradient tracking and
//! capacitor consensus.
//!
//! A round `t` proceeds as follows. Each BS draws a fresh noisy channel
//! sample, receives the scalar cross terms of the current iterate, mixes
//! its neighbors' trackers from the previous round into its own, solves
//! both local subproblems and smooths toward the best response. The
//! smoothed capacitor copy and the tracker are then sent to the neighbors,
//! which average the copies. The trace is recorded on the true channels.

use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{perturb_csi, ChannelRealization, CsiErrorModel};
use crate::circuit::{CapacitorVector, CircuitParams};
use crate::consensus::{
    caps_objective, consensus_average, disagreement, price_and_accumulate_c, solve_caps, tracker_update,
    ConsensusGraph, GradientWorkspace, RisLocalState, RoundMessage,
};
use crate::error::{Error, Result};
use crate::model::{
    effective_channels_per_bs, evaluate_sum_rate, link_stats, tx_power, CVec, EffectiveChannel, LinkStats,
    PrecoderSet, SystemConfig,
};
use crate::precoder::{
    accum_w_update, assemble_subproblem, bisect_power, own_rate_gradient, pricing_w, surrogate_coeffs, BlockTerms,
    LinearTermScaling, PrecoderLocalState,
};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgoParams {
    pub tau: f64,
    pub epsilon: f64,
    pub t_max: usize,
    /// Pricing on; off reproduces the selfish (no cooperation) design.
    pub cooperation: bool,
    /// Averaging of the capacitor copies after each round.
    pub consensus_enabled: bool,
    /// Off keeps the initial capacitors and optimizes precoders only.
    pub optimize_caps: bool,
    pub rho_exponent: f64,
    pub scaling: LinearTermScaling,
    /// Relative accuracy of the per-BS power multiplier search.
    pub power_tol: f64,
}

impl Default for AlgoParams {
    fn default() -> Self {
        Self {
            tau: 1e-2,
            epsilon: 1e-3,
            t_max: 2000,
            cooperation: true,
            consensus_enabled: true,
            optimize_caps: true,
            rho_exponent: 0.99,
            scaling: LinearTermScaling::Consistent,
            power_tol: 1e-10,
        }
    }
}

impl AlgoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("algorithm.tau", "must be > 0"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid("algorithm.epsilon", "must be > 0"));
        }
        if self.t_max == 0 {
            return Err(Error::invalid("algorithm.t_max", "must be >= 1"));
        }
        if !(self.rho_exponent > 0.5 && self.rho_exponent <= 1.0) {
            return Err(Error::invalid("algorithm.rho_exponent", "must be in (0.5, 1]"));
        }
        if !(self.power_tol > 0.0 && self.power_tol < 1e-2) {
            return Err(Error::invalid("algorithm.power_tol", "must be in (0, 1e-2)"));
        }
        Ok(())
    }
}

/// `(rho_t, alpha_t)`: `rho_0 = 1`, `rho_t = (t + 2)^-e` afterwards and
/// `alpha_t = 1 / (t + 2)`.
pub fn step_sizes(t: usize, params: &AlgoParams) -> (f64, f64) {
    let s = t as f64 + 2.0;
    let rho = if t == 0 { 1.0 } else { s.powf(-params.rho_exponent) };
    (rho, 1.0 / s)
}

/// Everything fixed during a run besides the true channels.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub system: SystemConfig,
    pub circuit: CircuitParams,
    pub csi: CsiErrorModel,
    pub graph: ConsensusGraph,
    pub params: AlgoParams,
    /// Off leaves `wall_ms` at zero so traces are reproducible bit for bit.
    pub record_wall_time: bool,
}

impl RunSetup {
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.circuit.validate()?;
        self.csi.validate()?;
        self.params.validate()?;
        if self.graph.nodes() != self.system.dims.bs {
            return Err(Error::Dimension(format!(
                "graph has {} nodes for {} base stations",
                self.graph.nodes(),
                self.system.dims.bs
            )));
        }
        Ok(())
    }
}

/// Optimizer state held by one BS.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub b: usize,
    /// Own precoders, `u`-major over `(u, k)`.
    pub w: Vec<CVec>,
    pub precoder: PrecoderLocalState,
    pub ris: RisLocalState,
    /// Neighbor messages of the previous round.
    pub inbox: Vec<RoundMessage>,
}

fn precoder_set(agents: &[AgentState], setup: &RunSetup) -> PrecoderSet {
    let d = setup.system.dims;
    let mut set = PrecoderSet::zeros(&d);
    for a in agents {
        for u in 0..d.users {
            for k in 0..d.subcarriers {
                set.w[(a.b, u, k)] = a.w[u * d.subcarriers + k].clone();
            }
        }
    }
    set
}

fn copies(agents: &[AgentState]) -> Vec<CapacitorVector> {
    agents.iter().map(|a| a.ris.caps.clone()).collect()
}

fn sample_seed(seed: u64, t: usize, b: usize) -> u64 {
    derive_seed(seed, &[stream::CSI, t as u64, b as u64])
}

/// Agents with every capacitor copy at `caps0` and matched-filter precoders
/// on a noisy sample, scaled so each BS spends exactly its budget split
/// evenly over its `(u, k)` blocks.
pub fn initialize(
    seed: u64,
    setup: &RunSetup,
    channels: &ChannelRealization,
    caps0: &CapacitorVector,
) -> Result<Vec<AgentState>> {
    setup.validate()?;
    caps0.validate(&setup.circuit)?;
    let d = setup.system.dims;
    if caps0.len() != d.n_caps() {
        return Err(Error::Dimension("initial capacitor vector must have R*M entries".into()));
    }
    let grid = setup.system.subcarrier_grid();
    let blocks = (d.users * d.subcarriers) as f64;
    let amp = (setup.system.p_max / blocks).sqrt();
    (0..d.bs)
        .map(|b| {
            let sample = perturb_csi(derive_seed(seed, &[stream::INIT, b as u64]), channels, &setup.csi);
            let eff = effective_channels_per_bs(&sample, &vec![caps0.clone(); d.bs], &grid, &setup.circuit)?;
            let w = (0..d.users)
                .flat_map(|u| (0..d.subcarriers).map(move |k| (u, k)))
                .map(|(u, k)| {
                    let f = &eff.f[(b, u, k)];
                    let norm = f.norm();
                    if norm > 0.0 {
                        f * Complex64::new(amp / norm, 0.0)
                    } else {
                        let mut e = DVector::zeros(d.antennas);
                        e[0] = Complex64::new(amp, 0.0);
                        e
                    }
                })
                .collect();
            let inbox = setup
                .graph
                .neighborhood(b)
                .into_iter()
                .filter(|&i| i != b)
                .map(|i| RoundMessage {
                    from: i,
                    tracker: vec![0.0; d.n_caps()],
                    caps: caps0.clone(),
                })
                .collect();
            Ok(AgentState {
                b,
                w,
                precoder: PrecoderLocalState::new(d.users, d.subcarriers, d.antennas),
                ris: RisLocalState::new(caps0.clone()),
                inbox,
            })
        })
        .collect()
}

/// What BS `b` may read during a round: its own noisy sample (only its own
/// links and the RIS-UE links are touched), its own composite channels, and
/// the scalar cross terms of the current iterate.
#[derive(Debug, Clone, Copy)]
pub struct LocalView<'a> {
    pub b: usize,
    pub sample: &'a ChannelRealization,
    pub eff: &'a EffectiveChannel,
    pub stats: &'a LinkStats,
}

/// Per-BS diagnostics of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentReport {
    /// Surrogate increase of the best response over the current iterate.
    pub surrogate_gain: f64,
    pub lambda: f64,
    /// Power of the best response before smoothing.
    pub solver_power: f64,
    pub pricing_norm: f64,
    pub grad: Vec<f64>,
}

/// Local best response and smoothing of one BS. Returns the outgoing
/// message; the capacitor copy in `state` is the smoothed, pre-consensus
/// value.
pub fn agent_step(
    view: LocalView<'_>,
    state: &mut AgentState,
    setup: &RunSetup,
    rho: f64,
    alpha: f64,
) -> Result<(RoundMessage, AgentReport)> {
    let d = setup.system.dims;
    let p = &setup.params;
    let b = view.b;
    let grid = setup.system.subcarrier_grid();
    let mut pricing_sq = 0.0;

    // precoder block
    let coeffs = surrogate_coeffs(view.stats)?;
    let mut subs = Vec::with_capacity(d.users * d.subcarriers);
    for u in 0..d.users {
        for k in 0..d.subcarriers {
            let i = state.precoder.idx(u, k);
            let own = own_rate_gradient(view.stats, view.eff, b, u, k);
            let pricing = if p.cooperation {
                pricing_w(view.stats, view.eff, b, u, k)
            } else {
                DVector::zeros(d.antennas)
            };
            pricing_sq += pricing.norm_squared();
            state.precoder.d_w[i] = accum_w_update(&state.precoder.d_w[i], &pricing, &own, rho);
            state.precoder.pi_w[i] = pricing;
            let terms = BlockTerms {
                c: coeffs.c(u, k),
                e: coeffs.e(u, k),
                f: &view.eff.f[(b, u, k)],
                r: view.stats.other_bs_signal(b, u, u, k),
                pricing: &state.precoder.pi_w[i],
                accum: &state.precoder.d_w[i],
                w_prev: &state.w[i],
                rho,
                tau: p.tau,
                scaling: p.scaling,
            };
            subs.push(assemble_subproblem(&terms));
        }
    }
    let sol = bisect_power(&subs, setup.system.p_max, p.power_tol)?;
    let mut gain: f64 = subs
        .iter()
        .zip(sol.w.iter().zip(&state.w))
        .map(|(s, (w_new, w_old))| s.value(w_new) - s.value(w_old))
        .sum();

    // capacitor block, linearized at the current (unsmoothed) precoders
    let mut grad = vec![0.0; d.n_caps()];
    if p.optimize_caps {
        let mut own_w = PrecoderSet::zeros(&d);
        for u in 0..d.users {
            for k in 0..d.subcarriers {
                own_w.w[(b, u, k)] = state.w[state.precoder.idx(u, k)].clone();
            }
        }
        let ris = &mut state.ris;
        let ws = GradientWorkspace::build(view.sample, b, &ris.caps, &own_w, view.stats, &grid, &setup.circuit)?;
        grad = ws.grad_caps_total()?;
        let q = tracker_update(&setup.graph, b, &ris.tracker, &state.inbox, &grad, &ris.grad_prev)?;
        let terms = price_and_accumulate_c(&q, &grad, &ris.accum, rho, d.bs, p.cooperation);
        let c_hat = solve_caps(&ris.caps, &terms, rho, p.tau, &setup.circuit);
        gain += caps_objective(&ris.caps, &terms, rho, p.tau, c_hat.as_picofarads());
        pricing_sq += terms.pricing.iter().map(|x| x * x).sum::<f64>();
        let mut smoothed = CapacitorVector::from_picofarads(
            ris.caps
                .as_picofarads()
                .iter()
                .zip(c_hat.as_picofarads())
                .map(|(c, h)| (1.0 - alpha) * c + alpha * h)
                .collect(),
        );
        // a convex combination of in-box points only leaves the box by rounding
        smoothed.clamp_to_box(&setup.circuit);
        ris.caps = smoothed;
        ris.tracker = q;
        ris.pricing = terms.pricing;
        ris.accum = terms.accum;
        ris.gamma = terms.gamma;
        ris.grad_prev = grad.clone();
    }

    for (w, w_hat) in state.w.iter_mut().zip(&sol.w) {
        *w = &*w * Complex64::new(1.0 - alpha, 0.0) + w_hat * Complex64::new(alpha, 0.0);
    }

    let msg = RoundMessage {
        from: b,
        tracker: state.ris.tracker.clone(),
        caps: state.ris.caps.clone(),
    };
    Ok((
        msg,
        AgentReport {
            surrogate_gain: gain,
            lambda: sol.lambda,
            solver_power: sol.power,
            pricing_norm: pricing_sq.sqrt(),
            grad,
        },
    ))
}

/// One row of the run trace, recorded after round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub rho: f64,
    pub alpha: f64,
    /// True-channel sum rate with the canonical (BS 0) capacitor copy.
    pub sum_rate: f64,
    pub surrogate_gain: Vec<f64>,
    /// Transmit power per BS after smoothing.
    pub power: Vec<f64>,
    /// Power of each BS's best response, with its multiplier.
    pub solver_power: Vec<f64>,
    pub lambda: Vec<f64>,
    pub disagreement: f64,
    /// Every capacitor copy inside the box after the round.
    pub caps_in_box: bool,
    /// Largest pricing norm over BSs, both blocks together.
    pub pricing_norm: f64,
    /// `max_n |mean_b q_b[n] - mean_b grad_b[n]|`.
    pub tracker_gap: f64,
    /// Largest relative iterate change over BSs.
    pub rel_change: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub initial_sum_rate: f64,
    pub rows: Vec<TraceRow>,
}

fn iterate_norm_sq(a: &AgentState) -> f64 {
    a.w.iter().map(|w| w.norm_squared()).sum::<f64>() + a.ris.caps.as_picofarads().iter().map(|c| c * c).sum::<f64>()
}

fn iterate_dist_sq(a: &AgentState, b: &AgentState) -> f64 {
    a.w.iter().zip(&b.w).map(|(x, y)| (x - y).norm_squared()).sum::<f64>()
        + a.ris
            .caps
            .as_picofarads()
            .iter()
            .zip(b.ris.caps.as_picofarads())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
}

/// Runs round `t` on all agents and returns its trace row.
pub fn run_round(
    t: usize,
    seed: u64,
    agents: &mut [AgentState],
    channels: &ChannelRealization,
    setup: &RunSetup,
) -> Result<TraceRow> {
    let started = Instant::now();
    let d = setup.system.dims;
    let (rho, alpha) = step_sizes(t, &setup.params);
    let grid = setup.system.subcarrier_grid();
    let before: Vec<AgentState> = agents.to_vec();
    let w_all = precoder_set(agents, setup);
    let caps_all = copies(agents);

    // fresh samples and scalar feedback, computed per BS
    let feedback = (0..d.bs)
        .into_par_iter()
        .map(|b| {
            let sample = perturb_csi(sample_seed(seed, t, b), channels, &setup.csi);
            let eff = effective_channels_per_bs(&sample, &caps_all, &grid, &setup.circuit)?;
            let stats = link_stats(&eff, &w_all, setup.system.noise_var)?;
            Ok((sample, eff, stats))
        })
        .collect::<Result<Vec<_>>>()?;

    let outputs = agents
        .par_iter_mut()
        .zip(feedback.par_iter())
        .map(|(agent, (sample, eff, stats))| {
            let view = LocalView {
                b: agent.b,
                sample,
                eff,
                stats,
            };
            agent_step(view, agent, setup, rho, alpha).map_err(|e| e.context(format!("BS {}", agent.b)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (outbox, reports): (Vec<RoundMessage>, Vec<AgentReport>) = outputs.into_iter().unzip();

    // exchange with neighbors only, then average the capacitor copies
    for agent in agents.iter_mut() {
        let b = agent.b;
        agent.inbox = setup
            .graph
            .neighborhood(b)
            .into_iter()
            .filter(|&i| i != b)
            .map(|i| outbox[i].clone())
            .collect();
        if setup.params.consensus_enabled && setup.params.optimize_caps {
            let mut mixed = consensus_average(&setup.graph, b, &outbox[b].caps, &agent.inbox)?;
            mixed.clamp_to_box(&setup.circuit);
            agent.ris.caps = mixed;
        }
    }

    let tracker_gap = if setup.params.optimize_caps {
        (0..d.n_caps())
            .map(|n| {
                let q: f64 = agents.iter().map(|a| a.ris.tracker[n]).sum::<f64>() / d.bs as f64;
                let g: f64 = reports.iter().map(|r| r.grad[n]).sum::<f64>() / d.bs as f64;
                (q - g).abs()
            })
            .fold(0.0, f64::max)
    } else {
        0.0
    };

    let rel_change = agents
        .iter()
        .zip(&before)
        .map(|(a, b)| iterate_dist_sq(a, b).sqrt() / iterate_norm_sq(b).sqrt().max(1.0))
        .fold(0.0, f64::max);

    let w_new = precoder_set(agents, setup);
    let (_, sum_rate) = evaluate_sum_rate(
        channels,
        &agents[0].ris.caps,
        &w_new,
        &grid,
        &setup.circuit,
        setup.system.noise_var,
    )?;

    Ok(TraceRow {
        t,
        rho,
        alpha,
        sum_rate,
        surrogate_gain: reports.iter().map(|r| r.surrogate_gain).collect(),
        power: (0..d.bs).map(|b| tx_power(&w_new, b)).collect(),
        solver_power: reports.iter().map(|r| r.solver_power).collect(),
        lambda: reports.iter().map(|r| r.lambda).collect(),
        disagreement: disagreement(&copies(agents)),
        caps_in_box: agents.iter().all(|a| a.ris.caps.within_box(&setup.circuit)),
        pricing_norm: reports.iter().map(|r| r.pricing_norm).fold(0.0, f64::max),
        tracker_gap,
        rel_change,
        wall_ms: if setup.record_wall_time {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        },
    })
}

/// Stopping rule: relative iterate change at most `epsilon` and capacitor
/// disagreement at most `disagreement_tol` (pF) after at least two rounds,
/// or the round budget is spent.
pub fn converged(trace: &RunTrace, epsilon: f64, disagreement_tol: f64, t_max: usize) -> bool {
    let n = trace.rows.len();
    n >= t_max || (n >= 2 && trace.rows[n - 1].rel_change <= epsilon && trace.rows[n - 1].disagreement <= disagreement_tol)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub agents: Vec<AgentState>,
    pub trace: RunTrace,
    pub precoders: PrecoderSet,
    /// Canonical capacitor configuration (the BS 0 copy).
    pub caps: CapacitorVector,
    pub per_user_rates: Vec<f64>,
    pub final_sum_rate: f64,
    pub disagreement: f64,
    pub per_bs_power: Vec<f64>,
}

impl RunOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.rows.len()
    }
}

/// Initializes at `caps0` and runs rounds until [`converged`].
pub fn run(seed: u64, setup: &RunSetup, channels: &ChannelRealization, caps0: &CapacitorVector) -> Result<RunOutcome> {
    let mut agents = initialize(seed, setup, channels, caps0)?;
    let grid = setup.system.subcarrier_grid();
    let w0 = precoder_set(&agents, setup);
    let (_, initial) = evaluate_sum_rate(channels, caps0, &w0, &grid, &setup.circuit, setup.system.noise_var)?;
    let mut trace = RunTrace {
        initial_sum_rate: initial,
        rows: Vec::new(),
    };
    let p = &setup.params;
    let agreement = p.epsilon * setup.circuit.c_span_pf();
    let mut t = 0;
    while !converged(&trace, p.epsilon, agreement, p.t_max) {
        let row = run_round(t, seed, &mut agents, channels, setup).map_err(|e| e.context(format!("round {t}")))?;
        trace.rows.push(row);
        t += 1;
    }
    let precoders = precoder_set(&agents, setup);
    let caps = agents[0].ris.caps.clone();
    let (per_user_rates, final_sum_rate) =
        evaluate_sum_rate(channels, &caps, &precoders, &grid, &setup.circuit, setup.system.noise_var)?;
    let d = setup.system.dims;
    Ok(RunOutcome {
        per_bs_power: (0..d.bs).map(|b| tx_power(&precoders, b)).collect(),
        disagreement: disagreement(&copies(&agents)),
        agents,
        trace,
        precoders,
        caps,
        per_user_rates,
        final_sum_rate,
    })
}
