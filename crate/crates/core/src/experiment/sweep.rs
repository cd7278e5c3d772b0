use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Mode};
use crate::channel::{build_geometry, draw_channels, ChannelRealization};
use crate::circuit::{calibrate_capacitor, CapacitorVector, CircuitParams, PICO};
use crate::error::{Error, Result};
use crate::orchestrator::{run, RunTrace};
use crate::rng::{derive_seed, rng_from, stream};

/// One (power, realization) cell of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub mode: Mode,
    pub p_max_dbm: f64,
    pub seed: u64,
    pub iterations: usize,
    pub initial_sum_rate: f64,
    /// Sum over users and subcarriers (bit/s/Hz).
    pub final_sum_rate: f64,
    pub per_user_rates: Vec<f64>,
    pub subcarriers: usize,
    pub final_disagreement: f64,
    pub per_bs_power: Vec<f64>,
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn sum_rate_per_sc(&self) -> f64 {
        self.final_sum_rate / self.subcarriers as f64
    }
}

/// Child seed of sweep cell `(p_index, realization)`.
pub fn cell_seed(master_seed: u64, p_index: usize, realization: usize) -> u64 {
    derive_seed(master_seed, &[p_index as u64, realization as u64])
}

/// Geometry and true channels of one cell.
pub fn draw_realization(seed: u64, cfg: &ExperimentConfig) -> Result<ChannelRealization> {
    let dims = cfg.dims();
    let geo = build_geometry(derive_seed(seed, &[stream::GEOMETRY]), &cfg.geometry_spec(), &dims)?;
    draw_channels(derive_seed(seed, &[stream::CHANNEL]), &geo, &cfg.pathloss, &cfg.channel, &dims)
}

/// Starting capacitors of `mode`: the box midpoint, or the baseline's fixed
/// configuration.
pub fn initial_caps(mode: Mode, seed: u64, cfg: &ExperimentConfig) -> Result<CapacitorVector> {
    let n = cfg.dims().n_caps();
    let p: CircuitParams = cfg.circuit_params();
    let mut rng = rng_from(derive_seed(seed, &[stream::BASELINE]));
    match mode {
        Mode::Proposed | Mode::NoCoop | Mode::NoCoopNoConsensus | Mode::MidpointCaps => {
            Ok(CapacitorVector::midpoint(n, &p))
        }
        Mode::RandomCaps => Ok(CapacitorVector::from_picofarads(
            (0..n).map(|_| rng.random_range(p.c_min_pf()..=p.c_max_pf())).collect(),
        )),
        Mode::FfCalibrated => {
            let farads = (0..n)
                .map(|_| {
                    let theta = 2.0 * PI * rng.random::<f64>();
                    calibrate_capacitor(Complex64::from_polar(1.0, theta), cfg.system.f_c, &p).map(|c| c.c)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mut caps = CapacitorVector::from_picofarads(farads.iter().map(|c| c / PICO).collect());
            caps.clamp_to_box(&p);
            Ok(caps)
        }
    }
}

/// Runs `mode` on given channels at one power level.
pub fn run_cell(
    mode: Mode,
    seed: u64,
    cfg: &ExperimentConfig,
    channels: &ChannelRealization,
    p_max_dbm: f64,
) -> Result<(ResultRow, RunTrace)> {
    let started = Instant::now();
    let setup = cfg.run_setup(mode, p_max_dbm)?;
    let caps0 = initial_caps(mode, seed, cfg)?;
    let out = run(seed, &setup, channels, &caps0)?;
    let row = ResultRow {
        mode,
        p_max_dbm,
        seed,
        iterations: out.iterations(),
        initial_sum_rate: out.trace.initial_sum_rate,
        final_sum_rate: out.final_sum_rate,
        per_user_rates: out.per_user_rates.clone(),
        subcarriers: cfg.system.subcarriers,
        final_disagreement: out.disagreement,
        per_bs_power: out.per_bs_power.clone(),
        wall_ms: if cfg.record_wall_time {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        },
    };
    Ok((row, out.trace))
}

/// A baseline (any mode other than the proposed design) on given channels.
pub fn run_baseline(
    mode: Mode,
    seed: u64,
    cfg: &ExperimentConfig,
    channels: &ChannelRealization,
    p_max_dbm: f64,
) -> Result<ResultRow> {
    if mode == Mode::Proposed {
        return Err(Error::invalid("mode", "run_baseline needs a baseline mode"));
    }
    run_cell(mode, seed, cfg, channels, p_max_dbm).map(|(row, _)| row)
}

/// Like [`run_sweep`], keeping each cell's trace.
pub fn run_sweep_traced(cfg: &ExperimentConfig) -> Result<Vec<(ResultRow, RunTrace)>> {
    cfg.validate()?;
    let cells: Vec<(usize, usize)> = (0..cfg.sweep_dbm.len())
        .flat_map(|p| (0..cfg.realizations).map(move |i| (p, i)))
        .collect();
    let job = || {
        cells
            .par_iter()
            .map(|&(p, i)| {
                let seed = cell_seed(cfg.master_seed, p, i);
                let dbm = cfg.sweep_dbm[p];
                draw_realization(seed, cfg)
                    .and_then(|ch| run_cell(cfg.mode, seed, cfg, &ch, dbm))
                    .map_err(|e| e.context(format!("P_max = {dbm} dBm, realization {i}")))
            })
            .collect::<Result<Vec<_>>>()
    };
    if cfg.threads == 0 {
        job()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::invalid("threads", e.to_string()))?
            .install(job)
    }
}

/// Every (power, realization) cell of the configured sweep, ordered by
/// power index then realization.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Ok(run_sweep_traced(cfg)?.into_iter().map(|(row, _)| row).collect())
}
