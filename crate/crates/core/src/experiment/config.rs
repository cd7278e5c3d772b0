//! Experiment description and its TOML form.
//!
//! Every key is optional; missing keys take the reference-deployment
//! defaults. Circuit values are written in nH, ohm and pF; frequencies in
//! Hz; powers in dBm.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{CsiErrorModel, FadingModel, GeometrySpec, PathlossModel};
use crate::circuit::{CircuitParams, PICO};
use crate::consensus::{metropolis_weights, ConsensusGraph};
use crate::error::{Error, Result};
use crate::model::{dbm_to_watt, Dims, SystemConfig};
use crate::orchestrator::{AlgoParams, RunSetup};
use crate::precoder::LinearTermScaling;

const NANO: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Cooperative design with pricing and capacitor consensus.
    #[default]
    Proposed,
    /// Pricing off, capacitor copies still averaged.
    NoCoop,
    /// Pricing and averaging both off.
    NoCoopNoConsensus,
    /// Uniformly random capacitors, precoders optimized.
    RandomCaps,
    /// Capacitors at the box midpoint, precoders optimized.
    MidpointCaps,
    /// Capacitors calibrated at the carrier to random target phases,
    /// precoders optimized.
    FfCalibrated,
}

impl Mode {
    pub const ALL: [Mode; 6] = [
        Mode::Proposed,
        Mode::NoCoop,
        Mode::NoCoopNoConsensus,
        Mode::RandomCaps,
        Mode::MidpointCaps,
        Mode::FfCalibrated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Proposed => "proposed",
            Mode::NoCoop => "no-coop",
            Mode::NoCoopNoConsensus => "no-coop-no-consensus",
            Mode::RandomCaps => "random-caps",
            Mode::MidpointCaps => "midpoint-caps",
            Mode::FfCalibrated => "ff-calibrated",
        }
    }

    /// True for the modes that keep the capacitors fixed.
    pub fn fixed_caps(self) -> bool {
        matches!(self, Mode::RandomCaps | Mode::MidpointCaps | Mode::FfCalibrated)
    }

    /// Algorithm flags implied by the mode.
    pub fn apply(self, mut params: AlgoParams) -> AlgoParams {
        let (cooperation, consensus, caps) = match self {
            Mode::Proposed => (true, true, true),
            Mode::NoCoop => (false, true, true),
            Mode::NoCoopNoConsensus => (false, false, true),
            Mode::RandomCaps | Mode::MidpointCaps | Mode::FfCalibrated => (false, false, false),
        };
        params.cooperation = cooperation;
        params.consensus_enabled = consensus;
        params.optimize_caps = caps;
        params
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Mode::ALL.iter().map(|m| m.as_str()).collect();
                Error::invalid("mode", format!("unknown mode `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub bs: usize,
    pub antennas: usize,
    pub users: usize,
    pub ris: usize,
    pub elements: usize,
    pub subcarriers: usize,
    /// Carrier frequency (Hz).
    pub f_c: f64,
    /// Bandwidth (Hz).
    pub bandwidth: f64,
    /// Noise power per user and subcarrier (dBm).
    pub noise_dbm: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self::from_dims(Dims::reference())
    }
}

impl SystemSection {
    pub fn from_dims(d: Dims) -> Self {
        Self {
            bs: d.bs,
            antennas: d.antennas,
            users: d.users,
            ris: d.ris,
            elements: d.elements,
            subcarriers: d.subcarriers,
            f_c: 3.5e9,
            bandwidth: 100e6,
            noise_dbm: -90.0,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            bs: self.bs,
            antennas: self.antennas,
            users: self.users,
            ris: self.ris,
            elements: self.elements,
            subcarriers: self.subcarriers,
        }
    }
}

/// Circuit values in nH, ohm and pF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitSection {
    pub l1_nh: f64,
    pub l2_nh: f64,
    pub r0: f64,
    pub zeta0: f64,
    pub c_min: f64,
    pub c_max: f64,
}

impl Default for CircuitSection {
    fn default() -> Self {
        let p = CircuitParams::default();
        Self {
            l1_nh: p.l1 / NANO,
            l2_nh: p.l2 / NANO,
            r0: p.r0,
            zeta0: p.zeta0,
            c_min: p.c_min / PICO,
            c_max: p.c_max / PICO,
        }
    }
}

impl CircuitSection {
    pub fn params(&self) -> CircuitParams {
        CircuitParams {
            l1: self.l1_nh * NANO,
            l2: self.l2_nh * NANO,
            r0: self.r0,
            zeta0: self.zeta0,
            c_min: self.c_min * PICO,
            c_max: self.c_max * PICO,
        }
    }
}

/// Algorithm constants; the cooperation flags come from the mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub tau: f64,
    pub epsilon: f64,
    pub t_max: usize,
    pub rho_exponent: f64,
    pub scaling: LinearTermScaling,
    pub power_tol: f64,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        let p = AlgoParams::default();
        Self {
            tau: p.tau,
            epsilon: p.epsilon,
            t_max: p.t_max,
            rho_exponent: p.rho_exponent,
            scaling: p.scaling,
            power_tol: p.power_tol,
        }
    }
}

/// Communication graph; no edge list means every pair of BSs is linked.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub mode: Mode,
    pub realizations: usize,
    /// Per-BS power budgets to sweep (dBm).
    pub sweep_dbm: Vec<f64>,
    /// Worker threads for the sweep; 0 uses every core.
    pub threads: usize,
    /// Fill `wall_ms`; off keeps the CSV reproducible byte for byte.
    pub record_wall_time: bool,
    pub output: String,
    pub system: SystemSection,
    /// Node placement; the reference layout for the configured sizes when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySpec>,
    pub pathloss: PathlossModel,
    pub channel: FadingModel,
    pub circuit: CircuitSection,
    pub csi: CsiErrorModel,
    pub algorithm: AlgorithmSection,
    pub graph: GraphSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            mode: Mode::Proposed,
            realizations: 100,
            sweep_dbm: vec![-10.0, 0.0, 10.0, 20.0, 30.0],
            threads: 0,
            record_wall_time: false,
            output: "results.csv".into(),
            system: SystemSection::default(),
            geometry: None,
            pathloss: PathlossModel::default(),
            channel: FadingModel::default(),
            circuit: CircuitSection::default(),
            csi: CsiErrorModel::default(),
            algorithm: AlgorithmSection::default(),
            graph: GraphSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reduced deployment for quick runs and the test suite.
    pub fn desk() -> Self {
        Self {
            realizations: 20,
            system: SystemSection::from_dims(Dims::desk()),
            algorithm: AlgorithmSection {
                t_max: 500,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn dims(&self) -> Dims {
        self.system.dims()
    }

    pub fn geometry_spec(&self) -> GeometrySpec {
        self.geometry.clone().unwrap_or_else(|| GeometrySpec::reference(&self.dims()))
    }

    pub fn circuit_params(&self) -> CircuitParams {
        self.circuit.params()
    }

    pub fn graph(&self) -> Result<ConsensusGraph> {
        let bs = self.system.bs;
        match &self.graph.edges {
            None => ConsensusGraph::complete(bs),
            Some(edges) => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                metropolis_weights(&pairs, bs)
            }
        }
    }

    /// Algorithm parameters with the flags of `mode`.
    pub fn algo_params(&self, mode: Mode) -> AlgoParams {
        let a = &self.algorithm;
        mode.apply(AlgoParams {
            tau: a.tau,
            epsilon: a.epsilon,
            t_max: a.t_max,
            rho_exponent: a.rho_exponent,
            scaling: a.scaling,
            power_tol: a.power_tol,
            ..AlgoParams::default()
        })
    }

    pub fn system_config(&self, p_max_dbm: f64) -> SystemConfig {
        SystemConfig {
            dims: self.dims(),
            f_c: self.system.f_c,
            bandwidth: self.system.bandwidth,
            p_max: dbm_to_watt(p_max_dbm),
            noise_var: dbm_to_watt(self.system.noise_dbm),
        }
    }

    pub fn run_setup(&self, mode: Mode, p_max_dbm: f64) -> Result<RunSetup> {
        let setup = RunSetup {
            system: self.system_config(p_max_dbm),
            circuit: self.circuit_params(),
            csi: self.csi,
            graph: self.graph()?,
            params: self.algo_params(mode),
            record_wall_time: self.record_wall_time,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::invalid("realizations", "must be >= 1"));
        }
        if self.sweep_dbm.is_empty() {
            return Err(Error::invalid("sweep_dbm", "must list at least one power"));
        }
        if self.sweep_dbm.iter().any(|p| p.is_nan() || *p == f64::INFINITY) {
            return Err(Error::invalid("sweep_dbm", "powers must be finite or -inf"));
        }
        if !self.system.noise_dbm.is_finite() {
            return Err(Error::invalid("system.noise_dbm", "must be finite"));
        }
        let dims = self.dims();
        self.system_config(self.sweep_dbm[0]).validate()?;
        self.geometry_spec().validate(&dims)?;
        self.pathloss.validate()?;
        self.channel.validate(dims.subcarriers)?;
        self.circuit_params().validate()?;
        self.csi.validate()?;
        self.algo_params(self.mode).validate()?;
        self.graph()?;
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(e).context(format!("reading {}", path.display())))?;
    ExperimentConfig::from_toml_str(&text).map_err(|e| e.context(format!("config {}", path.display())))
}
