//! GPU machine parameters and the machine config file.
//!
//! The file is TOML with the keys
//! `topology, n_gpus, link_bw, nic_bw, peak_flops, mem_bw, gemm_efficiency,
//! copy_efficiency, n_dma_engines, launch_overhead, comm_agent, t_ref`
//! (plus optional `link_latency`). Omitted keys take the defaults of
//! [`MachineConfig::default`] and an 8-GPU, 64 GB/s mesh.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::topology::{default_nic_bw, Topology, TopologyKind};

/// Who moves bytes between GPUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommAgent {
    /// Copy engines; no compute cores used.
    Dma,
    /// Communication kernels running on the compute cores.
    Core,
}

impl fmt::Display for CommAgent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommAgent::Dma => "dma",
            CommAgent::Core => "core",
        })
    }
}

impl FromStr for CommAgent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dma" => Ok(CommAgent::Dma),
            "core" => Ok(CommAgent::Core),
            other => Err(Error::Config(format!("unknown comm_agent `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineConfig<S: Scalar = f64> {
    /// Peak dense GEMM ops/s of one GPU.
    pub peak_flops: S,
    /// HBM bytes/s of one GPU.
    pub mem_bw: S,
    /// Fraction of peak a full-size GEMM achieves.
    pub gemm_efficiency: S,
    /// Fraction of `mem_bw` a local copy achieves.
    pub copy_efficiency: S,
    pub n_dma_engines: u32,
    /// Seconds added to every GEMM kernel.
    pub launch_overhead: S,
    pub comm_agent: CommAgent,
    /// Reference time that turns peak ops/s into the heuristic's ops threshold.
    pub t_ref: S,
}

impl<S: Scalar> Default for MachineConfig<S> {
    /// An 8-GPU direct-connect node class: 1.3 Pop/s peak, 5.3 TB/s HBM.
    fn default() -> Self {
        MachineConfig {
            peak_flops: S::from_f64_lossy(1.3e15),
            mem_bw: S::from_f64_lossy(5.3e12),
            gemm_efficiency: S::from_f64_lossy(0.65),
            copy_efficiency: S::one(),
            n_dma_engines: 8,
            launch_overhead: S::from_f64_lossy(5e-6),
            comm_agent: CommAgent::Dma,
            t_ref: S::one(),
        }
    }
}

impl<S: Scalar> MachineConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("peak_flops", self.peak_flops),
            ("mem_bw", self.mem_bw),
            ("t_ref", self.t_ref),
        ];
        for (name, v) in positive {
            if !(v > S::zero()) || !v.is_finite() {
                return Err(Error::validation(name, "must be finite and > 0"));
            }
        }
        for (name, v) in [
            ("gemm_efficiency", self.gemm_efficiency),
            ("copy_efficiency", self.copy_efficiency),
        ] {
            if !(v > S::zero() && v <= S::one()) {
                return Err(Error::validation(name, "must lie in (0, 1]"));
            }
        }
        if self.n_dma_engines == 0 {
            return Err(Error::validation("n_dma_engines", "must be >= 1"));
        }
        if !(self.launch_overhead >= S::zero()) || !self.launch_overhead.is_finite() {
            return Err(Error::validation("launch_overhead", "must be finite and >= 0"));
        }
        Ok(())
    }

    /// Achieved ops/s of a full-size GEMM.
    pub fn gemm_rate(&self) -> S {
        self.peak_flops * self.gemm_efficiency
    }
}

/// A machine file: GPU parameters plus the interconnect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Machine<S: Scalar = f64> {
    pub config: MachineConfig<S>,
    pub topology: Topology<S>,
}

impl<S: Scalar> Default for Machine<S> {
    fn default() -> Self {
        Machine {
            config: MachineConfig::default(),
            topology: Topology::mesh(8, S::from_f64_lossy(64e9)).expect("default mesh is valid"),
        }
    }
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct MachineFile {
    topology: Option<TopologyKind>,
    n_gpus: Option<u64>,
    link_bw: Option<f64>,
    nic_bw: Option<f64>,
    link_latency: Option<f64>,
    peak_flops: Option<f64>,
    mem_bw: Option<f64>,
    gemm_efficiency: Option<f64>,
    copy_efficiency: Option<f64>,
    n_dma_engines: Option<u32>,
    launch_overhead: Option<f64>,
    comm_agent: Option<CommAgent>,
    t_ref: Option<f64>,
}

impl<S: Scalar> Machine<S> {
    pub fn parse(text: &str) -> Result<Self> {
        let file: MachineFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("machine config: {e}")))?;
        let d = MachineConfig::<S>::default();
        let f = |v: Option<f64>, dflt: S| v.map(S::from_f64_lossy).unwrap_or(dflt);
        let config = MachineConfig {
            peak_flops: f(file.peak_flops, d.peak_flops),
            mem_bw: f(file.mem_bw, d.mem_bw),
            gemm_efficiency: f(file.gemm_efficiency, d.gemm_efficiency),
            copy_efficiency: f(file.copy_efficiency, d.copy_efficiency),
            n_dma_engines: file.n_dma_engines.unwrap_or(d.n_dma_engines),
            launch_overhead: f(file.launch_overhead, d.launch_overhead),
            comm_agent: file.comm_agent.unwrap_or(d.comm_agent),
            t_ref: f(file.t_ref, d.t_ref),
        };
        config.validate()?;

        let n_gpus = file.n_gpus.unwrap_or(8);
        let kind = file.topology.unwrap_or(TopologyKind::Mesh);
        let link_bw = f(file.link_bw, S::from_f64_lossy(64e9));
        let nic_bw = f(file.nic_bw, default_nic_bw(n_gpus, link_bw));
        let topology = Topology::new(kind, n_gpus, link_bw, nic_bw)?
            .with_latency(f(file.link_latency, S::zero()))?;
        Ok(Machine { config, topology })
    }

    pub fn to_toml(&self) -> String {
        let c = &self.config;
        let t = &self.topology;
        let file = MachineFile {
            topology: Some(t.kind),
            n_gpus: Some(t.n_gpus),
            link_bw: Some(t.link_bw.to_f64_lossy()),
            nic_bw: Some(t.nic_bw.to_f64_lossy()),
            link_latency: Some(t.latency.to_f64_lossy()),
            peak_flops: Some(c.peak_flops.to_f64_lossy()),
            mem_bw: Some(c.mem_bw.to_f64_lossy()),
            gemm_efficiency: Some(c.gemm_efficiency.to_f64_lossy()),
            copy_efficiency: Some(c.copy_efficiency.to_f64_lossy()),
            n_dma_engines: Some(c.n_dma_engines),
            launch_overhead: Some(c.launch_overhead.to_f64_lossy()),
            comm_agent: Some(c.comm_agent),
            t_ref: Some(c.t_ref.to_f64_lossy()),
        };
        toml::to_string(&file).expect("machine file serializes")
    }
}
