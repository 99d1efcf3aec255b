//! Interconnect models: a direct-connect mesh or a switch.
//!
//! All times are bandwidth-only (plus an optional per-message latency that
//! defaults to zero). Links are uni-directional channels; a bidirectional
//! physical link is two of them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    /// Every GPU has a dedicated link to each of its `G-1` peers.
    Mesh,
    /// Every GPU has one aggregate port that can be split among peers.
    Switch,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::Mesh => "mesh",
            TopologyKind::Switch => "switch",
        })
    }
}

impl FromStr for TopologyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mesh" => Ok(TopologyKind::Mesh),
            "switch" => Ok(TopologyKind::Switch),
            other => Err(Error::Config(format!("unknown topology `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Topology<S: Scalar = f64> {
    pub kind: TopologyKind,
    pub n_gpus: u64,
    /// Uni-directional bytes/s of one mesh link.
    pub link_bw: S,
    /// Aggregate per-GPU bytes/s through the switch.
    pub nic_bw: S,
    /// Fixed cost per message, seconds.
    pub latency: S,
}

impl<S: Scalar> Topology<S> {
    /// A mesh whose switch-equivalent port bandwidth is `(G-1) * link_bw`.
    pub fn mesh(n_gpus: u64, link_bw: S) -> Result<Self> {
        Self::new(TopologyKind::Mesh, n_gpus, link_bw, default_nic_bw(n_gpus, link_bw))
    }

    pub fn switch(n_gpus: u64, nic_bw: S) -> Result<Self> {
        let link_bw = nic_bw / S::from_count(n_gpus.max(2) - 1);
        Self::new(TopologyKind::Switch, n_gpus, link_bw, nic_bw)
    }

    pub fn new(kind: TopologyKind, n_gpus: u64, link_bw: S, nic_bw: S) -> Result<Self> {
        let topo = Topology {
            kind,
            n_gpus,
            link_bw,
            nic_bw,
            latency: S::zero(),
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn with_latency(mut self, latency: S) -> Result<Self> {
        if !(latency >= S::zero()) || !latency.is_finite() {
            return Err(Error::validation("latency", "must be finite and >= 0"));
        }
        self.latency = latency;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_gpus < 2 {
            return Err(Error::validation("n_gpus", "topology needs at least 2 GPUs"));
        }
        let bw = match self.kind {
            TopologyKind::Mesh => ("link_bw", self.link_bw),
            TopologyKind::Switch => ("nic_bw", self.nic_bw),
        };
        if !(bw.1 > S::zero()) || !bw.1.is_finite() {
            return Err(Error::validation(bw.0, "must be finite and > 0"));
        }
        Ok(())
    }

    /// Egress links per GPU.
    pub fn links_per_gpu(&self) -> u64 {
        match self.kind {
            TopologyKind::Mesh => self.n_gpus - 1,
            TopologyKind::Switch => 1,
        }
    }

    fn peers(&self) -> S {
        S::from_count(self.n_gpus - 1)
    }

    fn message(&self, bytes: u64, seconds: S) -> S {
        if bytes == 0 {
            S::zero()
        } else {
            seconds + self.latency
        }
    }
}

pub fn default_nic_bw<S: Scalar>(n_gpus: u64, link_bw: S) -> S {
    S::from_count(n_gpus.max(2) - 1) * link_bw
}

/// Time for every GPU to receive every peer's `shard_bytes` shard.
///
/// Mesh: all `G-1` shards arrive concurrently, one per link.
pub fn all_gather_time<S: Scalar>(topo: &Topology<S>, shard_bytes: u64) -> S {
    let b = S::from_count(shard_bytes);
    let t = match topo.kind {
        TopologyKind::Mesh => b / topo.link_bw,
        TopologyKind::Switch => topo.peers() * b / topo.nic_bw,
    };
    topo.message(shard_bytes, t)
}

/// One ring step: a single peer-to-peer transfer per GPU.
///
/// On a mesh this occupies one of the `G-1` links; a switch gives the single
/// flow the whole port.
pub fn p2p_step_time<S: Scalar>(topo: &Topology<S>, bytes: u64) -> S {
    let b = S::from_count(bytes);
    let t = match topo.kind {
        TopologyKind::Mesh => b / topo.link_bw,
        TopologyKind::Switch => b / topo.nic_bw,
    };
    topo.message(bytes, t)
}

/// One all-to-all round: every GPU sends one `chunk_bytes` chunk to each peer.
pub fn a2a_round_time<S: Scalar>(topo: &Topology<S>, chunk_bytes: u64) -> S {
    let b = S::from_count(chunk_bytes);
    let t = match topo.kind {
        TopologyKind::Mesh => b / topo.link_bw,
        TopologyKind::Switch => topo.peers() * b / topo.nic_bw,
    };
    topo.message(chunk_bytes, t)
}
