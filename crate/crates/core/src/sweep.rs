//! Design-space sweeps and the synthetic heuristic grid.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{simulate, speedup};
use crate::error::{Error, Result};
use crate::gemm::GemmShape;
use crate::lossmodel::LossModel;
use crate::machine::MachineConfig;
use crate::planner::{plan, plan_serial, ScheduleKind};
use crate::scalar::Scalar;
use crate::scenario::{Collective, Parallelism, Scenario};
use crate::topology::{all_gather_time, Topology, TopologyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    M,
    N,
    K,
    LinkBw,
    PeakFlops,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::M => "m",
            SweepAxis::N => "n",
            SweepAxis::K => "k",
            SweepAxis::LinkBw => "link_bw",
            SweepAxis::PeakFlops => "peak_flops",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m" => Ok(SweepAxis::M),
            "n" => Ok(SweepAxis::N),
            "k" => Ok(SweepAxis::K),
            "link_bw" => Ok(SweepAxis::LinkBw),
            "peak_flops" => Ok(SweepAxis::PeakFlops),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// A log-spaced range over one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.start > 0.0) {
            return Err(Error::validation("sweep range", "bounds must be finite and positive"));
        }
        if self.stop <= self.start {
            return Err(Error::validation("sweep range", "stop must exceed start"));
        }
        if self.steps < 2 {
            return Err(Error::validation("sweep steps", "at least two steps are required"));
        }
        Ok(())
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let (a, b) = (self.start.ln(), self.stop.ln());
        let last = (self.steps - 1) as f64;
        Ok((0..self.steps)
            .map(|i| (a + (b - a) * i as f64 / last).exp())
            .collect())
    }
}

/// The sweep used for the bell-curve and shard-overlap experiments: `N` of
/// g1 from 128 to 8192, which moves `T_gemm/T_comm` from about 0.08 to 5
/// under the default machine.
pub fn default_sweep() -> SweepSpec {
    SweepSpec {
        axis: SweepAxis::N,
        start: 128.0,
        stop: 8192.0,
        steps: 13,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub scenario: Scenario,
    /// Uncontended GEMM time over uncontended all-gather time.
    pub ratio: f64,
    pub speedups: Vec<(ScheduleKind, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub spec: SweepSpec,
    pub schedules: Vec<ScheduleKind>,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn speedup_of(&self, point: usize, kind: ScheduleKind) -> Option<f64> {
        self.points[point].speedups.iter().find(|(k, _)| *k == kind).map(|&(_, s)| s)
    }

    /// One row per point: `axis value, ratio`, then one column per schedule.
    /// Schedules a point cannot run are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},t_gemm_over_t_comm", self.spec.axis);
        for k in &self.schedules {
            out.push(',');
            out.push_str(k.name());
        }
        out.push('\n');
        for (i, p) in self.points.iter().enumerate() {
            out.push_str(&format!("{},{:.6}", p.value, p.ratio));
            for &k in &self.schedules {
                out.push(',');
                if let Some(s) = self.speedup_of(i, k) {
                    out.push_str(&format!("{s:.6}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Uncontended `T_gemm / T_comm` of the serial schedule.
pub fn gemm_comm_ratio<S: Scalar>(scenario: &Scenario, machine: &MachineConfig<S>, topo: &Topology<S>) -> S {
    let tg = S::from_count(scenario.gemm.flops()) / machine.gemm_rate();
    let tc = all_gather_time(topo, scenario.shard_bytes());
    tg / tc
}

fn round_dim(x: f64, multiple: u64) -> u64 {
    let m = multiple as f64;
    ((x / m).round().max(1.0) * m) as u64
}

/// Applies one axis value. `M` and `K` are rounded to a multiple of `G^2`
/// so every schedule stays runnable. On a switch, `link_bw` sets the port
/// bandwidth.
fn apply<S: Scalar>(
    axis: SweepAxis,
    value: f64,
    base: &Scenario,
    machine: &MachineConfig<S>,
    topo: &Topology<S>,
) -> Result<(Scenario, MachineConfig<S>, Topology<S>)> {
    let g2 = base.n_gpus * base.n_gpus;
    let mut shape = base.gemm;
    let mut m = *machine;
    let mut t = *topo;
    let tag = match axis {
        SweepAxis::M => {
            shape.m = round_dim(value, g2);
            shape.m.to_string()
        }
        SweepAxis::N => {
            shape.n = value.round().max(1.0) as u64;
            shape.n.to_string()
        }
        SweepAxis::K => {
            shape.k = round_dim(value, g2);
            shape.k.to_string()
        }
        SweepAxis::LinkBw => {
            let bw = S::from_f64_lossy(value);
            t = match t.kind {
                TopologyKind::Mesh => Topology::mesh(t.n_gpus, bw)?,
                TopologyKind::Switch => Topology::switch(t.n_gpus, bw)?,
            }
            .with_latency(t.latency)?;
            format!("{value:e}")
        }
        SweepAxis::PeakFlops => {
            m.peak_flops = S::from_f64_lossy(value);
            format!("{value:e}")
        }
    };
    let shape = GemmShape::new(shape.m, shape.n, shape.k, shape.elt_bytes)?;
    let scenario = Scenario {
        name: format!("{}@{}={}", base.name, axis, tag),
        gemm: shape,
        ..base.clone()
    };
    scenario.validate()?;
    Ok((scenario, m, t))
}

/// Simulates `schedules` at every point of `spec`, varying `base`.
pub fn run_sweep<S: Scalar>(
    base: &Scenario,
    machine: &MachineConfig<S>,
    topo: &Topology<S>,
    loss: &LossModel<S>,
    spec: SweepSpec,
    schedules: &[ScheduleKind],
) -> Result<SweepReport> {
    if schedules.is_empty() {
        return Err(Error::Config("no schedules selected".into()));
    }
    let mut values = spec.values()?;
    if matches!(spec.axis, SweepAxis::M | SweepAxis::N | SweepAxis::K) {
        let g2 = (base.n_gpus * base.n_gpus) as f64;
        let unit = if spec.axis == SweepAxis::N { 1.0 } else { g2 };
        values = values.iter().map(|v| ((v / unit).round().max(1.0)) * unit).collect();
        values.dedup();
    }
    let points = values
        .par_iter()
        .map(|&v| {
            let (scenario, m, t) = apply(spec.axis, v, base, machine, topo)?;
            let serial = simulate(&plan_serial(&scenario, &t)?, &m, &t, loss)?;
            let mut speedups = Vec::new();
            for &k in schedules {
                if !k.supports(&scenario) {
                    continue;
                }
                let r = simulate(&plan(&scenario, &t, k)?, &m, &t, loss)?;
                speedups.push((k, speedup(&r, &serial)?.to_f64_lossy()));
            }
            Ok(SweepPoint {
                value: v,
                ratio: gemm_comm_ratio(&scenario, &m, &t).to_f64_lossy(),
                scenario,
                speedups,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport {
        spec,
        schedules: schedules.to_vec(),
        points,
    })
}

/// Exponents of 2 for `M` in the synthetic grid.
pub const SYNTHETIC_M_LOG2: [f64; 4] = [13.0, 15.0 + 2.0 / 3.0, 18.0 + 1.0 / 3.0, 21.0];
/// Exponents of 2 for `K` in the synthetic grid.
pub const SYNTHETIC_K_LOG2: [u32; 4] = [12, 14, 16, 18];
pub const SYNTHETIC_N: u64 = 16384;

/// A 4x4 grid, log-spaced in `M` over `[2^13, 2^21]` and `K` over
/// `[2^12, 2^18]`, with `N = 16384`. `M` is rounded to a multiple of `G^2`.
pub fn synthetic_grid(n_gpus: u64, elt_bytes: u64) -> Result<Vec<Scenario>> {
    let g2 = n_gpus * n_gpus;
    let mut out = Vec::with_capacity(16);
    for (i, &me) in SYNTHETIC_M_LOG2.iter().enumerate() {
        for (j, &ke) in SYNTHETIC_K_LOG2.iter().enumerate() {
            let m = round_dim(2f64.powf(me), g2);
            let k = 1u64 << ke;
            out.push(Scenario::new(
                format!("s{}{}", i + 1, j + 1),
                Parallelism::SpTp,
                "synthetic",
                GemmShape::new(m, SYNTHETIC_N, k, elt_bytes)?,
                Collective::AllGather,
                n_gpus,
            )?);
        }
    }
    Ok(out)
}
