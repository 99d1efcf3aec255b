//! Schedule selection from GEMM shape and machine throughput, and its
//! validation against exhaustive simulation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::engine::{simulate, speedup};
use crate::gemm::gemm_flops;
use crate::lossmodel::LossModel;
use crate::machine::MachineConfig;
use crate::planner::{plan, plan_serial, ScheduleKind};
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::topology::Topology;

/// Flop count above which the unfused heterogeneous schedule is chosen,
/// in units of `peak_flops * t_ref`.
pub const UNFUSED_FACTOR: f64 = 5.0;

/// Picks a FiCCO schedule.
///
/// Row sharding only pays off when `M > K`; otherwise the 2D schedule is
/// chosen. For 1D, the product `OTB * MT` (which is `2MNK`) is compared
/// with the work the machine does in `t_ref` seconds.
pub fn select_schedule<S: Scalar>(scenario: &Scenario, machine: &MachineConfig<S>) -> ScheduleKind {
    let g = &scenario.gemm;
    if g.m <= g.k {
        return ScheduleKind::UniformFused2D;
    }
    let combined = S::from_count(gemm_flops(g));
    let budget = machine.peak_flops * machine.t_ref;
    if combined < budget {
        ScheduleKind::UniformFused1D
    } else if combined > budget * S::from_f64_lossy(UNFUSED_FACTOR) {
        ScheduleKind::HeteroUnfused1D
    } else {
        ScheduleKind::HeteroFused1D
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicRow {
    pub scenario: String,
    pub chosen: ScheduleKind,
    pub best: ScheduleKind,
    pub agree: bool,
    pub regret: f64,
    pub speedup_chosen: f64,
    pub speedup_best: f64,
    /// Speedup of every FiCCO kind the scenario supports, in enum order.
    pub speedups: Vec<(ScheduleKind, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeuristicReport {
    pub rows: Vec<HeuristicRow>,
}

impl HeuristicReport {
    pub fn accuracy(&self) -> f64 {
        let hits = self.rows.iter().filter(|r| r.agree).count();
        hits as f64 / self.rows.len() as f64
    }

    pub fn mean_regret(&self) -> f64 {
        self.rows.iter().map(|r| r.regret).sum::<f64>() / self.rows.len() as f64
    }

    /// Mean regret over the scenarios where the choice was wrong; 0 if none.
    pub fn mean_mismatch_regret(&self) -> f64 {
        let misses: Vec<f64> = self.rows.iter().filter(|r| !r.agree).map(|r| r.regret).collect();
        if misses.is_empty() {
            0.0
        } else {
            misses.iter().sum::<f64>() / misses.len() as f64
        }
    }

    /// `scenario,chosen,best,agree,regret,speedup_chosen,speedup_best`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,chosen,best,agree,regret,speedup_chosen,speedup_best\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6}\n",
                r.scenario, r.chosen, r.best, r.agree, r.regret, r.speedup_chosen, r.speedup_best
            ));
        }
        out
    }
}

/// Speedup over serial of every FiCCO kind `scenario` supports.
pub fn ficco_speedups<S: Scalar>(
    scenario: &Scenario,
    machine: &MachineConfig<S>,
    topo: &Topology<S>,
    loss: &LossModel<S>,
) -> Result<Vec<(ScheduleKind, f64)>> {
    let serial = simulate(&plan_serial(scenario, topo)?, machine, topo, loss)?;
    ScheduleKind::FICCO
        .iter()
        .filter(|k| k.supports(scenario))
        .map(|&k| {
            let r = simulate(&plan(scenario, topo, k)?, machine, topo, loss)?;
            Ok((k, speedup(&r, &serial)?.to_f64_lossy()))
        })
        .collect()
}

fn evaluate<S: Scalar>(
    scenario: &Scenario,
    machine: &MachineConfig<S>,
    topo: &Topology<S>,
    loss: &LossModel<S>,
) -> Result<HeuristicRow> {
    let speedups = ficco_speedups(scenario, machine, topo, loss)?;
    let (best, speedup_best) = speedups
        .iter()
        .copied()
        .fold(None, |acc: Option<(ScheduleKind, f64)>, (k, s)| match acc {
            Some((_, b)) if b >= s => acc,
            _ => Some((k, s)),
        })
        .ok_or_else(|| Error::UnsupportedSchedule(format!("{}: no FiCCO schedule fits", scenario.name)))?;
    let chosen = select_schedule(scenario, machine);
    let speedup_chosen = speedups.iter().find(|(k, _)| *k == chosen).map_or(0.0, |&(_, s)| s);
    let regret = (1.0 - speedup_chosen / speedup_best).max(0.0);
    Ok(HeuristicRow {
        scenario: scenario.name.clone(),
        chosen,
        best,
        agree: chosen == best,
        regret,
        speedup_chosen,
        speedup_best,
        speedups,
    })
}

/// Compares [`select_schedule`] with the simulated best FiCCO kind for each
/// scenario. A choice the scenario cannot run has regret 1.
pub fn validate_heuristic<S: Scalar>(
    scenarios: &[Scenario],
    machine: &MachineConfig<S>,
    topo: &Topology<S>,
    loss: &LossModel<S>,
) -> Result<HeuristicReport> {
    if scenarios.is_empty() {
        return Err(Error::validation("scenarios", "at least one scenario is required"));
    }
    let rows = scenarios
        .par_iter()
        .map(|s| evaluate(s, machine, topo, loss))
        .collect::<Result<Vec<_>>>()?;
    Ok(HeuristicReport { rows })
}
