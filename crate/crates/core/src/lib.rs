//! Simulator and design-space explorer for fine-grain compute/communication
//! overlap (FiCCO) of an all-gather or all-to-all with the GEMM that
//! consumes it, on a multi-GPU node.
//!
//! The pipeline is:
//!
//! 1. a [`Scenario`] names a GEMM and the collective that feeds it;
//! 2. [`plan`] decomposes it into an [`ExecutionPlan`] for one
//!    [`ScheduleKind`];
//! 3. [`simulate`] runs the plan on a [`MachineConfig`] and [`Topology`],
//!    applying the decomposition and contention losses of a [`LossModel`];
//! 4. [`select_schedule`] predicts the best FiCCO schedule without
//!    simulating, and [`validate_heuristic`] checks it.
//!
//! Numeric types are generic over [`Scalar`] (`f32` or `f64`); byte and flop
//! counts are always `u64`.
//!
//! ```
//! use overlap_sim::*;
//!
//! let g1 = &production_scenarios()[0];
//! let topo = Topology::mesh(8, 64e9).unwrap();
//! let machine = MachineConfig::default();
//! let loss = default_calibration();
//! let serial = simulate(&plan(g1, &topo, ScheduleKind::Serial).unwrap(), &machine, &topo, &loss).unwrap();
//! let ideal = simulate(&plan(g1, &topo, ScheduleKind::Ideal).unwrap(), &machine, &topo, &loss).unwrap();
//! assert!(speedup(&ideal, &serial).unwrap() > 1.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod gemm;
pub mod heuristic;
pub mod lossmodel;
pub mod machine;
pub mod planner;
pub mod scalar;
pub mod scenario;
pub mod sweep;
pub mod topology;

pub use engine::{
    base_duration, contention_factors, simulate, simulate_with, speedup, ResourceBusy, SimOptions, SimResult,
    TaskSpan,
};
pub use error::{Error, Result};
pub use gemm::{gemm_flops, gemm_mt, gemm_otb, shard_gemm, GemmShape, ShardAxis, ShardedGemm};
pub use heuristic::{select_schedule, validate_heuristic, HeuristicReport, HeuristicRow};
pub use lossmodel::{default_calibration, load_calibration, lookup, CalibrationTable, DilClass, LossModel};
pub use machine::{CommAgent, Machine, MachineConfig};
pub use planner::{plan, validate_plan, CommPattern, ExecutionPlan, ScheduleKind, Task, TaskKind, ValidationReport};
pub use scalar::Scalar;
pub use scenario::{parse_scenarios, production_scenarios, write_scenarios, Collective, Parallelism, Scenario};
pub use sweep::{run_sweep, synthetic_grid, SweepAxis, SweepReport, SweepSpec};
pub use topology::{a2a_round_time, all_gather_time, p2p_step_time, Topology, TopologyKind};

pub type Topology32 = Topology<f32>;
pub type Topology64 = Topology<f64>;
pub type MachineConfig32 = MachineConfig<f32>;
pub type MachineConfig64 = MachineConfig<f64>;
pub type Machine32 = Machine<f32>;
pub type Machine64 = Machine<f64>;
pub type LossModel32 = LossModel<f32>;
pub type LossModel64 = LossModel<f64>;
pub type CalibrationTable32 = CalibrationTable<f32>;
pub type CalibrationTable64 = CalibrationTable<f64>;
pub type SimResult32 = SimResult<f32>;
pub type SimResult64 = SimResult<f64>;
