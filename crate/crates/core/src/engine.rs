//! Deterministic discrete-event execution of an [`ExecutionPlan`].
//!
//! Each task carries an amount of work measured in seconds at full speed
//! ([`base_duration`]). Between events every running task progresses at a
//! rate of 1, or `1/CIL` while it is contended:
//!
//! * a GEMM is contended while a transfer touches its GPU (either end) or a
//!   gather/scatter runs there;
//! * a transfer is contended while a GEMM, gather or scatter runs on either
//!   endpoint GPU.
//!
//! Rates are re-evaluated at every task start and completion. Ready tasks
//! are started greedily in task-id order when their resources are free:
//! one GEMM per GPU compute engine, one copy per GPU copy engine,
//! `n_dma_engines` outgoing transfers per GPU, and one transfer per directed
//! GPU pair.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lossmodel::LossModel;
use crate::machine::{CommAgent, MachineConfig};
use crate::planner::{find_cycle, CommPattern, ExecutionPlan, ScheduleKind, Task, TaskKind};
use crate::scalar::Scalar;
use crate::topology::{a2a_round_time, all_gather_time, p2p_step_time, Topology};

/// Where a task ran and how much of it was slowed by contention.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskSpan<S: Scalar = f64> {
    pub id: usize,
    pub gpu: u64,
    pub kind: &'static str,
    pub start: S,
    pub end: S,
    /// Seconds of `[start, end)` spent contended.
    pub contended: S,
    /// Work at full speed, seconds.
    pub work: S,
    /// Integral of the progress rate over `[start, end)`.
    pub progressed: S,
}

impl<S: Scalar> TaskSpan<S> {
    pub fn contended_fraction(&self) -> S {
        let d = self.end - self.start;
        if d > S::zero() {
            self.contended / d
        } else {
            S::zero()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResourceBusy<S: Scalar = f64> {
    pub name: String,
    /// Busy seconds summed over the resource's slots.
    pub busy: S,
    pub slots: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult<S: Scalar = f64> {
    pub scenario: String,
    pub schedule: ScheduleKind,
    pub makespan: S,
    pub timeline: Vec<TaskSpan<S>>,
    pub resources: Vec<ResourceBusy<S>>,
}

impl<S: Scalar> SimResult<S> {
    /// Busy fraction of a resource over the makespan.
    pub fn utilization(&self, r: &ResourceBusy<S>) -> S {
        if self.makespan > S::zero() {
            r.busy / (self.makespan * S::from_count(r.slots as u64))
        } else {
            S::zero()
        }
    }

    /// `task_id,gpu,kind,start_s,end_s,contended_fraction`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("task_id,gpu,kind,start_s,end_s,contended_fraction\n");
        for s in &self.timeline {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:.6}\n",
                s.id,
                s.gpu,
                s.kind,
                s.start.to_f64_lossy(),
                s.end.to_f64_lossy(),
                s.contended_fraction().to_f64_lossy()
            ));
        }
        out
    }
}

/// Serial makespan over schedule makespan.
pub fn speedup<S: Scalar>(result: &SimResult<S>, serial: &SimResult<S>) -> Result<S> {
    if result.scenario != serial.scenario {
        return Err(Error::ScenarioMismatch(result.scenario.clone(), serial.scenario.clone()));
    }
    Ok(serial.makespan / result.makespan)
}

/// Loss multipliers in effect for one plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContentionFactors<S: Scalar = f64> {
    pub gemm: S,
    pub comm: S,
}

fn losses_enabled(schedule: ScheduleKind) -> bool {
    schedule != ScheduleKind::Ideal
}

pub fn contention_factors<S: Scalar>(
    plan: &ExecutionPlan,
    machine: &MachineConfig<S>,
    loss: &LossModel<S>,
) -> Result<ContentionFactors<S>> {
    let mt = plan.scenario.gemm.mt();
    let agent: CommAgent = machine.comm_agent;
    Ok(match plan.schedule {
        ScheduleKind::Ideal => ContentionFactors {
            gemm: S::one(),
            comm: S::one(),
        },
        ScheduleKind::ShardOverlapP2P => ContentionFactors {
            gemm: loss.shard_gemm_cil(mt, agent)?,
            comm: loss.shard_comm_cil(mt, agent)?,
        },
        _ => ContentionFactors {
            gemm: loss.gemm_cil(mt, agent)?,
            comm: loss.comm_cil(mt, agent)?,
        },
    })
}

/// Uncontended duration of `task` within `plan`.
pub fn base_duration<S: Scalar>(
    task: &Task,
    plan: &ExecutionPlan,
    machine: &MachineConfig<S>,
    topo: &Topology<S>,
    loss: &LossModel<S>,
) -> Result<S> {
    let lossy = losses_enabled(plan.schedule);
    Ok(match &task.kind {
        TaskKind::Gemm { kernel, dil, .. } => {
            let ideal = S::from_count(kernel.flops()) / machine.gemm_rate();
            if lossy {
                ideal * loss.gemm_dil(kernel, *dil)? + machine.launch_overhead
            } else {
                ideal
            }
        }
        TaskKind::Transfer { bytes, pattern, .. } => {
            let wire = match pattern {
                CommPattern::AllGather => all_gather_time(topo, *bytes),
                CommPattern::RingStep => p2p_step_time(topo, *bytes),
                CommPattern::AllToAll => a2a_round_time(topo, *bytes),
            };
            // Shard-sized transfers match the serial transfer size: no DIL.
            if lossy && *pattern == CommPattern::AllToAll {
                wire * loss.comm_dil(*bytes)?
            } else {
                wire
            }
        }
        TaskKind::Gather { bytes } | TaskKind::Scatter { bytes } => {
            S::from_count(2 * bytes) / (machine.mem_bw * machine.copy_efficiency)
        }
    })
}

/// Simulation knobs beyond the machine and loss model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions<S: Scalar = f64> {
    /// Each task's work is scaled by a uniform draw from `[1, 1 + jitter]`.
    pub jitter: S,
    pub seed: u64,
}

impl<S: Scalar> Default for SimOptions<S> {
    fn default() -> Self {
        SimOptions {
            jitter: S::zero(),
            seed: 0,
        }
    }
}

pub fn simulate<S: Scalar>(
    plan: &ExecutionPlan,
    machine: &MachineConfig<S>,
    topo: &Topology<S>,
    loss: &LossModel<S>,
) -> Result<SimResult<S>> {
    simulate_with(plan, machine, topo, loss, SimOptions::default())
}

#[derive(Debug, Clone, Copy)]
struct Running<S> {
    id: usize,
    remaining: S,
    rate: S,
    contended: bool,
}

struct Resources {
    n_gpus: usize,
    dma_slots: u32,
    uses_dma: bool,
    compute: Vec<bool>,
    copy: Vec<bool>,
    dma: Vec<u32>,
    link: Vec<bool>,
}

impl Resources {
    fn link_idx(&self, src: u64, dst: u64) -> usize {
        src as usize * self.n_gpus + dst as usize
    }

    fn try_acquire(&mut self, task: &Task) -> bool {
        let p = task.gpu as usize;
        match &task.kind {
            TaskKind::Gemm { .. } => {
                if self.compute[p] {
                    return false;
                }
                self.compute[p] = true;
            }
            TaskKind::Gather { .. } | TaskKind::Scatter { .. } => {
                if self.copy[p] {
                    return false;
                }
                self.copy[p] = true;
            }
            TaskKind::Transfer { src, dst, .. } => {
                let l = self.link_idx(*src, *dst);
                let s = *src as usize;
                if self.link[l] || (self.uses_dma && self.dma[s] >= self.dma_slots) {
                    return false;
                }
                self.link[l] = true;
                if self.uses_dma {
                    self.dma[s] += 1;
                }
            }
        }
        true
    }

    fn release(&mut self, task: &Task) {
        let p = task.gpu as usize;
        match &task.kind {
            TaskKind::Gemm { .. } => self.compute[p] = false,
            TaskKind::Gather { .. } | TaskKind::Scatter { .. } => self.copy[p] = false,
            TaskKind::Transfer { src, dst, .. } => {
                let l = self.link_idx(*src, *dst);
                self.link[l] = false;
                if self.uses_dma {
                    self.dma[*src as usize] -= 1;
                }
            }
        }
    }
}

pub fn simulate_with<S: Scalar>(
    plan: &ExecutionPlan,
    machine: &MachineConfig<S>,
    topo: &Topology<S>,
    loss: &LossModel<S>,
    options: SimOptions<S>,
) -> Result<SimResult<S>> {
    machine.validate()?;
    topo.validate()?;
    let tasks = &plan.tasks;
    let n = tasks.len();
    let g = plan.n_gpus() as usize;
    if topo.n_gpus as usize != g {
        return Err(Error::validation("n_gpus", "plan and topology disagree on GPU count"));
    }
    for (i, t) in tasks.iter().enumerate() {
        if t.id != i {
            return Err(Error::validation("task id", format!("task at index {i} has id {}", t.id)));
        }
        if t.gpu as usize >= g {
            return Err(Error::validation("gpu", format!("task {i} on GPU {} of {g}", t.gpu)));
        }
        if let Some(&d) = t.deps.iter().find(|&&d| d >= n) {
            return Err(Error::Deadlock(vec![i, d]));
        }
    }

    let factors = contention_factors(plan, machine, loss)?;
    let mut work = Vec::with_capacity(n);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    for t in tasks {
        let mut w = base_duration(t, plan, machine, topo, loss)?;
        if options.jitter > S::zero() {
            let u: f64 = rng.gen_range(0.0..1.0);
            w = w * (S::one() + options.jitter * S::from_f64_lossy(u));
        }
        work.push(w);
    }

    let mut dependents = vec![Vec::new(); n];
    let mut waiting: Vec<usize> = tasks.iter().map(|t| t.deps.len()).collect();
    for t in tasks {
        for &d in &t.deps {
            dependents[d].push(t.id);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| waiting[i] == 0).collect();
    let mut res = Resources {
        n_gpus: g,
        dma_slots: machine.n_dma_engines,
        uses_dma: machine.comm_agent == CommAgent::Dma,
        compute: vec![false; g],
        copy: vec![false; g],
        dma: vec![0; g],
        link: vec![false; g * g],
    };

    let zero = S::zero();
    let mut start = vec![zero; n];
    let mut end = vec![zero; n];
    let mut contended = vec![zero; n];
    let mut progressed = vec![zero; n];
    let mut running: Vec<Running<S>> = Vec::new();
    let mut finished = 0usize;
    let mut now = zero;
    let tol = S::epsilon() * S::from_count(64);

    let mut busy_compute = vec![zero; g];
    let mut busy_copy = vec![zero; g];
    let mut busy_dma = vec![zero; g];
    let mut busy_link = vec![zero; g * g];

    while finished < n {
        // Start whatever can start, in id order.
        let candidates: Vec<usize> = ready.iter().copied().collect();
        for id in candidates {
            if res.try_acquire(&tasks[id]) {
                ready.remove(&id);
                start[id] = now;
                running.push(Running {
                    id,
                    remaining: work[id],
                    rate: S::one(),
                    contended: false,
                });
            }
        }
        if running.is_empty() {
            let stuck: Vec<usize> = (0..n).filter(|&i| waiting[i] > 0).collect();
            return Err(Error::Deadlock(find_cycle(tasks).unwrap_or(stuck)));
        }

        // Contention state per GPU.
        let mut xfer_on = vec![0u32; g];
        let mut compute_on = vec![false; g];
        let mut copy_on = vec![false; g];
        for r in &running {
            match &tasks[r.id].kind {
                TaskKind::Transfer { src, dst, .. } => {
                    xfer_on[*src as usize] += 1;
                    xfer_on[*dst as usize] += 1;
                }
                TaskKind::Gemm { .. } => compute_on[tasks[r.id].gpu as usize] = true,
                _ => copy_on[tasks[r.id].gpu as usize] = true,
            }
        }
        for r in running.iter_mut() {
            let t = &tasks[r.id];
            let p = t.gpu as usize;
            let (hit, cil) = match &t.kind {
                TaskKind::Gemm { .. } => (xfer_on[p] > 0 || copy_on[p], factors.gemm),
                TaskKind::Transfer { src, dst, .. } => {
                    let busy = |q: usize| compute_on[q] || copy_on[q];
                    (busy(*src as usize) || busy(*dst as usize), factors.comm)
                }
                _ => (false, S::one()),
            };
            r.contended = hit && cil > S::one();
            r.rate = if r.contended { S::one() / cil } else { S::one() };
        }

        // Advance to the earliest completion.
        let dt = running
            .iter()
            .map(|r| r.remaining / r.rate)
            .fold(S::infinity(), S::min);
        for r in running.iter_mut() {
            let step = r.rate * dt;
            r.remaining = r.remaining - step;
            progressed[r.id] = progressed[r.id] + step;
            if r.contended {
                contended[r.id] = contended[r.id] + dt;
            }
            let t = &tasks[r.id];
            let p = t.gpu as usize;
            match &t.kind {
                TaskKind::Gemm { .. } => busy_compute[p] = busy_compute[p] + dt,
                TaskKind::Transfer { src, dst, .. } => {
                    busy_dma[*src as usize] = busy_dma[*src as usize] + dt;
                    let l = res.link_idx(*src, *dst);
                    busy_link[l] = busy_link[l] + dt;
                }
                _ => busy_copy[p] = busy_copy[p] + dt,
            }
        }
        now = now + dt;

        let mut i = 0;
        while i < running.len() {
            let r = running[i];
            if r.remaining <= tol * work[r.id] {
                running.swap_remove(i);
                end[r.id] = now;
                finished += 1;
                res.release(&tasks[r.id]);
                for &d in &dependents[r.id] {
                    waiting[d] -= 1;
                    if waiting[d] == 0 {
                        ready.insert(d);
                    }
                }
            } else {
                i += 1;
            }
        }
        // Keep iteration order independent of swap_remove.
        running.sort_unstable_by_key(|r| r.id);
    }

    let timeline = tasks
        .iter()
        .map(|t| TaskSpan {
            id: t.id,
            gpu: t.gpu,
            kind: t.kind.label(),
            start: start[t.id],
            end: end[t.id],
            contended: contended[t.id],
            work: work[t.id],
            progressed: progressed[t.id],
        })
        .collect();

    let mut resources = Vec::new();
    for p in 0..g {
        resources.push(ResourceBusy { name: format!("gpu{p}.compute"), busy: busy_compute[p], slots: 1 });
        resources.push(ResourceBusy { name: format!("gpu{p}.copy"), busy: busy_copy[p], slots: 1 });
        if res.uses_dma {
            resources.push(ResourceBusy {
                name: format!("gpu{p}.dma"),
                busy: busy_dma[p],
                slots: machine.n_dma_engines,
            });
        }
    }
    for s in 0..g {
        for d in (0..g).filter(|&d| d != s) {
            resources.push(ResourceBusy {
                name: format!("link{s}->{d}"),
                busy: busy_link[s * g + d],
                slots: 1,
            });
        }
    }

    let makespan = end.iter().copied().fold(zero, S::max);
    Ok(SimResult {
        scenario: plan.scenario.name.clone(),
        schedule: plan.schedule,
        makespan,
        timeline,
        resources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gemm::GemmShape;
    use crate::lossmodel::{default_calibration, CalibrationTable, DilClass};
    use crate::planner::{plan, plan_ideal, plan_serial, ChunkGeometry, Coverage};
    use crate::scenario::{production_scenarios, Collective, Parallelism, Scenario};

    fn g1() -> Scenario {
        production_scenarios().remove(0)
    }

    fn unit_machine() -> MachineConfig<f64> {
        MachineConfig {
            peak_flops: 1e15,
            gemm_efficiency: 1.0,
            launch_overhead: 0.0,
            ..MachineConfig::default()
        }
    }

    fn mesh() -> Topology<f64> {
        Topology::mesh(8, 64e9).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn base_duration_examples() {
        let loss = default_calibration::<f64>();
        let m = unit_machine();
        let serial = plan_serial(&g1(), &mesh()).unwrap();
        let gemm = serial.tasks.iter().find(|t| t.kind.is_gemm()).unwrap();
        assert!(rel(base_duration(gemm, &serial, &m, &mesh(), &loss).unwrap(), 70.369e-3) < 1e-4);

        let ficco = plan(&g1(), &mesh(), ScheduleKind::UniformFused1D).unwrap();
        let xfer = ficco.tasks.iter().find(|t| t.kind.is_transfer()).unwrap();
        let d = base_duration(xfer, &ficco, &m, &mesh(), &loss).unwrap();
        let expected = 67_108_864.0 / 64e9 * loss.comm_dil(67_108_864).unwrap();
        assert!(rel(d, expected) < 1e-12);

        let gather = Task { id: 0, gpu: 0, kind: TaskKind::Gather { bytes: 536_870_912 }, deps: vec![] };
        let m2 = MachineConfig { mem_bw: 5.3e12, copy_efficiency: 1.0, ..m };
        assert!(rel(base_duration(&gather, &ficco, &m2, &mesh(), &loss).unwrap(), 0.2026e-3) < 1e-3);
    }

    #[test]
    fn serial_makespan_is_phase_sum() {
        let loss = default_calibration::<f64>();
        let p = plan_serial(&g1(), &mesh()).unwrap();
        let r = simulate(&p, &unit_machine(), &mesh(), &loss).unwrap();
        let comm = 536_870_912.0 / 64e9;
        let gemm = 70_368_744_177_664.0 / 1e15;
        assert!(rel(r.makespan, comm + gemm) < 1e-12);
        assert!(rel(r.makespan, 78.758e-3) < 1e-4);
        assert!(r.timeline.iter().all(|s| s.contended == 0.0));
    }

    #[test]
    fn ideal_matches_pipeline_formula() {
        let loss = default_calibration::<f64>();
        let p = plan_ideal(&g1(), &mesh()).unwrap();
        let r = simulate(&p, &unit_machine(), &mesh(), &loss).unwrap();
        let tc = 536_870_912.0 / 64e9;
        let tg: f64 = 70.368_744_177_664e-3;
        assert!(rel(r.makespan, tg.max(tc) + tg.min(tc) / 8.0) < 1e-9);
        let serial = simulate(&plan_serial(&g1(), &mesh()).unwrap(), &unit_machine(), &mesh(), &loss).unwrap();
        let s = speedup(&r, &serial).unwrap();
        assert!((s - 1.103).abs() < 1e-3);
        assert_eq!(speedup(&serial, &serial).unwrap(), 1.0);
    }

    /// One gemm and one transfer on the same GPU pair, both with one second
    /// of work and CIL 1.5: both progress at 2/3 and end at 1.5 s.
    #[test]
    fn rate_integration_by_hand() {
        let scenario = Scenario::new(
            "pair",
            Parallelism::SpTp,
            "m",
            GemmShape::new(4, 1, 4, 1).unwrap(),
            Collective::AllGather,
            2,
        )
        .unwrap();
        let kernel = GemmShape::new(1, 1, 1, 1).unwrap();
        let tasks = vec![
            Task {
                id: 0,
                gpu: 0,
                kind: TaskKind::Gemm { kernel, additive: false, dil: DilClass::Unity, coverage: Coverage::Rows(vec![(0, 4)]) },
                deps: vec![],
            },
            Task {
                id: 1,
                gpu: 0,
                kind: TaskKind::Transfer { src: 1, dst: 0, bytes: 1, pattern: CommPattern::AllGather, step: 0 },
                deps: vec![],
            },
        ];
        let plan = ExecutionPlan {
            schedule: ScheduleKind::UniformFused1D,
            scenario,
            tasks,
            geometry: ChunkGeometry { rows: 1, cols: 1 },
        };
        let machine = MachineConfig { peak_flops: 2.0, gemm_efficiency: 1.0, launch_overhead: 0.0, ..MachineConfig::default() };
        let topo = Topology::mesh(2, 1.0).unwrap();
        let mut loss = LossModel::<f64>::identity();
        let t = CalibrationTable::from_f64("cil", &[(1.0, 1.5)]).unwrap();
        loss.gemm_cil.dma = t.clone();
        loss.gemm_cil.core = t.clone();
        loss.comm_cil.dma = t.clone();
        loss.comm_cil.core = t;
        let r = simulate(&plan, &machine, &topo, &loss).unwrap();
        for s in &r.timeline {
            assert!(rel(s.end, 1.5) < 1e-12, "{s:?}");
            assert!(rel(s.progressed, 1.0) < 1e-12);
            assert!(rel(s.contended_fraction(), 1.0) < 1e-12);
        }
    }

    #[test]
    fn deadlock_is_reported() {
        let mut p = plan_serial(&g1(), &mesh()).unwrap();
        let last = p.tasks.len() - 1;
        p.tasks[0].deps.push(last);
        p.tasks[last].deps.push(0);
        match simulate(&p, &unit_machine(), &mesh(), &LossModel::identity()) {
            Err(Error::Deadlock(ids)) => assert!(ids.contains(&0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn speedup_rejects_mismatched_scenarios() {
        let loss = LossModel::<f64>::identity();
        let t = production_scenarios();
        let a = simulate(&plan_serial(&t[0], &mesh()).unwrap(), &unit_machine(), &mesh(), &loss).unwrap();
        let b = simulate(&plan_serial(&t[1], &mesh()).unwrap(), &unit_machine(), &mesh(), &loss).unwrap();
        assert!(matches!(speedup(&a, &b), Err(Error::ScenarioMismatch(..))));
    }

    #[test]
    fn timeline_invariants_and_utilization() {
        let loss = default_calibration::<f64>();
        for kind in ScheduleKind::ALL {
            let p = plan(&g1(), &mesh(), kind).unwrap();
            let r = simulate(&p, &MachineConfig::default(), &mesh(), &loss).unwrap();
            let max_end = r.timeline.iter().map(|s| s.end).fold(0.0, f64::max);
            assert_eq!(r.makespan, max_end);
            for s in &r.timeline {
                assert!(s.end >= s.start);
                for &d in &p.tasks[s.id].deps {
                    assert!(r.timeline[d].end <= s.start, "{kind}: causality");
                }
                assert!(rel(s.progressed, s.work) < 1e-9, "{kind}: work conservation");
            }
            for res in &r.resources {
                assert!(r.utilization(res) <= 1.0 + 1e-12, "{}", res.name);
            }
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let loss = default_calibration::<f64>();
        let p = plan(&g1(), &mesh(), ScheduleKind::HeteroFused1D).unwrap();
        let m = MachineConfig::default();
        let opts = SimOptions { jitter: 0.06, seed: 7 };
        let a = simulate_with(&p, &m, &mesh(), &loss, opts).unwrap();
        let b = simulate_with(&p, &m, &mesh(), &loss, opts).unwrap();
        assert_eq!(a, b);
        let c = simulate_with(&p, &m, &mesh(), &loss, SimOptions { seed: 8, ..opts }).unwrap();
        assert_ne!(a.makespan, c.makespan);
        let base = simulate(&p, &m, &mesh(), &loss).unwrap();
        assert!(a.makespan >= base.makespan);
    }

    #[test]
    fn f32_simulation_tracks_f64() {
        let p = plan(&g1(), &mesh(), ScheduleKind::UniformFused2D).unwrap();
        let r64 = simulate(&p, &MachineConfig::<f64>::default(), &mesh(), &default_calibration()).unwrap();
        let mesh32 = Topology::<f32>::mesh(8, 64e9).unwrap();
        let r32 = simulate(&p, &MachineConfig::<f32>::default(), &mesh32, &default_calibration()).unwrap();
        assert!(rel(r32.makespan as f64, r64.makespan) < 1e-4);
    }

    #[test]
    fn trace_csv_shape() {
        let p = plan_serial(&g1(), &mesh()).unwrap();
        let r = simulate(&p, &unit_machine(), &mesh(), &LossModel::identity()).unwrap();
        let csv = r.trace_csv();
        assert!(csv.starts_with("task_id,gpu,kind,start_s,end_s,contended_fraction\n"));
        assert_eq!(csv.lines().count(), p.tasks.len() + 1);
    }
}
