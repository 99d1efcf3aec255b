//! Expansion of a scenario into a per-GPU task DAG for each schedule.
//!
//! Geometry (G GPUs, input `A` of `M x K` rows split into `G` shards):
//!
//! * shard: `M/G` rows of `A`, the data each GPU owns at the start;
//! * 1D fine chunk: `M/G^2` rows x `K` of a shard;
//! * 2D fine chunk: `M/G` rows x `K/G` columns of a shard.
//!
//! Fine-grain schedules run `G` all-to-all rounds; in round `r` every GPU
//! sends chunk `r` of its shard to each peer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gemm::{GemmShape, ShardAxis};
use crate::lossmodel::DilClass;
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScheduleKind {
    Serial,
    Ideal,
    ShardOverlapP2P,
    UniformFused1D,
    HeteroFused1D,
    HeteroUnfused1D,
    UniformFused2D,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 7] = [
        ScheduleKind::Serial,
        ScheduleKind::Ideal,
        ScheduleKind::ShardOverlapP2P,
        ScheduleKind::UniformFused1D,
        ScheduleKind::HeteroFused1D,
        ScheduleKind::HeteroUnfused1D,
        ScheduleKind::UniformFused2D,
    ];

    /// The four fine-grain schedules, in tie-break order.
    pub const FICCO: [ScheduleKind; 4] = [
        ScheduleKind::UniformFused1D,
        ScheduleKind::HeteroFused1D,
        ScheduleKind::HeteroUnfused1D,
        ScheduleKind::UniformFused2D,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Serial => "serial",
            ScheduleKind::Ideal => "ideal",
            ScheduleKind::ShardOverlapP2P => "shard-overlap-p2p",
            ScheduleKind::UniformFused1D => "uniform-fused-1d",
            ScheduleKind::HeteroFused1D => "hetero-fused-1d",
            ScheduleKind::HeteroUnfused1D => "hetero-unfused-1d",
            ScheduleKind::UniformFused2D => "uniform-fused-2d",
        }
    }

    pub fn is_ficco(self) -> bool {
        ScheduleKind::FICCO.contains(&self)
    }

    pub fn is_1d(self) -> bool {
        matches!(
            self,
            ScheduleKind::UniformFused1D | ScheduleKind::HeteroFused1D | ScheduleKind::HeteroUnfused1D
        )
    }

    /// Whether `scenario` has the divisibility this schedule needs.
    pub fn supports(self, scenario: &Scenario) -> bool {
        let (g, m, k) = (scenario.n_gpus, scenario.gemm.m, scenario.gemm.k);
        match self {
            ScheduleKind::Serial | ScheduleKind::ShardOverlapP2P => m % g == 0,
            ScheduleKind::UniformFused2D => m % g == 0 && k % g == 0,
            _ => m % (g * g) == 0,
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown schedule `{s}`")))
    }
}

/// Which topology formula times a transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommPattern {
    /// One of the `G-1` concurrent shard transfers of an all-gather.
    AllGather,
    /// One step of a peer-to-peer ring.
    RingStep,
    /// One chunk of an all-to-all round.
    AllToAll,
}

/// Output region a GEMM task produces, used to check exact coverage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coverage {
    /// Half-open row ranges of the output.
    Rows(Vec<(u64, u64)>),
    /// A half-open range of the reduction dimension, over all rows.
    KBlock(u64, u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskKind {
    Transfer {
        src: u64,
        dst: u64,
        bytes: u64,
        pattern: CommPattern,
        /// Ring step or all-to-all round index.
        step: u64,
    },
    /// Local copy assembling received chunks into a contiguous GEMM input.
    Gather { bytes: u64 },
    Gemm {
        kernel: GemmShape,
        additive: bool,
        dil: DilClass,
        coverage: Coverage,
    },
    /// Local copy of a step's output into the final output layout.
    Scatter { bytes: u64 },
}

impl TaskKind {
    pub fn label(&self) -> &'static str {
        match self {
            TaskKind::Transfer { .. } => "transfer",
            TaskKind::Gather { .. } => "gather",
            TaskKind::Gemm { .. } => "gemm",
            TaskKind::Scatter { .. } => "scatter",
        }
    }

    pub fn bytes(&self) -> u64 {
        match self {
            TaskKind::Transfer { bytes, .. }
            | TaskKind::Gather { bytes }
            | TaskKind::Scatter { bytes } => *bytes,
            TaskKind::Gemm { .. } => 0,
        }
    }

    pub fn flops(&self) -> u64 {
        match self {
            TaskKind::Gemm { kernel, .. } => kernel.flops(),
            _ => 0,
        }
    }

    pub fn is_gemm(&self) -> bool {
        matches!(self, TaskKind::Gemm { .. })
    }

    pub fn is_transfer(&self) -> bool {
        matches!(self, TaskKind::Transfer { .. })
    }

    pub fn is_copy(&self) -> bool {
        matches!(self, TaskKind::Gather { .. } | TaskKind::Scatter { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    /// Owning GPU; the receiver for transfers.
    pub gpu: u64,
    pub kind: TaskKind,
    pub deps: Vec<usize>,
}

/// Size of the unit of communication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkGeometry {
    pub rows: u64,
    pub cols: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub schedule: ScheduleKind,
    pub scenario: Scenario,
    pub tasks: Vec<Task>,
    pub geometry: ChunkGeometry,
}

impl ExecutionPlan {
    pub fn n_gpus(&self) -> u64 {
        self.scenario.n_gpus
    }

    pub fn tasks_on(&self, gpu: u64) -> impl Iterator<Item = &Task> {
        self.tasks.iter().filter(move |t| t.gpu == gpu)
    }

    /// `task_id,gpu,kind,bytes,flops,deps` with `;`-separated deps.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task_id,gpu,kind,bytes,flops,deps\n");
        for t in &self.tasks {
            let deps: Vec<String> = t.deps.iter().map(|d| d.to_string()).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                t.id,
                t.gpu,
                t.kind.label(),
                t.kind.bytes(),
                t.kind.flops(),
                deps.join(";")
            ));
        }
        out
    }
}

struct Builder {
    tasks: Vec<Task>,
}

impl Builder {
    fn new() -> Self {
        Builder { tasks: Vec::new() }
    }

    fn push(&mut self, gpu: u64, kind: TaskKind, deps: Vec<usize>) -> usize {
        let id = self.tasks.len();
        self.tasks.push(Task { id, gpu, kind, deps });
        id
    }

    fn gemm(
        &mut self,
        gpu: u64,
        kernel: GemmShape,
        additive: bool,
        dil: DilClass,
        coverage: Coverage,
        deps: Vec<usize>,
    ) -> usize {
        self.push(
            gpu,
            TaskKind::Gemm {
                kernel,
                additive,
                dil,
                coverage,
            },
            deps,
        )
    }
}

fn check_topology<S: Scalar>(scenario: &Scenario, topo: &Topology<S>) -> Result<()> {
    if scenario.n_gpus != topo.n_gpus {
        return Err(Error::validation(
            "n_gpus",
            format!(
                "scenario `{}` uses {} GPUs but the topology has {}",
                scenario.name, scenario.n_gpus, topo.n_gpus
            ),
        ));
    }
    Ok(())
}

fn require(dim_name: ShardAxis, dim: u64, degree: u64) -> Result<()> {
    if !dim.is_multiple_of(degree) {
        return Err(Error::Divisibility {
            axis: dim_name,
            dim,
            degree,
        });
    }
    Ok(())
}

fn with_rows(shape: &GemmShape, m: u64) -> GemmShape {
    GemmShape { m, ..*shape }
}

/// Dispatches to the planner for `kind`.
pub fn plan<S: Scalar>(scenario: &Scenario, topo: &Topology<S>, kind: ScheduleKind) -> Result<ExecutionPlan> {
    match kind {
        ScheduleKind::Serial => plan_serial(scenario, topo),
        ScheduleKind::Ideal => plan_ideal(scenario, topo),
        ScheduleKind::ShardOverlapP2P => plan_shard_overlap(scenario, topo),
        k => plan_ficco(scenario, topo, k),
    }
}

/// All-gather, then one full-size GEMM per GPU.
pub fn plan_serial<S: Scalar>(scenario: &Scenario, topo: &Topology<S>) -> Result<ExecutionPlan> {
    check_topology(scenario, topo)?;
    let g = scenario.n_gpus;
    let gemm = scenario.gemm;
    require(ShardAxis::RowM, gemm.m, g)?;
    let shard = scenario.shard_bytes();
    let mut b = Builder::new();
    let mut incoming = vec![Vec::new(); g as usize];
    for dst in 0..g {
        for src in (0..g).filter(|&s| s != dst) {
            let id = b.push(
                dst,
                TaskKind::Transfer {
                    src,
                    dst,
                    bytes: shard,
                    pattern: CommPattern::AllGather,
                    step: 0,
                },
                vec![],
            );
            incoming[dst as usize].push(id);
        }
    }
    for p in 0..g {
        b.gemm(
            p,
            gemm,
            false,
            DilClass::Unity,
            Coverage::Rows(vec![(0, gemm.m)]),
            incoming[p as usize].clone(),
        );
    }
    Ok(ExecutionPlan {
        schedule: ScheduleKind::Serial,
        scenario: scenario.clone(),
        tasks: b.tasks,
        geometry: ChunkGeometry {
            rows: gemm.m / g,
            cols: gemm.k,
        },
    })
}

/// Ring-based shard overlap: compute on one shard while the next arrives.
pub fn plan_shard_overlap<S: Scalar>(scenario: &Scenario, topo: &Topology<S>) -> Result<ExecutionPlan> {
    check_topology(scenario, topo)?;
    let g = scenario.n_gpus;
    let gemm = scenario.gemm;
    require(ShardAxis::RowM, gemm.m, g)?;
    let ms = gemm.m / g;
    let shard = scenario.shard_bytes();
    let mut b = Builder::new();

    // ring[i][p]: transfer delivering step-i data into GPU p.
    let mut ring = vec![vec![usize::MAX; g as usize]; g as usize];
    for step in 1..g {
        for p in 0..g {
            let src = (p + g - 1) % g;
            let deps = if step >= 2 {
                vec![ring[(step - 1) as usize][src as usize]]
            } else {
                vec![]
            };
            ring[step as usize][p as usize] = b.push(
                p,
                TaskKind::Transfer {
                    src,
                    dst: p,
                    bytes: shard,
                    pattern: CommPattern::RingStep,
                    step,
                },
                deps,
            );
        }
    }
    let kernel = with_rows(&gemm, ms);
    for p in 0..g {
        for step in 0..g {
            let owner = (p + g - step) % g;
            let deps = if step == 0 {
                vec![]
            } else {
                vec![ring[step as usize][p as usize]]
            };
            b.gemm(
                p,
                kernel,
                false,
                DilClass::Shard(ShardAxis::RowM),
                Coverage::Rows(vec![(owner * ms, (owner + 1) * ms)]),
                deps,
            );
        }
    }
    Ok(ExecutionPlan {
        schedule: ScheduleKind::ShardOverlapP2P,
        scenario: scenario.clone(),
        tasks: b.tasks,
        geometry: ChunkGeometry { rows: ms, cols: gemm.k },
    })
}

/// Uniform 1D pipeline with every loss removed and no gather/scatter.
pub fn plan_ideal<S: Scalar>(scenario: &Scenario, topo: &Topology<S>) -> Result<ExecutionPlan> {
    build_ficco(scenario, topo, ScheduleKind::Ideal)
}

/// One of the four fine-grain schedules.
pub fn plan_ficco<S: Scalar>(scenario: &Scenario, topo: &Topology<S>, kind: ScheduleKind) -> Result<ExecutionPlan> {
    if !kind.is_ficco() {
        return Err(Error::UnsupportedSchedule(kind.to_string()));
    }
    build_ficco(scenario, topo, kind)
}

fn build_ficco<S: Scalar>(scenario: &Scenario, topo: &Topology<S>, kind: ScheduleKind) -> Result<ExecutionPlan> {
    check_topology(scenario, topo)?;
    let g = scenario.n_gpus;
    let gemm = scenario.gemm;
    let elt = gemm.elt_bytes;
    let two_d = kind == ScheduleKind::UniformFused2D;
    if two_d {
        require(ShardAxis::RowM, gemm.m, g)?;
        require(ShardAxis::ColK, gemm.k, g)?;
    } else {
        require(ShardAxis::RowM, gemm.m, g * g)?;
    }
    let ms = gemm.m / g;
    let geometry = if two_d {
        ChunkGeometry { rows: ms, cols: gemm.k / g }
    } else {
        ChunkGeometry { rows: ms / g, cols: gemm.k }
    };
    let chunk = geometry.rows * geometry.cols * elt;
    let mut b = Builder::new();

    // xfer[r][src][dst]
    let gu = g as usize;
    let mut xfer = vec![vec![vec![usize::MAX; gu]; gu]; gu];
    for r in 0..g {
        for src in 0..g {
            for dst in (0..g).filter(|&d| d != src) {
                xfer[r as usize][src as usize][dst as usize] = b.push(
                    dst,
                    TaskKind::Transfer {
                        src,
                        dst,
                        bytes: chunk,
                        pattern: CommPattern::AllToAll,
                        step: r,
                    },
                    vec![],
                );
            }
        }
    }
    let round_into = |r: u64, dst: u64| -> Vec<usize> {
        (0..g)
            .filter(|&s| s != dst)
            .map(|s| xfer[r as usize][s as usize][dst as usize])
            .collect()
    };
    let mc = geometry.rows;
    let chunk_rows = |q: u64, r: u64| (q * ms + r * mc, q * ms + (r + 1) * mc);

    for p in 0..g {
        match kind {
            ScheduleKind::Ideal | ScheduleKind::UniformFused1D => {
                let ideal = kind == ScheduleKind::Ideal;
                for s in 0..g {
                    let mut deps = round_into(s, p);
                    if !ideal {
                        let gather = b.push(p, TaskKind::Gather { bytes: ms * gemm.k * elt }, deps);
                        deps = vec![gather];
                    }
                    let rows = (0..g).map(|q| chunk_rows(q, s)).collect();
                    let dil = if ideal {
                        DilClass::Unity
                    } else {
                        DilClass::Shard(ShardAxis::RowM)
                    };
                    let step = b.gemm(p, with_rows(&gemm, ms), false, dil, Coverage::Rows(rows), deps);
                    if !ideal {
                        b.push(p, TaskKind::Scatter { bytes: ms * gemm.n * elt }, vec![step]);
                    }
                }
            }
            ScheduleKind::HeteroFused1D | ScheduleKind::HeteroUnfused1D => {
                b.gemm(
                    p,
                    with_rows(&gemm, ms),
                    false,
                    DilClass::Shard(ShardAxis::RowM),
                    Coverage::Rows(vec![(p * ms, (p + 1) * ms)]),
                    vec![],
                );
                for s in 0..g {
                    if kind == ScheduleKind::HeteroFused1D {
                        let rows = (0..g).filter(|&q| q != p).map(|q| chunk_rows(q, s)).collect();
                        b.gemm(
                            p,
                            with_rows(&gemm, (g - 1) * mc),
                            false,
                            DilClass::FusedChunks(ShardAxis::RowM),
                            Coverage::Rows(rows),
                            round_into(s, p),
                        );
                    } else {
                        for q in (0..g).filter(|&q| q != p) {
                            b.gemm(
                                p,
                                with_rows(&gemm, mc),
                                false,
                                DilClass::Chunk(ShardAxis::RowM),
                                Coverage::Rows(vec![chunk_rows(q, s)]),
                                vec![xfer[s as usize][q as usize][p as usize]],
                            );
                        }
                    }
                }
            }
            ScheduleKind::UniformFused2D => {
                let kb = gemm.k / g;
                let mut prev: Option<usize> = None;
                for s in 0..g {
                    let gather = b.push(p, TaskKind::Gather { bytes: gemm.m * kb * elt }, round_into(s, p));
                    let mut deps = vec![gather];
                    deps.extend(prev);
                    let id = b.gemm(
                        p,
                        GemmShape { k: kb, ..gemm },
                        true,
                        DilClass::Shard(ShardAxis::ColK),
                        Coverage::KBlock(s * kb, (s + 1) * kb),
                        deps,
                    );
                    prev = Some(id);
                }
            }
            _ => unreachable!("non fine-grain kinds are planned elsewhere"),
        }
    }
    Ok(ExecutionPlan {
        schedule: kind,
        scenario: scenario.clone(),
        tasks: b.tasks,
        geometry,
    })
}

/// Conservation and structure checks for a plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub schedule: ScheduleKind,
    pub ingress_bytes: Vec<u64>,
    pub gemm_flops: Vec<u64>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_plan(plan: &ExecutionPlan, scenario: &Scenario) -> ValidationReport {
    let g = scenario.n_gpus;
    let gemm = scenario.gemm;
    let mut violations = Vec::new();
    let mut ingress = vec![0u64; g as usize];
    let mut flops = vec![0u64; g as usize];
    let mut rows: Vec<Vec<(u64, u64)>> = vec![Vec::new(); g as usize];
    let mut kblocks: Vec<Vec<(u64, u64)>> = vec![Vec::new(); g as usize];

    for (idx, t) in plan.tasks.iter().enumerate() {
        if t.id != idx {
            violations.push(format!("task at index {idx} has id {}", t.id));
        }
        if t.gpu >= g {
            violations.push(format!("task {} on GPU {} outside 0..{g}", t.id, t.gpu));
            continue;
        }
        for &d in &t.deps {
            if d >= plan.tasks.len() {
                violations.push(format!("task {} depends on missing task {d}", t.id));
            }
        }
        let gi = t.gpu as usize;
        match &t.kind {
            TaskKind::Transfer { src, dst, bytes, .. } => {
                if src == dst {
                    violations.push(format!("transfer {} has src == dst", t.id));
                }
                if *bytes == 0 {
                    violations.push(format!("transfer {} moves zero bytes", t.id));
                }
                if *dst < g {
                    ingress[*dst as usize] += bytes;
                }
            }
            TaskKind::Gather { bytes } | TaskKind::Scatter { bytes } => {
                if *bytes == 0 {
                    violations.push(format!("{} {} moves zero bytes", t.kind.label(), t.id));
                }
            }
            TaskKind::Gemm { kernel, coverage, .. } => {
                flops[gi] += kernel.flops();
                match coverage {
                    Coverage::Rows(r) => rows[gi].extend_from_slice(r),
                    Coverage::KBlock(a, b) => {
                        if kernel.m != gemm.m {
                            violations.push(format!("2D gemm {} covers {} of {} rows", t.id, kernel.m, gemm.m));
                        }
                        kblocks[gi].push((*a, *b));
                    }
                }
            }
        }
    }

    let expected_ingress = (g - 1) * scenario.shard_bytes();
    let expected_flops = gemm.flops();
    for p in 0..g as usize {
        if ingress[p] != expected_ingress {
            violations.push(format!(
                "GPU {p}: ingress {} B != expected {expected_ingress} B",
                ingress[p]
            ));
        }
        if flops[p] != expected_flops {
            violations.push(format!("GPU {p}: gemm ops {} != expected {expected_flops}", flops[p]));
        }
        match (rows[p].is_empty(), kblocks[p].is_empty()) {
            (false, true) => check_partition(&mut violations, p, "rows", &mut rows[p], gemm.m),
            (true, false) => check_partition(&mut violations, p, "K blocks", &mut kblocks[p], gemm.k),
            (true, true) => violations.push(format!("GPU {p}: no gemm coverage")),
            (false, false) => violations.push(format!("GPU {p}: mixes row and K-block coverage")),
        }
    }

    if let Some(cycle) = find_cycle(&plan.tasks) {
        violations.push(format!("dependency cycle through tasks {cycle:?}"));
    }

    ValidationReport {
        schedule: plan.schedule,
        ingress_bytes: ingress,
        gemm_flops: flops,
        violations,
    }
}

fn check_partition(out: &mut Vec<String>, gpu: usize, what: &str, ranges: &mut [(u64, u64)], extent: u64) {
    ranges.sort_unstable();
    let mut cursor = 0;
    for &(a, b) in ranges.iter() {
        if a != cursor || b <= a {
            out.push(format!(
                "GPU {gpu}: {what} coverage is not an exact partition of [0,{extent}) near [{a},{b})"
            ));
            return;
        }
        cursor = b;
    }
    if cursor != extent {
        out.push(format!("GPU {gpu}: {what} coverage ends at {cursor}, expected {extent}"));
    }
}

/// Returns the task ids on some dependency cycle, if any.
pub(crate) fn find_cycle(tasks: &[Task]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let n = tasks.len();
    let mut mark = vec![Mark::New; n];
    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        // Iterative DFS over deps; the stack doubles as the current path.
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        mark[root] = Mark::Active;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let deps = &tasks[node].deps;
            if *next < deps.len() {
                let d = deps[*next];
                *next += 1;
                if d >= n {
                    continue;
                }
                match mark[d] {
                    Mark::New => {
                        mark[d] = Mark::Active;
                        stack.push((d, 0));
                    }
                    Mark::Active => {
                        let start = stack.iter().position(|&(t, _)| t == d).unwrap_or(0);
                        return Some(stack[start..].iter().map(|&(t, _)| t).collect());
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}
