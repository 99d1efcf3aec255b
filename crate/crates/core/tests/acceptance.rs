//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use overlap_sim::heuristic::ficco_speedups;
use overlap_sim::sweep::{default_sweep, gemm_comm_ratio};
use overlap_sim::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const G: u64 = 8;
const LINK_BW: f64 = 64e9;
const ANCHOR_TOL: f64 = 0.02;
const IDEAL_TOL: f64 = 1e-6;
const WORK_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn mesh() -> Topology {
    Topology::mesh(G, LINK_BW).unwrap()
}

fn geomean(v: &[f64]) -> f64 {
    (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
}

fn run(s: &Scenario, kind: ScheduleKind, m: &MachineConfig, t: &Topology, loss: &LossModel) -> SimResult {
    simulate(&plan(s, t, kind).unwrap(), m, t, loss).unwrap()
}

/// Per-GPU ingress and GEMM ops are identical across schedules and equal
/// the all-gather volume and the full GEMM.
fn conservation() -> Outcome {
    let start = Instant::now();
    let mut bad = Vec::new();
    for s in production_scenarios() {
        let g = s.gemm;
        let expected_ingress = (G - 1) * (g.m / G) * g.k * g.elt_bytes;
        let expected_ops = 2 * g.m * g.n * g.k;
        for kind in ScheduleKind::ALL {
            let p = plan(&s, &mesh(), kind).unwrap();
            let mut ingress = vec![0u64; G as usize];
            let mut ops = vec![0u64; G as usize];
            for t in &p.tasks {
                match &t.kind {
                    TaskKind::Transfer { dst, bytes, .. } => ingress[*dst as usize] += bytes,
                    TaskKind::Gemm { kernel, .. } => ops[t.gpu as usize] += 2 * kernel.m * kernel.n * kernel.k,
                    _ => {}
                }
            }
            let report = validate_plan(&p, &s);
            if ingress.iter().any(|&b| b != expected_ingress) || ops.iter().any(|&f| f != expected_ops) || !report.is_ok() {
                bad.push(format!("{}/{}", s.name, kind));
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && elapsed < Duration::from_secs(10);
    outcome(pass, format!("112 plans, {} violations, {:.2?}", bad.len(), elapsed))
}

/// Ring p2p moves one shard per step over one link; all-to-all rounds use
/// every link at once.
fn topology_oracle() -> Outcome {
    let t = mesh();
    let mut worst = String::new();
    let mut pass = true;
    for s in production_scenarios() {
        let shard = s.shard_bytes();
        let ag = all_gather_time(&t, shard);
        let ring = 7.0 * p2p_step_time(&t, shard);
        let a2a = 8.0 * a2a_round_time(&t, shard / 8);
        let ok = ring == 7.0 * ag && a2a == ag && ag == shard as f64 / LINK_BW;
        if !ok {
            pass = false;
            worst = format!("{}: ring {ring:e}, a2a {a2a:e}, ag {ag:e}", s.name);
        }
        // The ring the planner emits takes the same wire time.
        let p = plan(&s, &t, ScheduleKind::ShardOverlapP2P).unwrap();
        let wire: f64 = p
            .tasks
            .iter()
            .filter(|x| x.gpu == 0 && x.kind.is_transfer())
            .map(|x| p2p_step_time(&t, x.kind.bytes()))
            .sum();
        if ((wire - 7.0 * ag) / ag).abs() > 1e-12 {
            pass = false;
            worst = format!("{}: planned ring {wire:e} vs {:e}", s.name, 7.0 * ag);
        }
    }
    outcome(pass, if pass { "ring = 7x all-gather, 8 a2a rounds = all-gather, all 16 scenarios".into() } else { worst })
}

/// With no losses the ideal makespan is `max(Tc, Tg) + min(Tc, Tg) / G`,
/// and the ideal speedup over serial peaks next to `Tg/Tc = 1`.
fn ideal_pipeline() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1dea1);
    let loss = LossModel::identity();
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let m = G * G * rng.gen_range(1..4096u64);
        let n = rng.gen_range(64..65536u64);
        let k = G * G * rng.gen_range(1..2048u64);
        let bw = 10f64.powf(rng.gen_range(9.5..11.5));
        let machine = MachineConfig {
            peak_flops: 10f64.powf(rng.gen_range(13.5..15.5)),
            gemm_efficiency: rng.gen_range(0.3..1.0),
            ..MachineConfig::default()
        };
        let topo = Topology::mesh(G, bw).unwrap();
        let s = Scenario::new(
            format!("r{i}"),
            Parallelism::SpTp,
            "random",
            GemmShape::new(m, n, k, 2).unwrap(),
            Collective::AllGather,
            G,
        )
        .unwrap();
        let tg = (2 * m * n * k) as f64 / (machine.peak_flops * machine.gemm_efficiency);
        let tc = ((m / G) * k * 2) as f64 / bw;
        let expected = tg.max(tc) + tg.min(tc) / G as f64;
        let got = run(&s, ScheduleKind::Ideal, &machine, &topo, &loss).makespan;
        worst = worst.max((got - expected).abs() / expected);
    }

    let g1 = &production_scenarios()[0];
    let spec = SweepSpec { steps: 33, ..default_sweep() };
    let r = run_sweep(g1, &MachineConfig::default(), &mesh(), &loss, spec, &[ScheduleKind::Ideal]).unwrap();
    let curve: Vec<(f64, f64)> = (0..r.points.len())
        .map(|i| (r.points[i].ratio, r.speedup_of(i, ScheduleKind::Ideal).unwrap()))
        .collect();
    let peak = curve.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1)).unwrap().0;
    let unimodal = curve[..=peak].windows(2).all(|w| w[1].1 >= w[0].1) && curve[peak..].windows(2).all(|w| w[1].1 <= w[0].1);
    let below = curve.iter().rposition(|c| c.0 <= 1.0);
    let brackets = below.is_some_and(|b| peak == b || peak == b + 1);
    let pass = worst <= IDEAL_TOL && unimodal && brackets;
    outcome(pass, format!("max rel err {worst:.2e} over 100; bell unimodal={unimodal}, peak ratio {:.3}", curve[peak].0))
}

/// Shard overlap never wins while communication dominates, and gets better
/// as the GEMM grows relative to communication.
fn shard_pathology() -> Outcome {
    let loss = default_calibration();
    let g1 = &production_scenarios()[0];
    let r = run_sweep(g1, &MachineConfig::default(), &mesh(), &loss, default_sweep(), &[ScheduleKind::ShardOverlapP2P]).unwrap();
    let mut pts: Vec<(f64, f64)> = (0..r.points.len())
        .map(|i| (r.points[i].ratio, r.speedup_of(i, ScheduleKind::ShardOverlapP2P).unwrap()))
        .collect();
    for s in production_scenarios() {
        let ratio = gemm_comm_ratio(&s, &MachineConfig::default(), &mesh());
        if ratio <= 1.0 {
            let m = MachineConfig::default();
            let sp = speedup(&run(&s, ScheduleKind::ShardOverlapP2P, &m, &mesh(), &loss), &run(&s, ScheduleKind::Serial, &m, &mesh(), &loss)).unwrap();
            pts.push((ratio, sp));
        }
    }
    let losing = pts.iter().filter(|p| p.0 <= 1.0).all(|p| p.1 < 1.0);
    let n_comm_bound = pts.iter().filter(|p| p.0 <= 1.0).count();
    let sweep: Vec<f64> = (0..r.points.len()).map(|i| r.speedup_of(i, ScheduleKind::ShardOverlapP2P).unwrap()).collect();
    let monotone = sweep.windows(2).all(|w| w[1] >= w[0]);
    let max_comm_bound = pts.iter().filter(|p| p.0 <= 1.0).map(|p| p.1).fold(0.0, f64::max);
    outcome(
        losing && monotone && n_comm_bound > 0,
        format!("{n_comm_bound} points with Tg/Tc <= 1, max speedup {max_comm_bound:.3}; monotone={monotone}"),
    )
}

struct Corpus {
    ideal: Vec<f64>,
    best: Vec<f64>,
    best_1d: Vec<f64>,
}

fn corpus() -> Corpus {
    let m = MachineConfig::default();
    let loss = default_calibration();
    let mut c = Corpus { ideal: vec![], best: vec![], best_1d: vec![] };
    for s in production_scenarios() {
        let serial = run(&s, ScheduleKind::Serial, &m, &mesh(), &loss);
        c.ideal.push(speedup(&run(&s, ScheduleKind::Ideal, &m, &mesh(), &loss), &serial).unwrap());
        let sp = ficco_speedups(&s, &m, &mesh(), &loss).unwrap();
        c.best.push(sp.iter().map(|x| x.1).fold(0.0, f64::max));
        c.best_1d.push(sp.iter().filter(|x| x.0.is_1d()).map(|x| x.1).fold(0.0, f64::max));
    }
    c
}

/// Best FiCCO lands in [1.0, 1.7] and under ideal; the 1D gain as a
/// fraction of the ideal gain lands in [0.40, 0.80].
fn ficco_band() -> Outcome {
    let start = Instant::now();
    let c = corpus();
    let in_band = c.best.iter().zip(&c.ideal).all(|(&b, &i)| (1.0..=1.7).contains(&b) && b <= i);
    let fraction = (geomean(&c.best_1d) - 1.0) / (geomean(&c.ideal) - 1.0);
    let elapsed = start.elapsed();
    let lo = c.best.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = c.best.iter().copied().fold(0.0, f64::max);
    outcome(
        in_band && (0.40..=0.80).contains(&fraction) && elapsed < Duration::from_secs(60),
        format!("best in [{lo:.4}, {hi:.4}], fraction of ideal {fraction:.3}, {elapsed:.2?}"),
    )
}

/// Geomeans of the default tables at the Table-1 operating points.
fn loss_anchors() -> Outcome {
    let loss = default_calibration::<f64>();
    let t1 = production_scenarios();
    let at = |f: &dyn Fn(&Scenario) -> f64| geomean(&t1.iter().map(f).collect::<Vec<_>>());
    let got = [
        ("comm DIL", 1.10, at(&|s| loss.comm_dil(s.shard_bytes() / G).unwrap())),
        ("GEMM CIL", 1.11, at(&|s| loss.gemm_cil(s.gemm.mt(), CommAgent::Dma).unwrap())),
        ("comm CIL", 1.12, at(&|s| loss.comm_cil(s.gemm.mt(), CommAgent::Dma).unwrap())),
        ("shard GEMM CIL", 1.07, at(&|s| loss.shard_gemm_cil(s.gemm.mt(), CommAgent::Dma).unwrap())),
        ("shard comm CIL", 1.03, at(&|s| loss.shard_comm_cil(s.gemm.mt(), CommAgent::Dma).unwrap())),
    ];
    let pass = got.iter().all(|(_, want, have)| (have - want).abs() <= ANCHOR_TOL);
    let detail = got.iter().map(|(n, _, v)| format!("{n} {v:.3}")).collect::<Vec<_>>().join(", ");
    outcome(pass, detail)
}

fn heuristic() -> Outcome {
    let m = MachineConfig::default();
    let loss = default_calibration();
    let t1 = validate_heuristic(&production_scenarios(), &m, &mesh(), &loss).unwrap();
    let grid = validate_heuristic(&synthetic_grid(G, 2).unwrap(), &m, &mesh(), &loss).unwrap();
    let misses: Vec<&str> = t1.rows.iter().chain(&grid.rows).filter(|r| !r.agree).map(|r| r.scenario.as_str()).collect();
    let regret = {
        let r: Vec<f64> = t1.rows.iter().chain(&grid.rows).filter(|r| !r.agree).map(|r| r.regret).collect();
        if r.is_empty() { 0.0 } else { r.iter().sum::<f64>() / r.len() as f64 }
    };
    outcome(
        t1.accuracy() == 1.0 && grid.accuracy() >= 0.75 && regret <= 0.20,
        format!(
            "production {:.0}%, synthetic {:.1}%, mismatch regret {:.1}% (missed {})",
            100.0 * t1.accuracy(),
            100.0 * grid.accuracy(),
            100.0 * regret,
            misses.join(" ")
        ),
    )
}

fn perturb(loss: &LossModel, rng: &mut ChaCha8Rng) -> (LossModel, String) {
    let mut out = loss.clone();
    let which = rng.gen_range(0..4);
    let (name, table) = match which {
        0 => ("gemm_cil.dma", &mut out.gemm_cil.dma),
        1 => ("comm_cil.dma", &mut out.comm_cil.dma),
        2 => ("gemm_cil.core", &mut out.gemm_cil.core),
        _ => ("comm_cil.core", &mut out.comm_cil.core),
    };
    let mut pts = table.points().to_vec();
    let i = rng.gen_range(0..pts.len());
    pts[i].1 += rng.gen_range(0.01..0.5);
    *table = CalibrationTable::new(name, pts).unwrap();
    (out, format!("{name}[{i}]"))
}

/// Bit-identical reruns, exact work conservation, and makespans that never
/// drop when a CIL value is raised.
fn determinism_and_properties() -> Outcome {
    let m = MachineConfig::default();
    let loss = default_calibration();
    let scenarios = production_scenarios();

    let mut identical = true;
    let mut worst_work: f64 = 0.0;
    let mut base = Vec::new();
    for s in &scenarios {
        for kind in ScheduleKind::ALL {
            let a = run(s, kind, &m, &mesh(), &loss);
            let b = run(s, kind, &m, &mesh(), &loss);
            identical &= a == b && a.trace_csv() == b.trace_csv();
            for span in &a.timeline {
                worst_work = worst_work.max((span.progressed - span.work).abs() / span.work.max(f64::MIN_POSITIVE));
            }
            base.push(a.makespan);
        }
    }
    let h1 = validate_heuristic(&scenarios, &m, &mesh(), &loss).unwrap().to_csv();
    let h2 = validate_heuristic(&scenarios, &m, &mesh(), &loss).unwrap().to_csv();
    identical &= h1 == h2;

    let mut rng = ChaCha8Rng::seed_from_u64(0xc11);
    let mut violations = Vec::new();
    for _ in 0..20 {
        let (raised, what) = perturb(&loss, &mut rng);
        let agent = if rng.gen_bool(0.5) { CommAgent::Dma } else { CommAgent::Core };
        let mm = MachineConfig { comm_agent: agent, ..m };
        for s in &scenarios {
            for kind in ScheduleKind::ALL {
                let before = run(s, kind, &mm, &mesh(), &loss).makespan;
                let after = run(s, kind, &mm, &mesh(), &raised).makespan;
                if after < before {
                    violations.push(format!("{what} {} {kind}", s.name));
                }
            }
        }
    }
    let pass = identical && worst_work <= WORK_TOL && violations.is_empty();
    outcome(
        pass,
        format!(
            "identical={identical}, max work error {worst_work:.1e}, {} monotonicity violations over 20 perturbations{}",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("1 conservation", conservation),
        ("2 topology oracle", topology_oracle),
        ("3 ideal pipeline", ideal_pipeline),
        ("4 shard-overlap pathology", shard_pathology),
        ("5 FiCCO band", ficco_band),
        ("6 loss-model anchors", loss_anchors),
        ("7 heuristic", heuristic),
        ("8 determinism and properties", determinism_and_properties),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} #{name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
