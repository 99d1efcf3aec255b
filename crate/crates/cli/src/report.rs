//! Command bodies and their report files.

use anyhow::anyhow;
use rayon::prelude::*;
use serde::Serialize;

use overlap_sim::{
    plan, run_sweep, simulate_with, speedup, validate_heuristic, validate_plan, Scenario, ScheduleKind, SimOptions,
    SimResult, SweepSpec,
};

use crate::{fail, write_out, Failure, Inputs};

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn geomean(v: &[f64]) -> f64 {
    (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
}

/// Gain over serial as a fraction of the ideal gain.
fn fraction_of_ideal(speedup: f64, ideal: f64) -> f64 {
    if ideal > 1.0 {
        (speedup - 1.0) / (ideal - 1.0)
    } else {
        0.0
    }
}

#[derive(Serialize)]
struct ResultRow {
    scenario: String,
    schedule: String,
    makespan_s: f64,
    speedup: f64,
    ideal_speedup: f64,
    fraction_of_ideal: f64,
}

#[derive(Serialize)]
struct SummaryRow {
    scenario: String,
    serial_makespan_s: f64,
    ideal_speedup: f64,
    best_ficco: Option<String>,
    best_ficco_speedup: Option<f64>,
    best_1d_speedup: Option<f64>,
    fraction_of_ideal_1d: Option<f64>,
}

struct ScenarioRun {
    rows: Vec<ResultRow>,
    summary: SummaryRow,
    traces: Vec<(String, String)>,
}

fn run_scenario(inputs: &Inputs, s: &Scenario) -> overlap_sim::Result<ScenarioRun> {
    let topo = &inputs.machine.topology;
    let machine = &inputs.machine.config;
    let options = SimOptions { jitter: inputs.jitter, seed: inputs.seed };
    let sim = |kind: ScheduleKind| -> overlap_sim::Result<SimResult> {
        simulate_with(&plan(s, topo, kind)?, machine, topo, &inputs.loss, options)
    };
    let serial = sim(ScheduleKind::Serial)?;
    let ideal = speedup(&sim(ScheduleKind::Ideal)?, &serial)?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut best: Option<(ScheduleKind, f64)> = None;
    let mut best_1d: Option<f64> = None;
    for &kind in &inputs.schedules {
        if !kind.supports(s) {
            continue;
        }
        let r = if kind == ScheduleKind::Serial { serial.clone() } else { sim(kind)? };
        let sp = speedup(&r, &serial)?;
        if kind.is_ficco() {
            if best.is_none_or(|(_, b)| sp > b) {
                best = Some((kind, sp));
            }
            if kind.is_1d() {
                best_1d = Some(best_1d.map_or(sp, |b: f64| b.max(sp)));
            }
        }
        traces.push((format!("{}_{}.csv", s.name, kind.name()), r.trace_csv()));
        rows.push(ResultRow {
            scenario: s.name.clone(),
            schedule: kind.name().to_string(),
            makespan_s: r.makespan,
            speedup: sp,
            ideal_speedup: ideal,
            fraction_of_ideal: fraction_of_ideal(sp, ideal),
        });
    }
    Ok(ScenarioRun {
        rows,
        summary: SummaryRow {
            scenario: s.name.clone(),
            serial_makespan_s: serial.makespan,
            ideal_speedup: ideal,
            best_ficco: best.map(|b| b.0.name().to_string()),
            best_ficco_speedup: best.map(|b| b.1),
            best_1d_speedup: best_1d,
            fraction_of_ideal_1d: best_1d.map(|b| fraction_of_ideal(b, ideal)),
        },
        traces,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn simulate(inputs: &Inputs) -> Result<(), Failure> {
    let runs: Vec<_> = inputs.scenarios.par_iter().map(|s| (s, run_scenario(inputs, s))).collect();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut errors = Vec::new();
    for (s, run) in runs {
        match run {
            Ok(r) => {
                rows.extend(r.rows);
                summary.push(r.summary);
                for (name, body) in &r.traces {
                    write_out(inputs, &format!("traces/{name}"), body)?;
                }
            }
            Err(e) => errors.push(format!("{}: {e}", s.name)),
        }
    }

    let ok: Vec<&SummaryRow> = summary.iter().collect();
    let corpus = if ok.is_empty() {
        None
    } else {
        let ideal = geomean(&ok.iter().map(|r| r.ideal_speedup).collect::<Vec<_>>());
        let bests: Vec<f64> = ok.iter().filter_map(|r| r.best_ficco_speedup).collect();
        let ones: Vec<f64> = ok.iter().filter_map(|r| r.best_1d_speedup).collect();
        let best = (bests.len() == ok.len()).then(|| geomean(&bests));
        let best_1d = (ones.len() == ok.len()).then(|| geomean(&ones));
        Some((ideal, best, best_1d, best_1d.map(|b| fraction_of_ideal(b, ideal))))
    };

    match inputs.format {
        Format::Csv => {
            let mut out = String::from("scenario,schedule,makespan_s,speedup,ideal_speedup,fraction_of_ideal\n");
            for r in &rows {
                out.push_str(&format!(
                    "{},{},{:e},{:.6},{:.6},{:.6}\n",
                    r.scenario, r.schedule, r.makespan_s, r.speedup, r.ideal_speedup, r.fraction_of_ideal
                ));
            }
            write_out(inputs, "results.csv", &out)?;
            let mut sum = String::from(
                "scenario,serial_makespan_s,ideal_speedup,best_ficco,best_ficco_speedup,best_1d_speedup,fraction_of_ideal_1d\n",
            );
            for r in &summary {
                sum.push_str(&format!(
                    "{},{:e},{:.6},{},{},{},{}\n",
                    r.scenario,
                    r.serial_makespan_s,
                    r.ideal_speedup,
                    r.best_ficco.as_deref().unwrap_or(""),
                    opt(r.best_ficco_speedup),
                    opt(r.best_1d_speedup),
                    opt(r.fraction_of_ideal_1d)
                ));
            }
            if let Some((ideal, best, best_1d, frac)) = corpus {
                sum.push_str(&format!("geomean,,{ideal:.6},,{},{},{}\n", opt(best), opt(best_1d), opt(frac)));
            }
            write_out(inputs, "summary.csv", &sum)?;
            print!("{sum}");
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Corpus {
                ideal_speedup: f64,
                best_ficco_speedup: Option<f64>,
                best_1d_speedup: Option<f64>,
                fraction_of_ideal_1d: Option<f64>,
            }
            #[derive(Serialize)]
            struct Doc<'a> {
                results: &'a [ResultRow],
                summary: &'a [SummaryRow],
                geomean: Option<Corpus>,
                errors: &'a [String],
            }
            let doc = Doc {
                results: &rows,
                summary: &summary,
                geomean: corpus.map(|(ideal_speedup, best_ficco_speedup, best_1d_speedup, fraction_of_ideal_1d)| Corpus {
                    ideal_speedup,
                    best_ficco_speedup,
                    best_1d_speedup,
                    fraction_of_ideal_1d,
                }),
                errors: &errors,
            };
            let body = json(&doc);
            write_out(inputs, "results.json", &body)?;
            print!("{body}");
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(fail(1, anyhow!("{} scenario(s) failed:\n  {}", errors.len(), errors.join("\n  "))))
    }
}

#[derive(Serialize)]
struct ValidationRow {
    scenario: String,
    schedule: String,
    ingress_bytes_per_gpu: Option<u64>,
    gemm_flops_per_gpu: Option<u64>,
    violations: Vec<String>,
}

pub fn validate(inputs: &Inputs) -> Result<(), Failure> {
    let topo = &inputs.machine.topology;
    let rows: Vec<ValidationRow> = inputs
        .scenarios
        .iter()
        .flat_map(|s| inputs.schedules.iter().map(move |&k| (s, k)))
        .map(|(s, kind)| match plan(s, topo, kind) {
            Ok(p) => {
                let r = validate_plan(&p, s);
                ValidationRow {
                    scenario: s.name.clone(),
                    schedule: kind.name().into(),
                    ingress_bytes_per_gpu: r.ingress_bytes.first().copied(),
                    gemm_flops_per_gpu: r.gemm_flops.first().copied(),
                    violations: r.violations,
                }
            }
            Err(e) => ValidationRow {
                scenario: s.name.clone(),
                schedule: kind.name().into(),
                ingress_bytes_per_gpu: None,
                gemm_flops_per_gpu: None,
                violations: vec![e.to_string()],
            },
        })
        .collect();

    let body = match inputs.format {
        Format::Csv => {
            let mut out = String::from("scenario,schedule,ingress_bytes_per_gpu,gemm_flops_per_gpu,violations\n");
            for r in &rows {
                let show = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.scenario,
                    r.schedule,
                    show(r.ingress_bytes_per_gpu),
                    show(r.gemm_flops_per_gpu),
                    r.violations.len()
                ));
            }
            out
        }
        Format::Json => json(&rows),
    };
    let ext = if inputs.format == Format::Csv { "csv" } else { "json" };
    write_out(inputs, &format!("validation.{ext}"), &body)?;
    print!("{body}");

    let bad: Vec<String> = rows
        .iter()
        .flat_map(|r| r.violations.iter().map(move |v| format!("{} {}: {v}", r.scenario, r.schedule)))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(fail(1, anyhow!("{} violation(s):\n  {}", bad.len(), bad.join("\n  "))))
    }
}

pub fn heuristic(inputs: &Inputs) -> Result<(), Failure> {
    let m = &inputs.machine;
    let report = validate_heuristic(&inputs.scenarios, &m.config, &m.topology, &inputs.loss)
        .map_err(|e| fail(1, anyhow!(e).context("heuristic validation")))?;
    let accuracy = report.accuracy();
    let body = match inputs.format {
        Format::Csv => {
            let mut out = report.to_csv();
            out.push_str(&format!(
                "# accuracy={accuracy:.6} mean_regret={:.6} mean_mismatch_regret={:.6}\n",
                report.mean_regret(),
                report.mean_mismatch_regret()
            ));
            out
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Row<'a> {
                scenario: &'a str,
                chosen: &'static str,
                best: &'static str,
                agree: bool,
                regret: f64,
                speedup_chosen: f64,
                speedup_best: f64,
            }
            #[derive(Serialize)]
            struct Doc<'a> {
                rows: Vec<Row<'a>>,
                accuracy: f64,
                mean_regret: f64,
                mean_mismatch_regret: f64,
            }
            json(&Doc {
                rows: report
                    .rows
                    .iter()
                    .map(|r| Row {
                        scenario: &r.scenario,
                        chosen: r.chosen.name(),
                        best: r.best.name(),
                        agree: r.agree,
                        regret: r.regret,
                        speedup_chosen: r.speedup_chosen,
                        speedup_best: r.speedup_best,
                    })
                    .collect(),
                accuracy,
                mean_regret: report.mean_regret(),
                mean_mismatch_regret: report.mean_mismatch_regret(),
            })
        }
    };
    let ext = if inputs.format == Format::Csv { "csv" } else { "json" };
    write_out(inputs, &format!("heuristic.{ext}"), &body)?;
    print!("{body}");
    match inputs.min_accuracy {
        Some(min) if accuracy < min => Err(fail(1, anyhow!("accuracy {accuracy:.3} is below --min-accuracy {min}"))),
        _ => Ok(()),
    }
}

pub fn sweep(inputs: &Inputs, base: &Scenario, spec: SweepSpec) -> Result<(), Failure> {
    let m = &inputs.machine;
    let report = run_sweep(base, &m.config, &m.topology, &inputs.loss, spec, &inputs.schedules)
        .map_err(|e| fail(1, anyhow!(e).context(format!("sweep of {}", base.name))))?;
    let body = match inputs.format {
        Format::Csv => report.to_csv(),
        Format::Json => {
            #[derive(Serialize)]
            struct Point {
                value: f64,
                scenario: String,
                t_gemm_over_t_comm: f64,
                speedups: Vec<(&'static str, f64)>,
            }
            let points: Vec<Point> = report
                .points
                .iter()
                .map(|p| Point {
                    value: p.value,
                    scenario: p.scenario.name.clone(),
                    t_gemm_over_t_comm: p.ratio,
                    speedups: p.speedups.iter().map(|(k, s)| (k.name(), *s)).collect(),
                })
                .collect();
            json(&points)
        }
    };
    let ext = if inputs.format == Format::Csv { "csv" } else { "json" };
    write_out(inputs, &format!("sweep.{ext}"), &body)?;
    print!("{body}");
    Ok(())
}
