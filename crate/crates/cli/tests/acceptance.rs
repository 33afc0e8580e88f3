//! Acceptance checks, one PASS/FAIL line each.
//!
//! Failures are reported but do not fail `cargo test` unless
//! `SSIO_ACCEPTANCE_STRICT=1` is set.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ssio::anneal::{inner_fixed_point, theorem1_check};
use ssio::baselines::{brute_force_joint, brute_force_select};
use ssio::bench::{
    generate_instance, run_comparison, splitmix64, stream_seed, table1_specs, InstanceSpec,
    Method, RatioReport,
};
use ssio::linalg::{criterion_row_gradient, fisher_matrix, leverages, Criterion};
use ssio::{anneal, constrained_anneal, AnnealSchedule, AnnealState, BudgetSpec};

const SEEDS: u64 = 20;

/// Uniform draw in `[0, 1)` from a counter.
fn unit(key: u64) -> f64 {
    (splitmix64(key) >> 11) as f64 / (1u64 << 53) as f64
}

fn spec(id: &str, n: usize, p: usize, fraction: f64, r: usize) -> InstanceSpec {
    InstanceSpec {
        id: id.into(),
        n,
        p,
        missing_fraction: fraction,
        r,
        lo: -1.0,
        hi: 1.0,
        seed: 0,
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ratio_stats(report: &RatioReport, method: &str, id: Option<&str>) -> (usize, usize, f64) {
    let ratios: Vec<f64> = report
        .records
        .iter()
        .filter(|r| r.method == method && id.is_none_or(|i| r.instance_id == i))
        .map(|r| r.ratio_to_ssio.unwrap_or(f64::INFINITY))
        .collect();
    let wins = ratios.iter().filter(|&&x| x <= 1.0).count();
    let finite: Vec<f64> = ratios.iter().cloned().filter(|x| x.is_finite() && *x > 0.0).collect();
    let geo = (finite.iter().map(|x| x.ln()).sum::<f64>() / finite.len() as f64).exp();
    (wins, ratios.len(), geo)
}

fn c1(report: &RatioReport, secs: f64) -> Outcome {
    let (fw, fnum, fgeo) = ratio_stats(report, Method::MeanFedorov.name(), None);
    let (uw, unum, _) = ratio_stats(report, Method::MeanUniform.name(), None);
    let pass = fw * 10 >= fnum * 8 && fgeo < 0.9 && uw * 10 >= unum * 9 && secs < 600.0;
    verdict(
        pass,
        format!(
            "vs fedorov {fw}/{fnum} wins, geo-mean {fgeo:.4}; vs uniform {uw}/{unum} wins; suite {secs:.0}s"
        ),
    )
}

fn c2(report: &RatioReport) -> Outcome {
    let (w, n, geo) = ratio_stats(report, Method::Direct.name(), Some("E1"));
    verdict(w * 10 >= n * 8, format!("E1: anneal <= direct in {w}/{n}, geo-mean {geo:.4}"))
}

fn c3() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for crit in [Criterion::A, Criterion::D] {
        let mut close = 0;
        for k in 0..50u64 {
            let p = 2 + (k % 2) as usize;
            let s = spec("C3", 10, p, 0.0, 4).with_seed(stream_seed(3, k));
            let problem = generate_instance(&s).unwrap();
            let best = brute_force_select(problem.values(), 4, crit).unwrap();
            let (_, d) = anneal(&problem, 4, &AnnealSchedule::default(), crit).unwrap();
            if d.cost <= 1.05 * best.cost {
                close += 1;
            }
        }
        pass &= close * 10 >= 50 * 8;
        parts.push(format!("{crit:?} {close}/50 within 5%"));
    }
    verdict(pass, parts.join(", "))
}

fn c4() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut within = 0;
    for k in 0..20u64 {
        let s = spec("C4", 6, 2, 2.0 / 12.0, 3).with_seed(stream_seed(k, 0));
        let problem = generate_instance(&s).unwrap();
        let oracle = brute_force_joint(&problem, 3, Criterion::A, 51).unwrap();
        let (_, d) = anneal(&problem, 3, &AnnealSchedule::default(), Criterion::A).unwrap();
        let ratio = d.cost / oracle.design.cost;
        worst = worst.max(ratio);
        if ratio <= 1.10 {
            within += 1;
        }
    }
    verdict(
        within == 20,
        format!("{within}/20 within 1.10x of the grid oracle, worst ratio {worst:.4}"),
    )
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(scale)
}

fn c5() -> Outcome {
    let (mut worst_x, mut worst_q): (f64, f64) = (0.0, 0.0);
    for k in 0..100u64 {
        let p = 2 + (k % 3) as usize;
        let n = p + 2 + (k % 4) as usize;
        let s = spec("C5", n, p, 0.0, p).with_seed(stream_seed(5, k));
        let x = generate_instance(&s).unwrap().values().clone();
        let q: Vec<f64> = (0..n).map(|i| 0.2 + 0.8 * unit(k * 1000 + i as u64)).collect();
        let cost = |x: &_, q: &[f64]| {
            fisher_matrix(x, q)
                .and_then(|r| ssio::linalg::a_cost(&r))
                .unwrap()
        };
        let base = cost(&x, &q);
        let factor = fisher_matrix(&x, &q).unwrap().factor().unwrap();
        let j = (k as usize * 7) % n;
        let grad = criterion_row_gradient(&factor, &x, q[j], j, Criterion::A);
        let h = 1e-5;
        for col in 0..p {
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[(j, col)] += h;
            dn[(j, col)] -= h;
            let fd = (cost(&up, &q) - cost(&dn, &q)) / (2.0 * h);
            worst_x = worst_x.max(rel(fd, grad[col], 1e-6 * base));
        }
        let v = leverages(&factor, &x, Criterion::A);
        for i in 0..n {
            let (mut up, mut dn) = (q.clone(), q.clone());
            up[i] += h;
            dn[i] -= h;
            let fd = -(cost(&x, &up) - cost(&x, &dn)) / (2.0 * h);
            worst_q = worst_q.max(rel(fd, v[i], 1e-6 * base));
        }
    }
    verdict(
        worst_x < 1e-5 && worst_q < 1e-5,
        format!("max rel error: cell gradient {worst_x:.2e}, weight gradient {worst_q:.2e}"),
    )
}

fn c6() -> Outcome {
    let (mut worst, mut in_interval, mut differing) = (0.0f64, 0, 0);
    let specs = table1_specs();
    for k in 0..50u64 {
        let s = specs[(k % 6) as usize].with_seed(stream_seed(6, k));
        let problem = generate_instance(&s).unwrap();
        let mut st = AnnealState::new(&problem, s.r, Criterion::A).unwrap();
        st.temperature = 1.0;
        st.q = (0..st.n()).map(|i| 0.05 + 0.9 * unit(k * 977 + i as u64)).collect();
        st.mu = 2.0 * unit(k + 12345) - 1.0;
        let rep = theorem1_check(&st).unwrap();
        worst = worst.max(rep.xi_max_rel_error);
        if rep.mass != rep.r {
            differing += 1;
            if rep.kbar_in_interval {
                in_interval += 1;
            }
        }
    }
    verdict(
        worst < 1e-4 && in_interval == differing,
        format!("(a) max rel error {worst:.2e}; (b) kbar inside (sum q, r) in {in_interval}/{differing}"),
    )
}

fn anneal_runs(report: &RatioReport) -> impl Iterator<Item = &ssio::bench::AnnealDiagnostics> {
    report.records.iter().filter_map(|r| r.diagnostics.as_ref())
}

fn c7(report: &RatioReport) -> Outcome {
    let specs = table1_specs();
    let mut worst_high: f64 = 0.0;
    for (k, s) in specs.iter().enumerate() {
        for seed in 0..SEEDS {
            let problem = generate_instance(&s.with_seed(stream_seed(seed, k as u64))).unwrap();
            let mut st = AnnealState::new(&problem, s.r, Criterion::A).unwrap();
            let vmax = st.leverages().unwrap().into_iter().fold(0.0, f64::max);
            st.temperature = 100.0 * vmax;
            inner_fixed_point(&mut st, &AnnealSchedule::default()).unwrap();
            let target = s.r as f64 / s.n as f64;
            for q in &st.q {
                worst_high = worst_high.max((q - target).abs());
            }
        }
    }
    let (mut runs, mut saturated, mut worst_low) = (0, 0, 0.0f64);
    for d in anneal_runs(report) {
        runs += 1;
        let m = d.final_q.iter().map(|q| q.min(1.0 - q)).fold(0.0, f64::max);
        worst_low = worst_low.max(m);
        if m < 1e-3 {
            saturated += 1;
        }
    }
    verdict(
        worst_high < 1e-3 && saturated == runs,
        format!(
            "high T: max |q - r/n| {worst_high:.2e}; T_min: {saturated}/{runs} runs saturated, worst min(q, 1-q) {worst_low:.4}"
        ),
    )
}

fn c8(report: &RatioReport) -> Outcome {
    let mut mass: f64 = 0.0;
    let mut loops = 0;
    for d in anneal_runs(report) {
        for e in d.trace.iter().filter(|e| e.converged) {
            mass = mass.max(e.mass_residual);
            loops += 1;
        }
    }
    let sched = AnnealSchedule::default();
    let specs = table1_specs();
    let (mut budget_worst, mut budget_runs, mut replica_same) = (0.0f64, 0, 0);
    for (k, s) in specs.iter().enumerate() {
        for seed in 0..2u64 {
            let problem = generate_instance(&s.with_seed(stream_seed(seed, k as u64))).unwrap();
            let (n, p) = (s.n, s.p);
            let mut costs = problem.values().clone();
            for i in 0..n {
                for l in 0..p {
                    costs[(i, l)] = 0.5 + 1.5 * unit(seed * 100_000 + (k * 1000 + i * p + l) as u64);
                }
            }
            let share = s.r as f64 / n as f64;
            let caps: Vec<f64> = (0..p).map(|l| share * costs.column(l).sum()).collect();
            let budget = BudgetSpec::new(costs, caps).unwrap();
            let (st, _) = constrained_anneal(&problem, s.r, &sched, &budget).unwrap();
            for e in st.trace.iter().filter(|e| e.converged) {
                budget_worst = budget_worst.max(e.budget_residual.unwrap_or(f64::INFINITY));
                mass = mass.max(e.mass_residual);
            }
            budget_runs += 1;

            let replica = BudgetSpec::cardinality_replica(n, p, s.r);
            let (_, a) = anneal(&problem, s.r, &sched, Criterion::A).unwrap();
            let (_, b) = constrained_anneal(&problem, s.r, &sched, &replica).unwrap();
            if a.s == b.s {
                replica_same += 1;
            }
        }
    }
    verdict(
        mass <= 1e-6 && budget_worst <= 1e-4 && replica_same == budget_runs,
        format!(
            "mass residual {mass:.2e} over {loops}+ converged loops; budget residual {budget_worst:.2e} over {budget_runs} runs; replica matches {replica_same}/{budget_runs}"
        ),
    )
}

fn c9(report: &RatioReport) -> Outcome {
    let (mut rise, mut loops, mut damped): (f64, usize, usize) = (f64::NEG_INFINITY, 0, 0);
    for d in anneal_runs(report) {
        for e in &d.trace {
            loops += 1;
            rise = rise.max(e.max_rise);
            if e.final_damping < 1.0 {
                damped += 1;
            }
        }
    }
    verdict(
        rise <= 1e-8,
        format!("largest free-energy rise {rise:.2e} over {loops} inner loops ({damped} damped)"),
    )
}

fn bench_once(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_ssio"))
        .args(["bench", "--suite", "table1", "--seeds", &SEEDS.to_string(), "--out"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    let read = |name: &str| std::fs::read(dir.join(name)).map_err(|e| e.to_string());
    Ok((read("report.csv")?, read("report.json")?))
}

fn c10() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (bench_once(a.path()), bench_once(b.path())) {
        (Ok(x), Ok(y)) => verdict(
            x == y,
            format!("report.csv {} bytes, report.json {} bytes, identical: {}", x.0.len(), x.1.len(), x == y),
        ),
        (Err(e), _) | (_, Err(e)) => verdict(false, format!("bench failed: {e}")),
    }
}

fn main() {
    let started = Instant::now();
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let report = run_comparison(&table1_specs(), &seeds, &Method::ALL, &AnnealSchedule::default(), false)
        .expect("benchmark suite runs");
    let suite_secs = started.elapsed().as_secs_f64();

    let checks: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("C1 benchmark superiority", Box::new(|| c1(&report, suite_secs))),
        ("C2 annealing vs direct", Box::new(|| c2(&report))),
        ("C3 oracle near-optimality", Box::new(c3)),
        ("C4 joint oracle", Box::new(c4)),
        ("C5 gradient correctness", Box::new(c5)),
        ("C6 descent form of the updates", Box::new(c6)),
        ("C7 temperature limits", Box::new(|| c7(&report))),
        ("C8 constraints", Box::new(|| c8(&report))),
        ("C9 free-energy descent", Box::new(|| c9(&report))),
        ("C10 determinism", Box::new(c10)),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 && std::env::var("SSIO_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
