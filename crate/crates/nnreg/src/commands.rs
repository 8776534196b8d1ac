//! The four CLI verbs as library functions.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use nnreg_core::analysis::{holder_rate_study, log_rate_study, HolderStudyConfig, LogStudyConfig, RateStudy};
use nnreg_core::rng::PRNG_ALGORITHM;
use nnreg_core::solvers::History;
use nnreg_core::{run_solver_with_truth, RunOutcome};

use crate::bundle::Bundle;
use crate::config::{ExperimentConfig, RateFamily, SolverEntry};
use crate::error::{CliError, Result, SolverContext};
use crate::formats::{self, fmt_f64};

pub const SOLVE_HEADER: [&str; 8] = [
    "method",
    "label",
    "k_star",
    "stop_reason",
    "l2err",
    "residual",
    "preconditioned_residual",
    "wall_time",
];
pub const COMPARE_HEADER: [&str; 6] = ["method", "noise_h", "noise_delta", "l2err", "k_star", "cpu_seconds"];
pub const TRACE_HEADER: [&str; 4] = ["k", "residual", "functional", "l2err"];
pub const RATES_HEADER: [&str; 5] = ["family", "parameter", "noise", "k_star", "error"];
pub const SLOPES_HEADER: [&str; 4] = ["family", "parameter", "slope", "predicted"];

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Output directory; defaults to the config's `outputs`.
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub traces: bool,
    /// Worker threads for independent cells; 1 runs sequentially.
    pub parallel: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            out: None,
            seed: None,
            traces: false,
            parallel: 1,
        }
    }
}

impl RunOptions {
    pub fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out.clone().unwrap_or_else(|| cfg.outputs.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub label: String,
    pub k_star: usize,
    pub n_max: usize,
    pub stop_reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2err: Option<f64>,
    /// `‖A_h x_{k*} − y^δ‖`
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preconditioned_residual: Option<f64>,
    pub lambda_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preconditioner: Option<String>,
    pub h: f64,
    pub delta: f64,
    pub wall_time: f64,
    pub prng: String,
    pub seed: u64,
    /// Re-running `solve` on this document reproduces the report.
    pub config_echo: ExperimentConfig,
}

/// One solver run on one bundle.
#[derive(Clone, Debug)]
pub struct SolveRun {
    pub report: SolveReport,
    pub x: Vec<f64>,
    pub history: Option<History>,
}

/// Runs `cell_count` independent jobs on up to `parallel` threads and
/// returns their results in index order.
pub fn run_cells<T: Send>(cell_count: usize, parallel: usize, job: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    if parallel <= 1 || cell_count <= 1 {
        return (0..cell_count).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..cell_count).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..parallel.min(cell_count) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cell_count {
                    break;
                }
                let r = job(i);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Runs one solver entry on a bundle.
pub fn solve_one(cfg: &ExperimentConfig, entry: &SolverEntry, bundle: &Bundle, traces: bool) -> Result<SolveRun> {
    let label = entry.label();
    let p = bundle.problem()?;
    let mut sc = entry.to_solver_config(p.cols())?;
    sc.record_history = traces;
    let stop = entry.stopping.to_rule()?;
    let truth = bundle.truth().coefficients();
    let start = Instant::now();
    let out: RunOutcome =
        run_solver_with_truth(&sc, &p, &stop, Some(&truth)).solver_ctx(|| format!("solver `{label}`"))?;
    let wall_time = start.elapsed().as_secs_f64();

    let mut echo = bundle.meta.config.clone();
    echo.solvers = vec![entry.clone()];
    echo.outputs = cfg.outputs.clone();
    echo.compare = None;
    echo.rates = None;
    echo.repetitions = 1;
    let report = SolveReport {
        method: out.method.name().to_string(),
        label,
        k_star: out.k_star,
        n_max: stop.n_max,
        stop_reason: out.reason.name().to_string(),
        l2err: Some(bundle.l2err(out.x())?),
        residual: out.residual_norm,
        preconditioned_residual: out.decision.map(|d| d.functional_value),
        lambda_max: out.lambda_max,
        preconditioner: out.preconditioner.as_ref().map(|g| g.describe()),
        h: bundle.meta.h,
        delta: bundle.meta.delta,
        wall_time,
        prng: PRNG_ALGORITHM.to_string(),
        seed: bundle.meta.seed,
        config_echo: echo,
    };
    Ok(SolveRun {
        report,
        x: out.state.x.clone(),
        history: out.history,
    })
}

fn trace_rows(history: &History, truth_norm: f64) -> Vec<Vec<String>> {
    let opt = |v: Option<&f64>| v.map(|x| fmt_f64(*x)).unwrap_or_default();
    (0..history.residual.len())
        .map(|k| {
            vec![
                k.to_string(),
                fmt_f64(history.residual[k]),
                opt(history.functional.get(k)),
                opt(history.error.get(k).map(|e| e / truth_norm).as_ref()),
            ]
        })
        .collect()
}

fn write_trace(path: &Path, run: &SolveRun, bundle: &Bundle) -> Result<()> {
    let Some(h) = &run.history else { return Ok(()) };
    let truth = bundle.truth().coefficients();
    let norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    formats::write_table(path, &TRACE_HEADER, &trace_rows(h, norm))
}

/// `synth`: writes the bundle of the config to `<out>/bundle`.
pub fn cmd_synth(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(PathBuf, Bundle)> {
    let cfg = cfg.clone().with_seed(opts.seed);
    let bundle = Bundle::from_config(&cfg)?;
    let dir = opts.out_dir(&cfg).join("bundle");
    bundle.write(&dir)?;
    Ok((dir, bundle))
}

fn solve_row(r: &SolveReport) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    vec![
        r.method.clone(),
        r.label.clone(),
        r.k_star.to_string(),
        r.stop_reason.clone(),
        opt(r.l2err),
        fmt_f64(r.residual),
        opt(r.preconditioned_residual),
        format!("{:.6}", r.wall_time),
    ]
}

/// `solve`: runs every solver entry on `bundle_dir` (or on a bundle
/// synthesized in memory when none is given) and writes `solve.csv`, one
/// JSON report per entry and optional traces.
pub fn cmd_solve(cfg: &ExperimentConfig, bundle_dir: Option<&Path>, opts: &RunOptions) -> Result<Vec<SolveRun>> {
    let cfg = cfg.clone().with_seed(opts.seed);
    if cfg.solvers.is_empty() {
        return Err(CliError::config("no [[solvers]] entries"));
    }
    let bundle = match bundle_dir {
        Some(d) => Bundle::read(d)?,
        None => Bundle::from_config(&cfg)?,
    };
    let runs = run_cells(cfg.solvers.len(), opts.parallel, |i| {
        solve_one(&cfg, &cfg.solvers[i], &bundle, opts.traces)
    })?;
    let out = opts.out_dir(&cfg);
    let rows: Vec<Vec<String>> = runs.iter().map(|r| solve_row(&r.report)).collect();
    formats::write_table(&out.join("solve.csv"), &SOLVE_HEADER, &rows)?;
    for (i, run) in runs.iter().enumerate() {
        let name = format!("{i:02}_{}", slug(&run.report.label));
        let json = serde_json::to_string_pretty(&run.report).expect("report serializes");
        formats::write_text(&out.join("reports").join(format!("{name}.json")), &(json + "\n"))?;
        if opts.traces {
            write_trace(&out.join("traces").join(format!("{name}.csv")), run, &bundle)?;
        }
    }
    Ok(runs)
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub noise_h: f64,
    pub noise_delta: f64,
    pub l2err: f64,
    pub k_star: f64,
    pub cpu_seconds: f64,
    /// Solutions of every repetition.
    pub solutions: Vec<Vec<f64>>,
}

impl CompareRow {
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.label.clone(),
            format!("{}", self.noise_h),
            format!("{}", self.noise_delta),
            fmt_f64(self.l2err),
            format!("{}", self.k_star),
            format!("{:.6}", self.cpu_seconds),
        ]
    }

    fn text_fields(&self) -> Vec<String> {
        vec![
            self.label.clone(),
            format!("{}%", self.noise_h * 100.0),
            format!("{}%", self.noise_delta * 100.0),
            format!("{:.4}", self.l2err),
            format!("{}", self.k_star),
            format!("{:.4}", self.cpu_seconds),
        ]
    }
}

/// Seed of repetition `rep`.
pub fn repetition_seed(seed: u64, rep: usize) -> u64 {
    seed.wrapping_add(rep as u64)
}

/// `compare`: every solver entry at every noise pair, averaged over the
/// repetitions. Writes `compare.csv` and `compare.txt`.
pub fn cmd_compare(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<CompareRow>> {
    let cfg = cfg.clone().with_seed(opts.seed);
    if cfg.solvers.len() < 2 {
        return Err(CliError::config("compare needs at least two [[solvers]] entries"));
    }
    let pairs = cfg.noise_pairs();
    let reps = cfg.repetitions;
    let bundles = run_cells(pairs.len() * reps, opts.parallel, |i| {
        let (h, d) = pairs[i / reps];
        Bundle::synthesize(&cfg, h, d, repetition_seed(cfg.seed(), i % reps))
    })?;
    let ns = cfg.solvers.len();
    // cell index = (bundle, solver)
    let runs = run_cells(bundles.len() * ns, opts.parallel, |i| {
        solve_one(&cfg, &cfg.solvers[i % ns], &bundles[i / ns], opts.traces)
    })?;
    let out = opts.out_dir(&cfg);
    let mut rows = Vec::new();
    for (pi, &(h, d)) in pairs.iter().enumerate() {
        for (si, entry) in cfg.solvers.iter().enumerate() {
            let cell: Vec<&SolveRun> = (0..reps).map(|r| &runs[(pi * reps + r) * ns + si]).collect();
            let m = reps as f64;
            rows.push(CompareRow {
                label: entry.label(),
                noise_h: h,
                noise_delta: d,
                l2err: cell.iter().map(|c| c.report.l2err.unwrap_or(f64::NAN)).sum::<f64>() / m,
                k_star: cell.iter().map(|c| c.report.k_star as f64).sum::<f64>() / m,
                cpu_seconds: cell.iter().map(|c| c.report.wall_time).sum::<f64>() / m,
                solutions: cell.iter().map(|c| c.x.clone()).collect(),
            });
            if opts.traces {
                for (r, run) in cell.iter().enumerate() {
                    let name = format!("pair{pi}_rep{r}_{}.csv", slug(&entry.label()));
                    write_trace(&out.join("traces").join(name), run, &bundles[pi * reps + r])?;
                }
            }
        }
    }
    let csv_rows: Vec<Vec<String>> = rows.iter().map(CompareRow::csv_fields).collect();
    formats::write_table(&out.join("compare.csv"), &COMPARE_HEADER, &csv_rows)?;
    let text_rows: Vec<Vec<String>> = rows.iter().map(CompareRow::text_fields).collect();
    formats::write_text(&out.join("compare.txt"), &formats::aligned_table(&COMPARE_HEADER, &text_rows))?;
    Ok(rows)
}

#[derive(Clone, Debug)]
pub struct RatesResult {
    pub family: RateFamily,
    pub parameter: f64,
    pub study: RateStudy,
}

/// `rates`: Hölder or logarithmic rate studies on diagonal problems.
/// Writes `rates.csv` and `slopes.csv`.
pub fn cmd_rates(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<RatesResult>> {
    let rc = cfg.rates.as_ref().ok_or_else(|| CliError::config("no [rates] section"))?;
    if rc.parameters.is_empty() {
        return Err(CliError::config("rates.parameters is empty"));
    }
    let noise: Option<Vec<f64>> = rc
        .noise_levels
        .as_ref()
        .map(|v| v.iter().map(|f| f.0).filter(|d| *d > 0.0).collect());
    let results = run_cells(rc.parameters.len(), opts.parallel, |i| {
        let param = rc.parameters[i];
        let ctx = || format!("{:?} study at {param}", rc.family);
        let study = match rc.family {
            RateFamily::Holder => {
                let mut c = HolderStudyConfig::standard(param);
                if let Some(n) = rc.n {
                    c.n = n;
                }
                if let Some(mu) = rc.mu {
                    c.mu = mu;
                }
                if let Some(a) = rc.amplitude {
                    c.amplitude = a;
                }
                if let Some(v) = &noise {
                    c.noise_levels = v.clone();
                }
                if let Some(s) = opts.seed {
                    c.seed = s;
                }
                holder_rate_study(&c).solver_ctx(ctx)?
            }
            RateFamily::Log => {
                let mut c = LogStudyConfig::standard(param);
                if let Some(n) = rc.n {
                    c.n = n;
                }
                if let Some(mu) = rc.mu {
                    c.mu = mu;
                }
                if let Some(a) = rc.amplitude {
                    c.amplitude = a;
                }
                if let Some(v) = &noise {
                    c.noise_levels = v.clone();
                }
                if let Some(s) = opts.seed {
                    c.seed = s;
                }
                log_rate_study(&c).solver_ctx(ctx)?.study
            }
        };
        Ok(RatesResult {
            family: rc.family,
            parameter: param,
            study,
        })
    })?;
    let fam = |f: RateFamily| match f {
        RateFamily::Holder => "holder",
        RateFamily::Log => "log",
    };
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for r in &results {
        for p in &r.study.points {
            rows.push(vec![
                fam(r.family).to_string(),
                format!("{}", r.parameter),
                fmt_f64(p.noise),
                p.k_star.to_string(),
                fmt_f64(p.error),
            ]);
        }
        slopes.push(vec![
            fam(r.family).to_string(),
            format!("{}", r.parameter),
            fmt_f64(r.study.slope),
            r.study.predicted.map(fmt_f64).unwrap_or_default(),
        ]);
    }
    let out = opts.out_dir(cfg);
    formats::write_table(&out.join("rates.csv"), &RATES_HEADER, &rows)?;
    formats::write_table(&out.join("slopes.csv"), &SLOPES_HEADER, &slopes)?;
    Ok(results)
}
