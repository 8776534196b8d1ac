//! Iteration schemes and the run loop.
//!
//! * Algorithm 1: `z ← (G + AᵀA)⁻¹[(G − AᵀA)|z| + 2Aᵀy]`, output `|z|`.
//! * Algorithm 2: `z ← α_k x₀ + (1 − α_k)·(Algorithm 1 update)`, output `f₊(z)`.
//! * Projected Landweber: `x ← max(0, x + ωAᵀ(y − Ax))`.
//! * Dual projected Landweber: `x = max(0, Aᵀw)`, `w ← w + ω(y − Ax)`.
//!
//! All four always run on the perturbed pair `(A_h, y^δ)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{self, Cholesky};
use crate::operators::{
    make_preconditioner, operator_distance, DenseOperator, PowerIterationConfig, Preconditioner,
    PreconditionerSpec,
};
use crate::stopping::{
    self, a_priori_k, should_stop_modified, should_stop_morozov, StoppingCriterion, StoppingDecision,
    StoppingRule,
};

/// Perturbed (and optionally exact) operator and data with their noise
/// levels `‖A_h − A‖ ≤ h`, `‖y^δ − y‖ ≤ δ`.
#[derive(Clone, Debug)]
pub struct InverseProblem {
    pub operator_exact: Option<DenseOperator>,
    pub operator_noisy: DenseOperator,
    pub data_exact: Option<Vec<f64>>,
    pub data_noisy: Vec<f64>,
    pub h: f64,
    pub delta: f64,
}

impl InverseProblem {
    pub fn new(operator_noisy: DenseOperator, data_noisy: Vec<f64>, h: f64, delta: f64) -> Result<Self> {
        check_len("data vs operator rows", operator_noisy.rows(), data_noisy.len())?;
        if !(h >= 0.0) {
            return Err(invalid("h", h, "must be non-negative"));
        }
        if !(delta >= 0.0) {
            return Err(invalid("delta", delta, "must be non-negative"));
        }
        if data_noisy.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data"));
        }
        Ok(Self {
            operator_exact: None,
            operator_noisy,
            data_exact: None,
            data_noisy,
            h,
            delta,
        })
    }

    /// Noise-free problem: `A_h = A`, `y^δ = y`, `h = δ = 0`.
    pub fn exact(operator: DenseOperator, data: Vec<f64>) -> Result<Self> {
        let mut p = Self::new(operator.clone(), data.clone(), 0.0, 0.0)?;
        p.operator_exact = Some(operator);
        p.data_exact = Some(data);
        Ok(p)
    }

    /// Attaches the exact pair, checking `‖A_h − A‖ ≤ h` and `‖y^δ − y‖ ≤ δ`
    /// up to 1e-12.
    pub fn with_exact(
        mut self,
        operator: DenseOperator,
        data: Vec<f64>,
        power: &PowerIterationConfig,
    ) -> Result<Self> {
        check_len("exact data", self.data_noisy.len(), data.len())?;
        let dist = operator_distance(&operator, &self.operator_noisy, power)?;
        if dist > self.h + 1e-12 {
            return Err(invalid("h", self.h, "smaller than the operator perturbation"));
        }
        let dd = linalg::distance(&data, &self.data_noisy);
        if dd > self.delta + 1e-12 {
            return Err(invalid("delta", self.delta, "smaller than the data perturbation"));
        }
        self.operator_exact = Some(operator);
        self.data_exact = Some(data);
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.operator_noisy.rows()
    }

    pub fn cols(&self) -> usize {
        self.operator_noisy.cols()
    }

    /// `(A, y)` when both are known, else `(A_h, y^δ)`.
    pub fn best_available(&self) -> (&DenseOperator, &[f64]) {
        match (&self.operator_exact, &self.data_exact) {
            (Some(a), Some(y)) => (a, y),
            _ => (&self.operator_noisy, &self.data_noisy),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationState {
    pub k: usize,
    /// Internal iterate; may have negative entries.
    pub z: Vec<f64>,
    /// Non-negative output.
    pub x: Vec<f64>,
    /// Data-space iterate `w_k` (dual Landweber only).
    pub dual: Option<Vec<f64>>,
    pub preconditioned_residual: Option<f64>,
}

impl IterationState {
    /// Starting state of `method` from `x0`. Dual Landweber starts from
    /// `w₀ = 0` and ignores `x0`.
    pub fn initial(method: Method, x0: &[f64], p: &InverseProblem, map: OutputMap) -> Result<Self> {
        check_len("starting vector", p.cols(), x0.len())?;
        let (z, x, dual) = match method {
            Method::Algorithm1 => (x0.to_vec(), OutputMap::Abs.apply(x0), None),
            Method::Algorithm2 => (x0.to_vec(), map.apply(x0), None),
            Method::ProjectedLandweber => {
                let x = project(x0);
                (x.clone(), x, None)
            }
            Method::DualProjectedLandweber => {
                let x = vec![0.0; p.cols()];
                (x.clone(), x, Some(vec![0.0; p.rows()]))
            }
        };
        Ok(Self {
            k: 0,
            z,
            x,
            dual,
            preconditioned_residual: None,
        })
    }
}

/// `max(0, v)` componentwise.
pub fn project(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

/// Output map `f₊` taking internal iterates to the non-negative cone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputMap {
    Abs,
    PositivePart,
    /// `a·z + (1 − a)·|z|` with `a ∈ [0, 1/2]`.
    Blend(f64),
}

impl OutputMap {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OutputMap::Blend(a) if !(0.0..=0.5).contains(&a) => {
                Err(invalid("a", a, "blend parameter must lie in [0, 1/2]"))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.apply_into(z, &mut out);
        out
    }

    pub fn apply_into(&self, z: &[f64], out: &mut [f64]) {
        match *self {
            OutputMap::Abs => {
                for (o, v) in out.iter_mut().zip(z) {
                    *o = v.abs();
                }
            }
            OutputMap::PositivePart => {
                for (o, v) in out.iter_mut().zip(z) {
                    *o = (v + v.abs()) / 2.0;
                }
            }
            OutputMap::Blend(a) => {
                for (o, v) in out.iter_mut().zip(z) {
                    *o = a * v + (1.0 - a) * v.abs();
                }
            }
        }
    }
}

/// Relaxation parameters `α_k` of Algorithm 2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RelaxationSchedule {
    Zero,
    /// `α_k = 1/(k+1)`
    Harmonic,
    /// `α_k = 1/((k+1)·log₁(k+1)···log_q(k+1))`, `log_i = max(1, i-fold log)`
    HarmonicLog(u32),
}

impl RelaxationSchedule {
    /// `α_k` for `k ≥ 1`.
    pub fn alpha(&self, k: usize) -> f64 {
        let k = k.max(1);
        let m = (k + 1) as f64;
        match *self {
            RelaxationSchedule::Zero => 0.0,
            RelaxationSchedule::Harmonic => 1.0 / m,
            RelaxationSchedule::HarmonicLog(q) => {
                let mut prod = 1.0;
                let mut v = m;
                for _ in 0..q {
                    v = if v > 0.0 { libm::log(v) } else { f64::NEG_INFINITY };
                    prod *= if v > 1.0 { v } else { 1.0 };
                }
                1.0 / (m * prod)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Algorithm1,
    Algorithm2,
    ProjectedLandweber,
    DualProjectedLandweber,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Algorithm1,
        Method::Algorithm2,
        Method::ProjectedLandweber,
        Method::DualProjectedLandweber,
    ];

    pub fn is_landweber(self) -> bool {
        matches!(self, Method::ProjectedLandweber | Method::DualProjectedLandweber)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Algorithm1 => "algorithm1",
            Method::Algorithm2 => "algorithm2",
            Method::ProjectedLandweber => "landweber",
            Method::DualProjectedLandweber => "dual_landweber",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match key.as_str() {
            "algorithm1" | "alg1" => Ok(Method::Algorithm1),
            "algorithm2" | "alg2" => Ok(Method::Algorithm2),
            "landweber" | "projectedlandweber" => Ok(Method::ProjectedLandweber),
            "duallandweber" | "dualprojectedlandweber" => Ok(Method::DualProjectedLandweber),
            _ => Err(Error::Unsupported("unknown solver method")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Required by Algorithms 1/2 and by the modified discrepancy rule.
    pub preconditioner: Option<PreconditionerSpec>,
    /// Seed for the random catalog entries G5-G8.
    pub preconditioner_seed: u64,
    /// Landweber step size; must lie in `(0, 2/‖A_h‖²)`.
    pub omega: f64,
    pub schedule: RelaxationSchedule,
    /// Used by Algorithm 2 only. Algorithm 1 always outputs `|z|`.
    pub output_map: OutputMap,
    /// Defaults to the zero vector.
    pub x0: Option<Vec<f64>>,
    pub max_iterations: usize,
    pub record_history: bool,
    pub power: PowerIterationConfig,
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            preconditioner: None,
            preconditioner_seed: 0,
            omega: 1.0,
            schedule: RelaxationSchedule::Harmonic,
            output_map: match method {
                Method::Algorithm2 => OutputMap::PositivePart,
                _ => OutputMap::Abs,
            },
            x0: None,
            max_iterations: 1_000_000,
            record_history: false,
            power: PowerIterationConfig::default(),
        }
    }

    pub fn with_preconditioner(mut self, spec: PreconditionerSpec) -> Self {
        self.preconditioner = Some(spec);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StopReason {
    DiscrepancyMet,
    APrioriReached,
    MaxIterations,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::DiscrepancyMet => "discrepancy_met",
            StopReason::APrioriReached => "a_priori_reached",
            StopReason::MaxIterations => "max_iterations",
        }
    }
}

/// Per-iterate traces, index `k = 0..=k*`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    /// `‖A_h x_k − y^δ‖`
    pub residual: Vec<f64>,
    /// Stopping functional, when the rule has one.
    pub functional: Vec<f64>,
    /// `‖x_k − x†‖`, when the truth was supplied.
    pub error: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub method: Method,
    pub k_star: usize,
    pub reason: StopReason,
    pub state: IterationState,
    /// `‖A_h x_{k*} − y^δ‖`
    pub residual_norm: f64,
    /// Last stopping decision, when the rule evaluates a functional.
    pub decision: Option<StoppingDecision>,
    /// `‖A_h‖₂`
    pub lambda_max: f64,
    pub preconditioner: Option<Preconditioner>,
    pub history: Option<History>,
}

impl RunOutcome {
    pub fn x(&self) -> &[f64] {
        &self.state.x
    }
}

// Precomputed pieces shared by every step of one run.
struct Machine<'a> {
    method: Method,
    a: &'a DenseOperator,
    y: &'a [f64],
    g: Option<&'a Preconditioner>,
    factor: Option<&'a Cholesky>,
    two_aty: Vec<f64>,
    omega: f64,
    schedule: RelaxationSchedule,
    map: OutputMap,
    x0: &'a [f64],
    // scratch
    abs_z: Vec<f64>,
    image: Vec<f64>,
    buf_n: Vec<f64>,
    buf_n2: Vec<f64>,
}

impl<'a> Machine<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        method: Method,
        p: &'a InverseProblem,
        g: Option<&'a Preconditioner>,
        factor: Option<&'a Cholesky>,
        omega: f64,
        schedule: RelaxationSchedule,
        map: OutputMap,
        x0: &'a [f64],
    ) -> Self {
        let a = &p.operator_noisy;
        let mut two_aty = a.matrix().tr_mul_vec(&p.data_noisy);
        two_aty.iter_mut().for_each(|v| *v *= 2.0);
        let n = a.cols();
        Self {
            method,
            a,
            y: &p.data_noisy,
            g,
            factor,
            two_aty,
            omega,
            schedule,
            map,
            x0,
            abs_z: vec![0.0; n],
            image: vec![0.0; a.rows()],
            buf_n: vec![0.0; n],
            buf_n2: vec![0.0; n],
        }
    }

    /// Fills `abs_z = |z|` and `image = A_h|z|`.
    fn refresh_image(&mut self, state: &IterationState) {
        for (o, v) in self.abs_z.iter_mut().zip(&state.z) {
            *o = v.abs();
        }
        self.a.matrix().mul_vec_into(&self.abs_z, &mut self.image);
    }

    /// `(G + AᵀA)⁻¹[G|z| − Aᵀ(A|z|) + 2Aᵀy]`, using the refreshed image.
    fn fixed_point_map(&mut self) -> Vec<f64> {
        let g = self.g.expect("preconditioner resolved for fixed-point methods");
        let factor = self.factor.expect("factor resolved for fixed-point methods");
        g.apply_into(&self.abs_z, &mut self.buf_n);
        self.a.matrix().tr_mul_vec_into(&self.image, &mut self.buf_n2);
        let mut rhs: Vec<f64> = self
            .buf_n
            .iter()
            .zip(&self.buf_n2)
            .zip(&self.two_aty)
            .map(|((gz, ata), b)| gz - ata + b)
            .collect();
        factor.solve_in_place(&mut rhs);
        rhs
    }

    /// Advances `state` by one step; `refresh_image` must have been called.
    fn step(&mut self, state: &mut IterationState) -> Result<()> {
        match self.method {
            Method::Algorithm1 => {
                let z = self.fixed_point_map();
                state.x = OutputMap::Abs.apply(&z);
                state.z = z;
            }
            Method::Algorithm2 => {
                let alpha = self.schedule.alpha(state.k + 1);
                if !(0.0..1.0).contains(&alpha) {
                    return Err(invalid("alpha", alpha, "must lie in [0, 1)"));
                }
                let mut z = self.fixed_point_map();
                if alpha != 0.0 {
                    for (zi, x0i) in z.iter_mut().zip(self.x0) {
                        *zi = alpha * x0i + (1.0 - alpha) * *zi;
                    }
                }
                state.x = self.map.apply(&z);
                state.z = z;
            }
            Method::ProjectedLandweber => {
                // x = z ≥ 0 here, so the image is A_h x.
                let r: Vec<f64> = self.y.iter().zip(&self.image).map(|(y, v)| y - v).collect();
                self.a.matrix().tr_mul_vec_into(&r, &mut self.buf_n);
                let x: Vec<f64> = state
                    .x
                    .iter()
                    .zip(&self.buf_n)
                    .map(|(x, g)| {
                        let v = x + self.omega * g;
                        if v > 0.0 {
                            v
                        } else {
                            0.0
                        }
                    })
                    .collect();
                state.z = x.clone();
                state.x = x;
            }
            Method::DualProjectedLandweber => {
                let w = state.dual.as_mut().ok_or(Error::MissingDual)?;
                for ((wi, yi), vi) in w.iter_mut().zip(self.y).zip(&self.image) {
                    *wi += self.omega * (yi - vi);
                }
                self.a.matrix().tr_mul_vec_into(w, &mut self.buf_n);
                let x = project(&self.buf_n);
                state.z = x.clone();
                state.x = x;
            }
        }
        state.k += 1;
        if state.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { iteration: state.k });
        }
        Ok(())
    }
}

fn one_step(
    method: Method,
    state: &IterationState,
    p: &InverseProblem,
    g: Option<&Preconditioner>,
    omega: f64,
    schedule: RelaxationSchedule,
    map: OutputMap,
    x0: &[f64],
) -> Result<IterationState> {
    check_len("iterate", p.cols(), state.z.len())?;
    check_len("iterate output", p.cols(), state.x.len())?;
    let factor = match g {
        Some(g) => Some(g.model_factor(&p.operator_noisy)?),
        None => None,
    };
    let mut m = Machine::new(method, p, g, factor.as_deref(), omega, schedule, map, x0);
    m.refresh_image(state);
    let mut next = state.clone();
    m.step(&mut next)?;
    next.preconditioned_residual = None;
    Ok(next)
}

/// One step of Algorithm 1.
pub fn algorithm1_step(state: &IterationState, p: &InverseProblem, g: &Preconditioner) -> Result<IterationState> {
    one_step(
        Method::Algorithm1,
        state,
        p,
        Some(g),
        1.0,
        RelaxationSchedule::Zero,
        OutputMap::Abs,
        &[],
    )
}

/// One step of Algorithm 2 with an explicit relaxation value `alpha_k`.
pub fn algorithm2_step(
    state: &IterationState,
    p: &InverseProblem,
    g: &Preconditioner,
    alpha_k: f64,
    x0: &[f64],
    map: OutputMap,
) -> Result<IterationState> {
    if !(0.0..1.0).contains(&alpha_k) {
        return Err(invalid("alpha", alpha_k, "must lie in [0, 1)"));
    }
    check_len("starting vector", p.cols(), x0.len())?;
    map.validate()?;
    check_len("iterate", p.cols(), state.z.len())?;
    let factor = g.model_factor(&p.operator_noisy)?;
    let mut m = Machine::new(
        Method::Algorithm2,
        p,
        Some(g),
        Some(&factor),
        1.0,
        RelaxationSchedule::Zero,
        map,
        x0,
    );
    m.refresh_image(state);
    let mut z = m.fixed_point_map();
    if alpha_k != 0.0 {
        for (zi, x0i) in z.iter_mut().zip(x0) {
            *zi = alpha_k * x0i + (1.0 - alpha_k) * *zi;
        }
    }
    Ok(IterationState {
        k: state.k + 1,
        x: map.apply(&z),
        z,
        dual: None,
        preconditioned_residual: None,
    })
}

pub fn projected_landweber_step(state: &IterationState, p: &InverseProblem, omega: f64) -> Result<IterationState> {
    if !(omega > 0.0) {
        return Err(invalid("omega", omega, "must be positive"));
    }
    let mut s = state.clone();
    s.z = state.x.clone();
    one_step(
        Method::ProjectedLandweber,
        &s,
        p,
        None,
        omega,
        RelaxationSchedule::Zero,
        OutputMap::Abs,
        &[],
    )
}

pub fn dual_projected_landweber_step(
    state: &IterationState,
    p: &InverseProblem,
    omega: f64,
) -> Result<IterationState> {
    if !(omega > 0.0) {
        return Err(invalid("omega", omega, "must be positive"));
    }
    if state.dual.is_none() {
        return Err(Error::MissingDual);
    }
    let mut s = state.clone();
    s.z = state.x.clone();
    one_step(
        Method::DualProjectedLandweber,
        &s,
        p,
        None,
        omega,
        RelaxationSchedule::Zero,
        OutputMap::Abs,
        &[],
    )
}

/// Resolves the preconditioner spec of `cfg` against `A_h`.
pub fn resolve_preconditioner(
    cfg: &SolverConfig,
    p: &InverseProblem,
    lambda_max: f64,
) -> Result<Option<Preconditioner>> {
    match &cfg.preconditioner {
        None => Ok(None),
        Some(spec) => make_preconditioner(spec, p.cols(), lambda_max, cfg.preconditioner_seed).map(Some),
    }
}

pub fn run_solver(cfg: &SolverConfig, p: &InverseProblem, stop: &StoppingRule) -> Result<RunOutcome> {
    run_solver_with_truth(cfg, p, stop, None)
}

/// Runs `cfg.method` until `stop` fires or the iteration cap is reached.
/// With `truth` supplied and `cfg.record_history` set, the error trace is
/// recorded as well.
pub fn run_solver_with_truth(
    cfg: &SolverConfig,
    p: &InverseProblem,
    stop: &StoppingRule,
    truth: Option<&[f64]>,
) -> Result<RunOutcome> {
    cfg.output_map.validate()?;
    if let Some(t) = truth {
        check_len("ground truth", p.cols(), t.len())?;
    }
    let zeros;
    let x0: &[f64] = match &cfg.x0 {
        Some(v) => {
            check_len("starting vector", p.cols(), v.len())?;
            v
        }
        None => {
            zeros = vec![0.0; p.cols()];
            &zeros
        }
    };

    let a = &p.operator_noisy;
    let lambda_max = a.spectral_norm(&cfg.power)?;
    if cfg.method.is_landweber() {
        let upper = if lambda_max > 0.0 {
            2.0 / (lambda_max * lambda_max)
        } else {
            f64::INFINITY
        };
        if !(cfg.omega > 0.0 && cfg.omega < upper) {
            return Err(invalid("omega", cfg.omega, "must lie in (0, 2/‖A_h‖²)"));
        }
    }

    let needs_g = !cfg.method.is_landweber() || stop.needs_preconditioner();
    let g = if needs_g {
        if lambda_max == 0.0 && matches!(cfg.preconditioner, Some(PreconditionerSpec::Catalog(_))) {
            return Err(Error::Unsupported("catalog preconditioners need a nonzero operator"));
        }
        Some(
            resolve_preconditioner(cfg, p, lambda_max)?
                .ok_or(Error::Unsupported("this method needs a preconditioner"))?,
        )
    } else {
        None
    };
    stop.validate(g.as_ref())?;

    let factor = match (&g, cfg.method.is_landweber()) {
        (Some(g), false) => Some(g.model_factor(a)?),
        _ => None,
    };
    let mut machine = Machine::new(
        cfg.method,
        p,
        g.as_ref(),
        factor.as_deref(),
        cfg.omega,
        cfg.schedule,
        cfg.output_map,
        x0,
    );

    let n_max = cfg.max_iterations.min(stop.n_max);
    let k_apriori = match stop.criterion {
        StoppingCriterion::APriori(rule) => Some(a_priori_k(p.h, p.delta, rule)?),
        _ => None,
    };

    let mut state = IterationState::initial(cfg.method, x0, p, cfg.output_map)?;
    let mut history = cfg.record_history.then(History::default);
    let x_is_abs_z = !matches!(cfg.method, Method::Algorithm2) || cfg.output_map == OutputMap::Abs;

    loop {
        machine.refresh_image(&state);
        let need_residual = history.is_some() || matches!(stop.criterion, StoppingCriterion::Morozov { .. });
        let residual = if need_residual {
            Some(data_residual(&machine, &state, x_is_abs_z))
        } else {
            None
        };

        let decision = match stop.criterion {
            StoppingCriterion::MaxOnly => None,
            StoppingCriterion::APriori(_) => None,
            StoppingCriterion::Morozov { tau0 } => Some(should_stop_morozov(
                residual.expect("computed for Morozov"),
                tau0,
                p.delta,
                p.h,
            )?),
            StoppingCriterion::ModifiedDiscrepancy { scale, c_dagger } => {
                let g = g.as_ref().expect("validated above");
                let r = stopping::preconditioned_residual_from_image(p, g, &machine.image)?;
                state.preconditioned_residual = Some(r);
                Some(should_stop_modified(r, scale, c_dagger, p.delta, p.h, g)?)
            }
        };

        if let Some(h) = history.as_mut() {
            h.residual.push(residual.unwrap_or(f64::NAN));
            if let Some(d) = decision {
                h.functional.push(d.functional_value);
            }
            if let Some(t) = truth {
                h.error.push(linalg::distance(&state.x, t));
            }
        }

        let reason = if decision.is_some_and(|d| d.stop) {
            Some(StopReason::DiscrepancyMet)
        } else if k_apriori.is_some_and(|k| state.k >= k) {
            Some(StopReason::APrioriReached)
        } else if state.k >= n_max {
            Some(StopReason::MaxIterations)
        } else {
            None
        };

        if let Some(reason) = reason {
            let residual_norm = match residual {
                Some(r) => r,
                None => data_residual(&machine, &state, x_is_abs_z),
            };
            return Ok(RunOutcome {
                method: cfg.method,
                k_star: state.k,
                reason,
                state,
                residual_norm,
                decision,
                lambda_max,
                preconditioner: g.clone(),
                history,
            });
        }
        machine.step(&mut state)?;
    }
}

fn data_residual(m: &Machine<'_>, state: &IterationState, x_is_abs_z: bool) -> f64 {
    if x_is_abs_z {
        linalg::distance(&m.image, m.y)
    } else {
        linalg::distance(&m.a.matrix().mul_vec(&state.x), m.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stopping::DiscrepancyScale;

    fn scalar_problem(a: f64, y: f64) -> InverseProblem {
        InverseProblem::exact(DenseOperator::from_rows(&[&[a]]), vec![y]).unwrap()
    }

    fn state(z: Vec<f64>) -> IterationState {
        IterationState {
            k: 0,
            x: z.iter().map(|v| v.abs()).collect(),
            z,
            dual: None,
            preconditioned_residual: None,
        }
    }

    #[test]
    fn algorithm1_step_examples() {
        // zero operator: the step reduces to |z|
        let p = InverseProblem::new(DenseOperator::zeros(2, 2), vec![0.0, 0.0], 0.0, 0.0).unwrap();
        let g = Preconditioner::scalar(3.0, 2).unwrap();
        let s = algorithm1_step(&state(vec![-1.5, 2.0]), &p, &g).unwrap();
        assert!((s.z[0] - 1.5).abs() < 1e-15 && (s.z[1] - 2.0).abs() < 1e-15);
        assert_eq!(s.k, 1);

        let p = scalar_problem(1.0, 1.0);
        let g = Preconditioner::scalar(1.0, 1).unwrap();
        let s = algorithm1_step(&state(vec![0.0]), &p, &g).unwrap();
        assert!((s.z[0] - 1.0).abs() < 1e-15);

        // exact solution is a fixed point
        let a = DenseOperator::from_rows(&[&[1.0, 0.5], &[0.2, 2.0], &[0.0, 1.0]]);
        let xt = vec![0.7, 1.3];
        let y = a.apply(&xt).unwrap();
        let p = InverseProblem::exact(a, y).unwrap();
        let g = Preconditioner::scalar(0.1, 2).unwrap();
        let s = algorithm1_step(&state(xt.clone()), &p, &g).unwrap();
        assert!(linalg::distance(&s.z, &xt) < 1e-13);
    }

    #[test]
    fn algorithm2_step_examples() {
        let p = scalar_problem(1.0, 1.0);
        let g = Preconditioner::scalar(1.0, 1).unwrap();
        let s = algorithm2_step(&state(vec![0.0]), &p, &g, 0.5, &[0.0], OutputMap::Abs).unwrap();
        assert!((s.z[0] - 0.5).abs() < 1e-15);

        let s0 = state(vec![0.3]);
        let a2 = algorithm2_step(&s0, &p, &g, 0.0, &[0.0], OutputMap::Abs).unwrap();
        let a1 = algorithm1_step(&s0, &p, &g).unwrap();
        assert_eq!(a1.z, a2.z);

        let s = algorithm2_step(&s0, &p, &g, 0.999, &[5.0], OutputMap::Abs).unwrap();
        assert!((s.z[0] - 5.0).abs() < 0.01);
        assert!(algorithm2_step(&s0, &p, &g, 1.0, &[5.0], OutputMap::Abs).is_err());
    }

    #[test]
    fn landweber_step_examples() {
        let p = scalar_problem(1.0, 1.0);
        let s = projected_landweber_step(&state(vec![0.0]), &p, 1.0).unwrap();
        assert_eq!(s.x, vec![1.0]);

        // pre-projection value (-1, 2) is clipped to (0, 2)
        let p = InverseProblem::exact(DenseOperator::identity(2), vec![-1.0, 2.0]).unwrap();
        let s = projected_landweber_step(&state(vec![0.0, 0.0]), &p, 1.0).unwrap();
        assert_eq!(s.x, vec![0.0, 2.0]);

        let a = DenseOperator::from_rows(&[&[0.5, 0.1], &[0.0, 0.4]]);
        let xt = vec![1.0, 2.0];
        let p = InverseProblem::exact(a.clone(), a.apply(&xt).unwrap()).unwrap();
        let s = projected_landweber_step(&state(xt.clone()), &p, 1.0).unwrap();
        assert!(linalg::distance(&s.x, &xt) < 1e-15);
    }

    #[test]
    fn dual_landweber_examples() {
        let p = scalar_problem(1.0, 1.0);
        let s0 = IterationState::initial(Method::DualProjectedLandweber, &[0.0], &p, OutputMap::Abs).unwrap();
        assert_eq!(s0.x, vec![0.0]);
        let s1 = dual_projected_landweber_step(&s0, &p, 1.0).unwrap();
        assert_eq!(s1.dual.as_deref(), Some(&[1.0][..]));
        assert_eq!(s1.x, vec![1.0]);
        let s2 = dual_projected_landweber_step(&s1, &p, 1.0).unwrap();
        assert_eq!(s2.dual, s1.dual);

        let mut no_dual = s0.clone();
        no_dual.dual = None;
        assert_eq!(
            dual_projected_landweber_step(&no_dual, &p, 1.0),
            Err(Error::MissingDual)
        );
    }

    #[test]
    fn output_map_examples() {
        assert_eq!(OutputMap::Abs.apply(&[-1.0, 2.0]), vec![1.0, 2.0]);
        assert_eq!(OutputMap::PositivePart.apply(&[-1.0, 2.0]), vec![0.0, 2.0]);
        assert_eq!(OutputMap::Blend(0.25).apply(&[-4.0]), vec![2.0]);
        assert!(OutputMap::Blend(0.6).validate().is_err());
        assert!(OutputMap::Blend(0.5).validate().is_ok());
    }

    #[test]
    fn relaxation_examples() {
        assert_eq!(RelaxationSchedule::Harmonic.alpha(1), 0.5);
        assert!((RelaxationSchedule::Harmonic.alpha(9) - 0.1).abs() < 1e-16);
        assert_eq!(RelaxationSchedule::Zero.alpha(17), 0.0);
        for q in 1..4 {
            for k in [1, 2, 10, 1000, 1_000_000] {
                let a = RelaxationSchedule::HarmonicLog(q).alpha(k);
                assert!(a > 0.0 && a < 1.0);
                assert!(a <= RelaxationSchedule::Harmonic.alpha(k));
            }
        }
        // log factor kicks in once log(k+1) > 1
        let a = RelaxationSchedule::HarmonicLog(1).alpha(99);
        assert!((a - 1.0 / (100.0 * libm::log(100.0))).abs() < 1e-16);
    }

    #[test]
    fn run_with_zero_cap_returns_start() {
        let p = scalar_problem(1.0, 1.0);
        let mut cfg = SolverConfig::new(Method::Algorithm1).with_preconditioner(PreconditionerSpec::Scalar(1.0));
        cfg.x0 = Some(vec![-2.0]);
        let out = run_solver(&cfg, &p, &StoppingRule::max_only(0)).unwrap();
        assert_eq!(out.k_star, 0);
        assert_eq!(out.x(), &[2.0]);
        assert_eq!(out.reason, StopReason::MaxIterations);
    }

    #[test]
    fn scalar_example_stops_after_one_step() {
        // δ = 1e-12 stands in for zero noise; the one-step iterate is exact only up to rounding
        let p = InverseProblem::new(DenseOperator::from_rows(&[&[1.0]]), vec![1.0], 0.0, 1e-12).unwrap();
        let cfg = SolverConfig::new(Method::Algorithm1).with_preconditioner(PreconditionerSpec::Scalar(1.0));
        let stop = StoppingRule::modified(DiscrepancyScale::Tau(2.0), 1.0, 100);
        let out = run_solver(&cfg, &p, &stop).unwrap();
        assert_eq!(out.k_star, 1);
        assert_eq!(out.reason, StopReason::DiscrepancyMet);
        assert!((out.x()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn landweber_rejects_large_omega() {
        let p = InverseProblem::exact(DenseOperator::diagonal(&[2.0, 1.0]), vec![1.0, 1.0]).unwrap();
        let mut cfg = SolverConfig::new(Method::ProjectedLandweber);
        cfg.omega = 0.51;
        assert!(run_solver(&cfg, &p, &StoppingRule::max_only(3)).is_err());
        cfg.omega = 0.49;
        assert!(run_solver(&cfg, &p, &StoppingRule::max_only(3)).is_ok());
    }

    #[test]
    fn fixed_point_methods_need_a_preconditioner() {
        let p = scalar_problem(1.0, 1.0);
        let cfg = SolverConfig::new(Method::Algorithm1);
        assert!(matches!(
            run_solver(&cfg, &p, &StoppingRule::max_only(3)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("Algorithm 1".parse::<Method>().unwrap(), Method::Algorithm1);
        assert!("newton".parse::<Method>().is_err());
    }

    #[test]
    fn history_is_recorded_per_iterate() {
        let a = DenseOperator::from_rows(&[&[1.0, 0.2], &[0.1, 0.5]]);
        let xt = vec![1.0, 0.5];
        let p = InverseProblem::exact(a.clone(), a.apply(&xt).unwrap()).unwrap();
        let mut cfg = SolverConfig::new(Method::Algorithm2).with_preconditioner(PreconditionerSpec::Scalar(0.1));
        cfg.record_history = true;
        let out = run_solver_with_truth(&cfg, &p, &StoppingRule::max_only(25), Some(&xt)).unwrap();
        let h = out.history.unwrap();
        assert_eq!(h.residual.len(), 26);
        assert_eq!(h.error.len(), 26);
        assert!(h.functional.is_empty());
        assert!((h.residual[25] - out.residual_norm).abs() < 1e-15);
    }
}
