//! Kinetic-rate biosensor forward model.
//!
//! A rate constant map `x(k_a, k_d)` on `Ω` produces the sensorgram
//! `y(t; C) = ∫_Ω K(t, C; k_a, k_d) x(k_a, k_d)` on `Θ`. Both domains are
//! discretized by rectangular cells with normalized indicator functions
//! `1_cell/√area` as bases, so coefficient vectors carry the plain `L²`
//! geometry and assembled matrices inherit the continuous operator norm.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{self, Matrix};
use crate::operators::{operator_distance, DenseOperator, PowerIterationConfig};
use crate::rng::{self, Stream};

/// Closed rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let r = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let b = [self.x_min, self.x_max, self.y_min, self.y_max];
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rectangle bounds"));
        }
        if !(self.x_min < self.x_max) {
            return Err(invalid("x_max", self.x_max, "must exceed x_min"));
        }
        if !(self.y_min < self.y_max) {
            return Err(invalid("y_max", self.y_max, "must exceed y_min"));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn centroid(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    /// Containment with a relative slack of 1e-12 on each side.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        let sx = 1e-12 * (self.x_max - self.x_min);
        let sy = 1e-12 * (self.y_max - self.y_min);
        other.x_min >= self.x_min - sx
            && other.x_max <= self.x_max + sx
            && other.y_min >= self.y_min - sy
            && other.y_max <= self.y_max + sy
    }
}

/// Tensor partition of a rectangle into `nx × ny` cells. Cells are indexed
/// with the first axis fastest: `index = iy·nx + ix`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid2D {
    bounds: Rect,
    x_edges: Vec<f64>,
    y_edges: Vec<f64>,
}

impl Grid2D {
    pub fn uniform(bounds: Rect, nx: usize, ny: usize) -> Result<Self> {
        bounds.validate()?;
        if nx == 0 || ny == 0 {
            return Err(Error::EmptyMatrix);
        }
        let edges = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
            (0..=n)
                .map(|i| {
                    if i == n {
                        hi
                    } else {
                        lo + (hi - lo) * (i as f64) / (n as f64)
                    }
                })
                .collect()
        };
        Ok(Self {
            bounds,
            x_edges: edges(bounds.x_min, bounds.x_max, nx),
            y_edges: edges(bounds.y_min, bounds.y_max, ny),
        })
    }

    /// Partition from strictly increasing edge lists.
    pub fn from_edges(x_edges: Vec<f64>, y_edges: Vec<f64>) -> Result<Self> {
        for e in [&x_edges, &y_edges] {
            if e.len() < 2 {
                return Err(Error::EmptyMatrix);
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("grid edges"));
            }
            if e.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Unsupported("grid edges must be strictly increasing"));
            }
        }
        let bounds = Rect {
            x_min: x_edges[0],
            x_max: x_edges[x_edges.len() - 1],
            y_min: y_edges[0],
            y_max: y_edges[y_edges.len() - 1],
        };
        Ok(Self {
            bounds,
            x_edges,
            y_edges,
        })
    }

    pub fn bounds(&self) -> &Rect {
        &self.bounds
    }

    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell(&self, index: usize) -> Rect {
        let (ix, iy) = (index % self.nx(), index / self.nx());
        Rect {
            x_min: self.x_edges[ix],
            x_max: self.x_edges[ix + 1],
            y_min: self.y_edges[iy],
            y_max: self.y_edges[iy + 1],
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Rect> + '_ {
        (0..self.len()).map(move |i| self.cell(i))
    }

    pub fn centroids(&self) -> Vec<(f64, f64)> {
        self.cells().map(|c| c.centroid()).collect()
    }

    pub fn areas(&self) -> Vec<f64> {
        self.cells().map(|c| c.area()).collect()
    }
}

/// Values of a rate constant map at the cell centroids of a grid over `Ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct RateConstantMap {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl RateConstantMap {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        check_len("rate constant map", grid.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("rate constant map"));
        }
        Ok(Self { grid, values })
    }

    /// Coordinates in the normalized indicator basis: `value·√area`.
    pub fn coefficients(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.grid.cells())
            .map(|(v, c)| v * libm::sqrt(c.area()))
            .collect()
    }

    /// Inverse of [`coefficients`](Self::coefficients).
    pub fn from_coefficients(grid: Grid2D, coefficients: &[f64]) -> Result<Self> {
        check_len("rate constant coefficients", grid.len(), coefficients.len())?;
        let values = coefficients
            .iter()
            .zip(grid.cells())
            .map(|(c, cell)| c / libm::sqrt(cell.area()))
            .collect();
        Self::new(grid, values)
    }
}

/// Sensorgram samples in the normalized indicator basis of a grid over `Θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sensorgram {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

impl Sensorgram {
    pub fn new(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        check_len("sensorgram", grid.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sensorgram"));
        }
        Ok(Self { grid, values })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Midpoint,
    /// 2×2 tensor Gauss-Legendre rule on every cell of both grids.
    Gauss2,
}

/// Kinetic model: rate domain `Ω = [k_a] × [k_d]`, measurement domain
/// `Θ = [t] × [C]`, injection start `t0`, detector delay `dt`, injection
/// length `t_inj`, and the normalization divisor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KineticsModel {
    pub omega: Rect,
    pub theta: Rect,
    pub t0: f64,
    pub dt: f64,
    pub t_inj: f64,
    pub normalization: f64,
}

impl KineticsModel {
    pub fn new(omega: Rect, theta: Rect, t0: f64, dt: f64, t_inj: f64) -> Result<Self> {
        let m = Self {
            omega,
            theta,
            t0,
            dt,
            t_inj,
            normalization: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.omega.validate()?;
        self.theta.validate()?;
        if !self.t0.is_finite() {
            return Err(Error::NonFinite("t0"));
        }
        if !(self.t_inj > 0.0 && self.t_inj.is_finite()) {
            return Err(invalid("t_inj", self.t_inj, "must be positive"));
        }
        if !(self.dt >= 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", self.dt, "must be non-negative"));
        }
        if !(self.theta.y_min > 0.0) {
            return Err(invalid("C_min", self.theta.y_min, "concentrations must be positive"));
        }
        if !(self.omega.x_min >= 0.0 && self.omega.y_min >= 0.0) {
            return Err(invalid("omega", self.omega.x_min.min(self.omega.y_min), "rate constants must be non-negative"));
        }
        if !(self.normalization > 0.0 && self.normalization.is_finite()) {
            return Err(invalid("normalization", self.normalization, "must be positive"));
        }
        Ok(())
    }

    pub fn with_dt(mut self, dt: f64) -> Result<Self> {
        self.dt = dt;
        self.validate()?;
        Ok(self)
    }

    pub fn example(id: ExampleId) -> Self {
        match id {
            ExampleId::Example1 => Self {
                omega: Rect {
                    x_min: 0.0,
                    x_max: 3.0,
                    y_min: 0.0,
                    y_max: 3.0,
                },
                theta: Rect {
                    x_min: 0.0,
                    x_max: 5.0,
                    y_min: 0.001,
                    y_max: 2.0,
                },
                t0: 0.0,
                dt: 0.1,
                t_inj: 2.0,
                normalization: 1.0,
            },
            ExampleId::Example2 => Self {
                omega: Rect {
                    x_min: 0.0,
                    x_max: 9.0,
                    y_min: 0.0,
                    y_max: 2.0,
                },
                theta: Rect {
                    x_min: 0.0,
                    x_max: 8.0,
                    y_min: 0.01,
                    y_max: 1.0,
                },
                t0: 0.0,
                dt: 0.2,
                t_inj: 4.0,
                normalization: 1.0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExampleId {
    Example1,
    Example2,
}

impl fmt::Display for ExampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExampleId::Example1 => "example1",
            ExampleId::Example2 => "example2",
        })
    }
}

impl FromStr for ExampleId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace([' ', '_', '-'], "").as_str() {
            "example1" | "ex1" | "1" => Ok(ExampleId::Example1),
            "example2" | "ex2" | "2" => Ok(ExampleId::Example2),
            _ => Err(Error::Unsupported("unknown example id")),
        }
    }
}

// Unnormalized kernel; arguments already validated.
fn kernel_raw(t0: f64, dt: f64, t_inj: f64, t: f64, c: f64, ka: f64, kd: f64) -> f64 {
    if t <= t0 + dt {
        return 0.0;
    }
    let kac = ka * c;
    let rate = kd + kac;
    let coef = kac / rate;
    if t <= t0 + t_inj + dt {
        coef * (1.0 - libm::exp(-rate * (t - t0)))
    } else {
        coef * (1.0 - libm::exp(-rate * t_inj)) * libm::exp(-kd * (t - t0 - t_inj))
    }
}

/// `K(t, C; k_a, k_d)` divided by the model normalization.
pub fn kernel_eval(m: &KineticsModel, t: f64, c: f64, ka: f64, kd: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(invalid("C", c, "concentration must be positive"));
    }
    if !(ka >= 0.0 && kd >= 0.0) {
        return Err(invalid("k", ka.min(kd), "rate constants must be non-negative"));
    }
    if !(ka + kd > 0.0) {
        return Err(invalid("k", 0.0, "k_a + k_d must be positive"));
    }
    if !t.is_finite() || !ka.is_finite() || !kd.is_finite() || !c.is_finite() {
        return Err(Error::NonFinite("kernel argument"));
    }
    Ok(kernel_raw(m.t0, m.dt, m.t_inj, t, c, ka, kd) / m.normalization)
}

// Nodes and weights of the rule on one cell, weights summing to 1.
fn cell_nodes(cell: &Rect, q: Quadrature) -> Vec<(f64, f64, f64)> {
    match q {
        Quadrature::Midpoint => {
            let (x, y) = cell.centroid();
            vec![(x, y, 1.0)]
        }
        Quadrature::Gauss2 => {
            let g = 0.5 / libm::sqrt(3.0);
            let (cx, cy) = cell.centroid();
            let (hx, hy) = (cell.x_max - cell.x_min, cell.y_max - cell.y_min);
            let mut out = Vec::with_capacity(4);
            for sy in [-g, g] {
                for sx in [-g, g] {
                    out.push((cx + sx * hx, cy + sy * hy, 0.25));
                }
            }
            out
        }
    }
}

fn check_grids(m: &KineticsModel, model_grid: &Grid2D, data_grid: &Grid2D) -> Result<()> {
    m.validate()?;
    let mb = model_grid.bounds();
    if mb.x_min < 0.0 || mb.y_min < 0.0 {
        return Err(Error::DomainMismatch("rate constant grid"));
    }
    if data_grid.bounds().y_min <= 0.0 {
        return Err(Error::DomainMismatch("measurement grid"));
    }
    Ok(())
}

// Entries `∫∫ K φ_i ψ_j` with unit normalization, plus the quadrature
// estimate of `∫∫ K²`.
fn assemble_raw(
    m: &KineticsModel,
    model_grid: &Grid2D,
    data_grid: &Grid2D,
    dt: f64,
    q: Quadrature,
) -> Result<(Matrix, f64)> {
    check_grids(m, model_grid, data_grid)?;
    let data_nodes: Vec<_> = data_grid.cells().map(|c| (cell_nodes(&c, q), c.area())).collect();
    let model_nodes: Vec<_> = model_grid.cells().map(|c| (cell_nodes(&c, q), c.area())).collect();
    let mut a = Matrix::zeros(data_grid.len(), model_grid.len());
    let mut k2 = 0.0;
    for (i, (dn, da)) in data_nodes.iter().enumerate() {
        for (j, (mn, ma)) in model_nodes.iter().enumerate() {
            let mut mean = 0.0;
            let mut mean_sq = 0.0;
            for &(t, c, wd) in dn {
                for &(ka, kd, wm) in mn {
                    let k = kernel_raw(m.t0, dt, m.t_inj, t, c, ka, kd);
                    mean += wd * wm * k;
                    mean_sq += wd * wm * k * k;
                }
            }
            a.set(i, j, mean * libm::sqrt(da * ma));
            k2 += mean_sq * da * ma;
        }
    }
    Ok((a, k2))
}

/// Discrete operator for delay `dt_value`, divided by `m.normalization`.
/// Entry `(i, j)` is `K(c_i; c_j)·√area(Θ_i)·√area(Ω_j)` under the midpoint
/// rule.
pub fn assemble_operator(m: &KineticsModel, model_grid: &Grid2D, data_grid: &Grid2D, dt_value: f64) -> Result<DenseOperator> {
    assemble_operator_with(m, model_grid, data_grid, dt_value, Quadrature::Midpoint)
}

pub fn assemble_operator_with(
    m: &KineticsModel,
    model_grid: &Grid2D,
    data_grid: &Grid2D,
    dt_value: f64,
    q: Quadrature,
) -> Result<DenseOperator> {
    if !(dt_value >= 0.0 && dt_value.is_finite()) {
        return Err(invalid("dt", dt_value, "must be non-negative"));
    }
    let (mut a, _) = assemble_raw(m, model_grid, data_grid, dt_value, q)?;
    a.scale(1.0 / m.normalization);
    Ok(DenseOperator::new(a))
}

/// Sets the divisor to `2√(∫_Θ∫_Ω K²)`, estimated by the same rule that
/// assembles the matrix, so that the normalized operator has norm ≤ 1/2.
pub fn normalize(m: &KineticsModel, model_grid: &Grid2D, data_grid: &Grid2D) -> Result<KineticsModel> {
    normalize_with(m, model_grid, data_grid, Quadrature::Midpoint)
}

pub fn normalize_with(m: &KineticsModel, model_grid: &Grid2D, data_grid: &Grid2D, q: Quadrature) -> Result<KineticsModel> {
    let (_, k2) = assemble_raw(m, model_grid, data_grid, m.dt, q)?;
    let divisor = 2.0 * libm::sqrt(k2);
    if !(divisor > 0.0) {
        return Err(Error::DegenerateModel);
    }
    Ok(KineticsModel {
        normalization: divisor,
        ..*m
    })
}

/// Largest admissible timing perturbation level (exclusive).
pub fn max_h_prime() -> f64 {
    1.0 / libm::sqrt(8.0)
}

/// `Δt_h = (1 + h'(2u − 1))·Δt` with one uniform draw `u`.
pub fn perturb_timing(m: &KineticsModel, h_prime: f64, seed: u64) -> Result<f64> {
    if !(h_prime >= 0.0 && h_prime < max_h_prime()) {
        return Err(invalid("h_prime", h_prime, "must lie in [0, 1/sqrt(8))"));
    }
    if h_prime == 0.0 {
        return Ok(m.dt);
    }
    let u = rng::uniform(&mut rng::stream(seed, Stream::Timing));
    Ok((1.0 + h_prime * (2.0 * u - 1.0)) * m.dt)
}

/// Multiplies every sample by `1 + δ'(2u_i − 1)`; returns the noisy
/// sensorgram and `δ = ‖y^δ − y‖`.
pub fn perturb_data(y: &Sensorgram, delta_prime: f64, seed: u64) -> Result<(Sensorgram, f64)> {
    if !(delta_prime >= 0.0 && delta_prime.is_finite()) {
        return Err(invalid("delta_prime", delta_prime, "must be non-negative"));
    }
    if delta_prime == 0.0 {
        return Ok((y.clone(), 0.0));
    }
    let mut r = rng::stream(seed, Stream::Data);
    let values: Vec<f64> = y
        .values
        .iter()
        .map(|v| (1.0 + delta_prime * (2.0 * rng::uniform(&mut r) - 1.0)) * v)
        .collect();
    let delta = linalg::distance(&values, &y.values);
    Ok((Sensorgram::new(y.grid.clone(), values)?, delta))
}

/// Ground-truth rate constant map of an example.
pub fn phantom_value(id: ExampleId, ka: f64, kd: f64) -> f64 {
    match id {
        ExampleId::Example1 => 1.0,
        ExampleId::Example2 => {
            let g1 = libm::exp(-8.0 * ((ka - 3.0) * (ka - 3.0) + (kd - 0.5) * (kd - 0.5)));
            let g2 = libm::exp(-32.0 * ((ka - 6.0) * (ka - 6.0) + (kd - 1.5) * (kd - 1.5)));
            0.5 * (g1 + g2)
        }
    }
}

pub fn phantom(id: ExampleId, grid: &Grid2D) -> Result<RateConstantMap> {
    let omega = KineticsModel::example(id).omega;
    if !omega.contains_rect(grid.bounds()) {
        return Err(Error::DomainMismatch("example rate constant domain"));
    }
    let values = grid
        .centroids()
        .into_iter()
        .map(|(ka, kd)| phantom_value(id, ka, kd))
        .collect();
    RateConstantMap::new(grid.clone(), values)
}

/// `y = A·coefficients(x)` on `data_grid`.
pub fn synth_sensorgram(op: &DenseOperator, x: &RateConstantMap, data_grid: &Grid2D) -> Result<Sensorgram> {
    check_len("sensorgram grid", op.rows(), data_grid.len())?;
    let y = op.apply(&x.coefficients())?;
    Sensorgram::new(data_grid.clone(), y)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbationCheck {
    /// `√2·|Δt_h − Δt|`
    pub h_bound: f64,
    /// `‖A_h − A‖₂`
    pub distance: f64,
    /// `distance ≤ 1.05·h_bound`
    pub ok: bool,
}

/// Compares `‖A_h − A‖` for delay `dt_h` against the timing bound
/// `√2·|Δt_h − Δt|`, with 5% slack for quadrature error.
pub fn verify_kernel_perturbation_bound(
    m: &KineticsModel,
    dt_h: f64,
    model_grid: &Grid2D,
    data_grid: &Grid2D,
    power: &PowerIterationConfig,
) -> Result<PerturbationCheck> {
    let a = assemble_operator(m, model_grid, data_grid, m.dt)?;
    let a_h = assemble_operator(m, model_grid, data_grid, dt_h)?;
    let h_bound = libm::sqrt(2.0) * libm::fabs(dt_h - m.dt);
    let distance = operator_distance(&a, &a_h, power)?;
    Ok(PerturbationCheck {
        h_bound,
        distance,
        ok: distance <= h_bound * 1.05,
    })
}
