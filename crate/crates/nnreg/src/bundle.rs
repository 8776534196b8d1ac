//! Problem bundles: synthesized operators, data and ground truth, on disk as
//! CSV files plus a `bundle.toml` metadata document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use nnreg_core::analysis::{build_source_problem, eigendecompose, SourceKind, SourceSpec};
use nnreg_core::biosensor::{
    assemble_operator_with, normalize_with, perturb_data, perturb_timing, phantom, synth_sensorgram, Grid2D,
    RateConstantMap, Rect, Sensorgram,
};
use nnreg_core::operators::operator_distance;
use nnreg_core::rng::{self, Stream, PRNG_ALGORITHM};
use nnreg_core::{DenseOperator, InverseProblem, Matrix, PowerIterationConfig};

use crate::config::{ExperimentConfig, PhantomSpec, ProblemConfig, SyntheticSpec};
use crate::error::{CliError, Result, SolverContext};
use crate::formats;

pub const OPERATOR_EXACT: &str = "operator_exact.csv";
pub const OPERATOR_NOISY: &str = "operator_noisy.csv";
pub const SENSORGRAM_CLEAN: &str = "sensorgram_clean.csv";
pub const SENSORGRAM_NOISY: &str = "sensorgram_noisy.csv";
pub const PHANTOM: &str = "phantom.csv";
pub const METADATA: &str = "bundle.toml";

/// Uniform grid as stored in `bundle.toml`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub bounds: [f64; 4],
    pub nx: usize,
    pub ny: usize,
}

impl GridMeta {
    fn of(g: &Grid2D) -> Self {
        let b = g.bounds();
        Self {
            bounds: [b.x_min, b.x_max, b.y_min, b.y_max],
            nx: g.nx(),
            ny: g.ny(),
        }
    }

    fn grid(&self) -> nnreg_core::Result<Grid2D> {
        let [a, b, c, d] = self.bounds;
        Grid2D::uniform(Rect::new(a, b, c, d)?, self.nx, self.ny)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub problem: String,
    pub seed: u64,
    pub prng: String,
    pub h_prime: f64,
    pub delta_prime: f64,
    /// Realized `‖A_h − A‖₂`.
    pub h: f64,
    /// Realized `‖y^δ − y‖`.
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<f64>,
    pub model_grid: GridMeta,
    pub data_grid: GridMeta,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub meta: BundleMeta,
    pub model_grid: Grid2D,
    pub data_grid: Grid2D,
    pub operator_exact: DenseOperator,
    pub operator_noisy: DenseOperator,
    /// Sensorgram coefficients.
    pub clean: Vec<f64>,
    pub noisy: Vec<f64>,
    /// Ground-truth values at the model-grid centroids.
    pub phantom: Vec<f64>,
}

fn index_grid(n: usize) -> nnreg_core::Result<Grid2D> {
    Grid2D::uniform(Rect::new(0.0, n as f64, 0.0, 1.0)?, n, 1)
}

struct Parts {
    model_grid: Grid2D,
    data_grid: Grid2D,
    a: DenseOperator,
    a_h: DenseOperator,
    truth: RateConstantMap,
    dt: Option<f64>,
    dt_h: Option<f64>,
    normalization: Option<f64>,
}

fn biosensor_parts(cfg: &ExperimentConfig, h_prime: f64, seed: u64) -> Result<Parts> {
    let model = cfg.model().ok_or_else(|| CliError::config("biosensor problem without a model"))?;
    let (og, dg) = (model.model_grid()?, model.data_grid()?);
    let q = model.quadrature.0;
    let m = normalize_with(&model.kinetics()?, &og, &dg, q).solver_ctx(|| "normalizing the kernel".into())?;
    let a = assemble_operator_with(&m, &og, &dg, m.dt, q).solver_ctx(|| "assembling A".into())?;
    let dt_h = perturb_timing(&m, h_prime, seed).map_err(|e| CliError::config(format!("h_prime: {e}")))?;
    let a_h = assemble_operator_with(&m, &og, &dg, dt_h, q).solver_ctx(|| "assembling A_h".into())?;
    let truth = phantom(model.phantom.0, &og).map_err(|e| CliError::config(format!("phantom: {e}")))?;
    Ok(Parts {
        model_grid: og,
        data_grid: dg,
        a,
        a_h,
        truth,
        dt: Some(m.dt),
        dt_h: Some(dt_h),
        normalization: Some(m.normalization),
    })
}

fn synthetic_parts(spec: &SyntheticSpec, h_prime: f64, seed: u64) -> Result<Parts> {
    let n = spec.n;
    let sigma: Vec<f64> = (1..=n).map(|j| (j as f64).powf(-spec.spectrum.decay)).collect();
    let a = DenseOperator::diagonal(&sigma);
    let grid = index_grid(n).solver_ctx(|| "synthetic grid".into())?;
    let values = match spec.phantom {
        PhantomSpec::Constant { value } => vec![value; n],
        PhantomSpec::Source { p, amplitude, x0 } => {
            let dec = eigendecompose(&a).solver_ctx(|| "synthetic spectrum".into())?;
            let v = (1..=n).map(|j| amplitude / (j as f64).sqrt()).collect();
            let src = build_source_problem(&dec, &SourceSpec { kind: SourceKind::Holder(p), v }, &vec![x0; n])
                .map_err(|e| CliError::config(format!("phantom: {e}")))?;
            if !src.valid {
                return Err(CliError::config("source phantom has negative entries"));
            }
            src.x_dagger
        }
    };
    let truth = RateConstantMap::new(grid.clone(), values).map_err(|e| CliError::config(format!("phantom: {e}")))?;
    let a_h = if h_prime > 0.0 {
        let power = PowerIterationConfig::default();
        let mut r = rng::stream(seed, Stream::Experiment);
        let e = DenseOperator::new(Matrix::new(n, n, rng::gaussian_vec(&mut r, n * n)).expect("square"));
        let scale = h_prime * a.spectral_norm(&power).solver_ctx(|| "‖A‖".into())?
            / e.spectral_norm(&power).solver_ctx(|| "‖E‖".into())?;
        let mut m = a.matrix().clone();
        m.add_scaled(scale, e.matrix());
        DenseOperator::new(m)
    } else {
        a.clone()
    };
    Ok(Parts {
        model_grid: grid.clone(),
        data_grid: grid,
        a,
        a_h,
        truth,
        dt: None,
        dt_h: None,
        normalization: None,
    })
}

impl Bundle {
    /// Synthesizes the problem of `cfg` at noise `(h', δ')` with `seed`.
    pub fn synthesize(cfg: &ExperimentConfig, h_prime: f64, delta_prime: f64, seed: u64) -> Result<Self> {
        let (kind, parts) = match &cfg.problem {
            ProblemConfig::Biosensor { .. } => ("biosensor", biosensor_parts(cfg, h_prime, seed)?),
            ProblemConfig::Synthetic(s) => ("synthetic", synthetic_parts(s, h_prime, seed)?),
        };
        let y = synth_sensorgram(&parts.a, &parts.truth, &parts.data_grid).solver_ctx(|| "clean data".into())?;
        let (noisy, delta) =
            perturb_data(&y, delta_prime, seed).map_err(|e| CliError::config(format!("delta_prime: {e}")))?;
        let h = operator_distance(&parts.a, &parts.a_h, &PowerIterationConfig::default())
            .solver_ctx(|| "‖A_h − A‖".into())?;
        let mut echo = cfg.clone();
        echo.noise.h_prime = Some(crate::config::Fraction(h_prime));
        echo.noise.delta_prime = Some(crate::config::Fraction(delta_prime));
        echo.noise.seed = Some(seed);
        Ok(Bundle {
            meta: BundleMeta {
                problem: kind.to_string(),
                seed,
                prng: PRNG_ALGORITHM.to_string(),
                h_prime,
                delta_prime,
                h,
                delta,
                dt: parts.dt,
                dt_h: parts.dt_h,
                normalization: parts.normalization,
                model_grid: GridMeta::of(&parts.model_grid),
                data_grid: GridMeta::of(&parts.data_grid),
                config: echo,
            },
            model_grid: parts.model_grid,
            data_grid: parts.data_grid,
            operator_exact: parts.a,
            operator_noisy: parts.a_h,
            clean: y.values,
            noisy: noisy.values,
            phantom: parts.truth.values,
        })
    }

    /// Bundle at the config's own noise levels and seed.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Self::synthesize(cfg, cfg.h_prime(), cfg.delta_prime(), cfg.seed())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        formats::write_operator(&dir.join(OPERATOR_EXACT), &self.operator_exact)?;
        formats::write_operator(&dir.join(OPERATOR_NOISY), &self.operator_noisy)?;
        formats::write_grid_values(&dir.join(SENSORGRAM_CLEAN), &self.data_grid, &self.clean)?;
        formats::write_grid_values(&dir.join(SENSORGRAM_NOISY), &self.data_grid, &self.noisy)?;
        formats::write_grid_values(&dir.join(PHANTOM), &self.model_grid, &self.phantom)?;
        let text = toml::to_string(&self.meta).map_err(|e| CliError::format(&dir.join(METADATA), e))?;
        formats::write_text(&dir.join(METADATA), &text)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(METADATA);
        if !meta_path.exists() {
            return Err(CliError::config(format!("no bundle at {}", dir.display())));
        }
        let text = fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
        let meta: BundleMeta = toml::from_str(&text).map_err(|e| CliError::format(&meta_path, e))?;
        let model_grid = meta.model_grid.grid().map_err(|e| CliError::format(&meta_path, e))?;
        let data_grid = meta.data_grid.grid().map_err(|e| CliError::format(&meta_path, e))?;
        let (m, n) = (data_grid.len(), model_grid.len());
        Ok(Bundle {
            operator_exact: formats::read_operator(&dir.join(OPERATOR_EXACT), m, n)?,
            operator_noisy: formats::read_operator(&dir.join(OPERATOR_NOISY), m, n)?,
            clean: formats::read_grid_values(&dir.join(SENSORGRAM_CLEAN), &data_grid)?,
            noisy: formats::read_grid_values(&dir.join(SENSORGRAM_NOISY), &data_grid)?,
            phantom: formats::read_grid_values(&dir.join(PHANTOM), &model_grid)?,
            meta,
            model_grid,
            data_grid,
        })
    }

    /// The perturbed problem with the exact pair attached.
    pub fn problem(&self) -> Result<InverseProblem> {
        InverseProblem::new(self.operator_noisy.clone(), self.noisy.clone(), self.meta.h, self.meta.delta)
            .and_then(|p| {
                p.with_exact(self.operator_exact.clone(), self.clean.clone(), &PowerIterationConfig::default())
            })
            .solver_ctx(|| "building the inverse problem".into())
    }

    pub fn truth(&self) -> RateConstantMap {
        RateConstantMap::new(self.model_grid.clone(), self.phantom.clone()).expect("phantom matches its grid")
    }

    /// Relative L2 error of a coefficient vector against the phantom.
    pub fn l2err(&self, coefficients: &[f64]) -> Result<f64> {
        let x = RateConstantMap::from_coefficients(self.model_grid.clone(), coefficients)
            .solver_ctx(|| "mapping the solution to rate constants".into())?;
        let diff: Vec<f64> = x.values.iter().zip(&self.phantom).map(|(a, b)| a - b).collect();
        let den = scaled_norm(&self.phantom);
        let num = scaled_norm(&diff);
        Ok(if den > 0.0 { num / den } else { num })
    }

    pub fn sensorgram(&self) -> Sensorgram {
        Sensorgram::new(self.data_grid.clone(), self.noisy.clone()).expect("data matches its grid")
    }
}

// Euclidean norm without overflow for large entries.
fn scaled_norm(v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * v.iter().map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}
