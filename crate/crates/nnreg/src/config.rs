//! Experiment configuration (TOML or JSON) and the biosensor model file.
//!
//! Noise levels may be written as fractions (`0.01`) or in percent
//! (`"1%"`); they are stored as fractions.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use nnreg_core::biosensor::{ExampleId, Grid2D, KineticsModel, Quadrature, Rect};
use nnreg_core::operators::CatalogId;
use nnreg_core::rng::PRNG_ALGORITHM;
use nnreg_core::{
    APrioriRule, DiscrepancyScale, Matrix, Method, OutputMap, PreconditionerSpec, RelaxationSchedule, SolverConfig,
    StoppingRule,
};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Non-negative fraction, parsed from a number or a percent string.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Fraction(pub f64);

impl FromStr for Fraction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let t = s.trim();
        let (body, factor) = match t.strip_suffix('%') {
            Some(b) => (b.trim(), 0.01),
            None => (t, 1.0),
        };
        let v: f64 = body.parse().map_err(|_| format!("cannot parse noise level `{s}`"))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(format!("noise level `{s}` must be non-negative"));
        }
        Ok(Fraction(v * factor))
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let v = match Raw::deserialize(d)? {
            Raw::Int(i) => Fraction(i as f64),
            Raw::Float(f) => Fraction(f),
            Raw::Text(s) => return s.parse().map_err(serde::de::Error::custom),
        };
        if !(v.0 >= 0.0 && v.0.is_finite()) {
            return Err(serde::de::Error::custom("noise level must be non-negative"));
        }
        Ok(v)
    }
}

/// Cell counts `nx, ny`; written as `"nx,ny"` or `[nx, ny]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSize {
    pub nx: usize,
    pub ny: usize,
}

impl fmt::Display for GridSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.nx, self.ny)
    }
}

impl FromStr for GridSize {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut it = s.split(',').map(|p| p.trim().parse::<usize>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(nx)), Some(Ok(ny)), None) if nx > 0 && ny > 0 => Ok(GridSize { nx, ny }),
            _ => Err(format!("grid size `{s}` must be `nx,ny` with positive counts")),
        }
    }
}

impl Serialize for GridSize {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GridSize {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Pair([usize; 2]),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Pair([nx, ny]) if nx > 0 && ny > 0 => Ok(GridSize { nx, ny }),
            Raw::Pair(_) => Err(serde::de::Error::custom("grid counts must be positive")),
        }
    }
}

// String-backed wrappers for enums defined in the core crate.
macro_rules! string_backed {
    ($name:ident, $inner:ty, $parse:expr, $print:expr) => {
        #[derive(Clone, Copy, Debug, PartialEq)]
        pub struct $name(pub $inner);

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let print: fn(&$inner) -> String = $print;
                s.serialize_str(&print(&self.0))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                let parse: fn(&str) -> std::result::Result<$inner, String> = $parse;
                parse(&s).map($name).map_err(serde::de::Error::custom)
            }
        }
    };
}

string_backed!(
    MethodName,
    Method,
    |s| s.parse::<Method>().map_err(|e| format!("`{s}`: {e}")),
    |m| m.name().to_string()
);

string_backed!(
    ExampleName,
    ExampleId,
    |s| s.parse::<ExampleId>().map_err(|e| format!("`{s}`: {e}")),
    |e| e.to_string()
);

string_backed!(ScheduleName, RelaxationSchedule, parse_schedule, |s| match s {
    RelaxationSchedule::Zero => "zero".to_string(),
    RelaxationSchedule::Harmonic => "harmonic".to_string(),
    RelaxationSchedule::HarmonicLog(q) => format!("harmonic_log:{q}"),
});

string_backed!(OutputMapName, OutputMap, parse_output_map, |m| match m {
    OutputMap::Abs => "abs".to_string(),
    OutputMap::PositivePart => "positive_part".to_string(),
    OutputMap::Blend(a) => format!("blend:{a}"),
});

string_backed!(
    QuadratureName,
    Quadrature,
    |s| match s.trim().to_ascii_lowercase().as_str() {
        "midpoint" => Ok(Quadrature::Midpoint),
        "gauss2" => Ok(Quadrature::Gauss2),
        _ => Err(format!("unknown quadrature `{s}` (midpoint, gauss2)")),
    },
    |q| match q {
        Quadrature::Midpoint => "midpoint".to_string(),
        Quadrature::Gauss2 => "gauss2".to_string(),
    }
);

fn parse_schedule(s: &str) -> std::result::Result<RelaxationSchedule, String> {
    let t = s.trim().to_ascii_lowercase();
    match t.as_str() {
        "zero" => Ok(RelaxationSchedule::Zero),
        "harmonic" => Ok(RelaxationSchedule::Harmonic),
        _ => t
            .strip_prefix("harmonic_log:")
            .and_then(|q| q.parse::<u32>().ok())
            .map(RelaxationSchedule::HarmonicLog)
            .ok_or_else(|| format!("unknown schedule `{s}` (zero, harmonic, harmonic_log:<q>)")),
    }
}

fn parse_output_map(s: &str) -> std::result::Result<OutputMap, String> {
    let t = s.trim().to_ascii_lowercase();
    let map = match t.as_str() {
        "abs" => OutputMap::Abs,
        "positive_part" => OutputMap::PositivePart,
        _ => t
            .strip_prefix("blend:")
            .and_then(|a| a.parse::<f64>().ok())
            .map(OutputMap::Blend)
            .ok_or_else(|| format!("unknown output map `{s}` (abs, positive_part, blend:<a>)"))?,
    };
    map.validate().map_err(|e| e.to_string())?;
    Ok(map)
}

/// Biosensor model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    /// Ground-truth rate constant map used to synthesize data.
    pub phantom: ExampleName,
    /// `[k_a min, k_a max, k_d min, k_d max]`
    pub omega: [f64; 4],
    /// `[t min, t max, C min, C max]`
    pub theta: [f64; 4],
    pub t0: f64,
    pub dt: f64,
    pub t_inj: f64,
    pub grid_omega: GridSize,
    pub grid_theta: GridSize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_prime: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_prime: Option<Fraction>,
    #[serde(default = "midpoint")]
    pub quadrature: QuadratureName,
}

fn midpoint() -> QuadratureName {
    QuadratureName(Quadrature::Midpoint)
}

fn rect(v: [f64; 4]) -> nnreg_core::Result<Rect> {
    Rect::new(v[0], v[1], v[2], v[3])
}

impl ModelFile {
    pub fn kinetics(&self) -> Result<KineticsModel> {
        let omega = rect(self.omega).map_err(|e| CliError::config(format!("model omega: {e}")))?;
        let theta = rect(self.theta).map_err(|e| CliError::config(format!("model theta: {e}")))?;
        KineticsModel::new(omega, theta, self.t0, self.dt, self.t_inj).map_err(|e| CliError::config(format!("model: {e}")))
    }

    pub fn model_grid(&self) -> Result<Grid2D> {
        let m = self.kinetics()?;
        Grid2D::uniform(m.omega, self.grid_omega.nx, self.grid_omega.ny).map_err(|e| CliError::config(format!("grid_omega: {e}")))
    }

    pub fn data_grid(&self) -> Result<Grid2D> {
        let m = self.kinetics()?;
        Grid2D::uniform(m.theta, self.grid_theta.nx, self.grid_theta.ny).map_err(|e| CliError::config(format!("grid_theta: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        parse_document(path, &text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    Path(PathBuf),
    Inline(Box<ModelFile>),
}

/// Singular values `σ_j = j^{-decay}` of a diagonal operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    pub decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomSpec {
    Constant { value: f64 },
    /// `x† = x₀ − (AᵀA)^p v`, `v_j = amplitude·j^{-1/2}`.
    Source { p: f64, amplitude: f64, x0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub spectrum: SpectrumSpec,
    pub phantom: PhantomSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemConfig {
    Biosensor { model: ModelSource },
    Synthetic(SyntheticSpec),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_prime: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_prime: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PreconditionerConfig {
    /// Catalog id `G1`..`G8`.
    Catalog(String),
    Scalar(f64),
    Diagonal { diagonal: Vec<f64> },
    Spd { spd: Vec<Vec<f64>> },
}

impl PreconditionerConfig {
    pub fn to_spec(&self) -> Result<PreconditionerSpec> {
        Ok(match self {
            PreconditionerConfig::Catalog(id) => {
                PreconditionerSpec::Catalog(id.parse::<CatalogId>().map_err(|e| CliError::config(e.to_string()))?)
            }
            PreconditionerConfig::Scalar(mu) => PreconditionerSpec::Scalar(*mu),
            PreconditionerConfig::Diagonal { diagonal } => PreconditionerSpec::Diagonal(diagonal.clone()),
            PreconditionerConfig::Spd { spd } => {
                let n = spd.len();
                if spd.iter().any(|r| r.len() != n) {
                    return Err(CliError::config("spd preconditioner must be a square matrix"));
                }
                let data = spd.iter().flatten().copied().collect();
                PreconditionerSpec::Spd(Matrix::new(n, n, data).map_err(|e| CliError::config(e.to_string()))?)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartVector {
    Constant(f64),
    Vector(Vec<f64>),
}

const DEFAULT_N_MAX: usize = 1_000_000;

fn default_n_max() -> usize {
    DEFAULT_N_MAX
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingConfig {
    MaxOnly {
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
    Morozov {
        tau0: f64,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
    /// Exactly one of `tau0` and `tau` must be given.
    Modified {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau: Option<f64>,
        c_dagger: f64,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
    Holder {
        p: f64,
        scale: f64,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
    Log {
        a: f64,
        scale: f64,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
    Admissible {
        scale: f64,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
}

impl StoppingConfig {
    pub fn n_max(&self) -> usize {
        match *self {
            StoppingConfig::MaxOnly { n_max }
            | StoppingConfig::Morozov { n_max, .. }
            | StoppingConfig::Modified { n_max, .. }
            | StoppingConfig::Holder { n_max, .. }
            | StoppingConfig::Log { n_max, .. }
            | StoppingConfig::Admissible { n_max, .. } => n_max,
        }
    }

    pub fn set_n_max(&mut self, value: usize) {
        match self {
            StoppingConfig::MaxOnly { n_max }
            | StoppingConfig::Morozov { n_max, .. }
            | StoppingConfig::Modified { n_max, .. }
            | StoppingConfig::Holder { n_max, .. }
            | StoppingConfig::Log { n_max, .. }
            | StoppingConfig::Admissible { n_max, .. } => *n_max = value,
        }
    }

    pub fn to_rule(&self) -> Result<StoppingRule> {
        Ok(match *self {
            StoppingConfig::MaxOnly { n_max } => StoppingRule::max_only(n_max),
            StoppingConfig::Morozov { tau0, n_max } => StoppingRule::morozov(tau0, n_max),
            StoppingConfig::Modified {
                tau0,
                tau,
                c_dagger,
                n_max,
            } => {
                let scale = match (tau0, tau) {
                    (Some(t0), None) => DiscrepancyScale::Tau0(t0),
                    (None, Some(t)) => DiscrepancyScale::Tau(t),
                    _ => return Err(CliError::config("modified rule needs exactly one of `tau0` and `tau`")),
                };
                StoppingRule::modified(scale, c_dagger, n_max)
            }
            StoppingConfig::Holder { p, scale, n_max } => StoppingRule::a_priori(APrioriRule::HolderRate { p, scale }, n_max),
            StoppingConfig::Log { a, scale, n_max } => StoppingRule::a_priori(APrioriRule::LogRate { a, scale }, n_max),
            StoppingConfig::Admissible { scale, n_max } => StoppingRule::a_priori(APrioriRule::Admissible { scale }, n_max),
        })
    }
}

fn default_omega() -> f64 {
    1.0
}

fn harmonic() -> ScheduleName {
    ScheduleName(RelaxationSchedule::Harmonic)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverEntry {
    /// Row name in reports and tables; defaults to the method name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub method: MethodName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preconditioner: Option<PreconditionerConfig>,
    #[serde(default)]
    pub preconditioner_seed: u64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "harmonic")]
    pub schedule: ScheduleName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_map: Option<OutputMapName>,
    /// Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<StartVector>,
    pub stopping: StoppingConfig,
}

impl SolverEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.method.0.name().to_string())
    }

    pub fn to_solver_config(&self, n: usize) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::new(self.method.0);
        if let Some(p) = &self.preconditioner {
            cfg.preconditioner = Some(p.to_spec()?);
        }
        cfg.preconditioner_seed = self.preconditioner_seed;
        cfg.omega = self.omega;
        cfg.schedule = self.schedule.0;
        if let Some(m) = self.output_map {
            cfg.output_map = m.0;
        }
        cfg.x0 = match &self.x0 {
            None => None,
            Some(StartVector::Constant(c)) => Some(vec![*c; n]),
            Some(StartVector::Vector(v)) if v.len() == n => Some(v.clone()),
            Some(StartVector::Vector(v)) => {
                return Err(CliError::config(format!(
                    "solver `{}`: x0 has {} entries, the problem has {n} unknowns",
                    self.label(),
                    v.len()
                )))
            }
        };
        cfg.max_iterations = self.stopping.n_max();
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// `(h', δ')` pairs; defaults to the single pair of `[noise]`.
    pub noise_pairs: Vec<[Fraction; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateFamily {
    Holder,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub family: RateFamily,
    /// `p` for Hölder sources, `ν` for logarithmic ones.
    pub parameters: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Zero entries are dropped before fitting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_levels: Option<Vec<Fraction>>,
}

fn one() -> usize {
    1
}

fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: ProblemConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub solvers: Vec<SolverEntry>,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RatesConfig>,
    /// Generator name; filled in on resolution and checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prng: Option<String>,
}

fn parse_document<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

impl ExperimentConfig {
    /// Reads a TOML or JSON config. A JSON solve report is accepted too; its
    /// `config_echo` is used.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg: ExperimentConfig = if is_json {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let doc = match v.get("config_echo") {
                Some(echo) => echo.clone(),
                None => v,
            };
            serde_json::from_value(doc).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        } else {
            parse_document(path, &text)?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base)
    }

    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.resolve(base)
    }

    /// Inlines the model file, fills noise defaults from it and validates.
    pub fn resolve(mut self, base: &Path) -> Result<Self> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match &self.prng {
            Some(name) if name != PRNG_ALGORITHM => {
                return Err(CliError::config(format!("config was produced with PRNG `{name}`, this build uses `{PRNG_ALGORITHM}`")))
            }
            _ => self.prng = Some(PRNG_ALGORITHM.to_string()),
        }
        if self.repetitions < 1 {
            return Err(CliError::config("repetitions must be at least 1"));
        }
        if self.outputs.is_relative() {
            self.outputs = base.join(&self.outputs);
        }
        if let ProblemConfig::Biosensor { model } = &mut self.problem {
            if let ModelSource::Path(p) = model {
                let full = if p.is_relative() { base.join(&*p) } else { p.clone() };
                if !full.exists() {
                    return Err(CliError::config(format!("model file {} does not exist", full.display())));
                }
                *model = ModelSource::Inline(Box::new(ModelFile::from_path(&full)?));
            }
            let ModelSource::Inline(m) = model else { unreachable!() };
            m.kinetics()?;
            m.model_grid()?;
            m.data_grid()?;
            self.noise.h_prime = self.noise.h_prime.or(m.h_prime);
            self.noise.delta_prime = self.noise.delta_prime.or(m.delta_prime);
            self.noise.seed = self.noise.seed.or(m.seed);
        }
        if let ProblemConfig::Synthetic(s) = &self.problem {
            if s.n == 0 {
                return Err(CliError::config("synthetic problem needs n ≥ 1"));
            }
            if !(s.spectrum.decay >= 0.0 && s.spectrum.decay.is_finite()) {
                return Err(CliError::config("spectrum decay must be non-negative"));
            }
        }
        self.noise.h_prime.get_or_insert(Fraction(0.0));
        self.noise.delta_prime.get_or_insert(Fraction(0.0));
        self.noise.seed.get_or_insert(0);
        for s in &self.solvers {
            s.stopping.to_rule()?;
            if let Some(p) = &s.preconditioner {
                p.to_spec()?;
            }
        }
        Ok(self)
    }

    pub fn model(&self) -> Option<&ModelFile> {
        match &self.problem {
            ProblemConfig::Biosensor {
                model: ModelSource::Inline(m),
            } => Some(m),
            _ => None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.noise.seed.unwrap_or(0)
    }

    pub fn h_prime(&self) -> f64 {
        self.noise.h_prime.unwrap_or_default().0
    }

    pub fn delta_prime(&self) -> f64 {
        self.noise.delta_prime.unwrap_or_default().0
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.noise.seed = Some(s);
        }
        self
    }

    pub fn noise_pairs(&self) -> Vec<(f64, f64)> {
        match &self.compare {
            Some(c) if !c.noise_pairs.is_empty() => c.noise_pairs.iter().map(|[h, d]| (h.0, d.0)).collect(),
            _ => vec![(self.h_prime(), self.delta_prime())],
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
