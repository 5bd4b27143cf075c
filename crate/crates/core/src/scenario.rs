//! Scenario files and the reports produced from them.
//!
//! A scenario is a TOML document with a `kind` of `map-solve`,
//! `kaehler-analyze` or `cartan-demo`. The grammar is documented in the
//! crate README; unknown keys are rejected. [`run_scenario`] turns a
//! validated scenario into a [`Report`], whose text form ends with a
//! `[scenario]` table that parses back to the scenario that produced it.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cartan::{self, BlockFormHamiltonian, PairedCoordinates, RestrictionMode};
use crate::error::Error;
use crate::kaehler::{self, KaehlerPotential, MetricField};
use crate::ode::TauGrid;
use crate::solver::{self, MapProblem};
use crate::structure::{CoefficientField, SignSignature, MAX_BLOCK};

/// Largest complex dimension accepted by `kaehler-analyze`. Curvature cost
/// grows like `(2n)^4 6^4` potential evaluations per point.
pub const MAX_KAEHLER_DIM: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("cannot parse {origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Compute(#[from] Error),
}

impl ScenarioError {
    /// 1 for unreadable or invalid input, 2 for numerical failure, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Read { .. }
            | ScenarioError::Parse { .. }
            | ScenarioError::Invalid { .. } => 1,
            ScenarioError::Compute(e) if is_numerical_failure(e) => 2,
            _ => 3,
        }
    }
}

fn is_numerical_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::Diverged { .. } | Error::SingularFactor { .. } | Error::SingularMetric { .. }
    )
}

fn bad<T>(field: &str, message: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid {
        field: field.to_string(),
        message: message.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    MapSolve,
    KaehlerAnalyze,
    CartanDemo,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::MapSolve => "map-solve",
            ScenarioKind::KaehlerAnalyze => "kaehler-analyze",
            ScenarioKind::CartanDemo => "cartan-demo",
        })
    }
}

/// A Hamiltonian matrix: a builtin name, a row-major literal, or `{ block = M }`
/// for the block form `[[0, M], [M^T, 0]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HamiltonianSpec {
    Named(String),
    Matrix(Vec<Vec<f64>>),
    Block { block: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Builtin {
    Oscillator(f64),
    Free,
    CartanIdentity,
}

fn parse_builtin(field: &str, name: &str) -> Result<Builtin, ScenarioError> {
    let name = name.trim();
    match name {
        "free" => return Ok(Builtin::Free),
        "cartan-identity" => return Ok(Builtin::CartanIdentity),
        _ => {}
    }
    if let Some(arg) = name
        .strip_prefix("oscillator(")
        .and_then(|r| r.strip_suffix(')'))
    {
        return match arg.trim().parse::<f64>() {
            Ok(w) if w.is_finite() => Ok(Builtin::Oscillator(w)),
            _ => bad(
                field,
                format!("oscillator frequency `{arg}` is not a finite number"),
            ),
        };
    }
    bad(
        field,
        format!("unknown builtin `{name}` (expected oscillator(w), free or cartan-identity)"),
    )
}

fn literal(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, ScenarioError> {
    let n = rows.len();
    if n == 0 {
        return bad(field, "matrix literal is empty");
    }
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return bad(
            field,
            format!(
                "matrix literal is not square: {n} rows but a row of length {}",
                r.len()
            ),
        );
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return bad(field, "matrix literal has a non-finite entry");
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn block_dense(mm: &DMatrix<f64>) -> DMatrix<f64> {
    let m = mm.nrows();
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    out.view_mut((0, m), (m, m)).copy_from(mm);
    out.view_mut((m, 0), (m, m)).copy_from(&mm.transpose());
    out
}

impl HamiltonianSpec {
    /// Block size fixed by the descriptor itself, if any.
    fn implied_m(&self, field: &str) -> Result<Option<usize>, ScenarioError> {
        match self {
            HamiltonianSpec::Named(name) => parse_builtin(field, name).map(|_| None),
            HamiltonianSpec::Matrix(rows) => {
                let n = literal(field, rows)?.nrows();
                if n % 2 != 0 {
                    return bad(
                        field,
                        format!("Hamiltonian matrix must have even dimension, got {n}x{n}"),
                    );
                }
                Ok(Some(n / 2))
            }
            HamiltonianSpec::Block { block } => Ok(Some(literal(field, block)?.nrows())),
        }
    }

    /// The `2m x 2m` symmetric Hamiltonian matrix.
    fn dense(&self, field: &str, m: usize) -> Result<DMatrix<f64>, ScenarioError> {
        match self {
            HamiltonianSpec::Named(name) => {
                let eye = DMatrix::<f64>::identity(m, m);
                let diag = |a: f64| {
                    let mut out = DMatrix::zeros(2 * m, 2 * m);
                    out.view_mut((0, 0), (m, m)).copy_from(&(&eye * a));
                    out.view_mut((m, m), (m, m)).copy_from(&eye);
                    out
                };
                Ok(match parse_builtin(field, name)? {
                    Builtin::Oscillator(w) => diag(w * w),
                    Builtin::Free => diag(0.0),
                    Builtin::CartanIdentity => block_dense(&eye),
                })
            }
            HamiltonianSpec::Matrix(rows) => {
                let h = literal(field, rows)?;
                let asym = (&h - h.transpose()).amax();
                if asym > 0.0 {
                    return bad(
                        field,
                        format!("Hamiltonian matrix must be symmetric (asymmetry {asym:e})"),
                    );
                }
                Ok(h)
            }
            HamiltonianSpec::Block { block } => Ok(block_dense(&literal(field, block)?)),
        }
    }

    /// The `m x m` block `M` of a Cartan Hamiltonian.
    fn cartan_block(&self, field: &str, m: usize) -> Result<DMatrix<f64>, ScenarioError> {
        match self {
            HamiltonianSpec::Named(name) => match parse_builtin(field, name)? {
                Builtin::CartanIdentity => Ok(DMatrix::identity(m, m)),
                _ => bad(
                    field,
                    format!(
                        "`{name}` is not a block-form Hamiltonian; use cartan-identity or a matrix"
                    ),
                ),
            },
            HamiltonianSpec::Matrix(rows) | HamiltonianSpec::Block { block: rows } => {
                literal(field, rows)
            }
        }
    }

    fn cartan_implied_m(&self, field: &str) -> Result<Option<usize>, ScenarioError> {
        match self {
            HamiltonianSpec::Named(_) => self.cartan_block(field, 1).map(|_| None),
            HamiltonianSpec::Matrix(rows) | HamiltonianSpec::Block { block: rows } => {
                Ok(Some(literal(field, rows)?.nrows()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub tau0: f64,
    #[serde(default = "default_tau1")]
    pub tau1: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_tau1() -> f64 {
    1.0
}

fn default_steps() -> usize {
    1000
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            tau0: 0.0,
            tau1: default_tau1(),
            steps: default_steps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_points() -> usize {
    5
}

fn default_radius() -> f64 {
    0.5
}

fn default_seed() -> u64 {
    1
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self {
            points: default_points(),
            radius: default_radius(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct OutputSpec {
    #[serde(default = "default_true")]
    pub trajectory: bool,
    #[serde(default)]
    pub order_check: bool,
}

fn default_true() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            trajectory: true,
            order_check: false,
        }
    }
}

fn default_signature() -> [i32; 4] {
    crate::structure::FIRST_FORMALISM.to_ints()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Scenario {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_signature")]
    pub signature: [i32; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_dtau: Option<f64>,
    /// Source state for map-solve, `(x, xbar)` for cartan-demo.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restrict_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<HamiltonianSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<HamiltonianSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<HamiltonianSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_str(&text, &path.display().to_string())
}

/// Parses and validates scenario text; `origin` names it in error messages.
pub fn parse_str(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        origin: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

/// The `[scenario]` table of a report's text form.
pub fn echo_from_report(text: &str) -> Result<Scenario, ScenarioError> {
    let parse_err = |message: String| ScenarioError::Parse {
        origin: "report".to_string(),
        message,
    };
    let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
    let echo = table
        .remove("scenario")
        .ok_or_else(|| parse_err("report has no [scenario] table".to_string()))?;
    let scenario: Scenario = echo
        .try_into()
        .map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

enum Plan {
    Map(MapPlan),
    Kaehler(KaehlerPlan),
    Cartan(CartanPlan),
}

struct MapPlan {
    problem: MapProblem,
}

struct KaehlerPlan {
    n: usize,
    potential: KaehlerPotential,
}

struct CartanPlan {
    h: BlockFormHamiltonian,
    signature: SignSignature,
    coords: PairedCoordinates,
    index: usize,
    grid: TauGrid,
}

fn parse_potential(spec: &str, n: usize) -> Result<KaehlerPotential, ScenarioError> {
    let spec = spec.trim();
    if spec == "flat" {
        return Ok(KaehlerPotential::flat(n)?);
    }
    if let Some(arg) = spec.strip_prefix("fs(").and_then(|r| r.strip_suffix(')')) {
        return match arg.trim().parse::<f64>() {
            Ok(c) if c > 0.0 && c.is_finite() => Ok(KaehlerPotential::fubini_study(n, c)?),
            _ => bad(
                "potential",
                format!("fs scale `{arg}` must be a positive number"),
            ),
        };
    }
    bad(
        "potential",
        format!("unknown potential `{spec}` (expected flat or fs(c))"),
    )
}

impl Scenario {
    /// A minimal scenario of the given kind with every default filled in.
    pub fn new(kind: ScenarioKind) -> Self {
        Self {
            kind,
            name: None,
            signature: default_signature(),
            m: None,
            n: None,
            dt_dtau: None,
            initial: None,
            potential: None,
            restrict_index: None,
            source: None,
            target: None,
            hamiltonian: None,
            t0: None,
            grid: GridSpec::default(),
            sampling: SamplingSpec::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.plan().map(|_| ())
    }

    pub fn signature(&self) -> Result<SignSignature, ScenarioError> {
        SignSignature::from_ints(self.signature).or_else(|_| {
            bad(
                "signature",
                format!("entries must be +1 or -1, got {:?}", self.signature),
            )
        })
    }

    fn grid(&self) -> Result<TauGrid, ScenarioError> {
        let g = self.grid;
        TauGrid::new(g.tau0, g.tau1, g.steps).or_else(|e| bad("grid", e.to_string()))
    }

    fn reject(&self, fields: &[(&str, bool)]) -> Result<(), ScenarioError> {
        for &(name, present) in fields {
            if present {
                return bad(name, format!("does not apply to {}", self.kind));
            }
        }
        Ok(())
    }

    fn plan(&self) -> Result<Plan, ScenarioError> {
        match self.kind {
            ScenarioKind::MapSolve => self.map_plan().map(Plan::Map),
            ScenarioKind::KaehlerAnalyze => self.kaehler_plan().map(Plan::Kaehler),
            ScenarioKind::CartanDemo => self.cartan_plan().map(Plan::Cartan),
        }
    }

    fn map_plan(&self) -> Result<MapPlan, ScenarioError> {
        self.reject(&[
            ("n", self.n.is_some()),
            ("potential", self.potential.is_some()),
            ("hamiltonian", self.hamiltonian.is_some()),
            ("restrict-index", self.restrict_index.is_some()),
        ])?;
        let signature = self.signature()?;
        let Some(source) = &self.source else {
            return bad("source", "map-solve needs a source Hamiltonian");
        };
        let Some(target) = &self.target else {
            return bad("target", "map-solve needs a target Hamiltonian");
        };
        let ms = source.implied_m("source")?;
        let mt = target.implied_m("target")?;
        let m = match (self.m, ms, mt) {
            (_, Some(a), Some(b)) if a != b => {
                return bad(
                    "source, target",
                    format!("source has m = {a} but target has m = {b}"),
                );
            }
            (Some(m), Some(a), _) if m != a => {
                return bad("source, m", format!("source has m = {a} but m = {m}"))
            }
            (Some(m), _, Some(b)) if m != b => {
                return bad("target, m", format!("target has m = {b} but m = {m}"))
            }
            (Some(m), _, _) => m,
            (None, Some(a), _) | (None, None, Some(a)) => a,
            (None, None, None) => {
                return bad(
                    "m",
                    "block size is required when both Hamiltonians are builtins",
                )
            }
        };
        if m == 0 || m > MAX_BLOCK {
            return bad(
                "m",
                format!("block size must be between 1 and {MAX_BLOCK}, got {m}"),
            );
        }
        let src = CoefficientField::constant(source.dense("source", m)?)
            .or_else(|e| bad("source", e.to_string()))?;
        let tgt = CoefficientField::constant(target.dense("target", m)?)
            .or_else(|e| bad("target", e.to_string()))?;
        let xi0 = match &self.initial {
            Some(v) if v.len() != 2 * m => {
                return bad(
                    "initial",
                    format!("initial state has length {} but 2m = {}", v.len(), 2 * m),
                );
            }
            Some(v) if v.iter().any(|x| !x.is_finite()) => {
                return bad("initial", "initial state is not finite")
            }
            Some(v) => DVector::from_column_slice(v),
            None => DVector::from_fn(2 * m, |i, _| if i == 0 { 1.0 } else { 0.0 }),
        };
        let grid = self.grid()?;
        if grid.steps() < 4 {
            return bad("grid.steps", "map-solve needs at least 4 steps");
        }
        let mut problem = MapProblem::new(src, tgt, signature, xi0, grid)
            .or_else(|e| bad("source, target", e.to_string()))?;
        if let Some(rows) = &self.t0 {
            let t0 = literal("t0", rows)?;
            problem = problem.with_t0(t0).or_else(|e| bad("t0", e.to_string()))?;
        }
        if let Some(rate) = self.dt_dtau {
            if !rate.is_finite() {
                return bad("dt-dtau", "rate must be finite");
            }
            problem = problem
                .with_dt_dtau(move |_| rate)
                .or_else(|e| bad("dt-dtau", e.to_string()))?;
        }
        Ok(MapPlan { problem })
    }

    fn kaehler_plan(&self) -> Result<KaehlerPlan, ScenarioError> {
        self.reject(&[
            ("m", self.m.is_some()),
            ("source", self.source.is_some()),
            ("target", self.target.is_some()),
            ("hamiltonian", self.hamiltonian.is_some()),
            ("t0", self.t0.is_some()),
            ("initial", self.initial.is_some()),
            ("dt-dtau", self.dt_dtau.is_some()),
            ("restrict-index", self.restrict_index.is_some()),
        ])?;
        let Some(n) = self.n else {
            return bad("n", "kaehler-analyze needs the complex dimension n");
        };
        if n == 0 || n > MAX_KAEHLER_DIM {
            return bad(
                "n",
                format!("complex dimension must be between 1 and {MAX_KAEHLER_DIM}, got {n}"),
            );
        }
        let Some(spec) = &self.potential else {
            return bad("potential", "kaehler-analyze needs a potential");
        };
        let potential = parse_potential(spec, n)?;
        let s = self.sampling;
        if s.points == 0 {
            return bad("sampling.points", "need at least one sample point");
        }
        if !(s.radius > 0.0 && s.radius.is_finite()) {
            return bad(
                "sampling.radius",
                format!("radius must be positive, got {}", s.radius),
            );
        }
        Ok(KaehlerPlan { n, potential })
    }

    fn cartan_plan(&self) -> Result<CartanPlan, ScenarioError> {
        self.reject(&[
            ("n", self.n.is_some()),
            ("potential", self.potential.is_some()),
            ("source", self.source.is_some()),
            ("target", self.target.is_some()),
            ("t0", self.t0.is_some()),
            ("dt-dtau", self.dt_dtau.is_some()),
        ])?;
        let signature = self.signature()?;
        let spec = self
            .hamiltonian
            .clone()
            .unwrap_or(HamiltonianSpec::Named("cartan-identity".to_string()));
        let m = match (self.m, spec.cartan_implied_m("hamiltonian")?) {
            (Some(m), Some(a)) if m != a => {
                return bad(
                    "hamiltonian, m",
                    format!("hamiltonian has m = {a} but m = {m}"),
                )
            }
            (_, Some(a)) => a,
            (Some(m), None) => m,
            (None, None) => return bad("m", "block size is required for builtin Hamiltonians"),
        };
        if m == 0 || m > MAX_BLOCK {
            return bad(
                "m",
                format!("block size must be between 1 and {MAX_BLOCK}, got {m}"),
            );
        }
        let h = BlockFormHamiltonian::from_real(&spec.cartan_block("hamiltonian", m)?)
            .or_else(|e| bad("hamiltonian", e.to_string()))?;
        let init = self.initial.clone().unwrap_or_else(|| vec![1.0; 2 * m]);
        if init.len() != 2 * m {
            return bad(
                "initial",
                format!("(x, xbar) has length {} but 2m = {}", init.len(), 2 * m),
            );
        }
        let coords = PairedCoordinates::real(&init[..m], &init[m..])
            .or_else(|e| bad("initial", e.to_string()))?;
        let index = self.restrict_index.unwrap_or(0);
        if index >= m {
            return bad(
                "restrict-index",
                format!("index {index} is out of range for m = {m}"),
            );
        }
        Ok(CartanPlan {
            h,
            signature,
            coords,
            index,
            grid: self.grid()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Diverged,
}

/// The numerical failure that stopped a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl Failure {
    fn from_error(e: &Error) -> Self {
        let (error, tau) = match e {
            Error::Diverged { tau } => ("integration-diverged", Some(*tau)),
            Error::SingularFactor { tau, .. } => ("singular-factor", Some(*tau)),
            Error::SingularMetric { .. } => ("singular-metric", None),
            _ => ("numerical", None),
        };
        Self {
            error: error.to_string(),
            message: e.to_string(),
            tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderSummary {
    pub steps: Vec<usize>,
    pub max_residuals: Vec<f64>,
    pub pairwise: Vec<f64>,
    /// Absent when the residuals are at roundoff level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapSummary {
    pub m: usize,
    pub steps: usize,
    pub residual_full_max: f64,
    pub residual_full_final: f64,
    pub residual_target_max: f64,
    pub residual_target_final: f64,
    pub residual_warning: bool,
    pub factorization_agreement: f64,
    pub poisson_defect: f64,
    pub is_symplectic: bool,
    pub eta_final: Vec<f64>,
    pub t_final: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<OrderSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KaehlerSummary {
    pub n: usize,
    pub points: usize,
    pub metric_step: f64,
    pub connection_step: f64,
    pub curvature_step: f64,
    pub hermitian_violation_max: f64,
    pub line_element_imag_max: f64,
    pub kaehler_residual_max: f64,
    pub gamma_mixed_max: f64,
    pub christoffel_agreement_max: f64,
    pub fitted_k: f64,
    pub model_residual_max: f64,
    pub einstein_residual_max: f64,
    pub ricci_volume_agreement_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CartanSummary {
    pub m: usize,
    pub restrict_index: usize,
    pub full_form: String,
    pub merged_form: String,
    pub sliced_form: String,
    pub form_initial: f64,
    pub form_drift_max: f64,
    pub x_final: Vec<f64>,
    pub xbar_final: Vec<f64>,
}

/// Per-node or per-point numbers written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kaehler: Option<KaehlerSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cartan: Option<CartanSummary>,
    pub scenario: Scenario,
    /// Wall-clock time of the run. Not part of the text form, which must be
    /// identical across runs.
    #[serde(skip)]
    pub duration: Duration,
    #[serde(skip)]
    pub trajectory: Option<Table>,
}

impl Report {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// 0 on success, 2 when the run stopped on a numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Ok => 0,
            RunStatus::Diverged => 2,
        }
    }

    pub fn to_text(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| {
            ScenarioError::Compute(Error::InvalidArgument(format!(
                "report serialization failed: {e}"
            )))
        })
    }

    /// Writes `report.txt` and, when there is one, `trajectory.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, ScenarioError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| ScenarioError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = vec![write_atomic(&dir.join("report.txt"), &self.to_text()?)?];
        if let Some(table) = &self.trajectory {
            written.push(write_atomic(&dir.join("trajectory.csv"), &table.to_csv())?);
        }
        Ok(written)
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<PathBuf, ScenarioError> {
    let err = |source| ScenarioError::Write {
        path: path.to_path_buf(),
        source,
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(err)?;
    f.write_all(contents.as_bytes()).map_err(err)?;
    f.sync_all().map_err(err)?;
    fs::rename(&tmp, path).map_err(err)?;
    Ok(path.to_path_buf())
}

/// Overrides applied on top of a scenario before it runs.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunOptions {
    pub steps: Option<usize>,
    pub order_check: bool,
}

impl RunOptions {
    /// The scenario as it will actually run; this is what the report echoes.
    pub fn apply(&self, scenario: &Scenario) -> Scenario {
        let mut s = scenario.clone();
        if let Some(steps) = self.steps {
            s.grid.steps = steps;
        }
        s.output.order_check |= self.order_check;
        s
    }
}

/// Runs a scenario. Numerical failures end up in the report with
/// [`RunStatus::Diverged`]; invalid scenarios are errors.
pub fn run_scenario(scenario: &Scenario, options: RunOptions) -> Result<Report, ScenarioError> {
    let scenario = options.apply(scenario);
    let plan = scenario.plan()?;
    let start = Instant::now();
    let mut report = Report {
        status: RunStatus::Ok,
        failure: None,
        map: None,
        kaehler: None,
        cartan: None,
        scenario,
        duration: Duration::ZERO,
        trajectory: None,
    };
    let outcome = match plan {
        Plan::Map(p) => run_map(&p, &report.scenario).map(|(s, t)| {
            report.map = Some(s);
            t
        }),
        Plan::Kaehler(p) => run_kaehler(&p, &report.scenario).map(|(s, t)| {
            report.kaehler = Some(s);
            t
        }),
        Plan::Cartan(p) => run_cartan(&p).map(|(s, t)| {
            report.cartan = Some(s);
            t
        }),
    };
    match outcome {
        Ok(table) => {
            if report.scenario.output.trajectory {
                report.trajectory = Some(table);
            }
        }
        Err(e) if is_numerical_failure(&e) => {
            report.status = RunStatus::Diverged;
            report.failure = Some(Failure::from_error(&e));
        }
        Err(e) => return Err(e.into()),
    }
    report.duration = start.elapsed();
    Ok(report)
}

fn run_map(plan: &MapPlan, scenario: &Scenario) -> Result<(MapSummary, Table), Error> {
    let problem = &plan.problem;
    let sol = solver::solve_t_direct(problem)?;
    let fact = solver::factorize(problem, &sol)?;
    let agreement = solver::factorization_agreement(&fact.t_composed, &sol.t)?;
    let t_last = sol.t.last();
    let poisson = solver::poisson_structure_report(t_last)?;
    let order = if scenario.output.order_check {
        Some(match solver::map_property_order(problem, 3) {
            Ok(study) => OrderSummary {
                steps: study.steps,
                max_residuals: study.max_residuals,
                pairwise: study.pairwise_orders,
                estimate: Some(study.order),
            },
            Err(Error::OrderIndeterminate { .. }) => {
                let steps: Vec<usize> = (0..3).map(|k| problem.grid().steps() << k).collect();
                let max_residuals = steps
                    .iter()
                    .map(|&s| {
                        let g = problem.grid().refined(s / problem.grid().steps());
                        solver::solve_t_direct(&problem.clone().with_grid(g))
                            .map(|x| x.max_residual_target())
                    })
                    .collect::<Result<_, _>>()?;
                OrderSummary {
                    steps,
                    max_residuals,
                    pairwise: Vec::new(),
                    estimate: None,
                }
            }
            Err(e) => return Err(e),
        })
    } else {
        None
    };

    let m = problem.m();
    let n = 2 * m;
    let mut header = vec!["tau".to_string()];
    header.extend((0..n).map(|i| format!("xi{i}")));
    header.extend((0..n).map(|i| format!("eta{i}")));
    for i in 0..n {
        header.extend((0..n).map(|j| format!("t{i}_{j}")));
    }
    header.push("residual_full".to_string());
    header.push("residual_target".to_string());
    let rows = sol
        .t
        .iter()
        .enumerate()
        .map(|(k, (tau, t))| {
            let mut row = vec![tau];
            row.extend(sol.xi.values[k].iter());
            row.extend(sol.eta.values[k].iter());
            for i in 0..n {
                row.extend((0..n).map(|j| t[(i, j)]));
            }
            row.push(sol.residual_full[k]);
            row.push(sol.residual_target[k]);
            row
        })
        .collect();

    let summary = MapSummary {
        m,
        steps: problem.grid().steps(),
        residual_full_max: sol.max_residual_full(),
        residual_full_final: *sol.residual_full.last().unwrap_or(&0.0),
        residual_target_max: sol.max_residual_target(),
        residual_target_final: *sol.residual_target.last().unwrap_or(&0.0),
        residual_warning: sol.warning,
        factorization_agreement: agreement,
        poisson_defect: poisson.defect,
        is_symplectic: poisson.is_symplectic,
        eta_final: sol.eta.last().iter().copied().collect(),
        t_final: (0..n)
            .map(|i| (0..n).map(|j| t_last[(i, j)]).collect())
            .collect(),
        order,
    };
    Ok((summary, Table { header, rows }))
}

fn run_kaehler(plan: &KaehlerPlan, scenario: &Scenario) -> Result<(KaehlerSummary, Table), Error> {
    let n = plan.n;
    let pot = &plan.potential;
    let s = scenario.sampling;
    let points = kaehler::sample_points(n, s.points, s.radius, s.seed);
    let (hm, hc, hr) = (
        kaehler::DEFAULT_METRIC_STEP,
        kaehler::DEFAULT_CONNECTION_STEP,
        kaehler::DEFAULT_CURVATURE_STEP,
    );

    let field = MetricField::from_potential(pot, hm);
    let hermitian = kaehler::hermitian_validate(&field, &points);
    let mut kaehler_res = Vec::with_capacity(points.len());
    let mut gamma_mixed = Vec::with_capacity(points.len());
    let mut agreement = Vec::with_capacity(points.len());
    let mut tables = Vec::with_capacity(points.len());
    let mut ricci_gap = Vec::with_capacity(points.len());
    for p in &points {
        // cross-checks the analytic metric, when there is one
        kaehler::metric_from_potential(pot, p, hm)?;
        kaehler_res.push(kaehler::kaehler_condition_residual(&field, p, hc)?);
        let herm = kaehler::christoffel_hermitian(&field, p, hc)?;
        let kae = kaehler::christoffel_kaehler(pot, p, hc)?;
        gamma_mixed.push(herm.gamma_mixed.max_abs());
        let mut gap = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    gap = gap
                        .max((herm.gamma_holo.get(a, b, c) - kae.gamma_holo.get(a, b, c)).norm());
                }
            }
        }
        agreement.push(gap);
        let table = kaehler::curvature(pot, p, hr)?;
        let vol = kaehler::ricci_from_volume(pot, p, hc)?;
        ricci_gap.push(
            (&vol - &table.ricci)
                .iter()
                .map(|v: &Complex64| v.norm())
                .fold(0.0, f64::max),
        );
        tables.push(table);
    }
    let fit = kaehler::fit_holomorphic_curvature(&tables)?;
    let einstein: Vec<f64> = tables
        .iter()
        .map(|t| kaehler::einstein_residual(t, &t.metric, fit.k, n))
        .collect();
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);

    let mut header = vec!["point".to_string()];
    for a in 0..n {
        header.push(format!("z{a}_re"));
        header.push(format!("z{a}_im"));
    }
    header.extend(
        [
            "hermitian_violation",
            "kaehler_residual",
            "gamma_mixed",
            "model_residual",
            "einstein_residual",
        ]
        .map(String::from),
    );
    let rows = points
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let mut row = vec![k as f64];
            for z in p.z().iter() {
                row.push(z.re);
                row.push(z.im);
            }
            row.extend([
                hermitian[k].hermitian_violation,
                kaehler_res[k],
                gamma_mixed[k],
                fit.residuals[k],
                einstein[k],
            ]);
            row
        })
        .collect();

    let summary = KaehlerSummary {
        n,
        points: points.len(),
        metric_step: hm,
        connection_step: hc,
        curvature_step: hr,
        hermitian_violation_max: hermitian
            .iter()
            .map(|r| r.hermitian_violation)
            .fold(0.0, f64::max),
        line_element_imag_max: hermitian
            .iter()
            .map(|r| r.line_element_imag)
            .fold(0.0, f64::max),
        kaehler_residual_max: max(&kaehler_res),
        gamma_mixed_max: max(&gamma_mixed),
        christoffel_agreement_max: max(&agreement),
        fitted_k: fit.k,
        model_residual_max: fit.max_residual(),
        einstein_residual_max: max(&einstein),
        ricci_volume_agreement_max: max(&ricci_gap),
    };
    Ok((summary, Table { header, rows }))
}

fn run_cartan(plan: &CartanPlan) -> Result<(CartanSummary, Table), Error> {
    let m = plan.h.size();
    let traj = cartan::cartan_flow(&plan.h, plan.signature, &plan.coords, &plan.grid)?;
    let form_at = |state: &DVector<Complex64>| -> Result<f64, Error> {
        let x: Vec<f64> = state.iter().take(m).map(|v| v.re).collect();
        let xbar: Vec<f64> = state.iter().skip(m).map(|v| v.re).collect();
        Ok(cartan::evaluate_form(&plan.h, &PairedCoordinates::real(&x, &xbar)?)?.re)
    };
    let form0 = form_at(traj.first())?;
    let mut drift = 0.0f64;
    let mut rows = Vec::with_capacity(traj.values.len());
    for (tau, state) in traj.iter() {
        let f = form_at(state)?;
        drift = drift.max((f - form0).abs());
        let mut row = vec![tau];
        row.extend(state.iter().map(|v| v.re));
        row.push(f);
        rows.push(row);
    }
    let mut header = vec!["tau".to_string()];
    header.extend((0..m).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("xbar{i}")));
    header.push("form".to_string());

    let last = traj.last();
    let summary = CartanSummary {
        m,
        restrict_index: plan.index,
        full_form: cartan::full_form(&plan.h).to_string(),
        merged_form: cartan::restrict_form(&plan.h, RestrictionMode::DiagonalMerge, plan.index)?
            .to_string(),
        sliced_form: cartan::restrict_form(&plan.h, RestrictionMode::ZeroSlice, plan.index)?
            .to_string(),
        form_initial: form0,
        form_drift_max: drift,
        x_final: last.iter().take(m).map(|v| v.re).collect(),
        xbar_final: last.iter().skip(m).map(|v| v.re).collect(),
    };
    Ok((summary, Table { header, rows }))
}

/// Names of the bundled demo scenarios.
pub const DEMO_NAMES: [&str; 3] = ["oscillator-map", "kaehler-fs", "cartan-restrictions"];

/// Source text of a bundled demo scenario.
pub fn demo_source(name: &str) -> Option<&'static str> {
    match name {
        "oscillator-map" => Some(include_str!("../scenarios/oscillator_map.toml")),
        "kaehler-fs" => Some(include_str!("../scenarios/kaehler_fs.toml")),
        "cartan-restrictions" => Some(include_str!("../scenarios/cartan_restrictions.toml")),
        _ => None,
    }
}

pub fn demo_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    match demo_source(name) {
        Some(text) => parse_str(text, &format!("demo {name}")),
        None => bad(
            "demo",
            format!(
                "unknown demo `{name}` (available: {})",
                DEMO_NAMES.join(", ")
            ),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_map_scenario_gets_defaults() {
        let s = parse_str(
            "kind = \"map-solve\"\nm = 1\nsource = \"oscillator(2)\"\ntarget = \"oscillator(1)\"\n",
            "t",
        )
        .unwrap();
        assert_eq!(s.signature, [1, -1, 1, -1]);
        assert_eq!(s.grid.steps, 1000);
        assert!(s.t0.is_none());
        let Plan::Map(p) = s.plan().unwrap() else {
            panic!()
        };
        assert_eq!(p.problem.t0(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn mismatched_m_names_both_fields() {
        let text = "kind = \"map-solve\"\nsource = [[1.0, 0.0], [0.0, 1.0]]\ntarget = { block = [[1.0, 0.0], [0.0, 1.0]] }\n";
        let err = parse_str(text, "t").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("source") && msg.contains("target"), "{msg}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_str("kind = \"cartan-demo\"\nm = 2\nbogus = 1\n", "t").unwrap_err();
        assert!(matches!(err, ScenarioError::Parse { .. }));
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn kaehler_scenario_carries_builtin_potential() {
        let s = parse_str(
            "kind = \"kaehler-analyze\"\nn = 2\npotential = \"fs(1)\"\n",
            "t",
        )
        .unwrap();
        let Plan::Kaehler(p) = s.plan().unwrap() else {
            panic!()
        };
        assert_eq!(p.n, 2);
        assert!(p.potential.has_analytic_metric());
        assert!(parse_str(
            "kind = \"kaehler-analyze\"\nn = 2\npotential = \"fs(-1)\"\n",
            "t"
        )
        .is_err());
    }

    #[test]
    fn fields_of_other_kinds_are_rejected() {
        let err = parse_str(
            "kind = \"kaehler-analyze\"\nn = 1\npotential = \"flat\"\nm = 3\n",
            "t",
        )
        .unwrap_err();
        assert!(err.to_string().contains("`m`"));
    }

    #[test]
    fn builtin_matrices() {
        let osc = HamiltonianSpec::Named("oscillator(3)".into())
            .dense("source", 1)
            .unwrap();
        assert_eq!(osc, DMatrix::from_row_slice(2, 2, &[9.0, 0.0, 0.0, 1.0]));
        let free = HamiltonianSpec::Named("free".into())
            .dense("source", 1)
            .unwrap();
        assert_eq!(free, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        assert!(HamiltonianSpec::Named("spring".into())
            .dense("source", 1)
            .is_err());
        assert!(
            HamiltonianSpec::Matrix(vec![vec![1.0, 2.0], vec![0.0, 1.0]])
                .dense("source", 1)
                .is_err()
        );
    }

    #[test]
    fn echo_round_trip() {
        for name in DEMO_NAMES {
            let s = demo_scenario(name).unwrap();
            let text = toml::to_string(&Report {
                status: RunStatus::Ok,
                failure: None,
                map: None,
                kaehler: None,
                cartan: None,
                scenario: s.clone(),
                duration: Duration::ZERO,
                trajectory: None,
            })
            .unwrap();
            assert_eq!(echo_from_report(&text).unwrap(), s);
        }
    }
}
