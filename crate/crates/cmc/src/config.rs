//! Versioned JSON formats for models, copula builds and insurance pools.
//! Matrices are row-major nested arrays; times are in years.

use std::path::Path;

use cmc_core::copulae::{
    build_common_jump, build_conditional_independence, build_perfect_dependence, build_weak_only, CopulaCandidate,
    MarginalSpec, MarginalTarget,
};
use cmc_core::model::uniform_grid;
use cmc_core::premium::PoolModel;
use cmc_core::{kron_sum, CmcModel, FactorScenario, GeneratorPath, InitialLaw, Matrix, ProductStateSpace, RatePath};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MODEL_SCHEMA: &str = "cmc-model/1";
pub const BUILD_SCHEMA: &str = "cmc-build/1";
pub const POOL_SCHEMA: &str = "cmc-pool/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GridSpec {
    Uniform { horizon: f64, steps: usize },
    Points { points: Vec<f64> },
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridSpec::Uniform { horizon, steps } => uniform_grid(*horizon, *steps),
            GridSpec::Points { points } => points.clone(),
        }
    }

    pub fn scenario(&self) -> cmc_core::Result<FactorScenario> {
        FactorScenario::deterministic(self.points())
    }
}

/// A scalar rate, either constant or one value per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Constant(f64),
    Cells(Vec<f64>),
}

impl RateSpec {
    pub fn path(&self, grid: &[f64]) -> cmc_core::Result<RatePath> {
        match self {
            RateSpec::Constant(v) => RatePath::constant(grid.to_vec(), *v),
            RateSpec::Cells(v) => RatePath::new(grid.to_vec(), v.clone()),
        }
    }
}

/// A matrix, either constant in time or one per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Constant(Vec<Vec<f64>>),
    Cells(Vec<Vec<Vec<f64>>>),
}

fn to_matrix(rows: &[Vec<f64>]) -> cmc_core::Result<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
        return Err(cmc_core::Error::DimensionMismatch { expected: cols, actual: bad.len() });
    }
    Matrix::from_row_major(rows.len(), cols, rows.concat())
}

pub fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

impl MatrixSpec {
    pub fn cells(&self, n_cells: usize) -> cmc_core::Result<Vec<Matrix>> {
        match self {
            MatrixSpec::Constant(rows) => Ok(vec![to_matrix(rows)?; n_cells]),
            MatrixSpec::Cells(cells) => {
                if cells.len() != n_cells {
                    return Err(cmc_core::Error::DimensionMismatch { expected: n_cells, actual: cells.len() });
                }
                cells.iter().map(|c| to_matrix(c)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GeneratorSpec {
    /// Explicit matrices over the product space.
    Matrix { matrix: MatrixSpec },
    /// One factor per component, combined as a Kronecker sum.
    KronSum { factors: Vec<MatrixSpec> },
    CommonJump { a: RateSpec, b: RateSpec, c: RateSpec },
    WeakOnly { a: RateSpec, b: RateSpec, c: RateSpec },
    /// Two binary components switching together, `(0,0) ↔ (1,1)`.
    JointSwitch {
        a: f64,
        b: f64,
        #[serde(default)]
        balanced: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum LawSpec {
    Point { state: Vec<usize> },
    Probs { probs: Vec<f64> },
    /// Independent coordinates with the given component laws.
    Product { laws: Vec<Vec<f64>> },
}

impl LawSpec {
    pub fn law(&self, space: &ProductStateSpace) -> cmc_core::Result<InitialLaw> {
        match self {
            LawSpec::Point { state } => InitialLaw::point(space.cardinality(), space.flat_index(state)?),
            LawSpec::Probs { probs } => InitialLaw::new(probs.clone()),
            LawSpec::Product { laws } => {
                let laws = laws.iter().map(|l| InitialLaw::new(l.clone())).collect::<cmc_core::Result<Vec<_>>>()?;
                InitialLaw::product(&laws)
            }
        }
    }
}

fn common_jump_cell(a: f64, b: f64, c: f64, weak_only: bool) -> Matrix {
    let (b0, a0, stay) = if weak_only { (b, a, -(a + b + c)) } else { (b - c, a - c, -(a + b - c)) };
    Matrix::from_rows(&[[stay, b0, a0, c], [0.0, -a, 0.0, a], [0.0, 0.0, -b, b], [0.0, 0.0, 0.0, 0.0]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ModelConfig {
    pub schema: String,
    pub components: Vec<usize>,
    pub grid: GridSpec,
    pub generator: GeneratorSpec,
    pub initial: LawSpec,
}

impl ModelConfig {
    pub fn space(&self) -> cmc_core::Result<ProductStateSpace> {
        ProductStateSpace::new(self.components.clone())
    }

    /// Generator cells as written, before any validation.
    pub fn raw_cells(&self) -> cmc_core::Result<Vec<Matrix>> {
        let grid = self.grid.points();
        let n_cells = grid.len().saturating_sub(1);
        match &self.generator {
            GeneratorSpec::Matrix { matrix } => matrix.cells(n_cells),
            GeneratorSpec::KronSum { factors } => {
                let per_factor = factors.iter().map(|f| f.cells(n_cells)).collect::<cmc_core::Result<Vec<_>>>()?;
                (0..n_cells)
                    .map(|j| {
                        let fs: Vec<Matrix> = per_factor.iter().map(|c| c[j].clone()).collect();
                        kron_sum(&fs).map(|g| g.into_matrix())
                    })
                    .collect()
            }
            GeneratorSpec::CommonJump { a, b, c } | GeneratorSpec::WeakOnly { a, b, c } => {
                let weak = matches!(self.generator, GeneratorSpec::WeakOnly { .. });
                let (a, b, c) = (a.path(&grid)?, b.path(&grid)?, c.path(&grid)?);
                Ok((0..n_cells).map(|j| common_jump_cell(a.cell_value(j), b.cell_value(j), c.cell_value(j), weak)).collect())
            }
            GeneratorSpec::JointSwitch { a, b, balanced } => {
                let g = if *balanced {
                    cmc_core::consistency::joint_switch_generator_balanced(*a, *b)
                } else {
                    cmc_core::consistency::joint_switch_generator(*a, *b)
                };
                Ok(vec![g; n_cells])
            }
        }
    }

    pub fn model(&self, tol: f64) -> cmc_core::Result<CmcModel> {
        let space = self.space()?;
        let path = GeneratorPath::new(self.grid.scenario()?, self.raw_cells()?, tol)?;
        CmcModel::new(space.clone(), path, self.initial.law(&space)?)
    }

    /// Explicit per-cell form of an existing model.
    pub fn from_model(model: &CmcModel) -> Self {
        ModelConfig {
            schema: MODEL_SCHEMA.into(),
            components: model.space().sizes().to_vec(),
            grid: GridSpec::Points { points: model.grid().to_vec() },
            generator: GeneratorSpec::Matrix {
                matrix: MatrixSpec::Cells(model.generator().cells().iter().map(|g| matrix_rows(g)).collect()),
            },
            initial: LawSpec::Probs { probs: model.initial().probs().to_vec() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct MarginalConfig {
    pub intensity: MatrixSpec,
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CopulaSpec {
    ConditionalIndependence {
        #[serde(default)]
        initial: Option<Vec<f64>>,
    },
    CommonJump { a: RateSpec, b: RateSpec, c: RateSpec },
    PerfectDependence,
    WeakOnly { a: RateSpec, b: RateSpec, c: RateSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BuildConfig {
    pub schema: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub marginals: Vec<MarginalConfig>,
    pub copula: CopulaSpec,
}

impl BuildConfig {
    pub fn spec(&self) -> cmc_core::Result<MarginalSpec> {
        let scenario = self.grid.scenario()?;
        let components = self
            .marginals
            .iter()
            .map(|m| {
                Ok(MarginalTarget {
                    intensity: m.intensity.cells(scenario.n_cells())?,
                    initial: InitialLaw::new(m.initial.clone())?,
                })
            })
            .collect::<cmc_core::Result<Vec<_>>>()?;
        MarginalSpec::new(scenario, components)
    }

    pub fn candidate(&self, tol: f64) -> cmc_core::Result<CopulaCandidate> {
        let grid = self.grid.points();
        match &self.copula {
            CopulaSpec::ConditionalIndependence { initial } => {
                let joint = initial.clone().map(InitialLaw::new).transpose()?;
                build_conditional_independence(&self.spec()?, joint)
            }
            CopulaSpec::PerfectDependence => build_perfect_dependence(&self.spec()?),
            CopulaSpec::CommonJump { a, b, c } => build_common_jump(&a.path(&grid)?, &b.path(&grid)?, &c.path(&grid)?, tol),
            CopulaSpec::WeakOnly { a, b, c } => build_weak_only(&a.path(&grid)?, &b.path(&grid)?, &c.path(&grid)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct PoolConfig {
    pub schema: String,
    pub grid: GridSpec,
    #[serde(default)]
    pub marginals: Vec<MarginalConfig>,
    pub copula: CopulaSpec,
    pub discount_rate: f64,
    pub benefit_rate: f64,
    pub eval_time: f64,
}

impl PoolConfig {
    pub fn pool(&self, tol: f64) -> cmc_core::Result<PoolModel> {
        let build = BuildConfig {
            schema: BUILD_SCHEMA.into(),
            grid: self.grid.clone(),
            marginals: self.marginals.clone(),
            copula: self.copula.clone(),
        };
        PoolModel::new(build.candidate(tol)?, self.discount_rate, self.benefit_rate, self.eval_time)
    }
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema: String,
}

/// Reads a config file, checking its `schema` tag first.
pub fn load<T: DeserializeOwned>(path: &Path, schema: &str) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parse_err = |e: serde_json::Error| CliError::ConfigParse { path: path.to_path_buf(), message: e.to_string() };
    let probe: SchemaProbe = serde_json::from_str(&text).map_err(parse_err)?;
    if probe.schema != schema {
        return Err(CliError::ConfigParse {
            path: path.to_path_buf(),
            message: format!("expected schema {schema:?}, found {:?}", probe.schema),
        });
    }
    serde_json::from_str(&text).map_err(parse_err)
}
