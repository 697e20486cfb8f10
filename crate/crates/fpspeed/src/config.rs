//! Scenario files: JSON in, validated structs out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceConfig,
    pub operator: OperatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<CoefficientConfig>,
    pub initial: InitialData,
    /// Initial velocity for the second-order problems; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity: Option<InitialData>,
    pub times: TimeGrid,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    pub checks: Vec<Check>,
    #[serde(default)]
    pub slack: Slack,
    /// Directory of the config file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_eps() -> Vec<f64> {
    vec![1e-10, 1e-8, 1e-6]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceConfig {
    Grid(GridConfig),
    /// `{points, weights, coords}` read from a file.
    File { file: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: usize,
    pub extent: f64,
    pub h: f64,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
}

fn default_boundary() -> Boundary {
    Boundary::Neumann
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "lowercase", deny_unknown_fields)]
pub enum OperatorConfig {
    /// `[[0, -div], [grad, 0]]`; `axes` switches derivatives off.
    Case1 {
        #[serde(default = "both_axes")]
        axes: [bool; 2],
    },
    /// `B D` with a constant real block `b`.
    Case2 {
        b: Vec<Vec<f64>>,
        #[serde(default = "both_axes")]
        axes: [bool; 2],
    },
    /// The three-block operator; coefficients from `coefficients`.
    Case3,
    /// The homogeneous second-order problem on Case I.
    Hom,
    /// Sparse triplets `row col re im` on a `space` file.
    Explicit { file: String, fiber_dim: usize },
}

fn both_axes() -> [bool; 2] {
    [true, true]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub a: f64,
    /// Real part of `A`, `d x d` (homogeneous) or `(1+d) x (1+d)`.
    pub matrix: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_imag: Option<Vec<Vec<f64>>>,
    /// Piecewise constant medium: `a` and `A` are multiplied by `factor`
    /// for `x_0 >= at`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface: Option<Interface>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interface {
    pub at: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialData {
    Spike {
        at: Vec<f64>,
        #[serde(default)]
        component: usize,
    },
    Bump {
        at: Vec<f64>,
        width: f64,
        #[serde(default)]
        component: usize,
        #[serde(default)]
        smooth: bool,
    },
    /// Values below `cut` times the peak are set to zero, so the data has
    /// compact support.
    Gaussian {
        at: Vec<f64>,
        sigma: f64,
        #[serde(default)]
        component: usize,
        #[serde(default = "default_cut")]
        cut: f64,
    },
    /// One `re im` pair per line, component-major.
    File { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeGrid {
    Range { start: f64, stop: f64, count: usize },
    List(Vec<f64>),
}

impl TimeGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TimeGrid::List(v) => v.clone(),
            TimeGrid::Range { start, stop, count } => {
                if *count <= 1 {
                    return vec![*start];
                }
                (0..*count).map(|i| start + (stop - start) * i as f64 / (*count - 1) as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slack {
    #[serde(default = "default_rel")]
    pub rel: f64,
    #[serde(default = "default_cells")]
    pub cells: f64,
    /// Widen the cone by the dispersive front width.
    #[serde(default)]
    pub dispersive: bool,
}

fn default_rel() -> f64 {
    0.05
}

fn default_cells() -> f64 {
    1.0
}

impl Default for Slack {
    fn default() -> Self {
        Slack { rel: default_rel(), cells: default_cells(), dispersive: false }
    }
}

/// A named check with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Metric axioms of the space.
    Metric,
    /// `div = -grad*` for both boundary conditions and self-adjointness of `D`.
    Adjoint,
    /// `kappa_emp` over the certification family; optionally compared with `expect`.
    Kappa {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expect: Option<f64>,
        #[serde(default = "tol_kappa")]
        tol: f64,
    },
    /// Group law residuals.
    GroupLaw {
        #[serde(default = "tol_group")]
        tol: f64,
    },
    /// `||e^{itT}|| <= c e^{omega t}`; unitary generators must certify `(1, 0)`.
    GroupBound,
    /// The commutator integral identity.
    Commform {
        #[serde(default = "commform_times")]
        times: Vec<f64>,
        #[serde(default = "default_members")]
        members: usize,
        #[serde(default = "tol_commform")]
        tol: f64,
    },
    /// `||delta^n(e^{itT})||` against the power bound, with an `h -> h/2`
    /// refinement of the excess on grids.
    Derivation {
        #[serde(default = "default_order")]
        order: u32,
        #[serde(default = "default_t")]
        t: f64,
        /// Grid spacing of the coarse run; the scenario's `h` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<f64>,
    },
    /// Fitted speed against the bound, at every eps.
    Speed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<[f64; 2]>,
        /// Apply `window` at this eps only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window_eps: Option<f64>,
    },
    /// Every radius inside its cone, and fitted speeds for `t > 0` and `t < 0` within 2%.
    Cone,
    /// Drift along `axis` of the operator without that derivative, against the full operator.
    Directional { axis: usize },
    /// Case II: speed below `||B||` and `lambda^{-1/2} ||B||^{3/2}`, B-norm isometry.
    Case2Bounds,
    /// Case III: `B~ D + C = B D` and `Herm(B~) >= lambda / 2`.
    Split,
    /// `K~_t` inside the cone.
    SharperSupport {
        #[serde(default = "default_t")]
        t: f64,
    },
    /// Second-order solve and support check; `expect_fail` turns it into a negative control.
    Huygens {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        claimed_bound: Option<f64>,
        #[serde(default)]
        expect_fail: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        front_window: Option<[f64; 2]>,
        /// Apply `front_window` at this eps only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window_eps: Option<f64>,
    },
    CauchyResidual {
        #[serde(default = "default_dt")]
        dt: f64,
        #[serde(default = "default_steps")]
        steps: usize,
        #[serde(default = "tol_cauchy")]
        tol: f64,
    },
    /// Energy constants; conservation when `conserved`, else growth within `1.1 ||C||`.
    Energy {
        #[serde(default)]
        conserved: bool,
    },
    /// `(Lf, g) = J_A(f, g)` on random pairs.
    Form {
        #[serde(default = "default_pairs")]
        pairs: usize,
    },
    /// Dirichlet and Neumann runs agree until `t_contact`.
    Causality {
        t_contact: f64,
        #[serde(default = "tol_causality")]
        tol: f64,
    },
}

fn default_cut() -> f64 {
    1e-14
}
fn tol_kappa() -> f64 {
    1e-10
}
fn tol_group() -> f64 {
    1e-8
}
fn commform_times() -> Vec<f64> {
    vec![0.3, 1.0, 3.0]
}
fn default_members() -> usize {
    4
}
fn tol_commform() -> f64 {
    1e-9
}
fn default_order() -> u32 {
    5
}
fn default_t() -> f64 {
    0.5
}
fn default_dt() -> f64 {
    1e-3
}
fn default_steps() -> usize {
    40
}
fn tol_cauchy() -> f64 {
    1e-4
}
fn default_pairs() -> usize {
    4
}
fn tol_causality() -> f64 {
    1e-6
}

impl Check {
    pub fn name(&self) -> &'static str {
        match self {
            Check::Metric => "metric",
            Check::Adjoint => "adjoint",
            Check::Kappa { .. } => "kappa",
            Check::GroupLaw { .. } => "group_law",
            Check::GroupBound => "group_bound",
            Check::Commform { .. } => "commform",
            Check::Derivation { .. } => "derivation",
            Check::Speed { .. } => "speed",
            Check::Cone => "cone",
            Check::Directional { .. } => "directional",
            Check::Case2Bounds => "case2_bounds",
            Check::Split => "split",
            Check::SharperSupport { .. } => "sharper_support",
            Check::Huygens { .. } => "huygens",
            Check::CauchyResidual { .. } => "cauchy_residual",
            Check::Energy { .. } => "energy",
            Check::Form { .. } => "form",
            Check::Causality { .. } => "causality",
        }
    }

    /// Execution stage: space, operators, group, propagation/huygens.
    pub fn stage(&self) -> u8 {
        match self {
            Check::Metric => 0,
            Check::Adjoint | Check::Kappa { .. } | Check::Split | Check::Form { .. } => 1,
            Check::GroupLaw { .. } | Check::GroupBound | Check::Commform { .. } | Check::Derivation { .. } => 2,
            _ => 3,
        }
    }

    pub fn is_second_order(&self) -> bool {
        matches!(
            self,
            Check::Huygens { .. } | Check::CauchyResidual { .. } | Check::Energy { .. } | Check::Form { .. } | Check::Causality { .. }
        )
    }
}

impl Scenario {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        s.base_dir = base_dir.to_path_buf();
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, msg: &str| Err(CliError::Config(format!("{field}: {msg}")));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name", "must be a non-empty plain file name");
        }
        if let SpaceConfig::Grid(g) = &self.space {
            if g.dims != 1 && g.dims != 2 {
                return bad("space.dims", "must be 1 or 2");
            }
            if !(g.h > 0.0 && g.extent > 0.0) {
                return bad("space", "extent and h must be positive");
            }
        }
        if self.eps.is_empty() || self.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return bad("eps", "values must lie in (0, 1)");
        }
        let times = self.times.values();
        if times.is_empty() || times.iter().any(|t| !t.is_finite()) {
            return bad("times", "need at least one finite time");
        }
        if self.checks.is_empty() {
            return bad("checks", "no checks requested");
        }
        let needs_coeff = matches!(self.operator, OperatorConfig::Case3 | OperatorConfig::Hom);
        if needs_coeff && self.coefficients.is_none() {
            return bad("coefficients", "required for this operator case");
        }
        if let OperatorConfig::Explicit { .. } = self.operator {
            if !matches!(self.space, SpaceConfig::File { .. }) {
                return bad("space", "an explicit operator needs a space file");
            }
        }
        for (i, c) in self.checks.iter().enumerate() {
            let second = matches!(self.operator, OperatorConfig::Case3 | OperatorConfig::Hom);
            if c.is_second_order() && !second {
                return bad(&format!("checks[{i}]"), &format!("`{}` needs operator case3 or hom", c.name()));
            }
            if matches!(c, Check::Split | Check::Causality { .. }) && !matches!(self.operator, OperatorConfig::Case3) {
                return bad(&format!("checks[{i}]"), &format!("`{}` needs operator case3", c.name()));
            }
            if matches!(c, Check::Case2Bounds) && !matches!(self.operator, OperatorConfig::Case2 { .. }) {
                return bad(&format!("checks[{i}]"), "`case2_bounds` needs operator case2");
            }
            if let Check::Directional { axis } = c {
                match &self.space {
                    SpaceConfig::Grid(g) if *axis < g.dims && g.dims == 2 => {}
                    _ => return bad(&format!("checks[{i}].axis"), "directional test needs a 2D grid and a valid axis"),
                }
            }
        }
        for (field, d) in [("initial", Some(&self.initial)), ("velocity", self.velocity.as_ref())] {
            match d {
                Some(InitialData::Gaussian { sigma, cut, .. }) if !(*sigma > 0.0 && *cut > 0.0 && *cut < 1.0) => {
                    return bad(field, "sigma must be positive and cut in (0, 1)");
                }
                Some(InitialData::Bump { width, .. }) if !(*width > 0.0) => return bad(field, "width must be positive"),
                _ => {}
            }
        }
        for (field, path) in self.referenced_files() {
            if !self.resolve(&path).exists() {
                return bad(&field, &format!("file {path} does not exist"));
            }
        }
        Ok(())
    }

    fn referenced_files(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        if let SpaceConfig::File { file } = &self.space {
            out.push(("space.file".into(), file.clone()));
        }
        if let OperatorConfig::Explicit { file, .. } = &self.operator {
            out.push(("operator.file".into(), file.clone()));
        }
        if let InitialData::File { path } = &self.initial {
            out.push(("initial.path".into(), path.clone()));
        }
        if let Some(InitialData::File { path }) = &self.velocity {
            out.push(("velocity.path".into(), path.clone()));
        }
        out
    }
}
