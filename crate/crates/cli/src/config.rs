//! Run configuration: a TOML file with `[problem]`, `[solver]`, `[analysis]`,
//! `[sweep]` and `[run]` sections.

use std::path::Path;

use bangbang::analysis::AnalysisSettings;
use bangbang::optimizer::{SolveOptions, StepRule};
use bangbang::stability::{DEFAULT_PROBES, DEFAULT_RATIO, DEFAULT_RUNGS, DEFAULT_T0};
use bangbang::{Bounds, Diffusion, Grid, GridFunction, Integrand, Nonlinearity, ProblemSpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::expr::Expr;
use crate::CliError;

/// Expression field; accepts a TOML string or number.
#[derive(Debug, Clone, PartialEq)]
pub struct Field(pub Expr);

impl Serialize for Field {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for Field {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Source {
            Text(String),
            Number(f64),
        }
        match Source::deserialize(d)? {
            Source::Number(v) if v.is_finite() => Ok(Field(if v < 0.0 {
                Expr::Neg(Box::new(Expr::Num(-v)))
            } else {
                Expr::Num(v)
            })),
            Source::Number(v) => Err(serde::de::Error::custom(format!("non-finite value {v}"))),
            Source::Text(t) => Expr::parse(&t)
                .map(Field)
                .map_err(|e| serde::de::Error::custom(format!("in expression `{t}`: {e}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearityKind {
    Zero,
    Linear,
    Cubic,
    Saturating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// `[lo, hi]` per axis.
    pub domain: Vec<[f64; 2]>,
    /// Cells per axis.
    pub cells: Vec<usize>,
    pub diffusion: Field,
    pub nonlinearity: NonlinearityKind,
    #[serde(default)]
    pub coefficient: f64,
    /// Tracking target `y_d`.
    pub target: Field,
    /// Linear cost weight `w`; tracking only when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Field>,
    pub lower: Field,
    pub upper: Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepRuleName {
    Classic,
    Corrective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub gap_tol: f64,
    pub armijo_c1: f64,
    pub backtrack: f64,
    pub max_halvings: usize,
    pub step_rule: StepRuleName,
    pub max_face: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolveOptions::<f64>::default();
        SolverConfig {
            max_iters: o.max_iters,
            gap_tol: o.gap_tol,
            armijo_c1: o.armijo_c1,
            backtrack: o.backtrack,
            max_halvings: o.max_halvings,
            step_rule: StepRuleName::Corrective,
            max_face: o.max_face,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_max: Option<f64>,
    pub fit_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub growth_samples: usize,
    pub cone_samples: usize,
    pub quadratic_samples: usize,
    pub quadratic_radius: f64,
    pub constant_samples: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let s = AnalysisSettings::<f64>::default();
        AnalysisConfig {
            eps_min: s.eps_min,
            eps_max: s.eps_max,
            fit_points: s.fit_points,
            tau: s.tau,
            growth_samples: s.growth_samples,
            cone_samples: s.cone_samples,
            quadratic_samples: s.quadratic_samples,
            quadratic_radius: s.quadratic_radius,
            constant_samples: s.constant_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSet {
    /// Cost, state and mixed smooth random directions.
    Default,
    /// A single zero direction.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub directions: DirectionSet,
    pub t0: f64,
    pub ratio: f64,
    pub rungs: usize,
    pub probes: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            directions: DirectionSet::Default,
            t0: DEFAULT_T0,
            ratio: DEFAULT_RATIO,
            rungs: DEFAULT_RUNGS,
            probes: DEFAULT_PROBES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Output directory, relative to the working directory.
    pub output: String,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            output: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| {
                    let line = text[..s.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}: ")
                })
                .unwrap_or_default();
            CliError::Config(format!("{location}{}", e.message()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Canonical text; parsing it yields an equal configuration.
    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("configuration is serializable")
    }

    pub fn solve_options(&self) -> Result<SolveOptions<f64>, CliError> {
        let s = &self.solver;
        let o = SolveOptions {
            max_iters: s.max_iters,
            gap_tol: s.gap_tol,
            armijo_c1: s.armijo_c1,
            backtrack: s.backtrack,
            max_halvings: s.max_halvings,
            seed: self.run.seed,
            step_rule: match s.step_rule {
                StepRuleName::Classic => StepRule::Classic,
                StepRuleName::Corrective => StepRule::Corrective,
            },
            max_face: s.max_face,
        };
        o.validate().map_err(|e| CliError::Config(format!("[solver]: {e}")))?;
        Ok(o)
    }

    pub fn analysis_settings(&self) -> AnalysisSettings<f64> {
        let a = &self.analysis;
        AnalysisSettings {
            eps_min: a.eps_min,
            eps_max: a.eps_max,
            fit_points: a.fit_points,
            tau: a.tau,
            growth_samples: a.growth_samples,
            cone_samples: a.cone_samples,
            quadratic_samples: a.quadratic_samples,
            quadratic_radius: a.quadratic_radius,
            constant_samples: a.constant_samples,
            seed: self.run.seed,
            ..AnalysisSettings::default()
        }
    }

    /// Builds the discrete problem; field names appear in every error.
    pub fn problem(&self) -> Result<ProblemSpec<f64>, CliError> {
        let p = &self.problem;
        let bad = |field: &str, msg: String| CliError::Config(format!("problem.{field}: {msg}"));
        if p.domain.len() != p.cells.len() {
            return Err(bad(
                "cells",
                format!("{} axes given but domain has {}", p.cells.len(), p.domain.len()),
            ));
        }
        let extent: Vec<(f64, f64)> = p.domain.iter().map(|d| (d[0], d[1])).collect();
        let grid = Grid::new(&extent, &p.cells).map_err(|e| bad("domain", e.to_string()))?;
        let field = |e: &Field| GridFunction::from_fn(&grid, |x, y| e.0.eval(x, y));
        let finite = |name: &str, f: &GridFunction<f64>| {
            if f.values().iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(bad(name, "expression is not finite on the grid".into()))
            }
        };
        let diffusion = if p.diffusion.0.is_constant() {
            Diffusion::Constant(p.diffusion.0.eval(0.0, 0.0))
        } else {
            let a = field(&p.diffusion);
            finite("diffusion", &a)?;
            Diffusion::Field(a)
        };
        let c = p.coefficient;
        let nonlinearity = match p.nonlinearity {
            NonlinearityKind::Zero => Nonlinearity::Zero,
            NonlinearityKind::Linear => Nonlinearity::Linear(c),
            NonlinearityKind::Cubic => Nonlinearity::Cubic(c),
            NonlinearityKind::Saturating => Nonlinearity::Saturating(c),
        };
        let target = field(&p.target);
        finite("target", &target)?;
        let integrand = match &p.weight {
            None => Integrand::tracking(target),
            Some(w) => {
                let weight = field(w);
                finite("weight", &weight)?;
                Integrand::TrackingPlusLinear { target, weight }
            }
        };
        let (lower, upper) = (field(&p.lower), field(&p.upper));
        finite("lower", &lower)?;
        finite("upper", &upper)?;
        if let Some(k) = (0..grid.node_count()).find(|&k| lower.values()[k] > upper.values()[k]) {
            let [x, y] = grid.coords(k);
            let at = if grid.dim() == 2 {
                format!("({x}, {y})")
            } else {
                format!("x = {x}")
            };
            return Err(bad(
                "lower",
                format!(
                    "exceeds problem.upper at {at} ({} > {})",
                    lower.values()[k],
                    upper.values()[k]
                ),
            ));
        }
        let bounds = Bounds::new(lower, upper).map_err(|e| bad("lower", e.to_string()))?;
        ProblemSpec::new(grid.clone(), diffusion, nonlinearity, integrand, bounds).map_err(|e| {
            let name = if e.to_string().contains("nonlinearity") {
                "coefficient"
            } else {
                "diffusion"
            };
            bad(name, e.to_string())
        })
    }
}
