//! Experiment configuration: a TOML document naming a group, a metric and a
//! list of tasks. See the README for the full schema.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use lipgeom::coarse::GeneratingSet;
use lipgeom::filtration::Window;
use lipgeom::table::CayleyTable;
use lipgeom::{Condition, Element, Group};

use crate::error::CliError;

/// Tolerance keys accepted under `[tolerances]`.
pub const TOLERANCE_KEYS: &[&str] = &["unitarity", "eval"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Sample budget per task.
    pub budget: usize,
    pub group: GroupSpec,
    pub metric: MetricSpec,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupSpec {
    Unitary {
        n: usize,
    },
    SpecialOrthogonal {
        n: usize,
    },
    GeneralLinear {
        n: usize,
    },
    DiagonalTorus {
        n: usize,
    },
    RealVector {
        dim: usize,
    },
    Heisenberg {
        n: usize,
    },
    FreeGroup {
        rank: usize,
    },
    IntegerLattice {
        dim: usize,
    },
    Cyclic {
        n: usize,
    },
    Dihedral {
        m: usize,
    },
    Symmetric {
        n: usize,
    },
    /// Multiplication table with row `a`, column `b` holding `a·b`.
    CayleyTable {
        name: String,
        rows: Vec<Vec<usize>>,
    },
    CyclicTower {
        p: u64,
        depth: u32,
    },
    Involutions {
        depth: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    Native,
    /// Largest eigenvalue angle on unitary, orthogonal and torus groups.
    Angular,
    Birkhoff {
        filtration: FiltrationSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<Window>,
    },
    Kakutani {
        filtration: FiltrationSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<Window>,
    },
    Word {
        generators: Vec<Element>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node_cap: Option<usize>,
    },
    Path {
        inner: Box<MetricSpec>,
        generators: GeneratingSet,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node_cap: Option<usize>,
    },
    BiInvariantised {
        inner: Box<MetricSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    Sqrt {
        inner: Box<MetricSpec>,
    },
    Capped {
        inner: Box<MetricSpec>,
        cap: f64,
    },
}

/// Filtration levels; the growth law follows from the metric type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FiltrationSpec {
    SubgroupTower,
    IntegerIntervals {
        max_n: u32,
    },
    Explicit {
        levels: Vec<LevelSpec>,
    },
    Balls {
        metric: Box<MetricSpec>,
        radii: Vec<BallLevel>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSpec {
    pub index: i32,
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallLevel {
    pub index: i32,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Certify {
        condition: Condition,
        /// `U` (or `ε` for the third condition, `V` / `O` for the others).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<f64>,
        /// Search for constants instead of checking given ones.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        fit: bool,
        /// Second condition at `U = 1/p` plus the derived third-condition check.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<u32>,
    },
    Construct {
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        include_nodes: bool,
    },
    Oneparam {
        /// Base element; omitted means `exp(A)` for a random tangent `A`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        f: Option<Element>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        random_scale: Option<f64>,
        k: u32,
        depth: usize,
        epsilon: f64,
        alphas: AlphaGrid,
    },
    Compare {
        other: MetricSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_scale: Option<usize>,
        /// Also run the bi-Lipschitz estimate on this ball.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v_radius: Option<f64>,
    },
    Nss {
        radius: f64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        uniform: bool,
    },
    Sin {
        radius: f64,
    },
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Certify { .. } => "certify",
            TaskSpec::Construct { .. } => "construct",
            TaskSpec::Oneparam { .. } => "oneparam",
            TaskSpec::Compare { .. } => "compare",
            TaskSpec::Nss { .. } => "nss",
            TaskSpec::Sin { .. } => "sin",
        }
    }
}

/// Either an explicit list or `points` evenly spaced values in `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaGrid {
    List(Vec<f64>),
    Range { lo: f64, hi: f64, points: usize },
}

impl AlphaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            AlphaGrid::List(v) => v.clone(),
            AlphaGrid::Range { lo, hi, points } => match points {
                0 => Vec::new(),
                1 => vec![*lo],
                n => (0..*n).map(|j| lo + (hi - lo) * j as f64 / (*n - 1) as f64).collect(),
            },
        }
    }
}

impl GroupSpec {
    pub fn build(&self) -> Result<Group, CliError> {
        let positive = |field: &str, v: usize| {
            if v == 0 {
                Err(CliError::field(format!("group.{field}"), "must be positive"))
            } else {
                Ok(())
            }
        };
        Ok(match self {
            GroupSpec::Unitary { n } => {
                positive("n", *n)?;
                Group::unitary(*n)
            }
            GroupSpec::SpecialOrthogonal { n } => {
                positive("n", *n)?;
                Group::special_orthogonal(*n)
            }
            GroupSpec::GeneralLinear { n } => {
                positive("n", *n)?;
                Group::general_linear(*n)
            }
            GroupSpec::DiagonalTorus { n } => {
                positive("n", *n)?;
                Group::diagonal_torus(*n)
            }
            GroupSpec::RealVector { dim } => {
                positive("dim", *dim)?;
                Group::real_vector(*dim)
            }
            GroupSpec::Heisenberg { n } => {
                if *n < 2 {
                    return Err(CliError::field("group.n", "heisenberg needs n >= 2"));
                }
                Group::heisenberg(*n)
            }
            GroupSpec::FreeGroup { rank } => {
                positive("rank", *rank)?;
                if *rank > 26 {
                    return Err(CliError::field("group.rank", "at most 26 generators"));
                }
                Group::free_group(*rank)
            }
            GroupSpec::IntegerLattice { dim } => {
                positive("dim", *dim)?;
                Group::integer_lattice(*dim)
            }
            GroupSpec::Cyclic { n } => {
                positive("n", *n)?;
                Group::finite_table(CayleyTable::cyclic(*n))
            }
            GroupSpec::Dihedral { m } => {
                if *m < 2 {
                    return Err(CliError::field("group.m", "dihedral needs m >= 2"));
                }
                Group::finite_table(CayleyTable::dihedral(*m))
            }
            GroupSpec::Symmetric { n } => {
                if !(1..=6).contains(n) {
                    return Err(CliError::field(
                        "group.n",
                        "symmetric groups are tabulated for 1 <= n <= 6",
                    ));
                }
                Group::finite_table(CayleyTable::symmetric(*n))
            }
            GroupSpec::CayleyTable { name, rows } => {
                let t = CayleyTable::from_rows(name.clone(), rows)
                    .map_err(|e| CliError::field("group.rows", e.to_string()))?;
                Group::finite_table(t)
            }
            GroupSpec::CyclicTower { p, depth } => {
                if *p < 2 || *depth == 0 || (*p as f64).powi(*depth as i32) > 2f64.powi(40) {
                    return Err(CliError::field(
                        "group",
                        "cyclic tower needs p >= 2, depth >= 1 and p^depth <= 2^40",
                    ));
                }
                Group::cyclic_tower(*p, *depth)
            }
            GroupSpec::Involutions { depth } => {
                if *depth == 0 || *depth > 40 {
                    return Err(CliError::field("group.depth", "must lie in 1..=40"));
                }
                Group::involutions(*depth)
            }
        })
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.check_fields()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn tolerance(&self, key: &str) -> Option<f64> {
        self.tolerances.get(key).copied()
    }

    /// Field-level checks that need no group arithmetic.
    pub fn check_fields(&self) -> Result<(), CliError> {
        if self.budget == 0 {
            return Err(CliError::field("budget", "must be positive"));
        }
        for (k, v) in &self.tolerances {
            if !TOLERANCE_KEYS.contains(&k.as_str()) {
                return Err(CliError::field(
                    format!("tolerances.{k}"),
                    format!("unknown key; expected one of {}", TOLERANCE_KEYS.join(", ")),
                ));
            }
            if !(v.is_finite() && *v > 0.0) {
                return Err(CliError::field(format!("tolerances.{k}"), "must be a positive number"));
            }
        }
        for (i, t) in self.tasks.iter().enumerate() {
            let at = |f: &str| format!("tasks[{i}].{f}");
            let pos = |f: &str, v: Option<f64>| match v {
                Some(x) if !(x.is_finite() && x > 0.0) => Err(CliError::field(at(f), "must be a positive number")),
                _ => Ok(()),
            };
            match t {
                TaskSpec::Certify {
                    condition,
                    radius,
                    k,
                    fit,
                    p,
                } => {
                    pos("radius", *radius)?;
                    pos("k", *k)?;
                    let fittable = matches!(condition, Condition::Cond2 | Condition::Cond3 | Condition::Cond4);
                    if *fit && !fittable {
                        return Err(CliError::field(at("fit"), "only cond2, cond3 and cond4 can be fitted"));
                    }
                    if p.is_some() && *condition != Condition::Cond2 {
                        return Err(CliError::field(at("p"), "p applies to cond2 only"));
                    }
                    if *p == Some(0) {
                        return Err(CliError::field(at("p"), "must be positive"));
                    }
                    if !*fit && p.is_none() && radius.is_none() {
                        return Err(CliError::field(at("radius"), "required unless fit or p is given"));
                    }
                }
                TaskSpec::Oneparam {
                    f,
                    random_scale,
                    k,
                    depth,
                    epsilon,
                    alphas,
                } => {
                    if f.is_some() == random_scale.is_some() {
                        return Err(CliError::field(at("f"), "give exactly one of f and random_scale"));
                    }
                    pos("random_scale", *random_scale)?;
                    pos("epsilon", Some(*epsilon))?;
                    if *k == 0 || *k > 8 {
                        return Err(CliError::field(at("k"), "must lie in 1..=8"));
                    }
                    if *depth == 0 || *depth * (*k as usize) > 60 {
                        return Err(CliError::field(at("depth"), "need 1 <= depth and k*depth <= 60"));
                    }
                    if alphas.values().iter().any(|a| !a.is_finite()) {
                        return Err(CliError::field(at("alphas"), "values must be finite"));
                    }
                }
                TaskSpec::Compare {
                    scales,
                    per_scale,
                    v_radius,
                    ..
                } => {
                    if *scales == Some(0) || *per_scale == Some(0) {
                        return Err(CliError::field(at("scales"), "scale ladder must be non-empty"));
                    }
                    pos("v_radius", *v_radius)?;
                }
                TaskSpec::Nss { radius, .. } | TaskSpec::Sin { radius } => pos("radius", Some(*radius))?,
                TaskSpec::Construct { .. } => {}
            }
        }
        Ok(())
    }
}
