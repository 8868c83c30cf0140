//! Builds the group and metrics named by a config and executes its tasks.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lipgeom::certify::{self, CheckOptions, FitOptions};
use lipgeom::coarse::{self, QiOptions, SEARCH_NODE_CAP};
use lipgeom::construct::{birkhoff_metric, kakutani_metric, Construction};
use lipgeom::filtration::Window;
use lipgeom::group::CMatOrVec;
use lipgeom::metric::{angular_metric, bi_invariantize, native_metric, transform_capped, transform_sqrt};
use lipgeom::oneparam::{self, build_root_chain};
use lipgeom::sample::derive_seed;
use lipgeom::{Certificate, Condition, Element, Filtration, Group, GrowthLaw, Metric, MetricMeta, Verdict};

use crate::config::{AlphaGrid, ExperimentConfig, FiltrationSpec, MetricSpec, TaskSpec};
use crate::error::CliError;
use crate::report::{CompareResult, Evaluation, OneParamResult, Report, Status, TaskReport, TaskResult};

/// Default accuracy target for one-parameter evaluations.
pub const DEFAULT_EVAL_TOL: f64 = 1e-8;

/// Shells used to spread the sample budget.
const SHELLS: usize = 12;

/// Everything a config resolves to before any task runs.
#[derive(Debug, Clone)]
pub struct Context {
    pub group: Group,
    pub metric: Metric,
    pub construction: Option<Construction>,
    /// Second metrics of `compare` tasks, keyed by task index.
    pub others: BTreeMap<usize, Metric>,
}

/// Resolves the group, the metric, every filtration and every compared
/// metric. Any failure here is a configuration error.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Context, CliError> {
    cfg.check_fields()?;
    let mut group = cfg.group.build()?.with_seed(cfg.seed);
    if let Some(t) = cfg.tolerance("unitarity") {
        group = group.with_unitarity_tol(t);
    }
    let (metric, construction) = build_metric(&cfg.metric, &group, cfg, "metric")?;
    let mut others = BTreeMap::new();
    for (i, t) in cfg.tasks.iter().enumerate() {
        match t {
            TaskSpec::Compare { other, .. } => {
                let (m, _) = build_metric(other, &group, cfg, &format!("tasks[{i}].other"))?;
                others.insert(i, m);
            }
            TaskSpec::Construct { .. } if construction.is_none() => {
                return Err(CliError::field(
                    format!("tasks[{i}]"),
                    "construct needs a birkhoff or kakutani metric",
                ));
            }
            TaskSpec::Oneparam { f: Some(f), .. } => {
                group
                    .validate(f)
                    .map_err(|e| CliError::build(format!("tasks[{i}].f"), e))?;
            }
            TaskSpec::Oneparam { f: None, .. } if group.random_tangent(&mut ChaCha8Rng::seed_from_u64(0)).is_none() => {
                return Err(CliError::field(
                    format!("tasks[{i}].random_scale"),
                    format!("{} has no tangent directions; give f", group.name()),
                ));
            }
            _ => {}
        }
    }
    Ok(Context {
        group,
        metric,
        construction,
        others,
    })
}

fn build_metric(
    spec: &MetricSpec,
    group: &Group,
    cfg: &ExperimentConfig,
    at: &str,
) -> Result<(Metric, Option<Construction>), CliError> {
    let wrap = |field: &str| {
        let path = if field.is_empty() {
            at.to_string()
        } else {
            format!("{at}.{field}")
        };
        move |e| CliError::build(path, e)
    };
    let inner = |m: &MetricSpec| build_metric(m, group, cfg, &format!("{at}.inner")).map(|x| x.0);
    Ok(match spec {
        MetricSpec::Native => (native_metric(group).map_err(wrap(""))?, None),
        MetricSpec::Angular => (angular_metric(group).map_err(wrap(""))?, None),
        MetricSpec::Birkhoff { filtration, window } | MetricSpec::Kakutani { filtration, window } => {
            let law = match spec {
                MetricSpec::Birkhoff { .. } => GrowthLaw::BirkhoffCubes,
                _ => GrowthLaw::KakutaniSquares,
            };
            if let Some(w) = window {
                check_window(group, w, at)?;
            }
            let filt = build_filtration(filtration, law, group, cfg, &format!("{at}.filtration"))?;
            filt.verify(group, window.as_ref(), cfg.budget, cfg.seed)
                .map_err(wrap("filtration"))?;
            let c = match law {
                GrowthLaw::BirkhoffCubes => birkhoff_metric(group, &filt, window.as_ref()),
                GrowthLaw::KakutaniSquares => kakutani_metric(group, &filt, window.as_ref()),
            }
            .map_err(wrap(""))?;
            (c.metric.clone(), Some(c))
        }
        MetricSpec::Word { generators, node_cap } => {
            for (j, g) in generators.iter().enumerate() {
                group.validate(g).map_err(wrap(&format!("generators[{j}]")))?;
            }
            let m =
                coarse::word_metric_handle(group, generators, node_cap.unwrap_or(SEARCH_NODE_CAP)).map_err(wrap(""))?;
            (m, None)
        }
        MetricSpec::Path {
            inner: i,
            generators,
            node_cap,
        } => {
            let d = inner(i)?;
            let m = coarse::path_metric(&d, generators, node_cap.unwrap_or(SEARCH_NODE_CAP)).map_err(wrap(""))?;
            (m, None)
        }
        MetricSpec::BiInvariantised { inner: i, cap } => {
            let d = inner(i)?;
            let b = bi_invariantize(&d, *cap, cfg.budget, cfg.seed).map_err(wrap(""))?;
            (b.metric, None)
        }
        MetricSpec::Sqrt { inner: i } => (transform_sqrt(&inner(i)?), None),
        MetricSpec::Capped { inner: i, cap } => (transform_capped(&inner(i)?, *cap).map_err(wrap("cap"))?, None),
    })
}

fn check_window(group: &Group, w: &Window, at: &str) -> Result<(), CliError> {
    let elems = w
        .elements(group)
        .map_err(|e| CliError::build(format!("{at}.window"), e))?;
    for (j, g) in elems.iter().enumerate() {
        group
            .validate(g)
            .map_err(|e| CliError::build(format!("{at}.window.elements[{j}]"), e))?;
    }
    Ok(())
}

fn build_filtration(
    spec: &FiltrationSpec,
    law: GrowthLaw,
    group: &Group,
    cfg: &ExperimentConfig,
    at: &str,
) -> Result<Filtration, CliError> {
    let wrap = |e| CliError::build(at.to_string(), e);
    match spec {
        FiltrationSpec::SubgroupTower => Filtration::subgroup_tower(group, law).map_err(wrap),
        FiltrationSpec::IntegerIntervals { max_n } => {
            if law != GrowthLaw::BirkhoffCubes {
                return Err(CliError::field(
                    at,
                    "integer intervals follow the cube law; use a birkhoff metric",
                ));
            }
            if *max_n > 30 {
                return Err(CliError::field(format!("{at}.max_n"), "at most 30"));
            }
            Ok(Filtration::integer_intervals(*max_n))
        }
        FiltrationSpec::Explicit { levels } => {
            let mut out = Vec::with_capacity(levels.len());
            for (li, level) in levels.iter().enumerate() {
                for (j, g) in level.elements.iter().enumerate() {
                    group
                        .validate(g)
                        .map_err(|e| CliError::build(format!("{at}.levels[{li}].elements[{j}]"), e))?;
                }
                out.push((level.index, level.elements.clone()));
            }
            Filtration::from_elements(law, "explicit", out).map_err(wrap)
        }
        FiltrationSpec::Balls { metric, radii } => {
            let (m, _) = build_metric(metric, group, cfg, &format!("{at}.metric"))?;
            let r = radii.iter().map(|b| (b.index, b.radius)).collect();
            Filtration::balls(law, &m, r).map_err(wrap)
        }
    }
}

/// Runs every task of an already prepared config.
pub fn execute(cfg: &ExperimentConfig, ctx: &Context, parallel: bool) -> Report {
    let start = Instant::now();
    let one = |(i, t): (usize, &TaskSpec)| run_task(cfg, ctx, i, t);
    let tasks: Vec<TaskReport> = if parallel {
        // indexed collect keeps the declared order
        cfg.tasks.par_iter().enumerate().map(one).collect()
    } else {
        cfg.tasks.iter().enumerate().map(one).collect()
    };
    Report {
        schema_version: crate::report::SCHEMA_VERSION.to_string(),
        versions: versions(),
        config: cfg.clone(),
        group: ctx.group.name(),
        metric: Some(finite_meta(&ctx.metric.meta)),
        tasks,
        wall_clock_ms: start.elapsed().as_millis() as u64,
    }
}

/// [`prepare`] followed by [`execute`].
pub fn run(cfg: &ExperimentConfig, parallel: bool) -> Result<Report, CliError> {
    let ctx = prepare(cfg)?;
    Ok(execute(cfg, &ctx, parallel))
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("lipgeom".to_string(), lipgeom::VERSION.to_string()),
        ("lipgeom-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ])
}

fn finite_meta(m: &MetricMeta) -> MetricMeta {
    let mut m = m.clone();
    m.constants.retain(|_, v| v.is_finite());
    m.bound = m.bound.filter(|b| b.is_finite());
    m
}

fn check_options(cfg: &ExperimentConfig, seed: u64) -> CheckOptions {
    CheckOptions {
        per_shell: cfg.budget.div_ceil(SHELLS).max(1),
        shells: SHELLS,
        seed,
        ..CheckOptions::default()
    }
}

fn verdict_status(v: Verdict) -> Status {
    match v {
        Verdict::HoldsOnBudget | Verdict::HoldsExhaustively => Status::Holds,
        Verdict::Refuted => Status::Refuted,
        Verdict::Inconclusive => Status::Inconclusive,
    }
}

fn error_report(index: usize, task: &TaskSpec, e: impl ToString) -> TaskReport {
    TaskReport {
        index,
        task: task.clone(),
        status: Status::Error,
        result: TaskResult::Error { message: e.to_string() },
    }
}

fn certificate_report(index: usize, task: &TaskSpec, metric: &Metric, c: Certificate) -> TaskReport {
    let replayed = c.witness.as_ref().map(|w| w.replay(metric).is_ok());
    TaskReport {
        index,
        task: task.clone(),
        status: verdict_status(c.verdict),
        result: TaskResult::Certificate {
            certificate: c,
            witness_replayed: replayed,
        },
    }
}

fn run_task(cfg: &ExperimentConfig, ctx: &Context, index: usize, task: &TaskSpec) -> TaskReport {
    let seed = derive_seed(cfg.seed, index as u64);
    let opts = check_options(cfg, seed);
    let metric = &ctx.metric;
    let outcome: lipgeom::Result<TaskReport> = (|| match task {
        TaskSpec::Certify {
            condition,
            radius,
            k,
            fit,
            p,
        } => {
            if *fit {
                let fo = FitOptions {
                    check: opts.clone(),
                    ..FitOptions::default()
                };
                let c = certify::fit_constants(metric, *condition, &fo)?;
                return Ok(certificate_report(index, task, metric, c));
            }
            if let Some(p) = p {
                let c = certify::check_cond2_derived(metric, *p, &opts)?;
                return Ok(certificate_report(index, task, metric, c));
            }
            let r = radius.expect("checked at config time");
            let c = match condition {
                Condition::Cond2 | Condition::Cond3 | Condition::Cond4 => {
                    certify::check_condition(metric, *condition, r, k.unwrap_or(1.0), &opts)?
                }
                Condition::Nss => certify::check_nss(metric, r, &opts)?,
                Condition::UniformNss => certify::check_uniform_nss(metric, r, &opts)?,
                Condition::RightLipschitz => certify::check_right_lipschitz(metric, r, &opts)?,
                Condition::LocalSin => certify::check_local_sin(metric, r, &opts)?,
                Condition::SqrtContinuity => oneparam::check_sqrt_uniform_continuity(metric, r, &opts)?,
            };
            Ok(certificate_report(index, task, metric, c))
        }
        TaskSpec::Nss { radius, uniform } => {
            let c = if *uniform {
                certify::check_uniform_nss(metric, *radius, &opts)?
            } else {
                certify::check_nss(metric, *radius, &opts)?
            };
            Ok(certificate_report(index, task, metric, c))
        }
        TaskSpec::Sin { radius } => {
            let c = certify::check_local_sin(metric, *radius, &opts)?;
            Ok(certificate_report(index, task, metric, c))
        }
        TaskSpec::Construct { include_nodes } => {
            let c = ctx.construction.as_ref().expect("checked at config time");
            let status = if c.report.sandwich_holds == Some(false) {
                Status::Refuted
            } else {
                Status::Constructed
            };
            Ok(TaskReport {
                index,
                task: task.clone(),
                status,
                result: TaskResult::Construction {
                    report: c.report.clone(),
                    nodes: include_nodes.then(|| c.nodes.clone()),
                },
            })
        }
        TaskSpec::Oneparam {
            f,
            random_scale,
            k,
            depth,
            epsilon,
            alphas,
        } => run_oneparam(
            cfg,
            ctx,
            index,
            task,
            seed,
            (f.as_ref(), *random_scale),
            *k,
            *depth,
            *epsilon,
            alphas,
        ),
        TaskSpec::Compare {
            scales,
            per_scale,
            v_radius,
            ..
        } => {
            let other = &ctx.others[&index];
            let defaults = QiOptions::default();
            let qo = QiOptions {
                scales: scales.unwrap_or(defaults.scales),
                per_scale: per_scale.unwrap_or(defaults.per_scale),
                base: None,
                seed,
            };
            let qi = coarse::fit_quasi_isometry(metric, other, &qo)?;
            let bl = match v_radius {
                Some(v) => Some(coarse::bilipschitz_constant(metric, other, *v, cfg.budget, seed)?),
                None => None,
            };
            let status = if qi.refuted { Status::Refuted } else { Status::Holds };
            Ok(TaskReport {
                index,
                task: task.clone(),
                status,
                result: TaskResult::Compare(CompareResult {
                    other: other.label().to_string(),
                    quasi_isometry: qi,
                    bilipschitz: bl,
                    notes: vec![
                        "quasi-isometry to a word metric certifies maximality only when the group is generated by a coarsely bounded set".into(),
                    ],
                }),
            })
        }
    })();
    outcome.unwrap_or_else(|e| error_report(index, task, e))
}

#[allow(clippy::too_many_arguments)]
fn run_oneparam(
    cfg: &ExperimentConfig,
    ctx: &Context,
    index: usize,
    task: &TaskSpec,
    seed: u64,
    base: (Option<&Element>, Option<f64>),
    k: u32,
    depth: usize,
    epsilon: f64,
    alphas: &AlphaGrid,
) -> lipgeom::Result<TaskReport> {
    let group = &ctx.group;
    let metric = &ctx.metric;
    let (f, tangent) = match base {
        (Some(f), _) => (f.clone(), None),
        (None, Some(scale)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = group.random_tangent(&mut rng).expect("checked at config time");
            (group.exp_tangent(&x, scale), Some((x, scale)))
        }
        (None, None) => unreachable!("checked at config time"),
    };
    let chain = build_root_chain(metric, &f, k, depth, epsilon)?;
    let eval_tol = cfg.tolerance("eval").unwrap_or(DEFAULT_EVAL_TOL);
    let grid = alphas.values();
    let mut evaluations = Vec::with_capacity(grid.len());
    let mut worst_ref: f64 = 0.0;
    for &a in &grid {
        let h = chain.eval_at_depth(group, a, depth)?;
        let reference_error = tangent.as_ref().map(|(x, s): &(CMatOrVec, f64)| {
            let r = group.exp_tangent(x, a * s);
            metric.dist(&h, &r)
        });
        worst_ref = worst_ref.max(reference_error.unwrap_or(0.0));
        evaluations.push(Evaluation {
            alpha: a,
            distance: metric.norm(&h),
            element: h,
            reference_error,
        });
    }
    let violations = chain.digit_bound_violations(metric, &grid);
    let status = if !violations.is_empty() {
        Status::Refuted
    } else if worst_ref > eval_tol {
        Status::Inconclusive
    } else {
        Status::Constructed
    };
    Ok(TaskReport {
        index,
        task: task.clone(),
        status,
        result: TaskResult::Oneparam(OneParamResult {
            max_contraction_ratio: chain.max_contraction_ratio(),
            needed_depth: chain.needed_depth(eval_tol),
            eval_tol,
            truncation_bound: 2f64.powi(k as i32 - depth as i32) * epsilon,
            evaluations,
            digit_bound_violations: violations,
            chain,
        }),
    })
}

/// Keeps the tasks a subcommand is responsible for; `None` keeps all.
pub fn filter_tasks(cfg: &mut ExperimentConfig, kinds: Option<&[&str]>) {
    if let Some(kinds) = kinds {
        cfg.tasks.retain(|t| kinds.contains(&t.kind()));
    }
}
