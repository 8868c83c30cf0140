//! Power-growth checks on a metric: the three intrinsic minimality
//! conditions, NSS, uniform NSS, right-Lipschitz and local SIN estimates.
//!
//! Each check samples dyadic shells `(R/2^{j+1}, R/2^j]` of a ball (the last
//! shell reaches down to the identity), evaluates shells in parallel and
//! assembles the result by shell index, so certificates depend only on the
//! inputs and the seed. Finite groups are swept exhaustively whenever a
//! shell fits in the per-shell budget.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Element, Group};
use crate::le_tol;
use crate::metric::Metric;
use crate::sample::{derive_seed, sample_ball, sample_shell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// `g, …, g^n ∈ U ⇒ d(g, 1) ≤ K/n` (the plain form has `K = 1`).
    Cond2,
    /// `d(g, 1) ≤ ε/n ⇒ n·d(g, 1) ≤ K·d(g^n, 1)`.
    Cond3,
    /// `g, g², g⁴, …, g^{2^n} ∈ U ⇒ 2^n·d(g, 1) ≤ K·d(g^{2^n}, 1)`.
    Cond4,
    Nss,
    UniformNss,
    RightLipschitz,
    LocalSin,
    SqrtContinuity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    HoldsOnBudget,
    HoldsExhaustively,
    Refuted,
    Inconclusive,
}

impl Verdict {
    pub fn holds(self) -> bool {
        matches!(self, Verdict::HoldsOnBudget | Verdict::HoldsExhaustively)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub u_radius: Option<f64>,
    pub k: Option<f64>,
    pub epsilon: Option<f64>,
    pub n_max: Option<u64>,
    pub sample_budget: usize,
    pub seed: u64,
}

/// A concrete violation. Without a partner the trace lists
/// `(e, d(g^e, 1))`; with a partner `f` it lists `(e, d(g^e, f^e))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub element: Element,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<Element>,
    pub power_trace: Vec<(i64, f64)>,
    pub violated: String,
}

/// Tolerance for witness replay.
pub const REPLAY_TOL: f64 = 1e-10;

impl Witness {
    /// Re-evaluates every trace entry through the group arithmetic.
    pub fn replay(&self, metric: &Metric) -> Result<()> {
        let g = metric.group();
        for &(e, recorded) in &self.power_trace {
            let ge = g.power(&self.element, e);
            let replayed = match &self.partner {
                None => metric.norm(&ge),
                Some(f) => metric.dist(&ge, &g.power(f, e)),
            };
            if !((replayed - recorded).abs() <= REPLAY_TOL * recorded.abs().max(1.0)) {
                return Err(Error::Replay {
                    exponent: e,
                    recorded,
                    replayed,
                });
            }
        }
        Ok(())
    }
}

/// One row of a modulus table: for `target`, the fitted `value`
/// (an escape count or a radius, depending on the check).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub target: f64,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub condition: Condition,
    pub verdict: Verdict,
    pub constants: Constants,
    pub samples_checked: usize,
    /// Observed extremes (`max_ratio`, `max_n_times_d`, fitted constants …).
    pub observed: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<ModulusRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub notes: Vec<String>,
}

const SCOPE_NOTE: &str =
    "verdict covers the stated power-growth condition on the sampled set; it is not a proof of minimality";

impl Certificate {
    /// Records an observed extreme; unbounded values go to the notes so the
    /// certificate stays representable in plain JSON.
    pub fn observe(&mut self, key: &str, value: f64) {
        if value.is_finite() {
            self.observed.insert(key.to_string(), value);
        } else if value > 0.0 {
            self.notes.push(format!("{key} is unbounded on the sample"));
        }
    }

    fn new(condition: Condition, verdict: Verdict, constants: Constants) -> Self {
        Self {
            condition,
            verdict,
            constants,
            samples_checked: 0,
            observed: BTreeMap::new(),
            table: Vec::new(),
            witness: None,
            notes: Vec::new(),
        }
    }
}

/// Sampling and cap settings shared by the checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub per_shell: usize,
    pub shells: usize,
    /// Cap on `n` for the second and third conditions.
    pub n_max: u64,
    /// Cap on the dyadic exponent for the fourth condition.
    pub dyadic_depth: u32,
    /// Cap on power-orbit length for the NSS checks.
    pub escape_cap: u64,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            per_shell: 256,
            shells: 12,
            n_max: 1 << 10,
            dyadic_depth: 16,
            escape_cap: 1 << 16,
            seed: 0,
        }
    }
}

impl CheckOptions {
    pub fn budget(&self) -> usize {
        self.per_shell * self.shells
    }

    fn constants(&self) -> Constants {
        Constants {
            sample_budget: self.budget(),
            seed: self.seed,
            ..Constants::default()
        }
    }
}

/// Power orbit of `g` inside a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Orbit {
    /// Largest `n` with `g, …, g^n` all inside (capped).
    pub n: u64,
    /// The orbit returned to the identity inside the ball, so every power
    /// stays inside: `n` is really infinite.
    pub periodic: bool,
    /// `(i, d(g^i, 1))` for `i = 1..=n+1` (the last entry is the escape, if any).
    pub trace: Vec<(i64, f64)>,
}

impl Orbit {
    pub fn escaped(&self) -> bool {
        !self.periodic && self.trace.len() as u64 > self.n
    }
}

/// Walks `g, g², …` until a power leaves the ball of radius `radius`
/// (closed ball, or open when `open` is set), the orbit returns to the
/// identity, or `cap` powers have been checked.
pub fn escape_count(metric: &Metric, g: &Element, radius: f64, cap: u64, open: bool) -> Orbit {
    let group = metric.group();
    let inside = |r: f64| if open { r < radius } else { r <= radius };
    let discrete = group.is_discrete();
    let mut p = g.clone();
    let mut trace = Vec::new();
    for i in 1..=cap {
        let r = metric.norm(&p);
        trace.push((i as i64, r));
        if !inside(r) {
            return Orbit {
                n: i - 1,
                periodic: false,
                trace,
            };
        }
        if discrete && group.is_identity(&p) {
            return Orbit {
                n: u64::MAX,
                periodic: true,
                trace,
            };
        }
        p = group.mul(&p, g);
    }
    Orbit {
        n: cap,
        periodic: false,
        trace,
    }
}

/// Per-element outcome inside a shell run.
#[derive(Default)]
struct Outcome {
    witness: Option<Witness>,
    /// Quantity whose maximum over the run is reported.
    ratio: Option<f64>,
    capped: bool,
}

struct ShellRun {
    checked: usize,
    exhaustive: bool,
    witness: Option<Witness>,
    max_ratio: f64,
    capped: usize,
    empty_shells: usize,
}

/// Elements of the ball `B_d(radius)` minus the identity, shell by shell.
fn shell_elements(metric: &Metric, radius: f64, opts: &CheckOptions) -> (Vec<Vec<Element>>, bool, usize) {
    let shells = opts.shells.max(1);
    let results: Vec<(Vec<Element>, bool)> = (0..shells)
        .into_par_iter()
        .map(|j| {
            let hi = radius / 2f64.powi(j as i32);
            let lo = if j + 1 == shells { 0.0 } else { hi / 2.0 };
            match sample_shell(metric, lo, hi, opts.per_shell, derive_seed(opts.seed, j as u64)) {
                Ok(s) => (s.elements, s.exhaustive),
                Err(_) => (Vec::new(), true),
            }
        })
        .collect();
    let empty = results.iter().filter(|(e, _)| e.is_empty()).count();
    let exhaustive = results.iter().all(|(_, ex)| *ex);
    (results.into_iter().map(|(e, _)| e).collect(), exhaustive, empty)
}

fn run_shells<F>(metric: &Metric, radius: f64, opts: &CheckOptions, test: F) -> Result<ShellRun>
where
    F: Fn(&Element) -> Outcome + Sync,
{
    let (shells, exhaustive, empty_shells) = shell_elements(metric, radius, opts);
    let per_shell: Vec<(usize, Option<Witness>, f64, usize)> = shells
        .par_iter()
        .map(|elems| {
            let mut witness = None;
            let mut max_ratio = f64::NEG_INFINITY;
            let mut capped = 0;
            let mut checked = 0;
            for g in elems {
                let o = test(g);
                checked += 1;
                if let Some(r) = o.ratio {
                    max_ratio = max_ratio.max(r);
                }
                capped += o.capped as usize;
                if witness.is_none() {
                    witness = o.witness;
                }
            }
            (checked, witness, max_ratio, capped)
        })
        .collect();
    let checked: usize = per_shell.iter().map(|s| s.0).sum();
    if checked == 0 {
        return Err(Error::DegenerateSampling(format!(
            "no non-identity element in B_d({radius}) for {}",
            metric.label()
        )));
    }
    Ok(ShellRun {
        checked,
        exhaustive,
        witness: per_shell.iter().find_map(|s| s.1.clone()),
        max_ratio: per_shell.iter().map(|s| s.2).fold(f64::NEG_INFINITY, f64::max),
        capped: per_shell.iter().map(|s| s.3).sum(),
        empty_shells,
    })
}

fn finish(mut cert: Certificate, run: &ShellRun) -> Certificate {
    cert.samples_checked = run.checked;
    cert.witness = run.witness.clone();
    cert.verdict = if cert.witness.is_some() {
        Verdict::Refuted
    } else if run.exhaustive {
        Verdict::HoldsExhaustively
    } else {
        Verdict::HoldsOnBudget
    };
    if run.empty_shells > 0 {
        cert.notes
            .push(format!("{} shell(s) contained no elements", run.empty_shells));
    }
    cert.notes.push(SCOPE_NOTE.into());
    cert
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

/// `g, g², …, g^n ∈ B_d(U) ⇒ d(g, 1) ≤ K/n`, with `n` the longest run of
/// powers inside the closed ball (capped at `n_max`). An orbit that returns
/// to the identity inside the ball has unbounded `n` and refutes the
/// condition for every `K`.
pub fn check_condition2(metric: &Metric, u_radius: f64, k: f64, opts: &CheckOptions) -> Result<Certificate> {
    check_positive("U_radius", u_radius)?;
    check_positive("K", k)?;
    let run = run_shells(metric, u_radius, opts, |g| {
        let d = metric.norm(g);
        let orb = escape_count(metric, g, u_radius, opts.n_max, false);
        if orb.periodic {
            return Outcome {
                witness: Some(Witness {
                    element: g.clone(),
                    partner: None,
                    power_trace: orb.trace.clone(),
                    violated: format!(
                        "every power of g stays in B_d({u_radius}) (g^{} = 1) but d(g,1) = {d} > 0",
                        orb.trace.len()
                    ),
                }),
                ratio: Some(f64::INFINITY),
                ..Outcome::default()
            };
        }
        let n = orb.n;
        if n == 0 {
            return Outcome::default();
        }
        let nd = n as f64 * d;
        let witness = (!le_tol(nd, k)).then(|| Witness {
            element: g.clone(),
            partner: None,
            power_trace: orb.trace.clone(),
            violated: format!(
                "g, …, g^{n} ∈ B_d({u_radius}) but d(g,1) = {d} > {k}/{n} = {}",
                k / n as f64
            ),
        });
        Outcome {
            witness,
            ratio: Some(nd),
            capped: n == opts.n_max,
        }
    })?;
    let mut c = opts.constants();
    c.u_radius = Some(u_radius);
    c.k = Some(k);
    c.n_max = Some(opts.n_max);
    let mut cert = Certificate::new(Condition::Cond2, Verdict::Refuted, c);
    cert.observe("max_n_times_d", run.max_ratio);
    cert.observe("capped_orbits", run.capped as f64);
    Ok(finish(cert, &run))
}

/// `d(g, 1) ≤ ε/n ⇒ n·d(g, 1) ≤ K·d(g^n, 1)` for `n ≤ n_max`; `n` is scanned
/// upward so the witness carries the least violating exponent.
pub fn check_condition3(metric: &Metric, epsilon: f64, k: f64, opts: &CheckOptions) -> Result<Certificate> {
    check_positive("epsilon", epsilon)?;
    check_positive("K", k)?;
    let group = metric.group().clone();
    let run = run_shells(metric, epsilon, opts, |g| {
        let d = metric.norm(g);
        if d <= 0.0 {
            return Outcome::default();
        }
        let mut p = g.clone();
        let mut worst: f64 = 0.0;
        for n in 1..=opts.n_max {
            if !le_tol(n as f64 * d, epsilon) {
                break;
            }
            if n > 1 {
                p = group.mul(&p, g);
            }
            let dn = metric.norm(&p);
            let lhs = n as f64 * d;
            worst = worst.max(if dn > 0.0 { lhs / dn } else { f64::INFINITY });
            if !le_tol(lhs, k * dn) {
                return Outcome {
                    witness: Some(Witness {
                        element: g.clone(),
                        partner: None,
                        power_trace: vec![(1, d), (n as i64, dn)],
                        violated: format!(
                            "d(g,1) = {d} ≤ {epsilon}/{n} but {n}·d(g,1) = {lhs} > {k}·d(g^{n},1) = {}",
                            k * dn
                        ),
                    }),
                    ratio: Some(worst),
                    ..Outcome::default()
                };
            }
        }
        Outcome {
            ratio: Some(worst),
            ..Outcome::default()
        }
    })?;
    let mut c = opts.constants();
    c.epsilon = Some(epsilon);
    c.k = Some(k);
    c.n_max = Some(opts.n_max);
    let mut cert = Certificate::new(Condition::Cond3, Verdict::Refuted, c);
    cert.observe("max_ratio", run.max_ratio);
    Ok(finish(cert, &run))
}

/// `g, g², g⁴, …, g^{2^n} ∈ B_d(U) ⇒ 2^n·d(g, 1) ≤ K·d(g^{2^n}, 1)` for
/// `n ≤ dyadic_depth`.
pub fn check_condition4(metric: &Metric, u_radius: f64, k: f64, opts: &CheckOptions) -> Result<Certificate> {
    check_positive("U_radius", u_radius)?;
    check_positive("K", k)?;
    let group = metric.group().clone();
    let run = run_shells(metric, u_radius, opts, |g| {
        let d = metric.norm(g);
        if d <= 0.0 {
            return Outcome::default();
        }
        let mut p = g.clone();
        let mut trace = vec![(1i64, d)];
        let mut worst: f64 = 1.0;
        for i in 1..=opts.dyadic_depth {
            p = group.mul(&p, &p);
            let di = metric.norm(&p);
            let e = 1i64 << i;
            trace.push((e, di));
            if !(di <= u_radius) {
                break;
            }
            let lhs = e as f64 * d;
            worst = worst.max(if di > 0.0 { lhs / di } else { f64::INFINITY });
            if !le_tol(lhs, k * di) {
                return Outcome {
                    witness: Some(Witness {
                        element: g.clone(),
                        partner: None,
                        power_trace: trace,
                        violated: format!(
                            "g, g^2, …, g^{e} ∈ B_d({u_radius}) but {e}·d(g,1) = {lhs} > {k}·d(g^{e},1) = {}",
                            k * di
                        ),
                    }),
                    ratio: Some(worst),
                    ..Outcome::default()
                };
            }
        }
        Outcome {
            ratio: Some(worst),
            ..Outcome::default()
        }
    })?;
    let mut c = opts.constants();
    c.u_radius = Some(u_radius);
    c.k = Some(k);
    c.n_max = Some(1u64 << opts.dyadic_depth);
    let mut cert = Certificate::new(Condition::Cond4, Verdict::Refuted, c);
    cert.observe("max_ratio", run.max_ratio);
    Ok(finish(cert, &run))
}

/// Dispatches to the condition-specific check; `radius` is `U` for the
/// second and fourth conditions and `ε` for the third.
pub fn check_condition(
    metric: &Metric,
    condition: Condition,
    radius: f64,
    k: f64,
    opts: &CheckOptions,
) -> Result<Certificate> {
    match condition {
        Condition::Cond2 => check_condition2(metric, radius, k, opts),
        Condition::Cond3 => check_condition3(metric, radius, k, opts),
        Condition::Cond4 => check_condition4(metric, radius, k, opts),
        other => Err(Error::InvalidArgument(format!("{other:?} has no fitted constants"))),
    }
}

/// Search bounds for [`fit_constants`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub radius_max: f64,
    /// Smallest radius tried on continuous groups.
    pub radius_min: f64,
    pub k_max: f64,
    /// Bisection steps between the first passing rung and the failing one above it.
    pub refine_steps: u32,
    pub check: CheckOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            radius_max: 1.0,
            radius_min: 1.0 / 16.0,
            k_max: 16.0,
            refine_steps: 4,
            check: CheckOptions::default(),
        }
    }
}

/// Smallest positive distance to the identity among the elements near it:
/// the whole group when finite, otherwise the first three word layers.
pub fn resolution(metric: &Metric) -> Option<f64> {
    let g = metric.group();
    let elems: Vec<Element> = match g.elements() {
        Some(all) => all,
        None => g.word_layers(3, 10_000)?.into_iter().flatten().collect(),
    };
    elems
        .iter()
        .map(|e| metric.norm(e))
        .filter(|&r| r > 0.0)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))))
}

/// Searches the least `K` (doubling from 1) and, for that `K`, the largest
/// radius on a halving ladder for which the condition holds on budget.
///
/// On discrete groups the ladder stops at the resolution of the metric
/// (twice the resolution for the third condition), so a ball never shrinks
/// to the identity alone and the fit cannot pass vacuously.
pub fn fit_constants(metric: &Metric, condition: Condition, fit: &FitOptions) -> Result<Certificate> {
    check_positive("radius_max", fit.radius_max)?;
    let floor = if metric.group().is_discrete() {
        let res = resolution(metric).ok_or_else(|| {
            Error::DegenerateSampling(format!("{} has no non-identity element", metric.group().name()))
        })?;
        match condition {
            Condition::Cond3 => 2.0 * res,
            _ => res,
        }
    } else {
        fit.radius_min
    };
    let top = fit.radius_max.max(floor);
    let mut ladder = Vec::new();
    let mut r = top;
    while r > floor * (1.0 + 1e-12) {
        ladder.push(r);
        r /= 2.0;
    }
    ladder.push(floor);

    let mut last_refuted: Option<Certificate> = None;
    let mut notes = Vec::new();
    let mut k = 1.0;
    while k <= fit.k_max {
        let mut above: Option<f64> = None;
        for &r in &ladder {
            match check_condition(metric, condition, r, k, &fit.check) {
                Ok(cert) if cert.verdict.holds() => {
                    let cert = refine(metric, condition, k, r, above, cert, fit);
                    return Ok(decorate_fit(cert, k, &ladder, notes));
                }
                Ok(cert) => {
                    above = Some(r);
                    last_refuted = Some(cert);
                }
                Err(Error::DegenerateSampling(msg)) => {
                    notes.push(format!("radius {r}: {msg}"));
                    above = Some(r);
                }
                Err(e) => return Err(e),
            }
        }
        k *= 2.0;
    }
    match last_refuted {
        Some(mut cert) => {
            cert.notes.push(format!(
                "no passing constants with K ≤ {} on radii {:?}; witness from the last attempt",
                fit.k_max, ladder
            ));
            cert.notes.extend(notes);
            cert.observe("k_max_tried", fit.k_max);
            Ok(cert)
        }
        None => Err(Error::DegenerateSampling(format!(
            "every rung of the ladder {ladder:?} was degenerate"
        ))),
    }
}

fn refine(
    metric: &Metric,
    condition: Condition,
    k: f64,
    pass: f64,
    fail: Option<f64>,
    mut best: Certificate,
    fit: &FitOptions,
) -> Certificate {
    let Some(mut hi) = fail else { return best };
    let mut lo = pass;
    for _ in 0..fit.refine_steps {
        let mid = 0.5 * (lo + hi);
        match check_condition(metric, condition, mid, k, &fit.check) {
            Ok(c) if c.verdict.holds() => {
                lo = mid;
                best = c;
            }
            _ => hi = mid,
        }
    }
    best
}

fn decorate_fit(mut cert: Certificate, k: f64, ladder: &[f64], notes: Vec<String>) -> Certificate {
    cert.observe("fitted_k", k);
    let r = cert.constants.u_radius.or(cert.constants.epsilon).unwrap_or(f64::NAN);
    cert.observe("fitted_radius", r);
    cert.notes.push(format!(
        "constants fitted: K doubled from 1, radius bisected below the halving ladder {ladder:?}"
    ));
    cert.notes.extend(notes);
    cert
}

/// Checks the third condition with `K = 4p` on `W = B_d(1/(2p²))`, which
/// follows from the second condition holding on `U = B_d(1/p)` (since
/// `W^{2p} ⊆ U` by the triangle inequality). The second condition is checked
/// first; if it fails its certificate is returned unchanged.
pub fn check_cond2_derived(metric: &Metric, p: u32, opts: &CheckOptions) -> Result<Certificate> {
    if p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    let u = 1.0 / p as f64;
    let base = check_condition2(metric, u, 1.0, opts)?;
    if !base.verdict.holds() {
        return Ok(base);
    }
    let w = 1.0 / (2.0 * (p as f64).powi(2));
    let k = 4.0 * p as f64;
    let group = metric.group().clone();
    let run = run_shells(metric, w, opts, |g| {
        let d = metric.norm(g);
        let orb = escape_count(metric, g, w, opts.n_max, false);
        let n = if orb.periodic { orb.trace.len() as u64 } else { orb.n };
        let mut p_ = g.clone();
        let mut worst: f64 = 0.0;
        for m in 1..=n {
            if m > 1 {
                p_ = group.mul(&p_, g);
            }
            let dm = metric.norm(&p_);
            let lhs = m as f64 * d;
            worst = worst.max(if dm > 0.0 { lhs / dm } else { f64::INFINITY });
            if !le_tol(lhs, k * dm) {
                return Outcome {
                    witness: Some(Witness {
                        element: g.clone(),
                        partner: None,
                        power_trace: vec![(1, d), (m as i64, dm)],
                        violated: format!("{m}·d(g,1) = {lhs} > {k}·d(g^{m},1) with g, …, g^{m} ∈ B_d({w})"),
                    }),
                    ratio: Some(worst),
                    ..Outcome::default()
                };
            }
        }
        Outcome {
            ratio: Some(worst),
            ..Outcome::default()
        }
    })?;
    let mut c = opts.constants();
    c.u_radius = Some(w);
    c.k = Some(k);
    c.n_max = Some(opts.n_max);
    let mut cert = Certificate::new(Condition::Cond3, Verdict::Refuted, c);
    cert.observe("max_ratio", run.max_ratio);
    cert.observe("p", p as f64);
    cert.notes.push(format!(
        "derived from the second condition at U = B_d(1/{p}) (holds, {} samples)",
        base.samples_checked
    ));
    Ok(finish(cert, &run))
}

/// No small subgroups inside `B_d(U)`: finite groups scan every cyclic
/// subgroup; otherwise each sampled `g ≠ 1` must have a power leaving the
/// ball within `escape_cap` steps (inconclusive if some orbit never does).
pub fn check_nss(metric: &Metric, u_radius: f64, opts: &CheckOptions) -> Result<Certificate> {
    check_positive("U_radius", u_radius)?;
    let group = metric.group().clone();
    let mut c = opts.constants();
    c.u_radius = Some(u_radius);
    c.n_max = Some(opts.escape_cap);
    let mut cert = Certificate::new(Condition::Nss, Verdict::HoldsExhaustively, c);
    if let Some(all) = group.elements() {
        cert.constants.sample_budget = all.len();
        for g in &all {
            if group.is_identity(g) || metric.norm(g) > u_radius {
                continue;
            }
            cert.samples_checked += 1;
            let orb = escape_count(metric, g, u_radius, u64::MAX, false);
            if orb.periodic {
                let order = orb.trace.len();
                cert.verdict = Verdict::Refuted;
                cert.witness = Some(Witness {
                    element: g.clone(),
                    partner: None,
                    power_trace: orb.trace,
                    violated: format!("the cyclic subgroup of order {order} generated by g lies in B_d({u_radius})"),
                });
                break;
            }
        }
        cert.notes.push("exhaustive scan of cyclic subgroups".into());
        return Ok(cert);
    }
    if group.is_discrete() {
        let s = sample_ball(metric, u_radius, 2, opts.seed)?;
        if s.exhaustive && s.elements.iter().all(|g| group.is_identity(g)) {
            cert.notes.push(format!("B_d({u_radius}) is the trivial subgroup"));
            return Ok(cert);
        }
    }
    let run = run_shells(metric, u_radius, opts, |g| {
        if let Some(e) = dyadic_escape(metric, g, u_radius) {
            return Outcome {
                ratio: Some(e as f64),
                ..Outcome::default()
            };
        }
        let orb = escape_count(metric, g, u_radius, opts.escape_cap, false);
        if orb.periodic {
            let order = orb.trace.len();
            return Outcome {
                witness: Some(Witness {
                    element: g.clone(),
                    partner: None,
                    power_trace: orb.trace,
                    violated: format!("the cyclic subgroup of order {order} generated by g lies in B_d({u_radius})"),
                }),
                ..Outcome::default()
            };
        }
        Outcome {
            capped: !orb.escaped(),
            ratio: Some(orb.n as f64),
            ..Outcome::default()
        }
    })?;
    cert.observe("max_escape", run.max_ratio);
    let capped = run.capped;
    let mut cert = finish(cert, &run);
    if cert.witness.is_none() && capped > 0 {
        cert.verdict = Verdict::Inconclusive;
        cert.notes.push(format!(
            "{capped} orbit(s) stayed inside the ball for {} powers",
            opts.escape_cap
        ));
    }
    Ok(cert)
}

/// First exponent `2^i ≤ 2^40` with `g^{2^i}` outside the closed ball.
fn dyadic_escape(metric: &Metric, g: &Element, radius: f64) -> Option<u64> {
    let group = metric.group();
    let mut p = g.clone();
    for i in 0..=40u32 {
        if metric.norm(&p) > radius {
            return Some(1u64 << i);
        }
        if group.is_identity(&p) {
            return None;
        }
        p = group.mul(&p, &p);
    }
    None
}

/// Number of halvings of `U` in the uniform NSS grid.
pub const UNIFORM_NSS_LEVELS: usize = 10;

/// For `V = U/2^j`, records `n(V) = 1 + max{escape(g) : g ∈ B_d(U), d(g,1) > V}`,
/// the least `n` with `g, …, g^n ∈ U ⇒ g ∈ V` on the sample.
pub fn check_uniform_nss(metric: &Metric, u_radius: f64, opts: &CheckOptions) -> Result<Certificate> {
    check_positive("U_radius", u_radius)?;
    let group = metric.group().clone();
    let shell_opts = CheckOptions {
        shells: UNIFORM_NSS_LEVELS + 1,
        ..opts.clone()
    };
    let (shells, mut exhaustive, _) = shell_elements(metric, u_radius, &shell_opts);
    let mut samples: Vec<Element> = shells.into_iter().flatten().collect();
    let grid: Vec<f64> = (1..=UNIFORM_NSS_LEVELS)
        .map(|j| u_radius / 2f64.powi(j as i32))
        .collect();
    if !group.is_discrete() {
        // probes just outside each V, where escape times peak
        for (j, &v) in grid.iter().enumerate() {
            if let Ok(s) = sample_shell(metric, v, v * (1.0 + 1e-9), 8, derive_seed(opts.seed, 1000 + j as u64)) {
                samples.extend(s.elements);
            }
        }
        exhaustive = false;
    }
    if samples.is_empty() {
        return Err(Error::DegenerateSampling(format!(
            "B_d({u_radius}) has no non-identity sample"
        )));
    }
    let v_min = grid[grid.len() - 1];
    samples.retain(|g| metric.norm(g) > v_min);
    let orbits: Vec<(f64, Orbit)> = samples
        .par_iter()
        .map(|g| {
            (
                metric.norm(g),
                escape_count(metric, g, u_radius, opts.escape_cap, false),
            )
        })
        .collect();
    let mut c = shell_opts.constants();
    c.u_radius = Some(u_radius);
    c.n_max = Some(opts.escape_cap);
    c.sample_budget = samples.len();
    let mut cert = Certificate::new(Condition::UniformNss, Verdict::HoldsOnBudget, c);
    cert.samples_checked = samples.len();
    let mut inconclusive = false;
    for &v in &grid {
        let mut n_v: u64 = 1;
        let mut row_ok = true;
        for (i, (d, orb)) in orbits.iter().enumerate() {
            if *d <= v {
                continue;
            }
            if orb.periodic {
                cert.witness.get_or_insert_with(|| Witness {
                    element: samples[i].clone(),
                    partner: None,
                    power_trace: orb.trace.clone(),
                    violated: format!("all powers of g stay in B_d({u_radius}) but d(g,1) = {d} > V = {v}"),
                });
                row_ok = false;
            } else if !orb.escaped() {
                inconclusive = true;
                row_ok = false;
            } else {
                n_v = n_v.max(orb.n + 1);
            }
        }
        cert.table.push(ModulusRow {
            target: v,
            value: row_ok.then_some(n_v as f64),
        });
    }
    cert.verdict = if cert.witness.is_some() {
        Verdict::Refuted
    } else if inconclusive {
        Verdict::Inconclusive
    } else if exhaustive {
        Verdict::HoldsExhaustively
    } else {
        Verdict::HoldsOnBudget
    };
    cert.notes.push("table rows: target = V radius, value = n(V)".into());
    Ok(cert)
}

/// Draws pairs or triples from `B_d(radius)`: all of them when the ball is
/// small, otherwise `budget` random draws.
fn ball_points(metric: &Metric, radius: f64, budget: usize, seed: u64) -> Result<(Vec<Element>, bool)> {
    let s = sample_ball(metric, radius, budget.max(2), seed)?;
    Ok((s.elements, s.exhaustive))
}

/// Largest observed `d(fh, gh) / d(f, g)` over `f, g, h ∈ B_d(V)`.
pub fn check_right_lipschitz(metric: &Metric, v_radius: f64, opts: &CheckOptions) -> Result<Certificate> {
    check_positive("V_radius", v_radius)?;
    let group = metric.group().clone();
    let (pts, exhaustive_ball) = ball_points(metric, v_radius, opts.budget().min(4096), opts.seed)?;
    let n = pts.len();
    let exhaustive = exhaustive_ball && n.pow(3) <= 1_000_000;
    let triples: Vec<(usize, usize, usize)> = if exhaustive {
        (0..n)
            .flat_map(|a| (0..n).flat_map(move |b| (0..n).map(move |c| (a, b, c))))
            .collect()
    } else {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 7));
        (0..opts.budget())
            .map(|_| (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n)))
            .collect()
    };
    let ratios: Vec<f64> = triples
        .par_iter()
        .filter_map(|&(a, b, c)| {
            let (f, g, h) = (&pts[a], &pts[b], &pts[c]);
            let base = metric.dist(f, g);
            (base > 0.0).then(|| metric.dist(&group.mul(f, h), &group.mul(g, h)) / base)
        })
        .collect();
    let k = ratios.iter().cloned().fold(1.0, f64::max);
    let mut c = opts.constants();
    c.u_radius = Some(v_radius);
    c.k = Some(k);
    c.sample_budget = triples.len();
    let mut cert = Certificate::new(
        Condition::RightLipschitz,
        if exhaustive {
            Verdict::HoldsExhaustively
        } else {
            Verdict::HoldsOnBudget
        },
        c,
    );
    cert.samples_checked = ratios.len();
    cert.observe("max_ratio", k);
    Ok(cert)
}

/// Candidate radii `V·2^m` for `m = 2, 1, 0, −1, …, −12`.
fn modulus_grid(v: f64) -> Vec<f64> {
    (-12..=2).rev().map(|m| v * 2f64.powi(m)).collect()
}

/// Modulus of continuity of inversion, right-uniformly in the left
/// structure: for `V = O·2^{-j}`, the largest grid radius `U` with
/// `d(g⁻¹f, 1) ≤ U ⇒ d(g f⁻¹, 1) ≤ V` on sampled `g, f ∈ B_d(O)`.
pub fn check_local_sin(metric: &Metric, o_radius: f64, opts: &CheckOptions) -> Result<Certificate> {
    check_positive("O_radius", o_radius)?;
    let group = metric.group().clone();
    let pairs = sample_pairs(metric, o_radius, opts)?;
    // (d(g⁻¹f,1), d(gf⁻¹,1))
    let values: Vec<(f64, f64)> = pairs
        .elements
        .par_iter()
        .map(|(g, f)| {
            let a = metric.dist(f, g);
            let b = metric.norm(&group.mul(g, &group.invert(f)));
            (a, b)
        })
        .collect();
    let mut c = opts.constants();
    c.u_radius = Some(o_radius);
    c.sample_budget = values.len();
    let mut cert = Certificate::new(
        Condition::LocalSin,
        if pairs.exhaustive {
            Verdict::HoldsExhaustively
        } else {
            Verdict::HoldsOnBudget
        },
        c,
    );
    cert.samples_checked = values.len();
    let mut running = f64::INFINITY;
    for j in 0..=8 {
        let v = o_radius / 2f64.powi(j);
        let found = modulus_grid(v)
            .into_iter()
            .find(|&u| values.iter().all(|&(a, b)| !(a <= u && b > v)));
        match found {
            Some(u) => {
                running = running.min(u);
                cert.table.push(ModulusRow {
                    target: v,
                    value: Some(running),
                });
            }
            None => {
                let u = v * 2f64.powi(-12);
                let idx = values.iter().position(|&(a, b)| a <= u && b > v).unwrap();
                let (g, f) = &pairs.elements[idx];
                cert.verdict = Verdict::Refuted;
                cert.witness = Some(Witness {
                    element: group.invert(g),
                    partner: Some(group.invert(f)),
                    power_trace: vec![
                        (-1, metric.dist(g, f)),
                        (1, metric.dist(&group.invert(g), &group.invert(f))),
                    ],
                    violated: format!(
                        "d(g⁻¹f,1) = {} ≤ {u} but d(gf⁻¹,1) = {} > {v}",
                        values[idx].0, values[idx].1
                    ),
                });
                cert.table.push(ModulusRow { target: v, value: None });
                break;
            }
        }
    }
    let worst = cert
        .table
        .iter()
        .filter_map(|r| r.value.map(|u| r.target / u))
        .fold(0.0, f64::max);
    cert.observe("max_target_over_radius", worst);
    cert.notes
        .push("table rows: target = V radius, value = admissible U radius".into());
    Ok(cert)
}

/// Pairs of elements of a ball.
pub(crate) struct Pairs {
    pub elements: Vec<(Element, Element)>,
    pub exhaustive: bool,
}

pub(crate) fn sample_pairs(metric: &Metric, radius: f64, opts: &CheckOptions) -> Result<Pairs> {
    let cap = opts.budget().max(16);
    let (pts, exhaustive_ball) = ball_points(metric, radius, cap.min(4096), opts.seed)?;
    let n = pts.len();
    if exhaustive_ball && n * n <= cap.max(1 << 16) {
        let elements = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| (pts[a].clone(), pts[b].clone()))
            .collect();
        return Ok(Pairs {
            elements,
            exhaustive: true,
        });
    }
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, 11));
    let elements = (0..cap)
        .map(|_| {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            (pts[a].clone(), pts[b].clone())
        })
        .collect();
    Ok(Pairs {
        elements,
        exhaustive: false,
    })
}

/// Groups on which `d(g, 1) = 0` only at the identity are the only ones the
/// checks accept; this helper exposes the identity test for callers.
pub fn is_trivial(group: &Group, g: &Element) -> bool {
    group.is_identity(g)
}
