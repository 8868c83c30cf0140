//! Square roots near the identity, root chains and the one-parameter
//! subgroups they define.
//!
//! A root chain `h₀ = f, h₁, h₂, …` has `h_{i+1}^{2^k} = h_i` and
//! `d(h_{i+1}, 1) ≤ ½·d(h_i, 1)`. Dyadic parameters `α = m / 2^{k·i}` are
//! evaluated as `h_i^m`; real parameters through their base-`2^k` digits.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{sample_pairs, Certificate, CheckOptions, Condition, Constants, ModulusRow, Verdict, Witness};
use crate::error::{Error, Result};
use crate::group::{heis_index, Element, Group, GroupKind};
use crate::le_tol;
use crate::linalg::{self, CMat};
use crate::metric::Metric;

/// `power(h_{i+1}, 2^k)` must reproduce `h_i` to this tolerance.
pub const POWER_TOL: f64 = 1e-10;
/// Absolute slack in the ½-contraction test, the floor of double precision
/// distance evaluations near the identity.
pub const CONTRACTION_ABS_TOL: f64 = 1e-12;
/// Agreement required between two representations of one dyadic parameter.
pub const WELL_DEFINED_TOL: f64 = 1e-10;

/// Which matrix square-root algorithm to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SqrtMethod {
    /// Denman–Beavers with the Schur recurrence as fallback.
    #[default]
    Auto,
    DenmanBeavers,
    Schur,
}

/// A square root of `f` inside `B_d(v_radius)`.
pub fn group_sqrt(metric: &Metric, f: &Element, v_radius: f64) -> Result<Element> {
    group_sqrt_with(metric, f, v_radius, SqrtMethod::Auto)
}

pub fn group_sqrt_with(metric: &Metric, f: &Element, v_radius: f64, method: SqrtMethod) -> Result<Element> {
    let group = metric.group();
    group.validate(f)?;
    let root = match (&group.kind, f) {
        (_, Element::Matrix(m)) => Element::Matrix(matrix_sqrt(group, m, method)?),
        (_, Element::Vector(v)) => Element::Vector(v.iter().map(|x| 0.5 * x).collect()),
        (GroupKind::IntegerLattice { .. }, Element::Residues(r)) => {
            if r.iter().any(|x| x % 2 != 0) {
                return Err(Error::NoRoot(format!("{f} has an odd coordinate")));
            }
            Element::Residues(r.iter().map(|x| x / 2).collect())
        }
        (GroupKind::CyclicTower { p, depth }, Element::Residues(r)) => {
            let m = p.pow(*depth) as i64;
            if p % 2 == 1 {
                // 2 is invertible modulo an odd prime power
                let half = (m + 1) / 2;
                Element::Residues(vec![((r[0] as i128 * half as i128) % m as i128) as i64])
            } else if r[0] % 2 != 0 {
                return Err(Error::NoRoot(format!("{} is odd in Z/{m}", r[0])));
            } else {
                // two roots x/2 and x/2 + m/2; keep the closer one
                let a = Element::Residues(vec![r[0] / 2]);
                let b = Element::Residues(vec![(r[0] / 2 + m / 2) % m]);
                if metric.norm(&b) < metric.norm(&a) {
                    b
                } else {
                    a
                }
            }
        }
        (GroupKind::Involutions { .. }, _) => {
            if !group.is_identity(f) {
                return Err(Error::NoRoot("every square in (Z/2)^n is trivial".into()));
            }
            f.clone()
        }
        (GroupKind::Heisenberg { n }, Element::Residues(r)) => heisenberg_sqrt(*n, r)?,
        (GroupKind::FreeGroup { .. }, Element::Word(w)) => free_sqrt(w)?,
        (GroupKind::FiniteTable { .. }, _) => {
            let all = group.elements().expect("finite table");
            all.into_iter()
                .filter(|g| group.mul(g, g) == *f)
                .map(|g| (metric.norm(&g), g))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, g)| g)
                .ok_or_else(|| Error::NoRoot(format!("{f} is not a square")))?
        }
        _ => {
            return Err(Error::PayloadMismatch {
                group: group.name(),
                detail: format!("{f}"),
            })
        }
    };
    let r = metric.norm(&root);
    if !le_tol(r, v_radius) {
        return Err(Error::NoRoot(format!(
            "square root of {f} has d(g,1) = {r} outside B_d({v_radius})"
        )));
    }
    Ok(root)
}

fn matrix_sqrt(group: &Group, m: &CMat, method: SqrtMethod) -> Result<CMat> {
    if let GroupKind::DiagonalTorus { n } = group.kind {
        let mut out = linalg::identity(n);
        for i in 0..n {
            let z = m[(i, i)].sqrt();
            out[(i, i)] = if z.re < 0.0 { -z } else { z };
        }
        return Ok(out);
    }
    let tol = 1e-12;
    let mut root = match method {
        SqrtMethod::Auto => linalg::sqrtm(m, tol)?,
        SqrtMethod::DenmanBeavers => linalg::sqrtm_denman_beavers(m, tol)?,
        SqrtMethod::Schur => linalg::sqrtm_schur(m, tol)?,
    };
    match group.kind {
        GroupKind::SpecialOrthogonal { .. } => root.iter_mut().for_each(|z| z.im = 0.0),
        GroupKind::Unitary { .. } if linalg::unitarity_defect(&root) > group.unitarity_tol => {
            root = linalg::polar_unitary(&root);
        }
        _ => {}
    }
    Ok(root)
}

/// `√(I + N) = Σ_j C(½, j) N^j` for the nilpotent part, which must come out integral.
fn heisenberg_sqrt(n: usize, r: &[i64]) -> Result<Element> {
    let mut nil = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            nil[i][j] = r[heis_index(n, i, j)] as f64;
        }
    }
    let mul = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut c = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                if a[i][k] != 0.0 {
                    for j in 0..n {
                        c[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
        }
        c
    };
    let mut acc = vec![vec![0.0; n]; n];
    let mut term = nil.clone();
    let mut coef = 0.5; // C(½, 1)
    for j in 1..n {
        for a in 0..n {
            for b in 0..n {
                acc[a][b] += coef * term[a][b];
            }
        }
        coef *= (0.5 - j as f64) / (j as f64 + 1.0);
        term = mul(&term, &nil);
    }
    let mut out = vec![0i64; r.len()];
    for i in 0..n {
        for j in i + 1..n {
            let x = acc[i][j];
            let k = x.round();
            if (x - k).abs() > 1e-9 {
                return Err(Error::NoRoot(format!(
                    "square root has non-integral entry {x} at ({i},{j})"
                )));
            }
            out[heis_index(n, i, j)] = k as i64;
        }
    }
    Ok(Element::Residues(out))
}

/// Roots in a free group are unique: strip the conjugating prefix and
/// split the cyclically reduced core in half.
fn free_sqrt(w: &[i32]) -> Result<Element> {
    let mut lo = 0;
    let mut hi = w.len();
    while hi - lo >= 2 && w[lo] == -w[hi - 1] {
        lo += 1;
        hi -= 1;
    }
    let core = &w[lo..hi];
    let h = core.len() / 2;
    if !core.len().is_multiple_of(2) || core[..h] != core[h..] {
        return Err(Error::NoRoot("word is not a square".into()));
    }
    let mut out: Vec<i32> = w[..lo].to_vec();
    out.extend_from_slice(&core[..h]);
    out.extend_from_slice(&w[hi..]);
    Ok(Element::Word(out))
}

/// A dyadic parameter `m / 2^{k·i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DyadicParam {
    pub m: i64,
    pub i: u32,
}

impl DyadicParam {
    pub fn new(m: i64, i: u32) -> Self {
        Self { m, i }
    }

    pub fn value(&self, k: u32) -> f64 {
        self.m as f64 / 2f64.powi((k * self.i) as i32)
    }

    /// Lowest-depth representative: `i = 0` or `2^k ∤ m`.
    pub fn canonical(mut self, k: u32) -> Self {
        let base = 1i64 << k;
        while self.i > 0 && self.m % base == 0 {
            self.m /= base;
            self.i -= 1;
        }
        self
    }

    /// The same value written at depth `j ≥ i`.
    pub fn at_depth(&self, k: u32, j: u32) -> Option<Self> {
        let shift = k.checked_mul(j.checked_sub(self.i)?)?;
        let m = self.m.checked_mul(1i64.checked_shl(shift)?)?;
        Some(Self { m, i: j })
    }

    /// Nearest parameter to `alpha` at depth `i` (ties away from zero).
    pub fn nearest(alpha: f64, k: u32, i: u32) -> Self {
        Self {
            m: (alpha * 2f64.powi((k * i) as i32)).round() as i64,
            i,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootChain {
    pub base: Element,
    pub k: u32,
    pub depth: usize,
    pub epsilon: f64,
    /// `h₀, …, h_depth`.
    pub chain: Vec<Element>,
    /// `(i, d(h_i, 1))`.
    pub contraction_log: Vec<(usize, f64)>,
    pub metric_label: String,
}

/// Builds `h₀ = f, …, h_depth`, each step taking `k` successive principal
/// square roots. Fails if a root does not exist, if `power(h_{i+1}, 2^k)`
/// drifts from `h_i`, or if the ½-contraction fails (ε too large or `k`
/// too small for the metric).
pub fn build_root_chain(metric: &Metric, f: &Element, k: u32, depth: usize, epsilon: f64) -> Result<RootChain> {
    build_root_chain_with(metric, f, k, depth, epsilon, SqrtMethod::Auto)
}

pub fn build_root_chain_with(
    metric: &Metric,
    f: &Element,
    k: u32,
    depth: usize,
    epsilon: f64,
    method: SqrtMethod,
) -> Result<RootChain> {
    if k == 0 || k > 16 {
        return Err(Error::InvalidArgument(format!("k must be in 1..=16, got {k}")));
    }
    let group = metric.group();
    let d0 = metric.norm(f);
    if !le_tol(d0, epsilon) {
        return Err(Error::InvalidArgument(format!("d(f,1) = {d0} exceeds ε = {epsilon}")));
    }
    let mut chain = vec![f.clone()];
    let mut log = vec![(0, d0)];
    for step in 1..=depth {
        let prev = &chain[step - 1];
        let mut h = prev.clone();
        for _ in 0..k {
            h = group_sqrt_with(metric, &h, epsilon, method)?;
        }
        let back = group.power(&h, 1 << k);
        let drift = metric.dist(&back, prev);
        if !(drift <= POWER_TOL) {
            return Err(Error::NumericFailure(format!(
                "power(h_{step}, 2^{k}) differs from h_{} by {drift:.3e}",
                step - 1
            )));
        }
        let d_prev = log[step - 1].1;
        let d_new = metric.norm(&h);
        if !(d_new <= 0.5 * d_prev + CONTRACTION_ABS_TOL) {
            return Err(Error::Contraction {
                step,
                ratio: d_new / d_prev,
            });
        }
        chain.push(h);
        log.push((step, d_new));
    }
    Ok(RootChain {
        base: f.clone(),
        k,
        depth,
        epsilon,
        chain,
        contraction_log: log,
        metric_label: metric.label().to_string(),
    })
}

impl RootChain {
    /// Wraps an explicit sequence; only the power relation is checked, so
    /// non-principal or non-contracting chains can be examined.
    pub fn assemble(metric: &Metric, k: u32, chain: Vec<Element>, epsilon: f64) -> Result<Self> {
        let group = metric.group();
        if chain.is_empty() {
            return Err(Error::InvalidArgument("empty chain".into()));
        }
        for i in 1..chain.len() {
            let drift = metric.dist(&group.power(&chain[i], 1 << k), &chain[i - 1]);
            if !(drift <= POWER_TOL) {
                return Err(Error::NumericFailure(format!(
                    "power(h_{i}, 2^{k}) differs from h_{} by {drift:.3e}",
                    i - 1
                )));
            }
        }
        let contraction_log = chain.iter().enumerate().map(|(i, h)| (i, metric.norm(h))).collect();
        Ok(Self {
            base: chain[0].clone(),
            k,
            depth: chain.len() - 1,
            epsilon,
            chain,
            contraction_log,
            metric_label: metric.label().to_string(),
        })
    }

    /// Largest `d(h_{i+1}, 1) / d(h_i, 1)` along the chain.
    pub fn max_contraction_ratio(&self) -> f64 {
        self.contraction_log
            .windows(2)
            .filter(|w| w[0].1 > 0.0)
            .map(|w| w[1].1 / w[0].1)
            .fold(0.0, f64::max)
    }

    /// `h^α = h_i^m`, cross-checked against the representation one level deeper.
    pub fn eval_dyadic(&self, group: &Group, metric: &Metric, alpha: DyadicParam) -> Result<Element> {
        let i = alpha.i as usize;
        if i > self.depth {
            return Err(Error::DepthExceeded {
                needed: i,
                depth: self.depth,
            });
        }
        let g = group.power(&self.chain[i], alpha.m);
        if i < self.depth {
            if let Some(deeper) = alpha.at_depth(self.k, alpha.i + 1) {
                let alt = group.power(&self.chain[i + 1], deeper.m);
                let gap = metric.dist(&g, &alt);
                if !(gap <= WELL_DEFINED_TOL) {
                    return Err(Error::NumericFailure(format!(
                        "h^α differs between depths {i} and {} by {gap:.3e}",
                        i + 1
                    )));
                }
            }
        }
        Ok(g)
    }

    /// Base-`2^k` digits of `|α|` at depth `p`: `round(|α|·2^{kp}) = Σ a_j 2^{k(p−j)}`,
    /// with the integer part returned separately.
    pub fn digits(&self, alpha: f64, p: usize) -> (i64, Vec<i64>) {
        let base = 1i64 << self.k;
        let scaled = DyadicParam::nearest(alpha.abs(), self.k, p as u32).m;
        let mut digits = vec![0i64; p];
        let mut rest = scaled;
        for j in (0..p).rev() {
            digits[j] = rest % base;
            rest /= base;
        }
        (rest, digits)
    }

    /// `h^α` at the best dyadic approximant of `α` at depth `p`, assembled
    /// from digits as `h₀^{a₀}·h₁^{a₁}⋯h_p^{a_p}` (inverted for `α < 0`).
    pub fn eval_at_depth(&self, group: &Group, alpha: f64, p: usize) -> Result<Element> {
        if p > self.depth {
            return Err(Error::DepthExceeded {
                needed: p,
                depth: self.depth,
            });
        }
        let (whole, digits) = self.digits(alpha, p);
        let mut g = group.power(&self.chain[0], whole);
        for (j, &a) in digits.iter().enumerate() {
            if a != 0 {
                g = group.mul(&g, &group.power(&self.chain[j + 1], a));
            }
        }
        Ok(if alpha < 0.0 { group.invert(&g) } else { g })
    }

    /// Depth needed for `tol`: rounding at depth `i` moves `α` by less than
    /// `2^{-k·i}`, which moves `h^α` by less than `2^{k−i}·ε`.
    pub fn needed_depth(&self, tol: f64) -> usize {
        (self.k as f64 + (self.epsilon / tol).log2()).ceil().max(0.0) as usize
    }

    /// `h^α` within `tol` of the one-parameter subgroup, for `|α| ≤ 1`.
    pub fn eval_real(&self, group: &Group, alpha: f64, tol: f64) -> Result<Element> {
        if !(alpha.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!("α = {alpha} outside [−1, 1]")));
        }
        let needed = self.needed_depth(tol);
        if needed > self.depth {
            return Err(Error::DepthExceeded {
                needed,
                depth: self.depth,
            });
        }
        self.eval_at_depth(group, alpha, self.depth)
    }

    /// `(α, d(h^α, 1), bound)` for every grid point where the digit bound
    /// `d(h^α, 1) ≤ Σ a_j·d(h_j, 1) ≤ 2^k·ε` or the tail bound
    /// `α < 2^{-k·i} ⇒ d(h^α, 1) < 2^{k−i}·ε` fails.
    pub fn digit_bound_violations(&self, metric: &Metric, alphas: &[f64]) -> Vec<(f64, f64, f64)> {
        let group = metric.group();
        let cap = 2f64.powi(self.k as i32) * self.epsilon;
        alphas
            .par_iter()
            .flat_map_iter(|&a| {
                let mut bad = Vec::new();
                let frac = a.abs().fract();
                if frac == 0.0 && a != 0.0 {
                    // |α| = 1 is h₀ itself
                    let d = metric.norm(&self.chain[0]);
                    if !le_tol(d, self.epsilon) {
                        bad.push((a, d, self.epsilon));
                    }
                    return bad;
                }
                let g = match self.eval_at_depth(group, frac, self.depth) {
                    Ok(g) => g,
                    Err(_) => return bad,
                };
                let d = metric.norm(&g);
                let (_, digits) = self.digits(frac, self.depth);
                let digit_sum: f64 = digits
                    .iter()
                    .enumerate()
                    .map(|(j, &aj)| aj as f64 * self.contraction_log[j + 1].1)
                    .sum();
                // the digit sum is attained exactly by homogeneous metrics, so
                // rounding in the product needs the builder's absolute slack
                if !le_tol(d, digit_sum + CONTRACTION_ABS_TOL) || !le_tol(digit_sum, cap) {
                    bad.push((a, d, digit_sum.min(cap)));
                }
                // smallest i with the dyadic approximant below 2^{-k·i}
                let lead = digits.iter().position(|&x| x != 0).unwrap_or(self.depth);
                let tail = 2f64.powi(self.k as i32 - lead as i32) * self.epsilon;
                if d > 0.0 && !(d < tail) {
                    bad.push((a, d, tail));
                }
                bad
            })
            .collect()
    }
}

/// Modulus of injectivity of squaring on `B_d(V)`: for `U = V·2^{-j}`, the
/// largest grid radius `W` with `d(g², f²) ≤ W ⇒ d(g, f) ≤ U` on sampled
/// pairs. Matrix groups containing `−Id` are also probed with the pairs
/// `(g, −g)`, which square to the same element.
pub fn check_sqrt_uniform_continuity(metric: &Metric, v_radius: f64, opts: &CheckOptions) -> Result<Certificate> {
    if !(v_radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "V_radius must be positive, got {v_radius}"
        )));
    }
    let group = metric.group().clone();
    let mut pairs = sample_pairs(metric, v_radius, opts)?;
    if let Some(neg) = minus_identity(&group) {
        let extra: Vec<(Element, Element)> = pairs
            .elements
            .iter()
            .map(|(g, _)| (g.clone(), group.mul(g, &neg)))
            .filter(|(_, f)| metric.norm(f) <= v_radius)
            .collect();
        pairs.elements.extend(extra);
    }
    let values: Vec<(f64, f64)> = pairs
        .elements
        .par_iter()
        .map(|(g, f)| {
            let a = metric.dist(g, f);
            let b = metric.dist(&group.mul(g, g), &group.mul(f, f));
            (a, b)
        })
        .collect();
    let constants = Constants {
        u_radius: Some(v_radius),
        sample_budget: values.len(),
        seed: opts.seed,
        ..Constants::default()
    };
    let mut cert = Certificate {
        condition: Condition::SqrtContinuity,
        verdict: if pairs.exhaustive {
            Verdict::HoldsExhaustively
        } else {
            Verdict::HoldsOnBudget
        },
        constants,
        samples_checked: values.len(),
        observed: Default::default(),
        table: Vec::new(),
        witness: None,
        notes: vec!["table rows: target = U radius, value = admissible W radius".into()],
    };
    let pair_witness = |idx: usize, why: String| {
        let (g, f) = &pairs.elements[idx];
        Witness {
            element: g.clone(),
            partner: Some(f.clone()),
            power_trace: vec![(1, values[idx].0), (2, values[idx].1)],
            violated: why,
        }
    };
    let floor = INJECTIVITY_FLOOR;
    if let Some(idx) = values.iter().position(|&(a, b)| b <= 1e-9 && a > floor) {
        cert.verdict = Verdict::Refuted;
        cert.witness = Some(pair_witness(
            idx,
            format!(
                "squaring is not injective: d(g²,f²) = {} but d(g,f) = {}",
                values[idx].1, values[idx].0
            ),
        ));
    }
    let mut worst: f64 = 0.0;
    for j in 0..=8 {
        let u = v_radius / 2f64.powi(j);
        let found = (-12..=2)
            .rev()
            .map(|m| u * 2f64.powi(m))
            .find(|&w| values.iter().all(|&(a, b)| !(b <= w && a > u)));
        match found {
            Some(w) => {
                worst = worst.max(u / w);
                cert.table.push(ModulusRow {
                    target: u,
                    value: Some(w),
                });
            }
            None => {
                cert.table.push(ModulusRow { target: u, value: None });
                if cert.witness.is_none() {
                    let w = u * 2f64.powi(-12);
                    let idx = values.iter().position(|&(a, b)| b <= w && a > u).unwrap();
                    cert.verdict = Verdict::Refuted;
                    cert.witness = Some(pair_witness(
                        idx,
                        format!(
                            "d(g²,f²) = {} ≤ {w} but d(g,f) = {} > {u}",
                            values[idx].1, values[idx].0
                        ),
                    ));
                }
            }
        }
    }
    cert.observe("max_target_over_radius", worst);
    Ok(cert)
}

/// Pairs closer than this are treated as equal by the injectivity test.
pub const INJECTIVITY_FLOOR: f64 = 1e-6;

fn minus_identity(group: &Group) -> Option<Element> {
    let n = group.matrix_dim()?;
    let ok = match group.kind {
        GroupKind::Unitary { .. } | GroupKind::DiagonalTorus { .. } | GroupKind::GeneralLinear { .. } => true,
        GroupKind::SpecialOrthogonal { .. } => n % 2 == 0,
        _ => false,
    };
    ok.then(|| Element::Matrix(-linalg::identity(n)))
}

/// Outcome of comparing two chains with the same base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub agree: bool,
    pub max_difference: f64,
    /// First level `ℓ` with `h_ℓ ≠ g_ℓ`.
    pub first_divergence: Option<usize>,
    /// Some chain element lies outside `B_d(U)`, so the uniqueness argument does not apply.
    pub precondition_violated: bool,
    pub notes: Vec<String>,
}

/// Agreement tolerance for [`check_uniqueness`].
pub const UNIQUENESS_TOL: f64 = 1e-9;

/// Compares two chains level by level; agreement at every level means the
/// dyadic evaluations agree at every common parameter, since `h^{m/2^{ki}} = h_i^m`.
pub fn check_uniqueness(metric: &Metric, a: &RootChain, b: &RootChain, u_radius: f64) -> Result<UniquenessReport> {
    if a.k != b.k {
        return Err(Error::InvalidArgument(format!(
            "chains use k = {} and k = {}",
            a.k, b.k
        )));
    }
    let mut notes = Vec::new();
    let base_gap = metric.dist(&a.base, &b.base);
    if base_gap > UNIQUENESS_TOL {
        return Err(Error::InvalidArgument(format!(
            "chains have different bases ({base_gap:.3e} apart)"
        )));
    }
    let depth = a.depth.min(b.depth);
    let mut max_difference: f64 = 0.0;
    let mut first_divergence = None;
    let mut precondition_violated = false;
    for i in 0..=depth {
        let gap = metric.dist(&a.chain[i], &b.chain[i]);
        max_difference = max_difference.max(gap);
        if gap > UNIQUENESS_TOL && first_divergence.is_none() {
            first_divergence = Some(i);
        }
        for (name, c) in [("first", a), ("second", b)] {
            let r = metric.norm(&c.chain[i]);
            if r > u_radius && !precondition_violated {
                precondition_violated = true;
                notes.push(format!("{name} chain leaves B_d({u_radius}) at level {i} (d = {r})"));
            }
        }
    }
    if let Some(l) = first_divergence {
        notes.push(format!("chains diverge at level {l}"));
    }
    Ok(UniquenessReport {
        agree: first_divergence.is_none(),
        max_difference,
        first_divergence,
        precondition_violated,
        notes,
    })
}

/// Sanity check for density of squares near the identity: every sampled
/// `f ∈ B_d(radius)` has a root whose square gives back `f`. Returns the
/// number of samples without one.
pub fn square_density_failures(metric: &Metric, radius: f64, count: usize, seed: u64) -> Result<usize> {
    let group = metric.group();
    let s = crate::sample::sample_ball(metric, radius, count, seed)?;
    Ok(s.elements
        .par_iter()
        .filter(|f| match group_sqrt(metric, f, f64::INFINITY) {
            Ok(g) => metric.dist(&group.mul(&g, &g), f) > POWER_TOL,
            Err(_) => true,
        })
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm, max_abs_diff, random_skew_hermitian};
    use crate::metric::{angular_metric, native_metric};
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rot(theta: f64) -> Element {
        let (s, c) = theta.sin_cos();
        let m = CMat::from_row_slice(2, 2, &[c, -s, s, c].map(|x| Complex64::new(x, 0.0)));
        Element::Matrix(m)
    }

    fn unit_a(n: usize, scale: f64, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_skew_hermitian(n, &mut rng) * Complex64::new(scale, 0.0)
    }

    #[test]
    fn rotation_halves() {
        let so2 = Group::special_orthogonal(2);
        let d = native_metric(&so2).unwrap();
        let g = group_sqrt(&d, &rot(0.8), 1.0).unwrap();
        assert!(so2.approx_eq(&g, &rot(0.4), 1e-14));
        assert!(group_sqrt(&d, &so2.identity(), 1.0).unwrap() == so2.identity());
    }

    #[test]
    fn exp_root_matches_half_exponent() {
        let u2 = Group::unitary(2);
        let d = native_metric(&u2).unwrap();
        let a = unit_a(2, 0.2, 5);
        let g = group_sqrt(&d, &Element::Matrix(expm(&a)), 1.0).unwrap();
        let half = expm(&(a * Complex64::new(0.5, 0.0)));
        assert!(max_abs_diff(g.as_matrix().unwrap(), &half) < 1e-10);
    }

    #[test]
    fn discrete_roots() {
        let z = Group::integer_lattice(1);
        let d = native_metric(&z).unwrap();
        assert!(matches!(group_sqrt(&d, &Element::int(3), 10.0), Err(Error::NoRoot(_))));
        assert_eq!(group_sqrt(&d, &Element::int(6), 10.0).unwrap(), Element::int(3));
        let z9 = Group::cyclic_tower(3, 2);
        let d9 = native_metric(&z9).unwrap();
        let r = group_sqrt(&d9, &Element::Residues(vec![4]), 1.0).unwrap();
        assert_eq!(z9.mul(&r, &r), Element::Residues(vec![4]));
        let f2 = Group::free_group(2);
        let df = native_metric(&f2).unwrap();
        // b a B squares to b a a B, a conjugated square
        let s = Element::word("baB").unwrap();
        let sq = f2.mul(&s, &s);
        assert_eq!(sq, Element::word("baaB").unwrap());
        assert_eq!(group_sqrt(&df, &sq, 10.0).unwrap(), s);
        assert!(group_sqrt(&df, &Element::word("ab").unwrap(), 10.0).is_err());
        let h = Group::heisenberg(3);
        let dh = native_metric(&h).unwrap();
        let g = Element::Residues(vec![1, 2, 1]);
        let g2 = h.mul(&g, &g);
        assert_eq!(group_sqrt(&dh, &g2, 100.0).unwrap(), g);
    }

    #[test]
    fn line_chain_halves() {
        let r = Group::real_vector(1);
        let d = native_metric(&r).unwrap();
        let c = build_root_chain(&d, &Element::scalar(1.0), 1, 4, 1.0).unwrap();
        let got: Vec<f64> = c.contraction_log.iter().map(|x| x.1).collect();
        assert_eq!(got, vec![1.0, 0.5, 0.25, 0.125, 0.0625]);
        assert_eq!(c.max_contraction_ratio(), 0.5);
    }

    #[test]
    fn integer_chain_has_no_root() {
        let z = Group::integer_lattice(1);
        let d = native_metric(&z).unwrap();
        assert!(matches!(
            build_root_chain(&d, &Element::int(1), 1, 3, 1.0),
            Err(Error::NoRoot(_))
        ));
    }

    #[test]
    fn unitary_chain_against_exponential() {
        let u2 = Group::unitary(2);
        let d = native_metric(&u2).unwrap();
        let a = unit_a(2, 0.1, 9);
        let f = Element::Matrix(expm(&a));
        let c = build_root_chain(&d, &f, 2, 10, 0.1).unwrap();
        for (i, h) in c.chain.iter().enumerate() {
            let want = expm(&(&a * Complex64::new(0.25f64.powi(i as i32), 0.0)));
            assert!(max_abs_diff(h.as_matrix().unwrap(), &want) < 1e-9);
        }
        let half = c.eval_dyadic(&u2, &d, DyadicParam::new(2, 1)).unwrap();
        let want = expm(&(&a * Complex64::new(0.5, 0.0)));
        assert!(max_abs_diff(half.as_matrix().unwrap(), &want) < 1e-9);
        assert_eq!(c.eval_dyadic(&u2, &d, DyadicParam::new(1, 0)).unwrap(), f);
        assert!(u2.is_identity(&c.eval_dyadic(&u2, &d, DyadicParam::new(0, 3)).unwrap()));
    }

    #[test]
    fn chord_metric_needs_two_roots_per_step() {
        // 1/(2cos(θ/4)) > 1/2 for the chord distance, exactly 1/2 for the angle
        let u2 = Group::unitary(2);
        let a = unit_a(2, 0.1, 3);
        let f = Element::Matrix(expm(&a));
        let chord = native_metric(&u2).unwrap();
        assert!(matches!(
            build_root_chain(&chord, &f, 1, 5, 0.1),
            Err(Error::Contraction { step: 1, .. })
        ));
        let ang = angular_metric(&u2).unwrap();
        let c = build_root_chain(&ang, &f, 1, 20, 0.1).unwrap();
        assert!(c.max_contraction_ratio() <= 0.5 + 1e-9);
    }

    #[test]
    fn eval_real_homomorphism_and_inverse() {
        let u2 = Group::unitary(2);
        let d = angular_metric(&u2).unwrap();
        let a = unit_a(2, 0.05, 1);
        let f = Element::Matrix(expm(&a));
        let c = build_root_chain(&d, &f, 1, 30, 0.05).unwrap();
        let inv = c.eval_real(&u2, -1.0, 1e-9).unwrap();
        assert!(d.dist(&inv, &u2.invert(&f)) < 1e-12);
        let x = c.eval_real(&u2, 0.3, 1e-9).unwrap();
        let y = c.eval_real(&u2, 0.45, 1e-9).unwrap();
        let z = c.eval_real(&u2, 0.75, 1e-9).unwrap();
        assert!(d.dist(&u2.mul(&x, &y), &z) < 1e-9);
        assert!(matches!(c.eval_real(&u2, 0.3, 1e-15), Err(Error::DepthExceeded { .. })));
    }

    #[test]
    fn digit_bounds_hold_on_grid() {
        let u3 = Group::unitary(3);
        let d = angular_metric(&u3).unwrap();
        let a = unit_a(3, 0.08, 17);
        let f = Element::Matrix(expm(&a));
        let c = build_root_chain(&d, &f, 1, 16, 0.08).unwrap();
        let grid: Vec<f64> = (-20..=20).map(|j| j as f64 / 20.0).collect();
        assert!(c.digit_bound_violations(&d, &grid).is_empty());
    }

    #[test]
    fn dyadic_canonical_form() {
        assert_eq!(DyadicParam::new(12, 3).canonical(1), DyadicParam::new(3, 1));
        assert_eq!(DyadicParam::new(16, 2).canonical(2), DyadicParam::new(1, 0));
        assert_eq!(DyadicParam::new(3, 1).at_depth(2, 2), Some(DyadicParam::new(12, 2)));
    }

    #[test]
    fn sqrt_modulus_on_line_is_double() {
        let r = Group::real_vector(1);
        let d = native_metric(&r).unwrap();
        let opts = CheckOptions {
            per_shell: 64,
            shells: 8,
            ..CheckOptions::default()
        };
        let c = check_sqrt_uniform_continuity(&d, 1.0, &opts).unwrap();
        assert!(c.verdict.holds());
        for row in &c.table {
            assert_eq!(row.value, Some(2.0 * row.target));
        }
    }

    #[test]
    fn large_circle_ball_breaks_injectivity() {
        let so2 = Group::special_orthogonal(2);
        let d = native_metric(&so2).unwrap();
        let c = check_sqrt_uniform_continuity(&d, 3.0, &CheckOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Refuted);
        let w = c.witness.unwrap();
        w.replay(&d).unwrap();
        assert!(w.power_trace[1].1 <= 1e-9);
    }

    #[test]
    fn non_principal_chain_diverges_at_level_one() {
        let so2 = Group::special_orthogonal(2);
        let d = angular_metric(&so2).unwrap();
        let theta = 0.4;
        let good = build_root_chain(&d, &rot(theta), 1, 6, 0.5).unwrap();
        let mut bad = vec![rot(theta), rot(theta / 2.0 + std::f64::consts::PI)];
        for i in 2..=6 {
            bad.push(rot(theta / 2f64.powi(i)));
        }
        // h_2 = rot(θ/4) squares to rot(θ/2), not to rot(θ/2 + π)
        assert!(RootChain::assemble(&d, 1, bad.clone(), 0.5).is_err());
        bad.truncate(2);
        let bad = RootChain::assemble(&d, 1, bad, 0.5).unwrap();
        let rep = check_uniqueness(&d, &good, &bad, 0.5).unwrap();
        assert!(!rep.agree);
        assert_eq!(rep.first_divergence, Some(1));
        assert!(rep.precondition_violated);
    }

    #[test]
    fn square_roots_cover_small_ball() {
        let u2 = Group::unitary(2);
        let d = native_metric(&u2).unwrap();
        assert_eq!(square_density_failures(&d, 0.5, 64, 2).unwrap(), 0);
    }
}
