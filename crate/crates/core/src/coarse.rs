//! Word metrics, path refinement of a metric over a generating set,
//! quasi-isometry fits and the bi-Lipschitz constant of a min+max pair.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Element, ElementKey, Group};
use crate::le_tol;
use crate::metric::{Exactness, Metric, MetricMeta, Provenance};
use crate::oneparam::group_sqrt;
use crate::sample::{derive_seed, sample_ball};

/// Default cap on settled nodes for searches in infinite groups.
pub const SEARCH_NODE_CAP: usize = 1 << 18;

/// A generating set `V`, either listed or given as a metric ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GeneratingSet {
    Explicit { elements: Vec<Element> },
    Ball { radius: f64 },
}

impl GeneratingSet {
    /// The symmetric closure of `V` without the identity, sorted for
    /// determinism. Balls are enumerated on discrete groups only.
    pub fn resolve(&self, metric: &Metric) -> Result<Vec<Element>> {
        let group = metric.group();
        let raw = match self {
            GeneratingSet::Explicit { elements } => {
                for e in elements {
                    group.validate(e)?;
                }
                elements.clone()
            }
            GeneratingSet::Ball { radius } => {
                if !group.is_discrete() {
                    return Err(Error::InvalidArgument(format!(
                        "ball generating set on {} cannot be listed",
                        group.name()
                    )));
                }
                let s = sample_ball(metric, *radius, usize::MAX, 0)?;
                s.elements
            }
        };
        Ok(symmetric_closure(group, &raw))
    }
}

/// `V ∪ V⁻¹` minus the identity, deduplicated by payload.
pub fn symmetric_closure(group: &Group, v: &[Element]) -> Vec<Element> {
    let mut out: Vec<Element> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for g in v.iter().flat_map(|g| [g.clone(), group.invert(g)]) {
        if group.is_identity(&g) {
            continue;
        }
        match g.key() {
            Some(k) => {
                if seen.insert(k) {
                    out.push(g);
                }
            }
            None => {
                if !out.iter().any(|h| group.approx_eq(h, &g, 0.0)) {
                    out.push(g);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WordDistance {
    Finite(u64),
    /// The target is not in the subgroup generated by `V`.
    Unreachable,
    /// The search hit its node cap; the true value is at least this.
    LowerBound(u64),
}

/// A value from a truncated shortest-path search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathValue {
    pub value: f64,
    pub exactness: Exactness,
}

struct Entry {
    dist: f64,
    seq: u64,
    elem: Element,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // min-heap on (dist, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.seq.cmp(&self.seq))
    }
}

enum Found {
    Settled(f64),
    Unreachable,
    Capped(f64),
}

/// Dijkstra from the identity over right multiplication by weighted
/// generators, extended lazily as queries arrive. Settled values are exact.
struct Search {
    group: Group,
    gens: Vec<(Element, f64)>,
    settled: HashMap<ElementKey, f64>,
    best: HashMap<ElementKey, f64>,
    heap: BinaryHeap<Entry>,
    seq: u64,
    cap: usize,
    frontier: f64,
}

impl Search {
    fn new(group: Group, gens: Vec<(Element, f64)>, cap: usize) -> Self {
        let id = group.identity();
        let mut best = HashMap::new();
        best.insert(id.key().expect("discrete group"), 0.0);
        let mut heap = BinaryHeap::new();
        heap.push(Entry {
            dist: 0.0,
            seq: 0,
            elem: id,
        });
        Self {
            group,
            gens,
            settled: HashMap::new(),
            best,
            heap,
            seq: 1,
            cap,
            frontier: 0.0,
        }
    }

    fn query(&mut self, key: &ElementKey) -> Found {
        loop {
            if let Some(&d) = self.settled.get(key) {
                return Found::Settled(d);
            }
            if self.settled.len() >= self.cap {
                return Found::Capped(self.frontier);
            }
            let Some(Entry { dist, elem, .. }) = self.heap.pop() else {
                return Found::Unreachable;
            };
            let k = elem.key().unwrap();
            if self.settled.contains_key(&k) {
                continue;
            }
            self.settled.insert(k, dist);
            self.frontier = dist;
            for (s, w) in &self.gens {
                let h = self.group.mul(&elem, s);
                let hk = h.key().unwrap();
                if self.settled.contains_key(&hk) {
                    continue;
                }
                let nd = dist + w;
                if self.best.get(&hk).is_none_or(|&b| nd < b) {
                    self.best.insert(hk, nd);
                    self.heap.push(Entry {
                        dist: nd,
                        seq: self.seq,
                        elem: h,
                    });
                    self.seq += 1;
                }
            }
        }
    }

    /// Settles every node up to distance `radius` (or the cap).
    fn settle_ball(&mut self, radius: f64) -> bool {
        while let Some(top) = self.heap.peek() {
            if top.dist > radius || self.settled.len() >= self.cap {
                return self.settled.len() < self.cap;
            }
            let key = top.elem.key().unwrap();
            let _ = self.query(&key);
        }
        true
    }
}

/// `ρ_V(g, f)`: least `k` with `g = f·v₁⋯v_k`, `v_i ∈ V^±`.
pub fn word_metric(group: &Group, v: &[Element], g: &Element, f: &Element, max_nodes: usize) -> Result<WordDistance> {
    if !group.is_discrete() {
        return Err(Error::InvalidArgument(format!(
            "word search on continuous {}",
            group.name()
        )));
    }
    let gens = symmetric_closure(group, v).into_iter().map(|s| (s, 1.0)).collect();
    let target = group.quotient(g, f).key().unwrap();
    let mut search = Search::new(group.clone(), gens, max_nodes);
    Ok(match search.query(&target) {
        Found::Settled(d) => WordDistance::Finite(d as u64),
        Found::Unreachable => WordDistance::Unreachable,
        Found::Capped(front) => WordDistance::LowerBound(front as u64),
    })
}

/// `ρ_V` as a metric handle on a discrete group. Queries beyond the node
/// cap return the search frontier (a lower bound).
pub fn word_metric_handle(group: &Group, v: &[Element], max_nodes: usize) -> Result<Metric> {
    let gens: Vec<(Element, f64)> = symmetric_closure(group, v).into_iter().map(|s| (s, 1.0)).collect();
    let mut meta = MetricMeta::new(
        format!("word({}, |V| = {})", group.name(), gens.len()),
        Provenance::Word,
    );
    meta.constants.insert("node_cap".into(), max_nodes as f64);
    lazy_search_metric(group, gens, max_nodes, meta)
}

fn lazy_search_metric(group: &Group, gens: Vec<(Element, f64)>, cap: usize, meta: MetricMeta) -> Result<Metric> {
    if !group.is_discrete() {
        return Err(Error::InvalidArgument(format!(
            "graph search on continuous {}",
            group.name()
        )));
    }
    if gens.is_empty() && group.order() != Some(1) {
        return Err(Error::InvalidArgument("empty generating set".into()));
    }
    let search = Arc::new(Mutex::new(Search::new(group.clone(), gens, cap)));
    Ok(Metric::from_norm(group.clone(), meta, move |g| {
        let key = g.key().expect("discrete payload");
        match search.lock().expect("search lock").query(&key) {
            Found::Settled(d) => d,
            Found::Capped(front) => front,
            Found::Unreachable => f64::INFINITY,
        }
    }))
}

/// `∂(g, f) = inf Σ d(v_i, 1)` over factorisations `g = f·v₁⋯v_n`, `v_i ∈ V`.
///
/// On discrete groups this is a lazily extended Dijkstra search and exact up
/// to the node cap. On continuous groups with a ball `V = B_d(r)` the value
/// is the upper bound `min_j 2^j·d(g^{1/2^j}, 1)` over roots inside `V`.
pub fn path_metric(d: &Metric, v: &GeneratingSet, max_nodes: usize) -> Result<Metric> {
    let group = d.group().clone();
    let mut meta = MetricMeta::new(format!("path({})", d.label()), Provenance::PathRefined);
    if group.is_discrete() {
        let gens: Vec<(Element, f64)> = v
            .resolve(d)?
            .into_iter()
            .map(|s| {
                let w = d.norm(&s);
                (s, w)
            })
            .collect();
        if gens.iter().any(|(_, w)| !(*w > 0.0)) {
            return Err(Error::MetricInvariant("generator with zero weight".into()));
        }
        meta.constants.insert("node_cap".into(), max_nodes as f64);
        meta.constants.insert(
            "max_generator_weight".into(),
            gens.iter().map(|g| g.1).fold(0.0, f64::max),
        );
        return lazy_search_metric(&group, gens, max_nodes, meta);
    }
    let GeneratingSet::Ball { radius } = *v else {
        return Err(Error::InvalidArgument(
            "continuous groups need a ball generating set".into(),
        ));
    };
    meta.exactness = Exactness::UpperBound;
    meta.constants.insert("v_radius".into(), radius);
    let inner = d.clone();
    Ok(Metric::from_norm(group, meta, move |g| {
        continuous_path_bound(&inner, g, radius)
    }))
}

fn continuous_path_bound(d: &Metric, g: &Element, radius: f64) -> f64 {
    let group = d.group();
    if group.is_identity(g) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    let mut root = g.clone();
    let mut scale = 1.0;
    let mut inside_levels = 0;
    for _ in 0..64 {
        let r = d.norm(&root);
        if r <= radius {
            best = best.min(scale * r);
            inside_levels += 1;
            if inside_levels > 20 {
                break;
            }
        }
        match group_sqrt(d, &root, f64::INFINITY) {
            Ok(h) => root = h,
            Err(_) => break,
        }
        scale *= 2.0;
    }
    best
}

/// Exact path distance with its exactness flag (discrete groups).
pub fn path_distance(d: &Metric, v: &GeneratingSet, g: &Element, f: &Element, max_nodes: usize) -> Result<PathValue> {
    let group = d.group();
    if !group.is_discrete() {
        let GeneratingSet::Ball { radius } = *v else {
            return Err(Error::InvalidArgument(
                "continuous groups need a ball generating set".into(),
            ));
        };
        return Ok(PathValue {
            value: continuous_path_bound(d, &group.quotient(g, f), radius),
            exactness: Exactness::UpperBound,
        });
    }
    let gens = v.resolve(d)?.into_iter().map(|s| {
        let w = d.norm(&s);
        (s, w)
    });
    let mut search = Search::new(group.clone(), gens.collect(), max_nodes);
    match search.query(&group.quotient(g, f).key().unwrap()) {
        Found::Settled(value) => Ok(PathValue {
            value,
            exactness: Exactness::Exact,
        }),
        Found::Unreachable => Err(Error::Unreachable {
            explored: search.settled.len(),
        }),
        Found::Capped(front) => Ok(PathValue {
            value: front,
            exactness: Exactness::LowerBound,
        }),
    }
}

/// All settled distances up to `radius` from the identity (discrete groups),
/// used for exhaustive comparisons. Returns `None` if the cap was hit.
pub fn path_ball(
    d: &Metric,
    v: &GeneratingSet,
    radius: f64,
    max_nodes: usize,
) -> Result<Option<HashMap<ElementKey, f64>>> {
    let group = d.group().clone();
    let gens = v
        .resolve(d)?
        .into_iter()
        .map(|s| {
            let w = d.norm(&s);
            (s, w)
        })
        .collect();
    let mut search = Search::new(group, gens, max_nodes);
    let complete = search.settle_ball(radius);
    Ok(complete.then(|| search.settled.into_iter().filter(|(_, v)| *v <= radius).collect()))
}

/// Whether `V` generates the whole (finite) group.
pub fn generates(group: &Group, v: &[Element]) -> Option<bool> {
    let n = group.order()? as usize;
    let gens = symmetric_closure(group, v).into_iter().map(|s| (s, 1.0)).collect();
    let mut search = Search::new(group.clone(), gens, usize::MAX);
    search.settle_ball(f64::INFINITY);
    Some(search.settled.len() == n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QiOptions {
    /// Ladder `base·2^j` for `j < scales`.
    pub scales: usize,
    pub per_scale: usize,
    /// Smallest scale; defaults to the least positive generator norm under `d1`.
    pub base: Option<f64>,
    pub seed: u64,
}

impl Default for QiOptions {
    fn default() -> Self {
        Self {
            scales: 21,
            per_scale: 32,
            base: None,
            seed: 0,
        }
    }
}

/// Fitted `(1/K)·d1 − C ≤ d2 ≤ K·d1 + C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QIReport {
    pub k: f64,
    pub c: f64,
    pub max_violation: f64,
    pub sample_budget: usize,
    pub refuted: bool,
    /// `(scale, max(d1/d2, d2/d1))` along the ladder.
    pub scale_ratios: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

fn ladder_samples(group: &Group, d1: &Metric, opts: &QiOptions) -> (f64, Vec<Vec<Element>>) {
    let base = opts.base.unwrap_or_else(|| {
        group
            .generators()
            .and_then(|gs| {
                gs.iter()
                    .map(|g| d1.norm(g))
                    .filter(|&r| r > 0.0)
                    .fold(None, |a: Option<f64>, r| Some(a.map_or(r, |x| x.min(r))))
            })
            .unwrap_or(1.0)
    });
    let per: Vec<Vec<Element>> = (0..opts.scales)
        .into_par_iter()
        .map(|j| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, j as u64));
            let s = base * 2f64.powi(j as i32);
            (0..opts.per_scale)
                .map(|_| group.random_at_scale(&mut rng, s))
                .filter(|g| !group.is_identity(g))
                .collect()
        })
        .collect();
    (base, per)
}

/// Smallest `C ≥ 0` with `(1/K)·a − C ≤ b ≤ K·a + C` on all pairs.
fn envelope_c(k: f64, pairs: &[(f64, f64)]) -> f64 {
    pairs
        .iter()
        .map(|&(a, b)| (b - k * a).max(a / k - b))
        .fold(0.0, f64::max)
}

/// Least-envelope fit over a geometric scale ladder. `K` is the largest
/// two-sided ratio on the upper half of the ladder (where the additive
/// constant is negligible) and `C` the least constant making the envelope
/// hold on every sample. Growth of the ratio across the upper half (the top
/// ratio more than twice the middle one, never decreasing by more than 1%)
/// refutes the fit.
pub fn fit_quasi_isometry(d1: &Metric, d2: &Metric, opts: &QiOptions) -> Result<QIReport> {
    let group = d1.group();
    if d2.group() != group {
        return Err(Error::InvalidArgument("metrics live on different groups".into()));
    }
    if opts.scales == 0 || opts.per_scale == 0 {
        return Err(Error::InvalidArgument("empty scale ladder".into()));
    }
    let (base, per_scale) = ladder_samples(group, d1, opts);
    let values: Vec<Vec<(f64, f64)>> = per_scale
        .par_iter()
        .map(|els| els.iter().map(|g| (d1.norm(g), d2.norm(g))).collect())
        .collect();
    if let Some(&(a, b)) = values.iter().flatten().find(|(a, b)| !(a.is_finite() && b.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "distance pair ({a}, {b}) is not finite: a generating set does not generate the group"
        )));
    }
    let ratio = |&(a, b): &(f64, f64)| {
        if a > 0.0 && b > 0.0 {
            (a / b).max(b / a)
        } else if a == b {
            1.0
        } else {
            f64::INFINITY
        }
    };
    let scale_ratios: Vec<(f64, f64)> = values
        .iter()
        .enumerate()
        .map(|(j, v)| (base * 2f64.powi(j as i32), v.iter().map(ratio).fold(0.0, f64::max)))
        .collect();
    let all: Vec<(f64, f64)> = values.iter().flatten().copied().collect();
    let mid = opts.scales / 2;
    let upper = &scale_ratios[mid..];
    let k = upper.iter().map(|r| r.1).fold(1.0, f64::max);
    let c = envelope_c(k, &all);
    let max_violation = all
        .iter()
        .map(|&(a, b)| (b - k * a - c).max(a / k - c - b).max(0.0))
        .fold(0.0, f64::max);
    let mut notes = vec![format!(
        "scale ladder {base}·2^j, j < {}, {} samples per scale",
        opts.scales, opts.per_scale
    )];
    let growing = opts.scales >= 8
        && upper.last().unwrap().1 > 2.0 * upper[0].1
        && upper.windows(2).all(|w| w[1].1 >= 0.99 * w[0].1);
    if growing {
        notes.push("two-sided ratio keeps growing along the ladder: no (K, C) on budget".into());
    }
    notes.push("maximality is certified only relative to the compared metric".into());
    Ok(QIReport {
        k,
        c,
        max_violation,
        sample_budget: all.len(),
        refuted: growing || !k.is_finite(),
        scale_ratios,
        notes,
    })
}

/// Output of [`bilipschitz_constant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLipschitzReport {
    pub l: f64,
    /// `d ≤ l_forward·∂` from `max{K, M + N / inf(∂ outside V)}`.
    pub l_forward: f64,
    /// `∂ ≤ l_backward·d`, the same formula with the roles swapped.
    pub l_backward: f64,
    pub k_forward: f64,
    pub m_forward: f64,
    pub n_forward: f64,
    /// `None` when no sample lies outside the ball.
    pub inf_outside_forward: Option<f64>,
    pub k_backward: f64,
    pub m_backward: f64,
    pub n_backward: f64,
    pub inf_outside_backward: Option<f64>,
    /// Largest sampled `max(d/∂, ∂/d)`.
    pub empirical_ratio: f64,
    /// `d = ∂` on every sample, so `L = 1` directly.
    pub direct: bool,
    pub exhaustive: bool,
    pub samples: usize,
}

/// One direction of the bound `a ≤ L·b` with `L = max{K, M + N/inf}`,
/// `K` the sup of `a/b` on `B_b(r)`, `(M, N)` fitted from `a ≤ M·b + N`
/// and `inf` the least `b` outside `B_b(r)`.
fn one_direction(pairs: &[(f64, f64)], r: f64) -> Result<(f64, f64, f64, f64, f64)> {
    let inside: Vec<&(f64, f64)> = pairs.iter().filter(|p| p.1 > 0.0 && p.1 <= r).collect();
    let k = inside.iter().map(|p| p.0 / p.1).fold(0.0, f64::max);
    let outside: Vec<&(f64, f64)> = pairs.iter().filter(|p| p.1 > r).collect();
    if outside.is_empty() {
        return Ok((k, k, 0.0, 0.0, f64::INFINITY));
    }
    let inf = outside.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    if !(inf > 1e-12) {
        return Err(Error::DegenerateDenominator(inf));
    }
    // M from the large-distance end, N the least offset making a ≤ M·b + N
    let mut sorted: Vec<(f64, f64)> = pairs.iter().copied().filter(|p| p.1 > 0.0).collect();
    sorted.sort_by(|x, y| x.1.total_cmp(&y.1));
    let top = &sorted[sorted.len() / 2..];
    let m = top.iter().map(|p| p.0 / p.1).fold(0.0, f64::max);
    let n = pairs.iter().map(|p| p.0 - m * p.1).fold(0.0, f64::max);
    let l = k.max(m + n / inf);
    Ok((l, k, m, n, inf))
}

/// Bi-Lipschitz constant of two metrics that are both minimal and maximal,
/// computed from the local Lipschitz constant on `B(V_radius)`, the
/// quasi-isometry constants and the infimum outside the ball, then checked
/// against every sampled ratio.
pub fn bilipschitz_constant(
    d: &Metric,
    partial: &Metric,
    v_radius: f64,
    budget: usize,
    seed: u64,
) -> Result<BiLipschitzReport> {
    let group = d.group();
    if partial.group() != group {
        return Err(Error::InvalidArgument("metrics live on different groups".into()));
    }
    let (elements, exhaustive) = match group.elements() {
        Some(all) => (all, true),
        None => {
            let mut els = sample_ball(partial, 4.0 * v_radius, budget.max(16), seed)?.elements;
            let opts = QiOptions {
                scales: 16,
                per_scale: (budget / 16).max(4),
                base: None,
                seed: derive_seed(seed, 1),
            };
            els.extend(ladder_samples(group, d, &opts).1.into_iter().flatten());
            (els, false)
        }
    };
    let pairs: Vec<(f64, f64)> = elements
        .par_iter()
        .filter(|g| !group.is_identity(g))
        .map(|g| (d.norm(g), partial.norm(g)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::DegenerateSampling("no non-identity sample".into()));
    }
    if let Some(&(a, b)) = pairs
        .iter()
        .find(|(a, b)| !(a.is_finite() && b.is_finite()) || (*a == 0.0) != (*b == 0.0))
    {
        return Err(Error::InvalidArgument(format!(
            "distance pair ({a}, {b}) admits no finite ratio"
        )));
    }
    let direct = pairs.iter().all(|p| p.0 == p.1);
    let empirical_ratio = pairs.iter().map(|&(a, b)| (a / b).max(b / a)).fold(1.0, f64::max);
    let (lf, kf, mf, nf, inff) = one_direction(&pairs, v_radius)?;
    let swapped: Vec<(f64, f64)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
    let (lb, kb, mb, nb, infb) = one_direction(&swapped, v_radius)?;
    let l = if direct { 1.0 } else { lf.max(lb) };
    if !le_tol(empirical_ratio, l) {
        return Err(Error::MetricInvariant(format!(
            "formula constant {l} is below the sampled ratio {empirical_ratio}"
        )));
    }
    Ok(BiLipschitzReport {
        l,
        l_forward: lf,
        l_backward: lb,
        k_forward: kf,
        m_forward: mf,
        n_forward: nf,
        inf_outside_forward: inff.is_finite().then_some(inff),
        k_backward: kb,
        m_backward: mb,
        n_backward: nb,
        inf_outside_backward: infb.is_finite().then_some(infb),
        empirical_ratio,
        direct,
        exhaustive,
        samples: pairs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::kakutani_metric;
    use crate::filtration::{Filtration, GrowthLaw};
    use crate::metric::{native_metric, transform_sqrt};

    #[test]
    fn word_lengths() {
        let f2 = Group::free_group(2);
        let v = f2.generators().unwrap();
        let w = Element::word("abaB").unwrap();
        assert_eq!(
            word_metric(&f2, &v, &w, &f2.identity(), 10_000).unwrap(),
            WordDistance::Finite(4)
        );
        let z2 = Group::integer_lattice(2);
        let v = z2.generators().unwrap();
        let g = Element::Residues(vec![3, 4]);
        assert_eq!(
            word_metric(&z2, &v, &g, &z2.identity(), 10_000).unwrap(),
            WordDistance::Finite(7)
        );
        let z = Group::integer_lattice(1);
        let v = vec![Element::int(1), Element::int(2)];
        assert_eq!(
            word_metric(&z, &v, &Element::int(5), &Element::int(0), 10_000).unwrap(),
            WordDistance::Finite(3)
        );
    }

    #[test]
    fn word_search_flags() {
        let z6 = Group::cyclic_tower(2, 3);
        let v = vec![Element::Residues(vec![2])];
        assert_eq!(
            word_metric(&z6, &v, &Element::Residues(vec![1]), &z6.identity(), 100).unwrap(),
            WordDistance::Unreachable
        );
        let z = Group::integer_lattice(1);
        let v = z.generators().unwrap();
        assert!(matches!(
            word_metric(&z, &v, &Element::int(500), &z.identity(), 100).unwrap(),
            WordDistance::LowerBound(_)
        ));
    }

    #[test]
    fn path_on_integers_is_absolute_value() {
        let z = Group::integer_lattice(1);
        let d = native_metric(&z).unwrap();
        let v = GeneratingSet::Explicit {
            elements: vec![Element::int(1)],
        };
        let p = path_distance(&d, &v, &Element::int(7), &Element::int(0), 10_000).unwrap();
        assert_eq!(p.value, 7.0);
        assert_eq!(p.exactness, Exactness::Exact);
    }

    #[test]
    fn kakutani_path_matches_oracle() {
        let g = Group::cyclic_tower(2, 4);
        let filt = Filtration::subgroup_tower(&g, GrowthLaw::KakutaniSquares).unwrap();
        let d = kakutani_metric(&g, &filt, None).unwrap().metric;
        let v = GeneratingSet::Ball { radius: 0.5 };
        let p = path_metric(&d, &v, 1 << 16).unwrap();
        // oracle: Bellman-Ford relaxation over the listed generators
        let gens = v.resolve(&d).unwrap();
        let n = 16usize;
        let mut best = vec![f64::INFINITY; n];
        best[0] = 0.0;
        for _ in 0..n {
            for x in 0..n {
                for s in &gens {
                    let Element::Residues(r) = s else { unreachable!() };
                    let y = (x + r[0] as usize) % n;
                    let w = d.norm(s);
                    if best[x] + w < best[y] {
                        best[y] = best[x] + w;
                    }
                }
            }
        }
        for x in 0..n {
            assert_eq!(p.norm(&Element::Residues(vec![x as i64])), best[x]);
        }
    }

    #[test]
    fn path_agrees_with_d_on_small_ball() {
        // W² ⊆ V forces ∂ = d on W
        let g = Group::cyclic_tower(2, 6);
        let d = native_metric(&g).unwrap();
        let v = GeneratingSet::Ball { radius: 0.25 };
        let p = path_metric(&d, &v, 1 << 16).unwrap();
        for x in (0..64).step_by(8) {
            let e = Element::Residues(vec![x]);
            assert_eq!(p.norm(&e), d.norm(&e));
        }
    }

    #[test]
    fn qi_examples() {
        let z = Group::integer_lattice(1);
        let d = native_metric(&z).unwrap();
        let mut meta = d.meta.clone();
        meta.label = "2|x|".into();
        let twice = Metric::from_norm(z.clone(), meta, {
            let d = d.clone();
            move |g| 2.0 * d.norm(g)
        });
        let r = fit_quasi_isometry(&d, &twice, &QiOptions::default()).unwrap();
        assert_eq!((r.k, r.c, r.refuted), (2.0, 0.0, false));
        let same = fit_quasi_isometry(&d, &d, &QiOptions::default()).unwrap();
        assert_eq!((same.k, same.c), (1.0, 0.0));
        let s = transform_sqrt(&d);
        let r = fit_quasi_isometry(&d, &s, &QiOptions::default()).unwrap();
        assert!(r.refuted);
    }

    #[test]
    fn word_vs_path_on_integers() {
        let z = Group::integer_lattice(1);
        let d = native_metric(&z).unwrap();
        let w = word_metric_handle(&z, &z.generators().unwrap(), 1 << 16).unwrap();
        let v = GeneratingSet::Explicit {
            elements: vec![Element::int(1)],
        };
        let p = path_metric(&d, &v, 1 << 16).unwrap();
        let opts = QiOptions {
            scales: 12,
            ..QiOptions::default()
        };
        let r = fit_quasi_isometry(&w, &p, &opts).unwrap();
        assert_eq!((r.k, r.c), (1.0, 0.0));
    }

    #[test]
    fn bilipschitz_direct_branch() {
        let g = Group::cyclic_tower(2, 5);
        let d = native_metric(&g).unwrap();
        let r = bilipschitz_constant(&d, &d, 0.25, 64, 0).unwrap();
        assert!(r.direct);
        assert_eq!(r.l, 1.0);
    }

    #[test]
    fn unitary_path_bound_is_arc_length() {
        let u2 = Group::unitary(2);
        let d = native_metric(&u2).unwrap();
        let p = path_metric(&d, &GeneratingSet::Ball { radius: 0.5 }, 0).unwrap();
        let r = bilipschitz_constant(&d, &p, 0.5, 64, 3).unwrap();
        assert!(r.l.is_finite() && r.empirical_ratio <= r.l);
        // chord 2 sin(θ/2) against arc θ ≤ π: ratio at most π/2
        assert!(r.empirical_ratio <= std::f64::consts::FRAC_PI_2 + 1e-6);
    }
}
