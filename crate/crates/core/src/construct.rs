//! Chain-infimum metrics built from filtrations.
//!
//! Given a level gauge `δ`, the metric is
//! `d(g, f) = inf Σ δ(h_i, h_{i+1})` over finite chains from `g` to `f`.
//! Left-invariance reduces everything to distances from the identity, which
//! are computed with a dense Dijkstra over the finite group or over a
//! declared window of an infinite one.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{Filtration, FiltrationCheck, GrowthLaw, Window};
use crate::group::{Element, ElementKey, Group};
use crate::metric::{Exactness, Metric, MetricMeta, Provenance};

/// Weights below this are treated as zero.
pub const WEIGHT_FLOOR: f64 = 1e-15;

/// Measurements attached to a constructed metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub law: GrowthLaw,
    pub nodes: usize,
    /// True on finite groups; windowed values are upper bounds.
    pub exact: bool,
    pub check: FiltrationCheck,
    /// Cube law: whether `½δ ≤ d ≤ δ` held at every node.
    pub sandwich_holds: Option<bool>,
    /// Cube law: smallest observed `d / δ` off the identity.
    pub min_ratio: Option<f64>,
    /// Square law: measured `c` with `B_d(c·2^{-n}) ⊆ V_{2^{-n}}`.
    pub c: Option<f64>,
    /// Square law: measured `C` with `V_{2^{-n}} ⊆ B_d(C·2^{-n})`.
    pub big_c: Option<f64>,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Construction {
    pub metric: Metric,
    pub report: ConstructionReport,
    /// Node elements and their distances from the identity.
    pub nodes: Vec<(Element, f64)>,
}

struct ChainResult {
    elements: Vec<Element>,
    gauge: Vec<Option<f64>>,
    dist: Vec<f64>,
}

/// Dense Dijkstra from the identity; `O(n²)` gauge lookups.
fn chain_infimum(group: &Group, filt: &Filtration, nodes: Vec<Element>) -> Result<ChainResult> {
    let n = nodes.len();
    let id = group.identity();
    let src = nodes
        .iter()
        .position(|g| group.approx_eq(g, &id, 0.0))
        .ok_or_else(|| Error::InvalidArgument("window does not contain the identity".into()))?;
    let gauge: Vec<Option<f64>> = nodes.iter().map(|g| filt.gauge(group, g)).collect();

    // gauge of a⁻¹b: indexed lookup on finite groups, memoised otherwise
    let finite = group.order().is_some();
    let mut memo: HashMap<ElementKey, Option<f64>> = HashMap::new();
    let mut weight = |a: &Element, b: &Element| -> Option<f64> {
        let q = group.quotient(b, a);
        let w = if finite {
            let i = group.element_index(&q).unwrap();
            gauge[i]
        } else {
            match q.key() {
                Some(k) => *memo.entry(k).or_insert_with(|| filt.gauge(group, &q)),
                None => filt.gauge(group, &q),
            }
        };
        w.map(|x| if x < WEIGHT_FLOOR { 0.0 } else { x })
    };
    // finite nodes are listed in element_index order
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[src] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        let mut best = f64::INFINITY;
        for i in 0..n {
            if !done[i] && dist[i] < best {
                best = dist[i];
                u = i;
            }
        }
        if u == usize::MAX {
            break;
        }
        done[u] = true;
        for v in 0..n {
            if done[v] {
                continue;
            }
            if let Some(w) = weight(&nodes[u], &nodes[v]) {
                let cand = best + w;
                if cand < dist[v] {
                    dist[v] = cand;
                }
            }
        }
    }
    Ok(ChainResult {
        elements: nodes,
        gauge,
        dist,
    })
}

fn universe(group: &Group, window: Option<&Window>) -> Result<(Vec<Element>, bool)> {
    match (group.elements(), window) {
        (Some(all), _) => Ok((all, true)),
        (None, Some(w)) => Ok((w.elements(group)?, false)),
        (None, None) => Err(Error::NeedsWindow),
    }
}

fn metric_from_table(group: &Group, filt: &Filtration, res: &ChainResult, exact: bool, meta: MetricMeta) -> Metric {
    let grp = group.clone();
    let fil = filt.clone();
    if exact {
        let table = Arc::new(res.dist.clone());
        Metric::from_norm(group.clone(), meta, move |g| {
            table[grp.element_index(g).expect("finite payload")]
        })
    } else {
        let table: Arc<HashMap<ElementKey, f64>> = Arc::new(
            res.elements
                .iter()
                .zip(&res.dist)
                .filter_map(|(g, d)| g.key().map(|k| (k, *d)))
                .collect(),
        );
        // outside the window the single-step chain is the best known bound
        Metric::from_norm(group.clone(), meta, move |g| {
            match g.key().and_then(|k| table.get(&k)) {
                Some(d) => *d,
                None => fil.gauge(&grp, g).unwrap_or(f64::INFINITY),
            }
        })
    }
}

/// Chain-infimum metric for a cube-law filtration. The sandwich
/// `½δ ≤ d ≤ δ` is checked at every node and attached to the report.
pub fn birkhoff_metric(group: &Group, filt: &Filtration, window: Option<&Window>) -> Result<Construction> {
    if filt.law != GrowthLaw::BirkhoffCubes {
        return Err(Error::InvalidArgument(
            "birkhoff_metric needs a cube-law filtration".into(),
        ));
    }
    let (nodes, exact) = universe(group, window)?;
    let check = filt.verify(group, window, 0, 0)?;
    let res = chain_infimum(group, filt, nodes)?;
    let mut holds = true;
    let mut min_ratio = f64::INFINITY;
    for (i, g) in res.elements.iter().enumerate() {
        let delta = res.gauge[i].ok_or_else(|| Error::Filtration {
            level: filt.levels().last().unwrap().index,
            reason: format!("levels do not cover {g}"),
        })?;
        let d = res.dist[i];
        if delta > 0.0 {
            min_ratio = min_ratio.min(d / delta);
        }
        if !(0.5 * delta <= d && d <= delta) {
            holds = false;
        }
    }
    let mut meta = MetricMeta::new(format!("birkhoff({})", filt.label), Provenance::Birkhoff);
    meta.exactness = if exact { Exactness::Exact } else { Exactness::UpperBound };
    meta.constants = BTreeMap::from([("min_ratio".to_string(), min_ratio)]);
    let metric = metric_from_table(group, filt, &res, exact, meta);
    let nodes = res.elements.iter().cloned().zip(res.dist.iter().cloned()).collect();
    Ok(Construction {
        metric,
        report: ConstructionReport {
            law: GrowthLaw::BirkhoffCubes,
            nodes: res.elements.len(),
            exact,
            check,
            sandwich_holds: Some(holds),
            min_ratio: Some(min_ratio),
            c: None,
            big_c: None,
            ratio: None,
        },
        nodes,
    })
}

/// Chain-infimum metric for a square-law filtration, with measured sandwich
/// constants `(c, C)`.
///
/// `C` is the largest `d(g)·2^n` over `g ∈ V_{2^{-n}}`. For `c`, each level
/// other than `{1}` and the whole universe contributes the largest realised
/// value `d(h)·2^n` lying strictly below `min_{g ∉ V_{2^{-n}}} d(g)·2^n`, which
/// is the largest radius whose closed ball provably stays inside the level.
pub fn kakutani_metric(group: &Group, filt: &Filtration, window: Option<&Window>) -> Result<Construction> {
    if filt.law != GrowthLaw::KakutaniSquares {
        return Err(Error::InvalidArgument(
            "kakutani_metric needs a square-law filtration".into(),
        ));
    }
    let (nodes, exact) = universe(group, window)?;
    let check = filt.verify(group, window, 0, 0)?;
    let res = chain_infimum(group, filt, nodes)?;
    let mut big_c: f64 = 0.0;
    let mut c = f64::INFINITY;
    let total = res.elements.len();
    for level in filt.levels() {
        let scale = 2f64.powi(level.index);
        let inside: Vec<bool> = res.elements.iter().map(|g| level.set.contains(g)).collect();
        let count = inside.iter().filter(|&&b| b).count();
        for (i, &b) in inside.iter().enumerate() {
            if b {
                big_c = big_c.max(res.dist[i] * scale);
            }
        }
        if count <= 1 || count == total {
            continue;
        }
        let outside_min = inside
            .iter()
            .enumerate()
            .filter(|(_, &b)| !b)
            .map(|(i, _)| res.dist[i] * scale)
            .fold(f64::INFINITY, f64::min);
        let below = res
            .dist
            .iter()
            .map(|d| d * scale)
            .filter(|&x| x < outside_min)
            .fold(f64::NEG_INFINITY, f64::max);
        c = c.min(below);
    }
    let (c, ratio) = if c.is_finite() && c > 0.0 {
        (Some(c), Some(big_c / c))
    } else {
        (None, None)
    };
    if let Some(r) = ratio {
        if r > 4.0 + 1e-12 {
            return Err(Error::SandwichRatio { ratio: r });
        }
    }
    let mut meta = MetricMeta::new(format!("kakutani({})", filt.label), Provenance::Kakutani);
    meta.exactness = if exact { Exactness::Exact } else { Exactness::UpperBound };
    meta.bound = Some(filt.weight(filt.levels()[0].index - 1));
    meta.constants.insert("C".into(), big_c);
    if let Some(c) = c {
        meta.constants.insert("c".into(), c);
    }
    let metric = metric_from_table(group, filt, &res, exact, meta);
    let nodes = res.elements.iter().cloned().zip(res.dist.iter().cloned()).collect();
    Ok(Construction {
        metric,
        report: ConstructionReport {
            law: GrowthLaw::KakutaniSquares,
            nodes: total,
            exact,
            check,
            sandwich_holds: None,
            min_ratio: None,
            c,
            big_c: Some(big_c),
            ratio,
        },
        nodes,
    })
}
