//! Left-invariant metrics as evaluable handles.
//!
//! Most metrics are stored as a norm `N(g) = d(g, 1)` and evaluated through
//! `d(g, h) = N(h⁻¹ g)`, which makes left-invariance hold by construction.
//! Handles built from an arbitrary two-argument gauge must pass
//! [`Metric::validate`] before anything downstream trusts them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{bfs_distances, Element, ElementKey, Group, GroupKind};
use crate::linalg;

pub type NormFn = Arc<dyn Fn(&Element) -> f64 + Send + Sync>;
pub type DistanceFn = Arc<dyn Fn(&Element, &Element) -> f64 + Send + Sync>;

/// How a metric handle was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    NativeNorm,
    Birkhoff,
    Kakutani,
    Word,
    PathRefined,
    BiInvariantised,
    Sqrt,
    Capped,
    Restricted,
    Custom,
}

/// Whether the stored values are exact or one-sided estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    UpperBound,
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeta {
    pub label: String,
    pub provenance: Provenance,
    /// Known upper bound on all distances, if any.
    pub bound: Option<f64>,
    pub exactness: Exactness,
    pub complete: bool,
    /// Measured constants attached by constructions (sandwich bounds and the like).
    pub constants: BTreeMap<String, f64>,
}

impl MetricMeta {
    pub fn new(label: impl Into<String>, provenance: Provenance) -> Self {
        Self {
            label: label.into(),
            provenance,
            bound: None,
            exactness: Exactness::Exact,
            complete: true,
            constants: BTreeMap::new(),
        }
    }
}

#[derive(Clone)]
enum Eval {
    Norm(NormFn),
    Distance(DistanceFn),
}

/// A compatible left-invariant metric on a [`Group`].
#[derive(Clone)]
pub struct Metric {
    group: Group,
    eval: Eval,
    pub meta: MetricMeta,
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Metric")
            .field("group", &self.group.name())
            .field("meta", &self.meta)
            .finish()
    }
}

impl Metric {
    /// Metric given by a norm; `d(g, h) = norm(h⁻¹ g)`.
    pub fn from_norm(group: Group, meta: MetricMeta, norm: impl Fn(&Element) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            group,
            eval: Eval::Norm(Arc::new(norm)),
            meta,
        }
    }

    /// Metric given by a two-argument gauge. Call [`Metric::validate`] before use.
    pub fn from_distance(
        group: Group,
        meta: MetricMeta,
        dist: impl Fn(&Element, &Element) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            group,
            eval: Eval::Distance(Arc::new(dist)),
            meta,
        }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn label(&self) -> &str {
        &self.meta.label
    }

    /// `d(g, 1)`.
    pub fn norm(&self, g: &Element) -> f64 {
        match &self.eval {
            Eval::Norm(n) => n(g),
            Eval::Distance(d) => d(g, &self.group.identity()),
        }
    }

    /// `d(g, h)`.
    pub fn dist(&self, g: &Element, h: &Element) -> f64 {
        match &self.eval {
            Eval::Norm(n) => n(&self.group.quotient(g, h)),
            Eval::Distance(d) => d(g, h),
        }
    }

    /// Replaces the label, keeping everything else.
    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.meta.label = label.into();
        self
    }

    /// Checks symmetry, `d(g, g) = 0`, positivity off the identity, the
    /// triangle inequality and left-invariance on every triple drawn from
    /// `samples`. `tol` is absolute.
    pub fn validate_on(&self, samples: &[Element], tol: f64) -> Result<()> {
        let g = &self.group;
        let d = |a: &Element, b: &Element| self.dist(a, b);
        for a in samples {
            let daa = d(a, a);
            if daa.abs() > tol {
                return Err(Error::MetricInvariant(format!("d({a}, {a}) = {daa}")));
            }
            if !g.approx_eq(a, &g.identity(), 1e-9) && self.norm(a) <= 0.0 {
                return Err(Error::MetricInvariant(format!(
                    "d({a}, 1) = 0 for a non-identity element"
                )));
            }
        }
        for a in samples {
            for b in samples {
                let dab = d(a, b);
                if !(dab >= 0.0) || (dab - d(b, a)).abs() > tol {
                    return Err(Error::MetricInvariant(format!(
                        "symmetry fails at ({a}, {b}): {dab} vs {}",
                        d(b, a)
                    )));
                }
                for k in samples {
                    let lhs = d(&g.mul(k, a), &g.mul(k, b));
                    if (lhs - dab).abs() > tol {
                        return Err(Error::MetricInvariant(format!(
                            "left-invariance fails: d({k}·{a}, {k}·{b}) = {lhs} but d({a}, {b}) = {dab}"
                        )));
                    }
                    let via = d(a, k) + d(k, b);
                    if dab > via + tol {
                        return Err(Error::MetricInvariant(format!(
                            "triangle inequality fails at ({a}, {k}, {b}): {dab} > {via}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// [`Metric::validate_on`] with a default sample: the whole group when it
    /// has at most 48 elements, otherwise 24 elements near the identity.
    pub fn validate(&self, seed: u64) -> Result<()> {
        let tol = if self.group.is_discrete() { 1e-12 } else { 1e-10 };
        let samples = match self.group.elements() {
            Some(all) if all.len() <= 48 => all,
            _ => default_validation_sample(self, seed),
        };
        self.validate_on(&samples, tol)
    }
}

fn default_validation_sample(metric: &Metric, seed: u64) -> Vec<Element> {
    let g = metric.group();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(all) = g.elements() {
        return (0..24).map(|_| all[rng.random_range(0..all.len())].clone()).collect();
    }
    if let Some(layers) = g.word_layers(4, 400) {
        let flat: Vec<Element> = layers.into_iter().flatten().collect();
        return (0..24).map(|_| flat[rng.random_range(0..flat.len())].clone()).collect();
    }
    (0..24).map(|_| g.random_at_scale(&mut rng, 1.0)).collect()
}

/// Radius of the cached word-metric ball used for the Heisenberg native metric.
pub const HEISENBERG_BALL_RADIUS: usize = 10;

/// The canonical metric of each group kind.
///
/// Matrix groups get `‖h⁻¹g − Id‖` in the operator norm, vectors the
/// Euclidean norm, lattices and free groups their word length, finite tables
/// the discrete metric, and the two finite towers the ultrametric `2^{-level}`
/// of their subgroup filtration.
pub fn native_metric(group: &Group) -> Result<Metric> {
    let label = format!("native({})", group.name());
    let meta = MetricMeta::new(label, Provenance::NativeNorm);
    let m = match &group.kind {
        GroupKind::Unitary { .. } | GroupKind::SpecialOrthogonal { .. } | GroupKind::DiagonalTorus { .. } => {
            let mut meta = meta;
            meta.bound = Some(2.0);
            Metric::from_norm(group.clone(), meta, |g| {
                let m = g.as_matrix().expect("matrix payload");
                let n = m.nrows();
                linalg::operator_norm_robust(&(m - linalg::identity(n)))
            })
        }
        GroupKind::GeneralLinear { .. } => {
            // ‖h⁻¹g − Id‖ is not symmetric on GL(n), so it is no metric there
            return Err(Error::NoCanonicalMetric(group.name()));
        }
        GroupKind::RealVector { .. } => Metric::from_norm(group.clone(), meta, |g| match g {
            Element::Vector(v) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            _ => panic!("vector payload expected"),
        }),
        GroupKind::IntegerLattice { .. } => Metric::from_norm(group.clone(), meta, |g| match g {
            Element::Residues(r) => r.iter().map(|x| x.unsigned_abs() as f64).sum(),
            _ => panic!("residue payload expected"),
        }),
        GroupKind::FreeGroup { .. } => Metric::from_norm(group.clone(), meta, |g| match g {
            Element::Word(w) => w.len() as f64,
            _ => panic!("word payload expected"),
        }),
        GroupKind::Heisenberg { .. } => {
            let gens = group.generators().expect("heisenberg generators");
            let ball: Arc<OnceLock<HashMap<ElementKey, usize>>> = Arc::new(OnceLock::new());
            let grp = group.clone();
            let mut meta = meta;
            meta.label = format!("word({})", group.name());
            meta.constants
                .insert("exact_radius".into(), HEISENBERG_BALL_RADIUS as f64);
            Metric::from_norm(group.clone(), meta, move |g| {
                let table = ball.get_or_init(|| bfs_distances(&grp, &gens, HEISENBERG_BALL_RADIUS, usize::MAX).0);
                match table.get(&g.key().expect("discrete payload")) {
                    Some(&r) => r as f64,
                    None => heisenberg_upper_bound(g).max(HEISENBERG_BALL_RADIUS as f64 + 1.0),
                }
            })
        }
        GroupKind::FiniteTable { table } => {
            let e = table.identity();
            let mut meta = meta;
            meta.bound = Some(1.0);
            Metric::from_norm(group.clone(), meta, move |g| match g {
                Element::Table(i) => (*i != e) as u8 as f64,
                _ => panic!("table payload expected"),
            })
        }
        GroupKind::CyclicTower { p, .. } => {
            let p = *p as i64;
            let mut meta = meta;
            meta.bound = Some(1.0);
            Metric::from_norm(group.clone(), meta, move |g| match g {
                Element::Residues(r) => {
                    if r[0] == 0 {
                        0.0
                    } else {
                        let mut v = 0;
                        let mut x = r[0];
                        while x % p == 0 {
                            x /= p;
                            v += 1;
                        }
                        0.5f64.powi(v)
                    }
                }
                _ => panic!("residue payload expected"),
            })
        }
        GroupKind::Involutions { .. } => {
            let mut meta = meta;
            meta.bound = Some(1.0);
            Metric::from_norm(group.clone(), meta, |g| match g {
                Element::Residues(r) => match r.iter().position(|&b| b != 0) {
                    Some(i) => 0.5f64.powi(i as i32),
                    None => 0.0,
                },
                _ => panic!("residue payload expected"),
            })
        }
    };
    Ok(m)
}

/// The angular metric `d(u, 1) = max |arg λ(u)|` on compact matrix groups,
/// the bi-invariant Finsler distance of the operator norm. Unlike the chord
/// distance `‖u − Id‖` it is exactly homogeneous along one-parameter
/// subgroups inside the injectivity ball: `d(u^t, 1) = t·d(u, 1)`.
pub fn angular_metric(group: &Group) -> Result<Metric> {
    match group.kind {
        GroupKind::Unitary { .. } | GroupKind::SpecialOrthogonal { .. } | GroupKind::DiagonalTorus { .. } => {}
        _ => return Err(Error::NoCanonicalMetric(format!("angular metric on {}", group.name()))),
    }
    let mut meta = MetricMeta::new(format!("angular({})", group.name()), Provenance::Custom);
    meta.bound = Some(std::f64::consts::PI);
    Ok(Metric::from_norm(group.clone(), meta, |g| {
        linalg::spectral_angle(g.as_matrix().expect("matrix payload"))
    }))
}

/// Crude word length bound in the Heisenberg group (any n): clear the
/// superdiagonal with elementary moves, then each higher entry with
/// commutator blocks.
fn heisenberg_upper_bound(g: &Element) -> f64 {
    match g {
        Element::Residues(r) => r.iter().map(|x| 4.0 * (x.unsigned_abs() as f64) + 1.0).sum(),
        _ => f64::INFINITY,
    }
}

/// `√d`, again a compatible left-invariant metric.
pub fn transform_sqrt(d: &Metric) -> Metric {
    let inner = d.clone();
    let mut meta = d.meta.clone();
    meta.label = format!("sqrt({})", d.label());
    meta.provenance = Provenance::Sqrt;
    meta.bound = d.meta.bound.map(f64::sqrt);
    meta.constants.clear();
    match &d.eval {
        Eval::Norm(_) => Metric::from_norm(d.group.clone(), meta, move |g| inner.norm(g).sqrt()),
        Eval::Distance(_) => Metric::from_distance(d.group.clone(), meta, move |g, h| inner.dist(g, h).sqrt()),
    }
}

/// `min{d, cap}`.
pub fn transform_capped(d: &Metric, cap: f64) -> Result<Metric> {
    if !(cap > 0.0) {
        return Err(Error::InvalidArgument(format!("cap must be positive, got {cap}")));
    }
    let inner = d.clone();
    let mut meta = d.meta.clone();
    meta.label = format!("min({}, {cap})", d.label());
    meta.provenance = Provenance::Capped;
    meta.bound = Some(d.meta.bound.map_or(cap, |b| b.min(cap)));
    meta.constants.clear();
    Ok(match &d.eval {
        Eval::Norm(_) => Metric::from_norm(d.group.clone(), meta, move |g| inner.norm(g).min(cap)),
        Eval::Distance(_) => Metric::from_distance(d.group.clone(), meta, move |g, h| inner.dist(g, h).min(cap)),
    })
}

/// The same distance evaluated on the elements of a subgroup.
pub fn restrict(d: &Metric, sub: &Group) -> Result<Metric> {
    let parent = d.group.clone();
    // fail early if the payload types cannot be embedded at all
    sub.embed_into(&parent, &sub.identity())?;
    let inner = d.clone();
    let s = sub.clone();
    let mut meta = d.meta.clone();
    meta.label = format!("{}|{}", d.label(), sub.name());
    meta.provenance = Provenance::Restricted;
    Ok(Metric::from_norm(sub.clone(), meta, move |g| {
        let e = s.embed_into(&parent, g).expect("subgroup element embeds into parent");
        inner.norm(&e)
    }))
}

/// Result of [`bi_invariantize`]: the metric plus the conjugator budget used.
#[derive(Debug, Clone)]
pub struct BiInvariant {
    pub metric: Metric,
    /// Number of conjugators in the supremum.
    pub conjugators: usize,
    /// True when the supremum ran over the whole group.
    pub exhaustive: bool,
}

/// `∂(g, h) = sup_f min{d, cap}(g f, h f)`.
///
/// Exact on finite groups; elsewhere the supremum runs over `budget`
/// conjugators sampled at unit scale (plus the identity), so the result is a
/// lower bound on the true `∂`.
pub fn bi_invariantize(d: &Metric, cap: Option<f64>, budget: usize, seed: u64) -> Result<BiInvariant> {
    let cap = match (cap, d.meta.bound) {
        (Some(c), _) if c > 0.0 => c,
        (Some(c), _) => return Err(Error::InvalidArgument(format!("cap must be positive, got {c}"))),
        (None, Some(b)) => b,
        (None, None) => return Err(Error::Unbounded),
    };
    let g = d.group.clone();
    let (conj, exhaustive) = match g.elements() {
        Some(all) => (all, true),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = vec![g.identity()];
            v.extend((0..budget).map(|_| g.random_at_scale(&mut rng, 1.0)));
            (v, false)
        }
    };
    let conjugators = conj.len();
    let inner = d.clone();
    let grp = g.clone();
    let conj = Arc::new(conj);
    let mut meta = d.meta.clone();
    meta.label = format!("bi({})", d.label());
    meta.provenance = Provenance::BiInvariantised;
    meta.bound = Some(cap);
    meta.exactness = if exhaustive {
        d.meta.exactness
    } else {
        Exactness::LowerBound
    };
    meta.constants.clear();
    meta.constants.insert("conjugators".into(), conjugators as f64);
    // d(gf, hf) = N(f⁻¹ h⁻¹ g f)
    let metric = Metric::from_norm(g, meta, move |x| {
        conj.iter()
            .map(|f| inner.norm(&grp.conjugate(x, f)).min(cap))
            .fold(0.0, f64::max)
    });
    Ok(BiInvariant {
        metric,
        conjugators,
        exhaustive,
    })
}
