//! Nested families of symmetric identity neighbourhoods with a growth law.
//!
//! Under the cube law, level `n` stands for `V_{3^n}` with weight `2^n` and
//! levels grow with `n`; `V_{3^n}^3 ⊆ V_{3^{n+1}}`. Under the square law,
//! level `n` stands for `V_{2^{-n}}` with weight `2^{-n}` and levels shrink
//! with `n`; `V_{2^{-n}}^2 ⊆ V_{2^{-n+1}}`.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Element, ElementKey, Group, GroupKind};
use crate::metric::Metric;
use crate::sample::sample_ball;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthLaw {
    BirkhoffCubes,
    KakutaniSquares,
}

pub type Predicate = Arc<dyn Fn(&Element) -> bool + Send + Sync>;

/// Membership of an element in the subgroup of a given level.
type Membership = Arc<dyn Fn(&Element, u32) -> bool + Send + Sync>;

/// Membership descriptor of one level.
#[derive(Clone)]
pub enum LevelSet {
    /// Explicit finite set (discrete payloads only).
    Elements(HashSet<ElementKey>),
    /// Arbitrary membership test.
    Predicate { describe: String, test: Predicate },
    /// Closed metric ball `{g : d(g, 1) ≤ radius}`.
    Ball { metric: Metric, radius: f64 },
}

impl fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelSet::Elements(s) => write!(f, "Elements({} elements)", s.len()),
            LevelSet::Predicate { describe, .. } => write!(f, "Predicate({describe})"),
            LevelSet::Ball { metric, radius } => write!(f, "Ball({}, {radius})", metric.label()),
        }
    }
}

impl LevelSet {
    pub fn contains(&self, g: &Element) -> bool {
        match self {
            LevelSet::Elements(s) => g.key().is_some_and(|k| s.contains(&k)),
            LevelSet::Predicate { test, .. } => test(g),
            LevelSet::Ball { metric, radius } => metric.norm(g) <= *radius,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Level {
    pub index: i32,
    pub set: LevelSet,
}

/// Finite universe over which a filtration on an infinite group is checked
/// and over which chains are searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Window {
    /// `{lo, …, hi}` in Z (one-dimensional integer lattice).
    Interval { lo: i64, hi: i64 },
    /// Explicit list of elements.
    Elements { elements: Vec<Element> },
}

impl Window {
    pub fn elements(&self, group: &Group) -> Result<Vec<Element>> {
        match self {
            Window::Interval { lo, hi } => {
                if group.kind != (GroupKind::IntegerLattice { dim: 1 }) {
                    return Err(Error::InvalidArgument(format!(
                        "interval windows need Z, not {}",
                        group.name()
                    )));
                }
                if lo > hi {
                    return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
                }
                Ok((*lo..=*hi).map(Element::int).collect())
            }
            Window::Elements { elements } => {
                for e in elements {
                    group.validate(e)?;
                }
                Ok(elements.clone())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Filtration {
    pub law: GrowthLaw,
    pub label: String,
    /// Sorted by index, consecutive.
    levels: Vec<Level>,
}

/// Outcome of [`Filtration::verify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationCheck {
    /// True when every level was materialised completely.
    pub exhaustive: bool,
    pub level_sizes: Vec<(i32, usize)>,
    pub products_checked: usize,
}

impl Filtration {
    pub fn new(law: GrowthLaw, label: impl Into<String>, mut levels: Vec<Level>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("filtration without levels".into()));
        }
        levels.sort_by_key(|l| l.index);
        for w in levels.windows(2) {
            if w[1].index != w[0].index + 1 {
                return Err(Error::Filtration {
                    level: w[1].index,
                    reason: format!("indices must be consecutive, found {} after {}", w[1].index, w[0].index),
                });
            }
        }
        Ok(Self {
            law,
            label: label.into(),
            levels,
        })
    }

    /// Levels given as explicit element lists.
    pub fn from_elements(law: GrowthLaw, label: impl Into<String>, levels: Vec<(i32, Vec<Element>)>) -> Result<Self> {
        let mut out = Vec::with_capacity(levels.len());
        for (index, elems) in levels {
            let mut set = HashSet::new();
            for e in &elems {
                let k = e.key().ok_or_else(|| Error::Filtration {
                    level: index,
                    reason: "explicit element lists need discrete payloads".into(),
                })?;
                set.insert(k);
            }
            out.push(Level {
                index,
                set: LevelSet::Elements(set),
            });
        }
        Self::new(law, label, out)
    }

    /// Cube-law levels `V_{3^n} = (−3^n, 3^n) ∩ Z` for `n = 0..=max_n`.
    pub fn integer_intervals(max_n: u32) -> Self {
        let levels = (0..=max_n as i32)
            .map(|n| {
                let r = 3i64.pow(n as u32);
                Level {
                    index: n,
                    set: LevelSet::Predicate {
                        describe: format!("|x| < {r}"),
                        test: Arc::new(move |g| match g {
                            Element::Residues(v) if v.len() == 1 => v[0].abs() < r,
                            _ => false,
                        }),
                    },
                }
            })
            .collect();
        Self::new(GrowthLaw::BirkhoffCubes, "intervals(3^n)", levels).unwrap()
    }

    /// Subgroup chain of a finite tower. Square law: level `n` is the
    /// subgroup `p^n Z / p^depth Z` (resp. the elements vanishing on the first
    /// `n` coordinates). Cube law: level `n` is the subgroup of index
    /// `p^{depth−n}`, so level `depth` is the whole group.
    pub fn subgroup_tower(group: &Group, law: GrowthLaw) -> Result<Self> {
        let (depth, member): (u32, Membership) = match group.kind {
            GroupKind::CyclicTower { p, depth } => (
                depth,
                Arc::new(move |g, n| match g {
                    Element::Residues(r) => r[0] % (p.pow(n) as i64) == 0,
                    _ => false,
                }),
            ),
            GroupKind::Involutions { depth } => (
                depth,
                Arc::new(|g, n| match g {
                    Element::Residues(r) => r.iter().take(n as usize).all(|&b| b == 0),
                    _ => false,
                }),
            ),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "{} has no subgroup tower",
                    group.name()
                )))
            }
        };
        let levels = (0..=depth as i32)
            .map(|n| {
                let k = match law {
                    GrowthLaw::KakutaniSquares => n as u32,
                    GrowthLaw::BirkhoffCubes => depth - n as u32,
                };
                let m = member.clone();
                Level {
                    index: n,
                    set: LevelSet::Predicate {
                        describe: format!("subgroup level {k}"),
                        test: Arc::new(move |g| m(g, k)),
                    },
                }
            })
            .collect();
        Self::new(law, format!("subgroups({})", group.name()), levels)
    }

    /// Levels given by closed balls of a metric.
    pub fn balls(law: GrowthLaw, metric: &Metric, radii: Vec<(i32, f64)>) -> Result<Self> {
        let levels = radii
            .into_iter()
            .map(|(index, radius)| Level {
                index,
                set: LevelSet::Ball {
                    metric: metric.clone(),
                    radius,
                },
            })
            .collect();
        Self::new(law, format!("balls({})", metric.label()), levels)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn weight(&self, index: i32) -> f64 {
        match self.law {
            GrowthLaw::BirkhoffCubes => 2f64.powi(index),
            GrowthLaw::KakutaniSquares => 2f64.powi(-index),
        }
    }

    /// Level gauge `δ(g, 1)`: the least weight of a level containing `g`.
    /// The identity gets 0. Under the square law an element outside every
    /// level is treated as lying in an implicit level `n_min − 1` equal to the
    /// whole group. Under the cube law such an element has no gauge.
    pub fn gauge(&self, group: &Group, g: &Element) -> Option<f64> {
        if group.is_identity(g) {
            return Some(0.0);
        }
        match self.law {
            GrowthLaw::BirkhoffCubes => self
                .levels
                .iter()
                .find(|l| l.set.contains(g))
                .map(|l| self.weight(l.index)),
            GrowthLaw::KakutaniSquares => {
                let n = self
                    .levels
                    .iter()
                    .rev()
                    .find(|l| l.set.contains(g))
                    .map_or(self.levels[0].index - 1, |l| l.index);
                Some(self.weight(n))
            }
        }
    }

    /// Checks identity membership, symmetry, nesting, the growth law and
    /// (cube law) covering of the universe. The universe is the whole group
    /// when finite, else the window; continuous groups draw `budget`
    /// members per level with `seed`.
    pub fn verify(&self, group: &Group, window: Option<&Window>, budget: usize, seed: u64) -> Result<FiltrationCheck> {
        let (universe, mut exhaustive) = match (group.elements(), window) {
            (Some(all), _) => (Some(all), true),
            (None, Some(w)) => (Some(w.elements(group)?), true),
            (None, None) => (None, false),
        };
        let id = group.identity();
        let mut members: Vec<Vec<Element>> = Vec::with_capacity(self.levels.len());
        for (pos, level) in self.levels.iter().enumerate() {
            let err = |reason: String| Error::Filtration {
                level: level.index,
                reason,
            };
            if !level.set.contains(&id) {
                return Err(err("does not contain the identity".into()));
            }
            let elems = match (&universe, &level.set) {
                (Some(u), _) => u.iter().filter(|g| level.set.contains(g)).cloned().collect(),
                (None, LevelSet::Ball { metric, radius }) => {
                    exhaustive = false;
                    sample_ball(metric, *radius, budget, seed.wrapping_add(pos as u64))?.elements
                }
                (None, _) => {
                    return Err(Error::NeedsWindow);
                }
            };
            if let LevelSet::Elements(set) = &level.set {
                if let Some(u) = &universe {
                    let in_universe: HashSet<ElementKey> = u.iter().filter_map(|g| g.key()).collect();
                    if set.iter().any(|k| !in_universe.contains(k)) {
                        return Err(err("lists an element outside the group or window".into()));
                    }
                }
            }
            for g in &elems {
                if !level.set.contains(&group.invert(g)) {
                    return Err(err(format!("not symmetric: contains {g} but not its inverse")));
                }
            }
            members.push(elems);
        }
        // nesting: birkhoff grows with the index, kakutani shrinks
        for pos in 1..self.levels.len() {
            let (small, big) = match self.law {
                GrowthLaw::BirkhoffCubes => (pos - 1, pos),
                GrowthLaw::KakutaniSquares => (pos, pos - 1),
            };
            if let Some(g) = members[small].iter().find(|g| !self.levels[big].set.contains(g)) {
                return Err(Error::Filtration {
                    level: self.levels[small].index,
                    reason: format!("not nested: {g} is missing from level {}", self.levels[big].index),
                });
            }
        }
        let mut products = 0usize;
        for pos in 0..self.levels.len() {
            let target = match self.law {
                GrowthLaw::BirkhoffCubes if pos + 1 < self.levels.len() => pos + 1,
                GrowthLaw::KakutaniSquares if pos > 0 => pos - 1,
                _ => continue,
            };
            let v = &members[pos];
            let next = &self.levels[target].set;
            let power = match self.law {
                GrowthLaw::BirkhoffCubes => 3,
                GrowthLaw::KakutaniSquares => 2,
            };
            let mut partial = dedup(v.clone());
            for step in 1..power {
                let last = step + 1 == power;
                let mut nextp = Vec::new();
                for a in &partial {
                    for b in v {
                        let ab = group.mul(a, b);
                        products += 1;
                        if last {
                            if !next.contains(&ab) {
                                return Err(Error::Filtration {
                                    level: self.levels[pos].index,
                                    reason: format!(
                                        "growth law fails: product {ab} of level {} is not in level {}",
                                        self.levels[pos].index, self.levels[target].index
                                    ),
                                });
                            }
                        } else {
                            nextp.push(ab);
                        }
                    }
                }
                partial = dedup(nextp);
            }
        }
        if self.law == GrowthLaw::BirkhoffCubes {
            if let Some(u) = &universe {
                let top = &self.levels.last().unwrap().set;
                if let Some(g) = u.iter().find(|g| !top.contains(g)) {
                    return Err(Error::Filtration {
                        level: self.levels.last().unwrap().index,
                        reason: format!("levels do not cover {g}"),
                    });
                }
            }
        }
        Ok(FiltrationCheck {
            exhaustive,
            level_sizes: self
                .levels
                .iter()
                .zip(&members)
                .map(|(l, m)| (l.index, m.len()))
                .collect(),
            products_checked: products,
        })
    }
}

fn dedup(v: Vec<Element>) -> Vec<Element> {
    let mut seen = HashSet::new();
    v.into_iter()
        .filter(|g| match g.key() {
            Some(k) => seen.insert(k),
            None => true,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::CayleyTable;

    fn d16_levels() -> Vec<(i32, Vec<Element>)> {
        let t = |i: usize| Element::Table(i);
        vec![
            (0, (0..16).map(t).collect()),
            (1, vec![t(0), t(1), t(7), t(2), t(6), t(8), t(9)]),
            (2, vec![t(0), t(1), t(7)]),
            (3, vec![t(0)]),
        ]
    }

    #[test]
    fn dihedral_squares_filtration_verifies() {
        let g = Group::finite_table(CayleyTable::dihedral(8));
        let f = Filtration::from_elements(GrowthLaw::KakutaniSquares, "d16", d16_levels()).unwrap();
        let check = f.verify(&g, None, 0, 0).unwrap();
        assert!(check.exhaustive);
        assert_eq!(check.level_sizes, vec![(0, 16), (1, 7), (2, 3), (3, 1)]);
    }

    #[test]
    fn asymmetric_level_is_named() {
        let g = Group::finite_table(CayleyTable::dihedral(8));
        let mut levels = d16_levels();
        levels[2].1 = vec![Element::Table(0), Element::Table(1)];
        let f = Filtration::from_elements(GrowthLaw::KakutaniSquares, "bad", levels).unwrap();
        match f.verify(&g, None, 0, 0) {
            Err(Error::Filtration { level, reason }) => {
                assert_eq!(level, 2);
                assert!(reason.contains("symmetric"));
            }
            other => panic!("expected a level error, got {other:?}"),
        }
    }

    #[test]
    fn growth_violation_is_detected() {
        let g = Group::cyclic_tower(2, 4);
        // level 3 = {0, ±1} squares to {0, ±1, ±2}, which is not inside level 2
        let i = Element::int;
        let lv = vec![
            (0, g.elements().unwrap()),
            (1, vec![i(0), i(1), i(15), i(2), i(14)]),
            (2, vec![i(0), i(1), i(15)]),
            (3, vec![i(0), i(1), i(15)]),
        ];
        let f = Filtration::from_elements(GrowthLaw::KakutaniSquares, "bad", lv).unwrap();
        assert!(matches!(
            f.verify(&g, None, 0, 0),
            Err(Error::Filtration { level: 3, .. })
        ));
    }

    #[test]
    fn integer_intervals_on_window() {
        let z = Group::integer_lattice(1);
        let f = Filtration::integer_intervals(7);
        let w = Window::Interval { lo: -100, hi: 100 };
        f.verify(&z, Some(&w), 0, 0).unwrap();
        assert_eq!(f.gauge(&z, &Element::int(4)), Some(4.0));
        assert_eq!(f.gauge(&z, &Element::int(1)), Some(2.0));
        assert_eq!(f.gauge(&z, &Element::int(0)), Some(0.0));
    }

    #[test]
    fn tower_gauge_is_valuation() {
        let g = Group::cyclic_tower(2, 10);
        let f = Filtration::subgroup_tower(&g, GrowthLaw::KakutaniSquares).unwrap();
        f.verify(&g, None, 0, 0).unwrap();
        for x in 1..1024i64 {
            assert_eq!(
                f.gauge(&g, &Element::int(x)),
                Some(0.5f64.powi(x.trailing_zeros() as i32))
            );
        }
    }

    #[test]
    fn infinite_group_without_window_needs_one() {
        let z = Group::integer_lattice(1);
        let f = Filtration::integer_intervals(3);
        assert!(matches!(f.verify(&z, None, 0, 0), Err(Error::NeedsWindow)));
    }

    #[test]
    fn gaps_in_indices_are_rejected() {
        let lv = vec![(0, vec![Element::int(0)]), (2, vec![Element::int(0)])];
        assert!(Filtration::from_elements(GrowthLaw::BirkhoffCubes, "gap", lv).is_err());
    }
}
