//! Group elements, group kinds and the arithmetic shared by every module.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::table::CayleyTable;

/// Largest group order for which exhaustive enumeration is offered.
pub const EXHAUSTIVE_LIMIT: u64 = 1 << 16;

/// Default drift bound before a unitary payload is re-projected.
pub const DEFAULT_UNITARITY_TOL: f64 = 1e-12;

/// Concrete payload of a group element.
///
/// Free-group letters are encoded as `±(i + 1)` for generator `i`, with the
/// sign marking the formal inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ElementRepr", try_from = "ElementRepr")]
pub enum Element {
    Matrix(CMat),
    Vector(Vec<f64>),
    Word(Vec<i32>),
    Residues(Vec<i64>),
    Table(usize),
}

/// Hashable identity of an element; matrices have none.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElementKey {
    Bits(Vec<u64>),
    Word(Vec<i32>),
    Residues(Vec<i64>),
    Table(usize),
}

impl Element {
    pub fn key(&self) -> Option<ElementKey> {
        match self {
            Element::Matrix(_) => None,
            // -0.0 and 0.0 are the same group element
            Element::Vector(v) => Some(ElementKey::Bits(
                v.iter().map(|x| if *x == 0.0 { 0 } else { x.to_bits() }).collect(),
            )),
            Element::Word(w) => Some(ElementKey::Word(w.clone())),
            Element::Residues(r) => Some(ElementKey::Residues(r.clone())),
            Element::Table(i) => Some(ElementKey::Table(*i)),
        }
    }

    pub fn scalar(x: f64) -> Self {
        Element::Vector(vec![x])
    }

    pub fn int(x: i64) -> Self {
        Element::Residues(vec![x])
    }

    pub fn as_matrix(&self) -> Option<&CMat> {
        match self {
            Element::Matrix(m) => Some(m),
            _ => None,
        }
    }

    /// Parses a word like `"abA"`; lower case letters are generators,
    /// upper case their inverses. The result is freely reduced.
    pub fn word(s: &str) -> Result<Self> {
        let mut letters = Vec::with_capacity(s.len());
        for c in s.chars() {
            let l = match c {
                'a'..='z' => (c as i32 - 'a' as i32) + 1,
                'A'..='Z' => -((c as i32 - 'A' as i32) + 1),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "word letter {c:?} is not an ASCII letter"
                    )))
                }
            };
            letters.push(l);
        }
        Ok(Element::Word(reduce(letters)))
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Element::Matrix(m) => {
                write!(f, "[")?;
                for i in 0..m.nrows() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    for j in 0..m.ncols() {
                        if j > 0 {
                            write!(f, ", ")?;
                        }
                        let z = m[(i, j)];
                        write!(f, "{:.6}{:+.6}i", z.re, z.im)?;
                    }
                }
                write!(f, "]")
            }
            Element::Vector(v) => write!(f, "{v:?}"),
            Element::Word(w) => {
                if w.is_empty() {
                    return write!(f, "ε");
                }
                for &l in w {
                    let c = if l > 0 {
                        (b'a' + (l - 1) as u8) as char
                    } else {
                        (b'A' + (-l - 1) as u8) as char
                    };
                    write!(f, "{c}")?;
                }
                Ok(())
            }
            Element::Residues(r) => write!(f, "{r:?}"),
            Element::Table(i) => write!(f, "#{i}"),
        }
    }
}

/// Serialised form of [`Element`]; matrices are row-major `re`/`im` arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ElementRepr {
    Matrix { n: usize, re: Vec<f64>, im: Vec<f64> },
    Vector(Vec<f64>),
    Word(Vec<i32>),
    Residues(Vec<i64>),
    Table(usize),
}

impl From<Element> for ElementRepr {
    fn from(e: Element) -> Self {
        match e {
            Element::Matrix(m) => {
                let n = m.nrows();
                let mut re = Vec::with_capacity(n * n);
                let mut im = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        re.push(m[(i, j)].re);
                        im.push(m[(i, j)].im);
                    }
                }
                ElementRepr::Matrix { n, re, im }
            }
            Element::Vector(v) => ElementRepr::Vector(v),
            Element::Word(w) => ElementRepr::Word(w),
            Element::Residues(r) => ElementRepr::Residues(r),
            Element::Table(i) => ElementRepr::Table(i),
        }
    }
}

impl TryFrom<ElementRepr> for Element {
    type Error = String;
    fn try_from(r: ElementRepr) -> std::result::Result<Self, String> {
        Ok(match r {
            ElementRepr::Matrix { n, re, im } => {
                if re.len() != n * n || im.len() != n * n {
                    return Err(format!("matrix payload needs {} entries", n * n));
                }
                Element::Matrix(CMat::from_fn(n, n, |i, j| Complex64::new(re[i * n + j], im[i * n + j])))
            }
            ElementRepr::Vector(v) => Element::Vector(v),
            ElementRepr::Word(w) => Element::Word(w),
            ElementRepr::Residues(r) => Element::Residues(r),
            ElementRepr::Table(i) => Element::Table(i),
        })
    }
}

/// The concrete groups the crate knows how to compute in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupKind {
    /// U(n) with complex matrix payloads.
    Unitary {
        n: usize,
    },
    /// SO(n), real orthogonal matrices stored as complex payloads.
    SpecialOrthogonal {
        n: usize,
    },
    /// GL(n, C).
    GeneralLinear {
        n: usize,
    },
    /// Diagonal unitary matrices, the maximal torus of U(n).
    DiagonalTorus {
        n: usize,
    },
    /// (R^dim, +).
    RealVector {
        dim: usize,
    },
    /// Upper unitriangular integer n×n matrices; payload holds the entries
    /// above the diagonal in row-major order.
    Heisenberg {
        n: usize,
    },
    FreeGroup {
        rank: usize,
    },
    /// (Z^dim, +).
    IntegerLattice {
        dim: usize,
    },
    FiniteTable {
        table: Arc<CayleyTable>,
    },
    /// Z / p^depth with its chain of subgroups p^k Z / p^depth Z.
    CyclicTower {
        p: u64,
        depth: u32,
    },
    /// (Z/2)^depth with the coordinate filtration.
    Involutions {
        depth: u32,
    },
}

/// A group together with its numerical settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub kind: GroupKind,
    pub unitarity_tol: f64,
    pub sampler_seed: u64,
}

impl Group {
    pub fn new(kind: GroupKind) -> Self {
        Self {
            kind,
            unitarity_tol: DEFAULT_UNITARITY_TOL,
            sampler_seed: 0,
        }
    }

    pub fn unitary(n: usize) -> Self {
        Self::new(GroupKind::Unitary { n })
    }
    pub fn special_orthogonal(n: usize) -> Self {
        Self::new(GroupKind::SpecialOrthogonal { n })
    }
    pub fn general_linear(n: usize) -> Self {
        Self::new(GroupKind::GeneralLinear { n })
    }
    pub fn diagonal_torus(n: usize) -> Self {
        Self::new(GroupKind::DiagonalTorus { n })
    }
    pub fn real_vector(dim: usize) -> Self {
        Self::new(GroupKind::RealVector { dim })
    }
    pub fn heisenberg(n: usize) -> Self {
        assert!(n >= 2, "heisenberg group needs n ≥ 2");
        Self::new(GroupKind::Heisenberg { n })
    }
    pub fn free_group(rank: usize) -> Self {
        assert!((1..=26).contains(&rank), "free group rank must be in 1..=26");
        Self::new(GroupKind::FreeGroup { rank })
    }
    pub fn integer_lattice(dim: usize) -> Self {
        Self::new(GroupKind::IntegerLattice { dim })
    }
    pub fn finite_table(table: CayleyTable) -> Self {
        Self::new(GroupKind::FiniteTable { table: Arc::new(table) })
    }
    pub fn cyclic_tower(p: u64, depth: u32) -> Self {
        assert!(p >= 2, "cyclic tower needs p ≥ 2");
        assert!(p.checked_pow(depth).is_some_and(|m| m <= i64::MAX as u64));
        Self::new(GroupKind::CyclicTower { p, depth })
    }
    pub fn involutions(depth: u32) -> Self {
        assert!(depth <= 62);
        Self::new(GroupKind::Involutions { depth })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sampler_seed = seed;
        self
    }

    pub fn with_unitarity_tol(mut self, tol: f64) -> Self {
        self.unitarity_tol = tol;
        self
    }

    pub fn name(&self) -> String {
        match &self.kind {
            GroupKind::Unitary { n } => format!("U({n})"),
            GroupKind::SpecialOrthogonal { n } => format!("SO({n})"),
            GroupKind::GeneralLinear { n } => format!("GL({n},C)"),
            GroupKind::DiagonalTorus { n } => format!("T^{n}⊂U({n})"),
            GroupKind::RealVector { dim } => format!("R^{dim}"),
            GroupKind::Heisenberg { n } => format!("UT({n},Z)"),
            GroupKind::FreeGroup { rank } => format!("F{rank}"),
            GroupKind::IntegerLattice { dim } => format!("Z^{dim}"),
            GroupKind::FiniteTable { table } => table.name().to_string(),
            GroupKind::CyclicTower { p, depth } => format!("Z/{p}^{depth}"),
            GroupKind::Involutions { depth } => format!("(Z/2)^{depth}"),
        }
    }

    /// Matrix dimension for matrix kinds.
    pub fn matrix_dim(&self) -> Option<usize> {
        match self.kind {
            GroupKind::Unitary { n }
            | GroupKind::SpecialOrthogonal { n }
            | GroupKind::GeneralLinear { n }
            | GroupKind::DiagonalTorus { n } => Some(n),
            _ => None,
        }
    }

    fn is_compact_matrix(&self) -> bool {
        matches!(
            self.kind,
            GroupKind::Unitary { .. } | GroupKind::SpecialOrthogonal { .. } | GroupKind::DiagonalTorus { .. }
        )
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(
            self.kind,
            GroupKind::Unitary { .. }
                | GroupKind::SpecialOrthogonal { .. }
                | GroupKind::GeneralLinear { .. }
                | GroupKind::DiagonalTorus { .. }
                | GroupKind::RealVector { .. }
        )
    }

    pub fn order(&self) -> Option<u64> {
        match &self.kind {
            GroupKind::FiniteTable { table } => Some(table.order() as u64),
            GroupKind::CyclicTower { p, depth } => Some(p.pow(*depth)),
            GroupKind::Involutions { depth } => Some(1u64 << depth),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.order().is_some()
    }

    pub fn is_abelian(&self) -> bool {
        match &self.kind {
            GroupKind::Unitary { n } | GroupKind::SpecialOrthogonal { n } | GroupKind::GeneralLinear { n } => {
                *n <= 1 || matches!(self.kind, GroupKind::SpecialOrthogonal { n: 2 })
            }
            GroupKind::DiagonalTorus { .. }
            | GroupKind::RealVector { .. }
            | GroupKind::IntegerLattice { .. }
            | GroupKind::CyclicTower { .. }
            | GroupKind::Involutions { .. } => true,
            GroupKind::Heisenberg { n } => *n <= 2,
            GroupKind::FreeGroup { rank } => *rank <= 1,
            GroupKind::FiniteTable { table } => table.is_abelian(),
        }
    }

    fn modulus(&self) -> i64 {
        match self.kind {
            GroupKind::CyclicTower { p, depth } => p.pow(depth) as i64,
            _ => unreachable!("modulus on non-cyclic kind"),
        }
    }

    fn heisenberg_len(n: usize) -> usize {
        n * (n - 1) / 2
    }

    pub fn identity(&self) -> Element {
        match &self.kind {
            GroupKind::Unitary { n }
            | GroupKind::SpecialOrthogonal { n }
            | GroupKind::GeneralLinear { n }
            | GroupKind::DiagonalTorus { n } => Element::Matrix(linalg::identity(*n)),
            GroupKind::RealVector { dim } => Element::Vector(vec![0.0; *dim]),
            GroupKind::Heisenberg { n } => Element::Residues(vec![0; Self::heisenberg_len(*n)]),
            GroupKind::FreeGroup { .. } => Element::Word(Vec::new()),
            GroupKind::IntegerLattice { dim } => Element::Residues(vec![0; *dim]),
            GroupKind::FiniteTable { table } => Element::Table(table.identity()),
            GroupKind::CyclicTower { .. } => Element::Residues(vec![0]),
            GroupKind::Involutions { depth } => Element::Residues(vec![0; *depth as usize]),
        }
    }

    fn mismatch(&self, detail: impl Into<String>) -> Error {
        Error::PayloadMismatch {
            group: self.name(),
            detail: detail.into(),
        }
    }

    /// Checks that `g` is a valid payload for this group, including the
    /// per-kind invariants (unitarity, reduced words, residue ranges).
    pub fn validate(&self, g: &Element) -> Result<()> {
        match (&self.kind, g) {
            (GroupKind::Unitary { n } | GroupKind::DiagonalTorus { n }, Element::Matrix(m))
            | (GroupKind::SpecialOrthogonal { n }, Element::Matrix(m))
            | (GroupKind::GeneralLinear { n }, Element::Matrix(m)) => {
                if m.nrows() != *n || m.ncols() != *n {
                    return Err(self.mismatch(format!("matrix is {}x{}", m.nrows(), m.ncols())));
                }
                if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(self.mismatch("non-finite entry"));
                }
                let tol = self.unitarity_tol.max(1e-9);
                match self.kind {
                    GroupKind::GeneralLinear { .. } => {
                        if m.clone().try_inverse().is_none() {
                            return Err(self.mismatch("singular matrix"));
                        }
                    }
                    _ => {
                        let defect = linalg::unitarity_defect(m);
                        if defect > tol {
                            return Err(self.mismatch(format!("unitarity defect {defect:.3e}")));
                        }
                    }
                }
                if let GroupKind::SpecialOrthogonal { .. } = self.kind {
                    if m.iter().any(|z| z.im.abs() > tol) {
                        return Err(self.mismatch("imaginary entries in SO(n) payload"));
                    }
                    let det = m.determinant();
                    if (det.re - 1.0).abs() > 1e-6 {
                        return Err(self.mismatch(format!("determinant {det}")));
                    }
                }
                if let GroupKind::DiagonalTorus { .. } = self.kind {
                    for i in 0..*n {
                        for j in 0..*n {
                            if i != j && m[(i, j)].norm() > tol {
                                return Err(self.mismatch("off-diagonal entry in torus payload"));
                            }
                        }
                    }
                }
                Ok(())
            }
            (GroupKind::RealVector { dim }, Element::Vector(v)) => {
                if v.len() != *dim || v.iter().any(|x| !x.is_finite()) {
                    return Err(self.mismatch(format!("vector of length {}", v.len())));
                }
                Ok(())
            }
            (GroupKind::FreeGroup { rank }, Element::Word(w)) => {
                if w.iter().any(|&l| l == 0 || l.unsigned_abs() as usize > *rank) {
                    return Err(self.mismatch("letter outside the alphabet"));
                }
                if w.windows(2).any(|p| p[0] == -p[1]) {
                    return Err(self.mismatch("word is not freely reduced"));
                }
                Ok(())
            }
            (GroupKind::IntegerLattice { dim }, Element::Residues(r)) => {
                if r.len() != *dim {
                    return Err(self.mismatch(format!("{} coordinates", r.len())));
                }
                Ok(())
            }
            (GroupKind::Heisenberg { n }, Element::Residues(r)) => {
                if r.len() != Self::heisenberg_len(*n) {
                    return Err(self.mismatch(format!("{} coordinates", r.len())));
                }
                Ok(())
            }
            (GroupKind::CyclicTower { .. }, Element::Residues(r)) => {
                if r.len() != 1 || r[0] < 0 || r[0] >= self.modulus() {
                    return Err(self.mismatch(format!("residue {r:?}")));
                }
                Ok(())
            }
            (GroupKind::Involutions { depth }, Element::Residues(r)) => {
                if r.len() != *depth as usize || r.iter().any(|&x| x != 0 && x != 1) {
                    return Err(self.mismatch(format!("residues {r:?}")));
                }
                Ok(())
            }
            (GroupKind::FiniteTable { table }, Element::Table(i)) => {
                if *i >= table.order() {
                    return Err(self.mismatch(format!("index {i} ≥ order {}", table.order())));
                }
                Ok(())
            }
            _ => Err(self.mismatch("payload type does not match the group kind")),
        }
    }

    /// Checked product.
    pub fn multiply(&self, a: &Element, b: &Element) -> Result<Element> {
        self.validate(a)?;
        self.validate(b)?;
        Ok(self.mul(a, b))
    }

    /// Product of two valid elements. Panics on a payload mismatch, which
    /// only happens when elements of different groups are mixed.
    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        match (&self.kind, a, b) {
            (_, Element::Matrix(x), Element::Matrix(y)) => {
                let p = x * y;
                Element::Matrix(self.reproject(p))
            }
            (_, Element::Vector(x), Element::Vector(y)) => {
                Element::Vector(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (_, Element::Word(x), Element::Word(y)) => {
                let mut out = x.clone();
                for &l in y {
                    if out.last() == Some(&-l) {
                        out.pop();
                    } else {
                        out.push(l);
                    }
                }
                Element::Word(out)
            }
            (GroupKind::IntegerLattice { .. }, Element::Residues(x), Element::Residues(y)) => {
                Element::Residues(x.iter().zip(y).map(|(p, q)| p + q).collect())
            }
            (GroupKind::CyclicTower { .. }, Element::Residues(x), Element::Residues(y)) => {
                let m = self.modulus();
                Element::Residues(vec![((x[0] as i128 + y[0] as i128) % m as i128) as i64])
            }
            (GroupKind::Involutions { .. }, Element::Residues(x), Element::Residues(y)) => {
                Element::Residues(x.iter().zip(y).map(|(p, q)| p ^ q).collect())
            }
            (GroupKind::Heisenberg { n }, Element::Residues(x), Element::Residues(y)) => {
                Element::Residues(heis_mul(*n, x, y))
            }
            (GroupKind::FiniteTable { table }, Element::Table(x), Element::Table(y)) => {
                Element::Table(table.mul(*x, *y))
            }
            _ => panic!("element payloads {a} and {b} do not belong to {}", self.name()),
        }
    }

    fn reproject(&self, p: CMat) -> CMat {
        if self.is_compact_matrix() && linalg::unitarity_defect(&p) > self.unitarity_tol {
            let mut q = linalg::polar_unitary(&p);
            if let GroupKind::SpecialOrthogonal { .. } = self.kind {
                q.iter_mut().for_each(|z| z.im = 0.0);
            }
            if let GroupKind::DiagonalTorus { n } = self.kind {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            q[(i, j)] = Complex64::new(0.0, 0.0);
                        }
                    }
                }
            }
            q
        } else {
            p
        }
    }

    pub fn invert(&self, a: &Element) -> Element {
        match (&self.kind, a) {
            (GroupKind::GeneralLinear { .. }, Element::Matrix(m)) => {
                Element::Matrix(m.clone().try_inverse().expect("GL payload is invertible"))
            }
            (_, Element::Matrix(m)) => Element::Matrix(m.adjoint()),
            (_, Element::Vector(v)) => Element::Vector(v.iter().map(|x| -x).collect()),
            (_, Element::Word(w)) => Element::Word(w.iter().rev().map(|l| -l).collect()),
            (GroupKind::IntegerLattice { .. }, Element::Residues(r)) => {
                Element::Residues(r.iter().map(|x| -x).collect())
            }
            (GroupKind::CyclicTower { .. }, Element::Residues(r)) => {
                let m = self.modulus();
                Element::Residues(vec![(m - r[0]) % m])
            }
            (GroupKind::Involutions { .. }, Element::Residues(r)) => Element::Residues(r.clone()),
            (GroupKind::Heisenberg { n }, Element::Residues(r)) => Element::Residues(heis_inv(*n, r)),
            (GroupKind::FiniteTable { table }, Element::Table(i)) => Element::Table(table.inv(*i)),
            _ => panic!("element {a} does not belong to {}", self.name()),
        }
    }

    /// `g^n` by square-and-multiply; negative exponents go through the inverse.
    pub fn power(&self, g: &Element, n: i64) -> Element {
        let base = if n < 0 { self.invert(g) } else { g.clone() };
        let mut e = n.unsigned_abs();
        let mut acc = self.identity();
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(&acc, &sq);
            }
            e >>= 1;
            if e > 0 {
                sq = self.mul(&sq, &sq);
            }
        }
        acc
    }

    /// `f⁻¹ g f`.
    pub fn conjugate(&self, g: &Element, f: &Element) -> Element {
        self.mul(&self.mul(&self.invert(f), g), f)
    }

    /// `h⁻¹ g`, the element whose norm is the left-invariant distance.
    pub fn quotient(&self, g: &Element, h: &Element) -> Element {
        self.mul(&self.invert(h), g)
    }

    pub fn is_identity(&self, g: &Element) -> bool {
        self.approx_eq(g, &self.identity(), 0.0)
    }

    /// Payload equality: exact for discrete kinds, entrywise within `tol`
    /// for matrices and vectors.
    pub fn approx_eq(&self, a: &Element, b: &Element, tol: f64) -> bool {
        match (a, b) {
            (Element::Matrix(x), Element::Matrix(y)) => x.shape() == y.shape() && linalg::max_abs_diff(x, y) <= tol,
            (Element::Vector(x), Element::Vector(y)) => {
                x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol)
            }
            _ => a == b,
        }
    }

    /// All elements, for finite groups of order at most [`EXHAUSTIVE_LIMIT`].
    pub fn elements(&self) -> Option<Vec<Element>> {
        let order = self.order()?;
        if order > EXHAUSTIVE_LIMIT {
            return None;
        }
        Some((0..order as usize).map(|i| self.element_at(i)).collect())
    }

    /// Position of `g` in [`Group::elements`] for finite groups.
    pub fn element_index(&self, g: &Element) -> Option<usize> {
        match (&self.kind, g) {
            (GroupKind::FiniteTable { .. }, Element::Table(i)) => Some(*i),
            (GroupKind::CyclicTower { .. }, Element::Residues(r)) => Some(r[0] as usize),
            (GroupKind::Involutions { .. }, Element::Residues(r)) => {
                Some(r.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum())
            }
            _ => None,
        }
    }

    /// Inverse of [`Group::element_index`].
    pub fn element_at(&self, i: usize) -> Element {
        match &self.kind {
            GroupKind::FiniteTable { .. } => Element::Table(i),
            GroupKind::CyclicTower { .. } => Element::Residues(vec![i as i64]),
            GroupKind::Involutions { depth } => Element::Residues((0..*depth).map(|b| ((i >> b) & 1) as i64).collect()),
            _ => panic!("element_at on infinite group {}", self.name()),
        }
    }

    /// Standard symmetric generating set of a discrete group.
    pub fn generators(&self) -> Option<Vec<Element>> {
        let unit = |dim: usize, i: usize, s: i64| {
            let mut v = vec![0; dim];
            v[i] = s;
            Element::Residues(v)
        };
        match &self.kind {
            GroupKind::IntegerLattice { dim } => {
                Some((0..*dim).flat_map(|i| [unit(*dim, i, 1), unit(*dim, i, -1)]).collect())
            }
            GroupKind::FreeGroup { rank } => Some(
                (1..=*rank as i32)
                    .flat_map(|l| [Element::Word(vec![l]), Element::Word(vec![-l])])
                    .collect(),
            ),
            GroupKind::Heisenberg { n } => {
                let len = Self::heisenberg_len(*n);
                // elementary matrices E_{i,i+1}
                let mut gens = Vec::new();
                for i in 0..n - 1 {
                    let pos = heis_index(*n, i, i + 1);
                    gens.push(unit(len, pos, 1));
                    gens.push(unit(len, pos, -1));
                }
                Some(gens)
            }
            GroupKind::CyclicTower { .. } => {
                let m = self.modulus();
                let mut g = vec![Element::Residues(vec![1 % m])];
                if m > 2 {
                    g.push(Element::Residues(vec![m - 1]));
                }
                Some(g)
            }
            GroupKind::Involutions { depth } => {
                Some((0..*depth as usize).map(|i| unit(*depth as usize, i, 1)).collect())
            }
            GroupKind::FiniteTable { table } => Some(
                (0..table.order())
                    .filter(|&i| i != table.identity())
                    .map(Element::Table)
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Breadth-first enumeration over [`Group::generators`], returning
    /// elements grouped by word length. Stops after `max_radius` layers or
    /// `max_nodes` elements.
    pub fn word_layers(&self, max_radius: usize, max_nodes: usize) -> Option<Vec<Vec<Element>>> {
        let gens = self.generators()?;
        let id = self.identity();
        let mut seen: HashSet<ElementKey> = HashSet::new();
        seen.insert(id.key()?);
        let mut layers = vec![vec![id]];
        let mut total = 1;
        for _ in 0..max_radius {
            let mut next = Vec::new();
            for g in layers.last().unwrap() {
                for s in &gens {
                    let h = self.mul(g, s);
                    if seen.insert(h.key().unwrap()) {
                        next.push(h);
                        total += 1;
                    }
                }
                if total >= max_nodes {
                    break;
                }
            }
            if next.is_empty() {
                break;
            }
            layers.push(next);
            if total >= max_nodes {
                break;
            }
        }
        Some(layers)
    }

    /// Tangent direction for random sampling near the identity: unit
    /// operator norm for matrix kinds, unit Euclidean norm for vectors.
    pub fn random_tangent<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<CMatOrVec> {
        Some(match self.kind {
            GroupKind::Unitary { n } => CMatOrVec::Mat(linalg::random_skew_hermitian(n, rng)),
            GroupKind::SpecialOrthogonal { n } => CMatOrVec::Mat(linalg::random_skew_symmetric(n, rng)),
            GroupKind::DiagonalTorus { n } => CMatOrVec::Mat(linalg::random_diagonal_skew(n, rng)),
            GroupKind::GeneralLinear { n } => CMatOrVec::Mat(linalg::random_complex(n, rng)),
            GroupKind::RealVector { dim } => {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if nrm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= nrm);
                }
                CMatOrVec::Vec(v)
            }
            _ => return None,
        })
    }

    /// `exp(t · X)` for a tangent direction `X`.
    pub fn exp_tangent(&self, x: &CMatOrVec, t: f64) -> Element {
        match x {
            CMatOrVec::Mat(a) => {
                let e = linalg::expm(&(a * Complex64::new(t, 0.0)));
                Element::Matrix(self.reproject(e))
            }
            CMatOrVec::Vec(v) => Element::Vector(v.iter().map(|c| c * t).collect()),
        }
    }

    /// Largest useful tangent magnitude: beyond it `exp(tX)` wraps around.
    pub fn tangent_limit(&self) -> f64 {
        if self.is_compact_matrix() {
            std::f64::consts::PI
        } else {
            f64::INFINITY
        }
    }

    /// Random element at coarse scale `scale` (used for large-scale sampling).
    pub fn random_at_scale<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64) -> Element {
        let s = scale.max(0.0);
        match &self.kind {
            GroupKind::IntegerLattice { dim } => Element::Residues(
                (0..*dim)
                    .map(|_| (rng.random_range(-1.0..=1.0) * s).round() as i64)
                    .collect(),
            ),
            GroupKind::Heisenberg { n } => {
                let gens = self.generators().unwrap();
                let steps = (s.round() as usize).min(1 << 14);
                let mut g = self.identity();
                for _ in 0..steps {
                    g = self.mul(&g, &gens[rng.random_range(0..gens.len())]);
                }
                let _ = n;
                g
            }
            GroupKind::FreeGroup { rank } => {
                let len = (s.round() as usize).min(1 << 14);
                let mut w: Vec<i32> = Vec::with_capacity(len);
                while w.len() < len {
                    let l = rng.random_range(1..=*rank as i32) * if rng.random() { 1 } else { -1 };
                    if w.last() != Some(&-l) {
                        w.push(l);
                    }
                }
                Element::Word(w)
            }
            GroupKind::FiniteTable { .. } | GroupKind::CyclicTower { .. } | GroupKind::Involutions { .. } => {
                let elems = self.elements().expect("finite group enumerable");
                elems[rng.random_range(0..elems.len())].clone()
            }
            _ => {
                let x = self.random_tangent(rng).unwrap();
                let t = if self.is_compact_matrix() {
                    rng.random_range(0.0..=std::f64::consts::PI)
                } else {
                    s * rng.random_range(0.5..=1.0)
                };
                self.exp_tangent(&x, t)
            }
        }
    }

    /// Embeds an element of `self` (a subgroup) into `parent`'s payload type.
    pub fn embed_into(&self, parent: &Group, g: &Element) -> Result<Element> {
        let err = || Error::Embedding {
            sub: self.name(),
            parent: parent.name(),
        };
        if self.order() == Some(1) {
            return Ok(parent.identity());
        }
        let out = match (&self.kind, &parent.kind) {
            (a, b) if a == b => g.clone(),
            (
                GroupKind::DiagonalTorus { n } | GroupKind::SpecialOrthogonal { n },
                GroupKind::Unitary { n: m } | GroupKind::GeneralLinear { n: m },
            ) if n == m => g.clone(),
            (GroupKind::Unitary { n }, GroupKind::GeneralLinear { n: m }) if n == m => g.clone(),
            (GroupKind::IntegerLattice { dim }, GroupKind::RealVector { dim: d2 }) if dim == d2 => match g {
                Element::Residues(r) => Element::Vector(r.iter().map(|&x| x as f64).collect()),
                _ => return Err(err()),
            },
            _ => return Err(err()),
        };
        parent.validate(&out).map_err(|_| err())?;
        Ok(out)
    }
}

/// Tangent vector for continuous kinds.
#[derive(Debug, Clone)]
pub enum CMatOrVec {
    Mat(CMat),
    Vec(Vec<f64>),
}

/// Freely reduces a word.
pub fn reduce(letters: Vec<i32>) -> Vec<i32> {
    let mut out: Vec<i32> = Vec::with_capacity(letters.len());
    for l in letters {
        if out.last() == Some(&-l) {
            out.pop();
        } else {
            out.push(l);
        }
    }
    out
}

pub(crate) fn heis_index(n: usize, i: usize, j: usize) -> usize {
    // row-major position of (i, j), i < j, among strictly upper entries
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

fn heis_mul(n: usize, x: &[i64], y: &[i64]) -> Vec<i64> {
    let at = |v: &[i64], i: usize, j: usize| -> i64 {
        if i == j {
            1
        } else if i < j {
            v[heis_index(n, i, j)]
        } else {
            0
        }
    };
    let mut out = vec![0; x.len()];
    for i in 0..n {
        for j in i + 1..n {
            let mut s = 0i64;
            for k in i..=j {
                s += at(x, i, k) * at(y, k, j);
            }
            out[heis_index(n, i, j)] = s;
        }
    }
    out
}

fn heis_inv(n: usize, x: &[i64]) -> Vec<i64> {
    // back substitution for the inverse of a unitriangular matrix
    let mut out = vec![0i64; x.len()];
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut s = x[heis_index(n, i, j)];
            for k in i + 1..j {
                s += x[heis_index(n, i, k)] * out[heis_index(n, k, j)];
            }
            out[heis_index(n, i, j)] = -s;
        }
    }
    out
}

/// Breadth-first distances from the identity over a generating set, keyed by
/// element. Returns the map and whether the search completed.
pub fn bfs_distances(
    group: &Group,
    gens: &[Element],
    max_radius: usize,
    max_nodes: usize,
) -> (HashMap<ElementKey, usize>, bool) {
    let id = group.identity();
    let mut dist = HashMap::new();
    dist.insert(id.key().expect("discrete group"), 0usize);
    let mut queue = VecDeque::from([(id, 0usize)]);
    let mut complete = true;
    while let Some((g, r)) = queue.pop_front() {
        if r >= max_radius {
            complete = false;
            continue;
        }
        for s in gens {
            let h = group.mul(&g, s);
            let k = h.key().unwrap();
            if !dist.contains_key(&k) {
                if dist.len() >= max_nodes {
                    return (dist, false);
                }
                dist.insert(k, r + 1);
                queue.push_back((h, r + 1));
            }
        }
    }
    (dist, complete)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lattice_addition() {
        let z2 = Group::integer_lattice(2);
        let p = z2.multiply(&Element::Residues(vec![1, 2]), &Element::Residues(vec![3, 4]));
        assert_eq!(p.unwrap(), Element::Residues(vec![4, 6]));
    }

    #[test]
    fn free_reduction() {
        let f2 = Group::free_group(2);
        let p = f2
            .multiply(&Element::word("ab").unwrap(), &Element::word("Ba").unwrap())
            .unwrap();
        assert_eq!(p, Element::word("aa").unwrap());
        assert_eq!(
            f2.power(&Element::word("ab").unwrap(), 2),
            Element::word("abab").unwrap()
        );
        assert_eq!(
            f2.power(&Element::word("ab").unwrap(), -1),
            Element::word("BA").unwrap()
        );
    }

    #[test]
    fn unitary_inverse_law() {
        let u2 = Group::unitary(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Element::Matrix(linalg::haar_unitary(2, &mut rng));
        let p = u2.mul(&g, &u2.invert(&g));
        assert!(u2.approx_eq(&p, &u2.identity(), 1e-12));
    }

    #[test]
    fn scalar_powers() {
        let z = Group::integer_lattice(1);
        assert_eq!(z.power(&Element::int(2), 5), Element::int(10));
        let u1 = Group::unitary(1);
        let g = Element::Matrix(CMat::from_element(1, 1, Complex64::from_polar(1.0, 0.1)));
        let g3 = u1.power(&g, 3);
        let expect = Complex64::from_polar(1.0, 0.3);
        assert!((g3.as_matrix().unwrap()[(0, 0)] - expect).norm() < 1e-14);
    }

    #[test]
    fn payload_mismatch_is_an_error() {
        let z = Group::integer_lattice(1);
        assert!(matches!(
            z.multiply(&Element::int(1), &Element::Table(0)),
            Err(Error::PayloadMismatch { .. })
        ));
        let f2 = Group::free_group(2);
        assert!(f2.validate(&Element::Word(vec![1, -1])).is_err());
        assert!(f2.validate(&Element::Word(vec![3])).is_err());
        let t = Group::cyclic_tower(2, 3);
        assert!(t.validate(&Element::int(8)).is_err());
        let inv = Group::involutions(3);
        assert!(inv.validate(&Element::Residues(vec![0, 2, 0])).is_err());
    }

    #[test]
    fn heisenberg_commutator_is_central() {
        let h = Group::heisenberg(3);
        let x = Element::Residues(vec![1, 0, 0]);
        let y = Element::Residues(vec![0, 0, 1]);
        let comm = h.mul(&h.mul(&x, &y), &h.mul(&h.invert(&x), &h.invert(&y)));
        assert_eq!(comm, Element::Residues(vec![0, 1, 0]));
        for g in [&x, &y, &comm] {
            assert!(h.approx_eq(&h.mul(g, &h.invert(g)), &h.identity(), 0.0));
        }
    }

    #[test]
    fn unitary_drift_stays_controlled() {
        let u3 = Group::unitary(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = u3.random_tangent(&mut rng).unwrap();
        let g = u3.exp_tangent(&x, 0.37);
        let mut acc = u3.identity();
        for _ in 0..10_000 {
            acc = u3.mul(&acc, &g);
        }
        assert!(linalg::unitarity_defect(acc.as_matrix().unwrap()) <= 1e-9);
    }

    #[test]
    fn enumeration_sizes() {
        assert_eq!(Group::cyclic_tower(2, 10).elements().unwrap().len(), 1024);
        assert_eq!(Group::involutions(10).elements().unwrap().len(), 1024);
        assert!(Group::integer_lattice(1).elements().is_none());
        let layers = Group::integer_lattice(2).word_layers(3, 1000).unwrap();
        assert_eq!(layers.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 4, 8, 12]);
    }

    #[test]
    fn element_serde_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = Element::Matrix(linalg::haar_unitary(2, &mut rng));
        let s = serde_json::to_string(&g).unwrap();
        let back: Element = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        let w = Element::word("abA").unwrap();
        let back: Element = serde_json::from_str(&serde_json::to_string(&w).unwrap()).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn embeddings() {
        let t = Group::diagonal_torus(2);
        let u = Group::unitary(2);
        assert!(t.embed_into(&u, &t.identity()).is_ok());
        assert!(u.embed_into(&Group::special_orthogonal(2), &u.identity()).is_err());
        let trivial = Group::cyclic_tower(2, 0);
        assert_eq!(trivial.embed_into(&u, &trivial.identity()).unwrap(), u.identity());
    }
}
