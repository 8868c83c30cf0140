//! Finite groups given by an explicit multiplication table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CayleyTable {
    name: String,
    order: usize,
    /// Row-major products: `mul[a * order + b] = a·b`.
    mul: Vec<usize>,
    inv: Vec<usize>,
    identity: usize,
}

impl CayleyTable {
    /// Builds a table from rows, checking closure, identity, inverses and
    /// associativity (exhaustively up to order 128, otherwise on a stride).
    pub fn from_rows(name: impl Into<String>, rows: &[Vec<usize>]) -> Result<Self> {
        let name = name.into();
        let order = rows.len();
        let bad = |detail: String| Error::PayloadMismatch {
            group: format!("table {name}"),
            detail,
        };
        if order == 0 {
            return Err(bad("empty table".into()));
        }
        let mut mul = Vec::with_capacity(order * order);
        for (a, row) in rows.iter().enumerate() {
            if row.len() != order {
                return Err(bad(format!("row {a} has length {}", row.len())));
            }
            if let Some(&x) = row.iter().find(|&&x| x >= order) {
                return Err(bad(format!("row {a} contains out-of-range entry {x}")));
            }
            mul.extend_from_slice(row);
        }
        let identity = (0..order)
            .find(|&e| (0..order).all(|a| mul[e * order + a] == a && mul[a * order + e] == a))
            .ok_or_else(|| bad("no two-sided identity".into()))?;
        let mut inv = vec![usize::MAX; order];
        for a in 0..order {
            inv[a] = (0..order)
                .find(|&b| mul[a * order + b] == identity && mul[b * order + a] == identity)
                .ok_or_else(|| bad(format!("element {a} has no inverse")))?;
        }
        let stride = if order <= 128 { 1 } else { order / 61 + 1 };
        for a in (0..order).step_by(stride) {
            for b in (0..order).step_by(stride) {
                for c in (0..order).step_by(stride) {
                    let ab = mul[a * order + b];
                    let bc = mul[b * order + c];
                    if mul[ab * order + c] != mul[a * order + bc] {
                        return Err(bad(format!("associativity fails at ({a},{b},{c})")));
                    }
                }
            }
        }
        Ok(Self {
            name,
            order,
            mul,
            inv,
            identity,
        })
    }

    /// Cyclic group Z/n with element k ↦ index k.
    pub fn cyclic(n: usize) -> Self {
        let rows: Vec<Vec<usize>> = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
        Self::from_rows(format!("Z/{n}"), &rows).expect("cyclic table is a group")
    }

    /// Dihedral group of order `2m`. Index `k` is the rotation `r^k` for
    /// `k < m` and the reflection `s r^{k-m}` otherwise.
    pub fn dihedral(m: usize) -> Self {
        assert!(m >= 1);
        let decode = |x: usize| if x < m { (false, x) } else { (true, x - m) };
        let encode = |(refl, k): (bool, usize)| if refl { m + k } else { k };
        let rows: Vec<Vec<usize>> = (0..2 * m)
            .map(|a| {
                (0..2 * m)
                    .map(|b| {
                        let (sa, ka) = decode(a);
                        let (sb, kb) = decode(b);
                        // r^ka s^sa · r^kb s^sb written in the normal form s^e r^k
                        // with s r = r^{-1} s:  (s^sa r^ka)(s^sb r^kb)
                        let k = if sb { (m + kb - ka % m) % m } else { (ka + kb) % m };
                        encode((sa ^ sb, k))
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(format!("D{}", 2 * m), &rows).expect("dihedral table is a group")
    }

    /// Symmetric group on `n ≤ 6` letters, permutations in lexicographic order.
    pub fn symmetric(n: usize) -> Self {
        assert!((1..=6).contains(&n), "symmetric group supported for n ≤ 6");
        let perms = permutations(n);
        let index = |p: &[usize]| perms.iter().position(|q| q.as_slice() == p).unwrap();
        let rows: Vec<Vec<usize>> = perms
            .iter()
            .map(|p| {
                perms
                    .iter()
                    .map(|q| {
                        // (p·q)(i) = p(q(i))
                        let pq: Vec<usize> = (0..n).map(|i| p[q[i]]).collect();
                        index(&pq)
                    })
                    .collect()
            })
            .collect();
        Self::from_rows(format!("S{n}"), &rows).expect("symmetric table is a group")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mul[a * self.order + b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inv[a]
    }

    pub fn is_abelian(&self) -> bool {
        (0..self.order).all(|a| (0..a).all(|b| self.mul(a, b) == self.mul(b, a)))
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}
