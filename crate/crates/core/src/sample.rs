//! Deterministic samplers for metric balls and dyadic shells.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::group::{CMatOrVec, Element, Group};
use crate::metric::Metric;

/// Cap on elements visited when sweeping an infinite discrete group.
pub const DISCRETE_NODE_CAP: usize = 200_000;

/// Elements drawn from a ball or shell.
#[derive(Debug, Clone)]
pub struct Sample {
    pub elements: Vec<Element>,
    /// True when `elements` is the whole ball or shell.
    pub exhaustive: bool,
}

/// Mixes a base seed with a stream index (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Up to `count` elements of the closed ball `B_d(radius)`.
///
/// Finite groups are enumerated and returned whole when the ball has at
/// most `count` elements. Infinite discrete groups are swept breadth-first
/// until a word-length layer contributes nothing. Continuous groups are
/// sampled through exponentials of random tangent directions and filtered.
pub fn sample_ball(metric: &Metric, radius: f64, count: usize, seed: u64) -> Result<Sample> {
    sample_shell(metric, -1.0, radius, count, seed)
}

/// Up to `count` elements `g` with `lo < d(g, 1) ≤ hi`. A negative `lo`
/// includes the identity.
pub fn sample_shell(metric: &Metric, lo: f64, hi: f64, count: usize, seed: u64) -> Result<Sample> {
    if !(hi > 0.0) || hi <= lo {
        return Err(Error::InvalidArgument(format!("empty radius range ({lo}, {hi}]")));
    }
    let group = metric.group();
    let inside = |g: &Element| {
        let r = metric.norm(g);
        r > lo && r <= hi
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = if let Some(all) = group.elements() {
        let hits: Vec<Element> = all.into_iter().filter(|g| inside(g)).collect();
        subsample(hits, count, &mut rng)
    } else if group.is_discrete() {
        let hits = sweep_discrete(group, metric, lo, hi);
        subsample(hits, count, &mut rng)
    } else {
        continuous_shell(group, metric, lo, hi, count, &mut rng)
    };
    if out.elements.is_empty() {
        return Err(Error::EmptyBall { radius: hi });
    }
    Ok(out)
}

fn subsample(mut hits: Vec<Element>, count: usize, rng: &mut ChaCha8Rng) -> Sample {
    if hits.len() <= count {
        return Sample {
            elements: hits,
            exhaustive: true,
        };
    }
    // partial Fisher-Yates keeps the draw deterministic under the seed
    for i in 0..count {
        let j = rng.random_range(i..hits.len());
        hits.swap(i, j);
    }
    hits.truncate(count);
    Sample {
        elements: hits,
        exhaustive: false,
    }
}

fn sweep_discrete(group: &Group, metric: &Metric, lo: f64, hi: f64) -> Vec<Element> {
    let gens = group.generators().expect("discrete group has generators");
    let id = group.identity();
    let mut seen = HashSet::new();
    seen.insert(id.key().unwrap());
    let mut layer = vec![id];
    let mut hits = Vec::new();
    let mut first = true;
    while !layer.is_empty() && seen.len() < DISCRETE_NODE_CAP {
        let mut any_in_ball = false;
        for g in &layer {
            let r = metric.norm(g);
            if r <= hi {
                any_in_ball = true;
                if r > lo {
                    hits.push(g.clone());
                }
            }
        }
        // the identity layer alone says nothing about where the ball ends
        if !any_in_ball && !first {
            break;
        }
        first = false;
        let mut next = Vec::new();
        for g in &layer {
            for s in &gens {
                let h = group.mul(g, s);
                if seen.insert(h.key().unwrap()) {
                    next.push(h);
                }
            }
        }
        layer = next;
    }
    hits
}

fn continuous_shell(group: &Group, metric: &Metric, lo: f64, hi: f64, count: usize, rng: &mut ChaCha8Rng) -> Sample {
    let lo_eff = lo.max(0.0);
    let t_cap = group.tangent_limit();
    let mut out = Vec::with_capacity(count);
    let attempts = count * 4 + 16;
    for _ in 0..attempts {
        if out.len() == count {
            break;
        }
        let x = group.random_tangent(rng).expect("continuous group");
        let target = lo_eff + (hi - lo_eff) * rng.random::<f64>().max(1e-3);
        let Some(t) = magnitude_for(group, metric, &x, target, t_cap) else {
            continue;
        };
        let g = group.exp_tangent(&x, t);
        let r = metric.norm(&g);
        if r > lo && r <= hi {
            out.push(g);
        }
    }
    Sample {
        elements: out,
        exhaustive: false,
    }
}

/// Finds `t` with `d(exp(tX), 1) ≈ target` by the Illinois variant of
/// regula falsi, assuming the distance grows along the ray up to `t_cap`.
/// The returned `t` never overshoots the target.
fn magnitude_for(group: &Group, metric: &Metric, x: &CMatOrVec, target: f64, t_cap: f64) -> Option<f64> {
    let f = |t: f64| metric.norm(&group.exp_tangent(x, t)) - target;
    let mut hi = if t_cap.is_finite() { t_cap } else { 1.0 };
    let mut f_hi = f(hi);
    if t_cap.is_finite() {
        if f_hi < 0.0 {
            return None;
        }
    } else {
        let mut steps = 0;
        while f_hi < 0.0 {
            hi *= 2.0;
            f_hi = f(hi);
            steps += 1;
            if steps > 200 {
                return None;
            }
        }
    }
    let (mut lo, mut f_lo) = (0.0, -target);
    let tol = 1e-12 * target.max(f64::MIN_POSITIVE);
    let mut side = 0i8;
    for _ in 0..100 {
        if f_hi - f_lo <= 0.0 || hi - lo <= 1e-15 * hi {
            break;
        }
        let t = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let t = if t > lo && t < hi { t } else { 0.5 * (lo + hi) };
        let ft = f(t);
        if ft <= 0.0 {
            lo = t;
            f_lo = ft;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
            if -ft <= tol {
                break;
            }
        } else {
            hi = t;
            f_hi = ft;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }
    Some(lo)
}

/// Dyadic shells `(R / 2^{j+1}, R / 2^j]` for `j = 0..shells`, each sampled
/// from its own derived seed so that shells can be drawn in any order.
pub fn dyadic_shells(
    metric: &Metric,
    radius: f64,
    shells: usize,
    per_shell: usize,
    seed: u64,
) -> Vec<(usize, Result<Sample>)> {
    use rayon::prelude::*;
    let mut out: Vec<(usize, Result<Sample>)> = (0..shells)
        .into_par_iter()
        .map(|j| {
            let hi = radius / 2f64.powi(j as i32);
            let lo = hi / 2.0;
            (j, sample_shell(metric, lo, hi, per_shell, derive_seed(seed, j as u64)))
        })
        .collect();
    out.sort_by_key(|(j, _)| *j);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::native_metric;

    #[test]
    fn integer_ball_is_exhaustive() {
        let z = Group::integer_lattice(1);
        let d = native_metric(&z).unwrap();
        let s = sample_ball(&d, 2.5, 100, 0).unwrap();
        assert!(s.exhaustive);
        let mut got: Vec<i64> = s
            .elements
            .iter()
            .map(|e| match e {
                Element::Residues(r) => r[0],
                _ => unreachable!(),
            })
            .collect();
        got.sort();
        assert_eq!(got, vec![-2, -1, 0, 1, 2]);
    }

    #[test]
    fn unitary_ball_respects_radius() {
        let u2 = Group::unitary(2);
        let d = native_metric(&u2).unwrap();
        let s = sample_ball(&d, 0.3, 100, 42).unwrap();
        assert_eq!(s.elements.len(), 100);
        assert!(s.elements.iter().all(|g| d.norm(g) <= 0.3));
        let again = sample_ball(&d, 0.3, 100, 42).unwrap();
        assert_eq!(s.elements, again.elements);
    }

    #[test]
    fn involution_ball_matches_enumeration() {
        let g = Group::involutions(10);
        let d = native_metric(&g).unwrap();
        let s = sample_ball(&d, 0.125, 2000, 0).unwrap();
        assert!(s.exhaustive);
        // oracle: supported on coordinates 3..10, i.e. 2^7 elements
        assert_eq!(s.elements.len(), 128);
        for e in &s.elements {
            match e {
                Element::Residues(r) => assert!(r[..3].iter().all(|&b| b == 0)),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn empty_shell_is_signalled() {
        let z7 = Group::cyclic_tower(7, 1);
        let d = native_metric(&z7).unwrap();
        assert!(matches!(
            sample_shell(&d, 0.0, 0.5, 10, 0),
            Err(Error::EmptyBall { .. })
        ));
    }

    #[test]
    fn shells_are_order_independent() {
        let u1 = Group::unitary(1);
        let d = native_metric(&u1).unwrap();
        let a = dyadic_shells(&d, 1.0, 6, 8, 9);
        let single = sample_shell(&d, 1.0 / 16.0, 1.0 / 8.0, 8, derive_seed(9, 3)).unwrap();
        assert_eq!(a[3].1.as_ref().unwrap().elements, single.elements);
    }
}
