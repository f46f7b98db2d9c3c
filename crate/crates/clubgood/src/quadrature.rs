//! One-dimensional integration helpers: Gauss-Legendre panels with
//! bisection error control and bisection-based localisation of piecewise-constant keys.

use std::sync::OnceLock;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Bracket width at which a located jump is considered resolved (relative to the interval scale).
pub const JUMP_TOLERANCE: f64 = 1e-12;
/// Bisection budget per jump.
pub const MAX_BISECTION_STEPS: usize = 60;

fn rule(nodes: usize) -> &'static GaussLegendre {
    static RULE_32: OnceLock<GaussLegendre> = OnceLock::new();
    debug_assert_eq!(nodes, 32);
    RULE_32.get_or_init(|| match GaussLegendre::new(nodes) {
        Ok(rule) => rule,
        Err(_) => unreachable!("rule degree is a fixed constant above one"),
    })
}

/// 32-node Gauss-Legendre integral over `[a, b]`.
pub fn gauss_legendre<F: FnMut(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    rule(32).integrate(a, b, f)
}

/// Composite Gauss-Legendre: a panel is accepted when its 32-node value
/// agrees with the sum over its two halves to `tol`, otherwise both halves
/// are refined with half the tolerance.
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, mut f: F) -> f64 {
    fn recurse<F: FnMut(f64) -> f64>(a: f64, b: f64, whole: f64, tol: f64, depth: usize, f: &mut F) -> f64 {
        let mid = 0.5 * (a + b);
        let left = rule(32).integrate(a, mid, &mut *f);
        let right = rule(32).integrate(mid, b, &mut *f);
        if (left + right - whole).abs() <= tol || depth == 0 {
            return left + right;
        }
        recurse(a, mid, left, 0.5 * tol, depth - 1, f) + recurse(mid, b, right, 0.5 * tol, depth - 1, f)
    }
    if b <= a {
        return 0.0;
    }
    let whole = rule(32).integrate(a, b, &mut f);
    recurse(a, b, whole, tol, 40, &mut f)
}

/// A maximal interval on which a piecewise-constant key is constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment<K> {
    pub lo: f64,
    pub hi: f64,
    pub key: K,
}

/// Splits `[a, b]` into segments of constant `key`, scanning `scan` equal
/// cells and bisecting every change to [`JUMP_TOLERANCE`].
///
/// Changes are assumed to be resolvable from the scan: a key that leaves and
/// returns to the same value strictly between two scan points is not seen.
pub fn locate_segments<K, F>(a: f64, b: f64, scan: usize, key: F) -> Result<Vec<Segment<K>>>
where
    K: PartialEq + Clone,
    F: FnMut(f64) -> K,
{
    let scan = scan.max(1);
    let points: Vec<f64> = (0..=scan).map(|g| if g == scan { b } else { a + (b - a) * g as f64 / scan as f64 }).collect();
    locate_segments_on(&points, key)
}

/// As [`locate_segments`] with explicit ascending scan points; the first and
/// last points are the interval ends.
pub fn locate_segments_on<K, F>(points: &[f64], mut key: F) -> Result<Vec<Segment<K>>>
where
    K: PartialEq + Clone,
    F: FnMut(f64) -> K,
{
    let (a, b) = match (points.first(), points.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::InvalidArgument("no scan points".into())),
    };
    let tol = JUMP_TOLERANCE * (b - a).abs().max(1.0);
    let evaluated: Vec<(f64, K)> = points.iter().map(|&t| (t, key(t))).collect();
    let mut segments: Vec<Segment<K>> = Vec::new();
    let push = |segments: &mut Vec<Segment<K>>, lo: f64, hi: f64, k: K| match segments.last_mut() {
        Some(last) if last.key == k => last.hi = hi,
        _ => segments.push(Segment { lo, hi, key: k }),
    };
    let mut cursor = a;
    for pair in evaluated.windows(2) {
        let ((t0, k0), (t1, k1)) = (&pair[0], &pair[1]);
        if k0 == k1 {
            continue;
        }
        let mut changes = Vec::new();
        split_changes(*t0, k0.clone(), *t1, k1.clone(), tol, &mut key, &mut changes, 0)?;
        for (at, left) in changes {
            push(&mut segments, cursor, at, left);
            cursor = at;
        }
    }
    let last_key = evaluated[evaluated.len() - 1].1.clone();
    push(&mut segments, cursor, b, last_key);
    if let Some(first) = segments.first_mut() {
        first.lo = a;
    }
    Ok(segments)
}

#[allow(clippy::too_many_arguments)]
fn split_changes<K, F>(
    mut lo: f64,
    klo: K,
    mut hi: f64,
    khi: K,
    tol: f64,
    key: &mut F,
    out: &mut Vec<(f64, K)>,
    depth: usize,
) -> Result<()>
where
    K: PartialEq + Clone,
    F: FnMut(f64) -> K,
{
    let (start, end) = (lo, hi);
    let mut steps = 0;
    while hi - lo > tol {
        if steps >= MAX_BISECTION_STEPS {
            return Err(Error::NoConvergence { lo: start, hi: end, steps });
        }
        steps += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let kmid = key(mid);
        if kmid == klo {
            lo = mid;
        } else if kmid == khi {
            hi = mid;
        } else if depth < 8 {
            // A third key value: resolve both halves independently.
            split_changes(lo, klo, mid, kmid.clone(), tol, key, out, depth + 1)?;
            return split_changes(mid, kmid, hi, khi, tol, key, out, depth + 1);
        } else {
            hi = mid;
        }
    }
    out.push((0.5 * (lo + hi), klo));
    Ok(())
}

/// Bisection root of a function with a sign change on `[lo, hi]`.
/// Returns `None` when the endpoint signs agree.
pub fn bisect_root<F: FnMut(f64) -> f64>(mut lo: f64, mut hi: f64, tol: f64, mut f: F) -> Option<f64> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Some(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let integral = gauss_legendre(0.0, 2.0, |x| x.powi(7) - 3.0 * x);
        assert!((integral - (2f64.powi(8) / 8.0 - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let integral = adaptive(0.0, 1.0, 1e-12, |x| (x - 0.3137).abs());
        let exact = 0.3137f64.powi(2) / 2.0 + (1.0 - 0.3137f64).powi(2) / 2.0;
        assert!((integral - exact).abs() < 1e-10);
    }

    #[test]
    fn segments_resolve_multiple_jumps() {
        let segs = locate_segments(0.0, 1.0, 8, |x| (x > 0.123456789) as u8 + (x > 0.5432) as u8).unwrap();
        assert_eq!(segs.len(), 3);
        assert!((segs[0].hi - 0.123456789).abs() < 1e-11);
        assert!((segs[1].hi - 0.5432).abs() < 1e-11);
        assert_eq!(segs[2].key, 2);
    }

    #[test]
    fn segments_find_three_values_inside_one_cell() {
        let segs = locate_segments(0.0, 1.0, 1, |x| if x < 0.4 { 0 } else if x < 0.41 { 5 } else { 1 }).unwrap();
        assert_eq!(segs.iter().map(|s| s.key).collect::<Vec<_>>(), vec![0, 5, 1]);
    }

    #[test]
    fn bisect_root_finds_linear_root() {
        let root = bisect_root(0.0, 1.0, 1e-15, |x| 3.0 * x - 1.0).unwrap();
        assert!((root - 1.0 / 3.0).abs() < 1e-14);
        assert!(bisect_root(0.0, 1.0, 1e-12, |x| x + 1.0).is_none());
    }
}
