//! Unit-pulse codebook: sizes, index enumeration and the pulse search.

use std::sync::OnceLock;

use crate::error::{CodecError, Result};

/// Largest band width the size table covers.
pub const MAX_N: usize = 64;
/// Largest pulse count the size table covers.
pub const MAX_K: usize = 512;

/// Exact `V(N, K)` for `N <= MAX_N`, `K <= MAX_K`; entries that do not fit
/// in 128 bits are stored as `u128::MAX`.
struct SizeTable(Vec<u128>);

impl SizeTable {
    fn build() -> Self {
        let w = MAX_K + 1;
        let mut v = vec![0u128; (MAX_N + 1) * w];
        v[0] = 1;
        for n in 1..=MAX_N {
            v[n * w] = 1;
            for k in 1..=MAX_K {
                let a = v[(n - 1) * w + k];
                let b = v[n * w + k - 1];
                let c = v[(n - 1) * w + k - 1];
                v[n * w + k] = a.checked_add(b).and_then(|s| s.checked_add(c)).unwrap_or(u128::MAX);
            }
        }
        SizeTable(v)
    }

    fn get(&self, n: usize, k: usize) -> u128 {
        self.0[n * (MAX_K + 1) + k]
    }
}

fn sizes() -> &'static SizeTable {
    static TABLE: OnceLock<SizeTable> = OnceLock::new();
    TABLE.get_or_init(SizeTable::build)
}

/// Number of signed integer vectors of length `n` with `sum |y_i| = k`.
/// Returns `None` if the count does not fit in 128 bits or lies outside the
/// tabulated range.
pub fn codebook_size(n: usize, k: usize) -> Option<u128> {
    if n > MAX_N || k > MAX_K {
        return None;
    }
    match sizes().get(n, k) {
        u128::MAX => None,
        v => Some(v),
    }
}

fn size_or_err(n: usize, k: usize) -> Result<u128> {
    codebook_size(n, k).ok_or_else(|| CodecError::ContractViolation(format!("V({n},{k}) exceeds 128 bits")))
}

/// A K-pulse codeword.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PulseVector(pub Vec<i32>);

impl PulseVector {
    pub fn zeros(n: usize) -> Self {
        PulseVector(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pulses(&self) -> usize {
        self.0.iter().map(|v| v.unsigned_abs() as usize).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&y, &x)| y as f64 * x).sum()
    }
}

/// Maps a pulse vector to its index in `[0, V(N, K))`.
///
/// Values at each position are ordered 0, +1, -1, +2, -2, ...; the count of
/// codewords below a given value comes from the sizes of the remaining tail.
pub fn encode_index(y: &PulseVector) -> Result<u128> {
    let n = y.len();
    let mut k = y.pulses();
    size_or_err(n, k)?;
    let mut index = 0u128;
    for (pos, &v) in y.0.iter().enumerate() {
        let rest = n - pos - 1;
        let a = v.unsigned_abs() as usize;
        if a > 0 {
            index += sizes().get(rest, k);
            for t in 1..a {
                index += 2 * sizes().get(rest, k - t);
            }
            if v < 0 {
                index += sizes().get(rest, k - a);
            }
        }
        k -= a;
    }
    Ok(index)
}

/// Inverse of [`encode_index`].
pub fn decode_index(index: u128, n: usize, k: usize) -> Result<PulseVector> {
    let total = size_or_err(n, k)?;
    if index >= total {
        return Err(CodecError::ContractViolation(format!("index {index} out of range for V({n},{k}) = {total}")));
    }
    let mut y = vec![0i32; n];
    let mut i = index;
    let mut k = k;
    for (pos, slot) in y.iter_mut().enumerate() {
        if k == 0 {
            break;
        }
        let rest = n - pos - 1;
        let zero = sizes().get(rest, k);
        if i < zero {
            continue;
        }
        i -= zero;
        let mut a = 1;
        loop {
            let each = sizes().get(rest, k - a);
            if i < each {
                *slot = a as i32;
                break;
            }
            if i < 2 * each {
                i -= each;
                *slot = -(a as i32);
                break;
            }
            i -= 2 * each;
            a += 1;
        }
        k -= a;
    }
    Ok(PulseVector(y))
}

/// Fixed-codebook gain that makes `g_a p + g_f y` unit norm, given
/// `R_yp = y.p` and `R_yy = y.y`.
pub fn fixed_gain(ga: f64, ryp: f64, ryy: f64) -> f64 {
    if ryy <= 0.0 {
        return 0.0;
    }
    let disc = (ga * ga * ryp * ryp + ryy * (1.0 - ga * ga)).max(0.0);
    (disc.sqrt() - ga * ryp) / ryy
}

/// Which cost drives pulse placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchCost {
    /// `-2 g_f R_ry + g_f^2 R_yy`, with `g_f` from the mixing constraint.
    Full,
    /// `-R_ry / sqrt(R_yy)`, which ignores the adaptive contribution.
    Simplified,
}

#[derive(Debug, Clone, Copy, Default)]
struct Correlations {
    ryp: f64,
    ry: f64,
    ryy: f64,
}

impl Correlations {
    fn cost(&self, ga: f64, cost: SearchCost) -> f64 {
        match cost {
            SearchCost::Full => {
                let gf = fixed_gain(ga, self.ryp, self.ryy);
                -2.0 * gf * self.ry + gf * gf * self.ryy
            }
            SearchCost::Simplified => -self.ry / self.ryy.sqrt(),
        }
    }
}

/// Result of a pulse search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub y: PulseVector,
    pub gf: f64,
}

fn sign_of(v: f64) -> i32 {
    if v < 0.0 {
        -1
    } else {
        1
    }
}

fn effective_gain(p: &[f64], ga: f64) -> f64 {
    if p.iter().all(|&v| v == 0.0) {
        0.0
    } else {
        ga
    }
}

fn check_inputs(r: &[f64], p: &[f64]) -> Result<()> {
    if r.len() != p.len() {
        return Err(CodecError::ContractViolation(format!("residual length {} != adaptive length {}", r.len(), p.len())));
    }
    if r.is_empty() {
        return Err(CodecError::ContractViolation("empty band".into()));
    }
    Ok(())
}

/// Places `k` pulses on `r`, `step(placed)` at a time, choosing each position
/// with `cost(placed)`. Lowest index wins ties.
fn place_pulses(
    r: &[f64],
    p: &[f64],
    ga: f64,
    k: usize,
    step: impl Fn(usize) -> usize,
    cost: impl Fn(usize) -> SearchCost,
) -> SearchResult {
    let n = r.len();
    let mut y = vec![0i32; n];
    let mut c = Correlations::default();
    let mut placed = 0;
    while placed < k {
        let np = step(placed).min(k - placed);
        let rule = cost(placed);
        let npf = np as f64;
        let mut best: Option<(usize, f64, Correlations)> = None;
        for i in 0..n {
            let s = sign_of(r[i]) as f64;
            let cand = Correlations {
                ryp: c.ryp + npf * s * p[i],
                ry: c.ry + npf * r[i].abs(),
                ryy: c.ryy + 2.0 * npf * y[i].unsigned_abs() as f64 + npf * npf,
            };
            let j = cand.cost(ga, rule);
            if best.as_ref().is_none_or(|(_, bj, _)| j < *bj) {
                best = Some((i, j, cand));
            }
        }
        let (i, _, cand) = best.expect("band is non-empty");
        y[i] += sign_of(r[i]) * np as i32;
        c = cand;
        placed += np;
    }
    let gf = fixed_gain(ga, c.ryp, c.ryy);
    SearchResult { y: PulseVector(y), gf }
}

/// One-pulse-at-a-time greedy search with the chosen cost.
pub fn search_with(r: &[f64], p: &[f64], ga: f64, k: usize, cost: SearchCost) -> Result<SearchResult> {
    check_inputs(r, p)?;
    let ga = effective_gain(p, ga);
    Ok(place_pulses(r, p, ga, k, |_| 1, |_| cost))
}

/// Greedy search with the full cost.
pub fn search(r: &[f64], p: &[f64], ga: f64, k: usize) -> Result<SearchResult> {
    search_with(r, p, ga, k, SearchCost::Full)
}

/// Reduced-complexity search: several pulses per step while `K` is large
/// compared to `N`, the simplified cost for all but the last pulse.
pub fn search_fast(r: &[f64], p: &[f64], ga: f64, k: usize) -> Result<SearchResult> {
    check_inputs(r, p)?;
    let ga = effective_gain(p, ga);
    let n = r.len();
    Ok(place_pulses(
        r,
        p,
        ga,
        k,
        |placed| ((k - placed) / n).max(1),
        |placed| if placed + 1 == k { SearchCost::Full } else { SearchCost::Simplified },
    ))
}
