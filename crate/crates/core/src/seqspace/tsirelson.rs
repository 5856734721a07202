//! Tsirelson norm on `[1, n]` by dynamic programming over intervals.
//!
//! `N(a,b)` is the norm of the restriction to `[a,b]` and `P(t,b,k)` the best
//! sum of `N` over at most `k` consecutive intervals covering `[t,b]`. Only
//! intervals need to be considered because the basis is 1-unconditional and
//! restriction norms are monotone, so gaps and the tail can be absorbed into
//! neighbouring intervals without lowering the sum. Tables are filled by
//! increasing `b` and decreasing `a`; every entry depends only on entries
//! already final, so a single pass yields the fixed point.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
enum NChoice {
    Coord(usize),
    /// Averaging whose first interval starts at the given index.
    Comb(usize),
}

struct Tables {
    n: usize,
    x: Vec<f64>,
    nval: Vec<f64>,
    nch: Vec<NChoice>,
    /// `p[b][t][k]`, flattened; `t` ranges over `0..=n`, `k` over `0..=n`.
    p: Vec<f64>,
    pch: Vec<u16>,
    /// First-interval end of the best averaging that starts at `a` itself.
    excl_ch: Vec<u16>,
}

impl Tables {
    fn pidx(&self, b: usize, t: usize, k: usize) -> usize {
        (b * (self.n + 1) + t) * (self.n + 1) + k
    }

    fn build(x: &[f64]) -> Self {
        let n = x.len();
        let x: Vec<f64> = x.iter().map(|v| v.abs()).collect();
        let w = n + 1;
        let mut t = Tables {
            n,
            x,
            nval: vec![0.0; n * n],
            nch: vec![NChoice::Coord(0); n * n],
            p: vec![f64::NEG_INFINITY; n * w * w],
            pch: vec![0; n * w * w],
            excl_ch: vec![0; n * n],
        };
        for b in 0..n {
            for k in 0..=n {
                let i = t.pidx(b, b + 1, k);
                t.p[i] = 0.0;
            }
            let (mut sup, mut arg) = (f64::NEG_INFINITY, b);
            for a in (0..=b).rev() {
                if t.x[a] >= sup {
                    sup = t.x[a];
                    arg = a;
                }
                let mut best = sup;
                let mut choice = NChoice::Coord(arg);
                // starts strictly inside the interval
                for s in a + 1..=b {
                    let v = 0.5 * t.p[t.pidx(b, s, (s + 1).min(n))];
                    if v > best {
                        best = v;
                        choice = NChoice::Comb(s);
                    }
                }
                // start at `a`: at most a+1 intervals, the whole interval excluded
                let kmax = (a + 1).min(n);
                if kmax >= 2 {
                    let mut ebest = f64::NEG_INFINITY;
                    let mut eu = a;
                    for u in a..b {
                        let v = t.nval[a * n + u] + t.p[t.pidx(b, u + 1, kmax - 1)];
                        if v > ebest {
                            ebest = v;
                            eu = u;
                        }
                    }
                    t.excl_ch[a * n + b] = eu as u16;
                    if 0.5 * ebest > best {
                        best = 0.5 * ebest;
                        choice = NChoice::Comb(a);
                    }
                }
                t.nval[a * n + b] = best;
                t.nch[a * n + b] = choice;
                for k in 1..=n {
                    let mut pbest = f64::NEG_INFINITY;
                    let mut pu = a;
                    for u in a..=b {
                        let v = t.nval[a * n + u] + t.p[t.pidx(b, u + 1, k - 1)];
                        if v > pbest {
                            pbest = v;
                            pu = u;
                        }
                    }
                    let i = t.pidx(b, a, k);
                    t.p[i] = pbest;
                    t.pch[i] = pu as u16;
                }
            }
        }
        t
    }

    fn value(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.nval[self.n - 1]
        }
    }

    /// Adds `weight ·` (norming functional attaining `N(a,b)`) into `out`.
    fn functional(&self, a: usize, b: usize, weight: f64, out: &mut [f64]) {
        let n = self.n;
        match self.nch[a * n + b] {
            NChoice::Coord(j) => out[j] += weight,
            NChoice::Comb(s) => {
                let half = 0.5 * weight;
                let (mut t, mut k) = (s, (s + 1).min(n));
                if s == a {
                    let u = self.excl_ch[a * n + b] as usize;
                    self.functional(a, u, half, out);
                    t = u + 1;
                    k -= 1;
                }
                while t <= b {
                    let u = self.pch[self.pidx(b, t, k)] as usize;
                    self.functional(t, u, half, out);
                    t = u + 1;
                    k -= 1;
                }
            }
        }
    }
}

/// Tsirelson norm of the dense vector `x` (coordinate `k` is index `k + 1`).
pub fn tsirelson_norm(x: &[f64]) -> f64 {
    Tables::build(x).value()
}

/// Norm together with a norming functional `f ≥ 0` with `⟨f, |x|⟩ = ‖x‖_T`.
///
/// The functional has dyadic entries and belongs to the closed norming set,
/// so `⟨f, |z|⟩ ≤ ‖z‖_T` for every `z`.
pub fn tsirelson_norm_with_functional(x: &[f64]) -> (f64, Vec<f64>) {
    let t = Tables::build(x);
    let mut f = vec![0.0; x.len()];
    if !x.is_empty() {
        t.functional(0, x.len() - 1, 1.0, &mut f);
    }
    (t.value(), f)
}

/// 2-convexified norm `(‖(x_j²)‖_T)^{1/2}`.
pub fn tsirelson2_norm(x: &[f64]) -> f64 {
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    tsirelson_norm(&sq).sqrt()
}

/// `T²` norm with the functional norming `x²` in `T`.
pub fn tsirelson2_norm_with_functional(x: &[f64]) -> (f64, Vec<f64>) {
    let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
    let (v, f) = tsirelson_norm_with_functional(&sq);
    (v.sqrt(), f)
}

/// Finite norming set for the Tsirelson norm on `[1, n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormingFunctionalSet {
    pub n: usize,
    /// Nonnegative dyadic coefficient vectors of length `n`.
    pub functionals: Vec<Vec<f64>>,
    /// Largest averaging depth occurring in the set.
    pub generation_depth: usize,
}

impl NormingFunctionalSet {
    /// `max_f ⟨f, |x|⟩` over the set.
    pub fn induced_norm(&self, x: &[f64]) -> f64 {
        self.functionals
            .iter()
            .map(|f| f.iter().zip(x).map(|(a, b)| a * b.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }
}

/// Limits on norming-set generation.
#[derive(Clone, Copy, Debug)]
pub struct NormingCaps {
    /// Largest admissible `n`.
    pub max_n: usize,
    /// Largest number of candidate functionals examined for one interval.
    pub max_candidates: u64,
}

impl Default for NormingCaps {
    fn default() -> Self {
        NormingCaps {
            max_n: 16,
            max_candidates: 2_000_000,
        }
    }
}

/// Depth code per coordinate: 0 means absent, `d + 1` means coefficient `2^-d`.
type Code = Vec<u8>;

fn dominated_by(f: &Code, g: &Code) -> bool {
    f.iter()
        .zip(g)
        .all(|(&a, &b)| a == 0 || (b != 0 && b <= a))
}

fn code_mass(f: &Code) -> f64 {
    f.iter()
        .filter(|&&c| c != 0)
        .map(|&c| 0.5f64.powi(c as i32 - 1))
        .sum()
}

/// Keeps one representative of each maximal element under pointwise order.
fn prune(mut cands: Vec<Code>) -> Vec<Code> {
    cands.sort_by(|a, b| code_mass(b).total_cmp(&code_mass(a)).then_with(|| a.cmp(b)));
    cands.dedup();
    let mut kept: Vec<Code> = Vec::new();
    for c in cands {
        if !kept.iter().any(|k| dominated_by(&c, k)) {
            kept.push(c);
        }
    }
    kept
}

/// Maximal norming functionals for the Tsirelson norm on `[1, n]`.
///
/// Built interval by interval: the maximal set on `[a,b]` is drawn from the
/// coordinate functionals, the maximal sets of the two sub-intervals dropping
/// an endpoint, and halved sums of maximal functionals over admissible
/// consecutive partitions of `[s,b]`. Dominated members are pruned.
pub fn norming_functionals(n: usize, caps: NormingCaps) -> Result<NormingFunctionalSet> {
    if n == 0 {
        return Err(Error::param("n", "must be positive"));
    }
    if n > caps.max_n {
        return Err(Error::Size {
            what: format!("norming set on [1,{n}]"),
            estimated: estimate_cardinality(n),
            cap: caps.max_n as u64,
        });
    }
    let mut max: Vec<Vec<Code>> = vec![Vec::new(); n * n];
    for len in 1..=n {
        for a in 0..=n - len {
            let b = a + len - 1;
            let mut cands: Vec<Code> = (a..=b)
                .map(|j| {
                    let mut c = vec![0u8; n];
                    c[j] = 1;
                    c
                })
                .collect();
            if len > 1 {
                cands.extend(max[(a + 1) * n + b].iter().cloned());
                cands.extend(max[a * n + b - 1].iter().cloned());
            }
            let mut budget = 0u64;
            for s in a..=b {
                let kmax = (s + 1).min(b - s + 1);
                for_each_partition(s, b, kmax, &mut |cuts: &[(usize, usize)]| {
                    let count: u64 = cuts
                        .iter()
                        .map(|&(l, r)| max[l * n + r].len() as u64)
                        .product();
                    budget = budget.saturating_add(count);
                });
            }
            if budget > caps.max_candidates {
                return Err(Error::Size {
                    what: format!("norming set on [1,{n}]"),
                    estimated: estimate_cardinality(n).max(budget),
                    cap: caps.max_candidates,
                });
            }
            for s in a..=b {
                let kmax = (s + 1).min(b - s + 1);
                for_each_partition(s, b, kmax, &mut |cuts: &[(usize, usize)]| {
                    let lists: Vec<&Vec<Code>> =
                        cuts.iter().map(|&(l, r)| &max[l * n + r]).collect();
                    let mut digits = vec![0usize; lists.len()];
                    loop {
                        let mut c = vec![0u8; n];
                        for (list, &d) in lists.iter().zip(&digits) {
                            for (slot, &v) in c.iter_mut().zip(&list[d]) {
                                if v != 0 {
                                    *slot = v + 1;
                                }
                            }
                        }
                        cands.push(c);
                        let mut i = 0;
                        while i < digits.len() {
                            digits[i] += 1;
                            if digits[i] < lists[i].len() {
                                break;
                            }
                            digits[i] = 0;
                            i += 1;
                        }
                        if i == digits.len() {
                            break;
                        }
                    }
                });
            }
            max[a * n + b] = prune(cands);
        }
    }
    let codes = std::mem::take(&mut max[n - 1]);
    let generation_depth = codes
        .iter()
        .flat_map(|c| c.iter().copied())
        .max()
        .unwrap_or(1) as usize
        - 1;
    let functionals = codes
        .iter()
        .map(|c| {
            c.iter()
                .map(|&d| if d == 0 { 0.0 } else { 0.5f64.powi(d as i32 - 1) })
                .collect()
        })
        .collect();
    Ok(NormingFunctionalSet {
        n,
        functionals,
        generation_depth,
    })
}

/// Observed maximal-set sizes grow by roughly 2.4 per added coordinate.
fn estimate_cardinality(n: usize) -> u64 {
    const KNOWN: [u64; 9] = [1, 2, 4, 9, 15, 39, 83, 203, 504];
    if n <= KNOWN.len() {
        KNOWN[n - 1]
    } else {
        (504.0 * 2.4f64.powi((n - KNOWN.len()) as i32)) as u64
    }
}

/// Calls `f` with every partition of `[s,b]` into `2..=kmax` consecutive intervals.
fn for_each_partition(s: usize, b: usize, kmax: usize, f: &mut impl FnMut(&[(usize, usize)])) {
    fn rec(
        t: usize,
        b: usize,
        left: usize,
        cur: &mut Vec<(usize, usize)>,
        f: &mut impl FnMut(&[(usize, usize)]),
    ) {
        if t > b {
            if cur.len() >= 2 {
                f(cur);
            }
            return;
        }
        if left == 0 {
            return;
        }
        for u in t..=b {
            cur.push((t, u));
            rec(u + 1, b, left - 1, cur, f);
            cur.pop();
        }
    }
    if kmax >= 2 {
        rec(s, b, kmax, &mut Vec::new(), f);
    }
}
