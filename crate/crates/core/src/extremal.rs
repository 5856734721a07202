//! Equivalence constants `κ(F)`, `κ*(F)`, their critical points, and the
//! Calderón ratio distance.
//!
//! All constants are suprema of a ratio of two norms over vectors supported
//! in `F`. By 1-unconditionality the search runs over nonnegative vectors,
//! and by homogeneity iterates are kept at unit sup-norm so that coordinate
//! vectors and the all-ones vector are represented exactly.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::seqspace::{SeqVector, SpaceDescriptor, SpaceKind};

/// Tuning of the multi-start ratio maximizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioOptions {
    pub seed: u64,
    /// Random starts in addition to coordinate vectors, all-ones and seeds.
    pub random_starts: usize,
    pub ascent_iters: usize,
    /// Number of best distinct ascent results that get the coordinate polish.
    pub polish_top: usize,
    /// Largest number of grid points for the certificate (`|F| ≤ 6` only).
    pub grid_budget: usize,
}

impl Default for RatioOptions {
    fn default() -> Self {
        RatioOptions {
            seed: 0x5EED,
            random_starts: 4,
            ascent_iters: 150,
            polish_top: 3,
            grid_budget: 150_000,
        }
    }
}

/// Largest `|F|` for which the grid certificate is attempted.
pub const GRID_MAX_SUPPORT: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaResult {
    /// Ratio recomputed at `witness`.
    pub value: f64,
    pub witness: SeqVector,
    /// Certified bound on `true supremum − value`; `None` when heuristic.
    pub certified_gap: Option<f64>,
    pub support: Vec<usize>,
    /// False when a dual norm entering the value missed its tolerance.
    pub dual_certified: bool,
    /// Point at which the underlying ratio search peaked; seeds warm starts.
    pub ascent_point: SeqVector,
}

impl KappaResult {
    pub fn log_value(&self) -> f64 {
        self.value.ln()
    }

    /// `⌊log κ⌋` as the exact IEEE floor of the natural logarithm.
    pub fn floor_log(&self) -> i64 {
        self.value.ln().floor() as i64
    }

    pub fn is_heuristic(&self) -> bool {
        self.certified_gap.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CalderonDistance {
    pub gap_mn: f64,
    pub gap_nm: f64,
    pub distance: f64,
}

/// Normalizes an index set: sorted, deduplicated, nonempty, positive.
pub fn index_set(f: &[usize]) -> Result<Vec<usize>> {
    let mut v = f.to_vec();
    v.sort_unstable();
    v.dedup();
    if v.is_empty() {
        return Err(Error::param("F", "index set is empty"));
    }
    if v[0] == 0 {
        return Err(Error::param("F", "indices start at 1"));
    }
    Ok(v)
}

/// The interval `[1, n]`.
pub fn interval(n: usize) -> Vec<usize> {
    (1..=n).collect()
}

fn check_bound(space: &SpaceDescriptor, f: &[usize]) -> Result<()> {
    let top = *f.last().expect("nonempty");
    if top > space.support_bound {
        return Err(Error::param(
            "F",
            format!(
                "index {top} exceeds the support bound {} of {space}",
                space.support_bound
            ),
        ));
    }
    Ok(())
}

pub(crate) struct RatioSolution {
    pub value: f64,
    /// Dense on `[1, max F]`, nonnegative, unit sup-norm.
    pub point: Vec<f64>,
    pub grid: Option<GridCertificate>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GridCertificate {
    /// Best grid value; only the tests read it.
    #[cfg_attr(not(test), allow(dead_code))]
    pub best: f64,
    pub upper: f64,
}

struct Ratio<'a> {
    num: &'a SpaceDescriptor,
    den: &'a SpaceDescriptor,
    f: &'a [usize],
    n: usize,
}

const SCREENED_STARTS: usize = 3;

const ACCEPT: f64 = 4.0 * f64::EPSILON;

impl Ratio<'_> {
    fn dense(&self, v: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for (&j, &x) in self.f.iter().zip(v) {
            d[j - 1] = x;
        }
        d
    }

    fn eval(&self, v: &[f64]) -> f64 {
        let d = self.dense(v);
        let den = self.den.norm_dense(&d);
        if den == 0.0 {
            return 0.0;
        }
        self.num.norm_dense(&d) / den
    }

    fn improves(cand: f64, cur: f64) -> bool {
        cand > cur + ACCEPT * cur.abs()
    }

    fn ascend(&self, mut v: Vec<f64>, iters: usize) -> (f64, Vec<f64>) {
        normalize_inf(&mut v);
        let mut r = self.eval(&v);
        let mut eta = 0.25f64;
        for _ in 0..iters {
            let d = self.dense(&v);
            let (nv, gn) = self.num.norm_and_subgradient(&d);
            let (dv, gd) = self.den.norm_and_subgradient(&d);
            if dv == 0.0 {
                break;
            }
            let rr = nv / dv;
            let grad: Vec<f64> = self
                .f
                .iter()
                .map(|&j| (gn[j - 1] - rr * gd[j - 1]) / dv)
                .collect();
            let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            if gmax == 0.0 {
                break;
            }
            let mut moved = false;
            while eta > 1e-12 {
                let mut w: Vec<f64> = v
                    .iter()
                    .zip(&grad)
                    .map(|(x, g)| (x + eta * g / gmax).max(0.0))
                    .collect();
                if w.iter().any(|&x| x > 0.0) {
                    normalize_inf(&mut w);
                    let rw = self.eval(&w);
                    if Self::improves(rw, r) {
                        v = w;
                        r = rw;
                        eta = (eta * 2.0).min(1.0);
                        moved = true;
                        break;
                    }
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
        }
        (r, v)
    }

    /// Linearization step for convex maximization: with an ℓ2 denominator
    /// move to the numerator's norming functional, with an ℓ2 numerator to
    /// the denominator's dual maximizer in direction `v`.
    fn linear_step(&self, v: &[f64]) -> Option<Vec<f64>> {
        let l2 = SpaceKind::Lp(2.0);
        let d = self.dense(v);
        let full = if self.den.kind == l2 {
            self.num.norm_and_subgradient(&d).1
        } else if self.num.kind == l2 && !matches!(self.den.kind, SpaceKind::DualOf(_)) {
            self.den.dual_norm_dense(&d).maximizer
        } else {
            return None;
        };
        Some(self.f.iter().map(|&j| full[j - 1].abs()).collect())
    }

    fn linearize(&self, mut v: Vec<f64>, mut r: f64) -> (f64, Vec<f64>) {
        for _ in 0..50 {
            let Some(w) = self.linear_step(&v) else { break };
            if !self.try_move(&mut v, &mut r, w) {
                break;
            }
        }
        (r, v)
    }

    fn try_move(&self, v: &mut Vec<f64>, r: &mut f64, w: Vec<f64>) -> bool {
        let mut w = w;
        if !w.iter().any(|&x| x > 0.0) {
            return false;
        }
        normalize_inf(&mut w);
        let rw = self.eval(&w);
        if Self::improves(rw, *r) {
            *v = w;
            *r = rw;
            true
        } else {
            false
        }
    }

    /// Coordinate and pairwise-transfer moves at geometrically shrinking scales.
    fn polish(&self, mut v: Vec<f64>, mut r: f64) -> (f64, Vec<f64>) {
        let m = v.len();
        let mut s = 0.25;
        while s > 1e-9 {
            (r, v) = self.linearize(v, r);
            for _ in 0..30 {
                let mut improved = false;
                for j in 0..m {
                    for delta in [s, -s] {
                        let mut w = v.clone();
                        w[j] = (w[j] + delta).max(0.0);
                        if w[j] != v[j] && self.try_move(&mut v, &mut r, w) {
                            improved = true;
                        }
                    }
                }
                if !improved {
                    for i in 0..m {
                        for j in 0..m {
                            if i == j || v[j] == 0.0 {
                                continue;
                            }
                            let mut w = v.clone();
                            let t = s.min(w[j]);
                            w[i] += t;
                            w[j] -= t;
                            if self.try_move(&mut v, &mut r, w) {
                                improved = true;
                            }
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            s *= 0.125;
        }
        (r, v)
    }

    fn grid(&self, budget: usize) -> Option<GridCertificate> {
        let m = self.f.len();
        if m > GRID_MAX_SUPPORT || self.num.is_solver_backed() || self.den.is_solver_backed() {
            return None;
        }
        let mut k = 1usize;
        while k < 1_000_000 && binomial(k + 1 + m - 1, m - 1) <= budget as u128 {
            k += 1;
        }
        let basis_norm = |s: &SpaceDescriptor| {
            self.f
                .iter()
                .map(|&j| {
                    let mut e = vec![0.0; self.n];
                    e[j - 1] = 1.0;
                    s.norm_dense(&e)
                })
                .fold(0.0, f64::max)
        };
        let (lnum, lden) = (basis_norm(self.num), basis_norm(self.den));
        // any point of the simplex is within ℓ1 distance m/(2k) of the grid
        let h = m as f64 / (2.0 * k as f64);
        let mut best = 0.0f64;
        let mut upper = 0.0f64;
        let mut parts = vec![0usize; m];
        parts[0] = k;
        loop {
            let g: Vec<f64> = parts.iter().map(|&p| p as f64 / k as f64).collect();
            let d = self.dense(&g);
            let (nv, dv) = (self.num.norm_dense(&d), self.den.norm_dense(&d));
            best = best.max(nv / dv);
            let low = dv - lden * h;
            if low <= 0.0 {
                upper = f64::INFINITY;
            } else {
                upper = upper.max((nv + lnum * h) / low);
            }
            if !next_composition(&mut parts) {
                break;
            }
        }
        Some(GridCertificate { best, upper })
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Advances through all compositions of a fixed total into `len` parts.
fn next_composition(p: &mut [usize]) -> bool {
    let m = p.len();
    if m == 1 {
        return false;
    }
    // find last nonzero among the first m-1 entries
    let Some(i) = (0..m - 1).rev().find(|&i| p[i] > 0) else {
        return false;
    };
    p[i] -= 1;
    let tail = p[m - 1];
    p[m - 1] = 0;
    p[i + 1] = tail + 1;
    true
}

fn normalize_inf(v: &mut [f64]) {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m > 0.0 {
        for x in v.iter_mut() {
            *x = x.abs() / m;
        }
    }
}

/// Orders candidates: larger value, then lexicographically smaller support,
/// then larger first coordinate.
fn better(a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> bool {
    // values within rounding of each other tie, so a mixed point cannot win
    // over a coordinate vector by one ulp
    if (a.0 - b.0).abs() > 4.0 * f64::EPSILON * a.0.abs().max(b.0.abs()) {
        return a.0 > b.0;
    }
    let sa: Vec<usize> = (0..a.1.len()).filter(|&j| a.1[j] > 0.0).collect();
    let sb: Vec<usize> = (0..b.1.len()).filter(|&j| b.1[j] > 0.0).collect();
    if sa != sb {
        return sa < sb;
    }
    let first = |v: &Vec<f64>| v.iter().copied().find(|&x| x > 0.0).unwrap_or(0.0);
    first(&a.1) > first(&b.1)
}

/// Maximizes `num(v) / den(v)` over nonzero `v ≥ 0` supported in `f`.
pub(crate) fn maximize_ratio(
    num: &SpaceDescriptor,
    den: &SpaceDescriptor,
    f: &[usize],
    seeds: &[SeqVector],
    opts: &RatioOptions,
) -> RatioSolution {
    let n = *f.last().expect("nonempty");
    let m = f.len();
    let ratio = Ratio { num, den, f, n };
    let mut starts: Vec<Vec<f64>> = (0..m)
        .map(|k| {
            let mut e = vec![0.0; m];
            e[k] = 1.0;
            e
        })
        .collect();
    starts.push(vec![1.0; m]);
    for s in seeds {
        let v: Vec<f64> = f.iter().map(|&j| s.get(j).abs()).collect();
        if v.iter().any(|&x| x > 0.0) {
            starts.push(v);
        }
    }
    // screen indicators of runs of consecutive members of F, keep the best few
    let mut runs: Vec<(f64, usize, usize)> = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            let mut v = vec![0.0; m];
            v[a..=b].fill(1.0);
            runs.push((ratio.eval(&v), a, b));
        }
    }
    runs.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
    for &(_, a, b) in runs.iter().take(SCREENED_STARTS) {
        let mut v = vec![0.0; m];
        v[a..=b].fill(1.0);
        starts.push(v);
    }
    let mut rng = rng::stream(opts.seed, n as u64 ^ (m as u64) << 32);
    for _ in 0..opts.random_starts {
        starts.push((0..m).map(|_| rng.gen_range(0.0..1.0)).collect());
    }
    let ascended: Vec<(f64, Vec<f64>)> = starts
        .into_par_iter()
        .map(|s| {
            let (r, v) = ratio.ascend(s, opts.ascent_iters);
            ratio.linearize(v, r)
        })
        .collect();
    let mut order: Vec<usize> = (0..ascended.len()).collect();
    order.sort_by(|&a, &b| {
        if better(&ascended[a], &ascended[b]) {
            std::cmp::Ordering::Less
        } else if better(&ascended[b], &ascended[a]) {
            std::cmp::Ordering::Greater
        } else {
            a.cmp(&b)
        }
    });
    let mut chosen: Vec<&(f64, Vec<f64>)> = Vec::new();
    for &i in &order {
        if chosen.len() >= opts.polish_top.max(1) {
            break;
        }
        if !chosen.iter().any(|c| c.1 == ascended[i].1) {
            chosen.push(&ascended[i]);
        }
    }
    let polished: Vec<(f64, Vec<f64>)> = chosen
        .into_par_iter()
        .map(|(r, v)| ratio.polish(v.clone(), *r))
        .collect();
    let mut best = polished[0].clone();
    for c in &polished[1..] {
        if better(c, &best) {
            best = c.clone();
        }
    }
    let grid = ratio.grid(opts.grid_budget);
    RatioSolution {
        value: best.0,
        point: ratio.dense(&best.1),
        grid,
    }
}

fn result_from(
    sol: RatioSolution,
    f: &[usize],
    witness: SeqVector,
    value: f64,
    dual_certified: bool,
) -> KappaResult {
    let certified_gap = sol
        .grid
        .filter(|g| g.upper.is_finite())
        .map(|g| (g.upper - value).max(0.0));
    KappaResult {
        value,
        witness,
        certified_gap,
        support: f.to_vec(),
        dual_certified,
        ascent_point: SeqVector::from_dense(&sol.point),
    }
}

/// `κ(F) = sup ‖b‖₂ / ‖b‖_B` over nonzero `b` supported in `F`.
pub fn kappa(space: &SpaceDescriptor, f: &[usize], opts: &RatioOptions) -> Result<KappaResult> {
    kappa_seeded(space, f, &[], opts)
}

/// As [`kappa`], with extra starting points (e.g. the witness for a smaller `F`).
pub fn kappa_seeded(
    space: &SpaceDescriptor,
    f: &[usize],
    seeds: &[SeqVector],
    opts: &RatioOptions,
) -> Result<KappaResult> {
    let f = index_set(f)?;
    check_bound(space, &f)?;
    if let SpaceKind::DualOf(_) = space.kind {
        // sup ‖b‖₂/‖b‖_{X*} equals κ*(F) of X
        return kappa_star_seeded(&space.dual(), &f, seeds, opts);
    }
    let l2 = SpaceDescriptor::l2();
    let mut seeds = seeds.to_vec();
    if space.kind == SpaceKind::Tsirelson2 {
        // κ_{T²}(F)² = sup ⟨1_F, u⟩ over the unit ball of T, attained at
        // u = b², so the square root of that maximizer is a critical point
        let ones = SeqVector::from_pairs(f.iter().map(|&j| (j, 1.0)))?;
        let d = SpaceDescriptor::tsirelson().dual_norm(&ones)?;
        seeds.push(SeqVector::from_dense(
            &d.maximizer.iter().map(|u| u.sqrt()).collect::<Vec<_>>(),
        ));
    }
    let sol = maximize_ratio(&l2, space, &f, &seeds, opts);
    let witness = SeqVector::from_dense(&sol.point);
    let value = sol.value;
    Ok(result_from(sol, &f, witness, value, true))
}

/// `κ*(F) = sup ‖b‖₂ / ‖b‖_{B*}` over nonzero `b` supported in `F`.
pub fn kappa_star(space: &SpaceDescriptor, f: &[usize], opts: &RatioOptions) -> Result<KappaResult> {
    kappa_star_seeded(space, f, &[], opts)
}

/// As [`kappa_star`] with warm starts.
///
/// Solver-backed duals are handled through the adjoint form
/// `κ*(F) = sup ‖u‖_B / ‖u‖₂`: the maximizer `u` is found with cheap primal
/// evaluations, and the witness is a norming functional of `u`, whose
/// `ℓ2 / B*` ratio is then evaluated with the certified dual solver. Seeds
/// are interpreted as adjoint starting points.
pub fn kappa_star_seeded(
    space: &SpaceDescriptor,
    f: &[usize],
    seeds: &[SeqVector],
    opts: &RatioOptions,
) -> Result<KappaResult> {
    let f = index_set(f)?;
    check_bound(space, &f)?;
    let dual = space.dual();
    if !dual.is_solver_backed() {
        if let SpaceKind::DualOf(_) = space.kind {
            return kappa_seeded(&dual, &f, seeds, opts);
        }
        let l2 = SpaceDescriptor::l2();
        let sol = maximize_ratio(&l2, &dual, &f, seeds, opts);
        let witness = SeqVector::from_dense(&sol.point);
        let value = sol.value;
        return Ok(result_from(sol, &f, witness, value, true));
    }
    let l2 = SpaceDescriptor::l2();
    let sol = maximize_ratio(space, &l2, &f, seeds, opts);
    let (_, g) = space.norm_and_subgradient(&sol.point);
    let witness = SeqVector::from_dense(&g.iter().map(|x| x.abs()).collect::<Vec<_>>());
    let d = space.dual_norm(&witness)?;
    let value = witness.l2_norm() / d.upper;
    Ok(result_from(sol, &f, witness, value, d.certified))
}

/// `δ(M,N) = log sup M(v)/N(v)` over nonzero `v` supported in `F`.
pub fn calderon_gap(
    m: &SpaceDescriptor,
    n: &SpaceDescriptor,
    f: &[usize],
    opts: &RatioOptions,
) -> Result<f64> {
    let f = index_set(f)?;
    check_bound(m, &f)?;
    check_bound(n, &f)?;
    let l2 = SpaceDescriptor::l2();
    // identical engine call to kappa when the numerator is ℓ2
    if m.kind == l2.kind && !matches!(n.kind, SpaceKind::DualOf(_)) {
        return Ok(kappa(n, &f, opts)?.value.ln());
    }
    Ok(maximize_ratio(m, n, &f, &[], opts).value.ln())
}

/// `d(M,N) = max(δ(M,N), δ(N,M))`.
pub fn calderon_distance(
    m: &SpaceDescriptor,
    n: &SpaceDescriptor,
    f: &[usize],
    opts: &RatioOptions,
) -> Result<CalderonDistance> {
    let gap_mn = calderon_gap(m, n, f, opts)?;
    let gap_nm = calderon_gap(n, m, f, opts)?;
    Ok(CalderonDistance {
        gap_mn,
        gap_nm,
        distance: gap_mn.max(gap_nm),
    })
}

/// One row of a κ table on `F = [1, n]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KappaRow {
    pub n: usize,
    pub kappa: f64,
    pub kappa_star: f64,
    pub log_kappa: f64,
    pub floor_log_kappa: i64,
    pub certified_gap: Option<f64>,
}

/// κ and κ* on `[1, n]` for `n` in `range`, warm-started from the previous row.
pub fn kappa_table(
    space: &SpaceDescriptor,
    range: std::ops::RangeInclusive<usize>,
    opts: &RatioOptions,
) -> Result<Vec<KappaRow>> {
    let mut rows = Vec::new();
    let (mut seed_k, mut seed_s): (Vec<SeqVector>, Vec<SeqVector>) = (vec![], vec![]);
    for n in range {
        let f = interval(n);
        let k = kappa_seeded(space, &f, &seed_k, opts)?;
        let s = kappa_star_seeded(space, &f, &seed_s, opts)?;
        rows.push(KappaRow {
            n,
            kappa: k.value,
            kappa_star: s.value,
            log_kappa: k.log_value(),
            floor_log_kappa: k.floor_log(),
            certified_gap: k.certified_gap,
        });
        seed_k = vec![k.ascent_point];
        seed_s = vec![s.ascent_point];
    }
    Ok(rows)
}
