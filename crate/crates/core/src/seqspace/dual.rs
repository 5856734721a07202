//! Dual norms `sup{⟨x,y⟩ : ‖x‖ ≤ 1}` on finite supports.
//!
//! Closed forms for `ℓp`, `c0` and weighted `ℓ2`. For `T` and `T²` the
//! supremum is computed by constraint generation: a master problem over a
//! working set of norming functionals is solved, and the Tsirelson DP at the
//! master optimum supplies the most violated functional. The master value is
//! an upper bound (fewer constraints), and rescaling the master optimum onto
//! the true unit sphere gives a feasible point and hence a lower bound.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use microlp::{ComparisonOp, OptimizationDirection, Problem};

use super::tsirelson::{tsirelson2_norm_with_functional, tsirelson_norm_with_functional};
use super::{lq, SpaceKind};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualSettings {
    /// Target relative width `(upper − lower) / upper`.
    pub tolerance: f64,
    /// Constraint-generation rounds before giving up certification.
    pub max_rounds: usize,
}

impl Default for DualSettings {
    fn default() -> Self {
        DualSettings {
            tolerance: 1e-7,
            max_rounds: 400,
        }
    }
}

/// Certified enclosure of a dual norm.
#[derive(Clone, Debug, PartialEq)]
pub struct DualValue {
    pub lower: f64,
    pub upper: f64,
    /// Set when `(upper − lower) / upper ≤ tolerance`.
    pub certified: bool,
    /// Nonnegative `x` with `‖x‖ ≤ 1` and `⟨x, |y|⟩ = lower`.
    pub maximizer: Vec<f64>,
    pub rounds: usize,
}

impl DualValue {
    fn exact(value: f64, maximizer: Vec<f64>) -> Self {
        DualValue {
            lower: value,
            upper: value,
            certified: true,
            maximizer,
            rounds: 0,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Dual norm of `y`; the maximizer carries the signs of `y`.
pub(crate) fn dual_value(kind: &SpaceKind, y: &[f64], s: &DualSettings) -> DualValue {
    let c: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let mut d = dual_value_abs(kind, &c, s);
    for (m, yk) in d.maximizer.iter_mut().zip(y) {
        if *yk < 0.0 {
            *m = -*m;
        }
    }
    d
}

/// Dual norm of a nonnegative `c` with a nonnegative maximizer.
fn dual_value_abs(kind: &SpaceKind, c: &[f64], s: &DualSettings) -> DualValue {
    let n = c.len();
    if c.iter().all(|&v| v == 0.0) {
        return DualValue::exact(0.0, vec![0.0; n]);
    }
    match kind {
        SpaceKind::Lp(p) if *p == 1.0 => {
            let (mut arg, mut m) = (0, 0.0);
            for (k, &v) in c.iter().enumerate() {
                if v > m {
                    m = v;
                    arg = k;
                }
            }
            let mut x = vec![0.0; n];
            x[arg] = 1.0;
            DualValue::exact(m, x)
        }
        SpaceKind::Lp(p) => {
            let q = p / (p - 1.0);
            let v = lq(c.iter().copied(), q);
            let x = c.iter().map(|&ci| (ci / v).powf(q - 1.0)).collect();
            DualValue::exact(v, x)
        }
        SpaceKind::C0 => DualValue::exact(
            c.iter().sum(),
            c.iter().map(|&ci| (ci > 0.0) as u8 as f64).collect(),
        ),
        SpaceKind::WeightedL2(w) => {
            let wy: Vec<f64> = c.iter().enumerate().map(|(k, ci)| ci * w.values[k]).collect();
            let v = lq(wy.iter().copied(), 2.0);
            let x = wy
                .iter()
                .enumerate()
                .map(|(k, t)| t * w.values[k] / v)
                .collect();
            DualValue::exact(v, x)
        }
        SpaceKind::Tsirelson => tsirelson_dual(c, s),
        SpaceKind::Tsirelson2 => tsirelson2_dual(c, s),
        SpaceKind::DualOf(inner) => {
            // dual of a dual is the primal norm; the maximizer is its subgradient
            let (v, g) = super::subgradient_kind(inner, c, s);
            DualValue::exact(v, g.iter().map(|t| t.abs()).collect())
        }
    }
}

fn support(c: &[f64]) -> Vec<usize> {
    (0..c.len()).filter(|&j| c[j] > 0.0).collect()
}

fn finish(lower: f64, upper: f64, x: Vec<f64>, rounds: usize, s: &DualSettings) -> DualValue {
    let upper = upper.max(lower);
    DualValue {
        lower,
        upper,
        certified: upper - lower <= s.tolerance * upper,
        maximizer: x,
        rounds,
    }
}

fn tsirelson_dual(c: &[f64], s: &DualSettings) -> DualValue {
    let n = c.len();
    let js = support(c);
    let mut working: Vec<Vec<f64>> = Vec::new();
    let (mut lower, mut upper) = (0.0f64, f64::INFINITY);
    let mut best_x = vec![0.0; n];
    for round in 1..=s.max_rounds {
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = js.iter().map(|&j| lp.add_var(c[j], (0.0, 1.0))).collect();
        for f in &working {
            let expr: Vec<_> = js
                .iter()
                .zip(&vars)
                .filter(|(&j, _)| f[j] > 0.0)
                .map(|(&j, &v)| (v, f[j]))
                .collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, 1.0);
        }
        let sol = match lp.solve() {
            Ok(out) => match out.into_solution() {
                Ok(sol) => sol,
                Err(_) => break,
            },
            Err(_) => break,
        };
        upper = upper.min(sol.objective());
        let mut x = vec![0.0; n];
        for (&j, &v) in js.iter().zip(&vars) {
            x[j] = sol.var_value(v).clamp(0.0, 1.0);
        }
        let (t, f) = tsirelson_norm_with_functional(&x);
        let scale = if t > 1.0 { 1.0 / t } else { 1.0 };
        let val: f64 = js.iter().map(|&j| c[j] * x[j]).sum::<f64>() * scale;
        if val > lower {
            lower = val;
            best_x = x.iter().map(|v| v * scale).collect();
        }
        if upper - lower <= s.tolerance * upper || working.contains(&f) {
            return finish(lower, upper, best_x, round, s);
        }
        working.push(f);
    }
    finish(lower, upper, best_x, s.max_rounds, s)
}

fn tsirelson2_dual(c: &[f64], s: &DualSettings) -> DualValue {
    let n = c.len();
    let js = support(c);
    let m = js.len();
    // start from the coordinate constraints and the functional norming c²
    let mut working: Vec<Vec<f64>> = js
        .iter()
        .map(|&j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let (_, f0) = tsirelson2_norm_with_functional(c);
    if !working.contains(&f0) {
        working.push(f0);
    }
    let (mut lower, mut upper) = (0.0f64, f64::INFINITY);
    let mut best_x = vec![0.0; n];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(200)
        .tol_gap_abs(1e-12)
        .tol_gap_rel(1e-12)
        .tol_feas(1e-12)
        .build()
        .expect("valid solver settings");
    for round in 1..=s.max_rounds {
        let (mut rows, mut cols, mut vals) = (Vec::new(), Vec::new(), Vec::new());
        let mut b = Vec::new();
        let mut cones = Vec::new();
        let mut blocks = Vec::new();
        for f in &working {
            blocks.push(b.len());
            b.push(1.0);
            let mut dim = 1;
            for (col, &j) in js.iter().enumerate() {
                if f[j] > 0.0 {
                    rows.push(b.len());
                    cols.push(col);
                    vals.push(-f[j].sqrt());
                    b.push(0.0);
                    dim += 1;
                }
            }
            cones.push(SupportedConeT::SecondOrderConeT(dim));
        }
        let a = CscMatrix::new_from_triplets(b.len(), m, rows, cols, vals);
        let p = CscMatrix::zeros((m, m));
        let q: Vec<f64> = js.iter().map(|&j| -c[j]).collect();
        let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings.clone()) {
            Ok(solver) => solver,
            Err(_) => break,
        };
        solver.solve();
        let sol = &solver.solution;
        if !matches!(sol.status, SolverStatus::Solved | SolverStatus::AlmostSolved) {
            break;
        }
        let mut x = vec![0.0; n];
        for (col, &j) in js.iter().enumerate() {
            x[j] = sol.x[col].max(0.0);
        }
        // upper bound from the aggregated constraint Σ d_j x_j² ≤ 1, d = Σ μ_f f
        let mu: Vec<f64> = blocks.iter().map(|&r| sol.z[r].max(0.0)).collect();
        let total: f64 = mu.iter().sum();
        if total > 0.0 {
            let mut d = vec![0.0; n];
            for (f, w) in working.iter().zip(&mu) {
                for &j in &js {
                    d[j] += w / total * f[j];
                }
            }
            if js.iter().all(|&j| d[j] > 0.0) {
                let u = js.iter().map(|&j| c[j] * c[j] / d[j]).sum::<f64>().sqrt();
                upper = upper.min(u);
            }
        }
        let (t, f) = tsirelson2_norm_with_functional(&x);
        if t > 0.0 {
            let val: f64 = js.iter().map(|&j| c[j] * x[j]).sum::<f64>() / t;
            if val > lower {
                lower = val;
                best_x = x.iter().map(|v| v / t).collect();
            }
        }
        if upper - lower <= s.tolerance * upper || working.contains(&f) {
            return finish(lower, upper, best_x, round, s);
        }
        working.push(f);
    }
    finish(lower, upper, best_x, s.max_rounds, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqspace::{norming_functionals, tsirelson2_norm, tsirelson_norm, NormingCaps};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn settings() -> DualSettings {
        DualSettings::default()
    }

    /// Exact LP over the fully enumerated norming set.
    fn lp_over_norming_set(c: &[f64]) -> f64 {
        let set = norming_functionals(c.len(), NormingCaps::default()).unwrap();
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = c.iter().map(|&ci| lp.add_var(ci, (0.0, f64::INFINITY))).collect();
        for f in &set.functionals {
            let expr: Vec<_> = vars.iter().zip(f).map(|(&v, &fj)| (v, fj)).collect();
            lp.add_constraint(expr.as_slice(), ComparisonOp::Le, 1.0);
        }
        lp.solve().unwrap().into_solution().unwrap().objective()
    }

    /// Feasible points from a grid on the T² sphere give a lower bound.
    fn grid_lower_t2(c: &[f64]) -> f64 {
        let n = c.len();
        let mut best = 0.0f64;
        let steps = 6usize;
        let total = (steps + 1).pow(n as u32);
        for code in 1..total {
            let mut r = code;
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    let d = r % (steps + 1);
                    r /= steps + 1;
                    d as f64 / steps as f64
                })
                .collect();
            let t = tsirelson2_norm(&x);
            best = best.max(c.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / t);
        }
        best
    }

    #[test]
    fn tsirelson_dual_matches_full_lp() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..30 {
            let n = 1 + trial % 8;
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let d = tsirelson_dual(&c, &settings());
            assert!(d.certified, "{d:?}");
            let exact = lp_over_norming_set(&c);
            assert!((d.upper - exact).abs() <= 1e-9 * exact, "cg {d:?} full {exact}");
        }
    }

    #[test]
    fn tsirelson2_dual_brackets_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let c: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let d = tsirelson2_dual(&c, &settings());
            assert!(d.certified, "{d:?}");
            let grid = grid_lower_t2(&c);
            assert!(grid <= d.upper * (1.0 + 1e-9));
            assert!(grid >= 0.97 * d.lower, "grid {grid} socp {}", d.lower);
        }
    }

    #[test]
    fn maximizer_is_feasible_and_attains_lower() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(1..=12);
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for (kind, norm) in [
                (SpaceKind::Tsirelson, tsirelson_norm as fn(&[f64]) -> f64),
                (SpaceKind::Tsirelson2, tsirelson2_norm),
            ] {
                let d = dual_value(&kind, &c, &settings());
                assert!(d.lower <= d.upper);
                assert!(d.certified, "{kind:?} {d:?}");
                assert!(norm(&d.maximizer) <= 1.0 + 1e-12);
                let pair: f64 = c.iter().zip(&d.maximizer).map(|(a, b)| a * b).sum();
                assert!((pair - d.lower).abs() <= 1e-12 * d.lower);
            }
        }
    }

    #[test]
    fn pairing_inequality_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let pair: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let d = dual_value(&SpaceKind::Tsirelson, &y, &settings());
            assert!(pair <= tsirelson_norm(&x) * d.upper * (1.0 + 1e-12));
        }
    }

    #[test]
    fn kappa_squared_identity() {
        // sup over the T² ball of ⟨x, 1⟩... equals ‖1_F‖ in T*, squared κ values
        let expected = [1.0, 2.0, 3.0, 4.0, 4.0, 14.0 / 3.0, 4.8, 5.0];
        for (k, want) in expected.iter().enumerate() {
            let c = vec![1.0; k + 1];
            let d = tsirelson_dual(&c, &settings());
            assert!((d.upper - want).abs() < 1e-9, "n={}: {d:?}", k + 1);
        }
    }

    #[test]
    fn uncertified_when_budget_is_tiny() {
        let c = vec![1.0; 10];
        let tight = DualSettings {
            tolerance: 1e-12,
            max_rounds: 1,
        };
        let d = tsirelson2_dual(&c, &tight);
        assert!(d.lower <= d.upper);
        assert!(!d.certified);
    }
}
