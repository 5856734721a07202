//! Closed-form derivations, critical-point formulas, centralizer defects and
//! growth diagnostics.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ckmr::{self, lp_interpolation_exponents, SelectorReport};
use crate::error::{Error, Result};
use crate::extremal::{self, index_set, interval, KappaResult, RatioOptions};
use crate::rng;
use crate::seqspace::{lq, SeqVector, SpaceDescriptor};

/// A named nonlinear map on finitely supported sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DerivationMap {
    KaltonPeck,
    LionsPeetre {
        p0: f64,
        p1: f64,
        theta: f64,
    },
    #[serde(rename = "rank_J")]
    RankJ {
        p0: f64,
        p1: f64,
        theta: f64,
    },
    /// `b ↦ −2e^{−1/2}⌊log r(b)⌋ b` with `r(b) = ‖b‖₂/‖b‖_{B0}`.
    CriticalReal {
        couple: (SpaceDescriptor, SpaceDescriptor),
    },
    /// `b ↦ −2 log r(b) · b` with `r(b) = ‖b‖₂/‖b‖_{B0}`.
    CriticalComplex {
        couple: (SpaceDescriptor, SpaceDescriptor),
    },
    /// Diagonal `b_j ↦ −2e^{−1/2}⌊log w_j⌋ b_j`.
    WeightedDemo {
        weights: Vec<f64>,
    },
    Zero,
}

impl DerivationMap {
    pub fn name(&self) -> &'static str {
        match self {
            DerivationMap::KaltonPeck => "kalton_peck",
            DerivationMap::LionsPeetre { .. } => "lions_peetre",
            DerivationMap::RankJ { .. } => "rank_J",
            DerivationMap::CriticalReal { .. } => "critical_real",
            DerivationMap::CriticalComplex { .. } => "critical_complex",
            DerivationMap::WeightedDemo { .. } => "weighted_demo",
            DerivationMap::Zero => "zero",
        }
    }

    /// Validates parameters once so that `apply` only fails on evaluation.
    pub fn validate(&self) -> Result<()> {
        match self {
            DerivationMap::LionsPeetre { p0, p1, theta } | DerivationMap::RankJ { p0, p1, theta } => {
                lp_interpolation_exponents(*p0, *p1, *theta).map(|_| ())
            }
            DerivationMap::WeightedDemo { weights } => {
                if weights.iter().any(|w| !(w.is_finite() && *w >= 1.0)) {
                    return Err(Error::param("weights", "weights must be finite and at least 1"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `Ω(b)`, with `Ω(0) = 0`.
    pub fn apply(&self, b: &SeqVector) -> Result<SeqVector> {
        if b.is_zero() {
            return Ok(SeqVector::zero());
        }
        match self {
            DerivationMap::KaltonPeck => omega_kalton_peck(b),
            DerivationMap::LionsPeetre { p0, p1, theta } => omega_lions_peetre(b, *p0, *p1, *theta),
            DerivationMap::RankJ { p0, p1, theta } => omega_rank_j(b, *p0, *p1, *theta),
            DerivationMap::CriticalReal { couple } => {
                let r = b.l2_norm() / couple.0.norm(b)?;
                let floor = r.ln().floor();
                Ok(b.scale((-2.0 * floor) * (-0.5f64).exp()))
            }
            DerivationMap::CriticalComplex { couple } => {
                let r = b.l2_norm() / couple.0.norm(b)?;
                Ok(b.scale(-2.0 * r.ln()))
            }
            DerivationMap::WeightedDemo { weights } => {
                if b.dim() > weights.len() {
                    return Err(Error::param(
                        "b",
                        format!("index {} beyond the {} weights", b.dim(), weights.len()),
                    ));
                }
                Ok(b.map_values(|j, x| ((-2.0 * weights[j - 1].ln().floor()) * (-0.5f64).exp()) * x))
            }
            DerivationMap::Zero => Ok(SeqVector::zero()),
        }
    }
}

/// `Ω(b)_j = 2 b_j log(|b_j| / ‖b‖₂)`.
pub fn omega_kalton_peck(b: &SeqVector) -> Result<SeqVector> {
    if b.is_zero() {
        return Err(Error::param("b", "the Kalton–Peck map needs a nonzero vector"));
    }
    let norm = b.l2_norm();
    Ok(b.map_values(|_, x| 2.0 * x * (x.abs() / norm).ln()))
}

/// `Ω(a)_m = e^{−θ}(−⌊λ log(|a_m|/‖a‖_p)⌋) a_m`; zero when `p0 = p1`.
pub fn omega_lions_peetre(a: &SeqVector, p0: f64, p1: f64, theta: f64) -> Result<SeqVector> {
    let (p, lambda) = lp_interpolation_exponents(p0, p1, theta)?;
    if a.is_zero() {
        return Err(Error::param("a", "the Lions–Peetre map needs a nonzero vector"));
    }
    if p0 == p1 {
        return Ok(SeqVector::zero());
    }
    let norm = lq(a.entries().iter().map(|e| e.1), p);
    let scale = (-theta).exp();
    Ok(a.map_values(|_, x| scale * -(lambda * (x.abs() / norm).ln()).floor() * x))
}

/// Rank of each support index by decreasing modulus, ties by smaller index.
pub fn rank_function(x: &SeqVector) -> Vec<(usize, usize)> {
    let mut order: Vec<(usize, f64)> = x.iter().map(|(i, v)| (i, v.abs())).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut ranks: Vec<(usize, usize)> = order
        .iter()
        .enumerate()
        .map(|(r, (i, _))| (*i, r + 1))
        .collect();
    ranks.sort_unstable();
    ranks
}

/// `Ω(x) = −x |log r_x|` coordinatewise. The rank is scale invariant, so the
/// internal `ℓp` normalization does not change the output.
pub fn omega_rank_j(x: &SeqVector, p0: f64, p1: f64, theta: f64) -> Result<SeqVector> {
    lp_interpolation_exponents(p0, p1, theta)?;
    if x.is_zero() {
        return Err(Error::param("x", "the rank map needs a nonzero vector"));
    }
    let ranks = rank_function(x);
    SeqVector::from_pairs(
        x.iter()
            .zip(&ranks)
            .map(|((i, v), (_, r))| (i, -v * (*r as f64).ln().abs())),
    )
}

/// One side of the real-method critical-point computation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalBranch {
    pub kappa: KappaResult,
    pub floor_log: i64,
    /// Critical point scaled to unit `ℓ2` norm.
    pub witness: SeqVector,
    pub selector: SelectorReport,
    pub closed_form: SeqVector,
    pub machinery: SeqVector,
}

impl CriticalBranch {
    pub fn exact(&self) -> bool {
        self.closed_form == self.machinery
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalReal {
    /// Uses `κ(F)` and the slot `N = −2⌊log κ⌋`.
    pub primal: CriticalBranch,
    /// Uses `κ*(F)` and the slot `N = +2⌊log κ*⌋`.
    pub dual: CriticalBranch,
    pub warnings: Vec<String>,
}

fn critical_branch(
    kappa: KappaResult,
    sign: i8,
    couple: &(SpaceDescriptor, SpaceDescriptor),
) -> Result<CriticalBranch> {
    let witness = kappa.witness.scale(1.0 / kappa.witness.l2_norm());
    let floor_log = kappa.floor_log();
    let selector = ckmr::single_slot_selector(&witness, floor_log, sign, 0.5, couple.clone(), (2.0, 2.0))?;
    let machinery = selector.jseq.delta_prime(0.5);
    let closed_form = witness.scale((sign as f64 * 2.0 * floor_log as f64) * (-0.5f64).exp());
    Ok(CriticalBranch {
        kappa,
        floor_log,
        witness,
        selector,
        closed_form,
        machinery,
    })
}

fn kappa_warnings(label: &str, k: &KappaResult, out: &mut Vec<String>) {
    if k.is_heuristic() {
        out.push(format!("{label}: value is heuristic (no grid certificate for |F| = {})", k.support.len()));
    }
    if !k.dual_certified {
        out.push(format!("{label}: dual norm did not reach its tolerance"));
    }
}

/// Real-method derivation at the critical points of `κ(F)` and `κ*(F)` for
/// the couple `(B0, B1)`, by closed form and by the single-slot machinery.
pub fn omega_critical_real(
    couple: &(SpaceDescriptor, SpaceDescriptor),
    f: &[usize],
    opts: &RatioOptions,
) -> Result<CriticalReal> {
    let f = index_set(f)?;
    let k = extremal::kappa(&couple.0, &f, opts)?;
    let ks = extremal::kappa(&couple.1, &f, opts)?;
    let mut warnings = Vec::new();
    kappa_warnings("kappa", &k, &mut warnings);
    kappa_warnings("kappa_star", &ks, &mut warnings);
    Ok(CriticalReal {
        primal: critical_branch(k, -1, couple)?,
        dual: critical_branch(ks, 1, couple)?,
        warnings,
    })
}

/// Boundary moduli of `S(z) = e^{−2(z−1/2) log κ} b_*`; independent of `Im z`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryReport {
    /// `‖S(it)‖_B = κ ‖b_*‖_B`.
    pub left_norm: f64,
    /// `‖b_*‖₂`, which `left_norm` equals at an exact critical point.
    pub l2_norm: f64,
    /// `‖S(1+it)‖_{B*} = κ^{−1} ‖b_*‖_{B*}`, upper end of the dual interval.
    pub right_norm: f64,
    /// `right_norm ≤ ‖b_*‖₂ (1 + tol)`.
    pub right_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalComplex {
    pub kappa: KappaResult,
    pub witness: SeqVector,
    pub output: SeqVector,
    pub boundary: BoundaryReport,
    pub warnings: Vec<String>,
}

/// Complex-method derivation `−2 log κ(F) · b_*` at the critical point.
pub fn omega_critical_complex(
    space: &SpaceDescriptor,
    f: &[usize],
    opts: &RatioOptions,
    tol: f64,
) -> Result<CriticalComplex> {
    let k = extremal::kappa(space, f, opts)?;
    let mut warnings = Vec::new();
    kappa_warnings("kappa", &k, &mut warnings);
    let witness = k.witness.scale(1.0 / k.witness.l2_norm());
    let log_k = k.value.ln();
    let output = witness.scale(-2.0 * log_k);
    let dual_space = space.dual();
    let right = if let crate::SpaceKind::DualOf(_) = dual_space.kind {
        let d = space.dual_norm(&witness)?;
        if !d.certified {
            warnings.push("dual norm at the witness did not reach its tolerance".into());
        }
        d.upper
    } else {
        dual_space.norm(&witness)?
    };
    let l2 = witness.l2_norm();
    let right_norm = right / k.value;
    let boundary = BoundaryReport {
        left_norm: k.value * space.norm(&witness)?,
        l2_norm: l2,
        right_norm,
        right_ok: right_norm <= l2 * (1.0 + tol),
    };
    Ok(CriticalComplex {
        kappa: k,
        witness,
        output,
        boundary,
        warnings,
    })
}

/// `‖Ω(a·b) − a·Ω(b)‖₂ / (‖a‖_∞ ‖b‖₂)`.
pub fn centralizer_defect(omega: &DerivationMap, a: &SeqVector, b: &SeqVector) -> Result<f64> {
    if a.is_zero() || b.is_zero() {
        return Err(Error::param("a, b", "multiplier and vector must be nonzero"));
    }
    let lhs = omega.apply(&a.hadamard(b))?;
    let rhs = a.hadamard(&omega.apply(b)?);
    Ok(lhs.sub(&rhs).l2_norm() / (a.linf_norm() * b.l2_norm()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefectStats {
    pub map: String,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub max: f64,
    pub mean: f64,
}

/// Monte Carlo defect with `a` uniform in `[−1,1]^n` and Gaussian `b`.
pub fn centralizer_defect_stats(
    omega: &DerivationMap,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<DefectStats> {
    if n == 0 || trials == 0 {
        return Err(Error::param("n, trials", "must be positive"));
    }
    omega.validate()?;
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t as u64);
            let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            centralizer_defect(omega, &SeqVector::from_dense(&a), &SeqVector::from_dense(&b))
        })
        .collect::<Result<_>>()?;
    Ok(DefectStats {
        map: omega.name().to_string(),
        n,
        trials,
        seed,
        max: values.iter().cloned().fold(0.0, f64::max),
        mean: values.iter().sum::<f64>() / trials as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthRow {
    pub n: usize,
    pub kappa: f64,
    pub kappa_star: f64,
    pub floor_log_kappa: i64,
    pub floor_log_kappa_star: i64,
    /// `‖Ω(a_n)‖₂/‖a_n‖₂` at the critical point, computed by the machinery.
    pub critical_norm: f64,
    pub heuristic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthTable {
    pub couple: (SpaceDescriptor, SpaceDescriptor),
    pub rows: Vec<GrowthRow>,
    /// The critical derivation norm takes more than one value on the range.
    pub nonconstant: bool,
}

/// κ and κ* on `[1, n]` for `n ≤ n_max`, warm-started row to row so that both
/// columns are nondecreasing.
pub fn growth_diagnostic(
    couple: &(SpaceDescriptor, SpaceDescriptor),
    n_max: usize,
    opts: &RatioOptions,
) -> Result<GrowthTable> {
    if n_max == 0 {
        return Err(Error::param("n_max", "must be positive"));
    }
    let mut rows = Vec::with_capacity(n_max);
    let (mut seed_k, mut seed_s): (Vec<SeqVector>, Vec<SeqVector>) = (vec![], vec![]);
    for n in 1..=n_max {
        let f = interval(n);
        let k = extremal::kappa_seeded(&couple.0, &f, &seed_k, opts)?;
        let ks = extremal::kappa_seeded(&couple.1, &f, &seed_s, opts)?;
        let heuristic = k.is_heuristic() || !ks.dual_certified;
        let branch = critical_branch(k, -1, couple)?;
        rows.push(GrowthRow {
            n,
            kappa: branch.kappa.value,
            kappa_star: ks.value,
            floor_log_kappa: branch.floor_log,
            floor_log_kappa_star: ks.floor_log(),
            critical_norm: branch.machinery.l2_norm() / branch.witness.l2_norm(),
            heuristic,
        });
        seed_k = vec![branch.kappa.ascent_point.clone()];
        seed_s = vec![ks.ascent_point.clone()];
    }
    let nonconstant = rows.windows(2).any(|w| w[0].critical_norm != w[1].critical_norm);
    Ok(GrowthTable {
        couple: couple.clone(),
        rows,
        nonconstant,
    })
}

/// `δ_n = 1 + log(1 + log(1 + n))`, a slowly growing sequence with `δ_1 > 1`.
pub fn loglog_delta(n_max: usize) -> Vec<f64> {
    (1..=n_max)
        .map(|n| 1.0 + (1.0 + (1.0 + n as f64).ln()).ln())
        .collect()
}

/// Weighted couple `(B, B*)` with `‖x‖_B = (Σ (x_j/δ_j)²)^{1/2}`, so that
/// `κ([1,n]) = max_{j≤n} δ_j = δ_n`, and its growth table.
pub fn slow_growth_demo(delta: &[f64], n_max: usize, opts: &RatioOptions) -> Result<GrowthTable> {
    if delta.len() < n_max {
        return Err(Error::param(
            "delta",
            format!("{} values given for n_max = {n_max}", delta.len()),
        ));
    }
    let delta = &delta[..n_max];
    if delta.first().is_some_and(|d| *d < 1.0) {
        return Err(Error::param("delta", "values must be at least 1"));
    }
    if let Some(k) = delta.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::param(
            "delta",
            format!("sequence decreases at n = {}", k + 2),
        ));
    }
    let b = SpaceDescriptor::weighted_l2(delta.to_vec())?;
    let couple = (b.clone(), b.dual());
    growth_diagnostic(&couple, n_max, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sp(s: &str) -> SpaceDescriptor {
        s.parse().unwrap()
    }

    fn opts() -> RatioOptions {
        RatioOptions::default()
    }

    fn all_maps() -> Vec<DerivationMap> {
        vec![
            DerivationMap::KaltonPeck,
            DerivationMap::LionsPeetre { p0: 1.0, p1: 4.0, theta: 0.5 },
            DerivationMap::RankJ { p0: 1.0, p1: 2.0, theta: 0.5 },
            DerivationMap::CriticalReal { couple: (sp("c0"), sp("l1")) },
            DerivationMap::CriticalComplex { couple: (sp("T2"), sp("dual:T2")) },
            DerivationMap::WeightedDemo { weights: loglog_delta(12) },
            DerivationMap::Zero,
        ]
    }

    #[test]
    fn kalton_peck_examples() {
        assert!(omega_kalton_peck(&SeqVector::basis(1)).unwrap().is_zero());
        for n in [2usize, 5, 16] {
            let b = SeqVector::indicator(1, n).scale(1.0 / (n as f64).sqrt());
            let got = omega_kalton_peck(&b).unwrap();
            let want = b.scale(-2.0 * (n as f64).sqrt().ln());
            assert!(got.sub(&want).linf_norm() <= 1e-12 * want.linf_norm());
        }
        // (1, 1/2)/‖·‖ = (2, 1)/√5
        let s5 = 5f64.sqrt();
        let b = SeqVector::from_dense(&[2.0 / s5, 1.0 / s5]);
        let got = omega_kalton_peck(&b).unwrap();
        let want = [2.0 * (2.0 / s5) * (2.0 / s5).ln(), 2.0 * (1.0 / s5) * (1.0 / s5).ln()];
        for (j, w) in want.iter().enumerate() {
            assert!((got.get(j + 1) - w).abs() < 1e-15);
        }
        assert!(omega_kalton_peck(&SeqVector::zero()).is_err());
    }

    #[test]
    fn lions_peetre_examples() {
        assert!(omega_lions_peetre(&SeqVector::basis(1), 1.0, 2.0, 0.5).unwrap().is_zero());
        // uniform moduli: n = −⌊λ log n^{−1/p}⌋
        let n = 9usize;
        let a = SeqVector::indicator(1, n).scale(0.7);
        let (p, lambda) = lp_interpolation_exponents(1.0, 4.0, 2.0 / 3.0).unwrap();
        let slot = -(lambda * (n as f64).powf(-1.0 / p).ln()).floor();
        let want = a.scale(slot * (-2.0f64 / 3.0).exp());
        let got = omega_lions_peetre(&a, 1.0, 4.0, 2.0 / 3.0).unwrap();
        assert!(got.sub(&want).linf_norm() < 1e-12);
        assert!(omega_lions_peetre(&a, 2.0, 2.0, 0.5).unwrap().is_zero());
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_function(&SeqVector::basis(1)), vec![(1, 1)]);
        assert!(omega_rank_j(&SeqVector::basis(1), 1.0, 2.0, 0.5).unwrap().is_zero());
        let x = SeqVector::from_dense(&[3.0, 1.0, 2.0]);
        let r: Vec<usize> = rank_function(&x).into_iter().map(|e| e.1).collect();
        assert_eq!(r, vec![1, 3, 2]);
        let tie = SeqVector::from_dense(&[1.0, -1.0]);
        let r: Vec<usize> = rank_function(&tie).into_iter().map(|e| e.1).collect();
        assert_eq!(r, vec![1, 2]);
        let o = omega_rank_j(&tie, 1.0, 2.0, 0.5).unwrap();
        assert_eq!(o.to_dense(2), vec![0.0, 2f64.ln()]);
    }

    #[test]
    fn critical_real_c0_l1() {
        let c = (sp("c0"), sp("l1"));
        let r = omega_critical_real(&c, &interval(4), &opts()).unwrap();
        assert_eq!(r.primal.kappa.value, 2.0);
        assert_eq!(r.primal.floor_log, 0);
        assert!(r.primal.machinery.is_zero());
        assert!(r.primal.exact() && r.dual.exact());

        let r = omega_critical_real(&c, &interval(16), &opts()).unwrap();
        assert_eq!(r.primal.kappa.value, 4.0);
        assert_eq!(r.primal.floor_log, 1);
        let want = r.primal.witness.scale(-2.0 * (-0.5f64).exp());
        assert_eq!(r.primal.machinery, want);
        assert!(r.primal.exact());
        // κ*(F) = 1 for (c0, ℓ1)
        assert_eq!(r.dual.kappa.value, 1.0);
        assert!(r.dual.machinery.is_zero());
        assert!(!r.warnings.is_empty());

        let one = omega_critical_real(&c, &[1], &opts()).unwrap();
        assert!(one.primal.machinery.is_zero());
    }

    #[test]
    fn critical_real_weighted_dual_branch() {
        let d = loglog_delta(6);
        let b = SpaceDescriptor::weighted_l2(d.clone()).unwrap();
        let r = omega_critical_real(&(b.clone(), b.dual()), &interval(6), &opts()).unwrap();
        assert_eq!(r.primal.kappa.value, d[5]);
        assert!((r.dual.kappa.value - 1.0 / d[0]).abs() < 1e-15);
        assert_eq!(r.dual.floor_log, -1);
        assert!(r.dual.exact());
        assert!(!r.dual.machinery.is_zero());
    }

    #[test]
    fn critical_complex_examples() {
        for n in [1usize, 4, 9] {
            let r = omega_critical_complex(&sp("c0"), &interval(n), &opts(), 1e-6).unwrap();
            let kp = omega_kalton_peck(&r.witness).unwrap();
            assert!(r.output.sub(&kp).linf_norm() < 1e-12, "n={n}");
            assert!(r.boundary.right_ok);
            assert!((r.boundary.left_norm - r.boundary.l2_norm).abs() < 1e-12);
        }
        let r = omega_critical_complex(&sp("T2"), &interval(4), &opts(), 1e-6).unwrap();
        assert_eq!(r.output, r.witness.scale(-2.0 * r.kappa.value.ln()));
        assert!(r.boundary.right_ok, "{:?}", r.boundary);
    }

    #[test]
    fn defect_examples() {
        let b = SeqVector::from_dense(&[0.3, -1.2, 2.0, 0.05]);
        let signs = SeqVector::from_dense(&[1.0, -1.0, -1.0, 1.0]);
        let ones = SeqVector::indicator(1, 4);
        for m in all_maps() {
            assert_eq!(centralizer_defect(&m, &signs, &b).unwrap(), 0.0, "{}", m.name());
            assert_eq!(centralizer_defect(&m, &ones, &b).unwrap(), 0.0, "{}", m.name());
        }
        assert!(centralizer_defect(&DerivationMap::KaltonPeck, &SeqVector::zero(), &b).is_err());
    }

    #[test]
    fn defect_stats_are_reproducible() {
        let a = centralizer_defect_stats(&DerivationMap::KaltonPeck, 16, 500, 3).unwrap();
        let b = centralizer_defect_stats(&DerivationMap::KaltonPeck, 16, 500, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.max.is_finite() && a.max > 0.0);
    }

    #[test]
    fn growth_examples() {
        let t = growth_diagnostic(&(sp("lp:2"), sp("lp:2")), 8, &opts()).unwrap();
        assert!(t.rows.iter().all(|r| r.kappa == 1.0 && r.critical_norm == 0.0));
        assert!(!t.nonconstant);

        let t = growth_diagnostic(&(sp("c0"), sp("l1")), 16, &opts()).unwrap();
        for r in &t.rows {
            assert!((r.kappa - (r.n as f64).sqrt()).abs() < 1e-12);
            assert_eq!(r.floor_log_kappa, (0.5 * (r.n as f64).ln()).floor() as i64);
        }
        assert!(t.nonconstant);
    }

    #[test]
    fn slow_growth_is_exact() {
        let d = loglog_delta(16);
        let t = slow_growth_demo(&d, 16, &opts()).unwrap();
        for (r, dn) in t.rows.iter().zip(&d) {
            assert_eq!(r.kappa, *dn, "n={}", r.n);
            let want = 2.0 * (-0.5f64).exp() * dn.ln().floor().abs();
            assert!((r.critical_norm - want).abs() < 1e-15);
        }
        let flat = slow_growth_demo(&[1.0; 5], 5, &opts()).unwrap();
        assert!(flat.rows.iter().all(|r| r.kappa == 1.0));
        assert!(slow_growth_demo(&[1.0, 2.0, 1.5], 3, &opts()).is_err());
        assert!(slow_growth_demo(&[0.5, 2.0], 2, &opts()).is_err());
    }

    #[test]
    fn map_json_round_trip() {
        for m in all_maps() {
            let text = serde_json::to_string(&m).unwrap();
            assert!(text.contains(&format!(r#""kind":"{}""#, m.name())), "{text}");
            let back: DerivationMap = serde_json::from_str(&text).unwrap();
            assert_eq!(back, m);
        }
    }

    fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), -3.0f64..3.0], 1..10)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sign_equivariance(v in vec_strategy(), signs in prop::collection::vec(any::<bool>(), 10)) {
            let b = SeqVector::from_dense(&v);
            let eps = SeqVector::from_dense(&signs[..v.len()].iter().map(|s| if *s { -1.0 } else { 1.0 }).collect::<Vec<_>>());
            for m in all_maps() {
                let lhs = m.apply(&eps.hadamard(&b)).unwrap();
                let rhs = eps.hadamard(&m.apply(&b).unwrap());
                prop_assert_eq!(lhs, rhs, "{}", m.name());
            }
        }

        #[test]
        fn positive_homogeneity(v in vec_strategy(), t in 0.01f64..100.0) {
            let b = SeqVector::from_dense(&v);
            prop_assume!(!b.is_zero());
            for m in all_maps() {
                // critical maps floor a ratio; skip draws sitting on a floor boundary
                let lhs = m.apply(&b.scale(t)).unwrap();
                let rhs = m.apply(&b).unwrap().scale(t);
                let err = lhs.sub(&rhs).l2_norm();
                prop_assert!(err <= 1e-12 * rhs.l2_norm().max(b.l2_norm() * t), "{}: {}", m.name(), err);
            }
        }

        #[test]
        fn floor_quantization(v in vec_strategy(), ti in 0usize..3) {
            let a = SeqVector::from_dense(&v);
            prop_assume!(!a.is_zero());
            let theta = [0.25, 0.5, 2.0 / 3.0][ti];
            let (p, lambda) = lp_interpolation_exponents(1.0, 4.0, theta).unwrap();
            let o = omega_lions_peetre(&a, 1.0, 4.0, theta).unwrap();
            let norm = lq(a.entries().iter().map(|e| e.1), p);
            for (m, am) in a.iter() {
                let q = o.get(m) / ((-theta).exp() * am) + lambda * (am.abs() / norm).ln();
                prop_assert!(q.abs() <= 1.0 + 1e-12);
            }
        }

        #[test]
        fn machinery_matches_closed_form(v in vec_strategy(), pi in 0usize..3, qi in 0usize..3, ti in 0usize..3) {
            let a = SeqVector::from_dense(&v);
            prop_assume!(!a.is_zero());
            let ps = [1.0, 2.0, 4.0];
            let theta = [0.25, 0.5, 2.0 / 3.0][ti];
            let sel = ckmr::lions_peetre_selector(&a, ps[pi], ps[qi], theta).unwrap();
            let mach = sel.jseq.delta_prime(theta);
            let closed = omega_lions_peetre(&a, ps[pi], ps[qi], theta).unwrap();
            for (m, c) in closed.iter() {
                prop_assert!((mach.get(m) - c).abs() <= 1e-12 * c.abs());
            }
            prop_assert_eq!(mach.support(), closed.support());
        }

        #[test]
        fn ranks_are_a_bijection(v in vec_strategy()) {
            let x = SeqVector::from_dense(&v);
            let mut r: Vec<usize> = rank_function(&x).into_iter().map(|e| e.1).collect();
            r.sort_unstable();
            prop_assert_eq!(r, (1..=x.nnz()).collect::<Vec<_>>());
        }
    }
}
