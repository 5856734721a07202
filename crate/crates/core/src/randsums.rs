//! Rademacher averages, lower estimates of type constants `a_{m,p}`, and
//! desk-scale checks of the random-sum inequalities for derivations.
//!
//! Every type quantity here is a supremum over the tested families only, so
//! it sits below the true constant. Reports built from these estimates are
//! evidence; they never certify the inequalities.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::DerivationMap;
use crate::ckmr::check_theta;
use crate::error::{Error, Result};
use crate::rng;
use crate::seqspace::{lq, SeqVector, SpaceDescriptor, SpaceKind};
use crate::twisted::DerivedVector;

/// Largest `m` for exact enumeration of `{−1, 1}^m`.
pub const EXACT_MAX_M: usize = 20;

pub const ONE_SIDED_NOTE: &str =
    "type constants are lower estimates over the tested families; the comparison is evidence only";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum AverageMode {
    Exact,
    MonteCarlo { trials: usize, seed: u64 },
    /// Exact when `m ≤ EXACT_MAX_M`, Monte Carlo otherwise.
    Auto { trials: usize, seed: u64 },
}

impl AverageMode {
    fn resolve(self, m: usize) -> Result<AverageMode> {
        match self {
            AverageMode::Exact if m > EXACT_MAX_M => Err(Error::param(
                "mode",
                format!("exact enumeration needs m <= {EXACT_MAX_M}, got {m}"),
            )),
            AverageMode::Auto { .. } if m <= EXACT_MAX_M => Ok(AverageMode::Exact),
            AverageMode::Auto { trials, seed } => Ok(AverageMode::MonteCarlo { trials, seed }),
            AverageMode::MonteCarlo { trials: 0, .. } => Err(Error::param("trials", "must be positive")),
            other => Ok(other),
        }
    }

    fn label(self) -> &'static str {
        match self {
            AverageMode::Exact => "exact-enumeration",
            _ => "monte-carlo",
        }
    }

}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RademacherAverage {
    pub mean: f64,
    /// Standard error of the mean; `None` for exact enumeration.
    pub std_error: Option<f64>,
    pub method: &'static str,
    pub samples: usize,
}

/// Sum in a fixed binary tree; exact for `2^k` equal terms and independent of
/// how the terms were computed.
fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// `E f(ε)` over sign vectors. `f` must be even in `ε`, which lets exact mode
/// fix `ε_1 = 1`.
fn sign_average<F>(m: usize, f: F, mode: AverageMode) -> Result<RademacherAverage>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if m == 0 {
        return Err(Error::param("m", "family must be nonempty"));
    }
    let mode = mode.resolve(m)?;
    match mode {
        AverageMode::Exact => {
            let count = 1usize << (m - 1);
            let values: Vec<f64> = (0..count)
                .into_par_iter()
                .map(|mask| {
                    let eps: Vec<f64> = (0..m)
                        .map(|j| if j > 0 && (mask >> (j - 1)) & 1 == 1 { -1.0 } else { 1.0 })
                        .collect();
                    f(&eps)
                })
                .collect::<Result<_>>()?;
            Ok(RademacherAverage {
                mean: pairwise_sum(&values) / count as f64,
                std_error: None,
                method: mode.label(),
                samples: count,
            })
        }
        AverageMode::MonteCarlo { trials, seed } => {
            let values: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = rng::stream(seed, t as u64);
                    let eps: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { -1.0 } else { 1.0 }).collect();
                    f(&eps)
                })
                .collect::<Result<_>>()?;
            let mean = pairwise_sum(&values) / trials as f64;
            let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            let var = if trials > 1 { pairwise_sum(&sq) / (trials - 1) as f64 } else { 0.0 };
            Ok(RademacherAverage {
                mean,
                std_error: Some((var / trials as f64).sqrt()),
                method: mode.label(),
                samples: trials,
            })
        }
        AverageMode::Auto { .. } => unreachable!("resolved above"),
    }
}

fn signed_sum(members: &[SeqVector], eps: &[f64]) -> SeqVector {
    members
        .iter()
        .zip(eps)
        .fold(SeqVector::zero(), |acc, (x, e)| acc.add(&x.scale(*e)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VectorFamily {
    pub label: String,
    pub members: Vec<SeqVector>,
    pub space: SpaceDescriptor,
}

impl VectorFamily {
    pub fn new(label: impl Into<String>, members: Vec<SeqVector>, space: SpaceDescriptor) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::param("members", "family must be nonempty"));
        }
        for (k, x) in members.iter().enumerate() {
            if x.dim() > space.support_bound {
                return Err(Error::param(
                    format!("members[{k}]"),
                    format!("index {} beyond support bound {}", x.dim(), space.support_bound),
                ));
            }
        }
        Ok(VectorFamily { label: label.into(), members, space })
    }

    pub fn m(&self) -> usize {
        self.members.len()
    }
}

/// `E‖Σ ε_j x_j‖` in the family's space.
pub fn rademacher_average(family: &VectorFamily, mode: AverageMode) -> Result<RademacherAverage> {
    sign_average(
        family.m(),
        |eps| family.space.norm(&signed_sum(&family.members, eps)),
        mode,
    )
}

/// Named member lists without a space, for building batteries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Family {
    pub label: String,
    pub members: Vec<SeqVector>,
}

/// Coordinate vectors, one repeated vector, disjoint all-ones blocks of length
/// 4 (when they fit in `support`), and `random` Gaussian families on `[1, n]`.
pub fn default_families(m: usize, n: usize, support: usize, random: usize, seed: u64) -> Vec<Family> {
    let mut out = vec![
        Family {
            label: "coordinate".into(),
            members: (1..=m).map(SeqVector::basis).collect(),
        },
        Family {
            label: "repeated".into(),
            members: vec![SeqVector::basis(1); m],
        },
    ];
    if 4 * m <= support {
        out.push(Family {
            label: "blocks".into(),
            members: (0..m).map(|j| SeqVector::indicator(4 * j + 1, 4 * j + 4)).collect(),
        });
    }
    for r in 0..random {
        let mut rng = rng::stream(seed, r as u64);
        let members = (0..m)
            .map(|_| {
                let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                SeqVector::from_dense(&v)
            })
            .collect();
        out.push(Family { label: format!("gaussian-{r}"), members });
    }
    out
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::param("p", format!("type exponent must lie in (1, 2], got {p}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeEstimate {
    pub m: usize,
    pub p: f64,
    /// Best ratio `E‖Σ ε_j x_j‖ / (Σ ‖x_j‖^p)^{1/p}` over the tested families.
    pub lower_bound: f64,
    pub witness: VectorFamily,
    pub method: &'static str,
}

/// Lower estimate of `a_{m,p}(space)`; families must all have `m` members.
pub fn type_constant_lower(
    space: &SpaceDescriptor,
    m: usize,
    p: f64,
    families: &[Family],
    mode: AverageMode,
) -> Result<TypeEstimate> {
    check_p(p)?;
    if families.is_empty() {
        return Err(Error::param("families", "at least one family is needed"));
    }
    let mut best: Option<TypeEstimate> = None;
    for fam in families {
        if fam.members.len() != m {
            return Err(Error::param(
                "families",
                format!("family '{}' has {} members, expected {m}", fam.label, fam.members.len()),
            ));
        }
        let vf = VectorFamily::new(fam.label.clone(), fam.members.clone(), space.clone())?;
        let norms: Vec<f64> = vf.members.iter().map(|x| space.norm(x)).collect::<Result<_>>()?;
        let den = lq(norms.iter().copied(), p);
        if den == 0.0 {
            continue;
        }
        let avg = rademacher_average(&vf, mode)?;
        let ratio = avg.mean / den;
        if best.as_ref().is_none_or(|b| ratio > b.lower_bound) {
            best = Some(TypeEstimate { m, p, lower_bound: ratio, witness: vf, method: avg.method });
        }
    }
    best.ok_or_else(|| Error::param("families", "every family is zero"))
}

/// One row of a random-sum check, shaped for JSON/CSV output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandSumRecord {
    pub check: &'static str,
    pub m: usize,
    pub p: f64,
    pub theta: f64,
    pub q: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub c_emp: f64,
    pub mode: String,
    pub seed: u64,
    pub note: &'static str,
}

/// Battery sizes for the endpoint and interpolation estimates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatteryOptions {
    /// Ambient dimension of random families.
    pub n: usize,
    pub random_families: usize,
    pub seed: u64,
    pub mode: AverageMode,
}

impl Default for BatteryOptions {
    fn default() -> Self {
        BatteryOptions {
            n: 8,
            random_families: 8,
            seed: 0x5EED,
            mode: AverageMode::Auto { trials: 20_000, seed: 0x5EED },
        }
    }
}

/// The real method with `ℓq` on both sides gives `ℓ2` in the middle for
/// `(ℓ2, ℓ2)` at any `θ` and for `(B, B*)` at `θ = 1/2`.
fn check_l2_intermediate(couple: &(SpaceDescriptor, SpaceDescriptor), theta: f64) -> Result<()> {
    check_theta(theta)?;
    let is_l2 = |s: &SpaceDescriptor| matches!(s.kind, SpaceKind::Lp(p) if p == 2.0);
    if is_l2(&couple.0) && is_l2(&couple.1) {
        return Ok(());
    }
    if theta == 0.5 && couple.1.kind == couple.0.dual().kind {
        return Ok(());
    }
    Err(Error::param(
        "couple",
        format!("({}, {}) at theta = {theta} is not an l2-intermediate couple", couple.0, couple.1),
    ))
}

fn check_pq(p: f64, q: f64) -> Result<()> {
    check_p(p)?;
    if !(q >= p && q.is_finite()) {
        return Err(Error::param("q", format!("need p <= q < inf, got q = {q}")));
    }
    Ok(())
}

fn endpoint_estimates(
    couple: &(SpaceDescriptor, SpaceDescriptor),
    m: usize,
    p: f64,
    opts: &BatteryOptions,
) -> Result<(f64, f64)> {
    let est = |s: &SpaceDescriptor| -> Result<f64> {
        let fams = default_families(m, opts.n, s.support_bound, opts.random_families, opts.seed);
        Ok(type_constant_lower(s, m, p, &fams, opts.mode)?.lower_bound)
    };
    Ok((est(&couple.0)?, est(&couple.1)?))
}

fn mode_label(opts: &BatteryOptions, m: usize) -> Result<String> {
    Ok(opts.mode.resolve(m)?.label().to_string())
}

/// `a_{m,p}(ℓ2)` estimate against `a_0^{1−θ} a_1^θ`.
pub fn interpola_check(
    couple: &(SpaceDescriptor, SpaceDescriptor),
    q: f64,
    theta: f64,
    m: usize,
    p: f64,
    opts: &BatteryOptions,
) -> Result<RandSumRecord> {
    check_l2_intermediate(couple, theta)?;
    check_pq(p, q)?;
    let l2 = SpaceDescriptor::l2();
    let fams = default_families(m, opts.n, l2.support_bound, opts.random_families, opts.seed);
    let lhs = type_constant_lower(&l2, m, p, &fams, opts.mode)?.lower_bound;
    let (a0, a1) = endpoint_estimates(couple, m, p, opts)?;
    let rhs = a0.powf(1.0 - theta) * a1.powf(theta);
    Ok(RandSumRecord {
        check: "interpola",
        m,
        p,
        theta,
        q,
        lhs,
        rhs,
        c_emp: lhs / rhs,
        mode: mode_label(opts, m)?,
        seed: opts.seed,
        note: ONE_SIDED_NOTE,
    })
}

/// Coefficient of the linear term in the random-sum defect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearTerm {
    /// `e^{−1} log(a_0/a_1)`.
    Log,
    /// `e^{−1}(⌊log a_0⌋ − ⌊log a_1⌋)`.
    Floor,
}

impl LinearTerm {
    pub fn coefficient(self, a0: f64, a1: f64) -> f64 {
        let e = (-1.0f64).exp();
        match self {
            LinearTerm::Log => e * (a0 / a1).ln(),
            LinearTerm::Floor => e * (a0.ln().floor() - a1.ln().floor()),
        }
    }
}

/// `E‖Ω(Σ ε_j b_j) − Σ ε_j Ω(b_j) − c Σ ε_j b_j‖₂` for one family.
pub fn random_sum_defect(
    omega: &DerivationMap,
    family: &[SeqVector],
    coefficient: f64,
    mode: AverageMode,
) -> Result<RademacherAverage> {
    let images: Vec<SeqVector> = family.iter().map(|b| omega.apply(b)).collect::<Result<_>>()?;
    sign_average(
        family.len(),
        |eps| {
            let s = signed_sum(family, eps);
            let lin = signed_sum(&images, eps);
            Ok(omega.apply(&s)?.sub(&lin).sub(&s.scale(coefficient)).l2_norm())
        },
        mode,
    )
}

/// Largest `C_emp = LHS / (a_0^{1−θ} a_1^θ (Σ ‖b_j‖₂^p)^{1/p})` over the
/// coordinate and Gaussian families of size `m`.
#[allow(clippy::too_many_arguments)]
pub fn randoma_defect(
    omega: &DerivationMap,
    couple: &(SpaceDescriptor, SpaceDescriptor),
    q: f64,
    theta: f64,
    p: f64,
    m: usize,
    linear: LinearTerm,
    opts: &BatteryOptions,
) -> Result<RandSumRecord> {
    check_l2_intermediate(couple, theta)?;
    check_pq(p, q)?;
    omega.validate()?;
    let (a0, a1) = endpoint_estimates(couple, m, p, opts)?;
    let coefficient = linear.coefficient(a0, a1);
    let scale = a0.powf(1.0 - theta) * a1.powf(theta);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    let fams = default_families(m, opts.n, usize::MAX, opts.random_families, opts.seed);
    for fam in fams.iter().filter(|f| f.label != "repeated" && f.label != "blocks") {
        let lhs = random_sum_defect(omega, &fam.members, coefficient, opts.mode)?.mean;
        let rhs = scale * lq(fam.members.iter().map(|b| b.l2_norm()), p);
        if lhs / rhs > best.0 {
            best = (lhs / rhs, lhs, rhs);
        }
    }
    Ok(RandSumRecord {
        check: "randoma",
        m,
        p,
        theta,
        q,
        lhs: best.1,
        rhs: best.2,
        c_emp: best.0,
        mode: format!("{}/{}", mode_label(opts, m)?, serde_json::to_value(linear).unwrap().as_str().unwrap()),
        seed: opts.seed,
        note: ONE_SIDED_NOTE,
    })
}

/// `E‖Σ ε_j v_j‖` in the derived quasi-norm.
pub fn derived_rademacher_average(family: &[DerivedVector], mode: AverageMode) -> Result<RademacherAverage> {
    sign_average(
        family.len(),
        |eps| {
            let mut acc = family[0].scale(eps[0]);
            for (v, e) in family.iter().zip(eps).skip(1) {
                acc = acc.add(&v.scale(*e));
            }
            acc.quasinorm()
        },
        mode,
    )
}

fn derived_families(omega: &DerivationMap, m: usize, opts: &BatteryOptions) -> Result<Vec<Vec<DerivedVector>>> {
    let pair = |x: SeqVector, y: SeqVector| DerivedVector::new(x, y, omega.clone());
    let mut out = vec![
        (1..=m).map(|j| pair(SeqVector::zero(), SeqVector::basis(j))).collect(),
        (1..=m).map(|j| pair(SeqVector::basis(j), SeqVector::zero())).collect(),
    ];
    for r in 0..opts.random_families {
        let mut rng = rng::stream(opts.seed ^ 0xD0_D0, r as u64);
        let mut lifted = Vec::with_capacity(m);
        let mut loose = Vec::with_capacity(m);
        for _ in 0..m {
            let y: Vec<f64> = (0..opts.n).map(|_| rng.sample(StandardNormal)).collect();
            let g: Vec<f64> = (0..opts.n).map(|_| rng.sample(StandardNormal)).collect();
            let y = SeqVector::from_dense(&y);
            lifted.push(pair(omega.apply(&y)?, y.clone()));
            loose.push(pair(SeqVector::from_dense(&g), y));
        }
        out.push(lifted);
        out.push(loose);
    }
    Ok(out)
}

/// Derived-space type ratio against
/// `a_{m,p}(ℓ2)(a_0^{1−θ} a_1^θ + |log(a_0/a_1)|)`.
pub fn average_bound_check(
    omega: &DerivationMap,
    couple: &(SpaceDescriptor, SpaceDescriptor),
    q: f64,
    theta: f64,
    p: f64,
    m: usize,
    opts: &BatteryOptions,
) -> Result<RandSumRecord> {
    check_l2_intermediate(couple, theta)?;
    check_pq(p, q)?;
    omega.validate()?;
    let mut lhs = f64::NEG_INFINITY;
    for fam in derived_families(omega, m, opts)? {
        let norms: Vec<f64> = fam.iter().map(|v| v.quasinorm()).collect::<Result<_>>()?;
        let den = lq(norms.iter().copied(), p);
        if den > 0.0 {
            lhs = lhs.max(derived_rademacher_average(&fam, opts.mode)?.mean / den);
        }
    }
    let l2 = SpaceDescriptor::l2();
    let fams = default_families(m, opts.n, l2.support_bound, opts.random_families, opts.seed);
    let a_mid = type_constant_lower(&l2, m, p, &fams, opts.mode)?.lower_bound;
    let (a0, a1) = endpoint_estimates(couple, m, p, opts)?;
    let rhs = a_mid * (a0.powf(1.0 - theta) * a1.powf(theta) + (a0 / a1).ln().abs());
    Ok(RandSumRecord {
        check: "average",
        m,
        p,
        theta,
        q,
        lhs,
        rhs,
        c_emp: lhs / rhs,
        mode: mode_label(opts, m)?,
        seed: opts.seed,
        note: ONE_SIDED_NOTE,
    })
}
