//! The derived space `dB = {(x, y)}` with quasi-norm `‖x − Ω(y)‖₂ + ‖y‖₂`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::DerivationMap;
use crate::error::{Error, Result};
use crate::rng;
use crate::seqspace::SeqVector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedVector {
    pub x: SeqVector,
    pub y: SeqVector,
    pub omega: DerivationMap,
}

impl DerivedVector {
    pub fn new(x: SeqVector, y: SeqVector, omega: DerivationMap) -> Self {
        DerivedVector { x, y, omega }
    }

    pub fn add(&self, other: &DerivedVector) -> DerivedVector {
        DerivedVector::new(self.x.add(&other.x), self.y.add(&other.y), self.omega.clone())
    }

    pub fn scale(&self, t: f64) -> DerivedVector {
        DerivedVector::new(self.x.scale(t), self.y.scale(t), self.omega.clone())
    }

    pub fn quasinorm(&self) -> Result<f64> {
        derived_quasinorm(self)
    }
}

pub fn derived_quasinorm(v: &DerivedVector) -> Result<f64> {
    let oy = v.omega.apply(&v.y)?;
    Ok(v.x.sub(&oy).l2_norm() + v.y.l2_norm())
}

/// `j(x) = (x, 0)`.
pub fn inclusion(x: &SeqVector, omega: &DerivationMap) -> DerivedVector {
    DerivedVector::new(x.clone(), SeqVector::zero(), omega.clone())
}

/// `q(x, y) = y`.
pub fn quotient(v: &DerivedVector) -> SeqVector {
    v.y.clone()
}

/// `v_{2j−1} = (e_j, 0)`, `v_{2j} = (0, e_j)`.
pub fn basis_vector(k: usize, omega: &DerivationMap) -> Result<DerivedVector> {
    if k == 0 {
        return Err(Error::param("k", "basis indices start at 1"));
    }
    let j = k.div_ceil(2);
    let e = SeqVector::basis(j);
    Ok(if k % 2 == 1 {
        DerivedVector::new(e, SeqVector::zero(), omega.clone())
    } else {
        DerivedVector::new(SeqVector::zero(), e, omega.clone())
    })
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Random `y` on `[1, n]` with a random support, and `x = Ω(y) + η g` for a
/// Gaussian `g` and `η ∈ [0, 1)`, so that near-cancelling pairs are sampled.
fn random_derived(rng: &mut impl Rng, omega: &DerivationMap, n: usize) -> Result<DerivedVector> {
    let mut y = gaussian(rng, n);
    for v in y.iter_mut() {
        if rng.gen_bool(0.5) {
            *v = 0.0;
        }
    }
    let y = SeqVector::from_dense(&y);
    let eta: f64 = rng.gen_range(0.0..1.0);
    let g = SeqVector::from_dense(&gaussian(rng, n)).scale(eta);
    let x = omega.apply(&y)?.add(&g);
    Ok(DerivedVector::new(x, y, omega.clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasiTriangleReport {
    pub map: String,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Largest observed `‖u + v‖ / (‖u‖ + ‖v‖)`.
    pub constant: f64,
}

/// Empirical quasi-triangle constant of the derived quasi-norm on `[1, n]`.
/// Trial `t` draws from its own stream, so the result ignores thread count.
pub fn quasi_triangle_constant(
    omega: &DerivationMap,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<QuasiTriangleReport> {
    quasi_triangle_scaled(omega, n, trials, seed, 1.0)
}

/// As [`quasi_triangle_constant`] with every pair scaled by `t`.
pub fn quasi_triangle_scaled(
    omega: &DerivationMap,
    n: usize,
    trials: usize,
    seed: u64,
    t: f64,
) -> Result<QuasiTriangleReport> {
    if n == 0 || trials == 0 {
        return Err(Error::param("n, trials", "must be positive"));
    }
    if !(t.is_finite() && t != 0.0) {
        return Err(Error::param("t", "scale must be finite and nonzero"));
    }
    omega.validate()?;
    let pairs: Vec<(f64, Vec<f64>)> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k as u64);
            let u = random_derived(&mut rng, omega, n)?.scale(t);
            let v = random_derived(&mut rng, omega, n)?.scale(t);
            let z = [u.x, u.y, v.x, v.y].iter().flat_map(|w| w.to_dense(n)).collect::<Vec<_>>();
            Ok((triangle_ratio(omega, &z, n)?, z))
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..trials).collect();
    order.sort_by(|a, b| pairs[*b].0.total_cmp(&pairs[*a].0).then(a.cmp(b)));
    let polished: Vec<f64> = order[..POLISH_TOP.min(trials)]
        .par_iter()
        .map(|&k| polish_pair(omega, &pairs[k].1, pairs[k].0, n, rng::derive(seed, (trials + k) as u64)))
        .collect::<Result<_>>()?;
    Ok(QuasiTriangleReport {
        map: omega.name().to_string(),
        n,
        trials,
        seed,
        constant: polished.into_iter().fold(pairs[order[0]].0, f64::max),
    })
}

/// Random pairs kept for local improvement, and steps per pair.
const POLISH_TOP: usize = 8;
const POLISH_STEPS: usize = 4000;

/// `‖u + v‖ / (‖u‖ + ‖v‖)` for `z = (x_u, y_u, x_v, y_v)` packed densely.
fn triangle_ratio(omega: &DerivationMap, z: &[f64], n: usize) -> Result<f64> {
    let part = |k: usize| SeqVector::from_dense(&z[k * n..(k + 1) * n]);
    let u = DerivedVector::new(part(0), part(1), omega.clone());
    let v = DerivedVector::new(part(2), part(3), omega.clone());
    let den = u.quasinorm()? + v.quasinorm()?;
    Ok(if den == 0.0 { 1.0 } else { u.add(&v).quasinorm()? / den })
}

/// Random-direction hill climb with steps relative to `‖z‖`, halving after
/// repeated misses. Relative steps keep the result scale invariant.
fn polish_pair(omega: &DerivationMap, z: &[f64], value: f64, n: usize, seed: u64) -> Result<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (mut z, mut best) = (z.to_vec(), value);
    let mut step = 0.25;
    let mut misses = 0;
    for _ in 0..POLISH_STEPS {
        let scale = step * crate::seqspace::lq(z.iter().copied(), 2.0);
        let trial: Vec<f64> = z.iter().map(|c| c + scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let r = triangle_ratio(omega, &trial, n)?;
        if r > best {
            (z, best, misses) = (trial, r, 0);
        } else {
            misses += 1;
            if misses == 20 {
                (step, misses) = (step * 0.5, 0);
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnconditionalityReport {
    pub map: String,
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Largest observed `‖Σ ε_j c_j v_{2j}‖ / ‖Σ c_j v_{2j}‖`.
    pub constant: f64,
    /// Every catalog map commutes with sign changes, which forces the
    /// constant to be exactly 1.
    pub sign_equivariant: bool,
}

/// Unconditionality of the even basis vectors `v_{2j} = (0, e_j)`, `j ≤ n`.
pub fn unconditionality_estimate(
    omega: &DerivationMap,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<UnconditionalityReport> {
    if n == 0 || trials == 0 {
        return Err(Error::param("n, trials", "must be positive"));
    }
    omega.validate()?;
    let ratios: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::stream(seed, k as u64);
            let c = SeqVector::from_dense(&gaussian(&mut rng, n));
            let eps: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { -1.0 } else { 1.0 }).collect();
            let base = DerivedVector::new(SeqVector::zero(), c.clone(), omega.clone());
            let signed = DerivedVector::new(
                SeqVector::zero(),
                c.hadamard(&SeqVector::from_dense(&eps)),
                omega.clone(),
            );
            let den = base.quasinorm()?;
            Ok(if den == 0.0 { 1.0 } else { signed.quasinorm()? / den })
        })
        .collect::<Result<_>>()?;
    Ok(UnconditionalityReport {
        map: omega.name().to_string(),
        n,
        trials,
        seed,
        constant: ratios.into_iter().fold(0.0, f64::max),
        sign_equivariant: true,
    })
}
