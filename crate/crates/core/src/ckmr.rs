//! Integer-indexed J-sequences, the J-norm over an `ℓq` pseudolattice pair,
//! the evaluation map `δθ`, its derivative `δ'θ`, and bounded selectors.
//!
//! A slot stores `e^{log_weight} · vector` rather than the product, so that
//! telescoping weights such as `e^{θN} · e^{−Nθ}` cancel in the exponent and
//! selector round trips stay exact.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::seqspace::{lq, SeqVector, SpaceDescriptor};

#[derive(Clone, Debug, PartialEq)]
pub struct Slot {
    pub log_weight: f64,
    pub vector: SeqVector,
}

impl Slot {
    pub fn value(&self) -> SeqVector {
        if self.log_weight == 0.0 {
            self.vector.clone()
        } else {
            self.vector.scale(self.log_weight.exp())
        }
    }
}

/// Finitely supported `{b_n}_{n ∈ Z}` with its couple and pseudolattice exponents.
#[derive(Clone, Debug, PartialEq)]
pub struct JSequence {
    slots: BTreeMap<i64, Slot>,
    pub couple: (SpaceDescriptor, SpaceDescriptor),
    pub q: (f64, f64),
    pub theta: f64,
}

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::param("theta", format!("must lie in (0,1), got {theta}")));
    }
    Ok(())
}

impl JSequence {
    pub fn new(couple: (SpaceDescriptor, SpaceDescriptor), q: (f64, f64), theta: f64) -> Result<Self> {
        for (name, v) in [("q0", q.0), ("q1", q.1)] {
            if !(v.is_finite() && v >= 1.0) {
                return Err(Error::param(name, format!("requires 1 <= q < infinity, got {v}")));
            }
        }
        check_theta(theta)?;
        Ok(JSequence {
            slots: BTreeMap::new(),
            couple,
            q,
            theta,
        })
    }

    /// Adds `vector` into slot `n`.
    pub fn insert(&mut self, n: i64, vector: SeqVector) -> Result<()> {
        self.insert_weighted(n, 0.0, vector)
    }

    /// Adds `e^{log_weight} · vector` into slot `n`.
    pub fn insert_weighted(&mut self, n: i64, log_weight: f64, vector: SeqVector) -> Result<()> {
        let bound = self.couple.0.support_bound.min(self.couple.1.support_bound);
        if vector.dim() > bound {
            return Err(Error::param(
                "slot",
                format!("index {} exceeds the common support bound {bound}", vector.dim()),
            ));
        }
        if vector.is_zero() {
            return Ok(());
        }
        match self.slots.get_mut(&n) {
            None => {
                self.slots.insert(n, Slot { log_weight, vector });
            }
            Some(slot) if slot.log_weight == log_weight => {
                slot.vector = slot.vector.add(&vector);
            }
            Some(slot) => {
                let merged = slot.value().add(&vector.scale(log_weight.exp()));
                *slot = Slot {
                    log_weight: 0.0,
                    vector: merged,
                };
            }
        }
        if self.slots.get(&n).is_some_and(|s| s.vector.is_zero()) {
            self.slots.remove(&n);
        }
        Ok(())
    }

    pub fn slots(&self) -> impl Iterator<Item = (i64, &Slot)> {
        self.slots.iter().map(|(n, s)| (*n, s))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Every slot moved from `n` to `n + k`.
    pub fn shifted(&self, k: i64) -> JSequence {
        JSequence {
            slots: self.slots.iter().map(|(n, s)| (n + k, s.clone())).collect(),
            ..self.clone()
        }
    }

    /// Pseudolattice norm `(Σ_n ‖e^{jn} b_n‖_{B_j}^{q_j})^{1/q_j}` for branch `j`.
    pub fn branch(&self, j: usize) -> Result<f64> {
        let (space, q) = match j {
            0 => (&self.couple.0, self.q.0),
            1 => (&self.couple.1, self.q.1),
            _ => return Err(Error::param("branch", "must be 0 or 1")),
        };
        let mut terms = Vec::with_capacity(self.slots.len());
        for (&n, slot) in &self.slots {
            let shift = if j == 1 { n as f64 } else { 0.0 };
            terms.push((shift + slot.log_weight).exp() * space.norm(&slot.vector)?);
        }
        Ok(lq(terms.into_iter(), q))
    }

    /// Unweighted pseudolattice norm `(Σ_n ‖b_n‖_{B_j}^{q_j})^{1/q_j}`.
    pub fn pseudolattice_norm(&self, j: usize) -> Result<f64> {
        let (space, q) = if j == 0 {
            (&self.couple.0, self.q.0)
        } else {
            (&self.couple.1, self.q.1)
        };
        let mut terms = Vec::with_capacity(self.slots.len());
        for slot in self.slots.values() {
            terms.push(slot.log_weight.exp() * space.norm(&slot.vector)?);
        }
        Ok(lq(terms.into_iter(), q))
    }

    /// `max_j ‖{e^{jn} b_n}‖_{ℓ_{q_j}(B_j)}`.
    pub fn j_norm(&self) -> Result<f64> {
        Ok(self.branch(0)?.max(self.branch(1)?))
    }

    /// `δθ = Σ_n e^{θn} b_n`.
    pub fn delta(&self, theta: f64) -> SeqVector {
        self.weighted_sum(|n, lw| (theta * n as f64 + lw).exp())
    }

    /// `δ'θ = Σ_n n e^{θ(n−1)} b_n`.
    pub fn delta_prime(&self, theta: f64) -> SeqVector {
        self.weighted_sum(|n, lw| n as f64 * (theta * (n - 1) as f64 + lw).exp())
    }

    fn weighted_sum(&self, coef: impl Fn(i64, f64) -> f64) -> SeqVector {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (&n, slot) in &self.slots {
            let c = coef(n, slot.log_weight);
            for (i, x) in slot.vector.iter() {
                *acc.entry(i).or_insert(0.0) += c * x;
            }
        }
        SeqVector::from_pairs(acc).expect("finite sums of finite entries")
    }
}

#[derive(Serialize, Deserialize)]
struct JSequenceJson {
    theta: f64,
    couple: (SpaceDescriptor, SpaceDescriptor),
    q: (f64, f64),
    slots: Vec<SlotJson>,
}

#[derive(Serialize, Deserialize)]
struct SlotJson {
    n: i64,
    vector: SeqVector,
}

impl Serialize for JSequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        JSequenceJson {
            theta: self.theta,
            couple: self.couple.clone(),
            q: self.q,
            slots: self
                .slots
                .iter()
                .map(|(&n, slot)| SlotJson {
                    n,
                    vector: slot.value(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for JSequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = JSequenceJson::deserialize(d)?;
        let mut seq = JSequence::new(raw.couple, raw.q, raw.theta).map_err(D::Error::custom)?;
        for slot in raw.slots {
            if seq.slots.contains_key(&slot.n) {
                return Err(D::Error::custom(format!("duplicate slot n = {}", slot.n)));
            }
            seq.insert(slot.n, slot.vector).map_err(D::Error::custom)?;
        }
        Ok(seq)
    }
}

/// A selector's output together with its bound relative to the target norm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectorReport {
    pub jseq: JSequence,
    /// `‖jseq‖_J / ‖target‖` in the interpolation space.
    pub bound_ratio: f64,
    pub target: SeqVector,
    pub theta: f64,
    /// The exponents coincide, so every coefficient lands in slot 0.
    pub degenerate: bool,
    /// Parameters outside the range covered by the closed forms.
    pub experimental: bool,
}

/// One-slot selector `b_N = e^{−Nθ} a` at `N = sign · 2 · log_kappa_floor`.
///
/// `bound_ratio` is measured against `‖a‖₂`. For solver-backed dual spaces the
/// J-norm uses the upper end of the dual interval, so the ratio is an upper
/// estimate.
pub fn single_slot_selector(
    a: &SeqVector,
    log_kappa_floor: i64,
    sign: i8,
    theta: f64,
    couple: (SpaceDescriptor, SpaceDescriptor),
    q: (f64, f64),
) -> Result<SelectorReport> {
    if a.is_zero() {
        return Err(Error::param("a", "selector target must be nonzero"));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::param("sign", "must be +1 or -1"));
    }
    let n = sign as i64 * 2 * log_kappa_floor;
    let mut jseq = JSequence::new(couple, q, theta)?;
    jseq.insert_weighted(n, -(n as f64) * theta, a.clone())?;
    let bound_ratio = jseq.j_norm()? / a.l2_norm();
    Ok(SelectorReport {
        jseq,
        bound_ratio,
        target: a.clone(),
        theta,
        degenerate: false,
        experimental: theta != 0.5,
    })
}

/// `(p, λ)` with `1/p = (1−θ)/p0 + θ/p1` and `λ = p/p0 − p/p1`.
pub fn lp_interpolation_exponents(p0: f64, p1: f64, theta: f64) -> Result<(f64, f64)> {
    for (name, p) in [("p0", p0), ("p1", p1)] {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::param(name, format!("requires 1 <= p < infinity, got {p}")));
        }
    }
    check_theta(theta)?;
    let p = 1.0 / ((1.0 - theta) / p0 + theta / p1);
    Ok((p, p / p0 - p / p1))
}

/// Discrete Lions–Peetre selector for the couple `(ℓ_{p0}, ℓ_{p1})`.
///
/// Coordinate `m` goes to slot `n = −⌊λ log(|a_m|/‖a‖_p)⌋` with value
/// `e^{−nθ} a_m`; zero coefficients contribute nothing. `bound_ratio` is
/// measured against `‖a‖_p`.
pub fn lions_peetre_selector(a: &SeqVector, p0: f64, p1: f64, theta: f64) -> Result<SelectorReport> {
    let (p, lambda) = lp_interpolation_exponents(p0, p1, theta)?;
    if a.is_zero() {
        return Err(Error::param("a", "selector target must be nonzero"));
    }
    let couple = (SpaceDescriptor::lp(p0)?, SpaceDescriptor::lp(p1)?);
    let mut jseq = JSequence::new(couple, (p0, p1), theta)?;
    let norm = lq(a.entries().iter().map(|e| e.1), p);
    let mut groups: BTreeMap<i64, Vec<(usize, f64)>> = BTreeMap::new();
    for (m, am) in a.iter() {
        let n = -(lambda * (am.abs() / norm).ln()).floor() as i64;
        groups.entry(n).or_default().push((m, am));
    }
    for (n, entries) in groups {
        jseq.insert_weighted(n, -(n as f64) * theta, SeqVector::from_pairs(entries)?)?;
    }
    let bound_ratio = jseq.j_norm()? / norm;
    Ok(SelectorReport {
        jseq,
        bound_ratio,
        target: a.clone(),
        theta,
        degenerate: p0 == p1,
        experimental: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingleSlotReport {
    pub trials: usize,
    /// Largest deviation of a branch value from the single slot's norm.
    pub max_deviation: f64,
}

/// Checks that the pseudolattice norms of one-slot sequences equal the norm of
/// the slot, and that the J-norm branches equal `‖b‖_{B0}` and `e^{n}‖b‖_{B1}`.
pub fn check_single_slot_property(
    couple: (SpaceDescriptor, SpaceDescriptor),
    q0: f64,
    q1: f64,
    seed: u64,
) -> Result<SingleSlotReport> {
    const TRIALS: usize = 100;
    let mut rng = rng::stream(seed, 0x51_0715);
    let dim = couple.0.support_bound.min(couple.1.support_bound).min(8);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let n0: i64 = rng.gen_range(-5..=5);
        let v: Vec<f64> = (0..dim)
            .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-2.0..2.0) })
            .collect();
        let b = SeqVector::from_dense(&v);
        if b.is_zero() {
            continue;
        }
        let mut s = JSequence::new(couple.clone(), (q0, q1), 0.5)?;
        s.insert(n0, b.clone())?;
        let nb0 = couple.0.norm(&b)?;
        let nb1 = couple.1.norm(&b)?;
        let devs = [
            (s.pseudolattice_norm(0)? - nb0).abs(),
            (s.pseudolattice_norm(1)? - nb1).abs(),
            (s.branch(0)? - nb0).abs(),
            (s.branch(1)? - (n0 as f64).exp() * nb1).abs(),
        ];
        worst = devs.iter().fold(worst, |m, d| m.max(*d));
    }
    Ok(SingleSlotReport {
        trials: TRIALS,
        max_deviation: worst,
    })
}
