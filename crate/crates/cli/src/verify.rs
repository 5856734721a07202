//! Verification suites: fast invariant checks over every module, one line per
//! check.

use anyhow::Result;
use derivlab::catalog::{self, DerivationMap};
use derivlab::ckmr;
use derivlab::extremal::{interval, RatioOptions};
use derivlab::randsums::{self, AverageMode, BatteryOptions, LinearTerm, VectorFamily};
use derivlab::seqspace::{norming_functionals, tsirelson_norm, NormingCaps};
use derivlab::twisted::{self, DerivedVector};
use derivlab::{SeqVector, SpaceDescriptor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

pub const SUITES: [&str; 7] = [
    "norms",
    "duality",
    "selectors",
    "closed-forms",
    "centralizer",
    "twisted",
    "randsums",
];

#[derive(Clone, Debug, serde::Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

struct Suite<'a> {
    name: &'static str,
    cfg: &'a RunConfig,
    out: Vec<Check>,
}

impl Suite<'_> {
    fn record(&mut self, name: &'static str, pass: bool, detail: impl Into<String>) {
        self.out.push(Check { suite: self.name, name, pass, detail: detail.into() });
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        derivlab::rng::stream(self.cfg.seed, stream)
    }

    fn space(&self, s: &str) -> Result<SpaceDescriptor> {
        self.cfg.space(s)
    }
}

fn random_dense(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-2.0..2.0) })
        .collect()
}

fn sample_count(cfg: &RunConfig) -> usize {
    cfg.trials.min(200)
}

pub fn run(suite: &str, cfg: &RunConfig) -> Result<Vec<Check>> {
    if suite == "all" {
        let mut out = Vec::new();
        for s in SUITES {
            out.extend(run(s, cfg)?);
        }
        return Ok(out);
    }
    let name = SUITES
        .into_iter()
        .find(|s| *s == suite)
        .ok_or_else(|| anyhow::anyhow!("unknown suite '{suite}'; expected one of {} or all", SUITES.join(", ")))?;
    let mut s = Suite { name, cfg, out: Vec::new() };
    match name {
        "norms" => norms(&mut s)?,
        "duality" => duality(&mut s)?,
        "selectors" => selectors(&mut s)?,
        "closed-forms" => closed_forms(&mut s)?,
        "centralizer" => centralizer(&mut s)?,
        "twisted" => twisted_suite(&mut s)?,
        _ => rand_sums(&mut s)?,
    }
    Ok(s.out)
}

fn norms(s: &mut Suite) -> Result<()> {
    let mut rng = s.rng(1);
    let mut worst = 0.0f64;
    for n in 2..=6 {
        let set = norming_functionals(n, NormingCaps::default())?;
        for _ in 0..sample_count(s.cfg) {
            let x = random_dense(&mut rng, n);
            worst = worst.max((set.induced_norm(&x) - tsirelson_norm(&x)).abs());
        }
    }
    s.record("tsirelson-norming-set", worst <= 1e-12, format!("max deviation {worst:e}"));

    let t = s.space("T")?;
    let e23 = t.norm(&SeqVector::from_dense(&[0.0, 1.0, 1.0]))?;
    let e34 = t.norm(&SeqVector::from_dense(&[0.0, 0.0, 1.0, 1.0]))?;
    s.record("tsirelson-examples", e23 == 1.0 && e34 == 1.0, format!("|e2+e3| = {e23}, |e3+e4| = {e34}"));

    let mut worst = 0.0f64;
    for name in ["l1", "l2", "lp:3", "c0", "T", "T2"] {
        let sp = s.space(name)?;
        for _ in 0..sample_count(s.cfg) {
            let x = SeqVector::from_dense(&random_dense(&mut rng, 12));
            let nx = sp.norm(&x)?;
            worst = worst
                .max((sp.norm(&x.abs())? - nx).abs())
                .max((sp.norm(&x.scale(-3.0))? - 3.0 * nx).abs() / 3.0);
        }
    }
    s.record("unconditional-homogeneous", worst <= 1e-12, format!("max deviation {worst:e}"));

    let (t2, l2) = (s.space("T2")?, s.space("l2")?);
    let mut ok = true;
    for _ in 0..sample_count(s.cfg) {
        let x = SeqVector::from_dense(&random_dense(&mut rng, 12));
        ok &= t2.norm(&x)? <= l2.norm(&x)? * (1.0 + 1e-15);
    }
    s.record("t2-below-l2", ok, "");
    Ok(())
}

fn duality(s: &mut Suite) -> Result<()> {
    let mut rng = s.rng(2);
    let tol = s.cfg.dual_tolerance;
    let (mut sandwich, mut certified, mut attained) = (true, true, true);
    for name in ["l1", "lp:3", "c0", "T", "T2"] {
        let sp = s.space(name)?;
        for _ in 0..sample_count(s.cfg).min(40) {
            let x = SeqVector::from_dense(&random_dense(&mut rng, 8));
            let y = SeqVector::from_dense(&random_dense(&mut rng, 8));
            if y.is_zero() {
                continue;
            }
            let d = sp.dual_norm(&y)?;
            certified &= d.certified;
            sandwich &= x.dot(&y) <= sp.norm(&x)? * d.upper + tol;
            let m = SeqVector::from_dense(&d.maximizer);
            attained &= sp.norm(&m)? <= 1.0 + tol && m.dot(&y) >= d.lower - tol;
        }
    }
    s.record("pairing-sandwich", sandwich, format!("tolerance {tol:e}"));
    s.record("dual-certified", certified, "");
    s.record("maximizer-feasible", attained, "");
    let d = s.space("T")?.dual_norm(&SeqVector::from_dense(&[0.0, 0.0, 1.0, 1.0]))?;
    s.record(
        "dual-tsirelson-example",
        (d.lower - 2.0).abs() <= tol && (d.upper - 2.0).abs() <= tol,
        format!("dual norm of e3+e4 in [{}, {}]", d.lower, d.upper),
    );
    Ok(())
}

fn selectors(s: &mut Suite) -> Result<()> {
    let mut worst = 0.0f64;
    for (a, b) in [("c0", "l1"), ("T2", "dual:T2"), ("l2", "l2")] {
        let r = ckmr::check_single_slot_property((s.space(a)?, s.space(b)?), 2.0, 2.0, s.cfg.seed)?;
        worst = worst.max(r.max_deviation);
    }
    s.record("single-slot-property", worst == 0.0, format!("max deviation {worst:e}"));

    let mut rng = s.rng(3);
    let couple = (s.space("c0")?, s.space("l1")?);
    let mut exact = true;
    for _ in 0..sample_count(s.cfg) {
        let a = SeqVector::from_dense(&random_dense(&mut rng, 6));
        if a.is_zero() {
            continue;
        }
        let floor = rng.gen_range(-3i64..=3);
        let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
        let r = ckmr::single_slot_selector(&a, floor, sign, 0.5, couple.clone(), (2.0, 2.0))?;
        exact &= r.jseq.delta_prime(0.5) == a.scale((sign as f64 * 2.0 * floor as f64) * (-0.5f64).exp());
    }
    s.record("single-slot-identity", exact, "bitwise");

    let (mut worst_bound, mut worst_form) = (0.0f64, 0.0f64);
    let ps = [1.0, 2.0, 4.0];
    let thetas = [0.25, 0.5, 2.0 / 3.0];
    for _ in 0..sample_count(s.cfg) {
        let a = SeqVector::from_dense(&random_dense(&mut rng, 10));
        if a.is_zero() {
            continue;
        }
        let (p0, p1) = (ps[rng.gen_range(0..3)], ps[rng.gen_range(0..3)]);
        let theta = thetas[rng.gen_range(0..3)];
        let r = ckmr::lions_peetre_selector(&a, p0, p1, theta)?;
        worst_bound = worst_bound.max(r.bound_ratio / theta.max(1.0 - theta).exp());
        let closed = catalog::omega_lions_peetre(&a, p0, p1, theta)?;
        let diff = r.jseq.delta_prime(theta).sub(&closed).linf_norm();
        worst_form = worst_form.max(diff / closed.linf_norm().max(f64::MIN_POSITIVE));
    }
    s.record(
        "lions-peetre-bound",
        worst_bound <= 1.0 + 1e-9,
        format!("max bound_ratio / e^max(theta, 1-theta) = {worst_bound}"),
    );
    s.record("lions-peetre-machinery", worst_form <= 1e-12, format!("max relative error {worst_form:e}"));
    Ok(())
}

fn closed_forms(s: &mut Suite) -> Result<()> {
    let opts = RatioOptions { seed: s.cfg.seed, ..Default::default() };
    let c0 = s.space("c0")?;
    let (mut kappa_err, mut kp_err) = (0.0f64, 0.0f64);
    for n in [1usize, 2, 5, 8, 13, 16] {
        let r = catalog::omega_critical_complex(&c0, &interval(n), &opts, s.cfg.dual_tolerance)?;
        kappa_err = kappa_err.max((r.kappa.value - (n as f64).sqrt()).abs());
        let kp = catalog::omega_kalton_peck(&r.witness)?;
        kp_err = kp_err.max(r.output.sub(&kp).linf_norm());
    }
    s.record("c0-kappa", kappa_err <= 1e-9, format!("max |kappa - sqrt n| {kappa_err:e}"));
    s.record("kalton-peck-at-witness", kp_err <= 1e-12, format!("max error {kp_err:e}"));

    let couple = (c0.clone(), s.space("l1")?);
    let delta = catalog::loglog_delta(8);
    let w = SpaceDescriptor::weighted_l2(delta.clone())?;
    let weighted = (w.clone(), w.dual());
    let mut exact = true;
    for (c, n) in [(&couple, 4usize), (&couple, 9), (&couple, 16), (&weighted, 8)] {
        let r = catalog::omega_critical_real(c, &interval(n), &opts)?;
        exact &= r.primal.exact() && r.dual.exact();
    }
    s.record("critical-real-branches", exact, "closed form equals machinery bitwise");

    let t = catalog::slow_growth_demo(&delta, 8, &opts)?;
    let ok = t.rows.iter().zip(&delta).all(|(r, d)| r.kappa == *d);
    s.record("slow-growth-kappa", ok, "kappa(n) = delta_n");
    Ok(())
}

fn catalog_maps(cfg: &RunConfig) -> Result<Vec<DerivationMap>> {
    Ok(vec![
        DerivationMap::KaltonPeck,
        DerivationMap::LionsPeetre { p0: 1.0, p1: 4.0, theta: 0.5 },
        DerivationMap::RankJ { p0: 1.0, p1: 2.0, theta: 0.5 },
        DerivationMap::CriticalReal { couple: (cfg.space("T2")?, cfg.space("dual:T2")?) },
        DerivationMap::CriticalComplex { couple: (cfg.space("c0")?, cfg.space("l1")?) },
        DerivationMap::WeightedDemo { weights: catalog::loglog_delta(16) },
        DerivationMap::Zero,
    ])
}

fn centralizer(s: &mut Suite) -> Result<()> {
    let mut rng = s.rng(4);
    let mut exact = true;
    for m in catalog_maps(s.cfg)? {
        for n in 1..=6 {
            let b = SeqVector::from_dense(&(0..n).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<_>>());
            for mask in 0u32..(1 << n) {
                let eps: Vec<f64> = (0..n).map(|j| if mask >> j & 1 == 1 { -1.0 } else { 1.0 }).collect();
                exact &= catalog::centralizer_defect(&m, &SeqVector::from_dense(&eps), &b)? == 0.0;
            }
        }
    }
    s.record("sign-exactness", exact, "all sign patterns, n <= 6");

    let stats: Vec<f64> = (0..3)
        .map(|k| {
            catalog::centralizer_defect_stats(&DerivationMap::KaltonPeck, 32, s.cfg.trials, s.cfg.seed + k)
                .map(|d| d.max)
        })
        .collect::<derivlab::Result<_>>()?;
    let mean = stats.iter().sum::<f64>() / 3.0;
    let stable = stats.iter().all(|v| v.is_finite() && (v / mean - 1.0).abs() <= 0.10);
    s.record("defect-stable", stable, format!("max defect per seed {stats:?}"));
    Ok(())
}

fn twisted_suite(s: &mut Suite) -> Result<()> {
    let mut rng = s.rng(5);
    let mut exact = true;
    for m in catalog_maps(s.cfg)? {
        for _ in 0..sample_count(s.cfg).min(50) {
            let x = SeqVector::from_dense(&random_dense(&mut rng, 8));
            let y = SeqVector::from_dense(&random_dense(&mut rng, 8));
            let j = twisted::inclusion(&x, &m);
            exact &= twisted::quotient(&j).is_zero() && j.quasinorm()? == x.l2_norm();
            let v = DerivedVector::new(x, y.clone(), m.clone());
            exact &= y.l2_norm() <= v.quasinorm()?;
        }
    }
    s.record("exactness", exact, "q(j(x)) = 0, |j(x)| = |x|, q contractive");

    let kp = DerivedVector::new(SeqVector::basis(1), SeqVector::basis(2), DerivationMap::KaltonPeck);
    s.record("kalton-peck-example", kp.quasinorm()? == 2.0, "|(e1, e2)| = 2");

    let z = twisted::quasi_triangle_constant(&DerivationMap::Zero, 8, s.cfg.trials, s.cfg.seed)?;
    s.record("zero-map-is-normed", z.constant <= 1.0 + 1e-15, format!("constant {}", z.constant));

    let mut worst = 0.0f64;
    for m in catalog_maps(s.cfg)? {
        let r = twisted::unconditionality_estimate(&m, 12, sample_count(s.cfg), s.cfg.seed)?;
        worst = worst.max((r.constant - 1.0).abs());
    }
    s.record("even-basis-unconditional", worst == 0.0, format!("max |constant - 1| {worst:e}"));
    Ok(())
}

fn rand_sums(s: &mut Suite) -> Result<()> {
    let l2 = s.space("l2")?;
    let mut ok = true;
    for m in 1..=8 {
        let fams = randsums::default_families(m, 8, l2.support_bound, 2, s.cfg.seed);
        ok &= randsums::type_constant_lower(&l2, m, 2.0, &fams, AverageMode::Exact)?.lower_bound == 1.0;
    }
    s.record("l2-type-constant", ok, "a_{m,2}(l2) estimate = 1 for m <= 8");

    let opts = BatteryOptions { seed: s.cfg.seed, random_families: 2, ..Default::default() };
    let trivial = (l2.clone(), l2.clone());
    let mut zero = true;
    for m in 1..=6 {
        let r = randsums::randoma_defect(&DerivationMap::Zero, &trivial, 2.0, 0.5, 2.0, m, LinearTerm::Log, &opts)?;
        zero &= r.lhs == 0.0;
    }
    s.record("randoma-trivial-couple", zero, "lhs = 0 for (l2, l2)");

    let fams = randsums::default_families(8, 8, 64, 1, s.cfg.seed);
    let vf = VectorFamily::new("gaussian", fams.last().expect("one family").members.clone(), s.space("c0")?)?;
    let exact = randsums::rademacher_average(&vf, AverageMode::Exact)?;
    let mc = randsums::rademacher_average(&vf, AverageMode::MonteCarlo { trials: 20_000, seed: s.cfg.seed })?;
    let se = mc.std_error.unwrap_or(0.0);
    s.record(
        "monte-carlo-agreement",
        (exact.mean - mc.mean).abs() <= 3.0 * se,
        format!("exact {} vs {} +- {se:e}", exact.mean, mc.mean),
    );

    let r = randsums::interpola_check(&(s.space("c0")?, s.space("l1")?), 2.0, 0.5, 6, 2.0, &opts)?;
    s.record("interpola-finite", r.c_emp.is_finite() && r.c_emp > 0.0, format!("ratio {}", r.c_emp));
    Ok(())
}
