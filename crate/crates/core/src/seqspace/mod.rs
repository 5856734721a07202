//! Norm engines for finite sections of sequence spaces.

mod dual;
mod tsirelson;
mod vector;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use dual::{DualSettings, DualValue};
pub use tsirelson::{
    norming_functionals, tsirelson2_norm, tsirelson2_norm_with_functional, tsirelson_norm,
    tsirelson_norm_with_functional, NormingCaps, NormingFunctionalSet,
};
pub use vector::SeqVector;
pub(crate) use vector::lq;

/// Default restriction `[1, n]` for evaluations.
pub const DEFAULT_SUPPORT_BOUND: usize = 64;

/// Weight sequence with an optional file of origin, kept for display.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub values: Arc<Vec<f64>>,
    pub source: Option<String>,
}

impl Weights {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        for (k, w) in values.iter().enumerate() {
            if !(w.is_finite() && *w >= 1.0) {
                return Err(Error::param(
                    format!("weights[{k}]"),
                    format!("weights must be finite and at least 1, got {w}"),
                ));
            }
        }
        if values.is_empty() {
            return Err(Error::param("weights", "empty weight sequence"));
        }
        Ok(Weights {
            values: Arc::new(values),
            source: None,
        })
    }

    /// Reads a JSON array or whitespace/comma separated numbers.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut w = Weights::new(parse_number_list(&text, "weights")?)?;
        w.source = Some(path.display().to_string());
        Ok(w)
    }
}

fn parse_number_list(text: &str, field: &str) -> Result<Vec<f64>> {
    let trimmed = text.trim();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| Error::parse(field, e.to_string()));
    }
    trimmed
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::parse(field, format!("`{s}`: {e}")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpaceKind {
    Lp(f64),
    C0,
    Tsirelson,
    Tsirelson2,
    /// `‖x‖ = (Σ (x_j / w_j)²)^{1/2}`.
    WeightedL2(Weights),
    DualOf(Box<SpaceKind>),
}

/// A normed sequence space restricted to `[1, support_bound]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceDescriptor {
    pub kind: SpaceKind,
    pub support_bound: usize,
    pub dual_settings: DualSettings,
}

impl SpaceDescriptor {
    pub fn new(kind: SpaceKind) -> Result<Self> {
        validate_kind(&kind)?;
        let support_bound = match &kind {
            SpaceKind::WeightedL2(w) => w.values.len(),
            SpaceKind::DualOf(inner) => match inner.as_ref() {
                SpaceKind::WeightedL2(w) => w.values.len(),
                _ => DEFAULT_SUPPORT_BOUND,
            },
            _ => DEFAULT_SUPPORT_BOUND,
        };
        Ok(SpaceDescriptor {
            kind,
            support_bound,
            dual_settings: DualSettings::default(),
        })
    }

    pub fn lp(p: f64) -> Result<Self> {
        Self::new(SpaceKind::Lp(p))
    }

    pub fn l2() -> Self {
        Self::new(SpaceKind::Lp(2.0)).expect("valid")
    }

    pub fn c0() -> Self {
        Self::new(SpaceKind::C0).expect("valid")
    }

    pub fn tsirelson() -> Self {
        Self::new(SpaceKind::Tsirelson).expect("valid")
    }

    pub fn tsirelson2() -> Self {
        Self::new(SpaceKind::Tsirelson2).expect("valid")
    }

    pub fn weighted_l2(weights: Vec<f64>) -> Result<Self> {
        Self::new(SpaceKind::WeightedL2(Weights::new(weights)?))
    }

    pub fn with_support_bound(mut self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("support_bound", "must be positive"));
        }
        if let Some(len) = self.intrinsic_support() {
            if n > len {
                return Err(Error::param(
                    "support_bound",
                    format!("{n} exceeds the {len} weights of the space"),
                ));
            }
        }
        self.support_bound = n;
        Ok(self)
    }

    /// Number of weights for weighted kinds, which caps the support bound.
    pub fn intrinsic_support(&self) -> Option<usize> {
        match &self.kind {
            SpaceKind::WeightedL2(w) => Some(w.values.len()),
            SpaceKind::DualOf(inner) => match inner.as_ref() {
                SpaceKind::WeightedL2(w) => Some(w.values.len()),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn with_dual_settings(mut self, s: DualSettings) -> Self {
        self.dual_settings = s;
        self
    }

    /// The dual space, collapsing `dual:dual:X` to `X` and closed-form duals
    /// of `ℓp` and `c0` to primal kinds.
    pub fn dual(&self) -> SpaceDescriptor {
        let kind = match &self.kind {
            SpaceKind::DualOf(inner) => (**inner).clone(),
            SpaceKind::Lp(p) if *p > 1.0 => SpaceKind::Lp(*p / (*p - 1.0)),
            SpaceKind::C0 => SpaceKind::Lp(1.0),
            other => SpaceKind::DualOf(Box::new(other.clone())),
        };
        SpaceDescriptor {
            kind,
            support_bound: self.support_bound,
            dual_settings: self.dual_settings,
        }
    }

    /// True when norms are computed by an iterative solver.
    pub fn is_solver_backed(&self) -> bool {
        matches!(
            &self.kind,
            SpaceKind::DualOf(inner) if matches!(**inner, SpaceKind::Tsirelson | SpaceKind::Tsirelson2)
        )
    }

    fn check_support(&self, v: &SeqVector) -> Result<()> {
        if v.dim() > self.support_bound {
            return Err(Error::param(
                "support",
                format!(
                    "index {} exceeds the support bound {} of {self}",
                    v.dim(),
                    self.support_bound
                ),
            ));
        }
        Ok(())
    }

    /// Norm of `v`. For solver-backed duals this is the certified upper end.
    pub fn norm(&self, v: &SeqVector) -> Result<f64> {
        self.check_support(v)?;
        if v.is_zero() {
            return Ok(0.0);
        }
        Ok(self.norm_dense(&v.to_dense(v.dim())))
    }

    /// Dual norm of `y` as a certified interval.
    pub fn dual_norm(&self, y: &SeqVector) -> Result<DualValue> {
        self.check_support(y)?;
        if let SpaceKind::DualOf(_) = self.kind {
            return Err(Error::param(
                "space",
                "dual_norm expects a primal kind; use norm on the dual descriptor",
            ));
        }
        Ok(dual::dual_value(&self.kind, &y.to_dense(y.dim()), &self.dual_settings))
    }

    /// Norm of a dense vector (coordinate `k` is index `k + 1`).
    pub(crate) fn norm_dense(&self, x: &[f64]) -> f64 {
        norm_kind(&self.kind, x, &self.dual_settings)
    }

    /// Norm and a subgradient `g` with `⟨g, x⟩ = ‖x‖`.
    pub(crate) fn norm_and_subgradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        subgradient_kind(&self.kind, x, &self.dual_settings)
    }

    /// Dual norm of a dense vector; the space must be primal.
    pub(crate) fn dual_norm_dense(&self, y: &[f64]) -> DualValue {
        dual::dual_value(&self.kind, y, &self.dual_settings)
    }
}

fn validate_kind(kind: &SpaceKind) -> Result<()> {
    match kind {
        SpaceKind::Lp(p) if !(p.is_finite() && *p >= 1.0) => Err(Error::param(
            "p",
            format!("lp requires 1 <= p < infinity, got {p}"),
        )),
        SpaceKind::DualOf(inner) => validate_kind(inner),
        _ => Ok(()),
    }
}

fn weight(w: &Weights, k: usize) -> f64 {
    // indices beyond the stored weights are rejected by the support bound
    w.values[k]
}

pub(crate) fn norm_kind(kind: &SpaceKind, x: &[f64], s: &DualSettings) -> f64 {
    match kind {
        SpaceKind::Lp(p) => lq(x.iter().copied(), *p),
        SpaceKind::C0 => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        SpaceKind::Tsirelson => tsirelson_norm(x),
        SpaceKind::Tsirelson2 => tsirelson2_norm(x),
        SpaceKind::WeightedL2(w) => {
            lq(x.iter().enumerate().map(|(k, v)| v / weight(w, k)), 2.0)
        }
        SpaceKind::DualOf(inner) => match inner.as_ref() {
            SpaceKind::DualOf(x2) => norm_kind(x2, x, s),
            other => dual::dual_value(other, x, s).upper,
        },
    }
}

pub(crate) fn subgradient_kind(kind: &SpaceKind, x: &[f64], s: &DualSettings) -> (f64, Vec<f64>) {
    let n = x.len();
    match kind {
        SpaceKind::Lp(p) => {
            let v = lq(x.iter().copied(), *p);
            if v == 0.0 {
                return (0.0, vec![0.0; n]);
            }
            let g = x
                .iter()
                .map(|&xi| xi.signum() * (xi.abs() / v).powf(p - 1.0) * (xi != 0.0) as u8 as f64)
                .collect();
            (v, g)
        }
        SpaceKind::C0 => {
            let (mut arg, mut m) = (0, 0.0);
            for (k, v) in x.iter().enumerate() {
                if v.abs() > m {
                    m = v.abs();
                    arg = k;
                }
            }
            let mut g = vec![0.0; n];
            if m > 0.0 {
                g[arg] = x[arg].signum();
            }
            (m, g)
        }
        SpaceKind::Tsirelson => {
            let (v, f) = tsirelson_norm_with_functional(x);
            let g = f.iter().zip(x).map(|(fi, xi)| fi * sign(*xi)).collect();
            (v, g)
        }
        SpaceKind::Tsirelson2 => {
            let (v, f) = tsirelson2_norm_with_functional(x);
            if v == 0.0 {
                return (0.0, vec![0.0; n]);
            }
            let g = f.iter().zip(x).map(|(fi, xi)| fi * xi / v).collect();
            (v, g)
        }
        SpaceKind::WeightedL2(w) => {
            let v = norm_kind(kind, x, s);
            if v == 0.0 {
                return (0.0, vec![0.0; n]);
            }
            let g = x
                .iter()
                .enumerate()
                .map(|(k, xi)| xi / (weight(w, k) * weight(w, k)) / v)
                .collect();
            (v, g)
        }
        SpaceKind::DualOf(inner) => match inner.as_ref() {
            SpaceKind::DualOf(x2) => subgradient_kind(x2, x, s),
            other => {
                let d = dual::dual_value(other, x, s);
                let g = d
                    .maximizer
                    .iter()
                    .zip(x)
                    .map(|(m, xi)| if *xi == 0.0 { 0.0 } else { *m })
                    .collect();
                (d.upper, g)
            }
        },
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl fmt::Display for SpaceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceKind::Lp(p) => write!(f, "lp:{p}"),
            SpaceKind::C0 => write!(f, "c0"),
            SpaceKind::Tsirelson => write!(f, "T"),
            SpaceKind::Tsirelson2 => write!(f, "T2"),
            SpaceKind::WeightedL2(w) => match &w.source {
                Some(path) => write!(f, "wl2:{path}"),
                None => write!(
                    f,
                    "wl2:{}",
                    serde_json::to_string(w.values.as_ref()).map_err(|_| fmt::Error)?
                ),
            },
            SpaceKind::DualOf(inner) => write!(f, "dual:{inner}"),
        }
    }
}

impl fmt::Display for SpaceDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

fn parse_kind(s: &str) -> Result<SpaceKind> {
    let s = s.trim();
    if let Some(inner) = s.strip_prefix("dual:") {
        return Ok(SpaceKind::DualOf(Box::new(parse_kind(inner)?)));
    }
    if let Some(p) = s.strip_prefix("lp:") {
        let p: f64 = p
            .parse()
            .map_err(|e| Error::parse("space", format!("exponent `{p}`: {e}")))?;
        return Ok(SpaceKind::Lp(p));
    }
    if let Some(rest) = s.strip_prefix("wl2:") {
        let w = if rest.trim_start().starts_with('[') {
            Weights::new(parse_number_list(rest, "space")?)?
        } else {
            Weights::from_file(Path::new(rest))?
        };
        return Ok(SpaceKind::WeightedL2(w));
    }
    match s {
        "c0" => Ok(SpaceKind::C0),
        "l1" => Ok(SpaceKind::Lp(1.0)),
        "l2" => Ok(SpaceKind::Lp(2.0)),
        "T" => Ok(SpaceKind::Tsirelson),
        "T2" => Ok(SpaceKind::Tsirelson2),
        other => Err(Error::parse("space", format!("unknown space `{other}`"))),
    }
}

impl FromStr for SpaceDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SpaceDescriptor::new(parse_kind(s)?)
    }
}

impl Serialize for SpaceDescriptor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SpaceDescriptor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
