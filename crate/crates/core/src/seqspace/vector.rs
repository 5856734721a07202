use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finitely supported real sequence on indices `1, 2, ...`.
///
/// Entries are kept sorted by index and never store an exact zero, so two
/// vectors compare equal exactly when they agree coordinatewise.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeqVectorJson", into = "SeqVectorJson")]
pub struct SeqVector {
    entries: Vec<(usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct SeqVectorJson {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl TryFrom<SeqVectorJson> for SeqVector {
    type Error = Error;

    fn try_from(raw: SeqVectorJson) -> Result<Self> {
        if raw.indices.len() != raw.values.len() {
            return Err(Error::parse(
                "values",
                format!(
                    "{} values for {} indices",
                    raw.values.len(),
                    raw.indices.len()
                ),
            ));
        }
        let mut prev = 0usize;
        for (k, (&i, &v)) in raw.indices.iter().zip(&raw.values).enumerate() {
            if i == 0 {
                return Err(Error::parse(
                    format!("indices[{k}]"),
                    "indices start at 1",
                ));
            }
            if i <= prev {
                return Err(Error::parse(
                    format!("indices[{k}]"),
                    "indices must be strictly increasing",
                ));
            }
            if v == 0.0 {
                return Err(Error::parse(
                    format!("values[{k}]"),
                    "zero values are not stored",
                ));
            }
            if !v.is_finite() {
                return Err(Error::parse(format!("values[{k}]"), "value is not finite"));
            }
            prev = i;
        }
        Ok(SeqVector {
            entries: raw.indices.into_iter().zip(raw.values).collect(),
        })
    }
}

impl From<SeqVector> for SeqVectorJson {
    fn from(v: SeqVector) -> Self {
        let (indices, values) = v.entries.into_iter().unzip();
        SeqVectorJson { indices, values }
    }
}

impl SeqVector {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds from `(index, value)` pairs in any order; zero values are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (i, v) in pairs {
            if i == 0 {
                return Err(Error::param("index", "indices start at 1"));
            }
            if !v.is_finite() {
                return Err(Error::param("value", format!("non-finite value at index {i}")));
            }
            entries.push((i, v));
        }
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::param("index", "duplicate index"));
        }
        entries.retain(|e| e.1 != 0.0);
        Ok(SeqVector { entries })
    }

    /// Coordinate `k` of `dense` becomes index `k + 1`.
    pub fn from_dense(dense: &[f64]) -> Self {
        SeqVector {
            entries: dense
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(k, v)| (k + 1, *v))
                .collect(),
        }
    }

    /// Unit vector `e_j`.
    pub fn basis(j: usize) -> Self {
        assert!(j >= 1, "indices start at 1");
        SeqVector {
            entries: vec![(j, 1.0)],
        }
    }

    /// Indicator of the integer interval `[lo, hi]`.
    pub fn indicator(lo: usize, hi: usize) -> Self {
        assert!(lo >= 1, "indices start at 1");
        SeqVector {
            entries: (lo..=hi).map(|j| (j, 1.0)).collect(),
        }
    }

    /// Dense copy on `[1, n]`; entries beyond `n` are ignored.
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(i, v) in &self.entries {
            if i <= n {
                out[i - 1] = v;
            }
        }
        out
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries
            .binary_search_by_key(&i, |e| e.0)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// Largest stored index, 0 for the zero vector.
    pub fn dim(&self) -> usize {
        self.entries.last().map_or(0, |e| e.0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> Self {
        SeqVector {
            entries: self
                .entries
                .iter()
                .map(|&(i, v)| (i, f(i, v)))
                .filter(|e| e.1 != 0.0)
                .collect(),
        }
    }

    pub fn scale(&self, t: f64) -> Self {
        self.map_values(|_, v| t * v)
    }

    pub fn abs(&self) -> Self {
        self.map_values(|_, v| v.abs())
    }

    /// Restriction to the indices for which `keep` holds.
    pub fn restrict(&self, keep: impl Fn(usize) -> bool) -> Self {
        SeqVector {
            entries: self.entries.iter().copied().filter(|e| keep(e.0)).collect(),
        }
    }

    fn merge(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        while i < a.len() || j < b.len() {
            let (idx, v) = if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
                i += 1;
                (a[i - 1].0, f(a[i - 1].1, 0.0))
            } else if i == a.len() || b[j].0 < a[i].0 {
                j += 1;
                (b[j - 1].0, f(0.0, b[j - 1].1))
            } else {
                i += 1;
                j += 1;
                (a[i - 1].0, f(a[i - 1].1, b[j - 1].1))
            };
            if v != 0.0 {
                out.push((idx, v));
            }
        }
        SeqVector { entries: out }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.merge(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.merge(other, |x, y| x - y)
    }

    /// Coordinatewise product.
    pub fn hadamard(&self, other: &Self) -> Self {
        self.merge(other, |x, y| x * y)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.hadamard(other).entries.iter().map(|e| e.1).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        l2(self.entries.iter().map(|e| e.1))
    }

    pub fn linf_norm(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.1.abs()))
    }

    pub fn l1_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1.abs()).sum()
    }
}

/// Overflow-safe Euclidean norm; exact for a single nonzero term.
pub(crate) fn l2(values: impl Iterator<Item = f64> + Clone) -> f64 {
    lq(values, 2.0)
}

/// Overflow-safe `ℓq` norm, `q ≥ 1`; exact for a single nonzero term.
pub(crate) fn lq(values: impl Iterator<Item = f64> + Clone, q: f64) -> f64 {
    let m = values.clone().fold(0.0f64, |m, v| m.max(v.abs()));
    if m == 0.0 {
        return 0.0;
    }
    if q == 2.0 {
        return m * values.map(|v| (v / m) * (v / m)).sum::<f64>().sqrt();
    }
    if q == 1.0 {
        return values.map(f64::abs).sum();
    }
    m * values
        .map(|v| (v.abs() / m).powf(q))
        .sum::<f64>()
        .powf(1.0 / q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let v = SeqVector::from_pairs([(4, -1.5), (1, 2.0)]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"indices":[1,4],"values":[2.0,-1.5]}"#);
        let back: SeqVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn json_rejects_bad_input() {
        for bad in [
            r#"{"indices":[2,1],"values":[1.0,1.0]}"#,
            r#"{"indices":[1,2],"values":[1.0,0.0]}"#,
            r#"{"indices":[0],"values":[1.0]}"#,
            r#"{"indices":[1],"values":[1.0,2.0]}"#,
        ] {
            let err = serde_json::from_str::<SeqVector>(bad).unwrap_err();
            assert!(err.to_string().contains("parse error"), "{err}");
        }
    }

    #[test]
    fn zeros_are_not_stored() {
        let v = SeqVector::from_dense(&[0.0, 1.0, 0.0, -2.0]);
        assert_eq!(v.support(), vec![2, 4]);
        assert_eq!(v.dim(), 4);
        assert!(v.sub(&v).is_zero());
    }

    #[test]
    fn arithmetic() {
        let a = SeqVector::from_dense(&[1.0, 2.0]);
        let b = SeqVector::from_pairs([(2, 3.0), (5, 1.0)]).unwrap();
        assert_eq!(a.add(&b).to_dense(5), vec![1.0, 5.0, 0.0, 0.0, 1.0]);
        assert_eq!(a.hadamard(&b).support(), vec![2]);
        assert_eq!(a.dot(&b), 6.0);
        assert_eq!(SeqVector::basis(3).scale(-3.0).l2_norm(), 3.0);
    }

    #[test]
    fn lq_single_term_is_exact() {
        for q in [1.0, 1.5, 2.0, 3.7] {
            assert_eq!(lq([0.0, -0.3, 0.0].into_iter(), q), 0.3);
        }
    }
}
