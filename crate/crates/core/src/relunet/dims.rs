use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer-dimension vector `(k_0, k_1, ..., k_{H+1})` of a network.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DimVector(Vec<usize>);

impl DimVector {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::shape(format!(
                "dimension vector needs at least 2 entries, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&k| k == 0) {
            return Err(Error::shape(format!("dimension vector {dims:?} has a zero entry")));
        }
        Ok(DimVector(dims))
    }

    /// `(d, 2d, ..., 2d, d)` with `n` entries: the shape of the identity network.
    pub fn standard(n: usize, d: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::invalid(format!("standard dimension vector needs n >= 3, got {n}")));
        }
        if d == 0 {
            return Err(Error::invalid("standard dimension vector needs d >= 1"));
        }
        let mut v = vec![2 * d; n];
        v[0] = d;
        v[n - 1] = d;
        Ok(DimVector(v))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Number of entries, i.e. hidden layers + 2.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn input(&self) -> usize {
        self.0[0]
    }

    pub fn output(&self) -> usize {
        self.0[self.0.len() - 1]
    }

    pub fn sup_norm(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// `sum_n k_n (k_{n-1} + 1)`.
    pub fn param_count(&self) -> u128 {
        self.0
            .windows(2)
            .map(|w| w[1] as u128 * (w[0] as u128 + 1))
            .sum()
    }

    /// Parallel sum: interior entries add, endpoints are shared.
    pub fn boxplus(&self, other: &DimVector) -> Result<DimVector> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "parallel sum needs equal lengths, got {} and {}",
                self.len(),
                other.len()
            )));
        }
        if self.input() != other.input() || self.output() != other.output() {
            return Err(Error::shape(format!(
                "parallel sum needs equal endpoints, got {self} and {other}"
            )));
        }
        let n = self.len();
        let mut v = Vec::with_capacity(n);
        v.push(self.0[0]);
        for k in 1..n - 1 {
            v.push(self.0[k] + other.0[k]);
        }
        v.push(other.0[n - 1]);
        Ok(DimVector(v))
    }

    /// Composition shape: `self` is applied after `inner`.
    ///
    /// `(a_0..a_{H1+1}) ⊙ (b_0..b_{H2+1}) = (b_0, .., b_{H2}, b_{H2+1} + a_0, a_1, .., a_{H1+1})`.
    pub fn compose(&self, inner: &DimVector) -> Result<DimVector> {
        if self.input() != inner.output() {
            return Err(Error::shape(format!(
                "cannot compose {self} after {inner}: interface {} vs {}",
                self.input(),
                inner.output()
            )));
        }
        let b = &inner.0;
        let a = &self.0;
        let mut v = Vec::with_capacity(a.len() + b.len() - 1);
        v.extend_from_slice(&b[..b.len() - 1]);
        v.push(b[b.len() - 1] + a[0]);
        v.extend_from_slice(&a[1..]);
        Ok(DimVector(v))
    }

    /// Folds `boxplus` over a non-empty list.
    pub fn boxplus_all<'a>(items: impl IntoIterator<Item = &'a DimVector>) -> Result<DimVector> {
        let mut it = items.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::invalid("parallel sum of an empty list"))?
            .clone();
        it.try_fold(first, |acc, d| acc.boxplus(d))
    }
}

impl TryFrom<Vec<usize>> for DimVector {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        DimVector::new(v)
    }
}

impl From<DimVector> for Vec<usize> {
    fn from(d: DimVector) -> Self {
        d.0
    }
}

impl fmt::Display for DimVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for DimVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DimVector{self}")
    }
}
