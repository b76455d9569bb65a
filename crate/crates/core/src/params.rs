use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Named, ordered parameter tensors.
///
/// Iteration order is insertion order. Two stores are compatible when they
/// hold the same names with the same shapes in the same order, which is what
/// averaging, interpolation and ensembling require.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Usage(format!("duplicate parameter name {name:?}")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalars.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn check_compatible(&self, other: &ParamStore) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Dimension(format!(
                "parameter stores hold {} and {} tensors",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(Error::Dimension(format!(
                    "parameter mismatch: {na} {:?} vs {nb} {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// Elementwise combination `sum_i weights[i] * stores[i]`.
    pub fn linear_combination(stores: &[&ParamStore], weights: &[f64]) -> Result<ParamStore> {
        let Some(first) = stores.first() else {
            return Err(Error::Usage("linear combination of zero stores".into()));
        };
        if stores.len() != weights.len() {
            return Err(Error::Usage("one weight per store required".into()));
        }
        for s in &stores[1..] {
            first.check_compatible(s)?;
        }
        let mut out = ParamStore::new();
        for (i, (name, t)) in first.entries.iter().enumerate() {
            let mut data = vec![0.0; t.len()];
            for (s, &w) in stores.iter().zip(weights) {
                for (d, v) in data.iter_mut().zip(s.entries[i].1.data()) {
                    *d += w * v;
                }
            }
            out.insert(name.clone(), Tensor::new(t.shape().to_vec(), data)?)?;
        }
        Ok(out)
    }

    /// Largest absolute elementwise difference to a compatible store.
    pub fn max_abs_diff(&self, other: &ParamStore) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|((_, a), (_, b))| a.max_abs_diff(b))
            .fold(0.0, f64::max))
    }

    /// Bitwise equality of every value.
    pub fn bit_equal(&self, other: &ParamStore) -> bool {
        self.check_compatible(other).is_ok()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((_, a), (_, b))| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(vals: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::row(vals.to_vec()).unwrap()).unwrap();
        s.insert("b", Tensor::scalar(vals[0])).unwrap();
        s
    }

    #[test]
    fn names_are_unique_and_ordered() {
        let mut s = store(&[1.0, 2.0]);
        assert!(s.insert("a", Tensor::scalar(0.0)).is_err());
        assert_eq!(s.names().collect::<Vec<_>>(), vec!["a", "b"]);
        assert_eq!(s.scalar_count(), 3);
    }

    #[test]
    fn combination_and_compatibility() {
        let a = store(&[1.0, 2.0]);
        let b = store(&[3.0, 6.0]);
        let mid = ParamStore::linear_combination(&[&a, &b], &[0.5, 0.5]).unwrap();
        assert_eq!(mid.get("a").unwrap().data(), &[2.0, 4.0]);
        let mut c = ParamStore::new();
        c.insert("a", Tensor::scalar(1.0)).unwrap();
        assert!(a.check_compatible(&c).is_err());
        assert!(a.bit_equal(&a.clone()));
        assert!(!a.bit_equal(&b));
    }
}
