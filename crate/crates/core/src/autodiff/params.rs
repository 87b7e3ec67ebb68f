use super::{AutodiffError, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named trainable arrays with gradient accumulators, kept in lexicographic
/// name order so iteration (and therefore checkpoints and optimizer state)
/// is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    entries: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces an entry; the gradient is reset to zeros.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        let grad = Tensor::zeros(value.shape());
        match self.names.binary_search(&name) {
            Ok(i) => self.entries[i] = Param { value, grad },
            Err(i) => {
                self.names.insert(i, name);
                self.entries.insert(i, Param { value, grad });
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.binary_search_by(|n| n.as_str().cmp(name)).ok()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index_of(name).map(|i| &self.entries[i])
    }

    pub fn value(&self, name: &str) -> Result<&Tensor, AutodiffError> {
        self.get(name)
            .map(|p| &p.value)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor, AutodiffError> {
        let i = self
            .index_of(name)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))?;
        Ok(&mut self.entries[i].value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor, AutodiffError> {
        self.get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| AutodiffError::UnknownParam(name.to_string()))
    }

    pub fn entry(&self, idx: usize) -> &Param {
        &self.entries[idx]
    }

    pub fn entry_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.entries[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.names.iter().map(String::as_str).zip(&self.entries)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.grad.fill_zero();
        }
    }

    /// Adds `scale · grads` into the accumulators.
    pub fn accumulate(&mut self, grads: &ParamGrads, scale: f64) {
        for (idx, g) in grads.iter() {
            let acc = self.entries[idx].grad.data_mut();
            for (a, b) in acc.iter_mut().zip(g.data()) {
                *a += scale * *b;
            }
        }
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|p| p.value.numel()).sum()
    }
}

/// Gradients produced by one backward pass, keyed by parameter index.
#[derive(Debug, Clone, Default)]
pub struct ParamGrads {
    grads: Vec<(usize, Tensor)>,
}

impl ParamGrads {
    pub(crate) fn push(&mut self, idx: usize, grad: Tensor) {
        self.grads.push((idx, grad));
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &Tensor)> {
        self.grads.iter().map(|(i, g)| (*i, g))
    }

    pub fn get(&self, idx: usize) -> Option<&Tensor> {
        self.grads.iter().find(|(i, _)| *i == idx).map(|(_, g)| g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_is_lexicographic() {
        let mut store = ParamStore::new();
        store.insert("b", Tensor::scalar(1.0));
        store.insert("a", Tensor::scalar(2.0));
        store.insert("c.x", Tensor::scalar(3.0));
        let names: Vec<_> = store.names().collect();
        assert_eq!(names, ["a", "b", "c.x"]);
        assert_eq!(store.value("a").unwrap().item(), 2.0);
    }

    #[test]
    fn replace_keeps_names_unique() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::scalar(1.0));
        store.insert("w", Tensor::row(vec![1.0, 2.0]));
        assert_eq!(store.len(), 1);
        assert_eq!(store.grad("w").unwrap().shape(), &[1, 2]);
    }
}
