/// A compressed grouping of input rows: output row `g` aggregates the input
/// rows listed in `members(g)`.
///
/// Neighbor lists of a graph map onto this directly (one group per node).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Segments {
    pub fn from_groups<I, G>(groups: I) -> Self
    where
        I: IntoIterator<Item = G>,
        G: AsRef<[usize]>,
    {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        for g in groups {
            indices.extend_from_slice(g.as_ref());
            offsets.push(indices.len());
        }
        Self { offsets, indices }
    }

    /// Number of groups (output rows).
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn members(&self, group: usize) -> &[usize] {
        &self.indices[self.offsets[group]..self.offsets[group + 1]]
    }

    /// Largest referenced input row, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.indices.iter().copied().max()
    }
}
