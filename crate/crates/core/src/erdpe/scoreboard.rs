use std::collections::BTreeMap;

/// Entry state. A segment with no entry has been committed (or was never dirty).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentState {
    /// Corrected data is back and passed the check; waiting for its commit (valid bit 0).
    Checked,
    /// Sent to the corrector hub (valid bit 1).
    AwaitingCorrection,
}

/// Per-dot-product tracker of deferred segments. Ordered by segment index, which
/// is also the commit order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scoreboard {
    entries: BTreeMap<usize, SegmentState>,
}

impl Scoreboard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the segment already has an entry.
    pub fn insert(&mut self, segment: usize, state: SegmentState) -> bool {
        if self.entries.contains_key(&segment) {
            return false;
        }
        self.entries.insert(segment, state);
        true
    }

    pub fn set_state(&mut self, segment: usize, state: SegmentState) -> bool {
        match self.entries.get_mut(&segment) {
            Some(s) => {
                *s = state;
                true
            }
            None => false,
        }
    }

    pub fn state(&self, segment: usize) -> Option<SegmentState> {
        self.entries.get(&segment).copied()
    }

    pub fn remove(&mut self, segment: usize) -> Option<SegmentState> {
        self.entries.remove(&segment)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, SegmentState)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}
