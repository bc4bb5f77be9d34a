use std::ops::Range;

use crate::corpus::{EmpiricalCounts, WordId};
use crate::error::{Error, Result};
use crate::model::Context;

/// Every context with positive empirical mass `p̃(h)`, sorted by
/// `(prev, topic)`, with the groupings the cluster engine walks.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryTable {
    contexts: Vec<Context>,
    weights: Vec<f64>,
    num_topics: usize,
    by_prev: Vec<(WordId, Range<usize>)>,
    by_topic: Vec<Vec<usize>>,
}

impl HistoryTable {
    pub fn from_counts(counts: &EmpiricalCounts) -> Self {
        let n = counts.total() as f64;
        let entries = counts
            .contexts()
            .iter()
            .map(|(&(prev, topic), &c)| (Context::new(prev, topic), c as f64 / n));
        Self::build(counts.num_topics(), entries.collect())
    }

    /// Builds a table from explicit positive weights, normalized to sum to one.
    pub fn from_weights(num_topics: usize, mut entries: Vec<(Context, f64)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Domain("history table needs at least one context".into()));
        }
        if let Some((h, w)) = entries.iter().find(|(_, w)| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Domain(format!("history {h:?} has weight {w}")));
        }
        if let Some((h, _)) = entries.iter().find(|(h, _)| h.topic as usize >= num_topics) {
            return Err(Error::Domain(format!("history {h:?} topic >= T={num_topics}")));
        }
        entries.sort_by_key(|e| e.0);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Domain(format!("duplicate history {:?}", w[0].0)));
        }
        let total: f64 = entries.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut entries {
            *w /= total;
        }
        Ok(Self::build(num_topics, entries))
    }

    fn build(num_topics: usize, entries: Vec<(Context, f64)>) -> Self {
        let (contexts, weights): (Vec<Context>, Vec<f64>) = entries.into_iter().unzip();
        let mut by_prev: Vec<(WordId, Range<usize>)> = Vec::new();
        let mut by_topic = vec![Vec::new(); num_topics];
        for (k, h) in contexts.iter().enumerate() {
            match by_prev.last_mut() {
                Some((prev, range)) if *prev == h.prev => range.end = k + 1,
                _ => by_prev.push((h.prev, k..k + 1)),
            }
            by_topic[h.topic as usize].push(k);
        }
        HistoryTable { contexts, weights, num_topics, by_prev, by_topic }
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (Context, f64)> + '_ {
        self.contexts.iter().copied().zip(self.weights.iter().copied())
    }

    /// Histories grouped by predecessor: `(i, index range)`, ascending in `i`.
    pub fn by_prev(&self) -> &[(WordId, Range<usize>)] {
        &self.by_prev
    }

    /// Indices of the histories with topic `t`, ascending.
    pub fn with_topic(&self, t: usize) -> &[usize] {
        &self.by_topic[t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_and_groups() {
        let h = HistoryTable::from_weights(
            3,
            vec![
                (Context::new(4, 2), 1.0),
                (Context::new(1, 0), 2.0),
                (Context::new(4, 0), 1.0),
            ],
        )
        .unwrap();
        assert_eq!(h.contexts()[0], Context::new(1, 0));
        assert_eq!(h.weights(), &[0.5, 0.25, 0.25]);
        assert_eq!(h.by_prev(), &[(1, 0..1), (4, 1..3)]);
        assert_eq!(h.with_topic(0), &[0, 1]);
        assert!(h.with_topic(1).is_empty());
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(HistoryTable::from_weights(1, vec![]).is_err());
        assert!(HistoryTable::from_weights(1, vec![(Context::new(0, 0), 0.0)]).is_err());
        assert!(HistoryTable::from_weights(1, vec![(Context::new(0, 1), 1.0)]).is_err());
        let dup = vec![(Context::new(0, 0), 1.0), (Context::new(0, 0), 1.0)];
        assert!(HistoryTable::from_weights(1, dup).is_err());
    }
}
