/// A finite real sequence indexed by consecutive integers starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedSeries {
    pub start: i64,
    pub values: Vec<f64>,
}

impl IndexedSeries {
    pub fn new(start: i64, values: Vec<f64>) -> Self {
        Self { start, values }
    }

    /// Last index covered; `start - 1` when empty.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        lo > hi || (lo >= self.start && hi <= self.end())
    }

    pub fn get(&self, index: i64) -> Option<f64> {
        if index < self.start {
            return None;
        }
        self.values.get((index - self.start) as usize).copied()
    }

    /// Value at `index`, zero outside the stored range.
    pub fn at(&self, index: i64) -> f64 {
        self.get(index).unwrap_or(0.0)
    }

    /// Contiguous slice over `[lo, hi]`; panics if not covered.
    pub fn slice(&self, lo: i64, hi: i64) -> &[f64] {
        assert!(self.covers(lo, hi), "slice [{lo}, {hi}] outside series");
        if lo > hi {
            return &[];
        }
        let a = (lo - self.start) as usize;
        let b = (hi - self.start) as usize;
        &self.values[a..=b]
    }
}
