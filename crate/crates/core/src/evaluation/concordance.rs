use crate::error::{Error, Result};

/// Pair counts behind Harrell's C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConcordanceCounts {
    pub concordant: u64,
    pub tied_risk: u64,
    pub comparable: u64,
}

impl ConcordanceCounts {
    pub fn c_index(&self) -> Option<f64> {
        if self.comparable == 0 {
            return None;
        }
        Some((2 * self.concordant + self.tied_risk) as f64 / (2 * self.comparable) as f64)
    }
}

/// Above this size `c_index` switches from pair enumeration to the sorted
/// algorithm.
pub const PAIRWISE_LIMIT: usize = 2000;

fn check(time: &[f64], event: &[bool], risk: &[f64]) -> Result<()> {
    if time.len() != event.len() || time.len() != risk.len() {
        return Err(Error::invalid("time, event and risk lengths differ"));
    }
    if time.iter().chain(risk).any(|v| v.is_nan()) {
        return Err(Error::invalid("NaN in time or risk"));
    }
    Ok(())
}

/// Exact O(n^2) enumeration.
pub fn concordance_pairwise(time: &[f64], event: &[bool], risk: &[f64]) -> Result<ConcordanceCounts> {
    check(time, event, risk)?;
    let mut c = ConcordanceCounts::default();
    for i in 0..time.len() {
        if !event[i] {
            continue;
        }
        for j in 0..time.len() {
            if time[i] < time[j] {
                c.comparable += 1;
                if risk[i] > risk[j] {
                    c.concordant += 1;
                } else if risk[i] == risk[j] {
                    c.tied_risk += 1;
                }
            }
        }
    }
    Ok(c)
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn below(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i &= i - 1;
        }
        s
    }
}

/// O(n log n): sweep times from longest to shortest, keeping the risks of
/// strictly longer survivors in a Fenwick tree over risk ranks.
pub fn concordance_sorted(time: &[f64], event: &[bool], risk: &[f64]) -> Result<ConcordanceCounts> {
    check(time, event, risk)?;
    let n = time.len();
    let mut by_risk: Vec<usize> = (0..n).collect();
    by_risk.sort_by(|&a, &b| risk[a].total_cmp(&risk[b]));
    let mut rank = vec![0; n];
    let mut r = 0;
    for k in 0..n {
        if k > 0 && risk[by_risk[k]] != risk[by_risk[k - 1]] {
            r += 1;
        }
        rank[by_risk[k]] = r;
    }
    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
    let mut tree = Fenwick(vec![0; r + 2]);
    let mut inserted = 0u64;
    let mut c = ConcordanceCounts::default();
    let mut p = 0;
    while p < n {
        let mut q = p;
        while q < n && time[by_time[q]] == time[by_time[p]] {
            q += 1;
        }
        for &i in &by_time[p..q] {
            if event[i] {
                let below = tree.below(rank[i]);
                let at_or_below = tree.below(rank[i] + 1);
                c.comparable += inserted;
                c.concordant += below;
                c.tied_risk += at_or_below - below;
            }
        }
        for &i in &by_time[p..q] {
            tree.add(rank[i]);
            inserted += 1;
        }
        p = q;
    }
    Ok(c)
}

/// Harrell's C: over pairs with `time_i < time_j` and an event at `i`, the
/// fraction where `risk_i > risk_j`, counting risk ties as one half.
pub fn c_index(time: &[f64], event: &[bool], risk: &[f64]) -> Result<f64> {
    let counts = if time.len() <= PAIRWISE_LIMIT {
        concordance_pairwise(time, event, risk)?
    } else {
        concordance_sorted(time, event, risk)?
    };
    counts
        .c_index()
        .ok_or_else(|| Error::invalid("no comparable pairs for the C-index"))
}
