//! Memory-bounded empirical distribution of inter-packet gaps.
//!
//! Instead of fixed-resolution buckets, the histogram keeps at most `N`
//! *modes*, each summarizing one cluster of gap values as
//! `(min, max, count, sum)`. A new gap either lands inside an existing
//! mode, extends a mode it is proximal to (within `epsilon`), merges two
//! modes whose spacing the extension closed, opens a new mode, or is
//! discarded when the histogram is full. Per-connection state is therefore
//! a few hundred bytes regardless of the gap range, and histograms of
//! different connections can span microseconds or minutes without tuning.

use crate::Ns;

/// Hard compile-time cap on modes; storage is inline, never heap.
pub const MAX_MODES: usize = 16;

/// One dynamic-resolution bucket. `min <= sum/count <= max` and
/// `count >= 1` for every initialized mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mode {
    pub min_ns: Ns,
    pub max_ns: Ns,
    pub count: u32,
    pub sum_ns: Ns,
    /// Sticky flag: some gap counted here followed a non-MTU packet, so
    /// this mode is a candidate to represent the inter-batch gap.
    pub ibg_candidate: bool,
}

impl Mode {
    fn singleton(gap: Ns, candidate: bool) -> Self {
        Mode { min_ns: gap, max_ns: gap, count: 1, sum_ns: gap, ibg_candidate: candidate }
    }

    pub fn mean_ns(&self) -> f64 {
        self.sum_ns as f64 / self.count as f64
    }
}

/// Proximity radius selection.
///
/// The effective radius for a gap `g` is `max(floor_ns, trunc(frac * g))`.
/// A purely absolute radius cannot serve both ~10us data-center gaps and
/// ~70ms WAN gaps, so by default the radius scales with the gap; set
/// `frac = 0` for a fixed absolute radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonPolicy {
    pub floor_ns: Ns,
    pub frac: f64,
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        EpsilonPolicy { floor_ns: 5_000, frac: 0.2 }
    }
}

impl EpsilonPolicy {
    pub const fn absolute(eps_ns: Ns) -> Self {
        EpsilonPolicy { floor_ns: eps_ns, frac: 0.0 }
    }

    pub fn effective(&self, gap: Ns) -> Ns {
        self.floor_ns.max((self.frac * gap as f64) as Ns)
    }
}

/// What a single update did to the histogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    CountedExisting,
    ExtendedBelow,
    ExtendedAbove,
    Merged,
    NewMode,
    Discarded,
}

/// Read-only view of one mode: `(mean, count, candidate)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModeStat {
    pub mean_ns: f64,
    pub count: u64,
    pub candidate: bool,
}

/// Bounded set of ordered, non-overlapping modes plus a discard counter.
///
/// Invariants, restored after every update:
/// - modes ascend by `min_ns` and adjacent modes satisfy `a.max < b.min`;
/// - `sum(count) + discarded` equals the number of gaps offered.
#[derive(Debug, Clone)]
pub struct ModeHistogram {
    modes: [Mode; MAX_MODES],
    len: u8,
    capacity: u8,
    epsilon: EpsilonPolicy,
    discarded: u64,
}

const EMPTY_MODE: Mode = Mode { min_ns: 0, max_ns: 0, count: 0, sum_ns: 0, ibg_candidate: false };

impl ModeHistogram {
    /// `capacity` must be in `1..=MAX_MODES`.
    pub fn new(capacity: usize, epsilon: EpsilonPolicy) -> Self {
        assert!(
            (1..=MAX_MODES).contains(&capacity),
            "mode capacity must be in 1..={MAX_MODES}, got {capacity}"
        );
        ModeHistogram {
            modes: [EMPTY_MODE; MAX_MODES],
            len: 0,
            capacity: capacity as u8,
            epsilon,
            discarded: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity as usize
    }

    pub fn epsilon_policy(&self) -> EpsilonPolicy {
        self.epsilon
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes[..self.len as usize]
    }

    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    /// Gaps offered so far: counted into modes plus discarded.
    pub fn total_offered(&self) -> u64 {
        self.modes().iter().map(|m| m.count as u64).sum::<u64>() + self.discarded
    }

    /// Folds one gap into the histogram.
    ///
    /// Modes are traversed in ascending order and the first mode whose
    /// `[min - eps, max + eps]` range contains the gap receives it; a gap
    /// below `min` or above `max` moves that boundary, and a moved boundary
    /// that leaves the spacing to its neighbor at or below `eps` merges the
    /// two modes (union range, summed counts, candidate flag or-ed). With
    /// no proximal mode the gap opens a new singleton mode, or is discarded
    /// when the histogram is at capacity.
    pub fn update(&mut self, gap: Ns, candidate: bool) -> UpdateOutcome {
        let eps = self.epsilon.effective(gap);
        let len = self.len as usize;
        for i in 0..len {
            let left = self.modes[i].min_ns;
            let right = self.modes[i].max_ns;
            if gap < left.saturating_sub(eps) {
                // Modes ascend; no later mode can be proximal either.
                break;
            }
            if gap <= right.saturating_add(eps) {
                let m = &mut self.modes[i];
                m.count += 1;
                m.sum_ns += gap;
                m.ibg_candidate |= candidate;
                if gap < left {
                    m.min_ns = gap;
                    if i > 0 && self.modes[i].min_ns <= self.modes[i - 1].max_ns.saturating_add(eps) {
                        self.merge_adjacent(i - 1);
                        return UpdateOutcome::Merged;
                    }
                    return UpdateOutcome::ExtendedBelow;
                } else if gap > right {
                    m.max_ns = gap;
                    if i + 1 < self.len as usize
                        && self.modes[i + 1].min_ns <= self.modes[i].max_ns.saturating_add(eps)
                    {
                        self.merge_adjacent(i);
                        return UpdateOutcome::Merged;
                    }
                    return UpdateOutcome::ExtendedAbove;
                }
                return UpdateOutcome::CountedExisting;
            }
        }
        if len < self.capacity as usize {
            let pos = self.modes[..len].partition_point(|m| m.min_ns <= gap);
            self.modes.copy_within(pos..len, pos + 1);
            self.modes[pos] = Mode::singleton(gap, candidate);
            self.len += 1;
            UpdateOutcome::NewMode
        } else {
            self.discarded += 1;
            UpdateOutcome::Discarded
        }
    }

    /// Merges modes `i` and `i + 1` into one spanning both.
    fn merge_adjacent(&mut self, i: usize) {
        let a = self.modes[i];
        let b = self.modes[i + 1];
        self.modes[i] = Mode {
            min_ns: a.min_ns,
            max_ns: a.max_ns.max(b.max_ns),
            count: a.count + b.count,
            sum_ns: a.sum_ns + b.sum_ns,
            ibg_candidate: a.ibg_candidate || b.ibg_candidate,
        };
        let len = self.len as usize;
        self.modes.copy_within(i + 2..len, i + 1);
        self.len -= 1;
    }

    /// Read-only view of the current modes, ascending by mean.
    pub fn snapshot(&self) -> Vec<ModeStat> {
        self.modes()
            .iter()
            .map(|m| ModeStat { mean_ns: m.mean_ns(), count: m.count as u64, candidate: m.ibg_candidate })
            .collect()
    }

    /// Clears modes and the discard counter; capacity and epsilon persist.
    pub fn reset(&mut self) {
        self.len = 0;
        self.discarded = 0;
    }

    /// Rebuilds histogram contents from deserialized parts. Modes must be
    /// ascending and disjoint.
    pub(crate) fn restore(&mut self, modes: &[Mode], discarded: u64) {
        assert!(modes.len() <= self.capacity as usize);
        for (i, m) in modes.iter().enumerate() {
            debug_assert!(i == 0 || modes[i - 1].max_ns < m.min_ns);
            self.modes[i] = *m;
        }
        self.len = modes.len() as u8;
        self.discarded = discarded;
    }

    #[cfg(test)]
    pub(crate) fn push_raw_mode(&mut self, mode: Mode) {
        let len = self.len as usize;
        assert!(len < self.capacity as usize);
        if len > 0 {
            assert!(self.modes[len - 1].max_ns < mode.min_ns);
        }
        self.modes[len] = mode;
        self.len += 1;
    }
}
