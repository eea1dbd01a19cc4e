use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-vertex observation flags (`true` = observed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask(Vec<bool>);

impl ObservationMask {
    pub fn new(flags: Vec<bool>) -> Self {
        Self(flags)
    }

    pub fn all(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn none(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, v: usize) -> bool {
        self.0[v]
    }

    pub fn set(&mut self, v: usize, value: bool) {
        self.0[v] = value;
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn flags(&self) -> &[bool] {
        &self.0
    }

    /// Indices of observed vertices, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn and(&self, other: &ObservationMask) -> ObservationMask {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| *a && *b).collect())
    }

    pub fn is_subset_of(&self, other: &ObservationMask) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| !*a || *b)
    }

    /// Per-entry mask for a `C`-channel vertex-interleaved vector.
    pub fn replicate(&self, channels: usize) -> Vec<bool> {
        self.0
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b, channels))
            .collect()
    }
}

/// Seeded random permutation of `0..n`, used as a selection priority.
pub fn random_priority(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// The first `k` observed vertices in `priority` order.
pub fn select_by_priority(visible: &ObservationMask, k: usize, priority: &[usize]) -> ObservationMask {
    let mut out = ObservationMask::none(visible.len());
    let mut taken = 0;
    for &v in priority {
        if taken == k {
            break;
        }
        if visible.get(v) {
            out.set(v, true);
            taken += 1;
        }
    }
    out
}

/// Uniformly random subset of `min(k, #visible)` visible vertices, fixed by `seed`.
pub fn residual_mask_select(visible: &ObservationMask, k: usize, seed: u64) -> ObservationMask {
    assert!(k > 0, "residual mask size must be positive");
    if k >= visible.count() {
        return visible.clone();
    }
    select_by_priority(visible, k, &random_priority(visible.len(), seed))
}
