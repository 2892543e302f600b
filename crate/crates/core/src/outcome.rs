//! Outcome tuples, enumeration, and complex-weighted outcome distributions.

use std::collections::BTreeMap;

use crate::linalg::C64;

/// Iterates every tuple of a mixed-radix lattice in lexicographic order
/// (last position fastest).
#[derive(Clone, Debug)]
pub struct Lattice {
    radices: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Lattice {
    pub fn new(radices: &[usize]) -> Self {
        let next = if radices.contains(&0) {
            None
        } else {
            Some(vec![0; radices.len()])
        };
        Self {
            radices: radices.to_vec(),
            next,
        }
    }

    /// `radix^len` tuples.
    pub fn uniform(radix: usize, len: usize) -> Self {
        Self::new(&vec![radix; len])
    }

    pub fn size(&self) -> usize {
        self.radices.iter().product()
    }
}

impl Iterator for Lattice {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut pos = succ.len();
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            succ[pos] += 1;
            if succ[pos] < self.radices[pos] {
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(current)
    }
}

/// Map from outcome tuples to complex weights.
///
/// Keys are flat index vectors; the engines document their layout. Iteration
/// order is the key order, so sums are reproducible.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OutcomeDistribution {
    weights: BTreeMap<Vec<usize>, C64>,
}

impl OutcomeDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: Vec<usize>, w: C64) {
        self.weights.insert(key, w);
    }

    /// Adds `w` to the weight at `key`.
    pub fn accumulate(&mut self, key: Vec<usize>, w: C64) {
        *self.weights.entry(key).or_insert(C64::new(0.0, 0.0)) += w;
    }

    pub fn get(&self, key: &[usize]) -> C64 {
        self.weights.get(key).copied().unwrap_or(C64::new(0.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<usize>, &C64)> {
        self.weights.iter()
    }

    pub fn total(&self) -> C64 {
        self.weights.values().sum()
    }

    /// Sums out every position not listed in `keep`; the new key lists the
    /// kept positions in the given order.
    pub fn marginalize(&self, keep: &[usize]) -> OutcomeDistribution {
        let mut out = OutcomeDistribution::new();
        for (k, w) in &self.weights {
            out.accumulate(keep.iter().map(|&p| k[p]).collect(), *w);
        }
        out
    }

    /// Largest imaginary part among the weights.
    pub fn max_imag(&self) -> f64 {
        self.weights.values().map(|w| w.im.abs()).fold(0.0, f64::max)
    }

    /// Most negative real part (0 if none negative).
    pub fn min_real(&self) -> f64 {
        self.weights.values().map(|w| w.re).fold(0.0, f64::min)
    }

    /// Largest `|self(k) − other(k)|` over the union of keys.
    pub fn max_deviation(&self, other: &OutcomeDistribution) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, w) in &self.weights {
            worst = worst.max((w - other.get(k)).norm());
        }
        for (k, w) in &other.weights {
            if !self.weights.contains_key(k) {
                worst = worst.max(w.norm());
            }
        }
        worst
    }
}

impl FromIterator<(Vec<usize>, C64)> for OutcomeDistribution {
    fn from_iter<I: IntoIterator<Item = (Vec<usize>, C64)>>(iter: I) -> Self {
        let mut d = OutcomeDistribution::new();
        for (k, w) in iter {
            d.accumulate(k, w);
        }
        d
    }
}

/// Relative violation `|a − b| / max(|a|, |b|)`, or `None` when both are
/// below `floor`.
pub fn relative_violation(a: C64, b: C64, floor: f64) -> Option<f64> {
    let scale = a.norm().max(b.norm());
    if scale < floor {
        None
    } else {
        Some((a - b).norm() / scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_order_and_size() {
        let all: Vec<_> = Lattice::new(&[2, 3]).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 0]);
        assert_eq!(all[1], vec![0, 1]);
        assert_eq!(all[5], vec![1, 2]);
        assert_eq!(Lattice::uniform(2, 0).count(), 1);
        assert_eq!(Lattice::new(&[2, 0]).count(), 0);
        assert_eq!(Lattice::uniform(3, 4).size(), 81);
    }

    #[test]
    fn marginalization() {
        let d: OutcomeDistribution = Lattice::uniform(2, 2)
            .map(|k| {
                let w = C64::new((k[0] * 2 + k[1]) as f64, 0.0);
                (k, w)
            })
            .collect();
        let m = d.marginalize(&[1]);
        assert_eq!(m.get(&[0]), C64::new(2.0, 0.0));
        assert_eq!(m.get(&[1]), C64::new(4.0, 0.0));
        assert_eq!(m.total(), d.total());
        let swapped = d.marginalize(&[1, 0]);
        assert_eq!(swapped.get(&[0, 1]), d.get(&[1, 0]));
    }

    #[test]
    fn violation_metric() {
        let one = C64::new(1.0, 0.0);
        assert_eq!(relative_violation(one, one, 1e-14), Some(0.0));
        assert_eq!(relative_violation(C64::new(0.0, 0.0), C64::new(1e-16, 0.0), 1e-14), None);
        assert!((relative_violation(one, C64::new(0.5, 0.0), 0.0).unwrap() - 0.5).abs() < 1e-15);
    }
}
