//! Compensated (Neumaier) summation.
//!
//! Pairwise score sums run over up to 10^4 addends per relevant document;
//! plain accumulation would make results visibly dependent on iteration
//! order. The compensated form keeps permutations of the same addends
//! within ~1e-16 of each other.

/// Running sum with a Neumaier compensation term.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a slice.
pub fn sum(values: &[f64]) -> f64 {
    values.iter().copied().collect::<KahanSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancellation() {
        let mut acc = KahanSum::new();
        acc.add(1.0);
        acc.add(1e100);
        acc.add(1.0);
        acc.add(-1e100);
        assert_eq!(acc.value(), 2.0);
    }

    #[test]
    fn permutation_stable() {
        let mut values: Vec<f64> = (0..10_000)
            .map(|i| ((i * 2654435761_u64 as usize) % 1000) as f64 * 1e-7 - 3e-5)
            .collect();
        let forward = sum(&values);
        values.reverse();
        let backward = sum(&values);
        assert!((forward - backward).abs() < 1e-12);
    }
}
