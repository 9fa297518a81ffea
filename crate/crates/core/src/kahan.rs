//! Compensated (Kahan–Neumaier) summation.

/// Running sum with a Neumaier compensation term.
///
/// Used wherever the crate accumulates long step/weight series; the
/// compensation keeps relative error near machine precision for sums of
/// 10^7+ terms regardless of magnitude ordering.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensates_small_terms() {
        let mut s = KahanSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn matches_naive_on_benign_input() {
        let xs: Vec<f64> = (1..=100).map(|k| 1.0 / k as f64).collect();
        let kahan: KahanSum = xs.iter().copied().collect();
        let naive: f64 = xs.iter().sum();
        assert!((kahan.value() - naive).abs() < 1e-12);
    }
}
