//! Neumaier-compensated summation. Reductions that must be bit-reproducible
//! collect per-task partials into fixed slots and fold them here in order.

#[derive(Clone, Copy, Debug, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
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

impl Extend<f64> for Neumaier {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for Neumaier {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Neumaier::new();
        s.extend(iter);
        s
    }
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    it.into_iter().collect::<Neumaier>().value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancels_catastrophically() {
        assert_eq!(neumaier_sum([1.0, 1e100, 1.0, -1e100]), 2.0);
        let naive: f64 = [1.0, 1e100, 1.0, -1e100].iter().sum();
        assert_eq!(naive, 0.0);
    }

    proptest! {
        #[test]
        fn matches_exact_integer_sum(xs in proptest::collection::vec(-1_000_000i64..1_000_000, 0..500)) {
            // scaled integers are exact in f64, so the compensated sum must be exact
            let exact: i64 = xs.iter().sum();
            let s = neumaier_sum(xs.iter().map(|&x| x as f64 * 0.125));
            prop_assert_eq!(s, exact as f64 * 0.125);
        }
    }
}
