//! Deterministic summation and streaming moment accumulation.

/// Neumaier-compensated sum, evaluated in slice order.
pub fn sum(xs: &[f64]) -> f64 {
    let mut acc = Compensated::default();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Running compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
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

/// One-pass central moments up to fourth order (Terriberry's update),
/// mergeable so partial results can be combined in a fixed order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::default();
        for &x in xs {
            m.push(x);
        }
        m
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2 - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3 + other.m3 + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        Self {
            n: self.n + other.n,
            mean: self.mean + delta * nb / n,
            m2,
            m3,
            m4,
        }
    }

    /// Central moment with divisor `n`.
    pub fn central2(&self) -> f64 {
        self.m2 / self.n as f64
    }

    pub fn central4(&self) -> f64 {
        self.m4 / self.n as f64
    }

    /// Bessel-corrected variance.
    pub fn sample_variance(&self) -> f64 {
        self.m2 / (self.n as f64 - 1.0)
    }

    /// Sum of squared deviations from the mean.
    pub fn sum_sq(&self) -> f64 {
        self.m2
    }
}

/// Linear-interpolation percentile (`p` in `[0, 1]`) of already sorted data.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Weighted mean and weighted variance (weights need not be normalised).
pub fn weighted_mean_var(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let total = sum(weights);
    let mut acc = Compensated::default();
    for (v, w) in values.iter().zip(weights) {
        acc.add(v * w);
    }
    let mean = acc.value() / total;
    let mut dev = Compensated::default();
    for (v, w) in values.iter().zip(weights) {
        dev.add(w * (v - mean) * (v - mean));
    }
    (mean, dev.value() / total)
}
