//! Log-space numeric helpers shared by the likelihood estimators.

/// Natural log of n!.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    statrs::function::gamma::ln_gamma(n as f64 + 1.0)
}

/// Natural log of the binomial coefficient C(n, k).
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// k * ln(p) with the convention 0 * ln(0) = 0.
pub fn pow_ln(p: f64, k: u64) -> f64 {
    if k == 0 {
        0.0
    } else if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        k as f64 * p.ln()
    }
}

/// log(sum(exp(x))) guarded against empty input and -inf entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Streaming accumulator for log-sum-exp, used where building the full
/// vector of terms would be wasteful.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, value: f64) {
        if value == f64::NEG_INFINITY {
            return;
        }
        if value > self.max {
            if self.max > f64::NEG_INFINITY {
                self.sum = self.sum * (self.max - value).exp() + 1.0;
            } else {
                self.sum = 1.0;
            }
            self.max = value;
        } else {
            self.sum += (value - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorials_match_exact_values() {
        let exact = [1.0f64, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0];
        for (n, &f) in exact.iter().enumerate() {
            assert!((ln_factorial(n as u64) - f.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn choose_matches_pascal() {
        assert!((ln_choose(5, 2).exp() - 10.0).abs() < 1e-9);
        assert!((ln_choose(10, 0).exp() - 1.0).abs() < 1e-12);
        assert_eq!(ln_choose(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn pow_ln_zero_conventions() {
        assert_eq!(pow_ln(0.0, 0), 0.0);
        assert_eq!(pow_ln(0.0, 3), f64::NEG_INFINITY);
        assert!((pow_ln(0.5, 2) - (0.25f64).ln()).abs() < 1e-14);
    }

    #[test]
    fn log_sum_exp_agrees_with_direct_sum() {
        let xs = [-3.0f64, -1.5, -0.2];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum();
        assert!((log_sum_exp(&xs) - direct.ln()).abs() < 1e-12);

        let mut acc = LogSumExp::new();
        for x in xs {
            acc.add(x);
        }
        assert!((acc.value() - direct.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_empty_is_neg_inf() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(LogSumExp::new().value(), f64::NEG_INFINITY);
    }
}
