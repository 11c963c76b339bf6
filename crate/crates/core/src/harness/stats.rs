use statrs::distribution::{ContinuousCDF, StudentsT};

/// Sample mean with a two-sided Student-t confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// Half width of the confidence interval.
    pub half_width: f64,
}

impl Summary {
    pub fn ci_lo(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn ci_hi(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.std_dev / (self.n as f64).sqrt()
        }
    }

    pub fn width(&self) -> f64 {
        2.0 * self.half_width
    }
}

/// Two-sided `level` quantile of Student's t with `df` degrees of freedom.
pub fn t_critical(level: f64, df: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    t.inverse_cdf(0.5 + level / 2.0)
}

pub fn summarize_at(samples: &[f64], level: f64) -> Summary {
    let n = samples.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            std_dev: f64::NAN,
            half_width: f64::NAN,
        };
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Summary {
            n,
            mean,
            std_dev: 0.0,
            half_width: 0.0,
        };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std_dev = var.sqrt();
    Summary {
        n,
        mean,
        std_dev,
        half_width: t_critical(level, n - 1) * std_dev / (n as f64).sqrt(),
    }
}

/// 95% interval.
pub fn summarize(samples: &[f64]) -> Summary {
    summarize_at(samples, 0.95)
}
