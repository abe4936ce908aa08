use nalgebra::{DMatrix, DVector};

/// Nesterov dual averaging of the log step size toward a target acceptance
/// rate.
#[derive(Debug, Clone)]
pub struct DualAverage {
    target: f64,
    mu: f64,
    log_step: f64,
    log_step_avg: f64,
    hbar: f64,
    count: u64,
}

const T0: f64 = 10.0;
const GAMMA: f64 = 0.05;
const KAPPA: f64 = 0.75;

impl DualAverage {
    pub fn new(target: f64, initial_step: f64) -> Self {
        Self::with_center(target, initial_step, initial_step.ln())
    }

    /// Like [`DualAverage::new`] but shrinking toward log step `center`.
    pub fn with_center(target: f64, initial_step: f64, center: f64) -> Self {
        Self {
            target,
            mu: center,
            log_step: initial_step.ln(),
            log_step_avg: initial_step.ln(),
            hbar: 0.0,
            count: 1,
        }
    }

    pub fn advance(&mut self, accept_prob: f64) {
        let n = self.count as f64;
        let w = 1.0 / (n + T0);
        self.hbar = (1.0 - w) * self.hbar + w * (self.target - accept_prob);
        self.log_step = self.mu - self.hbar * n.sqrt() / GAMMA;
        let eta = n.powf(-KAPPA);
        self.log_step_avg = eta * self.log_step + (1.0 - eta) * self.log_step_avg;
        self.count += 1;
    }

    pub fn current(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn adapted(&self) -> f64 {
        self.log_step_avg.exp()
    }
}

/// Iteration indices (exclusive ends) at which the proposal covariance is
/// re-estimated during warmup: a fast initial buffer, doubling slow windows,
/// and a terminal buffer for step-size-only adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmupSchedule {
    pub window_start: usize,
    pub window_ends: Vec<usize>,
}

impl WarmupSchedule {
    pub fn new(n_warmup: usize) -> Self {
        let (mut init, mut term, mut base) = (75usize, 50usize, 25usize);
        if n_warmup < 20 {
            return Self {
                window_start: n_warmup,
                window_ends: Vec::new(),
            };
        }
        if init + term + base > n_warmup {
            init = n_warmup * 15 / 100;
            term = n_warmup / 10;
            base = n_warmup - init - term;
        }
        let last = n_warmup - term;
        let mut ends = Vec::new();
        let mut start = init;
        let mut size = base;
        while start < last {
            let mut end = start + size;
            // absorb a final window that would be too short to double into
            if end + 2 * size > last {
                end = last;
            }
            ends.push(end);
            start = end;
            size *= 2;
        }
        Self {
            window_start: init,
            window_ends: ends,
        }
    }

    pub fn in_window(&self, iter: usize) -> bool {
        iter >= self.window_start && self.window_ends.last().is_some_and(|&e| iter < e)
    }

    pub fn is_window_end(&self, iter: usize) -> bool {
        self.window_ends.contains(&(iter + 1))
    }
}

/// Running mean and covariance (Welford).
#[derive(Debug, Clone)]
pub struct Welford {
    n: usize,
    mean: DVector<f64>,
    m2: DMatrix<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(dim),
            m2: DMatrix::zeros(dim, dim),
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let x = DVector::from_column_slice(x);
        let delta = &x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = &x - &self.mean;
        self.m2 += &delta * delta2.transpose();
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample covariance shrunk toward `1e-3 * I`, the usual regularisation
    /// for short adaptation windows.
    pub fn regularized_covariance(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        let n = self.n as f64;
        let cov = &self.m2 / (n - 1.0).max(1.0);
        cov * (n / (n + 5.0)) + DMatrix::identity(d, d) * (1e-3 * 5.0 / (n + 5.0))
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.fill(0.0);
        self.m2.fill(0.0);
    }
}
