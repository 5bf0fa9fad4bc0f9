//! Warmup adaptation: dual-averaging step size and windowed diagonal metric.

/// Nesterov dual averaging of `ln ε` towards a target acceptance rate.
#[derive(Debug, Clone)]
pub struct DualAverage {
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    h_bar: f64,
    log_step: f64,
    log_step_avg: f64,
    count: u64,
}

impl DualAverage {
    pub fn new(target: f64, initial_step: f64) -> Self {
        DualAverage {
            target,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            mu: (10.0 * initial_step).ln(),
            h_bar: 0.0,
            log_step: initial_step.ln(),
            log_step_avg: 0.0,
            count: 0,
        }
    }

    pub fn advance(&mut self, accept_prob: f64) {
        self.count += 1;
        let t = self.count as f64;
        let w = 1.0 / (t + self.t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_step = self.mu - t.sqrt() / self.gamma * self.h_bar;
        let eta = t.powf(-self.kappa);
        self.log_step_avg = eta * self.log_step + (1.0 - eta) * self.log_step_avg;
    }

    pub fn step_size(&self) -> f64 {
        self.log_step.exp()
    }

    /// Averaged iterate, used once adaptation ends.
    pub fn adapted_step_size(&self) -> f64 {
        if self.count == 0 {
            self.step_size()
        } else {
            self.log_step_avg.exp()
        }
    }
}

/// Welford accumulator of per-coordinate variances.
#[derive(Debug, Clone)]
pub struct RunningVariance {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        RunningVariance {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample variances shrunk towards `1e-3`, as an inverse metric.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        let w = n / (n + 5.0);
        self.m2
            .iter()
            .map(|s| {
                let var = if self.n > 1 { s / (n - 1.0) } else { 1.0 };
                w * var + 1e-3 * (1.0 - w)
            })
            .collect()
    }

    pub fn reset(&mut self) {
        *self = RunningVariance::new(self.mean.len());
    }
}

const BASE_WINDOW: usize = 25;
const MIN_WARMUP_FOR_METRIC: usize = 20;

/// Warmup phases: an initial 15% fast (step size only) buffer, 75% of
/// metric-adaptation windows of doubling length, and a final 10% step-size
/// buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarmupSchedule {
    n_warmup: usize,
    /// Half-open `[start, end)` iteration ranges.
    windows: Vec<(usize, usize)>,
}

impl WarmupSchedule {
    pub fn new(n_warmup: usize) -> Self {
        if n_warmup < MIN_WARMUP_FOR_METRIC {
            return WarmupSchedule {
                n_warmup,
                windows: Vec::new(),
            };
        }
        let init = n_warmup * 15 / 100;
        let term = n_warmup / 10;
        let end = n_warmup - term;
        let mut windows = Vec::new();
        let mut start = init;
        let mut size = BASE_WINDOW.min(end - init);
        while start < end {
            let mut stop = (start + size).min(end);
            if stop + 2 * size > end {
                stop = end;
            }
            windows.push((start, stop));
            start = stop;
            size *= 2;
        }
        WarmupSchedule { n_warmup, windows }
    }

    pub fn windows(&self) -> &[(usize, usize)] {
        &self.windows
    }

    pub fn in_window(&self, iteration: usize) -> bool {
        self.windows.iter().any(|&(s, e)| (s..e).contains(&iteration))
    }

    pub fn is_window_end(&self, iteration: usize) -> bool {
        self.windows.iter().any(|&(_, e)| e == iteration + 1)
    }

    pub fn n_warmup(&self) -> usize {
        self.n_warmup
    }
}
