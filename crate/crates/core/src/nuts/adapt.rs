//! Warmup adaptation: dual-averaging step size and windowed diagonal metric.

/// Nesterov dual averaging of `log ε` toward a target acceptance statistic.
#[derive(Debug, Clone)]
pub struct DualAverage {
    target: f64,
    mu: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAverage {
    pub fn new(target: f64, initial_step: f64) -> Self {
        DualAverage {
            target,
            mu: (10.0 * initial_step).ln(),
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            counter: 0.0,
            s_bar: 0.0,
            x_bar: 0.0,
        }
    }

    /// Restarts the averages around a new initial step size.
    pub fn restart(&mut self, initial_step: f64) {
        self.mu = (10.0 * initial_step).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feeds one acceptance statistic; returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let accept_stat = accept_stat.min(1.0);
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept_stat);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x;
        x.exp()
    }

    /// Step size to freeze after warmup.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford running variance.
#[derive(Debug, Clone)]
struct RunningVariance {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    fn new(dim: usize) -> Self {
        RunningVariance {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn add(&mut self, x: &[f64]) {
        self.n += 1.0;
        for i in 0..x.len() {
            let delta = x[i] - self.mean[i];
            self.mean[i] += delta / self.n;
            self.m2[i] += delta * (x[i] - self.mean[i]);
        }
    }

    fn restart(&mut self) {
        self.n = 0.0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Warmup schedule: a fast initial buffer for the step size, slow windows
/// of doubling length that re-estimate the diagonal metric, and a fast
/// terminal buffer.
#[derive(Debug, Clone)]
pub struct WindowedMetric {
    num_warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_size: usize,
    next_window: usize,
    counter: usize,
    estimator: RunningVariance,
    enabled: bool,
}

impl WindowedMetric {
    pub const INIT_BUFFER: usize = 75;
    pub const TERM_BUFFER: usize = 50;
    pub const BASE_WINDOW: usize = 25;

    pub fn new(dim: usize, num_warmup: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut window) =
            (Self::INIT_BUFFER, Self::TERM_BUFFER, Self::BASE_WINDOW);
        let enabled = num_warmup >= 20;
        if enabled && init_buffer + window + term_buffer > num_warmup {
            init_buffer = (0.15 * num_warmup as f64) as usize;
            term_buffer = (0.1 * num_warmup as f64) as usize;
            window = num_warmup - (init_buffer + term_buffer);
        }
        WindowedMetric {
            num_warmup,
            init_buffer,
            term_buffer,
            window_size: window,
            next_window: init_buffer + window - 1,
            counter: 0,
            estimator: RunningVariance::new(dim),
            enabled,
        }
    }

    fn in_window(&self) -> bool {
        self.counter >= self.init_buffer
            && self.counter < self.num_warmup - self.term_buffer
            && self.counter != self.num_warmup
    }

    fn end_of_window(&self) -> bool {
        self.counter == self.next_window && self.counter != self.num_warmup
    }

    fn compute_next_window(&mut self) {
        let last = self.num_warmup - self.term_buffer - 1;
        if self.next_window == last {
            return;
        }
        self.window_size *= 2;
        self.next_window = self.counter + self.window_size;
        if self.next_window != last && self.next_window + 2 * self.window_size >= self.num_warmup - self.term_buffer {
            self.next_window = last;
        }
    }

    /// Records a warmup draw. Returns true when `inv_metric` was updated,
    /// in which case the step size should be re-initialized.
    pub fn learn(&mut self, inv_metric: &mut [f64], q: &[f64]) -> bool {
        if !self.enabled {
            return false;
        }
        if self.in_window() {
            self.estimator.add(q);
        }
        if self.end_of_window() {
            self.compute_next_window();
            let n = self.estimator.n;
            if n > 1.0 {
                for i in 0..inv_metric.len() {
                    let var = self.estimator.m2[i] / (n - 1.0);
                    inv_metric[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                }
            }
            self.estimator.restart();
            self.counter += 1;
            return true;
        }
        self.counter += 1;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_averaging_moves_toward_target() {
        let mut da = DualAverage::new(0.8, 1.0);
        // acceptance too low: step size must shrink
        let mut eps = 1.0;
        for _ in 0..50 {
            eps = da.update(0.2);
        }
        assert!(eps < 1.0);
        let mut da = DualAverage::new(0.8, 1.0);
        for _ in 0..50 {
            eps = da.update(1.0);
        }
        assert!(eps > 1.0);
        assert!(da.final_step().is_finite());
    }

    #[test]
    fn standard_windows_for_1000_warmup() {
        let mut w = WindowedMetric::new(1, 1000);
        let mut ends = Vec::new();
        let mut metric = [1.0];
        for i in 0..1000 {
            if w.learn(&mut metric, &[i as f64]) {
                ends.push(i);
            }
        }
        // 75 + 25, 50, 100, 200, then the final stretched window up to 950.
        assert_eq!(ends, vec![99, 149, 249, 449, 949]);
    }

    #[test]
    fn short_warmup_uses_proportional_buffers() {
        let mut w = WindowedMetric::new(1, 100);
        let mut ends = Vec::new();
        let mut metric = [1.0];
        for i in 0..100 {
            if w.learn(&mut metric, &[(i % 7) as f64]) {
                ends.push(i);
            }
        }
        assert_eq!(ends, vec![89]);
        assert!(metric[0] > 1.0);
    }
}
