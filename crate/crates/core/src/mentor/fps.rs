use std::time::Instant;

/// Frame-rate meter: the rate is the number of intervals divided by the time
/// between the first and last tick, so N evenly spaced frames spanning
/// `T·(N−1)/N` seconds read as `N/T`.
#[derive(Debug, Clone, Default)]
pub struct FpsMeter {
    first: Option<Instant>,
    last: Option<Instant>,
    count: u64,
}

impl FpsMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tick(&mut self) {
        self.tick_at(Instant::now());
    }

    pub fn tick_at(&mut self, at: Instant) {
        self.first.get_or_insert(at);
        self.last = Some(at);
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// `None` until two frames have been seen.
    pub fn fps(&self) -> Option<f64> {
        let span = self.last?.duration_since(self.first?).as_secs_f64();
        (self.count >= 2 && span > 0.0).then(|| (self.count - 1) as f64 / span)
    }
}
