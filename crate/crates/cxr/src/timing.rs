use std::time::Instant;

/// Runs `work` and returns its result with the elapsed monotonic seconds.
pub fn timed<T>(work: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = work();
    (out, start.elapsed().as_secs_f64())
}
