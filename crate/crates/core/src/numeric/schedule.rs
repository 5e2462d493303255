/// Exponential interpolation from `start` at step 0 to `end` at `total`.
pub fn exponential_lr(start: f64, end: f64, step: u64, total: u64) -> f64 {
    if total == 0 {
        return start;
    }
    let frac = (step as f64 / total as f64).clamp(0.0, 1.0);
    if frac == 0.0 {
        return start;
    }
    if frac == 1.0 {
        return end;
    }
    (start.ln() * (1.0 - frac) + end.ln() * frac).exp()
}
