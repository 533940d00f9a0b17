//! Closed-form results for the linear birth-death process with individual
//! birth rate `b` and death rate `d`.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BdError {
    #[error("domain error: {0}")]
    Domain(String),
}

fn domain(msg: impl Into<String>) -> BdError {
    BdError::Domain(msg.into())
}

/// Individual birth and death rates of a linear birth-death chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdParams {
    b: f64,
    d: f64,
}

impl BdParams {
    pub fn new(b: f64, d: f64) -> Result<Self, BdError> {
        if !(b > 0.0 && b.is_finite()) || !(d > 0.0 && d.is_finite()) {
            return Err(domain(format!("rates must be positive, got b={b}, d={d}")));
        }
        Ok(BdParams { b, d })
    }

    pub fn birth(&self) -> f64 {
        self.b
    }

    pub fn death(&self) -> f64 {
        self.d
    }

    /// `(d/b)^n`; `exp` underflows to exactly 0 for large `n` when `d < b`.
    fn ratio_pow(&self, n: f64) -> f64 {
        (n * (self.d / self.b).ln()).exp()
    }
}

/// Probability that the chain started at `j` reaches `k` before `i`.
pub fn hitting_prob(bd: BdParams, i: u64, j: u64, k: u64) -> Result<f64, BdError> {
    if !(i <= j && j <= k && i < k) {
        return Err(domain(format!("need i <= j <= k and i < k, got ({i}, {j}, {k})")));
    }
    if j == i {
        return Ok(0.0);
    }
    if j == k {
        return Ok(1.0);
    }
    let (up, span) = ((j - i) as f64, (k - i) as f64);
    if bd.b == bd.d {
        return Ok(up / span);
    }
    let (num, den) = (1.0 - bd.ratio_pow(up), 1.0 - bd.ratio_pow(span));
    // Subcritical chains overflow both powers; the ratio then tends to
    // (d/b)^{up - span}.
    if !num.is_finite() || !den.is_finite() {
        return Ok(bd.ratio_pow(up - span).min(1.0));
    }
    Ok(num / den)
}

/// Probability that the chain started at `i` is extinct by time `t`.
pub fn extinction_cdf(bd: BdParams, i: u64, t: f64) -> Result<f64, BdError> {
    if bd.b == bd.d {
        return Err(domain("critical case b = d is not covered"));
    }
    if !(t >= 0.0) {
        return Err(domain(format!("time must be nonnegative, got {t}")));
    }
    if i == 0 {
        return Ok(1.0);
    }
    let (b, d) = (bd.b, bd.d);
    let e = ((d - b) * t).exp();
    let single = d * (1.0 - e) / (b - d * e);
    Ok(single.powf(i as f64))
}

/// Probability that the chain started at `i` never goes extinct.
pub fn survival_prob(bd: BdParams, i: u64) -> Result<f64, BdError> {
    if bd.b <= bd.d {
        return Err(domain(format!("need b > d, got b={}, d={}", bd.b, bd.d)));
    }
    Ok(1.0 - bd.ratio_pow(i as f64))
}

/// Leading-order time for a surviving chain to reach size `n`.
pub fn hitting_time_scale(bd: BdParams, n: f64) -> Result<f64, BdError> {
    if bd.b <= bd.d {
        return Err(domain(format!("need b > d, got b={}, d={}", bd.b, bd.d)));
    }
    if !(n >= 2.0) {
        return Err(domain(format!("need N >= 2, got {n}")));
    }
    Ok(n.ln() / (bd.b - bd.d))
}
