//! Closed-form companions to the simulation: the optimal-diffusion delay
//! bound and the suitable chunk-size range extracted from a sweep.

use thiserror::Error;

/// Minimum time for a chunk to reach all `n` peers when every holder
/// pushes `m` copies per round and a round lasts `m` chunk transmissions
/// (rate `s`, chunk size `c`): the population multiplies by `1 + m` each
/// round, so full coverage needs `ln n / ln(1 + m)` rounds of length
/// `m c / s`.
pub fn min_diffusion_delay(m: usize, chunk_size: f64, n: usize, stream_rate: f64) -> f64 {
    assert!(m >= 1 && n >= 1);
    assert!(chunk_size > 0.0 && stream_rate > 0.0);
    let m_f = m as f64;
    m_f * chunk_size * (n as f64).ln() / ((1.0 + m_f).ln() * stream_rate)
}

#[derive(Debug, Error)]
pub enum RangeError {
    #[error("need at least two sweep points, got {0}")]
    TooFewPoints(usize),
    #[error("sweep point {index} is unusable: {reason}")]
    BadPoint { index: usize, reason: String },
    #[error("miss ratio never crosses {threshold} ({which} bound not bracketed)")]
    NotBracketed { which: &'static str, threshold: f64 },
}

/// Chunk sizes inside which the scheme both keeps losses acceptable and
/// has stopped improving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuitableRange {
    /// Smallest chunk size with miss ratio at or below the loss threshold.
    pub c_low: f64,
    /// Chunk size beyond which the miss ratio is already negligible, so
    /// growing chunks further only buys delay.
    pub c_high: f64,
}

/// Finds where the interpolated miss-ratio curve first drops below
/// `threshold`. Interpolation is linear in `ln c` because sweeps space
/// chunk sizes geometrically.
fn first_crossing(
    points: &[(f64, f64)],
    threshold: f64,
    which: &'static str,
) -> Result<f64, RangeError> {
    if points[0].1 <= threshold {
        return Ok(points[0].0);
    }
    for w in points.windows(2) {
        let ((c0, m0), (c1, m1)) = (w[0], w[1]);
        if m1 <= threshold {
            let t = (threshold - m0) / (m1 - m0);
            return Ok((c0.ln() + t * (c1.ln() - c0.ln())).exp());
        }
    }
    Err(RangeError::NotBracketed { which, threshold })
}

/// Extracts the suitable chunk-size range from `(chunk_size, miss_ratio)`
/// sweep points. Points are sorted by chunk size internally.
pub fn suitable_range(
    points: &[(f64, f64)],
    theta_loss: f64,
    theta_plateau: f64,
) -> Result<SuitableRange, RangeError> {
    if points.len() < 2 {
        return Err(RangeError::TooFewPoints(points.len()));
    }
    let mut pts = points.to_vec();
    for (i, (c, m)) in pts.iter().enumerate() {
        if !(*c > 0.0) || !c.is_finite() {
            return Err(RangeError::BadPoint {
                index: i,
                reason: format!("chunk size {c} must be positive"),
            });
        }
        if !(0.0..=1.0).contains(m) {
            return Err(RangeError::BadPoint {
                index: i,
                reason: format!("miss ratio {m} outside [0, 1]"),
            });
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let c_low = first_crossing(&pts, theta_loss, "loss")?;
    let c_high = first_crossing(&pts, theta_plateau, "plateau")?;
    Ok(SuitableRange { c_low, c_high })
}
