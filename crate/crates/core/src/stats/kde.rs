use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`
    #[default]
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    #[serde(skip)]
    samples: Vec<f64>,
}

pub const GRID_POINTS: usize = 512;

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let sd = if samples.len() > 1 {
        (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return 1.0,
    };
    0.9 * spread * n.powf(-0.2)
}

fn gaussian_sum(samples: &[f64], h: f64, x: f64) -> f64 {
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    norm * samples.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>()
}

/// Gaussian kernel density on a 512-point grid over `[min - 3h, max + 3h]`.
pub fn kde(samples: &[f64], rule: BandwidthRule) -> Result<DensityEstimate, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let h = match rule {
        BandwidthRule::Silverman => silverman_bandwidth(samples),
        BandwidthRule::Fixed(h) if h > 0.0 && h.is_finite() => h,
        BandwidthRule::Fixed(h) => return Err(StatsError::InvalidBandwidth(h)),
    };
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let density = grid.iter().map(|x| gaussian_sum(samples, h, *x)).collect();
    Ok(DensityEstimate { grid, density, bandwidth: h, samples: samples.to_vec() })
}

impl DensityEstimate {
    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid.windows(2).zip(self.density.windows(2)).map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0).sum()
    }

    /// Density at an arbitrary point.
    pub fn evaluate(&self, x: f64) -> f64 {
        gaussian_sum(&self.samples, self.bandwidth, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_value_peaks_there() {
        let d = kde(&[4.0; 10], BandwidthRule::Silverman).unwrap();
        assert_eq!(d.bandwidth, 1.0);
        let peak = d.density.iter().cloned().fold(f64::MIN, f64::max);
        let i = d.density.iter().position(|v| *v == peak).unwrap();
        assert!((d.grid[i] - 4.0).abs() < 0.02);
        assert!((d.integral() - 1.0).abs() < 0.02);
    }

    #[test]
    fn two_points_symmetric() {
        let d = kde(&[0.0, 10.0], BandwidthRule::Fixed(1.0)).unwrap();
        for i in 0..GRID_POINTS {
            assert!((d.density[i] - d.density[GRID_POINTS - 1 - i]).abs() < 1e-12);
        }
        assert!((d.integral() - 1.0).abs() < 0.02);
        assert!(d.evaluate(0.0) > d.evaluate(5.0));
    }

    #[test]
    fn errors() {
        assert_eq!(kde(&[], BandwidthRule::Silverman), Err(StatsError::EmptySample));
        assert!(kde(&[1.0], BandwidthRule::Fixed(0.0)).is_err());
    }

    #[test]
    fn silverman_known_value() {
        let s: Vec<f64> = (1..=5).map(f64::from).collect();
        // sd = 1.5811, IQR/1.34 = 1.4925
        let h = silverman_bandwidth(&s);
        assert!((h - 0.9 * (2.0 / 1.34) * 5f64.powf(-0.2)).abs() < 1e-12);
    }
}
