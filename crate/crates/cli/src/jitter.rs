//! Slow wander of the mechanical frequency, modelled as an Ornstein–Uhlenbeck process.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::JitterSection;

/// OU process with short-time diffusion `D` (Hz²/s) and stationary std `σ` (Hz).
///
/// The variance grows as D·t at first and saturates at σ², giving a correlation time
/// τ = 2σ²/D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterModel {
    pub diffusion: f64,
    pub saturation: f64,
}

impl From<&JitterSection> for JitterModel {
    fn from(s: &JitterSection) -> Self {
        JitterModel {
            diffusion: s.diffusion_hz2_per_s,
            saturation: s.saturation_hz,
        }
    }
}

impl JitterModel {
    pub fn correlation_time(&self) -> f64 {
        2.0 * self.saturation * self.saturation / self.diffusion
    }

    /// Frequency offsets (Hz) at increasing `times` (s), started from the stationary
    /// distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, times: &[f64]) -> Vec<f64> {
        let tau = self.correlation_time();
        let mut out = Vec::with_capacity(times.len());
        let mut x = self.saturation * rng.sample::<f64, _>(StandardNormal);
        let mut last = times.first().copied().unwrap_or(0.0);
        for &t in times {
            let a = (-(t - last) / tau).exp();
            let z: f64 = rng.sample(StandardNormal);
            x = x * a + self.saturation * (1.0 - a * a).sqrt() * z;
            last = t;
            out.push(x);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn long_run_std_saturates_at_default() {
        let model = JitterModel::from(&JitterSection::default());
        let tau = model.correlation_time();
        // 10⁴ correlation times at 4 samples per τ
        let n = 40_000;
        let times: Vec<f64> = (0..n).map(|k| k as f64 * tau / 4.0).collect();
        let x = model.sample(&mut ChaCha8Rng::seed_from_u64(2024), &times);
        let mean = x.iter().sum::<f64>() / n as f64;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((19.0..=21.0).contains(&std), "{std}");
    }

    #[test]
    fn short_time_spread_follows_diffusion() {
        let model = JitterModel {
            diffusion: 9.0,
            saturation: 20.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let steps: Vec<f64> = (0..20_000)
            .map(|_| {
                let x = model.sample(&mut rng, &[0.0, 1.0]);
                x[1] - x[0]
            })
            .collect();
        let var = steps.iter().map(|d| d * d).sum::<f64>() / steps.len() as f64;
        // 2σ²(1 − e^{−1/τ}) ≈ D·t for t ≪ τ
        assert!((var - 9.0).abs() < 0.5, "{var}");
    }
}
