//! Seeded synthetic hyperspectral scenes with known ground truth.
//!
//! A scene is built from correlated endmember spectra, spatially correlated
//! abundance maps on the unit simplex, the noiseless linear mixture and
//! additive white Gaussian noise calibrated to a global SNR. Every output is a
//! pure function of the [`SceneSpec`], including its seed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};
use crate::unmixing::{AbundanceTensor, EndmemberMatrix};

/// Accepted distance between the requested and the achieved endmember coherence.
pub const COHERENCE_TOLERANCE: f64 = 0.05;
const MAX_ATTEMPTS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    /// Smoothed Gaussian random fields, squared and normalized per pixel.
    GaussFields,
    /// Pure materials on a grid of square blocks.
    Blocks,
    /// Sums of Gaussian blobs over a small floor, normalized per pixel.
    Bumps,
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss-fields" => Ok(Pattern::GaussFields),
            "blocks" => Ok(Pattern::Blocks),
            "bumps" => Ok(Pattern::Bumps),
            other => Err(Error::Parameter(format!(
                "unknown pattern '{other}' (expected gauss-fields, blocks or bumps)"
            ))),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pattern::GaussFields => "gauss-fields",
            Pattern::Blocks => "blocks",
            Pattern::Bumps => "bumps",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub endmembers: usize,
    pub bands: usize,
    pub pattern: Pattern,
    /// Spatial correlation length in pixels.
    pub smoothness: f64,
    /// Target maximum pairwise cosine similarity between endmember spectra.
    pub coherence: f64,
    /// Global SNR in dB; `None` disables the noise.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.endmembers == 0 || self.bands == 0 {
            return Err(Error::Parameter("scene dimensions must all be at least 1".into()));
        }
        if self.bands < self.endmembers {
            return Err(Error::Parameter(format!(
                "need at least as many bands ({}) as endmembers ({})",
                self.bands, self.endmembers
            )));
        }
        if !self.smoothness.is_finite() || self.smoothness <= 0.0 {
            return Err(Error::Parameter(format!("smoothness must be positive, got {}", self.smoothness)));
        }
        if !(0.0..1.0).contains(&self.coherence) {
            return Err(Error::Parameter(format!("coherence must lie in [0, 1), got {}", self.coherence)));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::Parameter("snr_db must be finite; omit it to disable noise".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub abundances: AbundanceTensor,
    pub endmembers: EndmemberMatrix,
    pub clean: Tensor3,
    pub noisy: Tensor3,
    /// SNR of the actual noise draw; `+∞` for a noiseless scene.
    pub realized_snr_db: f64,
}

/// Independent generator streams derived from one scene seed.
fn stream_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian(center: f64, width: f64, x: f64) -> f64 {
    (-(x - center).powi(2) / (2.0 * width * width)).exp()
}

/// Largest cosine similarity between two distinct columns.
pub fn max_pairwise_cosine(columns: &[Vec<f64>]) -> f64 {
    let norms: Vec<f64> = columns.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut best = 0.0f64;
    for a in 0..columns.len() {
        for b in a + 1..columns.len() {
            let d: f64 = columns[a].iter().zip(&columns[b]).map(|(x, y)| x * y).sum();
            best = best.max(d / (norms[a] * norms[b]));
        }
    }
    best
}

/// Smooth nonnegative spectra whose largest pairwise cosine similarity is
/// within [`COHERENCE_TOLERANCE`] of `coherence`.
///
/// Each spectrum blends a shared broad baseline with its own narrow absorption
/// feature; the blend weight is bisected to hit the requested similarity.
pub fn gen_endmembers(bands: usize, count: usize, coherence: f64, seed: u64) -> Result<EndmemberMatrix> {
    if count == 0 || bands < count {
        return Err(Error::Parameter(format!(
            "need 1 <= endmembers <= bands, got {count} endmembers and {bands} bands"
        )));
    }
    if !(0.0..1.0).contains(&coherence) {
        return Err(Error::Parameter(format!("coherence must lie in [0, 1), got {coherence}")));
    }
    let l = bands as f64;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, attempt));
        let baseline: Vec<f64> = {
            let bumps: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| (rng.random_range(0.0..l), rng.random_range(l / 8.0..l / 4.0), rng.random_range(0.1..0.4)))
                .collect();
            (0..bands)
                .map(|b| 0.15 + bumps.iter().map(|&(c, w, h)| h * gaussian(c, w.max(0.5), b as f64)).sum::<f64>())
                .collect()
        };
        if count == 1 {
            let peak = baseline.iter().cloned().fold(0.0, f64::max);
            let column: Vec<f64> = baseline.iter().map(|v| 0.8 * v / peak).collect();
            return EndmemberMatrix::new(Matrix::from_columns(&[column])?);
        }

        let spacing = l / count as f64;
        let width = 0.25 * spacing;
        let features: Vec<Vec<f64>> = (0..count)
            .map(|r| {
                let center = (r as f64 + 0.5) * spacing - 0.5 + rng.random_range(-0.1..0.1) * spacing;
                (0..bands).map(|b| gaussian(center, width, b as f64)).collect()
            })
            .collect();
        let amplitudes: Vec<f64> = (0..count).map(|_| rng.random_range(0.6..1.0)).collect();

        let blend = |w: f64| -> Vec<Vec<f64>> {
            features
                .iter()
                .map(|f| baseline.iter().zip(f).map(|(b, s)| (1.0 - w) * b + w * s).collect())
                .collect()
        };
        // Similarity falls from 1 at w = 0 toward the feature overlap at w = 1.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        if max_pairwise_cosine(&blend(hi)) > coherence + COHERENCE_TOLERANCE {
            continue;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if max_pairwise_cosine(&blend(mid)) > coherence {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let columns = blend(0.5 * (lo + hi));
        if (max_pairwise_cosine(&columns) - coherence).abs() > COHERENCE_TOLERANCE {
            continue;
        }
        let columns: Vec<Vec<f64>> = columns
            .into_iter()
            .zip(&amplitudes)
            .map(|(c, a)| {
                let peak = c.iter().cloned().fold(0.0, f64::max);
                c.into_iter().map(|v| a * v / peak).collect()
            })
            .collect();
        return EndmemberMatrix::new(Matrix::from_columns(&columns)?);
    }
    Err(Error::Generation(format!(
        "could not reach endmember coherence {coherence} with {count} endmembers over {bands} bands"
    )))
}

/// Spatially correlated abundance maps with every pixel on the unit simplex.
pub fn gen_abundances(spec: &SceneSpec) -> Result<AbundanceTensor> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 101));
    let (n1, n2, r) = (spec.rows, spec.cols, spec.endmembers);
    let mut a = Tensor3::zeros((n1, n2, r));
    match spec.pattern {
        Pattern::GaussFields => {
            for k in 0..r {
                let field = smooth_field(n1, n2, spec.smoothness, &mut rng);
                for i in 0..n1 {
                    for j in 0..n2 {
                        a.set(i, j, k, field[i * n2 + j].powi(2) + 1e-12);
                    }
                }
            }
        }
        Pattern::Blocks => {
            let side = (2.0 * spec.smoothness).round().max(1.0) as usize;
            let (b1, b2) = (n1.div_ceil(side), n2.div_ceil(side));
            let labels: Vec<usize> = (0..b1 * b2).map(|_| rng.random_range(0..r)).collect();
            for i in 0..n1 {
                for j in 0..n2 {
                    a.set(i, j, labels[(i / side) * b2 + j / side], 1.0);
                }
            }
        }
        Pattern::Bumps => {
            let s = spec.smoothness;
            let blobs = ((n1 * n2) as f64 / (4.0 * s * s)).round().max(1.0) as usize;
            for k in 0..r {
                let centers: Vec<(f64, f64, f64)> = (0..blobs)
                    .map(|_| (rng.random_range(0.0..n1 as f64), rng.random_range(0.0..n2 as f64), rng.random_range(0.5..1.0)))
                    .collect();
                for i in 0..n1 {
                    for j in 0..n2 {
                        let v: f64 = centers
                            .iter()
                            .map(|&(ci, cj, h)| {
                                h * (-((i as f64 - ci).powi(2) + (j as f64 - cj).powi(2)) / (2.0 * s * s)).exp()
                            })
                            .sum();
                        a.set(i, j, k, 0.05 + v);
                    }
                }
            }
        }
    }
    for i in 0..n1 {
        for j in 0..n2 {
            let fiber = a.fiber_mut(i, j);
            let sum: f64 = fiber.iter().sum();
            fiber.iter_mut().for_each(|v| *v /= sum);
        }
    }
    AbundanceTensor::new(a)
}

/// White noise on a padded grid convolved with a separable Gaussian kernel of
/// width `sigma`, cropped to `n1 × n2` and standardized.
fn smooth_field(n1: usize, n2: usize, sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let kernel: Vec<f64> = {
        let k: Vec<f64> = (0..=2 * radius).map(|t| gaussian(radius as f64, sigma, t as f64)).collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    };
    let (p1, p2) = (n1 + 2 * radius, n2 + 2 * radius);
    let noise: Vec<f64> = (0..p1 * p2).map(|_| StandardNormal.sample(rng)).collect();
    // Rows first, then columns; only the cropped window is kept.
    let mut rows_pass = vec![0.0; p1 * n2];
    for i in 0..p1 {
        for j in 0..n2 {
            rows_pass[i * n2 + j] = kernel.iter().enumerate().map(|(t, w)| w * noise[i * p2 + j + t]).sum();
        }
    }
    let mut field = vec![0.0; n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            field[i * n2 + j] = kernel.iter().enumerate().map(|(t, w)| w * rows_pass[(i + t) * n2 + j]).sum();
        }
    }
    let mean = field.iter().sum::<f64>() / field.len() as f64;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / field.len() as f64).sqrt();
    if sd > 0.0 {
        field.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
    field
}

/// Adds i.i.d. zero-mean Gaussian noise whose expected energy puts the cube at
/// `snr_db` (global energy ratio). `f64::INFINITY` disables the noise.
///
/// Returns the noisy cube and the SNR realized by the actual draw.
pub fn add_noise(clean: &Tensor3, snr_db: f64, seed: u64) -> Result<(Tensor3, f64)> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Parameter(format!("invalid SNR {snr_db}")));
    }
    let signal = clean.squared_norm();
    if signal == 0.0 {
        return Err(Error::UndefinedMetric("SNR of an all-zero cube".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok((clean.clone(), f64::INFINITY));
    }
    let n = clean.len() as f64;
    let sigma = (signal / (n * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_energy = 0.0;
    let data = clean
        .as_slice()
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let e = sigma * z;
            noise_energy += e * e;
            v + e
        })
        .collect();
    let realized = 10.0 * (signal / noise_energy).log10();
    Ok((Tensor3::from_vec(clean.dims(), data)?, realized))
}

/// Endmembers, abundances, exact forward model and noise, all from one spec.
pub fn gen_scene(spec: &SceneSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let endmembers = gen_endmembers(spec.bands, spec.endmembers, spec.coherence, stream_seed(spec.seed, 100))?;
    let abundances = gen_abundances(spec)?;
    let clean = endmembers.forward(abundances.tensor())?;
    let (noisy, realized_snr_db) =
        add_noise(&clean, spec.snr_db.unwrap_or(f64::INFINITY), stream_seed(spec.seed, 102))?;
    Ok(GroundTruth { abundances, endmembers, clean, noisy, realized_snr_db })
}

/// Lag-1 spatial autocorrelation of one map, pooled over horizontal and
/// vertical neighbour pairs.
pub fn lag1_autocorrelation(a: &Tensor3, k: usize) -> f64 {
    let (n1, n2, _) = a.dims();
    let values: Vec<f64> = (0..n1).flat_map(|i| (0..n2).map(move |j| (i, j))).map(|(i, j)| a.get(i, j, k)).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut cov = 0.0;
    let mut pairs = 0usize;
    for i in 0..n1 {
        for j in 0..n2 {
            let x = a.get(i, j, k) - mean;
            if i + 1 < n1 {
                cov += x * (a.get(i + 1, j, k) - mean);
                pairs += 1;
            }
            if j + 1 < n2 {
                cov += x * (a.get(i, j + 1, k) - mean);
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return 1.0;
    }
    cov / pairs as f64 / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::contract_mode3_ones;

    fn spec(pattern: Pattern) -> SceneSpec {
        SceneSpec {
            rows: 30,
            cols: 25,
            endmembers: 3,
            bands: 40,
            pattern,
            smoothness: 3.0,
            coherence: 0.9,
            snr_db: Some(25.0),
            seed: 7,
        }
    }

    fn columns(m: &EndmemberMatrix) -> Vec<Vec<f64>> {
        (0..m.count()).map(|c| m.matrix().column(c)).collect()
    }

    #[test]
    fn endmembers_hit_requested_coherence() {
        for (coherence, seed) in [(0.5, 1), (0.8, 2), (0.95, 3), (0.99, 4)] {
            let m = gen_endmembers(50, 4, coherence, seed).unwrap();
            let c = max_pairwise_cosine(&columns(&m));
            assert!((c - coherence).abs() <= COHERENCE_TOLERANCE, "{coherence}: {c}");
            assert!(m.matrix().as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn endmembers_are_smooth() {
        let m = gen_endmembers(50, 3, 0.9, 5).unwrap();
        for col in columns(&m) {
            let peak = col.iter().cloned().fold(0.0, f64::max);
            let max_second_diff = col.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).fold(0.0, f64::max);
            assert!(max_second_diff <= 0.1 * peak, "{max_second_diff}");
        }
    }

    #[test]
    fn near_orthogonal_endmembers_when_coherence_is_zero() {
        let m = gen_endmembers(8, 8, 0.0, 6).unwrap();
        assert!(max_pairwise_cosine(&columns(&m)) < 0.1);
    }

    #[test]
    fn single_endmember_and_determinism() {
        let m = gen_endmembers(10, 1, 0.5, 9).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.matrix().as_slice().iter().all(|&v| v >= 0.0));
        assert_eq!(gen_endmembers(30, 3, 0.9, 11).unwrap(), gen_endmembers(30, 3, 0.9, 11).unwrap());
    }

    #[test]
    fn endmember_parameter_errors() {
        assert!(matches!(gen_endmembers(3, 4, 0.5, 0), Err(Error::Parameter(_))));
        assert!(matches!(gen_endmembers(3, 2, 1.0, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn abundances_sum_to_one_for_every_pattern() {
        for pattern in [Pattern::GaussFields, Pattern::Blocks, Pattern::Bumps] {
            let a = gen_abundances(&spec(pattern)).unwrap();
            let sums = contract_mode3_ones(a.tensor());
            assert!(sums.as_slice().iter().all(|s| (s - 1.0).abs() <= 1e-12));
            assert!(a.tensor().as_slice().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn blocks_are_pure_and_piecewise_constant() {
        let s = SceneSpec { endmembers: 2, smoothness: 2.0, ..spec(Pattern::Blocks) };
        let a = gen_abundances(&s).unwrap();
        for f in a.tensor().fibers() {
            assert!(f == [1.0, 0.0] || f == [0.0, 1.0], "{f:?}");
        }
        // Block side is 4: pixels inside one block agree.
        assert_eq!(a.tensor().fiber(0, 0), a.tensor().fiber(3, 3));
        assert_eq!(a.tensor().fiber(4, 8), a.tensor().fiber(7, 11));
    }

    #[test]
    fn smooth_fields_are_spatially_correlated() {
        let a = gen_abundances(&SceneSpec { smoothness: 2.0, ..spec(Pattern::GaussFields) }).unwrap();
        for k in 0..3 {
            assert!(lag1_autocorrelation(a.tensor(), k) > 0.5);
        }
        let rough = gen_abundances(&SceneSpec { rows: 60, cols: 60, smoothness: 0.5, ..spec(Pattern::GaussFields) }).unwrap();
        let wide = gen_abundances(&SceneSpec { rows: 60, cols: 60, smoothness: 6.0, ..spec(Pattern::GaussFields) }).unwrap();
        for k in 0..3 {
            let (r, w) = (lag1_autocorrelation(rough.tensor(), k), lag1_autocorrelation(wide.tensor(), k));
            assert!(w > 0.9 && w > r, "{r} {w}");
        }
    }

    #[test]
    fn noise_hits_target_snr() {
        let clean = Tensor3::from_fn((50, 50, 50), |i, j, k| 0.2 + 0.01 * ((i + 2 * j + 3 * k) % 17) as f64);
        let (_, snr) = add_noise(&clean, 25.0, 1).unwrap();
        assert!((24.5..=25.5).contains(&snr), "{snr}");
        let (a, _) = add_noise(&clean, 15.0, 2).unwrap();
        let (b, _) = add_noise(&clean, 15.0, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_disabled_and_zero_cube() {
        let clean = Tensor3::filled((2, 2, 2), 0.3);
        let (noisy, snr) = add_noise(&clean, f64::INFINITY, 1).unwrap();
        assert_eq!(noisy, clean);
        assert_eq!(snr, f64::INFINITY);
        assert!(matches!(add_noise(&Tensor3::zeros((2, 2, 2)), 20.0, 1), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn noise_is_white_per_band() {
        let clean = Tensor3::filled((40, 40, 8), 0.5);
        for seed in 0..5 {
            let (noisy, _) = add_noise(&clean, 20.0, seed).unwrap();
            let noise = noisy.sub(&clean).unwrap();
            let sigma = (noise.squared_norm() / noise.len() as f64).sqrt();
            let n = 1600.0;
            for band in 0..8 {
                let mean: f64 = noise.fibers().map(|f| f[band]).sum::<f64>() / n;
                assert!(mean.abs() <= 4.0 * sigma / n.sqrt());
            }
        }
    }

    #[test]
    fn scene_forward_model_is_exact() {
        let gt = gen_scene(&spec(Pattern::GaussFields)).unwrap();
        let (n1, n2, _) = gt.clean.dims();
        for i in 0..n1 {
            for j in 0..n2 {
                let mixed = gt.endmembers.mix(gt.abundances.tensor().fiber(i, j)).unwrap();
                for (x, y) in gt.clean.fiber(i, j).iter().zip(&mixed) {
                    assert!((x - y).abs() <= 1e-12);
                }
            }
        }
        assert_eq!(gt, gen_scene(&spec(Pattern::GaussFields)).unwrap());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(gen_scene(&SceneSpec { rows: 0, ..spec(Pattern::Bumps) }).is_err());
        assert!(gen_scene(&SceneSpec { smoothness: 0.0, ..spec(Pattern::Bumps) }).is_err());
        assert!(gen_scene(&SceneSpec { snr_db: Some(f64::NAN), ..spec(Pattern::Bumps) }).is_err());
        assert!("stripes".parse::<Pattern>().is_err());
        assert_eq!("gauss-fields".parse::<Pattern>().unwrap(), Pattern::GaussFields);
    }
}
