//! Volume coreset operators: neighborhood averaging, center sampling, and
//! maximum-entropy voxel selection, each reducing a volume by a per-axis
//! scaling ratio N (27x total volume compression for N = 3).
//!
//! Shared geometry: the output grid has dims `(ceil(X/N), ceil(Y/N),
//! ceil(Z/N))`. Output cell `(i, j, k)` has center `(i*N + N/2, j*N + N/2,
//! k*N + N/2)` clamped per axis into bounds, and its neighborhood is the
//! `(2N-1)^3` cube of offsets in `[-(N-1), N-1]` around the center, clipped
//! to the volume. Maximum-entropy selection instead scans the disjoint `N^3`
//! block `[i*N, min(i*N+N, X)) x ...` of each cell.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{Coord3, Dims3, Volume3D};

#[derive(Debug, Error)]
pub enum CoresetError {
    #[error("invalid coreset config: {0}")]
    InvalidConfig(String),
}

/// Which operator [`compress`] dispatches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoresetMethod {
    Average,
    CenterSample,
    MaxEntropy,
}

impl CoresetMethod {
    pub const ALL: [CoresetMethod; 3] = [
        CoresetMethod::Average,
        CoresetMethod::CenterSample,
        CoresetMethod::MaxEntropy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CoresetMethod::Average => "average",
            CoresetMethod::CenterSample => "center_sample",
            CoresetMethod::MaxEntropy => "max_entropy",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoresetConfig {
    /// Per-axis scaling ratio N.
    pub n_ratio: usize,
    /// Entropy window extent per axis, in voxels.
    pub entropy_window: usize,
    /// Histogram bin count for gray-level quantization.
    pub gray_levels: usize,
    pub method: CoresetMethod,
    /// Alternate averaging geometry: disjoint `N^3` blocks instead of
    /// overlapping `(2N-1)^3` cubes. Kept for comparison; off by default.
    pub disjoint_blocks: bool,
}

impl Default for CoresetConfig {
    fn default() -> Self {
        Self {
            n_ratio: 3,
            entropy_window: 10,
            gray_levels: 32,
            method: CoresetMethod::MaxEntropy,
            disjoint_blocks: false,
        }
    }
}

impl CoresetConfig {
    pub fn validate(&self) -> Result<(), CoresetError> {
        if self.n_ratio < 1 {
            return Err(CoresetError::InvalidConfig("n_ratio must be >= 1".into()));
        }
        if self.entropy_window < 1 {
            return Err(CoresetError::InvalidConfig(
                "entropy_window must be >= 1".into(),
            ));
        }
        if self.gray_levels < 2 {
            return Err(CoresetError::InvalidConfig(
                "gray_levels must be >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Per-voxel Shannon entropy (bits) of the gray-level distribution in each
/// voxel's neighborhood window. Dims match the source volume.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    dims: Dims3,
    values: Vec<f64>,
}

impl EntropyMap {
    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[self.dims.index(x, y, z)]
    }
}

/// A compressed volume plus the bookkeeping needed to map results back to
/// the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct CoresetResult {
    pub volume: Volume3D,
    pub n_ratio: usize,
    pub method: CoresetMethod,
    /// Landmark coordinates divided by N (round half away from zero),
    /// clamped into the output grid.
    pub landmark_scaled: Option<Coord3>,
}

/// Output grid dims under ratio `n`: ceil-division per axis.
pub fn output_dims(src: Dims3, n: usize) -> Dims3 {
    Dims3::new(src.x.div_ceil(n), src.y.div_ceil(n), src.z.div_ceil(n))
}

#[inline]
fn cell_center(i: usize, n: usize, extent: usize) -> usize {
    (i * n + n / 2).min(extent - 1)
}

#[inline]
fn clipped_range(center: usize, half: usize, extent: usize) -> (usize, usize) {
    let lo = center.saturating_sub(half);
    let hi = (center + half).min(extent - 1);
    (lo, hi)
}

/// Each output voxel is the arithmetic mean of the in-bounds voxels of its
/// neighborhood. N = 1 copies the input.
pub fn neighborhood_average(
    vol: &Volume3D,
    cfg: &CoresetConfig,
) -> Result<CoresetResult, CoresetError> {
    cfg.validate()?;
    let n = cfg.n_ratio;
    let src = vol.dims();
    let out_dims = output_dims(src, n);
    let mut data = Vec::with_capacity(out_dims.count());
    for k in 0..out_dims.z {
        for j in 0..out_dims.y {
            for i in 0..out_dims.x {
                let (x0, x1, y0, y1, z0, z1) = if cfg.disjoint_blocks {
                    (
                        i * n,
                        ((i + 1) * n).min(src.x) - 1,
                        j * n,
                        ((j + 1) * n).min(src.y) - 1,
                        k * n,
                        ((k + 1) * n).min(src.z) - 1,
                    )
                } else {
                    let cx = cell_center(i, n, src.x);
                    let cy = cell_center(j, n, src.y);
                    let cz = cell_center(k, n, src.z);
                    let (x0, x1) = clipped_range(cx, n - 1, src.x);
                    let (y0, y1) = clipped_range(cy, n - 1, src.y);
                    let (z0, z1) = clipped_range(cz, n - 1, src.z);
                    (x0, x1, y0, y1, z0, z1)
                };
                let mut sum = 0.0f64;
                for z in z0..=z1 {
                    for y in y0..=y1 {
                        for x in x0..=x1 {
                            sum += vol.get(x, y, z) as f64;
                        }
                    }
                }
                let count = (x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1);
                data.push((sum / count as f64) as f32);
            }
        }
    }
    Ok(CoresetResult {
        volume: Volume3D::new(out_dims, data).expect("averaging preserves validity"),
        n_ratio: n,
        method: CoresetMethod::Average,
        landmark_scaled: None,
    })
}

/// Each output voxel is the input voxel at the (clamped) cell center.
/// N = 1 is the identity.
pub fn center_sample(vol: &Volume3D, cfg: &CoresetConfig) -> Result<CoresetResult, CoresetError> {
    cfg.validate()?;
    let n = cfg.n_ratio;
    let src = vol.dims();
    let out_dims = output_dims(src, n);
    let mut data = Vec::with_capacity(out_dims.count());
    for k in 0..out_dims.z {
        for j in 0..out_dims.y {
            for i in 0..out_dims.x {
                data.push(vol.get(
                    cell_center(i, n, src.x),
                    cell_center(j, n, src.y),
                    cell_center(k, n, src.z),
                ));
            }
        }
    }
    Ok(CoresetResult {
        volume: Volume3D::new(out_dims, data).expect("sampling preserves validity"),
        n_ratio: n,
        method: CoresetMethod::CenterSample,
        landmark_scaled: None,
    })
}

/// Quantize intensities to `gray_levels` uniform bins over the volume's
/// min-max range. All bins are 0 when the volume is constant.
fn quantize(vol: &Volume3D, gray_levels: usize) -> Vec<u16> {
    let (min, max) = vol.intensity_range();
    let span = (max - min) as f64;
    let n = gray_levels as f64;
    vol.data()
        .iter()
        .map(|&v| {
            if span <= 0.0 {
                0u16
            } else {
                let bin = (((v - min) as f64 / span) * n).floor() as usize;
                bin.min(gray_levels - 1) as u16
            }
        })
        .collect()
}

fn shannon_entropy_bits(hist: &[u32], total: u32) -> f64 {
    let t = total as f64;
    let mut h = 0.0;
    for &c in hist {
        if c > 0 {
            let p = c as f64 / t;
            h -= p * p.log2();
        }
    }
    h
}

/// Per-voxel window entropy over the quantized volume.
///
/// The window spans offsets `[-w/2, w - w/2 - 1]` per axis (so the default
/// w = 10 spans `[-5, +4]`), clipped at boundaries with the histogram
/// renormalized over in-bounds voxels. Implemented with a histogram sliding
/// along x; the brute-force reference lives in the tests.
pub fn entropy_map(vol: &Volume3D, cfg: &CoresetConfig) -> Result<EntropyMap, CoresetError> {
    cfg.validate()?;
    let dims = vol.dims();
    let w = cfg.entropy_window;
    let n = cfg.gray_levels;
    let bins = quantize(vol, n);

    let lo = (w / 2) as i64;
    let hi = (w - w / 2 - 1) as i64;
    let clip = |c: i64, extent: usize| -> (usize, usize) {
        ((c - lo).max(0) as usize, (c + hi).min(extent as i64 - 1) as usize)
    };

    let mut values = vec![0.0f64; dims.count()];
    let mut hist = vec![0u32; n];
    for z in 0..dims.z {
        let (z0, z1) = clip(z as i64, dims.z);
        for y in 0..dims.y {
            let (y0, y1) = clip(y as i64, dims.y);

            hist.iter_mut().for_each(|c| *c = 0);
            let mut total = 0u32;
            let (x0, x1) = clip(0, dims.x);
            for wz in z0..=z1 {
                for wy in y0..=y1 {
                    for wx in x0..=x1 {
                        hist[bins[dims.index(wx, wy, wz)] as usize] += 1;
                        total += 1;
                    }
                }
            }
            values[dims.index(0, y, z)] = shannon_entropy_bits(&hist, total);

            for x in 1..dims.x {
                let drop_x = x as i64 - 1 - lo;
                if drop_x >= 0 {
                    let wx = drop_x as usize;
                    for wz in z0..=z1 {
                        for wy in y0..=y1 {
                            hist[bins[dims.index(wx, wy, wz)] as usize] -= 1;
                            total -= 1;
                        }
                    }
                }
                let add_x = x as i64 + hi;
                if add_x < dims.x as i64 {
                    let wx = add_x as usize;
                    for wz in z0..=z1 {
                        for wy in y0..=y1 {
                            hist[bins[dims.index(wx, wy, wz)] as usize] += 1;
                            total += 1;
                        }
                    }
                }
                values[dims.index(x, y, z)] = shannon_entropy_bits(&hist, total);
            }
        }
    }
    Ok(EntropyMap { dims, values })
}

/// Linear indices of the highest-entropy voxel of each disjoint N^3 block,
/// ties broken toward the smallest row-major index.
pub(crate) fn select_max_entropy_indices(
    vol: &Volume3D,
    cfg: &CoresetConfig,
) -> Result<Vec<usize>, CoresetError> {
    let entropy = entropy_map(vol, cfg)?;
    let n = cfg.n_ratio;
    let src = vol.dims();
    let out_dims = output_dims(src, n);
    let mut picks = Vec::with_capacity(out_dims.count());
    for k in 0..out_dims.z {
        for j in 0..out_dims.y {
            for i in 0..out_dims.x {
                let mut best_idx = usize::MAX;
                let mut best_h = f64::NEG_INFINITY;
                for z in k * n..((k + 1) * n).min(src.z) {
                    for y in j * n..((j + 1) * n).min(src.y) {
                        for x in i * n..((i + 1) * n).min(src.x) {
                            let idx = src.index(x, y, z);
                            let h = entropy.values()[idx];
                            // Scanning in ascending linear order, so a strict
                            // comparison keeps the smallest index on ties.
                            if h > best_h {
                                best_h = h;
                                best_idx = idx;
                            }
                        }
                    }
                }
                picks.push(best_idx);
            }
        }
    }
    Ok(picks)
}

/// Each output voxel takes the intensity of the highest-entropy voxel of its
/// disjoint N^3 block.
pub fn max_entropy_coreset(
    vol: &Volume3D,
    cfg: &CoresetConfig,
) -> Result<CoresetResult, CoresetError> {
    cfg.validate()?;
    let picks = select_max_entropy_indices(vol, cfg)?;
    let out_dims = output_dims(vol.dims(), cfg.n_ratio);
    let data: Vec<f32> = picks.iter().map(|&idx| vol.data()[idx]).collect();
    Ok(CoresetResult {
        volume: Volume3D::new(out_dims, data).expect("selection preserves validity"),
        n_ratio: cfg.n_ratio,
        method: CoresetMethod::MaxEntropy,
        landmark_scaled: None,
    })
}

/// Dispatch to the configured method; optionally rescale a landmark into the
/// output grid.
pub fn compress(
    vol: &Volume3D,
    cfg: &CoresetConfig,
    landmark: Option<Coord3>,
) -> Result<CoresetResult, CoresetError> {
    let mut result = match cfg.method {
        CoresetMethod::Average => neighborhood_average(vol, cfg)?,
        CoresetMethod::CenterSample => center_sample(vol, cfg)?,
        CoresetMethod::MaxEntropy => max_entropy_coreset(vol, cfg)?,
    };
    if let Some(landmark) = landmark {
        result.landmark_scaled = Some(scale_landmark(landmark, cfg.n_ratio, result.volume.dims()));
    }
    Ok(result)
}

/// Componentwise `round(landmark / n)` (half away from zero), clamped into
/// the output grid.
pub fn scale_landmark(landmark: Coord3, n: usize, out_dims: Dims3) -> Coord3 {
    let scale = |c: i64, extent: usize| -> i64 {
        let scaled = (c as f64 / n as f64).round() as i64;
        scaled.clamp(0, extent as i64 - 1)
    };
    Coord3::new(
        scale(landmark.x, out_dims.x),
        scale(landmark.y, out_dims.y),
        scale(landmark.z, out_dims.z),
    )
}
