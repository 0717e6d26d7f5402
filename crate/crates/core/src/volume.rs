//! Dense 3D scalar volumes: representation, bit-exact `.vol` file I/O,
//! synthetic phantom generation, and boundary-safe patch extraction.
//!
//! Voxel data is stored row-major with x fastest: linear index
//! `x + X * (y + Y * z)`.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

/// 8-byte magic opening every VOL file.
pub const VOL_MAGIC: &[u8; 8] = b"VOXLCORE";

const VOL_HEADER_LEN: usize = 8 + 3 * 4;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a VOL file: bad magic (expected \"VOXLCORE\")")]
    BadMagic,
    #[error("malformed VOL header: {0}")]
    MalformedHeader(String),
    #[error("VOL length mismatch: header declares {declared} scalars, payload carries {actual}")]
    LengthMismatch { declared: u64, actual: u64 },
    #[error("non-finite intensity at linear index {index}")]
    NonFinite { index: usize },
    #[error("volume dims must be positive, got {0}x{1}x{2}")]
    EmptyDims(usize, usize, usize),
    #[error("data length {got} does not match dims product {want}")]
    DataLength { got: usize, want: usize },
    #[error("volume dims {0}x{1}x{2} exceed the VOL format's u32 axis limit")]
    DimsTooLarge(usize, usize, usize),
    #[error("patch dims must be positive, got {0}x{1}x{2}")]
    BadPatchDims(usize, usize, usize),
    #[error("pad value must be finite")]
    NonFinitePad,
    #[error("landmark ellipsoid (center {center:?}, radii {radii:?}) exceeds volume bounds {dims:?}")]
    EllipsoidOutOfBounds {
        center: Coord3,
        radii: [f64; 3],
        dims: Dims3,
    },
    #[error("noise_sigma must be non-negative, got {0}")]
    NegativeNoiseSigma(f64),
}

/// Voxel grid dimensions (X, Y, Z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Dims3 {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl Dims3 {
    pub fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }

    /// Total voxel count.
    pub fn count(&self) -> usize {
        self.x * self.y * self.z
    }

    /// Linear index of `(x, y, z)`, x fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.x && y < self.y && z < self.z);
        x + self.x * (y + self.y * z)
    }

    /// Whether a signed coordinate triple lies inside the grid.
    #[inline]
    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.x
            && (y as usize) < self.y
            && (z as usize) < self.z
    }

    pub fn max_axis(&self) -> usize {
        self.x.max(self.y).max(self.z)
    }
}

impl From<[usize; 3]> for Dims3 {
    fn from(a: [usize; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Dims3> for [usize; 3] {
    fn from(d: Dims3) -> Self {
        [d.x, d.y, d.z]
    }
}

/// An integer voxel coordinate. Components may be out of bounds for a given
/// volume (e.g. patch centers near borders); operations that require
/// in-bounds coordinates validate explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[i64; 3]", into = "[i64; 3]")]
pub struct Coord3 {
    pub x: i64,
    pub y: i64,
    pub z: i64,
}

impl Coord3 {
    pub fn new(x: i64, y: i64, z: i64) -> Self {
        Self { x, y, z }
    }

    /// Euclidean distance to `other` in voxel units.
    pub fn distance(&self, other: &Coord3) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        let dz = (self.z - other.z) as f64;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

impl From<[i64; 3]> for Coord3 {
    fn from(a: [i64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Coord3> for [i64; 3] {
    fn from(c: Coord3) -> Self {
        [c.x, c.y, c.z]
    }
}

/// Phantom contrast. `B` is the intensity inversion of `A`, standing in for
/// the water/fat reconstruction pair of the same anatomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    A,
    B,
}

/// Configuration for synthetic phantom volumes: a smooth low-frequency
/// background plus a bright ellipsoidal landmark plus Gaussian noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub dims: Dims3,
    pub modality: Modality,
    pub landmark_center: Coord3,
    /// Ellipsoid semi-axes in voxels.
    pub landmark_radii: [f64; 3],
    pub noise_sigma: f64,
    pub seed: u64,
    /// Separate seed for the background field phases. Volumes sharing a
    /// `background_seed` share anatomy and differ only in noise, which is how
    /// held-out test volumes are produced. Defaults to `seed`.
    #[serde(default)]
    pub background_seed: Option<u64>,
}

/// A dense 3D grayscale scalar field.
///
/// Immutable after construction; `data.len() == dims.count()`, every value is
/// finite, and `intensity_range` always equals the actual (min, max) of the
/// data.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims3,
    data: Vec<f32>,
    intensity_range: (f32, f32),
}

impl Volume3D {
    pub fn new(dims: Dims3, data: Vec<f32>) -> Result<Self, VolumeError> {
        if dims.x == 0 || dims.y == 0 || dims.z == 0 {
            return Err(VolumeError::EmptyDims(dims.x, dims.y, dims.z));
        }
        if data.len() != dims.count() {
            return Err(VolumeError::DataLength {
                got: data.len(),
                want: dims.count(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite { index });
        }
        let mut min = f32::INFINITY;
        let mut max = f32::NEG_INFINITY;
        for &v in &data {
            min = min.min(v);
            max = max.max(v);
        }
        Ok(Self {
            dims,
            data,
            intensity_range: (min, max),
        })
    }

    /// Build a volume by evaluating `f` at every voxel. Panics if `f`
    /// produces a non-finite value.
    pub fn from_fn(dims: Dims3, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(dims.count());
        for z in 0..dims.z {
            for y in 0..dims.y {
                for x in 0..dims.x {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, data).expect("from_fn produced an invalid volume")
    }

    pub fn constant(dims: Dims3, value: f32) -> Self {
        Self::from_fn(dims, |_, _, _| value)
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Actual (min, max) of the data.
    pub fn intensity_range(&self) -> (f32, f32) {
        self.intensity_range
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    /// Value at a signed coordinate, `None` when out of bounds.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64, z: i64) -> Option<f32> {
        if self.dims.contains(x, y, z) {
            Some(self.get(x as usize, y as usize, z as usize))
        } else {
            None
        }
    }

    /// Min-max rescaled copy with intensities in [0, 1]. A constant volume
    /// maps to all zeros.
    pub fn normalized(&self) -> Volume3D {
        let (min, max) = self.intensity_range;
        let span = max - min;
        let data = if span > 0.0 {
            self.data.iter().map(|&v| (v - min) / span).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Self::new(self.dims, data).expect("normalization preserves validity")
    }
}

/// Read a volume from the VOL format. Round-trips with [`save_volume`]
/// bit-exactly.
pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume3D, VolumeError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() < VOL_HEADER_LEN {
        if bytes.len() < 8 || &bytes[..8] != VOL_MAGIC {
            return Err(VolumeError::BadMagic);
        }
        return Err(VolumeError::MalformedHeader(
            "file ends inside the header".into(),
        ));
    }
    if &bytes[..8] != VOL_MAGIC {
        return Err(VolumeError::BadMagic);
    }
    let mut axes = [0u32; 3];
    for (i, axis) in axes.iter_mut().enumerate() {
        let off = 8 + 4 * i;
        *axis = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    }
    let [x, y, z] = axes;
    if x == 0 || y == 0 || z == 0 {
        return Err(VolumeError::MalformedHeader(format!(
            "non-positive dimension {x}x{y}x{z}"
        )));
    }
    let declared = x as u64 * y as u64 * z as u64;
    let actual = (bytes.len() - VOL_HEADER_LEN) as u64 / 4;
    let trailing = (bytes.len() - VOL_HEADER_LEN) % 4 != 0;
    if declared != actual || trailing {
        return Err(VolumeError::LengthMismatch { declared, actual });
    }
    let mut data = Vec::with_capacity(declared as usize);
    for (i, chunk) in bytes[VOL_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(VolumeError::NonFinite { index: i });
        }
        data.push(v);
    }
    Volume3D::new(Dims3::new(x as usize, y as usize, z as usize), data)
}

/// Write a volume in the VOL format: magic, three u32le axes, then the
/// payload as f32le in storage order. Deterministic bytes for equal input.
pub fn save_volume(vol: &Volume3D, path: impl AsRef<Path>) -> Result<(), VolumeError> {
    let path = path.as_ref();
    let d = vol.dims();
    if d.x > u32::MAX as usize || d.y > u32::MAX as usize || d.z > u32::MAX as usize {
        return Err(VolumeError::DimsTooLarge(d.x, d.y, d.z));
    }
    let mut bytes = Vec::with_capacity(VOL_HEADER_LEN + 4 * vol.data().len());
    bytes.extend_from_slice(VOL_MAGIC);
    bytes.extend_from_slice(&(d.x as u32).to_le_bytes());
    bytes.extend_from_slice(&(d.y as u32).to_le_bytes());
    bytes.extend_from_slice(&(d.z as u32).to_le_bytes());
    for v in vol.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(|source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(&bytes).map_err(|source| VolumeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// Fixed frequencies of the three background cosine products (cycles per
// volume extent along x, y, z).
const BACKGROUND_FREQS: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [2.0, 1.0, 2.0], [1.0, 2.0, 1.0]];
const BACKGROUND_PEAK: f64 = 0.3;

fn validate_phantom(cfg: &PhantomConfig) -> Result<(), VolumeError> {
    if cfg.noise_sigma < 0.0 || !cfg.noise_sigma.is_finite() {
        return Err(VolumeError::NegativeNoiseSigma(cfg.noise_sigma));
    }
    let c = cfg.landmark_center;
    let r = cfg.landmark_radii;
    let d = cfg.dims;
    let fits = |center: i64, radius: f64, extent: usize| {
        radius >= 0.0
            && center as f64 - radius >= 0.0
            && center as f64 + radius <= (extent - 1) as f64
    };
    if d.count() == 0
        || !fits(c.x, r[0], d.x)
        || !fits(c.y, r[1], d.y)
        || !fits(c.z, r[2], d.z)
    {
        return Err(VolumeError::EllipsoidOutOfBounds {
            center: c,
            radii: r,
            dims: d,
        });
    }
    Ok(())
}

/// Pre-clamp phantom field in f64: background + landmark + noise, with
/// modality B inverted. Exposed to the crate so tests can check the
/// voxelwise A/B complementarity before clamping.
pub(crate) fn phantom_field(cfg: &PhantomConfig) -> Result<Vec<f64>, VolumeError> {
    validate_phantom(cfg)?;
    let d = cfg.dims;

    let bg_seed = cfg.background_seed.unwrap_or(cfg.seed);
    let mut phase_rng = ChaCha8Rng::seed_from_u64(seed::derive(bg_seed, &[0xB6]));
    let mut phases = [[0.0f64; 3]; 3];
    for term in phases.iter_mut() {
        for ph in term.iter_mut() {
            *ph = phase_rng.random::<f64>();
        }
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, &[0x4E]));
    let c = cfg.landmark_center;
    let r = cfg.landmark_radii;
    let tau = std::f64::consts::TAU;

    let mut field = Vec::with_capacity(d.count());
    for z in 0..d.z {
        for y in 0..d.y {
            for x in 0..d.x {
                let u = [x as f64 / d.x as f64, y as f64 / d.y as f64, z as f64 / d.z as f64];
                let mut sum = 0.0;
                for (freqs, phase) in BACKGROUND_FREQS.iter().zip(phases.iter()) {
                    let mut term = 1.0;
                    for axis in 0..3 {
                        term *= (tau * (freqs[axis] * u[axis] + phase[axis])).cos();
                    }
                    sum += term;
                }
                let mut v = BACKGROUND_PEAK * (sum + 3.0) / 6.0;

                let ex = (x as i64 - c.x) as f64 / r[0].max(f64::MIN_POSITIVE);
                let ey = (y as i64 - c.y) as f64 / r[1].max(f64::MIN_POSITIVE);
                let ez = (z as i64 - c.z) as f64 / r[2].max(f64::MIN_POSITIVE);
                if ex * ex + ey * ey + ez * ez <= 1.0 {
                    v += 1.0;
                }

                if cfg.noise_sigma > 0.0 {
                    let n: f64 = StandardNormal.sample(&mut noise_rng);
                    v += cfg.noise_sigma * n;
                }

                if cfg.modality == Modality::B {
                    v = 1.0 - v;
                }
                field.push(v);
            }
        }
    }
    Ok(field)
}

/// Generate a synthetic phantom volume and its landmark position.
///
/// Modality A is background (a smooth field in `[0, 0.3]`) plus 1.0 inside
/// the landmark ellipsoid plus Gaussian noise; modality B is `1 - A` before
/// clamping. Values are clamped to `[0, 1]`. Identical configs produce
/// identical volumes.
pub fn make_phantom(cfg: &PhantomConfig) -> Result<(Volume3D, Coord3), VolumeError> {
    let field = phantom_field(cfg)?;
    let data: Vec<f32> = field.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
    let vol = Volume3D::new(cfg.dims, data)?;
    Ok((vol, cfg.landmark_center))
}

/// Extract a patch of exactly `patch_dims` voxels centered on `center`.
///
/// Per axis the patch spans offsets `[-d/2, d - d/2 - 1]` (floor-centering,
/// so an even extent leans low). Out-of-bounds voxels take `pad_value`.
pub fn crop_patch(
    vol: &Volume3D,
    center: Coord3,
    patch_dims: Dims3,
    pad_value: f32,
) -> Result<Volume3D, VolumeError> {
    if patch_dims.x == 0 || patch_dims.y == 0 || patch_dims.z == 0 {
        return Err(VolumeError::BadPatchDims(
            patch_dims.x,
            patch_dims.y,
            patch_dims.z,
        ));
    }
    if !pad_value.is_finite() {
        return Err(VolumeError::NonFinitePad);
    }
    let lo_x = center.x - (patch_dims.x / 2) as i64;
    let lo_y = center.y - (patch_dims.y / 2) as i64;
    let lo_z = center.z - (patch_dims.z / 2) as i64;
    let mut data = Vec::with_capacity(patch_dims.count());
    for pz in 0..patch_dims.z {
        for py in 0..patch_dims.y {
            for px in 0..patch_dims.x {
                let v = vol
                    .get_signed(lo_x + px as i64, lo_y + py as i64, lo_z + pz as i64)
                    .unwrap_or(pad_value);
                data.push(v);
            }
        }
    }
    Volume3D::new(patch_dims, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn ramp_volume(dims: Dims3) -> Volume3D {
        Volume3D::from_fn(dims, |x, y, z| (x + dims.x * (y + dims.y * z)) as f32)
    }

    fn small_phantom_cfg() -> PhantomConfig {
        PhantomConfig {
            dims: Dims3::new(24, 24, 24),
            modality: Modality::A,
            landmark_center: Coord3::new(14, 12, 11),
            landmark_radii: [4.0, 3.0, 3.0],
            noise_sigma: 0.0,
            seed: 7,
            background_seed: None,
        }
    }

    #[test]
    fn new_rejects_bad_inputs() {
        assert!(matches!(
            Volume3D::new(Dims3::new(0, 2, 2), vec![]),
            Err(VolumeError::EmptyDims(..))
        ));
        assert!(matches!(
            Volume3D::new(Dims3::new(2, 2, 2), vec![0.0; 7]),
            Err(VolumeError::DataLength { got: 7, want: 8 })
        ));
        let mut data = vec![0.0f32; 8];
        data[3] = f32::NAN;
        assert!(matches!(
            Volume3D::new(Dims3::new(2, 2, 2), data),
            Err(VolumeError::NonFinite { index: 3 })
        ));
    }

    #[test]
    fn intensity_range_matches_data() {
        let v = ramp_volume(Dims3::new(4, 4, 4));
        assert_eq!(v.intensity_range(), (0.0, 63.0));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ramp.vol");
        let v = ramp_volume(Dims3::new(4, 4, 4));
        save_volume(&v, &path).unwrap();
        let loaded = load_volume(&path).unwrap();
        assert_eq!(loaded, v);
    }

    #[test]
    fn save_is_deterministic_and_load_save_is_identity() {
        let dir = tempdir().unwrap();
        let (v, _) = make_phantom(&small_phantom_cfg()).unwrap();
        let p1 = dir.path().join("a.vol");
        let p2 = dir.path().join("b.vol");
        save_volume(&v, &p1).unwrap();
        save_volume(&v, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);

        let p3 = dir.path().join("c.vol");
        save_volume(&load_volume(&p1).unwrap(), &p3).unwrap();
        assert_eq!(std::fs::read(&p3).unwrap(), b1);
    }

    #[test]
    fn load_degenerate_single_voxel() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("one.vol");
        let v = Volume3D::new(Dims3::new(1, 1, 1), vec![0.0]).unwrap();
        save_volume(&v, &path).unwrap();
        let loaded = load_volume(&path).unwrap();
        assert_eq!(loaded.dims(), Dims3::new(1, 1, 1));
        assert_eq!(loaded.data(), &[0.0]);
    }

    #[test]
    fn load_rejects_length_mismatch() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.vol");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(VOL_MAGIC);
        for d in [2u32, 2, 2] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        for i in 0..7 {
            bytes.extend_from_slice(&(i as f32).to_le_bytes());
        }
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_volume(&path),
            Err(VolumeError::LengthMismatch {
                declared: 8,
                actual: 7
            })
        ));
    }

    #[test]
    fn load_rejects_trailing_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("trailing.vol");
        let v = Volume3D::new(Dims3::new(1, 1, 1), vec![1.0]).unwrap();
        save_volume(&v, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_volume(&path),
            Err(VolumeError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn load_rejects_bad_magic_and_short_header() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("magic.vol");
        std::fs::write(&path, b"NOTAVOLF\x01\x00\x00\x00").unwrap();
        assert!(matches!(load_volume(&path), Err(VolumeError::BadMagic)));

        std::fs::write(&path, &VOL_MAGIC[..]).unwrap();
        assert!(matches!(
            load_volume(&path),
            Err(VolumeError::MalformedHeader(_))
        ));
    }

    #[test]
    fn load_rejects_non_finite_payload() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("nan.vol");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(VOL_MAGIC);
        for d in [1u32, 1, 1] {
            bytes.extend_from_slice(&d.to_le_bytes());
        }
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_volume(&path),
            Err(VolumeError::NonFinite { index: 0 })
        ));
    }

    #[test]
    fn load_rejects_missing_file() {
        assert!(matches!(
            load_volume("/nonexistent/missing.vol"),
            Err(VolumeError::Io { .. })
        ));
    }

    #[test]
    fn phantom_contrast_and_background_bounds() {
        let cfg = small_phantom_cfg();
        let (vol, landmark) = make_phantom(&cfg).unwrap();
        assert_eq!(landmark, cfg.landmark_center);
        let c = cfg.landmark_center;
        assert!(vol.get(c.x as usize, c.y as usize, c.z as usize) >= 0.9);
        assert!(vol.get(0, 0, 0) <= 0.3);
    }

    #[test]
    fn phantom_is_seed_deterministic() {
        let mut cfg = small_phantom_cfg();
        cfg.noise_sigma = 0.05;
        let (a, _) = make_phantom(&cfg).unwrap();
        let (b, _) = make_phantom(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed += 1;
        let (c, _) = make_phantom(&cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn modalities_are_complementary_before_clamping() {
        let cfg_a = small_phantom_cfg();
        let mut cfg_b = cfg_a.clone();
        cfg_b.modality = Modality::B;
        let fa = phantom_field(&cfg_a).unwrap();
        let fb = phantom_field(&cfg_b).unwrap();
        for (va, vb) in fa.iter().zip(fb.iter()) {
            assert!((va + vb - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shared_background_seed_gives_same_anatomy_distinct_noise() {
        let mut train = small_phantom_cfg();
        train.noise_sigma = 0.05;
        train.background_seed = Some(99);
        let mut test = train.clone();
        test.seed = train.seed + 1;
        let (tv, _) = make_phantom(&train).unwrap();
        let (sv, _) = make_phantom(&test).unwrap();
        assert_ne!(tv, sv);

        // With noise off, shared background means identical volumes even
        // under different noise seeds.
        train.noise_sigma = 0.0;
        test.noise_sigma = 0.0;
        let (tv, _) = make_phantom(&train).unwrap();
        let (sv, _) = make_phantom(&test).unwrap();
        assert_eq!(tv, sv);
    }

    #[test]
    fn phantom_rejects_out_of_bounds_ellipsoid() {
        let mut cfg = small_phantom_cfg();
        cfg.landmark_center = Coord3::new(22, 12, 11);
        assert!(matches!(
            make_phantom(&cfg),
            Err(VolumeError::EllipsoidOutOfBounds { .. })
        ));
    }

    #[test]
    fn phantom_rejects_negative_sigma() {
        let mut cfg = small_phantom_cfg();
        cfg.noise_sigma = -0.1;
        assert!(matches!(
            make_phantom(&cfg),
            Err(VolumeError::NegativeNoiseSigma(_))
        ));
    }

    #[test]
    fn crop_center_of_constant_volume() {
        let v = Volume3D::constant(Dims3::new(9, 9, 9), 5.0);
        let p = crop_patch(&v, Coord3::new(4, 4, 4), Dims3::new(3, 3, 3), 0.0).unwrap();
        assert_eq!(p, Volume3D::constant(Dims3::new(3, 3, 3), 5.0));
    }

    #[test]
    fn crop_at_corner_pads() {
        // At (0,0,0) the 3^3 stencil keeps offsets in {0,1}^3: 8 voxels
        // in bounds, 19 padded.
        let v = Volume3D::constant(Dims3::new(9, 9, 9), 5.0);
        let p = crop_patch(&v, Coord3::new(0, 0, 0), Dims3::new(3, 3, 3), 0.0).unwrap();
        let fives = p.data().iter().filter(|&&v| v == 5.0).count();
        let zeros = p.data().iter().filter(|&&v| v == 0.0).count();
        assert_eq!((fives, zeros), (8, 19));
    }

    #[test]
    fn crop_single_voxel_is_identity_stencil() {
        let v = ramp_volume(Dims3::new(5, 4, 3));
        let p = crop_patch(&v, Coord3::new(2, 3, 1), Dims3::new(1, 1, 1), -1.0).unwrap();
        assert_eq!(p.data(), &[v.get(2, 3, 1)]);
    }

    #[test]
    fn crop_rejects_zero_patch_dims() {
        let v = Volume3D::constant(Dims3::new(3, 3, 3), 1.0);
        assert!(matches!(
            crop_patch(&v, Coord3::new(1, 1, 1), Dims3::new(3, 0, 3), 0.0),
            Err(VolumeError::BadPatchDims(3, 0, 3))
        ));
    }

    #[test]
    fn even_patch_dims_lean_low() {
        // Extent 4 spans offsets [-2, 1].
        let v = ramp_volume(Dims3::new(8, 1, 1));
        let p = crop_patch(&v, Coord3::new(4, 0, 0), Dims3::new(4, 1, 1), -1.0).unwrap();
        assert_eq!(p.data(), &[2.0, 3.0, 4.0, 5.0]);
    }

    // Independent reference: naive per-voxel bounds check.
    fn crop_reference(vol: &Volume3D, center: Coord3, pd: Dims3, pad: f32) -> Vec<f32> {
        let mut out = Vec::new();
        for pz in 0..pd.z as i64 {
            for py in 0..pd.y as i64 {
                for px in 0..pd.x as i64 {
                    let sx = center.x - (pd.x / 2) as i64 + px;
                    let sy = center.y - (pd.y / 2) as i64 + py;
                    let sz = center.z - (pd.z / 2) as i64 + pz;
                    let d = vol.dims();
                    let inside = sx >= 0
                        && sy >= 0
                        && sz >= 0
                        && sx < d.x as i64
                        && sy < d.y as i64
                        && sz < d.z as i64;
                    out.push(if inside {
                        vol.get(sx as usize, sy as usize, sz as usize)
                    } else {
                        pad
                    });
                }
            }
        }
        out
    }

    #[test]
    fn crop_matches_reference_on_random_pairs() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let dims = Dims3::new(
                rng.random_range(1..8),
                rng.random_range(1..8),
                rng.random_range(1..8),
            );
            let vol = Volume3D::from_fn(dims, |_, _, _| rng.random::<f32>());
            let center = Coord3::new(
                rng.random_range(-3..(dims.x as i64 + 3)),
                rng.random_range(-3..(dims.y as i64 + 3)),
                rng.random_range(-3..(dims.z as i64 + 3)),
            );
            let pd = Dims3::new(
                rng.random_range(1..6),
                rng.random_range(1..6),
                rng.random_range(1..6),
            );
            let got = crop_patch(&vol, center, pd, 0.5).unwrap();
            assert_eq!(got.dims(), pd);
            assert_eq!(got.data(), crop_reference(&vol, center, pd, 0.5).as_slice());
        }
    }

    #[test]
    fn normalized_rescales_to_unit_interval() {
        let v = ramp_volume(Dims3::new(4, 1, 1));
        let n = v.normalized();
        assert_eq!(n.intensity_range(), (0.0, 1.0));
        assert_eq!(n.data(), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);

        let c = Volume3D::constant(Dims3::new(2, 2, 2), 4.2);
        assert_eq!(c.normalized().data(), &[0.0; 8]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn round_trip_random_volumes(
            dx in 1usize..5, dy in 1usize..5, dz in 1usize..5,
            seed in 0u64..1000,
        ) {
            let dims = Dims3::new(dx, dy, dz);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vol = Volume3D::from_fn(dims, |_, _, _| rng.random::<f32>() * 200.0 - 100.0);
            let dir = tempdir().unwrap();
            let path = dir.path().join("v.vol");
            save_volume(&vol, &path).unwrap();
            prop_assert_eq!(load_volume(&path).unwrap(), vol);
        }

        #[test]
        fn crop_dims_always_match_request(
            cx in -5i64..10, cy in -5i64..10, cz in -5i64..10,
            px in 1usize..7, py in 1usize..7, pz in 1usize..7,
        ) {
            let v = Volume3D::constant(Dims3::new(5, 5, 5), 1.0);
            let pd = Dims3::new(px, py, pz);
            let p = crop_patch(&v, Coord3::new(cx, cy, cz), pd, 0.0).unwrap();
            prop_assert_eq!(p.dims(), pd);
        }
    }
}
