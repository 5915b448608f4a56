//! Sparse truncated signed distance grid.
//!
//! Space is tiled by blocks of 16³ voxels, allocated on demand in a hash map
//! keyed by integer block coordinates. A voxel with global integer index
//! `i` has its center at `(i + 0.5) · voxel_size`.
//!
//! Integration is projective: each voxel center is moved into the sensor
//! frame, projected into the range image, and compared with the stored range.
//! Work is split by block, so every voxel has exactly one writer per frame.

use std::collections::{HashMap, HashSet};
use std::hash::{BuildHasherDefault, Hash, Hasher};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lidar_model::LidarIntrinsics;
use crate::range_image::RangeImage;
use crate::transform::{Point3, RigidTransform};

pub const BLOCK_EDGE: usize = 16;
pub const BLOCK_VOXELS: usize = BLOCK_EDGE * BLOCK_EDGE * BLOCK_EDGE;
pub const DEFAULT_TRUNCATION_MULTIPLIER: f64 = 4.0;
pub const DEFAULT_MAX_WEIGHT: f32 = 100.0;

/// Integer block coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockKey {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl BlockKey {
    pub fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    /// Spatial hash with the primes 73856093, 19349669, 83492791.
    pub fn spatial_hash(&self) -> u64 {
        let h = (self.x as i64 as u64).wrapping_mul(73_856_093)
            ^ (self.y as i64 as u64).wrapping_mul(19_349_669)
            ^ (self.z as i64 as u64).wrapping_mul(83_492_791);
        // Spread the xor-of-products into the high bits the table probes on.
        h.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    /// Global index of this block's voxel at local offset zero.
    pub fn origin_voxel(&self) -> [i64; 3] {
        let e = BLOCK_EDGE as i64;
        [self.x as i64 * e, self.y as i64 * e, self.z as i64 * e]
    }
}

impl Hash for BlockKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.spatial_hash());
    }
}

/// Passes the precomputed [`BlockKey::spatial_hash`] through unchanged.
#[derive(Default, Clone, Copy)]
pub struct BlockKeyHasher(u64);

impl Hasher for BlockKeyHasher {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x0100_0000_01B3);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

pub type BlockMap<V> = HashMap<BlockKey, V, BuildHasherDefault<BlockKeyHasher>>;
pub type BlockSet = HashSet<BlockKey, BuildHasherDefault<BlockKeyHasher>>;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Voxel {
    pub tsdf: f32,
    /// Number of fused observations; zero means unobserved.
    pub weight: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelBlock {
    voxels: Vec<Voxel>,
}

impl Default for VoxelBlock {
    fn default() -> Self {
        Self {
            voxels: vec![Voxel::default(); BLOCK_VOXELS],
        }
    }
}

impl VoxelBlock {
    /// Local index with x varying fastest.
    #[inline]
    pub fn index(x: usize, y: usize, z: usize) -> usize {
        x + BLOCK_EDGE * (y + BLOCK_EDGE * z)
    }

    pub fn from_voxels(voxels: Vec<Voxel>) -> Result<Self> {
        if voxels.len() != BLOCK_VOXELS {
            return Err(Error::DimensionMismatch {
                expected: (BLOCK_VOXELS, 1),
                found: (voxels.len(), 1),
            });
        }
        Ok(Self { voxels })
    }

    pub fn voxels(&self) -> &[Voxel] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [Voxel] {
        &mut self.voxels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> Voxel {
        self.voxels[Self::index(x, y, z)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationConfig {
    /// Voxels whose range from the sensor lies outside `[clip_min, clip_max]`
    /// are not updated; neither are pixels whose stored range does.
    pub clip_min: f64,
    pub clip_max: f64,
    /// When set, voxels more than a truncation distance in front of the
    /// surface are updated with `+τ`. When cleared they are skipped.
    pub update_free_space: bool,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            clip_min: 0.0,
            clip_max: f64::INFINITY,
            update_free_space: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntegrationStats {
    pub blocks: usize,
    pub voxels_updated: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SdfSample {
    Observed { sdf: f64, weight: f64 },
    Unobserved,
}

impl SdfSample {
    pub fn sdf(&self) -> Option<f64> {
        match *self {
            SdfSample::Observed { sdf, .. } => Some(sdf),
            SdfSample::Unobserved => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VoxelBlockGrid {
    voxel_size: f64,
    truncation: f64,
    max_weight: f32,
    blocks: BlockMap<VoxelBlock>,
}

impl VoxelBlockGrid {
    /// Grid with truncation `4 · voxel_size`.
    pub fn with_voxel_size(voxel_size: f64) -> Result<Self> {
        Self::new(voxel_size, DEFAULT_TRUNCATION_MULTIPLIER * voxel_size)
    }

    pub fn new(voxel_size: f64, truncation: f64) -> Result<Self> {
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "voxel size {voxel_size} must be > 0"
            )));
        }
        if !(truncation > 0.0 && truncation.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "truncation {truncation} must be > 0"
            )));
        }
        Ok(Self {
            voxel_size,
            truncation,
            max_weight: DEFAULT_MAX_WEIGHT,
            blocks: BlockMap::default(),
        })
    }

    /// Caps the per-voxel observation count; `f32::INFINITY` disables the cap.
    pub fn with_max_weight(mut self, max_weight: f32) -> Result<Self> {
        if !(max_weight >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "max weight {max_weight} must be >= 1"
            )));
        }
        self.max_weight = max_weight;
        Ok(self)
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn max_weight(&self) -> f32 {
        self.max_weight
    }

    pub fn block_extent(&self) -> f64 {
        self.voxel_size * BLOCK_EDGE as f64
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block(&self, key: &BlockKey) -> Option<&VoxelBlock> {
        self.blocks.get(key)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&BlockKey, &VoxelBlock)> {
        self.blocks.iter()
    }

    /// Block keys in ascending order.
    pub fn sorted_keys(&self) -> Vec<BlockKey> {
        let mut keys: Vec<BlockKey> = self.blocks.keys().copied().collect();
        keys.sort_unstable();
        keys
    }

    pub fn insert_block(&mut self, key: BlockKey, block: VoxelBlock) {
        self.blocks.insert(key, block);
    }

    pub fn voxel_center(&self, index: [i64; 3]) -> Point3 {
        Point3::new(
            (index[0] as f64 + 0.5) * self.voxel_size,
            (index[1] as f64 + 0.5) * self.voxel_size,
            (index[2] as f64 + 0.5) * self.voxel_size,
        )
    }

    /// Global voxel index of the voxel containing `p`.
    pub fn voxel_index(&self, p: &Point3) -> [i64; 3] {
        [
            (p.x / self.voxel_size).floor() as i64,
            (p.y / self.voxel_size).floor() as i64,
            (p.z / self.voxel_size).floor() as i64,
        ]
    }

    #[inline]
    fn split(index: [i64; 3]) -> (BlockKey, usize) {
        let e = BLOCK_EDGE as i64;
        let key = BlockKey::new(
            index[0].div_euclid(e) as i32,
            index[1].div_euclid(e) as i32,
            index[2].div_euclid(e) as i32,
        );
        let local = VoxelBlock::index(
            index[0].rem_euclid(e) as usize,
            index[1].rem_euclid(e) as usize,
            index[2].rem_euclid(e) as usize,
        );
        (key, local)
    }

    /// Voxel at a global index, `None` when its block is not allocated.
    #[inline]
    pub fn voxel(&self, index: [i64; 3]) -> Option<Voxel> {
        let (key, local) = Self::split(index);
        self.blocks.get(&key).map(|b| b.voxels[local])
    }

    /// Writes a voxel directly, allocating its block when needed.
    pub fn set_voxel(&mut self, index: [i64; 3], voxel: Voxel) {
        let (key, local) = Self::split(index);
        self.blocks.entry(key).or_default().voxels[local] = voxel;
    }

    /// Allocates every block that meets the axis-aligned cube of half-width
    /// `radius` around any point, and returns those keys sorted.
    pub fn activate_blocks(&mut self, points: &[Point3], radius: f64) -> Vec<BlockKey> {
        let keys = block_keys_near(points, radius, self.block_extent());
        for key in &keys {
            self.blocks.entry(*key).or_default();
        }
        keys
    }

    /// Fuses one range image taken at `frame_to_world` into the blocks listed
    /// in `keys` (normally the result of [`Self::activate_blocks`] on the
    /// same frame).
    pub fn integrate(
        &mut self,
        img: &RangeImage,
        intr: &LidarIntrinsics,
        frame_to_world: &RigidTransform,
        keys: &[BlockKey],
        config: &IntegrationConfig,
    ) -> Result<IntegrationStats> {
        img.check_intrinsics(intr)?;
        if !frame_to_world.is_valid(1e-6) {
            return Err(Error::InvalidPose(
                "frame-to-world pose is not a rigid transform".into(),
            ));
        }
        let world_to_frame = frame_to_world.inverse();
        let mut work: Vec<(BlockKey, VoxelBlock)> = Vec::with_capacity(keys.len());
        for key in keys {
            if let Some(block) = self.blocks.remove(key) {
                work.push((*key, block));
            }
        }
        let ctx = FrameContext {
            img,
            intr,
            world_to_frame,
            voxel_size: self.voxel_size,
            truncation: self.truncation,
            max_weight: self.max_weight,
            config: *config,
        };
        let updated: usize = work
            .par_iter_mut()
            .map(|(key, block)| ctx.update_block(key, block))
            .sum();
        let stats = IntegrationStats {
            blocks: work.len(),
            voxels_updated: updated,
        };
        self.blocks.extend(work);
        Ok(stats)
    }

    /// Trilinear interpolation of the eight voxel centers around `x`.
    pub fn query_sdf(&self, x: &Point3) -> SdfSample {
        let g = x / self.voxel_size - Point3::repeat(0.5);
        let base = [g.x.floor() as i64, g.y.floor() as i64, g.z.floor() as i64];
        let f = [
            g.x - base[0] as f64,
            g.y - base[1] as f64,
            g.z - base[2] as f64,
        ];
        let mut sdf = 0.0;
        let mut weight = 0.0;
        for corner in 0..8 {
            let o = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let Some(v) = self.voxel([
                base[0] + o[0] as i64,
                base[1] + o[1] as i64,
                base[2] + o[2] as i64,
            ]) else {
                return SdfSample::Unobserved;
            };
            if v.weight <= 0.0 {
                return SdfSample::Unobserved;
            }
            let mut c = 1.0;
            for axis in 0..3 {
                c *= if o[axis] == 1 { f[axis] } else { 1.0 - f[axis] };
            }
            sdf += c * v.tsdf as f64;
            weight += c * v.weight as f64;
        }
        SdfSample::Observed { sdf, weight }
    }
}

/// Sorted, deduplicated keys of blocks meeting the cube of half-width
/// `radius` around each point.
pub fn block_keys_near(points: &[Point3], radius: f64, block_extent: f64) -> Vec<BlockKey> {
    let range = |p: &Point3| {
        let lo = (p - Point3::repeat(radius)) / block_extent;
        let hi = (p + Point3::repeat(radius)) / block_extent;
        (
            [
                lo.x.floor() as i32,
                lo.y.floor() as i32,
                lo.z.floor() as i32,
            ],
            [
                hi.x.floor() as i32,
                hi.y.floor() as i32,
                hi.z.floor() as i32,
            ],
        )
    };
    let mut set = BlockSet::default();
    let mut last = None;
    for p in points {
        if !p.iter().all(|c| c.is_finite()) {
            continue;
        }
        let r = range(p);
        if last == Some(r) {
            continue;
        }
        last = Some(r);
        let (lo, hi) = r;
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    set.insert(BlockKey::new(x, y, z));
                }
            }
        }
    }
    let mut keys: Vec<BlockKey> = set.into_iter().collect();
    keys.sort_unstable();
    keys
}

struct FrameContext<'a> {
    img: &'a RangeImage,
    intr: &'a LidarIntrinsics,
    world_to_frame: RigidTransform,
    voxel_size: f64,
    truncation: f64,
    max_weight: f32,
    config: IntegrationConfig,
}

impl FrameContext<'_> {
    fn update_block(&self, key: &BlockKey, block: &mut VoxelBlock) -> usize {
        let tau = self.truncation;
        let clip = (self.config.clip_min, self.config.clip_max);
        let half_diag = 0.5 * 3f64.sqrt() * self.voxel_size * BLOCK_EDGE as f64;
        let origin = key.origin_voxel();
        let rot = self.world_to_frame.rotation;
        let block_center = self.world_to_frame.apply(&Point3::new(
            (origin[0] as f64 + BLOCK_EDGE as f64 * 0.5) * self.voxel_size,
            (origin[1] as f64 + BLOCK_EDGE as f64 * 0.5) * self.voxel_size,
            (origin[2] as f64 + BLOCK_EDGE as f64 * 0.5) * self.voxel_size,
        ));
        let reach = self.intr.receiver_radius() + half_diag;
        if block_center.norm() - reach > clip.1 {
            return 0;
        }
        // Columns of R scaled by the voxel size step the sensor-frame center
        // along each grid axis.
        let step_x = rot.column(0) * self.voxel_size;
        let step_y = rot.column(1) * self.voxel_size;
        let step_z = rot.column(2) * self.voxel_size;
        let first = self.world_to_frame.apply(&Point3::new(
            (origin[0] as f64 + 0.5) * self.voxel_size,
            (origin[1] as f64 + 0.5) * self.voxel_size,
            (origin[2] as f64 + 0.5) * self.voxel_size,
        ));

        let mut updated = 0;
        for z in 0..BLOCK_EDGE {
            for y in 0..BLOCK_EDGE {
                let row_start = first + step_y * y as f64 + step_z * z as f64;
                for x in 0..BLOCK_EDGE {
                    let p = row_start + step_x * x as f64;
                    let Some((row, col, r)) = self.intr.project_to_pixel(&p) else {
                        continue;
                    };
                    if r < clip.0 || r > clip.1 {
                        continue;
                    }
                    let omega = self.img.get(row, col);
                    if omega <= 0.0 || omega < clip.0 || omega > clip.1 {
                        continue;
                    }
                    let d = omega - r;
                    if d < -tau || (d > tau && !self.config.update_free_space) {
                        continue;
                    }
                    let d = d.min(tau);
                    let voxel = &mut block.voxels[VoxelBlock::index(x, y, z)];
                    let n = voxel.weight as f64;
                    voxel.tsdf = ((n * voxel.tsdf as f64 + d) / (n + 1.0)) as f32;
                    voxel.weight = (voxel.weight + 1.0).min(self.max_weight);
                    updated += 1;
                }
            }
        }
        updated
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn origin_point_activates_eight_blocks() {
        let mut grid = VoxelBlockGrid::with_voxel_size(0.1).unwrap();
        let keys = grid.activate_blocks(&[Point3::zeros()], 0.2);
        assert_eq!(keys.len(), 8);
        assert_eq!(grid.block_count(), 8);
        let interior = grid.activate_blocks(&[Point3::new(0.8, 0.8, 0.8)], 0.2);
        assert_eq!(interior, vec![BlockKey::new(0, 0, 0)]);
        assert!(grid.activate_blocks(&[], 0.2).is_empty());
        assert_eq!(grid.block_count(), 8);
    }

    #[test]
    fn activation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<Point3> = (0..300)
            .map(|_| {
                Point3::new(
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect();
        let radius = 0.35;
        let mut grid = VoxelBlockGrid::with_voxel_size(0.05).unwrap();
        let keys = grid.activate_blocks(&points, radius);
        let b = grid.block_extent();
        let mut expected = Vec::new();
        for z in -4..=4 {
            for y in -8..=8 {
                for x in -8..=8 {
                    let key = BlockKey::new(x, y, z);
                    let lo = [x as f64 * b, y as f64 * b, z as f64 * b];
                    let hit = points.iter().any(|p| {
                        (0..3).all(|a| lo[a] <= p[a] + radius && lo[a] + b > p[a] - radius)
                    });
                    if hit {
                        expected.push(key);
                    }
                }
            }
        }
        expected.sort_unstable();
        assert_eq!(keys, expected);
    }

    #[test]
    fn voxel_index_round_trip() {
        let mut grid = VoxelBlockGrid::with_voxel_size(0.1).unwrap();
        for idx in [[0, 0, 0], [-1, -1, -1], [15, 16, -17], [100, -300, 7]] {
            let v = Voxel {
                tsdf: idx[0] as f32,
                weight: 1.0,
            };
            grid.set_voxel(idx, v);
            assert_eq!(grid.voxel(idx), Some(v));
            assert_eq!(grid.voxel_index(&grid.voxel_center(idx)), idx);
        }
    }

    #[test]
    fn query_at_voxel_center_and_unobserved_corner() {
        let mut grid = VoxelBlockGrid::with_voxel_size(0.1).unwrap();
        for z in 0..3 {
            for y in 0..3 {
                for x in 0..3 {
                    grid.set_voxel(
                        [x, y, z],
                        Voxel {
                            tsdf: (x + 10 * y + 100 * z) as f32 * 0.001,
                            weight: 2.0,
                        },
                    );
                }
            }
        }
        let c = grid.voxel_center([1, 1, 1]);
        match grid.query_sdf(&c) {
            SdfSample::Observed { sdf, weight } => {
                assert!((sdf - 0.111).abs() < 1e-7);
                assert!((weight - 2.0).abs() < 1e-12);
            }
            SdfSample::Unobserved => panic!("center must be observed"),
        }
        // Linear field is reproduced exactly between centers.
        let q = c + Point3::new(0.025, 0.05, 0.075);
        let expected = 0.001 * (1.25 + 10.0 * 1.5 + 100.0 * 1.75);
        assert!((grid.query_sdf(&q).sdf().unwrap() - expected).abs() < 1e-6);
        grid.set_voxel([2, 2, 2], Voxel::default());
        assert_eq!(grid.query_sdf(&q), SdfSample::Unobserved);
    }

    #[test]
    fn invalid_pose_rejected() {
        let intr = LidarIntrinsics::synthetic(16, 64, -0.3, 0.3).unwrap();
        let img = RangeImage::for_intrinsics(&intr);
        let mut grid = VoxelBlockGrid::with_voxel_size(0.1).unwrap();
        let mut pose = RigidTransform::identity();
        pose.rotation[(0, 0)] = 2.0;
        assert!(matches!(
            grid.integrate(&img, &intr, &pose, &[], &IntegrationConfig::default()),
            Err(Error::InvalidPose(_))
        ));
    }

    #[test]
    fn hasher_spreads_neighbouring_keys() {
        let mut seen = HashSet::new();
        for x in -8..8 {
            for y in -8..8 {
                for z in -8..8 {
                    seen.insert(BlockKey::new(x, y, z).spatial_hash() >> 57);
                }
            }
        }
        assert!(seen.len() > 100);
    }
}
