//! TSDF grid snapshots.
//!
//! Header: f64 voxel size, f64 truncation, u64 block count. Then per block,
//! in ascending key order: three i32 block coordinates followed by 4096
//! `(f32 tsdf, f32 weight)` pairs with x varying fastest, then y, then z.

use std::path::Path;

use super::{read_bytes, write_bytes, ByteReader, FormatError};
use crate::sdf_volume::{BlockKey, Voxel, VoxelBlock, VoxelBlockGrid, BLOCK_VOXELS};

pub const HEADER_LEN: usize = 24;
pub const BLOCK_RECORD_LEN: usize = 12 + 8 * BLOCK_VOXELS;

pub fn encode_grid(grid: &VoxelBlockGrid) -> Vec<u8> {
    let keys = grid.sorted_keys();
    let mut out = Vec::with_capacity(HEADER_LEN + keys.len() * BLOCK_RECORD_LEN);
    out.extend_from_slice(&grid.voxel_size().to_le_bytes());
    out.extend_from_slice(&grid.truncation().to_le_bytes());
    out.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    for key in keys {
        let block = grid.block(&key).expect("key listed by the grid");
        for c in [key.x, key.y, key.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for v in block.voxels() {
            out.extend_from_slice(&v.tsdf.to_le_bytes());
            out.extend_from_slice(&v.weight.to_le_bytes());
        }
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<VoxelBlockGrid, FormatError> {
    let mut r = ByteReader::new(bytes);
    let voxel_size = r.f64_finite()?;
    let truncation = r.f64_finite()?;
    let mut grid = VoxelBlockGrid::new(voxel_size, truncation)
        .map_err(|e| FormatError::at(0, e.to_string()))?;
    let count = r.u64()?;
    r.require(count.saturating_mul(BLOCK_RECORD_LEN as u64))?;
    for _ in 0..count {
        let at = r.position();
        let key = BlockKey::new(r.i32()?, r.i32()?, r.i32()?);
        if grid.block(&key).is_some() {
            return Err(FormatError::at(at, format!("duplicate block {key:?}")));
        }
        let mut voxels = Vec::with_capacity(BLOCK_VOXELS);
        for _ in 0..BLOCK_VOXELS {
            let tsdf = r.f32_finite()?;
            let at = r.position();
            let weight = r.f32_finite()?;
            if weight < 0.0 {
                return Err(FormatError::at(at, format!("negative weight {weight}")));
            }
            voxels.push(Voxel { tsdf, weight });
        }
        grid.insert_block(
            key,
            VoxelBlock::from_voxels(voxels).expect("block has 4096 voxels"),
        );
    }
    r.expect_end()?;
    Ok(grid)
}

pub fn read_grid(path: &Path) -> crate::Result<VoxelBlockGrid> {
    Ok(decode_grid(&read_bytes(path)?)?)
}

pub fn write_grid(path: &Path, grid: &VoxelBlockGrid) -> crate::Result<()> {
    write_bytes(path, &encode_grid(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> VoxelBlockGrid {
        let mut grid = VoxelBlockGrid::with_voxel_size(0.05).unwrap();
        for (i, idx) in [[0, 0, 0], [-1, 5, 33], [100, -20, 7], [15, 15, 15]]
            .iter()
            .enumerate()
        {
            grid.set_voxel(
                *idx,
                Voxel {
                    tsdf: 0.01 * i as f32 - 0.02,
                    weight: i as f32 + 1.0,
                },
            );
        }
        grid
    }

    #[test]
    fn round_trip() {
        let grid = sample_grid();
        let bytes = encode_grid(&grid);
        assert_eq!(
            bytes.len(),
            HEADER_LEN + grid.block_count() * BLOCK_RECORD_LEN
        );
        let back = decode_grid(&bytes).unwrap();
        assert_eq!(back.voxel_size(), grid.voxel_size());
        assert_eq!(back.truncation(), grid.truncation());
        assert_eq!(back.sorted_keys(), grid.sorted_keys());
        for k in grid.sorted_keys() {
            assert_eq!(back.block(&k), grid.block(&k));
        }
        assert_eq!(encode_grid(&back), bytes);
    }

    #[test]
    fn voxel_order_is_x_fastest() {
        let mut grid = VoxelBlockGrid::with_voxel_size(1.0).unwrap();
        grid.set_voxel(
            [1, 0, 0],
            Voxel {
                tsdf: 0.5,
                weight: 2.0,
            },
        );
        let bytes = encode_grid(&grid);
        let voxel1 = HEADER_LEN + 12 + 8;
        assert_eq!(&bytes[voxel1..voxel1 + 4], &0.5f32.to_le_bytes());
    }

    #[test]
    fn truncated_snapshot() {
        let bytes = encode_grid(&sample_grid());
        assert!(matches!(
            decode_grid(&bytes[..bytes.len() - 1]),
            Err(FormatError::TruncatedPayload { offset: 24, .. })
        ));
        assert!(matches!(
            decode_grid(&bytes[..10]),
            Err(FormatError::TruncatedPayload { offset: 8, .. })
        ));
    }
}
