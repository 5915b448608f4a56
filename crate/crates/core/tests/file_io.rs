use nalgebra::Vector3;
use rangefuse::io::*;
use rangefuse::*;

fn sample_image(rows: usize, cols: usize) -> RangeImage {
    let data = (0..rows * cols)
        .map(|i| {
            if i % 7 == 0 {
                0.0
            } else {
                0.5 + (i % 97) as f64 * 0.25
            }
        })
        .collect();
    RangeImage::from_data(rows, cols, data).unwrap()
}

#[test]
fn range_images_survive_the_filesystem() {
    let dir = tempfile::tempdir().unwrap();
    let img = sample_image(16, 64);

    let rimg = dir.path().join("a.rimg");
    write_rimg(&rimg, &img).unwrap();
    let back = read_rimg(&rimg).unwrap();
    assert_eq!(back.data(), img.data());
    let bytes = std::fs::read(&rimg).unwrap();
    assert_eq!(&bytes[..4], b"RIMG");
    assert_eq!(bytes.len(), 12 + 4 * 16 * 64);

    let png = dir.path().join("a.png");
    write_png16(&png, &img).unwrap();
    let back = read_png16(&png).unwrap();
    for (a, b) in back.data().iter().zip(img.data()) {
        assert!((a - b).abs() <= 0.0005 + 1e-12);
    }

    let intr = LidarIntrinsics::synthetic(16, 32, -0.3, 0.3).unwrap();
    let err = read_rimg_for(&rimg, &intr).unwrap_err();
    assert_eq!(err.kind(), "dimension_mismatch");
}

#[test]
fn intrinsics_and_trajectories_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let el: Vec<f64> = (0..8)
        .map(|v| 0.2 - 0.05 * v as f64 - 0.001 * (v * v) as f64)
        .collect();
    let az: Vec<f64> = (0..8).map(|v| 0.001 * v as f64 - 0.004).collect();
    let intr = LidarIntrinsics::calibrated(128, 8, 0.03, az, el).unwrap();
    let path = dir.path().join("intrinsics.json");
    write_intrinsics(&path, &intr).unwrap();
    let back = read_intrinsics(&path).unwrap();
    assert_eq!(back.elevation_lut(), intr.elevation_lut());
    assert_eq!(back.azimuth_lut(), intr.azimuth_lut());
    assert_eq!(back.receiver_radius(), intr.receiver_radius());

    let entries: Vec<TrajectoryEntry> = (0..5)
        .map(|i| TrajectoryEntry {
            index: i * 2,
            pose: RigidTransform::from_axis_angle(
                Vector3::new(0.01 * i as f64, -0.2, 0.3),
                Vector3::new(i as f64, 0.5, -1.0 / 3.0),
            ),
        })
        .collect();
    let traj = dir.path().join("traj.txt");
    write_trajectory(&traj, &entries).unwrap();
    let back = read_trajectory(&traj, OrthonormalityPolicy::Reject).unwrap();
    assert_eq!(back, entries);
}

#[test]
fn grids_and_meshes_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut grid = VoxelBlockGrid::with_voxel_size(0.05).unwrap();
    for i in 0..40i64 {
        let idx = [i - 20, (i * 7) % 33 - 16, -(i % 5)];
        grid.set_voxel(
            idx,
            Voxel {
                tsdf: 0.01 * i as f32 - 0.2,
                weight: 1.0 + i as f32,
            },
        );
    }
    let path = dir.path().join("grid.bin");
    write_grid(&path, &grid).unwrap();
    let back = read_grid(&path).unwrap();
    assert_eq!(back.sorted_keys(), grid.sorted_keys());
    assert_eq!(back.voxel_size(), grid.voxel_size());
    assert_eq!(back.truncation(), grid.truncation());
    for key in grid.sorted_keys() {
        assert_eq!(
            back.block(&key).unwrap().voxels(),
            grid.block(&key).unwrap().voxels()
        );
    }

    let mesh = TriangleMesh {
        vertices: vec![Point3::zeros(), Point3::x(), Point3::y(), Point3::z()],
        normals: None,
        triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
    };
    let ply = dir.path().join("mesh.ply");
    write_ply(&ply, &mesh).unwrap();
    let back = read_ply(&ply).unwrap();
    assert_eq!(back.triangles, mesh.triangles);
    assert_eq!(back.vertices, mesh.vertices);
    assert_eq!(read_point_cloud(&ply).unwrap(), mesh.vertices);
}

#[test]
fn reading_errors_are_structured() {
    let dir = tempfile::tempdir().unwrap();
    let truncated = dir.path().join("t.rimg");
    let mut bytes = encode_rimg(&sample_image(4, 4));
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&truncated, &bytes).unwrap();
    assert_eq!(
        read_rimg(&truncated).unwrap_err().kind(),
        "truncated_payload"
    );
    assert!(matches!(
        decode_rimg(&bytes),
        Err(FormatError::TruncatedPayload {
            offset: 12,
            needed: 64,
            available: 61
        })
    ));

    let missing = dir.path().join("missing.rimg");
    assert_eq!(read_rimg(&missing).unwrap_err().kind(), "io");
    let other = dir.path().join("cloud.xyz");
    std::fs::write(&other, b"1 2 3").unwrap();
    assert!(read_point_cloud(&other).is_err());
}
