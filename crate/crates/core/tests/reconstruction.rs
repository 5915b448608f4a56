use nalgebra::Vector3;
use rangefuse::*;

fn intrinsics() -> LidarIntrinsics {
    LidarIntrinsics::synthetic(128, 1024, (-22.5f64).to_radians(), 22.5f64.to_radians()).unwrap()
}

/// Thick wall whose front face `x = 5` spans `|y| ≤ 2`, `|z| ≤ 1.5`.
fn wall() -> Primitive {
    Primitive::aabb(Point3::new(5.5, 0.0, 0.0), Vector3::new(0.5, 2.0, 1.5))
}

fn fuse(scene: &Scene, poses: &[RigidTransform], voxel: f64) -> VoxelBlockGrid {
    let intr = intrinsics();
    let mut grid = VoxelBlockGrid::with_voxel_size(voxel).unwrap();
    for pose in poses {
        let img = render_scene(scene, &intr, pose).unwrap();
        let pts: Vec<Point3> = to_point_cloud(&img, &intr, 0.0, 30.0)
            .unwrap()
            .iter()
            .map(|p| pose.apply(p))
            .collect();
        let keys = grid.activate_blocks(&pts, grid.truncation());
        grid.integrate(&img, &intr, pose, &keys, &IntegrationConfig::default())
            .unwrap();
    }
    grid
}

#[test]
fn wall_sequence_scores_just_under_the_ceiling() {
    let scene = Scene::new(vec![wall()]);
    let poses: Vec<RigidTransform> = (0..20)
        .map(|i| {
            RigidTransform::from_translation(Vector3::new(
                0.04 * i as f64,
                0.03 * i as f64 - 0.3,
                0.0,
            ))
        })
        .collect();
    let voxel = 0.05;
    let mesh = extract_mesh(&fuse(&scene, &poses, voxel), 1.0);
    assert!(mesh.validate());
    assert!(!mesh.is_empty());

    let face: Vec<Point3> = (0..=160)
        .flat_map(|i| {
            (0..=120)
                .map(move |j| Point3::new(5.0, -2.0 + 0.025 * i as f64, -1.5 + 0.025 * j as f64))
        })
        .collect();
    let score = fscore(&mesh.vertices, &face, 3.0 * voxel).unwrap();
    assert!(score.fscore <= 0.5);
    assert!(score.fscore > 0.49, "{score:?}");

    let interior = mesh
        .vertices
        .iter()
        .filter(|v| v.y.abs() < 1.8 && v.z.abs() < 1.3 && v.x < 5.3);
    for v in interior {
        assert!(
            (v.x - 5.0).abs() < 0.5 * voxel,
            "vertex {v:?} off the wall plane"
        );
    }
}

#[test]
fn surface_faces_the_sensor_and_sdf_is_signed() {
    let scene = Scene::new(vec![wall()]);
    let grid = fuse(&scene, &[RigidTransform::identity()], 0.05);
    match grid.query_sdf(&Point3::new(4.9, 0.1, 0.1)) {
        SdfSample::Observed { sdf, .. } => assert!((sdf - 0.1).abs() < 0.02, "{sdf}"),
        other => panic!("expected an observation, got {other:?}"),
    }
    match grid.query_sdf(&Point3::new(5.1, 0.1, 0.1)) {
        SdfSample::Observed { sdf, .. } => assert!((sdf + 0.1).abs() < 0.02, "{sdf}"),
        other => panic!("expected an observation, got {other:?}"),
    }
    assert_eq!(
        grid.query_sdf(&Point3::new(-20.0, 0.0, 0.0)),
        SdfSample::Unobserved
    );

    let mesh = extract_mesh(&grid, 1.0);
    let normals = mesh.normals.as_ref().unwrap();
    let facing = mesh
        .vertices
        .iter()
        .zip(normals)
        .filter(|(v, _)| v.y.abs() < 1.5 && v.z.abs() < 1.0)
        .all(|(_, n)| n.x < -0.9);
    assert!(facing, "front-face normals should point back at the sensor");
}

#[test]
fn registration_recovers_motion_between_rendered_frames() {
    let intr = intrinsics();
    let scene = Scene::urban_block();
    let truth = RigidTransform::from_axis_angle(
        Vector3::new(0.0, 0.005, 0.04),
        Vector3::new(0.8, -0.3, 0.05),
    );
    let dst = render_scene(&scene, &intr, &RigidTransform::identity()).unwrap();
    let src = render_scene(&scene, &intr, &truth).unwrap();
    for config in [
        RegistrationConfig::multi_scale(),
        RegistrationConfig::single_scale(),
    ] {
        let result = register(&src, &dst, &intr, &RigidTransform::identity(), &config).unwrap();
        assert!(rotation_error(&result.pose.rotation, &truth.rotation) < 0.1f64.to_radians());
        assert!(translation_error(&result.pose.translation, &truth.translation) < 0.01);
        assert!(result.converged);
        let last = result.iterations.last().unwrap();
        assert_eq!(last.stride, 1);
        assert!(last.inlier_rmse < 0.01);
    }
}
