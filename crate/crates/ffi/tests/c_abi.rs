use std::ffi::{CStr, CString};
use std::ptr;

use rangefuse_ffi::*;

const H: usize = 32;
const W: usize = 256;

fn last_error() -> String {
    let p = rf_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn intrinsics() -> *mut RfIntrinsics {
    let mut h = ptr::null_mut();
    let s = unsafe { rf_intrinsics_synthetic(H, W, -0.4, 0.4, &mut h) };
    assert_eq!(s, RfStatus::Ok);
    h
}

/// Ranges seen from the origin inside the box |x| < 5, |y| < 4, |z| < 2.
fn room_ranges(intr: *const RfIntrinsics) -> Vec<f64> {
    let mut data = vec![0.0; H * W];
    for v in 0..H {
        for u in 0..W {
            let mut d = [0.0; 3];
            assert_eq!(
                unsafe { rf_intrinsics_unproject(intr, u as f64 + 0.5, v, 1.0, d.as_mut_ptr()) },
                RfStatus::Ok
            );
            let hits = [5.0, 4.0, 2.0]
                .iter()
                .zip(d)
                .filter(|(_, c)| c.abs() > 1e-9)
                .map(|(half, c)| half / c.abs())
                .fold(f64::INFINITY, f64::min);
            data[v * W + u] = hits;
        }
    }
    data
}

fn image(data: &[f64]) -> *mut RfRangeImage {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { rf_range_image_new(H, W, data.as_ptr(), &mut h) },
        RfStatus::Ok
    );
    h
}

fn identity() -> [f64; 12] {
    [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
}

#[test]
fn project_unproject_round_trip() {
    let intr = intrinsics();
    let (mut rows, mut cols) = (0, 0);
    unsafe {
        assert_eq!(rf_intrinsics_size(intr, &mut rows, &mut cols), RfStatus::Ok);
        assert_eq!((rows, cols), (H, W));
        let mut p = [0.0; 3];
        assert_eq!(
            rf_intrinsics_unproject(intr, 17.25, 9, 7.5, p.as_mut_ptr()),
            RfStatus::Ok
        );
        let (mut u, mut v, mut r) = (0.0, 0usize, 0.0);
        assert_eq!(
            rf_intrinsics_project(intr, p.as_ptr(), &mut u, &mut v, &mut r),
            RfStatus::Ok
        );
        assert!((u - 17.25).abs() < 1e-9, "u = {u}");
        assert_eq!(v, 9);
        assert!((r - 7.5).abs() < 1e-12);
        rf_intrinsics_free(intr);
    }
}

#[test]
fn range_image_copy_and_file_round_trip() {
    let intr = intrinsics();
    let data = room_ranges(intr);
    let img = image(&data);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("room.rimg").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(rf_range_image_write(img, path.as_ptr()), RfStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(rf_range_image_read(path.as_ptr(), &mut back), RfStatus::Ok);
        let mut buf = vec![0.0; H * W];
        assert_eq!(
            rf_range_image_copy(back, buf.as_mut_ptr(), buf.len()),
            RfStatus::Ok
        );
        for (a, b) in data.iter().zip(&buf) {
            assert_eq!(*b, *a as f32 as f64);
        }
        assert_eq!(
            rf_range_image_copy(back, buf.as_mut_ptr(), 10),
            RfStatus::InvalidArgument
        );
        assert!(last_error().contains("10"));
        rf_range_image_free(back);
        rf_range_image_free(img);
        rf_intrinsics_free(intr);
    }
}

#[test]
fn registering_an_image_onto_itself_returns_identity() {
    let intr = intrinsics();
    let data = room_ranges(intr);
    let a = image(&data);
    let b = image(&data);
    let mut pose = [f64::NAN; 12];
    let mut converged = 0;
    let init = identity();
    unsafe {
        let s = rf_register(
            a,
            b,
            intr,
            init.as_ptr(),
            0,
            0.5,
            pose.as_mut_ptr(),
            &mut converged,
        );
        assert_eq!(s, RfStatus::Ok, "{}", last_error());
        let s = rf_register(
            a,
            b,
            intr,
            ptr::null(),
            1,
            0.5,
            pose.as_mut_ptr(),
            &mut converged,
        );
        assert_eq!(s, RfStatus::Ok);
        rf_range_image_free(a);
        rf_range_image_free(b);
        rf_intrinsics_free(intr);
    }
    assert_eq!(converged, 1);
    for (got, want) in pose.iter().zip(identity()) {
        assert!((got - want).abs() < 1e-6, "{pose:?}");
    }
}

#[test]
fn integrate_query_mesh_and_snapshot() {
    let intr = intrinsics();
    let img = image(&room_ranges(intr));
    let pose = identity();
    let dir = tempfile::tempdir().unwrap();
    let grid_path = CString::new(dir.path().join("room.grid").to_str().unwrap()).unwrap();
    let ply_path = CString::new(dir.path().join("room.ply").to_str().unwrap()).unwrap();
    unsafe {
        let mut grid = ptr::null_mut();
        assert_eq!(rf_grid_new(0.1, 0.0, &mut grid), RfStatus::Ok);
        let mut updated = 0;
        let s = rf_grid_integrate(grid, img, intr, pose.as_ptr(), 0.0, 30.0, &mut updated);
        assert_eq!(s, RfStatus::Ok, "{}", last_error());
        assert!(updated > 0);
        let mut blocks = 0;
        assert_eq!(rf_grid_block_count(grid, &mut blocks), RfStatus::Ok);
        assert!(blocks > 0);

        let (mut observed, mut sdf, mut weight) = (0, f64::NAN, f64::NAN);
        let p = [4.85, 0.02, 0.03];
        assert_eq!(
            rf_grid_query(grid, p.as_ptr(), &mut observed, &mut sdf, &mut weight),
            RfStatus::Ok
        );
        assert_eq!(observed, 1);
        assert!((sdf - 0.15).abs() < 0.03, "sdf {sdf}");
        assert!(weight > 0.0);

        let far = [100.0, 100.0, 100.0];
        assert_eq!(
            rf_grid_query(grid, far.as_ptr(), &mut observed, &mut sdf, &mut weight),
            RfStatus::Ok
        );
        assert_eq!(observed, 0);

        assert_eq!(rf_grid_write(grid, grid_path.as_ptr()), RfStatus::Ok);
        let mut reread = ptr::null_mut();
        assert_eq!(rf_grid_read(grid_path.as_ptr(), &mut reread), RfStatus::Ok);
        let mut reread_blocks = 0;
        rf_grid_block_count(reread, &mut reread_blocks);
        assert_eq!(reread_blocks, blocks);

        let mut mesh = ptr::null_mut();
        assert_eq!(rf_mesh_extract(reread, 1.0, &mut mesh), RfStatus::Ok);
        let (mut nv, mut nt) = (0, 0);
        assert_eq!(rf_mesh_size(mesh, &mut nv, &mut nt), RfStatus::Ok);
        assert!(nv > 0 && nt > 0);
        let mut verts = vec![0.0; 3 * nv];
        let mut tris = vec![0u32; 3 * nt];
        assert_eq!(
            rf_mesh_copy_vertices(mesh, verts.as_mut_ptr(), verts.len()),
            RfStatus::Ok
        );
        assert_eq!(
            rf_mesh_copy_triangles(mesh, tris.as_mut_ptr(), tris.len()),
            RfStatus::Ok
        );
        assert!(tris.iter().all(|&i| (i as usize) < nv));
        // Vertices facing the +x wall straight ahead lie on it.
        let front: Vec<f64> = verts
            .chunks(3)
            .filter(|v| v[0] > 4.0 && v[1].abs() < 1.0 && v[2].abs() < 0.5)
            .map(|v| v[0])
            .collect();
        assert!(!front.is_empty());
        assert!(front.iter().all(|x| (x - 5.0).abs() < 0.06), "{front:?}");
        assert_eq!(rf_mesh_write_ply(mesh, ply_path.as_ptr()), RfStatus::Ok);
        assert!(
            std::fs::metadata(dir.path().join("room.ply"))
                .unwrap()
                .len()
                > 0
        );

        rf_mesh_free(mesh);
        rf_grid_free(reread);
        rf_grid_free(grid);
        rf_range_image_free(img);
        rf_intrinsics_free(intr);
    }
}

#[test]
fn failures_report_status_and_message() {
    unsafe {
        rf_clear_error();
        assert!(rf_last_error().is_null());

        let mut h = ptr::null_mut();
        assert_eq!(
            rf_intrinsics_synthetic(16, 64, 0.3, -0.3, &mut h),
            RfStatus::InvalidIntrinsics
        );
        assert!(h.is_null());
        assert!(last_error().contains("field of view"));

        assert_eq!(
            rf_intrinsics_synthetic(16, 64, -0.3, 0.3, ptr::null_mut()),
            RfStatus::NullPointer
        );
        let mut rows = 0;
        assert_eq!(
            rf_range_image_size(ptr::null(), &mut rows, &mut rows),
            RfStatus::NullPointer
        );
        assert!(last_error().contains("image"));

        let missing = CString::new("/nonexistent/frame.rimg").unwrap();
        let mut img = ptr::null_mut();
        assert_eq!(
            rf_range_image_read(missing.as_ptr(), &mut img),
            RfStatus::Io
        );
        assert!(last_error().contains("frame.rimg"));

        let intr = intrinsics();
        let small = vec![1.0; 8 * 8];
        let mut a = ptr::null_mut();
        assert_eq!(
            rf_range_image_new(8, 8, small.as_ptr(), &mut a),
            RfStatus::Ok
        );
        let mut pose = [0.0; 12];
        let s = rf_register(
            a,
            a,
            intr,
            ptr::null(),
            0,
            0.5,
            pose.as_mut_ptr(),
            ptr::null_mut(),
        );
        assert_eq!(s, RfStatus::DimensionMismatch);

        let mut bad = identity();
        bad[0] = 2.0;
        let s = rf_register(
            a,
            a,
            intr,
            bad.as_ptr(),
            0,
            0.5,
            pose.as_mut_ptr(),
            ptr::null_mut(),
        );
        assert_eq!(s, RfStatus::InvalidPose);

        let mut grid = ptr::null_mut();
        assert_eq!(rf_grid_new(-1.0, 0.0, &mut grid), RfStatus::InvalidConfig);

        rf_range_image_free(a);
        rf_intrinsics_free(intr);
        rf_range_image_free(ptr::null_mut());
        rf_grid_free(ptr::null_mut());
        rf_mesh_free(ptr::null_mut());
        rf_intrinsics_free(ptr::null_mut());
    }
}

#[test]
fn last_error_is_per_thread() {
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { rf_intrinsics_synthetic(4, 4, 1.0, 0.0, &mut h) },
        RfStatus::InvalidIntrinsics
    );
    let other = std::thread::spawn(|| rf_last_error().is_null())
        .join()
        .unwrap();
    assert!(other);
    assert!(!rf_last_error().is_null());
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(rf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
