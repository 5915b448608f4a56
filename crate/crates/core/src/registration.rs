//! Projective point-to-plane registration of range images.
//!
//! Each source point is moved by the current pose, projected into the
//! destination image, and paired with the destination point unprojected from
//! the stored range at that pixel. No 3D search structure is involved: one
//! pass over the source points yields the correspondences and the normal
//! equations.
//!
//! Poses map the source sensor frame into the destination sensor frame and
//! are updated on the left, `T ← exp(ξ) · T`, with twist `ξ = (ω, ν)`.
//!
//! # Reduction order
//!
//! Normal equations are accumulated over fixed-size chunks of the
//! correspondence list and the chunk partials are summed sequentially in list
//! order, so results are bitwise identical for any thread count.

use std::time::Instant;

use nalgebra::{Matrix6, SymmetricEigen, Vector6};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lidar_model::LidarIntrinsics;
use crate::range_image::{
    compute_normal_map, strided_point_cloud, NormalConfig, NormalImage, RangeImage,
};
use crate::transform::{Point3, RigidTransform, Twist};

/// Normal equations with a condition number above this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

const REDUCTION_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleLevel {
    pub stride: usize,
    pub iterations: usize,
}

impl ScheduleLevel {
    pub fn new(stride: usize, iterations: usize) -> Self {
        Self { stride, iterations }
    }
}

/// Parses `"4:20,2:20,1:10"`.
pub fn parse_schedule(s: &str) -> Result<Vec<ScheduleLevel>> {
    s.split(',')
        .map(|level| {
            let (stride, iters) = level.trim().split_once(':').ok_or_else(|| {
                Error::InvalidConfig(format!("schedule level {level:?} is not stride:iterations"))
            })?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidConfig(format!("schedule level {level:?}: {e}")))
            };
            Ok(ScheduleLevel::new(parse(stride)?, parse(iters)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationConfig {
    /// Pseudo-Huber scale `k`, meters.
    pub kernel_scale: f64,
    /// Pairs farther apart than this (3D distance) are rejected.
    pub max_correspondence_distance: f64,
    /// Multiplies the gate at each level by that level's stride, so coarse
    /// levels accept the larger displacements they are meant to absorb.
    pub scale_gate_with_stride: bool,
    pub schedule: Vec<ScheduleLevel>,
    /// A level stops early once both `‖ω‖` and `‖ν‖` of a step fall below
    /// these.
    pub rotation_threshold: f64,
    pub translation_threshold: f64,
    pub normals: NormalConfig,
    /// Source points outside `[clip_min, clip_max]` are not used.
    pub clip_min: f64,
    pub clip_max: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self::multi_scale()
    }
}

impl RegistrationConfig {
    /// Three-level pyramid, strides 4, 2, 1 with 20, 20, 10 iterations.
    pub fn multi_scale() -> Self {
        Self::with_schedule(vec![
            ScheduleLevel::new(4, 20),
            ScheduleLevel::new(2, 20),
            ScheduleLevel::new(1, 10),
        ])
    }

    /// Full resolution only, 50 iterations.
    pub fn single_scale() -> Self {
        Self::with_schedule(vec![ScheduleLevel::new(1, 50)])
    }

    pub fn with_schedule(schedule: Vec<ScheduleLevel>) -> Self {
        Self {
            kernel_scale: 0.5,
            max_correspondence_distance: 0.5,
            scale_gate_with_stride: true,
            schedule,
            rotation_threshold: 1e-4,
            translation_threshold: 1e-4,
            normals: NormalConfig::default(),
            clip_min: 0.0,
            clip_max: f64::INFINITY,
        }
    }

    /// Sets both the kernel scale and the correspondence gate.
    pub fn with_kernel(mut self, k: f64) -> Self {
        self.kernel_scale = k;
        self.max_correspondence_distance = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() {
            return Err(Error::InvalidConfig("empty iteration schedule".into()));
        }
        if self
            .schedule
            .iter()
            .any(|l| l.stride == 0 || l.iterations == 0)
        {
            return Err(Error::InvalidConfig(
                "schedule strides and iteration counts must be >= 1".into(),
            ));
        }
        if self.schedule.windows(2).any(|w| w[1].stride >= w[0].stride) {
            return Err(Error::InvalidConfig(
                "schedule strides must decrease".into(),
            ));
        }
        if !(self.kernel_scale > 0.0) || !(self.max_correspondence_distance > 0.0) {
            return Err(Error::InvalidConfig(
                "kernel scale and correspondence distance must be > 0".into(),
            ));
        }
        if !(self.rotation_threshold >= 0.0) || !(self.translation_threshold >= 0.0) {
            return Err(Error::InvalidConfig("thresholds must be >= 0".into()));
        }
        Ok(())
    }
}

/// Destination image with its normals, as seen by the correspondence search.
#[derive(Debug, Clone, Copy)]
pub struct ProjectiveTarget<'a> {
    pub image: &'a RangeImage,
    pub normals: &'a NormalImage,
    pub intrinsics: &'a LidarIntrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Source point after applying the current pose.
    pub source: Point3,
    pub target: Point3,
    pub normal: Point3,
}

impl Correspondence {
    #[inline]
    pub fn residual(&self) -> f64 {
        self.normal.dot(&(self.source - self.target))
    }

    /// Jacobian of the residual under `x ← exp(ξ) x` at `ξ = 0`.
    #[inline]
    pub fn jacobian(&self) -> Vector6<f64> {
        let c = self.source.cross(&self.normal);
        Vector6::new(c.x, c.y, c.z, self.normal.x, self.normal.y, self.normal.z)
    }
}

pub type CorrespondenceSet = Vec<Correspondence>;

pub fn initial_translation_by_centroids(src: &[Point3], dst: &[Point3]) -> Result<RigidTransform> {
    if src.is_empty() || dst.is_empty() {
        return Err(Error::EmptyInput(
            "centroid alignment needs non-empty point sets",
        ));
    }
    let centroid = |pts: &[Point3]| pts.iter().sum::<Point3>() / pts.len() as f64;
    Ok(RigidTransform::from_translation(
        centroid(dst) - centroid(src),
    ))
}

/// Pairs each source point with the destination pixel it projects to under
/// `pose`, reading the destination at stride-aligned pixels only.
pub fn projective_correspondences(
    src: &[Point3],
    target: &ProjectiveTarget<'_>,
    pose: &RigidTransform,
    max_dist: f64,
    stride: usize,
) -> Result<CorrespondenceSet> {
    let assoc = Associator::new(target, pose, max_dist, stride)?;
    Ok(src.par_iter().filter_map(|p| assoc.pair(p)).collect())
}

/// Association and normal-equation accumulation fused into one parallel pass
/// over the source points, with no intermediate correspondence list.
/// Partial sums are formed over fixed chunks of `src` and added in chunk
/// order, so the result does not depend on the thread count.
pub fn accumulate_projective(
    src: &[Point3],
    target: &ProjectiveTarget<'_>,
    pose: &RigidTransform,
    max_dist: f64,
    stride: usize,
    k: f64,
) -> Result<NormalEquations> {
    let assoc = Associator::new(target, pose, max_dist, stride)?;
    let partials: Vec<NormalEquations> = src
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut acc = NormalEquations::zero();
            for c in chunk.iter().filter_map(|p| assoc.pair(p)) {
                acc.push(&c, k);
            }
            acc
        })
        .collect();
    Ok(NormalEquations::sum(&partials))
}

struct Associator<'a> {
    target: &'a ProjectiveTarget<'a>,
    pose: &'a RigidTransform,
    max_dist2: f64,
    stride: usize,
    view_rows: usize,
    view_cols: usize,
}

impl<'a> Associator<'a> {
    fn new(
        target: &'a ProjectiveTarget<'a>,
        pose: &'a RigidTransform,
        max_dist: f64,
        stride: usize,
    ) -> Result<Self> {
        let intr = target.intrinsics;
        let (h, w) = (intr.height(), intr.width());
        target.image.check_intrinsics(intr)?;
        if target.normals.rows() != h || target.normals.cols() != w {
            return Err(Error::MissingNormals);
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        Ok(Self {
            target,
            pose,
            max_dist2: max_dist * max_dist,
            stride,
            view_rows: h.div_ceil(stride),
            view_cols: w.div_ceil(stride),
        })
    }

    #[inline]
    fn pair(&self, p: &Point3) -> Option<Correspondence> {
        let intr = self.target.intrinsics;
        let s = self.stride as f64;
        let x = self.pose.apply(p);
        let ray = intr.project(&x).ok()?;
        let i = ((ray.v as f64 / s + 0.5).floor() as usize).min(self.view_rows - 1);
        let mut j = (ray.u / s + 0.5).floor() as usize;
        if j >= self.view_cols {
            j = 0;
        }
        let (row, col) = (i * self.stride, j * self.stride);
        let range = self.target.image.get(row, col);
        if range <= 0.0 {
            return None;
        }
        let normal = self.target.normals.get(row, col)?;
        let q = intr.unproject_pixel(col, row, range);
        ((x - q).norm_squared() <= self.max_dist2).then_some(Correspondence {
            source: x,
            target: q,
            normal,
        })
    }
}

/// IRLS weight of the pseudo-Huber kernel, `ρ′(e)/e = 1/√(1 + (e/k)²)`.
#[inline]
pub fn robust_weight(residual: f64, k: f64) -> f64 {
    let s = residual / k;
    1.0 / (1.0 + s * s).sqrt()
}

/// Pseudo-Huber loss `ρ(e) = k²(√(1 + (e/k)²) − 1)`.
#[inline]
pub fn pseudo_huber(residual: f64, k: f64) -> f64 {
    let s = residual / k;
    k * k * ((1.0 + s * s).sqrt() - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEquations {
    pub hessian: Matrix6<f64>,
    /// `Σ wᵢ Jᵢ rᵢ`, the gradient of the robust cost.
    pub gradient: Vector6<f64>,
    /// `Σ ρ(rᵢ)`.
    pub cost: f64,
    pub squared_residuals: f64,
    pub count: usize,
}

impl NormalEquations {
    fn zero() -> Self {
        Self {
            hessian: Matrix6::zeros(),
            gradient: Vector6::zeros(),
            cost: 0.0,
            squared_residuals: 0.0,
            count: 0,
        }
    }

    #[inline]
    fn push(&mut self, c: &Correspondence, k: f64) {
        let r = c.residual();
        let j = c.jacobian();
        let wj = j * robust_weight(r, k);
        self.hessian += wj * j.transpose();
        self.gradient += wj * r;
        self.cost += pseudo_huber(r, k);
        self.squared_residuals += r * r;
        self.count += 1;
    }

    fn sum(partials: &[Self]) -> Self {
        let mut total = Self::zero();
        for p in partials {
            total.hessian += p.hessian;
            total.gradient += p.gradient;
            total.cost += p.cost;
            total.squared_residuals += p.squared_residuals;
            total.count += p.count;
        }
        total
    }
}

pub fn accumulate_normal_equations(corr: &[Correspondence], k: f64) -> NormalEquations {
    let partials: Vec<NormalEquations> = corr
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut acc = NormalEquations::zero();
            for c in chunk {
                acc.push(c, k);
            }
            acc
        })
        .collect();
    NormalEquations::sum(&partials)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussNewtonStep {
    pub twist: Twist,
    /// Robust cost at the linearization point.
    pub cost: f64,
    pub rmse: f64,
    pub count: usize,
}

/// One IRLS Gauss–Newton step: solves `(Σ wJJᵀ) ξ = −Σ wJr`.
pub fn gauss_newton_step(corr: &[Correspondence], k: f64) -> Result<GaussNewtonStep> {
    if corr.len() < 6 {
        return Err(Error::EmptyInput(
            "Gauss-Newton needs at least 6 correspondences",
        ));
    }
    solve_step(&accumulate_normal_equations(corr, k))
}

/// Solves accumulated normal equations for the Gauss–Newton twist.
pub fn solve_step(eq: &NormalEquations) -> Result<GaussNewtonStep> {
    if eq.count < 6 {
        return Err(Error::EmptyInput(
            "Gauss-Newton needs at least 6 correspondences",
        ));
    }
    let twist = solve_normal_equations(&eq.hessian, &eq.gradient)?;
    Ok(GaussNewtonStep {
        twist,
        cost: eq.cost,
        rmse: (eq.squared_residuals / eq.count as f64).sqrt(),
        count: eq.count,
    })
}

fn solve_normal_equations(h: &Matrix6<f64>, g: &Vector6<f64>) -> Result<Twist> {
    let eig = SymmetricEigen::new(*h);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::DegenerateGeometry { condition });
    }
    match h.cholesky() {
        Some(chol) => Ok(-chol.solve(g)),
        None => Err(Error::DegenerateGeometry {
            condition: f64::INFINITY,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub level: usize,
    pub stride: usize,
    pub correspondences: usize,
    pub cost: f64,
    pub inlier_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    /// Maps source-frame points into the destination frame.
    pub pose: RigidTransform,
    pub iterations: Vec<IterationStats>,
    /// The finest level stopped on the step thresholds.
    pub converged: bool,
    pub elapsed_ms: f64,
}

/// Aligns `src_img` to `dst_img`, computing destination normals first.
pub fn register(
    src_img: &RangeImage,
    dst_img: &RangeImage,
    intr: &LidarIntrinsics,
    init: &RigidTransform,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let start = Instant::now();
    config.validate()?;
    let normals = compute_normal_map(dst_img, intr, &config.normals)?;
    let mut result = register_with_normals(src_img, dst_img, &normals, intr, init, config)?;
    result.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(result)
}

/// [`register`] with precomputed full-resolution destination normals.
pub fn register_with_normals(
    src_img: &RangeImage,
    dst_img: &RangeImage,
    dst_normals: &NormalImage,
    intr: &LidarIntrinsics,
    init: &RigidTransform,
    config: &RegistrationConfig,
) -> Result<RegistrationResult> {
    let start = Instant::now();
    config.validate()?;
    src_img.check_intrinsics(intr)?;
    if !init.is_valid(1e-6) {
        return Err(Error::InvalidPose(
            "initial pose is not a rigid transform".into(),
        ));
    }
    let target = ProjectiveTarget {
        image: dst_img,
        normals: dst_normals,
        intrinsics: intr,
    };
    let mut pose = *init;
    let mut stats = Vec::new();
    let mut converged = false;

    for (level, sched) in config.schedule.iter().enumerate() {
        let src = strided_point_cloud(
            &src_img.strided(sched.stride),
            intr,
            config.clip_min,
            config.clip_max,
        );
        converged = false;
        let gate = if config.scale_gate_with_stride {
            config.max_correspondence_distance * sched.stride as f64
        } else {
            config.max_correspondence_distance
        };
        for _ in 0..sched.iterations {
            let eq = accumulate_projective(
                &src,
                &target,
                &pose,
                gate,
                sched.stride,
                config.kernel_scale,
            )?;
            if eq.count < 6 {
                log::warn!(
                    "registration lost correspondences at level {level} ({} pairs)",
                    eq.count
                );
                return Ok(RegistrationResult {
                    pose,
                    iterations: stats,
                    converged: false,
                    elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
                });
            }
            let step = solve_step(&eq)?;
            pose = pose.left_update(&step.twist);
            stats.push(IterationStats {
                level,
                stride: sched.stride,
                correspondences: step.count,
                cost: step.cost,
                inlier_rmse: step.rmse,
            });
            let dw = step.twist.fixed_rows::<3>(0).norm();
            let dt = step.twist.fixed_rows::<3>(3).norm();
            if dw < config.rotation_threshold && dt < config.translation_threshold {
                converged = true;
                break;
            }
        }
    }
    Ok(RegistrationResult {
        pose,
        iterations: stats,
        converged,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> Vec<Correspondence> {
        (0..n)
            .map(|_| {
                let normal = Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                let target = Point3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-3.0..3.0),
                );
                let source = target
                    + Point3::new(
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                    );
                Correspondence {
                    source,
                    target,
                    normal,
                }
            })
            .collect()
    }

    fn cost_after(corr: &[Correspondence], xi: &Twist, k: f64) -> f64 {
        let t = RigidTransform::exp(xi);
        corr.iter()
            .map(|c| {
                let r = c.normal.dot(&(t.apply(&c.source) - c.target));
                pseudo_huber(r, k)
            })
            .sum()
    }

    #[test]
    fn weight_closed_forms() {
        assert_eq!(robust_weight(0.0, 0.5), 1.0);
        assert!((robust_weight(0.5, 0.5) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weight_is_derivative_over_residual() {
        let k = 0.3;
        let h = 1e-6;
        for i in -50..=50 {
            let e = i as f64 * 0.1 * k + 1e-3;
            let fd = (pseudo_huber(e + h, k) - pseudo_huber(e - h, k)) / (2.0 * h);
            assert!((fd - robust_weight(e, k) * e).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_residuals_give_zero_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut corr = random_problem(&mut rng, 40);
        for c in &mut corr {
            c.source = c.target;
        }
        let step = gauss_newton_step(&corr, 0.5).unwrap();
        assert_eq!(step.twist, Twist::zeros());
        assert_eq!(step.cost, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 0.2;
        for _ in 0..20 {
            let corr = random_problem(&mut rng, 50);
            let eq = accumulate_normal_equations(&corr, k);
            let h = 1e-6;
            for d in 0..6 {
                let mut e = Twist::zeros();
                e[d] = h;
                let fd = (cost_after(&corr, &e, k) - cost_after(&corr, &(-e), k)) / (2.0 * h);
                let rel = (fd - eq.gradient[d]).abs() / eq.gradient.norm();
                assert!(rel < 1e-5, "dim {d}: fd {fd} vs {}", eq.gradient[d]);
            }
        }
    }

    #[test]
    fn single_plane_is_degenerate() {
        let corr: Vec<Correspondence> = (0..100)
            .map(|i| {
                let t = Point3::new((i % 10) as f64, (i / 10) as f64, 2.0);
                Correspondence {
                    source: t + Point3::new(0.0, 0.0, 0.1),
                    target: t,
                    normal: Point3::z(),
                }
            })
            .collect();
        assert!(matches!(
            gauss_newton_step(&corr, 0.5),
            Err(Error::DegenerateGeometry { .. })
        ));
    }

    #[test]
    fn large_kernel_recovers_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let corr = random_problem(&mut rng, 60);
        let robust = gauss_newton_step(&corr, 1e12).unwrap();
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for c in &corr {
            let j = c.jacobian();
            h += j * j.transpose();
            g += j * c.residual();
        }
        let plain = -h.cholesky().unwrap().solve(&g);
        assert!((robust.twist - plain).norm() < 1e-9 * plain.norm().max(1.0));
    }

    #[test]
    fn too_few_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(gauss_newton_step(&random_problem(&mut rng, 5), 0.5).is_err());
    }

    #[test]
    fn centroid_translation() {
        let src = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(2.0, 4.0, -1.0)];
        let dst: Vec<Point3> = src.iter().map(|p| p + Point3::new(1.0, 2.0, 3.0)).collect();
        let t = initial_translation_by_centroids(&src, &dst).unwrap();
        assert!((t.translation - Point3::new(1.0, 2.0, 3.0)).norm() < 1e-15);
        assert_eq!(t.rotation, nalgebra::Matrix3::identity());
        assert_eq!(
            initial_translation_by_centroids(&src, &src)
                .unwrap()
                .translation,
            Point3::zeros()
        );
        assert!(initial_translation_by_centroids(&[], &dst).is_err());
    }

    #[test]
    fn schedule_parsing_and_validation() {
        let s = parse_schedule("4:20, 2:20,1:10").unwrap();
        assert_eq!(s, RegistrationConfig::multi_scale().schedule);
        assert!(parse_schedule("4-20").is_err());
        assert!(RegistrationConfig::with_schedule(vec![
            ScheduleLevel::new(1, 5),
            ScheduleLevel::new(2, 5)
        ])
        .validate()
        .is_err());
        assert!(
            RegistrationConfig::with_schedule(vec![ScheduleLevel::new(1, 0)])
                .validate()
                .is_err()
        );
    }

    #[test]
    fn reduction_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let corr = random_problem(&mut rng, 10_000);
        let a = accumulate_normal_equations(&corr, 0.5);
        let b = accumulate_normal_equations(&corr, 0.5);
        assert_eq!(a, b);
    }

    #[test]
    fn fused_pass_matches_two_pass() {
        use crate::range_image::{compute_normal_map, to_point_cloud, NormalConfig};
        use crate::synth::{render_scene, Scene};
        let intr = LidarIntrinsics::synthetic(32, 256, -0.4, 0.4).unwrap();
        let scene = Scene::urban_block();
        let dst = render_scene(&scene, &intr, &RigidTransform::identity()).unwrap();
        let normals = compute_normal_map(&dst, &intr, &NormalConfig::default()).unwrap();
        let target = ProjectiveTarget {
            image: &dst,
            normals: &normals,
            intrinsics: &intr,
        };
        let src = to_point_cloud(&dst, &intr, 0.0, f64::INFINITY).unwrap();
        let pose = RigidTransform::from_axis_angle(
            Point3::new(0.0, 0.01, 0.02),
            Point3::new(0.3, -0.1, 0.05),
        );
        for stride in [1, 2, 4] {
            let corr = projective_correspondences(&src, &target, &pose, 0.5, stride).unwrap();
            let two_pass = accumulate_normal_equations(&corr, 0.5);
            let fused = accumulate_projective(&src, &target, &pose, 0.5, stride, 0.5).unwrap();
            assert!(corr.len() > 100);
            assert_eq!(fused.count, two_pass.count);
            assert!((fused.hessian - two_pass.hessian).norm() <= 1e-9 * two_pass.hessian.norm());
            assert!((fused.gradient - two_pass.gradient).norm() <= 1e-9 * two_pass.gradient.norm());
            assert!((fused.cost - two_pass.cost).abs() <= 1e-9 * two_pass.cost);
        }
    }
}
