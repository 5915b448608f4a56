//! Analytic scenes rendered into exact range images.
//!
//! Every pixel casts the same ray that [`LidarIntrinsics::unproject_pixel`]
//! walks along (origin on the receiver cylinder) and intersects it with the
//! scene primitives in closed form.
//!
//! Scene files are JSON arrays of primitives:
//!
//! ```json
//! [
//!   {"type": "plane", "normal": [0, 0, 1], "offset": -1.8},
//!   {"type": "sphere", "center": [4, 1, 0], "radius": 1.0},
//!   {"type": "box", "center": [0, 0, 1], "half_extents": [10, 8, 3], "rotation": [0, 0, 0.2]}
//! ]
//! ```
//!
//! Planes satisfy `normal · x = offset`. Box `rotation` is an axis-angle
//! vector (radians) applied about the box center.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lidar_model::LidarIntrinsics;
use crate::range_image::RangeImage;
use crate::transform::{rodrigues, Point3, RigidTransform};

/// Hits closer than this to the ray origin are ignored.
const MIN_HIT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Primitive {
    Plane {
        normal: [f64; 3],
        offset: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
        #[serde(default)]
        rotation: [f64; 3],
    },
}

impl Primitive {
    pub fn plane(normal: Vector3<f64>, offset: f64) -> Self {
        let n = normal.normalize();
        Primitive::Plane {
            normal: [n.x, n.y, n.z],
            offset: offset / normal.norm(),
        }
    }

    pub fn sphere(center: Point3, radius: f64) -> Self {
        Primitive::Sphere {
            center: [center.x, center.y, center.z],
            radius,
        }
    }

    pub fn aabb(center: Point3, half_extents: Vector3<f64>) -> Self {
        Primitive::Box {
            center: [center.x, center.y, center.z],
            half_extents: [half_extents.x, half_extents.y, half_extents.z],
            rotation: [0.0; 3],
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Plane { normal, offset } => {
                let n = Vector3::from(*normal);
                n.norm() > 0.0 && offset.is_finite() && n.iter().all(|c| c.is_finite())
            }
            Primitive::Sphere { center, radius } => {
                *radius > 0.0 && center.iter().all(|c| c.is_finite())
            }
            Primitive::Box {
                center,
                half_extents,
                rotation,
            } => {
                half_extents.iter().all(|h| *h > 0.0 && h.is_finite())
                    && center.iter().chain(rotation).all(|c| c.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid primitive {self:?}")))
        }
    }

    fn box_frame(center: &[f64; 3], rotation: &[f64; 3]) -> (Point3, Matrix3<f64>) {
        let rot = if rotation.iter().all(|&a| a == 0.0) {
            Matrix3::identity()
        } else {
            rodrigues(&Vector3::from(*rotation))
        };
        (Vector3::from(*center), rot)
    }

    /// Smallest hit distance `t > 0` along a unit-direction ray.
    pub fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::Plane { normal, offset } => {
                let n = Vector3::from(*normal).normalize();
                let off = offset / Vector3::from(*normal).norm();
                let denom = n.dot(dir);
                if denom == 0.0 {
                    return None;
                }
                let t = (off - n.dot(origin)) / denom;
                (t > MIN_HIT).then_some(t)
            }
            Primitive::Sphere { center, radius } => {
                let oc = origin - Vector3::from(*center);
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                // numerically stable root pair
                let q = if b > 0.0 { -b - sq } else { -b + sq };
                let (mut t0, mut t1) = (q, c / q);
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                if t0 > MIN_HIT {
                    Some(t0)
                } else if t1 > MIN_HIT {
                    Some(t1)
                } else {
                    None
                }
            }
            Primitive::Box {
                center,
                half_extents,
                rotation,
            } => {
                let (c, rot) = Self::box_frame(center, rotation);
                let o = rot.transpose() * (origin - c);
                let d = rot.transpose() * dir;
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for k in 0..3 {
                    let h = half_extents[k];
                    if d[k] == 0.0 {
                        if o[k].abs() > h {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = ((-h - o[k]) / d[k], (h - o[k]) / d[k]);
                    let (a, b) = if a < b { (a, b) } else { (b, a) };
                    t_near = t_near.max(a);
                    t_far = t_far.min(b);
                }
                if t_near > t_far {
                    None
                } else if t_near > MIN_HIT {
                    Some(t_near)
                } else if t_far > MIN_HIT {
                    Some(t_far)
                } else {
                    None
                }
            }
        }
    }

    /// Signed Euclidean distance to the primitive's surface (positive on the
    /// side the plane normal points to, outside for spheres and boxes).
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        match self {
            Primitive::Plane { normal, offset } => {
                let n = Vector3::from(*normal);
                (n.dot(p) - offset) / n.norm()
            }
            Primitive::Sphere { center, radius } => (p - Vector3::from(*center)).norm() - radius,
            Primitive::Box {
                center,
                half_extents,
                rotation,
            } => {
                let (c, rot) = Self::box_frame(center, rotation);
                let q = rot.transpose() * (p - c);
                let d = q.abs() - Vector3::from(*half_extents);
                let outside = d.map(|x| x.max(0.0)).norm();
                let inside = d.x.max(d.y).max(d.z).min(0.0);
                outside + inside
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Self { primitives }
    }

    pub fn validate(&self) -> Result<()> {
        if self.primitives.is_empty() {
            return Err(Error::EmptyInput("scene has no primitives"));
        }
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    /// A street between two rows of buildings with pillars, kerbside boxes
    /// and round obstacles on a ground plane 1.8 m below the origin. Every
    /// direction is constrained by some surface, and the layout is aperiodic
    /// so that registration has a unique optimum.
    pub fn urban_block() -> Scene {
        let mut p = vec![Primitive::plane(Vector3::z(), -1.8)];
        let buildings = [
            (-30.0, 5.0, 0.05),
            (-19.0, 4.0, -0.02),
            (-8.5, 5.5, 0.1),
            (3.0, 4.5, 0.0),
            (13.0, 3.5, -0.08),
            (22.0, 5.0, 0.04),
            (33.0, 4.0, 0.12),
        ];
        for (i, &(x, half_len, yaw)) in buildings.iter().enumerate() {
            let set_back = 1.3 * ((i * 7 % 5) as f64);
            let height = 4.0 + (i % 3) as f64 * 2.5;
            for side in [-1.0, 1.0] {
                let y = side * (9.0 + set_back + if side < 0.0 { 1.7 } else { 0.0 });
                p.push(Primitive::Box {
                    center: [x + side * 1.1, y + side * 3.0, height / 2.0 - 1.8],
                    half_extents: [half_len, 3.0, height / 2.0],
                    rotation: [0.0, 0.0, yaw * side],
                });
            }
        }
        for (k, &(x, y)) in [
            (-24.0, 5.5),
            (-14.0, -6.0),
            (-5.0, 6.0),
            (6.5, -5.5),
            (9.0, 6.3),
            (17.0, -6.2),
            (27.5, 5.8),
        ]
        .iter()
        .enumerate()
        {
            let h = 1.5 + 0.5 * (k % 4) as f64;
            p.push(Primitive::Box {
                center: [x, y, h / 2.0 - 1.8],
                half_extents: [0.25, 0.25, h / 2.0],
                rotation: [0.0, 0.0, 0.3 * k as f64],
            });
        }
        p.push(Primitive::aabb(
            Point3::new(-11.0, -4.0, -1.3),
            Vector3::new(2.2, 0.9, 0.5),
        ));
        p.push(Primitive::aabb(
            Point3::new(14.5, 3.8, -1.1),
            Vector3::new(1.8, 0.8, 0.7),
        ));
        p.push(Primitive::sphere(Point3::new(-2.0, -5.0, -0.6), 1.2));
        p.push(Primitive::sphere(Point3::new(20.0, 4.5, -0.8), 1.0));
        p.push(Primitive::sphere(Point3::new(-20.0, -4.8, -0.4), 1.4));
        p.push(Primitive::Box {
            center: [48.0, 2.0, 3.0],
            half_extents: [1.5, 12.0, 5.0],
            rotation: [0.0, 0.0, 0.25],
        });
        p.push(Primitive::Box {
            center: [-46.0, -1.0, 2.0],
            half_extents: [1.5, 12.0, 4.0],
            rotation: [0.0, 0.0, -0.2],
        });
        Scene::new(p)
    }

    /// Nearest hit over all primitives.
    pub fn intersect(&self, origin: &Point3, dir: &Vector3<f64>) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(origin, dir))
            .min_by(f64::total_cmp)
    }

    /// Unsigned distance from `p` to the nearest primitive surface.
    pub fn distance(&self, p: &Point3) -> f64 {
        self.primitives
            .iter()
            .map(|q| q.signed_distance(p).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Standard deviation of additive Gaussian range noise; 0 disables.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Hits beyond this range are reported as no return.
    pub max_range: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            noise_sigma: 0.0,
            seed: 0,
            max_range: f64::INFINITY,
        }
    }
}

pub fn render_scene(
    scene: &Scene,
    intr: &LidarIntrinsics,
    world_from_sensor: &RigidTransform,
) -> Result<RangeImage> {
    render_scene_with(scene, intr, world_from_sensor, &RenderOptions::default())
}

pub fn render_scene_with(
    scene: &Scene,
    intr: &LidarIntrinsics,
    world_from_sensor: &RigidTransform,
    options: &RenderOptions,
) -> Result<RangeImage> {
    scene.validate()?;
    let (rows, cols) = (intr.height(), intr.width());
    let mut data = vec![0.0f64; rows * cols];
    data.par_chunks_mut(cols).enumerate().for_each(|(v, out)| {
        for (u, slot) in out.iter_mut().enumerate() {
            let (o, d) = intr.ray(u, v);
            let origin = world_from_sensor.apply(&o);
            let dir = world_from_sensor.rotation * d;
            if let Some(t) = scene.intersect(&origin, &dir) {
                if t <= options.max_range {
                    *slot = t;
                }
            }
        }
    });
    if options.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, options.noise_sigma)
            .map_err(|e| Error::InvalidConfig(format!("noise sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        for r in data.iter_mut().filter(|r| **r > 0.0) {
            *r = (*r + noise.sample(&mut rng)).max(0.0);
        }
    }
    RangeImage::from_data(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::range_image::to_point_cloud;

    fn calibrated() -> LidarIntrinsics {
        let h = 16;
        let az = (0..h).map(|v| 0.01 * ((v as f64) * 0.7).sin()).collect();
        let el = (0..h).map(|v| 0.3 - 0.04 * v as f64).collect();
        LidarIntrinsics::calibrated(128, h, 0.05, az, el).unwrap()
    }

    #[test]
    fn plane_hit_matches_closed_form() {
        let intr = calibrated();
        let d = 6.0;
        let scene = Scene::new(vec![Primitive::plane(Vector3::x(), d)]);
        let img = render_scene(&scene, &intr, &RigidTransform::identity()).unwrap();
        for v in 0..16 {
            let (o, dir) = intr.ray(0, v);
            let expected = (d - o.x) / dir.x;
            assert!((img.get(v, 0) - expected).abs() < 1e-12);
        }
        // column 0 on a zero-offset, zero-elevation ray: r = D - r0
        let flat =
            LidarIntrinsics::calibrated(128, 3, 0.05, vec![0.0; 3], vec![0.1, 0.0, -0.1]).unwrap();
        let img = render_scene(&scene, &flat, &RigidTransform::identity()).unwrap();
        assert!((img.get(1, 0) - (d - 0.05)).abs() < 1e-12);
    }

    #[test]
    fn sphere_on_axis() {
        let intr = LidarIntrinsics::synthetic(9, 256, -0.4, 0.4).unwrap();
        let scene = Scene::new(vec![Primitive::sphere(Point3::new(5.0, 0.0, 0.0), 1.0)]);
        let img = render_scene(&scene, &intr, &RigidTransform::identity()).unwrap();
        assert!((img.get(4, 0) - 4.0).abs() < 1e-12);
        // looking away from the sphere
        assert_eq!(img.get(4, 128), 0.0);
        // silhouette: rays at elevation beyond asin(1/5) miss
        assert_eq!(img.get(0, 0), 0.0);
    }

    #[test]
    fn rendered_points_lie_on_primitives() {
        let intr = calibrated();
        let prims = vec![
            Primitive::plane(Vector3::new(0.0, 0.0, 1.0), -1.5),
            Primitive::sphere(Point3::new(3.0, 2.0, 0.0), 0.8),
            Primitive::Box {
                center: [0.0, 0.0, 0.5],
                half_extents: [8.0, 6.0, 3.0],
                rotation: [0.0, 0.0, 0.3],
            },
        ];
        let scene = Scene::new(prims);
        let pose = RigidTransform::from_axis_angle(
            Vector3::new(0.02, -0.01, 0.4),
            Vector3::new(0.5, -0.3, 0.1),
        );
        let img = render_scene(&scene, &intr, &pose).unwrap();
        assert!(img.valid_count() > 0);
        for p in to_point_cloud(&img, &intr, 0.0, f64::INFINITY).unwrap() {
            let w = pose.apply(&p);
            assert!(scene.distance(&w) < 1e-9, "residual {}", scene.distance(&w));
        }
    }

    #[test]
    fn noise_is_seeded() {
        let intr = LidarIntrinsics::synthetic(8, 64, -0.3, 0.3).unwrap();
        let scene = Scene::new(vec![Primitive::aabb(
            Point3::zeros(),
            Vector3::new(5.0, 5.0, 5.0),
        )]);
        let opts = RenderOptions {
            noise_sigma: 0.01,
            seed: 3,
            ..Default::default()
        };
        let a = render_scene_with(&scene, &intr, &RigidTransform::identity(), &opts).unwrap();
        let b = render_scene_with(&scene, &intr, &RigidTransform::identity(), &opts).unwrap();
        let clean = render_scene(&scene, &intr, &RigidTransform::identity()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, clean);
    }

    #[test]
    fn empty_scene_is_rejected() {
        let intr = LidarIntrinsics::synthetic(8, 64, -0.3, 0.3).unwrap();
        assert!(render_scene(&Scene::default(), &intr, &RigidTransform::identity()).is_err());
    }

    #[test]
    fn scene_json_round_trip() {
        let json = r#"[{"type":"plane","normal":[0,0,1],"offset":-1.8},
                       {"type":"sphere","center":[4,1,0],"radius":1.0},
                       {"type":"box","center":[0,0,1],"half_extents":[10,8,3]}]"#;
        let scene: Scene = serde_json::from_str(json).unwrap();
        assert_eq!(scene.primitives.len(), 3);
        let back: Scene = serde_json::from_str(&serde_json::to_string(&scene).unwrap()).unwrap();
        assert_eq!(scene, back);
    }
}
