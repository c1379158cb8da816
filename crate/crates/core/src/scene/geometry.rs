use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use super::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn axis(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    /// Angle between two directions in degrees.
    pub fn angle_deg(self, o: Vec3) -> f64 {
        let c = self.dot(o) / (self.norm() * o.norm());
        c.clamp(-1.0, 1.0).acos().to_degrees()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

/// Axis-aligned box in camera coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min.axis(i) < self.max.axis(i))
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|i| self.min.axis(i) <= p.axis(i) && p.axis(i) <= self.max.axis(i))
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }

    /// Slab test. Returns the entry distance along `dir` (0 when the origin
    /// is inside the box), or `None` when the ray misses or the box lies
    /// behind the origin.
    pub fn ray_entry(&self, origin: Vec3, dir: Vec3) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for i in 0..3 {
            let (o, d) = (origin.axis(i), dir.axis(i));
            let (lo, hi) = (self.min.axis(i), self.max.axis(i));
            if d.abs() < 1e-15 {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let (t0, t1) = ((lo - o) / d, (hi - o) / d);
            let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
        if t_far < 0.0 {
            return None;
        }
        Some(t_near.max(0.0))
    }
}

/// Pinhole camera with the principal point at the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub focal_px: f64,
    pub baseline_m: f64,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    /// Pixel coordinates of a camera-frame point in front of the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let (cx, cy) = self.principal_point();
        Some((self.focal_px * p.x / p.z + cx, self.focal_px * p.y / p.z + cy))
    }

    /// Pixel rectangle covering the projected box, clipped to the image.
    /// `None` when the box is behind the camera or fully off-screen.
    pub fn project_aabb(&self, b: &Aabb) -> Option<Rect> {
        let pts: Option<Vec<(f64, f64)>> = b.corners().iter().map(|p| self.project(*p)).collect();
        let pts = pts?;
        let (w, h) = (self.width as f64, self.height as f64);
        let fold = |f: fn(&(f64, f64)) -> f64, init: f64, pick: fn(f64, f64) -> f64| pts.iter().map(f).fold(init, pick);
        let x0 = fold(|p| p.0, f64::INFINITY, f64::min).floor().clamp(0.0, w);
        let y0 = fold(|p| p.1, f64::INFINITY, f64::min).floor().clamp(0.0, h);
        let x1 = fold(|p| p.0, f64::NEG_INFINITY, f64::max).ceil().clamp(0.0, w);
        let y1 = fold(|p| p.1, f64::NEG_INFINITY, f64::max).ceil().clamp(0.0, h);
        if x1 <= x0 || y1 <= y0 {
            return None;
        }
        Some(Rect { x: x0 as u32, y: y0 as u32, w: (x1 - x0) as u32, h: (y1 - y0) as u32 })
    }

    /// Unit direction of the ray through pixel `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        let (cx, cy) = self.principal_point();
        Vec3::new((u - cx) / self.focal_px, (v - cy) / self.focal_px, 1.0).normalized()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_hits_and_misses() {
        let b = Aabb { min: Vec3::new(-0.5, -0.5, 1.0), max: Vec3::new(0.5, 0.5, 2.0) };
        let z = Vec3::new(0.0, 0.0, 1.0);
        assert_eq!(b.ray_entry(Vec3::default(), z), Some(1.0));
        assert_eq!(b.ray_entry(Vec3::new(2.0, 0.0, 0.0), z), None);
        assert_eq!(b.ray_entry(Vec3::new(0.0, 0.0, 3.0), z), None);
        assert_eq!(b.ray_entry(Vec3::new(0.0, 0.0, 1.5), z), Some(0.0));
    }

    #[test]
    fn projection_round_trip() {
        let cam = Camera { focal_px: 500.0, baseline_m: 0.06, width: 640, height: 480 };
        let p = Vec3::new(0.1, -0.05, 0.8);
        let (u, v) = cam.project(p).unwrap();
        let ray = cam.pixel_ray(u, v);
        assert!(ray.angle_deg(p) < 1e-9);
    }
}
