use serde::{Deserialize, Serialize};

use super::{Camera, SceneError, SceneObject};

/// Integer pixel rectangle, `[x, x+w) × [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn intersection_area(&self, o: &Rect) -> u64 {
        let w = self.right().min(o.right()).saturating_sub(self.x.max(o.x));
        let h = self.bottom().min(o.bottom()).saturating_sub(self.y.max(o.y));
        w as u64 * h as u64
    }
}

/// Grayscale frame, row-major intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<f32>,
    pub timestamp_us: i64,
    pub gaze_px: (f64, f64),
}

impl Frame {
    pub fn filled(width: u32, height: u32, value: f32, timestamp_us: i64, gaze_px: (f64, f64)) -> Self {
        Self { width, height, pixels: vec![value; width as usize * height as usize], timestamp_us, gaze_px }
    }

    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn fill_rect(&mut self, r: Rect, value: f32) {
        let x1 = r.right().min(self.width);
        let y1 = r.bottom().min(self.height);
        for y in r.y.min(y1)..y1 {
            let row = y as usize * self.width as usize;
            self.pixels[row + r.x.min(x1) as usize..row + x1 as usize].fill(value);
        }
    }

    pub fn crop(&self, r: Rect) -> Vec<f32> {
        let mut out = Vec::with_capacity(r.area() as usize);
        for y in r.y..r.bottom() {
            let row = y as usize * self.width as usize;
            out.extend_from_slice(&self.pixels[row + r.x as usize..row + r.right() as usize]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roi {
    pub rect: Rect,
    pub crop: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiParams {
    pub radius_px: f64,
    pub tau: f32,
    pub margin_px: u32,
    pub min_area_px: usize,
    pub max_rois: usize,
}

impl Default for RoiParams {
    fn default() -> Self {
        Self { radius_px: 120.0, tau: 0.1, margin_px: 8, min_area_px: 16, max_rois: 4 }
    }
}

/// Temporal-differencing ROIs near the gaze point, largest first.
pub fn extract_rois(prev: &Frame, cur: &Frame, params: &RoiParams) -> Result<Vec<Roi>, SceneError> {
    if (prev.width, prev.height) != (cur.width, cur.height) {
        return Err(SceneError::DimensionMismatch((prev.width, prev.height), (cur.width, cur.height)));
    }
    let (w, h) = (cur.width as usize, cur.height as usize);
    let (gx, gy) = cur.gaze_px;
    let r2 = params.radius_px * params.radius_px;
    let mut mask = vec![false; w * h];
    for y in 0..h {
        let dy = y as f64 - gy;
        for x in 0..w {
            let dx = x as f64 - gx;
            let i = y * w + x;
            mask[i] = dx * dx + dy * dy <= r2 && (cur.pixels[i] - prev.pixels[i]).abs() > params.tau;
        }
    }

    let mut comps: Vec<(usize, Rect)> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask[start] {
            continue;
        }
        mask[start] = false;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1, mut count) = (w, h, 0, 0, 0);
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            count += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            let mut visit = |j: usize| {
                if mask[j] {
                    mask[j] = false;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if count < params.min_area_px {
            continue;
        }
        let m = params.margin_px as usize;
        let (ex0, ey0) = (x0.saturating_sub(m), y0.saturating_sub(m));
        let (ex1, ey1) = ((x1 + 1 + m).min(w), (y1 + 1 + m).min(h));
        comps.push((count, Rect { x: ex0 as u32, y: ey0 as u32, w: (ex1 - ex0) as u32, h: (ey1 - ey0) as u32 }));
    }
    comps.sort_by(|a, b| b.1.area().cmp(&a.1.area()).then(b.0.cmp(&a.0)).then((a.1.y, a.1.x).cmp(&(b.1.y, b.1.x))));
    comps.truncate(params.max_rois);
    Ok(comps.into_iter().map(|(_, rect)| Roi { rect, crop: cur.crop(rect) }).collect())
}

/// Draws objects as filled projected rectangles, farthest first.
pub fn render_frame(camera: &Camera, objects: &[SceneObject], timestamp_us: i64, gaze_px: (f64, f64)) -> Frame {
    let mut frame = Frame::filled(camera.width, camera.height, 0.2, timestamp_us, gaze_px);
    let mut order: Vec<&SceneObject> = objects.iter().collect();
    order.sort_by(|a, b| b.aabb.center().z.total_cmp(&a.aabb.center().z).then(a.id.cmp(&b.id)));
    for o in order {
        if let Some(r) = camera.project_aabb(&o.aabb) {
            frame.fill_rect(r, 0.45 + 0.08 * (o.id % 6) as f32);
        }
    }
    frame
}
