//! Axis-aligned boxes in pixel coordinates, shared by ground truth,
//! hypotheses and the metrics engine.

use serde::{Deserialize, Serialize};

/// Center/size box. The box spans `[cx - w/2, cx + w/2) × [cy - h/2, cy + h/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BoundingBox { cx, cy, w, h }
    }

    /// Build from an inclusive pixel-support range.
    pub fn from_extent(x_min: usize, x_max: usize, y_min: usize, y_max: usize) -> Self {
        let w = (x_max - x_min + 1) as f64;
        let h = (y_max - y_min + 1) as f64;
        BoundingBox {
            cx: x_min as f64 + w / 2.0,
            cy: y_min as f64 + h / 2.0,
            w,
            h,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.cx - self.w / 2.0
    }
    pub fn x_max(&self) -> f64 {
        self.cx + self.w / 2.0
    }
    pub fn y_min(&self) -> f64 {
        self.cy - self.h / 2.0
    }
    pub fn y_max(&self) -> f64 {
        self.cy + self.h / 2.0
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Intersection-over-union; 0 when either box is degenerate.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = (self.x_max().min(other.x_max()) - self.x_min().max(other.x_min())).max(0.0);
        let iy = (self.y_max().min(other.y_max()) - self.y_min().max(other.y_min())).max(0.0);
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}
