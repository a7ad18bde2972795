//! Minimal PNG line plots (metric-vs-noise curves) with a built-in 3×5
//! bitmap font. File-based output only.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{AttmotError, Result};

/// One polyline: label plus (x, y) points in data coordinates.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

const W: u32 = 640;
const H: u32 = 480;
const ML: u32 = 70; // left margin
const MR: u32 = 20;
const MT: u32 = 40;
const MB: u32 = 50;

const PALETTE: [[u8; 3]; 6] = [
    [214, 69, 65],
    [31, 119, 180],
    [44, 160, 44],
    [148, 103, 189],
    [255, 127, 14],
    [23, 190, 207],
];

/// 3×5 glyphs, row-major bits (msb = leftmost), for A–Z, 0–9 and basic
/// punctuation; unknown characters render as blanks.
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_uppercase() {
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        'B' => [0b110, 0b101, 0b110, 0b101, 0b110],
        'C' => [0b011, 0b100, 0b100, 0b100, 0b011],
        'D' => [0b110, 0b101, 0b101, 0b101, 0b110],
        'E' => [0b111, 0b100, 0b110, 0b100, 0b111],
        'F' => [0b111, 0b100, 0b110, 0b100, 0b100],
        'G' => [0b011, 0b100, 0b101, 0b101, 0b011],
        'H' => [0b101, 0b101, 0b111, 0b101, 0b101],
        'I' => [0b111, 0b010, 0b010, 0b010, 0b111],
        'J' => [0b001, 0b001, 0b001, 0b101, 0b010],
        'K' => [0b101, 0b110, 0b100, 0b110, 0b101],
        'L' => [0b100, 0b100, 0b100, 0b100, 0b111],
        'M' => [0b101, 0b111, 0b111, 0b101, 0b101],
        'N' => [0b101, 0b111, 0b111, 0b111, 0b101],
        'O' => [0b010, 0b101, 0b101, 0b101, 0b010],
        'P' => [0b110, 0b101, 0b110, 0b100, 0b100],
        'Q' => [0b010, 0b101, 0b101, 0b011, 0b001],
        'R' => [0b110, 0b101, 0b110, 0b110, 0b101],
        'S' => [0b011, 0b100, 0b010, 0b001, 0b110],
        'T' => [0b111, 0b010, 0b010, 0b010, 0b010],
        'U' => [0b101, 0b101, 0b101, 0b101, 0b111],
        'V' => [0b101, 0b101, 0b101, 0b101, 0b010],
        'W' => [0b101, 0b101, 0b111, 0b111, 0b101],
        'X' => [0b101, 0b101, 0b010, 0b101, 0b101],
        'Y' => [0b101, 0b101, 0b010, 0b010, 0b010],
        'Z' => [0b111, 0b001, 0b010, 0b100, 0b111],
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b011, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '_' => [0b000, 0b000, 0b000, 0b000, 0b111],
        '%' => [0b101, 0b001, 0b010, 0b100, 0b101],
        '=' => [0b000, 0b111, 0b000, 0b111, 0b000],
        ':' => [0b000, 0b010, 0b000, 0b010, 0b000],
        '/' => [0b001, 0b001, 0b010, 0b100, 0b100],
        _ => [0; 5],
    }
}

fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64, scale: u32, color: [u8; 3]) {
    let mut cx = x;
    for ch in text.chars() {
        let g = glyph(ch);
        for (ry, row) in g.iter().enumerate() {
            for rx in 0..3 {
                if row & (0b100 >> rx) != 0 {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            let px = cx + (rx as i64) * scale as i64 + sx as i64;
                            let py = y + (ry as i64) * scale as i64 + sy as i64;
                            if px >= 0 && py >= 0 && (px as u32) < W && (py as u32) < H {
                                img.put_pixel(px as u32, py as u32, Rgb(color));
                            }
                        }
                    }
                }
            }
        }
        cx += 4 * scale as i64;
    }
}

fn draw_line(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < W && (y as u32) < H {
            img.put_pixel(x as u32, y as u32, Rgb(color));
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Render a line plot to a PNG file.
pub fn line_plot(
    series: &[Series],
    title: &str,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(AttmotError::validation("line_plot: no data"));
    }
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let pts = || series.iter().flat_map(|s| s.points.iter().copied());
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts() {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    // pad the y range a little so curves don't sit on the frame
    let ypad = 0.05 * (y_max - y_min);
    y_min -= ypad;
    y_max += ypad;

    let to_px = |x: f64, y: f64| {
        let px = ML as f64 + (x - x_min) / (x_max - x_min) * (W - ML - MR) as f64;
        let py = (H - MB) as f64 - (y - y_min) / (y_max - y_min) * (H - MT - MB) as f64;
        (px.round() as i64, py.round() as i64)
    };

    let black = [0u8, 0, 0];
    let gray = [200u8, 200, 200];
    // gridlines + tick labels (5 per axis)
    for i in 0..=4 {
        let xv = x_min + (x_max - x_min) * i as f64 / 4.0;
        let yv = y_min + (y_max - y_min) * i as f64 / 4.0;
        let (gx, _) = to_px(xv, y_min);
        let (_, gy) = to_px(x_min, yv);
        draw_line(&mut img, gx, MT as i64, gx, (H - MB) as i64, gray);
        draw_line(&mut img, ML as i64, gy, (W - MR) as i64, gy, gray);
        draw_text(&mut img, &format!("{xv:.2}"), gx - 14, (H - MB + 8) as i64, 2, black);
        draw_text(&mut img, &format!("{yv:.1}"), 8, gy - 5, 2, black);
    }
    // axes
    draw_line(&mut img, ML as i64, MT as i64, ML as i64, (H - MB) as i64, black);
    draw_line(&mut img, ML as i64, (H - MB) as i64, (W - MR) as i64, (H - MB) as i64, black);
    draw_text(&mut img, title, ML as i64, 10, 3, black);
    draw_text(&mut img, x_label, (W / 2) as i64 - 20, (H - 18) as i64, 2, black);
    draw_text(&mut img, y_label, 8, (MT - 20) as i64, 2, black);

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut sorted = s.points.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in sorted.windows(2) {
            let (x0, y0) = to_px(w[0].0, w[0].1);
            let (x1, y1) = to_px(w[1].0, w[1].1);
            draw_line(&mut img, x0, y0, x1, y1, color);
            draw_line(&mut img, x0, y0 + 1, x1, y1 + 1, color);
        }
        for &(x, y) in &sorted {
            let (px, py) = to_px(x, y);
            for dy in -2..=2i64 {
                for dx in -2..=2i64 {
                    if dx * dx + dy * dy <= 4 {
                        let (qx, qy) = (px + dx, py + dy);
                        if qx >= 0 && qy >= 0 && (qx as u32) < W && (qy as u32) < H {
                            img.put_pixel(qx as u32, qy as u32, Rgb(color));
                        }
                    }
                }
            }
        }
        // legend entry
        let ly = MT as i64 + 14 * si as i64;
        let lx = (W - MR) as i64 - 150;
        draw_line(&mut img, lx, ly + 4, lx + 18, ly + 4, color);
        draw_text(&mut img, &s.label, lx + 24, ly, 2, black);
    }

    img.save(path)
        .map_err(|e| AttmotError::format(format!("{}: {e}", path.display())))
}
