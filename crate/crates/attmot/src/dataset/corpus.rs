//! Glyph sprite sources.
//!
//! Three builtin procedural corpora (digit strokes, cursive strokes, filled
//! silhouettes) plus import of user-supplied grayscale images. Sprites are
//! square, values in [0, 1].

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AttmotError, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Mnist,
    Kuzushiji,
    Fashion,
    External,
}

impl SourceTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceTag::Mnist => "mnist",
            SourceTag::Kuzushiji => "kuzushiji",
            SourceTag::Fashion => "fashion",
            SourceTag::External => "external",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(SourceTag::Mnist),
            "kuzushiji" => Ok(SourceTag::Kuzushiji),
            "fashion" => Ok(SourceTag::Fashion),
            "external" => Ok(SourceTag::External),
            other => Err(AttmotError::validation(format!("unknown dataset tag '{other}'"))),
        }
    }
}

/// A bank of square grayscale sprites with integer class labels.
#[derive(Debug, Clone)]
pub struct GlyphCorpus {
    pub sprites: Vec<Array2<f64>>,
    pub labels: Vec<u8>,
    pub source_tag: SourceTag,
}

impl GlyphCorpus {
    pub fn side(&self) -> usize {
        self.sprites[0].nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sprites.is_empty() {
            return Err(AttmotError::validation("corpus has no sprites"));
        }
        if self.sprites.len() != self.labels.len() {
            return Err(AttmotError::validation("corpus sprites/labels length mismatch"));
        }
        let side = self.sprites[0].nrows();
        for s in &self.sprites {
            if s.nrows() != side || s.ncols() != side {
                return Err(AttmotError::validation(
                    "corpus sprites must all be square with one side length",
                ));
            }
            if s.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(AttmotError::validation("sprite pixel outside [0,1]"));
            }
        }
        Ok(())
    }

    /// Procedural corpus for a builtin tag: `per_class` jittered samples of
    /// each of 10 classes, rendered at `side`×`side`.
    pub fn builtin(tag: SourceTag, side: usize, per_class: usize, seed: u64) -> Result<Self> {
        if tag == SourceTag::External {
            return Err(AttmotError::validation(
                "external corpora come from import, not the builtin generator",
            ));
        }
        if side < 8 {
            return Err(AttmotError::validation("sprite side must be at least 8"));
        }
        let mut sprites = Vec::with_capacity(10 * per_class);
        let mut labels = Vec::with_capacity(10 * per_class);
        for class in 0..10u8 {
            let mut rng = stream_rng(seed, class as u64);
            for _ in 0..per_class {
                let sprite = match tag {
                    SourceTag::Mnist => render_strokes(&digit_strokes(class), side, &mut rng),
                    SourceTag::Kuzushiji => {
                        render_strokes(&cursive_strokes(class), side, &mut rng)
                    }
                    SourceTag::Fashion => render_silhouette(class, side, &mut rng),
                    SourceTag::External => unreachable!(),
                };
                sprites.push(sprite);
                labels.push(class);
            }
        }
        let corpus = GlyphCorpus {
            sprites,
            labels,
            source_tag: tag,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Ingest grayscale PNG sprites from a directory (sorted by file name,
    /// label from the leading integer in the name, bilinear-resized to `side`).
    pub fn from_image_dir(dir: &Path, tag: SourceTag, side: usize) -> Result<Self> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "png"))
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(AttmotError::validation(format!(
                "no .png sprites found in {}",
                dir.display()
            )));
        }
        let mut sprites = Vec::new();
        let mut labels = Vec::new();
        for path in entries {
            let img = image::open(&path)
                .map_err(|e| AttmotError::format(format!("{}: {e}", path.display())))?
                .into_luma8();
            let raw = Array2::from_shape_fn(
                (img.height() as usize, img.width() as usize),
                |(y, x)| img.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0,
            );
            sprites.push(resize_bilinear(&raw, side));
            let label = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.chars().take_while(|c| c.is_ascii_digit()).collect::<String>().parse::<u8>().ok())
                .unwrap_or(0);
            labels.push(label);
        }
        let corpus = GlyphCorpus {
            sprites,
            labels,
            source_tag: tag,
        };
        corpus.validate()?;
        Ok(corpus)
    }
}

/// Bilinear resize of a grayscale image to `side`×`side`.
pub fn resize_bilinear(src: &Array2<f64>, side: usize) -> Array2<f64> {
    let (h, w) = src.dim();
    Array2::from_shape_fn((side, side), |(y, x)| {
        let fy = if side > 1 {
            y as f64 * (h - 1) as f64 / (side - 1) as f64
        } else {
            0.0
        };
        let fx = if side > 1 {
            x as f64 * (w - 1) as f64 / (side - 1) as f64
        } else {
            0.0
        };
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (dy, dx) = (fy - y0 as f64, fx - x0 as f64);
        (1.0 - dy) * ((1.0 - dx) * src[[y0, x0]] + dx * src[[y0, x1]])
            + dy * ((1.0 - dx) * src[[y1, x0]] + dx * src[[y1, x1]])
    })
}

type Stroke = Vec<(f64, f64)>;

fn digit_strokes(class: u8) -> Vec<Stroke> {
    let ring: Stroke = (0..=12)
        .map(|i| {
            let a = i as f64 / 12.0 * std::f64::consts::TAU;
            (0.5 + 0.28 * a.sin(), 0.5 - 0.35 * a.cos())
        })
        .collect();
    match class {
        0 => vec![ring],
        1 => vec![vec![(0.38, 0.25), (0.52, 0.12), (0.52, 0.88)]],
        2 => vec![vec![
            (0.22, 0.3),
            (0.35, 0.14),
            (0.65, 0.14),
            (0.76, 0.3),
            (0.6, 0.55),
            (0.22, 0.86),
            (0.78, 0.86),
        ]],
        3 => vec![vec![
            (0.24, 0.18),
            (0.62, 0.12),
            (0.74, 0.3),
            (0.48, 0.48),
            (0.76, 0.68),
            (0.62, 0.88),
            (0.24, 0.82),
        ]],
        4 => vec![
            vec![(0.62, 0.12), (0.22, 0.6), (0.8, 0.6)],
            vec![(0.62, 0.12), (0.62, 0.88)],
        ],
        5 => vec![vec![
            (0.74, 0.14),
            (0.28, 0.14),
            (0.26, 0.46),
            (0.62, 0.44),
            (0.76, 0.64),
            (0.62, 0.86),
            (0.26, 0.82),
        ]],
        6 => vec![vec![
            (0.66, 0.14),
            (0.36, 0.36),
            (0.28, 0.66),
            (0.44, 0.86),
            (0.68, 0.78),
            (0.68, 0.56),
            (0.32, 0.58),
        ]],
        7 => vec![vec![(0.24, 0.14), (0.76, 0.14), (0.42, 0.88)]],
        8 => vec![
            vec![
                (0.5, 0.12),
                (0.3, 0.25),
                (0.5, 0.46),
                (0.7, 0.25),
                (0.5, 0.12),
            ],
            vec![
                (0.5, 0.46),
                (0.26, 0.66),
                (0.5, 0.9),
                (0.74, 0.66),
                (0.5, 0.46),
            ],
        ],
        _ => vec![
            vec![
                (0.68, 0.4),
                (0.42, 0.46),
                (0.3, 0.28),
                (0.48, 0.12),
                (0.68, 0.22),
            ],
            vec![(0.68, 0.22), (0.66, 0.6), (0.52, 0.88)],
        ],
    }
}

/// Cursive-like glyphs: class-seeded smooth random polylines.
fn cursive_strokes(class: u8) -> Vec<Stroke> {
    let mut rng = stream_rng(0xC0DE, class as u64);
    let n_strokes = 2 + (class as usize % 2);
    (0..n_strokes)
        .map(|_| {
            // cubic Bezier sampled into a polyline
            let p: Vec<(f64, f64)> = (0..4)
                .map(|_| (rng.gen_range(0.15..0.85), rng.gen_range(0.12..0.88)))
                .collect();
            (0..=10)
                .map(|i| {
                    let t = i as f64 / 10.0;
                    let u = 1.0 - t;
                    let x = u * u * u * p[0].0
                        + 3.0 * u * u * t * p[1].0
                        + 3.0 * u * t * t * p[2].0
                        + t * t * t * p[3].0;
                    let y = u * u * u * p[0].1
                        + 3.0 * u * u * t * p[1].1
                        + 3.0 * u * t * t * p[2].1
                        + t * t * t * p[3].1;
                    (x, y)
                })
                .collect()
        })
        .collect()
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2
    }
    .clamp(0.0, 1.0);
    let (dx, dy) = (p.0 - (a.0 + t * vx), p.1 - (a.1 + t * vy));
    (dx * dx + dy * dy).sqrt()
}

fn jitter<R: Rng>(strokes: &[Stroke], rng: &mut R) -> Vec<Stroke> {
    let theta: f64 = rng.gen_range(-0.18..0.18);
    let scale = rng.gen_range(0.85..1.05);
    let (dx, dy) = (rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04));
    let (c, s) = (theta.cos(), theta.sin());
    strokes
        .iter()
        .map(|st| {
            st.iter()
                .map(|&(x, y)| {
                    let (xc, yc) = (x - 0.5, y - 0.5);
                    (
                        0.5 + scale * (c * xc - s * yc) + dx,
                        0.5 + scale * (s * xc + c * yc) + dy,
                    )
                })
                .collect()
        })
        .collect()
}

fn render_strokes<R: Rng>(strokes: &[Stroke], side: usize, rng: &mut R) -> Array2<f64> {
    let strokes = jitter(strokes, rng);
    let thickness = rng.gen_range(0.045..0.07);
    let aa = 0.03;
    let mut img = Array2::<f64>::zeros((side, side));
    for y in 0..side {
        for x in 0..side {
            let p = ((x as f64 + 0.5) / side as f64, (y as f64 + 0.5) / side as f64);
            let mut best = f64::INFINITY;
            for st in &strokes {
                for w in st.windows(2) {
                    best = best.min(seg_dist(p, w[0], w[1]));
                }
            }
            let v = ((thickness - best) / aa + 1.0).clamp(0.0, 1.0);
            // drop anti-aliasing tails so tight support stays crisp
            img[[y, x]] = if v < 0.05 { 0.0 } else { v };
        }
    }
    img
}

/// Filled garment-like silhouettes from a union of soft ellipses.
fn render_silhouette(class: u8, side: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut shape_rng = stream_rng(0xFA51, class as u64);
    let n = 3 + (class as usize % 3);
    let ellipses: Vec<(f64, f64, f64, f64)> = (0..n)
        .map(|_| {
            (
                shape_rng.gen_range(0.3..0.7),
                shape_rng.gen_range(0.25..0.75),
                shape_rng.gen_range(0.12..0.3),
                shape_rng.gen_range(0.12..0.3),
            )
        })
        .collect();
    let scale = rng.gen_range(0.85..1.05);
    let (jx, jy) = (rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04));
    let shade = rng.gen_range(0.7..1.0);
    let mut img = Array2::<f64>::zeros((side, side));
    for y in 0..side {
        for x in 0..side {
            let px = ((x as f64 + 0.5) / side as f64 - 0.5 - jx) / scale + 0.5;
            let py = ((y as f64 + 0.5) / side as f64 - 0.5 - jy) / scale + 0.5;
            let mut v: f64 = 0.0;
            for &(cx, cy, rx, ry) in &ellipses {
                let d = ((px - cx) / rx).powi(2) + ((py - cy) / ry).powi(2);
                v = v.max(((1.0 - d) / 0.15 + 1.0).clamp(0.0, 1.0));
            }
            let v = v * shade;
            img[[y, x]] = if v < 0.05 { 0.0 } else { v };
        }
    }
    img
}
