//! Procedural 28×28 digit images used when no MNIST files are supplied.
//!
//! Each class is a seven-segment glyph drawn with random offset, slant,
//! stroke width, intensity and background speckle.

use rand::Rng;

use crate::error::Result;

use super::mnist::{LabeledImages, NUM_CLASSES};

pub const SIDE: usize = 28;

// Segments: top, upper right, lower right, bottom, lower left, upper left, middle.
const SEGMENTS: [[bool; 7]; NUM_CLASSES] = [
    [true, true, true, true, true, true, false],
    [false, true, true, false, false, false, false],
    [true, true, false, true, true, false, true],
    [true, true, true, true, false, false, true],
    [false, true, true, false, false, true, true],
    [true, false, true, true, false, true, true],
    [true, false, true, true, true, true, true],
    [true, true, true, false, false, false, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// Segment endpoints in a unit box, `(x0, y0, x1, y1)` with `y` growing downward.
const ENDPOINTS: [(f64, f64, f64, f64); 7] = [
    (0.0, 0.0, 1.0, 0.0),
    (1.0, 0.0, 1.0, 0.5),
    (1.0, 0.5, 1.0, 1.0),
    (0.0, 1.0, 1.0, 1.0),
    (0.0, 0.5, 0.0, 1.0),
    (0.0, 0.0, 0.0, 0.5),
    (0.0, 0.5, 1.0, 0.5),
];

fn segment_distance(px: f64, py: f64, (x0, y0, x1, y1): (f64, f64, f64, f64)) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len_sq = dx * dx + dy * dy;
    let t = (((px - x0) * dx + (py - y0) * dy) / len_sq).clamp(0.0, 1.0);
    let (cx, cy) = (x0 + t * dx, y0 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

fn render<R: Rng + ?Sized>(label: usize, rng: &mut R, out: &mut Vec<u8>) {
    let width = rng.random_range(9.0..13.0);
    let height = rng.random_range(16.0..21.0);
    let left = rng.random_range(4.0..(SIDE as f64 - 4.0 - width));
    let top = rng.random_range(3.0..(SIDE as f64 - 3.0 - height));
    let slant = rng.random_range(-0.25..0.25);
    let stroke = rng.random_range(1.0..2.2);
    let ink = rng.random_range(180.0..255.0);
    let segments: Vec<(f64, f64, f64, f64)> = ENDPOINTS
        .iter()
        .zip(SEGMENTS[label])
        .filter(|(_, on)| *on)
        .map(|(&(x0, y0, x1, y1), _)| {
            let jitter = |rng: &mut R| rng.random_range(-0.06..0.06);
            (
                x0 + jitter(rng),
                y0 + jitter(rng),
                x1 + jitter(rng),
                y1 + jitter(rng),
            )
        })
        .collect();
    for r in 0..SIDE {
        for c in 0..SIDE {
            let y = (r as f64 + 0.5 - top) / height;
            let x = (c as f64 + 0.5 - left + slant * (r as f64 - SIDE as f64 / 2.0)) / width;
            let scale = width.min(height);
            let dist = segments
                .iter()
                .map(|&s| segment_distance(x, y, s))
                .fold(f64::INFINITY, f64::min)
                * scale;
            let mut value = (ink * (1.0 - (dist - stroke).max(0.0))).max(0.0);
            if rng.random::<f64>() < 0.02 {
                value = value.max(rng.random_range(0.0..128.0));
            }
            out.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
}

/// `count` images with labels drawn uniformly over the classes.
pub fn generate<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Result<LabeledImages> {
    let mut pixels = Vec::with_capacity(count * SIDE * SIDE);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let label = rng.random_range(0..NUM_CLASSES);
        render(label, rng, &mut pixels);
        labels.push(label as u8);
    }
    LabeledImages::new(pixels, labels, SIDE, SIDE)
}
