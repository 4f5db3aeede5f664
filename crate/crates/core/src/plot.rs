//! Minimal chart rasterizer for analysis outputs: bar charts, line charts
//! and histograms rendered to PNG without text.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
const INK: Rgb<u8> = Rgb([31, 119, 180]);
const MARGIN: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartSize {
    pub width: u32,
    pub height: u32,
}

impl Default for ChartSize {
    fn default() -> Self {
        Self {
            width: 480,
            height: 320,
        }
    }
}

struct Canvas {
    img: RgbImage,
    y_min: f64,
    y_max: f64,
}

impl Canvas {
    fn new(size: ChartSize, y_min: f64, y_max: f64) -> Result<Self> {
        if size.width <= 2 * MARGIN || size.height <= 2 * MARGIN {
            return Err(Error::InvalidParameter(format!(
                "chart must exceed {0}x{0} pixels",
                2 * MARGIN
            )));
        }
        let mut img = RgbImage::from_pixel(size.width, size.height, BACKGROUND);
        let (w, h) = (size.width, size.height);
        for x in MARGIN..w - MARGIN {
            img.put_pixel(x, h - MARGIN, AXIS);
        }
        for y in MARGIN..=h - MARGIN {
            img.put_pixel(MARGIN, y, AXIS);
        }
        let y_max = if y_max > y_min { y_max } else { y_min + 1.0 };
        Ok(Self { img, y_min, y_max })
    }

    fn plot_width(&self) -> u32 {
        self.img.width() - 2 * MARGIN - 1
    }

    fn row_of(&self, v: f64) -> u32 {
        let h = f64::from(self.img.height() - 2 * MARGIN);
        let t = ((v - self.y_min) / (self.y_max - self.y_min)).clamp(0.0, 1.0);
        self.img.height() - MARGIN - (t * h).round() as u32
    }

    fn fill(&mut self, x0: u32, x1: u32, y0: u32, y1: u32) {
        for x in x0..x1.min(self.img.width()) {
            for y in y0..y1.min(self.img.height()) {
                self.img.put_pixel(x, y, INK);
            }
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64)) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for s in 0..=steps {
            let x = x0 + (x1 - x0) * s / steps;
            let y = y0 + (y1 - y0) * s / steps;
            self.img.put_pixel(x as u32, y as u32, INK);
        }
    }
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|e| Error::UnwritablePath {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn check_values(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySequence);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(())
}

fn range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(0.0f64, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// One bar per value, scaled from `min(0, values)` to the maximum.
pub fn render_bar_chart(values: &[f64], size: ChartSize) -> Result<RgbImage> {
    check_values(values)?;
    let (lo, hi) = range(values);
    let mut c = Canvas::new(size, lo, hi)?;
    let slot = f64::from(c.plot_width()) / values.len() as f64;
    let base = c.row_of(lo.max(0.0));
    for (i, &v) in values.iter().enumerate() {
        let x0 = MARGIN + 1 + (i as f64 * slot + slot * 0.1) as u32;
        let x1 = MARGIN + 1 + ((i + 1) as f64 * slot - slot * 0.1).max(i as f64 * slot + 1.0) as u32;
        let top = c.row_of(v);
        let (y0, y1) = if top <= base { (top, base) } else { (base, top) };
        c.fill(x0, x1.max(x0 + 1), y0, y1.max(y0 + 1));
    }
    Ok(c.img)
}

/// Polyline through `values` at evenly spaced x positions.
pub fn render_line_chart(values: &[f64], size: ChartSize) -> Result<RgbImage> {
    check_values(values)?;
    let (lo, hi) = range(values);
    let mut c = Canvas::new(size, lo, hi)?;
    let span = f64::from(c.plot_width());
    let step = if values.len() > 1 {
        span / (values.len() - 1) as f64
    } else {
        0.0
    };
    let points: Vec<(i64, i64)> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (i64::from(MARGIN + 1) + (i as f64 * step) as i64, i64::from(c.row_of(v))))
        .collect();
    if let [only] = points.as_slice() {
        c.line(*only, *only);
    }
    for w in points.windows(2) {
        c.line(w[0], w[1]);
    }
    Ok(c.img)
}

/// Counts of `samples` in `bins` equal-width bins over `[lo, hi]`; values
/// outside the range are clamped into the end bins.
pub fn histogram(samples: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if bins == 0 || hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidParameter("histogram needs bins >= 1 and hi > lo".into()));
    }
    check_values(samples)?;
    let mut counts = vec![0.0; bins];
    for &s in samples {
        let i = ((s - lo) / (hi - lo) * bins as f64)
            .floor()
            .clamp(0.0, (bins - 1) as f64) as usize;
        counts[i] += 1.0;
    }
    Ok(counts)
}

pub fn save_bar_chart(values: &[f64], size: ChartSize, path: &Path) -> Result<()> {
    save_png(&render_bar_chart(values, size)?, path)
}

pub fn save_line_chart(values: &[f64], size: ChartSize, path: &Path) -> Result<()> {
    save_png(&render_line_chart(values, size)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ink(img: &RgbImage) -> usize {
        img.pixels().filter(|p| **p == INK).count()
    }

    #[test]
    fn taller_bar_has_more_ink() {
        let size = ChartSize::default();
        let small = render_bar_chart(&[1.0, 0.1], size).unwrap();
        let large = render_bar_chart(&[1.0, 0.9], size).unwrap();
        assert!(ink(&large) > ink(&small));
        assert_eq!(small.dimensions(), (480, 320));
    }

    #[test]
    fn rendering_is_deterministic() {
        let v = [0.3, 0.7, 0.5];
        let size = ChartSize::default();
        assert_eq!(
            render_line_chart(&v, size).unwrap(),
            render_line_chart(&v, size).unwrap()
        );
        assert!(ink(&render_line_chart(&[0.5], size).unwrap()) > 0);
    }

    #[test]
    fn histogram_counts() {
        let h = histogram(&[0.0, 0.05, 0.5, 0.99, 1.0, 2.0], 10, 0.0, 1.0).unwrap();
        assert_eq!(h[0], 2.0);
        assert_eq!(h[5], 1.0);
        assert_eq!(h[9], 3.0);
        assert_eq!(h.iter().sum::<f64>(), 6.0);
    }

    #[test]
    fn rejects_bad_input() {
        let size = ChartSize::default();
        assert!(matches!(render_bar_chart(&[], size), Err(Error::EmptySequence)));
        assert!(matches!(
            render_bar_chart(&[f64::NAN], size),
            Err(Error::NonFiniteInput)
        ));
        assert!(render_bar_chart(&[1.0], ChartSize { width: 10, height: 10 }).is_err());
        assert!(histogram(&[1.0], 0, 0.0, 1.0).is_err());
    }
}
