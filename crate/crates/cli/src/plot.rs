//! Bare-bones line and scatter charts rendered straight to PNG.

use std::path::Path;

use image::{Rgb, RgbImage};

const WIDTH: u32 = 480;
const HEIGHT: u32 = 360;
const MARGIN: u32 = 40;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);

pub const PALETTE: [Rgb<u8>; 4] = [Rgb([31, 119, 180]), Rgb([214, 39, 40]), Rgb([44, 160, 44]), Rgb([148, 103, 189])];

pub struct Series<'a> {
    pub points: &'a [(f64, f64)],
    pub color: Rgb<u8>,
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let pad = |lo: f64, hi: f64| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let m = 0.05 * (hi - lo);
                (lo - m, hi + m)
            }
        };
        Self { x: pad(x0, x1), y: pad(y0, y1) }
    }

    fn to_pixel(&self, (x, y): (f64, f64)) -> (i64, i64) {
        let w = (WIDTH - 2 * MARGIN) as f64;
        let h = (HEIGHT - 2 * MARGIN) as f64;
        let px = MARGIN as f64 + (x - self.x.0) / (self.x.1 - self.x.0) * w;
        let py = (HEIGHT - MARGIN) as f64 - (y - self.y.0) / (self.y.1 - self.y.0) * h;
        (px.round() as i64, py.round() as i64)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn marker(img: &mut RgbImage, (x, y): (i64, i64), c: Rgb<u8>) {
    for dy in -2..=2 {
        for dx in -2..=2 {
            put(img, x + dx, y + dy, c);
        }
    }
}

fn canvas() -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BACKGROUND);
    let (l, r, t, b) = (MARGIN as i64, (WIDTH - MARGIN) as i64, MARGIN as i64, (HEIGHT - MARGIN) as i64);
    for k in 1..5 {
        let gy = t + (b - t) * k / 5;
        let gx = l + (r - l) * k / 5;
        line(&mut img, (l, gy), (r, gy), GRID);
        line(&mut img, (gx, t), (gx, b), GRID);
    }
    line(&mut img, (l, b), (r, b), AXIS);
    line(&mut img, (l, t), (l, b), AXIS);
    img
}

fn save(img: &RgbImage, path: &Path) -> ugac::Result<()> {
    img.save(path).map_err(|e| ugac::Error::Data(format!("writing plot {}: {e}", path.display())))
}

pub fn line_chart(path: &Path, series: &[Series]) -> ugac::Result<()> {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter()));
    let mut img = canvas();
    for s in series {
        let pts: Vec<_> = s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&p| frame.to_pixel(p)).collect();
        for w in pts.windows(2) {
            line(&mut img, w[0], w[1], s.color);
        }
        for &p in &pts {
            marker(&mut img, p, s.color);
        }
    }
    save(&img, path)
}

pub fn scatter_chart(path: &Path, points: &[(f64, f64)]) -> ugac::Result<()> {
    let frame = Frame::fit(points.iter());
    let mut img = canvas();
    for &p in points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()) {
        marker(&mut img, frame.to_pixel(p), PALETTE[0]);
    }
    save(&img, path)
}
