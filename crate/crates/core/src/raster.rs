//! Small 2-D rasterization helpers shared by the synthetic data generator, the
//! renderer's condition images and the mouth-area metric.

use crate::geometry::Point2;

/// Boolean `h x w` mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize) -> Self {
        Mask { height, width, data: vec![false; height * width] }
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Binary dilation with a `(2r+1) x (2r+1)` square, `iterations` times.
    pub fn dilate(&self, radius: usize, iterations: usize) -> Mask {
        let mut cur = self.clone();
        for _ in 0..iterations {
            let mut next = Mask::new(self.height, self.width);
            for y in 0..self.height {
                for x in 0..self.width {
                    let y0 = y.saturating_sub(radius);
                    let x0 = x.saturating_sub(radius);
                    let y1 = (y + radius).min(self.height - 1);
                    let x1 = (x + radius).min(self.width - 1);
                    let hit = (y0..=y1).any(|yy| (x0..=x1).any(|xx| cur.get(yy, xx)));
                    next.set(y, x, hit);
                }
            }
            cur = next;
        }
        cur
    }

    /// Euclidean dilation: pixels whose centers lie within `r` of a set pixel center.
    pub fn dilate_disk(&self, r: f64) -> Mask {
        let ri = r.ceil() as isize;
        let mut out = Mask::new(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.get(y, x) {
                    continue;
                }
                for dy in -ri..=ri {
                    for dx in -ri..=ri {
                        if ((dx * dx + dy * dy) as f64) > r * r {
                            continue;
                        }
                        let (yy, xx) = (y as isize + dy, x as isize + dx);
                        if yy >= 0 && xx >= 0 && (yy as usize) < self.height && (xx as usize) < self.width {
                            out.set(yy as usize, xx as usize, true);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Marks pixels whose centers `(x + 0.5, y + 0.5)` fall inside the polygon.
pub fn fill_polygon(height: usize, width: usize, poly: &[Point2]) -> Mask {
    let mut m = Mask::new(height, width);
    if poly.len() < 3 {
        return m;
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in poly {
        lo = lo.min(p[1]);
        hi = hi.max(p[1]);
    }
    let y0 = (lo - 0.5).floor().max(0.0) as usize;
    let y1 = ((hi - 0.5).ceil().max(-1.0) as isize + 1).clamp(0, height as isize) as usize;
    for y in y0.min(height)..y1 {
        for x in 0..width {
            if point_in_polygon([x as f64 + 0.5, y as f64 + 0.5], poly) {
                m.set(y, x, true);
            }
        }
    }
    m
}

/// Signed area (shoelace); positive for counter-clockwise in a y-up frame.
pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Calls `plot(x, y, coverage)` for an anti-aliased line (Xiaolin Wu).
pub fn wu_line(a: Point2, b: Point2, mut plot: impl FnMut(isize, isize, f64)) {
    let (mut x0, mut y0, mut x1, mut y1) = (a[0] - 0.5, a[1] - 0.5, b[0] - 0.5, b[1] - 0.5);
    let steep = (y1 - y0).abs() > (x1 - x0).abs();
    if steep {
        std::mem::swap(&mut x0, &mut y0);
        std::mem::swap(&mut x1, &mut y1);
    }
    if x0 > x1 {
        std::mem::swap(&mut x0, &mut x1);
        std::mem::swap(&mut y0, &mut y1);
    }
    let dx = x1 - x0;
    let gradient = if dx.abs() < 1e-12 { 1.0 } else { (y1 - y0) / dx };
    let mut put = |x: isize, y: isize, c: f64| {
        if c > 0.0 {
            if steep {
                plot(y, x, c)
            } else {
                plot(x, y, c)
            }
        }
    };
    let fpart = |v: f64| v - v.floor();
    let xs = x0.round();
    let xe = x1.round();
    let mut inter = y0 + gradient * (xs - x0);
    let span = (xe - xs) as isize;
    for i in 0..=span.max(0) {
        let x = xs as isize + i;
        let w = if span == 0 {
            (x1 - x0).max(0.0).min(1.0)
        } else if i == 0 {
            1.0 - fpart(x0 + 0.5)
        } else if i == span {
            fpart(x1 + 0.5)
        } else {
            1.0
        };
        let yf = inter.floor();
        put(x, yf as isize, (1.0 - fpart(inter)) * w);
        put(x, yf as isize + 1, fpart(inter) * w);
        inter += gradient;
    }
}
