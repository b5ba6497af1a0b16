use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};

/// On-disk track description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFile {
    pub name: String,
    pub half_width_m: f64,
    pub waypoints: Vec<[f64; 2]>,
    pub start_index: usize,
}

impl TrackFile {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("track file not found: {}", path.display())));
        }
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Closed loop of two straights and four corners of different radius,
    /// 24 waypoints, about 13.3 m of centerline.
    pub fn default_loop() -> Self {
        use std::f64::consts::FRAC_PI_2;
        let mut pts: Vec<[f64; 2]> = (0..5).map(|i| [i as f64, 0.0]).collect();
        let arc = |pts: &mut Vec<[f64; 2]>, cx: f64, cy: f64, r: f64, a0: f64, n: usize, keep_last: bool| {
            let count = if keep_last { n } else { n - 1 };
            for k in 1..=count {
                let a = a0 + FRAC_PI_2 * k as f64 / n as f64;
                pts.push([cx + r * a.cos(), cy + r * a.sin()]);
            }
        };
        // Corner A: r = 1.0 around (4, 1), from (4, 0) to (5, 1).
        arc(&mut pts, 4.0, 1.0, 1.0, -FRAC_PI_2, 4, true);
        // Corner B: r = 0.8 around (4.2, 1), up to (4.2, 1.8).
        arc(&mut pts, 4.2, 1.0, 0.8, 0.0, 4, true);
        // Top straight, heading -x, to (0.6, 1.8).
        pts.extend([[3.3, 1.8], [2.4, 1.8], [1.5, 1.8], [0.6, 1.8]]);
        // Corner C: r = 1.2 around (0.6, 0.6), down to (-0.6, 0.6).
        arc(&mut pts, 0.6, 0.6, 1.2, FRAC_PI_2, 4, true);
        // Corner D: r = 0.6 around (0, 0.6), back to the start at (0, 0).
        arc(&mut pts, 0.0, 0.6, 0.6, std::f64::consts::PI, 4, false);
        for p in &mut pts {
            // Keep the file readable.
            p[0] = (p[0] * 1e6).round() / 1e6;
            p[1] = (p[1] * 1e6).round() / 1e6;
        }
        Self {
            name: "desk-loop".into(),
            half_width_m: 0.30,
            waypoints: pts,
            start_index: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Progress along the centerline from the start waypoint, in `[0, L)`.
    pub progress: f64,
    /// Unsigned distance to the centerline.
    pub distance: f64,
    /// Signed lateral offset, positive to the left of the driving direction.
    pub lateral: f64,
    pub segment: usize,
}

/// Validated closed centerline with uniform half-width.
#[derive(Debug, Clone)]
pub struct Track {
    name: String,
    half_width: f64,
    points: Vec<[f64; 2]>,
    start_index: usize,
    /// Progress at the start of each segment.
    seg_start: Vec<f64>,
    seg_len: Vec<f64>,
    length: f64,
    field: Arc<OnceLock<DistanceField>>,
}

impl Track {
    pub fn new(file: &TrackFile) -> Result<Self> {
        let mut points = file.waypoints.clone();
        if points.len() >= 2 && points.first() == points.last() {
            points.pop();
        }
        let n = points.len();
        if n < 8 {
            return Err(Error::Track(format!("need at least 8 waypoints, got {n}")));
        }
        if !(file.half_width_m > 0.0) || !file.half_width_m.is_finite() {
            return Err(Error::Track("half-width must be positive".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Track("waypoints must be finite".into()));
        }
        if file.start_index >= n {
            return Err(Error::Track(format!("start index {} out of range", file.start_index)));
        }
        let seg_len: Vec<f64> = (0..n)
            .map(|i| dist(points[i], points[(i + 1) % n]))
            .collect();
        if let Some(i) = seg_len.iter().position(|&l| l < 1e-9) {
            return Err(Error::Track(format!("segment {i} has zero length")));
        }
        let length: f64 = seg_len.iter().sum();
        let mut seg_start = vec![0.0; n];
        let mut acc = 0.0;
        for k in 0..n {
            let i = (file.start_index + k) % n;
            seg_start[i] = acc;
            acc += seg_len[i];
        }
        let track = Self {
            name: file.name.clone(),
            half_width: file.half_width_m,
            points,
            start_index: file.start_index,
            seg_start,
            seg_len,
            length,
            field: Arc::new(OnceLock::new()),
        };
        track.check_band()?;
        Ok(track)
    }

    pub fn default_loop() -> Self {
        Self::new(&TrackFile::default_loop()).expect("built-in track is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(&TrackFile::load(path)?).with_context(|| format!("validating {}", path.display()))
    }

    pub fn to_file(&self) -> TrackFile {
        TrackFile {
            name: self.name.clone(),
            half_width_m: self.half_width,
            waypoints: self.points.clone(),
            start_index: self.start_index,
        }
    }

    /// Segments far apart along the loop must keep their bands disjoint.
    fn check_band(&self) -> Result<()> {
        let n = self.points.len();
        let min_gap = 4.0 * self.half_width;
        for i in 0..n {
            for j in i + 1..n {
                let forward = self.seg_start_rel(j) - self.seg_start_rel(i) - self.seg_len[i];
                let backward = self.length - (self.seg_start_rel(j) + self.seg_len[j] - self.seg_start_rel(i));
                if forward.min(backward) <= min_gap {
                    continue;
                }
                let d = segment_distance(self.seg(i), self.seg(j));
                if d <= 2.0 * self.half_width {
                    return Err(Error::Track(format!(
                        "widened band self-intersects between segments {i} and {j} (gap {d:.3} m)"
                    )));
                }
            }
        }
        Ok(())
    }

    fn seg_start_rel(&self, i: usize) -> f64 {
        // Progress measured from waypoint 0 rather than the start waypoint.
        let base = self.seg_start[0];
        (self.seg_start[i] - base).rem_euclid(self.length)
    }

    fn seg(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        (self.points[i], self.points[(i + 1) % self.points.len()])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn waypoints(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    /// Start position and heading along the first segment.
    pub fn start_pose(&self) -> ([f64; 2], f64) {
        let (a, b) = self.seg(self.start_index);
        (a, (b[1] - a[1]).atan2(b[0] - a[0]))
    }

    /// Centerline point and tangent heading at progress `s`.
    pub fn point_at(&self, s: f64) -> ([f64; 2], f64) {
        let s = s.rem_euclid(self.length);
        let n = self.points.len();
        for k in 0..n {
            let i = (self.start_index + k) % n;
            if s < self.seg_start[i] + self.seg_len[i] || k == n - 1 {
                let (a, b) = self.seg(i);
                let t = ((s - self.seg_start[i]) / self.seg_len[i]).clamp(0.0, 1.0);
                let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                return (p, (b[1] - a[1]).atan2(b[0] - a[0]));
            }
        }
        unreachable!("track has segments")
    }

    /// Nearest-point projection onto the centerline.
    pub fn project(&self, p: [f64; 2]) -> Projection {
        let mut best = Projection {
            progress: 0.0,
            distance: f64::INFINITY,
            lateral: 0.0,
            segment: 0,
        };
        for i in 0..self.points.len() {
            let (a, b) = self.seg(i);
            let (t, d) = point_segment(p, a, b);
            if d < best.distance {
                let dir = [(b[0] - a[0]) / self.seg_len[i], (b[1] - a[1]) / self.seg_len[i]];
                let cross = dir[0] * (p[1] - a[1]) - dir[1] * (p[0] - a[0]);
                let progress = (self.seg_start[i] + t * self.seg_len[i]).rem_euclid(self.length);
                best = Projection {
                    progress: if progress >= self.length { 0.0 } else { progress },
                    distance: d,
                    lateral: if cross >= 0.0 { d } else { -d },
                    segment: i,
                };
            }
        }
        best
    }

    /// Signed progress difference `to - from`, wrapped into `(-L/2, L/2]`.
    pub fn progress_delta(&self, from: f64, to: f64) -> f64 {
        let mut d = to - from;
        let half = self.length / 2.0;
        if d > half {
            d -= self.length;
        } else if d <= -half {
            d += self.length;
        }
        d
    }

    /// Rasterized distance/progress lookup used by the renderer.
    pub(crate) fn field(&self) -> &DistanceField {
        self.field.get_or_init(|| DistanceField::build(self, 0.01, 1.0))
    }
}

/// Is the point further than the half-width from the centerline?
/// The boundary itself counts as on track.
pub fn is_off_track(track: &Track, x: f64, y: f64) -> bool {
    track.project([x, y]).distance > track.half_width()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Returns the clamped segment parameter and the distance.
pub(crate) fn point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * dx, a[1] + t * dy];
    (t, dist(p, q))
}

fn segment_distance(s: ([f64; 2], [f64; 2]), t: ([f64; 2], [f64; 2])) -> f64 {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let d1 = cross(s.0, s.1, t.0);
    let d2 = cross(s.0, s.1, t.1);
    let d3 = cross(t.0, t.1, s.0);
    let d4 = cross(t.0, t.1, s.1);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return 0.0;
    }
    [
        point_segment(s.0, t.0, t.1).1,
        point_segment(s.1, t.0, t.1).1,
        point_segment(t.0, s.0, s.1).1,
        point_segment(t.1, s.0, s.1).1,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

/// Nearest-neighbour grid of (distance, signed lateral, progress).
#[derive(Debug)]
pub(crate) struct DistanceField {
    origin: [f64; 2],
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<[f32; 3]>,
}

impl DistanceField {
    fn build(track: &Track, cell: f64, margin: f64) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in track.waypoints() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let origin = [lo[0] - margin, lo[1] - margin];
        let cols = ((hi[0] - lo[0] + 2.0 * margin) / cell).ceil() as usize + 1;
        let rows = ((hi[1] - lo[1] + 2.0 * margin) / cell).ceil() as usize + 1;
        let mut cells = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let p = [origin[0] + (c as f64 + 0.5) * cell, origin[1] + (r as f64 + 0.5) * cell];
                let pr = track.project(p);
                cells.push([pr.distance as f32, pr.lateral as f32, pr.progress as f32]);
            }
        }
        Self {
            origin,
            cell,
            cols,
            rows,
            cells,
        }
    }

    /// `None` outside the rasterized area.
    #[inline]
    pub(crate) fn lookup(&self, x: f64, y: f64) -> Option<[f32; 3]> {
        let c = ((x - self.origin[0]) / self.cell).floor();
        let r = ((y - self.origin[1]) / self.cell).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some(self.cells[r as usize * self.cols + c as usize])
    }
}
