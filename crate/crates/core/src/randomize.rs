//! Observation randomization functions and their composition.
//!
//! Every function works in place on an RGB frame and never moves content:
//! pixels are only recolored.

use std::cell::Cell;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::Frame;
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandFn {
    Gaussian,
    Reflection,
    Hsv,
    SaltPepper,
    CutoutNoise,
    CutoutObs,
}

impl RandFn {
    /// All functions in application order.
    pub const ALL: [RandFn; 6] = [
        RandFn::Gaussian,
        RandFn::Reflection,
        RandFn::Hsv,
        RandFn::SaltPepper,
        RandFn::CutoutNoise,
        RandFn::CutoutObs,
    ];

    /// Short machine name, also used for file names.
    pub fn name(self) -> &'static str {
        match self {
            RandFn::Gaussian => "gaussian",
            RandFn::Reflection => "reflection",
            RandFn::Hsv => "hsv",
            RandFn::SaltPepper => "salt_pepper",
            RandFn::CutoutNoise => "cutout_noise",
            RandFn::CutoutObs => "cutout_obs",
        }
    }

    /// Name used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            RandFn::Gaussian => "Gaussian",
            RandFn::Reflection => "Reflection",
            RandFn::Hsv => "HSV",
            RandFn::SaltPepper => "SaltPepper",
            RandFn::CutoutNoise => "Cutout (Noise)",
            RandFn::CutoutObs => "Cutout (Obs.)",
        }
    }
}

impl fmt::Display for RandFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionConfig {
    /// Semi-axis ranges as fractions of the image width / height.
    pub semi_axis_x: [f64; 2],
    pub semi_axis_y: [f64; 2],
    pub alpha: [f64; 2],
    pub intensity: f64,
}

impl Default for ReflectionConfig {
    fn default() -> Self {
        Self {
            semi_axis_x: [0.05, 0.20],
            semi_axis_y: [0.08, 0.25],
            alpha: [0.3, 0.7],
            intensity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandConfig {
    /// Enabled functions; application order is always [`RandFn::ALL`].
    pub enabled: Vec<RandFn>,
    /// Probability that each enabled function fires on a given image.
    pub p: f64,
    pub gaussian_sigma: f64,
    pub reflection: ReflectionConfig,
    pub hsv_range: [f64; 2],
    pub salt_pepper_density: f64,
    /// Cutout side lengths as fractions of the image dimensions.
    pub cutout_fraction: [f64; 2],
    pub seed: u64,
}

impl Default for RandConfig {
    fn default() -> Self {
        Self::all()
    }
}

impl RandConfig {
    pub fn all() -> Self {
        Self {
            enabled: RandFn::ALL.to_vec(),
            p: 0.5,
            gaussian_sigma: 10.0,
            reflection: ReflectionConfig::default(),
            hsv_range: [0.5, 1.5],
            salt_pepper_density: 0.02,
            cutout_fraction: [0.10, 0.40],
            seed: 0,
        }
    }

    /// No randomization: the baseline student.
    pub fn none() -> Self {
        Self {
            enabled: Vec::new(),
            ..Self::all()
        }
    }

    pub fn without(&self, f: RandFn) -> Self {
        Self {
            enabled: self.enabled.iter().copied().filter(|&g| g != f).collect(),
            ..self.clone()
        }
    }

    pub fn is_enabled(&self, f: RandFn) -> bool {
        self.enabled.contains(&f)
    }

    pub fn is_full(&self) -> bool {
        RandFn::ALL.iter().all(|&f| self.is_enabled(f))
    }

    /// Enabled set in application order, without duplicates.
    pub fn active(&self) -> Vec<RandFn> {
        RandFn::ALL.iter().copied().filter(|&f| self.is_enabled(f)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(format!("randomization: {m}")));
        let range_ok = |r: [f64; 2], lo: f64, hi: f64| r[0] <= r[1] && r[0] >= lo && r[1] <= hi;
        if !(0.0..=1.0).contains(&self.p) {
            return bad("p outside [0, 1]");
        }
        if !(self.gaussian_sigma >= 0.0) {
            return bad("sigma must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.salt_pepper_density) {
            return bad("salt-and-pepper density outside [0, 1]");
        }
        if !range_ok(self.cutout_fraction, f64::MIN_POSITIVE, 1.0) || self.cutout_fraction[1] >= 1.0 {
            return bad("cutout fractions must lie within (0, 1)");
        }
        let r = &self.reflection;
        if !range_ok(r.semi_axis_x, f64::MIN_POSITIVE, 1.0) || !range_ok(r.semi_axis_y, f64::MIN_POSITIVE, 1.0) {
            return bad("reflection semi-axes must lie within (0, 1]");
        }
        if !range_ok(r.alpha, 0.0, 1.0) || !(0.0..=1.0).contains(&r.intensity) {
            return bad("reflection alpha and intensity must lie within [0, 1]");
        }
        if !range_ok(self.hsv_range, 0.0, f64::MAX) {
            return bad("hsv range must be non-negative and ordered");
        }
        Ok(())
    }
}

/// Frames that cutout_obs copies patches from.
#[derive(Debug, Clone, Copy)]
pub struct PatchSource<'a> {
    frames: &'a [Frame],
}

impl<'a> PatchSource<'a> {
    pub fn new(frames: &'a [Frame]) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Config("patch source is empty".into()));
        };
        if frames.iter().any(|f| !f.same_size(first)) {
            return Err(Error::Config("patch source frames differ in size".into()));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &'a [Frame] {
        self.frames
    }
}

fn uniform(rng: &mut SimRng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn gaussian_noise(img: &mut Frame, sigma: f64, rng: &mut SimRng) {
    if sigma == 0.0 {
        return;
    }
    for v in img.data_mut() {
        let n: f64 = StandardNormal.sample(rng);
        *v = clamp_u8(*v as f64 + sigma * n);
    }
}

/// Axis-aligned ellipse in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionParams {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
}

impl ReflectionParams {
    pub fn sample(width: usize, height: usize, cfg: &ReflectionConfig, rng: &mut SimRng) -> Self {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let a = uniform(rng, cfg.semi_axis_x) * width as f64;
        let b = uniform(rng, cfg.semi_axis_y) * height as f64;
        let alpha = uniform(rng, cfg.alpha);
        Self { cx, cy, a, b, alpha }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        let dx = (x as f64 + 0.5 - self.cx) / self.a;
        let dy = (y as f64 + 0.5 - self.cy) / self.b;
        dx * dx + dy * dy <= 1.0
    }
}

/// Blend the ellipse toward `255 * intensity`.
pub fn apply_reflection(img: &mut Frame, params: &ReflectionParams, intensity: f64) {
    if params.alpha == 0.0 || params.a <= 0.0 || params.b <= 0.0 {
        return;
    }
    let (w, h) = (img.width(), img.height());
    let target = 255.0 * intensity;
    let y0 = (params.cy - params.b).floor().max(0.0) as usize;
    let y1 = ((params.cy + params.b).ceil().max(0.0) as usize).min(h);
    let x0 = (params.cx - params.a).floor().max(0.0) as usize;
    let x1 = ((params.cx + params.a).ceil().max(0.0) as usize).min(w);
    let data = img.data_mut();
    for y in y0..y1 {
        for x in x0..x1 {
            if params.contains(x, y) {
                for v in &mut data[(y * w + x) * 3..(y * w + x) * 3 + 3] {
                    *v = clamp_u8((1.0 - params.alpha) * *v as f64 + params.alpha * target);
                }
            }
        }
    }
}

pub fn reflection(img: &mut Frame, cfg: &ReflectionConfig, rng: &mut SimRng) {
    let params = ReflectionParams::sample(img.width(), img.height(), cfg, rng);
    apply_reflection(img, &params, cfg.intensity);
}

/// RGB in 0..=255 to (H in degrees `[0, 360)`, S, V in `[0, 1]`).
pub fn rgb_to_hsv(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(|v| v as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}

pub fn hsv_to_rgb(hsv: [f64; 3]) -> [u8; 3] {
    let [h, s, v] = hsv;
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|t| clamp_u8((t + m) * 255.0))
}

/// Multiply H, S and V by the given factors, clipping each to its range.
pub fn apply_hsv(img: &mut Frame, multipliers: [f64; 3]) {
    const H_MAX: f64 = 360.0 - 1e-9;
    for px in img.data_mut().chunks_exact_mut(3) {
        let [h, s, v] = rgb_to_hsv([px[0], px[1], px[2]]);
        let out = hsv_to_rgb([
            (h * multipliers[0]).clamp(0.0, H_MAX),
            (s * multipliers[1]).clamp(0.0, 1.0),
            (v * multipliers[2]).clamp(0.0, 1.0),
        ]);
        px.copy_from_slice(&out);
    }
}

pub fn hsv_shift(img: &mut Frame, range: [f64; 2], rng: &mut SimRng) {
    let m = [uniform(rng, range), uniform(rng, range), uniform(rng, range)];
    apply_hsv(img, m);
}

pub fn salt_pepper(img: &mut Frame, density: f64, rng: &mut SimRng) {
    if density <= 0.0 {
        return;
    }
    for px in img.data_mut().chunks_exact_mut(3) {
        if rng.random_bool(density.min(1.0)) {
            let v = if rng.random_bool(0.5) { 255 } else { 0 };
            px.fill(v);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }
}

fn side(dim: usize, fraction: [f64; 2], rng: &mut SimRng) -> usize {
    ((uniform(rng, fraction) * dim as f64).round() as usize).clamp(1, dim)
}

/// Rectangle anywhere inside the image.
pub fn sample_cutout_rect(width: usize, height: usize, fraction: [f64; 2], rng: &mut SimRng) -> Rect {
    let w = side(width, fraction, rng);
    let h = side(height, fraction, rng);
    let x = rng.random_range(0..=width - w);
    let y = rng.random_range(0..=height - h);
    Rect { x, y, w, h }
}

/// Rectangle entirely within the upper half of the image.
pub fn sample_upper_rect(width: usize, height: usize, fraction: [f64; 2], rng: &mut SimRng) -> Rect {
    let half = (height / 2).max(1);
    let w = side(width, fraction, rng);
    let h = side(height, fraction, rng).min(half);
    let x = rng.random_range(0..=width - w);
    let y = rng.random_range(0..=half - h);
    Rect { x, y, w, h }
}

pub fn cutout_noise(img: &mut Frame, fraction: [f64; 2], rng: &mut SimRng) -> Rect {
    let rect = sample_cutout_rect(img.width(), img.height(), fraction, rng);
    let w = img.width();
    let data = img.data_mut();
    for y in rect.y..rect.bottom() {
        let row = &mut data[(y * w + rect.x) * 3..(y * w + rect.x + rect.w) * 3];
        rng.fill(row);
    }
    rect
}

/// Where a cutout_obs patch came from and where it went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchPlacement {
    pub target: Rect,
    pub source_frame: usize,
    pub source_x: usize,
    pub source_y: usize,
}

pub fn cutout_obs(img: &mut Frame, patches: &PatchSource<'_>, fraction: [f64; 2], rng: &mut SimRng) -> Result<PatchPlacement> {
    let first = &patches.frames[0];
    if !first.same_size(img) {
        return Err(Error::Config(format!(
            "patch frames are {}x{}, image is {}x{}",
            first.width(),
            first.height(),
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let target = sample_upper_rect(w, h, fraction, rng);
    let source_frame = rng.random_range(0..patches.frames.len());
    let source_x = rng.random_range(0..=w - target.w);
    let source_y = rng.random_range(0..=h - target.h);
    let src = patches.frames[source_frame].data();
    let data = img.data_mut();
    for dy in 0..target.h {
        let to = ((target.y + dy) * w + target.x) * 3;
        let from = ((source_y + dy) * w + source_x) * 3;
        data[to..to + target.w * 3].copy_from_slice(&src[from..from + target.w * 3]);
    }
    Ok(PatchPlacement {
        target,
        source_frame,
        source_x,
        source_y,
    })
}

thread_local! {
    static APPLY_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of [`apply`] calls made on the current thread so far.
pub fn apply_calls_on_thread() -> u64 {
    APPLY_CALLS.with(Cell::get)
}

/// Run the enabled functions in their fixed order, each with probability `p`.
/// Returns the functions that fired.
pub fn apply(img: &mut Frame, cfg: &RandConfig, patches: Option<&PatchSource<'_>>, rng: &mut SimRng) -> Result<Vec<RandFn>> {
    APPLY_CALLS.with(|c| c.set(c.get() + 1));
    let mut fired = Vec::new();
    for f in cfg.active() {
        if !(cfg.p > 0.0 && rng.random_bool(cfg.p.min(1.0))) {
            continue;
        }
        match f {
            RandFn::Gaussian => gaussian_noise(img, cfg.gaussian_sigma, rng),
            RandFn::Reflection => reflection(img, &cfg.reflection, rng),
            RandFn::Hsv => hsv_shift(img, cfg.hsv_range, rng),
            RandFn::SaltPepper => salt_pepper(img, cfg.salt_pepper_density, rng),
            RandFn::CutoutNoise => {
                cutout_noise(img, cfg.cutout_fraction, rng);
            }
            RandFn::CutoutObs => {
                let source = patches.ok_or_else(|| Error::Config("cutout_obs needs a patch source".into()))?;
                cutout_obs(img, source, cfg.cutout_fraction, rng)?;
            }
        }
        fired.push(f);
    }
    Ok(fired)
}

/// Apply one function unconditionally; used for previews.
pub fn apply_single(img: &mut Frame, f: RandFn, cfg: &RandConfig, patches: Option<&PatchSource<'_>>, rng: &mut SimRng) -> Result<()> {
    let single = RandConfig {
        enabled: vec![f],
        p: 1.0,
        ..cfg.clone()
    };
    apply(img, &single, patches, rng).map(|_| ())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn gradient_frame(w: usize, h: usize) -> Frame {
        let mut f = Frame::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                f.set_pixel(x, y, [(x * 3) as u8, (y * 4) as u8, ((x + y) * 2) as u8]);
            }
        }
        f
    }

    #[test]
    fn hsv_round_trip_is_identity() {
        for r in (0..=255).step_by(17) {
            for g in (0..=255).step_by(15) {
                for b in (0..=255).step_by(51) {
                    let back = hsv_to_rgb(rgb_to_hsv([r as u8, g as u8, b as u8]));
                    assert_eq!(back, [r as u8, g as u8, b as u8]);
                }
            }
        }
    }

    #[test]
    fn hsv_examples() {
        let src = gradient_frame(20, 10);
        let mut same = src.clone();
        apply_hsv(&mut same, [1.0, 1.0, 1.0]);
        assert!(same.data().iter().zip(src.data()).all(|(a, b)| a.abs_diff(*b) <= 1));

        let gray = Frame::filled(6, 4, [120, 120, 120]);
        let mut g = gray.clone();
        apply_hsv(&mut g, [1.4, 0.6, 1.0]);
        assert!(g.data().iter().zip(gray.data()).all(|(a, b)| a.abs_diff(*b) <= 1));

        let mut white = Frame::filled(6, 4, [255, 255, 255]);
        apply_hsv(&mut white, [1.0, 1.0, 0.5]);
        assert!(white.data().iter().all(|&v| v == 127 || v == 128));
    }

    #[test]
    fn hue_is_clipped_not_wrapped() {
        // Hue 300 (magenta) times 1.5 clips to just under 360 (red side), never wraps to 90.
        let mut f = Frame::filled(1, 1, [255, 0, 255]);
        apply_hsv(&mut f, [1.5, 1.0, 1.0]);
        let [h, _, _] = rgb_to_hsv(f.pixel(0, 0));
        assert!(!(1.0..=300.0).contains(&h), "hue {h}");
    }

    #[test]
    fn reflection_area_on_black() {
        let mut f = Frame::filled(200, 160, [0, 0, 0]);
        let p = ReflectionParams { cx: 100.0, cy: 80.0, a: 30.0, b: 20.0, alpha: 1.0 };
        apply_reflection(&mut f, &p, 1.0);
        let changed = f.data().chunks_exact(3).filter(|px| px[0] == 255).count();
        let area = std::f64::consts::PI * 30.0 * 20.0;
        assert!((changed as f64 - area).abs() <= 0.15 * area);
        assert!(f.data().iter().all(|&v| v == 0 || v == 255));
        let mut g = gradient_frame(30, 20);
        let before = g.clone();
        apply_reflection(&mut g, &ReflectionParams { alpha: 0.0, ..p }, 1.0);
        assert_eq!(g, before);
    }

    #[test]
    fn cutout_noise_touches_one_rectangle() {
        let src = Frame::filled(84, 64, [7, 7, 7]);
        let mut img = src.clone();
        let rect = cutout_noise(&mut img, [0.10, 0.10], &mut stream(3, &[]));
        assert_eq!((rect.w, rect.h), (8, 6));
        for y in 0..64 {
            for x in 0..84 {
                if !rect.contains(x, y) {
                    assert_eq!(img.pixel(x, y), src.pixel(x, y));
                }
            }
        }
        let positions: std::collections::HashSet<_> = (0..10)
            .map(|s| {
                let mut i = src.clone();
                let r = cutout_noise(&mut i, [0.1, 0.4], &mut stream(100 + s, &[]));
                (r.x, r.y)
            })
            .collect();
        assert!(positions.len() > 1);
    }

    #[test]
    fn apply_identity_cases() {
        let src = gradient_frame(30, 20);
        let mut img = src.clone();
        apply(&mut img, &RandConfig::none(), None, &mut stream(1, &[])).unwrap();
        assert_eq!(img, src);
        let never = RandConfig { p: 0.0, ..RandConfig::all() };
        let frames = vec![src.clone()];
        let source = PatchSource::new(&frames).unwrap();
        apply(&mut img, &never, Some(&source), &mut stream(1, &[])).unwrap();
        assert_eq!(img, src);
    }

    #[test]
    fn cutout_obs_requires_patches() {
        let mut img = gradient_frame(30, 20);
        let cfg = RandConfig { p: 1.0, enabled: vec![RandFn::CutoutObs], ..RandConfig::all() };
        assert!(matches!(apply(&mut img, &cfg, None, &mut stream(1, &[])), Err(Error::Config(_))));
        assert!(PatchSource::new(&[]).is_err());
    }

    #[test]
    fn apply_counts_calls() {
        let before = apply_calls_on_thread();
        let mut img = gradient_frame(8, 8);
        apply(&mut img, &RandConfig::none(), None, &mut stream(1, &[])).unwrap();
        assert_eq!(apply_calls_on_thread(), before + 1);
    }

    #[test]
    fn config_validation() {
        assert!(RandConfig::all().validate().is_ok());
        assert!(RandConfig { p: 1.5, ..RandConfig::all() }.validate().is_err());
        assert!(RandConfig { cutout_fraction: [0.1, 1.0], ..RandConfig::all() }.validate().is_err());
        let json = serde_json::to_string(&RandConfig::all()).unwrap();
        assert_eq!(serde_json::from_str::<RandConfig>(&json).unwrap(), RandConfig::all());
    }

    proptest! {
        #[test]
        fn apply_is_deterministic(seed in any::<u64>()) {
            let src = gradient_frame(24, 16);
            let frames = vec![Frame::filled(24, 16, [1, 2, 3]), gradient_frame(24, 16)];
            let source = PatchSource::new(&frames).unwrap();
            let cfg = RandConfig::all();
            let mut a = src.clone();
            let mut b = src.clone();
            apply(&mut a, &cfg, Some(&source), &mut stream(seed, &[])).unwrap();
            apply(&mut b, &cfg, Some(&source), &mut stream(seed, &[])).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn hsv_keeps_gray_gray(v in any::<u8>(), mh in 0.5f64..1.5, ms in 0.5f64..1.5) {
            let mut f = Frame::filled(2, 2, [v, v, v]);
            apply_hsv(&mut f, [mh, ms, 1.0]);
            prop_assert!(f.data().iter().all(|&x| x.abs_diff(v) <= 1));
        }
    }
}
