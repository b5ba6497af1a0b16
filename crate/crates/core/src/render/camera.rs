use serde::{Deserialize, Serialize};

use super::{BackgroundKind, DomainId, Frame, Observation, VisualDomain};
use crate::rng::splitmix64;
use crate::sim::{CarState, Track};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub mount_height_m: f64,
    /// Negative values tilt the camera toward the ground.
    pub pitch_deg: f64,
    pub hfov_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            mount_height_m: 0.11,
            pitch_deg: -15.0,
            hfov_deg: 120.0,
            width: 84,
            height: 64,
        }
    }
}

impl Camera {
    pub fn with_resolution(mut self, height: usize, width: usize) -> Self {
        self.height = height;
        self.width = width;
        self
    }
}

/// What a pixel shows; geometry only, independent of the visual domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    Background,
    Floor,
    Asphalt,
    EdgeLine,
    CenterLine,
}

impl Surface {
    pub fn is_track(self) -> bool {
        matches!(self, Surface::Asphalt | Surface::EdgeLine | Surface::CenterLine)
    }
}

#[derive(Debug, Clone, Copy)]
enum Ray {
    /// Ground hit in the car frame: meters forward, meters left.
    Ground { forward: f64, left: f64 },
    /// Azimuth offset from the heading (left positive) and elevation.
    Sky { azimuth: f64, elevation: f64 },
}

const EDGE_LINE_M: f64 = 0.025;
const CENTER_LINE_HALF_M: f64 = 0.0125;
const DASH_M: f64 = 0.10;
const MAX_GROUND_M: f64 = 12.0;

/// Camera with precomputed per-pixel rays.
#[derive(Debug, Clone)]
pub struct Renderer {
    camera: Camera,
    rays: Vec<Ray>,
}

impl Renderer {
    pub fn new(camera: Camera) -> Self {
        let (w, h) = (camera.width as f64, camera.height as f64);
        let focal = (w / 2.0) / (camera.hfov_deg.to_radians() / 2.0).tan();
        let tilt = -camera.pitch_deg.to_radians();
        let (sp, cp) = tilt.sin_cos();
        let mut rays = Vec::with_capacity(camera.width * camera.height);
        for r in 0..camera.height {
            for c in 0..camera.width {
                let xc = (c as f64 + 0.5 - w / 2.0) / focal;
                let yc = (h / 2.0 - r as f64 - 0.5) / focal;
                let fwd = cp + yc * sp;
                let left = -xc;
                let up = -sp + yc * cp;
                let ray = if up < 0.0 {
                    let t = camera.mount_height_m / -up;
                    let (forward, left) = (fwd * t, left * t);
                    if forward.hypot(left) > MAX_GROUND_M {
                        Ray::Sky { azimuth: left.atan2(forward), elevation: 0.0 }
                    } else {
                        Ray::Ground { forward, left }
                    }
                } else {
                    Ray::Sky {
                        azimuth: left.atan2(fwd),
                        elevation: up.atan2(fwd.hypot(left)),
                    }
                };
                rays.push(ray);
            }
        }
        Self { camera, rays }
    }

    pub fn camera(&self) -> &Camera {
        &self.camera
    }

    pub fn render(&self, track: &Track, state: &CarState, domain: &VisualDomain) -> Observation {
        self.render_layers(track, state, domain).0
    }

    /// Render and also return the per-pixel surface classification.
    pub fn render_layers(&self, track: &Track, state: &CarState, domain: &VisualDomain) -> (Observation, Vec<Surface>) {
        let field = track.field();
        let (sh, ch) = state.heading.sin_cos();
        let (w, h) = (self.camera.width, self.camera.height);
        let mut data = vec![0u8; w * h * 3];
        let mut classes = Vec::with_capacity(w * h);
        let style = &domain.surface;
        let hw = track.half_width();
        let pose_key = splitmix64(state.x.to_bits() ^ splitmix64(state.y.to_bits() ^ state.heading.to_bits().rotate_left(17)));

        for (i, ray) in self.rays.iter().enumerate() {
            let (surface, color) = match *ray {
                Ray::Ground { forward, left } => {
                    let gx = state.x + ch * forward - sh * left;
                    let gy = state.y + sh * forward + ch * left;
                    let range = forward.hypot(left);
                    let surface = match field.lookup(gx, gy) {
                        Some([dist, lateral, progress]) => {
                            let (dist, lateral, progress) = (dist as f64, lateral as f64, progress as f64);
                            if dist <= hw {
                                if dist >= hw - EDGE_LINE_M {
                                    Surface::EdgeLine
                                } else if lateral.abs() <= CENTER_LINE_HALF_M && (progress / DASH_M) as i64 % 2 == 0 {
                                    Surface::CenterLine
                                } else {
                                    Surface::Asphalt
                                }
                            } else {
                                Surface::Floor
                            }
                        }
                        None => Surface::Floor,
                    };
                    let base = match surface {
                        Surface::Asphalt => style.asphalt,
                        Surface::EdgeLine => style.edge_line,
                        Surface::CenterLine => style.center_line,
                        _ => style.floor,
                    };
                    // World-anchored texture fading out with range.
                    let fade = (1.0 - range / 3.0).max(0.0);
                    let cell_x = (gx / style.texture_scale).floor() as i64;
                    let cell_y = (gy / style.texture_scale).floor() as i64;
                    let n = unit_hash(cell_x, cell_y, domain.background.seed ^ 0x7e47);
                    let scale = 1.0 + style.texture * fade * (2.0 * n - 1.0);
                    (surface, base.map(|v| v as f64 * scale))
                }
                Ray::Sky { azimuth, elevation } => {
                    (Surface::Background, background(domain, state.heading + azimuth, elevation))
                }
            };
            classes.push(surface);

            let col = i % w;
            let light = domain.lighting.gain
                * (1.0 + domain.lighting.lateral_gradient * (2.0 * (col as f64 + 0.5) / w as f64 - 1.0));
            let noise = if domain.noise_floor > 0.0 {
                domain.noise_floor * (2.0 * unit_hash(i as i64, 0, pose_key) - 1.0)
            } else {
                0.0
            };
            for k in 0..3 {
                data[i * 3 + k] = (color[k] * light + noise).round().clamp(0.0, 255.0) as u8;
            }
        }
        let frame = Frame::new(w, h, data).expect("renderer sizes match");
        let obs = Observation {
            frame,
            frame_id: 0,
            domain: domain.id.clone(),
            progress: state.progress,
        };
        (obs, classes)
    }
}

/// Render a single frame; builds the ray table on every call.
pub fn render(track: &Track, state: &CarState, domain: &VisualDomain, camera: Camera) -> Observation {
    Renderer::new(camera).render(track, state, domain)
}

fn unit_hash(a: i64, b: i64, seed: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(a as u64 ^ splitmix64(b as u64).rotate_left(29)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn lerp(a: [u8; 3], b: [u8; 3], t: f64) -> [f64; 3] {
    let t = t.clamp(0.0, 1.0);
    [0, 1, 2].map(|k| a[k] as f64 * (1.0 - t) + b[k] as f64 * t)
}

fn smooth_noise(u: f64, v: f64, period: i64, seed: u64) -> f64 {
    let (iu, iv) = (u.floor(), v.floor());
    let (fu, fv) = (u - iu, v - iv);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (su, sv) = (s(fu), s(fv));
    let at = |du: i64, dv: i64| unit_hash((iu as i64 + du).rem_euclid(period), iv as i64 + dv, seed);
    let top = at(0, 0) * (1.0 - su) + at(1, 0) * su;
    let bottom = at(0, 1) * (1.0 - su) + at(1, 1) * su;
    top * (1.0 - sv) + bottom * sv
}

fn background(domain: &VisualDomain, azimuth: f64, elevation: f64) -> [f64; 3] {
    let style = &domain.background;
    let turn = azimuth.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
    let sky = lerp(style.sky_horizon, style.sky_top, elevation / 0.6);
    match style.kind {
        BackgroundKind::City => {
            let slot = (turn * style.detail as f64).floor() as i64;
            let height = 0.04 + 0.30 * unit_hash(slot, 1, style.seed);
            if elevation < height {
                let pick = (unit_hash(slot, 2, style.seed) * style.palette.len() as f64) as usize;
                let base = style.palette[pick.min(style.palette.len() - 1)];
                // Rows of windows.
                let lit = ((elevation / 0.03) as i64 % 2 == 0) && ((turn * style.detail as f64 * 4.0) as i64 % 2 == 0);
                let k = if lit { 1.15 } else { 1.0 };
                base.map(|v| v as f64 * k)
            } else {
                sky
            }
        }
        BackgroundKind::Photo => {
            let period = style.detail as i64;
            let u = turn * period as f64;
            let v = elevation * 12.0;
            let n = 0.65 * smooth_noise(u, v, period, style.seed) + 0.35 * smooth_noise(u * 3.0, v * 3.0, period * 3, style.seed ^ 1);
            let idx = n * (style.palette.len() as f64 - 1.0);
            let lo = idx.floor() as usize;
            let hi = (lo + 1).min(style.palette.len() - 1);
            let mixed = lerp(style.palette[lo], style.palette[hi], (idx - lo as f64) * 3.0 - 1.0);
            // Ceiling-like fade toward the top.
            let top = (elevation / 0.9).clamp(0.0, 1.0);
            let ceiling = lerp(style.sky_horizon, style.sky_top, 1.0);
            [0, 1, 2].map(|k| mixed[k] * (1.0 - top) + ceiling[k] * top)
        }
    }
}

/// Whether two domains would classify this pose identically (they always do:
/// classification depends only on geometry).
pub fn track_mask(renderer: &Renderer, track: &Track, state: &CarState) -> Vec<bool> {
    let probe = VisualDomain {
        id: DomainId::Custom("mask".into()),
        ..VisualDomain::train()
    };
    renderer
        .render_layers(track, state, &probe)
        .1
        .into_iter()
        .map(Surface::is_track)
        .collect()
}
