use serde::{Deserialize, Serialize};

use super::DomainId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    /// Sky gradient over a skyline of blocky buildings.
    City,
    /// High-contrast smooth noise standing in for photographed surroundings.
    Photo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundStyle {
    pub kind: BackgroundKind,
    pub seed: u64,
    pub sky_top: [u8; 3],
    pub sky_horizon: [u8; 3],
    pub palette: Vec<[u8; 3]>,
    /// Feature size: skyline buildings per turn, or noise cells per turn.
    pub detail: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceStyle {
    pub asphalt: [u8; 3],
    pub edge_line: [u8; 3],
    pub center_line: [u8; 3],
    pub floor: [u8; 3],
    /// Relative amplitude of the world-anchored texture, in `[0, 1]`.
    pub texture: f64,
    /// Texture cell size in meters.
    pub texture_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lighting {
    pub gain: f64,
    /// Relative brightness change from the image center to the right edge
    /// (the left edge changes by the negative amount).
    pub lateral_gradient: f64,
}

/// Everything that distinguishes one visual domain from another. Track
/// geometry is not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualDomain {
    pub id: DomainId,
    pub background: BackgroundStyle,
    pub surface: SurfaceStyle,
    pub lighting: Lighting,
    /// Amplitude of per-pixel sensor noise in gray levels.
    pub noise_floor: f64,
}

impl VisualDomain {
    pub fn train() -> Self {
        Self {
            id: DomainId::Train,
            background: BackgroundStyle {
                kind: BackgroundKind::City,
                seed: 11,
                sky_top: [120, 165, 225],
                sky_horizon: [200, 220, 240],
                palette: vec![[150, 150, 160], [120, 110, 100], [175, 165, 140], [95, 100, 115], [140, 90, 70]],
                detail: 48,
            },
            surface: SurfaceStyle {
                asphalt: [70, 70, 76],
                edge_line: [235, 235, 235],
                center_line: [230, 200, 40],
                floor: [62, 118, 58],
                texture: 0.08,
                texture_scale: 0.03,
            },
            lighting: Lighting {
                gain: 1.0,
                lateral_gradient: 0.0,
            },
            noise_floor: 2.0,
        }
    }

    pub fn test() -> Self {
        Self {
            id: DomainId::Test,
            background: BackgroundStyle {
                kind: BackgroundKind::Photo,
                seed: 2024,
                sky_top: [235, 230, 215],
                sky_horizon: [190, 180, 160],
                palette: vec![[225, 215, 190], [60, 50, 45], [250, 250, 245], [120, 95, 70], [35, 40, 55], [170, 160, 150]],
                detail: 40,
            },
            surface: SurfaceStyle {
                asphalt: [96, 80, 72],
                edge_line: [235, 235, 220],
                center_line: [240, 210, 60],
                floor: [96, 110, 130],
                texture: 0.18,
                texture_scale: 0.02,
            },
            lighting: Lighting {
                gain: 1.3,
                lateral_gradient: 0.35,
            },
            noise_floor: 4.0,
        }
    }

    pub fn preset(id: &DomainId) -> Option<Self> {
        match id {
            DomainId::Train => Some(Self::train()),
            DomainId::Test => Some(Self::test()),
            DomainId::Custom(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(format!("domain {}: {m}", self.id)));
        if !(self.lighting.gain > 0.0 && self.lighting.gain <= 4.0) {
            return bad(format!("gain {} outside (0, 4]", self.lighting.gain));
        }
        if !(self.lighting.lateral_gradient.abs() <= 1.0) {
            return bad("lateral gradient outside [-1, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.surface.texture) {
            return bad("texture amplitude outside [0, 1]".into());
        }
        if !(self.surface.texture_scale > 0.0) {
            return bad("texture scale must be positive".into());
        }
        if !(0.0..=64.0).contains(&self.noise_floor) {
            return bad("noise floor outside [0, 64]".into());
        }
        if self.background.palette.is_empty() || self.background.detail == 0 {
            return bad("background needs a palette and positive detail".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_distinct() {
        let (a, b) = (VisualDomain::train(), VisualDomain::test());
        a.validate().unwrap();
        b.validate().unwrap();
        assert_ne!(a.background, b.background);
        assert_ne!(a.lighting, b.lighting);
        assert_ne!(a.surface.asphalt, b.surface.asphalt);
        let mut c = VisualDomain::train();
        c.lighting.gain = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn serde_round_trip() {
        let d = VisualDomain::test();
        let back: VisualDomain = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        let custom: DomainId = serde_json::from_str(r#"{"custom":"night"}"#).unwrap();
        assert_eq!(custom.to_string(), "night");
    }
}
