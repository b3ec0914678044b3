use serde::{Deserialize, Serialize};

use super::image::MultimodalImage;
use crate::error::{Error, Result};

/// Full-range BT.601 analog YUV.
pub fn rgb_to_yuv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    (y, 0.492 * (b - y), 0.877 * (r - y))
}

/// Thresholds of the three-rule skin test. The colour numbers are local
/// defaults chosen to cover generic skin chroma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkinRuleConfig {
    /// R must exceed this.
    pub r_min: f64,
    /// R − min(G, B) must exceed this.
    pub spread_min: f64,
    pub v_range: (f64, f64),
    pub u_range: (f64, f64),
    /// Temperature must exceed this, in °C.
    pub temperature_min: f64,
}

impl Default for SkinRuleConfig {
    fn default() -> Self {
        SkinRuleConfig {
            r_min: 95.0,
            spread_min: 15.0,
            v_range: (10.0, 110.0),
            u_range: (-60.0, 10.0),
            temperature_min: 32.0,
        }
    }
}

impl SkinRuleConfig {
    pub fn validate(&self) -> Result<()> {
        let in_rgb = |v: f64| (0.0..=255.0).contains(&v);
        let ok = in_rgb(self.r_min)
            && (0.0..=255.0).contains(&self.spread_min)
            && self.v_range.0 <= self.v_range.1
            && self.u_range.0 <= self.u_range.1
            && self.temperature_min.is_finite()
            && [self.v_range.0, self.v_range.1, self.u_range.0, self.u_range.1]
                .iter()
                .all(|v| v.abs() <= 255.0);
        if !ok {
            return Err(Error::Config(format!("invalid skin rule thresholds {self:?}")));
        }
        Ok(())
    }

    /// Rule 1: the composite RGB and YUV colour test.
    pub fn color_rule(&self, [r, g, b]: [u8; 3]) -> bool {
        let (r, g, b) = (r as f64, g as f64, b as f64);
        let (_, u, v) = rgb_to_yuv(r, g, b);
        r > self.r_min
            && r > g
            && r > b
            && r - g.min(b) > self.spread_min
            && (self.v_range.0..=self.v_range.1).contains(&v)
            && (self.u_range.0..=self.u_range.1).contains(&u)
    }
}

/// Pixels passing the colour rule, warmer than the threshold and outside
/// every marked burn zone.
pub fn skin_mask(img: &MultimodalImage, cfg: &SkinRuleConfig) -> Vec<bool> {
    (0..img.pixel_count())
        .map(|i| {
            cfg.color_rule(img.color[i])
                && img.temperature[i] > cfg.temperature_min as f32
                && img.burn_mask.as_ref().is_none_or(|m| m[i] == 0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yuv_examples() {
        assert_eq!(rgb_to_yuv(0.0, 0.0, 0.0), (0.0, 0.0, 0.0));
        let (y, u, v) = rgb_to_yuv(255.0, 255.0, 255.0);
        assert!((y - 255.0).abs() < 1e-9 && u.abs() < 1e-9 && v.abs() < 1e-9);
        let (y, _, v) = rgb_to_yuv(255.0, 0.0, 0.0);
        assert!((y - 76.245).abs() < 1e-9);
        assert!((v - 156.77).abs() < 0.01);
    }

    #[test]
    fn default_rule_accepts_typical_skin() {
        let cfg = SkinRuleConfig::default();
        assert!(cfg.color_rule([200, 120, 90]));
        assert!(!cfg.color_rule([90, 60, 40]));
        assert!(!cfg.color_rule([120, 130, 90]));
        cfg.validate().unwrap();
    }
}
