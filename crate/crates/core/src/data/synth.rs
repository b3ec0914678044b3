//! Seeded synthetic stand-ins for the burn and face databases.
//!
//! Every image is drawn from its own ChaCha stream (`seed`, index), so a
//! dataset is a pure function of `(seed, count)` and its prefix does not
//! depend on `count`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::image::{MultimodalImage, DEFAULT_HEIGHT, DEFAULT_WIDTH};
use super::keypoints::{KeypointSample, FACE_SIDE, NUM_KEYPOINTS};

fn stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Bilinear interpolation of a coarse random lattice, values in [0, 1).
struct ValueNoise {
    cols: usize,
    cell: f32,
    lattice: Vec<f32>,
}

impl ValueNoise {
    fn new(rng: &mut impl Rng, width: usize, height: usize, cell: f32) -> Self {
        let cols = (width as f32 / cell) as usize + 2;
        let rows = (height as f32 / cell) as usize + 2;
        ValueNoise {
            cols,
            cell,
            lattice: (0..cols * rows).map(|_| rng.random::<f32>()).collect(),
        }
    }

    fn at(&self, x: usize, y: usize) -> f32 {
        let (fx, fy) = (x as f32 / self.cell, y as f32 / self.cell);
        let (ix, iy) = (fx as usize, fy as usize);
        let (tx, ty) = (fx - ix as f32, fy - iy as f32);
        let v = |cx: usize, cy: usize| self.lattice[cy * self.cols + cx];
        let top = v(ix, iy) * (1.0 - tx) + v(ix + 1, iy) * tx;
        let bottom = v(ix, iy + 1) * (1.0 - tx) + v(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cx: f32,
    cy: f32,
    a: f32,
    b: f32,
    cos: f32,
    sin: f32,
}

impl Ellipse {
    fn new(cx: f32, cy: f32, a: f32, b: f32, angle: f32) -> Self {
        Ellipse {
            cx,
            cy,
            a,
            b,
            cos: angle.cos(),
            sin: angle.sin(),
        }
    }

    /// < 1 inside.
    fn level(&self, x: f32, y: f32) -> f32 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    fn contains(&self, x: f32, y: f32) -> bool {
        self.level(x, y) < 1.0
    }
}

fn clamp_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurnGenConfig {
    pub width: usize,
    pub height: usize,
    pub max_burns: usize,
}

impl Default for BurnGenConfig {
    fn default() -> Self {
        BurnGenConfig {
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            max_burns: 3,
        }
    }
}

/// Burn images with default geometry (320×240, up to 3 burns).
pub fn gen_burn_dataset(seed: u64, count: usize) -> Vec<MultimodalImage> {
    gen_burn_dataset_with(seed, count, &BurnGenConfig::default())
}

pub fn gen_burn_dataset_with(seed: u64, count: usize, cfg: &BurnGenConfig) -> Vec<MultimodalImage> {
    (0..count)
        .map(|i| gen_burn_image(&mut stream(seed, i), format!("burn{i:05}"), cfg))
        .collect()
}

/// Background clutter under 32 °C, a skin ellipse at 33–36 °C and up to
/// `max_burns` burn ellipses inside it. Light burns are redder and warmer
/// (36.5–38.5 °C); serious burns are dark with pale patches and cooler.
fn gen_burn_image(rng: &mut ChaCha8Rng, id: String, cfg: &BurnGenConfig) -> MultimodalImage {
    let (w, h) = (cfg.width, cfg.height);
    let (wf, hf) = (w as f32, h as f32);
    let n = w * h;

    let mut color = vec![[0u8; 3]; n];
    let mut temperature = vec![0f32; n];
    let mut mask = vec![0u8; n];

    // clutter: a base colour plus a few rectangles
    let rand_color = |rng: &mut ChaCha8Rng| [rng.random::<u8>(), rng.random::<u8>(), rng.random::<u8>()];
    let base = rand_color(rng);
    let base_t: f32 = rng.random_range(22.0..28.0);
    let rects: Vec<(usize, usize, usize, usize, [u8; 3], f32)> = (0..rng.random_range(2..6))
        .map(|_| {
            let x0 = rng.random_range(0..w);
            let y0 = rng.random_range(0..h);
            let rw = rng.random_range(w / 10..w / 2);
            let rh = rng.random_range(h / 10..h / 2);
            (x0, y0, x0 + rw, y0 + rh, rand_color(rng), rng.random_range(21.0..30.0))
        })
        .collect();
    let shade = ValueNoise::new(rng, w, h, 40.0);
    let grain = ValueNoise::new(rng, w, h, 3.0);

    let skin = Ellipse::new(
        wf / 2.0 + rng.random_range(-0.1..0.1) * wf,
        hf / 2.0 + rng.random_range(-0.1..0.1) * hf,
        rng.random_range(0.30..0.42) * wf,
        rng.random_range(0.30..0.42) * hf,
        rng.random_range(0.0..std::f32::consts::PI),
    );
    let skin_r: f32 = rng.random_range(170.0..225.0);
    let skin_g = skin_r * rng.random_range(0.58..0.70);
    let skin_b = skin_g * rng.random_range(0.72..0.88);
    let skin_t: f32 = rng.random_range(33.8..35.2);

    let burns: Vec<(Ellipse, u8)> = (0..rng.random_range(0..=cfg.max_burns))
        .map(|_| {
            let (cx, cy) = loop {
                let x = rng.random_range(0.0..wf);
                let y = rng.random_range(0.0..hf);
                if skin.level(x, y) < 0.5 {
                    break (x, y);
                }
            };
            let e = Ellipse::new(
                cx,
                cy,
                rng.random_range(14.0..40.0),
                rng.random_range(14.0..40.0),
                rng.random_range(0.0..std::f32::consts::PI),
            );
            (e, rng.random_range(1..=2u8))
        })
        .collect();
    let light_t: f32 = rng.random_range(36.8..38.2);
    let serious_t: f32 = rng.random_range(31.2..32.6);
    let pale = ValueNoise::new(rng, w, h, 5.0);

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (xf, yf) = (x as f32 + 0.5, y as f32 + 0.5);
            let s = shade.at(x, y) - 0.5;
            let g = grain.at(x, y) - 0.5;
            let noise = rng.random::<f32>() - 0.5;

            let mut c = base;
            let mut t = base_t;
            for &(x0, y0, x1, y1, rc, rt) in &rects {
                if (x0..x1).contains(&x) && (y0..y1).contains(&y) {
                    c = rc;
                    t = rt;
                }
            }
            let mut px = [c[0] as f32 + 20.0 * s, c[1] as f32 + 20.0 * s, c[2] as f32 + 20.0 * s];
            t += 2.0 * s + 0.4 * noise;
            t = t.min(31.5);

            if skin.contains(xf, yf) {
                let k = 1.0 + 0.06 * s;
                px = [skin_r * k + 6.0 * g, skin_g * k + 5.0 * g, skin_b * k + 4.0 * g];
                t = (skin_t + 1.2 * s + 0.3 * noise).clamp(33.0, 36.0);
            }
            for &(e, sev) in &burns {
                if !e.contains(xf, yf) {
                    continue;
                }
                mask[i] = sev;
                if sev == 1 {
                    px = [238.0 + 14.0 * g, 100.0 + 18.0 * s + 10.0 * g, 95.0 + 12.0 * g];
                    t = (light_t + 0.8 * s + 0.3 * noise).clamp(36.5, 38.5);
                } else {
                    px = if pale.at(x, y) > 0.62 {
                        [226.0 + 10.0 * g, 214.0 + 10.0 * g, 192.0 + 10.0 * g]
                    } else {
                        [128.0 + 30.0 * g, 66.0 + 20.0 * g, 56.0 + 16.0 * g]
                    };
                    t = serious_t + 0.8 * s + 0.3 * noise;
                }
            }
            color[i] = [
                clamp_u8(px[0] + 6.0 * noise),
                clamp_u8(px[1] + 6.0 * noise),
                clamp_u8(px[2] + 6.0 * noise),
            ];
            temperature[i] = t;
        }
    }
    MultimodalImage::new(id, w, h, color, temperature, Some(mask)).expect("generator emits consistent planes")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaceGenConfig {
    /// Fraction of samples that keep only the eye centres, nose tip and
    /// bottom lip.
    pub missing_fraction: f64,
    /// Amplitude of per-pixel noise, gray levels.
    pub noise: f32,
}

impl Default for FaceGenConfig {
    fn default() -> Self {
        FaceGenConfig {
            missing_fraction: 0.3,
            noise: 8.0,
        }
    }
}

/// Keypoint positions in the face frame (unit scale, upright, origin at
/// the face centre, y down).
const FACE_LAYOUT: [(f32, f32); NUM_KEYPOINTS] = [
    (17.0, -8.0),
    (-17.0, -8.0),
    (11.0, -8.0),
    (23.0, -8.0),
    (-11.0, -8.0),
    (-23.0, -8.0),
    (9.0, -17.0),
    (27.0, -18.0),
    (-9.0, -17.0),
    (-27.0, -18.0),
    (0.0, 6.0),
    (13.0, 20.0),
    (-13.0, 20.0),
    (0.0, 17.0),
    (0.0, 24.0),
];

/// Kept in samples that lose keypoints.
const ALWAYS_PRESENT: [usize; 4] = [0, 1, 10, 14];

pub fn gen_keypoint_dataset(seed: u64, count: usize) -> Vec<KeypointSample> {
    gen_keypoint_dataset_with(seed, count, &FaceGenConfig::default())
}

pub fn gen_keypoint_dataset_with(seed: u64, count: usize, cfg: &FaceGenConfig) -> Vec<KeypointSample> {
    (0..count).map(|i| gen_face(&mut stream(seed, i), cfg)).collect()
}

fn smooth_inside(level: f32) -> f32 {
    // 1 well inside, 0 outside, soft over a thin rim
    ((1.0 - level) * 4.0).clamp(0.0, 1.0)
}

fn seg_dist(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

fn gen_face(rng: &mut ChaCha8Rng, cfg: &FaceGenConfig) -> KeypointSample {
    let side = FACE_SIDE as f32;
    let cx = side / 2.0 - 0.5 + rng.random_range(-5.0..5.0);
    let cy = side / 2.0 - 0.5 + rng.random_range(-5.0..5.0);
    let scale: f32 = rng.random_range(0.85..1.1);
    let angle: f32 = rng.random_range(-12f32..12.0).to_radians();
    let (cos, sin) = (angle.cos(), angle.sin());
    let to_image = |(u, v): (f32, f32)| (cx + scale * (u * cos - v * sin), cy + scale * (u * sin + v * cos));

    let bg: f32 = rng.random_range(30.0..90.0);
    let face_tone: f32 = rng.random_range(140.0..210.0);
    let contrast: f32 = rng.random_range(0.6..1.0);
    let dark = contrast * (face_tone - 20.0);

    let mut kp = [(0.0f32, 0.0f32); NUM_KEYPOINTS];
    for (k, &p) in kp.iter_mut().zip(&FACE_LAYOUT) {
        *k = to_image(p);
    }
    let face = Ellipse::new(cx, cy, 31.0 * scale, 38.0 * scale, angle);
    let eye_white = |c: (f32, f32)| Ellipse::new(c.0, c.1, 6.0 * scale, 3.0 * scale, angle);
    let eyes = [eye_white(kp[0]), eye_white(kp[1])];
    let mouth_c = to_image((0.0, 20.5));
    let mouth = Ellipse::new(mouth_c.0, mouth_c.1, 13.0 * scale, 3.5 * scale, angle);
    let brows = [(kp[6], kp[7]), (kp[8], kp[9])];
    let pupil_r = 3.0 * scale;
    let nose_r = 2.5 * scale;

    let mut image = Vec::with_capacity(FACE_SIDE * FACE_SIDE);
    for y in 0..FACE_SIDE {
        for x in 0..FACE_SIDE {
            let p = (x as f32, y as f32);
            let inside = smooth_inside(face.level(p.0, p.1));
            let mut v = bg + (face_tone - bg) * inside;
            for (e, c) in eyes.iter().zip([kp[0], kp[1]]) {
                v += (235.0 - v) * 0.6 * contrast * smooth_inside(e.level(p.0, p.1));
                let d = (p.0 - c.0).hypot(p.1 - c.1) / pupil_r;
                v -= dark * smooth_inside(d * d).max(0.0);
            }
            for &(a, b) in &brows {
                let d = seg_dist(p, a, b) / (1.6 * scale);
                v -= 0.8 * dark * smooth_inside(d * d);
            }
            let dn = (p.0 - kp[10].0).hypot(p.1 - kp[10].1) / nose_r;
            v -= 0.6 * dark * smooth_inside(dn * dn);
            v -= 0.9 * dark * smooth_inside(mouth.level(p.0, p.1));
            if cfg.noise > 0.0 {
                v += cfg.noise * (rng.random::<f32>() - 0.5) * 2.0;
            }
            image.push(clamp_u8(v));
        }
    }

    let mut presence = [true; NUM_KEYPOINTS];
    if rng.random::<f64>() < cfg.missing_fraction {
        for (i, p) in presence.iter_mut().enumerate() {
            *p = ALWAYS_PRESENT.contains(&i);
        }
    }
    KeypointSample::new(image, kp, presence).expect("face layout stays inside the frame")
}
