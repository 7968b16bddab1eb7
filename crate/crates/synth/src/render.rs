//! Orthographic ray casting of a parametric head.
//!
//! Head frame: x to the subject's left/right (the head is mirror symmetric in
//! x), y up, z out of the face. The camera looks down −z in the world frame
//! and the head is rotated by yaw (pan + view offset) about y and pitch
//! (tilt) about x. Every quantity that depends on x goes through |x| or an
//! exactly mirrored expression, so mirrored poses render to mirrored images
//! bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Modal;

/// Half-width of the imaged square in head units (head half-height ≈ 1).
const EXTENT: f64 = 1.45;
const CAMERA_Z: f64 = 3.0;
const LEVELS: f64 = 65535.0;

/// Per-identity head geometry and albedo.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    /// Ellipsoid semi-axes (x, y, z).
    pub radii: [f64; 3],
    pub nose_length: f64,
    pub skin: f64,
    pub hair: f64,
    /// Height (in units of the y semi-axis) where the hair starts on the forehead.
    pub hairline: f64,
}

impl Default for Subject {
    fn default() -> Self {
        Subject {
            radii: [0.8, 1.0, 0.9],
            nose_length: 1.0,
            skin: 0.75,
            hair: 0.25,
            hairline: 0.45,
        }
    }
}

impl Subject {
    /// Deterministic identity drawn from `seed`.
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut jitter = |lo: f64, hi: f64| rng.gen_range(lo..hi);
        Subject {
            radii: [jitter(0.77, 0.83), jitter(0.97, 1.03), jitter(0.87, 0.93)],
            nose_length: jitter(0.85, 1.15),
            skin: jitter(0.7, 0.8),
            hair: jitter(0.2, 0.3),
            hairline: jitter(0.4, 0.5),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Head,
    Nose,
    Ear,
}

struct Ellipsoid {
    center: [f64; 3],
    radii: [f64; 3],
    part: Part,
}

fn parts(s: &Subject) -> [Ellipsoid; 4] {
    let [a, b, c] = s.radii;
    let ear = |x: f64| Ellipsoid {
        center: [x, 0.02 * b, -0.05 * c],
        radii: [0.09, 0.22, 0.14],
        part: Part::Ear,
    };
    [
        Ellipsoid {
            center: [0.0, 0.0, 0.0],
            radii: s.radii,
            part: Part::Head,
        },
        Ellipsoid {
            center: [0.0, -0.12 * b, 0.8 * c],
            radii: [0.12, 0.2, 0.28 * s.nose_length],
            part: Part::Nose,
        },
        ear(0.96 * a),
        ear(-0.96 * a),
    ]
}

/// Nearest positive hit of the ray `o + t·d`.
fn intersect(o: [f64; 3], d: [f64; 3], e: &Ellipsoid) -> Option<f64> {
    let q: [f64; 3] = std::array::from_fn(|k| (o[k] - e.center[k]) / e.radii[k]);
    let v: [f64; 3] = std::array::from_fn(|k| d[k] / e.radii[k]);
    let aa = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
    let bb = 2.0 * (q[0] * v[0] + q[1] * v[1] + q[2] * v[2]);
    let cc = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] - 1.0;
    let disc = bb * bb - 4.0 * aa * cc;
    if disc < 0.0 {
        return None;
    }
    let t = (-bb - disc.sqrt()) / (2.0 * aa);
    (t > 0.0).then_some(t)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gauss(dx: f64, dy: f64, sx: f64, sy: f64) -> f64 {
    (-0.5 * ((dx / sx).powi(2) + (dy / sy).powi(2))).exp()
}

fn head_albedo(s: &Subject, p: [f64; 3]) -> f64 {
    let [a, b, c] = s.radii;
    let ax = p[0].abs();
    let u = p[1] / b;
    let front = (p[2] / c).clamp(-1.0, 1.0);
    // azimuth from the face direction, 0 (front) .. π (back)
    let phi = ax.atan2(p[2]);

    let mut skin = s.skin;
    if p[2] > 0.0 {
        let eyes = gauss(ax - 0.34 * a, u - 0.2, 0.09, 0.07);
        let brows = gauss(ax - 0.34 * a, u - 0.36, 0.14, 0.03);
        let mouth = gauss(ax, u + 0.47, 0.2, 0.05);
        skin *= (1.0 - 0.8 * eyes) * (1.0 - 0.45 * brows) * (1.0 - 0.5 * mouth);
    }
    let mut hair = s.hair * (1.0 + 0.25 * (5.0 * phi).cos() * (1.0 + 0.5 * (7.0 * u).sin()));
    if p[2] < 0.0 {
        // light braid down the back midline, so rear views show which way the head turned
        hair += 0.45 * gauss(ax, u + 0.1, 0.1, 0.5);
    }
    let start = s.hairline - 0.45 * (1.0 - front);
    let w = sigmoid(14.0 * (u - start));
    (1.0 - w) * skin + w * hair
}

struct Pose {
    // rotation head → world is R_y(yaw)·R_x(pitch)
    cy: f64,
    sy: f64,
    cp: f64,
    sp: f64,
}

impl Pose {
    fn new(yaw_deg: f64, pitch_deg: f64) -> Self {
        // odd/even symmetry made explicit so ±yaw give exactly mirrored rays
        let odd = |deg: f64| {
            let s = deg.abs().to_radians().sin();
            if deg < 0.0 {
                -s
            } else {
                s
            }
        };
        Pose {
            cy: yaw_deg.abs().to_radians().cos(),
            sy: odd(yaw_deg),
            cp: pitch_deg.abs().to_radians().cos(),
            sp: odd(pitch_deg),
        }
    }

    /// Rᵀ·v
    fn to_head(&self, v: [f64; 3]) -> [f64; 3] {
        let [x, y, z] = v;
        let (x1, z1) = (self.cy * x - self.sy * z, self.sy * x + self.cy * z);
        [x1, self.cp * y + self.sp * z1, self.cp * z1 - self.sp * y]
    }

    /// z component of R·n
    fn world_z(&self, n: [f64; 3]) -> f64 {
        let z1 = self.sp * n[1] + self.cp * n[2];
        self.cy * z1 - self.sy * n[0]
    }
}

fn shade(s: &Subject, parts: &[Ellipsoid], pose: &Pose, x: f64, y: f64, modal: Modal) -> f64 {
    let o = pose.to_head([x, y, CAMERA_Z]);
    let d = pose.to_head([0.0, 0.0, -1.0]);
    let mut best: Option<(f64, &Ellipsoid)> = None;
    for e in parts {
        if let Some(t) = intersect(o, d, e) {
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, e));
            }
        }
    }
    let Some((t, e)) = best else { return 0.0 };
    match modal {
        Modal::Depth => ((CAMERA_Z - t + 1.2) / 2.4).clamp(0.0, 1.0),
        Modal::Gray => {
            let p: [f64; 3] = std::array::from_fn(|k| o[k] + t * d[k]);
            let g: [f64; 3] = std::array::from_fn(|k| (p[k] - e.center[k]) / (e.radii[k] * e.radii[k]));
            let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            let n = [g[0] / norm, g[1] / norm, g[2] / norm];
            let albedo = match e.part {
                Part::Head => head_albedo(s, p),
                Part::Nose => 0.95 * s.skin,
                Part::Ear => 0.9 * s.skin,
            };
            albedo * (0.25 + 0.75 * pose.world_z(n).max(0.0))
        }
    }
}

/// Renders one `size × size` image (row-major, values in [0, 1] quantized to
/// 16-bit levels). `rng` is only drawn from when `noise_sigma > 0`.
#[allow(clippy::too_many_arguments)]
pub fn render_head<R: Rng>(
    subject: &Subject,
    pan: f64,
    tilt: f64,
    view_offset: f64,
    modal: Modal,
    noise_sigma: f64,
    size: usize,
    rng: &mut R,
) -> Vec<f64> {
    let pose = Pose::new(pan + view_offset, tilt);
    let parts = parts(subject);
    let half = size as f64 / 2.0;
    let coord = |k: f64| (k - half) / half * EXTENT;
    let mut img = Vec::with_capacity(size * size);
    for i in 0..size {
        for j in 0..size {
            // 2×2 supersampling, summed in sorted order so mirrored pixels agree exactly
            let mut s = [0.0; 4];
            for (k, (di, dj)) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)].iter().enumerate() {
                let x = coord(j as f64 + dj);
                let y = -coord(i as f64 + di);
                s[k] = shade(subject, &parts, &pose, x, y, modal);
            }
            s.sort_by(f64::total_cmp);
            let mut v = ((s[0] + s[1]) + (s[2] + s[3])) / 4.0;
            if noise_sigma > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                v += noise_sigma * z;
            }
            img.push((v.clamp(0.0, 1.0) * LEVELS).round() / LEVELS);
        }
    }
    img
}
