//! Synthetic supervision: procedural clean images and a scattering-model
//! smoke compositor (`out = clean * t + A * (1 - t)` with `t = exp(-beta *
//! d)` over a multi-octave value-noise density field).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use rganet_tensor::{Tensor4, TensorError};

pub const NOISE_PERSISTENCE: f64 = 0.5;

/// Parameters of one synthetic smoke field.
#[derive(Clone, Copy, Debug)]
pub struct SmokeParams {
    /// Ambient scattered light color, each channel in [0.7, 1.0].
    pub airlight: [f64; 3],
    /// Density scale; larger means thicker smoke.
    pub beta: f64,
    pub octaves: usize,
    /// Noise cells per image side at the first octave.
    pub base_freq: usize,
    pub seed: u64,
}

impl Default for SmokeParams {
    fn default() -> Self {
        SmokeParams {
            airlight: [0.9, 0.9, 0.92],
            beta: 1.2,
            octaves: 4,
            base_freq: 4,
            seed: 0,
        }
    }
}

impl SmokeParams {
    pub fn validate(&self) -> Result<(), TensorError> {
        if self.airlight.iter().any(|&a| !(0.7..=1.0).contains(&a)) {
            return Err(TensorError::invalid(
                "smoke_params",
                "airlight channels must lie in [0.7, 1.0]",
            ));
        }
        if self.beta <= 0.0 {
            return Err(TensorError::invalid("smoke_params", "beta must be > 0"));
        }
        if self.octaves == 0 || self.base_freq == 0 {
            return Err(TensorError::invalid(
                "smoke_params",
                "octaves and base_freq must be >= 1",
            ));
        }
        Ok(())
    }

    /// Randomized field parameters for dataset generation (deterministic
    /// per draw sequence).
    pub fn sample(rng: &mut ChaCha20Rng) -> Self {
        SmokeParams {
            airlight: [
                rng.gen_range(0.75..1.0),
                rng.gen_range(0.75..1.0),
                rng.gen_range(0.75..1.0),
            ],
            beta: rng.gen_range(0.6..2.0),
            octaves: 4,
            base_freq: 4,
            seed: rng.gen(),
        }
    }
}

/// Multi-octave bilinear value noise in [0, 1], row-major `h*w`.
pub fn value_noise(
    h: usize,
    w: usize,
    octaves: usize,
    base_freq: usize,
    persistence: f64,
    rng: &mut ChaCha20Rng,
) -> Vec<f64> {
    let mut field = vec![0.0; h * w];
    let mut weight = 1.0;
    let mut total_weight = 0.0;
    for o in 0..octaves {
        let cells = base_freq << o;
        let lattice: Vec<f64> = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.gen_range(0.0..1.0))
            .collect();
        for y in 0..h {
            let fy = (y as f64 + 0.5) / h as f64 * cells as f64;
            let iy = (fy as usize).min(cells - 1);
            let uy = fy - iy as f64;
            for x in 0..w {
                let fx = (x as f64 + 0.5) / w as f64 * cells as f64;
                let ix = (fx as usize).min(cells - 1);
                let ux = fx - ix as f64;
                let l = |r: usize, c: usize| lattice[r * (cells + 1) + c];
                let top = l(iy, ix) * (1.0 - ux) + l(iy, ix + 1) * ux;
                let bot = l(iy + 1, ix) * (1.0 - ux) + l(iy + 1, ix + 1) * ux;
                field[y * w + x] += weight * (top * (1.0 - uy) + bot * uy);
            }
        }
        total_weight += weight;
        weight *= persistence;
    }
    for v in field.iter_mut() {
        *v /= total_weight;
    }
    field
}

/// Scattering composite for a given density field (values in [0, 1]).
pub fn apply_smoke(
    clean: &Tensor4<f32>,
    density: &[f64],
    beta: f64,
    airlight: [f64; 3],
) -> Tensor4<f32> {
    let (n, c, h, w) = clean.dims();
    debug_assert_eq!(density.len(), h * w);
    let mut out = clean.clone();
    for ni in 0..n {
        for ci in 0..c {
            let a = airlight[ci.min(2)];
            let plane = out.plane_mut(ni, ci);
            for (i, v) in plane.iter_mut().enumerate() {
                let t = (-beta * density[i]).exp();
                let s = (*v as f64) * t + a * (1.0 - t);
                *v = s.clamp(0.0, 1.0) as f32;
            }
        }
    }
    out
}

/// Deterministic smoky rendition of a clean image.
pub fn synth_smoke(clean: &Tensor4<f32>, p: &SmokeParams) -> Result<Tensor4<f32>, TensorError> {
    p.validate()?;
    let (_, _, h, w) = clean.dims();
    let mut rng = ChaCha20Rng::seed_from_u64(p.seed);
    let density = value_noise(h, w, p.octaves, p.base_freq, NOISE_PERSISTENCE, &mut rng);
    Ok(apply_smoke(clean, &density, p.beta, p.airlight))
}

/// Procedural clean image: a bilinear color wash, a few solid shapes and a
/// little texture noise. Deterministic per seed.
pub fn generate_clean_image(seed: u64, h: usize, w: usize) -> Tensor4<f32> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut img = Tensor4::zeros(1, 3, h, w);

    let corners: Vec<[f64; 3]> = (0..4)
        .map(|_| {
            [
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
                rng.gen_range(0.1..0.9),
            ]
        })
        .collect();
    for c in 0..3 {
        let plane = img.plane_mut(0, c);
        for y in 0..h {
            let fy = y as f64 / (h - 1).max(1) as f64;
            for x in 0..w {
                let fx = x as f64 / (w - 1).max(1) as f64;
                let top = corners[0][c] * (1.0 - fx) + corners[1][c] * fx;
                let bot = corners[2][c] * (1.0 - fx) + corners[3][c] * fx;
                plane[y * w + x] = (top * (1.0 - fy) + bot * fy) as f32;
            }
        }
    }

    let shapes = rng.gen_range(3..7);
    for _ in 0..shapes {
        let color = [
            rng.gen_range(0.05..0.95) as f32,
            rng.gen_range(0.05..0.95) as f32,
            rng.gen_range(0.05..0.95) as f32,
        ];
        let cy = rng.gen_range(0..h);
        let cx = rng.gen_range(0..w);
        let ry = rng.gen_range(h / 8..h / 2).max(1);
        let rx = rng.gen_range(w / 8..w / 2).max(1);
        let circle = rng.gen_bool(0.5);
        for y in cy.saturating_sub(ry)..(cy + ry).min(h) {
            for x in cx.saturating_sub(rx)..(cx + rx).min(w) {
                let inside = if circle {
                    let dy = (y as f64 - cy as f64) / ry as f64;
                    let dx = (x as f64 - cx as f64) / rx as f64;
                    dy * dy + dx * dx <= 1.0
                } else {
                    true
                };
                if inside {
                    for c in 0..3 {
                        *img.at_mut(0, c, y, x) = color[c];
                    }
                }
            }
        }
    }

    let texture = value_noise(h, w, 3, 4, NOISE_PERSISTENCE, &mut rng);
    for c in 0..3 {
        let plane = img.plane_mut(0, c);
        for (v, t) in plane.iter_mut().zip(texture.iter()) {
            *v = (*v + 0.08 * (*t as f32 - 0.5)).clamp(0.0, 1.0);
        }
    }
    img
}
