//! Synthetic fixtures: harmonic textures, foreign patches and short dynamic
//! sequences with a persistent object plus per-frame speckle.

use irf_core::harmonic_model::{synth_texture, Harmonic};
use irf_core::{ImagePlane, ImageStack};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, ToolkitError};

/// Uniform draw in `[0, 1)`.
pub fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

/// A square foreign-texture insert.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub row: usize,
    pub col: usize,
    pub size: usize,
    pub texture: Harmonic,
    /// Brightness added on top of the scene offset.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub harmonics: Vec<Harmonic>,
    pub noise: f64,
    /// Constant added to every pixel.
    pub offset: f64,
    pub channels: usize,
    pub patches: Vec<Patch>,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            rows: 128,
            cols: 128,
            harmonics: vec![
                Harmonic::new(0.11, 0.23, 20.0, 0.0),
                Harmonic::new(-0.31, 0.07, 15.0, 1.0),
            ],
            noise: 0.5,
            offset: 128.0,
            channels: 1,
            patches: Vec::new(),
            seed: irf_core::harmonic_model::DEFAULT_SEED,
        }
    }
}

/// `n` random harmonics with frequencies in `(-0.4, 0.4)` on both axes.
pub fn random_harmonics(n: usize, amplitude: (f64, f64), rng: &mut ChaCha8Rng) -> Vec<Harmonic> {
    (0..n)
        .map(|_| {
            let fx = unit(rng) * 0.8 - 0.4;
            let fy = unit(rng) * 0.8 - 0.4;
            let a = amplitude.0 + unit(rng) * (amplitude.1 - amplitude.0);
            Harmonic::new(fx, fy, a, unit(rng) * std::f64::consts::TAU)
        })
        .collect()
}

fn plane(spec: &SceneSpec, channel: usize) -> Result<ImagePlane> {
    // channels share frequencies and differ in phase
    let hs: Vec<Harmonic> = spec
        .harmonics
        .iter()
        .map(|h| Harmonic {
            phase: h.phase + 0.7 * channel as f64,
            ..*h
        })
        .collect();
    let seed = spec.seed.wrapping_add(channel as u64);
    let mut img = synth_texture(&hs, spec.rows, spec.cols, spec.noise, seed)
        .map_err(ToolkitError::core("synth"))?
        .map(|v| v + spec.offset);
    for p in &spec.patches {
        if p.row + p.size > spec.rows || p.col + p.size > spec.cols {
            return Err(ToolkitError::Usage(format!(
                "patch at ({}, {}) leaves the image",
                p.row, p.col
            )));
        }
        let h = Harmonic {
            phase: p.texture.phase + 0.7 * channel as f64,
            ..p.texture
        };
        let foreign = synth_texture(&[h], spec.rows, spec.cols, 0.0, 0)
            .map_err(ToolkitError::core("synth"))?;
        for i in p.row..p.row + p.size {
            for k in p.col..p.col + p.size {
                let noise = img.get(i, k) - base_value(&hs, i, k) - spec.offset;
                img.set(i, k, foreign.get(i, k) + spec.offset + p.level + noise);
            }
        }
    }
    Ok(img)
}

fn base_value(hs: &[Harmonic], i: usize, k: usize) -> f64 {
    hs.iter()
        .map(|h| {
            h.amplitude
                * (std::f64::consts::TAU * (h.fx * i as f64 + h.fy * k as f64) + h.phase).cos()
        })
        .sum()
}

/// Texture plus noise with every patch replacing the texture (noise kept).
pub fn scene(spec: &SceneSpec) -> Result<ImageStack> {
    if spec.channels != 1 && spec.channels != 3 {
        return Err(ToolkitError::Usage(format!(
            "{} channels; use 1 or 3",
            spec.channels
        )));
    }
    let planes = (0..spec.channels)
        .map(|c| plane(spec, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(ImageStack::new(planes).expect("same shape"))
}

/// Per-frame speckle: `count` checkerboard blobs of side `size`, at least
/// `margin` pixels from the image border, the scene's patches, each other and
/// the blobs of the previous `history` frames. With `history` one less than
/// the tracking window, no spot is hit twice inside one window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpeckleSpec {
    pub count: usize,
    pub size: usize,
    pub margin: usize,
    pub history: usize,
}

impl Default for SpeckleSpec {
    fn default() -> Self {
        Self {
            count: 2,
            size: 5,
            margin: 13,
            history: 2,
        }
    }
}

/// Dynamic sequence: the scene re-rendered with fresh noise every frame,
/// the scene's patches held fixed and speckle dropped at random positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<ImageStack>,
    /// Speckle blobs per frame.
    pub speckle: Vec<Vec<Patch>>,
}

pub fn sequence(spec: &SceneSpec, frames: usize, sp: &SpeckleSpec) -> Result<Sequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5bec_1e);
    let mut out = Sequence {
        frames: Vec::new(),
        speckle: Vec::new(),
    };
    let (size, margin) = (sp.size, sp.margin);
    if size == 0 || size + 2 * margin > spec.rows.min(spec.cols) {
        return Err(ToolkitError::Usage(format!(
            "speckle of size {size} with margin {margin} does not fit"
        )));
    }
    for t in 0..frames {
        let recent: Vec<Patch> = out.speckle[t.saturating_sub(sp.history)..]
            .iter()
            .flatten()
            .copied()
            .collect();
        let mut blobs = Vec::new();
        let mut tries = 0;
        while blobs.len() < sp.count && tries < 10_000 {
            tries += 1;
            let row =
                margin + (unit(&mut rng) * (spec.rows - size - 2 * margin + 1) as f64) as usize;
            let col =
                margin + (unit(&mut rng) * (spec.cols - size - 2 * margin + 1) as f64) as usize;
            let clear = |p: &Patch| {
                row + size + margin <= p.row
                    || p.row + p.size + margin <= row
                    || col + size + margin <= p.col
                    || p.col + p.size + margin <= col
            };
            if spec.patches.iter().chain(&recent).chain(&blobs).all(clear) {
                let texture = Harmonic::new(
                    0.5,
                    0.5,
                    spec.harmonics.iter().map(|h| h.amplitude).sum::<f64>(),
                    0.0,
                );
                blobs.push(Patch {
                    row,
                    col,
                    size,
                    texture,
                    level: 0.0,
                });
            }
        }
        let mut frame_spec = spec.clone();
        frame_spec.seed = spec.seed.wrapping_add(1000 * (t as u64 + 1));
        frame_spec.patches.extend(blobs.iter().copied());
        out.frames.push(scene(&frame_spec)?);
        out.speckle.push(blobs);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_reproducible() {
        let spec = SceneSpec {
            patches: vec![Patch {
                row: 10,
                col: 20,
                size: 11,
                texture: Harmonic::new(0.4, 0.4, 10.0, 0.0),
                level: 0.0,
            }],
            ..Default::default()
        };
        assert_eq!(scene(&spec).unwrap(), scene(&spec).unwrap());
        let rgb = scene(&SceneSpec {
            channels: 3,
            ..spec.clone()
        })
        .unwrap();
        assert_eq!(rgb.len(), 3);
        assert_ne!(rgb.channel(0), rgb.channel(1));
    }

    #[test]
    fn patch_replaces_texture() {
        let clean = SceneSpec {
            noise: 0.0,
            ..Default::default()
        };
        let with = SceneSpec {
            patches: vec![Patch {
                row: 5,
                col: 5,
                size: 3,
                texture: Harmonic::new(0.0, 0.0, 7.0, 0.0),
                level: 0.0,
            }],
            ..clean.clone()
        };
        let img = scene(&with).unwrap();
        assert!((img.channel(0).get(6, 6) - 135.0).abs() < 1e-9);
        assert_eq!(
            img.channel(0).get(20, 20),
            scene(&clean).unwrap().channel(0).get(20, 20)
        );
    }

    #[test]
    fn speckle_moves_between_frames() {
        let spec = SceneSpec {
            patches: vec![Patch {
                row: 60,
                col: 60,
                size: 11,
                texture: Harmonic::new(0.4, 0.4, 10.0, 0.0),
                level: 0.0,
            }],
            ..Default::default()
        };
        let seq = sequence(
            &spec,
            3,
            &SpeckleSpec {
                count: 4,
                size: 3,
                margin: 10,
                history: 2,
            },
        )
        .unwrap();
        assert_eq!(seq.frames.len(), 3);
        assert!(seq.speckle.iter().all(|s| s.len() == 4));
        assert_ne!(seq.speckle[0], seq.speckle[1]);
    }

    #[test]
    fn speckle_avoids_recent_frames() {
        let spec = SceneSpec {
            rows: 96,
            cols: 96,
            ..Default::default()
        };
        let sp = SpeckleSpec {
            count: 2,
            size: 5,
            margin: 6,
            history: 2,
        };
        let seq = sequence(&spec, 12, &sp).unwrap();
        let apart =
            |a: &Patch, b: &Patch| a.row.abs_diff(b.row) >= 11 || a.col.abs_diff(b.col) >= 11;
        for t in 1..12 {
            for back in 1..=2.min(t) {
                for a in &seq.speckle[t] {
                    assert!(
                        seq.speckle[t - back].iter().all(|b| apart(a, b)),
                        "frame {t}"
                    );
                }
            }
        }
    }
}
