//! Files written by a run: mask image, box list, report, optional overlay.

use std::path::{Path, PathBuf};

use irf_core::irf::DetectionMask;
use irf_core::{ImagePlane, ImageStack};

use crate::documents::{BoxRecord, ObjectRecord, RunReport};
use crate::error::{Result, ToolkitError};
use crate::pnm::write_image;

fn extension(image: &ImageStack) -> &'static str {
    if image.len() == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

/// Mask image with original values at flagged pixels. Flagged pixels that
/// would quantize to 0 are stored as 1 so that nonzero still means flagged.
pub fn mask_image(mask: &DetectionMask) -> ImageStack {
    let planes = mask
        .v
        .channels()
        .iter()
        .map(|p| {
            ImagePlane::from_fn(p.rows(), p.cols(), |i, k| {
                if mask.flags.get(i, k) {
                    p.get(i, k).round_ties_even().max(1.0)
                } else {
                    0.0
                }
            })
        })
        .collect();
    ImageStack::new(planes).expect("mask planes share a shape")
}

/// Copy of `image` with a one-pixel outline (white, or red in color) around
/// every box.
pub fn overlay(image: &ImageStack, boxes: &[BoxRecord]) -> ImageStack {
    let color: &[f64] = if image.len() == 3 {
        &[255.0, 0.0, 0.0]
    } else {
        &[255.0]
    };
    let planes = image
        .channels()
        .iter()
        .enumerate()
        .map(|(c, p)| {
            let mut p = p.clone();
            let v = color.get(c).copied().unwrap_or(255.0);
            for b in boxes {
                for k in b.y0..=b.y1 {
                    p.set(b.x0, k, v);
                    p.set(b.x1, k, v);
                }
                for i in b.x0..=b.x1 {
                    p.set(i, b.y0, v);
                    p.set(i, b.y1, v);
                }
            }
            p
        })
        .collect();
    ImageStack::new(planes).expect("same shape")
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::write(&path, bytes).map_err(|source| ToolkitError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn write_img(path: PathBuf, image: &ImageStack) -> Result<PathBuf> {
    write_image(&path, image).map_err(|source| ToolkitError::Write {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn boxes_json(objects: &[ObjectRecord]) -> String {
    let mut s = serde_json::to_string_pretty(objects).expect("boxes serialize");
    s.push('\n');
    s
}

/// Write `<stem>mask.pgm|ppm`, `<stem>boxes.json`, `<stem>report.json` and,
/// with `original`, `<stem>overlay.pgm|ppm` outlining confirmed objects.
/// Returns the written paths.
pub fn write_outputs(
    dir: &Path,
    stem: &str,
    mask: &DetectionMask,
    objects: &[ObjectRecord],
    report: Option<&RunReport>,
    original: Option<&ImageStack>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| ToolkitError::Write {
        path: dir.to_path_buf(),
        source,
    })?;
    let m = mask_image(mask);
    let mut out = vec![write_img(
        dir.join(format!("{stem}mask.{}", extension(&m))),
        &m,
    )?];
    out.push(write(
        dir.join(format!("{stem}boxes.json")),
        boxes_json(objects).as_bytes(),
    )?);
    if let Some(r) = report {
        out.push(write(
            dir.join(format!("{stem}report.json")),
            r.to_json().as_bytes(),
        )?);
    }
    if let Some(img) = original {
        let boxes: Vec<BoxRecord> = objects
            .iter()
            .filter(|o| o.confirmed)
            .map(|o| o.bbox)
            .collect();
        let ov = overlay(img, &boxes);
        out.push(write_img(
            dir.join(format!("{stem}overlay.{}", extension(&ov))),
            &ov,
        )?);
    }
    Ok(out)
}
