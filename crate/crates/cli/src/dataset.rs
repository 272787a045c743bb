//! Paired-dataset ingestion: `root/input/*.png` and `root/target/*.png`
//! matched by filename stem, 8-bit RGB mapped to [0,1].

use std::path::{Path, PathBuf};

use thiserror::Error;

use rganet_tensor::Tensor4;
use rganet_training::PairedSample;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("expected directory {path}")]
    MissingDir { path: PathBuf },

    #[error("pairing error: {stem:?} has no counterpart")]
    Pairing { stem: String },

    #[error("decode error on {path}: {detail}")]
    Decode { path: PathBuf, detail: String },

    #[error("encode error on {path}: {detail}")]
    Encode { path: PathBuf, detail: String },
}

/// Loads an 8-bit RGB PNG as `(1, 3, h, w)` in [0,1] (v / 255).
pub fn load_png(path: &Path) -> Result<Tensor4<f32>, DataError> {
    let img = image::open(path)
        .map_err(|e| DataError::Decode {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut out = Tensor4::zeros(1, 3, h as usize, w as usize);
    for (x, y, pixel) in img.enumerate_pixels() {
        for c in 0..3 {
            *out.at_mut(0, c, y as usize, x as usize) = pixel.0[c] as f32 / 255.0;
        }
    }
    Ok(out)
}

/// Writes `(1, 3, h, w)` values in [0,1] as an 8-bit RGB PNG.
pub fn save_png(path: &Path, img: &Tensor4<f32>) -> Result<(), DataError> {
    let (_, c, h, w) = img.dims();
    assert_eq!(c, 3, "save_png expects an RGB tensor");
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                (img.at(0, 0, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (img.at(0, 1, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
                (img.at(0, 2, y, x).clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path).map_err(|e| DataError::Encode {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// PNG files of a directory as (stem, path), sorted lexicographically.
pub fn list_pngs(dir: &Path) -> Result<Vec<(String, PathBuf)>, DataError> {
    if !dir.is_dir() {
        return Err(DataError::MissingDir {
            path: dir.to_path_buf(),
        });
    }
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| DataError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.extension().map(|e| e.eq_ignore_ascii_case("png")) == Some(true) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Pairs two directories by stem; an entry present on only one side is a
/// pairing error naming the stem.
pub fn pair_dirs(
    left: &Path,
    right: &Path,
) -> Result<Vec<(String, PathBuf, PathBuf)>, DataError> {
    let l = list_pngs(left)?;
    let r = list_pngs(right)?;
    let mut li = l.iter().peekable();
    let mut ri = r.iter().peekable();
    let mut out = Vec::new();
    loop {
        match (li.peek(), ri.peek()) {
            (None, None) => break,
            (Some((s, _)), None) | (None, Some((s, _))) => {
                return Err(DataError::Pairing { stem: s.clone() })
            }
            (Some((ls, lp)), Some((rs, rp))) => match ls.cmp(rs) {
                std::cmp::Ordering::Equal => {
                    out.push((ls.clone(), lp.clone(), rp.clone()));
                    li.next();
                    ri.next();
                }
                std::cmp::Ordering::Less => {
                    return Err(DataError::Pairing { stem: ls.clone() })
                }
                std::cmp::Ordering::Greater => {
                    return Err(DataError::Pairing { stem: rs.clone() })
                }
            },
        }
    }
    Ok(out)
}

/// Loads `root/input` + `root/target` into ordered samples.
pub fn load_dataset(root: &Path) -> Result<Vec<PairedSample>, DataError> {
    let pairs = pair_dirs(&root.join("input"), &root.join("target"))?;
    let mut out = Vec::with_capacity(pairs.len());
    for (stem, input_path, target_path) in pairs {
        out.push(PairedSample {
            input: load_png(&input_path)?,
            target: load_png(&target_path)?,
            id: stem,
        });
    }
    Ok(out)
}
