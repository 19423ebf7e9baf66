//! Applying one profile to many frames.
//!
//! Frames are independent: each output depends only on its input and the
//! profile, so results do not depend on thread count or scheduling.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imgio::{encode_image, load_image, write_atomic, ImageFormat, ImageRGB};
use crate::profile::{apply_profile, ApplyMode, TransferProfile};

pub fn apply_profile_batch(frames: &[ImageRGB], prof: &TransferProfile, mode: ApplyMode) -> Vec<ImageRGB> {
    frames.par_iter().map(|f| apply_profile(f, prof, mode)).collect()
}

/// Image files (`.ppm`/`.png`) directly inside `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && ImageFormat::from_path(&path).is_some() {
            frames.push(path);
        }
    }
    frames.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(frames)
}

#[derive(Debug, Clone)]
pub struct FrameReport {
    pub input: PathBuf,
    pub output: PathBuf,
    pub elapsed: Duration,
}

/// Loads, transforms and atomically writes one frame.
pub fn apply_file(prof: &TransferProfile, input: &Path, output: &Path, mode: ApplyMode) -> Result<FrameReport> {
    let start = Instant::now();
    let format = ImageFormat::from_path(output).ok_or_else(|| Error::Format {
        path: output.to_path_buf(),
        detail: "output extension must be .ppm or .png".into(),
    })?;
    let img = load_image(input)?;
    let out = apply_profile(&img, prof, mode);
    write_atomic(output, &encode_image(&out, format)?)?;
    Ok(FrameReport {
        input: input.to_path_buf(),
        output: output.to_path_buf(),
        elapsed: start.elapsed(),
    })
}

/// Applies `prof` to every frame in `input_dir`, writing same-named files
/// into `output_dir`. `threads = None` uses rayon's global pool.
pub fn apply_directory(
    prof: &TransferProfile,
    input_dir: &Path,
    output_dir: &Path,
    mode: ApplyMode,
    threads: Option<usize>,
) -> Result<Vec<FrameReport>> {
    let frames = list_frames(input_dir)?;
    if frames.is_empty() {
        return Err(Error::Degenerate(format!(
            "{}: no .ppm or .png frames found",
            input_dir.display()
        )));
    }
    fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let run = || -> Vec<Result<FrameReport>> {
        frames
            .par_iter()
            .map(|input| {
                let name = input.file_name().expect("listed frames have file names");
                apply_file(prof, input, &output_dir.join(name), mode)
            })
            .collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgio::save_image;
    use crate::oracle::natural_scene;

    #[test]
    fn lists_only_images_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.png", "a.ppm", "c.txt", "d.PPM"] {
            fs::write(dir.path().join(name), b"x").unwrap();
        }
        fs::create_dir(dir.path().join("sub.ppm")).unwrap();
        let names: Vec<_> = list_frames(dir.path())
            .unwrap()
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, ["a.ppm", "b.png", "d.PPM"]);
    }

    #[test]
    fn empty_directory_is_degenerate() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let err =
            apply_directory(&TransferProfile::identity(), dir.path(), &out, ApplyMode::Shading, None).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn batch_matches_single_application() {
        let frames: Vec<_> = (0..4).map(|s| natural_scene(12, 10, s)).collect();
        let prof = TransferProfile::identity();
        let out = apply_profile_batch(&frames, &prof, ApplyMode::Shading);
        for (f, o) in frames.iter().zip(&out) {
            assert_eq!(o, &apply_profile(f, &prof, ApplyMode::Shading));
        }
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in");
        fs::create_dir(&input).unwrap();
        for i in 0..3 {
            save_image(&natural_scene(9, 7, i), input.join(format!("f{i}.ppm"))).unwrap();
        }
        let out = dir.path().join("out");
        let reports = apply_directory(&TransferProfile::identity(), &input, &out, ApplyMode::Shading, Some(2)).unwrap();
        assert_eq!(reports.len(), 3);
        for i in 0..3 {
            let name = format!("f{i}.ppm");
            assert_eq!(fs::read(input.join(&name)).unwrap(), fs::read(out.join(&name)).unwrap());
        }
    }
}
