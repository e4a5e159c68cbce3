//! Dataset directory layout and synthetic data generation.
//!
//! Layout: `root/<class_name>/<video_id>.vten`, one STEN tensor per video
//! with dims `[T, 3, H, W]` and values in `[0, 1]`. Classes are the sorted
//! subdirectory names; the label of a video is its class's index.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor};
use crate::rng::Rng;
use crate::video::{generate_synthetic, SyntheticSpec, Video};

#[derive(Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub videos: Vec<Video<f32>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.videos.iter().map(|v| v.label).collect()
    }
}

/// Load every video in the layout into memory (datasets here are desk scale).
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::Input(format!(
            "dataset root {} is not a directory",
            root.display()
        )));
    }
    let mut classes: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.contains(',') {
                return Err(Error::Input(format!(
                    "class directory name '{name}' must not contain commas"
                )));
            }
            classes.push(name);
        }
    }
    classes.sort();
    if classes.is_empty() {
        return Err(Error::Input(format!(
            "dataset root {} has no class directories",
            root.display()
        )));
    }
    let mut videos = Vec::new();
    for (label, class) in classes.iter().enumerate() {
        let dir = root.join(class);
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "vten").unwrap_or(false))
            .collect();
        files.sort();
        for file in files {
            let frames = read_tensor(&file)?;
            if frames.rank() != 4 || frames.dims()[1] != 3 {
                return Err(Error::Format {
                    path: file.clone(),
                    detail: format!("video tensor must be [T, 3, H, W], got {:?}", frames.dims()),
                });
            }
            if frames.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Format {
                    path: file.clone(),
                    detail: "pixel values must lie in [0, 1]".into(),
                });
            }
            let source = format!(
                "{}/{}",
                class,
                file.file_stem().unwrap_or_default().to_string_lossy()
            );
            videos.push(Video::new(frames, label, source)?);
        }
        if videos.iter().filter(|v| v.label == label).count() == 0 {
            return Err(Error::Input(format!(
                "class directory '{class}' contains no .vten videos"
            )));
        }
    }
    Ok(Dataset {
        root: root.to_path_buf(),
        classes,
        videos,
    })
}

/// Per-channel means over the given video indices, accumulated in f64.
pub fn channel_means(ds: &Dataset, ids: &[usize]) -> [f32; 3] {
    let mut sums = [0.0f64; 3];
    let mut count = 0usize;
    for &id in ids {
        let v = &ds.videos[id];
        let (t_n, h, w) = (v.frame_count(), v.height(), v.width());
        let plane = h * w;
        for t in 0..t_n {
            for c in 0..3 {
                let base = (t * 3 + c) * plane;
                sums[c] += v.frames.data()[base..base + plane]
                    .iter()
                    .map(|&x| x as f64)
                    .sum::<f64>();
            }
        }
        count += t_n * plane;
    }
    if count == 0 {
        return [0.0; 3];
    }
    [
        (sums[0] / count as f64) as f32,
        (sums[1] / count as f64) as f32,
        (sums[2] / count as f64) as f32,
    ]
}

/// Render the synthetic spec to disk in the dataset layout. Writes are
/// byte-identical for identical `(spec, seed)`.
pub fn gen_data(spec: &SyntheticSpec, out_root: &Path, seed: u64) -> Result<usize> {
    spec.validate()?;
    let mut rng = Rng::stream(&[seed, 0x47454e44]); // data-generation stream
    let videos: Vec<Video<f32>> = generate_synthetic(spec, &mut rng)?;
    for class in 0..spec.num_classes {
        let dir = out_root.join(format!("class_{class:02}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut written = 0usize;
    for (i, v) in videos.iter().enumerate() {
        let within = i % spec.videos_per_class;
        let dir = out_root.join(format!("class_{:02}", v.label));
        let path = dir.join(format!("video_{within:03}.vten"));
        write_tensor(&path, &v.frames)?;
        written += 1;
    }
    Ok(written)
}
