//! Embedding extraction for downstream discriminability comparisons.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::write_tensor;
use crate::loss::AngleStats;
use crate::tensor::Tensor;

use super::train::{evaluate_with_embeddings, SplitSel};

#[derive(Debug)]
pub struct EmbeddingsOut {
    pub embeddings_path: PathBuf,
    pub labels_path: PathBuf,
    pub stats_path: PathBuf,
    pub stats: AngleStats<f32>,
    pub count: usize,
}

/// Run the eval pipeline over a whole dataset (or one split) and write the
/// per-video embeddings `[N, D]`, their labels `[N]` and a summary of the
/// angle statistics.
pub fn extract_embeddings(
    ckpt_dir: &Path,
    data_root: Option<&Path>,
    split: SplitSel,
    out_dir: &Path,
) -> Result<EmbeddingsOut> {
    let ((embeddings, labels), report) =
        evaluate_with_embeddings(ckpt_dir, data_root, split, None)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let embeddings_path = out_dir.join("embeddings.sten");
    write_tensor(&embeddings_path, &embeddings)?;

    let labels_path = out_dir.join("labels.sten");
    let label_tensor = Tensor::new(
        vec![labels.len()],
        labels.iter().map(|&l| l as f32).collect(),
    )?;
    write_tensor(&labels_path, &label_tensor)?;

    let stats = report.stats;
    let stats_path = out_dir.join("angle_stats.txt");
    let mut text = String::new();
    text.push_str(&format!("count = {}\n", report.count));
    text.push_str(&format!("accuracy = {:?}\n", report.accuracy));
    text.push_str(&format!("intra_mean = {:?}\n", stats.intra_mean));
    text.push_str(&format!("intra_max = {:?}\n", stats.intra_max));
    if let (Some(imin), Some(imean)) = (stats.inter_min, stats.inter_mean) {
        text.push_str(&format!("inter_min = {imin:?}\n"));
        text.push_str(&format!("inter_mean = {imean:?}\n"));
    }
    std::fs::write(&stats_path, text).map_err(|e| Error::io(&stats_path, e))?;

    Ok(EmbeddingsOut {
        embeddings_path,
        labels_path,
        stats_path,
        stats,
        count: report.count,
    })
}
