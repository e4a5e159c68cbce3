//! Discriminability diagnostics: angles between features and their class
//! weights (intra) and between class weight rows (inter).

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::ops::clamp_unit;

use super::angular::{angles, ClassifierWeights, FeatureBatch};

#[derive(Debug, Clone)]
pub struct AngleStats<F: Scalar> {
    pub intra_mean: F,
    pub intra_max: F,
    /// Absent when there are fewer than two classes.
    pub inter_min: Option<F>,
    pub inter_mean: Option<F>,
    pub per_class: Vec<usize>,
}

/// Intra stats aggregate `angle(x_i, w_{y_i})`; inter stats are pairwise
/// angles among the unit-normalized weight rows.
pub fn angle_stats<F: Scalar>(
    batch: &FeatureBatch<F>,
    w: &ClassifierWeights<F>,
) -> Result<AngleStats<F>> {
    let theta = angles(batch, w)?;
    let c = w.classes();
    let mut per_class = vec![0usize; c];
    let mut intra_sum = 0.0f64;
    let mut intra_max = 0.0f64;
    for (i, &y) in batch.labels.iter().enumerate() {
        per_class[y] += 1;
        let t = theta.at(&[i, y]).as_f64();
        intra_sum += t;
        if t > intra_max {
            intra_max = t;
        }
    }

    let (inter_min, inter_mean) = if c >= 2 {
        let (unit, _) = w.normalized()?;
        let d = w.dim();
        let mut min = f64::INFINITY;
        let mut sum = 0.0f64;
        let mut count = 0usize;
        for a in 0..c {
            for b in a + 1..c {
                let dot: f64 = unit.data()[a * d..(a + 1) * d]
                    .iter()
                    .zip(&unit.data()[b * d..(b + 1) * d])
                    .map(|(x, y)| x.as_f64() * y.as_f64())
                    .sum();
                let t = clamp_unit(dot).acos();
                if t < min {
                    min = t;
                }
                sum += t;
                count += 1;
            }
        }
        (
            Some(F::of_f64(min)),
            Some(F::of_f64(sum / count as f64)),
        )
    } else {
        (None, None)
    };

    Ok(AngleStats {
        intra_mean: F::of_f64(intra_sum / batch.len() as f64),
        intra_max: F::of_f64(intra_max),
        inter_min,
        inter_mean,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::Tensor;
    use std::f64::consts::PI;

    #[test]
    fn features_on_their_weights_have_zero_intra() {
        let w = ClassifierWeights::new(
            Tensor::new(vec![2, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap(),
        )
        .unwrap();
        let batch = FeatureBatch::new(
            Tensor::new(vec![2, 2], vec![3.0, 0.0, 0.0, 0.25]).unwrap(),
            vec![0, 1],
        )
        .unwrap();
        let s = angle_stats(&batch, &w).unwrap();
        assert!(s.intra_mean.abs() < 1e-12);
        assert!(s.intra_max.abs() < 1e-12);
        assert_eq!(s.per_class, vec![1, 1]);
        assert!((s.inter_min.unwrap() - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_has_no_inter_stats() {
        let w =
            ClassifierWeights::new(Tensor::new(vec![1, 2], vec![1.0f64, 0.0]).unwrap()).unwrap();
        let batch = FeatureBatch::new(
            Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap(),
            vec![0],
        )
        .unwrap();
        let s = angle_stats(&batch, &w).unwrap();
        assert!(s.inter_min.is_none() && s.inter_mean.is_none());
    }

    #[test]
    fn matches_brute_force_pairwise_loop() {
        let mut rng = Rng::new(6);
        let x: Tensor<f64> = rng.normal(&[12, 7], 0.0, 1.0).unwrap();
        let wt: Tensor<f64> = rng.normal(&[5, 7], 0.0, 1.0).unwrap();
        let labels: Vec<usize> = (0..12).map(|i| i % 5).collect();
        let batch = FeatureBatch::new(x.clone(), labels.clone()).unwrap();
        let w = ClassifierWeights::new(wt.clone()).unwrap();
        let s = angle_stats(&batch, &w).unwrap();

        // independent double-loop oracle in plain f64
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let angle = |a: &[f64], b: &[f64]| -> f64 {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            (dot / (norm(a) * norm(b))).clamp(-1.0, 1.0).acos()
        };
        let d = 7;
        let mut intra = Vec::new();
        for i in 0..12 {
            let xi: Vec<f64> = x.data()[i * d..(i + 1) * d].to_vec();
            let wy: Vec<f64> = wt.data()[labels[i] * d..(labels[i] + 1) * d].to_vec();
            intra.push(angle(&xi, &wy));
        }
        let want_mean = intra.iter().sum::<f64>() / intra.len() as f64;
        let want_max = intra.iter().cloned().fold(0.0, f64::max);
        assert!((s.intra_mean - want_mean).abs() < 1e-10);
        assert!((s.intra_max - want_max).abs() < 1e-10);

        let mut want_min = f64::INFINITY;
        for a in 0..5 {
            for b in a + 1..5 {
                let wa: Vec<f64> = wt.data()[a * d..(a + 1) * d].to_vec();
                let wb: Vec<f64> = wt.data()[b * d..(b + 1) * d].to_vec();
                want_min = want_min.min(angle(&wa, &wb));
            }
        }
        assert!((s.inter_min.unwrap() - want_min).abs() < 1e-10);
        // all angles live in [0, pi]
        for v in [s.intra_mean, s.intra_max, s.inter_min.unwrap(), s.inter_mean.unwrap()] {
            assert!((0.0..=PI).contains(&v));
        }
    }
}
