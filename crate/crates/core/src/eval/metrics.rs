//! Prediction error and recommendation quality metrics.

use serde::Serialize;

use crate::error::{PdsrError, Result};
use crate::federation::PlatformDataset;
use crate::recommend::jaccard_dissimilarity;

fn check_pairs(preds: &[f64], truths: &[f64]) -> Result<()> {
    if preds.is_empty() {
        return Err(PdsrError::invalid("no predictions to score"));
    }
    if preds.len() != truths.len() {
        return Err(PdsrError::invalid(format!(
            "{} predictions but {} ground-truth values",
            preds.len(),
            truths.len()
        )));
    }
    Ok(())
}

pub fn mae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_pairs(preds, truths)?;
    Ok(preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

pub fn rmse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_pairs(preds, truths)?;
    Ok((preds.iter().zip(truths).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / preds.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AqosSummary {
    /// Mean ground-truth value over all recommended entries, unknown counted as 0.
    pub aqos: f64,
    /// Fraction of recommended entries with a known ground truth.
    pub coverage: f64,
}

/// `lists[u]` holds the services recommended to local user `users[u]`.
pub fn aqos(lists: &[Vec<u32>], users: &[usize], truth: &PlatformDataset) -> Result<AqosSummary> {
    if lists.len() != users.len() {
        return Err(PdsrError::invalid("one recommendation list per user is required"));
    }
    let mut total = 0.0;
    let mut known = 0usize;
    let mut count = 0usize;
    for (list, &user) in lists.iter().zip(users) {
        for &s in list {
            let v = truth.value(s as usize, user);
            total += v;
            known += usize::from(v != 0.0);
            count += 1;
        }
    }
    if count == 0 {
        return Err(PdsrError::invalid("no recommended entries to score"));
    }
    Ok(AqosSummary {
        aqos: total / count as f64,
        coverage: known as f64 / count as f64,
    })
}

/// Mean over lists of the ordered-pair Jaccard dissimilarity of the
/// recommended services' ground-truth vectors, divided by `K(K - 1)`.
pub fn ild(lists: &[Vec<u32>], truth: &PlatformDataset) -> Result<f64> {
    if lists.is_empty() {
        return Err(PdsrError::invalid("no recommendation lists"));
    }
    let mut sum = 0.0;
    for list in lists {
        let k = list.len();
        if k <= 1 {
            return Err(PdsrError::invalid(format!("ILD needs lists of at least 2 services, got {k}")));
        }
        let mut pairs = 0.0;
        for (n, &a) in list.iter().enumerate() {
            for &b in &list[n + 1..] {
                pairs += 2.0 * jaccard_dissimilarity(truth.service_vector(a as usize), truth.service_vector(b as usize))?;
            }
        }
        sum += pairs / (k * (k - 1)) as f64;
    }
    Ok(sum / lists.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_metrics() {
        assert!((mae(&[0.5], &[0.7]).unwrap() - 0.2).abs() < 1e-15);
        assert!((rmse(&[0.5], &[0.7]).unwrap() - 0.2).abs() < 1e-15);
        let (p, t) = ([0.1, 0.3], [0.0, 0.0]);
        assert!((mae(&p, &t).unwrap() - 0.2).abs() < 1e-15);
        assert!((rmse(&p, &t).unwrap() - 0.05f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae(&[0.4, 0.9], &[0.4, 0.9]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.4, 0.9], &[0.4, 0.9]).unwrap(), 0.0);
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn aqos_mean_and_coverage() {
        // service 0: users (0.8, 0.6); service 1: users (0, 0.2)
        let truth = PlatformDataset::from_rows(1, vec![5, 6], &[vec![0.8, 0.6], vec![0.0, 0.2]]).unwrap();
        let s = aqos(&[vec![0], vec![0]], &[0, 1], &truth).unwrap();
        assert!((s.aqos - 0.7).abs() < 1e-15);
        assert_eq!(s.coverage, 1.0);
        let s = aqos(&[vec![0, 1]], &[0], &truth).unwrap();
        assert!((s.aqos - 0.4).abs() < 1e-15);
        assert_eq!(s.coverage, 0.5);
        assert!(aqos(&[vec![]], &[0], &truth).is_err());
    }

    #[test]
    fn ild_cases() {
        // supports {0,1,2,3} and {0,1,4}: J = 1 - 2/5 = 0.6
        let rows = vec![
            vec![1.0, 1.0, 1.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0, 0.0, 1.0],
            vec![0.3, 0.2, 0.7, 0.1, 0.0],
        ];
        let truth = PlatformDataset::from_rows(1, (0..5).collect(), &rows).unwrap();
        assert!((ild(&[vec![0, 1]], &truth).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(ild(&[vec![0, 2]], &truth).unwrap(), 0.0);
        assert!(ild(&[vec![0]], &truth).is_err());
        let v = ild(&[vec![0, 1, 2]], &truth).unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}
