//! Random partition of users into platforms, with per-target holdout sets.

use rand::seq::{index, SliceRandom};

use super::data::QosMatrix;
use crate::error::{PdsrError, Result};
use crate::federation::PlatformDataset;
use crate::rng::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Observed entries withheld per target user (`S`).
    pub holdout: usize,
    /// Users per platform; platform `r` gets id `r + 1`.
    pub platform_users: Vec<usize>,
    /// Users with fewer observed entries are dropped before partitioning.
    pub min_records: usize,
    /// Target users drawn on each platform.
    pub targets: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.holdout == 0 {
            return Err(PdsrError::invalid("holdout size must be at least 1"));
        }
        if self.min_records <= self.holdout {
            return Err(PdsrError::invalid(format!(
                "min_records ({}) must exceed the holdout size ({})",
                self.min_records, self.holdout
            )));
        }
        if self.platform_users.is_empty() || self.platform_users.contains(&0) {
            return Err(PdsrError::invalid("every platform needs at least one user"));
        }
        if self.targets == 0 {
            return Err(PdsrError::invalid("at least one target user per platform is required"));
        }
        Ok(())
    }
}

/// A target user and the entries withheld from training.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetUser {
    pub user_id: u64,
    pub local: usize,
    /// `(service, ground truth)`, ascending service id.
    pub holdout: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlatformSplit {
    /// Observations with every holdout entry set to 0.
    pub training: PlatformDataset,
    /// Full observations, used only for scoring.
    pub truth: PlatformDataset,
    /// Ascending user id.
    pub targets: Vec<TargetUser>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub platforms: Vec<PlatformSplit>,
}

impl Split {
    pub fn training(&self) -> Vec<PlatformDataset> {
        self.platforms.iter().map(|p| p.training.clone()).collect()
    }

    pub fn platform(&self, platform_id: u32) -> Option<&PlatformSplit> {
        self.platforms.iter().find(|p| p.truth.platform_id() == platform_id)
    }

    /// Platform holding `user_id`, with its local index.
    pub fn locate(&self, user_id: u64) -> Option<(&PlatformSplit, usize)> {
        self.platforms
            .iter()
            .find_map(|p| p.truth.local_index(user_id).map(|local| (p, local)))
    }
}

pub fn split_platforms(data: &QosMatrix, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut retained: Vec<usize> = (0..data.n_users())
        .filter(|&u| data.observed_count(u) >= spec.min_records)
        .collect();
    let wanted: usize = spec.platform_users.iter().sum();
    if wanted != retained.len() {
        return Err(PdsrError::invalid(format!(
            "platform user counts sum to {wanted}, but {} users have at least {} records",
            retained.len(),
            spec.min_records
        )));
    }
    let mut rng = rng_from_seed(derive_seed(spec.seed, &[stream::SPLIT]));
    retained.shuffle(&mut rng);

    let m = data.n_items;
    let mut platforms = Vec::with_capacity(spec.platform_users.len());
    let mut start = 0;
    for (r, &count) in spec.platform_users.iter().enumerate() {
        let mut rows = retained[start..start + count].to_vec();
        start += count;
        rows.sort_unstable();
        let pid = r as u32 + 1;

        let n = rows.len();
        let mut qos = vec![0.0; m * n];
        for (local, &row) in rows.iter().enumerate() {
            for (i, &v) in data.row(row).iter().enumerate() {
                qos[i * n + local] = v;
            }
        }
        let user_ids: Vec<u64> = rows.iter().map(|&row| data.user_ids[row]).collect();
        let truth = PlatformDataset::new(pid, user_ids, m, qos)?;

        if spec.targets > n {
            return Err(PdsrError::invalid(format!(
                "platform {pid} has {n} users, cannot pick {} targets",
                spec.targets
            )));
        }
        let mut chosen = index::sample(&mut rng, n, spec.targets).into_vec();
        chosen.sort_unstable();
        let mut training = truth.clone();
        let mut targets = Vec::with_capacity(chosen.len());
        for local in chosen {
            let observed: Vec<usize> = truth.observed_services(local).collect();
            let mut picks = index::sample(&mut rng, observed.len(), spec.holdout).into_vec();
            picks.sort_unstable();
            let holdout: Vec<(u32, f64)> = picks
                .into_iter()
                .map(|p| (observed[p] as u32, truth.value(observed[p], local)))
                .collect();
            for &(s, _) in &holdout {
                training.set_value(s as usize, local, 0.0);
            }
            targets.push(TargetUser {
                user_id: truth.user_ids()[local],
                local,
                holdout,
            });
        }
        platforms.push(PlatformSplit { training, truth, targets });
    }
    Ok(Split { platforms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn matrix(users: usize, items: usize, density: f64, seed: u64) -> QosMatrix {
        let mut rng = rng_from_seed(seed);
        QosMatrix {
            user_ids: (100..100 + users as u64).collect(),
            n_items: items,
            values: (0..users * items)
                .map(|_| if rng.random_bool(density) { rng.random_range(0.01..1.0) } else { 0.0 })
                .collect(),
        }
    }

    fn spec(counts: Vec<usize>, seed: u64) -> SplitSpec {
        SplitSpec {
            holdout: 3,
            platform_users: counts,
            min_records: 5,
            targets: 4,
            seed,
        }
    }

    #[test]
    fn deterministic_and_sized() {
        let data = matrix(30, 40, 0.8, 1);
        let a = split_platforms(&data, &spec(vec![12, 18], 9)).unwrap();
        let b = split_platforms(&data, &spec(vec![12, 18], 9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.platforms[0].truth.n_users(), 12);
        assert_eq!(a.platforms[1].truth.n_users(), 18);
        assert_eq!(a.platforms[1].truth.platform_id(), 2);
        let c = split_platforms(&data, &spec(vec![12, 18], 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn partition_covers_every_user_once() {
        let data = matrix(30, 40, 0.8, 2);
        let s = split_platforms(&data, &spec(vec![7, 23], 3)).unwrap();
        let mut all: Vec<u64> = s.platforms.iter().flat_map(|p| p.truth.user_ids().to_vec()).collect();
        all.sort_unstable();
        assert_eq!(all, data.user_ids);
    }

    #[test]
    fn holdouts_are_hidden_from_training() {
        let data = matrix(30, 40, 0.8, 4);
        let s = split_platforms(&data, &spec(vec![15, 15], 5)).unwrap();
        for p in &s.platforms {
            assert_eq!(p.targets.len(), 4);
            for t in &p.targets {
                assert_eq!(t.holdout.len(), 3);
                for &(svc, truth) in &t.holdout {
                    assert_ne!(truth, 0.0);
                    assert_eq!(p.truth.value(svc as usize, t.local), truth);
                    assert_eq!(p.training.value(svc as usize, t.local), 0.0);
                }
            }
            let hidden: usize = p.targets.iter().map(|t| t.holdout.len()).sum();
            let diff = (0..p.truth.n_services())
                .flat_map(|i| (0..p.truth.n_users()).map(move |j| (i, j)))
                .filter(|&(i, j)| p.truth.value(i, j) != p.training.value(i, j))
                .count();
            assert_eq!(diff, hidden);
        }
    }

    #[test]
    fn min_records_filter_and_count_mismatch() {
        let mut data = matrix(10, 20, 1.0, 6);
        for v in &mut data.values[..20] {
            *v = 0.0;
        }
        assert!(split_platforms(&data, &spec(vec![5, 5], 1)).is_err());
        let s = split_platforms(&data, &spec(vec![4, 5], 1)).unwrap();
        assert!(s.locate(100).is_none());
        assert!(s.locate(101).is_some());
    }

    #[test]
    fn invalid_specs() {
        let data = matrix(10, 20, 1.0, 7);
        let mut bad = spec(vec![5, 5], 1);
        bad.holdout = 0;
        assert!(split_platforms(&data, &bad).is_err());
        let mut bad = spec(vec![5, 5], 1);
        bad.min_records = 3;
        assert!(split_platforms(&data, &bad).is_err());
        let mut bad = spec(vec![5, 5], 1);
        bad.targets = 6;
        assert!(split_platforms(&data, &bad).is_err());
    }
}
