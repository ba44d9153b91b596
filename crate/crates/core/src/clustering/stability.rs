//! Clustering stability test.
//!
//! Users are split into `M` disjoint training sets and one disjoint test set.
//! Each training set is mixed with the test set and labelled; the agreement
//! of every pair of labelings on the shared test users, measured by ARI, is
//! the stability score. Repetitions redraw the partition and are summarized
//! by median and median absolute deviation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ari::adjusted_rand_index_raw;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    /// Number of disjoint training sets, `M`.
    pub training_sets: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub clusters: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            training_sets: 5,
            train_size: 300,
            test_size: 300,
            clusters: 6,
            repetitions: 10,
            seed: 0,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.training_sets < 2 {
            return Err(Error::Config("stability test needs at least two training sets".into()));
        }
        if self.train_size == 0 || self.test_size == 0 || self.clusters == 0 || self.repetitions == 0 {
            return Err(Error::Config(
                "set sizes, cluster count and repetitions must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn users_needed(&self) -> usize {
        self.training_sets * self.train_size + self.test_size
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub training: Vec<Vec<String>>,
    pub test: Vec<String>,
}

/// Draws `M` training sets and one test set, pairwise disjoint, uniformly
/// from `users`.
pub fn partition_for_stability(users: &[String], config: &StabilityConfig, seed: u64) -> Result<Partition> {
    config.validate()?;
    let needed = config.users_needed();
    if needed > users.len() {
        return Err(Error::InsufficientUsers {
            needed,
            available: users.len(),
        });
    }
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |range: std::ops::Range<usize>| order[range].iter().map(|&i| users[i].clone()).collect::<Vec<_>>();
    let training = (0..config.training_sets)
        .map(|m| take(m * config.train_size..(m + 1) * config.train_size))
        .collect();
    let start = config.training_sets * config.train_size;
    Ok(Partition {
        training,
        test: take(start..start + config.test_size),
    })
}

/// One labelling job: training set `index` of repetition `repetition`, mixed
/// with the shared test users.
#[derive(Debug, Clone, Copy)]
pub struct MixedSet<'a> {
    pub repetition: usize,
    pub index: usize,
    pub training: &'a [String],
    pub test: &'a [String],
}

impl MixedSet<'_> {
    /// Training users followed by test users.
    pub fn users(&self) -> Vec<String> {
        self.training.iter().chain(self.test).cloned().collect()
    }
}

/// Anything that clusters a mixed set and reports labels for its test users.
pub trait Labeler: Sync {
    fn name(&self) -> String;

    /// Whether every mixed set should reuse the first training set.
    fn replicates_training_set(&self) -> bool {
        false
    }

    /// Called once per repetition before labelling; the returned state is
    /// shared by every mixed set of that repetition.
    type Shared: Sync + Send;
    fn prepare(&self, repetition: usize) -> Result<Self::Shared>;

    /// Labels of `set.test`, in order.
    fn label(&self, shared: &Self::Shared, set: &MixedSet) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseAri {
    pub i: usize,
    pub j: usize,
    pub ari: f64,
}

/// Stability of one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub repetition: usize,
    pub partition_seed: u64,
    pub pairwise_ari: Vec<PairwiseAri>,
    pub mean_ari: f64,
    pub median_ari: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedMad {
    pub med: f64,
    pub mad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub mean: MedMad,
    pub median: MedMad,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodStability {
    pub method: String,
    pub runs: Vec<StabilityReport>,
    pub summary: StabilitySummary,
    /// `labels[repetition][mixed set]` over the repetition's test users.
    pub labels: Vec<Vec<Vec<usize>>>,
    /// Test users of every repetition.
    pub test_users: Vec<Vec<String>>,
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn med_mad(values: &[f64]) -> MedMad {
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|x| (x - med).abs()).collect();
    MedMad { med, mad: median(&dev) }
}

/// MED and MAD across runs of both the mean and the median pairwise ARI.
pub fn summarize_stability(runs: &[StabilityReport]) -> Result<StabilitySummary> {
    if runs.is_empty() {
        return Err(Error::Empty("no stability runs to summarize"));
    }
    let means: Vec<f64> = runs.iter().map(|r| r.mean_ari).collect();
    let medians: Vec<f64> = runs.iter().map(|r| r.median_ari).collect();
    Ok(StabilitySummary {
        mean: med_mad(&means),
        median: med_mad(&medians),
    })
}

fn score(repetition: usize, partition_seed: u64, labels: &[Vec<usize>]) -> StabilityReport {
    let mut pairwise = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            pairwise.push(PairwiseAri {
                i,
                j,
                ari: adjusted_rand_index_raw(&labels[i], &labels[j]),
            });
        }
    }
    let values: Vec<f64> = pairwise.iter().map(|p| p.ari).collect();
    StabilityReport {
        repetition,
        partition_seed,
        mean_ari: values.iter().sum::<f64>() / values.len() as f64,
        median_ari: median(&values),
        pairwise_ari: pairwise,
    }
}

/// Runs the stability protocol for every labeler over `users`.
///
/// Partitions are shared by all labelers within a repetition, so methods are
/// compared on identical splits. Labelling jobs run through `exec`; results
/// do not depend on the execution mode.
pub fn stability_test<L: Labeler>(
    users: &[String],
    config: &StabilityConfig,
    labelers: &[L],
    exec: Execution,
) -> Result<Vec<MethodStability>> {
    config.validate()?;
    let reps = config.repetitions;
    let m = config.training_sets;
    let partition_seeds: Vec<u64> = (0..reps)
        .map(|r| seed::derive_indexed(config.seed, "partition", r as u64))
        .collect();
    let partitions = partition_seeds
        .iter()
        .map(|&s| partition_for_stability(users, config, s))
        .collect::<Result<Vec<_>>>()?;

    let shared: Vec<Vec<L::Shared>> = labelers
        .iter()
        .map(|l| exec.try_map_indices(reps, |r| l.prepare(r)))
        .collect::<Result<_>>()?;

    // one job per (labeler, repetition, mixed set)
    let jobs = labelers.len() * reps * m;
    let labels = exec.try_map_indices(jobs, |job| {
        let (l, rest) = (job / (reps * m), job % (reps * m));
        let (r, i) = (rest / m, rest % m);
        let labeler = &labelers[l];
        let part = &partitions[r];
        let training = if labeler.replicates_training_set() {
            &part.training[0]
        } else {
            &part.training[i]
        };
        let set = MixedSet {
            repetition: r,
            index: i,
            training,
            test: &part.test,
        };
        let out = labeler.label(&shared[l][r], &set)?;
        if out.len() != part.test.len() {
            return Err(Error::Shape(format!(
                "{} returned {} labels for {} test users",
                labeler.name(),
                out.len(),
                part.test.len()
            )));
        }
        Ok(out)
    })?;

    let mut labels = labels.into_iter();
    labelers
        .iter()
        .map(|labeler| {
            let per_rep: Vec<Vec<Vec<usize>>> = (0..reps).map(|_| labels.by_ref().take(m).collect()).collect();
            let runs: Vec<StabilityReport> = per_rep
                .iter()
                .enumerate()
                .map(|(r, l)| score(r, partition_seeds[r], l))
                .collect();
            Ok(MethodStability {
                method: labeler.name(),
                summary: summarize_stability(&runs)?,
                runs,
                labels: per_rep,
                test_users: partitions.iter().map(|p| p.test.clone()).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use std::collections::HashSet;

    fn users(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i:04}")).collect()
    }

    #[test]
    fn partition_sizes_and_disjointness() {
        let config = StabilityConfig {
            training_sets: 3,
            train_size: 20,
            test_size: 10,
            ..StabilityConfig::default()
        };
        let p = partition_for_stability(&users(100), &config, 4).unwrap();
        let sizes: Vec<usize> = p.training.iter().map(Vec::len).chain([p.test.len()]).collect();
        assert_eq!(sizes, [20, 20, 20, 10]);
        let all: Vec<&String> = p.training.iter().flatten().chain(&p.test).collect();
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), all.len());
        assert_eq!(p, partition_for_stability(&users(100), &config, 4).unwrap());
        assert_ne!(p, partition_for_stability(&users(100), &config, 5).unwrap());
    }

    #[test]
    fn partition_errors() {
        let config = StabilityConfig {
            training_sets: 3,
            train_size: 40,
            test_size: 10,
            ..StabilityConfig::default()
        };
        assert!(matches!(
            partition_for_stability(&users(100), &config, 0),
            Err(Error::InsufficientUsers {
                needed: 130,
                available: 100
            })
        ));
        let one = StabilityConfig {
            training_sets: 1,
            ..config
        };
        assert!(partition_for_stability(&users(1000), &one, 0).is_err());
    }

    #[test]
    fn summary_statistics() {
        let run = |mean: f64, median: f64| StabilityReport {
            repetition: 0,
            partition_seed: 0,
            pairwise_ari: vec![],
            mean_ari: mean,
            median_ari: median,
        };
        let s = summarize_stability(&[run(0.5, 0.1), run(0.7, 0.1), run(0.6, 0.1)]).unwrap();
        assert_relative_eq!(s.mean.med, 0.6);
        assert_relative_eq!(s.mean.mad, 0.1, max_relative = 1e-12);
        assert_eq!(s.median, MedMad { med: 0.1, mad: 0.0 });
        let single = summarize_stability(&[run(0.42, 0.3)]).unwrap();
        assert_eq!(single.mean, MedMad { med: 0.42, mad: 0.0 });
        assert!(summarize_stability(&[]).is_err());
    }

    struct Constant;
    impl Labeler for Constant {
        type Shared = ();
        fn name(&self) -> String {
            "constant".into()
        }
        fn prepare(&self, _: usize) -> Result<()> {
            Ok(())
        }
        fn label(&self, _: &(), set: &MixedSet) -> Result<Vec<usize>> {
            Ok(vec![0; set.test.len()])
        }
    }

    struct Random(usize);
    impl Labeler for Random {
        type Shared = ();
        fn name(&self) -> String {
            "random".into()
        }
        fn prepare(&self, _: usize) -> Result<()> {
            Ok(())
        }
        fn label(&self, _: &(), set: &MixedSet) -> Result<Vec<usize>> {
            let mut rng = ChaCha8Rng::seed_from_u64((set.repetition * 1000 + set.index) as u64);
            Ok(set.test.iter().map(|_| rng.random_range(0..self.0)).collect())
        }
    }

    #[test]
    fn constant_labeler_is_perfectly_stable() {
        let config = StabilityConfig {
            training_sets: 4,
            train_size: 10,
            test_size: 10,
            repetitions: 3,
            ..StabilityConfig::default()
        };
        let out = stability_test(&users(60), &config, &[Constant], Execution::default()).unwrap();
        assert_eq!(out[0].summary.mean, MedMad { med: 1.0, mad: 0.0 });
        assert!(out[0].runs.iter().all(|r| r.pairwise_ari.len() == 6));
    }

    #[test]
    fn random_labeler_scores_near_zero() {
        let config = StabilityConfig {
            training_sets: 5,
            train_size: 10,
            test_size: 1000,
            repetitions: 10,
            ..StabilityConfig::default()
        };
        let out = stability_test(&users(1050), &config, &[Random(6)], Execution::default()).unwrap();
        assert!(out[0].summary.mean.med.abs() < 0.05, "{:?}", out[0].summary);
    }

    #[test]
    fn execution_modes_agree() {
        let config = StabilityConfig {
            training_sets: 3,
            train_size: 5,
            test_size: 30,
            repetitions: 4,
            ..StabilityConfig::default()
        };
        let a = stability_test(&users(60), &config, &[Random(3)], Execution::Sequential).unwrap();
        let b = stability_test(&users(60), &config, &[Random(3)], Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
