//! Synthetic farecard corpora with planted commuting archetypes.
//!
//! Each user gets a home and a work station from its archetype's
//! distributions and alternates home→work trips around the morning peak with
//! work→home trips around the evening peak. A noise trip (uniform station pair
//! and epoch) replaces a commute trip with probability `noise_rate`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::trips::{TripDatabase, TripRecord};
use super::DEFAULT_EPOCHS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Archetype {
    pub label: String,
    /// `(station index, probability)` pairs.
    pub home: Vec<(usize, f64)>,
    pub work: Vec<(usize, f64)>,
    pub morning_peak: usize,
    pub evening_peak: usize,
    /// Standard deviation, in epochs, of the rounded Gaussian jitter around
    /// each peak. Zero places every commute trip exactly on its peak.
    #[serde(default)]
    pub peak_jitter: f64,
    /// `(trip count, probability)` pairs for trips per user and week.
    pub trips_per_week: Vec<(usize, f64)>,
    pub noise_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub station_count: usize,
    #[serde(default = "default_epochs")]
    pub epoch_count: usize,
    pub archetypes: Vec<Archetype>,
    pub users_per_archetype: usize,
    pub seed: u64,
}

fn default_epochs() -> usize {
    DEFAULT_EPOCHS
}

/// `(user id, archetype index)` in generation order.
pub type GroundTruth = Vec<(String, usize)>;

const PROB_TOLERANCE: f64 = 1e-9;

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.station_count == 0 {
            return Err(Error::Config("synthetic spec needs at least one station".into()));
        }
        if self.archetypes.is_empty() || self.users_per_archetype == 0 {
            return Err(Error::Config("synthetic spec needs at least one user".into()));
        }
        if self.epoch_count == 0 {
            return Err(Error::Config("epoch count must be positive".into()));
        }
        for a in &self.archetypes {
            check_distribution(&a.label, "home", &a.home, self.station_count)?;
            check_distribution(&a.label, "work", &a.work, self.station_count)?;
            check_distribution(&a.label, "trips_per_week", &a.trips_per_week, usize::MAX)?;
            if a.morning_peak >= self.epoch_count || a.evening_peak >= self.epoch_count {
                return Err(Error::Config(format!(
                    "archetype {}: peak outside epoch range",
                    a.label
                )));
            }
            if !(0.0..=1.0).contains(&a.noise_rate) {
                return Err(Error::Config(format!(
                    "archetype {}: noise_rate outside [0, 1]",
                    a.label
                )));
            }
            if !(a.peak_jitter >= 0.0 && a.peak_jitter.is_finite()) {
                return Err(Error::Config(format!("archetype {}: invalid peak_jitter", a.label)));
            }
        }
        Ok(())
    }

    /// Zero-padded station names so lexicographic order matches index order.
    pub fn station_names(&self) -> Vec<String> {
        let width = (self.station_count.max(2) - 1).to_string().len();
        (0..self.station_count).map(|i| format!("S{i:0width$}")).collect()
    }
}

fn check_distribution(label: &str, what: &str, dist: &[(usize, f64)], bound: usize) -> Result<()> {
    let bad = |m: &str| Error::Config(format!("archetype {label}: {what} {m}"));
    if dist.is_empty() {
        return Err(bad("distribution is empty"));
    }
    if dist.iter().any(|&(k, p)| k >= bound || !p.is_finite() || p < 0.0) {
        return Err(bad("has an invalid entry"));
    }
    let total: f64 = dist.iter().map(|&(_, p)| p).sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(bad(&format!("probabilities sum to {total}")));
    }
    Ok(())
}

struct Categorical<'a> {
    values: &'a [(usize, f64)],
    index: WeightedIndex<f64>,
}

impl<'a> Categorical<'a> {
    fn new(values: &'a [(usize, f64)]) -> Self {
        let index = WeightedIndex::new(values.iter().map(|&(_, p)| p)).expect("validated distribution");
        Self { values, index }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        self.values[self.index.sample(rng)].0
    }
}

/// Generates a trip database and the planted archetype of every user.
/// The output is a pure function of `spec`.
pub fn generate_synthetic_trips(spec: &SyntheticSpec) -> Result<(TripDatabase, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_users = spec.archetypes.len() * spec.users_per_archetype;
    let width = (n_users.max(2) - 1).to_string().len();
    let last_epoch = spec.epoch_count as f64 - 1.0;

    let mut records = Vec::new();
    let mut truth = Vec::with_capacity(n_users);
    for (a_idx, arch) in spec.archetypes.iter().enumerate() {
        let home_dist = Categorical::new(&arch.home);
        let work_dist = Categorical::new(&arch.work);
        let count_dist = Categorical::new(&arch.trips_per_week);
        let jitter = Normal::new(0.0, arch.peak_jitter).expect("validated jitter");
        let epoch_near = |peak: usize, rng: &mut ChaCha8Rng| -> usize {
            if arch.peak_jitter == 0.0 {
                peak
            } else {
                (peak as f64 + jitter.sample(rng)).round().clamp(0.0, last_epoch) as usize
            }
        };

        for _ in 0..spec.users_per_archetype {
            let user = format!("u{:0width$}", truth.len());
            let home = home_dist.sample(&mut rng);
            let mut work = work_dist.sample(&mut rng);
            for _ in 0..32 {
                if work != home {
                    break;
                }
                work = work_dist.sample(&mut rng);
            }
            let trips = count_dist.sample(&mut rng);
            for k in 0..trips {
                let noisy = arch.noise_rate > 0.0 && rng.random::<f64>() < arch.noise_rate;
                let (origin, destination, epoch) = if noisy {
                    noise_trip(spec, &mut rng)
                } else if k % 2 == 0 {
                    (home, work, epoch_near(arch.morning_peak, &mut rng))
                } else {
                    (work, home, epoch_near(arch.evening_peak, &mut rng))
                };
                records.push(TripRecord {
                    user: user.clone(),
                    origin,
                    destination,
                    epoch,
                });
            }
            truth.push((user, a_idx));
        }
    }

    let db = TripDatabase::new(records, spec.station_names(), spec.epoch_count)?;
    Ok((db, truth))
}

fn noise_trip<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> (usize, usize, usize) {
    let n = spec.station_count;
    let origin = rng.random_range(0..n);
    let destination = if n > 1 {
        (origin + rng.random_range(1..n)) % n
    } else {
        origin
    };
    (origin, destination, rng.random_range(0..spec.epoch_count))
}
