//! Flat `key = value` pipeline configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Command-line
//! `--set key=value` pairs are applied after the file, then `--out` and
//! `--seed`. Every key is listed in [`KEYS`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tidalflow_core::clustering::{KMeansConfig, Method, StabilityConfig};
use tidalflow_core::data::OnBadRecord;
use tidalflow_core::factorization::TrainConfig;
use tidalflow_core::format::g17;
use tidalflow_core::transfer::ProjectionConfig;

/// Recognized keys with a short description, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "root seed; per-stage seeds are derived from it"),
    ("output.dir", "directory for all artifacts"),
    (
        "input.trips",
        "trip CSV (card_id,origin,destination,entry_hour); default <output.dir>/trips.csv",
    ),
    ("input.synth_spec", "synthetic corpus spec (JSON) for `synth`"),
    ("epochs", "number of epochs per day"),
    ("ingest.on_bad_record", "abort | skip"),
    ("ingest.min_trips", "lower bound on trips per selected user"),
    ("ingest.max_trips", "upper bound on trips per selected user (or `inf`)"),
    ("train.components", "latent component count K"),
    ("train.alpha", "elastic-net weight"),
    ("train.eta", "L1 share of the elastic-net penalty"),
    ("train.gamma", "reverse-pair symmetry weight"),
    ("train.rho", "cross-band signature weight"),
    ("train.learning_rate", "initial step size"),
    ("train.max_iters", "total training iterations"),
    ("train.warmup_iters", "iterations before the tidal term is enabled"),
    ("train.mse_tolerance", "stop when the MSE changes by less than this"),
    ("train.min_mass_ratio", "minimum relative mass of a commute component"),
    ("train.morning_end", "first epoch after the morning band"),
    ("train.afternoon_start", "first epoch of the afternoon band"),
    ("nmf.max_iters", "iterations of the baseline NMF on user flows"),
    ("project.max_iters", "multiplicative-update iterations per user"),
    ("project.tolerance", "relative residual change that stops a user"),
    ("cluster.clusters", "cluster count"),
    ("cluster.max_iters", "Lloyd iterations"),
    ("cluster.restarts", "k-means++ seedings, best potential kept"),
    ("stability.training_sets", "number of disjoint training sets M"),
    ("stability.train_size", "users per training set"),
    ("stability.test_size", "users in the shared test set"),
    ("stability.repetitions", "repetitions with fresh partitions"),
    ("benchmark.methods", "comma-separated subset of naive,nmf,s2u,control"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub trips: Option<PathBuf>,
    pub synth_spec: Option<PathBuf>,
    pub epochs: usize,
    pub on_bad_record: OnBadRecord,
    pub min_trips: usize,
    pub max_trips: usize,
    pub train: TrainConfig,
    pub nmf_max_iters: usize,
    pub projection: ProjectionConfig,
    pub kmeans: KMeansConfig,
    pub stability: StabilityConfig,
    pub methods: Vec<Method>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            trips: None,
            synth_spec: None,
            epochs: 24,
            on_bad_record: OnBadRecord::Abort,
            min_trips: 0,
            max_trips: usize::MAX,
            train: TrainConfig::default(),
            nmf_max_iters: 500,
            projection: ProjectionConfig::default(),
            kmeans: KMeansConfig::default(),
            stability: StabilityConfig::default(),
            methods: Method::ALL.to_vec(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("`{key}`: cannot parse `{value}`: {e}"))
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config = Self::default();
        config
            .apply_text(&text)
            .with_context(|| format!("in config {}", path.display()))?;
        Ok(config)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`", n + 1);
            };
            self.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let Some((key, value)) = pair.split_once('=') else {
            bail!("override `{pair}` is not key=value");
        };
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = num(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            "input.trips" => self.trips = Some(PathBuf::from(value)),
            "input.synth_spec" => self.synth_spec = Some(PathBuf::from(value)),
            "epochs" => self.epochs = num(key, value)?,
            "ingest.on_bad_record" => {
                self.on_bad_record = match value {
                    "abort" => OnBadRecord::Abort,
                    "skip" => OnBadRecord::Skip,
                    _ => bail!("`{key}` must be abort or skip"),
                }
            }
            "ingest.min_trips" => self.min_trips = num(key, value)?,
            "ingest.max_trips" => self.max_trips = if value == "inf" { usize::MAX } else { num(key, value)? },
            "train.components" => self.train.components = num(key, value)?,
            "train.alpha" => self.train.alpha = num(key, value)?,
            "train.eta" => self.train.eta = num(key, value)?,
            "train.gamma" => self.train.gamma = num(key, value)?,
            "train.rho" => self.train.rho = num(key, value)?,
            "train.learning_rate" => self.train.learning_rate = num(key, value)?,
            "train.max_iters" => self.train.max_iters = num(key, value)?,
            "train.warmup_iters" => self.train.warmup_iters = num(key, value)?,
            "train.mse_tolerance" => self.train.mse_tolerance = num(key, value)?,
            "train.min_mass_ratio" => self.train.min_mass_ratio = num(key, value)?,
            "train.morning_end" => self.train.splits.morning_end = num(key, value)?,
            "train.afternoon_start" => self.train.splits.afternoon_start = num(key, value)?,
            "nmf.max_iters" => self.nmf_max_iters = num(key, value)?,
            "project.max_iters" => self.projection.max_iters = num(key, value)?,
            "project.tolerance" => self.projection.tolerance = num(key, value)?,
            "cluster.clusters" => {
                self.kmeans.clusters = num(key, value)?;
                self.stability.clusters = self.kmeans.clusters;
            }
            "cluster.max_iters" => self.kmeans.max_iters = num(key, value)?,
            "cluster.restarts" => self.kmeans.restarts = num(key, value)?,
            "stability.training_sets" => self.stability.training_sets = num(key, value)?,
            "stability.train_size" => self.stability.train_size = num(key, value)?,
            "stability.test_size" => self.stability.test_size = num(key, value)?,
            "stability.repetitions" => self.stability.repetitions = num(key, value)?,
            "benchmark.methods" => {
                self.methods = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()?;
            }
            _ => bail!("unknown configuration key `{key}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.train.splits.validate(self.epochs)?;
        self.stability.validate()?;
        if self.min_trips > self.max_trips {
            bail!("ingest.min_trips exceeds ingest.max_trips");
        }
        if self.methods.is_empty() {
            bail!("benchmark.methods is empty");
        }
        Ok(())
    }

    /// Every non-path setting as `key → value` text, floats with 17
    /// significant digits. Paths are left out so that runs in different
    /// directories echo identical settings.
    pub fn resolved(&self) -> BTreeMap<&'static str, String> {
        let t = &self.train;
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let max_trips = if self.max_trips == usize::MAX {
            "inf".to_string()
        } else {
            self.max_trips.to_string()
        };
        let on_bad = match self.on_bad_record {
            OnBadRecord::Abort => "abort",
            OnBadRecord::Skip => "skip",
        };
        BTreeMap::from([
            ("seed", self.seed.to_string()),
            ("epochs", self.epochs.to_string()),
            ("ingest.on_bad_record", on_bad.to_string()),
            ("ingest.min_trips", self.min_trips.to_string()),
            ("ingest.max_trips", max_trips),
            ("train.components", t.components.to_string()),
            ("train.alpha", g17(t.alpha)),
            ("train.eta", g17(t.eta)),
            ("train.gamma", g17(t.gamma)),
            ("train.rho", g17(t.rho)),
            ("train.learning_rate", g17(t.learning_rate)),
            ("train.max_iters", t.max_iters.to_string()),
            ("train.warmup_iters", t.warmup_iters.to_string()),
            ("train.mse_tolerance", g17(t.mse_tolerance)),
            ("train.min_mass_ratio", g17(t.min_mass_ratio)),
            ("train.morning_end", t.splits.morning_end.to_string()),
            ("train.afternoon_start", t.splits.afternoon_start.to_string()),
            ("nmf.max_iters", self.nmf_max_iters.to_string()),
            ("project.max_iters", self.projection.max_iters.to_string()),
            ("project.tolerance", g17(self.projection.tolerance)),
            ("cluster.clusters", self.kmeans.clusters.to_string()),
            ("cluster.max_iters", self.kmeans.max_iters.to_string()),
            ("cluster.restarts", self.kmeans.restarts.to_string()),
            ("stability.training_sets", self.stability.training_sets.to_string()),
            ("stability.train_size", self.stability.train_size.to_string()),
            ("stability.test_size", self.stability.test_size.to_string()),
            ("stability.repetitions", self.stability.repetitions.to_string()),
            ("benchmark.methods", methods.join(",")),
        ])
    }

    pub fn trips_path(&self) -> PathBuf {
        self.trips.clone().unwrap_or_else(|| self.output_dir.join("trips.csv"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_text() {
        let mut c = PipelineConfig::default();
        c.apply_text(
            "# comment\nseed = 9\n\ntrain.components=4\nbenchmark.methods = s2u, naive\ningest.max_trips = inf\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.components, 4);
        assert_eq!(c.methods, [Method::S2u, Method::Naive]);
        assert_eq!(c.max_trips, usize::MAX);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut c = PipelineConfig::default();
        assert!(c.apply_text("nonsense = 1").is_err());
        assert!(c.apply_text("seed").is_err());
        assert!(c.apply_text("seed = abc").is_err());
        assert!(c.apply_override("benchmark.methods=pca").is_err());
    }

    #[test]
    fn every_documented_key_is_settable() {
        let sample = |key: &str| match key {
            "ingest.on_bad_record" => "skip",
            "benchmark.methods" => "nmf",
            "output.dir" | "input.trips" | "input.synth_spec" => "x",
            "train.alpha"
            | "train.eta"
            | "train.gamma"
            | "train.rho"
            | "train.learning_rate"
            | "train.mse_tolerance"
            | "train.min_mass_ratio"
            | "project.tolerance" => "0.5",
            _ => "3",
        };
        for (key, _) in KEYS {
            PipelineConfig::default().set(key, sample(key)).unwrap();
        }
    }

    #[test]
    fn resolved_settings_reparse() {
        let mut c = PipelineConfig::default();
        c.apply_text("train.alpha = 0.3\nbenchmark.methods = control\ningest.on_bad_record = skip\n")
            .unwrap();
        let mut again = PipelineConfig::default();
        for (k, v) in c.resolved() {
            again.set(k, &v).unwrap();
        }
        assert_eq!(again, c);
        let echoed: Vec<&str> = c.resolved().into_keys().collect();
        let documented = KEYS
            .iter()
            .filter(|(k, _)| !matches!(*k, "output.dir" | "input.trips" | "input.synth_spec"));
        assert_eq!(echoed.len(), documented.count());
    }

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }
}
