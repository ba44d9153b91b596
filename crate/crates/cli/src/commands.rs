//! The six pipeline commands.
//!
//! Every command reads its inputs from configured paths or from artifacts
//! of earlier commands in the output directory, holds all outputs in memory
//! and writes them only once every artifact is ready.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use ndarray::Array2;
use serde::Serialize;
use tidalflow_core::clustering::{
    kmeans_best_of, stability_test, MedMad, MethodContext, MethodParams, MethodRunner, StabilityConfig,
};
use tidalflow_core::data::{
    build_od_flow_matrix, build_user_flow_matrix, filter_users_by_trip_count, generate_synthetic_trips, parse_trip_csv,
    FlowMatrix, ODPairIndex, ParseOutcome, RowKind, SyntheticSpec,
};
use tidalflow_core::factorization::{train, EpochSplits, SemanticGroups, TrainConfig};
use tidalflow_core::format::g17;
use tidalflow_core::transfer::{
    aggregate_station_flows, aggregate_user_weights, project_users_traced, semantic_grouping, ProjectionConfig,
};
use tidalflow_core::{seed, Execution};

use crate::config::PipelineConfig;
use crate::io::{csv_buffer, finish, matrix_csv, nums, read_json, read_matrix, require, Num, Outputs, SCHEMA_VERSION};

pub const TRIPS: &str = "trips.csv";
pub const GROUND_TRUTH: &str = "ground_truth.csv";
pub const STATIONS: &str = "stations.csv";
pub const OD_FLOW: &str = "od_flow.csv";
pub const USER_FLOW: &str = "user_flow.csv";
pub const INGEST_SUMMARY: &str = "ingest_summary.json";
pub const W: &str = "W.csv";
pub const H: &str = "H.csv";
pub const LOSS_TRACE: &str = "loss_trace.csv";
pub const MODEL: &str = "model.json";
pub const SIGNATURES: &str = "signatures.csv";
pub const USER_WEIGHTS: &str = "user_weights.csv";
pub const USER_WEIGHTS_AGGREGATED: &str = "user_weights_aggregated.csv";
pub const STATION_SCORES: &str = "station_scores.csv";
pub const PROJECTION_TRACE: &str = "projection_trace.csv";
pub const LABELS: &str = "labels.csv";
pub const CLUSTER_PROFILES: &str = "cluster_profiles.csv";
pub const STABILITY_REPORT: &str = "stability_report.json";
pub const BENCHMARK_LABELS: &str = "benchmark_labels.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Ingest,
    Train,
    Project,
    Cluster,
    Benchmark,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Synth,
        Command::Ingest,
        Command::Train,
        Command::Project,
        Command::Cluster,
        Command::Benchmark,
    ];

    /// Files the command writes into the output directory.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Command::Synth => &[TRIPS, GROUND_TRUTH],
            Command::Ingest => &[STATIONS, OD_FLOW, USER_FLOW, INGEST_SUMMARY],
            Command::Train => &[W, H, LOSS_TRACE, MODEL, SIGNATURES],
            Command::Project => &[USER_WEIGHTS, USER_WEIGHTS_AGGREGATED, STATION_SCORES, PROJECTION_TRACE],
            Command::Cluster => &[LABELS, CLUSTER_PROFILES],
            Command::Benchmark => &[STABILITY_REPORT, BENCHMARK_LABELS],
        }
    }
}

/// Runs `command` and returns the written paths.
pub fn run(command: Command, config: &PipelineConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let out = match command {
        Command::Synth => synth(config)?,
        Command::Ingest => ingest(config)?,
        Command::Train => train_cmd(config)?,
        Command::Project => project(config)?,
        Command::Cluster => cluster(config)?,
        Command::Benchmark => benchmark(config)?,
    };
    debug_assert_eq!(out.names(), command.outputs());
    out.commit()
}

fn epoch_labels(epochs: usize) -> Vec<String> {
    (0..epochs).map(|t| format!("t{t}")).collect()
}

fn component_labels(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("component_{j}")).collect()
}

fn set_label(components: &[usize]) -> String {
    components.iter().map(usize::to_string).collect::<Vec<_>>().join("+")
}

fn load_trips(config: &PipelineConfig) -> Result<ParseOutcome> {
    let path = config.trips_path();
    require(&path)?;
    let outcome = parse_trip_csv(&path, config.epochs, config.on_bad_record)
        .with_context(|| format!("parsing {}", path.display()))?;
    for e in &outcome.skipped {
        warn!("skipped record: {e}");
    }
    Ok(outcome)
}

fn read_stations(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join(STATIONS);
    require(&path)?;
    let mut r = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut stations = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 || rec[0].parse::<usize>().ok() != Some(i) {
            bail!("{}: line {} is not `{i},<station_id>`", path.display(), i + 2);
        }
        stations.push(rec[1].to_string());
    }
    Ok(stations)
}

/// The OD flow artifact, checked against the station registry.
fn read_od_flow(dir: &Path, epochs: usize) -> Result<(Vec<String>, ODPairIndex, FlowMatrix)> {
    let stations = read_stations(dir)?;
    let index = ODPairIndex::new(stations.len());
    let m = read_matrix(&dir.join(OD_FLOW))?;
    let expected: Vec<String> = (0..index.total_rows()).map(|r| index.label(r, &stations)).collect();
    if m.row_labels != expected {
        bail!("{} rows do not match the OD pairs of {}", OD_FLOW, STATIONS);
    }
    if m.values.ncols() != epochs {
        bail!(
            "{} has {} epochs, configuration says {epochs}",
            OD_FLOW,
            m.values.ncols()
        );
    }
    let v = FlowMatrix {
        values: m.values,
        row_kind: RowKind::OdPair,
        row_labels: m.row_labels,
    };
    Ok((stations, index, v))
}

fn synth(config: &PipelineConfig) -> Result<Outputs> {
    let path = config
        .synth_spec
        .as_ref()
        .ok_or_else(|| anyhow!("input.synth_spec is not set"))?;
    require(path)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec: SyntheticSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    spec.seed = seed::derive_indexed(config.seed, "synth", spec.seed);
    let (db, truth) = generate_synthetic_trips(&spec)?;
    info!("generated {} trips for {} users", db.len(), truth.len());

    let mut trips = Vec::new();
    db.write_csv(&mut trips)?;
    let mut gt = csv_buffer();
    gt.write_record(["user_id", "archetype", "archetype_label"])?;
    for (user, a) in &truth {
        gt.write_record([user.as_str(), &a.to_string(), &spec.archetypes[*a].label])?;
    }

    let mut out = Outputs::new(&config.output_dir);
    out.add(TRIPS, trips);
    out.add(GROUND_TRUTH, finish(gt)?);
    Ok(out)
}

#[derive(Serialize)]
struct TripCountBin {
    trips: usize,
    users: usize,
}

#[derive(Serialize)]
struct IngestSummary {
    schema_version: u32,
    trip_count: usize,
    user_count: usize,
    selected_user_count: usize,
    station_count: usize,
    epoch_count: usize,
    od_pair_rows: usize,
    skipped_records: usize,
    epoch_histogram: Vec<usize>,
    trips_per_user: Vec<TripCountBin>,
    settings: BTreeMap<&'static str, String>,
}

fn ingest(config: &PipelineConfig) -> Result<Outputs> {
    let outcome = load_trips(config)?;
    let db = &outcome.database;
    let index = ODPairIndex::new(db.stations().len());
    let v = build_od_flow_matrix(db, &index);
    let users = filter_users_by_trip_count(db, config.min_trips, config.max_trips);
    let u = build_user_flow_matrix(db, &users);
    info!(
        "{} trips, {} users ({} selected), {} stations",
        db.len(),
        db.users().len(),
        users.len(),
        db.stations().len()
    );

    let mut stations = csv_buffer();
    stations.write_record(["station_index", "station_id"])?;
    for (i, s) in db.stations().iter().enumerate() {
        stations.write_record([i.to_string().as_str(), s])?;
    }

    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, n) in db.trip_counts() {
        *bins.entry(n).or_default() += 1;
    }
    let summary = IngestSummary {
        schema_version: SCHEMA_VERSION,
        trip_count: db.len(),
        user_count: db.users().len(),
        selected_user_count: users.len(),
        station_count: db.stations().len(),
        epoch_count: db.epoch_count(),
        od_pair_rows: index.total_rows(),
        skipped_records: outcome.skipped.len(),
        epoch_histogram: db.epoch_histogram(),
        trips_per_user: bins
            .into_iter()
            .map(|(trips, users)| TripCountBin { trips, users })
            .collect(),
        settings: config.resolved(),
    };

    let epochs = epoch_labels(config.epochs);
    let mut out = Outputs::new(&config.output_dir);
    out.add(STATIONS, finish(stations)?);
    out.add(OD_FLOW, matrix_csv("od_pair", &v.row_labels, &epochs, &v.values)?);
    out.add(USER_FLOW, matrix_csv("user_id", &u.row_labels, &epochs, &u.values)?);
    out.add_json(INGEST_SUMMARY, &summary)?;
    Ok(out)
}

#[derive(Serialize)]
struct LossRecord {
    mse: Num,
    l1l2_penalty: Num,
    tidal_term: Num,
    rho_term: Num,
    total: Num,
}

#[derive(Serialize)]
struct ModelMetadata {
    schema_version: u32,
    components: usize,
    epochs: usize,
    od_pair_rows: usize,
    stations: Vec<String>,
    groups: SemanticGroups,
    splits: EpochSplits,
    degenerate: Vec<usize>,
    tidal_active: bool,
    permutation: Vec<usize>,
    iterations: usize,
    warmup_iterations: usize,
    final_loss: LossRecord,
    seed: u64,
    settings: BTreeMap<&'static str, String>,
}

fn train_cmd(config: &PipelineConfig) -> Result<Outputs> {
    let dir = &config.output_dir;
    let (stations, index, v) = read_od_flow(dir, config.epochs)?;
    let train_config = TrainConfig {
        seed: seed::derive(config.seed, "train"),
        ..config.train.clone()
    };
    let result = train(v.values.view(), &index, &train_config)?;
    let model = &result.model;
    let last = result
        .trace
        .last()
        .ok_or_else(|| anyhow!("training produced no trace"))?;
    info!(
        "trained K={} in {} iterations, final MSE {}, tidal term {}",
        model.components(),
        last.iteration,
        g17(last.loss.mse),
        if model.tidal_active { "active" } else { "inactive" }
    );

    let comps = component_labels(model.components());
    let mut trace = csv_buffer();
    trace.write_record(["iteration", "mse", "l1l2_penalty", "tidal_term", "rho_term", "total"])?;
    for e in &result.trace {
        let l = &e.loss;
        trace.write_record([
            e.iteration.to_string(),
            g17(l.mse),
            g17(l.l1l2),
            g17(l.tidal),
            g17(l.rho_term),
            g17(l.total()),
        ])?;
    }

    let mut signatures = csv_buffer();
    signatures.write_record(["component", "group", "epoch", "value"])?;
    for (j, row) in model.h.rows().into_iter().enumerate() {
        let group = if model.groups.morning.contains(&j) {
            "morning"
        } else if model.groups.evening.contains(&j) {
            "evening"
        } else {
            "other"
        };
        for (t, &x) in row.iter().enumerate() {
            signatures.write_record([comps[j].as_str(), group, &t.to_string(), &g17(x)])?;
        }
    }

    let metadata = ModelMetadata {
        schema_version: SCHEMA_VERSION,
        components: model.components(),
        epochs: model.epochs(),
        od_pair_rows: index.total_rows(),
        stations,
        groups: model.groups.clone(),
        splits: model.splits,
        degenerate: model.degenerate.clone(),
        tidal_active: model.tidal_active,
        permutation: result.permutation.clone(),
        iterations: last.iteration,
        warmup_iterations: result.trace.iter().filter(|e| e.phase == 1 && e.iteration > 0).count(),
        final_loss: LossRecord {
            mse: Num(last.loss.mse),
            l1l2_penalty: Num(last.loss.l1l2),
            tidal_term: Num(last.loss.tidal),
            rho_term: Num(last.loss.rho_term),
            total: Num(last.loss.total()),
        },
        seed: train_config.seed,
        settings: config.resolved(),
    };

    let mut out = Outputs::new(dir);
    out.add(W, matrix_csv("od_pair", &v.row_labels, &comps, &model.w)?);
    out.add(
        H,
        matrix_csv("component", &comps, &epoch_labels(model.epochs()), &model.h)?,
    );
    out.add(LOSS_TRACE, finish(trace)?);
    out.add_json(MODEL, &metadata)?;
    out.add(SIGNATURES, finish(signatures)?);
    Ok(out)
}

fn model_groups(dir: &Path) -> Result<(SemanticGroups, EpochSplits)> {
    let path = dir.join(MODEL);
    let json = read_json(&path)?;
    let groups =
        serde_json::from_value(json["groups"].clone()).with_context(|| format!("{}: groups", path.display()))?;
    let splits =
        serde_json::from_value(json["splits"].clone()).with_context(|| format!("{}: splits", path.display()))?;
    Ok((groups, splits))
}

fn project(config: &PipelineConfig) -> Result<Outputs> {
    let dir = &config.output_dir;
    for name in [MODEL, W, H, USER_FLOW, STATIONS] {
        require(&dir.join(name))?;
    }
    let (groups, splits) = model_groups(dir)?;
    let stations = read_stations(dir)?;
    let index = ODPairIndex::new(stations.len());
    let w = read_matrix(&dir.join(W))?;
    let h = read_matrix(&dir.join(H))?;
    let u = read_matrix(&dir.join(USER_FLOW))?;
    let k = h.values.nrows();
    groups.validate(k)?;
    if w.values.ncols() != k || w.values.nrows() != index.total_rows() {
        bail!("{} and {} disagree on the factor shapes", W, H);
    }
    let users = FlowMatrix {
        values: u.values,
        row_kind: RowKind::User,
        row_labels: u.row_labels,
    };

    let projection = ProjectionConfig {
        seed: seed::derive(config.seed, "project"),
        ..config.projection
    };
    let (weights, trace) = project_users_traced(&users, h.values.view(), &projection, Execution::default())?;
    let aggregated = aggregate_user_weights(&weights, &semantic_grouping(&groups))?;
    info!("projected {} users onto {k} signatures", weights.user_labels.len());

    let epochs = h.values.ncols();
    let mut sets = Vec::new();
    if !groups.morning.is_empty() {
        sets.push((groups.morning.clone(), splits.morning()));
    }
    if !groups.evening.is_empty() {
        sets.push((groups.evening.clone(), splits.afternoon(epochs)));
    }
    sets.push(((0..k).collect(), 0..epochs));
    let mut scores = csv_buffer();
    scores.write_record([
        "station_id",
        "attractivity",
        "generativity",
        "component_set",
        "epoch_range",
    ])?;
    for (components, range) in sets {
        let s = aggregate_station_flows(
            w.values.view(),
            h.values.view(),
            &index,
            &stations,
            &components,
            range.clone(),
        )?;
        let set = set_label(&components);
        let range = format!("{}..{}", range.start, range.end);
        for (station, score) in s.stations.iter().zip(&s.scores) {
            scores.write_record([
                station.as_str(),
                &g17(score.attractivity),
                &g17(score.generativity),
                &set,
                &range,
            ])?;
        }
    }

    let mut residuals = csv_buffer();
    residuals.write_record(["iteration", "residual"])?;
    for (i, r) in trace.iter().enumerate() {
        residuals.write_record([i.to_string(), g17(*r)])?;
    }

    let mut out = Outputs::new(dir);
    out.add(
        USER_WEIGHTS,
        matrix_csv(
            "user_id",
            &weights.user_labels,
            &weights.component_labels,
            &weights.values,
        )?,
    );
    out.add(
        USER_WEIGHTS_AGGREGATED,
        matrix_csv(
            "user_id",
            &aggregated.user_labels,
            &aggregated.component_labels,
            &aggregated.values,
        )?,
    );
    out.add(STATION_SCORES, finish(scores)?);
    out.add(PROJECTION_TRACE, finish(residuals)?);
    Ok(out)
}

fn label_header() -> [&'static str; 5] {
    ["user_id", "label", "method", "repetition", "mixed_set_index"]
}

fn cluster(config: &PipelineConfig) -> Result<Outputs> {
    let dir = &config.output_dir;
    for name in [USER_WEIGHTS, USER_WEIGHTS_AGGREGATED] {
        require(&dir.join(name))?;
    }
    let weights = read_matrix(&dir.join(USER_WEIGHTS))?;
    let aggregated = read_matrix(&dir.join(USER_WEIGHTS_AGGREGATED))?;
    if aggregated.row_labels != weights.row_labels {
        bail!("{} and {} list different users", USER_WEIGHTS, USER_WEIGHTS_AGGREGATED);
    }
    let km = kmeans_best_of(
        weights.values.view(),
        &config.kmeans,
        seed::derive(config.seed, "cluster"),
        Execution::default(),
    )?;
    info!(
        "clustered {} users into {} clusters",
        km.labels.len(),
        config.kmeans.clusters
    );

    let mut labels = csv_buffer();
    labels.write_record(label_header())?;
    for (user, label) in weights.row_labels.iter().zip(&km.labels) {
        labels.write_record([user.as_str(), &label.to_string(), "s2u", "0", "0"])?;
    }

    // mean aggregated weight per cluster and component group
    let c = config.kmeans.clusters;
    let groups = aggregated.values.ncols();
    let mut sums = Array2::<f64>::zeros((c, groups));
    let mut sizes = vec![0usize; c];
    for (row, &label) in aggregated.values.rows().into_iter().zip(&km.labels) {
        sizes[label] += 1;
        sums.row_mut(label).zip_mut_with(&row, |a, &b| *a += b);
    }
    let mut profiles = csv_buffer();
    profiles.write_record(["cluster", "size", "group", "mean_weight"])?;
    for cl in 0..c {
        for g in 0..groups {
            let mean = if sizes[cl] == 0 {
                0.0
            } else {
                sums[[cl, g]] / sizes[cl] as f64
            };
            profiles.write_record([
                cl.to_string(),
                sizes[cl].to_string(),
                aggregated.col_labels[g].clone(),
                g17(mean),
            ])?;
        }
    }

    let mut out = Outputs::new(dir);
    out.add(LABELS, finish(labels)?);
    out.add(CLUSTER_PROFILES, finish(profiles)?);
    Ok(out)
}

#[derive(Serialize)]
struct MedMadRecord {
    med: Num,
    mad: Num,
}

impl From<MedMad> for MedMadRecord {
    fn from(m: MedMad) -> Self {
        Self {
            med: Num(m.med),
            mad: Num(m.mad),
        }
    }
}

#[derive(Serialize)]
struct PairRecord {
    i: usize,
    j: usize,
    ari: Num,
}

#[derive(Serialize)]
struct RunRecord {
    repetition: usize,
    partition_seed: u64,
    pairwise_ari: Vec<PairRecord>,
    mean_ari: Num,
    median_ari: Num,
}

#[derive(Serialize)]
struct SummaryRecord {
    mean_ari: MedMadRecord,
    median_ari: MedMadRecord,
}

#[derive(Serialize)]
struct MethodRecord {
    method: String,
    mean_ari: Vec<Num>,
    median_ari: Vec<Num>,
    summary: SummaryRecord,
    runs: Vec<RunRecord>,
}

#[derive(Serialize)]
struct Seeds {
    root: u64,
    methods: u64,
    stability: u64,
}

#[derive(Serialize)]
struct StabilityReportFile {
    schema_version: u32,
    eligible_users: usize,
    seeds: Seeds,
    settings: BTreeMap<&'static str, String>,
    methods: Vec<MethodRecord>,
}

fn benchmark(config: &PipelineConfig) -> Result<Outputs> {
    let dir = &config.output_dir;
    let (_, index, v) = read_od_flow(dir, config.epochs)?;
    let db = load_trips(config)?.database;
    if db.stations().len() != index.station_count() {
        bail!("{} and the trip file disagree on the station registry", STATIONS);
    }
    let users = filter_users_by_trip_count(&db, config.min_trips, config.max_trips);

    let params = MethodParams {
        tidal: config.train.clone(),
        nmf: TrainConfig {
            max_iters: config.nmf_max_iters,
            warmup_iters: 0,
            ..config.train.clone()
        },
        projection: config.projection,
        kmeans: config.kmeans,
    };
    let seeds = Seeds {
        root: config.seed,
        methods: seed::derive(config.seed, "benchmark"),
        stability: seed::derive(config.seed, "stability"),
    };
    let ctx = MethodContext {
        db: &db,
        v: &v,
        index: &index,
        params: &params,
        seed: seeds.methods,
    };
    let stability = StabilityConfig {
        clusters: config.kmeans.clusters,
        seed: seeds.stability,
        ..config.stability
    };
    let runners: Vec<MethodRunner> = config
        .methods
        .iter()
        .map(|&method| MethodRunner { method, ctx })
        .collect();
    let results = stability_test(&users, &stability, &runners, Execution::default())?;

    let mut labels = csv_buffer();
    labels.write_record(label_header())?;
    let mut methods = Vec::new();
    for r in &results {
        info!(
            "{}: MED of mean ARI {}, MAD {}",
            r.method,
            g17(r.summary.mean.med),
            g17(r.summary.mean.mad)
        );
        for (rep, sets) in r.labels.iter().enumerate() {
            for (set, set_labels) in sets.iter().enumerate() {
                for (user, label) in r.test_users[rep].iter().zip(set_labels) {
                    labels.write_record([
                        user.clone(),
                        label.to_string(),
                        r.method.clone(),
                        rep.to_string(),
                        set.to_string(),
                    ])?;
                }
            }
        }
        let means: Vec<f64> = r.runs.iter().map(|x| x.mean_ari).collect();
        let medians: Vec<f64> = r.runs.iter().map(|x| x.median_ari).collect();
        methods.push(MethodRecord {
            method: r.method.clone(),
            mean_ari: nums(&means),
            median_ari: nums(&medians),
            summary: SummaryRecord {
                mean_ari: r.summary.mean.into(),
                median_ari: r.summary.median.into(),
            },
            runs: r
                .runs
                .iter()
                .map(|run| RunRecord {
                    repetition: run.repetition,
                    partition_seed: run.partition_seed,
                    pairwise_ari: run
                        .pairwise_ari
                        .iter()
                        .map(|p| PairRecord {
                            i: p.i,
                            j: p.j,
                            ari: Num(p.ari),
                        })
                        .collect(),
                    mean_ari: Num(run.mean_ari),
                    median_ari: Num(run.median_ari),
                })
                .collect(),
        });
    }
    let report = StabilityReportFile {
        schema_version: SCHEMA_VERSION,
        eligible_users: users.len(),
        seeds,
        settings: config.resolved(),
        methods,
    };

    let mut out = Outputs::new(dir);
    out.add_json(STABILITY_REPORT, &report)?;
    out.add(BENCHMARK_LABELS, finish(labels)?);
    Ok(out)
}
