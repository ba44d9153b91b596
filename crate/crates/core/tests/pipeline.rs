use tidalflow_core::clustering::{
    adjusted_rand_index_raw, run_method, stability_test, Method, MethodContext, MethodParams, MethodRunner,
    StabilityConfig,
};
use tidalflow_core::data::{
    build_od_flow_matrix, build_user_flow_matrix, generate_synthetic_trips, parse_trip_reader, Archetype, ODPairIndex,
    OnBadRecord, SyntheticSpec, TripDatabase,
};
use tidalflow_core::factorization::{train, TrainConfig};
use tidalflow_core::transfer::{aggregate_user_weights, project_users_traced, semantic_grouping, ProjectionConfig};
use tidalflow_core::Execution;

fn corpus() -> (TripDatabase, Vec<(String, usize)>) {
    let archetypes = [(7, 17), (9, 19)]
        .iter()
        .enumerate()
        .map(|(a, &(am, pm))| Archetype {
            label: format!("a{a}"),
            home: vec![(a * 2, 0.5), (a * 2 + 1, 0.5)],
            work: vec![(4 + a, 1.0)],
            morning_peak: am,
            evening_peak: pm,
            peak_jitter: 0.5,
            trips_per_week: vec![(2, 0.5), (6, 0.5)],
            noise_rate: 0.05,
        })
        .collect();
    let spec = SyntheticSpec {
        station_count: 6,
        epoch_count: 24,
        archetypes,
        users_per_archetype: 80,
        seed: 3,
    };
    generate_synthetic_trips(&spec).unwrap()
}

#[test]
fn csv_round_trip_preserves_flows() {
    let (db, _) = corpus();
    let mut csv = Vec::new();
    db.write_csv(&mut csv).unwrap();
    let parsed = parse_trip_reader(csv.as_slice(), 24, OnBadRecord::Abort).unwrap();
    assert!(parsed.skipped.is_empty());
    let index = ODPairIndex::new(6);
    assert_eq!(
        build_od_flow_matrix(&db, &index),
        build_od_flow_matrix(&parsed.database, &index)
    );
    assert_eq!(parsed.database.users(), db.users());
}

#[test]
fn library_pipeline_separates_archetypes() {
    let (db, truth) = corpus();
    let index = ODPairIndex::new(6);
    let v = build_od_flow_matrix(&db, &index);
    let model = train(
        v.values.view(),
        &index,
        &TrainConfig {
            components: 4,
            seed: 1,
            ..TrainConfig::default()
        },
    )
    .unwrap()
    .model;
    assert!(model.tidal_active);

    let users: Vec<String> = truth.iter().map(|(u, _)| u.clone()).collect();
    let u = build_user_flow_matrix(&db, &users);
    let config = ProjectionConfig::default();
    let (seq, seq_trace) = project_users_traced(&u, model.h.view(), &config, Execution::Sequential).unwrap();
    let (par, par_trace) = project_users_traced(&u, model.h.view(), &config, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq_trace, par_trace);

    let grouped = aggregate_user_weights(&seq, &semantic_grouping(&model.groups)).unwrap();
    assert_eq!(grouped.values.nrows(), users.len());
    let total: f64 = seq.values.sum();
    assert!((grouped.values.sum() - total).abs() <= 1e-9 * total);

    let params = MethodParams {
        kmeans: tidalflow_core::clustering::KMeansConfig {
            clusters: 2,
            ..Default::default()
        },
        ..MethodParams::default()
    };
    let ctx = MethodContext {
        db: &db,
        v: &v,
        index: &index,
        params: &params,
        seed: 2,
    };
    let labels = run_method(Method::S2u, &ctx, Some(&model), &[], &users, 5).unwrap();
    let planted: Vec<usize> = truth.iter().map(|(_, a)| *a).collect();
    assert!(adjusted_rand_index_raw(&labels.labels, &planted) > 0.9);
}

#[test]
fn stability_is_independent_of_execution_mode() {
    let (db, _) = corpus();
    let index = ODPairIndex::new(6);
    let v = build_od_flow_matrix(&db, &index);
    let params = MethodParams {
        tidal: TrainConfig {
            components: 4,
            max_iters: 300,
            ..TrainConfig::default()
        },
        ..MethodParams::default()
    };
    let ctx = MethodContext {
        db: &db,
        v: &v,
        index: &index,
        params: &params,
        seed: 8,
    };
    let runners = Method::ALL.map(|method| MethodRunner { method, ctx });
    let config = StabilityConfig {
        training_sets: 3,
        train_size: 40,
        test_size: 40,
        clusters: 2,
        repetitions: 2,
        seed: 4,
    };
    let users = db.users();
    let a = stability_test(&users, &config, &runners, Execution::Sequential).unwrap();
    let b = stability_test(&users, &config, &runners, Execution::Parallel).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 4);
}
