use gdtn_core::mixture::{Component, MixtureModel, Trace};
use gdtn_core::workload_replica::{
    compare, generate_ground_truth, replicate, Arrival, LoadPoint, LoadProfile, LoadRun, ServiceChain,
    ServiceSource, Stage,
};

fn two_stage_chain() -> ServiceChain {
    let detect = MixtureModel::new(
        0.0,
        vec![Component::new(0.6, 12.0, 2.0), Component::new(0.4, 22.0, 3.0)],
    )
    .unwrap();
    let classify = MixtureModel::new(0.0, vec![Component::new(1.0, 9.0, 1.5)]).unwrap();
    ServiceChain::new(vec![
        Stage {
            service: "detect".into(),
            replicas: 2,
            source: ServiceSource::Constant(detect),
        },
        Stage {
            service: "classify".into(),
            replicas: 1,
            source: ServiceSource::Constant(classify),
        },
    ])
    .unwrap()
}

fn profile(loads: &[f64]) -> LoadProfile {
    LoadProfile {
        arrival: Arrival::Poisson,
        loads: loads
            .iter()
            .map(|&load| LoadPoint {
                load,
                duration_s: 100_000.0 / load,
                held_out: false,
            })
            .collect(),
    }
}

fn traces(runs: &[LoadRun]) -> Vec<Trace> {
    runs.iter().map(LoadRun::response_trace).collect()
}

#[test]
fn twin_with_the_true_models_matches_ground_truth() {
    let chain = two_stage_chain();
    let p = profile(&[10.0, 40.0, 70.0]);
    let real = generate_ground_truth(&chain, &p, 21).unwrap();
    let twin = replicate(&chain, &p, 21).unwrap();
    for row in compare(&traces(&real), &traces(&twin)).unwrap() {
        assert!(row.err_mean < 0.01, "{row:?}");
        assert!(row.err_p99 < 0.02, "{row:?}");
    }
}

#[test]
fn responses_grow_with_load() {
    let real = generate_ground_truth(&two_stage_chain(), &profile(&[5.0, 30.0, 60.0, 90.0]), 4).unwrap();
    let rows = compare(&traces(&real), &traces(&real)).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].mean_real >= w[0].mean_real, "{rows:?}");
        assert!(w[1].p99_real >= w[0].p99_real, "{rows:?}");
    }
    for run in &real {
        for (i, r) in run.responses_ms.iter().enumerate() {
            assert!(*r >= run.service_sum_ms(i) - 1e-6);
        }
    }
}
