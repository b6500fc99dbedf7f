use rkhs_core::experiments::{
    monte_carlo, results_csv, sample_dataset, stream_seed, NoiseModel, Scenario, ScenarioSpec, CSV_HEADER, METRICS,
};
use rkhs_core::fredholm::DesignMeasure;

fn scenario(seed: u64) -> Scenario {
    Scenario::new(ScenarioSpec {
        grid_m: 96,
        base_seed: seed,
        ..ScenarioSpec::canonical()
    })
    .unwrap()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn monte_carlo_independent_of_thread_count() {
    let sc = scenario(3);
    let one = in_pool(1, || monte_carlo(&sc, 30, 0.1, 12).unwrap());
    let three = in_pool(3, || monte_carlo(&sc, 30, 0.1, 12).unwrap());
    assert_eq!(csv_of(&one), csv_of(&three));
    for name in METRICS {
        let (a, b) = (one.values(name), three.values(name));
        assert_eq!(a.len(), 12);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()), "{name}");
    }
}

fn csv_of(agg: &rkhs_core::experiments::AggregateResult) -> String {
    results_csv(std::slice::from_ref(agg)).unwrap()
}

#[test]
fn repeated_monte_carlo_is_identical() {
    let sc = scenario(9);
    let a = monte_carlo(&sc, 15, 0.05, 2).unwrap();
    let b = monte_carlo(&sc, 15, 0.05, 2).unwrap();
    assert_eq!(a.replications, 2);
    assert_eq!(a.succeeded, 2);
    assert_eq!(results_csv(&[a]).unwrap(), results_csv(&[b]).unwrap());
}

#[test]
fn noiseless_samples_lie_on_the_target() {
    let spec = ScenarioSpec {
        noise: NoiseModel::Homoscedastic { sigma: 0.0 },
        grid_m: 64,
        ..ScenarioSpec::canonical()
    };
    let sc = Scenario::new(spec).unwrap();
    let data = sample_dataset(&sc, 40, 0).unwrap();
    for (x, f) in data.xs().iter().zip(data.fs()) {
        assert!((0.0..=1.0).contains(&x[0]));
        assert!((sc.f0().evaluate(x).unwrap() - f).abs() < 1e-12);
    }
}

#[test]
fn dirac_design_repeats_one_point() {
    let spec = ScenarioSpec {
        design: DesignMeasure::Dirac { x0: vec![0.3] },
        grid_m: 16,
        ..ScenarioSpec::canonical()
    };
    let sc = Scenario::new(spec).unwrap();
    let data = sample_dataset(&sc, 10, 4).unwrap();
    assert!(data.xs().iter().all(|x| x == &vec![0.3]));
    let spread = data.fs().iter().fold(0f64, |m, f| m.max((f - data.fs()[0]).abs()));
    assert!(spread > 0.0, "noise still varies the responses");
}

#[test]
fn sample_streams_follow_the_seed_triple() {
    let sc = scenario(1);
    assert_eq!(sample_dataset(&sc, 20, 5).unwrap(), sample_dataset(&sc, 20, 5).unwrap());
    assert_ne!(sample_dataset(&sc, 20, 5).unwrap(), sample_dataset(&sc, 20, 6).unwrap());
    assert_ne!(
        sample_dataset(&sc, 20, 5).unwrap(),
        sample_dataset(&scenario(2), 20, 5).unwrap()
    );
    assert_ne!(stream_seed(1, 20, 5), stream_seed(1, 21, 5));
}

#[test]
fn auxiliary_variance_halves_when_n_doubles() {
    // f̃_n(x) is an average of n i.i.d. terms, so its variance scales as 1/n.
    let sc = scenario(17);
    let target = sc.target(0.1).unwrap();
    let small = rkhs_core::experiments::monte_carlo_with_target(&sc, &target, 25, 2000).unwrap();
    let large = rkhs_core::experiments::monte_carlo_with_target(&sc, &target, 50, 2000).unwrap();
    for (p, q) in small.probes.iter().zip(&large.probes) {
        let ratio = p.tilde_var / q.tilde_var;
        assert!((ratio - 2.0).abs() <= 0.3, "ratio {ratio} at {:?}", p.x);
    }
}

#[test]
fn csv_schema_is_fixed() {
    let sc = scenario(0);
    let rows = vec![
        monte_carlo(&sc, 10, 0.1, 3).unwrap(),
        monte_carlo(&sc, 20, 0.1, 3).unwrap(),
    ];
    let csv = results_csv(&rows).unwrap();
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER);
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 2 * METRICS.len());
    for rec in &records {
        assert_eq!(rec.len(), 7);
        assert!(METRICS.contains(&&rec[3]));
        for field in [&rec[0], &rec[1], &rec[2], &rec[4], &rec[5]] {
            assert!(field.parse::<f64>().unwrap().is_finite());
        }
        // Full precision: the mean round-trips to the aggregate's value.
        let n: usize = rec[0].parse().unwrap();
        let row = rows.iter().find(|r| r.n == n).unwrap();
        assert_eq!(rec[4].parse::<f64>().unwrap(), row.metric(&rec[3]).unwrap().mean);
        assert_eq!(rec[6].is_empty(), row.metric(&rec[3]).unwrap().theory.is_none());
    }
}
