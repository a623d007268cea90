use collab_langevin::data::Dataset;
use collab_langevin::model::{ModelKind, ModelSpec};
use collab_langevin::orchestrator::{
    rng_streams, run, verify_bound, InitialState, RunConfig, Termination,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn line_data(label: &str, slope: f64, xs: &[f64]) -> Dataset {
    Dataset::new(label, xs.iter().map(|&x| (x, slope * x)).collect()).unwrap()
}

#[test]
fn agent_streams_are_uncorrelated() {
    let mut streams = rng_streams(17, 3);
    let n = 10_000;
    let a: Vec<f64> = (0..n).map(|_| streams[1].sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..n).map(|_| streams[2].sample(StandardNormal)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&a), mean(&b));
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let corr = cov / (va * vb).sqrt();
    assert!(corr.abs() < 0.05, "correlation {corr}");
}

#[test]
fn noiseless_agents_with_a_shared_minimizer_converge() {
    // Every agent's loss is minimized at slope 2 with curvature near 0.2. At
    // delta = 1, gamma = 0.99 one step contracts the error by about 0.72, so
    // once a step moves the consensus by at most tol the remaining distance is
    // roughly 2.5 tol.
    let model = ModelSpec::new(ModelKind::Linear);
    let sets = [
        line_data("a", 2.0, &[0.2, 0.4]),
        line_data("b", 2.0, &[0.25, 0.35]),
        line_data("c", 2.0, &[0.3, 0.3]),
    ];
    let test = line_data("test", 2.0, &[0.3, 0.9]);
    let mut config = RunConfig::gause_defaults(3).with_schedule(2000.0, 2000);
    config.dynamics.gamma = 0.99;
    config.dynamics.eta = 0.01;
    config.dynamics.c = 0.0;
    config.tol = 1e-8;
    config.initial = InitialState::PerAgent {
        thetas: vec![vec![-1.0], vec![0.5], vec![4.0]],
        momenta: None,
    };
    let record = run(&config, &model, &sets, &test).unwrap();
    assert_eq!(record.terminated_by, Termination::Convergence);
    assert!(record.steps_executed < config.steps);
    assert!(
        (record.consensus[0] - 2.0).abs() <= 10.0 * config.tol,
        "{:?}",
        record.consensus
    );
}

#[test]
fn recorded_rows_follow_the_stride() {
    let model = ModelSpec::new(ModelKind::Linear);
    let sets = [
        line_data("a", 1.0, &[1.0, 2.0]),
        line_data("b", 3.0, &[1.0]),
    ];
    let test = line_data("test", 2.0, &[1.5]);
    let mut config = RunConfig::gause_defaults(2).with_schedule(1.0, 1005);
    config.record_stride = 100;
    config.dynamics.c = 0.01;
    let record = run(&config, &model, &sets, &test).unwrap();
    let ns: Vec<usize> = record.rows.iter().map(|r| r.n).collect();
    let mut expected: Vec<usize> = (0..1005).step_by(100).collect();
    expected.push(1004);
    assert_eq!(ns, expected);
    let windows: f64 = record.rows.iter().map(|r| r.window_loss).sum();
    assert!((windows - record.cumulative_loss).abs() <= 1e-9 * record.cumulative_loss.max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn bound_holds_for_random_runs(
        k in prop::sample::select(vec![1usize, 2, 5, 10]),
        beta in prop::sample::select(vec![0.1, 0.5, 0.9]),
        mu in 1e-3f64..2.0,
        c in 0.0f64..0.5,
        slopes in prop::collection::vec(-3.0f64..3.0, 10),
        seed in any::<u64>(),
    ) {
        let model = ModelSpec::new(ModelKind::Linear);
        let sets: Vec<Dataset> = (0..k)
            .map(|i| line_data(&format!("agent-{i}"), slopes[i], &[0.5, 1.0, 1.5]))
            .collect();
        let test = line_data("test", 1.0, &[0.25, 1.25]);
        let mut config = RunConfig::gause_defaults(k).with_schedule(2.0, 400);
        config.principal.beta = beta;
        config.principal.mu = mu;
        config.dynamics.c = c;
        config.seed = seed;
        config.initial = InitialState::Shared { theta: vec![0.0], momentum: Some(vec![0.3]) };
        let record = run(&config, &model, &sets, &test).unwrap();
        let report = verify_bound(&record, beta);
        prop_assert!(report.holds, "{} > {}", report.cumulative_loss, report.bound);
        prop_assert!(report.bound >= 0.0);
        for row in &record.rows {
            let total: f64 = row.pi.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(row.rho.iter().all(|r| (0.0..=1.0).contains(r)));
        }
    }

    #[test]
    fn runs_are_reproducible(seed in any::<u64>(), threads in 1usize..4) {
        let model = ModelSpec::new(ModelKind::Polynomial { degree: 2 });
        let sets = [
            Dataset::new("a", vec![(0.0, 1.0), (1.0, 2.0), (2.0, 5.0)]).unwrap(),
            Dataset::new("b", vec![(-1.0, 2.0), (0.5, 1.2)]).unwrap(),
        ];
        let test = Dataset::new("t", vec![(1.5, 3.2)]).unwrap();
        let mut config = RunConfig::gause_defaults(2).with_schedule(1.0, 300);
        config.seed = seed;
        config.dynamics.c = 0.2;
        let single = run(&config, &model, &sets, &test).unwrap();
        config.threads = threads;
        let pooled = run(&config, &model, &sets, &test).unwrap();
        prop_assert_eq!(single, pooled);
    }
}
