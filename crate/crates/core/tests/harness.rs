use hogwild_core::harness::{
    self, emit_csv, least_squares_problem, parse_csv, parse_override, LeastSquaresSpec, RunConfig, TwoFunction,
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[test]
fn least_squares_constants_match_hessian() {
    let spec = LeastSquaresSpec {
        dim: 7,
        mu: 0.08,
        l: 1.5,
        delta: 0.3,
        rotate: true,
        seed: 11,
    };
    let p = least_squares_problem(&spec).unwrap();
    let obj = &p.objective;
    let c = &p.constants;
    let d = obj.dim();
    let n = obj.n() as f64;

    // full Hessian of the mean of (x·w − y)² and per-component curvature 2‖x‖²
    let mut h = vec![vec![0.0; d]; d];
    let mut max_component = 0.0f64;
    for ex in obj.data().examples() {
        let mut x = vec![0.0; d];
        for (&j, &v) in ex.indices.iter().zip(&ex.values) {
            x[j] = v;
        }
        for i in 0..d {
            for j in 0..d {
                h[i][j] += 2.0 * x[i] * x[j] / n;
            }
        }
        max_component = max_component.max(2.0 * x.iter().map(|v| v * v).sum::<f64>());
    }
    let ev = jacobi_eigenvalues(h);
    assert!((ev[0] - c.mu).abs() < 1e-10, "{} vs {}", ev[0], c.mu);
    assert!((ev[0] - spec.mu).abs() < 1e-10);
    assert!((max_component - c.l).abs() < 1e-10);
    assert!(obj.estimate_l() >= c.l * (1.0 - 1e-12));

    let w_star = c.w_star.as_ref().unwrap();
    let g = obj.full_grad(w_star).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-12));
    let f = obj.full_objective(w_star).unwrap();
    assert!((f - c.f_star.unwrap()).abs() < 1e-12);
    assert!((f - spec.delta * spec.delta).abs() < 1e-12);
    let second: f64 = (0..obj.n())
        .map(|i| obj.component_grad(w_star, i).unwrap().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / n;
    assert!((2.0 * second - c.noise.unwrap()).abs() < 1e-10);
}

#[test]
fn two_function_sgd_converges_with_unbounded_gradients() {
    let f = TwoFunction;
    // w∗ is the stationary point of the mean
    assert_eq!(f.grad(TwoFunction::W_STAR), 0.0);
    let at_star = (f.component_grad(0, -1.0).powi(2) + f.component_grad(1, -1.0).powi(2)) / 2.0;
    assert_eq!(2.0 * at_star, TwoFunction::NOISE);
    assert!(f.second_moment(1e3) > 1e5);

    let eta = |t: u64| 2.0 / (TwoFunction::MU * (t as f64 + 4.0 * TwoFunction::L / TwoFunction::MU));
    let runs = 200;
    let mut mean_sq = 0.0;
    for seed in 0..runs {
        let path = f.sgd_path(50.0, 20_000, eta, seed);
        mean_sq += (path.last().unwrap() - TwoFunction::W_STAR).powi(2) / runs as f64;
    }
    // the SGD bound 16N/μ²/(t + E) with E = 8 evaluates to about 6.4e-3 here
    let bound = 16.0 * TwoFunction::NOISE / TwoFunction::MU.powi(2) / (20_000.0 + 8.0);
    assert!(mean_sq < bound, "{mean_sq} vs {bound}");
}

fn sweep_config() -> RunConfig {
    let text = "synthetic = \"sparse_logistic\"\nobjective = \"logistic\"\nlambda = 0.01\nsyn_n = 300\nsyn_dim = 12\nsyn_nnz = 4\nengine = \"delay_sim\"\nepochs = 3\nrecord_every = 300\nseeds = [0, 1]\nsweep = \"fractions\"\nbound = \"hogwild\"\n";
    RunConfig::from_toml_str(text, &[]).unwrap()
}

#[test]
fn fraction_sweep_runs_end_to_end() {
    let cfg = sweep_config();
    let grid = cfg.expand_sweep();
    assert_eq!(grid.len(), 6);
    let dir = tempfile::tempdir().unwrap();
    for (label, c) in &grid {
        assert_eq!(c.tau, 10);
        let out = harness::run_config(c).unwrap();
        assert_eq!(out.rows.len(), 4);
        harness::write_run(dir.path(), label, c, &out).unwrap();
        for suffix in [".csv", "_seeds.csv", "_meta.toml"] {
            assert!(dir.path().join(format!("{label}{suffix}")).exists());
        }
    }
    // smaller fractions write fewer coordinates per iteration
    let t_prime = |label: &str| {
        let text = std::fs::read_to_string(dir.path().join(format!("{label}.csv"))).unwrap();
        parse_csv(&text).unwrap().last().unwrap().t_prime
    };
    assert!(t_prime("v1_4") < t_prime("v1_2"));
    assert!(t_prime("v1_2") < t_prime("v1"));
}

#[test]
fn csv_file_round_trips() {
    let cfg = RunConfig::from_toml_str(
        "synthetic = \"least_squares\"\nobjective = \"least_squares\"\niterations = 2000\nrecord_every = 250\nseeds = [3, 4, 5]\n",
        &[parse_override("bound=hogwild").unwrap()],
    )
    .unwrap();
    let out = harness::run_config(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested").join("run.csv");
    emit_csv(&out.rows, &path).unwrap();
    let back = parse_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back, out.rows);
}
