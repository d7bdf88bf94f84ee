use hogwild_core::data::parse_str;
use hogwild_core::engine::{run_sequential, FilterMode, RunSpec, SeqMode};
use hogwild_core::harness::{self, parse_override, RunConfig};
use hogwild_core::objectives::{Loss, Objective};
use hogwild_core::schedules::{
    classic_schedule, hogwild_schedule, power_schedule, stepped_schedule, theorem_sgd_schedule, AlphaRule,
    StepSchedule,
};
use hogwild_core::theory::{
    c_of_t, coordinate_update_count, hogwild_bound, m_of_t, n_of_t, theorem2_bound, thresholds, SparsityStats,
};

/// `C' = n(n − C)`, `C(0) = 0`, by classical RK4 with step `h`. `n` is
/// sampled left-continuously at multiples of `h` so jumps that fall on the
/// grid do not leak into the preceding step.
fn c_by_ode(s: &StepSchedule, mu: f64, t_end: f64, h: f64) -> f64 {
    let steps = (t_end / h).round() as usize;
    let mut c = 0.0;
    for k in 0..steps {
        let t = k as f64 * h;
        let f = |u: f64, c: f64| {
            let n = n_of_t(s, mu, u.min(t + h * (1.0 - 1e-9)));
            n * (n - c)
        };
        let k1 = f(t, c);
        let k2 = f(t + h / 2.0, c + h / 2.0 * k1);
        let k3 = f(t + h / 2.0, c + h / 2.0 * k2);
        let k4 = f(t + h, c + h * k3);
        c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    c
}

#[test]
fn c_of_t_agrees_with_ode_oracle() {
    let cases = [
        (power_schedule(0.5, 4.0, 1.0).unwrap(), 1.0),
        (power_schedule(0.75, 2f64.powf(4.0 / 3.0), 1.0).unwrap(), 1.0),
        (classic_schedule(0.4, 10.0, 1.0).unwrap(), 0.5),
        (theorem_sgd_schedule(0.2, 1.0, 2.0, false).unwrap(), 0.2),
    ];
    for (s, mu) in cases {
        for t in [5.0, 200.0, 1500.0] {
            let ode = c_by_ode(&s, mu, t, 1e-2);
            let quad = c_of_t(&s, mu, t).unwrap();
            assert!((ode - quad).abs() <= 1e-7 * ode.abs().max(1e-12), "{s:?} t={t}: {ode} vs {quad}");
        }
    }
}

#[test]
fn stepped_schedule_integrals() {
    // E = 8: blocks t + 8 ∈ [8,16), [16,32), … with η = 4/(μ 2^h)
    let s = stepped_schedule(0.5, 8.0).unwrap();
    let m = m_of_t(&s, 0.5, 24.0).unwrap();
    let expected = 0.5 * (8.0 * 4.0 / (0.5 * 8.0) + 16.0 * 4.0 / (0.5 * 16.0));
    assert!((m - expected).abs() < 1e-12);
    // on a block boundary grid the ODE oracle with a dividing step is exact to RK4 order
    let ode = c_by_ode(&s, 0.5, 56.0, 1e-3);
    let quad = c_of_t(&s, 0.5, 56.0).unwrap();
    assert!((ode - quad).abs() <= 1e-7 * ode);
}

#[test]
fn bound_column_matches_theory() {
    let text = "synthetic = \"least_squares\"\nobjective = \"least_squares\"\nsyn_dim = 5\nsyn_mu = 0.2\niterations = 4000\nrecord_every = 400\nseeds = [1, 2]\n";
    let ov = |k: &str| vec![parse_override(k).unwrap(), parse_override("engine=seq").unwrap()];

    let cfg = RunConfig::from_toml_str(text, &[ov("bound=theorem2"), vec![parse_override("schedule=theorem_sgd").unwrap()]].concat()).unwrap();
    let out = harness::run_config(&cfg).unwrap();
    let c = &out.constants;
    let dist0: f64 = c.w_star.as_ref().unwrap().iter().map(|x| x * x).sum();
    for r in &out.rows {
        assert_eq!(r.bound, Some(theorem2_bound(r.t as f64, c.mu, c.l, c.noise.unwrap(), dist0)));
    }

    let cfg = RunConfig::from_toml_str(text, &[parse_override("bound=hogwild").unwrap(), parse_override("D=2").unwrap()]).unwrap();
    let out = harness::run_config(&cfg).unwrap();
    let c = &out.constants;
    let e = (4.0 * c.l * 4.0 * 2.0 / c.mu).max(0.0);
    for r in &out.rows {
        assert_eq!(r.bound, Some(hogwild_bound(r.t as f64, 4.0, c.mu, c.noise.unwrap(), 2.0, e)));
    }
}

#[test]
fn threshold_fallback_for_streaming() {
    // with Δ = 1 (no finite-sum information) T₀ = exp(2(1 + (L+μ)α/μ))
    let (t0, _) = thresholds(4.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.0);
    assert!((t0.ln() - 2.0 * (1.0 + 1.5 * 4.0 / 0.5)).abs() < 1e-12);
    let (sparse, _) = thresholds(4.0, 0.5, 1.0, 1.0, 1.0, 0.01, 0.0);
    assert!(sparse < t0);
}

#[test]
fn update_counts_track_expectation() {
    let text = "1 1:1 2:1 3:1 4:1 5:1\n-1 2:1 3:1\n1 3:1 6:1 7:1\n-1 1:2 7:1\n1 3:1\n-1 2:1 4:1 6:1 8:1\n";
    let ds = parse_str(text, None).unwrap();
    let obj = Objective::new(Loss::Logistic, ds, 0.1).unwrap();
    let d = 2;
    let stats = SparsityStats::of_dataset(obj.data(), d).unwrap();
    let s = hogwild_schedule(0.05, obj.estimate_l(), d, 0, 4.0, AlphaRule::Constant(4.0), false).unwrap();
    let mut spec = RunSpec::new(&obj, s, 200_000, 5);
    spec.filter = FilterMode::Partition(d);
    spec.record_every = 50_000;
    let tr = run_sequential(&spec, SeqMode::Filtered).unwrap();
    let counts = coordinate_update_count(&tr, &stats);
    let last = counts.last().unwrap();
    assert!(last.exact_mean <= last.expected);
    let rel = (last.actual as f64 - last.exact_mean).abs() / last.exact_mean;
    assert!(rel < 0.01, "{last:?}");
}
