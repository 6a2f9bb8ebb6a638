//! GP, acquisition, proposals and the search loop against direct oracles.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use autoshot::blocks::ArchCode;
use autoshot::search::*;
use autoshot::Error;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn code(genes: [usize; 7]) -> ArchCode {
    ArchCode::from_genes(genes).unwrap()
}

fn theta(seed: u64) -> KernelParams {
    let mut r = rng(seed);
    let mut lambdas = [0.0; 7];
    for l in &mut lambdas {
        *l = r.gen_range(0.05..1.5);
    }
    KernelParams {
        signal_var: r.gen_range(0.05..0.5),
        lambdas,
        noise_var: r.gen_range(1e-3..1e-2),
    }
}

fn random_obs(n: usize, seed: u64) -> Vec<Observation> {
    let mut r = rng(seed);
    let space = SearchSpace::full();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while out.len() < n {
        let a = space.sample(&mut r);
        if seen.insert(a) {
            out.push(Observation {
                arch: a,
                score: r.gen_range(0.0..1.0),
            });
        }
    }
    out
}

/// Kernel written out from the definition.
fn k_oracle(a: &ArchCode, b: &ArchCode, t: &KernelParams) -> f64 {
    let (ga, gb) = (a.genes(), b.genes());
    let mut s = 0.0;
    for g in 0..7 {
        if ga[g] != gb[g] {
            s += t.lambdas[g];
        }
    }
    t.signal_var * (-s).exp()
}

/// Posterior from an explicit inverse of `K + σ²I`.
fn posterior_oracle(obs: &[Observation], t: &KernelParams, mu0: f64, q: &ArchCode) -> (f64, f64) {
    let n = obs.len();
    let k = DMatrix::from_fn(n, n, |i, j| k_oracle(&obs[i].arch, &obs[j].arch, t) + if i == j { t.noise_var } else { 0.0 });
    let kinv = k.try_inverse().unwrap();
    let ks = DVector::from_fn(n, |i, _| k_oracle(&obs[i].arch, q, t));
    let y = DVector::from_fn(n, |i, _| obs[i].score - mu0);
    let mean = mu0 + (ks.transpose() * &kinv * y)[0];
    let var = k_oracle(q, q, t) - (ks.transpose() * &kinv * &ks)[0];
    (mean, var)
}

#[test]
fn hamming_distance_examples() {
    let a = ArchCode::autoshot_f1();
    assert_eq!(hamming_distance(&a, &a), 0);
    let mut g = a.genes();
    for (i, v) in g.iter_mut().enumerate() {
        *v = (*v + 1) % if i < 6 { 16 } else { 5 };
    }
    assert_eq!(hamming_distance(&a, &code(g)), 7);
    let mut g = a.genes();
    g[2] = (g[2] + 3) % 16;
    g[6] = (g[6] + 1) % 5;
    assert_eq!(hamming_distance(&a, &code(g)), 2);
}

#[test]
fn kernel_basic_properties() {
    let t = theta(1);
    let mut r = rng(2);
    for _ in 0..200 {
        let a = ArchCode::sample_uniform(&mut r);
        let b = ArchCode::sample_uniform(&mut r);
        let kab = hamming_kernel(&a, &b, &t).unwrap();
        assert_eq!(hamming_kernel(&a, &a, &t).unwrap(), t.signal_var);
        assert_eq!(kab, hamming_kernel(&b, &a, &t).unwrap());
        assert!(kab > 0.0 && kab <= t.signal_var);
        assert!((kab - k_oracle(&a, &b, &t)).abs() < 1e-15);
    }
}

#[test]
fn equal_weights_make_kernel_a_function_of_distance() {
    let t = KernelParams {
        lambdas: [0.7; 7],
        ..KernelParams::default()
    };
    let mut r = rng(3);
    let mut by_dist = [None; 8];
    for _ in 0..500 {
        let a = ArchCode::sample_uniform(&mut r);
        let mut g = a.genes();
        for (i, v) in g.iter_mut().enumerate() {
            if r.gen_bool(0.5) {
                *v = r.gen_range(0..if i < 6 { 16 } else { 5 });
            }
        }
        let b = code(g);
        let d = hamming_distance(&a, &b);
        let k = hamming_kernel(&a, &b, &t).unwrap();
        match by_dist[d] {
            None => by_dist[d] = Some(k),
            Some(prev) => assert!((prev - k).abs() < 1e-15, "distance {d}: {prev} vs {k}"),
        }
    }
}

#[test]
fn kernel_rejects_negative_weight() {
    let mut t = KernelParams::default();
    t.lambdas[3] = -0.1;
    let a = ArchCode::transnet_v2();
    assert!(matches!(hamming_kernel(&a, &a, &t), Err(Error::InvalidArgument(_))));
}

fn min_eigenvalue(codes: &[ArchCode], t: &KernelParams) -> f64 {
    let n = codes.len();
    let k = DMatrix::from_fn(n, n, |i, j| hamming_kernel(&codes[i], &codes[j], t).unwrap());
    SymmetricEigen::new(k).eigenvalues.min()
}

#[test]
fn kernel_matrices_are_psd() {
    let mut r = rng(4);
    let five: Vec<_> = (0..5).map(|_| ArchCode::sample_uniform(&mut r)).collect();
    assert!(min_eigenvalue(&five, &theta(5)) >= -1e-10);
    for trial in 0..20 {
        let n = r.gen_range(2..=64);
        // include near-duplicates so the matrix is close to singular
        let base = ArchCode::sample_uniform(&mut r);
        let codes: Vec<_> = (0..n)
            .map(|_| {
                let mut g = base.genes();
                let i = r.gen_range(0..7);
                g[i] = r.gen_range(0..if i < 6 { 16 } else { 5 });
                code(g)
            })
            .collect();
        assert!(min_eigenvalue(&codes, &theta(100 + trial)) >= -1e-10, "trial {trial}");
    }
}

#[test]
fn posterior_matches_matrix_inversion() {
    for (n, seed) in [(3, 10), (8, 11), (16, 12), (16, 13)] {
        let obs = random_obs(n, seed);
        let t = theta(seed);
        let m = GpModel::condition(&obs, t, PriorMean::Empirical).unwrap();
        let mu0 = obs.iter().map(|o| o.score).sum::<f64>() / n as f64;
        assert!((m.prior_mean() - mu0).abs() < 1e-15);
        let mut r = rng(seed + 100);
        let queries: Vec<_> = (0..20)
            .map(|_| ArchCode::sample_uniform(&mut r))
            .chain(obs.iter().map(|o| o.arch))
            .collect();
        for q in &queries {
            let (mean, var) = m.posterior(q);
            let (om, ov) = posterior_oracle(&obs, &t, mu0, q);
            assert!((mean - om).abs() < 1e-10, "n={n}: mean {mean} vs {om}");
            assert!((var - ov.max(0.0)).abs() < 1e-10, "n={n}: var {var} vs {ov}");
            assert!(var >= 0.0);
        }
    }
}

#[test]
fn noiseless_single_observation_is_interpolated() {
    let a = ArchCode::autoshot_prec();
    let t = KernelParams {
        noise_var: 0.0,
        ..KernelParams::default()
    };
    let m = GpModel::condition(&[Observation { arch: a, score: 0.83 }], t, PriorMean::Fixed(0.2)).unwrap();
    let (mean, var) = m.posterior(&a);
    assert!((mean - 0.83).abs() < 1e-12);
    assert!(var < 1e-12);
}

#[test]
fn posterior_recovers_prior() {
    let t = KernelParams::default();
    let m = GpModel::condition(&[], t, PriorMean::Fixed(0.3)).unwrap();
    assert_eq!(m.posterior(&ArchCode::transnet_v2()), (0.3, t.signal_var));

    // k(q, every observation) underflows to 0 when every gene differs
    let far = KernelParams {
        lambdas: [1e3; 7],
        ..t
    };
    let obs = [
        Observation {
            arch: code([0, 0, 0, 0, 0, 0, 0]),
            score: 0.9,
        },
        Observation {
            arch: code([1, 1, 1, 1, 1, 1, 1]),
            score: 0.1,
        },
    ];
    let m = GpModel::condition(&obs, far, PriorMean::Empirical).unwrap();
    let (mean, var) = m.posterior(&code([5, 5, 5, 5, 5, 5, 3]));
    assert_eq!(mean, 0.5);
    assert_eq!(var, far.signal_var);
}

#[test]
fn likelihood_gradient_matches_finite_differences() {
    for (n, seed) in [(4, 20), (10, 21), (16, 22)] {
        let obs = random_obs(n, seed);
        let t = theta(seed);
        let l = log_marginal_likelihood(&obs, &t, PriorMean::Empirical).unwrap();
        assert_eq!(l.jitter, 0.0);
        let u = t.to_log();
        let h = 1e-5;
        for i in 0..u.len() {
            let (mut up, mut dn) = (u, u);
            up[i] += h;
            dn[i] -= h;
            let fp = log_marginal_likelihood(&obs, &KernelParams::from_log(&up), PriorMean::Empirical).unwrap().value;
            let fm = log_marginal_likelihood(&obs, &KernelParams::from_log(&dn), PriorMean::Empirical).unwrap().value;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (l.gradient[i] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-5, "n={n} θ[{i}]: analytic {} vs fd {fd} (rel {rel:e})", l.gradient[i]);
        }
    }
}

#[test]
fn likelihood_matches_direct_formula() {
    let obs = random_obs(6, 30);
    let t = theta(30);
    let n = obs.len();
    let mu0 = obs.iter().map(|o| o.score).sum::<f64>() / n as f64;
    let k = DMatrix::from_fn(n, n, |i, j| k_oracle(&obs[i].arch, &obs[j].arch, &t) + if i == j { t.noise_var } else { 0.0 });
    let y = DVector::from_fn(n, |i, _| obs[i].score - mu0);
    let direct = -0.5 * (y.transpose() * k.clone().try_inverse().unwrap() * &y)[0]
        - 0.5 * k.determinant().ln()
        - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    let l = log_marginal_likelihood(&obs, &t, PriorMean::Empirical).unwrap();
    assert!((l.value - direct).abs() < 1e-10, "{} vs {direct}", l.value);
}

#[test]
fn fit_never_loses_likelihood() {
    for seed in 0..5 {
        let obs = random_obs(12, 40 + seed);
        let t0 = KernelParams::default();
        let m = gp_fit(&obs, &t0, &GpConfig::default(), &mut rng(seed)).unwrap();
        let before = log_marginal_likelihood(&obs, &t0, PriorMean::Empirical).unwrap().value;
        let after = log_marginal_likelihood(&obs, m.theta(), PriorMean::Empirical).unwrap().value;
        assert!(after >= before, "seed {seed}: {after} < {before}");
    }
}

#[test]
fn fit_requires_two_observations() {
    let obs = random_obs(1, 50);
    assert!(gp_fit(&obs, &KernelParams::default(), &GpConfig::default(), &mut rng(0)).is_err());
}

#[test]
fn duplicated_equal_observations_shrink_noise() {
    let mut obs = random_obs(5, 60);
    let dup = obs[0];
    obs.push(dup);
    let t0 = KernelParams {
        noise_var: 1e-2,
        ..KernelParams::default()
    };
    let m = gp_fit(&obs, &t0, &GpConfig::default(), &mut rng(1)).unwrap();
    assert!(m.theta().noise_var < 1e-4, "fitted noise {}", m.theta().noise_var);
}

#[test]
fn fit_is_invariant_to_observation_order() {
    let obs = random_obs(10, 70);
    let mut rev = obs.clone();
    rev.reverse();
    let cfg = GpConfig::default();
    let a = gp_fit(&obs, &KernelParams::default(), &cfg, &mut rng(3)).unwrap();
    let b = gp_fit(&rev, &KernelParams::default(), &cfg, &mut rng(3)).unwrap();
    let la = log_marginal_likelihood(&obs, a.theta(), PriorMean::Empirical).unwrap().value;
    let lb = log_marginal_likelihood(&obs, b.theta(), PriorMean::Empirical).unwrap().value;
    assert!((la - lb).abs() < 1e-6 * la.abs().max(1.0), "{la} vs {lb}");
    let q = ArchCode::autoshot_f1();
    assert!((a.posterior(&q).0 - b.posterior(&q).0).abs() < 1e-4);
}

#[test]
fn acquisition_limits() {
    let obs = random_obs(6, 80);
    let m = GpModel::condition(&obs, theta(80), PriorMean::Empirical).unwrap();
    let q = ArchCode::transnet_v2();
    let (mean, _) = m.posterior(&q);
    assert_eq!(acquisition(&m, &q, mean), 0.5);

    let exact = KernelParams {
        noise_var: 0.0,
        ..KernelParams::default()
    };
    let one = [Observation { arch: q, score: 0.9 }];
    let m = GpModel::condition(&one, exact, PriorMean::Fixed(0.0)).unwrap();
    assert!(acquisition(&m, &q, 0.5) > 1.0 - 1e-12);
    assert!(acquisition(&m, &q, 0.95) < 1e-12);
}

#[test]
fn acquisition_is_monotone_in_mean() {
    let t = KernelParams::default();
    let mut last = -1.0;
    for k in 0..50 {
        let m = GpModel::prior(t, -1.0 + 0.04 * k as f64).unwrap();
        let v = acquisition(&m, &ArchCode::transnet_v2(), 0.2);
        assert!(v >= last);
        last = v;
    }
}

#[test]
fn acquisition_matches_monte_carlo() {
    let obs = random_obs(8, 90);
    let m = GpModel::condition(&obs, theta(90), PriorMean::Empirical).unwrap();
    let best = obs.iter().map(|o| o.score).fold(0.0, f64::max);
    let mut r = rng(91);
    for _ in 0..3 {
        let q = ArchCode::sample_uniform(&mut r);
        let (mean, var) = m.posterior(&q);
        let p = acquisition(&m, &q, best);
        let draws = 1_000_000;
        let hits = (0..draws)
            .filter(|_| mean + var.sqrt() * r.sample::<f64, _>(StandardNormal) > best)
            .count();
        let est = hits as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt().max(1e-9);
        assert!((est - p).abs() <= 3.0 * se + 1e-9, "Φ {p} vs MC {est} (se {se})");
    }
}

#[test]
fn constant_shift_keeps_acquisition() {
    let obs = random_obs(10, 95);
    let t = theta(95);
    let shifted: Vec<_> = obs
        .iter()
        .map(|o| Observation {
            arch: o.arch,
            score: o.score + 0.37,
        })
        .collect();
    let a = GpModel::condition(&obs, t, PriorMean::Empirical).unwrap();
    let b = GpModel::condition(&shifted, t, PriorMean::Empirical).unwrap();
    let best = obs.iter().map(|o| o.score).fold(0.0, f64::max);
    let mut r = rng(96);
    let cands: Vec<_> = (0..300).map(|_| ArchCode::sample_uniform(&mut r)).collect();
    let argmax = |m: &GpModel, best: f64| {
        cands
            .iter()
            .map(|c| acquisition(m, c, best))
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap()
    };
    let (ia, va) = argmax(&a, best);
    let (ib, vb) = argmax(&b, best + 0.37);
    assert_eq!(ia, ib);
    assert!((va - vb).abs() < 1e-9);
}

#[test]
fn proposals_are_distinct_and_unexplored() {
    let mut r = rng(100);
    let obs = random_obs(30, 100);
    let explored: HashSet<_> = obs.iter().map(|o| o.arch).collect();
    let m = gp_fit(&obs, &KernelParams::default(), &GpConfig::default(), &mut r).unwrap();
    let p = propose_batch(Some(&m), &SearchSpace::full(), 48, &explored, &ProposeOptions::default(), &mut r).unwrap();
    assert_eq!(p.codes.len(), 48);
    assert!(!p.exhausted);
    let set: HashSet<_> = p.codes.iter().collect();
    assert_eq!(set.len(), 48);
    assert!(p.codes.iter().all(|c| !explored.contains(c)));
    assert!(p.acquisitions.iter().all(|a| a.is_some_and(|v| (0.0..=1.0).contains(&v))));
    // ranked by acquisition
    assert!(p.acquisitions.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn proposals_are_deterministic() {
    let explored = HashSet::new();
    let go = |seed| propose_batch(None, &SearchSpace::full(), 48, &explored, &ProposeOptions::default(), &mut rng(seed)).unwrap();
    assert_eq!(go(5), go(5));
    assert_ne!(go(5).codes, go(6).codes);
    assert!(go(5).acquisitions.iter().all(Option::is_none));
}

#[test]
fn initial_batches_are_uniform() {
    // each gene value of a random batch appears with its uniform frequency
    let space = SearchSpace::full();
    let opts = ProposeOptions {
        pool_size: 2000,
        ..ProposeOptions::default()
    };
    let mut counts = vec![[0usize; 16]; 7];
    let mut r = rng(7);
    let batches = 100;
    for _ in 0..batches {
        let p = propose_batch(None, &space, 200, &HashSet::new(), &opts, &mut r).unwrap();
        for c in &p.codes {
            for (g, v) in c.genes().iter().enumerate() {
                counts[g][*v] += 1;
            }
        }
    }
    let n = (batches * 200) as f64;
    for (g, row) in counts.iter().enumerate() {
        let k = if g < 6 { 16 } else { 5 };
        let e = n / k as f64;
        let chi2: f64 = row[..k].iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99.9% quantiles for 15 and 4 degrees of freedom
        let crit = if k == 16 { 37.70 } else { 18.47 };
        assert!(chi2 < crit, "gene {g}: χ² {chi2}");
    }
}

#[test]
fn small_space_reports_exhaustion() {
    let space = SearchSpace {
        base: ArchCode::transnet_v2(),
        free: [false, false, false, false, false, false, true],
    };
    assert_eq!(space.size(), 5);
    let explored: HashSet<_> = space.enumerate(10).unwrap().into_iter().take(2).collect();
    let p = propose_batch(None, &space, 4, &explored, &ProposeOptions::default(), &mut rng(0)).unwrap();
    assert!(p.exhausted);
    assert_eq!(p.codes.len(), 3);
}

fn table(seed: u64) -> TableObjective {
    TableObjective::additive(SearchSpace::reduced(ArchCode::transnet_v2()), 0.3, &mut rng(seed)).unwrap()
}

fn small_cfg(seed: u64) -> SearchConfig {
    SearchConfig {
        epochs: 6,
        init_epochs: 2,
        population: 8,
        seed,
        ..SearchConfig::default()
    }
}

#[test]
fn search_phases_and_monotone_best() {
    let t = table(1);
    let out = search(t.space(), |a| t.score(a), &small_cfg(1), &[], None).unwrap();
    assert_eq!(out.history.len(), 48);
    for e in &out.history {
        let want = if e.epoch < 2 { Phase::Init } else { Phase::Bo };
        assert_eq!(e.phase, want);
        assert_eq!(e.acquisition.is_some(), e.phase == Phase::Bo);
    }
    assert_eq!(out.best_so_far.len(), 6);
    assert!(out.best_so_far.windows(2).all(|w| w[0] <= w[1]));
    let best = out.best.unwrap();
    let max = out.history.iter().map(|e| e.score).fold(0.0, f64::max);
    assert_eq!(best.score, max);
    let distinct: HashSet<_> = out.history.iter().map(|e| e.arch.clone()).collect();
    assert_eq!(distinct.len(), 48);
}

#[test]
fn failing_evaluations_score_zero() {
    let t = table(2);
    let bad = ArchCode::from_genes([0, 0, 0, 0, 0, 0, 0]).unwrap();
    let eval = |a: &ArchCode| {
        if a.genes()[0] % 2 == 1 {
            Err(Error::Numerical("boom".into()))
        } else if a.genes()[6] == 4 {
            Ok(1.5)
        } else {
            t.score(a)
        }
    };
    let out = search(t.space(), eval, &small_cfg(2), &[], None).unwrap();
    let _ = bad;
    for e in &out.history {
        let a: ArchCode = e.arch.parse().unwrap();
        if a.genes()[0] % 2 == 1 {
            assert_eq!(e.score, 0.0);
            assert!(e.error.as_deref().unwrap().contains("boom"));
        } else if a.genes()[6] == 4 {
            assert_eq!(e.score, 0.0);
            assert!(e.error.as_deref().unwrap().contains("outside"));
        } else {
            assert!(e.error.is_none());
        }
    }
}

#[test]
fn search_is_deterministic_and_parallel_safe() {
    let t = table(3);
    let a = search(t.space(), |c| t.score(c), &small_cfg(3), &[], None).unwrap();
    let b = search(
        t.space(),
        |c| t.score(c),
        &SearchConfig {
            jobs: 3,
            ..small_cfg(3)
        },
        &[],
        None,
    )
    .unwrap();
    assert_eq!(a.history, b.history);
}

#[test]
fn history_resumes_without_reevaluating() {
    let t = table(4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.jsonl");
    let calls = AtomicUsize::new(0);
    let eval = |c: &ArchCode| {
        calls.fetch_add(1, Ordering::SeqCst);
        t.score(c)
    };
    let full = search(t.space(), eval, &small_cfg(4), &[], None).unwrap();
    calls.store(0, Ordering::SeqCst);

    // interrupted run: 3 epochs plus part of the fourth
    {
        let (mut log, prior) = HistoryLog::open(&path).unwrap();
        assert!(prior.is_empty());
        let partial = SearchConfig {
            epochs: 3,
            ..small_cfg(4)
        };
        search(t.space(), eval, &partial, &[], Some(&mut log)).unwrap();
        for e in &full.history[24..29] {
            log.append(e).unwrap();
        }
    }
    calls.store(0, Ordering::SeqCst);
    let (mut log, prior) = HistoryLog::open(&path).unwrap();
    assert_eq!(prior.len(), 29);
    let resumed = search(t.space(), eval, &small_cfg(4), &prior, Some(&mut log)).unwrap();
    assert_eq!(calls.load(Ordering::SeqCst), 48 - 29);
    assert_eq!(resumed.history, full.history);
    assert_eq!(read_history(&path).unwrap(), full.history);

    let lines = std::fs::read_to_string(&path).unwrap();
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    for key in ["epoch", "arch", "score", "acquisition", "phase"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn mismatched_history_is_rejected() {
    let t = table(5);
    let out = search(t.space(), |c| t.score(c), &small_cfg(5), &[], None).unwrap();
    let err = search(t.space(), |c| t.score(c), &small_cfg(6), &out.history, None).unwrap_err();
    assert!(matches!(err, Error::Format(_)), "{err}");
}

#[test]
fn table_objective_is_normalised_with_known_optimum() {
    let t = table(6);
    assert_eq!(t.len(), 1280);
    let all = t.space().enumerate(2000).unwrap();
    let best = all.iter().max_by(|a, b| t.score(a).unwrap().total_cmp(&t.score(b).unwrap())).unwrap();
    assert_eq!(*best, t.optimum());
    assert_eq!(t.score(best).unwrap(), 1.0);
    assert!(all.iter().all(|a| (0.0..=1.0).contains(&t.score(a).unwrap())));
    assert!(t.score(&ArchCode::autoshot_prec()).is_err());
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

#[test]
fn bo_beats_exhaustive_and_random_search_on_table() {
    let (mut bo, mut rnd) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let t = table(1000 + seed);
        let mut cfg = SearchConfig {
            epochs: 160,
            init_epochs: 1,
            population: 8,
            seed,
            target_score: Some(1.0),
            ..SearchConfig::default()
        };
        let o = search(t.space(), |a| t.score(a), &cfg, &[], None).unwrap();
        bo.push(evaluations_to(&o.history, &t.optimum()).unwrap());
        cfg.propose.acquisition = AcquisitionKind::Constant;
        let o = search(t.space(), |a| t.score(a), &cfg, &[], None).unwrap();
        rnd.push(evaluations_to(&o.history, &t.optimum()).unwrap());
    }
    let (mb, mr) = (median(bo), median(rnd));
    assert!(mb <= 0.4 * 1280.0, "BO median {mb}");
    assert!(mb < mr, "BO median {mb} vs random {mr}");
}
