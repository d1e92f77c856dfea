#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use curforge::curriculum::{one_class_tasks, Curriculum, TaskSpec};
use curforge::data::{generate_synthetic, planted_geometry, Dataset, Example, Split, SyntheticSpec};
use curforge::designer::{random_rank, rank_all, score_order};
use curforge::distance::{build_distance_matrix, compute_prototype, Metric};
use curforge::learner::{
    adam_step, consolidate_ewc, evaluate, forward, loss_and_grad, masked_softmax, run_curriculum,
    update_replay_buffer, AdamState, BufferPolicy, HeadParams, Init, ReplayBuffer, RunSeeds, StrategyConfig,
    StrategyState, TrainConfig,
};
use curforge::metrics::{two_sample_ttest, TTestKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn staged_scores_match_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [2, 3, 4, 6] {
        for _ in 0..10 {
            let d = random_normalized(n, &mut rng);
            for order in permutations(n) {
                assert_eq!(score_order(&order, &d).unwrap().s, direct_score(&order, &d));
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for reg in [Reg::None, Reg::Ewc, Reg::Lwf] {
        for _ in 0..30 {
            let (h, batch, seen, state) = random_config(reg, &mut rng);
            let err = max_fd_error(&h, &batch, &seen, &state);
            assert!(err < 1e-4, "{reg:?}: relative error {err}");
        }
    }
}

#[test]
fn forward_matches_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..50 {
        let (n, dim) = (rng.random_range(1..8), rng.random_range(1..8));
        let h = random_head(n, dim, &mut rng);
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = forward(&h, &x).unwrap();
        for k in 0..n {
            let mut z = h.b[k];
            for j in 0..dim {
                z += h.w[k * dim + j] * x[j];
            }
            assert!((got[k] - z).abs() < 1e-12);
        }
    }
}

#[test]
fn fisher_matches_per_example_accumulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let (h, batch, seen, _) = random_config(Reg::None, &mut rng);
        let anchor = consolidate_ewc(&h, &batch, &seen, 2.0).unwrap();
        let mut fisher = vec![0.0; h.len()];
        for ex in &batch {
            let mut z = vec![0.0; h.n_classes];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = h.b[k] + (0..h.dim).map(|j| h.w[k * h.dim + j] * ex.features[j]).sum::<f64>();
            }
            let zmax = (0..h.n_classes).filter(|&k| seen[k]).map(|k| z[k]).fold(f64::MIN, f64::max);
            let denom: f64 = (0..h.n_classes).filter(|&k| seen[k]).map(|k| (z[k] - zmax).exp()).sum();
            for k in 0..h.n_classes {
                let p = if seen[k] { (z[k] - zmax).exp() / denom } else { 0.0 };
                let dz = p - if k == ex.label { 1.0 } else { 0.0 };
                for j in 0..h.dim {
                    fisher[k * h.dim + j] += (dz * ex.features[j]).powi(2) / batch.len() as f64;
                }
                fisher[h.n_classes * h.dim + k] += dz * dz / batch.len() as f64;
            }
        }
        for (a, b) in anchor.fisher.iter().zip(&fisher) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(anchor.theta, h);
    }
}

#[test]
fn masked_softmax_ignores_unseen_logits() {
    let p = masked_softmax(&[1.0, 100.0, 2.0], &[true, false, true], 1.0);
    assert_eq!(p[1], 0.0);
    let e = 1.0f64.exp();
    assert!((p[2] - 1.0 / (1.0 + 1.0 / e)).abs() < 1e-12);
}

#[test]
fn reservoir_inclusion_is_uniform() {
    let (population, capacity, trials) = (50, 10, 4000);
    let data: Vec<Example> = (0..population)
        .map(|i| Example {
            features: vec![i as f64],
            label: 0,
        })
        .collect();
    let mut hits = vec![0usize; population];
    for seed in 0..trials {
        let mut buf = ReplayBuffer::global(capacity);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // offered in two chunks, as across a task boundary
        update_replay_buffer(&mut buf, &data[..20], &mut rng);
        update_replay_buffer(&mut buf, &data[20..], &mut rng);
        assert_eq!(buf.items.len(), capacity);
        for ex in &buf.items {
            hits[ex.features[0] as usize] += 1;
        }
    }
    let p = capacity as f64 / population as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    for (i, &h) in hits.iter().enumerate() {
        let freq = h as f64 / trials as f64;
        assert!((freq - p).abs() < 3.0 * se, "example {i}: {freq} vs {p}");
    }
}

#[test]
fn random_ranks_are_uniform() {
    let curricula: Vec<Curriculum> = permutations(4)
        .iter()
        .map(|o| Curriculum::from_order(&one_class_tasks(4), o))
        .collect();
    let n = curricula.len();
    let seeds = 100;
    let mut rank_sum = vec![0.0; n];
    for seed in 0..seeds {
        let r = random_rank(&curricula, seed).unwrap();
        for (pos, e) in r.entries.iter().enumerate() {
            let i = curricula.iter().position(|c| *c == e.curriculum).unwrap();
            rank_sum[i] += (pos + 1) as f64;
        }
    }
    let nf = n as f64;
    let expected = (nf + 1.0) / 2.0;
    let se = ((nf * nf - 1.0) / 12.0 / seeds as f64).sqrt();
    for (i, s) in rank_sum.iter().enumerate() {
        let mean = s / seeds as f64;
        assert!((mean - expected).abs() < 3.0 * se, "curriculum {i}: mean rank {mean}");
    }
}

#[test]
fn sampled_prototype_is_near_the_center() {
    let center = [1.0, -2.0, 0.5, 3.0];
    let sigma = 0.7;
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let draws: Vec<Vec<f64>> = (0..1000)
        .map(|_| center.iter().map(|c| c + normal.sample(&mut rng)).collect())
        .collect();
    let p = compute_prototype(0, &draws, 500, 99).unwrap();
    assert_eq!(p.sample_count, 500);
    let se = sigma / 500f64.sqrt();
    for (m, c) in p.mean.iter().zip(center) {
        assert!((m - c).abs() < 5.0 * se);
    }
}

#[test]
fn synthetic_class_means_match_planted_centers() {
    let spec = planted_geometry("hub-twin", 8, 0.5, 3).unwrap();
    let data = generate_synthetic("t", &spec, 400, 100).unwrap();
    for (k, center) in spec.centers.iter().enumerate() {
        let xs = &data.train[k];
        let se = spec.spread[k] / (xs.len() as f64).sqrt();
        for (j, c) in center.iter().enumerate() {
            let mean = xs.iter().map(|x| x[j]).sum::<f64>() / xs.len() as f64;
            assert!((mean - c).abs() < 5.0 * se, "class {k} dim {j}");
        }
    }
}

fn hub_twin_top(seed: u64) -> Vec<usize> {
    let spec = planted_geometry("hub-twin", 8, 0.5, seed).unwrap();
    let data = generate_synthetic("t", &spec, 200, 50).unwrap();
    let protos: Vec<_> = (0..5)
        .map(|k| compute_prototype(k, &data.train[k], usize::MAX, 0).unwrap())
        .collect();
    let d = build_distance_matrix(&protos, Metric::Cosine, true).unwrap();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for order in permutations(5) {
        let s = direct_score(&order, &d);
        if s > best.0 {
            best = (s, order);
        }
    }
    let ranked = rank_all(&one_class_tasks(5), &d, 1000).unwrap();
    assert_eq!(ranked.entries[0].score, best.0);
    best.1
}

#[test]
fn hub_twin_designer_top_starts_with_hub_and_ends_with_twin() {
    for seed in 0..5 {
        let top = hub_twin_top(seed);
        assert_eq!(top[0], 0, "seed {seed}: {top:?}");
        assert!(matches!(top[4], 3 | 4), "seed {seed}: {top:?}");
    }
}

#[test]
fn ttest_matches_quadrature_on_worked_example() {
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let ys = [2.0, 3.0, 4.0, 5.0, 6.0];
    for kind in [TTestKind::Welch, TTestKind::Pooled] {
        let r = two_sample_ttest(&xs, &ys, kind).unwrap();
        assert!((r.t - -1.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p - t_two_sided_quadrature(r.t, r.df)).abs() < 1e-6);
    }
}

fn two_class_dataset(centers: [[f64; 3]; 2], spread: f64, seed: u64) -> Dataset {
    let spec = SyntheticSpec {
        centers: centers.iter().map(|c| c.to_vec()).collect(),
        spread: vec![spread; 2],
        seed,
    };
    generate_synthetic("pair", &spec, 300, 200).unwrap()
}

#[test]
fn indistinguishable_classes_sit_at_chance() {
    let seen = [true, true];
    for seed in 0..5 {
        let data = two_class_dataset([[1.0, 0.5, -0.5], [1.0, 0.5, -0.5]], 1.0, seed);
        let mut train = data.task_examples(&TaskSpec::new([0, 1]), Split::Train);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        train.shuffle(&mut rng);
        let mut h = HeadParams::init(2, 3, Init::default(), seed);
        let mut st = AdamState::new(&h, 1e-2);
        for chunk in train.chunks(32) {
            let batch: Vec<&Example> = chunk.iter().collect();
            let (_, g) = loss_and_grad(&h, &batch, &seen, &StrategyState::Vanilla).unwrap();
            adam_step(&mut h, &g, &mut st).unwrap();
        }
        let test = data.task_examples(&TaskSpec::new([0, 1]), Split::Test);
        let overall = evaluate(&h, &test, &seen);
        assert!((overall - 0.5).abs() < 0.1, "seed {seed}: accuracy {overall}");
        // the head cannot tell the classes apart, so whatever it predicts for
        // one class it predicts for the other: per-class accuracies sum to 1
        let per_class: Vec<f64> = (0..2)
            .map(|k| evaluate(&h, &data.task_examples(&TaskSpec::single(k), Split::Test), &seen))
            .collect();
        assert!((per_class[0] + per_class[1] - 1.0).abs() < 0.15, "seed {seed}: {per_class:?}");
    }
}

#[test]
fn full_replay_retains_more_than_vanilla() {
    let data = two_class_dataset([[3.0, 0.0, 0.0], [0.0, 3.0, 0.0]], 0.5, 7);
    let curriculum = Curriculum::from_order(&one_class_tasks(2), &[0, 1]);
    let cfg = TrainConfig {
        lr: 1e-2,
        ..TrainConfig::default()
    };
    let seeds = RunSeeds { seed: 4, stream: 9 };
    let run = |s: &StrategyConfig| run_curriculum(&data, &curriculum, "x", s, &cfg, seeds).unwrap();
    let vanilla = run(&StrategyConfig::Vanilla);
    let replay = run(&StrategyConfig::replay(1.0, BufferPolicy::GlobalFixed));
    assert!(replay.alpha > vanilla.alpha, "{} vs {}", replay.alpha, vanilla.alpha);
}
