mod common;

use common::{clustered_set, orthogonal, uniform};
use itm_core::dva::{DvaConfig, IterationMode};
use itm_core::embedstore::{synth_generate, EmbeddingSet, SynthSpec};
use itm_core::metrics::{left_singular_similarity, wz_similarity};
use itm_core::pipeline::{score_embedding_set, PipelineConfig};
use itm_core::pseudocluster::{generate_centers, CenterScheme, PseudoClusters};
use itm_core::rng;
use itm_core::trainer::{evaluate_score, forward_batch, init_state, EvalMode, ItmModelState};
use ndarray::Array1;
use rand::seq::SliceRandom;

fn single_synth(classes: usize, dim: usize, per_class: usize, sep: f64, noise: f64, seed: u64) -> EmbeddingSet {
    let spec = SynthSpec {
        num_models: 1,
        num_classes: classes,
        dim,
        samples_per_class: per_class,
        separability_range: (sep, sep),
        noise_sigma: noise,
    };
    synth_generate(&spec, seed).unwrap().remove(0).set
}

fn config(mode: EvalMode, iterations: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.train.eval_mode = mode;
    cfg.train.iterations = iterations;
    cfg.train.eval_every = iterations.min(100);
    cfg
}

#[test]
fn separable_data_scores_near_one() {
    let set = single_synth(5, 16, 100, 10.0, 0.01, 1);
    for mode in [EvalMode::EvolvedWithLabels, EvalMode::StaticLogits] {
        let (report, _) = score_embedding_set(&set, &config(mode, 500)).unwrap();
        assert!(report.best_score >= 0.99, "{mode}: {}", report.best_score);
        assert_eq!(report.history.len(), 5);
    }
}

#[test]
fn shuffled_labels_score_near_chance() {
    let set = single_synth(5, 16, 200, 5.0, 1.0, 2);
    let mut labels = set.labels().to_vec();
    labels.shuffle(&mut rng::seeded(2, 0));
    let shuffled = EmbeddingSet::new("shuffled", set.features().to_owned(), labels, 5).unwrap();
    for mode in [EvalMode::EvolvedWithLabels, EvalMode::StaticLogits] {
        let (report, _) = score_embedding_set(&shuffled, &config(mode, 500)).unwrap();
        assert!(report.best_score <= 0.2 + 0.1, "{mode}: {}", report.best_score);
    }
}

#[test]
fn scoring_is_deterministic_per_seed() {
    let set = clustered_set(3, 6, 40, 2.0, 1.0, 3);
    let cfg = config(EvalMode::EvolvedWithLabels, 60);
    let (a, sa) = score_embedding_set(&set, &cfg).unwrap();
    let (b, sb) = score_embedding_set(&set, &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(sa, sb);
    let mut other = cfg.clone();
    other.train.seed = 1;
    assert_ne!(score_embedding_set(&set, &other).unwrap().1, sa);
}

fn rotated(state: &ItmModelState, centers: &PseudoClusters, seed: u64) -> (ItmModelState, PseudoClusters) {
    let r = orthogonal(state.latent_dim(), seed);
    let mut s = state.clone();
    s.w_z = state.w_z.dot(&r);
    s.b_z = state.b_z.dot(&r);
    s.w_h = r.t().dot(&state.w_h);
    let c = PseudoClusters::from_matrix(centers.centers().dot(&r), centers.scheme()).unwrap();
    (s, c)
}

#[test]
fn rotating_latent_space_and_head_leaves_scores_unchanged() {
    for trial in 0..60u64 {
        let classes = 2 + trial as usize % 4;
        let d_c = classes + trial as usize % 3;
        let set = clustered_set(classes, 6, 12, 1.5, 1.0, trial);
        let mut state = init_state(6, d_c, classes, trial);
        state.b_z = Array1::from_iter(uniform(1, d_c, trial).iter().copied());
        state.b_h = Array1::from_iter(uniform(1, classes, trial + 1).iter().copied());
        let scheme = CenterScheme::ALL[trial as usize % 4];
        let centers = generate_centers(classes, d_c, scheme, trial).unwrap();
        let (rs, rc) = rotated(&state, &centers, trial);
        let dva = DvaConfig { batch_size: 1 + trial as usize % 20, ..DvaConfig::default() };
        let n = 5 + trial as usize % 30;
        for mode in [EvalMode::EvolvedWithLabels, EvalMode::StaticLogits] {
            let a = evaluate_score(&state, &set, &centers, &dva, mode, n).unwrap();
            let b = evaluate_score(&rs, &set, &rc, &dva, mode, n).unwrap();
            assert!((a - b).abs() <= 1e-9, "trial {trial} {mode}: {a} vs {b}");
        }
        let fa = forward_batch(&state, set.features(), set.labels(), &centers, &dva, n).unwrap();
        let fb = forward_batch(&rs, set.features(), set.labels(), &rc, &dva, n).unwrap();
        assert!((fa.loss - fb.loss).abs() <= 1e-9);
        assert!(common::max_abs_diff(&fa.logits, &fb.logits) <= 1e-9);
    }
}

#[test]
fn long_evolution_scores_the_head_on_the_centers() {
    // batches no taller than the latent width, so C has full rank
    let classes = 6;
    let set = clustered_set(classes, 10, 20, 1.0, 1.0, 4);
    let mut state = init_state(10, classes, classes, 4);
    state.b_h = Array1::from_iter(uniform(1, classes, 9).iter().copied());
    let centers = generate_centers(classes, classes, CenterScheme::OneHot, 0).unwrap();
    let dva = DvaConfig { eta: 0.5, batch_size: 4, n_mode: IterationMode::Fixed { n: 500 }, ..DvaConfig::default() };
    let evolved = evaluate_score(&state, &set, &centers, &dva, EvalMode::EvolvedWithLabels, 500).unwrap();
    let on_centers = state.head(centers.targets_for(set.labels()).unwrap().view());
    let correct = on_centers
        .rows()
        .into_iter()
        .zip(set.labels())
        .filter(|(row, &y)| itm_core::argmax(row.iter().copied()) == y as usize)
        .count();
    assert!((evolved - correct as f64 / set.len() as f64).abs() <= 0.02, "{evolved} vs {correct}");
}

#[test]
fn positive_feature_scaling_keeps_static_scores() {
    for seed in 0..10u64 {
        let set = clustered_set(4, 8, 25, 1.0, 1.0, seed);
        let mut scaled = set.features().to_owned();
        scaled *= 0.1 + seed as f64;
        let big = EmbeddingSet::new("scaled", scaled, set.labels().to_vec(), 4).unwrap();
        let state = init_state(8, 4, 4, seed);
        let centers = generate_centers(4, 4, CenterScheme::OneHot, 0).unwrap();
        let dva = DvaConfig::default();
        let a = evaluate_score(&state, &set, &centers, &dva, EvalMode::StaticLogits, 0).unwrap();
        let b = evaluate_score(&state, &big, &centers, &dva, EvalMode::StaticLogits, 0).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn latent_map_similarity() {
    let w = uniform(64, 10, 1);
    for seed in 0..5 {
        let r = orthogonal(10, seed);
        let s = left_singular_similarity(w.view(), w.dot(&r).view(), 10).unwrap();
        assert!((s - 1.0).abs() <= 1e-9, "{s}");
        let other = uniform(64, 10, 100 + seed);
        let s = left_singular_similarity(w.view(), other.view(), 10).unwrap();
        assert!(s <= 0.5, "{s}");
    }
    let states = [init_state(12, 4, 3, 0), init_state(12, 4, 3, 1)];
    let m = wz_similarity(&states, 4).unwrap();
    assert_eq!(m.dim(), (2, 2));
    assert_eq!((m[(0, 0)], m[(1, 1)]), (1.0, 1.0));
    assert_eq!(m[(0, 1)], m[(1, 0)]);
}
