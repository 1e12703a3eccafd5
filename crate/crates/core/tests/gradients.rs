use subnav::neural::{
    grad_check, joint_loss, text_attend, EpisodeTape, GradCheckBundle, ModelConfig, ModelParams,
};

fn small_config() -> ModelConfig {
    ModelConfig::gradcheck()
}

#[test]
fn full_pipeline_matches_finite_differences() {
    for seed in [1u64, 2, 3] {
        let cfg = small_config();
        let params = ModelParams::<f64>::init(cfg, seed);
        let bundle = GradCheckBundle::synthetic(cfg, seed + 100);
        let report = grad_check(&params, &bundle, 1e-5).unwrap();
        for g in &report.groups {
            println!(
                "seed {seed} {:<14} rel {:.2e} small-abs {:.2e} |g| {:.2e}",
                g.name, g.max_rel_error, g.max_small_abs_error, g.max_abs_grad
            );
        }
        assert!(report.passes(1e-4), "seed {seed}");
    }
}

#[test]
fn bias_of_projection_output_is_a_dead_path() {
    // adding a constant to every g(v) shifts all logits equally
    let cfg = small_config();
    let params = ModelParams::<f64>::init(cfg, 2);
    let bundle = GradCheckBundle::synthetic(cfg, 3);
    let report = grad_check(&params, &bundle, 1e-5).unwrap();
    let g = report.groups.iter().find(|g| g.name == "g_b2").unwrap();
    assert!(g.max_abs_grad < 1e-12);
    assert!(g.max_small_abs_error < 1e-9);
}

#[test]
fn unused_vocabulary_rows_have_zero_gradient() {
    let cfg = small_config();
    let params = ModelParams::<f64>::init(cfg, 4);
    let mut bundle = GradCheckBundle::synthetic(cfg, 4);
    for w in bundle.words.iter_mut() {
        *w = 1 + *w % 5;
    }
    let (_, grads) = bundle.loss_and_grads(&params).unwrap();
    for row in 6..cfg.vocab_size {
        assert!(grads.embedding.row(row).iter().all(|&v| v == 0.0));
    }
    let report = grad_check(&params, &bundle, 1e-5).unwrap();
    assert!(report.passes(1e-4));
}

#[test]
fn attention_ignores_words_outside_the_span() {
    let cfg = small_config();
    let params = ModelParams::<f64>::init(cfg, 8);
    let tape = EpisodeTape::new(&params, &[1, 2, 3, 4, 5]).unwrap();
    let mut states = tape.encoding.states();
    let h = vec![0.1; cfg.hidden_dim];
    let before = text_attend(&params, &h, &states[2..4]).unwrap();
    states[0][0] += 5.0;
    states[4][1] -= 3.0;
    let after = text_attend(&params, &h, &states[2..4]).unwrap();
    assert_eq!(before, after);
}

#[test]
fn tape_probabilities_are_simplex_points() {
    let cfg = small_config();
    let params = ModelParams::<f64>::init(cfg, 5);
    let bundle = GradCheckBundle::synthetic(cfg, 6);
    let mut tape = EpisodeTape::new(&params, &bundle.words).unwrap();
    for s in &bundle.steps {
        let p = tape
            .step(&params, s.span.clone(), &s.neighbours, &s.prev_action)
            .unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v >= 0.0));
        tape.shift(&params, s.action, s.remaining).unwrap();
    }
    let actions: Vec<usize> = bundle.steps.iter().map(|s| s.action).collect();
    let targets: Vec<bool> = bundle.steps.iter().map(|s| s.shift_target).collect();
    let loss = joint_loss(&tape.action_probs(), &actions, &tape.shift_probs(), &targets, 1).unwrap();
    assert!(loss.total.is_finite() && loss.total > 0.0);
}

#[test]
fn single_precision_forward_tracks_double() {
    let cfg = small_config();
    let p64 = ModelParams::<f64>::init(cfg, 10);
    let p32: ModelParams<f32> = p64.cast();
    let bundle = GradCheckBundle::synthetic(cfg, 11);
    let mut t64 = EpisodeTape::new(&p64, &bundle.words).unwrap();
    let mut t32 = EpisodeTape::new(&p32, &bundle.words).unwrap();
    for s in &bundle.steps {
        let n32: Vec<Vec<f32>> = s
            .neighbours
            .iter()
            .map(|v| v.iter().map(|&x| x as f32).collect())
            .collect();
        let a32: Vec<f32> = s.prev_action.iter().map(|&x| x as f32).collect();
        let a = t64
            .step(&p64, s.span.clone(), &s.neighbours, &s.prev_action)
            .unwrap()
            .to_vec();
        let b = t32.step(&p32, s.span.clone(), &n32, &a32).unwrap().to_vec();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - *y as f64).abs() < 1e-5);
        }
    }
}
