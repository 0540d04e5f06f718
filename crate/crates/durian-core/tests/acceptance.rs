//! Acceptance gate: one test per shipping criterion, each printing a
//! `[acceptance] criterion N (...): PASS|FAIL` line before asserting.
//!
//! Numeric criteria are checked against independent oracles (nalgebra's
//! eigensolver, central finite differences, hand-computed closed forms)
//! rather than against values this crate produced.

use std::path::Path;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use durian_core::advantage::{
    combine_advantages, grpo_advantage, group_normalized_advantage, AdvantageKind, CombineWeights,
    RewardMatrix,
};
use durian_core::cli::analyze_rewards;
use durian_core::config::ExperimentConfig;
use durian_core::difficulty::{
    regroup_perceptual, regroup_reasoning, ConfidenceScore, GroupAssignment, PerceptualScore,
};
use durian_core::linalg::{
    centered_second_moment, eigvals_symmetric, spectral_entropy, Matrix, MomentMode, Spectrum,
};
use durian_core::objective::{
    dapo_surrogate, grpo_surrogate, ObjectiveConfig, PolicyEval, ResponseEval,
};
use durian_core::reward::{overall_reward, RewardWeights};
use durian_core::sim::run_experiment;

fn verdict(criterion: usize, name: &str, failures: &[String]) {
    let state = if failures.is_empty() { "PASS" } else { "FAIL" };
    println!("[acceptance] criterion {criterion} ({name}): {state}");
    assert!(
        failures.is_empty(),
        "criterion {criterion} ({name}):\n{}",
        failures.join("\n")
    );
}

fn random_symmetric(rng: &mut StdRng, n: usize) -> Matrix {
    let mut m = Matrix::zeros(n, n).unwrap();
    for r in 0..n {
        for c in 0..=r {
            let v = rng.gen_range(-3.0..3.0);
            m.set(r, c, v);
            m.set(c, r, v);
        }
    }
    m
}

fn random_features(rng: &mut StdRng, p: usize, d: usize) -> Matrix {
    let data: Vec<f64> = (0..p * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    Matrix::new(p, d, data).unwrap()
}

#[test]
fn criterion_01_eigensolver_matches_independent_oracle() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0xACC_01);
    let mut failures = Vec::new();
    for case in 0..200 {
        let n = rng.gen_range(1..=12);
        let m = random_symmetric(&mut rng, n);
        let ours = eigvals_symmetric(&m).unwrap().into_vec();
        let na = nalgebra::DMatrix::from_fn(n, n, |r, c| m.get(r, c));
        let mut theirs: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (k, (a, b)) in ours.iter().zip(&theirs).enumerate() {
            if (a - b).abs() > 1e-7 {
                failures.push(format!(
                    "case {case} (n={n}): eigenvalue {k} is {a}, oracle says {b}"
                ));
            }
        }
        let trace: f64 = (0..n).map(|i| m.get(i, i)).sum();
        let sum: f64 = ours.iter().sum();
        if (sum - trace).abs() > 1e-8 * trace.abs().max(1.0) {
            failures.push(format!(
                "case {case} (n={n}): eigenvalue sum {sum} drifted from trace {trace}"
            ));
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() > 5.0 {
        failures.push(format!("runtime {elapsed:?} exceeds the 5 s budget"));
    }
    verdict(1, "eigensolver vs independent oracle", &failures);
}

#[test]
fn criterion_02_entropy_invariants() {
    let mut rng = StdRng::seed_from_u64(0xACC_02);
    let mut failures = Vec::new();
    for case in 0..500 {
        let p = rng.gen_range(2..=12);
        let d = rng.gen_range(1..=10);
        let f = random_features(&mut rng, p, d);
        let h = durian_core::difficulty::perceptual_difficulty(&f).unwrap();

        // Bounds: entropy of a distribution over at most min(P, d) states.
        let cap = ((p.min(d)) as f64).ln();
        if !((-1e-12..=cap + 1e-12).contains(&h)) {
            failures.push(format!("case {case} ({p}x{d}): H = {h} outside [0, {cap}]"));
        }

        // Scale invariance: the spectrum scales uniformly, the entropy not at all.
        let scaled_data: Vec<f64> = f.data().iter().map(|v| 3.0 * v).collect();
        let scaled = Matrix::new(p, d, scaled_data).unwrap();
        let h3 = durian_core::difficulty::perceptual_difficulty(&scaled).unwrap();
        if (h - h3).abs() > 1e-9 {
            failures.push(format!(
                "case {case} ({p}x{d}): H changed by {} under F -> 3F",
                (h - h3).abs()
            ));
        }

        // Patch/feature duality: both Gram forms share their nonzero spectrum.
        let h_patch = spectral_entropy(
            &eigvals_symmetric(&centered_second_moment(&f, MomentMode::Patch).unwrap()).unwrap(),
        )
        .unwrap();
        let h_feat = spectral_entropy(
            &eigvals_symmetric(&centered_second_moment(&f, MomentMode::Feature).unwrap()).unwrap(),
        )
        .unwrap();
        if (h_patch - h_feat).abs() > 1e-8 {
            failures.push(format!(
                "case {case} ({p}x{d}): patch-form H {h_patch} != feature-form H {h_feat}"
            ));
        }
    }

    // Flat spectra hit the log-n ceiling exactly; rank-1 spectra carry nothing.
    for n in 1..=16 {
        let flat = Spectrum::new(vec![0.7; n]).unwrap();
        let h = spectral_entropy(&flat).unwrap();
        if (h - (n as f64).ln()).abs() > 1e-9 {
            failures.push(format!("flat spectrum of {n}: H = {h}, want ln {n}"));
        }
        let mut lopsided = vec![0.0; n];
        lopsided[0] = 2.5;
        let h1 = spectral_entropy(&Spectrum::new(lopsided).unwrap()).unwrap();
        if h1.abs() > 1e-12 {
            failures.push(format!("rank-1 spectrum of {n}: H = {h1}, want 0"));
        }
    }
    verdict(2, "spectral entropy invariants", &failures);
}

/// Each sample alone in its difficulty group: pooling degenerates to the
/// sample's own statistics.
fn singleton_assignment(batch: usize) -> GroupAssignment {
    GroupAssignment {
        labels: (0..batch).collect(),
        num_groups: batch,
        thresholds: Vec::new(),
        all_tied: false,
        merged_empty_groups: 0,
    }
}

fn random_rewards(rng: &mut StdRng, batch: usize, group: usize) -> RewardMatrix {
    let values: Vec<f64> = (0..batch * group).map(|_| rng.gen_range(0.0..1.0)).collect();
    RewardMatrix::new(batch, group, values).unwrap()
}

#[test]
fn criterion_03_singleton_groups_reduce_to_per_sample_normalization() {
    let mut rng = StdRng::seed_from_u64(0xACC_03);
    let mut failures = Vec::new();
    for case in 0..100 {
        let b = rng.gen_range(6..=12);
        let g = rng.gen_range(2..=8);
        let rewards = random_rewards(&mut rng, b, g);
        let own = grpo_advantage(&rewards).unwrap();
        let shared =
            group_normalized_advantage(&rewards, &singleton_assignment(b), AdvantageKind::Perceptual)
                .unwrap();
        for (k, (a, s)) in own.values().iter().zip(shared.values()).enumerate() {
            if (a - s).abs() > 1e-12 {
                failures.push(format!(
                    "case {case}: entry {k} differs by {} between singleton-shared and per-sample",
                    (a - s).abs()
                ));
            }
        }

        // Mean-zero rows for all three advantage views.
        let mut labels: Vec<usize> = (0..b).map(|i| i % 3).collect();
        labels.shuffle(&mut rng);
        let coarse = GroupAssignment {
            labels,
            num_groups: 3,
            thresholds: Vec::new(),
            all_tied: false,
            merged_empty_groups: 0,
        };
        let percep =
            group_normalized_advantage(&rewards, &coarse, AdvantageKind::Perceptual).unwrap();
        let reason =
            group_normalized_advantage(&rewards, &coarse, AdvantageKind::Reasoning).unwrap();
        for (kind, adv) in [("per-sample", &own), ("perceptual", &percep), ("reasoning", &reason)]
        {
            for s in 0..b {
                if adv.row_degenerate(s) {
                    continue;
                }
                let mean: f64 = adv.row(s).iter().sum::<f64>() / g as f64;
                if mean.abs() > 1e-9 {
                    failures.push(format!(
                        "case {case}: {kind} advantage row {s} has mean {mean}"
                    ));
                }
            }
        }
    }
    verdict(3, "advantage oracle equivalence", &failures);
}

#[test]
fn criterion_04_lopsided_row_arithmetic_and_damping() {
    let mut failures = Vec::new();

    // Seven successes and one failure, normalized by the row's own std.
    let mut values = vec![1.0; 8];
    values[7] = 0.0;
    let row = RewardMatrix::new(1, 8, values).unwrap();
    let adv = grpo_advantage(&row).unwrap();
    if (adv.value(0, 7) - (-2.4749)).abs() > 1e-4 {
        failures.push(format!("failing rollout advantage {} != -2.4749", adv.value(0, 7)));
    }
    for i in 0..7 {
        if (adv.value(0, i) - 0.3536).abs() > 1e-4 {
            failures.push(format!("succeeding rollout advantage {} != 0.3536", adv.value(0, i)));
        }
    }

    // A balanced row lands at a far milder magnitude.
    let balanced = RewardMatrix::new(1, 8, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let badv = grpo_advantage(&balanced).unwrap();
    for i in 0..8 {
        if (badv.value(0, i).abs() - 0.9354).abs() > 1e-4 {
            failures.push(format!(
                "balanced rollout {i} advantage {} != +/-0.9354",
                badv.value(0, i)
            ));
        }
    }

    // Damping: pooled with balanced difficulty peers, the lopsided row's
    // shared-std advantages must shrink below its own-std advantages.
    let mut rng = StdRng::seed_from_u64(0xACC_04);
    for case in 0..100 {
        let n_peers = rng.gen_range(1..=7);
        let b = n_peers + 1;
        let extreme_at = rng.gen_range(0..b);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(b);
        for s in 0..b {
            if s == extreme_at {
                let mut row = vec![1.0; 8];
                row[rng.gen_range(0..8)] = 0.0;
                rows.push(row);
            } else {
                let correct = rng.gen_range(2..=6);
                let mut row = vec![0.0; 8];
                for slot in rand::seq::index::sample(&mut rng, 8, correct) {
                    row[slot] = 1.0;
                }
                rows.push(row);
            }
        }
        let rewards = RewardMatrix::new(b, 8, rows.concat()).unwrap();
        let own = grpo_advantage(&rewards).unwrap();
        let one_group = GroupAssignment {
            labels: vec![0; b],
            num_groups: 1,
            thresholds: Vec::new(),
            all_tied: false,
            merged_empty_groups: 0,
        };
        let shared =
            group_normalized_advantage(&rewards, &one_group, AdvantageKind::Perceptual).unwrap();
        let peak = |adv: &durian_core::advantage::AdvantageMatrix| {
            adv.row(extreme_at).iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        if peak(&shared) >= peak(&own) {
            failures.push(format!(
                "case {case}: shared-std peak {} did not damp own-std peak {}",
                peak(&shared),
                peak(&own)
            ));
        }
    }
    verdict(4, "lopsided-row arithmetic and damping", &failures);
}

fn random_eval(rng: &mut StdRng) -> (PolicyEval, Vec<Vec<Vec<f64>>>) {
    let b = rng.gen_range(1..=4);
    let g = rng.gen_range(2..=4);
    let vocab = rng.gen_range(2..=8);
    let mut responses = Vec::with_capacity(b);
    let mut advantages = Vec::with_capacity(b);
    for _ in 0..b {
        let mut row = Vec::with_capacity(g);
        let mut row_adv = Vec::with_capacity(g);
        for _ in 0..g {
            let len = rng.gen_range(1..=6);
            let old: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..-0.2)).collect();
            let new: Vec<f64> = old.iter().map(|o| o + rng.gen_range(-0.3..0.3)).collect();
            let dist = |rng: &mut StdRng| -> Vec<f64> {
                let raw: Vec<f64> = (0..vocab).map(|_| rng.gen_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / z).collect()
            };
            let new_dists: Vec<Vec<f64>> = (0..len).map(|_| dist(rng)).collect();
            let ref_dists: Vec<Vec<f64>> = (0..len).map(|_| dist(rng)).collect();
            row_adv.push((0..len).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>());
            row.push(ResponseEval {
                new_logprobs: new,
                old_logprobs: old,
                new_dists,
                ref_dists,
            });
        }
        responses.push(row);
        advantages.push(row_adv);
    }
    let mask = if b > 1 && rng.gen_bool(0.5) {
        // Mask a whole row, as the dynamic filter would.
        let mut m = vec![true; b * g];
        let row = rng.gen_range(0..b);
        m[row * g..(row + 1) * g].fill(false);
        Some(m)
    } else {
        None
    };
    (PolicyEval::new(responses, mask).unwrap(), advantages)
}

#[test]
fn criterion_05_surrogate_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0xACC_05);
    let mut failures = Vec::new();
    let mut checked = 0usize;
    let mut skipped = 0usize;
    let h = 1e-6;
    for case in 0..50 {
        let asymmetric = case % 2 == 1;
        let cfg = if asymmetric { ObjectiveConfig::dapo() } else { ObjectiveConfig::grpo() };
        let (lo, hi) = if asymmetric {
            (1.0 - cfg.clip_low, 1.0 + cfg.clip_high)
        } else {
            (1.0 - cfg.clip, 1.0 + cfg.clip)
        };
        let run = |eval: &PolicyEval, adv: &[Vec<Vec<f64>>]| {
            if asymmetric { dapo_surrogate(eval, adv, &cfg) } else { grpo_surrogate(eval, adv, &cfg) }
        };
        let (mut eval, adv) = random_eval(&mut rng);
        let base = run(&eval, &adv).unwrap();
        for s in 0..eval.batch() {
            for i in 0..eval.group_size() {
                // Filtered rows carry no gradient, and perturbing them must
                // not move the loss either; spot-check that, then move on.
                if !eval.is_valid(s, i) {
                    let orig = eval.response(s, i).new_logprobs[0];
                    eval.response_mut(s, i).new_logprobs[0] = orig + 0.1;
                    let moved = run(&eval, &adv).unwrap().loss;
                    eval.response_mut(s, i).new_logprobs[0] = orig;
                    if moved != base.loss {
                        failures.push(format!(
                            "case {case}: masked rollout ({s},{i}) still moves the loss"
                        ));
                    }
                    continue;
                }
                for t in 0..eval.response(s, i).len() {
                    let resp = eval.response(s, i);
                    let ratio = (resp.new_logprobs[t] - resp.old_logprobs[t]).exp();
                    // The clip corners are kinks; central differences lie there.
                    if (ratio - lo).abs() < 1e-3 || (ratio - hi).abs() < 1e-3 {
                        skipped += 1;
                        continue;
                    }
                    checked += 1;
                    let orig = eval.response(s, i).new_logprobs[t];
                    eval.response_mut(s, i).new_logprobs[t] = orig + h;
                    let up = run(&eval, &adv).unwrap().loss;
                    eval.response_mut(s, i).new_logprobs[t] = orig - h;
                    let down = run(&eval, &adv).unwrap().loss;
                    eval.response_mut(s, i).new_logprobs[t] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let an = base.grads[s][i][t];
                    if (fd - an).abs() > 1e-5 * fd.abs().max(an.abs()).max(1.0) {
                        failures.push(format!(
                            "case {case} token ({s},{i},{t}): analytic {an} vs central difference {fd}"
                        ));
                    }
                }
            }
        }
    }
    // The corner margin must stay a technicality, not an exemption.
    if checked < 9 * skipped {
        failures.push(format!(
            "only {checked} tokens checked against {skipped} skipped near clip corners"
        ));
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() > 30.0 {
        failures.push(format!("runtime {elapsed:?} exceeds the 30 s budget"));
    }
    verdict(5, "surrogate gradients vs finite differences", &failures);
}

#[test]
fn criterion_06_reward_table_is_exact() {
    let weights = RewardWeights::default();
    let mut failures = Vec::new();
    for ((f, a), want) in [
        ((1.0, 1.0), 1.0),
        ((1.0, 0.0), 0.1),
        ((0.0, 1.0), 0.9),
        ((0.0, 0.0), 0.0),
    ] {
        let got = overall_reward(f, a, &weights);
        if got != want {
            failures.push(format!("(format {f}, accuracy {a}) -> {got}, want exactly {want}"));
        }
    }

    // The same four cells reached through token parsing rather than directly.
    use durian_core::reward::{
        accuracy_reward, format_reward, parse_tokens, Vocab, TOKEN_END, TOKEN_MARK, TOKEN_THINK,
    };
    let vocab = Vocab::new(4).unwrap();
    let truth = 2;
    let right = vocab.answer_token(truth);
    let wrong = vocab.answer_token(0);
    for (tokens, want) in [
        (vec![TOKEN_THINK, TOKEN_MARK, right, TOKEN_END], 1.0),
        (vec![TOKEN_THINK, TOKEN_MARK, wrong, TOKEN_END], 0.1),
        (vec![TOKEN_THINK, TOKEN_MARK, right, TOKEN_END, TOKEN_END], 0.9),
        (vec![TOKEN_THINK, TOKEN_THINK], 0.0),
    ] {
        let parsed = parse_tokens(&tokens, &vocab);
        let got = overall_reward(
            format_reward(&parsed, &vocab),
            accuracy_reward(&parsed, truth),
            &weights,
        );
        if got != want {
            failures.push(format!("tokens {tokens:?} -> {got}, want exactly {want}"));
        }
    }
    verdict(6, "reward table", &failures);
}

#[test]
fn criterion_07_planted_log_reproduces_the_fixture_column() {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("planted.jsonl");

    // 512 groups of 8: 41 with one failure, 78 with one success, 204 mixed
    // 4/4, and 189 unanimous rows that the dynamic filter would drop.
    let mut lines = Vec::new();
    for sample in 0..512u64 {
        let accuracies: Vec<u8> = if sample < 41 {
            let mut v = vec![1; 8];
            v[3] = 0;
            v
        } else if sample < 41 + 78 {
            let mut v = vec![0; 8];
            v[5] = 1;
            v
        } else if sample < 323 {
            vec![1, 0, 1, 0, 1, 0, 1, 0]
        } else if sample < 323 + 94 {
            vec![1; 8]
        } else {
            vec![0; 8]
        };
        for (rollout, acc) in accuracies.iter().enumerate() {
            lines.push(format!(
                "{{\"step\":1,\"sample_id\":{sample},\"rollout_id\":{rollout},\"accuracy\":{acc}}}"
            ));
        }
    }
    // Aggregation must not depend on record order.
    lines.shuffle(&mut StdRng::seed_from_u64(0xACC_07));
    std::fs::write(&log, lines.join("\n")).unwrap();

    let outcome = analyze_rewards(&log, 8, 4).unwrap();
    let stats = outcome.steps[0].1;
    if stats.effective != 323 || stats.extreme_success != 41 || stats.extreme_failure != 78 {
        failures.push(format!(
            "counts (effective {}, success {}, failure {}) != (323, 41, 78)",
            stats.effective, stats.extreme_success, stats.extreme_failure
        ));
    }
    for want in [
        "Effective samples (participating in training),323",
        "Extreme success (7 correct & 1 wrong),41",
        "Extreme failure (7 wrong & 1 correct),78",
        "Total Extreme Ratio,36.8%",
    ] {
        if !outcome.table.contains(want) {
            failures.push(format!("table is missing the line {want:?}:\n{}", outcome.table));
        }
    }
    verdict(7, "fixture log reproduction", &failures);
}

#[test]
fn criterion_08_grouping_contract_on_distinct_scores() {
    let mut rng = StdRng::seed_from_u64(0xACC_08);
    let mut failures = Vec::new();

    // 512 distinct entropies in shuffled order.
    let mut order: Vec<usize> = (0..512).collect();
    order.shuffle(&mut rng);
    let perceptual: Vec<PerceptualScore> = order
        .iter()
        .map(|&i| PerceptualScore { sample_id: i, entropy: i as f64 * 0.01 + 0.003 })
        .collect();
    let assignment = regroup_perceptual(&perceptual, (0.25, 0.75)).unwrap();
    let mut counts = [0usize; 3];
    for l in &assignment.labels {
        counts[*l] += 1;
    }
    if counts != [128, 256, 128] {
        failures.push(format!("perceptual tier sizes {counts:?} != [128, 256, 128]"));
    }

    let confidence: Vec<ConfidenceScore> = order
        .iter()
        .map(|&i| ConfidenceScore { sample_id: i, mean_logprob: -3.0 + i as f64 * 0.005 })
        .collect();
    let bands = regroup_reasoning(&confidence, 12).unwrap();
    if bands.num_groups != 12 {
        failures.push(format!("{} reasoning bands survived, want 12", bands.num_groups));
    }
    if bands.merged_empty_groups != 0 {
        failures.push(format!("{} bands came up empty on distinct scores", bands.merged_empty_groups));
    }
    let mut band_counts = vec![0usize; bands.num_groups];
    for l in &bands.labels {
        band_counts[*l] += 1;
    }
    if band_counts.iter().any(|c| *c == 0) {
        failures.push(format!("reasoning band sizes {band_counts:?} include an empty band"));
    }
    verdict(8, "quantile grouping contract", &failures);
}

fn smoke_config(alpha: CombineWeights, out_dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        steps: 200,
        batch_size: 64,
        rollout_g: 8,
        hardness_min: 0.1,
        hardness_max: 0.3,
        lr: 1.0,
        seed: 11,
        alpha,
        out_dir: out_dir.display().to_string(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn criterion_09_smoke_experiment_learns() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let variants = [
        ("per-sample only", CombineWeights::new(1.0, 0.0, 0.0).unwrap(), "a"),
        ("blended", CombineWeights::default(), "b"),
    ];
    for (label, alpha, sub) in variants {
        let cfg = smoke_config(alpha, &dir.path().join(sub));
        let summary = run_experiment(&cfg).unwrap();
        let first = summary.history.first().unwrap().mean_accuracy;
        let last = summary.history.last().unwrap().mean_accuracy;
        if last - first < 0.2 {
            failures.push(format!(
                "{label}: accuracy went {first:.4} -> {last:.4}, gain {:.4} < 0.2",
                last - first
            ));
        }
    }
    // Same seed, same metric file, byte for byte.
    let rerun = smoke_config(CombineWeights::default(), &dir.path().join("b2"));
    run_experiment(&rerun).unwrap();
    let a = std::fs::read(dir.path().join("b").join("metrics.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b2").join("metrics.csv")).unwrap();
    if a != b {
        failures.push("same-seed reruns disagree on metrics.csv".to_string());
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() > 180.0 {
        failures.push(format!("runtime {elapsed:?} exceeds the 3 min budget"));
    }
    verdict(9, "smoke experiment learns", &failures);
}

#[test]
fn criterion_10_same_seed_byte_identical_outputs() {
    let mut failures = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let make = |seed: u64, sub: &str| ExperimentConfig {
        steps: 12,
        batch_size: 8,
        rollout_g: 4,
        groups_b: 4,
        task_pool_size: 32,
        seed,
        out_dir: dir.path().join(sub).display().to_string(),
        ..ExperimentConfig::default()
    };
    run_experiment(&make(5, "a")).unwrap();
    run_experiment(&make(5, "b")).unwrap();
    run_experiment(&make(6, "c")).unwrap();
    let read = |sub: &str, name: &str| std::fs::read(dir.path().join(sub).join(name)).unwrap();
    for name in ["metrics.csv", "diag.jsonl", "extreme_table.csv"] {
        if read("a", name) != read("b", name) {
            failures.push(format!("same-seed runs disagree on {name}"));
        }
    }
    if read("a", "metrics.csv") == read("c", "metrics.csv") {
        failures.push("different seeds produced identical metrics.csv".to_string());
    }
    verdict(10, "seeded determinism", &failures);
}

/// Blending with weights (1, 0, 0) must reproduce the per-sample view bit
/// for bit — the supporting identity behind comparing runs across alphas.
#[test]
fn blend_identity_supports_the_alpha_sweep() {
    let mut rng = StdRng::seed_from_u64(0xACC_11);
    let mut failures = Vec::new();
    for case in 0..20 {
        let rewards = random_rewards(&mut rng, 8, 6);
        let own = grpo_advantage(&rewards).unwrap();
        let coarse = GroupAssignment {
            labels: (0..8).map(|i| i % 3).collect(),
            num_groups: 3,
            thresholds: Vec::new(),
            all_tied: false,
            merged_empty_groups: 0,
        };
        let percep =
            group_normalized_advantage(&rewards, &coarse, AdvantageKind::Perceptual).unwrap();
        let reason =
            group_normalized_advantage(&rewards, &coarse, AdvantageKind::Reasoning).unwrap();
        let blend = combine_advantages(
            &own,
            &percep,
            &reason,
            &CombineWeights::new(1.0, 0.0, 0.0).unwrap(),
        )
        .unwrap();
        if blend.values() != own.values() {
            failures.push(format!("case {case}: (1,0,0) blend is not the per-sample view"));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
