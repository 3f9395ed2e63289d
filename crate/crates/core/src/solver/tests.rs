use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::corruption::{flip_bit_f64, flip_bit_i32, MalevolentPolicy};
use crate::problem::{build_poisson, partition_rows, relative_error};

fn local_for(ell: usize, agents: usize, agent: usize) -> LocalProblem {
    let system = build_poisson(ell).unwrap();
    let partition = partition_rows(system.dim(), agents, &system.iteration).unwrap();
    LocalProblem::new(&system, &partition, agent, 1e-6).unwrap()
}

fn msg(sender: usize, block: Vec<f64>, s_tilde: i32, sequence: u64) -> UpdateMessage {
    UpdateMessage {
        sender,
        block,
        s_tilde,
        locally_converged: false,
        sequence,
    }
}

fn unit_bound() -> RejectionBound {
    RejectionBound::new(1.0, 2.0, 0.5).unwrap()
}

#[test]
fn threshold_hand_value() {
    assert!((rejection_threshold(&unit_bound(), 3) - 0.25).abs() <= 1e-15);
}

#[test]
fn threshold_at_zero_is_maximum() {
    let b = unit_bound();
    assert_eq!(rejection_threshold(&b, 0), 2.0 * 1.0 / (2.0 * 0.5));
    assert!(rejection_threshold(&b, 2000) < 1e-300);
}

#[test]
fn threshold_strictly_decreasing_to_64() {
    let b = unit_bound();
    for s in 0..64 {
        assert!(
            rejection_threshold(&b, s + 1) < rejection_threshold(&b, s),
            "s̃ = {s}"
        );
    }
}

#[test]
fn bound_rejects_invalid_constants() {
    assert!(RejectionBound::new(1.0, 2.0, 1.0).is_err());
    assert!(RejectionBound::new(0.0, 2.0, 0.5).is_err());
    assert!(RejectionBound::new(1.0, -1.0, 0.5).is_err());
}

#[test]
fn variant_names_round_trip() {
    for v in [Variant::Asj, Variant::AsjR] {
        assert_eq!(v.name().parse::<Variant>().unwrap(), v);
    }
    assert!("gauss-seidel".parse::<Variant>().is_err());
}

#[test]
fn first_message_within_threshold_accepted() {
    let local = local_for(2, 2, 0);
    let state = AgentState::new(&local);
    assert_eq!(
        state.accept_or_reject(&local, &msg(1, vec![0.01, 0.02], 0, 1)),
        Verdict::Accept
    );
}

#[test]
fn jump_above_threshold_rejected() {
    let mut local = local_for(2, 2, 0);
    local.bound = Some(unit_bound());
    let mut state = AgentState::new(&local);
    state.s_tilde = 3;
    assert_eq!(
        state.accept_or_reject(&local, &msg(1, vec![0.3, 0.4], 3, 1)),
        Verdict::RejectBound
    );
}

#[test]
fn sign_flipped_path_length_rejected() {
    let local = local_for(2, 2, 0);
    let mut state = AgentState::new(&local);
    state.s_tilde = 1;
    let m = msg(1, vec![0.0, 0.0], i32::MIN, 1);
    assert_eq!(
        state.accept_or_reject(&local, &m),
        Verdict::RejectPathLength
    );
}

#[test]
fn lagging_path_length_rejected() {
    let local = local_for(2, 2, 0);
    let mut state = AgentState::new(&local);
    state.s_tilde = 5;
    assert_eq!(
        state.accept_or_reject(&local, &msg(1, vec![0.0; 2], 3, 1)),
        Verdict::RejectPathLength
    );
    assert_eq!(
        state.accept_or_reject(&local, &msg(1, vec![0.0; 2], 4, 1)),
        Verdict::Accept
    );
}

#[test]
fn non_finite_rejected() {
    let local = local_for(2, 2, 0);
    let state = AgentState::new(&local);
    for bad in [f64::NAN, f64::INFINITY, f64::NEG_INFINITY] {
        let m = msg(1, vec![0.0, bad], 0, 1);
        assert_eq!(state.accept_or_reject(&local, &m), Verdict::RejectNonFinite);
    }
}

#[test]
fn refresh_takes_min_then_increments() {
    let local = local_for(3, 3, 1);
    assert_eq!(local.neighbors, vec![0, 2]);
    let mut state = AgentState::new(&local);
    state.s_tilde_0 = 5;
    assert!(state
        .on_accept(&local, msg(0, vec![0.0; 3], 2, 1))
        .is_none());
    let refresh = state.on_accept(&local, msg(2, vec![0.0; 3], 3, 1)).unwrap();
    assert_eq!(refresh.s_tilde, 3);
    assert_eq!((state.s_tilde, state.s_tilde_0), (3, 3));
    assert!(state.collected.iter().all(Option::is_none));
    state.advance(&local, true, |_| {});
    assert_eq!((state.s_tilde, state.s_tilde_0), (3, 4));
}

#[test]
fn single_neighbor_first_refresh_stays_zero() {
    let local = local_for(2, 2, 0);
    let mut state = AgentState::new(&local);
    let refresh = state.on_accept(&local, msg(1, vec![0.0; 2], 0, 1)).unwrap();
    assert_eq!(refresh.s_tilde, 0);
    assert_eq!(state.s_tilde, 0);
}

#[test]
fn incomplete_collection_still_updates() {
    let local = local_for(3, 3, 1);
    let mut state = AgentState::new(&local);
    state.s_tilde_0 = 7;
    state.s_tilde = 2;
    assert!(state
        .on_accept(&local, msg(0, vec![0.1; 3], 9, 1))
        .is_none());
    let out = state.advance(&local, true, |_| {});
    assert_eq!(state.s_tilde, 2);
    assert_eq!(out.s_tilde, 2);
    assert_eq!(out.sequence, 1);
    assert_eq!(state.kappa, 1);
    assert_ne!(state.block, vec![0.0; 3]);
}

#[test]
fn collection_keeps_smallest_estimate_per_neighbor() {
    let local = local_for(3, 3, 1);
    let mut state = AgentState::new(&local);
    state.s_tilde_0 = 50;
    state.on_accept(&local, msg(0, vec![0.0; 3], 9, 1));
    state.on_accept(&local, msg(0, vec![0.0; 3], 4, 2));
    state.on_accept(&local, msg(0, vec![0.0; 3], 1 << 20, 3));
    let refresh = state
        .on_accept(&local, msg(2, vec![0.0; 3], 30, 1))
        .unwrap();
    assert_eq!(refresh.s_tilde, 5);
    assert_eq!(refresh.view_sequences, vec![3, 1]);
}

#[test]
fn stopping_test_examples() {
    let diag = [4.0; 4];
    let x = [1e-8; 4];
    let zero = [0.0; 4];
    assert!(local_stopping_test(&x, Some(&zero), &diag, 1e-6, 1.0, 4));
    assert!(local_stopping_test(&x, Some(&x), &diag, 1e-6, 1.0, 4));
    assert!(!local_stopping_test(&x, Some(&x), &diag, 0.0, 1.0, 4));
    assert!(!local_stopping_test(&x, None, &diag, 1e-6, 1.0, 4));
    // 4 * 1.25e-7 = 5e-7 is not strictly below 5e-7.
    assert!(!local_stopping_test(
        &[1.25e-7; 4],
        Some(&zero),
        &diag,
        1e-6,
        1.0,
        4
    ));
    assert!(!local_stopping_test(
        &[f64::NAN; 4],
        Some(&zero),
        &diag,
        1.0,
        1.0,
        4
    ));
}

#[test]
fn single_unknown_solves_in_one_step() {
    let system = build_poisson(1).unwrap();
    let local = local_for(1, 1, 0);
    let mut state = AgentState::new(&local);
    state.advance(&local, true, |_| {});
    assert_eq!(state.block, vec![system.b[0] / 4.0]);
    assert!((state.block[0] - system.x_star[0]).abs() <= 1e-15);
}

#[test]
fn zero_views_give_c() {
    let system = build_poisson(2).unwrap();
    for agent in 0..2 {
        let local = local_for(2, 2, agent);
        let state = AgentState::new(&local);
        let expected: Vec<f64> = local.rows.clone().map(|r| system.b[r] / 4.0).collect();
        assert_eq!(state.jacobi_block_update(&local), expected);
    }
}

#[test]
fn fifty_sweeps_contract_at_half() {
    let system = build_poisson(2).unwrap();
    let local = local_for(2, 1, 0);
    let mut state = AgentState::new(&local);
    for _ in 0..50 {
        state.advance(&local, true, |_| {});
    }
    let initial = relative_error(&[0.0; 4], &system.x_star);
    let err = relative_error(&state.block, &system.x_star);
    assert!(err <= 0.5f64.powi(50) * initial + 1e-15, "err = {err:e}");
}

#[test]
fn stopping_test_sees_clean_update() {
    let local = Arc::new(local_for(1, 1, 0));
    let policy = MalevolentPolicy {
        omega_f: 0.1,
        omega_r: 0.1,
        delta: 0.5,
        target_agent: 0,
        seed: 3,
    };
    let mut agent = Agent::new(
        local.clone(),
        AgentConfig {
            variant: Variant::AsjR,
            malevolent: Some(policy),
        },
    );
    agent.update(0.0, None);
    let clean = agent.state().block.clone();
    // M = 0, so the clean update reproduces c even from a tampered block.
    let out = agent.update(0.15, None);
    assert!(out.locally_converged);
    assert_ne!(out.block, clean);
    assert_eq!(agent.malevolent_applications(), 1);
}

#[test]
fn asj_accepts_everything_from_neighbors() {
    let local = Arc::new(local_for(2, 2, 0));
    let config = AgentConfig {
        variant: Variant::Asj,
        malevolent: None,
    };
    let mut agent = Agent::new(local, config);
    agent.update(0.0, None);
    assert!(!agent.has_fresh_input());
    assert_eq!(
        agent.receive(msg(1, vec![f64::NAN, 1e300], i32::MIN, 1), None),
        Verdict::Accept
    );
    assert!(agent.has_fresh_input());
    agent.update(0.0, None);
    assert!(agent.state().block.iter().any(|v| v.is_nan()));
}

#[test]
fn convergence_watch_requires_continuous_agreement() {
    let mut w = ConvergenceWatch::new(2, 1.0);
    w.observe(0, true, 0.0);
    assert_eq!(w.deadline(), None);
    w.observe(1, true, 0.5);
    assert_eq!(w.deadline(), Some(1.5));
    assert!(!w.is_done(1.4));
    w.observe(0, true, 1.0);
    assert_eq!(w.deadline(), Some(1.5));
    w.observe(1, false, 1.2);
    assert!(!w.is_done(10.0));
    w.observe(1, true, 2.0);
    assert!(w.is_done(3.0));
}

#[test]
fn dag_depth_follows_shortest_input() {
    let mut dag = DagTracker::new(2);
    assert_eq!(dag.record_update(0, 1, true, &[1], &[0]), 1);
    assert_eq!(dag.record_update(0, 2, true, &[1], &[0]), 1);
    assert_eq!(dag.record_update(1, 1, true, &[0], &[2]), 1);
    assert_eq!(dag.record_update(0, 3, true, &[1], &[1]), 2);
    assert_eq!(dag.record_update(0, 4, false, &[1], &[1]), 2);
    dag.check_send(0, 4, 2);
    assert!(dag.violations().is_empty());
    dag.check_send(0, 4, 3);
    assert_eq!(dag.violations().len(), 1);
    assert_eq!(dag.violations()[0].kind, ViolationKind::Send);
}

fn two_agent_state(views: [f64; 2], s_tilde: i32) -> (LocalProblem, AgentState) {
    let local = local_for(2, 2, 0);
    let mut state = AgentState::new(&local);
    state.views[0].block = views.to_vec();
    state.s_tilde = s_tilde;
    state.s_tilde_0 = s_tilde + 2;
    (local, state)
}

proptest! {
    #[test]
    fn threshold_monotone(norm_b in 1e-3..1e3f64, smin in 1e-3..1e3f64, sig in 0.01..0.999f64, s in 0..5000i32) {
        let b = RejectionBound::new(norm_b, smin, sig).unwrap();
        prop_assert!(rejection_threshold(&b, s + 1) <= rejection_threshold(&b, s));
    }

    #[test]
    fn larger_jumps_never_flip_rejection(
        dir in prop::array::uniform2(-1.0..1.0f64),
        scale in 0.0..10.0f64,
        grow in 1.0..10.0f64,
        s in 0..40i32,
    ) {
        let (local, state) = two_agent_state([0.0, 0.0], s);
        let small = msg(1, vec![dir[0] * scale, dir[1] * scale], s, 1);
        let large = msg(1, vec![dir[0] * scale * grow, dir[1] * scale * grow], s, 1);
        if state.accept_or_reject(&local, &small) != Verdict::Accept {
            prop_assert_ne!(state.accept_or_reject(&local, &large), Verdict::Accept);
        }
    }

    #[test]
    fn rejection_leaves_state_untouched(
        block in prop::array::uniform2(prop::num::f64::ANY),
        s_msg in any::<i32>(),
        s in 0..100i32,
    ) {
        let (local, mut state) = two_agent_state([0.01, -0.02], s);
        let m = msg(1, block.to_vec(), s_msg, 9);
        let verdict = state.accept_or_reject(&local, &m);
        if verdict != Verdict::Accept {
            let before = state.clone();
            state.record_rejection(verdict);
            prop_assert_eq!(&state.block, &before.block);
            prop_assert_eq!(&state.views, &before.views);
            prop_assert_eq!(&state.collected, &before.collected);
            prop_assert_eq!((state.s_tilde, state.s_tilde_0, state.kappa), (before.s_tilde, before.s_tilde_0, before.kappa));
            prop_assert_eq!(state.counters.rejected(), before.counters.rejected() + 1);
        }
    }

    #[test]
    fn asj_r_views_stay_finite(flips in prop::collection::vec((0..2usize, 0..64u32, 0..32u32), 1..40)) {
        let local = Arc::new(local_for(3, 3, 1));
        let config = AgentConfig { variant: Variant::AsjR, malevolent: None };
        let mut agent = Agent::new(local, config);
        let mut seq = [0u64; 2];
        for (k, bit, sbit) in flips {
            seq[k] += 1;
            let sender = [0, 2][k];
            let clean = agent.state().views[k].block.clone();
            let mut block: Vec<f64> = clean.iter().map(|v| v + 1e-3).collect();
            block[0] = flip_bit_f64(block[0], bit);
            let s_tilde = flip_bit_i32(agent.state().s_tilde, sbit);
            agent.receive(msg(sender, block, s_tilde, seq[k]), None);
            agent.update(0.0, None);
            for view in &agent.state().views {
                prop_assert!(view.block.iter().all(|v| v.is_finite()));
            }
            prop_assert!(agent.state().s_tilde >= 0);
        }
    }
}

#[test]
fn idle_updates_do_not_advance_path_counter() {
    let local = Arc::new(local_for(2, 2, 0));
    let config = AgentConfig {
        variant: Variant::AsjR,
        malevolent: None,
    };
    let mut agent = Agent::new(local, config);
    for _ in 0..5 {
        agent.update(0.0, None);
    }
    assert_eq!(agent.state().s_tilde_0, 0);
    agent.receive(msg(1, vec![0.0, 0.0], 0, 1), None);
    agent.update(0.0, None);
    assert_eq!(agent.state().s_tilde_0, 1);
}
