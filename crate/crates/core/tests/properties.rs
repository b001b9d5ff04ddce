//! Randomized invariants of the geometry, dominance and feature layers.

use std::collections::BTreeSet;

use proptest::prelude::*;
use tactica_core::dominance::{
    arrival_time, compute_dominance_grid, offside_positions, MotionParams, PlayerId, PlayerState, Side,
    SpaceEngine,
};
use tactica_core::features::{
    offball_features, select_top_n, InfiniteRanking, OffBallFeatures, RankingVariable, SpaceSemantics,
};
use tactica_core::geometry::{normalize_attack_direction, PitchSpec, Point2, WeightParams};
use tactica_core::ingest::{BallState, FrameMeta, PassEvent, TeamId, TrackedFrame, Outcome};

fn coarse() -> PitchSpec {
    PitchSpec::new(105.0, 68.0, 1.0).unwrap()
}

fn point() -> impl Strategy<Value = Point2> {
    (-52.0..52.0f64, -33.0..33.0f64).prop_map(|(x, y)| Point2::new(x, y))
}

fn velocity() -> impl Strategy<Value = Point2> {
    (-6.0..6.0f64, -6.0..6.0f64).prop_map(|(x, y)| Point2::new(x, y))
}

fn frame_strategy(attackers: usize, defenders: usize) -> impl Strategy<Value = TrackedFrame> {
    (
        prop::collection::vec((point(), velocity()), attackers + defenders),
        point(),
    )
        .prop_map(move |(ps, ball)| {
            let players = ps
                .into_iter()
                .enumerate()
                .map(|(i, (pos, vel))| {
                    let attacking = i < attackers;
                    PlayerState::new(
                        i as u32 + 1,
                        if attacking { "A" } else { "B" },
                        if attacking { Side::Attacking } else { Side::Defending },
                        pos,
                        vel,
                    )
                })
                .collect();
            TrackedFrame {
                frame_index: 0,
                time: 0.0,
                ball: BallState {
                    pos: ball,
                    vel: Point2::default(),
                },
                players,
                meta: FrameMeta {
                    attacking_team: Some(TeamId::new("A")),
                    right_team: Some(TeamId::new("A")),
                    ..FrameMeta::default()
                },
            }
        })
}

fn mirror_y(f: &TrackedFrame) -> TrackedFrame {
    let mut m = f.clone();
    m.ball.pos = m.ball.pos.mirror_y();
    for p in &mut m.players {
        p.pos = p.pos.mirror_y();
        p.vel = p.vel.mirror_y();
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::with_cases(24)
    })]

    #[test]
    fn arrival_time_translation_equivariant(pos in point(), vel in velocity(), target in point(), shift in point()) {
        let mp = MotionParams::default();
        let p = PlayerState::new(1, "A", Side::Attacking, pos, vel);
        let moved = PlayerState::new(1, "A", Side::Attacking, pos + shift, vel);
        let a = arrival_time(&p, target, &mp);
        let b = arrival_time(&moved, target + shift, &mp);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn grid_is_a_partition(frame in frame_strategy(11, 11)) {
        let pitch = coarse();
        let excluded = offside_positions(&frame);
        let field = compute_dominance_grid(&frame, &pitch, &MotionParams::default(), &excluded).unwrap();
        let counts = field.cell_counts();
        prop_assert_eq!(counts.values().sum::<usize>(), pitch.cell_count());
        for id in counts.keys() {
            prop_assert!(frame.player(*id).is_some());
            prop_assert!(!excluded.contains(id));
        }
    }

    #[test]
    fn offside_never_excludes_defenders(frame in frame_strategy(11, 11)) {
        for id in offside_positions(&frame) {
            prop_assert_eq!(frame.player(id).unwrap().side, Side::Attacking);
        }
    }

    #[test]
    fn scores_symmetric_under_y_mirror(frame in frame_strategy(6, 6)) {
        let pitch = coarse();
        let mp = MotionParams::default();
        let w = WeightParams::default();
        let mirrored = mirror_y(&frame);
        let ex = offside_positions(&frame);
        prop_assert_eq!(&ex, &offside_positions(&mirrored));
        let a = SpaceEngine::new(&frame, &pitch, &mp, &w, &ex).unwrap().table(&BTreeSet::new()).unwrap();
        let b = SpaceEngine::new(&mirrored, &pitch, &mp, &w, &ex).unwrap().table(&BTreeSet::new()).unwrap();
        for (x, y) in a.players.iter().zip(&b.players) {
            prop_assert!((x.score - y.score).abs() <= 1e-9 * x.score.max(1.0), "{} vs {}", x.score, y.score);
        }
    }

    #[test]
    fn deltas_swap_directions_under_y_mirror(frame in frame_strategy(4, 4)) {
        let pitch = coarse();
        let mp = MotionParams::default();
        let w = WeightParams::default();
        let ex = offside_positions(&frame);
        let mirrored = mirror_y(&frame);
        let target = frame.players.iter().find(|p| !ex.contains(&p.id)).unwrap().id;
        let a = SpaceEngine::new(&frame, &pitch, &mp, &w, &ex).unwrap().deltas(target).unwrap();
        let b = SpaceEngine::new(&mirrored, &pitch, &mp, &w, &ex).unwrap().deltas(target).unwrap();
        for k in 0..8 {
            let k_mirror = (8 - k) % 8;
            prop_assert!((a[k] - b[k_mirror]).abs() < 1e-6, "k={k}: {} vs {}", a[k], b[k_mirror]);
        }
    }

    #[test]
    fn normalization_preserves_distances(frame in frame_strategy(5, 5)) {
        let n = normalize_attack_direction(&frame, false);
        for (i, p) in frame.players.iter().enumerate() {
            for (j, q) in frame.players.iter().enumerate() {
                let d0 = p.pos.dist(q.pos);
                let d1 = n.players[i].pos.dist(n.players[j].pos);
                prop_assert_eq!(d0, d1);
            }
            prop_assert_eq!(p.pos.dist(frame.ball.pos), n.players[i].pos.dist(n.ball.pos));
        }
        prop_assert_eq!(normalize_attack_direction(&n, false).players, frame.players.clone());
    }

    #[test]
    fn passline_never_slower_than_reaching_receiver(frame in frame_strategy(6, 5)) {
        let pass = PassEvent {
            event_id: "p".into(),
            frame_index: 0,
            team: TeamId::new("A"),
            passer_id: PlayerId(1),
            intended_receiver_id: None,
            outcome: Outcome::Success,
            ball_pos: None,
        };
        let feats = offball_features(&frame, &pass, &coarse(), &MotionParams::default(), &WeightParams::default(), SpaceSemantics::Current).unwrap();
        let excluded = offside_positions(&frame);
        for f in &feats {
            prop_assert!(f.player_id != PlayerId(1));
            prop_assert!(!excluded.contains(&f.player_id));
            prop_assert!(f.time_to_passline <= f.time_to_player);
            prop_assert!(f.dist_ball >= 0.0 && f.fast_space_vel >= 0.0);
        }
    }

    #[test]
    fn top_n_invariant_under_monotone_transform(
        values in prop::collection::vec(prop_oneof![4 => -50.0..50.0f64, 1 => Just(f64::INFINITY)], 1..12),
        a in 0.1..5.0f64,
        c in -10.0..10.0f64,
        n in 1usize..5,
    ) {
        let make = |g: &dyn Fn(f64) -> f64| -> Vec<OffBallFeatures> {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| OffBallFeatures {
                    player_id: PlayerId(i as u32 + 2),
                    fast_space_vel: g(*v),
                    variation_space_vel: 0.0,
                    dist_ball: g(*v),
                    time_to_player: g(*v),
                    time_to_passline: g(*v),
                })
                .collect()
        };
        let plain = make(&|v| v);
        let transformed = make(&|v| a * v * v * v + a * v + c);
        for var in RankingVariable::ALL {
            for inf in [InfiniteRanking::First, InfiniteRanking::Last] {
                prop_assert_eq!(
                    select_top_n(&plain, n, var, inf).unwrap(),
                    select_top_n(&transformed, n, var, inf).unwrap()
                );
            }
        }
    }

    #[test]
    fn relabeling_players_permutes_features(frame in frame_strategy(6, 5), offset in 100u32..1000) {
        let pass = |passer: u32| PassEvent {
            event_id: "p".into(),
            frame_index: 0,
            team: TeamId::new("A"),
            passer_id: PlayerId(passer),
            intended_receiver_id: None,
            outcome: Outcome::Success,
            ball_pos: None,
        };
        let mut relabeled = frame.clone();
        for p in &mut relabeled.players {
            p.id = PlayerId(offset - p.id.0);
        }
        let pitch = coarse();
        let mp = MotionParams::default();
        let w = WeightParams::default();
        let a = offball_features(&frame, &pass(1), &pitch, &mp, &w, SpaceSemantics::Current).unwrap();
        let b = offball_features(&relabeled, &pass(offset - 1), &pitch, &mp, &w, SpaceSemantics::Current).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for f in &a {
            let g = b.iter().find(|g| g.player_id == PlayerId(offset - f.player_id.0)).unwrap();
            prop_assert_eq!(f.dist_ball, g.dist_ball);
            prop_assert_eq!(f.time_to_player, g.time_to_player);
            prop_assert_eq!(f.time_to_passline, g.time_to_passline);
            // Space scores only differ where an exact arrival-time tie flips.
            prop_assert!((f.fast_space_vel - g.fast_space_vel).abs() <= 1e-9 * f.fast_space_vel.max(1.0));
        }
    }
}
