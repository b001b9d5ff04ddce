//! Deterministic synthetic matches with a known pass-success rule.
//!
//! Each pass gets its own tracking frame. The passer stands on the ball, a
//! designated receiver is placed at a sampled distance and the remaining
//! attackers further out; defenders are scattered over the pitch with a
//! keeper near their goal. The success probability is a logistic function
//! of the off-ball variables of the nearest eligible attacker (dist_ball
//! rank 1), and the outcome is drawn from it.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dominance::{offside_positions, MotionParams, PlayerId, PlayerState, Side};
use crate::error::{Error, Result};
use crate::features::{offball_features, passline_time, OffBallFeatures, SpaceSemantics};
use crate::geometry::{PitchSpec, Point2, WeightParams};
use crate::ingest::{
    write_events, write_lines, write_tracking, BallState, EventKind, FrameMeta, MatchEvent, Outcome,
    PassEvent, TeamId, TrackedFrame,
};

pub const ATTACKING_TEAM: &str = "A";
pub const DEFENDING_TEAM: &str = "B";

/// Logistic ground truth: logit = intercept + Σ coef · variable of the
/// nearest eligible attacker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthRule {
    pub intercept: f64,
    pub fast_space_vel: f64,
    pub variation_space_vel: f64,
    pub dist_ball: f64,
    pub time_to_player: f64,
    pub time_to_passline: f64,
}

impl Default for SynthRule {
    fn default() -> Self {
        SynthRule {
            intercept: 2.0,
            fast_space_vel: 0.0,
            variation_space_vel: 0.0,
            dist_ball: -0.2,
            time_to_player: 0.0,
            time_to_passline: 0.0,
        }
    }
}

impl SynthRule {
    fn uses_space(&self) -> bool {
        self.fast_space_vel != 0.0 || self.variation_space_vel != 0.0
    }

    fn uses_time(&self) -> bool {
        self.time_to_player != 0.0 || self.time_to_passline != 0.0
    }

    pub fn logit(&self, f: &OffBallFeatures) -> f64 {
        let mut z = self.intercept + self.dist_ball * f.dist_ball;
        // Skip unused terms so an infinite time with a zero coefficient
        // does not turn the logit into NaN.
        if self.uses_space() {
            z += self.fast_space_vel * f.fast_space_vel + self.variation_space_vel * f.variation_space_vel;
        }
        if self.uses_time() {
            z += self.time_to_player * f.time_to_player + self.time_to_passline * f.time_to_passline;
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub passes: usize,
    /// Including the passer.
    pub attackers: usize,
    pub defenders: usize,
    /// Frame-index gap between consecutive passes.
    pub frame_step: i64,
    pub frame_rate: f64,
    /// Receiver distance from the ball is drawn uniformly from this range (m).
    pub receiver_distance: (f64, f64),
    /// Gaussian jitter on every player position (m).
    pub position_noise: f64,
    /// Per-component velocity standard deviation (m/s).
    pub velocity_sd: f64,
    /// Fraction of passes made with no defender on the pitch.
    pub empty_defense_rate: f64,
    pub rule: SynthRule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            passes: 2000,
            attackers: 11,
            defenders: 11,
            frame_step: 25,
            frame_rate: 25.0,
            receiver_distance: (2.0, 30.0),
            position_noise: 0.5,
            velocity_sd: 1.5,
            empty_defense_rate: 0.05,
            rule: SynthRule::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if self.attackers < 2 || self.attackers > 11 {
            return bad(format!("attackers must be in 2..=11, got {}", self.attackers));
        }
        if self.defenders > 11 {
            return bad(format!("defenders must be at most 11, got {}", self.defenders));
        }
        if self.frame_step < 1 {
            return bad("frame_step must be >= 1".into());
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad("frame_rate must be positive".into());
        }
        let (lo, hi) = self.receiver_distance;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad(format!("receiver_distance must satisfy 0 < min < max, got ({lo}, {hi})"));
        }
        if !(self.position_noise >= 0.0 && self.velocity_sd >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.empty_defense_rate) {
            return bad("empty_defense_rate must be in [0, 1]".into());
        }
        let r = &self.rule;
        let coefs = [
            r.intercept,
            r.fast_space_vel,
            r.variation_space_vel,
            r.dist_ball,
            r.time_to_player,
            r.time_to_passline,
        ];
        if coefs.iter().any(|c| !c.is_finite()) {
            return bad("rule coefficients must be finite".into());
        }
        if r.uses_time() && (self.defenders == 0 || self.empty_defense_rate > 0.0) {
            return bad(
                "rule uses interception times but some passes have no defenders (times would be infinite)".into(),
            );
        }
        Ok(())
    }
}

/// Hidden truth for one synthetic pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub event_id: String,
    pub probability: f64,
    pub receiver: u32,
    pub dist_ball: f64,
    /// None when no defender is on the pitch.
    pub time_to_player: Option<f64>,
    pub time_to_passline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthMatch {
    pub frames: Vec<TrackedFrame>,
    pub events: Vec<MatchEvent>,
    pub ground_truth: Vec<GroundTruth>,
}

pub const TRACKING_FILE: &str = "tracking.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.jsonl";

impl SynthMatch {
    /// Write tracking, events and ground truth into `dir`; returns the paths.
    pub fn write(&self, dir: &Path) -> Result<[std::path::PathBuf; 3]> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = [dir.join(TRACKING_FILE), dir.join(EVENTS_FILE), dir.join(GROUND_TRUTH_FILE)];
        write_tracking(&paths[0], &self.frames)?;
        write_events(&paths[1], &self.events)?;
        write_lines(&paths[2], self.ground_truth.iter())?;
        Ok(paths)
    }

    /// Mean of the true success probabilities.
    pub fn mean_probability(&self) -> f64 {
        let n = self.ground_truth.len().max(1) as f64;
        self.ground_truth.iter().map(|g| g.probability).sum::<f64>() / n
    }

    pub fn success_rate(&self) -> f64 {
        let passes: Vec<_> = self.events.iter().filter(|e| e.kind == EventKind::Pass).collect();
        let ok = passes.iter().filter(|e| e.outcome == Some(Outcome::Success)).count();
        ok as f64 / passes.len().max(1) as f64
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

struct Sampler {
    rng: ChaCha8Rng,
    pos_noise: Option<Normal<f64>>,
    vel: Option<Normal<f64>>,
}

impl Sampler {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.rng.random::<f64>()
    }

    fn jitter(&mut self) -> Point2 {
        match self.pos_noise {
            Some(n) => Point2::new(n.sample(&mut self.rng), n.sample(&mut self.rng)),
            None => Point2::default(),
        }
    }

    fn velocity(&mut self) -> Point2 {
        match self.vel {
            Some(n) => Point2::new(n.sample(&mut self.rng), n.sample(&mut self.rng)),
            None => Point2::default(),
        }
    }

    fn around(&mut self, center: Point2, dist: f64) -> Point2 {
        let theta = self.uniform(0.0, std::f64::consts::TAU);
        center + Point2::new(theta.cos(), theta.sin()) * dist
    }
}

fn normal(sd: f64) -> Option<Normal<f64>> {
    (sd > 0.0).then(|| Normal::new(0.0, sd).expect("finite positive sd"))
}

/// Generate a synthetic match. Identical `(config, seed)` give identical output.
pub fn synthesize_match(
    config: &SynthConfig,
    seed: u64,
    pitch: &PitchSpec,
    mp: &MotionParams,
    w: &WeightParams,
) -> Result<SynthMatch> {
    config.validate()?;
    let mut s = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed),
        pos_noise: normal(config.position_noise),
        vel: normal(config.velocity_sd),
    };
    let (hx, hy) = (pitch.length / 2.0, pitch.width / 2.0);
    let inside = |p: Point2| pitch.clamp(p);
    let attacking = TeamId::new(ATTACKING_TEAM);
    let mut frames = Vec::with_capacity(config.passes);
    let mut events = Vec::with_capacity(config.passes);
    let mut truth = Vec::with_capacity(config.passes);

    for i in 0..config.passes {
        let frame_index = (i as i64 + 1) * config.frame_step;
        let event_id = format!("{}", i + 1);
        let empty = config.defenders == 0 || s.rng.random::<f64>() < config.empty_defense_rate;
        let (frame, receiver) = loop {
            let ball = Point2::new(s.uniform(-0.8 * hx, 0.8 * hx), s.uniform(-0.8 * hy, 0.8 * hy));
            let mut players = Vec::with_capacity(config.attackers + config.defenders);
            let (dmin, dmax) = config.receiver_distance;
            let d = s.uniform(dmin, dmax);
            for k in 0..config.attackers {
                let pos = match k {
                    0 => ball,
                    1 => s.around(ball, d),
                    _ => {
                        let extra = s.uniform(2.0, 40.0);
                        s.around(ball, d + extra)
                    }
                };
                let pos = inside(pos + s.jitter());
                let vel = s.velocity();
                players.push(PlayerState::new(k as u32 + 1, ATTACKING_TEAM, Side::Attacking, pos, vel));
            }
            if !empty {
                for k in 0..config.defenders {
                    let pos = if k == 0 {
                        Point2::new(s.uniform(hx - 6.0, hx - 1.0), s.uniform(-6.0, 6.0))
                    } else {
                        Point2::new(s.uniform(-0.9 * hx, 0.9 * hx), s.uniform(-0.9 * hy, 0.9 * hy))
                    };
                    let pos = inside(pos + s.jitter());
                    let vel = s.velocity();
                    players.push(PlayerState::new(12 + k as u32, DEFENDING_TEAM, Side::Defending, pos, vel));
                }
            }
            let frame = TrackedFrame {
                frame_index,
                time: frame_index as f64 / config.frame_rate,
                ball: BallState {
                    pos: ball,
                    vel: Point2::default(),
                },
                players,
                meta: FrameMeta {
                    period: 1,
                    attacking_team: Some(attacking.clone()),
                    right_team: Some(attacking.clone()),
                    ..FrameMeta::default()
                },
            };
            let offside = offside_positions(&frame);
            let receiver = frame
                .attackers()
                .filter(|p| p.id != PlayerId(1) && !offside.contains(&p.id))
                .map(|p| (p.pos.dist(ball), p.id))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, id)) = receiver {
                break (frame, id);
            }
        };

        let features = if config.rule.uses_space() {
            let pass = PassEvent {
                event_id: event_id.clone(),
                frame_index,
                team: attacking.clone(),
                passer_id: PlayerId(1),
                intended_receiver_id: None,
                outcome: Outcome::Success,
                ball_pos: None,
            };
            offball_features(&frame, &pass, pitch, mp, w, SpaceSemantics::Current)?
                .into_iter()
                .find(|f| f.player_id == receiver)
                .ok_or_else(|| Error::Internal("receiver missing from candidates".into()))?
        } else {
            let r = frame.player(receiver).expect("receiver in frame");
            let ball = frame.ball.pos;
            let defenders: Vec<Point2> = frame.defenders().map(|d| mp.predicted(d.pos, d.vel)).collect();
            OffBallFeatures {
                player_id: receiver,
                fast_space_vel: f64::NAN,
                variation_space_vel: f64::NAN,
                dist_ball: ball.dist(r.pos),
                time_to_player: defenders
                    .iter()
                    .map(|d| mp.time_from_predicted(*d, r.pos))
                    .fold(f64::INFINITY, f64::min),
                time_to_passline: defenders
                    .iter()
                    .map(|d| passline_time(*d, ball, r.pos, mp))
                    .fold(f64::INFINITY, f64::min),
            }
        };
        let probability = sigmoid(config.rule.logit(&features));
        let success = s.rng.random::<f64>() < probability;
        let finite = |v: f64| v.is_finite().then_some(v);
        truth.push(GroundTruth {
            event_id: event_id.clone(),
            probability,
            receiver: receiver.0,
            dist_ball: features.dist_ball,
            time_to_player: finite(features.time_to_player),
            time_to_passline: finite(features.time_to_passline),
        });
        events.push(MatchEvent {
            event_id,
            kind: EventKind::Pass,
            frame: frame_index,
            team: attacking.clone(),
            player: Some(PlayerId(1)),
            receiver: Some(receiver),
            outcome: Some(if success { Outcome::Success } else { Outcome::Failure }),
            pos: Some(frame.ball.pos),
            period: Some(1),
            extra: Default::default(),
        });
        frames.push(frame);
    }
    Ok(SynthMatch {
        frames,
        events,
        ground_truth: truth,
    })
}
