//! Velocity-aware dominance regions and space scores.
//!
//! Each grid cell belongs to the eligible player who reaches its center
//! first. A player keeps drifting with their current velocity for the
//! reaction time, then runs straight at `max_speed`. A player's space score
//! is the field-weighted area of the cells they own.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{field_weight_clamped, PitchSpec, Point2, WeightParams};
use crate::ingest::{TeamId, TrackedFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub u32);

impl std::fmt::Display for PlayerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Attacking,
    Defending,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlayerState {
    pub id: PlayerId,
    pub team: TeamId,
    pub side: Side,
    pub pos: Point2,
    /// m/s
    pub vel: Point2,
    pub extra: BTreeMap<String, Value>,
}

impl PlayerState {
    pub fn new(id: u32, team: &str, side: Side, pos: Point2, vel: Point2) -> Self {
        PlayerState {
            id: PlayerId(id),
            team: TeamId::new(team),
            side,
            pos,
            vel,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    /// seconds
    pub reaction_time: f64,
    /// m/s
    pub max_speed: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            reaction_time: 0.2,
            max_speed: 7.8,
        }
    }
}

impl MotionParams {
    pub fn new(reaction_time: f64, max_speed: f64) -> Result<Self> {
        let mp = MotionParams {
            reaction_time,
            max_speed,
        };
        mp.validate()?;
        Ok(mp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reaction_time.is_finite() && self.reaction_time >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "reaction_time must be >= 0, got {}",
                self.reaction_time
            )));
        }
        if !(self.max_speed.is_finite() && self.max_speed > 0.0) {
            return Err(Error::InvalidParam(format!(
                "max_speed must be > 0, got {}",
                self.max_speed
            )));
        }
        Ok(())
    }

    /// Where a player starts running from after the reaction time.
    #[inline]
    pub fn predicted(&self, pos: Point2, vel: Point2) -> Point2 {
        pos + vel * self.reaction_time
    }

    #[inline]
    pub fn time_from_predicted(&self, predicted: Point2, target: Point2) -> f64 {
        let dx = target.x - predicted.x;
        let dy = target.y - predicted.y;
        self.reaction_time + (dx * dx + dy * dy).sqrt() / self.max_speed
    }
}

/// Seconds for a player to reach `target`.
pub fn arrival_time(ps: &PlayerState, target: Point2, mp: &MotionParams) -> f64 {
    mp.time_from_predicted(mp.predicted(ps.pos, ps.vel), target)
}

/// Ownership of every grid cell and the winning arrival time.
///
/// Cells are stored row-major: index `iy * nx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceField {
    pub pitch: PitchSpec,
    pub owner: Vec<PlayerId>,
    pub arrival: Vec<f64>,
    pub excluded: BTreeSet<PlayerId>,
}

impl DominanceField {
    pub fn nx(&self) -> usize {
        self.pitch.nx()
    }

    pub fn ny(&self) -> usize {
        self.pitch.ny()
    }

    pub fn owner_at(&self, ix: usize, iy: usize) -> PlayerId {
        self.owner[iy * self.nx() + ix]
    }

    pub fn cell_counts(&self) -> BTreeMap<PlayerId, usize> {
        let mut counts = BTreeMap::new();
        for id in &self.owner {
            *counts.entry(*id).or_insert(0) += 1;
        }
        counts
    }
}

/// Per-player entry of a [`SpaceScoreTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerSpace {
    pub player_id: PlayerId,
    pub side: Side,
    /// weighted m^2
    pub score: f64,
    /// Score change for a 1 m move toward k*45 degrees (k = 0 is +x).
    pub deltas: [f64; 8],
    pub excluded_offside: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpaceScoreTable {
    pub players: Vec<PlayerSpace>,
}

impl SpaceScoreTable {
    pub fn get(&self, id: PlayerId) -> Option<&PlayerSpace> {
        self.players.iter().find(|p| p.player_id == id)
    }

    pub fn score(&self, id: PlayerId) -> Option<f64> {
        self.get(id).map(|p| p.score)
    }
}

/// Unit vectors for the eight probe directions, counterclockwise from +x.
pub const DIRECTIONS: [Point2; 8] = {
    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;
    [
        Point2::new(1.0, 0.0),
        Point2::new(S, S),
        Point2::new(0.0, 1.0),
        Point2::new(-S, S),
        Point2::new(-1.0, 0.0),
        Point2::new(-S, -S),
        Point2::new(0.0, -1.0),
        Point2::new(S, -S),
    ]
};

/// Probe step length in meters.
pub const PROBE_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    time: f64,
    id: PlayerId,
    slot: usize,
}

impl Candidate {
    const NONE: Candidate = Candidate {
        time: f64::INFINITY,
        id: PlayerId(u32::MAX),
        slot: usize::MAX,
    };

    #[inline]
    fn beats(&self, other: &Candidate) -> bool {
        self.time < other.time || (self.time == other.time && self.id < other.id)
    }
}

/// Dominance state for one frame, with enough bookkeeping to re-score a
/// single displaced player without recomputing the whole grid.
pub struct SpaceEngine<'a> {
    frame: &'a TrackedFrame,
    pitch: PitchSpec,
    motion: MotionParams,
    centers: Vec<Point2>,
    weight_attack: Vec<f64>,
    weight_defend: Vec<f64>,
    /// Frame-player indices that take part in the partition.
    eligible: Vec<usize>,
    excluded: BTreeSet<PlayerId>,
    best: Vec<Candidate>,
    second: Vec<Candidate>,
}

impl<'a> SpaceEngine<'a> {
    pub fn new(
        frame: &'a TrackedFrame,
        pitch: &PitchSpec,
        motion: &MotionParams,
        weight: &WeightParams,
        excluded: &BTreeSet<PlayerId>,
    ) -> Result<Self> {
        pitch.validate()?;
        motion.validate()?;
        weight.validate()?;
        let eligible: Vec<usize> = frame
            .players
            .iter()
            .enumerate()
            .filter(|(_, p)| !excluded.contains(&p.id))
            .map(|(i, _)| i)
            .collect();
        if eligible.is_empty() {
            return Err(Error::Data(format!(
                "frame {}: no eligible players for the dominance grid",
                frame.frame_index
            )));
        }
        let centers = pitch.cell_centers();
        let weight_attack = centers
            .iter()
            .map(|c| field_weight_clamped(*c, pitch, weight, true))
            .collect();
        let weight_defend = centers
            .iter()
            .map(|c| field_weight_clamped(*c, pitch, weight, false))
            .collect();
        let mut engine = SpaceEngine {
            frame,
            pitch: *pitch,
            motion: *motion,
            centers,
            weight_attack,
            weight_defend,
            eligible,
            excluded: excluded.clone(),
            best: Vec::new(),
            second: Vec::new(),
        };
        engine.assign();
        Ok(engine)
    }

    fn assign(&mut self) {
        let n = self.centers.len();
        let mut best = vec![Candidate::NONE; n];
        let mut second = vec![Candidate::NONE; n];
        let preds: Vec<(Point2, PlayerId, usize)> = self
            .eligible
            .iter()
            .map(|&i| {
                let p = &self.frame.players[i];
                (self.motion.predicted(p.pos, p.vel), p.id, i)
            })
            .collect();
        for (c, center) in self.centers.iter().enumerate() {
            let (mut b, mut s) = (Candidate::NONE, Candidate::NONE);
            for &(pred, id, slot) in &preds {
                let cand = Candidate {
                    time: self.motion.time_from_predicted(pred, *center),
                    id,
                    slot,
                };
                if cand.beats(&b) {
                    s = b;
                    b = cand;
                } else if cand.beats(&s) {
                    s = cand;
                }
            }
            best[c] = b;
            second[c] = s;
        }
        self.best = best;
        self.second = second;
    }

    fn weights_for(&self, side: Side) -> &[f64] {
        match side {
            Side::Attacking => &self.weight_attack,
            Side::Defending => &self.weight_defend,
        }
    }

    pub fn field(&self) -> DominanceField {
        DominanceField {
            pitch: self.pitch,
            owner: self.best.iter().map(|c| c.id).collect(),
            arrival: self.best.iter().map(|c| c.time).collect(),
            excluded: self.excluded.clone(),
        }
    }

    fn slot_of(&self, id: PlayerId) -> Result<usize> {
        self.frame
            .players
            .iter()
            .position(|p| p.id == id)
            .ok_or(Error::UnknownPlayer(id.0))
    }

    /// Current space score; 0 for excluded players.
    pub fn score(&self, id: PlayerId) -> Result<f64> {
        let slot = self.slot_of(id)?;
        let side = self.frame.players[slot].side;
        let w = self.weights_for(side);
        let area = self.pitch.cell_area();
        Ok(self
            .best
            .iter()
            .zip(w)
            .filter(|(c, _)| c.slot == slot)
            .map(|(_, w)| w * area)
            .sum())
    }

    /// Score changes for 1 m moves in the eight directions.
    ///
    /// Only the probed player moves (velocity unchanged, position clamped to
    /// the pitch); every other eligible player keeps their arrival times, so
    /// each cell is decided between the probed player's new time and the
    /// best time among the others.
    pub fn deltas(&self, id: PlayerId) -> Result<[f64; 8]> {
        let slot = self.slot_of(id)?;
        if self.excluded.contains(&id) {
            return Ok([0.0; 8]);
        }
        let player = &self.frame.players[slot];
        let w = self.weights_for(player.side);
        let area = self.pitch.cell_area();
        let pred = self.motion.predicted(player.pos, player.vel);

        // A 1 m move changes this player's arrival time by at most
        // step / max_speed, so cells outside this set cannot be won.
        let slack = PROBE_STEP / self.motion.max_speed + 1e-9;
        let mut reachable: Vec<(usize, Candidate)> = Vec::new();
        let mut base = 0.0;
        for c in 0..self.centers.len() {
            let (mine, other) = if self.best[c].slot == slot {
                (self.best[c], self.second[c])
            } else {
                let mine = Candidate {
                    time: self.motion.time_from_predicted(pred, self.centers[c]),
                    id,
                    slot,
                };
                (mine, self.best[c])
            };
            if self.best[c].slot == slot {
                base += w[c] * area;
            }
            if mine.time - slack <= other.time {
                reachable.push((c, other));
            }
        }

        let mut out = [0.0; 8];
        for (k, dir) in DIRECTIONS.iter().enumerate() {
            let moved = self.pitch.clamp(player.pos + *dir * PROBE_STEP);
            let moved_pred = self.motion.predicted(moved, player.vel);
            let mut score = 0.0;
            for &(c, other) in &reachable {
                let mine = Candidate {
                    time: self.motion.time_from_predicted(moved_pred, self.centers[c]),
                    id,
                    slot,
                };
                if mine.beats(&other) {
                    score += w[c] * area;
                }
            }
            out[k] = score - base;
        }
        Ok(out)
    }

    /// Scores for every player in the frame; deltas only for `with_deltas`.
    pub fn table(&self, with_deltas: &BTreeSet<PlayerId>) -> Result<SpaceScoreTable> {
        let area = self.pitch.cell_area();
        let mut scores = vec![0.0; self.frame.players.len()];
        for (c, cand) in self.best.iter().enumerate() {
            let side = self.frame.players[cand.slot].side;
            scores[cand.slot] += self.weights_for(side)[c] * area;
        }
        let mut players = Vec::with_capacity(self.frame.players.len());
        for (slot, p) in self.frame.players.iter().enumerate() {
            let excluded = self.excluded.contains(&p.id);
            let deltas = if !excluded && with_deltas.contains(&p.id) {
                self.deltas(p.id)?
            } else {
                [0.0; 8]
            };
            players.push(PlayerSpace {
                player_id: p.id,
                side: p.side,
                score: if excluded { 0.0 } else { scores[slot] },
                deltas,
                excluded_offside: excluded,
            });
        }
        Ok(SpaceScoreTable { players })
    }
}

/// Assign every cell to the eligible player with the smallest arrival time
/// (ties to the smaller player id).
pub fn compute_dominance_grid(
    frame: &TrackedFrame,
    pitch: &PitchSpec,
    mp: &MotionParams,
    excluded: &BTreeSet<PlayerId>,
) -> Result<DominanceField> {
    Ok(SpaceEngine::new(frame, pitch, mp, &WeightParams::default(), excluded)?.field())
}

/// Weighted area of each player's cells. Attackers use the weight rising
/// toward +x, defenders its left-right mirror. Deltas are left at zero.
pub fn space_scores(field: &DominanceField, frame: &TrackedFrame, w: &WeightParams) -> SpaceScoreTable {
    let pitch = &field.pitch;
    let area = pitch.cell_area();
    let nx = pitch.nx();
    let mut scores: BTreeMap<PlayerId, f64> = BTreeMap::new();
    let sides: BTreeMap<PlayerId, Side> = frame.players.iter().map(|p| (p.id, p.side)).collect();
    for (c, owner) in field.owner.iter().enumerate() {
        let center = pitch.cell_center(c % nx, c / nx);
        let attacking = sides.get(owner) == Some(&Side::Attacking);
        *scores.entry(*owner).or_insert(0.0) += field_weight_clamped(center, pitch, w, attacking) * area;
    }
    SpaceScoreTable {
        players: frame
            .players
            .iter()
            .map(|p| {
                let excluded = field.excluded.contains(&p.id);
                PlayerSpace {
                    player_id: p.id,
                    side: p.side,
                    score: if excluded { 0.0 } else { scores.get(&p.id).copied().unwrap_or(0.0) },
                    deltas: [0.0; 8],
                    excluded_offside: excluded,
                }
            })
            .collect(),
    }
}

/// Space-score change for 1 m moves of one player in the eight directions.
pub fn directional_space_deltas(
    frame: &TrackedFrame,
    player_id: PlayerId,
    pitch: &PitchSpec,
    mp: &MotionParams,
    w: &WeightParams,
    excluded: &BTreeSet<PlayerId>,
) -> Result<[f64; 8]> {
    if frame.player(player_id).is_none() {
        return Err(Error::UnknownPlayer(player_id.0));
    }
    if excluded.contains(&player_id) {
        return Err(Error::Domain(format!("player {player_id} is excluded from the grid")));
    }
    SpaceEngine::new(frame, pitch, mp, w, excluded)?.deltas(player_id)
}

/// Attackers in a static offside position.
///
/// An attacker is excluded when in the opponent half, ahead of the ball and
/// strictly ahead of the second-rearmost defender. With fewer than two
/// defenders only the first two conditions apply. Assumes attack toward +x.
pub fn offside_positions(frame: &TrackedFrame) -> BTreeSet<PlayerId> {
    let mut defender_x: Vec<f64> = frame.defenders().map(|p| p.pos.x).collect();
    defender_x.sort_by(|a, b| b.total_cmp(a));
    let second_last = defender_x.get(1).copied();
    frame
        .attackers()
        .filter(|p| {
            p.pos.x > 0.0 && p.pos.x > frame.ball.pos.x && second_last.is_none_or(|d| p.pos.x > d)
        })
        .map(|p| p.id)
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ingest::{BallState, FrameMeta};

    pub(crate) fn frame_of(players: Vec<PlayerState>, ball: Point2) -> TrackedFrame {
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
    }

    pub(crate) fn attacker(id: u32, x: f64, y: f64) -> PlayerState {
        PlayerState::new(id, "A", Side::Attacking, Point2::new(x, y), Point2::default())
    }

    pub(crate) fn defender(id: u32, x: f64, y: f64) -> PlayerState {
        PlayerState::new(id, "B", Side::Defending, Point2::new(x, y), Point2::default())
    }

    #[test]
    fn arrival_time_examples() {
        let mp = MotionParams::default();
        let p = attacker(1, 0.0, 0.0);
        assert!((arrival_time(&p, Point2::new(7.8, 0.0), &mp) - 1.2).abs() < 1e-12);
        assert_eq!(arrival_time(&p, Point2::new(0.0, 0.0), &mp), 0.2);
        let mut moving = p.clone();
        moving.vel = Point2::new(5.0, 0.0);
        assert_eq!(arrival_time(&moving, Point2::new(1.0, 0.0), &mp), 0.2);
    }

    #[test]
    fn single_player_owns_everything() {
        let pitch = PitchSpec::new(105.0, 68.0, 1.0).unwrap();
        let frame = frame_of(vec![attacker(3, 5.0, 5.0)], Point2::default());
        let field = compute_dominance_grid(&frame, &pitch, &MotionParams::default(), &BTreeSet::new()).unwrap();
        assert!(field.owner.iter().all(|o| *o == PlayerId(3)));
        assert!(field.arrival.iter().all(|t| *t >= 0.2));
    }

    #[test]
    fn no_eligible_players_is_error() {
        let frame = frame_of(vec![attacker(3, 5.0, 5.0)], Point2::default());
        let excluded = BTreeSet::from([PlayerId(3)]);
        assert!(compute_dominance_grid(&frame, &PitchSpec::default(), &MotionParams::default(), &excluded).is_err());
    }

    #[test]
    fn symmetric_pair_splits_in_half() {
        let pitch = PitchSpec::default();
        let frame = frame_of(vec![attacker(1, -10.0, 0.0), attacker(2, 10.0, 0.0)], Point2::default());
        let field = compute_dominance_grid(&frame, &pitch, &MotionParams::default(), &BTreeSet::new()).unwrap();
        let counts = field.cell_counts();
        assert_eq!(counts[&PlayerId(1)], pitch.cell_count() / 2);
        assert_eq!(counts[&PlayerId(2)], pitch.cell_count() / 2);
    }

    #[test]
    fn single_attacker_closed_form() {
        let pitch = PitchSpec::default();
        let w = WeightParams::default();
        let frame = frame_of(vec![attacker(1, 0.0, 0.0)], Point2::default());
        let field = compute_dominance_grid(&frame, &pitch, &MotionParams::default(), &BTreeSet::new()).unwrap();
        let table = space_scores(&field, &frame, &w);
        assert!((table.score(PlayerId(1)).unwrap() - 2677.5).abs() < 2677.5 * 0.01);
    }

    #[test]
    fn lone_defender_mirrored_weight_same_total() {
        let pitch = PitchSpec::default();
        let w = WeightParams::default();
        let frame = frame_of(
            vec![attacker(1, 10.0, 0.0), attacker(2, 20.0, 3.0), defender(9, -30.0, 10.0)],
            Point2::default(),
        );
        let excluded = BTreeSet::from([PlayerId(1), PlayerId(2)]);
        let field = compute_dominance_grid(&frame, &pitch, &MotionParams::default(), &excluded).unwrap();
        let table = space_scores(&field, &frame, &w);
        assert!((table.score(PlayerId(9)).unwrap() - 2677.5).abs() < 1e-6);
        assert_eq!(table.score(PlayerId(1)), Some(0.0));
        assert!(table.get(PlayerId(1)).unwrap().excluded_offside);
    }

    #[test]
    fn x_weight_orders_symmetric_attackers() {
        let pitch = PitchSpec::default();
        let w = WeightParams::default();
        let frame = frame_of(vec![attacker(1, -10.0, 0.0), attacker(2, 10.0, 0.0)], Point2::default());
        let field = compute_dominance_grid(&frame, &pitch, &MotionParams::default(), &BTreeSet::new()).unwrap();
        let t = space_scores(&field, &frame, &w);
        assert!(t.score(PlayerId(1)).unwrap() < t.score(PlayerId(2)).unwrap());
    }

    #[test]
    fn engine_scores_match_space_scores() {
        let pitch = PitchSpec::new(105.0, 68.0, 1.0).unwrap();
        let w = WeightParams::default();
        let frame = frame_of(
            vec![attacker(1, -10.0, 4.0), attacker(2, 10.0, 0.0), defender(3, 20.0, -8.0)],
            Point2::default(),
        );
        let mp = MotionParams::default();
        let engine = SpaceEngine::new(&frame, &pitch, &mp, &w, &BTreeSet::new()).unwrap();
        let field = engine.field();
        let table = space_scores(&field, &frame, &w);
        for p in &frame.players {
            assert!((engine.score(p.id).unwrap() - table.score(p.id).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn lone_player_deltas_are_zero() {
        let frame = frame_of(vec![attacker(1, 0.0, 0.0)], Point2::default());
        let d = directional_space_deltas(
            &frame,
            PlayerId(1),
            &PitchSpec::default(),
            &MotionParams::default(),
            &WeightParams::default(),
            &BTreeSet::new(),
        )
        .unwrap();
        assert_eq!(d, [0.0; 8]);
    }

    #[test]
    fn unknown_player_delta_is_error() {
        let frame = frame_of(vec![attacker(1, 0.0, 0.0)], Point2::default());
        let r = directional_space_deltas(
            &frame,
            PlayerId(7),
            &PitchSpec::default(),
            &MotionParams::default(),
            &WeightParams::default(),
            &BTreeSet::new(),
        );
        assert!(matches!(r, Err(Error::UnknownPlayer(7))));
    }

    #[test]
    fn forward_step_loses_bisector_strip() {
        // Moving the right player 1 m toward +x shifts the bisector from
        // x = 0 to x = 0.5: it loses the strip 0 < x < 0.5.
        let pitch = PitchSpec::new(105.0, 68.0, 0.25).unwrap();
        let w = WeightParams::default();
        let frame = frame_of(vec![attacker(1, -10.0, 0.0), attacker(2, 10.0, 0.0)], Point2::default());
        let d = directional_space_deltas(&frame, PlayerId(2), &pitch, &MotionParams::default(), &w, &BTreeSet::new())
            .unwrap();
        // Oracle: weighted mass of the strip by direct summation on the grid.
        let strip: f64 = pitch
            .cell_centers()
            .into_iter()
            .filter(|c| c.x > 0.0 && c.x < 0.5)
            .map(|c| field_weight_clamped(c, &pitch, &w, true) * pitch.cell_area())
            .sum();
        assert!(strip > 0.0);
        assert!((d[0] + strip).abs() < 1e-9, "{} vs {}", d[0], -strip);
    }

    #[test]
    fn offside_rules() {
        let frame = frame_of(
            vec![
                attacker(1, 40.0, 0.0),
                attacker(2, -5.0, 0.0),
                attacker(3, 30.0, 5.0),
                defender(10, 45.0, 0.0),
                defender(11, 30.0, 0.0),
            ],
            Point2::new(20.0, 0.0),
        );
        let off = offside_positions(&frame);
        assert_eq!(off, BTreeSet::from([PlayerId(1)]));
    }

    #[test]
    fn offside_with_one_defender_uses_ball_and_halfway() {
        let frame = frame_of(
            vec![attacker(1, 40.0, 0.0), attacker(2, 10.0, 0.0), defender(10, 45.0, 0.0)],
            Point2::new(20.0, 0.0),
        );
        assert_eq!(offside_positions(&frame), BTreeSet::from([PlayerId(1)]));
    }
}
