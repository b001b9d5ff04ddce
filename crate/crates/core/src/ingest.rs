//! Tracking and event files, kickoff synchronization and attack sequences.
//!
//! Both files are UTF-8 with one JSON object per line. Unknown keys are kept
//! on the in-memory records and written back unchanged.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dominance::{PlayerId, PlayerState, Side};
use crate::error::{Error, Result};
use crate::geometry::{PitchSpec, Point2};

/// Frames searched on each side of the event-data kickoff frame.
pub const KICKOFF_HALF_WINDOW: usize = 50;
/// The kickoff is this many frames before the ball-acceleration peak.
pub const KICKOFF_OFFSET: i64 = 4;
/// Attack sequences shorter than this are dropped.
pub const MIN_SEQUENCE_SECONDS: f64 = 1.0;
/// Consecutive opponent on-ball events that end an attack.
pub const OPPONENT_EVENTS_TO_CLOSE: usize = 2;

const MAX_PLAYERS: usize = 22;
const MAX_PLAUSIBLE_SPEED: f64 = 13.0;
const OUT_OF_BOUNDS_SLACK: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TeamId(pub String);

impl TeamId {
    pub fn new(s: impl Into<String>) -> Self {
        TeamId(s.into())
    }
}

impl std::fmt::Display for TeamId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BallState {
    pub pos: Point2,
    pub vel: Point2,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMeta {
    pub period: u32,
    /// Team in possession; decides each player's [`Side`].
    pub attacking_team: Option<TeamId>,
    /// Team playing toward +x in this frame's coordinates.
    pub right_team: Option<TeamId>,
    /// Set when the frame has been mirrored left-right.
    pub mirrored: bool,
    pub warnings: Vec<String>,
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedFrame {
    pub frame_index: i64,
    pub time: f64,
    pub ball: BallState,
    pub players: Vec<PlayerState>,
    pub meta: FrameMeta,
}

impl TrackedFrame {
    /// Distinct team identifiers present, sorted.
    pub fn teams(&self) -> Vec<TeamId> {
        let mut teams: Vec<TeamId> = self.players.iter().map(|p| p.team.clone()).collect();
        teams.sort();
        teams.dedup();
        teams
    }

    pub fn other_team(&self, team: &TeamId) -> Option<TeamId> {
        self.teams().into_iter().find(|t| t != team)
    }

    pub fn player(&self, id: PlayerId) -> Option<&PlayerState> {
        self.players.iter().find(|p| p.id == id)
    }

    pub fn attackers(&self) -> impl Iterator<Item = &PlayerState> {
        self.players.iter().filter(|p| p.side == Side::Attacking)
    }

    pub fn defenders(&self) -> impl Iterator<Item = &PlayerState> {
        self.players.iter().filter(|p| p.side == Side::Defending)
    }

    /// Relabel sides so that `team` is attacking.
    pub fn set_attacking_team(&mut self, team: &TeamId) {
        for p in &mut self.players {
            p.side = if &p.team == team {
                Side::Attacking
            } else {
                Side::Defending
            };
        }
        self.meta.attacking_team = Some(team.clone());
    }

    /// Whether `team` plays toward +x in this frame.
    ///
    /// Uses `right_team` when the feed provides it; otherwise the team whose
    /// players sit further toward -x on average is taken to attack right.
    pub fn attacks_right(&self, team: &TeamId) -> bool {
        if let Some(right) = &self.meta.right_team {
            return right == team;
        }
        let mean_x = |own: bool| {
            let xs: Vec<f64> = self
                .players
                .iter()
                .filter(|p| (&p.team == team) == own)
                .map(|p| p.pos.x)
                .collect();
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        mean_x(true) <= mean_x(false)
    }

    /// Copy with `team` attacking toward +x.
    pub fn oriented_for(&self, team: &TeamId) -> TrackedFrame {
        let right = self.attacks_right(team);
        let mut f = crate::geometry::normalize_attack_direction(self, right);
        f.set_attacking_team(team);
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    Pass,
    Shot,
    Kickoff,
    ThrowIn,
    Corner,
    FreeKick,
    GoalKick,
    Interception,
    Recovery,
    Other(String),
}

impl EventKind {
    pub fn parse(s: &str) -> Self {
        match s {
            "pass" => EventKind::Pass,
            "shot" => EventKind::Shot,
            "kickoff" => EventKind::Kickoff,
            "throw_in" => EventKind::ThrowIn,
            "corner" => EventKind::Corner,
            "free_kick" => EventKind::FreeKick,
            "goal_kick" => EventKind::GoalKick,
            "interception" => EventKind::Interception,
            "recovery" => EventKind::Recovery,
            other => EventKind::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            EventKind::Pass => "pass",
            EventKind::Shot => "shot",
            EventKind::Kickoff => "kickoff",
            EventKind::ThrowIn => "throw_in",
            EventKind::Corner => "corner",
            EventKind::FreeKick => "free_kick",
            EventKind::GoalKick => "goal_kick",
            EventKind::Interception => "interception",
            EventKind::Recovery => "recovery",
            EventKind::Other(s) => s,
        }
    }

    pub fn is_set_play(&self) -> bool {
        matches!(
            self,
            EventKind::Kickoff | EventKind::ThrowIn | EventKind::Corner | EventKind::FreeKick | EventKind::GoalKick
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchEvent {
    pub event_id: String,
    pub kind: EventKind,
    pub frame: i64,
    pub team: TeamId,
    pub player: Option<PlayerId>,
    pub receiver: Option<PlayerId>,
    pub outcome: Option<Outcome>,
    pub pos: Option<Point2>,
    pub period: Option<u32>,
    pub extra: BTreeMap<String, Value>,
}

/// A pass joined to the tracking clock.
#[derive(Debug, Clone, PartialEq)]
pub struct PassEvent {
    pub event_id: String,
    pub frame_index: i64,
    pub team: TeamId,
    pub passer_id: PlayerId,
    pub intended_receiver_id: Option<PlayerId>,
    pub outcome: Outcome,
    pub ball_pos: Option<Point2>,
}

impl MatchEvent {
    pub fn as_pass(&self) -> Option<PassEvent> {
        if self.kind != EventKind::Pass {
            return None;
        }
        Some(PassEvent {
            event_id: self.event_id.clone(),
            frame_index: self.frame,
            team: self.team.clone(),
            passer_id: self.player?,
            intended_receiver_id: self.receiver,
            outcome: self.outcome?,
            ball_pos: self.pos,
        })
    }
}

/// One match held in memory after validation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Match {
    pub frames: Vec<TrackedFrame>,
    pub events: Vec<MatchEvent>,
    pub warnings: Vec<String>,
}

impl Match {
    pub fn frame_at(&self, frame_index: i64) -> Option<&TrackedFrame> {
        find_frame(&self.frames, frame_index)
    }

    pub fn passes(&self) -> impl Iterator<Item = PassEvent> + '_ {
        self.events.iter().filter_map(MatchEvent::as_pass)
    }
}

pub fn find_frame(frames: &[TrackedFrame], frame_index: i64) -> Option<&TrackedFrame> {
    frames
        .binary_search_by_key(&frame_index, |f| f.frame_index)
        .ok()
        .map(|i| &frames[i])
}

// ---------------------------------------------------------------------------
// File records
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct BallRecord {
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vy: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PlayerRecord {
    id: u32,
    team: String,
    x: f64,
    y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vy: Option<f64>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackingRecord {
    frame: i64,
    time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    period: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attacking_team: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right_team: Option<String>,
    ball: BallRecord,
    players: Vec<PlayerRecord>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum IdValue {
    Int(i64),
    Str(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRecord {
    event_id: IdValue,
    #[serde(rename = "type")]
    kind: String,
    frame: i64,
    team: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    player: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    receiver: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome: Option<Outcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    period: Option<u32>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

fn schema_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn frame_from_record(rec: TrackingRecord, path: &Path, line: usize, pitch: &PitchSpec) -> Result<TrackedFrame> {
    let mut warnings = Vec::new();
    if !rec.time.is_finite() {
        return Err(schema_err(path, line, "non-finite time"));
    }
    let ball_pos = Point2::new(rec.ball.x, rec.ball.y);
    if !ball_pos.is_finite() {
        return Err(schema_err(path, line, "non-finite ball position"));
    }
    if rec.ball.vx.is_none() || rec.ball.vy.is_none() {
        warnings.push("ball velocity missing, assumed 0".to_string());
    }
    let ball = BallState {
        pos: ball_pos,
        vel: Point2::new(rec.ball.vx.unwrap_or(0.0), rec.ball.vy.unwrap_or(0.0)),
    };
    if rec.players.len() > MAX_PLAYERS {
        return Err(schema_err(
            path,
            line,
            format!("{} players in frame, at most {MAX_PLAYERS} allowed", rec.players.len()),
        ));
    }
    if rec.players.len() < MAX_PLAYERS {
        warnings.push(format!(
            "missing player: {} of {MAX_PLAYERS} present",
            rec.players.len()
        ));
    }
    let attacking = rec
        .attacking_team
        .clone()
        .or_else(|| rec.right_team.clone())
        .or_else(|| rec.players.first().map(|p| p.team.clone()))
        .map(TeamId);
    let mut players = Vec::with_capacity(rec.players.len());
    for pr in rec.players {
        let pos = Point2::new(pr.x, pr.y);
        if !pos.is_finite() {
            return Err(schema_err(path, line, format!("player {} has a non-finite position", pr.id)));
        }
        if players.iter().any(|p: &PlayerState| p.id.0 == pr.id) {
            return Err(schema_err(path, line, format!("duplicate player id {}", pr.id)));
        }
        if pr.vx.is_none() || pr.vy.is_none() {
            warnings.push(format!("player {} velocity missing, assumed 0", pr.id));
        }
        let vel = Point2::new(pr.vx.unwrap_or(0.0), pr.vy.unwrap_or(0.0));
        if !vel.is_finite() {
            return Err(schema_err(path, line, format!("player {} has a non-finite velocity", pr.id)));
        }
        if vel.norm() > MAX_PLAUSIBLE_SPEED {
            warnings.push(format!("player {} speed {:.2} m/s exceeds {MAX_PLAUSIBLE_SPEED}", pr.id, vel.norm()));
        }
        if !pitch.contains_with_slack(pos, OUT_OF_BOUNDS_SLACK) {
            warnings.push(format!("player {} outside pitch bounds", pr.id));
        }
        let team = TeamId(pr.team);
        let side = if Some(&team) == attacking.as_ref() {
            Side::Attacking
        } else {
            Side::Defending
        };
        players.push(PlayerState {
            id: PlayerId(pr.id),
            team,
            side,
            pos,
            vel,
            extra: pr.extra,
        });
    }
    Ok(TrackedFrame {
        frame_index: rec.frame,
        time: rec.time,
        ball,
        players,
        meta: FrameMeta {
            period: rec.period.unwrap_or(1),
            attacking_team: rec.attacking_team.map(TeamId),
            right_team: rec.right_team.map(TeamId),
            mirrored: false,
            warnings,
            extra: rec.extra,
        },
    })
}

fn record_from_frame(f: &TrackedFrame) -> TrackingRecord {
    TrackingRecord {
        frame: f.frame_index,
        time: f.time,
        period: Some(f.meta.period),
        attacking_team: f.meta.attacking_team.as_ref().map(|t| t.0.clone()),
        right_team: f.meta.right_team.as_ref().map(|t| t.0.clone()),
        ball: BallRecord {
            x: f.ball.pos.x,
            y: f.ball.pos.y,
            vx: Some(f.ball.vel.x),
            vy: Some(f.ball.vel.y),
        },
        players: f
            .players
            .iter()
            .map(|p| PlayerRecord {
                id: p.id.0,
                team: p.team.0.clone(),
                x: p.pos.x,
                y: p.pos.y,
                vx: Some(p.vel.x),
                vy: Some(p.vel.y),
                extra: p.extra.clone(),
            })
            .collect(),
        extra: f.meta.extra.clone(),
    }
}

fn event_from_record(rec: EventRecord, path: &Path, line: usize, warnings: &mut Vec<String>) -> Result<MatchEvent> {
    let event_id = match rec.event_id {
        IdValue::Int(i) => i.to_string(),
        IdValue::Str(s) => s,
    };
    let kind = EventKind::parse(&rec.kind);
    if kind == EventKind::Pass {
        if rec.outcome.is_none() {
            return Err(schema_err(path, line, format!("pass {event_id} has no outcome")));
        }
        if rec.player.is_none() {
            return Err(schema_err(path, line, format!("pass {event_id} has no player")));
        }
    }
    let pos = match (rec.x, rec.y) {
        (Some(x), Some(y)) => Some(Point2::new(x, y)),
        _ => {
            warnings.push(format!("line {line}: event {event_id} has no location"));
            None
        }
    };
    Ok(MatchEvent {
        event_id,
        kind,
        frame: rec.frame,
        team: TeamId(rec.team),
        player: rec.player.map(PlayerId),
        receiver: rec.receiver.map(PlayerId),
        outcome: rec.outcome,
        pos,
        period: rec.period,
        extra: rec.extra,
    })
}

fn record_from_event(e: &MatchEvent) -> EventRecord {
    EventRecord {
        event_id: IdValue::Str(e.event_id.clone()),
        kind: e.kind.as_str().to_string(),
        frame: e.frame,
        team: e.team.0.clone(),
        player: e.player.map(|p| p.0),
        receiver: e.receiver.map(|p| p.0),
        outcome: e.outcome,
        x: e.pos.map(|p| p.x),
        y: e.pos.map(|p| p.y),
        period: e.period,
        extra: e.extra.clone(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)>> {
    let reader = open(path)?;
    let owned = path.to_path_buf();
    Ok(reader
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| Error::io(&owned, e))))
        .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true)))
}

pub fn load_tracking(path: &Path, pitch: &PitchSpec) -> Result<Vec<TrackedFrame>> {
    let mut frames: Vec<TrackedFrame> = Vec::new();
    for (line, text) in lines(path)? {
        let text = text?;
        let rec: TrackingRecord =
            serde_json::from_str(&text).map_err(|e| schema_err(path, line, e.to_string()))?;
        let frame = frame_from_record(rec, path, line, pitch)?;
        if let Some(prev) = frames.last() {
            if frame.frame_index <= prev.frame_index {
                return Err(schema_err(
                    path,
                    line,
                    format!(
                        "frame index {} does not increase after {}",
                        frame.frame_index, prev.frame_index
                    ),
                ));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn load_events(path: &Path) -> Result<(Vec<MatchEvent>, Vec<String>)> {
    let mut events = Vec::new();
    let mut warnings = Vec::new();
    for (line, text) in lines(path)? {
        let text = text?;
        let rec: EventRecord =
            serde_json::from_str(&text).map_err(|e| schema_err(path, line, e.to_string()))?;
        events.push(event_from_record(rec, path, line, &mut warnings)?);
    }
    Ok((events, warnings))
}

/// Load and validate a tracking file and its event file.
pub fn load_match(tracking_path: &Path, events_path: &Path) -> Result<Match> {
    load_match_with(tracking_path, events_path, &PitchSpec::default())
}

pub fn load_match_with(tracking_path: &Path, events_path: &Path, pitch: &PitchSpec) -> Result<Match> {
    let frames = load_tracking(tracking_path, pitch)?;
    let (events, mut warnings) = load_events(events_path)?;
    for f in &frames {
        for w in &f.meta.warnings {
            warnings.push(format!("frame {}: {w}", f.frame_index));
        }
    }
    for e in &events {
        if find_frame(&frames, e.frame).is_none() {
            warnings.push(format!("event {} references missing frame {}", e.event_id, e.frame));
        }
    }
    Ok(Match {
        frames,
        events,
        warnings,
    })
}

pub(crate) fn write_lines<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_tracking(path: &Path, frames: &[TrackedFrame]) -> Result<()> {
    write_lines(path, frames.iter().map(record_from_frame))
}

pub fn write_events(path: &Path, events: &[MatchEvent]) -> Result<()> {
    write_lines(path, events.iter().map(record_from_event))
}

// ---------------------------------------------------------------------------
// Kickoff synchronization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct KickoffDetection {
    pub frame_index: i64,
    /// Frame index of the acceleration peak.
    pub peak_frame: i64,
    /// Frame-index range actually searched.
    pub window: (i64, i64),
    pub warnings: Vec<String>,
}

/// Ball acceleration magnitude at position `i`, from second differences.
///
/// Interior frames use central differences; the first and last frames of the
/// track use the one-sided estimate of their inner neighbour.
fn ball_acceleration(frames: &[TrackedFrame], i: usize) -> f64 {
    let (a, b, d) = (&frames[i - 1], &frames[i], &frames[i + 1]);
    let dt1 = b.time - a.time;
    let dt2 = d.time - b.time;
    if dt1 <= 0.0 || dt2 <= 0.0 {
        return 0.0;
    }
    let v1 = (b.ball.pos - a.ball.pos) * (1.0 / dt1);
    let v2 = (d.ball.pos - b.ball.pos) * (1.0 / dt2);
    (v2 - v1).norm() / ((dt1 + dt2) / 2.0)
}

const ACCELERATION_TIE: f64 = 1e-9;

/// Locate the kickoff in tracking data near the event-data kickoff frame.
///
/// Searches `hint ± 50` frames (clipped to the track) for the frame of
/// maximum ball acceleration and returns the frame four before it. Ties go
/// to the earliest frame.
pub fn detect_kickoff_frame(frames: &[TrackedFrame], hint: i64) -> Result<KickoffDetection> {
    if frames.len() < 3 {
        return Err(Error::Data(format!(
            "kickoff detection needs at least 3 frames, got {}",
            frames.len()
        )));
    }
    let i = frames.partition_point(|f| f.frame_index < hint);
    let center = if i == frames.len() || (i > 0 && hint - frames[i - 1].frame_index < frames[i].frame_index - hint) {
        i - 1
    } else {
        i
    };
    if (frames[center].frame_index - hint).unsigned_abs() > KICKOFF_HALF_WINDOW as u64 {
        return Err(Error::Data(format!(
            "kickoff hint frame {hint} lies outside the tracking data"
        )));
    }
    let mut warnings = Vec::new();
    let lo = center.saturating_sub(KICKOFF_HALF_WINDOW);
    let hi = (center + KICKOFF_HALF_WINDOW).min(frames.len() - 1);
    if hi - lo < 2 * KICKOFF_HALF_WINDOW {
        warnings.push(format!(
            "kickoff window clipped to frames {}..={}",
            frames[lo].frame_index, frames[hi].frame_index
        ));
    }
    // Differences of noisy timestamps leave ~1e-12 residue on constant
    // motion; values this close count as ties.
    // Endpoints have no central difference and are not candidates.
    let (first, last) = (lo.max(1), hi.min(frames.len() - 2));
    let mut best = first;
    let mut best_acc = f64::NEG_INFINITY;
    for i in first..=last {
        let acc = ball_acceleration(frames, i);
        if acc > best_acc + ACCELERATION_TIE {
            best_acc = acc;
            best = i;
        }
    }
    if best_acc <= ACCELERATION_TIE {
        warnings.push("degenerate acceleration: no peak in kickoff window".to_string());
    }
    let peak_frame = frames[best].frame_index;
    Ok(KickoffDetection {
        frame_index: peak_frame - KICKOFF_OFFSET,
        peak_frame,
        window: (frames[lo].frame_index, frames[hi].frame_index),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncReport {
    /// (kickoff event id, frame shift applied from that kickoff onward).
    pub shifts: Vec<(String, i64)>,
    pub events: Vec<MatchEvent>,
    pub warnings: Vec<String>,
}

/// Shift event frames so each kickoff event lands on its detected frame.
///
/// The shift found at a kickoff applies to every event up to the next
/// kickoff; events before the first kickoff take the first shift.
pub fn synchronize_events(frames: &[TrackedFrame], events: &[MatchEvent]) -> Result<SyncReport> {
    let mut shifts = Vec::new();
    let mut warnings = Vec::new();
    let mut per_event = vec![0i64; events.len()];
    let mut current: Option<i64> = None;
    let mut pending_prefix = 0usize;
    for (i, e) in events.iter().enumerate() {
        if e.kind == EventKind::Kickoff {
            let det = detect_kickoff_frame(frames, e.frame)?;
            warnings.extend(det.warnings.iter().map(|w| format!("kickoff {}: {w}", e.event_id)));
            let shift = det.frame_index - e.frame;
            shifts.push((e.event_id.clone(), shift));
            if current.is_none() {
                for s in per_event.iter_mut().take(pending_prefix) {
                    *s = shift;
                }
            }
            current = Some(shift);
        } else if current.is_none() {
            pending_prefix = i + 1;
        }
        per_event[i] = current.unwrap_or(0);
    }
    if shifts.is_empty() {
        warnings.push("no kickoff events; frames left unshifted".to_string());
    }
    let events = events
        .iter()
        .zip(per_event)
        .map(|(e, s)| {
            let mut e = e.clone();
            e.frame += s;
            e
        })
        .collect();
    Ok(SyncReport {
        shifts,
        events,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Attack sequences
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSequence {
    pub sequence_id: usize,
    pub team_id: TeamId,
    pub start_frame: i64,
    pub end_frame: i64,
    pub event_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSequence {
    pub sequence: AttackSequence,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Segmentation {
    pub sequences: Vec<AttackSequence>,
    pub dropped: Vec<DroppedSequence>,
    pub warnings: Vec<String>,
}

struct OpenSequence<'a> {
    team: TeamId,
    events: Vec<&'a MatchEvent>,
    opponent_streak: Vec<&'a MatchEvent>,
}

impl<'a> OpenSequence<'a> {
    fn new(first: &'a MatchEvent) -> Self {
        OpenSequence {
            team: first.team.clone(),
            events: vec![first],
            opponent_streak: Vec::new(),
        }
    }
}

fn close<'a>(seq: OpenSequence<'a>, raw: &mut Vec<(TeamId, Vec<&'a MatchEvent>)>) {
    let mut evs = seq.events;
    evs.extend(seq.opponent_streak);
    raw.push((seq.team, evs));
}

/// Split an event stream into attack sequences.
///
/// A sequence opens at a set play or a change of possession. Isolated
/// opponent touches are tolerated; two consecutive opponent on-ball events
/// hand the attack to the opponent. Sequences referencing missing frames or
/// lasting less than one second are reported in `dropped`.
pub fn segment_attack_sequences(events: &[MatchEvent], frames: &[TrackedFrame]) -> Result<Segmentation> {
    if let Some(w) = events.windows(2).find(|w| w[1].frame < w[0].frame) {
        return Err(Error::Data(format!(
            "events not sorted by frame: {} (frame {}) after {} (frame {})",
            w[1].event_id, w[1].frame, w[0].event_id, w[0].frame
        )));
    }
    let mut raw: Vec<(TeamId, Vec<&MatchEvent>)> = Vec::new();
    let mut open: Option<OpenSequence> = None;
    for e in events {
        if e.kind.is_set_play() {
            if let Some(seq) = open.take() {
                close(seq, &mut raw);
            }
            open = Some(OpenSequence::new(e));
            continue;
        }
        match open.as_mut() {
            None => open = Some(OpenSequence::new(e)),
            Some(seq) if seq.team == e.team => {
                let tolerated = std::mem::take(&mut seq.opponent_streak);
                seq.events.extend(tolerated);
                seq.events.push(e);
            }
            Some(seq) => {
                seq.opponent_streak.push(e);
                if seq.opponent_streak.len() >= OPPONENT_EVENTS_TO_CLOSE {
                    let streak = std::mem::take(&mut seq.opponent_streak);
                    let done = open.take().expect("open sequence");
                    close(done, &mut raw);
                    open = Some(OpenSequence {
                        team: e.team.clone(),
                        events: streak,
                        opponent_streak: Vec::new(),
                    });
                }
            }
        }
    }
    if let Some(seq) = open.take() {
        close(seq, &mut raw);
    }

    let mut out = Segmentation::default();
    for (id, (team, evs)) in raw.into_iter().enumerate() {
        let start = evs.iter().map(|e| e.frame).min().unwrap_or(0);
        let end = evs.iter().map(|e| e.frame).max().unwrap_or(0);
        let seq = AttackSequence {
            sequence_id: id,
            team_id: team,
            start_frame: start,
            end_frame: end,
            event_ids: evs.iter().map(|e| e.event_id.clone()).collect(),
        };
        if let Some(missing) = evs.iter().find(|e| find_frame(frames, e.frame).is_none()) {
            let reason = format!("event {} references missing frame {}", missing.event_id, missing.frame);
            out.warnings.push(format!("sequence {id} dropped: {reason}"));
            out.dropped.push(DroppedSequence { sequence: seq, reason });
            continue;
        }
        let t0 = find_frame(frames, start).map(|f| f.time).unwrap_or(0.0);
        let t1 = find_frame(frames, end).map(|f| f.time).unwrap_or(0.0);
        if t1 - t0 < MIN_SEQUENCE_SECONDS {
            let reason = format!("duration {:.3} s shorter than {MIN_SEQUENCE_SECONDS} s", t1 - t0);
            out.warnings.push(format!("sequence {id} dropped: {reason}"));
            out.dropped.push(DroppedSequence { sequence: seq, reason });
            continue;
        }
        out.sequences.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn ball_frame(index: i64, x: f64) -> TrackedFrame {
        TrackedFrame {
            frame_index: index,
            time: index as f64 * 0.1,
            ball: BallState {
                pos: Point2::new(x, 0.0),
                vel: Point2::default(),
            },
            players: Vec::new(),
            meta: FrameMeta::default(),
        }
    }

    fn impulse_trace(n: i64, impulse: i64) -> Vec<TrackedFrame> {
        (0..n)
            .map(|i| ball_frame(i, if i > impulse { 2.0 * (i - impulse) as f64 } else { 0.0 }))
            .collect()
    }

    fn ev(id: &str, kind: &str, frame: i64, team: &str) -> MatchEvent {
        MatchEvent {
            event_id: id.to_string(),
            kind: EventKind::parse(kind),
            frame,
            team: TeamId::new(team),
            player: Some(PlayerId(1)),
            receiver: None,
            outcome: Some(Outcome::Success),
            pos: Some(Point2::default()),
            period: None,
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn kickoff_impulse_detected() {
        let frames = impulse_trace(1000, 612);
        let det = detect_kickoff_frame(&frames, 600).unwrap();
        assert_eq!(det.frame_index, 608);
        assert!(det.warnings.is_empty());
    }

    #[test]
    fn kickoff_constant_velocity_is_degenerate() {
        let frames: Vec<_> = (0..300).map(|i| ball_frame(i, 0.5 * i as f64)).collect();
        let det = detect_kickoff_frame(&frames, 150).unwrap();
        assert_eq!(det.frame_index, 100 - 4);
        assert!(det.warnings.iter().any(|w| w.contains("degenerate")));
    }

    #[test]
    fn kickoff_window_clipped_at_start() {
        let frames = impulse_trace(400, 20);
        let det = detect_kickoff_frame(&frames, 30).unwrap();
        assert_eq!(det.window, (0, 80));
        assert_eq!(det.frame_index, 16);
        assert!(det.warnings.iter().any(|w| w.contains("clipped")));
    }

    #[test]
    fn kickoff_resync_is_idempotent() {
        let frames = impulse_trace(1000, 500);
        let events = vec![ev("k", "kickoff", 480, "A"), ev("p", "pass", 700, "A")];
        let first = synchronize_events(&frames, &events).unwrap();
        assert_eq!(first.shifts, vec![("k".to_string(), 16)]);
        assert_eq!(first.events[1].frame, 716);
        let again = synchronize_events(&frames, &first.events).unwrap();
        assert_eq!(again.shifts, vec![("k".to_string(), 0)]);
    }

    fn frames_for(n: i64) -> Vec<TrackedFrame> {
        (0..n).map(|i| ball_frame(i, 0.0)).collect()
    }

    #[test]
    fn isolated_opponent_touch_does_not_break_attack() {
        let frames = frames_for(200);
        let events = vec![
            ev("1", "pass", 0, "A"),
            ev("2", "pass", 20, "A"),
            ev("3", "interception", 40, "B"),
            ev("4", "recovery", 60, "A"),
            ev("5", "pass", 80, "A"),
        ];
        let seg = segment_attack_sequences(&events, &frames).unwrap();
        assert_eq!(seg.sequences.len(), 1);
        assert_eq!(seg.sequences[0].event_ids, vec!["1", "2", "3", "4", "5"]);
        assert_eq!((seg.sequences[0].start_frame, seg.sequences[0].end_frame), (0, 80));
    }

    #[test]
    fn two_opponent_events_close_the_attack() {
        let frames = frames_for(200);
        let events = vec![
            ev("1", "pass", 0, "A"),
            ev("1b", "pass", 30, "A"),
            ev("2", "pass", 50, "B"),
            ev("3", "pass", 70, "B"),
            ev("4", "pass", 90, "B"),
        ];
        let seg = segment_attack_sequences(&events, &frames).unwrap();
        assert_eq!(seg.sequences.len(), 2);
        assert_eq!(seg.sequences[0].team_id, TeamId::new("A"));
        assert_eq!(seg.sequences[0].event_ids, vec!["1", "1b"]);
        assert_eq!(seg.sequences[1].team_id, TeamId::new("B"));
        assert_eq!(seg.sequences[1].event_ids, vec!["2", "3", "4"]);
    }

    #[test]
    fn set_play_opens_sequence() {
        let frames = frames_for(200);
        let events = vec![
            ev("1", "pass", 0, "A"),
            ev("2", "pass", 5, "A"),
            ev("k", "kickoff", 40, "A"),
            ev("3", "pass", 60, "A"),
        ];
        let seg = segment_attack_sequences(&events, &frames).unwrap();
        assert_eq!(seg.sequences.len(), 1);
        assert_eq!(seg.sequences[0].start_frame, 40);
        assert_eq!(seg.dropped.len(), 1);
        assert!(seg.dropped[0].reason.contains("shorter"));
    }

    #[test]
    fn missing_frame_drops_sequence() {
        let frames = frames_for(50);
        let events = vec![ev("1", "pass", 0, "A"), ev("2", "pass", 90, "A")];
        let seg = segment_attack_sequences(&events, &frames).unwrap();
        assert!(seg.sequences.is_empty());
        assert!(seg.dropped[0].reason.contains("missing frame"));
    }

    #[test]
    fn unsorted_events_rejected() {
        let frames = frames_for(50);
        let events = vec![ev("1", "pass", 10, "A"), ev("2", "pass", 5, "A")];
        assert!(segment_attack_sequences(&events, &frames).is_err());
    }
}
