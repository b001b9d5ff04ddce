//! Off-ball and on-ball state variables and the model-ready pass table.
//!
//! Feature columns are grouped by rank: for each selected receiver
//! `r = 1..=n` the five variables appear in the order of [`VARIABLES`],
//! named `<variable>_<r>`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dominance::{arrival_time, offside_positions, MotionParams, PlayerId, Side, SpaceEngine};
use crate::error::{Error, Result};
use crate::geometry::{goal_distance_angle, PitchSpec, Point2, WeightParams};
use crate::ingest::{Match, Outcome, PassEvent, TrackedFrame};

/// Per-receiver variables, in column order.
pub const VARIABLES: [&str; 5] = [
    "fast_space_vel",
    "variation_space_vel",
    "dist_ball",
    "time_to_player",
    "time_to_passline",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankingVariable {
    FastSpaceVel,
    DistBall,
    TimeToPlayer,
    TimeToPassline,
}

impl RankingVariable {
    pub const ALL: [RankingVariable; 4] = [
        RankingVariable::FastSpaceVel,
        RankingVariable::DistBall,
        RankingVariable::TimeToPlayer,
        RankingVariable::TimeToPassline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RankingVariable::FastSpaceVel => "fast_space_vel",
            RankingVariable::DistBall => "dist_ball",
            RankingVariable::TimeToPlayer => "time_to_player",
            RankingVariable::TimeToPassline => "time_to_passline",
        }
    }

    /// Whether smaller values rank first.
    pub fn ascending(self) -> bool {
        self == RankingVariable::DistBall
    }
}

impl FromStr for RankingVariable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        RankingVariable::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown ranking variable {s:?}")))
    }
}

impl std::fmt::Display for RankingVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What `fast_space_vel` reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceSemantics {
    /// The player's space score where they stand.
    #[default]
    Current,
    /// The best score reachable with one 1 m step (current score if no step improves it).
    BestAfterStep,
}

/// Where unreachable (+inf) time values rank before imputation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfiniteRanking {
    /// +inf is the largest value, so it ranks first under descending order.
    #[default]
    First,
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffBallFeatures {
    pub player_id: PlayerId,
    pub fast_space_vel: f64,
    /// Signed delta of the direction with the largest |delta|.
    pub variation_space_vel: f64,
    pub dist_ball: f64,
    pub time_to_player: f64,
    pub time_to_passline: f64,
}

impl OffBallFeatures {
    pub fn values(&self) -> [f64; 5] {
        [
            self.fast_space_vel,
            self.variation_space_vel,
            self.dist_ball,
            self.time_to_player,
            self.time_to_passline,
        ]
    }

    pub fn ranking_value(&self, var: RankingVariable) -> f64 {
        match var {
            RankingVariable::FastSpaceVel => self.fast_space_vel,
            RankingVariable::DistBall => self.dist_ball,
            RankingVariable::TimeToPlayer => self.time_to_player,
            RankingVariable::TimeToPassline => self.time_to_passline,
        }
    }
}

/// Closest point to `p` on the closed segment `[a, b]`.
pub fn closest_point_on_segment(p: Point2, a: Point2, b: Point2) -> Point2 {
    let ab = b - a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return a;
    }
    let t = ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2;
    if t <= 0.0 {
        a
    } else if t >= 1.0 {
        b
    } else {
        a + ab * t
    }
}

/// Earliest time a player can reach any point of the segment `[a, b]`.
///
/// Arrival time grows with the distance from the predicted position, so the
/// minimum is at the projection of that position onto the segment.
pub fn passline_time(predicted: Point2, a: Point2, b: Point2, mp: &MotionParams) -> f64 {
    // The endpoint terms only guard against rounding in the projection.
    mp.time_from_predicted(predicted, closest_point_on_segment(predicted, a, b))
        .min(mp.time_from_predicted(predicted, a))
        .min(mp.time_from_predicted(predicted, b))
}

/// Index and value of the largest-magnitude delta (first on ties).
pub fn max_magnitude_delta(deltas: &[f64; 8]) -> (usize, f64) {
    let mut best = 0;
    for k in 1..8 {
        if deltas[k].abs() > deltas[best].abs() {
            best = k;
        }
    }
    (best, deltas[best])
}

/// Off-ball variables for every eligible receiver of a pass.
///
/// `frame` must be oriented so the passing team attacks +x with sides set
/// (see [`TrackedFrame::oriented_for`]). Offside attackers and the passer are
/// not candidates. The result is ordered by player id.
pub fn offball_features(
    frame: &TrackedFrame,
    pass: &PassEvent,
    pitch: &PitchSpec,
    mp: &MotionParams,
    w: &WeightParams,
    semantics: SpaceSemantics,
) -> Result<Vec<OffBallFeatures>> {
    if frame.player(pass.passer_id).is_none() {
        return Err(Error::Data(format!(
            "pass {}: passer {} not in frame {}",
            pass.event_id, pass.passer_id, frame.frame_index
        )));
    }
    let excluded = offside_positions(frame);
    let mut candidates: Vec<_> = frame
        .attackers()
        .filter(|p| p.id != pass.passer_id && !excluded.contains(&p.id))
        .collect();
    candidates.sort_by_key(|p| p.id);
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let engine = SpaceEngine::new(frame, pitch, mp, w, &excluded)?;
    let defenders: Vec<Point2> = frame.defenders().map(|d| mp.predicted(d.pos, d.vel)).collect();
    let ball = frame.ball.pos;
    candidates
        .into_iter()
        .map(|p| {
            let score = engine.score(p.id)?;
            let deltas = engine.deltas(p.id)?;
            let (_, variation) = max_magnitude_delta(&deltas);
            let fast_space_vel = match semantics {
                SpaceSemantics::Current => score,
                SpaceSemantics::BestAfterStep => score + deltas.iter().cloned().fold(0.0, f64::max),
            };
            let time_to_player = defenders
                .iter()
                .map(|d| mp.time_from_predicted(*d, p.pos))
                .fold(f64::INFINITY, f64::min);
            let time_to_passline = defenders
                .iter()
                .map(|d| passline_time(*d, ball, p.pos, mp))
                .fold(f64::INFINITY, f64::min);
            Ok(OffBallFeatures {
                player_id: p.id,
                fast_space_vel,
                variation_space_vel: variation,
                dist_ball: ball.dist(p.pos),
                time_to_player,
                time_to_passline,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderState {
    pub holder_id: PlayerId,
    pub dist_goal: f64,
    pub angle_goal: f64,
    pub nearest_defender_time: f64,
    pub holder_deltas: [f64; 8],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearestToBall {
    pub player_id: PlayerId,
    /// Distance and angle to the goal this player attacks.
    pub dist_goal: f64,
    pub angle_goal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooseBallState {
    pub attacking: NearestToBall,
    pub defending: NearestToBall,
    pub ball_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OnBallFeatures {
    Holder(HolderState),
    NoHolder(LooseBallState),
}

/// On-ball state of a frame oriented toward +x.
pub fn onball_features(
    frame: &TrackedFrame,
    holder: Option<PlayerId>,
    pitch: &PitchSpec,
    mp: &MotionParams,
    w: &WeightParams,
) -> Result<OnBallFeatures> {
    match holder {
        Some(id) => {
            let p = frame.player(id).ok_or(Error::UnknownPlayer(id.0))?;
            let (dist_goal, angle_goal) = goal_distance_angle(p.pos, pitch);
            let nearest_defender_time = frame
                .defenders()
                .map(|d| arrival_time(d, p.pos, mp))
                .fold(f64::INFINITY, f64::min);
            let excluded = offside_positions(frame);
            let engine = SpaceEngine::new(frame, pitch, mp, w, &excluded)?;
            Ok(OnBallFeatures::Holder(HolderState {
                holder_id: id,
                dist_goal,
                angle_goal,
                nearest_defender_time,
                holder_deltas: engine.deltas(id)?,
            }))
        }
        None => {
            if frame.attackers().next().is_none() || frame.defenders().next().is_none() {
                return Err(Error::Data(format!(
                    "frame {}: loose-ball state needs players on both teams",
                    frame.frame_index
                )));
            }
            let nearest = |side: Side| -> NearestToBall {
                let p = frame
                    .players
                    .iter()
                    .filter(|p| p.side == side)
                    .min_by(|a, b| {
                        a.pos
                            .dist(frame.ball.pos)
                            .total_cmp(&b.pos.dist(frame.ball.pos))
                            .then(a.id.cmp(&b.id))
                    })
                    .expect("team checked non-empty");
                // Defenders attack the goal at -x.
                let pos = if side == Side::Attacking { p.pos } else { p.pos.mirror_x() };
                let (dist_goal, angle_goal) = goal_distance_angle(pos, pitch);
                NearestToBall {
                    player_id: p.id,
                    dist_goal,
                    angle_goal,
                }
            };
            Ok(OnBallFeatures::NoHolder(LooseBallState {
                attacking: nearest(Side::Attacking),
                defending: nearest(Side::Defending),
                ball_speed: frame.ball.vel.norm(),
            }))
        }
    }
}

/// Order candidates by a ranking variable and keep the first `n`.
///
/// `dist_ball` ranks ascending, the others descending. Ties go to the
/// smaller player id. Fewer than `n` ids are returned when there are fewer
/// candidates.
pub fn select_top_n(
    features: &[OffBallFeatures],
    n: usize,
    ranking: RankingVariable,
    infinite: InfiniteRanking,
) -> Result<Vec<PlayerId>> {
    if n == 0 {
        return Err(Error::InvalidParam("n must be >= 1".to_string()));
    }
    let key = |f: &OffBallFeatures| {
        let v = f.ranking_value(ranking);
        let v = if ranking.ascending() { v } else { -v };
        // Under `Last`, +inf (which became -inf above) moves behind everything.
        if infinite == InfiniteRanking::Last && v.is_infinite() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut sorted: Vec<&OffBallFeatures> = features.iter().collect();
    sorted.sort_by(|a, b| key(a).total_cmp(&key(b)).then(a.player_id.cmp(&b.player_id)));
    Ok(sorted.into_iter().take(n).map(|f| f.player_id).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub n: usize,
    pub ranking: RankingVariable,
    pub space_semantics: SpaceSemantics,
    pub infinite_ranking: InfiniteRanking,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            n: 3,
            ranking: RankingVariable::DistBall,
            space_semantics: SpaceSemantics::Current,
            infinite_ranking: InfiniteRanking::First,
        }
    }
}

/// All off-ball candidates of one pass, before selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFeatures {
    pub event_id: String,
    pub label: u8,
    pub candidates: Vec<OffBallFeatures>,
}

/// Extract candidate features for every pass of a match.
///
/// Passes whose frame is missing are skipped and reported in the returned
/// warnings.
pub fn extract_event_features(
    m: &Match,
    pitch: &PitchSpec,
    mp: &MotionParams,
    w: &WeightParams,
    semantics: SpaceSemantics,
) -> Result<(Vec<EventFeatures>, Vec<String>)> {
    let passes: Vec<PassEvent> = m.passes().collect();
    let results: Vec<Result<Option<EventFeatures>>> = passes
        .par_iter()
        .map(|pass| {
            let Some(frame) = m.frame_at(pass.frame_index) else {
                return Ok(None);
            };
            let oriented = frame.oriented_for(&pass.team);
            let candidates = offball_features(&oriented, pass, pitch, mp, w, semantics)?;
            Ok(Some(EventFeatures {
                event_id: pass.event_id.clone(),
                label: u8::from(pass.outcome == Outcome::Success),
                candidates,
            }))
        })
        .collect();
    let mut out = Vec::with_capacity(passes.len());
    let mut warnings = Vec::new();
    for (pass, r) in passes.iter().zip(results) {
        match r? {
            Some(ev) => out.push(ev),
            None => warnings.push(format!(
                "pass {} skipped: frame {} missing",
                pass.event_id, pass.frame_index
            )),
        }
    }
    Ok((out, warnings))
}

pub fn column_names(n: usize) -> Vec<String> {
    (1..=n)
        .flat_map(|r| VARIABLES.iter().map(move |v| format!("{v}_{r}")))
        .collect()
}

/// One pass with its selected receivers and feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct PassSample {
    pub event_id: String,
    /// 1 success, 0 failure.
    pub label: u8,
    pub selected: Vec<PlayerId>,
    pub values: Vec<f64>,
    /// Cells whose value was filled with a column median.
    pub imputed: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub samples: Vec<PassSample>,
}

/// Median of the finite values; even counts average the middle pair.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

impl FeatureTable {
    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.values.clone()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            columns: self.columns.clone(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Per-column medians over cells that were observed (not imputed) and finite.
    pub fn observed_medians(&self) -> Result<Vec<f64>> {
        (0..self.columns.len())
            .map(|j| {
                let col: Vec<f64> = self
                    .samples
                    .iter()
                    .filter(|s| !s.imputed[j])
                    .map(|s| s.values[j])
                    .collect();
                median(&col).ok_or_else(|| {
                    Error::Data(format!("column {} has no finite values", self.columns[j]))
                })
            })
            .collect()
    }

    /// Replace every imputed cell with the given medians.
    pub fn reimputed(&self, medians: &[f64]) -> FeatureTable {
        let mut out = self.clone();
        for s in &mut out.samples {
            for (j, m) in medians.iter().enumerate() {
                if s.imputed[j] {
                    s.values[j] = *m;
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["event_id".to_string(), "label".to_string()];
        header.extend(self.columns.iter().cloned());
        header.extend(self.columns.iter().map(|c| format!("{c}_imputed")));
        w.write_record(&header)?;
        for s in &self.samples {
            let mut rec = vec![s.event_id.clone(), s.label.to_string()];
            rec.extend(s.values.iter().map(|v| v.to_string()));
            rec.extend(s.imputed.iter().map(|f| u8::from(*f).to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<FeatureTable> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header.len() < 4 || header[0] != "event_id" || header[1] != "label" || (header.len() - 2) % 2 != 0 {
            return Err(Error::Schema {
                path: path.display().to_string(),
                line: 1,
                message: "expected header event_id,label,<features>,<features>_imputed".to_string(),
            });
        }
        let k = (header.len() - 2) / 2;
        let columns: Vec<String> = header[2..2 + k].to_vec();
        for (c, f) in columns.iter().zip(&header[2 + k..]) {
            if f != &format!("{c}_imputed") {
                return Err(Error::Schema {
                    path: path.display().to_string(),
                    line: 1,
                    message: format!("flag column {f} does not match {c}"),
                });
            }
        }
        let mut samples = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |msg: String| Error::Schema {
                path: path.display().to_string(),
                line,
                message: msg,
            };
            let label: u8 = rec[1].parse().map_err(|_| bad(format!("bad label {:?}", &rec[1])))?;
            if label > 1 {
                return Err(bad(format!("label must be 0 or 1, got {label}")));
            }
            let values = (0..k)
                .map(|j| rec[2 + j].parse::<f64>().map_err(|_| bad(format!("bad value {:?}", &rec[2 + j]))))
                .collect::<Result<Vec<_>>>()?;
            let imputed = (0..k)
                .map(|j| match &rec[2 + k + j] {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(bad(format!("bad flag {other:?}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            samples.push(PassSample {
                event_id: rec[0].to_string(),
                label,
                selected: Vec::new(),
                values,
                imputed,
            });
        }
        Ok(FeatureTable { columns, samples })
    }
}

/// Select receivers for each event and lay out raw values. Padding slots
/// and +inf values are flagged for imputation (values left non-finite).
pub fn assemble_table(events: &[EventFeatures], params: &FeatureParams) -> Result<FeatureTable> {
    let n = params.n;
    let columns = column_names(n);
    let mut samples = Vec::with_capacity(events.len());
    for ev in events {
        let selected = select_top_n(&ev.candidates, n, params.ranking, params.infinite_ranking)?;
        let mut values = vec![f64::NAN; 5 * n];
        for (r, id) in selected.iter().enumerate() {
            let f = ev.candidates.iter().find(|c| c.player_id == *id).expect("selected from candidates");
            values[5 * r..5 * r + 5].copy_from_slice(&f.values());
        }
        let imputed = values.iter().map(|v| !v.is_finite()).collect();
        samples.push(PassSample {
            event_id: ev.event_id.clone(),
            label: ev.label,
            selected,
            values,
            imputed,
        });
    }
    Ok(FeatureTable { columns, samples })
}

/// Build the imputed table from precomputed candidate features.
pub fn build_dataset_from(events: &[EventFeatures], params: &FeatureParams) -> Result<(FeatureTable, Vec<f64>)> {
    let raw = assemble_table(events, params)?;
    let medians = raw.observed_medians()?;
    Ok((raw.reimputed(&medians), medians))
}

/// One imputed sample per pass across all matches, plus the medians used.
pub fn build_dataset(
    matches: &[Match],
    params: &FeatureParams,
    pitch: &PitchSpec,
    mp: &MotionParams,
    w: &WeightParams,
) -> Result<(FeatureTable, Vec<f64>)> {
    let mut events = Vec::new();
    for m in matches {
        let (evs, warnings) = extract_event_features(m, pitch, mp, w, params.space_semantics)?;
        for warning in warnings {
            log::warn!("{warning}");
        }
        events.extend(evs);
    }
    build_dataset_from(&events, params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianSidecar {
    pub columns: Vec<String>,
    pub medians: Vec<f64>,
}

pub fn write_medians(path: &Path, columns: &[String], medians: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let sidecar = MedianSidecar {
        columns: columns.to_vec(),
        medians: medians.to_vec(),
    };
    serde_json::to_writer_pretty(&mut w, &sidecar)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
