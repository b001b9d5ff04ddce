//! SVG rendering of space scores on the pitch.
//!
//! Output is plain text built in a fixed order with fixed number formatting,
//! so identical inputs give identical bytes.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::PathBuf;

use crate::dominance::{offside_positions, DominanceField, MotionParams, Side, SpaceEngine, SpaceScoreTable};
use crate::error::{Error, Result};
use crate::geometry::{PitchSpec, WeightParams};
use crate::ingest::{TeamId, TrackedFrame};

/// Pixels per meter.
const SCALE: f64 = 8.0;
/// Border around the pitch, meters.
const MARGIN: f64 = 3.0;
const PLAYER_RADIUS: f64 = 0.9;
const BALL_RADIUS: f64 = 0.45;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub show_voronoi_boundaries: bool,
    pub show_scores: bool,
    /// Scores mapped to the lightest and the darkest fill.
    pub colormap: (f64, f64),
    /// Inclusive frame-index range to render; None renders everything.
    pub frame_range: Option<(i64, i64)>,
    pub output_dir: PathBuf,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            show_voronoi_boundaries: false,
            show_scores: true,
            colormap: (0.0, 1000.0),
            frame_range: None,
            output_dir: PathBuf::from("."),
        }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.colormap;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParam(format!("colormap range needs min < max, got ({lo}, {hi})")));
        }
        if let Some((a, b)) = self.frame_range {
            if a > b {
                return Err(Error::InvalidParam(format!("frame range start {a} after end {b}")));
            }
        }
        Ok(())
    }
}

/// Colormap endpoints at the given percentiles of `scores`, widened to a
/// unit range when all scores coincide.
pub fn colormap_from_scores(scores: &[f64], lo_pct: f64, hi_pct: f64) -> (f64, f64) {
    let mut v: Vec<f64> = scores.iter().copied().filter(|s| s.is_finite()).collect();
    if v.is_empty() {
        return (0.0, 1.0);
    }
    v.sort_by(f64::total_cmp);
    let at = |p: f64| {
        let pos = p / 100.0 * (v.len() - 1) as f64;
        let (i, j) = (pos.floor() as usize, pos.ceil() as usize);
        v[i] + (v[j] - v[i]) * (pos - i as f64)
    };
    let (lo, hi) = (at(lo_pct), at(hi_pct));
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 1.0)
    }
}

/// A frame oriented for its attacking team with dominance computed.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub frame: TrackedFrame,
    pub field: DominanceField,
    pub scores: SpaceScoreTable,
}

/// Orient `frame` so `attacking` plays toward +x and compute its field and
/// scores (offside attackers excluded).
pub fn prepare_frame(
    frame: &TrackedFrame,
    attacking: &TeamId,
    pitch: &PitchSpec,
    mp: &MotionParams,
    w: &WeightParams,
) -> Result<PreparedFrame> {
    let frame = frame.oriented_for(attacking);
    let excluded = offside_positions(&frame);
    let engine = SpaceEngine::new(&frame, pitch, mp, w, &excluded)?;
    let field = engine.field();
    let scores = engine.table(&BTreeSet::new())?;
    Ok(PreparedFrame { frame, field, scores })
}

fn px(v: f64) -> String {
    format!("{:.2}", v * SCALE)
}

struct Canvas {
    half_l: f64,
    half_w: f64,
}

impl Canvas {
    fn x(&self, x: f64) -> String {
        px(x + self.half_l + MARGIN)
    }

    fn y(&self, y: f64) -> String {
        px(self.half_w - y + MARGIN)
    }

    fn width(&self) -> String {
        px(2.0 * (self.half_l + MARGIN))
    }

    fn height(&self) -> String {
        px(2.0 * (self.half_w + MARGIN))
    }
}

fn lerp_rgb(a: (u8, u8, u8), b: (u8, u8, u8), t: f64) -> String {
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

const RED_LIGHT: (u8, u8, u8) = (0xfc, 0xd5, 0xce);
const RED_DARK: (u8, u8, u8) = (0xa5, 0x0f, 0x15);
const BLUE_LIGHT: (u8, u8, u8) = (0xd0, 0xe1, 0xf2);
const BLUE_DARK: (u8, u8, u8) = (0x08, 0x30, 0x6b);

/// Fill color for a score: red family for attackers, blue for defenders.
pub fn fill_color(side: Side, score: f64, colormap: (f64, f64)) -> String {
    let t = ((score - colormap.0) / (colormap.1 - colormap.0)).clamp(0.0, 1.0);
    match side {
        Side::Attacking => lerp_rgb(RED_LIGHT, RED_DARK, t),
        Side::Defending => lerp_rgb(BLUE_LIGHT, BLUE_DARK, t),
    }
}

fn stroke_color(side: Side) -> &'static str {
    match side {
        Side::Attacking => "#a50f15",
        Side::Defending => "#08306b",
    }
}

fn pitch_markings(out: &mut String, c: &Canvas) {
    let (l, w) = (c.half_l, c.half_w);
    let _ = writeln!(
        out,
        r##"<rect x="0" y="0" width="{}" height="{}" fill="#4a8a3c"/>"##,
        c.width(),
        c.height()
    );
    let _ = writeln!(
        out,
        r##"<g class="markings" fill="none" stroke="#ffffff" stroke-width="1.5">"##
    );
    let _ = writeln!(
        out,
        r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#,
        c.x(-l),
        c.y(w),
        px(2.0 * l),
        px(2.0 * w)
    );
    let _ = writeln!(out, r#"<line x1="{}" y1="{}" x2="{}" y2="{}"/>"#, c.x(0.0), c.y(w), c.x(0.0), c.y(-w));
    let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="{}"/>"#, c.x(0.0), c.y(0.0), px(9.15));
    for sign in [-1.0, 1.0] {
        let box_x = if sign < 0.0 { -l } else { l - 16.5 };
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}"/>"#,
            c.x(box_x),
            c.y(20.16),
            px(16.5),
            px(40.32)
        );
    }
    out.push_str("</g>\n");
}

fn voronoi_boundaries(out: &mut String, c: &Canvas, field: &DominanceField) {
    let pitch = &field.pitch;
    let (nx, ny) = (pitch.nx(), pitch.ny());
    let (dx, dy) = (pitch.cell_dx(), pitch.cell_dy());
    let x0 = -c.half_l;
    let y0 = -c.half_w;
    let mut d = String::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let o = field.owner_at(ix, iy);
            if ix + 1 < nx && field.owner_at(ix + 1, iy) != o {
                let x = x0 + (ix + 1) as f64 * dx;
                let _ = write!(d, "M{} {}V{}", c.x(x), c.y(y0 + iy as f64 * dy), c.y(y0 + (iy + 1) as f64 * dy));
            }
            if iy + 1 < ny && field.owner_at(ix, iy + 1) != o {
                let y = y0 + (iy + 1) as f64 * dy;
                let _ = write!(d, "M{} {}H{}", c.x(x0 + ix as f64 * dx), c.y(y), c.x(x0 + (ix + 1) as f64 * dx));
            }
        }
    }
    let _ = writeln!(
        out,
        r##"<path class="voronoi" d="{d}" fill="none" stroke="#ffffff" stroke-opacity="0.6" stroke-width="1"/>"##
    );
}

fn frame_body(out: &mut String, frame: &TrackedFrame, scores: &SpaceScoreTable, field: &DominanceField, opts: &RenderOptions) {
    let c = Canvas {
        half_l: field.pitch.half_length(),
        half_w: field.pitch.half_width(),
    };
    pitch_markings(out, &c);
    if opts.show_voronoi_boundaries {
        voronoi_boundaries(out, &c, field);
    }
    let mut players: Vec<_> = frame.players.iter().collect();
    players.sort_by_key(|p| p.id);
    for p in players {
        let entry = scores.get(p.id);
        let excluded = entry.is_some_and(|e| e.excluded_offside) || field.excluded.contains(&p.id);
        let score = entry.map_or(0.0, |e| e.score);
        let role = match p.side {
            Side::Attacking => "attacker",
            Side::Defending => "defender",
        };
        let (cx, cy) = (c.x(p.pos.x), c.y(p.pos.y));
        let _ = writeln!(out, r#"<g class="glyph player {role}" data-player="{}">"#, p.id.0);
        if excluded {
            let _ = writeln!(
                out,
                r#"<circle class="hollow" cx="{cx}" cy="{cy}" r="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                px(PLAYER_RADIUS),
                stroke_color(p.side)
            );
        } else {
            let _ = writeln!(
                out,
                r#"<circle cx="{cx}" cy="{cy}" r="{}" fill="{}" stroke="{}" stroke-width="1.5"/>"#,
                px(PLAYER_RADIUS),
                fill_color(p.side, score, opts.colormap),
                stroke_color(p.side)
            );
        }
        let _ = writeln!(
            out,
            r##"<text class="id" x="{cx}" y="{}" font-size="9" text-anchor="middle" fill="#ffffff">{}</text>"##,
            c.y(p.pos.y - 0.35),
            p.id.0
        );
        if opts.show_scores && !excluded {
            let _ = writeln!(
                out,
                r##"<text class="score" x="{cx}" y="{}" font-size="10" text-anchor="middle" fill="#000000">{:.0}</text>"##,
                c.y(p.pos.y - PLAYER_RADIUS - 1.6),
                score
            );
        }
        out.push_str("</g>\n");
    }
    let b = frame.ball.pos;
    let _ = writeln!(
        out,
        r##"<g class="glyph ball"><circle cx="{}" cy="{}" r="{}" fill="#ffffff" stroke="#000000" stroke-width="1.5"/></g>"##,
        c.x(b.x),
        c.y(b.y),
        px(BALL_RADIUS)
    );
    let _ = writeln!(
        out,
        r##"<text class="caption" x="{}" y="{}" font-size="12" fill="#ffffff">frame {} t={:.2}s</text>"##,
        px(1.0),
        px(MARGIN - 1.0),
        frame.frame_index,
        frame.time
    );
}

fn header(out: &mut String, pitch: &PitchSpec) {
    let c = Canvas {
        half_l: pitch.half_length(),
        half_w: pitch.half_width(),
    };
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#,
        w = c.width(),
        h = c.height()
    );
}

/// One frame as a standalone SVG document.
pub fn render_frame_svg(frame: &TrackedFrame, scores: &SpaceScoreTable, field: &DominanceField, opts: &RenderOptions) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    header(&mut out, &field.pitch);
    frame_body(&mut out, frame, scores, field, opts);
    out.push_str("</svg>\n");
    out
}

/// Several frames in one SVG, shown in turn at `fps` and looping.
pub fn render_animation_svg(frames: &[PreparedFrame], opts: &RenderOptions, fps: f64) -> Result<String> {
    let Some(first) = frames.first() else {
        return Err(Error::InvalidParam("no frames to animate".into()));
    };
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(Error::InvalidParam(format!("fps must be positive, got {fps}")));
    }
    let n = frames.len();
    let dur = n as f64 / fps;
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    header(&mut out, &first.field.pitch);
    for (i, f) in frames.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<g class="frame" data-frame="{}" visibility="{}">"#,
            f.frame.frame_index,
            if i == 0 { "visible" } else { "hidden" }
        );
        if n > 1 {
            let start = i as f64 / n as f64;
            let end = (i + 1) as f64 / n as f64;
            let (values, times) = if i == 0 {
                ("visible;hidden".to_string(), format!("0;{end:.6}"))
            } else {
                ("hidden;visible;hidden".to_string(), format!("0;{start:.6};{end:.6}"))
            };
            let _ = writeln!(
                out,
                r#"<animate attributeName="visibility" values="{values}" keyTimes="{times}" calcMode="discrete" dur="{dur:.6}s" repeatCount="indefinite"/>"#
            );
        }
        frame_body(&mut out, &f.frame, &f.scores, &f.field, opts);
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}
