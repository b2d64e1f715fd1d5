//! Interaction events and the efficiency metrics derived from them.
//!
//! Event log lines are `timestamp_ms<TAB>user<TAB>note_id<TAB>kind<TAB>detail`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActivityError {
    #[error("word count must be positive")]
    ZeroWords,
    #[error("no events")]
    NoEvents,
    #[error("event {index}: timestamp {timestamp_ms} is earlier than the previous event")]
    NonMonotoneTimestamps { index: usize, timestamp_ms: u64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Key,
    Mouse,
    Pause,
    Resume,
    Save,
    Complete,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Key => "key",
            EventKind::Mouse => "mouse",
            EventKind::Pause => "pause",
            EventKind::Resume => "resume",
            EventKind::Save => "save",
            EventKind::Complete => "complete",
        })
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "key" => EventKind::Key,
            "mouse" => EventKind::Mouse,
            "pause" => EventKind::Pause,
            "resume" => EventKind::Resume,
            "save" => EventKind::Save,
            "complete" => EventKind::Complete,
            _ => return Err(format!("unknown event kind {s:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub timestamp_ms: u64,
    pub user: String,
    pub note_id: String,
    pub kind: EventKind,
    #[serde(default)]
    pub detail: String,
}

impl InteractionEvent {
    /// Log line without the trailing newline. Tabs and newlines in the
    /// detail are replaced by spaces.
    pub fn to_log_line(&self) -> String {
        let detail: String = self.detail.chars().map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c }).collect();
        format!("{}\t{}\t{}\t{}\t{}", self.timestamp_ms, self.user, self.note_id, self.kind, detail)
    }

    pub fn parse_log_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.splitn(5, '\t').collect();
        let [ts, user, note_id, kind, detail] = fields[..] else {
            return Err(format!("expected 5 tab-separated fields, found {}", fields.len()));
        };
        Ok(InteractionEvent {
            timestamp_ms: ts.parse().map_err(|_| format!("bad timestamp {ts:?}"))?,
            user: user.to_string(),
            note_id: note_id.to_string(),
            kind: kind.parse()?,
            detail: detail.to_string(),
        })
    }
}

pub fn parse_event_log(text: &str) -> Result<Vec<InteractionEvent>, ActivityError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| InteractionEvent::parse_log_line(l).map_err(|message| ActivityError::Parse { line: i + 1, message }))
        .collect()
}

pub fn check_monotone(events: &[InteractionEvent]) -> Result<(), ActivityError> {
    for (i, pair) in events.windows(2).enumerate() {
        if pair[1].timestamp_ms < pair[0].timestamp_ms {
            return Err(ActivityError::NonMonotoneTimestamps { index: i + 1, timestamp_ms: pair[1].timestamp_ms });
        }
    }
    Ok(())
}

/// Mouse and keyboard counts normalized by note length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActivitySummary {
    pub mouse_count: f64,
    pub keyboard_count: f64,
    pub total_count: f64,
    pub word_count: u64,
    pub mouse_per_word: f64,
    pub keyboard_per_word: f64,
    pub total_per_word: f64,
    /// Words reviewed per press or click; absent when there were no actions.
    pub words_per_action: Option<f64>,
}

/// Counts may be fractional because they are often averages over annotators.
pub fn normalized_activity(mouse: f64, keyboard: f64, word_count: u64) -> Result<ActivitySummary, ActivityError> {
    if word_count == 0 {
        return Err(ActivityError::ZeroWords);
    }
    let words = word_count as f64;
    let total = mouse + keyboard;
    Ok(ActivitySummary {
        mouse_count: mouse,
        keyboard_count: keyboard,
        total_count: total,
        word_count,
        mouse_per_word: mouse / words,
        keyboard_per_word: keyboard / words,
        total_per_word: total / words,
        words_per_action: (total > 0.0).then(|| words / total),
    })
}

pub fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

/// Per-word rates as printed in a three-decimal activity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActivityTableRow {
    pub mouse_per_word: f64,
    pub keyboard_per_word: f64,
    /// Sum of the two rounded channel rates, so the row adds up as printed.
    pub total_per_word: f64,
    pub words_per_action: Option<f64>,
}

impl ActivitySummary {
    pub fn table_row(&self) -> ActivityTableRow {
        let mouse = round_to(self.mouse_per_word, 3);
        let keyboard = round_to(self.keyboard_per_word, 3);
        ActivityTableRow {
            mouse_per_word: mouse,
            keyboard_per_word: keyboard,
            total_per_word: round_to(mouse + keyboard, 3),
            words_per_action: self.words_per_action.map(|w| round_to(w, 1)),
        }
    }
}

/// Mouse and keyboard action counts in an event stream.
pub fn count_actions(events: &[InteractionEvent]) -> (u64, u64) {
    events.iter().fold((0, 0), |(mouse, key), e| match e.kind {
        EventKind::Mouse => (mouse + 1, key),
        EventKind::Key => (mouse, key + 1),
        _ => (mouse, key),
    })
}

/// Minutes between the first and last event of one note, minus paused
/// intervals. A `pause` opens an interval that the next `resume` closes;
/// a pause left open runs to the last event.
pub fn annotation_time(events: &[InteractionEvent]) -> Result<f64, ActivityError> {
    let (first, last) = match (events.first(), events.last()) {
        (Some(f), Some(l)) => (f.timestamp_ms, l.timestamp_ms),
        _ => return Err(ActivityError::NoEvents),
    };
    check_monotone(events)?;
    let mut paused_ms = 0;
    let mut paused_at: Option<u64> = None;
    for e in events {
        match (e.kind, paused_at) {
            (EventKind::Pause, None) => paused_at = Some(e.timestamp_ms),
            (EventKind::Resume, Some(at)) => {
                paused_ms += e.timestamp_ms - at;
                paused_at = None;
            }
            _ => {}
        }
    }
    if let Some(at) = paused_at {
        paused_ms += last - at;
    }
    Ok((last - first - paused_ms) as f64 / 60_000.0)
}

/// Mean and sample standard deviation of per-note minutes.
pub fn minutes_summary(minutes: &[f64]) -> Option<(f64, f64)> {
    if minutes.is_empty() {
        return None;
    }
    let n = minutes.len() as f64;
    let mean = minutes.iter().sum::<f64>() / n;
    let sd = if minutes.len() < 2 {
        0.0
    } else {
        (minutes.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, sd))
}
