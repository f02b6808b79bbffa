//! Low-confidence review queue: an append-only JSON Lines journal folded
//! into memory, plus the HTTP API the operator UI talks to.

mod server;

pub use server::{router, serve, SharedQueue};

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::imaging::GrayImage;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown review item {0:?}")]
    UnknownItem(String),
    #[error("review item {0:?} is already labeled")]
    AlreadyLabeled(String),
    #[error("review item {0:?} is already queued")]
    DuplicateId(String),
    #[error("invalid label {0:?}: expected 0-9 or BLANK")]
    BadLabel(String),
    #[error("journal line {line}: {reason}")]
    Journal { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An operator's answer for one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Digit(u8),
    Blank,
}

impl Label {
    pub fn digit(self) -> Option<u8> {
        match self {
            Label::Digit(d) => Some(d),
            Label::Blank => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Digit(d) => write!(f, "{d}"),
            Label::Blank => f.write_str("BLANK"),
        }
    }
}

impl FromStr for Label {
    type Err = ReviewError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.as_bytes() {
            [d @ b'0'..=b'9'] => Ok(Label::Digit(d - b'0')),
            _ if s == "BLANK" => Ok(Label::Blank),
            _ => Err(ReviewError::BadLabel(s.to_string())),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemStatus {
    Pending,
    Labeled,
}

/// A single uncertain cell, or a whole form that could not be registered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    #[default]
    Cell,
    Form,
}

/// 8-bit pixels, base64 encoded with the dimensions alongside.
mod crop_codec {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Encoded {
        width: usize,
        height: usize,
        pixels: String,
    }

    pub fn serialize<S: Serializer>(img: &GrayImage, s: S) -> Result<S::Ok, S::Error> {
        Encoded {
            width: img.width(),
            height: img.height(),
            pixels: STANDARD.encode(img.to_u8()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<GrayImage, D::Error> {
        let e = Encoded::deserialize(d)?;
        let bytes = STANDARD.decode(e.pixels).map_err(serde::de::Error::custom)?;
        GrayImage::from_u8(e.width, e.height, &bytes).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub id: String,
    pub form_id: String,
    pub row_index: usize,
    pub cell_index: usize,
    #[serde(default)]
    pub kind: ItemKind,
    /// Model-ready 32×32 crop (ink-high); a page thumbnail for form items.
    #[serde(with = "crop_codec")]
    pub crop: GrayImage,
    /// `None` when the model saw a blank.
    pub predicted: Option<u8>,
    pub confidence: f32,
    pub status: ItemStatus,
    pub operator_label: Option<Label>,
    pub labeled_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl ReviewItem {
    pub fn cell_id(form_id: &str, row: usize, cell: usize) -> String {
        format!("{form_id}:{row}:{cell}")
    }

    pub fn form_id_key(form_id: &str) -> String {
        format!("{form_id}:form")
    }

    /// A pending cell item. The crop is stored at 8-bit depth, as the
    /// journal keeps it.
    pub fn cell(form_id: &str, row: usize, cell: usize, crop: &GrayImage, predicted: Option<u8>, confidence: f32) -> Self {
        Self {
            id: Self::cell_id(form_id, row, cell),
            form_id: form_id.to_string(),
            row_index: row,
            cell_index: cell,
            kind: ItemKind::Cell,
            crop: quantize(crop),
            predicted,
            confidence,
            status: ItemStatus::Pending,
            operator_label: None,
            labeled_at: None,
            reason: None,
        }
    }

    /// A pending whole-form item for a scan that failed registration.
    pub fn form(form_id: &str, thumbnail: &GrayImage, reason: &str) -> Self {
        Self {
            id: Self::form_id_key(form_id),
            form_id: form_id.to_string(),
            row_index: 0,
            cell_index: 0,
            kind: ItemKind::Form,
            crop: quantize(thumbnail),
            predicted: None,
            confidence: 0.0,
            status: ItemStatus::Pending,
            operator_label: None,
            labeled_at: None,
            reason: Some(reason.to_string()),
        }
    }
}

fn quantize(img: &GrayImage) -> GrayImage {
    GrayImage::from_u8(img.width(), img.height(), &img.to_u8()).expect("same dimensions")
}

/// Operator-confirmed value of one cell.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub form_id: String,
    pub row_index: usize,
    pub cell_index: usize,
    pub label: Label,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub pending: usize,
    pub labeled: usize,
    pub total: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum Event {
    Enqueue { item: ReviewItem },
    Label { id: String, label: Label, at: DateTime<Utc> },
}

/// FIFO queue whose state is the fold of its journal.
#[derive(Debug, Default)]
pub struct ReviewQueue {
    items: Vec<ReviewItem>,
    index: HashMap<String, usize>,
    labeled_order: Vec<usize>,
    /// First pending position; everything before it is labeled.
    cursor: usize,
    journal: Option<(PathBuf, File)>,
}

impl ReviewQueue {
    /// Volatile queue without a journal.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if absent) the journal at `path` and replays it.
    pub fn open(path: &Path) -> Result<Self, ReviewError> {
        let mut q = Self::default();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let journal_err = |reason: String| ReviewError::Journal { line: n + 1, reason };
                let event: Event = serde_json::from_str(&line).map_err(|e| journal_err(e.to_string()))?;
                match event {
                    Event::Enqueue { item } => q.insert(item).map_err(|e| journal_err(e.to_string()))?,
                    Event::Label { id, label, at } => {
                        q.transition(&id, label, at).map_err(|e| journal_err(e.to_string()))?;
                    }
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        q.journal = Some((path.to_path_buf(), file));
        Ok(q)
    }

    pub fn journal_path(&self) -> Option<&Path> {
        self.journal.as_ref().map(|(p, _)| p.as_path())
    }

    fn append(&mut self, events: &[Event]) -> Result<(), ReviewError> {
        if let Some((_, file)) = &mut self.journal {
            let mut buf = Vec::new();
            for e in events {
                serde_json::to_writer(&mut buf, e).map_err(std::io::Error::other)?;
                buf.push(b'\n');
            }
            file.write_all(&buf)?;
            file.flush()?;
        }
        Ok(())
    }

    fn insert(&mut self, item: ReviewItem) -> Result<(), ReviewError> {
        if self.index.contains_key(&item.id) {
            return Err(ReviewError::DuplicateId(item.id));
        }
        self.index.insert(item.id.clone(), self.items.len());
        if item.status == ItemStatus::Labeled {
            self.labeled_order.push(self.items.len());
        }
        self.items.push(item);
        Ok(())
    }

    fn transition(&mut self, id: &str, label: Label, at: DateTime<Utc>) -> Result<&ReviewItem, ReviewError> {
        let &i = self.index.get(id).ok_or_else(|| ReviewError::UnknownItem(id.to_string()))?;
        let item = &mut self.items[i];
        if item.status == ItemStatus::Labeled {
            return Err(ReviewError::AlreadyLabeled(id.to_string()));
        }
        item.status = ItemStatus::Labeled;
        item.operator_label = Some(label);
        item.labeled_at = Some(at);
        self.labeled_order.push(i);
        Ok(&self.items[i])
    }

    /// Adds pending items in order. All ids are checked before anything is
    /// written, so a rejected batch leaves the queue untouched.
    pub fn enqueue(&mut self, items: Vec<ReviewItem>) -> Result<usize, ReviewError> {
        let mut seen = std::collections::HashSet::new();
        for it in &items {
            if self.index.contains_key(&it.id) || !seen.insert(it.id.as_str()) {
                return Err(ReviewError::DuplicateId(it.id.clone()));
            }
        }
        let events: Vec<Event> = items.iter().map(|item| Event::Enqueue { item: item.clone() }).collect();
        self.append(&events)?;
        let n = items.len();
        for it in items {
            self.insert(it)?;
        }
        Ok(n)
    }

    /// Oldest pending item.
    pub fn next_pending(&mut self) -> Option<&ReviewItem> {
        while self.cursor < self.items.len() && self.items[self.cursor].status == ItemStatus::Labeled {
            self.cursor += 1;
        }
        self.items.get(self.cursor)
    }

    pub fn submit_label(&mut self, id: &str, label: Label) -> Result<ReviewItem, ReviewError> {
        self.submit_label_at(id, label, Utc::now())
    }

    /// Pending → labeled, exactly once; the journal is written before the
    /// in-memory transition.
    pub fn submit_label_at(&mut self, id: &str, label: Label, at: DateTime<Utc>) -> Result<ReviewItem, ReviewError> {
        match self.get(id) {
            None => return Err(ReviewError::UnknownItem(id.to_string())),
            Some(it) if it.status == ItemStatus::Labeled => return Err(ReviewError::AlreadyLabeled(id.to_string())),
            Some(_) => {}
        }
        self.append(&[Event::Label { id: id.to_string(), label, at }])?;
        self.transition(id, label, at).cloned()
    }

    pub fn get(&self, id: &str) -> Option<&ReviewItem> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    pub fn stats(&self) -> QueueStats {
        let labeled = self.labeled_order.len();
        QueueStats {
            pending: self.items.len() - labeled,
            labeled,
            total: self.items.len(),
        }
    }

    /// Labeled cell items in submission order. Form items carry no cell
    /// value and are left out.
    pub fn export_labels(&self) -> Vec<Correction> {
        self.labeled_order
            .iter()
            .map(|&i| &self.items[i])
            .filter(|it| it.kind == ItemKind::Cell)
            .map(|it| Correction {
                form_id: it.form_id.clone(),
                row_index: it.row_index,
                cell_index: it.cell_index,
                label: it.operator_label.expect("labeled items carry a label"),
            })
            .collect()
    }
}

/// Writes corrections as JSON Lines.
pub fn write_corrections(path: &Path, corrections: &[Correction]) -> Result<(), ReviewError> {
    let mut buf = Vec::new();
    for c in corrections {
        serde_json::to_writer(&mut buf, c).map_err(std::io::Error::other)?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_corrections(path: &Path) -> Result<Vec<Correction>, ReviewError> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| ReviewError::Journal { line: n + 1, reason: e.to_string() })?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
