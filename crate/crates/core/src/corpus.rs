//! Dataset ingestion, split handling, prediction files and phrase statistics.
//!
//! Two CSV layouts are read. The multi-caption layout has the header
//! `file_name,caption_1,...,caption_5` with one clip per row. The
//! single-caption layout has `audiocap_id,youtube_id,start_time,caption` with
//! one caption per row, grouped into clips by `youtube_id`. Captions are kept
//! raw; normalization happens where they are used.
//!
//! Predictions and JSON references are exchanged as JSON lines:
//! `{"id": ..., "caption": ...}` and `{"id": ..., "references": [...]}`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::EvalInstance;

pub const MAX_CAPTIONS: usize = 5;
pub const CLOTHO_HEADER: [&str; 6] = ["file_name", "caption_1", "caption_2", "caption_3", "caption_4", "caption_5"];
pub const AUDIOCAPS_HEADER: [&str; 4] = ["audiocap_id", "youtube_id", "start_time", "caption"];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("header mismatch: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: {reason}")]
    Row { row: u64, reason: String },
    #[error("duplicate clip id `{0}`")]
    DuplicateId(String),
    #[error("clip `{0}` has no captions")]
    NoCaptions(String),
    #[error("clip `{id}` has {count} captions, at most {MAX_CAPTIONS} allowed")]
    TooManyCaptions { id: String, count: usize },
    #[error("id collision between splits: `{0}`")]
    IdCollision(String),
    #[error("line {line}: {reason}")]
    JsonLine { line: usize, reason: String },
    #[error("predictions and references do not align: missing predictions for [{}]; unknown prediction ids [{}]", .missing.join(", "), .unknown.join(", "))]
    IdMismatch { missing: Vec<String>, unknown: Vec<String> },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Eval,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Eval => "eval",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: String,
    pub audio_path: Option<String>,
    pub captions: Vec<String>,
}

impl ClipRecord {
    pub fn new(id: impl Into<String>, audio_path: Option<String>, captions: Vec<String>) -> Result<Self, CorpusError> {
        let record = ClipRecord {
            id: id.into(),
            audio_path,
            captions,
        };
        record.check()?;
        Ok(record)
    }

    fn check(&self) -> Result<(), CorpusError> {
        match self.captions.len() {
            0 => Err(CorpusError::NoCaptions(self.id.clone())),
            n if n > MAX_CAPTIONS => Err(CorpusError::TooManyCaptions {
                id: self.id.clone(),
                count: n,
            }),
            _ => Ok(()),
        }
    }
}

/// Named list of clips with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: SplitName,
    records: Vec<ClipRecord>,
}

impl DatasetSplit {
    pub fn new(name: SplitName, records: Vec<ClipRecord>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for r in &records {
            r.check()?;
            if !seen.insert(r.id.as_str()) {
                return Err(CorpusError::DuplicateId(r.id.clone()));
            }
        }
        Ok(DatasetSplit { name, records })
    }

    pub fn records(&self) -> &[ClipRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ClipRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ClipRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn captions(&self) -> impl Iterator<Item = &str> {
        self.records.iter().flat_map(|r| r.captions.iter().map(String::as_str))
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), CorpusError> {
    let cells: Vec<&str> = found.iter().map(|c| c.trim_start_matches('\u{feff}').trim()).collect();
    if cells != expected {
        return Err(CorpusError::Header {
            expected: expected.join(","),
            found: cells.join(","),
        });
    }
    Ok(())
}

fn row_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader)
}

/// Parses the multi-caption layout. Empty caption cells are dropped; a row
/// with no captions left is a fault.
pub fn parse_clotho_csv<R: Read>(reader: R, name: SplitName) -> Result<DatasetSplit, CorpusError> {
    let mut rdr = csv_reader(reader);
    check_header(rdr.headers()?, &CLOTHO_HEADER)?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row?;
        let line = row_of(&row);
        if row.len() != CLOTHO_HEADER.len() {
            return Err(CorpusError::Row {
                row: line,
                reason: format!("expected {} fields, found {}", CLOTHO_HEADER.len(), row.len()),
            });
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(CorpusError::Row {
                row: line,
                reason: "empty file_name".into(),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::Row {
                row: line,
                reason: format!("duplicate file_name `{id}`"),
            });
        }
        let captions: Vec<String> = row.iter().skip(1).filter(|c| !c.trim().is_empty()).map(str::to_string).collect();
        if captions.is_empty() {
            return Err(CorpusError::Row {
                row: line,
                reason: format!("clip `{id}` has no captions"),
            });
        }
        records.push(ClipRecord {
            audio_path: Some(id.clone()),
            id,
            captions,
        });
    }
    Ok(DatasetSplit { name, records })
}

pub fn load_clotho_csv(path: impl AsRef<Path>, name: SplitName) -> Result<DatasetSplit, CorpusError> {
    parse_clotho_csv(BufReader::new(File::open(path)?), name)
}

/// Writes the multi-caption layout; clips with fewer than five captions get
/// empty trailing cells.
pub fn write_clotho_csv<W: Write>(split: &DatasetSplit, writer: W) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CLOTHO_HEADER)?;
    for r in &split.records {
        let mut row = Vec::with_capacity(CLOTHO_HEADER.len());
        row.push(r.id.as_str());
        row.extend(r.captions.iter().map(String::as_str));
        row.resize(CLOTHO_HEADER.len(), "");
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_clotho_csv(split: &DatasetSplit, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_clotho_csv(split, BufWriter::new(File::create(path)?))
}

/// Parses the single-caption layout, grouping rows by `youtube_id` in order of
/// first appearance. Each clip's audio path is `<youtube_id>.wav`.
pub fn parse_audiocaps_csv<R: Read>(reader: R, name: SplitName) -> Result<DatasetSplit, CorpusError> {
    let mut rdr = csv_reader(reader);
    check_header(rdr.headers()?, &AUDIOCAPS_HEADER)?;
    let mut records: Vec<ClipRecord> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row_of(&row);
        if row.len() != AUDIOCAPS_HEADER.len() {
            return Err(CorpusError::Row {
                row: line,
                reason: format!("expected {} fields, found {}", AUDIOCAPS_HEADER.len(), row.len()),
            });
        }
        let (yt, caption) = (&row[1], &row[3]);
        if yt.is_empty() || caption.trim().is_empty() {
            return Err(CorpusError::Row {
                row: line,
                reason: "empty youtube_id or caption".into(),
            });
        }
        let slot = *index.entry(yt.to_string()).or_insert_with(|| {
            records.push(ClipRecord {
                id: yt.to_string(),
                audio_path: Some(format!("{yt}.wav")),
                captions: Vec::new(),
            });
            records.len() - 1
        });
        let clip = &mut records[slot];
        clip.captions.push(caption.to_string());
        if clip.captions.len() > MAX_CAPTIONS {
            return Err(CorpusError::TooManyCaptions {
                id: clip.id.clone(),
                count: clip.captions.len(),
            });
        }
    }
    Ok(DatasetSplit { name, records })
}

pub fn load_audiocaps_csv(path: impl AsRef<Path>, name: SplitName) -> Result<DatasetSplit, CorpusError> {
    parse_audiocaps_csv(BufReader::new(File::open(path)?), name)
}

/// Concatenates `a` then `b` under `a`'s name.
pub fn merge_splits(a: &DatasetSplit, b: &DatasetSplit) -> Result<DatasetSplit, CorpusError> {
    let ids: HashSet<&str> = a.records.iter().map(|r| r.id.as_str()).collect();
    if let Some(clash) = b.records.iter().find(|r| ids.contains(r.id.as_str())) {
        return Err(CorpusError::IdCollision(clash.id.clone()));
    }
    let mut records = a.records.clone();
    records.extend(b.records.iter().cloned());
    Ok(DatasetSplit { name: a.name, records })
}

fn contains_phrase(caption: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && caption.windows(phrase.len()).any(|w| w == phrase)
}

/// Number of captions containing `phrase` as a contiguous run of words,
/// counted once per caption. An empty phrase matches nothing.
pub fn phrase_count(captions: &[Vec<String>], phrase: &[String]) -> usize {
    captions.iter().filter(|c| contains_phrase(c, phrase)).count()
}

/// Number of clips with at least one caption containing `phrase`.
pub fn clip_phrase_count(clips: &[Vec<Vec<String>>], phrase: &[String]) -> usize {
    clips.iter().filter(|refs| refs.iter().any(|c| contains_phrase(c, phrase))).count()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ReferenceLine {
    id: String,
    references: Vec<String>,
}

fn read_json_lines<T, R>(reader: R) -> Result<Vec<T>, CorpusError>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CorpusError::JsonLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

fn write_json_lines<T: Serialize, W: Write>(items: &[T], mut writer: W) -> Result<(), CorpusError> {
    for item in items {
        let line = serde_json::to_string(item).map_err(std::io::Error::other)?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, CorpusError> {
    read_json_lines(BufReader::new(File::open(path)?))
}

pub fn write_predictions(predictions: &[Prediction], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_json_lines(predictions, BufWriter::new(File::create(path)?))
}

/// Reads `{"id", "references"}` lines into a split without audio paths.
pub fn read_reference_jsonl(path: impl AsRef<Path>, name: SplitName) -> Result<DatasetSplit, CorpusError> {
    let lines: Vec<ReferenceLine> = read_json_lines(BufReader::new(File::open(path)?))?;
    let records = lines
        .into_iter()
        .map(|l| ClipRecord::new(l.id, None, l.references))
        .collect::<Result<Vec<_>, _>>()?;
    DatasetSplit::new(name, records)
}

pub fn write_reference_jsonl(split: &DatasetSplit, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let lines: Vec<ReferenceLine> = split
        .records
        .iter()
        .map(|r| ReferenceLine {
            id: r.id.clone(),
            references: r.captions.clone(),
        })
        .collect();
    write_json_lines(&lines, BufWriter::new(File::create(path)?))
}

/// Pairs predictions with references by id, in reference order. Every
/// reference clip needs exactly one prediction and every prediction needs a
/// reference clip; otherwise the fault lists the offending ids.
pub fn align_predictions(predictions: &[Prediction], references: &DatasetSplit) -> Result<Vec<EvalInstance>, CorpusError> {
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    for p in predictions {
        if by_id.insert(p.id.as_str(), p.caption.as_str()).is_some() {
            return Err(CorpusError::DuplicateId(p.id.clone()));
        }
    }
    let missing: Vec<String> = references
        .records
        .iter()
        .filter(|r| !by_id.contains_key(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect();
    let known: HashSet<&str> = references.records.iter().map(|r| r.id.as_str()).collect();
    let unknown: Vec<String> = predictions
        .iter()
        .filter(|p| !known.contains(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(CorpusError::IdMismatch { missing, unknown });
    }
    Ok(references
        .records
        .iter()
        .map(|r| EvalInstance::from_raw(by_id[r.id.as_str()], &r.captions))
        .collect())
}
