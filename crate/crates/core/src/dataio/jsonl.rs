//! JSON-lines interchange: one word sample per line, with EEG vectors
//! either inline, as references into a sidecar matrix, or as raw
//! per-fixation epochs that are reduced to CE features on load.

use super::sidecar::Sidecar;
use super::types::{Dataset, DatasetHeader, Dims, Label, SentenceRecord, WordSample};
use crate::error::{Error, Result};
use crate::features::{self, ce_feature_len, EegEpoch, WordBiomarkers, DEFAULT_BINS, EYE_DIM};
use crate::fsutil;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarRef {
    #[serde(rename = "ref")]
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum EegField {
    Inline(Vec<f64>),
    Ref(SidecarRef),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    subject: String,
    sentence: u32,
    word: u32,
    #[serde(default)]
    token: String,
    label: Option<Label>,
    valid: bool,
    eye: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eeg: Option<EegField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eeg_raw: Option<Vec<SidecarRef>>,
    #[serde(default)]
    wemb: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: DatasetHeader,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadOptions {
    /// Histogram bins used when raw EEG epochs are reduced on load.
    pub bins: usize,
    /// Treat words without any fixation as masked rather than as LRW/HRW samples.
    pub mask_zero_fixation: bool,
    /// Fail unless the file carries raw EEG epochs.
    pub require_raw: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            bins: DEFAULT_BINS,
            mask_zero_fixation: false,
            require_raw: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EegStorage {
    Inline,
    #[default]
    Sidecar,
}

/// `<dir>/<stem>.<kind>.bin` next to a `.jsonl` file.
pub fn sidecar_path(jsonl: &Path, kind: &str) -> PathBuf {
    jsonl.with_extension(format!("{kind}.bin"))
}

fn resolve(jsonl: &Path, name: Option<&str>, kind: &str) -> PathBuf {
    match name {
        Some(n) => jsonl.parent().unwrap_or(Path::new(".")).join(n),
        None => sidecar_path(jsonl, kind),
    }
}

pub fn load_samples(path: &Path, opts: &LoadOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut header = DatasetHeader::default();
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if records.is_empty() && line.trim_start().starts_with("{\"header\"") {
            let h: HeaderLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
            header = h.header;
            continue;
        }
        let rec: LineRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        records.push((lineno, rec));
    }
    build_dataset(path, header, records, opts)
}

fn build_dataset(
    path: &Path,
    mut header: DatasetHeader,
    records: Vec<(usize, LineRecord)>,
    opts: &LoadOptions,
) -> Result<Dataset> {
    let schema = |line: usize, msg: String| Error::schema(format!("line {line}: {msg}"));

    let uses_ref = records.iter().any(|(_, r)| matches!(r.eeg, Some(EegField::Ref(_))));
    let uses_raw = records.iter().any(|(_, r)| r.eeg_raw.is_some());
    if opts.require_raw {
        if let Some((line, _)) = records.iter().find(|(_, r)| r.eeg_raw.is_none()) {
            return Err(schema(*line, "eeg_raw: raw EEG epochs missing".to_string()));
        }
    }
    let eeg_sidecar = if uses_ref {
        Some(Sidecar::read(&resolve(path, header.eeg_sidecar.as_deref(), "eeg"))?)
    } else {
        None
    };
    let raw_features = if uses_raw {
        let raw = Sidecar::read(&resolve(path, header.raw_sidecar.as_deref(), "raw"))?;
        if raw.dims.len() != 3 {
            return Err(Error::schema(format!(
                "raw EEG sidecar must be rank 3 (epochs × channels × samples), got {:?}",
                raw.dims
            )));
        }
        let (channels, samples) = (raw.dims[1], raw.dims[2]);
        let features = (0..raw.dims[0])
            .into_par_iter()
            .map(|i| {
                let epoch = EegEpoch::new(raw.row(i).expect("in range").to_vec(), channels, samples)?;
                Ok(features::ce_feature_vector(&epoch, opts.bins)?.values)
            })
            .collect::<Result<Vec<_>>>()?;
        header.eeg_channels = Some(channels);
        header.bins = Some(opts.bins);
        Some((ce_feature_len(channels), features))
    } else {
        None
    };

    let mut eeg_dim: Option<usize> = None;
    let mut wemb_dim: Option<usize> = None;
    let mut groups: BTreeMap<(String, u32), Vec<WordSample>> = BTreeMap::new();
    let mut any_eeg_missing = false;

    for (line, rec) in records {
        if rec.eye.len() != EYE_DIM {
            return Err(schema(
                line,
                format!("eye: expected {EYE_DIM} features, got {}", rec.eye.len()),
            ));
        }
        if rec.valid && rec.label.is_none() {
            return Err(schema(line, "label: required for valid samples".into()));
        }
        let mut eye = rec.eye;
        let eeg = match (rec.eeg, rec.eeg_raw) {
            (Some(_), Some(_)) => {
                return Err(schema(line, "eeg: give either eeg or eeg_raw, not both".into()))
            }
            (Some(EegField::Inline(v)), None) => Some(v),
            (Some(EegField::Ref(r)), None) => {
                let sc = eeg_sidecar.as_ref().expect("loaded above");
                if sc.dims.len() != 2 {
                    return Err(schema(line, format!("eeg: sidecar must be rank 2, got {:?}", sc.dims)));
                }
                let row = sc
                    .row(r.index)
                    .ok_or_else(|| schema(line, format!("eeg: ref {} out of range", r.index)))?;
                Some(row.to_vec())
            }
            (None, Some(refs)) => {
                let (len, feats) = raw_features.as_ref().expect("loaded above");
                let mut fixations = Vec::with_capacity(refs.len());
                for r in &refs {
                    let f = feats
                        .get(r.index)
                        .ok_or_else(|| schema(line, format!("eeg_raw: ref {} out of range", r.index)))?;
                    fixations.push(f.clone());
                }
                let eye_arr: [f64; EYE_DIM] = eye.as_slice().try_into().expect("checked");
                let wb = WordBiomarkers::from_fixations(eye_arr, &fixations, *len)?;
                eye = wb.eye.to_vec();
                Some(wb.eeg)
            }
            (None, None) => None,
        };
        let eeg = match eeg {
            Some(v) => {
                match eeg_dim {
                    None => eeg_dim = Some(v.len()),
                    Some(d) if d != v.len() => {
                        return Err(schema(line, format!("eeg: expected {d} features, got {}", v.len())))
                    }
                    _ => {}
                }
                v
            }
            None => {
                any_eeg_missing = true;
                Vec::new()
            }
        };
        if let Some(w) = &rec.wemb {
            match wemb_dim {
                None => wemb_dim = Some(w.len()),
                Some(d) if d != w.len() => {
                    return Err(schema(line, format!("wemb: expected {d} features, got {}", w.len())))
                }
                _ => {}
            }
        }
        if eye.iter().chain(&eeg).chain(rec.wemb.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(schema(line, "non-finite feature value".into()));
        }
        let sample = WordSample {
            subject: rec.subject,
            sentence_id: rec.sentence,
            word_index: rec.word,
            token: rec.token,
            label: rec.label,
            valid: rec.valid,
            padding: false,
            eye,
            eeg,
            wemb: rec.wemb,
        };
        let group = groups
            .entry((sample.subject.clone(), sample.sentence_id))
            .or_default();
        if group.iter().any(|w| w.word_index == sample.word_index) {
            return Err(schema(
                line,
                format!(
                    "duplicate word {} in sentence {} of subject '{}'",
                    sample.word_index, sample.sentence_id, sample.subject
                ),
            ));
        }
        group.push(sample);
    }

    if any_eeg_missing && eeg_dim.is_some() {
        return Err(Error::schema("eeg: present on some lines but missing on others"));
    }
    let dims = Dims {
        eye: EYE_DIM,
        eeg: eeg_dim.unwrap_or(0),
        wemb: wemb_dim,
    };

    let max_len = groups.values().map(Vec::len).max().unwrap_or(0);
    let mut sentences = Vec::with_capacity(groups.len());
    for ((subject, sentence_id), mut words) in groups {
        words.sort_by_key(|w| w.word_index);
        if let Some(d) = dims.wemb {
            for w in &mut words {
                if w.wemb.is_none() {
                    if w.valid {
                        return Err(Error::schema(format!(
                            "wemb: missing for valid word {} of sentence {sentence_id}",
                            w.word_index
                        )));
                    }
                    w.wemb = Some(vec![0.0; d]);
                }
            }
        }
        let next_index = words.last().map_or(0, |w| w.word_index + 1);
        for p in 0..(max_len - words.len()) {
            words.push(WordSample::pad(&subject, sentence_id, next_index + p as u32, &dims));
        }
        sentences.push(SentenceRecord {
            subject,
            sentence_id,
            words,
        });
    }

    let mut ds = Dataset {
        sentences,
        dims,
        header,
    };
    if opts.mask_zero_fixation {
        ds.mask_zero_fixation();
    }
    Ok(ds)
}

/// Writes non-padding words. With [`EegStorage::Sidecar`] the EEG vectors go
/// to `<stem>.eeg.bin` and lines carry `{"ref": row}`.
pub fn save_samples(ds: &Dataset, path: &Path, storage: EegStorage) -> Result<()> {
    let mut header = ds.header.clone();
    header.raw_sidecar = None;
    let use_sidecar = storage == EegStorage::Sidecar && ds.dims.eeg > 0;
    let sidecar_file = sidecar_path(path, "eeg");
    if use_sidecar {
        let name = sidecar_file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .expect("file path");
        header.eeg_sidecar = Some(name);
        let words: Vec<&WordSample> = ds.words().collect();
        let mut data = Vec::with_capacity(words.len() * ds.dims.eeg);
        for w in &words {
            data.extend_from_slice(&w.eeg);
        }
        if !words.is_empty() {
            Sidecar::new(vec![words.len(), ds.dims.eeg], data)?.write(&sidecar_file)?;
        }
    } else {
        header.eeg_sidecar = None;
    }

    let lines: Vec<LineRecord> = ds
        .words()
        .enumerate()
        .map(|(row, w)| LineRecord {
            subject: w.subject.clone(),
            sentence: w.sentence_id,
            word: w.word_index,
            token: w.token.clone(),
            label: w.label,
            valid: w.valid,
            eye: w.eye.clone(),
            eeg: match (ds.dims.eeg, use_sidecar) {
                (0, _) => None,
                (_, true) => Some(EegField::Ref(SidecarRef { index: row })),
                (_, false) => Some(EegField::Inline(w.eeg.clone())),
            },
            eeg_raw: None,
            wemb: w.wemb.clone(),
        })
        .collect();

    fsutil::write_atomic(path, |out| {
        if header != DatasetHeader::default() {
            serde_json::to_writer(&mut *out, &HeaderLine { header: header.clone() })?;
            out.write_all(b"\n")?;
        }
        for l in &lines {
            serde_json::to_writer(&mut *out, l)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    })
}

/// Raw-EEG word sample for [`save_raw_samples`]: per-fixation
/// channels × samples epochs instead of feature vectors.
#[derive(Clone, Debug)]
pub struct RawWord {
    pub subject: String,
    pub sentence_id: u32,
    pub word_index: u32,
    pub token: String,
    pub label: Option<Label>,
    pub valid: bool,
    pub eye: Vec<f64>,
    pub fixations: Vec<EegEpoch>,
    pub wemb: Option<Vec<f64>>,
}

/// Writes a raw-EEG corpus: JSONL lines with `eeg_raw` references and a
/// rank-3 `<stem>.raw.bin` sidecar.
pub fn save_raw_samples(words: &[RawWord], path: &Path) -> Result<()> {
    let mut shape: Option<(usize, usize)> = None;
    let mut data = Vec::new();
    let mut count = 0;
    let mut lines = Vec::with_capacity(words.len());
    for w in words {
        let mut refs = Vec::with_capacity(w.fixations.len());
        for e in &w.fixations {
            let s = (e.channel_count(), e.sample_count());
            if *shape.get_or_insert(s) != s {
                return Err(Error::schema("raw epochs must share one channels × samples shape"));
            }
            for c in 0..e.channel_count() {
                data.extend_from_slice(e.channel(c));
            }
            refs.push(SidecarRef { index: count });
            count += 1;
        }
        lines.push(LineRecord {
            subject: w.subject.clone(),
            sentence: w.sentence_id,
            word: w.word_index,
            token: w.token.clone(),
            label: w.label,
            valid: w.valid,
            eye: w.eye.clone(),
            eeg: None,
            eeg_raw: Some(refs),
            wemb: w.wemb.clone(),
        });
    }
    let raw_file = sidecar_path(path, "raw");
    let (c, t) = shape.ok_or_else(|| Error::schema("raw corpus has no EEG epochs"))?;
    Sidecar::new(vec![count, c, t], data)?.write(&raw_file)?;
    let header = DatasetHeader {
        raw_sidecar: raw_file.file_name().map(|n| n.to_string_lossy().into_owned()),
        ..Default::default()
    };
    fsutil::write_atomic(path, |out| {
        serde_json::to_writer(&mut *out, &HeaderLine { header })?;
        out.write_all(b"\n")?;
        for l in &lines {
            serde_json::to_writer(&mut *out, l)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    })
}
