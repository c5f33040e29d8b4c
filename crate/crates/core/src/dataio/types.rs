use crate::features::EYE_DIM;
use serde::{Deserialize, Serialize};

/// Relevance of a word to the reading task's inference target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "HRW")]
    Hrw,
    #[serde(rename = "LRW")]
    Lrw,
}

impl Label {
    /// 1 for HRW, 0 for LRW.
    pub fn target(self) -> f64 {
        match self {
            Label::Hrw => 1.0,
            Label::Lrw => 0.0,
        }
    }
}

/// Identity of a word within one subject's data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleKey {
    pub sentence: u32,
    pub word: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordSample {
    pub subject: String,
    pub sentence_id: u32,
    pub word_index: u32,
    pub token: String,
    pub label: Option<Label>,
    /// Excluded from every loss and metric when false.
    pub valid: bool,
    /// Filler row added to reach the dataset's sentence length.
    pub padding: bool,
    pub eye: Vec<f64>,
    pub eeg: Vec<f64>,
    pub wemb: Option<Vec<f64>>,
}

impl WordSample {
    pub fn key(&self) -> SampleKey {
        SampleKey {
            sentence: self.sentence_id,
            word: self.word_index,
        }
    }

    pub(crate) fn pad(subject: &str, sentence_id: u32, word_index: u32, dims: &Dims) -> Self {
        WordSample {
            subject: subject.to_string(),
            sentence_id,
            word_index,
            token: String::new(),
            label: None,
            valid: false,
            padding: true,
            eye: vec![0.0; EYE_DIM],
            eeg: vec![0.0; dims.eeg],
            wemb: dims.wemb.map(|d| vec![0.0; d]),
        }
    }

    /// True when every biomarker value is zero (a word without fixations).
    pub fn is_zero_fixation(&self) -> bool {
        self.eye.iter().chain(&self.eeg).all(|&v| v == 0.0)
    }
}

/// Feature widths shared by every sample of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub eye: usize,
    pub eeg: usize,
    pub wemb: Option<usize>,
}

/// One sentence, padded to the dataset-wide length.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceRecord {
    pub subject: String,
    pub sentence_id: u32,
    pub words: Vec<WordSample>,
}

impl SentenceRecord {
    pub fn mask(&self) -> Vec<bool> {
        self.words.iter().map(|w| w.valid).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.words.iter().filter(|w| w.valid).count()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Provenance recorded in a dataset's optional header line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eeg_channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eeg_sidecar: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_sidecar: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sentences: Vec<SentenceRecord>,
    pub dims: Dims,
    pub header: DatasetHeader,
}

impl Dataset {
    /// Sentence length `M` after padding.
    pub fn max_len(&self) -> usize {
        self.sentences.first().map_or(0, SentenceRecord::len)
    }

    pub fn valid_count(&self) -> usize {
        self.sentences.iter().map(SentenceRecord::valid_count).sum()
    }

    pub fn word_count(&self) -> usize {
        self.words().count()
    }

    /// Non-padding words in canonical order.
    pub fn words(&self) -> impl Iterator<Item = &WordSample> {
        self.sentences
            .iter()
            .flat_map(|s| s.words.iter())
            .filter(|w| !w.padding)
    }

    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.sentences.iter().map(|s| s.subject.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    pub fn for_subject(&self, subject: &str) -> Dataset {
        Dataset {
            sentences: self
                .sentences
                .iter()
                .filter(|s| s.subject == subject)
                .cloned()
                .collect(),
            dims: self.dims,
            header: self.header.clone(),
        }
    }

    /// Sorts sentences by (subject, sentence id); words are kept in
    /// word-index order with padding last.
    pub fn canonicalize(&mut self) {
        self.sentences
            .sort_by(|a, b| (&a.subject, a.sentence_id).cmp(&(&b.subject, b.sentence_id)));
        for s in &mut self.sentences {
            s.words.sort_by_key(|w| (w.padding, w.word_index));
        }
    }

    /// Marks zero-fixation words invalid.
    pub fn mask_zero_fixation(&mut self) {
        for w in self.sentences.iter_mut().flat_map(|s| s.words.iter_mut()) {
            if !w.padding && w.is_zero_fixation() {
                w.valid = false;
            }
        }
    }
}
