use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    /// Sorted, non-overlapping `[start, end)` char intervals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noun_phrase_spans: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_spans: Option<Vec<(usize, usize)>>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            noun_phrase_spans: None,
            entity_spans: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let chars = self.text.chars().count();
        for (name, spans) in [
            ("noun_phrase_spans", &self.noun_phrase_spans),
            ("entity_spans", &self.entity_spans),
        ] {
            let mut prev_end = 0;
            for &(s, e) in spans.iter().flatten() {
                if s >= e || e > chars || s < prev_end {
                    return Err(Error::format(
                        format!("document {}", self.id),
                        format!("{name} entry [{s}, {e}) is empty, out of bounds or unsorted"),
                    ));
                }
                prev_end = e;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReadStats {
    pub read: usize,
    pub malformed: usize,
}

/// Reads line-delimited JSON documents. Blank lines are ignored; malformed or
/// invalid lines are logged and skipped.
pub fn read_documents<R: BufRead>(reader: R, source_name: &str) -> Result<(Vec<Document>, ReadStats)> {
    let mut docs = Vec::new();
    let mut stats = ReadStats::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Document>(&line)
            .map_err(Error::from)
            .and_then(|d| d.validate().map(|_| d));
        match parsed {
            Ok(d) => {
                stats.read += 1;
                docs.push(d);
            }
            Err(e) => {
                log::warn!("{source_name}:{}: skipping malformed document: {e}", n + 1);
                stats.malformed += 1;
            }
        }
    }
    Ok((docs, stats))
}

pub fn write_documents<W: Write>(mut w: W, docs: &[Document]) -> Result<()> {
    for d in docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip_and_skips_bad_lines() {
        let mut d = Document::new("d1", "a golden statue");
        d.noun_phrase_spans = Some(vec![(0, 15)]);
        let mut buf = Vec::new();
        write_documents(&mut buf, &[d.clone()]).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "{\"id\":\"d1\",\"text\":\"a golden statue\",\"noun_phrase_spans\":[[0,15]]}\n"
        );
        buf.extend_from_slice(b"not json\n\n{\"id\":\"x\",\"text\":\"ab\",\"entity_spans\":[[1,5]]}\n");
        let (docs, stats) = read_documents(buf.as_slice(), "mem").unwrap();
        assert_eq!(docs, vec![d]);
        assert_eq!(stats, ReadStats { read: 1, malformed: 2 });
    }

    #[test]
    fn overlapping_spans_are_invalid() {
        let mut d = Document::new("d", "abcdef");
        d.entity_spans = Some(vec![(0, 3), (2, 4)]);
        assert!(d.validate().is_err());
        d.entity_spans = Some(vec![(0, 3), (3, 6)]);
        assert!(d.validate().is_ok());
    }
}
