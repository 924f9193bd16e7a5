use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;
pub const MASK_ID: usize = 4;
pub const NUM_SPECIALS: usize = 5;
pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

pub const CONTINUATION_PREFIX: &str = "##";
const FILE_MAGIC: &str = "anna-vocab";
const FILE_VERSION: u32 = 1;

/// Specials occupy the first ids, so an id is special iff it is below this bound.
pub fn is_special_id(id: usize) -> bool {
    id < NUM_SPECIALS
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntryKind {
    Special,
    /// Word kept in its original form, never split by the whole-form tokenizer.
    Whole,
    SubwordStart,
    /// Carries the `##` prefix.
    SubwordCont,
}

impl EntryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Special => "SPECIAL",
            EntryKind::Whole => "WHOLE",
            EntryKind::SubwordStart => "START",
            EntryKind::SubwordCont => "CONT",
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SPECIAL" => Ok(EntryKind::Special),
            "WHOLE" => Ok(EntryKind::Whole),
            "START" => Ok(EntryKind::SubwordStart),
            "CONT" => Ok(EntryKind::SubwordCont),
            other => Err(Error::format("vocabulary", format!("unknown entry kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    entries: Vec<(String, EntryKind)>,
    index: HashMap<String, usize>,
    whole_form_fraction: f64,
}

impl Vocabulary {
    /// Builds a vocabulary from non-special entries; specials are prepended.
    pub fn from_entries<I, S>(entries: I, whole_form_fraction: f64) -> Result<Self>
    where
        I: IntoIterator<Item = (S, EntryKind)>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            entries: Vec::new(),
            index: HashMap::new(),
            whole_form_fraction,
        };
        for s in SPECIAL_TOKENS {
            vocab.push(s.to_string(), EntryKind::Special)?;
        }
        for (surface, kind) in entries {
            vocab.push(surface.into(), kind)?;
        }
        Ok(vocab)
    }

    pub(crate) fn push(&mut self, surface: String, kind: EntryKind) -> Result<usize> {
        let bad = |m: String| Err(Error::format("vocabulary", m));
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            return bad(format!("surface `{surface}` is empty or contains whitespace"));
        }
        let is_cont = surface.starts_with(CONTINUATION_PREFIX) && surface.len() > 2;
        match kind {
            EntryKind::SubwordCont if !is_cont => {
                return bad(format!("continuation `{surface}` lacks the ## prefix"))
            }
            EntryKind::Special if self.entries.len() >= NUM_SPECIALS => {
                return bad(format!("special `{surface}` after the reserved block"))
            }
            EntryKind::Whole | EntryKind::SubwordStart if is_cont => {
                return bad(format!("non-continuation `{surface}` has the ## prefix"))
            }
            _ => {}
        }
        if self.entries.len() < NUM_SPECIALS
            && (kind != EntryKind::Special || surface != SPECIAL_TOKENS[self.entries.len()])
        {
            return bad(format!("expected special {}", SPECIAL_TOKENS[self.entries.len()]));
        }
        if self.index.contains_key(&surface) {
            return bad(format!("duplicate surface `{surface}`"));
        }
        let id = self.entries.len();
        self.index.insert(surface.clone(), id);
        self.entries.push((surface, kind));
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn whole_form_fraction(&self) -> f64 {
        self.whole_form_fraction
    }

    pub fn id(&self, surface: &str) -> Option<usize> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: usize) -> &str {
        &self.entries[id].0
    }

    pub fn kind(&self, id: usize) -> EntryKind {
        self.entries[id].1
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, EntryKind)> {
        self.entries.iter().map(|(s, k)| (s.as_str(), *k))
    }

    /// Id of `surface` if it is a whole-form entry.
    pub fn whole_id(&self, surface: &str) -> Option<usize> {
        self.id(surface).filter(|&id| self.kind(id) == EntryKind::Whole)
    }

    /// Id usable as the first piece of a word (whole-form or subword-start).
    pub fn start_piece_id(&self, piece: &str) -> Option<usize> {
        self.id(piece)
            .filter(|&id| matches!(self.kind(id), EntryKind::Whole | EntryKind::SubwordStart))
    }

    /// Id of `##piece`.
    pub fn continuation_id(&self, piece: &str) -> Option<usize> {
        let mut key = String::with_capacity(piece.len() + 2);
        key.push_str(CONTINUATION_PREFIX);
        key.push_str(piece);
        self.id(&key)
    }

    pub fn count(&self, kind: EntryKind) -> usize {
        self.entries.iter().filter(|(_, k)| *k == kind).count()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{FILE_MAGIC}\t{FILE_VERSION}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.len(),
            self.count(EntryKind::Special),
            self.count(EntryKind::Whole),
            self.count(EntryKind::SubwordStart),
            self.count(EntryKind::SubwordCont),
            self.whole_form_fraction
        )?;
        for (s, k) in &self.entries {
            writeln!(w, "{k}\t{s}")?;
        }
        Ok(())
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Hex SHA-256 of the canonical file bytes.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_bytes()))
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let err = |m: String| Error::format("vocabulary", m);
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| err("empty file".into()))??;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 8 || fields[0] != FILE_MAGIC {
            return Err(err(format!("bad header `{header}`")));
        }
        let num = |i: usize| -> Result<usize> {
            fields[i]
                .parse()
                .map_err(|_| err(format!("bad count `{}`", fields[i])))
        };
        if fields[1] != FILE_VERSION.to_string() {
            return Err(err(format!("unsupported version {}", fields[1])));
        }
        let total = num(2)?;
        let fraction: f64 = fields[7]
            .parse()
            .map_err(|_| err(format!("bad fraction `{}`", fields[7])))?;

        let mut vocab = Vocabulary {
            entries: Vec::with_capacity(total),
            index: HashMap::with_capacity(total),
            whole_form_fraction: fraction,
        };
        for (n, line) in lines.enumerate() {
            let line = line?;
            let (kind, surface) = line
                .split_once('\t')
                .ok_or_else(|| err(format!("line {}: missing tab", n + 2)))?;
            vocab.push(surface.to_string(), kind.parse()?)?;
        }
        let counts = [
            EntryKind::Special,
            EntryKind::Whole,
            EntryKind::SubwordStart,
            EntryKind::SubwordCont,
        ]
        .map(|k| vocab.count(k));
        if vocab.len() != total || counts != [num(3)?, num(4)?, num(5)?, num(6)?] {
            return Err(err("entry counts disagree with header".into()));
        }
        if vocab.len() < NUM_SPECIALS {
            return Err(err("missing special tokens".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_canonical_bytes())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Vocabulary {
        Vocabulary::from_entries(
            [
                ("U.S.", EntryKind::Whole),
                ("U", EntryKind::SubwordStart),
                ("##S", EntryKind::SubwordCont),
            ],
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn specials_are_reserved_first() {
        let v = small();
        assert_eq!(v.id("[PAD]"), Some(PAD_ID));
        assert_eq!(v.id("[MASK]"), Some(MASK_ID));
        assert_eq!(v.whole_id("U.S."), Some(5));
        assert_eq!(v.whole_id("U"), None);
        assert_eq!(v.continuation_id("S"), Some(7));
    }

    #[test]
    fn file_round_trip_is_bit_exact() {
        let v = small();
        let bytes = v.to_canonical_bytes();
        let back = Vocabulary::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.to_canonical_bytes(), bytes);
        assert_eq!(back.hash(), v.hash());
    }

    #[test]
    fn rejects_malformed_entries() {
        assert!(Vocabulary::from_entries([("a b", EntryKind::Whole)], 0.0).is_err());
        assert!(Vocabulary::from_entries([("x", EntryKind::SubwordCont)], 0.0).is_err());
        assert!(Vocabulary::from_entries([("x", EntryKind::Whole), ("x", EntryKind::SubwordStart)], 0.0).is_err());
        let mut bytes = small().to_canonical_bytes();
        bytes.extend_from_slice(b"WHOLE\textra\n");
        assert!(Vocabulary::read_from(bytes.as_slice()).is_err());
    }
}
