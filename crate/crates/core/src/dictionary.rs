//! Bilingual seed dictionaries in MUSE format (`source<ws>target` per line).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SeedDictionary {
    pairs: Vec<(String, String)>,
}

impl SeedDictionary {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        SeedDictionary { pairs }
    }

    pub fn from_pairs<'a, I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        SeedDictionary {
            pairs: pairs
                .into_iter()
                .map(|(s, t)| (s.to_string(), t.to_string()))
                .collect(),
        }
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(s, t)| (s.as_str(), t.as_str()))
    }

    pub fn lowercased(&self) -> SeedDictionary {
        SeedDictionary {
            pairs: self
                .pairs
                .iter()
                .map(|(s, t)| (s.to_lowercase(), t.to_lowercase()))
                .collect(),
        }
    }

    pub fn read<R: BufRead>(reader: R, source: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| match e.kind() {
                std::io::ErrorKind::InvalidData => Error::parse(source, i + 1, "invalid UTF-8"),
                _ => Error::io(source, e),
            })?;
            let mut fields = line.split_whitespace();
            match (fields.next(), fields.next(), fields.next()) {
                (None, ..) => continue,
                (Some(s), Some(t), None) => pairs.push((s.to_string(), t.to_string())),
                _ => {
                    return Err(Error::parse(
                        source,
                        i + 1,
                        "expected `source target`",
                    ))
                }
            }
        }
        Ok(SeedDictionary { pairs })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path)
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (s, t) in &self.pairs {
            writeln!(out, "{s} {t}")?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

impl FromIterator<(String, String)> for SeedDictionary {
    fn from_iter<T: IntoIterator<Item = (String, String)>>(iter: T) -> Self {
        SeedDictionary {
            pairs: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_muse_lines() {
        let text = "the el\nthe la\n\ncat\tgato\n";
        let dict = SeedDictionary::read(text.as_bytes(), Path::new("d")).unwrap();
        assert_eq!(
            dict.pairs(),
            &[
                ("the".to_string(), "el".to_string()),
                ("the".to_string(), "la".to_string()),
                ("cat".to_string(), "gato".to_string()),
            ]
        );
    }

    #[test]
    fn rejects_malformed_line() {
        let err = SeedDictionary::read("a b\nc\n".as_bytes(), Path::new("d")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
