use crate::binio::{read_text, write_atomic};
use crate::error::{Error, Result};
use crate::features::{read_feature_file, FeatureMatrix};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Partition {
    Bkg,
    Dev,
    Eval,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Bkg => "bkg",
            Partition::Dev => "dev",
            Partition::Eval => "eval",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bkg" => Ok(Partition::Bkg),
            "dev" => Ok(Partition::Dev),
            "eval" => Ok(Partition::Eval),
            _ => Err(Error::Input(format!("unknown partition {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker_id: String,
    pub phrase_id: String,
    pub session: u32,
    pub partition: Partition,
    /// Path as written in the manifest; relative paths are resolved against
    /// the manifest's directory.
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn resolve(&self, record: &UtteranceRecord) -> PathBuf {
        if record.path.is_absolute() {
            record.path.clone()
        } else {
            self.base_dir.join(&record.path)
        }
    }

    pub fn load_features(&self, record: &UtteranceRecord) -> Result<FeatureMatrix> {
        read_feature_file(&self.resolve(record))
    }

    pub fn partition(&self, p: Partition) -> impl Iterator<Item = &UtteranceRecord> {
        self.records.iter().filter(move |r| r.partition == p)
    }

    /// Phrase ids in order of first appearance.
    pub fn phrases(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.phrase_id.as_str()))
            .map(|r| r.phrase_id.clone())
            .collect()
    }

    /// Speaker ids of one partition in order of first appearance.
    pub fn speakers(&self, p: Partition) -> Vec<String> {
        let mut seen = HashSet::new();
        self.partition(p)
            .filter(|r| seen.insert(r.speaker_id.as_str()))
            .map(|r| r.speaker_id.clone())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            writeln!(
                out,
                "{} {} {} {} {} {}",
                r.utterance_id,
                r.speaker_id,
                r.phrase_id,
                r.session,
                r.partition,
                r.path.display()
            )
            .unwrap();
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    /// Parses manifest text without touching the file system.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut problems = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                problems.push(format!("line {}: expected 6 fields, found {}", i + 1, f.len()));
                continue;
            }
            let session = match f[3].parse() {
                Ok(s) => s,
                Err(_) => {
                    problems.push(format!("line {}: bad session {:?}", i + 1, f[3]));
                    continue;
                }
            };
            let partition = match f[4].parse() {
                Ok(p) => p,
                Err(_) => {
                    problems.push(format!("line {}: bad partition {:?}", i + 1, f[4]));
                    continue;
                }
            };
            records.push(UtteranceRecord {
                utterance_id: f[0].to_string(),
                speaker_id: f[1].to_string(),
                phrase_id: f[2].to_string(),
                session,
                partition,
                path: PathBuf::from(f[5]),
            });
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            records,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Checks unique ids, speaker-disjoint partitions and, when `check_files`,
    /// that every feature file exists. All offenders are reported at once.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        let mut problems = Vec::new();
        let mut ids = HashSet::new();
        let mut dup_reported = HashSet::new();
        for r in &self.records {
            if !ids.insert(r.utterance_id.as_str()) && dup_reported.insert(r.utterance_id.as_str()) {
                problems.push(format!("duplicate utterance_id {}", r.utterance_id));
            }
        }
        let mut parts: BTreeMap<&str, Vec<Partition>> = BTreeMap::new();
        for r in &self.records {
            let v = parts.entry(r.speaker_id.as_str()).or_default();
            if !v.contains(&r.partition) {
                v.push(r.partition);
            }
        }
        for (spk, v) in parts {
            if v.len() > 1 {
                let names: Vec<&str> = v.iter().map(|p| p.as_str()).collect();
                problems.push(format!("speaker {spk} appears in partitions {}", names.join(",")));
            }
        }
        if check_files {
            for r in &self.records {
                let p = self.resolve(r);
                if !p.is_file() {
                    problems.push(format!("missing feature file {} for {}", p.display(), r.utterance_id));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Reads and fully validates a manifest file.
pub fn ingest(path: &Path) -> Result<CorpusManifest> {
    let text = read_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let m = CorpusManifest::parse(&text, base)?;
    m.validate(true)?;
    Ok(m)
}

/// Ground-truth segment start frames per utterance.
pub type Boundaries = HashMap<String, Vec<usize>>;

pub fn boundaries_to_text(entries: &[(String, Vec<usize>)]) -> String {
    let mut out = String::new();
    for (id, b) in entries {
        out.push_str(id);
        for x in b {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn read_boundaries(path: &Path) -> Result<Boundaries> {
    let text = read_text(path)?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let mut f = line.split_whitespace();
        let Some(id) = f.next() else { continue };
        let b = f
            .map(|x| x.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format(format!("{}:{}: bad boundary", path.display(), i + 1)))?;
        out.insert(id.to_string(), b);
    }
    Ok(out)
}
