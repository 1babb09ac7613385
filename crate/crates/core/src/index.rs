//! Mention-surface → entity alias index with anchor counts and priors.
//!
//! Binary layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "CQAELIDX"
//! version  u32
//! length   u64      payload byte length
//! crc32    u32      over the payload
//! payload:
//!   n_surfaces u64, then per surface:
//!     surface str, n_entries u32, then per entry: entity str, count u64, prior f64
//!   n_descriptions u64, then per description: entity str, text str
//! str = u32 byte length + UTF-8 bytes
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::{extract_anchors, normalize_target, plain_text};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CQAELIDX";
pub const INDEX_VERSION: u32 = 1;
/// Characters of plain page text kept as an entity description.
pub const DESCRIPTION_CHARS: usize = 2000;

/// Lookup key for a mention surface: lowercased, internal whitespace
/// collapsed, leading/trailing punctuation removed.
pub fn normalize_surface(surface: &str) -> String {
    let lowered = surface.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| !c.is_alphanumeric() && !c.is_whitespace())
        .trim()
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasEntry {
    pub entity: String,
    pub count: u64,
    pub prior: f64,
}

/// Raw (surface key, entity) → count table. Merging is associative and
/// commutative, so partial tables from several workers can be combined in
/// any order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnchorCounts {
    counts: HashMap<(String, String), u64>,
}

impl AnchorCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, surface: &str, entity: &str, count: u64) {
        let key = normalize_surface(surface);
        if key.is_empty() || entity.is_empty() || count == 0 {
            return;
        }
        *self.counts.entry((key, entity.to_string())).or_insert(0) += count;
    }

    /// Counts every anchor of one page, resolving targets through `redirects`.
    pub fn add_page(&mut self, page_text: &str, redirects: Option<&HashMap<String, String>>) {
        for a in extract_anchors(page_text) {
            let target = resolve(&a.target, redirects);
            self.add(&a.surface, &target, 1);
        }
    }

    pub fn merge(&mut self, other: AnchorCounts) {
        for (k, v) in other.counts {
            *self.counts.entry(k).or_insert(0) += v;
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

fn resolve(target: &str, redirects: Option<&HashMap<String, String>>) -> String {
    let Some(map) = redirects else {
        return target.to_string();
    };
    // follow chains, bounded to survive cycles
    let mut current = target.to_string();
    for _ in 0..8 {
        match map.get(&current) {
            Some(next) if *next != current => current = next.clone(),
            _ => break,
        }
    }
    current
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AliasIndex {
    entries: BTreeMap<String, Vec<AliasEntry>>,
    descriptions: BTreeMap<String, String>,
}

/// Non-fatal findings while building an index.
#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub missing_descriptions: Vec<String>,
}

impl AliasIndex {
    /// Builds the index from counts and a description table. Entities that
    /// appear as targets but lack a description get an empty one.
    pub fn from_counts(counts: AnchorCounts, descriptions: &BTreeMap<String, String>) -> (Self, BuildReport) {
        let mut by_surface: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
        for ((surface, entity), count) in counts.counts {
            by_surface.entry(surface).or_default().push((entity, count));
        }
        let mut entries = BTreeMap::new();
        let mut descs = descriptions.clone();
        let mut report = BuildReport::default();
        for (surface, list) in by_surface {
            for (entity, _) in &list {
                if !descs.contains_key(entity) {
                    log::warn!("no description for entity {entity:?}");
                    report.missing_descriptions.push(entity.clone());
                    descs.insert(entity.clone(), String::new());
                }
            }
            entries.insert(surface, with_priors(list));
        }
        report.missing_descriptions.sort();
        report.missing_descriptions.dedup();
        (
            Self {
                entries,
                descriptions: descs,
            },
            report,
        )
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_surfaces(&self) -> usize {
        self.entries.len()
    }

    pub fn n_entities(&self) -> usize {
        self.descriptions.len()
    }

    /// Candidates for a raw mention surface, sorted by descending prior.
    pub fn lookup(&self, surface: &str) -> &[AliasEntry] {
        self.entries
            .get(&normalize_surface(surface))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn description(&self, entity: &str) -> Option<&str> {
        self.descriptions.get(entity).map(String::as_str)
    }

    pub fn surfaces(&self) -> impl Iterator<Item = (&str, &[AliasEntry])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn descriptions(&self) -> impl Iterator<Item = (&str, &str)> {
        self.descriptions.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        put_u64(&mut payload, self.entries.len() as u64);
        for (surface, list) in &self.entries {
            put_str(&mut payload, surface);
            put_u32(&mut payload, list.len() as u32);
            for e in list {
                put_str(&mut payload, &e.entity);
                put_u64(&mut payload, e.count);
                payload.extend_from_slice(&e.prior.to_le_bytes());
            }
        }
        put_u64(&mut payload, self.descriptions.len() as u64);
        for (entity, text) in &self.descriptions {
            put_str(&mut payload, entity);
            put_str(&mut payload, text);
        }
        let mut out = Vec::with_capacity(payload.len() + 24);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, INDEX_VERSION);
        put_u64(&mut out, payload.len() as u64);
        put_u32(&mut out, crc32fast::hash(&payload));
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let payload = checked_payload(bytes, MAGIC, INDEX_VERSION)?;
        let mut r = Reader::new(payload);
        let n_surfaces = r.u64()?;
        let mut entries = BTreeMap::new();
        for _ in 0..n_surfaces {
            let surface = r.string()?;
            let n = r.u32()? as usize;
            let mut list = Vec::with_capacity(n.min(1 << 16));
            let mut stored = Vec::with_capacity(n.min(1 << 16));
            for _ in 0..n {
                let entity = r.string()?;
                let count = r.u64()?;
                stored.push(r.f64()?);
                list.push((entity, count));
            }
            let recomputed = with_priors(list);
            // stored order equals recomputed order for a well-formed file
            for (e, s) in recomputed.iter().zip(&stored) {
                if (e.prior - s).abs() > 1e-12 {
                    return Err(Error::IndexFormat(format!(
                        "stored prior {s} for {:?} under {surface:?} disagrees with recomputed {}",
                        e.entity, e.prior
                    )));
                }
            }
            if recomputed.is_empty() {
                return Err(Error::IndexFormat(format!("surface {surface:?} has no entries")));
            }
            entries.insert(surface, recomputed);
        }
        let n_desc = r.u64()?;
        let mut descriptions = BTreeMap::new();
        for _ in 0..n_desc {
            let entity = r.string()?;
            let text = r.string()?;
            descriptions.insert(entity, text);
        }
        if !r.is_done() {
            return Err(Error::IndexFormat("trailing bytes after payload".into()));
        }
        Ok(Self {
            entries,
            descriptions,
        })
    }

    /// `surface<TAB>entity<TAB>count<TAB>prior` rows.
    pub fn export_tsv(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (surface, list) in &self.entries {
            for e in list {
                writeln!(out, "{surface}\t{}\t{}\t{}", e.entity, e.count, e.prior)?;
            }
        }
        Ok(())
    }
}

fn with_priors(mut list: Vec<(String, u64)>) -> Vec<AliasEntry> {
    list.retain(|(_, c)| *c > 0);
    let total: u64 = list.iter().map(|(_, c)| c).sum();
    // descending count is descending prior; ties by entity id
    list.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    list.into_iter()
        .map(|(entity, count)| AliasEntry {
            entity,
            count,
            prior: count as f64 / total as f64,
        })
        .collect()
}

/// A wikitext page as it appears in the JSON-lines page dump.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct Page {
    pub title: String,
    pub text: String,
}

/// Builds an index from pages; descriptions come from each page's plain
/// text unless supplied explicitly.
pub fn build_alias_index<'a>(
    pages: impl IntoIterator<Item = &'a Page>,
    extra_descriptions: &BTreeMap<String, String>,
    redirects: Option<&HashMap<String, String>>,
) -> (AliasIndex, BuildReport) {
    let mut counts = AnchorCounts::new();
    let mut descriptions = extra_descriptions.clone();
    for page in pages {
        counts.add_page(&page.text, redirects);
        let title = normalize_target(&page.title);
        descriptions
            .entry(title)
            .or_insert_with(|| plain_text(&page.text).chars().take(DESCRIPTION_CHARS).collect());
    }
    AliasIndex::from_counts(counts, &descriptions)
}

/// Reads a JSON-lines page dump (`{"title", "text"}` per line).
pub fn read_pages(path: impl AsRef<Path>) -> Result<Vec<Page>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pages = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        pages.push(serde_json::from_str(&line).map_err(|e| Error::Json {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(pages)
}

/// Reads precomputed `surface<TAB>entity<TAB>count` rows.
pub fn read_count_tsv(path: impl AsRef<Path>) -> Result<AnchorCounts> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut counts = AnchorCounts::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |message: &str| Error::Validation {
            line: i + 1,
            path: path.display().to_string(),
            message: message.to_string(),
        };
        if cols.len() < 3 {
            return Err(bad("expected surface<TAB>entity<TAB>count"));
        }
        let count: u64 = cols[2].trim().parse().map_err(|_| bad("count is not a non-negative integer"))?;
        counts.add(cols[0], &normalize_target(cols[1]), count);
    }
    Ok(counts)
}

/// Reads an `entity<TAB>description` table.
pub fn read_description_tsv(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(content
        .lines()
        .filter_map(|l| l.split_once('\t'))
        .map(|(e, d)| (normalize_target(e), d.chars().take(DESCRIPTION_CHARS).collect()))
        .collect())
}

pub(crate) fn checked_payload<'a>(bytes: &'a [u8], magic: &[u8; 8], version: u32) -> Result<&'a [u8]> {
    if bytes.len() < 24 {
        return Err(Error::Checksum(format!("file truncated to {} bytes", bytes.len())));
    }
    if &bytes[..8] != magic {
        return Err(Error::IndexFormat("bad magic header".into()));
    }
    let found = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if found != version {
        return Err(Error::Version {
            found,
            expected: version,
        });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let crc = u32::from_le_bytes(bytes[20..24].try_into().unwrap());
    let payload = &bytes[24..];
    if payload.len() != len {
        return Err(Error::Checksum(format!(
            "payload is {} bytes, header says {len}",
            payload.len()
        )));
    }
    if crc32fast::hash(payload) != crc {
        return Err(Error::Checksum("crc32 mismatch".into()));
    }
    Ok(payload)
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::IndexFormat("unexpected end of payload".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::IndexFormat(e.to_string()))
    }

    pub(crate) fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
