//! Word embedding spaces and the vector math used by every opacity metric.
//!
//! Vectors are stored as read (`f32`, no renormalization). All arithmetic is
//! carried out in `f64` with a fixed left-to-right summation order, so results
//! are reproducible bit for bit.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// On-disk layout of an embedding file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    /// word2vec binary: `"<count> <dim>\n"`, then per entry the token, a
    /// space, `dim` little-endian `f32`s and an optional newline.
    Binary,
    /// One `token v1 ... vdim` line per entry. A leading `"<count> <dim>"`
    /// header line is accepted.
    Text,
}

impl EmbeddingFormat {
    /// Guess the format from a file name: `.bin` is binary, anything else text.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => EmbeddingFormat::Binary,
            _ => EmbeddingFormat::Text,
        }
    }
}

/// A borrowed view of one stored vector.
#[derive(Debug, Clone, Copy)]
pub struct WordVector<'a> {
    pub word: &'a str,
    pub values: &'a [f32],
}

/// Counts reported after loading an embedding file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Entry count declared in the header, if any.
    pub declared: Option<u64>,
    pub loaded: u64,
    pub skipped_zero_norm: u64,
    pub skipped_duplicate: u64,
    pub skipped_by_filter: u64,
}

/// `token` with its first character uppercased.
pub fn capitalized(token: &str) -> String {
    let mut chars = token.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Immutable word -> vector map with one shared dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    digest: String,
}

impl EmbeddingSpace {
    /// Build a space from in-memory entries. Zero-norm vectors and repeated
    /// words are skipped and counted, as when loading from a file.
    pub fn from_entries<I, S>(dim: usize, entries: I) -> Result<(Self, LoadReport)>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::argument("embedding dimension must be positive"));
        }
        let mut builder = SpaceBuilder::new(dim, None);
        let mut hasher = Sha256::new();
        for (word, values) in entries {
            let word = word.into();
            if values.len() != dim {
                return Err(Error::argument(format!(
                    "vector for `{word}` has {} components, expected {dim}",
                    values.len()
                )));
            }
            hasher.update(word.as_bytes());
            hasher.update([0u8]);
            for v in &values {
                hasher.update(v.to_le_bytes());
            }
            builder.push(word, &values);
        }
        Ok(builder.finish(hex::encode(hasher.finalize())))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// SHA-256 of the bytes the space was loaded from.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Case-sensitive exact lookup.
    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<WordVector<'_>> {
        self.index.get(word).map(|&i| WordVector {
            word: &self.words[i],
            values: self.row(i),
        })
    }

    /// Entries in load order.
    pub fn iter(&self) -> impl Iterator<Item = WordVector<'_>> + '_ {
        (0..self.len()).map(move |i| WordVector {
            word: &self.words[i],
            values: self.row(i),
        })
    }

    /// Look a lowercase token up as stored, falling back to its capitalized
    /// form (proper nouns). Returns the stored spelling.
    pub fn resolve(&self, token: &str) -> Option<&str> {
        if let Some(&i) = self.index.get(token) {
            return Some(&self.words[i]);
        }
        self.index.get(&capitalized(token)).map(|&i| self.words[i].as_str())
    }

    /// Write the space in word2vec binary layout.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for entry in self.iter() {
            out.write_all(entry.word.as_bytes())?;
            out.write_all(b" ")?;
            for v in entry.values {
                out.write_all(&v.to_le_bytes())?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Write the space as text, one entry per line, without a header.
    /// `f32` values print in shortest round-trip form, so reloading is exact.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for entry in self.iter() {
            out.write_all(entry.word.as_bytes())?;
            for v in entry.values {
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

struct SpaceBuilder<'f> {
    dim: usize,
    filter: Option<&'f HashSet<String>>,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    report: LoadReport,
}

impl<'f> SpaceBuilder<'f> {
    fn new(dim: usize, filter: Option<&'f HashSet<String>>) -> Self {
        SpaceBuilder {
            dim,
            filter,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            report: LoadReport::default(),
        }
    }

    fn push(&mut self, word: String, values: &[f32]) {
        if let Some(filter) = self.filter {
            if !filter.contains(&word) {
                self.report.skipped_by_filter += 1;
                return;
            }
        }
        if squared_norm(values) == 0.0 {
            self.report.skipped_zero_norm += 1;
            return;
        }
        if self.index.contains_key(&word) {
            self.report.skipped_duplicate += 1;
            return;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(values);
        self.report.loaded += 1;
    }

    fn finish(self, digest: String) -> (EmbeddingSpace, LoadReport) {
        let space = EmbeddingSpace {
            dim: self.dim,
            words: self.words,
            index: self.index,
            data: self.data,
            digest,
        };
        (space, self.report)
    }
}

/// Reader adapter that hashes and counts everything passing through it.
struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

/// Parse an embedding stream into a space.
///
/// With `vocab_filter`, only listed tokens are kept (the whole stream is still
/// read and hashed). Zero-norm vectors are skipped and counted in the report.
/// A dimension mismatch or truncated entry is a [`Error::Format`] carrying the
/// byte offset where the bad entry starts.
pub fn load_embeddings<R: Read>(
    source: R,
    format: EmbeddingFormat,
    vocab_filter: Option<&HashSet<String>>,
) -> Result<(EmbeddingSpace, LoadReport)> {
    let mut reader = BufReader::with_capacity(
        1 << 20,
        HashingReader {
            inner: source,
            hasher: Sha256::new(),
        },
    );
    let builder = match format {
        EmbeddingFormat::Binary => parse_binary(&mut reader, vocab_filter)?,
        EmbeddingFormat::Text => parse_text(&mut reader, vocab_filter)?,
    };
    // Hash whatever the parser did not need.
    std::io::copy(&mut reader, &mut std::io::sink())?;
    let digest = hex::encode(reader.into_inner().hasher.finalize());
    Ok(builder.finish(digest))
}

fn parse_header(line: &str) -> Option<(u64, usize)> {
    let mut it = line.split_whitespace();
    let count = it.next()?.parse().ok()?;
    let dim = it.next()?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((count, dim))
}

fn parse_binary<'f, R: BufRead>(reader: &mut R, filter: Option<&'f HashSet<String>>) -> Result<SpaceBuilder<'f>> {
    let mut line = Vec::new();
    let header_len = reader.read_until(b'\n', &mut line)?;
    let header = std::str::from_utf8(&line)
        .ok()
        .and_then(parse_header)
        .filter(|&(_, dim)| dim > 0)
        .ok_or_else(|| Error::format(0, "malformed header, expected \"<vocab_count> <dim>\""))?;
    let (count, dim) = header;

    let mut builder = SpaceBuilder::new(dim, filter);
    builder.report.declared = Some(count);
    let mut offset = header_len as u64;
    let mut token = Vec::new();
    let mut raw = vec![0u8; dim * 4];
    let mut values = vec![0f32; dim];
    for _ in 0..count {
        let entry_start = offset;
        token.clear();
        let n = reader.read_until(b' ', &mut token)?;
        offset += n as u64;
        if token.last() != Some(&b' ') {
            return Err(Error::format(
                entry_start,
                "truncated entry: token not terminated by a space",
            ));
        }
        token.pop();
        // The newline that optionally ends the previous entry.
        let start = token
            .iter()
            .position(|&b| b != b'\n' && b != b'\r')
            .unwrap_or(token.len());
        let word = &token[start..];
        if word.is_empty() {
            return Err(Error::format(entry_start, "empty token"));
        }
        reader.read_exact(&mut raw).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::format(
                entry_start,
                format!(
                    "entry `{}` holds fewer than {dim} components",
                    String::from_utf8_lossy(word)
                ),
            ),
            _ => Error::Io(e),
        })?;
        offset += raw.len() as u64;
        for (v, chunk) in values.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        builder.push(String::from_utf8_lossy(word).into_owned(), &values);
    }

    let mut rest = Vec::new();
    reader.read_to_end(&mut rest)?;
    if let Some(pos) = rest.iter().position(|b| !b.is_ascii_whitespace()) {
        return Err(Error::format(
            offset + pos as u64,
            format!("data after the {count} declared entries; header dimension {dim} does not match the entries"),
        ));
    }
    Ok(builder)
}

fn parse_text<'f, R: BufRead>(reader: &mut R, filter: Option<&'f HashSet<String>>) -> Result<SpaceBuilder<'f>> {
    let mut builder: Option<SpaceBuilder<'f>> = None;
    let mut declared: Option<(u64, usize)> = None;
    let mut offset = 0u64;
    let mut line = String::new();
    let mut values = Vec::new();
    let mut first = true;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        let line_start = offset;
        offset += n as u64;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if std::mem::take(&mut first) {
            if let Some(h) = parse_header(trimmed) {
                declared = Some(h);
                continue;
            }
        }
        let mut fields = trimmed.split_whitespace();
        let word = fields.next().unwrap_or_default();
        values.clear();
        for f in fields {
            let v: f32 = f
                .parse()
                .map_err(|_| Error::format(line_start, format!("bad component `{f}` for `{word}`")))?;
            values.push(v);
        }
        let b = builder.get_or_insert_with(|| {
            let dim = declared.map(|(_, d)| d).unwrap_or(values.len());
            let mut b = SpaceBuilder::new(dim, filter);
            b.report.declared = declared.map(|(c, _)| c);
            b
        });
        if values.is_empty() || values.len() != b.dim {
            return Err(Error::format(
                line_start,
                format!("entry `{word}` has {} components, expected {}", values.len(), b.dim),
            ));
        }
        b.push(word.to_string(), &values);
    }
    match builder {
        Some(b) => Ok(b),
        None => match declared {
            Some((_, dim)) if dim > 0 => Ok(SpaceBuilder::new(dim, filter)),
            _ => Err(Error::format(0, "no entries")),
        },
    }
}

/// Component type accepted by the vector functions.
pub trait Component: Copy {
    fn to_f64(self) -> f64;
}

impl Component for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Component for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

fn check_dims<A, B>(x: &[A], y: &[B]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::argument(format!(
            "dimension mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::argument("empty vectors"));
    }
    Ok(())
}

pub fn dot<A: Component, B: Component>(x: &[A], y: &[B]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a.to_f64() * b.to_f64()).sum()
}

pub fn squared_norm<A: Component>(x: &[A]) -> f64 {
    x.iter().map(|a| a.to_f64() * a.to_f64()).sum()
}

/// Cosine of the angle between two nonzero vectors, clamped to [-1, 1].
pub fn cosine<A: Component, B: Component>(x: &[A], y: &[B]) -> Result<f64> {
    check_dims(x, y)?;
    let nx = squared_norm(x);
    let ny = squared_norm(y);
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::argument("zero vector has no direction"));
    }
    Ok((dot(x, y) / (nx * ny).sqrt()).clamp(-1.0, 1.0))
}

/// Convert a cosine to an angle in degrees, clamping first.
pub fn cosine_to_degrees(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Angle in degrees, in [0, 180], between the directions of `x` and `y`.
pub fn angle_between<A: Component, B: Component>(x: &[A], y: &[B]) -> Result<f64> {
    cosine(x, y).map(cosine_to_degrees)
}

/// Componentwise sum of raw vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSum {
    pub values: Vec<f64>,
}

impl VectorSum {
    /// A cancelled sum has no direction and cannot be used for angles.
    pub fn is_zero_norm(&self) -> bool {
        squared_norm(&self.values) == 0.0
    }
}

pub fn vector_sum<A: Component>(vectors: &[&[A]]) -> Result<VectorSum> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::argument("cannot sum an empty list of vectors"))?;
    let mut values: Vec<f64> = first.iter().map(|v| v.to_f64()).collect();
    for v in &vectors[1..] {
        check_dims(first, v)?;
        for (acc, x) in values.iter_mut().zip(v.iter()) {
            *acc += x.to_f64();
        }
    }
    Ok(VectorSum { values })
}

/// L2 distance between raw vectors.
pub fn euclidean_distance<A: Component, B: Component>(x: &[A], y: &[B]) -> Result<f64> {
    check_dims(x, y)?;
    Ok(squared_distance(x, y).sqrt())
}

#[inline]
pub(crate) fn squared_distance<A: Component, B: Component>(x: &[A], y: &[B]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = a.to_f64() - b.to_f64();
            d * d
        })
        .sum()
}
