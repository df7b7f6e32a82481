//! Reader and writer for word2vec (binary and text) and GloVe text files.
//!
//! * word2vec binary: ASCII header `"<count> <dim>\n"`, then per entry the word,
//!   one space, and `dim` little-endian `f32` values. Whitespace between
//!   entries (word2vec writes a newline) is skipped.
//! * word2vec text: the same header, then `word v1 ... vd` lines.
//! * GloVe text: no header, `word v1 ... vd` lines.
//!
//! Text output uses the shortest decimal form that round-trips each `f32`, so
//! text and binary files carry identical values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingSource, EmbeddingTable, Result};
use crate::corpus::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingFormat {
    #[serde(rename = "word2vec_binary")]
    Word2VecBinary,
    #[serde(rename = "word2vec_text")]
    Word2VecText,
    GloveText,
}

impl std::str::FromStr for EmbeddingFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "word2vec_binary" | "word2vec-binary" | "bin" => Ok(Self::Word2VecBinary),
            "word2vec_text" | "word2vec-text" | "txt" => Ok(Self::Word2VecText),
            "glove_text" | "glove-text" | "glove" => Ok(Self::GloveText),
            other => Err(format!("unknown embedding format {other:?}")),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> EmbeddingError + '_ {
    move |source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_dim(expected: Option<usize>, found: usize) -> Result<()> {
    match expected {
        Some(e) if e != found => Err(EmbeddingError::DimensionMismatch { expected: e, found }),
        _ => Ok(()),
    }
}

/// Tracks the byte offset consumed from an inner reader.
struct Counting<R> {
    inner: R,
    offset: u64,
}

impl<R: BufRead> Counting<R> {
    fn read_until(&mut self, delim: u8, buf: &mut Vec<u8>) -> std::io::Result<usize> {
        let n = self.inner.read_until(delim, buf)?;
        self.offset += n as u64;
        Ok(n)
    }

    fn peek(&mut self) -> std::io::Result<Option<u8>> {
        Ok(self.inner.fill_buf()?.first().copied())
    }

    fn skip_whitespace(&mut self) -> std::io::Result<()> {
        while let Some(b) = self.peek()? {
            if !b.is_ascii_whitespace() {
                break;
            }
            self.inner.consume(1);
            self.offset += 1;
        }
        Ok(())
    }

    fn read_f32(&mut self) -> std::io::Result<f32> {
        let v = self.inner.read_f32::<LittleEndian>()?;
        self.offset += 4;
        Ok(v)
    }
}

fn parse_header(line: &str, offset: u64) -> Result<(usize, usize)> {
    let mut parts = line.split_whitespace();
    let mut num = || -> Option<usize> { parts.next()?.parse().ok() };
    match (num(), num()) {
        (Some(count), Some(dim)) if dim > 0 => Ok((count, dim)),
        _ => Err(EmbeddingError::ParseError {
            offset,
            reason: format!("bad header {line:?}"),
        }),
    }
}

pub fn read_word2vec_binary<R: BufRead>(
    reader: R,
    lang: Language,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let mut r = Counting {
        inner: reader,
        offset: 0,
    };
    let mut buf = Vec::new();
    let parse_err = |offset, reason: &str| EmbeddingError::ParseError {
        offset,
        reason: reason.to_string(),
    };
    r.read_until(b'\n', &mut buf)
        .map_err(|e| parse_err(0, &e.to_string()))?;
    let header = std::str::from_utf8(&buf).map_err(|_| parse_err(0, "header is not text"))?;
    let (count, dim) = parse_header(header, 0)?;
    check_dim(expected_dim, dim)?;
    let mut table = EmbeddingTable::new(dim, lang, EmbeddingSource::PretrainedBinary);
    let mut vector = vec![0f32; dim];
    for _ in 0..count {
        r.skip_whitespace().map_err(|e| parse_err(r.offset, &e.to_string()))?;
        let start = r.offset;
        buf.clear();
        r.read_until(b' ', &mut buf)
            .map_err(|e| parse_err(start, &e.to_string()))?;
        if buf.pop() != Some(b' ') || buf.is_empty() {
            return Err(parse_err(start, "truncated entry"));
        }
        let word = String::from_utf8(buf.clone()).map_err(|_| parse_err(start, "word is not UTF-8"))?;
        for v in vector.iter_mut() {
            *v = r
                .read_f32()
                .map_err(|_| parse_err(r.offset, "truncated vector"))?;
            if !v.is_finite() {
                return Err(parse_err(r.offset - 4, "non-finite value"));
            }
        }
        table.insert(word, &vector)?;
    }
    r.skip_whitespace().map_err(|e| parse_err(r.offset, &e.to_string()))?;
    if r.peek().map_err(|e| parse_err(r.offset, &e.to_string()))?.is_some() {
        return Err(parse_err(r.offset, "trailing data after last entry"));
    }
    Ok(table)
}

fn parse_vector_line(line: &str, offset: u64, dim: Option<usize>) -> Result<(String, Vec<f32>)> {
    let mut parts = line.split(' ').filter(|p| !p.is_empty());
    let word = parts.next().ok_or_else(|| EmbeddingError::ParseError {
        offset,
        reason: "empty line".into(),
    })?;
    let values = parts
        .map(|p| {
            p.trim_end().parse::<f32>().map_err(|_| EmbeddingError::ParseError {
                offset,
                reason: format!("bad number {p:?}"),
            })
        })
        .collect::<Result<Vec<f32>>>()?;
    if let Some(d) = dim {
        if values.len() != d {
            return Err(EmbeddingError::DimensionMismatch {
                expected: d,
                found: values.len(),
            });
        }
    }
    if values.is_empty() {
        return Err(EmbeddingError::ParseError {
            offset,
            reason: "line has no values".into(),
        });
    }
    Ok((word.to_string(), values))
}

fn read_text<R: BufRead>(
    reader: R,
    lang: Language,
    expected_dim: Option<usize>,
    has_header: bool,
) -> Result<EmbeddingTable> {
    let mut offset = 0u64;
    let mut header: Option<(usize, usize)> = None;
    let mut table: Option<EmbeddingTable> = None;
    let source = if has_header {
        EmbeddingSource::PretrainedText
    } else {
        EmbeddingSource::PretrainedGlove
    };
    for line in reader.lines() {
        let line = line.map_err(|e| EmbeddingError::ParseError {
            offset,
            reason: e.to_string(),
        })?;
        let line_offset = offset;
        offset += line.len() as u64 + 1;
        let content = line.trim_end_matches('\r');
        if has_header && header.is_none() {
            let (count, dim) = parse_header(content, line_offset)?;
            check_dim(expected_dim, dim)?;
            header = Some((count, dim));
            table = Some(EmbeddingTable::new(dim, lang, source));
            continue;
        }
        if content.trim().is_empty() {
            continue;
        }
        let dim = table.as_ref().map(|t| t.dim()).or(expected_dim);
        let (word, values) = parse_vector_line(content, line_offset, dim)?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len(), lang, source));
        t.insert(word, &values)?;
    }
    match (header, table) {
        (Some((count, _)), Some(t)) if t.len() != count => Err(EmbeddingError::ParseError {
            offset,
            reason: format!("header declares {count} words, found {}", t.len()),
        }),
        (_, Some(t)) => Ok(t),
        (_, None) => Err(EmbeddingError::ParseError {
            offset,
            reason: "no vectors".into(),
        }),
    }
}

pub fn read_word2vec_text<R: BufRead>(
    reader: R,
    lang: Language,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    read_text(reader, lang, expected_dim, true)
}

pub fn read_glove_text<R: BufRead>(
    reader: R,
    lang: Language,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    read_text(reader, lang, expected_dim, false)
}

pub fn load_embeddings(
    path: &Path,
    format: EmbeddingFormat,
    lang: Language,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    match format {
        EmbeddingFormat::Word2VecBinary => read_word2vec_binary(reader, lang, expected_dim),
        EmbeddingFormat::Word2VecText => read_word2vec_text(reader, lang, expected_dim),
        EmbeddingFormat::GloveText => read_glove_text(reader, lang, expected_dim),
    }
}

/// Try word2vec binary, then word2vec text. Returns the format that parsed.
pub fn load_embeddings_auto(
    path: &Path,
    lang: Language,
    expected_dim: Option<usize>,
) -> Result<(EmbeddingTable, EmbeddingFormat)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    match read_word2vec_binary(&bytes[..], lang, expected_dim) {
        Ok(t) => {
            log::info!("{}: parsed as word2vec binary", path.display());
            Ok((t, EmbeddingFormat::Word2VecBinary))
        }
        Err(bin_err) => match read_word2vec_text(&bytes[..], lang, expected_dim) {
            Ok(t) => {
                log::info!("{}: parsed as word2vec text", path.display());
                Ok((t, EmbeddingFormat::Word2VecText))
            }
            Err(text_err) => {
                log::warn!("{}: binary parse failed: {bin_err}", path.display());
                Err(text_err)
            }
        },
    }
}

pub fn write_word2vec_binary<W: Write>(table: &EmbeddingTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {}", table.len(), table.dim())?;
    for (word, vec) in table.iter() {
        write!(w, "{word} ")?;
        for &v in vec {
            w.write_f32::<LittleEndian>(v)?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn write_rows<W: Write>(table: &EmbeddingTable, w: &mut W) -> std::io::Result<()> {
    for (word, vec) in table.iter() {
        w.write_all(word.as_bytes())?;
        for v in vec {
            write!(w, " {v}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_word2vec_text<W: Write>(table: &EmbeddingTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{} {}", table.len(), table.dim())?;
    write_rows(table, &mut w)?;
    w.flush()
}

pub fn write_glove_text<W: Write>(table: &EmbeddingTable, mut w: W) -> std::io::Result<()> {
    write_rows(table, &mut w)?;
    w.flush()
}

pub fn save_embeddings(table: &EmbeddingTable, path: &Path, format: EmbeddingFormat) -> Result<()> {
    let w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    match format {
        EmbeddingFormat::Word2VecBinary => write_word2vec_binary(table, w),
        EmbeddingFormat::Word2VecText => write_word2vec_text(table, w),
        EmbeddingFormat::GloveText => write_glove_text(table, w),
    }
    .map_err(io_err(path))
}
