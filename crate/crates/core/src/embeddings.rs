//! Dense mention vectors and cosine geometry.
//!
//! On disk vectors are little-endian binary32 (`MWE1` for one row per
//! mention, `MWT1` for per-token rows that are averaged into mentions). In
//! memory they are held as any [`Scalar`], normally `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

pub const MENTION_MAGIC: &[u8; 4] = b"MWE1";
pub const TOKEN_MAGIC: &[u8; 4] = b"MWT1";

/// Row-major matrix with one row per mention id.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings<T> {
    dim: usize,
    data: Vec<T>,
    norms: Vec<T>,
}

impl<T: Scalar> Embeddings<T> {
    /// Rejects `dim == 0`, ragged data, non-finite entries and all-zero rows.
    pub fn from_flat(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return invalid("embedding dimension must be at least 1");
        }
        if data.len() % dim != 0 {
            return invalid(format!("{} values do not form rows of dimension {dim}", data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!("non-finite value in row {}", pos / dim));
        }
        let norms: Vec<T> = data.chunks_exact(dim).map(norm).collect();
        if let Some(row) = norms.iter().position(|n| *n == T::zero()) {
            return invalid(format!("row {row} is all zero"));
        }
        Ok(Embeddings { dim, data, norms })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return invalid("rows have differing dimensions");
        }
        Self::from_flat(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.data
    }

    /// Cosine similarity of rows `i` and `j`; symmetric bit for bit.
    pub fn similarity(&self, i: usize, j: usize) -> T {
        let s = dot(self.row(i), self.row(j)) / (self.norms[i] * self.norms[j]);
        s.max(-T::one()).min(T::one())
    }

    pub fn distance(&self, i: usize, j: usize) -> T {
        T::one() - self.similarity(i, j)
    }

    /// Rows at `ids`, in that order.
    pub fn select_rows(&self, ids: &[usize]) -> Self {
        let mut data = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        Embeddings { dim: self.dim, data, norms: ids.iter().map(|&i| self.norms[i]).collect() }
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Token vectors of one mention.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGroup<T> {
    pub mention_id: usize,
    pub token_vectors: Vec<Vec<T>>,
}

/// Unweighted mean of token vectors. The result is not renormalized.
pub fn average_tokens<T: Scalar>(group: &TokenGroup<T>) -> Result<Vec<T>> {
    let first = match group.token_vectors.first() {
        Some(v) => v,
        None => return invalid(format!("mention {} has no token vectors", group.mention_id)),
    };
    let dim = first.len();
    if group.token_vectors.iter().any(|v| v.len() != dim) {
        return invalid(format!("mention {} has token vectors of differing dimension", group.mention_id));
    }
    let mut sum = vec![T::zero(); dim];
    for v in &group.token_vectors {
        for (s, x) in sum.iter_mut().zip(v) {
            *s += *x;
        }
    }
    let n = T::from_usize(group.token_vectors.len()).unwrap();
    Ok(sum.into_iter().map(|s| s / n).collect())
}

pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return invalid(format!("vector lengths differ ({} vs {})", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == T::zero() || nb == T::zero() {
        return invalid("cosine similarity of a zero vector is undefined");
    }
    Ok((dot(a, b) / (na * nb)).max(-T::one()).min(T::one()))
}

pub fn cosine_distance<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    Ok(T::one() - cosine_similarity(a, b)?)
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Load(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_f32_payload<R: Read, T: Scalar>(r: &mut R, count: usize) -> Result<Vec<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 4 {
        return Err(Error::Load(format!(
            "payload is {} bytes, expected {} ({} binary32 values)",
            bytes.len(),
            count * 4,
            count
        )));
    }
    bytes
        .chunks_exact(4)
        .enumerate()
        .map(|(i, c)| {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if v.is_finite() {
                Ok(T::of(v as f64))
            } else {
                Err(Error::Load(format!("non-finite value at index {i}")))
            }
        })
        .collect()
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<(usize, usize)> {
    let mut m = [0u8; 4];
    read_exact_or(r, &mut m, "magic")?;
    if &m != magic {
        return Err(Error::Load(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let mut c = [0u8; 8];
    read_exact_or(r, &mut c, "count")?;
    let mut d = [0u8; 4];
    read_exact_or(r, &mut d, "dim")?;
    let count = u64::from_le_bytes(c) as usize;
    let dim = u32::from_le_bytes(d) as usize;
    if dim == 0 {
        return Err(Error::Load("dimension 0".into()));
    }
    Ok((count, dim))
}

fn to_load_error(e: Error) -> Error {
    match e {
        Error::Validation(m) => Error::Load(m),
        other => other,
    }
}

/// Reads an `MWE1` stream.
pub fn read_embeddings<T: Scalar, R: Read>(mut reader: R) -> Result<Embeddings<T>> {
    let (count, dim) = read_header(&mut reader, MENTION_MAGIC)?;
    let data = read_f32_payload(&mut reader, count * dim)?;
    Embeddings::from_flat(dim, data).map_err(to_load_error)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Embeddings<f64>> {
    read_embeddings(BufReader::new(File::open(path)?))
}

fn write_header<W: Write>(w: &mut W, magic: &[u8; 4], count: usize, dim: usize) -> Result<()> {
    w.write_all(magic)?;
    w.write_all(&(count as u64).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    Ok(())
}

pub fn write_embeddings<T: Scalar, W: Write>(emb: &Embeddings<T>, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    write_header(&mut w, MENTION_MAGIC, emb.len(), emb.dim())?;
    for v in &emb.data {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_embeddings<T: Scalar>(emb: &Embeddings<T>, path: impl AsRef<Path>) -> Result<()> {
    write_embeddings(emb, File::create(path)?)
}

/// Reads an `MWT1` stream and averages each mention's token rows.
///
/// Layout: magic, mention count (u64), dim (u32), one u32 token count per
/// mention, then all token rows as binary32.
pub fn read_token_embeddings<T: Scalar, R: Read>(mut reader: R) -> Result<Embeddings<T>> {
    let (count, dim) = read_header(&mut reader, TOKEN_MAGIC)?;
    let mut table = vec![0u8; count * 4];
    read_exact_or(&mut reader, &mut table, "token-count table")?;
    let tokens: Vec<usize> =
        table.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize).collect();
    let total: usize = tokens.iter().sum();
    let flat: Vec<T> = read_f32_payload(&mut reader, total * dim)?;
    let mut rows = Vec::with_capacity(count * dim);
    let mut offset = 0;
    for (mention_id, &n) in tokens.iter().enumerate() {
        let group = TokenGroup {
            mention_id,
            token_vectors: flat[offset * dim..(offset + n) * dim].chunks_exact(dim).map(<[T]>::to_vec).collect(),
        };
        offset += n;
        rows.extend(average_tokens(&group).map_err(to_load_error)?);
    }
    Embeddings::from_flat(dim, rows).map_err(to_load_error)
}

pub fn load_token_embeddings(path: impl AsRef<Path>) -> Result<Embeddings<f64>> {
    read_token_embeddings(BufReader::new(File::open(path)?))
}

/// Writes groups (ordered by mention id) as an `MWT1` stream.
pub fn write_token_embeddings<T: Scalar, W: Write>(groups: &[TokenGroup<T>], writer: W) -> Result<()> {
    let dim = groups.first().and_then(|g| g.token_vectors.first()).map_or(0, Vec::len);
    if dim == 0 {
        return invalid("token embeddings need at least one non-empty vector");
    }
    let mut w = BufWriter::new(writer);
    write_header(&mut w, TOKEN_MAGIC, groups.len(), dim)?;
    for g in groups {
        w.write_all(&(g.token_vectors.len() as u32).to_le_bytes())?;
    }
    for g in groups {
        for v in &g.token_vectors {
            if v.len() != dim {
                return invalid(format!("mention {} has a token of dimension {}", g.mention_id, v.len()));
            }
            for x in v {
                w.write_all(&(x.as_f64() as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
