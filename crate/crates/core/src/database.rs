//! ±1 databases: packed storage, the [`Dataset`] view trait, and file formats.
//!
//! Rows are stored as packed sign bits (1 = +1, 0 = −1), each row padded to a
//! whole number of 64-bit words. Marginals are computed once, from exact
//! integer column counts, and cached.
//!
//! Binary file layout (all integers little-endian):
//!
//! ```text
//! offset 0   8 bytes  magic  b"MARGPRV1"
//! offset 8   u64      n (rows)
//! offset 16  u64      d (columns)
//! offset 24  ⌈n·d/8⌉ bytes of row-major packed bits; global bit k = i·d + j
//!            lives in byte k/8 at bit position k%8 (LSB first); unused
//!            trailing bits must be zero
//! ```
//!
//! Text layout: one row per line, `+` for +1 and `-` for −1.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::marginals::MarginalVector;

pub const BINARY_MAGIC: &[u8; 8] = b"MARGPRV1";

/// Read-only access to an `n × d` ±1 matrix and its one-way marginals.
///
/// Mechanisms and query engines only need this view, which lets the attack
/// harness hand them large structured databases (k-copy embeddings, repeated
/// rows) without materialising every row.
pub trait Dataset: Send + Sync {
    fn rows(&self) -> usize;
    fn dims(&self) -> usize;
    /// Entry `(row, col)` as −1 or +1.
    fn sign(&self, row: usize, col: usize) -> i8;
    fn marginals(&self) -> &MarginalVector;
}

#[derive(Debug)]
pub struct Database {
    rows: usize,
    dims: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    marginals: OnceLock<MarginalVector>,
}

impl Clone for Database {
    fn clone(&self) -> Self {
        Database {
            rows: self.rows,
            dims: self.dims,
            words_per_row: self.words_per_row,
            bits: self.bits.clone(),
            marginals: self.marginals.clone(),
        }
    }
}

impl PartialEq for Database {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.dims == other.dims && self.bits == other.bits
    }
}

impl Eq for Database {}

fn check_shape(rows: usize, dims: usize) -> Result<()> {
    if rows == 0 || dims == 0 {
        return Err(Error::param(format!(
            "database must have n >= 1 and d >= 1 (got {rows} x {dims})"
        )));
    }
    rows.checked_mul(dims)
        .ok_or_else(|| Error::param("n * d overflows"))?;
    Ok(())
}

impl Database {
    fn zeroed(rows: usize, dims: usize) -> Result<Self> {
        check_shape(rows, dims)?;
        let words_per_row = dims.div_ceil(64);
        Ok(Database {
            rows,
            dims,
            words_per_row,
            bits: vec![0; rows * words_per_row],
            marginals: OnceLock::new(),
        })
    }

    /// Builds a database from a predicate: `true` means +1.
    pub fn from_fn(rows: usize, dims: usize, mut positive: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        let mut db = Self::zeroed(rows, dims)?;
        for i in 0..rows {
            let row = &mut db.bits[i * db.words_per_row..(i + 1) * db.words_per_row];
            for j in 0..dims {
                if positive(i, j) {
                    row[j / 64] |= 1 << (j % 64);
                }
            }
        }
        Ok(db)
    }

    /// Row-major ±1 entries; any other value is rejected.
    pub fn from_signs(rows: usize, dims: usize, signs: &[i8]) -> Result<Self> {
        check_shape(rows, dims)?;
        crate::error::ensure_dims(rows * dims, signs.len())?;
        if let Some(bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::param(format!("database entries must be -1 or +1, got {bad}")));
        }
        Self::from_fn(rows, dims, |i, j| signs[i * dims + j] == 1)
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n * d);
        for row in rows {
            crate::error::ensure_dims(d, row.len())?;
            flat.extend_from_slice(row);
        }
        Self::from_signs(n, d, &flat)
    }

    pub fn filled(rows: usize, dims: usize, sign: i8) -> Result<Self> {
        if sign != 1 && sign != -1 {
            return Err(Error::param("fill sign must be -1 or +1"));
        }
        Self::from_fn(rows, dims, |_, _| sign == 1)
    }

    /// Independent fair ±1 entries.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, dims: usize, rng: &mut R) -> Result<Self> {
        let mut db = Self::zeroed(rows, dims)?;
        let tail = dims % 64;
        for i in 0..rows {
            for w in 0..db.words_per_row {
                let mut word: u64 = rng.random();
                if w == db.words_per_row - 1 && tail != 0 {
                    word &= (1u64 << tail) - 1;
                }
                db.bits[i * db.words_per_row + w] = word;
            }
        }
        Ok(db)
    }

    /// Every entry independently +1 with probability `p`.
    pub fn biased<R: Rng + ?Sized>(rows: usize, dims: usize, p: f64, rng: &mut R) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param(format!("bias p must lie in [0, 1], got {p}")));
        }
        Self::from_fn(rows, dims, |_, _| rng.random::<f64>() < p)
    }

    /// Column `j` entries independently +1 with probability `biases[j]`.
    pub fn with_column_biases<R: Rng + ?Sized>(rows: usize, biases: &[f64], rng: &mut R) -> Result<Self> {
        if let Some(p) = biases.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::param(format!("column bias must lie in [0, 1], got {p}")));
        }
        Self::from_fn(rows, biases.len(), |_, j| rng.random::<f64>() < biases[j])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn sign(&self, row: usize, col: usize) -> i8 {
        debug_assert!(row < self.rows && col < self.dims);
        let word = self.bits[row * self.words_per_row + col / 64];
        if (word >> (col % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        f64::from(self.sign(row, col))
    }

    pub fn row_signs(&self, row: usize) -> Vec<i8> {
        (0..self.dims).map(|j| self.sign(row, j)).collect()
    }

    /// Packed words of one row; bits beyond `dims` are zero.
    pub fn row_words(&self, row: usize) -> &[u64] {
        &self.bits[row * self.words_per_row..(row + 1) * self.words_per_row]
    }

    /// Copy with row `row` replaced by `signs`.
    pub fn with_row_replaced(&self, row: usize, signs: &[i8]) -> Result<Database> {
        if row >= self.rows {
            return Err(Error::param(format!("row {row} out of range for {} rows", self.rows)));
        }
        crate::error::ensure_dims(self.dims, signs.len())?;
        let mut out = Database {
            rows: self.rows,
            dims: self.dims,
            words_per_row: self.words_per_row,
            bits: self.bits.clone(),
            marginals: OnceLock::new(),
        };
        let words = &mut out.bits[row * self.words_per_row..(row + 1) * self.words_per_row];
        words.fill(0);
        for (j, &s) in signs.iter().enumerate() {
            match s {
                1 => words[j / 64] |= 1 << (j % 64),
                -1 => {}
                other => return Err(Error::param(format!("row entries must be -1 or +1, got {other}"))),
            }
        }
        Ok(out)
    }

    /// Number of +1 entries in each column.
    pub fn column_counts(&self) -> Vec<u64> {
        const CHUNK: usize = 4096;
        let wpr = self.words_per_row;
        let dims = self.dims;
        self.bits
            .par_chunks(CHUNK * wpr)
            .map(|chunk| {
                let mut counts = vec![0u64; dims];
                for row in chunk.chunks_exact(wpr) {
                    for (w, &word) in row.iter().enumerate() {
                        let mut bits = word;
                        while bits != 0 {
                            let b = bits.trailing_zeros() as usize;
                            counts[w * 64 + b] += 1;
                            bits &= bits - 1;
                        }
                    }
                }
                counts
            })
            .reduce(
                || vec![0u64; dims],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            )
    }

    pub fn marginals(&self) -> &MarginalVector {
        self.marginals.get_or_init(|| {
            let n = self.rows as f64;
            let values = self
                .column_counts()
                .into_iter()
                .map(|c| (2.0 * c as f64 - n) / n)
                .collect();
            MarginalVector::new_unchecked(values)
        })
    }

    // ---- binary format ----

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.dims as u64).to_le_bytes())?;
        let total_bits = self.rows * self.dims;
        let mut bytes = vec![0u8; total_bits.div_ceil(8)];
        let mut k = 0usize;
        for i in 0..self.rows {
            let row = self.row_words(i);
            for j in 0..self.dims {
                if (row[j / 64] >> (j % 64)) & 1 == 1 {
                    bytes[k / 8] |= 1 << (k % 8);
                }
                k += 1;
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Database> {
        let mut header = [0u8; 24];
        r.read_exact(&mut header)
            .map_err(|_| Error::format("binary database shorter than its 24-byte header"))?;
        if &header[..8] != BINARY_MAGIC {
            return Err(Error::format("bad magic: not a binary database file"));
        }
        let n = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let d = u64::from_le_bytes(header[16..24].try_into().unwrap());
        let n = usize::try_from(n).map_err(|_| Error::format("row count does not fit in memory"))?;
        let d = usize::try_from(d).map_err(|_| Error::format("column count does not fit in memory"))?;
        check_shape(n, d)?;
        let total_bits = n * d;
        let expected = total_bits.div_ceil(8);
        let mut payload = Vec::with_capacity(expected);
        r.read_to_end(&mut payload)?;
        crate::error::ensure_dims(expected, payload.len())?;
        if total_bits % 8 != 0 {
            let last = payload[expected - 1];
            if last >> (total_bits % 8) != 0 {
                return Err(Error::format("nonzero padding bits after the last entry"));
            }
        }
        let mut db = Self::zeroed(n, d)?;
        let mut k = 0usize;
        for i in 0..n {
            for j in 0..d {
                if (payload[k / 8] >> (k % 8)) & 1 == 1 {
                    db.bits[i * db.words_per_row + j / 64] |= 1 << (j % 64);
                }
                k += 1;
            }
        }
        Ok(db)
    }

    // ---- text format ----

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let mut line = String::with_capacity(self.dims + 1);
        for i in 0..self.rows {
            line.clear();
            line.extend((0..self.dims).map(|j| if self.sign(i, j) == 1 { '+' } else { '-' }));
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Database> {
        let mut signs = Vec::new();
        let mut dims = None;
        let mut rows = 0usize;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let width = line.chars().count();
            match dims {
                None => dims = Some(width),
                Some(d) if d != width => return Err(Error::Dimension { expected: d, found: width }),
                _ => {}
            }
            for c in line.chars() {
                signs.push(match c {
                    '+' => 1,
                    '-' => -1,
                    other => {
                        return Err(Error::format(format!(
                            "line {}: unexpected character {other:?}",
                            lineno + 1
                        )))
                    }
                });
            }
            rows += 1;
        }
        let dims = dims.ok_or_else(|| Error::format("empty text database"))?;
        Self::from_signs(rows, dims, &signs)
    }

    // ---- path helpers ----

    /// Reads either format, detected by the binary magic.
    pub fn load(path: impl AsRef<Path>) -> Result<Database> {
        let mut f = BufReader::new(File::open(path)?);
        let starts_with_magic = f.fill_buf()?.starts_with(BINARY_MAGIC);
        if starts_with_magic {
            Self::read_binary(f)
        } else {
            Self::read_text(f)
        }
    }

    /// Like [`Database::load`] but rejects files whose shape differs from `(rows, dims)`.
    pub fn load_expecting(path: impl AsRef<Path>, rows: usize, dims: usize) -> Result<Database> {
        let db = Self::load(path)?;
        crate::error::ensure_dims(rows, db.rows)?;
        crate::error::ensure_dims(dims, db.dims)?;
        Ok(db)
    }

    pub fn save(&self, path: impl AsRef<Path>, format: DatabaseFormat) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        match format {
            DatabaseFormat::Binary => self.write_binary(&mut w)?,
            DatabaseFormat::Text => self.write_text(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatabaseFormat {
    Binary,
    Text,
}

impl Dataset for Database {
    fn rows(&self) -> usize {
        self.rows
    }

    fn dims(&self) -> usize {
        self.dims
    }

    fn sign(&self, row: usize, col: usize) -> i8 {
        Database::sign(self, row, col)
    }

    fn marginals(&self) -> &MarginalVector {
        Database::marginals(self)
    }
}
