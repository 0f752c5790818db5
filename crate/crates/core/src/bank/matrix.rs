//! Dense embedding matrices and their on-disk layout.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "SABK"
//! 4       4           version (u32, = 1)
//! 8       4           dim (u32)
//! 12      8           count (u64)
//! 20      1           dtype (0 = float32, 1 = int8-scaled)
//! 21      15          reserved, zero
//! 36      ...         row-major data (f32 or i8)
//! ...     4 * count   per-row f32 scales (int8 only)
//! ...     ceil(count / 8)  null mask, bit i of byte i / 8 (LSB first)
//! ```
//!
//! All multi-byte values are little-endian.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use memmap2::Mmap;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SABK";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 36;

#[cfg(target_endian = "big")]
compile_error!("the vector file format is read by reinterpreting little-endian bytes");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    Float32 = 0,
    Int8Scaled = 1,
}

impl Dtype {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Dtype::Float32),
            1 => Some(Dtype::Int8Scaled),
            _ => None,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::Float32 => 4,
            Dtype::Int8Scaled => 1,
        }
    }
}

#[derive(Debug)]
enum Backing {
    F32 {
        data: Vec<f32>,
        null_mask: Vec<u8>,
    },
    I8 {
        data: Vec<i8>,
        scales: Vec<f32>,
        null_mask: Vec<u8>,
    },
    Mapped {
        map: Mmap,
        scales_at: usize,
        mask_at: usize,
    },
}

/// Row-major embedding matrix, either owned or memory-mapped from a vector file.
#[derive(Debug)]
pub struct EmbeddingMatrix {
    dim: usize,
    count: usize,
    dtype: Dtype,
    backing: Backing,
}

fn mask_len(count: usize) -> usize {
    count.div_ceil(8)
}

fn mask_bit(mask: &[u8], i: usize) -> bool {
    mask[i / 8] & (1 << (i % 8)) != 0
}

fn mask_from_flags(flags: impl IntoIterator<Item = bool>, count: usize) -> Vec<u8> {
    let mut mask = vec![0u8; mask_len(count)];
    for (i, null) in flags.into_iter().enumerate() {
        if null {
            mask[i / 8] |= 1 << (i % 8);
        }
    }
    mask
}

impl EmbeddingMatrix {
    /// Builds a float32 matrix; `None` rows become flagged all-zero null rows.
    pub fn from_rows<R: AsRef<[f32]>>(dim: usize, rows: &[Option<R>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        let mut data = Vec::with_capacity(dim * rows.len());
        for row in rows {
            match row {
                Some(r) => {
                    let r = r.as_ref();
                    if r.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: dim,
                            actual: r.len(),
                        });
                    }
                    data.extend_from_slice(r);
                }
                None => data.extend(std::iter::repeat_n(0.0, dim)),
            }
        }
        let null_mask = mask_from_flags(rows.iter().map(Option::is_none), rows.len());
        Ok(Self {
            dim,
            count: rows.len(),
            dtype: Dtype::Float32,
            backing: Backing::F32 { data, null_mask },
        })
    }

    /// Float32 matrix from a flat buffer and per-row null flags.
    pub fn from_f32(dim: usize, data: Vec<f32>, nulls: &[bool]) -> Result<Self> {
        if dim == 0 || data.len() != dim * nulls.len() {
            return Err(Error::InvalidInput(format!(
                "data length {} does not match dim {} x count {}",
                data.len(),
                dim,
                nulls.len()
            )));
        }
        let count = nulls.len();
        let m = Self {
            dim,
            count,
            dtype: Dtype::Float32,
            backing: Backing::F32 {
                data,
                null_mask: mask_from_flags(nulls.iter().copied(), count),
            },
        };
        m.check_null_rows()?;
        Ok(m)
    }

    /// Int8-scaled matrix from its raw parts.
    pub fn from_i8(dim: usize, data: Vec<i8>, scales: Vec<f32>, nulls: &[bool]) -> Result<Self> {
        let count = nulls.len();
        if dim == 0 || data.len() != dim * count || scales.len() != count {
            return Err(Error::InvalidInput(format!(
                "int8 parts do not match dim {dim} x count {count}"
            )));
        }
        let m = Self {
            dim,
            count,
            dtype: Dtype::Int8Scaled,
            backing: Backing::I8 {
                data,
                scales,
                null_mask: mask_from_flags(nulls.iter().copied(), count),
            },
        };
        m.check_null_rows()?;
        Ok(m)
    }

    fn check_null_rows(&self) -> Result<()> {
        for i in 0..self.count {
            if !self.is_null(i) {
                continue;
            }
            let zero = match self.dtype {
                Dtype::Float32 => self.row_f32(i).iter().all(|&x| x == 0.0),
                Dtype::Int8Scaled => self.row_i8(i).iter().all(|&x| x == 0),
            };
            if !zero {
                return Err(Error::InvalidInput(format!("null row {i} is not all-zero")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dtype(&self) -> Dtype {
        self.dtype
    }

    pub fn is_mapped(&self) -> bool {
        matches!(self.backing, Backing::Mapped { .. })
    }

    fn null_mask(&self) -> &[u8] {
        match &self.backing {
            Backing::F32 { null_mask, .. } | Backing::I8 { null_mask, .. } => null_mask,
            Backing::Mapped { map, mask_at, .. } => &map[*mask_at..*mask_at + mask_len(self.count)],
        }
    }

    pub fn is_null(&self, i: usize) -> bool {
        mask_bit(self.null_mask(), i)
    }

    pub fn null_count(&self) -> usize {
        (0..self.count).filter(|&i| self.is_null(i)).count()
    }

    /// Whole float32 data section. Panics on int8 matrices.
    pub fn data_f32(&self) -> &[f32] {
        assert_eq!(self.dtype, Dtype::Float32, "matrix is not float32");
        match &self.backing {
            Backing::F32 { data, .. } => data,
            Backing::Mapped { map, .. } => {
                bytemuck::cast_slice(&map[HEADER_LEN..HEADER_LEN + 4 * self.dim * self.count])
            }
            Backing::I8 { .. } => unreachable!(),
        }
    }

    /// Whole int8 data section. Panics on float32 matrices.
    pub fn data_i8(&self) -> &[i8] {
        assert_eq!(self.dtype, Dtype::Int8Scaled, "matrix is not int8");
        match &self.backing {
            Backing::I8 { data, .. } => data,
            Backing::Mapped { map, .. } => {
                bytemuck::cast_slice(&map[HEADER_LEN..HEADER_LEN + self.dim * self.count])
            }
            Backing::F32 { .. } => unreachable!(),
        }
    }

    pub fn row_f32(&self, i: usize) -> &[f32] {
        &self.data_f32()[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_i8(&self, i: usize) -> &[i8] {
        &self.data_i8()[i * self.dim..(i + 1) * self.dim]
    }

    pub fn scale(&self, i: usize) -> f32 {
        assert_eq!(self.dtype, Dtype::Int8Scaled, "matrix is not int8");
        match &self.backing {
            Backing::I8 { scales, .. } => scales[i],
            Backing::Mapped { map, scales_at, .. } => {
                let at = scales_at + 4 * i;
                f32::from_le_bytes(map[at..at + 4].try_into().expect("4 bytes"))
            }
            Backing::F32 { .. } => unreachable!(),
        }
    }

    /// Row as float32, dequantizing int8 rows.
    pub fn row_dequantized(&self, i: usize) -> Vec<f32> {
        match self.dtype {
            Dtype::Float32 => self.row_f32(i).to_vec(),
            Dtype::Int8Scaled => {
                let s = self.scale(i);
                self.row_i8(i).iter().map(|&q| q as f32 * s).collect()
            }
        }
    }

    /// Row `i`, or `None` for null rows.
    pub fn get(&self, i: usize) -> Option<Vec<f32>> {
        (!self.is_null(i)).then(|| self.row_dequantized(i))
    }

    /// Copies the listed rows (in the given order) into a new owned matrix.
    pub fn select_rows(&self, ids: &[usize]) -> Self {
        let nulls: Vec<bool> = ids.iter().map(|&i| self.is_null(i)).collect();
        let count = ids.len();
        let null_mask = mask_from_flags(nulls.iter().copied(), count);
        let backing = match self.dtype {
            Dtype::Float32 => Backing::F32 {
                data: ids.iter().flat_map(|&i| self.row_f32(i).iter().copied()).collect(),
                null_mask,
            },
            Dtype::Int8Scaled => Backing::I8 {
                data: ids.iter().flat_map(|&i| self.row_i8(i).iter().copied()).collect(),
                scales: ids.iter().map(|&i| self.scale(i)).collect(),
                null_mask,
            },
        };
        Self {
            dim: self.dim,
            count,
            dtype: self.dtype,
            backing,
        }
    }

    fn expected_len(dim: usize, count: usize, dtype: Dtype) -> usize {
        let scales = if dtype == Dtype::Int8Scaled { 4 * count } else { 0 };
        HEADER_LEN + dtype.width() * dim * count + scales + mask_len(count)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&header_bytes(self.dim, self.count, self.dtype))?;
        match self.dtype {
            Dtype::Float32 => {
                for x in self.data_f32() {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            Dtype::Int8Scaled => {
                w.write_all(bytemuck::cast_slice(self.data_i8()))?;
                for i in 0..self.count {
                    w.write_all(&self.scale(i).to_le_bytes())?;
                }
            }
        }
        w.write_all(self.null_mask())?;
        w.flush()
    }
}

fn header_bytes(dim: usize, count: usize, dtype: Dtype) -> [u8; HEADER_LEN] {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..12].copy_from_slice(&(dim as u32).to_le_bytes());
    header[12..20].copy_from_slice(&(count as u64).to_le_bytes());
    header[20] = dtype as u8;
    header
}

/// Streams an int8 vector file row by row, for banks larger than memory.
/// Only the per-row scales and null flags are buffered until [`finish`].
///
/// [`finish`]: Int8VectorWriter::finish
pub struct Int8VectorWriter {
    path: std::path::PathBuf,
    out: BufWriter<File>,
    dim: usize,
    count: usize,
    scales: Vec<f32>,
    nulls: Vec<bool>,
}

impl Int8VectorWriter {
    pub fn create(path: impl AsRef<Path>, dim: usize, count: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let mut out = File::create(&path)
            .map(|f| BufWriter::with_capacity(1 << 22, f))
            .map_err(|e| Error::io(&path, e))?;
        out.write_all(&header_bytes(dim, count, Dtype::Int8Scaled))
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            out,
            dim,
            count,
            scales: Vec::with_capacity(count),
            nulls: Vec::with_capacity(count),
        })
    }

    /// Appends rows (`codes.len()` must be a multiple of the dimension);
    /// `None` marks a null row, whose codes must be zero.
    pub fn push_rows(&mut self, codes: &[i8], scales: &[Option<f32>]) -> Result<()> {
        if codes.len() != scales.len() * self.dim || self.scales.len() + scales.len() > self.count {
            return Err(Error::InvalidInput("row batch does not fit the declared shape".into()));
        }
        for (row, s) in codes.chunks_exact(self.dim).zip(scales) {
            if s.is_none() && row.iter().any(|&c| c != 0) {
                return Err(Error::InvalidInput("null row with nonzero codes".into()));
            }
            self.scales.push(s.unwrap_or(0.0));
            self.nulls.push(s.is_none());
        }
        self.out
            .write_all(bytemuck::cast_slice(codes))
            .map_err(|e| Error::io(&self.path, e))
    }

    /// Writes scales and the null mask. Fails (and removes the file) if
    /// fewer rows than declared were pushed.
    pub fn finish(mut self) -> Result<()> {
        let result = (|| -> std::io::Result<()> {
            if self.scales.len() != self.count {
                return Err(std::io::Error::other(format!(
                    "{} rows written, {} declared",
                    self.scales.len(),
                    self.count
                )));
            }
            for s in &self.scales {
                self.out.write_all(&s.to_le_bytes())?;
            }
            self.out
                .write_all(&mask_from_flags(self.nulls.iter().copied(), self.count))?;
            self.out.flush()
        })();
        if let Err(e) = result {
            let _ = std::fs::remove_file(&self.path);
            return Err(Error::io(&self.path, e));
        }
        Ok(())
    }
}

/// Writes a vector file, removing any partial output on failure.
pub fn write_vectors(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let result = File::create(path)
        .and_then(|f| matrix.write_to(BufWriter::with_capacity(1 << 20, f)));
    if let Err(e) = result {
        let _ = std::fs::remove_file(path);
        return Err(Error::io(path, e));
    }
    Ok(())
}

/// Opens a vector file as a read-only memory map. The header and total
/// length are validated; rows are only paged in when touched.
pub fn read_vectors(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    // SAFETY: the file is treated as immutable for the lifetime of the map;
    // banks are never modified in place after being written.
    let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
    if map.len() < HEADER_LEN {
        return Err(Error::format(path, "file shorter than header"));
    }
    if &map[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    let version = u32::from_le_bytes(map[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(map[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(map[12..20].try_into().unwrap());
    let count = usize::try_from(count).map_err(|_| Error::format(path, "count overflows"))?;
    let dtype = Dtype::from_byte(map[20])
        .ok_or_else(|| Error::format(path, format!("unknown dtype {}", map[20])))?;
    if dim == 0 {
        return Err(Error::format(path, "zero dimension"));
    }
    let expected = EmbeddingMatrix::expected_len(dim, count, dtype);
    if map.len() != expected {
        return Err(Error::format(
            path,
            format!("length {} does not match expected {}", map.len(), expected),
        ));
    }
    let data_len = dtype.width() * dim * count;
    let scales_at = HEADER_LEN + data_len;
    let mask_at = scales_at + if dtype == Dtype::Int8Scaled { 4 * count } else { 0 };
    #[cfg(unix)]
    let _ = map.advise(memmap2::Advice::Sequential);
    Ok(EmbeddingMatrix {
        dim,
        count,
        dtype,
        backing: Backing::Mapped {
            map,
            scales_at,
            mask_at,
        },
    })
}

/// Reads a vector file and checks it against an expected dimension.
pub fn read_vectors_with_dim(path: impl AsRef<Path>, dim: usize) -> Result<EmbeddingMatrix> {
    let m = read_vectors(path.as_ref())?;
    if m.dim() != dim {
        return Err(Error::format(
            path.as_ref(),
            format!("dimension {} does not match expected {dim}", m.dim()),
        ));
    }
    Ok(m)
}
