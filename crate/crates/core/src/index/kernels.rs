//! Dot-product kernels. Generic bodies are inlined into wrappers compiled
//! with wider target features, picked once per call site at runtime.

/// Products and sums in f64, rounded once to f32.
#[inline(always)]
fn dot_f32_generic(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] as f64 * y[l] as f64;
        }
    }
    let mut tail = 0.0f64;
    for i in chunks * 8..a.len() {
        tail += a[i] as f64 * b[i] as f64;
    }
    let s = (acc[0] + acc[1]) + (acc[2] + acc[3]) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    (s + tail) as f32
}

#[inline(always)]
fn dot_i8_generic(a: &[i8], b: &[i8]) -> i32 {
    let mut acc = [0i32; 32];
    let chunks = a.len() / 32;
    for c in 0..chunks {
        let (x, y) = (&a[c * 32..c * 32 + 32], &b[c * 32..c * 32 + 32]);
        for l in 0..32 {
            acc[l] = acc[l].wrapping_add(x[l] as i16 as i32 * y[l] as i16 as i32);
        }
    }
    let mut s = 0i32;
    for v in acc {
        s = s.wrapping_add(v);
    }
    for i in chunks * 32..a.len() {
        s = s.wrapping_add(a[i] as i32 * b[i] as i32);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Isa {
    Scalar,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

impl Isa {
    pub fn detect() -> Self {
        #[cfg(target_arch = "x86_64")]
        {
            if std::is_x86_feature_detected!("avx512f") && std::is_x86_feature_detected!("avx512bw")
            {
                return Isa::Avx512;
            }
            if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
                return Isa::Avx2;
            }
        }
        Isa::Scalar
    }
}

/// Scores every row of `rows` (row-major, `dim` wide) against each query,
/// calling `sink(row, query_index, score)`.
#[inline(always)]
fn scan_f32_generic<F: FnMut(usize, usize, f32)>(
    rows: &[f32],
    dim: usize,
    queries: &[&[f32]],
    mut sink: F,
) {
    for (r, row) in rows.chunks_exact(dim).enumerate() {
        for (q, query) in queries.iter().enumerate() {
            sink(r, q, dot_f32_generic(row, query));
        }
    }
}

#[inline(always)]
fn scan_i8_generic<F: FnMut(usize, usize, i32)>(
    rows: &[i8],
    dim: usize,
    queries: &[&[i8]],
    mut sink: F,
) {
    for (r, row) in rows.chunks_exact(dim).enumerate() {
        for (q, query) in queries.iter().enumerate() {
            sink(r, q, dot_i8_generic(row, query));
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    #[target_feature(enable = "avx2,fma")]
    pub unsafe fn scan_f32_avx2<F: FnMut(usize, usize, f32)>(
        rows: &[f32],
        dim: usize,
        queries: &[&[f32]],
        sink: F,
    ) {
        super::scan_f32_generic(rows, dim, queries, sink)
    }

    #[target_feature(enable = "avx512f,avx512bw,fma")]
    pub unsafe fn scan_f32_avx512<F: FnMut(usize, usize, f32)>(
        rows: &[f32],
        dim: usize,
        queries: &[&[f32]],
        sink: F,
    ) {
        super::scan_f32_generic(rows, dim, queries, sink)
    }

    #[target_feature(enable = "avx2")]
    pub unsafe fn scan_i8_avx2<F: FnMut(usize, usize, i32)>(
        rows: &[i8],
        dim: usize,
        queries: &[&[i8]],
        sink: F,
    ) {
        super::scan_i8_generic(rows, dim, queries, sink)
    }

    #[target_feature(enable = "avx512f,avx512bw")]
    pub unsafe fn scan_i8_avx512<F: FnMut(usize, usize, i32)>(
        rows: &[i8],
        dim: usize,
        queries: &[&[i8]],
        sink: F,
    ) {
        super::scan_i8_generic(rows, dim, queries, sink)
    }
}

pub fn scan_f32<F: FnMut(usize, usize, f32)>(
    isa: Isa,
    rows: &[f32],
    dim: usize,
    queries: &[&[f32]],
    sink: F,
) {
    match isa {
        Isa::Scalar => scan_f32_generic(rows, dim, queries, sink),
        // SAFETY: `Isa::detect` only reports features the CPU supports.
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { x86::scan_f32_avx2(rows, dim, queries, sink) },
        #[cfg(target_arch = "x86_64")]
        Isa::Avx512 => unsafe { x86::scan_f32_avx512(rows, dim, queries, sink) },
    }
}

pub fn scan_i8<F: FnMut(usize, usize, i32)>(
    isa: Isa,
    rows: &[i8],
    dim: usize,
    queries: &[&[i8]],
    sink: F,
) {
    match isa {
        Isa::Scalar => scan_i8_generic(rows, dim, queries, sink),
        // SAFETY: `Isa::detect` only reports features the CPU supports.
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { x86::scan_i8_avx2(rows, dim, queries, sink) },
        #[cfg(target_arch = "x86_64")]
        Isa::Avx512 => unsafe { x86::scan_i8_avx512(rows, dim, queries, sink) },
    }
}

pub fn dot_f32(a: &[f32], b: &[f32]) -> f32 {
    let mut out = 0.0;
    scan_f32(Isa::detect(), a, a.len(), &[b], |_, _, s| out = s);
    out
}
