//! Dense inner loops shared by every layer.
//!
//! Offline and streaming code paths both route through these functions, so the
//! two produce bit-identical results. On x86-64 the loops have hand-written
//! AVX2 and AVX-512 variants that are picked at runtime; every variant performs
//! the same per-element sequence of fused multiply-adds.

#[cfg(target_arch = "x86_64")]
use std::arch::x86_64::*;

/// Rows per packed weight panel. Divisible by both micro-tile heights.
pub(crate) const MR: usize = 12;
/// Column padding granularity for GEMM operands.
pub(crate) const NR: usize = 16;
/// Elements of the `b` operand kept hot per `k` block (32 KiB of `f64`).
const L1_SLAB: usize = 4096;

pub(crate) fn round_up(x: usize, to: usize) -> usize {
    x.div_ceil(to) * to
}

#[inline(always)]
fn madd<const FMA: bool>(a: f64, b: f64, acc: f64) -> f64 {
    if FMA {
        a.mul_add(b, acc)
    } else {
        acc + a * b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Generic,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

fn level() -> Level {
    use std::sync::OnceLock;
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            use std::arch::is_x86_feature_detected as has;
            if has!("avx2") && has!("fma") {
                return if has!("avx512f") { Level::Avx512 } else { Level::Avx2 };
            }
        }
        Level::Generic
    })
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn has_fma() -> bool {
    level() != Level::Generic
}

/// Element type of stored weights.
pub(crate) trait Weight: Copy + Into<f64> {
    /// Four consecutive values widened to `f64`.
    ///
    /// # Safety
    /// `p` must be valid for four reads and AVX must be available.
    #[cfg(target_arch = "x86_64")]
    unsafe fn load4(p: *const Self) -> __m256d;
}

impl Weight for f64 {
    #[cfg(target_arch = "x86_64")]
    #[inline(always)]
    unsafe fn load4(p: *const Self) -> __m256d {
        _mm256_loadu_pd(p)
    }
}

impl Weight for f32 {
    #[cfg(target_arch = "x86_64")]
    #[inline(always)]
    unsafe fn load4(p: *const Self) -> __m256d {
        _mm256_cvtps_pd(_mm_loadu_ps(p))
    }
}

/// Matrix-vector weight storage. Values that round-trip through `f32`
/// (everything loaded from a weight file) are kept in single precision to
/// halve memory traffic; the kernels widen them exactly, so results do not
/// depend on the choice. GEMM panels stay in `f64` because their elements are
/// broadcast one at a time, where a widening step costs more than it saves.
#[derive(Debug, Clone)]
pub(crate) enum Values {
    F64(Vec<f64>),
    F32(Vec<f32>),
}

impl Values {
    pub(crate) fn compact(v: Vec<f64>) -> Self {
        if v.iter().all(|&x| (x as f32) as f64 == x) {
            Values::F32(v.iter().map(|&x| x as f32).collect())
        } else {
            Values::F64(v)
        }
    }
}

/// Row-major matrix used for matrix-vector products.
#[derive(Debug, Clone)]
pub(crate) struct RowMatrix {
    cols: usize,
    values: Values,
}

impl RowMatrix {
    pub(crate) fn new(cols: usize, data: Vec<f64>) -> Self {
        Self { cols, values: Values::compact(data) }
    }

    /// `out[j] = row(first + j) . x` for every `j`.
    pub(crate) fn gemv(&self, first: usize, x: &[f64], out: &mut [f64]) {
        match &self.values {
            Values::F64(v) => gemv_rows(v, self.cols, first, x, out),
            Values::F32(v) => gemv_rows(v, self.cols, first, x, out),
        }
    }
}

fn gemv_rows<T: Weight>(a: &[T], cols: usize, first: usize, x: &[f64], out: &mut [f64]) {
    let row = |i: usize| &a[(first + i) * cols..(first + i + 1) * cols];
    let n = out.len();
    let done = n - n % 4;
    for i in (0..done).step_by(4) {
        out[i..i + 4].copy_from_slice(&dot4([row(i), row(i + 1), row(i + 2), row(i + 3)], x));
    }
    for (i, o) in out.iter_mut().enumerate().skip(done) {
        *o = dot(row(i), x);
    }
}

/// Weight matrix re-laid out in `MR`-row panels: `data[panel][k][r]`.
/// Rows past `rows` are zero.
#[derive(Debug, Clone)]
pub(crate) struct PackedMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl PackedMatrix {
    /// `src` is row-major `rows x cols`.
    pub(crate) fn pack(rows: usize, cols: usize, src: &[f64]) -> Self {
        assert_eq!(src.len(), rows * cols);
        let rows_pad = round_up(rows, MR);
        let mut data = vec![0.0; rows_pad * cols];
        for i in 0..rows {
            let (panel, r) = (i / MR, i % MR);
            for k in 0..cols {
                data[panel * MR * cols + k * MR + r] = src[i * cols + k];
            }
        }
        Self { rows, cols, data }
    }

    pub(crate) fn rows_padded(&self) -> usize {
        round_up(self.rows, MR)
    }
}

/// `c[i][j] = bias[i] + sum_k a[i][k] * b[rows[k] + j]`, accumulated in `k`
/// order.
///
/// Row `k` of the right operand is the slice of `b` starting at `rows[k]`, so
/// callers can point straight into padded input buffers instead of copying
/// an im2col matrix. `rows` has `a.cols` entries, `n` is a positive multiple
/// of [`NR`], `c` is `a.rows_padded() x n` row-major and `bias` has `a.rows`
/// entries. Rows of `c` past `a.rows` are left unspecified.
pub(crate) fn gemm(a: &PackedMatrix, bias: Option<&[f64]>, b: &[f64], rows: &[usize], n: usize, c: &mut [f64]) {
    assert!(n > 0 && n.is_multiple_of(NR));
    assert_eq!(rows.len(), a.cols);
    assert!(rows.iter().all(|&r| r + n <= b.len()), "gemm row offset out of bounds");
    assert!(c.len() >= a.rows_padded() * n);
    let args = GemmArgs { rows: a.rows, a: &a.data, bias, b, b_rows: rows, n };
    match level() {
        // SAFETY: the required CPU features were detected at runtime, and
        // `gemm_blocked` only passes in-bounds tile pointers.
        #[cfg(target_arch = "x86_64")]
        Level::Avx512 => gemm_blocked::<6, 16>(&args, c, |t| unsafe { tile_avx512(t) }),
        #[cfg(target_arch = "x86_64")]
        Level::Avx2 => gemm_blocked::<6, 8>(&args, c, |t| unsafe { tile_avx2(t) }),
        Level::Generic => gemm_blocked::<4, 8>(&args, c, |t| unsafe { tile_generic::<4, 8>(t) }),
    }
}

struct GemmArgs<'a> {
    rows: usize,
    a: &'a [f64],
    bias: Option<&'a [f64]>,
    b: &'a [f64],
    b_rows: &'a [usize],
    n: usize,
}

/// One micro-tile job: `k` steps starting at panel pointer `a` (stride
/// [`MR`]), right-hand rows `b + offs[kk]`, output rows `c + r * n`. `init`
/// carries the bias on the first `k` slab; later slabs resume from `c`.
struct Tile<'a, const TM: usize> {
    k: usize,
    a: *const f64,
    b: *const f64,
    offs: *const usize,
    n: usize,
    c: *mut f64,
    init: Option<&'a [f64; TM]>,
}

#[inline(always)]
fn gemm_blocked<const TM: usize, const TN: usize>(args: &GemmArgs, c: &mut [f64], tile: impl Fn(Tile<TM>)) {
    let GemmArgs { rows, a, bias, b, b_rows, n } = *args;
    let k = b_rows.len();
    let rows_pad = round_up(rows, MR);
    assert_eq!(a.len(), rows_pad * k);
    // Block over `k` so each slab of right-hand rows stays in L1 while every
    // row tile sweeps it. Accumulators round-trip through `c` between slabs,
    // which keeps the per-element summation order unchanged.
    let kc = (L1_SLAB / n).max(8);
    for k0 in (0..k).step_by(kc) {
        let k_len = kc.min(k - k0);
        for p in 0..rows_pad / MR {
            for sub in 0..MR / TM {
                let row0 = p * MR + sub * TM;
                if row0 >= rows {
                    break;
                }
                let init: [f64; TM] =
                    std::array::from_fn(|r| bias.and_then(|b| b.get(row0 + r)).copied().unwrap_or(0.0));
                let ap = a[p * MR * k + k0 * MR + sub * TM..].as_ptr();
                for j0 in (0..n).step_by(TN) {
                    tile(Tile {
                        k: k_len,
                        a: ap,
                        b: b[j0..].as_ptr(),
                        offs: b_rows[k0..].as_ptr(),
                        n,
                        c: c[row0 * n + j0..].as_mut_ptr(),
                        init: (k0 == 0).then_some(&init),
                    });
                }
            }
        }
    }
}

/// Portable micro-kernel.
///
/// # Safety
/// `a` is readable at `kk * MR + r`, `b` at `offs[kk] + l` and `c` writable
/// at `r * n + l` for `kk < k`, `r < TM`, `l < TN`.
unsafe fn tile_generic<const TM: usize, const TN: usize>(t: Tile<TM>) {
    let mut acc = [[0.0f64; TN]; TM];
    for (r, acc) in acc.iter_mut().enumerate() {
        for (l, v) in acc.iter_mut().enumerate() {
            *v = match t.init {
                Some(init) => init[r],
                None => *t.c.add(r * t.n + l),
            };
        }
    }
    for kk in 0..t.k {
        let b = t.b.add(*t.offs.add(kk));
        for (r, acc) in acc.iter_mut().enumerate() {
            let av = *t.a.add(kk * MR + r);
            for (l, v) in acc.iter_mut().enumerate() {
                *v = madd::<false>(av, *b.add(l), *v);
            }
        }
    }
    for (r, acc) in acc.iter().enumerate() {
        for (l, v) in acc.iter().enumerate() {
            *t.c.add(r * t.n + l) = *v;
        }
    }
}

/// 6x16 AVX-512 micro-kernel. Same contract as [`tile_generic`].
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,avx2,fma")]
unsafe fn tile_avx512(t: Tile<6>) {
    let mut acc = [[_mm512_setzero_pd(); 2]; 6];
    for (r, acc) in acc.iter_mut().enumerate() {
        let c = t.c.add(r * t.n);
        *acc = match t.init {
            Some(init) => [_mm512_set1_pd(init[r]); 2],
            None => [_mm512_loadu_pd(c), _mm512_loadu_pd(c.add(8))],
        };
    }
    let mut a = t.a;
    for kk in 0..t.k {
        let b = t.b.add(*t.offs.add(kk));
        let b0 = _mm512_loadu_pd(b);
        let b1 = _mm512_loadu_pd(b.add(8));
        for (r, acc) in acc.iter_mut().enumerate() {
            let av = _mm512_set1_pd(*a.add(r));
            acc[0] = _mm512_fmadd_pd(av, b0, acc[0]);
            acc[1] = _mm512_fmadd_pd(av, b1, acc[1]);
        }
        a = a.add(MR);
    }
    for (r, acc) in acc.iter().enumerate() {
        let c = t.c.add(r * t.n);
        _mm512_storeu_pd(c, acc[0]);
        _mm512_storeu_pd(c.add(8), acc[1]);
    }
}

/// 6x8 AVX2 micro-kernel. Same contract as [`tile_generic`].
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn tile_avx2(t: Tile<6>) {
    let mut acc = [[_mm256_setzero_pd(); 2]; 6];
    for (r, acc) in acc.iter_mut().enumerate() {
        let c = t.c.add(r * t.n);
        *acc = match t.init {
            Some(init) => [_mm256_set1_pd(init[r]); 2],
            None => [_mm256_loadu_pd(c), _mm256_loadu_pd(c.add(4))],
        };
    }
    let mut a = t.a;
    for kk in 0..t.k {
        let b = t.b.add(*t.offs.add(kk));
        let b0 = _mm256_loadu_pd(b);
        let b1 = _mm256_loadu_pd(b.add(4));
        for (r, acc) in acc.iter_mut().enumerate() {
            let av = _mm256_set1_pd(*a.add(r));
            acc[0] = _mm256_fmadd_pd(av, b0, acc[0]);
            acc[1] = _mm256_fmadd_pd(av, b1, acc[1]);
        }
        a = a.add(MR);
    }
    for (r, acc) in acc.iter().enumerate() {
        let c = t.c.add(r * t.n);
        _mm256_storeu_pd(c, acc[0]);
        _mm256_storeu_pd(c.add(4), acc[1]);
    }
}

/// Eight-lane partial sums folded in a fixed order.
#[inline(always)]
fn fold8(acc: [f64; 8], tail: f64) -> f64 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Dot product with a fixed eight-lane accumulation order.
#[inline]
pub(crate) fn dot<T: Weight>(a: &[T], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { dot_fma(&a[..n], &b[..n]) };
    }
    dot_generic(&a[..n], &b[..n])
}

fn dot_generic<T: Weight>(a: &[T], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] = madd::<false>(x[l].into(), y[l], acc[l]);
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = madd::<false>((*x).into(), *y, tail);
    }
    fold8(acc, tail)
}

/// `a` and `b` have equal length.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_fma<T: Weight>(a: &[T], b: &[f64]) -> f64 {
    let n = a.len();
    let full = n - n % 8;
    let (pa, pb) = (a.as_ptr(), b.as_ptr());
    let (mut lo, mut hi) = (_mm256_setzero_pd(), _mm256_setzero_pd());
    for j in (0..full).step_by(8) {
        lo = _mm256_fmadd_pd(T::load4(pa.add(j)), _mm256_loadu_pd(pb.add(j)), lo);
        hi = _mm256_fmadd_pd(T::load4(pa.add(j + 4)), _mm256_loadu_pd(pb.add(j + 4)), hi);
    }
    let mut tail = 0.0;
    for j in full..n {
        tail = madd::<true>(a[j].into(), b[j], tail);
    }
    fold8(lanes(lo, hi), tail)
}

#[cfg(target_arch = "x86_64")]
#[inline(always)]
fn lanes(lo: __m256d, hi: __m256d) -> [f64; 8] {
    // SAFETY: `__m256d` and `[f64; 4]` have the same size and any bit
    // pattern is a valid `f64`.
    let (lo, hi) =
        unsafe { (std::mem::transmute::<__m256d, [f64; 4]>(lo), std::mem::transmute::<__m256d, [f64; 4]>(hi)) };
    [lo[0], lo[1], lo[2], lo[3], hi[0], hi[1], hi[2], hi[3]]
}

/// Four dot products against one shared vector. Each result is bitwise equal
/// to the corresponding [`dot`] call.
#[inline]
pub(crate) fn dot4<T: Weight>(a: [&[T]; 4], b: &[f64]) -> [f64; 4] {
    let n = b.len();
    if a.iter().any(|r| r.len() != n) {
        return a.map(|r| dot(r, b));
    }
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the required CPU features were detected at runtime and all
        // rows have the length of `b`.
        return unsafe { dot4_fma(a, b) };
    }
    a.map(|r| dot_generic(r, b))
}

/// Every row of `a` has the length of `b`.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot4_fma<T: Weight>(a: [&[T]; 4], b: &[f64]) -> [f64; 4] {
    let n = b.len();
    let full = n - n % 8;
    let pa = a.map(|r| r.as_ptr());
    let pb = b.as_ptr();
    let mut acc = [[_mm256_setzero_pd(); 2]; 4];
    for j in (0..full).step_by(8) {
        let y0 = _mm256_loadu_pd(pb.add(j));
        let y1 = _mm256_loadu_pd(pb.add(j + 4));
        for (acc, p) in acc.iter_mut().zip(pa) {
            acc[0] = _mm256_fmadd_pd(T::load4(p.add(j)), y0, acc[0]);
            acc[1] = _mm256_fmadd_pd(T::load4(p.add(j + 4)), y1, acc[1]);
        }
    }
    let mut out = [0.0; 4];
    for ((o, acc), row) in out.iter_mut().zip(acc).zip(a) {
        let mut tail = 0.0;
        for j in full..n {
            tail = madd::<true>(row[j].into(), b[j], tail);
        }
        *o = fold8(lanes(acc[0], acc[1]), tail);
    }
    out
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the required CPU features were detected at runtime.
        unsafe { axpy_fma(alpha, x, y) };
        return;
    }
    axpy_impl::<false>(alpha, x, y);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn axpy_fma(alpha: f64, x: &[f64], y: &mut [f64]) {
    axpy_impl::<true>(alpha, x, y);
}

#[inline(always)]
fn axpy_impl<const FMA: bool>(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = madd::<FMA>(alpha, *xi, *yi);
    }
}

/// `y += alpha[0] * x[0]; ...; y += alpha[3] * x[3]`, bitwise equal to four
/// successive [`axpy`] calls.
#[inline]
pub(crate) fn axpy4(alpha: [f64; 4], x: [&[f64]; 4], y: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the required CPU features were detected at runtime.
        unsafe { axpy4_fma(alpha, x, y) };
        return;
    }
    axpy4_impl::<false>(alpha, x, y);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn axpy4_fma(alpha: [f64; 4], x: [&[f64]; 4], y: &mut [f64]) {
    axpy4_impl::<true>(alpha, x, y);
}

#[inline(always)]
fn axpy4_impl<const FMA: bool>(alpha: [f64; 4], x: [&[f64]; 4], y: &mut [f64]) {
    if x.iter().any(|r| r.len() < y.len()) {
        for (a, r) in alpha.iter().zip(&x) {
            axpy_impl::<FMA>(*a, r, y);
        }
        return;
    }
    let n = y.len();
    let (x0, x1, x2, x3) = (&x[0][..n], &x[1][..n], &x[2][..n], &x[3][..n]);
    for i in 0..n {
        let mut v = madd::<FMA>(alpha[0], x0[i], y[i]);
        v = madd::<FMA>(alpha[1], x1[i], v);
        v = madd::<FMA>(alpha[2], x2[i], v);
        y[i] = madd::<FMA>(alpha[3], x3[i], v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gemm_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for &(m, k, n) in &[(1, 1, 16), (3, 7, 16), (4, 12, 32), (9, 33, 48), (27, 5, 64), (13, 2, 16)] {
            let a: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bias: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let packed = PackedMatrix::pack(m, k, &a);
            let mut c = vec![0.0; packed.rows_padded() * n];
            let rows: Vec<usize> = (0..k).map(|q| q * n).collect();
            gemm(&packed, Some(&bias), &b, &rows, n, &mut c);
            for i in 0..m {
                for j in 0..n {
                    let want: f64 = bias[i] + (0..k).map(|q| a[i * k + q] * b[q * n + j]).sum::<f64>();
                    assert!((c[i * n + j] - want).abs() < 1e-12, "{m}x{k}x{n} at {i},{j}");
                }
            }
        }
    }

    #[test]
    fn gemm_reads_rows_through_offsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (m, k, n) = (7, 9, 32);
        let store: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        // overlapping, out-of-order rows
        let rows: Vec<usize> = (0..k).map(|q| (q * 37 + 5) % (store.len() - n)).collect();
        let a: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let packed = PackedMatrix::pack(m, k, &a);
        let mut c = vec![0.0; packed.rows_padded() * n];
        gemm(&packed, None, &store, &rows, n, &mut c);
        for i in 0..m {
            for j in 0..n {
                let want: f64 = (0..k).map(|q| a[i * k + q] * store[rows[q] + j]).sum();
                assert!((c[i * n + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    #[should_panic(expected = "out of bounds")]
    fn gemm_rejects_rows_past_the_buffer() {
        let packed = PackedMatrix::pack(1, 1, &[1.0]);
        let mut c = vec![0.0; packed.rows_padded() * 16];
        gemm(&packed, None, &[0.0; 20], &[5], 16, &mut c);
    }

    #[test]
    fn grouped_kernels_match_single_row_kernels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [0, 3, 8, 21, 61] {
            let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = [&rows[0][..], &rows[1][..], &rows[2][..], &rows[3][..]];
            let got = dot4(r, &x);
            for i in 0..4 {
                assert_eq!(got[i].to_bits(), dot(r[i], &x).to_bits());
            }
            let alpha = [0.3, -1.2, 0.7, 2.0];
            let mut y1 = x.clone();
            for i in 0..4 {
                axpy(alpha[i], r[i], &mut y1);
            }
            let mut y4 = x.clone();
            axpy4(alpha, r, &mut y4);
            assert_eq!(y1, y4);
        }
    }

    #[test]
    fn compact_storage_is_lossless() {
        let exact = vec![0.5, -1.25, 3.0];
        assert!(matches!(Values::compact(exact), Values::F32(_)));
        let fine = vec![0.1, 1.0];
        assert!(matches!(Values::compact(fine), Values::F64(_)));
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let m = RowMatrix::new(4, data.clone());
        let x = [1.0, -2.0, 0.5, 0.25];
        let mut out = [0.0; 3];
        m.gemv(0, &x, &mut out);
        for i in 0..3 {
            assert_eq!(out[i], dot(&data[i * 4..i * 4 + 4], &x));
        }
    }

    #[test]
    fn dot_and_axpy() {
        let a: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..21).map(|i| 1.0 - i as f64 * 0.1).collect();
        let want: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - want).abs() < 1e-12);
        let mut y = b.clone();
        axpy(2.0, &a, &mut y);
        for i in 0..21 {
            assert!((y[i] - (b[i] + 2.0 * a[i])).abs() < 1e-12);
        }
    }
}
