//! Raw numeric kernels over row-major slices.

use std::sync::OnceLock;

/// Products with at most this many rows skip packing and use the direct kernel. Every output element of
/// the direct kernel is a chain of fused multiply-adds in inner-index order,
/// so a row's result does not depend on which other rows share the call.
/// Callers that need batch-invariant results keep batches at or below this
/// size.
pub const DIRECT_MAX_ROWS: usize = 16;

const MR: usize = 4;

/// `c = alpha * op(a) * op(b) + beta * c` where `op(a)` is `[m, k]` and
/// `op(b)` is `[k, n]`. A transposed operand is stored in its untransposed
/// layout (`[k, m]` for `a`, `[n, k]` for `b`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if alpha == 1.0 && (beta == 0.0 || beta == 1.0) && m <= DIRECT_MAX_ROWS {
        let a = Lhs { data: a, m, k, trans: a_trans };
        direct(&a, b, b_trans, n, beta == 1.0, c);
        return;
    }
    let (rsa, csa) = if a_trans {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_trans {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserts above guarantee every index reachable through the
    // given strides lies inside the three slices, and `c` is exclusively
    // borrowed so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `[rows, cols]` → `[cols, rows]`, in cache-sized blocks.
fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    const BLOCK: usize = 32;
    let mut out = vec![0.0; x.len()];
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    out[c * rows + r] = x[r * cols + c];
                }
            }
        }
    }
    out
}

struct Lhs<'a> {
    data: &'a [f64],
    m: usize,
    k: usize,
    trans: bool,
}

impl Lhs<'_> {
    fn at(&self, i: usize, p: usize) -> f64 {
        if self.trans {
            self.data[p * self.m + i]
        } else {
            self.data[i * self.k + p]
        }
    }

    /// Rows `i..i + R` interleaved as `[k][R]`.
    fn pack<const R: usize>(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        for p in 0..self.k {
            for r in 0..R {
                buf.push(self.at(i + r, p));
            }
        }
    }
}

fn has_fma() -> bool {
    static FMA: OnceLock<bool> = OnceLock::new();
    *FMA.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma")
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            false
        }
    })
}

/// Every output is `fma(a[k-1], b[k-1], ... fma(a[0], b[0], 0.0))`, then
/// optionally added to the old value, whatever path computes it.
fn direct(a: &Lhs, b: &[f64], b_trans: bool, n: usize, accumulate: bool, c: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if has_fma() {
        // SAFETY: the required CPU features were detected at runtime.
        unsafe { direct_fma(a, b, b_trans, n, accumulate, c) };
        return;
    }
    direct_body(a, b, b_trans, n, accumulate, c);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn direct_fma(a: &Lhs, b: &[f64], b_trans: bool, n: usize, accumulate: bool, c: &mut [f64]) {
    direct_body(a, b, b_trans, n, accumulate, c);
}

#[inline(always)]
fn store(dst: &mut f64, acc: f64, accumulate: bool) {
    *dst = if accumulate { *dst + acc } else { acc };
}

#[inline(always)]
fn direct_body(a: &Lhs, b: &[f64], b_trans: bool, n: usize, accumulate: bool, c: &mut [f64]) {
    let (m, k) = (a.m, a.k);
    if m == 1 && b_trans {
        // Row dot products against the stored `[n, k]` operand.
        let x = a.data;
        let mut j = 0;
        while j + 8 <= n {
            let rows: [&[f64]; 8] = std::array::from_fn(|t| &b[(j + t) * k..(j + t + 1) * k]);
            let mut acc = [0.0f64; 8];
            for p in 0..k {
                for t in 0..8 {
                    acc[t] = x[p].mul_add(rows[t][p], acc[t]);
                }
            }
            for t in 0..8 {
                store(&mut c[j + t], acc[t], accumulate);
            }
            j += 8;
        }
        for j in j..n {
            let row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for p in 0..k {
                acc = x[p].mul_add(row[p], acc);
            }
            store(&mut c[j], acc, accumulate);
        }
        return;
    }
    let transposed;
    let b = if b_trans {
        transposed = transpose(b, n, k);
        &transposed[..]
    } else {
        b
    };
    let mut buf = Vec::with_capacity(MR * k);
    let mut i = 0;
    while i < m {
        let rows = MR.min(m - i);
        match rows {
            4 => row_block::<4, 8>(a, i, b, n, accumulate, c, &mut buf),
            3 => row_block::<3, 8>(a, i, b, n, accumulate, c, &mut buf),
            2 => row_block::<2, 16>(a, i, b, n, accumulate, c, &mut buf),
            _ => row_block::<1, 32>(a, i, b, n, accumulate, c, &mut buf),
        }
        i += rows;
    }
}

#[inline(always)]
fn row_block<const R: usize, const W: usize>(
    a: &Lhs,
    i: usize,
    b: &[f64],
    n: usize,
    accumulate: bool,
    c: &mut [f64],
    buf: &mut Vec<f64>,
) {
    a.pack::<R>(i, buf);
    let mut j = 0;
    while j + W <= n {
        tile::<R, W>(buf, b, n, i, j, accumulate, c);
        j += W;
    }
    while j + 4 <= n {
        tile::<R, 4>(buf, b, n, i, j, accumulate, c);
        j += 4;
    }
    while j < n {
        tile::<R, 1>(buf, b, n, i, j, accumulate, c);
        j += 1;
    }
}

#[inline(always)]
fn tile<const R: usize, const W: usize>(
    apack: &[f64],
    b: &[f64],
    n: usize,
    i: usize,
    j: usize,
    accumulate: bool,
    c: &mut [f64],
) {
    let mut acc = [[0.0f64; W]; R];
    for (p, ar) in apack.chunks_exact(R).enumerate() {
        let brow: &[f64; W] = b[p * n + j..p * n + j + W].try_into().expect("W columns");
        for (acc_r, &av) in acc.iter_mut().zip(ar) {
            for (x, &bv) in acc_r.iter_mut().zip(brow) {
                *x = av.mul_add(bv, *x);
            }
        }
    }
    for (r, acc_r) in acc.iter().enumerate() {
        let dst = &mut c[(i + r) * n + j..(i + r) * n + j + W];
        for (d, &x) in dst.iter_mut().zip(acc_r) {
            store(d, x, accumulate);
        }
    }
}

pub(crate) fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    if cols == 0 {
        return out;
    }
    for (row, dst) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

pub(crate) fn log_softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    if cols == 0 {
        return out;
    }
    for (row, dst) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + total.ln();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = v - log_z;
        }
    }
    out
}

/// Normalizes each row to zero mean and unit variance. Returns the output and
/// the per-row reciprocal standard deviations.
pub(crate) fn layer_norm_rows(x: &[f64], cols: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let mut out = vec![0.0; x.len()];
    let mut rstd = Vec::with_capacity(x.len() / cols.max(1));
    if cols == 0 {
        return (out, rstd);
    }
    let n = cols as f64;
    for (row, dst) in x.chunks_exact(cols).zip(out.chunks_exact_mut(cols)) {
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let r = 1.0 / (var + eps).sqrt();
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - mean) * r;
        }
        rstd.push(r);
    }
    (out, rstd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes_agree() {
        // a: [2,3], b: [3,2]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, 1.0, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);

        let at = [1.0, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [7.0, 9.0, 11.0, 8.0, 10.0, 12.0];
        let mut c2 = [0.0; 4];
        gemm(2, 3, 2, 1.0, &at, true, &bt, true, 0.0, &mut c2);
        assert_eq!(c2, c);
    }

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn direct_and_packed_paths_agree() {
        let mut rng = crate::SeededRng::new(4);
        for &(m, k, n) in &[(1, 7, 13), (3, 1, 9), (5, 17, 8), (16, 33, 21), (17, 9, 30), (40, 3, 11), (2, 300, 400)] {
            let a: Vec<f64> = (0..m * k).map(|_| rng.gaussian()).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.gaussian()).collect();
            let want = naive(m, k, n, &a, &b);
            let at = transpose(&a, m, k);
            let bt = transpose(&b, k, n);
            for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
                let mut c = vec![1.0; m * n];
                gemm(m, k, n, 1.0, if ta { &at } else { &a }, ta, if tb { &bt } else { &b }, tb, 1.0, &mut c);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - 1.0 - y).abs() < 1e-10 * (1.0 + y.abs()), "{m}x{k}x{n} {ta} {tb}");
                }
            }
        }
    }

    #[test]
    fn direct_rows_do_not_depend_on_batch() {
        let mut rng = crate::SeededRng::new(5);
        let (k, n) = (37, 29);
        let b: Vec<f64> = (0..k * n).map(|_| rng.gaussian()).collect();
        let a: Vec<f64> = (0..DIRECT_MAX_ROWS * k).map(|_| rng.gaussian()).collect();
        let mut all = vec![0.0; DIRECT_MAX_ROWS * n];
        gemm(DIRECT_MAX_ROWS, k, n, 1.0, &a, false, &b, false, 0.0, &mut all);
        for r in 0..DIRECT_MAX_ROWS {
            let mut one = vec![0.0; n];
            gemm(1, k, n, 1.0, &a[r * k..(r + 1) * k], false, &b, false, 0.0, &mut one);
            let same = one.iter().zip(&all[r * n..(r + 1) * n]).all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same, "row {r}");
        }
    }

    #[test]
    fn constant_row_normalizes_to_zero() {
        let (out, _) = layer_norm_rows(&[3.0; 5], 5, 1e-5);
        assert!(out.iter().all(|&v| v == 0.0));
    }
}
