//! Dense inner loops. Reductions use a fixed accumulator layout so results
//! are reproducible run to run.

use crate::scalar::Scalar;

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline(always)]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    reduce8(&acc, tail)
}

#[inline]
pub(crate) fn sum<T: Scalar>(a: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = a.chunks_exact(8);
    let rest = chunks.remainder();
    for x in chunks {
        for l in 0..8 {
            acc[l] += x[l];
        }
    }
    let tail = rest.iter().copied().fold(T::zero(), |s, v| s + v);
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

const TILE: usize = 32;

/// `c[i, j] += sum_p a[i, p] * b[p, j]` with `a` read through strides
/// `(a_row, a_col)`, `b` row-major `(k, n)` and `c` row-major `(m, n)`.
///
/// Output rows are processed four at a time over column tiles so the
/// accumulators stay in L1; each element sums over `p` in order.
pub(crate) fn gemm_acc<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_row: usize,
    a_col: usize,
    b: &[T],
    c: &mut [T],
) {
    #[cfg(target_arch = "x86_64")]
    if wide() {
        // SAFETY: the required CPU features were detected at runtime.
        unsafe { gemm_acc_wide(m, k, n, a, a_row, a_col, b, c) };
        return;
    }
    gemm_acc_body(m, k, n, a, a_row, a_col, b, c)
}

#[cfg(target_arch = "x86_64")]
fn wide() -> bool {
    std::is_x86_feature_detected!("avx2")
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_acc_wide<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_row: usize,
    a_col: usize,
    b: &[T],
    c: &mut [T],
) {
    gemm_acc_body(m, k, n, a, a_row, a_col, b, c)
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn gemm_acc_body<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_row: usize,
    a_col: usize,
    b: &[T],
    c: &mut [T],
) {
    let mut j0 = 0;
    while j0 < n {
        let nb = TILE.min(n - j0);
        let mut i0 = 0;
        while i0 < m {
            let mb = 4.min(m - i0);
            if mb == 4 && nb == TILE {
                block4(k, n, j0, a, [i0 * a_row, (i0 + 1) * a_row, (i0 + 2) * a_row, (i0 + 3) * a_row], a_col, b, &mut c[i0 * n..]);
            } else {
                for i in i0..i0 + mb {
                    for p in 0..k {
                        let av = a[i * a_row + p * a_col];
                        let brow = &b[p * n + j0..p * n + j0 + nb];
                        for (d, &bv) in c[i * n + j0..i * n + j0 + nb].iter_mut().zip(brow) {
                            *d += av * bv;
                        }
                    }
                }
            }
            i0 += mb;
        }
        j0 += nb;
    }
}

/// Full 4 x TILE block; the accumulators are fixed-size so the inner loop
/// vectorizes without bounds checks. Each output sums over `p` in order and
/// then adds into `c`, matching the edge path above only up to rounding.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn block4<T: Scalar>(k: usize, n: usize, j0: usize, a: &[T], rows: [usize; 4], a_col: usize, b: &[T], c: &mut [T]) {
    let mut acc = [[T::zero(); TILE]; 4];
    for p in 0..k {
        let brow: &[T; TILE] = b[p * n + j0..p * n + j0 + TILE].try_into().unwrap();
        let av = rows.map(|r| a[r + p * a_col]);
        for i in 0..4 {
            for j in 0..TILE {
                acc[i][j] += av[i] * brow[j];
            }
        }
    }
    for (i, row) in acc.iter().enumerate() {
        let dst: &mut [T; TILE] = (&mut c[i * n + j0..i * n + j0 + TILE]).try_into().unwrap();
        for j in 0..TILE {
            dst[j] += row[j];
        }
    }
}

/// `c[i, r] += dot(a[i, :], b[r, :])` for row-major `a (m, n)`, `b (k, n)`,
/// `c (m, k)`; each dot uses the same lane layout as [`dot`].
pub(crate) fn gemm_nt_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    #[cfg(target_arch = "x86_64")]
    if wide() {
        // SAFETY: the required CPU features were detected at runtime.
        unsafe { gemm_nt_acc_wide(m, k, n, a, b, c) };
        return;
    }
    gemm_nt_acc_body(m, k, n, a, b, c)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_nt_acc_wide<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm_nt_acc_body(m, k, n, a, b, c)
}

#[inline(always)]
fn gemm_nt_acc_body<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    let mut i = 0;
    while i < m {
        let mb = 2.min(m - i);
        let mut r = 0;
        while r < k {
            let kb = 2.min(k - r);
            if mb == 2 && kb == 2 {
                let d = dot2x2(&a[i * n..(i + 1) * n], &a[(i + 1) * n..(i + 2) * n], &b[r * n..(r + 1) * n], &b[(r + 1) * n..(r + 2) * n]);
                c[i * k + r] += d[0];
                c[i * k + r + 1] += d[1];
                c[(i + 1) * k + r] += d[2];
                c[(i + 1) * k + r + 1] += d[3];
            } else {
                for ii in i..i + mb {
                    for rr in r..r + kb {
                        c[ii * k + rr] += dot(&a[ii * n..(ii + 1) * n], &b[rr * n..(rr + 1) * n]);
                    }
                }
            }
            r += kb;
        }
        i += mb;
    }
}

#[inline(always)]
fn reduce8<T: Scalar>(acc: &[T; 8], tail: T) -> T {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Four dots `[a0.b0, a0.b1, a1.b0, a1.b1]`, each bit-identical to [`dot`].
#[inline(always)]
fn dot2x2<T: Scalar>(a0: &[T], a1: &[T], b0: &[T], b1: &[T]) -> [T; 4] {
    let n = a0.len();
    let whole = n - n % 8;
    let mut acc = [[T::zero(); 8]; 4];
    for j in (0..whole).step_by(8) {
        let x0: &[T; 8] = a0[j..j + 8].try_into().unwrap();
        let x1: &[T; 8] = a1[j..j + 8].try_into().unwrap();
        let y0: &[T; 8] = b0[j..j + 8].try_into().unwrap();
        let y1: &[T; 8] = b1[j..j + 8].try_into().unwrap();
        for l in 0..8 {
            acc[0][l] += x0[l] * y0[l];
            acc[1][l] += x0[l] * y1[l];
            acc[2][l] += x1[l] * y0[l];
            acc[3][l] += x1[l] * y1[l];
        }
    }
    let mut tail = [T::zero(); 4];
    for j in whole..n {
        tail[0] += a0[j] * b0[j];
        tail[1] += a0[j] * b1[j];
        tail[2] += a1[j] * b0[j];
        tail[3] += a1[j] * b1[j];
    }
    [
        reduce8(&acc[0], tail[0]),
        reduce8(&acc[1], tail[1]),
        reduce8(&acc[2], tail[2]),
        reduce8(&acc[3], tail[3]),
    ]
}

/// Unrolls `(c, h, w)` input into `(c*k*k, h*w)` patches for a stride-1
/// convolution with symmetric zero padding that keeps the spatial size.
pub(crate) fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, cols: &mut [T]) {
    let n = h * w;
    debug_assert_eq!(cols.len(), c * k * k * n);
    for ci in 0..c {
        let plane = &input[ci * n..(ci + 1) * n];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..h {
                    let out = &mut row[oy * w..(oy + 1) * w];
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        out.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let shift = kx as isize - pad as isize;
                    // out[ox] = src[ox + shift] where in range
                    let lo = (-shift).max(0) as usize;
                    let hi = (w as isize - shift).min(w as isize).max(0) as usize;
                    out[..lo.min(w)].fill(T::zero());
                    if lo < hi {
                        let s0 = (lo as isize + shift) as usize;
                        out[lo..hi].copy_from_slice(&src[s0..s0 + (hi - lo)]);
                    }
                    out[hi.max(lo).min(w)..].fill(T::zero());
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input grid.
pub(crate) fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, input: &mut [T]) {
    let n = h * w;
    for ci in 0..c {
        let plane = &mut input[ci * n..(ci + 1) * n];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * n..][..n];
                for oy in 0..h {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let shift = kx as isize - pad as isize;
                    let lo = (-shift).max(0) as usize;
                    let hi = (w as isize - shift).min(w as isize).max(0) as usize;
                    if lo >= hi {
                        continue;
                    }
                    let s0 = (lo as isize + shift) as usize;
                    let dst = &mut plane[iy as usize * w + s0..iy as usize * w + s0 + (hi - lo)];
                    for (d, &g) in dst.iter_mut().zip(&row[oy * w + lo..oy * w + hi]) {
                        *d += g;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize, seed: u64) -> Vec<f64> {
        (0..n).map(|i| (((i as u64 * 2654435761 + seed) % 1000) as f64) / 500.0 - 1.0).collect()
    }

    #[test]
    fn gemm_matches_naive() {
        for &(m, k, n) in &[(1, 1, 1), (5, 7, 130), (16, 9, 257), (3, 2, 8)] {
            let a = seq(m * k, 1);
            let b = seq(k * n, 2);
            let mut c = seq(m * n, 3);
            let mut want = c.clone();
            for i in 0..m {
                for j in 0..n {
                    want[i * n + j] += (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum::<f64>();
                }
            }
            gemm_acc(m, k, n, &a, k, 1, &b, &mut c);
            for (x, y) in c.iter().zip(&want) {
                assert!((x - y).abs() < 1e-12);
            }
            // transposed view of the same matrix
            let at: Vec<f64> = (0..k * m).map(|q| a[(q % m) * k + q / m]).collect();
            let mut c2 = seq(m * n, 3);
            gemm_acc(m, k, n, &at, 1, m, &b, &mut c2);
            assert_eq!(c, c2);
        }
    }

    #[test]
    fn gemm_nt_is_blocked_dot() {
        for &(m, k, n) in &[(3, 5, 19), (4, 4, 64), (1, 3, 7)] {
            let a = seq(m * n, 4);
            let b = seq(k * n, 5);
            let mut c = vec![0.0; m * k];
            gemm_nt_acc(m, k, n, &a, &b, &mut c);
            for i in 0..m {
                for r in 0..k {
                    assert_eq!(c[i * k + r], dot(&a[i * n..(i + 1) * n], &b[r * n..(r + 1) * n]));
                }
            }
        }
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..19).map(|i| i as f64 * 0.5 - 3.0).collect();
        let b: Vec<f64> = (0..19).map(|i| (i * i) as f64 * 0.1).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-10);
        assert_eq!(sum(&a), a.iter().sum::<f64>());
    }

    #[test]
    fn im2col_brute_force() {
        let (c, h, w, k, pad) = (2, 4, 5, 3, 1);
        let input: Vec<f64> = (0..c * h * w).map(|i| i as f64 + 1.0).collect();
        let mut cols = vec![0.0; c * k * k * h * w];
        im2col(&input, c, h, w, k, pad, &mut cols);
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    for oy in 0..h {
                        for ox in 0..w {
                            let iy = oy as isize + ky as isize - 1;
                            let ix = ox as isize + kx as isize - 1;
                            let want = if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                0.0
                            } else {
                                input[ci * h * w + iy as usize * w + ix as usize]
                            };
                            let row = (ci * k + ky) * k + kx;
                            assert_eq!(cols[row * h * w + oy * w + ox], want);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w, k, pad) = (3, 5, 4, 3, 1);
        let x: Vec<f64> = (0..c * h * w).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..c * k * k * h * w).map(|i| ((i * 3) % 13) as f64 - 6.0).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, c, h, w, k, pad, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, c, h, w, k, pad, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
