//! Layer primitives with exact backward passes.
//!
//! Convolutions lower to GEMM: a band of output rows is unrolled into an
//! `(in_ch * k * k) x (rows * width)` column matrix and multiplied by the
//! `out_ch x (in_ch * k * k)` kernel matrix. Bands keep the column buffer
//! bounded regardless of image size. Band results are produced in parallel
//! but reduced in band order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Convolution weights `[out_ch][in_ch][size][size]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub out_ch: usize,
    pub in_ch: usize,
    pub size: usize,
    pub data: Vec<f64>,
}

impl Kernel {
    pub fn zeros(out_ch: usize, in_ch: usize, size: usize) -> Self {
        Self {
            out_ch,
            in_ch,
            size,
            data: vec![0.0; out_ch * in_ch * size * size],
        }
    }

    pub fn from_vec(out_ch: usize, in_ch: usize, size: usize, data: Vec<f64>) -> Result<Self> {
        if size % 2 == 0 || data.len() != out_ch * in_ch * size * size {
            return Err(Error::Shape(format!(
                "{} weights for a {out_ch}x{in_ch}x{size}x{size} kernel",
                data.len()
            )));
        }
        Ok(Self {
            out_ch,
            in_ch,
            size,
            data,
        })
    }

    #[inline]
    pub fn at(&self, o: usize, c: usize, u: usize, v: usize) -> f64 {
        self.data[((o * self.in_ch + c) * self.size + u) * self.size + v]
    }

    fn row_len(&self) -> usize {
        self.in_ch * self.size * self.size
    }

    /// The kernel of the adjoint convolution: channels swapped, taps
    /// rotated by 180 degrees.
    fn adjoint(&self) -> Kernel {
        let k = self.size;
        let mut out = Kernel::zeros(self.in_ch, self.out_ch, k);
        for o in 0..self.out_ch {
            for c in 0..self.in_ch {
                for u in 0..k {
                    for v in 0..k {
                        out.data[((c * self.out_ch + o) * k + (k - 1 - u)) * k + (k - 1 - v)] =
                            self.at(o, c, u, v);
                    }
                }
            }
        }
        out
    }
}

// Target column-buffer size, in elements, per band.
const BAND_ELEMS: usize = 1 << 18;

fn band_rows(row_len: usize, width: usize, height: usize) -> usize {
    (BAND_ELEMS / (row_len * width).max(1)).clamp(1, height.max(1))
}

/// Unrolls output rows `r0..r0 + rows` of `x` into the column matrix.
fn im2col(x: &Tensor, size: usize, r0: usize, rows: usize, cols: &mut [f64]) {
    let (w, h) = (x.width, x.height);
    let pad = (size / 2) as isize;
    let n = rows * w;
    for c in 0..x.channels {
        let plane = x.plane(c);
        for u in 0..size {
            for v in 0..size {
                let dst = &mut cols[((c * size + u) * size + v) * n..][..n];
                let dc = v as isize - pad;
                for i in 0..rows {
                    let line = &mut dst[i * w..(i + 1) * w];
                    let sr = (r0 + i) as isize + u as isize - pad;
                    if sr < 0 || sr >= h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[sr as usize * w..(sr as usize + 1) * w];
                    for (j, d) in line.iter_mut().enumerate() {
                        let sc = j as isize + dc;
                        *d = if sc < 0 || sc >= w as isize {
                            0.0
                        } else {
                            src[sc as usize]
                        };
                    }
                }
            }
        }
    }
}

/// `c (m x n, row stride ldc) = a (m x k) * b (k x n)`, both row-major.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64], ldc: usize) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n);
    debug_assert!(m == 0 || c.len() >= (m - 1) * ldc + n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// `c (m x n) += a (m x k) * b^T` with `b` stored `n x k` row-major.
fn gemm_bt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Same-padded (zeros), stride-1 convolution:
/// `y[o,i,j] = b[o] + sum_{c,u,v} k[o,c,u,v] * x[c, i+u-p, j+v-p]`.
pub fn conv2d_forward(x: &Tensor, k: &Kernel, b: &[f64]) -> Result<Tensor> {
    if x.channels != k.in_ch || b.len() != k.out_ch {
        return Err(Error::Shape(format!(
            "conv {}->{} with bias {} applied to {} channels",
            k.in_ch,
            k.out_ch,
            b.len(),
            x.channels
        )));
    }
    let (w, h) = (x.width, x.height);
    let kk = k.row_len();
    let step = band_rows(kk, w, h);
    let bands: Vec<usize> = (0..h).step_by(step).collect();

    let pieces: Vec<Vec<f64>> = bands
        .par_iter()
        .map(|&r0| {
            let rows = step.min(h - r0);
            let n = rows * w;
            let mut cols = vec![0.0; kk * n];
            im2col(x, k.size, r0, rows, &mut cols);
            let mut out = vec![0.0; k.out_ch * n];
            for (o, chunk) in out.chunks_mut(n).enumerate() {
                chunk.fill(b[o]);
            }
            gemm(k.out_ch, kk, n, &k.data, &cols, 1.0, &mut out, n);
            out
        })
        .collect();

    let mut y = Tensor::zeros(k.out_ch, h, w);
    let plane = h * w;
    for (&r0, piece) in bands.iter().zip(&pieces) {
        let n = piece.len() / k.out_ch;
        for o in 0..k.out_ch {
            y.data[o * plane + r0 * w..][..n].copy_from_slice(&piece[o * n..(o + 1) * n]);
        }
    }
    Ok(y)
}

pub struct ConvGrads {
    /// `None` when the input gradient was not requested.
    pub grad_x: Option<Tensor>,
    pub grad_k: Kernel,
    pub grad_b: Vec<f64>,
}

/// Exact gradients of [`conv2d_forward`] with respect to its input, kernel
/// and bias.
pub fn conv2d_backward(x: &Tensor, k: &Kernel, grad_y: &Tensor) -> Result<ConvGrads> {
    conv2d_backward_opt(x, k, grad_y, true)
}

pub(crate) fn conv2d_backward_opt(
    x: &Tensor,
    k: &Kernel,
    grad_y: &Tensor,
    want_grad_x: bool,
) -> Result<ConvGrads> {
    if x.channels != k.in_ch || grad_y.channels != k.out_ch || !x.same_spatial(grad_y) {
        return Err(Error::Shape(format!(
            "conv backward: input {:?}, kernel {}->{}, output gradient {:?}",
            x.shape(),
            k.in_ch,
            k.out_ch,
            grad_y.shape()
        )));
    }
    let (w, h) = (x.width, x.height);
    let plane = h * w;

    let grad_b: Vec<f64> = (0..k.out_ch)
        .map(|o| grad_y.plane(o).iter().sum())
        .collect();

    let kk = k.row_len();
    let step = band_rows(kk, w, h);
    let bands: Vec<usize> = (0..h).step_by(step).collect();
    let partials: Vec<Vec<f64>> = bands
        .par_iter()
        .map(|&r0| {
            let rows = step.min(h - r0);
            let n = rows * w;
            let mut cols = vec![0.0; kk * n];
            im2col(x, k.size, r0, rows, &mut cols);
            let mut gy = vec![0.0; k.out_ch * n];
            for o in 0..k.out_ch {
                gy[o * n..(o + 1) * n].copy_from_slice(&grad_y.data[o * plane + r0 * w..][..n]);
            }
            // grad_k (out x kk) = gy (out x n) * cols^T, cols stored kk x n
            let mut gk = vec![0.0; k.out_ch * kk];
            gemm_bt_acc(k.out_ch, n, kk, &gy, &cols, &mut gk);
            gk
        })
        .collect();
    let mut grad_k = Kernel::zeros(k.out_ch, k.in_ch, k.size);
    for p in &partials {
        for (a, b) in grad_k.data.iter_mut().zip(p) {
            *a += b;
        }
    }

    // The input gradient of a same-padded convolution is the same-padded
    // convolution of the output gradient with the adjoint kernel.
    let grad_x = if want_grad_x {
        Some(conv2d_forward(grad_y, &k.adjoint(), &vec![0.0; k.in_ch])?)
    } else {
        None
    };
    Ok(ConvGrads {
        grad_x,
        grad_k,
        grad_b,
    })
}

/// Winner index (0..4, row-major within the 2x2 block) per pooled pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolMask {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub winners: Vec<u8>,
}

/// 2x2 max pooling; ties go to the first element in row-major order.
pub fn maxpool2(x: &Tensor) -> Result<(Tensor, PoolMask)> {
    if x.height % 2 != 0 || x.width % 2 != 0 {
        return Err(Error::Shape(format!(
            "max pooling needs even dimensions, got {}x{}",
            x.width, x.height
        )));
    }
    let (oh, ow) = (x.height / 2, x.width / 2);
    let mut y = Tensor::zeros(x.channels, oh, ow);
    let mut winners = vec![0u8; x.channels * oh * ow];
    y.data
        .par_chunks_mut(oh * ow)
        .zip(winners.par_chunks_mut(oh * ow))
        .enumerate()
        .for_each(|(c, (yp, wp))| {
            let src = x.plane(c);
            let w = x.width;
            for i in 0..oh {
                for j in 0..ow {
                    let base = 2 * i * w + 2 * j;
                    let cand = [src[base], src[base + 1], src[base + w], src[base + w + 1]];
                    let mut best = 0;
                    for t in 1..4 {
                        if cand[t] > cand[best] {
                            best = t;
                        }
                    }
                    yp[i * ow + j] = cand[best];
                    wp[i * ow + j] = best as u8;
                }
            }
        });
    Ok((
        y,
        PoolMask {
            channels: x.channels,
            height: oh,
            width: ow,
            winners,
        },
    ))
}

pub fn maxpool2_backward(mask: &PoolMask, grad_y: &Tensor) -> Result<Tensor> {
    if grad_y.shape() != (mask.channels, mask.height, mask.width) {
        return Err(Error::Shape(format!(
            "pool backward: mask {}x{}x{}, gradient {:?}",
            mask.channels,
            mask.height,
            mask.width,
            grad_y.shape()
        )));
    }
    let (oh, ow) = (mask.height, mask.width);
    let w = 2 * ow;
    let mut gx = Tensor::zeros(mask.channels, 2 * oh, w);
    for (idx, (&g, &t)) in grad_y.data.iter().zip(&mask.winners).enumerate() {
        let c = idx / (oh * ow);
        let (i, j) = ((idx / ow) % oh, idx % ow);
        let (du, dv) = ((t / 2) as usize, (t % 2) as usize);
        gx.data[(c * 2 * oh + 2 * i + du) * w + 2 * j + dv] = g;
    }
    Ok(gx)
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2_nearest(x: &Tensor) -> Tensor {
    let (h, w) = (x.height, x.width);
    let mut y = Tensor::zeros(x.channels, 2 * h, 2 * w);
    for c in 0..x.channels {
        let src = x.plane(c);
        let dst = y.plane_mut(c);
        for i in 0..2 * h {
            for j in 0..2 * w {
                dst[i * 2 * w + j] = src[(i / 2) * w + j / 2];
            }
        }
    }
    y
}

/// Adjoint of [`upsample2_nearest`]: sums each 2x2 block.
pub fn upsample2_backward(grad_y: &Tensor) -> Result<Tensor> {
    if grad_y.height % 2 != 0 || grad_y.width % 2 != 0 {
        return Err(Error::Shape("upsample gradient has odd dimensions".into()));
    }
    let (h, w) = (grad_y.height / 2, grad_y.width / 2);
    let mut gx = Tensor::zeros(grad_y.channels, h, w);
    for c in 0..grad_y.channels {
        let src = grad_y.plane(c);
        let dst = gx.plane_mut(c);
        let sw = 2 * w;
        for i in 0..h {
            for j in 0..w {
                let b = 2 * i * sw + 2 * j;
                dst[i * w + j] = src[b] + src[b + 1] + src[b + sw] + src[b + sw + 1];
            }
        }
    }
    Ok(gx)
}

/// Stacks `a`'s channels followed by `b`'s.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if !a.same_spatial(b) {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.data.len() + b.data.len());
    data.extend_from_slice(&a.data);
    data.extend_from_slice(&b.data);
    Tensor::from_vec(a.channels + b.channels, a.height, a.width, data)
}

/// Adjoint of [`concat_channels`]: the first `channels_a` channels and the
/// rest.
pub fn split_channels(g: &Tensor, channels_a: usize) -> Result<(Tensor, Tensor)> {
    if channels_a > g.channels {
        return Err(Error::Shape("split point beyond channel count".into()));
    }
    let cut = channels_a * g.plane_len();
    Ok((
        Tensor::from_vec(channels_a, g.height, g.width, g.data[..cut].to_vec())?,
        Tensor::from_vec(
            g.channels - channels_a,
            g.height,
            g.width,
            g.data[cut..].to_vec(),
        )?,
    ))
}

pub fn leaky_relu_inplace(x: &mut Tensor, slope: f64) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v *= slope;
        }
    }
}

/// Backward through a leaky ReLU given its *output*; the slope is positive
/// so the output has the sign of the pre-activation.
pub fn leaky_relu_backward_inplace(grad: &mut Tensor, output: &Tensor, slope: f64) {
    for (g, &y) in grad.data.iter_mut().zip(&output.data) {
        if y < 0.0 {
            *g *= slope;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_tensor(c: usize, h: usize, w: usize, rng: &mut crate::seed::Rng) -> Tensor {
        Tensor::from_vec(
            c,
            h,
            w,
            (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn random_kernel(o: usize, i: usize, k: usize, rng: &mut crate::seed::Rng) -> Kernel {
        Kernel::from_vec(
            o,
            i,
            k,
            (0..o * i * k * k)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_and_constant_kernels() {
        let mut rng = crate::seed::rng_from(&[1]);
        let x = random_tensor(1, 5, 7, &mut rng);
        let id = Kernel::from_vec(1, 1, 1, vec![1.0]).unwrap();
        assert_eq!(conv2d_forward(&x, &id, &[0.0]).unwrap(), x);
        let y = conv2d_forward(&x, &Kernel::zeros(2, 1, 3), &[0.25, -3.0]).unwrap();
        assert!(y.plane(0).iter().all(|&v| v == 0.25));
        assert!(y.plane(1).iter().all(|&v| v == -3.0));
    }

    #[test]
    fn matches_quadruple_loop_oracle() {
        let mut rng = crate::seed::rng_from(&[2]);
        let cases = [
            (1, 1, 6, 6, 3),
            (3, 4, 5, 9, 3),
            (2, 3, 8, 4, 5),
            (2, 2, 3, 3, 1),
        ];
        for (ci, co, h, w, k) in cases {
            let x = random_tensor(ci, h, w, &mut rng);
            let kern = random_kernel(co, ci, k, &mut rng);
            let b: Vec<f64> = (0..co).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = conv2d_forward(&x, &kern, &b).unwrap();
            let want = oracle::conv2d(ci, h, w, &x.data, co, k, &kern.data, &b);
            for (a, b) in got.data.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn banding_does_not_change_results() {
        // wide enough that several bands are used
        let mut rng = crate::seed::rng_from(&[3]);
        let x = random_tensor(8, 40, 300, &mut rng);
        let kern = random_kernel(4, 8, 3, &mut rng);
        assert!(band_rows(kern.row_len(), 300, 40) < 40);
        let got = conv2d_forward(&x, &kern, &[0.0; 4]).unwrap();
        let want = oracle::conv2d(8, 40, 300, &x.data, 4, 3, &kern.data, &[0.0; 4]);
        for (a, b) in got.data.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12);
        }
        let gy = random_tensor(4, 40, 300, &mut rng);
        let g = conv2d_backward(&x, &kern, &gy).unwrap();
        // <gy, conv(x)> is bilinear, so <gy, conv(dx)> = <grad_x, dx>
        let dx = random_tensor(8, 40, 300, &mut rng);
        let lhs = gy.dot(&conv2d_forward(&dx, &kern, &[0.0; 4]).unwrap());
        let rhs = g.grad_x.unwrap().dot(&dx);
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::zeros(2, 4, 4);
        assert!(matches!(
            conv2d_forward(&x, &Kernel::zeros(1, 3, 3), &[0.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            conv2d_forward(&x, &Kernel::zeros(1, 2, 3), &[0.0, 0.0]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            conv2d_backward(&x, &Kernel::zeros(1, 2, 3), &Tensor::zeros(1, 4, 5)),
            Err(Error::Shape(_))
        ));
        assert!(Kernel::from_vec(1, 1, 2, vec![0.0; 4]).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let mut rng = crate::seed::rng_from(&[4]);
        let x = random_tensor(2, 6, 6, &mut rng);
        let k = random_kernel(3, 2, 3, &mut rng);
        let g = conv2d_backward(&x, &k, &Tensor::zeros(3, 6, 6)).unwrap();
        assert!(g.grad_x.unwrap().data.iter().all(|&v| v == 0.0));
        assert!(g.grad_k.data.iter().all(|&v| v == 0.0));
        assert!(g.grad_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_routes_single_pixel_gradient() {
        let x = Tensor::zeros(1, 5, 5);
        let mut k = Kernel::zeros(1, 1, 3);
        k.data[4] = 1.0;
        let mut gy = Tensor::zeros(1, 5, 5);
        gy.data[7] = 2.5;
        let g = conv2d_backward(&x, &k, &gy).unwrap();
        assert_eq!(g.grad_x.unwrap().data, gy.data);
    }

    #[test]
    fn conv_gradients_match_central_differences() {
        let mut rng = crate::seed::rng_from(&[5]);
        let (ci, co, h, w) = (2, 3, 5, 6);
        let x = random_tensor(ci, h, w, &mut rng);
        let k = random_kernel(co, ci, 3, &mut rng);
        let b: Vec<f64> = (0..co).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy = random_tensor(co, h, w, &mut rng);
        let g = conv2d_backward(&x, &k, &gy).unwrap();
        let gx = g.grad_x.unwrap();

        let loss = |x: &Tensor, k: &Kernel, b: &[f64]| gy.dot(&conv2d_forward(x, k, b).unwrap());
        for i in 0..x.data.len() {
            let fd = oracle::central_difference(
                &mut |v| {
                    loss(
                        &Tensor {
                            data: v.to_vec(),
                            ..x.clone()
                        },
                        &k,
                        &b,
                    )
                },
                &x.data,
                i,
                1e-5,
            );
            assert!(
                oracle::relative_error(gx.data[i], fd, 1e-3) <= 1e-6,
                "x[{i}]"
            );
        }
        for i in 0..k.data.len() {
            let fd = oracle::central_difference(
                &mut |v| {
                    loss(
                        &x,
                        &Kernel {
                            data: v.to_vec(),
                            ..k.clone()
                        },
                        &b,
                    )
                },
                &k.data,
                i,
                1e-5,
            );
            assert!(
                oracle::relative_error(g.grad_k.data[i], fd, 1e-3) <= 1e-6,
                "k[{i}]"
            );
        }
        for i in 0..co {
            let fd = oracle::central_difference(&mut |v| loss(&x, &k, v), &b, i, 1e-5);
            assert!(
                oracle::relative_error(g.grad_b[i], fd, 1e-3) <= 1e-6,
                "b[{i}]"
            );
        }
    }

    #[test]
    fn maxpool_ties_and_ramps() {
        let x = Tensor::from_vec(1, 4, 4, vec![0.5; 16]).unwrap();
        let (y, mask) = maxpool2(&x).unwrap();
        assert_eq!(y.data, vec![0.5; 4]);
        assert!(mask.winners.iter().all(|&t| t == 0));
        let gx = maxpool2_backward(
            &mask,
            &Tensor::from_vec(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
        )
        .unwrap();
        let mut want = vec![0.0; 16];
        want[0] = 1.0;
        want[2] = 2.0;
        want[8] = 3.0;
        want[10] = 4.0;
        assert_eq!(gx.data, want);

        let ramp = Tensor::from_vec(1, 4, 6, (0..24).map(f64::from).collect()).unwrap();
        let (y, mask) = maxpool2(&ramp).unwrap();
        assert!(mask.winners.iter().all(|&t| t == 3));
        assert_eq!(y.data, vec![7.0, 9.0, 11.0, 19.0, 21.0, 23.0]);
        assert!(matches!(
            maxpool2(&Tensor::zeros(1, 3, 4)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn maxpool_gradient_matches_central_differences() {
        let mut rng = crate::seed::rng_from(&[6]);
        let x = random_tensor(3, 6, 8, &mut rng);
        let gy = random_tensor(3, 3, 4, &mut rng);
        let (_, mask) = maxpool2(&x).unwrap();
        let gx = maxpool2_backward(&mask, &gy).unwrap();
        for i in 0..x.data.len() {
            let fd = oracle::central_difference(
                &mut |v| {
                    gy.dot(
                        &maxpool2(&Tensor {
                            data: v.to_vec(),
                            ..x.clone()
                        })
                        .unwrap()
                        .0,
                    )
                },
                &x.data,
                i,
                1e-5,
            );
            assert!(oracle::relative_error(gx.data[i], fd, 1e-3) <= 1e-6);
        }
    }

    #[test]
    fn upsample_and_concat() {
        let x = Tensor::from_vec(1, 1, 1, vec![0.7]).unwrap();
        assert_eq!(upsample2_nearest(&x).data, vec![0.7; 4]);

        let a = Tensor::from_vec(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_vec(1, 1, 2, vec![5.0, 6.0]).unwrap();
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.channels, 3);
        assert_eq!(ab.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (ga, gb) = split_channels(&ab, 2).unwrap();
        assert_eq!((ga, gb), (a, b));
        assert!(concat_channels(&Tensor::zeros(1, 2, 2), &Tensor::zeros(1, 2, 3)).is_err());

        let c = Tensor::from_vec(2, 4, 4, vec![0.3; 32]).unwrap();
        let (p, _) = maxpool2(&c).unwrap();
        assert_eq!(upsample2_nearest(&p), c);
    }

    #[test]
    fn upsample_backward_is_the_adjoint() {
        let mut rng = crate::seed::rng_from(&[7]);
        let x = random_tensor(2, 3, 5, &mut rng);
        let gy = random_tensor(2, 6, 10, &mut rng);
        let lhs = gy.dot(&upsample2_nearest(&x));
        let rhs = upsample2_backward(&gy).unwrap().dot(&x);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn leaky_relu_passes_nonnegative_values_exactly() {
        let mut x = Tensor::from_vec(1, 1, 4, vec![-2.0, 0.0, 0.3, 1e-300]).unwrap();
        leaky_relu_inplace(&mut x, 0.1);
        assert_eq!(x.data, vec![-0.2, 0.0, 0.3, 1e-300]);
    }
}
