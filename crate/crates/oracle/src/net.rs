/// Same-padded (zeros) convolution as a direct quadruple loop.
/// `x` is `[in_ch][height][width]`, `k` is `[out_ch][in_ch][size][size]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    in_ch: usize,
    height: usize,
    width: usize,
    x: &[f64],
    out_ch: usize,
    size: usize,
    k: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let pad = (size / 2) as isize;
    let mut y = vec![0.0; out_ch * height * width];
    for o in 0..out_ch {
        for i in 0..height {
            for j in 0..width {
                let mut acc = b[o];
                for c in 0..in_ch {
                    for u in 0..size {
                        for v in 0..size {
                            let r = i as isize + u as isize - pad;
                            let s = j as isize + v as isize - pad;
                            if r < 0 || s < 0 || r >= height as isize || s >= width as isize {
                                continue;
                            }
                            acc += k[((o * in_ch + c) * size + u) * size + v]
                                * x[(c * height + r as usize) * width + s as usize];
                        }
                    }
                }
                y[(o * height + i) * width + j] = acc;
            }
        }
    }
    y
}
