use crate::at;

/// SRAD with the q0 window `(x0, z0, x1, z1)` clipped to the image.
pub fn srad(
    width: usize,
    height: usize,
    img: &[f64],
    iterations: usize,
    lambda: f64,
    window: (usize, usize, usize, usize),
) -> Vec<f64> {
    let eps = 1e-6;
    let mut img: Vec<f64> = img.iter().map(|v| v + eps).collect();
    let (x0, z0) = (window.0.min(width), window.1.min(height));
    let (x1, z1) = (window.2.min(width), window.3.min(height));
    for _ in 0..iterations {
        let mut vals = Vec::new();
        for r in z0..z1 {
            for c in x0..x1 {
                vals.push(img[r * width + c]);
            }
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
        let q0sq = (var.max(0.0) / (mean * mean)).max(1e-12);

        let mut coeff = vec![0.0; width * height];
        for r in 0..height as isize {
            for c in 0..width as isize {
                let j = at(&img, width, height, r, c);
                let dn = at(&img, width, height, r - 1, c) - j;
                let ds = at(&img, width, height, r + 1, c) - j;
                let dw = at(&img, width, height, r, c - 1) - j;
                let de = at(&img, width, height, r, c + 1) - j;
                let g2 = (dn * dn + ds * ds + dw * dw + de * de) / (j * j);
                let l = (dn + ds + dw + de) / j;
                let qsq = (0.5 * g2 - (1.0 / 16.0) * l * l) / ((1.0 + 0.25 * l) * (1.0 + 0.25 * l));
                let c_val = 1.0 / (1.0 + (qsq - q0sq) / (q0sq * (1.0 + q0sq)));
                coeff[r as usize * width + c as usize] = c_val.clamp(0.0, 1.0);
            }
        }
        let mut next = img.clone();
        for r in 0..height as isize {
            for c in 0..width as isize {
                let j = at(&img, width, height, r, c);
                let dn = at(&img, width, height, r - 1, c) - j;
                let ds = at(&img, width, height, r + 1, c) - j;
                let dw = at(&img, width, height, r, c - 1) - j;
                let de = at(&img, width, height, r, c + 1) - j;
                let cc = at(&coeff, width, height, r, c);
                let cs = at(&coeff, width, height, r + 1, c);
                let ce = at(&coeff, width, height, r, c + 1);
                next[r as usize * width + c as usize] =
                    j + lambda / 4.0 * (cc * dn + cs * ds + cc * dw + ce * de);
            }
        }
        img = next;
    }
    img.iter().map(|v| v - eps).collect()
}

/// Median by full sort of the mirrored window.
pub fn median(width: usize, height: usize, img: &[f64], window: usize) -> Vec<f64> {
    let rad = (window / 2) as isize;
    let mut out = Vec::with_capacity(img.len());
    for r in 0..height as isize {
        for c in 0..width as isize {
            let mut vals = Vec::new();
            for dr in -rad..=rad {
                for dc in -rad..=rad {
                    vals.push(at(img, width, height, r + dr, c + dc));
                }
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            out.push(vals[vals.len() / 2]);
        }
    }
    out
}

pub fn bilateral(
    width: usize,
    height: usize,
    img: &[f64],
    sigma_range: f64,
    sigma_spatial: f64,
) -> Vec<f64> {
    let rad = (3.0 * sigma_spatial).ceil() as isize;
    let mut out = Vec::with_capacity(img.len());
    for r in 0..height as isize {
        for c in 0..width as isize {
            let centre = at(img, width, height, r, c);
            let (mut num, mut den) = (0.0, 0.0);
            for dr in -rad..=rad {
                for dc in -rad..=rad {
                    let v = at(img, width, height, r + dr, c + dc);
                    let ws = (-((dr * dr + dc * dc) as f64)
                        / (2.0 * sigma_spatial * sigma_spatial))
                        .exp();
                    let wr = (-(v - centre).powi(2) / (2.0 * sigma_range * sigma_range)).exp();
                    num += ws * wr * v;
                    den += ws * wr;
                }
            }
            out.push(num / den);
        }
    }
    out
}

fn patch_mean(
    width: usize,
    height: usize,
    img: &[f64],
    h: f64,
    search: usize,
    patch: usize,
    term: impl Fn(f64, f64) -> f64,
) -> Vec<f64> {
    let rs = (search / 2) as isize;
    let rp = (patch / 2) as isize;
    let mut out = Vec::with_capacity(img.len());
    for r in 0..height as isize {
        for c in 0..width as isize {
            let (mut num, mut den) = (0.0, 0.0);
            for qr in r - rs..=r + rs {
                for qc in c - rs..=c + rs {
                    let mut d2 = 0.0;
                    for kr in -rp..=rp {
                        for kc in -rp..=rp {
                            let a = at(img, width, height, r + kr, c + kc);
                            let b = at(img, width, height, qr + kr, qc + kc);
                            d2 += term(a, b);
                        }
                    }
                    d2 /= (patch * patch) as f64;
                    let w = (-d2 / (h * h)).exp();
                    num += w * at(img, width, height, qr, qc);
                    den += w;
                }
            }
            out.push(num / den);
        }
    }
    out
}

pub fn nlm(
    width: usize,
    height: usize,
    img: &[f64],
    h: f64,
    search: usize,
    patch: usize,
) -> Vec<f64> {
    patch_mean(width, height, img, h, search, patch, |a, b| {
        (a - b) * (a - b)
    })
}

/// Pearson-distance NLM on the image shifted by 1e-6.
pub fn obnlm(
    width: usize,
    height: usize,
    img: &[f64],
    search: usize,
    patch: usize,
    h: f64,
) -> Vec<f64> {
    let eps = 1e-6;
    let shifted: Vec<f64> = img.iter().map(|v| v + eps).collect();
    patch_mean(width, height, &shifted, h, search, patch, |a, b| {
        (a - b) * (a - b) / b
    })
    .into_iter()
    .map(|v| v - eps)
    .collect()
}
