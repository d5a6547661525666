use super::BinaryMask;

/// Squared Euclidean distance of every pixel to the nearest foreground pixel.
///
/// Two separable passes of the lower envelope of parabolas. All values are
/// integers held exactly in `f64`; an empty mask yields `f64::INFINITY`
/// everywhere.
pub fn squared_distance_transform(mask: &BinaryMask) -> Vec<f64> {
    let (h, w) = (mask.height, mask.width);
    let mut g = vec![f64::INFINITY; h * w];
    let mut f = vec![0.0; h.max(w)];
    let mut out = vec![0.0; h.max(w)];

    for x in 0..w {
        for y in 0..h {
            f[y] = if mask.get(y, x) { 0.0 } else { f64::INFINITY };
        }
        envelope(&f[..h], &mut out[..h]);
        for y in 0..h {
            g[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        f[..w].copy_from_slice(&g[y * w..(y + 1) * w]);
        envelope(&f[..w], &mut out[..w]);
        g[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
    }
    g
}

/// Euclidean distances; see [`squared_distance_transform`].
pub fn distance_transform(mask: &BinaryMask) -> Vec<f64> {
    squared_distance_transform(mask).into_iter().map(f64::sqrt).collect()
}

/// `out[q] = min_p (q - p)^2 + f[p]` over finite `f[p]`.
fn envelope(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            let Some(&p) = v.last() else {
                v.push(q);
                z.clear();
                z.push(f64::NEG_INFINITY);
                z.push(f64::INFINITY);
                break;
            };
            let s = (fq - (f[p] + (p * p) as f64)) / (2 * (q - p)) as f64;
            if s <= z[z.len() - 2] {
                v.pop();
                z.pop();
                if v.is_empty() {
                    z.clear();
                }
                continue;
            }
            let last = z.len() - 1;
            z[last] = s;
            z.push(f64::INFINITY);
            v.push(q);
            break;
        }
    }
    if v.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}
