//! Nested-loop CBAM forward pass over `Vec` nests, one loop per index.

use vrkit::cbam::{CbamWeights, Tensor4};

fn sig(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn naive_mlp(w: &CbamWeights, p: &[f64]) -> Vec<f64> {
    let c = w.channels;
    let m = c / w.ratio;
    let mut hidden = vec![0.0; m];
    for j in 0..m {
        let mut s = w.fc1_b[j] as f64;
        for i in 0..c {
            s += w.fc1_w[j * c + i] as f64 * p[i];
        }
        hidden[j] = if s > 0.0 { s } else { 0.0 };
    }
    (0..c)
        .map(|i| {
            let mut s = w.fc2_b[i] as f64;
            for j in 0..m {
                s += w.fc2_w[i * m + j] as f64 * hidden[j];
            }
            s
        })
        .collect()
}

/// x indexed [n][c][y][x]; returns the channel gate [n][c].
pub fn naive_channel(x: &[Vec<Vec<Vec<f64>>>], w: &CbamWeights) -> Vec<Vec<f64>> {
    x.iter()
        .map(|sample| {
            let avg: Vec<f64> = sample
                .iter()
                .map(|plane| {
                    let n = (plane.len() * plane[0].len()) as f64;
                    plane.iter().flatten().sum::<f64>() / n
                })
                .collect();
            let max: Vec<f64> = sample
                .iter()
                .map(|plane| plane.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let a = naive_mlp(w, &avg);
            let b = naive_mlp(w, &max);
            a.iter().zip(&b).map(|(a, b)| sig(a + b)).collect()
        })
        .collect()
}

/// Returns the spatial gate [n][y][x].
pub fn naive_spatial(x: &[Vec<Vec<Vec<f64>>>], w: &CbamWeights) -> Vec<Vec<Vec<f64>>> {
    let k = w.kernel as i64;
    let pad = (k - 1) / 2;
    x.iter()
        .map(|sample| {
            let c = sample.len();
            let h = sample[0].len();
            let wd = sample[0][0].len();
            let mut mean = vec![vec![0.0; wd]; h];
            let mut max = vec![vec![f64::NEG_INFINITY; wd]; h];
            for plane in sample {
                for y in 0..h {
                    for xx in 0..wd {
                        mean[y][xx] += plane[y][xx] / c as f64;
                        max[y][xx] = max[y][xx].max(plane[y][xx]);
                    }
                }
            }
            let maps = [mean, max];
            let mut out = vec![vec![0.0; wd]; h];
            for y in 0..h as i64 {
                for xx in 0..wd as i64 {
                    let mut s = w.conv_b as f64;
                    for (m, map) in maps.iter().enumerate() {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = y + ky - pad;
                                let ix = xx + kx - pad;
                                if iy < 0 || ix < 0 || iy >= h as i64 || ix >= wd as i64 {
                                    continue;
                                }
                                let wt = w.conv_w[(m * w.kernel + ky as usize) * w.kernel + kx as usize] as f64;
                                s += wt * map[iy as usize][ix as usize];
                            }
                        }
                    }
                    out[y as usize][xx as usize] = sig(s);
                }
            }
            out
        })
        .collect()
}

pub fn nested(t: &Tensor4) -> Vec<Vec<Vec<Vec<f64>>>> {
    let [n, c, h, w] = t.shape();
    (0..n)
        .map(|i| {
            (0..c)
                .map(|j| {
                    (0..h)
                        .map(|y| (0..w).map(|x| t.get(i, j, y, x) as f64).collect())
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn naive_forward(x: &Tensor4, w: &CbamWeights) -> Vec<f64> {
    let xs = nested(x);
    let ca = naive_channel(&xs, w);
    let y1: Vec<Vec<Vec<Vec<f64>>>> = xs
        .iter()
        .zip(&ca)
        .map(|(s, g)| {
            s.iter()
                .zip(g)
                .map(|(plane, &gc)| plane.iter().map(|row| row.iter().map(|v| v * gc).collect()).collect())
                .collect()
        })
        .collect();
    let sa = naive_spatial(&y1, w);
    let mut out = Vec::new();
    for (s, g) in y1.iter().zip(&sa) {
        for plane in s {
            for (row, grow) in plane.iter().zip(g) {
                for (v, gv) in row.iter().zip(grow) {
                    out.push(v * gv);
                }
            }
        }
    }
    out
}
