//! Convolutional Block Attention Module: a channel gate followed by a spatial
//! gate, both sigmoid maps multiplied into the feature map.
//!
//! Storage is f32; pooling, the MLP and the convolution accumulate in f64.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"CBAM";

#[derive(Debug, Error)]
pub enum CbamError {
    #[error("tensor dimensions must all be at least 1, got {0:?}")]
    ZeroDim([usize; 4]),
    #[error("tensor data has {actual} values, shape needs {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("reduction ratio {r} must be positive and divide channel count {c}")]
    BadRatio { c: usize, r: usize },
    #[error("kernel size {0} must be odd")]
    EvenKernel(usize),
    #[error("weight blob: {0}")]
    Blob(String),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Dense NCHW tensor, row-major with N outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(shape: [usize; 4], data: Vec<f32>) -> Result<Self, CbamError> {
        if shape.contains(&0) {
            return Err(CbamError::ZeroDim(shape));
        }
        let expected = shape.iter().product();
        if data.len() != expected {
            return Err(CbamError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: [usize; 4]) -> Result<Self, CbamError> {
        Self::new(shape, vec![0.0; shape.iter().product()])
    }

    /// Fills from `f(n, c, h, w)`.
    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Result<Self, CbamError> {
        let [n, c, h, w] = shape;
        let mut data = Vec::with_capacity(n * c * h * w);
        for i in 0..n {
            for j in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(i, j, y, x));
                    }
                }
            }
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        let [_, sc, sh, sw] = self.shape;
        self.data[((n * sc + c) * sh + h) * sw + w]
    }

    fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }
}

/// Channel MLP (C → C/r → C, shared by both pooled descriptors) and the
/// 2 → 1 spatial convolution. Matrices are row-major `[out][in]`; the
/// convolution kernel is `[in_channel][ky][kx]` with channel 0 the mean map.
#[derive(Debug, Clone, PartialEq)]
pub struct CbamWeights {
    pub channels: usize,
    pub ratio: usize,
    pub kernel: usize,
    pub fc1_w: Vec<f32>,
    pub fc1_b: Vec<f32>,
    pub fc2_w: Vec<f32>,
    pub fc2_b: Vec<f32>,
    pub conv_w: Vec<f32>,
    pub conv_b: f32,
}

fn check_config(c: usize, r: usize, k: usize) -> Result<(), CbamError> {
    if c == 0 || r == 0 || !c.is_multiple_of(r) {
        return Err(CbamError::BadRatio { c, r });
    }
    if k.is_multiple_of(2) {
        return Err(CbamError::EvenKernel(k));
    }
    Ok(())
}

impl CbamWeights {
    pub fn zeros(channels: usize, ratio: usize, kernel: usize) -> Result<Self, CbamError> {
        check_config(channels, ratio, kernel)?;
        let hidden = channels / ratio;
        Ok(Self {
            channels,
            ratio,
            kernel,
            fc1_w: vec![0.0; hidden * channels],
            fc1_b: vec![0.0; hidden],
            fc2_w: vec![0.0; channels * hidden],
            fc2_b: vec![0.0; channels],
            conv_w: vec![0.0; 2 * kernel * kernel],
            conv_b: 0.0,
        })
    }

    pub fn hidden(&self) -> usize {
        self.channels / self.ratio
    }

    pub fn validate(&self) -> Result<(), CbamError> {
        check_config(self.channels, self.ratio, self.kernel)?;
        let (c, m, k) = (self.channels, self.hidden(), self.kernel);
        let lens = [
            ("fc1_w", self.fc1_w.len(), m * c),
            ("fc1_b", self.fc1_b.len(), m),
            ("fc2_w", self.fc2_w.len(), c * m),
            ("fc2_b", self.fc2_b.len(), c),
            ("conv_w", self.conv_w.len(), 2 * k * k),
        ];
        for (name, got, want) in lens {
            if got != want {
                return Err(CbamError::ShapeMismatch(format!(
                    "{name} has {got} values, expected {want}"
                )));
            }
        }
        Ok(())
    }

    /// Header `CBAM`, then c, r, k as u32 LE, then every parameter as f32 LE
    /// in the order fc1_w, fc1_b, fc2_w, fc2_b, conv_w, conv_b.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.param_count());
        out.extend_from_slice(MAGIC);
        for v in [self.channels, self.ratio, self.kernel] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in self.params() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CbamError> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(CbamError::Blob("missing CBAM header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let mut w = Self::zeros(word(0), word(1), word(2))?;
        let body = &bytes[16..];
        if body.len() != 4 * w.param_count() {
            return Err(CbamError::Blob(format!(
                "body has {} bytes, expected {}",
                body.len(),
                4 * w.param_count()
            )));
        }
        let mut vals = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()));
        for buf in [&mut w.fc1_w, &mut w.fc1_b, &mut w.fc2_w, &mut w.fc2_b, &mut w.conv_w] {
            for slot in buf.iter_mut() {
                *slot = vals.next().unwrap();
            }
        }
        w.conv_b = vals.next().unwrap();
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<(), CbamError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| CbamError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CbamError> {
        let bytes = std::fs::read(path).map_err(|source| CbamError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    fn param_count(&self) -> usize {
        self.fc1_w.len() + self.fc1_b.len() + self.fc2_w.len() + self.fc2_b.len() + self.conv_w.len() + 1
    }

    fn params(&self) -> impl Iterator<Item = f32> + '_ {
        self.fc1_w
            .iter()
            .chain(&self.fc1_b)
            .chain(&self.fc2_w)
            .chain(&self.fc2_b)
            .chain(&self.conv_w)
            .copied()
            .chain(std::iter::once(self.conv_b))
    }
}

/// Uniform in ±1/√fan_in per layer, from a ChaCha8 stream seeded by `seed`.
pub fn init_weights(c: usize, r: usize, k: usize, seed: u64) -> Result<CbamWeights, CbamError> {
    let mut w = CbamWeights::zeros(c, r, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |buf: &mut [f32], fan_in: usize| {
        let b = 1.0 / (fan_in as f64).sqrt();
        for v in buf {
            *v = rng.random_range(-b..=b) as f32;
        }
    };
    let hidden = w.hidden();
    fill(&mut w.fc1_w, c);
    fill(&mut w.fc1_b, c);
    fill(&mut w.fc2_w, hidden);
    fill(&mut w.fc2_b, hidden);
    fill(&mut w.conv_w, 2 * k * k);
    let mut b = [0.0f32];
    fill(&mut b, 2 * k * k);
    w.conv_b = b[0];
    Ok(w)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Shared MLP with its tangent: returns (MLP(p), dMLP·dp).
fn mlp(w: &CbamWeights, p: &[f64], dp: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (c, m) = (w.channels, w.hidden());
    let mut hid = vec![0.0; m];
    let mut dhid = vec![0.0; m];
    for j in 0..m {
        let row = &w.fc1_w[j * c..(j + 1) * c];
        let mut a = w.fc1_b[j] as f64;
        let mut da = 0.0;
        for i in 0..c {
            a += row[i] as f64 * p[i];
            da += row[i] as f64 * dp[i];
        }
        if a > 0.0 {
            hid[j] = a;
            dhid[j] = da;
        }
    }
    let mut out = vec![0.0; c];
    let mut dout = vec![0.0; c];
    for i in 0..c {
        let row = &w.fc2_w[i * m..(i + 1) * m];
        let mut a = w.fc2_b[i] as f64;
        let mut da = 0.0;
        for j in 0..m {
            a += row[j] as f64 * hid[j];
            da += row[j] as f64 * dhid[j];
        }
        out[i] = a;
        dout[i] = da;
    }
    (out, dout)
}

/// Channel gate of one sample laid out as C×HW, with tangent.
fn channel_gate(w: &CbamWeights, x: &[f64], dx: &[f64], hw: usize) -> (Vec<f64>, Vec<f64>) {
    let c = w.channels;
    let mut avg = vec![0.0; c];
    let mut davg = vec![0.0; c];
    let mut mx = vec![0.0; c];
    let mut dmx = vec![0.0; c];
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        let dplane = &dx[ch * hw..(ch + 1) * hw];
        avg[ch] = plane.iter().sum::<f64>() / hw as f64;
        davg[ch] = dplane.iter().sum::<f64>() / hw as f64;
        let mut best = 0;
        for (i, &v) in plane.iter().enumerate() {
            if v > plane[best] {
                best = i;
            }
        }
        mx[ch] = plane[best];
        dmx[ch] = dplane[best];
    }
    let (a, da) = mlp(w, &avg, &davg);
    let (b, db) = mlp(w, &mx, &dmx);
    let mut gate = vec![0.0; c];
    let mut dgate = vec![0.0; c];
    for ch in 0..c {
        let s = sigmoid(a[ch] + b[ch]);
        gate[ch] = s;
        dgate[ch] = s * (1.0 - s) * (da[ch] + db[ch]);
    }
    (gate, dgate)
}

/// Spatial gate of one sample laid out as C×H×W, with tangent.
fn spatial_gate(w: &CbamWeights, x: &[f64], dx: &[f64], h: usize, wd: usize) -> (Vec<f64>, Vec<f64>) {
    let (c, hw, k) = (w.channels, h * wd, w.kernel);
    // maps[0] = channel mean, maps[1] = channel max
    let mut maps = vec![0.0; 2 * hw];
    let mut dmaps = vec![0.0; 2 * hw];
    for p in 0..hw {
        let (mut sum, mut dsum) = (0.0, 0.0);
        let mut best = 0;
        for ch in 0..c {
            sum += x[ch * hw + p];
            dsum += dx[ch * hw + p];
            if x[ch * hw + p] > x[best * hw + p] {
                best = ch;
            }
        }
        maps[p] = sum / c as f64;
        dmaps[p] = dsum / c as f64;
        maps[hw + p] = x[best * hw + p];
        dmaps[hw + p] = dx[best * hw + p];
    }
    let pad = (k / 2) as isize;
    let mut gate = vec![0.0; hw];
    let mut dgate = vec![0.0; hw];
    for oy in 0..h {
        // kernel rows whose input row lies inside the image
        let ky0 = (pad - oy as isize).max(0) as usize;
        let ky1 = ((h as isize - oy as isize + pad).min(k as isize)) as usize;
        for ox in 0..wd {
            let kx0 = (pad - ox as isize).max(0) as usize;
            let kx1 = ((wd as isize - ox as isize + pad).min(k as isize)) as usize;
            let (mut s, mut ds) = (w.conv_b as f64, 0.0);
            for m in 0..2 {
                for ky in ky0..ky1 {
                    let iy = (oy as isize + ky as isize - pad) as usize;
                    let krow = &w.conv_w[(m * k + ky) * k..(m * k + ky + 1) * k];
                    let base = m * hw + iy * wd;
                    for (kx, &wk) in krow.iter().enumerate().take(kx1).skip(kx0) {
                        let ix = (ox as isize + kx as isize - pad) as usize;
                        s += wk as f64 * maps[base + ix];
                        ds += wk as f64 * dmaps[base + ix];
                    }
                }
            }
            let g = sigmoid(s);
            gate[oy * wd + ox] = g;
            dgate[oy * wd + ox] = g * (1.0 - g) * ds;
        }
    }
    (gate, dgate)
}

fn check_input(x: &Tensor4, w: &CbamWeights) -> Result<(), CbamError> {
    w.validate()?;
    if x.shape[1] != w.channels {
        return Err(CbamError::ShapeMismatch(format!(
            "input has {} channels, weights expect {}",
            x.shape[1], w.channels
        )));
    }
    Ok(())
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&a| a as f64).collect()
}

/// `sigmoid(MLP(avgpool(x)) + MLP(maxpool(x)))`, shape N×C×1×1.
pub fn channel_attention(x: &Tensor4, w: &CbamWeights) -> Result<Tensor4, CbamError> {
    check_input(x, w)?;
    let [n, c, h, wd] = x.shape;
    let zeros = vec![0.0; x.sample_len()];
    let data = x
        .data
        .par_chunks(x.sample_len())
        .flat_map_iter(|s| {
            channel_gate(w, &widen(s), &zeros, h * wd)
                .0
                .into_iter()
                .map(|g| g as f32)
        })
        .collect();
    Tensor4::new([n, c, 1, 1], data)
}

/// `sigmoid(conv([mean_c(x), max_c(x)]))` with same padding, shape N×1×H×W.
pub fn spatial_attention(x: &Tensor4, w: &CbamWeights) -> Result<Tensor4, CbamError> {
    check_input(x, w)?;
    let [n, _, h, wd] = x.shape;
    let zeros = vec![0.0; x.sample_len()];
    let data = x
        .data
        .par_chunks(x.sample_len())
        .flat_map_iter(|s| {
            spatial_gate(w, &widen(s), &zeros, h, wd)
                .0
                .into_iter()
                .map(|g| g as f32)
        })
        .collect();
    Tensor4::new([n, 1, h, wd], data)
}

/// One sample through both gates, returning output and its tangent.
fn forward_sample(w: &CbamWeights, x: &[f32], v: Option<&[f32]>, h: usize, wd: usize) -> (Vec<f64>, Vec<f64>) {
    let hw = h * wd;
    let x = widen(x);
    let dx = v.map(widen).unwrap_or_else(|| vec![0.0; x.len()]);
    let (ca, dca) = channel_gate(w, &x, &dx, hw);
    let mut y1 = vec![0.0; x.len()];
    let mut dy1 = vec![0.0; x.len()];
    for i in 0..x.len() {
        let ch = i / hw;
        y1[i] = x[i] * ca[ch];
        dy1[i] = dx[i] * ca[ch] + x[i] * dca[ch];
    }
    let (sa, dsa) = spatial_gate(w, &y1, &dy1, h, wd);
    let mut y = vec![0.0; x.len()];
    let mut dy = vec![0.0; x.len()];
    for i in 0..x.len() {
        let p = i % hw;
        y[i] = y1[i] * sa[p];
        dy[i] = dy1[i] * sa[p] + y1[i] * dsa[p];
    }
    (y, dy)
}

/// `y1 = x ⊙ Mc(x)`, `y = y1 ⊙ Ms(y1)`.
pub fn cbam_forward(x: &Tensor4, w: &CbamWeights) -> Result<Tensor4, CbamError> {
    check_input(x, w)?;
    let [_, _, h, wd] = x.shape;
    let data = x
        .data
        .par_chunks(x.sample_len())
        .flat_map_iter(|s| forward_sample(w, s, None, h, wd).0.into_iter().map(|v| v as f32))
        .collect();
    Tensor4::new(x.shape, data)
}

/// Forward pass plus the Jacobian-vector product along `v`, both in f64.
/// Max pooling differentiates through the first maximal element.
pub fn cbam_jvp(x: &Tensor4, v: &Tensor4, w: &CbamWeights) -> Result<(Vec<f64>, Vec<f64>), CbamError> {
    check_input(x, w)?;
    if v.shape != x.shape {
        return Err(CbamError::ShapeMismatch(format!(
            "direction shape {:?} differs from input {:?}",
            v.shape, x.shape
        )));
    }
    let [_, _, h, wd] = x.shape;
    let parts: Vec<(Vec<f64>, Vec<f64>)> = x
        .data
        .par_chunks(x.sample_len())
        .zip(v.data.par_chunks(x.sample_len()))
        .map(|(s, d)| forward_sample(w, s, Some(d), h, wd))
        .collect();
    let mut y = Vec::with_capacity(x.data.len());
    let mut dy = Vec::with_capacity(x.data.len());
    for (a, b) in parts {
        y.extend(a);
        dy.extend(b);
    }
    Ok((y, dy))
}

/// Direct nested-loop forward pass, kept deliberately naive as a runtime
/// cross-check for [`cbam_forward`].
#[allow(clippy::needless_range_loop)]
pub mod reference {
    use super::{CbamError, CbamWeights, Tensor4};

    fn sig(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    fn mlp(w: &CbamWeights, p: &[f64]) -> Vec<f64> {
        let (c, m) = (w.channels, w.channels / w.ratio);
        let hidden: Vec<f64> = (0..m)
            .map(|j| {
                let s: f64 = (0..c).map(|i| w.fc1_w[j * c + i] as f64 * p[i]).sum::<f64>() + w.fc1_b[j] as f64;
                s.max(0.0)
            })
            .collect();
        (0..c)
            .map(|i| (0..m).map(|j| w.fc2_w[i * m + j] as f64 * hidden[j]).sum::<f64>() + w.fc2_b[i] as f64)
            .collect()
    }

    pub fn forward(x: &Tensor4, w: &CbamWeights) -> Result<Vec<f64>, CbamError> {
        super::check_input(x, w)?;
        let [n, c, h, wd] = x.shape();
        let k = w.kernel as isize;
        let pad = k / 2;
        let mut out = vec![0.0; n * c * h * wd];
        for b in 0..n {
            let mut avg = vec![0.0; c];
            let mut max = vec![f64::NEG_INFINITY; c];
            for ch in 0..c {
                for y in 0..h {
                    for xx in 0..wd {
                        let v = x.get(b, ch, y, xx) as f64;
                        avg[ch] += v / (h * wd) as f64;
                        max[ch] = max[ch].max(v);
                    }
                }
            }
            let (ma, mm) = (mlp(w, &avg), mlp(w, &max));
            let gate: Vec<f64> = (0..c).map(|ch| sig(ma[ch] + mm[ch])).collect();
            let y1 = |ch: usize, y: usize, xx: usize| x.get(b, ch, y, xx) as f64 * gate[ch];
            let mut pooled = vec![[0.0f64; 2]; h * wd];
            for y in 0..h {
                for xx in 0..wd {
                    let mut s = 0.0;
                    let mut m = f64::NEG_INFINITY;
                    for ch in 0..c {
                        s += y1(ch, y, xx);
                        m = m.max(y1(ch, y, xx));
                    }
                    pooled[y * wd + xx] = [s / c as f64, m];
                }
            }
            for y in 0..h as isize {
                for xx in 0..wd as isize {
                    let mut s = w.conv_b as f64;
                    for m in 0..2 {
                        for ky in 0..k {
                            for kx in 0..k {
                                let (iy, ix) = (y + ky - pad, xx + kx - pad);
                                if iy >= 0 && ix >= 0 && iy < h as isize && ix < wd as isize {
                                    let wt = w.conv_w[(m * w.kernel + ky as usize) * w.kernel + kx as usize];
                                    s += wt as f64 * pooled[iy as usize * wd + ix as usize][m];
                                }
                            }
                        }
                    }
                    let g = sig(s);
                    for ch in 0..c {
                        let (yu, xu) = (y as usize, xx as usize);
                        out[((b * c + ch) * h + yu) * wd + xu] = y1(ch, yu, xu) * g;
                    }
                }
            }
        }
        Ok(out)
    }
}
