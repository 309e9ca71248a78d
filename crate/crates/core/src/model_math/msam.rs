use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::error::{Error, Result};

/// Output channels of the aggregation module, matching the text embedding width.
pub const MSAM_CHANNELS: usize = 1024;

/// Downsampling factors of the four pyramid levels.
pub const PYRAMID_STRIDES: [usize; 4] = [4, 8, 16, 32];

/// Stride of the common grid the pyramid is resized to.
const FUSION_STRIDE: usize = 16;

/// Bilinear resize of every channel with corner-aligned sampling: output
/// corners land exactly on input corners.
pub fn bilinear_resize(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = x.chw()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!("cannot resize to {out_h}x{out_w}")));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(x.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = if out > 1 {
            (inp - 1) as f64 / (out - 1) as f64
        } else {
            0.0
        };
        (0..out)
            .map(|k| {
                let src = k as f64 * scale;
                let lo = (src.floor() as usize).min(inp - 1);
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let rows = taps(out_h, h);
    let cols = taps(out_w, w);
    let src = x.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(i0, i1, fy) in &rows {
            for &(j0, j1, fx) in &cols {
                let top = plane[i0 * w + j0] * (1.0 - fx) + plane[i0 * w + j1] * fx;
                let bottom = plane[i1 * w + j0] * (1.0 - fx) + plane[i1 * w + j1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// A square-kernel 2-D convolution with stride 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `(out, in, kernel, kernel)` row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weight.len() != out_channels * in_channels * kernel * kernel || bias.len() != out_channels {
            return Err(Error::Shape(format!(
                "conv {in_channels}->{out_channels} k{kernel} given {} weights and {} biases",
                weight.len(),
                bias.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            weight,
            bias,
        })
    }

    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    /// Uniform weights in `±1/sqrt(fan_in)`.
    pub fn seeded(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / ((in_channels * kernel * kernel) as f64).sqrt();
        let mut c = Self::zeros(in_channels, out_channels, kernel);
        c.weight.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        c.bias.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        c
    }

    pub fn weight_at(&self, o: usize, c: usize, ky: usize, kx: usize) -> f64 {
        self.weight[((o * self.in_channels + c) * self.kernel + ky) * self.kernel + kx]
    }

    /// Zero-padded convolution; output spatial size is `h + 2*pad - k + 1`.
    pub fn forward(&self, x: &Tensor, pad: usize) -> Result<Tensor> {
        let (c, h, w) = x.chw()?;
        if c != self.in_channels {
            return Err(Error::Shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let k = self.kernel;
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::Shape(format!("{h}x{w} input too small for a {k}x{k} kernel")));
        }
        let (oh, ow) = (h + 2 * pad - k + 1, w + 2 * pad - k + 1);
        let src = x.data();
        let mut out = vec![0.0; self.out_channels * oh * ow];
        for (o, plane) in out.chunks_exact_mut(oh * ow).enumerate() {
            plane.fill(self.bias[o]);
            for ci in 0..c {
                let input = &src[ci * h * w..(ci + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wgt = self.weight_at(o, ci, ky, kx);
                        if wgt == 0.0 {
                            continue;
                        }
                        // output column j reads input column j + kx - pad
                        let j_lo = pad.saturating_sub(kx);
                        let j_hi = (w + pad).saturating_sub(kx).min(ow);
                        if j_lo >= j_hi {
                            continue;
                        }
                        for i in 0..oh {
                            let Some(si) = (i + ky).checked_sub(pad).filter(|&si| si < h) else {
                                continue;
                            };
                            let row = &input[si * w..(si + 1) * w];
                            let dst = &mut plane[i * ow + j_lo..i * ow + j_hi];
                            let s0 = j_lo + kx - pad;
                            for (d, &s) in dst.iter_mut().zip(&row[s0..s0 + (j_hi - j_lo)]) {
                                *d += wgt * s;
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![self.out_channels, oh, ow], out)
    }
}

/// 3x3 then 1x1 convolution weights of the aggregation module.
#[derive(Debug, Clone, PartialEq)]
pub struct MsamParams {
    pub conv3: Conv2d,
    pub conv1: Conv2d,
}

impl MsamParams {
    pub fn new(conv3: Conv2d, conv1: Conv2d) -> Result<Self> {
        if conv3.kernel != 3 || conv1.kernel != 1 || conv1.in_channels != conv3.out_channels {
            return Err(Error::Shape(format!(
                "expected k3 {}->{} then k1 {}->{}, got k{} then k{}",
                conv3.in_channels,
                conv3.out_channels,
                conv3.out_channels,
                conv1.out_channels,
                conv3.kernel,
                conv1.kernel
            )));
        }
        Ok(Self { conv3, conv1 })
    }

    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            conv3: Conv2d::zeros(in_channels, out_channels, 3),
            conv1: Conv2d::zeros(out_channels, out_channels, 1),
        }
    }

    pub fn seeded(in_channels: usize, out_channels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            conv3: Conv2d::seeded(in_channels, out_channels, 3, &mut rng),
            conv1: Conv2d::seeded(out_channels, out_channels, 1, &mut rng),
        }
    }
}

fn relu_in_place(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Fuses a four-level feature pyramid (strides 4, 8, 16, 32 of one source
/// image) on the stride-16 grid: resize, concatenate channels, then
/// conv3x3 (pad 1) -> ReLU -> conv1x1 -> ReLU.
pub fn msam_forward(pyramid: &[Tensor], params: &MsamParams) -> Result<Tensor> {
    if pyramid.len() != PYRAMID_STRIDES.len() {
        return Err(Error::Shape(format!(
            "expected 4 pyramid levels, got {}",
            pyramid.len()
        )));
    }
    let (_, h0, w0) = pyramid[0].chw()?;
    let (src_h, src_w) = (h0 * PYRAMID_STRIDES[0], w0 * PYRAMID_STRIDES[0]);
    if src_h % 32 != 0 || src_w % 32 != 0 || src_h == 0 || src_w == 0 {
        return Err(Error::Shape(format!(
            "pyramid implies a {src_w}x{src_h} source, which is not a positive multiple of 32"
        )));
    }
    let (gh, gw) = (src_h / FUSION_STRIDE, src_w / FUSION_STRIDE);
    let mut channels = 0;
    let mut fused = Vec::new();
    for (level, stride) in pyramid.iter().zip(PYRAMID_STRIDES) {
        let (c, h, w) = level.chw()?;
        if (h, w) != (src_h / stride, src_w / stride) {
            return Err(Error::Shape(format!(
                "stride-{stride} level is {w}x{h}, expected {}x{}",
                src_w / stride,
                src_h / stride
            )));
        }
        channels += c;
        fused.extend_from_slice(bilinear_resize(level, gh, gw)?.data());
    }
    let fused = Tensor::new(vec![channels, gh, gw], fused)?;
    let mut hidden = params.conv3.forward(&fused, 1)?;
    relu_in_place(&mut hidden);
    let mut out = params.conv1.forward(&hidden, 0)?;
    relu_in_place(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: Vec<usize>) -> Tensor {
        Tensor::from_fn(shape, |k| (k as f64 * 0.37).sin())
    }

    #[test]
    fn resize_to_same_size_is_identity() {
        let x = ramp(vec![2, 5, 3]);
        assert_eq!(bilinear_resize(&x, 5, 3).unwrap(), x);
    }

    #[test]
    fn constant_channel_stays_constant() {
        let x = Tensor::from_fn(vec![1, 4, 6], |_| 2.5);
        let y = bilinear_resize(&x, 9, 2).unwrap();
        assert!(y.data().iter().all(|&v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn corners_are_preserved() {
        let x = ramp(vec![1, 3, 4]);
        let y = bilinear_resize(&x, 7, 10).unwrap();
        assert_eq!(y.at3(0, 0, 0), x.at3(0, 0, 0));
        assert_eq!(y.at3(0, 6, 9), x.at3(0, 2, 3));
        assert_eq!(y.at3(0, 0, 9), x.at3(0, 0, 3));
    }

    #[test]
    fn two_by_two_to_three_by_three_midpoints() {
        let x = Tensor::new(vec![1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = bilinear_resize(&x, 3, 3).unwrap();
        let expect = [0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_params_give_zero_output() {
        let pyr: Vec<_> = PYRAMID_STRIDES.iter().map(|s| ramp(vec![1, 64 / s, 64 / s])).collect();
        let out = msam_forward(&pyr, &MsamParams::zeros(4, 8)).unwrap();
        assert_eq!(out.shape(), &[8, 4, 4]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inconsistent_pyramid_rejected() {
        let mut pyr: Vec<_> = PYRAMID_STRIDES.iter().map(|s| ramp(vec![1, 64 / s, 64 / s])).collect();
        pyr[2] = ramp(vec![1, 5, 4]);
        assert!(matches!(
            msam_forward(&pyr, &MsamParams::zeros(4, 8)),
            Err(Error::Shape(_))
        ));
        assert!(msam_forward(&pyr[..3], &MsamParams::zeros(3, 8)).is_err());
        let odd: Vec<_> = [12usize, 6, 3, 1].iter().map(|&n| ramp(vec![1, n, n])).collect();
        assert!(msam_forward(&odd, &MsamParams::zeros(4, 8)).is_err());
    }

    #[test]
    fn output_is_non_negative() {
        let pyr: Vec<_> = PYRAMID_STRIDES.iter().map(|s| ramp(vec![2, 64 / s, 32 / s])).collect();
        let out = msam_forward(&pyr, &MsamParams::seeded(8, 16, 3)).unwrap();
        assert_eq!(out.shape(), &[16, 4, 2]);
        assert!(out.data().iter().all(|&v| v >= 0.0));
        assert!(out.data().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let pyr: Vec<_> = PYRAMID_STRIDES.iter().map(|s| ramp(vec![1, 64 / s, 64 / s])).collect();
        assert!(matches!(
            msam_forward(&pyr, &MsamParams::zeros(5, 8)),
            Err(Error::Shape(_))
        ));
    }
}
