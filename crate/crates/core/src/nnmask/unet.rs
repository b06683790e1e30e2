//! Compact U-Net with an identity output activation.
//!
//! Encoder level `l`: two 3x3 convs (zero padding 1) to `B * 2^l` channels with
//! ReLU, then 2x2 max-pool. Bottleneck: the same double conv at `B * 2^L`.
//! Decoder level `l`: nearest 2x upsample, 3x3 conv to `B * 2^l` with ReLU,
//! concatenate `[skip, up]`, double conv. Head: 1x1 conv, no activation.
//! Depth 0 is the head alone.

use ndarray::{s, Array3, ArrayView3, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::FilterMode;
use crate::error::{Error, Result};

use super::weights::WeightBundle;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Descriptor {
    /// Number of virtual microphones.
    pub v: usize,
    pub mode: FilterMode,
    pub depth: usize,
    pub base_channels: usize,
}

impl Descriptor {
    pub fn validate(&self) -> Result<()> {
        if self.v == 0 {
            return Err(Error::CorruptWeights("descriptor has v = 0".into()));
        }
        if self.depth > 0 && self.base_channels == 0 {
            return Err(Error::CorruptWeights(
                "descriptor has base_channels = 0".into(),
            ));
        }
        if self.depth > 8 {
            return Err(Error::CorruptWeights(format!(
                "depth {} is unreasonably deep",
                self.depth
            )));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        2 * self.v
    }

    pub fn out_channels(&self) -> usize {
        2 * self.mode.entries_per_tile(self.v)
    }

    fn width(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// Tensor names and shapes in canonical order.
pub fn expected_tensors(d: &Descriptor) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut conv = |name: String, o: usize, i: usize, k: usize| {
        out.push((format!("{name}.weight"), vec![o, i, k, k]));
        out.push((format!("{name}.bias"), vec![o]));
    };
    let mut prev = d.in_channels();
    if d.depth > 0 {
        for l in 0..d.depth {
            conv(format!("enc{l}.conv1"), d.width(l), prev, 3);
            conv(format!("enc{l}.conv2"), d.width(l), d.width(l), 3);
            prev = d.width(l);
        }
        conv("bottleneck.conv1".into(), d.width(d.depth), prev, 3);
        conv(
            "bottleneck.conv2".into(),
            d.width(d.depth),
            d.width(d.depth),
            3,
        );
        for l in (0..d.depth).rev() {
            conv(format!("dec{l}.up"), d.width(l), d.width(l + 1), 3);
            conv(format!("dec{l}.conv1"), d.width(l), 2 * d.width(l), 3);
            conv(format!("dec{l}.conv2"), d.width(l), d.width(l), 3);
        }
        prev = d.width(0);
    }
    conv("head".into(), d.out_channels(), prev, 1);
    out
}

/// Same-size convolution (odd kernel, zero padding) of a `[C, H, W]` grid.
fn conv2d(
    x: ArrayView3<f32>,
    bundle: &WeightBundle,
    name: &str,
    relu: bool,
) -> Result<Array3<f32>> {
    let w = bundle.tensor(&format!("{name}.weight"))?;
    let b = bundle.tensor(&format!("{name}.bias"))?;
    let (cin, h, wd) = x.dim();
    let (cout, k) = (w.shape[0], w.shape[2]);
    if w.shape[1] != cin {
        return Err(Error::CorruptWeights(format!(
            "tensor {name}.weight expects {} input channels, got {cin}",
            w.shape[1]
        )));
    }
    let pad = k / 2;
    let planes: Vec<Vec<f32>> = (0..cout)
        .into_par_iter()
        .map(|o| {
            let mut acc = vec![b.data[o] as f64; h * wd];
            for c in 0..cin {
                let plane = x.index_axis(Axis(0), c);
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = w.data[((o * cin + c) * k + ky) * k + kx] as f64;
                        if wv == 0.0 {
                            continue;
                        }
                        // output (i, j) reads input (i + ky - pad, j + kx - pad)
                        let i0 = pad.saturating_sub(ky);
                        let i1 = (h + pad).saturating_sub(ky).min(h);
                        let j0 = pad.saturating_sub(kx);
                        let j1 = (wd + pad).saturating_sub(kx).min(wd);
                        for i in i0..i1 {
                            let row = plane.row(i + ky - pad);
                            let dst = &mut acc[i * wd..(i + 1) * wd];
                            for j in j0..j1 {
                                dst[j] += wv * row[j + kx - pad] as f64;
                            }
                        }
                    }
                }
            }
            acc.into_iter()
                .map(|v| {
                    let v = v as f32;
                    if relu {
                        v.max(0.0)
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect();
    let flat: Vec<f32> = planes.into_iter().flatten().collect();
    Ok(Array3::from_shape_vec((cout, h, wd), flat).expect("conv output shape"))
}

fn double_conv(x: ArrayView3<f32>, bundle: &WeightBundle, prefix: &str) -> Result<Array3<f32>> {
    let y = conv2d(x, bundle, &format!("{prefix}.conv1"), true)?;
    conv2d(y.view(), bundle, &format!("{prefix}.conv2"), true)
}

fn max_pool2(x: &Array3<f32>) -> Array3<f32> {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, h / 2, w / 2), |(k, i, j)| {
        x[[k, 2 * i, 2 * j]]
            .max(x[[k, 2 * i + 1, 2 * j]])
            .max(x[[k, 2 * i, 2 * j + 1]])
            .max(x[[k, 2 * i + 1, 2 * j + 1]])
    })
}

fn upsample2(x: &Array3<f32>) -> Array3<f32> {
    let (c, h, w) = x.dim();
    Array3::from_shape_fn((c, 2 * h, 2 * w), |(k, i, j)| x[[k, i / 2, j / 2]])
}

/// Run the network on a `[2V, F, T]` grid whose spatial dims are multiples of
/// `2^depth`. Returns `[C_out, F, T]`.
pub fn unet_forward(bundle: &WeightBundle, x: ArrayView3<f32>) -> Result<Array3<f32>> {
    let d = bundle.descriptor();
    let (c, h, w) = x.dim();
    if c != d.in_channels() {
        return Err(Error::invalid(format!(
            "network expects {} input channels, got {c}",
            d.in_channels()
        )));
    }
    let m = 1usize << d.depth;
    if h % m != 0 || w % m != 0 || h == 0 || w == 0 {
        return Err(Error::invalid(format!(
            "grid {h}x{w} is not a nonzero multiple of {m}"
        )));
    }
    let mut skips = Vec::with_capacity(d.depth);
    let mut cur = x.to_owned();
    if d.depth > 0 {
        for l in 0..d.depth {
            let y = double_conv(cur.view(), bundle, &format!("enc{l}"))?;
            cur = max_pool2(&y);
            skips.push(y);
        }
        cur = double_conv(cur.view(), bundle, "bottleneck")?;
        for l in (0..d.depth).rev() {
            let up = conv2d(upsample2(&cur).view(), bundle, &format!("dec{l}.up"), true)?;
            let skip = &skips[l];
            let (cs, cu) = (skip.dim().0, up.dim().0);
            let mut cat = Array3::<f32>::zeros((cs + cu, skip.dim().1, skip.dim().2));
            cat.slice_mut(s![..cs, .., ..]).assign(skip);
            cat.slice_mut(s![cs.., .., ..]).assign(&up);
            cur = double_conv(cat.view(), bundle, &format!("dec{l}"))?;
        }
    }
    conv2d(cur.view(), bundle, "head", false)
}
