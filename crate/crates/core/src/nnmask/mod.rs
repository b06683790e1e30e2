//! Neural mask predictor: features from virtual microphones, a U-Net forward
//! pass, and reshaping of the predicted masks into filters.

mod unet;
mod weights;

use ndarray::Array3;
use num_complex::Complex64;

use crate::codec::{FilterField, FilterMode};
use crate::error::{Error, Result};
use crate::signal::Spectrogram;

pub use unet::{expected_tensors, unet_forward, Descriptor};
pub use weights::{
    load_fixture, load_weights, save_fixture, save_weights, ParityFixture, Tensor, WeightBundle,
    FIXTURE_INPUT, FIXTURE_OUTPUT, MAGIC, VERSION,
};

/// Floor of the RMS used for input scaling.
pub const MIN_FEATURE_RMS: f64 = 1e-8;

/// Network input: interleaved real/imaginary virtual-mic planes on a grid
/// cropped in frequency and zero-padded in time to multiples of `2^depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    /// `[2V, F', T']`; channel `2i` is Re(v_i), `2i+1` is Im(v_i).
    pub data: Array3<f32>,
    pub orig_bins: usize,
    pub orig_frames: usize,
    /// Scale applied to the virtual mics.
    pub gain: f64,
}

pub fn features_from_vmics(vmics: &Spectrogram, depth: usize) -> Result<FeatureTensor> {
    let m = 1usize << depth;
    let (v, bins, frames) = (vmics.num_channels(), vmics.num_bins(), vmics.num_frames());
    if bins < m {
        return Err(Error::invalid(format!(
            "{bins} bins cannot hold a depth-{depth} network"
        )));
    }
    if frames == 0 {
        return Err(Error::invalid("spectrogram has no frames"));
    }
    let fc = bins / m * m;
    let tp = frames.div_ceil(m) * m;
    let data = vmics.data();
    let ms = data.iter().map(|z| z.norm_sqr()).sum::<f64>() / data.len() as f64;
    let gain = 1.0 / ms.sqrt().max(MIN_FEATURE_RMS);
    let mut out = Array3::<f32>::zeros((2 * v, fc, tp));
    for i in 0..v {
        for k in 0..fc {
            for n in 0..frames {
                let z = data[[i, k, n]] * gain;
                out[[2 * i, k, n]] = z.re as f32;
                out[[2 * i + 1, k, n]] = z.im as f32;
            }
        }
    }
    Ok(FeatureTensor {
        data: out,
        orig_bins: bins,
        orig_frames: frames,
        gain,
    })
}

/// Reshape network output `[C_out, F', T']` into a filter field on the
/// original grid. Filter entry `e` of a tile reads channels `2e` (real) and
/// `2e+1` (imaginary); full-mode entries are row-major. Padded frames are
/// dropped and cropped top bins get identity filters.
///
/// The masks are applied to the unscaled virtual mics: a network fitted to
/// scaled inputs predicts dimensionless filters, so the feature gain needs no
/// compensation here.
pub fn masks_to_filters(
    masks: &Array3<f32>,
    mode: FilterMode,
    v: usize,
    orig_bins: usize,
    orig_frames: usize,
) -> Result<FilterField> {
    let per = mode.entries_per_tile(v);
    let (c, fc, tp) = masks.dim();
    if c != 2 * per {
        return Err(Error::invalid(format!(
            "{c} mask channels, expected {} for {mode:?} with V={v}",
            2 * per
        )));
    }
    if fc > orig_bins || tp < orig_frames {
        return Err(Error::invalid(format!(
            "mask grid {fc}x{tp} does not cover {orig_bins}x{orig_frames}"
        )));
    }
    let mut field = FilterField::identity(mode, v, orig_frames, orig_bins);
    for n in 0..orig_frames {
        for k in 0..fc {
            let tile = field.tile_mut(n, k);
            for (e, z) in tile.iter_mut().enumerate() {
                *z = Complex64::new(masks[[2 * e, k, n]] as f64, masks[[2 * e + 1, k, n]] as f64);
            }
        }
    }
    Ok(field)
}

/// Inverse of [`masks_to_filters`] on the kept region (padded frames are zero).
pub fn filters_to_masks(field: &FilterField, depth: usize) -> Array3<f32> {
    let m = 1usize << depth;
    let per = field.mode().entries_per_tile(field.v());
    let fc = field.num_bins() / m * m;
    let tp = field.num_frames().div_ceil(m) * m;
    let mut out = Array3::<f32>::zeros((2 * per, fc, tp));
    for n in 0..field.num_frames() {
        for k in 0..fc {
            for (e, z) in field.tile(n, k).iter().enumerate() {
                out[[2 * e, k, n]] = z.re as f32;
                out[[2 * e + 1, k, n]] = z.im as f32;
            }
        }
    }
    out
}

/// Features, forward pass and reshaping in one call.
pub fn predict_filters(bundle: &WeightBundle, vmics: &Spectrogram) -> Result<FilterField> {
    let d = bundle.descriptor();
    if vmics.num_channels() != d.v {
        return Err(Error::Config(format!(
            "weights are for {} virtual mics, input has {}",
            d.v,
            vmics.num_channels()
        )));
    }
    let feats = features_from_vmics(vmics, d.depth)?;
    let masks = unet_forward(bundle, feats.data.view())?;
    masks_to_filters(&masks, d.mode, d.v, feats.orig_bins, feats.orig_frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{apply_filter, cardioid_fan_decoder, identity_decoder};
    use crate::geometry::Direction;

    fn spec(
        v: usize,
        bins: usize,
        frames: usize,
        f: impl Fn(usize, usize, usize) -> Complex64,
    ) -> Spectrogram {
        let data = Array3::from_shape_fn((v, bins, frames), |(i, k, n)| f(i, k, n));
        Spectrogram::new(
            data,
            16000,
            2 * (bins - 1),
            bins - 1,
            (frames - 1) * (bins - 1),
        )
        .unwrap()
    }

    fn zero_bundle(d: Descriptor) -> WeightBundle {
        let ts = expected_tensors(&d)
            .into_iter()
            .map(|(n, s)| {
                let len = s.iter().product();
                Tensor::new(n, s, vec![0.0; len]).unwrap()
            })
            .collect();
        WeightBundle::new(d, ts).unwrap()
    }

    #[test]
    fn feature_shape_crop_and_pad() {
        let s = spec(2, 513, 100, |_, _, _| Complex64::new(1.0, 0.0));
        let f = features_from_vmics(&s, 3).unwrap();
        assert_eq!(f.data.dim(), (4, 512, 104));
        assert_eq!((f.orig_bins, f.orig_frames), (513, 100));
        assert!(f
            .data
            .slice(ndarray::s![.., .., 100..])
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn zero_input_uses_floor() {
        let s = spec(2, 9, 4, |_, _, _| Complex64::default());
        let f = features_from_vmics(&s, 1).unwrap();
        assert_eq!(f.gain, 1e8);
        assert!(f.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn interleave_layout() {
        let s = spec(2, 9, 4, |i, _, _| {
            if i == 0 {
                Complex64::new(1.0, 2.0)
            } else {
                Complex64::default()
            }
        });
        let f = features_from_vmics(&s, 1).unwrap();
        let g = f.gain as f32;
        assert_eq!(f.data[[0, 3, 2]], g);
        assert_eq!(f.data[[1, 3, 2]], 2.0 * g);
        assert_eq!(f.data[[2, 3, 2]], 0.0);
    }

    #[test]
    fn too_few_bins() {
        let s = spec(2, 5, 4, |_, _, _| Complex64::default());
        assert!(features_from_vmics(&s, 3).is_err());
    }

    #[test]
    fn diag_identity_masks() {
        let mut m = Array3::<f32>::zeros((4, 8, 4));
        m.slice_mut(ndarray::s![0, .., ..]).fill(1.0);
        m.slice_mut(ndarray::s![2, .., ..]).fill(1.0);
        let f = masks_to_filters(&m, FilterMode::Diag, 2, 9, 3).unwrap();
        assert_eq!(f, FilterField::identity(FilterMode::Diag, 2, 3, 9));
    }

    #[test]
    fn full_swap_masks() {
        let mut m = Array3::<f32>::zeros((8, 4, 2));
        // entries (0,1) and (1,0) are real 1
        m.slice_mut(ndarray::s![2, .., ..]).fill(1.0);
        m.slice_mut(ndarray::s![4, .., ..]).fill(1.0);
        let f = masks_to_filters(&m, FilterMode::Full, 2, 4, 2).unwrap();
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::default();
        for n in 0..2 {
            for k in 0..4 {
                assert_eq!(f.tile(n, k), &[zero, one, one, zero]);
            }
        }
        assert!(masks_to_filters(&m, FilterMode::Diag, 2, 4, 2).is_err());
    }

    #[test]
    fn filters_masks_round_trip() {
        let mut field = FilterField::zeros(FilterMode::Full, 2, 5, 9);
        for n in 0..5 {
            for k in 0..9 {
                for (e, z) in field.tile_mut(n, k).iter_mut().enumerate() {
                    *z = Complex64::new((n * 3 + k) as f64 * 0.25, e as f64 - 1.5);
                }
            }
        }
        let masks = filters_to_masks(&field, 3);
        assert_eq!(masks.dim(), (8, 8, 8));
        let back = masks_to_filters(&masks, FilterMode::Full, 2, 9, 5).unwrap();
        for n in 0..5 {
            for k in 0..8 {
                assert_eq!(back.tile(n, k), field.tile(n, k));
            }
            assert_eq!(
                back.tile(n, 8),
                FilterField::identity(FilterMode::Full, 2, 1, 1).tile(0, 0)
            );
        }
    }

    #[test]
    fn constant_identity_bundle_decodes_dv() {
        // zero weights, head bias encodes M = I: the chain reduces to D v
        for depth in [0, 2] {
            let d = Descriptor {
                v: 3,
                mode: FilterMode::Diag,
                depth,
                base_channels: 2,
            };
            let mut b = zero_bundle(d);
            let bias = b.tensor_mut("head.bias").unwrap();
            for i in 0..3 {
                bias.data[2 * i] = 1.0;
            }
            let vm = spec(3, 17, 7, |i, k, n| {
                Complex64::new((i + k) as f64, n as f64 - 2.0)
            });
            let fld = predict_filters(&b, &vm).unwrap();
            let dirs: Vec<Direction> = [0.0, 180.0, 90.0, 270.0]
                .iter()
                .map(|&a| Direction::from_azimuth(a).unwrap())
                .collect();
            let dec = cardioid_fan_decoder(&dirs).unwrap();
            let y = apply_filter(&dec, &fld, &vm).unwrap();
            for q in 0..4 {
                for k in 0..17 {
                    for n in 0..7 {
                        let v: Vec<Complex64> = (0..3).map(|i| vm.data()[[i, k, n]]).collect();
                        assert!((y.data()[[q, k, n]] - dec.decode(&v)[q]).norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn identity_head_returns_scaled_input() {
        // depth-0 head mapping features to themselves: masks equal g * v
        let d = Descriptor {
            v: 2,
            mode: FilterMode::Diag,
            depth: 0,
            base_channels: 0,
        };
        let mut b = zero_bundle(d);
        let w = b.tensor_mut("head.weight").unwrap();
        for i in 0..4 {
            w.data[i * 4 + i] = 1.0;
        }
        let vm = spec(2, 9, 3, |i, k, n| {
            Complex64::new(i as f64 + 0.5, (k * n) as f64 * 0.1)
        });
        let g = features_from_vmics(&vm, 0).unwrap().gain;
        let fld = predict_filters(&b, &vm).unwrap();
        for n in 0..3 {
            for k in 0..9 {
                for i in 0..2 {
                    let want = vm.data()[[i, k, n]] * g;
                    assert!((fld.tile(n, k)[i] - want).norm() < 1e-5 * want.norm().max(1.0));
                }
            }
        }
        let dec = identity_decoder(2).unwrap();
        let y = apply_filter(&dec, &fld, &vm).unwrap();
        assert_eq!(y.num_bins(), 9);
        assert_eq!(y.num_frames(), 3);
    }

    #[test]
    fn end_to_end_shape() {
        let d = Descriptor {
            v: 2,
            mode: FilterMode::Full,
            depth: 2,
            base_channels: 2,
        };
        let b = WeightBundle::random(d, 3).unwrap();
        let vm = spec(2, 33, 10, |i, k, n| {
            Complex64::new((i + k) as f64, n as f64)
        });
        let fld = predict_filters(&b, &vm).unwrap();
        let y = apply_filter(&identity_decoder(2).unwrap(), &fld, &vm).unwrap();
        assert_eq!(
            (y.num_channels(), y.num_bins(), y.num_frames()),
            (2, 33, 10)
        );
        let wrong = spec(3, 33, 10, |_, _, _| Complex64::default());
        assert!(matches!(predict_filters(&b, &wrong), Err(Error::Config(_))));
    }
}
