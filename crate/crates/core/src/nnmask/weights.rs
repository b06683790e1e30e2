//! DALW weight bundles.
//!
//! Layout: magic `DALW`, `u32` LE version, `u32` LE header length, UTF-8 JSON
//! header, then every tensor as row-major little-endian `f32` in table order.
//! Tensor offsets in the header are relative to the start of the data section.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

use super::unet::{expected_tensors, Descriptor};

pub const MAGIC: &[u8; 4] = b"DALW";
pub const VERSION: u32 = 1;

/// Names of the extra tensors a parity fixture carries.
pub const FIXTURE_INPUT: &str = "fixture/input";
pub const FIXTURE_OUTPUT: &str = "fixture/output";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::CorruptWeights(format!(
                "tensor {name}: shape {shape:?} does not match {} values",
                data.len()
            )));
        }
        Ok(Tensor { name, shape, data })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }
}

/// U-Net parameters plus their architecture descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    descriptor: Descriptor,
    tensors: Vec<Tensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    descriptor: Descriptor,
    tensors: Vec<TableEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fixture: Option<FixtureRef>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureRef {
    input: String,
    output: String,
}

impl WeightBundle {
    /// Validate names, shapes, order and finiteness against the descriptor.
    pub fn new(descriptor: Descriptor, tensors: Vec<Tensor>) -> Result<Self> {
        descriptor.validate()?;
        let expected = expected_tensors(&descriptor);
        for (name, shape) in &expected {
            let Some(t) = tensors.iter().find(|t| &t.name == name) else {
                return Err(Error::CorruptWeights(format!("missing tensor {name}")));
            };
            if &t.shape != shape {
                return Err(Error::CorruptWeights(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            if t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::CorruptWeights(format!(
                    "tensor {name} has wrong length"
                )));
            }
            if let Some(i) = t.data.iter().position(|x| !x.is_finite()) {
                return Err(Error::CorruptWeights(format!(
                    "tensor {name} has a non-finite value at {i}"
                )));
            }
        }
        if let Some(t) = tensors
            .iter()
            .find(|t| !expected.iter().any(|(n, _)| n == &t.name))
        {
            return Err(Error::CorruptWeights(format!(
                "unexpected tensor {}",
                t.name
            )));
        }
        if tensors.len() != expected.len() {
            return Err(Error::CorruptWeights("duplicate tensor names".into()));
        }
        // keep canonical order
        let mut tensors = tensors;
        tensors.sort_by_key(|t| expected.iter().position(|(n, _)| n == &t.name));
        Ok(WeightBundle {
            descriptor,
            tensors,
        })
    }

    /// He-normal weights and zero biases from a seed.
    pub fn random(descriptor: Descriptor, seed: u64) -> Result<Self> {
        use rand_distr::{Distribution, StandardNormal};
        descriptor.validate()?;
        let mut rng = rng_from_seed(seed);
        let tensors = expected_tensors(&descriptor)
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = if name.ends_with(".bias") {
                    vec![0.0; n]
                } else {
                    let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                    let std = (2.0 / fan_in).sqrt();
                    (0..n)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            (std * z) as f32
                        })
                        .collect()
                };
                Tensor { name, shape, data }
            })
            .collect();
        WeightBundle::new(descriptor, tensors)
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.descriptor
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::CorruptWeights(format!("missing tensor {name}")))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::CorruptWeights(format!("missing tensor {name}")))
    }
}

/// A weight bundle with a reference input and output for cross-language checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityFixture {
    pub bundle: WeightBundle,
    pub input: Tensor,
    pub output: Tensor,
}

fn encode(descriptor: &Descriptor, tensors: &[&Tensor], fixture: bool) -> Result<Vec<u8>> {
    let mut offset = 0u64;
    let table = tensors
        .iter()
        .map(|t| {
            let e = TableEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset,
            };
            offset += 4 * t.numel() as u64;
            e
        })
        .collect();
    let header = Header {
        descriptor: descriptor.clone(),
        tensors: table,
        fixture: fixture.then(|| FixtureRef {
            input: FIXTURE_INPUT.into(),
            output: FIXTURE_OUTPUT.into(),
        }),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::CorruptWeights(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_weights(bundle: &WeightBundle, path: impl AsRef<Path>) -> Result<()> {
    let refs: Vec<&Tensor> = bundle.tensors.iter().collect();
    write_bytes(path.as_ref(), &encode(&bundle.descriptor, &refs, false)?)
}

pub fn save_fixture(fixture: &ParityFixture, path: impl AsRef<Path>) -> Result<()> {
    let mut refs: Vec<&Tensor> = fixture.bundle.tensors.iter().collect();
    refs.push(&fixture.input);
    refs.push(&fixture.output);
    write_bytes(
        path.as_ref(),
        &encode(&fixture.bundle.descriptor, &refs, true)?,
    )
}

fn decode(bytes: &[u8], what: &Path) -> Result<(Header, Vec<Tensor>)> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::NotAWeightFile(format!(
            "{}: bad magic",
            what.display()
        )));
    }
    if bytes.len() < 12 {
        return Err(Error::CorruptWeights(format!(
            "{}: truncated preamble",
            what.display()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::NotAWeightFile(format!(
            "{}: unsupported version {version}",
            what.display()
        )));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let data_start = 12usize
        .checked_add(hlen)
        .filter(|&s| s <= bytes.len())
        .ok_or_else(|| Error::CorruptWeights(format!("{}: truncated header", what.display())))?;
    let header: Header = serde_json::from_slice(&bytes[12..data_start])
        .map_err(|e| Error::CorruptWeights(format!("{}: header: {e}", what.display())))?;
    let data = &bytes[data_start..];
    let tensors = header
        .tensors
        .iter()
        .map(|e| {
            let n: usize = e.shape.iter().product();
            let start = e.offset as usize;
            let end = start
                .checked_add(4 * n)
                .filter(|&end| end <= data.len())
                .ok_or_else(|| {
                    Error::CorruptWeights(format!(
                        "tensor {} lies outside the data section",
                        e.name
                    ))
                })?;
            let values = data[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            Tensor::new(e.name.clone(), e.shape.clone(), values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, tensors))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Load a bundle. Fixture tensors, if present, are ignored.
pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightBundle> {
    let path = path.as_ref();
    let (header, mut tensors) = decode(&read_bytes(path)?, path)?;
    if let Some(f) = &header.fixture {
        tensors.retain(|t| t.name != f.input && t.name != f.output);
    }
    WeightBundle::new(header.descriptor, tensors)
}

pub fn load_fixture(path: impl AsRef<Path>) -> Result<ParityFixture> {
    let path = path.as_ref();
    let (header, mut tensors) = decode(&read_bytes(path)?, path)?;
    let f = header.fixture.ok_or_else(|| {
        Error::CorruptWeights(format!("{}: no fixture tensors declared", path.display()))
    })?;
    let mut take = |name: &str| {
        let i = tensors
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::CorruptWeights(format!("missing tensor {name}")))?;
        Ok::<_, Error>(tensors.remove(i))
    };
    let input = take(&f.input)?;
    let output = take(&f.output)?;
    Ok(ParityFixture {
        bundle: WeightBundle::new(header.descriptor, tensors)?,
        input,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::FilterMode;

    fn desc() -> Descriptor {
        Descriptor {
            v: 2,
            mode: FilterMode::Diag,
            depth: 2,
            base_channels: 4,
        }
    }

    #[test]
    fn save_load_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.dalw");
        let b = WeightBundle::random(desc(), 5).unwrap();
        save_weights(&b, &p).unwrap();
        let back = load_weights(&p).unwrap();
        assert_eq!(back, b);
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"DALW");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        // resave gives the same bytes
        let q = dir.path().join("w2.dalw");
        save_weights(&back, &q).unwrap();
        assert_eq!(fs::read(&q).unwrap(), bytes);
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.dalw");
        let b = WeightBundle::random(desc(), 5).unwrap();
        save_weights(&b, &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_weights(&p), Err(Error::NotAWeightFile(_))));
    }

    #[test]
    fn truncated_data_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.dalw");
        save_weights(&WeightBundle::random(desc(), 5).unwrap(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        match load_weights(&p) {
            Err(Error::CorruptWeights(m)) => assert!(m.contains("head.bias"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn descriptor_mismatch_is_corrupt() {
        let b = WeightBundle::random(desc(), 5).unwrap();
        let mut other = desc();
        other.base_channels = 8;
        match WeightBundle::new(other, b.tensors().to_vec()) {
            Err(Error::CorruptWeights(m)) => assert!(m.contains("enc0.conv1.weight"), "{m}"),
            r => panic!("{r:?}"),
        }
        let mut ts = b.tensors().to_vec();
        ts.pop();
        assert!(matches!(
            WeightBundle::new(desc(), ts),
            Err(Error::CorruptWeights(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let b = WeightBundle::random(desc(), 5).unwrap();
        let mut ts = b.tensors().to_vec();
        ts[0].data[3] = f32::NAN;
        assert!(matches!(
            WeightBundle::new(desc(), ts),
            Err(Error::CorruptWeights(_))
        ));
    }

    #[test]
    fn fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.dalw");
        let bundle = WeightBundle::random(desc(), 1).unwrap();
        let fx = ParityFixture {
            bundle: bundle.clone(),
            input: Tensor::new(FIXTURE_INPUT, vec![4, 4, 4], vec![0.5; 64]).unwrap(),
            output: Tensor::new(FIXTURE_OUTPUT, vec![4, 4, 4], vec![-1.0; 64]).unwrap(),
        };
        save_fixture(&fx, &p).unwrap();
        assert_eq!(load_fixture(&p).unwrap(), fx);
        assert_eq!(load_weights(&p).unwrap(), bundle);
        let w = dir.path().join("w.dalw");
        save_weights(&bundle, &w).unwrap();
        assert!(matches!(load_fixture(&w), Err(Error::CorruptWeights(_))));
    }
}
