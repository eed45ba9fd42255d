//! Checkpoint format.
//!
//! A UTF-8 header of newline-terminated lines followed by the raw parameter
//! store:
//!
//! ```text
//! orlab-model 1
//! dtype f64
//! classes 10
//! seed 42
//! layers 2
//! dense 784 128 relu
//! conv2d <in> <out> <height> <width> <kernel> <activation>
//! params 100618
//! end
//! <params: little-endian dtype values, layer by layer, row-major>
//! ```
//!
//! Round trips are bit-exact.

use std::fs;
use std::path::Path;

use super::{Activation, LayerSpec, Model, NnError, Real};

const MAGIC: &str = "orlab-model 1";

pub fn write_checkpoint<T: Real>(model: &Model<T>) -> Vec<u8> {
    let mut header = format!(
        "{MAGIC}\ndtype {}\nclasses {}\nseed {}\nlayers {}\n",
        T::DTYPE,
        model.num_classes(),
        model.seed(),
        model.layers().len()
    );
    for layer in model.layers() {
        match *layer {
            LayerSpec::Dense { inputs, outputs, activation } => {
                header.push_str(&format!("dense {inputs} {outputs} {}\n", activation.name()));
            }
            LayerSpec::Conv2d { channels_in, channels_out, height, width, kernel, activation } => {
                header.push_str(&format!(
                    "conv2d {channels_in} {channels_out} {height} {width} {kernel} {}\n",
                    activation.name()
                ));
            }
        }
    }
    header.push_str(&format!("params {}\nend\n", model.params().len()));
    let mut out = header.into_bytes();
    out.reserve(model.params().len() * T::BYTES);
    for &p in model.params() {
        p.write_le(&mut out);
    }
    out
}

fn bad(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

fn parse_activation(s: &str) -> Result<Activation, NnError> {
    match s {
        "relu" => Ok(Activation::Relu),
        "identity" => Ok(Activation::Identity),
        other => Err(bad(format!("unknown activation {other:?}"))),
    }
}

fn parse_usize(s: Option<&str>, what: &str) -> Result<usize, NnError> {
    s.ok_or_else(|| bad(format!("missing {what}")))?.parse().map_err(|_| bad(format!("bad {what}")))
}

pub fn read_checkpoint<T: Real>(bytes: &[u8]) -> Result<Model<T>, NnError> {
    let mut pos = 0;
    let mut next_line = || -> Result<String, NnError> {
        let rest = &bytes[pos..];
        let end = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
        pos += end + 1;
        String::from_utf8(rest[..end].to_vec()).map_err(|_| bad("header is not UTF-8"))
    };
    if next_line()? != MAGIC {
        return Err(bad("missing magic line"));
    }
    let kv = |line: String, key: &str| -> Result<String, NnError> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(format!("expected `{key}`")))
    };
    let dtype = kv(next_line()?, "dtype")?;
    if dtype != T::DTYPE {
        return Err(bad(format!("checkpoint holds {dtype}, requested {}", T::DTYPE)));
    }
    let classes = parse_usize(Some(&kv(next_line()?, "classes")?), "classes")?;
    let seed: u64 = kv(next_line()?, "seed")?.parse().map_err(|_| bad("bad seed"))?;
    let n_layers = parse_usize(Some(&kv(next_line()?, "layers")?), "layer count")?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let line = next_line()?;
        let mut it = line.split_whitespace();
        let layer = match it.next() {
            Some("dense") => LayerSpec::Dense {
                inputs: parse_usize(it.next(), "dense inputs")?,
                outputs: parse_usize(it.next(), "dense outputs")?,
                activation: parse_activation(it.next().unwrap_or(""))?,
            },
            Some("conv2d") => LayerSpec::Conv2d {
                channels_in: parse_usize(it.next(), "conv channels_in")?,
                channels_out: parse_usize(it.next(), "conv channels_out")?,
                height: parse_usize(it.next(), "conv height")?,
                width: parse_usize(it.next(), "conv width")?,
                kernel: parse_usize(it.next(), "conv kernel")?,
                activation: parse_activation(it.next().unwrap_or(""))?,
            },
            other => return Err(bad(format!("unknown layer kind {other:?}"))),
        };
        layers.push(layer);
    }
    let n_params = parse_usize(Some(&kv(next_line()?, "params")?), "parameter count")?;
    if next_line()? != "end" {
        return Err(bad("missing `end` line"));
    }
    let body = &bytes[pos..];
    if body.len() != n_params * T::BYTES {
        return Err(bad(format!("expected {} parameter bytes, found {}", n_params * T::BYTES, body.len())));
    }
    let params = body.chunks_exact(T::BYTES).map(T::read_le).collect();
    Model::from_parts(layers, classes, seed, params)
}

pub fn save_checkpoint<T: Real>(model: &Model<T>, path: impl AsRef<Path>) -> Result<(), NnError> {
    fs::write(path, write_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Model<T>, NnError> {
    read_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn round_trip_with_conv_and_f32() {
        let layers = vec![
            LayerSpec::Conv2d {
                channels_in: 1,
                channels_out: 2,
                height: 4,
                width: 4,
                kernel: 3,
                activation: Activation::Relu,
            },
            LayerSpec::dense(8, 3, Activation::Identity),
        ];
        let m: Model<f32> = Model::init(layers, 3, 77).unwrap();
        let back: Model<f32> = read_checkpoint(&write_checkpoint(&m)).unwrap();
        assert_eq!(m, back);
        assert!(read_checkpoint::<f64>(&write_checkpoint(&m)).is_err());
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let m: Model = Model::mlp(&[3, 4, 2], 1).unwrap();
        let bytes = write_checkpoint(&m);
        assert!(read_checkpoint::<f64>(&bytes[..bytes.len() - 1]).is_err());
        assert!(read_checkpoint::<f64>(b"nonsense\n").is_err());
        assert!(read_checkpoint::<f64>(b"").is_err());
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(seed in any::<u64>(), hidden in 1usize..12, scale in -1e300f64..1e300) {
            let mut m: Model = Model::mlp(&[3, hidden, 2], seed).unwrap();
            m.params_mut()[0] = scale;
            m.params_mut()[1] = -0.0;
            let back: Model = read_checkpoint(&write_checkpoint(&m)).unwrap();
            prop_assert_eq!(back.params().len(), m.params().len());
            for (a, b) in m.params().iter().zip(back.params()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back.seed(), seed);
        }
    }
}
