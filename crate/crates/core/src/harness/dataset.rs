use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::error::{HarnessError, IdxError};
use crate::nn::LabeledExample;
use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Standard deviation of each synthetic blob, per feature.
pub const BLOB_STD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Idx { files: Vec<PathBuf> },
    Synthetic { spec: SynthSpec, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub num_classes: usize,
    pub dims: usize,
    pub train: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub provenance: Provenance,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, HarnessError> {
    let raw = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(|e| HarnessError::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, IdxError> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => Err(IdxError::Truncated { path: path.to_owned(), expected: offset + 4, got: bytes.len() }),
    }
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<(), IdxError> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        // report the first differing byte
        let offset = (0..4).find(|&i| bytes[i] != expected.to_be_bytes()[i]).unwrap_or(0);
        return Err(IdxError::BadMagic { path: path.to_owned(), offset, expected, found });
    }
    Ok(())
}

/// Decodes an IDX3 image file: returns `(rows * cols, pixels / 255)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, Vec<Vec<f64>>), IdxError> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let dims = rows * cols;
    let need = 16 + n * dims;
    if bytes.len() < need {
        return Err(IdxError::Truncated { path: path.to_owned(), expected: need, got: bytes.len() });
    }
    let images = bytes[16..need]
        .chunks_exact(dims.max(1))
        .take(n)
        .map(|px| px.iter().map(|&b| b as f64 / 255.0).collect())
        .collect();
    Ok((dims, images))
}

/// Decodes an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, IdxError> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let n = be_u32(bytes, 4, path)? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(IdxError::Truncated { path: path.to_owned(), expected: need, got: bytes.len() });
    }
    Ok(bytes[8..need].to_vec())
}

/// Reads a pair of IDX files (optionally gzip-compressed) into labelled
/// examples with pixels scaled to `[0, 1]`.
pub fn load_mnist_idx(
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
) -> Result<Vec<LabeledExample>, HarnessError> {
    let (ip, lp) = (image_path.as_ref(), label_path.as_ref());
    let (_, images) = parse_idx_images(&read_maybe_gz(ip)?, ip)?;
    let labels = parse_idx_labels(&read_maybe_gz(lp)?, lp)?;
    if images.len() != labels.len() {
        return Err(IdxError::CountMismatch { images: images.len(), labels: labels.len() }.into());
    }
    images
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(index, (x, label))| {
            if label > 9 {
                return Err(IdxError::BadLabel { path: lp.to_owned(), index, label }.into());
            }
            Ok(LabeledExample { x, y: label as usize })
        })
        .collect()
}

/// Encodes images (values in `[0, 1]`, rounded to bytes) as IDX3.
pub fn encode_idx_images(images: &[Vec<f64>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IDX_IMAGES_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        out.extend(img.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

impl Dataset {
    /// Loads `train-*` and `t10k-*` IDX files (plain or `.gz`) from `dir`.
    pub fn mnist(dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let dir = dir.as_ref();
        let find = |stem: &str| {
            let plain = dir.join(stem);
            let gz = dir.join(format!("{stem}.gz"));
            if plain.exists() {
                plain
            } else {
                gz
            }
        };
        let files = [
            find("train-images-idx3-ubyte"),
            find("train-labels-idx1-ubyte"),
            find("t10k-images-idx3-ubyte"),
            find("t10k-labels-idx1-ubyte"),
        ];
        let train = load_mnist_idx(&files[0], &files[1])?;
        let test = load_mnist_idx(&files[2], &files[3])?;
        let dims = train.first().map_or(0, |e| e.x.len());
        Ok(Self {
            name: "mnist".into(),
            num_classes: 10,
            dims,
            train,
            test,
            provenance: Provenance::Idx { files: files.to_vec() },
        })
    }

    /// Moves the last `n` training examples into a new split.
    pub fn split_off_validation(&mut self, n: usize) -> Vec<LabeledExample> {
        let keep = self.train.len().saturating_sub(n);
        self.train.split_off(keep)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub dims: usize,
    /// Distance between adjacent class means, in units of [`BLOB_STD`].
    pub separation: f64,
    /// Training examples.
    pub n: usize,
    /// Test examples; defaults to `n / 4`.
    #[serde(default)]
    pub n_test: Option<usize>,
}

/// Class means on a circle in the first two coordinates (other coordinates
/// at 0.5), adjacent means `separation * BLOB_STD` apart.
pub fn blob_means(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let c = spec.classes as f64;
    let chord = spec.separation * BLOB_STD;
    let radius = if spec.classes == 2 { chord / 2.0 } else { chord / (2.0 * (std::f64::consts::PI / c).sin()) };
    (0..spec.classes)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / c;
            let mut m = vec![0.5; spec.dims];
            m[0] += radius * angle.cos();
            if spec.dims > 1 {
                m[1] += radius * angle.sin();
            }
            m
        })
        .collect()
}

/// Gaussian blobs clipped to `[0, 1]^dims` with uniformly drawn labels.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset, HarnessError> {
    if spec.classes < 2 || spec.dims == 0 || spec.n == 0 {
        return Err(HarnessError::Config("synthetic data needs classes >= 2, dims >= 1 and n >= 1".into()));
    }
    if !(spec.separation >= 0.0 && spec.separation.is_finite()) {
        return Err(HarnessError::Config("separation must be nonnegative".into()));
    }
    let means = blob_means(spec);
    let make = |count: usize, split: u64| {
        let mut r = rng::stream(seed, &[rng::tags::SYNTH, split]);
        (0..count)
            .map(|_| {
                let y = r.random_range(0..spec.classes);
                let x = means[y]
                    .iter()
                    .map(|&m| (m + BLOB_STD * r.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0))
                    .collect();
                LabeledExample { x, y }
            })
            .collect::<Vec<_>>()
    };
    let n_test = spec.n_test.unwrap_or(spec.n.div_ceil(4));
    Ok(Dataset {
        name: format!("blobs-{}x{}", spec.classes, spec.dims),
        num_classes: spec.classes,
        dims: spec.dims,
        train: make(spec.n, 0),
        test: make(n_test, 1),
        provenance: Provenance::Synthetic { spec: spec.clone(), seed },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let images = vec![vec![0.0, 1.0, 0.5, 0.2], vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]];
        let ip = write(dir.path(), "img", &encode_idx_images(&images, 2, 2));
        let lp = write(dir.path(), "lbl", &encode_idx_labels(&[7, 2, 1]));
        let ex = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!(ex.len(), 3);
        assert_eq!(ex[0].y, 7);
        assert_eq!(ex[0].x, vec![0.0, 1.0, 128.0 / 255.0, 51.0 / 255.0]);
        assert!(ex.iter().all(|e| e.x.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn idx_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let good = encode_idx_images(&vec![vec![0.0; 4]; 2], 2, 2);
        let lp = write(dir.path(), "lbl", &encode_idx_labels(&[1, 2]));

        let mut bad = good.clone();
        bad[3] = 0x01;
        let ip = write(dir.path(), "magic", &bad);
        match load_mnist_idx(&ip, &lp) {
            Err(HarnessError::Idx(IdxError::BadMagic { offset: 3, found: 0x0801, .. })) => {}
            other => panic!("{other:?}"),
        }
        let ip = write(dir.path(), "short", &good[..good.len() - 1]);
        assert!(matches!(
            load_mnist_idx(&ip, &lp),
            Err(HarnessError::Idx(IdxError::Truncated { expected: 24, got: 23, .. }))
        ));
        let ip = write(dir.path(), "tiny", &good[..6]);
        assert!(matches!(load_mnist_idx(&ip, &lp), Err(HarnessError::Idx(IdxError::Truncated { .. }))));
        let ip = write(dir.path(), "img", &good);
        let lp3 = write(dir.path(), "lbl3", &encode_idx_labels(&[1, 2, 3]));
        assert!(matches!(
            load_mnist_idx(&ip, &lp3),
            Err(HarnessError::Idx(IdxError::CountMismatch { images: 2, labels: 3 }))
        ));
        assert!(matches!(load_mnist_idx(dir.path().join("missing"), &lp), Err(HarnessError::Io { .. })));
    }

    #[test]
    fn reads_gzip() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let gz = |bytes: &[u8]| {
            let mut e = GzEncoder::new(Vec::new(), flate2::Compression::default());
            e.write_all(bytes).unwrap();
            e.finish().unwrap()
        };
        let ip = write(dir.path(), "i.gz", &gz(&encode_idx_images(&[vec![1.0; 9]], 3, 3)));
        let lp = write(dir.path(), "l.gz", &gz(&encode_idx_labels(&[4])));
        let ex = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!((ex[0].y, ex[0].x.len()), (4, 9));
    }

    fn spec(separation: f64) -> SynthSpec {
        SynthSpec { classes: 3, dims: 2, separation, n: 600, n_test: None }
    }

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let a = synth_dataset(&spec(5.0), 4).unwrap();
        let b = synth_dataset(&spec(5.0), 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, synth_dataset(&spec(5.0), 5).unwrap().train);
        assert_eq!(a.test.len(), 150);
        assert!(a.train.iter().chain(&a.test).all(|e| e.y < 3 && e.x.iter().all(|v| (0.0..=1.0).contains(v))));
        assert!(synth_dataset(&SynthSpec { classes: 1, ..spec(1.0) }, 0).is_err());
    }

    #[test]
    fn zero_separation_means_coincide() {
        let m = blob_means(&spec(0.0));
        assert!(m.iter().all(|v| v == &m[0]));
        let m = blob_means(&spec(5.0));
        let d = ((m[0][0] - m[1][0]).powi(2) + (m[0][1] - m[1][1]).powi(2)).sqrt();
        assert!((d - 0.25).abs() < 1e-12);
    }
}
