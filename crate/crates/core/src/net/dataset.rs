//! MNIST IDX and CIFAR-10 binary readers.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fixed::QTensor;
use crate::net::model::NetworkModel;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_SHAPE: [usize; 3] = [3, 32, 32];

/// Undecoded images: raw bytes per image in `[c, h, w]` order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImages {
    pub shape: [usize; 3],
    pub pixels: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

impl RawImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Keep the images at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> RawImages {
        RawImages {
            shape: self.shape,
            pixels: indices.iter().map(|&i| self.pixels[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn take(&self, n: usize) -> RawImages {
        let n = n.min(self.len());
        RawImages {
            shape: self.shape,
            pixels: self.pixels[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }

    /// Preprocess and quantize every image for `model`.
    pub fn prepare(&self, model: &NetworkModel) -> Result<Vec<LabeledImage>> {
        if self.shape != model.input_shape {
            return Err(Error::ShapeMismatch {
                context: "dataset image shape vs model input".into(),
                expected: model.input_shape.to_vec(),
                got: self.shape.to_vec(),
            });
        }
        self.pixels
            .iter()
            .zip(&self.labels)
            .map(|(p, &label)| {
                Ok(LabeledImage {
                    pixels: model.prepare_pixels(p)?,
                    label: label as usize,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledImage {
    pub pixels: QTensor,
    pub label: usize,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: (offset + 4) as u64,
            found: bytes.len() as u64,
        })
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: expected as u64,
            found: bytes.len() as u64,
        });
    }
    Ok(())
}

/// Read an IDX image file and its matching label file.
pub fn load_mnist(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<RawImages> {
    let (ipath, lpath) = (images.as_ref(), labels.as_ref());
    let ib = read(ipath)?;
    let magic = be_u32(&ib, 0, ipath)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            path: ipath.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            got: magic,
        });
    }
    let count = be_u32(&ib, 4, ipath)? as usize;
    let rows = be_u32(&ib, 8, ipath)? as usize;
    let cols = be_u32(&ib, 12, ipath)? as usize;
    let plane = rows * cols;
    check_len(&ib, 16 + count * plane, ipath)?;

    let lb = read(lpath)?;
    let magic = be_u32(&lb, 0, lpath)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadMagic {
            path: lpath.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            got: magic,
        });
    }
    let lcount = be_u32(&lb, 4, lpath)? as usize;
    if lcount != count {
        return Err(Error::InvalidDataset(format!(
            "{count} images but {lcount} labels"
        )));
    }
    check_len(&lb, 8 + count, lpath)?;

    Ok(RawImages {
        shape: [1, rows, cols],
        pixels: (0..count)
            .map(|i| ib[16 + i * plane..16 + (i + 1) * plane].to_vec())
            .collect(),
        labels: lb[8..8 + count].to_vec(),
    })
}

/// Read one or more CIFAR-10 binary batches, concatenated in order.
pub fn load_cifar10<P: AsRef<Path>>(batches: &[P]) -> Result<RawImages> {
    let mut out = RawImages {
        shape: CIFAR_SHAPE,
        pixels: Vec::new(),
        labels: Vec::new(),
    };
    for p in batches {
        let path = p.as_ref();
        let bytes = read(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            let records = bytes.len() / CIFAR_RECORD + 1;
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: (records * CIFAR_RECORD) as u64,
                found: bytes.len() as u64,
            });
        }
        for rec in bytes.chunks_exact(CIFAR_RECORD) {
            if rec[0] > 9 {
                return Err(Error::InvalidDataset(format!(
                    "{}: label {} out of range",
                    path.display(),
                    rec[0]
                )));
            }
            out.labels.push(rec[0]);
            out.pixels.push(rec[1..].to_vec());
        }
    }
    Ok(out)
}

/// Locate a dataset from a path: an IDX image file (labels found next to
/// it), a CIFAR-10 `.bin` batch, or a directory holding either.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<RawImages> {
    let path = path.as_ref();
    if path.is_dir() {
        for (img, lbl) in [
            ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
            ("t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte"),
            ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            ("images.idx", "labels.idx"),
        ] {
            if path.join(img).is_file() {
                return load_mnist(path.join(img), path.join(lbl));
            }
        }
        let test = path.join("test_batch.bin");
        if test.is_file() {
            return load_cifar10(&[test]);
        }
        let mut batches: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "bin"))
            .collect();
        batches.sort();
        if batches.is_empty() {
            return Err(Error::InvalidDataset(format!(
                "no MNIST or CIFAR-10 files in {}",
                path.display()
            )));
        }
        return load_cifar10(&batches);
    }
    let bytes = read(path)?;
    if be_u32(&bytes, 0, path).ok() == Some(IDX_IMAGES_MAGIC) {
        let name = path.to_string_lossy();
        let labels = if name.contains("images-idx3") {
            PathBuf::from(name.replace("images-idx3", "labels-idx1"))
        } else if name.contains("images") {
            PathBuf::from(name.replace("images", "labels"))
        } else {
            return Err(Error::InvalidDataset(format!(
                "cannot infer label file for {}",
                path.display()
            )));
        };
        return load_mnist(path, labels);
    }
    load_cifar10(&[path])
}

/// Serialize images in IDX format (image file, label file).
pub fn write_idx(images: &RawImages, image_path: &Path, label_path: &Path) -> Result<()> {
    let [c, h, w] = images.shape;
    if c != 1 {
        return Err(Error::InvalidDataset(
            "IDX holds single-channel images".into(),
        ));
    }
    let mut ib = Vec::with_capacity(16 + images.len() * h * w);
    ib.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    ib.extend_from_slice(&(images.len() as u32).to_be_bytes());
    ib.extend_from_slice(&(h as u32).to_be_bytes());
    ib.extend_from_slice(&(w as u32).to_be_bytes());
    for p in &images.pixels {
        ib.extend_from_slice(p);
    }
    let mut lb = Vec::with_capacity(8 + images.len());
    lb.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lb.extend_from_slice(&(images.len() as u32).to_be_bytes());
    lb.extend_from_slice(&images.labels);
    fs::write(image_path, ib).map_err(|e| Error::io(image_path, e))?;
    fs::write(label_path, lb).map_err(|e| Error::io(label_path, e))
}

/// Serialize `[3, 32, 32]` images as one CIFAR-10 batch.
pub fn write_cifar10(images: &RawImages, path: &Path) -> Result<()> {
    if images.shape != CIFAR_SHAPE {
        return Err(Error::InvalidDataset("CIFAR-10 images are 3x32x32".into()));
    }
    let mut out = Vec::with_capacity(images.len() * CIFAR_RECORD);
    for (p, &l) in images.pixels.iter().zip(&images.labels) {
        out.push(l);
        out.extend_from_slice(p);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
