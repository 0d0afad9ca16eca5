//! On-disk dataset formats: CIFAR-10 binary batches, IDX containers, and
//! the crate's own `SATD` snapshot.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CIFAR_PIXELS: usize = 3072;
pub const CIFAR_RECORD: usize = CIFAR_PIXELS + 1;
pub const CIFAR_CLASSES: usize = 10;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const SNAPSHOT_MAGIC: &[u8; 4] = b"SATD";
const SNAPSHOT_VERSION: u32 = 1;

/// Reader that remembers how many bytes it has consumed, so truncation
/// errors can name the offset.
pub(crate) struct ByteReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> ByteReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        ByteReader { inner, offset: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.offset
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        let mut filled = 0;
        while filled < n {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(Error::format(
                        self.offset + filled as u64,
                        format!("unexpected end of data, needed {} more bytes", n - filled),
                    ))
                }
                Ok(k) => filled += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += n as u64;
        Ok(buf)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let v = self.bytes(N)?;
        Ok(v.try_into().expect("length checked"))
    }

    pub(crate) fn u32_le(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u32_be(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub(crate) fn u64_le(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64_le(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub(crate) fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        loop {
            match self.inner.read(&mut probe) {
                Ok(0) => return Ok(()),
                Ok(_) => return Err(Error::format(self.offset, "trailing bytes after payload")),
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
}

/// Parses concatenated CIFAR-10 records: one label byte followed by 3072
/// channel-planar pixel bytes. Pixels are scaled to `[0, 1]`.
pub fn parse_cifar_binary(bytes: &[u8]) -> Result<LabeledDataset> {
    if bytes.is_empty() {
        return Err(Error::format(0, "empty CIFAR file"));
    }
    if bytes.len() % CIFAR_RECORD != 0 {
        let whole = bytes.len() / CIFAR_RECORD;
        return Err(Error::format(
            (whole * CIFAR_RECORD) as u64,
            format!(
                "length {} is not a multiple of the {CIFAR_RECORD}-byte record",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * CIFAR_PIXELS);
    for (r, record) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = record[0] as usize;
        if label >= CIFAR_CLASSES {
            return Err(Error::format(
                (r * CIFAR_RECORD) as u64,
                format!("label byte {label} is not a CIFAR-10 class"),
            ));
        }
        labels.push(label);
        pixels.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    LabeledDataset::new(Tensor::from_vec(&[n, CIFAR_PIXELS], pixels)?, labels, CIFAR_CLASSES)
}

pub fn load_cifar_binary(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    parse_cifar_binary(&std::fs::read(path)?)
}

/// Parses an IDX image container (magic `0x00000803`, unsigned bytes,
/// dims `n, rows, cols`) with its matching label container (magic
/// `0x00000801`). The class count is one past the largest label, at least 2.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let mut r = ByteReader::new(images);
    let magic = r.u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(0, format!("image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}")));
    }
    let n = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let d = rows * cols;
    let raw = r.bytes(n * d)?;
    r.expect_end()?;

    let mut l = ByteReader::new(labels);
    let magic = l.u32_be()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(0, format!("label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}")));
    }
    let count = l.u32_be()? as usize;
    if count != n {
        return Err(Error::format(4, format!("{count} labels for {n} images")));
    }
    let ys: Vec<usize> = l.bytes(n)?.into_iter().map(usize::from).collect();
    l.expect_end()?;

    let classes = ys.iter().max().map_or(2, |&m| (m + 1).max(2));
    let pixels = raw.into_iter().map(|b| f64::from(b) / 255.0).collect();
    LabeledDataset::new(Tensor::from_vec(&[n, d], pixels)?, ys, classes)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    parse_idx(&std::fs::read(images_path)?, &std::fs::read(labels_path)?)
}

/// Writes a dataset with all of its metadata:
/// `"SATD" | version u32 | n u64 | d u64 | c u64 | inputs f64[n*d] |
/// noisy u32[n] | clean u32[n] | mask u8[n] | has_clean u8 | [clean inputs f64[n*d]]`,
/// all little-endian.
pub fn write_snapshot(ds: &LabeledDataset, w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    for v in [ds.len(), ds.dim(), ds.class_count()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for v in ds.inputs().data() {
        w.write_all(&v.to_le_bytes())?;
    }
    for &y in ds.noisy_indices() {
        w.write_all(&(y as u32).to_le_bytes())?;
    }
    for &y in ds.clean_labels() {
        w.write_all(&(y as u32).to_le_bytes())?;
    }
    for &m in ds.corrupted_mask() {
        w.write_all(&[u8::from(m)])?;
    }
    w.write_all(&[u8::from(ds.has_input_corruption())])?;
    if ds.has_input_corruption() {
        for v in ds.clean_inputs().data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot(r: impl Read) -> Result<LabeledDataset> {
    let mut r = ByteReader::new(BufReader::new(r));
    if r.bytes(4)? != SNAPSHOT_MAGIC {
        return Err(Error::format(0, "dataset snapshot magic mismatch"));
    }
    let version = r.u32_le()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::format(4, format!("unsupported dataset snapshot version {version}")));
    }
    let n = r.u64_le()? as usize;
    let d = r.u64_le()? as usize;
    let c = r.u64_le()? as usize;
    let read_matrix = |r: &mut ByteReader<_>| -> Result<Tensor> {
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            data.push(r.f64_le()?);
        }
        Tensor::from_vec(&[n, d], data)
    };
    let inputs = read_matrix(&mut r)?;
    let read_labels = |r: &mut ByteReader<_>| -> Result<Vec<usize>> {
        (0..n)
            .map(|_| {
                let at = r.offset();
                let y = r.u32_le()? as usize;
                if y >= c {
                    Err(Error::format(at, format!("label {y} out of range for {c} classes")))
                } else {
                    Ok(y)
                }
            })
            .collect()
    };
    let noisy = read_labels(&mut r)?;
    let clean = read_labels(&mut r)?;
    let mask = r.bytes(n)?.into_iter().map(|b| b != 0).collect();
    let has_clean = r.bytes(1)?[0] != 0;
    let clean_inputs = if has_clean { Some(read_matrix(&mut r)?) } else { None };
    r.expect_end()?;
    if c < 2 {
        return Err(Error::format(24, "snapshot class count below 2"));
    }
    Ok(LabeledDataset::from_parts(inputs, noisy, clean, mask, c, clean_inputs))
}

pub fn save_snapshot(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    write_snapshot(ds, File::create(path)?)
}

pub fn load_snapshot(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_snapshot(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{corrupt, CorruptionScheme, CorruptionSpec};

    fn cifar_bytes(n: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(n * CIFAR_RECORD);
        for r in 0..n {
            out.push((r % 10) as u8);
            out.extend((0..CIFAR_PIXELS).map(|p| ((p + r) % 256) as u8));
        }
        out
    }

    #[test]
    fn cifar_batch_dimensions() {
        let ds = parse_cifar_binary(&cifar_bytes(10_000)).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.class_count()), (10_000, 3072, 10));
        assert_eq!(ds.inputs().row(0)[255], 1.0);
        assert_eq!(ds.inputs().row(1)[0], 1.0 / 255.0);
        assert_eq!(ds.clean_labels()[13], 3);
        assert!(ds.corrupted_mask().iter().all(|&m| !m));
    }

    #[test]
    fn cifar_truncated_record_names_offset() {
        let mut bytes = cifar_bytes(3);
        bytes.truncate(2 * CIFAR_RECORD + 100);
        match parse_cifar_binary(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 2 * CIFAR_RECORD as u64),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn idx_pair(n: usize, rows: usize, cols: usize) -> (Vec<u8>, Vec<u8>) {
        let mut img = IDX_IMAGES_MAGIC.to_be_bytes().to_vec();
        for v in [n, rows, cols] {
            img.extend((v as u32).to_be_bytes());
        }
        img.extend((0..n * rows * cols).map(|v| (v % 256) as u8));
        let mut lab = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        lab.extend((n as u32).to_be_bytes());
        lab.extend((0..n).map(|v| (v % 10) as u8));
        (img, lab)
    }

    #[test]
    fn idx_accepts_image_magic() {
        let (img, lab) = idx_pair(12, 4, 5);
        let ds = parse_idx(&img, &lab).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.class_count()), (12, 20, 10));
        assert_eq!(ds.inputs().row(1)[0], 20.0 / 255.0);
    }

    #[test]
    fn idx_rejects_bad_magic_and_truncation() {
        let (mut img, lab) = idx_pair(3, 2, 2);
        img[3] = 0x01;
        assert!(matches!(parse_idx(&img, &lab), Err(Error::Format { offset: 0, .. })));
        let (mut img, lab) = idx_pair(3, 2, 2);
        img.pop();
        match parse_idx(&img, &lab) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 16 + 11),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn snapshot_round_trip_keeps_metadata() {
        let x = Tensor::from_vec(&[30, 3], (0..90).map(|v| (v as f64).sqrt() * 1e-3 + 0.1).collect()).unwrap();
        let ds = LabeledDataset::new(x, (0..30).map(|i| i % 3).collect(), 3).unwrap();
        let noisy = corrupt(
            &ds,
            &CorruptionSpec {
                scheme: CorruptionScheme::Gaussian,
                rate: 0.5,
                seed: 3,
            },
        )
        .unwrap();
        for d in [&ds, &noisy] {
            let mut buf = Vec::new();
            write_snapshot(d, &mut buf).unwrap();
            let back = read_snapshot(buf.as_slice()).unwrap();
            assert_eq!(&back, d);
        }
    }

    #[test]
    fn snapshot_rejects_truncation() {
        let x = Tensor::zeros(&[2, 2]);
        let ds = LabeledDataset::new(x, vec![0, 1], 2).unwrap();
        let mut buf = Vec::new();
        write_snapshot(&ds, &mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_snapshot(buf.as_slice()), Err(Error::Format { .. })));
    }
}
