//! Readers for IDX image/label files (optionally gzipped) and numeric CSV,
//! and a CSV writer that round-trips `f64` exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::matrix::DataMatrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Label names of the ten Fashion-MNIST classes.
pub const CLASS_NAMES: [&str; 10] = [
    "T-shirt/top",
    "Trouser",
    "Pullover",
    "Dress",
    "Coat",
    "Sandal",
    "Shirt",
    "Sneaker",
    "Bag",
    "Ankle boot",
];

fn maybe_gunzip(bytes: &[u8]) -> Result<std::borrow::Cow<'_, [u8]>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::io("<gzip stream>", e))?;
        Ok(out.into())
    } else {
        Ok(bytes.into())
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let word = bytes
        .get(at..at + 4)
        .ok_or(Error::TruncatedPayload { expected: at + 4, actual: bytes.len() })?;
    Ok(u32::from_be_bytes(word.try_into().expect("4 bytes")))
}

/// Splits an IDX buffer into its payload after checking magic, header and exact length.
fn idx_payload(bytes: &[u8], magic: u32, dims: usize) -> Result<(Vec<usize>, &[u8])> {
    let actual = be_u32(bytes, 0)?;
    if actual != magic {
        return Err(Error::BadMagic { expected: magic, actual });
    }
    let sizes: Vec<usize> = (0..dims).map(|i| be_u32(bytes, 4 + 4 * i).map(|v| v as usize)).collect::<Result<_>>()?;
    let header = 4 + 4 * dims;
    let expected = header + sizes.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload { expected, actual: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingGarbage(bytes.len() - expected));
    }
    Ok((sizes, &bytes[header..]))
}

/// Parses an IDX image file into an `n × (rows·cols)` matrix of raw 0–255 intensities.
pub fn read_idx_images(bytes: &[u8]) -> Result<DataMatrix> {
    let bytes = maybe_gunzip(bytes)?;
    let (sizes, payload) = idx_payload(&bytes, IMAGE_MAGIC, 3)?;
    let n = sizes[0];
    let d = sizes[1] * sizes[2];
    let values: Vec<f64> = payload.iter().map(|&b| f64::from(b)).collect();
    DataMatrix::from_row_major(n, d, &values)
}

/// Parses an IDX label file; every label must lie in `0..=9`.
pub fn read_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let bytes = maybe_gunzip(bytes)?;
    let (_, payload) = idx_payload(&bytes, LABEL_MAGIC, 1)?;
    if let Some(index) = payload.iter().position(|&l| l > 9) {
        return Err(Error::LabelOutOfRange { index, label: payload[index] });
    }
    Ok(payload.to_vec())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub images: DataMatrix,
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(images: DataMatrix, labels: Vec<u8>) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(Error::DimensionMismatch { expected: images.nrows(), actual: labels.len() });
        }
        Ok(Self { images, labels })
    }

    /// Loads an image file and its label file.
    pub fn load(images: &Path, labels: &Path) -> Result<Self> {
        let x = read_idx_images(&read_file(images)?).map_err(|e| with_path(e, images))?;
        let y = read_idx_labels(&read_file(labels)?).map_err(|e| with_path(e, labels))?;
        Self::new(x, y)
    }

    pub fn class_name(label: u8) -> Option<&'static str> {
        CLASS_NAMES.get(label as usize).copied()
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// Rows with the given label, in file order.
pub fn split_by_label(ds: &LabeledDataset, label: u8) -> Result<DataMatrix> {
    let rows: Vec<usize> = ds.labels.iter().enumerate().filter(|(_, &l)| l == label).map(|(i, _)| i).collect();
    if rows.is_empty() {
        return Err(Error::UnknownLabel(label));
    }
    Ok(ds.images.select_rows(&rows))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Header {
    /// Treat the first record as a header iff some cell in it is not a number.
    #[default]
    Auto,
    Present,
    Absent,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub header: Header,
}

pub fn read_csv_matrix(path: &Path, options: CsvOptions) -> Result<DataMatrix> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_from(file, options)
}

/// Parses comma-separated numbers. Error positions are 1-based record and field numbers.
pub fn read_csv_from<R: Read>(reader: R, options: CsvOptions) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut names = None;
    let mut flat = Vec::new();
    let mut width = None;
    let mut n = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if i == 0 {
            let header = match options.header {
                Header::Present => true,
                Header::Absent => false,
                Header::Auto => record.iter().any(|c| c.parse::<f64>().is_err()),
            };
            if header {
                names = Some(record.iter().map(str::to_string).collect::<Vec<_>>());
                width = Some(record.len());
                continue;
            }
        }
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRows { row: i + 1, expected, found: record.len() });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::NonNumericCell { row: i + 1, col: j + 1, cell: cell.to_string() })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell { row: i + 1, col: j + 1, cell: cell.to_string() });
            }
            flat.push(v);
        }
        n += 1;
    }
    let d = width.unwrap_or(0);
    let m = DataMatrix::from_row_major(n, d, &flat)?;
    match names {
        Some(names) => m.with_names(names),
        None => Ok(m),
    }
}

/// Writes `x` as CSV with 17 significant digits per value, and a header row
/// if the matrix carries column names.
pub fn write_csv_matrix<W: Write>(x: &DataMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(names) = x.names() {
        w.write_record(names)?;
    }
    for i in 0..x.nrows() {
        w.write_record(x.row(i).iter().map(|v| format!("{v:.16e}")))?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;

    fn idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut out = magic.to_be_bytes().to_vec();
        for d in dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn empty_image_file() {
        let m = read_idx_images(&idx(IMAGE_MAGIC, &[0, 28, 28], &[])).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (0, 784));
    }

    #[test]
    fn images_are_row_major() {
        let m = read_idx_images(&idx(IMAGE_MAGIC, &[2, 1, 3], &[1, 2, 3, 4, 5, 255])).unwrap();
        assert_eq!(m.row(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(m.row(1), vec![4.0, 5.0, 255.0]);
    }

    #[test]
    fn label_magic_in_image_reader() {
        let err = read_idx_images(&idx(LABEL_MAGIC, &[0], &[])).unwrap_err();
        assert!(matches!(err, Error::BadMagic { expected: IMAGE_MAGIC, actual: LABEL_MAGIC }));
    }

    #[test]
    fn labels_and_their_errors() {
        assert_eq!(read_idx_labels(&idx(LABEL_MAGIC, &[3], &[0, 9, 5])).unwrap(), vec![0, 9, 5]);
        assert!(matches!(
            read_idx_labels(&idx(LABEL_MAGIC, &[2], &[1, 10])),
            Err(Error::LabelOutOfRange { index: 1, label: 10 })
        ));
        let err = read_idx_labels(&idx(LABEL_MAGIC, &[4], &[1, 2])).unwrap_err();
        assert!(matches!(err, Error::TruncatedPayload { expected: 12, actual: 10 }));
        assert!(err.to_string().contains("12") && err.to_string().contains("10"));
        assert!(matches!(read_idx_labels(&idx(LABEL_MAGIC, &[1], &[1, 2])), Err(Error::TrailingGarbage(1))));
    }

    #[test]
    fn gzip_is_transparent() {
        let raw = idx(LABEL_MAGIC, &[3], &[7, 8, 9]);
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&raw).unwrap();
        assert_eq!(read_idx_labels(&enc.finish().unwrap()).unwrap(), vec![7, 8, 9]);
    }

    #[test]
    fn splits_partition_the_dataset() {
        let x = DataMatrix::from_row_major(4, 1, &[10.0, 11.0, 12.0, 13.0]).unwrap();
        let ds = LabeledDataset::new(x, vec![1, 0, 1, 3]).unwrap();
        assert_eq!(split_by_label(&ds, 1).unwrap().column(0), &[10.0, 12.0]);
        assert!(matches!(split_by_label(&ds, 2), Err(Error::UnknownLabel(2))));
        let total: usize = [0, 1, 3].iter().map(|&l| split_by_label(&ds, l).unwrap().nrows()).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn csv_reading() {
        let m = read_csv_from("1,2\n3,4".as_bytes(), CsvOptions::default()).unwrap();
        assert_eq!((m.row(0), m.row(1)), (vec![1.0, 2.0], vec![3.0, 4.0]));
        assert!(matches!(
            read_csv_from("1,2\n3".as_bytes(), CsvOptions::default()),
            Err(Error::RaggedRows { row: 2, expected: 2, found: 1 })
        ));
        let named = read_csv_from("a,b\r\n5,6\r\n".as_bytes(), CsvOptions::default()).unwrap();
        assert_eq!(named.names().unwrap(), &["a".to_string(), "b".to_string()]);
        assert_eq!(named.row(0), vec![5.0, 6.0]);
        assert!(matches!(
            read_csv_from("1,2\n3,x".as_bytes(), CsvOptions::default()),
            Err(Error::NonNumericCell { row: 2, col: 2, .. })
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let values = [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, std::f64::consts::PI, -0.0];
        let x = DataMatrix::from_row_major(3, 2, &values).unwrap().with_names(vec!["u".into(), "v".into()]).unwrap();
        let mut buf = Vec::new();
        write_csv_matrix(&x, &mut buf).unwrap();
        let back = read_csv_from(buf.as_slice(), CsvOptions::default()).unwrap();
        assert_eq!(back, x);
    }
}
