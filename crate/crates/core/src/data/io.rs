//! Dataset directory layout and image file formats.
//!
//! ```text
//! <dir>/images/<id>.txt   or  <dir>/images/<id>.bin
//! <dir>/labels.csv        header "id,score"
//! <dir>/split.json        SplitSpec
//! ```
//!
//! Text images start with a `height width score id` line followed by one line
//! of space-separated decimals per row. Decimals use the shortest form that
//! parses back to the same `f64`, so the text format is also lossless.
//!
//! Binary images are little-endian: magic `TRIPIMG1`, u32 height, u32 width,
//! u8 score, u32 id length, id bytes (UTF-8), then `height * width` f64 values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledImage, SplitSpec};
use crate::error::{Error, Result};
use crate::nn::weights::{put_u32, ByteReader};
use crate::sampling::ExtentScore;
use crate::tensor::Tensor;

pub const IMAGE_MAGIC: &[u8; 8] = b"TRIPIMG1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    #[default]
    Txt,
    Bin,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Txt => "txt",
            ImageFormat::Bin => "bin",
        }
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "txt" => Ok(ImageFormat::Txt),
            "bin" => Ok(ImageFormat::Bin),
            _ => Err(Error::usage(format!("unknown image format {s:?}"))),
        }
    }
}

pub fn encode_image_text(image: &LabeledImage) -> Result<String> {
    let (h, w, _) = image.pixels.hwc()?;
    check_id(&image.id)?;
    let mut out = format!("{h} {w} {} {}\n", image.score, image.id);
    for row in image.pixels.data().chunks_exact(w) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn decode_image_text(text: &str) -> Result<LabeledImage> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("empty image file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [h, w, score, id] = fields[..] else {
        return Err(Error::format(format!("bad image header {header:?}")));
    };
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(format!("bad image dimension {s:?}")))
    };
    let (h, w) = (parse_dim(h)?, parse_dim(w)?);
    let score = parse_score(score)?;
    let mut data = Vec::with_capacity(h * w);
    for (r, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::format(format!("row {r}: bad value {tok:?}")))?,
            );
        }
        if data.len() - before != w {
            return Err(Error::format(format!("row {r} has {} values, expected {w}", data.len() - before)));
        }
    }
    let pixels = Tensor::new(vec![h, w, 1], data).map_err(|e| Error::format(e.to_string()))?;
    Ok(LabeledImage { id: id.to_string(), score, pixels })
}

pub fn encode_image_bin(image: &LabeledImage) -> Result<Vec<u8>> {
    let (h, w, _) = image.pixels.hwc()?;
    check_id(&image.id)?;
    let mut buf = Vec::with_capacity(25 + image.id.len() + 8 * h * w);
    buf.extend_from_slice(IMAGE_MAGIC);
    put_u32(&mut buf, h)?;
    put_u32(&mut buf, w)?;
    buf.push(image.score.value());
    put_u32(&mut buf, image.id.len())?;
    buf.extend_from_slice(image.id.as_bytes());
    for v in image.pixels.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_image_bin(bytes: &[u8]) -> Result<LabeledImage> {
    let mut r = ByteReader::new(bytes);
    if r.take(8)? != IMAGE_MAGIC {
        return Err(Error::format("not a binary image (bad magic)"));
    }
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let score = ExtentScore::new(r.u8()?).map_err(|e| Error::format(e.to_string()))?;
    let id_len = r.u32()? as usize;
    let id = std::str::from_utf8(r.take(id_len)?)
        .map_err(|_| Error::format("image id is not UTF-8"))?
        .to_string();
    let n = h.checked_mul(w).ok_or_else(|| Error::format("image too large"))?;
    let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if !r.is_done() {
        return Err(Error::format("trailing bytes after image"));
    }
    let pixels = Tensor::new(vec![h, w, 1], data).map_err(|e| Error::format(e.to_string()))?;
    Ok(LabeledImage { id, score, pixels })
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    id: String,
    score: u8,
}

/// Writes the dataset layout under `dir`, which must exist.
pub fn save_dataset(dir: &Path, dataset: &Dataset, format: ImageFormat) -> Result<()> {
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir)?;
    let mut labels = csv::Writer::from_path(dir.join("labels.csv"))?;
    for im in &dataset.images {
        let path = images_dir.join(format!("{}.{}", im.id, format.extension()));
        match format {
            ImageFormat::Txt => fs::write(path, encode_image_text(im)?)?,
            ImageFormat::Bin => fs::write(path, encode_image_bin(im)?)?,
        }
        labels.serialize(LabelRow { id: im.id.clone(), score: im.score.value() })?;
    }
    labels.flush()?;
    fs::write(dir.join("split.json"), serde_json::to_string_pretty(&dataset.split)? + "\n")?;
    Ok(())
}

/// Loads a dataset directory. Images are returned in `labels.csv` order.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.is_dir() {
        return Err(Error::data(format!("dataset directory {} not found", dir.display())));
    }
    let mut reader = csv::Reader::from_path(dir.join("labels.csv"))?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "score"] {
        return Err(Error::format("labels.csv must have header id,score"));
    }
    let mut images = Vec::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = row?;
        check_id(&row.id)?;
        let score = ExtentScore::new(row.score).map_err(|e| Error::format(e.to_string()))?;
        let txt = dir.join("images").join(format!("{}.txt", row.id));
        let bin = dir.join("images").join(format!("{}.bin", row.id));
        let image = if txt.is_file() {
            decode_image_text(&fs::read_to_string(&txt)?)?
        } else if bin.is_file() {
            decode_image_bin(&fs::read(&bin)?)?
        } else {
            return Err(Error::data(format!("no image file for id {}", row.id)));
        };
        if image.id != row.id || image.score != score {
            return Err(Error::data(format!(
                "image file for {} disagrees with labels.csv (id {}, score {})",
                row.id, image.id, image.score
            )));
        }
        images.push(image);
    }
    let split: SplitSpec = serde_json::from_str(&fs::read_to_string(dir.join("split.json"))?)?;
    Dataset::new(images, split)
}

fn parse_score(s: &str) -> Result<ExtentScore> {
    s.parse::<u8>()
        .ok()
        .and_then(|v| ExtentScore::new(v).ok())
        .ok_or_else(|| Error::format(format!("bad extent score {s:?}")))
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::data(format!("image id {id:?} must be a plain file name")))
    }
}
