use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Attenuation assigned to pixels outside the lung mask, matching healthy tissue.
pub const OUTSIDE_MASK_HU: f64 = -800.0;
/// Intensities are divided by this after masking.
pub const HU_SCALE: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::data(format!(
                "mask of {height}x{width} needs {} entries, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Tight bounding box of the set pixels.
    pub fn bounding_box(&self) -> Result<CropBox> {
        let mut bbox: Option<CropBox> = None;
        for (i, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            let (r, c) = (i / self.width, i % self.width);
            bbox = Some(match bbox {
                None => CropBox { top: r, bottom: r, left: c, right: c },
                Some(b) => CropBox {
                    top: b.top.min(r),
                    bottom: b.bottom.max(r),
                    left: b.left.min(c),
                    right: b.right.max(c),
                },
            });
        }
        bbox.ok_or_else(|| Error::data("mask is empty"))
    }
}

/// Inclusive pixel rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropBox {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl CropBox {
    pub fn full(height: usize, width: usize) -> Self {
        Self { top: 0, bottom: height - 1, left: 0, right: width - 1 }
    }

    pub fn height(&self) -> usize {
        self.bottom - self.top + 1
    }

    pub fn width(&self) -> usize {
        self.right - self.left + 1
    }
}

/// Unprocessed slice in Hounsfield units with its lung mask.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    pub hu: Tensor,
    pub mask: BinaryMask,
}

/// Crops to `crop`, replaces out-of-mask pixels with -800 HU and scales to
/// roughly `[-1, 0]`. Returns an `H x W x 1` tensor.
pub fn preprocess(raw: &RawImage, crop: &CropBox) -> Result<Tensor> {
    let (h, w) = match raw.hu.shape()[..] {
        [h, w] | [h, w, 1] => (h, w),
        _ => return Err(Error::usage(format!("raw image must be HxW, got {:?}", raw.hu.shape()))),
    };
    if raw.mask.height != h || raw.mask.width != w {
        return Err(Error::usage("mask and image sizes differ"));
    }
    if crop.top > crop.bottom || crop.left > crop.right || crop.bottom >= h || crop.right >= w {
        return Err(Error::usage(format!("crop box {crop:?} exceeds the {h}x{w} image")));
    }
    let hu = raw.hu.data();
    let mut out = Vec::with_capacity(crop.height() * crop.width());
    for r in crop.top..=crop.bottom {
        for c in crop.left..=crop.right {
            let v = if raw.mask.get(r, c) { hu[r * w + c] } else { OUTSIDE_MASK_HU };
            out.push(v / HU_SCALE);
        }
    }
    Tensor::new(vec![crop.height(), crop.width(), 1], out)
}

/// Intersection of the tight bounding boxes of all masks.
pub fn bbox_intersection(masks: &[BinaryMask]) -> Result<CropBox> {
    let (first, rest) = masks
        .split_first()
        .ok_or_else(|| Error::data("no masks to intersect"))?;
    let mut acc = first.bounding_box()?;
    for m in rest {
        let b = m.bounding_box()?;
        acc = CropBox {
            top: acc.top.max(b.top),
            bottom: acc.bottom.min(b.bottom),
            left: acc.left.max(b.left),
            right: acc.right.min(b.right),
        };
        if acc.top > acc.bottom || acc.left > acc.right {
            return Err(Error::data("mask bounding boxes do not intersect"));
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_mask(h: usize, w: usize, rows: (usize, usize), cols: (usize, usize)) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| (rows.0..=rows.1).contains(&r) && (cols.0..=cols.1).contains(&c))
    }

    #[test]
    fn scaling_and_mask_fill() {
        let hu = Tensor::new(vec![2, 2], vec![-800.0, -1000.0, 50.0, -300.0]).unwrap();
        let mask = BinaryMask::new(2, 2, vec![true, true, false, true]).unwrap();
        let out = preprocess(&RawImage { hu, mask }, &CropBox::full(2, 2)).unwrap();
        assert_eq!(out.shape(), &[2, 2, 1]);
        assert_eq!(out.data(), &[-0.8, -1.0, -0.8, -0.3]);
    }

    #[test]
    fn crop_out_of_bounds() {
        let raw = RawImage { hu: Tensor::zeros(&[3, 3]), mask: rect_mask(3, 3, (0, 2), (0, 2)) };
        let crop = CropBox { top: 0, bottom: 3, left: 0, right: 2 };
        assert!(matches!(preprocess(&raw, &crop), Err(Error::Usage(_))));
    }

    #[test]
    fn intersection_examples() {
        let a = rect_mask(30, 8, (0, 10), (1, 5));
        assert_eq!(bbox_intersection(&[a.clone(), a.clone()]).unwrap(), a.bounding_box().unwrap());
        let b = rect_mask(30, 8, (5, 20), (2, 7));
        assert_eq!(
            bbox_intersection(&[a.clone(), b]).unwrap(),
            CropBox { top: 5, bottom: 10, left: 2, right: 5 }
        );
        let c = rect_mask(30, 8, (12, 20), (1, 5));
        assert!(matches!(bbox_intersection(&[a, c]), Err(Error::Data(_))));
        let empty = BinaryMask::from_fn(4, 4, |_, _| false);
        assert!(matches!(bbox_intersection(&[empty]), Err(Error::Data(_))));
    }
}
