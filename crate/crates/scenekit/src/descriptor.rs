//! Shared descriptor types and the image gradient both extractors use.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gray::GrayImage;

/// Which extractor produced a descriptor set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    /// Whole-image histogram-of-oriented-gradients vector.
    Hog,
    /// Dense grid of DAISY descriptors.
    Daisy,
    /// Bag-of-visual-words histogram over DAISY descriptors.
    DaisyHistogram,
    /// Concatenated normalized histogram and normalized HOG vector.
    Hybrid,
}

/// A single descriptor vector tagged with its extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub kind: DescriptorKind,
    pub values: Vec<f32>,
}

/// A dense row-major matrix of `count` descriptors with `dim` columns.
///
/// Rows from multiple images can share one set; producers that need the
/// grouping keep a separate per-image count list.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub kind: DescriptorKind,
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorSet {
    /// Creates an empty set that accepts rows of width `dim`.
    pub fn new(kind: DescriptorKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Descriptor("descriptor dim must be positive".into()));
        }
        Ok(DescriptorSet {
            kind,
            dim,
            data: Vec::new(),
        })
    }

    /// Wraps an existing row-major buffer.
    pub fn from_rows(kind: DescriptorKind, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Descriptor("descriptor dim must be positive".into()));
        }
        if data.len() % dim != 0 {
            return Err(Error::DimMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(DescriptorSet { kind, dim, data })
    }

    pub fn push(&mut self, row: &[f32]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    /// Appends every row of `other`; kinds and dims must agree.
    pub fn extend(&mut self, other: &DescriptorSet) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if other.kind != self.kind {
            return Err(Error::Descriptor(
                "cannot merge descriptor sets of different kinds".into(),
            ));
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn into_flat(self) -> Vec<f32> {
        self.data
    }
}

/// Horizontal and vertical image derivatives, same shape as the input.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
    pub width: usize,
    pub height: usize,
}

/// Central differences with the `[-1, 0, 1]` kernel (no 1/2 factor),
/// falling back to one-sided differences on the image border.
pub fn gradient(img: &GrayImage) -> Gradient {
    let (w, h) = (img.width(), img.height());
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            gx[idx] = if w == 1 {
                0.0
            } else if x == 0 {
                img.get(1, y) - img.get(0, y)
            } else if x == w - 1 {
                img.get(w - 1, y) - img.get(w - 2, y)
            } else {
                img.get(x + 1, y) - img.get(x - 1, y)
            };
            gy[idx] = if h == 1 {
                0.0
            } else if y == 0 {
                img.get(x, 1) - img.get(x, 0)
            } else if y == h - 1 {
                img.get(x, h - 1) - img.get(x, h - 2)
            } else {
                img.get(x, y + 1) - img.get(x, y - 1)
            };
        }
    }
    Gradient {
        gx,
        gy,
        width: w,
        height: h,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gradient_of_horizontal_ramp() {
        // pixel(x, y) = x / 10: interior gx is 2/10, border gx is 1/10, gy is 0.
        let img = GrayImage::from_fn(5, 3, |x, _| x as f32 / 10.0);
        let g = gradient(&img);
        for y in 0..3 {
            assert!((g.gx[y * 5] - 0.1).abs() < 1e-6);
            assert!((g.gx[y * 5 + 4] - 0.1).abs() < 1e-6);
            for x in 1..4 {
                assert!((g.gx[y * 5 + x] - 0.2).abs() < 1e-6);
                assert_eq!(g.gy[y * 5 + x], 0.0);
            }
        }
    }

    #[test]
    fn gradient_of_vertical_step() {
        let img = GrayImage::from_fn(3, 4, |_, y| if y < 2 { 0.0 } else { 1.0 });
        let g = gradient(&img);
        // Rows adjacent to the step see it; the outermost rows do not.
        assert_eq!(g.gy[3], 1.0); // y = 1, central difference across the step
        assert_eq!(g.gy[2 * 3], 1.0); // y = 2
        assert_eq!(g.gy[0], 0.0);
        assert_eq!(g.gy[3 * 3], 0.0);
        assert!(g.gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_or_column_has_zero_gradient_along_it() {
        let row = GrayImage::from_fn(4, 1, |x, _| x as f32 / 4.0);
        let g = gradient(&row);
        assert!(g.gy.iter().all(|&v| v == 0.0));
        let col = GrayImage::from_fn(1, 4, |_, y| y as f32 / 4.0);
        let g = gradient(&col);
        assert!(g.gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn descriptor_set_shape_checks() {
        let mut set = DescriptorSet::new(DescriptorKind::Hog, 3).unwrap();
        set.push(&[1.0, 2.0, 3.0]).unwrap();
        assert!(set.push(&[1.0]).is_err());
        assert_eq!(set.count(), 1);
        assert_eq!(set.row(0), &[1.0, 2.0, 3.0]);

        assert!(DescriptorSet::from_rows(DescriptorKind::Hog, 4, vec![0.0; 6]).is_err());
        let other = DescriptorSet::from_rows(DescriptorKind::Daisy, 3, vec![0.0; 3]).unwrap();
        assert!(set.extend(&other).is_err());
    }

    proptest! {
        #[test]
        fn constant_image_has_zero_gradient(
            w in 1usize..10, h in 1usize..10, v in 0.0f32..1.0
        ) {
            let img = GrayImage::from_fn(w, h, |_, _| v);
            let g = gradient(&img);
            prop_assert!(g.gx.iter().all(|&x| x == 0.0));
            prop_assert!(g.gy.iter().all(|&x| x == 0.0));
        }
    }
}
