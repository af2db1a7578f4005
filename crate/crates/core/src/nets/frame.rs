use tempcycle_autograd::{Scalar, Tensor};

use crate::error::{Error, Result};

/// One normalized RGB image, `[3, H, W]` with values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T = f32>(Tensor<T>);

impl<T: Scalar> Frame<T> {
    pub fn new(t: Tensor<T>) -> Result<Self> {
        if t.shape().len() != 3 || t.shape()[0] != 3 {
            return Err(Error::Shape(format!(
                "frame must be [3, H, W], got {:?}",
                t.shape()
            )));
        }
        let one = T::one();
        if let Some(bad) = t.data().iter().find(|v| !(v.abs() <= one)) {
            return Err(Error::Shape(format!("frame value {bad} outside [-1, 1]")));
        }
        Ok(Self(t))
    }

    pub fn filled(height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(Tensor::full(&[3, height, width], value))
    }

    pub fn height(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    pub fn same_size(&self, other: &Self) -> bool {
        self.height() == other.height() && self.width() == other.width()
    }

    /// Mean absolute elementwise difference.
    pub fn mean_abs_diff(&self, other: &Self) -> Result<f64> {
        if !self.same_size(other) {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.height(),
                self.width(),
                other.height(),
                other.width()
            )));
        }
        let sum: f64 = self
            .0
            .data()
            .iter()
            .zip(other.0.data())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .sum();
        Ok(sum / self.0.numel() as f64)
    }
}

/// Two frames of one sequence, `earlier` preceding `later`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePair<T = f32> {
    pub earlier: Frame<T>,
    pub later: Frame<T>,
}

impl<T: Scalar> FramePair<T> {
    pub fn new(earlier: Frame<T>, later: Frame<T>) -> Result<Self> {
        if !earlier.same_size(&later) {
            return Err(Error::Shape(format!(
                "pair frames differ: {}x{} vs {}x{}",
                earlier.height(),
                earlier.width(),
                later.height(),
                later.width()
            )));
        }
        Ok(Self { earlier, later })
    }

    pub fn height(&self) -> usize {
        self.earlier.height()
    }

    pub fn width(&self) -> usize {
        self.earlier.width()
    }

    /// Channel-wise stack `[earlier; later]`, shape `[6, H, W]`.
    pub fn stacked(&self) -> Tensor<T> {
        Tensor::concat_channels(&[self.earlier.tensor(), self.later.tensor()])
            .expect("pair frames share a shape")
    }

    pub fn from_stacked(t: &Tensor<T>) -> Result<Self> {
        if t.shape().len() != 3 || t.shape()[0] != 6 {
            return Err(Error::Shape(format!(
                "stacked pair must be [6, H, W], got {:?}",
                t.shape()
            )));
        }
        Self::new(
            Frame::new(t.slice_channels(0, 3)?)?,
            Frame::new(t.slice_channels(3, 3)?)?,
        )
    }
}
