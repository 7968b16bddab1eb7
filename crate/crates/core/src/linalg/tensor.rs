use crate::error::{Error, Result};

/// Dense 4-D array indexed `(n, c, h, w)`, contiguous in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            shape: [n, c, h, w],
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::BadShape {
                shape: shape.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch item (`c·h·w`).
    #[inline]
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let [_, cs, hs, ws] = self.shape;
        ((n * cs + c) * hs + h) * ws + w
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.offset(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: f64) {
        let o = self.offset(n, c, h, w);
        self.data[o] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// All data of batch item `n`.
    pub fn item(&self, n: usize) -> &[f64] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn item_mut(&mut self, n: usize) -> &mut [f64] {
        let len = self.item_len();
        &mut self.data[n * len..(n + 1) * len]
    }

    /// Copy of the listed batch items, in order.
    pub fn select(&self, idx: &[usize]) -> Tensor4 {
        let len = self.item_len();
        let mut data = Vec::with_capacity(idx.len() * len);
        for &i in idx {
            data.extend_from_slice(self.item(i));
        }
        Tensor4 {
            shape: [idx.len(), self.shape[1], self.shape[2], self.shape[3]],
            data,
        }
    }

    /// Same data viewed with a new shape of equal volume.
    pub fn reshape(self, shape: [usize; 4]) -> Result<Tensor4> {
        Tensor4::from_vec(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_order_is_nchw() {
        let t = Tensor4::from_vec([2, 3, 4, 5], (0..120).map(f64::from).collect()).unwrap();
        assert_eq!(t.get(1, 2, 3, 4), 119.0);
        assert_eq!(t.get(0, 1, 0, 0), 20.0);
        assert_eq!(t.select(&[1]).item(0)[0], 60.0);
    }

    #[test]
    fn rejects_bad_length() {
        assert!(Tensor4::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }
}
