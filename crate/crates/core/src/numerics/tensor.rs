use crate::error::{Error, Result};

/// Channel-major `channels x length` buffer of activations.
///
/// `values[c * length + t]` is sample `t` of channel `c`. The optional
/// gradient buffer, when present, has the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor1D {
    channels: usize,
    length: usize,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor1D {
    pub fn zeros(channels: usize, length: usize) -> Self {
        Tensor1D {
            channels,
            length,
            values: vec![0.0; channels * length],
            grad: None,
        }
    }

    pub fn from_vec(channels: usize, length: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || length == 0 {
            return Err(Error::shape("tensor needs at least one channel and one sample"));
        }
        if values.len() != channels * length {
            return Err(Error::shape(format!(
                "{} values for a {channels}x{length} tensor",
                values.len()
            )));
        }
        Ok(Tensor1D {
            channels,
            length,
            values,
            grad: None,
        })
    }

    /// Stacks equally long channels.
    pub fn from_channels<S: AsRef<[f64]>>(channels: &[S]) -> Result<Self> {
        let Some(first) = channels.first() else {
            return Err(Error::shape("no channels"));
        };
        let length = first.as_ref().len();
        let mut values = Vec::with_capacity(length * channels.len());
        for ch in channels {
            let ch = ch.as_ref();
            if ch.len() != length {
                return Err(Error::shape(format!(
                    "channel lengths differ ({} vs {length})",
                    ch.len()
                )));
            }
            values.extend_from_slice(ch);
        }
        Tensor1D::from_vec(channels.len(), length, values)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.length..(c + 1) * self.length]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let l = self.length;
        &mut self.values[c * l..(c + 1) * l]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.values.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn same_shape(&self, other: &Tensor1D) -> bool {
        self.channels == other.channels && self.length == other.length
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor1D {
        Tensor1D {
            channels: self.channels,
            length: self.length,
            values: self.values.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Concatenates along the channel axis.
    pub fn concat(parts: &[&Tensor1D]) -> Result<Tensor1D> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("nothing to concatenate"));
        };
        let length = first.length;
        let mut values = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
        let mut channels = 0;
        for p in parts {
            if p.length != length {
                return Err(Error::shape(format!(
                    "cannot concatenate lengths {} and {length}",
                    p.length
                )));
            }
            values.extend_from_slice(&p.values);
            channels += p.channels;
        }
        Tensor1D::from_vec(channels, length, values)
    }

    /// Copies channels `start..start + count`.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Tensor1D> {
        if start + count > self.channels || count == 0 {
            return Err(Error::shape(format!(
                "channel range {start}..{} out of {}",
                start + count,
                self.channels
            )));
        }
        let l = self.length;
        Tensor1D::from_vec(count, l, self.values[start * l..(start + count) * l].to_vec())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor1D) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape(format!(
                "{}x{} += {}x{}",
                self.channels, self.length, other.channels, other.length
            )));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor1D::from_vec(2, 3, vec![0.0; 5]).is_err());
        assert!(Tensor1D::from_vec(0, 3, vec![]).is_err());
        assert!(Tensor1D::from_channels(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn concat_and_slice_are_inverse() {
        let a = Tensor1D::from_channels(&[vec![1.0, 2.0]]).unwrap();
        let b = Tensor1D::from_channels(&[vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let ab = Tensor1D::concat(&[&a, &b]).unwrap();
        assert_eq!(ab.channels(), 3);
        assert_eq!(ab.channel(2), &[5.0, 6.0]);
        assert_eq!(ab.slice_channels(1, 2).unwrap(), b);
        assert_eq!(ab.slice_channels(0, 1).unwrap(), a);
    }

    #[test]
    fn grad_buffer_matches_values() {
        let mut t = Tensor1D::zeros(3, 4);
        assert!(t.grad().is_none());
        assert_eq!(t.grad_mut().len(), 12);
    }
}
