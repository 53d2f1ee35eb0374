//! Flow tensors and gray images: the two arrays the diffusion model produces.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

/// Channel index of the normalized horizontal coordinate `u / width`.
pub const CH_U: usize = 0;
/// Channel index of the normalized vertical coordinate `v / height`.
pub const CH_V: usize = 1;
/// Channel index of visibility.
pub const CH_VIS: usize = 2;
pub const CHANNELS: usize = 3;

/// `num_points × horizon × 3` array of `(u/width, v/height, visibility)`.
///
/// Stored point-major: the three channels of frame `t` of point `i` sit at
/// `(i * horizon + t) * 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTensor {
    num_points: usize,
    horizon: usize,
    data: Vec<f64>,
}

impl FlowTensor {
    pub fn zeros(num_points: usize, horizon: usize) -> Self {
        Self {
            num_points,
            horizon,
            data: vec![0.0; num_points * horizon * CHANNELS],
        }
    }

    pub fn from_vec(num_points: usize, horizon: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected = num_points * horizon * CHANNELS;
        if data.len() != expected {
            return Err(TensorError::ShapeMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Self {
            num_points,
            horizon,
            data,
        })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    #[inline]
    pub fn index(&self, point: usize, frame: usize, channel: usize) -> usize {
        (point * self.horizon + frame) * CHANNELS + channel
    }

    #[inline]
    pub fn get(&self, point: usize, frame: usize, channel: usize) -> f64 {
        self.data[self.index(point, frame, channel)]
    }

    #[inline]
    pub fn set(&mut self, point: usize, frame: usize, channel: usize, value: f64) {
        let i = self.index(point, frame, channel);
        self.data[i] = value;
    }

    /// Denormalized pixel position of a point at a frame.
    pub fn pixel(&self, point: usize, frame: usize, width: u32, height: u32) -> [f64; 2] {
        [
            self.get(point, frame, CH_U) * width as f64,
            self.get(point, frame, CH_V) * height as f64,
        ]
    }

    pub fn set_pixel(&mut self, point: usize, frame: usize, width: u32, height: u32, uv: [f64; 2]) {
        self.set(point, frame, CH_U, uv[0] / width as f64);
        self.set(point, frame, CH_V, uv[1] / height as f64);
    }

    pub fn visibility(&self, point: usize, frame: usize) -> f64 {
        self.get(point, frame, CH_VIS)
    }

    /// `true` for every entry belonging to frame 0.
    pub fn frame0_mask(&self) -> impl Iterator<Item = bool> + '_ {
        let horizon = self.horizon;
        (0..self.data.len()).map(move |k| (k / CHANNELS) % horizon == 0)
    }

    /// Frame-0 slice as a `num_points × 3` row-major vector.
    pub fn start_points(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_points * CHANNELS);
        for i in 0..self.num_points {
            let k = self.index(i, 0, 0);
            out.extend_from_slice(&self.data[k..k + CHANNELS]);
        }
        out
    }

    /// Overwrites frame 0 with a `num_points × 3` slice.
    pub fn set_start_points(&mut self, start: &[f64]) -> Result<(), TensorError> {
        if start.len() != self.num_points * CHANNELS {
            return Err(TensorError::ShapeMismatch {
                expected: self.num_points * CHANNELS,
                got: start.len(),
            });
        }
        for i in 0..self.num_points {
            let k = self.index(i, 0, 0);
            self.data[k..k + CHANNELS].copy_from_slice(&start[i * CHANNELS..(i + 1) * CHANNELS]);
        }
        Ok(())
    }

    /// Values rounded through `f32`, i.e. exactly what survives a save/load.
    pub fn quantized(&self) -> Self {
        Self {
            num_points: self.num_points,
            horizon: self.horizon,
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }

    /// Little-endian `f32` values, no header.
    pub fn to_bytes(&self) -> Vec<u8> {
        f32_bytes(&self.data)
    }

    pub fn from_bytes(num_points: usize, horizon: usize, bytes: &[u8]) -> Result<Self, TensorError> {
        Self::from_vec(num_points, horizon, f32_values(bytes)?)
    }
}

/// Row-major gray image with values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != width * height {
            return Err(TensorError::ShapeMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn clamped(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        f32_bytes(&self.data)
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self, TensorError> {
        Self::from_vec(width, height, f32_values(bytes)?)
    }
}

pub(crate) fn f32_bytes(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect()
}

pub(crate) fn f32_values(bytes: &[u8]) -> Result<Vec<f64>, TensorError> {
    if bytes.len() % 4 != 0 {
        return Err(TensorError::ShapeMismatch {
            expected: bytes.len() / 4 * 4,
            got: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_point_major() {
        let mut f = FlowTensor::zeros(2, 4);
        f.set(1, 2, CH_V, 0.5);
        assert_eq!(f.as_slice()[(4 + 2) * 3 + 1], 0.5);
        assert_eq!(f.frame0_mask().filter(|&m| m).count(), 6);
    }

    #[test]
    fn start_points_round_trip() {
        let data: Vec<f64> = (0..24).map(|k| k as f64).collect();
        let mut f = FlowTensor::from_vec(2, 4, data).unwrap();
        let s = f.start_points();
        assert_eq!(s, vec![0.0, 1.0, 2.0, 12.0, 13.0, 14.0]);
        f.set_start_points(&[9.0; 6]).unwrap();
        assert_eq!(f.get(1, 0, 2), 9.0);
        assert!(f.set_start_points(&[0.0; 5]).is_err());
    }

    #[test]
    fn bytes_round_trip_after_quantization() {
        let data: Vec<f64> = (0..24).map(|k| (k as f64).sqrt() / 7.0).collect();
        let f = FlowTensor::from_vec(2, 4, data).unwrap();
        let back = FlowTensor::from_bytes(2, 4, &f.to_bytes()).unwrap();
        assert_eq!(back, f.quantized());
        assert!(matches!(
            FlowTensor::from_bytes(3, 4, &f.to_bytes()),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }
}
