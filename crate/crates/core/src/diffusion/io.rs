//! Model files: `ECF1` magic, a fixed header, then every layer as
//! little-endian `f32` values (weights row-major, then bias) in storage order.

use std::path::Path;

use super::model::{DenoiserParams, ModelDims, NUM_LAYERS};
use super::DiffusionError;

pub const MAGIC: &[u8; 4] = b"ECF1";
pub const MODEL_FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DiffusionError> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| DiffusionError::ModelFormat(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(chunk.try_into().expect("slice length checked"))
    }

    fn u32(&mut self) -> Result<u32, DiffusionError> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn dim(&mut self) -> Result<usize, DiffusionError> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64, DiffusionError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn f32(&mut self) -> Result<f64, DiffusionError> {
        Ok(f32::from_le_bytes(self.take()?) as f64)
    }
}

fn dim_u32(v: usize) -> Result<[u8; 4], DiffusionError> {
    u32::try_from(v)
        .map(u32::to_le_bytes)
        .map_err(|_| DiffusionError::ModelFormat(format!("dimension {v} does not fit in u32")))
}

pub fn model_to_bytes(params: &DenoiserParams) -> Result<Vec<u8>, DiffusionError> {
    let d = &params.dims;
    let mut out = Vec::with_capacity(128 + 4 * params.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    for v in [
        d.num_points,
        d.horizon,
        d.image_width,
        d.image_height,
        d.task_dim,
        d.temb_dim,
        d.cond_dim,
        d.hidden,
        d.steps,
    ] {
        out.extend_from_slice(&dim_u32(v)?);
    }
    out.extend_from_slice(&d.schedule_offset.to_le_bytes());
    out.extend_from_slice(&d.lambda.to_le_bytes());
    out.extend_from_slice(&d.seed.to_le_bytes());
    out.extend_from_slice(&dim_u32(params.layers.len())?);
    for layer in &params.layers {
        out.extend_from_slice(&dim_u32(layer.w.nrows())?);
        out.extend_from_slice(&dim_u32(layer.w.ncols())?);
    }
    for v in params.to_flat() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<DenoiserParams, DiffusionError> {
    let mut r = Reader { bytes, pos: 0 };
    if &r.take::<4>()? != MAGIC {
        return Err(DiffusionError::ModelFormat("bad magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(DiffusionError::ModelFormat(format!("unsupported version {version}")));
    }
    let dims = ModelDims {
        num_points: r.dim()?,
        horizon: r.dim()?,
        image_width: r.dim()?,
        image_height: r.dim()?,
        task_dim: r.dim()?,
        temb_dim: r.dim()?,
        cond_dim: r.dim()?,
        hidden: r.dim()?,
        steps: r.dim()?,
        schedule_offset: r.f64()?,
        lambda: r.f64()?,
        seed: u64::from_le_bytes(r.take()?),
    };
    let count = r.dim()?;
    if count != NUM_LAYERS {
        return Err(DiffusionError::ModelFormat(format!("{count} layers, expected {NUM_LAYERS}")));
    }
    for (k, want) in dims.layer_shapes().iter().enumerate() {
        let got = (r.dim()?, r.dim()?);
        if got != *want {
            return Err(DiffusionError::ModelFormat(format!("layer {k} is {got:?}, header implies {want:?}")));
        }
    }
    let mut params = DenoiserParams::init(dims).map_err(|e| DiffusionError::ModelFormat(e.to_string()))?;
    let values = (0..params.num_params()).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
    if r.pos != bytes.len() {
        return Err(DiffusionError::ModelFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    params.set_flat(&values)?;
    if !params.is_finite() {
        return Err(DiffusionError::ModelFormat("non-finite weight".into()));
    }
    Ok(params)
}

pub fn save_model(path: &Path, params: &DenoiserParams) -> Result<(), DiffusionError> {
    std::fs::write(path, model_to_bytes(params)?).map_err(|source| DiffusionError::Io { path: path.into(), source })
}

pub fn load_model(path: &Path) -> Result<DenoiserParams, DiffusionError> {
    let bytes = std::fs::read(path).map_err(|source| DiffusionError::Io { path: path.into(), source })?;
    model_from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::model::tests::micro_dims;

    #[test]
    fn round_trip_is_f32_exact() {
        let params = DenoiserParams::init(micro_dims(5, 3, 4)).unwrap();
        let bytes = model_to_bytes(&params).unwrap();
        assert_eq!(&bytes[..4], MAGIC);
        let back = model_from_bytes(&bytes).unwrap();
        assert_eq!(back, params.quantized());
        assert_eq!(model_to_bytes(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let params = DenoiserParams::init(micro_dims(2, 2, 1)).unwrap();
        let bytes = model_to_bytes(&params).unwrap();
        assert!(model_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(model_from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(model_from_bytes(&magic), Err(DiffusionError::ModelFormat(_))));
        let mut dims = bytes;
        dims[8] = 9; // num_points no longer matches the layer shapes
        assert!(matches!(model_from_bytes(&dims), Err(DiffusionError::ModelFormat(_))));
    }
}
