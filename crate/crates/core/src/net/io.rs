//! Versioned binary model files and loss-curve CSV.

use std::io::{Read, Write};

use super::{EpochStats, Layout, ModelState, NetConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RMNT";
const VERSION: u32 = 1;

fn write_blob<W: Write>(out: &mut W, bytes: &[u8]) -> Result<()> {
    out.write_all(&(bytes.len() as u64).to_le_bytes())?;
    out.write_all(bytes)?;
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_blob<R: Read>(input: &mut R) -> Result<Vec<u8>> {
    let len = read_u64(input)? as usize;
    if len > 1 << 30 {
        return Err(Error::Format(format!("blob of {len} bytes")));
    }
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

fn write_f64s<W: Write>(out: &mut W, v: &[f64]) -> Result<()> {
    out.write_all(&(v.len() as u64).to_le_bytes())?;
    for x in v {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(input: &mut R, expected: usize) -> Result<Vec<f64>> {
    let n = read_u64(input)? as usize;
    if n != expected {
        return Err(Error::Format(format!("tensor of {n} values, configuration implies {expected}")));
    }
    let mut b = [0u8; 8];
    (0..n)
        .map(|_| {
            input.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        })
        .collect()
}

/// Layout: magic, version (u32), config JSON, RNG state JSON, step (u64),
/// then parameters and both Adam moments as length-prefixed f64 arrays.
pub fn write_model<W: Write>(model: &ModelState, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    write_blob(&mut out, &serde_json::to_vec(&model.config)?)?;
    write_blob(&mut out, &serde_json::to_vec(&model.rng)?)?;
    out.write_all(&model.step.to_le_bytes())?;
    write_f64s(&mut out, &model.params)?;
    write_f64s(&mut out, &model.adam_m)?;
    write_f64s(&mut out, &model.adam_v)?;
    Ok(())
}

pub fn read_model<R: Read>(mut input: R) -> Result<ModelState> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model file".into()));
    }
    let mut v = [0u8; 4];
    input.read_exact(&mut v)?;
    let version = u32::from_le_bytes(v);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let config: NetConfig = serde_json::from_slice(&read_blob(&mut input)?)?;
    config.validate()?;
    let rng = serde_json::from_slice(&read_blob(&mut input)?)?;
    let step = read_u64(&mut input)?;
    let layout = Layout::new(&config);
    let n = layout.n_params;
    let params = read_f64s(&mut input, n)?;
    let adam_m = read_f64s(&mut input, n)?;
    let adam_v = read_f64s(&mut input, n)?;
    Ok(ModelState { config, params, adam_m, adam_v, step, rng, layout })
}

/// CSV `epoch,loss,train_acc`.
pub fn write_loss_curve<W: Write>(curve: &[EpochStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "loss", "train_acc"])?;
    for e in curve {
        w.write_record([e.epoch.to_string(), format!("{:.12e}", e.loss), format!("{:.6}", e.train_acc)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{ImageKind, ImageTensor};
    use crate::net::{build, train};

    #[test]
    fn save_load_is_bit_identical() {
        let cfg = NetConfig {
            input_channels: 5,
            n_filters: 3,
            kernel_size: 4,
            bottleneck_size: 2,
            epochs: 2,
            ..Default::default()
        };
        let img = |s: f64| ImageTensor {
            kind: ImageKind::Rp,
            size: 5,
            source_len: 5,
            data: (0..25).map(|i| (i as f64 * s).sin()).collect(),
        };
        let images = vec![img(0.3), img(0.7), img(1.1)];
        let mut m = build(&cfg).unwrap();
        train(&mut m, &images, &[0, 1, 0]).unwrap();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let back = read_model(&buf[..]).unwrap();
        assert_eq!(back, m);
        for x in &images {
            let a = m.predict_proba(x).unwrap();
            let b = back.predict_proba(x).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        // training continues identically after reload
        let (mut a, mut b) = (m, back);
        assert_eq!(train(&mut a, &images, &[0, 1, 0]).unwrap(), train(&mut b, &images, &[0, 1, 0]).unwrap());
        assert_eq!(a.params, b.params);
        assert!(read_model(&buf[..10]).is_err());
        assert!(read_model(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn loss_curve_csv() {
        let mut buf = Vec::new();
        write_loss_curve(&[EpochStats { epoch: 0, loss: 0.5, train_acc: 0.75 }], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,loss,train_acc\n0,"));
    }
}
