//! `VGGW` weight files.
//!
//! ```text
//! "VGGW" | version u32 | conv count u32 | mean 3 x f32
//! per conv: name (u16 len + bytes) | out u32 | in u32 | kh u32 | kw u32
//!           | weights f32[out*in*kh*kw] (out, in, kh, kw) | bias f32[out]
//! CRC32 u32 over all preceding bytes
//! ```
//! All integers and floats are little-endian. Only convolutions are stored;
//! the ReLU and pooling layers follow from the `conv{block}_{index}` names.

use std::path::Path;

use super::{ConvLayer, NetworkSpec};
use crate::binio::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"VGGW";
pub const VERSION: u32 = 1;
const FORMAT: &str = "VGGW";

pub fn write_weights(net: &NetworkSpec) -> Result<Vec<u8>> {
    let mut w = Writer::new(MAGIC);
    w.u32(VERSION);
    let convs: Vec<_> = net.convs().collect();
    w.u32(convs.len() as u32);
    w.f32s(&net.mean());
    for (name, conv) in convs {
        w.str(name)?;
        for d in [conv.out_ch, conv.in_ch, conv.kh, conv.kw] {
            w.u32(d as u32);
        }
        w.f32s(&conv.weights);
        w.f32s(&conv.bias);
    }
    Ok(w.finish())
}

pub fn read_weights(bytes: &[u8]) -> Result<NetworkSpec> {
    let mut r = Reader::new(FORMAT, MAGIC, bytes)?;
    let header = || "header".to_string();
    let version = r.u32(&header)?;
    if version != VERSION {
        return Err(Error::Version { format: FORMAT, found: version, expected: VERSION });
    }
    let count = r.u32(&header)? as usize;
    let mean = r.f32s(3, &header)?;
    let mut convs = Vec::with_capacity(count);
    for index in 0..count {
        let record = || format!("layer record {index}");
        let name = r.str(&record)?;
        let at = |field: &'static str| {
            let name = name.clone();
            move || format!("{field} of layer {name} (record {index})")
        };
        let out_ch = r.u32(&at("out_ch"))? as usize;
        let in_ch = r.u32(&at("in_ch"))? as usize;
        let kh = r.u32(&at("kh"))? as usize;
        let kw = r.u32(&at("kw"))? as usize;
        let n = out_ch
            .checked_mul(in_ch)
            .and_then(|v| v.checked_mul(kh))
            .and_then(|v| v.checked_mul(kw))
            .ok_or_else(|| Error::format(FORMAT, format!("layer {name}: weight count overflows")))?;
        let weights = r.f32s(n, &at("weights"))?;
        let bias = r.f32s(out_ch, &at("bias"))?;
        let conv = ConvLayer::new(out_ch, in_ch, kh, kw, weights, bias)
            .map_err(|e| Error::format(FORMAT, format!("layer {name}: {e}")))?;
        convs.push((name, conv));
    }
    r.finish()?;
    NetworkSpec::from_convs(convs, [mean[0], mean[1], mean[2]])
}

pub fn save_weights(net: &NetworkSpec, path: &Path) -> Result<()> {
    write_file(path, &write_weights(net)?)
}

pub fn load_weights(path: &Path) -> Result<NetworkSpec> {
    read_weights(&read_file(path)?)
}
