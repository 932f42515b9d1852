use super::{ConvLayer, FeatureMaps, LayerKind, NetworkSpec};
use crate::error::{Error, Result};
use crate::numerics::{ImageBuffer, Tensor};

/// Activations of every layer up to the deepest one requested, with the
/// pooling argmax routes needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    outputs: Vec<Tensor>,
    argmax: Vec<Option<Vec<u32>>>,
    input_shape: [usize; 3],
}

fn conv_forward(conv: &ConvLayer, input: &Tensor) -> Tensor {
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    debug_assert_eq!(c_in, conv.in_ch);
    let plane = h * w;
    let (ph, pw) = ((conv.kh / 2) as isize, (conv.kw / 2) as isize);
    let mut out = vec![0.0; conv.out_ch * plane];
    let src = input.data();
    for o in 0..conv.out_ch {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        out_plane.iter_mut().for_each(|v| *v = conv.bias[o]);
        for i in 0..c_in {
            let in_plane = &src[i * plane..(i + 1) * plane];
            for ky in 0..conv.kh {
                let dy = ky as isize - ph;
                for kx in 0..conv.kw {
                    let wv = conv.weight(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - pw;
                    let (y0, y1) = ((-dy).max(0) as usize, (h as isize - dy.max(0)) as usize);
                    let (x0, x1) = ((-dx).max(0) as usize, (w as isize - dx.max(0)) as usize);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let orow = &mut out_plane[y * w + x0..y * w + x1];
                        let start = sy * w + (x0 as isize + dx) as usize;
                        let irow = &in_plane[start..start + (x1 - x0)];
                        for (ov, iv) in orow.iter_mut().zip(irow) {
                            *ov += wv * iv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![conv.out_ch, h, w], out)
}

fn conv_backward(conv: &ConvLayer, grad_out: &Tensor) -> Tensor {
    let (h, w) = (grad_out.shape()[1], grad_out.shape()[2]);
    let plane = h * w;
    let (ph, pw) = ((conv.kh / 2) as isize, (conv.kw / 2) as isize);
    let mut grad_in = vec![0.0; conv.in_ch * plane];
    let g = grad_out.data();
    for i in 0..conv.in_ch {
        let gin_plane = &mut grad_in[i * plane..(i + 1) * plane];
        for o in 0..conv.out_ch {
            let gout_plane = &g[o * plane..(o + 1) * plane];
            for ky in 0..conv.kh {
                let dy = ky as isize - ph;
                for kx in 0..conv.kw {
                    let wv = conv.weight(o, i, ky, kx);
                    if wv == 0.0 {
                        continue;
                    }
                    let dx = kx as isize - pw;
                    let (y0, y1) = ((-dy).max(0) as usize, (h as isize - dy.max(0)) as usize);
                    let (x0, x1) = ((-dx).max(0) as usize, (w as isize - dx.max(0)) as usize);
                    if x0 >= x1 {
                        continue;
                    }
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let grow = &gout_plane[y * w + x0..y * w + x1];
                        let start = sy * w + (x0 as isize + dx) as usize;
                        let irow = &mut gin_plane[start..start + (x1 - x0)];
                        for (iv, gv) in irow.iter_mut().zip(grow) {
                            *iv += wv * gv;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_parts(vec![conv.in_ch, h, w], grad_in)
}

fn relu_forward(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::from_parts(input.shape().to_vec(), data)
}

fn maxpool_forward(input: &Tensor) -> (Tensor, Vec<u32>) {
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut route = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let candidates = [
                    base + 2 * oy * w + 2 * ox,
                    base + 2 * oy * w + 2 * ox + 1,
                    base + (2 * oy + 1) * w + 2 * ox,
                    base + (2 * oy + 1) * w + 2 * ox + 1,
                ];
                let mut best = candidates[0];
                for &idx in &candidates[1..] {
                    // strict comparison keeps the first index on ties
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                route.push(best as u32);
            }
        }
    }
    (Tensor::from_parts(vec![c, oh, ow], out), route)
}

fn network_input(net: &NetworkSpec, image: &ImageBuffer) -> Tensor {
    let rgb = if image.channels() == 1 { image.replicate3() } else { image.clone() };
    let mean = net.mean();
    let mut data = rgb.into_data();
    let plane = image.pixels();
    for (c, m) in mean.iter().enumerate() {
        data[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v -= m);
    }
    Tensor::from_parts(vec![3, image.height(), image.width()], data)
}

impl ForwardPass {
    /// Runs layers `0..=last`.
    pub fn run(net: &NetworkSpec, image: &ImageBuffer, last: usize) -> Result<Self> {
        if last >= net.layers().len() {
            return Err(Error::InvalidArgument(format!("layer index {last} out of range")));
        }
        let stages = net.pools_before(last);
        let mut x = network_input(net, image);
        let mut outputs = Vec::with_capacity(last + 1);
        let mut argmax = Vec::with_capacity(last + 1);
        for layer in &net.layers()[..=last] {
            let (y, route) = match &layer.kind {
                LayerKind::Conv(conv) => (conv_forward(conv, &x), None),
                LayerKind::Relu => (relu_forward(&x), None),
                LayerKind::MaxPool => {
                    if x.shape()[1] < 2 || x.shape()[2] < 2 {
                        return Err(Error::ImageTooSmall { width: image.width(), height: image.height(), stages });
                    }
                    let (y, r) = maxpool_forward(&x);
                    (y, Some(r))
                }
            };
            outputs.push(y.clone());
            argmax.push(route);
            x = y;
        }
        Ok(Self { outputs, argmax, input_shape: [3, image.height(), image.width()] })
    }

    pub fn output(&self, index: usize) -> &Tensor {
        &self.outputs[index]
    }

    pub fn depth(&self) -> usize {
        self.outputs.len()
    }

    /// Gradient of `sum_l <cotangent_l, output_l>` with respect to the
    /// three network input channels (after mean subtraction, which has unit
    /// Jacobian).
    pub fn backward(&self, net: &NetworkSpec, cotangents: &[(usize, &Tensor)]) -> Result<Tensor> {
        for (idx, t) in cotangents {
            if *idx >= self.outputs.len() {
                return Err(Error::InvalidArgument(format!("cotangent for layer {idx} beyond recorded depth")));
            }
            if t.shape() != self.outputs[*idx].shape() {
                return Err(Error::DimensionMismatch(format!(
                    "cotangent for {} has shape {:?}, activation has {:?}",
                    net.layers()[*idx].name,
                    t.shape(),
                    self.outputs[*idx].shape()
                )));
            }
        }
        let Some(deepest) = cotangents.iter().map(|(i, _)| *i).max() else {
            return Ok(Tensor::zeros(self.input_shape.to_vec()));
        };
        let mut grad: Option<Tensor> = None;
        for idx in (0..=deepest).rev() {
            for (_, t) in cotangents.iter().filter(|(i, _)| *i == idx) {
                match grad.as_mut() {
                    Some(g) => g.data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b),
                    None => grad = Some((*t).clone()),
                }
            }
            let Some(g) = grad.take() else { continue };
            let input_shape = if idx == 0 { self.input_shape.to_vec() } else { self.outputs[idx - 1].shape().to_vec() };
            let g_in = match &net.layers()[idx].kind {
                LayerKind::Conv(conv) => conv_backward(conv, &g),
                LayerKind::Relu => {
                    let out = self.outputs[idx].data();
                    let data = g.data().iter().zip(out).map(|(gv, &o)| if o > 0.0 { *gv } else { 0.0 }).collect();
                    Tensor::from_parts(input_shape, data)
                }
                LayerKind::MaxPool => {
                    let route = self.argmax[idx].as_ref().expect("pool route recorded");
                    let mut data = vec![0.0; input_shape.iter().product()];
                    for (gv, &r) in g.data().iter().zip(route) {
                        data[r as usize] += gv;
                    }
                    Tensor::from_parts(input_shape, data)
                }
            };
            grad = Some(g_in);
        }
        Ok(grad.unwrap_or_else(|| Tensor::zeros(self.input_shape.to_vec())))
    }
}

fn resolve(net: &NetworkSpec, name: &str) -> Result<usize> {
    net.index_of(name).ok_or_else(|| Error::InvalidArgument(format!("unknown layer {name}")))
}

/// Activations at the named layers.
pub fn forward(net: &NetworkSpec, image: &ImageBuffer, layers: &[String]) -> Result<FeatureMaps> {
    let indices = layers.iter().map(|n| resolve(net, n)).collect::<Result<Vec<_>>>()?;
    let mut maps = FeatureMaps::default();
    let Some(&last) = indices.iter().max() else { return Ok(maps) };
    let pass = ForwardPass::run(net, image, last)?;
    for (name, idx) in layers.iter().zip(indices) {
        maps.push(name.clone(), pass.output(idx).clone());
    }
    Ok(maps)
}

/// Gradient image (3 channels, input resolution) of
/// `sum_l <cotangent_l, F^l(image)>`.
pub fn backward_to_input(net: &NetworkSpec, image: &ImageBuffer, cotangents: &[(String, Tensor)]) -> Result<ImageBuffer> {
    let indexed = cotangents.iter().map(|(n, t)| Ok((resolve(net, n)?, t))).collect::<Result<Vec<_>>>()?;
    let last = indexed.iter().map(|(i, _)| *i).max().unwrap_or(0);
    let pass = ForwardPass::run(net, image, last)?;
    let g = pass.backward(net, &indexed)?;
    ImageBuffer::from_planar(image.width(), image.height(), 3, g.into_data())
}
