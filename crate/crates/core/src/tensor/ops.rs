//! Forward kernels and their input vector-Jacobian products.
//!
//! Reductions accumulate in f64 and round once on output; the summation order
//! is fixed so results are bitwise reproducible.

use super::{ensure_same_shape, Tensor};
use crate::error::{Error, Result};

/// Output length of a strided window op along one axis.
pub fn window_output_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape("stride must be at least 1"));
    }
    if kernel == 0 {
        return Err(Error::shape("kernel size must be at least 1"));
    }
    let padded = input + 2 * padding;
    if padded < kernel {
        return Err(Error::shape(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output indices `o` in `lo..hi` for which `o * stride + k - padding` lands
/// inside `0..input`.
fn valid_outputs(k: usize, padding: usize, stride: usize, input: usize, output: usize) -> (usize, usize) {
    let lo = if k >= padding { 0 } else { (padding - k).div_ceil(stride) };
    let hi = if input + padding > k {
        ((input - 1 + padding - k) / stride + 1).min(output)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn dims4(t: &Tensor, what: &str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [a, b, c, d] => Ok((a, b, c, d)),
        ref other => Err(Error::shape(format!(
            "{what}: expected a 4-d weight tensor, got {other:?}"
        ))),
    }
}

fn conv_dims(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize, usize, usize, usize, usize, usize, usize)> {
    let (cin, h, w) = input.dims3()?;
    let (cout, wcin, kh, kw) = dims4(weights, "conv2d")?;
    if wcin != cin {
        return Err(Error::shape(format!(
            "conv2d: weights expect {wcin} input channels, input has {cin}"
        )));
    }
    let oh = window_output_dim(h, kh, stride, padding)?;
    let ow = window_output_dim(w, kw, stride, padding)?;
    Ok((cin, h, w, cout, kh, kw, oh, ow))
}

/// Cross-correlation with zero padding.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let (cin, h, w, cout, kh, kw, oh, ow) = conv_dims(input, weights, stride, padding)?;
    if bias.shape() != [cout] {
        return Err(Error::shape(format!(
            "conv2d: bias shape {:?}, expected [{cout}]",
            bias.shape()
        )));
    }
    let wd = weights.data();
    let mut out = Vec::with_capacity(cout * oh * ow);
    let mut acc = vec![0f64; oh * ow];
    for co in 0..cout {
        acc.fill(bias.data()[co] as f64);
        for ci in 0..cin {
            let plane = input.plane(ci);
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_outputs(ky, padding, stride, h, oh);
                for kx in 0..kw {
                    let wv = wd[((co * cin + ci) * kh + ky) * kw + kx] as f64;
                    let (ox_lo, ox_hi) = valid_outputs(kx, padding, stride, w, ow);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - padding;
                        let row = &plane[iy * w..(iy + 1) * w];
                        let arow = &mut acc[oy * ow..(oy + 1) * ow];
                        for ox in ox_lo..ox_hi {
                            arow[ox] += wv * row[ox * stride + kx - padding] as f64;
                        }
                    }
                }
            }
        }
        out.extend(acc.iter().map(|&v| v as f32));
    }
    Ok(Tensor::from_parts(vec![cout, oh, ow], out))
}

/// Gradient of `sum(conv2d_forward(input) * upstream)` with respect to `input`.
pub fn conv2d_vjp(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    padding: usize,
    upstream: &Tensor,
) -> Result<Tensor> {
    let (cin, h, w, cout, kh, kw, oh, ow) = conv_dims(input, weights, stride, padding)?;
    if upstream.shape() != [cout, oh, ow] {
        return Err(Error::shape(format!(
            "conv2d_vjp: upstream shape {:?}, expected [{cout}, {oh}, {ow}]",
            upstream.shape()
        )));
    }
    let wd = weights.data();
    let mut acc = vec![0f64; cin * h * w];
    for co in 0..cout {
        let gplane = upstream.plane(co);
        for ci in 0..cin {
            let aplane = &mut acc[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_outputs(ky, padding, stride, h, oh);
                for kx in 0..kw {
                    let wv = wd[((co * cin + ci) * kh + ky) * kw + kx] as f64;
                    let (ox_lo, ox_hi) = valid_outputs(kx, padding, stride, w, ow);
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - padding;
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        let arow = &mut aplane[iy * w..(iy + 1) * w];
                        for ox in ox_lo..ox_hi {
                            arow[ox * stride + kx - padding] += wv * grow[ox] as f64;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(
        input.shape().to_vec(),
        acc.into_iter().map(|v| v as f32).collect(),
    ))
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

pub fn relu_vjp(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    input.zip_map(upstream, |x, g| if x > 0.0 { g } else { 0.0 })
}

#[derive(Clone, Copy, Debug)]
struct Window {
    c: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
}

impl Window {
    fn new(input: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Self> {
        let (c, h, w) = input.dims3()?;
        if padding >= kernel {
            return Err(Error::shape(format!(
                "pooling padding {padding} must be smaller than kernel {kernel}"
            )));
        }
        Ok(Self {
            c,
            h,
            w,
            oh: window_output_dim(h, kernel, stride, padding)?,
            ow: window_output_dim(w, kernel, stride, padding)?,
            kernel,
            stride,
            padding,
        })
    }

    fn out_shape(&self) -> Vec<usize> {
        vec![self.c, self.oh, self.ow]
    }

    /// In-bounds input offsets (within one plane) covered by output `(oy, ox)`,
    /// in row-major scan order.
    fn taps(&self, oy: usize, ox: usize) -> impl Iterator<Item = usize> + '_ {
        let y0 = (oy * self.stride) as isize - self.padding as isize;
        let x0 = (ox * self.stride) as isize - self.padding as isize;
        (0..self.kernel).flat_map(move |ky| {
            (0..self.kernel).filter_map(move |kx| {
                let iy = y0 + ky as isize;
                let ix = x0 + kx as isize;
                (iy >= 0 && ix >= 0 && (iy as usize) < self.h && (ix as usize) < self.w)
                    .then(|| iy as usize * self.w + ix as usize)
            })
        })
    }

    fn check_upstream(&self, upstream: &Tensor, op: &str) -> Result<()> {
        if upstream.shape() != [self.c, self.oh, self.ow] {
            return Err(Error::shape(format!(
                "{op}: upstream shape {:?}, expected {:?}",
                upstream.shape(),
                self.out_shape()
            )));
        }
        Ok(())
    }
}

fn argmax_tap(win: &Window, plane: &[f32], oy: usize, ox: usize) -> usize {
    let mut best = f32::NEG_INFINITY;
    let mut best_idx = usize::MAX;
    for idx in win.taps(oy, ox) {
        // strict comparison: first element in scan order wins ties
        if plane[idx] > best || best_idx == usize::MAX {
            best = plane[idx];
            best_idx = idx;
        }
    }
    best_idx
}

pub fn maxpool2d_forward(input: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let win = Window::new(input, kernel, stride, padding)?;
    let mut out = Vec::with_capacity(win.c * win.oh * win.ow);
    for c in 0..win.c {
        let plane = input.plane(c);
        for oy in 0..win.oh {
            for ox in 0..win.ow {
                out.push(plane[argmax_tap(&win, plane, oy, ox)]);
            }
        }
    }
    Ok(Tensor::from_parts(win.out_shape(), out))
}

/// Routes each upstream value to the argmax of its window.
pub fn maxpool2d_vjp(
    input: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
    upstream: &Tensor,
) -> Result<Tensor> {
    let win = Window::new(input, kernel, stride, padding)?;
    win.check_upstream(upstream, "maxpool2d_vjp")?;
    let plane_len = win.h * win.w;
    let mut acc = vec![0f64; input.len()];
    for c in 0..win.c {
        let plane = input.plane(c);
        let gplane = upstream.plane(c);
        for oy in 0..win.oh {
            for ox in 0..win.ow {
                let idx = argmax_tap(&win, plane, oy, ox);
                acc[c * plane_len + idx] += gplane[oy * win.ow + ox] as f64;
            }
        }
    }
    Ok(Tensor::from_parts(
        input.shape().to_vec(),
        acc.into_iter().map(|v| v as f32).collect(),
    ))
}

/// Average over in-bounds taps only (padding is not counted).
pub fn avgpool2d_forward(input: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let win = Window::new(input, kernel, stride, padding)?;
    let mut out = Vec::with_capacity(win.c * win.oh * win.ow);
    for c in 0..win.c {
        let plane = input.plane(c);
        for oy in 0..win.oh {
            for ox in 0..win.ow {
                let (sum, n) = win
                    .taps(oy, ox)
                    .fold((0f64, 0usize), |(s, n), i| (s + plane[i] as f64, n + 1));
                out.push((sum / n as f64) as f32);
            }
        }
    }
    Ok(Tensor::from_parts(win.out_shape(), out))
}

pub fn avgpool2d_vjp(
    input: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
    upstream: &Tensor,
) -> Result<Tensor> {
    let win = Window::new(input, kernel, stride, padding)?;
    win.check_upstream(upstream, "avgpool2d_vjp")?;
    let plane_len = win.h * win.w;
    let mut acc = vec![0f64; input.len()];
    for c in 0..win.c {
        let gplane = upstream.plane(c);
        for oy in 0..win.oh {
            for ox in 0..win.ow {
                let n = win.taps(oy, ox).count() as f64;
                let g = gplane[oy * win.ow + ox] as f64 / n;
                for i in win.taps(oy, ox) {
                    acc[c * plane_len + i] += g;
                }
            }
        }
    }
    Ok(Tensor::from_parts(
        input.shape().to_vec(),
        acc.into_iter().map(|v| v as f32).collect(),
    ))
}

fn dense_dims(input: &Tensor, weights: &Tensor) -> Result<(usize, usize)> {
    let (out_f, in_f) = match *weights.shape() {
        [o, i] => (o, i),
        ref other => {
            return Err(Error::shape(format!(
                "dense: expected [out, in] weights, got {other:?}"
            )))
        }
    };
    if input.len() != in_f {
        return Err(Error::shape(format!(
            "dense: weights expect {in_f} input features, input has {}",
            input.len()
        )));
    }
    Ok((out_f, in_f))
}

/// Fully connected layer over the flattened input.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (out_f, in_f) = dense_dims(input, weights)?;
    if bias.shape() != [out_f] {
        return Err(Error::shape(format!(
            "dense: bias shape {:?}, expected [{out_f}]",
            bias.shape()
        )));
    }
    let x = input.data();
    let out = weights
        .data()
        .chunks_exact(in_f)
        .zip(bias.data())
        .map(|(row, &b)| {
            let acc = row
                .iter()
                .zip(x)
                .fold(b as f64, |acc, (&w, &v)| acc + w as f64 * v as f64);
            acc as f32
        })
        .collect();
    Ok(Tensor::from_parts(vec![out_f], out))
}

pub fn dense_vjp(input: &Tensor, weights: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let (out_f, in_f) = dense_dims(input, weights)?;
    if upstream.shape() != [out_f] {
        return Err(Error::shape(format!(
            "dense_vjp: upstream shape {:?}, expected [{out_f}]",
            upstream.shape()
        )));
    }
    let mut acc = vec![0f64; in_f];
    for (row, &g) in weights.data().chunks_exact(in_f).zip(upstream.data()) {
        for (a, &w) in acc.iter_mut().zip(row) {
            *a += w as f64 * g as f64;
        }
    }
    Ok(Tensor::from_parts(
        input.shape().to_vec(),
        acc.into_iter().map(|v| v as f32).collect(),
    ))
}

/// Outer extent, per-input axis lengths and inner extent for a concat.
fn concat_layout(shapes: &[&[usize]], axis: usize) -> Result<(usize, Vec<usize>, usize)> {
    let first = shapes
        .first()
        .ok_or_else(|| Error::shape("concat needs at least one input"))?;
    if axis >= first.len() {
        return Err(Error::shape(format!(
            "concat axis {axis} out of range for rank {}",
            first.len()
        )));
    }
    for s in shapes {
        let compatible = s.len() == first.len()
            && s.iter()
                .zip(first.iter())
                .enumerate()
                .all(|(d, (a, b))| d == axis || a == b);
        if !compatible {
            return Err(Error::shape(format!(
                "concat: shapes {first:?} and {s:?} differ outside axis {axis}"
            )));
        }
    }
    let outer = first[..axis].iter().product();
    let inner = first[axis + 1..].iter().product();
    Ok((outer, shapes.iter().map(|s| s[axis]).collect(), inner))
}

pub fn concat_output_shape(shapes: &[&[usize]], axis: usize) -> Result<Vec<usize>> {
    let (_, lens, _) = concat_layout(shapes, axis)?;
    let mut out = shapes[0].to_vec();
    out[axis] = lens.iter().sum();
    Ok(out)
}

pub fn concat_forward(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let shapes: Vec<&[usize]> = inputs.iter().map(|t| t.shape()).collect();
    let (outer, lens, inner) = concat_layout(&shapes, axis)?;
    let out_shape = concat_output_shape(&shapes, axis)?;
    let mut out = Vec::with_capacity(out_shape.iter().product());
    for o in 0..outer {
        for (t, &len) in inputs.iter().zip(&lens) {
            let chunk = len * inner;
            out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// Splits `upstream` back into pieces shaped like the concat inputs.
pub fn concat_vjp(input_shapes: &[&[usize]], axis: usize, upstream: &Tensor) -> Result<Vec<Tensor>> {
    let (outer, lens, inner) = concat_layout(input_shapes, axis)?;
    let expected = concat_output_shape(input_shapes, axis)?;
    if upstream.shape() != expected.as_slice() {
        return Err(Error::shape(format!(
            "concat_vjp: upstream shape {:?}, expected {expected:?}",
            upstream.shape()
        )));
    }
    let total: usize = lens.iter().sum::<usize>() * inner;
    let mut parts: Vec<Vec<f32>> = lens.iter().map(|l| Vec::with_capacity(outer * l * inner)).collect();
    let g = upstream.data();
    for o in 0..outer {
        let mut offset = o * total;
        for (part, &len) in parts.iter_mut().zip(&lens) {
            part.extend_from_slice(&g[offset..offset + len * inner]);
            offset += len * inner;
        }
    }
    Ok(parts
        .into_iter()
        .zip(input_shapes)
        .map(|(data, shape)| Tensor::from_parts(shape.to_vec(), data))
        .collect())
}

/// Softmax over the last axis, stabilized by subtracting the row maximum.
pub fn softmax_forward(input: &Tensor) -> Tensor {
    let n = *input.shape().last().expect("tensor rank >= 1");
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks_exact(n) {
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| (e / total) as f32));
    }
    Tensor::from_parts(input.shape().to_vec(), out)
}

pub fn softmax_vjp(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    ensure_same_shape(input, upstream, "softmax_vjp")?;
    let y = softmax_forward(input);
    let n = *input.shape().last().expect("tensor rank >= 1");
    let mut out = Vec::with_capacity(input.len());
    for (yr, gr) in y.data().chunks_exact(n).zip(upstream.data().chunks_exact(n)) {
        let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a as f64 * b as f64).sum();
        out.extend(
            yr.iter()
                .zip(gr)
                .map(|(&a, &b)| (a as f64 * (b as f64 - dot)) as f32),
        );
    }
    Ok(Tensor::from_parts(input.shape().to_vec(), out))
}

pub fn add_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.zip_map(b, |x, y| x + y)
}

/// `[C, H, W]` → `[C]`.
pub fn global_avgpool_forward(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    let n = (h * w) as f64;
    let out = (0..c)
        .map(|ch| (input.plane(ch).iter().map(|&v| v as f64).sum::<f64>() / n) as f32)
        .collect();
    Ok(Tensor::from_parts(vec![c], out))
}

pub fn global_avgpool_vjp(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if upstream.shape() != [c] {
        return Err(Error::shape(format!(
            "globalavgpool_vjp: upstream shape {:?}, expected [{c}]",
            upstream.shape()
        )));
    }
    let n = (h * w) as f64;
    let data = upstream
        .data()
        .iter()
        .flat_map(|&g| std::iter::repeat_n((g as f64 / n) as f32, h * w))
        .collect();
    Ok(Tensor::from_parts(input.shape().to_vec(), data))
}
