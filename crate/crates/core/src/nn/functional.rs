//! Differentiable layer primitives. Layers in [`super::layers`] are thin
//! stateful wrappers around these functions.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Output extent of a sliding window: `floor((len + 2p - k) / s) + 1`.
pub fn window_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 {
        return None;
    }
    let padded = len + 2 * padding;
    (padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

fn nchw(op: &'static str, x: &Tensor<impl Element>) -> Result<[usize; 4]> {
    match *x.shape() {
        [n, c, h, w] => Ok([n, c, h, w]),
        ref s => Err(Error::shape(op, format!("expected [N,C,H,W], got {s:?}"))),
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds one image `[C,H,W]` into `[C*kh*kw, OH*OW]`.
fn im2col<T: Element>(img: &[T], g: &ConvGeom, col: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oh in 0..g.oh {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oh * g.ow..(oh + 1) * g.ow];
                    if ih < 0 || ih >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &img[(c * g.h + ih as usize) * g.w..][..g.w];
                    for (ow, v) in line.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        *v = if iw < 0 || iw >= g.w as isize {
                            T::zero()
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds `[C*kh*kw, OH*OW]` into `[C,H,W]`.
fn col2im<T: Element>(col: &[T], g: &ConvGeom, img: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * cols..(row + 1) * cols];
                for oh in 0..g.oh {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut img[(c * g.h + ih as usize) * g.w..][..g.w];
                    for ow in 0..g.ow {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] = dst[iw as usize] + src[oh * g.ow + ow];
                        }
                    }
                }
            }
        }
    }
}

/// 2-D cross-correlation. `x: [N,C,H,W]`, `weight: [O,C,kh,kw]`, `bias: [O]`.
pub fn conv2d<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("conv2d", x)?;
    let [o, wc, kh, kw] = match *weight.shape() {
        [o, c, kh, kw] => [o, c, kh, kw],
        ref s => return Err(Error::shape("conv2d", format!("weight must be [O,C,kh,kw], got {s:?}"))),
    };
    if wc != c {
        return Err(Error::shape(
            "conv2d",
            format!("input has {c} channels, weight expects {wc}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(Error::shape("conv2d", format!("bias must be [{o}], got {:?}", b.shape())));
        }
    }
    let (oh, ow) = match (
        window_output_len(h, kh, stride, padding),
        window_output_len(w, kw, stride, padding),
    ) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
        _ => {
            return Err(Error::shape(
                "conv2d",
                format!("{h}x{w} input with pad {padding} is smaller than {kh}x{kw} kernel"),
            ))
        }
    };
    let g = ConvGeom { c, h, w, kh, kw, stride, pad: padding, oh, ow };
    let (rows, cols) = (g.rows(), g.cols());

    let mut out = vec![T::zero(); n * o * cols];
    let mut col = vec![T::zero(); rows * cols];
    let xd = x.data();
    for b in 0..n {
        im2col(&xd[b * c * h * w..][..c * h * w], &g, &mut col);
        let dst = &mut out[b * o * cols..][..o * cols];
        if let Some(bias) = bias {
            for (oc, chunk) in dst.chunks_mut(cols).enumerate() {
                chunk.fill(bias.data()[oc]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        T::gemm(o, rows, cols, T::one(), weight.data(), (rows as isize, 1), &col, (cols as isize, 1), beta, dst);
    }

    let mut inputs = vec![x, weight];
    if let Some(b) = bias {
        inputs.push(b);
    }
    let (xs, ws, has_bias) = (x.clone(), weight.clone(), bias.is_some());
    let bias_grad = bias.is_some_and(|b| b.requires_grad_flag());
    Tensor::from_op("conv2d", vec![n, o, oh, ow], out, &inputs, move |grad| {
        let xd = xs.data();
        let mut gx = xs.requires_grad_flag().then(|| vec![T::zero(); xs.numel()]);
        let mut gw = ws.requires_grad_flag().then(|| vec![T::zero(); ws.numel()]);
        let mut col = vec![T::zero(); rows * cols];
        let mut dcol = vec![T::zero(); rows * cols];
        for b in 0..n {
            let gb = &grad[b * o * cols..][..o * cols];
            if let Some(gw) = gw.as_mut() {
                im2col(&xd[b * c * h * w..][..c * h * w], &g, &mut col);
                // dW += G_b @ col^T
                T::gemm(o, cols, rows, T::one(), gb, (cols as isize, 1), &col, (1, cols as isize), T::one(), gw);
            }
            if let Some(gx) = gx.as_mut() {
                // dcol = W^T @ G_b
                T::gemm(rows, o, cols, T::one(), ws.data(), (1, rows as isize), gb, (cols as isize, 1), T::zero(), &mut dcol);
                col2im(&dcol, &g, &mut gx[b * c * h * w..][..c * h * w]);
            }
        }
        let mut grads = vec![gx, gw];
        if has_bias {
            grads.push(bias_grad.then(|| {
                let mut gbias = vec![T::zero(); o];
                for chunk in grad.chunks(cols).enumerate() {
                    let (i, ch) = chunk;
                    gbias[i % o] = gbias[i % o] + ch.iter().copied().sum::<T>();
                }
                gbias
            }));
        }
        grads
    })
}

/// Per-channel batch statistics returned by [`batch_norm_train`].
#[derive(Debug, Clone)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (divide-by-count) variance, the one used for normalization.
    pub var: Vec<T>,
    /// Number of values per channel (`N*H*W`).
    pub count: usize,
}

fn channel_layout(op: &'static str, x: &Tensor<impl Element>, channels: usize) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.len() < 2 || s[1] != channels {
        return Err(Error::shape(op, format!("expected [N,{channels},...], got {s:?}")));
    }
    if s[0] == 0 {
        return Err(Error::contract(format!("{op} on an empty batch")));
    }
    let inner: usize = s[2..].iter().product();
    Ok((s[0], inner))
}

/// Training-mode batch normalization over every axis but the channel axis.
pub fn batch_norm_train<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BatchStats<T>)> {
    let ch = gamma.numel();
    let (n, inner) = channel_layout("batch_norm", x, ch)?;
    if beta.numel() != ch {
        return Err(Error::shape("batch_norm", "gamma and beta lengths differ"));
    }
    let count = n * inner;
    let xd = x.data();
    let each = move |c: usize| (0..n).flat_map(move |b| (b * ch + c) * inner..(b * ch + c + 1) * inner);

    let mut mean = vec![T::zero(); ch];
    let mut var = vec![T::zero(); ch];
    for c in 0..ch {
        let m = each(c).map(|i| xd[i].as_f64()).sum::<f64>() / count as f64;
        let v = each(c).map(|i| (xd[i].as_f64() - m).powi(2)).sum::<f64>() / count as f64;
        mean[c] = T::from_f64(m);
        var[c] = T::from_f64(v);
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::from_f64(eps)).sqrt()).collect();

    let mut xhat = vec![T::zero(); xd.len()];
    let mut out = vec![T::zero(); xd.len()];
    for c in 0..ch {
        let (gm, bt) = (gamma.data()[c], beta.data()[c]);
        for i in each(c) {
            xhat[i] = (xd[i] - mean[c]) * inv_std[c];
            out[i] = xhat[i] * gm + bt;
        }
    }

    let stats = BatchStats { mean, var, count };
    let (xs, gs, bs) = (x.clone(), gamma.clone(), beta.clone());
    let y = Tensor::from_op("batch_norm_train", x.shape().to_vec(), out, &[x, gamma, beta], move |g| {
        let mut gx = vec![T::zero(); xs.numel()];
        let mut ggamma = vec![T::zero(); ch];
        let mut gbeta = vec![T::zero(); ch];
        let m = T::from_f64(count as f64);
        for c in 0..ch {
            let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
            for i in each(c) {
                sum_g = sum_g + g[i];
                sum_gx = sum_gx + g[i] * xhat[i];
            }
            ggamma[c] = sum_gx;
            gbeta[c] = sum_g;
            let k = gs.data()[c] * inv_std[c] / m;
            for i in each(c) {
                gx[i] = k * (m * g[i] - sum_g - xhat[i] * sum_gx);
            }
        }
        vec![
            xs.requires_grad_flag().then_some(gx),
            gs.requires_grad_flag().then_some(ggamma),
            bs.requires_grad_flag().then_some(gbeta),
        ]
    })?;
    Ok((y, stats))
}

/// Inference-mode batch normalization with fixed statistics.
pub fn batch_norm_eval<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &[T],
    running_var: &[T],
    eps: f64,
) -> Result<Tensor<T>> {
    let ch = gamma.numel();
    let (n, inner) = channel_layout("batch_norm", x, ch)?;
    if beta.numel() != ch || running_mean.len() != ch || running_var.len() != ch {
        return Err(Error::shape("batch_norm", "parameter lengths differ from channel count"));
    }
    let inv_std: Vec<T> = running_var
        .iter()
        .map(|&v| T::one() / (v + T::from_f64(eps)).sqrt())
        .collect();
    let xd = x.data();
    let mut out = vec![T::zero(); xd.len()];
    for b in 0..n {
        for c in 0..ch {
            let base = (b * ch + c) * inner;
            for i in base..base + inner {
                out[i] = (xd[i] - running_mean[c]) * inv_std[c] * gamma.data()[c] + beta.data()[c];
            }
        }
    }
    let (xs, gs, bs) = (x.clone(), gamma.clone(), beta.clone());
    let rmean = running_mean.to_vec();
    Tensor::from_op("batch_norm_eval", x.shape().to_vec(), out, &[x, gamma, beta], move |g| {
        let xd = xs.data();
        let mut gx = vec![T::zero(); xd.len()];
        let mut ggamma = vec![T::zero(); ch];
        let mut gbeta = vec![T::zero(); ch];
        for b in 0..n {
            for c in 0..ch {
                let base = (b * ch + c) * inner;
                for i in base..base + inner {
                    let xhat = (xd[i] - rmean[c]) * inv_std[c];
                    gx[i] = g[i] * gs.data()[c] * inv_std[c];
                    ggamma[c] = ggamma[c] + g[i] * xhat;
                    gbeta[c] = gbeta[c] + g[i];
                }
            }
        }
        vec![
            xs.requires_grad_flag().then_some(gx),
            gs.requires_grad_flag().then_some(ggamma),
            bs.requires_grad_flag().then_some(gbeta),
        ]
    })
}

/// Max pooling with implicit `-inf` padding.
pub fn max_pool2d<T: Element>(x: &Tensor<T>, kernel: usize, stride: usize, padding: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("max_pool2d", x)?;
    if padding * 2 > kernel {
        return Err(Error::shape("max_pool2d", "padding must be at most half the kernel"));
    }
    let (oh, ow) = match (
        window_output_len(h, kernel, stride, padding),
        window_output_len(w, kernel, stride, padding),
    ) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => (oh, ow),
        _ => return Err(Error::shape("max_pool2d", format!("{h}x{w} input smaller than {kernel}x{kernel} window"))),
    };
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let mut best: Option<(T, usize)> = None;
                for ki in 0..kernel {
                    let ih = (i * stride + ki) as isize - padding as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for kj in 0..kernel {
                        let iw = (j * stride + kj) as isize - padding as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        let idx = base + ih as usize * w + iw as usize;
                        if best.is_none_or(|(b, _)| xd[idx] > b) {
                            best = Some((xd[idx], idx));
                        }
                    }
                }
                let (v, idx) = best.expect("every window overlaps the input");
                out.push(v);
                arg.push(idx);
            }
        }
    }
    let len = x.numel();
    Tensor::from_op("max_pool2d", vec![n, c, oh, ow], out, &[x], move |g| {
        let mut gx = vec![T::zero(); len];
        for (gi, &i) in g.iter().zip(&arg) {
            gx[i] = gx[i] + *gi;
        }
        vec![Some(gx)]
    })
}

/// Global average pool: `[N,C,H,W] -> [N,C,1,1]`.
pub fn adaptive_avg_pool2d<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = nchw("adaptive_avg_pool2d", x)?;
    let area = h * w;
    if area == 0 {
        return Err(Error::shape("adaptive_avg_pool2d", "empty spatial extent"));
    }
    let inv = T::one() / T::from_f64(area as f64);
    let out: Vec<T> = x.data().chunks(area).map(|p| p.iter().copied().sum::<T>() * inv).collect();
    Tensor::from_op("adaptive_avg_pool2d", vec![n, c, 1, 1], out, &[x], move |g| {
        vec![Some(g.iter().flat_map(|&gi| std::iter::repeat_n(gi * inv, area)).collect())]
    })
}

/// `x @ weight^T + bias` with `weight: [out, in]`.
pub fn linear<T: Element>(x: &Tensor<T>, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Result<Tensor<T>> {
    let y = x.matmul(&weight.transpose()?)?;
    match bias {
        Some(b) => y.add(b),
        None => Ok(y),
    }
}

fn rows_cols(op: &'static str, x: &Tensor<impl Element>) -> Result<(usize, usize)> {
    match *x.shape() {
        [n, c] if c >= 1 => Ok((n, c)),
        ref s => Err(Error::shape(op, format!("expected [N,C] with C >= 1, got {s:?}"))),
    }
}

/// Row-wise softmax of `[N,C]` logits, computed after subtracting the row max.
pub fn softmax<T: Element>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = rows_cols("softmax", logits)?;
    let out = softmax_rows(logits.data(), c);
    let y = out.clone();
    Tensor::from_op("softmax", logits.shape().to_vec(), out, &[logits], move |g| {
        let mut gx = vec![T::zero(); g.len()];
        for ((gr, yr), dst) in g.chunks(c).zip(y.chunks(c)).zip(gx.chunks_mut(c)) {
            let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
            for ((d, &gi), &yi) in dst.iter_mut().zip(gr).zip(yr) {
                *d = yi * (gi - dot);
            }
        }
        vec![Some(gx)]
    })
}

pub(crate) fn softmax_rows<T: Element>(x: &[T], c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(c) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - m).exp()));
        let z: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|v| *v = *v / z);
    }
    out
}

/// Mean negative log-likelihood of `labels` under `softmax(logits)`.
pub fn cross_entropy<T: Element>(logits: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    let (n, c) = rows_cols("cross_entropy", logits)?;
    if labels.len() != n {
        return Err(Error::shape(
            "cross_entropy",
            format!("{n} rows of logits but {} labels", labels.len()),
        ));
    }
    if n == 0 {
        return Err(Error::contract("cross_entropy on an empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::index("cross_entropy", format!("label {bad} not in [0, {c})")));
    }
    let mut loss = 0.0f64;
    for (row, &l) in logits.data().chunks(c).zip(labels) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max).as_f64();
        let lse = m + row.iter().map(|v| (v.as_f64() - m).exp()).sum::<f64>().ln();
        loss += lse - row[l].as_f64();
    }
    let loss = T::from_f64(loss / n as f64);
    let probs = softmax_rows(logits.data(), c);
    let labels = labels.to_vec();
    Tensor::from_op("cross_entropy", Vec::new(), vec![loss], &[logits], move |g| {
        let scale = g[0] / T::from_f64(n as f64);
        let mut gx = probs;
        for (row, &l) in gx.chunks_mut(c).zip(&labels) {
            row[l] = row[l] - T::one();
            row.iter_mut().for_each(|v| *v = *v * scale);
        }
        vec![Some(gx)]
    })
}
