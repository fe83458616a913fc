use ndarray::{concatenate, s, Array2, ArrayD, ArrayView2, Axis, Ix2, IxDyn, Slice, Zip};

use crate::var::{Tensor, Var};
use crate::reduce_to;

fn as2(t: &Tensor) -> ArrayView2<'_, f64> {
    t.view().into_dimensionality::<Ix2>().expect("expected a 2-D tensor")
}

impl Var {
    fn binary(
        &self,
        other: &Var,
        value: Tensor,
        grads: impl Fn(&Tensor, &Tensor, &Tensor) -> (Tensor, Tensor) + Send + Sync + 'static,
    ) -> Var {
        Var::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(move |g, p, _| {
                let (ga, gb) = grads(g, p[0].value(), p[1].value());
                vec![Some(reduce_to(&ga, p[0].shape())), Some(reduce_to(&gb, p[1].shape()))]
            }),
        )
    }

    /// Elementwise sum with numpy-style broadcasting.
    pub fn add(&self, other: &Var) -> Var {
        let value = self.value() + other.value();
        self.binary(other, value, |g, _, _| (g.clone(), g.clone()))
    }

    pub fn sub(&self, other: &Var) -> Var {
        let value = self.value() - other.value();
        self.binary(other, value, |g, _, _| (g.clone(), -g))
    }

    pub fn mul(&self, other: &Var) -> Var {
        let value = self.value() * other.value();
        self.binary(other, value, |g, a, b| (g * b, g * a))
    }

    pub fn div(&self, other: &Var) -> Var {
        let value = self.value() / other.value();
        self.binary(other, value, |g, a, b| {
            let ga = g / b;
            let gb = -(g * a) / (b * b);
            (ga, gb)
        })
    }

    fn unary(&self, value: Tensor, dydx: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Var {
        Var::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g, p, y| {
                let mut out = g.clone();
                Zip::from(&mut out).and(p[0].value()).and(y).for_each(|o, &x, &y| *o *= dydx(x, y));
                vec![Some(out)]
            }),
        )
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Var {
        self.unary(self.value() * c, move |_, _| c)
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        self.unary(self.value() + c, |_, _| 1.0)
    }

    pub fn square(&self) -> Var {
        self.unary(self.value().mapv(|x| x * x), |x, _| 2.0 * x)
    }

    pub fn abs(&self) -> Var {
        self.unary(self.value().mapv(f64::abs), |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }

    pub fn exp(&self) -> Var {
        self.unary(self.value().mapv(f64::exp), |_, y| y)
    }

    pub fn ln(&self) -> Var {
        self.unary(self.value().mapv(f64::ln), |x, _| 1.0 / x)
    }

    pub fn sqrt(&self) -> Var {
        self.unary(self.value().mapv(f64::sqrt), |_, y| 0.5 / y)
    }

    pub fn tanh(&self) -> Var {
        self.unary(self.value().mapv(f64::tanh), |_, y| 1.0 - y * y)
    }

    pub fn sigmoid(&self) -> Var {
        self.unary(self.value().mapv(sigmoid), |_, y| y * (1.0 - y))
    }

    pub fn relu(&self) -> Var {
        self.unary(self.value().mapv(|x| x.max(0.0)), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn leaky_relu(&self, slope: f64) -> Var {
        self.unary(
            self.value().mapv(|x| if x > 0.0 { x } else { slope * x }),
            move |x, _| if x > 0.0 { 1.0 } else { slope },
        )
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&self) -> Var {
        self.unary(self.value().mapv(|x| x * sigmoid(x)), |x, _| {
            let s = sigmoid(x);
            s * (1.0 + x * (1.0 - s))
        })
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var {
        self.unary(self.value().mapv(|x| x.clamp(lo, hi)), move |x, _| {
            if x >= lo && x <= hi {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Sum of every element, as a 0-d tensor.
    pub fn sum(&self) -> Var {
        let value = ArrayD::from_elem(IxDyn(&[]), self.value().sum());
        Var::from_op(
            value,
            vec![self.clone()],
            Box::new(|g, p, _| vec![Some(ArrayD::from_elem(p[0].value().raw_dim(), g.sum()))]),
        )
    }

    pub fn mean(&self) -> Var {
        let n = self.value().len().max(1) as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums over `axis`, keeping it as a length-one axis.
    pub fn sum_axis_keep(&self, axis: usize) -> Var {
        let value = self.value().sum_axis(Axis(axis)).insert_axis(Axis(axis));
        Var::from_op(
            value,
            vec![self.clone()],
            Box::new(|g, p, _| {
                let full = g.broadcast(p[0].value().raw_dim()).expect("broadcast").to_owned();
                vec![Some(full)]
            }),
        )
    }

    pub fn mean_axis_keep(&self, axis: usize) -> Var {
        let n = self.shape()[axis] as f64;
        self.sum_axis_keep(axis).scale(1.0 / n)
    }

    /// 2-D matrix product.
    pub fn matmul(&self, other: &Var) -> Var {
        let a = as2(self.value());
        let b = as2(other.value());
        assert_eq!(a.ncols(), b.nrows(), "matmul: inner dimensions {:?} x {:?}", a.shape(), b.shape());
        let value = a.dot(&b).into_dyn();
        Var::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(|g, p, _| {
                let g2 = as2(g);
                let a = as2(p[0].value());
                let b = as2(p[1].value());
                let ga = if p[0].requires_grad() { Some(g2.dot(&b.t()).into_dyn()) } else { None };
                let gb = if p[1].requires_grad() { Some(a.t().dot(&g2).into_dyn()) } else { None };
                vec![ga, gb]
            }),
        )
    }

    pub fn reshape(&self, shape: &[usize]) -> Var {
        let value = self
            .value()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count mismatch");
        Var::from_op(
            value,
            vec![self.clone()],
            Box::new(|g, p, _| {
                let back = g
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order(p[0].value().raw_dim())
                    .expect("reshape backward");
                vec![Some(back)]
            }),
        )
    }

    /// Reorders axes; `axes[i]` is the source axis of output axis `i`.
    pub fn permute(&self, axes: &[usize]) -> Var {
        let value = self.value().clone().permuted_axes(IxDyn(axes)).as_standard_layout().into_owned();
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        Var::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                vec![Some(g.clone().permuted_axes(IxDyn(&inverse)).as_standard_layout().into_owned())]
            }),
        )
    }

    /// Transpose of a 2-D tensor.
    pub fn t(&self) -> Var {
        assert_eq!(self.ndim(), 2, "t() expects a 2-D tensor");
        self.permute(&[1, 0])
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Var {
        let value = self.value().slice_axis(Axis(axis), Slice::from(start..start + len)).to_owned();
        Var::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g, p, _| {
                let mut full = ArrayD::zeros(p[0].value().raw_dim());
                full.slice_axis_mut(Axis(axis), Slice::from(start..start + len)).assign(g);
                vec![Some(full)]
            }),
        )
    }

    /// Concatenates along `axis`.
    pub fn concat(parts: &[Var], axis: usize) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let views: Vec<_> = parts.iter().map(|v| v.value().view()).collect();
        let value = concatenate(Axis(axis), &views).expect("concat: incompatible shapes");
        let sizes: Vec<usize> = parts.iter().map(|v| v.shape()[axis]).collect();
        Var::from_op(
            value,
            parts.to_vec(),
            Box::new(move |g, _, _| {
                let mut offset = 0;
                sizes
                    .iter()
                    .map(|&n| {
                        let part = g.slice_axis(Axis(axis), Slice::from(offset..offset + n)).to_owned();
                        offset += n;
                        Some(part)
                    })
                    .collect()
            }),
        )
    }

    /// Softmax over the last axis. Entries equal to `-inf` receive exactly zero weight.
    pub fn softmax_last(&self) -> Var {
        let x = self.value().as_standard_layout().into_owned();
        let n = *x.shape().last().expect("softmax of a 0-d tensor");
        let mut y = x.clone();
        for row in y.as_slice_mut().unwrap().chunks_mut(n) {
            softmax_in_place(row);
        }
        Var::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g, _, y| {
                let g = g.as_standard_layout();
                let mut out = y.clone();
                let gs = g.as_slice().unwrap();
                for (orow, grow) in out.as_slice_mut().unwrap().chunks_mut(n).zip(gs.chunks(n)) {
                    let dot: f64 = orow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for (o, gi) in orow.iter_mut().zip(grow) {
                        *o *= gi - dot;
                    }
                }
                vec![Some(out)]
            }),
        )
    }

    /// Normalizes each slice along the last axis to zero mean and unit variance.
    pub fn layer_norm_last(&self, eps: f64) -> Var {
        let x = self.value().as_standard_layout().into_owned();
        let n = *x.shape().last().expect("layer norm of a 0-d tensor");
        let mut y = x.clone();
        let mut inv_std = Vec::with_capacity(x.len() / n.max(1));
        for row in y.as_slice_mut().unwrap().chunks_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        Var::from_op(
            y,
            vec![self.clone()],
            Box::new(move |g, _, y| {
                let g = g.as_standard_layout();
                let mut out = g.to_owned();
                let ys = y.as_slice().unwrap();
                for ((orow, yrow), is) in out.as_slice_mut().unwrap().chunks_mut(n).zip(ys.chunks(n)).zip(&inv_std) {
                    let gm = orow.iter().sum::<f64>() / n as f64;
                    let gy = orow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for (o, yv) in orow.iter_mut().zip(yrow) {
                        *o = is * (*o - gm - yv * gy);
                    }
                }
                vec![Some(out)]
            }),
        )
    }

    /// 2-D convolution. `self` is `[N, C, H, W]`, `weight` is `[O, C, KH, KW]`.
    pub fn conv2d(&self, weight: &Var, stride: usize, padding: usize) -> Var {
        let geo = ConvGeometry::new(self.shape(), weight.shape(), stride, padding);
        let x = self.value().as_standard_layout().into_owned();
        let w2 = weight
            .value()
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((geo.o, geo.ckk()))
            .unwrap();
        let mut out = ArrayD::zeros(IxDyn(&[geo.n, geo.o, geo.ho, geo.wo]));
        let xs = x.as_slice().unwrap();
        let mut cols = Array2::zeros((geo.ckk(), geo.ho * geo.wo));
        for n in 0..geo.n {
            geo.im2col(&xs[n * geo.in_len()..(n + 1) * geo.in_len()], &mut cols);
            let y = w2.dot(&cols);
            out.slice_mut(s![n, .., .., ..])
                .assign(&y.into_shape_with_order((geo.o, geo.ho, geo.wo)).unwrap());
        }
        Var::from_op(
            out,
            vec![self.clone(), weight.clone()],
            Box::new(move |g, p, _| {
                let g = g.as_standard_layout();
                let x = p[0].value().as_standard_layout();
                let xs = x.as_slice().unwrap();
                let w2 = p[1]
                    .value()
                    .as_standard_layout()
                    .into_owned()
                    .into_shape_with_order((geo.o, geo.ckk()))
                    .unwrap();
                let want_x = p[0].requires_grad();
                let want_w = p[1].requires_grad();
                let mut gx = if want_x { Some(vec![0.0; xs.len()]) } else { None };
                let mut gw = Array2::<f64>::zeros((geo.o, geo.ckk()));
                let mut cols = Array2::zeros((geo.ckk(), geo.ho * geo.wo));
                let gslice = g.as_slice().unwrap();
                let out_len = geo.o * geo.ho * geo.wo;
                for n in 0..geo.n {
                    let gn = ArrayView2::from_shape((geo.o, geo.ho * geo.wo), &gslice[n * out_len..(n + 1) * out_len])
                        .unwrap();
                    if want_w {
                        geo.im2col(&xs[n * geo.in_len()..(n + 1) * geo.in_len()], &mut cols);
                        gw += &gn.dot(&cols.t());
                    }
                    if let Some(gx) = gx.as_mut() {
                        let dcols = w2.t().dot(&gn);
                        geo.col2im(&dcols, &mut gx[n * geo.in_len()..(n + 1) * geo.in_len()]);
                    }
                }
                let gx = gx.map(|v| ArrayD::from_shape_vec(p[0].value().raw_dim(), v).unwrap());
                let gw = if want_w {
                    Some(gw.into_shape_with_order(p[1].value().raw_dim()).unwrap().into_dyn())
                } else {
                    None
                };
                vec![gx, gw]
            }),
        )
    }

    /// Nearest-neighbour 2x upsampling of `[N, C, H, W]`.
    pub fn upsample2x(&self) -> Var {
        let sh = self.shape().to_vec();
        assert_eq!(sh.len(), 4, "upsample2x expects NCHW");
        let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
        let x = self.value().as_standard_layout();
        let xs = x.as_slice().unwrap();
        let mut out = vec![0.0; n * c * 4 * h * w];
        for plane in 0..n * c {
            let src = &xs[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out[plane * 4 * h * w..(plane + 1) * 4 * h * w];
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    dst[y * 2 * w + xx] = src[(y / 2) * w + xx / 2];
                }
            }
        }
        let value = ArrayD::from_shape_vec(IxDyn(&[n, c, 2 * h, 2 * w]), out).unwrap();
        Var::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g, _, _| vec![Some(sum_pool2x(g))]),
        )
    }

    /// 2x2 average pooling of `[N, C, H, W]` (H and W even).
    pub fn avg_pool2x(&self) -> Var {
        let sh = self.shape().to_vec();
        assert_eq!(sh.len(), 4, "avg_pool2x expects NCHW");
        assert!(sh[2].is_multiple_of(2) && sh[3].is_multiple_of(2), "avg_pool2x needs even spatial dims");
        let value = sum_pool2x(self.value()) * 0.25;
        Var::from_op(
            value,
            vec![self.clone()],
            Box::new(move |g, _, _| {
                let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
                let g = g.as_standard_layout();
                let gs = g.as_slice().unwrap();
                let mut out = vec![0.0; n * c * h * w];
                let (ho, wo) = (h / 2, w / 2);
                for plane in 0..n * c {
                    for y in 0..h {
                        for x in 0..w {
                            out[plane * h * w + y * w + x] = 0.25 * gs[plane * ho * wo + (y / 2) * wo + x / 2];
                        }
                    }
                }
                vec![Some(ArrayD::from_shape_vec(IxDyn(&sh), out).unwrap())]
            }),
        )
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        row.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = if *v == f64::NEG_INFINITY { 0.0 } else { (*v - max).exp() };
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn sum_pool2x(t: &Tensor) -> Tensor {
    let sh = t.shape();
    let (n, c, h, w) = (sh[0], sh[1], sh[2], sh[3]);
    let (ho, wo) = (h / 2, w / 2);
    let t = t.as_standard_layout();
    let ts = t.as_slice().unwrap();
    let mut out = vec![0.0; n * c * ho * wo];
    for plane in 0..n * c {
        for y in 0..h {
            for x in 0..w {
                out[plane * ho * wo + (y / 2) * wo + x / 2] += ts[plane * h * w + y * w + x];
            }
        }
    }
    ArrayD::from_shape_vec(IxDyn(&[n, c, ho, wo]), out).unwrap()
}

#[derive(Clone, Copy)]
struct ConvGeometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeometry {
    fn new(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Self {
        assert_eq!(x.len(), 4, "conv2d input must be NCHW, got {x:?}");
        assert_eq!(w.len(), 4, "conv2d weight must be OCKK, got {w:?}");
        assert_eq!(x[1], w[1], "conv2d channel mismatch: input {x:?}, weight {w:?}");
        assert!(stride >= 1);
        let ho = (x[2] + 2 * pad - w[2]) / stride + 1;
        let wo = (x[3] + 2 * pad - w[3]) / stride + 1;
        ConvGeometry { n: x[0], c: x[1], h: x[2], w: x[3], o: w[0], kh: w[2], kw: w[3], stride, pad, ho, wo }
    }

    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn in_len(&self) -> usize {
        self.c * self.h * self.w
    }

    /// Output columns `ox` whose input column `ox * stride + kx - pad` is in bounds.
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let (s, pad, w) = (self.stride as isize, self.pad as isize, self.w as isize);
        let k = kx as isize;
        let lo = ((pad - k).max(0) + s - 1) / s;
        let hi = if w - 1 + pad - k < 0 { 0 } else { ((w - 1 + pad - k) / s + 1).min(self.wo as isize) };
        (lo as usize, (hi.max(lo)) as usize)
    }

    fn im2col(&self, x: &[f64], cols: &mut Array2<f64>) {
        let cs = cols.as_slice_mut().unwrap();
        let npix = self.ho * self.wo;
        for c in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let (lo, hi) = self.valid_cols(kx);
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cs[row * npix..(row + 1) * npix];
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let drow = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        if iy < 0 || iy >= self.h as isize || lo >= hi {
                            drow.fill(0.0);
                            continue;
                        }
                        let src = &x[c * self.h * self.w + iy as usize * self.w..][..self.w];
                        drow[..lo].fill(0.0);
                        drow[hi..].fill(0.0);
                        let start = lo * self.stride + kx - self.pad;
                        if self.stride == 1 {
                            drow[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                        } else {
                            for (i, d) in drow[lo..hi].iter_mut().enumerate() {
                                *d = src[start + i * self.stride];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &Array2<f64>, gx: &mut [f64]) {
        let cols = cols.as_standard_layout();
        let cs = cols.as_slice().unwrap();
        let npix = self.ho * self.wo;
        for c in 0..self.c {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let (lo, hi) = self.valid_cols(kx);
                    if lo >= hi {
                        continue;
                    }
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cs[row * npix..(row + 1) * npix];
                    let start = lo * self.stride + kx - self.pad;
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut gx[c * self.h * self.w + iy as usize * self.w..][..self.w];
                        let srow = &src[oy * self.wo + lo..oy * self.wo + hi];
                        if self.stride == 1 {
                            for (d, v) in dst[start..start + (hi - lo)].iter_mut().zip(srow) {
                                *d += v;
                            }
                        } else {
                            for (i, v) in srow.iter().enumerate() {
                                dst[start + i * self.stride] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}
