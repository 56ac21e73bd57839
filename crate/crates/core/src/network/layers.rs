//! Layer kernels. Activations are `batch x (channels * height * width)`
//! row-major arrays; each layer knows its own input and output geometry.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{cst, Scalar};
use crate::tensor::{gemm, MatView, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Geometry {
    pub fn flat(len: usize) -> Self {
        Geometry {
            channels: len,
            height: 1,
            width: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<T> {
    pub(crate) input: Geometry,
    pub(crate) output: Geometry,
    pub(crate) kernel: usize,
    pub(crate) stride: usize,
    pub(crate) pad: usize,
    /// `outputs x (in_channels * kernel * kernel)`
    pub(crate) weight: Tensor<T>,
    pub(crate) bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub(crate) kind: PoolKind,
    pub(crate) input: Geometry,
    pub(crate) output: Geometry,
    pub(crate) kernel: usize,
    pub(crate) stride: usize,
    pub(crate) pad: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerProduct<T> {
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
    /// `outputs x inputs`
    pub(crate) weight: Tensor<T>,
    pub(crate) bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lrn {
    pub(crate) geom: Geometry,
    pub(crate) local_size: usize,
    pub(crate) alpha: f64,
    pub(crate) beta: f64,
    pub(crate) k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv(Conv<T>),
    Pool(Pool),
    InnerProduct(InnerProduct<T>),
    Relu(Geometry),
    Lrn(Lrn),
}

/// Per-layer values kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub(crate) enum Aux<T> {
    None,
    Argmax(Vec<usize>),
    Scale(Vec<T>),
}

/// Gradient of one parameterised layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

fn gaussian_weights<T: Scalar>(rows: usize, fan_in: usize, gain: f64, rng: &mut Rng) -> Tensor<T> {
    let std = gain / (fan_in.max(1) as f64).sqrt();
    Tensor::from_vec(vec![rows, fan_in], rng.gaussian_vec(rows * fan_in, std))
        .expect("weight shape")
}

fn conv_extent(size: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::config("kernel and stride must be positive"));
    }
    if size + 2 * pad < kernel {
        return Err(Error::config(format!(
            "kernel {kernel} larger than padded input {}",
            size + 2 * pad
        )));
    }
    Ok((size + 2 * pad - kernel) / stride + 1)
}

/// Pooling output extent with ceiling rounding; the last window must start
/// inside the (left-padded) input.
fn pool_extent(size: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::config("kernel and stride must be positive"));
    }
    if pad >= kernel {
        return Err(Error::config("pooling pad must be smaller than the kernel"));
    }
    if size + 2 * pad < kernel {
        return Err(Error::config(format!(
            "pooling window {kernel} larger than padded input {}",
            size + 2 * pad
        )));
    }
    let mut out = (size + 2 * pad - kernel).div_ceil(stride) + 1;
    if pad > 0 && (out - 1) * stride >= size + pad {
        out -= 1;
    }
    Ok(out)
}

impl<T: Scalar> Conv<T> {
    pub(crate) fn new(
        input: Geometry,
        outputs: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        gain: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if outputs == 0 {
            return Err(Error::config("convolution needs at least one output map"));
        }
        let oh = conv_extent(input.height, kernel, stride, pad)?;
        let ow = conv_extent(input.width, kernel, stride, pad)?;
        let fan_in = input.channels * kernel * kernel;
        Ok(Conv {
            input,
            output: Geometry {
                channels: outputs,
                height: oh,
                width: ow,
            },
            kernel,
            stride,
            pad,
            weight: gaussian_weights(outputs, fan_in, gain, rng),
            bias: Tensor::zeros(&[outputs]),
        })
    }

    fn col_rows(&self) -> usize {
        self.input.channels * self.kernel * self.kernel
    }

    fn im2col(&self, x: &[T], col: &mut [T]) {
        let (c_in, h, w) = (
            self.input.channels,
            self.input.height as isize,
            self.input.width as isize,
        );
        let (oh, ow) = (self.output.height, self.output.width);
        let k = self.kernel;
        let (s, p) = (self.stride as isize, self.pad as isize);
        for c in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = oy as isize * s - p + ki as isize;
                        for ox in 0..ow {
                            let ix = ox as isize * s - p + kj as isize;
                            dst[oy * ow + ox] = if iy >= 0 && iy < h && ix >= 0 && ix < w {
                                x[(c * h as usize + iy as usize) * w as usize + ix as usize]
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, col: &[T], dx: &mut [T]) {
        let (c_in, h, w) = (
            self.input.channels,
            self.input.height as isize,
            self.input.width as isize,
        );
        let (oh, ow) = (self.output.height, self.output.width);
        let k = self.kernel;
        let (s, p) = (self.stride as isize, self.pad as isize);
        for c in 0..c_in {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &col[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = oy as isize * s - p + ki as isize;
                        if iy < 0 || iy >= h {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = ox as isize * s - p + kj as isize;
                            if ix >= 0 && ix < w {
                                dx[(c * h as usize + iy as usize) * w as usize + ix as usize] +=
                                    src[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let batch = x.rows();
        let spatial = self.output.height * self.output.width;
        let outs = self.output.channels;
        let mut y = Tensor::zeros(&[batch, self.output.len()]);
        let mut col = vec![T::zero(); self.col_rows() * spatial];
        for b in 0..batch {
            self.im2col(x.row(b), &mut col);
            let yb = y.row_mut(b);
            for (o, chunk) in yb.chunks_mut(spatial).enumerate() {
                chunk.fill(self.bias.data()[o]);
            }
            gemm(
                T::one(),
                MatView::row_major(self.weight.data(), outs, self.col_rows()),
                MatView::row_major(&col, self.col_rows(), spatial),
                T::one(),
                yb,
            );
        }
        y
    }

    fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>) -> (Tensor<T>, ParamGrad<T>) {
        let batch = x.rows();
        let spatial = self.output.height * self.output.width;
        let outs = self.output.channels;
        let rows = self.col_rows();
        let mut dw = Tensor::zeros(self.weight.shape());
        let mut db = Tensor::zeros(self.bias.shape());
        let mut dx = Tensor::zeros(&[batch, self.input.len()]);
        let mut col = vec![T::zero(); rows * spatial];
        let mut dcol = vec![T::zero(); rows * spatial];
        for b in 0..batch {
            let dyb = dy.row(b);
            for (o, chunk) in dyb.chunks(spatial).enumerate() {
                db.data_mut()[o] += chunk.iter().copied().sum::<T>();
            }
            self.im2col(x.row(b), &mut col);
            gemm(
                T::one(),
                MatView::row_major(dyb, outs, spatial),
                MatView::row_major(&col, rows, spatial).t(),
                T::one(),
                dw.data_mut(),
            );
            gemm(
                T::one(),
                MatView::row_major(self.weight.data(), outs, rows).t(),
                MatView::row_major(dyb, outs, spatial),
                T::zero(),
                &mut dcol,
            );
            self.col2im(&dcol, dx.row_mut(b));
        }
        (
            dx,
            ParamGrad {
                weight: dw,
                bias: db,
            },
        )
    }
}

impl Pool {
    pub(crate) fn new(
        kind: PoolKind,
        input: Geometry,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let oh = pool_extent(input.height, kernel, stride, pad)?;
        let ow = pool_extent(input.width, kernel, stride, pad)?;
        Ok(Pool {
            kind,
            input,
            output: Geometry {
                channels: input.channels,
                height: oh,
                width: ow,
            },
            kernel,
            stride,
            pad,
        })
    }

    /// Window bounds along one axis: the clipped `[start, end)` range and the
    /// averaging divisor extent (which counts padded cells, as Caffe does).
    fn window(&self, o: usize, size: usize) -> (usize, usize, usize) {
        let start = (o * self.stride) as isize - self.pad as isize;
        let padded_end = (start + self.kernel as isize).min((size + self.pad) as isize);
        let extent = (padded_end - start) as usize;
        let lo = start.max(0) as usize;
        let hi = (padded_end.min(size as isize)) as usize;
        (lo, hi, extent)
    }

    fn forward<T: Scalar>(&self, x: &Tensor<T>) -> (Tensor<T>, Aux<T>) {
        let batch = x.rows();
        let (h, w) = (self.input.height, self.input.width);
        let (oh, ow) = (self.output.height, self.output.width);
        let mut y = Tensor::zeros(&[batch, self.output.len()]);
        let mut argmax = match self.kind {
            PoolKind::Max => vec![0usize; batch * self.output.len()],
            PoolKind::Average => Vec::new(),
        };
        for b in 0..batch {
            let xb = x.row(b);
            let out_off = b * self.output.len();
            let yb = y.row_mut(b);
            for c in 0..self.input.channels {
                let plane = c * h * w;
                for oy in 0..oh {
                    let (y0, y1, ey) = self.window(oy, h);
                    for ox in 0..ow {
                        let (x0, x1, ex) = self.window(ox, w);
                        let o = (c * oh + oy) * ow + ox;
                        match self.kind {
                            PoolKind::Max => {
                                let mut best = plane + y0 * w + x0;
                                for iy in y0..y1 {
                                    for ix in x0..x1 {
                                        let idx = plane + iy * w + ix;
                                        if xb[idx] > xb[best] {
                                            best = idx;
                                        }
                                    }
                                }
                                yb[o] = xb[best];
                                argmax[out_off + o] = best;
                            }
                            PoolKind::Average => {
                                let mut acc = T::zero();
                                for iy in y0..y1 {
                                    for ix in x0..x1 {
                                        acc += xb[plane + iy * w + ix];
                                    }
                                }
                                yb[o] = acc / cst::<T>((ey * ex) as f64);
                            }
                        }
                    }
                }
            }
        }
        let aux = match self.kind {
            PoolKind::Max => Aux::Argmax(argmax),
            PoolKind::Average => Aux::None,
        };
        (y, aux)
    }

    fn backward<T: Scalar>(&self, batch: usize, dy: &Tensor<T>, aux: &Aux<T>) -> Tensor<T> {
        let (h, w) = (self.input.height, self.input.width);
        let (oh, ow) = (self.output.height, self.output.width);
        let mut dx = Tensor::zeros(&[batch, self.input.len()]);
        for b in 0..batch {
            let dyb = dy.row(b);
            let out_off = b * self.output.len();
            let dxb = dx.row_mut(b);
            match (self.kind, aux) {
                (PoolKind::Max, Aux::Argmax(argmax)) => {
                    for (o, &g) in dyb.iter().enumerate() {
                        dxb[argmax[out_off + o]] += g;
                    }
                }
                _ => {
                    for c in 0..self.input.channels {
                        let plane = c * h * w;
                        for oy in 0..oh {
                            let (y0, y1, ey) = self.window(oy, h);
                            for ox in 0..ow {
                                let (x0, x1, ex) = self.window(ox, w);
                                let g = dyb[(c * oh + oy) * ow + ox] / cst::<T>((ey * ex) as f64);
                                for iy in y0..y1 {
                                    for ix in x0..x1 {
                                        dxb[plane + iy * w + ix] += g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

impl<T: Scalar> InnerProduct<T> {
    pub(crate) fn new(inputs: usize, outputs: usize, gain: f64, rng: &mut Rng) -> Result<Self> {
        if outputs == 0 || inputs == 0 {
            return Err(Error::config(
                "inner product needs positive input and output sizes",
            ));
        }
        Ok(InnerProduct {
            inputs,
            outputs,
            weight: gaussian_weights(outputs, inputs, gain, rng),
            bias: Tensor::zeros(&[outputs]),
        })
    }

    pub(crate) fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let batch = x.rows();
        let mut y = Tensor::zeros(&[batch, self.outputs]);
        for b in 0..batch {
            y.row_mut(b).copy_from_slice(self.bias.data());
        }
        gemm(
            T::one(),
            MatView::row_major(x.data(), batch, self.inputs),
            MatView::row_major(self.weight.data(), self.outputs, self.inputs).t(),
            T::one(),
            y.data_mut(),
        );
        y
    }

    pub(crate) fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>) -> (Tensor<T>, ParamGrad<T>) {
        let batch = x.rows();
        let mut dw = Tensor::zeros(self.weight.shape());
        gemm(
            T::one(),
            MatView::row_major(dy.data(), batch, self.outputs).t(),
            MatView::row_major(x.data(), batch, self.inputs),
            T::zero(),
            dw.data_mut(),
        );
        let mut db = Tensor::zeros(self.bias.shape());
        for b in 0..batch {
            for (acc, &g) in db.data_mut().iter_mut().zip(dy.row(b)) {
                *acc += g;
            }
        }
        let mut dx = Tensor::zeros(&[batch, self.inputs]);
        gemm(
            T::one(),
            MatView::row_major(dy.data(), batch, self.outputs),
            MatView::row_major(self.weight.data(), self.outputs, self.inputs),
            T::zero(),
            dx.data_mut(),
        );
        (
            dx,
            ParamGrad {
                weight: dw,
                bias: db,
            },
        )
    }
}

impl Lrn {
    fn window(&self, c: usize) -> std::ops::Range<usize> {
        let half = self.local_size / 2;
        c.saturating_sub(half)..(c + half + 1).min(self.geom.channels)
    }

    fn forward<T: Scalar>(&self, x: &Tensor<T>) -> (Tensor<T>, Aux<T>) {
        let batch = x.rows();
        let spatial = self.geom.height * self.geom.width;
        let coef = cst::<T>(self.alpha / self.local_size as f64);
        let (k, beta) = (cst::<T>(self.k), cst::<T>(self.beta));
        let mut y = Tensor::zeros(&[batch, self.geom.len()]);
        let mut scale = vec![T::zero(); batch * self.geom.len()];
        for b in 0..batch {
            let xb = x.row(b);
            let off = b * self.geom.len();
            for c in 0..self.geom.channels {
                for s in 0..spatial {
                    let sum: T = self.window(c).map(|cc| xb[cc * spatial + s].powi(2)).sum();
                    let sc = k + coef * sum;
                    let idx = c * spatial + s;
                    scale[off + idx] = sc;
                    y.row_mut(b)[idx] = xb[idx] * sc.powf(-beta);
                }
            }
        }
        (y, Aux::Scale(scale))
    }

    fn backward<T: Scalar>(
        &self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        dy: &Tensor<T>,
        aux: &Aux<T>,
    ) -> Tensor<T> {
        let Aux::Scale(scale) = aux else {
            unreachable!("lrn forward always records its scale")
        };
        let batch = x.rows();
        let spatial = self.geom.height * self.geom.width;
        let beta = cst::<T>(self.beta);
        let coef = cst::<T>(2.0 * self.alpha * self.beta / self.local_size as f64);
        let mut dx = Tensor::zeros(&[batch, self.geom.len()]);
        for b in 0..batch {
            let (xb, yb, dyb) = (x.row(b), y.row(b), dy.row(b));
            let off = b * self.geom.len();
            let ratio: Vec<T> = (0..self.geom.len())
                .map(|i| dyb[i] * yb[i] / scale[off + i])
                .collect();
            let dxb = dx.row_mut(b);
            for c in 0..self.geom.channels {
                for s in 0..spatial {
                    let idx = c * spatial + s;
                    let acc: T = self.window(c).map(|cc| ratio[cc * spatial + s]).sum();
                    dxb[idx] = dyb[idx] * scale[off + idx].powf(-beta) - coef * xb[idx] * acc;
                }
            }
        }
        dx
    }
}

impl<T: Scalar> Layer<T> {
    pub fn output_geometry(&self) -> Geometry {
        match self {
            Layer::Conv(c) => c.output,
            Layer::Pool(p) => p.output,
            Layer::InnerProduct(f) => Geometry::flat(f.outputs),
            Layer::Relu(g) => *g,
            Layer::Lrn(l) => l.geom,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "convolution",
            Layer::Pool(p) if p.kind == PoolKind::Max => "max-pool",
            Layer::Pool(_) => "avg-pool",
            Layer::InnerProduct(_) => "inner-product",
            Layer::Relu(_) => "relu",
            Layer::Lrn(_) => "lrn",
        }
    }

    pub(crate) fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Aux<T>) {
        match self {
            Layer::Conv(c) => (c.forward(x), Aux::None),
            Layer::Pool(p) => p.forward(x),
            Layer::InnerProduct(f) => (f.forward(x), Aux::None),
            Layer::Relu(_) => (x.map(|v| v.max(T::zero())), Aux::None),
            Layer::Lrn(l) => l.forward(x),
        }
    }

    /// Returns the input gradient and, for parameterised layers, the
    /// parameter gradient.
    pub(crate) fn backward(
        &self,
        x: &Tensor<T>,
        y: &Tensor<T>,
        aux: &Aux<T>,
        dy: &Tensor<T>,
    ) -> (Tensor<T>, Option<ParamGrad<T>>) {
        match self {
            Layer::Conv(c) => {
                let (dx, g) = c.backward(x, dy);
                (dx, Some(g))
            }
            Layer::Pool(p) => (p.backward(x.rows(), dy, aux), None),
            Layer::InnerProduct(f) => {
                let (dx, g) = f.backward(x, dy);
                (dx, Some(g))
            }
            Layer::Relu(_) => {
                let mut dx = dy.clone();
                for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
                    if v <= T::zero() {
                        *g = T::zero();
                    }
                }
                (dx, None)
            }
            Layer::Lrn(l) => (l.backward(x, y, dy, aux), None),
        }
    }

    pub(crate) fn params(&self) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv(c) => Some((&c.weight, &c.bias)),
            Layer::InnerProduct(f) => Some((&f.weight, &f.bias)),
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut Tensor<T>, &mut Tensor<T>)> {
        match self {
            Layer::Conv(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::InnerProduct(f) => Some((&mut f.weight, &mut f.bias)),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extents() {
        assert_eq!(conv_extent(28, 5, 1, 0).unwrap(), 24);
        assert_eq!(conv_extent(48, 5, 1, 2).unwrap(), 48);
        assert_eq!(pool_extent(24, 2, 2, 0).unwrap(), 12);
        assert_eq!(pool_extent(8, 2, 2, 0).unwrap(), 4);
        assert_eq!(pool_extent(48, 3, 2, 0).unwrap(), 24);
        assert_eq!(pool_extent(32, 3, 2, 0).unwrap(), 16);
        assert_eq!(pool_extent(16, 3, 2, 0).unwrap(), 8);
        assert_eq!(pool_extent(8, 3, 2, 0).unwrap(), 4);
        assert!(conv_extent(3, 5, 1, 0).is_err());
    }

    #[test]
    fn relu_definition() {
        let layer = Layer::<f64>::Relu(Geometry::flat(3));
        let x = Tensor::from_vec(vec![1, 3], vec![-1.0, 2.0, 0.0]).unwrap();
        assert_eq!(layer.forward(&x).0.data(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn inner_product_weight_gradient_is_outer_product() {
        let mut rng = Rng::new(1);
        let fc = InnerProduct::<f64>::new(3, 2, 1.0, &mut rng).unwrap();
        let x = Tensor::from_vec(vec![1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let dy = Tensor::from_vec(vec![1, 2], vec![3.0, -0.25]).unwrap();
        let (_, g) = fc.backward(&x, &dy);
        let outer: Vec<f64> = dy
            .data()
            .iter()
            .flat_map(|a| x.data().iter().map(move |b| a * b))
            .collect();
        assert_eq!(g.weight.data(), outer.as_slice());
        assert_eq!(g.bias.data(), dy.data());
    }

    #[test]
    fn max_pool_picks_window_maxima() {
        let p = Pool::new(
            PoolKind::Max,
            Geometry {
                channels: 1,
                height: 2,
                width: 4,
            },
            2,
            2,
            0,
        )
        .unwrap();
        let x =
            Tensor::from_vec(vec![1, 8], vec![1.0, 5.0, -2.0, 0.0, 3.0, 2.0, -1.0, -3.0]).unwrap();
        let (y, aux) = p.forward(&x);
        assert_eq!(y.data(), &[5.0, 0.0]);
        let dx = p.backward(
            1,
            &Tensor::from_vec(vec![1, 2], vec![1.0, 2.0]).unwrap(),
            &aux,
        );
        assert_eq!(dx.data(), &[0.0, 1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn avg_pool_ceil_mode_divides_by_clipped_window() {
        let p = Pool::new(
            PoolKind::Average,
            Geometry {
                channels: 1,
                height: 1,
                width: 4,
            },
            1,
            3,
            0,
        )
        .unwrap();
        assert_eq!(p.output.width, 2);
        let p = Pool::new(
            PoolKind::Average,
            Geometry {
                channels: 1,
                height: 3,
                width: 3,
            },
            2,
            2,
            0,
        )
        .unwrap();
        assert_eq!((p.output.height, p.output.width), (2, 2));
        let x = Tensor::from_vec(vec![1, 9], (1..=9).map(f64::from).collect()).unwrap();
        let (y, _) = p.forward::<f64>(&x);
        assert_eq!(y.data(), &[3.0, 4.5, 7.5, 9.0]);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = Rng::new(9);
        let g = Geometry {
            channels: 2,
            height: 5,
            width: 4,
        };
        let conv = Conv::<f64>::new(g, 3, 3, 2, 1, 1.0, &mut rng).unwrap();
        let x = Tensor::from_vec(vec![1, g.len()], rng.gaussian_vec(g.len(), 1.0)).unwrap();
        let y = conv.forward(&x);
        let (oh, ow) = (conv.output.height, conv.output.width);
        assert_eq!((oh, ow), (3, 2));
        for o in 0..3 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..2 {
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let iy = (oy * 2 + ki) as isize - 1;
                                let ix = (ox * 2 + kj) as isize - 1;
                                if (0..5).contains(&iy) && (0..4).contains(&ix) {
                                    acc += conv.weight.row(o)[(c * 3 + ki) * 3 + kj]
                                        * x.data()[(c * 5 + iy as usize) * 4 + ix as usize];
                                }
                            }
                        }
                    }
                    assert!((y.data()[(o * oh + oy) * ow + ox] - acc).abs() < 1e-12);
                }
            }
        }
    }
}
