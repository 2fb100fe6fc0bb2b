use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CnnError, Result, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    /// `out × (in · kh · kw)`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub lr_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs × inputs`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub lr_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv(Conv2d),
    /// 2×2 window, stride 2; odd trailing rows/columns are dropped.
    MaxPool,
    Relu,
    /// Inverted dropout; identity at inference.
    Dropout {
        p: f64,
    },
    Flatten,
    Dense(Dense),
    Softmax,
}

/// Values saved by a training forward pass for the backward pass.
pub(crate) enum Cache {
    Conv {
        cols: Vec<f64>,
        in_shape: Vec<usize>,
    },
    Pool {
        argmax: Vec<usize>,
        in_shape: Vec<usize>,
    },
    Relu {
        mask: Vec<bool>,
    },
    Dropout {
        scale: Vec<f64>,
    },
    Flatten {
        in_shape: Vec<usize>,
    },
    Dense {
        input: Tensor,
    },
    None,
}

impl Conv2d {
    fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.kernel_h || wp < self.kernel_w || self.stride == 0 {
            return Err(CnnError::IncompatibleShapes(format!(
                "{}×{} kernel (pad {}) does not fit a {h}×{w} input",
                self.kernel_h, self.kernel_w, self.pad
            )));
        }
        Ok((
            (hp - self.kernel_h) / self.stride + 1,
            (wp - self.kernel_w) / self.stride + 1,
        ))
    }

    fn k(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    /// Output columns `[lo, hi)` whose input column `o·s + kx − pad` lies
    /// inside `0..w`.
    fn valid_cols(&self, kx: usize, w: usize, wo: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.pad as isize);
        let kx = kx as isize;
        let lo = ((p - kx).max(0) + s - 1) / s;
        let hi = ((w as isize - 1 + p - kx).div_euclid(s) + 1).clamp(0, wo as isize);
        (lo as usize, (hi as usize).max(lo as usize))
    }

    /// Per-sample `K × M` patch matrices (`K = in·kh·kw`, `M = ho·wo`),
    /// concatenated over the batch.
    fn im2col(&self, x: &Tensor, ho: usize, wo: usize) -> Vec<f64> {
        let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (k, m) = (self.k(), ho * wo);
        let mut cols = vec![0.0; n * k * m];
        let (kh, kw, s, p) = (self.kernel_h, self.kernel_w, self.stride, self.pad as isize);
        for b in 0..n {
            for ch in 0..c {
                let plane = &x.data[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let j = (ch * kh + ky) * kw + kx;
                        let dst = &mut cols[(b * k + j) * m..(b * k + j + 1) * m];
                        let (lo, hi) = self.valid_cols(kx, w, wo);
                        for oy in 0..ho {
                            let iy = (oy * s + ky) as isize - p;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                            let row = &mut dst[oy * wo..(oy + 1) * wo];
                            for ox in lo..hi {
                                row[ox] = src[(ox * s + kx) - self.pad];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn forward(&self, x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        if x.shape.len() != 4 || x.shape[1] != self.in_channels {
            return Err(CnnError::ShapeMismatch {
                expected: vec![0, self.in_channels, 0, 0],
                got: x.shape.clone(),
            });
        }
        let (n, h, w) = (x.shape[0], x.shape[2], x.shape[3]);
        let (ho, wo) = self.out_hw(h, w)?;
        let cols = self.im2col(x, ho, wo);
        let (o, k, m) = (self.out_channels, self.k(), ho * wo);
        let wm = ArrayView2::from_shape((o, k), &self.weight).expect("weight shape");
        let mut out = vec![0.0; n * o * m];
        for b in 0..n {
            let cm = ArrayView2::from_shape((k, m), &cols[b * k * m..(b + 1) * k * m])
                .expect("cols shape");
            let dst = &mut out[b * o * m..(b + 1) * o * m];
            for (oc, row) in dst.chunks_mut(m).enumerate() {
                row.fill(self.bias[oc]);
            }
            let mut ym = ArrayViewMut2::from_shape((o, m), dst).expect("output shape");
            general_mat_mul(1.0, &wm, &cm, 1.0, &mut ym);
        }
        Ok((Tensor::new(vec![n, o, ho, wo], out)?, cols))
    }

    fn backward(
        &self,
        dy: &Tensor,
        cols: &[f64],
        in_shape: &[usize],
    ) -> (Tensor, Vec<f64>, Vec<f64>) {
        let (n, o, ho, wo) = (dy.shape[0], dy.shape[1], dy.shape[2], dy.shape[3]);
        let (k, m) = (self.k(), ho * wo);
        let wm = ArrayView2::from_shape((o, k), &self.weight).expect("weight shape");
        let mut dw = Array2::<f64>::zeros((o, k));
        let mut db = vec![0.0; o];
        let (c, h, w) = (in_shape[1], in_shape[2], in_shape[3]);
        let mut dx = vec![0.0; n * c * h * w];
        let mut dcols = Array2::<f64>::zeros((k, m));
        let (kh, kw, s, p) = (self.kernel_h, self.kernel_w, self.stride, self.pad as isize);
        for b in 0..n {
            let g = &dy.data[b * o * m..(b + 1) * o * m];
            let gm = ArrayView2::from_shape((o, m), g).expect("grad shape");
            let cm = ArrayView2::from_shape((k, m), &cols[b * k * m..(b + 1) * k * m])
                .expect("cols shape");
            general_mat_mul(1.0, &gm, &cm.t(), 1.0, &mut dw);
            for (oc, row) in g.chunks(m).enumerate() {
                db[oc] += row.iter().sum::<f64>();
            }
            general_mat_mul(1.0, &wm.t(), &gm, 0.0, &mut dcols);
            let dcs = dcols.as_slice().expect("standard layout");
            for ch in 0..c {
                let plane = &mut dx[(b * c + ch) * h * w..(b * c + ch + 1) * h * w];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let j = (ch * kh + ky) * kw + kx;
                        let src = &dcs[j * m..(j + 1) * m];
                        let (lo, hi) = self.valid_cols(kx, w, wo);
                        for oy in 0..ho {
                            let iy = (oy * s + ky) as isize - p;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                            let row = &src[oy * wo..(oy + 1) * wo];
                            for ox in lo..hi {
                                dst[(ox * s + kx) - self.pad] += row[ox];
                            }
                        }
                    }
                }
            }
        }
        (
            Tensor::new(in_shape.to_vec(), dx).expect("input shape"),
            dw.into_raw_vec_and_offset().0,
            db,
        )
    }
}

impl Dense {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape.len() != 2 || x.shape[1] != self.inputs {
            return Err(CnnError::ShapeMismatch {
                expected: vec![0, self.inputs],
                got: x.shape.clone(),
            });
        }
        let n = x.shape[0];
        let xm = ArrayView2::from_shape((n, self.inputs), &x.data).expect("input shape");
        let wm = ArrayView2::from_shape((self.outputs, self.inputs), &self.weight)
            .expect("weight shape");
        let mut y = xm.dot(&wm.t());
        for mut row in y.rows_mut() {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Tensor::new(vec![n, self.outputs], y.into_raw_vec_and_offset().0)
    }

    fn backward(&self, dy: &Tensor, x: &Tensor) -> (Tensor, Vec<f64>, Vec<f64>) {
        let n = dy.shape[0];
        let dm = ArrayView2::from_shape((n, self.outputs), &dy.data).expect("grad shape");
        let xm = ArrayView2::from_shape((n, self.inputs), &x.data).expect("input shape");
        let wm = ArrayView2::from_shape((self.outputs, self.inputs), &self.weight)
            .expect("weight shape");
        let dw = dm.t().dot(&xm);
        let db = dm.sum_axis(Axis(0));
        let dx = dm.dot(&wm);
        (
            Tensor::new(vec![n, self.inputs], dx.into_raw_vec_and_offset().0).expect("shape"),
            dw.into_raw_vec_and_offset().0,
            db.to_vec(),
        )
    }
}

pub(crate) fn softmax_rows(x: &Tensor) -> Tensor {
    let cols = x.item_len();
    let mut out = x.clone();
    for row in out.data.chunks_mut(cols) {
        crate::numeric::softmax_in_place(row);
    }
    out
}

impl Layer {
    pub fn params(&self) -> Option<(&[f64], &[f64], f64)> {
        match self {
            Layer::Conv(c) => Some((&c.weight, &c.bias, c.lr_multiplier)),
            Layer::Dense(d) => Some((&d.weight, &d.bias, d.lr_multiplier)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>, f64)> {
        match self {
            Layer::Conv(c) => Some((&mut c.weight, &mut c.bias, c.lr_multiplier)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias, d.lr_multiplier)),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::MaxPool => "maxpool",
            Layer::Relu => "relu",
            Layer::Dropout { .. } => "dropout",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Softmax => "softmax",
        }
    }

    /// Output shape for one item (no batch axis).
    pub fn output_shape(&self, s: &[usize]) -> Result<Vec<usize>> {
        let need = |rank: usize| -> Result<()> {
            if s.len() == rank {
                Ok(())
            } else {
                Err(CnnError::IncompatibleShapes(format!(
                    "{} expects rank-{rank} input, got {s:?}",
                    self.name()
                )))
            }
        };
        match self {
            Layer::Conv(c) => {
                need(3)?;
                if s[0] != c.in_channels {
                    return Err(CnnError::IncompatibleShapes(format!(
                        "conv expects {} channels, got {}",
                        c.in_channels, s[0]
                    )));
                }
                let (h, w) = c.out_hw(s[1], s[2])?;
                Ok(vec![c.out_channels, h, w])
            }
            Layer::MaxPool => {
                need(3)?;
                if s[1] < 2 || s[2] < 2 {
                    return Err(CnnError::IncompatibleShapes(format!(
                        "2×2 pooling on a {}×{} map",
                        s[1], s[2]
                    )));
                }
                Ok(vec![s[0], s[1] / 2, s[2] / 2])
            }
            Layer::Relu | Layer::Dropout { .. } | Layer::Softmax => Ok(s.to_vec()),
            Layer::Flatten => Ok(vec![s.iter().product()]),
            Layer::Dense(d) => {
                need(1)?;
                if s[0] != d.inputs {
                    return Err(CnnError::IncompatibleShapes(format!(
                        "dense expects {} inputs, got {}",
                        d.inputs, s[0]
                    )));
                }
                Ok(vec![d.outputs])
            }
        }
    }

    /// `rng` is `Some` in training mode (enables dropout).
    pub(crate) fn forward(
        &self,
        x: Tensor,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor, Cache)> {
        match self {
            Layer::Conv(c) => {
                let in_shape = x.shape.clone();
                let (y, cols) = c.forward(&x)?;
                Ok((y, Cache::Conv { cols, in_shape }))
            }
            Layer::MaxPool => {
                if x.shape.len() != 4 {
                    return Err(CnnError::ShapeMismatch {
                        expected: vec![0, 0, 0, 0],
                        got: x.shape,
                    });
                }
                let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
                let (ho, wo) = (h / 2, w / 2);
                let mut out = Vec::with_capacity(n * c * ho * wo);
                let mut argmax = Vec::with_capacity(out.capacity());
                for plane in 0..n * c {
                    let base = plane * h * w;
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut best = base + 2 * oy * w + 2 * ox;
                            for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                                if x.data[i] > x.data[best] {
                                    best = i;
                                }
                            }
                            out.push(x.data[best]);
                            argmax.push(best);
                        }
                    }
                }
                Ok((
                    Tensor::new(vec![n, c, ho, wo], out)?,
                    Cache::Pool {
                        argmax,
                        in_shape: x.shape,
                    },
                ))
            }
            Layer::Relu => {
                let mask: Vec<bool> = x.data.iter().map(|v| *v > 0.0).collect();
                let mut y = x;
                for (v, m) in y.data.iter_mut().zip(&mask) {
                    if !m {
                        *v = 0.0;
                    }
                }
                Ok((y, Cache::Relu { mask }))
            }
            Layer::Dropout { p } => match rng {
                Some(rng) => {
                    let keep = 1.0 - p;
                    let scale: Vec<f64> = (0..x.len())
                        .map(|_| {
                            if rng.random::<f64>() < *p {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect();
                    let mut y = x;
                    for (v, s) in y.data.iter_mut().zip(&scale) {
                        *v *= s;
                    }
                    Ok((y, Cache::Dropout { scale }))
                }
                None => Ok((x, Cache::None)),
            },
            Layer::Flatten => {
                let in_shape = x.shape.clone();
                let n = x.batch();
                let d = x.item_len();
                Ok((x.reshape(vec![n, d])?, Cache::Flatten { in_shape }))
            }
            Layer::Dense(d) => {
                let y = d.forward(&x)?;
                Ok((y, Cache::Dense { input: x }))
            }
            Layer::Softmax => Ok((softmax_rows(&x), Cache::None)),
        }
    }

    /// Gradient w.r.t. the input and, for parametric layers, the weight and
    /// bias gradients.
    pub(crate) fn backward(
        &self,
        dy: Tensor,
        cache: Cache,
    ) -> (Tensor, Option<(Vec<f64>, Vec<f64>)>) {
        match (self, cache) {
            (Layer::Conv(c), Cache::Conv { cols, in_shape }) => {
                let (dx, dw, db) = c.backward(&dy, &cols, &in_shape);
                (dx, Some((dw, db)))
            }
            (Layer::MaxPool, Cache::Pool { argmax, in_shape }) => {
                let mut dx = Tensor::zeros(in_shape);
                for (g, &i) in dy.data.iter().zip(&argmax) {
                    dx.data[i] += g;
                }
                (dx, None)
            }
            (Layer::Relu, Cache::Relu { mask }) => {
                let mut dx = dy;
                for (g, m) in dx.data.iter_mut().zip(&mask) {
                    if !m {
                        *g = 0.0;
                    }
                }
                (dx, None)
            }
            (Layer::Dropout { .. }, Cache::Dropout { scale }) => {
                let mut dx = dy;
                for (g, s) in dx.data.iter_mut().zip(&scale) {
                    *g *= s;
                }
                (dx, None)
            }
            (Layer::Flatten, Cache::Flatten { in_shape }) => {
                (dy.reshape(in_shape).expect("flatten shape"), None)
            }
            (Layer::Dense(d), Cache::Dense { input }) => {
                let (dx, dw, db) = d.backward(&dy, &input);
                (dx, Some((dw, db)))
            }
            // dropout at inference, and softmax (folded into the loss)
            (_, _) => (dy, None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, seed: u64) -> Conv2d {
        let mut rng = crate::rng::stream(seed, 0);
        let kk = in_c * k * k;
        Conv2d {
            in_channels: in_c,
            out_channels: out_c,
            kernel_h: k,
            kernel_w: k,
            stride,
            pad,
            weight: (0..out_c * kk)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            bias: (0..out_c).map(|_| rng.random_range(-1.0..1.0)).collect(),
            lr_multiplier: 1.0,
        }
    }

    /// Direct-loop convolution used as the reference.
    fn naive(c: &Conv2d, x: &Tensor) -> Tensor {
        let (n, ci, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (ho, wo) = c.out_hw(h, w).unwrap();
        let mut out = Tensor::zeros(vec![n, c.out_channels, ho, wo]);
        for b in 0..n {
            for o in 0..c.out_channels {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = c.bias[o];
                        for ch in 0..ci {
                            for ky in 0..c.kernel_h {
                                for kx in 0..c.kernel_w {
                                    let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                                    let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                                    if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                        continue;
                                    }
                                    let wv = c.weight
                                        [((o * ci + ch) * c.kernel_h + ky) * c.kernel_w + kx];
                                    s += wv
                                        * x.data
                                            [((b * ci + ch) * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        out.data[((b * c.out_channels + o) * ho + oy) * wo + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn im2col_conv_matches_direct_loops() {
        let mut rng = crate::rng::stream(5, 1);
        for (k, s, p) in [(3, 1, 1), (3, 2, 0), (2, 1, 0), (5, 2, 2)] {
            let c = conv(2, 3, k, s, p, 9);
            let x = Tensor::new(
                vec![2, 2, 7, 6],
                (0..168).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let (fast, _) = c.forward(&x).unwrap();
            let slow = naive(&c, &x);
            assert_eq!(fast.shape, slow.shape);
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_input_gradient_is_adjoint() {
        // <conv(x) - b, g> = <x, conv_backward(g)> for any g
        let mut rng = crate::rng::stream(6, 1);
        let c = conv(2, 3, 3, 2, 1, 4);
        let x = Tensor::new(
            vec![1, 2, 5, 5],
            (0..50).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (y, cols) = c.forward(&x).unwrap();
        let g = Tensor::new(
            y.shape.clone(),
            (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (dx, _, _) = c.backward(&g, &cols, &x.shape);
        let per = y.shape[2] * y.shape[3];
        let lhs: f64 = y
            .data
            .iter()
            .zip(&g.data)
            .enumerate()
            .map(|(i, (a, b))| (a - c.bias[(i / per) % 3]) * b)
            .sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn maxpool_routes_gradient_to_the_max() {
        let x = Tensor::new(
            vec![1, 1, 2, 4],
            vec![1.0, 5.0, 0.0, 0.0, 3.0, 2.0, 0.0, 7.0],
        )
        .unwrap();
        let (y, cache) = Layer::MaxPool.forward(x, None).unwrap();
        assert_eq!(y.data, vec![5.0, 7.0]);
        let (dx, _) = Layer::MaxPool.backward(
            Tensor::new(vec![1, 1, 1, 2], vec![1.0, 2.0]).unwrap(),
            cache,
        );
        assert_eq!(dx.data, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = Layer::Dropout { p: 0.5 }.forward(x.clone(), None).unwrap();
        assert_eq!(y, x);
        let mut rng = crate::rng::stream(1, 1);
        let (y, _) = Layer::Dropout { p: 0.5 }
            .forward(x, Some(&mut rng))
            .unwrap();
        assert!(y
            .data
            .iter()
            .zip([1.0, 2.0, 3.0, 4.0])
            .all(|(a, b)| *a == 0.0 || *a == 2.0 * b));
    }
}
