//! A small encoder-decoder convolutional network with hand-written
//! reverse-mode gradients.
//!
//! Tensors are flat `Vec<f64>` in `(channel, row, column)` order. Rows run
//! along subcarriers and columns along sensors. Downsampling strides only the
//! row axis, since the sensor axis is usually a handful of columns.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Zero-padded `kernel x kernel` convolution with row stride `stride`.
    /// Weights live at `params[offset..]` as `[cout][cin][kernel][kernel]`
    /// followed by `cout` biases.
    Conv {
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        offset: usize,
    },
    /// Pointwise convolution whose weights are a row shared by every output
    /// channel plus `gamma` times a per-channel offset. Parameters are the
    /// shared row and bias (`cin + 1`), then the offsets `[cout][cin]` and the
    /// bias offsets `[cout]`.
    SharedPointwise {
        cin: usize,
        cout: usize,
        gamma: f64,
        offset: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    /// Nearest-neighbour row upsampling to `rows` rows.
    Upsample {
        rows: usize,
    },
}

impl Layer {
    fn output_shape(&self, s: Shape) -> Shape {
        match *self {
            Layer::Conv { cout, stride, .. } => Shape::new(cout, s.h.div_ceil(stride), s.w),
            Layer::SharedPointwise { cout, .. } => Shape::new(cout, s.h, s.w),
            Layer::LeakyRelu { .. } => s,
            Layer::Upsample { rows } => Shape::new(s.c, rows, s.w),
        }
    }

    fn param_count(&self) -> usize {
        match *self {
            Layer::Conv {
                cin, cout, kernel, ..
            } => cout * cin * kernel * kernel + cout,
            Layer::SharedPointwise { cin, cout, .. } => (cin + 1) * (cout + 1),
            _ => 0,
        }
    }
}

/// Layer widths and nonlinearity of the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Architecture {
    pub channels: usize,
    pub depth: usize,
    pub kernel: usize,
    pub slope: f64,
    /// When set, the output layer is a [`Layer::SharedPointwise`] with this
    /// weight on the per-frame offsets; otherwise a plain pointwise
    /// convolution.
    pub time_coupling: Option<f64>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            channels: 16,
            depth: 3,
            kernel: 3,
            slope: 0.2,
            time_coupling: Some(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    param_count: usize,
}

/// Activations recorded by a forward pass; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Tape {
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape holds the input")
    }
}

impl Network {
    /// Chains `layers` starting from `input`, assigning parameter offsets in
    /// order. Offsets given in `layers` are overwritten.
    pub fn new(input: Shape, mut layers: Vec<Layer>) -> Result<Self> {
        let mut shapes = vec![input];
        let mut offset = 0;
        for layer in &mut layers {
            let s = *shapes.last().expect("non-empty");
            match layer {
                Layer::Conv {
                    cin,
                    kernel,
                    stride,
                    offset: o,
                    ..
                } => {
                    if *cin != s.c || *kernel % 2 == 0 || *stride == 0 {
                        return Err(Error::InvalidInput(format!(
                            "convolution expects {cin} channels with odd kernel and positive stride, got {} channels, kernel {kernel}, stride {stride}",
                            s.c
                        )));
                    }
                    *o = offset;
                }
                Layer::SharedPointwise { cin, offset: o, .. } => {
                    if *cin != s.c {
                        return Err(Error::InvalidInput(format!(
                            "pointwise layer expects {cin} channels, got {}",
                            s.c
                        )));
                    }
                    *o = offset;
                }
                Layer::Upsample { rows } => {
                    if *rows < s.h || *rows > 2 * s.h {
                        return Err(Error::InvalidInput(format!(
                            "cannot upsample {} rows to {rows}",
                            s.h
                        )));
                    }
                }
                Layer::LeakyRelu { .. } => {}
            }
            offset += layer.param_count();
            shapes.push(layer.output_shape(s));
        }
        if input.is_empty() {
            return Err(Error::InvalidInput("network input is empty".into()));
        }
        Ok(Self {
            layers,
            shapes,
            param_count: offset,
        })
    }

    /// Encoder-decoder without skip connections mapping a `c x h x w` field to
    /// a field of the same shape.
    pub fn generator(arch: Architecture, c: usize, h: usize, w: usize) -> Result<Self> {
        if arch.channels == 0 || arch.depth == 0 {
            return Err(Error::InvalidInput("generator needs channels and depth".into()));
        }
        let mut layers = Vec::new();
        let mut rows = vec![h];
        let mut cin = c;
        for _ in 0..arch.depth {
            layers.push(Layer::Conv {
                cin,
                cout: arch.channels,
                kernel: arch.kernel,
                stride: 2,
                offset: 0,
            });
            layers.push(Layer::LeakyRelu { slope: arch.slope });
            cin = arch.channels;
            rows.push(rows.last().expect("non-empty").div_ceil(2));
        }
        for d in (0..arch.depth).rev() {
            layers.push(Layer::Upsample { rows: rows[d] });
            layers.push(Layer::Conv {
                cin,
                cout: arch.channels,
                kernel: arch.kernel,
                stride: 1,
                offset: 0,
            });
            layers.push(Layer::LeakyRelu { slope: arch.slope });
        }
        layers.push(match arch.time_coupling {
            Some(gamma) => Layer::SharedPointwise {
                cin,
                cout: c,
                gamma,
                offset: 0,
            },
            None => Layer::Conv {
                cin,
                cout: c,
                kernel: 1,
                stride: 1,
                offset: 0,
            },
        });
        Self::new(Shape::new(c, h, w), layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().expect("non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// He-normal weights scaled for the following nonlinearity, zero biases
    /// and zero per-channel offsets.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count];
        for (i, layer) in self.layers.iter().enumerate() {
            if let Layer::Conv {
                cin,
                cout,
                kernel,
                offset,
                ..
            } = *layer
            {
                let fan_in = (cin * kernel * kernel) as f64;
                let gain = match self.layers.get(i + 1) {
                    Some(Layer::LeakyRelu { slope }) => 2.0 / (1.0 + slope * slope),
                    _ => 1.0,
                };
                let normal = Normal::new(0.0, (gain / fan_in).sqrt()).expect("positive std");
                for p in &mut params[offset..offset + cout * cin * kernel * kernel] {
                    *p = normal.sample(rng);
                }
            }
            if let Layer::SharedPointwise { cin, offset, .. } = *layer {
                let normal = Normal::new(0.0, (1.0 / cin as f64).sqrt()).expect("positive std");
                for p in &mut params[offset..offset + cin] {
                    *p = normal.sample(rng);
                }
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<Tape> {
        if params.len() != self.param_count {
            return Err(Error::shape(self.param_count, params.len()));
        }
        if input.len() != self.shapes[0].len() {
            return Err(Error::shape(self.shapes[0].len(), input.len()));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &acts[i];
            let (si, so) = (self.shapes[i], self.shapes[i + 1]);
            let y = match *layer {
                Layer::Conv {
                    kernel,
                    stride,
                    offset,
                    ..
                } => conv_forward(&params[offset..offset + layer.param_count()], x, si, so, kernel, stride),
                Layer::SharedPointwise { gamma, offset, .. } => {
                    shared_forward(&params[offset..offset + layer.param_count()], x, si, so, gamma)
                }
                Layer::LeakyRelu { slope } => x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect(),
                Layer::Upsample { .. } => upsample_forward(x, si, so),
            };
            acts.push(y);
        }
        Ok(Tape { acts })
    }

    /// Gradients of `sum(grad_out * output)` with respect to the parameters
    /// and the input.
    pub fn backward(&self, params: &[f64], tape: &Tape, grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if grad_out.len() != self.output_shape().len() {
            return Err(Error::shape(self.output_shape().len(), grad_out.len()));
        }
        let mut grad_params = vec![0.0; self.param_count];
        let mut g = grad_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &tape.acts[i];
            let (si, so) = (self.shapes[i], self.shapes[i + 1]);
            g = match *layer {
                Layer::Conv {
                    kernel,
                    stride,
                    offset,
                    ..
                } => {
                    let n = layer.param_count();
                    conv_backward(
                        &params[offset..offset + n],
                        &mut grad_params[offset..offset + n],
                        x,
                        &g,
                        si,
                        so,
                        kernel,
                        stride,
                    )
                }
                Layer::SharedPointwise { gamma, offset, .. } => {
                    let n = layer.param_count();
                    shared_backward(&params[offset..offset + n], &mut grad_params[offset..offset + n], x, &g, si, so, gamma)
                }
                Layer::LeakyRelu { slope } => x
                    .iter()
                    .zip(&g)
                    .map(|(&v, &gv)| if v > 0.0 { gv } else { slope * gv })
                    .collect(),
                Layer::Upsample { .. } => upsample_backward(&g, si, so),
            };
        }
        Ok((grad_params, g))
    }
}

/// Valid output-column range for kernel tap `dj` with padding `pad`.
fn column_range(dj: usize, pad: usize, w: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(dj);
    let hi = (w + pad).saturating_sub(dj).min(w);
    (lo, hi)
}

fn conv_forward(p: &[f64], x: &[f64], si: Shape, so: Shape, k: usize, stride: usize) -> Vec<f64> {
    let pad = k / 2;
    let (w, cin) = (si.w, si.c);
    let bias = &p[so.c * cin * k * k..];
    let mut y = vec![0.0; so.len()];
    for co in 0..so.c {
        let out = &mut y[co * so.h * w..(co + 1) * so.h * w];
        out.fill(bias[co]);
        for ci in 0..cin {
            let inp = &x[ci * si.h * w..(ci + 1) * si.h * w];
            for di in 0..k {
                for dj in 0..k {
                    let wv = p[((co * cin + ci) * k + di) * k + dj];
                    let (lo, hi) = column_range(dj, pad, w);
                    for i in 0..so.h {
                        let r = i * stride + di;
                        if r < pad || r - pad >= si.h {
                            continue;
                        }
                        let src = &inp[(r - pad) * w..(r - pad + 1) * w];
                        let dst = &mut out[i * w..(i + 1) * w];
                        for j in lo..hi {
                            dst[j] += wv * src[j + dj - pad];
                        }
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    p: &[f64],
    gp: &mut [f64],
    x: &[f64],
    g: &[f64],
    si: Shape,
    so: Shape,
    k: usize,
    stride: usize,
) -> Vec<f64> {
    let pad = k / 2;
    let (w, cin) = (si.w, si.c);
    let nw = so.c * cin * k * k;
    let mut gx = vec![0.0; si.len()];
    for co in 0..so.c {
        let go = &g[co * so.h * w..(co + 1) * so.h * w];
        gp[nw + co] += go.iter().sum::<f64>();
        for ci in 0..cin {
            let inp = &x[ci * si.h * w..(ci + 1) * si.h * w];
            let gin = &mut gx[ci * si.h * w..(ci + 1) * si.h * w];
            for di in 0..k {
                for dj in 0..k {
                    let idx = ((co * cin + ci) * k + di) * k + dj;
                    let wv = p[idx];
                    let (lo, hi) = column_range(dj, pad, w);
                    let mut acc = 0.0;
                    for i in 0..so.h {
                        let r = i * stride + di;
                        if r < pad || r - pad >= si.h {
                            continue;
                        }
                        let row = (r - pad) * w;
                        let gr = &go[i * w..(i + 1) * w];
                        for j in lo..hi {
                            let c = row + j + dj - pad;
                            acc += gr[j] * inp[c];
                            gin[c] += wv * gr[j];
                        }
                    }
                    gp[idx] += acc;
                }
            }
        }
    }
    gx
}

fn shared_forward(p: &[f64], x: &[f64], si: Shape, so: Shape, gamma: f64) -> Vec<f64> {
    let (cin, n) = (si.c, si.h * si.w);
    let (shared, rest) = p.split_at(cin + 1);
    let (offsets, bias_offsets) = rest.split_at(so.c * cin);
    let mut y = vec![0.0; so.len()];
    for co in 0..so.c {
        let out = &mut y[co * n..(co + 1) * n];
        out.fill(shared[cin] + gamma * bias_offsets[co]);
        for ci in 0..cin {
            let wv = shared[ci] + gamma * offsets[co * cin + ci];
            for (o, &v) in out.iter_mut().zip(&x[ci * n..(ci + 1) * n]) {
                *o += wv * v;
            }
        }
    }
    y
}

fn shared_backward(p: &[f64], gp: &mut [f64], x: &[f64], g: &[f64], si: Shape, so: Shape, gamma: f64) -> Vec<f64> {
    let (cin, n) = (si.c, si.h * si.w);
    let mut gx = vec![0.0; si.len()];
    for co in 0..so.c {
        let go = &g[co * n..(co + 1) * n];
        let gb: f64 = go.iter().sum();
        gp[cin] += gb;
        gp[cin + 1 + so.c * cin + co] += gamma * gb;
        for ci in 0..cin {
            let wv = p[ci] + gamma * p[cin + 1 + co * cin + ci];
            let inp = &x[ci * n..(ci + 1) * n];
            let acc: f64 = go.iter().zip(inp).map(|(a, b)| a * b).sum();
            gp[ci] += acc;
            gp[cin + 1 + co * cin + ci] += gamma * acc;
            for (gi, &gv) in gx[ci * n..(ci + 1) * n].iter_mut().zip(go) {
                *gi += wv * gv;
            }
        }
    }
    gx
}

fn upsample_forward(x: &[f64], si: Shape, so: Shape) -> Vec<f64> {
    let w = si.w;
    let mut y = vec![0.0; so.len()];
    for c in 0..si.c {
        for i in 0..so.h {
            let src = (c * si.h + i / 2) * w;
            let dst = (c * so.h + i) * w;
            y[dst..dst + w].copy_from_slice(&x[src..src + w]);
        }
    }
    y
}

fn upsample_backward(g: &[f64], si: Shape, so: Shape) -> Vec<f64> {
    let w = si.w;
    let mut gx = vec![0.0; si.len()];
    for c in 0..si.c {
        for i in 0..so.h {
            let src = (c * so.h + i) * w;
            let dst = (c * si.h + i / 2) * w;
            for j in 0..w {
                gx[dst + j] += g[src + j];
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn generator_preserves_shape() {
        for (h, w) in [(64, 8), (60, 5), (7, 1), (1, 3)] {
            let net = Network::generator(Architecture::default(), 4, h, w).unwrap();
            assert_eq!(net.output_shape(), Shape::new(4, h, w));
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let params = net.init_params(&mut rng);
            let input = random_vec(&mut rng, 4 * h * w);
            assert_eq!(net.forward(&params, &input).unwrap().output().len(), 4 * h * w);
        }
    }

    #[test]
    fn one_by_one_conv_is_a_channel_mix() {
        let s = Shape::new(2, 2, 2);
        let net = Network::new(
            s,
            vec![Layer::Conv {
                cin: 2,
                cout: 1,
                kernel: 1,
                stride: 1,
                offset: 0,
            }],
        )
        .unwrap();
        let params = [2.0, -1.0, 0.5];
        let x = [1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0];
        let y = net.forward(&params, &x).unwrap();
        assert_eq!(y.output(), &[-7.5, -15.5, -23.5, -31.5]);
    }

    #[test]
    fn strided_conv_matches_direct_sum() {
        let si = Shape::new(1, 5, 3);
        let net = Network::new(
            si,
            vec![Layer::Conv {
                cin: 1,
                cout: 1,
                kernel: 3,
                stride: 2,
                offset: 0,
            }],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = random_vec(&mut rng, net.param_count());
        let x = random_vec(&mut rng, si.len());
        let y = net.forward(&params, &x).unwrap();
        assert_eq!(net.output_shape(), Shape::new(1, 3, 3));
        for i in 0..3 {
            for j in 0..3 {
                let mut want = params[9];
                for di in 0..3 {
                    for dj in 0..3 {
                        let (r, c) = (2 * i as isize + di as isize - 1, j as isize + dj as isize - 1);
                        if (0..5).contains(&r) && (0..3).contains(&c) {
                            want += params[di * 3 + dj] * x[r as usize * 3 + c as usize];
                        }
                    }
                }
                assert!((y.output()[i * 3 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsample_repeats_rows() {
        let si = Shape::new(1, 2, 2);
        let net = Network::new(si, vec![Layer::Upsample { rows: 3 }]).unwrap();
        let y = net.forward(&[], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(y.output(), &[1.0, 2.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(Network::new(si, vec![Layer::Upsample { rows: 5 }]).is_err());
    }

    #[test]
    fn rejects_channel_mismatch() {
        let r = Network::new(
            Shape::new(2, 4, 4),
            vec![Layer::Conv {
                cin: 3,
                cout: 1,
                kernel: 3,
                stride: 1,
                offset: 0,
            }],
        );
        assert!(r.is_err());
    }

    #[test]
    fn init_is_seeded() {
        let net = Network::generator(Architecture::default(), 3, 16, 4).unwrap();
        let a = net.init_params(&mut ChaCha8Rng::seed_from_u64(5));
        let b = net.init_params(&mut ChaCha8Rng::seed_from_u64(5));
        let c = net.init_params(&mut ChaCha8Rng::seed_from_u64(6));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
