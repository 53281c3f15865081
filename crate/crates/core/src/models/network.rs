use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::spec::{structural_hash, ModelKind, ModelSpec};
use crate::nn::{Backend, ConvParams, Scalar, Tensor, LEAKY_SLOPE};

/// Named parameter tensors in layer-table order.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T = f32> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Weights<T> {
    pub fn from_parts(names: Vec<String>, tensors: Vec<Tensor<T>>) -> Result<Self> {
        if names.len() != tensors.len() {
            return Err(Error::Shape(format!("{} names for {} tensors", names.len(), tensors.len())));
        }
        Ok(Weights { names, tensors })
    }

    /// Uniform in `+-sqrt(1 / fan_in)` for weights, zero biases. Fan-in of a
    /// conv is `in * k * k`; of the 2x2 stride-2 transposed conv it is `in`,
    /// since every output pixel sees one tap per input channel.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for p in spec.layer_table() {
            let n: usize = p.shape.iter().product();
            let t = if p.name.ends_with(".bias") {
                Tensor::zeros(&p.shape)
            } else {
                let fan_in = if p.name.ends_with(".up.weight") {
                    p.shape[0]
                } else {
                    p.shape[1..].iter().product()
                };
                let bound = (1.0 / fan_in as f64).sqrt();
                Tensor::new(&p.shape, (0..n).map(|_| T::of(rng.random_range(-bound..bound))).collect())?
            };
            names.push(p.name);
            tensors.push(t);
        }
        Ok(Weights { names, tensors })
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        let table = spec.layer_table();
        Weights {
            tensors: table.iter().map(|p| Tensor::zeros(&p.shape)).collect(),
            names: table.into_iter().map(|p| p.name).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn structural_hash(&self) -> u64 {
        structural_hash(self.names.iter().map(String::as_str).zip(self.tensors.iter().map(|t| t.shape())))
    }

    /// Errors unless names and shapes equal the spec's layer table.
    pub fn check_spec(&self, spec: &ModelSpec) -> Result<()> {
        let table = spec.layer_table();
        if table.len() != self.names.len() {
            return Err(Error::SpecMismatch(format!(
                "spec {spec} expects {} tensors, weights hold {}",
                table.len(),
                self.names.len()
            )));
        }
        for (p, (name, t)) in table.iter().zip(self.names.iter().zip(&self.tensors)) {
            if &p.name != name || p.shape != t.shape() {
                return Err(Error::SpecMismatch(format!(
                    "expected {} {:?}, found {name} {:?}",
                    p.name,
                    p.shape,
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Weights<U> {
        Weights {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

struct Cursor<'a, V> {
    params: &'a [V],
    next: usize,
}

impl<'a, V> Cursor<'a, V> {
    fn layer(&mut self) -> Result<(&'a V, &'a V)> {
        let i = self.next;
        if i + 1 >= self.params.len() {
            return Err(Error::SpecMismatch("parameter list ended early".into()));
        }
        self.next += 2;
        Ok((&self.params[i], &self.params[i + 1]))
    }
}

fn conv_act<T: Scalar, B: Backend<T>>(b: &mut B, x: &B::Value, c: &mut Cursor<B::Value>, p: ConvParams) -> Result<B::Value> {
    let (w, bias) = c.layer()?;
    let y = b.conv2d(x, w, bias, p)?;
    b.leaky_relu(&y, LEAKY_SLOPE)
}

/// Network forward pass including the sub-pixel layer: `x` is the packed (or
/// sRGB) input `[N, C, h, w]` and the result is `[N, 3, h*r, w*r]`.
/// `params` must follow [`ModelSpec::layer_table`] order.
pub fn forward<T: Scalar, B: Backend<T>>(spec: &ModelSpec, b: &mut B, params: &[B::Value], x: &B::Value) -> Result<B::Value> {
    let shape = b.shape(x);
    if shape.len() != 4 || shape[1] != spec.input.in_channels() {
        return Err(Error::Shape(format!(
            "network {spec} expects [N, {}, H, W] input, got {shape:?}",
            spec.input.in_channels()
        )));
    }
    let m = spec.spatial_multiple();
    if shape[2] % m != 0 || shape[3] % m != 0 || shape[2] == 0 || shape[3] == 0 {
        return Err(Error::InvalidDims(format!(
            "{}x{} input is not a positive multiple of {m}",
            shape[2], shape[3]
        )));
    }
    let expected = spec.layer_table().len();
    if params.len() != expected {
        return Err(Error::SpecMismatch(format!("{} parameters given, spec {spec} needs {expected}", params.len())));
    }
    let mut c = Cursor { params, next: 0 };
    let mut h = x.clone();
    match spec.kind {
        ModelKind::UNet => {
            let mut skips = Vec::with_capacity(spec.depth);
            for l in 0..=spec.depth {
                h = conv_act(b, &h, &mut c, ConvParams::same3(1))?;
                h = conv_act(b, &h, &mut c, ConvParams::same3(1))?;
                if l < spec.depth {
                    skips.push(h.clone());
                    h = b.maxpool2(&h)?;
                }
            }
            while let Some(skip) = skips.pop() {
                let (w, bias) = c.layer()?;
                let up = b.conv_transpose2(&h, w, bias)?;
                h = b.concat_channels(&up, &skip)?;
                drop(skip);
                h = conv_act(b, &h, &mut c, ConvParams::same3(1))?;
                h = conv_act(b, &h, &mut c, ConvParams::same3(1))?;
            }
        }
        ModelKind::Can => {
            for d in spec.can_dilations() {
                h = conv_act(b, &h, &mut c, ConvParams::same3(d))?;
            }
        }
    }
    let (w, bias) = c.layer()?;
    let out = b.conv2d(&h, w, bias, ConvParams::pointwise())?;
    match spec.input.shuffle_factor() {
        1 => Ok(out),
        r => b.pixel_shuffle(&out, r),
    }
}

/// Receptive field of the CAN in input pixels: `1 + 2 * sum(dilations)`.
pub fn can_receptive_field(spec: &ModelSpec) -> usize {
    1 + 2 * spec.can_dilations().iter().sum::<usize>()
}
