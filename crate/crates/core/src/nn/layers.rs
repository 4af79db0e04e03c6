use rand::Rng;

use super::init::he_normal;
use super::params::{ParamId, ParamKind, ParamStore, Session};
use crate::autodiff::{ConvGeometry, Padding, Var};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Fully connected layer `y = x·W + b` over the last axis.
#[derive(Clone, Debug)]
pub struct Dense {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub in_features: usize,
    pub out_features: usize,
}

impl Dense {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        in_features: usize,
        out_features: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let kernel = store.add(
            format!("{name}/kernel"),
            he_normal(&[in_features, out_features], in_features, rng),
            ParamKind::Kernel,
        )?;
        let bias = store.add(format!("{name}/bias"), Tensor::zeros(&[out_features]), ParamKind::Bias)?;
        Ok(Self {
            kernel,
            bias,
            in_features,
            out_features,
        })
    }

    pub fn param_count(&self) -> usize {
        self.in_features * self.out_features + self.out_features
    }

    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = x.shape();
        if shape.last() != Some(&self.in_features) {
            return Err(Error::ShapeMismatch {
                op: "dense",
                lhs: shape,
                rhs: vec![self.in_features, self.out_features],
            });
        }
        let rows = x.value().numel() / self.in_features;
        let w = s.param(self.kernel);
        let b = s.param(self.bias);
        let y = x.reshape(&[rows, self.in_features])?.matmul(&w)?.add(&b)?;
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = self.out_features;
        y.reshape(&out_shape)
    }
}

/// Convolution layer with a he-normal, L2-regularized kernel.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub geom: ConvGeometry,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        stride: (usize, usize),
        dilation: (usize, usize),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let geom = ConvGeometry {
            kernel,
            in_channels,
            out_channels,
            stride,
            dilation,
            padding: Padding::Same,
        };
        let fan_in = geom.patch_len();
        let k = store.add(
            format!("{name}/kernel"),
            he_normal(&[kernel.0, kernel.1, in_channels, out_channels], fan_in, rng),
            ParamKind::Kernel,
        )?;
        let b = store.add(format!("{name}/bias"), Tensor::zeros(&[out_channels]), ParamKind::Bias)?;
        Ok(Self {
            kernel: k,
            bias: b,
            geom,
        })
    }

    pub fn param_count(&self) -> usize {
        self.geom.patch_len() * self.geom.out_channels + self.geom.out_channels
    }

    pub fn forward<'t, T: Real>(&self, s: &mut Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let k = s.param(self.kernel);
        let b = s.param(self.bias);
        x.conv2d(&k, &b, self.geom)
    }
}
