use areasweep_tensor::{ConvGeometry, LayerSpec, Network, SampleShape};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer plan of the encoder-decoder Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetPlan {
    /// conv 32x5x5 stride 3, maxpool, two conv 16x4x4 stride 2, dense 500.
    Full,
    /// conv 16x3x3, maxpool, conv 8x3x3 stride 2, conv 8x3x3, dense 128.
    Quarter,
    /// `Full` on maps at least 20 cells across, otherwise `Quarter`.
    #[default]
    Auto,
}

struct ConvStage {
    filters: usize,
    geom: ConvGeometry,
}

struct Plan {
    first: ConvStage,
    second: ConvStage,
    third: ConvStage,
    hidden: usize,
}

impl NetPlan {
    pub fn resolve(self, h: usize, w: usize) -> NetPlan {
        match self {
            NetPlan::Auto if h.min(w) >= 20 => NetPlan::Full,
            NetPlan::Auto => NetPlan::Quarter,
            p => p,
        }
    }

    fn plan(self) -> Plan {
        let stage = |filters, k, s, p| ConvStage { filters, geom: ConvGeometry::new(k, s, p) };
        match self {
            NetPlan::Full => Plan {
                first: stage(32, 5, 3, 0),
                second: stage(16, 4, 2, 1),
                third: stage(16, 4, 2, 2),
                hidden: 500,
            },
            _ => Plan { first: stage(16, 3, 1, 1), second: stage(8, 3, 2, 1), third: stage(8, 3, 1, 1), hidden: 128 },
        }
    }
}

fn too_small(h: usize, w: usize, reason: impl Into<String>) -> Error {
    Error::MapTooSmall { h, w, reason: reason.into() }
}

/// Layer list mapping a `c x h x w` input to a `1 x h x w` action-value grid. The
/// decoder mirrors the encoder; output paddings and the upsample extent are
/// chosen so each decoder stage restores the matching encoder extent.
pub fn qnetwork_specs(h: usize, w: usize, plan: NetPlan) -> Result<Vec<LayerSpec>> {
    let p = plan.resolve(h, w).plan();
    let conv = |g: &ConvGeometry, e: (usize, usize), name: &str| -> Result<(usize, usize)> {
        match (g.conv_out(e.0), g.conv_out(e.1)) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => Err(too_small(h, w, format!("{name} kernel does not fit a {}x{} input", e.0, e.1))),
        }
    };
    let s0 = (h, w);
    let s1 = conv(&p.first.geom, s0, "first conv")?;
    let s2 = (s1.0 / 2, s1.1 / 2);
    if s2.0 == 0 || s2.1 == 0 {
        return Err(too_small(h, w, "nothing left to max-pool"));
    }
    let s3 = conv(&p.second.geom, s2, "second conv")?;
    let s4 = conv(&p.third.geom, s3, "third conv")?;
    let pad = |g: &ConvGeometry, e: (usize, usize)| -> Result<usize> {
        let (a, b) = (g.output_padding_for(e.0), g.output_padding_for(e.1));
        if a != b {
            return Err(Error::Config(format!("a {h}x{w} map needs different output paddings per axis")));
        }
        Ok(a)
    };
    let code = p.third.filters * s4.0 * s4.1;
    let deconv = |filters, st: &ConvStage, e| -> Result<LayerSpec> {
        let g = st.geom;
        Ok(LayerSpec::Deconv { filters, kernel: g.kernel, stride: g.stride, padding: g.padding, output_padding: pad(&g, e)? })
    };
    let conv_spec = |st: &ConvStage| LayerSpec::Conv {
        filters: st.filters,
        kernel: st.geom.kernel,
        stride: st.geom.stride,
        padding: st.geom.padding,
    };
    Ok(vec![
        conv_spec(&p.first),
        LayerSpec::Relu,
        LayerSpec::MaxPool2,
        conv_spec(&p.second),
        LayerSpec::Relu,
        conv_spec(&p.third),
        LayerSpec::Relu,
        LayerSpec::Dense { units: p.hidden },
        LayerSpec::Relu,
        LayerSpec::Dense { units: code },
        LayerSpec::Relu,
        LayerSpec::Reshape { c: p.third.filters, h: s4.0, w: s4.1 },
        deconv(p.second.filters, &p.third, s3)?,
        LayerSpec::Relu,
        deconv(p.first.filters, &p.second, s2)?,
        LayerSpec::Relu,
        LayerSpec::Upsample2 { out_h: s1.0, out_w: s1.1 },
        deconv(1, &p.first, s0)?,
    ])
}

pub fn build_qnetwork(h: usize, w: usize, c: usize, plan: NetPlan, rng: &mut impl Rng) -> Result<Network<f32>> {
    build_qnetwork_typed(h, w, c, plan, rng)
}

/// Same as [`build_qnetwork`] for any element type (f64 for gradient checks).
pub fn build_qnetwork_typed<T: areasweep_tensor::Scalar>(
    h: usize,
    w: usize,
    c: usize,
    plan: NetPlan,
    rng: &mut impl Rng,
) -> Result<Network<T>> {
    let specs = qnetwork_specs(h, w, plan)?;
    let net = Network::new(SampleShape::new(c, h, w), &specs, rng)?;
    let out = net.output_shape();
    if (out.c, out.h, out.w) != (1, h, w) {
        return Err(too_small(h, w, format!("decoder produced {}x{}x{}", out.c, out.h, out.w)));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use areasweep_tensor::Tensor4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn out_shape(h: usize, c: usize, plan: NetPlan) -> SampleShape {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = build_qnetwork(h, h, c, plan, &mut rng).unwrap();
        let x = Tensor4::<f32>::filled(SampleShape::new(c, h, h).batch(2), 0.5);
        let y = net.forward(&x).unwrap();
        assert_eq!(y.shape(), SampleShape::new(1, h, h).batch(2));
        net.output_shape()
    }

    #[test]
    fn full_plan_on_twenty() {
        assert_eq!(out_shape(20, 3, NetPlan::Full), SampleShape::new(1, 20, 20));
        assert_eq!(out_shape(20, 4, NetPlan::Full), SampleShape::new(1, 20, 20));
        assert_eq!(NetPlan::Auto.resolve(20, 20), NetPlan::Full);
    }

    #[test]
    fn full_plan_encoder_extents() {
        let specs = qnetwork_specs(20, 20, NetPlan::Full).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net: Network<f32> = Network::new(SampleShape::new(3, 20, 20), &specs, &mut rng).unwrap();
        let ext: Vec<(usize, usize)> = net.layers().iter().map(|l| (l.output_shape().c, l.output_shape().h)).collect();
        assert_eq!(ext[0], (32, 6));
        assert_eq!(ext[2], (32, 3));
        assert_eq!(ext[3], (16, 1));
        assert_eq!(ext[5], (16, 1));
        assert_eq!(ext[7], (500, 1));
        assert_eq!(ext[12], (16, 1));
        assert_eq!(ext[14], (32, 3));
        assert_eq!(ext[16], (32, 6));
    }

    #[test]
    fn quarter_plan_on_ten() {
        assert_eq!(out_shape(10, 3, NetPlan::Quarter), SampleShape::new(1, 10, 10));
        assert_eq!(out_shape(10, 4, NetPlan::Auto), SampleShape::new(1, 10, 10));
        assert_eq!(out_shape(13, 3, NetPlan::Quarter), SampleShape::new(1, 13, 13));
        assert_eq!(out_shape(23, 3, NetPlan::Full), SampleShape::new(1, 23, 23));
    }

    #[test]
    fn tiny_maps_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(build_qnetwork(4, 4, 3, NetPlan::Full, &mut rng), Err(Error::MapTooSmall { .. })));
        assert!(matches!(build_qnetwork(1, 1, 3, NetPlan::Quarter, &mut rng), Err(Error::MapTooSmall { .. })));
    }
}
