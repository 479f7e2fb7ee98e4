use super::{CostLayer, CostNet, CostOp};

struct Builder {
    layers: Vec<CostLayer>,
}

impl Builder {
    fn conv(&mut self, name: String, in_c: usize, out_c: usize, k: usize, stride: usize, afdc: bool) {
        self.conv_from(name, None, in_c, out_c, k, stride, afdc);
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_from(
        &mut self,
        name: String,
        from: Option<String>,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        afdc: bool,
    ) {
        self.layers.push(CostLayer {
            name,
            op: CostOp::Conv {
                in_c,
                out_c,
                k_h: k,
                k_w: k,
                stride,
                padding: k / 2,
                afdc,
            },
            from,
        });
    }

    fn push(&mut self, name: &str, op: CostOp, from: Option<String>) {
        self.layers.push(CostLayer {
            name: name.into(),
            op,
            from,
        });
    }

    fn last(&self) -> String {
        self.layers.last().expect("nonempty").name.clone()
    }
}

/// ResNet-50 (v1: stride on the first 1x1 of each downsampling bottleneck).
/// Every 3x3 convolution is an AFDC layer; the 7x7 stem only when
/// `first_conv_dilated`.
pub fn resnet50(first_conv_dilated: bool) -> CostNet {
    let mut b = Builder { layers: Vec::new() };
    b.conv("conv1".into(), 3, 64, 7, 2, first_conv_dilated);
    b.push(
        "maxpool",
        CostOp::Pool {
            k: 3,
            stride: 2,
            padding: 1,
        },
        None,
    );
    let mut in_c = 64;
    for (stage, (&blocks, &mid)) in [3usize, 4, 6, 3].iter().zip(&[64usize, 128, 256, 512]).enumerate() {
        let out_c = mid * 4;
        for blk in 0..blocks {
            let stride = if blk == 0 && stage > 0 { 2 } else { 1 };
            let input = b.last();
            let p = format!("layer{}.{blk}", stage + 1);
            b.conv(format!("{p}.conv1"), in_c, mid, 1, stride, false);
            b.conv(format!("{p}.conv2"), mid, mid, 3, 1, true);
            b.conv(format!("{p}.conv3"), mid, out_c, 1, 1, false);
            if blk == 0 {
                b.conv_from(format!("{p}.downsample"), Some(input), in_c, out_c, 1, stride, false);
            }
            in_c = out_c;
        }
    }
    b.push("avgpool", CostOp::Adaptive { grid: 1 }, None);
    b.push("fc", CostOp::Dense { in_f: 2048, out_f: 1000 }, None);
    CostNet {
        name: "resnet50".into(),
        input_channels: 3,
        layers: b.layers,
    }
}

/// VGG-16 (configuration D) with every convolution as an AFDC layer.
pub fn vgg16() -> CostNet {
    let mut b = Builder { layers: Vec::new() };
    let plan: [&[usize]; 5] = [&[64, 64], &[128, 128], &[256, 256, 256], &[512, 512, 512], &[512, 512, 512]];
    let mut in_c = 3;
    for (stage, widths) in plan.iter().enumerate() {
        for (i, &w) in widths.iter().enumerate() {
            b.conv(format!("conv{}_{}", stage + 1, i + 1), in_c, w, 3, 1, true);
            in_c = w;
        }
        b.push(
            &format!("pool{}", stage + 1),
            CostOp::Pool {
                k: 2,
                stride: 2,
                padding: 0,
            },
            None,
        );
    }
    b.push("fc6", CostOp::Dense { in_f: 512 * 7 * 7, out_f: 4096 }, None);
    b.push("fc7", CostOp::Dense { in_f: 4096, out_f: 4096 }, None);
    b.push("fc8", CostOp::Dense { in_f: 4096, out_f: 1000 }, None);
    CostNet {
        name: "vgg16".into(),
        input_channels: 3,
        layers: b.layers,
    }
}
