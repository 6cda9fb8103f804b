use super::{join, shape_err, BatchNorm2d, Conv2d, LeakyRelu, Layer, Mode, NnError, Param, Parameterized, Tensor};

/// Two rounds of 3×3 convolution, batch normalization and leaky ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    name: String,
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub act1: LeakyRelu,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub act2: LeakyRelu,
}

impl ConvBlock {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, slope: f64, seed: u64) -> Self {
        let n = |s: &str| join(name, s);
        Self {
            name: name.to_string(),
            conv1: Conv2d::new(&n("conv1"), in_channels, out_channels, 3, seed),
            bn1: BatchNorm2d::new(&n("bn1"), out_channels),
            act1: LeakyRelu::new(&n("act1"), slope),
            conv2: Conv2d::new(&n("conv2"), out_channels, out_channels, 3, seed),
            bn2: BatchNorm2d::new(&n("bn2"), out_channels),
            act2: LeakyRelu::new(&n("act2"), slope),
        }
    }
}

impl Parameterized for ConvBlock {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv1.visit_params(prefix, f);
        self.bn1.visit_params(prefix, f);
        self.conv2.visit_params(prefix, f);
        self.bn2.visit_params(prefix, f);
    }
}

impl Layer for ConvBlock {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let y = self.conv1.forward(x, mode)?;
        let y = self.bn1.forward(&y, mode)?;
        let y = self.act1.forward(&y, mode)?;
        let y = self.conv2.forward(&y, mode)?;
        let y = self.bn2.forward(&y, mode)?;
        self.act2.forward(&y, mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let g = self.act2.backward(grad)?;
        let g = self.bn2.backward(&g)?;
        let g = self.conv2.backward(&g)?;
        let g = self.act1.backward(&g)?;
        let g = self.bn1.backward(&g)?;
        self.conv1.backward(&g)
    }
}

/// `y = leaky_relu(a(x) + b(x))` where `a` is conv-BN-act-conv-BN and `b`
/// is a 1×1 convolution followed by batch normalization.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    name: String,
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub act1: LeakyRelu,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub shortcut: Conv2d,
    pub shortcut_bn: BatchNorm2d,
    pub act: LeakyRelu,
}

impl ResidualBlock {
    pub fn new(name: &str, in_channels: usize, out_channels: usize, slope: f64, seed: u64) -> Self {
        let n = |s: &str| join(name, s);
        Self {
            name: name.to_string(),
            conv1: Conv2d::new(&n("conv1"), in_channels, out_channels, 3, seed),
            bn1: BatchNorm2d::new(&n("bn1"), out_channels),
            act1: LeakyRelu::new(&n("act1"), slope),
            conv2: Conv2d::new(&n("conv2"), out_channels, out_channels, 3, seed),
            bn2: BatchNorm2d::new(&n("bn2"), out_channels),
            shortcut: Conv2d::new(&n("shortcut"), in_channels, out_channels, 1, seed),
            shortcut_bn: BatchNorm2d::new(&n("shortcut_bn"), out_channels),
            act: LeakyRelu::new(&n("act"), slope),
        }
    }
}

impl Parameterized for ResidualBlock {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv1.visit_params(prefix, f);
        self.bn1.visit_params(prefix, f);
        self.conv2.visit_params(prefix, f);
        self.bn2.visit_params(prefix, f);
        self.shortcut.visit_params(prefix, f);
        self.shortcut_bn.visit_params(prefix, f);
    }
}

impl Layer for ResidualBlock {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor, NnError> {
        let a = self.conv1.forward(x, mode)?;
        let a = self.bn1.forward(&a, mode)?;
        let a = self.act1.forward(&a, mode)?;
        let a = self.conv2.forward(&a, mode)?;
        let a = self.bn2.forward(&a, mode)?;
        let b = self.shortcut.forward(x, mode)?;
        let b = self.shortcut_bn.forward(&b, mode)?;
        if a.shape() != b.shape() {
            return Err(shape_err(
                &self.name,
                format!("main path {:?} vs shortcut {:?}", a.shape(), b.shape()),
            ));
        }
        self.act.forward(&(a + b), mode)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let g = self.act.backward(grad)?;
        let ga = self.bn2.backward(&g)?;
        let ga = self.conv2.backward(&ga)?;
        let ga = self.act1.backward(&ga)?;
        let ga = self.bn1.backward(&ga)?;
        let ga = self.conv1.backward(&ga)?;
        let gb = self.shortcut_bn.backward(&g)?;
        let gb = self.shortcut.backward(&gb)?;
        Ok(ga + gb)
    }
}
