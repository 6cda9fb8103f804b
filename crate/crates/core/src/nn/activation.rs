use super::{Layer, Mode, NnError, Param, Parameterized, Tensor};

/// `x` for positive inputs, `slope * x` otherwise.
#[derive(Debug, Clone)]
pub struct LeakyRelu {
    name: String,
    pub slope: f64,
    input: Option<Tensor>,
}

impl LeakyRelu {
    pub fn new(name: &str, slope: f64) -> Self {
        Self {
            name: name.to_string(),
            slope,
            input: None,
        }
    }
}

impl Parameterized for LeakyRelu {
    fn visit_params(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param)) {}
}

impl Layer for LeakyRelu {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let slope = self.slope;
        let y = x.mapv(|v| if v > 0.0 { v } else { slope * v });
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let x = self.input.as_ref().ok_or_else(|| NnError::NoCache(self.name.clone()))?;
        let slope = self.slope;
        let mut dx = grad.clone();
        ndarray::Zip::from(&mut dx).and(x).for_each(|d, &v| {
            if v <= 0.0 {
                *d *= slope
            }
        });
        Ok(dx)
    }
}

const SIGMOID_MARGIN: f64 = 1e-15;

/// Logistic function, kept strictly inside (0, 1).
pub fn sigmoid(v: f64) -> f64 {
    let s = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_MARGIN, 1.0 - SIGMOID_MARGIN)
}

#[derive(Debug, Clone)]
pub struct Sigmoid {
    name: String,
    output: Option<Tensor>,
}

impl Sigmoid {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            output: None,
        }
    }
}

impl Parameterized for Sigmoid {
    fn visit_params(&mut self, _: &str, _: &mut dyn FnMut(&str, &mut Param)) {}
}

impl Layer for Sigmoid {
    fn name(&self) -> &str {
        &self.name
    }

    fn forward(&mut self, x: &Tensor, _mode: Mode) -> Result<Tensor, NnError> {
        let y = x.mapv(sigmoid);
        self.output = Some(y.clone());
        Ok(y)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor, NnError> {
        let y = self.output.as_ref().ok_or_else(|| NnError::NoCache(self.name.clone()))?;
        Ok(ndarray::Zip::from(grad).and(y).map_collect(|&g, &s| g * s * (1.0 - s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_inputs_are_scaled() {
        let mut act = LeakyRelu::new("a", 0.01);
        let x = ndarray::arr1(&[-2.0, -0.5, 3.0]).into_dyn();
        let y = act.forward(&x, Mode::Train).unwrap();
        assert_eq!(y, ndarray::arr1(&[-0.02, -0.005, 3.0]).into_dyn());
    }

    #[test]
    fn sigmoid_stays_inside_the_unit_interval() {
        for v in [-800.0, -30.0, 0.0, 30.0, 800.0] {
            let s = sigmoid(v);
            assert!(s.is_finite() && s > 0.0 && s < 1.0);
        }
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(20.0) < 1.0 && sigmoid(-20.0) > 0.0);
    }
}
