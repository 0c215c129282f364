use std::f64::consts::PI;

use rand::Rng;

use super::{standard_normals, trig_feature_map, Differentiable, FeatureSampler, Features, TrigNetwork};
use crate::error::{check_dim, check_positive, Error, Result};
use crate::linalg::dot;
use crate::rng::SimRng;

/// `f(x) = w . Phi(Omega x)` with `w = [w^c; w^s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowTrigNet {
    features: Features,
    weights: Vec<f64>,
    weight_var: f64,
}

impl ShallowTrigNet {
    pub fn new(features: Features, weights: Vec<f64>, weight_var: f64) -> Result<Self> {
        check_dim(2 * features.rows(), weights.len())?;
        check_positive("weight variance", weight_var)?;
        Ok(Self { features, weights, weight_var })
    }

    /// Features from `sampler`, weights i.i.d. `N(0, weight_var)`.
    pub fn sample(sampler: &FeatureSampler, width: usize, weight_var: f64, rng: &mut SimRng) -> Result<Self> {
        check_positive("weight variance", weight_var)?;
        if width == 0 {
            return Err(Error::Input("width must be >= 1".into()));
        }
        let features = sampler.sample_with(width, rng);
        let weights = standard_normals(rng, 2 * width, weight_var.sqrt());
        Ok(Self { features, weights, weight_var })
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_var(&self) -> f64 {
        self.weight_var
    }

    pub fn width(&self) -> usize {
        self.features.rows()
    }

    /// Output under a phase shift `psi`:
    /// `(1/sqrt n) sum_i w^c_i cos(omega_i.x + psi(x)) + w^s_i sin(omega_i.x - psi(x))`.
    pub fn forward_with_phase(&self, psi: &PhaseShiftSpec, x: &[f64]) -> Result<f64> {
        let p = psi.eval(x)?;
        let n = self.width();
        let proj = self.features.project(x)?;
        let (wc, ws) = self.weights.split_at(n);
        let sum: f64 =
            proj.iter().zip(wc.iter().zip(ws)).map(|(a, (c, s))| c * (a + p).cos() + s * (a - p).sin()).sum();
        Ok(sum / (n as f64).sqrt())
    }
}

impl TrigNetwork for ShallowTrigNet {
    fn input_dim(&self) -> usize {
        self.features.dim()
    }

    fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.weights, &trig_feature_map(&self.features, x)?))
    }
}

impl Differentiable for ShallowTrigNet {
    fn num_params(&self) -> usize {
        self.weights.len()
    }

    fn params(&self) -> Vec<f64> {
        self.weights.clone()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim(self.weights.len(), params.len())?;
        self.weights.copy_from_slice(params);
        Ok(())
    }

    fn value_and_jacobian(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let phi = trig_feature_map(&self.features, x)?;
        Ok((dot(&self.weights, &phi), phi))
    }
}

/// `f(x) = sqrt(2/n) sum_i w_i cos(omega_i . (x - z_i) + b_i)` with biases in `[0, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineNet {
    features: Features,
    weights: Vec<f64>,
    biases: Vec<f64>,
    shifts: Features,
}

impl CosineNet {
    pub fn new(features: Features, weights: Vec<f64>, biases: Vec<f64>, shifts: Features) -> Result<Self> {
        let n = features.rows();
        check_dim(n, weights.len())?;
        check_dim(n, biases.len())?;
        check_dim(n, shifts.rows())?;
        check_dim(features.dim(), shifts.dim())?;
        if biases.iter().any(|b| !(0.0..=PI).contains(b)) {
            return Err(Error::Input("cosine-net biases must lie in [0, pi]".into()));
        }
        Ok(Self { features, weights, biases, shifts })
    }

    /// Weights `N(0, weight_var)`, biases `Unif[0, pi]`, the given fixed shifts.
    pub fn sample(sampler: &FeatureSampler, shifts: &Features, weight_var: f64, rng: &mut SimRng) -> Result<Self> {
        check_positive("weight variance", weight_var)?;
        let n = shifts.rows();
        if n == 0 {
            return Err(Error::Input("width must be >= 1".into()));
        }
        let features = sampler.sample_with(n, rng);
        let weights = standard_normals(rng, n, weight_var.sqrt());
        let biases = (0..n).map(|_| rng.random_range(0.0..=PI)).collect();
        Self::new(features, weights, biases, shifts.clone())
    }

    pub fn width(&self) -> usize {
        self.features.rows()
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }
}

impl TrigNetwork for CosineNet {
    fn input_dim(&self) -> usize {
        self.features.dim()
    }

    fn forward(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.features.dim(), x.len())?;
        let n = self.width();
        let mut diff = vec![0.0; x.len()];
        let mut sum = 0.0;
        for i in 0..n {
            for ((d, a), z) in diff.iter_mut().zip(x).zip(self.shifts.row(i)) {
                *d = a - z;
            }
            sum += self.weights[i] * (dot(self.features.row(i), &diff) + self.biases[i]).cos();
        }
        Ok(sum * (2.0 / n as f64).sqrt())
    }
}

/// The phase function `psi(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseShiftSpec {
    Constant(f64),
    /// `psi(x) = a . x`
    Linear(Vec<f64>),
}

impl PhaseShiftSpec {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::Constant(c) => Ok(*c),
            Self::Linear(a) => {
                check_dim(a.len(), x.len())?;
                Ok(dot(a, x))
            }
        }
    }
}

/// A shallow trig net evaluated with a phase shift.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShiftNet {
    pub net: ShallowTrigNet,
    pub psi: PhaseShiftSpec,
}

impl TrigNetwork for PhaseShiftNet {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn forward(&self, x: &[f64]) -> Result<f64> {
        self.net.forward_with_phase(&self.psi, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn random_net(seed: u64, n: usize) -> ShallowTrigNet {
        ShallowTrigNet::sample(&FeatureSampler::standard(2), n, 1.0, &mut seeded_rng(seed)).unwrap()
    }

    #[test]
    fn shallow_examples() {
        let net = random_net(1, 8);
        let zero = ShallowTrigNet::new(net.features().clone(), vec![0.0; 16], 1.0).unwrap();
        assert_eq!(zero.forward(&[0.3, 0.1]).unwrap(), 0.0);
        let single = ShallowTrigNet::new(Features::zeros(1, 1), vec![1.3, -0.4], 1.0).unwrap();
        assert_abs_diff_eq!(single.forward(&[2.5]).unwrap(), 1.3, epsilon = 1e-15);
        assert!(ShallowTrigNet::new(Features::zeros(2, 1), vec![1.0; 3], 1.0).is_err());
    }

    #[test]
    fn jacobian_is_feature_map() {
        let net = random_net(2, 5);
        let x = [0.4, -0.9];
        assert_eq!(net.jacobian(&x).unwrap(), trig_feature_map(net.features(), &x).unwrap());
    }

    #[test]
    fn phase_shift_examples() {
        let net = random_net(3, 6);
        let x = [0.2, 1.1];
        assert_abs_diff_eq!(
            net.forward_with_phase(&PhaseShiftSpec::Constant(0.0), &x).unwrap(),
            net.forward(&x).unwrap(),
            epsilon = 1e-13
        );
        let single = ShallowTrigNet::new(Features::zeros(1, 1), vec![0.8, 1.7], 1.0).unwrap();
        let f = single.forward_with_phase(&PhaseShiftSpec::Constant(PI / 2.0), &[0.6]).unwrap();
        assert_abs_diff_eq!(f, -1.7, epsilon = 1e-15);
        let lin = PhaseShiftSpec::Linear(vec![1.0, 2.0]);
        assert_abs_diff_eq!(lin.eval(&[0.5, 0.25]).unwrap(), 1.0);
        assert!(lin.eval(&[0.5]).is_err());
    }

    #[test]
    fn cosine_net_validation_and_zero_weights() {
        let f = Features::zeros(2, 1);
        assert!(CosineNet::new(f.clone(), vec![1.0; 2], vec![0.0, 4.0], Features::zeros(2, 1)).is_err());
        let net = CosineNet::new(f, vec![1.0, -1.0], vec![0.3, 0.3], Features::zeros(2, 1)).unwrap();
        assert_abs_diff_eq!(net.forward(&[1.0]).unwrap(), 0.0, epsilon = 1e-15);
        let sampled =
            CosineNet::sample(&FeatureSampler::standard(1), &Features::zeros(50, 1), 1.0, &mut seeded_rng(1)).unwrap();
        assert!(sampled.biases().iter().all(|b| (0.0..=PI).contains(b)));
    }

    proptest! {
        #[test]
        fn linear_in_outer_weights(seed in 0u64..500, x in prop::collection::vec(-3.0f64..3.0, 2)) {
            let a = random_net(seed, 7);
            let b = random_net(seed + 1000, 7);
            let sum: Vec<f64> = a.weights().iter().zip(b.weights()).map(|(p, q)| p + q).collect();
            let b_same = ShallowTrigNet::new(a.features().clone(), b.weights().to_vec(), 1.0).unwrap();
            let ab = ShallowTrigNet::new(a.features().clone(), sum, 1.0).unwrap();
            let lhs = ab.forward(&x).unwrap();
            let rhs = a.forward(&x).unwrap() + b_same.forward(&x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }
}
