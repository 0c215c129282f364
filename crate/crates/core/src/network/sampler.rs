use super::{
    sample_support_weights, standard_normals, CosineNet, DeepTrigNet, FeatureSampler, Features, PhaseShiftNet,
    PhaseShiftSpec, ShallowTrigNet, TrigNetwork,
};
use crate::error::{check_dim, check_positive, Error, Result};
use crate::kernel::{DGPHyper, KernelSpec, SEHyper, SupportKernel, SupportSet};
use crate::rng::SimRng;

/// Draws i.i.d. networks from a fixed prior.
pub trait NetworkSampler: Sync {
    type Net: TrigNetwork;

    fn sample(&self, rng: &mut SimRng) -> Result<Self::Net>;

    fn input_dim(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShallowSampler {
    pub features: FeatureSampler,
    pub width: usize,
    pub weight_var: f64,
}

impl ShallowSampler {
    pub fn new(features: FeatureSampler, width: usize, weight_var: f64) -> Result<Self> {
        check_positive("weight variance", weight_var)?;
        if width == 0 {
            return Err(Error::Input("width must be >= 1".into()));
        }
        Ok(Self { features, width, weight_var })
    }

    /// Gaussian features for `se`, weight variance equal to its amplitude.
    pub fn se(se: &SEHyper, width: usize) -> Result<Self> {
        Self::new(FeatureSampler::for_se(se), width, se.amplitude_sq())
    }

    /// Infinite-width covariance of `f`.
    pub fn limit_kernel(&self) -> KernelSpec {
        match &self.features {
            FeatureSampler::Gaussian { variances } => KernelSpec::SquaredExponential(
                SEHyper::new(self.weight_var, variances.iter().map(|v| 1.0 / v.sqrt()).collect())
                    .expect("positive variances"),
            ),
            FeatureSampler::Mixture { components } => {
                KernelSpec::spectral_mixture(self.weight_var, components.clone()).expect("validated mixture")
            }
        }
    }
}

impl NetworkSampler for ShallowSampler {
    type Net = ShallowTrigNet;

    fn sample(&self, rng: &mut SimRng) -> Result<ShallowTrigNet> {
        ShallowTrigNet::sample(&self.features, self.width, self.weight_var, rng)
    }

    fn input_dim(&self) -> usize {
        self.features.dim()
    }
}

/// Cosine networks with fixed shift vectors; the width is the number of shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineSampler {
    pub features: FeatureSampler,
    pub shifts: Features,
    pub weight_var: f64,
}

impl CosineSampler {
    pub fn new(features: FeatureSampler, shifts: Features, weight_var: f64) -> Result<Self> {
        check_dim(features.dim(), shifts.dim())?;
        check_positive("weight variance", weight_var)?;
        Ok(Self { features, shifts, weight_var })
    }
}

impl NetworkSampler for CosineSampler {
    type Net = CosineNet;

    fn sample(&self, rng: &mut SimRng) -> Result<CosineNet> {
        CosineNet::sample(&self.features, &self.shifts, self.weight_var, rng)
    }

    fn input_dim(&self) -> usize {
        self.features.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShiftSampler {
    pub base: ShallowSampler,
    pub psi: PhaseShiftSpec,
}

impl NetworkSampler for PhaseShiftSampler {
    type Net = PhaseShiftNet;

    fn sample(&self, rng: &mut SimRng) -> Result<PhaseShiftNet> {
        Ok(PhaseShiftNet { net: self.base.sample(rng)?, psi: self.psi.clone() })
    }

    fn input_dim(&self) -> usize {
        self.base.input_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepSampler {
    pub hyper: DGPHyper,
    pub n1: usize,
    pub n2: usize,
}

impl DeepSampler {
    pub fn new(hyper: DGPHyper, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Input("widths must be >= 1".into()));
        }
        Ok(Self { hyper, n1, n2 })
    }

    pub fn limit_kernel(&self) -> KernelSpec {
        KernelSpec::DeepSE(self.hyper.clone())
    }
}

impl NetworkSampler for DeepSampler {
    type Net = DeepTrigNet;

    fn sample(&self, rng: &mut SimRng) -> Result<DeepTrigNet> {
        DeepTrigNet::sample(&self.hyper, self.n1, self.n2, rng)
    }

    fn input_dim(&self) -> usize {
        self.hyper.inner().dim()
    }
}

/// Deep nets whose first weight layer is drawn from the weight posterior
/// given a latent support. Fresh inner features are drawn for every network;
/// the inner prior variance is the inner amplitude and the conditioning noise
/// is the support's noise variance.
#[derive(Debug, Clone)]
pub struct SupportDeepSampler {
    kernel: SupportKernel,
    pub n1: usize,
    pub n2: usize,
}

impl SupportDeepSampler {
    pub fn new(support: SupportSet, inner: SEHyper, outer: SEHyper, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::Input("widths must be >= 1".into()));
        }
        if support.noise_var() <= 0.0 {
            return Err(Error::Input("weight-space conditioning needs a positive support noise".into()));
        }
        Ok(Self { kernel: SupportKernel::new(support, inner, outer)?, n1, n2 })
    }

    pub fn limit_kernel(&self) -> &SupportKernel {
        &self.kernel
    }
}

impl NetworkSampler for SupportDeepSampler {
    type Net = DeepTrigNet;

    fn sample(&self, rng: &mut SimRng) -> Result<DeepTrigNet> {
        let (inner, outer, support) = (self.kernel.inner(), self.kernel.outer(), self.kernel.support());
        let omega1 = FeatureSampler::for_se(inner).sample_with(self.n1, rng);
        let w1 = sample_support_weights(&omega1, support, inner.amplitude_sq(), support.noise_var(), rng)?;
        let omega2 = FeatureSampler::for_se(outer).sample_with(self.n2, rng);
        let w2 = standard_normals(rng, 2 * self.n2, outer.amplitude_sq().sqrt());
        DeepTrigNet::new(omega1, w1, omega2, w2)
    }

    fn input_dim(&self) -> usize {
        self.kernel.inner().dim()
    }
}
