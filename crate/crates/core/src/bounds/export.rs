//! Serializable certificate record.
//!
//! Schema `gp-bounds-certificate/1` (TOML):
//!
//! | key | meaning |
//! |-----|---------|
//! | `schema` | schema identifier |
//! | `n_train`, `noise_variance` | training set size and noise variance |
//! | `domain_lower`, `domain_upper` | certified box |
//! | `tau`, `delta`, `beta`, `gamma` | certificate constants |
//! | `mean_lipschitz`, `std_modulus_at_tau`, `f_lipschitz` | continuity constants |
//! | `log_covering` | natural log of the covering number bound |
//! | `lipschitz_k`, `max_kernel` | kernel constants on the domain |
//! | `min_eigenvalue`, `inverse_norm` | spectrum of `K + sn2 I` as used |
//! | `f_lipschitz_delta` | failure probability of `f_lipschitz`, if probabilistic |
//! | `[kernel]` | kernel hyperparameters by name |
//! | `[provenance]` | how each constant was obtained |

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ErrorCertificate;
use crate::error::{Error, Result};
use crate::gp::EigenSource;
use crate::kernels::{KernelConstants, StationaryKernel};
use crate::scalar::Scalar;

pub const CERTIFICATE_SCHEMA: &str = "gp-bounds-certificate/1";

/// Origin of a reported constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantProvenance {
    /// Closed-form expression of other constants.
    Analytic,
    /// Maximization over lags by grid and local search, with safety factor.
    GridSearch,
    /// Smallest eigenvalue from a symmetric eigenvalue solve.
    EigenSolve,
    /// `sn2` used as the smallest eigenvalue.
    NoiseFloor,
    /// Given by the user.
    Supplied,
    /// High-probability bound for GP sample paths.
    Probabilistic,
    /// Finite differences of the known true function.
    SampledTruth,
}

impl From<EigenSource> for ConstantProvenance {
    fn from(source: EigenSource) -> Self {
        match source {
            EigenSource::EigenSolve => ConstantProvenance::EigenSolve,
            EigenSource::NoiseFloor | EigenSource::Empty => ConstantProvenance::NoiseFloor,
        }
    }
}

/// Flat record of a certificate for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub schema: String,
    pub n_train: usize,
    pub noise_variance: f64,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub tau: f64,
    pub delta: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mean_lipschitz: f64,
    pub std_modulus_at_tau: f64,
    pub f_lipschitz: f64,
    pub log_covering: f64,
    pub lipschitz_k: f64,
    pub max_kernel: f64,
    pub min_eigenvalue: f64,
    pub inverse_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f_lipschitz_delta: Option<f64>,
    pub kernel: BTreeMap<String, Vec<f64>>,
    pub provenance: BTreeMap<String, ConstantProvenance>,
}

impl CertificateRecord {
    /// Collects the numbers of `certificate`.
    ///
    /// `f_lipschitz_delta` is recorded when `f_provenance` is
    /// [`ConstantProvenance::Probabilistic`].
    pub fn new<T, K>(
        certificate: &ErrorCertificate<'_, T, K>,
        kernel_constants: &KernelConstants<T>,
        f_provenance: ConstantProvenance,
        f_lipschitz_delta: Option<T>,
    ) -> Self
    where
        T: Scalar,
        K: StationaryKernel<T>,
    {
        let posterior = certificate.posterior();
        let c = certificate.constants();
        let to_f64 = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let kernel = posterior
            .kernel()
            .parameters()
            .into_iter()
            .map(|(name, values)| (name.to_string(), to_f64(&values)))
            .collect();
        let eigen = ConstantProvenance::from(c.inverse_norm_source);
        let provenance = [
            ("beta", ConstantProvenance::Analytic),
            ("gamma", ConstantProvenance::Analytic),
            ("log_covering", ConstantProvenance::Analytic),
            ("mean_lipschitz", ConstantProvenance::Analytic),
            ("std_modulus_at_tau", eigen),
            ("min_eigenvalue", eigen),
            ("inverse_norm", eigen),
            ("lipschitz_k", ConstantProvenance::GridSearch),
            ("max_kernel", ConstantProvenance::Analytic),
            ("f_lipschitz", f_provenance),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        CertificateRecord {
            schema: CERTIFICATE_SCHEMA.to_string(),
            n_train: posterior.len(),
            noise_variance: posterior.dataset().noise_variance().as_f64(),
            domain_lower: to_f64(certificate.domain().lower()),
            domain_upper: to_f64(certificate.domain().upper()),
            tau: c.tau.as_f64(),
            delta: c.delta.as_f64(),
            beta: c.beta.as_f64(),
            gamma: c.gamma.as_f64(),
            mean_lipschitz: c.mean_lipschitz.as_f64(),
            std_modulus_at_tau: c.std_modulus_at_tau.as_f64(),
            f_lipschitz: c.f_lipschitz.as_f64(),
            log_covering: c.log_covering.as_f64(),
            lipschitz_k: kernel_constants.lipschitz_k.as_f64(),
            max_kernel: kernel_constants.max_kernel.as_f64(),
            min_eigenvalue: posterior.min_eigenvalue().as_f64(),
            inverse_norm: posterior.inverse_norm().as_f64(),
            f_lipschitz_delta: match f_provenance {
                ConstantProvenance::Probabilistic => f_lipschitz_delta.map(Scalar::as_f64),
                _ => None,
            },
            kernel,
            provenance,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let record: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if record.schema != CERTIFICATE_SCHEMA {
            return Err(Error::Config(format!("unsupported certificate schema {:?}", record.schema)));
        }
        Ok(record)
    }
}
