use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{parse_params, ModelFactory, ScatteringModel, ShellPoint};
use crate::error::{invalid, Result};
use crate::quadrature::Estimate;

/// Isotropic amplitude f = -a with σ = 4πa².
///
/// A zero length is accepted and describes a non-interacting gas.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantLength {
    length: f64,
}

impl ConstantLength {
    pub fn new(length: f64) -> Result<Self> {
        if !(length >= 0.0 && length.is_finite()) {
            return Err(invalid(format!("scattering length must be non-negative, got {length}")));
        }
        Ok(ConstantLength { length })
    }

    pub fn length(&self) -> f64 {
        self.length
    }
}

impl ScatteringModel for ConstantLength {
    fn name(&self) -> &'static str {
        "constant_length"
    }

    fn parameters(&self) -> Value {
        json!({ "length": self.length })
    }

    fn amplitude_at(&self, _shell: &ShellPoint) -> Complex64 {
        Complex64::new(-self.length, 0.0)
    }

    fn sigma(&self, _k: f64) -> Result<Estimate> {
        Ok(Estimate { value: 4.0 * PI * self.length * self.length, error: 0.0 })
    }

    fn amplitude_bound(&self, _k: f64) -> f64 {
        self.length
    }

    fn sigma_bound(&self) -> f64 {
        4.0 * PI * self.length * self.length
    }

    fn transfer_only(&self) -> bool {
        true
    }

    fn is_isotropic(&self) -> bool {
        true
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    length: f64,
}

pub(super) struct Factory;

impl ModelFactory for Factory {
    fn describe(&self) -> &'static str {
        "constant scattering length a: f = -a"
    }

    fn build(&self, params: &Map<String, Value>) -> Result<Arc<dyn ScatteringModel>> {
        let p: Params = parse_params("constant_length", params)?;
        Ok(Arc::new(ConstantLength::new(p.length)?))
    }
}
