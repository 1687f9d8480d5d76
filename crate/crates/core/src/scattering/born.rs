use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::{parse_params, ModelFactory, ScatteringModel, ShellPoint};
use crate::error::{invalid, Result};
use crate::quadrature::Estimate;

/// Born amplitude f_B(Q), a function of the momentum transfer only.
#[derive(Clone, Debug, PartialEq)]
pub enum FormFactor {
    /// f_B(Q) = -a exp(-Q² w²).
    Gaussian { strength: f64, width: f64 },
    /// Piecewise-linear in Q through the given samples, zero beyond the
    /// last node and constant below the first.
    Tabulated { q: Vec<f64>, values: Vec<Complex64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BornFormFactor {
    form: FormFactor,
}

impl BornFormFactor {
    pub fn gaussian(strength: f64, width: f64) -> Result<Self> {
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(invalid(format!("Born strength must be non-negative, got {strength}")));
        }
        if !(width >= 0.0 && width.is_finite()) {
            return Err(invalid(format!("Born width must be non-negative, got {width}")));
        }
        Ok(BornFormFactor { form: FormFactor::Gaussian { strength, width } })
    }

    pub fn tabulated(q: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if q.len() < 2 || q.len() != values.len() {
            return Err(invalid("tabulated form factor needs at least two (q, f) samples of equal count"));
        }
        if q[0] < 0.0 || q.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("tabulated form factor q must be non-negative and strictly increasing"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(invalid("tabulated form factor values must be finite"));
        }
        Ok(BornFormFactor { form: FormFactor::Tabulated { q, values } })
    }

    pub fn form(&self) -> &FormFactor {
        &self.form
    }

    /// f_B at transfer `q`.
    pub fn at_transfer(&self, q: f64) -> Complex64 {
        match &self.form {
            FormFactor::Gaussian { strength, width } => Complex64::new(-strength * (-(q * width).powi(2)).exp(), 0.0),
            FormFactor::Tabulated { q: qs, values } => {
                if q <= qs[0] {
                    return values[0];
                }
                let last = qs.len() - 1;
                if q > qs[last] {
                    return Complex64::new(0.0, 0.0);
                }
                let i = qs.partition_point(|&x| x < q).max(1);
                let t = (q - qs[i - 1]) / (qs[i] - qs[i - 1]);
                values[i - 1] * (1.0 - t) + values[i] * t
            }
        }
    }
}

impl ScatteringModel for BornFormFactor {
    fn name(&self) -> &'static str {
        match self.form {
            FormFactor::Gaussian { .. } => "born_gaussian",
            FormFactor::Tabulated { .. } => "born_tabulated",
        }
    }

    fn parameters(&self) -> Value {
        match &self.form {
            FormFactor::Gaussian { strength, width } => json!({ "strength": strength, "width": width }),
            FormFactor::Tabulated { q, values } => json!({
                "q": q,
                "re": values.iter().map(|v| v.re).collect::<Vec<_>>(),
                "im": values.iter().map(|v| v.im).collect::<Vec<_>>(),
            }),
        }
    }

    fn amplitude_at(&self, shell: &ShellPoint) -> Complex64 {
        self.at_transfer(shell.transfer)
    }

    fn sigma(&self, k: f64) -> Result<Estimate> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid(format!("Born cross section needs k > 0, got {k}")));
        }
        // dΩ = 2π Q dQ / k² on the shell, Q ∈ [0, 2k].
        let value = match &self.form {
            FormFactor::Gaussian { strength, width } => {
                let x = 8.0 * (k * width).powi(2);
                let ratio = if x < 1e-12 { 2.0 } else { -(-x).exp_m1() / (0.5 * x) };
                2.0 * PI * strength * strength * ratio
            }
            FormFactor::Tabulated { q, .. } => {
                // |f_B|² Q is cubic on each linear segment: 2-point Gauss
                // per segment is exact.
                let top = 2.0 * k;
                let mut cuts = vec![0.0];
                cuts.extend(q.iter().copied().filter(|&x| x > 0.0 && x < top));
                cuts.push(top);
                let g = 1.0 / 3f64.sqrt();
                let mut s = 0.0;
                for w in cuts.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
                    for x in [m - h * g, m + h * g] {
                        s += h * self.at_transfer(x).norm_sqr() * x;
                    }
                }
                2.0 * PI * s / (k * k)
            }
        };
        Ok(Estimate { value, error: value * 1e-14 })
    }

    fn amplitude_bound(&self, _k: f64) -> f64 {
        match &self.form {
            FormFactor::Gaussian { strength, .. } => *strength,
            FormFactor::Tabulated { values, .. } => values.iter().map(|v| v.norm()).fold(0.0, f64::max),
        }
    }

    fn sigma_bound(&self) -> f64 {
        4.0 * PI * self.amplitude_bound(0.0).powi(2)
    }

    fn transfer_only(&self) -> bool {
        true
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianParams {
    strength: f64,
    width: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TabulatedParams {
    q: Vec<f64>,
    re: Vec<f64>,
    #[serde(default)]
    im: Option<Vec<f64>>,
}

pub(super) struct GaussianFactory;

impl ModelFactory for GaussianFactory {
    fn describe(&self) -> &'static str {
        "Born amplitude -a exp(-Q² w²)"
    }

    fn build(&self, params: &Map<String, Value>) -> Result<Arc<dyn ScatteringModel>> {
        let p: GaussianParams = parse_params("born_gaussian", params)?;
        Ok(Arc::new(BornFormFactor::gaussian(p.strength, p.width)?))
    }
}

pub(super) struct TabulatedFactory;

impl ModelFactory for TabulatedFactory {
    fn describe(&self) -> &'static str {
        "Born amplitude interpolated from (q, re, im) samples"
    }

    fn build(&self, params: &Map<String, Value>) -> Result<Arc<dyn ScatteringModel>> {
        let p: TabulatedParams = parse_params("born_tabulated", params)?;
        let im = p.im.unwrap_or_else(|| vec![0.0; p.re.len()]);
        if im.len() != p.re.len() {
            return Err(invalid("born_tabulated: re and im must have equal length"));
        }
        let values = p.re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        Ok(Arc::new(BornFormFactor::tabulated(p.q, values)?))
    }
}
