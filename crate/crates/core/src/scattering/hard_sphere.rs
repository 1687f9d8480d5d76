use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use super::bessel::{legendre, spherical_j, spherical_y};
use super::{parse_params, ModelFactory, ScatteringModel, ShellPoint};
use crate::error::{invalid, Error, Result};
use crate::quadrature::Estimate;

/// Impenetrable sphere of radius R, evaluated by partial waves with
/// tan δ_l = j_l(kR) / y_l(kR).
#[derive(Clone, Debug, PartialEq)]
pub struct HardSphere {
    radius: f64,
    l_max: Option<usize>,
    sigma_bound: f64,
}

/// Per-wave factors e^{iδ} sin δ, plus sin² δ of the first omitted waves.
struct Waves {
    terms: Vec<Complex64>,
    omitted_sin2: f64,
}

impl HardSphere {
    /// `l_max = None` selects ceil(2kR) + 4 at every k.
    pub fn new(radius: f64, l_max: Option<usize>) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid(format!("hard-sphere radius must be positive, got {radius}")));
        }
        let mut hs = HardSphere { radius, l_max, sigma_bound: 0.0 };
        hs.sigma_bound = hs.scan_sigma_bound();
        Ok(hs)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn l_max_at(&self, k: f64) -> usize {
        self.l_max.unwrap_or_else(|| (2.0 * k * self.radius).ceil() as usize + 4)
    }

    /// Phase shifts δ_0..=δ_{l_max} at modulus `k`.
    pub fn phase_shifts(&self, k: f64) -> Vec<f64> {
        let x = k * self.radius;
        let l = self.l_max_at(k);
        let j = spherical_j(l, x);
        let y = spherical_y(l, x);
        j.iter().zip(&y).map(|(&a, &b)| (a / b).atan()).collect()
    }

    fn waves(&self, k: f64) -> Waves {
        let x = k * self.radius;
        let l = self.l_max_at(k);
        let j = spherical_j(l + 2, x);
        let y = spherical_y(l + 2, x);
        let factor = |a: f64, b: f64| {
            // e^{iδ} sin δ = (t + i t²)/(1 + t²) with t = a/b, scaled
            // against overflow of y_l at small x.
            let s = a.abs().max(b.abs());
            if s == 0.0 || !s.is_finite() {
                return Complex64::new(0.0, 0.0);
            }
            let (a, b) = (a / s, b / s);
            let d = a * a + b * b;
            Complex64::new(a * b / d, a * a / d)
        };
        let terms = (0..=l).map(|i| factor(j[i], y[i])).collect();
        let omitted_sin2 = (l + 1..=l + 2).map(|i| (2 * i + 1) as f64 * factor(j[i], y[i]).im).sum();
        Waves { terms, omitted_sin2 }
    }

    fn sigma_unchecked(&self, k: f64) -> (f64, f64) {
        let w = self.waves(k);
        let s: f64 = w.terms.iter().enumerate().map(|(l, t)| (2 * l + 1) as f64 * t.im).sum();
        let pref = 4.0 * PI / (k * k);
        (pref * s, pref * w.omitted_sin2)
    }

    fn scan_sigma_bound(&self) -> f64 {
        let mut best = 4.0 * PI * self.radius * self.radius;
        for i in 0..=600 {
            let x = 1e-3 * 10f64.powf(i as f64 * 5.0 / 600.0);
            let (s, _) = self.sigma_unchecked(x / self.radius);
            best = best.max(s);
        }
        best * 1.05
    }
}

impl ScatteringModel for HardSphere {
    fn name(&self) -> &'static str {
        "hard_sphere"
    }

    fn parameters(&self) -> Value {
        json!({ "radius": self.radius, "l_max": self.l_max })
    }

    fn amplitude_at(&self, shell: &ShellPoint) -> Complex64 {
        if shell.k * self.radius < 1e-12 {
            return Complex64::new(-self.radius, 0.0);
        }
        let w = self.waves(shell.k);
        let p = legendre(w.terms.len() - 1, shell.cos_theta);
        let s: Complex64 = w.terms.iter().zip(&p).enumerate().map(|(l, (t, pl))| t * ((2 * l + 1) as f64 * pl)).sum();
        s / shell.k
    }

    fn sigma(&self, k: f64) -> Result<Estimate> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(invalid(format!("hard-sphere cross section needs k > 0, got {k}")));
        }
        let (value, error) = self.sigma_unchecked(k);
        let relative = error / value;
        if relative > 0.01 {
            return Err(Error::Truncation { k, relative });
        }
        Ok(Estimate { value, error })
    }

    fn amplitude_bound(&self, k: f64) -> f64 {
        if k * self.radius < 1e-12 {
            return self.radius;
        }
        let w = self.waves(k);
        // |e^{iδ} sin δ| = |sin δ| and |P_l| ≤ 1.
        let s: f64 = w.terms.iter().enumerate().map(|(l, t)| (2 * l + 1) as f64 * t.norm()).sum();
        s / k
    }

    fn sigma_bound(&self) -> f64 {
        self.sigma_bound
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    radius: f64,
    #[serde(default)]
    l_max: Option<usize>,
}

pub(super) struct Factory;

impl ModelFactory for Factory {
    fn describe(&self) -> &'static str {
        "hard sphere of radius R by partial waves"
    }

    fn build(&self, params: &Map<String, Value>) -> Result<Arc<dyn ScatteringModel>> {
        let p: Params = parse_params("hard_sphere", params)?;
        Ok(Arc::new(HardSphere::new(p.radius, p.l_max)?))
    }
}
