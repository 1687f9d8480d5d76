//! Spherical Bessel functions of the first and second kind.
//!
//! y_l is always generated by upward recurrence, which is stable for it.
//! j_l uses upward recurrence when x > l_max and Miller's downward
//! recurrence, normalized against j_0 or j_1, otherwise.

/// Returns (j_0..=j_{l_max}, y_0..=y_{l_max}) at x > 0.
pub fn spherical_bessel(l_max: usize, x: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(x > 0.0, "spherical Bessel functions need x > 0");
    (spherical_j(l_max, x), spherical_y(l_max, x))
}

pub fn spherical_y(l_max: usize, x: f64) -> Vec<f64> {
    let (s, c) = x.sin_cos();
    let mut y = Vec::with_capacity(l_max + 1);
    y.push(-c / x);
    if l_max >= 1 {
        y.push(-c / (x * x) - s / x);
    }
    for l in 1..l_max {
        let next = (2 * l + 1) as f64 / x * y[l] - y[l - 1];
        y.push(next);
    }
    y
}

pub fn spherical_j(l_max: usize, x: f64) -> Vec<f64> {
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = if x < 1e-3 {
        // Series avoids the cancellation in sin x / x² - cos x / x.
        let x2 = x * x;
        x / 3.0 * (1.0 - x2 / 10.0 * (1.0 - x2 / 28.0))
    } else {
        s / (x * x) - c / x
    };
    if x > l_max as f64 {
        let mut j = Vec::with_capacity(l_max + 1);
        j.push(j0);
        if l_max >= 1 {
            j.push(j1);
        }
        for l in 1..l_max {
            let next = (2 * l + 1) as f64 / x * j[l] - j[l - 1];
            j.push(next);
        }
        return j;
    }

    let start = l_max + 20 + (40.0 * (l_max.max(1) as f64)).sqrt() as usize;
    let mut vals = vec![0.0; start + 2];
    vals[start] = 1e-200;
    for l in (1..=start).rev() {
        vals[l - 1] = (2 * l + 1) as f64 / x * vals[l] - vals[l + 1];
        if vals[l - 1].abs() > 1e250 {
            for v in vals[l - 1..].iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    let scale = if j0.abs() >= j1.abs() { j0 / vals[0] } else { j1 / vals[1] };
    vals.truncate(l_max + 1);
    for v in vals.iter_mut() {
        *v *= scale;
    }
    vals
}

/// Legendre polynomials P_0..=P_{l_max} at `c`.
pub fn legendre(l_max: usize, c: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(l_max + 1);
    p.push(1.0);
    if l_max >= 1 {
        p.push(c);
    }
    for l in 1..l_max {
        let lf = l as f64;
        let next = ((2.0 * lf + 1.0) * c * p[l] - lf * p[l - 1]) / (lf + 1.0);
        p.push(next);
    }
    p
}
