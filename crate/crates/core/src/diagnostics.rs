//! Functionals and distances evaluated on cell-averaged densities.
//!
//! Derivatives are centered differences in the interior and second-order
//! one-sided stencils at the two ends. Cells whose stencil touches a value
//! at or below [`DENSITY_FLOOR`] are left out of the Fisher and dissipation
//! sums; their integrand carries a factor of `f`, so the omitted mass is
//! bounded by the floor.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fokker_planck::boundary_value;
use crate::model::GridFunction;

pub const DENSITY_FLOOR: f64 = 1e-300;

/// Tolerance on the mass and mean mismatch accepted by [`d2_fourier`].
pub const D2_MOMENT_TOL: f64 = 1e-8;

/// One time sample of every scalar diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub mass: f64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    /// Boundary value `f(0, t)`.
    pub f0: f64,
    pub entropy: f64,
    pub dissipation: f64,
    pub fisher: f64,
    /// Boundary defect `1/mu - f(0, t)`.
    pub lambda: f64,
    pub fisher_lambda: f64,
    pub hellinger: f64,
    pub l1: f64,
}

impl DiagnosticsRow {
    pub const CSV_HEADER: &'static str =
        "t,mass,mean,m2,m3,f0,entropy,dissipation,fisher,lambda,fisher_lambda,hellinger,l1";

    /// Evaluates every diagnostic of `f` against the equilibrium `f_inf`.
    pub fn evaluate(t: f64, f: &GridFunction, f_inf: &GridFunction) -> Result<Self> {
        let fisher = fisher(f, f_inf)?;
        Ok(Self {
            t,
            mass: f.mass(),
            mean: f.mean(),
            m2: f.moment(2),
            m3: f.moment(3),
            f0: boundary_value(f),
            entropy: relative_entropy(f, f_inf)?,
            dissipation: dissipation(f),
            fisher,
            lambda: lambda_bdry(f),
            fisher_lambda: fisher_lambda(f, f_inf)?,
            hellinger: hellinger(f, f_inf)?,
            l1: l1(f, f_inf)?,
        })
    }

    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.mass,
            self.mean,
            self.m2,
            self.m3,
            self.f0,
            self.entropy,
            self.dissipation,
            self.fisher,
            self.lambda,
            self.fisher_lambda,
            self.hellinger,
            self.l1,
        ]
    }
}

fn check_grid(f: &GridFunction, g: &GridFunction) -> Result<()> {
    if f.same_grid(g) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "grid mismatch: {} cells of width {} vs {} cells of width {}",
            f.len(),
            f.h(),
            g.len(),
            g.h()
        )))
    }
}

/// First derivative of cell data: centered in the interior, second-order
/// one-sided at both ends.
pub fn gradient(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    assert!(n >= 3, "gradient needs at least three cells");
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    for j in 1..n - 1 {
        d[j] = (values[j + 1] - values[j - 1]) / (2.0 * h);
    }
    d[n - 1] = (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * h);
    d
}

/// Derivative of `ln f` on cell `j`, or `None` if the stencil touches the floor.
fn log_gradient_at(values: &[f64], j: usize, h: f64) -> Option<f64> {
    let n = values.len();
    let ln = |k: usize| {
        let v = values[k];
        (v > DENSITY_FLOOR).then(|| v.ln())
    };
    if j == 0 {
        Some((-3.0 * ln(0)? + 4.0 * ln(1)? - ln(2)?) / (2.0 * h))
    } else if j == n - 1 {
        Some((3.0 * ln(n - 1)? - 4.0 * ln(n - 2)? + ln(n - 3)?) / (2.0 * h))
    } else {
        Some((ln(j + 1)? - ln(j - 1)?) / (2.0 * h))
    }
}

/// Relative entropy `h * sum f ln(f/g)` with `0 ln 0 = 0`.
pub fn relative_entropy(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_grid(f, g)?;
    let mut sum = 0.0;
    for (j, (&fj, &gj)) in f.values().iter().zip(g.values()).enumerate() {
        if fj <= 0.0 {
            continue;
        }
        if gj <= 0.0 {
            return Err(Error::Domain(format!(
                "relative entropy: reference vanishes on cell {j} where f = {fj}"
            )));
        }
        sum += fj * (fj / gj).ln();
    }
    Ok(f.h() * sum)
}

/// Entropy dissipation `h * sum (f' + f(0) f)^2 / f` (prefactor `lambda/2` not included).
pub fn dissipation(f: &GridFunction) -> f64 {
    let b = boundary_value(f);
    let vals = f.values();
    let d = gradient(vals, f.h());
    let sum: f64 = vals
        .iter()
        .zip(&d)
        .filter(|(fj, _)| **fj > DENSITY_FLOOR)
        .map(|(fj, dj)| {
            let flux = dj + b * fj;
            flux * flux / fj
        })
        .sum();
    f.h() * sum
}

/// Boundary defect `Lambda(t) = 1/mu - f(0, t)`.
pub fn lambda_bdry(f: &GridFunction) -> f64 {
    1.0 / f.params().mu - boundary_value(f)
}

/// Difference of the extrapolated boundary values, `g(0) - f(0)`. For
/// `g = f_inf` this equals [`lambda_bdry`] up to the `O(h^2)` extrapolation
/// error of `g(0)`.
pub fn boundary_defect(f: &GridFunction, g: &GridFunction) -> f64 {
    boundary_value(g) - boundary_value(f)
}

/// Relative Fisher information `h * sum f (d ln f - d ln g)^2`.
pub fn fisher(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_grid(f, g)?;
    let h = f.h();
    let fv = f.values();
    let gv = g.values();
    let mut sum = 0.0;
    for j in 0..fv.len() {
        if fv[j] <= DENSITY_FLOOR {
            continue;
        }
        if gv[j] <= 0.0 {
            return Err(Error::Domain(format!(
                "fisher information: reference vanishes on cell {j}"
            )));
        }
        if let (Some(a), Some(b)) = (log_gradient_at(fv, j, h), log_gradient_at(gv, j, h)) {
            sum += fv[j] * (a - b) * (a - b);
        }
    }
    Ok(h * sum)
}

/// Fisher information with the boundary term,
/// `fisher(f, g) + boundary_defect(f, g)^2 * mass(f)`.
pub fn fisher_lambda(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    let lam = boundary_defect(f, g);
    Ok(fisher(f, g)? + lam * lam * f.mass())
}

pub fn hellinger(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_grid(f, g)?;
    let sum: f64 = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| {
            let d = a.max(0.0).sqrt() - b.max(0.0).sqrt();
            d * d
        })
        .sum();
    Ok((f.h() * sum).sqrt())
}

pub fn l1(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    check_grid(f, g)?;
    let sum: f64 = f
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(f.h() * sum)
}

/// Relative residual of the entropy identity between consecutive samples,
/// `|(H_{k+1} - H_k) / (t_{k+1} - t_k) + (lambda/2) D_k| / ((lambda/2) D_k)`,
/// one entry per pair of rows.
pub fn entropy_identity_residuals(rows: &[DiagnosticsRow], lambda: f64) -> Vec<f64> {
    rows.windows(2)
        .map(|w| {
            let rate = (w[1].entropy - w[0].entropy) / (w[1].t - w[0].t);
            let d = 0.5 * lambda * w[0].dissipation;
            (rate + d).abs() / d.max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// Frequency grid for the Fourier distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiGrid {
    pub xi_min: f64,
    pub xi_max: f64,
    pub per_decade: usize,
}

impl Default for XiGrid {
    fn default() -> Self {
        Self {
            xi_min: 1e-3,
            xi_max: 1e3,
            per_decade: 200,
        }
    }
}

impl XiGrid {
    pub fn points(&self) -> Vec<f64> {
        let decades = (self.xi_max / self.xi_min).log10();
        let n = (decades * self.per_decade as f64).round() as usize;
        let lo = self.xi_min.log10();
        (0..=n)
            .map(|k| 10f64.powf(lo + decades * k as f64 / n as f64))
            .collect()
    }
}

// sin(x)/x - 1 without cancellation.
fn sinc_minus_one(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        -x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0))
    } else {
        x.sin() / x - 1.0
    }
}

// sin(z) - z without cancellation.
fn sin_minus_id(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        let z2 = z * z;
        -z * z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0))
    } else {
        z.sin() - z
    }
}

/// `|f_hat(xi) - g_hat(xi)| / xi^2` for the piecewise-constant densities.
///
/// The kernel is `exp(-i xi v) - 1 + i xi v` integrated exactly over each
/// cell. Subtracting the mass and mean components is exact for pairs with
/// equal mass and mean and removes their round-off from the small-`xi` end.
pub fn fourier_ratio(f: &GridFunction, g: &GridFunction, xi: f64) -> f64 {
    let h = f.h();
    let s = sinc_minus_one(0.5 * xi * h);
    let (mut re, mut im) = (0.0, 0.0);
    for (j, (a, b)) in f.values().iter().zip(g.values()).enumerate() {
        let diff = a - b;
        if diff == 0.0 {
            continue;
        }
        let z = xi * (j as f64 + 0.5) * h;
        let (sz, cz) = z.sin_cos();
        // cos z - 1 = -2 sin^2(z/2)
        let half = (0.5 * z).sin();
        let k_re = -2.0 * half * half + cz * s;
        let k_im = -sin_minus_id(z) - sz * s;
        re += diff * k_re;
        im += diff * k_im;
    }
    h * re.hypot(im) / (xi * xi)
}

/// Fourier-based distance of order two, `sup_xi |f_hat - g_hat| / xi^2`,
/// over a log-spaced frequency grid plus the `xi -> 0` limit
/// `|M2(f) - M2(g)| / 2`.
pub fn d2_fourier(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    d2_fourier_on(f, g, &XiGrid::default())
}

pub fn d2_fourier_on(f: &GridFunction, g: &GridFunction, grid: &XiGrid) -> Result<f64> {
    check_grid(f, g)?;
    let dm = (f.mass() - g.mass()).abs();
    let dmean = (f.mean() - g.mean()).abs();
    if dm > D2_MOMENT_TOL || dmean > D2_MOMENT_TOL {
        return Err(Error::Domain(format!(
            "d2 distance needs equal mass and mean (mass gap {dm:e}, mean gap {dmean:e})"
        )));
    }
    let sup = grid
        .points()
        .par_iter()
        .map(|&xi| fourier_ratio(f, g, xi))
        .reduce(|| 0.0, f64::max);
    Ok(sup.max(0.5 * (exact_second_moment(f) - exact_second_moment(g)).abs()))
}

/// Second moment of the piecewise-constant reconstruction.
fn exact_second_moment(f: &GridFunction) -> f64 {
    let h = f.h();
    let sum: f64 = f
        .values()
        .iter()
        .enumerate()
        .map(|(j, fj)| {
            let c = (j as f64 + 0.5) * h;
            fj * (c * c + h * h / 12.0)
        })
        .sum();
    h * sum
}

/// Both sides of `|exp(-i alpha xi) - 1| / |xi|^s <= 2^(1-s) alpha^s`.
pub fn fourier_shift_bound(alpha: f64, xi: f64, s: f64) -> (f64, f64) {
    let lhs = 2.0 * (0.5 * alpha * xi).sin().abs() / xi.abs().powf(s);
    let rhs = 2f64.powf(1.0 - s) * alpha.powf(s);
    (lhs, rhs)
}
