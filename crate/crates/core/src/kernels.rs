//! Smoothing kernels on `[-1, 1]` and the integral functionals used by the
//! asymptotic theory:
//!
//! ```text
//! κ₂  = ∫ v² K(v) dv
//! K₂  = ∫ K(v)² dv
//! K*(x) = ∫_{-1}^{1-2|x|} K(v) K(v + 2|x|) dv
//! K*₂ = ∫ K*(v)² dv
//! ```
//!
//! All integrals use composite Simpson on a uniform grid, split at the
//! kernel's derivative discontinuities so that piecewise-smooth kernels keep
//! the full Simpson convergence order.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of Simpson panels.
pub const DEFAULT_PANELS: usize = 2048;

/// Smallest panel count accepted by [`Kernel::constants`].
pub const MIN_PANELS: usize = 64;

type KernelFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied kernel, validated for symmetry and unit mass.
#[derive(Clone)]
pub struct CustomKernel {
    name: String,
    f: KernelFn,
    constants: Arc<OnceLock<KernelConstants>>,
}

#[derive(Clone, Default)]
pub enum Kernel {
    /// `3 max(0, 1 - v²) / 4`
    #[default]
    Epanechnikov,
    /// `max(0, 1 - |v|)`
    Bartlett,
    Custom(CustomKernel),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Kernel({})", self.name())
    }
}

impl PartialEq for Kernel {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Kernel::Epanechnikov, Kernel::Epanechnikov) | (Kernel::Bartlett, Kernel::Bartlett) => {
                true
            }
            (Kernel::Custom(a), Kernel::Custom(b)) => Arc::ptr_eq(&a.f, &b.f),
            _ => false,
        }
    }
}

impl Kernel {
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
            "bartlett" | "triangular" => Ok(Kernel::Bartlett),
            other => Err(Error::invalid(format!(
                "unknown kernel '{other}' (expected epanechnikov or bartlett)"
            ))),
        }
    }

    /// Wraps `f` as a kernel after checking symmetry on a 401-point grid and
    /// unit mass by quadrature (tolerance 1e-8). Values outside `[-1, 1]` are
    /// never queried; the kernel is treated as zero there.
    pub fn custom<F>(name: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let name = name.into();
        for k in 0..=200 {
            let v = k as f64 / 200.0;
            let (a, b) = (f(v), f(-v));
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::invalid(format!(
                    "kernel '{name}' is not finite at v = {v}"
                )));
            }
            if (a - b).abs() > 1e-12 * (1.0 + a.abs()) {
                return Err(Error::invalid(format!(
                    "kernel '{name}' is not symmetric at v = {v}"
                )));
            }
        }
        let kernel = Kernel::Custom(CustomKernel {
            name,
            f: Arc::new(f),
            constants: Arc::default(),
        });
        let mass = integrate(|v| kernel.eval(v), -1.0, 1.0, kernel.breakpoints(), DEFAULT_PANELS);
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!(
                "kernel '{}' has mass {mass}, expected 1",
                kernel.name()
            )));
        }
        Ok(kernel)
    }

    pub fn name(&self) -> &str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Bartlett => "bartlett",
            Kernel::Custom(c) => &c.name,
        }
    }

    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        if !(-1.0..=1.0).contains(&v) {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - v * v),
            Kernel::Bartlett => 1.0 - v.abs(),
            Kernel::Custom(c) => (c.f)(v),
        }
    }

    /// Interior points of `[-1, 1]` where the kernel's derivative may jump.
    fn breakpoints(&self) -> &'static [f64] {
        match self {
            Kernel::Bartlett => &[0.0],
            _ => &[],
        }
    }

    /// `K*(x)` by Simpson quadrature with `panels` panels.
    pub fn kstar(&self, x: f64, panels: usize) -> Result<f64> {
        if !(x.abs() <= 1.0) {
            return Err(Error::Domain(format!("K*(x) requires |x| <= 1, got {x}")));
        }
        let shift = 2.0 * x.abs();
        let upper = 1.0 - shift;
        if upper <= -1.0 {
            return Ok(0.0);
        }
        let mut breaks: Vec<f64> = self.breakpoints().to_vec();
        breaks.extend(self.breakpoints().iter().map(|b| b - shift));
        Ok(integrate(
            |v| self.eval(v) * self.eval(v + shift),
            -1.0,
            upper,
            &breaks,
            panels,
        ))
    }

    /// Constants at [`DEFAULT_PANELS`], computed once per kernel.
    pub fn default_constants(&self) -> Result<KernelConstants> {
        static EPANECHNIKOV: OnceLock<KernelConstants> = OnceLock::new();
        static BARTLETT: OnceLock<KernelConstants> = OnceLock::new();
        let cell = match self {
            Kernel::Epanechnikov => &EPANECHNIKOV,
            Kernel::Bartlett => &BARTLETT,
            Kernel::Custom(c) => c.constants.as_ref(),
        };
        if let Some(c) = cell.get() {
            return Ok(*c);
        }
        let c = self.constants(DEFAULT_PANELS)?;
        Ok(*cell.get_or_init(|| c))
    }

    pub fn constants(&self, panels: usize) -> Result<KernelConstants> {
        if panels < MIN_PANELS {
            return Err(Error::invalid(format!(
                "quadrature needs at least {MIN_PANELS} panels, got {panels}"
            )));
        }
        let br = self.breakpoints();
        let kappa2 = integrate(|v| v * v * self.eval(v), -1.0, 1.0, br, panels);
        let k2 = integrate(|v| self.eval(v).powi(2), -1.0, 1.0, br, panels);
        let kstar_at0 = self.kstar(0.0, panels)?;
        // K* is even; its kinks sit at |x| = -b/2 and (1 - b)/2 for kernel breakpoints b.
        let mut outer: Vec<f64> = vec![0.5];
        outer.extend(br.iter().map(|b| (1.0 - b) / 2.0));
        let half = integrate(
            |x| {
                let k = self.kstar(x, panels).unwrap_or(0.0);
                k * k
            },
            0.0,
            1.0,
            &outer,
            panels,
        );
        Ok(KernelConstants {
            kappa2,
            k2,
            kstar_at0,
            kstar2: 2.0 * half,
            quadrature_points: panels,
        })
    }
}

/// Integral functionals of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub kappa2: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    #[serde(rename = "KstarAt0")]
    pub kstar_at0: f64,
    #[serde(rename = "Kstar2")]
    pub kstar2: f64,
    pub quadrature_points: usize,
}

/// Composite Simpson over `[a, b]` with an even number of panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels.max(2).next_multiple_of(2);
    let h = (b - a) / m as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..m {
        let v = f(a + k as f64 * h);
        if k % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

/// Simpson over `[a, b]` split at the given breakpoints, with `panels`
/// distributed in proportion to the piece lengths.
fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&c| c > a + 1e-14 && c < b - 1e-14)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    let mut total = 0.0;
    let mut lo = a;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        let share = ((panels as f64) * (hi - lo) / (b - a)).ceil() as usize;
        total += simpson(&f, lo, hi, share.max(2));
        lo = hi;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_builtin_kernels() {
        assert_eq!(Kernel::Epanechnikov.eval(0.0), 0.75);
        assert_eq!(Kernel::Epanechnikov.eval(1.5), 0.0);
        assert_eq!(Kernel::Bartlett.eval(0.5), 0.5);
        assert_eq!(Kernel::Bartlett.eval(-1.0001), 0.0);
    }

    #[test]
    fn kstar_values() {
        let epa = Kernel::Epanechnikov.kstar(0.0, 2000).unwrap();
        assert!((epa - 0.6).abs() < 1e-12);
        let bart = Kernel::Bartlett.kstar(0.0, 2000).unwrap();
        assert!((bart - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(Kernel::Bartlett.kstar(1.0, 2000).unwrap(), 0.0);
        assert_eq!(Kernel::Epanechnikov.kstar(-1.0, 2000).unwrap(), 0.0);
        assert!(matches!(
            Kernel::Epanechnikov.kstar(1.2, 64),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn kstar_matches_closed_form_polynomial() {
        // For the Epanechnikov kernel K*(x) = 3/5 - 3x² + 3x³ - 3x⁵/5 on [0, 1].
        for &x in &[0.1f64, 0.25, 0.4, 0.77, 0.99] {
            let exact = 0.6 - 3.0 * x * x + 3.0 * x * x * x - 0.6 * x.powi(5);
            let got = Kernel::Epanechnikov.kstar(x, 512).unwrap();
            assert!((got - exact).abs() < 1e-10, "x={x}: {got} vs {exact}");
            assert_eq!(got, Kernel::Epanechnikov.kstar(-x, 512).unwrap());
        }
    }

    #[test]
    fn custom_kernel_validation() {
        let uniform = Kernel::custom("uniform", |_| 0.5).unwrap();
        let c = uniform.constants(256).unwrap();
        assert!((c.kappa2 - 1.0 / 3.0).abs() < 1e-12);
        assert!((c.k2 - 0.5).abs() < 1e-12);

        assert!(Kernel::custom("lopsided", |v| 0.5 + 0.1 * v).is_err());
        assert!(Kernel::custom("heavy", |_| 1.0).is_err());
    }

    #[test]
    fn rejects_small_panel_counts() {
        assert!(Kernel::Epanechnikov.constants(32).is_err());
    }

    #[test]
    fn kernel_names_round_trip() {
        for name in ["epanechnikov", "bartlett"] {
            assert_eq!(Kernel::from_name(name).unwrap().name(), name);
        }
        assert!(Kernel::from_name("gaussian").is_err());
    }
}
