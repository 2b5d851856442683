//! Benchmark catalog: Hamiltonians, their Legendre duals, optimal policies,
//! initial densities, terminal costs and the closed-form LQ solution.

use std::f64::consts::PI;

use crate::error::{MfgError, Result};
use crate::grid::Boundary;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HamiltonianKind {
    /// `|p|^2/2 - beta |x|^2/2 - gamma ln(rho)`
    SeparableLq,
    /// `|p|^2 / (2 (1 + 4 rho))`
    Congestion1,
    /// `|p|^2 / (2 sqrt(rho))`
    Congestion2,
    /// `|p|^2/2 - (1 - rho) p`
    TrafficFlow,
}

impl HamiltonianKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::SeparableLq => "separable-lq",
            Self::Congestion1 => "congestion-1",
            Self::Congestion2 => "congestion-2",
            Self::TrafficFlow => "traffic-flow",
        }
    }
}

/// Names accepted by [`MfgProblem::preset`], in listing order.
pub const PRESET_NAMES: [&str; 4] = ["lq", "example1", "example2", "traffic"];

/// One benchmark instance on the box `[lo, hi]^dim` over `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct MfgProblem {
    pub name: String,
    pub dim: usize,
    pub nu: f64,
    pub gamma: f64,
    pub beta: f64,
    pub lo: f64,
    pub hi: f64,
    pub horizon: f64,
    pub kind: HamiltonianKind,
    pub boundary: Boundary,
    /// Replace the traffic initial density by `max(rho0, 0.05)`.
    pub clamp_rho0: bool,
    /// Start the separable benchmark from the closed-form density (variance
    /// `nu / alpha`) instead of the standard Gaussian. The two agree when `gamma = 0`.
    pub analytic_rho0: bool,
}

impl MfgProblem {
    /// Builds a named preset in dimension `dim`.
    ///
    /// `lq` and `traffic` accept only the dimensions their data is defined for
    /// (`traffic` is one-dimensional).
    pub fn preset(name: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(MfgError::InvalidParameter("dimension must be positive".into()));
        }
        let base = |kind, nu, lo, hi, boundary| Self {
            name: name.to_string(),
            dim,
            nu,
            gamma: 0.0,
            beta: 1.0,
            lo,
            hi,
            horizon: 1.0,
            kind,
            boundary,
            clamp_rho0: false,
            analytic_rho0: false,
        };
        match name {
            "lq" => Ok(base(HamiltonianKind::SeparableLq, 1.0, -2.0, 2.0, Boundary::SampledBox)),
            "example1" => Ok(base(HamiltonianKind::Congestion1, 0.3, 0.0, 1.0, Boundary::Periodic)),
            "example2" => Ok(base(HamiltonianKind::Congestion2, 0.3, 0.0, 1.0, Boundary::Periodic)),
            "traffic" if dim == 1 => Ok(base(HamiltonianKind::TrafficFlow, 0.1, 0.0, 1.0, Boundary::Periodic)),
            "traffic" => Err(MfgError::InvalidParameter("traffic preset is one-dimensional".into())),
            other => Err(MfgError::InvalidParameter(format!("unknown problem `{other}`"))),
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_clamp_rho0(mut self, clamp: bool) -> Self {
        self.clamp_rho0 = clamp;
        self
    }

    pub fn with_analytic_rho0(mut self, on: bool) -> Self {
        self.analytic_rho0 = on;
        self
    }

    fn check_density(&self, rho: f64) -> Result<()> {
        let ok = match self.kind {
            HamiltonianKind::SeparableLq => self.gamma == 0.0 || rho > 0.0,
            HamiltonianKind::Congestion1 => 1.0 + 4.0 * rho > 0.0,
            HamiltonianKind::Congestion2 => rho > 0.0,
            HamiltonianKind::TrafficFlow => true,
        };
        if ok && rho.is_finite() {
            Ok(())
        } else {
            Err(MfgError::InvalidDensity { rho, kind: self.kind.name() })
        }
    }

    /// Coupling term `f0(x, rho)` of the separable benchmark, zero otherwise.
    fn lq_potential(&self, x: &[f64], rho: f64) -> f64 {
        let coupling = if self.gamma == 0.0 { 0.0 } else { self.gamma * rho.ln() };
        self.beta * norm_sq(x) / 2.0 + coupling
    }

    /// `H(x, rho, p)`.
    pub fn hamiltonian(&self, x: &[f64], rho: f64, p: &[f64]) -> Result<f64> {
        self.check_density(rho)?;
        let p2 = norm_sq(p);
        Ok(match self.kind {
            HamiltonianKind::SeparableLq => p2 / 2.0 - self.lq_potential(x, rho),
            HamiltonianKind::Congestion1 => p2 / (2.0 * (1.0 + 4.0 * rho)),
            HamiltonianKind::Congestion2 => p2 / (2.0 * rho.sqrt()),
            HamiltonianKind::TrafficFlow => p2 / 2.0 - (1.0 - rho) * p.iter().sum::<f64>(),
        })
    }

    /// `grad_p H(x, rho, p)`, the maximizer of `q.p - L(x, rho, q)`.
    pub fn optimal_policy_into(&self, _x: &[f64], rho: f64, p: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_density(rho)?;
        match self.kind {
            HamiltonianKind::SeparableLq => out.copy_from_slice(p),
            HamiltonianKind::Congestion1 => {
                let s = 1.0 / (1.0 + 4.0 * rho);
                out.iter_mut().zip(p).for_each(|(o, pk)| *o = pk * s);
            }
            HamiltonianKind::Congestion2 => {
                let s = 1.0 / rho.sqrt();
                out.iter_mut().zip(p).for_each(|(o, pk)| *o = pk * s);
            }
            HamiltonianKind::TrafficFlow => {
                out.iter_mut().zip(p).for_each(|(o, pk)| *o = pk - (1.0 - rho));
            }
        }
        Ok(())
    }

    pub fn optimal_policy(&self, x: &[f64], rho: f64, p: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; p.len()];
        self.optimal_policy_into(x, rho, p, &mut out)?;
        Ok(out)
    }

    /// `L(x, rho, q) = sup_p { p.q - H(x, rho, p) }` in closed form.
    pub fn lagrangian(&self, x: &[f64], rho: f64, q: &[f64]) -> Result<f64> {
        self.check_density(rho)?;
        let q2 = norm_sq(q);
        Ok(match self.kind {
            HamiltonianKind::SeparableLq => q2 / 2.0 + self.lq_potential(x, rho),
            HamiltonianKind::Congestion1 => (1.0 + 4.0 * rho) * q2 / 2.0,
            HamiltonianKind::Congestion2 => rho.sqrt() * q2 / 2.0,
            HamiltonianKind::TrafficFlow => {
                let m = 1.0 - rho;
                q2 / 2.0 + q.len() as f64 * m * m / 2.0 + m * q.iter().sum::<f64>()
            }
        })
    }

    /// `grad_q L(x, rho, q)`.
    pub fn lagrangian_grad_q_into(&self, _x: &[f64], rho: f64, q: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_density(rho)?;
        let (scale, shift) = match self.kind {
            HamiltonianKind::SeparableLq => (1.0, 0.0),
            HamiltonianKind::Congestion1 => (1.0 + 4.0 * rho, 0.0),
            HamiltonianKind::Congestion2 => (rho.sqrt(), 0.0),
            HamiltonianKind::TrafficFlow => (1.0, 1.0 - rho),
        };
        out.iter_mut().zip(q).for_each(|(o, qk)| *o = scale * qk + shift);
        Ok(())
    }

    /// `rho(0, x)` as given for each benchmark.
    pub fn initial_density(&self, x: &[f64]) -> f64 {
        let d = self.dim as f64;
        match self.kind {
            HamiltonianKind::SeparableLq => {
                let closed_form = if self.analytic_rho0 {
                    AnalyticParams::for_problem(self).and_then(|p| analytic_rho(0.0, x, &p, self)).ok()
                } else {
                    None
                };
                closed_form.unwrap_or_else(|| (2.0 * PI).powf(-d / 2.0) * (-norm_sq(x) / 2.0).exp())
            }
            HamiltonianKind::Congestion1 | HamiltonianKind::Congestion2 => {
                let r2: f64 = x.iter().map(|v| (v - 0.25) * (v - 0.25)).sum();
                (2.0 * PI).powf(-d / 2.0) * (-r2 / 2.0).exp()
            }
            HamiltonianKind::TrafficFlow => {
                let z = (x[0] - 0.5) / 0.1;
                let rho = 0.05 - 0.9 * (-0.5 * z * z).exp();
                if self.clamp_rho0 {
                    rho.max(0.05)
                } else {
                    rho
                }
            }
        }
    }

    /// Terminal cost `g(x, rho_T)`.
    pub fn terminal_cost(&self, x: &[f64], _rho_t: f64) -> Result<f64> {
        Ok(match self.kind {
            HamiltonianKind::SeparableLq => {
                let p = AnalyticParams::for_problem(self)?;
                p.alpha * norm_sq(x) / 2.0 - p.c * self.horizon
            }
            HamiltonianKind::Congestion1 | HamiltonianKind::TrafficFlow => 0.0,
            HamiltonianKind::Congestion2 => x.iter().map(|v| (2.0 * PI * v).cos()).sum(),
        })
    }

    /// Centre of the domain box.
    pub fn centre(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

/// `alpha = (-gamma + sqrt(gamma^2 + 4 nu^2 beta)) / (2 nu)`.
pub fn alpha(gamma: f64, nu: f64, beta: f64) -> Result<f64> {
    if nu == 0.0 {
        return Err(MfgError::InvalidParameter("nu must be nonzero".into()));
    }
    let disc = gamma * gamma + 4.0 * nu * nu * beta;
    if disc < 0.0 {
        return Err(MfgError::InvalidParameter(format!("negative discriminant {disc}")));
    }
    Ok((-gamma + disc.sqrt()) / (2.0 * nu))
}

/// Coefficients of the closed-form LQ solution
/// `phi = alpha |x|^2/2 - c t`, `rho ~ N(0, nu/alpha)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticParams {
    pub alpha: f64,
    pub c: f64,
}

impl AnalyticParams {
    pub fn for_problem(problem: &MfgProblem) -> Result<Self> {
        require_lq(problem)?;
        let a = alpha(problem.gamma, problem.nu, problem.beta)?;
        if !(a > 0.0) {
            return Err(MfgError::InvalidParameter(format!("alpha = {a} is not positive")));
        }
        let d = problem.dim as f64;
        let c = problem.nu * d * a + problem.gamma * d / 2.0 * (a / (2.0 * PI * problem.nu)).ln();
        Ok(Self { alpha: a, c })
    }
}

fn require_lq(problem: &MfgProblem) -> Result<()> {
    if problem.kind != HamiltonianKind::SeparableLq {
        return Err(MfgError::WrongProblemKind {
            expected: HamiltonianKind::SeparableLq.name(),
            got: problem.kind.name(),
        });
    }
    Ok(())
}

pub fn analytic_phi(t: f64, x: &[f64], p: &AnalyticParams, problem: &MfgProblem) -> Result<f64> {
    require_lq(problem)?;
    Ok(p.alpha * norm_sq(x) / 2.0 - p.c * t)
}

/// Stationary Gaussian density with variance `nu / alpha` per axis.
pub fn analytic_rho(_t: f64, x: &[f64], p: &AnalyticParams, problem: &MfgProblem) -> Result<f64> {
    require_lq(problem)?;
    let d = problem.dim as f64;
    let s = p.alpha / problem.nu;
    Ok((s / (2.0 * PI)).powf(d / 2.0) * (-s * norm_sq(x) / 2.0).exp())
}

/// Standard Gaussian density, the form printed for every `gamma`.
///
/// Solves the Fokker-Planck equation only when `alpha = nu`.
pub fn standard_gaussian_rho(x: &[f64], dim: usize) -> f64 {
    (2.0 * PI).powf(-(dim as f64) / 2.0) * (-norm_sq(x) / 2.0).exp()
}

/// Exact derivatives of the closed-form LQ solution at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointDerivatives {
    pub value: f64,
    pub dt: f64,
    pub grad: Vec<f64>,
    pub lap: f64,
}

pub fn analytic_phi_derivatives(
    t: f64,
    x: &[f64],
    p: &AnalyticParams,
    problem: &MfgProblem,
) -> Result<PointDerivatives> {
    Ok(PointDerivatives {
        value: analytic_phi(t, x, p, problem)?,
        dt: -p.c,
        grad: x.iter().map(|v| p.alpha * v).collect(),
        lap: p.alpha * problem.dim as f64,
    })
}

pub fn analytic_rho_derivatives(
    t: f64,
    x: &[f64],
    p: &AnalyticParams,
    problem: &MfgProblem,
) -> Result<PointDerivatives> {
    let rho = analytic_rho(t, x, p, problem)?;
    Ok(gaussian_derivatives(rho, p.alpha / problem.nu, x))
}

/// Derivatives of the printed standard Gaussian (variance 1).
pub fn standard_gaussian_derivatives(x: &[f64]) -> PointDerivatives {
    gaussian_derivatives(standard_gaussian_rho(x, x.len()), 1.0, x)
}

fn gaussian_derivatives(rho: f64, s: f64, x: &[f64]) -> PointDerivatives {
    let d = x.len() as f64;
    PointDerivatives {
        value: rho,
        dt: 0.0,
        grad: x.iter().map(|v| -s * v * rho).collect(),
        lap: rho * (s * s * norm_sq(x) - d * s),
    }
}
