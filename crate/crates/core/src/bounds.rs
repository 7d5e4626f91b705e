//! What the observable margins do not pin down: type distributions that match
//! a φ table but carry any subtracting proportion mediated in `[0, τ_max]`, and
//! the correlation `ρ = Corr(M1, Y_{1M0})` as a sensitivity parameter.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::popmodel::{
    oracle_effects, BinaryType, BinaryTypeDistribution, Estimate, OutcomePattern, PhiTable,
};
use crate::scalar::Scalar;

/// Points used to probe `ρ(e)` for monotonicity before inverting it.
pub const MONOTONICITY_PROBES: usize = 1024;

pub const DEFAULT_GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundsError {
    #[error("infeasible margins: {0}")]
    Infeasible(String),
    #[error("tau {tau} outside [0, {max}]")]
    TauOutOfRange { tau: f64, max: f64 },
    #[error("degenerate margins: {0}")]
    Degenerate(String),
    #[error("rho {rho} outside the attainable interval [{low}, {high}]")]
    RhoOutOfRange { rho: f64, low: f64, high: f64 },
    #[error("no sign change bracketing rho {rho}")]
    NoSignChange { rho: f64 },
}

/// Mass that the vaccine protects and that the placebo arm still fails:
/// `φ_pnf − φ_vf`.
fn slack<T: Scalar>(phi: &PhiTable<T>) -> T {
    phi.vns() + phi.vas() - phi.pns()
}

/// Largest τ for which [`construct_pi_for_tau`] succeeds. Below 1 exactly when
/// `φ_vns > φ_pns`: some non-responders must then fail under placebo while
/// being protected by vaccination alone.
pub fn max_tau<T: Scalar>(phi: &PhiTable<T>) -> Result<T, BoundsError> {
    let s = slack(phi);
    if s < T::zero() {
        return Err(BoundsError::Infeasible(format!(
            "phi_pnf = {} < phi_vf = {}: the vaccine appears harmful",
            phi.pnf(),
            phi.vf()
        )));
    }
    if phi.paf() > T::zero() || phi.pas() > T::zero() {
        return Err(BoundsError::Infeasible("placebo recipients with detectable response".into()));
    }
    let floor = (phi.vns() - phi.pns()).max(T::zero());
    if s == T::zero() {
        return Ok(T::one());
    }
    Ok((T::one() - floor / s).max(T::zero()))
}

/// A type distribution reproducing `phi` in which responders whose outcome
/// depends on the vaccine only through antibodies make up a fraction `tau`
/// of the protected mass. `tau = 0` gives `λ_s = 0`, `tau = 1` gives `λ_s = 1`.
pub fn construct_pi_for_tau<T: Scalar>(phi: &PhiTable<T>, tau: T) -> Result<BinaryTypeDistribution<T>, BoundsError> {
    let tau_max = max_tau(phi)?;
    if !(tau >= T::zero() && tau <= tau_max) {
        return Err(BoundsError::TauOutOfRange {
            tau: tau.as_f64(),
            max: tau_max.as_f64(),
        });
    }
    let s = slack(phi);
    let b = (phi.vns() - phi.pns()).max(T::zero());
    let half = T::lit(0.5);
    let third = phi.vnf() / T::lit(3.0);
    let antibody = tau * s;
    let direct = ((T::one() - tau) * s - b).max(T::zero());
    let mut pi = [T::zero(); 12];
    let mut set = |responder: bool, outcomes: OutcomePattern, p: T| {
        pi[BinaryType { responder, outcomes }.index()] = p;
    };
    use OutcomePattern::*;
    set(false, P0000, phi.vns() - b);
    set(false, P0001, b * half);
    set(false, P0011, b * half);
    set(false, P0101, third);
    set(false, P0111, third);
    set(false, P1111, phi.vnf() - third - third);
    set(true, P0000, phi.pns() - phi.vns() + b);
    set(true, P0001, direct * half);
    set(true, P0011, direct * half);
    set(true, P0101, antibody * half);
    set(true, P0111, antibody * half);
    set(true, P1111, phi.vaf());
    BinaryTypeDistribution::new(pi).map_err(|e| BoundsError::Infeasible(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TauPoint<T: Scalar> {
    pub tau: T,
    pub ey1m0: T,
    pub lambda_s: Estimate<T>,
}

/// Oracle `λ_s` of the constructed population at each τ; grid points above
/// `τ_max` are skipped. Runs in parallel, output in grid order.
pub fn tau_sweep<T: Scalar>(phi: &PhiTable<T>, taus: &[T]) -> Result<Vec<TauPoint<T>>, BoundsError> {
    let tau_max = max_tau(phi)?;
    taus.par_iter()
        .filter(|&&t| t <= tau_max)
        .map(|&tau| {
            let pi = construct_pi_for_tau(phi, tau)?;
            let r = oracle_effects(&pi);
            Ok(TauPoint {
                tau,
                ey1m0: r.expectations.ey1m0.expect_value("oracle E[Y_1M0]"),
                lambda_s: r.lambda_s,
            })
        })
        .collect()
}

/// `Corr(M1, Y_{1M0})` as a function of `e = E[Y_{1M0}]`.
pub fn rho_of_ey1m0<T: Scalar>(phi: &PhiTable<T>, e: T) -> Result<T, BoundsError> {
    let vn = phi.vn();
    if !(vn > T::zero() && vn < T::one()) {
        return Err(BoundsError::Degenerate(format!("Pr[M1 = neg] = {vn} must lie strictly inside (0, 1)")));
    }
    if !(e > T::zero() && e < T::one()) {
        return Err(BoundsError::Degenerate(format!("E[Y_1M0] = {e} has zero variance")));
    }
    let c = phi.vnf() / vn;
    Ok((e - c) * vn / ((T::one() - vn) * vn * e * (T::one() - e)).sqrt())
}

/// Which bound on `E[Y_{1M0}]` an endpoint comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    /// `E[Y_{1M0}] = φ_vf`, no subtracting effect.
    VaccineFailure,
    /// `E[Y_{1M0}] = φ_pnf`, fully subtracting.
    PlaceboFailure,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RhoEndpoint<T> {
    pub rho: T,
    pub ey1m0: T,
    pub anchor: Anchor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RhoEndpoints<T> {
    pub low: RhoEndpoint<T>,
    pub high: RhoEndpoint<T>,
}

/// `ρ` at both admissible extremes of `E[Y_{1M0}]`, sorted by value.
pub fn rho_endpoints<T: Scalar>(phi: &PhiTable<T>) -> Result<RhoEndpoints<T>, BoundsError> {
    let at = |e: T, anchor| {
        rho_of_ey1m0(phi, e).map(|rho| RhoEndpoint { rho, ey1m0: e, anchor })
    };
    let a = at(phi.vf(), Anchor::VaccineFailure)?;
    let b = at(phi.pnf(), Anchor::PlaceboFailure)?;
    Ok(if a.rho <= b.rho {
        RhoEndpoints { low: a, high: b }
    } else {
        RhoEndpoints { low: b, high: a }
    })
}

/// `λ_s = log(φ_vf / e) / log(φ_vf / φ_pnf)`.
pub fn lambda_s_at<T: Scalar>(phi: &PhiTable<T>, e: T) -> Result<T, BoundsError> {
    let (vf, pnf) = (phi.vf(), phi.pnf());
    if !(vf > T::zero()) || vf == pnf {
        return Err(BoundsError::Degenerate(format!(
            "lambda_s undefined with phi_vf = {vf}, phi_pnf = {pnf}"
        )));
    }
    Ok((vf / e).ln() / (vf / pnf).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SensitivityPoint<T> {
    pub rho: T,
    pub ey1m0: T,
    pub lambda_s: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SensitivityCurve<T> {
    /// One row per solution; a ρ with several solutions repeats.
    pub points: Vec<SensitivityPoint<T>>,
    pub endpoints: RhoEndpoints<T>,
    /// `ρ(e)` was not monotone on the bracket.
    pub non_monotone: bool,
}

impl<T: Scalar> SensitivityCurve<T> {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["rho", "ey1m0", "lambda_s"])?;
        for p in &self.points {
            w.write_record([p.rho.to_string(), p.ey1m0.to_string(), p.lambda_s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` equally spaced values from the low to the high endpoint.
pub fn default_rho_grid<T: Scalar>(endpoints: &RhoEndpoints<T>, n: usize) -> Vec<T> {
    let (lo, hi) = (endpoints.low.rho, endpoints.high.rho);
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * T::from_count(i as u64) / T::from_count(n as u64 - 1)
                }
            })
            .collect(),
    }
}

fn bisect<T: Scalar>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, tol: T) -> T {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == T::zero() {
        return lo;
    }
    if fhi == T::zero() {
        return hi;
    }
    let two = T::lit(2.0);
    while hi - lo > tol {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return mid;
        }
        if (fm < T::zero()) == (flo < T::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / two
}

/// Inverts `ρ(e)` on `[φ_vf, φ_pnf]` at every grid value and reports `λ_s`.
///
/// The bisection tolerance is [`Scalar::SOLVE_TOLERANCE`] times the bracket
/// width.
pub fn lambda_s_sensitivity<T: Scalar>(phi: &PhiTable<T>, rho_grid: &[T]) -> Result<SensitivityCurve<T>, BoundsError> {
    let endpoints = rho_endpoints(phi)?;
    let (a, b) = (phi.vf(), phi.pnf());
    if b < a {
        return Err(BoundsError::Infeasible(format!("phi_pnf = {b} < phi_vf = {a}")));
    }
    lambda_s_at(phi, a)?;
    let rho = |e: T| rho_of_ey1m0(phi, e).expect("bracket lies inside (0, 1)");
    let tol = T::lit(T::SOLVE_TOLERANCE) * (b - a);

    let probes: Vec<(T, T)> = (0..=MONOTONICITY_PROBES)
        .map(|i| {
            let e = if i == MONOTONICITY_PROBES {
                b
            } else {
                a + (b - a) * T::from_count(i as u64) / T::from_count(MONOTONICITY_PROBES as u64)
            };
            (e, rho(e))
        })
        .collect();
    let increasing = probes.windows(2).all(|w| w[1].1 >= w[0].1);
    let decreasing = probes.windows(2).all(|w| w[1].1 <= w[0].1);
    let non_monotone = !(increasing || decreasing);

    let mut points = Vec::new();
    for &target in rho_grid {
        if target < endpoints.low.rho || target > endpoints.high.rho {
            return Err(BoundsError::RhoOutOfRange {
                rho: target.as_f64(),
                low: endpoints.low.rho.as_f64(),
                high: endpoints.high.rho.as_f64(),
            });
        }
        let f = |e: T| rho(e) - target;
        let roots: Vec<T> = if non_monotone {
            let mut r = Vec::new();
            for w in probes.windows(2) {
                let (f0, f1) = (w[0].1 - target, w[1].1 - target);
                if f0 == T::zero() {
                    r.push(w[0].0);
                } else if (f0 < T::zero()) != (f1 < T::zero()) && f1 != T::zero() {
                    r.push(bisect(&f, w[0].0, w[1].0, tol));
                }
            }
            if probes.last().is_some_and(|p| p.1 == target) {
                r.push(b);
            }
            r
        } else {
            let (fa, fb) = (f(a), f(b));
            if fa != T::zero() && fb != T::zero() && (fa < T::zero()) == (fb < T::zero()) {
                Vec::new()
            } else {
                vec![bisect(&f, a, b, tol)]
            }
        };
        if roots.is_empty() {
            return Err(BoundsError::NoSignChange { rho: target.as_f64() });
        }
        for e in roots {
            points.push(SensitivityPoint {
                rho: target,
                ey1m0: e,
                lambda_s: lambda_s_at(phi, e)?,
            });
        }
    }
    Ok(SensitivityCurve {
        points,
        endpoints,
        non_monotone,
    })
}
