//! Stability functions `R(z)` of modified Patankar schemes.
//!
//! On the linear test problem the Jacobian of a conservative MP map at the
//! steady state has eigenvalues `1` (along `y*`) and `R` (along `(1, -1)`).
//! `R` depends only on `z = -dt`, because the nonzero eigenvalue of the test
//! matrix is `-1` for every `theta`. It can be obtained three ways here:
//! catalog rationals, the MPDeC stage recurrence, and a finite-difference
//! Jacobian of the one-step map.

use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::pds::{PdsSystem, State, TestProblem};
use crate::schemes::{step, Scheme, StepContext};
use crate::subtimesteps::{split_theta, theta_matrix, NodeFamily};

/// Lower end of the Lyapunov scan.
pub const SCAN_START: f64 = 1e-3;
/// Default upper end of the Lyapunov scan; no zero below it reports `inf`.
pub const DEFAULT_SCAN_LIMIT: f64 = 1e6;
/// Grid density of the Lyapunov scan.
pub const POINTS_PER_DECADE: usize = 2000;
/// Final bracket width of the zero bisection.
pub const BISECTION_WIDTH: f64 = 1e-10;
/// Default finite-difference step for the Jacobian oracle.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// A time-step bound that may be absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Finite(f64),
    Infinite,
}

impl Bound {
    pub fn value(self) -> f64 {
        match self {
            Bound::Finite(v) => v,
            Bound::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Bound::Finite(_))
    }

    /// Full-precision text form; `inf` when unbounded.
    pub fn to_field(self) -> String {
        match self {
            Bound::Finite(v) => format!("{v:.16e}")
                .parse::<f64>()
                .map(|x| format!("{x}"))
                .unwrap_or_else(|_| v.to_string()),
            Bound::Infinite => "inf".into(),
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Finite(v) => write!(f, "{v}"),
            Bound::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bound::Finite(v) => serializer.serialize_f64(*v),
            Bound::Infinite => serializer.serialize_str("inf"),
        }
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_pow(a: &[f64], n: u32) -> Vec<f64> {
    (0..n).fold(vec![1.0], |acc, _| poly_mul(&acc, a))
}

/// Expands `scale * prod (c0 + c1 z)^k`.
fn expand_factored(scale: f64, factors: &[([f64; 2], u32)]) -> Vec<f64> {
    factors
        .iter()
        .fold(vec![scale], |acc, (f, k)| poly_mul(&acc, &poly_pow(f, *k)))
}

/// Rational function with coefficient vectors in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RationalFn {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
    /// Real poles with multiplicity, when the denominator is known in factored form.
    poles: Vec<(f64, u32)>,
}

impl RationalFn {
    pub fn new(numerator: Vec<f64>, denominator: Vec<f64>) -> Result<Self> {
        if denominator.iter().all(|&c| c == 0.0) || numerator.is_empty() {
            return Err(Error::InvalidParameter(
                "rational function needs a nonzero denominator".into(),
            ));
        }
        Ok(Self {
            numerator,
            denominator,
            poles: Vec::new(),
        })
    }

    fn factored(numerator: Vec<f64>, scale: f64, factors: &[([f64; 2], u32)]) -> Self {
        Self {
            numerator,
            denominator: expand_factored(scale, factors),
            poles: factors.iter().map(|(f, k)| (-f[0] / f[1], *k)).collect(),
        }
    }

    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    pub fn poles(&self) -> &[(f64, u32)] {
        &self.poles
    }

    pub fn eval(&self, z: f64) -> f64 {
        horner(&self.numerator, z) / horner(&self.denominator, z)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        let h = |c: &[f64]| c.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &x| acc * z + x);
        h(&self.numerator) / h(&self.denominator)
    }
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

/// Catalog stability functions.
pub fn closed_form(scheme: &Scheme) -> Result<RationalFn> {
    let mprk22 = |alpha: f64| {
        RationalFn::factored(vec![2.0, -2.0 * alpha, -1.0], 2.0, &[([1.0, -alpha], 1), ([1.0, -1.0], 1)])
    };
    match *scheme {
        Scheme::Mprk22 { alpha } => Ok(mprk22(alpha)),
        Scheme::MpDec { order: 2, .. } => Ok(mprk22(1.0)),
        Scheme::MpDec { order: 3, .. } => Ok(RationalFn::factored(
            vec![-5184.0, 16416.0, -16452.0, 3096.0, 1830.0, -331.0],
            36.0,
            &[([-12.0, 7.0], 2), ([-1.0, 1.0], 3)],
        )),
        Scheme::MpDec {
            order: 4,
            family: NodeFamily::Equispaced,
        } => Ok(RationalFn::factored(
            vec![
                1_934_917_632.0,
                -12_415_721_472.0,
                34_026_780_672.0,
                -51_295_431_168.0,
                45_088_151_040.0,
                -22_031_034_912.0,
                4_329_437_784.0,
                823_521_161.0,
                -534_268_140.0,
                64_784_148.0,
                1_805_344.0,
            ],
            1536.0,
            &[([-36.0, 17.0], 3), ([-3.0, 2.0], 3), ([-1.0, 1.0], 4)],
        )),
        // Gauss-Lobatto order 4 shares the three-node matrix of order 3 and
        // runs four sweeps.
        Scheme::MpDec {
            order: 4,
            family: NodeFamily::GaussLobatto,
        } => Ok(RationalFn::factored(
            vec![
                -373_248.0,
                1_772_928.0,
                -3_273_696.0,
                2_787_912.0,
                -832_680.0,
                -167_724.0,
                101_238.0,
                895.0,
            ],
            216.0,
            &[([-1.0, 1.0], 4), ([-12.0, 7.0], 3)],
        )),
        Scheme::SspMprk43 => RationalFn::new(
            vec![
                1.0,
                -3.349_136_322_977_521,
                2.049_225_690_609_540,
                0.681_580_531_256_862_5,
                -0.509_398_570_569_867_1,
            ],
            vec![
                1.0,
                -4.349_136_322_977_523,
                5.898_362_013_587_063,
                -3.208_879_987_508_106,
                0.608_742_655_448_190_2,
            ],
        ),
        _ => Err(Error::NotInCatalog(scheme.to_string())),
    }
}

/// Arithmetic needed by the recurrence; implemented for `f64` and `Complex64`.
pub trait RecurrenceScalar:
    Copy + From<f64> + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn finite(self) -> bool;
}

impl RecurrenceScalar for f64 {
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl RecurrenceScalar for Complex64 {
    fn finite(self) -> bool {
        self.is_finite()
    }
}

/// MPDeC stability function through the stage recurrence
/// `R_p(z) = R^{M,(K)}(z)`.
pub fn mpdec_recurrence<T: RecurrenceScalar>(order: usize, family: NodeFamily, z: T) -> Result<T> {
    let theta = theta_matrix(order, family)?;
    let m_count = theta.subintervals();
    let one = T::from(1.0);
    let abs_sums: Vec<f64> = theta.rows().map(|row| row.iter().map(|x| x.abs()).sum()).collect();
    let denom: Vec<T> = abs_sums.iter().map(|&s| one - z * T::from(s)).collect();

    let mut stages: Vec<T> = Vec::with_capacity(m_count + 1);
    stages.push(one);
    for m in 1..=m_count {
        let neg: f64 = theta.row(m).iter().map(|&v| split_theta(v).0).sum();
        stages.push((one + T::from(2.0) * z * T::from(neg)) / denom[m - 1]);
    }
    for _ in 2..=theta.iterations() {
        let mut next = Vec::with_capacity(m_count + 1);
        next.push(one);
        for m in 1..=m_count {
            let row = theta.row(m);
            let mut num = one + T::from(row[0]) * z;
            for (j, &stage) in stages.iter().enumerate().skip(1) {
                if j != m {
                    num = num + z * T::from(row[j]) * stage;
                }
            }
            let off_diag: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != m)
                .map(|(_, v)| v.abs())
                .sum();
            let self_coef = off_diag - 2.0 * split_theta(row[m]).0;
            num = num - z * T::from(self_coef) * stages[m];
            next.push(num / denom[m - 1]);
        }
        stages = next;
    }
    let r = stages[m_count];
    if !r.finite() {
        return Err(Error::NonFinite(format!(
            "MPDeC({order}, {family}) recurrence (pole)"
        )));
    }
    Ok(r)
}

/// Real-argument recurrence; on the negative axis every stage denominator
/// `1 - z sum|theta|` is at least 1.
pub fn mpdec_recurrence_real(order: usize, family: NodeFamily, z: f64) -> Result<f64> {
    if z < 0.0 {
        let theta = theta_matrix(order, family)?;
        for row in theta.rows() {
            let d = 1.0 - z * row.iter().map(|x| x.abs()).sum::<f64>();
            assert!(d >= 1.0, "recurrence denominator {d} < 1 at z = {z}");
        }
    }
    mpdec_recurrence(order, family, z)
}

/// `(1, -1)`, the eigendirection of the decaying mode.
const DECAY_DIRECTION: [f64; 2] = [1.0, -1.0];

fn check_fd_step(theta: f64, h: f64) -> Result<()> {
    let cap = theta.min(1.0 - theta) / 4.0;
    if !(h > 0.0 && h < cap) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step {h} must lie in (0, {cap})"
        )));
    }
    Ok(())
}

fn central_difference(
    scheme: &Scheme,
    ctx: &StepContext<'_>,
    base: &State,
    direction: [f64; 2],
    h: f64,
) -> Result<[f64; 2]> {
    let shifted = |s: f64| State::from([base[0] + s * direction[0], base[1] + s * direction[1]]);
    let plus = step(scheme, ctx, &shifted(h))?;
    let minus = step(scheme, ctx, &shifted(-h))?;
    Ok([
        (plus[0] - minus[0]) / (2.0 * h),
        (plus[1] - minus[1]) / (2.0 * h),
    ])
}

/// Directional derivative with one Richardson level (`h` and `h / 2`).
fn directional_derivative(
    scheme: &Scheme,
    ctx: &StepContext<'_>,
    base: &State,
    direction: [f64; 2],
    h: f64,
) -> Result<[f64; 2]> {
    let coarse = central_difference(scheme, ctx, base, direction, h)?;
    let fine = central_difference(scheme, ctx, base, direction, 0.5 * h)?;
    Ok([
        (4.0 * fine[0] - coarse[0]) / 3.0,
        (4.0 * fine[1] - coarse[1]) / 3.0,
    ])
}

fn jacobian_r_with(scheme: &Scheme, problem: &TestProblem, system: &PdsSystem, dt: f64, h: f64) -> Result<f64> {
    check_fd_step(problem.theta(), h)?;
    let ctx = StepContext::new(system, dt)?;
    let star = problem.steady_state();
    let d = directional_derivative(scheme, &ctx, &star, DECAY_DIRECTION, h)?;
    Ok(0.5 * (d[0] * DECAY_DIRECTION[0] + d[1] * DECAY_DIRECTION[1]))
}

/// Eigenvalue `R` of the one-step map's Jacobian at `y*` along `(1, -1)`,
/// from central differences.
pub fn jacobian_r(scheme: &Scheme, theta: f64, dt: f64, h: f64) -> Result<f64> {
    let problem = TestProblem::new(theta)?;
    jacobian_r_with(scheme, &problem, &problem.as_pds(), dt, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EvalMode {
    Closed,
    Recurrence,
    Jacobian { theta: f64, h: f64 },
}

impl EvalMode {
    pub fn jacobian_default() -> Self {
        EvalMode::Jacobian {
            theta: 0.5,
            h: DEFAULT_FD_STEP,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::Closed => "closed",
            EvalMode::Recurrence => "recurrence",
            EvalMode::Jacobian { .. } => "jacobian",
        }
    }
}

enum Backend {
    Closed(RationalFn),
    Recurrence(usize, NodeFamily),
    Jacobian(TestProblem, PdsSystem, f64),
}

/// Evaluates `R(-dt)` for one scheme in one mode.
pub struct StabilityEvaluator {
    scheme: Scheme,
    mode: EvalMode,
    backend: Backend,
}

impl StabilityEvaluator {
    pub fn new(scheme: Scheme, mode: EvalMode) -> Result<Self> {
        scheme.validate()?;
        let backend = match mode {
            EvalMode::Closed => Backend::Closed(closed_form(&scheme)?),
            EvalMode::Recurrence => match scheme {
                Scheme::MpDec { order, family } => Backend::Recurrence(order, family),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "recurrence mode is only defined for MPDeC, not `{scheme}`"
                    )))
                }
            },
            EvalMode::Jacobian { theta, h } => {
                if !scheme.has_step_map() {
                    return Err(Error::Unimplemented(scheme.to_string()));
                }
                let problem = TestProblem::new(theta)?;
                check_fd_step(theta, h)?;
                let system = problem.as_pds();
                Backend::Jacobian(problem, system, h)
            }
        };
        Ok(Self { scheme, mode, backend })
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    /// `R(z)` at a real argument.
    pub fn eval_z(&self, z: f64) -> Result<f64> {
        match &self.backend {
            Backend::Closed(r) => Ok(r.eval(z)),
            Backend::Recurrence(order, family) => mpdec_recurrence_real(*order, *family, z),
            Backend::Jacobian(problem, system, h) => {
                if !(z < 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "jacobian mode needs z = -dt < 0, got {z}"
                    )));
                }
                jacobian_r_with(&self.scheme, problem, system, -z, *h)
            }
        }
    }

    /// `R(-dt)`.
    pub fn eval_dt(&self, dt: f64) -> Result<f64> {
        self.eval_z(-dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovBound {
    pub dt0: Bound,
    /// Final bisection bracket when a zero was found.
    pub bracket: Option<(f64, f64)>,
    pub scan_limit: f64,
    pub mode: EvalMode,
}

fn value_or_pole(evaluator: &StabilityEvaluator, dt: f64) -> Result<f64> {
    match evaluator.eval_dt(dt) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) | Err(Error::NonFinite(_)) => Err(Error::PoleEncountered { at: dt }),
        Err(e) => Err(e),
    }
}

/// Largest `|R|` at a bisected sign change that still counts as a zero.
const ZERO_RESIDUAL: f64 = 1e-6;

/// Catalog rationals carry their real poles; any on `z in [-up_to, 0)` is an error.
fn check_known_poles(evaluator: &StabilityEvaluator, up_to: f64) -> Result<()> {
    if let Backend::Closed(r) = &evaluator.backend {
        if let Some(&(z, _)) = r.poles().iter().find(|&&(z, _)| z < 0.0 && -z <= up_to) {
            return Err(Error::PoleEncountered { at: -z });
        }
    }
    Ok(())
}

/// Smallest `dt` in `(0, scan_limit]` with `R(-dt) = 0`, located by a
/// log-spaced sign scan followed by bisection.
pub fn lyapunov_dt0(evaluator: &StabilityEvaluator, scan_limit: f64) -> Result<LyapunovBound> {
    if !(scan_limit > SCAN_START && scan_limit.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "scan limit {scan_limit} must exceed {SCAN_START}"
        )));
    }
    let decades = (scan_limit / SCAN_START).log10();
    let n = (decades * POINTS_PER_DECADE as f64).ceil() as usize;
    let grid = |k: usize| {
        if k == n {
            scan_limit
        } else {
            SCAN_START * 10f64.powf(decades * k as f64 / n as f64)
        }
    };

    // R(0) = 1 closes the bracket on the left.
    let mut prev_dt = 0.0;
    let mut prev_val = 1.0;
    for k in 0..=n {
        let dt = grid(k);
        let val = value_or_pole(evaluator, dt)?;
        if val == 0.0 {
            return Ok(LyapunovBound {
                dt0: Bound::Finite(dt),
                bracket: Some((dt, dt)),
                scan_limit,
                mode: evaluator.mode(),
            });
        }
        if prev_val * val < 0.0 {
            let (mut lo, mut hi) = (prev_dt, dt);
            let lo_sign = prev_val.signum();
            while hi - lo > BISECTION_WIDTH {
                let mid = 0.5 * (lo + hi);
                let v = value_or_pole(evaluator, mid)?;
                if v == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if v.signum() == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            // A sign change across a pole leaves large values at the bracket ends.
            let residual = value_or_pole(evaluator, lo)?
                .abs()
                .min(value_or_pole(evaluator, hi)?.abs());
            if residual > ZERO_RESIDUAL {
                return Err(Error::PoleEncountered { at: 0.5 * (lo + hi) });
            }
            let dt0 = 0.5 * (lo + hi);
            check_known_poles(evaluator, dt0)?;
            return Ok(LyapunovBound {
                dt0: Bound::Finite(dt0),
                bracket: Some((lo, hi)),
                scan_limit,
                mode: evaluator.mode(),
            });
        }
        prev_dt = dt;
        prev_val = val;
    }
    check_known_poles(evaluator, scan_limit)?;
    Ok(LyapunovBound {
        dt0: Bound::Infinite,
        bracket: None,
        scan_limit,
        mode: evaluator.mode(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenDiagnostics {
    /// Finite-difference Jacobian of the map at `y*`, row-major.
    pub jacobian: [[f64; 2]; 2],
    pub r: f64,
    /// `|Dg y* - y*|_inf`
    pub fixed_direction_residual: f64,
    /// `|Dg ybar - R ybar|_inf`
    pub decay_direction_residual: f64,
}

/// Full 2x2 Jacobian at `y*` and the residuals of the eigenpairs
/// `(1, y*)` and `(R, (1, -1))`.
pub fn check_eigenstructure(scheme: &Scheme, theta: f64, dt: f64) -> Result<EigenDiagnostics> {
    let h = DEFAULT_FD_STEP;
    let problem = TestProblem::new(theta)?;
    check_fd_step(theta, h)?;
    let system = problem.as_pds();
    let ctx = StepContext::new(&system, dt)?;
    let star = problem.steady_state();
    let col0 = directional_derivative(scheme, &ctx, &star, [1.0, 0.0], h)?;
    let col1 = directional_derivative(scheme, &ctx, &star, [0.0, 1.0], h)?;
    let jac = [[col0[0], col1[0]], [col0[1], col1[1]]];
    let apply = |v: [f64; 2]| {
        [
            jac[0][0] * v[0] + jac[0][1] * v[1],
            jac[1][0] * v[0] + jac[1][1] * v[1],
        ]
    };
    let r = jacobian_r_with(scheme, &problem, &system, dt, h)?;
    let js = apply([star[0], star[1]]);
    let jb = apply(DECAY_DIRECTION);
    Ok(EigenDiagnostics {
        jacobian: jac,
        r,
        fixed_direction_residual: (js[0] - star[0]).abs().max((js[1] - star[1]).abs()),
        decay_direction_residual: (jb[0] - r * DECAY_DIRECTION[0])
            .abs()
            .max((jb[1] - r * DECAY_DIRECTION[1]).abs()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gl(p: usize) -> Scheme {
        Scheme::mpdec(p, NodeFamily::GaussLobatto).unwrap()
    }

    #[test]
    fn catalog_is_consistent_at_zero() {
        for scheme in [
            Scheme::mprk22(1.0).unwrap(),
            Scheme::mprk22(3.7).unwrap(),
            gl(2),
            gl(3),
            gl(4),
            Scheme::mpdec(4, NodeFamily::Equispaced).unwrap(),
            Scheme::SspMprk43,
        ] {
            let r = closed_form(&scheme).unwrap();
            assert!((r.eval(0.0) - 1.0).abs() < 1e-15, "{scheme}");
        }
    }

    #[test]
    fn mprk22_numerator_root() {
        for alpha in [0.5, 1.0, 2.5] {
            let r = closed_form(&Scheme::mprk22(alpha).unwrap()).unwrap();
            let z = -(alpha + (alpha * alpha + 2.0).sqrt());
            assert!(r.eval(z).abs() < 1e-14);
            assert_eq!(r.poles(), &[(1.0 / alpha, 1), (1.0, 1)]);
        }
    }

    #[test]
    fn not_in_catalog() {
        for scheme in [gl(5), "ext:mprk32".parse().unwrap()] {
            assert!(matches!(closed_form(&scheme), Err(Error::NotInCatalog(_))));
        }
    }

    #[test]
    fn r2_by_hand() {
        // R_2(-1) = (-1 + 2 + 2) / (2 * 4)
        let v = mpdec_recurrence_real(2, NodeFamily::Equispaced, -1.0).unwrap();
        assert!((v - 0.375).abs() < 1e-15);
        let c = mpdec_recurrence(2, NodeFamily::Equispaced, Complex64::new(-1.0, 0.0)).unwrap();
        assert!((c.re - 0.375).abs() < 1e-15 && c.im.abs() < 1e-15);
    }

    #[test]
    fn complex_recurrence_matches_closed_form() {
        let r3 = closed_form(&gl(3)).unwrap();
        for z in [Complex64::new(-1.0, 2.0), Complex64::new(0.3, -0.4)] {
            let a = mpdec_recurrence(3, NodeFamily::GaussLobatto, z).unwrap();
            let b = r3.eval_complex(z);
            assert!((a - b).norm() < 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn recurrence_pole_is_flagged() {
        // Order 2 recurrence has a pole at z = 1.
        assert!(mpdec_recurrence_real(2, NodeFamily::Equispaced, 1.0).is_err());
    }

    #[test]
    fn jacobian_matches_hand_value() {
        // (2 + 0.2 - 0.01) / (2 * 1.1 * 1.1)
        let r = jacobian_r(&Scheme::mprk22(1.0).unwrap(), 0.3, 0.1, 1e-6).unwrap();
        assert!((r - 2.19 / 2.42).abs() < 1e-8, "{r}");
    }

    #[test]
    fn jacobian_rejects_large_step() {
        let s = Scheme::mprk22(1.0).unwrap();
        assert!(jacobian_r(&s, 0.1, 1.0, 0.05).is_err());
        assert!(jacobian_r(&s, 0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn evaluator_mode_availability() {
        assert!(StabilityEvaluator::new(gl(5), EvalMode::Closed).is_err());
        assert!(StabilityEvaluator::new(Scheme::mprk22(1.0).unwrap(), EvalMode::Recurrence).is_err());
        assert!(StabilityEvaluator::new(Scheme::SspMprk43, EvalMode::jacobian_default()).is_err());
        assert!(StabilityEvaluator::new(Scheme::SspMprk43, EvalMode::Closed).is_ok());
    }

    #[test]
    fn lyapunov_mprk22_one() {
        let ev = StabilityEvaluator::new(Scheme::mprk22(1.0).unwrap(), EvalMode::Closed).unwrap();
        let b = lyapunov_dt0(&ev, DEFAULT_SCAN_LIMIT).unwrap();
        assert!((b.dt0.value() - (1.0 + 3f64.sqrt())).abs() < 1e-9);
        let (lo, hi) = b.bracket.unwrap();
        assert!(hi - lo <= BISECTION_WIDTH);
    }

    #[test]
    fn lyapunov_infinite_and_finite_scan_limit() {
        let ev = StabilityEvaluator::new(gl(1), EvalMode::Recurrence).unwrap();
        assert_eq!(lyapunov_dt0(&ev, 1e4).unwrap().dt0, Bound::Infinite);
        let ev = StabilityEvaluator::new(Scheme::mprk22(1.0).unwrap(), EvalMode::Closed).unwrap();
        assert_eq!(lyapunov_dt0(&ev, 2.0).unwrap().dt0, Bound::Infinite);
        assert!(lyapunov_dt0(&ev, 1e-4).is_err());
    }

    #[test]
    fn pole_inside_scan_is_reported() {
        // 1 / (1 + z / 2) has a pole at z = -2 and never changes sign before it.
        let bad = RationalFn::new(vec![1.0], vec![1.0, 0.5]).unwrap();
        let ev = StabilityEvaluator {
            scheme: Scheme::SspMprk43,
            mode: EvalMode::Closed,
            backend: Backend::Closed(bad),
        };
        match lyapunov_dt0(&ev, 10.0) {
            Err(Error::PoleEncountered { at }) => assert!((at - 2.0).abs() < 1e-2),
            other => panic!("expected pole, got {other:?}"),
        }
    }

    #[test]
    fn bound_fields() {
        assert_eq!(Bound::Infinite.to_field(), "inf");
        assert_eq!(Bound::Finite(2.5).to_field(), "2.5");
        assert_eq!(serde_json::to_string(&Bound::Infinite).unwrap(), "\"inf\"");
    }
}
