//! Modified Patankar one-step maps `y^{n+1} = g(y^n)`.
//!
//! Every stage of a modified Patankar scheme multiplies each production and
//! destruction term by a ratio `y_new / y_old` of one species, which turns
//! the stage into a linear system whose matrix has a positive diagonal,
//! non-positive off-diagonal and unit column sums. The resulting maps are
//! conservative and positive for every step size.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;
use crate::pds::{PdsSystem, State};
use crate::subtimesteps::{theta_matrix, NodeFamily};

/// Smallest component accepted as input to a Patankar step.
pub const MIN_COMPONENT: f64 = 1e-300;

/// Pivots below this magnitude are reported as a singular system.
pub const PIVOT_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    /// Two-stage MPRK22 family, `alpha >= 1/2`.
    Mprk22 { alpha: f64 },
    /// Modified Patankar deferred correction of order `order`.
    MpDec { order: usize, family: NodeFamily },
    /// SSPMPRK43 with `eta_2 = 1/3`; only its stability function is built in.
    SspMprk43,
    /// Catalog slot for schemes whose coefficients are not part of this build.
    Extension { name: String, params: Vec<String> },
}

impl Scheme {
    pub fn mprk22(alpha: f64) -> Result<Self> {
        let scheme = Scheme::Mprk22 { alpha };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn mpdec(order: usize, family: NodeFamily) -> Result<Self> {
        let scheme = Scheme::MpDec { order, family };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Scheme::Mprk22 { alpha } if !(alpha >= 0.5 && alpha.is_finite()) => Err(
                Error::InvalidParameter(format!("MPRK22 needs alpha >= 1/2, got {alpha}")),
            ),
            Scheme::MpDec { order: 0, .. } => {
                Err(Error::InvalidParameter("MPDeC order must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Whether `step` is available for this scheme.
    pub fn has_step_map(&self) -> bool {
        matches!(self, Scheme::Mprk22 { .. } | Scheme::MpDec { .. })
    }

    /// Order of accuracy where known.
    pub fn order(&self) -> Option<usize> {
        match *self {
            Scheme::Mprk22 { .. } => Some(2),
            Scheme::MpDec { order, .. } => Some(order),
            Scheme::SspMprk43 => Some(3),
            Scheme::Extension { .. } => None,
        }
    }
}

fn format_real(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Mprk22 { alpha } => write!(f, "mprk22:{}", format_real(*alpha)),
            Scheme::MpDec { order, family } => write!(f, "mpdec:{order}:{family}"),
            Scheme::SspMprk43 => f.write_str("sspmprk43"),
            Scheme::Extension { name, params } => {
                write!(f, "ext:{name}")?;
                for p in params {
                    write!(f, ":{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadSchemeId(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let scheme = match parts.as_slice() {
            ["mprk22", alpha] => Scheme::Mprk22 {
                alpha: alpha.parse().map_err(|_| bad())?,
            },
            ["mpdec", order, family] => Scheme::MpDec {
                order: order.parse().map_err(|_| bad())?,
                family: family.parse().map_err(|_| bad())?,
            },
            ["sspmprk43"] => Scheme::SspMprk43,
            ["ext", name, params @ ..] if !name.is_empty() => Scheme::Extension {
                name: name.to_string(),
                params: params.iter().map(|p| p.to_string()).collect(),
            },
            _ => return Err(bad()),
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// The system being integrated and the step size `dt`.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    system: &'a PdsSystem,
    dt: f64,
}

impl<'a> StepContext<'a> {
    pub fn new(system: &'a PdsSystem, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "time step must be positive and finite, got {dt}"
            )));
        }
        Ok(Self { system, dt })
    }

    pub fn system(&self) -> &'a PdsSystem {
        self.system
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Gaussian elimination with partial pivoting.
pub fn solve_patankar_system(matrix: &SquareMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = matrix.dim();
    if rhs.len() != n {
        return Err(Error::InvalidParameter(format!(
            "right-hand side has length {}, matrix is {n}x{n}",
            rhs.len()
        )));
    }
    let mut a = matrix.clone();
    let mut b = rhs.to_vec();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .expect("non-empty pivot range");
        let pivot = a[(pivot_row, col)];
        if !(pivot.abs() >= PIVOT_FLOOR) {
            return Err(Error::SingularSystem {
                column: col,
                pivot,
                matrix: matrix.as_slice().to_vec(),
            });
        }
        if pivot_row != col {
            for k in 0..n {
                let tmp = a[(col, k)];
                a[(col, k)] = a[(pivot_row, k)];
                a[(pivot_row, k)] = tmp;
            }
            b.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let factor = a[(row, col)] / pivot;
            if factor != 0.0 {
                for k in col..n {
                    a[(row, k)] -= factor * a[(col, k)];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[(row, k)] * x[k]).sum();
        x[row] = (b[row] - tail) / a[(row, row)];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Patankar linear solve".into()));
    }
    Ok(x)
}

/// Adds `-c * sum_j (p_ij y_a / den_a - d_ij y_b / den_b)` to the stage
/// matrix. For `c >= 0` the production term is weighted by species `j` and
/// the destruction term by `i`; for `c < 0` the roles swap so the matrix
/// stays an M-matrix.
fn add_patankar_terms(
    a: &mut SquareMatrix,
    c: f64,
    production: &SquareMatrix,
    destruction: &SquareMatrix,
    denom: &[f64],
) {
    if c == 0.0 {
        return;
    }
    let n = a.dim();
    for i in 0..n {
        for j in 0..n {
            let p = production[(i, j)];
            let d = destruction[(i, j)];
            if c > 0.0 {
                a[(i, j)] -= c * p / denom[j];
                a[(i, i)] += c * d / denom[i];
            } else {
                a[(i, i)] -= c * p / denom[i];
                a[(i, j)] += c * d / denom[j];
            }
        }
    }
}

/// Adds `c * sum_j (p_ij - d_ij)`: the stage right-hand side with all
/// Patankar weights equal to one.
fn add_net_rate(out: &mut [f64], c: f64, production: &SquareMatrix, destruction: &SquareMatrix) {
    let n = out.len();
    for (i, o) in out.iter_mut().enumerate() {
        let f: f64 = (0..n).map(|j| production[(i, j)] - destruction[(i, j)]).sum();
        *o += c * f;
    }
}

/// Solves the stage system `a x = rhs` where `a` was assembled with
/// denominators `reference`. The increment `x - reference` satisfies
/// `a dx = increment_rhs`; it is used when small against `reference`, which
/// keeps steady states fixed to rounding for any `dt`. Otherwise the direct
/// solve, which is positive by construction, is returned.
fn solve_stage(a: &SquareMatrix, rhs: &[f64], reference: &[f64], increment_rhs: &[f64]) -> Result<Vec<f64>> {
    let delta = solve_patankar_system(a, increment_rhs)?;
    if delta.iter().zip(reference).all(|(d, u)| d.abs() <= 0.5 * u) {
        return Ok(reference.iter().zip(&delta).map(|(u, d)| u + d).collect());
    }
    solve_patankar_system(a, rhs)
}

fn check_input(system: &PdsSystem, y: &State) -> Result<()> {
    if y.len() != system.dim() {
        return Err(Error::InvalidParameter(format!(
            "state has {} components, system has {}",
            y.len(),
            system.dim()
        )));
    }
    for (index, &value) in y.as_slice().iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("state component {index}")));
        }
        if value < MIN_COMPONENT {
            return Err(Error::NonPositiveState { index, value });
        }
    }
    Ok(())
}

fn mprk22_step(alpha: f64, ctx: &StepContext<'_>, y: &[f64]) -> Result<Vec<f64>> {
    let sys = ctx.system();
    let n = sys.dim();
    let dt = ctx.dt();
    let p0 = sys.production(y);
    let d0 = sys.destruction(y);

    let mut a = SquareMatrix::identity(n);
    add_patankar_terms(&mut a, alpha * dt, &p0, &d0, y);
    let mut r = vec![0.0; n];
    add_net_rate(&mut r, alpha * dt, &p0, &d0);
    let y1 = solve_stage(&a, y, y, &r)?;

    let inv_alpha = 1.0 / alpha;
    let sigma: Vec<f64> = y
        .iter()
        .zip(&y1)
        .map(|(&yi, &y1i)| yi * (y1i / yi).powf(inv_alpha))
        .collect();

    let p1 = sys.production(&y1);
    let d1 = sys.destruction(&y1);
    let w1 = 0.5 * inv_alpha;
    let w0 = 1.0 - w1;
    let mut a = SquareMatrix::identity(n);
    add_patankar_terms(&mut a, w0 * dt, &p0, &d0, &sigma);
    add_patankar_terms(&mut a, w1 * dt, &p1, &d1, &sigma);
    let mut r: Vec<f64> = y.iter().zip(&sigma).map(|(yi, si)| yi - si).collect();
    add_net_rate(&mut r, w0 * dt, &p0, &d0);
    add_net_rate(&mut r, w1 * dt, &p1, &d1);
    solve_stage(&a, y, &sigma, &r)
}

fn mpdec_step(order: usize, family: NodeFamily, ctx: &StepContext<'_>, y: &[f64]) -> Result<Vec<f64>> {
    let theta = theta_matrix(order, family)?;
    let sys = ctx.system();
    let n = sys.dim();
    let dt = ctx.dt();
    let m_count = theta.subintervals();

    let mut prev: Vec<Vec<f64>> = vec![y.to_vec(); m_count + 1];
    let mut prod: Vec<SquareMatrix> = vec![SquareMatrix::zeros(n); m_count + 1];
    let mut dest: Vec<SquareMatrix> = vec![SquareMatrix::zeros(n); m_count + 1];
    let mut a = SquareMatrix::zeros(n);

    for _ in 0..theta.iterations() {
        for r in 0..=m_count {
            sys.production_into(&prev[r], &mut prod[r]);
            sys.destruction_into(&prev[r], &mut dest[r]);
        }
        let mut next = Vec::with_capacity(m_count + 1);
        next.push(y.to_vec());
        for m in 1..=m_count {
            a.fill(0.0);
            for i in 0..n {
                a[(i, i)] = 1.0;
            }
            let mut rhs: Vec<f64> = y.iter().zip(&prev[m]).map(|(yi, ui)| yi - ui).collect();
            for (r, &coef) in theta.row(m).iter().enumerate() {
                add_patankar_terms(&mut a, dt * coef, &prod[r], &dest[r], &prev[m]);
                add_net_rate(&mut rhs, dt * coef, &prod[r], &dest[r]);
            }
            next.push(solve_stage(&a, y, &prev[m], &rhs)?);
        }
        prev = next;
    }
    Ok(prev.swap_remove(m_count))
}

/// One step of the scheme: returns `g(y)`.
pub fn step(scheme: &Scheme, ctx: &StepContext<'_>, y: &State) -> Result<State> {
    check_input(ctx.system(), y)?;
    let out = match *scheme {
        Scheme::Mprk22 { alpha } => {
            scheme.validate()?;
            mprk22_step(alpha, ctx, y.as_slice())?
        }
        Scheme::MpDec { order, family } => {
            scheme.validate()?;
            mpdec_step(order, family, ctx, y.as_slice())?
        }
        Scheme::SspMprk43 | Scheme::Extension { .. } => {
            return Err(Error::Unimplemented(scheme.to_string()))
        }
    };
    Ok(State::new(out))
}

/// `n_steps` steps from `y0`; the trajectory includes `y0`.
pub fn integrate(
    scheme: &Scheme,
    ctx: &StepContext<'_>,
    y0: &State,
    n_steps: usize,
) -> Result<Vec<State>> {
    if n_steps < 1 {
        return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
    }
    let mut trajectory = Vec::with_capacity(n_steps + 1);
    trajectory.push(y0.clone());
    for k in 0..n_steps {
        let next = step(scheme, ctx, &trajectory[k]).map_err(|e| Error::StepFailed {
            step: k,
            source: Box::new(e),
        })?;
        trajectory.push(next);
    }
    Ok(trajectory)
}
