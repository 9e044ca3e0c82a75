//! Production-destruction systems and the two-species linear test problem.
//!
//! A production-destruction system (PDS) writes each species' rate as
//! `dy_i/dt = sum_j (p_ij(y) - d_ij(y))` with non-negative tables satisfying
//! `p_ij = d_ji`. That symmetry makes the component sum a conserved quantity,
//! and `d_ij -> 0` as `y_i -> 0` keeps solutions in the positive orthant.

use std::fmt;
use std::ops::Index;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::SquareMatrix;

/// A state vector of species concentrations.
#[derive(Debug, Clone, PartialEq)]
pub struct State(Vec<f64>);

impl State {
    pub fn new(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Plain component sum; equals the l1 norm for non-negative states.
    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&x| x > 0.0)
    }

    pub fn max_abs_diff(&self, other: &State) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for State {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for State {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[f64; N]> for State {
    fn from(v: [f64; N]) -> Self {
        Self(v.to_vec())
    }
}

type RateTable = Arc<dyn Fn(&[f64], &mut SquareMatrix) + Send + Sync>;

/// Production and destruction tables of an `I`-species system.
///
/// Both closures receive the state and overwrite an `I x I` matrix whose
/// entry `(i, j)` is `p_ij(y)` (resp. `d_ij(y)`).
#[derive(Clone)]
pub struct PdsSystem {
    dim: usize,
    production: RateTable,
    destruction: RateTable,
}

impl fmt::Debug for PdsSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdsSystem").field("dim", &self.dim).finish()
    }
}

impl PdsSystem {
    pub fn new<P, D>(dim: usize, production: P, destruction: D) -> Self
    where
        P: Fn(&[f64], &mut SquareMatrix) + Send + Sync + 'static,
        D: Fn(&[f64], &mut SquareMatrix) + Send + Sync + 'static,
    {
        Self {
            dim,
            production: Arc::new(production),
            destruction: Arc::new(destruction),
        }
    }

    /// Linear system `y' = A y` given by its off-diagonal transfer rates:
    /// `rates[(i, j)] >= 0` is the rate at which species `j` turns into `i`,
    /// so `p_ij = rates[(i, j)] * y_j` and `d_ij = rates[(j, i)] * y_i`.
    /// The diagonal of `rates` is ignored.
    pub fn linear(rates: SquareMatrix) -> Result<Self> {
        let n = rates.dim();
        for i in 0..n {
            for j in 0..n {
                if i != j && !(rates[(i, j)] >= 0.0 && rates[(i, j)].is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "transfer rate ({i}, {j}) = {} must be finite and non-negative",
                        rates[(i, j)]
                    )));
                }
            }
        }
        let rates = Arc::new(rates);
        let rp = Arc::clone(&rates);
        let production = move |y: &[f64], out: &mut SquareMatrix| {
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] = if i == j { 0.0 } else { rp[(i, j)] * y[j] };
                }
            }
        };
        let destruction = move |y: &[f64], out: &mut SquareMatrix| {
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] = if i == j { 0.0 } else { rates[(j, i)] * y[i] };
                }
            }
        };
        Ok(Self::new(n, production, destruction))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn production_into(&self, y: &[f64], out: &mut SquareMatrix) {
        (self.production)(y, out)
    }

    pub fn destruction_into(&self, y: &[f64], out: &mut SquareMatrix) {
        (self.destruction)(y, out)
    }

    pub fn production(&self, y: &[f64]) -> SquareMatrix {
        let mut out = SquareMatrix::zeros(self.dim);
        self.production_into(y, &mut out);
        out
    }

    pub fn destruction(&self, y: &[f64]) -> SquareMatrix {
        let mut out = SquareMatrix::zeros(self.dim);
        self.destruction_into(y, &mut out);
        out
    }

    /// Right-hand side `sum_j (p_ij - d_ij)`.
    pub fn rhs(&self, y: &[f64]) -> Vec<f64> {
        let p = self.production(y);
        let d = self.destruction(y);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| p[(i, j)] - d[(i, j)]).sum())
            .collect()
    }
}

/// The two-species linear test problem `y' = A_theta y` with
/// `A_theta = [[-theta, 1 - theta], [theta, -(1 - theta)]]`.
///
/// Its eigenvalues are `0` (eigenvector `y*`) and `-1` (eigenvector
/// `(1, -1)`) for every `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestProblem {
    theta: f64,
}

impl TestProblem {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "theta = {theta} must lie in (0, 1)"
            )));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn as_pds(&self) -> PdsSystem {
        let mut rates = SquareMatrix::zeros(2);
        rates[(0, 1)] = 1.0 - self.theta;
        rates[(1, 0)] = self.theta;
        PdsSystem::linear(rates).expect("rates of a valid test problem are non-negative")
    }

    /// `(1 - theta, theta)` scaled to the given total mass.
    pub fn steady_state_with_mass(&self, total: f64) -> State {
        State::from([(1.0 - self.theta) * total, self.theta * total])
    }

    pub fn steady_state(&self) -> State {
        self.steady_state_with_mass(1.0)
    }

    /// Initial state `(1 - epsilon, epsilon)` of unit mass.
    pub fn initial_state(&self, epsilon: f64) -> State {
        State::from([1.0 - epsilon, epsilon])
    }

    /// Closed-form solution `y* s + c e^{-t} (1, -1)` where `s` is the mass
    /// of `y0` and `c` its coordinate along `(1, -1)`.
    pub fn exact_solution(&self, y0: &State, t: f64) -> Result<State> {
        if y0.len() != 2 || !y0.is_positive() {
            return Err(Error::InvalidParameter(format!(
                "initial state {:?} must be a positive 2-vector",
                y0.as_slice()
            )));
        }
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time {t} must be >= 0")));
        }
        let mass = y0.sum();
        let star = self.steady_state_with_mass(mass);
        let c = y0[0] - star[0];
        let decay = c * (-t).exp();
        Ok(State::from([star[0] + decay, star[1] - decay]))
    }
}
