//! Overshoot detection on the linear test problem and the empirical
//! non-oscillation time-step bound.
//!
//! Starting from `(1 - eps, eps)`, the exact solution approaches
//! `y* = (1 - theta, theta)` monotonically from one side. A step that lands
//! on the other side of `y*` is an overshoot. The numerical bound is the
//! smallest `dt` producing one over a grid of `(theta, eps)` probes.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pds::{PdsSystem, State, TestProblem};
use crate::schemes::{step, Scheme, StepContext};
use crate::stability::{
    closed_form, jacobian_r, lyapunov_dt0, Bound, EvalMode, LyapunovBound, StabilityEvaluator,
    DEFAULT_FD_STEP, DEFAULT_SCAN_LIMIT,
};

/// Crossing tolerance per unit of total mass.
pub const CROSSING_TOLERANCE: f64 = 1e-10;
/// Probes with `|eps - theta|` below this are rejected.
pub const EXCLUSION_BAND: f64 = 1e-6;
/// Width of the final `dt` bracket.
pub const DT_TOLERANCE: f64 = 1e-4;
/// First trial step of the exponential bracketing.
pub const DT_START: f64 = 1e-2;
pub const DEFAULT_DT_MAX: f64 = 1e3;
/// Step count of the secondary, long-run crossing bound.
pub const MULTISTEP_STEPS: usize = 100;

/// Default `theta` values; both tails reach far toward 0 and 1.
pub const DEFAULT_THETAS: [f64; 13] = [
    1e-3, 1e-2, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 0.999,
];

/// Default probes are placed at `eps = theta * r` below `y*` and
/// `eps = 1 - (1 - theta) * r` above it. Small `r` starts far from the
/// steady state (almost all mass in one species); `r` near 1 starts next to
/// it, where the first-step behaviour is governed by the stability function.
pub const DEFAULT_EPS_RATIOS: [f64; 9] = [1e-100, 1e-30, 1e-12, 1e-6, 1e-3, 0.1, 0.5, 0.9, 0.99];

/// One initial condition of the test problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OvershootProbe {
    theta: f64,
    initial: [f64; 2],
    n_steps: usize,
}

impl OvershootProbe {
    /// Starts from `(1 - epsilon, epsilon)`.
    pub fn new(theta: f64, epsilon: f64, n_steps: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon = {epsilon} not in (0, 1)")));
        }
        Self::from_state(theta, [1.0 - epsilon, epsilon], n_steps)
    }

    /// Starts from an explicit unit-mass state. Lets either component be
    /// far smaller than the rounding error of `1 - epsilon`.
    pub fn from_state(theta: f64, initial: [f64; 2], n_steps: usize) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!("theta = {theta} not in (0, 1)")));
        }
        if !(initial[0] > 0.0 && initial[1] > 0.0) || (initial[0] + initial[1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "initial state {initial:?} must be positive with unit mass"
            )));
        }
        if (initial[1] - theta).abs() < EXCLUSION_BAND {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} is within {EXCLUSION_BAND} of the steady state theta = {theta}",
                initial[1]
            )));
        }
        if n_steps < 1 {
            return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
        }
        Ok(Self {
            theta,
            initial,
            n_steps,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Second component of the initial state.
    pub fn epsilon(&self) -> f64 {
        self.initial[1]
    }

    pub fn initial_state(&self) -> State {
        State::from(self.initial)
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }
}

/// Anything that advances a state of the test problem by `dt`.
pub trait Propagator: Sync {
    fn advance(&self, problem: &TestProblem, system: &PdsSystem, dt: f64, y: &State) -> Result<State>;
}

impl Propagator for Scheme {
    fn advance(&self, _problem: &TestProblem, system: &PdsSystem, dt: f64, y: &State) -> Result<State> {
        step(self, &StepContext::new(system, dt)?, y)
    }
}

/// The exact flow of the test problem.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactFlow;

impl Propagator for ExactFlow {
    fn advance(&self, problem: &TestProblem, _system: &PdsSystem, dt: f64, y: &State) -> Result<State> {
        problem.exact_solution(y, dt)
    }
}

fn crosses(previous: &State, next: &State, theta: f64, tau: f64) -> bool {
    let mass = previous.sum();
    let (s1, s2) = ((1.0 - theta) * mass, theta * mass);
    if previous[1] < s2 {
        next[1] > s2 + tau || next[0] < s1 - tau
    } else if previous[1] > s2 {
        next[1] < s2 - tau || next[0] > s1 + tau
    } else {
        false
    }
}

fn overshoots_with<P: Propagator + ?Sized>(
    propagator: &P,
    problem: &TestProblem,
    system: &PdsSystem,
    probe: &OvershootProbe,
    dt: f64,
) -> Result<bool> {
    let mut y = probe.initial_state();
    let tau = CROSSING_TOLERANCE * y.sum();
    for _ in 0..probe.n_steps {
        let next = propagator.advance(problem, system, dt, &y)?;
        if crosses(&y, &next, probe.theta, tau) {
            return Ok(true);
        }
        y = next;
    }
    Ok(false)
}

/// Whether any of the probe's steps crosses the steady state.
pub fn overshoots<P: Propagator + ?Sized>(propagator: &P, probe: &OvershootProbe, dt: f64) -> Result<bool> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    let problem = TestProblem::new(probe.theta)?;
    overshoots_with(propagator, &problem, &problem.as_pds(), probe, dt)
}

/// How the `eps` values of each `theta` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "values")]
pub enum EpsGrid {
    /// Ratio-based probes on both sides of `theta` (see [`DEFAULT_EPS_RATIOS`]).
    Default,
    /// The same explicit list for every `theta`.
    List(Vec<f64>),
}

impl EpsGrid {
    /// Unit-mass initial states for one `theta`, outside the exclusion band.
    pub fn initial_states(&self, theta: f64) -> Vec<[f64; 2]> {
        let raw: Vec<[f64; 2]> = match self {
            EpsGrid::Default => DEFAULT_EPS_RATIOS
                .iter()
                .map(|r| [1.0 - theta * r, theta * r])
                .chain(DEFAULT_EPS_RATIOS.iter().map(|r| [(1.0 - theta) * r, 1.0 - (1.0 - theta) * r]))
                .collect(),
            EpsGrid::List(v) => v.iter().map(|&e| [1.0 - e, e]).collect(),
        };
        raw.into_iter()
            .filter(|y| y[0] > 0.0 && y[1] > 0.0 && (y[1] - theta).abs() >= EXCLUSION_BAND)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub theta_grid: Vec<f64>,
    pub eps_grid: EpsGrid,
    pub n_steps: usize,
    pub dt_max: f64,
    /// Also compute the long-run bound with [`MULTISTEP_STEPS`] steps.
    pub multistep: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            theta_grid: DEFAULT_THETAS.to_vec(),
            eps_grid: EpsGrid::Default,
            n_steps: 1,
            dt_max: DEFAULT_DT_MAX,
            multistep: false,
        }
    }
}

impl SweepConfig {
    fn validate(&self) -> Result<()> {
        if self.theta_grid.is_empty() {
            return Err(Error::InvalidParameter("empty theta grid".into()));
        }
        if let Some(t) = self.theta_grid.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::InvalidParameter(format!("theta {t} not in (0, 1)")));
        }
        if let EpsGrid::List(v) = &self.eps_grid {
            if v.is_empty() {
                return Err(Error::InvalidParameter("empty epsilon grid".into()));
            }
            if let Some(e) = v.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                return Err(Error::InvalidParameter(format!("epsilon {e} not in (0, 1)")));
            }
        }
        if !(self.dt_max > DT_START && self.dt_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt_max = {} must exceed {DT_START}",
                self.dt_max
            )));
        }
        if self.n_steps < 1 {
            return Err(Error::InvalidParameter("n_steps must be >= 1".into()));
        }
        Ok(())
    }

    fn probes(&self) -> Vec<(f64, [f64; 2])> {
        self.theta_grid
            .iter()
            .flat_map(|&t| self.eps_grid.initial_states(t).into_iter().map(move |y| (t, y)))
            .collect()
    }
}

/// Smallest overshooting `dt` for one probe: doubling from [`DT_START`] to
/// `dt_max`, then bisection to [`DT_TOLERANCE`]. Returns the upper end of the
/// final bracket, or `None` if nothing below `dt_max` overshoots.
pub fn probe_threshold<P: Propagator + ?Sized>(
    propagator: &P,
    probe: &OvershootProbe,
    dt_max: f64,
) -> Result<Option<f64>> {
    let problem = TestProblem::new(probe.theta)?;
    let system = problem.as_pds();
    let flags = |dt: f64| overshoots_with(propagator, &problem, &system, probe, dt);

    let mut lo = 0.0;
    let mut hi = DT_START;
    while !flags(hi)? {
        if hi >= dt_max {
            return Ok(None);
        }
        lo = hi;
        hi = (2.0 * hi).min(dt_max);
    }
    while hi - lo > DT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if flags(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridMinimum {
    pub dt0: Bound,
    /// `(theta, eps)` attaining the minimum.
    pub argmin: Option<(f64, f64)>,
}

/// Minimum of [`probe_threshold`] over the grid. Ties go to the
/// lexicographically smallest `(theta, eps)`.
pub fn grid_minimum<P: Propagator + ?Sized>(
    propagator: &P,
    config: &SweepConfig,
    n_steps: usize,
) -> Result<GridMinimum> {
    config.validate()?;
    let results: Vec<Result<Option<(f64, f64, f64)>>> = config
        .probes()
        .into_par_iter()
        .map(|(theta, initial)| {
            let epsilon = initial[1];
            let wrap = |e: Error| Error::GridPoint {
                theta,
                epsilon,
                source: Box::new(e),
            };
            let probe = OvershootProbe::from_state(theta, initial, n_steps).map_err(wrap)?;
            Ok(probe_threshold(propagator, &probe, config.dt_max)
                .map_err(wrap)?
                .map(|dt| (dt, theta, epsilon)))
        })
        .collect();
    let mut best: Option<(f64, f64, f64)> = None;
    for r in results {
        if let Some(c) = r? {
            let better = match best {
                None => true,
                Some(b) => (c.0, c.1, c.2) < (b.0, b.1, b.2),
            };
            if better {
                best = Some(c);
            }
        }
    }
    Ok(match best {
        Some((dt, t, e)) => GridMinimum {
            dt0: Bound::Finite(dt),
            argmin: Some((t, e)),
        },
        None => GridMinimum {
            dt0: Bound::Infinite,
            argmin: None,
        },
    })
}

/// Preferred stability evaluator: catalog rational, then recurrence, then
/// the Jacobian oracle.
pub fn default_evaluator(scheme: &Scheme) -> Result<StabilityEvaluator> {
    if closed_form(scheme).is_ok() {
        StabilityEvaluator::new(scheme.clone(), EvalMode::Closed)
    } else if matches!(scheme, Scheme::MpDec { .. }) {
        StabilityEvaluator::new(scheme.clone(), EvalMode::Recurrence)
    } else {
        StabilityEvaluator::new(scheme.clone(), EvalMode::jacobian_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub scheme: Scheme,
    pub numerical_dt0: Bound,
    pub numerical_argmin: Option<(f64, f64)>,
    pub lyapunov_dt0: Bound,
    pub lyapunov: LyapunovBound,
    /// Long-run crossing bound over [`MULTISTEP_STEPS`] steps, when requested.
    pub multistep_dt0: Option<Bound>,
    pub n_steps: usize,
    pub theta_grid: Vec<f64>,
    pub eps_grid: EpsGrid,
    pub dt_max: f64,
    pub dt_tolerance: f64,
    pub crossing_tolerance: f64,
    pub exclusion_band: f64,
    pub scan_limit: f64,
}

/// Numerical and Lyapunov bounds of one scheme.
pub fn numerical_dt0(scheme: &Scheme, config: &SweepConfig) -> Result<BoundReport> {
    if !scheme.has_step_map() {
        return Err(Error::Unimplemented(scheme.to_string()));
    }
    let primary = grid_minimum(scheme, config, config.n_steps)?;
    let multistep = if config.multistep {
        Some(grid_minimum(scheme, config, MULTISTEP_STEPS)?.dt0)
    } else {
        None
    };
    let lyapunov = lyapunov_dt0(&default_evaluator(scheme)?, DEFAULT_SCAN_LIMIT)?;
    Ok(BoundReport {
        scheme: scheme.clone(),
        numerical_dt0: primary.dt0,
        numerical_argmin: primary.argmin,
        lyapunov_dt0: lyapunov.dt0,
        lyapunov,
        multistep_dt0: multistep,
        n_steps: config.n_steps,
        theta_grid: config.theta_grid.clone(),
        eps_grid: config.eps_grid.clone(),
        dt_max: config.dt_max,
        dt_tolerance: DT_TOLERANCE,
        crossing_tolerance: CROSSING_TOLERANCE,
        exclusion_band: EXCLUSION_BAND,
        scan_limit: DEFAULT_SCAN_LIMIT,
    })
}

/// Threshold below which `R` counts as clearly negative.
pub const NEGATIVE_R_MARGIN: f64 = 1e-3;
/// Number of halvings toward `theta` tried by [`verify_theorem1`].
pub const THEOREM_SEARCH_DEPTH: u32 = 40;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub k: u32,
    pub epsilon: f64,
    /// `None` when the probe fell inside the exclusion band.
    pub y2_after: Option<f64>,
    pub overshoot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum TheoremCheck {
    Pass { epsilon: f64, k: u32, r: f64 },
    Counterexample { r: f64, trace: Vec<TraceEntry> },
}

impl TheoremCheck {
    pub fn passed(&self) -> bool {
        matches!(self, TheoremCheck::Pass { .. })
    }
}

/// Looks for a first-step overshoot at `eps = theta (1 -+ 2^-k)`,
/// `k = 1..40`, when the stability function is negative at `dt`.
pub fn verify_theorem1(scheme: &Scheme, theta: f64, dt: f64) -> Result<TheoremCheck> {
    let r = jacobian_r(scheme, theta, dt, DEFAULT_FD_STEP)?;
    if !(r < -NEGATIVE_R_MARGIN) {
        return Err(Error::Precondition(format!(
            "R(-{dt}) = {r} is not below -{NEGATIVE_R_MARGIN}"
        )));
    }
    let problem = TestProblem::new(theta)?;
    let system = problem.as_pds();
    let ctx = StepContext::new(&system, dt)?;
    let mut trace = Vec::new();
    for k in 1..=THEOREM_SEARCH_DEPTH {
        let offset = theta * 0.5f64.powi(k as i32);
        for epsilon in [theta - offset, theta + offset] {
            if !(epsilon > 0.0 && epsilon < 1.0) {
                continue;
            }
            if offset < EXCLUSION_BAND {
                trace.push(TraceEntry {
                    k,
                    epsilon,
                    y2_after: None,
                    overshoot: false,
                });
                continue;
            }
            let y0 = problem.initial_state(epsilon);
            let y1 = step(scheme, &ctx, &y0)?;
            let overshoot = crosses(&y0, &y1, theta, CROSSING_TOLERANCE * y0.sum());
            trace.push(TraceEntry {
                k,
                epsilon,
                y2_after: Some(y1[1]),
                overshoot,
            });
            if overshoot {
                return Ok(TheoremCheck::Pass { epsilon, k, r });
            }
        }
    }
    Ok(TheoremCheck::Counterexample { r, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mprk22_one() -> Scheme {
        Scheme::mprk22(1.0).unwrap()
    }

    #[test]
    fn small_step_does_not_overshoot() {
        let probe = OvershootProbe::new(0.3, 0.01, 1).unwrap();
        assert!(!overshoots(&mprk22_one(), &probe, 0.1).unwrap());
    }

    #[test]
    fn large_step_overshoots() {
        let probe = OvershootProbe::new(0.3, 0.01, 1).unwrap();
        assert!(overshoots(&mprk22_one(), &probe, 3.0).unwrap());
    }

    #[test]
    fn probe_validation() {
        assert!(OvershootProbe::new(0.3, 0.3, 1).is_err());
        assert!(OvershootProbe::new(0.3, 0.3 + 1e-7, 1).is_err());
        assert!(OvershootProbe::new(0.3, 0.0, 1).is_err());
        assert!(OvershootProbe::new(1.0, 0.5, 1).is_err());
        assert!(OvershootProbe::new(0.3, 0.5, 0).is_err());
    }

    #[test]
    fn exact_flow_never_overshoots() {
        for theta in [0.01, 0.3, 0.9] {
            for y0 in EpsGrid::Default.initial_states(theta) {
                let probe = OvershootProbe::from_state(theta, y0, 5).unwrap();
                for dt in [0.01, 1.0, 50.0, 1e3] {
                    assert!(!overshoots(&ExactFlow, &probe, dt).unwrap());
                }
            }
        }
    }

    #[test]
    fn default_eps_grid_stays_inside_unit_interval() {
        for theta in DEFAULT_THETAS {
            let states = EpsGrid::Default.initial_states(theta);
            assert_eq!(states.len(), 2 * DEFAULT_EPS_RATIOS.len());
            assert!(states.iter().all(|y| y[0] > 0.0 && y[1] > 0.0));
            assert_eq!(states.iter().filter(|y| y[1] < theta).count(), DEFAULT_EPS_RATIOS.len());
        }
        let list = EpsGrid::List(vec![0.3, 0.2, 0.9]).initial_states(0.3);
        assert_eq!(list, vec![[0.8, 0.2], [1.0 - 0.9, 0.9]]);
    }

    #[test]
    fn threshold_of_patankar_euler_is_unbounded() {
        let scheme = Scheme::mpdec(1, crate::subtimesteps::NodeFamily::Equispaced).unwrap();
        let probe = OvershootProbe::new(0.3, 0.01, 1).unwrap();
        assert_eq!(probe_threshold(&scheme, &probe, 100.0).unwrap(), None);
    }

    #[test]
    fn threshold_bracket() {
        let probe = OvershootProbe::new(0.3, 0.01, 1).unwrap();
        let t = probe_threshold(&mprk22_one(), &probe, 100.0).unwrap().unwrap();
        assert!(overshoots(&mprk22_one(), &probe, t).unwrap());
        assert!(!overshoots(&mprk22_one(), &probe, t - DT_TOLERANCE).unwrap());
    }

    #[test]
    fn theorem_precondition_enforced() {
        let err = verify_theorem1(&mprk22_one(), 0.3, 0.5).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn theorem_holds_for_mprk22_beyond_bound() {
        let check = verify_theorem1(&mprk22_one(), 0.3, 3.0).unwrap();
        assert!(check.passed(), "{check:?}");
    }

    #[test]
    fn sweep_config_validation() {
        let scheme = mprk22_one();
        let mut cfg = SweepConfig {
            theta_grid: vec![],
            ..SweepConfig::default()
        };
        assert!(grid_minimum(&scheme, &cfg, 1).is_err());
        cfg.theta_grid = vec![0.5];
        cfg.eps_grid = EpsGrid::List(vec![]);
        assert!(grid_minimum(&scheme, &cfg, 1).is_err());
        cfg.eps_grid = EpsGrid::List(vec![0.1]);
        cfg.dt_max = 0.0;
        assert!(grid_minimum(&scheme, &cfg, 1).is_err());
    }

    #[test]
    fn unimplemented_scheme_has_no_numerical_bound() {
        let err = numerical_dt0(&Scheme::SspMprk43, &SweepConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Unimplemented(_)));
    }
}
