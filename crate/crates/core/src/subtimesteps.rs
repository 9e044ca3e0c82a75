//! Subtimestep nodes on `[0, 1]` and the deferred-correction coefficient
//! matrices built from them.
//!
//! For nodes `0 = t^0 < ... < t^M = 1` with Lagrange basis `phi_r`, the
//! coefficient `theta[m][r]` is the integral of `phi_r` over `[0, t^m]`.
//! Row `m` is therefore a quadrature rule for `[0, t^m]` that is exact on
//! polynomials of degree `M`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum NodeFamily {
    /// `t^m = m / M`.
    Equispaced,
    /// Gauss-Lobatto points mapped to `[0, 1]`.
    GaussLobatto,
}

impl NodeFamily {
    pub fn tag(self) -> &'static str {
        match self {
            NodeFamily::Equispaced => "eq",
            NodeFamily::GaussLobatto => "gl",
        }
    }

    /// Number of subintervals `M` needed for order `p`:
    /// `max(p - 1, 1)` equispaced or `ceil(p / 2)` Gauss-Lobatto.
    pub fn subinterval_count(self, order: usize) -> usize {
        match self {
            NodeFamily::Equispaced => order.saturating_sub(1).max(1),
            NodeFamily::GaussLobatto => order.div_ceil(2).max(1),
        }
    }
}

impl fmt::Display for NodeFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for NodeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eq" => Ok(NodeFamily::Equispaced),
            "gl" => Ok(NodeFamily::GaussLobatto),
            other => Err(Error::InvalidParameter(format!(
                "unknown node family `{other}` (expected `eq` or `gl`)"
            ))),
        }
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
pub(crate) fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        // P'_k = P'_{k-2} + (2k - 1) P_{k-1}
        let dp_next = dp_prev + (2.0 * kf - 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

const NEWTON_TOL: f64 = 1e-14;
const NEWTON_MAX_ITER: usize = 100;

/// Gauss-Lobatto points on `[-1, 1]`: `+-1` and the roots of `P'_M`.
fn gauss_lobatto_reference(m: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..=m).map(|j| -(PI * j as f64 / m as f64).cos()).collect();
    x[0] = -1.0;
    x[m] = 1.0;
    let mf = m as f64;
    for xj in x.iter_mut().take(m).skip(1) {
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre_and_derivative(m, *xj);
            // Legendre ODE gives P''_M on the open interval.
            let d2p = (2.0 * *xj * dp - mf * (mf + 1.0) * p) / (1.0 - *xj * *xj);
            let delta = dp / d2p;
            *xj -= delta;
            if delta.abs() < NEWTON_TOL {
                break;
            }
        }
    }
    for j in 1..m {
        let k = m - j;
        if j < k {
            let half = 0.5 * (x[k] - x[j]);
            x[j] = -half;
            x[k] = half;
        } else if j == k {
            x[j] = 0.0;
        }
    }
    x
}

/// Gauss-Legendre rule with `n` points on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let delta = p / d;
            x -= delta;
            if delta.abs() < NEWTON_TOL {
                let (_, d) = legendre_and_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Subtimestep nodes `t^0 = 0 < ... < t^M = 1`.
pub fn nodes(family: NodeFamily, m: usize) -> Result<Vec<f64>> {
    if m < 1 {
        return Err(Error::InvalidParameter(format!(
            "need at least one subinterval, got M = {m}"
        )));
    }
    let mut t: Vec<f64> = match family {
        NodeFamily::Equispaced => (0..=m).map(|j| j as f64 / m as f64).collect(),
        NodeFamily::GaussLobatto => gauss_lobatto_reference(m)
            .into_iter()
            .map(|x| 0.5 * (x + 1.0))
            .collect(),
    };
    t[0] = 0.0;
    t[m] = 1.0;
    Ok(t)
}

fn lagrange_basis(nodes: &[f64], r: usize, s: f64) -> f64 {
    nodes
        .iter()
        .enumerate()
        .filter(|&(q, _)| q != r)
        .map(|(_, &tq)| (s - tq) / (nodes[r] - tq))
        .product()
}

/// `theta[m][r]` together with the node set and iteration count of an
/// MPDeC scheme of order `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaMatrix {
    order: usize,
    family: NodeFamily,
    iterations: usize,
    nodes: Vec<f64>,
    /// `M` rows of `M + 1` entries; row `m - 1` belongs to node `t^m`.
    rows: Vec<Vec<f64>>,
}

impl ThetaMatrix {
    fn build(order: usize, family: NodeFamily) -> Result<Self> {
        let m = family.subinterval_count(order);
        let t = nodes(family, m)?;
        let (gx, gw) = gauss_legendre(m + 1);
        let rows = (1..=m)
            .map(|row| {
                let half = 0.5 * t[row];
                (0..=m)
                    .map(|r| {
                        half * gx
                            .iter()
                            .zip(&gw)
                            .map(|(&x, &w)| w * lagrange_basis(&t, r, half * (x + 1.0)))
                            .sum::<f64>()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            order,
            family,
            iterations: order,
            nodes: t,
            rows,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    /// Number of correction sweeps `K`.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Number of subintervals `M`.
    pub fn subintervals(&self) -> usize {
        self.rows.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Row for node `t^m`, `m` in `1..=M`.
    pub fn row(&self, m: usize) -> &[f64] {
        &self.rows[m - 1]
    }

    /// `theta_r^m` for `m` in `1..=M`, `r` in `0..=M`.
    pub fn get(&self, m: usize, r: usize) -> f64 {
        self.rows[m - 1][r]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.iter().map(Vec::as_slice)
    }
}

type ThetaCache = RwLock<HashMap<(usize, NodeFamily), Arc<ThetaMatrix>>>;

fn cache() -> &'static ThetaCache {
    static CACHE: OnceLock<ThetaCache> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Coefficient matrix for MPDeC of order `p`, cached per `(p, family)`.
pub fn theta_matrix(order: usize, family: NodeFamily) -> Result<Arc<ThetaMatrix>> {
    if order < 1 {
        return Err(Error::InvalidParameter(format!(
            "order must be >= 1, got {order}"
        )));
    }
    let key = (order, family);
    if let Some(hit) = cache().read().expect("theta cache poisoned").get(&key) {
        return Ok(Arc::clone(hit));
    }
    let built = Arc::new(ThetaMatrix::build(order, family)?);
    let mut guard = cache().write().expect("theta cache poisoned");
    Ok(Arc::clone(guard.entry(key).or_insert(built)))
}

/// Splits `v` into `((v - |v|) / 2, (v + |v|) / 2)`.
pub fn split_theta(value: f64) -> (f64, f64) {
    let a = value.abs();
    (0.5 * (value - a), 0.5 * (value + a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_rows(tm: &ThetaMatrix, expected: &[&[f64]], tol: f64) {
        assert_eq!(tm.subintervals(), expected.len());
        for (m, row) in expected.iter().enumerate() {
            for (r, &want) in row.iter().enumerate() {
                let got = tm.get(m + 1, r);
                assert!((got - want).abs() < tol, "theta[{}][{r}] = {got}, want {want}", m + 1);
            }
        }
    }

    #[test]
    fn equispaced_and_lobatto_three_points() {
        assert_eq!(nodes(NodeFamily::Equispaced, 2).unwrap(), vec![0.0, 0.5, 1.0]);
        let gl = nodes(NodeFamily::GaussLobatto, 2).unwrap();
        assert_eq!(gl, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn lobatto_five_points() {
        let s = (3.0f64 / 7.0).sqrt();
        let want = [0.0, 0.5 * (1.0 - s), 0.5, 0.5 * (1.0 + s), 1.0];
        let got = nodes(NodeFamily::GaussLobatto, 4).unwrap();
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-15, "{g} vs {w}");
        }
    }

    #[test]
    fn rejects_empty_node_sets() {
        assert!(nodes(NodeFamily::Equispaced, 0).is_err());
        assert!(theta_matrix(0, NodeFamily::GaussLobatto).is_err());
    }

    #[test]
    fn subinterval_rule() {
        let eq: Vec<_> = (1..=9).map(|p| NodeFamily::Equispaced.subinterval_count(p)).collect();
        assert_eq!(eq, vec![1, 1, 2, 3, 4, 5, 6, 7, 8]);
        let gl: Vec<_> = (1..=9).map(|p| NodeFamily::GaussLobatto.subinterval_count(p)).collect();
        assert_eq!(gl, vec![1, 1, 2, 2, 3, 3, 4, 4, 5]);
    }

    #[test]
    fn low_order_matrices() {
        let t2 = theta_matrix(2, NodeFamily::Equispaced).unwrap();
        assert_rows(&t2, &[&[0.5, 0.5]], 1e-15);
        assert_eq!(t2.iterations(), 2);

        let t3 = theta_matrix(3, NodeFamily::Equispaced).unwrap();
        assert_rows(
            &t3,
            &[&[5.0 / 24.0, 1.0 / 3.0, -1.0 / 24.0], &[1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]],
            1e-15,
        );

        let t4 = theta_matrix(4, NodeFamily::Equispaced).unwrap();
        assert_rows(
            &t4,
            &[
                &[1.0 / 8.0, 19.0 / 72.0, -5.0 / 72.0, 1.0 / 72.0],
                &[1.0 / 9.0, 4.0 / 9.0, 1.0 / 9.0, 0.0],
                &[1.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0],
            ],
            1e-15,
        );
    }

    #[test]
    fn lobatto_order_four_reuses_order_three_matrix() {
        let a = theta_matrix(3, NodeFamily::GaussLobatto).unwrap();
        let b = theta_matrix(4, NodeFamily::GaussLobatto).unwrap();
        let c = theta_matrix(3, NodeFamily::Equispaced).unwrap();
        assert_eq!(a.rows, b.rows);
        for (ra, rc) in a.rows().zip(c.rows()) {
            for (x, y) in ra.iter().zip(rc) {
                assert!((x - y).abs() < 1e-13);
            }
        }
        assert_eq!(b.iterations(), 4);
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_theta(-1.0 / 24.0), (-1.0 / 24.0, 0.0));
        assert_eq!(split_theta(2.0 / 3.0), (0.0, 2.0 / 3.0));
        assert_eq!(split_theta(0.0), (0.0, 0.0));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for q in 0..2 * n {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(q as i32)).sum();
                let want = if q % 2 == 1 { 0.0 } else { 2.0 / (q as f64 + 1.0) };
                assert!((got - want).abs() < 1e-13, "n={n} q={q}: {got} vs {want}");
            }
        }
    }
}
