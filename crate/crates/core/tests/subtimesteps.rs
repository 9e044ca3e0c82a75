use patankar_lab::subtimesteps::{nodes, theta_matrix};
use patankar_lab::NodeFamily;

const FAMILIES: [NodeFamily; 2] = [NodeFamily::Equispaced, NodeFamily::GaussLobatto];

#[test]
fn rows_integrate_polynomials_exactly() {
    for family in FAMILIES {
        for p in 1..=9 {
            let theta = theta_matrix(p, family).unwrap();
            let t = theta.nodes();
            let m_count = theta.subintervals();
            for m in 1..=m_count {
                let row = theta.row(m);
                let sum: f64 = row.iter().sum();
                assert!((sum - t[m]).abs() < 1e-13, "{family} p={p} row {m} sums to {sum}");
                for q in 0..=m_count {
                    let quad: f64 = row.iter().zip(t).map(|(w, x)| w * x.powi(q as i32)).sum();
                    let exact = t[m].powi(q as i32 + 1) / (q as f64 + 1.0);
                    assert!((quad - exact).abs() < 1e-12, "{family} p={p} m={m} q={q}");
                }
            }
        }
    }
}

#[test]
fn lobatto_last_row_is_a_high_order_quadrature() {
    // Lobatto quadrature with M + 1 nodes integrates degree 2M - 1 exactly.
    for m_count in 1..=5 {
        let p = 2 * m_count;
        let theta = theta_matrix(p, NodeFamily::GaussLobatto).unwrap();
        assert_eq!(theta.subintervals(), m_count);
        let last = theta.row(m_count);
        for q in 0..2 * m_count {
            let quad: f64 = last.iter().zip(theta.nodes()).map(|(w, x)| w * x.powi(q as i32)).sum();
            assert!((quad - 1.0 / (q as f64 + 1.0)).abs() < 1e-12, "M={m_count} q={q}");
        }
    }
}

#[test]
fn lobatto_nodes_are_symmetric_and_increasing() {
    for m_count in 1..=6 {
        let t = nodes(NodeFamily::GaussLobatto, m_count).unwrap();
        assert_eq!(t.len(), m_count + 1);
        assert_eq!((t[0], t[m_count]), (0.0, 1.0));
        for k in 0..=m_count {
            assert!((t[k] + t[m_count - k] - 1.0).abs() < 1e-15);
        }
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }
    let t = nodes(NodeFamily::GaussLobatto, 3).unwrap();
    let inner = 0.5 - 0.5 / 5f64.sqrt();
    assert!((t[1] - inner).abs() < 1e-15);
}

#[test]
fn order_three_tables_coincide() {
    let eq = theta_matrix(3, NodeFamily::Equispaced).unwrap();
    let gl = theta_matrix(3, NodeFamily::GaussLobatto).unwrap();
    for (a, b) in eq.rows().zip(gl.rows()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-13);
        }
    }
    let expected = [[5.0 / 24.0, 1.0 / 3.0, -1.0 / 24.0], [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]];
    for (row, exp) in eq.rows().zip(expected) {
        for (x, y) in row.iter().zip(exp) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}

#[test]
fn subinterval_counts() {
    let eq: Vec<usize> = (1..=9).map(|p| NodeFamily::Equispaced.subinterval_count(p)).collect();
    let gl: Vec<usize> = (1..=9).map(|p| NodeFamily::GaussLobatto.subinterval_count(p)).collect();
    assert_eq!(eq, vec![1, 1, 2, 3, 4, 5, 6, 7, 8]);
    assert_eq!(gl, vec![1, 1, 2, 2, 3, 3, 4, 4, 5]);
}

#[test]
fn iterations_equal_order() {
    for family in FAMILIES {
        for p in 1..=9 {
            assert_eq!(theta_matrix(p, family).unwrap().iterations(), p);
        }
    }
    assert!(theta_matrix(0, NodeFamily::Equispaced).is_err());
}
