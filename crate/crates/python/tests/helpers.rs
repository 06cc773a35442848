use riesz_lab_py::{maximal_values, operator_adjoint_defect, rho_summary, run_toml_source};

#[test]
fn maximal_of_constant_is_constant() {
    let m = maximal_values(vec![3.0; 16], 1, 16, 4.0, "power:1", 1).unwrap();
    assert!(m.iter().all(|v| (v - 3.0).abs() < 1e-12));
}

#[test]
fn length_mismatch_is_an_error() {
    assert!(maximal_values(vec![1.0; 5], 1, 16, 4.0, "power:1", 0).is_err());
    assert!(maximal_values(vec![1.0; 16], 1, 16, 4.0, "nonsense", 0).is_err());
}

#[test]
fn rho_of_constant_potential_is_flat() {
    let r = rho_summary(vec![1.0; 512], 3, 8, 4.0, 3.0).unwrap();
    let first = r.rho[0];
    assert!(first > 0.0);
    assert!(r.rho.iter().all(|v| (v - first).abs() < 1e-12));
}

#[test]
fn schrodinger_adjoint_check_requires_potential() {
    assert!(operator_adjoint_defect("R1", 3, 8, 4.0, None, 4, 0).is_err());
    let d = operator_adjoint_defect("R1", 3, 8, 4.0, Some(vec![1.0; 512]), 4, 0).unwrap();
    assert!(d < 1e-9, "defect {d}");
}

#[test]
fn toml_source_runs() {
    let reports = run_toml_source("[grid]\ndim = 1\nn = 16\nside = 4.0\n[[task]]\nkind = \"grid-info\"\n", None, Some(1)).unwrap();
    assert_eq!(reports.len(), 1);
    assert!(run_toml_source("[grid]\ndim = 1\nn = 15\n", None, None).is_err());
}
