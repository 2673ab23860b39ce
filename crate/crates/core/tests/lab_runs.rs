use boasbuck::lab::{
    emit_csv, read_csv, run_uniform_convergence, run_weighted_convergence, CheckKind, CheckSpec, ExperimentSpec, Lab,
};
use boasbuck::moments::operator_mu2;
use boasbuck::operators::OperatorKind;
use boasbuck::BoasBuckSystem;

fn spec() -> ExperimentSpec {
    let mut s = ExperimentSpec::new("builtin:exp1");
    s.n_grid = vec![10, 40, 160];
    s.x_grid = vec![0.5, 2.0];
    s
}

#[test]
fn three_by_two_grid_gives_six_rows() {
    let mut s = spec();
    s.checks = vec![CheckSpec {
        functions: Some(vec!["exp_neg".into()]),
        ..CheckSpec::new(CheckKind::Uniform)
    }];
    let res = run_uniform_convergence(&s).unwrap();
    assert_eq!(res.rows.len(), 6);
    assert!(res.rows.iter().all(|r| r.abs_err.unwrap() >= 0.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.csv");
    emit_csv(&res, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("experiment,system,fn,n,x,op_value,f_value,abs_err,bound_value,ratio,note\n"));
    let back = read_csv(&path).unwrap();
    for (a, b) in back.iter().zip(&res.rows) {
        assert!((a.abs_err.unwrap() - b.abs_err.unwrap()).abs() <= 1e-9);
    }
}

#[test]
fn square_error_is_the_second_central_moment() {
    let mut s = ExperimentSpec::new("builtin:exp1");
    s.checks = vec![CheckSpec {
        functions: Some(vec!["s2".into()]),
        ..CheckSpec::new(CheckKind::Uniform)
    }];
    let res = run_uniform_convergence(&s).unwrap();
    let sys = BoasBuckSystem::exp1();
    for r in &res.rows {
        let mu2 = operator_mu2(&sys, OperatorKind::Durrmeyer, r.n, r.x).unwrap();
        assert!((r.abs_err.unwrap() - mu2).abs() <= 1e-6, "n={} x={}", r.n, r.x);
    }
    let at41 = spec_at(41, 1.0);
    assert!((at41 - 0.1).abs() < 1e-9);
}

fn spec_at(n: u64, x: f64) -> f64 {
    let mut s = ExperimentSpec::new("builtin:exp1");
    s.n_grid = vec![n];
    s.x_grid = vec![x];
    s.checks = vec![CheckSpec {
        functions: Some(vec!["s2".into()]),
        ..CheckSpec::new(CheckKind::Uniform)
    }];
    run_uniform_convergence(&s).unwrap().rows[0].abs_err.unwrap()
}

#[test]
fn weighted_norms_on_exp2_and_szasz() {
    for (system, op) in [
        ("builtin:exp2", OperatorKind::Durrmeyer),
        ("builtin:exp1", OperatorKind::SzaszDurrmeyer),
    ] {
        let mut s = ExperimentSpec::new(system);
        s.operator = op;
        let res = run_weighted_convergence(&s).unwrap();
        let one: Vec<_> = res.rows_for("weighted", "one").collect();
        assert!(one.iter().all(|r| r.abs_err.unwrap() <= 1e-8));
        assert!(res.rows_for("weighted", "s2").all(|r| r.ratio.unwrap().is_finite()));
    }
}

#[test]
fn constant_function_degenerates_dt_ratios() {
    let mut s = spec();
    s.checks = vec![CheckSpec {
        functions: Some(vec!["one".into()]),
        gammas: Some(vec![0.5]),
        ..CheckSpec::new(CheckKind::Dt)
    }];
    let mut lab = Lab::new(s, None).unwrap();
    let res = lab.run().unwrap();
    assert!(res.rows.iter().all(|r| r.ratio.is_none() && r.note == "degenerate"));
}

#[test]
fn relative_system_path_resolves_against_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("sys")).unwrap();
    std::fs::write(
        dir.path().join("sys/exp1.json"),
        r#"{"xi_kind":"exp","s_coeffs":[1.0],"u_coeffs":[0.5],"sigma":2.0}"#,
    )
    .unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(
        &spec_path,
        r#"{"system":"sys/exp1.json","n_grid":[10,20],"x_grid":[1.0],"checks":[{"kind":"uniform","functions":["s"]}]}"#,
    )
    .unwrap();
    let mut lab = Lab::from_path(&spec_path).unwrap();
    assert_eq!(lab.system().name(), "exp1");
    let res = lab.run().unwrap();
    assert!(res.passed());
}

#[test]
fn unknown_function_is_an_error() {
    let mut s = spec();
    s.checks = vec![CheckSpec {
        functions: Some(vec!["nope".into()]),
        ..CheckSpec::new(CheckKind::Uniform)
    }];
    assert!(run_uniform_convergence(&s).is_err());
}
