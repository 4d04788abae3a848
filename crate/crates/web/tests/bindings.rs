//! The JSON entry points behind the browser bindings.

use hjb_web::{certification, curves, xstar_sweep, Certification, Curves, Sweep};

const INPUT: &str = r#"{"mu": 0.07, "sigma": 0.2, "delta": 0.1, "risk_aversion": 0.5,
                       "utility": "consumption", "cap": 1.0, "n": 400}"#;

#[test]
fn curves_have_a_free_boundary() {
    let c: Curves = serde_json::from_str(&curves(INPUT).unwrap()).unwrap();
    assert_eq!(c.x.len(), 401);
    let xstar = c.xstar.unwrap();
    assert!((0.3..0.5).contains(&xstar));
    for i in 0..c.x.len() {
        assert_eq!(c.constrained[i], c.x[i] > xstar, "node {i}");
        assert!(c.pi[i] <= 1.0);
    }
}

#[test]
fn wealth_only_certifies_with_one_sign_change() {
    let input = INPUT.replace("\"consumption\"", "\"wealth\"");
    let c: Certification = serde_json::from_str(&certification(&input).unwrap()).unwrap();
    assert!(c.certified);
    assert_eq!(c.sign_pattern, "PositiveToNegative");
    assert_eq!(c.m_sign_changes.len(), 1);
    assert!((c.m_sign_changes[0] - 0.04 * 0.5 / 0.07).abs() < 0.01);
}

#[test]
fn sweep_is_increasing_in_the_cap() {
    let s: Sweep = serde_json::from_str(&xstar_sweep(INPUT, 0.5, 2.0, 4).unwrap()).unwrap();
    assert_eq!(s.cap.len(), 4);
    assert!((s.cap[3] - 2.0).abs() < 1e-12);
    let xs: Vec<f64> = s.xstar.iter().map(|x| x.unwrap()).collect();
    assert!(xs.windows(2).all(|w| w[1] > w[0]), "{xs:?}");
}

#[test]
fn bad_input_is_reported() {
    assert!(curves("{}").unwrap_err().contains("bad parameters"));
    let ill = INPUT.replace("\"delta\": 0.1", "\"delta\": 0.01");
    assert!(curves(&ill).is_err());
    assert!(xstar_sweep(INPUT, -1.0, 2.0, 3).is_err());
}
