//! Shared helpers for unit tests.

#[track_caller]
pub fn assert_close(a: f64, b: f64, tol: f64) {
    assert!(
        (a - b).abs() <= tol,
        "{a} vs {b}: |diff| = {} exceeds {tol}",
        (a - b).abs()
    );
}
