use nalgebra::{Matrix2, Vector2};

/// `(I − αH)ᵗ w₀`, i.e. `t` gradient steps on `½wᵀHw`, computed in the
/// eigenbasis of `H` as `Σᵢ (1 − αλᵢ)ᵗ ⟨eᵢ, w₀⟩ eᵢ`. Only the lower triangle
/// of `h` is read.
pub fn near_saddle_iterate(h: &Matrix2<f64>, w0: Vector2<f64>, alpha: f64, t: u32) -> Vector2<f64> {
    if t == 0 {
        return w0;
    }
    let eig = h.symmetric_eigen();
    let q = eig.eigenvectors;
    let coeffs = q.transpose() * w0;
    let scaled = Vector2::new(
        coeffs[0] * (1.0 - alpha * eig.eigenvalues[0]).powi(t as i32),
        coeffs[1] * (1.0 - alpha * eig.eigenvalues[1]).powi(t as i32),
    );
    q * scaled
}

/// `w(t) = Q e^{−Λt} Qᵀ w₀`, the solution of `ẇ = −Hw`.
pub fn gradient_flow(h: &Matrix2<f64>, w0: Vector2<f64>, t: f64) -> Vector2<f64> {
    if t == 0.0 {
        return w0;
    }
    let eig = h.symmetric_eigen();
    let q = eig.eigenvectors;
    let coeffs = q.transpose() * w0;
    let scaled = Vector2::new(
        coeffs[0] * (-eig.eigenvalues[0] * t).exp(),
        coeffs[1] * (-eig.eigenvalues[1] * t).exp(),
    );
    q * scaled
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::assert_close;

    #[test]
    fn diagonal_examples() {
        let h = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        let w0 = Vector2::new(0.1, 0.1);
        assert_eq!(near_saddle_iterate(&h, w0, 0.2, 0), w0);
        let w = near_saddle_iterate(&h, w0, 0.2, 1);
        assert_close(w[0], 0.08, 1e-15);
        assert_close(w[1], 0.12, 1e-15);
        assert_eq!(gradient_flow(&h, w0, 0.0), w0);
        let w = gradient_flow(&h, w0, 2f64.ln());
        assert_close(w[0], 0.05, 1e-15);
        assert_close(w[1], 0.2, 1e-15);
    }

    #[test]
    fn iterate_matches_loop() {
        let h = Matrix2::new(0.3, 1.1, 1.1, -0.4);
        let w0 = Vector2::new(0.2, -0.05);
        let mut w = w0;
        for _ in 0..17 {
            w -= 0.15 * h * w;
        }
        let got = near_saddle_iterate(&h, w0, 0.15, 17);
        assert_close(got[0], w[0], 1e-12);
        assert_close(got[1], w[1], 1e-12);
    }
}
