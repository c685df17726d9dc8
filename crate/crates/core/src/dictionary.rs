//! Row-orthonormalized measurement matrices and their projectors.
//!
//! Every other module consumes matrices only through [`Dictionary`]. The
//! dictionary owns the n×m matrix A with A·Aᵀ = I_n, the invertible row
//! transform G that produced it, and the two projectors the solver needs:
//! the orthogonal projection onto null(A) and the affine projection onto
//! {s : A·s = x}. An explicit orthonormal null-space basis D (with
//! A·Dᵀ = 0, D·Dᵀ = I) is materialized only on request and only at small m;
//! the solver always uses the D-free form g − Aᵀ(A·g), which equals DᵀD·g
//! and keeps memory at O(mn).

use crate::error::{Result, Sl0Error};
use crate::{Limits, ORTHO_TOL, RANK_TOL};
use nalgebra::{DMatrix, DVector};
use std::io::{BufRead, Write};

/// An n×m measurement matrix with orthonormal rows (m > n ≥ 1), together
/// with the transform applied during orthonormalization.
///
/// Immutable after construction; all operations are pure, so a dictionary
/// can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct Dictionary {
    a: DMatrix<f64>,
    transform: DMatrix<f64>,
    spectral_norm: f64,
}

impl Dictionary {
    /// Orthonormalize the rows of `raw` and transform `x_raw` consistently,
    /// so that {s : raw·s = x_raw} = {s : A·s = x}.
    ///
    /// The transform is G = R̃⁻ᵀ from a Householder QR of rawᵀ (sign-fixed
    /// so the triangular factor has a positive diagonal), i.e. a
    /// rank-revealing-checked left multiplication by a nonsingular matrix.
    /// Refuses with [`Sl0Error::RankDeficient`] when the smallest singular
    /// value of `raw` is below `RANK_TOL` times the largest.
    pub fn orthonormalize(
        raw: &DMatrix<f64>,
        x_raw: &DVector<f64>,
    ) -> Result<(Dictionary, DVector<f64>)> {
        let (n, m) = raw.shape();
        if n < 1 || m <= n {
            return Err(Sl0Error::InvalidParameter(format!(
                "need m > n >= 1, got n = {n}, m = {m}"
            )));
        }
        if x_raw.len() != n {
            return Err(Sl0Error::InvalidParameter(format!(
                "measurement length {} does not match n = {n}",
                x_raw.len()
            )));
        }
        let sv = raw.clone().singular_values();
        let (sv_max, sv_min) = (sv.max(), sv.min());
        if !(sv_min > RANK_TOL * sv_max) {
            return Err(Sl0Error::RankDeficient {
                ratio: sv_min / sv_max,
                cutoff: RANK_TOL,
            });
        }

        if max_gram_deviation(raw) <= 1e-12 {
            // Already orthonormal: keep the matrix bit-for-bit, G = I.
            let dict = Dictionary {
                a: raw.clone(),
                transform: DMatrix::identity(n, n),
                spectral_norm: spectral_norm_of_orthonormal(raw),
            };
            return Ok((dict, x_raw.clone()));
        }

        let qr = raw.transpose().qr();
        let mut q = qr.q();
        let mut r = qr.r();
        for i in 0..n {
            if r[(i, i)] < 0.0 {
                for j in 0..n {
                    r[(i, j)] = -r[(i, j)];
                }
                for j in 0..m {
                    q[(j, i)] = -q[(j, i)];
                }
            }
        }
        let a = q.transpose();
        // G = R̃⁻ᵀ, applied by a lower-triangular solve.
        let r_t = r.transpose();
        let transform = r_t
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(Sl0Error::RankDeficient {
                ratio: sv_min / sv_max,
                cutoff: RANK_TOL,
            })?;
        let x = r_t
            .solve_lower_triangular(x_raw)
            .expect("triangular factor invertible after rank gate");

        let dev = max_gram_deviation(&a);
        if dev > ORTHO_TOL {
            return Err(Sl0Error::NotOrthonormal { max_dev: dev });
        }
        let dict = Dictionary {
            spectral_norm: spectral_norm_of_orthonormal(&a),
            a,
            transform,
        };
        Ok((dict, x))
    }

    /// Wrap a matrix that already has orthonormal rows (G = I). Refuses if
    /// max |A·Aᵀ − I| exceeds `ORTHO_TOL`.
    pub fn from_orthonormal(a: DMatrix<f64>) -> Result<Dictionary> {
        let (n, m) = a.shape();
        if n < 1 || m <= n {
            return Err(Sl0Error::InvalidParameter(format!(
                "need m > n >= 1, got n = {n}, m = {m}"
            )));
        }
        let dev = max_gram_deviation(&a);
        if dev > ORTHO_TOL {
            return Err(Sl0Error::NotOrthonormal { max_dev: dev });
        }
        Ok(Dictionary {
            spectral_norm: spectral_norm_of_orthonormal(&a),
            transform: DMatrix::identity(n, n),
            a,
        })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// The invertible transform G with A = G·raw (identity if the input was
    /// already orthonormal).
    pub fn transform(&self) -> &DMatrix<f64> {
        &self.transform
    }

    /// Largest singular value of A; 1 to within `ORTHO_TOL` after
    /// orthonormalization.
    pub fn spectral_norm(&self) -> f64 {
        self.spectral_norm
    }

    /// Orthogonal projection of `g` onto null(A), computed D-free as
    /// g − Aᵀ(A·g).
    pub fn project_nullspace(&self, g: &DVector<f64>) -> DVector<f64> {
        g - self.a.transpose() * (&self.a * g)
    }

    /// Closest point to `s` in {z : A·z = x}: s − Aᵀ(A·s − x).
    pub fn project_feasible(&self, s: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        s - self.a.transpose() * (&self.a * s - x)
    }

    /// Minimum-Euclidean-norm solution of A·s = x, which for orthonormal
    /// rows is Aᵀx.
    pub fn min_norm_solution(&self, x: &DVector<f64>) -> DVector<f64> {
        self.a.transpose() * x
    }

    /// Explicit orthonormal basis of null(A) as an (m−n)×m matrix D with
    /// D·Dᵀ = I and A·Dᵀ = 0. Only available at m ≤ `limits.basis_cap`.
    pub fn nullspace_basis(&self, limits: &Limits) -> Result<DMatrix<f64>> {
        let (n, m) = self.a.shape();
        if m > limits.basis_cap {
            return Err(Sl0Error::CapExceeded {
                what: "null-space basis columns",
                required: m as u128,
                cap: limits.basis_cap as u128,
            });
        }
        // Eigenvectors of the null-space projector I − AᵀA with eigenvalue 1.
        let projector = DMatrix::identity(m, m) - self.a.transpose() * &self.a;
        let eig = projector.symmetric_eigen();
        let mut rows: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
        rows.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        if rows.len() != m - n {
            return Err(Sl0Error::NotOrthonormal {
                max_dev: max_gram_deviation(&self.a),
            });
        }
        let mut d = DMatrix::zeros(m - n, m);
        for (out_row, &col) in rows.iter().enumerate() {
            for i in 0..m {
                d[(out_row, i)] = eig.eigenvectors[(i, col)];
            }
        }
        Ok(d)
    }
}

fn max_gram_deviation(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let gram = a * a.transpose();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - target).abs());
        }
    }
    dev
}

/// Largest singular value of a row-orthonormal matrix via power iteration on
/// the n×n Gram matrix (exact value is 1; this reports the numeric one).
fn spectral_norm_of_orthonormal(a: &DMatrix<f64>) -> f64 {
    let gram = a * a.transpose();
    let n = gram.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..100 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let new_lambda = (&gram * &next).dot(&next);
        let done = (new_lambda - lambda).abs() <= 1e-14 * new_lambda.abs().max(1.0);
        v = next;
        lambda = new_lambda;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Write a matrix in the plain text interchange format: a `"n m"` header
/// line, then n lines of m space-separated decimal literals, LF endings.
pub fn write_matrix_text<W: Write>(matrix: &DMatrix<f64>, out: &mut W) -> Result<()> {
    writeln!(out, "{} {}", matrix.nrows(), matrix.ncols())?;
    for i in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols()).map(|j| format!("{}", matrix[(i, j)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Read a matrix in the text interchange format.
pub fn read_matrix_text<R: BufRead>(input: &mut R) -> Result<DMatrix<f64>> {
    let mut header = String::new();
    input.read_line(&mut header)?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Sl0Error::Format(format!(
            "header must be \"n m\", got {header:?}"
        )));
    }
    let n: usize = dims[0]
        .parse()
        .map_err(|e| Sl0Error::Format(format!("bad row count: {e}")))?;
    let m: usize = dims[1]
        .parse()
        .map_err(|e| Sl0Error::Format(format!("bad column count: {e}")))?;
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            return Err(Sl0Error::Format(format!("missing row {i}")));
        }
        let mut count = 0;
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|e| Sl0Error::Format(format!("row {i}: {e}")))?;
            data.push(v);
            count += 1;
        }
        if count != m {
            return Err(Sl0Error::Format(format!(
                "row {i} has {count} entries, expected {m}"
            )));
        }
    }
    Ok(DMatrix::from_row_slice(n, m, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::rng::{derive_rng, gaussian_matrix};
    use approx::assert_relative_eq;

    #[test]
    fn rescaled_rows_orthonormalize_to_identity_blocks() {
        let raw = DMatrix::from_row_slice(2, 3, &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        let x_raw = DVector::from_vec(vec![2.0, 4.0]);
        let (d, x) = Dictionary::orthonormalize(&raw, &x_raw).unwrap();
        let expected = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_relative_eq!(d.matrix(), &expected, epsilon = 1e-14);
        assert_relative_eq!(x, DVector::from_vec(vec![1.0, 2.0]), epsilon = 1e-14);
    }

    #[test]
    fn orthonormal_input_is_a_fixed_point() {
        let a = DMatrix::from_row_slice(
            2,
            4,
            &[
                0.5, 0.5, 0.5, 0.5, //
                0.5, -0.5, 0.5, -0.5,
            ],
        );
        let x_raw = DVector::from_vec(vec![1.0, -2.0]);
        let (d, x) = Dictionary::orthonormalize(&a, &x_raw).unwrap();
        assert_eq!(d.matrix(), &a);
        assert_eq!(x, x_raw);
        assert_eq!(d.transform(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn random_system_preserves_solution_set() {
        let mut rng = derive_rng(11, 0, 0);
        let raw = gaussian_matrix(4, 8, 0.25, &mut rng);
        let x_raw = DVector::from_fn(4, |i, _| (i as f64) - 1.5);
        let (d, x) = Dictionary::orthonormalize(&raw, &x_raw).unwrap();
        assert!(max_gram_deviation(d.matrix()) <= 1e-10);
        assert_relative_eq!(d.spectral_norm(), 1.0, epsilon = 1e-10);
        // feasible points of the new system solve the old one and vice versa
        for t in 0..100 {
            let mut r2 = derive_rng(11, 1, t);
            let g = DVector::from_fn(8, |_, _| rand::Rng::gen::<f64>(&mut r2) - 0.5);
            let s = d.project_feasible(&g, &x);
            assert!((&raw * &s - &x_raw).norm() <= 1e-9);
        }
    }

    #[test]
    fn rank_deficient_rows_are_refused() {
        let raw = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let x_raw = DVector::from_vec(vec![1.0, 2.0]);
        match Dictionary::orthonormalize(&raw, &x_raw) {
            Err(Sl0Error::RankDeficient { .. }) => {}
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn nullspace_projector_hand_value() {
        let a = DMatrix::from_row_slice(1, 2, &[std::f64::consts::FRAC_1_SQRT_2; 2]);
        let d = Dictionary::from_orthonormal(a).unwrap();
        let g = DVector::from_vec(vec![1.0, 0.0]);
        let p = d.project_nullspace(&g);
        assert_relative_eq!(p, DVector::from_vec(vec![0.5, -0.5]), epsilon = 1e-14);
        // row-space input projects to zero, null-space input is fixed
        let row = DVector::from_vec(vec![1.0, 1.0]);
        assert!(d.project_nullspace(&row).norm() <= 1e-12);
        assert_relative_eq!(d.project_nullspace(&p), p, epsilon = 1e-12);
    }

    #[test]
    fn feasible_projection_identities() {
        let mut rng = derive_rng(13, 0, 0);
        let raw = gaussian_matrix(3, 7, 1.0 / 3.0, &mut rng);
        let x_raw = DVector::from_vec(vec![0.3, -1.1, 2.0]);
        let (d, x) = Dictionary::orthonormalize(&raw, &x_raw).unwrap();
        let zero = DVector::zeros(7);
        let min_norm = d.project_feasible(&zero, &x);
        assert_relative_eq!(min_norm, d.min_norm_solution(&x), epsilon = 1e-12);
        let already = d.project_feasible(&min_norm, &x);
        assert_relative_eq!(already, min_norm, epsilon = 1e-12);
        let s = DVector::from_fn(7, |i, _| (i as f64).sin());
        let r = d.project_feasible(&s, &x);
        assert!((d.matrix() * &r - &x).norm() <= 1e-12 * x.norm().max(1.0));
    }

    #[test]
    fn nullspace_basis_identities_and_cap() {
        let a = DMatrix::from_row_slice(1, 2, &[std::f64::consts::FRAC_1_SQRT_2; 2]);
        let dict = Dictionary::from_orthonormal(a).unwrap();
        let d = dict.nullspace_basis(&Limits::default()).unwrap();
        assert_eq!(d.nrows(), 1);
        let expect = DVector::from_vec(vec![std::f64::consts::FRAC_1_SQRT_2, -std::f64::consts::FRAC_1_SQRT_2]);
        let got = DVector::from_vec(vec![d[(0, 0)], d[(0, 1)]]);
        assert!((got.clone() - &expect).norm() <= 1e-12 || (got + &expect).norm() <= 1e-12);

        let mut rng = derive_rng(17, 0, 0);
        let raw = gaussian_matrix(6, 12, 1.0 / 6.0, &mut rng);
        let (dict, _) = Dictionary::orthonormalize(&raw, &DVector::zeros(6)).unwrap();
        let d = dict.nullspace_basis(&Limits::default()).unwrap();
        assert_eq!(d.nrows(), 6);
        assert!(max_dev(&(&d * d.transpose()), true) <= 1e-10);
        assert!((dict.matrix() * d.transpose()).amax() <= 1e-10);
        // completion: AᵀA + DᵀD = I
        let completion = dict.matrix().transpose() * dict.matrix() + d.transpose() * &d;
        assert!(max_dev(&completion, true) <= 1e-9);
        // norm formula: null-space vectors keep their norm through D
        for t in 0..20 {
            let mut r2 = derive_rng(17, 2, t);
            let g = DVector::from_fn(12, |_, _| rand::Rng::gen::<f64>(&mut r2) - 0.5);
            let s = dict.project_nullspace(&g);
            assert_relative_eq!((&d * &s).norm(), s.norm(), epsilon = 1e-10);
        }

        let tight = Limits { basis_cap: 8, ..Limits::default() };
        assert!(matches!(
            dict.nullspace_basis(&tight),
            Err(Sl0Error::CapExceeded { .. })
        ));
    }

    fn max_dev(m: &DMatrix<f64>, identity: bool) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let target = if identity && i == j { 1.0 } else { 0.0 };
                dev = dev.max((m[(i, j)] - target).abs());
            }
        }
        dev
    }

    #[test]
    fn matrix_text_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.5, -2.25e-7, 0.0, 3.0, 4.0, -5.5]);
        let mut buf = Vec::new();
        write_matrix_text(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("2 3\n"));
        let back = read_matrix_text(&mut &buf[..]).unwrap();
        assert_eq!(back, m);
    }
}
