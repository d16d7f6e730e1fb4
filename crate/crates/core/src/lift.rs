//! Real-valued reformulations of the two complex blocks.
//!
//! The RIS vector is stacked as `alpha = [Re f; Im f]`, so that
//! `|w_k^H H_k f / sigma|^2 = alpha^T B_k alpha`. Each receive vector is
//! stacked as `beta_k = [Re w_k; Im w_k]` with
//! `|w_k^H H_k f / sigma|^2 = beta_k^T D_k beta_k`, and `beta_k` is in turn
//! parameterized by `2N - 1` spherical angles so that the unit-norm
//! constraint holds by construction:
//!
//! ```text
//! beta_1      = sin t_1
//! beta_2      = cos t_1 sin t_2
//! ...
//! beta_{2N-1} = cos t_1 ... cos t_{2N-2} sin t_{2N-1}
//! beta_{2N}   = cos t_1 ... cos t_{2N-2} cos t_{2N-1}
//! ```

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelSet;
use crate::system::{BeamformerSet, RisVector, AMPLITUDE_TOL};
use crate::{Error, Result, C64};

/// `[Re f; Im f]`, length `2M`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaLift(DVector<f64>);

impl AlphaLift {
    pub fn new(alpha: DVector<f64>) -> Result<Self> {
        if alpha.len() % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "alpha has odd length {}",
                alpha.len()
            )));
        }
        let lifted = Self(alpha);
        if let Some(m) = (0..lifted.elements()).find(|&m| lifted.pair_norm(m) > 1.0 + AMPLITUDE_TOL) {
            return Err(Error::InvalidInput(format!(
                "alpha pair {m} has norm {}",
                lifted.pair_norm(m)
            )));
        }
        Ok(lifted)
    }

    pub fn from_raw(alpha: DVector<f64>) -> Self {
        Self(alpha)
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn elements(&self) -> usize {
        self.0.len() / 2
    }

    /// `||(alpha_m, alpha_{M+m})||`, equal to `|f_m|`.
    pub fn pair_norm(&self, m: usize) -> f64 {
        let half = self.elements();
        self.0[m].hypot(self.0[half + m])
    }
}

pub fn lift_f(f: &RisVector) -> AlphaLift {
    let v = f.as_vector();
    let m = v.len();
    AlphaLift(DVector::from_fn(2 * m, |i, _| if i < m { v[i].re } else { v[i - m].im }))
}

pub fn unlift_alpha(alpha: &AlphaLift) -> Result<RisVector> {
    if alpha.0.len() % 2 != 0 {
        return Err(Error::DimensionMismatch("alpha has odd length".into()));
    }
    let m = alpha.elements();
    Ok(RisVector::from_raw(DVector::from_fn(m, |i, _| {
        C64::new(alpha.0[i], alpha.0[m + i])
    })))
}

/// `[[Re c, -Im c], [Im c, Re c]]` for a complex row `c`; `A x = [Re(c z); Im(c z)]`
/// when `x = [Re z; Im z]`.
fn real_block(row: &[C64]) -> DMatrix<f64> {
    let n = row.len();
    DMatrix::from_fn(2, 2 * n, |r, col| {
        let (j, second_half) = if col < n { (col, false) } else { (col - n, true) };
        match (r, second_half) {
            (0, false) => row[j].re,
            (0, true) => -row[j].im,
            (1, false) => row[j].im,
            _ => row[j].re,
        }
    })
}

/// `B_k = A_k^T A_k` where `A_k` stacks the real and imaginary parts of
/// `w_k^H H_k / sigma_k`. Symmetric PSD of rank at most two.
pub fn build_b(k: usize, channels: &ChannelSet, w: &BeamformerSet, noise_power: f64) -> Result<DMatrix<f64>> {
    if k >= channels.num_users() || k >= w.len() {
        return Err(Error::InvalidInput(format!("user index {k} out of range")));
    }
    let h = &channels.h[k];
    if w.get(k).len() != h.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "beamformer {k} has {} entries, channel has {} rows",
            w.get(k).len(),
            h.nrows()
        )));
    }
    let sigma = noise_power.sqrt();
    let row: Vec<C64> = (w.get(k).adjoint() * h).iter().map(|z| z / sigma).collect();
    let a = real_block(&row);
    Ok(a.transpose() * a)
}

/// `D_k = C_k^T C_k` where `C_k` stacks the real and imaginary parts of
/// `f^H H_k^H / sigma_k`.
pub fn build_d(k: usize, channels: &ChannelSet, f: &RisVector, noise_power: f64) -> Result<DMatrix<f64>> {
    if k >= channels.num_users() {
        return Err(Error::InvalidInput(format!("user index {k} out of range")));
    }
    let h = &channels.h[k];
    if f.len() != h.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "f has {} entries, channel has {} columns",
            f.len(),
            h.ncols()
        )));
    }
    let sigma = noise_power.sqrt();
    let row: Vec<C64> = (h * f.as_vector()).iter().map(|z| z.conj() / sigma).collect();
    let c = real_block(&row);
    Ok(c.transpose() * c)
}

/// `[Re w; Im w]`.
pub fn lift_w(w: &DVector<C64>) -> DVector<f64> {
    let n = w.len();
    DVector::from_fn(2 * n, |i, _| if i < n { w[i].re } else { w[i - n].im })
}

pub fn unlift_beta(beta: &DVector<f64>) -> DVector<C64> {
    let n = beta.len() / 2;
    DVector::from_fn(n, |i, _| C64::new(beta[i], beta[n + i]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Factor {
    Sin,
    Cos,
    One,
}

impl Factor {
    fn eval(self, t: f64, order: u8) -> f64 {
        match (self, order) {
            (Factor::One, 0) => 1.0,
            (Factor::One, _) => 0.0,
            (Factor::Sin, 0) => t.sin(),
            (Factor::Sin, 1) => t.cos(),
            (Factor::Sin, _) => -t.sin(),
            (Factor::Cos, 0) => t.cos(),
            (Factor::Cos, 1) => -t.sin(),
            (Factor::Cos, _) => -t.cos(),
        }
    }
}

/// Which trig factor angle `m` contributes to component `n`.
fn factor(n: usize, m: usize, num_angles: usize) -> Factor {
    if n == num_angles || m < n {
        Factor::Cos
    } else if m == n {
        Factor::Sin
    } else {
        Factor::One
    }
}

/// Product over all angles with the given derivative orders.
fn cascade_term(theta: &[f64], n: usize, order: impl Fn(usize) -> u8) -> f64 {
    let l = theta.len();
    let mut acc = 1.0;
    for (m, &t) in theta.iter().enumerate() {
        let fac = factor(n, m, l);
        let o = order(m);
        if fac == Factor::One && o == 0 {
            continue;
        }
        acc *= fac.eval(t, o);
        if acc == 0.0 {
            break;
        }
    }
    acc
}

/// Unit vector in `R^{L+1}` from `L` spherical angles.
pub fn build_beta(theta: &[f64]) -> DVector<f64> {
    let l = theta.len();
    let mut beta = DVector::zeros(l + 1);
    let mut prefix = 1.0;
    for (n, &t) in theta.iter().enumerate() {
        beta[n] = prefix * t.sin();
        prefix *= t.cos();
    }
    beta[l] = prefix;
    beta
}

/// Inverse of [`build_beta`] for a unit vector. Angles are peeled off in
/// order; once the remaining tail norm drops below `1e-12` the rest are zero.
pub fn angles_from_beta(beta: &DVector<f64>) -> Vec<f64> {
    let dim = beta.len();
    assert!(dim >= 2, "beta needs at least two components");
    let l = dim - 1;
    let mut theta = vec![0.0; l];
    // tail[i] = ||beta[i..]||
    let mut tail = vec![0.0f64; dim + 1];
    for i in (0..dim).rev() {
        tail[i] = tail[i + 1].hypot(beta[i]);
    }
    for i in 0..l - 1 {
        if tail[i] < 1e-12 {
            return theta;
        }
        theta[i] = beta[i].atan2(tail[i + 1]);
    }
    if tail[l - 1] >= 1e-12 {
        theta[l - 1] = beta[l - 1].atan2(beta[l]);
    }
    theta
}

/// `J[n][i] = d beta_n / d theta_i`, shape `(L+1) x L`.
pub fn beta_jacobian(theta: &[f64]) -> DMatrix<f64> {
    let l = theta.len();
    DMatrix::from_fn(l + 1, l, |n, i| {
        if n < l && i > n {
            0.0
        } else {
            cascade_term(theta, n, |m| u8::from(m == i))
        }
    })
}

/// One `L x L` matrix per component: `out[n][(i, j)] = d^2 beta_n / d theta_i d theta_j`.
pub fn beta_second_partials(theta: &[f64]) -> Vec<DMatrix<f64>> {
    let l = theta.len();
    (0..=l)
        .map(|n| {
            let mut h = DMatrix::zeros(l, l);
            for i in 0..l {
                for j in i..l {
                    if n < l && j > n {
                        continue;
                    }
                    let v = cascade_term(theta, n, |m| u8::from(m == i) + u8::from(m == j));
                    h[(i, j)] = v;
                    h[(j, i)] = v;
                }
            }
            h
        })
        .collect()
}

/// `beta(theta)^T D beta(theta)`.
pub fn quadratic_value(theta: &[f64], d: &DMatrix<f64>) -> f64 {
    let beta = build_beta(theta);
    beta.dot(&(d * &beta))
}

fn check_square(theta: &[f64], d: &DMatrix<f64>) {
    assert!(
        d.nrows() == theta.len() + 1 && d.ncols() == theta.len() + 1,
        "D must be {0}x{0}",
        theta.len() + 1
    );
}

/// Gradient of `beta^T D beta` in angle space, written as the diagonal plus
/// upper-triangle expansion over the entries of `D`.
pub fn grad_f_quadratic(theta: &[f64], d: &DMatrix<f64>) -> DVector<f64> {
    check_square(theta, d);
    let l = theta.len();
    let beta = build_beta(theta);
    let jac = beta_jacobian(theta);
    DVector::from_fn(l, |i, _| {
        let mut g = 0.0;
        for n in 0..=l {
            g += d[(n, n)] * 2.0 * beta[n] * jac[(n, i)];
        }
        for n in 0..l {
            for m in n + 1..=l {
                g += 2.0 * d[(n, m)] * (jac[(n, i)] * beta[m] + beta[n] * jac[(m, i)]);
            }
        }
        g
    })
}

/// Hessian of `beta^T D beta` in angle space.
pub fn hessian_f_quadratic(theta: &[f64], d: &DMatrix<f64>) -> DMatrix<f64> {
    check_square(theta, d);
    let l = theta.len();
    let beta = build_beta(theta);
    let jac = beta_jacobian(theta);
    let sec = beta_second_partials(theta);
    let mut q = DMatrix::zeros(l, l);
    for i in 0..l {
        for j in i..l {
            let mut v = 0.0;
            for n in 0..=l {
                v += 2.0 * d[(n, n)] * (beta[n] * sec[n][(i, j)] + jac[(n, i)] * jac[(n, j)]);
            }
            for n in 0..l {
                for m in n + 1..=l {
                    v += 2.0
                        * d[(n, m)]
                        * (sec[n][(i, j)] * beta[m]
                            + jac[(n, i)] * jac[(m, j)]
                            + jac[(n, j)] * jac[(m, i)]
                            + beta[n] * sec[m][(i, j)]);
                }
            }
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    q
}

/// Curvature bound used by the beamformer surrogates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorizationConstant(pub f64);

impl MajorizationConstant {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `|4 sum_n d_nn + 8 sum_{n<l} d_nl| * (2N - 1)` for a `2N x 2N` matrix `D`.
pub fn majorization_delta(d: &DMatrix<f64>, user_antennas: usize) -> MajorizationConstant {
    let dim = d.nrows();
    debug_assert_eq!(dim, 2 * user_antennas);
    let diag: f64 = (0..dim).map(|n| d[(n, n)]).sum();
    let mut upper = 0.0;
    for n in 0..dim {
        for l in n + 1..dim {
            upper += d[(n, l)];
        }
    }
    MajorizationConstant((4.0 * diag + 8.0 * upper).abs() * (2 * user_antennas - 1) as f64)
}

/// `2 (L+1) lambda_max(D)`: bounds the spectral norm of the angle-space
/// Hessian for every `theta`, using `||J|| <= 1` and
/// `||d^2 beta / d theta_i d theta_j|| <= 1` for the spherical cascade.
pub fn certified_delta(d: &DMatrix<f64>) -> MajorizationConstant {
    let lmax = d
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b));
    MajorizationConstant(2.0 * d.nrows() as f64 * lmax)
}

/// The constant the beamformer subproblem uses: the closed-form sum bound,
/// raised to the certified bound when cancellation among the off-diagonal
/// entries of `D` makes the former too small.
pub fn effective_delta(d: &DMatrix<f64>, user_antennas: usize) -> MajorizationConstant {
    MajorizationConstant(
        majorization_delta(d, user_antennas)
            .value()
            .max(certified_delta(d).value()),
    )
}

/// Spherical angles for every user's receive vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalAngles {
    pub theta: Vec<Vec<f64>>,
}

impl SphericalAngles {
    /// Rotates each `w_k` so its last entry is `j |w_{k,N}|` (phase does not
    /// change any SINR), then extracts angles. The rotation keeps the last
    /// angle inside `[-pi/2, pi/2]`, away from the `+-pi` wrap.
    pub fn from_beamformers(w: &BeamformerSet) -> Self {
        let theta = w
            .vectors()
            .iter()
            .map(|wk| {
                let last = wk[wk.len() - 1];
                let rot = if last.norm() > 0.0 {
                    C64::new(0.0, 1.0) * last.conj() / last.norm()
                } else {
                    C64::new(1.0, 0.0)
                };
                let mut beta = lift_w(&(wk * rot));
                let n = beta.norm();
                if n > 0.0 {
                    beta /= n;
                }
                angles_from_beta(&beta)
            })
            .collect();
        Self { theta }
    }

    pub fn to_beamformers(&self) -> BeamformerSet {
        BeamformerSet::from_raw(self.theta.iter().map(|t| unlift_beta(&build_beta(t))).collect())
    }

    /// Flattened distance between two angle sets.
    pub fn distance(&self, other: &Self) -> f64 {
        self.theta
            .iter()
            .zip(&other.theta)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)))
            .sum::<f64>()
            .sqrt()
    }

    pub fn in_range(&self) -> bool {
        use std::f64::consts::{FRAC_PI_2, PI};
        self.theta.iter().all(|t| {
            let l = t.len();
            t.iter()
                .enumerate()
                .all(|(i, &a)| if i + 1 < l { a.abs() <= FRAC_PI_2 + 1e-12 } else { a.abs() <= PI + 1e-12 })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ArrayGeometry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rand_theta(rng: &mut ChaCha8Rng, l: usize) -> Vec<f64> {
        (0..l)
            .map(|i| {
                if i + 1 < l {
                    (rng.random::<f64>() * 2.0 - 1.0) * FRAC_PI_2
                } else {
                    (rng.random::<f64>() * 2.0 - 1.0) * PI
                }
            })
            .collect()
    }

    fn rand_psd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
        let g = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        g.transpose() * g
    }

    fn rand_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> (ChannelSet, RisVector, BeamformerSet) {
        let h = DMatrix::from_fn(n, m, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let ch = ChannelSet {
            h: vec![h],
            geometry: ArrayGeometry::half_wavelength(m, n),
            seed: 0,
        };
        let f = RisVector::from_raw(DVector::from_fn(m, |_, _| {
            C64::from_polar(rng.random::<f64>(), rng.random::<f64>() * 6.3)
        }));
        let w = BeamformerSet::normalized(vec![DVector::from_fn(n, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })]);
        (ch, f, w)
    }

    #[test]
    fn lift_example() {
        let f = RisVector::from_raw(DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 1.0)]));
        assert_eq!(lift_f(&f).as_vector().as_slice(), &[1.0, 0.0, 0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn lift_round_trip(parts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..20)) {
            let f = RisVector::from_raw(DVector::from_iterator(parts.len(), parts.iter().map(|&(a, b)| C64::new(a, b))));
            let alpha = lift_f(&f);
            let back = unlift_alpha(&alpha).unwrap();
            prop_assert_eq!(&back, &f);
            for m in 0..f.len() {
                prop_assert!((alpha.pair_norm(m) - f.as_vector()[m].norm()).abs() <= 1e-15);
            }
        }

        #[test]
        fn beta_is_unit_and_invertible(theta in proptest::collection::vec(-1.5f64..1.5, 1..9), last in -3.1f64..3.1) {
            let mut theta = theta;
            *theta.last_mut().unwrap() = last;
            let beta = build_beta(&theta);
            prop_assert!((beta.norm() - 1.0).abs() < 1e-12);
            let back = build_beta(&angles_from_beta(&beta));
            prop_assert!((back - &beta).norm() < 1e-10);
        }
    }

    #[test]
    fn beta_special_angles() {
        let b = build_beta(&[0.0; 5]);
        assert_eq!(b.as_slice(), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let b = build_beta(&[FRAC_PI_2, 0.3, -1.1]);
        assert!((b[0] - 1.0).abs() < 1e-15);
        assert!(b.iter().skip(1).all(|x| x.abs() < 1e-15));
        let t = angles_from_beta(&b);
        assert!((t[0] - FRAC_PI_2).abs() < 1e-12 && t[1] == 0.0 && t[2] == 0.0);
    }

    #[test]
    fn alpha_lift_rejects_large_pairs() {
        assert!(AlphaLift::new(DVector::from_vec(vec![0.9, 0.9])).is_err());
        assert!(AlphaLift::new(DVector::from_vec(vec![0.6, 0.8])).is_ok());
        assert!(AlphaLift::new(DVector::from_vec(vec![0.6, 0.8, 0.1])).is_err());
    }

    #[test]
    fn quadratic_forms_match_complex_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (ch, f, w) = rand_instance(&mut rng, 3, 5);
            let sigma2 = 0.3;
            let direct = (w.get(0).adjoint() * &ch.h[0] * f.as_vector())[0].norm_sqr() / sigma2;
            let b = build_b(0, &ch, &w, sigma2).unwrap();
            let alpha = lift_f(&f);
            let via_b = alpha.as_vector().dot(&(&b * alpha.as_vector()));
            let d = build_d(0, &ch, &f, sigma2).unwrap();
            let beta = lift_w(w.get(0));
            let via_d = beta.dot(&(&d * &beta));
            assert!((via_b - direct).abs() <= 1e-10 * direct);
            assert!((via_d - direct).abs() <= 1e-10 * direct);
        }
    }

    #[test]
    fn gram_matrices_are_psd_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (ch, f, w) = rand_instance(&mut rng, 3, 6);
        for mat in [build_b(0, &ch, &w, 1.0).unwrap(), build_d(0, &ch, &f, 1.0).unwrap()] {
            assert!((&mat - mat.transpose()).norm() == 0.0);
            let eig = mat.clone().symmetric_eigenvalues();
            let max = eig.max();
            assert!(eig.iter().all(|&e| e >= -1e-12 * max.max(1.0)));
            assert!(eig.iter().filter(|&&e| e > 1e-10 * max).count() <= 2);
        }
    }

    #[test]
    fn build_rejects_bad_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (ch, _, w) = rand_instance(&mut rng, 3, 6);
        assert!(build_b(1, &ch, &w, 1.0).is_err());
        let short = RisVector::from_raw(DVector::zeros(4));
        assert!(build_d(0, &ch, &short, 1.0).is_err());
    }

    #[test]
    fn circle_jacobian() {
        let j = beta_jacobian(&[0.0]);
        assert_eq!(j.shape(), (2, 1));
        assert!((j[(0, 0)] - 1.0).abs() < 1e-15 && j[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn jacobian_structure_and_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = 1e-5;
        for l in [1usize, 3, 7] {
            for _ in 0..20 {
                let theta = rand_theta(&mut rng, l);
                let jac = beta_jacobian(&theta);
                let sec = beta_second_partials(&theta);
                for i in 0..l {
                    for n in 0..i.min(l) {
                        assert_eq!(jac[(n, i)], 0.0);
                    }
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[i] += h;
                    tm[i] -= h;
                    let fd = (build_beta(&tp) - build_beta(&tm)) / (2.0 * h);
                    for n in 0..=l {
                        assert!((fd[n] - jac[(n, i)]).abs() < 1e-6);
                    }
                    let jp = beta_jacobian(&tp);
                    let jm = beta_jacobian(&tm);
                    for j in 0..l {
                        for n in 0..=l {
                            let fd2 = (jp[(n, j)] - jm[(n, j)]) / (2.0 * h);
                            assert!((fd2 - sec[n][(i, j)]).abs() < 1e-6);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_identity_matrix_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let d = DMatrix::identity(8, 8);
        for _ in 0..20 {
            let theta = rand_theta(&mut rng, 7);
            assert!(grad_f_quadratic(&theta, &d).norm() < 1e-12);
            assert!(hessian_f_quadratic(&theta, &d).norm() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_chain_rule_and_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = 1e-5;
        for _ in 0..50 {
            let d = rand_psd(&mut rng, 8);
            let theta = rand_theta(&mut rng, 7);
            let g = grad_f_quadratic(&theta, &d);
            let chain = 2.0 * beta_jacobian(&theta).transpose() * (&d * build_beta(&theta));
            assert!((&g - &chain).amax() < 1e-10);
            for i in 0..7 {
                let mut tp = theta.clone();
                let mut tm = theta.clone();
                tp[i] += h;
                tm[i] -= h;
                let fd = (quadratic_value(&tp, &d) - quadratic_value(&tm, &d)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn hessian_symmetric_and_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-4;
        for _ in 0..30 {
            let d = rand_psd(&mut rng, 6);
            let theta = rand_theta(&mut rng, 5);
            let q = hessian_f_quadratic(&theta, &d);
            assert_eq!(q, q.transpose());
            for i in 0..5 {
                for j in 0..5 {
                    let at = |si: f64, sj: f64| {
                        let mut t = theta.clone();
                        t[i] += si * h;
                        t[j] += sj * h;
                        quadratic_value(&t, &d)
                    };
                    let fd = (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h);
                    assert!((fd - q[(i, j)]).abs() < 1e-4, "{fd} vs {}", q[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn delta_arithmetic() {
        assert_eq!(majorization_delta(&DMatrix::zeros(4, 4), 2).value(), 0.0);
        assert_eq!(majorization_delta(&DMatrix::identity(4, 4), 2).value(), 48.0);
    }

    fn min_majorization_margin(d: &DMatrix<f64>, delta: f64, theta: &[f64]) -> f64 {
        let q = hessian_f_quadratic(theta, d);
        let eye = DMatrix::<f64>::identity(q.nrows(), q.nrows());
        let lo = (&eye * delta - &q).symmetric_eigenvalues().min();
        let hi = (&eye * delta + &q).symmetric_eigenvalues().min();
        lo.min(hi)
    }

    #[test]
    fn closed_form_delta_can_be_cancelled_to_zero() {
        // c = (1, -1): the entry sum vanishes but the curvature does not.
        let c = real_block(&[C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]);
        let d = c.transpose() * c;
        assert!(majorization_delta(&d, 2).value() < 1e-12);
        let theta = [0.3, -0.4, 0.9];
        assert!(hessian_f_quadratic(&theta, &d).norm() > 0.1);
        assert!(min_majorization_margin(&d, effective_delta(&d, 2).value(), &theta) >= -1e-8);
    }

    #[test]
    fn certified_delta_majorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..30 {
            let d = rand_psd(&mut rng, 8);
            let delta = certified_delta(&d).value();
            for _ in 0..30 {
                let theta = rand_theta(&mut rng, 7);
                assert!(min_majorization_margin(&d, delta, &theta) >= -1e-8);
            }
        }
    }

    #[test]
    fn spherical_round_trip_keeps_beamformer_up_to_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..5 {
            let (ch, f, w) = rand_instance(&mut rng, n, 3);
            let angles = SphericalAngles::from_beamformers(&w);
            assert!(angles.in_range());
            let w2 = angles.to_beamformers();
            assert!((w2.get(0).norm() - 1.0).abs() < 1e-12);
            // same effective gain
            let g1 = (w.get(0).adjoint() * &ch.h[0] * f.as_vector())[0].norm();
            let g2 = (w2.get(0).adjoint() * &ch.h[0] * f.as_vector())[0].norm();
            assert!((g1 - g2).abs() < 1e-12 * g1.max(1.0));
            // last angle away from the wrap
            assert!(angles.theta[0].last().unwrap().abs() <= FRAC_PI_2 + 1e-12);
        }
    }
}
