//! Plant–controller cascade, its error coordinates, and the observer
//! augmentation used for output feedback.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matlib::{check_hurwitz, MatError, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error(transparent)]
    Matrix(#[from] MatError),
    #[error("inconsistent cascade dimensions: {0}")]
    Dimension(String),
    #[error("A + BC is not Hurwitz: {0}")]
    NotStabilized(String),
    #[error("observer error matrix A - LC is not Hurwitz: {0}")]
    ObserverNotHurwitz(String),
}

/// The merged plant–controller cascade ẋ = Ax + Bu, y = Cx with u, y ∈ ℝ^q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCascade", into = "RawCascade")]
pub struct Cascade {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCascade {
    #[serde(rename = "A")]
    a: Matrix,
    #[serde(rename = "B")]
    b: Matrix,
    #[serde(rename = "C")]
    c: Matrix,
}

impl TryFrom<RawCascade> for Cascade {
    type Error = SystemError;

    fn try_from(raw: RawCascade) -> Result<Self, Self::Error> {
        Cascade::new(raw.a, raw.b, raw.c)
    }
}

impl From<Cascade> for RawCascade {
    fn from(c: Cascade) -> Self {
        RawCascade {
            a: c.a,
            b: c.b,
            c: c.c,
        }
    }
}

impl Cascade {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self, SystemError> {
        let n = a.rows();
        if !a.is_square() {
            return Err(SystemError::Dimension(format!(
                "A is {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let q = b.cols();
        if b.rows() != n {
            return Err(SystemError::Dimension(format!(
                "B has {} rows, A is {n}x{n}",
                b.rows()
            )));
        }
        if c.shape() != (q, n) {
            return Err(SystemError::Dimension(format!(
                "C is {}x{}, expected {q}x{n}",
                c.rows(),
                c.cols()
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.rows()
    }

    /// Output (and input) dimension.
    pub fn q(&self) -> usize {
        self.b.cols()
    }

    /// Nominal closed-loop matrix A + BC.
    pub fn closed_loop(&self) -> Matrix {
        self.a
            .add(&self.b.matmul(&self.c).expect("checked dimensions"))
            .expect("checked dimensions")
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        self.c.mul_vec(x)
    }
}

/// The nominal loop A + BC must be exponentially stable.
pub fn check_assumption1(cascade: &Cascade) -> bool {
    check_hurwitz(&cascade.closed_loop()).hurwitz
}

/// Dynamics in the coordinates (x, e) with e = ν − y.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSystem {
    pub f11: Matrix,
    pub f12: Matrix,
    pub f21: Matrix,
    pub f22: Matrix,
    pub f: Matrix,
}

impl ErrorSystem {
    pub fn n(&self) -> usize {
        self.f11.rows()
    }

    pub fn q(&self) -> usize {
        self.f22.rows()
    }
}

pub fn build_error_system(cascade: &Cascade) -> Result<ErrorSystem, SystemError> {
    let f11 = cascade.closed_loop();
    let report = check_hurwitz(&f11);
    if !report.hurwitz {
        return Err(SystemError::NotStabilized(
            report.reason.unwrap_or_default(),
        ));
    }
    let f12 = cascade.b().clone();
    let f21 = cascade.c().matmul(&f11)?.scale(-1.0);
    let f22 = cascade.c().matmul(cascade.b())?.scale(-1.0);
    let (n, q) = (cascade.n(), cascade.q());
    let mut f = Matrix::zeros(n + q, n + q);
    f.set_block(0, 0, &f11);
    f.set_block(0, n, &f12);
    f.set_block(n, 0, &f21);
    f.set_block(n, n, &f22);
    Ok(ErrorSystem {
        f11,
        f12,
        f21,
        f22,
        f,
    })
}

/// Luenberger gain L for ẋ̂ = Ax̂ + Bν + L(y − Cx̂); A − LC must be Hurwitz.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    l: Matrix,
}

impl ObserverConfig {
    pub fn new(cascade: &Cascade, l: Matrix) -> Result<Self, SystemError> {
        if l.shape() != (cascade.n(), cascade.q()) {
            return Err(SystemError::Dimension(format!(
                "L is {}x{}, expected {}x{}",
                l.rows(),
                l.cols(),
                cascade.n(),
                cascade.q()
            )));
        }
        let obs = Self { l };
        let report = check_hurwitz(&obs.error_matrix(cascade));
        if !report.hurwitz {
            return Err(SystemError::ObserverNotHurwitz(
                report.reason.unwrap_or_default(),
            ));
        }
        Ok(obs)
    }

    pub fn gain(&self) -> &Matrix {
        &self.l
    }

    /// A − LC, the estimation-error dynamics.
    pub fn error_matrix(&self, cascade: &Cascade) -> Matrix {
        cascade
            .a()
            .sub(&self.l.matmul(cascade.c()).expect("checked dimensions"))
            .expect("checked dimensions")
    }
}

/// Returns (ẋ, ẋ̂) for the plant and its observer driven by the held sample ν.
pub fn observer_flow(
    cascade: &Cascade,
    obs: &ObserverConfig,
    x: &[f64],
    xhat: &[f64],
    nu: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut dx = cascade.a().mul_vec(x);
    cascade.b().mul_vec_add(nu, &mut dx);

    let mut dxhat = cascade.a().mul_vec(xhat);
    cascade.b().mul_vec_add(nu, &mut dxhat);
    let innovation: Vec<f64> = cascade
        .output(x)
        .iter()
        .zip(cascade.output(xhat))
        .map(|(y, yhat)| y - yhat)
        .collect();
    obs.gain().mul_vec_add(&innovation, &mut dxhat);
    (dx, dxhat)
}

/// Linear flow matrix of the sampled loop between transmissions.
///
/// Without an observer the state is `[x; e]` and the matrix is F. With an
/// observer the state is `[x; x̂; e]` where e = ν − Cx̂.
pub fn loop_flow_matrix(cascade: &Cascade, observer: Option<&ObserverConfig>) -> Matrix {
    let (n, q) = (cascade.n(), cascade.q());
    let (a, b, c) = (cascade.a(), cascade.b(), cascade.c());
    let bc = b.matmul(c).expect("checked dimensions");
    match observer {
        None => {
            let f11 = cascade.closed_loop();
            let f21 = c.matmul(&f11).expect("checked dimensions").scale(-1.0);
            let f22 = c.matmul(b).expect("checked dimensions").scale(-1.0);
            let mut m = Matrix::zeros(n + q, n + q);
            m.set_block(0, 0, &f11);
            m.set_block(0, n, b);
            m.set_block(n, 0, &f21);
            m.set_block(n, n, &f22);
            m
        }
        Some(obs) => {
            let lc = obs.gain().matmul(c).expect("checked dimensions");
            // ẋ̂ = LC x + (A + BC − LC) x̂ + B e
            let xhat_self = cascade.closed_loop().sub(&lc).expect("checked dimensions");
            let mut m = Matrix::zeros(2 * n + q, 2 * n + q);
            m.set_block(0, 0, a);
            m.set_block(0, n, &bc);
            m.set_block(0, 2 * n, b);
            m.set_block(n, 0, &lc);
            m.set_block(n, n, &xhat_self);
            m.set_block(n, 2 * n, b);
            // ė = −C ẋ̂
            let neg_c = c.scale(-1.0);
            m.set_block(2 * n, 0, &neg_c.matmul(&lc).expect("checked dimensions"));
            m.set_block(
                2 * n,
                n,
                &neg_c.matmul(&xhat_self).expect("checked dimensions"),
            );
            m.set_block(2 * n, 2 * n, &neg_c.matmul(b).expect("checked dimensions"));
            m
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlib::norm;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    pub(crate) fn first_example() -> Cascade {
        Cascade::new(
            m(&[&[2.0, 1.5], &[2.0, 0.0]]),
            m(&[&[-18.0], &[0.0]]),
            m(&[&[0.5, 0.5]]),
        )
        .unwrap()
    }

    fn lqr_example() -> Cascade {
        Cascade::new(
            m(&[&[1.0, 1.0], &[0.0, 1.0]]),
            m(&[&[-2.1961, -0.7545], &[-0.7545, -2.7146]]),
            Matrix::identity(2),
        )
        .unwrap()
    }

    #[test]
    fn assumption1_examples() {
        assert!(check_assumption1(&first_example()));
        let unstable = Cascade::new(
            Matrix::identity(2),
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 2),
        )
        .unwrap();
        assert!(!check_assumption1(&unstable));

        let lqr = lqr_example();
        assert!(check_assumption1(&lqr));
        let f11 = lqr.closed_loop();
        let tr = f11[(0, 0)] + f11[(1, 1)];
        let det = f11[(0, 0)] * f11[(1, 1)] - f11[(0, 1)] * f11[(1, 0)];
        assert!((tr + 2.9107).abs() < 1e-3, "{tr}");
        assert!((det - 2.24).abs() < 5e-3, "{det}");
    }

    #[test]
    fn error_blocks_first_example() {
        let err = build_error_system(&first_example()).unwrap();
        assert_eq!(err.f11, m(&[&[-7.0, -7.5], &[2.0, 0.0]]));
        assert_eq!(err.f12, m(&[&[-18.0], &[0.0]]));
        assert_eq!(err.f21, m(&[&[2.5, 3.75]]));
        assert_eq!(err.f22, m(&[&[9.0]]));
        assert_eq!(err.f.block(2, 0, 1, 2), err.f21);
    }

    #[test]
    fn error_blocks_without_input() {
        let a = m(&[&[-1.0, 2.0], &[0.0, -3.0]]);
        let c = m(&[&[1.0, 1.0]]);
        let casc = Cascade::new(a.clone(), Matrix::zeros(2, 1), c.clone()).unwrap();
        let err = build_error_system(&casc).unwrap();
        assert_eq!(err.f11, a);
        assert_eq!(err.f12, Matrix::zeros(2, 1));
        assert_eq!(err.f21, c.matmul(&a).unwrap().scale(-1.0));
        assert_eq!(err.f22, Matrix::zeros(1, 1));
    }

    #[test]
    fn error_blocks_identity_output() {
        let lqr = lqr_example();
        let err = build_error_system(&lqr).unwrap();
        let k = lqr.b().clone();
        assert_eq!(err.f12, k);
        assert_eq!(err.f21, lqr.a().add(&k).unwrap().scale(-1.0));
        assert_eq!(err.f22, k.scale(-1.0));
    }

    #[test]
    fn unstable_loop_rejected() {
        let casc = Cascade::new(
            Matrix::identity(2),
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 2),
        )
        .unwrap();
        assert!(matches!(
            build_error_system(&casc),
            Err(SystemError::NotStabilized(_))
        ));
    }

    #[test]
    fn dimension_checks() {
        assert!(Cascade::new(
            Matrix::identity(2),
            Matrix::zeros(3, 1),
            Matrix::zeros(1, 2)
        )
        .is_err());
        assert!(Cascade::new(
            Matrix::identity(2),
            Matrix::zeros(2, 1),
            Matrix::zeros(2, 2)
        )
        .is_err());
    }

    #[test]
    fn observer_sign_convention() {
        let casc = first_example();
        assert!(ObserverConfig::new(&casc, Matrix::column(&[14.77, 6.68])).is_ok());
        assert!(matches!(
            ObserverConfig::new(&casc, Matrix::column(&[-14.77, -6.68])),
            Err(SystemError::ObserverNotHurwitz(_))
        ));
    }

    #[test]
    fn observer_flow_examples() {
        let casc = first_example();
        let obs = ObserverConfig::new(&casc, Matrix::column(&[14.77, 6.68])).unwrap();
        let x = [0.3, -1.2];
        let (dx, dxh) = observer_flow(&casc, &obs, &x, &x, &[0.7]);
        assert_eq!(dx, dxh);

        let (_, dxh) = observer_flow(&casc, &obs, &x, &[0.0, 0.0], &[0.0]);
        let lcx = obs.gain().mul_vec(&casc.output(&x));
        for (a, b) in dxh.iter().zip(&lcx) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn estimation_error_decays_monotonically() {
        // forward Euler with a tiny step is enough to see the envelope
        let casc = first_example();
        let obs = ObserverConfig::new(&casc, Matrix::column(&[14.77, 6.68])).unwrap();
        let mut x = vec![1.0, 1.0];
        let mut xhat = vec![0.0, 0.0];
        let nu = [0.0];
        let dt = 1e-4;
        let mut prev = f64::INFINITY;
        for step in 0..50_000 {
            let (dx, dxh) = observer_flow(&casc, &obs, &x, &xhat, &nu);
            for i in 0..2 {
                x[i] += dt * dx[i];
                xhat[i] += dt * dxh[i];
            }
            if step % 1000 == 0 {
                let eta: Vec<f64> = x.iter().zip(&xhat).map(|(a, b)| a - b).collect();
                let v = norm(&eta);
                assert!(v < prev, "η norm rose at step {step}: {v} ≥ {prev}");
                prev = v;
            }
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn observer_coordinates_decouple_estimation_error() {
        // In (x̂, e, η) the η row must only couple to η.
        let casc = first_example();
        let obs = ObserverConfig::new(&casc, Matrix::column(&[14.77, 6.68])).unwrap();
        let mz = loop_flow_matrix(&casc, Some(&obs));
        let (n, q) = (2, 1);
        // η̇ = ẋ − ẋ̂ rows, expressed on (x, x̂, e)
        let eta_rows = mz
            .block(0, 0, n, 2 * n + q)
            .sub(&mz.block(n, 0, n, 2 * n + q))
            .unwrap();
        // substitute x = x̂ + η: coefficient of x̂ is (col_x + col_x̂), of η is col_x
        let on_xhat = eta_rows
            .block(0, 0, n, n)
            .add(&eta_rows.block(0, n, n, n))
            .unwrap();
        let on_e = eta_rows.block(0, 2 * n, n, q);
        let on_eta = eta_rows.block(0, 0, n, n);
        assert!(on_xhat.max_abs() < 1e-12);
        assert!(on_e.max_abs() < 1e-12);
        assert!(on_eta.sub(&obs.error_matrix(&casc)).unwrap().max_abs() < 1e-12);
    }
}
