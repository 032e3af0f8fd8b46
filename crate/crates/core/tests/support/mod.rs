//! Independent reference calculations shared by integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;

/// Williamson spectrum from the symmetric matrix `G^1/2 Omega^T G Omega G^1/2`,
/// whose eigenvalues are the squared symplectic eigenvalues, each twice.
pub fn williamson(gamma: &DMatrix<f64>) -> Vec<f64> {
    let n = gamma.nrows();
    let mut omega = DMatrix::zeros(n, n);
    for k in 0..n / 2 {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    let eig = gamma.clone().symmetric_eigen();
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt))
        * eig.eigenvectors.transpose();
    let m = &root * omega.transpose() * gamma * &omega * &root;
    let m = (&m + m.transpose()) * 0.5;
    let mut sq: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    sq.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sq.iter().step_by(2).map(|x| x.max(0.0).sqrt()).collect()
}

fn put_block(m: &mut DMatrix<f64>, r: usize, c: usize, diag: f64, sign: bool) {
    m[(r, c)] = diag;
    m[(r + 1, c + 1)] = if sign { -diag } else { diag };
}

/// Alice-Bob covariance after the channel, in SNU.
pub fn covariance_ab(v_a0: f64, t: f64, eps: f64) -> DMatrix<f64> {
    let v = v_a0 + 1.0;
    let c = (t * (v * v - 1.0)).sqrt();
    let b = t * (v_a0 + eps) + 1.0;
    let mut m = DMatrix::zeros(4, 4);
    put_block(&mut m, 0, 0, v, false);
    put_block(&mut m, 0, 2, c, true);
    put_block(&mut m, 2, 0, c, true);
    put_block(&mut m, 2, 2, b, false);
    m
}

/// Modes (A, F, G) conditioned on a homodyne of Bob's detected mode, with the
/// detector modelled as a beamsplitter of transmittance `eta` mixing in one
/// half of an entangled pair (F0, G) of variance `1 + nu_el / (1 - eta)`.
pub fn conditional_afg(v_a0: f64, t: f64, eps: f64, eta: f64, nu_el: f64) -> DMatrix<f64> {
    let w = 1.0 + nu_el / (1.0 - eta);
    let cf = (w * w - 1.0).sqrt();
    let mut full = DMatrix::zeros(8, 8);
    full.view_mut((0, 0), (4, 4))
        .copy_from(&covariance_ab(v_a0, t, eps));
    put_block(&mut full, 4, 4, w, false);
    put_block(&mut full, 4, 6, cf, true);
    put_block(&mut full, 6, 4, cf, true);
    put_block(&mut full, 6, 6, w, false);

    let (se, ce) = (eta.sqrt(), (1.0 - eta).sqrt());
    let mut s = DMatrix::identity(8, 8);
    put_block(&mut s, 2, 2, se, false);
    put_block(&mut s, 2, 4, ce, false);
    put_block(&mut s, 4, 2, -ce, false);
    put_block(&mut s, 4, 4, se, false);
    let full = &s * full * s.transpose();

    let rest = [0usize, 1, 4, 5, 6, 7];
    let g_rest = DMatrix::from_fn(6, 6, |i, j| full[(rest[i], rest[j])]);
    let cross = DMatrix::from_fn(6, 2, |i, j| full[(rest[i], 2 + j)]);
    let mut proj = DMatrix::zeros(2, 2);
    proj[(0, 0)] = 1.0 / full[(2, 2)];
    g_rest - &cross * proj * cross.transpose()
}

fn g(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (x + 1.0) * (x + 1.0).log2() - x * x.log2()
    }
}

pub fn holevo(v_a0: f64, t: f64, eps: f64, eta: f64, nu_el: f64) -> f64 {
    let ab: f64 = williamson(&covariance_ab(v_a0, t, eps))
        .iter()
        .map(|l| g((l - 1.0) / 2.0))
        .sum();
    let cond: f64 = williamson(&conditional_afg(v_a0, t, eps, eta, nu_el))
        .iter()
        .map(|l| g((l - 1.0) / 2.0))
        .sum();
    ab - cond
}

/// `erfc(x)` by composite Simpson quadrature of `2/sqrt(pi) exp(-s^2)` over
/// `[x, x + 12]`.
pub fn erfc_quadrature(x: f64) -> f64 {
    let n = 60_000;
    let h = 12.0 / n as f64;
    let f = |s: f64| (-s * s).exp();
    let mut acc = f(x) + f(x + 12.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(x + i as f64 * h);
    }
    acc * h / 3.0 * 2.0 / std::f64::consts::PI.sqrt()
}

/// Solve `erfc(z / sqrt 2) = eps` by bisection.
pub fn tail_coefficient_bisection(eps: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 20.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if erfc_quadrature(mid / std::f64::consts::SQRT_2) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Privacy-amplification penalty written out by hand.
pub fn finite_size_penalty(n: f64, eps_bar: f64, eps_pa: f64) -> f64 {
    let lg_bar = (1.0 / eps_bar).ln() / 2f64.ln();
    let lg_pa = (1.0 / eps_pa).ln() / 2f64.ln();
    7.0 * (lg_bar / n).sqrt() + 2.0 * lg_pa / n
}

pub struct ReferenceRow {
    pub distance_km: f64,
    pub k: f64,
    pub eps: f64,
    pub k_e: f64,
    pub k_p: f64,
}

pub const FIG7_REFERENCE: &str = include_str!("../data/fig7_reference.csv");

pub fn fig7_reference() -> Vec<ReferenceRow> {
    FIG7_REFERENCE
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            ReferenceRow {
                distance_km: f[0],
                k: f[1],
                eps: f[2],
                k_e: f[3],
                k_p: f[4],
            }
        })
        .collect()
}
