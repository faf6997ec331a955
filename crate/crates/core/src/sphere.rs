//! Pseudospectral calculus on the unit sphere.
//!
//! The grid is the tensor product of `L+1` Gauss–Legendre colatitudes and
//! `2L+2` equispaced longitudes, so no node sits on a pole. Fields are
//! expanded in real, orthonormal spherical harmonics up to degree `L`.
//! Coefficients are stored in `(l ascending, m from -l to l)` order, i.e.
//! `index(l, m) = l*l + l + m`.
//!
//! Real harmonics follow
//! `Y_l0 = P_l0(cos θ)`, `Y_lm = √2 P_lm(cos θ) cos(mφ)` and
//! `Y_l,-m = √2 P_lm(cos θ) sin(mφ)` for `m > 0`, with `P_lm` the
//! associated Legendre functions normalised so that every `Y_lm` has unit
//! `L²(S²)` norm. No Condon–Shortley phase is applied.
//!
//! Tangential derivatives are always reported in the orthonormal frame
//! `(e_θ, e_φ)` of the round sphere: `∂_θ f` and `(sin θ)^{-1} ∂_φ f`.

use std::f64::consts::PI;

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereError {
    #[error("grid mismatch: expected {expected} values, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("invalid degree {0}: must be at least 1")]
    InvalidDegree(usize),
}

/// Number of real harmonics up to and including degree `lmax`.
pub fn n_coeffs(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 1)
}

/// Position of `(l, m)` in a coefficient vector.
pub fn coeff_index(l: usize, m: i64) -> usize {
    debug_assert!(m.unsigned_abs() as usize <= l);
    ((l * l + l) as i64 + m) as usize
}

/// Inverse of [`coeff_index`].
pub fn coeff_degree_order(index: usize) -> (usize, i64) {
    let l = (index as f64).sqrt().floor() as usize;
    let l = if (l + 1) * (l + 1) <= index { l + 1 } else { l };
    let m = index as i64 - (l * l + l) as i64;
    (l, m)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes in descending order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        // refresh the derivative at the converged root
        let (mut p0, mut p1) = (1.0, z);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        if n > 1 {
            dp = nf * (z * p1 - p0) / (z * z - 1.0);
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Normalised associated Legendre values `P_lm(x)` for `0 <= m <= l <= lmax`,
/// packed by [`legendre_index`].
pub fn legendre_table(lmax: usize, x: f64) -> Vec<f64> {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut out = vec![0.0; (lmax + 1) * (lmax + 2) / 2];
    let mut pmm = (1.0 / (4.0 * PI)).sqrt();
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            pmm *= ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s;
        }
        out[legendre_index(m, m)] = pmm;
        if m == lmax {
            break;
        }
        let mf = m as f64;
        let mut p_prev = pmm;
        let mut p_cur = (2.0 * mf + 3.0).sqrt() * x * pmm;
        out[legendre_index(m + 1, m)] = p_cur;
        for l in (m + 2)..=lmax {
            let lf = l as f64;
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            let p_next = a * (x * p_cur - b * p_prev);
            out[legendre_index(l, m)] = p_next;
            p_prev = p_cur;
            p_cur = p_next;
        }
    }
    out
}

/// Packed position of `P_lm` in a triangular table ordered by `l`, then `m`.
pub fn legendre_index(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

/// Nodal values of a band-limited field together with its frame derivatives.
///
/// `d_theta = ∂_θ f`, `d_phi = (sin θ)^{-1} ∂_φ f`, and `hess_*` are the
/// components of the round covariant Hessian in the frame `(e_θ, e_φ)`.
#[derive(Debug, Clone)]
pub struct FieldDerivatives {
    pub value: Vec<f64>,
    pub d_theta: Vec<f64>,
    pub d_phi: Vec<f64>,
    pub hess_tt: Vec<f64>,
    pub hess_tp: Vec<f64>,
    pub hess_pp: Vec<f64>,
}

impl FieldDerivatives {
    pub fn gradient(&self, i: usize) -> [f64; 2] {
        [self.d_theta[i], self.d_phi[i]]
    }

    pub fn hessian(&self, i: usize) -> [[f64; 2]; 2] {
        [[self.hess_tt[i], self.hess_tp[i]], [self.hess_tp[i], self.hess_pp[i]]]
    }
}

#[derive(Debug, Clone)]
struct RingTables {
    /// `P_lm`, `dP_lm/dθ`, `d²P_lm/dθ²`, `P_lm / sin θ`, `d(P_lm / sin θ)/dθ`
    p: Vec<f64>,
    dp: Vec<f64>,
    d2p: Vec<f64>,
    ps: Vec<f64>,
    dps: Vec<f64>,
}

/// Gauss–Legendre × equiangular grid with precomputed transform tables.
#[derive(Debug, Clone)]
pub struct SphericalGrid {
    lmax: usize,
    nlat: usize,
    nlon: usize,
    cos_theta: Vec<f64>,
    sin_theta: Vec<f64>,
    lat_weights: Vec<f64>,
    phi: Vec<f64>,
    cos_mphi: Vec<f64>,
    sin_mphi: Vec<f64>,
    rings: Vec<RingTables>,
    weights: Vec<f64>,
}

impl SphericalGrid {
    pub const DEFAULT_DEGREE: usize = 31;

    pub fn new(lmax: usize) -> Result<Self, SphereError> {
        if lmax < 1 {
            return Err(SphereError::InvalidDegree(lmax));
        }
        let nlat = lmax + 1;
        let nlon = 2 * lmax + 2;
        let (x, w) = gauss_legendre(nlat);
        let sin_theta: Vec<f64> = x.iter().map(|c| (1.0 - c * c).sqrt()).collect();
        let phi: Vec<f64> = (0..nlon).map(|k| 2.0 * PI * k as f64 / nlon as f64).collect();
        let mut cos_mphi = vec![0.0; (lmax + 1) * nlon];
        let mut sin_mphi = vec![0.0; (lmax + 1) * nlon];
        for m in 0..=lmax {
            for k in 0..nlon {
                // exact reduction keeps the tables symmetric to roundoff
                let arg = 2.0 * PI * ((m * k) % nlon) as f64 / nlon as f64;
                cos_mphi[m * nlon + k] = arg.cos();
                sin_mphi[m * nlon + k] = arg.sin();
            }
        }
        let ntab = (lmax + 1) * (lmax + 2) / 2;
        let mut rings = Vec::with_capacity(nlat);
        for j in 0..nlat {
            let c = x[j];
            let s = sin_theta[j];
            let p = legendre_table(lmax, c);
            let mut dp = vec![0.0; ntab];
            let mut d2p = vec![0.0; ntab];
            let mut ps = vec![0.0; ntab];
            let mut dps = vec![0.0; ntab];
            for l in 0..=lmax {
                let lf = l as f64;
                for m in 0..=l {
                    let mf = m as f64;
                    let idx = legendre_index(l, m);
                    let lower = if l > m {
                        p[legendre_index(l - 1, m)]
                            * ((2.0 * lf + 1.0) * (lf * lf - mf * mf) / (2.0 * lf - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    let d1 = (lf * c * p[idx] - lower) / s;
                    dp[idx] = d1;
                    d2p[idx] = -c / s * d1 - (lf * (lf + 1.0) - mf * mf / (s * s)) * p[idx];
                    ps[idx] = p[idx] / s;
                    dps[idx] = d1 / s - c * p[idx] / (s * s);
                }
            }
            rings.push(RingTables { p, dp, d2p, ps, dps });
        }
        let dphi = 2.0 * PI / nlon as f64;
        let mut weights = Vec::with_capacity(nlat * nlon);
        for wj in &w {
            for _ in 0..nlon {
                weights.push(wj * dphi);
            }
        }
        Ok(Self {
            lmax,
            nlat,
            nlon,
            cos_theta: x,
            sin_theta,
            lat_weights: w,
            phi,
            cos_mphi,
            sin_mphi,
            rings,
            weights,
        })
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_coeffs(&self) -> usize {
        n_coeffs(self.lmax)
    }

    /// Round-sphere quadrature weight of every node; they sum to 4π.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cos_theta(&self, ring: usize) -> f64 {
        self.cos_theta[ring]
    }

    pub fn sin_theta(&self, ring: usize) -> f64 {
        self.sin_theta[ring]
    }

    pub fn lat_weight(&self, ring: usize) -> f64 {
        self.lat_weights[ring]
    }

    pub fn phi(&self, k: usize) -> f64 {
        self.phi[k]
    }

    /// `(ring, longitude)` of a node.
    pub fn node_ring(&self, i: usize) -> (usize, usize) {
        (i / self.nlon, i % self.nlon)
    }

    /// Colatitude and longitude of a node.
    pub fn angles(&self, i: usize) -> (f64, f64) {
        let (j, k) = self.node_ring(i);
        (self.cos_theta[j].acos(), self.phi[k])
    }

    /// Unit position vector and the orthonormal frame `(p, e_θ, e_φ)` at a node.
    pub fn frame(&self, i: usize) -> [Vector3<f64>; 3] {
        let (j, k) = self.node_ring(i);
        let (c, s) = (self.cos_theta[j], self.sin_theta[j]);
        let (cp, sp) = (self.cos_mphi[self.nlon + k], self.sin_mphi[self.nlon + k]);
        [
            Vector3::new(s * cp, s * sp, c),
            Vector3::new(c * cp, c * sp, -s),
            Vector3::new(-sp, cp, 0.0),
        ]
    }

    pub fn point(&self, i: usize) -> Vector3<f64> {
        self.frame(i)[0]
    }

    fn check_nodal(&self, values: &[f64]) -> Result<(), SphereError> {
        if values.len() != self.len() {
            return Err(SphereError::GridMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        Ok(())
    }

    fn check_coeffs(&self, coeffs: &[f64]) -> Result<(), SphereError> {
        if coeffs.len() != self.n_coeffs() {
            return Err(SphereError::GridMismatch {
                expected: self.n_coeffs(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    /// Spherical-harmonic analysis by quadrature. Exact for fields of degree `<= L`.
    pub fn analysis(&self, values: &[f64]) -> Result<Vec<f64>, SphereError> {
        self.check_nodal(values)?;
        Ok(self.analysis_unchecked(values))
    }

    pub(crate) fn analysis_unchecked(&self, values: &[f64]) -> Vec<f64> {
        let lmax = self.lmax;
        let nlon = self.nlon;
        let dphi = 2.0 * PI / nlon as f64;
        let mut coeffs = vec![0.0; self.n_coeffs()];
        let mut fc = vec![0.0; lmax + 1];
        let mut fs = vec![0.0; lmax + 1];
        for j in 0..self.nlat {
            let row = &values[j * nlon..(j + 1) * nlon];
            for m in 0..=lmax {
                let cm = &self.cos_mphi[m * nlon..(m + 1) * nlon];
                let sm = &self.sin_mphi[m * nlon..(m + 1) * nlon];
                let mut a = 0.0;
                let mut b = 0.0;
                for k in 0..nlon {
                    a += row[k] * cm[k];
                    b += row[k] * sm[k];
                }
                let scale = if m == 0 { dphi } else { std::f64::consts::SQRT_2 * dphi };
                fc[m] = a * scale * self.lat_weights[j];
                fs[m] = b * scale * self.lat_weights[j];
            }
            let p = &self.rings[j].p;
            for l in 0..=lmax {
                let base = l * l + l;
                coeffs[base] += p[legendre_index(l, 0)] * fc[0];
                for m in 1..=l {
                    let pl = p[legendre_index(l, m)];
                    coeffs[base + m] += pl * fc[m];
                    coeffs[base - m] += pl * fs[m];
                }
            }
        }
        coeffs
    }

    /// Nodal values of a coefficient vector.
    pub fn synthesis(&self, coeffs: &[f64]) -> Result<Vec<f64>, SphereError> {
        self.check_coeffs(coeffs)?;
        Ok(self.synthesize_with(coeffs, |t| &t.p, SynthKind::Plain))
    }

    /// Values, frame gradient and round covariant Hessian at every node.
    pub fn derivatives(&self, coeffs: &[f64]) -> Result<FieldDerivatives, SphereError> {
        self.check_coeffs(coeffs)?;
        let value = self.synthesize_with(coeffs, |t| &t.p, SynthKind::Plain);
        let d_theta = self.synthesize_with(coeffs, |t| &t.dp, SynthKind::Plain);
        let d_phi = self.synthesize_with(coeffs, |t| &t.ps, SynthKind::PhiDerivative);
        let hess_tt = self.synthesize_with(coeffs, |t| &t.d2p, SynthKind::Plain);
        let hess_tp = self.synthesize_with(coeffs, |t| &t.dps, SynthKind::PhiDerivative);
        // e_φ e_φ component: sin^{-2} ∂_φφ f + cot θ ∂_θ f
        let phiphi = self.synthesize_with(coeffs, |t| &t.ps, SynthKind::PhiSecond);
        let mut hess_pp = vec![0.0; self.len()];
        for j in 0..self.nlat {
            let cot = self.cos_theta[j] / self.sin_theta[j];
            let inv_s = 1.0 / self.sin_theta[j];
            for k in 0..self.nlon {
                let i = j * self.nlon + k;
                hess_pp[i] = phiphi[i] * inv_s + cot * d_theta[i];
            }
        }
        Ok(FieldDerivatives {
            value,
            d_theta,
            d_phi,
            hess_tt,
            hess_tp,
            hess_pp,
        })
    }

    /// Derivatives of the degree-`L` projection of a nodal field.
    ///
    /// The field is shifted by its first nodal value before analysis; this
    /// leaves the derivatives unchanged and makes them vanish exactly on
    /// constants.
    pub fn nodal_derivatives(&self, values: &[f64]) -> Result<FieldDerivatives, SphereError> {
        self.check_nodal(values)?;
        let shift = values[0];
        let shifted: Vec<f64> = values.iter().map(|v| v - shift).collect();
        let mut d = self.derivatives(&self.analysis_unchecked(&shifted))?;
        d.value.iter_mut().for_each(|v| *v += shift);
        Ok(d)
    }

    /// Frame gradient of the degree-`L` projection of a nodal field.
    pub fn gradient(&self, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SphereError> {
        self.check_nodal(values)?;
        let shift = values[0];
        let shifted: Vec<f64> = values.iter().map(|v| v - shift).collect();
        let coeffs = self.analysis_unchecked(&shifted);
        let d_theta = self.synthesize_with(&coeffs, |t| &t.dp, SynthKind::Plain);
        let d_phi = self.synthesize_with(&coeffs, |t| &t.ps, SynthKind::PhiDerivative);
        Ok((d_theta, d_phi))
    }

    /// `Σ w_i f_i a_i`, the integral of `f` against the area element `a dω`.
    pub fn quadrature(&self, field: &[f64], area_element: &[f64]) -> Result<f64, SphereError> {
        self.check_nodal(field)?;
        self.check_nodal(area_element)?;
        Ok(self
            .weights
            .iter()
            .zip(field)
            .zip(area_element)
            .map(|((w, f), a)| w * f * a)
            .sum())
    }

    /// Round-sphere integral of a nodal field.
    pub fn integrate(&self, field: &[f64]) -> Result<f64, SphereError> {
        self.check_nodal(field)?;
        Ok(self.weights.iter().zip(field).map(|(w, f)| w * f).sum())
    }

    /// Values of one real harmonic at every node.
    pub fn harmonic(&self, l: usize, m: i64) -> Vec<f64> {
        let mut c = vec![0.0; self.n_coeffs()];
        c[coeff_index(l, m)] = 1.0;
        self.synthesize_with(&c, |t| &t.p, SynthKind::Plain)
    }

    /// Values and derivatives of the single harmonic with coefficient index
    /// `index`, evaluated directly from the ring tables.
    pub fn basis_derivatives(&self, index: usize) -> FieldDerivatives {
        let (l, m) = coeff_degree_order(index);
        let ma = m.unsigned_abs() as usize;
        let mf = ma as f64;
        let idx = legendre_index(l, ma);
        let n = self.len();
        let mut d = FieldDerivatives {
            value: vec![0.0; n],
            d_theta: vec![0.0; n],
            d_phi: vec![0.0; n],
            hess_tt: vec![0.0; n],
            hess_tp: vec![0.0; n],
            hess_pp: vec![0.0; n],
        };
        let scale = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
        for j in 0..self.nlat {
            let t = &self.rings[j];
            let s = self.sin_theta[j];
            let cot = self.cos_theta[j] / s;
            let (p, dp, d2p, ps, dps) = (t.p[idx], t.dp[idx], t.d2p[idx], t.ps[idx], t.dps[idx]);
            for k in 0..self.nlon {
                let (c, sn) = (self.cos_mphi[ma * self.nlon + k], self.sin_mphi[ma * self.nlon + k]);
                // angular factor and its φ derivative
                let (f, df) = if m >= 0 { (c, -mf * sn) } else { (sn, mf * c) };
                let i = j * self.nlon + k;
                d.value[i] = scale * p * f;
                d.d_theta[i] = scale * dp * f;
                d.d_phi[i] = scale * ps * df;
                d.hess_tt[i] = scale * d2p * f;
                d.hess_tp[i] = scale * dps * df;
                d.hess_pp[i] = scale * (-mf * mf * ps * f / s + cot * dp * f);
            }
        }
        d
    }

    /// Evaluate a coefficient vector at an arbitrary direction.
    pub fn evaluate_at(&self, coeffs: &[f64], theta: f64, phi: f64) -> Result<f64, SphereError> {
        self.check_coeffs(coeffs)?;
        let p = legendre_table(self.lmax, theta.cos());
        let mut acc = 0.0;
        for l in 0..=self.lmax {
            let base = l * l + l;
            acc += coeffs[base] * p[legendre_index(l, 0)];
            for m in 1..=l {
                let pl = p[legendre_index(l, m)] * std::f64::consts::SQRT_2;
                let mf = m as f64;
                acc += pl * (coeffs[base + m] * (mf * phi).cos() + coeffs[base - m] * (mf * phi).sin());
            }
        }
        Ok(acc)
    }

    fn synthesize_with<F>(&self, coeffs: &[f64], table: F, kind: SynthKind) -> Vec<f64>
    where
        F: Fn(&RingTables) -> &Vec<f64>,
    {
        let lmax = self.lmax;
        let nlon = self.nlon;
        let mut out = vec![0.0; self.len()];
        let mut a = vec![0.0; lmax + 1];
        let mut b = vec![0.0; lmax + 1];
        for j in 0..self.nlat {
            let t = table(&self.rings[j]);
            for m in 0..=lmax {
                let mut ca = 0.0;
                let mut cb = 0.0;
                for l in m..=lmax {
                    let base = l * l + l;
                    let pl = t[legendre_index(l, m)];
                    ca += coeffs[base + m] * pl;
                    if m > 0 {
                        cb += coeffs[base - m] * pl;
                    }
                }
                let scale = if m == 0 { 1.0 } else { std::f64::consts::SQRT_2 };
                a[m] = ca * scale;
                b[m] = cb * scale;
            }
            let row = &mut out[j * nlon..(j + 1) * nlon];
            for m in 0..=lmax {
                let mf = m as f64;
                // plain: a cos + b sin; ∂_φ: m(-a sin + b cos); ∂_φφ: -m²(a cos + b sin)
                let (ac, bs, as_, bc) = match kind {
                    SynthKind::Plain => (a[m], b[m], 0.0, 0.0),
                    SynthKind::PhiDerivative => (0.0, 0.0, -mf * a[m], mf * b[m]),
                    SynthKind::PhiSecond => (-mf * mf * a[m], -mf * mf * b[m], 0.0, 0.0),
                };
                if ac == 0.0 && bs == 0.0 && as_ == 0.0 && bc == 0.0 {
                    continue;
                }
                let cm = &self.cos_mphi[m * nlon..(m + 1) * nlon];
                let sm = &self.sin_mphi[m * nlon..(m + 1) * nlon];
                for k in 0..nlon {
                    row[k] += ac * cm[k] + bs * sm[k] + as_ * sm[k] + bc * cm[k];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum SynthKind {
    Plain,
    PhiDerivative,
    PhiSecond,
}
