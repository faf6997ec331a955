//! Induced geometry of radial graphs `Σ = { u(p) p : p ∈ S² }`.
//!
//! Every surface tensor is expressed in the pushforward of the orthonormal
//! round frame `(e_θ, e_φ)`: index `0` is the θ direction and `1` the φ
//! direction. `X_α = dX(e_α)`, `γ_αβ = g(X_α, X_β)` and the outward unit
//! normal `ν` satisfies `g(ν, p) > 0`. With `A_αβ = g(∇_{X_α} ν, X_β)` a
//! round Euclidean sphere has `H > 0`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::ambient::{constraint_densities, eval_ambient, AmbientError, DataFamily};
use crate::sphere::{FieldDerivatives, SphereError, SphericalGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("graph condition violated at node {node}: g^e(ν^e, ρ) = {cosine}")]
    GraphCondition { node: usize, cosine: f64 },
    #[error("surface leaves the chart domain: r_min = {r_min} ≤ 2σ = {limit}")]
    ChartDomain { r_min: f64, limit: f64 },
    #[error("degenerate induced metric at node {0}")]
    Degenerate(usize),
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
}

/// Radial graph over the unit sphere, stored as harmonic coefficients of `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSurface {
    pub coeffs: Vec<f64>,
}

impl GraphSurface {
    /// Centered coordinate sphere of radius `r`.
    pub fn sphere(grid: &SphericalGrid, r: f64) -> Self {
        let mut coeffs = vec![0.0; grid.n_coeffs()];
        coeffs[0] = r * (4.0 * PI).sqrt();
        Self { coeffs }
    }

    /// Degree-`L` projection of nodal radii.
    pub fn from_nodal(grid: &SphericalGrid, values: &[f64]) -> Result<Self, SphereError> {
        Ok(Self {
            coeffs: grid.analysis(values)?,
        })
    }

    pub fn values(&self, grid: &SphericalGrid) -> Result<Vec<f64>, SphereError> {
        grid.synthesis(&self.coeffs)
    }

    /// Radial function of the Euclidean sphere of radius `radius` centered at
    /// `center` (which must lie inside it), projected to degree `L`.
    pub fn shifted_sphere(grid: &SphericalGrid, radius: f64, center: Vector3<f64>) -> Result<Self, SphereError> {
        let values: Vec<f64> = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                let b = p.dot(&center);
                b + (b * b - center.norm_squared() + radius * radius).sqrt()
            })
            .collect();
        Self::from_nodal(grid, &values)
    }
}

/// Per-node geometric data of a surface.
#[derive(Debug, Clone)]
pub struct NodeGeometry {
    pub x: Vector3<f64>,
    /// `(p, e_θ, e_φ)` of the round sphere.
    pub frame: [Vector3<f64>; 3],
    pub tangents: [Vector3<f64>; 2],
    /// `g`-unit normal vector.
    pub normal: Vector3<f64>,
    /// Euclidean unit normal.
    pub normal_e: Vector3<f64>,
    pub gamma: Matrix2<f64>,
    pub gamma_inv: Matrix2<f64>,
    /// `dμ / dω` and `dμ^e / dω` with `dω` the round measure.
    pub area: f64,
    pub area_e: f64,
    pub a: Matrix2<f64>,
    pub h: f64,
    /// Difference of the induced and round connections, `christoffel[κ][(α, β)] = C^κ_αβ`.
    pub christoffel: [Matrix2<f64>; 2],
    pub tr_k: f64,
    pub k_nn: f64,
    pub p: f64,
    pub k_tan: Matrix2<f64>,
    pub theta: Vector2<f64>,
    pub ric_nn: f64,
    pub scal: f64,
    pub grad_k_nnn: f64,
    pub grad_trk_n: f64,
    /// `16πμ` and `8πJ(ν)`.
    pub energy: f64,
    pub momentum_n: f64,
    pub k_sq: f64,
    /// `g(ρ, ν)`: normal speed per unit radial displacement.
    pub q: f64,
}

fn norm_sq(gi: &Matrix2<f64>, t: &Matrix2<f64>) -> f64 {
    (gi * t * gi * t).trace()
}

impl NodeGeometry {
    pub fn shape(&self) -> Matrix2<f64> {
        self.gamma_inv * self.a
    }

    pub fn det_shape(&self) -> f64 {
        self.shape().determinant()
    }

    pub fn a_sq(&self) -> f64 {
        norm_sq(&self.gamma_inv, &self.a)
    }

    pub fn a_ring(&self) -> Matrix2<f64> {
        self.a - self.gamma * (0.5 * self.h)
    }

    pub fn a_ring_sq(&self) -> f64 {
        norm_sq(&self.gamma_inv, &self.a_ring())
    }

    pub fn k_tan_ring(&self) -> Matrix2<f64> {
        self.k_tan - self.gamma * (0.5 * self.p)
    }

    pub fn theta_sq(&self) -> f64 {
        self.theta.dot(&(self.gamma_inv * self.theta))
    }

    /// `det A − Ric(ν,ν) + Scal/2`: the Gauss equation with `G = 1/r²` on
    /// Euclidean spheres.
    pub fn gauss_curvature(&self) -> f64 {
        self.det_shape() - self.ric_nn + 0.5 * self.scal
    }

    /// `det A + Ric(ν,ν) − Scal/2`, the variant with the opposite ambient sign.
    pub fn gauss_curvature_flipped(&self) -> f64 {
        self.det_shape() + self.ric_nn - 0.5 * self.scal
    }

    pub fn convexity(&self) -> f64 {
        4.0 * self.det_shape() - self.a_sq()
    }
}

/// Full geometry of a graph surface.
#[derive(Debug, Clone)]
pub struct SurfaceGeometry {
    pub nodes: Vec<NodeGeometry>,
    pub u: FieldDerivatives,
    /// `+1` for `H + P`, `−1` for `H − P`.
    pub sign: f64,
}

impl SurfaceGeometry {
    fn collect<F: Fn(&NodeGeometry) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(f).collect()
    }

    pub fn mean_curvature(&self) -> Vec<f64> {
        self.collect(|n| n.h)
    }

    pub fn p_values(&self) -> Vec<f64> {
        self.collect(|n| n.p)
    }

    /// `H ± P` at every node.
    pub fn curvature_function(&self) -> Vec<f64> {
        let s = self.sign;
        self.collect(|n| n.h + s * n.p)
    }

    pub fn area_element(&self) -> Vec<f64> {
        self.collect(|n| n.area)
    }

    pub fn area_element_e(&self) -> Vec<f64> {
        self.collect(|n| n.area_e)
    }

    pub fn gauss_curvature(&self) -> Vec<f64> {
        self.collect(|n| n.gauss_curvature())
    }

    pub fn radial_factor(&self) -> Vec<f64> {
        self.collect(|n| n.q)
    }

    /// `Δ_γ f` at every node for a band-limited `f` given by coefficients.
    pub fn laplace_beltrami(&self, grid: &SphericalGrid, coeffs: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let d = grid.derivatives(coeffs)?;
        Ok(self.laplace_beltrami_from(&d))
    }

    pub fn laplace_beltrami_from(&self, d: &FieldDerivatives) -> Vec<f64> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let grad = Vector2::new(d.d_theta[i], d.d_phi[i]);
                let hess = Matrix2::new(d.hess_tt[i], d.hess_tp[i], d.hess_tp[i], d.hess_pp[i]);
                let mut acc = n.gamma_inv.component_mul(&hess).sum();
                for k in 0..2 {
                    acc -= n.gamma_inv.component_mul(&n.christoffel[k]).sum() * grad[k];
                }
                acc
            })
            .collect()
    }

    /// Gauss curvature from the induced metric alone: the scalar curvature of
    /// `γ` computed from the connection difference `C` and its round
    /// covariant derivative.
    pub fn intrinsic_gauss_curvature(&self, grid: &SphericalGrid) -> Result<Vec<f64>, GeometryError> {
        let dc = self.round_derivative_of_connection(grid)?;
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let c = &n.christoffel;
                // dc[i][μ][κ][(α, β)] = ∇̊_μ C^κ_αβ
                let d = &dc[i];
                let mut scal = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        let mut ric = if a == b { 1.0 } else { 0.0 };
                        for k in 0..2 {
                            ric += d[k][k][(a, b)] - d[b][k][(k, a)];
                            for l in 0..2 {
                                ric += c[k][(k, l)] * c[l][(a, b)] - c[k][(b, l)] * c[l][(k, a)];
                            }
                        }
                        scal += n.gamma_inv[(a, b)] * ric;
                    }
                }
                0.5 * scal
            })
            .collect())
    }

    fn round_derivative_of_connection(
        &self,
        grid: &SphericalGrid,
    ) -> Result<Vec<[[Matrix2<f64>; 2]; 2]>, GeometryError> {
        let n = self.nodes.len();
        let mut out = vec![[[Matrix2::zeros(); 2]; 2]; n];
        let tangent = |node: &NodeGeometry, a: usize| node.frame[a + 1];
        for ca in 0..3 {
            for cb in 0..3 {
                for cc in 0..3 {
                    let comp: Vec<f64> = self
                        .nodes
                        .iter()
                        .map(|node| {
                            let mut v = 0.0;
                            for k in 0..2 {
                                for a in 0..2 {
                                    for b in 0..2 {
                                        v += node.christoffel[k][(a, b)]
                                            * tangent(node, k)[ca]
                                            * tangent(node, a)[cb]
                                            * tangent(node, b)[cc];
                                    }
                                }
                            }
                            v
                        })
                        .collect();
                    let (dt, dp) = grid.gradient(&comp)?;
                    for (i, node) in self.nodes.iter().enumerate() {
                        for (mu, dv) in [dt[i], dp[i]].into_iter().enumerate() {
                            for k in 0..2 {
                                for a in 0..2 {
                                    for b in 0..2 {
                                        out[i][mu][k][(a, b)] += dv
                                            * tangent(node, k)[ca]
                                            * tangent(node, a)[cb]
                                            * tangent(node, b)[cc];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// `|∇Å|²` at every node.
    pub fn grad_traceless_sq(&self, grid: &SphericalGrid) -> Result<Vec<f64>, GeometryError> {
        let n = self.nodes.len();
        let mut d = vec![[Matrix2::<f64>::zeros(); 2]; n];
        let tangent = |node: &NodeGeometry, a: usize| node.frame[a + 1];
        for ca in 0..3 {
            for cb in ca..3 {
                let comp: Vec<f64> = self
                    .nodes
                    .iter()
                    .map(|node| {
                        let ar = node.a_ring();
                        let mut v = 0.0;
                        for a in 0..2 {
                            for b in 0..2 {
                                v += ar[(a, b)] * tangent(node, a)[ca] * tangent(node, b)[cb];
                            }
                        }
                        v
                    })
                    .collect();
                let (dt, dp) = grid.gradient(&comp)?;
                let mult = if ca == cb { 1.0 } else { 2.0 };
                for (i, node) in self.nodes.iter().enumerate() {
                    for (mu, dv) in [dt[i], dp[i]].into_iter().enumerate() {
                        for a in 0..2 {
                            for b in 0..2 {
                                // symmetric Cartesian pair counted once
                                let w = if ca == cb {
                                    tangent(node, a)[ca] * tangent(node, b)[cb]
                                } else {
                                    0.5 * (tangent(node, a)[ca] * tangent(node, b)[cb]
                                        + tangent(node, a)[cb] * tangent(node, b)[ca])
                                };
                                d[i][mu][(a, b)] += mult * dv * w;
                            }
                        }
                    }
                }
            }
        }
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let ar = node.a_ring();
                let c = &node.christoffel;
                let cov: [Matrix2<f64>; 2] = std::array::from_fn(|mu| {
                    Matrix2::from_fn(|a, b| {
                        let mut v = d[i][mu][(a, b)];
                        for k in 0..2 {
                            v -= c[k][(mu, a)] * ar[(k, b)] + c[k][(mu, b)] * ar[(a, k)];
                        }
                        v
                    })
                });
                let gi = &node.gamma_inv;
                let mut acc = 0.0;
                for mu in 0..2 {
                    for nu in 0..2 {
                        acc += gi[(mu, nu)] * (gi * cov[mu] * gi * cov[nu].transpose()).trace();
                    }
                }
                acc
            })
            .collect())
    }
}

/// Induced geometry of the graph with the given coefficients.
pub fn compute_geometry(
    grid: &SphericalGrid,
    surface: &GraphSurface,
    family: &DataFamily,
) -> Result<SurfaceGeometry, GeometryError> {
    let u = grid.derivatives(&surface.coeffs)?;
    let r_min = u.value.iter().cloned().fold(f64::INFINITY, f64::min);
    let limit = 2.0 * family.inner_radius;
    if !(r_min > limit) {
        return Err(GeometryError::ChartDomain { r_min, limit });
    }
    let mut nodes = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        nodes.push(node_geometry(grid, family, &u, i)?);
    }
    Ok(SurfaceGeometry {
        nodes,
        u,
        sign: family.sign_branch.sign(),
    })
}

fn node_geometry(
    grid: &SphericalGrid,
    family: &DataFamily,
    u: &FieldDerivatives,
    i: usize,
) -> Result<NodeGeometry, GeometryError> {
    let frame = grid.frame(i);
    let [p, et, ep] = frame;
    let e = [et, ep];
    let uv = u.value[i];
    let du = u.gradient(i);
    let hu = u.hessian(i);
    let x = p * uv;
    let tangents = [p * du[0] + et * uv, p * du[1] + ep * uv];
    let amb = eval_ambient(family, &x)?;
    let met = &amb.metric;
    let ext = &amb.extrinsic;
    let g = &met.g;

    let mut n = tangents[0].cross(&tangents[1]);
    if n.dot(&p) < 0.0 {
        n = -n;
    }
    let area_e = n.norm();
    let normal_e = n / area_e;
    let cosine = normal_e.dot(&p);
    if !(cosine > 0.5) {
        return Err(GeometryError::GraphCondition { node: i, cosine });
    }
    let n_up = met.g_inv * n;
    let n_len = n.dot(&n_up).sqrt();
    let normal = n_up / n_len;

    let gamma = Matrix2::from_fn(|a, b| tangents[a].dot(&(g * tangents[b])));
    let det = gamma.determinant();
    if !(det > 0.0) {
        return Err(GeometryError::Degenerate(i));
    }
    let gamma_inv = gamma.try_inverse().ok_or(GeometryError::Degenerate(i))?;

    // D_αβ = Hess̊X_αβ + Γ(X_α, X_β)
    let d: [[Vector3<f64>; 2]; 2] = std::array::from_fn(|a| {
        std::array::from_fn(|b| {
            let delta = if a == b { 1.0 } else { 0.0 };
            p * (hu[a][b] - uv * delta) + e[b] * du[a] + e[a] * du[b] + met.gamma_contract(&tangents[a], &tangents[b])
        })
    });
    let a = Matrix2::from_fn(|al, be| -n.dot(&d[al][be]) / n_len);
    let h = gamma_inv.component_mul(&a).sum();
    let gx: [Vector3<f64>; 2] = [g * tangents[0], g * tangents[1]];
    let christoffel: [Matrix2<f64>; 2] = std::array::from_fn(|k| {
        Matrix2::from_fn(|al, be| {
            (0..2)
                .map(|l| gamma_inv[(k, l)] * d[al][be].dot(&gx[l]))
                .sum()
        })
    });

    let kmat: Matrix3<f64> = ext.k;
    let k_nn = normal.dot(&(kmat * normal));
    let k_tan = Matrix2::from_fn(|al, be| tangents[al].dot(&(kmat * tangents[be])));
    let theta = Vector2::new(tangents[0].dot(&(kmat * normal)), tangents[1].dot(&(kmat * normal)));
    let tr_k = ext.tr_k;
    let p_val = tr_k - k_nn;
    let ric_nn = normal.dot(&(met.ricci * normal));
    let grad_nu = ext.grad_along(&normal);
    let grad_k_nnn = normal.dot(&(grad_nu * normal));
    let grad_trk_n = ext.grad_trace(met).dot(&normal);
    let (energy, mom) = constraint_densities(&amb);
    let momentum_n = mom.dot(&normal);
    let k_up = met.g_inv * kmat * met.g_inv;
    let k_sq = k_up.component_mul(&kmat).sum();
    let q = p.dot(&(g * normal));

    Ok(NodeGeometry {
        x,
        frame,
        tangents,
        normal,
        normal_e,
        gamma,
        gamma_inv,
        area: det.sqrt(),
        area_e,
        a,
        h,
        christoffel,
        tr_k,
        k_nn,
        p: p_val,
        k_tan,
        theta,
        ric_nn,
        scal: met.scal,
        grad_k_nnn,
        grad_trk_n,
        energy,
        momentum_n,
        k_sq,
        q,
    })
}

/// Hawking mass `|Σ|^{1/2} (16π)^{-3/2} (16π − ∫H² dμ)`.
pub fn hawking_mass(grid: &SphericalGrid, geom: &SurfaceGeometry) -> f64 {
    let w = grid.weights();
    let mut area = 0.0;
    let mut willmore = 0.0;
    for (wi, n) in w.iter().zip(&geom.nodes) {
        area += wi * n.area;
        willmore += wi * n.area * n.h * n.h;
    }
    let c = 16.0 * PI;
    area.sqrt() / c.powf(1.5) * (c - willmore)
}

/// The four runtime-checked conditions at one level of constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionFlags {
    pub passed: [bool; 4],
    /// Slack of each inequality; nonnegative exactly when it holds.
    pub margins: [f64; 4],
}

impl ConditionFlags {
    /// Radius ratio `R ≤ c₁ r_min`, lower curvature bound `1/R ≤ c₂ (H ± P)`,
    /// pointwise convexity `|A|² ≤ c₃ det A`, and center bound `|a_e| ≤ c₄ R_e`.
    pub fn evaluate(s: &ConditionInputs, constants: [f64; 4]) -> Self {
        let margins = [
            constants[0] * s.r_min - s.radius_g,
            constants[1] * s.min_curvature - 1.0 / s.radius_g,
            s.min_convexity_at(constants[2]),
            constants[3] * s.radius_e - s.center_e_norm,
        ];
        Self {
            passed: margins.map(|m| m >= 0.0),
            margins,
        }
    }

    pub fn all(&self) -> bool {
        self.passed.iter().all(|&b| b)
    }
}

/// Constants of the stronger condition set.
pub const C_LEVEL: [f64; 4] = [4.0, 4.0, 4.0, 0.875];
/// Constants of the weaker condition set.
pub const B_LEVEL: [f64; 4] = [8.0, 8.0, 8.0, 0.75];

/// Scalars the condition flags depend on.
#[derive(Debug, Clone)]
pub struct ConditionInputs {
    pub radius_g: f64,
    pub radius_e: f64,
    pub r_min: f64,
    pub min_curvature: f64,
    pub center_e_norm: f64,
    /// Pointwise `(det A, |A|²)`.
    pub shape_pairs: Vec<(f64, f64)>,
}

impl ConditionInputs {
    fn min_convexity_at(&self, c: f64) -> f64 {
        self.shape_pairs
            .iter()
            .map(|(d, a)| c * d - a)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Summary scalars of a surface.
#[derive(Debug, Clone)]
pub struct SurfaceSummary {
    pub area: f64,
    pub area_e: f64,
    pub radius_e: f64,
    pub radius_g: f64,
    pub r_min: f64,
    pub center_e: Vector3<f64>,
    pub center_g: Vector3<f64>,
    pub hawking_mass: f64,
    pub traceless_l2: f64,
    pub grad_traceless_l2: f64,
    pub min_curvature: f64,
    pub max_curvature: f64,
    pub convexity_margin: f64,
    pub flags_c: ConditionFlags,
    pub flags_b: ConditionFlags,
    pub phi_bar: f64,
    pub h_bar: f64,
}

/// Quadrature summaries and condition flags.
pub fn summarize(
    grid: &SphericalGrid,
    geom: &SurfaceGeometry,
    family: &DataFamily,
) -> Result<SurfaceSummary, GeometryError> {
    let w = grid.weights();
    let mut area = 0.0;
    let mut area_e = 0.0;
    let mut ce = Vector3::zeros();
    let mut cg = Vector3::zeros();
    let mut aring = 0.0;
    for (wi, n) in w.iter().zip(&geom.nodes) {
        area += wi * n.area;
        area_e += wi * n.area_e;
        ce += n.x * (wi * n.area_e);
        cg += n.x * (wi * n.area);
        aring += wi * n.area * n.a_ring_sq();
    }
    let grad_sq = geom.grad_traceless_sq(grid)?;
    let grad_traceless = w
        .iter()
        .zip(&geom.nodes)
        .zip(&grad_sq)
        .map(|((wi, n), g)| wi * n.area * g)
        .sum::<f64>();
    let center_e = ce / area_e;
    let center_g = cg / area;
    let radius_e = (area_e / (4.0 * PI)).sqrt();
    let radius_g = (area / (4.0 * PI)).sqrt();
    let r_min = geom.u.value.iter().cloned().fold(f64::INFINITY, f64::min);
    let curv = geom.curvature_function();
    let min_curvature = curv.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_curvature = curv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let convexity_margin = geom.nodes.iter().map(|n| n.convexity()).fold(f64::INFINITY, f64::min);
    let inputs = ConditionInputs {
        radius_g,
        radius_e,
        r_min,
        min_curvature,
        center_e_norm: center_e.norm(),
        shape_pairs: geom.nodes.iter().map(|n| (n.det_shape(), n.a_sq())).collect(),
    };
    let m = family.effective_mass();
    let phi_bar = 1.0 + m / (2.0 * radius_e);
    let h_bar = 2.0 / (phi_bar * phi_bar * radius_e) - 2.0 * m / (phi_bar.powi(3) * radius_e * radius_e);
    Ok(SurfaceSummary {
        area,
        area_e,
        radius_e,
        radius_g,
        r_min,
        center_e,
        center_g,
        hawking_mass: hawking_mass(grid, geom),
        traceless_l2: aring.sqrt(),
        grad_traceless_l2: grad_traceless.sqrt(),
        min_curvature,
        max_curvature,
        convexity_margin,
        flags_c: ConditionFlags::evaluate(&inputs, C_LEVEL),
        flags_b: ConditionFlags::evaluate(&inputs, B_LEVEL),
        phi_bar,
        h_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ambient::{schwarzschild_sphere_mean_curvature, SignBranch};
    use crate::sphere::coeff_index;

    fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
        v.into_iter().fold(0.0, |a, x| a.max(x.abs()))
    }

    #[test]
    fn unit_sphere_in_flat_space() {
        let grid = SphericalGrid::new(12).unwrap();
        let s = GraphSurface::sphere(&grid, 1.0);
        let geom = compute_geometry(&grid, &s, &DataFamily::euclidean()).unwrap();
        for n in &geom.nodes {
            assert!((n.h - 2.0).abs() < 1e-12);
            assert!(n.a_ring_sq() < 1e-24);
            assert!((n.gauss_curvature() - 1.0).abs() < 1e-12);
            assert_eq!(n.p, 0.0);
            assert!((n.a - n.gamma).amax() < 1e-12);
        }
        let sum = summarize(&grid, &geom, &DataFamily::euclidean()).unwrap();
        assert!((sum.radius_e - 1.0).abs() < 1e-12);
        assert!(sum.center_e.norm() < 1e-14);
        assert!(sum.hawking_mass.abs() < 1e-12);
        assert!(sum.traceless_l2 < 1e-12);
        assert!((sum.convexity_margin - 2.0).abs() < 1e-12);
        assert!(sum.flags_c.all() && sum.flags_b.all());
    }

    #[test]
    fn euclidean_sphere_of_radius_r() {
        let grid = SphericalGrid::new(10).unwrap();
        for r in [0.5, 3.0, 40.0] {
            let geom = compute_geometry(&grid, &GraphSurface::sphere(&grid, r), &DataFamily::euclidean()).unwrap();
            let gi = geom.intrinsic_gauss_curvature(&grid).unwrap();
            for (n, g) in geom.nodes.iter().zip(&gi) {
                assert!((n.a - n.gamma / r).amax() < 1e-10 * r);
                assert!((n.gauss_curvature() - 1.0 / (r * r)).abs() < 1e-10 / (r * r));
                assert!((g - 1.0 / (r * r)).abs() < 1e-9 / (r * r));
            }
        }
    }

    #[test]
    fn schwarzschild_sphere_closed_forms() {
        let grid = SphericalGrid::new(10).unwrap();
        let f = DataFamily::schwarzschild(2.0);
        let geom = compute_geometry(&grid, &GraphSurface::sphere(&grid, 10.0), &f).unwrap();
        let phi: f64 = 1.1;
        let h = schwarzschild_sphere_mean_curvature(2.0, 10.0);
        assert!((h - 0.13523666).abs() < 1e-8);
        for n in &geom.nodes {
            assert!((n.h - h).abs() < 1e-13);
            assert!((n.normal - n.frame[0] / (phi * phi)).norm() < 1e-12);
            assert!((n.area - phi.powi(4) * 100.0).abs() < 1e-10);
            assert!((n.q - phi * phi).abs() < 1e-12);
            assert!((n.ric_nn + 4.0 / (1000.0 * phi.powi(6))).abs() < 1e-15);
        }
        let sum = summarize(&grid, &geom, &f).unwrap();
        assert!((sum.hawking_mass - 2.0).abs() < 1e-8);
        assert!((sum.h_bar - h).abs() < 1e-12);
    }

    #[test]
    fn york_p_at_north_pole() {
        let grid = SphericalGrid::new(31).unwrap();
        let f = DataFamily::schwarzschild(2.0).with_york([0.0, 0.0, 0.1]);
        let geom = compute_geometry(&grid, &GraphSurface::sphere(&grid, 10.0), &f).unwrap();
        let n = &geom.nodes[0];
        let c = n.frame[0][2];
        // leading York term restricted to the sphere: P = −φ^{-4} 3 p₃ cos θ / r²
        let expect = -3.0 * 0.1 * c / (100.0 * 1.1f64.powi(4));
        assert!((n.p - expect).abs() < 1e-15);
        // extrapolated to the pole itself
        assert!((n.p / c + 0.0020490).abs() < 1e-7);
    }

    #[test]
    fn normal_and_traceless_invariants_on_wobbly_surface() {
        let grid = SphericalGrid::new(16).unwrap();
        let mut s = GraphSurface::sphere(&grid, 12.0);
        s.coeffs[coeff_index(2, 0)] = 0.6;
        s.coeffs[coeff_index(3, -2)] = 0.3;
        s.coeffs[coeff_index(1, 1)] = 0.9;
        let f = DataFamily::perturbed(1.0, 0.5, 0.01).with_york([0.02, 0.0, 0.1]);
        let geom = compute_geometry(&grid, &s, &f).unwrap();
        let met = |x: &Vector3<f64>| crate::ambient::eval_metric(&f, x).unwrap();
        for n in &geom.nodes {
            let m = met(&n.x);
            assert!((m.inner(&n.normal, &n.normal) - 1.0).abs() < 1e-10);
            for t in &n.tangents {
                assert!(m.inner(&n.normal, t).abs() < 1e-10);
            }
            let tr = n.gamma_inv.component_mul(&n.a_ring()).sum();
            assert!(tr.abs() < 1e-10);
            assert!((n.gamma_inv.component_mul(&n.k_tan).sum() - n.p).abs() < 1e-12);
        }
    }

    #[test]
    fn intrinsic_and_extrinsic_gauss_curvature_agree() {
        let grid = SphericalGrid::new(24).unwrap();
        let mut s = GraphSurface::sphere(&grid, 6.0);
        s.coeffs[coeff_index(2, 0)] = 0.4;
        s.coeffs[coeff_index(2, 2)] = -0.3;
        for f in [DataFamily::euclidean(), DataFamily::perturbed(1.0, 0.5, 0.05)] {
            let geom = compute_geometry(&grid, &s, &f).unwrap();
            let gi = geom.intrinsic_gauss_curvature(&grid).unwrap();
            let ext = geom.gauss_curvature();
            let flipped: Vec<f64> = geom.nodes.iter().map(|n| n.gauss_curvature_flipped()).collect();
            let err = max_abs(gi.iter().zip(&ext).map(|(a, b)| a - b));
            assert!(err < 1e-9, "{err}");
            if f.mass > 0.0 {
                let err_f = max_abs(gi.iter().zip(&flipped).map(|(a, b)| a - b));
                assert!(err_f > 1e-5);
            }
        }
    }

    #[test]
    fn gauss_bonnet() {
        let grid = SphericalGrid::new(24).unwrap();
        let mut s = GraphSurface::sphere(&grid, 5.0);
        s.coeffs[coeff_index(3, 1)] = 0.5;
        let f = DataFamily::perturbed(1.0, 0.5, 0.05);
        let geom = compute_geometry(&grid, &s, &f).unwrap();
        let g = geom.gauss_curvature();
        let total = grid.quadrature(&g, &geom.area_element()).unwrap();
        assert!((total - 4.0 * PI).abs() < 1e-8);
    }

    #[test]
    fn laplace_beltrami_on_spheres() {
        let grid = SphericalGrid::new(12).unwrap();
        let r = 3.0;
        let geom = compute_geometry(&grid, &GraphSurface::sphere(&grid, r), &DataFamily::euclidean()).unwrap();
        for (l, m) in [(1usize, 0i64), (2, -1), (5, 3), (10, -10)] {
            let mut c = vec![0.0; grid.n_coeffs()];
            c[coeff_index(l, m)] = 1.0;
            let lap = geom.laplace_beltrami(&grid, &c).unwrap();
            let y = grid.synthesis(&c).unwrap();
            let lam = -((l * (l + 1)) as f64) / (r * r);
            assert!(max_abs(lap.iter().zip(&y).map(|(a, b)| a - lam * b)) < 1e-9);
        }
        let mut s = GraphSurface::sphere(&grid, 1.0);
        s.coeffs[coeff_index(2, 0)] = 0.1;
        let geom = compute_geometry(&grid, &s, &DataFamily::perturbed(1.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(geom, GeometryError::ChartDomain { .. }));
        let geom = compute_geometry(&grid, &s, &DataFamily::euclidean()).unwrap();
        let mut c = vec![0.0; grid.n_coeffs()];
        c[0] = 2.0;
        assert!(max_abs(geom.laplace_beltrami(&grid, &c).unwrap()) < 1e-11);
    }

    #[test]
    fn laplace_beltrami_is_self_adjoint_and_kills_constants_in_mean() {
        // ∫ f Δg dμ = ∫ g Δf dμ on a deformed surface
        let grid = SphericalGrid::new(20).unwrap();
        let mut s = GraphSurface::sphere(&grid, 4.0);
        s.coeffs[coeff_index(2, 0)] = 0.4;
        s.coeffs[coeff_index(3, 1)] = 0.2;
        let geom = compute_geometry(&grid, &s, &DataFamily::perturbed(1.0, 0.5, 0.02)).unwrap();
        let mut a = vec![0.0; grid.n_coeffs()];
        let mut b = vec![0.0; grid.n_coeffs()];
        a[coeff_index(1, 0)] = 1.0;
        a[coeff_index(2, 1)] = 0.5;
        b[coeff_index(3, -1)] = 1.0;
        b[coeff_index(1, 1)] = -0.7;
        let fa = grid.synthesis(&a).unwrap();
        let fb = grid.synthesis(&b).unwrap();
        let la = geom.laplace_beltrami(&grid, &a).unwrap();
        let lb = geom.laplace_beltrami(&grid, &b).unwrap();
        let mu = geom.area_element();
        let x: Vec<f64> = fa.iter().zip(&lb).map(|(x, y)| x * y).collect();
        let y: Vec<f64> = fb.iter().zip(&la).map(|(x, y)| x * y).collect();
        let ix = grid.quadrature(&x, &mu).unwrap();
        let iy = grid.quadrature(&y, &mu).unwrap();
        assert!((ix - iy).abs() < 1e-8 * ix.abs().max(1e-3), "{ix} {iy}");
        assert!(grid.quadrature(&la, &mu).unwrap().abs() < 1e-8);
    }

    #[test]
    fn translated_sphere_center_and_area() {
        let grid = SphericalGrid::new(31).unwrap();
        let s = GraphSurface::shifted_sphere(&grid, 1.0, Vector3::new(0.5, 0.0, 0.0)).unwrap();
        let f = DataFamily::euclidean();
        let geom = compute_geometry(&grid, &s, &f).unwrap();
        let sum = summarize(&grid, &geom, &f).unwrap();
        assert!((sum.center_e - Vector3::new(0.5, 0.0, 0.0)).norm() < 1e-8);
        assert!((sum.radius_e - 1.0).abs() < 1e-8);
        assert!(sum.traceless_l2 < 1e-6);
    }

    #[test]
    fn hawking_mass_of_schwarzschild_spheres() {
        let grid = SphericalGrid::new(8).unwrap();
        for r in [0.6, 2.0, 10.0, 300.0] {
            let mut f = DataFamily::schwarzschild(1.0);
            f.inner_radius = 0.2;
            let geom = compute_geometry(&grid, &GraphSurface::sphere(&grid, r), &f).unwrap();
            assert!((hawking_mass(&grid, &geom) - 1.0).abs() < 1e-8, "r={r}");
        }
        for r in [0.5, 7.0] {
            let f = DataFamily::euclidean();
            let geom = compute_geometry(&grid, &GraphSurface::sphere(&grid, r), &f).unwrap();
            assert!(hawking_mass(&grid, &geom).abs() < 1e-10);
        }
    }

    #[test]
    fn graph_condition_is_enforced() {
        let grid = SphericalGrid::new(16).unwrap();
        let mut s = GraphSurface::sphere(&grid, 1.0);
        s.coeffs[coeff_index(8, 0)] = 0.6;
        let err = compute_geometry(&grid, &s, &DataFamily::euclidean()).unwrap_err();
        assert!(matches!(err, GeometryError::GraphCondition { .. } | GeometryError::ChartDomain { .. }));
    }

    #[test]
    fn branch_sign_enters_curvature_function() {
        let grid = SphericalGrid::new(8).unwrap();
        let f = DataFamily::schwarzschild(1.0).with_york([0.0, 0.0, 0.1]);
        let s = GraphSurface::sphere(&grid, 10.0);
        let plus = compute_geometry(&grid, &s, &f).unwrap();
        let minus = compute_geometry(&grid, &s, &f.clone().with_branch(SignBranch::Minus)).unwrap();
        for ((a, b), n) in plus.curvature_function().iter().zip(minus.curvature_function()).zip(&plus.nodes) {
            assert!((a - b - 2.0 * n.p).abs() < 1e-15);
        }
    }
}
