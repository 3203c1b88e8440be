//! The manifold Sobolev-informed loss: batch-mean value residuals,
//! lambda-weighted intrinsic gradient residuals (tangent projection at each
//! sample, identity transport), and a beta-weighted Laplacian penalty through
//! the mesh cotangent operator — together with the exact parameter gradient.
//!
//! Also the smoothness constant L_sob(theta) = C (1+lambda) S(theta) (with
//! the SO(3) closed form (1+lambda) ||J_theta u||_F^2) and the
//! curvature-explicit PL lower bound.

use crate::error::{Error, Result};
use crate::manifold::{GeometryPackage, ManifoldPoint, TangentVector};
use crate::mesh::{apply_laplacian, LaplaceOperator, TriMesh};
use crate::net::{evaluate, spectral_bound, spectral_bound_so3, NeedFlags, NetParams};
use crate::scalar::{norm, Real};

/// One labeled sample: a manifold point, optionally tied to a mesh vertex id
/// (required when the batch carries a mesh context).
#[derive(Debug, Clone)]
pub struct Sample<R> {
    pub point: ManifoldPoint<R>,
    pub vertex: Option<usize>,
}

/// Mesh data backing the beta-term and vertex tangent planes.
#[derive(Debug, Clone)]
pub struct MeshContext<'a, R> {
    pub mesh: &'a TriMesh<R>,
    pub op: &'a LaplaceOperator<R>,
    /// Unit area-weighted vertex normals.
    pub normals: Vec<[R; 3]>,
}

impl<'a, R: Real> MeshContext<'a, R> {
    pub fn new(mesh: &'a TriMesh<R>, op: &'a LaplaceOperator<R>) -> Self {
        let n = mesh.vertices.len();
        let mut normals = vec![[R::zero(); 3]; n];
        for f in &mesh.faces {
            let a = &mesh.vertices[f[0]];
            let b = &mesh.vertices[f[1]];
            let c = &mesh.vertices[f[2]];
            let e1 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let e2 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let nrm = [
                e1[1] * e2[2] - e1[2] * e2[1],
                e1[2] * e2[0] - e1[0] * e2[2],
                e1[0] * e2[1] - e1[1] * e2[0],
            ];
            for &vi in f {
                for d in 0..3 {
                    normals[vi][d] += nrm[d];
                }
            }
        }
        for nrm in normals.iter_mut() {
            let nn = norm(nrm);
            if nn > R::of(1e-14) {
                for x in nrm.iter_mut() {
                    *x = *x / nn;
                }
            }
        }
        MeshContext { mesh, op, normals }
    }
}

/// A mini-batch with value labels and optional gradient labels/mesh context.
pub struct LabeledBatch<'a, R> {
    pub samples: Vec<Sample<R>>,
    /// B x m row-major value labels.
    pub values: Vec<R>,
    pub m: usize,
    /// Per sample, m gradient-label tangent vectors (one per output).
    pub grads: Option<Vec<Vec<TangentVector<R>>>>,
    pub mesh: Option<MeshContext<'a, R>>,
}

impl<'a, R: Real> LabeledBatch<'a, R> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let b = self.samples.len();
        if b == 0 {
            return Err(Error::Validation("empty batch".into()));
        }
        if self.values.len() != b * self.m {
            return Err(Error::Shape(format!(
                "values length {} != B*m = {}*{}",
                self.values.len(),
                b,
                self.m
            )));
        }
        let kind = self.samples[0].point.kind;
        for s in &self.samples {
            if s.point.kind != kind {
                return Err(Error::Validation("mixed manifold kinds in batch".into()));
            }
            if self.mesh.is_some() && s.vertex.is_none() {
                return Err(Error::Validation(
                    "mesh context attached but sample has no vertex id".into(),
                ));
            }
        }
        if let Some(grads) = &self.grads {
            if grads.len() != b {
                return Err(Error::Shape("gradient labels length != B".into()));
            }
            for (s, gs) in self.samples.iter().zip(grads) {
                if gs.len() != self.m {
                    return Err(Error::Shape("gradient labels per sample != m".into()));
                }
                for g in gs {
                    if g.base.kind != s.point.kind {
                        return Err(Error::Validation(
                            "gradient label based on wrong manifold kind".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Tangent-space dimension of the gradient residuals.
    pub fn tangent_dim(&self) -> usize {
        self.samples[0].point.kind.tangent_dim()
    }
}

/// Everything evaluate_loss produces. The three gradient parts are
/// unweighted, so the optimizer can re-assemble totals for a different
/// lambda without re-running the network (the Laplace part is only filled
/// when beta > 0 at evaluation time).
#[derive(Debug, Clone)]
pub struct LossBreakdown<R> {
    pub total: R,
    pub value_term: R,
    /// Unweighted gradient-residual term (multiplied by lambda in total).
    pub sobolev_term: R,
    /// Unweighted Laplacian term (multiplied by beta in total).
    pub laplace_term: R,
    pub grad_theta: Vec<R>,
    /// Gradient of value_term.
    pub grad_value_part: Vec<R>,
    /// Gradient of sobolev_term (empty when gradient labels are absent).
    pub grad_sobolev_part: Vec<R>,
    /// Gradient of laplace_term (empty when beta = 0).
    pub grad_laplace_part: Vec<R>,
    /// B x m value residuals.
    pub r_value: Vec<R>,
    /// B x (m * tangent_dim) gradient residuals (tangent components).
    pub r_grad: Vec<R>,
}

impl<R: Real> LossBreakdown<R> {
    /// Re-assemble (total, grad_theta) for different weights. The Laplace
    /// part must have been computed (beta > 0 originally) if `beta > 0` here.
    pub fn totals_for(&self, lambda: R, beta: R) -> (R, Vec<R>) {
        let total = self.value_term + lambda * self.sobolev_term + beta * self.laplace_term;
        let mut grad = self.grad_value_part.clone();
        if !self.grad_sobolev_part.is_empty() {
            for (g, &s) in grad.iter_mut().zip(&self.grad_sobolev_part) {
                *g += lambda * s;
            }
        }
        if !self.grad_laplace_part.is_empty() {
            for (g, &s) in grad.iter_mut().zip(&self.grad_laplace_part) {
                *g += beta * s;
            }
        }
        (total, grad)
    }
}

/// lambda/beta weights of Eq. 1.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights<R> {
    pub lambda: R,
    pub beta: R,
}

impl<R: Real> LossWeights<R> {
    pub fn new(lambda: R, beta: R) -> Result<Self> {
        if lambda < R::zero() || beta < R::zero() {
            return Err(Error::Validation("lambda and beta must be >= 0".into()));
        }
        Ok(LossWeights { lambda, beta })
    }
}

/// Tangent-projection matrix (tangent_dim x ambient_dim) of a sample:
/// identity on charts, I - pp^T on the sphere, the skew-vee map on SO(3),
/// and I - nn^T on mesh vertices.
pub(crate) fn projection_matrix<R: Real>(
    sample: &Sample<R>,
    mesh: &Option<MeshContext<'_, R>>,
) -> Result<Vec<R>> {
    if let (Some(ctx), Some(v)) = (mesh, sample.vertex) {
        let n = &ctx.normals[v];
        let mut p = vec![R::zero(); 9];
        for i in 0..3 {
            for j in 0..3 {
                let id = if i == j { R::one() } else { R::zero() };
                p[i * 3 + j] = id - n[i] * n[j];
            }
        }
        return Ok(p);
    }
    let kind = sample.point.kind;
    let (td, ad) = (kind.tangent_dim(), kind.ambient_dim());
    let mut p = vec![R::zero(); td * ad];
    // columns: image of each ambient basis vector under the projection
    let mut basis = vec![R::zero(); ad];
    for j in 0..ad {
        basis[j] = R::one();
        let t = crate::manifold::project_to_tangent(&sample.point, &basis)?;
        for i in 0..td {
            p[i * ad + j] = t.components[i];
        }
        basis[j] = R::zero();
    }
    Ok(p)
}

/// Eq. 1 on a mini-batch, with the exact parameter gradient.
pub fn evaluate_loss<R: Real>(
    params: &NetParams<R>,
    batch: &LabeledBatch<'_, R>,
    weights: &LossWeights<R>,
) -> Result<LossBreakdown<R>> {
    batch.validate()?;
    let b = batch.len();
    let m = batch.m;
    let p = params.n_params();
    let td = batch.tangent_dim();
    let ad = batch.samples[0].point.kind.ambient_dim();
    if params.d_out() != m {
        return Err(Error::Shape(format!(
            "net output dim {} != label dim {}",
            params.d_out(),
            m
        )));
    }
    let need_grads = weights.lambda > R::zero() || batch.grads.is_some();
    if weights.lambda > R::zero() && batch.grads.is_none() {
        return Err(Error::MissingLabel(
            "lambda > 0 requires gradient labels".into(),
        ));
    }
    if weights.beta > R::zero() && batch.mesh.is_none() {
        return Err(Error::MissingLabel(
            "beta > 0 requires a mesh context".into(),
        ));
    }
    let metric_w: R = batch.samples[0].point.kind.metric_weight();
    let binv = R::one() / R::of_usize(b);

    let flags = NeedFlags {
        input_jacobian: need_grads,
        param_jacobian_value: true,
        param_jacobian_gradient: need_grads,
    };
    let bundles: Vec<Result<crate::net::EvalBundle<R>>> =
        crate::parallel::map_indexed(b, |i| {
            evaluate(params, &batch.samples[i].point.coords, flags)
        });

    let mut value_term = R::zero();
    let mut sobolev_term = R::zero();
    let mut grad_value_part = vec![R::zero(); p];
    let mut grad_sobolev_part = if need_grads { vec![R::zero(); p] } else { Vec::new() };
    let mut r_value = vec![R::zero(); b * m];
    let mut r_grad = vec![R::zero(); b * m * td];

    for (i, bundle) in bundles.into_iter().enumerate() {
        let bundle = bundle?;
        // value residual
        for c in 0..m {
            let r = bundle.value[c] - batch.values[i * m + c];
            r_value[i * m + c] = r;
            value_term += r * r * binv;
            let jrow = &bundle.param_jacobian_value[c * p..(c + 1) * p];
            let scale = R::of(2.0) * r * binv;
            for (g, &jk) in grad_value_part.iter_mut().zip(jrow) {
                *g += scale * jk;
            }
        }
        if need_grads {
            let proj = projection_matrix(&batch.samples[i], &batch.mesh)?;
            let labels = &batch.grads.as_ref().unwrap()[i];
            for c in 0..m {
                // intrinsic prediction gradient: project the ambient row
                let arow = &bundle.input_jacobian[c * ad..(c + 1) * ad];
                let mut res = vec![R::zero(); td];
                for t in 0..td {
                    let mut s = R::zero();
                    for j in 0..ad {
                        s += proj[t * ad + j] * arow[j];
                    }
                    res[t] = s - labels[c].components[t];
                    r_grad[(i * m + c) * td + t] = res[t];
                }
                let rsq: R = res.iter().map(|x| *x * *x).sum();
                sobolev_term += metric_w * rsq * binv;
                // pull the residual back through the projection:
                // rp = P^T res, then contract with d(J_row)/d(theta)
                let mut rp = vec![R::zero(); ad];
                for t in 0..td {
                    for j in 0..ad {
                        rp[j] += proj[t * ad + j] * res[t];
                    }
                }
                let scale = R::of(2.0) * metric_w * binv;
                for j in 0..ad {
                    if rp[j] == R::zero() {
                        continue;
                    }
                    let grow = &bundle.param_jacobian_gradient
                        [(c * ad + j) * p..(c * ad + j + 1) * p];
                    let s = scale * rp[j];
                    for (g, &gk) in grad_sobolev_part.iter_mut().zip(grow) {
                        *g += s * gk;
                    }
                }
            }
        }
    }

    // beta-term: area-normalized Laplacian of the full vertex field,
    // batch-mean of the sampled rows; gradient via the W^T composition
    let mut laplace_term = R::zero();
    let mut grad_laplace_part = Vec::new();
    if weights.beta > R::zero() {
        grad_laplace_part = vec![R::zero(); p];
        let (lap_rows, dl_du) = laplace_field(params, batch)?;
        for i in 0..b {
            let mut s = R::zero();
            for c in 0..m {
                s += lap_rows[i * m + c] * lap_rows[i * m + c];
            }
            laplace_term += s * binv;
        }
        // dL/dtheta = sum_v (dL/dU)[v,:] . J_theta u(x_v)
        let ctx = batch.mesh.as_ref().unwrap();
        let n = ctx.op.n();
        for v in 0..n {
            let row = &dl_du[v * m..(v + 1) * m];
            if row.iter().all(|x| *x == R::zero()) {
                continue;
            }
            let bundle = evaluate(
                params,
                vertex_coords(ctx, v).as_slice(),
                NeedFlags { param_jacobian_value: true, ..NeedFlags::default() },
            )?;
            for c in 0..m {
                if row[c] == R::zero() {
                    continue;
                }
                let jrow = &bundle.param_jacobian_value[c * p..(c + 1) * p];
                let s = row[c];
                for (g, &jk) in grad_laplace_part.iter_mut().zip(jrow) {
                    *g += s * jk;
                }
            }
        }
    }

    let total = value_term + weights.lambda * sobolev_term + weights.beta * laplace_term;
    let mut grad_theta = grad_value_part.clone();
    for (g, &s) in grad_theta.iter_mut().zip(grad_sobolev_part.iter()) {
        *g += weights.lambda * s;
    }
    for (g, &s) in grad_theta.iter_mut().zip(grad_laplace_part.iter()) {
        *g += weights.beta * s;
    }
    if !total.is_finite() || grad_theta.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("loss or gradient is not finite".into()));
    }
    Ok(LossBreakdown {
        total,
        value_term,
        sobolev_term,
        laplace_term,
        grad_theta,
        grad_value_part,
        grad_sobolev_part,
        grad_laplace_part,
        r_value,
        r_grad,
    })
}

/// Loss terms only (no parameter derivatives) — used for line searches and
/// descent checks where only the objective value is needed.
pub fn evaluate_loss_value<R: Real>(
    params: &NetParams<R>,
    batch: &LabeledBatch<'_, R>,
    weights: &LossWeights<R>,
) -> Result<R> {
    batch.validate()?;
    let b = batch.len();
    let m = batch.m;
    let td = batch.tangent_dim();
    let ad = batch.samples[0].point.kind.ambient_dim();
    let need_grads = weights.lambda > R::zero();
    if need_grads && batch.grads.is_none() {
        return Err(Error::MissingLabel("lambda > 0 requires gradient labels".into()));
    }
    if weights.beta > R::zero() && batch.mesh.is_none() {
        return Err(Error::MissingLabel("beta > 0 requires a mesh context".into()));
    }
    let metric_w: R = batch.samples[0].point.kind.metric_weight();
    let binv = R::one() / R::of_usize(b);
    let flags = NeedFlags { input_jacobian: need_grads, ..NeedFlags::default() };
    let bundles: Vec<Result<crate::net::EvalBundle<R>>> =
        crate::parallel::map_indexed(b, |i| {
            evaluate(params, &batch.samples[i].point.coords, flags)
        });
    let mut total = R::zero();
    for (i, bundle) in bundles.into_iter().enumerate() {
        let bundle = bundle?;
        for c in 0..m {
            let r = bundle.value[c] - batch.values[i * m + c];
            total += r * r * binv;
        }
        if need_grads {
            let proj = projection_matrix(&batch.samples[i], &batch.mesh)?;
            let labels = &batch.grads.as_ref().unwrap()[i];
            for c in 0..m {
                let arow = &bundle.input_jacobian[c * ad..(c + 1) * ad];
                let mut rsq = R::zero();
                for t in 0..td {
                    let mut s = R::zero();
                    for j in 0..ad {
                        s += proj[t * ad + j] * arow[j];
                    }
                    let r = s - labels[c].components[t];
                    rsq += r * r;
                }
                total += weights.lambda * metric_w * rsq * binv;
            }
        }
    }
    if weights.beta > R::zero() {
        let (lap_rows, _) = laplace_field(params, batch)?;
        for i in 0..b {
            for c in 0..m {
                total += weights.beta * lap_rows[i * m + c] * lap_rows[i * m + c] * binv;
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("loss is not finite".into()));
    }
    Ok(total)
}

fn vertex_coords<R: Real>(ctx: &MeshContext<'_, R>, v: usize) -> Vec<R> {
    ctx.mesh.vertices[v].to_vec()
}

/// Laplacian rows at the batch vertices and the field-space gradient
/// dL/dU (n x m) of the batch-mean Laplace term, where L = (1/B) sum_i
/// ||(M^{-1} W U)_i||^2 and the gradient is (2/B) W^T M^{-1} Sel (M^{-1} W U).
fn laplace_field<R: Real>(
    params: &NetParams<R>,
    batch: &LabeledBatch<'_, R>,
) -> Result<(Vec<R>, Vec<R>)> {
    let ctx = batch.mesh.as_ref().unwrap();
    let n = ctx.op.n();
    let m = batch.m;
    let b = batch.len();
    // full vertex field U (n x m)
    let rows: Vec<Result<Vec<R>>> = crate::parallel::map_indexed(n, |v| {
        Ok(evaluate(params, vertex_coords(ctx, v).as_slice(), NeedFlags::value_only())?.value)
    });
    let mut field = vec![R::zero(); n * m];
    for (v, row) in rows.into_iter().enumerate() {
        field[v * m..(v + 1) * m].copy_from_slice(&row?);
    }
    let lap = apply_laplacian(ctx.op, &field, m, true)?;
    let mut lap_rows = vec![R::zero(); b * m];
    // selected, mass-normalized rows: Sel^T M^{-1} (selected lap), then W^T
    let mut sel = vec![R::zero(); n * m];
    let binv = R::one() / R::of_usize(b);
    for (i, s) in batch.samples.iter().enumerate() {
        let v = s.vertex.unwrap();
        for c in 0..m {
            lap_rows[i * m + c] = lap[v * m + c];
            // repeated vertices accumulate, matching the batch sum
            sel[v * m + c] += R::of(2.0) * binv * lap[v * m + c] / ctx.op.mass(v);
        }
    }
    // dL/dU = W^T sel (W symmetric)
    let dl_du = apply_laplacian(ctx.op, &sel, m, false)?;
    Ok((lap_rows, dl_du))
}

/// Spectral mode selector for the smoothness constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralMode {
    Generic,
    So3,
}

/// L_sob(theta) = C (1+lambda) S(theta); SO(3) closed form
/// (1+lambda) ||J_theta u||_F^2 (RMS over the probe batch, C forced to 1).
pub fn l_sob<R: Real>(
    params: &NetParams<R>,
    geo: &GeometryPackage<R>,
    lambda: R,
    mode: SpectralMode,
    probe: Option<&[Vec<R>]>,
) -> Result<R> {
    match mode {
        SpectralMode::Generic => {
            let s = spectral_bound(params)?;
            Ok(geo.c * (R::one() + lambda) * s)
        }
        SpectralMode::So3 => {
            let probe = probe.ok_or_else(|| {
                Error::Validation("SO3 spectral mode needs a probe batch".into())
            })?;
            let s = spectral_bound_so3(params, probe)?;
            Ok((R::one() + lambda) * s * s)
        }
    }
}

/// Curvature-explicit Sobolev-PL lower bound:
/// mu >= kappa / (C^2 (1+lambda_max) P^2).
pub fn pl_lower_bound<R: Real>(geo: &GeometryPackage<R>, lambda_max: R) -> R {
    geo.kappa_poincare / (geo.c * geo.c * (R::one() + lambda_max) * geo.p * geo.p)
}
