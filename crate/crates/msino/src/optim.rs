//! Sobolev-SGD with a variance-aware lambda schedule and 1/L_sob step caps,
//! plus the two-step Gauss-Newton / Newton refinement with backtracking and
//! the optimizer diagnostics: descent check, PL estimate, contraction ratio,
//! noise split, and the rho / shrinkage formula evaluators.

use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, jacobi_eigh, matvec};
use crate::loss::{
    evaluate_loss, evaluate_loss_value, l_sob, projection_matrix, LabeledBatch, LossWeights,
    SpectralMode,
};
use crate::manifold::{
    frechet_mean, geodesic_distance, parallel_transport, GeometryPackage, TangentVector,
};
use crate::net::{evaluate, spectral_bound, NeedFlags, NetParams};
use crate::scalar::{dot, norm, Real};

/// Loss totals above this are treated as a diverged run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Variance-aware lambda schedule constants.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleConfig<R> {
    pub c_lambda: R,
    pub lambda_max: R,
    pub epsilon: R,
    pub eta_max: R,
    /// EMA decay for the running residual-norm variances.
    pub ema_decay: R,
}

impl<R: Real> ScheduleConfig<R> {
    pub fn new(c_lambda: R, lambda_max: R, epsilon: R, eta_max: R, ema_decay: R) -> Result<Self> {
        if c_lambda <= R::zero()
            || lambda_max <= R::zero()
            || epsilon <= R::zero()
            || eta_max <= R::zero()
            || ema_decay <= R::zero()
            || ema_decay >= R::one()
        {
            return Err(Error::Validation(
                "schedule constants must satisfy c_lambda, lambda_max, epsilon, eta_max > 0 \
                 and ema_decay in (0,1)"
                    .into(),
            ));
        }
        Ok(ScheduleConfig { c_lambda, lambda_max, epsilon, eta_max, ema_decay })
    }
}

impl<R: Real> Default for ScheduleConfig<R> {
    fn default() -> Self {
        ScheduleConfig {
            c_lambda: R::one(),
            lambda_max: R::of(10.0),
            epsilon: R::of(1e-8),
            eta_max: R::of(0.1),
            ema_decay: R::of(0.9),
        }
    }
}

/// Damped two-step Newton constants.
#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig<R> {
    /// Tikhonov damping added to the Gauss-Newton normal matrix.
    pub gn_damping: R,
    pub backtrack_shrink: R,
    pub armijo_c: R,
    pub alpha_min: R,
    pub max_backtracks: usize,
    /// Central finite-difference step for the Hessian of the exact gradient.
    pub hessian_fd_step: R,
}

impl<R: Real> Default for NewtonConfig<R> {
    fn default() -> Self {
        NewtonConfig {
            gn_damping: R::of(1e-8),
            backtrack_shrink: R::of(0.5),
            armijo_c: R::of(1e-4),
            alpha_min: R::of(1e-3),
            max_backtracks: 30,
            hessian_fd_step: R::of(1e-4),
        }
    }
}

/// One logged training row (the 13 CSV columns).
#[derive(Debug, Clone, Copy)]
pub struct MetricsRow<R> {
    pub epoch: usize,
    pub total: R,
    pub val: R,
    /// Unweighted Sobolev (gradient-residual) term.
    pub sob: R,
    /// Unweighted Laplacian term.
    pub lap: R,
    pub lambda_k: R,
    pub rho_k: R,
    pub l_sob: R,
    pub lr_cap: R,
    pub sigma_sample: R,
    pub sigma_transport: R,
    pub descent_ok: bool,
    pub mu_hat: R,
}

/// Optimizer state threaded through the steps.
#[derive(Debug, Clone)]
pub struct TrainState<R> {
    pub params: NetParams<R>,
    /// Step counter.
    pub k: usize,
    pub lambda_k: R,
    pub eta_k: R,
    /// EMA of the batch variance of per-sample value-residual norms.
    pub var_x: Option<R>,
    /// EMA of the batch variance of per-sample gradient-residual norms.
    pub var_grad: Option<R>,
    pub history: Vec<MetricsRow<R>>,
    /// Per-step gradient norms, paired with `losses` for the PL estimate.
    pub grad_norms: Vec<R>,
    pub losses: Vec<R>,
}

impl<R: Real> TrainState<R> {
    pub fn new(params: NetParams<R>, cfg: &ScheduleConfig<R>) -> Self {
        TrainState {
            params,
            k: 0,
            lambda_k: R::zero(),
            eta_k: cfg.eta_max,
            var_x: None,
            var_grad: None,
            history: Vec::new(),
            grad_norms: Vec::new(),
            losses: Vec::new(),
        }
    }
}

/// lambda_k = min(lambda_max, c_lambda sqrt(var_x / (var_grad + epsilon))).
pub fn lambda_schedule_value<R: Real>(var_x: R, var_grad: R, cfg: &ScheduleConfig<R>) -> R {
    let v = cfg.c_lambda * (var_x / (var_grad + cfg.epsilon)).sqrt();
    v.min(cfg.lambda_max)
}

/// Schedule evaluated on the state's running variances; before the first
/// batch seeds them, returns the cap lambda_max.
pub fn lambda_schedule<R: Real>(state: &TrainState<R>, cfg: &ScheduleConfig<R>) -> R {
    match (state.var_x, state.var_grad) {
        (Some(vx), Some(vg)) => lambda_schedule_value(vx, vg, cfg),
        _ => cfg.lambda_max,
    }
}

/// Descent-lemma check with slack 1e-9 max(1, |loss_prev|):
/// loss_next <= loss_prev + <grad_prev, d> + (L/2)||d||^2.
pub fn descent_check<R: Real>(
    prev_params: &[R],
    next_params: &[R],
    grad_prev: &[R],
    l: R,
    loss_prev: R,
    loss_next: R,
) -> bool {
    let mut lin = R::zero();
    let mut sq = R::zero();
    for i in 0..prev_params.len() {
        let d = next_params[i] - prev_params[i];
        lin += grad_prev[i] * d;
        sq += d * d;
    }
    let slack = R::of(1e-9) * loss_prev.abs().max(R::one());
    loss_next <= loss_prev + lin + l / R::of(2.0) * sq + slack
}

/// Options steering one SGD step.
#[derive(Debug, Clone, Copy)]
pub struct SgdOptions<R> {
    /// When true, lambda_k comes from the variance schedule; otherwise the
    /// fixed `weights.lambda` is used.
    pub adapt_lambda: bool,
    pub mode: SpectralMode,
    /// Re-evaluate the loss after the step and record the descent lemma
    /// result (deterministic full-batch mode). Costs one extra evaluation.
    pub check_descent: bool,
    /// Compute the sample/transport noise split (costs per-sample gradient
    /// evaluations).
    pub compute_noise: bool,
    pub epoch: usize,
    /// Loss floor for the PL estimate (0 in interpolation mode).
    pub loss_floor: R,
}

impl<R: Real> Default for SgdOptions<R> {
    fn default() -> Self {
        SgdOptions {
            adapt_lambda: false,
            mode: SpectralMode::Generic,
            check_descent: false,
            compute_noise: false,
            epoch: 0,
            loss_floor: R::zero(),
        }
    }
}

fn batch_variances<R: Real>(
    r_value: &[R],
    r_grad: &[R],
    has_grads: bool,
    b: usize,
    m: usize,
    td: usize,
    metric_w: R,
) -> (R, Option<R>) {
    let mut nx = vec![R::zero(); b];
    for i in 0..b {
        let mut s = R::zero();
        for c in 0..m {
            s += r_value[i * m + c] * r_value[i * m + c];
        }
        nx[i] = s.sqrt();
    }
    let var_x = variance(&nx);
    if !has_grads || r_grad.len() != b * m * td {
        return (var_x, None);
    }
    let mut ng = vec![R::zero(); b];
    for i in 0..b {
        let mut s = R::zero();
        for j in 0..m * td {
            let r = r_grad[i * m * td + j];
            s += metric_w * r * r;
        }
        ng[i] = s.sqrt();
    }
    (var_x, Some(variance(&ng)))
}

fn variance<R: Real>(xs: &[R]) -> R {
    let n = R::of_usize(xs.len());
    let mean = xs.iter().copied().sum::<R>() / n;
    let mut v = R::zero();
    for &x in xs {
        v += (x - mean) * (x - mean);
    }
    v / n
}

fn ema_update<R: Real>(old: Option<R>, fresh: R, decay: R) -> R {
    match old {
        None => fresh,
        Some(o) => decay * o + (R::one() - decay) * fresh,
    }
}

fn probe_coords<R: Real>(batch: &LabeledBatch<'_, R>) -> Vec<Vec<R>> {
    batch.samples.iter().map(|s| s.point.coords.clone()).collect()
}

/// Running PL estimate over whatever history exists (no length gate);
/// returns 0 when no row clears the loss-floor guard.
pub fn pl_running<R: Real>(losses: &[R], grad_norms: &[R], floor: R) -> R {
    let mut best: Option<R> = None;
    for (&l, &g) in losses.iter().zip(grad_norms) {
        let gap = l - floor;
        if gap <= R::of(1e-12) {
            continue;
        }
        let mu = g * g / (R::of(2.0) * gap);
        best = Some(match best {
            None => mu,
            Some(b) => b.min(mu),
        });
    }
    best.unwrap_or(R::zero())
}

/// mu_hat = min over history of (1/2)||grad||^2 / (loss - floor), guarded for
/// loss - floor <= 1e-12. Requires at least 10 rows.
pub fn pl_estimate<R: Real>(losses: &[R], grad_norms: &[R], floor: R) -> Result<R> {
    let have = losses.len().min(grad_norms.len());
    if have < 10 {
        return Err(Error::InsufficientHistory { need: 10, have });
    }
    Ok(pl_running(losses, grad_norms, floor))
}

/// rho = C S_max alpha_min / (2 kappa) from the damped-contraction theorem.
pub fn rho_formula<R: Real>(c: R, s_max: R, alpha_min: R, kappa: R) -> R {
    c * s_max * alpha_min / (R::of(2.0) * kappa)
}

/// One Sobolev-SGD step: evaluate the loss once (unweighted parts), update
/// the variance EMAs, set lambda_k, cap the step size at 1/L_sob, apply the
/// gradient step, and append a metrics row.
pub fn sgd_step<'a, R: Real>(
    state: &mut TrainState<R>,
    batch: &LabeledBatch<'a, R>,
    weights: &LossWeights<R>,
    geo: &GeometryPackage<R>,
    cfg: &ScheduleConfig<R>,
    opts: &SgdOptions<R>,
) -> Result<MetricsRow<R>> {
    let eval_w = LossWeights::new(R::zero(), weights.beta)?;
    let bd = evaluate_loss(&state.params, batch, &eval_w)?;

    // variance EMAs from the per-sample residual norms
    let metric_w = batch.samples[0].point.kind.metric_weight();
    let (vx, vg) = batch_variances(
        &bd.r_value,
        &bd.r_grad,
        batch.grads.is_some(),
        batch.len(),
        batch.m,
        batch.tangent_dim(),
        metric_w,
    );
    state.var_x = Some(ema_update(state.var_x, vx, cfg.ema_decay));
    if let Some(vg) = vg {
        state.var_grad = Some(ema_update(state.var_grad, vg, cfg.ema_decay));
    }

    let lambda_k = if opts.adapt_lambda && batch.grads.is_some() {
        lambda_schedule(state, cfg)
    } else {
        weights.lambda.min(cfg.lambda_max)
    };
    if lambda_k > R::zero() && bd.grad_sobolev_part.is_empty() {
        return Err(Error::MissingLabel(
            "lambda > 0 requires gradient labels".into(),
        ));
    }

    let (total, grad) = bd.totals_for(lambda_k, weights.beta);
    if !total.is_finite() || total.as_f64() > DIVERGENCE_THRESHOLD {
        let row = MetricsRow {
            epoch: opts.epoch,
            total,
            val: bd.value_term,
            sob: bd.sobolev_term,
            lap: bd.laplace_term,
            lambda_k,
            rho_k: R::nan(),
            l_sob: R::nan(),
            lr_cap: R::nan(),
            sigma_sample: R::zero(),
            sigma_transport: R::zero(),
            descent_ok: false,
            mu_hat: R::nan(),
        };
        state.history.push(row);
        return Err(Error::Divergence { loss: total.as_f64() });
    }

    let probe = probe_coords(batch);
    let l = l_sob(&state.params, geo, lambda_k, opts.mode, Some(&probe))?;
    let lr_cap = cfg.eta_max.min(R::one() / l);
    let eta_k = lr_cap;

    let grad_norm = norm(&grad);
    let mut next = state.params.clone();
    next.add_scaled(&grad, -eta_k)?;

    let weights_k = LossWeights::new(lambda_k, weights.beta)?;
    let descent_ok = if opts.check_descent {
        let loss_next = evaluate_loss_value(&next, batch, &weights_k)?;
        descent_check(
            &state.params.flatten(),
            &next.flatten(),
            &grad,
            l,
            total,
            loss_next,
        )
    } else {
        true
    };

    let (sigma_sample, sigma_transport) = if opts.compute_noise {
        let ns = noise_split(&state.params, batch, lambda_k, geo)?;
        (ns.sigma_sample, ns.sigma_transport)
    } else {
        (R::zero(), R::zero())
    };

    let rho_k = match state.losses.last() {
        Some(&prev) if prev.abs() > R::of(1e-300) => total / prev,
        _ => R::one(),
    };

    state.losses.push(total);
    state.grad_norms.push(grad_norm);
    let mu_hat = pl_running(&state.losses, &state.grad_norms, opts.loss_floor);

    state.params = next;
    state.k += 1;
    state.lambda_k = lambda_k;
    state.eta_k = eta_k;

    let row = MetricsRow {
        epoch: opts.epoch,
        total,
        val: bd.value_term,
        sob: bd.sobolev_term,
        lap: bd.laplace_term,
        lambda_k,
        rho_k,
        l_sob: l,
        lr_cap,
        sigma_sample,
        sigma_transport,
        descent_ok,
        mu_hat,
    };
    state.history.push(row);
    Ok(row)
}

/// Dense Gauss-Newton system: A stacks the value Jacobians and the
/// sqrt(lambda * metric_w)-scaled projected gradient Jacobians, all divided
/// by sqrt(B) so that ||A theta + r||^2 matches the batch-mean loss.
pub(crate) fn assemble_gn_system<R: Real>(
    params: &NetParams<R>,
    batch: &LabeledBatch<'_, R>,
    lambda: R,
) -> Result<(Vec<R>, Vec<R>, usize)> {
    let b = batch.len();
    let m = batch.m;
    let p = params.n_params();
    let td = batch.tangent_dim();
    let ad = batch.samples[0].point.kind.ambient_dim();
    let with_grads = lambda > R::zero() && batch.grads.is_some();
    if lambda > R::zero() && batch.grads.is_none() {
        return Err(Error::MissingLabel(
            "lambda > 0 requires gradient labels".into(),
        ));
    }
    let metric_w = batch.samples[0].point.kind.metric_weight();
    let rows = b * m + if with_grads { b * m * td } else { 0 };
    let mut a = vec![R::zero(); rows * p];
    let mut r = vec![R::zero(); rows];
    let sb = (R::one() / R::of_usize(b)).sqrt();
    let sg = (lambda * metric_w).sqrt() * sb;

    let flags = NeedFlags {
        input_jacobian: with_grads,
        param_jacobian_value: true,
        param_jacobian_gradient: with_grads,
    };
    let bundles: Vec<Result<crate::net::EvalBundle<R>>> =
        crate::parallel::map_indexed(b, |i| evaluate(params, &batch.samples[i].point.coords, flags));

    let mut row = 0usize;
    let mut grad_row = b * m;
    for (i, bundle) in bundles.into_iter().enumerate() {
        let bundle = bundle?;
        for c in 0..m {
            r[row] = sb * (bundle.value[c] - batch.values[i * m + c]);
            let src = &bundle.param_jacobian_value[c * p..(c + 1) * p];
            for (dst, &s) in a[row * p..(row + 1) * p].iter_mut().zip(src) {
                *dst = sb * s;
            }
            row += 1;
        }
        if with_grads {
            let proj = projection_matrix(&batch.samples[i], &batch.mesh)?;
            let labels = &batch.grads.as_ref().unwrap()[i];
            for c in 0..m {
                let arow = &bundle.input_jacobian[c * ad..(c + 1) * ad];
                for t in 0..td {
                    let mut pred = R::zero();
                    for j in 0..ad {
                        pred += proj[t * ad + j] * arow[j];
                    }
                    r[grad_row] = sg * (pred - labels[c].components[t]);
                    // row of the projected gradient Jacobian:
                    // sum_j P[t,j] d(J_x[c,j])/d(theta)
                    let dst = &mut a[grad_row * p..(grad_row + 1) * p];
                    for j in 0..ad {
                        let pj = proj[t * ad + j];
                        if pj == R::zero() {
                            continue;
                        }
                        let src =
                            &bundle.param_jacobian_gradient[(c * ad + j) * p..(c * ad + j + 1) * p];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += sg * pj * s;
                        }
                    }
                    grad_row += 1;
                }
            }
        }
    }
    Ok((a, r, rows))
}

/// Output of the damped Gauss-Newton solve.
#[derive(Debug, Clone)]
pub struct GnOutput<R> {
    /// The step delta (add it to the flat parameters).
    pub delta: Vec<R>,
    /// Smallest singular value of the stacked Jacobian A.
    pub sigma_min: R,
    /// Cholesky pivot-ratio condition estimate of the normal matrix.
    pub cond_estimate: R,
}

/// (S1) delta = -(A^T A + gn_damping I)^{-1} A^T r.
pub fn gauss_newton_step<R: Real>(
    params: &NetParams<R>,
    batch: &LabeledBatch<'_, R>,
    lambda: R,
    cfg: &NewtonConfig<R>,
) -> Result<GnOutput<R>> {
    let p = params.n_params();
    if p > 2000 {
        return Err(Error::Validation(format!(
            "dense Gauss-Newton limited to p <= 2000, got {p}"
        )));
    }
    let (a, r, rows) = assemble_gn_system(params, batch, lambda)?;

    // normal matrix and right-hand side
    let mut n = vec![R::zero(); p * p];
    for k in 0..rows {
        let rowk = &a[k * p..(k + 1) * p];
        for i in 0..p {
            let ai = rowk[i];
            if ai == R::zero() {
                continue;
            }
            for j in i..p {
                n[i * p + j] += ai * rowk[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            n[i * p + j] = n[j * p + i];
        }
    }
    let (evals, _) = jacobi_eigh(&n, p);
    let sigma_min = evals[0].max(R::zero()).sqrt();
    for i in 0..p {
        n[i * p + i] += cfg.gn_damping;
    }
    let mut rhs = vec![R::zero(); p];
    for k in 0..rows {
        let rk = r[k];
        if rk == R::zero() {
            continue;
        }
        for (dst, &ai) in rhs.iter_mut().zip(&a[k * p..(k + 1) * p]) {
            *dst -= rk * ai;
        }
    }

    let mut l = n.clone();
    cholesky(&mut l, p).map_err(|_| {
        Error::SingularSystem("Gauss-Newton normal matrix is not positive definite".into())
    })?;
    let mut dmax = R::zero();
    let mut dmin = R::infinity();
    for i in 0..p {
        let d = l[i * p + i];
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    let cond = (dmax / dmin) * (dmax / dmin);
    if cond > R::of(1e14) {
        return Err(Error::SingularSystem(format!(
            "Gauss-Newton conditioning estimate {:.3e} exceeds 1e14",
            cond.as_f64()
        )));
    }
    let mut delta = cholesky_solve(&l, p, &rhs);
    // iterative refinement to push the relative residual below 1e-10
    for _ in 0..2 {
        let mut res = rhs.clone();
        let mut ndelta = vec![R::zero(); p];
        matvec(&n, p, p, &delta, &mut ndelta);
        for (rr, nd) in res.iter_mut().zip(&ndelta) {
            *rr -= *nd;
        }
        if norm(&res) <= R::of(1e-10) * norm(&rhs).max(R::of(1e-300)) {
            break;
        }
        let corr = cholesky_solve(&l, p, &res);
        for (d, c) in delta.iter_mut().zip(&corr) {
            *d += *c;
        }
    }
    Ok(GnOutput { delta, sigma_min, cond_estimate: cond })
}

/// Output of the Newton refinement.
#[derive(Debug, Clone)]
pub struct NewtonRefineOutput<R> {
    /// The Newton direction delta_N (subtract it from the flat parameters).
    pub delta: Vec<R>,
    pub lambda_min: R,
    pub shift: R,
    /// ||H - H^T||_F / ||H||_F before symmetrization.
    pub hessian_asymmetry: R,
}

/// (S2) delta_N = (hess L)^{-1} grad L with the Hessian assembled by central
/// finite differences of the exact gradient (error O(h^2)), symmetrized, and
/// Levenberg-shifted when lambda_min < 1e-10.
pub fn newton_refine<R: Real>(
    params: &NetParams<R>,
    batch: &LabeledBatch<'_, R>,
    weights: &LossWeights<R>,
    cfg: &NewtonConfig<R>,
) -> Result<NewtonRefineOutput<R>> {
    let p = params.n_params();
    if p > 2000 {
        return Err(Error::Validation(format!(
            "dense Newton refinement limited to p <= 2000, got {p}"
        )));
    }
    let grad = evaluate_loss(params, batch, weights)?.grad_theta;
    let theta = params.flatten();
    let h = cfg.hessian_fd_step;

    let cols: Vec<Result<Vec<R>>> = crate::parallel::map_indexed(p, |k| {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[k] += h;
        tm[k] -= h;
        let mut np = params.clone();
        let mut nm = params.clone();
        np.unflatten(&tp)?;
        nm.unflatten(&tm)?;
        let gp = evaluate_loss(&np, batch, weights)?.grad_theta;
        let gm = evaluate_loss(&nm, batch, weights)?.grad_theta;
        Ok(gp
            .iter()
            .zip(&gm)
            .map(|(a, b)| (*a - *b) / (R::of(2.0) * h))
            .collect())
    });
    let mut hess = vec![R::zero(); p * p];
    for (k, col) in cols.into_iter().enumerate() {
        for (i, v) in col?.into_iter().enumerate() {
            hess[i * p + k] = v;
        }
    }
    let mut asym = R::zero();
    let mut fro = R::zero();
    for i in 0..p {
        for j in 0..p {
            let d = hess[i * p + j] - hess[j * p + i];
            asym += d * d;
            fro += hess[i * p + j] * hess[i * p + j];
        }
    }
    let hessian_asymmetry = if fro > R::zero() { (asym / fro).sqrt() } else { R::zero() };
    for i in 0..p {
        for j in (i + 1)..p {
            let s = (hess[i * p + j] + hess[j * p + i]) / R::of(2.0);
            hess[i * p + j] = s;
            hess[j * p + i] = s;
        }
    }

    let (evals, _) = jacobi_eigh(&hess, p);
    let lambda_min = evals[0];
    let shift = if lambda_min < R::of(1e-10) {
        R::of(1e-10) - lambda_min
    } else {
        R::zero()
    };
    if shift > R::of(1e-2) {
        return Err(Error::IndefiniteHessian { lambda_min: lambda_min.as_f64() });
    }
    for i in 0..p {
        hess[i * p + i] += shift;
    }
    cholesky(&mut hess, p)
        .map_err(|_| Error::SingularSystem("shifted Hessian not positive definite".into()))?;
    let delta = cholesky_solve(&hess, p, &grad);
    Ok(NewtonRefineOutput { delta, lambda_min, shift, hessian_asymmetry })
}

/// What one two-step Newton update did.
#[derive(Debug, Clone, Copy)]
pub struct NewtonReport<R> {
    pub alpha: R,
    /// d_{k+1}/d_k^2 in toy mode (theta* known) or the loss-ratio proxy.
    pub rho_k: R,
    pub loss_before: R,
    pub loss_after: R,
    /// True when backtracking exhausted and the step was skipped.
    pub skipped: bool,
    pub sigma_min: R,
    pub hessian_lambda_min: R,
}

/// (S1) damped Gauss-Newton with backtracking on the descent lemma, then
/// (S2) Newton refinement. Backtracking exhaustion skips the step (reported,
/// not an error); sub-operation errors propagate.
#[allow(clippy::too_many_arguments)]
pub fn two_step_newton<'a, R: Real>(
    state: &mut TrainState<R>,
    batch: &LabeledBatch<'a, R>,
    weights: &LossWeights<R>,
    geo: &GeometryPackage<R>,
    mode: SpectralMode,
    cfg: &NewtonConfig<R>,
    theta_star: Option<&[R]>,
) -> Result<NewtonReport<R>> {
    let bd = evaluate_loss(&state.params, batch, weights)?;
    let loss_before = bd.total;
    let grad = bd.grad_theta;
    let gn = gauss_newton_step(&state.params, batch, weights.lambda, cfg)?;
    let probe = probe_coords(batch);
    let l = l_sob(&state.params, geo, weights.lambda, mode, Some(&probe))?;
    let theta_prev = state.params.flatten();
    let slack = R::of(1e-9) * loss_before.abs().max(R::one());
    let gdot = dot(&grad, &gn.delta);

    let mut alpha = R::one();
    let mut tries = 0usize;
    let accepted = loop {
        let mut cand = state.params.clone();
        cand.add_scaled(&gn.delta, alpha)?;
        let loss_next = evaluate_loss_value(&cand, batch, weights)?;
        let lemma = descent_check(
            &theta_prev,
            &cand.flatten(),
            &grad,
            l,
            loss_before,
            loss_next,
        );
        let armijo = loss_next <= loss_before + cfg.armijo_c * alpha * gdot + slack;
        if lemma && armijo {
            break Some((cand, loss_next));
        }
        tries += 1;
        if tries > cfg.max_backtracks {
            break None;
        }
        alpha = (alpha * cfg.backtrack_shrink).max(cfg.alpha_min);
    };
    let Some((tilde, loss_tilde)) = accepted else {
        return Ok(NewtonReport {
            alpha,
            rho_k: R::one(),
            loss_before,
            loss_after: loss_before,
            skipped: true,
            sigma_min: gn.sigma_min,
            hessian_lambda_min: R::nan(),
        });
    };

    let refine = newton_refine(&tilde, batch, weights, cfg)?;
    let mut next = tilde.clone();
    next.add_scaled(&refine.delta, -R::one())?;
    let loss_after = evaluate_loss_value(&next, batch, weights)?;
    // the refinement is only kept when it does not increase the loss: far
    // from the basin the near-singular FD Hessian can throw the step away
    let (next, loss_after) = if loss_after.is_finite() && loss_after <= loss_tilde + slack {
        (next, loss_after)
    } else {
        (tilde, loss_tilde)
    };

    let rho_k = match theta_star {
        Some(star) => {
            let d_prev = dist(&theta_prev, star);
            let d_next = dist(&next.flatten(), star);
            if d_prev > R::zero() {
                d_next / (d_prev * d_prev)
            } else {
                R::zero()
            }
        }
        None => {
            if loss_before.abs() > R::of(1e-300) {
                loss_after / loss_before
            } else {
                R::one()
            }
        }
    };

    state.params = next;
    state.k += 1;
    state.losses.push(loss_after);
    state.grad_norms.push(norm(&grad));
    Ok(NewtonReport {
        alpha,
        rho_k,
        loss_before,
        loss_after,
        skipped: false,
        sigma_min: gn.sigma_min,
        hessian_lambda_min: refine.lambda_min,
    })
}

fn dist<R: Real>(a: &[R], b: &[R]) -> R {
    let mut s = R::zero();
    for (x, y) in a.iter().zip(b) {
        let d = *x - *y;
        s += d * d;
    }
    s.sqrt()
}

/// Sample/transport noise decomposition of the batch gradient.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSplit<R> {
    /// Std of the per-sample parameter-gradient contributions about the
    /// batch mean.
    pub sigma_sample: R,
    /// Norm of the mean discrepancy between intrinsic prediction gradients
    /// transported to the batch Frechet mean and left in place.
    pub sigma_transport: R,
    /// C(M,g) S(theta) max_{i,j} d_g(x_i, x_j).
    pub bound: R,
}

/// Measured noise split; sigma_transport is exactly 0 on charts and SO(3)
/// (identity transport) and bounded by C S max d_g elsewhere.
pub fn noise_split<R: Real>(
    params: &NetParams<R>,
    batch: &LabeledBatch<'_, R>,
    lambda: R,
    geo: &GeometryPackage<R>,
) -> Result<NoiseSplit<R>> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::Validation("noise split needs a batch of >= 2".into()));
    }
    let m = batch.m;
    let p = params.n_params();
    let lam = if batch.grads.is_some() { lambda } else { R::zero() };
    let w = LossWeights::new(lam, R::zero())?;

    // per-sample parameter-gradient contributions (beta excluded: the
    // Laplace term is a whole-field quantity, not a per-sample one)
    let mut grads: Vec<Vec<R>> = Vec::with_capacity(b);
    for i in 0..b {
        let sub = LabeledBatch {
            samples: vec![batch.samples[i].clone()],
            values: batch.values[i * m..(i + 1) * m].to_vec(),
            m,
            grads: batch.grads.as_ref().map(|g| vec![g[i].clone()]),
            mesh: batch.mesh.clone(),
        };
        grads.push(evaluate_loss(params, &sub, &w)?.grad_theta);
    }
    let mut mean = vec![R::zero(); p];
    for g in &grads {
        for (mk, &gk) in mean.iter_mut().zip(g) {
            *mk += gk / R::of_usize(b);
        }
    }
    let mut var = R::zero();
    for g in &grads {
        for (mk, &gk) in mean.iter().zip(g) {
            let d = gk - *mk;
            var += d * d / R::of_usize(b);
        }
    }
    let sigma_sample = var.sqrt();

    // transport discrepancy of the intrinsic prediction gradients
    let ad = batch.samples[0].point.kind.ambient_dim();
    let td = batch.tangent_dim();
    let points: Vec<_> = batch.samples.iter().map(|s| s.point.clone()).collect();
    let center = frechet_mean(&points)?;
    let flags = NeedFlags { input_jacobian: true, ..NeedFlags::default() };
    let mut acc = vec![R::zero(); m * td];
    let mut maxd = R::zero();
    for i in 0..b {
        for j in (i + 1)..b {
            maxd = maxd.max(geodesic_distance(&points[i], &points[j])?);
        }
    }
    for (i, s) in batch.samples.iter().enumerate() {
        let bundle = evaluate(params, &s.point.coords, flags)?;
        let proj = projection_matrix(s, &batch.mesh)?;
        for c in 0..m {
            let arow = &bundle.input_jacobian[c * ad..(c + 1) * ad];
            let mut comps = vec![R::zero(); td];
            for t in 0..td {
                for j in 0..ad {
                    comps[t] += proj[t * ad + j] * arow[j];
                }
            }
            let v = TangentVector::new(points[i].clone(), comps.clone())?;
            let moved = parallel_transport(&points[i], &center, &v)?;
            for t in 0..td {
                acc[c * td + t] += (moved.components[t] - comps[t]) / R::of_usize(b);
            }
        }
    }
    let sigma_transport = norm(&acc);
    let s = spectral_bound(params)?;
    let bound = geo.c * s * maxd;
    Ok(NoiseSplit { sigma_sample, sigma_transport, bound })
}
