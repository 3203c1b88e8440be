//! Geometry kernels: exponential/logarithm maps, geodesic distance, parallel
//! transport and tangent projection for Euclidean charts, the unit sphere S2
//! and the rotation group SO(3).
//!
//! SO(3) points are stored as full 3x3 row-major matrices so the Frobenius
//! log-distance formula stays literal; tangent vectors carry vee coordinates
//! of the body-frame skew matrix. The metric on so(3) is the Frobenius inner
//! product of skew matrices, i.e. <a,b> = 2 a.b in vee coordinates, which
//! makes |log(p,q)| equal to the geodesic distance sqrt(2)*angle.

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Real};
use rand::Rng;

const SPHERE_MEMBERSHIP_TOL: f64 = 1e-12;
const SO3_MEMBERSHIP_TOL: f64 = 1e-10;
const SO3_RENORM_THRESHOLD: f64 = 1e-8;
const CUT_LOCUS_MARGIN: f64 = 1e-8;
const SMALL_ANGLE: f64 = 1e-4;

/// Which manifold a point or tangent vector lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    EuclideanChart(usize),
    Sphere2,
    SO3,
}

impl ManifoldKind {
    /// Ambient dimension of the point representation.
    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldKind::EuclideanChart(d) => *d,
            ManifoldKind::Sphere2 => 3,
            ManifoldKind::SO3 => 9,
        }
    }

    /// Dimension of the tangent-vector component representation.
    pub fn tangent_dim(&self) -> usize {
        match self {
            ManifoldKind::EuclideanChart(d) => *d,
            ManifoldKind::Sphere2 => 3,
            ManifoldKind::SO3 => 3,
        }
    }

    /// Weight of the Euclidean dot product of tangent components in the
    /// Riemannian metric (2 on SO(3), 1 elsewhere).
    pub fn metric_weight<R: Real>(&self) -> R {
        match self {
            ManifoldKind::SO3 => R::of(2.0),
            _ => R::one(),
        }
    }
}

/// A point on a manifold, paired with its kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint<R> {
    pub kind: ManifoldKind,
    pub coords: Vec<R>,
}

/// A tangent vector based at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<R> {
    pub base: ManifoldPoint<R>,
    pub components: Vec<R>,
}

/// Geometry constants entering the smoothness and PL bounds.
#[derive(Debug, Clone, Copy)]
pub struct GeometryPackage<R> {
    /// Transport-stability / Jacobi constant C(M,g). Forced to 1 on SO(3).
    pub c: R,
    /// Poincare constant of the working domain.
    pub p: R,
    pub diam_u: R,
    /// Spectral gap backing `p` (P = 1/sqrt(kappa)).
    pub kappa_poincare: R,
}

impl<R: Real> GeometryPackage<R> {
    pub fn new(c: R, p: R, diam_u: R, kappa_poincare: R) -> Result<Self> {
        if c <= R::zero() || p <= R::zero() || kappa_poincare <= R::zero() || diam_u < R::zero() {
            return Err(Error::Validation(
                "geometry package constants must be positive".into(),
            ));
        }
        Ok(GeometryPackage { c, p, diam_u, kappa_poincare })
    }

    /// Default convention per manifold: chart C=1; sphere C = 1 + diam(U)
    /// (curvature bound K=1); SO(3) C=1 by the left-invariant closed form.
    pub fn default_for(kind: ManifoldKind, p: R, diam_u: R, kappa: R) -> Self {
        let c = match kind {
            ManifoldKind::EuclideanChart(_) => R::one(),
            ManifoldKind::Sphere2 => R::one() + diam_u,
            ManifoldKind::SO3 => R::one(),
        };
        GeometryPackage { c, p, diam_u, kappa_poincare: kappa }
    }
}

// --- 3x3 matrix helpers (row-major) ---

fn mat_mul3<R: Real>(a: &[R], b: &[R]) -> [R; 9] {
    let mut c = [R::zero(); 9];
    for i in 0..3 {
        for j in 0..3 {
            let mut s = R::zero();
            for k in 0..3 {
                s += a[i * 3 + k] * b[k * 3 + j];
            }
            c[i * 3 + j] = s;
        }
    }
    c
}

fn mat_t3<R: Real>(a: &[R]) -> [R; 9] {
    let mut t = [R::zero(); 9];
    for i in 0..3 {
        for j in 0..3 {
            t[j * 3 + i] = a[i * 3 + j];
        }
    }
    t
}

/// hat: axis-angle vector to skew matrix.
pub fn hat<R: Real>(w: &[R]) -> [R; 9] {
    let z = R::zero();
    [z, -w[2], w[1], w[2], z, -w[0], -w[1], w[0], z]
}

/// vee: skew matrix to axis-angle vector.
pub fn vee<R: Real>(m: &[R]) -> [R; 3] {
    [m[7], m[2], m[3]]
}

fn so3_orthogonality_defect<R: Real>(r: &[R]) -> R {
    let rt = mat_t3(r);
    let rtr = mat_mul3(&rt, r);
    let mut s = R::zero();
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { R::one() } else { R::zero() };
            let d = rtr[i * 3 + j] - id;
            s += d * d;
        }
    }
    s.sqrt()
}

fn det3<R: Real>(m: &[R]) -> R {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6])
}

/// Polar projection of a near-rotation matrix onto SO(3) by Newton iteration
/// X <- (X + X^{-T})/2.
pub fn polar_project<R: Real>(r: &[R]) -> [R; 9] {
    let mut x = [R::zero(); 9];
    x.copy_from_slice(&r[..9]);
    for _ in 0..20 {
        let d = det3(&x);
        // adjugate transpose / det = inverse; inverse transpose = adj/det transposed twice
        let inv = [
            (x[4] * x[8] - x[5] * x[7]) / d,
            (x[2] * x[7] - x[1] * x[8]) / d,
            (x[1] * x[5] - x[2] * x[4]) / d,
            (x[5] * x[6] - x[3] * x[8]) / d,
            (x[0] * x[8] - x[2] * x[6]) / d,
            (x[2] * x[3] - x[0] * x[5]) / d,
            (x[3] * x[7] - x[4] * x[6]) / d,
            (x[1] * x[6] - x[0] * x[7]) / d,
            (x[0] * x[4] - x[1] * x[3]) / d,
        ];
        let inv_t = mat_t3(&inv);
        let mut next = [R::zero(); 9];
        let mut delta = R::zero();
        for i in 0..9 {
            next[i] = (x[i] + inv_t[i]) * R::of(0.5);
            delta += (next[i] - x[i]) * (next[i] - x[i]);
        }
        x = next;
        if delta.sqrt() < R::epsilon() * R::of(10.0) {
            break;
        }
    }
    x
}

/// Rodrigues exponential: so(3) vee coordinates to a rotation matrix, with a
/// 4th-order series below the small-angle threshold.
pub fn so3_exp<R: Real>(w: &[R]) -> [R; 9] {
    let theta = norm(w);
    let (a, b) = sincc(theta);
    let k = hat(w);
    let k2 = mat_mul3(&k, &k);
    let mut r = [R::zero(); 9];
    for i in 0..3 {
        r[i * 3 + i] = R::one();
    }
    for i in 0..9 {
        r[i] += a * k[i] + b * k2[i];
    }
    r
}

/// (sin t / t, (1-cos t)/t^2) with series fallback near zero.
fn sincc<R: Real>(t: R) -> (R, R) {
    if t < R::of(SMALL_ANGLE) {
        let t2 = t * t;
        let a = R::one() - t2 / R::of(6.0) + t2 * t2 / R::of(120.0);
        let b = R::of(0.5) - t2 / R::of(24.0) + t2 * t2 / R::of(720.0);
        (a, b)
    } else {
        ((t.sin()) / t, (R::one() - t.cos()) / (t * t))
    }
}

/// Matrix logarithm of a rotation, returned in vee coordinates.
/// Errors within the cut-locus margin of angle pi.
pub fn so3_log<R: Real>(r: &[R]) -> Result<[R; 3]> {
    let tr = r[0] + r[4] + r[8];
    let cos_theta = ((tr - R::one()) * R::of(0.5)).max(-R::one()).min(R::one());
    let theta = cos_theta.acos();
    if theta >= R::of(std::f64::consts::PI - CUT_LOCUS_MARGIN) {
        return Err(Error::Domain(format!(
            "so3 log at/beyond cut locus: rotation angle {} within margin of pi",
            theta
        )));
    }
    let factor = if theta < R::of(SMALL_ANGLE) {
        let t2 = theta * theta;
        R::of(0.5) + t2 / R::of(12.0) + t2 * t2 * R::of(7.0 / 720.0)
    } else {
        theta / (R::of(2.0) * theta.sin())
    };
    Ok([
        factor * (r[7] - r[5]),
        factor * (r[2] - r[6]),
        factor * (r[3] - r[1]),
    ])
}

impl<R: Real> ManifoldPoint<R> {
    /// Construct a point, checking the kind's membership invariant.
    pub fn new(kind: ManifoldKind, coords: Vec<R>) -> Result<Self> {
        if coords.len() != kind.ambient_dim() {
            return Err(Error::Shape(format!(
                "point coords length {} != ambient dim {}",
                coords.len(),
                kind.ambient_dim()
            )));
        }
        match kind {
            ManifoldKind::EuclideanChart(d) => {
                if d < 1 {
                    return Err(Error::Validation("chart dimension must be >= 1".into()));
                }
            }
            ManifoldKind::Sphere2 => {
                let n = norm(&coords);
                if (n - R::one()).abs() > R::of(SPHERE_MEMBERSHIP_TOL) {
                    return Err(Error::Validation(format!(
                        "sphere point norm {} deviates from 1",
                        n
                    )));
                }
            }
            ManifoldKind::SO3 => {
                let defect = so3_orthogonality_defect(&coords);
                if defect > R::of(SO3_MEMBERSHIP_TOL) || det3(&coords) <= R::zero() {
                    return Err(Error::Validation(format!(
                        "SO3 point orthogonality defect {} or non-positive determinant",
                        defect
                    )));
                }
            }
        }
        Ok(ManifoldPoint { kind, coords })
    }

    pub fn sphere(x: R, y: R, z: R) -> Result<Self> {
        Self::new(ManifoldKind::Sphere2, vec![x, y, z])
    }

    pub fn so3_identity() -> Self {
        let mut c = vec![R::zero(); 9];
        c[0] = R::one();
        c[4] = R::one();
        c[8] = R::one();
        ManifoldPoint { kind: ManifoldKind::SO3, coords: c }
    }

    /// Re-orthonormalize an SO(3) point when drift exceeds the policy
    /// threshold; no-op for other kinds.
    pub fn renormalize(&mut self) {
        match self.kind {
            ManifoldKind::SO3 => {
                if so3_orthogonality_defect(&self.coords) > R::of(SO3_RENORM_THRESHOLD) {
                    let r = polar_project(&self.coords);
                    self.coords.copy_from_slice(&r);
                }
            }
            ManifoldKind::Sphere2 => {
                let n = norm(&self.coords);
                if (n - R::one()).abs() > R::of(SO3_RENORM_THRESHOLD) {
                    for c in self.coords.iter_mut() {
                        *c = *c / n;
                    }
                }
            }
            ManifoldKind::EuclideanChart(_) => {}
        }
    }

    fn same_point(&self, other: &ManifoldPoint<R>) -> bool {
        self.kind == other.kind
            && self
                .coords
                .iter()
                .zip(&other.coords)
                .all(|(&a, &b)| (a - b).abs() <= R::of(1e-12))
    }
}

impl<R: Real> TangentVector<R> {
    pub fn new(base: ManifoldPoint<R>, components: Vec<R>) -> Result<Self> {
        if components.len() != base.kind.tangent_dim() {
            return Err(Error::Shape(format!(
                "tangent components length {} != tangent dim {}",
                components.len(),
                base.kind.tangent_dim()
            )));
        }
        if base.kind == ManifoldKind::Sphere2 {
            let ip = dot(&components, &base.coords);
            // tolerance scales with the vector norm: projection of a large
            // ambient vector leaves a proportionally large rounding residual
            let scale = R::one().max(dot(&components, &components).sqrt());
            if ip.abs() > R::of(1e-10) * scale {
                return Err(Error::Validation(format!(
                    "sphere tangent not orthogonal to base: <v,p> = {}",
                    ip
                )));
            }
        }
        Ok(TangentVector { base, components })
    }

    /// Riemannian norm (sqrt(2) * Euclidean component norm on SO(3)).
    pub fn norm(&self) -> R {
        (self.base.kind.metric_weight::<R>() * dot(&self.components, &self.components)).sqrt()
    }

    pub fn zero(base: ManifoldPoint<R>) -> Self {
        let d = base.kind.tangent_dim();
        TangentVector { base, components: vec![R::zero(); d] }
    }
}

fn check_same_kind<R: Real>(p: &ManifoldPoint<R>, q: &ManifoldPoint<R>) -> Result<()> {
    if p.kind != q.kind {
        return Err(Error::Domain(format!(
            "manifold kind mismatch: {:?} vs {:?}",
            p.kind, q.kind
        )));
    }
    Ok(())
}

/// Injectivity bound for exp in the same units as `TangentVector::norm`.
fn injectivity_bound<R: Real>(kind: ManifoldKind) -> Option<R> {
    match kind {
        ManifoldKind::EuclideanChart(_) => None,
        ManifoldKind::Sphere2 => Some(R::of(std::f64::consts::PI)),
        // angle < pi, i.e. sqrt(2)*angle < sqrt(2)*pi in metric norm
        ManifoldKind::SO3 => Some(R::of(std::f64::consts::SQRT_2 * std::f64::consts::PI)),
    }
}

/// Geodesic shooting: follow the geodesic from `p` with initial velocity `v`
/// for unit time.
pub fn exp_map<R: Real>(p: &ManifoldPoint<R>, v: &TangentVector<R>) -> Result<ManifoldPoint<R>> {
    if !v.base.same_point(p) {
        return Err(Error::Domain("tangent vector not based at p".into()));
    }
    let len = v.norm();
    if let Some(inj) = injectivity_bound::<R>(p.kind) {
        if len >= inj - R::of(CUT_LOCUS_MARGIN) {
            return Err(Error::Domain(format!(
                "exp_map: |v| = {} at/beyond injectivity radius {}",
                len, inj
            )));
        }
    }
    match p.kind {
        ManifoldKind::EuclideanChart(_) => {
            let coords = p
                .coords
                .iter()
                .zip(&v.components)
                .map(|(&a, &b)| a + b)
                .collect();
            Ok(ManifoldPoint { kind: p.kind, coords })
        }
        ManifoldKind::Sphere2 => {
            let t = norm(&v.components);
            if t == R::zero() {
                return Ok(p.clone());
            }
            let (s, _) = sincc(t);
            let c = t.cos();
            let coords: Vec<R> = p
                .coords
                .iter()
                .zip(&v.components)
                .map(|(&pi, &vi)| c * pi + s * vi)
                .collect();
            let mut out = ManifoldPoint { kind: p.kind, coords };
            out.renormalize();
            Ok(out)
        }
        ManifoldKind::SO3 => {
            let e = so3_exp(&v.components);
            let r = mat_mul3(&p.coords, &e);
            let mut out = ManifoldPoint { kind: p.kind, coords: r.to_vec() };
            out.renormalize();
            Ok(out)
        }
    }
}

/// Inverse of [`exp_map`]: the initial velocity of the minimizing geodesic
/// from `p` to `q`.
pub fn log_map<R: Real>(p: &ManifoldPoint<R>, q: &ManifoldPoint<R>) -> Result<TangentVector<R>> {
    check_same_kind(p, q)?;
    match p.kind {
        ManifoldKind::EuclideanChart(_) => {
            let comps = q
                .coords
                .iter()
                .zip(&p.coords)
                .map(|(&a, &b)| a - b)
                .collect();
            TangentVector::new(p.clone(), comps)
        }
        ManifoldKind::Sphere2 => {
            let c = dot(&p.coords, &q.coords).max(-R::one()).min(R::one());
            // tangential part of q; its norm is sin(theta), which gives the
            // angle via atan2 without the acos precision loss near theta = 0
            let mut dir: Vec<R> = q
                .coords
                .iter()
                .zip(&p.coords)
                .map(|(&qi, &pi)| qi - c * pi)
                .collect();
            let dn = norm(&dir);
            let theta = dn.atan2(c);
            if theta >= R::of(std::f64::consts::PI - CUT_LOCUS_MARGIN) {
                return Err(Error::Domain(
                    "log_map: antipodal points are at the cut locus".into(),
                ));
            }
            if dn <= R::epsilon() * R::of(10.0) {
                return Ok(TangentVector::zero(p.clone()));
            }
            for d in dir.iter_mut() {
                *d = *d / dn * theta;
            }
            // the tangential projection q - c p carries a rounding residual
            // along p that the theta/dn rescaling amplifies near the cut
            // locus; restore exact tangency
            let ip = dot(&dir, &p.coords);
            for (d, &pi) in dir.iter_mut().zip(&p.coords) {
                *d = *d - ip * pi;
            }
            TangentVector::new(p.clone(), dir)
        }
        ManifoldKind::SO3 => {
            let pt = mat_t3(&p.coords);
            let rel = mat_mul3(&pt, &q.coords);
            let w = so3_log(&rel)?;
            Ok(TangentVector { base: p.clone(), components: w.to_vec() })
        }
    }
}

/// Geodesic distance between two points of the same kind.
pub fn geodesic_distance<R: Real>(p: &ManifoldPoint<R>, q: &ManifoldPoint<R>) -> Result<R> {
    check_same_kind(p, q)?;
    match p.kind {
        ManifoldKind::EuclideanChart(_) => {
            let d: R = p
                .coords
                .iter()
                .zip(&q.coords)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            Ok(d.sqrt())
        }
        ManifoldKind::Sphere2 => {
            let c = dot(&p.coords, &q.coords).max(-R::one()).min(R::one());
            Ok(c.acos())
        }
        ManifoldKind::SO3 => {
            let pt = mat_t3(&p.coords);
            let rel = mat_mul3(&pt, &q.coords);
            let tr = rel[0] + rel[4] + rel[8];
            let c = ((tr - R::one()) * R::of(0.5)).max(-R::one()).min(R::one());
            // ||log(R1^T R2)||_F = sqrt(2) * angle
            Ok(R::of(std::f64::consts::SQRT_2) * c.acos())
        }
    }
}

/// Levi-Civita parallel transport of `v` along the minimizing geodesic from
/// `p` to `q`. Identity when p = q; on SO(3) (left-invariant transport
/// h g^{-1} v) the body-frame vee coordinates are unchanged.
pub fn parallel_transport<R: Real>(
    p: &ManifoldPoint<R>,
    q: &ManifoldPoint<R>,
    v: &TangentVector<R>,
) -> Result<TangentVector<R>> {
    check_same_kind(p, q)?;
    if !v.base.same_point(p) {
        return Err(Error::Domain("tangent vector not based at p".into()));
    }
    if p.same_point(q) {
        return Ok(TangentVector { base: q.clone(), components: v.components.clone() });
    }
    match p.kind {
        ManifoldKind::EuclideanChart(_) | ManifoldKind::SO3 => {
            Ok(TangentVector { base: q.clone(), components: v.components.clone() })
        }
        ManifoldKind::Sphere2 => {
            let lg = log_map(p, q)?;
            let d = norm(&lg.components);
            if d <= R::epsilon() * R::of(10.0) {
                return Ok(TangentVector { base: q.clone(), components: v.components.clone() });
            }
            let u: Vec<R> = lg.components.iter().map(|&x| x / d).collect();
            let vu = dot(&v.components, &u);
            let cd = d.cos();
            let sd = d.sin();
            let mut comps: Vec<R> = (0..3)
                .map(|i| {
                    v.components[i] - vu * u[i] + vu * (cd * u[i] - sd * p.coords[i])
                })
                .collect();
            // near-antipodal transport loses precision; restore exact
            // tangency at q before constructing
            let ip = dot(&comps, &q.coords);
            for i in 0..3 {
                comps[i] = comps[i] - ip * q.coords[i];
            }
            TangentVector::new(q.clone(), comps)
        }
    }
}

/// Project an ambient derivative onto the tangent space at `p`, yielding the
/// intrinsic gradient representation. Linear and idempotent.
pub fn project_to_tangent<R: Real>(p: &ManifoldPoint<R>, ambient: &[R]) -> Result<TangentVector<R>> {
    if ambient.len() != p.kind.ambient_dim() {
        return Err(Error::Shape(format!(
            "ambient length {} != ambient dim {}",
            ambient.len(),
            p.kind.ambient_dim()
        )));
    }
    match p.kind {
        ManifoldKind::EuclideanChart(_) => {
            Ok(TangentVector { base: p.clone(), components: ambient.to_vec() })
        }
        ManifoldKind::Sphere2 => {
            let ip = dot(ambient, &p.coords);
            let comps = ambient
                .iter()
                .zip(&p.coords)
                .map(|(&a, &pi)| a - ip * pi)
                .collect();
            Ok(TangentVector { base: p.clone(), components: comps })
        }
        ManifoldKind::SO3 => {
            let pt = mat_t3(&p.coords);
            let m = mat_mul3(&pt, ambient);
            let mt = mat_t3(&m);
            let mut skew = [R::zero(); 9];
            for i in 0..9 {
                skew[i] = (m[i] - mt[i]) * R::of(0.5);
            }
            Ok(TangentVector { base: p.clone(), components: vee(&skew).to_vec() })
        }
    }
}

/// One standard Gaussian sample via Box-Muller (deterministic per RNG state).
pub fn gauss<R: Real, G: Rng>(rng: &mut G) -> R {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > 1e-300 {
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            return R::of(z);
        }
    }
}

/// Draw `n` points from the uniform-ish sampling convention of each kind:
/// normalized Gaussians on S2, exp of clipped Gaussian axis-angle on SO(3),
/// standard Gaussians on charts.
pub fn sample_uniform<R: Real, G: Rng>(
    kind: ManifoldKind,
    rng: &mut G,
    n: usize,
) -> Vec<ManifoldPoint<R>> {
    assert!(n >= 1, "sample_uniform: n must be >= 1");
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        match kind {
            ManifoldKind::EuclideanChart(d) => {
                let coords: Vec<R> = (0..d).map(|_| gauss(rng)).collect();
                out.push(ManifoldPoint { kind, coords });
            }
            ManifoldKind::Sphere2 => loop {
                let v: Vec<R> = (0..3).map(|_| gauss::<R, G>(rng)).collect();
                let nv = norm(&v);
                if nv > R::of(1e-8) {
                    out.push(ManifoldPoint {
                        kind,
                        coords: v.into_iter().map(|x| x / nv).collect(),
                    });
                    break;
                }
            },
            ManifoldKind::SO3 => {
                let mut w: Vec<R> = (0..3).map(|_| gauss::<R, G>(rng)).collect();
                let cap = R::of(std::f64::consts::PI - 0.1);
                let nw = norm(&w);
                if nw > cap {
                    for wi in w.iter_mut() {
                        *wi = *wi / nw * cap;
                    }
                }
                out.push(ManifoldPoint { kind, coords: so3_exp(&w).to_vec() });
            }
        }
    }
    out
}

/// Fréchet (Karcher) mean of a batch, used as the reference point for the
/// transport-noise diagnostic. Gradient descent on the mean-squared distance.
pub fn frechet_mean<R: Real>(points: &[ManifoldPoint<R>]) -> Result<ManifoldPoint<R>> {
    assert!(!points.is_empty());
    let kind = points[0].kind;
    if let ManifoldKind::EuclideanChart(d) = kind {
        let mut mean = vec![R::zero(); d];
        for p in points {
            for (m, &c) in mean.iter_mut().zip(&p.coords) {
                *m += c;
            }
        }
        let nb = R::of_usize(points.len());
        for m in mean.iter_mut() {
            *m = *m / nb;
        }
        return ManifoldPoint::new(kind, mean);
    }
    let mut x = points[0].clone();
    let nb = R::of_usize(points.len());
    for _ in 0..50 {
        let dim = kind.tangent_dim();
        let mut step = vec![R::zero(); dim];
        for p in points {
            let lg = log_map(&x, p)?;
            for (s, &c) in step.iter_mut().zip(&lg.components) {
                *s += c / nb;
            }
        }
        let sn = norm(&step);
        let v = TangentVector { base: x.clone(), components: step };
        x = exp_map(&x, &v)?;
        if sn < R::of(1e-13) {
            break;
        }
    }
    Ok(x)
}
