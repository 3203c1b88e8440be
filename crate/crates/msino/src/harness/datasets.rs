//! Synthetic dataset generators replicating the published experiment sizes
//! (64x64 = 4096 sphere grid points, 2562-vertex surface, T = 1000
//! orientations). The underlying measurements are unavailable, so fields are
//! synthetic with matching shapes; absolute loss values are not comparable.

use crate::error::Result;
use crate::loss::{LabeledBatch, MeshContext, Sample};
use crate::manifold::{
    gauss, geodesic_distance, log_map, project_to_tangent, so3_exp, ManifoldKind,
    ManifoldPoint, TangentVector,
};
use crate::mesh::{vertex_gradient, LaplaceOperator, TriMesh};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A full labeled pool plus a seeded 80/20 train/validation index split.
pub struct Pool {
    pub samples: Vec<Sample<f64>>,
    pub values: Vec<f64>,
    pub grads: Option<Vec<Vec<TangentVector<f64>>>>,
    pub m: usize,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Assemble a batch from pool indices (mesh context attached when the
    /// task carries one).
    pub fn batch<'a>(
        &self,
        idx: &[usize],
        mesh: Option<MeshContext<'a, f64>>,
    ) -> LabeledBatch<'a, f64> {
        let samples = idx.iter().map(|&i| self.samples[i].clone()).collect();
        let mut values = Vec::with_capacity(idx.len() * self.m);
        for &i in idx {
            values.extend_from_slice(&self.values[i * self.m..(i + 1) * self.m]);
        }
        let grads = self
            .grads
            .as_ref()
            .map(|g| idx.iter().map(|&i| g[i].clone()).collect());
        LabeledBatch { samples, values, m: self.m, grads, mesh }
    }

    /// FNV-1a over the bit patterns of all labels and coordinates (used to
    /// compare pools for determinism).
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for s in &self.samples {
            for &c in &s.point.coords {
                eat(c);
            }
        }
        for &v in &self.values {
            eat(v);
        }
        if let Some(gs) = &self.grads {
            for g in gs {
                for t in g {
                    for &c in &t.components {
                        eat(c);
                    }
                }
            }
        }
        for &i in self.train_idx.iter().chain(&self.val_idx) {
            eat(i as f64);
        }
        h
    }
}

/// Seeded shuffle split: floor(n/5) validation points, remainder training.
fn split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let n_val = n / 5;
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

/// Latitude-longitude grid on the unit sphere with the synthetic field
/// z = 20 cos(lat) + 5 sin(3 lon) cos(lat), standardized to zero mean and
/// unit variance; gradient labels are the analytic intrinsic gradient of
/// the standardized field.
pub fn gen_sphere_dataset(seed: u64, n: usize) -> Result<Pool> {
    assert!(n >= 10, "sphere dataset needs n >= 10");
    let rows = (n as f64).sqrt().floor().max(2.0) as usize;
    let cols = n.div_ceil(rows);
    let mut lats = Vec::with_capacity(n);
    let mut lons = Vec::with_capacity(n);
    'outer: for i in 0..rows {
        for j in 0..cols {
            if lats.len() == n {
                break 'outer;
            }
            lats.push(-std::f64::consts::FRAC_PI_2
                + std::f64::consts::PI * (i as f64 + 0.5) / rows as f64);
            lons.push(-std::f64::consts::PI
                + 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / cols as f64);
        }
    }
    let raw: Vec<f64> = lats
        .iter()
        .zip(&lons)
        .map(|(&la, &lo)| 20.0 * la.cos() + 5.0 * (3.0 * lo).sin() * la.cos())
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let var = raw.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    let values: Vec<f64> = raw.iter().map(|z| (z - mean) / std).collect();

    let mut samples = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    for (&la, &lo) in lats.iter().zip(&lons) {
        let (sl, cl) = (la.sin(), la.cos());
        let (so, co) = (lo.sin(), lo.cos());
        let p = ManifoldPoint::new(
            ManifoldKind::Sphere2,
            vec![cl * co, cl * so, sl],
        )?;
        // orthonormal frame: e_lat = dp/dlat, e_lon = (1/cos lat) dp/dlon
        let e_lat = [-sl * co, -sl * so, cl];
        let e_lon = [-so, co, 0.0];
        // dz/dlat = -20 sin(lat) - 5 sin(3 lon) sin(lat);
        // (1/cos lat) dz/dlon = 15 cos(3 lon)
        let zlat = -20.0 * sl - 5.0 * (3.0 * lo).sin() * sl;
        let zlon = 15.0 * (3.0 * lo).cos();
        let comps: Vec<f64> = (0..3)
            .map(|d| (zlat * e_lat[d] + zlon * e_lon[d]) / std)
            .collect();
        // re-project: analytically tangent, but rounding in the frame can
        // leave a ~1e-10 normal component that trips validation
        grads.push(vec![project_to_tangent(&p, &comps)?]);
        samples.push(Sample { point: p, vertex: None });
    }
    let (train_idx, val_idx) = split(n, seed);
    Ok(Pool { samples, values, grads: Some(grads), m: 1, train_idx, val_idx })
}

/// Heat-diffusion-smoothed seeded noise as a per-vertex "thickness" field,
/// standardized to unit scale, with labels from the area-averaged vertex
/// gradient and a seeded 80/20 vertex split.
pub fn gen_mesh_dataset(seed: u64, mesh: &TriMesh<f64>, op: &LaplaceOperator<f64>) -> Result<Pool> {
    let n = mesh.vertices.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field: Vec<f64> = (0..n).map(|_| gauss::<f64, _>(&mut rng)).collect();
    // implicit (backward Euler) heat diffusion: solve (M - tau W) u_new =
    // M u_old. Unconditionally stable and monotone in Dirichlet energy, and
    // tau ~ the first nonzero eigenvalue scale leaves a genuinely smooth,
    // learnable field after the three applications
    let tau = 0.5;
    for _ in 0..3 {
        let rhs: Vec<f64> = (0..n).map(|i| op.mass(i) * field[i]).collect();
        field = crate::linalg::cg(
            |x, y| {
                op.w.matvec(x, y);
                for i in 0..n {
                    y[i] = op.mass(i) * x[i] - tau * y[i];
                }
            },
            |_| {},
            &rhs,
            1e-12,
            10_000,
        )?;
    }
    let mean = field.iter().sum::<f64>() / n as f64;
    let var = field.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    for f in field.iter_mut() {
        *f = (*f - mean) / std;
    }
    let gradients = vertex_gradient(mesh, &field)?;
    let mut samples = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    for v in 0..n {
        let p = ManifoldPoint::new(
            ManifoldKind::EuclideanChart(3),
            mesh.vertices[v].to_vec(),
        )?;
        grads.push(vec![TangentVector::new(p.clone(), gradients[v].to_vec())?]);
        samples.push(Sample { point: p, vertex: Some(v) });
    }
    let (train_idx, val_idx) = split(n, seed);
    Ok(Pool { samples, values: field, grads: Some(grads), m: 1, train_idx, val_idx })
}

/// Band-limited rotation trajectory R_t = exp(hat w(t)) with ||w|| <= pi-0.2;
/// target z_t = d_SO(3)(R_t, I); gradient labels -log_{R_t}(I)/d.
pub fn gen_so3_dataset(seed: u64, t: usize) -> Result<Pool> {
    assert!(t >= 2, "SO(3) dataset needs T >= 2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let harmonics = 4;
    let amps: Vec<[f64; 3]> = (0..harmonics)
        .map(|_| {
            [
                gauss::<f64, _>(&mut rng),
                gauss::<f64, _>(&mut rng),
                gauss::<f64, _>(&mut rng),
            ]
        })
        .collect();
    let phases: Vec<[f64; 3]> = (0..harmonics)
        .map(|_| {
            [
                rng.gen::<f64>() * std::f64::consts::TAU,
                rng.gen::<f64>() * std::f64::consts::TAU,
                rng.gen::<f64>() * std::f64::consts::TAU,
            ]
        })
        .collect();
    let omega = |s: f64| -> [f64; 3] {
        let mut w = [0.0; 3];
        for k in 0..harmonics {
            let ang = std::f64::consts::TAU * (k + 1) as f64 * s;
            for d in 0..3 {
                w[d] += amps[k][d] * (ang + phases[k][d]).sin();
            }
        }
        w
    };
    let mut maxn: f64 = 0.0;
    for i in 0..t {
        let w = omega(i as f64 / t as f64);
        maxn = maxn.max((w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt());
    }
    let scale = if maxn > std::f64::consts::PI - 0.2 {
        (std::f64::consts::PI - 0.2) / maxn
    } else {
        1.0
    };
    let reference = ManifoldPoint::<f64>::so3_identity();
    let mut samples = Vec::with_capacity(t);
    let mut values = Vec::with_capacity(t);
    let mut grads = Vec::with_capacity(t);
    for i in 0..t {
        let mut w = omega(i as f64 / t as f64);
        for d in w.iter_mut() {
            *d *= scale;
        }
        let r = so3_exp(&w);
        let p = ManifoldPoint::new(ManifoldKind::SO3, r.to_vec())?;
        let d = geodesic_distance(&p, &reference)?;
        values.push(d);
        let comps = if d > 1e-6 {
            let lg = log_map(&p, &reference)?;
            lg.components.iter().map(|c| -c / d).collect()
        } else {
            vec![0.0; 3]
        };
        grads.push(vec![TangentVector::new(p.clone(), comps)?]);
        samples.push(Sample { point: p, vertex: None });
    }
    let (train_idx, val_idx) = split(t, seed);
    Ok(Pool { samples, values, grads: Some(grads), m: 1, train_idx, val_idx })
}

/// Planted linear-regression toy (convex quadratic loss) on a Euclidean
/// chart, with mild label noise.
pub fn gen_toy_dataset(seed: u64, d: usize, n: usize) -> Result<Pool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_star: Vec<f64> = (0..d).map(|_| gauss::<f64, _>(&mut rng)).collect();
    let b_star = gauss::<f64, _>(&mut rng);
    let mut samples = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| gauss::<f64, _>(&mut rng)).collect();
        let y = x.iter().zip(&w_star).map(|(a, b)| a * b).sum::<f64>() + b_star
            + 0.05 * gauss::<f64, _>(&mut rng);
        samples.push(Sample {
            point: ManifoldPoint::new(ManifoldKind::EuclideanChart(d), x)?,
            vertex: None,
        });
        values.push(y);
    }
    let (train_idx, val_idx) = split(n, seed);
    Ok(Pool { samples, values, grads: None, m: 1, train_idx, val_idx })
}
