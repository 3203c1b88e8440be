//! A small dense tanh feed-forward network with reverse-mode derivatives:
//! values, input Jacobians, parameter Jacobians of the value, and parameter
//! Jacobians of the input Jacobian (needed for the Sobolev gradient-residual
//! term). Hidden layers are tanh; the output layer is linear.
//!
//! The parameter-Jacobian-of-gradient block is computed by one reverse sweep
//! per input-Jacobian entry (m * d_in sweeps), which is the documented
//! desk-scale cost trade-off.

use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::scalar::Real;

/// Weights and biases of the network; hidden activations are tanh, the last
/// layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<R> {
    /// Layer sizes [d_in, h_1, ..., m].
    pub dims: Vec<usize>,
    /// Row-major dims[l+1] x dims[l] weight matrices.
    pub weights: Vec<Vec<R>>,
    pub biases: Vec<Vec<R>>,
    pub seed: u64,
}

/// Which derivative blocks [`evaluate`] should fill.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeedFlags {
    pub input_jacobian: bool,
    pub param_jacobian_value: bool,
    pub param_jacobian_gradient: bool,
}

impl NeedFlags {
    pub fn all() -> Self {
        NeedFlags {
            input_jacobian: true,
            param_jacobian_value: true,
            param_jacobian_gradient: true,
        }
    }

    pub fn value_only() -> Self {
        NeedFlags::default()
    }
}

/// The outputs of one evaluation. Blocks not requested stay empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalBundle<R> {
    /// m-vector u(x).
    pub value: Vec<R>,
    /// m x d_in ambient Jacobian, row-major.
    pub input_jacobian: Vec<R>,
    /// m x p, row-major.
    pub param_jacobian_value: Vec<R>,
    /// (m*d_in) x p, row-major; row c*d_in+j differentiates input_jacobian[c][j].
    pub param_jacobian_gradient: Vec<R>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    dims: Vec<usize>,
    seed: u64,
}

impl<R: Real> NetParams<R> {
    pub fn d_in(&self) -> usize {
        self.dims[0]
    }

    pub fn d_out(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    /// Total parameter count p.
    pub fn n_params(&self) -> usize {
        (0..self.n_layers())
            .map(|l| self.dims[l + 1] * self.dims[l] + self.dims[l + 1])
            .sum()
    }

    /// Scaled-Gaussian init (std 1/sqrt(fan_in)), zero biases, deterministic
    /// per seed. Requires at least one hidden layer.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 3 {
            return Err(Error::Validation(
                "init needs at least one hidden layer (dims length >= 3)".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Validation("zero layer width".into()));
        }
        Ok(Self::init_any(dims, seed))
    }

    /// Same init without the hidden-layer requirement (used by linear toy
    /// problems in the optimizer tests).
    pub fn init_any(dims: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let fan_in = dims[l];
            let scale = R::one() / R::of_usize(fan_in).sqrt();
            let w: Vec<R> = (0..dims[l + 1] * fan_in)
                .map(|_| crate::manifold::gauss::<R, _>(&mut rng) * scale)
                .collect();
            weights.push(w);
            biases.push(vec![R::zero(); dims[l + 1]]);
        }
        NetParams { dims: dims.to_vec(), weights, biases, seed }
    }

    /// Flatten parameters into a single vector: per layer, row-major weights
    /// then biases.
    pub fn flatten(&self) -> Vec<R> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in 0..self.n_layers() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    /// Overwrite parameters from a flat vector in [`flatten`] order.
    pub fn unflatten(&mut self, theta: &[R]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "flat parameter length {} != p = {}",
                theta.len(),
                self.n_params()
            )));
        }
        let mut k = 0;
        for l in 0..self.n_layers() {
            let nw = self.weights[l].len();
            self.weights[l].copy_from_slice(&theta[k..k + nw]);
            k += nw;
            let nb = self.biases[l].len();
            self.biases[l].copy_from_slice(&theta[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// theta += alpha * delta (flat order).
    pub fn add_scaled(&mut self, delta: &[R], alpha: R) -> Result<()> {
        if delta.len() != self.n_params() {
            return Err(Error::Shape("delta length != p".into()));
        }
        let mut k = 0;
        for l in 0..self.n_layers() {
            for w in self.weights[l].iter_mut() {
                *w += alpha * delta[k];
                k += 1;
            }
            for b in self.biases[l].iter_mut() {
                *b += alpha * delta[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Snapshot: flat little-endian f64 vector plus a `<path>.json` sidecar
    /// with dims and seed.
    pub fn save(&self, path: &Path) -> Result<()> {
        let flat = self.flatten();
        let mut file = std::fs::File::create(path)?;
        for v in &flat {
            file.write_all(&v.as_f64().to_le_bytes())?;
        }
        let sidecar = Sidecar { dims: self.dims.clone(), seed: self.seed };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| Error::Config(format!("sidecar serialization: {e}")))?;
        std::fs::write(sidecar_path(path), json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(sidecar_path(path))?;
        let sidecar: Sidecar = serde_json::from_str(&json)
            .map_err(|e| Error::Config(format!("sidecar parse: {e}")))?;
        let mut params = Self::init_any(&sidecar.dims, sidecar.seed);
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let p = params.n_params();
        if bytes.len() != p * 8 {
            return Err(Error::Shape(format!(
                "snapshot holds {} bytes, expected {}",
                bytes.len(),
                p * 8
            )));
        }
        let flat: Vec<R> = bytes
            .chunks_exact(8)
            .map(|c| R::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        params.unflatten(&flat)?;
        Ok(params)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Offset of layer l's weight block in the flat parameter vector.
fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offs = Vec::with_capacity(dims.len());
    let mut k = 0;
    for l in 0..dims.len() - 1 {
        offs.push(k);
        k += dims[l + 1] * dims[l] + dims[l + 1];
    }
    offs
}

/// Forward and reverse sweeps producing the requested [`EvalBundle`] blocks.
pub fn evaluate<R: Real>(
    params: &NetParams<R>,
    x: &[R],
    need: NeedFlags,
) -> Result<EvalBundle<R>> {
    let d = params.d_in();
    let m = params.d_out();
    let nl = params.n_layers();
    if x.len() != d {
        return Err(Error::Shape(format!(
            "input length {} != d_in {}",
            x.len(),
            d
        )));
    }
    // forward pass: activations[0] = x, activations[l] post-tanh (or linear
    // output at the last layer)
    let mut activations: Vec<Vec<R>> = Vec::with_capacity(nl + 1);
    activations.push(x.to_vec());
    for l in 0..nl {
        let (rows, cols) = (params.dims[l + 1], params.dims[l]);
        let mut z = params.biases[l].clone();
        for r in 0..rows {
            let wrow = &params.weights[l][r * cols..(r + 1) * cols];
            let mut s = R::zero();
            for (wi, ai) in wrow.iter().zip(&activations[l]) {
                s += *wi * *ai;
            }
            z[r] += s;
        }
        if l + 1 < nl {
            for zi in z.iter_mut() {
                *zi = zi.tanh();
            }
        }
        activations.push(z);
    }
    let value = activations[nl].clone();
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network output is not finite".into()));
    }

    let p = params.n_params();
    let offs = layer_offsets(&params.dims);
    let mut bundle = EvalBundle {
        value,
        input_jacobian: Vec::new(),
        param_jacobian_value: Vec::new(),
        param_jacobian_gradient: Vec::new(),
    };

    // tanh slopes d_l = 1 - a_l^2 for hidden layers
    let slopes: Vec<Vec<R>> = (1..nl)
        .map(|l| activations[l].iter().map(|a| R::one() - *a * *a).collect())
        .collect();

    let need_value_sweeps = need.input_jacobian || need.param_jacobian_value;
    if need_value_sweeps {
        bundle.input_jacobian = vec![R::zero(); m * d];
        if need.param_jacobian_value {
            bundle.param_jacobian_value = vec![R::zero(); m * p];
        }
        // one reverse sweep per output row
        for c in 0..m {
            let mut abar = vec![R::zero(); m];
            abar[c] = R::one();
            for l in (0..nl).rev() {
                let (rows, cols) = (params.dims[l + 1], params.dims[l]);
                // at hidden layers the adjoint passes through tanh first
                let zbar: Vec<R> = if l + 1 < nl {
                    abar.iter().zip(&slopes[l]).map(|(&g, &s)| g * s).collect()
                } else {
                    abar.clone()
                };
                if need.param_jacobian_value {
                    let row = &mut bundle.param_jacobian_value[c * p..(c + 1) * p];
                    let base = offs[l];
                    for r in 0..rows {
                        for j in 0..cols {
                            row[base + r * cols + j] += zbar[r] * activations[l][j];
                        }
                        row[base + rows * cols + r] += zbar[r];
                    }
                }
                let mut prev = vec![R::zero(); cols];
                for r in 0..rows {
                    let wrow = &params.weights[l][r * cols..(r + 1) * cols];
                    for j in 0..cols {
                        prev[j] += wrow[j] * zbar[r];
                    }
                }
                abar = prev;
            }
            if need.input_jacobian {
                bundle.input_jacobian[c * d..(c + 1) * d].copy_from_slice(&abar);
            }
        }
    }

    if need.param_jacobian_gradient {
        bundle.param_jacobian_gradient = vec![R::zero(); m * d * p];
        for j in 0..d {
            // forward tangent pass with seed e_j:
            // t_0 = e_j; s_l = W_l t_{l-1}; hidden t_l = d_l .* s_l
            let mut tangents: Vec<Vec<R>> = Vec::with_capacity(nl + 1);
            let mut t0 = vec![R::zero(); d];
            t0[j] = R::one();
            tangents.push(t0);
            let mut pre_tangents: Vec<Vec<R>> = Vec::with_capacity(nl);
            for l in 0..nl {
                let (rows, cols) = (params.dims[l + 1], params.dims[l]);
                let mut s = vec![R::zero(); rows];
                for r in 0..rows {
                    let wrow = &params.weights[l][r * cols..(r + 1) * cols];
                    let mut acc = R::zero();
                    for (wi, ti) in wrow.iter().zip(&tangents[l]) {
                        acc += *wi * *ti;
                    }
                    s[r] = acc;
                }
                pre_tangents.push(s.clone());
                if l + 1 < nl {
                    for (si, sl) in s.iter_mut().zip(&slopes[l]) {
                        *si = *si * *sl;
                    }
                }
                tangents.push(s);
            }
            for c in 0..m {
                // reverse sweep for the scalar t_L[c] through the joint
                // (activation, tangent) computation graph
                let row_idx = c * d + j;
                let row = &mut bundle.param_jacobian_gradient
                    [row_idx * p..(row_idx + 1) * p];
                let mut tbar = vec![R::zero(); m];
                tbar[c] = R::one();
                let mut abar = vec![R::zero(); m];
                for l in (0..nl).rev() {
                    let (rows, cols) = (params.dims[l + 1], params.dims[l]);
                    let base = offs[l];
                    let (zbar, sbar): (Vec<R>, Vec<R>) = if l + 1 < nl {
                        // a_l = tanh(z_l), t_l = d_l .* s_l, d_l = 1 - a_l^2
                        let mut atot = abar.clone();
                        for r in 0..rows {
                            atot[r] += tbar[r]
                                * (-R::of(2.0) * activations[l + 1][r] * pre_tangents[l][r]);
                        }
                        let zbar: Vec<R> = atot
                            .iter()
                            .zip(&slopes[l])
                            .map(|(&g, &s)| g * s)
                            .collect();
                        let sbar: Vec<R> = tbar
                            .iter()
                            .zip(&slopes[l])
                            .map(|(&g, &s)| g * s)
                            .collect();
                        (zbar, sbar)
                    } else {
                        (abar.clone(), tbar.clone())
                    };
                    for r in 0..rows {
                        for jj in 0..cols {
                            row[base + r * cols + jj] +=
                                zbar[r] * activations[l][jj] + sbar[r] * tangents[l][jj];
                        }
                        row[base + rows * cols + r] += zbar[r];
                    }
                    let mut abar_prev = vec![R::zero(); cols];
                    let mut tbar_prev = vec![R::zero(); cols];
                    for r in 0..rows {
                        let wrow = &params.weights[l][r * cols..(r + 1) * cols];
                        for jj in 0..cols {
                            abar_prev[jj] += wrow[jj] * zbar[r];
                            tbar_prev[jj] += wrow[jj] * sbar[r];
                        }
                    }
                    abar = abar_prev;
                    tbar = tbar_prev;
                }
            }
        }
    }
    Ok(bundle)
}

/// Generic spectral bound: max(1, product of layer operator norms), with
/// tanh slope bound 1. Power iteration tolerance 1e-6, <= 20000 iterations
/// (near-degenerate top singular pairs converge slowly by value).
pub fn spectral_bound<R: Real>(params: &NetParams<R>) -> Result<R> {
    let mut prod = R::one();
    for l in 0..params.n_layers() {
        let (rows, cols) = (params.dims[l + 1], params.dims[l]);
        let n = spectral_norm(&params.weights[l], rows, cols, R::of(1e-6), 20000)?;
        prod = prod * n;
    }
    Ok(prod.max(R::one()))
}

/// SO(3) closed-form mode: max(1, RMS over the probe batch of the Frobenius
/// norm of the parameter Jacobian of u).
pub fn spectral_bound_so3<R: Real>(params: &NetParams<R>, probe: &[Vec<R>]) -> Result<R> {
    if probe.is_empty() {
        return Err(Error::Validation("empty probe batch".into()));
    }
    let mut acc = R::zero();
    for x in probe {
        let bundle = evaluate(
            params,
            x,
            NeedFlags { param_jacobian_value: true, ..NeedFlags::default() },
        )?;
        let fro: R = bundle.param_jacobian_value.iter().map(|v| *v * *v).sum();
        acc += fro;
    }
    Ok((acc / R::of_usize(probe.len())).sqrt().max(R::one()))
}
