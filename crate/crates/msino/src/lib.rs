//! Curvature-aware Sobolev training of small neural maps on Riemannian
//! manifolds: geometry kernels, cotangent-Laplacian mesh operators, a tanh
//! MLP with exact first/second-order parameter derivatives, the manifold
//! Sobolev loss, and a Riemannian Sobolev-SGD optimizer with curvature-capped
//! step sizes and a Gauss-Newton/Newton refinement stage.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod manifold;
pub mod mesh;
pub mod net;
pub mod optim;
pub mod parallel;
pub mod scalar;

pub use error::{Error, Result};

/// Concrete single-precision aliases.
pub mod f32_api {
    pub type Point = crate::manifold::ManifoldPoint<f32>;
    pub type Tangent = crate::manifold::TangentVector<f32>;
    pub type Geometry = crate::manifold::GeometryPackage<f32>;
}

/// Concrete double-precision aliases.
pub mod f64_api {
    pub type Point = crate::manifold::ManifoldPoint<f64>;
    pub type Tangent = crate::manifold::TangentVector<f64>;
    pub type Geometry = crate::manifold::GeometryPackage<f64>;
}
