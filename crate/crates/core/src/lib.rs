//! Discrete locally area-constrained Helfrich flow of closed triangulated
//! surfaces, with curvature diagnostics and round-sphere reference solutions.

pub mod diagnostics;
pub mod dual;
pub mod flow;
pub mod geom;
pub mod mesh;
pub mod ode;
pub mod scalar;
pub mod validate;
pub mod vec3;

pub use dual::{Dual, Dual64};
pub use mesh::{MeshError, TriangleMesh};
pub use scalar::Real;
pub use vec3::Vec3;

pub type Mesh = TriangleMesh<f64>;
pub type Point = Vec3<f64>;
pub type Cache = geom::GeometryCache<f64>;
pub type State = flow::FlowState<f64>;
pub type Frame = diagnostics::BlowUpFrame;
