pub mod numkernel;
pub mod liegroup;
pub mod gradmap;
pub mod symmpair;
pub mod cartanset;
pub mod orbitreport;

pub use cartanset::{
    classify_cartan_sets, fundamental_cartan, intersection_algebras, normalize_to_cartan, reduce_to_torus,
    weyl_group, CartanContext, StandardCartanSubset, WeylGroupReport,
};
pub use gradmap::{flow_to_closed, in_zero_fiber, isotropy_and_slice, phi, FlowParams, FlowTrace, GradientValue};
pub use liegroup::{cartan_factor, preset, GroupPoint, InvolutionSpec, Scenario, PRESETS};
pub use numkernel::{matexp, CMatrix, RealSubspace, Tolerances};
pub use orbitreport::{classify, classify_batch, proper_region_probe, ClassifyParams, OrbitContext, OrbitReport};
pub use symmpair::{in_null_cone, is_closed_orbit, jordan_chevalley, SymmetricPairData};
pub use num_complex::Complex64;
