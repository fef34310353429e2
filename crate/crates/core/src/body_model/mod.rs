//! Parametric blend-skinned body with identity, pose and expression blendshapes,
//! per-vertex offsets, shape-dependent joints and template subdivision.

mod asset;
mod lbs;
mod subdivide;
mod toy;

pub use asset::{BodyModelAsset, Region, ASSET_FORMAT, ASSET_VERSION};
pub use lbs::{
    blend_shapes, joint_world_transforms, pose_backward, pose_body, pose_body_traced,
    regress_joints, shaped_template, vertex_transforms, BodyParamGrads, BodyParams,
    BodyUpstream, PoseTrace, PosedBody,
};
pub use subdivide::subdivide;
pub use toy::{random_asset, toy_body, TOY_JOINTS};
