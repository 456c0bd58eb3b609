//! File formats around the pipeline: camera manifests, the versioned soup
//! PLY, OBJ and glTF exports, PNG images, and training-loss logs.

pub mod gltf;
pub mod log;
pub mod manifest;
pub mod obj;
pub mod png;
pub mod soup_ply;
