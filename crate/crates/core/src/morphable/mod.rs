//! PCA morphable face model, spherical-harmonics shading, rasterization,
//! the fitting energy and its pyramid driver, and UV-space texture
//! extraction.

pub mod energy;
pub mod fit;
pub mod inputs;
pub mod io;
pub mod model;
pub mod raster;
pub mod scene;
pub mod sh;
pub mod texture;
pub mod toy;

pub use io::{load_model, read_model, save_model, write_model};
pub use energy::{total_energy, ActiveParams, EnergyTerms, EnergyWeights, FitProblem};
pub use fit::{fit_model, initial_params, FitFailure, FitOptions, FitReport, LevelReport};
pub use inputs::{Landmark, Landmarks, SegmentationMask};
pub use model::{evaluate_pca, vertex_normals, Basis, Coefficients, MorphableModel};
pub use raster::{render_synth, SceneGeometry, VisibilityBuffer};
pub use scene::{project_points, Camera, SceneParams};
pub use sh::{sh_shade, SH_LIGHT_LEN};
pub use texture::{bake_lowfreq_texture, extract_partial_albedo, render_textured, PartialTexture, UvLayout};
