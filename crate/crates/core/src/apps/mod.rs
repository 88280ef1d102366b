//! Uses of the kernel energy as a quality metric: kernel size selection,
//! light-streak patch ranking and defocus estimation.

mod canny;
mod defocus;
mod matting;
mod size;
mod streaks;

pub use canny::{canny_edges, gaussian_smooth, sobel, EdgeMask};
pub use defocus::{
    estimate_defocus_sparse, propagate_defocus, DefocusParams, DefocusSample, DenseDefocus,
    SparseDefocusMap,
};
pub use matting::MattingLaplacian;
pub use size::{select_kernel_size, SizeCandidate, SizeFailure, SizeSelection, SizeSettings};
pub use streaks::{patch_to_kernel, rank_light_streak_patches, RankedPatch, StreakRanking};
