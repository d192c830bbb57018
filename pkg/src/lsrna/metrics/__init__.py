from .diagnostics import histogram_match, region_difference_report
from .distances import (GaussianMoments, KidResult, frechet_distance, kid_blocks, kid_mmd,
                        mmd_unbiased, polynomial_kernel)
from .embedders import (FeatureEmbedder, FeatureFileEmbedder, RandomProjectionEmbedder, image_key,
                        write_feature_file)
from .patches import (PatchProtocol, dump_coordinates, extract_aligned_patches, patch_coordinates,
                      prepare_reference_image)
from .report import MetricReport, evaluate_arrays, evaluate_set, load_image_dir

__all__ = [
    "FeatureEmbedder", "FeatureFileEmbedder", "GaussianMoments", "KidResult", "MetricReport",
    "PatchProtocol", "RandomProjectionEmbedder", "dump_coordinates", "evaluate_arrays", "evaluate_set",
    "extract_aligned_patches", "frechet_distance", "histogram_match", "image_key", "kid_blocks",
    "kid_mmd", "load_image_dir", "mmd_unbiased", "patch_coordinates", "polynomial_kernel",
    "prepare_reference_image", "region_difference_report", "write_feature_file",
]
