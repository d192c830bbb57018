from .model import (LsrConfig, LsrModel, bicubic_latent_upsample, extract_features, load_lsr,
                    make_cell, make_coord, query_pixel, save_lsr, upsample_from_features,
                    upsample_latent)
from .train import LsrTrainConfig, consistency_l1, train_lsr, validation_l1

__all__ = [
    "LsrConfig", "LsrModel", "LsrTrainConfig", "bicubic_latent_upsample", "consistency_l1",
    "extract_features", "load_lsr", "make_cell", "make_coord", "query_pixel", "save_lsr",
    "train_lsr", "upsample_from_features", "upsample_latent", "validation_l1",
]
