"""Multispectral image upscaling and land-cover classification.

The package splits into small focused modules:

- raster: PGM and scene I/O, feature extraction, class maps
- interp: bilinear and bicubic interpolation (patch solve + upscalers)
- nnet: conv/dense layers, losses, parameter packing, model files
- optim: scaled conjugate gradient and minibatch SGD
- srcnn: the three-layer super-resolution network
- classifier: MLP land-cover classifier over pooled band features
- metrics: 8-bit MSE/PSNR and the chained per-step PSNR protocol
- pipeline: end-to-end experiment driver
- synth: synthetic labeled scenes for tests and demos
"""

from .classifier import (
    ConfusionMatrix,
    MlpModel,
    classify_features,
    classify_scene,
    evaluate,
    load_classifier,
    save_classifier,
    train_classifier,
)
from .interp import (
    BicubicPatchCoeffs,
    CornerData,
    eval_bicubic_patch,
    solve_bicubic_patch,
    upscale_bicubic,
    upscale_bilinear,
)
from .metrics import PsnrReport, PsnrRow, chained_psnr, downsample_block_mean, mse, psnr
from .optim import SgdConfig, scg_minimize, sgd_train
from .pipeline import ExperimentConfig, ExperimentResult, load_config, run_experiment
from .raster import (
    BandRaster,
    ClassMap,
    FeatureSet,
    MultispectralScene,
    RasterError,
    extract_features,
    load_scene,
    pool_2x2,
    read_pgm,
    write_pgm,
    write_scene,
)
from .srcnn import (
    SrcnnModel,
    load_srcnn,
    make_training_pairs,
    save_srcnn,
    srcnn_forward,
    train_srcnn,
    train_srcnn_scg,
    upscale_srcnn,
)

__version__ = "0.1.0"

__all__ = [
    "BandRaster",
    "BicubicPatchCoeffs",
    "ClassMap",
    "ConfusionMatrix",
    "CornerData",
    "ExperimentConfig",
    "ExperimentResult",
    "FeatureSet",
    "MlpModel",
    "MultispectralScene",
    "PsnrReport",
    "PsnrRow",
    "RasterError",
    "SgdConfig",
    "SrcnnModel",
    "chained_psnr",
    "classify_features",
    "classify_scene",
    "downsample_block_mean",
    "eval_bicubic_patch",
    "evaluate",
    "extract_features",
    "load_classifier",
    "load_config",
    "load_scene",
    "load_srcnn",
    "make_training_pairs",
    "mse",
    "pool_2x2",
    "psnr",
    "read_pgm",
    "run_experiment",
    "save_classifier",
    "save_srcnn",
    "scg_minimize",
    "sgd_train",
    "solve_bicubic_patch",
    "srcnn_forward",
    "train_classifier",
    "train_srcnn",
    "train_srcnn_scg",
    "upscale_bicubic",
    "upscale_bilinear",
    "upscale_srcnn",
    "write_pgm",
    "write_scene",
]
