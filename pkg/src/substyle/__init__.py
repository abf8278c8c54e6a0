"""substyle: universal style transfer with sub-style decomposition.

Feature-statistics stylization (whitening-coloring transforms over VGG-19
pooling features) extended with ICA+GMM sub-style models and three transfer
modes: user-weighted mixtures (SMT), semantic matching (SST), and multi-image
collections (MST).
"""

from .errors import (ConfigError, DegenerateFeaturesWarning, FormatError,
                     NumericError, StyleTransferError)
from .linalg import MomentStats, EigenDecomp, moment_stats, sym_eig, cosine_similarity
from .cnn import (FeatureMap, Network, WeightBank, load_network,
                  encode, encode_taps, decode,
                  conv3x3, relu, maxpool2x2, upsample_nearest)
from .wct import (whiten, color, wct, blend, StylizeConfig, StyleSource,
                  multi_level_stylize)
from .decomposition import (IcaModel, GmmModel, SubStyleModel,
                            ContentSegmentation, fast_ica, gmm_fit, assign,
                            decompose_style, segment_content, export_masks,
                            combined_stats, save_model, load_model)
from .transfer import MatchTable, MixWeights, smt, match_substyles, sst, mst_decompose
from .image import load_image, save_image, psnr

__version__ = "0.1.0"

__all__ = [
    "StyleTransferError", "ConfigError", "FormatError", "NumericError",
    "DegenerateFeaturesWarning",
    "MomentStats", "EigenDecomp", "moment_stats", "sym_eig", "cosine_similarity",
    "FeatureMap", "Network", "WeightBank", "load_network", "encode",
    "encode_taps", "decode", "conv3x3", "relu", "maxpool2x2", "upsample_nearest",
    "whiten", "color", "wct", "blend", "StylizeConfig", "StyleSource",
    "multi_level_stylize",
    "IcaModel", "GmmModel", "SubStyleModel", "ContentSegmentation",
    "fast_ica", "gmm_fit", "assign", "decompose_style", "segment_content",
    "export_masks", "combined_stats", "save_model", "load_model",
    "MatchTable", "MixWeights", "smt", "match_substyles", "sst", "mst_decompose",
    "load_image", "save_image", "psnr",
    "__version__",
]
