"""Interactive segmentation of patterned images.

Brush strokes propagate to full pixelwise class probabilities through a
precomputed sparse operator linking image pixels to the pixels of a learned
patch dictionary.  See README.md for the pipeline overview.
"""

from .dictionary import KMeansTree, assign_image, build_tree, node_count
from .features import FeatureExtractor, extract_patch, extract_training_set
from .graph import BiadjacencyGraph, TransformPair, build_biadjacency, normalize
from .grid import PixelGrid, dict_linear_index, image_linear_index
from .io import load_image, load_stack
from .phantom import Phantom
from .propagation import (UpdateOptions, UserMarking, binarise, fill_unlabeled,
                          overwrite, propagate_once, segment, update)
from .transfer import (StackOptions, TrainedModel, apply_to_image,
                       apply_to_stack, dictionary_probabilities, train_model)

__version__ = "0.1.0"

__all__ = [
    "PixelGrid", "image_linear_index", "dict_linear_index",
    "FeatureExtractor", "extract_patch", "extract_training_set",
    "KMeansTree", "build_tree", "assign_image", "node_count",
    "BiadjacencyGraph", "TransformPair", "build_biadjacency", "normalize",
    "UserMarking", "UpdateOptions", "fill_unlabeled", "propagate_once",
    "binarise", "overwrite", "update", "segment",
    "TrainedModel", "StackOptions", "train_model", "dictionary_probabilities",
    "apply_to_image", "apply_to_stack",
    "Phantom", "load_image", "load_stack",
    "__version__",
]
