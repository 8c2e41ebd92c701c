"""Moving-object segmentation toolkit.

Segments independently moving objects in frame pairs from optical flow:
a from-scratch encoder-decoder network trained on synthetic scenes,
followed by objectness voting and dense-CRF refinement, with region and
boundary evaluation.
"""

from motionseg.tensor import Tensor

__version__ = "0.1.0"

__all__ = ["Tensor", "__version__"]
