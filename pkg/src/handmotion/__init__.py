"""handmotion: domain- and viewpoint-robust hand action recognition.

Pipeline: 7-joint skeleton standardization -> 54-dim pose features -> causal
TCN per-frame motion descriptors -> learned summarization -> linear (intra-
domain) or few-shot KNN (cross-domain) classification, with a real-time
streaming inference path.
"""

from ._kernels import BACKEND_NAME, HAVE_EXT

__version__ = "0.1.0"

__all__ = ["BACKEND_NAME", "HAVE_EXT", "__version__"]
