"""Evaluation toolkit for structure-preserving image augmentation.

Metrics over paired projector outputs (segmentation IoU, depth RMSE,
masked edge L1, detection F1, kernel MMD, LPIPS, MS-SSIM, R-Precision),
a weather/time prompt pipeline, and a gated condition-selection numeric
core with a hand-written, finite-difference-verified backward pass.
"""

__version__ = "0.1.0"
