"""Channel normalization for LPIPS-style feature stacks."""

import numpy as np


def normalize_lpips_features(raw: np.ndarray) -> tuple[np.ndarray, int]:
    """Unit L2 normalization along channels per spatial site.

    raw is (C, H, W). Zero channel vectors are left as zeros; the count
    of such sites is returned so callers can warn.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 3:
        raise ValueError(f"expected CxHxW features, got shape {raw.shape}")
    norms = np.sqrt(np.sum(raw * raw, axis=0, keepdims=True))
    zero_sites = int(np.sum(norms[0] == 0.0))
    out = raw / np.where(norms == 0.0, 1.0, norms)
    return out, zero_sites
