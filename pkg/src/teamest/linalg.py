"""Small dense linear-algebra helpers shared by the estimators."""
import logging

import numpy as np

logger = logging.getLogger(__name__)

# singular values below RCOND * largest are treated as zero
RCOND = 1e-10
# negative eigenvalues down to -COV_FLOOR * scale are roundoff and get clipped
COV_FLOOR = 1e-10


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def psd_pinv(s: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix with a relative cutoff.

    Uses an eigendecomposition so the result stays exactly symmetric.
    """
    if s.size == 0:
        return np.zeros_like(s)
    s = symmetrize(s)
    vals, vecs = np.linalg.eigh(s)
    top = np.max(np.abs(vals))
    if top == 0.0:
        logger.debug("%s is identically zero; pseudo-inverse is zero", what)
        return np.zeros_like(s)
    keep = vals > RCOND * top
    if not np.all(keep):
        logger.debug("%s is singular (rank %d of %d); using pseudo-inverse",
                     what, int(keep.sum()), len(vals))
    inv_vals = np.zeros_like(vals)
    inv_vals[keep] = 1.0 / vals[keep]
    return (vecs * inv_vals) @ vecs.T


def psd_sqrt(s: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (tolerates exact singularity)."""
    vals, vecs = np.linalg.eigh(symmetrize(s))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def clean_covariance(s: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Re-symmetrize and clip roundoff-level negative eigenvalues.

    Raises FloatingPointError when an eigenvalue is more negative than the
    roundoff floor, since that indicates a wrong update, not roundoff.
    """
    s = symmetrize(s)
    if s.size == 0:
        return s
    vals, vecs = np.linalg.eigh(s)
    floor = -COV_FLOOR * max(scale, 1.0)
    if vals[0] < floor:
        raise FloatingPointError(
            f"covariance has eigenvalue {vals[0]:.3e} below floor {floor:.1e}")
    if vals[0] < 0.0:
        vals = np.clip(vals, 0.0, None)
        s = symmetrize((vecs * vals) @ vecs.T)
    return s


def block_diag(blocks) -> np.ndarray:
    blocks = [np.atleast_2d(b) for b in blocks]
    if not blocks:
        return np.zeros((0, 0))
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def conditioning_gain(sigma: np.ndarray, h: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Gain ``sigma h' (h sigma h' + r)^+`` of linear-Gaussian conditioning."""
    p = sigma.shape[0]
    if h.shape[0] == 0:
        return np.zeros((p, 0))
    cross = sigma @ h.T
    return cross @ psd_pinv(h @ cross + r, "innovation covariance")


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Normwise ``||a - b|| / max(||a||, ||b||)``; 0 when both vanish."""
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) / scale
