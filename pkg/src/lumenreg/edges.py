"""Edge features on depth frames and the losses that compare them.

The edge operator runs full Canny on a depth frame (Gaussian smooth with
sigma = 1 px, Sobel gradients, non-maximum suppression, hysteresis with
thresholds relative to the max gradient magnitude), binarizes, then blurs
the binary map with a peak-normalized Gaussian kernel. An edge frame is a
2-D float64 array with values in [0, 1].

The similarity between two edge-frame sequences is the mean elementwise
product over all keyframes and pixels; registration maximizes it at
alignment. Alternative comparison losses (L1/L2/NCC/GC/DICE) are provided
for ablation studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .frames import DEPTH_CLAMP_MM, DepthFrame

SMOOTH_SIGMA = 1.0  # px, Canny pre-smoothing of the depth frame

LOSS_METRICS = ("l1", "l2", "ncc", "gc", "dice")


@dataclass(frozen=True)
class EdgeConfig:
    """Canny thresholds (fractions of the max gradient magnitude) and the
    post-binarization blur kernel."""

    low: float = 0.1
    high: float = 0.2
    sigma: float = 4.0
    radius: int = 12

    def __post_init__(self):
        if not 0.0 < self.low < self.high <= 1.0:
            raise ValueError(f"need 0 < low < high <= 1, got {self.low}, {self.high}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.radius < math.ceil(3.0 * self.sigma):
            raise ValueError(
                f"radius {self.radius} < ceil(3*sigma) = {math.ceil(3.0 * self.sigma)}"
            )

    def scaled(self, factor: int) -> "EdgeConfig":
        """Blur width expressed at a downsampled resolution."""
        sigma = self.sigma / factor
        return EdgeConfig(self.low, self.high,
                          sigma=sigma, radius=max(1, math.ceil(3.0 * sigma)))


def gaussian_kernel(sigma: float, radius: int, peak_normalized: bool) -> np.ndarray:
    """1-D Gaussian taps; unit peak or unit sum."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k if peak_normalized else k / k.sum()


@njit(cache=True, nogil=True)
def _convolve_separable(img, taps, out, tmp):
    """Separable 2-D convolution with replicated borders."""
    h, w = img.shape
    r = (len(taps) - 1) // 2
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for k in range(-r, r + 1):
                jj = min(max(j + k, 0), w - 1)
                acc += taps[k + r] * img[i, jj]
            tmp[i, j] = acc
    for j in range(w):
        for i in range(h):
            acc = 0.0
            for k in range(-r, r + 1):
                ii = min(max(i + k, 0), h - 1)
                acc += taps[k + r] * tmp[ii, j]
            out[i, j] = acc


@njit(cache=True, nogil=True)
def _sobel(img, gx, gy):
    """3x3 Sobel gradients with replicated borders."""
    h, w = img.shape
    for i in range(h):
        im = max(i - 1, 0)
        ip = min(i + 1, h - 1)
        for j in range(w):
            jm = max(j - 1, 0)
            jp = min(j + 1, w - 1)
            gx[i, j] = (img[im, jp] + 2.0 * img[i, jp] + img[ip, jp]
                        - img[im, jm] - 2.0 * img[i, jm] - img[ip, jm])
            gy[i, j] = (img[ip, jm] + 2.0 * img[ip, j] + img[ip, jp]
                        - img[im, jm] - 2.0 * img[im, j] - img[im, jp])


@njit(cache=True, nogil=True)
def _nonmax_suppress(mag, gx, gy, out):
    """Keep pixels that are local maxima along the gradient direction.

    The direction is quantized to 4 sectors; the comparison is strict
    against the forward neighbor and non-strict against the backward one
    so exact plateaus thin to a single pixel. The 1-px border is dropped.
    """
    h, w = mag.shape
    out[:] = 0.0
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            m = mag[i, j]
            if m <= 0.0:
                continue
            x = gx[i, j]
            y = gy[i, j]
            ax = abs(x)
            ay = abs(y)
            if ax >= 2.414 * ay:          # ~horizontal gradient
                n1 = mag[i, j + 1]
                n2 = mag[i, j - 1]
            elif ay >= 2.414 * ax:        # ~vertical gradient
                n1 = mag[i + 1, j]
                n2 = mag[i - 1, j]
            elif (x > 0.0) == (y > 0.0):  # +45 deg diagonal
                n1 = mag[i + 1, j + 1]
                n2 = mag[i - 1, j - 1]
            else:                          # -45 deg diagonal
                n1 = mag[i + 1, j - 1]
                n2 = mag[i - 1, j + 1]
            if m > n1 and m >= n2:
                out[i, j] = m


@njit(cache=True, nogil=True)
def _hysteresis(mag, low_t, high_t, out, stack):
    """8-connected flood fill from strong pixels through weak ones."""
    h, w = mag.shape
    out[:] = np.uint8(0)
    top = 0
    for i in range(h):
        for j in range(w):
            if mag[i, j] >= high_t and out[i, j] == 0:
                out[i, j] = 1
                stack[top] = i * w + j
                top += 1
                while top > 0:
                    top -= 1
                    p = stack[top]
                    pi = p // w
                    pj = p % w
                    for di in range(-1, 2):
                        ni = pi + di
                        if ni < 0 or ni >= h:
                            continue
                        for dj in range(-1, 2):
                            nj = pj + dj
                            if nj < 0 or nj >= w:
                                continue
                            if out[ni, nj] == 0 and mag[ni, nj] >= low_t:
                                out[ni, nj] = 1
                                stack[top] = ni * w + nj
                                top += 1


@njit(cache=True, nogil=True)
def _canny_binary(depth, smooth_taps, low, high, binary, tmp_a, tmp_b, gx, gy, stack):
    _convolve_separable(depth, smooth_taps, tmp_a, tmp_b)
    _sobel(tmp_a, gx, gy)
    h, w = depth.shape
    max_mag = 0.0
    for i in range(h):
        for j in range(w):
            m = math.sqrt(gx[i, j] * gx[i, j] + gy[i, j] * gy[i, j])
            tmp_b[i, j] = m
            if m > max_mag:
                max_mag = m
    if max_mag <= 1e-12:
        binary[:] = np.uint8(0)
        return
    _nonmax_suppress(tmp_b, gx, gy, tmp_a)
    _hysteresis(tmp_a, low * max_mag, high * max_mag, binary, stack)


class _Workspace:
    """Reusable scratch arrays for one edge-operator invocation shape."""

    def __init__(self, shape):
        self.shape = shape
        self.tmp_a = np.empty(shape)
        self.tmp_b = np.empty(shape)
        self.gx = np.empty(shape)
        self.gy = np.empty(shape)
        self.binary = np.empty(shape, dtype=np.uint8)
        self.stack = np.empty(shape[0] * shape[1], dtype=np.int64)


def _depth_array(d) -> np.ndarray:
    if isinstance(d, DepthFrame):
        return d.depth
    return np.ascontiguousarray(d, dtype=np.float64)


def edge_binary(d, cfg: EdgeConfig, workspace: _Workspace | None = None) -> np.ndarray:
    """Binarized Canny edges of a depth frame (uint8 0/1).

    Miss pixels (+inf) are clamped to the far limit before gradients, so
    hit/miss silhouettes register as depth discontinuities.
    """
    depth = _depth_array(d)
    ws = workspace if workspace is not None and workspace.shape == depth.shape \
        else _Workspace(depth.shape)
    clamped = np.minimum(depth, DEPTH_CLAMP_MM)
    taps = gaussian_kernel(SMOOTH_SIGMA, math.ceil(3.0 * SMOOTH_SIGMA), False)
    _canny_binary(clamped, taps, cfg.low, cfg.high,
                  ws.binary, ws.tmp_a, ws.tmp_b, ws.gx, ws.gy, ws.stack)
    return ws.binary.copy()


def edge_operator(d, cfg: EdgeConfig, workspace: _Workspace | None = None) -> np.ndarray:
    """Blurred edge frame of a depth frame: values in [0, 1].

    Canny edges are blurred with a Gaussian kernel normalized to unit
    peak (an isolated edge pixel keeps value 1 at its center); the result
    is clipped to [0, 1] where blurred responses overlap.
    """
    depth = _depth_array(d)
    ws = workspace if workspace is not None and workspace.shape == depth.shape \
        else _Workspace(depth.shape)
    clamped = np.minimum(depth, DEPTH_CLAMP_MM)
    smooth_taps = gaussian_kernel(SMOOTH_SIGMA, math.ceil(3.0 * SMOOTH_SIGMA), False)
    _canny_binary(clamped, smooth_taps, cfg.low, cfg.high,
                  ws.binary, ws.tmp_a, ws.tmp_b, ws.gx, ws.gy, ws.stack)
    blur_taps = gaussian_kernel(cfg.sigma, cfg.radius, True)
    out = np.empty(depth.shape)
    _convolve_separable(ws.binary.astype(np.float64), blur_taps, out, ws.tmp_a)
    return np.clip(out, 0.0, 1.0)


def _as_stack(frames) -> np.ndarray:
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected a sequence of 2-D frames, got shape {arr.shape}")
    return arr


def similarity(rendered, target) -> float:
    """Mean elementwise product over all frames and pixels.

    Bounded in [0, 1] for inputs in [0, 1]; over rigid transforms it is
    maximal when rendered and target edges align.
    """
    a = _as_stack(rendered)
    b = _as_stack(target)
    if a.shape != b.shape:
        raise ValueError(f"frame sets differ in shape: {a.shape} vs {b.shape}")
    return float(np.mean(a * b))


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-mean, unit-variance correlation; 0 for degenerate inputs
    (callers turn that into maximal loss)."""
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(np.sum(a * a)) * float(np.sum(b * b)))
    if denom <= 0.0:
        return 0.0
    return float(np.sum(a * b)) / denom


def frame_loss(a, b, metric: str) -> float:
    """Comparison loss between two frame sequences; lower is better.

    l1/l2 are means of absolute/squared differences; ncc is 1 - NCC and
    gc is 1 - gradient correlation (mean of the per-axis NCC of Sobel
    gradients), both averaged over frames with zero-variance inputs
    scored as the maximal loss 1.0; dice is 1 - 2|A&B|/(|A|+|B|) on
    binary masks (two empty masks count as identical).
    """
    metric = metric.lower()
    if metric not in LOSS_METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {LOSS_METRICS}")
    a = _as_stack(a)
    b = _as_stack(b)
    if a.shape != b.shape:
        raise ValueError(f"frame sets differ in shape: {a.shape} vs {b.shape}")

    if metric == "l1":
        return float(np.mean(np.abs(a - b)))
    if metric == "l2":
        return float(np.mean((a - b) ** 2))
    if metric == "dice":
        mask_a = a > 0
        mask_b = b > 0
        total = int(mask_a.sum()) + int(mask_b.sum())
        if total == 0:
            return 0.0
        return 1.0 - 2.0 * int((mask_a & mask_b).sum()) / total

    per_frame = []
    for fa, fb in zip(a, b):
        if metric == "ncc":
            if fa.std() == 0.0 or fb.std() == 0.0:
                per_frame.append(1.0)
            else:
                per_frame.append(1.0 - _ncc(fa, fb))
        else:  # gc
            gax = np.empty(fa.shape)
            gay = np.empty(fa.shape)
            gbx = np.empty(fb.shape)
            gby = np.empty(fb.shape)
            _sobel(fa, gax, gay)
            _sobel(fb, gbx, gby)
            if (gax.std() == 0.0 and gay.std() == 0.0) or \
               (gbx.std() == 0.0 and gby.std() == 0.0):
                per_frame.append(1.0)
            else:
                per_frame.append(1.0 - 0.5 * (_ncc(gax, gbx) + _ncc(gay, gby)))
    return float(np.mean(per_frame))
