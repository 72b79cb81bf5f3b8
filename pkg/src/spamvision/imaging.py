"""Image decoding, resizing, grayscale conversion, Canny edge maps, and the
normalized feature tensors consumed by the classifiers.

Three feature kinds are supported:

- ``raw``      resized RGB planes, 3 channels
- ``canny``    binary edge map of the grayscaled resize, 1 channel
- ``combined`` RGB planes stacked with the edge plane, 4 channels

All tensor values live in [0, 1]. Every operation here is a pure function of
its inputs and is safe to call concurrently over disjoint images.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, InvalidArgument
from .serialize import format_float

FEATURE_KINDS = ("raw", "canny", "combined")

# tensor channel count per feature kind
FEATURE_CHANNELS = {"raw": 3, "canny": 1, "combined": 4}

# ITU-R BT.601 luma weights
_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class CannyParams:
    """Edge detector settings.

    Thresholds apply to gradient magnitudes rescaled so the strongest
    gradient in the image maps to 255.
    """

    gaussian_sigma: float = 1.4
    gaussian_kernel_size: int = 5
    low_threshold: float = 100.0
    high_threshold: float = 200.0

    def __post_init__(self):
        if self.gaussian_sigma <= 0:
            raise InvalidArgument(f"gaussian_sigma must be positive, got {self.gaussian_sigma}")
        k = self.gaussian_kernel_size
        if k < 3 or k % 2 == 0:
            raise InvalidArgument(f"gaussian_kernel_size must be odd and >= 3, got {k}")
        if not 0 <= self.low_threshold < self.high_threshold <= 255:
            raise InvalidArgument(
                f"need 255 >= high_threshold > low_threshold >= 0, got "
                f"low={self.low_threshold} high={self.high_threshold}"
            )

    def to_dict(self) -> dict:
        return {
            "canny_sigma": self.gaussian_sigma,
            "canny_kernel": self.gaussian_kernel_size,
            "canny_low": self.low_threshold,
            "canny_high": self.high_threshold,
        }


@dataclass
class ImageBuffer:
    """8-bit pixel grid, shape (height, width, channels), channels 1 or 3."""

    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.dtype != np.uint8:
            raise InvalidArgument(f"pixel dtype must be uint8, got {self.pixels.dtype}")
        if self.pixels.ndim != 3 or self.pixels.shape[2] not in (1, 3):
            raise InvalidArgument(f"pixels must be (h, w, 1|3), got shape {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def data(self) -> np.ndarray:
        """Row-major flat sample view, length height*width*channels."""
        return self.pixels.reshape(-1)


@dataclass
class FeatureTensor:
    """Normalized float tensor, shape (height, width, channels), values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[2] not in (1, 3, 4):
            raise InvalidArgument(f"values must be (h, w, 1|3|4), got shape {self.values.shape}")
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < 0.0 or hi > 1.0:
            raise InvalidArgument(f"values must lie in [0, 1], got range [{lo}, {hi}]")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def decode(data: bytes, source=None) -> ImageBuffer:
    """Decode a JPEG or PNG byte stream into an RGB buffer.

    Grayscale and palette sources are expanded to three equal/resolved
    channels. Malformed streams raise DecodeError naming ``source``.
    """
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        where = f" ({source})" if source is not None else ""
        raise DecodeError(f"cannot decode image{where}: {exc}") from exc
    return ImageBuffer(pixels)


def load_image(path) -> ImageBuffer:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DecodeError(f"cannot read image file {path}: {exc}") from exc
    return decode(data, source=path)


def resize(img: ImageBuffer, target_w: int, target_h: int) -> ImageBuffer:
    """Bilinear resize with half-pixel centers; channel count preserved."""
    if target_w < 1 or target_h < 1:
        raise InvalidArgument(f"target dimensions must be >= 1, got {target_w}x{target_h}")
    src = img.pixels.astype(np.float64)
    sh, sw = img.height, img.width
    if (target_h, target_w) == (sh, sw):
        return ImageBuffer(img.pixels.copy())

    ys = np.clip((np.arange(target_h) + 0.5) * (sh / target_h) - 0.5, 0.0, sh - 1)
    xs = np.clip((np.arange(target_w) + 0.5) * (sw / target_w) - 0.5, 0.0, sw - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]

    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return ImageBuffer(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def to_grayscale(img: ImageBuffer) -> ImageBuffer:
    """BT.601 luma: gray = round(0.299 R + 0.587 G + 0.114 B)."""
    if img.channels != 3:
        raise InvalidArgument(f"to_grayscale expects 3 channels, got {img.channels}")
    gray = np.rint(img.pixels.astype(np.float64) @ _GRAY_WEIGHTS)
    return ImageBuffer(np.clip(gray, 0, 255).astype(np.uint8)[..., None])


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _convolve_reflect(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D correlation with reflect padding; keeps constant fields constant."""
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(img, ((ph, ph), (pw, pw)), mode="reflect")
    out = np.zeros_like(img)
    for u in range(kh):
        for v in range(kw):
            w = kernel[u, v]
            if w != 0.0:
                out += w * padded[u : u + img.shape[0], v : v + img.shape[1]]
    return out


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def _nonmax_suppress(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that are >= both neighbors along the quantized gradient
    direction (4 bins: 0, 45, 90, 135 degrees). Out-of-image neighbors 0."""
    h, w = mag.shape
    p = np.pad(mag, 1)
    east, west = p[1:-1, 2:], p[1:-1, :-2]
    south, north = p[2:, 1:-1], p[:-2, 1:-1]
    se, nw = p[2:, 2:], p[:-2, :-2]
    sw, ne = p[2:, :-2], p[:-2, 2:]

    # Row indices grow downward, so gradient angles in [22.5, 67.5) point
    # toward SE and the comparison axis is SE/NW; [112.5, 157.5) is SW/NE.
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    bin0 = (ang < 22.5) | (ang >= 157.5)
    bin45 = (ang >= 22.5) & (ang < 67.5)
    bin90 = (ang >= 67.5) & (ang < 112.5)
    bin135 = (ang >= 112.5) & (ang < 157.5)

    keep = (
        (bin0 & (mag >= east) & (mag >= west))
        | (bin45 & (mag >= se) & (mag >= nw))
        | (bin90 & (mag >= north) & (mag >= south))
        | (bin135 & (mag >= sw) & (mag >= ne))
    )
    return np.where(keep, mag, 0.0)


def _hysteresis(mag: np.ndarray, low: float, high: float) -> np.ndarray:
    """Binary map of pixels 8-connected to a strong (>= high) pixel through
    weak (>= low) pixels."""
    strong = mag >= high
    weak = mag >= low
    out = strong.copy()
    stack = [tuple(rc) for rc in np.argwhere(strong)]
    h, w = mag.shape
    while stack:
        r, c = stack.pop()
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and weak[rr, cc] and not out[rr, cc]:
                    out[rr, cc] = True
                    stack.append((rr, cc))
    return out


def canny(img: ImageBuffer, params: CannyParams = CannyParams()) -> ImageBuffer:
    """Binary edge map: Gaussian smoothing, Sobel gradients, non-maximum
    suppression, then double-threshold hysteresis. Output samples are 0/255.
    """
    if img.channels != 1:
        raise InvalidArgument(f"canny expects a grayscale buffer, got {img.channels} channels")
    k = params.gaussian_kernel_size
    if img.height < k or img.width < k:
        raise InvalidArgument(
            f"image {img.width}x{img.height} is smaller than the {k}x{k} Gaussian kernel"
        )

    plane = img.pixels[..., 0].astype(np.float64)
    smoothed = _convolve_reflect(plane, _gaussian_kernel(k, params.gaussian_sigma))
    gx = _convolve_reflect(smoothed, _SOBEL_X)
    gy = _convolve_reflect(smoothed, _SOBEL_Y)
    mag = np.hypot(gx, gy)

    # rescale so the strongest gradient maps to 255; a peak below the float
    # noise of the convolutions means a flat image, not a faint edge
    peak = mag.max()
    if peak <= 1e-6:
        return ImageBuffer(np.zeros((img.height, img.width, 1), dtype=np.uint8))
    mag = mag * (255.0 / peak)
    thinned = _nonmax_suppress(mag, gx, gy)
    edges = _hysteresis(thinned, params.low_threshold, params.high_threshold)
    return ImageBuffer(np.where(edges, 255, 0).astype(np.uint8)[..., None])


def _plane_tensors(img: ImageBuffer, side: int, params: CannyParams):
    """Resized raw planes and edge plane, both normalized; shared resize."""
    if img.channels != 3:
        raise InvalidArgument(f"feature extraction expects an RGB buffer, got {img.channels} channels")
    resized = resize(img, side, side)
    raw = resized.pixels.astype(np.float64) / 255.0
    edge = canny(to_grayscale(resized), params).pixels.astype(np.float64) / 255.0
    return raw, edge


def make_feature(
    img: ImageBuffer, kind: str, side: int, params: CannyParams = CannyParams()
) -> FeatureTensor:
    """Resize to side x side and build the normalized tensor for ``kind``."""
    if kind not in FEATURE_KINDS:
        raise InvalidArgument(f"unknown feature kind {kind!r}, expected one of {FEATURE_KINDS}")
    if kind == "raw":
        resized = resize(img, side, side)
        if resized.channels != 3:
            raise InvalidArgument(f"raw features need an RGB buffer, got {resized.channels} channels")
        return FeatureTensor(resized.pixels.astype(np.float64) / 255.0)
    raw, edge = _plane_tensors(img, side, params)
    if kind == "canny":
        return FeatureTensor(edge)
    return FeatureTensor(np.concatenate([raw, edge], axis=2))


def flatten(t: FeatureTensor) -> np.ndarray:
    """Row-major, channel-minor flattening; length = H*W*C."""
    return t.values.reshape(-1).copy()


def flat_feature(
    img: ImageBuffer, kind: str, side: int, params: CannyParams = CannyParams()
) -> np.ndarray:
    """Flat feature vector for the vector classifiers.

    ``combined`` concatenates the flattened raw vector with the flattened
    edge vector (length side^2 * 4) rather than interleaving channels.
    """
    if kind == "raw":
        return flatten(make_feature(img, "raw", side, params))
    raw, edge = _plane_tensors(img, side, params)
    if kind == "canny":
        return edge.reshape(-1)
    if kind == "combined":
        return np.concatenate([raw.reshape(-1), edge.reshape(-1)])
    raise InvalidArgument(f"unknown feature kind {kind!r}, expected one of {FEATURE_KINDS}")


def write_feature_csv(path, vectors, labels) -> None:
    """Dump feature vectors as CSV rows: label first, then the values."""
    lines = []
    for vec, label in zip(vectors, labels):
        flat = np.asarray(vec).reshape(-1)
        lines.append(",".join([str(int(label))] + [format_float(float(v)) for v in flat]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
