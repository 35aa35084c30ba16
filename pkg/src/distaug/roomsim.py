"""Shoebox-room impulse responses by the image-source method."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .dsp import Waveform
from .errors import EmptyRange, InvalidGeometry

MAX_ORDER_LIMIT = 30
FD_TAPS = 8

DEFAULT_RANGES = {
    "dims_m": [[3.0, 8.0], [3.0, 8.0], [2.4, 3.5]],
    "absorption": [0.2, 0.8],
    "max_order": [3, 10],
    "source_frac": [0.15, 0.85],
    "mic_frac": [0.15, 0.85],
    "sample_rate_hz": 16000,
}


@dataclass(frozen=True)
class RoomConfig:
    dims_m: tuple
    absorption: float
    max_order: int
    source_pos_m: tuple
    mic_pos_m: tuple
    sample_rate_hz: int = 16000
    speed_of_sound_mps: float = 343.0
    fractional_delay: bool = True

    def __post_init__(self):
        dims = np.asarray(self.dims_m, dtype=float)
        src = np.asarray(self.source_pos_m, dtype=float)
        mic = np.asarray(self.mic_pos_m, dtype=float)
        if dims.shape != (3,) or src.shape != (3,) or mic.shape != (3,):
            raise InvalidGeometry("dims and positions must be 3-vectors")
        if np.any(dims <= 0):
            raise InvalidGeometry(f"room dimensions must be positive: {dims}")
        for name, p in (("source", src), ("mic", mic)):
            if np.any(p <= 0) or np.any(p >= dims):
                raise InvalidGeometry(f"{name} position {p} not strictly inside room {dims}")
        if not 0 < self.absorption <= 1:
            raise InvalidGeometry(f"absorption {self.absorption} outside (0, 1]")
        if not 0 <= int(self.max_order) <= MAX_ORDER_LIMIT:
            raise InvalidGeometry(f"max_order {self.max_order} outside [0, {MAX_ORDER_LIMIT}]")
        if self.sample_rate_hz <= 0 or self.speed_of_sound_mps <= 0:
            raise InvalidGeometry("sample rate and speed of sound must be positive")
        object.__setattr__(self, "dims_m", tuple(float(v) for v in dims))
        object.__setattr__(self, "source_pos_m", tuple(float(v) for v in src))
        object.__setattr__(self, "mic_pos_m", tuple(float(v) for v in mic))
        object.__setattr__(self, "max_order", int(self.max_order))

    @property
    def reflection_coeff(self) -> float:
        return math.sqrt(1.0 - self.absorption)

    @property
    def direct_distance_m(self) -> float:
        return math.dist(self.source_pos_m, self.mic_pos_m)

    def to_dict(self):
        return asdict(self)


def image_sources(cfg: RoomConfig):
    """Positions and reflection orders of all images up to ``max_order``.

    Along each axis an image is indexed by (n, q): its coordinate is
    ``(1 - 2q) * src + 2 n L`` and it has been reflected
    ``|n - q| + |n|`` times.
    """
    N = cfg.max_order
    n = np.arange(-N, N + 1)
    per_axis = []
    for axis in range(3):
        L, s = cfg.dims_m[axis], cfg.source_pos_m[axis]
        nn, qq = np.meshgrid(n, [0, 1], indexing="ij")
        nn, qq = nn.ravel(), qq.ravel()
        coord = (1 - 2 * qq) * s + 2 * nn * L
        order = np.abs(nn - qq) + np.abs(nn)
        keep = order <= N
        per_axis.append((coord[keep], order[keep]))
    (cx, ox), (cy, oy), (cz, oz) = per_axis
    order = ox[:, None, None] + oy[None, :, None] + oz[None, None, :]
    mask = order <= N
    ix, iy, iz = np.nonzero(mask)
    pos = np.stack([cx[ix], cy[iy], cz[iz]], axis=1)
    return pos, order[mask]


def _fd_kernel(frac: np.ndarray) -> np.ndarray:
    """8-tap Hann-windowed sinc for delays ``floor(d) - 3 + k``, k = 0..7.

    Rows are normalized to unit sum so each tap group carries exactly the
    image amplitude at DC.
    """
    k = np.arange(FD_TAPS) - (FD_TAPS // 2 - 1)
    t = k[None, :] - frac[:, None]
    win = 0.5 + 0.5 * np.cos(np.pi * t / (FD_TAPS / 2))
    h = np.sinc(t) * win
    return h / h.sum(axis=1, keepdims=True)


def simulate_rir(cfg: RoomConfig) -> Waveform:
    """Sum of one (fractionally) delayed tap per image source.

    Tap amplitude is ``beta**order / (4 pi d)`` with
    ``beta = sqrt(1 - absorption)``. Images whose amplitude is exactly
    zero (perfectly absorbing walls) do not extend the response.
    """
    pos, order = image_sources(cfg)
    beta = cfg.reflection_coeff
    amp_order = np.where(order == 0, 1.0, beta ** order.astype(float))
    keep = amp_order > 0
    pos, order, amp_order = pos[keep], order[keep], amp_order[keep]
    dist = np.linalg.norm(pos - np.asarray(cfg.mic_pos_m), axis=1)
    amp = amp_order / (4 * np.pi * dist)
    delay = cfg.sample_rate_hz * dist / cfg.speed_of_sound_mps

    if cfg.fractional_delay:
        base = np.floor(delay).astype(int)
        taps = _fd_kernel(delay - base)
        start = base - (FD_TAPS // 2 - 1)
        length = int(start.max()) + FD_TAPS
        h = np.zeros(length + FD_TAPS)
        offset = FD_TAPS  # room for taps that would land before t = 0
        idx = offset + start[:, None] + np.arange(FD_TAPS)[None, :]
        np.add.at(h, idx.ravel(), (amp[:, None] * taps).ravel())
        # anything before t = 0 is folded onto the first sample
        h[offset] += h[:offset].sum()
        h = h[offset:offset + length]
    else:
        d = np.round(delay).astype(int)
        h = np.zeros(int(d.max()) + 1)
        np.add.at(h, d, amp)
    return Waveform(h, cfg.sample_rate_hz)


def _draw(rng, lo_hi, name, integer=False):
    if not isinstance(lo_hi, (list, tuple)):
        return lo_hi
    lo, hi = lo_hi
    if lo > hi:
        raise EmptyRange(f"{name}: min {lo} > max {hi}")
    if lo == hi:
        return lo
    if integer:
        return int(rng.integers(int(lo), int(hi) + 1))
    return float(rng.uniform(lo, hi))


def sample_room(rng_seed, ranges: dict | None = None) -> RoomConfig:
    """Draw a room from per-field [min, max] ranges.

    Source and microphone positions are drawn as fractions of the room
    dimensions, so any fraction range inside (0, 1) yields interior points.
    """
    r = dict(DEFAULT_RANGES)
    if ranges:
        r.update(ranges)
    rng = np.random.default_rng(rng_seed)
    dims = [_draw(rng, r["dims_m"][i], f"dims_m[{i}]") for i in range(3)]
    absorption = _draw(rng, r["absorption"], "absorption")
    max_order = _draw(rng, r["max_order"], "max_order", integer=True)
    sf = [_draw(rng, r["source_frac"], "source_frac") for _ in range(3)]
    mf = [_draw(rng, r["mic_frac"], "mic_frac") for _ in range(3)]
    for name in ("source_frac", "mic_frac"):
        lo, hi = r[name]
        if lo <= 0 or hi >= 1:
            raise EmptyRange(f"{name} must lie strictly inside (0, 1)")
    return RoomConfig(
        dims_m=tuple(dims),
        absorption=absorption,
        max_order=int(max_order),
        source_pos_m=tuple(f * d for f, d in zip(sf, dims)),
        mic_pos_m=tuple(f * d for f, d in zip(mf, dims)),
        sample_rate_hz=int(r.get("sample_rate_hz", 16000)),
        speed_of_sound_mps=float(r.get("speed_of_sound_mps", 343.0)),
        fractional_delay=bool(r.get("fractional_delay", True)),
    )
