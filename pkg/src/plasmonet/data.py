"""Dataset construction.

Four families: image spectral compression (2-D DFT, 32 lowest-frequency
bins), standard IDX image/label ingestion, dynamic-gesture time folding over
a synthetic measurement stream, and a point-scatterer echo generator that
stands in for road-scene field data, sliced into per-region classification
tasks.
"""

import gzip
import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .beam import REGION_INTERVALS, SPEED_OF_LIGHT
from .validation import ValidationError, as_complex_array

# ---------------------------------------------------------------------------
# Spectral image features
# ---------------------------------------------------------------------------


def dc_bin_coordinates(shape, count):
    """The ``count`` 2-D DFT bins closest to DC under the wrapped radius.

    Distance of bin (u, v) is sqrt(min(u, H-u)^2 + min(v, W-v)^2); ties break
    lexicographically on (u, v). The DC bin itself is always first.
    """
    h, w = shape
    uu, vv = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    du = np.minimum(uu, h - uu)
    dv = np.minimum(vv, w - vv)
    radius = np.sqrt(du**2 + dv**2).ravel()
    order = np.lexsort((vv.ravel(), uu.ravel(), radius))
    take = order[:count]
    return np.stack([take // w, take % w], axis=1)


@dataclass(frozen=True)
class SpectralInputSpec:
    """Which DFT bins feed the network, and in what order."""

    image_size: tuple = (28, 28)
    bin_count: int = 32

    @property
    def bins(self):
        return dc_bin_coordinates(self.image_size, self.bin_count)


def mnist_dft_compress(image, spec=SpectralInputSpec(), normalize=True):
    """Compress one grayscale image to its lowest-frequency DFT components.

    Pixel values are expected in [0, 1]. With ``normalize=True`` (the
    default) the output is scaled to unit maximum modulus; pass False to keep
    the raw (linear-in-the-image) DFT values.
    """
    img = np.asarray(image, dtype=float)
    if img.shape != spec.image_size:
        raise ValidationError(
            f"image: expected shape {spec.image_size}, got {img.shape}"
        )
    return dft_compress_batch(img[None], spec, normalize)[0]


def dft_compress_batch(images, spec=SpectralInputSpec(), normalize=True):
    """Vectorized :func:`mnist_dft_compress` over (n, H, W) images."""
    imgs = np.asarray(images, dtype=float)
    if imgs.ndim == 2 and imgs.shape[1] == spec.image_size[0] * spec.image_size[1]:
        imgs = imgs.reshape(-1, *spec.image_size)
    if imgs.ndim != 3 or imgs.shape[1:] != spec.image_size:
        raise ValidationError(
            f"images: expected (n, {spec.image_size[0]}, {spec.image_size[1]}), got {imgs.shape}"
        )
    spectra = np.fft.fft2(imgs)
    bins = spec.bins
    feats = spectra[:, bins[:, 0], bins[:, 1]]
    if normalize:
        peak = np.abs(feats).max(axis=1, keepdims=True)
        peak[peak == 0] = 1.0
        feats = feats / peak
    return feats


# ---------------------------------------------------------------------------
# IDX image/label files (optionally gzipped)
# ---------------------------------------------------------------------------


def _open_maybe_gz(path):
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx_images(path):
    """Read an IDX3 unsigned-byte image file; returns (n, rows, cols) uint8."""
    with _open_maybe_gz(path) as f:
        header = f.read(16)
        if len(header) < 16:
            raise ValidationError(f"{path}: truncated IDX header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != 0x00000803:
            raise ValidationError(f"{path}: bad IDX image magic 0x{magic:08x}")
        buf = f.read(n * rows * cols)
    if len(buf) != n * rows * cols:
        raise ValidationError(f"{path}: truncated IDX payload")
    return np.frombuffer(buf, dtype=np.uint8).reshape(n, rows, cols)


def read_idx_labels(path):
    with _open_maybe_gz(path) as f:
        header = f.read(8)
        if len(header) < 8:
            raise ValidationError(f"{path}: truncated IDX header")
        magic, n = struct.unpack(">II", header)
        if magic != 0x00000801:
            raise ValidationError(f"{path}: bad IDX label magic 0x{magic:08x}")
        buf = f.read(n)
    if len(buf) != n:
        raise ValidationError(f"{path}: truncated IDX payload")
    return np.frombuffer(buf, dtype=np.uint8).copy()


def load_image_dataset(images_path, labels_path, classes=None):
    """IDX image/label pair as ([0,1] floats, int labels), optionally filtered."""
    images = read_idx_images(images_path).astype(float) / 255.0
    labels = read_idx_labels(labels_path).astype(int)
    if len(images) != len(labels):
        raise ValidationError(
            f"image count {len(images)} != label count {len(labels)}"
        )
    if classes is not None:
        keep = np.isin(labels, list(classes))
        images, labels = images[keep], labels[keep]
        remap = {c: i for i, c in enumerate(sorted(classes))}
        labels = np.array([remap[c] for c in labels])
    return images, labels


# ---------------------------------------------------------------------------
# Dynamic gestures: synthetic measurement streams and time folding
# ---------------------------------------------------------------------------

GESTURE_POSES = ("five", "fist", "one", "palm", "three", "thumb")
GESTURE_TRANSITIONS = (
    ("five", "fist"),
    ("one", "palm"),
    ("three", "fist"),
    ("thumb", "fist"),
)
VOID_LABEL = "void"


@dataclass(frozen=True)
class GestureWindowSpec:
    """Time-folding layout: two slots separated by a fixed interval.

    The 16 antenna channels occupy network input ports 8..23 (0-based);
    remaining ports carry matched loads and read as zeros.
    """

    slot_count: int = 2
    slot_interval_s: float = 5.0
    antenna_ports: tuple = tuple(range(8, 24))
    freq_count: int = 3
    port_count: int = 32

    def __post_init__(self):
        if self.slot_interval_s <= 0:
            raise ValidationError("slot_interval_s must be positive")
        if len(self.antenna_ports) != 16:
            raise ValidationError("expected 16 antenna ports")


@dataclass
class GestureStream:
    """Timestamped antenna measurements with annotated transition events."""

    times_s: np.ndarray
    values: np.ndarray  # (n_times, 16 antennas, n_freqs) complex
    events: list  # [(time_s, transition name)]

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if np.any(np.diff(self.times_s) <= 0):
            raise ValidationError("stream times must be strictly increasing")
        if self.values.shape[0] != len(self.times_s):
            raise ValidationError("stream values/times length mismatch")


def fold_gesture_windows(stream, spec=GestureWindowSpec()):
    """Fold consecutive measurement pairs into labeled 32 x freqs x 2 samples.

    A window pairs samples at (t_i, t_{i+1}); it gets a transition's name when
    the pair spans that event and the void label otherwise. Pairs separated by
    more than twice the slot interval are skipped with a warning.
    """
    if stream.values.shape[1] != len(spec.antenna_ports):
        raise ValidationError(
            f"stream carries {stream.values.shape[1]} channels, spec expects "
            f"{len(spec.antenna_ports)}"
        )
    samples, labels = [], []
    for i in range(len(stream.times_s) - 1):
        gap = stream.times_s[i + 1] - stream.times_s[i]
        if gap > 2 * spec.slot_interval_s:
            warnings.warn(
                f"stream gap of {gap:.3f} s at t={stream.times_s[i]:.3f} exceeds twice "
                f"the slot interval; window skipped",
                stacklevel=2,
            )
            continue
        window = np.zeros((spec.port_count, spec.freq_count, spec.slot_count), dtype=complex)
        window[list(spec.antenna_ports), :, 0] = stream.values[i]
        window[list(spec.antenna_ports), :, 1] = stream.values[i + 1]
        label = VOID_LABEL
        for t_event, name in stream.events:
            if stream.times_s[i] < t_event < stream.times_s[i + 1]:
                label = name
        samples.append(window)
        labels.append(label)
    return samples, labels


def _pose_templates(freq_count, seed=2026):
    """Fixed per-pose complex response templates (16 antennas x freqs)."""
    rng = np.random.default_rng(seed)
    return {
        pose: (rng.standard_normal((16, freq_count)) + 1j * rng.standard_normal((16, freq_count)))
        / np.sqrt(2)
        for pose in GESTURE_POSES
    }


def synth_gesture_take(transition, spec, rng, snr_db=10.0, samples_per_take=11):
    """One recording take: hold pose A, switch to pose B mid-stream.

    The transition happens between samples 4 and 5, so folding yields
    ``samples_per_take - 1`` windows of which exactly one carries the gesture
    label. Per-take complex gain jitter models recipient variation.
    """
    templates = _pose_templates(spec.freq_count)
    a, b = transition
    gain = 1.0 + 0.3 * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2)
    times = np.arange(samples_per_take) * spec.slot_interval_s
    noise_amp = 10 ** (-snr_db / 20)
    values = np.empty((samples_per_take, 16, spec.freq_count), dtype=complex)
    for i in range(samples_per_take):
        pose = templates[a] if i <= 4 else templates[b]
        noise = (
            rng.standard_normal((16, spec.freq_count))
            + 1j * rng.standard_normal((16, spec.freq_count))
        ) / np.sqrt(2)
        values[i] = gain * pose + noise_amp * noise
    event_time = 4.5 * spec.slot_interval_s
    return GestureStream(times_s=times, values=values, events=[(event_time, f"{a}->{b}")])


def synth_gesture_dataset(
    spec=GestureWindowSpec(),
    repetitions=50,
    takes=5,
    snr_db=10.0,
    seed=0,
    balance=True,
):
    """Full synthetic gesture corpus: 4 gestures x reps x takes x 10 windows.

    Returns (X, y, class_names) with X of shape (n, 32, freqs, 2). With
    ``balance=True`` the void class is down-sampled (seeded) so all five
    class counts are identical.
    """
    rng = np.random.default_rng(seed)
    class_names = [f"{a}->{b}" for a, b in GESTURE_TRANSITIONS] + [VOID_LABEL]
    samples, labels = [], []
    for transition in GESTURE_TRANSITIONS:
        for _ in range(repetitions * takes):
            stream = synth_gesture_take(transition, spec, rng, snr_db)
            xs, ys = fold_gesture_windows(stream, spec)
            samples.extend(xs)
            labels.extend(ys)
    x = np.array(samples)
    y = np.array([class_names.index(l) for l in labels])
    if balance:
        per_gesture = min(np.sum(y == k) for k in range(len(GESTURE_TRANSITIONS)))
        keep = []
        for k in range(len(class_names)):
            idx = np.flatnonzero(y == k)
            if class_names[k] == VOID_LABEL and len(idx) > per_gesture:
                idx = np.sort(rng.choice(idx, per_gesture, replace=False))
            keep.append(idx)
        keep = np.concatenate(keep)
        x, y = x[keep], y[keep]
    return x, y, class_names


# ---------------------------------------------------------------------------
# Road scenes: point-scatterer echoes through the beam codebook
# ---------------------------------------------------------------------------

ROAD_FREQS_HZ = (10.45e9, 10.5e9, 10.55e9)

#: Region name -> (classes, slice of the 11-beam axis).
ROAD_REGIONS = {
    "left": (("vehicle", "empty"), slice(0, 4)),
    "center": (("person", "vehicle", "empty"), slice(4, 7)),
    "right": (("person", "empty"), slice(7, 11)),
}


def default_antenna_positions(spacing_m=SPEED_OF_LIGHT / 10.5e9 / 2):
    """12 Rx antennas: 8-element roof line plus 4 side-mounted, (x, y) meters."""
    roof = np.stack([(np.arange(8) - 3.5) * spacing_m, np.full(8, -1.5)], axis=1)
    side = np.array([[-0.9, -1.0], [-0.9, -1.2], [0.9, -1.0], [0.9, -1.2]])
    return np.vstack([roof, side])


@dataclass(frozen=True)
class ScattererTemplate:
    count: int
    total_cross_section_m2: float
    extent_m: float


PERSON_TEMPLATE = ScattererTemplate(count=3, total_cross_section_m2=0.5, extent_m=0.5)
VEHICLE_TEMPLATE = ScattererTemplate(count=8, total_cross_section_m2=10.0, extent_m=4.0)


@dataclass
class SceneConfig:
    """Synthesis conventions for the echo generator. Seed fixes everything."""

    freqs_hz: tuple = ROAD_FREQS_HZ
    antenna_positions: np.ndarray = field(default_factory=default_antenna_positions)
    range_m: tuple = (4.0, 10.0)
    snr_db: float = 10.0
    rx_ports: tuple = tuple(range(10, 22))
    seed: int = 0

    def __post_init__(self):
        self.antenna_positions = np.asarray(self.antenna_positions, dtype=float)
        if self.antenna_positions.ndim != 2 or self.antenna_positions.shape[1] != 2:
            raise ValidationError("antenna_positions: expected (n, 2) meters")
        if not (0 < self.range_m[0] < self.range_m[1]):
            raise ValidationError(f"range_m: need 0 < near < far, got {self.range_m}")
        if len(self.rx_ports) != self.antenna_positions.shape[0]:
            raise ValidationError("rx_ports must match the antenna count")


def place_scatterers(template, angle_deg, range_m, rng):
    """Scatter cluster for one object: positions (k, 2) and weights (k,)."""
    if range_m <= 0:
        raise ValidationError("scatterer range must be positive")
    th = np.radians(angle_deg)
    center = np.array([range_m * np.sin(th), range_m * np.cos(th)])
    offsets = rng.uniform(-template.extent_m / 2, template.extent_m / 2, size=(template.count, 2))
    offsets[:, 1] *= 0.3  # objects are wider than deep as seen from the array
    weights = rng.uniform(0.5, 1.5, template.count)
    weights = weights / weights.sum() * template.total_cross_section_m2
    return center + offsets, weights


def synth_echo_scene(cfg, codebook, grid, objects, rng):
    """Complex echo tensor (beams x antennas x freqs) for one scene.

    Each scatterer contributes
    sqrt(sigma) * G_b(theta) * exp(-j 2 pi f (R_tx + R_rx) / c) / (R_tx R_rx)
    per beam/antenna/frequency, where G_b is the amplitude of beam b's
    far-field pattern at the scatterer azimuth; complex Gaussian noise is
    added at the configured floor. ``objects`` is a list of (positions,
    weights) pairs from :func:`place_scatterers`.
    """
    n_beams = len(codebook)
    n_ant = cfg.antenna_positions.shape[0]
    n_freq = len(cfg.freqs_hz)
    tensor = np.zeros((n_beams, n_ant, n_freq), dtype=complex)
    for positions, weights in objects:
        r_tx = np.hypot(positions[:, 0], positions[:, 1])
        if np.any(r_tx == 0):
            raise ValidationError("scatterer at zero range")
        theta = np.arctan2(positions[:, 0], positions[:, 1])
        delta = positions[:, None, :] - cfg.antenna_positions[None, :, :]
        r_rx = np.hypot(delta[..., 0], delta[..., 1])  # (k, ant)
        if np.any(r_rx == 0):
            raise ValidationError("scatterer at zero range from an antenna")
        gains = np.abs(
            grid.geometry.steering_rows(np.degrees(theta)) @ codebook.aperture_fields.T
        )  # (k, beams)
        amp = np.sqrt(weights)[:, None, None] / (r_tx[:, None, None] * r_rx[:, :, None])
        for b in range(n_beams):
            phase = np.exp(
                -2j
                * np.pi
                * np.asarray(cfg.freqs_hz)[None, None, :]
                * (r_tx[:, None, None] + r_rx[:, :, None])
                / SPEED_OF_LIGHT
            )
            tensor[b] += (gains[:, b, None, None] * amp * phase).sum(axis=0)
    noise_std = noise_floor(cfg, codebook, grid)
    noise = rng.standard_normal(tensor.shape) + 1j * rng.standard_normal(tensor.shape)
    return tensor + noise_std * noise / np.sqrt(2)


def noise_floor(cfg, codebook, grid):
    """Absolute noise amplitude: SNR referenced to a canonical vehicle scene.

    The reference is the RMS entry of a noiseless vehicle echo at 7 m
    broadside (fixed internal seed), so "empty" scenes still contain a
    nonzero, config-stable noise level.
    """
    if cfg.snr_db == np.inf:
        return 0.0
    ref_rng = np.random.default_rng(0)
    positions, weights = place_scatterers(VEHICLE_TEMPLATE, 0.0, 7.0, ref_rng)
    quiet = SceneConfig(
        freqs_hz=cfg.freqs_hz,
        antenna_positions=cfg.antenna_positions,
        range_m=cfg.range_m,
        snr_db=np.inf,
        rx_ports=cfg.rx_ports,
        seed=0,
    )
    ref = synth_echo_scene(quiet, codebook, grid, [(positions, weights)], ref_rng)
    ref_rms = np.sqrt(np.mean(np.abs(ref) ** 2))
    return float(ref_rms * 10 ** (-cfg.snr_db / 20))


def synth_road_dataset(cfg, codebook, grid, region, samples_per_class, seed=None):
    """Labeled echo tensors for one region; deterministic under the seed.

    Targets are placed uniformly inside the region's angular interval and the
    configured range band. Returns (tensors (n, beams, ant, freqs), labels,
    class names).
    """
    if region not in ROAD_REGIONS:
        raise ValidationError(f"unknown region {region!r}")
    classes, _ = ROAD_REGIONS[region]
    lo, hi = REGION_INTERVALS[region]
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    tensors, labels = [], []
    for ci, cname in enumerate(classes):
        for _ in range(samples_per_class):
            objects = []
            if cname != "empty":
                template = PERSON_TEMPLATE if cname == "person" else VEHICLE_TEMPLATE
                angle = rng.uniform(lo, hi)
                rng_m = rng.uniform(*cfg.range_m)
                objects = [place_scatterers(template, angle, rng_m, rng)]
            tensors.append(synth_echo_scene(cfg, codebook, grid, objects, rng))
            labels.append(ci)
    return np.array(tensors), np.array(labels), list(classes)


def assemble_road_samples(tensors, labels, region, class_names=None):
    """Select a region's beam slice and validate its labels.

    Left and right regions keep 4 beams, center keeps 3 (the scan angles
    falling inside each interval on the 10-degree grid).
    """
    if region not in ROAD_REGIONS:
        raise ValidationError(f"unknown region {region!r}")
    classes, beam_slice = ROAD_REGIONS[region]
    if class_names is not None:
        for name in class_names:
            if name not in classes:
                raise ValidationError(f"label {name!r} is not valid for region {region!r}")
    tensors = as_complex_array(tensors, "tensors")
    labels = np.asarray(labels, dtype=int)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= len(classes):
        raise ValidationError(f"labels out of range for region {region!r}")
    return tensors[:, beam_slice], labels, list(classes)


def road_fields(tensors, rx_ports, port_count=32):
    """Map echo tensors (n, beams, ant, freqs) to network input fields.

    Beams play the time-slot role: output shape is (n, freqs, beams, N) with
    antenna values on ``rx_ports`` and zeros elsewhere.
    """
    t = as_complex_array(tensors, "tensors")
    n, n_beams, n_ant, n_freq = t.shape
    fields = np.zeros((n, n_freq, n_beams, port_count), dtype=complex)
    fields[..., list(rx_ports)] = np.transpose(t, (0, 3, 1, 2))
    return fields


def gesture_fields(samples):
    """Map gesture windows (n, 32, freqs, slots) to (n, freqs, slots, 32)."""
    x = as_complex_array(samples, "samples")
    if x.ndim != 4:
        raise ValidationError("samples: expected (n, ports, freqs, slots)")
    return np.transpose(x, (0, 2, 3, 1))


# ---------------------------------------------------------------------------
# Dataset files: npz with a versioned JSON header
# ---------------------------------------------------------------------------

DATASET_VERSION = 1


def save_dataset(path, x, y, **meta):
    """Versioned binary dataset file (npz: header + complex payload)."""
    header = {"format": "spnn-dataset", "version": DATASET_VERSION, **meta}
    np.savez(path, header=json.dumps(header, sort_keys=True), x=x, y=y)


def load_dataset(path):
    """Returns (x, y, meta) and validates the version header."""
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != "spnn-dataset" or header.get("version") != DATASET_VERSION:
            raise ValidationError(f"{path}: not a spnn-dataset v{DATASET_VERSION} file")
        x, y = z["x"], z["y"]
    meta = {k: v for k, v in header.items() if k not in ("format", "version")}
    return x, y, meta
