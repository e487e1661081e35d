"""Far-field array model and beam-codebook training for the transmit network.

The network output feeds a uniform linear antenna array; a steering matrix
maps aperture fields to far-field amplitudes on a 1-degree grid. Each
codebook entry is trained independently by plain SGD against a cross-entropy
objective on the normalized angular power distribution.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .netcore import forward_single
from .train import _backward_phases, _forward_cached, _require_trainable
from .validation import ValidationError, as_complex_array, check_positive

SPEED_OF_LIGHT = 299792458.0

#: Beam-steering design frequency.
BEAM_FREQ_HZ = 10.6e9

#: Standard scan set: 11 beams covering -50..+50 degrees at a 10 degree step.
SCAN_ANGLES_DEG = tuple(range(-50, 51, 10))

#: Angular regions and their intervals (degrees, inclusive).
REGION_INTERVALS = {"left": (-50, -20), "center": (-10, 10), "right": (20, 50)}


def region_of_angle(angle_deg):
    """Region tag for a scan angle; empty string when outside all regions."""
    for name, (lo, hi) in REGION_INTERVALS.items():
        if lo <= angle_deg <= hi:
            return name
    return ""


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array fed by the network's output ports.

    ``element_pattern`` is "isotropic" or "cosine"; the cosine pattern uses
    gain cos(theta)^pattern_power, a standard stand-in for a measured
    low-gain element.
    """

    element_count: int = 32
    wavelength_m: float = SPEED_OF_LIGHT / BEAM_FREQ_HZ
    spacing_m: float = SPEED_OF_LIGHT / BEAM_FREQ_HZ / 2
    element_pattern: str = "cosine"
    pattern_power: float = 1.0

    def __post_init__(self):
        check_positive(self.spacing_m, "spacing_m")
        check_positive(self.wavelength_m, "wavelength_m")
        if self.element_count <= 0:
            raise ValidationError("element_count must be positive")
        if self.element_pattern not in ("isotropic", "cosine"):
            raise ValidationError(
                f"element_pattern: expected 'isotropic' or 'cosine', got "
                f"{self.element_pattern!r}"
            )

    def element_gain(self, theta_rad):
        if self.element_pattern == "isotropic":
            return np.ones_like(np.asarray(theta_rad, dtype=float))
        return np.cos(theta_rad) ** self.pattern_power

    def steering_rows(self, angles_deg):
        """a(theta)[n] = gain(theta) * exp(j 2 pi d n sin(theta) / lambda)."""
        th = np.radians(np.asarray(angles_deg, dtype=float))
        n = np.arange(self.element_count)
        phase = 2 * np.pi * self.spacing_m * np.sin(th)[..., None] * n / self.wavelength_m
        return self.element_gain(th)[..., None] * np.exp(1j * phase)


@dataclass
class FarFieldGrid:
    """Angular evaluation grid with its precomputed steering matrix."""

    angles_deg: np.ndarray = field(default_factory=lambda: np.arange(-90.0, 91.0, 1.0))
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)

    def __post_init__(self):
        self.angles_deg = np.asarray(self.angles_deg, dtype=float)
        if self.angles_deg.ndim != 1 or len(self.angles_deg) < 2:
            raise ValidationError("angles_deg: expected a 1-d grid of >= 2 angles")
        steps = np.diff(self.angles_deg)
        if not np.allclose(steps, steps[0]):
            raise ValidationError("angles_deg: grid must be uniformly spaced")
        span = self.angles_deg[-1] - self.angles_deg[0]
        if not np.isclose(round(span / steps[0]) * steps[0], span):
            raise ValidationError("angles_deg: step must divide the span")
        self.steering = self.geometry.steering_rows(self.angles_deg)

    def index_of(self, angle_deg):
        hits = np.flatnonzero(np.isclose(self.angles_deg, angle_deg))
        if len(hits) != 1:
            raise ValidationError(f"angle {angle_deg} deg is not on the grid")
        return int(hits[0])


def far_field_pattern(grid, aperture_field):
    """Angular power P(theta) = |a(theta) . y|^2 and its 0-dB-peak copy.

    Returns ``(power, power_db)`` where power_db is normalized so the peak
    sits at 0 dB.
    """
    y = as_complex_array(aperture_field, "aperture_field", ndim=1)
    if len(y) != grid.geometry.element_count:
        raise ValidationError(
            f"aperture length {len(y)} != element count {grid.geometry.element_count}"
        )
    amp = grid.steering @ y
    power = np.abs(amp) ** 2
    peak = power.max()
    if peak == 0:
        raise ValidationError("all-zero far-field pattern")
    with np.errstate(divide="ignore"):
        power_db = 10 * np.log10(power / peak)
    return power, power_db


def beam_loss(grid, y_out, target_angle_deg, literal=False):
    """Cross-entropy of the normalized angular power against the target angle.

    loss = -log( P(target) / sum_theta P(theta) ); zero iff the pattern is a
    delta at the target on the grid. With ``literal=True`` returns the plain
    log of the target-direction power instead (not a descent objective by
    itself; kept for comparison).
    """
    ti = grid.index_of(target_angle_deg)
    y = as_complex_array(y_out, "y_out", ndim=1)
    amp = grid.steering @ y
    power = np.abs(amp) ** 2
    total = power.sum()
    if total == 0:
        raise ValidationError("all-zero far-field pattern")
    if literal:
        return float(np.log(power[ti]))
    return float(-np.log(power[ti] / total))


def beam_loss_grad(net, grid, excitation, target_angle_deg):
    """Loss, per-layer phase gradients, and the pattern for one target angle."""
    _require_trainable(net)
    ti = grid.index_of(target_angle_deg)
    x = as_complex_array(excitation, "excitation", ndim=1)
    y, pre = _forward_cached(net, x)
    amp = grid.steering @ y
    power = np.abs(amp) ** 2
    total = power.sum()
    if total == 0:
        raise ValidationError("all-zero far-field pattern")
    loss = float(-np.log(power[ti] / total))
    d_power = np.full_like(power, 1.0 / total)
    d_power[ti] -= 1.0 / power[ti]
    ybar = 2.0 * (d_power * amp) @ np.conj(grid.steering)
    d_phases = _backward_phases(net, ybar, pre, batch_axes=())
    return loss, d_phases, power


def beam_excitation(port_count=32, feed_ports=(12, 14, 16, 18)):
    """Power-divider feed: unit amplitude on the four fed ports, zero elsewhere."""
    x = np.zeros(port_count, dtype=complex)
    x[list(feed_ports)] = 1.0
    return x


@dataclass
class PhaseCodebook:
    """Per-angle phase settings for the transmit network.

    ``phases`` has shape (beams, phase_layers, ports); ``aperture_fields``
    caches the network output per beam so downstream consumers (echo
    synthesis) need only the codebook and the array geometry.
    """

    angles_deg: np.ndarray
    phases: np.ndarray
    aperture_fields: np.ndarray
    regions: tuple
    loss_curves: list
    converged: np.ndarray
    pointing_errors_deg: np.ndarray

    def __len__(self):
        return len(self.angles_deg)

    def entry(self, angle_deg):
        hits = np.flatnonzero(np.isclose(self.angles_deg, angle_deg))
        if len(hits) != 1:
            raise ValidationError(f"no codebook entry at {angle_deg} deg")
        return self.phases[int(hits[0])]


def train_beam_codebook(
    net,
    grid,
    excitation,
    angles_deg=SCAN_ANGLES_DEG,
    learning_rate=0.05,
    max_iters=2000,
    seed=0,
    pointing_tol_deg=2.0,
):
    """One independent SGD run per target angle; returns a :class:`PhaseCodebook`.

    Each angle re-initializes the phases uniformly in [0, 2pi) from a seed
    derived as (seed, angle index), so results do not depend on scheduling
    order. Entries whose final main-lobe peak lands more than
    ``pointing_tol_deg`` from the target are flagged (with a warning) but kept
    best-effort.
    """
    _require_trainable(net)
    x = as_complex_array(excitation, "excitation", ndim=1)
    angles_deg = np.asarray(angles_deg, dtype=float)
    n_layers = len(net.phase_layers)
    all_phases = np.zeros((len(angles_deg), n_layers, net.port_count))
    fields = np.zeros((len(angles_deg), net.port_count), dtype=complex)
    curves = []
    converged = np.ones(len(angles_deg), dtype=bool)
    perr = np.zeros(len(angles_deg))
    for bi, angle in enumerate(angles_deg):
        rng = np.random.default_rng([seed, bi])
        net.phases = rng.uniform(0, 2 * np.pi, net.phase_count)
        losses = np.zeros(max_iters)
        for it in range(max_iters):
            loss, d_phases, _ = beam_loss_grad(net, grid, x, angle)
            losses[it] = loss
            net.phases = net.phases - learning_rate * d_phases.ravel()
        y = forward_single(net, x)
        power, _ = far_field_pattern(grid, y)
        peak = grid.angles_deg[int(np.argmax(power))]
        perr[bi] = peak - angle
        if abs(perr[bi]) > pointing_tol_deg:
            converged[bi] = False
            warnings.warn(
                f"beam at {angle} deg did not converge: peak at {peak} deg after "
                f"{max_iters} iterations (best-effort entry kept)",
                stacklevel=2,
            )
        all_phases[bi] = net.phases.reshape(n_layers, -1)
        fields[bi] = y
        curves.append(losses)
    return PhaseCodebook(
        angles_deg=angles_deg,
        phases=all_phases,
        aperture_fields=fields,
        regions=tuple(region_of_angle(a) for a in angles_deg),
        loss_curves=curves,
        converged=converged,
        pointing_errors_deg=perr,
    )


def pattern_correlation_matrix(patterns):
    """Normalized inner products of the beams' amplitude patterns.

    ``patterns`` is (beams, n_angles) of angular powers. Entries land in
    [0, 1]; the diagonal is pinned to exactly 1 and the matrix symmetrized to
    absorb floating-point round-off.
    """
    p = np.asarray(patterns, dtype=float)
    if p.ndim != 2:
        raise ValidationError("patterns: expected (beams, n_angles)")
    amp = np.sqrt(np.maximum(p, 0.0))
    norms = np.linalg.norm(amp, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValidationError("zero-norm pattern in correlation input")
    unit = amp / norms
    c = unit @ unit.T
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    return np.clip(c, 0.0, 1.0)


def smoothed(values, window=10):
    """Moving average used for the loss-curve monotonicity checks."""
    values = np.asarray(values, dtype=float)
    if window <= 1 or len(values) < window:
        return values.copy()
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


def write_pattern_csv(path, angles_deg, power_db):
    """Per-beam pattern dump: CSV of (angle_deg, power_db)."""
    with open(path, "w") as f:
        f.write("angle_deg,power_db\n")
        for a, p in zip(angles_deg, power_db):
            f.write(f"{float(a)!r},{float(p)!r}\n")


BEAMSET_VERSION = 1


def save_codebook_npz(path, codebook):
    """Binary codebook bundle (phases plus cached fields and diagnostics)."""
    np.savez(
        path,
        format="spnn-beamset",
        version=BEAMSET_VERSION,
        angles_deg=codebook.angles_deg,
        phases=codebook.phases,
        aperture_fields=codebook.aperture_fields,
        converged=codebook.converged,
        pointing_errors_deg=codebook.pointing_errors_deg,
        loss_curves=np.asarray(codebook.loss_curves),
    )


def load_codebook_npz(path):
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != "spnn-beamset" or int(z["version"]) != BEAMSET_VERSION:
            raise ValidationError(f"{path}: not a spnn-beamset v{BEAMSET_VERSION} file")
        angles = z["angles_deg"]
        return PhaseCodebook(
            angles_deg=angles,
            phases=z["phases"],
            aperture_fields=z["aperture_fields"],
            regions=tuple(region_of_angle(a) for a in angles),
            loss_curves=list(z["loss_curves"]),
            converged=z["converged"],
            pointing_errors_deg=z["pointing_errors_deg"],
        )
