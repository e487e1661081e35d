"""Physical device models grounding the abstract layers.

Covers the varactor-loaded reflection-type phase shifter (its reflection
coefficient, achievable phase span, and the inverse phase -> capacitance
mapping used at export time), synthesized coupler-mesh diffraction matrices,
and measured-calibration file ingestion.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .netcore import DiffractionLayer
from .validation import (
    NumericalError,
    PhaseRangeError,
    ValidationError,
    check_in_range,
    check_positive,
)

THETA_POLE_TOL = 1e-9


@dataclass(frozen=True)
class PhaseShifterParams:
    """Reflection-type phase shifter parameters.

    A varactor-terminated transmission-line stub (characteristic impedance
    ``z1_ohm``, electrical length ``theta_rad`` at the design frequency) hangs
    off a coupler port of impedance ``zt_ohm``; sweeping the varactor
    capacitance over [cv_min_pf, cv_max_pf] sweeps the reflection phase.
    """

    z1_ohm: float = 120.0
    theta_rad: float = 0.83
    zt_ohm: float = 5.0
    cv_min_pf: float = 0.05
    cv_max_pf: float = 0.25
    design_freq_hz: float = 10.8e9

    def __post_init__(self):
        check_positive(self.z1_ohm, "z1_ohm")
        check_positive(self.zt_ohm, "zt_ohm")
        check_positive(self.design_freq_hz, "design_freq_hz")
        if not (0 < self.theta_rad < np.pi / 2):
            raise ValidationError(
                f"theta_rad: must lie in (0, pi/2), got {self.theta_rad!r}"
            )
        if not (0 < self.cv_min_pf < self.cv_max_pf):
            raise ValidationError(
                "capacitance range: need 0 < cv_min_pf < cv_max_pf, got "
                f"[{self.cv_min_pf!r}, {self.cv_max_pf!r}]"
            )


#: Frozen default fit: maximizes the phase span at 10.8 GHz over the
#: configured capacitance range. Yields a 335.0 degree unwrapped span.
DEFAULT_SHIFTER = PhaseShifterParams()

#: Alternate capacitance range quoted for the same varactor.
WIDE_CV_SHIFTER = PhaseShifterParams(cv_min_pf=0.025)


def _tan_ratio(p, cv_pf, freq_hz):
    """t = A/B of the reflection formula; strictly increasing in cv."""
    if abs(p.theta_rad - np.pi / 2) < THETA_POLE_TOL:
        raise NumericalError("theta_rad at the tan(theta) pole (pi/2)")
    w = 2 * np.pi * freq_hz
    cv = np.asarray(cv_pf, dtype=float) * 1e-12
    t = np.tan(p.theta_rad)
    a = -p.z1_ohm + p.z1_ohm**2 * cv * w * t
    b = p.zt_ohm * (p.z1_ohm * cv * w + t)
    return a / b


def reflection_coefficient(p, cv_pf, freq_hz):
    """Complex reflection coefficient Gamma = (jA - B) / (jA + B).

    A = -Z1 + Z1^2 Cv w tan(theta), B = Z_T (Z1 Cv w + tan(theta)); the
    numerator and denominator are complex conjugates, so |Gamma| = 1 exactly
    for the lossless model.
    """
    check_positive(freq_hz, "freq_hz")
    cv = np.asarray(cv_pf, dtype=float)
    check_in_range(float(np.min(cv)), p.cv_min_pf, p.cv_max_pf, "cv_pf")
    check_in_range(float(np.max(cv)), p.cv_min_pf, p.cv_max_pf, "cv_pf")
    t = _tan_ratio(p, cv_pf, freq_hz)
    return (1j * t - 1) / (1j * t + 1)


def reflection_phase(p, cv_pf, freq_hz):
    """Unwrapped reflection phase in radians: pi - 2 atan(A/B).

    Continuous and strictly decreasing in cv (B > 0 for physical parameters),
    always inside (0, 2 pi); equals arg(Gamma) modulo 2 pi.
    """
    check_positive(freq_hz, "freq_hz")
    return np.pi - 2 * np.arctan(_tan_ratio(p, cv_pf, freq_hz))


def max_phase_range(p, freq_hz):
    """Achievable unwrapped phase span over the capacitance range, radians.

    Closed form: 2 [atan(t(cv_max)) - atan(t(cv_min))] with t = A/B; agrees
    with the endpoint difference of :func:`reflection_phase`.
    """
    hi = _tan_ratio(p, p.cv_max_pf, freq_hz)
    lo = _tan_ratio(p, p.cv_min_pf, freq_hz)
    return float(2 * (np.arctan(hi) - np.arctan(lo)))


def phase_to_capacitance(p, target_phase_rad, freq_hz, tol_rad=1e-6):
    """Invert the phase curve by bisection; returns capacitance in pF.

    Raises :class:`PhaseRangeError` naming the deficit in degrees when
    the target lies outside the achievable window.
    """
    phi_lo = reflection_phase(p, p.cv_max_pf, freq_hz)  # phase decreases with cv
    phi_hi = reflection_phase(p, p.cv_min_pf, freq_hz)
    if target_phase_rad < phi_lo or target_phase_rad > phi_hi:
        deficit = max(phi_lo - target_phase_rad, target_phase_rad - phi_hi)
        raise PhaseRangeError(
            f"target phase {np.degrees(target_phase_rad):.3f} deg outside the "
            f"achievable window [{np.degrees(phi_lo):.3f}, {np.degrees(phi_hi):.3f}] deg "
            f"(deficit {np.degrees(deficit):.3f} deg)"
        )
    lo, hi = p.cv_min_pf, p.cv_max_pf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        phi = reflection_phase(p, mid, freq_hz)
        if abs(phi - target_phase_rad) < tol_rad:
            return float(mid)
        if phi > target_phase_rad:
            lo = mid
        else:
            hi = mid
    raise NumericalError(
        f"phase_to_capacitance: bisection failed to reach {tol_rad} rad"
    )


# ---------------------------------------------------------------------------
# Synthesized coupler meshes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CouplerMeshSpec:
    """Cross-cascaded 2x2 coupler mesh layout.

    ``coupling`` is the power coupling factor (0.5 = 3 dB). Columns alternate
    between pairing ports (2m, 2m+1) and (2m+1, 2m+2); boundary ports in odd
    columns pass through.
    """

    port_count: int = 32
    column_count: int = 16
    coupling: float = 0.5

    def __post_init__(self):
        if self.port_count <= 0 or self.port_count % 2:
            raise ValidationError(
                f"port_count: must be positive and even, got {self.port_count}"
            )
        if self.column_count < 1:
            raise ValidationError("column_count: must be >= 1")
        if not (0 < self.coupling < 1):
            raise ValidationError(f"coupling: must lie in (0, 1), got {self.coupling}")


def synth_coupler_mesh(spec):
    """Build one diffraction layer as a product of coupler-column unitaries."""
    n = spec.port_count
    t = np.sqrt(1.0 - spec.coupling)
    k = np.sqrt(spec.coupling)
    block = np.array([[t, 1j * k], [1j * k, t]])
    m = np.eye(n, dtype=complex)
    for col in range(spec.column_count):
        op = np.eye(n, dtype=complex)
        for p in range(col % 2, n - 1, 2):
            op[p : p + 2, p : p + 2] = block
        m = op @ m
    return DiffractionLayer(matrix=m, source="synthesized")


def build_board(
    port_count=32,
    stages=3,
    columns=16,
    coupling=0.5,
    detector_ports=(),
    input_ports=None,
    phases=None,
):
    """One physical board: ``stages`` repetitions of (diffraction, phase).

    ``phases`` may be an (stages, port_count) array; defaults to zeros.
    """
    from .netcore import Network, PhaseLayer

    mesh = synth_coupler_mesh(
        CouplerMeshSpec(port_count=port_count, column_count=columns, coupling=coupling)
    )
    if phases is None:
        phases = np.zeros((stages, port_count))
    phases = np.asarray(phases, dtype=float)
    layers = []
    for s in range(stages):
        layers.append(DiffractionLayer(matrix=mesh.matrix.copy(), source="synthesized"))
        layers.append(PhaseLayer(phases=phases[s].copy()))
    return Network(
        port_count=port_count,
        layers=layers,
        detector_ports=detector_ports,
        input_ports=input_ports,
    )


def board_from_matrix(
    matrix,
    stages=3,
    detector_ports=(),
    input_ports=None,
    source="measured",
    freq_hz=None,
):
    """Board whose diffraction layers all use one supplied matrix.

    The usual route for calibration data: load a measured coupler-mesh
    matrix and substitute it for the synthesized mesh in every stage.
    """
    from .netcore import Network, PhaseLayer

    m = np.asarray(matrix, dtype=complex)
    layers = []
    for _ in range(stages):
        layers.append(DiffractionLayer(matrix=m.copy(), source=source, freq_hz=freq_hz))
        layers.append(PhaseLayer(phases=np.zeros(m.shape[0])))
    return Network(
        port_count=m.shape[0],
        layers=layers,
        detector_ports=detector_ports,
        input_ports=input_ports,
    )


def build_stack(
    boards=3,
    port_count=32,
    stages=3,
    columns=16,
    coupling=0.5,
    detector_ports=(),
    input_ports=None,
):
    """Cascade of identical boards (zero-initialized phases)."""
    from .netcore import cascade_boards

    net = build_board(port_count, stages, columns, coupling, detector_ports, input_ports)
    for _ in range(boards - 1):
        net = cascade_boards(
            net, build_board(port_count, stages, columns, coupling, detector_ports)
        )
    return net


# ---------------------------------------------------------------------------
# Calibration matrix files:
#   spnn-cal v1 ports=<N> freq_hz=<f>
#   <row> <col> <re> <im>     (N*N lines, 0-based)
# ---------------------------------------------------------------------------

CAL_MAGIC = "spnn-cal v1"


def save_calibration_matrix(path, matrix, freq_hz):
    m = np.asarray(matrix, dtype=complex)
    n = m.shape[0]
    with open(path, "w") as f:
        f.write(f"{CAL_MAGIC} ports={n} freq_hz={float(freq_hz)!r}\n")
        for r in range(n):
            for c in range(n):
                f.write(f"{r} {c} {float(m[r, c].real)!r} {float(m[r, c].imag)!r}\n")


def load_calibration_matrix(path, freq_hz=None):
    """Load a measured diffraction matrix, validating passivity.

    If ``freq_hz`` is given it must match the file's provenance frequency.
    """
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith(CAL_MAGIC):
            raise ValidationError(f"{path}: not a {CAL_MAGIC} file")
        try:
            fields = dict(tok.split("=") for tok in header.split()[2:])
            n = int(fields["ports"])
            file_freq = float(fields["freq_hz"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed header {header!r}") from exc
        m = np.full((n, n), np.nan + 0j)
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            toks = line.split()
            try:
                r, c = int(toks[0]), int(toks[1])
                m[r, c] = float(toks[2]) + 1j * float(toks[3])
            except (IndexError, ValueError) as exc:
                raise ValidationError(
                    f"{path}:{lineno}: malformed entry {line.strip()!r}"
                ) from exc
    bad = np.argwhere(np.isnan(m.real))
    if len(bad):
        r, c = bad[0]
        raise ValidationError(f"{path}: missing entry for row {r} col {c}")
    if freq_hz is not None and not np.isclose(file_freq, freq_hz, rtol=1e-9):
        raise ValidationError(
            f"{path}: calibration frequency {file_freq} does not match requested {freq_hz}"
        )
    return DiffractionLayer(matrix=m, source="measured", freq_hz=file_freq)


# ---------------------------------------------------------------------------
# Codebook export:
#   spnn-codebook v1 beams=<B> phases=<P> freq_hz=<f>
#   angles <a0> <a1> ...
#   <beam> <port> <phase_rad> <cv_pf> [<bias_v>]
#
# "port" is the flattened neuron index layer * port_count + port. Phases
# outside the device window are exported with the capacitance clamped to the
# nearest endpoint (with a warning); the phase_rad column always records the
# requested phase so reloading round-trips exactly.
# ---------------------------------------------------------------------------

CODEBOOK_MAGIC = "spnn-codebook v1"


def export_codebook(path, angles_deg, phase_sets, shifter, freq_hz, cv_to_volts=None):
    """Write trained beam phases with their capacitance (and bias) settings.

    ``phase_sets`` has shape (beams, n_phases); phases are wrapped into the
    device's absolute window before inversion. ``cv_to_volts`` is an optional
    (cv_pf, volts) table mapped by monotone piecewise-linear interpolation.
    """
    phase_sets = np.asarray(phase_sets, dtype=float)
    n_beams, n_phases = phase_sets.shape
    phi_lo = reflection_phase(shifter, shifter.cv_max_pf, freq_hz)
    phi_hi = reflection_phase(shifter, shifter.cv_min_pf, freq_hz)
    clamped = 0
    with open(path, "w") as f:
        f.write(
            f"{CODEBOOK_MAGIC} beams={n_beams} phases={n_phases} freq_hz={float(freq_hz)!r}\n"
        )
        f.write("angles " + " ".join(repr(float(a)) for a in angles_deg) + "\n")
        for b in range(n_beams):
            for i in range(n_phases):
                requested = float(phase_sets[b, i])
                # shift by whole turns into the absolute device window
                turns = np.floor((requested - phi_lo) / (2 * np.pi))
                target = requested - 2 * np.pi * turns
                if target > phi_hi:
                    cv = (
                        shifter.cv_min_pf
                        if abs(target - phi_hi) < abs(target - 2 * np.pi - phi_lo)
                        else shifter.cv_max_pf
                    )
                    clamped += 1
                else:
                    cv = phase_to_capacitance(shifter, target, freq_hz)
                line = f"{b} {i} {requested!r} {float(cv)!r}"
                if cv_to_volts is not None:
                    cvs, volts = map(np.asarray, cv_to_volts)
                    order = np.argsort(cvs)
                    line += f" {float(np.interp(cv, cvs[order], volts[order]))!r}"
                f.write(line + "\n")
    if clamped:
        warnings.warn(
            f"{clamped} of {n_beams * n_phases} phases fall in the device dead zone "
            f"({np.degrees(phi_hi - phi_lo):.1f} deg span); capacitance clamped to the "
            "nearest endpoint",
            stacklevel=2,
        )


def load_codebook(path):
    """Read back an exported codebook: (angles_deg, phases, cv, volts_or_none)."""
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith(CODEBOOK_MAGIC):
            raise ValidationError(f"{path}: not a {CODEBOOK_MAGIC} file")
        fields = dict(tok.split("=") for tok in header.split()[2:])
        n_beams, n_phases = int(fields["beams"]), int(fields["phases"])
        angles_line = f.readline().split()
        if angles_line[0] != "angles":
            raise ValidationError(f"{path}: missing angles line")
        angles = np.array([float(a) for a in angles_line[1:]])
        phases = np.zeros((n_beams, n_phases))
        cv = np.zeros((n_beams, n_phases))
        volts = None
        for lineno, line in enumerate(f, start=3):
            if not line.strip():
                continue
            toks = line.split()
            try:
                b, i = int(toks[0]), int(toks[1])
                phases[b, i] = float(toks[2])
                cv[b, i] = float(toks[3])
                if len(toks) > 4:
                    if volts is None:
                        volts = np.zeros((n_beams, n_phases))
                    volts[b, i] = float(toks[4])
            except (IndexError, ValueError) as exc:
                raise ValidationError(
                    f"{path}:{lineno}: malformed entry {line.strip()!r}"
                ) from exc
    return angles, phases, cv, volts
