"""Core signal model: diffraction/phase layers, forward propagation, detection.

A network is an alternating stack of fixed N x N complex diffraction layers
and trainable diagonal phase layers. Propagation is linear at every
frequency (the hardware is treated as non-dispersive, so one matrix set
serves all frequencies); nonlinearity enters only at the detectors, which
convert fields to intensities and sum non-coherently over frequency.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .validation import (
    ValidationError,
    as_complex_array,
    check_port_indices,
    check_square_matrix,
)

UNITARY_TOL = 1e-10
MEASURED_NORM_TOL = 1.05


@dataclass
class DiffractionLayer:
    """Fixed complex transmission matrix providing inter-channel mixing.

    ``source`` is "synthesized" for ideal lossless coupler meshes (checked
    unitary to 1e-10) or "measured" for calibration data (checked passive:
    spectral norm <= 1.05).
    """

    matrix: np.ndarray
    source: str = "synthesized"
    freq_hz: float | None = None

    def __post_init__(self):
        self.matrix = check_square_matrix(self.matrix, "diffraction matrix")
        if self.source == "synthesized":
            n = self.matrix.shape[0]
            err = np.abs(self.matrix.conj().T @ self.matrix - np.eye(n)).max()
            if err > UNITARY_TOL:
                raise ValidationError(
                    f"synthesized diffraction matrix must be unitary: deviation {err:.2e}"
                )
        elif self.source == "measured":
            norm = np.linalg.norm(self.matrix, ord=2)
            if norm > MEASURED_NORM_TOL:
                raise ValidationError(
                    f"measured diffraction matrix has gain: spectral norm "
                    f"{norm:.4f} > {MEASURED_NORM_TOL} (passive device expected)"
                )
        else:
            raise ValidationError(f"unknown diffraction source {self.source!r}")

    @property
    def port_count(self):
        return self.matrix.shape[0]


@dataclass
class PhaseLayer:
    """Diagonal layer of per-channel programmable phase shifts (radians).

    Phases are stored unconstrained and wrapped to [0, 2pi) when applied;
    ``phase_max`` is the hardware ceiling enforced only at export time.
    If ``amplitude_table`` is set (a ``(phases, amplitudes)`` pair), the
    applied diagonal is ``a(phi) * exp(j phi)`` with linear interpolation,
    modelling measured ripple; the default is unit amplitude.
    """

    phases: np.ndarray
    phase_max: float = np.radians(330.0)
    amplitude_table: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        self.phases = np.array(self.phases, dtype=float)
        if self.phases.ndim != 1:
            raise ValidationError("phases: expected a 1-d vector")
        if not np.all(np.isfinite(self.phases)):
            raise ValidationError("phases: contains non-finite entries")

    @property
    def port_count(self):
        return len(self.phases)

    def diagonal(self):
        """The applied diagonal operator entries."""
        wrapped = np.mod(self.phases, 2 * np.pi)
        diag = np.exp(1j * wrapped)
        if self.amplitude_table is not None:
            xs, ys = self.amplitude_table
            diag = diag * np.interp(wrapped, xs, ys)
        return diag


@dataclass
class LinearHead:
    """Digital linear classifier consuming a detection vector: scores = W d + b."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=float)
        self.bias = np.array(self.bias, dtype=float)
        if self.weight.ndim != 2 or self.bias.ndim != 1:
            raise ValidationError("head: weight must be 2-d, bias 1-d")
        if self.weight.shape[0] != self.bias.shape[0]:
            raise ValidationError(
                f"head: weight rows {self.weight.shape[0]} != bias length {len(self.bias)}"
            )

    @property
    def n_classes(self):
        return self.weight.shape[0]

    @property
    def n_features(self):
        return self.weight.shape[1]


@dataclass
class Network:
    """Alternating diffraction/phase stack with a detector port set.

    The layer list must start with a DiffractionLayer and alternate strictly;
    every layer must match ``port_count``. Trainable parameters are the
    concatenated phase vectors, exposed through :attr:`phases`.
    """

    port_count: int
    layers: list
    detector_ports: tuple = ()
    input_ports: tuple | None = None

    def __post_init__(self):
        if self.port_count <= 0:
            raise ValidationError("port_count must be positive")
        if not self.layers:
            raise ValidationError("network needs at least one layer")
        for i, layer in enumerate(self.layers):
            want = DiffractionLayer if i % 2 == 0 else PhaseLayer
            if not isinstance(layer, want):
                raise ValidationError(
                    f"layer {i}: expected {want.__name__} (layers must start with a "
                    "diffraction layer and alternate strictly)"
                )
            if layer.port_count != self.port_count:
                raise ValidationError(
                    f"layer {i}: has {layer.port_count} ports, network has {self.port_count}"
                )
        if self.detector_ports:
            self.detector_ports = check_port_indices(
                self.detector_ports, self.port_count, "detector_ports"
            )
        if self.input_ports is not None:
            self.input_ports = check_port_indices(
                self.input_ports, self.port_count, "input_ports"
            )

    @property
    def phase_layers(self):
        return [l for l in self.layers if isinstance(l, PhaseLayer)]

    @property
    def diffraction_layers(self):
        return [l for l in self.layers if isinstance(l, DiffractionLayer)]

    @property
    def phase_count(self):
        return sum(l.port_count for l in self.phase_layers)

    @property
    def phases(self):
        """Concatenated trainable phase vector (copy)."""
        if not self.phase_layers:
            return np.zeros(0)
        return np.concatenate([l.phases for l in self.phase_layers])

    @phases.setter
    def phases(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (self.phase_count,):
            raise ValidationError(
                f"phases: expected {self.phase_count} values, got {values.shape}"
            )
        at = 0
        for l in self.phase_layers:
            l.phases = values[at : at + l.port_count].copy()
            at += l.port_count

    def transfer_matrix(self):
        """Explicit end-to-end matrix product of all layers."""
        m = np.eye(self.port_count, dtype=complex)
        for layer in self.layers:
            if isinstance(layer, DiffractionLayer):
                m = layer.matrix @ m
            else:
                m = layer.diagonal()[:, None] * m
        return m


def forward_single(net, field):
    """Propagate one complex field (length N) through the network."""
    x = as_complex_array(field, "field", ndim=1)
    if len(x) != net.port_count:
        raise ValidationError(
            f"field length {len(x)} does not match network port count {net.port_count}"
        )
    return forward_batch(net, x[None, :])[0]


def forward_batch(net, fields):
    """Propagate fields of shape (..., N); returns the same shape."""
    x = as_complex_array(fields, "fields")
    if x.shape[-1] != net.port_count:
        raise ValidationError(
            f"fields last axis {x.shape[-1]} does not match port count {net.port_count}"
        )
    for layer in net.layers:
        if isinstance(layer, DiffractionLayer):
            x = x @ layer.matrix.T
        else:
            x = x * layer.diagonal()
    return x


def detect(net, fields):
    """Non-coherent detection: intensities at detector ports, summed over frequency.

    ``fields`` has shape (n_freqs, n_slots, N) or (batch, n_freqs, n_slots, N).
    Output entry for (slot j, detector index p) sits at position
    ``j * len(detector_ports) + p``: detector ports enumerated within each
    slot, slots concatenated.
    """
    x = as_complex_array(fields, "fields")
    if x.ndim not in (3, 4):
        raise ValidationError("fields: expected shape (freqs, slots, N) or (batch, ...)")
    if x.shape[-3] == 0:
        raise ValidationError("fields: empty frequency set")
    if not net.detector_ports:
        raise ValidationError("network has no detector ports")
    y = forward_batch(net, x)
    ports = list(net.detector_ports)
    inten = (np.abs(y[..., ports]) ** 2).sum(axis=-3)  # sum over frequency axis
    return inten.reshape(*inten.shape[:-2], -1)  # flatten (slots, ports) slot-major


def classify(head, d):
    """Apply the linear head; returns (scores, argmax with ties to lowest index)."""
    d = np.asarray(d, dtype=float)
    if d.shape[-1] != head.n_features:
        raise ValidationError(
            f"detection vector length {d.shape[-1]} != head feature count {head.n_features}"
        )
    scores = d @ head.weight.T + head.bias
    return scores, int(np.argmax(scores, axis=-1)) if scores.ndim == 1 else scores.argmax(axis=-1)


def class_ports(port_count, n_classes):
    """Evenly distributed class ports: floor((k + 0.5) * N / K) for k = 0..K-1."""
    ports = tuple(int((k + 0.5) * port_count // n_classes) for k in range(n_classes))
    if len(set(ports)) != n_classes:
        raise ValidationError(
            f"cannot place {n_classes} distinct class ports on {port_count} ports"
        )
    return ports


def classify_by_port_energy(net, d, ports):
    """Image-task readout: the class whose assigned port has maximal intensity.

    ``d`` is the detection vector over ``net.detector_ports``; ``ports`` names
    one port per class and must be a subset of the detector ports. Ties break
    toward the lowest class index.
    """
    if len(ports) == 0:
        raise ValidationError("ports: empty class-port list")
    positions = []
    for p in ports:
        if p not in net.detector_ports:
            raise ValidationError(f"class port {p} is not a detector port")
        positions.append(net.detector_ports.index(p))
    d = np.asarray(d, dtype=float)
    return int(np.argmax(d[..., positions], axis=-1)) if d.ndim == 1 else np.asarray(
        d[..., positions]
    ).argmax(axis=-1)


def cascade_boards(a, b):
    """Concatenate two boards; detector ports come from the downstream board."""
    if a.port_count != b.port_count:
        raise ValidationError(
            f"cannot cascade boards with {a.port_count} and {b.port_count} ports"
        )
    return Network(
        port_count=a.port_count,
        layers=list(a.layers) + list(b.layers),
        detector_ports=b.detector_ports,
        input_ports=a.input_ports,
    )


# ---------------------------------------------------------------------------
# Serialization: versioned structured-text network files.
#
#   spnn-net v1 ports=<N>
#   detectors <p0> <p1> ...          (omitted when empty)
#   inputs <p0> <p1> ...             (omitted when unset)
#   layer diffraction <source>
#   <row> <col> <re> <im>            (N*N lines)
#   layer phase
#   <index> <radians>                (N lines)
#   end
# ---------------------------------------------------------------------------

NET_MAGIC = "spnn-net v1"


def save_network(net, path):
    lines = [f"{NET_MAGIC} ports={net.port_count}"]
    if net.detector_ports:
        lines.append("detectors " + " ".join(str(p) for p in net.detector_ports))
    if net.input_ports is not None:
        lines.append("inputs " + " ".join(str(p) for p in net.input_ports))
    for layer in net.layers:
        if isinstance(layer, DiffractionLayer):
            lines.append(f"layer diffraction {layer.source}")
            m = layer.matrix
            for r in range(net.port_count):
                for c in range(net.port_count):
                    lines.append(f"{r} {c} {float(m[r, c].real)!r} {float(m[r, c].imag)!r}")
        else:
            lines.append("layer phase")
            for i, v in enumerate(layer.phases):
                lines.append(f"{i} {float(v)!r}")
    lines.append("end")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_network(path):
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or not lines[0].startswith(NET_MAGIC):
        raise ValidationError(f"{path}: not a {NET_MAGIC} file")
    ports = int(lines[0].split("ports=")[1])
    detectors, inputs = (), None
    layers = []
    i = 1
    while i < len(lines):
        ln = lines[i]
        if ln.startswith("detectors "):
            detectors = tuple(int(t) for t in ln.split()[1:])
            i += 1
        elif ln.startswith("inputs "):
            inputs = tuple(int(t) for t in ln.split()[1:])
            i += 1
        elif ln.startswith("layer diffraction"):
            source = ln.split()[2]
            m = np.zeros((ports, ports), dtype=complex)
            for k in range(ports * ports):
                toks = lines[i + 1 + k].split()
                r, c = int(toks[0]), int(toks[1])
                m[r, c] = float(toks[2]) + 1j * float(toks[3])
            layers.append(DiffractionLayer(matrix=m, source=source))
            i += 1 + ports * ports
        elif ln.startswith("layer phase"):
            ph = np.zeros(ports)
            for k in range(ports):
                toks = lines[i + 1 + k].split()
                ph[int(toks[0])] = float(toks[1])
            layers.append(PhaseLayer(phases=ph))
            i += 1 + ports
        elif ln == "end":
            break
        else:
            raise ValidationError(f"{path}: unexpected line {i + 1}: {ln!r}")
    return Network(
        port_count=ports, layers=layers, detector_ports=detectors, input_ports=inputs
    )
