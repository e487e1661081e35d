"""Throughput, timing, scale expansion, and ablation studies.

The timing and energy calculators are plain budget arithmetic; the ops-count
convention (8 real ops per complex multiply-accumulate, 6 per complex scale)
is stated on :func:`operations_per_pass` since headline TOPS figures are
meaningless without one. ``expand_network`` composes boards into larger
networks; ``ablation_suite`` reruns the road-scene pipeline with parts of the
chain removed.
"""

import copy
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .data import assemble_road_samples, road_fields, synth_road_dataset
from .device import build_board
from .netcore import DiffractionLayer, LinearHead, Network, PhaseLayer, cascade_boards, detect
from .train import TrainConfig, fine_train, pretrain
from .validation import NumericalError, ValidationError

# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------

#: Residual per-cycle backend time (µs) that closes the measured 103.24 µs
#: cycle over 11 beams given the other defaults.
DEFAULT_BACKEND_US = 103.24 - 11 * (8.95 + 0.4 + 0.025)


@dataclass(frozen=True)
class TimingBudget:
    """Per-beam latency contributions of one scan-classify cycle, µs/ns."""

    flight_plus_detector_ns: float = 25.0
    adc_readout_us: float = 0.4
    dac_switch_us: float = 8.95
    beams_per_cycle: int = 11
    backend_us: float = DEFAULT_BACKEND_US

    def __post_init__(self):
        for name in (
            "flight_plus_detector_ns",
            "adc_readout_us",
            "dac_switch_us",
            "backend_us",
        ):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.beams_per_cycle < 1:
            raise ValidationError("beams_per_cycle must be >= 1")


class TimingReport(NamedTuple):
    per_beam_us: float
    cycle_us: float
    refresh_khz: float


def cycle_time(budget=TimingBudget()):
    """Per-beam latency, full-cycle time, and the implied refresh rate.

    per_beam = dac switch + adc readout + flight/detector; the cycle covers
    ``beams_per_cycle`` beams plus one backend pass; refresh_khz = 1000/cycle.
    """
    per_beam = (
        budget.dac_switch_us
        + budget.adc_readout_us
        + budget.flight_plus_detector_ns / 1000.0
    )
    cycle = budget.beams_per_cycle * per_beam + budget.backend_us
    return TimingReport(per_beam, cycle, 1000.0 / cycle)


# ---------------------------------------------------------------------------
# Energy / throughput
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyBudget:
    """Channel power draw plus an optional externally measured peak-ops figure."""

    channel_count: int
    power_per_channel_mw: float = 6.0
    peak_ops_tera: float | None = None

    def __post_init__(self):
        if self.channel_count <= 0:
            raise ValidationError("channel_count must be positive")
        if self.power_per_channel_mw <= 0:
            raise ValidationError("power_per_channel_mw must be positive")
        if self.peak_ops_tera is not None and self.peak_ops_tera <= 0:
            raise ValidationError("peak_ops_tera must be positive when given")


def network_dims(net):
    """(port count, diffraction-layer count, phase-layer count)."""
    return (net.port_count, len(net.diffraction_layers), len(net.phase_layers))


def operations_per_pass(port_count, diffraction_layers, phase_layers):
    """Real operations in one forward pass.

    Convention: a complex multiply-accumulate costs 8 real ops (4 mul + 4
    add), a complex scale 6 (4 mul + 2 add), giving
    8*N^2 per dense layer and 6*N per phase layer.
    """
    if port_count <= 0 or diffraction_layers < 0 or phase_layers < 0:
        raise ValidationError("network dims must be positive")
    return 8 * port_count**2 * diffraction_layers + 6 * port_count * phase_layers


@dataclass(frozen=True)
class EnergyReport:
    ops_per_pass: int
    tops: float
    power_w: float
    tops_per_watt: float
    calibrated_tops_per_watt: float | None


def throughput_energy(dims, budget, latency_ns):
    """Ops per pass, sustained TOPS at the given latency, and TOPS/W.

    ``dims`` is (port_count, diffraction_layers, phase_layers) or a Network.
    When the budget carries a measured ``peak_ops_tera``, the report also
    gives the calibrated efficiency peak_ops / power — the figure quoted for
    hardware, where the sustained-arithmetic estimate undercounts analog
    parallelism.
    """
    if hasattr(dims, "port_count"):
        dims = network_dims(dims)
    if latency_ns <= 0:
        raise ValidationError("latency_ns must be positive")
    ops = operations_per_pass(*dims)
    tops = ops / latency_ns / 1000.0
    power_w = budget.channel_count * budget.power_per_channel_mw / 1000.0
    calibrated = None
    if budget.peak_ops_tera is not None:
        calibrated = budget.peak_ops_tera / power_w
    return EnergyReport(ops, tops, power_w, tops / power_w, calibrated)


# ---------------------------------------------------------------------------
# Scale expansion
# ---------------------------------------------------------------------------


def _seam_matrix(total_ports, board_ports, coupling):
    """Unitary boundary mixing: one 2x2 coupler per internal vertical seam."""
    t = np.sqrt(1.0 - coupling)
    k = np.sqrt(coupling)
    m = np.eye(total_ports, dtype=complex)
    for edge in range(board_ports, total_ports, board_ports):
        idx = [edge - 1, edge]
        m[np.ix_(idx, idx)] = [[t, 1j * k], [1j * k, t]]
    return m


def _check_same_structure(boards):
    ref = boards[0]
    for b in boards[1:]:
        if b.port_count != ref.port_count or len(b.layers) != len(ref.layers):
            raise ValidationError("boards to expand must share port count and depth")
        for la, lb in zip(ref.layers, b.layers):
            if type(la) is not type(lb):
                raise ValidationError("boards to expand must share layer structure")


def _stack_vertical(boards, seam, coupling):
    """Stack boards into one network of sum-of-ports width.

    Diffraction layers become block-diagonal; with ``seam=True`` each is
    followed by a coupler joining the last channel of one board to the first
    channel of the next, modeling re-connected boundary channels. Phase
    layers concatenate, so the stack trains the union of the boards' phases.
    """
    if len(boards) == 1:
        return copy.deepcopy(boards[0])
    _check_same_structure(boards)
    n = boards[0].port_count
    total = n * len(boards)
    seam_m = _seam_matrix(total, n, coupling) if seam else None
    layers = []
    for li, ref_layer in enumerate(boards[0].layers):
        parts = [b.layers[li] for b in boards]
        if isinstance(ref_layer, DiffractionLayer):
            block = np.zeros((total, total), dtype=complex)
            for bi, part in enumerate(parts):
                block[bi * n : (bi + 1) * n, bi * n : (bi + 1) * n] = part.matrix
            if seam_m is not None:
                block = seam_m @ block
            source = (
                "measured" if any(p.source == "measured" for p in parts) else "synthesized"
            )
            freqs = {p.freq_hz for p in parts}
            layers.append(
                DiffractionLayer(block, source=source, freq_hz=freqs.pop() if len(freqs) == 1 else None)
            )
        else:
            if any(p.amplitude_table is not None for p in parts):
                raise ValidationError(
                    "amplitude-calibrated phase layers cannot be stacked; expand ideal boards"
                )
            if len({p.phase_max for p in parts}) != 1:
                raise ValidationError("stacked phase layers must share phase_max")
            layers.append(
                PhaseLayer(
                    np.concatenate([p.phases for p in parts]),
                    phase_max=ref_layer.phase_max,
                )
            )
    detectors = tuple(
        bi * n + p for bi, b in enumerate(boards) for p in b.detector_ports
    )
    inputs = None
    given = [b.input_ports for b in boards]
    if all(g is not None for g in given):
        inputs = tuple(bi * n + p for bi, g in enumerate(given) for p in g)
    elif any(g is not None for g in given):
        raise ValidationError("either all stacked boards declare input ports or none do")
    return Network(
        port_count=total, layers=layers, detector_ports=detectors, input_ports=inputs
    )


def expand_network(boards, horizontal=1, vertical=1, seam=True, coupling=0.5):
    """Compose boards into a wider and/or deeper network.

    ``horizontal`` boards cascade (layer concatenation); ``vertical`` boards
    stack side by side into a wider aperture (block-diagonal diffraction plus
    seam couplers unless ``seam=False``). ``boards`` is either one template
    network, replicated, or a list of exactly horizontal*vertical networks
    ordered stage by stage, top board first. The result's trainable count is
    the sum over boards.
    """
    if horizontal < 1 or vertical < 1:
        raise ValidationError("layout counts must be >= 1")
    count = horizontal * vertical
    if isinstance(boards, Network):
        boards = [copy.deepcopy(boards) for _ in range(count)]
    else:
        boards = list(boards)
        if len(boards) != count:
            raise ValidationError(
                f"layout {horizontal}x{vertical} needs {count} boards, got {len(boards)}"
            )
        _check_same_structure(boards)
        boards = [copy.deepcopy(b) for b in boards]
    stages = [
        _stack_vertical(boards[s * vertical : (s + 1) * vertical], seam, coupling)
        for s in range(horizontal)
    ]
    out = stages[0]
    for stage in stages[1:]:
        out = cascade_boards(out, stage)
    return out


# ---------------------------------------------------------------------------
# Road-scene ablations
# ---------------------------------------------------------------------------

ROAD_DETECTOR_PORTS = (5, 13, 21)
ROAD_RX_PORTS = tuple(range(10, 22))
BROADSIDE_BEAM_INDEX = 5  # 0 deg on the -50..50 deg, 10 deg step scan
#: Beams ranked center-out; a k-beam sweep cell keeps the first k, sorted.
BEAM_PRIORITY = (5, 0, 10, 2, 8, 4, 6, 1, 9, 3, 7)
DETECTOR_PRIORITY = (1, 0, 2)


@dataclass
class AblationCell:
    arm: str  # full | no_rx | no_tx | sweep
    region: str
    beam_count: int
    port_count: int
    seed: int
    accuracy: float
    loss: float
    converged: bool

    @property
    def config(self):
        if self.arm == "sweep":
            return f"sweep:{self.region}:beams={self.beam_count}:ports={self.port_count}"
        return f"{self.arm}:{self.region}"


@dataclass
class AblationTable:
    cells: list
    beam_counts: tuple = ()
    port_counts: tuple = ()

    def average(self, arm):
        accs = [c.accuracy for c in self.cells if c.arm == arm]
        if not accs:
            raise ValidationError(f"no cells for arm {arm!r}")
        return float(np.mean(accs))

    def summary(self):
        arms = []
        for c in self.cells:
            if c.arm not in arms:
                arms.append(c.arm)
        return {arm: self.average(arm) for arm in arms}

    def sweep_matrix(self):
        """Accuracy averaged over regions, indexed [beam_count, port_count]."""
        if not self.beam_counts:
            raise ValidationError("table holds no sweep cells")
        m = np.zeros((len(self.beam_counts), len(self.port_counts)))
        for i, b in enumerate(self.beam_counts):
            for j, p in enumerate(self.port_counts):
                accs = [
                    c.accuracy
                    for c in self.cells
                    if c.arm == "sweep" and c.beam_count == b and c.port_count == p
                ]
                m[i, j] = np.mean(accs)
        return m


def _val_row(result):
    rows = [h for h in result.history if h["split"] == "val"]
    if not rows:
        return float("nan"), float("nan")
    return rows[-1]["loss"], rows[-1]["accuracy"]


def _road_board(stages):
    return build_board(
        port_count=32,
        stages=stages,
        detector_ports=ROAD_DETECTOR_PORTS,
        input_ports=ROAD_RX_PORTS,
    )


def ablation_suite(
    codebook,
    grid,
    scene_cfg,
    train_cfg=TrainConfig(epochs=100, seed=200),
    regions=("left", "center", "right"),
    samples_per_class=240,
    dataset_seed=100,
    stages=3,
    include_sweep=False,
    beam_counts=(1, 3, 5, 7, 9, 11),
    port_counts=(1, 2, 3),
    quiet=True,
):
    """Road-scene accuracy with pieces of the chain removed.

    Arms per region: ``full`` trains the receive network plus head on the
    region's beam slice; ``no_rx`` feeds raw per-antenna intensities (summed
    over frequency) straight to a head; ``no_tx`` keeps the receive chain but
    replaces the scanned codebook with the single broadside beam of the same
    scenes. The optional sweep retrains the head per (beam count, detector
    count) cell on the full network's detections. Every cell is seeded, so
    the table is bit-reproducible; cells that fail to converge are kept and
    flagged.
    """
    cells = []
    for ri, region in enumerate(regions):
        tensors, labels, classes = synth_road_dataset(
            scene_cfg, codebook, grid, region, samples_per_class, seed=dataset_seed + ri
        )
        region_tensors, labels, classes = assemble_road_samples(tensors, labels, region)
        n_classes = len(classes)
        n_beams_region = region_tensors.shape[1]

        net_full = _road_board(stages)
        fields = road_fields(region_tensors, scene_cfg.rx_ports)
        head = LinearHead(
            np.zeros((n_classes, n_beams_region * len(ROAD_DETECTOR_PORTS))),
            np.zeros(n_classes),
        )
        res = pretrain(net_full, head, (fields, labels), train_cfg, quiet=quiet)
        loss, acc = _val_row(res)
        cells.append(
            AblationCell(
                "full", region, n_beams_region, len(ROAD_DETECTOR_PORTS),
                train_cfg.seed, acc, loss, not res.diverged,
            )
        )

        raw = np.abs(region_tensors) ** 2
        raw_feats = raw.sum(axis=3).reshape(len(raw), -1)
        head_rx = LinearHead(np.zeros((n_classes, raw_feats.shape[1])), np.zeros(n_classes))
        try:
            res_rx = fine_train(net_full, head_rx, raw_feats, labels, train_cfg)
            loss, acc = _val_row(res_rx)
            ok = True
        except NumericalError:
            loss, acc, ok = float("nan"), float("nan"), False
        cells.append(
            AblationCell(
                "no_rx", region, n_beams_region, raw.shape[2],
                train_cfg.seed, acc, loss, ok,
            )
        )

        bs_fields = road_fields(tensors[:, [BROADSIDE_BEAM_INDEX]], scene_cfg.rx_ports)
        net_bs = _road_board(stages)
        head_bs = LinearHead(
            np.zeros((n_classes, len(ROAD_DETECTOR_PORTS))), np.zeros(n_classes)
        )
        res_bs = pretrain(net_bs, head_bs, (bs_fields, labels), train_cfg, quiet=quiet)
        loss, acc = _val_row(res_bs)
        cells.append(
            AblationCell(
                "no_tx", region, 1, len(ROAD_DETECTOR_PORTS),
                train_cfg.seed, acc, loss, not res_bs.diverged,
            )
        )

        if include_sweep:
            all_fields = road_fields(tensors, scene_cfg.rx_ports)
            detections = detect(net_full, all_fields).reshape(
                len(tensors), tensors.shape[1], len(ROAD_DETECTOR_PORTS)
            )
            for b in beam_counts:
                sel_beams = sorted(BEAM_PRIORITY[:b])
                for p in port_counts:
                    sel_ports = sorted(DETECTOR_PRIORITY[:p])
                    feats = detections[:, sel_beams][:, :, sel_ports].reshape(
                        len(tensors), -1
                    )
                    head_c = LinearHead(
                        np.zeros((n_classes, feats.shape[1])), np.zeros(n_classes)
                    )
                    try:
                        res_c = fine_train(net_full, head_c, feats, labels, train_cfg)
                        loss, acc = _val_row(res_c)
                        ok = True
                    except NumericalError:
                        loss, acc, ok = float("nan"), float("nan"), False
                    cells.append(
                        AblationCell(
                            "sweep", region, b, p, train_cfg.seed, acc, loss, ok
                        )
                    )
    return AblationTable(
        cells=cells,
        beam_counts=tuple(beam_counts) if include_sweep else (),
        port_counts=tuple(port_counts) if include_sweep else (),
    )


def write_ablation_csv(path, table):
    """One row per cell: config key, seed, accuracy, loss, convergence flag."""
    with open(path, "w") as f:
        f.write("config,seed,accuracy,loss,converged\n")
        for c in table.cells:
            f.write(
                f"{c.config},{c.seed},{float(c.accuracy)!r},{float(c.loss)!r},"
                f"{int(c.converged)}\n"
            )


def format_summary(table):
    """Printable arm averages plus, when present, the sweep grid."""
    lines = ["arm averages over regions:"]
    for arm, acc in table.summary().items():
        lines.append(f"  {arm:>6s}  {acc:.4f}")
    if table.beam_counts:
        m = table.sweep_matrix()
        header = "beams\\ports " + " ".join(f"{p:>7d}" for p in table.port_counts)
        lines.append(header)
        for i, b in enumerate(table.beam_counts):
            lines.append(
                f"{b:>11d} " + " ".join(f"{m[i, j]:7.4f}" for j in range(m.shape[1]))
            )
    return "\n".join(lines)
