"""Gradient training for the phase-programmable network.

Gradients flow through the complex forward model by explicit reverse-mode
rules (no autograd): with the adjoint convention ybar = 2 dL/d(conj(y)),

* dense layer  y = M x          ->  xbar = M^H ybar
* phase layer  y = e^{j phi} x  ->  xbar = e^{-j phi} ybar,
                                    dL/dphi = Re(conj(ybar) * j * y)
* detector     I = sum_f |y_f|^2 -> ybar_f = 2 (dL/dI) y_f

The optimizer is classical heavy-ball SGDM. Two training entry points mirror
the deployment story: :func:`pretrain` optimizes phases (and the linear head
when present) in silico; :func:`fine_train` re-fits only the head against
fresh detector readings while the analog phases stay frozen.
"""

import csv
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import netcore
from .netcore import DiffractionLayer, LinearHead, PhaseLayer
from .validation import NumericalError, ValidationError, check_labels


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0 <= self.momentum < 1):
            raise ValidationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")


@dataclass
class GradientRecord:
    """Gradients of one loss evaluation w.r.t. every trainable parameter."""

    d_phases: np.ndarray
    d_head_weight: np.ndarray | None
    d_head_bias: np.ndarray | None
    loss: float


@dataclass
class Scaler:
    """Frozen feature standardization for the linear head (digital domain)."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features):
        features = np.asarray(features, dtype=float)
        return cls(mean=features.mean(axis=0), std=features.std(axis=0) + 1e-12)

    @classmethod
    def identity(cls, n_features):
        return cls(mean=np.zeros(n_features), std=np.ones(n_features))

    def apply(self, features):
        return (features - self.mean) / self.std


def loss_crossentropy(scores, label):
    """Softmax cross-entropy of one score vector, stabilized by max-subtraction."""
    scores = np.asarray(scores, dtype=float)
    z = scores - scores.max()
    return float(np.log(np.exp(z).sum()) - z[label])


def softmax_xent_batch(scores, labels):
    """Mean cross-entropy and its gradient (softmax - onehot) / n over a batch."""
    n = len(scores)
    z = scores - scores.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    idx = np.arange(n)
    loss = float(-np.mean(np.log(p[idx, labels] + 1e-300)))
    dscores = p.copy()
    dscores[idx, labels] -= 1.0
    return loss, dscores / n


# ---------------------------------------------------------------------------
# Forward cache + reverse pass
# ---------------------------------------------------------------------------


def _require_trainable(net):
    for layer in net.phase_layers:
        if layer.amplitude_table is not None:
            raise ValidationError(
                "training requires unit-amplitude phase layers "
                "(amplitude_table set; gradients are defined for the lossless model)"
            )


def _forward_cached(net, x):
    """Forward pass keeping each phase layer's pre-activation for the reverse pass."""
    pre = []
    for layer in net.layers:
        if isinstance(layer, DiffractionLayer):
            x = x @ layer.matrix.T
        else:
            pre.append(x)
            x = x * layer.diagonal()
    return x, pre


def _backward_phases(net, ybar, pre, batch_axes):
    """Reverse pass from the output adjoint; returns per-layer phase gradients."""
    grads = [None] * len(net.phase_layers)
    li = len(grads)
    for layer in reversed(net.layers):
        if isinstance(layer, PhaseLayer):
            li -= 1
            diag = layer.diagonal()
            post = pre[li] * diag
            grads[li] = np.real(np.conj(ybar) * 1j * post).sum(axis=batch_axes)
            if np.any(~np.isfinite(grads[li])):
                raise NumericalError(f"non-finite gradient at phase layer {li}")
            ybar = ybar * np.conj(diag)
        else:
            ybar = ybar @ np.conj(layer.matrix)
    return np.stack(grads)


def _detect_cached(net, fields):
    """Detection with cache: fields (n, F, S, N) -> intensities (n, S*P)."""
    y, pre = _forward_cached(net, fields)
    ports = list(net.detector_ports)
    inten = (np.abs(y[..., ports]) ** 2).sum(axis=1)  # sum over frequency
    n, s = inten.shape[0], inten.shape[1]
    return inten.reshape(n, s * len(ports)), y, pre


def _detector_adjoint(y, d_inten, detector_ports):
    """Map dL/d(intensity) (n, S, P) to the output-field adjoint (n, F, S, N)."""
    ybar = np.zeros_like(y)
    ports = list(detector_ports)
    ybar[..., ports] = 2.0 * d_inten[:, None, :, :] * y[..., ports]
    return ybar


def port_energy_loss_grad(net, fields, labels, intensity_scale=1.0):
    """Image-task loss: cross-entropy on scaled detector-port intensities.

    ``fields`` is (n, F, S, N) with the class ports as the network's detector
    ports (one slot expected). Returns (loss, d_phases, accuracy).
    """
    feats, y, pre = _detect_cached(net, fields)
    scores = intensity_scale * feats
    loss, dscores = softmax_xent_batch(scores, labels)
    n, s, p = fields.shape[0], fields.shape[2], len(net.detector_ports)
    d_inten = (intensity_scale * dscores).reshape(n, s, p)
    ybar = _detector_adjoint(y, d_inten, net.detector_ports)
    d_phases = _backward_phases(net, ybar, pre, batch_axes=(0, 1, 2))
    acc = float(np.mean(scores.argmax(axis=1) == labels))
    return loss, d_phases, acc


def head_loss_grad(net, head, fields, labels, scaler, train_phases=True):
    """Detector-head loss: CE on head(standardized detection features).

    Returns (loss, d_phases or None, d_weight, d_bias, accuracy).
    """
    feats, y, pre = _detect_cached(net, fields)
    z = scaler.apply(feats)
    scores = z @ head.weight.T + head.bias
    loss, dscores = softmax_xent_batch(scores, labels)
    d_weight = dscores.T @ z
    d_bias = dscores.sum(axis=0)
    d_phases = None
    if train_phases:
        dfeat = (dscores @ head.weight) / scaler.std
        n, s, p = fields.shape[0], fields.shape[2], len(net.detector_ports)
        ybar = _detector_adjoint(y, dfeat.reshape(n, s, p), net.detector_ports)
        d_phases = _backward_phases(net, ybar, pre, batch_axes=(0, 1, 2))
    acc = float(np.mean(scores.argmax(axis=1) == labels))
    return loss, d_phases, d_weight, d_bias, acc


def backward(net, head, sample, label, intensity_scale=1.0, scaler=None):
    """Exact gradients for one sample; returns a :class:`GradientRecord`.

    ``sample`` has shape (F, S, N). With ``head=None`` the loss is
    cross-entropy on scaled port intensities (image readout); otherwise it is
    cross-entropy on the linear head over detection features.
    """
    _require_trainable(net)
    fields = np.asarray(sample, dtype=complex)
    if fields.ndim != 3 or fields.shape[-1] != net.port_count:
        raise ValidationError(
            f"sample: expected (freqs, slots, {net.port_count}), got {fields.shape}"
        )
    if not np.all(np.isfinite(fields.real) & np.isfinite(fields.imag)):
        raise ValidationError("sample: contains non-finite entries")
    batch = fields[None]
    labels = np.array([label])
    if head is None:
        loss, d_phases, _ = port_energy_loss_grad(net, batch, labels, intensity_scale)
        return GradientRecord(d_phases=d_phases, d_head_weight=None, d_head_bias=None, loss=loss)
    if scaler is None:
        scaler = Scaler.identity(head.n_features)
    loss, d_phases, dw, db, _ = head_loss_grad(net, head, batch, labels, scaler)
    return GradientRecord(d_phases=d_phases, d_head_weight=dw, d_head_bias=db, loss=loss)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def sgdm_step(params, grads, state, cfg):
    """One classical heavy-ball step: v <- m v + g; p <- p - lr v.

    ``params``/``grads`` are dicts of arrays; ``state`` holds velocities by the
    same keys (missing keys start at zero). Pure: returns new dicts.
    """
    new_params, new_state = {}, {}
    for key, p in params.items():
        g = grads[key]
        v = state.get(key, np.zeros_like(p))
        v = cfg.momentum * v + g
        new_params[key] = p - cfg.learning_rate * v
        new_state[key] = v
    return new_params, new_state


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    net: object
    head: LinearHead | None
    scaler: Scaler | None
    history: list = field(default_factory=list)
    confusion_train: np.ndarray | None = None
    confusion_val: np.ndarray | None = None
    train_idx: np.ndarray | None = None
    val_idx: np.ndarray | None = None
    diverged: bool = False

    @property
    def val_accuracy(self):
        rows = [h for h in self.history if h["split"] == "val"]
        return rows[-1]["accuracy"] if rows else None


def stratified_split(labels, val_fraction, rng):
    """Seeded per-class 80/20-style split; returns (train_idx, val_idx)."""
    train, val = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_val = max(1, int(round(len(idx) * val_fraction)))
        val.append(idx[:n_val])
        train.append(idx[n_val:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(val))


def confusion_matrix(y_true, y_pred, n_classes):
    m = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(m, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return m


def _as_fields(x, port_count):
    x = np.asarray(x, dtype=complex)
    if x.ndim == 2:  # (n, N): single frequency, single slot
        x = x[:, None, None, :]
    if x.ndim != 4 or x.shape[-1] != port_count:
        raise ValidationError(
            f"X: expected (n, freqs, slots, {port_count}) or (n, {port_count}), got {x.shape}"
        )
    return x


def _evaluate(net, head, scaler, fields, labels, intensity_scale, n_classes):
    if head is None:
        feats, _, _ = _detect_cached(net, fields)
        scores = intensity_scale * feats
    else:
        feats, _, _ = _detect_cached(net, fields)
        scores = scaler.apply(feats) @ head.weight.T + head.bias
    loss, _ = softmax_xent_batch(scores, labels)
    pred = scores.argmax(axis=1)
    return loss, float(np.mean(pred == labels)), confusion_matrix(labels, pred, n_classes)


def pretrain(
    net,
    head,
    dataset,
    cfg,
    intensity_scale=1.0,
    val_fraction=0.2,
    init_phases="uniform",
    quiet=True,
):
    """Full-parameter in-silico training with a seeded stratified hold-out.

    ``dataset`` is ``(X, y)`` with X of shape (n, freqs, slots, N) (or (n, N)
    for single-frequency image features). ``head=None`` selects the
    port-energy readout; otherwise the given head's shape defines the class
    count and its parameters train jointly with the phases. Phase init is
    uniform [0, 2pi) from the config seed (pass ``init_phases="keep"`` to
    resume from the network's current values). On divergence the last
    finite-loss parameters are restored and the result is flagged.
    """
    _require_trainable(net)
    x, y = dataset
    fields = _as_fields(x, net.port_count)
    n_classes = head.n_classes if head is not None else len(net.detector_ports)
    y = check_labels(y, n_classes)
    if len(fields) != len(y):
        raise ValidationError(f"X has {len(fields)} samples but y has {len(y)}")
    if len(y) == 0:
        raise ValidationError("dataset is empty")

    rng = np.random.default_rng(cfg.seed)
    n_phase_layers = len(net.phase_layers)
    if init_phases == "uniform":
        net.phases = rng.uniform(0, 2 * np.pi, net.phase_count)
    elif init_phases != "keep":
        raise ValidationError(f"init_phases: unknown mode {init_phases!r}")

    if len(np.unique(y)) > 1:
        train_idx, val_idx = stratified_split(y, val_fraction, rng)
    else:  # degenerate single-class dataset: train on everything
        train_idx = np.arange(len(y))
        val_idx = np.arange(len(y))

    scaler = None
    if head is not None:
        feats0, _, _ = _detect_cached(net, fields[train_idx])
        scaler = Scaler.fit(feats0)

    params = {"phases": net.phases.reshape(n_phase_layers, -1)}
    if head is not None:
        params["head_weight"] = head.weight.copy()
        params["head_bias"] = head.bias.copy()
    state = {}
    history = []
    last_good = {k: v.copy() for k, v in params.items()}
    diverged = False

    def sync(p):
        net.phases = p["phases"].ravel()
        if head is not None:
            head.weight = p["head_weight"]
            head.bias = p["head_bias"]

    for epoch in range(cfg.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        epoch_ok = True
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            sync(params)
            try:
                if head is None:
                    loss, d_phases, _ = port_energy_loss_grad(
                        net, fields[batch], y[batch], intensity_scale
                    )
                    grads = {"phases": d_phases}
                else:
                    loss, d_phases, dw, db, _ = head_loss_grad(
                        net, head, fields[batch], y[batch], scaler
                    )
                    grads = {"phases": d_phases, "head_weight": dw, "head_bias": db}
            except NumericalError:
                loss = np.inf  # overflowed forward/reverse pass counts as divergence
            if not np.isfinite(loss):
                diverged = True
                epoch_ok = False
                break
            last_good = {k: v.copy() for k, v in params.items()}
            params, state = sgdm_step(params, grads, state, cfg)
        if not epoch_ok:
            break
        sync(params)
        for split, idx in (("train", train_idx), ("val", val_idx)):
            loss, acc, _ = _evaluate(
                net, head, scaler, fields[idx], y[idx], intensity_scale, n_classes
            )
            history.append(
                {"epoch": epoch, "split": split, "loss": loss, "accuracy": acc}
            )
        if not quiet:
            tr, va = history[-2], history[-1]
            print(
                f"epoch {epoch:3d}  train loss {tr['loss']:.4f} acc {tr['accuracy']:.4f}"
                f"  val loss {va['loss']:.4f} acc {va['accuracy']:.4f}"
            )

    if diverged:
        params = last_good
    sync(params)
    _, _, conf_tr = _evaluate(
        net, head, scaler, fields[train_idx], y[train_idx], intensity_scale, n_classes
    )
    _, _, conf_va = _evaluate(
        net, head, scaler, fields[val_idx], y[val_idx], intensity_scale, n_classes
    )
    return TrainResult(
        net=net,
        head=head,
        scaler=scaler,
        history=history,
        confusion_train=conf_tr,
        confusion_val=conf_va,
        train_idx=train_idx,
        val_idx=val_idx,
        diverged=diverged,
    )


def fine_train(net, head, features, labels, cfg, scaler=None, val_fraction=0.2):
    """Deployment-time head refit on fresh detection vectors; phases untouched.

    ``features`` are detection vectors produced by the frozen network (the
    network itself is only consulted for a consistency check). Head-only
    cross-entropy is convex, so the final training loss never exceeds the
    initial one.
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[1] != head.n_features:
        raise ValidationError(
            f"features: expected (n, {head.n_features}), got {features.shape}"
        )
    labels = check_labels(labels, head.n_classes)
    phases_before = net.phases  # property copy; proves the contract in tests
    rng = np.random.default_rng(cfg.seed)
    if len(np.unique(labels)) > 1:
        train_idx, val_idx = stratified_split(labels, val_fraction, rng)
    else:
        train_idx = np.arange(len(labels))
        val_idx = np.arange(len(labels))
    if scaler is None:
        scaler = Scaler.fit(features[train_idx])
    z = scaler.apply(features)

    params = {"head_weight": head.weight.copy(), "head_bias": head.bias.copy()}
    state = {}
    history = []
    for epoch in range(cfg.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            scores = z[batch] @ params["head_weight"].T + params["head_bias"]
            loss, dscores = softmax_xent_batch(scores, labels[batch])
            if not np.isfinite(loss):
                raise NumericalError(f"fine_train diverged at epoch {epoch}")
            grads = {
                "head_weight": dscores.T @ z[batch],
                "head_bias": dscores.sum(axis=0),
            }
            params, state = sgdm_step(params, grads, state, cfg)
        for split, idx in (("train", train_idx), ("val", val_idx)):
            scores = z[idx] @ params["head_weight"].T + params["head_bias"]
            loss, _ = softmax_xent_batch(scores, labels[idx])
            acc = float(np.mean(scores.argmax(axis=1) == labels[idx]))
            history.append({"epoch": epoch, "split": split, "loss": loss, "accuracy": acc})

    head.weight = params["head_weight"]
    head.bias = params["head_bias"]
    assert np.array_equal(net.phases, phases_before)
    scores = z[val_idx] @ head.weight.T + head.bias
    conf = confusion_matrix(labels[val_idx], scores.argmax(axis=1), head.n_classes)
    return TrainResult(
        net=net,
        head=head,
        scaler=scaler,
        history=history,
        confusion_val=conf,
        train_idx=train_idx,
        val_idx=val_idx,
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

CKPT_VERSION = 1


def _net_to_dict(net):
    layers = []
    for layer in net.layers:
        if isinstance(layer, DiffractionLayer):
            m = layer.matrix
            flat = np.column_stack([m.real.ravel(), m.imag.ravel()]).ravel()
            layers.append(
                {"kind": "diffraction", "source": layer.source, "entries": flat.tolist()}
            )
        else:
            layers.append({"kind": "phase", "phases": layer.phases.tolist()})
    return {
        "port_count": net.port_count,
        "detector_ports": list(net.detector_ports),
        "input_ports": list(net.input_ports) if net.input_ports is not None else None,
        "layers": layers,
    }


def _net_from_dict(d):
    n = d["port_count"]
    layers = []
    for item in d["layers"]:
        if item["kind"] == "diffraction":
            flat = np.asarray(item["entries"], dtype=float).reshape(-1, 2)
            m = (flat[:, 0] + 1j * flat[:, 1]).reshape(n, n)
            layers.append(DiffractionLayer(matrix=m, source=item["source"]))
        else:
            layers.append(PhaseLayer(phases=np.asarray(item["phases"], dtype=float)))
    return netcore.Network(
        port_count=n,
        layers=layers,
        detector_ports=tuple(d["detector_ports"]),
        input_ports=tuple(d["input_ports"]) if d["input_ports"] is not None else None,
    )


def save_checkpoint(path, net, head=None, scaler=None, opt_state=None, history=None, meta=None):
    """Versioned JSON checkpoint: network + head + optimizer state + metrics."""
    doc = {
        "format": "spnn-ckpt",
        "version": CKPT_VERSION,
        "network": _net_to_dict(net),
        "head": None
        if head is None
        else {"weight": head.weight.tolist(), "bias": head.bias.tolist()},
        "scaler": None
        if scaler is None
        else {"mean": scaler.mean.tolist(), "std": scaler.std.tolist()},
        "opt_state": None
        if opt_state is None
        else {k: v.tolist() for k, v in opt_state.items()},
        "history": history or [],
        "meta": meta or {},
    }
    with open(path, "w") as f:
        json.dump(doc, f)


class Checkpoint(NamedTuple):
    net: object
    head: LinearHead | None
    scaler: Scaler | None
    opt_state: dict | None
    history: list
    meta: dict


def load_checkpoint(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != "spnn-ckpt" or doc.get("version") != CKPT_VERSION:
        raise ValidationError(f"{path}: not a spnn-ckpt v{CKPT_VERSION} file")
    net = _net_from_dict(doc["network"])
    head = None
    if doc["head"] is not None:
        head = LinearHead(
            weight=np.asarray(doc["head"]["weight"]), bias=np.asarray(doc["head"]["bias"])
        )
    scaler = None
    if doc["scaler"] is not None:
        scaler = Scaler(
            mean=np.asarray(doc["scaler"]["mean"]), std=np.asarray(doc["scaler"]["std"])
        )
    opt_state = None
    if doc["opt_state"] is not None:
        opt_state = {k: np.asarray(v) for k, v in doc["opt_state"].items()}
    return Checkpoint(net, head, scaler, opt_state, doc["history"], doc["meta"])


def write_metrics_csv(path, history):
    """Metrics CSV with columns epoch, split, loss, accuracy."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "split", "loss", "accuracy"])
        for row in history:
            w.writerow(
                [
                    row["epoch"],
                    row["split"],
                    repr(float(row["loss"])),
                    repr(float(row["accuracy"])),
                ]
            )
