"""Command-line interface.

Every subcommand reads one JSON config (flag > file > built-in default),
honors ``--seed``/``--out``/``--quiet``, and writes a manifest with a content
hash over its effective config and input files. Outputs never leave the run
directory. Exit codes: 0 success, 1 usage, 2 validation, 3 numerical
failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, beam, data, device, netcore, train
from .config import (
    data_root,
    load_config,
    make_manifest,
    merge_config,
    output_root,
    write_manifest,
)
from .validation import NumericalError, ValidationError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


DEFAULTS = {
    "train-image": {
        "dataset": "mnist",
        "classes": 5,
        "boards": 3,
        "stages": 3,
        "learning_rate": 0.01,
        "momentum": 0.9,
        "batch_size": 64,
        "epochs": 50,
        "seed": 0,
        "intensity_scale": 10.0,
        "val_fraction": 0.2,
        "normalize": True,
        "limit": 0,
        "data_dir": None,
        "calibration": None,
    },
    "train-gesture": {
        "repetitions": 50,
        "takes": 5,
        "snr_db": 10.0,
        "balance": True,
        "data_seed": 0,
        "stages": 3,
        "detector_ports": [5, 13, 21],
        "learning_rate": 0.01,
        "momentum": 0.9,
        "batch_size": 64,
        "epochs": 100,
        "seed": 0,
        "val_fraction": 0.2,
        "calibration": None,
    },
    "train-road": {
        "region": "center",
        "samples_per_class": 240,
        "snr_db": 10.0,
        "dataset_seed": 100,
        "codebook": None,
        "beam_seed": 11,
        "beam_iters": 2000,
        "stages": 3,
        "learning_rate": 0.01,
        "momentum": 0.9,
        "batch_size": 64,
        "epochs": 100,
        "seed": 200,
        "val_fraction": 0.2,
        "calibration": None,
    },
    "train-beams": {
        "angles": list(beam.SCAN_ANGLES_DEG),
        "stages": 3,
        "feed_ports": [12, 14, 16, 18],
        "element_pattern": "cosine",
        "grid_step_deg": 1.0,
        "learning_rate": 0.05,
        "max_iters": 2000,
        "seed": 0,
        "pointing_tol_deg": 2.0,
        "export_freq_hz": 10.8e9,
    },
    "eval": {
        "intensity_scale": None,
        "seed": 0,
    },
    "synth-scene": {
        "kind": "road",
        "region": "center",
        "samples_per_class": 240,
        "snr_db": 10.0,
        "seed": 100,
        "codebook": None,
        "beam_seed": 11,
        "beam_iters": 2000,
        "stages": 3,
        "repetitions": 50,
        "takes": 5,
        "balance": True,
    },
    "ablate": {
        "samples_per_class": 240,
        "snr_db": 10.0,
        "dataset_seed": 100,
        "codebook": None,
        "beam_seed": 11,
        "beam_iters": 2000,
        "stages": 3,
        "learning_rate": 0.01,
        "momentum": 0.9,
        "batch_size": 64,
        "epochs": 100,
        "seed": 200,
        "include_sweep": False,
        "beam_counts": [1, 3, 5, 7, 9, 11],
        "port_counts": [1, 2, 3],
    },
    "timing": {
        "flight_plus_detector_ns": 25.0,
        "adc_readout_us": 0.4,
        "dac_switch_us": 8.95,
        "beams_per_cycle": 11,
        "backend_us": analysis.DEFAULT_BACKEND_US,
        "seed": 0,
    },
    "energy": {
        "channel_count": 768,
        "power_per_channel_mw": 6.0,
        "peak_ops_tera": 80.0,
        "port_count": 64,
        "diffraction_layers": 12,
        "phase_layers": 12,
        "latency_ns": 25.0,
        "seed": 0,
    },
    "expand": {
        "horizontal": 4,
        "vertical": 2,
        "seam": True,
        "coupling": 0.5,
        "port_count": 32,
        "stages": 3,
        "checkpoint": None,
        "seed": 0,
    },
    "export-codebook": {
        "z1_ohm": 120.0,
        "theta_rad": 0.83,
        "zt_ohm": 5.0,
        "cv_min_pf": 0.05,
        "cv_max_pf": 0.25,
        "freq_hz": 10.8e9,
        "bias_table": None,
        "seed": 0,
    },
    "dump-pattern": {
        "beam": 0,
        "element_pattern": "cosine",
        "grid_step_deg": 1.0,
        "seed": 0,
    },
}


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="run output directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    parser = _Parser(prog="plasmonet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("train-image", parents=[common], help="image classifier on DFT features")
    p.add_argument("--classes", type=int, help="number of classes (first k labels)")
    p.add_argument("--calibration", help="measured diffraction-matrix file")

    p = sub.add_parser("train-gesture", parents=[common], help="gesture classifier on folded windows")
    p.add_argument("--calibration", help="measured diffraction-matrix file")

    p = sub.add_parser("train-road", parents=[common], help="road-scene classifier for one region")
    p.add_argument("--region", choices=sorted(data.ROAD_REGIONS), help="road region")
    p.add_argument("--calibration", help="measured diffraction-matrix file")

    sub.add_parser("train-beams", parents=[common], help="train the steering codebook")

    p = sub.add_parser("eval", parents=[common], help="checkpoint + dataset -> confusion matrix")
    p.add_argument("checkpoint", help="checkpoint file from a train-* run")
    p.add_argument("dataset", help="dataset file (spnn-dataset npz)")

    p = sub.add_parser("synth-scene", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--region", choices=sorted(data.ROAD_REGIONS), help="road region")

    sub.add_parser("ablate", parents=[common], help="road pipeline ablation table")
    sub.add_parser("timing", parents=[common], help="cycle timing budget")
    sub.add_parser("energy", parents=[common], help="throughput and energy budget")
    sub.add_parser("expand", parents=[common], help="compose boards into a larger network")

    p = sub.add_parser("export-codebook", parents=[common], help="phases -> capacitance/bias file")
    p.add_argument("phases", help="codebook bundle (npz) from train-beams")

    p = sub.add_parser("dump-pattern", parents=[common], help="far-field pattern CSV for one beam")
    p.add_argument("phases", help="codebook bundle (npz) from train-beams")
    p.add_argument("--beam", type=int, help="beam index within the bundle")
    return parser


def _effective_config(args, extra_overrides=None):
    defaults = DEFAULTS[args.command]
    file_cfg = load_config(args.config) if args.config else None
    overrides = {"seed": args.seed}
    for key in ("classes", "region", "calibration", "beam"):
        if key in defaults and getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    overrides.update(extra_overrides or {})
    return merge_config(defaults, file_cfg, overrides)


def _run_dir(args, cfg, input_paths):
    from .config import content_hash

    if args.out:
        out = args.out
    else:
        digest = content_hash(cfg, input_paths)
        out = os.path.join(output_root(), f"{args.command}-{digest[:12]}")
    os.makedirs(out, exist_ok=True)
    return out


def _finish(args, cfg, out, input_paths):
    manifest = make_manifest(
        args.command, cfg, int(cfg.get("seed", 0)), out,
        config_path=args.config, input_paths=input_paths,
    )
    write_manifest(manifest, os.path.join(out, "manifest.json"))


def _write_confusion(path, matrix):
    with open(path, "w") as f:
        for row in matrix:
            f.write(",".join(str(int(v)) for v in row) + "\n")


def _train_config(cfg):
    return train.TrainConfig(
        learning_rate=cfg["learning_rate"],
        momentum=cfg["momentum"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        seed=cfg["seed"],
    )


def _board(cfg, detector_ports, input_ports=None, boards=1):
    """Board stack from the synthesized mesh or a calibration file."""
    if cfg.get("calibration"):
        layer = device.load_calibration_matrix(cfg["calibration"])
        net = device.board_from_matrix(
            layer.matrix, stages=cfg["stages"],
            detector_ports=detector_ports, input_ports=input_ports,
            freq_hz=layer.freq_hz,
        )
        for _ in range(boards - 1):
            net = netcore.cascade_boards(
                net,
                device.board_from_matrix(
                    layer.matrix, stages=cfg["stages"],
                    detector_ports=detector_ports, freq_hz=layer.freq_hz,
                ),
            )
        return net
    if boards == 1:
        return device.build_board(
            stages=cfg["stages"], detector_ports=detector_ports, input_ports=input_ports
        )
    return device.build_stack(
        boards=boards, stages=cfg["stages"],
        detector_ports=detector_ports, input_ports=input_ports,
    )


def _save_training_outputs(out, res, cfg, meta):
    train.save_checkpoint(
        os.path.join(out, "checkpoint.json"),
        res.net, res.head, res.scaler, history=res.history, meta=meta,
    )
    train.write_metrics_csv(os.path.join(out, "metrics.csv"), res.history)
    _write_confusion(os.path.join(out, "confusion.csv"), res.confusion_val)


def _dataset_paths(cfg):
    root = cfg["data_dir"] or data_root()
    name = cfg["dataset"]
    if name not in ("mnist", "fashion"):
        raise ValidationError(f"dataset: expected 'mnist' or 'fashion', got {name!r}")
    return (
        os.path.join(root, f"{name}-images-idx3-ubyte.gz"),
        os.path.join(root, f"{name}-labels-idx1-ubyte.gz"),
    )


def cmd_train_image(args):
    cfg = _effective_config(args)
    if cfg["classes"] < 2 or cfg["classes"] > 32:
        raise ValidationError(f"classes: expected 2..32, got {cfg['classes']}")
    img_path, lab_path = _dataset_paths(cfg)
    inputs = [p for p in (args.config, img_path, lab_path, cfg["calibration"]) if p]
    out = _run_dir(args, cfg, inputs)

    images, labels = data.load_image_dataset(img_path, lab_path, classes=range(cfg["classes"]))
    if cfg["limit"]:
        keep = np.concatenate(
            [np.flatnonzero(labels == c)[: cfg["limit"]] for c in range(cfg["classes"])]
        )
        images, labels = images[keep], labels[keep]
    x = data.dft_compress_batch(images, normalize=cfg["normalize"])
    ports = netcore.class_ports(32, cfg["classes"])
    net = _board(cfg, detector_ports=ports, boards=cfg["boards"])
    res = train.pretrain(
        net, None, (x, labels), _train_config(cfg),
        intensity_scale=cfg["intensity_scale"], val_fraction=cfg["val_fraction"],
        quiet=args.quiet,
    )
    _save_training_outputs(
        out, res, cfg,
        meta={
            "command": args.command, "pipeline": "port-energy",
            "intensity_scale": cfg["intensity_scale"],
            "classes": list(range(cfg["classes"])), "class_ports": list(ports),
        },
    )
    _finish(args, cfg, out, inputs)
    print(f"val accuracy {res.val_accuracy:.4f} ({out})")
    return EXIT_OK


def cmd_train_gesture(args):
    cfg = _effective_config(args)
    inputs = [p for p in (args.config, cfg["calibration"]) if p]
    out = _run_dir(args, cfg, inputs)

    spec = data.GestureWindowSpec()
    x, y, names = data.synth_gesture_dataset(
        spec, repetitions=cfg["repetitions"], takes=cfg["takes"],
        snr_db=cfg["snr_db"], seed=cfg["data_seed"], balance=cfg["balance"],
    )
    fields = data.gesture_fields(x)
    detectors = tuple(cfg["detector_ports"])
    net = _board(cfg, detector_ports=detectors, input_ports=spec.antenna_ports)
    head = netcore.LinearHead(
        np.zeros((len(names), spec.slot_count * len(detectors))), np.zeros(len(names))
    )
    res = train.pretrain(
        net, head, (fields, y), _train_config(cfg),
        val_fraction=cfg["val_fraction"], quiet=args.quiet,
    )
    _save_training_outputs(
        out, res, cfg,
        meta={"command": args.command, "pipeline": "head", "classes": names},
    )
    data.save_dataset(
        os.path.join(out, "dataset.npz"), fields, y, kind="gesture", classes=names
    )
    _finish(args, cfg, out, inputs)
    print(f"val accuracy {res.val_accuracy:.4f} ({out})")
    return EXIT_OK


def _tx_codebook(cfg, quiet):
    """Load or train the 11-beam transmit codebook used by road commands."""
    grid = beam.FarFieldGrid()
    if cfg.get("codebook"):
        return beam.load_codebook_npz(cfg["codebook"]), grid
    net = device.build_board(stages=cfg["stages"])
    if not quiet:
        print("training beam codebook...")
    codebook = beam.train_beam_codebook(
        net, grid, beam.beam_excitation(),
        seed=cfg["beam_seed"], max_iters=cfg["beam_iters"],
    )
    return codebook, grid


def cmd_train_road(args):
    cfg = _effective_config(args)
    inputs = [p for p in (args.config, cfg["calibration"], cfg["codebook"]) if p]
    out = _run_dir(args, cfg, inputs)

    codebook, grid = _tx_codebook(cfg, args.quiet)
    scene = data.SceneConfig(snr_db=cfg["snr_db"], seed=cfg["dataset_seed"])
    tensors, labels, classes = data.synth_road_dataset(
        scene, codebook, grid, cfg["region"], cfg["samples_per_class"]
    )
    region_tensors, labels, classes = data.assemble_road_samples(
        tensors, labels, cfg["region"]
    )
    fields = data.road_fields(region_tensors, scene.rx_ports)
    detectors = analysis.ROAD_DETECTOR_PORTS
    net = _board(cfg, detector_ports=detectors, input_ports=scene.rx_ports)
    head = netcore.LinearHead(
        np.zeros((len(classes), region_tensors.shape[1] * len(detectors))),
        np.zeros(len(classes)),
    )
    res = train.pretrain(
        net, head, (fields, labels), _train_config(cfg),
        val_fraction=cfg["val_fraction"], quiet=args.quiet,
    )
    _save_training_outputs(
        out, res, cfg,
        meta={
            "command": args.command, "pipeline": "head",
            "region": cfg["region"], "classes": classes,
        },
    )
    data.save_dataset(
        os.path.join(out, "dataset.npz"), fields, labels,
        kind="road", region=cfg["region"], classes=classes,
    )
    _finish(args, cfg, out, inputs)
    print(f"val accuracy {res.val_accuracy:.4f} ({out})")
    return EXIT_OK


def cmd_train_beams(args):
    cfg = _effective_config(args)
    inputs = [p for p in (args.config,) if p]
    out = _run_dir(args, cfg, inputs)

    geometry = beam.ArrayGeometry(element_pattern=cfg["element_pattern"])
    grid = beam.FarFieldGrid(
        np.arange(-90.0, 90.0 + cfg["grid_step_deg"] / 2, cfg["grid_step_deg"]), geometry
    )
    net = device.build_board(stages=cfg["stages"])
    codebook = beam.train_beam_codebook(
        net, grid, beam.beam_excitation(feed_ports=tuple(cfg["feed_ports"])),
        angles_deg=cfg["angles"], learning_rate=cfg["learning_rate"],
        max_iters=cfg["max_iters"], seed=cfg["seed"],
        pointing_tol_deg=cfg["pointing_tol_deg"],
    )
    beam.save_codebook_npz(os.path.join(out, "codebook.npz"), codebook)
    device.export_codebook(
        os.path.join(out, "codebook.txt"),
        codebook.angles_deg,
        codebook.phases.reshape(len(codebook), -1),
        device.DEFAULT_SHIFTER,
        freq_hz=cfg["export_freq_hz"],
    )
    patterns = np.stack(
        [beam.far_field_pattern(grid, f)[0] for f in codebook.aperture_fields]
    )
    corr = beam.pattern_correlation_matrix(patterns)
    np.savetxt(os.path.join(out, "correlation.csv"), corr, delimiter=",")
    with open(os.path.join(out, "pointing.csv"), "w") as f:
        f.write("angle_deg,pointing_error_deg,converged\n")
        for a, e, c in zip(
            codebook.angles_deg, codebook.pointing_errors_deg, codebook.converged
        ):
            f.write(f"{float(a)!r},{float(e)!r},{int(c)}\n")
    _finish(args, cfg, out, inputs)
    worst = float(np.max(np.abs(codebook.pointing_errors_deg)))
    print(
        f"{len(codebook)} beams, max pointing error {worst:.2f} deg, "
        f"max off-diagonal correlation "
        f"{float(np.max(corr - np.eye(len(corr)))):.3f} ({out})"
    )
    return EXIT_OK


def cmd_eval(args):
    cfg = _effective_config(args)
    inputs = [p for p in (args.config, args.checkpoint, args.dataset) if p]
    out = _run_dir(args, cfg, inputs)

    net, head, scaler, _, _, meta = train.load_checkpoint(args.checkpoint)
    x, y, dmeta = data.load_dataset(args.dataset)
    fields = train._as_fields(x, net.port_count)
    y = np.asarray(y, dtype=int)
    scale = cfg["intensity_scale"]
    if scale is None:
        scale = float(meta.get("intensity_scale", 1.0))
    feats = netcore.detect(net, fields)
    if head is None:
        scores = scale * feats
    else:
        if scaler is not None:
            feats = scaler.apply(feats)
        scores = feats @ head.weight.T + head.bias
    pred = scores.argmax(axis=1)
    accuracy = float(np.mean(pred == y))
    conf = train.confusion_matrix(y, pred, scores.shape[1])
    _write_confusion(os.path.join(out, "confusion.csv"), conf)
    with open(os.path.join(out, "eval.json"), "w") as f:
        json.dump({"accuracy": accuracy, "samples": int(len(y))}, f, indent=2)
        f.write("\n")
    _finish(args, cfg, out, inputs)
    print(f"accuracy {accuracy:.4f} on {len(y)} samples ({out})")
    return EXIT_OK


def cmd_synth_scene(args):
    cfg = _effective_config(args)
    inputs = [p for p in (args.config, cfg["codebook"]) if p]
    out = _run_dir(args, cfg, inputs)

    if cfg["kind"] == "road":
        codebook, grid = _tx_codebook(cfg, args.quiet)
        scene = data.SceneConfig(snr_db=cfg["snr_db"], seed=cfg["seed"])
        tensors, labels, classes = data.synth_road_dataset(
            scene, codebook, grid, cfg["region"], cfg["samples_per_class"]
        )
        region_tensors, labels, classes = data.assemble_road_samples(
            tensors, labels, cfg["region"]
        )
        fields = data.road_fields(region_tensors, scene.rx_ports)
        data.save_dataset(
            os.path.join(out, "dataset.npz"), fields, labels,
            kind="road", region=cfg["region"], classes=classes,
        )
        summary = f"{len(labels)} road samples ({cfg['region']}: {'/'.join(classes)})"
    elif cfg["kind"] == "gesture":
        x, y, names = data.synth_gesture_dataset(
            repetitions=cfg["repetitions"], takes=cfg["takes"],
            snr_db=cfg["snr_db"], seed=cfg["seed"], balance=cfg["balance"],
        )
        fields = data.gesture_fields(x)
        data.save_dataset(
            os.path.join(out, "dataset.npz"), fields, y, kind="gesture", classes=names
        )
        summary = f"{len(y)} gesture windows ({'/'.join(names)})"
    else:
        raise ValidationError(f"kind: expected 'road' or 'gesture', got {cfg['kind']!r}")
    _finish(args, cfg, out, inputs)
    print(f"{summary} ({out})")
    return EXIT_OK


def cmd_ablate(args):
    cfg = _effective_config(args)
    inputs = [p for p in (args.config, cfg["codebook"]) if p]
    out = _run_dir(args, cfg, inputs)

    codebook, grid = _tx_codebook(cfg, args.quiet)
    scene = data.SceneConfig(snr_db=cfg["snr_db"], seed=cfg["dataset_seed"])
    table = analysis.ablation_suite(
        codebook, grid, scene,
        train_cfg=_train_config(cfg),
        samples_per_class=cfg["samples_per_class"],
        dataset_seed=cfg["dataset_seed"],
        stages=cfg["stages"],
        include_sweep=cfg["include_sweep"],
        beam_counts=tuple(cfg["beam_counts"]),
        port_counts=tuple(cfg["port_counts"]),
        quiet=args.quiet,
    )
    analysis.write_ablation_csv(os.path.join(out, "ablation.csv"), table)
    summary = analysis.format_summary(table)
    with open(os.path.join(out, "summary.txt"), "w") as f:
        f.write(summary + "\n")
    _finish(args, cfg, out, inputs)
    print(summary)
    print(f"({out})")
    return EXIT_OK


def cmd_timing(args):
    cfg = _effective_config(args)
    budget = analysis.TimingBudget(
        flight_plus_detector_ns=cfg["flight_plus_detector_ns"],
        adc_readout_us=cfg["adc_readout_us"],
        dac_switch_us=cfg["dac_switch_us"],
        beams_per_cycle=cfg["beams_per_cycle"],
        backend_us=cfg["backend_us"],
    )
    report = analysis.cycle_time(budget)
    print(
        f"per-beam {report.per_beam_us:.3f} us; cycle {report.cycle_us:.2f} us; "
        f"refresh {report.refresh_khz:.2f} kHz"
    )
    if args.out:
        out = _run_dir(args, cfg, [args.config] if args.config else [])
        with open(os.path.join(out, "timing.json"), "w") as f:
            json.dump(report._asdict(), f, indent=2)
            f.write("\n")
        _finish(args, cfg, out, [args.config] if args.config else [])
    return EXIT_OK


def cmd_energy(args):
    cfg = _effective_config(args)
    budget = analysis.EnergyBudget(
        channel_count=cfg["channel_count"],
        power_per_channel_mw=cfg["power_per_channel_mw"],
        peak_ops_tera=cfg["peak_ops_tera"],
    )
    dims = (cfg["port_count"], cfg["diffraction_layers"], cfg["phase_layers"])
    report = analysis.throughput_energy(dims, budget, cfg["latency_ns"])
    line = (
        f"{report.ops_per_pass} ops/pass; {report.tops:.3f} TOPS at "
        f"{cfg['latency_ns']:g} ns; {report.power_w:.3f} W; "
        f"{report.tops_per_watt:.3f} TOPS/W"
    )
    if report.calibrated_tops_per_watt is not None:
        line += f"; calibrated {report.calibrated_tops_per_watt:.2f} TOPS/W"
    print(line)
    if args.out:
        out = _run_dir(args, cfg, [args.config] if args.config else [])
        with open(os.path.join(out, "energy.json"), "w") as f:
            json.dump(
                {
                    "ops_per_pass": report.ops_per_pass,
                    "tops": report.tops,
                    "power_w": report.power_w,
                    "tops_per_watt": report.tops_per_watt,
                    "calibrated_tops_per_watt": report.calibrated_tops_per_watt,
                },
                f, indent=2,
            )
            f.write("\n")
        _finish(args, cfg, out, [args.config] if args.config else [])
    return EXIT_OK


def cmd_expand(args):
    cfg = _effective_config(args)
    inputs = [p for p in (args.config, cfg["checkpoint"]) if p]
    out = _run_dir(args, cfg, inputs)

    if cfg["checkpoint"]:
        board = train.load_checkpoint(cfg["checkpoint"])[0]
    else:
        board = device.build_board(port_count=cfg["port_count"], stages=cfg["stages"])
    expanded = analysis.expand_network(
        board, horizontal=cfg["horizontal"], vertical=cfg["vertical"],
        seam=cfg["seam"], coupling=cfg["coupling"],
    )
    netcore.save_network(expanded, os.path.join(out, "network.txt"))
    _finish(args, cfg, out, inputs)
    print(
        f"{cfg['horizontal']}x{cfg['vertical']} layout: {expanded.port_count} ports, "
        f"{expanded.phase_count} trainable phases ({out})"
    )
    return EXIT_OK


def cmd_export_codebook(args):
    cfg = _effective_config(args)
    inputs = [p for p in (args.config, args.phases) if p]
    out = _run_dir(args, cfg, inputs)

    codebook = beam.load_codebook_npz(args.phases)
    shifter = device.PhaseShifterParams(
        z1_ohm=cfg["z1_ohm"], theta_rad=cfg["theta_rad"], zt_ohm=cfg["zt_ohm"],
        cv_min_pf=cfg["cv_min_pf"], cv_max_pf=cfg["cv_max_pf"],
        design_freq_hz=cfg["freq_hz"],
    )
    device.export_codebook(
        os.path.join(out, "codebook.txt"),
        codebook.angles_deg,
        codebook.phases.reshape(len(codebook), -1),
        shifter,
        freq_hz=cfg["freq_hz"],
        cv_to_volts=cfg["bias_table"],
    )
    _finish(args, cfg, out, inputs)
    print(
        f"exported {len(codebook)} beams x {codebook.phases[0].size} phases ({out})"
    )
    return EXIT_OK


def cmd_dump_pattern(args):
    cfg = _effective_config(args)
    inputs = [p for p in (args.config, args.phases) if p]
    out = _run_dir(args, cfg, inputs)

    codebook = beam.load_codebook_npz(args.phases)
    if not 0 <= cfg["beam"] < len(codebook):
        raise ValidationError(
            f"beam: index {cfg['beam']} outside 0..{len(codebook) - 1}"
        )
    geometry = beam.ArrayGeometry(element_pattern=cfg["element_pattern"])
    grid = beam.FarFieldGrid(
        np.arange(-90.0, 90.0 + cfg["grid_step_deg"] / 2, cfg["grid_step_deg"]), geometry
    )
    _, power_db = beam.far_field_pattern(grid, codebook.aperture_fields[cfg["beam"]])
    beam.write_pattern_csv(os.path.join(out, "pattern.csv"), grid.angles_deg, power_db)
    _finish(args, cfg, out, inputs)
    peak = grid.angles_deg[int(np.argmax(power_db))]
    print(
        f"beam {cfg['beam']} (target {codebook.angles_deg[cfg['beam']]:g} deg) "
        f"peaks at {peak:g} deg ({out})"
    )
    return EXIT_OK


COMMANDS = {
    "train-image": cmd_train_image,
    "train-gesture": cmd_train_gesture,
    "train-road": cmd_train_road,
    "train-beams": cmd_train_beams,
    "eval": cmd_eval,
    "synth-scene": cmd_synth_scene,
    "ablate": cmd_ablate,
    "timing": cmd_timing,
    "energy": cmd_energy,
    "expand": cmd_expand,
    "export-codebook": cmd_export_codebook,
    "dump-pattern": cmd_dump_pattern,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # argparse --help
        return int(e.code or 0)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
