"""
Experiment runners: SER sweeps, predictor baselines, noise robustness and
detector comparison

Each runner returns a list of flat row dicts; `write_rows` stores them as CSV
or JSON.
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import csv
import json
import logging

import numpy as np

from .channel import ChannelConfig, CodecSchedule, NetworkModel, apply_channel
from .data import PoseDataset
from .errors import ConfigError
from .metrics import classification_metrics, regression_metrics
from .modem import AudioBuffer, ModemConfig, ser_test
from .pose_core import Side
from .renderer import (
    DEFAULT_CANVAS,
    EXCLUDED_COLUMNS,
    NoiseParams,
    PredictorModel,
    fit_detector,
    fit_linear_regression,
    fit_pca_detector,
    fit_predictor,
    interpolate_hands,
    make_labeled_set,
    perturb_joints,
)
from .trainer import TrainConfig

logger = logging.getLogger(__name__)

DEFAULT_RATES = (1.5, 3.0, 6.0)
DEFAULT_SCHEMES = ("css", "fsk")
DEFAULT_DISPLACEMENTS = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0)
KEYPOINT_SETS = ("excluded", "all")

Row = Dict[str, Any]


def default_schedules() -> List[Optional[CodecSchedule]]:
    """Identity plus the frame-size and bitrate axes around 20 ms / 64 kbps"""
    schedules: List[Optional[CodecSchedule]] = [None]
    for bitrate in (128.0, 64.0, 32.0):
        schedules.append(CodecSchedule.constant(20.0, bitrate))
    for frame_ms in (60.0, 10.0):
        schedules.append(CodecSchedule.constant(frame_ms, 64.0))
    return schedules


def _schedule_fields(schedule: Optional[CodecSchedule]) -> Row:
    if schedule is None:
        return {"schedule": "identity", "frame_ms": None, "bitrate_kbps": None}
    seg = schedule.segments[0]
    label = ChannelConfig(codec=schedule).label
    return {"schedule": label, "frame_ms": seg.frame_ms, "bitrate_kbps": seg.bitrate_kbps}


def _sweep_cell(task: Tuple[str, float, Optional[CodecSchedule], Tuple[int, ...], int, Optional[float]]) -> Row:
    scheme, rate, schedule, seeds, n_symbols, snr_db = task
    cfg = ModemConfig.from_preset(rate, scheme=scheme)
    values = []
    for seed in seeds:
        channel = ChannelConfig(codec=schedule, network=NetworkModel(seed=seed), snr_db=snr_db, seed=seed)

        def through(audio: AudioBuffer, channel: ChannelConfig = channel) -> AudioBuffer:
            return apply_channel(audio, channel)

        values.append(ser_test(cfg, n_symbols, through, seed))
    arr = np.asarray(values)
    return {
        "scheme": scheme,
        "rate_kbps": rate,
        **_schedule_fields(schedule),
        "seeds": len(seeds),
        "mean_ser": float(arr.mean()),
        "std_ser": float(arr.std()),
    }


def ser_sweep(
    rates: Sequence[float] = DEFAULT_RATES,
    schedules: Optional[Sequence[Optional[CodecSchedule]]] = None,
    seeds: Sequence[int] = tuple(range(5)),
    schemes: Sequence[str] = DEFAULT_SCHEMES,
    n_symbols: int = 2000,
    snr_db: Optional[float] = None,
    workers: Optional[int] = None,
) -> List[Row]:
    """
    Mean SER per (scheme, rate, schedule) cell

    Cells are independent and seeded, so `workers` > 1 (a process pool) gives
    the same table as a serial run.

    Args:
        rates: data-rate presets in kbps
        schedules: codec schedules; None entries are the identity channel
        seeds: one channel/symbol seed per repetition
        schemes: 'css' and/or 'fsk'
        n_symbols: random symbols per repetition
        snr_db: optional post-codec white noise
        workers: process count (serial when None or 1)
    """
    if schedules is None:
        schedules = default_schedules()
    for scheme in schemes:
        if scheme not in DEFAULT_SCHEMES:
            raise ConfigError(f"unknown scheme '{scheme}'")
    tasks = [
        (scheme, float(rate), schedule, tuple(int(s) for s in seeds), n_symbols, snr_db)
        for scheme in schemes
        for rate in rates
        for schedule in schedules
    ]
    logger.info("SER sweep: %d cells x %d seeds", len(tasks), len(seeds))
    if workers is not None and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, tasks))
    rows = []
    for task in tasks:
        row = _sweep_cell(task)
        logger.debug("%s %.1f kbps %s: SER %.4f", row["scheme"], row["rate_kbps"],
                     row["schedule"], row["mean_ser"])
        rows.append(row)
    return rows


# ========== Renderer experiments ==========

def _hand_split(dataset: PoseDataset, seed: int, train_fraction: float):
    train, test = dataset.split(train_fraction, shuffle=True, seed=seed)
    return (
        {side: train.hand_pairs(side) for side in Side},
        {side: test.hand_pairs(side) for side in Side},
    )


def _predict_all(model: PredictorModel, pairs) -> Tuple[np.ndarray, np.ndarray]:
    preds, targets = [], []
    for side in Side:
        x, y = pairs[side]
        if len(x):
            preds.append(model.predict(x, side))
            targets.append(y)
    return np.concatenate(preds), np.concatenate(targets)


def _stack_targets(pairs) -> Tuple[np.ndarray, np.ndarray]:
    return (
        np.concatenate([pairs[s][0] for s in Side]),
        np.concatenate([pairs[s][1] for s in Side]),
    )


def predictor_comparison(
    dataset: PoseDataset,
    cfg: Optional[TrainConfig] = None,
    noise: Optional[NoiseParams] = None,
    seeds: Sequence[int] = (0,),
    train_fraction: float = 0.8,
    canvas: Tuple[int, int] = DEFAULT_CANVAS,
) -> List[Row]:
    """
    Hand completion methods on held-out hands: interpolation, linear
    regression, MLP and (with `noise`) the noise-trained MLP

    Returns:
        One row per (method, seed) with MAE, MSE (pixels) and R^2
    """
    cfg = cfg or TrainConfig()
    rows: List[Row] = []
    for seed in seeds:
        train_pairs, test_pairs = _hand_split(dataset, seed, train_fraction)
        test_x, test_y = _stack_targets(test_pairs)
        if len(test_x) == 0:
            raise ConfigError("no fully visible hands in the test split")

        results = {"interpolation": (interpolate_hands(test_x), test_y)}

        preds = []
        for side in Side:
            lin = fit_linear_regression(*train_pairs[side])
            if len(test_pairs[side][0]):
                preds.append(np.clip(lin.predict(test_pairs[side][0]), 0.0, 1.0))
        results["regression"] = (np.concatenate(preds), test_y)

        seeded = replace(cfg, seed=seed)
        results["mlp"] = _predict_all(fit_predictor(train_pairs, seeded), test_pairs)
        if noise is not None:
            results["mlp_noise"] = _predict_all(
                fit_predictor(train_pairs, seeded, noise=noise), test_pairs
            )

        for method, (pred, target) in results.items():
            row = {"method": method, "seed": seed, **regression_metrics(pred, target, canvas)}
            logger.info("%-13s seed %d: MSE %.3f px^2", method, seed, row["mse"])
            rows.append(row)
    return rows


def noise_robustness(
    dataset: PoseDataset,
    noise: NoiseParams,
    cfg: Optional[TrainConfig] = None,
    displacements_px: Sequence[float] = DEFAULT_DISPLACEMENTS,
    seeds: Sequence[int] = (0,),
    train_fraction: float = 0.8,
    canvas: Tuple[int, int] = DEFAULT_CANVAS,
    keypoints: str = "excluded",
) -> List[Row]:
    """
    Predictor MSE when 1-2 transmitted joints are displaced by a fixed pixel
    distance, for a clean-trained and a noise-trained model

    `keypoints` selects the scored outputs: "excluded" (the joints the
    receiver never gets) or "all" 21.

    Returns:
        One row per (model, displacement, seed)
    """
    if keypoints not in KEYPOINT_SETS:
        raise ConfigError(f"keypoints must be one of {KEYPOINT_SETS}, got '{keypoints}'")
    columns = list(EXCLUDED_COLUMNS) if keypoints == "excluded" else slice(None)
    cfg = cfg or TrainConfig()
    rows: List[Row] = []
    for seed in seeds:
        train_pairs, test_pairs = _hand_split(dataset, seed, train_fraction)
        seeded = replace(cfg, seed=seed)
        models = {
            "clean": fit_predictor(train_pairs, seeded),
            "noise": fit_predictor(train_pairs, seeded, noise=noise),
        }
        for d in displacements_px:
            rng = np.random.default_rng(seed)
            perturbed = {}
            for side in Side:
                x, y = test_pairs[side]
                px = perturb_joints(x, (1, 2), d, canvas, rng) if len(x) and d > 0 else x
                perturbed[side] = (px, y)
            for name, model in models.items():
                pred, target = _predict_all(model, perturbed)
                row = {
                    "model": name,
                    "displacement_px": float(d),
                    "seed": seed,
                    "keypoints": keypoints,
                    **regression_metrics(pred[:, columns], target[:, columns], canvas),
                }
                logger.debug("%s model, %g px: MSE %.3f px^2", name, d, row["mse"])
                rows.append(row)
    return rows


def detector_comparison(
    dataset: PoseDataset,
    dims: Tuple[int, int] = (64, 16),
    n_components: int = 16,
    cfg: Optional[TrainConfig] = None,
    error_fraction: float = 0.20,
    seeds: Sequence[int] = (0,),
    train_fraction: float = 0.8,
) -> List[Row]:
    """
    Autoencoder against PCA on a labeled set built from the test split

    Returns:
        One row per (detector, seed) with accuracy, precision, recall, F1
        and the stored threshold
    """
    cfg = cfg or TrainConfig()
    rows: List[Row] = []
    for seed in seeds:
        train, test = dataset.split(train_fraction, shuffle=True, seed=seed)
        x_train = train.transmit_matrix()
        x_test = test.transmit_matrix()
        if len(x_train) == 0 or len(x_test) == 0:
            raise ConfigError("detector comparison needs complete poses in both splits")
        poses, labels = make_labeled_set(x_test, np.random.default_rng(seed), error_fraction)
        seeded = replace(cfg, seed=seed)
        detectors = {
            "autoencoder": fit_detector(x_train, dims, seeded),
            "pca": fit_pca_detector(x_train, n_components),
        }
        for name, det in detectors.items():
            flags, _ = det.detect(poses)
            scores = classification_metrics(flags, labels)
            rows.append({
                "detector": name,
                "seed": seed,
                "threshold": det.loss_threshold,
                **scores.to_dict(),
            })
            logger.info("%-11s seed %d: accuracy %.4f", name, seed, scores.accuracy)
    return rows


def mean_by(rows: Sequence[Row], keys: Sequence[str], values: Sequence[str]) -> List[Row]:
    """Average `values` over rows sharing the same `keys` (first-seen order)"""
    groups: Dict[Tuple, List[Row]] = {}
    for row in rows:
        groups.setdefault(tuple(row[k] for k in keys), []).append(row)
    out = []
    for key, members in groups.items():
        agg = dict(zip(keys, key))
        for v in values:
            vals = [m[v] for m in members if m.get(v) is not None]
            agg[v] = float(np.mean(vals)) if vals else None
        agg["n"] = len(members)
        out.append(agg)
    return out


def write_rows(rows: Sequence[Row], filepath: Union[str, Path]) -> None:
    """CSV for `.csv` paths, JSON otherwise"""
    path = Path(filepath)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".csv":
        fieldnames: List[str] = []
        for row in rows:
            fieldnames += [k for k in row if k not in fieldnames]
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: "" if row.get(k) is None else row.get(k) for k in fieldnames})
    else:
        path.write_text(json.dumps(list(rows), indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %d rows to %s", len(rows), path)
