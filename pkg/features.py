"""Per-window flow features: five base features (ACD, FFV, IBF, MFF, HIAD) and
the two fused features fed to the classifier (SFV, CDF)."""

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from config import (
    THETA1, THETA2, THETA3, THETA4, THETA5, THETA6, THETA7, THETA8, THETA9,
    WINDOW_SECONDS, LITERAL_PACKET_WEIGHT, FEATURES, FEATURE_COLUMNS,
)
from errors import DataError
from flows import FlowClasses, FlowWindow, classify_flows

logger = logging.getLogger(__name__)

CSV_HEADER = ("window",) + FEATURE_COLUMNS + ("label",)


@dataclass(frozen=True)
class Thresholds:
    """Feature weights (θ1, θ2), rate gates (θ3..θ9, events/s) and window length."""

    theta1: float = THETA1
    theta2: float = THETA2
    theta3: float = THETA3
    theta4: float = THETA4
    theta5: float = THETA5
    theta6: float = THETA6
    theta7: float = THETA7
    theta8: float = THETA8
    theta9: float = THETA9
    dt: float = WINDOW_SECONDS
    literal_packet_weight: bool = LITERAL_PACKET_WEIGHT

    def __post_init__(self):
        if not 0 < self.theta1 < 1:
            raise ValueError(f"theta1 must be in (0, 1), got {self.theta1}")
        if not 0 <= self.theta2 <= 1:
            raise ValueError(f"theta2 must be in [0, 1], got {self.theta2}")
        for i in range(3, 10):
            if not getattr(self, f"theta{i}") >= 0:
                raise ValueError(f"theta{i} must be >= 0")
        if not self.dt > 0:
            raise ValueError(f"window length must be > 0, got {self.dt}")

    def gate(self, x: float, theta: float) -> float:
        """x if its rate over the window exceeds theta, else 0."""
        return x if x / self.dt > theta else 0.0


@dataclass(frozen=True)
class FeatureVector:
    window_index: int
    acd: float
    ffv: float
    ibf: float
    mff: float
    hiad: float
    sfv: float
    cdf: float
    label: int | None = None  # +1 normal, -1 attack


def _ports(packets) -> int:
    return len({p.port for p in packets})


# ── Base features ─────────────────────────────────────────────


def acd(classes: FlowClasses, th: Thresholds) -> float:
    """Address correlation degree over the surviving ACS classes."""
    return sum(
        th.theta1 * _ports(pkts) + (1 - th.theta1) * len(pkts)
        for pkts in classes.acs.values()
    )


def ffv(classes: FlowClasses, th: Thresholds) -> float:
    """IP flow features value: sum of CIP over SDD classes, minus their count."""
    total = 0.0
    for pkts in classes.sdd.values():
        per_source: dict[str, int] = defaultdict(int)
        for p in pkts:
            per_source[p.src] += 1
        oa = sum(th.gate(n, th.theta3) for n in per_source.values())
        ob = th.gate(_ports(pkts) - 1, th.theta4)
        total += len(per_source) + th.theta2 * oa + (1 - th.theta2) * ob
    return total - len(classes.sdd)


def ibf(classes: FlowClasses, th: Thresholds) -> float:
    """Interaction behaviour feature: half-interaction asymmetry per interactive address."""
    s, d, m = len(classes.sh), len(classes.dh), len(classes.if_set)
    over_sh = sum(th.gate(_ports(pkts), th.theta5) for pkts in classes.sh.values())
    over_dh = sum(th.gate(_ports(pkts), th.theta5) for pkts in classes.dh.values())
    return (abs(s - d) + over_sh + over_dh) / (m + 1)


def _weight_packet(weight_sd: float, weight_sh: float, literal: bool) -> float:
    flag = 1.0 if weight_sd == 0 else 0.0
    if literal:
        return flag * weight_sd + weight_sd
    return flag * weight_sh + weight_sd


def mff(classes: FlowClasses, th: Thresholds) -> float:
    """Multi-feature fusion of SH count, abnormal port spread and abnormal packet counts."""
    s, m = len(classes.sh), len(classes.if_set)
    weight_sh = sum(th.gate(len(pkts), th.theta6) for pkts in classes.sh.values())
    weight_sd = sum(th.gate(len(pkts), th.theta7) for pkts in classes.sd.values())
    weight_port = sum(
        th.gate(_ports(pkts), th.theta8)
        for family in (classes.sh, classes.dh)
        for pkts in family.values()
    )
    weight_packet = _weight_packet(weight_sd, weight_sh, th.literal_packet_weight)
    return (s + weight_port + weight_packet) / (m + 1)


def hiad(classes: FlowClasses, th: Thresholds) -> float:
    """Half-interaction anomaly degree over HSD classes."""
    return sum(e.hn + th.gate(e.port_count, th.theta9) for e in classes.hsd.values())


# ── Fused features ────────────────────────────────────────────


def sfv(hiad_value: float, ffv_value: float) -> float:
    """Spoofed-source fusion of HIAD and FFV."""
    return math.sqrt(hiad_value / (ffv_value + 1)) * (hiad_value + ffv_value)


def cdf(acd_value: float, mff_value: float, ibf_value: float) -> float:
    """Flow-pattern fusion of ACD, MFF and IBF."""
    return math.sqrt(acd_value + mff_value) / 2 + math.log(ibf_value + 1)


def extract_window(window: FlowWindow, th: Thresholds, label: int | None = None) -> FeatureVector:
    """Classify one window's flows and compute all seven features."""
    classes = classify_flows(window)
    a, f, i, m, h = (
        acd(classes, th), ffv(classes, th), ibf(classes, th), mff(classes, th), hiad(classes, th)
    )
    return FeatureVector(
        window_index=window.index,
        acd=a, ffv=f, ibf=i, mff=m, hiad=h,
        sfv=sfv(h, f),
        cdf=cdf(a, m, i),
        label=label,
    )


def extract_series(
    windows: Sequence[FlowWindow],
    th: Thresholds,
    labels: Sequence[int] | None = None,
) -> list[FeatureVector]:
    """One feature vector per window, in window order."""
    if labels is not None and len(labels) < len(windows):
        raise DataError(f"{len(labels)} labels for {len(windows)} windows")
    series = [
        extract_window(w, th, labels[k] if labels is not None else None)
        for k, w in enumerate(windows)
    ]
    logger.info("extracted features for %d windows", len(series))
    return series


# ── Series helpers ────────────────────────────────────────────


def feature_matrix(
    series: Sequence[FeatureVector],
    names: Sequence[str] = FEATURES,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Stack the named features into an (n, k) matrix; labels as a vector if all known."""
    X = np.array([[getattr(v, name) for name in names] for v in series], dtype=float)
    X = X.reshape(len(series), len(names))
    labels = [v.label for v in series]
    y = None if any(lab is None for lab in labels) else np.array(labels, dtype=float)
    return X, y


def summarize_series(series: Sequence[FeatureVector], names: Sequence[str] = ("sfv", "cdf")) -> dict:
    """Per-label mean/std of each feature and the gap in pooled standard deviations."""
    summary = {}
    for name in names:
        normal = np.array([getattr(v, name) for v in series if v.label == 1], dtype=float)
        attack = np.array([getattr(v, name) for v in series if v.label == -1], dtype=float)
        row = {
            "normal_mean": float(normal.mean()) if normal.size else math.nan,
            "normal_std": float(normal.std()) if normal.size else math.nan,
            "attack_mean": float(attack.mean()) if attack.size else math.nan,
            "attack_std": float(attack.std()) if attack.size else math.nan,
        }
        pooled = math.sqrt((row["normal_std"] ** 2 + row["attack_std"] ** 2) / 2)
        gap = row["attack_mean"] - row["normal_mean"]
        row["separation"] = gap / pooled if pooled > 0 else (math.inf if gap > 0 else math.nan)
        summary[name] = row
    return summary


# ── CSV I/O ───────────────────────────────────────────────────


def save_features(series: Iterable[FeatureVector], out_path: Path) -> Path:
    """Write the feature series as CSV (label column blank when unknown)."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(out_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for v in series:
            row = asdict(v)
            writer.writerow(
                [v.window_index]
                + [repr(float(row[c])) for c in FEATURE_COLUMNS]
                + ["" if v.label is None else v.label]
            )
            count += 1
    logger.info("saved %d feature rows to %s", count, out_path)
    return out_path


def load_features(path: Path) -> list[FeatureVector]:
    """Read a feature CSV written by save_features; bad rows raise DataError."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature file {path} not found")
    series = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = [float(x) for x in row[1:8]]
                label = row[8].strip() if len(row) > 8 else ""
                label = int(label) if label else None
                if label not in (None, 1, -1):
                    raise ValueError(f"label must be 1 or -1, got {label}")
                series.append(FeatureVector(int(row[0]), *values, label=label))
            except (ValueError, IndexError) as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
    return series
