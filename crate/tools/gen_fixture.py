#!/usr/bin/env python3
"""Generates the bundled synthetic three-subject dataset.

Three drivers share one rural route with four marked curves. Their lane
behavior is scripted so the pipeline produces a spread of trajectory
classes: s01 cuts curves, s02 stays centered, s03 drifts outward. The
questionnaire cohort is larger (45 respondents) so regression-based
factor scoring has enough subjects; only s01..s03 also drove.

Deterministic: fixed seed, pure stdlib. Rerunning overwrites in place.
"""

import csv
import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "fixtures" / "dataset"
RATE = 50.0
T_END = 80.0
SEED = 20240817

# curve plan: (t_start, t_end, kappa) with 1.5 s entry/exit ramps
CURVES = [
    (10.0, 20.0, 0.005),
    (30.0, 38.0, -0.006),
    (48.0, 58.0, 0.004),
    (64.0, 72.0, -0.005),
]
RAMP = 1.5

# per-subject deviation habit inside each curve (inner-positive, meters):
# amplitude and shape phase along the curve.
SUBJECTS = {
    # cuts every curve around the apex
    "s01": [(0.55, "mid"), (0.50, "mid"), (0.45, "early"), (0.50, "late")],
    # disciplined center driving
    "s02": [(0.05, "mid"), (0.06, "mid"), (0.05, "early"), (0.04, "late")],
    # pushed outward, late
    "s03": [(-0.50, "late"), (-0.45, "mid"), (-0.40, "late"), (-0.55, "mid")],
}

# context flags on straights: (t_start, t_end, kind)
FLAGS = {
    "s01": [(24.0, 25.5, "lane_change"), (60.0, 61.0, "oncoming")],
    "s02": [(4.0, 5.2, "oncoming")],
    "s03": [(41.0, 42.4, "lane_change")],
}


def kappa_at(t: float) -> float:
    for (t0, t1, k) in CURVES:
        if t0 - RAMP <= t < t0:
            return k * (t - (t0 - RAMP)) / RAMP
        if t0 <= t < t1:
            return k
        if t1 <= t < t1 + RAMP:
            return k * (1.0 - (t - t1) / RAMP)
    return 0.0


def speed_at(t: float) -> float:
    return 18.0 + 1.5 * math.sin(2.0 * math.pi * t / 40.0)


def curve_shape(frac: float, shape: str) -> float:
    """Deviation profile along a curve, in [0, 1] of curve time."""
    if shape == "mid":
        return math.sin(math.pi * frac) ** 2
    if shape == "early":
        return math.exp(-((frac - 0.18) / 0.16) ** 2)
    if shape == "late":
        return math.exp(-((frac - 0.82) / 0.16) ** 2)
    raise ValueError(shape)


def dev_at(subject: str, t: float) -> float:
    for (idx, (t0, t1, k)) in enumerate(CURVES):
        if t0 <= t < t1:
            amp, shape = SUBJECTS[subject][idx]
            inner = amp * curve_shape((t - t0) / (t1 - t0), shape)
            # inner-positive -> left-positive d_CL: +dev on left curves
            return inner if k > 0 else -inner
    return 0.0


def write_trace(subject: str, rng: random.Random) -> None:
    path = ROOT / "traces" / f"{subject}.csv"
    n = int(T_END * RATE) + 1
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["t", "vx", "ax", "ay", "dcl", "kappa", "road", "lane_change", "oncoming", "street"]
        )
        smooth_noise = 0.0
        for i in range(n):
            t = i / RATE
            v = speed_at(t)
            k = kappa_at(t)
            dv = (speed_at(t + 0.01) - speed_at(t - 0.01)) / 0.02
            # AR(1) lane wander with stationary SD ~0.15 m
            smooth_noise = 0.97 * smooth_noise + rng.gauss(0.0, 0.0366)
            a_x = dv + rng.gauss(0.0, 0.05)
            a_y = k * v * v + rng.gauss(0.0, 0.08)
            d_cl = dev_at(subject, t) + smooth_noise
            lane_change = any(
                a <= t < b for (a, b, kind) in FLAGS[subject] if kind == "lane_change"
            )
            oncoming = any(
                a <= t < b for (a, b, kind) in FLAGS[subject] if kind == "oncoming"
            )
            w.writerow(
                [
                    f"{t:.3f}",
                    f"{v:.4f}",
                    f"{a_x:.4f}",
                    f"{a_y:.4f}",
                    f"{d_cl:.4f}",
                    f"{k:.6f}",
                    "rural",
                    int(lane_change),
                    int(oncoming),
                    "L100",
                ]
            )


# six-factor trait model for the questionnaire: item -> (factor, reversed)
ITEMS = {
    "angry": ([43, 3, 28, 12, 17, 2], [13]),
    "risky": ([44, 22, 24, 6, 29], []),
    "anxious": ([31, 10, 25, 33], [40, 4, 41, 8]),
    "dissociative": ([35, 27, 39, 36, 34, 20, 21, 5, 19], []),
    "careful": ([42, 14, 23, 7], []),
    "distress_reduction": ([1, 37, 26, 11], []),
}


def write_questionnaire(rng: random.Random) -> None:
    subjects = [f"s{i:02d}" for i in range(1, 4)] + [f"q{i:02d}" for i in range(4, 46)]
    item_ids = sorted({i for straight, rev in ITEMS.values() for i in straight + rev})

    with (ROOT / "responses.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id"] + [f"item_{i}" for i in item_ids])
        for subject in subjects:
            traits = {factor: rng.uniform(1.5, 5.5) for factor in ITEMS}
            answers = {}
            for factor, (plain, reversed_) in ITEMS.items():
                for item in plain:
                    raw = traits[factor] + rng.gauss(0.0, 0.9)
                    answers[item] = min(6, max(1, round(raw)))
                for item in reversed_:
                    raw = traits[factor] + rng.gauss(0.0, 0.9)
                    answers[item] = 7 - min(6, max(1, round(raw)))
            w.writerow([subject] + [answers[i] for i in item_ids])

    with (ROOT / "profiles.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject_id", "age", "gender", "license_years", "annual_mileage_band"])
        for subject in subjects:
            age = rng.randint(19, 68)
            gender = rng.choice(["female", "male"])
            w.writerow([subject, age, gender, max(1, age - 18 - rng.randint(0, 4)), "10-15k"])


SCHEMA = """\
# Column mapping for the bundled synthetic dataset.
sample_rate_hz = 50.0
max_lane_width_m = 5.0
gap_split_s = 0.5

[columns]
t = "t"
v_x = "vx"
a_x = "ax"
a_y = "ay"
d_cl = "dcl"
kappa = "kappa"
road_type = "road"
lane_change = "lane_change"
oncoming = "oncoming"
street_id = "street"
"""

RUN_CONFIG = """\
# Run configuration for the bundled synthetic dataset.
dataset_root = "dataset"
reference_subject = "s01"
out_dir = "out"
seed = 7
agg = "both"

[params]
resample_rate_hz = 50.0
tau_kappa = 0.002
"""


def main() -> None:
    (ROOT / "traces").mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)
    for subject in sorted(SUBJECTS):
        write_trace(subject, random.Random(rng.random()))
    write_questionnaire(rng)
    (ROOT / "schema.toml").write_text(SCHEMA)
    (ROOT.parent / "run.toml").write_text(RUN_CONFIG)
    print(f"fixture written under {ROOT}")


if __name__ == "__main__":
    main()
