"""
Fast in-process checks run by `selftest`: the optimised statistics against
the loop oracles, the defining invariances, gradient agreement with central
differences and a dump round trip.
"""
from __future__ import annotations

import logging
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from dcornet import reference
from dcornet.dcor_core import dcor, pairwise_distances
from dcornet.diffgrad import dcor_loss, finite_diff_check, pdcor_loss
from dcornet.dump import build_dump, read_dump, write_dump
from dcornet.pdc import pdcor, pdcov, u_center, u_inner
from dcornet.utils import make_rng

logger = logging.getLogger(__name__)

SELFTEST_SEED = 20221


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rel(a: float, b: float, scale: float = 1.0) -> float:
    return abs(a - b) / max(abs(b), scale)


def _oracle_dcor(rng) -> str:
    worst = 0.0
    for _ in range(20):
        n, p, q = rng.integers(2, 24), rng.integers(1, 6), rng.integers(1, 6)
        x, y = rng.standard_normal((n, p)), rng.standard_normal((n, q))
        worst = max(worst, _rel(dcor(x, y).dcor, reference.naive_dcor(x, y)))
    assert worst < 1e-12, worst
    return f"max relative error {worst:.2e}"


def _oracle_partial(rng) -> str:
    worst = 0.0
    for _ in range(20):
        n = rng.integers(4, 20)
        x, y, z = (rng.standard_normal((n, rng.integers(1, 5))) for _ in range(3))
        a, b = u_center(pairwise_distances(x)), u_center(pairwise_distances(y))
        scale = np.sqrt(u_inner(a, a) * u_inner(b, b))
        worst = max(worst,
                    _rel(u_inner(a, b), reference.naive_u_inner(a.At, b.At), scale),
                    _rel(pdcov(x, y, z), reference.naive_pdcov(x, y, z), scale),
                    _rel(pdcor(x, y, z).pdcor2, reference.naive_pdcor(x, y, z)))
    assert worst < 1e-12, worst
    return f"max relative error {worst:.2e}"


def _invariances(rng) -> str:
    x, y = rng.standard_normal((40, 3)), rng.standard_normal((40, 2))
    base = dcor(x, y).dcor
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    moved = dcor(2.5 * x @ q + 7.0, y - 3.0).dcor
    assert abs(dcor(x, x).dcor - 1.0) < 1e-12
    assert abs(moved - base) < 1e-9, (moved, base)
    assert dcor(x, y).dcor == dcor(y, x).dcor
    assert abs(pdcov(x, y, x)) < 1e-12
    return f"dcor={base:.6f}"


def _gradients(rng) -> str:
    x, y, z = (rng.standard_normal((12, 3)) for _ in range(3))
    worst = max(finite_diff_check(dcor_loss(y), x), finite_diff_check(pdcor_loss(y, z), x))
    assert worst < 1e-6, worst
    return f"max discrepancy {worst:.2e}"


def _dump_round_trip(rng) -> str:
    dump = build_dump("selftest", {"h1": rng.standard_normal((8, 3)),
                                   "h2": rng.standard_normal((8, 5)).astype(np.float32)},
                      dtype="f32")
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "roundtrip.dcfd"
        write_dump(path, dump)
        back = read_dump(path)
    for name in dump.layer_names:
        assert back.arrays[name].tobytes() == dump.arrays[name].tobytes(), name
    assert back.layers == dump.layers and back.sample_ids == dump.sample_ids
    return f"{len(dump.layers)} layers"


CHECKS: List[tuple] = [
    ("dcor matches loop oracle", _oracle_dcor),
    ("u-statistics match loop oracle", _oracle_partial),
    ("invariances", _invariances),
    ("gradients match central differences", _gradients),
    ("dump round trip", _dump_round_trip),
]


def run_selftest(seed: int = SELFTEST_SEED) -> List[CheckResult]:
    results = []
    for i, (name, check) in enumerate(CHECKS):
        rng = make_rng(seed, i)
        try:
            detail = check(rng)
            results.append(CheckResult(name, True, detail))
        except AssertionError as exc:
            results.append(CheckResult(name, False, f"failed: {exc}"))
        logger.debug("selftest %s: %s", name, results[-1].detail)
    return results
