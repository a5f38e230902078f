"""
Acceptance suite. Each test is named ``test_criterion_<N>_...``; the conftest
hook folds the outcomes into one PASS/FAIL line per criterion.
"""

import hashlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from zerobias.bench import CoverageModel, ExperimentSpec, coverage_monte_carlo, coverage_probability
from zerobias.cli import main
from zerobias.core import RandomStream
from zerobias.engines import Stage, stoa_spiral, tsa_move_factor, tsa_swarm
from zerobias.lab import (
    AuditProtocol,
    angle_channel,
    arcsine_l1,
    density_at,
    estimate_density,
    sine_of_uniform_samples,
    stage_audit,
    theta_peak_locations,
)

SEED = 20250101
EXPERIMENTS = Path(__file__).resolve().parent.parent / "experiments"


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def circular_distance(a, b):
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def test_criterion_1_arcsine_density():
    with Clock() as clock:
        density = estimate_density(sine_of_uniform_samples(RandomStream(SEED), 10**6), -1.0, 1.0, 0.01)
        l1, _ = arcsine_l1(density, 0.99)
        at_zero = density_at(density, 0.0)
    print(f"L1 = {l1:.5f}, density(0) = {at_zero:.5f}, {clock.elapsed:.2f} s")
    assert l1 <= 0.02
    assert abs(at_zero - 0.3183) <= 0.01
    assert clock.elapsed < 5


def test_criterion_2_spiral_bound():
    with Clock() as clock:
        rho = stoa_spiral(RandomStream(SEED), 10**6).rho
    print(f"rho in [{rho.min():.6f}, {rho.max():.6f}], {clock.elapsed:.2f} s")
    assert rho.min() >= 0.00186
    assert rho.max() <= 1.0
    # the uncorrected sign would scale the spiral by up to exp(+2 pi)
    assert math.exp(2 * math.pi) == pytest.approx(535.49, abs=0.01)
    assert clock.elapsed < 2


@pytest.mark.parametrize("channel,targets", [
    ("sin", (math.pi / 2, 3 * math.pi / 2)),
    ("cos", (0.0, math.pi)),
])
def test_criterion_3_peak_locations(channel, targets):
    with Clock() as clock:
        peaks = theta_peak_locations(angle_channel(RandomStream(SEED), 10**6, channel, 0.01))
    print(f"{channel} peaks at {peaks}, {clock.elapsed:.2f} s")
    assert len(peaks) == len(targets)
    for target in targets:
        assert min(circular_distance(p, target) for p in peaks) <= 0.02
    assert clock.elapsed < 5


@pytest.mark.parametrize("stage", [Stage.STOA_UPDATE, Stage.TSA_SWARM])
def test_criterion_4_zero_concentration(stage):
    protocol = AuditProtocol(samples=10**6, span_lo=-100, span_hi=100, resolution=1, window=1, seed=SEED)
    with Clock() as clock:
        _, report = stage_audit(stage, protocol)
    print(f"{stage.value}: concentration ratio {report.concentration_ratio:.4f}, {clock.elapsed:.2f} s")
    assert clock.elapsed < 30
    assert report.concentration_ratio >= 5


def test_criterion_5_swarm_contraction():
    s = RandomStream(SEED)
    x = s.uniform(-100, 100, 10**5)
    r3 = s.random(10**5)
    y = np.abs(tsa_swarm(x, r3=r3))
    violations = np.count_nonzero((y < np.abs(x) / 2) | (y > np.abs(x)))
    mean = float(np.mean(1.0 / (1.0 + s.random(10**6))))
    print(f"violations = {violations}, E[1/(1+r3)] = {mean:.5f}")
    assert violations == 0
    assert abs(mean - math.log(2)) <= 0.001


@pytest.mark.parametrize("ratio,t,expected", [(0.5, 1, 0.5), (0.5, 2, 0.75), (0.01, 100, 1 - 0.99**100)])
def test_criterion_6_coverage(ratio, t, expected):
    closed = coverage_probability(CoverageModel(ratio, max(t, 1)), t)
    assert abs(closed - expected) <= 1e-12
    trials = 10**6
    mc = coverage_monte_carlo(ratio, t, trials, RandomStream(SEED))
    sigma = math.sqrt(closed * (1 - closed) / trials)
    print(f"P = {closed:.12f}, MC = {mc:.6f}, 3 sigma = {3 * sigma:.6f}")
    assert abs(mc - closed) <= 3 * sigma


@pytest.fixture(scope="module")
def bench_timer():
    return {"elapsed": 0.0}


@pytest.mark.parametrize("name,expected", [
    ("stoa_sphere.json", "BIASED"),
    ("tsa_sphere.json", "BIASED"),
    ("random_sphere.json", "INCONCLUSIVE"),
])
def test_criterion_7_benchmark_verdict(name, expected, bench_timer):
    spec = ExperimentSpec.from_json((EXPERIMENTS / name).read_text())
    assert (spec.problem, spec.D, spec.N, spec.T, spec.runs, spec.shift) == ("sphere", 10, 30, 500, 30, 50.0)
    with Clock() as clock:
        _, _, verdict = spec.run(SEED)
    bench_timer["elapsed"] += clock.elapsed
    print(f"{spec.engine}: {verdict.verdict}, degradation {verdict.degradation:.4g}, p {verdict.p_value:.3g}, "
          f"cumulative {bench_timer['elapsed']:.1f} s")
    assert verdict.verdict == expected
    if expected == "BIASED":
        assert verdict.degradation > 10 and verdict.p_value < 0.01
    assert bench_timer["elapsed"] < 60


def _digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(directory).iterdir())}


@pytest.mark.parametrize("argv", [
    ["audit", "--samples", "20000"],
    ["pdf", "sin"],
    ["pdf", "arcsine-analytic"],
    ["coverage", "0.01", "100"],
    ["bench", "{small}"],
    ["trace", str(EXPERIMENTS / "engine_config.json"), "--engine", "stoa"],
])
def test_criterion_8_determinism(tmp_path, argv):
    small = tmp_path / "small.json"
    small.write_text(json.dumps({"engine": "tsa", "D": 4, "N": 10, "T": 50, "runs": 5}))
    argv = [a.format(small=small) for a in argv]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    first, second = _digest(tmp_path / "a"), _digest(tmp_path / "b")
    assert first and first == second


def test_criterion_9_move_factor_sign_split():
    a = tsa_move_factor(RandomStream(SEED), 10**6)
    share = float(np.mean(a < 0))
    print(f"P(a < 0) = {share:.5f}")
    assert abs(share - 1 / 3) <= 0.003
