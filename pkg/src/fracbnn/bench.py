"""Throughput benchmark: packed engine (every available backend) against
the dense oracle on the same model and images."""

from __future__ import annotations

from dataclasses import dataclass
from time import perf_counter

import numpy as np

from . import backend, model, oracle
from .images import synthetic_images
from .model import LoadedModel


@dataclass(frozen=True)
class LaneResult:
    name: str
    iterations: int
    seconds_per_image: float
    images_per_second: float
    layer_seconds: tuple  # ((layer name, mean seconds), ...)


@dataclass(frozen=True)
class BenchReport:
    lanes: tuple[LaneResult, ...]
    threads: int

    def lane(self, name: str) -> LaneResult:
        for lane in self.lanes:
            if lane.name == name:
                return lane
        raise KeyError(name)

    @property
    def speedup_vs_oracle(self) -> float:
        """Packed engine (preferred backend) throughput over the dense oracle."""
        engine = self.lanes[0]
        return self.lane("oracle").seconds_per_image / engine.seconds_per_image

    def to_dict(self) -> dict:
        return {
            "schema": "fracbnn.bench/1",
            "threads": self.threads,
            "speedup_vs_oracle": round(self.speedup_vs_oracle, 3),
            "lanes": [
                {
                    "name": lane.name,
                    "iterations": lane.iterations,
                    "seconds_per_image": lane.seconds_per_image,
                    "images_per_second": round(lane.images_per_second, 3),
                    "layers": [
                        {"name": n, "seconds": s} for n, s in lane.layer_seconds
                    ],
                }
                for lane in self.lanes
            ],
        }


def _aggregate_layers(all_timings: list[list]) -> tuple:
    if not all_timings:
        return ()
    names = [n for n, _ in all_timings[0]]
    sums = np.zeros(len(names))
    for run in all_timings:
        sums += [s for _, s in run]
    return tuple((n, float(s / len(all_timings))) for n, s in zip(names, sums))


def _time_lane(fn, images, iterations: int):
    timings_runs = []
    start = perf_counter()
    for i in range(iterations):
        layer_times: list = []
        fn(images[i % len(images)], layer_times)
        timings_runs.append(layer_times)
    elapsed = perf_counter() - start
    per_image = elapsed / iterations
    return per_image, _aggregate_layers(timings_runs)


def run(loaded: LoadedModel, iterations: int = 10, threads: int = 1,
        image_seed: int = 0, oracle_iterations: int | None = None) -> BenchReport:
    """Benchmark forward throughput.

    Lanes: each available engine backend (preferred first), then the dense
    oracle.  All lanes run the same synthetic images; one warmup forward
    per lane is excluded from timing.
    """
    images = synthetic_images(image_seed, min(8, max(2, iterations)),
                              loaded.spec.height, loaded.spec.width)
    if oracle_iterations is None:
        oracle_iterations = max(1, min(iterations, 3))

    lanes = []
    for backend_name in backend.available_backends():
        with backend.use(backend_name):
            model.forward(loaded, images[0], threads=threads)  # warmup
            per_image, layers = _time_lane(
                lambda img, t: model.forward(loaded, img, threads=threads, timings=t),
                images, iterations)
        lanes.append(LaneResult(f"engine[{backend_name}]", iterations, per_image,
                                1.0 / per_image, layers))

    oracle.forward(loaded, images[0])  # warmup
    per_image, layers = _time_lane(
        lambda img, t: oracle.forward(loaded, img, timings=t),
        images, oracle_iterations)
    lanes.append(LaneResult("oracle", oracle_iterations, per_image,
                            1.0 / per_image, layers))
    return BenchReport(tuple(lanes), threads)
