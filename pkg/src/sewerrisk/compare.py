"""Six-model experiment matrix and the comparison metrics between models."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .analysis import CapacityBasis
from .damage import DamageModel
from .hydraulics.routing import SolverConfig
from .montecarlo import ALL_MODELS, ConvergenceConfig, ModelRunResult, ModelSpec, run_model
from .network import Network

BASELINE = "DF"
PAIRS = (("KF", "CF"), ("KA", "CA"), ("DF", "CF"))
SCATTER_PAIRS = (("DF", "KF"), ("DF", "CF"), ("DF", "DA"), ("DF", "KA"), ("DF", "CA"),
                 ("KF", "CF"), ("KA", "CA"), ("KF", "KA"), ("CF", "CA"))
SCATTER_HEADER = ("node_id", "pm_baseline", "pm_model")


class ModelRunError(RuntimeError):
    def __init__(self, model: str, cause: Exception):
        super().__init__(f"model {model} failed: {cause}")
        self.model = model
        self.cause = cause


def _means(estimates: Mapping[str, object]) -> dict[str, float]:
    return {k: float(getattr(v, "mean", v)) for k, v in estimates.items()}


def mae(a: Mapping[str, object], b: Mapping[str, object]) -> float:
    """Mean absolute PM difference over a shared node set.

    Values may be plain numbers or NodePmEstimate objects.
    """
    ma, mb = _means(a), _means(b)
    if ma.keys() != mb.keys():
        only = sorted(ma.keys() ^ mb.keys())
        raise ValueError(f"estimates cover different nodes (e.g. {only[:5]})")
    if not ma:
        raise ValueError("no nodes to compare")
    return math.fsum(abs(ma[k] - mb[k]) for k in ma) / len(ma)


def average_pm(estimates: Mapping[str, object]) -> float:
    m = _means(estimates)
    if not m:
        raise ValueError("no estimates")
    return math.fsum(m.values()) / len(m)


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass
class ComparisonReport:
    """Metrics of one experiment matrix.  Timing fields are kept apart from the rest."""

    node_ids: tuple[str, ...]
    results: dict[str, ModelRunResult]
    crn: bool
    seed: int
    concurrent: bool = False
    average: dict[str, float] = field(init=False)
    mae_vs_baseline: dict[str, float] = field(init=False)
    pairwise: dict[tuple[str, str], float] = field(init=False)

    def __post_init__(self):
        est = {m: {n: r.estimates[n] for n in self.node_ids} for m, r in self.results.items()}
        self.average = {m: average_pm(e) for m, e in est.items()}
        base = est.get(BASELINE)
        self.mae_vs_baseline = {m: mae(base, e) for m, e in est.items()} if base else {}
        self.pairwise = {(a, b): mae(est[a], est[b]) for a, b in PAIRS
                         if a in est and b in est}

    @property
    def models(self) -> tuple[str, ...]:
        return tuple(self.results)

    def pm_table(self) -> np.ndarray:
        """Node-by-model PM matrix (rows follow `node_ids`, columns `models`)."""
        return np.array([[self.results[m].estimates[n].mean for m in self.models]
                         for n in self.node_ids])

    def time_per_simulation(self) -> dict[str, float]:
        return {m: r.time_per_simulation for m, r in self.results.items()}

    def key_values(self) -> str:
        lines = [f"seed={self.seed}", f"crn={'on' if self.crn else 'off'}",
                 f"baseline={BASELINE}", f"nodes={len(self.node_ids)}"]
        for m, r in self.results.items():
            lines += [f"{m}.average_pm={_fmt(self.average[m])}",
                      f"{m}.n_simulations={r.n_simulations}",
                      f"{m}.average_delta={_fmt(r.average_delta)}",
                      f"{m}.converged={str(r.converged).lower()}"]
            if m in self.mae_vs_baseline:
                lines.append(f"{m}.mae_vs_{BASELINE}={_fmt(self.mae_vs_baseline[m])}")
        for (a, b), v in self.pairwise.items():
            lines.append(f"mae.{a}.{b}={_fmt(v)}")
        return "\n".join(lines) + "\n"

    def timing_key_values(self) -> str:
        lines = [f"timings_reliable={str(not self.concurrent).lower()}"]
        for m, r in self.results.items():
            lines += [f"{m}.total_time_s={r.total_time:.3g}",
                      f"{m}.time_per_simulation_s={r.time_per_simulation:.3g}"]
        return "\n".join(lines) + "\n"

    def text(self, timings: bool = True) -> str:
        head = f"{'model':<6}{'avg PM':>10}{'MAE vs ' + BASELINE:>12}{'N':>8}{'avg delta':>11}"
        rows = [f"seeds: master {self.seed}, common random numbers "
                f"{'on' if self.crn else 'off'}", "", head]
        for m, r in self.results.items():
            err = self.mae_vs_baseline.get(m, float("nan"))
            rows.append(f"{m:<6}{self.average[m]:>10.4f}{err:>12.4f}{r.n_simulations:>8}"
                        f"{r.average_delta:>11.4f}" + ("" if r.converged else "  (cap hit)"))
        if self.pairwise:
            rows += ["", "pairwise MAE:"]
            rows += [f"  {a} vs {b}: {v:.4f}" for (a, b), v in self.pairwise.items()]
        if not timings:
            return "\n".join(rows) + "\n"
        rows += ["", "timings" + ("" if not self.concurrent else
                                  " (models ran concurrently; not comparable)") + ":"]
        for m, r in self.results.items():
            rows.append(f"  {m}: {r.time_per_simulation:.3g} s/simulation, "
                        f"{r.total_time:.3g} s total")
        return "\n".join(rows) + "\n"

    def scatter_csv(self, baseline: str, model: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SCATTER_HEADER)
        b, m = self.results[baseline].estimates, self.results[model].estimates
        for n in self.node_ids:
            w.writerow([n, _fmt(b[n].mean), _fmt(m[n].mean)])
        return buf.getvalue()

    def scatter_pairs(self) -> list[tuple[str, str]]:
        return [(a, b) for a, b in SCATTER_PAIRS if a in self.results and b in self.results]


def run_matrix(network: Network, damage: DamageModel | None = None,
               config: SolverConfig | None = None, conv: ConvergenceConfig | None = None,
               seed: int = 0, *, crn: bool = False, workers: int = 1,
               models: Sequence[ModelSpec] = ALL_MODELS,
               basis: CapacityBasis = CapacityBasis.EFFECTIVE, concurrent: bool = False,
               on_result: Callable[[ModelRunResult], None] | None = None) -> ComparisonReport:
    """Run every model in `models` and compare them on the full node set.

    Models run one after another unless `concurrent` is set, in which case
    they share a process pool and their timings are flagged as unreliable.
    `on_result` sees each finished model, so callers can keep partial output
    when a later model fails.
    """
    kwargs = dict(damage=damage, config=config, conv=conv, master_seed=seed, crn=crn,
                  basis=basis)
    results: dict[str, ModelRunResult] = {}
    if concurrent and len(models) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=len(models)) as pool:
            futures = [(s, pool.submit(run_model, network, s, **kwargs)) for s in models]
            errors = []
            for spec, fut in futures:
                try:
                    results[spec.name] = fut.result()
                except Exception as exc:  # keep the others; report after
                    errors.append(ModelRunError(spec.name, exc))
                    continue
                if on_result:
                    on_result(results[spec.name])
            if errors:
                raise errors[0]
    else:
        for spec in models:
            try:
                res = run_model(network, spec, workers=workers, **kwargs)
            except Exception as exc:
                raise ModelRunError(spec.name, exc) from exc
            results[spec.name] = res
            if on_result:
                on_result(res)
    return ComparisonReport(tuple(network.nodes), results, crn, seed, concurrent)

