"""Per-run regret records and their CSV / JSON forms."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np


def fmt(x) -> str:
    """Render a number with 17 significant digits (exact float round trip)."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class RunResult:
    """Outcome of one seeded learning run.

    ``diagnostics`` maps a column name to an array of shape (K,) or (K, H);
    two-dimensional entries expand to ``name_h1 .. name_hH`` in CSV output.
    """

    algorithm: str
    seed: int
    config: dict
    gaps: np.ndarray
    optimism: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    v_star: float = float("nan")
    wall_clock: float = 0.0
    extras: dict = field(default_factory=dict, repr=False)    # in-memory only, never emitted

    @property
    def num_episodes(self) -> int:
        return int(self.gaps.shape[0])

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.gaps)

    @property
    def regret(self) -> float:
        return float(self.gaps.sum())

    def columns(self) -> list:
        cols = ["seed", "episode", "gap", "cum_regret", "optimism_flag"]
        for name, arr in self.diagnostics.items():
            if np.ndim(arr) == 2:
                cols += [f"{name}_h{j + 1}" for j in range(arr.shape[1])]
            else:
                cols.append(name)
        return cols

    def rows(self):
        cum = self.cum_regret
        for k in range(self.num_episodes):
            row = [self.seed, k + 1, self.gaps[k], cum[k], self.optimism[k]]
            for arr in self.diagnostics.values():
                if np.ndim(arr) == 2:
                    row += list(arr[k])
                else:
                    row.append(arr[k])
            yield [fmt(v) for v in row]

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "config": self.config,
            "v_star": self.v_star,
            "gaps": self.gaps.tolist(),
            "cum_regret": self.cum_regret.tolist(),
            "optimism": [bool(b) for b in self.optimism],
            "diagnostics": {k: np.asarray(v).tolist() for k, v in self.diagnostics.items()},
        }
        if include_timing:
            out["wall_clock"] = self.wall_clock
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunResult":
        diags = {}
        for k, v in data.get("diagnostics", {}).items():
            arr = np.asarray(v)
            if arr.dtype == object:
                raise ValueError(f"ragged diagnostic column {k}")
            diags[k] = arr
        return cls(
            algorithm=data["algorithm"],
            seed=int(data["seed"]),
            config=data.get("config", {}),
            gaps=np.asarray(data["gaps"], dtype=float),
            optimism=np.asarray(data["optimism"], dtype=bool),
            diagnostics=diags,
            v_star=float(data.get("v_star", float("nan"))),
            wall_clock=float(data.get("wall_clock", 0.0)),
        )


DEFAULT_COLUMNS = ["seed", "episode", "gap", "cum_regret", "optimism_flag"]


def results_to_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = results[0].columns() if results else DEFAULT_COLUMNS
    writer.writerow(header)
    for res in results:
        if res.columns() != header:
            raise ValueError("cannot mix runs with different diagnostic columns in one CSV")
        writer.writerows(res.rows())
    return buf.getvalue()


def results_to_json(results, include_timing: bool = False) -> str:
    return json.dumps([r.to_dict(include_timing) for r in results], indent=1)


def results_from_json(text: str) -> list:
    data = json.loads(text)
    if isinstance(data, dict):
        data = [data]
    return [RunResult.from_dict(d) for d in data]
