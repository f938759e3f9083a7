"""The metric x horizon x scheme x seed training grid."""

from dataclasses import dataclass
from itertools import product
from typing import Any, Dict, List, Sequence, Tuple

from action_signal.config.schema import HORIZONS, METRICS, SCHEMES, GridConfig


@dataclass(frozen=True)
class GridCell:
    """One dynamics model of the grid."""

    metric: str
    horizon: int
    scheme: str
    seed: int

    @property
    def name(self) -> str:
        """Directory name of the cell, e.g. ``SOFA_12h_StatesOnly_s0``."""
        return f"{self.metric}_{self.horizon}h_{self.scheme}_s{self.seed}"

    @property
    def target(self) -> Tuple[str, int]:
        return self.metric, self.horizon

    def sort_key(self) -> Tuple[int, int, int, int]:
        return (
            METRICS.index(self.metric),
            HORIZONS.index(self.horizon),
            SCHEMES.index(self.scheme),
            self.seed,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "metric": self.metric,
            "horizon": self.horizon,
            "scheme": self.scheme,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridCell":
        return cls(
            str(data["metric"]), int(data["horizon"]), str(data["scheme"]), int(data["seed"])
        )


@dataclass(frozen=True)
class ExperimentGrid:
    """Cartesian product of the requested grid axes."""

    metrics: Tuple[str, ...] = METRICS
    horizons: Tuple[int, ...] = HORIZONS
    schemes: Tuple[str, ...] = SCHEMES
    seeds: Tuple[int, ...] = (0, 1, 2)

    @classmethod
    def from_config(cls, config: GridConfig) -> "ExperimentGrid":
        config.validate()
        # Axis order follows the canonical constants, not the request order
        return cls(
            metrics=tuple(m for m in METRICS if m in config.metrics),
            horizons=tuple(h for h in HORIZONS if h in config.horizons),
            schemes=tuple(s for s in SCHEMES if s in config.schemes),
            seeds=tuple(sorted(config.seeds)),
        )

    def cells(self) -> List[GridCell]:
        axes = product(self.metrics, self.horizons, self.schemes, self.seeds)
        return [GridCell(m, h, s, seed) for m, h, s, seed in axes]

    def targets(self) -> List[Tuple[str, int]]:
        return list(product(self.metrics, self.horizons))

    def __len__(self) -> int:
        return len(self.metrics) * len(self.horizons) * len(self.schemes) * len(self.seeds)

    def restrict(
        self,
        metrics: Sequence[str] = (),
        horizons: Sequence[int] = (),
        schemes: Sequence[str] = (),
        seeds: Sequence[int] = (),
    ) -> "ExperimentGrid":
        """Sub-grid keeping only the given values on each non-empty axis."""
        return ExperimentGrid(
            metrics=tuple(m for m in self.metrics if not metrics or m in metrics),
            horizons=tuple(h for h in self.horizons if not horizons or h in horizons),
            schemes=tuple(s for s in self.schemes if not schemes or s in schemes),
            seeds=tuple(s for s in self.seeds if not seeds or s in seeds),
        )
