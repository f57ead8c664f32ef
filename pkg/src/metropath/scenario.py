"""Bundle of the static inputs shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import (
    ChoiceIndex,
    ConfigurationError,
    Network,
    TimeGrid,
    commonality_factor,
    path_attributes,
    validate_network,
)
from .timetable import Timetable


@dataclass
class Scenario:
    network: Network
    timetable: Timetable
    paths: dict
    grid: TimeGrid
    gamma: float = 5.0
    distance_mode: str = "stations"
    index: ChoiceIndex = field(init=False)
    design: np.ndarray = field(init=False)

    def __post_init__(self):
        issues = validate_network(self.network, self.paths, self.timetable)
        if issues:
            raise ConfigurationError("invalid network: " + "; ".join(issues))
        self.timetable.check_patterns(self.network)
        self.index = ChoiceIndex.from_paths(self.paths, self.grid.n)
        per_od = []
        for od, plist in self.paths.items():
            rows = [
                path_attributes(
                    p,
                    self.timetable,
                    self.network,
                    commonality_factor(p, plist, self.gamma),
                    self.distance_mode,
                )
                for p in plist
            ]
            per_od.append(np.vstack(rows))
        # attributes are time-invariant: the same block repeats for every interval
        self.design = np.vstack(per_od * self.grid.n)

    @property
    def od_pairs(self):
        return self.index.od_pairs

    def path_of(self, v: int):
        o, _, d, r = self.index.triple(v)
        return self.paths[(o, d)][r]

    def uniform_shares(self) -> np.ndarray:
        sizes = self.index.group_sizes()
        return np.repeat(1.0 / sizes, sizes)
