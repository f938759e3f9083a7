"""Named parameter storage with gradients and Adam moments."""

from typing import Dict, Iterator, List, Tuple

import numpy as np

from action_signal.core.exceptions import DivergenceError, ShapeMismatchError


class ParameterSet:
    """Ordered collection of named float64 tensors.

    Every parameter has a gradient buffer and first/second moment buffers of
    the same shape. The topology is fixed once training starts.
    """

    def __init__(self):
        self.values: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.first_moment: Dict[str, np.ndarray] = {}
        self.second_moment: Dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.values:
            raise ValueError(f"duplicate parameter: {name}")
        value = np.array(value, dtype=np.float64, copy=True)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.first_moment[name] = np.zeros_like(value)
        self.second_moment[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.values[name]

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def __iter__(self) -> Iterator[str]:
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def names(self) -> List[str]:
        return list(self.values)

    @property
    def n_parameters(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def zero_grad(self) -> None:
        for grad in self.grads.values():
            grad.fill(0.0)

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        self.grads[name] += grad

    def assign(self, name: str, value: np.ndarray) -> None:
        """Overwrite a parameter in place, keeping its shape.

        Raises:
            ShapeMismatchError: If the new value has another shape.
        """
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.values[name].shape:
            raise ShapeMismatchError(
                f"parameter {name}: shape {value.shape} != {self.values[name].shape}"
            )
        self.values[name][...] = value

    def check_finite(self) -> None:
        """Raise on any non-finite parameter or gradient.

        Raises:
            DivergenceError: With the offending tensor names in the dump.
        """
        bad = [n for n, v in self.values.items() if not np.all(np.isfinite(v))]
        bad_grads = [n for n, g in self.grads.items() if not np.all(np.isfinite(g))]
        if bad or bad_grads:
            raise DivergenceError(
                dump={
                    "non_finite_parameters": bad,
                    "non_finite_gradients": bad_grads,
                    "step": self.step_count,
                }
            )

    def norms(self) -> Dict[str, Tuple[float, float]]:
        """(parameter norm, gradient norm) per tensor, for diagnostics."""
        return {
            n: (float(np.linalg.norm(self.values[n])), float(np.linalg.norm(self.grads[n])))
            for n in self.values
        }

    def state(self, include_moments: bool = False) -> Dict[str, np.ndarray]:
        """Copies of the tensors, keyed for checkpoint files."""
        state = {f"param/{n}": v.copy() for n, v in self.values.items()}
        if include_moments:
            state.update({f"m/{n}": v.copy() for n, v in self.first_moment.items()})
            state.update({f"v/{n}": v.copy() for n, v in self.second_moment.items()})
        return state

    def load_state(self, state: Dict[str, np.ndarray], prefix: str = "") -> List[str]:
        """Assign every stored parameter whose name starts with ``prefix``.

        Returns:
            Names of the assigned parameters
        """
        loaded = []
        for key, value in state.items():
            kind, _, name = key.partition("/")
            if not name.startswith(prefix) or name not in self.values:
                continue
            if kind == "param":
                self.assign(name, value)
                loaded.append(name)
            elif kind == "m":
                self.first_moment[name][...] = value
            elif kind == "v":
                self.second_moment[name][...] = value
        return loaded

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {n: v.copy() for n, v in self.values.items()}

    def restore(self, snapshot: Dict[str, np.ndarray]) -> None:
        for name, value in snapshot.items():
            self.values[name][...] = value
