"""Run manifest: every stage output with its content hash."""

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from action_signal.core.exceptions import DataValidationError, StageError
from action_signal.utils.hashing import sha256_file

MANIFEST_FILE = "manifest.json"

PathLike = Union[str, Path]


class RunManifest:
    """Per-stage file listing of a run directory.

    Paths are stored relative to the run directory, in sorted order.
    """

    def __init__(self, run_dir: PathLike, config_hash: str = "", seed: int = 0):
        self.run_dir = Path(run_dir)
        self.config_hash = config_hash
        self.seed = seed
        self.stages: Dict[str, Dict[str, Any]] = {}

    @property
    def path(self) -> Path:
        return self.run_dir / MANIFEST_FILE

    def record_stage(
        self, stage: str, files: Iterable[PathLike], status: str = "ok", **details: Any
    ) -> None:
        """Hash and list the outputs of a stage, replacing an earlier record."""
        hashes = {}
        for file in files:
            file = Path(file)
            rel = file.resolve().relative_to(self.run_dir.resolve()).as_posix()
            hashes[rel] = sha256_file(file)
        self.stages[stage] = {"status": status, "files": dict(sorted(hashes.items())), **details}

    def files(self, stage: str) -> Dict[str, str]:
        return dict(self.stages.get(stage, {}).get("files", {}))

    def has_stage(self, stage: str) -> bool:
        return stage in self.stages

    def require(self, stage: str, relative: str) -> Path:
        """Resolve a manifested file of a stage after checking its hash.

        Raises:
            StageError: If the file is not listed, missing or modified.
        """
        listed = self.files(stage)
        if relative not in listed:
            raise StageError(f"{relative} is not a manifested output of stage '{stage}'")
        path = self.run_dir / relative
        if not path.exists():
            raise StageError(f"manifested file missing: {relative}")
        if sha256_file(path) != listed[relative]:
            raise StageError(f"manifested file modified since stage '{stage}': {relative}")
        return path

    def verify(self) -> List[str]:
        """Relative paths whose current content no longer matches the manifest."""
        stale = []
        for stage in self.stages:
            for relative, digest in self.files(stage).items():
                path = self.run_dir / relative
                if not path.exists() or sha256_file(path) != digest:
                    stale.append(relative)
        return stale

    def to_dict(self) -> Dict[str, Any]:
        return {"config_hash": self.config_hash, "seed": self.seed, "stages": self.stages}

    def save(self) -> Path:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return self.path

    @classmethod
    def load(cls, run_dir: PathLike) -> Optional["RunManifest"]:
        """Read the manifest of a run directory; None when there is none.

        Raises:
            DataValidationError: If the manifest is not valid JSON.
        """
        path = Path(run_dir) / MANIFEST_FILE
        if not path.exists():
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"malformed manifest {path}: {e}") from e
        manifest = cls(run_dir, data.get("config_hash", ""), int(data.get("seed", 0)))
        manifest.stages = dict(data.get("stages", {}))
        return manifest
