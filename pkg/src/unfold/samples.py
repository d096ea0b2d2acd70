"""Stored posterior draws and their on-disk format.

A run directory holds ``manifest.json`` and ``draws.bin``. Each draw is one
fixed-width record of little-endian float64 values, the fields laid out in
the order listed under ``manifest["record"]``, each flattened row-major.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
_DTYPE = np.dtype("<f8")


class InsufficientSamplesError(ValueError):
    pass


class StoreError(ValueError):
    pass


@dataclass
class PosteriorSamples:
    """Thinned draws from one chain.

    ``beta`` is ``(S, I)`` for the static model and ``(S, I, T)`` for the
    dynamic one, with NaN outside each legislator's tenure window.
    """

    kind: str
    beta: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    z: np.ndarray
    legislator_ids: tuple
    vote_ids: tuple
    rho: np.ndarray | None = None
    vote_term: np.ndarray | None = None
    tenure: np.ndarray | None = None
    manifest: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    @property
    def dynamic(self) -> bool:
        return self.kind == "dynamic"

    def beta_cells(self) -> np.ndarray:
        """Per-draw ideal point relevant to every (legislator, vote) cell, ``(S, I, J)``."""
        if self.dynamic:
            return self.beta[:, :, self.vote_term]
        return np.repeat(self.beta[:, :, None], self.alpha.shape[1], axis=2)

    def beta_summary(self) -> np.ndarray:
        """Static beta, or the tenure-mean trajectory per draw, ``(S, I)``."""
        if self.dynamic:
            return np.nanmean(self.beta, axis=2)
        return self.beta

    def copy(self) -> "PosteriorSamples":
        return PosteriorSamples(
            kind=self.kind, beta=self.beta.copy(), alpha=self.alpha.copy(),
            delta=self.delta.copy(), z=self.z.copy(), legislator_ids=self.legislator_ids,
            vote_ids=self.vote_ids, rho=None if self.rho is None else self.rho.copy(),
            vote_term=self.vote_term, tenure=self.tenure, manifest=json.loads(json.dumps(self.manifest)))

    def _fields(self):
        out = [("beta", self.beta), ("alpha", self.alpha), ("delta", self.delta),
               ("z", self.z.astype(float))]
        if self.rho is not None:
            out.append(("rho", self.rho))
        return out

    def check_sign_invariant(self) -> bool:
        a = self.alpha
        plus = (a[..., 0] > 0) & (a[..., 1] < 0) & (self.z == 1)
        minus = (a[..., 0] < 0) & (a[..., 1] > 0) & (self.z == -1)
        return bool(np.all(plus | minus))


def write_store(samples: PosteriorSamples, run_dir) -> Path:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    fields = samples._fields()
    S = samples.n_draws
    record = [{"name": name, "shape": list(arr.shape[1:])} for name, arr in fields]
    flat = [np.asarray(arr, dtype=_DTYPE).reshape(S, -1) for _, arr in fields]
    block = np.concatenate(flat, axis=1) if S else np.zeros((0, sum(f.shape[1] for f in flat)))
    (run_dir / "draws.bin").write_bytes(np.ascontiguousarray(block, dtype=_DTYPE).tobytes())
    manifest = dict(samples.manifest)
    manifest.update({
        "schema_version": SCHEMA_VERSION,
        "kind": samples.kind,
        "n_draws": S,
        "record": record,
        "dtype": "float64-le",
        "layout": "row-major",
        "legislator_ids": list(samples.legislator_ids),
        "vote_ids": list(samples.vote_ids),
    })
    if samples.vote_term is not None:
        manifest["vote_term"] = [int(t) for t in samples.vote_term]
    if samples.tenure is not None:
        manifest["tenure"] = [[int(a), int(b)] for a, b in samples.tenure]
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return run_dir


def read_store(run_dir) -> PosteriorSamples:
    run_dir = Path(run_dir)
    try:
        manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
        raw = (run_dir / "draws.bin").read_bytes()
    except FileNotFoundError as exc:
        raise StoreError(f"incomplete sample store at {run_dir}: {exc.filename}") from None
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise StoreError(f"unsupported schema version {manifest.get('schema_version')}")
    S = manifest["n_draws"]
    sizes = [int(np.prod(f["shape"], dtype=int)) for f in manifest["record"]]
    width = sum(sizes)
    block = np.frombuffer(raw, dtype=_DTYPE)
    if block.size != S * width:
        raise StoreError(f"draws.bin holds {block.size} values, expected {S * width}")
    block = block.reshape(S, width)
    arrays = {}
    pos = 0
    for f, size in zip(manifest["record"], sizes):
        arrays[f["name"]] = block[:, pos:pos + size].reshape(S, *f["shape"]).astype(float)
        pos += size
    vote_term = manifest.get("vote_term")
    tenure = manifest.get("tenure")
    return PosteriorSamples(
        kind=manifest["kind"],
        beta=arrays["beta"], alpha=arrays["alpha"], delta=arrays["delta"],
        z=arrays["z"].astype(int),
        legislator_ids=tuple(manifest["legislator_ids"]),
        vote_ids=tuple(manifest["vote_ids"]),
        rho=arrays.get("rho"),
        vote_term=None if vote_term is None else np.array(vote_term, dtype=int),
        tenure=None if tenure is None else np.array(tenure, dtype=int).reshape(-1, 2),
        manifest=manifest,
    )


def concat_samples(stores) -> PosteriorSamples:
    """Pool draws from several chains fitted to the same data."""
    stores = list(stores)
    if not stores:
        raise InsufficientSamplesError("no sample stores given")
    first = stores[0]
    for s in stores[1:]:
        same = (s.kind == first.kind and s.legislator_ids == first.legislator_ids
                and s.vote_ids == first.vote_ids
                and s.manifest.get("data_fingerprint") == first.manifest.get("data_fingerprint"))
        if not same:
            raise StoreError("stores were fitted to different data or models")
    if len(stores) == 1:
        return first

    def cat(name):
        parts = [getattr(s, name) for s in stores]
        return None if parts[0] is None else np.concatenate(parts, axis=0)

    return PosteriorSamples(
        kind=first.kind, beta=cat("beta"), alpha=cat("alpha"), delta=cat("delta"), z=cat("z"),
        legislator_ids=first.legislator_ids, vote_ids=first.vote_ids, rho=cat("rho"),
        vote_term=first.vote_term, tenure=first.tenure, manifest=dict(first.manifest))
