"""Data model for irregularly spaced observations and site generation.

Sites live in the rectangle R_n = prod_j [-A_j/2, A_j/2].  Sampling draws
z ~ g on R_0 = [-1/2, 1/2]^d by per-axis inverse-CDF and scales by A, so
the sites have density A_n^{-1} g(x / A_n).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

GENERATOR_ID = "numpy-pcg64-seedseq-v1"

BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class Region:
    """Rectangular sampling region with side lengths A_j."""

    A: tuple[float, ...]

    def __post_init__(self):
        if any(a <= 0 for a in self.A):
            raise ValueError("all region side lengths must be positive")

    @property
    def d(self) -> int:
        return len(self.A)

    @property
    def volume(self) -> float:
        return float(np.prod(self.A))

    def sides(self) -> np.ndarray:
        return np.asarray(self.A, dtype=float)

    def contains(self, x: np.ndarray) -> np.ndarray:
        half = self.sides() / 2.0
        return (np.abs(np.atleast_2d(x)) <= half + BOUNDARY_TOL).all(axis=1)


@dataclass(frozen=True)
class SamplingDensity:
    """Product density on R_0 = [-1/2, 1/2]^d sampled by per-axis inverse CDF.

    kinds:
      uniform       -- no parameters
      product-beta  -- params["alpha"], params["beta"]: per-axis shape lists
      custom-grid   -- params["weights"]: per-axis lists of cell densities on
                       an equal-width grid over [-1/2, 1/2]; each axis must
                       integrate to 1
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("uniform", "product-beta", "custom-grid"):
            raise ValueError(f"unknown sampling density kind {self.kind!r}")
        if self.kind == "custom-grid":
            for w in self.params["weights"]:
                w = np.asarray(w, dtype=float)
                if (w < 0).any():
                    raise ValueError("custom-grid densities must be nonnegative")
                if abs(w.mean() - 1.0) > 1e-8:
                    raise ValueError(
                        "custom-grid density does not integrate to 1 on [-1/2, 1/2]"
                    )

    def ppf_axis(self, j: int, u: np.ndarray) -> np.ndarray:
        """Inverse CDF of axis j, mapping (0,1) to [-1/2, 1/2]."""
        if self.kind == "uniform":
            return u - 0.5
        if self.kind == "product-beta":
            a = self.params["alpha"][j]
            b = self.params["beta"][j]
            return stats.beta.ppf(u, a, b) - 0.5
        # custom-grid: piecewise-constant density -> piecewise-linear CDF
        w = np.asarray(self.params["weights"][j], dtype=float)
        k = len(w)
        cdf = np.concatenate([[0.0], np.cumsum(w) / k])
        cells = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, k - 1)
        frac = (u - cdf[cells]) / np.maximum(w[cells] / k, 1e-300)
        return (cells + np.clip(frac, 0.0, 1.0)) / k - 0.5

    def pdf(self, z: np.ndarray) -> np.ndarray:
        """Density on R_0 for an (n, d) array."""
        z = np.atleast_2d(z)
        out = np.ones(z.shape[0])
        for j in range(z.shape[1]):
            if self.kind == "uniform":
                continue
            elif self.kind == "product-beta":
                a = self.params["alpha"][j]
                b = self.params["beta"][j]
                out *= stats.beta.pdf(z[:, j] + 0.5, a, b)
            else:
                w = np.asarray(self.params["weights"][j], dtype=float)
                k = len(w)
                cells = np.clip(((z[:, j] + 0.5) * k).astype(int), 0, k - 1)
                out *= w[cells]
        return out


def rep_rng(master_seed: int, rep: int) -> np.random.Generator:
    """Per-replication stream: derived, reproducible, safe to run in parallel."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(rep)]))


def generate_sites(
    region: Region,
    density: SamplingDensity,
    n: int,
    seed,
) -> np.ndarray:
    """Draw n i.i.d. sites in R_n with density A_n^{-1} g(x / A_n)."""
    if n < 1:
        raise ValueError("site count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = rng.random((n, region.d))
    z = np.column_stack([density.ppf_axis(j, u[:, j]) for j in range(region.d)])
    return z * region.sides()


@dataclass
class SpatialDataset:
    """n sites in R_n plus responses Y, optionally group-labelled."""

    region: Region
    sites: np.ndarray
    responses: np.ndarray
    group: np.ndarray | None = None

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        self.responses = np.asarray(self.responses, dtype=float)
        if self.sites.shape[0] != self.responses.shape[0]:
            raise ValueError("sites and responses must have equal length")
        if self.sites.shape[0] < 1:
            raise ValueError("dataset must contain at least one observation")
        if self.sites.shape[1] != self.region.d:
            raise ValueError("site dimension does not match region")
        if not self.region.contains(self.sites).all():
            bad = int(np.argmin(self.region.contains(self.sites)))
            raise ValueError(f"site {bad} lies outside the sampling region")

    @property
    def n(self) -> int:
        return self.sites.shape[0]

    @property
    def d(self) -> int:
        return self.region.d

    def rescaled_sites(self) -> np.ndarray:
        return self.sites / self.region.sides()


def rescale(dataset: SpatialDataset, x) -> np.ndarray:
    """Map a site of R_n to R_0 = [-1/2, 1/2]^d."""
    x = np.asarray(x, dtype=float)
    if not dataset.region.contains(x[None, :])[0]:
        raise ValueError(f"point {x} is outside the sampling region")
    return x / dataset.region.sides()


def save_csv(dataset: SpatialDataset, path) -> None:
    """Write `# A=...` header comment, column header, then one row per site."""
    path = Path(path)
    d = dataset.d
    with path.open("w", newline="") as f:
        f.write("# A=" + ",".join(f"{a:.17g}" for a in dataset.region.A) + "\n")
        cols = [f"x{j + 1}" for j in range(d)] + ["y"]
        if dataset.group is not None:
            cols.append("group")
        f.write(",".join(cols) + "\n")
        w = csv.writer(f)
        for i in range(dataset.n):
            row = [f"{v:.17g}" for v in dataset.sites[i]] + [
                f"{dataset.responses[i]:.17g}"
            ]
            if dataset.group is not None:
                row.append(str(dataset.group[i]))
            w.writerow(row)


def load_csv(path) -> SpatialDataset:
    path = Path(path)
    with path.open() as f:
        first = f.readline().strip()
        if not first.startswith("# A="):
            raise ValueError(f"{path}: missing '# A=...' region header on line 1")
        A = tuple(float(v) for v in first[len("# A=") :].split(","))
        header = f.readline().strip().split(",")
        d = len(A)
        expected = [f"x{j + 1}" for j in range(d)] + ["y"]
        has_group = header == expected + ["group"]
        if not has_group and header != expected:
            raise ValueError(f"{path}: header {header} does not match region d={d}")
        sites, ys, groups = [], [], []
        for lineno, line in enumerate(f, start=3):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(header)} fields, "
                    f"got {len(parts)}"
                )
            try:
                sites.append([float(v) for v in parts[:d]])
                ys.append(float(parts[d]))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
            if has_group:
                groups.append(parts[d + 1])
    return SpatialDataset(
        region=Region(A=A),
        sites=np.array(sites),
        responses=np.array(ys),
        group=np.array(groups) if has_group else None,
    )


def save_metadata(path, *, region: Region, n: int, seed, density: SamplingDensity):
    meta = {
        "A": list(region.A),
        "n": int(n),
        "seed": seed,
        "density": {"kind": density.kind, "params": density.params},
        "generator_id": GENERATOR_ID,
    }
    Path(path).write_text(json.dumps(meta, indent=2) + "\n")
