"""Offline phase: reward-free uncertainty maximization over historical contexts.

The planner walks the offline context stream exactly once. At each step it
acts greedily with respect to the inverse-covariance norm measured against
the most recent covariance snapshot, adds the chosen feature to the
covariance (scaled by alpha), and re-snapshots whenever the determinant has
more than doubled since the last snapshot. The result is a mixture policy:
a uniform mixture over the per-step policies, stored compactly as the K
distinct snapshots plus the step at which each phase begins.

Nothing in this module can observe a reward. ``plan`` receives contexts and
a configuration only; non-reactivity is structural, not a convention.
``plan`` is also a pure function of its inputs: it draws no randomness, and
uncertainty-argmax ties break toward the lowest action index.

The doubling threshold is 2 for every regularization level. With
lambda_reg >= 1 and unit-capped features this keeps the determinant ratio
between consecutive snapshots at or below 4, which the elliptical-potential
and uncertainty-sum guarantees rely on; for lambda_reg < 1 a single update
can more than double the determinant, so those guarantees are not claimed
in that regime (the planner itself still runs fine).
"""

from __future__ import annotations

import base64
import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import ConfigurationError, Context, ContractViolation, ExperimentConfig
from .covariance import CovarianceSnapshot, RegularizedCovariance

_LOG2 = math.log(2.0)

ARTIFACT_FORMAT = "mixture-policy"
ARTIFACT_VERSION = 1


@dataclass(frozen=True)
class UncertaintyTrace:
    """Per-step realized uncertainty of a planner run.

    ``values`` is measured against the snapshot the step actually acted
    with; ``values_fresh`` is the same maximum measured against the fully
    up-to-date covariance. The two coincide at snapshot steps and the fresh
    one is never larger. ``chosen_features`` retains the selected feature
    rows so that downstream checks can replay the covariance trajectory
    exactly.
    """

    values: np.ndarray
    values_fresh: np.ndarray
    actions: np.ndarray
    chosen_features: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class MixturePolicy:
    """Uniform mixture over a planner run's per-step policies.

    Only the K distinct snapshot policies are stored; drawing a step index
    m uniformly from [1, M] and mapping it to its phase reproduces the full
    mixture. Immutable and freely shareable across threads.
    """

    snapshots: Sequence[CovarianceSnapshot]
    phase_starts: Sequence[int]
    M: int
    d: int
    lambda_reg: float
    alpha: float

    def __post_init__(self):
        starts = list(self.phase_starts)
        if len(starts) != len(self.snapshots) or not starts:
            raise ConfigurationError("phase_starts and snapshots must align and be nonempty")
        if starts[0] != 1:
            raise ConfigurationError("first phase must start at step 1")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ConfigurationError("phase_starts must be strictly increasing")
        if starts[-1] > self.M:
            raise ConfigurationError("phase start beyond the final step")
        object.__setattr__(self, "phase_starts", tuple(starts))
        object.__setattr__(self, "snapshots", tuple(self.snapshots))

    @property
    def snapshot_count(self) -> int:
        return len(self.snapshots)

    def phase_lengths(self) -> np.ndarray:
        bounds = list(self.phase_starts) + [self.M + 1]
        return np.diff(np.asarray(bounds))

    def snapshot_action(self, snapshot_index: int, context: Context) -> int:
        """Uncertainty argmax of one snapshot policy; ties go to the lowest index."""
        snap = self.snapshots[snapshot_index]
        if context.d != self.d:
            raise ContractViolation(f"context dimension {context.d} != policy dimension {self.d}")
        norms = snap.mahalanobis_rows(context.features)
        return int(np.argmax(norms))

    def action(self, context: Context, rng: np.random.Generator) -> int:
        """Draw m uniformly from [1, M], act with the snapshot of m's phase."""
        m = int(rng.integers(1, self.M + 1))
        phase = bisect_right(self.phase_starts, m) - 1
        return self.snapshot_action(phase, context)

    def to_artifact_dict(self) -> dict:
        return {
            "format": ARTIFACT_FORMAT,
            "version": ARTIFACT_VERSION,
            "d": self.d,
            "lambda_reg": self.lambda_reg,
            "alpha": self.alpha,
            "M": self.M,
            "phase_starts": list(self.phase_starts),
            "snapshots": [
                base64.b64encode(np.ascontiguousarray(s.matrix).tobytes()).decode("ascii")
                for s in self.snapshots
            ],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_artifact_dict()))

    @classmethod
    def from_artifact_dict(cls, payload: dict) -> "MixturePolicy":
        if payload.get("format") != ARTIFACT_FORMAT:
            raise ConfigurationError("not a mixture-policy artifact")
        if payload.get("version") != ARTIFACT_VERSION:
            raise ConfigurationError(f"unsupported artifact version {payload.get('version')}")
        d = int(payload["d"])
        snapshots = []
        for index, blob in enumerate(payload["snapshots"]):
            raw = np.frombuffer(base64.b64decode(blob), dtype=np.float64).reshape(d, d)
            snapshots.append(CovarianceSnapshot.from_matrix(raw, snapshot_index=index))
        return cls(
            snapshots=snapshots,
            phase_starts=[int(v) for v in payload["phase_starts"]],
            M=int(payload["M"]),
            d=d,
            lambda_reg=float(payload["lambda_reg"]),
            alpha=float(payload["alpha"]),
        )

    @classmethod
    def load(cls, path) -> "MixturePolicy":
        return cls.from_artifact_dict(json.loads(Path(path).read_text()))


def policy_action(policy: MixturePolicy, context: Context, rng: np.random.Generator) -> int:
    """Functional alias for ``MixturePolicy.action``."""
    return policy.action(context, rng)


def switch_count_budget(d: int, M: int, lambda_reg: float) -> float:
    """Determinant-doubling budget d * log2(1 + M / (d * lambda_reg)).

    Real runs stay within this on generic context streams; trajectories that
    keep the covariance spectrum perfectly balanced can spend the whole
    doubling budget and land one above it, because the initial policy does
    not consume a doubling.
    """
    return d * math.log2(1.0 + M / (d * lambda_reg))


def plan(contexts: Iterable[Context], config: ExperimentConfig, *,
         norm_cap: float | None = 1.0) -> tuple[MixturePolicy, UncertaintyTrace]:
    """Run the reward-free offline pass over exactly config.M contexts.

    Returns the mixture policy and the uncertainty trace. Raises
    ConfigurationError if the stream cannot supply M contexts and
    ContractViolation if feature dimensions are inconsistent.
    """
    if hasattr(contexts, "__len__") and len(contexts) != config.M:
        raise ConfigurationError(
            f"context stream has {len(contexts)} contexts, config expects M={config.M}"
        )
    stream = iter(contexts)
    try:
        context = next(stream)
    except StopIteration:
        raise ConfigurationError("offline context stream is empty") from None

    d = context.d
    M = config.M
    cov = RegularizedCovariance(d, config.lambda_reg, config.alpha, norm_cap=norm_cap)

    snapshots: list[CovarianceSnapshot] = []
    phase_starts: list[int] = []
    values = np.empty(M)
    values_fresh = np.empty(M)
    actions = np.empty(M, dtype=np.int64)
    chosen = np.empty((M, d))

    snap = None
    snap_log_det = -math.inf
    for m in range(1, M + 1):
        if m > 1:
            try:
                context = next(stream)
            except StopIteration:
                raise ConfigurationError(
                    f"offline context stream ended after {m - 1} of {M} contexts"
                ) from None
        if context.d != d:
            raise ContractViolation("context dimension changed mid-stream")

        log_det = cov.log_det()
        if snap is None or log_det - snap_log_det > _LOG2:
            snap = cov.snapshot()
            snap_log_det = log_det
            snapshots.append(snap)
            phase_starts.append(m)

        norms = snap.mahalanobis_rows(context.features)
        a = int(np.argmax(norms))
        values[m - 1] = norms[a]
        values_fresh[m - 1] = float(cov.mahalanobis_rows(context.features).max())
        actions[m - 1] = a
        chosen[m - 1] = context.features[a]
        cov.rank_one_update(context.features[a])

    policy = MixturePolicy(
        snapshots=snapshots,
        phase_starts=phase_starts,
        M=M,
        d=d,
        lambda_reg=config.lambda_reg,
        alpha=config.alpha,
    )
    trace = UncertaintyTrace(
        values=values,
        values_fresh=values_fresh,
        actions=actions,
        chosen_features=chosen,
    )
    return policy, trace
