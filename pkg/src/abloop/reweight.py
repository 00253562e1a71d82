"""Exact finite-space oracle for the reweighting identities.

The weighting approach rests on two facts about mixing a treatment data
distribution D_T and a control distribution D_C into the experiment
distribution D_E = p*D_T + (1-p)*D_C:

* weighting D_E by E[Z|atom]/p recovers D_T exactly (and the control
  counterpart recovers D_C), and
* among all nonnegative weights that recover D_T, that choice minimizes
  the second moment E[W^2].

On a finite set of atoms every expectation is a finite sum, so both facts
can be checked to machine precision rather than statistically.  This module
does exactly that, and `battery` runs the checks over a seeded collection
of random spaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .streams import Stream

_ATOL = 1e-12


@dataclass(frozen=True)
class DiscreteSpace:
    """A finite joint space of (x, y) atoms with per-arm distributions.

    Atoms stand for joint data points, so a weight that is a function of
    the atom is automatically a function of (x, y) together; this is what
    lets the conditional expectation of Z given the atom play the role of
    E[Z | x] throughout.
    """

    prob_treatment: np.ndarray
    prob_control: np.ndarray
    p: float
    atoms: tuple = ()  # optional labels, purely descriptive

    def __post_init__(self):
        pt = np.asarray(self.prob_treatment, dtype=np.float64)
        pc = np.asarray(self.prob_control, dtype=np.float64)
        if pt.shape != pc.shape or pt.ndim != 1 or len(pt) < 1:
            raise ValueError("arm distributions must be 1-d vectors of equal length")
        for name, vec in (("prob_treatment", pt), ("prob_control", pc)):
            if np.any(vec < 0) or abs(vec.sum() - 1.0) > _ATOL:
                raise ValueError(f"{name} must be nonnegative and sum to 1")
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie strictly between 0 and 1")
        if self.atoms and len(self.atoms) != len(pt):
            raise ValueError("atom labels must match the distribution length")
        object.__setattr__(self, "prob_treatment", pt)
        object.__setattr__(self, "prob_control", pc)

    @property
    def n_atoms(self) -> int:
        return len(self.prob_treatment)


@dataclass(frozen=True)
class WeightTable:
    """Nonnegative weights W(atom, z), normalized to E[W] = 1."""

    on_treated: np.ndarray  # W(atom, z=1)
    on_control: np.ndarray  # W(atom, z=0)

    def validate(self, space: DiscreteSpace) -> None:
        if np.any(self.on_treated < 0) or np.any(self.on_control < 0):
            raise ValueError("weights must be nonnegative")
        mean = expected_weight(space, self)
        if abs(mean - 1.0) > _ATOL:
            raise ValueError(f"weights must be normalized: E[W] = {mean}")


def joint_mass(space: DiscreteSpace) -> tuple[np.ndarray, np.ndarray]:
    """P(D_E = atom, Z = 1) and P(D_E = atom, Z = 0)."""
    return space.p * space.prob_treatment, (1.0 - space.p) * space.prob_control


def experiment_distribution(space: DiscreteSpace) -> np.ndarray:
    """The mixture p*D_T + (1-p)*D_C seen by the training pipeline."""
    return space.p * space.prob_treatment + (1.0 - space.p) * space.prob_control


def treatment_posterior(space: DiscreteSpace) -> np.ndarray:
    """E[Z | atom] = p*D_T(atom) / D_E(atom); errors on zero-mass atoms."""
    mix = experiment_distribution(space)
    if np.any(mix <= 0.0):
        raise ValueError("conditional undefined: atom with zero experiment mass")
    return space.p * space.prob_treatment / mix


def oracle_weights(space: DiscreteSpace) -> tuple[WeightTable, WeightTable]:
    """The variance-optimal weight pair (W_T, W_C), constant in z per atom."""
    e_z = treatment_posterior(space)
    w_t = e_z / space.p
    w_c = (1.0 - e_z) / (1.0 - space.p)
    return (WeightTable(w_t, w_t.copy()), WeightTable(w_c, w_c.copy()))


def splitting_weights(space: DiscreteSpace) -> tuple[WeightTable, WeightTable]:
    """The simple weights W = Z/p and W = (1-Z)/(1-p) used by data splitting."""
    n = space.n_atoms
    w_t = WeightTable(np.full(n, 1.0 / space.p), np.zeros(n))
    w_c = WeightTable(np.zeros(n), np.full(n, 1.0 / (1.0 - space.p)))
    return w_t, w_c


def expected_weight(space: DiscreteSpace, table: WeightTable) -> float:
    m1, m0 = joint_mass(space)
    return float(m1 @ table.on_treated + m0 @ table.on_control)


def apply_weights(space: DiscreteSpace, table: WeightTable) -> np.ndarray:
    """The reweighted distribution, atom by atom: sum_z P(atom, z) W(atom, z)."""
    table.validate(space)
    m1, m0 = joint_mass(space)
    return m1 * table.on_treated + m0 * table.on_control


def second_moment(space: DiscreteSpace, table: WeightTable) -> float:
    """E[W^2] under the joint law of (D_E, Z)."""
    m1, m0 = joint_mass(space)
    return float(m1 @ table.on_treated**2 + m0 @ table.on_control**2)


def perturbed_weights(space: DiscreteSpace, coeffs: np.ndarray) -> WeightTable:
    """W_T plus the conditional-mean-zero direction c_a * (z - E[Z|atom]).

    Any such perturbation leaves the reweighted distribution unchanged, so
    it stays feasible as long as the result is nonnegative.
    """
    e_z = treatment_posterior(space)
    w_t, _ = oracle_weights(space)
    return WeightTable(
        w_t.on_treated + coeffs * (1.0 - e_z),
        w_t.on_control + coeffs * (0.0 - e_z),
    )


def feasible_coeff_bounds(space: DiscreteSpace) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom coefficient range keeping the perturbed weights nonnegative."""
    e_z = treatment_posterior(space)
    w = e_z / space.p
    with np.errstate(divide="ignore"):
        hi = np.where(e_z > 0, w / e_z, np.inf)
        lo = np.where(e_z < 1, -w / (1.0 - e_z), -np.inf)
    return lo, hi


def verify_theorem_minimality(
    space: DiscreteSpace, n_perturbations: int, stream: Stream
) -> float:
    """Max over random feasible perturbations of E[W_T^2] - E[W_pert^2].

    Nonpositive values confirm that the oracle weights minimize the second
    moment; the zero perturbation attains exactly zero.
    """
    w_t, _ = oracle_weights(space)
    base = second_moment(space, w_t)
    lo, hi = feasible_coeff_bounds(space)
    lo = np.maximum(lo, -1e6)
    hi = np.minimum(hi, 1e6)
    worst = -np.inf
    for _ in range(n_perturbations):
        u = stream.uniform(space.n_atoms)
        coeffs = 0.9 * (lo + u * (hi - lo))
        table = perturbed_weights(space, coeffs)
        worst = max(worst, base - second_moment(space, table))
    return float(worst)


def random_space(stream: Stream, max_atoms: int = 50) -> DiscreteSpace:
    """A random space with strictly positive atom masses and interior p."""
    n = 2 + int(stream.uniform() * (max_atoms - 1))
    n = min(n, max_atoms)
    pt = stream.uniform(n) + 1e-3
    pc = stream.uniform(n) + 1e-3
    p = 0.05 + 0.9 * stream.uniform()
    return DiscreteSpace(pt / pt.sum(), pc / pc.sum(), p)


def battery(seed: int, n_spaces: int = 100, n_perturbations: int = 100) -> dict[str, float]:
    """Run the exact checks over random spaces; returns worst-case deviations.

    Keys: ``max_recovery_error`` (sup-norm error of the recovered arm
    distributions), ``max_minimality_violation`` (largest positive value
    would refute second-moment optimality), ``max_normalization_error``.
    """
    stream = Stream.from_label(seed, "reweight-battery")
    recovery = 0.0
    violation = -np.inf
    normalization = 0.0
    for _ in range(n_spaces):
        space = random_space(stream)
        w_t, w_c = oracle_weights(space)
        recovery = max(
            recovery,
            float(np.max(np.abs(apply_weights(space, w_t) - space.prob_treatment))),
            float(np.max(np.abs(apply_weights(space, w_c) - space.prob_control))),
        )
        normalization = max(
            normalization,
            abs(expected_weight(space, w_t) - 1.0),
            abs(expected_weight(space, w_c) - 1.0),
        )
        violation = max(violation, verify_theorem_minimality(space, n_perturbations, stream))
    return {
        "n_spaces": float(n_spaces),
        "n_perturbations": float(n_perturbations),
        "max_recovery_error": recovery,
        "max_minimality_violation": violation,
        "max_normalization_error": normalization,
    }
