"""Core domain types: design candidates, PPA metrics, evaluation outcomes, run history."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

NEG_INF = float("-inf")


class ConfigError(ValueError):
    """A configuration value violates its documented bounds or schema."""


class CircuitKind(enum.Enum):
    COMBINATIONAL = "combinational"
    SEQUENTIAL = "sequential"


class PopulationLabel(enum.Enum):
    FAIL = "fail"
    SUCCESS = "success"


@dataclass(frozen=True)
class PpaMetrics:
    """Power, area and effective clock period of one synthesized design.

    Units are whatever the synthesis library reports (watts / square
    micrometers / nanoseconds for a typical liberty flow); they only need to
    be consistent between generated and reference designs within a run.
    """

    power: float
    area: float
    effective_clock_period: float

    def __post_init__(self) -> None:
        for name in ("power", "area", "effective_clock_period"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"PpaMetrics.{name} must be finite and >= 0, got {value!r}")

    def to_dict(self) -> dict:
        return {
            "power": self.power,
            "area": self.area,
            "effective_clock_period": self.effective_clock_period,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PpaMetrics":
        return cls(
            power=float(data["power"]),
            area=float(data["area"]),
            effective_clock_period=float(data["effective_clock_period"]),
        )


@dataclass(frozen=True)
class ProblemSpec:
    """One design problem: what to build, how to check it, what to beat."""

    name: str
    functional_description: str
    testbench_source: str
    reference_ppa: PpaMetrics
    circuit_kind: CircuitKind
    target_clock_period: float

    def __post_init__(self) -> None:
        if not self.functional_description.strip():
            raise ConfigError("problem.functional_description must be non-empty")
        if self.target_clock_period <= 0:
            raise ConfigError(
                f"problem.target_clock_period must be > 0, got {self.target_clock_period!r}"
            )
        ref = self.reference_ppa
        for name in ("power", "area", "effective_clock_period"):
            if getattr(ref, name) <= 0:
                raise ConfigError(f"problem.reference_ppa.{name} must be > 0")


@dataclass(frozen=True)
class EvalOutcome:
    """Raw verdicts and reports from evaluating one design candidate."""

    sim_passed: bool
    synth_succeeded: bool
    ppa: PpaMetrics | None
    sim_log: str
    synth_log: str = ""
    post_synth_functional: bool | None = None

    def __post_init__(self) -> None:
        if self.ppa is not None and not self.synth_succeeded:
            raise ValueError("EvalOutcome.ppa requires synth_succeeded")

    def to_dict(self) -> dict:
        return {
            "sim_passed": self.sim_passed,
            "synth_succeeded": self.synth_succeeded,
            "ppa": self.ppa.to_dict() if self.ppa is not None else None,
            "sim_log": self.sim_log,
            "synth_log": self.synth_log,
            "post_synth_functional": self.post_synth_functional,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EvalOutcome":
        ppa = data.get("ppa")
        return cls(
            sim_passed=bool(data["sim_passed"]),
            synth_succeeded=bool(data["synth_succeeded"]),
            ppa=PpaMetrics.from_dict(ppa) if ppa is not None else None,
            sim_log=str(data["sim_log"]),
            synth_log=str(data["synth_log"]),
            post_synth_functional=data.get("post_synth_functional"),
        )


@dataclass(frozen=True)
class Individual:
    """One design candidate: a (thought, code, feedback) triple plus evaluation state.

    Ids are monotonically increasing integers assigned by the engine, so a
    fixed seed replays to identical lineages. `strategy` names the operator
    that created the candidate; both it and `parent_ids` are empty exactly
    for candidates created from the initial prompt.
    """

    id: int
    thought: str
    code: str
    feedback: str | None = None
    outcome: EvalOutcome | None = None
    fitness: float | None = None
    parent_ids: tuple[int, ...] = ()
    strategy: str | None = None
    generation_born: int = 0

    def __post_init__(self) -> None:
        if self.generation_born < 0:
            raise ValueError("Individual.generation_born must be >= 0")
        if (self.outcome is None) != (self.fitness is None):
            raise ValueError("Individual.fitness must be present exactly when outcome is")
        if self.outcome is not None:
            is_neg_inf = self.fitness == NEG_INF
            if is_neg_inf != (not self.outcome.sim_passed):
                raise ValueError(
                    "Individual.fitness must be -inf exactly when simulation failed"
                )
        if (self.strategy is None) != (len(self.parent_ids) == 0):
            raise ValueError("Individual.strategy and parent_ids must be set together")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "thought": self.thought,
            "code": self.code,
            "feedback": self.feedback,
            "outcome": self.outcome.to_dict() if self.outcome is not None else None,
            "fitness": self.fitness,
            "parent_ids": list(self.parent_ids),
            "strategy": self.strategy,
            "generation_born": self.generation_born,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Individual":
        outcome = data.get("outcome")
        fitness = data.get("fitness")
        return cls(
            id=int(data["id"]),
            thought=str(data["thought"]),
            code=str(data["code"]),
            feedback=data.get("feedback"),
            outcome=EvalOutcome.from_dict(outcome) if outcome is not None else None,
            fitness=float(fitness) if fitness is not None else None,
            parent_ids=tuple(int(p) for p in data.get("parent_ids", [])),
            strategy=data.get("strategy"),
            generation_born=int(data.get("generation_born", 0)),
        )


def classify(ind: Individual) -> PopulationLabel:
    """Assign the Fail/Success population label from the simulation verdict.

    Classification looks only at pre-synthesis simulation: a design that
    simulates correctly but fails synthesis still counts as Success.
    """
    if ind.outcome is None:
        raise ValueError(f"cannot classify unevaluated individual {ind.id}")
    return PopulationLabel.SUCCESS if ind.outcome.sim_passed else PopulationLabel.FAIL


@dataclass(frozen=True)
class StrategyEvent:
    """One operator application: which population's bandit chose which strategy, and its reward."""

    label: PopulationLabel
    strategy: str
    reward: float

    def to_dict(self) -> dict:
        return {"label": self.label.value, "strategy": self.strategy, "reward": self.reward}

    @classmethod
    def from_dict(cls, data: dict) -> "StrategyEvent":
        return cls(
            label=PopulationLabel(data["label"]),
            strategy=str(data["strategy"]),
            reward=float(data["reward"]),
        )


@dataclass(frozen=True)
class GenerationRecord:
    """Immutable snapshot of one generation of the evolutionary loop.

    `population` is the population entering the next generation (for
    generation 0, the initial population). `bandit_states` is a serialized
    snapshot of both populations' strategy statistics after this
    generation's rewards, kept for replay and inspection.
    """

    generation_index: int
    population: tuple[Individual, ...]
    offspring: tuple[Individual, ...] = ()
    strategy_events: tuple[StrategyEvent, ...] = ()
    best_so_far: Individual | None = None
    fail_count: int = 0
    success_count: int = 0
    bandit_states: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.generation_index < 0:
            raise ValueError("GenerationRecord.generation_index must be >= 0")
        if self.fail_count + self.success_count != len(self.population):
            raise ValueError("fail_count + success_count must equal the population size")

    def to_dict(self) -> dict:
        return {
            "generation_index": self.generation_index,
            "population": [ind.to_dict() for ind in self.population],
            "offspring": [ind.to_dict() for ind in self.offspring],
            "strategy_events": [ev.to_dict() for ev in self.strategy_events],
            "best_so_far": self.best_so_far.to_dict() if self.best_so_far else None,
            "fail_count": self.fail_count,
            "success_count": self.success_count,
            "bandit_states": self.bandit_states,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationRecord":
        best = data.get("best_so_far")
        return cls(
            generation_index=int(data["generation_index"]),
            population=tuple(Individual.from_dict(d) for d in data["population"]),
            offspring=tuple(Individual.from_dict(d) for d in data.get("offspring", [])),
            strategy_events=tuple(
                StrategyEvent.from_dict(d) for d in data.get("strategy_events", [])
            ),
            best_so_far=Individual.from_dict(best) if best is not None else None,
            fail_count=int(data["fail_count"]),
            success_count=int(data["success_count"]),
            bandit_states=dict(data.get("bandit_states", {})),
        )
