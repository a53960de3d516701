import math
from dataclasses import asdict, dataclass, field
from typing import Optional

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near_optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_TROUBLE = "numerical_trouble"
SOLVER_STATUSES = (OPTIMAL, NEAR_OPTIMAL, INFEASIBLE, UNBOUNDED, NUMERICAL_TROUBLE)

LOWER_SDP = "lower_sdp"
UPPER_HEURISTIC = "upper_heuristic"
PURE_CLOSED_FORM = "pure_closed_form"


def is_success(status):
    return status in (OPTIMAL, NEAR_OPTIMAL)


@dataclass
class BoundResult:
    """A bound on the squashed entanglement in bits, plus provenance."""
    value: float
    kind: str
    solver_status: str = OPTIMAL
    m: Optional[int] = None
    k: Optional[int] = None
    d_D: Optional[int] = None
    d_E: Optional[int] = None
    restarts: Optional[int] = None
    primal_dual_gap: float = 0.0
    wall_time: float = 0.0
    quadrature_gap: Optional[float] = None
    upper_value: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if is_success(self.solver_status) and not math.isfinite(self.value):
            raise ValueError(f"{self.kind} bound reported {self.solver_status} with non-finite value {self.value}")

    @property
    def clamped(self):
        """Presentation value: the squashed entanglement is never negative."""
        return max(0.0, self.value) if math.isfinite(self.value) else self.value

    @property
    def succeeded(self):
        return is_success(self.solver_status)

    def to_dict(self):
        data = asdict(self)
        data["clamped"] = self.clamped
        return data

    @classmethod
    def from_dict(cls, data):
        data = {k: v for k, v in data.items() if k != "clamped"}
        return cls(**data)
