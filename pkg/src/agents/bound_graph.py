import asyncio
import logging
import operator
from typing import Annotated, List, Optional, TypedDict

from langgraph.graph import END, StateGraph

from src.engine import figure_reference
from src.engine.moment import lower_bound
from src.engine.upperbound import DEFAULT_MAX_ITERS, DEFAULT_RESTARTS, upper_bound
from src.quantum.fdiv import pure_state_bounds
from src.quantum.qstate import spectral, state_hash

logger = logging.getLogger(__name__)

SANDWICH_TOL = 1e-3


# Shared state for one bound computation
class BoundState(TypedDict, total=False):
    rho: object
    m: int
    k: int
    d_D: int
    d_E: int
    restarts: int
    max_iters: int
    seed: int
    workers: int
    solver_options: object
    closed_form: bool
    werner: Optional[dict]
    state_hash: str
    rank: int
    is_pure: bool
    lower: object
    upper: object
    sandwich_ok: bool
    deviations: dict
    status_updates: Annotated[List[str], operator.add]


class BoundGraph:
    """prepare -> (lower || upper) -> reconcile."""

    def __init__(self, lower_fn=lower_bound, upper_fn=upper_bound, closed_form_fn=pure_state_bounds):
        self.lower_fn = lower_fn
        self.upper_fn = upper_fn
        self.closed_form_fn = closed_form_fn
        self.workflow = self._build_graph()

    def _build_graph(self):
        graph = StateGraph(BoundState)

        graph.add_node("prepare", self.node_prepare)
        graph.add_node("lower_bound", self.node_lower_bound)
        graph.add_node("upper_bound", self.node_upper_bound)
        graph.add_node("reconcile", self.node_reconcile)

        graph.set_entry_point("prepare")
        # Both bounds run in the same step; reconcile waits for both.
        graph.add_edge("prepare", "lower_bound")
        graph.add_edge("prepare", "upper_bound")
        graph.add_edge(["lower_bound", "upper_bound"], "reconcile")
        graph.add_edge("reconcile", END)

        return graph.compile()

    # --- Nodes ---

    async def node_prepare(self, state: BoundState):
        rho = state["rho"]
        decomp = await asyncio.to_thread(spectral, rho)
        return {
            "state_hash": state_hash(rho),
            "rank": decomp.rank,
            "is_pure": rho.is_pure(),
            "status_updates": [f"state {rho.dims} rank {decomp.rank}"],
        }

    async def node_lower_bound(self, state: BoundState):
        if state.get("m") is None:
            return {"lower": None, "status_updates": ["lower bound skipped"]}
        if state.get("closed_form") and state["is_pure"]:
            result = await asyncio.to_thread(self.closed_form_fn, state["rho"], state["m"])
        else:
            result = await asyncio.to_thread(
                self.lower_fn, state["rho"], state["m"], state.get("k", 1), state.get("solver_options"),
            )
        return {"lower": result, "status_updates": [f"lower bound {result.value:.6f} ({result.solver_status})"]}

    async def node_upper_bound(self, state: BoundState):
        if state.get("d_D") is None or state.get("d_E") is None:
            return {"upper": None, "status_updates": ["upper bound skipped"]}
        result = await asyncio.to_thread(
            self.upper_fn,
            state["rho"],
            state["d_D"],
            state["d_E"],
            restarts=state.get("restarts", DEFAULT_RESTARTS),
            max_iters=state.get("max_iters", DEFAULT_MAX_ITERS),
            seed=state.get("seed", 0),
            workers=state.get("workers", 1),
        )
        return {"upper": result, "status_updates": [f"upper bound {result.value:.6f} ({result.solver_status})"]}

    async def node_reconcile(self, state: BoundState):
        lower, upper = state.get("lower"), state.get("upper")
        updates = []
        sandwich_ok = True
        if lower is not None and upper is not None and lower.succeeded and upper.succeeded:
            sandwich_ok = lower.value <= upper.value + SANDWICH_TOL
            if not sandwich_ok:
                logger.warning("sandwich violated: lower %.6f > upper %.6f", lower.value, upper.value)
                updates.append("sandwich violated")

        deviations = {}
        werner = state.get("werner")
        if werner:
            d, p = werner["d"], werner["p"]
            if lower is not None and lower.m is not None:
                column = figure_reference.lower_column(d, lower.m)
                deviations["lower"] = figure_reference.deviation(d, column, p, lower.value)
            if upper is not None:
                column = figure_reference.upper_column(d, upper.d_D, upper.d_E)
                deviations["upper"] = figure_reference.deviation(d, column, p, upper.value)
            for side, dev in deviations.items():
                if dev is not None:
                    logger.info("d=%d p=%.2f %s deviates from the published value by %+.4f", d, p, side, dev)

        updates.append("reconciled")
        return {"sandwich_ok": sandwich_ok, "deviations": deviations, "status_updates": updates}

    async def run_async(self, rho, **params):
        initial_state = {"rho": rho, "status_updates": []}
        initial_state.update({k: v for k, v in params.items() if v is not None})
        return await self.workflow.ainvoke(initial_state)

    def run(self, rho, **params):
        return asyncio.run(self.run_async(rho, **params))
