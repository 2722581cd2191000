"""Optimization loop tying the two scales together.

Each iteration: solve both correctors on every cell, homogenize, solve
the macro state, evaluate the objectives, then (unless stopping) solve
the needed adjoints, contract sensitivities per cell, and advance every
level-set field one reaction-diffusion step. The transition width
follows a fixed iteration schedule; the run stops at the iteration cap
(an optional relative-change early stop is off by default).
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import fem, homogenization, levelset, macro_solver, objectives, sensitivity
from .geometry import (MacroGeometry, SECTOR_FIRST, SECTOR_LAST, TriMesh,
                       UnitCellGeometry, build_cell_mesh, build_macro_mesh)
from .homogenization import EffectiveTensor
from .levelset import LevelSetField
from .macro_solver import BoundaryData, MacroMaterialMap

log = logging.getLogger(__name__)

N_CELLS = SECTOR_LAST - SECTOR_FIRST + 1


@dataclass
class Scenario:
    """Everything that defines one optimization run."""

    geometry: MacroGeometry
    k_cell_a: float               # cell phase with chi = 1
    k_cell_b: float               # cell phase with chi = 0
    k_exterior: float
    k_obstacle: float
    bc: BoundaryData = field(default_factory=BoundaryData)
    w: float = 1.0
    k_phi: float = 1.5
    tau: float = 2.0e-4
    dt: float = 0.1
    d_schedule: tuple = ((1, 0.2), (71, 0.01))
    max_iter: int = 150
    init: tuple = ("disk", 0.25)
    objective_mode: str = "standard"      # "standard" | "normalized"
    normalization_fill: float | None = None
    early_stop: bool = False
    move_limit: float = 0.5
    macro_h: float = 0.0625
    cell_resolution: int = 64
    allow_oversize: bool = False

    def validate(self) -> None:
        self.geometry.validate(allow_oversize=self.allow_oversize)
        self.bc.validate()
        if not 0.0 <= self.w <= 1.0:
            raise ValueError("w must lie in [0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if min(k for k in (self.k_cell_a, self.k_cell_b,
                           self.k_exterior, self.k_obstacle)) <= 0:
            raise ValueError("conductivities must be positive")
        if self.dt <= 0 or self.move_limit <= 0:
            raise ValueError("dt and move_limit must be positive")
        if not self.d_schedule or self.d_schedule[0][0] != 1:
            raise ValueError("d_schedule must start at iteration 1")
        for _, d in self.d_schedule:
            if not 0 < d < 1:
                raise ValueError("transition widths must lie in (0, 1)")
        if self.objective_mode not in ("standard", "normalized"):
            raise ValueError(f"unknown objective_mode {self.objective_mode!r}")
        if self.objective_mode == "normalized" and self.normalization_fill is None:
            raise ValueError("normalized mode needs normalization_fill")

    def d_at(self, iteration: int) -> float:
        d = self.d_schedule[0][1]
        for start, value in self.d_schedule:
            if iteration >= start:
                d = value
        return d

    def last_d_switch(self) -> int:
        return max(start for start, _ in self.d_schedule)


@dataclass
class IterationRecord:
    iteration: int
    j1: float
    j2: float
    j: float
    j1_ratio: float
    j2_ratio: float
    d: float
    wall_ms: float = 0.0


@dataclass
class DesignState:
    """Checkpointable snapshot: the unit of resume and of result reporting."""

    iteration: int
    phis: list[LevelSetField]
    tensors: list[EffectiveTensor]
    j1: float
    j2: float
    j: float
    j1_init: float
    j2_init: float
    history: list[IterationRecord]
    counters: dict


class Workspace:
    """Meshes, reference fields and reusable operators for one scenario."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = scenario
        self.macro_mesh = build_macro_mesh(scenario.geometry, scenario.macro_h,
                                           allow_oversize=scenario.allow_oversize)
        self.cell_mesh = build_cell_mesh(UnitCellGeometry(scenario.cell_resolution))
        self.t_steel = macro_solver.solve_state(
            self.macro_mesh, macro_solver.uniform_map(scenario.k_exterior), scenario.bc)
        self.norm_denominator = None
        if scenario.objective_mode == "normalized":
            worst = macro_solver.solve_state(
                self.macro_mesh,
                macro_solver.ring_filled_map(scenario.normalization_fill,
                                             scenario.k_exterior, scenario.k_obstacle),
                scenario.bc)
            self.norm_denominator = objectives.mismatch(
                worst.values, self.t_steel.values, self.macro_mesh)
            if self.norm_denominator <= 0:
                raise ValueError("normalization field coincides with the reference")
        self.updater = levelset.ReactionDiffusionUpdater(
            self.cell_mesh, scenario.k_phi, scenario.tau)

    def initial_phis(self) -> list[LevelSetField]:
        return [levelset.initialize(self.cell_mesh, self.scenario.init, cell_index=l)
                for l in range(SECTOR_FIRST, SECTOR_LAST + 1)]


def _map_cells(fn, items, threads: int):
    """Apply fn per cell; results land in fixed slots so order never matters."""
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run(scenario: Scenario, out_dir=None, resume_from: DesignState | None = None,
        threads: int = 1, checkpoint_every: int = 10) -> DesignState:
    """Execute the optimization loop and return the final design state.

    ``out_dir`` (optional) receives a progress CSV, periodic checkpoints
    and a final checkpoint. ``resume_from`` continues a saved state;
    resuming a finished run returns it unchanged. The run is
    deterministic for a fixed scenario, independent of ``threads``.
    """
    ws = Workspace(scenario)
    sc = scenario
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    if resume_from is not None:
        if resume_from.iteration >= sc.max_iter:
            return resume_from
        phis = [LevelSetField(phi=f.phi.copy(), mesh=ws.cell_mesh,
                              cell_index=f.cell_index, d=f.d)
                for f in resume_from.phis]
        if len(phis[0].phi) != ws.cell_mesh.n_nodes:
            raise ValueError("resumed state does not match the scenario cell mesh")
        history = list(resume_from.history)
        counters = dict(resume_from.counters)
        j1_init, j2_init = resume_from.j1_init, resume_from.j2_init
        # the saved design was evaluated but not yet advanced: replay its
        # iteration (evaluation recomputes deterministically, the recorded
        # history row is kept) so the update half runs again
        start = resume_from.iteration
    else:
        phis = ws.initial_phis()
        history = []
        counters = {"cell_solves": 0, "state_solves": 0,
                    "adjoint_solves_j1": 0, "adjoint_solves_j2": 0}
        j1_init = j2_init = None
        start = 1

    need_j1 = sc.w > 0.0 or sc.objective_mode == "normalized"
    need_j2 = sc.w < 1.0 and sc.objective_mode == "standard"
    w_eff = 1.0 if sc.objective_mode == "normalized" else sc.w
    state = None

    csv_path = out_dir / "history.csv" if out_dir is not None else None
    if csv_path is not None and not (resume_from is not None and csv_path.exists()):
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iter", "J1", "J2", "J", "J1_ratio", "J2_ratio", "d", "wall_ms"])
            for r in history:
                writer.writerow(_csv_row(r))

    for it in range(start, sc.max_iter + 1):
        t0 = time.perf_counter()
        d = sc.d_at(it)
        for f in phis:
            f.d = d

        def cell_task(f):
            mat = homogenization.material_from_levelset(f, sc.k_cell_a, sc.k_cell_b)
            tensor, w1, w2 = homogenization.homogenize(ws.cell_mesh, mat)
            return mat, tensor, w1, w2

        cell_results = _map_cells(cell_task, phis, threads)
        counters["cell_solves"] += 2 * N_CELLS
        tensors = [r[1] for r in cell_results]

        matmap = MacroMaterialMap(sector_tensors=tensors,
                                  k_exterior=sc.k_exterior, k_obstacle=sc.k_obstacle)
        state_system = macro_solver.state_system(ws.macro_mesh, matmap, sc.bc)
        state_fact = fem.Factorization(state_system)
        temp = fem.ScalarField(state_fact.solve(), ws.macro_mesh, state_system.bc_record)
        counters["state_solves"] += 1

        j1, j2 = macro_solver.evaluate_objectives(temp, ws.t_steel, ws.macro_mesh)
        if sc.objective_mode == "normalized":
            j = j1 / ws.norm_denominator
        else:
            j = objectives.compose(j1, j2, sc.w)
        if j1_init is None:
            j1_init, j2_init = j1, j2

        overshoot = macro_solver.temperature_bounds_violation(temp, sc.bc)
        if overshoot > 1e-6:
            log.warning("iteration %d: temperature overshoots edge range by %.3e",
                        it, overshoot)

        record = IterationRecord(
            iteration=it, j1=j1, j2=j2, j=j,
            j1_ratio=j1 / j1_init if j1_init > 0 else np.nan,
            j2_ratio=j2 / j2_init if j2_init > 0 else np.nan,
            d=d)
        fresh_row = len(history) < it
        if fresh_row:
            history.append(record)

        # snapshot the evaluated design (pre-update) as the checkpoint unit
        state = DesignState(
            iteration=it,
            phis=[LevelSetField(phi=f.phi.copy(), mesh=ws.cell_mesh,
                                cell_index=f.cell_index, d=f.d) for f in phis],
            tensors=tensors, j1=j1, j2=j2, j=j,
            j1_init=j1_init, j2_init=j2_init,
            history=history, counters=counters)

        stop = it >= sc.max_iter
        if sc.early_stop and not stop and it > sc.last_d_switch():
            if _trailing_flat_count(history) >= 10:
                log.info("early stop at iteration %d (flat objective)", it)
                stop = True

        if not stop:
            loads = {}
            if need_j1:
                loads["j1"] = macro_solver.adjoint_load(
                    ws.macro_mesh, "j1", temp, ws.t_steel)
                counters["adjoint_solves_j1"] += 1
            if need_j2:
                loads["j2"] = macro_solver.adjoint_load(ws.macro_mesh, "j2", temp)
                counters["adjoint_solves_j2"] += 1
            adjoints = {k: fem.ScalarField(state_fact.solve(v, homogeneous=True),
                                           ws.macro_mesh, "adjoint")
                        for k, v in loads.items()}

            def reaction_task(args):
                l, f, (mat, _tensor, w1, w2) = args
                s1 = sensitivity.tensor_sensitivity(
                    ws.macro_mesh, temp, adjoints["j1"], l) if need_j1 else None
                s2 = sensitivity.tensor_sensitivity(
                    ws.macro_mesh, temp, adjoints["j2"], l) if need_j2 else None
                ins_a, ins_b = sensitivity.topological_tensor_fields(
                    ws.cell_mesh, mat, w1, w2)
                jprime, _, _ = sensitivity.combined_sensitivity(
                    ws.cell_mesh, s1, s2, ins_a, ins_b, f.chi_nodes(d), w_eff)
                return jprime

            jprimes = _map_cells(
                reaction_task,
                list(zip(range(SECTOR_FIRST, SECTOR_LAST + 1), phis, cell_results)),
                threads)
            # stability limiter: cap the largest nodal reaction move so the
            # normalized sensitivity cannot flip nodes across the clamp range
            peak = max(float(np.abs(jp).max()) for jp in jprimes)
            dt_eff = sc.dt
            if peak > 0:
                dt_eff = min(sc.dt, sc.move_limit / (sc.k_phi * peak))
            new_phis = _map_cells(
                lambda pair: ws.updater.step(pair[0].phi, pair[1], dt_eff),
                list(zip(phis, jprimes)), threads)
            for f, phi in zip(phis, new_phis):
                f.phi = phi

        record.wall_ms = 1e3 * (time.perf_counter() - t0)
        if csv_path is not None and fresh_row:
            with csv_path.open("a", newline="") as fh:
                csv.writer(fh).writerow(_csv_row(record))
        if out_dir is not None and (it % checkpoint_every == 0 or stop):
            checkpoint(state, out_dir / "checkpoints" / f"iter_{it:04d}")
        if stop:
            break

    if out_dir is not None:
        checkpoint(state, out_dir / "final")
    return state


def _csv_row(r: IterationRecord) -> list:
    return [r.iteration, f"{r.j1:.17g}", f"{r.j2:.17g}", f"{r.j:.17g}",
            f"{r.j1_ratio:.17g}", f"{r.j2_ratio:.17g}", r.d, f"{r.wall_ms:.1f}"]


def _trailing_flat_count(history: list[IterationRecord]) -> int:
    count = 0
    for cur, prev in zip(reversed(history), reversed(history[:-1])):
        if abs(cur.j - prev.j) <= 1e-6 * max(abs(cur.j), 1e-300):
            count += 1
        else:
            break
    return count


def checkpoint(state: DesignState, path) -> None:
    """Write the state as per-cell phi CSVs plus a JSON summary."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for f in state.phis:
        levelset.write_phi_csv(f, path / f"cell_{f.cell_index}.csv")
    payload = {
        "iteration": state.iteration,
        "j1": state.j1, "j2": state.j2, "j": state.j,
        "j1_init": state.j1_init, "j2_init": state.j2_init,
        "counters": state.counters,
        "d": [f.d for f in state.phis],
        "tensors": [asdict(t) for t in state.tensors],
        "history": [asdict(r) for r in state.history],
    }
    with (path / "state.json").open("w") as fh:
        json.dump(payload, fh, indent=1)


def resume(path) -> DesignState:
    """Reload a checkpoint; the cell mesh is rebuilt from the node count."""
    path = Path(path)
    state_file = path / "state.json"
    if not state_file.exists():
        raise FileNotFoundError(f"no checkpoint at {path}")
    with state_file.open() as fh:
        payload = json.load(fh)

    coords, phi0 = levelset.read_phi_csv(path / f"cell_{SECTOR_FIRST}.csv")
    resolution = int(round(np.sqrt(len(phi0)))) - 1
    mesh = build_cell_mesh(UnitCellGeometry(resolution))
    if not np.allclose(mesh.nodes, coords, atol=1e-9):
        raise ValueError("checkpoint coordinates do not match a structured cell mesh")

    phis = []
    for l, d in zip(range(SECTOR_FIRST, SECTOR_LAST + 1), payload["d"]):
        _, phi = levelset.read_phi_csv(path / f"cell_{l}.csv")
        phis.append(LevelSetField(phi=phi, mesh=mesh, cell_index=l, d=d))

    tensors = [EffectiveTensor(**t) for t in payload["tensors"]]
    history = [IterationRecord(**r) for r in payload["history"]]
    return DesignState(
        iteration=payload["iteration"], phis=phis, tensors=tensors,
        j1=payload["j1"], j2=payload["j2"], j=payload["j"],
        j1_init=payload["j1_init"], j2_init=payload["j2_init"],
        history=history, counters=payload["counters"])
