"""Red/blue bus illustration: one residual layer restoring a nesting pattern.

The reference numbers are kept as the strings they are printed as, so each
cell is checked to the precision it is printed at (1e-3, or half a unit
in the last printed digit when that is coarser).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import choice_probabilities, residual_forward

TOLERANCE = 1e-3

COMPETING = np.array([[0.0, -1.0, -1.0], [-1.0, 0.0, 1.0], [-1.0, 1.0, 0.0]])
NON_COMPETING = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class Scenario:
    name: str
    alternatives: tuple[str, ...]
    theta: np.ndarray | None
    expected_g: tuple[str, ...] | None
    expected_exp: tuple[str, ...]
    expected_p: tuple[str, ...]


SCENARIOS = (
    Scenario("Scenario 1", ("car", "bus"), None, None, ("2.718", "2.718"), ("0.5", "0.5")),
    Scenario("Scenario 2", ("car", "red bus", "blue bus"), None, None,
             ("2.718", "2.718", "2.718"), ("0.33", "0.33", "0.33")),
    Scenario("Scenario 3 (competing car/bus)", ("car", "red bus", "blue bus"), COMPETING,
             ("-0.127", "-0.693", "-0.693"), ("2.394", "1.359", "1.359"), ("0.468", "0.265", "0.265")),
    Scenario("Scenario 3 (non-competing car/bus)", ("car", "red bus", "blue bus"), NON_COMPETING,
             ("-0.693", "-1.313", "-1.313"), ("1.359", "0.731", "0.731"), ("0.482", "0.259", "0.259")),
)


def cell_tolerance(printed: str) -> float:
    decimals = len(printed.split(".")[1]) if "." in printed else 0
    return max(TOLERANCE, 0.5 * 10.0 ** -decimals)


@dataclass(frozen=True)
class ScenarioResult:
    scenario: Scenario
    V: np.ndarray
    g: np.ndarray | None
    exp_vg: np.ndarray
    probs: np.ndarray
    mismatches: tuple[str, ...]


def run_scenario(sc: Scenario) -> ScenarioResult:
    V = np.ones(len(sc.alternatives))
    if sc.theta is None:
        g = None
        probs = choice_probabilities(V, np.zeros_like(V))
        u = V
    else:
        trace = residual_forward([sc.theta], V)
        g = trace.g
        probs = trace.probs
        u = V + g
    exp_vg = np.exp(u)
    bad = []
    checks = [("exp(V+g)", exp_vg, sc.expected_exp), ("P", probs, sc.expected_p)]
    if g is not None:
        checks.insert(0, ("g", g, sc.expected_g))
    for label, got, want in checks:
        for alt, x, w in zip(sc.alternatives, got, want):
            if abs(x - float(w)) > cell_tolerance(w):
                bad.append(f"{sc.name} {alt} {label}: got {x:.6f}, table {w}")
    return ScenarioResult(sc, V, g, exp_vg, probs, tuple(bad))


def run_all() -> list[ScenarioResult]:
    return [run_scenario(sc) for sc in SCENARIOS]


def format_table(results: list[ScenarioResult]) -> str:
    lines = [f"{'choice':<10}{'V_i':>6}{'g_i':>10}{'exp(V_i+g_i)':>15}{'P(i)':>9}"]
    for r in results:
        lines.append(r.scenario.name)
        for j, alt in enumerate(r.scenario.alternatives):
            g = "-" if r.g is None else f"{r.g[j]:.3f}"
            lines.append(f"{alt:<10}{r.V[j]:>6.0f}{g:>10}{r.exp_vg[j]:>15.3f}{r.probs[j]:>9.3f}")
    return "\n".join(lines)
