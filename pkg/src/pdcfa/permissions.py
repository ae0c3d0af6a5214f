"""Least-permissions analysis: requested vs. reachable permission use."""

from __future__ import annotations

from dataclasses import dataclass

from .reach import AnalysisResult


@dataclass(frozen=True)
class PermissionReport:
    requested: frozenset
    reached: frozenset
    over_privileged: frozenset  # requested but never reached
    missing: frozenset  # reached but never requested
    evidence: dict  # permission -> tuple of (ControlState, line)
    lower_bound: bool = False  # analysis hit a budget; reached is partial


def _result_items(results):
    if isinstance(results, AnalysisResult):
        return [results]
    return list(results)


def collect_permissions(results, summaries=None) -> list:
    """Permissions attached to every summary application reached during
    analysis, paired with the applying control state."""
    seen = set()
    out = []
    for res in _result_items(results):
        for app in res.applications:
            for perm in app.permissions:
                key = (perm, app.state)
                if key in seen:
                    continue
                seen.add(key)
                out.append((perm, app.state, app.line))
    out.sort(key=lambda p: (p[0], p[1].sort_key()))
    return out


def build_permission_report(requested, collected,
                            lower_bound: bool = False) -> PermissionReport:
    requested = frozenset(requested)
    evidence: dict = {}
    for perm, state, line in collected:
        evidence.setdefault(perm, []).append((state, line))
    reached = frozenset(evidence)
    return PermissionReport(
        requested=requested,
        reached=reached,
        over_privileged=requested - reached,
        missing=reached - requested,
        evidence={p: tuple(sites) for p, sites in sorted(evidence.items())},
        lower_bound=lower_bound,
    )
