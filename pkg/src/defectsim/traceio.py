"""Trace and audit serialization: canonical JSON plus a CSV projection.

JSON is the authoritative format (floats round-trip exactly through Python's
shortest-repr encoding); the CSV carries the same numbers printed with 17
significant digits so a double survives the trip.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .analysis import AuditCheck, AuditReport
from .core import (
    CaseLabel,
    Outcome,
    OutcomeKind,
    Point,
    RoundRecord,
    Trace,
)

CSV_FLOAT_FORMAT = "%.17g"


def _point_list(point: Point | None):
    return None if point is None else [float(x) for x in point]


def trace_to_dict(trace: Trace) -> dict:
    return {
        "problem_id": trace.problem_id,
        "algorithm_id": trace.algorithm_id,
        "config_snapshot": dict(trace.config_snapshot),
        "rounds": [
            {
                "round": record.round,
                "iterate": _point_list(record.iterate),
                "per_agent_loss": list(record.per_agent_loss),
                "predicted_defecting": sorted(record.predicted_defecting),
                "predicted_nondefecting": sorted(record.predicted_nondefecting),
                "case": record.case.value,
                "update_direction": _point_list(record.update_direction),
                "step": record.step,
                "defections": sorted(record.defections),
            }
            for record in trace.rounds
        ],
        "outcome": {
            "kind": trace.outcome.kind.value,
            "point": _point_list(trace.outcome.point),
            "reason": trace.outcome.reason,
            "all_defected": trace.outcome.all_defected,
        },
    }


def trace_from_dict(data: Mapping) -> Trace:
    rounds = tuple(
        RoundRecord(
            round=int(item["round"]),
            iterate=np.array(item["iterate"], dtype=np.float64),
            per_agent_loss=tuple(float(x) for x in item["per_agent_loss"]),
            predicted_defecting=frozenset(item["predicted_defecting"]),
            predicted_nondefecting=frozenset(item["predicted_nondefecting"]),
            case=CaseLabel(item["case"]),
            update_direction=(None if item["update_direction"] is None
                              else np.array(item["update_direction"], dtype=np.float64)),
            step=float(item["step"]),
            defections=frozenset(item["defections"]),
        )
        for item in data["rounds"]
    )
    outcome_data = data["outcome"]
    outcome = Outcome(
        kind=OutcomeKind(outcome_data["kind"]),
        point=np.array(outcome_data["point"], dtype=np.float64),
        reason=outcome_data.get("reason"),
        all_defected=bool(outcome_data.get("all_defected", False)),
    )
    return Trace(
        problem_id=data["problem_id"],
        algorithm_id=data["algorithm_id"],
        config_snapshot=dict(data["config_snapshot"]),
        rounds=rounds,
        outcome=outcome,
    )


def trace_json(trace: Trace) -> str:
    """Canonical JSON text: fixed separators and sorted keys, so identical
    runs serialize to identical bytes."""
    return json.dumps(trace_to_dict(trace), sort_keys=True,
                      separators=(",", ":"), allow_nan=False)


def write_trace_json(trace: Trace, path) -> None:
    Path(path).write_text(trace_json(trace) + "\n", encoding="utf-8")


def load_trace_json(path) -> Trace:
    return trace_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def csv_header(num_agents: int) -> str:
    losses = ",".join(f"loss_agent_{m}" for m in range(num_agents))
    return f"round,case,F_avg,{losses},grad_norm,defections"


def trace_csv(trace: Trace) -> str:
    """CSV projection of a trace with 17-significant-digit numbers."""
    if trace.rounds:
        num_agents = len(trace.rounds[0].per_agent_loss)
    else:
        num_agents = len(trace.config_snapshot.get("epsilons", []))
    lines = [csv_header(num_agents)]
    for record in trace.rounds:
        f_avg = CSV_FLOAT_FORMAT % record.average_loss
        losses = ",".join(CSV_FLOAT_FORMAT % x for x in record.per_agent_loss)
        if record.update_direction is None:
            grad_norm = CSV_FLOAT_FORMAT % 0.0
        else:
            grad_norm = CSV_FLOAT_FORMAT % float(np.linalg.norm(record.update_direction))
        defections = ";".join(str(m) for m in sorted(record.defections))
        lines.append(f"{record.round},{record.case.value},{f_avg},{losses},"
                     f"{grad_norm},{defections}")
    return "\n".join(lines) + "\n"


def write_trace_csv(trace: Trace, path) -> None:
    Path(path).write_text(trace_csv(trace), encoding="utf-8")


def audit_report_to_dict(report: AuditReport) -> dict:
    return {
        "checks": [
            {
                "name": check.name,
                "passed": check.passed,
                "worst_violation": check.worst_violation,
                "round": check.round,
                "applicable": check.applicable,
                "detail": check.detail,
            }
            for check in report.checks
        ],
        "all_passed": report.all_passed,
    }


def audit_report_from_dict(data: Mapping) -> AuditReport:
    checks = tuple(
        AuditCheck(
            name=item["name"],
            passed=bool(item["passed"]),
            worst_violation=float(item["worst_violation"]),
            round=item.get("round"),
            applicable=bool(item.get("applicable", True)),
            detail=item.get("detail", ""),
        )
        for item in data["checks"]
    )
    return AuditReport(checks)


def audit_json(report: AuditReport) -> str:
    return json.dumps(audit_report_to_dict(report), sort_keys=True,
                      separators=(",", ":"), allow_nan=False)


def write_audit_json(report: AuditReport, path) -> None:
    Path(path).write_text(audit_json(report) + "\n", encoding="utf-8")
