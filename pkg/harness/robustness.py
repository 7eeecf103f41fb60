"""Relative errors, seed aggregation and shift regressions over matrix records."""
from collections import defaultdict
from typing import Dict, Iterable, List, Optional

import numpy as np

from database.models import CellStatus, ErrorLoss, RobustnessRecord, ShiftRegression
from shift_analysis.stat_tests import ols_fit, pearson, spearman
from utils.errors import InsufficientRecordsError, ValidationError
from utils.logger import logger

GROUPINGS = ("region", "variable_group", "train_group", "model")
MIN_POINTS = 3


def relative_error(loss_ood: float, loss_id: float) -> float:
    """loss_ood / loss_id; ratios below one are kept as they are"""
    if not loss_id > 0:
        raise ValidationError(f"In-distribution loss must be positive, got {loss_id}")
    return float(loss_ood) / float(loss_id)


def error_loss(kind: ErrorLoss, pred, target) -> float:
    """MAE or RMSE over every element, in the units of ``pred``"""
    residual = np.asarray(pred, dtype=float) - np.asarray(target, dtype=float)
    if ErrorLoss(kind) == ErrorLoss.MAE:
        return float(np.mean(np.abs(residual)))
    return float(np.sqrt(np.mean(residual ** 2)))


def _entries(records: Iterable[RobustnessRecord], grouping: str, include_diagonal: bool):
    """(category, record, e_r) triples usable for a grouping"""
    if grouping not in GROUPINGS:
        raise ValidationError(f"Unknown grouping '{grouping}', expected one of {', '.join(GROUPINGS)}")
    for r in records:
        if r.status != CellStatus.OK or r.e_r is None or r.energy_distance is None:
            continue
        if r.train_group == r.test_group and not include_diagonal:
            continue
        if grouping == "variable_group":
            for name, value in sorted(r.variable_group_e_r.items()):
                yield name, r, value
        elif grouping == "region":
            yield r.region or "all", r, r.e_r
        elif grouping == "train_group":
            yield r.train_group, r, r.e_r
        else:
            yield r.model_id, r, r.e_r


def aggregate_points(records: Iterable[RobustnessRecord], grouping: str,
                     include_diagonal: bool = False) -> Dict[str, List[dict]]:
    """Mean, min and max of log e_r over seeds per (train, test, model) cell"""
    cells = defaultdict(list)
    for category, r, value in _entries(records, grouping, include_diagonal):
        if not value > 0:
            logger.warning(f"Skipping non-positive e_r {value} for {r.train_group}->{r.test_group}")
            continue
        key = (category, r.region or "all", r.train_group, r.test_group, r.model_id)
        cells[key].append((np.log(value), r.energy_distance))

    points = defaultdict(list)
    for (category, region, train, test, model), values in sorted(cells.items()):
        logs = np.array([v[0] for v in values])
        points[category].append({
            "category": category,
            "region": region,
            "train_group": train,
            "test_group": test,
            "model_id": model,
            "x": float(np.mean([v[1] for v in values])),
            "y": float(np.mean(logs)),
            "y_min": float(np.min(logs)),
            "y_max": float(np.max(logs)),
            "n_seeds": len(values),
        })
    return dict(points)


def _regress(grouping: str, category: str, points: List[dict]) -> ShiftRegression:
    x = np.array([p["x"] for p in points])
    y = np.array([p["y"] for p in points])
    slope, intercept = ols_fit(x, y)
    if np.ptp(y) == 0:
        logger.warning(f"Constant mean log e_r in {grouping}={category}; correlations set to 0")
        r, rp, rho, sp = 0.0, 1.0, 0.0, 1.0
    else:
        r, rp = pearson(x, y)
        rho, sp = spearman(x, y)
    return ShiftRegression(grouping=grouping, category=category, slope=slope, intercept=intercept,
                           pearson_r=r, pearson_p=rp, spearman_rho=rho, spearman_p=sp, n=len(points))


def aggregate_and_regress(records: Iterable[RobustnessRecord], grouping: str,
                          include_diagonal: bool = False) -> List[ShiftRegression]:
    """OLS, Pearson and Spearman of mean log e_r against energy distance per category"""
    points = aggregate_points(records, grouping, include_diagonal)
    if not points:
        raise InsufficientRecordsError(f"No usable records for grouping '{grouping}'")
    regressions = []
    for category, rows in sorted(points.items()):
        if len(rows) < MIN_POINTS:
            raise InsufficientRecordsError(
                f"Grouping {grouping}={category} has {len(rows)} cells, need {MIN_POINTS}"
            )
        regressions.append(_regress(grouping, category, rows))
    return regressions


def compare_slopes(regressions: List[ShiftRegression]) -> Dict[str, object]:
    """Slopes per category, ordered from the least to the most shift-sensitive"""
    ordered = sorted(regressions, key=lambda r: r.slope)
    return {
        "slopes": {r.category: r.slope for r in ordered},
        "most_robust": ordered[0].category if ordered else None,
        "least_robust": ordered[-1].category if ordered else None,
    }


def failure_summary(records: Iterable[RobustnessRecord]) -> Dict[str, int]:
    records = list(records)
    failed = [r for r in records if r.status == CellStatus.FAILED]
    return {"total": len(records), "failed": len(failed)}


def build_report(records: List[RobustnessRecord], groupings=GROUPINGS,
                 include_diagonal: bool = False, extra: Optional[dict] = None):
    """Regressions for every grouping that has enough records, plus plot rows"""
    report = {"failures": failure_summary(records), "regressions": {}, "skipped": {}}
    plotdata = {}
    for grouping in groupings:
        try:
            regressions = aggregate_and_regress(records, grouping, include_diagonal)
        except InsufficientRecordsError as e:
            report["skipped"][grouping] = str(e)
            continue
        report["regressions"][grouping] = [r.model_dump(mode='json') for r in regressions]
        points = aggregate_points(records, grouping, include_diagonal)
        plotdata[grouping] = [row for rows in points.values() for row in rows]
        if grouping == "model":
            report["slope_comparison"] = compare_slopes(regressions)
    if extra:
        report.update(extra)
    return report, plotdata
