from typing import Any, Dict, List, Optional

from database.models import CellStatus, RobustnessRecord
from graph.nodes.cell_training_node import cell_name
from graph.state import MatrixState
from harness.robustness import relative_error
from shift_analysis.divergence import energy_distance
from utils.logger import logger


def distance_key(train_group: str, test_group: str) -> str:
    return f"{train_group}->{test_group}"


def clamp_distance(value: float, train_group: str, test_group: str) -> float:
    """Subsampled ED can dip below zero for near-identical groups; records keep ED >= 0"""
    if value < 0:
        logger.warning(f"Negative ED estimate {value:.3g} for {distance_key(train_group, test_group)} clamped to 0")
        return 0.0
    return float(value)


class RecordEvaluationNode:
    """Node 3: energy distances between groups and relative errors for every cell"""

    def _energy_distances(self, state: MatrixState) -> Dict[str, float]:
        """ED between test splits, both normalised with the training group's statistics"""
        plan = state["plan"]
        ds = state["dataset"]
        splits = state["splits"]
        distances = {}
        for i in splits:
            normalizer = state["normalizers"][i]
            for j in splits:
                if i == j:
                    distances[distance_key(i, j)] = 0.0
                    continue
                X = normalizer.transform_features(ds.features[splits[i].test])
                Y = normalizer.transform_features(ds.features[splits[j].test])
                estimate = energy_distance(X, Y, plan.divergence.pair_budget, plan.divergence.seed)
                distances[distance_key(i, j)] = clamp_distance(estimate.value, i, j)
                logger.debug(f"ED {i} -> {j}: {estimate.value:.6g}")
        return distances

    def _failure(self, state: MatrixState, cell: Dict[str, Any], train_group: str) -> Optional[str]:
        if cell.get("status") != CellStatus.OK.value:
            return cell.get("failure", "cell failed")
        expected = state["normalizers"][train_group].statistics_hash()
        if cell.get("normalizer_hash") != expected:
            return "normalizer statistics differ from the cached cell"
        return None

    def _record(self, state: MatrixState, train_group: str, test_group: str,
                model_id: str, seed: int, distance: float) -> RobustnessRecord:
        results = state["cell_results"]
        ood_cell = results[cell_name(train_group, model_id, seed)]
        id_cell = results[cell_name(test_group, model_id, seed)]
        base = dict(train_group=train_group, test_group=test_group, model_id=model_id, seed=seed,
                    region=state.get("region"), energy_distance=distance,
                    normalizer_hash=ood_cell.get("normalizer_hash"))

        failure = self._failure(state, ood_cell, train_group) or self._failure(state, id_cell, test_group)
        if failure:
            return RobustnessRecord(**base, status=CellStatus.FAILED, failure=failure)

        ood = ood_cell["losses"][test_group]
        in_dist = id_cell["losses"][test_group]
        try:
            e_r = relative_error(ood["overall"], in_dist["overall"])
            groups = {name: relative_error(ood["groups"][name], in_dist["groups"][name])
                      for name in ood["groups"]}
        except ValueError as e:
            return RobustnessRecord(**base, status=CellStatus.FAILED, failure=str(e))

        return RobustnessRecord(**base, loss_ood=ood["overall"], loss_id=in_dist["overall"],
                                e_r=e_r, variable_group_e_r=groups)

    def execute(self, state: MatrixState) -> Dict[str, Any]:
        """Execute record evaluation"""
        plan = state["plan"]
        distances = self._energy_distances(state)
        records: List[RobustnessRecord] = []
        for spec in plan.models:
            for seed in plan.seeds:
                for i in state["splits"]:
                    for j in state["splits"]:
                        records.append(self._record(state, i, j, spec.id, seed,
                                                    distances[distance_key(i, j)]))

        failed = sum(1 for r in records if r.status == CellStatus.FAILED)
        if failed:
            logger.warning(f"{failed} of {len(records)} matrix records failed")
        return {"energy_distances": distances, "records": records}
