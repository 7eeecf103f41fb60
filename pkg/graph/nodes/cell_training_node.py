from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Tuple

from database.models import ModelSpec
from database.record_store import content_hash
from graph.state import MatrixState
from harness.model_runner import CalibrationCache, evaluate_losses, fit_predictor
from utils.errors import ShiftLabError
from utils.logger import logger


def cell_name(train_group: str, model_id: str, seed: int) -> str:
    return f"{train_group}|{model_id}|{seed}"


class CellTrainingNode:
    """Node 2: trains every (group, model, seed) cell and scores it on all test splits.

    Cells found in the cache are not retrained.
    """

    def _config_hash(self, state: MatrixState, train_group: str, spec: ModelSpec) -> str:
        plan = state["plan"]
        return content_hash({
            "train_group": train_group,
            "model": spec.model_dump(mode='json'),
            "partition": plan.partition.model_dump(mode='json'),
            "split": plan.split.model_dump(mode='json'),
            "error_loss": plan.error_loss.value,
            "log_columns": plan.log_columns,
            "log_epsilon": plan.log_epsilon,
            "variable_groups": plan.variable_groups,
        })

    def _run_cell(self, state: MatrixState, data_hash: str, calibrations: CalibrationCache,
                  train_group: str, spec: ModelSpec, seed: int) -> Tuple[Dict[str, Any], bool]:
        """(payload, trained) for one cell"""
        store = state["store"]
        name = cell_name(train_group, spec.id, seed)
        key = store.cell_key(data_hash, self._config_hash(state, train_group, spec), seed)
        cached = store.load_cell(key)
        if cached is not None and cached.get("status") == "ok":
            logger.log_cell(name, "cache hit")
            return cached, False

        ds = state["dataset"]
        plan = state["plan"]
        normalizer = state["normalizers"][train_group]
        test_sets = {group: split.test for group, split in state["splits"].items()}
        try:
            predictor = fit_predictor(spec, ds, state["splits"][train_group], normalizer, seed, name,
                                      calibrations)
            losses = evaluate_losses(predictor, ds, test_sets, plan.error_loss, plan.variable_groups)
        except (ShiftLabError, ArithmeticError, ValueError) as e:
            logger.error("Cell failed", name, error=e)
            return {"status": "failed", "failure": f"{type(e).__name__}: {e}"}, True

        blob, suffix = predictor.artifact()
        store.save_model_artifact(key, blob, suffix)
        payload = {"status": "ok", "losses": losses, "normalizer_hash": normalizer.statistics_hash()}
        store.save_cell(key, payload)
        logger.log_cell(name, "trained")
        return payload, True

    def execute(self, state: MatrixState) -> Dict[str, Any]:
        """Execute all training cells, concurrently up to the plan's worker count"""
        plan = state["plan"]
        data_hash = state["dataset"].content_hash()
        calibrations = CalibrationCache()
        tasks: List[Tuple[str, ModelSpec, int]] = [
            (group, spec, seed) for group in state["splits"] for spec in plan.models for seed in plan.seeds
        ]

        def run(task):
            return self._run_cell(state, data_hash, calibrations, *task)

        if plan.workers > 1:
            with ThreadPoolExecutor(max_workers=plan.workers) as executor:
                outcomes = list(executor.map(run, tasks))
        else:
            outcomes = [run(task) for task in tasks]

        results = {cell_name(g, spec.id, seed): payload
                   for (g, spec, seed), (payload, _) in zip(tasks, outcomes)}
        trained = sum(1 for _, was_trained in outcomes if was_trained)
        logger.info(f"Matrix cells: {len(tasks)} total, {trained} trained, {len(tasks) - trained} cached")
        return {"cell_results": results, "trained": trained, "cached": len(tasks) - trained}
