from typing import Any, Dict

from data.normalizer import fit_normalizer
from data.partition import partition, split_group
from graph.state import MatrixState
from utils.errors import PartitionError
from utils.logger import logger


class GroupPreparationNode:
    """Node 1: partitions the dataset, splits every group and fits train-only normalisers"""

    def execute(self, state: MatrixState) -> Dict[str, Any]:
        """Execute group preparation"""
        plan = state["plan"]
        ds = state["dataset"]
        groups = partition(ds, plan.partition)

        empty = [key for key, idx in groups.items() if idx.size == 0]
        if empty:
            raise PartitionError(f"Groups without samples: {', '.join(empty)}")

        splits, normalizers = {}, {}
        for key, idx in groups.items():
            split = split_group(ds, idx, plan.split.val_fraction, plan.split.test_fraction)
            if split.test.size == 0:
                raise PartitionError(f"Group {key} has no test samples; raise split.test_fraction")
            splits[key] = split
            normalizers[key] = fit_normalizer(ds, split.train, plan.log_columns, plan.log_epsilon)
            logger.log_cell(key, "prepared",
                            f"train {split.train.size} / val {split.val.size} / test {split.test.size}")

        return {"splits": splits, "normalizers": normalizers, "region": plan.partition.region}
