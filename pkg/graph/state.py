from typing import Any, Dict, List, Optional
from typing_extensions import TypedDict

from data.dataset import ClimateDataset
from data.normalizer import Normalizer
from data.partition import SplitSpec
from database.models import ExperimentPlan, RobustnessRecord
from database.record_store import RecordStore


class MatrixState(TypedDict):
    """State object for the robustness-matrix graph"""

    # Inputs
    plan: ExperimentPlan
    dataset: ClimateDataset
    store: RecordStore

    # Group preparation
    splits: Dict[str, SplitSpec]
    normalizers: Dict[str, Normalizer]
    region: Optional[str]

    # Training cells keyed by (train group, model id, seed)
    cell_results: Dict[str, Dict[str, Any]]
    trained: int
    cached: int

    # Evaluation
    energy_distances: Dict[str, float]
    records: List[RobustnessRecord]
