from typing import Any, Dict, List

from langgraph.graph import StateGraph, END

from data.dataset import ClimateDataset
from database.models import ExperimentPlan, RobustnessRecord
from database.record_store import RecordStore
from graph.state import MatrixState
from graph.nodes.group_preparation_node import GroupPreparationNode
from graph.nodes.cell_training_node import CellTrainingNode
from graph.nodes.record_evaluation_node import RecordEvaluationNode
from utils.logger import logger


class ExperimentGraph:
    """Robustness-matrix workflow using LangGraph"""

    def __init__(self):
        self.group_preparation_node = GroupPreparationNode()
        self.cell_training_node = CellTrainingNode()
        self.record_evaluation_node = RecordEvaluationNode()
        self.graph = self._build_graph()

    def _build_graph(self):
        """Build the matrix graph"""

        # Create the state graph
        workflow = StateGraph(MatrixState)

        # Add nodes
        workflow.add_node("prepare_groups", self._group_preparation_wrapper)
        workflow.add_node("train_cells", self._cell_training_wrapper)
        workflow.add_node("evaluate_records", self._record_evaluation_wrapper)

        # Add edges
        workflow.add_edge("prepare_groups", "train_cells")
        workflow.add_edge("train_cells", "evaluate_records")
        workflow.add_edge("evaluate_records", END)

        # Set entry point
        workflow.set_entry_point("prepare_groups")

        # Compile the graph
        return workflow.compile()

    def _group_preparation_wrapper(self, state: MatrixState) -> Dict[str, Any]:
        """Wrapper for group preparation node"""
        try:
            result = self.group_preparation_node.execute(state)
            logger.debug(f"Prepared {len(result['splits'])} groups")
            return result
        except Exception as e:
            logger.error("Error in group preparation node", error=e)
            raise

    def _cell_training_wrapper(self, state: MatrixState) -> Dict[str, Any]:
        """Wrapper for cell training node"""
        try:
            return self.cell_training_node.execute(state)
        except Exception as e:
            logger.error("Error in cell training node", error=e)
            raise

    def _record_evaluation_wrapper(self, state: MatrixState) -> Dict[str, Any]:
        """Wrapper for record evaluation node"""
        try:
            result = self.record_evaluation_node.execute(state)
            logger.debug(f"Evaluated {len(result['records'])} records")
            return result
        except Exception as e:
            logger.error("Error in record evaluation node", error=e)
            raise

    def run(self, plan: ExperimentPlan, dataset: ClimateDataset, store: RecordStore) -> MatrixState:
        """Run the matrix and return the final state"""
        initial_state = MatrixState(
            plan=plan,
            dataset=dataset,
            store=store,
            splits={},
            normalizers={},
            region=plan.partition.region,
            cell_results={},
            trained=0,
            cached=0,
            energy_distances={},
            records=[],
        )
        logger.info(f"Running robustness matrix: {len(plan.models)} models x {len(plan.seeds)} seeds")
        return self.graph.invoke(initial_state)


def run_matrix(plan: ExperimentPlan, dataset: ClimateDataset, store: RecordStore) -> List[RobustnessRecord]:
    """Run the matrix and write records.csv into the store's output directory"""
    final_state = ExperimentGraph().run(plan, dataset, store)
    records = final_state["records"]
    store.write_records(records)
    logger.info(f"Matrix finished: {final_state['trained']} cells trained, {final_state['cached']} from cache")
    return records
