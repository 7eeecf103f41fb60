from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from database.models import CalibrationResult, Stage
from physics.params import PhysicalParams
from physics.radiation import RadiationInputs, flwds_forward, netsw_forward
from utils.errors import CalibrationError, ValidationError
from utils.logger import logger

DEFAULT_STAGES = (Stage.CLEAR, Stage.CLOUDY, Stage.JOINT)


class RadiationObjective:
    """MSE(NETSW) + MSE(FLWDS) on standardised targets.

    Target statistics are taken from the calibration batch itself, which is
    the training split of the group being fitted.
    """

    def __init__(self, inputs: RadiationInputs, targets):
        targets = np.asarray(targets, dtype=float)
        if targets.ndim != 2 or targets.shape != (len(inputs), 2):
            raise ValidationError("Targets must be an (n, 2) matrix of NETSW and FLWDS")
        if len(inputs) == 0:
            raise ValidationError("Calibration batch is empty")
        self.inputs = inputs
        self.mean = targets.mean(axis=0)
        self.std = targets.std(axis=0)
        if np.any(self.std <= 0):
            raise ValidationError("Calibration targets must not be constant")
        self.standardised = (targets - self.mean) / self.std

    def __call__(self, params) -> float:
        netsw = (netsw_forward(self.inputs, params) - self.mean[0]) / self.std[0]
        flwds = (flwds_forward(self.inputs, params) - self.mean[1]) / self.std[1]
        loss = (np.mean((netsw - self.standardised[:, 0]) ** 2)
                + np.mean((flwds - self.standardised[:, 1]) ** 2))
        return float(loss)


def _stage_function(objective, base: dict, names: Sequence[str]):
    def evaluate(x):
        params = dict(base)
        params.update(zip(names, x))
        value = objective(params)
        if not np.isfinite(value):
            raise CalibrationError(
                f"Non-finite calibration objective at {dict(zip(names, np.round(x, 12)))}",
                parameters=dict(zip(names, map(float, x))),
            )
        return value
    return evaluate


def calibrate(inputs: RadiationInputs, targets, p0: PhysicalParams,
              stages: Optional[Sequence[Stage]] = None, tol: float = 1e-10,
              max_iter: int = 2000) -> CalibrationResult:
    """Staged bounded quasi-Newton fit of the active parameters.

    Each stage frees only its own parameters (the joint stage frees every
    active one). A stage result is accepted only when it does not increase
    the objective.
    """
    stages = list(DEFAULT_STAGES if stages is None else stages)
    objective = RadiationObjective(inputs, targets)
    current = p0
    base = current.subset(current.names(active_only=False))
    initial = _stage_function(objective, base, [])(np.empty(0))
    best = initial
    improved = False
    trace = {}
    iterations = {}

    for stage in stages:
        names = current.stage_names(stage)
        key = stage.value if stage.value not in trace else f"{stage.value}_{len(trace)}"
        if not names:
            trace[key], iterations[key] = [best], 0
            continue

        evaluate = _stage_function(objective, base, names)
        bounds = current.bounds(names)
        x0 = current.vector(names)
        stage_trace = [best]

        def record(xk):
            stage_trace.append(evaluate(np.asarray(xk)))

        result = minimize(
            evaluate, x0, method='L-BFGS-B', jac='3-point', bounds=bounds, callback=record,
            options={'maxiter': max_iter, 'ftol': tol, 'maxfun': max_iter * (2 * len(names) + 2)},
        )
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        x = np.clip(result.x, lo, hi)
        value = evaluate(x)

        if value <= best:
            if value < best:
                improved = True
            current = current.with_values(names, x)
            base = current.subset(current.names(active_only=False))
            best = value
            iterations[key] = int(result.nit)
        else:
            iterations[key] = 0
            logger.warning(f"Calibration stage {stage.value} did not improve the objective; rejected")
        stage_trace.append(best)
        trace[key] = stage_trace
        logger.info(f"Calibration stage {stage.value}: {len(names)} params, objective {best:.6g}, "
                    f"{iterations[key]} iterations")

    converged = improved or initial <= tol
    return CalibrationResult(
        parameters=current.specs(),
        initial_objective=initial,
        final_objective=best,
        stage_trace=trace,
        iterations=iterations,
        converged=converged,
    )


def fitted_params(result: CalibrationResult) -> PhysicalParams:
    return PhysicalParams(result.parameters)
